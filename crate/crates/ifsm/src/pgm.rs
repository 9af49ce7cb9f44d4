//! PGM image output and JSON report writing.

use std::path::Path;

use serde::Serialize;

use crate::chaos::ImageGrid;
use crate::error::{Error, Result};

/// Renders an image as ASCII PGM ("P2", maxval 255), pixels row-major with
/// the top row first. Sample lines are wrapped so no line exceeds 70
/// characters, as the format recommends.
pub fn pgm_string(image: &ImageGrid) -> Result<String> {
    if image.width == 0 || image.height == 0 || image.pixels.len() != image.width * image.height {
        return Err(Error::Invalid("image is empty or inconsistently sized".into()));
    }
    let mut out = String::with_capacity(image.pixels.len() * 4 + 32);
    out.push_str("P2\n");
    out.push_str(&format!("{} {}\n255\n", image.width, image.height));
    let mut line_len = 0usize;
    for (i, px) in image.pixels.iter().enumerate() {
        let token = px.to_string();
        if line_len > 0 && line_len + 1 + token.len() > 70 {
            out.push('\n');
            line_len = 0;
        } else if line_len > 0 {
            out.push(' ');
            line_len += 1;
        }
        out.push_str(&token);
        line_len += token.len();
        if i + 1 == image.pixels.len() {
            out.push('\n');
        }
    }
    Ok(out)
}

/// Writes an image as an ASCII PGM file.
pub fn write_pgm(image: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, pgm_string(image)?)?;
    Ok(())
}

/// Pretty-printed JSON for any report type.
pub fn report_string<T: Serialize>(report: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Writes a report as pretty-printed JSON.
pub fn write_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report_string(report)?)?;
    Ok(())
}
