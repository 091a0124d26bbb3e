use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::core::ImageBuffer;
use crate::{Error, Result};

/// Write a binary `P6` PPM, quantizing each channel with
/// `round(255 * clamp(v, 0, 1))`.
pub fn write_ppm(path: &Path, image: &ImageBuffer) -> Result<()> {
    let mut bytes = Vec::with_capacity(32 + image.data.len());
    bytes.extend_from_slice(format!("P6\n{} {}\n255\n", image.width, image.height).as_bytes());
    for v in &image.data {
        bytes.push((255.0 * v.clamp(0.0, 1.0)).round() as u8);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a binary `P6` PPM with maxval 255 back into `[0, 1]` floats.
pub fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut reader = BufReader::new(file);
    let parse_err = |message: String| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message,
    };

    let magic = read_token(&mut reader).map_err(|e| parse_err(e))?;
    if magic != "P6" {
        return Err(parse_err(format!("expected P6 magic, got {:?}", magic)));
    }
    let width: usize = read_token(&mut reader)
        .and_then(|t| t.parse().map_err(|e| format!("bad width: {}", e)))
        .map_err(parse_err)?;
    let height: usize = read_token(&mut reader)
        .and_then(|t| t.parse().map_err(|e| format!("bad height: {}", e)))
        .map_err(parse_err)?;
    let maxval: usize = read_token(&mut reader)
        .and_then(|t| t.parse().map_err(|e| format!("bad maxval: {}", e)))
        .map_err(parse_err)?;
    if maxval != 255 {
        return Err(parse_err(format!("only maxval 255 supported, got {}", maxval)));
    }

    let mut raw = vec![0u8; 3 * width * height];
    reader
        .read_exact(&mut raw)
        .map_err(|e| Error::io(format!("reading pixels of {}", path.display()), e))?;
    let data = raw.iter().map(|b| *b as f64 / 255.0).collect();
    ImageBuffer::from_data(width, height, data)
}

/// Next whitespace-delimited token; `#` comments run to end of line. The
/// single whitespace byte after the maxval token is consumed as the token
/// terminator, which is exactly the PPM framing rule.
fn read_token<R: BufRead>(reader: &mut R) -> std::result::Result<String, String> {
    let mut token = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        match reader.read_exact(&mut byte) {
            Ok(()) => {}
            Err(_) if !token.is_empty() => return Ok(token),
            Err(e) => return Err(format!("unexpected end of header: {}", e)),
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c);
    }
}
