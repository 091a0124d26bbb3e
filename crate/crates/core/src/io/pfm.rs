use std::io::Read;
use std::path::Path;

use crate::core::DepthMap;
use crate::{Error, Result};

/// Write a grayscale PFM (`Pf`), little endian, scale line `-1.0`.
///
/// PFM stores rows bottom-up; invalid pixels keep their zero value. The
/// `is_inverse` flag is not representable in the format and is supplied by
/// the caller on read.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(64 + 4 * depth.data.len());
    bytes.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).as_bytes());
    for y in (0..depth.height).rev() {
        for x in 0..depth.width {
            bytes.extend_from_slice(&(depth.get(x, y) as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a grayscale PFM into a `DepthMap`, tagging it `is_inverse` as told.
pub fn read_pfm(path: &Path, is_inverse: bool) -> Result<DepthMap> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message,
    };

    let mut scanner = Scanner {
        bytes: &bytes,
        cursor: 0,
    };
    let magic = scanner.next_token().map_err(&parse_err)?;
    if magic != "Pf" {
        return Err(parse_err(format!(
            "expected grayscale Pf magic, got {:?}",
            magic
        )));
    }
    let width: usize = scanner
        .next_token()
        .and_then(|t| t.parse().map_err(|e| format!("bad width: {}", e)))
        .map_err(&parse_err)?;
    let height: usize = scanner
        .next_token()
        .and_then(|t| t.parse().map_err(|e| format!("bad height: {}", e)))
        .map_err(&parse_err)?;
    let scale: f64 = scanner
        .next_token()
        .and_then(|t| t.parse().map_err(|e| format!("bad scale: {}", e)))
        .map_err(&parse_err)?;
    if scale >= 0.0 {
        return Err(parse_err(format!(
            "big-endian PFM (scale {}) not supported",
            scale
        )));
    }

    let expected = 4 * width * height;
    let payload = &bytes[scanner.cursor..];
    if payload.len() < expected {
        return Err(parse_err(format!(
            "pixel payload is {} bytes, need {}",
            payload.len(),
            expected
        )));
    }
    let mut depth = DepthMap::new(width, height);
    depth.is_inverse = is_inverse;
    let mut reader = payload;
    let mut buf = [0u8; 4];
    for y in (0..height).rev() {
        for x in 0..width {
            reader
                .read_exact(&mut buf)
                .map_err(|e| Error::io(format!("reading pixels of {}", path.display()), e))?;
            depth.set(x, y, f32::from_le_bytes(buf) as f64);
        }
    }
    Ok(depth)
}

/// Header tokenizer; `cursor` ends at the first pixel byte because the PFM
/// header terminates with exactly one whitespace byte after the scale.
struct Scanner<'a> {
    bytes: &'a [u8],
    cursor: usize,
}

impl Scanner<'_> {
    fn next_token(&mut self) -> std::result::Result<String, String> {
        let mut token = String::new();
        while self.cursor < self.bytes.len() {
            let c = self.bytes[self.cursor] as char;
            self.cursor += 1;
            if c.is_ascii_whitespace() {
                if token.is_empty() {
                    continue;
                }
                return Ok(token);
            }
            token.push(c);
        }
        Err("unexpected end of header".into())
    }
}
