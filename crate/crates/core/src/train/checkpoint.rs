//! Cloud persistence: a small text header followed by little-endian f32
//! parameter arrays, plus the line-delimited JSON metric log.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::core::Gaussian;
use crate::losses::LossBreakdown;
use crate::{Error, Result};

const MAGIC: &str = "loopsplat-checkpoint 1";

/// Everything a checkpoint stores besides the parameters themselves.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub cloud: Vec<Gaussian>,
    pub extent: f64,
    pub iteration: usize,
    pub seed: u64,
}

/// One metric-log line: loss terms and cloud size at an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub gaussians: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Writes the cloud with a text header (version, count, extent, iteration,
/// seed) and then the parameter arrays as little-endian f32, one field at a
/// time: mu, raw_opacity, raw_scale, rotation_q, color.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let n = ckpt.cloud.len();
    let mut buf = Vec::with_capacity(128 + n * 14 * 4);
    writeln!(buf, "{MAGIC}").expect("vec write");
    writeln!(buf, "count {n}").expect("vec write");
    writeln!(buf, "extent {}", ckpt.extent).expect("vec write");
    writeln!(buf, "iteration {}", ckpt.iteration).expect("vec write");
    writeln!(buf, "seed {}", ckpt.seed).expect("vec write");
    writeln!(buf, "data").expect("vec write");

    let mut push = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    for g in &ckpt.cloud {
        for k in 0..3 {
            push(g.mu[k]);
        }
    }
    for g in &ckpt.cloud {
        push(g.raw_opacity);
    }
    for g in &ckpt.cloud {
        for k in 0..3 {
            push(g.raw_scale[k]);
        }
    }
    for g in &ckpt.cloud {
        for q in g.rotation {
            push(q);
        }
    }
    for g in &ckpt.cloud {
        for k in 0..3 {
            push(g.color[k]);
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let next_line = |pos: &mut usize, line_no: &mut usize| -> Result<String> {
        let rest = &bytes[*pos..];
        let end = rest.iter().position(|b| *b == b'\n').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: *line_no + 1,
            message: "truncated header".into(),
        })?;
        let line = String::from_utf8_lossy(&rest[..end]).into_owned();
        *pos += end + 1;
        *line_no += 1;
        Ok(line)
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let magic = next_line(&mut pos, &mut line_no)?;
    if magic != MAGIC {
        return Err(parse_err(1, format!("expected '{MAGIC}', got '{magic}'")));
    }
    let field = |name: &str, pos: &mut usize, line_no: &mut usize| -> Result<String> {
        let line = next_line(pos, line_no)?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| parse_err(*line_no, format!("expected '{name} <value>'")))?;
        if key != name {
            return Err(parse_err(*line_no, format!("expected field '{name}', got '{key}'")));
        }
        Ok(value.to_string())
    };
    let count: usize = field("count", &mut pos, &mut line_no)?
        .parse()
        .map_err(|e| parse_err(line_no, format!("bad count: {e}")))?;
    let extent: f64 = field("extent", &mut pos, &mut line_no)?
        .parse()
        .map_err(|e| parse_err(line_no, format!("bad extent: {e}")))?;
    let iteration: usize = field("iteration", &mut pos, &mut line_no)?
        .parse()
        .map_err(|e| parse_err(line_no, format!("bad iteration: {e}")))?;
    let seed: u64 = field("seed", &mut pos, &mut line_no)?
        .parse()
        .map_err(|e| parse_err(line_no, format!("bad seed: {e}")))?;
    let data = next_line(&mut pos, &mut line_no)?;
    if data != "data" {
        return Err(parse_err(line_no, format!("expected 'data', got '{data}'")));
    }

    let payload = &bytes[pos..];
    let expected = count * 14 * 4;
    if payload.len() != expected {
        return Err(parse_err(
            line_no,
            format!("payload holds {} bytes, expected {expected}", payload.len()),
        ));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();

    let mut cloud = Vec::with_capacity(count);
    let (mu, rest) = floats.split_at(3 * count);
    let (opacity, rest) = rest.split_at(count);
    let (scale, rest) = rest.split_at(3 * count);
    let (rotation, color) = rest.split_at(4 * count);
    for i in 0..count {
        cloud.push(Gaussian {
            mu: Vector3::new(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]),
            raw_opacity: opacity[i],
            raw_scale: Vector3::new(scale[3 * i], scale[3 * i + 1], scale[3 * i + 2]),
            rotation: [
                rotation[4 * i],
                rotation[4 * i + 1],
                rotation[4 * i + 2],
                rotation[4 * i + 3],
            ],
            color: Vector3::new(color[3 * i], color[3 * i + 1], color[3 * i + 2]),
        });
    }
    Ok(Checkpoint { cloud, extent, iteration, seed })
}

/// One JSON object per line, in iteration order.
pub fn save_metric_log(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r).expect("metric record serializes"));
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_metric_log(path: &Path) -> Result<Vec<MetricRecord>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("bad metric record: {e}"),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_scene, SceneKind};

    #[test]
    fn round_trip_preserves_parameters_at_f32() {
        let scene = gen_scene(SceneKind::BlobField, 17, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let ckpt = Checkpoint {
            cloud: scene.gt_cloud.clone(),
            extent: scene.extent,
            iteration: 420,
            seed: 99,
        };
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.cloud.len(), 17);
        assert_eq!(back.iteration, 420);
        assert_eq!(back.seed, 99);
        assert!((back.extent - scene.extent).abs() < 1e-12);
        for (a, b) in scene.gt_cloud.iter().zip(&back.cloud) {
            for k in 0..3 {
                assert_eq!(b.mu[k], a.mu[k] as f32 as f64);
                assert_eq!(b.raw_scale[k], a.raw_scale[k] as f32 as f64);
                assert_eq!(b.color[k], a.color[k] as f32 as f64);
            }
            assert_eq!(b.raw_opacity, a.raw_opacity as f32 as f64);
            for k in 0..4 {
                assert_eq!(b.rotation[k], a.rotation[k] as f32 as f64);
            }
        }
    }

    #[test]
    fn saved_file_starts_with_text_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let ckpt = Checkpoint { cloud: Vec::new(), extent: 0.5, iteration: 0, seed: 3 };
        save_checkpoint(&path, &ckpt).unwrap();
        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text,
            "loopsplat-checkpoint 1\ncount 0\nextent 0.5\niteration 0\nseed 3\ndata\n"
        );
    }

    #[test]
    fn wrong_magic_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        fs::write(&path, "other-format 2\ndata\n").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let scene = gen_scene(SceneKind::BlobField, 3, 1).unwrap();
        let ckpt =
            Checkpoint { cloud: scene.gt_cloud, extent: scene.extent, iteration: 1, seed: 1 };
        save_checkpoint(&path, &ckpt).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn metric_log_round_trips_as_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let records = vec![
            MetricRecord {
                iteration: 100,
                gaussians: 12,
                loss: LossBreakdown {
                    l1: 0.1,
                    dssim: 0.02,
                    sparse_depth: 0.0,
                    pearson: 0.0,
                    opacity: 0.003,
                    total: 0.123,
                },
            },
            MetricRecord { iteration: 200, gaussians: 14, loss: LossBreakdown::default() },
        ];
        save_metric_log(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["iteration"], 100);
        assert_eq!(first["gaussians"], 12);
        assert_eq!(first["l1"], 0.1);
        let back = load_metric_log(&path).unwrap();
        assert_eq!(back, records);
    }
}
