//! COLMAP text-model reading and writing.
//!
//! A model directory holds `cameras.txt`, `images.txt`, and `points3D.txt`.
//! Poses are stored the COLMAP way: a world-to-camera quaternion `qvec`
//! (w, x, y, z) and translation `tvec` with `x_cam = R p + tvec`. Records
//! keep `qvec`/`tvec` exactly as parsed so a serialize/parse round trip
//! reproduces the model bit for bit; [`SfmImage::pose`] derives the
//! center-based pose used everywhere else.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};

use crate::core::{CameraIntrinsics, CameraPose};
use crate::{Error, Result};

/// One reconstructed 3D point with its observation track.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmPoint3D {
    pub id: u64,
    pub xyz: Vector3<f64>,
    pub rgb: [u8; 3],
    /// Mean reprojection error in pixels; negative means unset.
    pub reproj_error: f64,
    /// Observations as (image id, keypoint index into that image).
    pub track: Vec<(u64, usize)>,
}

/// One registered image: pose, keypoints, and camera reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmImage {
    pub name: String,
    pub camera_id: u64,
    /// World-to-camera rotation (w, x, y, z), as parsed. Not renormalized.
    pub qvec: [f64; 4],
    /// World-to-camera translation, as parsed.
    pub tvec: [f64; 3],
    /// Keypoints as (x, y, point3d id); -1 marks an unmatched keypoint.
    pub keypoints: Vec<(f64, f64, i64)>,
}

impl SfmImage {
    /// Center-based pose with a normalized rotation: `center = -R^T t`.
    pub fn pose(&self) -> CameraPose {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            self.qvec[0],
            self.qvec[1],
            self.qvec[2],
            self.qvec[3],
        ));
        let rot = q.to_rotation_matrix();
        let t = Vector3::new(self.tvec[0], self.tvec[1], self.tvec[2]);
        let center = -(rot.matrix().transpose() * t);
        CameraPose { rotation: *q.quaternion(), center }
    }
}

/// A full sparse reconstruction plus the training/pseudo view labeling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SfmModel {
    pub cameras: BTreeMap<u64, CameraIntrinsics>,
    pub images: BTreeMap<u64, SfmImage>,
    pub points: BTreeMap<u64, SfmPoint3D>,
    pub training_image_ids: BTreeSet<u64>,
    pub pseudo_image_ids: BTreeSet<u64>,
}

impl SfmModel {
    /// Checks referential integrity: camera references resolve, keypoint
    /// point ids resolve or are -1, every track entry names a real image
    /// and an in-range keypoint, tracks are non-empty, and the two label
    /// sets partition the image ids.
    pub fn validate(&self) -> Result<()> {
        for (id, image) in &self.images {
            if !self.cameras.contains_key(&image.camera_id) {
                return Err(Error::InvalidModel(format!(
                    "image {id} references missing camera {}",
                    image.camera_id
                )));
            }
            for (k, &(_, _, pid)) in image.keypoints.iter().enumerate() {
                if pid >= 0 && !self.points.contains_key(&(pid as u64)) {
                    return Err(Error::InvalidModel(format!(
                        "image {id} keypoint {k} references missing point {pid}"
                    )));
                }
            }
        }
        for (id, point) in &self.points {
            if point.track.is_empty() {
                return Err(Error::InvalidModel(format!("point {id} has an empty track")));
            }
            for &(image_id, kp) in &point.track {
                let image = self.images.get(&image_id).ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "point {id} track references missing image {image_id}"
                    ))
                })?;
                if kp >= image.keypoints.len() {
                    return Err(Error::InvalidModel(format!(
                        "point {id} track references keypoint {kp} of image {image_id}, \
                         which has only {}",
                        image.keypoints.len()
                    )));
                }
            }
        }
        for id in self.training_image_ids.intersection(&self.pseudo_image_ids) {
            return Err(Error::InvalidModel(format!(
                "image {id} labeled both training and pseudo"
            )));
        }
        for id in self.images.keys() {
            if !self.training_image_ids.contains(id) && !self.pseudo_image_ids.contains(id) {
                return Err(Error::InvalidModel(format!("image {id} has no view label")));
            }
        }
        for id in self.training_image_ids.union(&self.pseudo_image_ids) {
            if !self.images.contains_key(id) {
                return Err(Error::InvalidModel(format!(
                    "view label references missing image {id}"
                )));
            }
        }
        Ok(())
    }

    /// Moves every image whose name starts with `prefix` into the pseudo set.
    pub fn label_pseudo_by_prefix(&mut self, prefix: &str) {
        let pseudo: BTreeSet<u64> = self
            .images
            .iter()
            .filter(|(_, im)| im.name.starts_with(prefix))
            .map(|(&id, _)| id)
            .collect();
        self.training_image_ids = self
            .images
            .keys()
            .copied()
            .filter(|id| !pseudo.contains(id))
            .collect();
        self.pseudo_image_ids = pseudo;
    }
}

/// Splits a line into whitespace tokens and hands them out one by one,
/// turning shortfalls and bad numbers into positioned parse errors.
struct LineTokens<'a> {
    path: &'a Path,
    line_no: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> LineTokens<'a> {
    fn new(path: &'a Path, line_no: usize, line: &'a str) -> Self {
        Self { path, line_no, tokens: line.split_whitespace() }
    }

    fn err(&self, message: String) -> Error {
        Error::Parse { path: self.path.display().to_string(), line: self.line_no, message }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.tokens.next().ok_or_else(|| self.err(format!("missing {what}")))
    }

    fn parse<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| self.err(format!("invalid {what} '{tok}'")))
    }

    fn try_next(&mut self) -> Option<&'a str> {
        self.tokens.next()
    }

    fn expect_end(mut self) -> Result<()> {
        match self.tokens.next() {
            Some(tok) => Err(self.err(format!("unexpected trailing token '{tok}'"))),
            None => Ok(()),
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

fn parse_cameras(path: &Path) -> Result<BTreeMap<u64, CameraIntrinsics>> {
    let mut cameras = BTreeMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if is_comment(line) || line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut toks = LineTokens::new(path, line_no, line);
        let id: u64 = toks.parse("camera id")?;
        let model = toks.next("camera model")?.to_owned();
        let width: usize = toks.parse("width")?;
        let height: usize = toks.parse("height")?;
        let (fx, fy, cx, cy) = match model.as_str() {
            "PINHOLE" => {
                let fx: f64 = toks.parse("fx")?;
                let fy: f64 = toks.parse("fy")?;
                let cx: f64 = toks.parse("cx")?;
                let cy: f64 = toks.parse("cy")?;
                (fx, fy, cx, cy)
            }
            "SIMPLE_PINHOLE" => {
                let f: f64 = toks.parse("f")?;
                let cx: f64 = toks.parse("cx")?;
                let cy: f64 = toks.parse("cy")?;
                (f, f, cx, cy)
            }
            other => {
                return Err(Error::UnknownCameraModel {
                    path: path.display().to_string(),
                    line: line_no,
                    model: other.to_owned(),
                })
            }
        };
        toks.expect_end()?;
        let intr = CameraIntrinsics::new(fx, fy, cx, cy, width, height)?;
        if cameras.insert(id, intr).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("duplicate camera id {id}"),
            });
        }
    }
    Ok(cameras)
}

fn parse_images(path: &Path) -> Result<BTreeMap<u64, SfmImage>> {
    let lines = read_lines(path)?;
    let mut images = BTreeMap::new();
    let mut idx = 0;
    while idx < lines.len() {
        let line = &lines[idx];
        if is_comment(line) || line.trim().is_empty() {
            idx += 1;
            continue;
        }
        let line_no = idx + 1;
        let mut toks = LineTokens::new(path, line_no, line);
        let id: u64 = toks.parse("image id")?;
        let qvec = [
            toks.parse("qw")?,
            toks.parse("qx")?,
            toks.parse("qy")?,
            toks.parse("qz")?,
        ];
        let tvec = [toks.parse("tx")?, toks.parse("ty")?, toks.parse("tz")?];
        let camera_id: u64 = toks.parse("camera id")?;
        let name = toks.next("image name")?.to_owned();
        toks.expect_end()?;

        // The keypoint line is the record's second line. It may be blank
        // (an image with no keypoints) but must exist.
        let mut kp_idx = idx + 1;
        while kp_idx < lines.len() && is_comment(&lines[kp_idx]) {
            kp_idx += 1;
        }
        if kp_idx >= lines.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("image {id} is missing its keypoint line"),
            });
        }
        let mut kp_toks = LineTokens::new(path, kp_idx + 1, &lines[kp_idx]);
        let mut keypoints = Vec::new();
        while let Some(tok) = kp_toks.try_next() {
            let x: f64 = tok
                .parse()
                .map_err(|_| kp_toks.err(format!("invalid keypoint x '{tok}'")))?;
            let y: f64 = kp_toks.parse("keypoint y")?;
            let pid: i64 = kp_toks.parse("keypoint point3d id")?;
            keypoints.push((x, y, pid));
        }
        let image = SfmImage { name, camera_id, qvec, tvec, keypoints };
        if images.insert(id, image).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("duplicate image id {id}"),
            });
        }
        idx = kp_idx + 1;
    }
    Ok(images)
}

fn parse_points(path: &Path) -> Result<BTreeMap<u64, SfmPoint3D>> {
    let mut points = BTreeMap::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if is_comment(line) || line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut toks = LineTokens::new(path, line_no, line);
        let id: u64 = toks.parse("point id")?;
        let xyz = Vector3::new(toks.parse("x")?, toks.parse("y")?, toks.parse("z")?);
        let rgb = [toks.parse("r")?, toks.parse("g")?, toks.parse("b")?];
        let reproj_error: f64 = toks.parse("reprojection error")?;
        let mut track = Vec::new();
        while let Some(tok) = toks.try_next() {
            let image_id: u64 = tok
                .parse()
                .map_err(|_| toks.err(format!("invalid track image id '{tok}'")))?;
            let kp: usize = toks.parse("track keypoint index")?;
            track.push((image_id, kp));
        }
        let point = SfmPoint3D { id, xyz, rgb, reproj_error, track };
        if points.insert(id, point).is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("duplicate point id {id}"),
            });
        }
    }
    Ok(points)
}

/// Parses `cameras.txt`, `images.txt`, and `points3D.txt` from `dir`.
///
/// All images start labeled as training views; use
/// [`SfmModel::label_pseudo_by_prefix`] to split off pseudo views. The
/// returned model always passes [`SfmModel::validate`].
pub fn parse_colmap_text(dir: &Path) -> Result<SfmModel> {
    let cameras = parse_cameras(&dir.join("cameras.txt"))?;
    let images = parse_images(&dir.join("images.txt"))?;
    let points = parse_points(&dir.join("points3D.txt"))?;
    let training_image_ids: BTreeSet<u64> = images.keys().copied().collect();
    let model = SfmModel {
        cameras,
        images,
        points,
        training_image_ids,
        pseudo_image_ids: BTreeSet::new(),
    };
    model.validate()?;
    Ok(model)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

/// Writes the model back as COLMAP text files. Numbers are formatted with
/// the shortest representation that parses back to the same value, so
/// `parse_colmap_text(serialize_colmap_text(m)) == m` up to view labels
/// (which the text format does not carry) and camera model naming (all
/// cameras are written as PINHOLE).
pub fn serialize_colmap_text(model: &SfmModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let mut cameras = String::from("# CAMERA_ID MODEL WIDTH HEIGHT FX FY CX CY\n");
    for (id, c) in &model.cameras {
        writeln!(
            cameras,
            "{id} PINHOLE {} {} {} {} {} {}",
            c.width, c.height, c.fx, c.fy, c.cx, c.cy
        )
        .unwrap();
    }
    write_file(dir, "cameras.txt", &cameras)?;

    let mut images = String::from(
        "# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n#   X Y POINT3D_ID ...\n",
    );
    for (id, im) in &model.images {
        writeln!(
            images,
            "{id} {} {} {} {} {} {} {} {} {}",
            im.qvec[0],
            im.qvec[1],
            im.qvec[2],
            im.qvec[3],
            im.tvec[0],
            im.tvec[1],
            im.tvec[2],
            im.camera_id,
            im.name
        )
        .unwrap();
        let mut first = true;
        for &(x, y, pid) in &im.keypoints {
            if !first {
                images.push(' ');
            }
            write!(images, "{x} {y} {pid}").unwrap();
            first = false;
        }
        images.push('\n');
    }
    write_file(dir, "images.txt", &images)?;

    let mut points = String::from("# POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*\n");
    for (id, p) in &model.points {
        write!(
            points,
            "{id} {} {} {} {} {} {} {}",
            p.xyz.x, p.xyz.y, p.xyz.z, p.rgb[0], p.rgb[1], p.rgb[2], p.reproj_error
        )
        .unwrap();
        for &(image_id, kp) in &p.track {
            write!(points, " {image_id} {kp}").unwrap();
        }
        points.push('\n');
    }
    write_file(dir, "points3D.txt", &points)?;
    Ok(())
}
