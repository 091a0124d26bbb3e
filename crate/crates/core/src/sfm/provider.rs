//! The boundary between the pipeline and whatever produces sparse
//! reconstructions. The progressive loop only ever talks to [`SfmProvider`];
//! swapping a disk-backed model for a synthetic one changes nothing else.

use std::path::PathBuf;

use crate::core::Camera;
use crate::Result;
use crate::losses::ViewKind;

use super::colmap::{parse_colmap_text, SfmModel};

/// One view a reconstruction is requested for: identity, pose, and whether
/// it is a real training view or a rendered pseudo view.
#[derive(Debug, Clone)]
pub struct SfmView {
    pub image_id: u64,
    pub name: String,
    pub camera: Camera,
    pub kind: ViewKind,
}

/// Produces a sparse reconstruction over the requested views (poses are
/// known and must be honored). Implementations must return a model that
/// passes [`SfmModel::validate`] and whose view labels follow the request.
pub trait SfmProvider {
    fn run(&self, views: &[SfmView]) -> Result<SfmModel>;
}

/// Serves a precomputed COLMAP text model from disk, matching requested
/// views to model images by name. Model images not in the request keep a
/// label from the pseudo name-prefix convention.
pub struct ColmapDirProvider {
    pub dir: PathBuf,
    pub pseudo_prefix: String,
}

impl ColmapDirProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ColmapDirProvider { dir: dir.into(), pseudo_prefix: "pseudo_".into() }
    }
}

impl SfmProvider for ColmapDirProvider {
    fn run(&self, views: &[SfmView]) -> Result<SfmModel> {
        let mut model = parse_colmap_text(&self.dir)?;
        model.label_pseudo_by_prefix(&self.pseudo_prefix);
        for view in views {
            let id = model
                .images
                .iter()
                .find(|(_, im)| im.name == view.name)
                .map(|(&id, _)| id);
            if let Some(id) = id {
                match view.kind {
                    ViewKind::Training => {
                        model.pseudo_image_ids.remove(&id);
                        model.training_image_ids.insert(id);
                    }
                    ViewKind::Pseudo => {
                        model.training_image_ids.remove(&id);
                        model.pseudo_image_ids.insert(id);
                    }
                }
            } else {
                log::warn!(
                    "colmap model at {} has no image named '{}'",
                    self.dir.display(),
                    view.name
                );
            }
        }
        model.validate()?;
        Ok(model)
    }
}
