//! Batch manifests: a JSON array of cases (a single object is accepted too).
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseManifest {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ct: Option<PathBuf>,
    pub coarse_pred: PathBuf,
    pub lung_mask: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<Vec<PathBuf>>,
    /// Stage-2 outputs, one per ROI box in box order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi_preds: Option<Vec<PathBuf>>,
    /// Tight boxes from `postprocess`; defaults to `<out>/<case>_boxes.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<PathBuf>,
    /// Expanded boxes matching `roi_preds`; defaults to
    /// `<out>/<case>_roi_boxes_m<margin>.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi_boxes: Option<PathBuf>,
    /// Final mask to score; without it `metrics` scores the post-processed
    /// coarse prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_mask: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<CaseManifest>),
    One(Box<CaseManifest>),
}

impl CaseManifest {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.coarse_pred);
        fix(&mut self.lung_mask);
        for p in [&mut self.ct, &mut self.gt, &mut self.boxes, &mut self.roi_boxes, &mut self.final_mask]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for list in [&mut self.mc_samples, &mut self.roi_preds].into_iter().flatten() {
            list.iter_mut().for_each(fix);
        }
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<CaseManifest>> {
    let mut cases = match serde_json::from_str::<OneOrMany>(text).context("malformed manifest")? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(c) => vec![*c],
    };
    let mut seen = BTreeSet::new();
    for c in &mut cases {
        if c.case_id.is_empty() || c.case_id.contains(['/', '\\']) {
            bail!("invalid case_id {:?}", c.case_id);
        }
        if !seen.insert(c.case_id.clone()) {
            bail!("duplicate case_id {:?}", c.case_id);
        }
        c.resolve(base);
    }
    Ok(cases)
}

pub fn load_manifest(path: &Path) -> Result<Vec<CaseManifest>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).with_context(|| format!("in manifest {}", path.display()))
}
