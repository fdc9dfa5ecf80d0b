//! One function per subcommand. Each returns the per-case errors so `main`
//! can decide the exit code after everything has been written.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use cascade_roi::anatomy::FilterDecision;
use cascade_roi::io::{read_mask, read_nifti, write_nifti, write_report, CaseReport, PipelineConfig, ReportFormat};
use cascade_roi::metrics::{component_trend, TrendReport};
use cascade_roi::morphology::{dilate, label_components, threshold_probability, ComponentRecord};
use cascade_roi::phantom::{generate, PhantomSpec, TumorZone};
use cascade_roi::pipeline::{case_report, postprocess};
use cascade_roi::roi::{crop_volume, expand_box, paste_back, RoiBox};
use cascade_roi::uncertainty::{alpha_map, variance_map, SampleStack};
use cascade_roi::{Mask, Volume};
use serde::{Deserialize, Serialize};

use crate::batch::{run_cases, CaseError};
use crate::manifest::CaseManifest;

pub struct Ctx {
    pub cases: Vec<CaseManifest>,
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub pool: rayon::ThreadPool,
}

impl Ctx {
    fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }
}

/// ROI boxes of one case, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFile {
    pub case_id: String,
    pub margin: usize,
    pub boxes: Vec<RoiBox>,
}

#[derive(Debug, Serialize)]
struct DecisionFile<'a> {
    case_id: &'a str,
    components_before: usize,
    components_after: usize,
    kept: &'a [u32],
    decisions: &'a [FilterDecision],
    records: &'a [ComponentRecord],
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_errors(out: &Path, errors: &[CaseError]) -> Result<()> {
    write_json(&out.join("errors.json"), errors)
}

fn load_volume(p: &Path) -> Result<Volume> {
    read_nifti(p).with_context(|| format!("loading {}", p.display()))
}

fn load_mask(p: &Path) -> Result<Mask> {
    read_mask(p).with_context(|| format!("loading {}", p.display()))
}

pub fn postprocess_cmd(ctx: &Ctx) -> Result<Vec<CaseError>> {
    let (_, errors) = run_cases(&ctx.pool, &ctx.cases, "postprocess", |c| {
        let coarse = load_volume(&c.coarse_pred)?;
        let lung = load_mask(&c.lung_mask)?;
        let out = postprocess(&coarse, &lung, &ctx.config)?;
        write_nifti(&out.mask, ctx.path(format!("{}_filtered.nii.gz", c.case_id)))?;
        let boxes = BoxFile { case_id: c.case_id.clone(), margin: 0, boxes: out.boxes.clone() };
        write_json(&ctx.path(format!("{}_boxes.json", c.case_id)), &boxes)?;
        let decisions = DecisionFile {
            case_id: &c.case_id,
            components_before: out.components_before(),
            components_after: out.components_after(),
            kept: &out.kept,
            decisions: &out.decisions,
            records: &out.records,
        };
        write_json(&ctx.path(format!("{}_decisions.json", c.case_id)), &decisions)?;
        log::info!("{}: {} of {} components kept", c.case_id, out.kept.len(), out.records.len());
        Ok(())
    });
    Ok(errors)
}

fn check_source(boxes: &[RoiBox], dims: [usize; 3]) -> Result<()> {
    for b in boxes {
        ensure!(
            b.source_dims == dims,
            cascade_roi::Error::BoxMismatch(format!("box for grid {:?} used on grid {:?}", b.source_dims, dims))
        );
    }
    Ok(())
}

pub fn extract_roi_cmd(ctx: &Ctx, margin: usize) -> Result<Vec<CaseError>> {
    let (_, errors) = run_cases(&ctx.pool, &ctx.cases, "extract-roi", |c| {
        let box_path = c.boxes.clone().unwrap_or_else(|| ctx.path(format!("{}_boxes.json", c.case_id)));
        let tight: BoxFile = read_json(&box_path)?;
        let coarse = load_volume(&c.coarse_pred)?;
        check_source(&tight.boxes, coarse.meta.dims)?;
        let ct = c.ct.as_deref().map(load_volume).transpose()?;
        if let Some(ct) = &ct {
            check_source(&tight.boxes, ct.meta.dims)?;
        }
        let expanded: Vec<RoiBox> = tight.boxes.iter().map(|b| expand_box(b, margin)).collect();
        for (k, b) in expanded.iter().enumerate() {
            let stem = format!("{}_roi{k}_m{margin}", c.case_id);
            write_nifti(&crop_volume(&coarse, b)?, ctx.path(format!("{stem}.nii.gz")))?;
            if let Some(ct) = &ct {
                write_nifti(&crop_volume(ct, b)?, ctx.path(format!("{stem}_ct.nii.gz")))?;
            }
        }
        let file = BoxFile { case_id: c.case_id.clone(), margin, boxes: expanded };
        write_json(&ctx.path(format!("{}_roi_boxes_m{margin}.json", c.case_id)), &file)
    });
    Ok(errors)
}

pub fn pasteback_cmd(ctx: &Ctx, margin: usize) -> Result<Vec<CaseError>> {
    let (_, errors) = run_cases(&ctx.pool, &ctx.cases, "pasteback", |c| {
        let box_path =
            c.roi_boxes.clone().unwrap_or_else(|| ctx.path(format!("{}_roi_boxes_m{margin}.json", c.case_id)));
        let boxes: BoxFile = read_json(&box_path)?;
        let preds = c.roi_preds.as_deref().unwrap_or(&[]);
        if preds.len() < boxes.boxes.len() {
            bail!("MissingRoiPrediction: {} boxes but {} ROI predictions", boxes.boxes.len(), preds.len());
        }
        ensure!(
            preds.len() == boxes.boxes.len(),
            cascade_roi::Error::BoxMismatch(format!("{} ROI predictions for {} boxes", preds.len(), boxes.boxes.len()))
        );
        let lung = load_mask(&c.lung_mask)?;
        check_source(&boxes.boxes, lung.meta.dims)?;
        let mut items = Vec::with_capacity(preds.len());
        for (b, p) in boxes.boxes.iter().zip(preds) {
            let pred = threshold_probability(&load_volume(p)?, ctx.config.threshold_prob)?;
            items.push((*b, pred));
        }
        let full = paste_back(&lung.meta, &items)?;
        Ok(write_nifti(&full, ctx.path(format!("{}_final.nii.gz", c.case_id)))?)
    });
    Ok(errors)
}

/// Number of components after the same dilation-based grouping the
/// post-processing uses.
fn grouped_components(m: &Mask, cfg: &PipelineConfig) -> Result<usize> {
    let grouped = dilate(m, cfg.dilation_radius, cfg.dilation_iterations);
    Ok(label_components(&grouped, cfg.connectivity)?.1.len())
}

struct Scored {
    coarse: CaseReport,
    fin: CaseReport,
}

struct LoadedCase {
    coarse: Volume,
    lung: Mask,
    gt: Mask,
    final_mask: Option<Mask>,
}

fn load_for_scoring(c: &CaseManifest) -> Result<LoadedCase> {
    let gt = c.gt.as_deref().ok_or_else(|| anyhow!("MissingGroundTruth: case has no gt"))?;
    Ok(LoadedCase {
        coarse: load_volume(&c.coarse_pred)?,
        lung: load_mask(&c.lung_mask)?,
        gt: load_mask(gt)?,
        final_mask: c.final_mask.as_deref().map(load_mask).transpose()?,
    })
}

fn score_case(id: &str, l: &LoadedCase, cfg: &PipelineConfig) -> Result<Scored> {
    let tol = cfg.boundary_tolerance_voxels;
    let raw = threshold_probability(&l.coarse, cfg.threshold_prob)?;
    let out = postprocess(&l.coarse, &l.lung, cfg)?;
    let before = out.components_before();
    let coarse = case_report(id, &raw, &l.gt, tol, before, before, Vec::new())?;
    let fin = match &l.final_mask {
        Some(m) => case_report(id, m, &l.gt, tol, before, grouped_components(m, cfg)?, out.decisions)?,
        None => case_report(id, &out.mask, &l.gt, tol, before, out.components_after(), out.decisions)?,
    };
    Ok(Scored { coarse, fin })
}

#[derive(Serialize)]
#[serde(untagged)]
enum TrendSection {
    Report(Box<TrendReport>),
    Insufficient(&'static str),
}

#[derive(Serialize)]
struct Summary<'a> {
    n_cases: usize,
    trend: TrendSection,
    coarse_trend: TrendSection,
    errors: &'a [CaseError],
}

fn trend_section(reports: &[CaseReport]) -> Result<TrendSection> {
    Ok(if reports.len() < 3 {
        TrendSection::Insufficient("insufficient_n")
    } else {
        TrendSection::Report(Box::new(component_trend(reports)?))
    })
}

pub fn metrics_cmd(ctx: &Ctx) -> Result<Vec<CaseError>> {
    let (scored, errors) = run_cases(&ctx.pool, &ctx.cases, "metrics", |c| {
        score_case(&c.case_id, &load_for_scoring(c)?, &ctx.config)
    });
    let coarse: Vec<CaseReport> = scored.iter().map(|(_, s)| s.coarse.clone()).collect();
    let fin: Vec<CaseReport> = scored.into_iter().map(|(_, s)| s.fin).collect();
    write_report(&fin, ctx.path("report_final.json"), ReportFormat::Json)?;
    write_report(&fin, ctx.path("report_final.csv"), ReportFormat::Csv)?;
    write_report(&coarse, ctx.path("report_coarse.json"), ReportFormat::Json)?;
    write_report(&coarse, ctx.path("report_coarse.csv"), ReportFormat::Csv)?;
    let summary = Summary {
        n_cases: fin.len(),
        trend: trend_section(&fin)?,
        coarse_trend: trend_section(&coarse)?,
        errors: &errors,
    };
    write_json(&ctx.path("summary.json"), &summary)?;
    Ok(errors)
}

pub fn uncertainty_cmd(ctx: &Ctx) -> Result<Vec<CaseError>> {
    let (_, errors) = run_cases(&ctx.pool, &ctx.cases, "uncertainty", |c| {
        let paths = c.mc_samples.as_deref().unwrap_or(&[]);
        if paths.len() < 2 {
            return Err(cascade_roi::Error::TooFewSamples(paths.len()).into());
        }
        let samples = paths.iter().map(|p| load_volume(p)).collect::<Result<Vec<_>>>()?;
        let u = variance_map(&SampleStack::new(samples)?);
        let a = alpha_map(&u, ctx.config.alpha_scale)?;
        write_nifti(&u, ctx.path(format!("{}_variance.nii.gz", c.case_id)))?;
        Ok(write_nifti(&a, ctx.path(format!("{}_alpha.nii.gz", c.case_id)))?)
    });
    Ok(errors)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub n_cases: usize,
    pub mean_dice: f64,
    /// Mean over cases with a finite HD95; empty when there are none.
    pub mean_hd95: Option<f64>,
    pub hd95_excluded: usize,
}

pub fn sweep_cmd(ctx: &Ctx, key: &str, values: &[String]) -> Result<Vec<CaseError>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = ctx.config.clone();
            cfg.set(key, v)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (loaded, mut errors) = run_cases(&ctx.pool, &ctx.cases, "sweep-load", load_for_scoring);
    let mut rows = Vec::with_capacity(values.len());
    for (value, cfg) in values.iter().zip(&configs) {
        let scored: Vec<(String, Result<Scored>)> = ctx.pool.install(|| {
            use rayon::prelude::*;
            loaded.par_iter().map(|(id, l)| (id.clone(), score_case(id, l, cfg))).collect()
        });
        let mut dices = Vec::new();
        let mut hds = Vec::new();
        for (id, r) in scored {
            match r {
                Ok(s) => {
                    dices.push(s.fin.dice);
                    if s.fin.hd95_mm.is_finite() {
                        hds.push(s.fin.hd95_mm);
                    }
                }
                Err(e) => errors.push(CaseError {
                    case_id: id,
                    stage: format!("sweep {key}={value}"),
                    message: format!("{e:#}"),
                }),
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(SweepRow {
            value: value.clone(),
            n_cases: dices.len(),
            mean_dice: if dices.is_empty() { f64::NAN } else { mean(&dices) },
            mean_hd95: (!hds.is_empty()).then(|| mean(&hds)),
            hd95_excluded: dices.len() - hds.len(),
        });
    }
    let mut w = String::new();
    w.push_str("value,n_cases,mean_dice,mean_hd95,hd95_excluded\n");
    for r in &rows {
        let hd = r.mean_hd95.map(|h| h.to_string()).unwrap_or_default();
        w.push_str(&format!("{},{},{},{},{}\n", r.value, r.n_cases, r.mean_dice, hd, r.hd95_excluded));
    }
    std::fs::write(ctx.path(format!("sweep_{key}.csv")), w)?;
    write_json(&ctx.path(format!("sweep_{key}.json")), &rows)?;
    errors.sort();
    Ok(errors)
}

pub struct PhantomArgs {
    pub count: usize,
    pub seed: u64,
    pub dim: usize,
    pub tumor_radius: f64,
    pub zones: Vec<TumorZone>,
    pub n_spurious: Vec<usize>,
    pub noise: f64,
    pub with_mc: bool,
}

/// Generates `count` phantoms (seeds `seed..seed + count`, zone and spurious
/// count cycled from their lists) and a manifest referencing them.
pub fn phantom_cmd(out: &Path, pool: &rayon::ThreadPool, args: &PhantomArgs) -> Result<Vec<CaseError>> {
    ensure!(!args.zones.is_empty() && !args.n_spurious.is_empty(), "zone and spurious lists must be non-empty");
    let specs: Vec<(String, PhantomSpec)> = (0..args.count)
        .map(|i| {
            let seed = args.seed + i as u64;
            let spec = PhantomSpec {
                seed,
                dims: [args.dim; 3],
                tumor_radius: args.tumor_radius,
                tumor_zone: args.zones[i % args.zones.len()],
                n_spurious: args.n_spurious[i % args.n_spurious.len()],
                noise_flip_prob: args.noise,
                ..PhantomSpec::default()
            };
            (format!("phantom_{seed:04}"), spec)
        })
        .collect();
    let stubs: Vec<CaseManifest> = specs
        .iter()
        .map(|(id, _)| CaseManifest {
            case_id: id.clone(),
            ct: None,
            coarse_pred: format!("{id}_coarse.nii.gz").into(),
            lung_mask: format!("{id}_lung.nii.gz").into(),
            gt: Some(format!("{id}_gt.nii.gz").into()),
            mc_samples: args
                .with_mc
                .then(|| (0..cascade_roi::phantom::MC_SAMPLES).map(|t| format!("{id}_mc{t}.nii.gz").into()).collect()),
            roi_preds: None,
            boxes: None,
            roi_boxes: None,
            final_mask: None,
        })
        .collect();
    let (written, errors) = run_cases(pool, &stubs, "phantom", |c| {
        let spec = &specs.iter().find(|(id, _)| *id == c.case_id).expect("spec per case").1;
        let p = generate(spec)?;
        write_nifti(&p.lung, out.join(&c.lung_mask))?;
        write_nifti(&p.gt, out.join(c.gt.as_ref().expect("gt path")))?;
        write_nifti(&p.coarse_prob, out.join(&c.coarse_pred))?;
        for (s, path) in p.stack.samples().iter().zip(c.mc_samples.iter().flatten()) {
            write_nifti(s, out.join(path))?;
        }
        write_json(&out.join(format!("{}_spec.json", c.case_id)), spec)?;
        Ok(c.clone())
    });
    let manifest: Vec<CaseManifest> = written.into_iter().map(|(_, c)| c).collect();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(errors)
}
