//! Subcommand implementations.
//!
//! A scene directory holds, per scene, `<name>.labels.pgm` (visible instance
//! map), `<name>.scene.json` (ground truth) and optionally `<name>.image.pgm`,
//! plus one `manifest.json`.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use bubbleid::ellipse::{reconstruct_ellipse, EllipseRecord};
use bubbleid::eval::{
    evaluate_image, summarize, write_histogram_csv, write_images_csv, ImageEval, StudyConfig, StudySummary,
};
use bubbleid::fuse::{grow_instances, weight_map, WEIGHT_ELSE, WEIGHT_GAP, WEIGHT_INSIDE};
use bubbleid::io::{
    load_label_pgm, read_pgm, write_gray_pgm, write_jsonl, write_label_pgm, write_weight_map, PolygonRecord,
    WEIGHT_MAP_MAGIC,
};
use bubbleid::rdc::{
    correct_polygon, extract_samples, segment_center, train, visible_rays, CorrectionPolicy, Predictor, RdcError,
    RdcModel, RdcSample, TrainConfig,
};
use bubbleid::synthgen::{
    compose_scene, render_scene, RenderConfig, Scene, SceneConfig, SceneMode, SceneRecord, SceneSeed, SynthError,
};
use bubbleid::{par, LabelMap, Mask, PixelScale, StarPolygon, Unit, DEFAULT_K};

use crate::output::{data, sibling, CliError, Manifest, Outputs};
use crate::{EvalArgs, FuseArgs, GenArgs, Method, Policy, ReconstructArgs, TrainArgs, WeightmapArgs};

const LABELS_SUFFIX: &str = ".labels.pgm";
const SCENE_SUFFIX: &str = ".scene.json";
const IMAGE_SUFFIX: &str = ".image.pgm";
/// Scenes composed per parallel batch; bounds peak memory.
const GEN_CHUNK: usize = 64;

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
        }
    }
}

fn load_labels(path: &Path) -> Result<LabelMap, CliError> {
    load_label_pgm(path).map_err(data(path.display()))
}

/// Scene names in `dir` carrying `suffix`, sorted.
fn names_with_suffix(dir: &Path, suffix: &str) -> Result<BTreeSet<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(data(format!("listing {}", dir.display())))?;
    let mut names = BTreeSet::new();
    for e in entries {
        let e = e.map_err(data(dir.display()))?;
        if let Some(n) = e.file_name().to_str().and_then(|n| n.strip_suffix(suffix)) {
            names.insert(n.to_string());
        }
    }
    Ok(names)
}

fn load_scene(dir: &Path, name: &str) -> Result<Scene, CliError> {
    let path = dir.join(format!("{name}{SCENE_SUFFIX}"));
    let text = fs::read_to_string(&path).map_err(data(path.display()))?;
    let record: SceneRecord = serde_json::from_str(&text).map_err(data(path.display()))?;
    let labels = load_labels(&dir.join(format!("{name}{LABELS_SUFFIX}")))?;
    Scene::from_record(&record, labels).map_err(data(path.display()))
}

fn load_model(path: &Path) -> Result<RdcModel, CliError> {
    let text = fs::read_to_string(path).map_err(data(path.display()))?;
    RdcModel::from_json(&text).map_err(data(path.display()))
}

// ------------------------------------------------------------------ gen

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub mode: SceneMode,
    pub seed: u64,
    /// Scenes in overlap mode; scenes per target in alpha mode.
    pub count: usize,
    pub targets: Vec<f64>,
    /// Scene parameters; the mode's defaults when absent. In alpha mode
    /// `target_alpha` is replaced by each entry of `targets`.
    pub scene: Option<SceneConfig>,
    pub render: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            mode: SceneMode::Rdc,
            seed: 0,
            count: 1000,
            targets: vec![0.025, 0.05, 0.075, 0.10],
            scene: None,
            render: false,
        }
    }
}

/// One scene to generate: output name, config and seed.
fn gen_plan(cfg: &GenConfig) -> Vec<(String, SceneConfig, SceneSeed)> {
    match cfg.mode {
        SceneMode::Rdc => {
            let sc = cfg.scene.clone().unwrap_or_else(SceneConfig::rdc);
            (0..cfg.count)
                .map(|i| (format!("rdc_{i:05}"), sc.clone(), SceneSeed::new(cfg.seed, i as u64)))
                .collect()
        }
        SceneMode::Alpha => {
            let mut plan = Vec::new();
            for (t, &target) in cfg.targets.iter().enumerate() {
                let sc = match &cfg.scene {
                    Some(s) => SceneConfig { target_alpha: target, ..s.clone() },
                    None => SceneConfig::alpha(target),
                };
                let tag = (target * 10_000.0).round() as u64;
                for i in 0..cfg.count {
                    let index = (t * cfg.count + i) as u64;
                    plan.push((format!("alpha{tag:04}_{i:03}"), sc.clone(), SceneSeed::new(cfg.seed, index)));
                }
            }
            plan
        }
    }
}

#[derive(Debug, Serialize)]
struct GenEntry {
    name: String,
    n_bubbles: usize,
    target_alpha: Option<f64>,
    achieved_alpha: f64,
}

#[derive(Debug, Serialize)]
struct GenDetails {
    scenes: Vec<GenEntry>,
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let mut cfg: GenConfig = read_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.count {
        cfg.count = n;
    }
    cfg.render |= args.render;

    let plan = gen_plan(&cfg);
    let mut out = Outputs::in_dir(&args.out)?;
    let mut entries = Vec::with_capacity(plan.len());
    for chunk in plan.chunks(GEN_CHUNK) {
        let built = par::map(chunk, |(name, sc, seed)| {
            let scene = compose_scene(cfg.mode, sc, *seed)?;
            let mut labels = Vec::new();
            write_label_pgm(&mut labels, &scene.labels).map_err(|e| SynthError::InvalidRange(e.to_string()))?;
            let mut record = serde_json::to_string_pretty(&scene.to_record()).expect("serializable");
            record.push('\n');
            let image = cfg.render.then(|| {
                let mut buf = Vec::new();
                write_gray_pgm(&mut buf, &render_scene(&scene, &RenderConfig::default())).expect("in-memory write");
                buf
            });
            let entry = GenEntry {
                name: name.clone(),
                n_bubbles: scene.bubbles.len(),
                target_alpha: scene.target_alpha,
                achieved_alpha: scene.achieved_alpha,
            };
            Ok::<_, SynthError>((entry, labels, record, image))
        });
        for item in built {
            let (entry, labels, record, image) = item.map_err(|e| match e {
                SynthError::InvalidRange(m) => CliError::Usage(format!("scene config: {m}")),
                other => CliError::Data(other.to_string()),
            })?;
            out.write(&args.out.join(format!("{}{LABELS_SUFFIX}", entry.name)), &labels)?;
            out.write(&args.out.join(format!("{}{SCENE_SUFFIX}", entry.name)), record.as_bytes())?;
            if let Some(img) = image {
                out.write(&args.out.join(format!("{}{IMAGE_SUFFIX}", entry.name)), &img)?;
            }
            entries.push(entry);
        }
    }
    let manifest = Manifest::new("gen", Some(cfg.seed), &cfg, GenDetails { scenes: entries });
    out.write_json(&args.out.join("manifest.json"), &manifest)?;
    out.commit();
    println!("{}", serde_json::to_string_pretty(&manifest).expect("serializable"));
    Ok(())
}

// ------------------------------------------------------------ train-rdc

#[derive(Debug, Serialize)]
struct TrainDetails {
    n_scenes: usize,
    n_samples: usize,
    n_occluded: usize,
    skipped_bubbles: usize,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
}

pub fn train_rdc(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainConfig = read_config(args.config.as_deref())?;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    let names: Vec<String> = names_with_suffix(&args.scenes, SCENE_SUFFIX)?.into_iter().collect();
    if names.is_empty() {
        return Err(CliError::Data(format!("no scenes in {}", args.scenes.display())));
    }
    let sets = par::map(&names, |n| load_scene(&args.scenes, n).map(|s| extract_samples(&s, DEFAULT_K)));
    let mut samples: Vec<RdcSample> = Vec::new();
    let mut skipped = 0;
    for s in sets {
        let s = s?;
        samples.extend(s.samples);
        skipped += s.skipped;
    }
    eprintln!("training on {} samples from {} scenes", samples.len(), names.len());
    let (model, hist) = train(&samples, &cfg).map_err(|e| match e {
        RdcError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        RdcError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (i, t) in hist.train.iter().enumerate() {
        let v = hist.val.get(i).map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    let loss_path = args.loss_csv.clone().unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut out = Outputs::default();
    out.write(&args.out, model.to_json().as_bytes())?;
    out.write(&loss_path, csv.as_bytes())?;
    let details = TrainDetails {
        n_scenes: names.len(),
        n_samples: samples.len(),
        n_occluded: samples.iter().filter(|s| s.is_occluded()).count(),
        skipped_bubbles: skipped,
        final_train_loss: hist.train.last().copied(),
        final_val_loss: hist.val.last().copied(),
    };
    out.write_json(&sibling(&args.out, ".manifest.json"), &Manifest::new("train-rdc", Some(cfg.seed), &cfg, details))?;
    out.commit();
    Ok(())
}

// ---------------------------------------------------------- reconstruct

pub fn reconstruct(args: ReconstructArgs) -> Result<(), CliError> {
    let scale = PixelScale::new(args.mm_per_px)
        .ok_or_else(|| CliError::Usage(format!("invalid pixel scale {}", args.mm_per_px)))?;
    let predictor = match (args.method, &args.model) {
        (Method::Rdc, None) => return Err(CliError::Usage("--method rdc requires --model".into())),
        (Method::Rdc, Some(p)) => Some(Predictor::new(&load_model(p)?).map_err(data(p.display()))?),
        _ => None,
    };
    let policy = match args.policy {
        Policy::Flagged => CorrectionPolicy::Flagged,
        Policy::Full => CorrectionPolicy::Full,
    };
    let labels = load_labels(&args.labels)?;
    let ids = labels.instance_ids();
    let mut buf = Vec::new();
    match args.method {
        Method::None => {
            let records: Vec<PolygonRecord> = par::map(&ids, |&id| {
                let region = labels.region(id).expect("listed id");
                let center = segment_center(&region.pixels, labels.width()).expect("non-empty region");
                let (hits, _) = visible_rays(&labels, id, center, DEFAULT_K);
                let radii = hits.iter().map(|h| h.radius * scale.mm_per_px).collect();
                PolygonRecord::new(id, &StarPolygon { center, radii, unit: Unit::Mm })
            });
            write_jsonl(&mut buf, &records)
        }
        Method::Rdc => {
            let p = predictor.as_ref().expect("checked above");
            let records = par::map(&ids, |&id| {
                correct_polygon(p, &labels, id, scale, policy).map(|c| PolygonRecord::new(id, &c.polygon))
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(data("correction"))?;
            write_jsonl(&mut buf, &records)
        }
        Method::Ellipse => {
            let fitted = par::map(&ids, |&id| reconstruct_ellipse(&labels, id).map(|r| EllipseRecord::new(id, &r)));
            let mut records = Vec::new();
            for (id, r) in ids.iter().zip(fitted) {
                match r {
                    Ok(r) => records.push(r),
                    Err(e) => eprintln!("warning: instance {id}: {e}; no ellipse written"),
                }
            }
            write_jsonl(&mut buf, &records)
        }
    }
    .map_err(data("serializing records"))?;
    let mut out = Outputs::default();
    out.write(&args.out, &buf)?;
    out.commit();
    Ok(())
}

// ----------------------------------------------------------------- fuse

#[derive(Debug, Serialize)]
struct FuseDiagnostics {
    width: usize,
    height: usize,
    instances: usize,
    claimed: usize,
    unreached: usize,
}

pub fn fuse(args: FuseArgs) -> Result<(), CliError> {
    let seeds = load_labels(&args.seeds)?;
    let file = fs::File::open(&args.foreground).map_err(data(args.foreground.display()))?;
    let pgm = read_pgm(file).map_err(data(args.foreground.display()))?;
    let fg = Mask::from_vec(pgm.width, pgm.height, pgm.samples.iter().map(|&s| s != 0).collect())
        .map_err(data(args.foreground.display()))?;
    let (grown, report) = grow_instances(&seeds, &fg).map_err(data("fusion"))?;
    let mut buf = Vec::new();
    write_label_pgm(&mut buf, &grown).map_err(data("encoding output"))?;
    let diag = FuseDiagnostics {
        width: grown.width(),
        height: grown.height(),
        instances: grown.instance_ids().len(),
        claimed: report.claimed,
        unreached: report.unreached,
    };
    let diag_path = args.diagnostics.clone().unwrap_or_else(|| sibling(&args.out, ".json"));
    let mut out = Outputs::default();
    out.write(&args.out, &buf)?;
    out.write_json(&diag_path, &diag)?;
    out.commit();
    if report.unreached > 0 {
        eprintln!("warning: {} foreground pixels have no seed in their component", report.unreached);
    }
    Ok(())
}

// ------------------------------------------------------------ weightmap

#[derive(Debug, Serialize)]
struct WeightSidecar {
    format: &'static str,
    header_bytes: usize,
    sample: &'static str,
    width: usize,
    height: usize,
    threshold_px: f64,
    weight_inside: f64,
    weight_gap: f64,
    weight_else: f64,
}

pub fn weightmap(args: WeightmapArgs) -> Result<(), CliError> {
    if !(args.threshold >= 0.0 && args.threshold.is_finite()) {
        return Err(CliError::Usage(format!("invalid threshold {}", args.threshold)));
    }
    let labels = load_labels(&args.labels)?;
    let map = weight_map(&labels, args.threshold);
    let mut buf = Vec::new();
    write_weight_map(&mut buf, &map).map_err(data("encoding weight map"))?;
    let sidecar = WeightSidecar {
        format: std::str::from_utf8(WEIGHT_MAP_MAGIC).expect("ascii magic"),
        header_bytes: 16,
        sample: "f32le",
        width: map.width(),
        height: map.height(),
        threshold_px: args.threshold,
        weight_inside: WEIGHT_INSIDE,
        weight_gap: WEIGHT_GAP,
        weight_else: WEIGHT_ELSE,
    };
    let mut out = Outputs::default();
    out.write(&args.out, &buf)?;
    out.write_json(&sibling(&args.out, ".json"), &sidecar)?;
    out.commit();
    Ok(())
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Serialize)]
struct EvalDetails {
    n_images: usize,
    model: Option<PathBuf>,
}

fn write_summary_csv<W: Write>(mut w: W, s: &StudySummary) -> std::io::Result<()> {
    write!(
        w,
        "target_alpha,n_images,alpha_ref_mean,alpha_ref_sd,rel_error_raw_mean,rel_error_raw_sd,\
         rel_error_rdc_mean,rel_error_rdc_sd,rel_error_ellipse_mean,rel_error_ellipse_sd"
    )?;
    for t in &s.thresholds {
        write!(w, ",ap_{t:.2}_mean")?;
    }
    writeln!(w)?;
    for g in &s.groups {
        let rdc = g.rel_error_rdc.map(|m| (m.mean.to_string(), m.sd.to_string())).unwrap_or_default();
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            g.target_alpha.map(|t| t.to_string()).unwrap_or_default(),
            g.n_images,
            g.alpha_ref.mean,
            g.alpha_ref.sd,
            g.rel_error_raw.mean,
            g.rel_error_raw.sd,
            rdc.0,
            rdc.1,
            g.rel_error_ellipse.mean,
            g.rel_error_ellipse.sd
        )?;
        for a in &g.ap_mean {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let cfg: StudyConfig = read_config(args.config.as_deref())?;
    let predictor = match &args.model {
        Some(p) => Some(Predictor::new(&load_model(p)?).map_err(data(p.display()))?),
        None => None,
    };
    let scenes = names_with_suffix(&args.scenes, SCENE_SUFFIX)?;
    let preds = names_with_suffix(&args.pred, LABELS_SUFFIX)?;
    let missing_pred: Vec<_> = scenes.difference(&preds).cloned().collect();
    let missing_gt: Vec<_> = preds.difference(&scenes).cloned().collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = String::from("prediction and ground-truth ids differ");
        if !missing_pred.is_empty() {
            msg.push_str(&format!("\n  no prediction for: {}", missing_pred.join(", ")));
        }
        if !missing_gt.is_empty() {
            msg.push_str(&format!("\n  no scene for: {}", missing_gt.join(", ")));
        }
        return Err(CliError::Data(msg));
    }
    if scenes.is_empty() {
        return Err(CliError::Data(format!("no scenes in {}", args.scenes.display())));
    }
    let names: Vec<String> = scenes.into_iter().collect();
    let images = par::map(&names, |name| -> Result<ImageEval, CliError> {
        let scene = load_scene(&args.scenes, name)?;
        let pred = load_labels(&args.pred.join(format!("{name}{LABELS_SUFFIX}")))?;
        evaluate_image(name, &scene, &pred, predictor.as_ref(), &cfg).map_err(data(name))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&images, &cfg.thresholds, cfg.bin_width_mm);

    let mut out = Outputs::in_dir(&args.out)?;
    let mut buf = Vec::new();
    write_images_csv(&mut buf, &images, &cfg.thresholds).expect("in-memory write");
    out.write(&args.out.join("images.csv"), &buf)?;
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summary).expect("in-memory write");
    out.write(&args.out.join("summary.csv"), &buf)?;
    out.write_json(&args.out.join("summary.json"), &summary)?;
    let hists = [
        ("ref", Some(&summary.histogram_ref)),
        ("raw", Some(&summary.histogram_raw)),
        ("rdc", summary.histogram_rdc.as_ref()),
        ("ellipse", Some(&summary.histogram_ellipse)),
    ];
    for (tag, h) in hists {
        if let Some(h) = h {
            let mut buf = Vec::new();
            write_histogram_csv(&mut buf, h).expect("in-memory write");
            out.write(&args.out.join(format!("histogram_{tag}.csv")), &buf)?;
        }
    }
    let details = EvalDetails { n_images: images.len(), model: args.model.clone() };
    out.write_json(&args.out.join("manifest.json"), &Manifest::new("eval", None, &cfg, details))?;
    out.commit();
    for g in &summary.groups {
        eprintln!(
            "target {:>6}: {} images, alpha_rel_error raw {:.4} ± {:.4}{}, ellipse {:.4} ± {:.4}",
            g.target_alpha.map(|t| format!("{t}")).unwrap_or_else(|| "-".into()),
            g.n_images,
            g.rel_error_raw.mean,
            g.rel_error_raw.sd,
            g.rel_error_rdc
                .map(|m| format!(", rdc {:.4} ± {:.4}", m.mean, m.sd))
                .unwrap_or_default(),
            g.rel_error_ellipse.mean,
            g.rel_error_ellipse.sd
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_plan_names_and_streams_are_distinct() {
        let cfg = GenConfig { mode: SceneMode::Alpha, count: 3, ..GenConfig::default() };
        let plan = gen_plan(&cfg);
        assert_eq!(plan.len(), 12);
        assert_eq!(plan[0].0, "alpha0250_000");
        assert_eq!(plan[11].0, "alpha1000_002");
        let streams: BTreeSet<u64> = plan.iter().map(|p| p.2.index).collect();
        assert_eq!(streams.len(), 12);
        assert!(plan.iter().all(|p| p.1.width == bubbleid::synthgen::ALPHA_CANVAS_PX));
    }

    #[test]
    fn gen_config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<GenConfig>(r#"{"mode":"alpha","bogus":1}"#).is_err());
        let c: GenConfig = serde_json::from_str(r#"{"mode":"alpha","count":2}"#).unwrap();
        assert_eq!((c.mode, c.count, c.targets.len()), (SceneMode::Alpha, 2, 4));
    }
}
