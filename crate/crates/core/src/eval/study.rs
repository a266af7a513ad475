//! Per-image evaluation of the reconstruction methods and batch summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ap_curve, default_thresholds, Instance, Matching, SizeHistogram};
use crate::ellipse::reconstruct_ellipse;
use crate::geometry::{equivalent_diameter, GeometryError, LabelMap};
use crate::par;
use crate::rdc::{correct_polygon, CorrectionPolicy, Predictor};
use crate::synthgen::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub thresholds: Vec<f64>,
    pub policy: CorrectionPolicy,
    pub matching: Matching,
    pub bin_width_mm: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            policy: CorrectionPolicy::Flagged,
            matching: Matching::Greedy,
            bin_width_mm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub name: String,
    pub target_alpha: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub alpha_ref: f64,
    pub alpha_raw: f64,
    pub alpha_rdc: Option<f64>,
    pub alpha_ellipse: f64,
    pub ellipse_fallbacks: usize,
    /// Instances where no ellipse could be fitted; their visible area was used.
    pub ellipse_failures: usize,
    /// AP of the predicted visible instances against the visible ground truth.
    pub ap: Vec<f64>,
    pub d_eq_ref_mm: Vec<f64>,
    pub d_eq_raw_mm: Vec<f64>,
    pub d_eq_rdc_mm: Vec<f64>,
    pub d_eq_ellipse_mm: Vec<f64>,
}

impl ImageEval {
    pub fn rel_raw(&self) -> f64 {
        self.alpha_raw / self.alpha_ref
    }

    pub fn rel_rdc(&self) -> Option<f64> {
        self.alpha_rdc.map(|a| a / self.alpha_ref)
    }

    pub fn rel_ellipse(&self) -> f64 {
        self.alpha_ellipse / self.alpha_ref
    }
}

/// Evaluates one predicted visible label map against a scene: AP over the
/// thresholds and gas fractions without correction, with the regressor (if
/// given) and with ellipse fitting.
pub fn evaluate_image(
    name: &str,
    scene: &Scene,
    pred: &LabelMap,
    predictor: Option<&Predictor>,
    config: &StudyConfig,
) -> Result<ImageEval, GeometryError> {
    if pred.dims() != scene.labels.dims() {
        return Err(GeometryError::DimensionMismatch { a: pred.dims(), b: scene.labels.dims() });
    }
    let scale = scene.pixel_scale;
    let domain = scene.domain_volume_mm3();
    let regions = pred.regions();
    let pred_sets: Vec<_> = regions.iter().map(|r| r.pixels.clone()).collect();
    let gt_sets: Vec<_> = scene.bubbles.iter().map(|b| b.visible.clone()).collect();
    let ap = ap_curve(&pred_sets, &gt_sets, scene.width, &config.thresholds, config.matching);

    let per_instance = par::map(&regions, |r| {
        let raw = Instance::Mask(r.pixels.len());
        let rdc = predictor.map(|p| match correct_polygon(p, pred, r.id, scale, config.policy) {
            Ok(c) => Instance::Polygon(c.polygon),
            Err(_) => raw.clone(),
        });
        let (ell, fallback, failed) = match reconstruct_ellipse(pred, r.id) {
            Ok(rec) => (Instance::Ellipse(rec.ellipse), rec.fallback, false),
            Err(_) => (raw.clone(), false, true),
        };
        (raw, rdc, ell, fallback, failed)
    });

    let alpha = |insts: &mut dyn Iterator<Item = &Instance>| -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut d = Vec::new();
        for i in insts {
            v += i.volume_mm3(scale);
            d.push(equivalent_diameter(i.area_mm2(scale)));
        }
        (v / domain, d)
    };
    let (alpha_raw, d_raw) = alpha(&mut per_instance.iter().map(|x| &x.0));
    let (alpha_rdc, d_rdc) = if predictor.is_some() {
        let (a, d) = alpha(&mut per_instance.iter().filter_map(|x| x.1.as_ref()));
        (Some(a), d)
    } else {
        (None, Vec::new())
    };
    let (alpha_ellipse, d_ell) = alpha(&mut per_instance.iter().map(|x| &x.2));
    let alpha_ref = scene.bubbles.iter().map(|b| b.volume_mm3).sum::<f64>() / domain;
    let d_ref = scene
        .bubbles
        .iter()
        .map(|b| equivalent_diameter(scale.area_mm2(b.full.len())))
        .collect();
    Ok(ImageEval {
        name: name.to_string(),
        target_alpha: scene.target_alpha,
        n_gt: scene.bubbles.len(),
        n_pred: regions.len(),
        alpha_ref,
        alpha_raw,
        alpha_rdc,
        alpha_ellipse,
        ellipse_fallbacks: per_instance.iter().filter(|x| x.3).count(),
        ellipse_failures: per_instance.iter().filter(|x| x.4).count(),
        ap,
        d_eq_ref_mm: d_ref,
        d_eq_raw_mm: d_raw,
        d_eq_rdc_mm: d_rdc,
        d_eq_ellipse_mm: d_ell,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub target_alpha: Option<f64>,
    pub n_images: usize,
    pub alpha_ref: MeanSd,
    pub rel_error_raw: MeanSd,
    pub rel_error_rdc: Option<MeanSd>,
    pub rel_error_ellipse: MeanSd,
    pub ap_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub thresholds: Vec<f64>,
    pub groups: Vec<GroupSummary>,
    pub histogram_ref: SizeHistogram,
    pub histogram_raw: SizeHistogram,
    pub histogram_rdc: Option<SizeHistogram>,
    pub histogram_ellipse: SizeHistogram,
}

/// Groups images by target gas fraction (ascending, untargeted last).
pub fn summarize(images: &[ImageEval], thresholds: &[f64], bin_width_mm: f64) -> StudySummary {
    let mut keys: Vec<Option<f64>> = Vec::new();
    for im in images {
        if !keys.contains(&im.target_alpha) {
            keys.push(im.target_alpha);
        }
    }
    keys.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let with_rdc = !images.is_empty() && images.iter().all(|im| im.alpha_rdc.is_some());
    let groups = keys
        .into_iter()
        .map(|key| {
            let g: Vec<&ImageEval> = images.iter().filter(|im| im.target_alpha == key).collect();
            let col = |f: &dyn Fn(&ImageEval) -> f64| MeanSd::of(&g.iter().map(|im| f(im)).collect::<Vec<_>>());
            GroupSummary {
                target_alpha: key,
                n_images: g.len(),
                alpha_ref: col(&|im| im.alpha_ref),
                rel_error_raw: col(&|im| im.rel_raw()),
                rel_error_rdc: with_rdc.then(|| col(&|im| im.rel_rdc().expect("checked"))),
                rel_error_ellipse: col(&|im| im.rel_ellipse()),
                ap_mean: (0..thresholds.len())
                    .map(|t| g.iter().map(|im| im.ap[t]).sum::<f64>() / g.len() as f64)
                    .collect(),
            }
        })
        .collect();
    let hist = |f: &dyn Fn(&ImageEval) -> &[f64]| {
        let mut h = SizeHistogram { bin_width_mm, counts: Vec::new() };
        for im in images {
            for &d in f(im) {
                h.add(d);
            }
        }
        h
    };
    StudySummary {
        thresholds: thresholds.to_vec(),
        groups,
        histogram_ref: hist(&|im| &im.d_eq_ref_mm),
        histogram_raw: hist(&|im| &im.d_eq_raw_mm),
        histogram_rdc: with_rdc.then(|| hist(&|im| &im.d_eq_rdc_mm)),
        histogram_ellipse: hist(&|im| &im.d_eq_ellipse_mm),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per image.
pub fn write_images_csv<W: Write>(mut w: W, images: &[ImageEval], thresholds: &[f64]) -> std::io::Result<()> {
    write!(
        w,
        "image,target_alpha,n_gt,n_pred,alpha_ref,alpha_pred_raw,alpha_pred_rdc,alpha_pred_ellipse,\
         rel_error_raw,rel_error_rdc,rel_error_ellipse,ellipse_fallbacks"
    )?;
    for t in thresholds {
        write!(w, ",ap_{t:.2}")?;
    }
    writeln!(w)?;
    for im in images {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            im.name,
            opt(im.target_alpha),
            im.n_gt,
            im.n_pred,
            im.alpha_ref,
            im.alpha_raw,
            opt(im.alpha_rdc),
            im.alpha_ellipse,
            im.rel_raw(),
            opt(im.rel_rdc()),
            im.rel_ellipse(),
            im.ellipse_fallbacks
        )?;
        for a in &im.ap {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(mut w: W, hist: &SizeHistogram) -> std::io::Result<()> {
    writeln!(w, "bin_left_mm,count")?;
    for (i, c) in hist.counts.iter().enumerate() {
        writeln!(w, "{},{}", hist.bin_left_mm(i), c)?;
    }
    Ok(())
}
