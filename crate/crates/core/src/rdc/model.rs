//! Trained regressor: serialization, inference and polygon correction.

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::samples::{segment_center, visible_rays};
use super::RdcError;
use crate::geometry::{LabelMap, PixelScale, StarPolygon, Unit};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init: String,
    #[serde(default)]
    pub n_train: usize,
    #[serde(default)]
    pub n_val: usize,
}

/// Model file contents; radii in and out are millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcModel {
    pub version: u32,
    pub k: usize,
    pub unit: Unit,
    pub activation: String,
    pub layers: Vec<LayerRecord>,
    pub train_meta: TrainMeta,
}

impl RdcModel {
    pub fn from_mlp(net: &Mlp, meta: TrainMeta) -> Self {
        let layers = (0..net.n_layers())
            .map(|l| {
                let (w, b) = net.layer(l);
                LayerRecord {
                    rows: net.sizes()[l + 1],
                    cols: net.sizes()[l],
                    weights: w.to_vec(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        Self {
            version: MODEL_VERSION,
            k: net.n_in(),
            unit: Unit::Mm,
            activation: "relu".into(),
            layers,
            train_meta: meta,
        }
    }

    /// Validates the layer chain and rebuilds the compute network.
    pub fn to_mlp(&self) -> Result<Mlp, RdcError> {
        let bad = |m: &str| Err(RdcError::InvalidModel(m.to_string()));
        if self.version != MODEL_VERSION {
            return bad(&format!("unsupported version {}", self.version));
        }
        if self.unit != Unit::Mm || self.activation != "relu" {
            return bad("model must be relu with mm units");
        }
        if self.layers.is_empty() {
            return bad("no layers");
        }
        let mut sizes = vec![self.layers[0].cols];
        let mut params = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.cols != *sizes.last().expect("non-empty")
                || l.weights.len() != l.rows * l.cols
                || l.bias.len() != l.rows
            {
                return bad(&format!("layer {i} has inconsistent shape"));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return bad(&format!("layer {i} has non-finite parameters"));
            }
            sizes.push(l.rows);
            params.extend_from_slice(&l.weights);
            params.extend_from_slice(&l.bias);
        }
        if sizes[0] != self.k || *sizes.last().expect("non-empty") != self.k {
            return bad("layer widths do not match k");
        }
        Ok(Mlp::from_parts(&sizes, params).expect("sizes checked"))
    }

    pub fn from_json(text: &str) -> Result<Self, RdcError> {
        let model: RdcModel =
            serde_json::from_str(text).map_err(|e| RdcError::InvalidModel(e.to_string()))?;
        model.to_mlp()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }
}

/// Inference wrapper holding the rebuilt network.
#[derive(Debug, Clone)]
pub struct Predictor {
    net: Mlp,
}

impl Predictor {
    pub fn new(model: &RdcModel) -> Result<Self, RdcError> {
        Ok(Self { net: model.to_mlp()? })
    }

    pub fn k(&self) -> usize {
        self.net.n_in()
    }

    /// Corrected radii (mm) for visible radii (mm), clamped at zero.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, RdcError> {
        if input.len() != self.k() {
            return Err(RdcError::InputLength { expected: self.k(), got: input.len() });
        }
        Ok(self.predict_batch(input, 1))
    }

    /// Row-major batch of `n` inputs.
    pub fn predict_batch(&self, inputs: &[f64], n: usize) -> Vec<f64> {
        let mut y = self.net.forward(inputs, n);
        for v in &mut y {
            *v = v.max(0.0);
        }
        y
    }
}

pub fn predict(model: &RdcModel, input: &[f64]) -> Result<Vec<f64>, RdcError> {
    Predictor::new(model)?.predict(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionPolicy {
    /// Replace only directions whose visible ray ended on another instance.
    #[default]
    Flagged,
    /// Replace every direction.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    /// Corrected polygon, radii in mm, center in px.
    pub polygon: StarPolygon,
    /// Visible polygon, radii in mm.
    pub visible: StarPolygon,
    pub flagged: Vec<bool>,
}

/// Combines visible radii and predictions under `policy`; the result is
/// never shorter than the visible radius.
pub fn merge_radii(visible: &[f64], predicted: &[f64], flagged: &[bool], policy: CorrectionPolicy) -> Vec<f64> {
    visible
        .iter()
        .zip(predicted)
        .zip(flagged)
        .map(|((&v, &p), &f)| match (policy, f) {
            (CorrectionPolicy::Flagged, false) => v,
            _ => p.max(v),
        })
        .collect()
}

/// Visible polygon of instance `id` from its segment center, extended where
/// hidden by the regressor.
pub fn correct_polygon(
    predictor: &Predictor,
    labels: &LabelMap,
    id: u32,
    scale: PixelScale,
    policy: CorrectionPolicy,
) -> Result<Correction, RdcError> {
    let region = labels.region(id).ok_or(RdcError::DegenerateSegment(id))?;
    let center = segment_center(&region.pixels, labels.width()).ok_or(RdcError::DegenerateSegment(id))?;
    let (hits, flagged) = visible_rays(labels, id, center, predictor.k());
    let visible: Vec<f64> = hits.iter().map(|h| h.radius * scale.mm_per_px).collect();
    let radii = if policy == CorrectionPolicy::Flagged && !flagged.iter().any(|&f| f) {
        visible.clone()
    } else {
        merge_radii(&visible, &predictor.predict(&visible)?, &flagged, policy)
    };
    Ok(Correction {
        polygon: StarPolygon { center, radii, unit: Unit::Mm },
        visible: StarPolygon { center, radii: visible, unit: Unit::Mm },
        flagged,
    })
}
