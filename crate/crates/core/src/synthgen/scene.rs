//! Occlusion scene composition with ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shape::{sample_shape, BubbleShape, ShapeClass};
use super::SynthError;
use crate::geometry::{rasterize_set, sphere_volume_from_area, LabelMap, PixelScale, PixelSet};
use crate::par;

/// Independent rng stream for one scene of a seeded batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSeed {
    pub master: u64,
    pub index: u64,
}

impl SceneSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneMode {
    /// Two or three mutually overlapping bubbles (regressor training data).
    Rdc,
    /// Bubbles appended until a target gas fraction is reached.
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub depth_mm: f64,
    pub target_alpha: f64,
    /// Bubbles per overlap scene; `None` draws 2 or 3 per scene.
    pub count_bubbles: Option<u32>,
    pub visibility_min: f64,
    /// Allowed hidden-area fraction of every occluded bubble in overlap scenes.
    pub overlap_range: (f64, f64),
    pub size_range_mm: (f64, f64),
    /// Relative frequency of spherical, ellipsoidal and wobbling bubbles.
    pub class_weights: [f64; 3],
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            mm_per_px: 0.05,
            depth_mm: 30.0,
            target_alpha: 0.05,
            count_bubbles: None,
            visibility_min: 0.10,
            overlap_range: (0.10, 0.90),
            size_range_mm: (2.0, 7.0),
            class_weights: [1.0, 1.0, 1.0],
            max_attempts: 10_000,
        }
    }
}

/// Canvas side used for gas-fraction scenes. Large enough that the overshoot
/// of the last appended bubble stays a small fraction of the target.
pub const ALPHA_CANVAS_PX: usize = 640;

impl SceneConfig {
    pub fn rdc() -> Self {
        Self::default()
    }

    pub fn alpha(target_alpha: f64) -> Self {
        Self {
            width: ALPHA_CANVAS_PX,
            height: ALPHA_CANVAS_PX,
            target_alpha,
            ..Self::default()
        }
    }

    pub fn pixel_scale(&self) -> Result<PixelScale, SynthError> {
        PixelScale::new(self.mm_per_px)
            .ok_or_else(|| SynthError::InvalidRange(format!("pixel scale {}", self.mm_per_px)))
    }

    pub fn domain_volume_mm3(&self) -> f64 {
        self.width as f64 * self.height as f64 * self.mm_per_px * self.mm_per_px * self.depth_mm
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidRange("canvas must be non-empty".into()));
        }
        self.pixel_scale()?;
        if !(self.depth_mm > 0.0) {
            return Err(SynthError::InvalidRange(format!("depth {} mm", self.depth_mm)));
        }
        if !(0.0..1.0).contains(&self.visibility_min) {
            return Err(SynthError::InvalidRange(format!("visibility_min {}", self.visibility_min)));
        }
        let (lo, hi) = self.overlap_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(SynthError::InvalidRange(format!("overlap range [{lo}, {hi}]")));
        }
        if self.class_weights.iter().any(|w| !(*w >= 0.0)) || self.class_weights.iter().sum::<f64>() <= 0.0 {
            return Err(SynthError::InvalidRange("class weights".into()));
        }
        Ok(())
    }

    fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> ShapeClass {
        let total: f64 = self.class_weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (w, c) in self.class_weights.iter().zip(ShapeClass::ALL) {
            if u < *w {
                return c;
            }
            u -= w;
        }
        ShapeClass::Wobbling
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBubble {
    /// Instance id in `labels`; ids count from 1 at the front.
    pub id: u32,
    pub shape: BubbleShape,
    /// Outline center in pixel coordinates.
    pub center: (f64, f64),
    /// 0 is frontmost.
    pub depth_rank: usize,
    pub volume_mm3: f64,
    pub full: PixelSet,
    pub visible: PixelSet,
}

impl SceneBubble {
    pub fn hidden_fraction(&self) -> f64 {
        if self.full.is_empty() {
            0.0
        } else {
            1.0 - self.visible.len() as f64 / self.full.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub pixel_scale: PixelScale,
    pub depth_mm: f64,
    pub mode: SceneMode,
    pub seed: SceneSeed,
    pub target_alpha: Option<f64>,
    pub achieved_alpha: f64,
    /// Front to back.
    pub bubbles: Vec<SceneBubble>,
    /// Visible parts.
    pub labels: LabelMap,
}

impl Scene {
    pub fn domain_volume_mm3(&self) -> f64 {
        let s = self.pixel_scale.mm_per_px;
        self.width as f64 * self.height as f64 * s * s * self.depth_mm
    }

    pub fn frontmost(&self) -> Option<u32> {
        self.bubbles.first().map(|b| b.id)
    }

    pub fn bubble(&self, id: u32) -> Option<&SceneBubble> {
        self.bubbles.iter().find(|b| b.id == id)
    }

    pub fn to_record(&self) -> SceneRecord {
        SceneRecord {
            width: self.width,
            height: self.height,
            mm_per_px: self.pixel_scale.mm_per_px,
            depth_mm: self.depth_mm,
            mode: self.mode,
            seed: self.seed,
            target_alpha: self.target_alpha,
            achieved_alpha: self.achieved_alpha,
            frontmost: self.frontmost(),
            bubbles: self
                .bubbles
                .iter()
                .map(|b| BubbleRecord {
                    id: b.id,
                    center: [b.center.0, b.center.1],
                    k: b.shape.radii_mm.len(),
                    depth_rank: b.depth_rank,
                    volume_mm3: b.volume_mm3,
                    full_area_px: b.full.len(),
                    visible_area_px: b.visible.len(),
                    shape: b.shape.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a scene from its JSON record and visible label map. Full
    /// masks are re-rasterized from the stored outlines.
    pub fn from_record(record: &SceneRecord, labels: LabelMap) -> Result<Self, SynthError> {
        if labels.dims() != (record.width, record.height) {
            return Err(SynthError::InvalidRange(format!(
                "label map is {:?}, record says {}x{}",
                labels.dims(),
                record.width,
                record.height
            )));
        }
        let scale = PixelScale::new(record.mm_per_px)
            .ok_or_else(|| SynthError::InvalidRange(format!("pixel scale {}", record.mm_per_px)))?;
        let mut visible: std::collections::BTreeMap<u32, PixelSet> =
            labels.regions().into_iter().map(|r| (r.id, r.pixels)).collect();
        let mut bubbles = Vec::with_capacity(record.bubbles.len());
        for b in &record.bubbles {
            let center = (b.center[0], b.center[1]);
            let full = rasterize_set(
                &b.shape.polygon_at(center).to_px(scale),
                record.width,
                record.height,
            )?;
            bubbles.push(SceneBubble {
                id: b.id,
                shape: b.shape.clone(),
                center,
                depth_rank: b.depth_rank,
                volume_mm3: b.volume_mm3,
                full,
                visible: visible.remove(&b.id).unwrap_or_default(),
            });
        }
        bubbles.sort_by_key(|b| b.depth_rank);
        Ok(Scene {
            width: record.width,
            height: record.height,
            pixel_scale: scale,
            depth_mm: record.depth_mm,
            mode: record.mode,
            seed: record.seed,
            target_alpha: record.target_alpha,
            achieved_alpha: record.achieved_alpha,
            bubbles,
            labels,
        })
    }
}

/// JSON ground truth of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
    pub depth_mm: f64,
    pub mode: SceneMode,
    pub seed: SceneSeed,
    pub target_alpha: Option<f64>,
    pub achieved_alpha: f64,
    pub frontmost: Option<u32>,
    pub bubbles: Vec<BubbleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleRecord {
    pub id: u32,
    pub center: [f64; 2],
    pub k: usize,
    pub depth_rank: usize,
    pub volume_mm3: f64,
    pub full_area_px: usize,
    pub visible_area_px: usize,
    #[serde(flatten)]
    pub shape: BubbleShape,
}

struct Placed {
    shape: BubbleShape,
    center: (f64, f64),
    key: f64,
    full: PixelSet,
    visible: usize,
}

/// Depth-keyed owner buffer; a smaller key is closer to the camera.
struct Composer {
    width: usize,
    height: usize,
    scale: PixelScale,
    owner: Vec<u32>,
    placed: Vec<Placed>,
}

impl Composer {
    fn new(width: usize, height: usize, scale: PixelScale) -> Self {
        Self {
            width,
            height,
            scale,
            owner: vec![0; width * height],
            placed: Vec::new(),
        }
    }

    /// Pixels the candidate would own, and pixels each placed bubble would lose.
    fn evaluate(&self, full: &PixelSet, key: f64, lost: &mut Vec<usize>) -> usize {
        lost.clear();
        lost.resize(self.placed.len(), 0);
        let mut gained = 0;
        for &i in full.indices() {
            let o = self.owner[i as usize];
            if o == 0 {
                gained += 1;
            } else if key < self.placed[o as usize - 1].key {
                gained += 1;
                lost[o as usize - 1] += 1;
            }
        }
        gained
    }

    fn commit(&mut self, shape: BubbleShape, center: (f64, f64), key: f64, full: PixelSet) {
        let me = self.placed.len() as u32 + 1;
        let mut gained = 0;
        for &i in full.indices() {
            let o = self.owner[i as usize];
            if o == 0 || key < self.placed[o as usize - 1].key {
                if o != 0 {
                    self.placed[o as usize - 1].visible -= 1;
                }
                self.owner[i as usize] = me;
                gained += 1;
            }
        }
        self.placed.push(Placed {
            shape,
            center,
            key,
            full,
            visible: gained,
        });
    }

    fn volume(&self, p: &Placed) -> f64 {
        sphere_volume_from_area(self.scale.area_mm2(p.full.len()))
    }

    fn total_volume(&self) -> f64 {
        self.placed.iter().map(|p| self.volume(p)).sum()
    }

    fn rasterize(&self, shape: &BubbleShape, center: (f64, f64)) -> Result<PixelSet, SynthError> {
        Ok(rasterize_set(
            &shape.polygon_at(center).to_px(self.scale),
            self.width,
            self.height,
        )?)
    }

    /// Valid center interval `(lo_row, hi_row, lo_col, hi_col)` keeping the
    /// whole outline on the canvas, or `None` if the shape cannot fit.
    fn center_bounds(&self, shape: &BubbleShape) -> Option<(f64, f64, f64, f64)> {
        let m = shape.max_radius_mm() / self.scale.mm_per_px + 1.0;
        let (hr, hc) = (self.height as f64 - 1.0 - m, self.width as f64 - 1.0 - m);
        (m <= hr && m <= hc).then_some((m, hr, m, hc))
    }

    fn finish(self, config: &SceneConfig, mode: SceneMode, seed: SceneSeed, target: Option<f64>) -> Scene {
        let mut order: Vec<usize> = (0..self.placed.len()).collect();
        order.sort_by(|&a, &b| self.placed[a].key.total_cmp(&self.placed[b].key).then(a.cmp(&b)));
        let mut new_id = vec![0u32; self.placed.len() + 1];
        for (rank, &i) in order.iter().enumerate() {
            new_id[i + 1] = rank as u32 + 1;
        }
        let ids: Vec<u32> = self.owner.iter().map(|&o| new_id[o as usize]).collect();
        let mut visible: Vec<Vec<u32>> = vec![Vec::new(); self.placed.len()];
        for (i, &id) in ids.iter().enumerate() {
            if id != 0 {
                visible[id as usize - 1].push(i as u32);
            }
        }
        let labels = LabelMap::from_vec(self.width, self.height, ids).expect("valid dims");
        let achieved = self.total_volume() / config.domain_volume_mm3();
        let mut placed: Vec<Option<Placed>> = self.placed.into_iter().map(Some).collect();
        let bubbles = order
            .iter()
            .enumerate()
            .map(|(rank, &i)| {
                let p = placed[i].take().expect("each index once");
                let volume_mm3 = sphere_volume_from_area(self.scale.area_mm2(p.full.len()));
                debug_assert_eq!(visible[rank].len(), p.visible);
                SceneBubble {
                    id: rank as u32 + 1,
                    shape: p.shape,
                    center: p.center,
                    depth_rank: rank,
                    volume_mm3,
                    full: p.full,
                    visible: PixelSet::from_sorted(std::mem::take(&mut visible[rank])),
                }
            })
            .collect();
        Scene {
            width: self.width,
            height: self.height,
            pixel_scale: self.scale,
            depth_mm: config.depth_mm,
            mode,
            seed,
            target_alpha: target,
            achieved_alpha: achieved,
            bubbles,
            labels,
        }
    }
}

fn sample_fitting_shape<R: Rng + ?Sized>(
    config: &SceneConfig,
    composer: &Composer,
    rng: &mut R,
) -> Result<Option<(BubbleShape, (f64, f64, f64, f64))>, SynthError> {
    let class = config.sample_class(rng);
    let shape = sample_shape(config.size_range_mm, class, rng)?;
    Ok(composer.center_bounds(&shape).map(|b| (shape, b)))
}

/// Two or three bubbles stacked so that every occluded bubble hides a
/// fraction of its area inside `overlap_range`.
pub fn compose_rdc_scene(config: &SceneConfig, seed: SceneSeed) -> Result<Scene, SynthError> {
    config.validate()?;
    let scale = config.pixel_scale()?;
    let mut rng = seed.rng();
    let count = match config.count_bubbles {
        Some(n @ (2 | 3)) => n as usize,
        Some(n) => {
            return Err(SynthError::InvalidRange(format!("overlap scenes need 2 or 3 bubbles, got {n}")))
        }
        None => rng.random_range(2..=3),
    };
    let (lo, hi) = config.overlap_range;
    'attempt: for _ in 0..config.max_attempts {
        let mut composer = Composer::new(config.width, config.height, scale);
        for j in 0..count {
            let Some((shape, (r0, r1, c0, c1))) = sample_fitting_shape(config, &composer, &mut rng)? else {
                continue 'attempt;
            };
            let center = if j == 0 {
                (rng.random_range(r0..=r1), rng.random_range(c0..=c1))
            } else {
                let anchor = &composer.placed[rng.random_range(0..j)];
                let reach = (anchor.shape.equivalent_diameter_mm + shape.equivalent_diameter_mm)
                    / 2.0
                    / scale.mm_per_px;
                let dist = rng.random_range(0.0..1.0) * reach;
                let ang = rng.random_range(0.0..std::f64::consts::TAU);
                let c = (anchor.center.0 - dist * ang.sin(), anchor.center.1 + dist * ang.cos());
                if !(r0..=r1).contains(&c.0) || !(c0..=c1).contains(&c.1) {
                    continue 'attempt;
                }
                c
            };
            let key = rng.random::<f64>();
            let full = composer.rasterize(&shape, center)?;
            composer.commit(shape, center, key, full);
        }
        let front = (0..count)
            .min_by(|&a, &b| composer.placed[a].key.total_cmp(&composer.placed[b].key))
            .expect("count >= 2");
        let ok = composer.placed.iter().enumerate().all(|(i, p)| {
            let full = p.full.len() as f64;
            let vis = p.visible as f64;
            if full == 0.0 || vis < config.visibility_min * full {
                return false;
            }
            i == front || (lo..=hi).contains(&(1.0 - vis / full))
        });
        if ok {
            return Ok(composer.finish(config, SceneMode::Rdc, seed, None));
        }
    }
    Err(SynthError::PlacementFailure {
        seed,
        attempts: config.max_attempts,
        placed: 0,
    })
}

/// Bubbles appended at random positions and depths until the gas fraction
/// reaches `target_alpha`; every bubble keeps at least `visibility_min` of
/// its area visible.
pub fn compose_alpha_scene(config: &SceneConfig, seed: SceneSeed) -> Result<Scene, SynthError> {
    config.validate()?;
    if !(config.target_alpha > 0.0 && config.target_alpha <= 0.15) {
        return Err(SynthError::InvalidRange(format!(
            "target alpha {} outside (0, 0.15]",
            config.target_alpha
        )));
    }
    let scale = config.pixel_scale()?;
    let mut rng = seed.rng();
    let domain = config.domain_volume_mm3();
    let mut composer = Composer::new(config.width, config.height, scale);
    let mut lost = Vec::new();
    let mut volume = 0.0;
    while volume / domain < config.target_alpha {
        let mut fitted = None;
        for _ in 0..config.max_attempts {
            if let Some(s) = sample_fitting_shape(config, &composer, &mut rng)? {
                fitted = Some(s);
                break;
            }
        }
        let fail = |placed| SynthError::PlacementFailure {
            seed,
            attempts: config.max_attempts,
            placed,
        };
        let (shape, (r0, r1, c0, c1)) = fitted.ok_or_else(|| fail(composer.placed.len()))?;
        let mut done = false;
        for _ in 0..config.max_attempts {
            let center = (rng.random_range(r0..=r1), rng.random_range(c0..=c1));
            let key = rng.random::<f64>();
            let full = composer.rasterize(&shape, center)?;
            if full.is_empty() {
                continue;
            }
            let gained = composer.evaluate(&full, key, &mut lost);
            let min = config.visibility_min;
            let ok = gained as f64 >= min * full.len() as f64
                && composer
                    .placed
                    .iter()
                    .zip(&lost)
                    .all(|(p, &l)| (p.visible - l) as f64 >= min * p.full.len() as f64);
            if ok {
                composer.commit(shape.clone(), center, key, full);
                done = true;
                break;
            }
        }
        if !done {
            return Err(fail(composer.placed.len()));
        }
        volume = composer.total_volume();
    }
    Ok(composer.finish(config, SceneMode::Alpha, seed, Some(config.target_alpha)))
}

pub fn compose_scene(mode: SceneMode, config: &SceneConfig, seed: SceneSeed) -> Result<Scene, SynthError> {
    match mode {
        SceneMode::Rdc => compose_rdc_scene(config, seed),
        SceneMode::Alpha => compose_alpha_scene(config, seed),
    }
}

/// Scenes for stream indices `first..first + count`, in index order.
pub fn generate_batch(
    mode: SceneMode,
    config: &SceneConfig,
    master_seed: u64,
    first: u64,
    count: usize,
) -> Vec<Result<Scene, SynthError>> {
    par::map_range(count, |i| {
        compose_scene(mode, config, SceneSeed::new(master_seed, first + i as u64))
    })
}
