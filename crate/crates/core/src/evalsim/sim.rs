//! Synthetic scenario generator: ground truth, noisy detections, appearance
//! embeddings and camera transforms, all deterministic under a seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::appearance::{Embedding, EmbeddingTable};
use crate::camera::{warp_box, AffineTransform, TransformTable};
use crate::model::{BBox, Detection, Entry, Trajectory};
use crate::{Error, Result};

/// One simulated object: constant-velocity motion with optional process
/// noise, alive on [spawn, despawn], undetectable inside occlusion windows.
#[derive(Debug, Clone)]
pub struct ObjectSpec {
    pub class_id: u32,
    pub spawn: i64,
    pub despawn: i64,
    pub initial_box: BBox,
    /// Pixels per frame.
    pub velocity: (f64, f64),
    /// Std of the per-frame Gaussian velocity perturbation.
    pub process_noise_std: f64,
    /// (start frame, length) windows with no detections; ground truth keeps
    /// the boxes.
    pub occlusions: Vec<(i64, i64)>,
}

/// Detector error model.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub miss_prob: f64,
    pub duplicate_prob: f64,
    /// Localization noise std as a fraction of the box height.
    pub localization_std_frac: f64,
    /// Confidence sensitivity to localization error.
    pub confidence_kappa: f64,
    /// Std of the additive confidence noise.
    pub confidence_noise_std: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            miss_prob: 0.1,
            duplicate_prob: 0.05,
            localization_std_frac: 0.05,
            confidence_kappa: 2.0,
            confidence_noise_std: 0.05,
        }
    }
}

/// Appearance embedding model: one mean vector per identity, Gaussian
/// within-identity noise, re-normalized samples.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub dim: usize,
    /// Per-object identity means; generated from the seed when empty.
    pub identity_means: Vec<Vec<f64>>,
    pub within_std: f64,
}

impl Default for EmbeddingModel {
    fn default() -> Self {
        EmbeddingModel {
            dim: 16,
            identity_means: Vec::new(),
            within_std: 0.1,
        }
    }
}

/// Constant per-frame camera drift.
#[derive(Debug, Clone)]
pub struct CameraModel {
    pub drift: AffineTransform,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            drift: AffineTransform::identity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub num_frames: i64,
    pub objects: Vec<ObjectSpec>,
    pub detector: DetectorModel,
    pub embedding: EmbeddingModel,
    pub camera: CameraModel,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 1 {
            return Err(Error::input("scenario needs at least one frame"));
        }
        if self.objects.is_empty() {
            return Err(Error::input("scenario needs at least one object"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            o.initial_box.validate()?;
            if !(1 <= o.spawn && o.spawn < o.despawn && o.despawn <= self.num_frames) {
                return Err(Error::input(format!(
                    "object {i}: spawn/despawn ({}, {}) out of range",
                    o.spawn, o.despawn
                )));
            }
            if o.process_noise_std < 0.0 {
                return Err(Error::input(format!("object {i}: negative process noise")));
            }
        }
        let d = &self.detector;
        for (name, p) in [("miss_prob", d.miss_prob), ("duplicate_prob", d.duplicate_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("{name} {p} outside [0, 1]")));
            }
        }
        if d.localization_std_frac < 0.0 || d.confidence_noise_std < 0.0 {
            return Err(Error::input("detector noise stds must be non-negative"));
        }
        if self.embedding.dim == 0 {
            return Err(Error::input("embedding dimension must be positive"));
        }
        if !self.embedding.identity_means.is_empty() {
            if self.embedding.identity_means.len() != self.objects.len() {
                return Err(Error::input(
                    "identity_means must have one vector per object",
                ));
            }
            if self
                .embedding
                .identity_means
                .iter()
                .any(|m| m.len() != self.embedding.dim)
            {
                return Err(Error::input("identity mean dimension mismatch"));
            }
        }
        Ok(())
    }

    /// Evenly laid out scenario: objects on a grid, classes assigned round
    /// robin, velocities drawn from the seed. With `occlusion = (min, max)`
    /// every object gets one undetectable window of seeded length.
    pub fn layout(
        num_objects: usize,
        classes: &[u32],
        num_frames: i64,
        detector: DetectorModel,
        drift: AffineTransform,
        seed: u64,
        occlusion: Option<(i64, i64)>,
    ) -> Result<ScenarioSpec> {
        if num_objects == 0 || classes.is_empty() {
            return Err(Error::input("layout needs objects and classes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
        let mut objects = Vec::with_capacity(num_objects);
        for i in 0..num_objects {
            let class_id = classes[i % classes.len()];
            let col = (i % 5) as f64;
            let row = (i / 5) as f64;
            let (w, h) = if class_id == 1 { (18.0, 42.0) } else { (52.0, 40.0) };
            let initial_box = BBox::new(120.0 + 320.0 * col, 140.0 + 360.0 * row, w, h)?;
            let velocity = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let occlusions = match occlusion {
                Some((lo, hi)) => {
                    let len = rng.random_range(lo..=hi);
                    let latest_start = (num_frames - len - 10).max(20);
                    let start = rng.random_range(20..=latest_start.max(21));
                    vec![(start, len)]
                }
                None => Vec::new(),
            };
            objects.push(ObjectSpec {
                class_id,
                spawn: 1,
                despawn: num_frames,
                initial_box,
                velocity,
                process_noise_std: 0.02,
                occlusions,
            });
        }
        Ok(ScenarioSpec {
            num_frames,
            objects,
            detector,
            embedding: EmbeddingModel::default(),
            camera: CameraModel { drift },
            seed,
        })
    }
}

/// Everything a scenario produces, in memory. The io module serializes each
/// piece to its file format.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub ground_truth: Vec<Trajectory>,
    pub detections: Vec<Detection>,
    pub embeddings: EmbeddingTable,
    pub transforms: TransformTable,
}

fn occluded(object: &ObjectSpec, frame: i64) -> bool {
    object
        .occlusions
        .iter()
        .any(|(start, len)| frame >= *start && frame < start + len)
}

/// Runs the scenario: world motion, camera drift, detector and embedding
/// sampling. Deterministic for a fixed spec.
pub fn simulate(spec: &ScenarioSpec) -> Result<SimOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit_normal = Normal::new(0.0, 1.0).map_err(|e| Error::numerical(e.to_string()))?;

    // identity means, generated when not provided
    let means: Vec<Embedding> = if spec.embedding.identity_means.is_empty() {
        (0..spec.objects.len())
            .map(|_| {
                let v: Vec<f64> = (0..spec.embedding.dim)
                    .map(|_| unit_normal.sample(&mut rng))
                    .collect();
                Embedding::new(v)
            })
            .collect::<Result<_>>()?
    } else {
        spec.embedding
            .identity_means
            .iter()
            .map(|m| Embedding::new(m.clone()))
            .collect::<Result<_>>()?
    };

    // world motion per object: constant velocity plus velocity noise
    let mut world: Vec<Vec<(i64, BBox)>> = Vec::with_capacity(spec.objects.len());
    for o in &spec.objects {
        let mut boxes = Vec::with_capacity((o.despawn - o.spawn + 1) as usize);
        let (mut x, mut y) = (o.initial_box.left, o.initial_box.top);
        let (mut vx, mut vy) = o.velocity;
        for frame in o.spawn..=o.despawn {
            boxes.push((
                frame,
                BBox {
                    left: x,
                    top: y,
                    width: o.initial_box.width,
                    height: o.initial_box.height,
                },
            ));
            if o.process_noise_std > 0.0 {
                vx += unit_normal.sample(&mut rng) * o.process_noise_std;
                vy += unit_normal.sample(&mut rng) * o.process_noise_std;
            }
            x += vx;
            y += vy;
        }
        world.push(boxes);
    }

    // cumulative camera transform per frame
    let drift = spec.camera.drift;
    let mut transforms = TransformTable::new();
    let mut cumulative: Vec<AffineTransform> = Vec::with_capacity(spec.num_frames as usize + 1);
    cumulative.push(AffineTransform::identity()); // frame 1
    for frame in 2..=spec.num_frames {
        let prev = cumulative[(frame - 2) as usize];
        cumulative.push(drift.compose(&prev));
        if !drift.is_identity() {
            transforms.insert(frame, drift);
        }
    }

    // ground truth in camera coordinates
    let mut ground_truth = Vec::with_capacity(spec.objects.len());
    for (oi, o) in spec.objects.iter().enumerate() {
        let mut entries = Vec::new();
        for (frame, world_box) in &world[oi] {
            let cam = &cumulative[(*frame - 1) as usize];
            let rendered = if cam.is_identity() {
                *world_box
            } else {
                warp_box(cam, world_box)?
            };
            entries.push(Entry::new(*frame, rendered, 1.0, o.class_id));
        }
        ground_truth.push(Trajectory::from_entries(oi as i64 + 1, entries));
    }

    // detections with misses, duplicates, localization noise and
    // error-correlated confidence
    let det = &spec.detector;
    let mut detections = Vec::new();
    let mut embeddings = EmbeddingTable::new(spec.embedding.dim);
    for frame in 1..=spec.num_frames {
        let mut det_idx = 0usize;
        for (oi, o) in spec.objects.iter().enumerate() {
            if frame < o.spawn || frame > o.despawn || occluded(o, frame) {
                continue;
            }
            let rendered = ground_truth[oi].entries[(frame - o.spawn) as usize].bbox;
            if det.miss_prob > 0.0 && rng.random_bool(det.miss_prob) {
                continue;
            }
            let copies = if det.duplicate_prob > 0.0 && rng.random_bool(det.duplicate_prob) {
                2
            } else {
                1
            };
            for _ in 0..copies {
                let d = sample_detection(frame, &rendered, o.class_id, det, &mut rng, &unit_normal);
                let e = sample_embedding(&means[oi], spec.embedding.within_std, &mut rng, &unit_normal)?;
                embeddings.insert(frame, det_idx, e)?;
                detections.push(Detection { det_idx, ..d });
                det_idx += 1;
            }
        }
    }

    Ok(SimOutput {
        ground_truth,
        detections,
        embeddings,
        transforms,
    })
}

fn sample_detection(
    frame: i64,
    truth: &BBox,
    class_id: u32,
    det: &DetectorModel,
    rng: &mut ChaCha8Rng,
    unit_normal: &Normal<f64>,
) -> Detection {
    let sigma = det.localization_std_frac * truth.height;
    let bbox = if sigma > 0.0 {
        let d = |rng: &mut ChaCha8Rng| unit_normal.sample(rng) * sigma;
        BBox {
            left: truth.left + d(rng),
            top: truth.top + d(rng),
            width: (truth.width + d(rng)).max(0.1 * truth.width),
            height: (truth.height + d(rng)).max(0.1 * truth.height),
        }
    } else {
        *truth
    };
    let (cx, cy) = bbox.center();
    let (tx, ty) = truth.center();
    let center_err = ((cx - tx).powi(2) + (cy - ty).powi(2)).sqrt();
    let noise = if det.confidence_noise_std > 0.0 {
        unit_normal.sample(rng) * det.confidence_noise_std
    } else {
        0.0
    };
    let score = (1.0 - det.confidence_kappa * center_err / truth.height + noise).clamp(0.0, 1.0);
    Detection {
        frame,
        bbox,
        score,
        class_id,
        det_idx: 0,
    }
}

fn sample_embedding(
    mean: &Embedding,
    within_std: f64,
    rng: &mut ChaCha8Rng,
    unit_normal: &Normal<f64>,
) -> Result<Embedding> {
    if within_std <= 0.0 {
        return Ok(mean.clone());
    }
    let v: Vec<f64> = mean
        .values()
        .iter()
        .map(|m| m + unit_normal.sample(rng) * within_std)
        .collect();
    Embedding::new(v)
}
