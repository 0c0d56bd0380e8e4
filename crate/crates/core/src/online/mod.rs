//! Stage 1: per-sequence online tracking.
//!
//! Every frame is processed as predict → camera compensation → gated cascade
//! association → measurement update → lifecycle management. Confirmed tracks
//! are matched by appearance first (cascaded by time since the last match),
//! leftovers and tentative tracks fall back to IoU matching.

mod assignment;

pub use assignment::{solve_assignment, Assignment, CostMatrix, INFEASIBLE};

use std::collections::BTreeMap;

use crate::appearance::{EmaBank, EmbeddingProvider};
use crate::camera::{compensate, TransformTable};
use crate::model::{box_iou, Detection, Entry, Tracklet, Trajectory};
use crate::motion::{
    gating_distance, predict, ukf_predict, ukf_update, update, Measurement, MotionModel,
    NoiseConfig, TrackState, UkfParams, UpdateMode, CHI2_GATE_4DOF,
};
use crate::{Error, Result};

/// Fine-to-rough class mapping. Rough classes group visually confusable fine
/// classes that are tracked jointly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    map: BTreeMap<u32, u32>,
}

impl ClassMap {
    pub fn new(map: BTreeMap<u32, u32>) -> Self {
        ClassMap { map }
    }

    /// VisDrone convention: pedestrian (1) is its own rough class; car, van,
    /// truck and bus (4, 5, 6, 9) share one.
    pub fn visdrone_default() -> Self {
        let mut map = BTreeMap::new();
        map.insert(1, 0);
        for fine in [4, 5, 6, 9] {
            map.insert(fine, 1);
        }
        ClassMap { map }
    }

    pub fn rough(&self, fine: u32) -> Result<u32> {
        self.map
            .get(&fine)
            .copied()
            .ok_or_else(|| Error::input(format!("class {fine} is not in the configured class map")))
    }

    pub fn contains(&self, fine: u32) -> bool {
        self.map.contains_key(&fine)
    }

    pub fn rough_classes(&self) -> impl Iterator<Item = u32> + '_ {
        let mut seen = std::collections::BTreeSet::new();
        self.map.values().filter_map(move |r| seen.insert(*r).then_some(*r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u32, &u32)> {
        self.map.iter()
    }
}

/// Which filter runs a track's motion, and with which update noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub noise_mode: UpdateMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Kalman,
    Unscented,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kind: FilterKind::Kalman,
            noise_mode: UpdateMode::Nsa,
        }
    }
}

/// Class voting mode for assigning fine classes to rough-class trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteMode {
    /// The top-voted class takes weight 1.
    Hard,
    /// Every class above the vote floor keeps its normalized weight.
    Soft,
}

#[derive(Debug, Clone)]
pub struct OnlineConfig {
    /// Consecutive hits before a track is confirmed.
    pub n_init: u32,
    /// Consecutive misses after which a confirmed track is dropped.
    pub max_age: u32,
    /// Minimum tracklet length kept in the output.
    pub min_len: usize,
    /// Gate on the squared Mahalanobis distance of a candidate measurement.
    pub gate_threshold: f64,
    /// Maximum feasible appearance (cosine) cost.
    pub appearance_threshold: f64,
    /// Maximum feasible (1 - IoU) cost in the fallback pass.
    pub iou_fallback_threshold: f64,
    /// An unmatched detection overlapping a live same-rough-class track's
    /// box with at least this IoU is a duplicate and seeds no new track.
    /// Values above 1 disable the suppression.
    pub init_suppression_iou: f64,
    pub vote_mode: VoteMode,
    pub vote_floor: f64,
    pub class_map: ClassMap,
    /// Filter selection per rough class; falls back to `default_filter`.
    pub filter_overrides: BTreeMap<u32, FilterSpec>,
    pub default_filter: FilterSpec,
    /// Motion model wrapped by the unscented filter.
    pub ukf_motion: MotionModel,
    pub ukf_params: UkfParams,
    pub noise: NoiseConfig,
    /// Appearance bank capacity and momentum.
    pub bank_capacity: usize,
    pub bank_momentum: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        let mut filter_overrides = BTreeMap::new();
        // vehicles get the unscented filter
        filter_overrides.insert(
            1,
            FilterSpec {
                kind: FilterKind::Unscented,
                noise_mode: UpdateMode::Nsa,
            },
        );
        OnlineConfig {
            n_init: 3,
            max_age: 30,
            min_len: 2,
            gate_threshold: CHI2_GATE_4DOF,
            appearance_threshold: 0.3,
            iou_fallback_threshold: 0.7,
            init_suppression_iou: 0.7,
            vote_mode: VoteMode::Soft,
            vote_floor: 0.2,
            class_map: ClassMap::visdrone_default(),
            filter_overrides,
            default_filter: FilterSpec::default(),
            ukf_motion: MotionModel::ConstantVelocity,
            ukf_params: UkfParams::default(),
            noise: NoiseConfig::default(),
            bank_capacity: 100,
            bank_momentum: 0.9,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gate_threshold <= 0.0
            || self.appearance_threshold <= 0.0
            || self.iou_fallback_threshold <= 0.0
        {
            return Err(Error::input("association thresholds must be positive"));
        }
        if !(0.0..=1.0).contains(&self.vote_floor) {
            return Err(Error::input("vote floor must lie in [0, 1]"));
        }
        self.noise.validate()
    }

    pub fn filter_for(&self, rough: u32) -> FilterSpec {
        self.filter_overrides
            .get(&rough)
            .copied()
            .unwrap_or(self.default_filter)
    }
}

/// Track lifecycle status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

/// Mutable per-track working state of the online stage.
#[derive(Debug, Clone)]
pub struct TrackRuntime {
    pub id: i64,
    pub state: TrackState,
    pub bank: EmaBank,
    pub status: TrackStatus,
    /// Whether the track ever reached confirmed status; only such tracks
    /// are emitted as tracklets.
    pub ever_confirmed: bool,
    pub hits: u32,
    /// Consecutive missed frames since the last match.
    pub misses: u32,
    pub rough_class: u32,
    pub entries: Vec<Entry>,
}

impl TrackRuntime {
    fn new(id: i64, det: &Detection, rough_class: u32, cfg: &OnlineConfig) -> Result<Self> {
        let z = Measurement::from_column_slice(&det.bbox.to_cyah());
        let confirmed = cfg.n_init <= 1;
        let mut track = TrackRuntime {
            id,
            state: TrackState::from_measurement(&z, &cfg.noise),
            bank: EmaBank::new(cfg.bank_capacity, cfg.bank_momentum)?,
            status: if confirmed {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            },
            ever_confirmed: confirmed,
            hits: 1,
            misses: 0,
            rough_class,
            entries: Vec::new(),
        };
        track.entries.push(
            Entry::new(det.frame, det.bbox, det.score, det.class_id).with_det_idx(det.det_idx),
        );
        Ok(track)
    }

    fn mark_missed(&mut self, max_age: u32) {
        self.misses += 1;
        match self.status {
            TrackStatus::Tentative => self.status = TrackStatus::Deleted,
            TrackStatus::Confirmed if self.misses > max_age => {
                self.status = TrackStatus::Deleted
            }
            _ => {}
        }
    }
}

/// Outcome of one frame's association.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// (track index, detection index) pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Gated cascade association of one frame's detections to predicted,
/// compensated tracks.
///
/// Confirmed tracks are matched in groups of increasing miss count using the
/// appearance cost (minimum cosine distance against the track bank), gated by
/// the Mahalanobis distance. Detections without embeddings fall back to a
/// gate-only cost. A second pass matches tentative and still-unmatched tracks
/// by box IoU. Pairs from different rough classes are never feasible.
pub fn associate_frame(
    tracks: &[TrackRuntime],
    detections: &[Detection],
    embeddings: &dyn EmbeddingProvider,
    cfg: &OnlineConfig,
) -> Result<AssociationResult> {
    let mut matches: Vec<(usize, usize)> = Vec::new();
    let mut remaining: Vec<usize> = (0..detections.len()).collect();

    let det_rough: Vec<u32> = detections
        .iter()
        .map(|d| cfg.class_map.rough(d.class_id))
        .collect::<Result<_>>()?;
    let det_meas: Vec<Measurement> = detections
        .iter()
        .map(|d| Measurement::from_column_slice(&d.bbox.to_cyah()))
        .collect();

    // Pass 1: appearance cascade over confirmed tracks, fewest misses first.
    let mut cascade: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (ti, track) in tracks.iter().enumerate() {
        if track.status == TrackStatus::Confirmed {
            cascade.entry(track.misses).or_default().push(ti);
        }
    }
    for group in cascade.values() {
        if remaining.is_empty() {
            break;
        }
        let mut cost = CostMatrix::new(group.len(), remaining.len());
        for (gi, &ti) in group.iter().enumerate() {
            let track = &tracks[ti];
            for (ci, &di) in remaining.iter().enumerate() {
                if det_rough[di] != track.rough_class {
                    continue;
                }
                let gate = gating_distance(&track.state, &det_meas[di], &cfg.noise)
                    .map_err(|e| e.with_context(&format!("track {}", track.id)))?;
                if gate > cfg.gate_threshold {
                    continue;
                }
                let det = &detections[di];
                let appearance = match embeddings.get(det.frame, det.det_idx) {
                    Some(e) if !track.bank.is_empty() => {
                        let d = track.bank.min_cosine_distance(e)?;
                        if d > cfg.appearance_threshold {
                            continue;
                        }
                        d
                    }
                    // no embedding on either side: gate-only fallback cost
                    _ => cfg.appearance_threshold,
                };
                cost.set(gi, ci, appearance);
            }
        }
        let solved = solve_assignment(&cost);
        let mut matched_cols: Vec<usize> = Vec::new();
        for (gi, ci) in solved.pairs {
            matches.push((group[gi], remaining[ci]));
            matched_cols.push(ci);
        }
        matched_cols.sort_unstable_by(|a, b| b.cmp(a));
        for ci in matched_cols {
            remaining.remove(ci);
        }
    }

    // Pass 2: IoU fallback for tentative and still-unmatched tracks.
    let matched_tracks: std::collections::BTreeSet<usize> =
        matches.iter().map(|(t, _)| *t).collect();
    let fallback: Vec<usize> = (0..tracks.len())
        .filter(|ti| !matched_tracks.contains(ti) && tracks[*ti].status != TrackStatus::Deleted)
        .collect();
    if !fallback.is_empty() && !remaining.is_empty() {
        let mut cost = CostMatrix::new(fallback.len(), remaining.len());
        for (gi, &ti) in fallback.iter().enumerate() {
            let track = &tracks[ti];
            let predicted_box = track.state.to_bbox()?;
            for (ci, &di) in remaining.iter().enumerate() {
                if det_rough[di] != track.rough_class {
                    continue;
                }
                let c = 1.0 - box_iou(&predicted_box, &detections[di].bbox);
                if c > cfg.iou_fallback_threshold {
                    continue;
                }
                cost.set(gi, ci, c);
            }
        }
        let solved = solve_assignment(&cost);
        let mut matched_cols: Vec<usize> = Vec::new();
        for (gi, ci) in solved.pairs {
            matches.push((fallback[gi], remaining[ci]));
            matched_cols.push(ci);
        }
        matched_cols.sort_unstable_by(|a, b| b.cmp(a));
        for ci in matched_cols {
            remaining.remove(ci);
        }
    }

    let matched_tracks: std::collections::BTreeSet<usize> =
        matches.iter().map(|(t, _)| *t).collect();
    matches.sort_unstable();
    Ok(AssociationResult {
        matches,
        unmatched_tracks: (0..tracks.len())
            .filter(|ti| !matched_tracks.contains(ti) && tracks[*ti].status != TrackStatus::Deleted)
            .collect(),
        unmatched_detections: remaining,
    })
}

/// Runs the full online stage over one sequence of detections (sorted by
/// frame) and returns the surviving tracklets in creation order.
pub fn track_sequence(
    detections: &[Detection],
    embeddings: &dyn EmbeddingProvider,
    transforms: &TransformTable,
    cfg: &OnlineConfig,
) -> Result<Vec<Tracklet>> {
    cfg.validate()?;
    let mut by_frame: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    let mut last_frame = 0i64;
    let mut seen = std::collections::BTreeSet::new();
    for det in detections {
        det.validate()?;
        cfg.class_map.rough(det.class_id)?;
        if det.frame < last_frame {
            return Err(Error::input(format!(
                "detections not sorted by frame at frame {}",
                det.frame
            )));
        }
        last_frame = det.frame;
        if !seen.insert((det.frame, det.det_idx)) {
            return Err(Error::input(format!(
                "duplicate detection key (frame {}, det_idx {})",
                det.frame, det.det_idx
            )));
        }
        by_frame.entry(det.frame).or_default().push(det.clone());
    }

    let max_frame = by_frame.keys().next_back().copied().unwrap_or(0);
    let mut tracks: Vec<TrackRuntime> = Vec::new();
    let mut finished: Vec<Tracklet> = Vec::new();
    let mut next_id: i64 = 1;
    let empty: Vec<Detection> = Vec::new();

    for frame in 1..=max_frame {
        let transform = transforms.get(frame);
        for track in &mut tracks {
            let spec = cfg.filter_for(track.rough_class);
            let context = format!("frame {frame}, track {}", track.id);
            let predicted = match spec.kind {
                FilterKind::Kalman => {
                    predict(&track.state, &MotionModel::ConstantVelocity, &cfg.noise)
                }
                FilterKind::Unscented => {
                    ukf_predict(&track.state, &cfg.ukf_motion, &cfg.noise, &cfg.ukf_params)
                }
            }
            .map_err(|e| e.with_context(&context))?;
            track.state = compensate(&predicted, &transform).map_err(|e| e.with_context(&context))?;
        }

        let frame_dets = by_frame.get(&frame).unwrap_or(&empty);
        let outcome = associate_frame(&tracks, frame_dets, embeddings, cfg)?;

        for (ti, di) in outcome.matches {
            let det = &frame_dets[di];
            let track = &mut tracks[ti];
            let spec = cfg.filter_for(track.rough_class);
            let z = Measurement::from_column_slice(&det.bbox.to_cyah());
            let context = format!("frame {frame}, track {}", track.id);
            track.state = match spec.kind {
                FilterKind::Kalman => {
                    update(&track.state, &z, det.score, spec.noise_mode, &cfg.noise)
                }
                FilterKind::Unscented => ukf_update(
                    &track.state,
                    &z,
                    det.score,
                    &cfg.noise,
                    &cfg.ukf_params,
                    spec.noise_mode,
                ),
            }
            .map_err(|e| e.with_context(&context))?;
            if let Some(e) = embeddings.get(det.frame, det.det_idx) {
                track.bank.push(e)?;
            }
            track.entries.push(
                Entry::new(det.frame, det.bbox, det.score, det.class_id).with_det_idx(det.det_idx),
            );
            track.hits += 1;
            track.misses = 0;
            if track.status == TrackStatus::Tentative && track.hits >= cfg.n_init {
                track.status = TrackStatus::Confirmed;
                track.ever_confirmed = true;
            }
        }

        for ti in outcome.unmatched_tracks {
            tracks[ti].mark_missed(cfg.max_age);
        }

        for di in outcome.unmatched_detections {
            let det = &frame_dets[di];
            let rough = cfg.class_map.rough(det.class_id)?;
            let mut duplicate = false;
            for track in tracks.iter().filter(|t| {
                t.status != TrackStatus::Deleted && t.rough_class == rough
            }) {
                let track_box = track.state.to_bbox()?;
                if box_iou(&track_box, &det.bbox) >= cfg.init_suppression_iou {
                    duplicate = true;
                    break;
                }
            }
            if duplicate {
                continue;
            }
            let mut track = TrackRuntime::new(next_id, det, rough, cfg)?;
            next_id += 1;
            if let Some(e) = embeddings.get(det.frame, det.det_idx) {
                track.bank.push(e)?;
            }
            tracks.push(track);
        }

        for track in tracks.iter().filter(|t| t.status == TrackStatus::Deleted) {
            if track.ever_confirmed && track.entries.len() >= cfg.min_len {
                finished.push(Tracklet {
                    id: track.id,
                    entries: track.entries.clone(),
                    rough_class: track.rough_class,
                });
            }
        }
        tracks.retain(|t| t.status != TrackStatus::Deleted);
    }

    for track in &tracks {
        if track.ever_confirmed && track.entries.len() >= cfg.min_len {
            finished.push(Tracklet {
                id: track.id,
                entries: track.entries.clone(),
                rough_class: track.rough_class,
            });
        }
    }
    finished.sort_by_key(|t| t.id);
    Ok(finished)
}

/// Computes class votes for each trajectory from its per-entry fine classes,
/// weighting votes by detection confidence.
///
/// Soft mode keeps every class whose normalized weight reaches the floor and
/// renormalizes; hard mode keeps the top class with weight 1 (ties break to
/// the lower class id).
pub fn rough2fine(
    mut trajectories: Vec<Trajectory>,
    mode: VoteMode,
    vote_floor: f64,
) -> Result<Vec<Trajectory>> {
    for traj in &mut trajectories {
        if traj.entries.is_empty() {
            return Err(Error::input(format!("trajectory {} is empty", traj.id)));
        }
        let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
        for e in &traj.entries {
            *sums.entry(e.class_id).or_insert(0.0) += e.score;
        }
        let total: f64 = sums.values().sum();
        let weights: Vec<(u32, f64)> = if total <= 0.0 {
            // all-zero scores: uniform vote over present classes
            let n = sums.len() as f64;
            sums.keys().map(|c| (*c, 1.0 / n)).collect()
        } else {
            sums.iter().map(|(c, s)| (*c, s / total)).collect()
        };
        traj.class_votes = match mode {
            VoteMode::Hard => {
                let best = weights
                    .iter()
                    .cloned()
                    .max_by(|a, b| {
                        a.1.partial_cmp(&b.1)
                            .unwrap()
                            .then(b.0.cmp(&a.0))
                    })
                    .expect("non-empty weights");
                vec![(best.0, 1.0)]
            }
            VoteMode::Soft => {
                let kept: Vec<(u32, f64)> = weights
                    .iter()
                    .filter(|(_, w)| *w >= vote_floor)
                    .cloned()
                    .collect();
                let kept = if kept.is_empty() {
                    // nothing reaches the floor: fall back to the top class
                    let best = weights
                        .iter()
                        .cloned()
                        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                        .expect("non-empty weights");
                    vec![best]
                } else {
                    kept
                };
                let kept_total: f64 = kept.iter().map(|(_, w)| w).sum();
                kept.into_iter().map(|(c, w)| (c, w / kept_total)).collect()
            }
        };
    }
    Ok(trajectories)
}
