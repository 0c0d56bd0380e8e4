//! Stage 2: linking tracklets into long trajectories.
//!
//! Each tracklet carries a bank of clip-level appearance features (normalized
//! means over fixed-length windows of its per-detection embeddings). Pairs of
//! tracklets are scored by a weighted sum of appearance, time-gap and
//! space-gap costs, gated by per-term thresholds, and matched with the
//! assignment solver. Matching repeats in rounds so chains of three or more
//! tracklets can merge.

use std::collections::BTreeMap;

use crate::appearance::{Embedding, EmbeddingProvider};
use crate::model::{Tracklet, Trajectory};
use crate::online::{solve_assignment, CostMatrix};
use crate::{Error, Result};

/// Clip-level appearance features of one tracklet.
#[derive(Debug, Clone)]
pub struct ClipFeatureBank {
    pub clips: Vec<Embedding>,
    pub clip_len: usize,
}

impl ClipFeatureBank {
    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Global link stage configuration.
#[derive(Debug, Clone)]
pub struct LinkConfig {
    /// Appearance cost threshold.
    pub th_appearance: f64,
    /// Time gap threshold in frames.
    pub th_time: f64,
    /// Space gap threshold in pixels.
    pub th_space: f64,
    pub lambda_appearance: f64,
    pub lambda_time: f64,
    pub lambda_space: f64,
    /// Frames per clip feature.
    pub clip_len: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            th_appearance: 0.4,
            th_time: 200.0,
            th_space: 150.0,
            lambda_appearance: 40.0,
            lambda_time: 1.0,
            lambda_space: 1.0,
            clip_len: 4,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.th_appearance > 0.0
            && self.th_time > 0.0
            && self.th_space > 0.0
            && self.lambda_appearance >= 0.0
            && self.lambda_time >= 0.0
            && self.lambda_space >= 0.0
            && self.clip_len >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::input("link thresholds and weights must be positive"))
        }
    }
}

/// Aggregates per-detection embeddings of a tracklet into clip features:
/// consecutive disjoint windows of `clip_len` entries, each the normalized
/// mean of the embeddings available in that window. Windows with no
/// embeddings are skipped; a tracklet with no embeddings at all is an error.
pub fn clip_features(
    tracklet: &Tracklet,
    embeddings: &dyn EmbeddingProvider,
    clip_len: usize,
) -> Result<ClipFeatureBank> {
    if tracklet.entries.is_empty() {
        return Err(Error::input(format!("tracklet {} is empty", tracklet.id)));
    }
    if clip_len == 0 {
        return Err(Error::input("clip length must be at least 1"));
    }
    let mut clips = Vec::new();
    for window in tracklet.entries.chunks(clip_len) {
        let found: Vec<&Embedding> = window
            .iter()
            .filter(|e| !e.interpolated)
            .filter_map(|e| embeddings.get(e.frame, e.det_idx))
            .collect();
        if found.is_empty() {
            continue;
        }
        clips.push(Embedding::normalized_mean(found.into_iter())?);
    }
    if clips.is_empty() {
        return Err(Error::input(format!(
            "tracklet {} has no embeddings; cannot build a clip feature bank",
            tracklet.id
        )));
    }
    Ok(ClipFeatureBank { clips, clip_len })
}

/// Smallest cosine distance between any pair of clip features.
pub fn appearance_cost(a: &ClipFeatureBank, b: &ClipFeatureBank) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("appearance cost on an empty clip bank"));
    }
    let mut best = f64::INFINITY;
    for fa in &a.clips {
        for fb in &b.clips {
            best = best.min(fa.cosine_distance(fb));
        }
    }
    Ok(best)
}

/// Link-relevant summary of one tracklet or partially merged trajectory.
#[derive(Debug, Clone)]
struct LinkNode {
    id: i64,
    rough_class: u32,
    start_frame: i64,
    end_frame: i64,
    first_center: (f64, f64),
    last_center: (f64, f64),
    bank: Option<ClipFeatureBank>,
    entries: Vec<crate::model::Entry>,
}

impl LinkNode {
    fn from_tracklet(t: &Tracklet, bank: Option<ClipFeatureBank>) -> Self {
        LinkNode {
            id: t.id,
            rough_class: t.rough_class,
            start_frame: t.start_frame(),
            end_frame: t.end_frame(),
            first_center: t.entries.first().unwrap().bbox.center(),
            last_center: t.entries.last().unwrap().bbox.center(),
            bank,
            entries: t.entries.clone(),
        }
    }
}

/// The three cost terms of a candidate link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCostTerms {
    pub appearance: f64,
    pub time: f64,
    pub space: f64,
}

impl LinkCostTerms {
    /// Threshold constraint: every term must be under its threshold.
    pub fn feasible(&self, cfg: &LinkConfig) -> bool {
        self.appearance < cfg.th_appearance
            && self.time < cfg.th_time
            && self.space < cfg.th_space
    }

    /// Weighted sum of the terms.
    pub fn combined(&self, cfg: &LinkConfig) -> f64 {
        cfg.lambda_appearance * self.appearance
            + cfg.lambda_time * self.time
            + cfg.lambda_space * self.space
    }
}

/// Computes the combined link cost of attaching `head` after `tail`, or
/// `None` when the pair is infeasible (wrong temporal order, different rough
/// class, or any term at or above its threshold).
pub fn link_cost(
    tail_bank: &ClipFeatureBank,
    head_bank: &ClipFeatureBank,
    terms_time: f64,
    terms_space: f64,
    cfg: &LinkConfig,
) -> Result<Option<f64>> {
    if terms_time <= 0.0 {
        return Ok(None);
    }
    let terms = LinkCostTerms {
        appearance: appearance_cost(tail_bank, head_bank)?,
        time: terms_time,
        space: terms_space,
    };
    Ok(terms.feasible(cfg).then(|| terms.combined(cfg)))
}

fn node_link_cost(tail: &LinkNode, head: &LinkNode, cfg: &LinkConfig) -> Result<Option<f64>> {
    if tail.rough_class != head.rough_class {
        return Ok(None);
    }
    let time = (head.start_frame - tail.end_frame) as f64;
    if time <= 0.0 {
        return Ok(None);
    }
    let (tail_bank, head_bank) = match (&tail.bank, &head.bank) {
        (Some(a), Some(b)) => (a, b),
        // a tracklet without embeddings cannot satisfy the appearance
        // threshold, so it never links
        _ => return Ok(None),
    };
    let dx = head.first_center.0 - tail.last_center.0;
    let dy = head.first_center.1 - tail.last_center.1;
    let space = (dx * dx + dy * dy).sqrt();
    link_cost(tail_bank, head_bank, time, space, cfg)
}

/// Links tracklets into trajectories: per rough class, repeated rounds of
/// assignment over feasible (tail, head) pairs until no feasible pair
/// remains. Merged trajectories take the id of their earliest component, and
/// class votes are recomputed over the merged entries.
pub fn global_link(
    tracklets: &[Tracklet],
    embeddings: &dyn EmbeddingProvider,
    cfg: &LinkConfig,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    for t in tracklets {
        t.validate()?;
    }

    let mut nodes: Vec<LinkNode> = Vec::with_capacity(tracklets.len());
    let mut skipped_banks = 0usize;
    for t in tracklets {
        let bank = match clip_features(t, embeddings, cfg.clip_len) {
            Ok(b) => Some(b),
            Err(Error::Input(_)) => {
                skipped_banks += 1;
                None
            }
            Err(e) => return Err(e),
        };
        nodes.push(LinkNode::from_tracklet(t, bank));
    }
    if skipped_banks > 0 {
        log::warn!(
            "{skipped_banks} tracklet(s) without embeddings pass through the link stage unmerged"
        );
    }

    // group node indices per rough class
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        by_class.entry(n.rough_class).or_default().push(i);
    }

    let mut merged: Vec<LinkNode> = Vec::new();
    for (_, idxs) in by_class {
        let mut pool: Vec<LinkNode> = idxs.into_iter().map(|i| nodes[i].clone()).collect();
        loop {
            let n = pool.len();
            if n < 2 {
                break;
            }
            let mut cost = CostMatrix::new(n, n);
            let mut any = false;
            for (i, tail) in pool.iter().enumerate() {
                for (j, head) in pool.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    if let Some(c) = node_link_cost(tail, head, cfg)? {
                        cost.set(i, j, c);
                        any = true;
                    }
                }
            }
            if !any {
                break;
            }
            let solved = solve_assignment(&cost);
            if solved.pairs.is_empty() {
                break;
            }
            // pairs form disjoint paths: each node is tail of at most one
            // link and head of at most one
            let mut next: BTreeMap<usize, usize> = BTreeMap::new();
            let mut has_prev = vec![false; n];
            for (i, j) in solved.pairs {
                next.insert(i, j);
                has_prev[j] = true;
            }
            let mut new_pool: Vec<LinkNode> = Vec::new();
            let mut consumed = vec![false; n];
            for start in 0..n {
                if has_prev[start] || consumed[start] {
                    continue;
                }
                let mut chain = vec![start];
                let mut cur = start;
                while let Some(&j) = next.get(&cur) {
                    chain.push(j);
                    cur = j;
                }
                for &k in &chain {
                    consumed[k] = true;
                }
                if chain.len() == 1 {
                    new_pool.push(pool[start].clone());
                } else {
                    new_pool.push(merge_chain(&pool, &chain));
                }
            }
            let made_progress = new_pool.len() < pool.len();
            pool = new_pool;
            if !made_progress {
                break;
            }
        }
        merged.append(&mut pool);
    }

    merged.sort_by_key(|n| n.id);
    let mut out = Vec::with_capacity(merged.len());
    for node in merged {
        let mut traj = Trajectory::from_entries(node.id, node.entries);
        recompute_votes(&mut traj);
        out.push(traj);
    }
    Ok(out)
}

fn merge_chain(pool: &[LinkNode], chain: &[usize]) -> LinkNode {
    let earliest = chain
        .iter()
        .min_by_key(|&&k| (pool[k].start_frame, pool[k].id))
        .copied()
        .expect("non-empty chain");
    let mut entries = Vec::new();
    let mut clips = Vec::new();
    let mut clip_len = 1;
    for &k in chain {
        entries.extend(pool[k].entries.iter().cloned());
        if let Some(b) = &pool[k].bank {
            clips.extend(b.clips.iter().cloned());
            clip_len = b.clip_len;
        }
    }
    entries.sort_by_key(|e| e.frame);
    let first_center = entries.first().unwrap().bbox.center();
    let last_center = entries.last().unwrap().bbox.center();
    LinkNode {
        id: pool[earliest].id,
        rough_class: pool[earliest].rough_class,
        start_frame: entries.first().unwrap().frame,
        end_frame: entries.last().unwrap().frame,
        first_center,
        last_center,
        bank: if clips.is_empty() {
            None
        } else {
            Some(ClipFeatureBank { clips, clip_len })
        },
        entries,
    }
}

/// Full soft recount of class votes from entry scores; downstream voting can
/// re-apply a floor or hard mode.
fn recompute_votes(traj: &mut Trajectory) {
    let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
    for e in &traj.entries {
        *sums.entry(e.class_id).or_insert(0.0) += e.score;
    }
    let total: f64 = sums.values().sum();
    traj.class_votes = if total <= 0.0 {
        let n = sums.len() as f64;
        sums.keys().map(|c| (*c, 1.0 / n)).collect()
    } else {
        sums.iter().map(|(c, s)| (*c, s / total)).collect()
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::EmbeddingTable;
    use crate::model::{BBox, Entry};

    fn emb(values: &[f64]) -> Embedding {
        Embedding::new(values.to_vec()).unwrap()
    }

    fn tracklet(id: i64, rough: u32, frames: std::ops::RangeInclusive<i64>, x0: f64) -> Tracklet {
        let entries: Vec<Entry> = frames
            .clone()
            .map(|f| {
                let b = BBox::new(x0 + (f - frames.start()) as f64, 50.0, 20.0, 40.0).unwrap();
                Entry::new(f, b, 0.9, 4)
            })
            .collect();
        Tracklet {
            id,
            entries,
            rough_class: rough,
        }
    }

    fn table_for(tracklets: &[&Tracklet], means: &[&[f64]]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(means[0].len());
        for (tl, mean) in tracklets.iter().zip(means.iter()) {
            for e in &tl.entries {
                t.insert(e.frame, 0, emb(mean)).unwrap();
            }
        }
        t
    }

    #[test]
    fn clip_features_window_counts() {
        let tl = tracklet(1, 1, 1..=5, 100.0);
        let table = table_for(&[&tl], &[&[1.0, 0.0]]);
        let bank = clip_features(&tl, &table, 4).unwrap();
        assert_eq!(bank.clips.len(), 2); // sizes 4 and 1

        let bank1 = clip_features(&tl, &table, 1).unwrap();
        assert_eq!(bank1.clips.len(), 5);
    }

    #[test]
    fn clip_feature_is_normalized_mean() {
        let tl = tracklet(1, 1, 1..=2, 100.0);
        let mut table = EmbeddingTable::new(2);
        table.insert(1, 0, emb(&[1.0, 0.0])).unwrap();
        table.insert(2, 0, emb(&[0.0, 1.0])).unwrap();
        let bank = clip_features(&tl, &table, 2).unwrap();
        assert_eq!(bank.clips.len(), 1);
        let v = bank.clips[0].values();
        let e = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - e).abs() < 1e-12);
        assert!((v[1] - e).abs() < 1e-12);
    }

    #[test]
    fn clip_features_without_embeddings_is_error() {
        let tl = tracklet(1, 1, 1..=4, 100.0);
        let table = EmbeddingTable::new(2);
        assert!(clip_features(&tl, &table, 4).is_err());
    }

    #[test]
    fn appearance_cost_cases() {
        let shared = emb(&[1.0, 0.0]);
        let a = ClipFeatureBank {
            clips: vec![shared.clone()],
            clip_len: 4,
        };
        let b = ClipFeatureBank {
            clips: vec![emb(&[0.0, 1.0]), shared.clone()],
            clip_len: 4,
        };
        assert!((appearance_cost(&a, &b).unwrap() - 0.0).abs() < 1e-12);

        let c = ClipFeatureBank {
            clips: vec![emb(&[0.0, 1.0])],
            clip_len: 4,
        };
        assert!((appearance_cost(&a, &c).unwrap() - 1.0).abs() < 1e-12);

        let d = ClipFeatureBank {
            clips: vec![emb(&[1.0, 1.0]), emb(&[0.0, 1.0])],
            clip_len: 4,
        };
        let expected = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        assert!((appearance_cost(&a, &d).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn link_cost_weighted_sum() {
        let cfg = LinkConfig::default();
        let terms = LinkCostTerms {
            appearance: 0.2,
            time: 10.0,
            space: 50.0,
        };
        assert!(terms.feasible(&cfg));
        assert!((terms.combined(&cfg) - 68.0).abs() < 1e-12);
    }

    #[test]
    fn link_cost_threshold_violations_are_infeasible() {
        let cfg = LinkConfig::default();
        for terms in [
            LinkCostTerms { appearance: 0.4, time: 10.0, space: 50.0 },
            LinkCostTerms { appearance: 0.5, time: 10.0, space: 50.0 },
            LinkCostTerms { appearance: 0.2, time: 200.0, space: 50.0 },
            LinkCostTerms { appearance: 0.2, time: 10.0, space: 150.0 },
        ] {
            assert!(!terms.feasible(&cfg), "{terms:?} should be infeasible");
        }
    }

    #[test]
    fn link_cost_requires_temporal_order() {
        let cfg = LinkConfig::default();
        let bank = ClipFeatureBank {
            clips: vec![emb(&[1.0, 0.0])],
            clip_len: 4,
        };
        assert_eq!(link_cost(&bank, &bank, 0.0, 5.0, &cfg).unwrap(), None);
        assert_eq!(link_cost(&bank, &bank, -3.0, 5.0, &cfg).unwrap(), None);
    }

    #[test]
    fn global_link_merges_split_tracklets() {
        // one identity split by a gap; same embedding mean on both sides
        let a = tracklet(1, 1, 1..=20, 100.0);
        let b = tracklet(7, 1, 60..=80, 125.0);
        let table = table_for(&[&a, &b], &[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        let out = global_link(&[a, b], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 1);
        assert_eq!(out[0].entries.len(), 20 + 21);
    }

    #[test]
    fn global_link_keeps_orthogonal_identities_apart() {
        let a = tracklet(1, 1, 1..=20, 100.0);
        let b = tracklet(2, 1, 60..=80, 125.0);
        let table = table_for(&[&a, &b], &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let out = global_link(&[a, b], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn global_link_single_tracklet_passthrough() {
        let a = tracklet(3, 1, 1..=10, 100.0);
        let table = table_for(&[&a], &[&[1.0, 0.0]]);
        let out = global_link(&[a.clone()], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 3);
        assert_eq!(out[0].entries.len(), a.entries.len());
    }

    #[test]
    fn global_link_chains_three_tracklets() {
        let a = tracklet(1, 1, 1..=10, 100.0);
        let b = tracklet(2, 1, 20..=30, 112.0);
        let c = tracklet(3, 1, 40..=50, 125.0);
        let mean = [0.5, 0.5, 0.0];
        let table = table_for(&[&a, &b, &c], &[&mean, &mean, &mean]);
        let out = global_link(&[a, b, c], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 1);
        assert_eq!(out[0].entries.len(), 10 + 11 + 11);
        // frames strictly increasing across the merged chain
        for pair in out[0].entries.windows(2) {
            assert!(pair[1].frame > pair[0].frame);
        }
    }

    #[test]
    fn global_link_never_overlaps_frames() {
        // temporally overlapping tracklets must not merge
        let a = tracklet(1, 1, 1..=30, 100.0);
        let b = tracklet(2, 1, 25..=50, 102.0);
        let mean = [1.0, 0.0];
        let table = table_for(&[&a, &b], &[&mean, &mean]);
        let out = global_link(&[a, b], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn merged_votes_cover_components() {
        let mut a = tracklet(1, 1, 1..=10, 100.0);
        for e in &mut a.entries {
            e.class_id = 4;
            e.score = 1.0;
        }
        let mut b = tracklet(2, 1, 20..=29, 112.0);
        for e in &mut b.entries {
            e.class_id = 5;
            e.score = 1.0;
        }
        let mean = [1.0, 0.0];
        let table = table_for(&[&a, &b], &[&mean, &mean]);
        let out = global_link(&[a, b], &table, &LinkConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        let votes = &out[0].class_votes;
        assert_eq!(votes.len(), 2);
        assert!((votes[0].1 - 0.5).abs() < 1e-12);
        assert!((votes[1].1 - 0.5).abs() < 1e-12);
    }
}
