//! Trajectory-level mAP evaluation and a synthetic scenario simulator for
//! desk-scale verification of the whole pipeline.

mod sim;

pub use sim::{
    simulate, CameraModel, DetectorModel, EmbeddingModel, ObjectSpec, ScenarioSpec, SimOutput,
};

use std::collections::BTreeMap;

use crate::model::{tube_iou, Trajectory};
use crate::{Error, Result};

/// Default tube-IoU thresholds of the evaluation protocol.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

/// Average precision of one (class, threshold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ApCell {
    pub class_id: u32,
    pub threshold: f64,
    pub ap: f64,
    pub matched: usize,
    pub missed: usize,
}

/// Per-class, per-threshold AP table and the aggregate mAP.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cells: Vec<ApCell>,
    pub map: f64,
}

impl EvalReport {
    /// Mean AP over classes at one threshold.
    pub fn map_at(&self, threshold: f64) -> f64 {
        let cells: Vec<&ApCell> = self
            .cells
            .iter()
            .filter(|c| (c.threshold - threshold).abs() < 1e-12)
            .collect();
        if cells.is_empty() {
            return 0.0;
        }
        cells.iter().map(|c| c.ap).sum::<f64>() / cells.len() as f64
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("class  threshold        AP   matched    missed\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{:>5}  {:>9.2}  {:>8.4}  {:>8}  {:>8}\n",
                c.class_id, c.threshold, c.ap, c.matched, c.missed
            ));
        }
        s.push_str(&format!("mAP = {:.6}\n", self.map));
        s
    }
}

/// Evaluates per-class trajectories against ground truth.
///
/// Per class and threshold, predictions are ranked by mean confidence and
/// greedily matched one-to-one to the unmatched ground-truth trajectory with
/// the highest tube IoU; a prediction counts as correct when that overlap
/// reaches the threshold. AP integrates the all-points precision-recall
/// curve, and mAP averages over the classes present in the ground truth and
/// all thresholds.
pub fn evaluate(
    predictions: &[Trajectory],
    ground_truth: &[Trajectory],
    thresholds: &[f64],
) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::input("no evaluation thresholds"));
    }
    let gt_by_class = split_by_class(ground_truth)?;
    if gt_by_class.is_empty() {
        return Err(Error::input("ground truth has no classes"));
    }
    let pred_by_class = split_by_class(predictions)?;

    let mut cells = Vec::new();
    for (&class_id, gts) in &gt_by_class {
        let empty = Vec::new();
        let preds = pred_by_class.get(&class_id).unwrap_or(&empty);
        for &threshold in thresholds {
            let cell = evaluate_class(class_id, preds, gts, threshold);
            cells.push(cell);
        }
    }
    let map = cells.iter().map(|c| c.ap).sum::<f64>() / cells.len() as f64;
    Ok(EvalReport { cells, map })
}

fn split_by_class(trajectories: &[Trajectory]) -> Result<BTreeMap<u32, Vec<&Trajectory>>> {
    let mut by_class: BTreeMap<u32, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        let class = t.sole_class().ok_or_else(|| {
            Error::input(format!(
                "trajectory {} carries multiple class votes; expand per class before evaluating",
                t.id
            ))
        })?;
        by_class.entry(class).or_default().push(t);
    }
    Ok(by_class)
}

fn evaluate_class(
    class_id: u32,
    predictions: &[&Trajectory],
    ground_truth: &[&Trajectory],
    threshold: f64,
) -> ApCell {
    // rank by mean confidence, ties by id for determinism
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .mean_score()
            .partial_cmp(&predictions[a].mean_score())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(predictions[a].id.cmp(&predictions[b].id))
    });

    let mut gt_matched = vec![false; ground_truth.len()];
    let mut tp_flags = Vec::with_capacity(order.len());
    for &pi in &order {
        let mut best_iou = 0.0;
        let mut best_gt = None;
        for (gi, gt) in ground_truth.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let iou = tube_iou(&predictions[pi].entries, &gt.entries);
            if iou > best_iou {
                best_iou = iou;
                best_gt = Some(gi);
            }
        }
        if best_iou >= threshold {
            if let Some(gi) = best_gt {
                gt_matched[gi] = true;
                tp_flags.push(true);
                continue;
            }
        }
        tp_flags.push(false);
    }

    let num_gt = ground_truth.len();
    let matched = tp_flags.iter().filter(|t| **t).count();
    ApCell {
        class_id,
        threshold,
        ap: average_precision(&tp_flags, num_gt),
        matched,
        missed: num_gt - matched,
    }
}

/// All-points average precision from ranked true/false-positive flags.
fn average_precision(tp_flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(tp_flags.len()); // (recall, precision)
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, integrated over recall
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    for i in 0..points.len() {
        let (r, _) = points[i];
        if r > last_recall {
            let max_p = points[i..]
                .iter()
                .map(|(_, p)| *p)
                .fold(0.0f64, f64::max);
            ap += (r - last_recall) * max_p;
            last_recall = r;
        }
    }
    ap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Entry};

    fn traj(id: i64, class: u32, frames: std::ops::RangeInclusive<i64>, x0: f64, score: f64) -> Trajectory {
        let entries: Vec<Entry> = frames
            .map(|f| {
                Entry::new(
                    f,
                    BBox::new(x0 + f as f64, 50.0, 10.0, 10.0).unwrap(),
                    score,
                    class,
                )
            })
            .collect();
        let mut t = Trajectory::from_entries(id, entries);
        t.class_votes = vec![(class, 1.0)];
        t
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0), traj(2, 4, 5..=25, 300.0, 1.0)];
        let report = evaluate(&gt, &gt, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(report.map, 1.0);
        for c in &report.cells {
            assert_eq!(c.ap, 1.0);
            assert_eq!(c.missed, 0);
        }
    }

    #[test]
    fn no_predictions_score_zero() {
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0)];
        let report = evaluate(&[], &gt, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(report.map, 0.0);
    }

    #[test]
    fn empty_ground_truth_is_error() {
        let preds = vec![traj(1, 4, 1..=20, 100.0, 1.0)];
        assert!(evaluate(&preds, &[], &DEFAULT_THRESHOLDS).is_err());
    }

    #[test]
    fn duplicate_prediction_does_not_reduce_ap() {
        // 1 GT, 2 identical predictions scored 0.9/0.8: the first matches,
        // the second is a false positive past full recall
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0)];
        let mut p1 = traj(10, 4, 1..=20, 100.0, 0.9);
        p1.entries.iter_mut().for_each(|e| e.score = 0.9);
        let mut p2 = traj(11, 4, 1..=20, 100.0, 0.8);
        p2.entries.iter_mut().for_each(|e| e.score = 0.8);
        let report = evaluate(&[p1, p2], &gt, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(report.map, 1.0);
    }

    #[test]
    fn score_scaling_invariance() {
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0), traj(2, 4, 1..=20, 300.0, 1.0)];
        let preds = vec![
            traj(10, 4, 1..=20, 100.0, 0.6),
            traj(11, 4, 1..=15, 300.0, 0.4),
            traj(12, 4, 10..=20, 500.0, 0.2),
        ];
        let base = evaluate(&preds, &gt, &DEFAULT_THRESHOLDS).unwrap();
        let scaled: Vec<Trajectory> = preds
            .iter()
            .map(|t| {
                let mut s = t.clone();
                for e in &mut s.entries {
                    e.score *= 3.0;
                }
                s
            })
            .collect();
        let after = evaluate(&scaled, &gt, &DEFAULT_THRESHOLDS).unwrap();
        for (a, b) in base.cells.iter().zip(after.cells.iter()) {
            assert_eq!(a.ap, b.ap);
        }
        assert_eq!(base.map, after.map);
    }

    #[test]
    fn lower_threshold_never_decreases_ap() {
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0)];
        // prediction covering half the frames: tube IoU about 0.5
        let pred = vec![traj(10, 4, 1..=10, 100.0, 0.9)];
        let report = evaluate(&pred, &gt, &[0.25, 0.5, 0.75]).unwrap();
        let aps: Vec<f64> = report.cells.iter().map(|c| c.ap).collect();
        assert!(aps[0] >= aps[1]);
        assert!(aps[1] >= aps[2]);
        assert!(aps[0] > 0.0);
        assert_eq!(aps[2], 0.0);
    }

    #[test]
    fn classes_evaluated_independently() {
        let gt = vec![traj(1, 4, 1..=20, 100.0, 1.0), traj(2, 1, 1..=20, 300.0, 1.0)];
        // only the class-4 object is predicted
        let preds = vec![traj(10, 4, 1..=20, 100.0, 0.9)];
        let report = evaluate(&preds, &gt, &[0.5]).unwrap();
        assert_eq!(report.cells.len(), 2);
        let class4 = report.cells.iter().find(|c| c.class_id == 4).unwrap();
        let class1 = report.cells.iter().find(|c| c.class_id == 1).unwrap();
        assert_eq!(class4.ap, 1.0);
        assert_eq!(class1.ap, 0.0);
        assert!((report.map - 0.5).abs() < 1e-12);
    }
}
