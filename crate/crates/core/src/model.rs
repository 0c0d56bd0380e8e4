//! Shared domain types and box/tube geometry used by every stage.

use crate::{Error, Result};

/// Axis-aligned box in pixel coordinates, stored as (left, top, width, height)
/// to match the MOT text format exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        let b = BBox {
            left,
            top,
            width,
            height,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.left, self.top, self.width, self.height];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite box {self:?}")));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::input(format!(
                "degenerate box: width={} height={}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Measurement vector (cx, cy, aspect, height) used by the motion filters.
    pub fn to_cyah(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width / self.height, self.height]
    }

    /// Inverse of [`BBox::to_cyah`]. Fails on non-positive sizes.
    pub fn from_cyah(m: &[f64; 4]) -> Result<Self> {
        let [cx, cy, a, h] = *m;
        let w = a * h;
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }
}

/// One per-frame observation from the detector.
#[derive(Debug, Clone)]
pub struct Detection {
    /// 1-based frame index.
    pub frame: i64,
    pub bbox: BBox,
    /// Detector confidence in [0, 1].
    pub score: f64,
    /// Fine class id.
    pub class_id: u32,
    /// Per-frame ordinal; key into the embedding sidecar.
    pub det_idx: usize,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if self.frame < 1 {
            return Err(Error::input(format!("frame index {} < 1", self.frame)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::input(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }
}

/// One time point of a tracklet or trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub frame: i64,
    pub bbox: BBox,
    pub score: f64,
    pub class_id: u32,
    /// Per-frame detection ordinal; key into the embedding sidecar paired
    /// with the file this entry came from. Interpolated entries have none.
    pub det_idx: usize,
    /// Set on entries inserted by gap interpolation.
    pub interpolated: bool,
}

impl Entry {
    pub fn new(frame: i64, bbox: BBox, score: f64, class_id: u32) -> Self {
        Entry {
            frame,
            bbox,
            score,
            class_id,
            det_idx: 0,
            interpolated: false,
        }
    }

    pub fn with_det_idx(mut self, det_idx: usize) -> Self {
        self.det_idx = det_idx;
        self
    }
}

/// Identity-consistent detection chain produced by the online stage.
#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: i64,
    /// Time-ordered, frames strictly increasing.
    pub entries: Vec<Entry>,
    pub rough_class: u32,
}

impl Tracklet {
    pub fn start_frame(&self) -> i64 {
        self.entries.first().map(|e| e.frame).unwrap_or(0)
    }

    pub fn end_frame(&self) -> i64 {
        self.entries.last().map(|e| e.frame).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::input(format!("tracklet {} is empty", self.id)));
        }
        validate_frames_increasing(self.id, &self.entries)
    }
}

/// Final output unit: per-frame boxes and scores plus one or more
/// (class, weight) vote labels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: i64,
    pub entries: Vec<Entry>,
    /// Class votes; weights sum to at most 1. Empty means "not voted yet":
    /// per-entry classes are authoritative.
    pub class_votes: Vec<(u32, f64)>,
}

impl Trajectory {
    pub fn from_entries(id: i64, entries: Vec<Entry>) -> Self {
        Trajectory {
            id,
            entries,
            class_votes: Vec::new(),
        }
    }

    pub fn start_frame(&self) -> i64 {
        self.entries.first().map(|e| e.frame).unwrap_or(0)
    }

    pub fn end_frame(&self) -> i64 {
        self.entries.last().map(|e| e.frame).unwrap_or(0)
    }

    pub fn mean_score(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.score).sum::<f64>() / self.entries.len() as f64
    }

    pub fn sum_score(&self) -> f64 {
        self.entries.iter().map(|e| e.score).sum()
    }

    /// The single vote class of a per-class trajectory.
    pub fn sole_class(&self) -> Option<u32> {
        match self.class_votes.as_slice() {
            [(c, _)] => Some(*c),
            [] => self.entries.first().map(|e| e.class_id),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::input(format!("trajectory {} is empty", self.id)));
        }
        validate_frames_increasing(self.id, &self.entries)?;
        let total: f64 = self.class_votes.iter().map(|(_, w)| w).sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::input(format!(
                "trajectory {}: class vote weights sum to {total}",
                self.id
            )));
        }
        Ok(())
    }
}

fn validate_frames_increasing(id: i64, entries: &[Entry]) -> Result<()> {
    for pair in entries.windows(2) {
        if pair[1].frame <= pair[0].frame {
            return Err(Error::input(format!(
                "trajectory {}: frames not strictly increasing at frame {}",
                id, pair[1].frame
            )));
        }
    }
    Ok(())
}

/// Intersection area of two boxes, zero when disjoint.
fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.right().min(b.right()) - a.left.max(b.left);
    let h = a.bottom().min(b.bottom()) - a.top.max(b.top);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

/// Intersection-over-union of two boxes. Symmetric, in [0, 1].
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Trajectory-level overlap: summed per-frame intersection area over summed
/// per-frame union area, across the union of both frame supports. A frame
/// where one side is absent contributes nothing to the numerator and the
/// present box's area to the denominator.
pub fn tube_iou(a: &[Entry], b: &[Entry]) -> f64 {
    let mut inter_sum = 0.0;
    let mut union_sum = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(ea), Some(eb)) if ea.frame == eb.frame => {
                let inter = intersection_area(&ea.bbox, &eb.bbox);
                inter_sum += inter;
                union_sum += ea.bbox.area() + eb.bbox.area() - inter;
                i += 1;
                j += 1;
            }
            (Some(ea), Some(eb)) if ea.frame < eb.frame => {
                union_sum += ea.bbox.area();
                i += 1;
            }
            (Some(_), Some(eb)) => {
                union_sum += eb.bbox.area();
                j += 1;
            }
            (Some(ea), None) => {
                union_sum += ea.bbox.area();
                i += 1;
            }
            (None, Some(eb)) => {
                union_sum += eb.bbox.area();
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if union_sum <= 0.0 {
        0.0
    } else {
        inter_sum / union_sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(l: f64, t: f64, w: f64, h: f64) -> BBox {
        BBox::new(l, t, w, h).unwrap()
    }

    fn entries(frames_boxes: &[(i64, BBox)]) -> Vec<Entry> {
        frames_boxes
            .iter()
            .map(|(f, b)| Entry::new(*f, *b, 1.0, 1))
            .collect()
    }

    #[test]
    fn box_rejects_degenerate() {
        assert!(BBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, 5.0, -1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn box_iou_identical_is_one() {
        let a = bx(3.0, 4.0, 10.0, 20.0);
        assert_eq!(box_iou(&a, &a), 1.0);
    }

    #[test]
    fn box_iou_disjoint_is_zero() {
        let a = bx(0.0, 0.0, 1.0, 1.0);
        let b = bx(5.0, 5.0, 1.0, 1.0);
        assert_eq!(box_iou(&a, &b), 0.0);
    }

    #[test]
    fn box_iou_half_offset_unit_boxes() {
        // inter = 0.5, union = 1.5
        let a = bx(0.0, 0.0, 1.0, 1.0);
        let b = bx(0.5, 0.0, 1.0, 1.0);
        assert!((box_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tube_iou_self_is_one() {
        let t = entries(&[(1, bx(0.0, 0.0, 10.0, 10.0)), (2, bx(1.0, 0.0, 10.0, 10.0))]);
        assert_eq!(tube_iou(&t, &t), 1.0);
    }

    #[test]
    fn tube_iou_temporally_disjoint_is_zero() {
        let a = entries(&[(1, bx(0.0, 0.0, 10.0, 10.0))]);
        let b = entries(&[(2, bx(0.0, 0.0, 10.0, 10.0))]);
        assert_eq!(tube_iou(&a, &b), 0.0);
    }

    #[test]
    fn tube_iou_partial_overlap() {
        // frames {1,2} vs {2,3}, all boxes identical 10x10 -> 100 / 300
        let b = bx(0.0, 0.0, 10.0, 10.0);
        let t1 = entries(&[(1, b), (2, b)]);
        let t2 = entries(&[(2, b), (3, b)]);
        assert!((tube_iou(&t1, &t2) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tube_iou_single_frame_sub_trajectory() {
        // against a one-frame slice, the ratio is that frame's box area over
        // the tube's summed union area
        let b = bx(0.0, 0.0, 4.0, 5.0);
        let tube = entries(&[(1, b), (2, b), (3, b)]);
        let sub = entries(&[(2, b)]);
        let expected = b.area() / (3.0 * b.area());
        assert!((tube_iou(&tube, &sub) - expected).abs() < 1e-12);
    }

    #[test]
    fn vote_weight_sum_validated() {
        let mut t = Trajectory::from_entries(1, entries(&[(1, bx(0.0, 0.0, 1.0, 1.0))]));
        t.class_votes = vec![(1, 0.7), (2, 0.4)];
        assert!(t.validate().is_err());
    }

    proptest! {
        #[test]
        fn box_iou_symmetric_and_bounded(
            l1 in -50.0..50.0f64, t1 in -50.0..50.0f64, w1 in 0.1..40.0f64, h1 in 0.1..40.0f64,
            l2 in -50.0..50.0f64, t2 in -50.0..50.0f64, w2 in 0.1..40.0f64, h2 in 0.1..40.0f64,
        ) {
            let a = bx(l1, t1, w1, h1);
            let b = bx(l2, t2, w2, h2);
            let ab = box_iou(&a, &b);
            let ba = box_iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn tube_iou_symmetric_and_one_only_on_identity(
            frames_a in proptest::collection::btree_set(1i64..20, 1..8),
            frames_b in proptest::collection::btree_set(1i64..20, 1..8),
            shift in 0.0..5.0f64,
        ) {
            let b0 = bx(0.0, 0.0, 10.0, 10.0);
            let bs = bx(shift, 0.0, 10.0, 10.0);
            let a: Vec<Entry> = frames_a.iter().map(|f| Entry::new(*f, b0, 1.0, 1)).collect();
            let b: Vec<Entry> = frames_b.iter().map(|f| Entry::new(*f, bs, 1.0, 1)).collect();
            let ab = tube_iou(&a, &b);
            prop_assert!((ab - tube_iou(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            if ab == 1.0 {
                prop_assert_eq!(&frames_a, &frames_b);
                prop_assert!(shift == 0.0);
            }
        }
    }
}
