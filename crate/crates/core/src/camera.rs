//! Camera-motion compensation: per-frame affine transforms warping predicted
//! track states into the current frame's coordinates.

use std::collections::BTreeMap;

use nalgebra::Matrix2;

use crate::model::BBox;
use crate::motion::{StateMatrix, TrackState};
use crate::{Error, Result};

/// 2x3 affine transform mapping frame t-1 coordinates into frame t
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineTransform {
    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64, tx: f64, ty: f64) -> Result<Self> {
        let t = AffineTransform {
            a11,
            a12,
            a21,
            a22,
            tx,
            ty,
        };
        if [a11, a12, a21, a22, tx, ty].iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite affine transform"));
        }
        if t.det().abs() <= 1e-9 {
            return Err(Error::input(format!(
                "singular affine transform, |det| = {}",
                t.det().abs()
            )));
        }
        Ok(t)
    }

    pub fn identity() -> Self {
        AffineTransform {
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform {
            tx,
            ty,
            ..AffineTransform::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == AffineTransform::identity()
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn linear(&self) -> Matrix2<f64> {
        Matrix2::new(self.a11, self.a12, self.a21, self.a22)
    }

    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a11 * x + self.a12 * y + self.tx,
            self.a21 * x + self.a22 * y + self.ty,
        )
    }

    /// Composition `self` after `inner`: (self ∘ inner)(x) = self(inner(x)).
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        AffineTransform {
            a11: self.a11 * inner.a11 + self.a12 * inner.a21,
            a12: self.a11 * inner.a12 + self.a12 * inner.a22,
            a21: self.a21 * inner.a11 + self.a22 * inner.a21,
            a22: self.a21 * inner.a12 + self.a22 * inner.a22,
            tx: self.a11 * inner.tx + self.a12 * inner.ty + self.tx,
            ty: self.a21 * inner.tx + self.a22 * inner.ty + self.ty,
        }
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.det();
        let (b11, b12, b21, b22) = (
            self.a22 / det,
            -self.a12 / det,
            -self.a21 / det,
            self.a11 / det,
        );
        AffineTransform::new(
            b11,
            b12,
            b21,
            b22,
            -(b11 * self.tx + b12 * self.ty),
            -(b21 * self.tx + b22 * self.ty),
        )
    }

    /// Ratio of the linear part's column norms: the width-to-height scale
    /// change applied to the aspect ratio.
    fn aspect_scale(&self) -> f64 {
        let cx = (self.a11 * self.a11 + self.a21 * self.a21).sqrt();
        let cy = (self.a12 * self.a12 + self.a22 * self.a22).sqrt();
        cx / cy
    }
}

/// Warps a box: transforms the four corners and returns their axis-aligned
/// bounding box.
pub fn warp_box(t: &AffineTransform, b: &BBox) -> Result<BBox> {
    let corners = [
        t.apply_point(b.left, b.top),
        t.apply_point(b.right(), b.top),
        t.apply_point(b.left, b.bottom()),
        t.apply_point(b.right(), b.bottom()),
    ];
    let left = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let right = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let top = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let bottom = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    if right - left <= 0.0 || bottom - top <= 0.0 {
        return Err(Error::numerical("warped box is degenerate"));
    }
    BBox::new(left, top, right - left, bottom - top)
}

/// Warps a predicted state into the current frame: the center maps through
/// the affine transform, height scales by sqrt(|det|), aspect by the column
/// norm ratio, velocities by the linear part, and the covariance is
/// conjugated by the block Jacobian of that map.
pub fn compensate(state: &TrackState, t: &AffineTransform) -> Result<TrackState> {
    if t.is_identity() {
        return Ok(state.clone());
    }
    let sdet = t.det().abs().sqrt();
    let ratio = t.aspect_scale();
    let lin = t.linear();

    let input_size_ok = state.mean[2] > 0.0 && state.mean[3] > 0.0;
    let mut mean = state.mean;
    let (cx, cy) = t.apply_point(mean[0], mean[1]);
    mean[0] = cx;
    mean[1] = cy;
    mean[2] *= ratio;
    mean[3] *= sdet;
    let v = lin * nalgebra::Vector2::new(mean[4], mean[5]);
    mean[4] = v[0];
    mean[5] = v[1];
    mean[6] *= ratio;
    mean[7] *= sdet;

    // a coasting track can already carry a non-positive size estimate; only
    // a transform-caused collapse is an error
    if input_size_ok && (mean[3] <= 0.0 || mean[2] <= 0.0) {
        return Err(Error::numerical("compensated state has degenerate size"));
    }

    let mut jac = StateMatrix::identity();
    for (r0, c0) in [(0, 0), (4, 4)] {
        jac[(r0, c0)] = lin[(0, 0)];
        jac[(r0, c0 + 1)] = lin[(0, 1)];
        jac[(r0 + 1, c0)] = lin[(1, 0)];
        jac[(r0 + 1, c0 + 1)] = lin[(1, 1)];
    }
    jac[(2, 2)] = ratio;
    jac[(3, 3)] = sdet;
    jac[(6, 6)] = ratio;
    jac[(7, 7)] = sdet;

    let cov = jac * state.cov * jac.transpose();
    Ok(TrackState::new(mean, (cov + cov.transpose()) * 0.5))
}

/// Per-frame transform table loaded from a sidecar file. Frames without an
/// entry are treated as identity.
#[derive(Debug, Clone, Default)]
pub struct TransformTable {
    map: BTreeMap<i64, AffineTransform>,
}

impl TransformTable {
    pub fn new() -> Self {
        TransformTable::default()
    }

    pub fn insert(&mut self, frame: i64, t: AffineTransform) {
        self.map.insert(frame, t);
    }

    /// Transform mapping frame-1 coordinates into `frame` coordinates.
    pub fn get(&self, frame: i64) -> AffineTransform {
        self.map
            .get(&frame)
            .copied()
            .unwrap_or_else(AffineTransform::identity)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&i64, &AffineTransform)> {
        self.map.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{StateVector, NoiseConfig, Measurement};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_state() -> TrackState {
        let z = Measurement::new(10.0, 20.0, 0.5, 40.0);
        let mut s = TrackState::from_measurement(&z, &NoiseConfig::default());
        s.mean[4] = 2.0;
        s.mean[5] = -1.0;
        s
    }

    #[test]
    fn warp_identity_keeps_box() {
        let b = BBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(warp_box(&AffineTransform::identity(), &b).unwrap(), b);
    }

    #[test]
    fn warp_translation_shifts_box() {
        let b = BBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        let t = AffineTransform::translation(5.0, -3.0);
        let out = warp_box(&t, &b).unwrap();
        assert_eq!(out, BBox::new(6.0, -1.0, 3.0, 4.0).unwrap());
    }

    #[test]
    fn warp_uniform_scale() {
        let b = BBox::new(1.0, 1.0, 2.0, 2.0).unwrap();
        let t = AffineTransform::new(2.0, 0.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        let out = warp_box(&t, &b).unwrap();
        assert_eq!(out, BBox::new(2.0, 2.0, 4.0, 4.0).unwrap());
    }

    #[test]
    fn singular_transform_rejected() {
        assert!(AffineTransform::new(1.0, 0.0, 2.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn compensate_identity_is_noop() {
        let s = sample_state();
        let out = compensate(&s, &AffineTransform::identity()).unwrap();
        assert_eq!(out.mean, s.mean);
        assert_eq!(out.cov, s.cov);
    }

    #[test]
    fn compensate_translation_shifts_center_only() {
        let s = sample_state();
        let t = AffineTransform::translation(7.0, -2.0);
        let out = compensate(&s, &t).unwrap();
        assert_relative_eq!(out.mean[0], s.mean[0] + 7.0, epsilon = 1e-12);
        assert_relative_eq!(out.mean[1], s.mean[1] - 2.0, epsilon = 1e-12);
        for i in 2..8 {
            assert_relative_eq!(out.mean[i], s.mean[i], epsilon = 1e-12);
        }
        assert_eq!(out.cov, s.cov);
    }

    #[test]
    fn compensate_uniform_scale_doubles_height() {
        let s = sample_state();
        let t = AffineTransform::new(2.0, 0.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        let out = compensate(&s, &t).unwrap();
        assert_relative_eq!(out.mean[3], s.mean[3] * 2.0, epsilon = 1e-12);
        assert_relative_eq!(out.mean[2], s.mean[2], epsilon = 1e-12);
        assert_relative_eq!(out.mean[0], s.mean[0] * 2.0, epsilon = 1e-12);
    }

    proptest! {
        // round trip through a similarity transform and its inverse
        #[test]
        fn compensate_round_trip(
            angle in -1.0..1.0f64,
            scale in 0.5..2.0f64,
            tx in -20.0..20.0f64,
            ty in -20.0..20.0f64,
        ) {
            let (s, c) = (angle.sin(), angle.cos());
            let t = AffineTransform::new(scale * c, -scale * s, scale * s, scale * c, tx, ty).unwrap();
            let state = sample_state();
            let warped = compensate(&state, &t).unwrap();
            let back = compensate(&warped, &t.inverse().unwrap()).unwrap();
            for i in 0..8 {
                prop_assert!((back.mean[i] - state.mean[i]).abs() < 1e-6);
            }
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert!((back.cov[(i, j)] - state.cov[(i, j)]).abs() < 1e-6);
                }
            }
        }
    }
}
