//! Pinhole geometry: box centers, depth lookup, backprojection and its
//! forward counterpart.

use crate::error::{Error, Result};
use crate::frame::BoundingBox;
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel<S> {
    pub u: S,
    pub v: S,
}

impl<S: Scalar> Pixel<S> {
    pub fn new(u: S, v: S) -> Self {
        Self { u, v }
    }
}

/// Rectangular block of depth values, inclusive pixel bounds, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPatch<S> {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> DepthPatch<S> {
    pub fn filled(x0: usize, y0: usize, x1: usize, y1: usize, v: S) -> Self {
        Self { x0, y0, x1, y1, values: vec![v; (x1 - x0 + 1) * (y1 - y0 + 1)] }
    }

    fn contains(&self, col: usize, row: usize) -> bool {
        (self.x0..=self.x1).contains(&col) && (self.y0..=self.y1).contains(&row)
    }

    fn offset(&self, col: usize, row: usize) -> usize {
        (row - self.y0) * (self.x1 - self.x0 + 1) + (col - self.x0)
    }
}

/// Metric depth image stored as a background value plus rectangular patches;
/// later patches cover earlier ones. Non-positive or NaN entries are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid<S> {
    width: usize,
    height: usize,
    background: S,
    patches: Vec<DepthPatch<S>>,
}

impl<S: Scalar> DepthGrid<S> {
    /// Dense grid from row-major values.
    pub fn new(width: usize, height: usize, values: Vec<S>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depth values for a {width}x{height} grid",
                values.len()
            )));
        }
        let full = DepthPatch { x0: 0, y0: 0, x1: width - 1, y1: height - 1, values };
        Ok(Self { width, height, background: S::zero(), patches: vec![full] })
    }

    pub fn filled(width: usize, height: usize, value: S) -> Self {
        Self { width, height, background: value, patches: Vec::new() }
    }

    /// Background plus patches; patches must lie inside the grid.
    pub fn from_patches(width: usize, height: usize, background: S, patches: Vec<DepthPatch<S>>) -> Result<Self> {
        for p in &patches {
            let ok = p.x0 <= p.x1
                && p.y0 <= p.y1
                && p.x1 < width
                && p.y1 < height
                && p.values.len() == (p.x1 - p.x0 + 1) * (p.y1 - p.y0 + 1);
            if !ok {
                return Err(Error::ShapeMismatch(format!(
                    "depth patch [{}, {}]x[{}, {}] with {} values does not fit a {width}x{height} grid",
                    p.x0,
                    p.x1,
                    p.y0,
                    p.y1,
                    p.values.len()
                )));
            }
        }
        Ok(Self { width, height, background, patches })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn background(&self) -> S {
        self.background
    }

    pub fn patches(&self) -> &[DepthPatch<S>] {
        &self.patches
    }

    pub fn get(&self, col: usize, row: usize) -> S {
        self.patches
            .iter()
            .rev()
            .find(|p| p.contains(col, row))
            .map_or(self.background, |p| p.values[p.offset(col, row)])
    }

    pub fn set(&mut self, col: usize, row: usize, v: S) {
        if let Some(p) = self.patches.iter_mut().rev().find(|p| p.contains(col, row)) {
            let o = p.offset(col, row);
            p.values[o] = v;
        } else {
            self.patches.push(DepthPatch { x0: col, y0: row, x1: col, y1: row, values: vec![v] });
        }
    }

    /// Paints `v` over the box's pixel rectangle.
    pub fn fill_box(&mut self, b: &BoundingBox<S>, v: S) {
        let (x0, y0, x1, y1) = self.box_pixels(b);
        self.patches.push(DepthPatch::filled(x0, y0, x1, y1, v));
    }

    pub fn nan_count(&self) -> usize {
        // count visible NaNs only
        let mut n = if self.background.is_nan() && self.patches.is_empty() { self.width * self.height } else { 0 };
        if !self.patches.is_empty() {
            for (k, p) in self.patches.iter().enumerate() {
                for row in p.y0..=p.y1 {
                    for col in p.x0..=p.x1 {
                        let covered = self.patches[k + 1..].iter().any(|q| q.contains(col, row));
                        if !covered && p.values[p.offset(col, row)].is_nan() {
                            n += 1;
                        }
                    }
                }
            }
            if self.background.is_nan() {
                n += (0..self.height)
                    .flat_map(|r| (0..self.width).map(move |c| (c, r)))
                    .filter(|&(c, r)| !self.patches.iter().any(|p| p.contains(c, r)))
                    .count();
            }
        }
        n
    }

    /// Inclusive integer pixel rectangle covered by a box (after rounding),
    /// clamped to the grid.
    pub fn box_pixels(&self, b: &BoundingBox<S>) -> (usize, usize, usize, usize) {
        let clamp = |x: S, n: usize| -> usize {
            let r = x.round().max(S::zero()).as_f64() as usize;
            r.min(n - 1)
        };
        (
            clamp(b.x_min, self.width),
            clamp(b.y_min, self.height),
            clamp(b.x_max, self.width),
            clamp(b.y_max, self.height),
        )
    }
}

pub fn is_valid_depth<S: Scalar>(d: S) -> bool {
    d.is_finite() && d > S::zero()
}

pub fn bbox_center<S: Scalar>(b: &BoundingBox<S>) -> Pixel<S> {
    Pixel::new((b.x_min + b.x_max) * S::half(), (b.y_min + b.y_max) * S::half())
}

/// Depth at the nearest integer pixel; when that value is invalid, the median
/// of the valid values in the `window × window` neighbourhood (even counts
/// average the two middle values).
pub fn depth_at<S: Scalar>(depth: &DepthGrid<S>, p: Pixel<S>, window: usize) -> Result<S> {
    let (w, h) = (depth.width(), depth.height());
    let (uf, vf) = (p.u.round(), p.v.round());
    let inside = uf >= S::zero()
        && vf >= S::zero()
        && uf < S::from_usize_lossy(w)
        && vf < S::from_usize_lossy(h)
        && p.u.is_finite()
        && p.v.is_finite();
    if !inside {
        return Err(Error::PixelOutOfGrid { u: p.u.as_f64(), v: p.v.as_f64(), width: w, height: h });
    }
    let (col, row) = (uf.as_f64() as usize, vf.as_f64() as usize);
    let d = depth.get(col, row);
    if is_valid_depth(d) {
        return Ok(d);
    }
    let r = window / 2;
    let mut valid: Vec<S> = Vec::with_capacity(window * window);
    for y in row.saturating_sub(r)..=(row + r).min(h - 1) {
        for x in col.saturating_sub(r)..=(col + r).min(w - 1) {
            let v = depth.get(x, y);
            if is_valid_depth(v) {
                valid.push(v);
            }
        }
    }
    if valid.is_empty() {
        return Err(Error::NoValidDepth { u: p.u.as_f64(), v: p.v.as_f64(), window });
    }
    valid.sort_by(|a, b| a.partial_cmp(b).expect("valid depths are finite"));
    let n = valid.len();
    Ok(if n % 2 == 1 { valid[n / 2] } else { (valid[n / 2 - 1] + valid[n / 2]) * S::half() })
}

/// `D · K⁻¹ (u, v, 1)ᵀ` in the camera frame.
pub fn backproject<S: Scalar>(p: Pixel<S>, depth: S, k: &CameraIntrinsics<S>) -> Result<Point3<S>> {
    if !(depth > S::zero()) {
        return Err(Error::NonPositiveDepth(depth.as_f64()));
    }
    Ok(Point3::new((p.u - k.cx) / k.fx * depth, (p.v - k.cy) / k.fy * depth, depth))
}

pub fn transform_point<S: Scalar>(t: &RigidTransform<S>, p: Point3<S>) -> Point3<S> {
    t.apply(p)
}

/// Pixel and depth of a camera-frame point.
pub fn project<S: Scalar>(p: Point3<S>, k: &CameraIntrinsics<S>) -> Result<(Pixel<S>, S)> {
    if !(p.z > S::zero()) {
        return Err(Error::BehindCamera(p.z.as_f64()));
    }
    Ok((Pixel::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy), p.z))
}
