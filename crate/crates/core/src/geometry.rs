//! Axis-aligned boxes and the overlap measures used for association and
//! occlusion detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pixel rectangle in corner form. `right >= left`, `bottom >= top`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub left: T,
    pub top: T,
    pub right: T,
    pub bottom: T,
}

impl<T: Scalar> BoundingBox<T> {
    /// Builds a box from corners, rejecting negative extents and non-finite
    /// coordinates.
    pub fn new(left: T, top: T, right: T, bottom: T) -> Result<Self> {
        if !(left.is_finite() && top.is_finite() && right.is_finite() && bottom.is_finite()) {
            return Err(Error::NonFinite("bounding box"));
        }
        if right < left || bottom < top {
            return Err(Error::DegenerateBox(format!(
                "negative extent ({left}, {top}, {right}, {bottom})"
            )));
        }
        Ok(Self { left, top, right, bottom })
    }

    /// MOTChallenge `(left, top, width, height)` form.
    pub fn from_ltwh(left: T, top: T, width: T, height: T) -> Result<Self> {
        Self::new(left, top, left + width, top + height)
    }

    pub fn from_center(cx: T, cy: T, width: T, height: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new(cx - width / two, cy - height / two, cx + width / two, cy + height / two)
    }

    #[inline]
    pub fn width(&self) -> T {
        self.right - self.left
    }

    #[inline]
    pub fn height(&self) -> T {
        self.bottom - self.top
    }

    #[inline]
    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    #[inline]
    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        ((self.left + self.right) / two, (self.top + self.bottom) / two)
    }

    pub fn has_positive_area(&self) -> bool {
        self.width() > T::zero() && self.height() > T::zero()
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.left <= other.left
            && self.top <= other.top
            && self.right >= other.right
            && self.bottom >= other.bottom
    }

    pub fn to_ltwh(&self) -> [T; 4] {
        [self.left, self.top, self.width(), self.height()]
    }
}

/// Area of the overlap of two boxes; zero when they are disjoint.
#[inline]
pub fn intersection_area<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let w = a.right.min(b.right) - a.left.max(b.left);
    let h = a.bottom.min(b.bottom) - a.top.max(b.top);
    w.max(T::zero()) * h.max(T::zero())
}

/// Intersection over union. Two zero-area boxes score 0 instead of erroring.
#[inline]
pub fn iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        inter / union
    }
}

/// Fraction of `target`'s own area that `other` overlaps. Not symmetric.
pub fn covered_percent<T: Scalar>(target: &BoundingBox<T>, other: &BoundingBox<T>) -> Result<T> {
    let area = target.area();
    if area <= T::zero() {
        return Err(Error::DegenerateBox("covered_percent target has zero area".into()));
    }
    Ok(intersection_area(target, other) / area)
}

/// Grows `bb` about its center: each side is multiplied by
/// `1 + rate * time_since_observed`.
pub fn extend_box<T: Scalar>(bb: &BoundingBox<T>, time_since_observed: u32, rate: T) -> BoundingBox<T> {
    if time_since_observed == 0 {
        return *bb;
    }
    let scale = T::one() + rate * T::lit(f64::from(time_since_observed));
    let two = T::lit(2.0);
    let (cx, cy) = bb.center();
    let half_w = bb.width() * scale / two;
    let half_h = bb.height() * scale / two;
    BoundingBox { left: cx - half_w, top: cy - half_h, right: cx + half_w, bottom: cy + half_h }
}

/// IoU against an uncertainty-inflated target box. The intersection is taken
/// with `ext_target`, the denominator keeps the area of the unextended
/// `target`.
pub fn extended_iou<T: Scalar>(
    det: &BoundingBox<T>,
    target: &BoundingBox<T>,
    ext_target: &BoundingBox<T>,
) -> Result<T> {
    let inter = intersection_area(det, ext_target);
    let denom = det.area() + target.area() - inter;
    if denom <= T::zero() {
        return Err(Error::DegenerateBox(format!(
            "extended IoU denominator {denom} is not positive"
        )));
    }
    Ok(inter / denom)
}
