//! Constant-velocity Kalman filter over `[u, v, s, r, du, dv, ds]`: box
//! center, area and aspect ratio plus the rates of the first three. The
//! aspect ratio has no rate and is carried unchanged by prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 7;
pub const MEAS_DIM: usize = 4;

/// Smallest area a predicted box may shrink to, in px².
pub const AREA_FLOOR: f64 = 1.0;
const RATIO_FLOOR: f64 = 1e-6;

pub type Mat7<T> = [[T; STATE_DIM]; STATE_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NoiseConfig<T> {
    /// Variances of the `(u, v, s, r)` observation.
    pub measurement_var: [T; MEAS_DIM],
    /// Diagonal process noise, one entry per state component.
    pub process_var: [T; STATE_DIM],
    /// A fresh track's velocity variances are this multiple of the
    /// measurement variance of the component they move (`u`, `v`, `s`).
    pub initial_velocity_var: T,
}

impl<T: Scalar> Default for NoiseConfig<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            measurement_var: [l(1.0), l(1.0), l(10.0), l(10.0)],
            process_var: [l(1.0), l(1.0), l(1.0), l(1.0), l(0.01), l(0.01), l(0.01)],
            initial_velocity_var: l(1000.0),
        }
    }
}

impl<T: Scalar> NoiseConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .measurement_var
            .iter()
            .chain(self.process_var.iter())
            .chain(std::iter::once(&self.initial_velocity_var));
        for v in all {
            if !(v.is_finite() && *v > T::zero()) {
                return Err(Error::InvalidParameter(format!("noise variance {v} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState<T> {
    pub mean: [T; STATE_DIM],
    pub covariance: Mat7<T>,
}

impl<T: Scalar> MotionState<T> {
    #[inline]
    pub fn area(&self) -> T {
        self.mean[2]
    }

    #[inline]
    pub fn area_rate(&self) -> T {
        self.mean[6]
    }

    pub fn to_box(&self) -> Result<BoundingBox<T>> {
        box_from_state(self)
    }

    fn clamp_shape(&mut self) {
        let s_floor = T::lit(AREA_FLOOR);
        if !(self.mean[2] >= s_floor) {
            self.mean[2] = s_floor;
        }
        let r_floor = T::lit(RATIO_FLOOR);
        if !(self.mean[3] >= r_floor) {
            self.mean[3] = r_floor;
        }
    }
}

/// `(u, v, s, r)` observation for a box with positive width and height.
pub fn state_from_box<T: Scalar>(bb: &BoundingBox<T>) -> Result<[T; MEAS_DIM]> {
    let (w, h) = (bb.width(), bb.height());
    if !(w > T::zero() && h > T::zero()) {
        return Err(Error::DegenerateBox(format!("{w}x{h} box has no state")));
    }
    let (u, v) = bb.center();
    Ok([u, v, w * h, w / h])
}

pub fn box_from_state<T: Scalar>(m: &MotionState<T>) -> Result<BoundingBox<T>> {
    let [u, v, s, r, ..] = m.mean;
    if !(s > T::zero() && r > T::zero()) {
        return Err(Error::DegenerateBox(format!("state with area {s} and ratio {r}")));
    }
    let w = (s * r).sqrt();
    let h = s / w;
    BoundingBox::from_center(u, v, w, h)
}

pub fn init_track_state<T: Scalar>(bb: &BoundingBox<T>, noise: &NoiseConfig<T>) -> Result<MotionState<T>> {
    let z = state_from_box(bb)?;
    let mut mean = [T::zero(); STATE_DIM];
    mean[..MEAS_DIM].copy_from_slice(&z);
    let mut covariance = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..MEAS_DIM {
        covariance[i][i] = noise.measurement_var[i];
    }
    for i in MEAS_DIM..STATE_DIM {
        covariance[i][i] = noise.initial_velocity_var * noise.measurement_var[i - MEAS_DIM];
    }
    Ok(MotionState { mean, covariance })
}

/// One constant-velocity step. The area is floored at [`AREA_FLOOR`].
pub fn predict<T: Scalar>(m: &MotionState<T>, noise: &NoiseConfig<T>) -> MotionState<T> {
    let mut mean = m.mean;
    for i in 0..3 {
        mean[i] += m.mean[i + 4];
    }

    // F P F^T with F = I + E, E[i][i + 4] = 1 for i < 3.
    let p = &m.covariance;
    let mut fp = *p;
    for i in 0..3 {
        for j in 0..STATE_DIM {
            fp[i][j] += p[i + 4][j];
        }
    }
    let mut covariance = fp;
    for i in 0..STATE_DIM {
        for j in 0..3 {
            covariance[i][j] += fp[i][j + 4];
        }
    }
    for (i, q) in noise.process_var.iter().enumerate() {
        covariance[i][i] += *q;
    }

    let mut out = MotionState { mean, covariance };
    out.clamp_shape();
    out
}

/// Kalman measurement update observing `(u, v, s, r)`. Uses the Joseph form
/// so the posterior covariance stays symmetric positive semidefinite.
pub fn correct<T: Scalar>(m: &MotionState<T>, z: &[T; MEAS_DIM], noise: &NoiseConfig<T>) -> Result<MotionState<T>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurement"));
    }
    let p = &m.covariance;
    let r = &noise.measurement_var;

    let mut s = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for i in 0..MEAS_DIM {
        for j in 0..MEAS_DIM {
            s[i][j] = p[i][j];
        }
        s[i][i] += r[i];
    }
    let s_inv = invert_spd4(&s)?;

    // K = P H^T S^-1, P H^T is the first four columns of P.
    let mut k = [[T::zero(); MEAS_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for j in 0..MEAS_DIM {
            let mut acc = T::zero();
            for l in 0..MEAS_DIM {
                acc += p[i][l] * s_inv[l][j];
            }
            k[i][j] = acc;
        }
    }

    let mut innovation = [T::zero(); MEAS_DIM];
    for i in 0..MEAS_DIM {
        innovation[i] = z[i] - m.mean[i];
    }
    let mut mean = m.mean;
    for i in 0..STATE_DIM {
        for j in 0..MEAS_DIM {
            mean[i] += k[i][j] * innovation[j];
        }
    }

    // (I - KH) P (I - KH)^T + K R K^T
    let mut a = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        a[i][i] = T::one();
        for j in 0..MEAS_DIM {
            a[i][j] -= k[i][j];
        }
    }
    let ap = matmul(&a, p);
    let mut covariance = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for j in i..STATE_DIM {
            let mut acc = T::zero();
            for l in 0..STATE_DIM {
                acc += ap[i][l] * a[j][l];
            }
            for l in 0..MEAS_DIM {
                acc += k[i][l] * r[l] * k[j][l];
            }
            covariance[i][j] = acc;
            covariance[j][i] = acc;
        }
    }

    let mut out = MotionState { mean, covariance };
    out.clamp_shape();
    Ok(out)
}

/// Halves the area rate of a track that is believed occluded.
pub fn occluded_update<T: Scalar>(m: &MotionState<T>) -> MotionState<T> {
    let mut out = *m;
    out.mean[6] = m.mean[6] / T::lit(2.0);
    out
}

fn matmul<T: Scalar>(a: &Mat7<T>, b: &Mat7<T>) -> Mat7<T> {
    let mut out = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for l in 0..STATE_DIM {
            let ail = a[i][l];
            if ail == T::zero() {
                continue;
            }
            for j in 0..STATE_DIM {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

/// Inverse of a symmetric positive definite 4x4 matrix via Cholesky.
fn invert_spd4<T: Scalar>(s: &[[T; MEAS_DIM]; MEAS_DIM]) -> Result<[[T; MEAS_DIM]; MEAS_DIM]> {
    let mut l = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for i in 0..MEAS_DIM {
        for j in 0..=i {
            let mut acc = s[i][j];
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(acc > T::zero()) {
                    return Err(Error::InvalidParameter("innovation covariance is not positive definite".into()));
                }
                l[i][i] = acc.sqrt();
            } else {
                l[i][j] = acc / l[j][j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    let mut inv = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for col in 0..MEAS_DIM {
        let mut y = [T::zero(); MEAS_DIM];
        for i in 0..MEAS_DIM {
            let mut acc = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                acc -= l[i][k] * y[k];
            }
            y[i] = acc / l[i][i];
        }
        for i in (0..MEAS_DIM).rev() {
            let mut acc = y[i];
            for k in i + 1..MEAS_DIM {
                acc -= l[k][i] * inv[k][col];
            }
            inv[i][col] = acc / l[i][i];
        }
    }
    Ok(inv)
}
