//! Linear feedback actors: greedy gain extraction from critic kernels and
//! gradient updates toward the extracted target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::critic::QuadraticKernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRole {
    /// State feedback acting on the measurement vector.
    Optimizer,
    /// Error feedback acting on the tracking-error window.
    Tracker,
}

/// Row-gain feedback law `output = gain * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub gain: DMatrix<f64>,
    pub role: PolicyRole,
}

impl LinearPolicy {
    pub fn zeros(rows: usize, cols: usize, role: PolicyRole) -> Self {
        Self {
            gain: DMatrix::zeros(rows, cols),
            role,
        }
    }

    pub fn from_row(gain: &[f64], role: PolicyRole) -> Self {
        Self {
            gain: DMatrix::from_row_slice(1, gain.len(), gain),
            role,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gain.iter().all(|g| g.is_finite())
    }
}

/// Greedy policy from a kernel: `gain = -(K_uu + ridge I)^-1 K_ux`.
///
/// With `ridge = 0` a numerically singular control block is reported as an
/// error, signalling insufficient excitation.
pub fn policy_from_kernel(kernel: &QuadraticKernel, ridge: f64, role: PolicyRole) -> Result<LinearPolicy> {
    let kuu = kernel.control_block();
    let kux = kernel.control_state_block();
    let m = kuu.nrows();
    let regularized = &kuu + DMatrix::identity(m, m) * ridge;
    if ridge == 0.0 && kuu.determinant().abs() < 1e-12 {
        return Err(Error::SingularKernel);
    }
    let inv = regularized.try_inverse().ok_or(Error::SingularKernel)?;
    Ok(LinearPolicy {
        gain: -inv * kux,
        role,
    })
}

/// Applies the feedback law: `gain * v`.
pub fn apply_policy(p: &LinearPolicy, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != p.gain.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "policy acts on vectors of length {}, got {}",
            p.gain.ncols(),
            v.len()
        )));
    }
    Ok(&p.gain * v)
}

/// Gradient actor step toward the target policy's output at `v`:
///
/// `gain <- gain - rate * (gain v - target v) v'`
pub fn actor_update(
    p: &LinearPolicy,
    v: &DVector<f64>,
    target_policy: &LinearPolicy,
    rate: f64,
) -> Result<LinearPolicy> {
    let out = apply_policy(p, v)?;
    let target_out = apply_policy(target_policy, v)?;
    let err = out - target_out;
    if err.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("actor output error"));
    }
    Ok(LinearPolicy {
        gain: &p.gain - (err * v.transpose()) * rate,
        role: p.role,
    })
}
