//! Quantitative evaluation: NACI, tracking-error statistics, discrete to
//! continuous pole mapping, and the Riccati/Lyapunov oracles used as ground
//! truth for the learners.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::actor::LinearPolicy;
use crate::critic::QuadraticKernel;
use crate::error::{Error, Result};
use crate::plant::PlantModel;
use crate::trace::LearningTrace;

/// Normalization weights of the Normalized Accumulated Cost Index.
#[derive(Debug, Clone, PartialEq)]
pub struct NaciWeights {
    /// Diagonal state normalization (n x n).
    pub v1: DMatrix<f64>,
    /// Control normalization (m x m).
    pub v2: DMatrix<f64>,
    /// Number of samples accumulated.
    pub n_samples: usize,
}

impl NaciWeights {
    /// Normalization used for the flexible-wing runs: squares of the maximum
    /// measured values, over a 10 s horizon at 1 kHz.
    pub fn flexible_wing() -> Self {
        Self {
            v1: DMatrix::from_diagonal(&DVector::from_row_slice(&[
                0.0006, 0.0174, 0.0208, 1.5625, 0.0483,
            ])),
            v2: DMatrix::from_element(1, 1, 0.2268),
            n_samples: 10_000,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }
}

/// Continuous-time pole set (rad/s). A discrete eigenvalue at exactly zero
/// maps to the `-inf` sentinel, reported distinctly by callers.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub poles: Vec<Complex<f64>>,
}

impl PoleSet {
    pub fn all_strictly_stable(&self) -> bool {
        self.poles.iter().all(|p| p.re < 0.0)
    }

    /// Real part of the slowest (least negative) finite pole.
    pub fn dominant_real_part(&self) -> f64 {
        self.poles
            .iter()
            .filter(|p| p.re.is_finite())
            .map(|p| p.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Conjugate closure check for pole sets of real systems.
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        self.poles.iter().all(|p| {
            p.im.abs() <= tol
                || self
                    .poles
                    .iter()
                    .any(|q| (q.re - p.re).abs() <= tol && (q.im + p.im).abs() <= tol)
        })
    }
}

/// Normalized Accumulated Cost Index over the first `n_samples` steps:
/// `(1/N) sum [x; u_T]' blockdiag(V1, V2) [x; u_T]`.
pub fn naci(trace: &LearningTrace, w: &NaciWeights) -> Result<f64> {
    if trace.len() < w.n_samples {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} steps but NACI needs {}",
            trace.len(),
            w.n_samples
        )));
    }
    let mut acc = 0.0;
    for r in &trace.records[..w.n_samples] {
        acc += (r.x.transpose() * &w.v1 * &r.x)[(0, 0)];
        acc += (r.u_total.transpose() * &w.v2 * &r.u_total)[(0, 0)];
    }
    Ok(acc / w.n_samples as f64)
}

/// Running average of the accumulated squared tracking error:
/// `a_k = (1/(k+1)) sum_{j<=k} e_j^2`.
pub fn avg_accumulated_squared_error(trace: &LearningTrace) -> Vec<f64> {
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = 0.0;
    for (k, r) in trace.records.iter().enumerate() {
        acc += r.error * r.error;
        out.push(acc / (k + 1) as f64);
    }
    out
}

fn to_continuous(z: Complex<f64>, ts: f64) -> Complex<f64> {
    if z.norm() == 0.0 {
        return Complex::new(f64::NEG_INFINITY, 0.0);
    }
    Complex::new(z.norm().ln() / ts, z.arg() / ts)
}

/// Continuous-time poles of `A + B K` under the optimizer feedback gain,
/// mapped per eigenvalue through the principal logarithm. `K = 0` yields the
/// open-loop poles.
pub fn closed_loop_poles(model: &PlantModel, optimizer_gain: &LinearPolicy) -> Result<PoleSet> {
    if optimizer_gain.gain.ncols() != model.state_dim()
        || optimizer_gain.gain.nrows() != model.control_dim()
    {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{} but plant needs {}x{}",
            optimizer_gain.gain.nrows(),
            optimizer_gain.gain.ncols(),
            model.control_dim(),
            model.state_dim()
        )));
    }
    let closed = &model.a + &model.b * &optimizer_gain.gain;
    let eigs = closed.complex_eigenvalues();
    let mut poles: Vec<Complex<f64>> = eigs.iter().map(|&z| to_continuous(z, model.ts)).collect();
    poles.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    Ok(PoleSet { poles })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn q_kernel_from_p(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> QuadraticKernel {
    let n = a.nrows();
    let m = b.ncols();
    let mut h = DMatrix::zeros(n + m, n + m);
    let atp = a.transpose() * p;
    h.view_mut((0, 0), (n, n)).copy_from(&(q + &atp * a));
    let hxu = &atp * b;
    h.view_mut((0, n), (n, m)).copy_from(&hxu);
    h.view_mut((n, 0), (m, n)).copy_from(&hxu.transpose());
    h.view_mut((n, n), (m, m)).copy_from(&(r + b.transpose() * p * b));
    QuadraticKernel::from_matrix(h, n).expect("square by construction")
}

fn dare_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    let gram = (r + &btp * b).try_inverse().ok_or(Error::SingularKernel)?;
    Ok(q + a.transpose() * p * a - a.transpose() * p * b * gram * &btp * a)
}

/// Independent ground-truth Q-function kernel from the fixed-point Riccati
/// recursion `P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA` started at `P = 0`.
pub fn riccati_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<QuadraticKernel> {
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    for _ in 0..max_iter {
        let next = dare_step(a, b, q, r, &p)?;
        let change = (&next - &p).norm();
        p = next;
        if change < tol {
            return Ok(q_kernel_from_p(a, b, q, r, &p));
        }
    }
    Err(Error::NonConvergence { max_iter })
}

/// Exact batch value-iteration kernel sequence from the zero kernel:
/// `H^{r+1}` built from the greedy evaluation of `H^r`. Returns
/// `[H^1, ..., H^iters]`.
pub fn exact_value_iteration_kernels(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    iters: usize,
) -> Result<Vec<QuadraticKernel>> {
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        // The greedy state-value of the current kernel is the next DARE
        // iterate, so pushing before stepping yields H^1, H^2, ...
        out.push(q_kernel_from_p(a, b, q, r, &p));
        p = dare_step(a, b, q, r, &p)?;
    }
    Ok(out)
}

/// Q-function kernel of a fixed policy `u = K x`, from the discrete Lyapunov
/// recursion `P <- Q + K'RK + (A + BK)' P (A + BK)`.
pub fn policy_evaluation_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
) -> Result<QuadraticKernel> {
    let closed = a + b * k;
    let rho = spectral_radius(&closed);
    if rho >= 1.0 {
        return Err(Error::Inadmissible { rho });
    }
    let cost = q + k.transpose() * r * k;
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    let max_iter = 10_000_000;
    for _ in 0..max_iter {
        let next = &cost + closed.transpose() * &p * &closed;
        let change = (&next - &p).norm();
        p = next;
        if change < tol {
            return Ok(q_kernel_from_p(a, b, q, r, &p));
        }
    }
    Err(Error::NonConvergence { max_iter })
}
