//! Quadratic value-function critics.
//!
//! Both learning loops approximate their solving value function with a
//! symmetric kernel over a stacked vector: `[x; u]` for the optimizer loop
//! and `[E; c]` for the tracker loop. The value is `0.5 * z' K z`; the two
//! update laws below are the direct (full-matrix) and modified
//! (upper-triangle vector) temporal-difference gradient steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric value-function kernel with a state/control block split.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticKernel {
    matrix: DMatrix<f64>,
    split: usize,
}

impl QuadraticKernel {
    /// Zero kernel of total dimension `split + control_dim`.
    pub fn zeros(split: usize, control_dim: usize) -> Self {
        let d = split + control_dim;
        Self {
            matrix: DMatrix::zeros(d, d),
            split,
        }
    }

    pub fn identity(split: usize, control_dim: usize) -> Self {
        let d = split + control_dim;
        Self {
            matrix: DMatrix::identity(d, d),
            split,
        }
    }

    /// Wraps a matrix, symmetrizing it to guard against drift.
    pub fn from_matrix(matrix: DMatrix<f64>, split: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "kernel must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if split > matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "split {} exceeds kernel dimension {}",
                split,
                matrix.nrows()
            )));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym, split })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// State-like diagonal block (`H_XX` / `Pi_EE`).
    pub fn state_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.split, self.split)).into()
    }

    /// Control-rows-by-state-columns block (`H_UX` / `Pi_CE`).
    pub fn control_state_block(&self) -> DMatrix<f64> {
        let m = self.dim() - self.split;
        self.matrix.view((self.split, 0), (m, self.split)).into()
    }

    /// State-rows-by-control-columns block (`H_XU` / `Pi_EC`).
    pub fn state_control_block(&self) -> DMatrix<f64> {
        let m = self.dim() - self.split;
        self.matrix.view((0, self.split), (self.split, m)).into()
    }

    /// Control-by-control block (`H_UU` / `Pi_CC`).
    pub fn control_block(&self) -> DMatrix<f64> {
        let m = self.dim() - self.split;
        self.matrix.view((self.split, self.split), (m, m)).into()
    }

    /// Upper-triangle vectorization: entry `(i, j)` with `i <= j` stored as
    /// `(2 - delta_ij) * K_ij`, so the quadratic form is an exact dot product
    /// with the monomial basis of [`quad_basis`].
    pub fn kernel_vector(&self) -> KernelVector {
        let d = self.dim();
        let mut entries = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                let factor = if i == j { 1.0 } else { 2.0 };
                entries.push(factor * self.matrix[(i, j)]);
            }
        }
        KernelVector {
            entries: DVector::from_vec(entries),
            dim: d,
            split: self.split,
        }
    }

    pub fn frobenius_distance(&self, other: &QuadraticKernel) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }
}

/// Upper-triangle coefficient vector of a symmetric kernel
/// (length `d (d + 1) / 2`, the sample count `nu` of the policy-evaluation
/// regression).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector {
    entries: DVector<f64>,
    dim: usize,
    split: usize,
}

impl KernelVector {
    /// Rebuilds a kernel vector from stored coefficients (the same
    /// `(2 - delta_ij) K_ij` convention produced by
    /// [`QuadraticKernel::kernel_vector`]). The kernel dimension is inferred
    /// from the triangular length.
    pub fn from_entries(entries: Vec<f64>, split: usize) -> Result<Self> {
        let len = entries.len();
        let dim = (0..).find(|d| d * (d + 1) / 2 >= len).unwrap_or(0);
        if dim * (dim + 1) / 2 != len {
            return Err(Error::DimensionMismatch(format!(
                "{len} entries is not a triangular number"
            )));
        }
        if split > dim {
            return Err(Error::DimensionMismatch(format!(
                "split {split} exceeds kernel dimension {dim}"
            )));
        }
        Ok(Self {
            entries: DVector::from_vec(entries),
            dim,
            split,
        })
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact inverse of [`QuadraticKernel::kernel_vector`].
    pub fn to_kernel(&self) -> QuadraticKernel {
        let d = self.dim;
        let mut matrix = DMatrix::zeros(d, d);
        let mut idx = 0;
        for i in 0..d {
            for j in i..d {
                let v = self.entries[idx];
                if i == j {
                    matrix[(i, j)] = v;
                } else {
                    matrix[(i, j)] = v / 2.0;
                    matrix[(j, i)] = v / 2.0;
                }
                idx += 1;
            }
        }
        QuadraticKernel {
            matrix,
            split: self.split,
        }
    }
}

/// One observed stacked-vector transition with its stage cost.
#[derive(Debug, Clone)]
pub struct Transition {
    pub z_now: DVector<f64>,
    pub z_next: DVector<f64>,
    pub stage_cost: f64,
}

/// Quadratic cost weights: a state-like weight (Q or S) and a control-like
/// weight (R or M), both symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub state_weight: DMatrix<f64>,
    pub control_weight: DMatrix<f64>,
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("state_weight", &self.state_weight),
            ("control_weight", &self.control_weight),
        ] {
            if m.nrows() != m.ncols() {
                return Err(Error::Config(vec![format!("{name}: must be square")]));
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::Config(vec![format!("{name}: must be symmetric")]));
            }
            let eigs = m.clone().symmetric_eigen().eigenvalues;
            if eigs.iter().any(|&l| l <= 0.0) {
                return Err(Error::Config(vec![format!(
                    "{name}: must be positive definite (min eigenvalue {})",
                    eigs.min()
                )]));
            }
        }
        Ok(())
    }
}

/// Value of the kernel at a stacked vector: `0.5 * z' K z`.
pub fn evaluate_value(kernel: &QuadraticKernel, z: &DVector<f64>) -> Result<f64> {
    if z.len() != kernel.dim() {
        return Err(Error::DimensionMismatch(format!(
            "stacked vector length {} does not match kernel dimension {}",
            z.len(),
            kernel.dim()
        )));
    }
    Ok(0.5 * (z.transpose() * &kernel.matrix * z)[(0, 0)])
}

/// Quadratic stage cost `0.5 (s' Q s + c' R c)`.
pub fn stage_cost(weights: &CostWeights, state_part: &DVector<f64>, control_part: &DVector<f64>) -> Result<f64> {
    if state_part.len() != weights.state_weight.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "state part length {} does not match weight dimension {}",
            state_part.len(),
            weights.state_weight.nrows()
        )));
    }
    if control_part.len() != weights.control_weight.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "control part length {} does not match weight dimension {}",
            control_part.len(),
            weights.control_weight.nrows()
        )));
    }
    let s = (state_part.transpose() * &weights.state_weight * state_part)[(0, 0)];
    let c = (control_part.transpose() * &weights.control_weight * control_part)[(0, 0)];
    Ok(0.5 * (s + c))
}

/// Monomial basis `z_i z_j` for `i <= j` in row-major upper-triangle order.
pub fn quad_basis(z: &DVector<f64>) -> DVector<f64> {
    let d = z.len();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(z[i] * z[j]);
        }
    }
    DVector::from_vec(out)
}

/// Direct (Algorithm-1 style) critic step: rank-one temporal-difference
/// descent on the full kernel, re-symmetrized.
///
/// `K <- K - rate * (value(z_now) - (stage_cost + next_value)) * z_now z_now'`
pub fn critic_update_direct(
    kernel: &QuadraticKernel,
    tr: &Transition,
    next_value: f64,
    rate: f64,
) -> Result<QuadraticKernel> {
    let current = evaluate_value(kernel, &tr.z_now)?;
    let residual = current - (tr.stage_cost + next_value);
    if !residual.is_finite() {
        return Err(Error::NonFinite("critic residual"));
    }
    if residual == 0.0 {
        return Ok(kernel.clone());
    }
    let outer = &tr.z_now * tr.z_now.transpose();
    let updated = &kernel.matrix - outer * (rate * residual);
    // z z' is already symmetric; the explicit symmetrization bounds drift.
    QuadraticKernel::from_matrix(updated, kernel.split)
}

/// Modified (Algorithm-2 style) critic step on the kernel vector: the
/// Bellman-difference residual is linear in the upper-triangle coefficients.
///
/// `h <- h - rate * (0.5 * dot(b, h) - stage_cost) * b` with
/// `b = quad_basis(z_now) - quad_basis(z_next)`.
pub fn critic_update_modified(kvec: &KernelVector, tr: &Transition, rate: f64) -> Result<KernelVector> {
    if tr.z_now.len() != kvec.dim {
        return Err(Error::DimensionMismatch(format!(
            "transition dimension {} does not match kernel dimension {}",
            tr.z_now.len(),
            kvec.dim
        )));
    }
    let b = quad_basis(&tr.z_now) - quad_basis(&tr.z_next);
    let residual = 0.5 * b.dot(&kvec.entries) - tr.stage_cost;
    if !residual.is_finite() {
        return Err(Error::NonFinite("critic residual"));
    }
    Ok(KernelVector {
        entries: &kvec.entries - b * (rate * residual),
        dim: kvec.dim,
        split: kvec.split,
    })
}
