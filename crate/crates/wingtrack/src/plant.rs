//! Discrete-time measurement-generating environment: LTI plant, reference
//! trajectories, tracking-error bookkeeping, and per-step model uncertainty.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vector of selected online measurements.
pub type MeasurementVector = DVector<f64>;

/// Discrete-time linear plant `x_{k+1} = A x_k + B u_k` sampled at `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ts: f64,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, ts: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows but A is {}x{}",
                b.nrows(),
                a.nrows(),
                a.ncols()
            )));
        }
        if !(ts > 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "sampling period must be positive, got {ts}"
            )));
        }
        Ok(Self { a, b, ts })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Lateral-frame flexible-wing model at the trim condition, sampled at
    /// the given period. States: lateral velocity (m/s), roll rate (deg/s),
    /// yaw rate (deg/s), roll angle (deg), yaw angle (deg).
    pub fn flexible_wing_trim(ts: f64) -> Self {
        let a = DMatrix::from_row_slice(
            5,
            5,
            &[
                0.9998, -0.0002, -0.0108, 0.0097, -0.0013, //
                -0.0015, 0.9789, 0.0074, 0.0, 0.0, //
                0.0003, 0.0037, 0.9979, 0.0, 0.0, //
                0.0, 0.0010, 0.0, 1.0000, 0.0, //
                0.0, 0.0, 0.0010, 0.0, 1.0000,
            ],
        );
        let b = DMatrix::from_row_slice(5, 1, &[0.0, 0.0036, 0.0004, 0.0, 0.0]);
        Self { a, b, ts }
    }

    /// Initial conditions used with the trim model.
    pub fn flexible_wing_initial_state() -> MeasurementVector {
        DVector::from_row_slice(&[40.0, 1.6, 0.8, -0.8, 0.2])
    }
}

/// One step of the plant map: `A x + B u`. Pure, no hidden state.
pub fn step_plant(
    model: &PlantModel,
    x: &MeasurementVector,
    u_total: &DVector<f64>,
) -> Result<MeasurementVector> {
    if x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state length {} does not match plant dimension {}",
            x.len(),
            model.state_dim()
        )));
    }
    if u_total.len() != model.control_dim() {
        return Err(Error::DimensionMismatch(format!(
            "control length {} does not match plant input dimension {}",
            u_total.len(),
            model.control_dim()
        )));
    }
    Ok(&model.a * x + &model.b * u_total)
}

/// Multiplicative per-entry model uncertainty.
///
/// Each entry of A and B is scaled by `1 + delta` with `delta` drawn from a
/// zero-mean Gaussian of standard deviation `amplitude / 2`, hard-clipped to
/// `[-amplitude, amplitude]`. The draw is a deterministic function of
/// `(seed, step, entry)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub amplitude: f64,
    pub seed: u64,
}

impl UncertaintyConfig {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.amplitude) {
            return Err(Error::Config(vec![format!(
                "uncertainty.amplitude: must be in [0, 1), got {}",
                self.amplitude
            )]));
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Clipped-Gaussian multiplicative deviation stream for one evaluation step.
fn deviation_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(step)))
}

/// Draws one clipped-Gaussian deviation. Box-Muller on the raw stream keeps
/// the draw count per entry fixed, so entries stay independent across steps.
fn draw_deviation(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let normal = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    (normal * amplitude / 2.0).clamp(-amplitude, amplitude)
}

/// Perturbed copy of the nominal plant for the given evaluation step.
pub fn perturb_model(nominal: &PlantModel, cfg: &UncertaintyConfig, step: u64) -> PlantModel {
    if cfg.amplitude == 0.0 {
        return nominal.clone();
    }
    let mut rng = deviation_rng(cfg.seed, step);
    let mut out = nominal.clone();
    for v in out.a.iter_mut() {
        *v *= 1.0 + draw_deviation(&mut rng, cfg.amplitude);
    }
    for v in out.b.iter_mut() {
        *v *= 1.0 + draw_deviation(&mut rng, cfg.amplitude);
    }
    out
}

/// Closed-form reference trajectory for the tracked variable, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// `amplitude * sin(2 pi t / period)`.
    Sinusoid { amplitude: f64, period: f64 },
    /// Sum of sinusoidal terms damped by `exp(-decay * t)`.
    DampedComposite {
        terms: Vec<TrajectoryTerm>,
        decay: f64,
    },
    Constant { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTerm {
    pub amplitude: f64,
    /// Angular frequency in rad/s.
    pub omega: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sin,
    Cos,
}

impl TrajectorySpec {
    /// Two smooth opposite turns, max amplitude 25 deg over a 10 s period.
    pub fn smooth_turns() -> Self {
        TrajectorySpec::Sinusoid {
            amplitude: 25.0,
            period: 10.0,
        }
    }

    /// The aggressive damped maneuver used in the uncertainty scenario:
    /// `(25 sin(0.6 pi t) + 15 cos(1.6 pi t)) exp(-0.3 t)`.
    pub fn damped_maneuver() -> Self {
        TrajectorySpec::DampedComposite {
            terms: vec![
                TrajectoryTerm {
                    amplitude: 25.0,
                    omega: 0.6 * std::f64::consts::PI,
                    phase: Phase::Sin,
                },
                TrajectoryTerm {
                    amplitude: 15.0,
                    omega: 1.6 * std::f64::consts::PI,
                    phase: Phase::Cos,
                },
            ],
            decay: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrajectorySpec::Sinusoid { period, .. } if !(*period > 0.0) => Err(Error::Config(
                vec![format!("trajectory.period: must be positive, got {period}")],
            )),
            TrajectorySpec::DampedComposite { decay, .. } if *decay < 0.0 => Err(Error::Config(
                vec![format!("trajectory.decay: must be nonnegative, got {decay}")],
            )),
            _ => Ok(()),
        }
    }
}

/// Evaluates the reference trajectory at time `t` (seconds).
pub fn reference_signal(spec: &TrajectorySpec, t: f64) -> f64 {
    match spec {
        TrajectorySpec::Sinusoid { amplitude, period } => {
            amplitude * (std::f64::consts::TAU * t / period).sin()
        }
        TrajectorySpec::DampedComposite { terms, decay } => {
            let sum: f64 = terms
                .iter()
                .map(|term| {
                    term.amplitude
                        * match term.phase {
                            Phase::Sin => (term.omega * t).sin(),
                            Phase::Cos => (term.omega * t).cos(),
                        }
                })
                .sum();
            sum * (-decay * t).exp()
        }
        TrajectorySpec::Constant { level } => *level,
    }
}

/// Ring buffer of the last `N_e + 1` scalar tracking errors, newest first.
/// History is zero-initialized before enough pushes have happened.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorWindow {
    samples: Vec<f64>,
}

impl ErrorWindow {
    pub fn new(memory_depth: usize) -> Self {
        Self {
            samples: vec![0.0; memory_depth + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Current error vector `E_k = [e_k, e_{k-1}, ..., e_{k-N_e}]`.
    pub fn error_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.samples)
    }
}

/// Pushes the newest tracking error `reference - measured` and returns the
/// updated window along with `E_k`.
pub fn push_error(window: &ErrorWindow, reference: f64, measured: f64) -> (ErrorWindow, DVector<f64>) {
    let mut samples = Vec::with_capacity(window.samples.len());
    samples.push(reference - measured);
    samples.extend_from_slice(&window.samples[..window.samples.len() - 1]);
    let next = ErrorWindow { samples };
    let e = next.error_vector();
    (next, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn step_plant_zero_maps_to_zero() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let x = DVector::zeros(5);
        let u = DVector::zeros(1);
        assert_eq!(step_plant(&model, &x, &u).unwrap(), DVector::zeros(5));
    }

    #[test]
    fn step_plant_matches_hand_oracle_on_initial_state() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let x0 = PlantModel::flexible_wing_initial_state();
        let next = step_plant(&model, &x0, &DVector::zeros(1)).unwrap();
        // Dense matrix-vector oracle computed by hand for the first entry:
        // 0.9998*40 - 0.0002*1.6 - 0.0108*0.8 + 0.0097*(-0.8) - 0.0013*0.2
        assert_relative_eq!(next[0], 39.97502, epsilon = 1e-12);
        // Full independent elementwise oracle.
        for i in 0..5 {
            let mut acc = 0.0;
            for j in 0..5 {
                acc += model.a[(i, j)] * x0[j];
            }
            assert_relative_eq!(next[i], acc, epsilon = 1e-14);
        }
    }

    #[test]
    fn step_plant_unit_vectors_probe_columns_of_a() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let u = DVector::zeros(1);
        for i in 0..5 {
            let mut e = DVector::zeros(5);
            e[i] = 1.0;
            let next = step_plant(&model, &e, &u).unwrap();
            for r in 0..5 {
                assert_eq!(next[r], model.a[(r, i)]);
            }
        }
    }

    #[test]
    fn step_plant_rejects_dimension_mismatch() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let bad = DVector::zeros(3);
        assert!(matches!(
            step_plant(&model, &bad, &DVector::zeros(1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn perturb_zero_amplitude_is_identity() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let cfg = UncertaintyConfig {
            amplitude: 0.0,
            seed: 42,
        };
        assert_eq!(perturb_model(&model, &cfg, 17), model);
    }

    #[test]
    fn perturb_is_deterministic_per_seed_and_step() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let cfg = UncertaintyConfig {
            amplitude: 0.5,
            seed: 7,
        };
        let p1 = perturb_model(&model, &cfg, 100);
        let p2 = perturb_model(&model, &cfg, 100);
        assert_eq!(p1, p2);
        let p3 = perturb_model(&model, &cfg, 101);
        assert_ne!(p1, p3);
    }

    #[test]
    fn perturbation_deviations_match_clipped_gaussian_oracle() {
        // Scalar plant isolates one entry per step.
        let model = PlantModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            0.001,
        )
        .unwrap();
        let cfg = UncertaintyConfig {
            amplitude: 0.5,
            seed: 3,
        };
        let n = 100_000;
        let mut max_abs: f64 = 0.0;
        let mut mean_abs = 0.0;
        for step in 0..n {
            let delta = perturb_model(&model, &cfg, step).a[(0, 0)] - 1.0;
            max_abs = max_abs.max(delta.abs());
            mean_abs += delta.abs();
        }
        mean_abs /= n as f64;
        assert!(max_abs <= 0.5 + 1e-15);
        // E|clamp(N(0, sigma), -2sigma, 2sigma)| = sigma*(2(phi(0)-phi(2)) + 4(1-Phi(2)))
        // with sigma = 0.25: 0.25 * 0.780925... (closed form, frozen).
        let sigma: f64 = 0.25;
        let oracle_mean = sigma * 0.7809031555692061;
        let oracle_sd = (sigma * sigma - oracle_mean * oracle_mean).sqrt();
        let tol = 3.0 * oracle_sd / (n as f64).sqrt();
        assert!(
            (mean_abs - oracle_mean).abs() < tol,
            "mean |delta| = {mean_abs}, oracle {oracle_mean} +- {tol}"
        );
    }

    #[test]
    fn reference_sinusoid_values() {
        let spec = TrajectorySpec::smooth_turns();
        assert_relative_eq!(reference_signal(&spec, 0.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(reference_signal(&spec, 2.5), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_damped_composite_at_zero() {
        let spec = TrajectorySpec::damped_maneuver();
        assert_relative_eq!(reference_signal(&spec, 0.0), 15.0, epsilon = 1e-12);
    }

    #[test]
    fn push_error_zero_for_matching_reference() {
        let w = ErrorWindow::new(2);
        let (_, e) = push_error(&w, 3.0, 3.0);
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn push_error_fresh_window_backfills_zero() {
        let w = ErrorWindow::new(2);
        let (_, e) = push_error(&w, 3.0, 0.0);
        assert_eq!(e.as_slice(), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn push_error_keeps_reverse_chronological_order() {
        let mut w = ErrorWindow::new(2);
        for v in [1.0, 2.0, 3.0] {
            let (next, _) = push_error(&w, v, 0.0);
            w = next;
        }
        assert_eq!(w.error_vector().as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn step_plant_is_linear() {
        let model = PlantModel::flexible_wing_trim(0.001);
        let x1 = PlantModel::flexible_wing_initial_state();
        let x2 = DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0, -1.0]);
        let u1 = DVector::from_row_slice(&[2.0]);
        let u2 = DVector::from_row_slice(&[-0.7]);
        let lhs = step_plant(&model, &(&x1 + &x2), &(&u1 + &u2)).unwrap();
        let rhs = step_plant(&model, &x1, &u1).unwrap() + step_plant(&model, &x2, &u2).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }
}
