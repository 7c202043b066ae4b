//! Online learning loops: the standalone tracker, the dual-loop
//! optimizer-assisted tracker, and the batch policy-iteration baseline.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::actor::{actor_update, apply_policy, policy_from_kernel, LinearPolicy, PolicyRole};
use crate::config::{RateSchedule, ScenarioConfig};
use crate::critic::{
    critic_update_direct, critic_update_modified, evaluate_value, quad_basis, stage_cost,
    KernelVector, QuadraticKernel, Transition,
};
use crate::error::{Error, Result};
use crate::plant::{
    perturb_model, push_error, reference_signal, splitmix64, step_plant, ErrorWindow,
};
use crate::trace::{LearningTrace, StepRecord, TraceMeta};

/// Which loops run and which critic-update law they use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Standalone tracker, direct (full-matrix) critic update.
    Sta1,
    /// Standalone tracker, modified (kernel-vector) critic update.
    Sta2,
    /// Optimizer-assisted tracker, direct critic update.
    Ota1,
    /// Optimizer-assisted tracker, modified critic update.
    Ota2,
    /// Batch least-squares policy iteration on the optimizer loop.
    PiBaseline,
}

impl Mode {
    pub fn optimizer_active(self) -> bool {
        matches!(self, Mode::Ota1 | Mode::Ota2 | Mode::PiBaseline)
    }

    pub fn tracker_active(self) -> bool {
        !matches!(self, Mode::PiBaseline)
    }

    /// True for the modes that update the critic through the kernel vector.
    pub fn uses_modified_update(self) -> bool {
        matches!(self, Mode::Sta2 | Mode::Ota2)
    }

    pub fn all() -> [Mode; 5] {
        [Mode::Sta1, Mode::Sta2, Mode::Ota1, Mode::Ota2, Mode::PiBaseline]
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sta1 => "STA1",
            Mode::Sta2 => "STA2",
            Mode::Ota1 => "OTA1",
            Mode::Ota2 => "OTA2",
            Mode::PiBaseline => "PI_BASELINE",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "STA1" => Ok(Mode::Sta1),
            "STA2" => Ok(Mode::Sta2),
            "OTA1" => Ok(Mode::Ota1),
            "OTA2" => Ok(Mode::Ota2),
            "PI_BASELINE" => Ok(Mode::PiBaseline),
            other => Err(format!(
                "unknown mode {other:?} (expected STA1, STA2, OTA1, OTA2, or PI_BASELINE)"
            )),
        }
    }
}

/// Zero-mean uniform probing noise added to applied controls. Amplitude 0
/// disables the stream entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherConfig {
    pub amplitude: f64,
    pub seed: u64,
}

/// Independent deterministic stream per (seed, stream id, step).
fn stream_rng(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ splitmix64(step) ^ splitmix64(stream.wrapping_mul(0x517c_c1b7_2722_0a95)),
    ))
}

/// Uniform sample in `[-amplitude, amplitude]`, a pure function of
/// `(seed, stream, step)`.
pub fn dither_signal(cfg: &DitherConfig, stream: u64, step: u64) -> f64 {
    if cfg.amplitude == 0.0 {
        return 0.0;
    }
    let mut rng = stream_rng(cfg.seed, stream, step);
    rng.gen_range(-cfg.amplitude..=cfg.amplitude)
}

const DITHER_TRACKER: u64 = 0;
const DITHER_OPTIMIZER: u64 = 1;
const RATE_STREAM: u64 = 2;

/// Kernel-change convergence test: Frobenius distance at or below epsilon.
pub fn check_convergence(prev: &QuadraticKernel, next: &QuadraticKernel, epsilon: f64) -> bool {
    prev.frobenius_distance(next) <= epsilon
}

/// Consecutive steps the convergence test must hold before the episode is
/// declared converged.
pub const CONVERGENCE_WINDOW: usize = 100;

/// All mutable learner weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub optimizer_kernel: QuadraticKernel,
    pub tracker_kernel: QuadraticKernel,
    pub optimizer_policy: LinearPolicy,
    pub tracker_policy: LinearPolicy,
}

/// Stage-cost block-diagonal kernel `blockdiag(state_weight, control_weight)`.
///
/// Used as the default critic start: the exact kernel's control block always
/// dominates the control weight, so the greedy gain extracted from this
/// start is zero and grows smoothly. A zero start instead makes the first
/// greedy gains a ratio of two tiny learned numbers, which can spike
/// arbitrarily and destabilize the actor.
fn stage_cost_kernel(state_weight: &DMatrix<f64>, control_weight: &DMatrix<f64>) -> QuadraticKernel {
    let n = state_weight.nrows();
    let m = control_weight.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(state_weight);
    k.view_mut((n, n), (m, m)).copy_from(control_weight);
    QuadraticKernel::from_matrix(k, n).expect("square by construction")
}

impl LearnerState {
    /// Stage-cost-initialized weights sized for the scenario, overridden by
    /// any explicit initial weights in the config.
    pub fn initial(cfg: &ScenarioConfig) -> Result<Self> {
        let n = cfg.plant.state_dim();
        let m = cfg.plant.control_dim();
        let e_len = cfg.error_memory + 1;
        let iw = &cfg.initial_weights;
        let optimizer_kernel = match &iw.optimizer_kernel_ut {
            Some(v) => KernelVector::from_entries(v.clone(), n)?.to_kernel(),
            None => stage_cost_kernel(
                &cfg.optimizer_weights.state_weight,
                &cfg.optimizer_weights.control_weight,
            ),
        };
        let tracker_kernel = match &iw.tracker_kernel_ut {
            Some(v) => KernelVector::from_entries(v.clone(), e_len)?.to_kernel(),
            None => stage_cost_kernel(
                &cfg.tracker_weights.state_weight,
                &cfg.tracker_weights.control_weight,
            ),
        };
        let optimizer_policy = match &iw.optimizer_gain {
            Some(g) => LinearPolicy {
                gain: DMatrix::from_row_slice(m, n, g),
                role: PolicyRole::Optimizer,
            },
            None => LinearPolicy::zeros(m, n, PolicyRole::Optimizer),
        };
        let tracker_policy = match &iw.tracker_gain {
            Some(g) => LinearPolicy::from_row(g, PolicyRole::Tracker),
            None => LinearPolicy::zeros(1, e_len, PolicyRole::Tracker),
        };
        Ok(Self {
            optimizer_kernel,
            tracker_kernel,
            optimizer_policy,
            tracker_policy,
        })
    }

    fn is_finite(&self) -> bool {
        self.optimizer_kernel.matrix().iter().all(|v| v.is_finite())
            && self.tracker_kernel.matrix().iter().all(|v| v.is_finite())
            && self.optimizer_policy.is_finite()
            && self.tracker_policy.is_finite()
    }
}

/// A completed episode: the full log plus the final weights.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub trace: LearningTrace,
    pub final_state: LearnerState,
    pub epsilon_fired_step: Option<usize>,
}

/// State vectors this large are treated as numerical blow-up rather than a
/// transient.
const DIVERGENCE_NORM: f64 = 1e9;

fn rates_at(cfg: &ScenarioConfig, step: u64) -> (f64, f64, f64, f64) {
    match cfg.rates {
        RateSchedule::Fixed {
            alpha_c,
            alpha_a,
            eta_c,
            eta_a,
        } => (alpha_c, alpha_a, eta_c, eta_a),
        RateSchedule::Band { lo, hi, seed } => {
            let mut rng = stream_rng(seed, RATE_STREAM, step);
            let mut draw = || rng.gen_range(lo..=hi);
            (draw(), draw(), draw(), draw())
        }
    }
}

fn stack(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

/// Effective critic step for the direct law: the regressor is the rank-one
/// matrix `z z'`, whose squared Frobenius norm is `|z|^4`.
fn direct_rate(rate: f64, z: &DVector<f64>, normalized: bool) -> f64 {
    if normalized {
        let s = z.norm_squared();
        rate / (1.0 + s * s)
    } else {
        rate
    }
}

/// Effective critic step for the modified law: the regressor is the basis
/// difference vector.
fn modified_rate(rate: f64, b_norm_sq: f64, normalized: bool) -> f64 {
    if normalized {
        rate / (1.0 + b_norm_sq)
    } else {
        rate
    }
}

fn actor_rate(rate: f64, v: &DVector<f64>, normalized: bool) -> f64 {
    if normalized {
        rate / (1.0 + v.norm_squared())
    } else {
        rate
    }
}

/// One critic step on a loop, dispatching on the mode's update law.
fn critic_step(
    kernel: &QuadraticKernel,
    tr: &Transition,
    rate: f64,
    modified: bool,
    normalized: bool,
) -> Result<QuadraticKernel> {
    if modified {
        let b = quad_basis(&tr.z_now) - quad_basis(&tr.z_next);
        let eff = modified_rate(rate, b.norm_squared(), normalized);
        let kvec = critic_update_modified(&kernel.kernel_vector(), tr, eff)?;
        Ok(kvec.to_kernel())
    } else {
        let next_value = evaluate_value(kernel, &tr.z_next)?;
        let eff = direct_rate(rate, &tr.z_now, normalized);
        critic_update_direct(kernel, tr, next_value, eff)
    }
}

/// Runs one learning episode to the configured horizon (or to convergence
/// when `stop_on_epsilon` is set) and returns the full trace.
///
/// Dispatches to [`run_policy_iteration`] for the baseline mode.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeOutcome> {
    if cfg.mode == Mode::PiBaseline {
        return run_policy_iteration(cfg);
    }
    let steps = cfg.steps();
    let ts = cfg.plant.ts;
    let m = cfg.plant.control_dim();
    let optimizer_on = cfg.mode.optimizer_active();
    let modified = cfg.mode.uses_modified_update();
    let normalized = cfg.normalized_updates;

    let mut state = LearnerState::initial(cfg)?;
    let mut x = cfg.initial_state.clone();
    let mut window = ErrorWindow::new(cfg.error_memory);
    let mut records = Vec::with_capacity(if cfg.record_trace { steps } else { 0 });

    let mut quiet_steps = 0usize;
    let mut epsilon_fired_step: Option<usize> = None;

    for k in 0..steps {
        let t = k as f64 * ts;
        let (alpha_c, alpha_a, eta_c, eta_a) = rates_at(cfg, k as u64);

        // Observe the tracked variable and form the error history vector.
        let reference = reference_signal(&cfg.trajectory, t);
        let (window_next, e_now) = push_error(&window, reference, x[cfg.tracked_state]);

        // Applied controls: actor outputs plus probing noise.
        let c_base = apply_policy(&state.tracker_policy, &e_now)?[0];
        let c_applied = c_base + dither_signal(&cfg.dither, DITHER_TRACKER, k as u64);
        let u_applied = if optimizer_on {
            let mut u = apply_policy(&state.optimizer_policy, &x)?;
            u[0] += dither_signal(&cfg.dither, DITHER_OPTIMIZER, k as u64);
            u
        } else {
            DVector::zeros(m)
        };
        let u_total = &u_applied + &cfg.selector * c_applied;

        let model = perturb_model(&cfg.plant, &cfg.uncertainty, k as u64);
        let x_next = step_plant(&model, &x, &u_total)?;
        if !x_next.iter().all(|v| v.is_finite()) || x_next.norm() > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                step: k,
                what: format!("state norm {:.3e}", x_next.norm()),
            });
        }

        // Preview the successor stacked vectors under the current actors
        // (no probing noise on the lookahead).
        let reference_next = reference_signal(&cfg.trajectory, t + ts);
        let (_, e_next) = push_error(&window_next, reference_next, x_next[cfg.tracked_state]);
        let c_next = apply_policy(&state.tracker_policy, &e_next)?[0];

        let c_applied_vec = DVector::from_element(1, c_applied);
        let tracker_tr = Transition {
            z_now: stack(&e_now, &c_applied_vec),
            z_next: stack(&e_next, &DVector::from_element(1, c_next)),
            stage_cost: stage_cost(&cfg.tracker_weights, &e_now, &c_applied_vec)?,
        };
        let xi_hat = evaluate_value(&state.tracker_kernel, &tracker_tr.z_now)?;

        let prev_tracker_kernel = state.tracker_kernel.clone();
        state.tracker_kernel = critic_step(&state.tracker_kernel, &tracker_tr, eta_c, modified, normalized)?;
        let tracker_target = policy_from_kernel(&state.tracker_kernel, cfg.ridge, PolicyRole::Tracker)?;
        state.tracker_policy = actor_update(
            &state.tracker_policy,
            &e_now,
            &tracker_target,
            actor_rate(eta_a, &e_now, normalized),
        )?;

        let mut gamma_hat = 0.0;
        let mut optimizer_delta = 0.0;
        if optimizer_on {
            let u_next = apply_policy(&state.optimizer_policy, &x_next)?;
            let optimizer_tr = Transition {
                z_now: stack(&x, &u_applied),
                z_next: stack(&x_next, &u_next),
                stage_cost: stage_cost(&cfg.optimizer_weights, &x, &u_applied)?,
            };
            gamma_hat = evaluate_value(&state.optimizer_kernel, &optimizer_tr.z_now)?;
            let prev = state.optimizer_kernel.clone();
            state.optimizer_kernel =
                critic_step(&state.optimizer_kernel, &optimizer_tr, alpha_c, modified, normalized)?;
            optimizer_delta = prev.frobenius_distance(&state.optimizer_kernel);
            let optimizer_target =
                policy_from_kernel(&state.optimizer_kernel, cfg.ridge, PolicyRole::Optimizer)?;
            state.optimizer_policy = actor_update(
                &state.optimizer_policy,
                &x,
                &optimizer_target,
                actor_rate(alpha_a, &x, normalized),
            )?;
        }
        if !state.is_finite() {
            return Err(Error::Divergence {
                step: k,
                what: "non-finite learner weights".into(),
            });
        }

        // Confirmed convergence: every active kernel stayed within epsilon
        // for a full window of consecutive steps.
        let tracker_delta = prev_tracker_kernel.frobenius_distance(&state.tracker_kernel);
        if tracker_delta <= cfg.epsilon && optimizer_delta <= cfg.epsilon {
            quiet_steps += 1;
        } else {
            quiet_steps = 0;
        }
        if quiet_steps >= CONVERGENCE_WINDOW && epsilon_fired_step.is_none() {
            epsilon_fired_step = Some(k + 1 - CONVERGENCE_WINDOW);
        }

        if cfg.record_trace {
            records.push(StepRecord {
                t,
                x: x.clone(),
                u: u_applied.clone(),
                c: c_applied,
                u_total: u_total.clone(),
                reference,
                error: e_now[0],
                gamma_hat,
                xi_hat,
                tracker_gain: state.tracker_policy.gain.row(0).iter().copied().collect(),
                optimizer_gain: state
                    .optimizer_policy
                    .gain
                    .transpose()
                    .iter()
                    .copied()
                    .collect(),
                tracker_kernel_ut: state.tracker_kernel.kernel_vector().entries().iter().copied().collect(),
                optimizer_kernel_ut: state
                    .optimizer_kernel
                    .kernel_vector()
                    .entries()
                    .iter()
                    .copied()
                    .collect(),
            });
        }

        x = x_next;
        window = window_next;
        if cfg.stop_on_epsilon && epsilon_fired_step.is_some() {
            break;
        }
    }

    Ok(EpisodeOutcome {
        trace: LearningTrace {
            meta: TraceMeta {
                mode: cfg.mode.to_string(),
                seed: cfg.dither.seed,
                config_digest: cfg.digest(),
                ts,
                epsilon_fired_step,
            },
            records,
        },
        final_state: state,
        epsilon_fired_step,
    })
}

/// Batch least-squares policy iteration on the optimizer loop: the baseline
/// the online modes are compared against.
///
/// Each round simulates enough probed steps to identify the current
/// policy's quadratic value kernel from the Bellman residuals, solves the
/// regression, then improves the policy greedily. A rank-deficient
/// regression is reported as an excitation failure.
pub fn run_policy_iteration(cfg: &ScenarioConfig) -> Result<EpisodeOutcome> {
    let n = cfg.plant.state_dim();
    let m = cfg.plant.control_dim();
    let d = n + m;
    let nu = d * (d + 1) / 2;
    let rows_per_round = nu + cfg.policy_iteration.extra_samples;
    let ts = cfg.plant.ts;
    let max_steps = cfg.steps();

    let gain_init = cfg
        .policy_iteration
        .initial_gain
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["policy_iteration.initial_gain: required".into()]))?;
    let mut policy = LinearPolicy {
        gain: DMatrix::from_row_slice(m, n, gain_init),
        role: PolicyRole::Optimizer,
    };
    let mut kernel = QuadraticKernel::zeros(n, m);
    let mut x = cfg.initial_state.clone();
    let mut records = Vec::new();
    let mut step = 0usize;
    let mut epsilon_fired_step = None;

    'rounds: for _round in 0..cfg.policy_iteration.rounds {
        let mut phi = DMatrix::zeros(rows_per_round, nu);
        let mut rhs = DVector::zeros(rows_per_round);
        for row in 0..rows_per_round {
            if step >= max_steps {
                break 'rounds;
            }
            let mut u = apply_policy(&policy, &x)?;
            u[0] += dither_signal(&cfg.dither, DITHER_OPTIMIZER, step as u64);
            let model = perturb_model(&cfg.plant, &cfg.uncertainty, step as u64);
            let x_next = step_plant(&model, &x, &u)?;
            if !x_next.iter().all(|v| v.is_finite()) || x_next.norm() > DIVERGENCE_NORM {
                return Err(Error::Divergence {
                    step,
                    what: format!("state norm {:.3e}", x_next.norm()),
                });
            }
            let u_next = apply_policy(&policy, &x_next)?;
            let z_now = stack(&x, &u);
            let z_next = stack(&x_next, &u_next);
            phi.row_mut(row)
                .copy_from(&((quad_basis(&z_now) - quad_basis(&z_next)).transpose() * 0.5));
            rhs[row] = stage_cost(&cfg.optimizer_weights, &x, &u)?;

            let gamma_hat = evaluate_value(&kernel, &z_now)?;
            records.push(StepRecord {
                t: step as f64 * ts,
                x: x.clone(),
                u: u.clone(),
                c: 0.0,
                u_total: u.clone(),
                reference: 0.0,
                error: 0.0,
                gamma_hat,
                xi_hat: 0.0,
                tracker_gain: Vec::new(),
                optimizer_gain: policy.gain.transpose().iter().copied().collect(),
                tracker_kernel_ut: Vec::new(),
                optimizer_kernel_ut: kernel.kernel_vector().entries().iter().copied().collect(),
            });
            x = x_next;
            step += 1;
        }

        let svd = SVD::new(phi, true, true);
        let s_max = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * s_max).count();
        if rank < nu || s_max == 0.0 {
            return Err(Error::Excitation);
        }
        let h = svd
            .solve(&rhs, 1e-10 * s_max)
            .map_err(|_| Error::Excitation)?;
        let next_kernel =
            KernelVector::from_entries(h.iter().copied().collect(), n)?.to_kernel();
        let converged = check_convergence(&kernel, &next_kernel, cfg.epsilon);
        kernel = next_kernel;
        policy = policy_from_kernel(&kernel, cfg.ridge, PolicyRole::Optimizer)?;
        if converged && epsilon_fired_step.is_none() {
            epsilon_fired_step = Some(step);
        }
        if cfg.stop_on_epsilon && epsilon_fired_step.is_some() {
            break;
        }
    }

    let e_len = cfg.error_memory + 1;
    Ok(EpisodeOutcome {
        trace: LearningTrace {
            meta: TraceMeta {
                mode: cfg.mode.to_string(),
                seed: cfg.dither.seed,
                config_digest: cfg.digest(),
                ts,
                epsilon_fired_step,
            },
            records,
        },
        final_state: LearnerState {
            optimizer_kernel: kernel,
            tracker_kernel: QuadraticKernel::zeros(e_len, 1),
            optimizer_policy: policy,
            tracker_policy: LinearPolicy::zeros(1, e_len, PolicyRole::Tracker),
        },
        epsilon_fired_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::CostWeights;
    use crate::metrics::{riccati_oracle, spectral_radius};
    use crate::plant::{PlantModel, TrajectorySpec};
    use approx::assert_relative_eq;

    fn small_plant() -> PlantModel {
        PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.9]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            0.01,
        )
        .unwrap()
    }

    fn small_config(mode: Mode) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::nominal(mode);
        let plant = small_plant();
        cfg.plant = plant;
        cfg.plant_preset = None;
        cfg.initial_state = DVector::from_row_slice(&[1.0, -1.0]);
        cfg.optimizer_weights = CostWeights {
            state_weight: DMatrix::identity(2, 2),
            control_weight: DMatrix::identity(1, 1),
        };
        cfg.trajectory = TrajectorySpec::Constant { level: 0.0 };
        cfg.tracked_state = 1;
        cfg.duration = 1.0;
        cfg.dither = DitherConfig {
            amplitude: 0.5,
            seed: 11,
        };
        cfg
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in Mode::all() {
            assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
        }
        assert!("sta1".parse::<Mode>().is_err());
    }

    #[test]
    fn dither_is_deterministic_zero_mean_and_bounded() {
        let cfg = DitherConfig {
            amplitude: 2.0,
            seed: 5,
        };
        let mut sum = 0.0;
        for k in 0..10_000u64 {
            let v = dither_signal(&cfg, 0, k);
            assert_eq!(v, dither_signal(&cfg, 0, k));
            assert!(v.abs() <= 2.0);
            sum += v;
        }
        assert!((sum / 10_000.0).abs() < 0.05, "mean {}", sum / 10_000.0);
        // Distinct streams differ.
        assert_ne!(dither_signal(&cfg, 0, 7), dither_signal(&cfg, 1, 7));
        // Zero amplitude short-circuits.
        assert_eq!(
            dither_signal(
                &DitherConfig {
                    amplitude: 0.0,
                    seed: 5
                },
                0,
                7
            ),
            0.0
        );
    }

    #[test]
    fn identical_configs_give_identical_traces() {
        let cfg = small_config(Mode::Ota2);
        let a = run_episode(&cfg).unwrap();
        let b = run_episode(&cfg).unwrap();
        assert_eq!(a.trace.records, b.trace.records);
    }

    #[test]
    fn standalone_modes_never_touch_the_optimizer_loop() {
        let cfg = small_config(Mode::Sta1);
        let out = run_episode(&cfg).unwrap();
        let init = LearnerState::initial(&cfg).unwrap();
        assert_eq!(out.final_state.optimizer_kernel, init.optimizer_kernel);
        assert_eq!(out.final_state.optimizer_policy.gain, DMatrix::zeros(1, 2));
        for r in &out.trace.records {
            assert!(r.u.iter().all(|&v| v == 0.0));
            assert_eq!(r.gamma_hat, 0.0);
        }
    }

    #[test]
    fn zero_rates_and_zero_dither_change_no_weights() {
        let mut cfg = small_config(Mode::Ota1);
        cfg.rates = RateSchedule::Fixed {
            alpha_c: 0.0,
            alpha_a: 0.0,
            eta_c: 0.0,
            eta_a: 0.0,
        };
        cfg.dither.amplitude = 0.0;
        let out = run_episode(&cfg).unwrap();
        let init = LearnerState::initial(&cfg).unwrap();
        assert_eq!(out.final_state, init);
    }

    #[test]
    fn disabling_trace_recording_changes_nothing_but_the_trace() {
        let cfg = small_config(Mode::Ota2);
        let full = run_episode(&cfg).unwrap();
        let mut quiet_cfg = cfg.clone();
        quiet_cfg.record_trace = false;
        let quiet = run_episode(&quiet_cfg).unwrap();
        assert!(quiet.trace.records.is_empty());
        assert_eq!(quiet.final_state, full.final_state);
    }

    #[test]
    fn episode_trace_covers_the_horizon() {
        let cfg = small_config(Mode::Ota2);
        let out = run_episode(&cfg).unwrap();
        assert_eq!(out.trace.len(), cfg.steps());
        assert_relative_eq!(out.trace.records[1].t - out.trace.records[0].t, 0.01);
    }

    #[test]
    fn unstable_plant_with_zero_control_reports_divergence_step() {
        let mut cfg = small_config(Mode::Sta2);
        cfg.plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            0.01,
        )
        .unwrap();
        cfg.initial_state = DVector::from_row_slice(&[1.0, 1.0]);
        cfg.rates = RateSchedule::Fixed {
            alpha_c: 0.0,
            alpha_a: 0.0,
            eta_c: 0.0,
            eta_a: 0.0,
        };
        cfg.dither.amplitude = 0.0;
        match run_episode(&cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step < cfg.steps()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn policy_iteration_recovers_the_riccati_kernel_exactly() {
        let mut cfg = small_config(Mode::PiBaseline);
        cfg.mode = Mode::PiBaseline;
        cfg.duration = 10.0;
        cfg.policy_iteration.initial_gain = Some(vec![0.0, 0.0]);
        cfg.policy_iteration.rounds = 12;
        cfg.policy_iteration.extra_samples = 10;
        let out = run_episode(&cfg).unwrap();
        let h_star = riccati_oracle(
            &cfg.plant.a,
            &cfg.plant.b,
            &cfg.optimizer_weights.state_weight,
            &cfg.optimizer_weights.control_weight,
            1e-14,
            100_000,
        )
        .unwrap();
        let k_opt = policy_from_kernel(&h_star, 0.0, PolicyRole::Optimizer)
            .unwrap()
            .gain;
        assert!(
            (&out.final_state.optimizer_policy.gain - &k_opt).norm() < 1e-6,
            "PI gain {:?} vs oracle {:?}",
            out.final_state.optimizer_policy.gain,
            k_opt
        );
        assert!(out.final_state.optimizer_kernel.frobenius_distance(&h_star) < 1e-6);
        let rho = spectral_radius(&(&cfg.plant.a + &cfg.plant.b * &out.final_state.optimizer_policy.gain));
        assert!(rho < 1.0);
    }

    #[test]
    fn policy_iteration_without_probing_fails_excitation() {
        let mut cfg = small_config(Mode::PiBaseline);
        cfg.mode = Mode::PiBaseline;
        cfg.dither.amplitude = 0.0;
        cfg.initial_state = DVector::zeros(2);
        cfg.policy_iteration.initial_gain = Some(vec![0.0, 0.0]);
        assert!(matches!(run_episode(&cfg), Err(Error::Excitation)));
    }

    #[test]
    fn rate_band_draws_stay_in_band_and_are_deterministic() {
        let mut cfg = small_config(Mode::Ota2);
        cfg.rates = RateSchedule::Band {
            lo: 1e-5,
            hi: 2e-4,
            seed: 3,
        };
        for k in 0..1000 {
            let (a, b, c, d) = rates_at(&cfg, k);
            for v in [a, b, c, d] {
                assert!((1e-5..=2e-4).contains(&v));
            }
            assert_eq!(rates_at(&cfg, k), rates_at(&cfg, k));
        }
    }

    #[test]
    fn learning_moves_toward_the_optimal_kernel_on_a_small_plant() {
        // Sanity check that online learning makes progress at all: the
        // distance to the exact kernel must shrink relative to no learning.
        let mut cfg = small_config(Mode::Ota2);
        cfg.duration = 200.0;
        cfg.dither.amplitude = 1.0;
        // Silence the tracker channel so its control does not bias the
        // optimizer's transition samples.
        cfg.selector = DVector::zeros(1);
        cfg.rates = RateSchedule::Fixed {
            alpha_c: 0.05,
            alpha_a: 0.05,
            eta_c: 0.0,
            eta_a: 0.0,
        };
        let out = run_episode(&cfg).unwrap();
        let h_star = riccati_oracle(
            &cfg.plant.a,
            &cfg.plant.b,
            &cfg.optimizer_weights.state_weight,
            &cfg.optimizer_weights.control_weight,
            1e-14,
            100_000,
        )
        .unwrap();
        let init = LearnerState::initial(&cfg).unwrap();
        let d0 = init.optimizer_kernel.frobenius_distance(&h_star);
        let d1 = out.final_state.optimizer_kernel.frobenius_distance(&h_star);
        assert!(d1 < d0, "no progress: {d1} vs initial {d0}");
    }
}
