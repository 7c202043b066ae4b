//! Per-episode JSON summaries. Every number in a summary is recomputed from
//! the persisted trace records, so re-running `report` on the written CSV
//! files reproduces the `run` report exactly.

use serde::{Deserialize, Serialize};

use crate::actor::{LinearPolicy, PolicyRole};
use crate::metrics::{avg_accumulated_squared_error, closed_loop_poles, naci, NaciWeights};
use crate::plant::PlantModel;
use crate::trace::LearningTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleJson {
    pub re: f64,
    pub im: f64,
}

/// Everything the JSON report records about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub name: String,
    pub mode: String,
    pub steps: usize,
    pub ts: f64,
    pub seed: u64,
    pub config_digest: String,
    /// Human-readable divergence description, if the episode blew up.
    pub diverged: Option<String>,
    pub divergence_step: Option<usize>,
    pub epsilon_fired_step: Option<usize>,
    /// Normalized accumulated cost index over the first configured window.
    pub naci: Option<f64>,
    /// Final running average of the squared tracking error.
    pub avg_squared_error: Option<f64>,
    pub final_tracker_gain: Vec<f64>,
    pub final_optimizer_gain: Vec<f64>,
    /// Continuous-time closed-loop poles under the final optimizer gain,
    /// when the plant is known.
    pub closed_loop_poles: Option<Vec<PoleJson>>,
    pub trace_file: Option<String>,
}

/// Full output of one `run` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub episodes: Vec<EpisodeSummary>,
}

impl RunReport {
    pub fn any_diverged(&self) -> bool {
        self.episodes.iter().any(|e| e.diverged.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Builds a summary from trace records alone. The cost weights and plant are
/// optional: without them the corresponding metrics are omitted rather than
/// guessed.
pub fn summarize_trace(
    name: &str,
    trace: &LearningTrace,
    naci_weights: Option<&NaciWeights>,
    plant: Option<&PlantModel>,
) -> EpisodeSummary {
    let last = trace.records.last();
    let final_tracker_gain = last.map(|r| r.tracker_gain.clone()).unwrap_or_default();
    let final_optimizer_gain = last.map(|r| r.optimizer_gain.clone()).unwrap_or_default();

    let naci_value = naci_weights.and_then(|w| naci(trace, w).ok());
    let avg_squared_error = avg_accumulated_squared_error(trace).last().copied();

    let closed_loop = plant.and_then(|model| {
        let n = model.state_dim();
        let m = model.control_dim();
        if final_optimizer_gain.len() != n * m {
            return None;
        }
        let policy = LinearPolicy {
            gain: nalgebra::DMatrix::from_row_slice(m, n, &final_optimizer_gain),
            role: PolicyRole::Optimizer,
        };
        closed_loop_poles(model, &policy).ok().map(|set| {
            set.poles
                .iter()
                .map(|p| PoleJson { re: p.re, im: p.im })
                .collect()
        })
    });

    EpisodeSummary {
        name: name.to_string(),
        mode: trace.meta.mode.clone(),
        steps: trace.len(),
        ts: trace.meta.ts,
        seed: trace.meta.seed,
        config_digest: trace.meta.config_digest.clone(),
        diverged: None,
        divergence_step: None,
        epsilon_fired_step: trace.meta.epsilon_fired_step,
        naci: naci_value,
        avg_squared_error,
        final_tracker_gain,
        final_optimizer_gain,
        closed_loop_poles: closed_loop,
        trace_file: None,
    }
}

/// Summary stub for an episode that diverged before producing a full trace.
pub fn summarize_divergence(name: &str, mode: &str, step: usize, what: &str) -> EpisodeSummary {
    EpisodeSummary {
        name: name.to_string(),
        mode: mode.to_string(),
        steps: 0,
        ts: 0.0,
        seed: 0,
        config_digest: String::new(),
        diverged: Some(what.to_string()),
        divergence_step: Some(step),
        epsilon_fired_step: None,
        naci: None,
        avg_squared_error: None,
        final_tracker_gain: Vec::new(),
        final_optimizer_gain: Vec::new(),
        closed_loop_poles: None,
        trace_file: None,
    }
}
