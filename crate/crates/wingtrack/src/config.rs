//! Scenario configuration: TOML-based key-value text with nested sections,
//! validated into a fully resolved [`ScenarioConfig`]. Validation collects
//! every field-level problem instead of stopping at the first.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use toml::Value;

use crate::critic::CostWeights;
use crate::engine::{DitherConfig, Mode};
use crate::error::{Error, Result};
use crate::metrics::NaciWeights;
use crate::plant::{Phase, PlantModel, TrajectorySpec, TrajectoryTerm, UncertaintyConfig};

/// Per-step learning rates, either fixed or drawn from a seeded uniform band.
#[derive(Debug, Clone, PartialEq)]
pub enum RateSchedule {
    Fixed {
        alpha_c: f64,
        alpha_a: f64,
        eta_c: f64,
        eta_a: f64,
    },
    Band {
        lo: f64,
        hi: f64,
        seed: u64,
    },
}

impl RateSchedule {
    pub fn nominal() -> Self {
        RateSchedule::Fixed {
            alpha_c: 0.0001,
            alpha_a: 0.0001,
            eta_c: 0.0001,
            eta_a: 0.0001,
        }
    }
}

/// Optional non-default starting weights (upper-triangle kernel coefficients
/// and gain rows).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialWeights {
    pub optimizer_kernel_ut: Option<Vec<f64>>,
    pub tracker_kernel_ut: Option<Vec<f64>>,
    pub optimizer_gain: Option<Vec<f64>>,
    pub tracker_gain: Option<Vec<f64>>,
}

/// Settings for the policy-iteration baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PiConfig {
    pub rounds: usize,
    /// Admissible initial state-feedback gain, required for PI runs.
    pub initial_gain: Option<Vec<f64>>,
    /// Rows collected per evaluation beyond the minimum nu.
    pub extra_samples: usize,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            initial_gain: None,
            extra_samples: 0,
        }
    }
}

/// Fully resolved experiment description. All randomness flows from the
/// named seeds below; there is no global RNG anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub mode: Mode,
    pub plant: PlantModel,
    /// Set when the plant came from a named preset, for lossless round trips.
    pub plant_preset: Option<String>,
    pub trajectory: TrajectorySpec,
    pub duration: f64,
    pub rates: RateSchedule,
    /// (Q, R) pair for the optimizer loop.
    pub optimizer_weights: CostWeights,
    /// (S, M) pair for the tracker loop.
    pub tracker_weights: CostWeights,
    pub initial_state: DVector<f64>,
    pub initial_weights: InitialWeights,
    pub uncertainty: UncertaintyConfig,
    pub dither: DitherConfig,
    pub epsilon: f64,
    pub stop_on_epsilon: bool,
    /// Scale each gradient step by the squared regressor norm (normalized
    /// LMS). Keeps the update direction, bounds the effective step.
    pub normalized_updates: bool,
    /// Keep the per-step trace log. Disable for long weight-training
    /// episodes where only the final weights matter; the returned trace is
    /// then empty and trace-based metrics are unavailable.
    pub record_trace: bool,
    pub ridge: f64,
    /// Zero-based index of the tracked measurement.
    pub tracked_state: usize,
    /// Number of memorized past errors N_e; the error vector has N_e + 1
    /// entries.
    pub error_memory: usize,
    /// Maps the scalar tracker output onto the actuation channels.
    pub selector: DVector<f64>,
    pub naci: NaciWeights,
    pub policy_iteration: PiConfig,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.plant.ts).round() as usize
    }

    /// Nominal scenario: trim plant, smooth-turn trajectory, nominal
    /// rates and weights.
    pub fn nominal(mode: Mode) -> Self {
        let plant = PlantModel::flexible_wing_trim(0.001);
        let n = plant.state_dim();
        let m = plant.control_dim();
        ScenarioConfig {
            name: None,
            mode,
            plant,
            plant_preset: Some("flexible_wing_trim".into()),
            trajectory: TrajectorySpec::smooth_turns(),
            duration: 10.0,
            rates: RateSchedule::nominal(),
            optimizer_weights: CostWeights {
                state_weight: DMatrix::from_diagonal(&DVector::from_row_slice(&[
                    0.0625, 25.0, 25.0, 100.0, 100.0,
                ])),
                control_weight: DMatrix::from_element(1, 1, 907.0),
            },
            tracker_weights: CostWeights {
                state_weight: DMatrix::identity(3, 3) * 0.0001,
                control_weight: DMatrix::from_element(1, 1, 0.0001),
            },
            initial_state: PlantModel::flexible_wing_initial_state(),
            initial_weights: InitialWeights::default(),
            uncertainty: UncertaintyConfig::none(),
            dither: DitherConfig {
                amplitude: 0.0,
                seed: 0,
            },
            epsilon: 1e-6,
            stop_on_epsilon: false,
            normalized_updates: true,
            record_trace: true,
            ridge: 1e-9,
            tracked_state: 3,
            error_memory: 2,
            selector: DVector::from_element(m, 1.0),
            naci: NaciWeights::flexible_wing(),
            policy_iteration: PiConfig::default(),
            output: None,
        }
        .with_state_dims(n)
    }

    fn with_state_dims(self, _n: usize) -> Self {
        self
    }

    /// Cheap content digest used to stamp traces.
    pub fn digest(&self) -> String {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        serialize_config(self).hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Error-collecting view over one TOML table.
struct Section<'a> {
    table: &'a toml::map::Map<String, Value>,
    path: &'a str,
    errors: Vec<String>,
    visited: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(table: &'a toml::map::Map<String, Value>, path: &'a str) -> Self {
        Self {
            table,
            path,
            errors: Vec::new(),
            visited: BTreeSet::new(),
        }
    }

    fn key(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.path, name)
        }
    }

    fn raw(&mut self, name: &str) -> Option<&'a Value> {
        self.visited.insert(name.to_string());
        self.table.get(name)
    }

    fn f64_opt(&mut self, name: &str) -> Option<f64> {
        match self.raw(name) {
            None => None,
            Some(Value::Float(f)) => Some(*f),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(other) => {
                self.errors
                    .push(format!("{}: expected number, got {}", self.key(name), other.type_str()));
                None
            }
        }
    }

    fn f64_or(&mut self, name: &str, default: f64) -> f64 {
        self.f64_opt(name).unwrap_or(default)
    }

    fn u64_or(&mut self, name: &str, default: u64) -> u64 {
        match self.raw(name) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(other) => {
                self.errors.push(format!(
                    "{}: expected nonnegative integer, got {other}",
                    self.key(name)
                ));
                default
            }
        }
    }

    fn usize_or(&mut self, name: &str, default: usize) -> usize {
        self.u64_or(name, default as u64) as usize
    }

    fn bool_or(&mut self, name: &str, default: bool) -> bool {
        match self.raw(name) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.errors
                    .push(format!("{}: expected bool, got {}", self.key(name), other.type_str()));
                default
            }
        }
    }

    fn str_opt(&mut self, name: &str) -> Option<String> {
        match self.raw(name) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                self.errors
                    .push(format!("{}: expected string, got {}", self.key(name), other.type_str()));
                None
            }
        }
    }

    fn vec_f64_opt(&mut self, name: &str) -> Option<Vec<f64>> {
        let key = self.key(name);
        match self.raw(name) {
            None => None,
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match item {
                        Value::Float(f) => out.push(*f),
                        Value::Integer(v) => out.push(*v as f64),
                        other => {
                            self.errors
                                .push(format!("{key}[{i}]: expected number, got {}", other.type_str()));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            Some(other) => {
                self.errors
                    .push(format!("{key}: expected array, got {}", other.type_str()));
                None
            }
        }
    }

    fn matrix_opt(&mut self, name: &str) -> Option<DMatrix<f64>> {
        let key = self.key(name);
        match self.raw(name) {
            None => None,
            Some(Value::Array(rows)) => {
                let mut data: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    match row {
                        Value::Array(cols) => {
                            let mut r = Vec::with_capacity(cols.len());
                            for (j, v) in cols.iter().enumerate() {
                                match v {
                                    Value::Float(f) => r.push(*f),
                                    Value::Integer(v) => r.push(*v as f64),
                                    other => {
                                        self.errors.push(format!(
                                            "{key}[{i}][{j}]: expected number, got {}",
                                            other.type_str()
                                        ));
                                        return None;
                                    }
                                }
                            }
                            data.push(r);
                        }
                        other => {
                            self.errors.push(format!(
                                "{key}[{i}]: expected array row, got {}",
                                other.type_str()
                            ));
                            return None;
                        }
                    }
                }
                if data.is_empty() {
                    self.errors.push(format!("{key}: matrix must be nonempty"));
                    return None;
                }
                let cols = data[0].len();
                if data.iter().any(|r| r.len() != cols) {
                    self.errors.push(format!("{key}: ragged matrix rows"));
                    return None;
                }
                Some(DMatrix::from_fn(data.len(), cols, |i, j| data[i][j]))
            }
            Some(other) => {
                self.errors
                    .push(format!("{key}: expected array of rows, got {}", other.type_str()));
                None
            }
        }
    }

    fn sub(&mut self, name: &str) -> Option<&'a toml::map::Map<String, Value>> {
        match self.raw(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(other) => {
                self.errors
                    .push(format!("{}: expected table, got {}", self.key(name), other.type_str()));
                None
            }
        }
    }

    fn finish(mut self) -> Vec<String> {
        for key in self.table.keys() {
            if !self.visited.contains(key) {
                self.errors.push(format!("unknown key: {}", self.key(key)));
            }
        }
        self.errors
    }
}

fn check_rate(errors: &mut Vec<String>, name: &str, v: f64) {
    if !(0.0..1.0).contains(&v) {
        errors.push(format!("{name}: learning rate must be in [0, 1), got {v}"));
    }
}

/// Parses and validates a scenario description. On failure every detected
/// field-level problem is reported, not just the first.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let value: Value = text
        .parse()
        .map_err(|e| Error::Config(vec![format!("syntax: {e}")]))?;
    let table = value
        .as_table()
        .ok_or_else(|| Error::Config(vec!["top level must be a table".into()]))?;

    let mut cfg = ScenarioConfig::nominal(Mode::Ota2);
    let mut root = Section::new(table, "");
    let mut errors: Vec<String> = Vec::new();

    cfg.name = root.str_opt("name");

    if let Some(mode) = root.str_opt("mode") {
        match mode.parse::<Mode>() {
            Ok(m) => cfg.mode = m,
            Err(e) => errors.push(format!("mode: {e}")),
        }
    }

    // Plant first: later dimension checks depend on it.
    let mut ts_override: Option<f64> = None;
    if let Some(plant_table) = root.sub("plant") {
        let mut sect = Section::new(plant_table, "plant");
        let preset = sect.str_opt("preset");
        let ts = sect.f64_opt("ts");
        let a = sect.matrix_opt("a");
        let b = sect.matrix_opt("b");
        match preset.as_deref() {
            Some("flexible_wing_trim") => {
                cfg.plant = PlantModel::flexible_wing_trim(ts.unwrap_or(0.001));
                cfg.plant_preset = Some("flexible_wing_trim".into());
                cfg.initial_state = PlantModel::flexible_wing_initial_state();
                if a.is_some() || b.is_some() {
                    errors.push("plant: preset and inline matrices are mutually exclusive".into());
                }
            }
            Some(other) => errors.push(format!("plant.preset: unknown preset {other:?}")),
            None => match (a, b, ts) {
                (Some(a), Some(b), Some(ts)) => match PlantModel::new(a, b, ts) {
                    Ok(p) => {
                        let n = p.state_dim();
                        let m = p.control_dim();
                        cfg.plant = p;
                        cfg.plant_preset = None;
                        cfg.initial_state = DVector::zeros(n);
                        cfg.selector = DVector::from_element(m, 1.0);
                        // Inline plants get neutral defaults sized to fit.
                        cfg.optimizer_weights = CostWeights {
                            state_weight: DMatrix::identity(n, n),
                            control_weight: DMatrix::identity(m, m),
                        };
                        cfg.naci = NaciWeights {
                            v1: DMatrix::identity(n, n),
                            v2: DMatrix::identity(m, m),
                            n_samples: cfg.naci.n_samples,
                        };
                        cfg.tracked_state = n - 1;
                    }
                    Err(e) => errors.push(format!("plant: {e}")),
                },
                _ => errors.push("plant: need either preset or all of a, b, ts".into()),
            },
        }
        ts_override = ts;
        errors.extend(sect.finish());
    }
    let _ = ts_override;

    if let Some(traj_table) = root.sub("trajectory") {
        let mut sect = Section::new(traj_table, "trajectory");
        match sect.str_opt("variant").as_deref() {
            Some("sinusoid") => {
                cfg.trajectory = TrajectorySpec::Sinusoid {
                    amplitude: sect.f64_or("amplitude", 25.0),
                    period: sect.f64_or("period", 10.0),
                };
            }
            Some("damped_composite") => {
                let decay = sect.f64_or("decay", 0.0);
                let mut terms = Vec::new();
                match sect.raw("terms") {
                    Some(Value::Array(items)) => {
                        for (i, item) in items.iter().enumerate() {
                            match term_from_value(item) {
                                Ok(t) => terms.push(t),
                                Err(e) => errors.push(format!("trajectory.terms[{i}]: {e}")),
                            }
                        }
                    }
                    Some(other) => errors.push(format!(
                        "trajectory.terms: expected array, got {}",
                        other.type_str()
                    )),
                    None => errors.push("trajectory.terms: required for damped_composite".into()),
                }
                cfg.trajectory = TrajectorySpec::DampedComposite { terms, decay };
            }
            Some("constant") => {
                cfg.trajectory = TrajectorySpec::Constant {
                    level: sect.f64_or("level", 0.0),
                };
            }
            Some(other) => errors.push(format!("trajectory.variant: unknown variant {other:?}")),
            None => errors.push("trajectory.variant: required".into()),
        }
        errors.extend(sect.finish());
        if let Err(Error::Config(e)) = cfg.trajectory.validate() {
            errors.extend(e);
        }
    }

    cfg.duration = root.f64_or("duration", cfg.duration);
    cfg.epsilon = root.f64_or("epsilon", cfg.epsilon);
    cfg.stop_on_epsilon = root.bool_or("stop_on_epsilon", cfg.stop_on_epsilon);
    cfg.normalized_updates = root.bool_or("normalized_updates", cfg.normalized_updates);
    cfg.record_trace = root.bool_or("record_trace", cfg.record_trace);
    cfg.ridge = root.f64_or("ridge", cfg.ridge);
    cfg.error_memory = root.usize_or("error_memory", cfg.error_memory);
    if let Some(idx) = root.raw("tracked_state") {
        match idx {
            Value::Integer(i) if *i >= 1 => cfg.tracked_state = (*i - 1) as usize,
            other => errors.push(format!(
                "tracked_state: expected 1-based state index, got {other}"
            )),
        }
    }
    if let Some(path) = root.str_opt("output") {
        cfg.output = Some(PathBuf::from(path));
    }
    if let Some(sel) = root.vec_f64_opt("selector") {
        cfg.selector = DVector::from_vec(sel);
    }
    if let Some(x0) = root.vec_f64_opt("initial_state") {
        cfg.initial_state = DVector::from_vec(x0);
    }

    if let Some(rate_table) = root.sub("rates") {
        let mut sect = Section::new(rate_table, "rates");
        if sect.table.contains_key("band") {
            let band = sect.vec_f64_opt("band").unwrap_or_default();
            let seed = sect.u64_or("seed", 0);
            if band.len() == 2 && band[0] <= band[1] {
                cfg.rates = RateSchedule::Band {
                    lo: band[0],
                    hi: band[1],
                    seed,
                };
            } else {
                errors.push("rates.band: expected [lo, hi] with lo <= hi".into());
            }
        } else {
            cfg.rates = RateSchedule::Fixed {
                alpha_c: sect.f64_or("alpha_c", 0.0001),
                alpha_a: sect.f64_or("alpha_a", 0.0001),
                eta_c: sect.f64_or("eta_c", 0.0001),
                eta_a: sect.f64_or("eta_a", 0.0001),
            };
        }
        errors.extend(sect.finish());
    }

    if let Some(w_table) = root.sub("weights") {
        let mut sect = Section::new(w_table, "weights");
        let n = cfg.plant.state_dim();
        if let Some(diag) = sect.vec_f64_opt("q_diag") {
            cfg.optimizer_weights.state_weight = DMatrix::from_diagonal(&DVector::from_vec(diag));
        } else if let Some(q) = sect.matrix_opt("q") {
            cfg.optimizer_weights.state_weight = q;
        }
        if let Some(r) = sect.f64_opt("r") {
            cfg.optimizer_weights.control_weight = DMatrix::from_element(1, 1, r);
        } else if let Some(r) = sect.matrix_opt("r_matrix") {
            cfg.optimizer_weights.control_weight = r;
        }
        if let Some(s) = sect.f64_opt("s") {
            let d = cfg.error_memory + 1;
            cfg.tracker_weights.state_weight = DMatrix::identity(d, d) * s;
        } else if let Some(diag) = sect.vec_f64_opt("s_diag") {
            cfg.tracker_weights.state_weight = DMatrix::from_diagonal(&DVector::from_vec(diag));
        }
        if let Some(m) = sect.f64_opt("m") {
            cfg.tracker_weights.control_weight = DMatrix::from_element(1, 1, m);
        }
        errors.extend(sect.finish());
        if cfg.optimizer_weights.state_weight.nrows() != n {
            errors.push(format!(
                "weights.q: dimension {} does not match plant dimension {n}",
                cfg.optimizer_weights.state_weight.nrows()
            ));
        }
    }

    if let Some(u_table) = root.sub("uncertainty") {
        let mut sect = Section::new(u_table, "uncertainty");
        cfg.uncertainty = UncertaintyConfig {
            amplitude: sect.f64_or("amplitude", 0.0),
            seed: sect.u64_or("seed", 0),
        };
        errors.extend(sect.finish());
    }

    if let Some(d_table) = root.sub("dither") {
        let mut sect = Section::new(d_table, "dither");
        cfg.dither = DitherConfig {
            amplitude: sect.f64_or("amplitude", 0.0),
            seed: sect.u64_or("seed", 0),
        };
        errors.extend(sect.finish());
    }

    if let Some(n_table) = root.sub("naci") {
        let mut sect = Section::new(n_table, "naci");
        if let Some(v1) = sect.vec_f64_opt("v1") {
            cfg.naci.v1 = DMatrix::from_diagonal(&DVector::from_vec(v1));
        }
        if let Some(v2) = sect.f64_opt("v2") {
            cfg.naci.v2 = DMatrix::from_element(1, 1, v2);
        }
        cfg.naci.n_samples = sect.usize_or("samples", cfg.naci.n_samples);
        errors.extend(sect.finish());
    }

    if let Some(iw_table) = root.sub("initial_weights") {
        let mut sect = Section::new(iw_table, "initial_weights");
        cfg.initial_weights = InitialWeights {
            optimizer_kernel_ut: sect.vec_f64_opt("optimizer_kernel"),
            tracker_kernel_ut: sect.vec_f64_opt("tracker_kernel"),
            optimizer_gain: sect.vec_f64_opt("optimizer_gain"),
            tracker_gain: sect.vec_f64_opt("tracker_gain"),
        };
        errors.extend(sect.finish());
    }

    if let Some(pi_table) = root.sub("policy_iteration") {
        let mut sect = Section::new(pi_table, "policy_iteration");
        cfg.policy_iteration = PiConfig {
            rounds: sect.usize_or("rounds", 10),
            initial_gain: sect.vec_f64_opt("initial_gain"),
            extra_samples: sect.usize_or("extra_samples", 0),
        };
        errors.extend(sect.finish());
    }

    errors.extend(root.finish());
    validate(&mut errors, &cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

fn term_from_value(v: &Value) -> std::result::Result<TrajectoryTerm, String> {
    let arr = v.as_array().ok_or("expected [amplitude, omega, phase]")?;
    if arr.len() != 3 {
        return Err("expected [amplitude, omega, phase]".into());
    }
    let num = |v: &Value| -> std::result::Result<f64, String> {
        v.as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| format!("expected number, got {}", v.type_str()))
    };
    let phase = match arr[2].as_str() {
        Some("sin") => Phase::Sin,
        Some("cos") => Phase::Cos,
        _ => return Err("phase must be \"sin\" or \"cos\"".into()),
    };
    Ok(TrajectoryTerm {
        amplitude: num(&arr[0])?,
        omega: num(&arr[1])?,
        phase,
    })
}

fn validate(errors: &mut Vec<String>, cfg: &ScenarioConfig) {
    let n = cfg.plant.state_dim();
    let m = cfg.plant.control_dim();

    if !(cfg.duration > 0.0) {
        errors.push(format!("duration: must be positive, got {}", cfg.duration));
    } else {
        let steps = cfg.duration / cfg.plant.ts;
        if (steps - steps.round()).abs() > 1e-6 {
            errors.push(format!(
                "duration: {} is not an integer multiple of ts {}",
                cfg.duration, cfg.plant.ts
            ));
        }
    }
    if !(cfg.epsilon > 0.0) {
        errors.push(format!("epsilon: must be positive, got {}", cfg.epsilon));
    }
    if cfg.ridge < 0.0 {
        errors.push(format!("ridge: must be nonnegative, got {}", cfg.ridge));
    }
    match cfg.rates {
        RateSchedule::Fixed {
            alpha_c,
            alpha_a,
            eta_c,
            eta_a,
        } => {
            check_rate(errors, "rates.alpha_c", alpha_c);
            check_rate(errors, "rates.alpha_a", alpha_a);
            check_rate(errors, "rates.eta_c", eta_c);
            check_rate(errors, "rates.eta_a", eta_a);
        }
        RateSchedule::Band { lo, hi, .. } => {
            check_rate(errors, "rates.band[0]", lo);
            check_rate(errors, "rates.band[1]", hi);
        }
    }
    if let Err(Error::Config(e)) = cfg.uncertainty.validate() {
        errors.extend(e);
    }
    if cfg.dither.amplitude < 0.0 {
        errors.push(format!(
            "dither.amplitude: must be nonnegative, got {}",
            cfg.dither.amplitude
        ));
    }
    if cfg.tracked_state >= n {
        errors.push(format!(
            "tracked_state: index {} out of range for {n} states",
            cfg.tracked_state + 1
        ));
    }
    if cfg.initial_state.len() != n {
        errors.push(format!(
            "initial_state: length {} does not match plant dimension {n}",
            cfg.initial_state.len()
        ));
    }
    if cfg.selector.len() != m {
        errors.push(format!(
            "selector: length {} does not match control dimension {m}",
            cfg.selector.len()
        ));
    }
    if cfg.naci.v1.nrows() != n {
        errors.push(format!(
            "naci.v1: dimension {} does not match plant dimension {n}",
            cfg.naci.v1.nrows()
        ));
    }
    if let Err(Error::Config(e)) = cfg.optimizer_weights.validate() {
        errors.extend(e.into_iter().map(|s| format!("weights.(q,r) {s}")));
    }
    if let Err(Error::Config(e)) = cfg.tracker_weights.validate() {
        errors.extend(e.into_iter().map(|s| format!("weights.(s,m) {s}")));
    }
    if cfg.tracker_weights.state_weight.nrows() != cfg.error_memory + 1 {
        errors.push(format!(
            "weights.s: dimension {} does not match error window length {}",
            cfg.tracker_weights.state_weight.nrows(),
            cfg.error_memory + 1
        ));
    }
    let check_len = |errors: &mut Vec<String>, name: &str, v: &Option<Vec<f64>>, want: usize| {
        if let Some(v) = v {
            if v.len() != want {
                errors.push(format!("initial_weights.{name}: expected length {want}, got {}", v.len()));
            }
        }
    };
    let d_opt = n + m;
    let d_trk = cfg.error_memory + 2;
    check_len(errors, "optimizer_kernel", &cfg.initial_weights.optimizer_kernel_ut, d_opt * (d_opt + 1) / 2);
    check_len(errors, "tracker_kernel", &cfg.initial_weights.tracker_kernel_ut, d_trk * (d_trk + 1) / 2);
    check_len(errors, "optimizer_gain", &cfg.initial_weights.optimizer_gain, m * n);
    check_len(errors, "tracker_gain", &cfg.initial_weights.tracker_gain, cfg.error_memory + 1);
    if cfg.mode == Mode::PiBaseline {
        match &cfg.policy_iteration.initial_gain {
            None => errors.push("policy_iteration.initial_gain: required for PI_BASELINE".into()),
            Some(g) if g.len() != m * n => errors.push(format!(
                "policy_iteration.initial_gain: expected length {}, got {}",
                m * n,
                g.len()
            )),
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

fn fnum(v: f64) -> String {
    // Exact decimal round trip; integers still need a float marker for TOML.
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn fvec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fnum(x)).collect();
    format!("[{}]", items.join(", "))
}

fn fmat(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| fvec(&(0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()))
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Renders a resolved config back to the structured-text grammar so that
/// `parse(serialize(cfg)) == cfg`.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    use std::fmt::Write;
    if let Some(name) = &cfg.name {
        writeln!(out, "name = {name:?}").unwrap();
    }
    writeln!(out, "mode = \"{}\"", cfg.mode).unwrap();
    writeln!(out, "duration = {}", fnum(cfg.duration)).unwrap();
    writeln!(out, "epsilon = {}", fnum(cfg.epsilon)).unwrap();
    writeln!(out, "stop_on_epsilon = {}", cfg.stop_on_epsilon).unwrap();
    writeln!(out, "normalized_updates = {}", cfg.normalized_updates).unwrap();
    writeln!(out, "record_trace = {}", cfg.record_trace).unwrap();
    writeln!(out, "ridge = {}", fnum(cfg.ridge)).unwrap();
    writeln!(out, "tracked_state = {}", cfg.tracked_state + 1).unwrap();
    writeln!(out, "error_memory = {}", cfg.error_memory).unwrap();
    writeln!(out, "selector = {}", fvec(cfg.selector.as_slice())).unwrap();
    writeln!(out, "initial_state = {}", fvec(cfg.initial_state.as_slice())).unwrap();
    if let Some(path) = &cfg.output {
        writeln!(out, "output = {:?}", path.display().to_string()).unwrap();
    }

    writeln!(out, "\n[plant]").unwrap();
    if let Some(preset) = &cfg.plant_preset {
        writeln!(out, "preset = {preset:?}").unwrap();
        writeln!(out, "ts = {}", fnum(cfg.plant.ts)).unwrap();
    } else {
        writeln!(out, "ts = {}", fnum(cfg.plant.ts)).unwrap();
        writeln!(out, "a = {}", fmat(&cfg.plant.a)).unwrap();
        writeln!(out, "b = {}", fmat(&cfg.plant.b)).unwrap();
    }

    writeln!(out, "\n[trajectory]").unwrap();
    match &cfg.trajectory {
        TrajectorySpec::Sinusoid { amplitude, period } => {
            writeln!(out, "variant = \"sinusoid\"").unwrap();
            writeln!(out, "amplitude = {}", fnum(*amplitude)).unwrap();
            writeln!(out, "period = {}", fnum(*period)).unwrap();
        }
        TrajectorySpec::DampedComposite { terms, decay } => {
            writeln!(out, "variant = \"damped_composite\"").unwrap();
            writeln!(out, "decay = {}", fnum(*decay)).unwrap();
            let items: Vec<String> = terms
                .iter()
                .map(|t| {
                    format!(
                        "[{}, {}, \"{}\"]",
                        fnum(t.amplitude),
                        fnum(t.omega),
                        match t.phase {
                            Phase::Sin => "sin",
                            Phase::Cos => "cos",
                        }
                    )
                })
                .collect();
            writeln!(out, "terms = [{}]", items.join(", ")).unwrap();
        }
        TrajectorySpec::Constant { level } => {
            writeln!(out, "variant = \"constant\"").unwrap();
            writeln!(out, "level = {}", fnum(*level)).unwrap();
        }
    }

    writeln!(out, "\n[rates]").unwrap();
    match &cfg.rates {
        RateSchedule::Fixed {
            alpha_c,
            alpha_a,
            eta_c,
            eta_a,
        } => {
            writeln!(out, "alpha_c = {}", fnum(*alpha_c)).unwrap();
            writeln!(out, "alpha_a = {}", fnum(*alpha_a)).unwrap();
            writeln!(out, "eta_c = {}", fnum(*eta_c)).unwrap();
            writeln!(out, "eta_a = {}", fnum(*eta_a)).unwrap();
        }
        RateSchedule::Band { lo, hi, seed } => {
            writeln!(out, "band = [{}, {}]", fnum(*lo), fnum(*hi)).unwrap();
            writeln!(out, "seed = {seed}").unwrap();
        }
    }

    writeln!(out, "\n[weights]").unwrap();
    writeln!(out, "q = {}", fmat(&cfg.optimizer_weights.state_weight)).unwrap();
    writeln!(out, "r_matrix = {}", fmat(&cfg.optimizer_weights.control_weight)).unwrap();
    writeln!(out, "s_diag = {}", fvec(cfg.tracker_weights.state_weight.diagonal().as_slice())).unwrap();
    writeln!(out, "m = {}", fnum(cfg.tracker_weights.control_weight[(0, 0)])).unwrap();

    writeln!(out, "\n[uncertainty]").unwrap();
    writeln!(out, "amplitude = {}", fnum(cfg.uncertainty.amplitude)).unwrap();
    writeln!(out, "seed = {}", cfg.uncertainty.seed).unwrap();

    writeln!(out, "\n[dither]").unwrap();
    writeln!(out, "amplitude = {}", fnum(cfg.dither.amplitude)).unwrap();
    writeln!(out, "seed = {}", cfg.dither.seed).unwrap();

    writeln!(out, "\n[naci]").unwrap();
    writeln!(out, "v1 = {}", fvec(cfg.naci.v1.diagonal().as_slice())).unwrap();
    writeln!(out, "v2 = {}", fnum(cfg.naci.v2[(0, 0)])).unwrap();
    writeln!(out, "samples = {}", cfg.naci.n_samples).unwrap();

    let iw = &cfg.initial_weights;
    if iw.optimizer_kernel_ut.is_some()
        || iw.tracker_kernel_ut.is_some()
        || iw.optimizer_gain.is_some()
        || iw.tracker_gain.is_some()
    {
        writeln!(out, "\n[initial_weights]").unwrap();
        if let Some(v) = &iw.optimizer_kernel_ut {
            writeln!(out, "optimizer_kernel = {}", fvec(v)).unwrap();
        }
        if let Some(v) = &iw.tracker_kernel_ut {
            writeln!(out, "tracker_kernel = {}", fvec(v)).unwrap();
        }
        if let Some(v) = &iw.optimizer_gain {
            writeln!(out, "optimizer_gain = {}", fvec(v)).unwrap();
        }
        if let Some(v) = &iw.tracker_gain {
            writeln!(out, "tracker_gain = {}", fvec(v)).unwrap();
        }
    }

    writeln!(out, "\n[policy_iteration]").unwrap();
    writeln!(out, "rounds = {}", cfg.policy_iteration.rounds).unwrap();
    writeln!(out, "extra_samples = {}", cfg.policy_iteration.extra_samples).unwrap();
    if let Some(g) = &cfg.policy_iteration.initial_gain {
        writeln!(out, "initial_gain = {}", fvec(g)).unwrap();
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_defaults_matches_nominal_settings() {
        let cfg = parse_config("mode = \"OTA2\"\n[plant]\npreset = \"flexible_wing_trim\"\n").unwrap();
        assert_eq!(cfg.plant, PlantModel::flexible_wing_trim(0.001));
        assert_eq!(cfg.initial_state, PlantModel::flexible_wing_initial_state());
        assert_eq!(cfg.duration, 10.0);
        assert_eq!(
            cfg.rates,
            RateSchedule::Fixed {
                alpha_c: 0.0001,
                alpha_a: 0.0001,
                eta_c: 0.0001,
                eta_a: 0.0001
            }
        );
        assert_eq!(cfg.optimizer_weights.control_weight[(0, 0)], 907.0);
        assert_eq!(cfg.tracker_weights.state_weight[(0, 0)], 0.0001);
        assert_eq!(cfg.naci.v2[(0, 0)], 0.2268);
        assert_eq!(cfg.naci.n_samples, 10_000);
        assert_eq!(cfg.tracked_state, 3);
    }

    #[test]
    fn out_of_range_rate_is_reported_by_field_name() {
        let err = parse_config(
            "mode = \"OTA1\"\n[plant]\npreset = \"flexible_wing_trim\"\n[rates]\nalpha_c = 1.5\n",
        )
        .unwrap_err();
        match err {
            Error::Config(errors) => {
                assert!(errors.iter().any(|e| e.contains("rates.alpha_c")), "{errors:?}");
            }
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn all_errors_are_collected() {
        let err = parse_config(
            "mode = \"BOGUS\"\nduration = -1.0\nbananas = 3\n[plant]\npreset = \"flexible_wing_trim\"\n[rates]\nalpha_c = 1.5\nalpha_a = 2.5\n",
        )
        .unwrap_err();
        match err {
            Error::Config(errors) => {
                for needle in ["mode", "duration", "bananas", "rates.alpha_c", "rates.alpha_a"] {
                    assert!(
                        errors.iter().any(|e| e.contains(needle)),
                        "missing error for {needle}: {errors:?}"
                    );
                }
            }
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn serialize_parse_round_trip_is_lossless() {
        let text = "mode = \"STA2\"\nduration = 2.0\n[plant]\npreset = \"flexible_wing_trim\"\n[dither]\namplitude = 3.5\nseed = 42\n[uncertainty]\namplitude = 0.5\nseed = 9\n";
        let cfg = parse_config(text).unwrap();
        let round = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(cfg, round);
    }

    #[test]
    fn inline_plant_round_trip() {
        let text = "mode = \"OTA2\"\nduration = 1.0\ntracked_state = 2\nerror_memory = 2\n[plant]\nts = 0.01\na = [[0.9, 0.1], [0.0, 0.95]]\nb = [[0.0], [1.0]]\n[weights]\nq = [[1.0, 0.0], [0.0, 1.0]]\nr_matrix = [[1.0]]\n[naci]\nv1 = [1.0, 1.0]\nv2 = 1.0\nsamples = 100\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.plant.state_dim(), 2);
        assert_eq!(cfg.tracked_state, 1);
        let round = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(cfg, round);
    }

    #[test]
    fn non_integral_duration_is_rejected() {
        let err = parse_config(
            "mode = \"OTA2\"\nduration = 0.0015\n[plant]\npreset = \"flexible_wing_trim\"\n",
        )
        .unwrap_err();
        match err {
            Error::Config(errors) => assert!(errors.iter().any(|e| e.contains("duration")), "{errors:?}"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn unknown_nested_key_is_reported() {
        let err = parse_config(
            "mode = \"OTA2\"\n[plant]\npreset = \"flexible_wing_trim\"\nwings = 2\n",
        )
        .unwrap_err();
        match err {
            Error::Config(errors) => {
                assert!(errors.iter().any(|e| e.contains("plant.wings")), "{errors:?}")
            }
            other => panic!("expected config error, got {other}"),
        }
    }
}
