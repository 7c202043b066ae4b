//! Command-line experiment driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wingtrack::actor::{LinearPolicy, PolicyRole};
use wingtrack::config::{parse_config, ScenarioConfig};
use wingtrack::engine::run_episode;
use wingtrack::error::Error;
use wingtrack::metrics::closed_loop_poles;
use wingtrack::report::{summarize_divergence, summarize_trace, EpisodeSummary, RunReport};
use wingtrack::trace::{read_trace, write_trace};

#[derive(Parser)]
#[command(name = "wingtrack", about = "Adaptive tracking-control experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario configs, writing a trace CSV per scenario
    /// and a JSON report.
    Run {
        /// Scenario config files.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Worker threads for running scenarios concurrently.
        #[arg(long)]
        parallel: Option<usize>,
        /// Output directory (overrides any `output` in the configs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the continuous-time open-loop poles of a scenario's plant.
    Poles { config: PathBuf },
    /// Recompute summary metrics from previously written trace files.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn scenario_name(cfg: &ScenarioConfig, path: &Path) -> String {
    cfg.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into())
    })
}

fn run_one(path: &Path, out_override: Option<&Path>) -> Result<EpisodeSummary, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = scenario_name(&cfg, path);
    let out_dir: PathBuf = out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;

    match run_episode(&cfg) {
        Ok(outcome) => {
            let trace_path = out_dir.join(format!("{name}.csv"));
            write_trace(&outcome.trace, &trace_path)
                .map_err(|e| format!("{}: {e}", trace_path.display()))?;
            let mut summary =
                summarize_trace(&name, &outcome.trace, Some(&cfg.naci), Some(&cfg.plant));
            summary.trace_file = Some(trace_path.display().to_string());
            Ok(summary)
        }
        Err(Error::Divergence { step, what }) => {
            Ok(summarize_divergence(&name, &cfg.mode.to_string(), step, &what))
        }
        Err(other) => Err(format!("{}: {other}", path.display())),
    }
}

fn cmd_run(configs: &[PathBuf], parallel: Option<usize>, out: Option<&Path>) -> ExitCode {
    let run_all = || -> Vec<Result<EpisodeSummary, String>> {
        use rayon::prelude::*;
        configs.par_iter().map(|p| run_one(p, out)).collect()
    };
    let results = match parallel {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            pool.install(run_all)
        }
        None => run_all(),
    };

    let mut report = RunReport::default();
    let mut hard_failure = false;
    for result in results {
        match result {
            Ok(summary) => report.episodes.push(summary),
            Err(msg) => {
                eprintln!("error: {msg}");
                hard_failure = true;
            }
        }
    }
    for episode in &report.episodes {
        match (&episode.diverged, episode.divergence_step) {
            (Some(what), Some(step)) => {
                eprintln!("{}: diverged at step {step}: {what}", episode.name)
            }
            _ => println!(
                "{}: {} steps, naci {:?}",
                episode.name, episode.steps, episode.naci
            ),
        }
    }
    let report_dir: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let report_path = report_dir.join("report.json");
    if std::fs::create_dir_all(&report_dir)
        .and_then(|_| std::fs::write(&report_path, report.to_json()))
        .is_err()
    {
        eprintln!("error: could not write {}", report_path.display());
        hard_failure = true;
    } else {
        println!("report: {}", report_path.display());
    }
    if hard_failure || report.any_diverged() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_poles(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let zero = LinearPolicy::zeros(
        cfg.plant.control_dim(),
        cfg.plant.state_dim(),
        PolicyRole::Optimizer,
    );
    match closed_loop_poles(&cfg.plant, &zero) {
        Ok(set) => {
            for p in &set.poles {
                println!("{:+.6} {:+.6}i", p.re, p.im);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_report(traces: &[PathBuf]) -> ExitCode {
    let mut report = RunReport::default();
    for path in traces {
        match read_trace(path) {
            Ok(trace) => {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                let mut summary = summarize_trace(&name, &trace, None, None);
                summary.trace_file = Some(path.display().to_string());
                report.episodes.push(summary);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
    }
    println!("{}", report.to_json());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            configs,
            parallel,
            out,
        } => cmd_run(&configs, parallel, out.as_deref()),
        Command::Poles { config } => cmd_poles(&config),
        Command::Report { traces } => cmd_report(&traces),
    }
}
