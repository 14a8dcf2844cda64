use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfc_core::experiments::{
    compare_dp, compare_filters, export_lq_oracle, export_riccati, run_scenario, ExperimentConfig,
    Outcomes, Scenario,
};

/// Data-driven feedback control experiments.
#[derive(Debug, Parser)]
#[command(name = "dfc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-loop BSDE-SGD runs of one scenario.
    Run {
        scenario: RunScenario,
        #[command(flatten)]
        common: Common,
    },
    /// Kernel filter against particle filter, or BSDE-SGD against tree search.
    Compare {
        what: CompareKind,
        #[command(flatten)]
        common: Common,
    },
    /// Export a reference solution.
    Oracle {
        which: OracleKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RunScenario {
    Lq10,
    Heat,
    Dubins,
    DubinsJump,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CompareKind {
    Filters,
    Dp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleKind {
    Lq,
    Riccati,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON file whose fields override the scenario preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the first repeat.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Output directory (default `results/<scenario>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// SGD iterations per time step.
    #[arg(long)]
    iterations: Option<usize>,
}

enum Failure {
    Config(String),
    Fatal(String),
}

impl From<dfc_core::Error> for Failure {
    fn from(e: dfc_core::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Fatal(e.to_string())
        }
    }
}

fn load_config(scenario: Scenario, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json_overrides(scenario, &text)?
        }
        None => ExperimentConfig::preset(scenario),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.repeats {
        cfg.repeats = r;
    }
    if let Some(l) = common.iterations {
        cfg.controller.iterations = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(scenario: Scenario, common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(scenario.id()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Exit status for a finished batch of repeats.
fn batch_status(failed: &[u64]) -> u8 {
    if failed.is_empty() {
        0
    } else {
        2
    }
}

fn execute(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run { scenario, common } => {
            let scenario = match scenario {
                RunScenario::Lq10 => Scenario::Lq10,
                RunScenario::Heat => Scenario::Heat,
                RunScenario::Dubins => Scenario::Dubins,
                RunScenario::DubinsJump => Scenario::DubinsJump,
            };
            let cfg = load_config(scenario, &common)?;
            let out = out_dir(scenario, &common);
            let report = run_scenario(&cfg, Some(&out))?;
            for o in &report.outcomes {
                match &o.result {
                    Ok(m) => println!(
                        "seed {}: control_error {} relative {} tracking_rmse {} terminal {} estimation_rmse {:.4}",
                        o.seed,
                        fmt_opt(m.control_error),
                        fmt_opt(m.relative_control_error()),
                        fmt_opt(m.tracking_rmse),
                        fmt_opt(m.terminal_distance),
                        m.estimation_rmse
                    ),
                    Err(e) => println!("seed {}: FAILED {e}", o.seed),
                }
            }
            println!("wrote {}", out.display());
            Ok(batch_status(&report.outcomes.failed_seeds()))
        }
        Command::Compare { what, common } => {
            let scenario = match what {
                CompareKind::Filters => Scenario::FilterCompare,
                CompareKind::Dp => Scenario::DpCompare,
            };
            let cfg = load_config(scenario, &common)?;
            let out = out_dir(scenario, &common);
            let failed = match what {
                CompareKind::Filters => {
                    let cmp = compare_filters(&cfg, Some(&out))?;
                    for o in &cmp.outcomes {
                        match &o.result {
                            Ok(s) => println!(
                                "seed {}: post-disturbance tracking RMSE kernel {:.4} particle {:.4}, estimation RMSE kernel {:.4} particle {:.4}",
                                o.seed,
                                s.kernel.post_tracking,
                                s.particle.post_tracking,
                                s.kernel.post,
                                s.particle.post
                            ),
                            Err(e) => println!("seed {}: FAILED {e}", o.seed),
                        }
                    }
                    cmp.outcomes.failed_seeds()
                }
                CompareKind::Dp => {
                    let cmp = compare_dp(&cfg, Some(&out))?;
                    for o in &cmp.outcomes {
                        match &o.result {
                            Ok(s) => println!(
                                "seed {}: tracking RMSE sgd {:.4} dp {:.4} ({} nodes, {:.1} s)",
                                o.seed,
                                s.sgd_tracking_rmse,
                                s.dp_tracking_rmse,
                                s.dp_nodes,
                                s.dp_wall_clock.as_secs_f64()
                            ),
                            Err(e) => println!("seed {}: FAILED {e}", o.seed),
                        }
                    }
                    println!(
                        "projected nodes on the {}-step grid: {:e}",
                        cfg.grid.steps, cmp.projected_nodes
                    );
                    cmp.outcomes.failed_seeds()
                }
            };
            println!("wrote {}", out.display());
            Ok(batch_status(&failed))
        }
        Command::Oracle { which, common } => {
            let scenario = match which {
                OracleKind::Lq => Scenario::Lq10,
                OracleKind::Riccati => Scenario::Heat,
            };
            let cfg = load_config(scenario, &common)?;
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| Path::new("results").join(match which {
                    OracleKind::Lq => "oracle-lq",
                    OracleKind::Riccati => "oracle-riccati",
                }));
            match which {
                OracleKind::Lq => export_lq_oracle(&cfg, &out)?,
                OracleKind::Riccati => export_riccati(&cfg, &out)?,
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
