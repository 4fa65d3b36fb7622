use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellfree::apg;
use cellfree::bench::{self, ExperimentConfig, Scheme, SweepParam};
use cellfree::netgen::derive_seed;
use cellfree::oracle;
use cellfree::sinr::Scenario;

#[derive(Parser)]
#[command(
    version,
    about = "Cell-free massive MIMO unicast/multicast AP selection and power control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the Monte-Carlo experiment described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of apg_joint, opa_ras, epa_ras.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Also write realization, trace and SE files for this realization.
        #[arg(long)]
        detail: Option<usize>,
    },
    /// Check the closed-form statistics and SINRs against channel simulation.
    ValidateOracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// N, L, U, K or realizations.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(
    config: &Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
) -> cellfree::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> cellfree::Result<bool> {
    match cli.cmd {
        Cmd::Simulate {
            config,
            out,
            workers,
            seed,
            schemes,
            detail,
        } => {
            let mut cfg = load(&config, out, workers, seed)?;
            if let Some(s) = schemes {
                cfg.schemes = s;
            }
            cfg.validate()?;
            let res = bench::run_experiment(&cfg)?;
            bench::write_outputs(&cfg, &res, &cfg.output_dir)?;
            if let Some(i) = detail {
                bench::write_detail(&cfg, i, &cfg.output_dir.join(format!("realization_{i}")))?;
            }
            for s in &res.summary.schemes {
                println!(
                    "{:<10} runs {:>4}  failed {:>3}  median SSE {:>8.3}  mean SSE {:>8.3}",
                    s.scheme, s.runs, s.failures, s.median_sse, s.mean_sse
                );
            }
            for (s, r) in &res.summary.median_improvement_vs_epa {
                println!("{s} vs epa_ras: {:+.1}%", 100.0 * r);
            }
            if res.summary.flagged {
                eprintln!(
                    "warning: {:.0}% of runs failed",
                    100.0 * res.summary.failure_rate
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(!res.summary.flagged)
        }
        Cmd::ValidateOracle { config, draws, out } => {
            let cfg = load(&config, out, None, None)?;
            let net = cfg.network_for(0);
            let sc = Scenario::from_config(&net, cfg.gain_rule)?;
            let solver = apg::SolverConfig {
                seed: derive_seed(net.seed, 1),
                ..cfg.solver.clone()
            };
            let alloc = apg::solve(&sc, &solver)?.alloc;
            let rep =
                oracle::run_gates(&sc, &alloc, draws, derive_seed(cfg.master_seed, u64::MAX))?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("oracle_comparison.csv");
            rep.comparison
                .write_csv(BufWriter::new(File::create(&path)?))?;
            let line = |name: &str, ok: bool, detail: String| {
                println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
            };
            line(
                "statistics",
                rep.stats_pass(),
                format!("max rel error {:.4}", rep.stats_max_rel),
            );
            line(
                "orthogonality",
                rep.orthogonality_pass(),
                format!("max |corr| {:.2} standard errors", rep.max_cross_corr_se),
            );
            line(
                "sinr",
                rep.sinr_pass(),
                format!("max rel error {:.4}", rep.sinr_max_rel),
            );
            line(
                "power",
                rep.power_pass(),
                format!(
                    "max excess {:.2} standard errors",
                    rep.power_excess_se.max(0.0)
                ),
            );
            println!("wrote {}", path.display());
            Ok(rep.pass())
        }
        Cmd::Sweep {
            config,
            param,
            values,
            out,
            workers,
            seed,
        } => {
            let cfg = load(&config, out, workers, seed)?;
            let p: SweepParam = param.parse()?;
            let rows = bench::run_sweep(&cfg, p, &values)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("sweep.csv");
            bench::write_sweep_csv(&param, &rows, BufWriter::new(File::create(&path)?))?;
            for r in &rows {
                println!(
                    "{param}={:<5} {:<10} mean SSE {:>8.3}",
                    r.value, r.scheme, r.mean_sse
                );
            }
            println!("wrote {}", path.display());
            Ok(rows.iter().all(|r| r.failures * 10 <= r.runs))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
