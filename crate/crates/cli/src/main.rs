use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use interlace_core::connectivity::{n_kd, Adjacency};
use interlace_core::error::{Error, Result};
use interlace_core::harness::{self, ExperimentConfig, Overrides, Table, SEED_ENV};
use interlace_core::schemes::{count_schemes, enumerate_schemes, validate_scheme, Scheme, SchemeCatalog};

#[derive(Parser)]
#[command(name = "interlace", version, about = "Random interlacement experiments on Z^d")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config and the environment).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<Adjacency>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    u: Option<f64>,
    /// Largest family size searched by min-connect.
    #[arg(long, global = true)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Capacities of balls or boxes at the configured radii.
    Capacity,
    /// Sample trajectories around the marked points and write them as JSONL.
    Sample,
    /// Minimal connecting families at every separation and radius.
    Connect {
        /// Evaluate a samples file instead of sampling.
        #[arg(long)]
        from_samples: Option<PathBuf>,
    },
    /// Capacity growth of the cascade sets.
    Cascade,
    /// Tree sums over growing leaf separations.
    TreeSum,
    /// The table of n(k,d).
    VerifyNkd {
        #[arg(long, default_value_t = 2)]
        k_min: u64,
        #[arg(long, default_value_t = 6)]
        k_max: u64,
        #[arg(long, default_value_t = 3)]
        d_min: u64,
        #[arg(long, default_value_t = 10)]
        d_max: u64,
    },
    /// Connection schemes.
    Schemes {
        #[command(subcommand)]
        action: SchemesCmd,
    },
}

#[derive(Subcommand)]
enum SchemesCmd {
    /// Counts for 2 <= k' <= k and 1 <= n' <= n.
    Enumerate {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
    },
    /// Full catalog for one (k, n) as JSON.
    Export {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
    /// Validate schemes from a JSON file (one scheme, an array, or a catalog).
    Validate { path: PathBuf },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, replicas: self.replicas, mode: self.mode, d: self.d, u: self.u, limit: self.limit }
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let env = std::env::var(SEED_ENV).ok();
        ExperimentConfig::resolve(self.config.as_deref(), env.as_deref(), &self.overrides())
    }
}

fn emit(tables: &[&Table], cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let hash = cfg.hash();
    match out {
        Some(dir) => {
            for t in tables {
                t.save(dir, &hash)?;
            }
            std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
        }
        None => {
            let mut so = std::io::stdout().lock();
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(so)?;
                }
                t.write_csv(&hash, &mut so)?;
            }
        }
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T, out: Option<&Path>, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(name), text)?;
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_schemes(path: &Path) -> Result<Vec<Scheme>> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(c) = serde_json::from_str::<SchemeCatalog>(&text) {
        return Ok(c.schemes);
    }
    if let Ok(v) = serde_json::from_str::<Vec<Scheme>>(&text) {
        return Ok(v);
    }
    Ok(vec![serde_json::from_str::<Scheme>(&text)?])
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.common.out.as_deref();
    match cli.cmd {
        Cmd::Capacity => {
            let cfg = cli.common.config()?;
            emit(&[&harness::run_capacity(&cfg)?], &cfg, out)
        }
        Cmd::Sample => {
            let cfg = cli.common.config()?;
            let started = std::time::Instant::now();
            let n = match out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let f = std::fs::File::create(dir.join(harness::SAMPLES_FILE))?;
                    let n = harness::write_samples(&cfg, &mut std::io::BufWriter::new(f))?;
                    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
                    n
                }
                None => harness::write_samples(&cfg, &mut std::io::stdout().lock())?,
            };
            log::info!("{n} trajectories in {:?}", started.elapsed());
            Ok(())
        }
        Cmd::Connect { from_samples } => {
            let cfg = cli.common.config()?;
            let started = std::time::Instant::now();
            let res = match &from_samples {
                Some(p) => harness::connectivity_from_samples(&cfg, p)?,
                None => harness::run_connectivity(&cfg, out)?,
            };
            log::info!("connectivity finished in {:?}", started.elapsed());
            match (out, from_samples.is_some()) {
                // run_connectivity already persisted the rows.
                (Some(_), false) => emit(&[&res.summary, &res.fits], &cfg, out),
                _ => emit(&[&res.rows, &res.summary, &res.fits], &cfg, out),
            }
        }
        Cmd::Cascade => {
            let cfg = cli.common.config()?;
            let res = harness::run_cascade(&cfg)?;
            emit(&[&res.rows, &res.fits], &cfg, out)
        }
        Cmd::TreeSum => {
            let cfg = cli.common.config()?;
            let res = harness::run_tree_sum(&cfg)?;
            emit(&[&res.rows, &res.fits], &cfg, out)
        }
        Cmd::VerifyNkd { k_min, k_max, d_min, d_max } => {
            let mut t = Table::new("n_kd", &["k", "d", "n_kd"]);
            for k in k_min..=k_max {
                for d in d_min..=d_max {
                    t.push(vec![k.to_string(), d.to_string(), n_kd(k, d)?.to_string()]);
                }
            }
            emit(&[&t], &ExperimentConfig::default(), out)
        }
        Cmd::Schemes { action } => match action {
            SchemesCmd::Enumerate { k, n } => {
                let mut t = Table::new("scheme_counts", &["k", "n", "m", "labeled", "oriented"]);
                for kk in 2..=k {
                    for nn in 1..=n {
                        let c = count_schemes(kk, nn)?;
                        t.push(vec![c.k.to_string(), c.n.to_string(), c.m.to_string(), c.labeled.to_string(), c.oriented.to_string()]);
                    }
                }
                emit(&[&t], &ExperimentConfig::default(), out)
            }
            SchemesCmd::Export { k, n } => print_json(&enumerate_schemes(k, n)?, out, &format!("schemes_k{k}_n{n}.json")),
            SchemesCmd::Validate { path } => {
                let schemes = read_schemes(&path)?;
                let reports: Vec<_> = schemes.iter().map(validate_scheme).collect();
                let failed = reports.iter().filter(|r| !r.passed()).count();
                print_json(&serde_json::json!({ "schemes": schemes.len(), "failed": failed, "reports": reports }), out, "validation.json")?;
                if failed > 0 {
                    return Err(Error::InvalidArgument(format!("{failed} of {} schemes failed validation", schemes.len())));
                }
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
