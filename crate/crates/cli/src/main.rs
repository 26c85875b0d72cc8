use std::path::{Path, PathBuf};
use std::process::ExitCode;

use balloc_core::experiments::{self, DriftCheckConfig, ExperimentConfig, KeyValues};
use balloc_core::graphs::{conductance_bounds, conductance_exact, EXACT_CONDUCTANCE_MAX_N};
use balloc_core::plot::{write_svg, PlotSpec};
use balloc_core::processes::{self, rational};
use balloc_core::selftest::{selftest, Scale};
use balloc_core::vectors::{check_c1, check_c2};
use balloc_core::{ConditionParams, Error, ProcessKind, ProcessSpec, RegularGraph, Table};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "BALLOC_OUT_DIR";

#[derive(Parser)]
#[command(name = "balloc", version, about = "Balanced-allocation simulations and drift certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sweep and write its CSV table.
    Simulate {
        config: PathBuf,
        /// Output CSV; defaults to `<stem>.csv` in $BALLOC_OUT_DIR or the working directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify the expected potential drift and write the check report.
    DriftCheck {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the exact conductance of a graph file, or bounds for large graphs.
    Conductance { graph: PathBuf },
    /// Print a process's allocation vector and its condition checks.
    Vector {
        process: String,
        n: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Render a result table as an SVG line plot.
    Plot {
        table: PathBuf,
        /// `x=<col>,y=<col>[,group=<col>][,scale=linear|log-x|log-y|log-log][,out=<path>]`
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Selftest {
        /// Smaller trial counts.
        #[arg(long)]
        quick: bool,
    },
}

enum Failure {
    Invalid(Error),
    Checks(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Checks(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn default_out(config: &Path, suffix: &str, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_default();
        dir.join(format!("{stem}{suffix}"))
    })
}

fn ensure_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, out, seed } => {
            let mut kv = KeyValues::read(&config)?;
            if let Some(s) = seed {
                kv.set("seed", s.to_string());
            }
            let cfg = ExperimentConfig::from_key_values(&kv)?;
            let table = experiments::sweep(&cfg)?;
            let out = default_out(&config, ".csv", out);
            ensure_parent(&out)?;
            table.write_csv(&out)?;
            println!("wrote {} rows to {}", table.len(), out.display());
        }
        Command::DriftCheck { config, out, seed } => {
            let mut kv = KeyValues::read(&config)?;
            if let Some(s) = seed {
                kv.set("seed", s.to_string());
            }
            let cfg = DriftCheckConfig::from_key_values(&kv)?;
            let checks = experiments::drift_check(&cfg)?;
            let out = default_out(&config, "-drift.csv", out);
            ensure_parent(&out)?;
            experiments::checks_table(&checks).write_csv(&out)?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} checks, {failed} failed; report in {}", checks.len(), out.display());
            if failed > 0 {
                return Err(Failure::Checks(format!("{failed} drift checks failed")));
            }
        }
        Command::Conductance { graph } => {
            let g = RegularGraph::read(&graph)?;
            if g.n() <= EXACT_CONDUCTANCE_MAX_N {
                println!("phi = {:.6} (exact)", conductance_exact(&g)?.phi);
            } else {
                let b = conductance_bounds(&g);
                println!("phi in [{:.6}, {:.6}] (bounds)", b.lower, b.upper);
            }
        }
        Command::Vector {
            process,
            n,
            delta,
            epsilon,
            c,
        } => vector(&process, n, delta, epsilon, c)?,
        Command::Plot { table, spec, out } => {
            let spec: PlotSpec = spec.parse()?;
            let t = Table::read_csv(&table)?;
            let out = out.or_else(|| spec.out.clone()).unwrap_or_else(|| default_out(&table, ".svg", None));
            ensure_parent(&out)?;
            write_svg(&t, &spec, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Selftest { quick } => {
            let items = selftest(if quick { Scale::Quick } else { Scale::Full });
            for i in &items {
                println!("{} {}/{}: {}", if i.pass { "pass" } else { "FAIL" }, i.module, i.name, i.detail);
            }
            let failed = items.iter().filter(|i| !i.pass).count();
            if failed > 0 {
                return Err(Failure::Checks(format!("{failed} of {} selftest items failed", items.len())));
            }
        }
    }
    Ok(())
}

fn fraction(x: f64) -> String {
    match rational(x) {
        Ok(q) if q.is_integer() => q.numer().to_string(),
        Ok(q) => format!("{}/{}", q.numer(), q.denom()),
        Err(_) => x.to_string(),
    }
}

fn vector(process: &str, n: usize, delta: Option<f64>, epsilon: Option<f64>, c: Option<f64>) -> Result<(), Error> {
    let kind: ProcessKind = process.parse()?;
    let spec = ProcessSpec::new(kind.clone());
    let p = processes::allocation_vector(&spec, n).or_else(|_| processes::comparison_vector(&spec, n))?;
    println!("{}", p.to_csv_row());
    let default = experiments::default_conditions(&kind, n)?;
    let cond = match (delta, epsilon, default) {
        (Some(d), Some(e), _) => ConditionParams::new(d, e, c.unwrap_or(2.0))?,
        (d, e, Some(dc)) => ConditionParams::new(d.unwrap_or(dc.delta), e.unwrap_or(dc.epsilon), c.unwrap_or(dc.c_cap))?,
        (_, _, None) => {
            println!("C1: not applicable without --delta and --epsilon, C2: {} (C={})", if check_c2(&p, c.unwrap_or(2.0)) { "pass" } else { "fail" }, fraction(c.unwrap_or(2.0)));
            return Ok(());
        }
    };
    let verdict = |b: bool| if b { "pass" } else { "fail" };
    println!(
        "C1: {} (δ={}, ε={}), C2: {} (C={})",
        verdict(check_c1(&p, &cond)?),
        fraction(cond.delta),
        fraction(cond.epsilon),
        verdict(check_c2(&p, cond.c_cap)),
        fraction(cond.c_cap)
    );
    Ok(())
}
