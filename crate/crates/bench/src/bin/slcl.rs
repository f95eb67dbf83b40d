use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slcl_bench::{expected_status, run_suite, ReportFormat, SuiteEntry, SuiteReport};
use slcl_core::driver::{solve, Mode, OuterOptions};
use slcl_core::model::{catalog, catalog_get};

#[derive(Parser)]
#[command(name = "slcl", version, about = "Stabilized LCL solver on the built-in problem catalog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one catalog problem.
    Solve {
        name: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Solve several catalog problems.
    Suite {
        /// Run every catalog problem.
        #[arg(long, conflicts_with = "names")]
        all: bool,
        names: Vec<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Print the catalog.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stabilized,
    Canonical,
    Bcl,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long, value_enum, default_value = "stabilized")]
    mode: ModeArg,
    #[arg(long)]
    omega_star: Option<f64>,
    #[arg(long)]
    eta_star: Option<f64>,
    #[arg(long)]
    max_major: Option<usize>,
    /// Write a JSON report.
    #[arg(long, conflicts_with = "csv")]
    json: Option<PathBuf>,
    /// Write a CSV report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Print one line per major iteration.
    #[arg(long)]
    trace: bool,
}

impl RunFlags {
    fn options(&self) -> OuterOptions {
        let mode = match self.mode {
            ModeArg::Stabilized => Mode::Stabilized,
            ModeArg::Canonical => Mode::Canonical,
            ModeArg::Bcl => Mode::Bcl,
        };
        let mut opts = OuterOptions::for_mode(mode);
        if let Some(v) = self.omega_star {
            opts.omega_star = v;
        }
        if let Some(v) = self.eta_star {
            opts.eta_star = v;
        }
        if let Some(v) = self.max_major {
            opts.max_major = v;
        }
        opts
    }

    fn output(&self) -> Option<(&std::path::Path, ReportFormat)> {
        match (&self.json, &self.csv) {
            (Some(p), _) => Some((p.as_path(), ReportFormat::Json)),
            (None, Some(p)) => Some((p.as_path(), ReportFormat::Csv)),
            _ => None,
        }
    }
}

fn print_entry(e: &SuiteEntry) {
    println!(
        "{:<14} {:<15} majors {:>4}  minors {:>7}  fevals {:>7}  f = {:>14.8e}  pinf {:.1e}  dinf {:.1e}  comp {:.1e}  {:.3}s",
        e.name,
        e.status,
        e.majors,
        e.minors,
        e.fevals,
        e.final_objective,
        e.final_residual.primal_inf,
        e.final_residual.dual_inf,
        e.final_residual.comp,
        e.wall_time_s
    );
    if let Some(err) = &e.error {
        println!("  error: {err}");
    }
}

fn print_trace(name: &str, opts: &OuterOptions) {
    let Ok(entry) = catalog_get(name) else { return };
    let Ok(r) = solve(&entry.problem, opts) else { return };
    println!("{name}");
    println!("  {:>4} {:<7} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7}", "k", "branch", "rho", "sigma", "eta", "omega", "|c|", "|F|", "inner");
    for t in &r.trace {
        println!(
            "  {:>4} {:<7} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>7}",
            t.k,
            format!("{:?}", t.branch).to_lowercase(),
            t.rho,
            t.sigma,
            t.eta,
            t.omega,
            t.c_norm,
            t.f_norm,
            t.inner_iterations
        );
    }
}

fn run(names: &[&str], flags: &RunFlags) -> Result<SuiteReport, slcl_bench::BenchError> {
    let opts = flags.options();
    if flags.trace {
        for name in names {
            print_trace(name, &opts);
        }
    }
    run_suite(names, &opts, flags.output())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (names, flags): (Vec<String>, RunFlags) = match cli.command {
        Command::List => {
            for e in catalog() {
                let p = &e.problem;
                let known = e.known_objective.map_or("-".to_string(), |f| format!("{f:.10}"));
                println!(
                    "{:<14} n={:<2} m_c={:<2} m_A={:<2} {:<10} {}f* = {}",
                    e.name,
                    p.n(),
                    p.m_c(),
                    p.m_a(),
                    expected_status(e.classification).to_lowercase(),
                    if e.convex { "convex  " } else { "" },
                    known
                );
            }
            return ExitCode::SUCCESS;
        }
        Command::Solve { name, flags } => (vec![name], flags),
        Command::Suite { all, names, flags } => {
            let names = if all || names.is_empty() {
                catalog().iter().map(|e| e.name.to_string()).collect()
            } else {
                names
            };
            (names, flags)
        }
    };

    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    match run(&refs, &flags) {
        Ok(report) => {
            for e in &report.entries {
                print_entry(e);
            }
            let t = report.totals;
            if report.entries.len() > 1 {
                println!(
                    "{} problems, {} optimal, majors {}, minors {}, fevals {}, {:.3}s",
                    t.problems, t.optimal, t.majors, t.minors, t.fevals, t.wall_time_s
                );
            }
            let ok = report.entries.iter().all(SuiteEntry::expected);
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
