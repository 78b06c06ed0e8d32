use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use bvc_core::approx_async::approx_schedule;
use bvc_core::geom::rational::{parse_rational, to_fraction_string};
use bvc_core::geom::Rational;
use bvc_core::model::{Mode, ScenarioConfig, Step2Mode};
use bvc_core::restricted::restricted_schedule;
use bvc_core::scenario::{
    default_out_dir, run_scenario, section1_check, thm1_demo, thm3_demo, undersized_restricted_async, write_outputs,
    ScenarioFile,
};

const PROPERTY_FAIL: u8 = 1;
const USAGE_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "bvc", version, about = "Byzantine vector consensus testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, write trace.csv and summary.json.
    Run {
        file: PathBuf,
        /// Output directory (default: out/<name>-<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower-bound demonstrations.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Print the contraction factor and the number of rounds.
    Gamma {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: usize,
        /// Witness-based Step 2 (γ = 1/n²).
        #[arg(long)]
        optimized: bool,
        /// approx_async, restricted_sync or restricted_async.
        #[arg(long, default_value = "approx_async")]
        mode: String,
        #[arg(long, default_value = "1/100", value_parser = rational_arg)]
        eps: Rational,
        #[arg(long, default_value = "0", value_parser = rational_arg)]
        lower: Rational,
        #[arg(long, default_value = "1", value_parser = rational_arg)]
        upper: Rational,
    },
    /// Run a scenario under k consecutive seeds starting at the file's seed.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        seeds: u64,
    },
    /// Check that (1/6, 1/6, 1/6) is outside the hull of the three
    /// probability vectors.
    Section1Check,
}

#[derive(Subcommand)]
enum Demo {
    /// Empty intersection of leave-one-out hulls at n = d + 1.
    Thm1 {
        #[arg(long)]
        d: usize,
    },
    /// Forced decisions at n = d + 2 that are 4ε apart.
    Thm3 {
        #[arg(long)]
        d: usize,
        #[arg(long, value_parser = rational_arg)]
        eps: Rational,
    },
    /// A schedule breaking the overlap of restricted asynchronous rounds at
    /// n = (d + 4)f.
    Restricted {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
}

fn rational_arg(text: &str) -> Result<Rational, String> {
    parse_rational(text).ok_or_else(|| format!("'{text}' is not a rational"))
}

fn load(file: &Path) -> Result<ScenarioFile, ExitCode> {
    ScenarioFile::load(file).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(USAGE_ERROR)
    })
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(PROPERTY_FAIL)
    }
}

fn run(file: PathBuf, out: Option<PathBuf>) -> Result<ExitCode, ExitCode> {
    let scenario = load(&file)?;
    let cfg = &scenario.config;
    let report = run_scenario(cfg, &scenario.inputs).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(USAGE_ERROR)
    })?;
    let dir = out.unwrap_or_else(|| default_out_dir(cfg));
    if let Err(e) = write_outputs(&dir, cfg, &report) {
        eprintln!("error: writing {}: {e}", dir.display());
        return Err(ExitCode::from(USAGE_ERROR));
    }
    let s = &report.summary;
    println!("scenario: {} (seed {})", cfg.name, cfg.seed);
    for o in &s.outcome {
        println!("  {o}");
    }
    println!("rounds: {}", s.rounds);
    if let (Some(g), Some(r)) = (&s.gamma, s.round_bound) {
        println!("gamma: {}  round bound: {r}", to_fraction_string(g));
    }
    println!("trace sha256: {}", s.trace_sha256);
    println!("wrote {}", dir.display());
    Ok(verdict(report.ok()))
}

fn demo(which: Demo) -> Result<ExitCode, ExitCode> {
    let geometry = |e: bvc_core::geom::GeomError| {
        eprintln!("error: {e}");
        ExitCode::from(USAGE_ERROR)
    };
    match which {
        Demo::Thm1 { d } => {
            let r = thm1_demo(d).map_err(geometry)?;
            for (k, row) in r.membership.iter().enumerate() {
                let marks: String = row.iter().map(|&m| if m { '+' } else { '.' }).collect();
                println!("x{} = {}  in Q: {marks}", k + 1, r.inputs[k]);
            }
            println!(
                "in the first {d} hulls: {:?}",
                r.first_d_survivors.iter().map(|k| k + 1).collect::<Vec<_>>()
            );
            println!("intersection empty: {}", r.intersection_empty);
            Ok(verdict(r.intersection_empty))
        }
        Demo::Thm3 { d, eps } => {
            let r = thm3_demo(d, &eps).map_err(geometry)?;
            for p in &r.processes {
                println!(
                    "p{}: input {}  forced: {}",
                    p.process + 1,
                    r.inputs[p.process],
                    p.singleton
                );
            }
            println!(
                "closest pair of forced decisions differs by {}",
                to_fraction_string(&r.min_pair_gap)
            );
            println!("epsilon-agreement violated: {}", r.agreement_violated());
            Ok(verdict(r.agreement_violated()))
        }
        Demo::Restricted { d, seeds } => {
            let found = undersized_restricted_async(d, 0..seeds).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(USAGE_ERROR)
            })?;
            match found {
                Some(x) => {
                    println!(
                        "seed {}: round {}, processes {} and {} share {} non-faulty tuples (need {})",
                        x.seed, x.round, x.processes.0, x.processes.1, x.common, x.required
                    );
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no breaking schedule in {seeds} seeds");
                    Ok(ExitCode::from(PROPERTY_FAIL))
                }
            }
        }
    }
}

fn gamma(
    n: usize,
    f: usize,
    optimized: bool,
    mode: &str,
    eps: Rational,
    lower: Rational,
    upper: Rational,
) -> Result<ExitCode, ExitCode> {
    let mode = match mode {
        "approx_async" => Mode::ApproxAsync,
        "restricted_sync" => Mode::RestrictedSync,
        "restricted_async" => Mode::RestrictedAsync,
        other => {
            eprintln!("error: no contraction factor for mode '{other}'");
            return Err(ExitCode::from(USAGE_ERROR));
        }
    };
    if n <= f || n < 2 || eps <= Rational::from_integer(0.into()) || lower >= upper {
        eprintln!("error: need n > f, n >= 2, eps > 0 and lower < upper");
        return Err(ExitCode::from(USAGE_ERROR));
    }
    let mut cfg = ScenarioConfig::new(mode, n, f, 1);
    cfg.step2 = if optimized {
        Step2Mode::WitnessOptimized
    } else {
        Step2Mode::AllSubsets
    };
    cfg.epsilon = eps;
    cfg.lower = lower;
    cfg.upper = upper;
    let (g, r) = match mode {
        Mode::ApproxAsync => approx_schedule(&cfg),
        _ => restricted_schedule(&cfg),
    };
    println!("gamma = {}", to_fraction_string(&g));
    println!(
        "round bound = {r} (eps = {}, U - nu = {})",
        to_fraction_string(&cfg.epsilon),
        to_fraction_string(&(&cfg.upper - &cfg.lower))
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(file: PathBuf, seeds: u64) -> Result<ExitCode, ExitCode> {
    let scenario = load(&file)?;
    let base = scenario.config.seed;
    let mut rows: Vec<_> = (0..seeds)
        .into_par_iter()
        .map(|k| {
            let mut cfg = scenario.config.clone();
            cfg.seed = base + k;
            let report = run_scenario(&cfg, &scenario.inputs);
            (cfg.seed, report)
        })
        .collect();
    rows.sort_by_key(|(seed, _)| *seed);
    let mut passed = 0;
    println!("{:>8}  {:<6}  {:>6}  trace sha256", "seed", "result", "rounds");
    for (seed, report) in &rows {
        match report {
            Ok(r) => {
                passed += usize::from(r.ok());
                let result = if r.ok() { "ok" } else { "FAIL" };
                println!(
                    "{seed:>8}  {result:<6}  {:>6}  {}",
                    r.summary.rounds, r.summary.trace_sha256
                );
                for failure in r.summary.failures() {
                    println!("          {failure}");
                }
            }
            Err(e) => {
                eprintln!("error: seed {seed}: {e}");
                return Err(ExitCode::from(USAGE_ERROR));
            }
        }
    }
    println!("{passed}/{} seeds passed", rows.len());
    Ok(verdict(passed == rows.len()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { file, out } => run(file, out),
        Command::Demo { which } => demo(which),
        Command::Gamma {
            n,
            f,
            optimized,
            mode,
            eps,
            lower,
            upper,
        } => gamma(n, f, optimized, &mode, eps, lower, upper),
        Command::Sweep { file, seeds } => sweep(file, seeds),
        Command::Section1Check => match section1_check() {
            Ok(r) => {
                println!("membership: {}", r.membership);
                Ok(verdict(!r.membership))
            }
            Err(e) => {
                eprintln!("error: {e}");
                Err(ExitCode::from(USAGE_ERROR))
            }
        },
    };
    result.unwrap_or_else(|code| code)
}
