use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wpcs::figures::{crossover_table, figure, FigureOptions, FIGURES};
use wpcs::table::Table;
use wpcs::{load_scenario, oracles, Error};
use wpcs_core::bcd::{optimize_schemes, optimize_with, BcdOptions, FullSolution};
use wpcs_core::link::Scheme;
use wpcs_core::Scenario;

#[derive(Parser)]
#[command(name = "wpcs", version, about = "Joint WPT, compression, beamforming and trajectory design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when absent.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Relative tolerance for BCD and SCA (bisection for `efficiency`).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_bcd: Option<usize>,
    #[arg(long, global = true)]
    max_sca: Option<usize>,
    /// Dense figure sweeps.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scheme, or all three.
    Optimize {
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Write the data of one figure (2..8) or `all`.
    Figure { id: String },
    /// Crossover powers of the efficiency curves.
    Efficiency,
    /// Brute-force checks of beams and the resource solver.
    Oracle {
        #[arg(long)]
        small: bool,
    },
}

fn scenario(c: &Common) -> Result<Scenario, Error> {
    let mut sc = match &c.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::table_one(),
    };
    if let Some(t) = c.tol {
        sc.tol_bcd = t;
        sc.tol_sca = t;
    }
    if let Some(n) = c.max_bcd {
        sc.max_bcd_iterations = n;
    }
    if let Some(n) = c.max_sca {
        sc.max_sca_iterations = n;
    }
    sc.validate()?;
    Ok(sc)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(path.display().to_string(), e))
}

fn write_solution(dir: &Path, sol: &FullSolution) -> Result<(), Error> {
    let name = sol.scheme.name();
    write_text(&dir.join(format!("{name}_summary.txt")), &sol.summary())?;
    let mut traj = Table::new(&["t", "x", "y", "z"]);
    for (t, q) in sol.trajectory.points.iter().enumerate() {
        traj.push(vec![(t + 1).into(), q[0].into(), q[1].into(), q[2].into()]);
    }
    traj.write(&dir.join(format!("{name}_trajectory.csv")))?;
    let mut sched = Table::new(&["ue", "t", "f", "p", "a", "b", "rate_bits", "harvest_j", "compressed_bits"]);
    let s = &sol.schedule;
    let a = &sol.assessment;
    for k in 0..s.ues() {
        for t in 0..s.slots() {
            sched.push(vec![
                (k + 1).into(),
                (t + 1).into(),
                s.f[k][t].into(),
                s.power[k][t].into(),
                s.a[k][t].into(),
                s.b[k][t].into(),
                a.rate[k][t].into(),
                a.harvest[k][t].into(),
                a.compressed[k][t].into(),
            ]);
        }
    }
    sched.write(&dir.join(format!("{name}_schedule.csv")))?;
    let mut hist = Table::new(&["iteration", "objective"]);
    for (i, v) in sol.objective_history.iter().enumerate() {
        hist.push(vec![(i + 1).into(), (*v).into()]);
    }
    hist.write(&dir.join(format!("{name}_history.csv")))
}

fn run(cli: Cli) -> Result<bool, Error> {
    let c = &cli.common;
    let sc = scenario(c)?;
    std::fs::create_dir_all(&c.out_dir).map_err(|e| Error::Io(c.out_dir.display().to_string(), e))?;
    let bcd = BcdOptions {
        seed: c.seed,
        ..BcdOptions::default()
    };
    match cli.command {
        Command::Optimize { scheme } => {
            let sols = match scheme {
                Some(s) => vec![optimize_with(&sc, s, &bcd)?],
                None => optimize_schemes(&sc, &bcd)?,
            };
            let mut ok = true;
            for sol in &sols {
                write_solution(&c.out_dir, sol)?;
                print!("{}", sol.summary());
                ok &= sol.audit.passed();
            }
            Ok(ok)
        }
        Command::Figure { id } => {
            let ids: Vec<u8> = if id == "all" {
                FIGURES.to_vec()
            } else {
                vec![id.parse().map_err(|_| Error::Parse(format!("figure id `{id}` is not 2..8 or `all`")))?]
            };
            let opts = FigureOptions {
                full: c.full,
                seed: c.seed,
            };
            let mut ok = true;
            for id in ids {
                let fig = figure(&sc, id, &opts)?;
                let path = c.out_dir.join(format!("fig{id}.csv"));
                fig.table.write(&path)?;
                let failed = fig.runs.iter().filter(|r| !r.audit.passed()).count();
                println!("fig{id}: {} rows, {} runs, {failed} audit failures -> {}", fig.table.rows.len(), fig.runs.len(), path.display());
                ok &= failed == 0;
            }
            Ok(ok)
        }
        Command::Efficiency => {
            let t = crossover_table(&sc, c.tol.unwrap_or(1e-12))?;
            let path = c.out_dir.join("crossover.csv");
            t.write(&path)?;
            print!("{}", t.to_csv()?);
            Ok(true)
        }
        Command::Oracle { small } => {
            let checks = oracles::run_all(small, c.seed)?;
            let mut report = String::new();
            for ch in &checks {
                report += &format!("{} {}: {}\n", if ch.passed { "PASS" } else { "FAIL" }, ch.name, ch.detail);
            }
            write_text(&c.out_dir.join("oracle_report.txt"), &report)?;
            print!("{report}");
            Ok(checks.iter().all(|c| c.passed))
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
