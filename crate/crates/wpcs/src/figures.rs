//! Data behind Figs 2 to 8. Each figure is one table with a fixed header,
//! plus a record of every optimizer run it needed.

use wpcs_core::bcd::{monotonicity_audit, optimize_schemes, optimize_with, AuditReport, BcdOptions, FullSolution};
use wpcs_core::efficiency::{crossovers, efficiency_curves, log_grid, EfficiencySetup, DEFAULT_BRACKET};
use wpcs_core::link::{compressed_bits, Scheme};
use wpcs_core::scenario::{db_to_linear, dbm_to_watts};
use wpcs_core::trajectory::Trajectory;
use wpcs_core::Scenario;

use crate::table::{Cell, Table};
use crate::{par_map, Error};

/// Relative tolerance of the per-stage monotonicity audit.
pub const AUDIT_TOL: f64 = 1e-6;

/// Summary of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub scheme: Scheme,
    pub objective: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub audit: AuditReport,
    /// Worst relative violation of energy, rate and time constraints.
    pub violation: f64,
    /// Worst trajectory constraint violation in meters.
    pub trajectory_violation: f64,
}

impl RunRecord {
    pub fn new(label: String, sc: &Scenario, sol: &FullSolution) -> Self {
        RunRecord {
            label,
            scheme: sol.scheme,
            objective: sol.assessment.objective,
            iterations: sol.iterations(),
            history: sol.objective_history.clone(),
            audit: monotonicity_audit(&sol.stages, AUDIT_TOL),
            violation: sol.assessment.worst(),
            trajectory_violation: sol.trajectory.violation(sc),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub id: u8,
    pub table: Table,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    /// Dense grids instead of the reduced ones.
    pub full: bool,
    pub seed: u64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions { full: false, seed: 1 }
    }
}

impl FigureOptions {
    fn bcd(&self) -> BcdOptions {
        BcdOptions {
            seed: self.seed,
            ..BcdOptions::default()
        }
    }
}

pub const FIGURES: [u8; 7] = [2, 3, 4, 5, 6, 7, 8];

pub fn figure(sc: &Scenario, id: u8, opts: &FigureOptions) -> Result<Figure, Error> {
    match id {
        2 => figure2(sc, opts),
        3 => figure3(sc, opts),
        4 => figure4(sc, opts),
        5 => figure5(sc, opts),
        6 => figure6(sc, opts),
        7 => figure7(sc, opts),
        8 => figure8(sc, opts),
        _ => Err(Error::Parse(format!("no figure {id}; expected one of 2..8"))),
    }
}

/// Efficiency curves. Power on a log grid over the default bracket.
pub fn figure2(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let setup = EfficiencySetup::table_one(sc);
    let n = if opts.full { 1000 } else { 91 };
    let powers = log_grid(DEFAULT_BRACKET.0, DEFAULT_BRACKET.1, n);
    let mut table = Table::new(&["P", "eta_U", "eta_C_lossless", "eta_C_lossy"]);
    for r in efficiency_curves(sc, &setup, &powers)? {
        table.push(r.iter().map(|v| Cell::Num(*v)).collect());
    }
    Ok(Figure { id: 2, table, runs: Vec::new() })
}

/// `(P*, P̄*)` for the Fig 2 setup.
pub fn crossover_table(sc: &Scenario, tol: f64) -> Result<Table, Error> {
    let setup = EfficiencySetup::table_one(sc);
    let (p, pb) = crossovers(sc, &setup, DEFAULT_BRACKET, tol)?;
    let mut table = Table::new(&["gain", "b", "kappa", "kappa_bar", "P_star", "P_bar_star"]);
    table.push(vec![
        setup.gain.into(),
        setup.b.into(),
        setup.kappa.into(),
        setup.kappa_bar.into(),
        p.into(),
        pb.into(),
    ]);
    Ok(table)
}

/// Equal weights, as contrasted with the default profile.
pub fn equal_weights(sc: &Scenario) -> Vec<f64> {
    vec![1.0 / sc.ues() as f64; sc.ues()]
}

/// Trajectories per scheme under equal and default weights.
pub fn figure3(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let profiles = [("equal", sc.with_weights(&equal_weights(sc))), ("weighted", sc.clone())];
    let solved = par_map(&profiles, |(_, s)| optimize_schemes(s, &opts.bcd()));
    let mut table = Table::new(&["weights", "scheme", "t", "x", "y"]);
    let mut runs = Vec::new();
    for ((name, s), sols) in profiles.iter().zip(solved) {
        for sol in sols? {
            for (t, q) in sol.trajectory.points.iter().enumerate() {
                table.push(vec![(*name).into(), sol.scheme.name().into(), (t + 1).into(), q[0].into(), q[1].into()]);
            }
            runs.push(RunRecord::new(format!("fig3 {name}"), s, &sol));
        }
    }
    Ok(Figure { id: 3, table, runs })
}

/// WPT and upload time shares of the lossless solution.
pub fn figure4(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let sol = optimize_with(sc, Scheme::Lossless, &opts.bcd())?;
    let mut table = Table::new(&["ue", "t", "a", "b"]);
    for k in 0..sc.ues() {
        for t in 0..sol.schedule.slots() {
            table.push(vec![(k + 1).into(), (t + 1).into(), sol.schedule.a[k][t].into(), sol.schedule.b[k][t].into()]);
        }
    }
    Ok(Figure {
        id: 4,
        table,
        runs: vec![RunRecord::new("fig4".into(), sc, &sol)],
    })
}

fn sweep<P: Sync>(
    sc: &Scenario,
    opts: &FigureOptions,
    points: &[P],
    make: impl Fn(&Scenario, &P) -> Scenario + Sync,
) -> Vec<Result<(Scenario, Vec<FullSolution>), Error>> {
    par_map(points, |p| {
        let s = make(sc, p);
        let sols = optimize_schemes(&s, &opts.bcd())?;
        Ok((s, sols))
    })
}

/// Objective against BS transmit power, for two surface sizes.
pub fn figure5(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let powers: Vec<f64> = if opts.full {
        (0..=8).map(|i| 25.0 + 2.5 * i as f64).collect()
    } else {
        vec![25.0, 30.0, 35.0, 40.0, 45.0]
    };
    let sizes: &[usize] = if opts.full { &[16, 128] } else { &[16, 64] };
    let points: Vec<(usize, f64)> = sizes.iter().flat_map(|&n| powers.iter().map(move |&p| (n, p))).collect();
    let results = sweep(sc, opts, &points, |base, &(n, p)| {
        let mut s = base.clone();
        s.ris_elements = n;
        s.bs_power = dbm_to_watts(p);
        s
    });
    let mut table = Table::new(&["P_T_dBm", "N", "scheme", "objective"]);
    let mut runs = Vec::new();
    for (&(n, p), res) in points.iter().zip(results) {
        let (s, sols) = res?;
        for sol in &sols {
            table.push(vec![p.into(), n.into(), sol.scheme.name().into(), sol.assessment.objective.into()]);
            runs.push(RunRecord::new(format!("fig5 N={n} P_T={p}dBm"), &s, sol));
        }
    }
    Ok(Figure { id: 5, table, runs })
}

/// Objective against surface size, for two antenna counts.
pub fn figure6(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let sizes: Vec<usize> = if opts.full { vec![8, 16, 32, 64, 96, 128] } else { vec![8, 16, 32, 64] };
    let points: Vec<(usize, usize)> = [4usize, 32].iter().flat_map(|&m| sizes.iter().map(move |&n| (m, n))).collect();
    let results = sweep(sc, opts, &points, |base, &(m, n)| {
        let mut s = base.clone();
        s.antennas = m;
        s.ris_elements = n;
        s
    });
    let mut table = Table::new(&["N", "M", "scheme", "objective"]);
    let mut runs = Vec::new();
    for (&(m, n), res) in points.iter().zip(results) {
        let (s, sols) = res?;
        for sol in &sols {
            table.push(vec![n.into(), m.into(), sol.scheme.name().into(), sol.assessment.objective.into()]);
            runs.push(RunRecord::new(format!("fig6 M={m} N={n}"), &s, sol));
        }
    }
    Ok(Figure { id: 6, table, runs })
}

/// Share of uploaded bits that are compressed output, per UE.
pub fn compressed_share(sc: &Scenario, sol: &FullSolution) -> Vec<f64> {
    (0..sc.ues())
        .map(|k| {
            let sent: f64 = sol.assessment.rate[k].iter().sum();
            let f = if sol.scheme == Scheme::None { 0.0 } else { 1.0 };
            let queued: f64 = sol.schedule.f[k]
                .iter()
                .map(|&fk| sc.kappa[k] * compressed_bits(sc, f * fk, sc.kappa[k]))
                .sum();
            if sent > 0.0 {
                queued / sent
            } else {
                0.0
            }
        })
        .collect()
}

/// Compressed share against channel gain, hovering above the BS.
pub fn figure7(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let gains: Vec<f64> = if opts.full {
        (0..=8).map(|i| -60.0 + 2.5 * i as f64).collect()
    } else {
        vec![-60.0, -55.0, -50.0, -45.0, -40.0]
    };
    let points: Vec<(f64, Scheme)> = gains
        .iter()
        .flat_map(|&g| [Scheme::Lossless, Scheme::Lossy].map(|s| (g, s)))
        .collect();
    let results = par_map(&points, |&(g, scheme)| {
        let mut s = sc.with_weights(&equal_weights(sc));
        s.reference_gain = db_to_linear(g);
        let hover = Trajectory::hover([0.0, 0.0, s.altitude], s.slots);
        s.start = hover.points[0];
        s.end = hover.points[0];
        let o = BcdOptions {
            fixed_trajectory: Some(hover),
            ..opts.bcd()
        };
        optimize_with(&s, scheme, &o).map(|sol| (s, sol))
    });
    let mut table = Table::new(&["h0_dB", "scheme", "ue", "share"]);
    let mut runs = Vec::new();
    for (&(g, scheme), res) in points.iter().zip(results) {
        let (s, sol) = res?;
        for (k, v) in compressed_share(&s, &sol).into_iter().enumerate() {
            table.push(vec![g.into(), scheme.name().into(), (k + 1).into(), v.into()]);
        }
        runs.push(RunRecord::new(format!("fig7 h0={g}dB"), &s, &sol));
    }
    Ok(Figure { id: 7, table, runs })
}

/// Objective after every BCD iteration.
pub fn figure8(sc: &Scenario, opts: &FigureOptions) -> Result<Figure, Error> {
    let sols = par_map(&Scheme::ALL, |&scheme| optimize_with(sc, scheme, &opts.bcd()));
    let mut table = Table::new(&["scheme", "iteration", "objective"]);
    let mut runs = Vec::new();
    for sol in sols {
        let sol = sol?;
        for (i, v) in sol.objective_history.iter().enumerate() {
            table.push(vec![sol.scheme.name().into(), (i + 1).into(), (*v).into()]);
        }
        runs.push(RunRecord::new("fig8".into(), sc, &sol));
    }
    Ok(Figure { id: 8, table, runs })
}
