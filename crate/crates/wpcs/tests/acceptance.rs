//! One pass/fail line per acceptance criterion, at the pinned tolerances.
//! Runs without the test harness so the report is printed even on success;
//! the exit status is nonzero if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wpcs::figures::{figure, Figure, FigureOptions, RunRecord};
use wpcs::oracles;
use wpcs_core::bcd::{last_change, optimize};
use wpcs_core::efficiency::{
    crossovers, efficiency_curves, eta_lossless, eta_upload, eta_upload_derivative, log_grid, EfficiencySetup,
    DEFAULT_BRACKET,
};
use wpcs_core::link::{harvested_energy, path_powers, trajectory_coefficients, uplink_bits, Scheme};
use wpcs_core::trajectory::{taylor_energy_bound, taylor_rate_bound};
use wpcs_core::Scenario;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn add(&mut self, n: usize, ok: bool, detail: String) {
        println!("criterion {n:>2}: {} - {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((n, ok, detail));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s > 0.0 {
        (a - b).abs() / s
    } else {
        0.0
    }
}

fn nondecreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs())
}

fn main() {
    let sc = Scenario::table_one();
    let mut report = Report { lines: Vec::new() };
    let opts = FigureOptions::default();
    let figs: Vec<Figure> = [3u8, 4, 5, 6, 7, 8].iter().map(|&id| figure(&sc, id, &opts).unwrap()).collect();
    let fig = |id: u8| figs.iter().find(|f| f.id == id).unwrap();

    // 1: convergence on the default scenario
    let start = Instant::now();
    let sol = optimize(&sc, Scheme::Lossless).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let hist = &sol.objective_history;
    let by_ten = (1..hist.len().min(10))
        .find(|&i| last_change(&hist[..=i]) < 1e-3)
        .map(|i| i + 1);
    report.add(
        1,
        by_ten.is_some() && secs <= 300.0,
        format!(
            "relative change < 1e-3 at iteration {by_ten:?}, {} iterations, {secs:.1} s, objective {:.6e}",
            hist.len(),
            sol.assessment.objective
        ),
    );

    // 2: stage-wise monotonicity of every run
    let mut runs: Vec<&RunRecord> = figs.iter().flat_map(|f| &f.runs).collect();
    let own = RunRecord::new("default".into(), &sc, &sol);
    runs.push(&own);
    let bad: Vec<String> = runs
        .iter()
        .filter(|r| !r.audit.passed())
        .map(|r| format!("{} {}: {:?}", r.label, r.scheme.name(), r.audit.violations))
        .collect();
    report.add(2, bad.is_empty(), format!("{} runs audited at 1e-6, failures {bad:?}", runs.len()));

    // 3: lossless >= lossy >= none over the Fig 5 grid
    let f5 = &fig(5).table;
    let mut worst_gap = f64::INFINITY;
    for row in 0..f5.rows.len() / 3 {
        let v: Vec<f64> = (0..3).map(|i| f5.rows[3 * row + i][3].num().unwrap()).collect();
        worst_gap = worst_gap.min((v[0] - v[1]) / v[0]).min((v[1] - v[2]) / v[1]);
    }
    report.add(3, worst_gap >= -1e-6, format!("smallest relative gap between consecutive schemes {worst_gap:.3e}"));

    // 4: beamforming optimality
    let bf = oracles::beamforming_optimality(20, 1000, 11).unwrap();
    let grid = oracles::two_element_grid(3, 11).unwrap();
    report.add(4, bf.passed && grid.passed, format!("{}; {}", bf.detail, grid.detail));

    // 5: alignment equality
    let eq = oracles::alignment_equality(100, 12).unwrap();
    report.add(5, eq.passed, eq.detail);

    // 6: surrogate tightness and bounds on the default solution
    let mut tight = 0.0f64;
    let mut below = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (ch, plan, s) = (&sol.channels, &sol.plan, &sol.schedule);
    for k in 0..sc.ues() {
        for t in 0..s.slots() {
            let co = trajectory_coefficients(ch, plan, k, t);
            let (x0, y0) = path_powers(&sc, ch, k, t);
            if plan.beams[k][t].active_upload {
                let b = taylor_rate_bound(&sc, &co, x0, y0, s.b[k][t], s.power[k][t]).unwrap();
                let truth = uplink_bits(&sc, ch, &plan.receive(k, t), &plan.upload_phases(k, t), k, t, s.b[k][t], s.power[k][t]);
                tight = tight.max(rel(b.value, truth));
            }
            if plan.beams[k][t].active_wpt {
                let e = taylor_energy_bound(&sc, &co, x0, y0, s.a[k][t]).unwrap();
                let truth = harvested_energy(&sc, ch, &plan.transmit(k, t), &plan.wpt_phases(k, t), k, t, s.a[k][t]);
                tight = tight.max(rel(e.value, truth));
                for _ in 0..64 {
                    let x = x0 * rng.gen_range(0.2..5.0);
                    let y = y0 * rng.gen_range(0.2..5.0);
                    let exact = wpcs_core::link::aligned_energy(&sc, &co, x, y, s.a[k][t]);
                    if exact < e.eval(x, y) * (1.0 - 1e-12) {
                        below += 1;
                    }
                }
            }
        }
    }
    let audit: usize = sol.sca_logs.iter().flatten().map(|st| st.audit_violations).sum();
    report.add(
        6,
        tight <= 1e-9 && below == 0 && audit == 0,
        format!("worst gap at expansion point {tight:.3e}, energy bound breaches {below}, rate audit violations {audit}"),
    );

    // 7: resource solver against grid search
    let checks = oracles::resource_oracle().unwrap();
    report.add(
        7,
        checks.iter().all(|c| c.passed),
        checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; "),
    );

    // 8: efficiency curves and crossovers
    let setup = EfficiencySetup::table_one(&sc);
    let rows = efficiency_curves(&sc, &setup, &log_grid(DEFAULT_BRACKET.0, DEFAULT_BRACKET.1, 1000)).unwrap();
    let decreasing = rows.windows(2).all(|w| (1..4).all(|c| w[1][c] < w[0][c]));
    let changes = rows
        .windows(2)
        .filter(|w| (w[0][1] - w[0][2]).signum() != (w[1][1] - w[1][2]).signum())
        .count();
    let (p, pb) = crossovers(&sc, &setup, DEFAULT_BRACKET, 1e-12).unwrap();
    let residual = rel(eta_upload(&sc, p, setup.gain, setup.b).unwrap(), eta_lossless(&sc, p, setup.kappa).unwrap());
    report.add(
        8,
        decreasing && changes == 1 && residual < 1e-9 && pb < p,
        format!("strictly decreasing {decreasing}, sign changes {changes}, P* {p:.6e} W (residual {residual:.1e}), P̄* {pb:.6e} W"),
    );

    // 9: derivative against central differences
    let mut worst = 0.0f64;
    for &p in &log_grid(1e-4, 10.0, 50) {
        let h = 1e-6 * p;
        let fd = (eta_upload(&sc, p + h, setup.gain, setup.b).unwrap() - eta_upload(&sc, p - h, setup.gain, setup.b).unwrap())
            / (2.0 * h);
        worst = worst.max(rel(eta_upload_derivative(&sc, p, setup.gain, setup.b).unwrap(), fd));
    }
    report.add(9, worst <= 1e-6, format!("worst relative error {worst:.3e} over 50 powers in [1e-4, 10] W"));

    // 10: figure properties
    let mut fails = Vec::new();
    let f4 = &fig(4).table;
    for k in 1..=sc.ues() {
        let ue = k.to_string();
        let a: f64 = f4.values("a", &[("ue", &ue)]).iter().sum();
        let b: f64 = f4.values("b", &[("ue", &ue)]).iter().sum();
        if a < b {
            fails.push(format!("fig4 ue{k}: sum a {a:.3e} < sum b {b:.3e}"));
        }
    }
    let f7 = &fig(7).table;
    for scheme in ["lossless", "lossy"] {
        for ue in 1..=4 {
            let v = f7.values("share", &[("scheme", scheme), ("ue", &ue.to_string())]);
            if !v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)) {
                fails.push(format!("fig7 {scheme} ue{ue} share increases: {v:?}"));
            }
        }
    }
    let share = |s: &str, ue: usize| f7.values("share", &[("scheme", s), ("ue", &ue.to_string())]);
    for i in 0..share("lossless", 1).len() {
        for ue in 1..=4 {
            if share("lossless", ue)[i] < share("lossy", ue)[i] * (1.0 - 1e-6) {
                fails.push(format!("fig7 point {i} ue{ue}: lossless share below lossy"));
            }
        }
        for s in ["lossless", "lossy"] {
            let (u1, u2, u3, u4) = (share(s, 1)[i], share(s, 2)[i], share(s, 3)[i], share(s, 4)[i]);
            if rel(u1, u4) > 1e-3 || rel(u2, u3) > 1e-3 || u1.min(u4) < u2.max(u3) {
                fails.push(format!("fig7 {s} point {i}: shares {u1:.4e} {u2:.4e} {u3:.4e} {u4:.4e}"));
            }
        }
    }
    let f3 = &fig(3).table;
    for scheme in ["lossless", "lossy", "none"] {
        let x = f3.values("x", &[("weights", "equal"), ("scheme", scheme)]);
        let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
        let asym = x.iter().zip(x.iter().rev()).map(|(a, b)| (a + b).abs()).sum::<f64>() / x.len() as f64;
        if asym > 0.2 * span {
            fails.push(format!("fig3 {scheme}: mean |x(t)+x(T+1-t)| {asym:.3} > 20% of span {span:.3}"));
        }
    }
    for scheme in ["lossless", "lossy", "none"] {
        for n in ["16", "64"] {
            let v = f5.values("objective", &[("N", n), ("scheme", scheme)]);
            if !nondecreasing(&v, 1e-6) {
                fails.push(format!("fig5 N={n} {scheme} not nondecreasing in P_T: {v:?}"));
            }
        }
        let f6 = &fig(6).table;
        for m in ["4", "32"] {
            let v = f6.values("objective", &[("M", m), ("scheme", scheme)]);
            if !nondecreasing(&v, 1e-6) {
                fails.push(format!("fig6 M={m} {scheme} not nondecreasing in N: {v:?}"));
            }
        }
    }
    report.add(10, fails.is_empty(), format!("figures 3-7 property failures {fails:?}"));

    // 11: constraint feasibility of every final solution
    let worst = runs.iter().map(|r| r.violation.max(r.trajectory_violation)).fold(0.0, f64::max);
    report.add(11, worst <= 1e-6, format!("{} solutions, worst violation {worst:.3e}", runs.len()));

    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", report.lines.len());
}
