use wpcs_core::bcd::{optimize_schemes, optimize_with, BcdOptions};
use wpcs_core::link::Scheme;
use wpcs_core::trajectory::Trajectory;
use wpcs_core::Scenario;

/// Default geometry on a shorter flight.
fn short() -> Scenario {
    let mut sc = Scenario::table_one();
    sc.slots = 24;
    sc.start = [-5.0, 5.0, 8.0];
    sc.end = [5.0, 5.0, 8.0];
    sc
}

#[test]
fn same_seed_same_solution() {
    let sc = short();
    let a = optimize_with(&sc, Scheme::Lossy, &BcdOptions::default()).unwrap();
    let b = optimize_with(&sc, Scheme::Lossy, &BcdOptions::default()).unwrap();
    assert_eq!(a.assessment.objective.to_bits(), b.assessment.objective.to_bits());
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.schedule, b.schedule);
}

#[test]
fn solution_is_feasible_and_audited() {
    let sc = short();
    for scheme in Scheme::ALL {
        let sol = optimize_with(&sc, scheme, &BcdOptions::default()).unwrap();
        assert!(sol.assessment.worst() <= 1e-6, "{scheme:?}: {:?}", sol.assessment.worst());
        assert!(sol.trajectory.violation(&sc) <= 1e-9);
        assert!(sol.audit.passed(), "{}", sol.summary());
        assert!(sol.assessment.objective > 0.0);
    }
}

#[test]
fn sca_iterates_improve_and_slacks_close() {
    let sc = short();
    let sol = optimize_with(&sc, Scheme::Lossless, &BcdOptions::default()).unwrap();
    for log in &sol.sca_logs {
        let taken: Vec<f64> = log.iter().filter(|s| s.step > 0.0).map(|s| s.objective).collect();
        assert!(taken.windows(2).all(|w| w[1] >= w[0]), "{taken:?}");
    }
    // slack gap of the last subproblem solved in the final SCA run
    let last = sol.sca_logs.last().and_then(|l| l.last()).unwrap();
    assert!(last.slack_gap <= 1e-4, "slack gap {:.3e}", last.slack_gap);
}

#[test]
fn one_more_iteration_changes_little() {
    let sc = short();
    let sol = optimize_with(&sc, Scheme::Lossless, &BcdOptions::default()).unwrap();
    let mut once = sc.clone();
    once.max_bcd_iterations = 1;
    let opts = BcdOptions {
        warm_start: Some((sol.trajectory.clone(), sol.plan.clone())),
        ..BcdOptions::default()
    };
    let again = optimize_with(&once, Scheme::Lossless, &opts).unwrap();
    let change = (again.assessment.objective - sol.assessment.objective).abs() / sol.assessment.objective;
    assert!(change < sc.tol_bcd, "extra iteration moved the objective by {change:.3e}");
}

#[test]
fn schemes_are_ordered() {
    let sc = short();
    let sols = optimize_schemes(&sc, &BcdOptions::default()).unwrap();
    let v: Vec<f64> = sols.iter().map(|s| s.assessment.objective).collect();
    assert_eq!(sols.iter().map(|s| s.scheme).collect::<Vec<_>>(), Scheme::ALL.to_vec());
    assert!(v[0] >= v[1] * (1.0 - 1e-6) && v[1] >= v[2] * (1.0 - 1e-6), "{v:?}");
}

#[test]
fn fixed_trajectory_is_kept() {
    let mut sc = short();
    let hover = Trajectory::hover([0.0, 0.0, sc.altitude], sc.slots);
    sc.start = hover.points[0];
    sc.end = hover.points[0];
    let opts = BcdOptions {
        fixed_trajectory: Some(hover.clone()),
        ..BcdOptions::default()
    };
    let sol = optimize_with(&sc, Scheme::Lossless, &opts).unwrap();
    assert_eq!(sol.trajectory, hover);
    assert!(sol.sca_logs.is_empty());
    assert!(sol.audit.passed());
}
