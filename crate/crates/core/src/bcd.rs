//! Block coordinate descent over resources, beams and trajectory.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;


use crate::beamforming::{alternating_beamforming, random_plan, BeamformingPlan};
use crate::error::Result;
use crate::geometry::{assemble_channels, ChannelState};
use crate::link::{assess, Assessment, ResourceSchedule, Scheme};
use crate::resource::{build_resources, solve_resources};
use crate::scenario::Scenario;
use crate::trajectory::{initial_trajectory, sca_trajectory, Evaluated, ScaStep, Trajectory, FEASIBILITY_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOptions {
    /// Seed of the random initial beams.
    pub seed: u64,
    /// Keep this trajectory instead of optimizing it.
    pub fixed_trajectory: Option<Trajectory>,
    /// Start from this trajectory and these beams instead of the defaults.
    pub warm_start: Option<(Trajectory, BeamformingPlan)>,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            seed: 1,
            fixed_trajectory: None,
            warm_start: None,
        }
    }
}

/// True objective before and after each block of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub iteration: usize,
    pub start: f64,
    pub resources: f64,
    pub beamforming: f64,
    pub trajectory: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcdStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FullSolution {
    pub scheme: Scheme,
    pub schedule: ResourceSchedule,
    pub plan: BeamformingPlan,
    pub trajectory: Trajectory,
    pub channels: ChannelState,
    pub assessment: Assessment,
    /// True objective after every iteration.
    pub objective_history: Vec<f64>,
    pub stages: Vec<StageRecord>,
    pub status: BcdStatus,
    pub audit: AuditReport,
    pub ao_iterations: Vec<usize>,
    pub sca_logs: Vec<Vec<ScaStep>>,
}

impl FullSolution {
    pub fn iterations(&self) -> usize {
        self.stages.len()
    }

    /// Plain-text run summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scheme: {}", self.scheme.name());
        let _ = writeln!(s, "iteration,start,resources,beamforming,trajectory");
        for r in &self.stages {
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{:.9e},{:.9e}",
                r.iteration, r.start, r.resources, r.beamforming, r.trajectory
            );
        }
        let _ = writeln!(s, "objective: {:.9e}", self.assessment.objective);
        let _ = writeln!(s, "iterations: {}", self.iterations());
        let _ = writeln!(s, "status: {:?}", self.status);
        let _ = writeln!(
            s,
            "violations: energy {:.2e}, rate {:.2e}, time {:.2e}",
            self.assessment.energy_violation, self.assessment.rate_violation, self.assessment.time_violation
        );
        let _ = writeln!(s, "audit: {}", if self.audit.passed() { "pass" } else { "fail" });
        for v in &self.audit.violations {
            let _ = writeln!(s, "  iteration {} {}: drop {:.3e}", v.iteration, v.stage, v.drop);
        }
        s
    }
}

/// A stage where the objective fell.
#[derive(Debug, Clone, PartialEq)]
pub struct StageViolation {
    pub iteration: usize,
    pub stage: &'static str,
    /// Relative drop.
    pub drop: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<StageViolation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that no block lowered the objective by more than `tol` (relative).
pub fn monotonicity_audit(stages: &[StageRecord], tol: f64) -> AuditReport {
    let mut report = AuditReport::default();
    let mut prev_end: Option<f64> = None;
    for r in stages {
        let mut chain = Vec::with_capacity(4);
        if let Some(p) = prev_end {
            chain.push(("carry-over", p, r.start));
        }
        chain.push(("resources", r.start, r.resources));
        chain.push(("beamforming", r.resources, r.beamforming));
        chain.push(("trajectory", r.beamforming, r.trajectory));
        for (stage, before, after) in chain {
            let scale = before.abs().max(after.abs());
            let drop = if scale > 0.0 { (before - after) / scale } else { 0.0 };
            if drop > tol {
                report.violations.push(StageViolation {
                    iteration: r.iteration,
                    stage,
                    drop,
                });
            }
        }
        prev_end = Some(r.trajectory);
    }
    report
}

/// The weighted raw uploaded bits of a solution, through the link models.
pub fn objective(sol: &FullSolution, sc: &Scenario, scheme: Scheme) -> f64 {
    assess(sc, &sol.channels, &sol.plan, &sol.schedule, scheme).objective
}

pub fn optimize(sc: &Scenario, scheme: Scheme) -> Result<FullSolution> {
    optimize_with(sc, scheme, &BcdOptions::default())
}

fn better(new: &Assessment, old: &Assessment) -> bool {
    let tol = FEASIBILITY_TOL.max(old.worst());
    new.worst() <= tol && new.objective >= old.objective
}

pub fn optimize_with(sc: &Scenario, scheme: Scheme, opts: &BcdOptions) -> Result<FullSolution> {
    sc.validate()?;
    let warm = opts.warm_start.as_ref().filter(|(t, _)| opts.fixed_trajectory.as_ref().is_none_or(|f| f == t));
    let traj = match (&opts.fixed_trajectory, warm) {
        (Some(t), _) => t.clone(),
        (None, Some((t, _))) => t.clone(),
        (None, None) => initial_trajectory(sc)?,
    };
    let channels = assemble_channels(sc, &traj)?;
    let schedule = ResourceSchedule::zeros(sc.ues(), traj.len());
    let mut plan = match warm {
        Some((_, p)) => p.clone(),
        None => random_plan(sc, &channels, opts.seed),
    };
    plan.set_activity(&schedule);
    let assessment = assess(sc, &channels, &plan, &schedule, scheme);
    let mut cur = Evaluated {
        trajectory: traj,
        channels,
        plan,
        assessment,
    };
    let mut schedule = schedule;
    let mut history = Vec::new();
    let mut stages = Vec::new();
    let mut ao_iterations = Vec::new();
    let mut sca_logs = Vec::new();
    let mut status = BcdStatus::MaxIterations;

    for iteration in 1..=sc.max_bcd_iterations.max(1) {
        let start = cur.assessment.objective;

        let rp = build_resources(sc, &cur.channels, &cur.plan, scheme);
        let (sched, _) = solve_resources(&rp, sc)?;
        let mut plan = cur.plan.clone();
        plan.set_activity(&sched);
        let a = assess(sc, &cur.channels, &plan, &sched, scheme);
        if better(&a, &cur.assessment) || iteration == 1 && a.worst() <= FEASIBILITY_TOL {
            schedule = sched;
            cur.plan = plan;
            cur.assessment = a;
        }
        let resources = cur.assessment.objective;

        let (plan, report) = alternating_beamforming(sc, &cur.channels, &schedule, &cur.plan);
        ao_iterations.push(report.iterations);
        let a = assess(sc, &cur.channels, &plan, &schedule, scheme);
        if better(&a, &cur.assessment) {
            cur.plan = plan;
            cur.assessment = a;
        }
        let beamforming = cur.assessment.objective;

        if opts.fixed_trajectory.is_none() {
            let out = sca_trajectory(sc, &schedule, scheme, cur.clone(), opts.seed.wrapping_add(iteration as u64))?;
            sca_logs.push(out.log);
            cur = out.best;
        }
        let end = cur.assessment.objective;
        stages.push(StageRecord {
            iteration,
            start,
            resources,
            beamforming,
            trajectory: end,
        });
        let prev = history.last().copied().unwrap_or(0.0);
        history.push(end);
        let scale = end.abs().max(prev.abs());
        let change = if scale > 0.0 { (end - prev).abs() / scale } else { 0.0 };
        if change < sc.tol_bcd {
            status = BcdStatus::Converged;
            break;
        }
    }
    let audit = monotonicity_audit(&stages, sc.tol_bcd);
    Ok(FullSolution {
        scheme,
        schedule,
        plan: cur.plan,
        trajectory: cur.trajectory,
        channels: cur.channels,
        assessment: cur.assessment,
        objective_history: history,
        stages,
        status,
        audit,
        ao_iterations,
        sca_logs,
    })
}

/// Solves every scheme, in [`Scheme::ALL`] order.
///
/// A scheme that ends below a weaker one is re-run from the weaker one's
/// trajectory and beams. There its resource step alone already matches the
/// weaker objective when `kappa = kappa_bar`.
pub fn optimize_schemes(sc: &Scenario, opts: &BcdOptions) -> Result<Vec<FullSolution>> {
    let mut sols = Vec::with_capacity(3);
    for scheme in Scheme::ALL {
        sols.push(optimize_with(sc, scheme, opts)?);
    }
    for i in (0..sols.len() - 1).rev() {
        let best = (i + 1..sols.len())
            .max_by(|&a, &b| sols[a].assessment.objective.total_cmp(&sols[b].assessment.objective))
            .unwrap_or(i);
        if sols[best].assessment.objective > sols[i].assessment.objective {
            let mut o = opts.clone();
            o.warm_start = Some((sols[best].trajectory.clone(), sols[best].plan.clone()));
            let again = optimize_with(sc, sols[i].scheme, &o)?;
            if again.assessment.objective > sols[i].assessment.objective {
                sols[i] = again;
            }
        }
    }
    Ok(sols)
}

/// Relative change between the last two entries of a history.
pub fn last_change(history: &[f64]) -> f64 {
    match history {
        [.., a, b] => {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                (b - a).abs() / scale
            } else {
                0.0
            }
        }
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, v: [f64; 4]) -> StageRecord {
        StageRecord {
            iteration: i,
            start: v[0],
            resources: v[1],
            beamforming: v[2],
            trajectory: v[3],
        }
    }

    #[test]
    fn constant_and_increasing_histories_pass() {
        assert!(monotonicity_audit(&[rec(1, [1.0; 4]), rec(2, [1.0; 4])], 1e-3).passed());
        assert!(monotonicity_audit(&[rec(1, [0.0, 1.0, 2.0, 3.0]), rec(2, [3.0, 4.0, 5.0, 6.0])], 1e-3).passed());
    }

    #[test]
    fn dip_names_the_stage() {
        let r = monotonicity_audit(&[rec(1, [1.0, 2.0, 1.98, 2.5])], 1e-3);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].stage, "beamforming");
        assert!((r.violations[0].drop - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_gain_gives_zero_objective() {
        let mut sc = Scenario::table_one();
        sc.reference_gain = 0.0;
        sc.slots = 8;
        sc.start = [-1.0, 0.0, 8.0];
        sc.end = [1.0, 0.0, 8.0];
        let sol = optimize(&sc, Scheme::Lossless).unwrap();
        assert_eq!(sol.assessment.objective, 0.0);
        assert_eq!(sol.iterations(), 1);
        assert_eq!(objective(&sol, &sc, Scheme::Lossless), 0.0);
    }
}
