//! UAV trajectory: the straight-line start, first-order bounds of rate and
//! energy in the distance slacks, the convex subproblem and the SCA loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beamforming::{alternating_beamforming, BeamformingPlan};
use crate::convex::{self, Affine, Expr, Program, Status};
use crate::error::{Error, Result};
use crate::geometry::{assemble_channels, ChannelState};
use crate::link::{
    aligned_energy, aligned_rate, assess, compressed_bits, compression_energy, path_powers, trajectory_coefficients,
    Assessment, LinkCoefficients, ResourceSchedule, Scheme,
};
use crate::scenario::{Position, Scenario};

const LN2: f64 = core::f64::consts::LN_2;

/// Relative violation tolerated when accepting an SCA step.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// One UAV position per slot at a fixed altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Position>,
}

impl Trajectory {
    pub fn hover(at: Position, slots: usize) -> Self {
        Trajectory {
            points: vec![at; slots],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Longest horizontal step between consecutive slots.
    pub fn longest_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .fold(0.0, f64::max)
    }

    /// Largest violation of the speed, endpoint and altitude constraints.
    pub fn violation(&self, sc: &Scenario) -> f64 {
        let mut v = (self.longest_step() - sc.max_step()).max(0.0);
        if let (Some(a), Some(b)) = (self.points.first(), self.points.last()) {
            for i in 0..3 {
                v = v.max((a[i] - sc.start[i]).abs()).max((b[i] - sc.end[i]).abs());
            }
        }
        for p in &self.points {
            v = v.max((p[2] - sc.altitude).abs());
        }
        v
    }

    /// Convex combination `self + step * (other - self)`.
    pub fn toward(&self, other: &Trajectory, step: f64) -> Trajectory {
        Trajectory {
            points: self
                .points
                .iter()
                .zip(&other.points)
                .map(|(a, b)| [a[0] + step * (b[0] - a[0]), a[1] + step * (b[1] - a[1]), a[2]])
                .collect(),
        }
    }
}

fn polyline(waypoints: &[Position], slots: usize) -> Trajectory {
    let legs: Vec<f64> = waypoints
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .collect();
    let total: f64 = legs.iter().sum();
    if slots == 1 {
        return Trajectory::hover(waypoints[0], 1);
    }
    let points = (0..slots)
        .map(|t| {
            if t + 1 == slots {
                return *waypoints.last().unwrap();
            }
            let mut s = total * t as f64 / (slots - 1) as f64;
            for (i, len) in legs.iter().enumerate() {
                if s <= *len || i + 1 == legs.len() {
                    let r = if *len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                    let (a, b) = (waypoints[i], waypoints[i + 1]);
                    return [a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1]), a[2]];
                }
                s -= len;
            }
            waypoints[0]
        })
        .collect();
    Trajectory { points }
}

/// Constant-speed flight from the start over the BS to the end, or the
/// direct line when the detour is too long.
pub fn initial_trajectory(sc: &Scenario) -> Result<Trajectory> {
    let z = sc.altitude;
    let start = [sc.start[0], sc.start[1], z];
    let end = [sc.end[0], sc.end[1], z];
    let over_bs = [sc.bs_position[0], sc.bs_position[1], z];
    let budget = sc.max_step() * (sc.slots.max(1) - 1) as f64 * (1.0 + 1e-12);
    let via = polyline(&[start, over_bs, end], sc.slots);
    let dist = |a: &Position, b: &Position| (b[0] - a[0]).hypot(b[1] - a[1]);
    if dist(&start, &over_bs) + dist(&over_bs, &end) <= budget {
        return Ok(via);
    }
    if dist(&start, &end) <= budget {
        return Ok(polyline(&[start, end], sc.slots));
    }
    Err(Error::InfeasibleScenario(format!(
        "endpoints are {:.3} m apart but at most {:.3} m can be flown",
        dist(&start, &end),
        budget
    )))
}

/// Expansion point of the distance slacks: `x[k][t]` for RIS-UE and
/// `y[t]` for BS-RIS path powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackState {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl SlackState {
    /// Tight slacks at the channel's positions.
    pub fn at(sc: &Scenario, ch: &ChannelState) -> Self {
        let mut x = vec![vec![0.0; ch.slots()]; ch.ues()];
        let mut y = vec![0.0; ch.slots()];
        for t in 0..ch.slots() {
            for k in 0..ch.ues() {
                let (xk, yt) = path_powers(sc, ch, k, t);
                x[k][t] = xk;
                y[t] = yt;
            }
        }
        SlackState { x, y }
    }
}

/// `value + dx (x - x0) + dy (y - y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBound {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl LinearBound {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.value + self.dx * (x - self.x0) + self.dy * (y - self.y0)
    }
}

/// Value and partial derivatives of `|D|^2 + 2|F| h0 / sqrt(xy) + |G|^2 h0^2 / (xy)`.
fn gain_expansion(direct: f64, cross: f64, reflected: f64, h0: f64, x: f64, y: f64) -> (f64, f64, f64) {
    let r = h0 / (x * y).sqrt();
    let value = direct + 2.0 * cross * r + reflected * r * r;
    let common = cross * r + reflected * r * r;
    (value, -common / x, -common / y)
}

fn check_point(x: f64, y: f64) -> Result<()> {
    if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::ExpansionPoint { x, y })
    }
}

/// First-order expansion of the aligned rate around `(x0, y0)`.
pub fn taylor_rate_bound(
    sc: &Scenario,
    co: &LinkCoefficients,
    x0: f64,
    y0: f64,
    b: f64,
    power: f64,
) -> Result<LinearBound> {
    check_point(x0, y0)?;
    let value = aligned_rate(sc, co, x0, y0, b, power);
    if b <= 0.0 || power <= 0.0 {
        return Ok(LinearBound {
            value,
            dx: 0.0,
            dy: 0.0,
            x0,
            y0,
        });
    }
    let (g, gx, gy) = gain_expansion(co.a.norm_sqr(), co.b.norm(), co.c.norm_sqr(), sc.reference_gain, x0, y0);
    let snr = power / sc.noise_power;
    let factor = sc.bandwidth * sc.slot_duration * b * snr / (LN2 * (1.0 + snr * g));
    Ok(LinearBound {
        value,
        dx: factor * gx,
        dy: factor * gy,
        x0,
        y0,
    })
}

/// First-order expansion of the aligned harvested energy around `(x0, y0)`.
pub fn taylor_energy_bound(sc: &Scenario, co: &LinkCoefficients, x0: f64, y0: f64, a: f64) -> Result<LinearBound> {
    check_point(x0, y0)?;
    let (_, gx, gy) = gain_expansion(co.d.norm_sqr(), co.f.norm(), co.g.norm_sqr(), sc.reference_gain, x0, y0);
    let factor = sc.harvest_efficiency * sc.slot_duration * a;
    Ok(LinearBound {
        value: aligned_energy(sc, co, x0, y0, a),
        dx: factor * gx,
        dy: factor * gy,
        x0,
        y0,
    })
}

/// Samples around the expansion point and counts where the aligned rate
/// falls below its bound.
pub fn audit_rate_bound(
    sc: &Scenario,
    co: &LinkCoefficients,
    bound: &LinearBound,
    b: f64,
    power: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut bad = 0;
    for _ in 0..samples {
        let x = bound.x0 * rng.gen_range(0.5..1.5);
        let y = bound.y0 * rng.gen_range(0.5..1.5);
        let r = aligned_rate(sc, co, x, y, b, power);
        if r < bound.eval(x, y) - 1e-12 * r.abs().max(1e-300) {
            bad += 1;
        }
    }
    bad
}

/// Spent joules and queued compressed bits of a fixed schedule.
fn per_slot_costs(sc: &Scenario, sched: &ResourceSchedule, scheme: Scheme, k: usize, t: usize) -> (f64, f64) {
    let f = if scheme == Scheme::None { 0.0 } else { sched.f[k][t] };
    let spend = compression_energy(sc, f) + sc.slot_duration * sched.b[k][t] * sched.power[k][t];
    let kappa = sc.kappa[k];
    (spend, kappa * compressed_bits(sc, f, kappa))
}

/// The trajectory subproblem and the data needed to read its solution.
#[derive(Debug, Clone)]
pub struct TrajectoryProgram {
    pub program: Program,
    ues: usize,
    slots: usize,
    altitude: f64,
    x_ref: Vec<Vec<f64>>,
    y_ref: Vec<f64>,
    objective_scale: f64,
    /// Constant part of the objective in bits (compression gains).
    objective_offset: f64,
    /// Slacks with a non-negligible objective weight; the others may sit
    /// anywhere above their bound.
    used_x: Vec<Vec<bool>>,
    used_y: Vec<bool>,
}

impl TrajectoryProgram {
    fn stride(&self) -> usize {
        3 + 3 * self.ues
    }

    fn qx(&self, t: usize) -> usize {
        t * self.stride()
    }

    fn qy(&self, t: usize) -> usize {
        t * self.stride() + 1
    }

    fn x(&self, k: usize, t: usize) -> usize {
        t * self.stride() + 2 + k
    }

    fn y(&self, t: usize) -> usize {
        t * self.stride() + 2 + self.ues
    }

    pub fn trajectory(&self, values: &[f64]) -> Trajectory {
        Trajectory {
            points: (0..self.slots)
                .map(|t| [values[self.qx(t)], values[self.qy(t)], self.altitude])
                .collect(),
        }
    }

    /// Slack values in physical units.
    pub fn slacks(&self, values: &[f64]) -> SlackState {
        SlackState {
            x: (0..self.ues)
                .map(|k| (0..self.slots).map(|t| values[self.x(k, t)] * self.x_ref[k][t]).collect())
                .collect(),
            y: (0..self.slots).map(|t| values[self.y(t)] * self.y_ref[t]).collect(),
        }
    }

    /// Lowers every slack onto its distance bound at the solved trajectory.
    /// The objective and the chains only gain from smaller slacks, so this
    /// removes the slack the barrier leaves on weakly weighted terms.
    pub fn tighten(&self, sc: &Scenario, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        let Ok(ch) = assemble_channels(sc, &self.trajectory(values)) else {
            return out;
        };
        let tight = SlackState::at(sc, &ch);
        for t in 0..self.slots {
            for k in 0..self.ues {
                let i = self.x(k, t);
                out[i] = out[i].min(tight.x[k][t] / self.x_ref[k][t]);
            }
            let i = self.y(t);
            out[i] = out[i].min(tight.y[t] / self.y_ref[t]);
        }
        out
    }

    /// Surrogate objective in weighted bits.
    pub fn surrogate(&self, values: &[f64]) -> f64 {
        self.program.objective_value(values) * self.objective_scale + self.objective_offset
    }
}

fn objective_gain(sc: &Scenario, sched: &ResourceSchedule, scheme: Scheme, k: usize, t: usize) -> f64 {
    let kappa = sc.kappa[k];
    let f = sched.f[k][t];
    let s = match scheme {
        Scheme::Lossless => compressed_bits(sc, f, kappa),
        Scheme::Lossy => crate::link::lossy_bits(sc, f, sc.kappa_lossy[k]),
        Scheme::None => 0.0,
    };
    (1.0 - kappa) * s
}

/// Assembles the convex trajectory subproblem at `current`, whose channels
/// and beams give the coefficients. Without `chains` the causality
/// constraints are left out.
pub fn build_p7(
    sc: &Scenario,
    ch: &ChannelState,
    plan: &BeamformingPlan,
    sched: &ResourceSchedule,
    scheme: Scheme,
    current: &Trajectory,
    chains: bool,
) -> Result<TrajectoryProgram> {
    let ues = ch.ues();
    let slots = ch.slots();
    let slack = SlackState::at(sc, ch);
    let mut rate = vec![vec![None; slots]; ues];
    let mut energy = vec![vec![None; slots]; ues];
    for k in 0..ues {
        for t in 0..slots {
            let co = trajectory_coefficients(ch, plan, k, t);
            let (x0, y0) = (slack.x[k][t], slack.y[t]);
            rate[k][t] = Some(taylor_rate_bound(sc, &co, x0, y0, sched.b[k][t], sched.power[k][t])?);
            energy[k][t] = Some(taylor_energy_bound(sc, &co, x0, y0, sched.a[k][t])?);
        }
    }
    let rate: Vec<Vec<LinearBound>> = rate.into_iter().map(|r| r.into_iter().flatten().collect()).collect();
    let energy: Vec<Vec<LinearBound>> = energy.into_iter().map(|r| r.into_iter().flatten().collect()).collect();

    let mut objective_scale = 0.0f64;
    for k in 0..ues {
        let total: f64 = rate[k].iter().map(|r| r.value).sum();
        objective_scale = objective_scale.max(sc.weights[k] * total);
    }
    if !(objective_scale > 0.0) {
        objective_scale = 1.0;
    }
    let mut objective_offset = 0.0;
    for k in 0..ues {
        for t in 0..slots {
            objective_offset += sc.weights[k] * objective_gain(sc, sched, scheme, k, t);
        }
    }

    let mut tp = TrajectoryProgram {
        program: Program::new(),
        ues,
        slots,
        altitude: sc.altitude,
        x_ref: slack.x.clone(),
        y_ref: slack.y.clone(),
        objective_scale,
        objective_offset,
        used_x: Vec::new(),
        used_y: Vec::new(),
    };
    // only the objective pushes slacks down to their bound
    let weight = |k: usize, t: usize, wrt_y: bool| {
        let r = &rate[k][t];
        sc.weights[k] * if wrt_y { r.dy * r.y0 } else { r.dx * r.x0 }
    };
    let mut top = 0.0f64;
    for k in 0..ues {
        for t in 0..slots {
            top = top.max(weight(k, t, false).abs()).max(weight(k, t, true).abs());
        }
    }
    let significant = |k: usize, t: usize, wrt_y: bool| weight(k, t, wrt_y).abs() > 1e-6 * top;
    tp.used_x = (0..ues)
        .map(|k| (0..slots).map(|t| significant(k, t, false)).collect())
        .collect();
    tp.used_y = (0..slots).map(|t| (0..ues).any(|k| significant(k, t, true))).collect();
    let mut start = Vec::new();
    let inf = f64::INFINITY;
    for t in 0..slots {
        let q = current.points[t];
        let pinned = t == 0 || t + 1 == slots;
        let p = &mut tp.program;
        if pinned {
            let end = if t == 0 { sc.start } else { sc.end };
            p.fixed(format!("qx[{t}]"), end[0]);
            p.fixed(format!("qy[{t}]"), end[1]);
            start.extend([end[0], end[1]]);
        } else {
            p.var(format!("qx[{t}]"), -inf, inf);
            p.var(format!("qy[{t}]"), -inf, inf);
            start.extend([q[0], q[1]]);
        }
        // slacks cannot exceed the path power at the farthest reachable point
        let reach = sc.max_step() * slots as f64;
        for k in 0..ues {
            let d = ch.slots[t].ris_ue[k].distance;
            p.var(format!("x[{k},{t}]"), 0.0, ((d + reach) / d).powf(sc.pathloss_ris_ue));
            start.push(1.0 + 1e-3);
        }
        let d = ch.slots[t].bs_ris_distance;
        p.var(format!("y[{t}]"), 0.0, ((d + reach) / d).powf(sc.pathloss_bs_ris));
        start.push(1.0 + 1e-3);
        for k in 0..2 * ues {
            let name = if k < ues { "e" } else { "r" };
            // pinned unless a causality chain uses it
            p.fixed(format!("{name}[{},{t}]", k % ues), 0.0);
            start.push(0.0);
        }
    }

    let mut objective = Expr::new();
    for k in 0..ues {
        let w = sc.weights[k] / objective_scale;
        for t in 0..slots {
            let r = &rate[k][t];
            objective = objective
                .term(tp.x(k, t), w * r.dx * r.x0)
                .term(tp.y(t), w * r.dy * r.y0)
                .plus(w * (r.value - r.dx * r.x0 - r.dy * r.y0));
        }
    }
    tp.program.maximize(objective);

    let bs = sc.bs_position;
    for t in 0..slots {
        let (qx, qy) = (tp.qx(t), tp.qy(t));
        let rows_to = |p: &Position| {
            vec![
                Affine::var(qx).plus(-p[0]),
                Affine::var(qy).plus(-p[1]),
                Affine::constant(sc.altitude - p[2]),
            ]
        };
        for k in 0..ues {
            let rows = rows_to(&sc.ue_positions[k]);
            let x = tp.x(k, t);
            let scale = 1.0 / tp.x_ref[k][t];
            tp.program
                .root_bound(format!("ris-ue[{k},{t}]"), x, rows, sc.pathloss_ris_ue, scale);
        }
        let rows = rows_to(&bs);
        let y = tp.y(t);
        let scale = 1.0 / tp.y_ref[t];
        tp.program.root_bound(format!("bs-ris[{t}]"), y, rows, sc.pathloss_bs_ris, scale);
        if t > 0 {
            let (px, py) = (tp.qx(t - 1), tp.qy(t - 1));
            tp.program.cone(
                format!("speed[{t}]"),
                vec![Affine::var(qx).term(px, -1.0), Affine::var(qy).term(py, -1.0)],
                Affine::constant(sc.max_step()),
            );
        }
    }

    if chains {
        for k in 0..ues {
            let costs: Vec<(f64, f64)> = (0..slots).map(|t| per_slot_costs(sc, sched, scheme, k, t)).collect();
            // energy: joules harvested against joules spent
            let spend: Vec<f64> = costs.iter().map(|c| c.0).collect();
            let gain: Vec<f64> = energy[k].iter().map(|e| e.value).collect();
            add_chain(&mut tp, k, &energy[k], &spend, &gain, true);
            let queued: Vec<f64> = costs.iter().map(|c| c.1).collect();
            let bits: Vec<f64> = rate[k].iter().map(|r| r.value).collect();
            add_chain(&mut tp, k, &rate[k], &queued, &bits, false);
        }
    }
    tp.program.start = Some(start);
    Ok(tp)
}

/// Adds `state[t] - state[t-1] - bound[t] + cost[t] <= 0` in units of the
/// UE's scale, loosened at the first slot by the deficit at the expansion
/// point.
fn add_chain(tp: &mut TrajectoryProgram, k: usize, bound: &[LinearBound], cost: &[f64], at_point: &[f64], energy: bool) {
    let total_cost: f64 = cost.iter().sum();
    let total_gain: f64 = at_point.iter().sum();
    let scale = total_cost.max(total_gain);
    if !(scale > 0.0) {
        return;
    }
    if total_cost == 0.0 {
        // nothing to pay for
        return;
    }
    let mut cum = 0.0;
    let mut deficit = 0.0f64;
    for (c, g) in cost.iter().zip(at_point) {
        cum += g - c;
        deficit = deficit.max(-cum);
    }
    let relax = deficit / scale + 1e-9;
    let stride = tp.stride();
    let ues = tp.ues;
    let state = |t: usize| t * stride + 3 + ues + if energy { k } else { ues + k };
    for t in 0..tp.slots {
        tp.program.upper[state(t)] = f64::INFINITY;
    }
    for t in 0..tp.slots {
        let b = &bound[t];
        let mut e = Expr::new()
            .term(state(t), 1.0)
            .term(tp.x(k, t), -b.dx * b.x0 / scale)
            .term(tp.y(t), -b.dy * b.y0 / scale)
            .plus((cost[t] - (b.value - b.dx * b.x0 - b.dy * b.y0)) / scale);
        if t > 0 {
            e = e.term(state(t - 1), -1.0);
        } else {
            e = e.plus(-relax);
        }
        let what = if energy { "energy" } else { "rate" };
        tp.program.constrain(format!("{what}[{k},{t}]"), e);
    }
}

/// One SCA iteration as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaStep {
    pub iteration: usize,
    /// Objective of the subproblem at its solution, in weighted bits.
    pub surrogate: f64,
    /// Objective after the step, evaluated through the link models.
    pub objective: f64,
    /// Largest relative gap between slacks and path powers at the candidate.
    pub slack_gap: f64,
    /// Fraction of the step towards the candidate that was taken (0 if none).
    pub step: f64,
    /// Sampled points where the rate fell below its bound.
    pub audit_violations: usize,
    pub status: Status,
}

/// A trajectory with its channels, realigned beams and assessment.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub trajectory: Trajectory,
    pub channels: ChannelState,
    pub plan: BeamformingPlan,
    pub assessment: Assessment,
}

/// Builds channels for `traj`, realigns the beams and evaluates.
pub fn evaluate(
    sc: &Scenario,
    traj: &Trajectory,
    sched: &ResourceSchedule,
    scheme: Scheme,
    warm: &BeamformingPlan,
) -> Result<Evaluated> {
    let channels = assemble_channels(sc, traj)?;
    let (plan, _) = alternating_beamforming(sc, &channels, sched, warm);
    let assessment = assess(sc, &channels, &plan, sched, scheme);
    Ok(Evaluated {
        trajectory: traj.clone(),
        channels,
        plan,
        assessment,
    })
}

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub best: Evaluated,
    pub log: Vec<ScaStep>,
}

fn acceptable(trial: &Assessment, current: &Assessment) -> bool {
    let tol = FEASIBILITY_TOL.max(current.worst());
    trial.worst() <= tol && trial.objective >= current.objective
}

/// Tries steps of 1, 1/2, ... towards `candidate`; returns the first that
/// keeps the point feasible without losing objective.
fn line_search(
    sc: &Scenario,
    sched: &ResourceSchedule,
    scheme: Scheme,
    current: &Evaluated,
    candidate: &Trajectory,
) -> Option<(f64, Evaluated)> {
    let mut step = 1.0;
    for _ in 0..=8 {
        let trial = current.trajectory.toward(candidate, step);
        if trial.violation(sc) <= 1e-9 * sc.max_step().max(1.0) {
            if let Ok(ev) = evaluate(sc, &trial, sched, scheme, &current.plan) {
                if acceptable(&ev.assessment, &current.assessment) {
                    return Some((step, ev));
                }
            }
        }
        step *= 0.5;
    }
    None
}

fn slack_gap(sc: &Scenario, tp: &TrajectoryProgram, values: &[f64]) -> f64 {
    let traj = tp.trajectory(values);
    let slack = tp.slacks(values);
    let Ok(ch) = assemble_channels(sc, &traj) else {
        return f64::INFINITY;
    };
    let tight = SlackState::at(sc, &ch);
    let mut gap = 0.0f64;
    for t in 0..tp.slots {
        for k in 0..tp.ues {
            if tp.used_x[k][t] {
                gap = gap.max((slack.x[k][t] - tight.x[k][t]).abs() / tight.x[k][t]);
            }
        }
        if tp.used_y[t] {
            gap = gap.max((slack.y[t] - tight.y[t]).abs() / tight.y[t]);
        }
    }
    gap
}

fn audit(sc: &Scenario, ev: &Evaluated, sched: &ResourceSchedule, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = SlackState::at(sc, &ev.channels);
    let mut bad = 0;
    for k in 0..ev.channels.ues() {
        for t in 0..ev.channels.slots() {
            let (b, p) = (sched.b[k][t], sched.power[k][t]);
            if b <= 0.0 || p <= 0.0 {
                continue;
            }
            let co = trajectory_coefficients(&ev.channels, &ev.plan, k, t);
            if let Ok(bound) = taylor_rate_bound(sc, &co, slack.x[k][t], slack.y[t], b, p) {
                bad += audit_rate_bound(sc, &co, &bound, b, p, 16, &mut rng);
            }
        }
    }
    bad
}

/// Successive convex approximation of the trajectory for a fixed schedule.
///
/// Each candidate is reached by a backtracking step that re-aligns the
/// beams and checks the true objective and constraints, so the returned
/// point is never worse than `start`.
pub fn sca_trajectory(
    sc: &Scenario,
    sched: &ResourceSchedule,
    scheme: Scheme,
    start: Evaluated,
    seed: u64,
) -> Result<ScaOutcome> {
    let mut current = start;
    let mut log = Vec::new();
    for iteration in 0..=sc.max_sca_iterations {
        let chains = iteration > 0;
        let tp = build_p7(
            sc,
            &current.channels,
            &current.plan,
            sched,
            scheme,
            &current.trajectory,
            chains,
        )?;
        let flat = tp.program.objective.affine.terms.iter().all(|(_, c)| *c == 0.0);
        if flat {
            break;
        }
        let sol = convex::solve(&tp.program, sc.tol_solver, 200)?;
        if sol.status == Status::Infeasible {
            if iteration == 1 {
                return Err(Error::InfeasibleScenario(String::from(
                    "trajectory subproblem infeasible at its expansion point",
                )));
            }
            break;
        }
        let tightened = tp.tighten(sc, &sol.values);
        let values = if convex::check_feasibility(&tp.program, &tightened, sc.tol_solver).is_empty()
            && tp.program.objective_value(&tightened) >= tp.program.objective_value(&sol.values)
        {
            tightened
        } else {
            sol.values.clone()
        };
        let candidate = tp.trajectory(&values);
        let before = current.assessment.objective;
        let found = line_search(sc, sched, scheme, &current, &candidate);
        let mut step = ScaStep {
            iteration,
            surrogate: tp.surrogate(&values),
            objective: before,
            slack_gap: slack_gap(sc, &tp, &values),
            step: 0.0,
            audit_violations: audit(sc, &current, sched, seed.wrapping_add(iteration as u64)),
            status: sol.status,
        };
        let Some((alpha, ev)) = found else {
            log.push(step);
            if chains {
                break;
            }
            continue;
        };
        step.step = alpha;
        step.objective = ev.assessment.objective;
        log.push(step);
        current = ev;
        let change = (current.assessment.objective - before).abs() / current.assessment.objective.abs().max(1e-300);
        if chains && change < sc.tol_sca {
            break;
        }
    }
    Ok(ScaOutcome { best: current, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::LinkCoefficients;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn coeffs(a: f64, b: f64, c: f64) -> LinkCoefficients {
        let z = |v: f64| Complex64::new(v, 0.0);
        LinkCoefficients {
            a: z(a),
            b: z(b),
            c: z(c),
            d: z(a * 4.0),
            f: z(b * 4.0),
            g: z(c * 4.0),
        }
    }

    #[test]
    fn straight_line_over_the_bs() {
        let sc = Scenario::table_one();
        let q = initial_trajectory(&sc).unwrap();
        assert_eq!(q.len(), sc.slots);
        assert_eq!(q.points[0], sc.start);
        assert_eq!(q.points[sc.slots - 1], sc.end);
        let closest = q
            .points
            .iter()
            .map(|p| p[0].hypot(p[1]))
            .fold(f64::INFINITY, f64::min);
        // 49 equal steps over 2*sqrt(200) m put a sample within half a step of the BS
        assert!(closest <= 0.5 * q.longest_step() + 1e-12, "{closest}");
        assert!(q.longest_step() <= sc.max_step() + 1e-12);
        assert!(q.violation(&sc) < 1e-12);
    }

    #[test]
    fn hover_when_endpoints_meet_over_bs() {
        let mut sc = Scenario::table_one();
        sc.start = [0.0, 0.0, 8.0];
        sc.end = [0.0, 0.0, 8.0];
        let q = initial_trajectory(&sc).unwrap();
        assert!(q.points.iter().all(|p| *p == [0.0, 0.0, 8.0]));
    }

    #[test]
    fn unreachable_endpoint_is_infeasible() {
        let mut sc = Scenario::table_one();
        sc.max_speed = 1.0;
        assert!(matches!(initial_trajectory(&sc), Err(Error::InfeasibleScenario(_))));
        sc.max_speed = 11.0;
        // detour of 28.3 m does not fit in 49 * 0.44 m but the 20 m line does
        let q = initial_trajectory(&sc).unwrap();
        assert!(q.points.iter().all(|p| (p[1] - 10.0).abs() < 1e-12));
    }

    #[test]
    fn bounds_are_tight_at_the_point() {
        let sc = Scenario::table_one();
        let co = coeffs(2e-4, 3e-5, 1.5e-2);
        let r = taylor_rate_bound(&sc, &co, 150.0, 80.0, 0.3, 0.02).unwrap();
        assert_relative_eq!(r.eval(150.0, 80.0), aligned_rate(&sc, &co, 150.0, 80.0, 0.3, 0.02), max_relative = 1e-12);
        let e = taylor_energy_bound(&sc, &co, 150.0, 80.0, 0.4).unwrap();
        assert_relative_eq!(e.eval(150.0, 80.0), aligned_energy(&sc, &co, 150.0, 80.0, 0.4), max_relative = 1e-12);
    }

    #[test]
    fn derivatives_match_differences() {
        let sc = Scenario::table_one();
        let co = coeffs(2e-4, 3e-4, 1.5e-1);
        let (x, y) = (120.0, 64.0);
        let r = taylor_rate_bound(&sc, &co, x, y, 0.3, 5.0).unwrap();
        let h = 1e-4;
        let fx = (aligned_rate(&sc, &co, x + h, y, 0.3, 5.0) - aligned_rate(&sc, &co, x - h, y, 0.3, 5.0)) / (2.0 * h);
        let fy = (aligned_rate(&sc, &co, x, y + h, 0.3, 5.0) - aligned_rate(&sc, &co, x, y - h, 0.3, 5.0)) / (2.0 * h);
        assert_relative_eq!(r.dx, fx, max_relative = 1e-6);
        assert_relative_eq!(r.dy, fy, max_relative = 1e-6);
        let e = taylor_energy_bound(&sc, &co, x, y, 0.5).unwrap();
        let gx = (aligned_energy(&sc, &co, x + h, y, 0.5) - aligned_energy(&sc, &co, x - h, y, 0.5)) / (2.0 * h);
        assert_relative_eq!(e.dx, gx, max_relative = 1e-6);
    }

    #[test]
    fn distance_free_coefficients_give_constants() {
        let sc = Scenario::table_one();
        let co = coeffs(2e-4, 0.0, 0.0);
        let r = taylor_rate_bound(&sc, &co, 100.0, 64.0, 0.5, 0.1).unwrap();
        assert_eq!((r.dx, r.dy), (0.0, 0.0));
        let e = taylor_energy_bound(&sc, &co, 100.0, 64.0, 1.0).unwrap();
        assert_eq!((e.dx, e.dy), (0.0, 0.0));
        assert_relative_eq!(
            e.value,
            sc.harvest_efficiency * sc.slot_duration * co.d.norm_sqr(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn nonpositive_expansion_point() {
        let sc = Scenario::table_one();
        let co = coeffs(1.0, 1.0, 1.0);
        assert!(matches!(
            taylor_rate_bound(&sc, &co, 0.0, 1.0, 0.5, 1.0),
            Err(Error::ExpansionPoint { .. })
        ));
        assert!(taylor_energy_bound(&sc, &co, 1.0, -2.0, 0.5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn energy_bound_is_global(
            x0 in 64.0f64..600.0, y0 in 64.0f64..600.0,
            x in 64.0f64..900.0, y in 64.0f64..900.0,
            a in 0.0f64..1.0, d in 0.0f64..1e-3, f in 0.0f64..1e-3, g in 0.0f64..1.0,
        ) {
            let sc = Scenario::table_one();
            let co = coeffs(d / 4.0, f / 4.0, g / 4.0);
            let e = taylor_energy_bound(&sc, &co, x0, y0, a).unwrap();
            let true_e = aligned_energy(&sc, &co, x, y, a);
            proptest::prop_assert!(true_e >= e.eval(x, y) - 1e-12 * true_e.abs());
        }
    }
}
