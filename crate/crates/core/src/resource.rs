//! Resource subproblem: CPU frequency, upload power and time sharing for
//! fixed beams and trajectory.
//!
//! Every UE is solved in its own units. Energy is measured against the best
//! single-slot harvest `E_ref`, frequency and power are scaled so their
//! energy costs are `f^3` and `p`, and bits are measured against the best
//! single-slot rate `R_ref`. Causality is written with running-surplus state
//! variables so each constraint only touches two neighbouring slots.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


use crate::beamforming::BeamformingPlan;
use crate::convex::{self, Affine, Expr, Program, Solution, Status};
use crate::error::{Error, Result};
use crate::geometry::ChannelState;
use crate::link::{compression_denominator, ResourceSchedule, Scheme, POWER_THRESHOLD};
use crate::scenario::Scenario;

const LN2: f64 = core::f64::consts::LN_2;

/// Per-UE normalisation of the resource program.
#[derive(Debug, Clone, PartialEq)]
pub struct UeScale {
    /// Best single-slot harvest per unit WPT share, joules.
    pub energy: f64,
    /// Upload energy rate unit, watts.
    pub power: f64,
    /// CPU frequency unit, configured units.
    pub frequency: f64,
    /// Bits unit.
    pub bits: f64,
}

#[derive(Debug, Clone)]
pub struct ResourceProgram {
    pub program: Program,
    pub scheme: Scheme,
    pub scales: Vec<UeScale>,
    ues: usize,
    slots: usize,
    objective_scale: f64,
}

impl ResourceProgram {
    fn idx(&self, k: usize, t: usize, block: usize) -> usize {
        t * 6 * self.ues + block * self.ues + k
    }

    /// Objective in weighted bits for a solver point.
    pub fn objective(&self, values: &[f64]) -> f64 {
        self.program.objective_value(values) * self.objective_scale
    }

    /// Schedule in physical units; upload power is left at zero.
    pub fn decode(&self, values: &[f64]) -> ResourceSchedule {
        let mut s = ResourceSchedule::zeros(self.ues, self.slots);
        for k in 0..self.ues {
            let sc = &self.scales[k];
            for t in 0..self.slots {
                s.f[k][t] = values[self.idx(k, t, 0)].max(0.0) * sc.frequency;
                s.p[k][t] = values[self.idx(k, t, 1)].max(0.0) * sc.power;
                s.a[k][t] = values[self.idx(k, t, 2)].max(0.0);
                s.b[k][t] = values[self.idx(k, t, 3)].max(0.0);
            }
        }
        s
    }
}

/// Lossless-compression resource program.
pub fn build_p3(sc: &Scenario, ch: &ChannelState, plan: &BeamformingPlan) -> ResourceProgram {
    build_resources(sc, ch, plan, Scheme::Lossless)
}

/// Lossy-compression resource program.
pub fn build_lossy(sc: &Scenario, ch: &ChannelState, plan: &BeamformingPlan) -> ResourceProgram {
    build_resources(sc, ch, plan, Scheme::Lossy)
}

pub fn build_resources(sc: &Scenario, ch: &ChannelState, plan: &BeamformingPlan, scheme: Scheme) -> ResourceProgram {
    let ues = ch.ues();
    let slots = ch.slots();
    let delta = sc.slot_duration;
    let cpu = sc.compression_time * delta * sc.cpu_constant;
    let bits_per_slot = sc.bandwidth * delta;

    let mut harvest = vec![vec![0.0; slots]; ues];
    let mut snr = vec![vec![0.0; slots]; ues];
    let mut scales = Vec::with_capacity(ues);
    for k in 0..ues {
        for t in 0..slots {
            harvest[k][t] = sc.harvest_efficiency * delta * plan.candidate_wpt_gain(ch, k, t);
        }
        let energy = harvest[k].iter().copied().fold(0.0, f64::max);
        let power = energy / delta;
        for t in 0..slots {
            snr[k][t] = plan.candidate_upload_gain(ch, k, t) * power / sc.noise_power;
        }
        let best = snr[k].iter().copied().fold(0.0, f64::max);
        let bits = if best > 0.0 { bits_per_slot * best.ln_1p() / LN2 } else { 1.0 };
        scales.push(UeScale {
            energy,
            power,
            frequency: (energy / cpu).cbrt() / sc.cycle_unit_scale,
            bits,
        });
    }
    let objective_scale = (0..ues)
        .map(|k| sc.weights[k] * scales[k].bits)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    // compressed bits per unit of scaled frequency, in bits units
    let per_cycle = |k: usize, kappa: f64| -> f64 {
        if kappa >= 1.0 {
            return 0.0;
        }
        let den = compression_denominator(sc, kappa);
        let s: &UeScale = &scales[k];
        sc.compression_time * delta * s.frequency * sc.cycle_unit_scale / (den * s.bits)
    };
    // objective gain and queued bits per unit frequency
    let compression: Vec<(f64, f64)> = (0..ues)
        .map(|k| {
            let kappa = sc.kappa[k];
            let gain = match scheme {
                Scheme::Lossless => (1.0 - kappa) * per_cycle(k, kappa),
                Scheme::Lossy => (1.0 - kappa) * sc.kappa_lossy[k].sqrt() * per_cycle(k, sc.kappa_lossy[k]),
                Scheme::None => 0.0,
            };
            (gain, kappa * per_cycle(k, kappa))
        })
        .collect();

    let mut rp = ResourceProgram {
        program: Program::new(),
        scheme,
        scales,
        ues,
        slots,
        objective_scale,
    };
    let inf = f64::INFINITY;
    let upload_cap = (1.0 - sc.compression_time).max(0.0);
    let dead: Vec<bool> = rp.scales.iter().map(|s| !(s.energy > 0.0)).collect();
    let mute: Vec<bool> = (0..ues)
        .map(|k| dead[k] || upload_cap <= 0.0 || snr[k].iter().all(|c| !(*c > 0.0)))
        .collect();
    let mut start = Vec::with_capacity(6 * ues * slots);
    for t in 0..slots {
        for (block, name) in ["f", "p", "a", "b", "e", "r"].iter().enumerate() {
            for k in 0..ues {
                let label = format!("{name}[{k},{t}]");
                let pinned = match block {
                    0 => mute[k] || !(compression[k].0 > 0.0),
                    2 | 4 => dead[k],
                    _ => mute[k],
                };
                let (hi, x0) = match block {
                    0 | 1 => (inf, 1e-3),
                    2 => (1.0, 0.4 / ues as f64),
                    3 => (1.0, 0.4 * upload_cap.min(1.0) / ues as f64),
                    _ => (inf, 0.0),
                };
                if pinned {
                    rp.program.fixed(label, 0.0);
                    start.push(0.0);
                } else {
                    rp.program.var(label, 0.0, hi);
                    start.push(x0);
                }
            }
        }
    }

    let mut objective = Expr::new();
    for k in 0..ues {
        if dead[k] {
            continue;
        }
        let w = sc.weights[k] * rp.scales[k].bits / objective_scale;
        let (gain, queued) = compression[k];
        let rate_coef = bits_per_slot / rp.scales[k].bits;
        for t in 0..slots {
            let (f, p, a, b, e, r) = (
                rp.idx(k, t, 0),
                rp.idx(k, t, 1),
                rp.idx(k, t, 2),
                rp.idx(k, t, 3),
                rp.idx(k, t, 4),
                rp.idx(k, t, 5),
            );
            if !mute[k] {
                objective = objective.atom(convex::Atom::PerspectiveLog {
                    coef: w * rate_coef,
                    time: b,
                    amount: p,
                    gain: snr[k][t],
                });
            }
            if gain > 0.0 && !mute[k] {
                objective = objective.term(f, w * gain);
            }

            // energy: surplus[t] <= surplus[t-1] + harvest - f^3 - p
            let mut energy = Affine::var(e)
                .term(a, -harvest[k][t] / rp.scales[k].energy)
                .term(p, 1.0);
            if t > 0 {
                energy = energy.term(rp.idx(k, t - 1, 4), -1.0);
            }
            rp.program.cube_le(format!("energy[{k},{t}]"), f, 1.0, energy);

            if mute[k] {
                continue;
            }
            // rate: backlog allowance[t] <= allowance[t-1] + uploaded - compressed
            let mut rate = Affine::var(r).term(f, queued);
            if t > 0 {
                rate = rate.term(rp.idx(k, t - 1, 5), -1.0);
            }
            rp.program
                .perspective_ge(format!("rate[{k},{t}]"), b, p, rate_coef, snr[k][t], rate);
        }
    }
    rp.program.maximize(objective);

    for t in 0..slots {
        let mut both = Vec::with_capacity(2 * ues);
        let mut up = Vec::with_capacity(ues);
        for k in 0..ues {
            both.push((rp.idx(k, t, 2), 1.0));
            both.push((rp.idx(k, t, 3), 1.0));
            up.push((rp.idx(k, t, 3), 1.0));
        }
        rp.program.linear_le(format!("time[{t}]"), &both, 1.0);
        if upload_cap > 0.0 {
            rp.program.linear_le(format!("upload[{t}]"), &up, upload_cap);
        }
    }
    rp.program.start = Some(start);
    rp
}

/// Solves a resource program and returns the schedule with recovered powers.
pub fn solve_resources(rp: &ResourceProgram, sc: &Scenario) -> Result<(ResourceSchedule, Solution)> {
    let sol = convex::solve(&rp.program, sc.tol_solver, 300)?;
    if sol.status == Status::Infeasible {
        return Err(Error::InfeasibleScenario(format!(
            "resource program infeasible (residual {:.3e})",
            sol.residual
        )));
    }
    let sched = recover_power(&rp.decode(&sol.values), POWER_THRESHOLD);
    Ok((sched, sol))
}

/// Sets `P = p / b` where `b` exceeds `threshold` and zero elsewhere.
pub fn recover_power(sched: &ResourceSchedule, threshold: f64) -> ResourceSchedule {
    let mut s = sched.clone();
    for k in 0..s.ues() {
        for t in 0..s.slots() {
            let b = s.b[k][t];
            s.power[k][t] = if b > threshold { s.p[k][t] / b } else { 0.0 };
        }
    }
    s
}
