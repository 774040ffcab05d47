//! Maximum-ratio BS beams, RIS phase alignment and the alternating loop
//! between them.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{inner, norm, ChannelState};
use crate::link::{rate_bits, ResourceSchedule, POWER_THRESHOLD};
use crate::scenario::Scenario;

/// Beams for one UE and slot.
///
/// `w`, `u` and the phases are always the latest candidates, also in
/// inactive slots; the accessors on [`BeamformingPlan`] apply the flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotBeams {
    pub w: Vec<Complex64>,
    pub u: Vec<Complex64>,
    pub theta: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub active_wpt: bool,
    pub active_upload: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingPlan {
    /// Indexed `[k][t]`.
    pub beams: Vec<Vec<SlotBeams>>,
}

impl BeamformingPlan {
    pub fn ues(&self) -> usize {
        self.beams.len()
    }

    pub fn slots(&self) -> usize {
        self.beams.first().map_or(0, Vec::len)
    }

    /// Applied transmit beam, zero when WPT is off.
    pub fn transmit(&self, k: usize, t: usize) -> Vec<Complex64> {
        let b = &self.beams[k][t];
        if b.active_wpt {
            b.w.clone()
        } else {
            vec![Complex64::new(0.0, 0.0); b.w.len()]
        }
    }

    /// Applied receive beam, zero when upload is off.
    pub fn receive(&self, k: usize, t: usize) -> Vec<Complex64> {
        let b = &self.beams[k][t];
        if b.active_upload {
            b.u.clone()
        } else {
            vec![Complex64::new(0.0, 0.0); b.u.len()]
        }
    }

    /// Applied WPT phases; identity in inactive slots.
    pub fn wpt_phases(&self, k: usize, t: usize) -> Vec<f64> {
        let b = &self.beams[k][t];
        if b.active_wpt {
            b.theta.clone()
        } else {
            vec![0.0; b.theta.len()]
        }
    }

    pub fn upload_phases(&self, k: usize, t: usize) -> Vec<f64> {
        let b = &self.beams[k][t];
        if b.active_upload {
            b.theta_bar.clone()
        } else {
            vec![0.0; b.theta_bar.len()]
        }
    }

    /// WPT gain of the candidate beams, whether or not the slot is active.
    pub fn candidate_wpt_gain(&self, ch: &ChannelState, k: usize, t: usize) -> f64 {
        let b = &self.beams[k][t];
        ch.gain(k, t, &b.theta, &b.w)
    }

    pub fn candidate_upload_gain(&self, ch: &ChannelState, k: usize, t: usize) -> f64 {
        let b = &self.beams[k][t];
        ch.gain(k, t, &b.theta_bar, &b.u)
    }

    /// Marks slots active according to a schedule.
    pub fn set_activity(&mut self, sched: &ResourceSchedule) {
        for (k, row) in self.beams.iter_mut().enumerate() {
            for (t, b) in row.iter_mut().enumerate() {
                b.active_wpt = sched.a[k][t] > 0.0;
                b.active_upload = sched.b[k][t] > POWER_THRESHOLD;
            }
        }
    }
}

fn wrap(phase: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let r = phase - two_pi * (phase / two_pi).round();
    if r <= -core::f64::consts::PI {
        r + two_pi
    } else {
        r
    }
}

fn random_unit(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..len)
        .map(|_| {
            let r: f64 = rng.gen_range(0.1..1.0);
            Complex64::from_polar(r, rng.gen_range(-core::f64::consts::PI..core::f64::consts::PI))
        })
        .collect();
    let n = norm(&v);
    v.into_iter().map(|z| z / n).collect()
}

/// Random beams with matching RIS phases, all slots active.
pub fn random_plan(sc: &Scenario, ch: &ChannelState, seed: u64) -> BeamformingPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = sc.bs_power.sqrt();
    let beams = (0..ch.ues())
        .map(|k| {
            (0..ch.slots())
                .map(|t| {
                    let w: Vec<Complex64> = random_unit(&mut rng, sc.antennas).into_iter().map(|z| z * amp).collect();
                    let u = random_unit(&mut rng, sc.antennas);
                    let theta = ris_phases_wpt(ch, &w, k, t, true);
                    let theta_bar = ris_phases_upload(ch, &u, k, t, true);
                    SlotBeams {
                        w,
                        u,
                        theta,
                        theta_bar,
                        active_wpt: true,
                        active_upload: true,
                    }
                })
                .collect()
        })
        .collect();
    BeamformingPlan { beams }
}

fn max_ratio(ch: &ChannelState, theta: &[f64], k: usize, t: usize, amp: f64) -> Result<Vec<Complex64>> {
    let e = ch.effective(k, t, theta);
    let n = norm(&e);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroChannel { ue: k, slot: t });
    }
    Ok(e.into_iter().map(|z| z * (amp / n)).collect())
}

/// Maximum-ratio transmission with `||w||^2 = P_T`, zero when inactive.
pub fn mrt_transmit(
    sc: &Scenario,
    ch: &ChannelState,
    theta: &[f64],
    k: usize,
    t: usize,
    active: bool,
) -> Result<Vec<Complex64>> {
    if !active {
        return Ok(vec![Complex64::new(0.0, 0.0); sc.antennas]);
    }
    max_ratio(ch, theta, k, t, sc.bs_power.sqrt())
}

/// Unit-norm maximum-ratio combining, zero when inactive.
pub fn mrc_receive(
    sc: &Scenario,
    ch: &ChannelState,
    theta_bar: &[f64],
    k: usize,
    t: usize,
    active: bool,
) -> Result<Vec<Complex64>> {
    if !active {
        return Ok(vec![Complex64::new(0.0, 0.0); sc.antennas]);
    }
    max_ratio(ch, theta_bar, k, t, 1.0)
}

fn align(ch: &ChannelState, v: &[Complex64], k: usize, t: usize) -> Vec<f64> {
    let s = &ch.slots[t];
    let direct = inner(&ch.direct[k].channel, v);
    let reference = if direct.norm() > 0.0 { direct.arg() } else { 0.0 };
    let common = reference - inner(&s.bs_ris.tx, v).arg();
    s.ris_ue[k]
        .steering
        .iter()
        .zip(&s.bs_ris.rx)
        .map(|(g, r)| wrap(common + g.arg() + r.arg()))
        .collect()
}

/// Phases aligning every reflected path with the direct one for beam `w`.
/// Inactive slots get the identity.
pub fn ris_phases_wpt(ch: &ChannelState, w: &[Complex64], k: usize, t: usize, active: bool) -> Vec<f64> {
    if !active {
        return vec![0.0; ch.slots[t].bs_ris.rx.len()];
    }
    align(ch, w, k, t)
}

pub fn ris_phases_upload(ch: &ChannelState, u: &[Complex64], k: usize, t: usize, active: bool) -> Vec<f64> {
    ris_phases_wpt(ch, u, k, t, active)
}

/// Outcome of the alternating loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AoReport {
    /// Sweeps needed to reach the fixed point.
    pub iterations: usize,
    pub converged: bool,
    /// Weighted uploaded bits of active slots after each sweep.
    pub objective: Vec<f64>,
    /// Largest relative drop of any per-slot gain between sweeps (0 if none).
    pub worst_gain_drop: f64,
}

fn weighted_bits(sc: &Scenario, ch: &ChannelState, plan: &BeamformingPlan, sched: &ResourceSchedule) -> f64 {
    let mut total = 0.0;
    for k in 0..ch.ues() {
        for t in 0..ch.slots() {
            if plan.beams[k][t].active_upload {
                let g = plan.candidate_upload_gain(ch, k, t);
                total += sc.weights[k] * rate_bits(sc, g, sched.b[k][t], sched.power[k][t]);
            }
        }
    }
    total
}

fn rel_change(old: f64, new: f64) -> f64 {
    let scale = old.abs().max(new.abs());
    if scale > 0.0 {
        (new - old) / scale
    } else {
        0.0
    }
}

/// Alternates maximum-ratio beams and phase alignment for every UE and
/// slot, starting from `init`.
pub fn alternating_beamforming(
    sc: &Scenario,
    ch: &ChannelState,
    sched: &ResourceSchedule,
    init: &BeamformingPlan,
) -> (BeamformingPlan, AoReport) {
    let mut plan = init.clone();
    plan.set_activity(sched);
    let gains = |plan: &BeamformingPlan| -> Vec<(f64, f64)> {
        let mut g = Vec::with_capacity(ch.ues() * ch.slots());
        for k in 0..ch.ues() {
            for t in 0..ch.slots() {
                g.push((plan.candidate_wpt_gain(ch, k, t), plan.candidate_upload_gain(ch, k, t)));
            }
        }
        g
    };
    let mut prev = gains(&plan);
    let mut report = AoReport {
        iterations: 0,
        converged: false,
        objective: Vec::new(),
        worst_gain_drop: 0.0,
    };
    for sweep in 1..=sc.max_ao_iterations.max(1) {
        for k in 0..ch.ues() {
            for t in 0..ch.slots() {
                let b = &mut plan.beams[k][t];
                if let Ok(w) = mrt_transmit(sc, ch, &b.theta, k, t, true) {
                    b.w = w;
                }
                b.theta = align(ch, &b.w, k, t);
                if let Ok(u) = mrc_receive(sc, ch, &b.theta_bar, k, t, true) {
                    b.u = u;
                }
                b.theta_bar = align(ch, &b.u, k, t);
            }
        }
        let now = gains(&plan);
        let mut change = 0.0f64;
        for ((pw, pu), (nw, nu)) in prev.iter().zip(&now) {
            for (o, n) in [(pw, nw), (pu, nu)] {
                let r = rel_change(*o, *n);
                change = change.max(r.abs());
                report.worst_gain_drop = report.worst_gain_drop.max(-r);
            }
        }
        report.objective.push(weighted_bits(sc, ch, &plan, sched));
        prev = now;
        if change < sc.tol_solver {
            report.iterations = (sweep - 1).max(1);
            report.converged = true;
            return (plan, report);
        }
        report.iterations = sweep;
    }
    (plan, report)
}
