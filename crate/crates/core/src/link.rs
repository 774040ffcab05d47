//! Harvested energy, uplink bits and the compression cost model.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;

use num_complex::Complex64;

use crate::beamforming::BeamformingPlan;
use crate::error::{Error, Result};
use crate::geometry::{inner, ChannelState};
use crate::scenario::Scenario;

const LN2: f64 = core::f64::consts::LN_2;

/// Upload powers are dropped where the time share is at or below this.
pub const POWER_THRESHOLD: f64 = 1e-9;

/// How sensing data is treated before upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Lossless,
    Lossy,
    /// Everything is uploaded raw.
    None,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Lossless, Scheme::Lossy, Scheme::None];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Lossless => "lossless",
            Scheme::Lossy => "lossy",
            Scheme::None => "none",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s {
            "lossless" => Ok(Scheme::Lossless),
            "lossy" => Ok(Scheme::Lossy),
            "none" => Ok(Scheme::None),
            other => Err(alloc::format!("unknown scheme `{other}`")),
        }
    }
}

/// Per-UE, per-slot resources, indexed `[k][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSchedule {
    /// CPU frequency in configured units.
    pub f: Vec<Vec<f64>>,
    /// Upload power in watts.
    pub power: Vec<Vec<f64>>,
    /// Upload energy rate `b * P` in watts.
    pub p: Vec<Vec<f64>>,
    /// WPT time share.
    pub a: Vec<Vec<f64>>,
    /// Upload time share.
    pub b: Vec<Vec<f64>>,
}

impl ResourceSchedule {
    pub fn zeros(ues: usize, slots: usize) -> Self {
        let z = vec![vec![0.0; slots]; ues];
        ResourceSchedule {
            f: z.clone(),
            power: z.clone(),
            p: z.clone(),
            a: z.clone(),
            b: z,
        }
    }

    pub fn ues(&self) -> usize {
        self.a.len()
    }

    pub fn slots(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }
}

/// Aligned-form coefficients of one UE and slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCoefficients {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
    pub f: Complex64,
    pub g: Complex64,
}

/// Joules harvested by UE `k` in slot `t` under beam `w` and phases `theta`.
pub fn harvested_energy(
    sc: &Scenario,
    ch: &ChannelState,
    w: &[Complex64],
    theta: &[f64],
    k: usize,
    t: usize,
    a: f64,
) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    sc.harvest_efficiency * sc.slot_duration * ch.gain(k, t, theta, w) * a
}

/// Bits for a given effective channel gain, time share and power.
pub fn rate_bits(sc: &Scenario, gain: f64, b: f64, power: f64) -> f64 {
    if b <= 0.0 || power <= 0.0 {
        return 0.0;
    }
    sc.bandwidth * sc.slot_duration * b * (gain * power / sc.noise_power).ln_1p() / LN2
}

/// Bits in perspective form, `b log2(1 + gain p / (b sigma^2))`, 0 at `b = 0`.
pub fn perspective_bits(sc: &Scenario, gain: f64, b: f64, p: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    rate_bits(sc, gain, b, p / b)
}

pub fn uplink_bits(
    sc: &Scenario,
    ch: &ChannelState,
    u: &[Complex64],
    theta_bar: &[f64],
    k: usize,
    t: usize,
    b: f64,
    power: f64,
) -> f64 {
    if b <= 0.0 || power <= 0.0 {
        return 0.0;
    }
    rate_bits(sc, ch.gain(k, t, theta_bar, u), b, power)
}

pub fn uplink_bits_perspective(
    sc: &Scenario,
    ch: &ChannelState,
    u: &[Complex64],
    theta_bar: &[f64],
    k: usize,
    t: usize,
    b: f64,
    p: f64,
) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    uplink_bits(sc, ch, u, theta_bar, k, t, b, p / b)
}

/// Joules spent compressing at frequency `f` for one slot.
pub fn compression_energy(sc: &Scenario, f: f64) -> f64 {
    let cycles = f * sc.cycle_unit_scale;
    sc.compression_time * sc.slot_duration * sc.cpu_constant * cycles * cycles * cycles
}

/// `e^{eps/kappa} - e^{eps}`, the cycles needed per compressed bit.
pub fn compression_denominator(sc: &Scenario, kappa: f64) -> f64 {
    let e = sc.compression_constant;
    (e / kappa).exp() - e.exp()
}

pub fn lossless_compressed_bits(sc: &Scenario, f: f64, kappa: f64) -> Result<f64> {
    let den = compression_denominator(sc, kappa);
    if !(den > 0.0) {
        return Err(Error::SingularCompression(kappa));
    }
    Ok(sc.compression_time * sc.slot_duration * f * sc.cycle_unit_scale / den)
}

pub fn lossy_effective_bits(sc: &Scenario, f_bar: f64, kappa_bar: f64) -> Result<f64> {
    Ok(kappa_bar.sqrt() * lossless_compressed_bits(sc, f_bar, kappa_bar)?)
}

/// Compressed bits with `kappa = 1` routed to 0 (nothing is compressed).
pub fn compressed_bits(sc: &Scenario, f: f64, kappa: f64) -> f64 {
    if kappa >= 1.0 || f == 0.0 {
        0.0
    } else {
        lossless_compressed_bits(sc, f, kappa).unwrap_or(0.0)
    }
}

/// Lossy counterpart of [`compressed_bits`].
pub fn lossy_bits(sc: &Scenario, f: f64, kappa_bar: f64) -> f64 {
    kappa_bar.sqrt() * compressed_bits(sc, f, kappa_bar)
}

/// Fraction of information lost by lossy compression.
pub fn info_loss(kappa_bar: f64) -> f64 {
    1.0 - kappa_bar.sqrt()
}

/// Raw sensing bits delivered when `r` bits are uploaded and `s` were compressed.
pub fn raw_uploaded_bits(r: f64, s: f64, kappa: f64) -> f64 {
    r + (1.0 - kappa) * s
}

/// `(d_R2U^alpha_RU, d_B2R^alpha_BR)` for UE `k` in slot `t`.
pub fn path_powers(sc: &Scenario, ch: &ChannelState, k: usize, t: usize) -> (f64, f64) {
    let s = &ch.slots[t];
    (
        s.ris_ue[k].distance.powf(sc.pathloss_ris_ue),
        s.bs_ris_distance.powf(sc.pathloss_bs_ris),
    )
}

fn reflect_inner(ch: &ChannelState, k: usize, t: usize, phases: &[f64], v: &[Complex64]) -> Complex64 {
    let s = &ch.slots[t];
    let steer = &s.ris_ue[k].steering;
    let mut acc = Complex64::new(0.0, 0.0);
    for (n, th) in phases.iter().enumerate() {
        acc += steer[n].conj() * Complex64::from_polar(1.0, *th) * s.bs_ris.rx[n].conj();
    }
    acc * inner(&s.bs_ris.tx, v)
}

/// Coefficients of the aligned rate and energy expressions.
pub fn trajectory_coefficients(ch: &ChannelState, plan: &BeamformingPlan, k: usize, t: usize) -> LinkCoefficients {
    let h = &ch.direct[k].channel;
    let u = plan.receive(k, t);
    let w = plan.transmit(k, t);
    let a = inner(h, &u);
    let c = reflect_inner(ch, k, t, &plan.upload_phases(k, t), &u);
    let d = inner(h, &w);
    let g = reflect_inner(ch, k, t, &plan.wpt_phases(k, t), &w);
    LinkCoefficients {
        a,
        b: a * c.conj(),
        c,
        d,
        f: d * g.conj(),
        g,
    }
}

/// Effective gain with phases aligned, as a function of the path powers.
pub fn aligned_gain(direct: f64, cross: f64, reflected: f64, h0: f64, x: f64, y: f64) -> f64 {
    let r = h0 / (x * y).sqrt();
    direct + 2.0 * cross * r + reflected * r * r
}

pub fn aligned_rate(sc: &Scenario, co: &LinkCoefficients, x: f64, y: f64, b: f64, power: f64) -> f64 {
    let g = aligned_gain(co.a.norm_sqr(), co.b.norm(), co.c.norm_sqr(), sc.reference_gain, x, y);
    rate_bits(sc, g, b, power)
}

pub fn aligned_energy(sc: &Scenario, co: &LinkCoefficients, x: f64, y: f64, a: f64) -> f64 {
    let g = aligned_gain(co.d.norm_sqr(), co.f.norm(), co.g.norm_sqr(), sc.reference_gain, x, y);
    sc.harvest_efficiency * sc.slot_duration * g * a
}

/// Full evaluation of a solution through the link models.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    /// Weighted raw uploaded bits.
    pub objective: f64,
    /// Uploaded bits `[k][t]`.
    pub rate: Vec<Vec<f64>>,
    /// Harvested joules `[k][t]`.
    pub harvest: Vec<Vec<f64>>,
    /// Compressed bits `[k][t]` (after the lossy factor for that scheme).
    pub compressed: Vec<Vec<f64>>,
    /// Worst prefix excess of spent over harvested energy, relative to the
    /// UE's energy scale (its totals or one slot of full-time harvesting,
    /// whichever is larger).
    pub energy_violation: f64,
    /// Worst prefix excess of compressed over uploaded bits, relative.
    pub rate_violation: f64,
    /// Worst violation of the time-sharing and sign constraints.
    pub time_violation: f64,
}

impl Assessment {
    pub fn worst(&self) -> f64 {
        self.energy_violation
            .max(self.rate_violation)
            .max(self.time_violation)
    }
}

fn prefix_violation(spend: &[f64], budget: &[f64], capacity: f64) -> f64 {
    let mut cs = 0.0;
    let mut cb = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (s, b) in spend.iter().zip(budget) {
        cs += s;
        cb += b;
        worst = worst.max(cs - cb);
    }
    let scale = cs.max(cb).max(capacity);
    if scale > 0.0 {
        (worst / scale).max(0.0)
    } else {
        0.0
    }
}

/// Evaluates objective and constraints of a schedule with the applied beams.
pub fn assess(
    sc: &Scenario,
    ch: &ChannelState,
    plan: &BeamformingPlan,
    sched: &ResourceSchedule,
    scheme: Scheme,
) -> Assessment {
    let ues = ch.ues();
    let slots = ch.slots();
    let mut rate = vec![vec![0.0; slots]; ues];
    let mut harvest = vec![vec![0.0; slots]; ues];
    let mut compressed = vec![vec![0.0; slots]; ues];
    let mut objective = 0.0;
    let mut energy_violation = 0.0f64;
    let mut rate_violation = 0.0f64;
    let mut time_violation = 0.0f64;
    for k in 0..ues {
        let kappa = sc.kappa[k];
        let mut spend = vec![0.0; slots];
        let mut queued = vec![0.0; slots];
        for t in 0..slots {
            let f = if scheme == Scheme::None { 0.0 } else { sched.f[k][t] };
            rate[k][t] = uplink_bits(
                sc,
                ch,
                &plan.receive(k, t),
                &plan.upload_phases(k, t),
                k,
                t,
                sched.b[k][t],
                sched.power[k][t],
            );
            harvest[k][t] = harvested_energy(
                sc,
                ch,
                &plan.transmit(k, t),
                &plan.wpt_phases(k, t),
                k,
                t,
                sched.a[k][t],
            );
            spend[t] = compression_energy(sc, f) + sc.slot_duration * sched.b[k][t] * sched.power[k][t];
            let s = compressed_bits(sc, f, kappa);
            queued[t] = kappa * s;
            let gain = match scheme {
                Scheme::Lossless => s,
                Scheme::Lossy => lossy_bits(sc, f, sc.kappa_lossy[k]),
                Scheme::None => 0.0,
            };
            compressed[k][t] = gain;
            objective += sc.weights[k] * raw_uploaded_bits(rate[k][t], gain, kappa);
            for v in [f, sched.power[k][t], sched.a[k][t], sched.b[k][t]] {
                time_violation = time_violation.max(-v);
            }
        }
        // one slot of full-time harvesting, and of uploading all of it
        let mut energy_cap = 0.0f64;
        let mut best_gain = 0.0f64;
        for t in 0..slots {
            energy_cap = energy_cap.max(plan.candidate_wpt_gain(ch, k, t));
            best_gain = best_gain.max(plan.candidate_upload_gain(ch, k, t));
        }
        energy_cap *= sc.harvest_efficiency * sc.slot_duration;
        let rate_cap = rate_bits(sc, best_gain, 1.0, energy_cap / sc.slot_duration);
        energy_violation = energy_violation.max(prefix_violation(&spend, &harvest[k], energy_cap));
        rate_violation = rate_violation.max(prefix_violation(&queued, &rate[k], rate_cap));
    }
    for t in 0..slots {
        let sa: f64 = (0..ues).map(|k| sched.a[k][t]).sum();
        let sb: f64 = (0..ues).map(|k| sched.b[k][t]).sum();
        time_violation = time_violation
            .max(sa + sb - 1.0)
            .max(sb - (1.0 - sc.compression_time));
    }
    Assessment {
        objective,
        rate,
        harvest,
        compressed,
        energy_violation,
        rate_violation,
        time_violation,
    }
}
