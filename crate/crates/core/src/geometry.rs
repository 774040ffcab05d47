//! Line-of-sight channel geometry for the BS, the UAV-mounted RIS and the UEs.
//!
//! Both arrays are half-wavelength ULAs, so every channel is a pathloss
//! amplitude times a steering vector and the BS-RIS channel is rank one.

use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scenario::{Position, Scenario};
use crate::trajectory::Trajectory;

/// Smallest distance accepted by the pathloss model.
pub const MIN_DISTANCE: f64 = 0.5;

const RADICAND_SLACK: f64 = 1e-12;

fn norm3(a: &Position, b: &Position) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn guarded(what: &'static str, distance: f64) -> Result<f64> {
    if distance < MIN_DISTANCE {
        Err(Error::DegenerateGeometry { what, distance })
    } else {
        Ok(distance)
    }
}

/// Distances for one UE and one UAV position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub bs_ue: f64,
    pub ris_ue: f64,
    pub bs_ris: f64,
}

pub fn distances(uav: &Position, sc: &Scenario, ue: usize) -> Result<Distances> {
    let q = &sc.ue_positions[ue];
    Ok(Distances {
        bs_ue: guarded("BS-UE", norm3(q, &sc.bs_position))?,
        ris_ue: guarded("RIS-UE", norm3(uav, q))?,
        bs_ris: guarded("BS-RIS", norm3(uav, &sc.bs_position))?,
    })
}

/// Sines of the four departure angles entering the steering vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSines {
    /// BS towards the UE.
    pub bs_ue: f64,
    /// RIS towards the UE.
    pub ris_ue: f64,
    /// BS towards the RIS.
    pub bs_ris: f64,
    /// RIS towards the BS.
    pub ris_bs: f64,
}

fn clamped_root(d: f64, height: f64) -> f64 {
    let r = d * d - height * height;
    if r < 0.0 && r > -RADICAND_SLACK * d * d.max(1.0) {
        0.0
    } else {
        r.max(0.0).sqrt()
    }
}

pub fn angle_sines(uav: &Position, sc: &Scenario, ue: usize) -> Result<AngleSines> {
    let d = distances(uav, sc, ue)?;
    let q = &sc.ue_positions[ue];
    let uav_over_ue = uav[2] - q[2];
    let uav_over_bs = uav[2] - sc.bs_height();
    Ok(AngleSines {
        bs_ue: (q[0] - sc.bs_position[0]) / d.bs_ue,
        ris_ue: clamped_root(d.ris_ue, uav_over_ue) / d.ris_ue,
        bs_ris: uav_over_bs / d.bs_ris,
        ris_bs: clamped_root(d.bs_ris, uav_over_bs) / d.bs_ris,
    })
}

/// Half-wavelength ULA steering vector, entry `l` is `exp(-j*pi*l*sin)`.
pub fn steering(sin_angle: f64, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|l| Complex64::from_polar(1.0, -core::f64::consts::PI * l as f64 * sin_angle))
        .collect()
}

/// `a^H b` for complex vectors.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Rank-one BS-RIS channel `gain * tx * rx^T` (M x N).
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub gain: f64,
    /// BS-side steering vector (length M).
    pub tx: Vec<Complex64>,
    /// RIS-side steering vector (length N).
    pub rx: Vec<Complex64>,
}

impl RankOne {
    /// `g_n^H v` where `g_n` is the n-th column.
    pub fn column_inner(&self, n: usize, v: &[Complex64]) -> Complex64 {
        self.rx[n].conj() * inner(&self.tx, v) * self.gain
    }

    pub fn entry(&self, m: usize, n: usize) -> Complex64 {
        self.tx[m] * self.rx[n] * self.gain
    }

    /// Dense row-major M x N copy.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        (0..self.tx.len())
            .map(|m| (0..self.rx.len()).map(|n| self.entry(m, n)).collect())
            .collect()
    }
}

/// Direct BS-UE link, fixed over time.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectLink {
    pub distance: f64,
    pub sin_angle: f64,
    /// Pathloss amplitude.
    pub gain: f64,
    /// Channel vector (length M).
    pub channel: Vec<Complex64>,
}

/// RIS-UE link in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RisLink {
    pub distance: f64,
    pub sin_angle: f64,
    pub gain: f64,
    /// Unit-modulus steering part (length N).
    pub steering: Vec<Complex64>,
}

impl RisLink {
    pub fn entry(&self, n: usize) -> Complex64 {
        self.steering[n] * self.gain
    }
}

/// Everything that depends on the UAV position in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotChannel {
    pub uav: Position,
    pub bs_ris_distance: f64,
    pub sin_bs_ris: f64,
    pub sin_ris_bs: f64,
    pub bs_ris: RankOne,
    /// One RIS-UE link per UE.
    pub ris_ue: Vec<RisLink>,
}

/// Channel triplets for every UE and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub direct: Vec<DirectLink>,
    pub slots: Vec<SlotChannel>,
}

impl ChannelState {
    pub fn ues(&self) -> usize {
        self.direct.len()
    }

    pub fn slots(&self) -> usize {
        self.slots.len()
    }

    /// Combined channel `h_k + G diag(e^{-j theta}) g_k` as a column vector,
    /// so that the received amplitude is `effective^H v`.
    pub fn effective(&self, ue: usize, slot: usize, phases: &[f64]) -> Vec<Complex64> {
        let s = &self.slots[slot];
        let link = &s.ris_ue[ue];
        let mut reflect = Complex64::new(0.0, 0.0);
        for (n, theta) in phases.iter().enumerate() {
            reflect += s.bs_ris.rx[n] * Complex64::from_polar(1.0, -theta) * link.entry(n);
        }
        reflect *= s.bs_ris.gain;
        self.direct[ue]
            .channel
            .iter()
            .zip(&s.bs_ris.tx)
            .map(|(h, a)| h + a * reflect)
            .collect()
    }

    /// `|(h^H + g^H Theta G^H) v|^2` for phases `theta`.
    pub fn gain(&self, ue: usize, slot: usize, phases: &[f64], v: &[Complex64]) -> f64 {
        inner(&self.effective(ue, slot, phases), v).norm_sqr()
    }
}

/// Builds the per-slot channels for a trajectory.
pub fn assemble_channels(sc: &Scenario, traj: &Trajectory) -> Result<ChannelState> {
    let m = sc.antennas;
    let h0 = sc.reference_gain;
    let first = traj.points.first().copied().unwrap_or(sc.start);
    let mut direct = Vec::with_capacity(sc.ues());
    for k in 0..sc.ues() {
        let d = distances(&first, sc, k)?;
        let s = angle_sines(&first, sc, k)?;
        let gain = (h0 / d.bs_ue.powf(sc.pathloss_bs_ue)).sqrt();
        let channel = steering(s.bs_ue, m).into_iter().map(|z| z * gain).collect();
        direct.push(DirectLink {
            distance: d.bs_ue,
            sin_angle: s.bs_ue,
            gain,
            channel,
        });
    }
    let mut slots = Vec::with_capacity(traj.points.len());
    for q in &traj.points {
        slots.push(slot_channel(sc, q)?);
    }
    Ok(ChannelState { direct, slots })
}

/// Channel quantities for a single UAV position.
pub fn slot_channel(sc: &Scenario, q: &Position) -> Result<SlotChannel> {
    let h0 = sc.reference_gain;
    let mut ris_ue = Vec::with_capacity(sc.ues());
    let mut bs_side = None;
    for k in 0..sc.ues() {
        let d = distances(q, sc, k)?;
        let s = angle_sines(q, sc, k)?;
        ris_ue.push(RisLink {
            distance: d.ris_ue,
            sin_angle: s.ris_ue,
            gain: (h0 / d.ris_ue.powf(sc.pathloss_ris_ue)).sqrt(),
            steering: steering(s.ris_ue, sc.ris_elements),
        });
        if bs_side.is_none() {
            bs_side = Some((d.bs_ris, s.bs_ris, s.ris_bs));
        }
    }
    let (d_br, sin_br, sin_rb) = match bs_side {
        Some(v) => v,
        None => {
            let d = guarded("BS-RIS", norm3(q, &sc.bs_position))?;
            let up = q[2] - sc.bs_height();
            (d, up / d, clamped_root(d, up) / d)
        }
    };
    Ok(SlotChannel {
        uav: *q,
        bs_ris_distance: d_br,
        sin_bs_ris: sin_br,
        sin_ris_bs: sin_rb,
        bs_ris: RankOne {
            gain: (h0 / d_br.powf(sc.pathloss_bs_ris)).sqrt(),
            tx: steering(sin_br, sc.antennas),
            rx: steering(sin_rb, sc.ris_elements),
        },
        ris_ue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn axis_aligned_distances() {
        let mut sc = Scenario::table_one();
        sc.ue_positions[0] = [10.0, 0.0, 0.0];
        let d = distances(&[0.0, 0.0, 8.0], &sc, 0).unwrap();
        assert_eq!(d.bs_ris, 8.0);
        assert_relative_eq!(d.ris_ue, 164f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(d.ris_ue, 12.806248474865697, max_relative = 1e-14);
        let d1 = distances(&[0.0, 0.0, 8.0], &Scenario::table_one(), 0).unwrap();
        assert_relative_eq!(d1.bs_ue, 200f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn vertical_geometry() {
        let sc = Scenario::table_one();
        let s = angle_sines(&[0.0, 0.0, 8.0], &sc, 0).unwrap();
        assert_eq!(s.bs_ris, 1.0);
        assert_eq!(s.ris_bs, 0.0);
        let above = [-10.0, 0.0, 8.0];
        assert_eq!(angle_sines(&above, &sc, 1).unwrap().ris_ue, 0.0);
    }

    #[test]
    fn three_four_five() {
        let sc = Scenario::table_one();
        let q = [6.0, 0.0, 8.0];
        let d = distances(&q, &sc, 0).unwrap();
        assert_relative_eq!(d.bs_ris, 10.0, max_relative = 1e-15);
        let s = angle_sines(&q, &sc, 0).unwrap();
        assert_relative_eq!(s.bs_ris, 0.8, max_relative = 1e-15);
        assert_relative_eq!(s.ris_bs, 0.6, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_distance_is_an_error() {
        let mut sc = Scenario::table_one();
        sc.ue_positions[0] = [0.0, 0.0, 7.8];
        let err = distances(&[0.0, 0.0, 8.0], &sc, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { what: "RIS-UE", .. }));
    }

    #[test]
    fn steering_anchors() {
        assert_eq!(steering(0.0, 4), vec![c(1.0, 0.0); 4]);
        let v = steering(0.5, 4);
        let want = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).norm() < 1e-15);
        }
        let e = steering(1.0, 2);
        assert!((e[1] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn channel_magnitudes() {
        let mut sc = Scenario::table_one();
        sc.ue_positions[0] = [1.0, 0.0, 0.0];
        let traj = Trajectory::hover([0.0, 0.0, 8.0], 2);
        let ch = assemble_channels(&sc, &traj).unwrap();
        for h in &ch.direct[0].channel {
            assert_relative_eq!(h.norm(), 1e-5f64.sqrt(), max_relative = 1e-12);
        }
        let mut sc2 = Scenario::table_one();
        sc2.ue_positions[0] = [6.0, 0.0, 0.0];
        let ch2 = assemble_channels(&sc2, &traj).unwrap();
        // d_R2U = 10 from (0,0,8) to (6,0,0)
        for n in 0..sc2.ris_elements {
            assert_relative_eq!(ch2.slots[0].ris_ue[0].entry(n).norm(), 3.1622776601683794e-4, max_relative = 1e-12);
        }
        let want = sc.antennas as f64 * sc.reference_gain / ch.direct[1].distance.powf(4.0);
        assert_relative_eq!(norm(&ch.direct[1].channel).powi(2), want, max_relative = 1e-12);
    }

    #[test]
    fn bs_ris_is_rank_one() {
        let sc = Scenario::table_one();
        let traj = Trajectory::hover([3.0, -2.0, 8.0], 1);
        let ch = assemble_channels(&sc, &traj).unwrap();
        let g = ch.slots[0].bs_ris.to_dense();
        // every 2x2 minor vanishes
        for m in 1..g.len() {
            for n in 1..g[0].len() {
                let minor = g[0][0] * g[m][n] - g[0][n] * g[m][0];
                assert!(minor.norm() < 1e-12 * g[0][0].norm_sqr(), "{minor}");
            }
        }
    }

    #[test]
    fn assembly_is_pure() {
        let sc = Scenario::table_one();
        let traj = Trajectory::hover([1.0, 2.0, 8.0], 3);
        assert_eq!(assemble_channels(&sc, &traj).unwrap(), assemble_channels(&sc, &traj).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn steering_energy(s in -1.0f64..1.0, len in 1usize..64) {
            let v = steering(s, len);
            proptest::prop_assert!((norm(&v).powi(2) - len as f64).abs() < 1e-9);
            for z in &v {
                proptest::prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn magnitude_decays_with_distance(x1 in 1.0f64..30.0, extra in 0.1f64..30.0) {
            let mut sc = Scenario::table_one();
            let traj = Trajectory::hover([0.0, 0.0, 8.0], 1);
            sc.ue_positions[0] = [x1, 0.0, 0.0];
            let near = assemble_channels(&sc, &traj).unwrap();
            sc.ue_positions[0] = [x1 + extra, 0.0, 0.0];
            let far = assemble_channels(&sc, &traj).unwrap();
            proptest::prop_assert!(far.direct[0].gain < near.direct[0].gain);
            proptest::prop_assert!(far.slots[0].ris_ue[0].gain < near.slots[0].ris_ue[0].gain);
        }
    }
}
