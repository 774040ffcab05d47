//! Scenario parameters and unit conversions.
//!
//! Every field is stored in SI units (W, J, s, Hz, m). Logarithmic inputs
//! (dBm, dB) are converted exactly once, when a scenario is built.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


use crate::error::{Error, Result};

/// A 3-D position in meters.
pub type Position = [f64; 3];

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a gain in dB to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn linear_to_db(gain: f64) -> f64 {
    10.0 * gain.log10()
}

/// Single source of configuration for a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// BS antenna count (M).
    pub antennas: usize,
    /// RIS element count (N).
    pub ris_elements: usize,
    /// Number of time slots (T).
    pub slots: usize,
    /// Slot length in seconds.
    pub slot_duration: f64,
    /// BS transmit budget in watts.
    pub bs_power: f64,
    /// Per-UE weights.
    pub weights: Vec<f64>,
    /// BS position; its z component is the BS height.
    pub bs_position: Position,
    /// UE positions; their z components are the UE heights.
    pub ue_positions: Vec<Position>,
    /// UAV start waypoint (x, y used, z equals `altitude`).
    pub start: Position,
    /// UAV final waypoint.
    pub end: Position,
    /// UAV altitude in meters.
    pub altitude: f64,
    /// Maximum UAV speed in m/s.
    pub max_speed: f64,
    /// Energy harvesting efficiency.
    pub harvest_efficiency: f64,
    /// Uplink bandwidth in Hz.
    pub bandwidth: f64,
    /// Noise variance at the BS in watts.
    pub noise_power: f64,
    /// Channel gain at 1 m (linear).
    pub reference_gain: f64,
    pub pathloss_bs_ris: f64,
    pub pathloss_bs_ue: f64,
    pub pathloss_ris_ue: f64,
    /// Fraction of each slot reserved for compression.
    pub compression_time: f64,
    /// CPU energy constant (joule per cycle³·s²).
    pub cpu_constant: f64,
    /// Compression method constant.
    pub compression_constant: f64,
    /// Lossless compression ratios per UE.
    pub kappa: Vec<f64>,
    /// Lossy compression ratios per UE.
    pub kappa_lossy: Vec<f64>,
    pub tol_bcd: f64,
    pub tol_sca: f64,
    pub tol_solver: f64,
    pub max_bcd_iterations: usize,
    pub max_sca_iterations: usize,
    pub max_ao_iterations: usize,
    /// Cycles per configured CPU-frequency unit.
    pub cycle_unit_scale: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::table_one()
    }
}

impl Scenario {
    /// The reference parameter set used throughout the experiments.
    pub fn table_one() -> Self {
        Scenario {
            antennas: 16,
            ris_elements: 16,
            slots: 50,
            slot_duration: 0.04,
            bs_power: dbm_to_watts(35.0),
            weights: vec![0.1, 0.1, 0.4, 0.4],
            bs_position: [0.0, 0.0, 0.0],
            ue_positions: vec![
                [-10.0, 10.0, 0.0],
                [-10.0, 0.0, 0.0],
                [10.0, 0.0, 0.0],
                [10.0, 10.0, 0.0],
            ],
            start: [-10.0, 10.0, 8.0],
            end: [10.0, 10.0, 8.0],
            altitude: 8.0,
            max_speed: 20.0,
            harvest_efficiency: 0.8,
            bandwidth: 40e6,
            noise_power: dbm_to_watts(-60.0),
            reference_gain: db_to_linear(-50.0),
            pathloss_bs_ris: 2.0,
            pathloss_bs_ue: 4.0,
            pathloss_ris_ue: 2.0,
            compression_time: 0.8,
            cpu_constant: 1e-7,
            compression_constant: 1.38,
            kappa: vec![0.5; 4],
            kappa_lossy: vec![0.5; 4],
            tol_bcd: 1e-3,
            tol_sca: 1e-3,
            tol_solver: 1e-6,
            max_bcd_iterations: 20,
            max_sca_iterations: 15,
            max_ao_iterations: 30,
            cycle_unit_scale: 1.0,
        }
    }

    /// Number of UEs (K).
    pub fn ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn bs_height(&self) -> f64 {
        self.bs_position[2]
    }

    /// Longest distance the UAV may cover in one slot.
    pub fn max_step(&self) -> f64 {
        self.max_speed * self.slot_duration
    }

    /// Returns a copy with every UE weight replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Self {
        let mut sc = self.clone();
        sc.weights = weights.to_vec();
        sc
    }

    /// Checks every invariant, naming the offending key on failure.
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &'static str, reason: alloc::string::String) -> Error {
            Error::InvalidScenario { key, reason }
        }
        let k = self.ues();
        if k == 0 {
            return Err(bad("K", "at least one UE is required".into()));
        }
        for (key, v) in [
            ("M", self.antennas),
            ("N", self.ris_elements),
            ("T", self.slots),
        ] {
            if v == 0 {
                return Err(bad(key, "must be at least 1".into()));
            }
        }
        for (key, v) in [
            ("delta_t", self.slot_duration),
            ("P_T", self.bs_power),
            ("B", self.bandwidth),
            ("sigma2_B", self.noise_power),
            ("V_max", self.max_speed),
            ("gamma_c", self.cpu_constant),
            ("epsilon", self.compression_constant),
            ("cycle_unit_scale", self.cycle_unit_scale),
            ("tol_bcd", self.tol_bcd),
            ("tol_sca", self.tol_sca),
            ("tol_solver", self.tol_solver),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(key, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.reference_gain.is_finite() && self.reference_gain >= 0.0) {
            return Err(bad("h0", format!("must be finite and >= 0, got {}", self.reference_gain)));
        }
        if !(self.harvest_efficiency > 0.0 && self.harvest_efficiency <= 1.0) {
            return Err(bad("eta_0", format!("must lie in (0, 1], got {}", self.harvest_efficiency)));
        }
        if !(self.compression_time > 0.0 && self.compression_time < 1.0) {
            return Err(bad("gamma", format!("must lie in (0, 1), got {}", self.compression_time)));
        }
        for (key, v) in [
            ("alpha_BR", self.pathloss_bs_ris),
            ("alpha_BU", self.pathloss_bs_ue),
            ("alpha_RU", self.pathloss_ris_ue),
        ] {
            if !(v.is_finite() && v >= 2.0) {
                return Err(bad(key, format!("pathloss exponent must be >= 2, got {v}")));
            }
        }
        for (key, len) in [
            ("lambda", self.weights.len()),
            ("kappa", self.kappa.len()),
            ("kappa_bar", self.kappa_lossy.len()),
        ] {
            if len != k {
                return Err(bad(key, format!("expected {k} entries, got {len}")));
            }
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(bad("lambda", "weights must be finite and >= 0".into()));
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(bad("lambda", "at least one weight must be positive".into()));
        }
        for (key, ratios) in [("kappa", &self.kappa), ("kappa_bar", &self.kappa_lossy)] {
            if ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                return Err(bad(key, "compression ratios must lie in (0, 1]".into()));
            }
        }
        let finite = |p: &Position| p.iter().all(|c| c.is_finite());
        if !finite(&self.bs_position) {
            return Err(bad("q_0", "position must be finite".into()));
        }
        if !self.ue_positions.iter().all(finite) {
            return Err(bad("q_k", "positions must be finite".into()));
        }
        if !(finite(&self.start) && finite(&self.end) && self.altitude.is_finite()) {
            return Err(bad("q_1", "UAV waypoints must be finite".into()));
        }
        if self.altitude <= self.bs_height() {
            return Err(bad("z", "UAV altitude must exceed the BS height".into()));
        }
        if self.ue_positions.iter().any(|p| self.altitude <= p[2]) {
            return Err(bad("z", "UAV altitude must exceed every UE height".into()));
        }
        if (self.start[2] - self.altitude).abs() > 1e-9 {
            return Err(bad("q_1", "start altitude must equal z".into()));
        }
        if (self.end[2] - self.altitude).abs() > 1e-9 {
            return Err(bad("q_T", "final altitude must equal z".into()));
        }
        if self.max_bcd_iterations == 0 || self.max_sca_iterations == 0 || self.max_ao_iterations == 0
        {
            return Err(bad("i_max", "iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_anchors() {
        assert_eq!(dbm_to_watts(30.0), 1.0);
        assert_relative_eq!(dbm_to_watts(35.0), 3.16227766016838, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(-60.0), 1e-9, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(40.0), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn db_anchors() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_relative_eq!(db_to_linear(-50.0), 1e-5, max_relative = 1e-12);
        assert_relative_eq!(db_to_linear(10.0), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn defaults_validate() {
        Scenario::table_one().validate().unwrap();
    }

    #[test]
    fn zero_ues_names_k() {
        let mut sc = Scenario::table_one();
        sc.ue_positions.clear();
        match sc.validate() {
            Err(Error::InvalidScenario { key, .. }) => assert_eq!(key, "K"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gamma_bounds() {
        let mut sc = Scenario::table_one();
        sc.compression_time = 1.0;
        assert!(matches!(
            sc.validate(),
            Err(Error::InvalidScenario { key: "gamma", .. })
        ));
    }

    #[test]
    fn all_zero_weights_rejected() {
        let sc = Scenario::table_one().with_weights(&[0.0; 4]);
        assert!(matches!(
            sc.validate(),
            Err(Error::InvalidScenario { key: "lambda", .. })
        ));
    }

    #[test]
    fn uav_must_fly_above_terminals() {
        let mut sc = Scenario::table_one();
        sc.ue_positions[2][2] = 9.0;
        assert!(matches!(sc.validate(), Err(Error::InvalidScenario { key: "z", .. })));
    }

    proptest::proptest! {
        #[test]
        fn db_round_trip(log_g in -12.0f64..3.0) {
            let g = 10f64.powf(log_g);
            let back = db_to_linear(linear_to_db(g));
            proptest::prop_assert!(((back - g) / g).abs() < 1e-12);
        }
    }
}
