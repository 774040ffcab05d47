//! Scenario files: flat TOML, keys named after the model symbols.
//!
//! Every key is optional; missing keys keep the default value. Units are
//! converted here, once. See `docs/scenario.md` for the key list.

use std::path::Path;

use serde::Deserialize;
use wpcs_core::scenario::{db_to_linear, dbm_to_watts};
use wpcs_core::Scenario;

use crate::Error;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ScenarioFile {
    M: Option<usize>,
    N: Option<usize>,
    K: Option<usize>,
    T: Option<usize>,
    delta_t: Option<f64>,
    P_T_dBm: Option<f64>,
    lambda: Option<Vec<f64>>,
    q_0: Option<[f64; 3]>,
    q_k: Option<Vec<[f64; 3]>>,
    q_1: Option<[f64; 2]>,
    q_T: Option<[f64; 2]>,
    z: Option<f64>,
    V_max: Option<f64>,
    eta_0: Option<f64>,
    B_MHz: Option<f64>,
    sigma2_B_dBm: Option<f64>,
    h0_dB: Option<f64>,
    alpha_BR: Option<f64>,
    alpha_BU: Option<f64>,
    alpha_RU: Option<f64>,
    gamma: Option<f64>,
    gamma_c: Option<f64>,
    epsilon: Option<f64>,
    kappa: Option<Vec<f64>>,
    kappa_bar: Option<Vec<f64>>,
    tol_bcd: Option<f64>,
    tol_sca: Option<f64>,
    tol_solver: Option<f64>,
    i_max: Option<usize>,
    j_max: Option<usize>,
    ao_max: Option<usize>,
    cycle_unit_scale: Option<f64>,
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
    parse_scenario(&text)
}

/// Parses scenario text; an empty string gives the defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario, Error> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let sc = apply(file)?;
    sc.validate()?;
    Ok(sc)
}

fn apply(f: ScenarioFile) -> Result<Scenario, Error> {
    let mut sc = Scenario::table_one();
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    let seti = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    seti(&mut sc.antennas, f.M);
    seti(&mut sc.ris_elements, f.N);
    seti(&mut sc.slots, f.T);
    seti(&mut sc.max_bcd_iterations, f.i_max);
    seti(&mut sc.max_sca_iterations, f.j_max);
    seti(&mut sc.max_ao_iterations, f.ao_max);
    set(&mut sc.slot_duration, f.delta_t);
    set(&mut sc.max_speed, f.V_max);
    set(&mut sc.harvest_efficiency, f.eta_0);
    set(&mut sc.pathloss_bs_ris, f.alpha_BR);
    set(&mut sc.pathloss_bs_ue, f.alpha_BU);
    set(&mut sc.pathloss_ris_ue, f.alpha_RU);
    set(&mut sc.compression_time, f.gamma);
    set(&mut sc.cpu_constant, f.gamma_c);
    set(&mut sc.compression_constant, f.epsilon);
    set(&mut sc.tol_bcd, f.tol_bcd);
    set(&mut sc.tol_sca, f.tol_sca);
    set(&mut sc.tol_solver, f.tol_solver);
    set(&mut sc.cycle_unit_scale, f.cycle_unit_scale);
    if let Some(v) = f.P_T_dBm {
        sc.bs_power = dbm_to_watts(v);
    }
    if let Some(v) = f.B_MHz {
        sc.bandwidth = v * 1e6;
    }
    if let Some(v) = f.sigma2_B_dBm {
        sc.noise_power = dbm_to_watts(v);
    }
    if let Some(v) = f.h0_dB {
        sc.reference_gain = db_to_linear(v);
    }
    if let Some(q) = f.q_0 {
        sc.bs_position = q;
    }

    if let Some(q) = f.q_k {
        sc.ue_positions = q;
    }
    let k = match f.K {
        Some(0) => return Err(invalid("K", "at least one UE is required")),
        Some(k) if k != sc.ue_positions.len() => {
            return Err(invalid("K", &format!("K = {k} but q_k lists {} positions", sc.ue_positions.len())))
        }
        _ => sc.ue_positions.len(),
    };
    // per-UE defaults follow K when the UE set changes
    let resized = k != Scenario::table_one().ues();
    sc.weights = match f.lambda {
        Some(w) => w,
        None if resized => vec![1.0 / k as f64; k],
        None => sc.weights,
    };
    sc.kappa = f.kappa.unwrap_or_else(|| vec![sc.kappa[0]; k]);
    sc.kappa_lossy = f.kappa_bar.unwrap_or_else(|| vec![sc.kappa_lossy[0]; k]);

    if let Some(z) = f.z {
        sc.altitude = z;
    }
    let [sx, sy] = f.q_1.unwrap_or([sc.start[0], sc.start[1]]);
    let [ex, ey] = f.q_T.unwrap_or([sc.end[0], sc.end[1]]);
    sc.start = [sx, sy, sc.altitude];
    sc.end = [ex, ey, sc.altitude];
    Ok(sc)
}

fn invalid(key: &'static str, reason: &str) -> Error {
    Error::Core(wpcs_core::Error::InvalidScenario {
        key,
        reason: reason.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_table_one() {
        assert_eq!(parse_scenario("").unwrap(), Scenario::table_one());
    }

    #[test]
    fn transmit_power_override() {
        let sc = parse_scenario("P_T_dBm = 40").unwrap();
        // 10^((40 - 30) / 10)
        assert!((sc.bs_power - 10.0).abs() < 1e-12);
        let mut want = Scenario::table_one();
        want.bs_power = sc.bs_power;
        assert_eq!(sc, want);
    }

    #[test]
    fn zero_ues_names_k() {
        match parse_scenario("K = 0") {
            Err(Error::Core(wpcs_core::Error::InvalidScenario { key, .. })) => assert_eq!(key, "K"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_scenario("q_k = []\nlambda = []\nkappa = []\nkappa_bar = []") {
            Err(Error::Core(wpcs_core::Error::InvalidScenario { key, .. })) => assert_eq!(key, "K"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(parse_scenario("P_T = 3.0"), Err(Error::Parse(_))));
    }

    #[test]
    fn unit_conversions() {
        let sc = parse_scenario("B_MHz = 20\nsigma2_B_dBm = -70\nh0_dB = -40").unwrap();
        assert_eq!(sc.bandwidth, 20e6);
        assert!((sc.noise_power - 1e-10).abs() < 1e-24);
        assert!((sc.reference_gain - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn new_ue_set_gets_equal_weights() {
        let sc = parse_scenario("q_k = [[5.0, 5.0, 0.0], [-5.0, 5.0, 0.0]]").unwrap();
        assert_eq!(sc.weights, vec![0.5, 0.5]);
        assert_eq!(sc.kappa, vec![0.5, 0.5]);
    }

    #[test]
    fn altitude_moves_waypoints() {
        let sc = parse_scenario("z = 12\nq_1 = [0.0, 1.0]").unwrap();
        assert_eq!(sc.start, [0.0, 1.0, 12.0]);
        assert_eq!(sc.end, [10.0, 10.0, 12.0]);
    }
}
