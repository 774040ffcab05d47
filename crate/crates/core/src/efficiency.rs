//! Energy efficiency of direct upload versus compression, and the power
//! at which they cross.
//!
//! The compression efficiencies take `P` as the compression power
//! `gamma_c f^3`, so all three curves share one power axis.

use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


use crate::error::{Error, Result};
use crate::link::compression_denominator;
use crate::scenario::Scenario;

const LN2: f64 = core::f64::consts::LN_2;

/// Search bracket used when none is given, in watts.
pub const DEFAULT_BRACKET: (f64, f64) = (1e-6, 1e3);

/// Bits per joule when uploading directly with power `p`.
pub fn eta_upload(sc: &Scenario, p: f64, gain: f64, b: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    let snr = gain * p / sc.noise_power;
    Ok(sc.bandwidth * sc.slot_duration * b * snr.ln_1p() / LN2 / p)
}

/// Derivative of [`eta_upload`] with respect to `p`.
pub fn eta_upload_derivative(sc: &Scenario, p: f64, gain: f64, b: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    let snr = gain * p / sc.noise_power;
    let num = snr - (1.0 + snr) * snr.ln_1p();
    Ok(sc.bandwidth * sc.slot_duration * b * num / (p * p * LN2 * (1.0 + snr)))
}

/// Raw bits saved per joule of lossless compression at power `p`.
pub fn eta_lossless(sc: &Scenario, p: f64, kappa: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    if kappa >= 1.0 {
        return Ok(0.0);
    }
    let den = compression_denominator(sc, kappa);
    if !(den > 0.0) {
        return Err(Error::SingularCompression(kappa));
    }
    Ok((1.0 - kappa) / (sc.cpu_constant.cbrt() * den * p.powf(2.0 / 3.0)))
}

pub fn eta_lossless_derivative(sc: &Scenario, p: f64, kappa: f64) -> Result<f64> {
    Ok(-2.0 / 3.0 * eta_lossless(sc, p, kappa)? / p)
}

/// Lossy counterpart of [`eta_lossless`].
pub fn eta_lossy(sc: &Scenario, p: f64, kappa_bar: f64) -> Result<f64> {
    Ok(kappa_bar.sqrt() * eta_lossless(sc, p, kappa_bar)?)
}

/// Bisection root of `eta_a - eta_b` on `bracket`, to relative width `tol`.
///
/// Works on a log scale since the curves span decades of power.
pub fn crossover_power<A, B>(eta_a: A, eta_b: B, bracket: (f64, f64), tol: f64) -> Result<f64>
where
    A: Fn(f64) -> Result<f64>,
    B: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    let bad = Error::Bracket { lo, hi };
    if !(lo > 0.0 && hi > lo) {
        return Err(bad);
    }
    let diff = |p: f64| -> Result<f64> { Ok(eta_a(p)? - eta_b(p)?) };
    let d_lo = diff(lo)?;
    let d_hi = diff(hi)?;
    if d_lo == 0.0 {
        return Ok(lo);
    }
    if d_hi == 0.0 {
        return Ok(hi);
    }
    if d_lo.signum() == d_hi.signum() {
        return Err(bad);
    }
    let lo_sign = d_lo.signum();
    while hi - lo > tol * lo {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let d = diff(mid)?;
        if d == 0.0 {
            return Ok(mid);
        }
        if d.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Parameters of one efficiency comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencySetup {
    pub gain: f64,
    pub b: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
}

impl EfficiencySetup {
    /// UE 1's direct channel power and a small upload share.
    pub fn table_one(sc: &Scenario) -> Self {
        let bs = sc.bs_position;
        let ue = sc.ue_positions[0];
        let d2: f64 = (0..3).map(|i| (ue[i] - bs[i]) * (ue[i] - bs[i])).sum();
        let gain = sc.antennas as f64 * sc.reference_gain / d2.sqrt().powf(sc.pathloss_bs_ue);
        EfficiencySetup {
            gain,
            b: 1e-3,
            kappa: sc.kappa[0],
            kappa_bar: sc.kappa_lossy[0],
        }
    }
}

/// `(P, eta_U, eta_C lossless, eta_C lossy)` at each power.
pub fn efficiency_curves(sc: &Scenario, setup: &EfficiencySetup, powers: &[f64]) -> Result<Vec<[f64; 4]>> {
    powers
        .iter()
        .map(|&p| {
            Ok([
                p,
                eta_upload(sc, p, setup.gain, setup.b)?,
                eta_lossless(sc, p, setup.kappa)?,
                eta_lossy(sc, p, setup.kappa_bar)?,
            ])
        })
        .collect()
}

/// `(P*, P̄*)`: where direct upload overtakes lossless and lossy compression.
pub fn crossovers(sc: &Scenario, setup: &EfficiencySetup, bracket: (f64, f64), tol: f64) -> Result<(f64, f64)> {
    let up = |p| eta_upload(sc, p, setup.gain, setup.b);
    let lossless = crossover_power(up, |p| eta_lossless(sc, p, setup.kappa), bracket, tol)?;
    let lossy = crossover_power(up, |p| eta_lossy(sc, p, setup.kappa_bar), bracket, tol)?;
    Ok((lossless, lossy))
}

/// `n` log-spaced powers on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn upload_trivia() {
        let sc = Scenario::table_one();
        assert_eq!(eta_upload(&sc, 0.3, 0.0, 0.2).unwrap(), 0.0);
        assert_eq!(eta_upload_derivative(&sc, 0.3, 0.0, 0.2).unwrap(), 0.0);
        let gain = 2e-9;
        let p = sc.noise_power / gain;
        let want = sc.bandwidth * sc.slot_duration * 0.2 / p;
        assert!(close(eta_upload(&sc, p, gain, 0.2).unwrap(), want, 1e-12));
        assert!(matches!(eta_upload(&sc, 0.0, gain, 0.2), Err(Error::NonPositivePower(_))));
        assert!(eta_lossless(&sc, -1.0, 0.5).is_err());
    }

    #[test]
    fn lossless_reference_values() {
        let sc = Scenario::table_one();
        assert!(close(eta_lossless(&sc, 0.1, 0.5).unwrap(), 42.28, 1e-3));
        assert!(close(eta_lossy(&sc, 0.1, 0.5).unwrap(), 29.90, 1e-3));
        assert_eq!(eta_lossless(&sc, 0.1, 1.0).unwrap(), 0.0);
        // (1 - kappa) / (e^{eps/kappa} - e^eps) tends to 1 / (eps e^eps), not 0
        let eps = sc.compression_constant;
        let limit = 1.0 / (sc.cpu_constant.cbrt() * eps * eps.exp() * 0.1f64.powf(2.0 / 3.0));
        assert!(close(eta_lossless(&sc, 0.1, 1.0 - 1e-6).unwrap(), limit, 1e-5));
        let mut half = sc.clone();
        half.cpu_constant /= 2.0;
        let ratio = eta_lossless(&half, 0.1, 0.5).unwrap() / eta_lossless(&sc, 0.1, 0.5).unwrap();
        assert!(close(ratio, 2f64.cbrt(), 1e-12));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sc = Scenario::table_one();
        // high-precision reference at a low-SNR point, where differencing loses digits
        let d = eta_upload_derivative(&sc, 1e-5, 4e-9, 1e-3).unwrap();
        assert!(close(d, -18465.511687881852, 1e-10));
        for &gain in &[1.6e-8, 4e-9, 1e-6] {
            for &p in &[1e-5, 1e-3, 0.1, 3.0] {
                if gain * p / sc.noise_power < 1e-2 {
                    continue;
                }
                let h = 1e-6 * p;
                let fd = (eta_upload(&sc, p + h, gain, 1e-3).unwrap() - eta_upload(&sc, p - h, gain, 1e-3).unwrap())
                    / (2.0 * h);
                let d = eta_upload_derivative(&sc, p, gain, 1e-3).unwrap();
                assert!(d < 0.0);
                assert!(close(d, fd, 1e-6), "gain {gain} p {p}: {d} vs {fd}");
                let fd = (eta_lossless(&sc, p + h, 0.5).unwrap() - eta_lossless(&sc, p - h, 0.5).unwrap()) / (2.0 * h);
                assert!(close(eta_lossless_derivative(&sc, p, 0.5).unwrap(), fd, 1e-6));
            }
        }
    }

    #[test]
    fn crossover_contract() {
        let sc = Scenario::table_one();
        let setup = EfficiencySetup::table_one(&sc);
        let (p, pb) = crossovers(&sc, &setup, DEFAULT_BRACKET, 1e-12).unwrap();
        assert!(pb < p);
        let up = eta_upload(&sc, p, setup.gain, setup.b).unwrap();
        let c = eta_lossless(&sc, p, setup.kappa).unwrap();
        assert!((up - c).abs() / up < 1e-9);
        for q in [p * 0.9, p * 0.5] {
            assert!(eta_lossless(&sc, q, setup.kappa).unwrap() > eta_upload(&sc, q, setup.gain, setup.b).unwrap());
        }
        for q in [p * 1.1, p * 2.0] {
            assert!(eta_lossless(&sc, q, setup.kappa).unwrap() <= eta_upload(&sc, q, setup.gain, setup.b).unwrap());
        }
        let coarse = crossovers(&sc, &setup, DEFAULT_BRACKET, 1e-6).unwrap().0;
        let fine = crossovers(&sc, &setup, DEFAULT_BRACKET, 1e-7).unwrap().0;
        assert!((coarse - fine).abs() < 1e-6 * coarse);
    }

    #[test]
    fn bracket_without_sign_change() {
        let sc = Scenario::table_one();
        let setup = EfficiencySetup::table_one(&sc);
        let r = crossovers(&sc, &setup, (1.0, 10.0), 1e-9);
        assert!(matches!(r, Err(Error::Bracket { .. })));
        let r = crossover_power(|p| Ok(p), |_| Ok(1.0), (2.0, 1.0), 1e-9);
        assert!(matches!(r, Err(Error::Bracket { .. })));
    }

    #[test]
    fn grid_spans_bracket() {
        let g = log_grid(1e-6, 1e3, 1000);
        assert_eq!(g.len(), 1000);
        assert!(close(g[0], 1e-6, 1e-12) && close(g[999], 1e3, 1e-12));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn curves_decrease(gain in 1e-10f64..1e-6, b in 1e-4f64..1.0, kappa in 0.05f64..0.95) {
                let sc = Scenario::table_one();
                let setup = EfficiencySetup { gain, b, kappa, kappa_bar: kappa };
                let rows = efficiency_curves(&sc, &setup, &log_grid(1e-6, 1e3, 200)).unwrap();
                for w in rows.windows(2) {
                    prop_assert!(w[1][1] < w[0][1]);
                    prop_assert!(w[1][2] < w[0][2]);
                    prop_assert!(w[1][3] < w[0][3]);
                }
                for r in &rows {
                    prop_assert!(eta_upload_derivative(&sc, r[0], gain, b).unwrap() < 0.0);
                    prop_assert!(close(r[3] / r[2], kappa.sqrt(), 1e-14));
                    prop_assert!(r[3] <= r[2]);
                }
            }

            #[test]
            fn one_crossing_in_bracket(gain in 1e-9f64..1e-7, b in 1e-4f64..1e-2, kappa in 0.3f64..0.8) {
                let sc = Scenario::table_one();
                let setup = EfficiencySetup { gain, b, kappa, kappa_bar: kappa };
                let rows = efficiency_curves(&sc, &setup, &log_grid(DEFAULT_BRACKET.0, DEFAULT_BRACKET.1, 1000)).unwrap();
                let (first, last) = (rows[0], rows[rows.len() - 1]);
                for col in [2, 3] {
                    // compression wins again at very large power, so the crossing may leave the bracket
                    prop_assume!((first[1] - first[col]).signum() != (last[1] - last[col]).signum());
                    let changes = rows.windows(2).filter(|w| (w[0][1] - w[0][col]).signum() != (w[1][1] - w[1][col]).signum()).count();
                    prop_assert_eq!(changes, 1);
                }
                let (p, pb) = crossovers(&sc, &setup, DEFAULT_BRACKET, 1e-12).unwrap();
                prop_assert!(pb < p);
            }
        }
    }
}
