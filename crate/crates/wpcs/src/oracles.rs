//! Brute-force checks of the closed forms and of the resource solver.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wpcs_core::beamforming::{mrc_receive, mrt_transmit, random_plan, ris_phases_wpt};
use wpcs_core::geometry::{assemble_channels, inner, norm, ChannelState};
use wpcs_core::link::{assess, compressed_bits, compression_energy, rate_bits, Scheme};
use wpcs_core::resource::{build_resources, solve_resources};
use wpcs_core::trajectory::Trajectory;
use wpcs_core::Scenario;

use crate::Error;

/// One oracle outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize, norm_sq: f64) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let n = norm(&v);
    v.into_iter().map(|z| z * (norm_sq.sqrt() / n)).collect()
}

fn random_phases(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
}

/// A one-UE, one-slot instance with random geometry and array sizes.
pub fn random_instance(rng: &mut ChaCha8Rng, max_m: usize, max_n: usize) -> (Scenario, ChannelState) {
    loop {
        let mut sc = Scenario::table_one();
        sc.antennas = rng.gen_range(1..=max_m);
        sc.ris_elements = rng.gen_range(1..=max_n);
        sc.ue_positions = vec![[rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), 0.0]];
        sc.weights = vec![1.0];
        sc.kappa = vec![0.5];
        sc.kappa_lossy = vec![0.5];
        sc.slots = 1;
        let q = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), sc.altitude];
        if let Ok(ch) = assemble_channels(&sc, &Trajectory::hover(q, 1)) {
            return (sc, ch);
        }
    }
}

/// MRT, MRC and aligned phases against random alternatives.
pub fn beamforming_optimality(instances: usize, alternatives: usize, seed: u64) -> Result<Check, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let (sc, ch) = random_instance(&mut rng, 8, 16);
        let theta = random_phases(&mut rng, sc.ris_elements);
        let mrt = ch.gain(0, 0, &theta, &mrt_transmit(&sc, &ch, &theta, 0, 0, true)?);
        let mrc = ch.gain(0, 0, &theta, &mrc_receive(&sc, &ch, &theta, 0, 0, true)?);
        let w = random_vector(&mut rng, sc.antennas, sc.bs_power);
        let aligned = ch.gain(0, 0, &ris_phases_wpt(&ch, &w, 0, 0, true), &w);
        for _ in 0..alternatives {
            let alt_w = random_vector(&mut rng, sc.antennas, sc.bs_power);
            let alt_u = random_vector(&mut rng, sc.antennas, 1.0);
            let alt_theta = random_phases(&mut rng, sc.ris_elements);
            for (best, alt) in [
                (mrt, ch.gain(0, 0, &theta, &alt_w)),
                (mrc, ch.gain(0, 0, &theta, &alt_u)),
                (aligned, ch.gain(0, 0, &alt_theta, &w)),
            ] {
                worst = worst.max((alt - best) / best);
            }
        }
    }
    Ok(Check {
        name: "closed-form beams beat random alternatives".into(),
        passed: worst <= 1e-9,
        detail: format!("{instances} instances x {alternatives} alternatives, worst relative excess {worst:.3e}"),
    })
}

/// Two-element surface: the aligned phases against a 721 x 721 grid.
pub fn two_element_grid(instances: usize, seed: u64) -> Result<Check, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 721;
    let delta = 2.0 * PI / (steps - 1) as f64;
    let mut over = f64::NEG_INFINITY;
    let mut short = f64::NEG_INFINITY;
    for _ in 0..instances {
        let (mut sc, _) = random_instance(&mut rng, 8, 1);
        sc.ris_elements = 2;
        let q = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), sc.altitude];
        let Ok(ch) = assemble_channels(&sc, &Trajectory::hover(q, 1)) else {
            continue;
        };
        let w = random_vector(&mut rng, sc.antennas, sc.bs_power);
        let opt = ch.gain(0, 0, &ris_phases_wpt(&ch, &w, 0, 0, true), &w);
        let mut best = 0.0f64;
        for i in 0..steps {
            for j in 0..steps {
                best = best.max(ch.gain(0, 0, &[i as f64 * delta, j as f64 * delta], &w));
            }
        }
        // every phase within delta/2 of the optimum keeps cos(delta/2) of each term
        let floor = opt * (delta / 2.0).cos().powi(2);
        over = over.max((best - opt) / opt);
        short = short.max((floor - best) / opt);
    }
    Ok(Check {
        name: "two-element phase grid".into(),
        passed: over <= 1e-9 && short <= 0.0,
        detail: format!("grid above closed form by {over:.3e}, below resolution floor by {short:.3e}"),
    })
}

/// With aligned phases the composite amplitude is the sum of path amplitudes.
pub fn alignment_equality(instances: usize, seed: u64) -> Result<Check, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (sc, ch) = random_instance(&mut rng, 8, 32);
        let w = random_vector(&mut rng, sc.antennas, sc.bs_power);
        let theta = ris_phases_wpt(&ch, &w, 0, 0, true);
        let lhs = inner(&ch.effective(0, 0, &theta), &w).norm();
        let s = &ch.slots[0];
        let mut rhs = inner(&ch.direct[0].channel, &w).norm();
        for n in 0..sc.ris_elements {
            rhs += s.ris_ue[0].entry(n).norm() * s.bs_ris.column_inner(n, &w).norm();
        }
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(Check {
        name: "aligned amplitude equals sum of path amplitudes".into(),
        passed: worst <= 1e-9,
        detail: format!("{instances} instances, worst relative gap {worst:.3e}"),
    })
}

/// Small single-UE instance for the resource oracle.
pub fn oracle_scenario(slots: usize) -> Scenario {
    let mut sc = Scenario::table_one();
    sc.ue_positions = vec![[-10.0, 0.0, 0.0]];
    sc.weights = vec![1.0];
    sc.kappa = vec![0.5];
    sc.kappa_lossy = vec![0.5];
    sc.slots = slots;
    sc
}

struct Slot {
    wpt: f64,
    upload: f64,
}

/// Objective of one candidate, or `None` if infeasible.
fn candidate(sc: &Scenario, slots: &[Slot], b: &[f64], f: &[f64], split: f64) -> Option<f64> {
    let kappa = sc.kappa[0];
    let dt = sc.slot_duration;
    let harvest: Vec<f64> = slots
        .iter()
        .zip(b)
        .map(|(s, b)| sc.harvest_efficiency * dt * s.wpt * (1.0 - b))
        .collect();
    let mut banked = 0.0;
    let mut queued = 0.0;
    let mut sent = 0.0;
    let mut total = 0.0;
    for t in 0..slots.len() {
        banked += harvest[t] - compression_energy(sc, f[t]);
        if banked < 0.0 {
            return None;
        }
        // the last slot spends what is left, earlier ones a share of it
        let share = if t + 1 == slots.len() { 1.0 } else { split };
        let energy = banked * share;
        banked -= energy;
        let r = if b[t] > 0.0 { rate_bits(sc, slots[t].upload, b[t], energy / (dt * b[t])) } else { 0.0 };
        let s = compressed_bits(sc, f[t], kappa);
        queued += kappa * s;
        sent += r;
        if queued > sent * (1.0 + 1e-12) {
            return None;
        }
        total += r + (1.0 - kappa) * s;
    }
    Some(sc.weights[0] * total)
}

/// Grid search with `points` values per variable, zoomed around the best
/// point `levels` times.
fn zoom_search(
    lo: &[f64],
    hi: &[f64],
    points: usize,
    levels: usize,
    eval: impl Fn(&[f64]) -> Option<f64>,
) -> f64 {
    let dims = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let (floor, ceil) = (lo.clone(), hi.clone());
    let mut best = f64::NEG_INFINITY;
    for _ in 0..levels {
        let mut best_x = None;
        let total = points.pow(dims as u32);
        let mut x = vec![0.0; dims];
        for idx in 0..total {
            let mut r = idx;
            for d in 0..dims {
                x[d] = lo[d] + (hi[d] - lo[d]) * (r % points) as f64 / (points - 1) as f64;
                r /= points;
            }
            if let Some(v) = eval(&x) {
                if v > best {
                    best = v;
                    best_x = Some(x.clone());
                }
            }
        }
        let Some(c) = best_x else { break };
        for d in 0..dims {
            let cell = 2.0 * (hi[d] - lo[d]) / (points - 1) as f64;
            lo[d] = (c[d] - cell).max(floor[d]);
            hi[d] = (c[d] + cell).min(ceil[d]);
        }
    }
    best
}

/// Barrier solution and grid optimum of the single-UE resource problem.
pub fn resource_grid(slots: usize) -> Result<(f64, f64), Error> {
    let sc = oracle_scenario(slots);
    let traj = Trajectory::hover([-5.0, 0.0, sc.altitude], slots);
    let ch = assemble_channels(&sc, &traj)?;
    let plan = random_plan(&sc, &ch, 7);
    let rp = build_resources(&sc, &ch, &plan, Scheme::Lossless);
    let (sched, _) = solve_resources(&rp, &sc)?;
    let mut applied = plan.clone();
    applied.set_activity(&sched);
    let solver = assess(&sc, &ch, &applied, &sched, Scheme::Lossless).objective;

    let info: Vec<Slot> = (0..slots)
        .map(|t| Slot {
            wpt: plan.candidate_wpt_gain(&ch, 0, t),
            upload: plan.candidate_upload_gain(&ch, 0, t),
        })
        .collect();
    let all_energy: f64 = info.iter().map(|s| sc.harvest_efficiency * sc.slot_duration * s.wpt).sum();
    let f_max = (all_energy / (sc.compression_time * sc.slot_duration * sc.cpu_constant)).cbrt() / sc.cycle_unit_scale;
    let b_max = 1.0 - sc.compression_time;
    // harvesting whatever time is not spent uploading is never worse
    let grid = match slots {
        1 => zoom_search(&[0.0, 0.0], &[b_max, f_max], 80, 10, |x| {
            candidate(&sc, &info, &x[..1], &x[1..], 1.0)
        }),
        2 => zoom_search(&[0.0, 0.0, 0.0, 0.0, 0.0], &[b_max, b_max, f_max, f_max, 1.0], 12, 30, |x| {
            candidate(&sc, &info, &x[..2], &x[2..4], x[4])
        }),
        _ => unimplemented!("grid oracle covers one or two slots"),
    };
    Ok((solver, grid))
}

pub fn resource_oracle() -> Result<Vec<Check>, Error> {
    let mut out = Vec::new();
    for slots in [1, 2] {
        let (solver, grid) = resource_grid(slots)?;
        let rel = (solver - grid).abs() / grid.abs().max(solver.abs());
        out.push(Check {
            name: format!("resource solver vs grid search, K=1 T={slots}"),
            passed: rel <= 1e-3,
            detail: format!("solver {solver:.9e}, grid {grid:.9e}, relative gap {rel:.3e}"),
        });
    }
    Ok(out)
}

/// Every oracle; `small` trims instance counts.
pub fn run_all(small: bool, seed: u64) -> Result<Vec<Check>, Error> {
    let (instances, alternatives, grids) = if small { (5, 200, 1) } else { (20, 1000, 3) };
    let mut out = vec![
        beamforming_optimality(instances, alternatives, seed)?,
        two_element_grid(grids, seed)?,
        alignment_equality(if small { 20 } else { 100 }, seed)?,
    ];
    out.extend(resource_oracle()?);
    Ok(out)
}
