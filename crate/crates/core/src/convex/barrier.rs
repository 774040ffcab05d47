//! Log-barrier path following with a phase-I feasibility search.
//!
//! General constraints are relaxed by `1e-3 * tol` so programs whose
//! feasible set has an empty interior (for example `sum(b) <= 0`) still have
//! a barrier domain. Variable bounds stay strict. In phase I an extra scalar
//! `s` couples to every constraint, which turns the banded Hessian into an
//! arrow matrix; it is solved with one Schur complement.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


use super::band::{Band, Factor};
use super::{Constraint, ConvexError, Program, Solution, Status};

const FIXED: usize = usize::MAX;
const MU: f64 = 10.0;
const NEWTON_EPS: f64 = 1e-9;
const MAX_CENTERING: usize = 60;

struct Ctx<'a> {
    prog: &'a Program,
    free: Vec<usize>,
    map: Vec<usize>,
    bw: usize,
    relax: f64,
    /// Barrier parameter of the phase-II barrier.
    degree: f64,
    /// Phase-I anchor keeping variables with an open side from drifting off.
    anchor: Vec<(usize, f64, f64)>,
}

#[derive(Default)]
struct Scratch {
    grad: Vec<(usize, f64)>,
    hess: Vec<(usize, usize, f64)>,
    tmp: Vec<(usize, f64)>,
    rows: Vec<Vec<(usize, f64)>>,
}

struct System {
    grad: Vec<f64>,
    band: Band,
    col: Vec<f64>,
    ss: f64,
    grad_s: f64,
}

fn interior(lo: f64, hi: f64, hint: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let w = hi - lo;
            let h = if hint.is_finite() { hint } else { lo + 0.5 * w };
            h.max(lo + 1e-3 * w).min(hi - 1e-3 * w)
        }
        (true, false) => {
            let m = 1e-3 * lo.abs().max(1.0);
            if hint.is_finite() { hint.max(lo + m) } else { lo + 1.0 }
        }
        (false, true) => {
            let m = 1e-3 * hi.abs().max(1.0);
            if hint.is_finite() { hint.min(hi - m) } else { hi - 1.0 }
        }
        (false, false) => {
            if hint.is_finite() { hint } else { 0.0 }
        }
    }
}

/// Sorts by index and merges duplicates, dropping fixed variables.
fn compact(map: &[usize], raw: &[(usize, f64)], out: &mut Vec<(usize, f64)>) {
    out.clear();
    out.extend(raw.iter().filter(|(v, _)| map[*v] != FIXED).map(|(v, c)| (map[*v], *c)));
    out.sort_by_key(|e| e.0);
    let mut w = 0;
    for r in 0..out.len() {
        if w > 0 && out[w - 1].0 == out[r].0 {
            out[w - 1].1 += out[r].1;
        } else {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
}

impl System {
    fn add(&mut self, n: usize, i: usize, j: usize, v: f64) {
        if i == n && j == n {
            self.ss += v;
        } else if i == n {
            self.col[j] += v;
        } else if j == n {
            self.col[i] += v;
        } else {
            self.band.add(i, j, v);
        }
    }

    fn grad(&mut self, n: usize, i: usize, v: f64) {
        if i == n {
            self.grad_s += v;
        } else {
            self.grad[i] += v;
        }
    }

    /// Adds `w * v v^T` for a compacted sparse `v`.
    fn outer(&mut self, n: usize, v: &[(usize, f64)], w: f64) {
        for a in 0..v.len() {
            for b in 0..=a {
                self.add(n, v[a].0, v[b].0, w * v[a].1 * v[b].1);
            }
        }
    }
}

impl<'a> Ctx<'a> {
    fn new(prog: &'a Program, tol: f64) -> Self {
        let n = prog.len();
        let mut map = vec![FIXED; n];
        let mut free = Vec::new();
        for i in 0..n {
            if prog.lower[i] < prog.upper[i] {
                map[i] = free.len();
                free.push(i);
            }
        }
        let mut bw = 0;
        let mut vars = Vec::new();
        let mut span = |vars: &mut Vec<usize>| {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for v in vars.iter().map(|v| map[*v]).filter(|v| *v != FIXED) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo != usize::MAX {
                bw = bw.max(hi - lo);
            }
            vars.clear();
        };
        for a in &prog.objective.atoms {
            a.vars(&mut vars);
            span(&mut vars);
        }
        for c in &prog.constraints {
            c.vars(&mut vars);
            span(&mut vars);
        }
        let mut degree = 0.0;
        for &i in &free {
            degree += prog.lower[i].is_finite() as u8 as f64 + prog.upper[i].is_finite() as u8 as f64;
        }
        for c in &prog.constraints {
            degree += match c {
                Constraint::Convex { .. } => 1.0,
                Constraint::Cone { .. } => 2.0,
            };
        }
        Ctx {
            prog,
            free,
            map,
            bw,
            relax: 1e-3 * tol,
            degree,
            anchor: Vec::new(),
        }
    }

    fn n(&self) -> usize {
        self.free.len()
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, x: &[f64], s: Option<f64>, tau: f64) -> Option<f64> {
        let p = self.prog;
        let mut total = match s {
            Some(s) => {
                if s <= -1.0 {
                    return None;
                }
                tau * s - (s + 1.0).ln()
            }
            None => -tau * p.objective.eval(x),
        };
        if s.is_some() {
            for &(i, x0, rho) in &self.anchor {
                total += rho * (x[i] - x0) * (x[i] - x0);
            }
        }
        for &i in &self.free {
            if p.lower[i].is_finite() {
                let d = x[i] - p.lower[i];
                if d <= 0.0 {
                    return None;
                }
                total -= d.ln();
            }
            if p.upper[i].is_finite() {
                let d = p.upper[i] - x[i];
                if d <= 0.0 {
                    return None;
                }
                total -= d.ln();
            }
        }
        let shift = self.relax + s.unwrap_or(0.0);
        for c in &p.constraints {
            match c {
                Constraint::Convex { expr, .. } => {
                    let slack = shift - expr.eval(x);
                    if !(slack > 0.0) {
                        return None;
                    }
                    total -= slack.ln();
                }
                Constraint::Cone { rows, bound, .. } => {
                    let v = bound.eval(x) + shift;
                    let n2: f64 = rows.iter().map(|r| r.eval(x).powi(2)).sum();
                    let psi = v * v - n2;
                    if !(v > 0.0 && psi > 0.0) {
                        return None;
                    }
                    total -= psi.ln();
                }
            }
        }
        if total.is_finite() {
            Some(total)
        } else {
            None
        }
    }

    fn system(&self, x: &[f64], s: Option<f64>, tau: f64, sc: &mut Scratch) -> System {
        let p = self.prog;
        let n = self.n();
        let mut sys = System {
            grad: vec![0.0; n],
            band: Band::zeros(n, self.bw),
            col: vec![0.0; n],
            ss: 0.0,
            grad_s: 0.0,
        };
        match s {
            Some(s) => {
                sys.grad_s += tau - 1.0 / (s + 1.0);
                sys.ss += 1.0 / ((s + 1.0) * (s + 1.0));
                for &(i, x0, rho) in &self.anchor {
                    let k = self.map[i];
                    sys.grad[k] += 2.0 * rho * (x[i] - x0);
                    sys.band.add(k, k, 2.0 * rho);
                }
            }
            None => {
                sc.grad.clear();
                sc.hess.clear();
                p.objective.derivatives(x, &mut sc.grad, &mut sc.hess);
                compact(&self.map, &sc.grad, &mut sc.tmp);
                for &(i, g) in &sc.tmp {
                    sys.grad[i] -= tau * g;
                }
                for &(i, j, h) in &sc.hess {
                    if self.map[i] != FIXED && self.map[j] != FIXED {
                        sys.band.add(self.map[i], self.map[j], -tau * h);
                    }
                }
            }
        }
        for (k, &i) in self.free.iter().enumerate() {
            if p.lower[i].is_finite() {
                let d = x[i] - p.lower[i];
                sys.grad[k] -= 1.0 / d;
                sys.band.add(k, k, 1.0 / (d * d));
            }
            if p.upper[i].is_finite() {
                let d = p.upper[i] - x[i];
                sys.grad[k] += 1.0 / d;
                sys.band.add(k, k, 1.0 / (d * d));
            }
        }
        let phase1 = s.is_some();
        let shift = self.relax + s.unwrap_or(0.0);
        for c in &p.constraints {
            match c {
                Constraint::Convex { expr, .. } => {
                    let slack = shift - expr.eval(x);
                    sc.grad.clear();
                    sc.hess.clear();
                    expr.derivatives(x, &mut sc.grad, &mut sc.hess);
                    compact(&self.map, &sc.grad, &mut sc.tmp);
                    // gradient of the slack
                    sc.tmp.iter_mut().for_each(|e| e.1 = -e.1);
                    if phase1 {
                        sc.tmp.push((n, 1.0));
                    }
                    for &(i, g) in &sc.tmp {
                        sys.grad(n, i, -g / slack);
                    }
                    for &(i, j, h) in &sc.hess {
                        if self.map[i] != FIXED && self.map[j] != FIXED {
                            sys.band.add(self.map[i], self.map[j], h / slack);
                        }
                    }
                    let tmp = core::mem::take(&mut sc.tmp);
                    sys.outer(n, &tmp, 1.0 / (slack * slack));
                    sc.tmp = tmp;
                }
                Constraint::Cone { rows, bound, .. } => {
                    let v = bound.eval(x) + shift;
                    let vals: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
                    let psi = v * v - vals.iter().map(|r| r * r).sum::<f64>();
                    // gradient of v
                    let mut dv = Vec::new();
                    compact(&self.map, &bound.terms, &mut dv);
                    if phase1 {
                        dv.push((n, 1.0));
                    }
                    sc.rows.resize(rows.len(), Vec::new());
                    for (r, dr) in rows.iter().zip(sc.rows.iter_mut()) {
                        compact(&self.map, &r.terms, dr);
                    }
                    // gradient of psi
                    sc.grad.clear();
                    sc.grad.extend(dv.iter().map(|(i, g)| (*i, 2.0 * v * g)));
                    for (dr, rv) in sc.rows.iter().zip(&vals) {
                        sc.grad.extend(dr.iter().map(|(i, g)| (*i, -2.0 * rv * g)));
                    }
                    let mut dpsi = Vec::new();
                    merge(&sc.grad, &mut dpsi);
                    for &(i, g) in &dpsi {
                        sys.grad(n, i, -g / psi);
                    }
                    sys.outer(n, &dpsi, 1.0 / (psi * psi));
                    sys.outer(n, &dv, -2.0 / psi);
                    for dr in &sc.rows[..rows.len()] {
                        sys.outer(n, dr, 2.0 / psi);
                    }
                }
            }
        }
        sys
    }
}

/// Merges duplicates of already-compacted indices.
fn merge(raw: &[(usize, f64)], out: &mut Vec<(usize, f64)>) {
    out.clear();
    out.extend_from_slice(raw);
    out.sort_by_key(|e| e.0);
    let mut w = 0;
    for r in 0..out.len() {
        if w > 0 && out[w - 1].0 == out[r].0 {
            out[w - 1].1 += out[r].1;
        } else {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
}

/// Newton direction; the last entry is the phase-I scalar when present.
fn newton(sys: &System, phase1: bool) -> Option<(Vec<f64>, f64)> {
    let f = Factor::new(&sys.band)?;
    let zg = f.solve(&sys.grad);
    if !phase1 {
        return Some((zg.iter().map(|v| -v).collect(), 0.0));
    }
    let zc = f.solve(&sys.col);
    let mut d = sys.ss - dot(&sys.col, &zc);
    if !(d > 0.0) {
        d = 1e-12 * sys.ss.abs().max(1e-300);
    }
    let ds = (-sys.grad_s + dot(&sys.col, &zg)) / d;
    let dx = zg.iter().zip(&zc).map(|(g, c)| -g - c * ds).collect();
    Some((dx, ds))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Centering {
    Done,
    /// Phase I reached a strictly feasible point.
    Feasible,
    /// Line search failed; carries the Newton decrement at that point.
    Stalled(f64),
    Budget,
}

struct State {
    x: Vec<f64>,
    s: Option<f64>,
    steps: usize,
}

impl Ctx<'_> {
    fn center(&self, st: &mut State, tau: f64, cap: usize, sc: &mut Scratch) -> Centering {
        let phase1 = st.s.is_some();
        for _ in 0..MAX_CENTERING {
            if st.steps >= cap {
                return Centering::Budget;
            }
            let sys = self.system(&st.x, st.s, tau, sc);
            let Some((dx, ds)) = newton(&sys, phase1) else {
                return Centering::Stalled(f64::INFINITY);
            };
            st.steps += 1;
            let slope = dot(&sys.grad, &dx) + sys.grad_s * ds;
            let lambda2 = -slope;
            if !(lambda2 > 0.0) || lambda2 / 2.0 <= NEWTON_EPS {
                return Centering::Done;
            }
            let Some(f0) = self.value(&st.x, st.s, tau) else {
                return Centering::Stalled(lambda2);
            };
            let mut alpha = 1.0;
            let mut trial = st.x.clone();
            let mut accepted = false;
            for _ in 0..100 {
                for (k, &i) in self.free.iter().enumerate() {
                    trial[i] = st.x[i] + alpha * dx[k];
                }
                let ts = st.s.map(|s| s + alpha * ds);
                if let Some(ft) = self.value(&trial, ts, tau) {
                    if lambda2 < 0.1 || ft <= f0 + 0.01 * alpha * slope {
                        st.x.copy_from_slice(&trial);
                        st.s = ts;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Centering::Stalled(lambda2);
            }
            if phase1 && st.s.is_some_and(|s| s < 0.0) {
                return Centering::Feasible;
            }
        }
        Centering::Done
    }
}

fn finish(prog: &Program, st: State, status: Status, gap: f64) -> Solution {
    let residual = prog
        .residuals(&st.x)
        .iter()
        .fold(0.0f64, |m, (_, r)| if r.is_nan() { f64::INFINITY } else { m.max(*r) });
    Solution {
        objective: prog.objective_value(&st.x),
        values: st.x,
        status,
        residual,
        gap,
        newton_steps: st.steps,
    }
}

/// Maximizes `prog` to relative tolerance `tol` with at most `iter_cap`
/// Newton steps. Fails only when the program itself is malformed.
pub fn solve(prog: &Program, tol: f64, iter_cap: usize) -> Result<Solution, ConvexError> {
    prog.validate()?;
    let mut ctx = Ctx::new(prog, tol);
    let mut x: Vec<f64> = (0..prog.len())
        .map(|i| {
            let hint = prog.start.as_ref().map_or(f64::NAN, |s| s[i]);
            if prog.lower[i] == prog.upper[i] {
                prog.lower[i]
            } else {
                interior(prog.lower[i], prog.upper[i], hint)
            }
        })
        .collect();
    let mut sc = Scratch::default();
    let mut st = State {
        x: core::mem::take(&mut x),
        s: None,
        steps: 0,
    };

    if ctx.value(&st.x, None, 0.0).is_none() {
        let worst = prog
            .constraints
            .iter()
            .map(|c| c.residual(&st.x) - ctx.relax)
            .fold(f64::NEG_INFINITY, f64::max);
        st.s = Some(worst.max(0.0) + 1.0);
        ctx.anchor = ctx
            .free
            .iter()
            .filter(|&&i| !(prog.lower[i].is_finite() && prog.upper[i].is_finite()))
            .map(|&i| (i, st.x[i], 1e-6 / st.x[i].abs().max(1.0).powi(2)))
            .collect();
        let degree = ctx.degree + 1.0;
        let mut tau = 1.0;
        loop {
            match ctx.center(&mut st, tau, iter_cap, &mut sc) {
                Centering::Feasible => break,
                Centering::Budget => return Ok(finish(prog, st, Status::MaxIterations, f64::INFINITY)),
                Centering::Stalled(_) | Centering::Done => {}
            }
            let s = st.s.unwrap_or(0.0);
            if s - degree / tau > 0.0 || tau > 1e20 {
                return Ok(finish(prog, st, Status::Infeasible, f64::INFINITY));
            }
            tau *= MU;
        }
        st.s = None;
    }

    let mut tau = 1.0;
    loop {
        let outcome = ctx.center(&mut st, tau, iter_cap, &mut sc);
        let gap = ctx.degree / tau;
        let scale = prog.objective_value(&st.x).abs().max(1e-3);
        let centered = match outcome {
            Centering::Stalled(l2) => l2 < 1.0,
            _ => true,
        };
        if gap <= tol * scale && centered {
            return Ok(finish(prog, st, Status::Optimal, gap));
        }
        match outcome {
            Centering::Budget => return Ok(finish(prog, st, Status::MaxIterations, gap)),
            Centering::Stalled(l2) if l2 >= 1.0 && gap <= tol * scale => {
                return Ok(finish(prog, st, Status::MaxIterations, gap))
            }
            _ if tau > 1e30 => return Ok(finish(prog, st, Status::MaxIterations, gap)),
            _ => tau *= MU,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_feasibility, Affine, Atom, Expr};
    use super::*;

    #[test]
    fn perspective_saturates_bounds() {
        let mut p = Program::new();
        let b = p.var("b", 0.0, f64::INFINITY);
        let q = p.var("p", 0.0, f64::INFINITY);
        p.maximize(Expr::new().atom(Atom::PerspectiveLog {
            coef: 1.0,
            time: b,
            amount: q,
            gain: 1.0,
        }));
        p.linear_le("p_cap", &[(q, 1.0)], 1.0);
        p.linear_le("b_cap", &[(b, 1.0)], 1.0);
        let sol = solve(&p, 1e-8, 500).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.value(b) - 1.0).abs() < 1e-6);
        assert!((sol.value(q) - 1.0).abs() < 1e-6);
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cube_minimum_at_bound() {
        let mut p = Program::new();
        let f = p.var("f", 0.0, f64::INFINITY);
        p.maximize(Expr::new().atom(Atom::Cube { coef: -1.0, var: f }));
        p.linear_le("f_min", &[(f, -1.0)], -2.0);
        let sol = solve(&p, 1e-9, 500).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.value(f) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasible() {
        let mut p = Program::new();
        let x = p.var("x", 0.0, 1.0);
        p.linear_le("x_big", &[(x, -1.0)], -2.0);
        p.maximize(Expr::new().term(x, 1.0));
        assert_eq!(solve(&p, 1e-6, 500).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn degenerate_interior_is_handled() {
        let mut p = Program::new();
        let a = p.var("a", 0.0, 1.0);
        let b = p.var("b", 0.0, 1.0);
        p.linear_le("no_b", &[(b, 1.0)], 0.0);
        p.linear_le("share", &[(a, 1.0), (b, 1.0)], 1.0);
        p.maximize(Expr::new().term(a, 1.0).term(b, 5.0));
        let sol = solve(&p, 1e-6, 1000).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!(sol.residual <= 1e-6);
        assert!((sol.objective - 1.0).abs() < 1e-5);
        assert!(check_feasibility(&p, &sol.values, 1e-6).is_empty());
    }

    #[test]
    fn cone_projection() {
        // closest point of the disc of radius 1 around (3, 4) to the origin
        let mut p = Program::new();
        let x = p.var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = p.var("y", f64::NEG_INFINITY, f64::INFINITY);
        let t = p.var("t", f64::NEG_INFINITY, f64::INFINITY);
        p.cone(
            "disc",
            alloc::vec![Affine::var(x).plus(-3.0), Affine::var(y).plus(-4.0)],
            Affine::constant(1.0),
        );
        p.cone("epi", alloc::vec![Affine::var(x), Affine::var(y)], Affine::var(t));
        p.maximize(Expr::new().term(t, -1.0));
        let sol = solve(&p, 1e-9, 1000).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.value(x) - 2.4).abs() < 1e-5);
        assert!((sol.value(y) - 3.2).abs() < 1e-5);
        assert!((sol.objective + 4.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_variables_are_constants() {
        let mut p = Program::new();
        let x = p.var("x", 0.0, 10.0);
        let c = p.fixed("c", 3.0);
        p.linear_le("cap", &[(x, 1.0), (c, 1.0)], 5.0);
        p.maximize(Expr::new().term(x, 1.0));
        let sol = solve(&p, 1e-8, 500).unwrap();
        assert_eq!(sol.value(c), 3.0);
        assert!((sol.value(x) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn distance_power_epigraph() {
        // min x s.t. x >= ||q - (1, 2)||^3 with q in the unit box at origin
        let mut p = Program::new();
        let qx = p.var("qx", -1.0, 0.0);
        let qy = p.var("qy", -1.0, 0.0);
        let x = p.var("x", 0.0, f64::INFINITY);
        p.root_bound(
            "root",
            x,
            alloc::vec![Affine::var(qx).plus(-1.0), Affine::var(qy).plus(-2.0)],
            3.0,
            1.0,
        );
        p.maximize(Expr::new().term(x, -1.0));
        let sol = solve(&p, 1e-9, 1000).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.value(x) - 5f64.powf(1.5)).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut p = Program::new();
        let b = p.var("b", 0.0, 1.0);
        let q = p.var("p", 0.0, 2.0);
        let f = p.var("f", 0.0, f64::INFINITY);
        p.maximize(
            Expr::new()
                .term(f, 0.3)
                .atom(Atom::PerspectiveLog {
                    coef: 1.0,
                    time: b,
                    amount: q,
                    gain: 2.0,
                }),
        );
        p.cube_le("energy", f, 1.0, Affine::var(q).plus(-1.5));
        let a = solve(&p, 1e-7, 500).unwrap();
        let c = solve(&p, 1e-7, 500).unwrap();
        assert_eq!(a, c);
    }
}
