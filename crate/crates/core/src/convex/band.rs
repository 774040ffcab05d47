//! Symmetric banded matrices and their Cholesky factors.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // redundant when num-traits is built with std
use num_traits::Float;


/// Lower band of a symmetric `n x n` matrix with half-bandwidth `bw`.
#[derive(Debug, Clone)]
pub struct Band {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Band {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Band {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    /// Adds `v` to entry `(i, j)`; the symmetric twin is implied.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.data[self.slot(i, i)]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Jacobi-scaled Cholesky factor `D A D + r I = L L^T`.
#[derive(Debug, Clone)]
pub struct Factor {
    scale: Vec<f64>,
    l: Band,
}

impl Factor {
    /// Factors `a`, adding a growing diagonal shift when it is not
    /// numerically positive definite. Returns `None` only if every shift fails.
    pub fn new(a: &Band) -> Option<Factor> {
        let n = a.n;
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = a.diag(i);
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut shift = 0.0;
        for _ in 0..12 {
            if let Some(l) = cholesky(a, &scale, shift) {
                return Some(Factor { scale, l });
            }
            shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
        }
        None
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let bw = self.l.bw;
        let mut y: Vec<f64> = rhs.iter().zip(&self.scale).map(|(r, s)| r * s).collect();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut acc = y[i];
            for j in lo..i {
                acc -= self.l.get(i, j) * y[j];
            }
            y[i] = acc / self.l.diag(i);
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut acc = y[i];
            for j in i + 1..=hi {
                acc -= self.l.get(j, i) * y[j];
            }
            y[i] = acc / self.l.diag(i);
        }
        y.iter_mut().zip(&self.scale).for_each(|(v, s)| *v *= s);
        y
    }
}

fn cholesky(a: &Band, scale: &[f64], shift: f64) -> Option<Band> {
    let n = a.n;
    let bw = a.bw;
    let mut l = Band::zeros(n, bw);
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        for j in lo..=i {
            let mut sum = a.get(i, j) * scale[i] * scale[j];
            if i == j {
                sum += shift;
            }
            let klo = lo.max(j.saturating_sub(bw));
            for k in klo..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(sum > 1e-14) || !sum.is_finite() {
                    return None;
                }
                let s = l.slot(i, i);
                l.data[s] = sum.sqrt();
            } else {
                let s = l.slot(i, j);
                l.data[s] = sum / l.diag(j);
            }
        }
    }
    Some(l)
}
