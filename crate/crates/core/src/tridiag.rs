//! Symmetric tridiagonal kernels: SPD Thomas solve, pivoted LU for
//! indefinite systems, Sturm-sequence eigenvalue bisection and inverse
//! iteration. Everything the eigen and solve modules need, with no dense
//! fallbacks.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag` (n) and `off` (n-1).
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm/LDL^T sign count).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.n();
        let mut count = 0usize;
        let mut d = self.diag[0] - x;
        if d < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let off = self.off[i - 1];
            let mut pivot = d;
            if pivot == 0.0 {
                pivot = f64::MIN_POSITIVE.max(off.abs() * f64::EPSILON * f64::EPSILON);
            }
            d = (self.diag[i] - x) - off * off / pivot;
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Smallest eigenvalue by bisection to absolute tolerance `abs_tol`
    /// (floored at the roundoff resolution of the matrix scale).
    pub fn smallest_eigenvalue(&self, abs_tol: f64) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1.0);
        let tol = abs_tol.max(scale * 1e-16);
        // ensure the bracket contains λ_min strictly
        lo -= tol;
        hi += tol;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for the eigenvalue closest to `shift` by inverse
    /// iteration with a pivoted LU factorization. Returns a unit 2-norm
    /// vector.
    pub fn inverse_iteration(&self, shift: f64) -> Result<Vec<f64>> {
        let n = self.n();
        let shifted = SymTridiag {
            diag: self.diag.iter().map(|d| d - shift).collect(),
            off: self.off.clone(),
        };
        let lu = TridiagLu::factor(
            &shifted.off,
            &shifted.diag,
            &shifted.off,
            /*allow_singular=*/ true,
        )?;
        // deterministic start vector with no symmetry that could be
        // orthogonal to the principal mode
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 * 0.7312).sin()))
            .collect();
        normalize(&mut v);
        for _ in 0..4 {
            let mut w = lu.solve(&v);
            let norm = normalize(&mut w);
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Solver("inverse iteration broke down".into()));
            }
            v = w;
        }
        Ok(v)
    }

    /// 2-norm of (T - λ I) v for a unit vector v.
    pub fn eig_residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let tv = self.mul(v);
        tv.iter()
            .zip(v)
            .map(|(t, x)| {
                let r = t - lambda * x;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Thomas algorithm for diagonally dominant / SPD tridiagonal systems.
/// `lower` and `upper` have length n-1.
pub fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(Error::Solver("zero pivot in Thomas solve".into()));
    }
    c[0] = if n > 1 { upper[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i - 1] * c[i - 1];
        if piv == 0.0 {
            return Err(Error::Solver(format!("zero pivot at row {i} in Thomas solve")));
        }
        if i + 1 < n {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// LU factorization of a (possibly unsymmetric, possibly indefinite)
/// tridiagonal matrix with partial pivoting. Row swaps introduce a second
/// superdiagonal.
pub struct TridiagLu {
    n: usize,
    du1: Vec<f64>,
    du2: Vec<f64>,
    d: Vec<f64>,
    l: Vec<f64>,
    swapped: Vec<bool>,
    pub smallest_pivot: f64,
}

impl TridiagLu {
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64], allow_singular: bool) -> Result<Self> {
        let n = diag.len();
        let mut d = diag.to_vec();
        let mut du1 = vec![0.0; n.saturating_sub(1)];
        let mut du2 = vec![0.0; n.saturating_sub(2).max(0)];
        du1.copy_from_slice(upper);
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let mut sub = lower.to_vec();
        let mut smallest = f64::INFINITY;
        let scale = diag
            .iter()
            .chain(lower.iter())
            .chain(upper.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);

        for i in 0..n.saturating_sub(1) {
            if sub[i].abs() > d[i].abs() {
                // swap rows i, i+1
                swapped[i] = true;
                std::mem::swap(&mut d[i], &mut sub[i]);
                let next_diag = d[i + 1];
                d[i + 1] = du1[i];
                du1[i] = next_diag;
                if i + 2 < n {
                    du2[i] = du1[i + 1];
                    du1[i + 1] = 0.0;
                }
            }
            if d[i] == 0.0 {
                if allow_singular {
                    d[i] = scale * 1e-300_f64.max(f64::EPSILON * f64::EPSILON);
                } else {
                    return Err(Error::Solver(format!("singular pivot at row {i}")));
                }
            }
            smallest = smallest.min(d[i].abs());
            let m = sub[i] / d[i];
            l[i] = m;
            d[i + 1] -= m * du1[i];
            if i + 2 < n {
                // when swapped, the eliminated row carries du2[i]
                if swapped[i] {
                    du1[i + 1] -= m * du2[i];
                } else {
                    // du2[i] is zero: nothing to propagate
                }
            }
        }
        if d[n - 1] == 0.0 {
            if allow_singular {
                d[n - 1] = scale * f64::EPSILON * f64::EPSILON;
            } else {
                return Err(Error::Solver("singular pivot at last row".into()));
            }
        }
        smallest = smallest.min(d[n - 1].abs());
        Ok(TridiagLu {
            n,
            du1,
            du2,
            d,
            l,
            swapped,
            smallest_pivot: smallest,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.l[i] * b[i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= self.du1[i] * x[i + 1];
            }
            if i + 2 < n && self.swapped[i] {
                s -= self.du2[i] * x[i + 2];
            }
            x[i] = s / self.d[i];
        }
        x
    }
}
