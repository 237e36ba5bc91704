//! The three eigenproblems of the laboratory: the indefinite-weight Neumann
//! principal pair (μ₁(a), φ₁), the linearized stability eigenvalue γ₁(q, u),
//! and the mixed Neumann/Dirichlet pair (σ₁, ψ₁) on a boundary collar.
//!
//! All of them reduce to symmetric tridiagonal pencils after conjugating by
//! the square root of the diagonal cell-measure matrix: with A the stiffness
//! matrix and M the measures, Ã = M^{-1/2} A M^{-1/2} and the weight mass
//! matrix symmetrizes to the plain diagonal of the weight samples. The
//! principal eigenvalue is located by bisection on the exact Sturm count of
//! negative eigenvalues of Ã - μ diag(a), which stays sharp where a
//! λ_min-based root finder would be limited by the operator norm.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{integrate_product, Field, Grid};
use crate::tridiag::SymTridiag;
use crate::weights::Weight;

/// Principal pair of an eigenproblem, normalized to ∫φ² = 1 with φ > 0.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub eigenfunction: Field,
    pub residual_norm: f64,
    pub normalization_check: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Stability {
    AsymptoticallyStable,
    WeaklyStable,
    Unstable,
}

/// Outcome of the linearized eigenproblem at a positive solution.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub gamma1: f64,
    pub eigenfunction: Field,
    pub classification: Stability,
}

pub const STABILITY_TOL: f64 = 1e-9;

/// Measure-symmetrized stiffness Ã = M^{-1/2} A M^{-1/2}.
pub fn sym_stiffness(grid: &Grid) -> SymTridiag {
    let n = grid.nodes();
    let m = &grid.cell_measures;
    let e = &grid.edge_weights;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n {
        let mut d = 0.0;
        if i > 0 {
            d += e[i - 1];
        }
        if i + 1 < n {
            d += e[i];
        }
        diag[i] = d / m[i];
    }
    for i in 0..n - 1 {
        off[i] = -e[i] / (m[i] * m[i + 1]).sqrt();
    }
    SymTridiag { diag, off }
}

/// Ã - diag(pot): the symmetrized form of A - M·diag(pot).
pub fn sym_with_potential(grid: &Grid, pot: &[f64]) -> SymTridiag {
    let mut t = sym_stiffness(grid);
    for (d, p) in t.diag.iter_mut().zip(pot) {
        *d -= p;
    }
    t
}

fn desymmetrize(grid: &Grid, psi: &[f64]) -> Vec<f64> {
    psi.iter()
        .zip(&grid.cell_measures)
        .map(|(v, m)| v / m.sqrt())
        .collect()
}

/// Finds the smallest μ > 0 at which Ã - μ diag(a) acquires a negative
/// eigenvalue, by geometric bracket expansion and bisection on the integer
/// Sturm count. Relative tolerance `rel_tol` on μ.
fn principal_pencil_root(base: &SymTridiag, weight: &[f64], rel_tol: f64) -> Result<f64> {
    let shifted = |mu: f64| -> SymTridiag {
        let mut t = base.clone();
        for (d, w) in t.diag.iter_mut().zip(weight) {
            *d -= mu * w;
        }
        t
    };
    let negatives = |mu: f64| shifted(mu).count_below(0.0);

    let mut hi = 1e-8;
    let mut lo = 0.0;
    let mut found = false;
    for _ in 0..120 {
        if negatives(hi) >= 1 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Solver(
            "bracket search for the principal eigenvalue failed to find a sign change".into(),
        ));
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if negatives(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Principal eigenpair of -Δφ = μ a φ with Neumann boundary, the first
/// positive eigenvalue with positive eigenfunction. Requires (H0).
pub fn principal_indefinite_eigen(grid: &Arc<Grid>, w: &Weight) -> Result<EigenPair> {
    grid.check_field(&w.field)?;
    let hyp = crate::weights::check_hypotheses(w)?;
    if !hyp.h0 {
        return Err(Error::condition(
            "H0",
            hyp.integral,
            if hyp.changes_sign { 0.0 } else { f64::NAN },
        ));
    }
    let base = sym_stiffness(grid);
    let mu1 = principal_pencil_root(&base, &w.field.values, 1e-13)?;

    let mut pencil = base;
    for (d, a) in pencil.diag.iter_mut().zip(&w.field.values) {
        *d -= mu1 * a;
    }
    let mut psi = pencil.inverse_iteration(0.0)?;
    // sign normalization, then positivity is asserted: a sign-changing
    // eigenvector here means the located eigenvalue is not principal
    let sum: f64 = psi.iter().sum();
    if sum < 0.0 {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
    if psi.iter().any(|&v| v <= 0.0) {
        return Err(Error::Solver(
            "principal eigenfunction is not strictly positive; located eigenvalue is not principal"
                .into(),
        ));
    }
    let residual_norm = pencil.eig_residual(0.0, &psi);
    let phi = desymmetrize(grid, &psi);
    let eigenfunction = Field::new(Arc::clone(grid), phi)?;
    let normalization_check = integrate_product(grid, &eigenfunction.values, &eigenfunction.values);
    Ok(EigenPair {
        eigenvalue: mu1,
        eigenfunction,
        residual_norm,
        normalization_check,
    })
}

/// λ_min(Ã - μ diag(a)) as a function of μ; exposed for the pencil-shape
/// diagnostics (zero at μ = 0 with slope -∫a/|Ω| under (H0)).
pub fn pencil_lambda_min(grid: &Grid, w: &Weight, mu: f64) -> Result<f64> {
    grid.check_field(&w.field)?;
    let mut t = sym_stiffness(grid);
    for (d, a) in t.diag.iter_mut().zip(&w.field.values) {
        *d -= mu * a;
    }
    Ok(t.smallest_eigenvalue(1e-12))
}

/// Smallest eigenvalue γ₁ of -Δφ - q a u^{q-1} φ = γ φ with Neumann
/// closure, at a strictly positive state u.
pub fn linearized_eigen(grid: &Arc<Grid>, w: &Weight, q: f64, u: &Field) -> Result<StabilityResult> {
    grid.check_field(&w.field)?;
    grid.check_field(u)?;
    if q <= 0.0 {
        return Err(Error::Precondition(format!("q = {q} must be positive")));
    }
    if let Some(i) = u.values.iter().position(|&v| v <= 0.0) {
        return Err(Error::Precondition(format!(
            "u touches zero at node {i} (x = {:.6}); the linearization needs u > 0",
            grid.coordinates[i]
        )));
    }
    let pot: Vec<f64> = w
        .field
        .values
        .iter()
        .zip(&u.values)
        .map(|(a, uv)| q * a * uv.powf(q - 1.0))
        .collect();
    let t = sym_with_potential(grid, &pot);
    let gamma1 = t.smallest_eigenvalue(1e-12);
    let mut psi = t.inverse_iteration(gamma1)?;
    let sum: f64 = psi.iter().sum();
    if sum < 0.0 {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
    let phi = desymmetrize(grid, &psi);
    let eigenfunction = Field::new(Arc::clone(grid), phi)?;
    let classification = if gamma1 > STABILITY_TOL {
        Stability::AsymptoticallyStable
    } else if gamma1 >= -STABILITY_TOL {
        Stability::WeaklyStable
    } else {
        Stability::Unstable
    };
    Ok(StabilityResult {
        gamma1,
        eigenfunction,
        classification,
    })
}

/// Principal pair (σ₁, ψ₁) of -Δψ = σ a⁺ ψ on the collar with Dirichlet
/// condition at the inner edge Γ₀ and Neumann at the outer boundary. The
/// eigenfunction is returned on the full grid, zero outside the collar.
pub fn mixed_eigen(grid: &Arc<Grid>, wplus: &Weight, collar_edge: f64) -> Result<EigenPair> {
    grid.check_field(&wplus.field)?;
    let n = grid.nodes();
    let outer = grid.coordinates[n - 1];
    if collar_edge >= outer || collar_edge <= grid.coordinates[0] {
        return Err(Error::Precondition(format!(
            "collar edge {collar_edge} must lie inside the domain"
        )));
    }
    // Dirichlet node: nearest node to the requested edge; unknowns to its right.
    let j0 = grid
        .coordinates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - collar_edge)
                .abs()
                .partial_cmp(&(*b - collar_edge).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    if j0 + 2 >= n {
        return Err(Error::Precondition("collar too thin for the grid".into()));
    }
    let aplus: Vec<f64> = wplus.field.values[j0 + 1..].iter().map(|a| a.max(0.0)).collect();
    if aplus.iter().all(|&a| a <= 0.0) {
        return Err(Error::Precondition("a+ vanishes on the whole collar".into()));
    }

    let full = sym_stiffness(grid);
    let sub = SymTridiag {
        diag: full.diag[j0 + 1..].to_vec(),
        off: full.off[j0 + 1..].to_vec(),
    };
    // Dirichlet at j0 keeps the edge weight to the dropped node in diag[0].
    let shifted = |sigma: f64| -> SymTridiag {
        let mut t = sub.clone();
        for (d, a) in t.diag.iter_mut().zip(&aplus) {
            *d -= sigma * a;
        }
        t
    };
    let negatives = |sigma: f64| shifted(sigma).count_below(0.0);
    let mut hi = 1e-8;
    let mut lo = 0.0;
    let mut found = false;
    for _ in 0..120 {
        if negatives(hi) >= 1 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Solver("mixed eigen bracket search failed".into()));
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if negatives(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sigma1 = 0.5 * (lo + hi);

    let pencil = shifted(sigma1);
    let mut psi = pencil.inverse_iteration(0.0)?;
    let sum: f64 = psi.iter().sum();
    if sum < 0.0 {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
    if psi.iter().any(|&v| v <= 0.0) {
        return Err(Error::Solver("mixed eigenfunction not positive on the collar".into()));
    }
    let residual_norm = pencil.eig_residual(0.0, &psi);
    let mut values = vec![0.0; n];
    for (k, v) in psi.iter().enumerate() {
        values[j0 + 1 + k] = v / grid.cell_measures[j0 + 1 + k].sqrt();
    }
    let eigenfunction = Field::new(Arc::clone(grid), values)?;
    let normalization_check = integrate_product(grid, &eigenfunction.values, &eigenfunction.values);
    Ok(EigenPair {
        eigenvalue: sigma1,
        eigenfunction,
        residual_norm,
        normalization_check,
    })
}
