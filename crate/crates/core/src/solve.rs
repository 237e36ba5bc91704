//! Nonlinear solvers for -Δu = a(x) u^q and its linear auxiliaries:
//! zero-mean Neumann solve, arbitrarily large supersolutions, the
//! branch-extension subsolution, monotone sub/supersolution iteration,
//! nonnegative energy minimization (dead cores permitted) and damped Newton
//! refinement for strictly positive states.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{apply_stiffness, integrate, pow_pos, Field, Grid};
use crate::tridiag::{thomas_solve, SymTridiag, TridiagLu};
use crate::weights::Weight;

#[derive(Debug, Clone)]
pub struct SolveParams {
    pub max_iterations: usize,
    /// Residual max-norm tolerance, relative to the forcing scale
    /// 1 + max|a| · max(u)^q of the problem at hand.
    pub tolerance: f64,
    /// Newton clamp; 0 means the default 1e-12 · max(guess).
    pub positivity_floor: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            max_iterations: 60_000,
            tolerance: 1e-10,
            positivity_floor: 0.0,
        }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Precondition("tolerance must be positive".into()));
        }
        if self.positivity_floor < 0.0 {
            return Err(Error::Precondition("positivity floor must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum PositivityKind {
    Trivial,
    DeadCore,
    PositiveInterior,
    InteriorOfCone,
}

/// Positivity classification of a nonnegative state.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PositivityClass {
    pub class: PositivityKind,
    pub min_value: f64,
    pub boundary_min: f64,
    /// maximal sub-threshold intervals containing interior nodes,
    /// as coordinate pairs
    pub zero_set: Vec<(f64, f64)>,
}

/// An ordered sub/supersolution pair.
#[derive(Debug, Clone)]
pub struct SubSuperPair {
    pub sub: Field,
    pub sup: Field,
    pub ordered_check: bool,
}

impl SubSuperPair {
    pub fn new(sub: Field, sup: Field) -> Result<Self> {
        sub.grid.check_field(&sup)?;
        let slack = 1e-12 * sup.max_abs().max(1.0);
        let ordered = sub
            .values
            .iter()
            .zip(&sup.values)
            .all(|(s, t)| *s <= *t + slack);
        if !ordered {
            return Err(Error::Precondition(
                "sub/supersolution pair is not ordered".into(),
            ));
        }
        Ok(SubSuperPair {
            sub,
            sup,
            ordered_check: true,
        })
    }
}

/// Forcing scale used to interpret relative residual tolerances.
pub fn residual_scale(w: &Weight, q: f64, u: &Field) -> f64 {
    1.0 + w.field.max_abs() * pow_pos(u.max().max(0.0), q)
}

/// Max-norm of the residual field of (P_{a,q}) at u.
pub fn residual_norm(grid: &Grid, w: &Weight, q: f64, u: &Field) -> Result<f64> {
    Ok(crate::grid::residual(grid, &w.field, q, u)?.max_abs())
}

/// Solves -Δ_h w = rhs with Neumann closure for the unique solution with
/// zero weighted mean. Requires the discrete compatibility ∫ rhs ≈ 0.
pub fn solve_linear_neumann(grid: &Arc<Grid>, rhs: &Field) -> Result<Field> {
    grid.check_field(rhs)?;
    let total = integrate(grid, rhs)?;
    let bound = 1e-8 * rhs.max_abs() * grid.volume();
    if total.abs() > bound.max(1e-300) {
        return Err(Error::Precondition(format!(
            "incompatible right-hand side: ∫rhs = {total:.3e} exceeds {bound:.3e}"
        )));
    }
    let n = grid.nodes();
    // exact discrete projection so the pinned solve is consistent
    let mean = total / grid.volume();
    let b: Vec<f64> = rhs
        .values
        .iter()
        .zip(&grid.cell_measures)
        .map(|(v, m)| (v - mean) * m)
        .collect();

    // pin node 0 to zero, solve the SPD remainder, then shift the mean
    let e = &grid.edge_weights;
    let sub: Vec<f64> = e[1..].iter().map(|w| -w).collect();
    let mut diag = vec![0.0; n - 1];
    for i in 1..n {
        let mut d = e[i - 1];
        if i + 1 < n {
            d += e[i];
        }
        diag[i - 1] = d;
    }
    let x = thomas_solve(&sub, &diag, &sub, &b[1..])?;
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    values.extend_from_slice(&x);
    let w_mean: f64 = values
        .iter()
        .zip(&grid.cell_measures)
        .map(|(v, m)| v * m)
        .sum::<f64>()
        / grid.volume();
    for v in values.iter_mut() {
        *v -= w_mean;
    }
    Field::new(Arc::clone(grid), values)
}

/// Arbitrarily large supersolution under ∫a < 0: with ψ the zero-mean
/// solution of -Δψ = a - ā, the field ū = c + c^q ψ satisfies
/// -Δū - a ū^q = c^q [(a - ā) - a (1 + c^{q-1} ψ)^q] ≥ 0 once c is large,
/// since the bracket tends to -ā > 0 uniformly. The constant c is grown
/// geometrically until the discrete residual clears -tol and min ū ≥ floor.
pub fn large_supersolution(grid: &Arc<Grid>, w: &Weight, q: f64, floor: f64) -> Result<Field> {
    grid.check_field(&w.field)?;
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Precondition(format!("q = {q} must lie in (0,1)")));
    }
    let int_a = integrate(grid, &w.field)?;
    if int_a >= 0.0 {
        return Err(Error::condition("int_a_negative", int_a, 0.0));
    }
    let mean = int_a / grid.volume();
    let shifted = Field::new(
        Arc::clone(grid),
        w.field.values.iter().map(|v| v - mean).collect(),
    )?;
    let psi = solve_linear_neumann(grid, &shifted)?;

    let mut c = (1.0 + psi.max_abs()).max(floor.max(0.0) + 1.0);
    for _ in 0..400 {
        let cq = c.powf(q);
        let candidate = Field::new(
            Arc::clone(grid),
            psi.values.iter().map(|p| c + cq * p).collect(),
        )?;
        if candidate.min() >= floor {
            let tol = 1e-10 * residual_scale(w, q, &candidate);
            let res = crate::grid::residual(grid, &w.field, q, &candidate)?;
            if res.values.iter().all(|&r| r >= -tol) {
                return Ok(candidate);
            }
        }
        c *= 2.0;
        if !c.is_finite() {
            break;
        }
    }
    Err(Error::Solver(
        "supersolution constant exceeded the overflow guard".into(),
    ))
}

/// The branch-extension subsolution w = γ^{-1/(1-q)} u₀^γ with
/// γ = (1-q₀)/(1-q) ≥ 1, a strictly positive subsolution of (P_{a,q}) when
/// u₀ solves (P_{a,q₀}).
pub fn branch_extension_subsolution(u0: &Field, q0: f64, q: f64) -> Result<Field> {
    if !(q0 <= q && q < 1.0 && q0 > 0.0) {
        return Err(Error::Precondition(format!(
            "need 0 < q0 <= q < 1, got q0 = {q0}, q = {q}"
        )));
    }
    if u0.min() <= 0.0 {
        return Err(Error::Precondition(
            "branch extension needs a strictly positive base solution".into(),
        ));
    }
    let gamma = (1.0 - q0) / (1.0 - q);
    let scale = gamma.powf(-1.0 / (1.0 - q));
    Field::new(
        Arc::clone(&u0.grid),
        u0.values.iter().map(|v| scale * v.powf(gamma)).collect(),
    )
}

fn helmholtz_factor(grid: &Grid, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.nodes();
    let e = &grid.edge_weights;
    let m = &grid.cell_measures;
    let sub: Vec<f64> = e.iter().map(|w| -w).collect();
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let mut d = lambda * m[i];
        if i > 0 {
            d += e[i - 1];
        }
        if i + 1 < n {
            d += e[i];
        }
        diag[i] = d;
    }
    (sub, diag)
}

/// Monotone iteration u_{k+1} = (-Δ_h + λ)^{-1}(a u_k^q + λ u_k) from the
/// subsolution up, bounded by the supersolution. The shift λ starts at the
/// Lipschitz bound q max|a| (min sub)^{q-1} (with an internal floor when the
/// subsolution touches zero) and doubles on any detected ordering violation.
pub fn monotone_iterate(
    grid: &Arc<Grid>,
    w: &Weight,
    q: f64,
    pair: &SubSuperPair,
    params: &SolveParams,
) -> Result<Field> {
    params.validate()?;
    grid.check_field(&w.field)?;
    grid.check_field(&pair.sub)?;
    grid.check_field(&pair.sup)?;
    if !pair.ordered_check {
        return Err(Error::Precondition("pair not ordered".into()));
    }
    if pair.sub.min() < 0.0 {
        return Err(Error::Precondition("subsolution must be nonnegative".into()));
    }
    if pair.sup.min() <= 0.0 {
        return Err(Error::Precondition(
            "supersolution must be strictly positive".into(),
        ));
    }
    let sup_max = pair.sup.max();
    let lip_floor = pair
        .sub
        .min()
        .max(1e-3 * pair.sub.max())
        .max(1e-12 * sup_max);
    let max_a = w.field.max_abs();
    let mut lambda = (q * max_a * lip_floor.powf(q - 1.0)).max(1e-8);
    let mono_slack = 1e-12 * sup_max.max(1.0);
    let upper_slack = 1e-8 * sup_max.max(1.0);
    let tol = params.tolerance * residual_scale(w, q, &pair.sup)
        + crate::grid::residual_roundoff_floor(grid, sup_max);

    let mut doublings = 0usize;
    'outer: loop {
        let (sub_d, diag) = helmholtz_factor(grid, lambda);
        let mut u = pair.sub.values.clone();
        for _ in 0..params.max_iterations {
            let rhs: Vec<f64> = u
                .iter()
                .zip(&w.field.values)
                .zip(&grid.cell_measures)
                .map(|((uv, av), m)| m * (av * pow_pos(*uv, q) + lambda * *uv))
                .collect();
            let next = thomas_solve(&sub_d, &diag, &sub_d, &rhs)?;
            let mut min_step = f64::INFINITY;
            let mut max_over = f64::NEG_INFINITY;
            for ((nv, uv), sv) in next.iter().zip(&u).zip(&pair.sup.values) {
                min_step = min_step.min(nv - uv);
                max_over = max_over.max(nv - sv);
            }
            if min_step < -mono_slack || max_over > upper_slack {
                if doublings >= 40 {
                    return Err(Error::Solver(format!(
                        "monotone iteration failed: ordering violated even at λ = {lambda:.3e}"
                    )));
                }
                lambda *= 2.0;
                doublings += 1;
                continue 'outer;
            }
            let step = next
                .iter()
                .zip(&u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            u = next;
            if step * lambda.max(1.0) <= 0.25 * tol || step == 0.0 {
                let field = Field::new(Arc::clone(grid), u.clone())?;
                let res = residual_norm(grid, w, q, &field)?;
                if res <= tol {
                    return Ok(field);
                }
            }
        }
        let field = Field::new(Arc::clone(grid), u)?;
        let res = residual_norm(grid, w, q, &field)?;
        if res <= tol {
            return Ok(field);
        }
        return Err(Error::Solver(format!(
            "monotone iteration hit the cap with residual {res:.3e} > {tol:.3e}"
        )));
    }
}

/// Damped Newton for F(u) = -Δ_h u - a u^q with Jacobian
/// -Δ_h - q a u^{q-1}, iterates clamped at the positivity floor.
pub fn newton_refine(
    grid: &Arc<Grid>,
    w: &Weight,
    q: f64,
    guess: &Field,
    params: &SolveParams,
) -> Result<Field> {
    params.validate()?;
    grid.check_field(&w.field)?;
    grid.check_field(guess)?;
    let gmax = guess.max();
    if gmax <= 0.0 {
        return Err(Error::Precondition(
            "guess is below the positivity floor".into(),
        ));
    }
    let floor = if params.positivity_floor > 0.0 {
        params.positivity_floor
    } else {
        1e-12 * gmax
    };
    if guess.min() < floor {
        return Err(Error::Precondition(format!(
            "guess minimum {:.3e} is below the positivity floor {floor:.3e}",
            guess.min()
        )));
    }

    let m = &grid.cell_measures;
    let mut u = guess.values.clone();
    let scale0 = residual_scale(w, q, guess);
    let tol = params.tolerance * scale0 + crate::grid::residual_roundoff_floor(grid, gmax);

    let residual_of = |u: &[f64]| -> Vec<f64> {
        let au = apply_stiffness(grid, u);
        au.iter()
            .zip(m)
            .zip(u.iter().zip(&w.field.values))
            .map(|((lu, mm), (uv, av))| lu / mm - av * pow_pos(*uv, q))
            .collect()
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));

    let mut res = residual_of(&u);
    let mut rn = norm(&res);
    for _ in 0..params.max_iterations.min(200) {
        if rn <= tol {
            return Field::new(Arc::clone(grid), u);
        }
        // J = A - M diag(q a u^{q-1}) acting on the correction
        let e = &grid.edge_weights;
        let n = grid.nodes();
        let sub: Vec<f64> = e.iter().map(|x| -x).collect();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let mut d = -m[i] * q * w.field.values[i] * u[i].max(floor).powf(q - 1.0);
            if i > 0 {
                d += e[i - 1];
            }
            if i + 1 < n {
                d += e[i];
            }
            diag[i] = d;
        }
        let rhs: Vec<f64> = res.iter().zip(m).map(|(r, mm)| -r * mm).collect();
        let lu = TridiagLu::factor(&sub, &diag, &sub, false).map_err(|_| {
            let sym = SymTridiag {
                diag: diag.iter().zip(m).map(|(d, mm)| d / mm).collect(),
                off: e
                    .iter()
                    .enumerate()
                    .map(|(i, x)| -x / (m[i] * m[i + 1]).sqrt())
                    .collect(),
            };
            let near_kernel = sym.smallest_eigenvalue(1e-12);
            Error::Solver(format!(
                "singular Jacobian (near-kernel eigenvalue {near_kernel:.3e})"
            ))
        })?;
        let d = lu.solve(&rhs);

        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            // the floor guards the Jacobian power; the state itself may sink
            // to zero at degenerate boundary nodes
            let trial: Vec<f64> = u
                .iter()
                .zip(&d)
                .map(|(uv, dv)| (uv + s * dv).max(0.0))
                .collect();
            let tres = residual_of(&trial);
            let trn = norm(&tres);
            if trn <= (1.0 - 0.25 * s) * rn || trn <= tol {
                u = trial;
                res = tres;
                rn = trn;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return Err(Error::Solver(format!(
                "Newton stalled at residual {rn:.3e} (tolerance {tol:.3e})"
            )));
        }
    }
    if rn <= tol {
        return Field::new(Arc::clone(grid), u);
    }
    Err(Error::Solver(format!(
        "Newton hit the iteration cap at residual {rn:.3e}"
    )))
}

/// Result of an energy-descent run, with the per-accepted-step energy log.
pub struct EnergyRun {
    pub u: Field,
    pub energies: Vec<f64>,
    pub iterations: usize,
}

/// E(u) = ½ ∫|∇u|² - (q+1)^{-1} ∫ a (u⁺)^{q+1}.
pub fn energy(grid: &Grid, w: &Weight, q: f64, u: &Field) -> Result<f64> {
    grid.check_field(u)?;
    let dir = crate::grid::dirichlet_energy(grid, u)?;
    let pot: f64 = u
        .values
        .iter()
        .zip(&w.field.values)
        .zip(&grid.cell_measures)
        .map(|((uv, av), m)| av * pow_pos(*uv, q + 1.0) * m)
        .sum();
    Ok(0.5 * dir - pot / (q + 1.0))
}

/// Projected energy descent with nonnegativity constraint; dead cores
/// permitted. The search direction solves (A + cM) d = -M r on the free set
/// (free = positive nodes plus contact nodes whose residual pushes upward),
/// which keeps step 1.0 well scaled; backtracking halves from 1.0 and every
/// accepted step decreases E. Near a stationary point a restricted Newton
/// polish (gated by the same energy monotonicity) sharpens the residual.
pub fn minimize_energy(
    grid: &Arc<Grid>,
    w: &Weight,
    q: f64,
    init: &Field,
    params: &SolveParams,
) -> Result<EnergyRun> {
    params.validate()?;
    grid.check_field(&w.field)?;
    grid.check_field(init)?;
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Precondition(format!("q = {q} must lie in (0,1)")));
    }
    let n = grid.nodes();
    let m = &grid.cell_measures;
    let e = &grid.edge_weights;
    let max_a = w.field.max_abs();
    let shift = max_a.max(1.0);

    let mut u: Vec<f64> = init.values.iter().map(|v| v.max(0.0)).collect();
    let init_scale = init.max().max(1.0);
    let tol = params.tolerance * residual_scale(w, q, init)
        + crate::grid::residual_roundoff_floor(grid, init_scale);

    let residual_of = |u: &[f64]| -> Vec<f64> {
        let au = apply_stiffness(grid, u);
        au.iter()
            .zip(m)
            .zip(u.iter().zip(&w.field.values))
            .map(|((lu, mm), (uv, av))| lu / mm - av * pow_pos(*uv, q))
            .collect()
    };
    let energy_of = |u: &[f64]| -> f64 {
        let mut dir = 0.0;
        for (i, &ww) in e.iter().enumerate() {
            let d = u[i + 1] - u[i];
            dir += ww * d * d;
        }
        let mut pot = 0.0;
        for i in 0..n {
            pot += w.field.values[i] * pow_pos(u[i], q + 1.0) * m[i];
        }
        0.5 * dir - pot / (q + 1.0)
    };
    let projected_norm = |u: &[f64], r: &[f64]| -> f64 {
        u.iter().zip(r).fold(0.0f64, |mx, (uv, rv)| {
            if *uv > 0.0 {
                mx.max(rv.abs())
            } else {
                mx.max((-rv).max(0.0))
            }
        })
    };

    // pinned Helmholtz solve: (A + cM + curvature) d = -M r on free nodes,
    // d = 0 on contact nodes (rows and columns cleared, so the system stays
    // SPD). The positive part of the potential curvature -q a u^{q-1} is
    // included: without it, step 1.0 overshoots at small-u nodes where the
    // sublinear term is stiff.
    let directed = |u: &[f64], r: &[f64]| -> Result<Vec<f64>> {
        let free: Vec<bool> = u
            .iter()
            .zip(r)
            .map(|(uv, rv)| *uv > 0.0 || *rv < 0.0)
            .collect();
        let mut sub = vec![0.0; n - 1];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                let curv = if u[i] > 0.0 {
                    (-q * w.field.values[i] * u[i].powf(q - 1.0)).clamp(0.0, 1e200)
                } else {
                    0.0
                };
                let mut d = (shift + curv) * m[i];
                if i > 0 {
                    d += e[i - 1];
                }
                if i + 1 < n {
                    d += e[i];
                }
                diag[i] = d;
                rhs[i] = -r[i] * m[i];
            } else {
                diag[i] = 1.0;
                rhs[i] = 0.0;
            }
        }
        for i in 0..n - 1 {
            sub[i] = if free[i] && free[i + 1] { -e[i] } else { 0.0 };
        }
        thomas_solve(&sub, &diag, &sub, &rhs)
    };

    // exact coordinate minimization on the free set: each node's energy
    // section φ(v) = ½κv² - cv - b v^{q+1}/(q+1) is minimized over v ≥ 0,
    // which resolves the stiff scalar balance at free-boundary nodes that
    // gradient steps can only circle around
    let act_tol = 0.5 * tol;
    let coordinate_sweep = |u: &mut Vec<f64>| {
        let mut moved = 0.0f64;
        let node_ids: Vec<usize> = (0..n).chain((0..n).rev()).collect();
        for &i in &node_ids {
            let mut kappa = 0.0;
            let mut c = 0.0;
            if i > 0 {
                kappa += e[i - 1];
                c += e[i - 1] * u[i - 1];
            }
            if i + 1 < n {
                kappa += e[i];
                c += e[i] * u[i + 1];
            }
            let b = m[i] * w.field.values[i];
            // residual at the current value decides activation of contacts
            let grad0 = -c; // φ'(0⁺) without the b-term (b-term is 0 or -0)
            if u[i] == 0.0 && grad0 / m[i] >= -act_tol {
                continue;
            }
            let root = coordinate_minimizer(kappa, c, b, q);
            moved = moved.max((root - u[i]).abs());
            u[i] = root;
        }
        moved
    };

    let mut energies = Vec::new();
    let mut en = energy_of(&u);
    energies.push(en);
    let mut iterations = 0usize;
    let mut polish_ready = 0usize;

    while iterations < params.max_iterations {
        iterations += 1;
        let r = residual_of(&u);
        let pn = projected_norm(&u, &r);
        if pn <= tol {
            break;
        }

        // Newton polish once the projected residual is already small and
        // the contact set has settled
        if pn <= 1e4 * tol && polish_ready >= 3 {
            if let Some((unew, enew)) = newton_polish(grid, w, q, &u, en) {
                u = unew;
                en = enew;
                energies.push(en);
                let r2 = residual_of(&u);
                if projected_norm(&u, &r2) <= tol {
                    break;
                }
                continue;
            }
        }

        let d = directed(&u, &r)?;
        let slope: f64 = r
            .iter()
            .zip(&d)
            .zip(m)
            .map(|((rv, dv), mm)| rv * dv * mm)
            .sum();
        let mut s = 1.0;
        let mut global_moved = false;
        for _ in 0..45 {
            let trial: Vec<f64> = u
                .iter()
                .zip(&d)
                .map(|(uv, dv)| (uv + s * dv).max(0.0))
                .collect();
            let etrial = energy_of(&trial);
            if etrial <= en + 1e-4 * s * slope.min(0.0) + 1e-12 {
                let same_contacts = trial
                    .iter()
                    .zip(&u)
                    .all(|(a, b)| (*a > 0.0) == (*b > 0.0));
                polish_ready = if same_contacts { polish_ready + 1 } else { 0 };
                global_moved = trial.iter().zip(&u).any(|(a, b)| a != b);
                u = trial;
                en = etrial;
                energies.push(en);
                break;
            }
            s *= 0.5;
        }

        let moved = coordinate_sweep(&mut u);
        if moved > 0.0 {
            en = energy_of(&u);
            energies.push(en);
            polish_ready = 0;
        }
        if !global_moved && moved == 0.0 {
            break; // coordinate-wise stationary
        }
    }

    let field = Field::new(Arc::clone(grid), u)?;
    if field.max() <= 1e-10 * init_scale {
        return Err(Error::Solver(
            "energy descent collapsed to the trivial solution".into(),
        ));
    }
    let r = residual_of(&field.values);
    let pn = projected_norm(&field.values, &r);
    if pn > tol {
        return Err(Error::Solver(format!(
            "energy descent stalled at projected residual {pn:.3e} > {tol:.3e}"
        )));
    }
    Ok(EnergyRun {
        u: field,
        energies,
        iterations,
    })
}

/// Minimizer over v ≥ 0 of the nodal energy section
/// φ(v) = ½ κ v² - c v - b v^{q+1}/(q+1) with κ > 0, c ≥ 0.
/// For b ≤ 0 the section is strictly convex with a unique root of φ' in
/// [0, c/κ]; for b > 0 the stationary point is the unique positive root of
/// κv - c - b v^q (φ' has a single sign change from - to +).
fn coordinate_minimizer(kappa: f64, c: f64, b: f64, q: f64) -> f64 {
    let dphi = |v: f64| kappa * v - c - b * pow_pos(v, q);
    let (mut lo, mut hi);
    if b <= 0.0 {
        if c <= 0.0 {
            return 0.0;
        }
        lo = 0.0;
        hi = c / kappa;
    } else {
        lo = 0.0;
        hi = ((c + b) / kappa)
            .max((b / kappa).powf(1.0 / (1.0 - q)) * 2.0)
            .max(1e-300);
        let mut expand = 0;
        while dphi(hi) <= 0.0 && expand < 400 {
            hi *= 2.0;
            expand += 1;
        }
    }
    // bisection to the floating-point limit: cheap and unconditionally safe
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if dphi(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// One guarded Newton sweep on the free set; returns the new state and
/// energy only when the energy does not increase.
fn newton_polish(grid: &Grid, w: &Weight, q: f64, u: &[f64], en: f64) -> Option<(Vec<f64>, f64)> {
    let n = grid.nodes();
    let m = &grid.cell_measures;
    let e = &grid.edge_weights;
    let free: Vec<bool> = u.iter().map(|&v| v > 0.0).collect();
    let floor = 1e-14 * u.iter().fold(0.0f64, |a, &b| a.max(b));

    let au = apply_stiffness(grid, u);
    let res: Vec<f64> = au
        .iter()
        .zip(m)
        .zip(u.iter().zip(&w.field.values))
        .map(|((lu, mm), (uv, av))| lu / mm - av * pow_pos(*uv, q))
        .collect();

    let mut sub = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        if free[i] {
            let mut d = -m[i] * q * w.field.values[i] * u[i].max(floor).powf(q - 1.0);
            if i > 0 {
                d += e[i - 1];
            }
            if i + 1 < n {
                d += e[i];
            }
            diag[i] = d;
            rhs[i] = -res[i] * m[i];
        } else {
            diag[i] = 1.0;
        }
    }
    for i in 0..n - 1 {
        sub[i] = if free[i] && free[i + 1] { -e[i] } else { 0.0 };
    }
    let lu = TridiagLu::factor(&sub, &diag, &sub, false).ok()?;
    let d = lu.solve(&rhs);
    let mut s = 1.0;
    for _ in 0..20 {
        let trial: Vec<f64> = u
            .iter()
            .zip(&d)
            .map(|(uv, dv)| (uv + s * dv).max(0.0))
            .collect();
        let mut dir = 0.0;
        for (i, &ww) in e.iter().enumerate() {
            let dd = trial[i + 1] - trial[i];
            dir += ww * dd * dd;
        }
        let mut pot = 0.0;
        for i in 0..n {
            pot += w.field.values[i] * pow_pos(trial[i], q + 1.0) * m[i];
        }
        let etrial = 0.5 * dir - pot / (q + 1.0);
        if etrial <= en + 1e-12 {
            return Some((trial, etrial));
        }
        s *= 0.5;
    }
    None
}

/// Thresholds at scale_tol·max(u) and classifies the positivity structure.
/// `scale_tol` is also the absolute threshold below which the whole field
/// counts as trivial.
pub fn classify_positivity(u: &Field, scale_tol: f64) -> Result<PositivityClass> {
    let grid = &u.grid;
    let umax = u.max();
    if u.min() < -scale_tol * umax.max(1.0) {
        return Err(Error::Precondition(
            "field has significantly negative values".into(),
        ));
    }
    let n = grid.nodes();
    let boundary_min = u.values[0].min(u.values[n - 1]);
    if umax <= scale_tol {
        return Ok(PositivityClass {
            class: PositivityKind::Trivial,
            min_value: u.min(),
            boundary_min,
            zero_set: vec![],
        });
    }
    let th = scale_tol * umax;
    let mut zero_runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in u.values.iter().enumerate() {
        if v <= th {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            zero_runs.push((s, i - 1));
        }
    }
    if let Some(s) = start {
        zero_runs.push((s, n - 1));
    }

    let interior = |i: usize| i > 0 && i < n - 1;
    let mut zero_set = Vec::new();
    let mut dead = false;
    let any_zero = !zero_runs.is_empty();
    for &(s, e) in &zero_runs {
        let interior_count = (s..=e).filter(|&i| interior(i)).count();
        if interior_count >= 1 {
            zero_set.push((grid.coordinates[s], grid.coordinates[e]));
        }
        if interior_count >= 2 {
            dead = true;
        }
    }

    let class = if dead {
        PositivityKind::DeadCore
    } else if any_zero {
        PositivityKind::PositiveInterior
    } else {
        PositivityKind::InteriorOfCone
    };
    Ok(PositivityClass {
        class,
        min_value: u.min(),
        boundary_min,
        zero_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec};
    use crate::weights::{corpus_exact, make_weight, CorpusCase, ExactSolutions};
    use std::f64::consts::PI;

    fn pi_grid(n: usize) -> Arc<Grid> {
        build_grid(GridSpec::interval(0.0, PI), n).unwrap()
    }

    #[test]
    fn linear_neumann_recovers_cosine() {
        let g = pi_grid(1024);
        let rhs = Field::from_fn(&g, |x| x.cos());
        let w0 = solve_linear_neumann(&g, &rhs).unwrap();
        let exact = Field::from_fn(&g, |x| x.cos());
        assert!(w0.max_diff(&exact) < 1e-5);
        let zero = solve_linear_neumann(&g, &Field::constant(&g, 0.0)).unwrap();
        assert!(zero.max_abs() < 1e-14);
    }

    #[test]
    fn linear_neumann_rejects_incompatible() {
        let g = pi_grid(128);
        let rhs = Field::from_fn(&g, |x| 2.0 - 8.0 * x.cos().powi(2));
        assert!(matches!(
            solve_linear_neumann(&g, &rhs),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn large_supersolution_on_remark_q0() {
        let g = pi_grid(512);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let bar = large_supersolution(&g, &w, 0.5, 10.0).unwrap();
        assert!(bar.min() >= 10.0);
        let res = crate::grid::residual(&g, &w.field, 0.5, &bar).unwrap();
        let tol = 1e-8 * residual_scale(&w, 0.5, &bar);
        assert!(res.values.iter().all(|&r| r >= -tol));
        // monotone in floor
        let bar2 = large_supersolution(&g, &w, 0.5, 50.0).unwrap();
        assert!(bar2.min() >= 50.0);
    }

    #[test]
    fn large_supersolution_for_pure_negative_weight() {
        let g = pi_grid(128);
        let w = Weight::sampled(Field::constant(&g, -1.0));
        let bar = large_supersolution(&g, &w, 0.5, 1.0).unwrap();
        let res = crate::grid::residual(&g, &w.field, 0.5, &bar).unwrap();
        assert!(res.min() >= 0.0);
    }

    #[test]
    fn branch_extension_identity_and_constants() {
        let g = pi_grid(64);
        let u0 = Field::from_fn(&g, |x| 1.0 + 0.3 * x.sin());
        let same = branch_extension_subsolution(&u0, 0.6, 0.6).unwrap();
        assert!(same.max_diff(&u0) < 1e-14);
        let c = Field::constant(&g, 2.0);
        let q0 = 0.5;
        let q = 0.75;
        let gamma: f64 = (1.0 - q0) / (1.0 - q);
        let expect = gamma.powf(-1.0 / (1.0 - q)) * 2.0f64.powf(gamma);
        let ext = branch_extension_subsolution(&c, q0, q).unwrap();
        assert!((ext.values[10] - expect).abs() < 1e-14);
        assert!(branch_extension_subsolution(&c, 0.75, 0.5).is_err());
    }

    #[test]
    fn classify_positivity_cases() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 1025).unwrap();
        let one = Field::constant(&g, 1.0);
        assert_eq!(
            classify_positivity(&one, 1e-9).unwrap().class,
            PositivityKind::InteriorOfCone
        );
        let ex = corpus_exact(&CorpusCase::TiCubic { q: 0.5 }, &g).unwrap();
        let ExactSolutions::DeadCorePair { u1, .. } = &ex.solutions else {
            panic!()
        };
        // quartic touchdown: an edge within 2h needs a threshold far below
        // the h^4-scale values just outside the core
        let cls = classify_positivity(u1, 1e-12).unwrap();
        assert_eq!(cls.class, PositivityKind::DeadCore);
        let (l, r) = cls.zero_set[0];
        assert!((l + 2.0).abs() < 2.0 * g.h && (r + 1.0).abs() < 2.0 * g.h);

        let gp = pi_grid(512);
        let sin4 = Field::from_fn(&gp, |x| x.sin().powi(4) / 4.0);
        let cls = classify_positivity(&sin4, 1e-9).unwrap();
        assert_eq!(cls.class, PositivityKind::PositiveInterior);
        assert!(cls.zero_set.is_empty());

        let z = Field::constant(&gp, 0.0);
        assert_eq!(
            classify_positivity(&z, 1e-9).unwrap().class,
            PositivityKind::Trivial
        );
    }

    #[test]
    fn monotone_iterate_ti_cubic_reaches_cone_interior() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 513).unwrap();
        let ex = corpus_exact(&CorpusCase::TiCubic { q: 0.5 }, &g).unwrap();
        let ExactSolutions::DeadCorePair { sub_max, .. } = &ex.solutions else {
            panic!()
        };
        let sup = large_supersolution(&g, &ex.weight, 0.5, 2.0 * sub_max.max()).unwrap();
        let pair = SubSuperPair::new(sub_max.clone(), sup).unwrap();
        let params = SolveParams {
            tolerance: 1e-9,
            ..Default::default()
        };
        let u = monotone_iterate(&g, &ex.weight, 0.5, &pair, &params).unwrap();
        let cls = classify_positivity(&u, 1e-9).unwrap();
        assert_eq!(cls.class, PositivityKind::InteriorOfCone);
        // monotone limit dominates the subsolution
        for (a, b) in u.values.iter().zip(&sub_max.values) {
            assert!(*a >= *b - 1e-9);
        }
    }

    #[test]
    fn monotone_iterate_rejects_unordered() {
        let g = pi_grid(64);
        let hi = Field::constant(&g, 2.0);
        let lo = Field::constant(&g, 1.0);
        assert!(SubSuperPair::new(hi, lo).is_err());
    }

    #[test]
    fn newton_recovers_exact_remark_q0() {
        let g = pi_grid(2048);
        let ex = corpus_exact(&CorpusCase::RemarkQ0 { q: 0.5 }, &g).unwrap();
        let ExactSolutions::Single(u_exact) = &ex.solutions else {
            panic!()
        };
        let guess = Field::new(
            Arc::clone(&g),
            u_exact.values.iter().map(|v| v + 1e-3).collect(),
        )
        .unwrap();
        let params = SolveParams {
            tolerance: 1e-11,
            ..Default::default()
        };
        let u = newton_refine(&g, &ex.weight, 0.5, &guess, &params).unwrap();
        assert!(
            u.max_diff(u_exact) <= 1e-5,
            "max err {}",
            u.max_diff(u_exact)
        );
        assert!(newton_refine(&g, &ex.weight, 0.5, &Field::constant(&g, 0.0), &params).is_err());
    }

    #[test]
    fn energy_descent_recovers_one_sided_dead_core() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 1025).unwrap();
        let ex = corpus_exact(&CorpusCase::TiCubic { q: 0.5 }, &g).unwrap();
        let ExactSolutions::DeadCorePair { u1, u2, .. } = &ex.solutions else {
            panic!()
        };
        // init supported in (-2, 0): should settle on u2 (dead core on [1,2])
        let init = Field::from_fn(&g, |x| if x < 0.0 { 4.0 * (-x) * (2.0 + x) } else { 0.0 });
        let params = SolveParams {
            tolerance: 1e-9,
            max_iterations: 40_000,
            ..Default::default()
        };
        let run = minimize_energy(&g, &ex.weight, 0.5, &init, &params).unwrap();
        for k in 1..run.energies.len() {
            assert!(run.energies[k] <= run.energies[k - 1] + 1e-12);
        }
        let err = run.u.max_diff(u2);
        assert!(
            err <= 1e-3,
            "distance to u2: {err}; to u1: {}",
            run.u.max_diff(u1)
        );
        // init at the exact solution stays put
        let run2 = minimize_energy(&g, &ex.weight, 0.5, u1, &params).unwrap();
        // fixed point up to the discretization error of the sampled u1
        assert!(run2.u.max_diff(u1) <= 5e-4, "moved {}", run2.u.max_diff(u1));
    }

    #[test]
    fn energy_identity_at_converged_solution() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 1025).unwrap();
        let ex = corpus_exact(&CorpusCase::TiCubic { q: 0.5 }, &g).unwrap();
        let ExactSolutions::DeadCorePair { u1, .. } = &ex.solutions else {
            panic!()
        };
        let params = SolveParams {
            tolerance: 1e-10,
            max_iterations: 40_000,
            ..Default::default()
        };
        let run = minimize_energy(&g, &ex.weight, 0.5, u1, &params).unwrap();
        let dir = crate::grid::dirichlet_energy(&g, &run.u).unwrap();
        let pot: f64 = run
            .u
            .values
            .iter()
            .zip(&ex.weight.field.values)
            .zip(&g.cell_measures)
            .map(|((uv, av), m)| av * pow_pos(*uv, 1.5) * m)
            .sum();
        assert!(
            (dir - pot).abs() <= 1e-5 * dir.abs().max(pot.abs()),
            "∫|∇u|² = {dir}, ∫a u^{{q+1}} = {pot}"
        );
    }
}
