//! Explicit radial sub/supersolution assemblies: the a⁺-inside construction
//! (double quadrature for φ, z = (Cφ)^γ on the annulus, inner Dirichlet
//! solve, flux-matched glue) and the a⁻-inside construction (paraboloid
//! power z = (C_ε r² + δ)^{γ_ε} inside, w^{γ₀} outside, with the ε and δ
//! selection searches), plus the weak-subsolution verifier that handles the
//! gradient kink at the gluing radius through nodal hat test functions.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{apply_stiffness, pow_pos, Field, Grid, GridSpec};
use crate::tridiag::thomas_solve;
use crate::weights::{check_radial_conditions, Orientation, Weight};

/// One named inequality from a construction proof, with both sides.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ConditionEntry {
    fn new(name: &str, lhs: f64, rhs: f64, holds: bool) -> Self {
        ConditionEntry {
            name: name.to_string(),
            lhs,
            rhs,
            holds,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FluxCheck {
    pub v_prime: f64,
    pub z_prime: f64,
    pub ok: bool,
}

/// Radial ordering of a grid: node indices from the center of the ball side
/// outward, with the matching radial coordinates, edge weights and cell
/// measures. Interval grids may play either side as the ball.
struct RadialView {
    idx: Vec<usize>,
    rho: Vec<f64>,
    edges: Vec<f64>,
    measures: Vec<f64>,
    dim: u32,
    h: f64,
    outer: f64,
}

impl RadialView {
    fn new(grid: &Grid, side: Orientation) -> Result<Self> {
        match (grid.spec, side) {
            (GridSpec::Ball { radius, dim }, Orientation::InnerBall) => Ok(RadialView {
                idx: (0..grid.nodes()).collect(),
                rho: grid.coordinates.clone(),
                edges: grid.edge_weights.clone(),
                measures: grid.cell_measures.clone(),
                dim,
                h: grid.h,
                outer: radius,
            }),
            (GridSpec::Ball { .. }, Orientation::OuterBall) => Err(Error::Precondition(
                "ball grids only support the natural inner-ball orientation".into(),
            )),
            (GridSpec::Interval { x0, x1 }, Orientation::InnerBall) => Ok(RadialView {
                idx: (0..grid.nodes()).collect(),
                rho: grid.coordinates.iter().map(|x| x - x0).collect(),
                edges: grid.edge_weights.clone(),
                measures: grid.cell_measures.clone(),
                dim: 1,
                h: grid.h,
                outer: x1 - x0,
            }),
            (GridSpec::Interval { x0, x1 }, Orientation::OuterBall) => Ok(RadialView {
                idx: (0..grid.nodes()).rev().collect(),
                rho: grid.coordinates.iter().rev().map(|x| x1 - x).collect(),
                edges: grid.edge_weights.iter().rev().cloned().collect(),
                measures: grid.cell_measures.iter().rev().cloned().collect(),
                dim: 1,
                h: grid.h,
                outer: x1 - x0,
            }),
        }
    }

    fn n(&self) -> usize {
        self.idx.len()
    }

    /// First view position with rho >= r0 (the snapped split node).
    fn split_at(&self, r0: f64) -> Result<usize> {
        let j0 = self
            .rho
            .iter()
            .position(|&r| r >= r0 - 1e-12 * self.outer)
            .ok_or_else(|| Error::Precondition(format!("split {r0} beyond the domain")))?;
        if j0 < 2 || j0 + 2 >= self.n() {
            return Err(Error::Precondition(format!(
                "split {r0} leaves too few nodes on one side"
            )));
        }
        Ok(j0)
    }

    fn gather(&self, w: &Weight) -> Vec<f64> {
        self.idx.iter().map(|&i| w.field.values[i]).collect()
    }

    fn scatter(&self, grid: &Arc<Grid>, view_values: &[f64]) -> Result<Field> {
        let mut values = vec![0.0; grid.nodes()];
        for (pos, &i) in self.idx.iter().enumerate() {
            values[i] = view_values[pos];
        }
        Field::new(Arc::clone(grid), values)
    }

    /// Trapezoid of f(y) y^{N-1} over [rho_j, R] for every j >= start.
    fn outer_integral(&self, f: &[f64], start: usize) -> Vec<f64> {
        let n = self.n();
        let nn = self.dim as f64 - 1.0;
        let mut out = vec![0.0; n];
        for j in (start..n - 1).rev() {
            let yl = f[j] * self.rho[j].powf(nn);
            let yr = f[j + 1] * self.rho[j + 1].powf(nn);
            out[j] = out[j + 1] + 0.5 * (self.rho[j + 1] - self.rho[j]) * (yl + yr);
        }
        out
    }
}

/// The a⁺-inside construction: C = (1-q)/(1+q), γ = 1/(1-q),
/// φ(r) = ∫_r^R t^{1-N} ∫_t^R a⁻ y^{N-1} dy dt, z = (Cφ)^γ on the annulus,
/// v the inner Dirichlet state solving -Δv = γ a v^q with v(R0) = z(R0).
/// The glued field is a strictly interior-positive weak subsolution of
/// (P_{γa, q}).
#[derive(Debug, Clone)]
pub struct CCConstruction {
    pub q: f64,
    pub r0: f64,
    pub c_const: f64,
    pub gamma: f64,
    /// φ on the annulus (zero-extended to the full grid)
    pub phi: Field,
    pub z: Field,
    pub v: Field,
    pub glued: Field,
    pub flux_check: FluxCheck,
}

impl CCConstruction {
    /// The same subsolution rescaled from weight γa to weight a.
    pub fn subsolution_for_weight_a(&self) -> Field {
        self.glued.scaled(self.gamma.powf(-1.0 / (1.0 - self.q)))
    }
}

pub fn build_cc(
    grid: &Arc<Grid>,
    w: &Weight,
    q: f64,
    r0: f64,
    side: Orientation,
) -> Result<CCConstruction> {
    grid.check_field(&w.field)?;
    let rep = check_radial_conditions(w, q, r0, side)?;
    if !rep.inferno_holds {
        return Err(Error::condition("inferno", rep.inferno_lhs, rep.inferno_rhs));
    }
    if !rep.cc_sign_ok {
        return Err(Error::condition("cc_sign_pattern", 0.0, 0.0));
    }
    if !rep.monotone_outer_ok {
        return Err(Error::condition("monotone_outer", 0.0, 0.0));
    }
    let view = RadialView::new(grid, side)?;
    let n = view.n();
    let j0 = view.split_at(r0)?;
    let snapped_r0 = view.rho[j0];

    let a_view = view.gather(w);
    let c_const = (1.0 - q) / (1.0 + q);
    let gamma = 1.0 / (1.0 - q);

    // φ by the double quadrature over the annulus
    let a_minus: Vec<f64> = a_view.iter().map(|v| (-v).max(0.0)).collect();
    let inner = view.outer_integral(&a_minus, j0);
    let nn = view.dim as f64 - 1.0;
    let integrand: Vec<f64> = inner
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            if j >= j0 {
                iv / view.rho[j].powf(nn)
            } else {
                0.0
            }
        })
        .collect();
    let mut phi = vec![0.0; n];
    for j in (j0..n - 1).rev() {
        phi[j] =
            phi[j + 1] + 0.5 * (view.rho[j + 1] - view.rho[j]) * (integrand[j] + integrand[j + 1]);
    }

    let mut z = vec![0.0; n];
    for item in z.iter_mut().enumerate().take(n).skip(j0) {
        *item.1 = (c_const * phi[item.0]).powf(gamma);
    }
    let z_r0 = z[j0];
    if z_r0 <= 0.0 {
        return Err(Error::Solver(
            "z(R0) not positive; a⁻ vanishes on the annulus".into(),
        ));
    }

    // inner Dirichlet solve: -Δv = γ a v^q on [0, R0], v(R0) = z(R0),
    // monotone iteration from the boundary constant upward. Computed in
    // units of z(R0) (boundary 1, weight γ z(R0)^{q-1} a) so that high-γ
    // cases, where z(R0) underflows toward roundoff, keep full relative
    // accuracy.
    let gamma_eff = gamma * z_r0.powf(q - 1.0);
    if !gamma_eff.is_finite() {
        return Err(Error::Solver(format!(
            "interface value z(R0) = {z_r0:.3e} too small to rescale"
        )));
    }
    let v_scaled = dirichlet_monotone_inner(&view, &a_view, q, gamma_eff, j0, snapped_r0)?;
    let v_inner: Vec<f64> = v_scaled.iter().map(|v| z_r0 * v).collect();

    // one-sided flux comparison at the interface, in scaled units
    let h = view.h;
    let vs_prime = (v_scaled[j0] - v_scaled[j0 - 1]) / h;
    let zs_prime = (z[j0 + 1] - z[j0]) / (h * z_r0);
    let zpp = (z[j0 + 2] - 2.0 * z[j0 + 1] + z[j0]) / (h * h * z_r0);
    let vpp = (v_scaled[j0] - 2.0 * v_scaled[j0 - 1] + v_scaled[j0 - 2]) / (h * h);
    let slack = 0.5 * h * (zpp.abs() + vpp.abs()) + 1e-10 * (1.0 + zs_prime.abs());
    let flux_check = FluxCheck {
        v_prime: vs_prime * z_r0,
        z_prime: zs_prime * z_r0,
        ok: vs_prime <= zs_prime + slack,
    };
    if !flux_check.ok {
        return Err(Error::condition(
            "flux_interface",
            flux_check.v_prime,
            flux_check.z_prime,
        ));
    }

    let mut glued = vec![0.0; n];
    glued[..j0].copy_from_slice(&v_inner[..j0]);
    glued[j0..].copy_from_slice(&z[j0..]);

    Ok(CCConstruction {
        q,
        r0: snapped_r0,
        c_const,
        gamma,
        phi: view.scatter(grid, &phi)?,
        z: view.scatter(grid, &z)?,
        v: view.scatter(grid, &v_inner)?,
        glued: view.scatter(grid, &glued)?,
        flux_check,
    })
}

/// Monotone iteration for -Δv = γ_eff a v^q on the ball part with Dirichlet
/// value 1 at the split node, from the boundary constant upward. The weight
/// is nonnegative inside (up to sampling tolerance), so the iteration map is
/// monotone for any λ ≥ 0; λ starts at the Lipschitz bound of the sampled
/// negative dips and doubles on a detected violation. Terminates on the
/// interior residual. Returns the view-space field filled on [0, j0].
fn dirichlet_monotone_inner(
    view: &RadialView,
    a_view: &[f64],
    q: f64,
    gamma_eff: f64,
    j0: usize,
    r0: f64,
) -> Result<Vec<f64>> {
    let boundary = 1.0f64;
    let max_a = a_view[..=j0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_aminus = a_view[..=j0].iter().fold(0.0f64, |m, v| m.max((-v).max(0.0)));
    let b_super = boundary
        .max(
            (gamma_eff * max_a * 2.0f64.powf(q) * r0 * r0 / (2.0 * view.dim as f64))
                .powf(1.0 / (1.0 - q)),
        )
        * 1.01
        + 1.0;
    let mut lambda = (q * gamma_eff * max_aminus * boundary.powf(q - 1.0)).max(1e-8);
    let mono_slack = 1e-13 * b_super;

    for _ in 0..40 {
        // (A + λM) v = M (γ_eff a v^q + λ v) + e_{j0-1} · boundary at j0-1
        let mut sub = vec![0.0; j0.saturating_sub(1)];
        let mut diag = vec![0.0; j0];
        for j in 0..j0 {
            let mut d = lambda * view.measures[j];
            if j > 0 {
                d += view.edges[j - 1];
            }
            d += view.edges[j];
            diag[j] = d;
            if j + 1 < j0 {
                sub[j] = -view.edges[j];
            }
        }
        let floor_coef = {
            let mut worst: f64 = 0.0;
            for j in 0..j0 {
                let mut d = 0.0;
                if j > 0 {
                    d += view.edges[j - 1];
                }
                d += view.edges[j];
                worst = worst.max(2.0 * d / view.measures[j]);
            }
            8.0 * f64::EPSILON * worst
        };
        let residual_max = |v: &[f64]| -> f64 {
            let mut worst = 0.0f64;
            for j in 0..j0 {
                let mut av = 0.0;
                if j > 0 {
                    av -= view.edges[j - 1] * (v[j - 1] - v[j]);
                }
                let right = if j + 1 < j0 { v[j + 1] } else { boundary };
                av -= view.edges[j] * (right - v[j]);
                let r = av / view.measures[j] - gamma_eff * a_view[j] * pow_pos(v[j], q);
                worst = worst.max(r.abs());
            }
            worst
        };
        let mut v = vec![boundary; j0];
        let mut converged = false;
        let mut ok = true;
        for it in 0..200_000usize {
            let mut rhs: Vec<f64> = (0..j0)
                .map(|j| {
                    view.measures[j] * (gamma_eff * a_view[j] * pow_pos(v[j], q) + lambda * v[j])
                })
                .collect();
            rhs[j0 - 1] += view.edges[j0 - 1] * boundary;
            let next = thomas_solve(&sub, &diag, &sub, &rhs)?;
            let mut min_step = f64::INFINITY;
            let mut vmax = 0.0f64;
            for (nv, ov) in next.iter().zip(&v) {
                min_step = min_step.min(nv - ov);
                vmax = vmax.max(*nv);
            }
            if min_step < -mono_slack || vmax > 2.2 * b_super {
                ok = false;
                break;
            }
            v = next;
            if it % 16 == 0 {
                let scale = 1.0 + gamma_eff * max_a * vmax.powf(q);
                if residual_max(&v) <= 1e-11 * scale + floor_coef * vmax {
                    converged = true;
                    break;
                }
            }
        }
        if ok && converged {
            let mut full = vec![0.0; view.n()];
            full[..j0].copy_from_slice(&v);
            full[j0] = boundary;
            return Ok(full);
        }
        if !ok {
            lambda *= 2.0;
        } else {
            return Err(Error::Solver("inner Dirichlet solve hit the cap".into()));
        }
    }
    Err(Error::Solver(
        "inner Dirichlet solve failed to stay monotone".into(),
    ))
}

/// The a⁻-inside construction of the interior-positive subsolution.
#[derive(Debug, Clone)]
pub struct Rad2Construction {
    pub q: f64,
    pub r0: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma_eps: f64,
    pub gamma0: f64,
    pub c_eps: f64,
    pub k_const: f64,
    /// u_{δ,ε} = C_ε ρ² + δ on the ball part (zero-extended)
    pub u_delta_eps: Field,
    pub z_inner: Field,
    pub w_outer: Field,
    pub v_outer: Field,
    pub glued: Field,
    pub condition_trail: Vec<ConditionEntry>,
}

impl Rad2Construction {
    pub fn subsolution_for_weight_a(&self) -> Field {
        self.glued
            .scaled(self.gamma_eps.powf(-1.0 / (1.0 - self.q)))
    }

    pub fn all_conditions_hold(&self) -> bool {
        self.condition_trail.iter().all(|c| c.holds)
    }
}

pub fn build_rad2(
    grid: &Arc<Grid>,
    w: &Weight,
    q: f64,
    r0: f64,
    side: Orientation,
) -> Result<Rad2Construction> {
    grid.check_field(&w.field)?;
    let rep = check_radial_conditions(w, q, r0, side)?;
    if !rep.sipi_holds {
        return Err(Error::condition("sipi", rep.sipi_lhs, rep.sipi_rhs));
    }
    if !rep.rad2_sign_ok {
        return Err(Error::condition("rad2_sign_pattern", 0.0, 0.0));
    }
    let view = RadialView::new(grid, side)?;
    let n = view.n();
    let j0 = view.split_at(r0)?;
    let r0s = view.rho[j0];
    let nn_dim = view.dim as f64;
    let a_view = view.gather(w);

    let norm_aminus = a_view[..=j0]
        .iter()
        .fold(0.0f64, |m, v| m.max((-v).max(0.0)));
    // J = ∫_{R0}^R a(y) y^{N-1} dy
    let j_int = view.outer_integral(&a_view, j0)[j0];
    if j_int <= 0.0 {
        return Err(Error::condition("annulus_mass_positive", j_int, 0.0));
    }

    let gamma0 = 1.0 / (1.0 - q);
    let gamma_eps_of = |eps: f64| (1.0 - eps) / (1.0 - q);
    let c_eps_of = |eps: f64| {
        let ge = gamma_eps_of(eps);
        (r0s.powf(2.0 * eps) / 2.0 * norm_aminus / (2.0 * (ge - 1.0) + nn_dim) + eps)
            .powf(1.0 / (1.0 - eps))
    };

    // (b): 2 C_ε^{1-ε} R0^N < R0^{2ε} J, by halving ε from q/2
    let mut eps = q / 2.0;
    let mut trail = Vec::new();
    let mut b_ok = false;
    let mut b_lhs = f64::NAN;
    let mut b_rhs = f64::NAN;
    for _ in 0..60 {
        let ce = c_eps_of(eps);
        b_lhs = 2.0 * ce.powf(1.0 - eps) * r0s.powf(nn_dim);
        b_rhs = r0s.powf(2.0 * eps) * j_int;
        if b_lhs < b_rhs {
            b_ok = true;
            break;
        }
        eps *= 0.5;
    }
    trail.push(ConditionEntry::new("b", b_lhs, b_rhs, b_ok));
    if !b_ok {
        return Err(Error::condition("b", b_lhs, b_rhs));
    }
    let gamma_eps = gamma_eps_of(eps);
    let c_eps = c_eps_of(eps);

    // (casa): min over a fine ball sample of
    //   4 C_ε² r² (γ_ε - 1)/(C_ε r² + δ) + 2N C_ε - ‖a⁻‖ (C_ε r² + δ)^ε > 0
    let casa_margin = |delta: f64| -> f64 {
        let samples = 4 * (j0 + 1);
        (0..=samples)
            .map(|k| {
                let r = r0s * k as f64 / samples as f64;
                let u = c_eps * r * r + delta;
                4.0 * c_eps * c_eps * r * r * (gamma_eps - 1.0) / u + 2.0 * nn_dim * c_eps
                    - norm_aminus * u.powf(eps)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut delta = 1.0;
    let mut casa_ok = false;
    let mut margin = f64::NAN;
    for _ in 0..60 {
        margin = casa_margin(delta);
        if margin > 0.0 {
            casa_ok = true;
            break;
        }
        delta *= 0.5;
    }
    trail.push(ConditionEntry::new("casa", margin, 0.0, casa_ok));
    if !casa_ok {
        return Err(Error::condition("casa", margin, 0.0));
    }

    // (a) at δ = 0 and (ad) at the chosen δ
    let u_at = |r: f64| c_eps * r * r + delta;
    let a_lhs = 2.0 * c_eps * r0s;
    let a_rhs = (c_eps * r0s * r0s).powf(eps) * j_int / r0s.powf(nn_dim - 1.0);
    trail.push(ConditionEntry::new("a", a_lhs, a_rhs, a_lhs < a_rhs));
    let ad_rhs = u_at(r0s).powf(eps) * j_int / r0s.powf(nn_dim - 1.0);
    trail.push(ConditionEntry::new("ad", a_lhs, ad_rhs, a_lhs < ad_rhs));

    // inner power profile and outer w^{γ₀}
    let mut z_inner = vec![0.0; n];
    let mut u_de = vec![0.0; n];
    for j in 0..=j0 {
        u_de[j] = u_at(view.rho[j]);
        z_inner[j] = u_de[j].powf(gamma_eps);
    }
    let inner_a = view.outer_integral(&a_view, j0);
    let nn1 = nn_dim - 1.0;
    let integrand: Vec<f64> = inner_a
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            if j >= j0 {
                iv / view.rho[j].powf(nn1)
            } else {
                0.0
            }
        })
        .collect();
    let mut phi = vec![0.0; n];
    for j in (j0..n - 1).rev() {
        phi[j] =
            phi[j + 1] + 0.5 * (view.rho[j + 1] - view.rho[j]) * (integrand[j] + integrand[j + 1]);
    }
    let k_const = gamma_eps / gamma0 * phi[j0] + u_at(r0s).powf(gamma_eps / gamma0);
    let mut w_outer = vec![0.0; n];
    let mut v_outer = vec![0.0; n];
    for j in j0..n {
        w_outer[j] = k_const - gamma_eps / gamma0 * phi[j];
        if w_outer[j] <= 0.0 {
            return Err(Error::Solver(format!(
                "outer profile w not positive at rho = {}",
                view.rho[j]
            )));
        }
        v_outer[j] = w_outer[j].powf(gamma0);
    }

    // continuity at R0 is algebraic: w(R0)^{γ₀} = u_{δ,ε}(R0)^{γ_ε}
    let cont_gap = (v_outer[j0] - z_inner[j0]).abs();
    trail.push(ConditionEntry::new(
        "continuity",
        cont_gap,
        1e-12 * z_inner[j0].max(1.0),
        cont_gap <= 1e-12 * z_inner[j0].max(1.0),
    ));

    // glue, then the discrete (laaa)/(ann) checks on the glued profile
    let mut glued = vec![0.0; n];
    glued[..=j0].copy_from_slice(&z_inner[..=j0]);
    glued[j0 + 1..].copy_from_slice(&v_outer[j0 + 1..]);
    let (laaa_min, ann_max) = {
        let mut az = vec![0.0; n];
        for (j, &e) in view.edges.iter().enumerate() {
            let d = e * (glued[j + 1] - glued[j]);
            az[j] -= d;
            az[j + 1] += d;
        }
        let mut laaa_min = f64::INFINITY;
        for j in 0..j0 {
            // Δ_h z - γ_ε ‖a⁻‖ z^q  with  Δ_h = -(A·)/m
            let val = -az[j] / view.measures[j] - gamma_eps * norm_aminus * pow_pos(z_inner[j], q);
            laaa_min = laaa_min.min(val);
        }
        let mut ann_max = f64::NEG_INFINITY;
        for j in j0 + 1..n - 1 {
            // -Δ_h v - γ_ε a v^q ≤ 0 wanted
            let val = az[j] / view.measures[j] - gamma_eps * a_view[j] * pow_pos(v_outer[j], q);
            ann_max = ann_max.max(val);
        }
        (laaa_min, ann_max)
    };
    let scale =
        1.0 + gamma_eps * norm_aminus.max(a_view.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let fd_tol = 50.0 * view.h * view.h * scale * (1.0 + glued.iter().fold(0.0f64, |m, &v| m.max(v)));
    trail.push(ConditionEntry::new("laaa", laaa_min, -fd_tol, laaa_min >= -fd_tol));
    trail.push(ConditionEntry::new("ann", ann_max, fd_tol, ann_max <= fd_tol));

    // (fin): z'(R0) ≤ v'(R0)
    let h = view.h;
    let z_prime = (z_inner[j0] - z_inner[j0 - 1]) / h;
    let v_prime = (v_outer[j0 + 1] - v_outer[j0]) / h;
    let zpp = (z_inner[j0] - 2.0 * z_inner[j0 - 1] + z_inner[j0 - 2]) / (h * h);
    let vpp = (v_outer[j0 + 2] - 2.0 * v_outer[j0 + 1] + v_outer[j0]) / (h * h);
    let slack = 0.5 * h * (zpp.abs() + vpp.abs()) + 1e-10 * (1.0 + v_prime.abs());
    trail.push(ConditionEntry::new(
        "fin",
        z_prime,
        v_prime + slack,
        z_prime <= v_prime + slack,
    ));

    Ok(Rad2Construction {
        q,
        r0: r0s,
        epsilon: eps,
        delta,
        gamma_eps,
        gamma0,
        c_eps,
        k_const,
        u_delta_eps: view.scatter(grid, &u_de)?,
        z_inner: view.scatter(grid, &z_inner)?,
        w_outer: view.scatter(grid, &w_outer)?,
        v_outer: view.scatter(grid, &v_outer)?,
        glued: view.scatter(grid, &glued)?,
        condition_trail: trail,
    })
}

/// Report of the weak-subsolution test against nodal hat functions.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResidualReport {
    pub max_weak_residual: f64,
    pub interface_flux_gap: f64,
    pub verdict: bool,
}

/// Tests the weak inequality ∫∇u·∇η - ∫ a u^q η ≤ tol·‖η‖ for every nodal
/// hat η ≥ 0, which is exactly the nodal residual (A u - M a u^q)_i / m_i.
/// The hat test absorbs a favorable gradient kink at a gluing radius; an
/// unfavorable kink shows up as a positive residual spike. When `interface`
/// names the gluing coordinate, the one-sided derivative jump there is
/// reported and must stay within its finite-difference slack.
pub fn verify_weak_subsolution(
    grid: &Grid,
    w: &Weight,
    q: f64,
    u: &Field,
    tol: f64,
    interface: Option<f64>,
) -> Result<ResidualReport> {
    grid.check_field(&w.field)?;
    grid.check_field(u)?;
    if u.min() < -1e-12 * u.max_abs() {
        return Err(Error::Precondition("u must be nonnegative".into()));
    }
    let au = apply_stiffness(grid, &u.values);
    let max_weak_residual = au
        .iter()
        .zip(&grid.cell_measures)
        .zip(u.values.iter().zip(&w.field.values))
        .map(|((lu, m), (uv, av))| lu / m - av * pow_pos(*uv, q))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut interface_flux_gap = 0.0;
    let mut gap_ok = true;
    if let Some(x_if) = interface {
        let j = grid
            .coordinates
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - x_if).abs().partial_cmp(&(*b - x_if).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if j >= 2 && j + 2 < grid.nodes() {
            let h = grid.h;
            let left = (u.values[j] - u.values[j - 1]) / h;
            let right = (u.values[j + 1] - u.values[j]) / h;
            // positive gap = concave kink = unfavorable for a subsolution
            interface_flux_gap = left - right;
            let lpp = (u.values[j] - 2.0 * u.values[j - 1] + u.values[j - 2]) / (h * h);
            let rpp = (u.values[j + 2] - 2.0 * u.values[j + 1] + u.values[j]) / (h * h);
            let slack = 0.5 * h * (lpp.abs() + rpp.abs()) + tol;
            gap_ok = interface_flux_gap <= slack;
        }
    }
    Ok(ResidualReport {
        max_weak_residual,
        interface_flux_gap,
        verdict: max_weak_residual <= tol && gap_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, integrate};
    use crate::solve::{
        classify_positivity, large_supersolution, monotone_iterate, PositivityKind, SolveParams,
        SubSuperPair,
    };
    use crate::weights::{corpus_exact, make_weight, CorpusCase, ExactSolutions};
    use std::f64::consts::PI;

    fn half_grid(n: usize) -> Arc<Grid> {
        build_grid(GridSpec::ball(PI / 2.0, 1), n).unwrap()
    }

    #[test]
    fn cc_succeeds_at_075_fails_at_05() {
        let g = half_grid(1537);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let r0 = PI / 6.0;
        let cc = build_cc(&g, &w, 0.75, r0, Orientation::InnerBall).unwrap();
        assert!(cc.flux_check.ok);
        // z(R) = 0 by the empty quadratures
        let zn = cc.z.values[g.nodes() - 1];
        assert_eq!(zn, 0.0);
        let err = build_cc(&g, &w, 0.5, r0, Orientation::InnerBall).unwrap_err();
        match err {
            Error::Condition { name, .. } => assert_eq!(name, "inferno"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn cc_glued_is_weak_subsolution_for_gamma_a() {
        let g = half_grid(1537);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let q = 0.75;
        let cc = build_cc(&g, &w, q, PI / 6.0, Orientation::InnerBall).unwrap();
        let gamma_w = Weight::sampled(w.field.scaled(cc.gamma));
        let scale = 1.0 + gamma_w.field.max_abs() * cc.glued.max().powf(q);
        let rep = verify_weak_subsolution(&g, &gamma_w, q, &cc.glued, 1e-3 * scale, Some(cc.r0))
            .unwrap();
        assert!(
            rep.verdict,
            "max weak residual {} gap {}",
            rep.max_weak_residual, rep.interface_flux_gap
        );
        // interior positivity (vanishes only at the outer boundary)
        let inner_min = cc.glued.values[..g.nodes() - 1]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(inner_min > 0.0);
    }

    #[test]
    fn cc_monotone_run_reaches_positive_solution() {
        let g = half_grid(769);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let q = 0.75;
        let cc = build_cc(&g, &w, q, PI / 6.0, Orientation::InnerBall).unwrap();
        let sub = cc.subsolution_for_weight_a();
        let sup = large_supersolution(&g, &w, q, 2.0 * sub.max().max(1.0)).unwrap();
        let pair = SubSuperPair::new(sub, sup).unwrap();
        let params = SolveParams {
            tolerance: 1e-8,
            max_iterations: 200_000,
            ..Default::default()
        };
        let u = monotone_iterate(&g, &w, q, &pair, &params).unwrap();
        let cls = classify_positivity(&u, 1e-9).unwrap();
        assert!(
            matches!(cls.class, PositivityKind::InteriorOfCone),
            "class {:?} min {} boundary {}",
            cls.class,
            cls.min_value,
            cls.boundary_min
        );
    }

    #[test]
    fn pola_identity_second_order() {
        // φ'' + (N-1)/r φ' = a⁻ on the annulus, via the double quadrature
        let mut prev = f64::NAN;
        for nodes in [385usize, 769, 1537] {
            let g = half_grid(nodes);
            let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
            let cc = build_cc(&g, &w, 0.75, PI / 6.0, Orientation::InnerBall).unwrap();
            let h = g.h;
            let j0 = g
                .coordinates
                .iter()
                .position(|&r| (r - cc.r0).abs() < 1e-12)
                .unwrap();
            let mut worst = 0.0f64;
            for j in (j0 + 1)..g.nodes() - 1 {
                let pp = (cc.phi.values[j + 1] - 2.0 * cc.phi.values[j] + cc.phi.values[j - 1])
                    / (h * h);
                let aminus = (-w.field.values[j]).max(0.0);
                worst = worst.max((pp - aminus).abs());
            }
            if prev.is_finite() {
                assert!(prev / worst > 3.0, "ratio {}", prev / worst);
            }
            prev = worst;
        }
    }

    #[test]
    fn rad2_on_rem_i01_trail_all_true() {
        let g = build_grid(GridSpec::ball(1.0, 1), 2048).unwrap();
        let w = make_weight(&g, &CorpusCase::RemI01 { sigma: 0.9 }).unwrap();
        let rad2 = build_rad2(&g, &w, 0.5, 0.5, Orientation::InnerBall).unwrap();
        for entry in &rad2.condition_trail {
            assert!(
                entry.holds,
                "condition {} fails: lhs {} rhs {}",
                entry.name, entry.lhs, entry.rhs
            );
        }
        // strictly positive glued subsolution with min = δ^{γ_ε} at the center
        assert!(rad2.glued.min() > 0.0);
        let center = rad2.glued.values[0];
        assert!((center - rad2.delta.powf(rad2.gamma_eps)).abs() < 1e-14 * center.max(1.0));
        assert_eq!(
            rad2.glued.values[0],
            rad2.glued.min(),
            "minimum should sit at the center"
        );
        // v'(R) = 0 within O(h): empty integral at the outer radius
        let n = g.nodes();
        let vp = (rad2.v_outer.values[n - 1] - rad2.v_outer.values[n - 2]) / g.h;
        assert!(vp.abs() < 10.0 * g.h * (1.0 + rad2.v_outer.max()));
    }

    #[test]
    fn rad2_monotone_run_interior_of_cone() {
        let g = build_grid(GridSpec::ball(1.0, 1), 1024).unwrap();
        let w = make_weight(&g, &CorpusCase::RemI01 { sigma: 0.9 }).unwrap();
        let q = 0.5;
        let rad2 = build_rad2(&g, &w, q, 0.5, Orientation::InnerBall).unwrap();
        let sub = rad2.subsolution_for_weight_a();
        let sup = large_supersolution(&g, &w, q, (2.0 * sub.max()).max(1.0)).unwrap();
        let pair = SubSuperPair::new(sub, sup).unwrap();
        let params = SolveParams {
            tolerance: 1e-8,
            max_iterations: 400_000,
            ..Default::default()
        };
        let u = monotone_iterate(&g, &w, q, &pair, &params).unwrap();
        let cls = classify_positivity(&u, 1e-9).unwrap();
        assert_eq!(cls.class, PositivityKind::InteriorOfCone);
    }

    #[test]
    fn rad2_rejects_when_sipi_fails() {
        // sipi lhs = 1/3 at q = 1/2: σ = 0.25 < 1/3 breaks it
        let g = build_grid(GridSpec::ball(1.0, 1), 512).unwrap();
        let w = make_weight(&g, &CorpusCase::RemI01 { sigma: 0.25 }).unwrap();
        let err = build_rad2(&g, &w, 0.5, 0.5, Orientation::InnerBall).unwrap_err();
        match err {
            Error::Condition { name, .. } => assert_eq!(name, "sipi"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn weak_verifier_accepts_solutions_rejects_supersolutions() {
        let g = build_grid(GridSpec::interval(0.0, PI), 1024).unwrap();
        let ex = corpus_exact(&CorpusCase::RemarkQ0 { q: 0.5 }, &g).unwrap();
        let ExactSolutions::Single(u) = &ex.solutions else {
            panic!()
        };
        let rep = verify_weak_subsolution(&g, &ex.weight, 0.5, u, 1e-4, None).unwrap();
        assert!(rep.verdict, "max weak residual {}", rep.max_weak_residual);
        let sup = large_supersolution(&g, &ex.weight, 0.5, 1.0).unwrap();
        let scale = 1.0 + ex.weight.field.max_abs() * sup.max().powf(0.5);
        let rep2 = verify_weak_subsolution(&g, &ex.weight, 0.5, &sup, 1e-6 * scale, None).unwrap();
        assert!(!rep2.verdict);
        assert!(rep2.max_weak_residual > 0.0);
    }

    #[test]
    fn cc_monotone_in_q() {
        let g = half_grid(769);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        for q in [0.72, 0.8, 0.9] {
            assert!(
                build_cc(&g, &w, q, PI / 6.0, Orientation::InnerBall).is_ok(),
                "cc should succeed at q = {q}"
            );
        }
    }

    #[test]
    fn interval_outer_ball_orientation_works() {
        // the right part plays the ball: a = -1 there, σ on the left annulus
        let g = build_grid(GridSpec::interval(0.0, 1.0), 1024).unwrap();
        let w = Weight::sampled(Field::from_fn(&g, |x| if x > 0.5 { -1.0 } else { 0.9 }));
        let rad2 = build_rad2(&g, &w, 0.5, 0.5, Orientation::OuterBall).unwrap();
        assert!(rad2.all_conditions_hold());
        assert!(rad2.glued.min() > 0.0);
        // the center of the "ball" is the right endpoint
        let n = g.nodes();
        assert_eq!(rad2.glued.values[n - 1], rad2.glued.min());
    }

    #[test]
    fn quadrature_volume_match() {
        // the half-domain weight integrates to the full-domain value
        let g = half_grid(1537);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let total = integrate(&g, &w.field).unwrap();
        assert!((total + 2.0 * PI).abs() < 1e-5, "∫a = {total}");
    }
}
