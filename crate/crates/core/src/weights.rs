//! Weight construction: the closed-form corpus cases, generic sampled /
//! piecewise-constant / delta-family weights, and the hypothesis and radial
//! condition checkers (H0), (H1), (H1'), (cq)/(inferno), (sipi), K(a).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{integrate, Field, Grid, GridSpec};

pub const SIGN_TOL_REL: f64 = 1e-12;

/// Closed-form weights from the corpus. Each case validates its parameter
/// ranges and knows which grid kinds it can be sampled on.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case")]
pub enum CorpusCase {
    /// a(x) = r^{1-2/r} (1 - r cos²x) on (0, π) with r = 2/(1-q);
    /// u = sin^r x / r is an exact positive solution. Also usable on the
    /// half-domain ball(π/2, 1) about the symmetry center π/2.
    #[serde(rename = "remark-q0")]
    RemarkQ0 { q: f64 },
    /// The dead-core construction on (-2, 2) for q ∈ [1/3, 1): cubic p.
    #[serde(rename = "ti-cubic")]
    TiCubic { q: f64 },
    /// Same for q ∈ (0, 1/3): quartic p_K, K scanned until the weight
    /// changes sign with negative integral.
    #[serde(rename = "ti-quartic")]
    TiQuartic { q: f64, k: f64 },
    /// a = σ χ_{A_{1/2,1}} - χ_{B_{1/2}} on the unit ball.
    #[serde(rename = "rem-I01")]
    RemI01 { sigma: f64 },
}

impl CorpusCase {
    pub fn analytic_solution_available(&self) -> bool {
        !matches!(self, CorpusCase::RemI01 { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorpusCase::RemarkQ0 { .. } => "remark-q0",
            CorpusCase::TiCubic { .. } => "ti-cubic",
            CorpusCase::TiQuartic { .. } => "ti-quartic",
            CorpusCase::RemI01 { .. } => "rem-I01",
        }
    }
}

#[derive(Debug, Clone)]
pub enum WeightKind {
    Corpus(CorpusCase),
    Sampled,
    PiecewiseConstant,
    /// a_δ = b₁ - δ b₂ with b₁, b₂ ≥ 0.
    DeltaFamily { delta: f64 },
}

/// The coefficient a(x), realized as samples on a grid.
#[derive(Debug, Clone)]
pub struct Weight {
    pub field: Field,
    pub kind: WeightKind,
}

impl Weight {
    pub fn sampled(field: Field) -> Self {
        Weight {
            field,
            kind: WeightKind::Sampled,
        }
    }

    /// Regions as (from, to, value); coordinates outside all regions get 0.
    pub fn piecewise_constant(grid: &Arc<Grid>, regions: &[(f64, f64, f64)]) -> Self {
        let field = Field::from_fn(grid, |x| {
            regions
                .iter()
                .find(|(a, b, _)| x >= *a && x <= *b)
                .map(|(_, _, v)| *v)
                .unwrap_or(0.0)
        });
        Weight {
            field,
            kind: WeightKind::PiecewiseConstant,
        }
    }

    pub fn delta_family(b1: &Field, b2: &Field, delta: f64) -> Result<Self> {
        if b1.min() < 0.0 || b2.min() < 0.0 {
            return Err(Error::Precondition(
                "delta family needs b1, b2 nonnegative".into(),
            ));
        }
        b1.grid.check_field(b2)?;
        let values: Vec<f64> = b1
            .values
            .iter()
            .zip(&b2.values)
            .map(|(x, y)| x - delta * y)
            .collect();
        Ok(Weight {
            field: Field::new(Arc::clone(&b1.grid), values)?,
            kind: WeightKind::DeltaFamily { delta },
        })
    }
}

/// r = 2/(1-q).
pub fn sublinear_r(q: f64) -> f64 {
    2.0 / (1.0 - q)
}

/// Cubic coefficients (α, β, γ, δ) of the q ∈ [1/3, 1) dead-core corpus.
pub fn ti_cubic_coefficients(r: f64) -> (f64, f64, f64, f64) {
    let p2 = |e: f64| 2.0f64.powf(e);
    (
        -p2(r - 2.0) * (r + 1.0) / 3.0,
        p2(r - 3.0) * (3.0 * r + 1.0),
        -p2(r - 1.0) * (r - 1.0),
        p2(r - 3.0) / 3.0 * (24.0 / r + 5.0 * r - 13.0),
    )
}

/// Quartic coefficients (α, β, γ, δ, μ) of the q ∈ (0, 1/3) corpus.
pub fn ti_quartic_coefficients(r: f64, k: f64) -> (f64, f64, f64, f64, f64) {
    let p2 = |e: f64| 2.0f64.powf(e);
    let c = p2(r) / r - k;
    (
        3.0 * c + p2(r - 3.0) * (r + 7.0),
        -16.0 * c - p2(r - 3.0) * (6.0 * r + 38.0),
        30.0 * c + p2(r - 3.0) * (13.0 * r + 71.0),
        -24.0 * c - p2(r - 3.0) * (12.0 * r + 52.0),
        8.0 * c + k + p2(r - 3.0) * (4.0 * r + 12.0),
    )
}

pub struct TiPolynomials {
    pub r: f64,
    /// coefficients of p, lowest degree first
    pub p: Vec<f64>,
}

impl TiPolynomials {
    pub fn cubic(q: f64) -> Result<Self> {
        if !(1.0 / 3.0..1.0).contains(&q) {
            return Err(Error::Precondition(format!(
                "ti-cubic needs q in [1/3, 1), got {q}"
            )));
        }
        let r = sublinear_r(q);
        let (a, b, c, d) = ti_cubic_coefficients(r);
        Ok(TiPolynomials {
            r,
            p: vec![d, c, b, a],
        })
    }

    pub fn quartic(q: f64, k: f64) -> Result<Self> {
        if !(0.0..1.0 / 3.0).contains(&q) || q == 0.0 {
            return Err(Error::Precondition(format!(
                "ti-quartic needs q in (0, 1/3), got {q}"
            )));
        }
        if k <= 0.0 {
            return Err(Error::Precondition("ti-quartic needs K > 0".into()));
        }
        let r = sublinear_r(q);
        let (a, b, c, d, m) = ti_quartic_coefficients(r, k);
        Ok(TiPolynomials {
            r,
            p: vec![m, d, c, b, a],
        })
    }

    pub fn p(&self, x: f64) -> f64 {
        self.p.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn dp(&self, x: f64) -> f64 {
        self.p
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c)
    }

    pub fn ddp(&self, x: f64) -> f64 {
        self.p
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + (i * (i - 1)) as f64 * c)
    }

    pub fn f(&self, x: f64) -> f64 {
        (x + 1.0).powf(self.r) / self.r
    }

    /// Weight value at |x| ∈ [0, 2] (the even reflection handles x < 0).
    pub fn weight_at(&self, x: f64, q: f64) -> f64 {
        let y = x.abs();
        if y <= 1.0 {
            -(self.r - 1.0) * self.r.powf(q)
        } else {
            -self.ddp(y) / self.p(y).powf(q)
        }
    }

    /// The dead-core solution u₁: 0 on [-2,-1], f on [-1,1], p on [1,2].
    pub fn u1(&self, x: f64) -> f64 {
        if x <= -1.0 {
            0.0
        } else if x <= 1.0 {
            self.f(x)
        } else {
            self.p(x)
        }
    }
}

/// Scans K geometrically until a_K changes sign on (1,2) and ∫_Ω a_K < 0.
pub fn ti_quartic_select_k(grid: &Arc<Grid>, q: f64) -> Result<f64> {
    let mut k = 1.0f64;
    for _ in 0..60 {
        if let Ok(poly) = TiPolynomials::quartic(q, k) {
            let w = Field::from_fn(grid, |x| poly.weight_at(x, q));
            let changes = poly.weight_at(2.0, q) > 0.0;
            let positive_p = grid
                .coordinates
                .iter()
                .filter(|&&x| x.abs() >= 1.0)
                .all(|&x| poly.p(x.abs()) > 0.0);
            if changes && positive_p {
                let total = integrate(grid, &w)?;
                if total < 0.0 {
                    return Ok(k);
                }
            }
        }
        k *= 2.0;
    }
    Err(Error::Solver("no valid K found for ti-quartic".into()))
}

/// Samples a corpus weight on the grid.
pub fn make_weight(grid: &Arc<Grid>, case: &CorpusCase) -> Result<Weight> {
    let field = match case {
        CorpusCase::RemarkQ0 { q } => {
            if !(0.0 < *q && *q < 1.0) {
                return Err(Error::Precondition(format!(
                    "remark-q0 needs q in (0,1), got {q}"
                )));
            }
            let r = sublinear_r(*q);
            let scale = r.powf(1.0 - 2.0 / r);
            match grid.spec {
                GridSpec::Interval { x0, x1 } => {
                    let ok = (x0 - 0.0).abs() < 1e-9 && (x1 - std::f64::consts::PI).abs() < 1e-9;
                    if !ok {
                        return Err(Error::Precondition(
                            "remark-q0 lives on the interval (0, π)".into(),
                        ));
                    }
                    Field::from_fn(grid, |x| scale * (1.0 - r * x.cos().powi(2)))
                }
                GridSpec::Ball { radius, dim } => {
                    // half-domain reduction about the symmetry center π/2
                    let ok = dim == 1 && (radius - std::f64::consts::PI / 2.0).abs() < 1e-9;
                    if !ok {
                        return Err(Error::Precondition(
                            "remark-q0 half-domain needs ball(π/2, N=1)".into(),
                        ));
                    }
                    Field::from_fn(grid, |rho| scale * (1.0 - r * rho.sin().powi(2)))
                }
            }
        }
        CorpusCase::TiCubic { q } => {
            require_interval_m22(grid, "ti-cubic")?;
            let poly = TiPolynomials::cubic(*q)?;
            Field::from_fn(grid, |x| poly.weight_at(x, *q))
        }
        CorpusCase::TiQuartic { q, k } => {
            require_interval_m22(grid, "ti-quartic")?;
            let poly = TiPolynomials::quartic(*q, *k)?;
            for &x in grid.coordinates.iter().filter(|&&x| x.abs() >= 1.0) {
                if poly.p(x.abs()) <= 0.0 {
                    return Err(Error::Precondition(format!(
                        "p_K not positive at |x| = {}",
                        x.abs()
                    )));
                }
            }
            Field::from_fn(grid, |x| poly.weight_at(x, *q))
        }
        CorpusCase::RemI01 { sigma } => {
            if *sigma <= 0.0 {
                return Err(Error::Precondition("rem-I01 needs σ > 0".into()));
            }
            match grid.spec {
                GridSpec::Ball { radius, .. } if (radius - 1.0).abs() < 1e-12 => {
                    Field::from_fn(grid, |r| if r < 0.5 { -1.0 } else { *sigma })
                }
                _ => {
                    return Err(Error::Precondition(
                        "rem-I01 lives on the unit ball".into(),
                    ))
                }
            }
        }
    };
    Ok(Weight {
        field,
        kind: WeightKind::Corpus(case.clone()),
    })
}

fn require_interval_m22(grid: &Grid, name: &str) -> Result<()> {
    match grid.spec {
        GridSpec::Interval { x0, x1 } if (x0 + 2.0).abs() < 1e-12 && (x1 - 2.0).abs() < 1e-12 => {
            Ok(())
        }
        _ => Err(Error::Precondition(format!(
            "{name} lives on the interval (-2, 2)"
        ))),
    }
}

/// Exact solutions attached to a corpus case.
pub enum ExactSolutions {
    /// remark-q0: the single strictly-interior-positive solution.
    Single(Field),
    /// ti corpus: the dead-core pair and the strictly positive subsolution
    /// max(u₁, u₂).
    DeadCorePair {
        u1: Field,
        u2: Field,
        sub_max: Field,
    },
}

pub struct CorpusExact {
    pub weight: Weight,
    pub q: f64,
    pub solutions: ExactSolutions,
}

/// Realizes a corpus case together with its exact solution field(s).
pub fn corpus_exact(case: &CorpusCase, grid: &Arc<Grid>) -> Result<CorpusExact> {
    if !case.analytic_solution_available() {
        return Err(Error::Precondition(format!(
            "corpus case {} has no analytic solution",
            case.name()
        )));
    }
    let weight = make_weight(grid, case)?;
    match case {
        CorpusCase::RemarkQ0 { q } => {
            let r = sublinear_r(*q);
            let u = match grid.spec {
                GridSpec::Interval { .. } => Field::from_fn(grid, |x| x.sin().powf(r) / r),
                GridSpec::Ball { .. } => Field::from_fn(grid, |rho| rho.cos().powf(r) / r),
            };
            Ok(CorpusExact {
                weight,
                q: *q,
                solutions: ExactSolutions::Single(u),
            })
        }
        CorpusCase::TiCubic { q } | CorpusCase::TiQuartic { q, .. } => {
            let poly = match case {
                CorpusCase::TiCubic { .. } => TiPolynomials::cubic(*q)?,
                CorpusCase::TiQuartic { k, .. } => TiPolynomials::quartic(*q, *k)?,
                _ => unreachable!(),
            };
            let u1 = Field::from_fn(grid, |x| poly.u1(x));
            let u2 = Field::from_fn(grid, |x| poly.u1(-x));
            let sub_max = Field::new(
                Arc::clone(grid),
                u1.values
                    .iter()
                    .zip(&u2.values)
                    .map(|(a, b)| a.max(*b))
                    .collect(),
            )?;
            Ok(CorpusExact {
                weight,
                q: *q,
                solutions: ExactSolutions::DeadCorePair { u1, u2, sub_max },
            })
        }
        CorpusCase::RemI01 { .. } => unreachable!(),
    }
}

/// (H0), (H1), (H1') flags and the positive-support components. (H+) is
/// recorded as satisfied: in sampled 1D/radial geometry every component
/// boundary meets the inner sphere condition.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HypothesisReport {
    pub integral: f64,
    pub changes_sign: bool,
    pub h0: bool,
    /// inclusive node-index ranges of the connected components of Ω₊
    pub positive_components: Vec<(usize, usize)>,
    pub h1: bool,
    pub h1_prime: bool,
    pub h_plus: bool,
}

pub fn check_hypotheses(w: &Weight) -> Result<HypothesisReport> {
    let grid = &w.field.grid;
    let integral = integrate(grid, &w.field)?;
    let tol = SIGN_TOL_REL * w.field.max_abs();
    let has_pos = w.field.values.iter().any(|&v| v > tol);
    let has_neg = w.field.values.iter().any(|&v| v < -tol);
    let changes_sign = has_pos && has_neg;

    let mut positive_components = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &v) in w.field.values.iter().enumerate() {
        if v > tol {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            positive_components.push((s, i - 1));
        }
    }
    if let Some(s) = start {
        positive_components.push((s, grid.nodes() - 1));
    }

    Ok(HypothesisReport {
        integral,
        changes_sign,
        h0: changes_sign && integral < 0.0,
        h1: !positive_components.is_empty(),
        h1_prime: positive_components.len() == 1,
        h_plus: true,
        positive_components,
    })
}

/// Which side of the split plays the inner ball B_{R0}. Interval grids may
/// use either side (the paper's 1D asymmetric splits); ball grids only the
/// natural one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Orientation {
    InnerBall,
    OuterBall,
}

/// The quantitative radial conditions of the ball theorems.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConditionReport {
    pub cq_threshold: f64,
    pub inferno_lhs: f64,
    pub inferno_rhs: f64,
    pub inferno_holds: bool,
    pub monotone_outer_ok: bool,
    pub sipi_lhs: f64,
    pub sipi_rhs: f64,
    pub sipi_holds: bool,
    /// a ≥ 0 on the ball side and a ≤ 0 on the annulus (a⁺ concentrated inside)
    pub cc_sign_ok: bool,
    /// a ≥ 0 on the annulus (a⁻ concentrated inside)
    pub rad2_sign_ok: bool,
    pub k: Option<f64>,
    pub kn_interval: Option<(f64, f64)>,
}

/// Exact overlap of each node cell with the ball-side region, in the grid's
/// volume element. Returns (ball_part, annulus_part) per node.
fn region_measures(grid: &Grid, r0: f64, side: Orientation) -> (Vec<f64>, Vec<f64>) {
    let n = grid.nodes();
    let mut ball = vec![0.0; n];
    let mut annulus = vec![0.0; n];
    match grid.spec {
        GridSpec::Interval { x0, x1 } => {
            let h = grid.h;
            for i in 0..n {
                let l = if i == 0 { x0 } else { x0 + (i as f64 - 0.5) * h };
                let r = if i == n - 1 {
                    x1
                } else {
                    x0 + (i as f64 + 0.5) * h
                };
                let left_part = (r.min(r0) - l).max(0.0);
                let cell = r - l;
                let (b, a) = match side {
                    Orientation::InnerBall => (left_part, cell - left_part),
                    Orientation::OuterBall => (cell - left_part, left_part),
                };
                ball[i] = b;
                annulus[i] = a;
            }
        }
        GridSpec::Ball { radius, dim } => {
            let h = grid.h;
            let omega = GridSpec::sphere_constant(dim);
            let nn = dim as f64;
            let vol = |a: f64, b: f64| {
                if b <= a {
                    0.0
                } else {
                    omega * (b.powf(nn) - a.powf(nn)) / nn
                }
            };
            for i in 0..n {
                let l = if i == 0 { 0.0 } else { (i as f64 - 0.5) * h };
                let r = if i == n - 1 {
                    radius
                } else {
                    ((i as f64 + 0.5) * h).min(radius)
                };
                ball[i] = vol(l.min(r0), r.min(r0));
                annulus[i] = vol(l, r) - ball[i];
            }
        }
    }
    (ball, annulus)
}

/// Evaluates (cq)/(inferno), the outer monotonicity, (sipi), K(a) and the
/// Corollary KN interval for the split at `r0`.
pub fn check_radial_conditions(
    w: &Weight,
    q: f64,
    r0: f64,
    side: Orientation,
) -> Result<ConditionReport> {
    let grid = &w.field.grid;
    let (lo, hi) = match grid.spec {
        GridSpec::Interval { x0, x1 } => (x0, x1),
        GridSpec::Ball { radius, .. } => (0.0, radius),
    };
    if !(lo < r0 && r0 < hi) {
        return Err(Error::Precondition(format!(
            "split point {r0} outside the open domain ({lo}, {hi})"
        )));
    }
    if matches!(grid.spec, GridSpec::Ball { .. }) && side == Orientation::OuterBall {
        return Err(Error::Precondition(
            "ball grids only support the natural inner-ball orientation".into(),
        ));
    }
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Precondition(format!("q = {q} must lie in (0,1)")));
    }

    let a = &w.field.values;
    let max_abs = w.field.max_abs();
    let sign_tol = 1e-10 * max_abs;

    let (ball_m, ann_m) = region_measures(grid, r0, side);
    let sum = |f: &dyn Fn(f64) -> f64, m: &[f64]| -> f64 {
        a.iter().zip(m).map(|(&v, &mm)| f(v) * mm).sum()
    };
    let pos = |v: f64| v.max(0.0);
    let neg = |v: f64| (-v).max(0.0);
    let idt = |v: f64| v;

    let int_a: f64 = integrate(grid, &w.field)?;
    let int_abs: f64 = a
        .iter()
        .zip(&grid.cell_measures)
        .map(|(&v, &m)| v.abs() * m)
        .sum();
    let cq_threshold = if int_abs > 0.0 { -int_a / int_abs } else { f64::INFINITY };

    let ball_aplus = sum(&pos, &ball_m);
    let ann_aminus = sum(&neg, &ann_m);
    let ann_aplus = sum(&pos, &ann_m);
    let ann_a = sum(&idt, &ann_m);

    let inferno_lhs = (1.0 - q) / (1.0 + q) * ann_aminus;
    let inferno_rhs = ball_aplus;
    let inferno_holds = inferno_lhs <= inferno_rhs;

    // sign patterns for the two theorems
    let in_ball = |x: f64| match (grid.spec, side) {
        (GridSpec::Interval { .. }, Orientation::OuterBall) => x > r0,
        _ => x < r0,
    };
    let mut ball_nonneg = true;
    let mut annulus_nonpos = true;
    let mut annulus_nonneg = true;
    for (i, &x) in grid.coordinates.iter().enumerate() {
        if in_ball(x) {
            if a[i] < -sign_tol {
                ball_nonneg = false;
            }
        } else {
            if a[i] > sign_tol {
                annulus_nonpos = false;
            }
            if a[i] < -sign_tol {
                annulus_nonneg = false;
            }
        }
    }

    // a differentiable and nonincreasing outward on the annulus
    let slope_tol = 1e-8 * max_abs.max(1.0);
    let mut monotone_outer_ok = true;
    for i in 0..grid.nodes() - 1 {
        let (xl, xr) = (grid.coordinates[i], grid.coordinates[i + 1]);
        let both_annulus = !in_ball(xl) && !in_ball(xr);
        if both_annulus {
            let outward = match (grid.spec, side) {
                (GridSpec::Interval { .. }, Orientation::OuterBall) => a[i] - a[i + 1], // outward = decreasing x
                _ => a[i + 1] - a[i],
            };
            if outward > slope_tol * grid.h.max(1.0) {
                monotone_outer_ok = false;
            }
        }
    }

    // ‖a⁻‖_∞ over the ball side
    let ball_norm_aminus = grid
        .coordinates
        .iter()
        .enumerate()
        .filter(|(_, &x)| in_ball(x))
        .map(|(i, _)| neg(a[i]))
        .fold(0.0f64, f64::max);

    // ω_{N-1} R0^N, or the plain length of the ball side for intervals
    let n_dim = grid.spec.dim();
    let ball_geom = match grid.spec {
        GridSpec::Ball { dim, .. } => GridSpec::sphere_constant(dim) * r0.powi(dim as i32),
        GridSpec::Interval { x0, x1 } => match side {
            Orientation::InnerBall => r0 - x0,
            Orientation::OuterBall => x1 - r0,
        },
    };

    let sipi_lhs = (1.0 - q) / (2.0 * q + n_dim as f64 * (1.0 - q)) * ball_geom * ball_norm_aminus;
    let sipi_rhs = ann_aplus;
    let sipi_holds = sipi_lhs < sipi_rhs;

    let (k, kn_interval) = if ball_norm_aminus > 0.0 {
        let k = ann_a / (ball_geom * ball_norm_aminus);
        let kn = k * n_dim as f64;
        if kn < 1.0 && k > 0.0 {
            (Some(k), Some(((1.0 - kn) / (1.0 - kn + 2.0 * k), 1.0)))
        } else {
            (Some(k), None)
        }
    } else {
        (None, None)
    };

    Ok(ConditionReport {
        cq_threshold,
        inferno_lhs,
        inferno_rhs,
        inferno_holds,
        monotone_outer_ok,
        sipi_lhs,
        sipi_rhs,
        sipi_holds,
        cc_sign_ok: ball_nonneg && annulus_nonpos,
        rad2_sign_ok: annulus_nonneg,
        k,
        kn_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    fn pi_grid(n: usize) -> Arc<Grid> {
        build_grid(GridSpec::interval(0.0, PI), n).unwrap()
    }

    #[test]
    fn remark_q0_is_the_expected_formula() {
        let g = pi_grid(257);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        for (&x, &v) in g.coordinates.iter().zip(&w.field.values) {
            let expect = 2.0 - 8.0 * x.cos().powi(2);
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn remark_q0_hypotheses() {
        let g = pi_grid(2048);
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let h = check_hypotheses(&w).unwrap();
        assert!((h.integral + 2.0 * PI).abs() < 1e-6);
        assert!(h.changes_sign && h.h0 && h.h1 && h.h1_prime);
        assert_eq!(h.positive_components.len(), 1);
        let (s, e) = h.positive_components[0];
        let (xs, xe) = (g.coordinates[s], g.coordinates[e]);
        assert!((xs - PI / 3.0).abs() < 2.0 * g.h, "left edge {xs}");
        assert!((xe - 2.0 * PI / 3.0).abs() < 2.0 * g.h, "right edge {xe}");
    }

    #[test]
    fn constant_negative_weight_fails_h0() {
        let g = pi_grid(64);
        let w = Weight::sampled(Field::constant(&g, -1.0));
        let h = check_hypotheses(&w).unwrap();
        assert!(!h.changes_sign && !h.h0);
    }

    #[test]
    fn ti_cubic_coefficients_at_half() {
        let (a, b, c, d) = ti_cubic_coefficients(4.0);
        assert!((a + 20.0 / 3.0).abs() < 1e-12);
        assert!((b - 26.0).abs() < 1e-12);
        assert!((c + 24.0).abs() < 1e-12);
        assert!((d - 26.0 / 3.0).abs() < 1e-12);
        let poly = TiPolynomials::cubic(0.5).unwrap();
        assert!((poly.p(1.0) - 4.0).abs() < 1e-12);
        assert!((poly.dp(1.0) - 8.0).abs() < 1e-12);
        assert!((poly.ddp(1.0) - 12.0).abs() < 1e-12);
        assert!(poly.dp(2.0).abs() < 1e-12);
        assert!((poly.p(2.0) - 34.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ti_cubic_weight_continuity_and_components() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 2049).unwrap();
        let w = make_weight(&g, &CorpusCase::TiCubic { q: 0.5 }).unwrap();
        let poly = TiPolynomials::cubic(0.5).unwrap();
        let gap = (poly.weight_at(1.0 - 1e-13, 0.5) - poly.weight_at(1.0 + 1e-13, 0.5)).abs();
        assert!(gap <= 1e-8 * w.field.max_abs());
        let h = check_hypotheses(&w).unwrap();
        assert!(h.h0);
        assert_eq!(h.positive_components.len(), 2);
        assert!(!h.h1_prime);
        // a(1) = -6, a(2) = 28/sqrt(34/3)
        assert!((poly.weight_at(1.0, 0.5) + 6.0).abs() < 1e-12);
        let a2 = 28.0 / (34.0f64 / 3.0).sqrt();
        assert!((poly.weight_at(2.0, 0.5) - a2).abs() < 1e-12);
    }

    #[test]
    fn ti_cubic_exact_pair_values() {
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 1025).unwrap();
        let ex = corpus_exact(&CorpusCase::TiCubic { q: 0.5 }, &g).unwrap();
        let ExactSolutions::DeadCorePair { u1, u2, sub_max } = &ex.solutions else {
            panic!("expected pair")
        };
        let at = |f: &Field, x: f64| {
            let i = g
                .coordinates
                .iter()
                .position(|&c| (c - x).abs() < 1e-12)
                .unwrap();
            f.values[i]
        };
        assert_eq!(at(u1, -1.5), 0.0);
        assert!((at(u1, 0.0) - 0.25).abs() < 1e-14);
        assert!((at(u1, 2.0) - 34.0 / 3.0).abs() < 1e-12);
        assert!((at(u2, -2.0) - 34.0 / 3.0).abs() < 1e-12);
        assert!(sub_max.min() > 0.0);
        assert!((sub_max.min() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn ti_quartic_identities_and_positive_p() {
        let q = 0.2;
        let r = sublinear_r(q);
        let g = build_grid(GridSpec::interval(-2.0, 2.0), 513).unwrap();
        let k = ti_quartic_select_k(&g, q).unwrap();
        let poly = TiPolynomials::quartic(q, k).unwrap();
        let f1 = 2.0f64.powf(r) / r;
        assert!((poly.p(1.0) - f1).abs() < 1e-9 * f1.abs().max(1.0));
        assert!((poly.dp(1.0) - 2.0f64.powf(r - 1.0)).abs() < 1e-9);
        assert!((poly.ddp(1.0) - (r - 1.0) * 2.0f64.powf(r - 2.0)).abs() < 1e-9);
        assert!(poly.dp(2.0).abs() < 1e-9 * k.max(1.0));
        assert!((poly.p(2.0) - k).abs() < 1e-9 * k);
        let w = make_weight(&g, &CorpusCase::TiQuartic { q, k }).unwrap();
        let h = check_hypotheses(&w).unwrap();
        assert!(h.h0, "integral {}", h.integral);
    }

    #[test]
    fn h_prime_is_h_polynomial_identity() {
        // H(x) = (2-x)(x-1)², h(x) = (5-3x)(x-1): H' = h as polynomials.
        // H = -x³ + 4x² - 5x + 2 → H' = -3x² + 8x - 5; h = -3x² + 8x - 5.
        let h_coeffs = [-5.0, 8.0, -3.0]; // h, lowest first
        let big_h = [2.0, -5.0, 4.0, -1.0];
        for (i, hc) in h_coeffs.iter().enumerate() {
            let from_deriv = big_h[i + 1] * (i as f64 + 1.0);
            assert_eq!(*hc, from_deriv);
        }
    }

    #[test]
    fn rem_i01_integral_and_conditions() {
        let g = build_grid(GridSpec::ball(1.0, 1), 2048).unwrap();
        let w = make_weight(&g, &CorpusCase::RemI01 { sigma: 0.9 }).unwrap();
        let total = integrate(&g, &w.field).unwrap();
        assert!((total + 0.1).abs() < 1e-12, "∫a = {total}");
        let rep = check_radial_conditions(&w, 0.5, 0.5, Orientation::InnerBall).unwrap();
        // sipi: (0.5/1.5)·2·0.5·1 = 1/3 < 0.9
        assert!((rep.sipi_lhs - 1.0 / 3.0).abs() < 1e-12);
        assert!((rep.sipi_rhs - 0.9).abs() < 1e-12);
        assert!(rep.sipi_holds);
        let k = rep.k.unwrap();
        assert!((k - 0.9).abs() < 1e-12);
        let (lo, hi) = rep.kn_interval.unwrap();
        assert!((lo - 0.1 / 1.9).abs() < 1e-12);
        assert_eq!(hi, 1.0);
        assert!(rep.rad2_sign_ok);
        assert!(!rep.cc_sign_ok); // a < 0 on the inner ball here
    }

    #[test]
    fn remark_q0_half_domain_conditions() {
        let g = build_grid(GridSpec::ball(PI / 2.0, 1), 1537).unwrap();
        let w = make_weight(&g, &CorpusCase::RemarkQ0 { q: 0.5 }).unwrap();
        let r0 = PI / 6.0;
        let rep = check_radial_conditions(&w, 0.5, r0, Orientation::InnerBall).unwrap();
        let expected = 2.0 * PI / (2.0 * (2.0 * 3.0f64.sqrt() - 2.0 * PI / 3.0) + 2.0 * PI);
        assert!(
            (rep.cq_threshold - expected).abs() < 1e-6,
            "cq {} vs {expected}",
            rep.cq_threshold
        );
        assert!(!rep.inferno_holds, "inferno must fail at q = 0.5");
        let rep75 = check_radial_conditions(&w, 0.75, r0, Orientation::InnerBall).unwrap();
        assert!(rep75.inferno_holds);
        assert!(rep75.cc_sign_ok && rep75.monotone_outer_ok);
    }

    #[test]
    fn delta_family_integral_decreases() {
        let g = pi_grid(128);
        let b1 = Field::from_fn(&g, |x| if x > 2.0 { 1.0 } else { 0.0 });
        let b2 = Field::from_fn(&g, |x| (1.0 - x).max(0.0));
        let mut prev = f64::INFINITY;
        for delta in [0.5, 1.0, 2.0, 4.0] {
            let w = Weight::delta_family(&b1, &b2, delta).unwrap();
            let total = integrate(&g, &w.field).unwrap();
            assert!(total < prev);
            prev = total;
        }
    }
}
