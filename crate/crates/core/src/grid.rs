//! Discretized geometry: uniform 1D interval and radial-ball grids with a
//! Neumann finite-volume Laplacian, quadrature weights and residual
//! evaluation for -Δu = a(x) u^q.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

/// Domain geometry. `Ball { radius, dim }` models the radial half-problem on
/// [0, R] where `dim` is the spatial dimension N entering the radial
/// Laplacian u'' + (N-1)/r u' and the sphere constant ω_{N-1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Interval { x0: f64, x1: f64 },
    Ball { radius: f64, dim: u32 },
}

impl GridSpec {
    pub fn interval(x0: f64, x1: f64) -> Self {
        GridSpec::Interval { x0, x1 }
    }

    pub fn ball(radius: f64, dim: u32) -> Self {
        GridSpec::Ball { radius, dim }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        if nodes < MIN_NODES {
            return Err(Error::InvalidSpec(format!(
                "nodes = {nodes}, need at least {MIN_NODES}"
            )));
        }
        match *self {
            GridSpec::Interval { x0, x1 } => {
                if !(x0.is_finite() && x1.is_finite() && x0 < x1) {
                    return Err(Error::InvalidSpec(format!(
                        "interval needs x0 < x1, got ({x0}, {x1})"
                    )));
                }
            }
            GridSpec::Ball { radius, dim } => {
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(Error::InvalidSpec(format!("ball needs R > 0, got {radius}")));
                }
                if dim < 1 {
                    return Err(Error::InvalidSpec("ball needs N >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Surface area of the unit sphere in R^N; ω_0 = 2 (two-point sphere).
    pub fn sphere_constant(dim: u32) -> f64 {
        // ω_{N-1} = 2 π^{N/2} / Γ(N/2)
        match dim {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            3 => 4.0 * std::f64::consts::PI,
            n => {
                let half = n as f64 / 2.0;
                2.0 * std::f64::consts::PI.powf(half) / gamma(half)
            }
        }
    }

    /// Analytic measure of the domain (length or ball volume).
    pub fn volume(&self) -> f64 {
        match *self {
            GridSpec::Interval { x0, x1 } => x1 - x0,
            GridSpec::Ball { radius, dim } => {
                Self::sphere_constant(dim) * radius.powi(dim as i32) / dim as f64
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            GridSpec::Interval { .. } => "interval",
            GridSpec::Ball { .. } => "ball",
        }
    }

    pub fn dim(&self) -> u32 {
        match self {
            GridSpec::Interval { .. } => 1,
            GridSpec::Ball { dim, .. } => *dim,
        }
    }
}

fn gamma(x: f64) -> f64 {
    // Lanczos approximation; only needed for N > 3.
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = COEF[0];
        let t = x + G + 0.5;
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Uniform grid with finite-volume cell measures. `edge_weights[i]` is the
/// conductance of the face between nodes i and i+1 (face area / h), so the
/// stiffness form f^T A g = Σ_i edge_weights[i] (f_{i+1}-f_i)(g_{i+1}-g_i)
/// is exactly symmetric under the cell measures for every N.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: GridSpec,
    pub coordinates: Vec<f64>,
    pub cell_measures: Vec<f64>,
    pub edge_weights: Vec<f64>,
    pub h: f64,
}

impl Grid {
    pub fn nodes(&self) -> usize {
        self.coordinates.len()
    }

    pub fn volume(&self) -> f64 {
        self.cell_measures.iter().sum()
    }

    pub fn check_field(&self, f: &Field) -> Result<()> {
        if f.values.len() != self.nodes() || f.grid.spec != self.spec {
            return Err(Error::GridMismatch(format!(
                "field on {} ({} nodes) used with {} ({} nodes)",
                f.grid.spec.kind_name(),
                f.values.len(),
                self.spec.kind_name(),
                self.nodes()
            )));
        }
        Ok(())
    }
}

/// Grid function: one value per node.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-node grid",
                values.len(),
                grid.nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("field contains non-finite values".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.coordinates.iter().map(|&x| f(x)).collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Field {
            grid: Arc::clone(grid),
            values: vec![c; grid.nodes()],
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Max-norm distance to another field on the same grid.
    pub fn max_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Two-column CSV with a geometry header line.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(
            out,
            "# kind={} N={} nodes={}",
            g.spec.kind_name(),
            g.spec.dim(),
            g.nodes()
        )?;
        for (x, v) in g.coordinates.iter().zip(&self.values) {
            writeln!(out, "{:.17e},{:.17e}", x, v)?;
        }
        Ok(())
    }
}

/// Builds the uniform grid for a spec. Cell measures are the exact integrals
/// of the volume element over each node's cell, so they tile the domain
/// measure to roundoff for any node count.
pub fn build_grid(spec: GridSpec, nodes: usize) -> Result<Arc<Grid>> {
    spec.validate(nodes)?;
    let n = nodes;
    let (lo, hi) = match spec {
        GridSpec::Interval { x0, x1 } => (x0, x1),
        GridSpec::Ball { radius, .. } => (0.0, radius),
    };
    let h = (hi - lo) / (n - 1) as f64;
    let coordinates: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + i as f64 * h
            }
        })
        .collect();

    let mut cell_measures = vec![0.0; n];
    let mut edge_weights = vec![0.0; n - 1];
    match spec {
        GridSpec::Interval { .. } => {
            for i in 0..n {
                cell_measures[i] = if i == 0 || i == n - 1 { h / 2.0 } else { h };
            }
            for w in edge_weights.iter_mut() {
                *w = 1.0 / h;
            }
        }
        GridSpec::Ball { radius, dim } => {
            let omega = GridSpec::sphere_constant(dim);
            let nn = dim as f64;
            let cell_edge = |i: usize| -> f64 {
                // boundary of cell i on the right: clamped to [0, R]
                ((i as f64 + 0.5) * h).min(radius)
            };
            let mut left = 0.0f64;
            for i in 0..n {
                let right = if i == n - 1 { radius } else { cell_edge(i) };
                cell_measures[i] = omega * (right.powf(nn) - left.powf(nn)) / nn;
                left = right;
            }
            for (i, w) in edge_weights.iter_mut().enumerate() {
                let face = (i as f64 + 0.5) * h;
                *w = omega * face.powf(nn - 1.0) / h;
            }
        }
    }
    Ok(Arc::new(Grid {
        spec,
        coordinates,
        cell_measures,
        edge_weights,
        h,
    }))
}

/// Quadrature under the grid measure: Σ f_i m_i. Second-order for smooth f;
/// exact for constants.
pub fn integrate(grid: &Grid, f: &Field) -> Result<f64> {
    grid.check_field(f)?;
    Ok(f.values
        .iter()
        .zip(&grid.cell_measures)
        .map(|(v, m)| v * m)
        .sum())
}

/// Σ f_i g_i m_i without allocating the product field.
pub fn integrate_product(grid: &Grid, f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .zip(&grid.cell_measures)
        .map(|((a, b), m)| a * b * m)
        .sum()
}

/// Applies the stiffness matrix A = M·(-Δ_h): (A u)_i per node. Symmetric,
/// positive semidefinite, annihilates constants exactly.
pub fn apply_stiffness(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    for (i, &w) in grid.edge_weights.iter().enumerate() {
        let d = w * (u[i + 1] - u[i]);
        out[i] -= d;
        out[i + 1] += d;
    }
    out
}

/// Roundoff floor of the pointwise residual: applying the second-difference
/// stencil to values of size `umax` cannot resolve below ~ε·umax·‖Δ_h‖.
pub fn residual_roundoff_floor(grid: &Grid, umax: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let n = grid.nodes();
    for i in 0..n {
        let mut d = 0.0;
        if i > 0 {
            d += grid.edge_weights[i - 1];
        }
        if i + 1 < n {
            d += grid.edge_weights[i];
        }
        worst = worst.max(2.0 * d / grid.cell_measures[i]);
    }
    8.0 * f64::EPSILON * umax.abs() * worst
}

/// Discrete Dirichlet energy ∫|∇u|² = u^T A u = Σ edges w (u_{i+1}-u_i)².
pub fn dirichlet_energy(grid: &Grid, u: &Field) -> Result<f64> {
    grid.check_field(u)?;
    Ok(grid
        .edge_weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let d = u.values[i + 1] - u.values[i];
            w * d * d
        })
        .sum())
}

/// Clamped power (max(u,0))^q; the nonnegative-solution convention.
#[inline]
pub fn pow_pos(u: f64, q: f64) -> f64 {
    if u > 0.0 {
        u.powf(q)
    } else if q == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Pointwise residual of the model equation: (-Δ_h u)_i - a_i (u_i^+)^q.
/// The operator divides the stiffness action by the cell measure, which at
/// r = 0 reproduces the regularized stencil Δu(0) = N u''(0) and at outer
/// boundaries the mirror ghost-node Neumann closure.
pub fn residual(grid: &Grid, a: &Field, q: f64, u: &Field) -> Result<Field> {
    grid.check_field(a)?;
    grid.check_field(u)?;
    if q < 0.0 {
        return Err(Error::Precondition(format!("q = {q} must be nonnegative")));
    }
    let au = apply_stiffness(grid, &u.values);
    let values: Vec<f64> = au
        .iter()
        .zip(&grid.cell_measures)
        .zip(u.values.iter().zip(&a.values))
        .map(|((lu, m), (uv, av))| lu / m - av * pow_pos(*uv, q))
        .collect();
    Ok(Field {
        grid: Arc::clone(&u.grid),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_grid_coordinates_and_measure() {
        let g = build_grid(GridSpec::interval(0.0, PI), 17).unwrap();
        assert!((g.coordinates[4] - PI / 4.0).abs() < 1e-14);
        assert!((g.volume() - PI).abs() < 1e-12 * PI);
    }

    #[test]
    fn ball_measures_tile_volume() {
        for (dim, nodes) in [(1u32, 33usize), (2, 57), (3, 64), (3, 111)] {
            let g = build_grid(GridSpec::ball(1.0, dim), nodes).unwrap();
            let exact = g.spec.volume();
            assert!(
                (g.volume() - exact).abs() <= 1e-10 * exact,
                "N={dim} nodes={nodes}: {} vs {exact}",
                g.volume()
            );
        }
        // N = 3, R = 1: volume 4π/3
        let g = build_grid(GridSpec::ball(1.0, 3), 40).unwrap();
        assert!((g.volume() - 4.0 * PI / 3.0).abs() < 1e-10);
        // N = 1, R = 1: ω_0 ∫_0^1 dr = 2
        let g = build_grid(GridSpec::ball(1.0, 1), 40).unwrap();
        assert!((g.volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_grid(GridSpec::interval(1.0, 0.0), 32).is_err());
        assert!(build_grid(GridSpec::interval(0.0, 1.0), 4).is_err());
        assert!(build_grid(GridSpec::ball(-1.0, 2), 32).is_err());
    }

    #[test]
    fn integrate_examples() {
        let g = build_grid(GridSpec::interval(0.0, PI), 2048).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((integrate(&g, &one).unwrap() - PI).abs() < 1e-12);

        let a = Field::from_fn(&g, |x| 2.0 - 8.0 * x.cos().powi(2));
        assert!((integrate(&g, &a).unwrap() + 2.0 * PI).abs() < 1e-6);

        let c = Field::from_fn(&g, |x| x.cos());
        assert!(integrate(&g, &c).unwrap().abs() < 1e-10);
    }

    #[test]
    fn neumann_kernel_is_constants() {
        for spec in [GridSpec::interval(-1.0, 3.0), GridSpec::ball(2.0, 3)] {
            let g = build_grid(spec, 65).unwrap();
            let u = Field::constant(&g, 4.2);
            let a = Field::constant(&g, 0.0);
            let r = residual(&g, &a, 0.7, &u).unwrap();
            assert_eq!(r.max_abs(), 0.0);
        }
    }

    #[test]
    fn stiffness_is_self_adjoint_under_measure() {
        for spec in [
            GridSpec::interval(0.0, PI),
            GridSpec::ball(1.5, 2),
            GridSpec::ball(1.0, 4),
        ] {
            let g = build_grid(spec, 48).unwrap();
            let f = Field::from_fn(&g, |x| (1.3 * x).sin() + 0.2 * x * x);
            let gg = Field::from_fn(&g, |x| (0.7 * x).cos() - x);
            let af = apply_stiffness(&g, &f.values);
            let ag = apply_stiffness(&g, &gg.values);
            let lhs: f64 = af.iter().zip(&gg.values).map(|(x, y)| x * y).sum();
            let rhs: f64 = ag.iter().zip(&f.values).map(|(x, y)| x * y).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn residual_of_exact_solution_is_second_order() {
        // Remark (q0) at q = 1/2: a = 2 - 8 cos²x, u = sin⁴x / 4 is exact.
        let mut prev = f64::NAN;
        for nodes in [256usize, 512, 1024, 2048] {
            let g = build_grid(GridSpec::interval(0.0, PI), nodes).unwrap();
            let a = Field::from_fn(&g, |x| 2.0 - 8.0 * x.cos().powi(2));
            let u = Field::from_fn(&g, |x| x.sin().powi(4) / 4.0);
            let r = residual(&g, &a, 0.5, &u).unwrap().max_abs();
            if nodes == 1024 {
                assert!(r <= 1e-4, "residual {r} at 1024 nodes");
            }
            if prev.is_finite() {
                assert!(prev / r >= 3.5, "convergence ratio {} at {nodes}", prev / r);
            }
            prev = r;
        }
    }

    #[test]
    fn ball_radial_residual_second_order() {
        // u = (1 - r²)², N = 3: -Δu = 12 - 20 r². Interior nodes only: the
        // outer mirror closure is pointwise first order for generic fields
        // (u''' does not vanish at r = R here).
        let exact = |r: f64| 12.0 - 20.0 * r * r;
        let mut prev = f64::NAN;
        for nodes in [64usize, 128, 256, 512] {
            let g = build_grid(GridSpec::ball(1.0, 3), nodes).unwrap();
            let u = Field::from_fn(&g, |r| {
                let s = 1.0 - r * r;
                s * s
            });
            let a = Field::constant(&g, 0.0);
            let r = residual(&g, &a, 1.0, &u).unwrap();
            let err = r.values[..nodes - 1]
                .iter()
                .zip(&g.coordinates)
                .map(|(v, &x)| (v - exact(x)).abs())
                .fold(0.0f64, f64::max);
            if prev.is_finite() {
                assert!(prev / err > 3.4, "ratio {} at {nodes}", prev / err);
            }
            prev = err;
        }
    }
}
