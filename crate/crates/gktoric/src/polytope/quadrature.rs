//! Interior and boundary quadrature over labeled polytopes.
//!
//! The interior rule fans the polytope from an interior anchor over a
//! triangulation of each facet and applies tensor Gauss-Legendre points per
//! cone, with a quadratic grading toward the base facet and a smoothstep
//! grading toward the facet's own boundary. Integrands of type `L log L`
//! have bounded values but log-singular derivatives at the boundary; the
//! grading restores fast convergence there. All mapping Jacobians are
//! polynomial, so weight sums reproduce the exact volume to rounding.

use super::qpolytope::QPolytope;
use super::DelzantPolytope;
use crate::error::{Error, Result};
use crate::exact::rational::q_to_f64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_LEVEL: u32 = 1;
pub const MAX_LEVEL: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureTag {
    /// Lebesgue measure dx on the interior.
    InteriorDx,
    /// Label measure d sigma on the boundary.
    BoundarySigma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub tag: MeasureTag,
    pub level: u32,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// facet index per node for boundary rules
    pub facets: Option<Vec<usize>>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Parallel evaluation with a deterministic (ordered) reduction.
    pub fn integrate_par(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let vals: Vec<f64> = self
            .nodes
            .par_iter()
            .map(|x| f(x.as_slice()))
            .collect();
        vals.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Gauss-Legendre nodes and weights on (0, 1).
pub fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for k in 0..m {
        // Newton iteration from the Chebyshev estimate on (-1, 1).
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(m, x);
        nodes[m - 1 - k] = 0.5 * (x + 1.0);
        weights[m - 1 - k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn smoothstep(s: f64) -> (f64, f64) {
    (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s))
}

fn points_per_axis(level: u32, dim: usize) -> usize {
    2 * (level as usize + dim)
}

/// Graded rule on one cone (anchor g over a base simplex on the boundary).
fn cone_rule(
    anchor: &[f64],
    base: &[Vec<f64>],
    m: usize,
    nodes: &mut Vec<Vec<f64>>,
    weights: &mut Vec<f64>,
) {
    let n = anchor.len();
    assert_eq!(base.len(), n);
    // D = det[w2-w1, ..., wn-w1, g-w1]
    let mut cols: Vec<Vec<f64>> = base[1..]
        .iter()
        .map(|w| w.iter().zip(&base[0]).map(|(a, b)| a - b).collect())
        .collect();
    cols.push(anchor.iter().zip(&base[0]).map(|(a, b)| a - b).collect());
    let d = det_f64(&cols).abs();
    if d == 0.0 {
        return;
    }
    let (gl_n, gl_w) = gauss_legendre_01(m);
    // Tensor loop over (t, sigma_1..sigma_{n-1}).
    let axes = n; // 1 radial + (n-1) base axes
    let mut idx = vec![0usize; axes];
    loop {
        let t = gl_n[idx[0]];
        let mut w_total = gl_w[idx[0]];
        let rho = t * t;
        w_total *= 2.0 * t * (1.0 - rho).powi(n as i32 - 1) * d;
        // Duffy coordinates of the base simplex with smoothstep grading.
        let mut beta = vec![0.0; n - 1];
        let mut remaining = 1.0;
        for k in 0..n - 1 {
            let s = gl_n[idx[k + 1]];
            let (u, du) = smoothstep(s);
            beta[k] = u * remaining;
            w_total *= gl_w[idx[k + 1]] * du * remaining;
            remaining *= 1.0 - u;
        }
        // y = w1 + sum_k beta_k (w_{k+1} - w1); x = y + rho (g - y)
        let mut x = base[0].clone();
        for (k, b) in beta.iter().enumerate() {
            for (xi, (wk, w1)) in x.iter_mut().zip(base[k + 1].iter().zip(&base[0])) {
                *xi += b * (wk - w1);
            }
        }
        for (xi, gi) in x.iter_mut().zip(anchor) {
            *xi += rho * (gi - *xi);
        }
        nodes.push(x);
        weights.push(w_total);

        // advance tensor index
        let mut ax = 0;
        loop {
            idx[ax] += 1;
            if idx[ax] < m {
                break;
            }
            idx[ax] = 0;
            ax += 1;
            if ax == axes {
                return;
            }
        }
    }
}

fn det_f64(cols: &[Vec<f64>]) -> f64 {
    let n = cols.len();
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            det = -det;
        }
        det *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    det
}

/// Graded interior rule for any bounded rational polytope.
pub fn interior_rule_body(body: &QPolytope, level: u32) -> Result<QuadratureRule> {
    if !(MIN_LEVEL..=MAX_LEVEL).contains(&level) {
        return Err(Error::BadQuadratureLevel(level, MIN_LEVEL, MAX_LEVEL));
    }
    let n = body.dim;
    let m = points_per_axis(level, n);
    let anchor: Vec<f64> = body.vertex_barycenter().iter().map(q_to_f64).collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for j in body.facet_indices() {
        let chart = body.facet_chart(j);
        for simplex in chart.polytope.triangulate() {
            let base: Vec<Vec<f64>> = simplex
                .iter()
                .map(|z| {
                    let zq: Vec<f64> = z.iter().map(q_to_f64).collect();
                    chart.push_point_f64(&zq)
                })
                .collect();
            cone_rule(&anchor, &base, m, &mut nodes, &mut weights);
        }
    }
    Ok(QuadratureRule { tag: MeasureTag::InteriorDx, level, nodes, weights, facets: None })
}

pub fn interior_rule(poly: &DelzantPolytope, level: u32) -> Result<QuadratureRule> {
    interior_rule_body(poly.body(), level)
}

/// Boundary rule for the label measure: per facet, an interior-style rule on
/// the facet chart pushed to ambient coordinates.
pub fn boundary_rule(poly: &DelzantPolytope, level: u32) -> Result<QuadratureRule> {
    if !(MIN_LEVEL..=MAX_LEVEL).contains(&level) {
        return Err(Error::BadQuadratureLevel(level, MIN_LEVEL, MAX_LEVEL));
    }
    let body = poly.body();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut facets = Vec::new();
    for j in body.facet_indices() {
        let chart = body.facet_chart(j);
        let factor = q_to_f64(&chart.factor);
        if chart.polytope.dim == 0 {
            nodes.push(chart.push_point_f64(&[]));
            weights.push(factor);
            facets.push(j);
            continue;
        }
        let sub = interior_rule_body(&chart.polytope, level)?;
        for (z, w) in sub.nodes.iter().zip(&sub.weights) {
            nodes.push(chart.push_point_f64(z));
            weights.push(factor * w);
            facets.push(j);
        }
    }
    Ok(QuadratureRule {
        tag: MeasureTag::BoundarySigma,
        level,
        nodes,
        weights,
        facets: Some(facets),
    })
}

/// Uniform grid of strictly interior sample points, at least `margin` inside
/// every facet (margin in label units).
pub fn interior_grid(poly: &DelzantPolytope, per_axis: usize, margin: f64) -> Vec<Vec<f64>> {
    let bb = poly.bounding_box();
    let n = poly.dim();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = bb[i];
                lo + (hi - lo) * (idx[i] as f64 + 0.5) / per_axis as f64
            })
            .collect();
        if poly.interior_margin(&x) >= margin {
            out.push(x);
        }
        let mut ax = 0;
        loop {
            idx[ax] += 1;
            if idx[ax] < per_axis {
                break;
            }
            idx[ax] = 0;
            ax += 1;
            if ax == n {
                return out;
            }
        }
    }
}
