//! The extremal affine function, the relative Donaldson-Futaki functional,
//! and uniform-relative-K-stability probes.
//!
//! `F_ell(f) = -int_P ell f dx + 2 int_dP f dsigma`. The extremal affine
//! function is the unique `ell` killing `F_ell` on affine functions; it is
//! computed from the exact rational moment system, so the defining residual
//! is exactly zero. Stability probes evaluate `F_{l_ext}` on normalized
//! piecewise-linear convex functions by exact polytope clipping: a negative
//! value is a certificate of instability, a positive sweep is evidence (not
//! proof) of stability.

use crate::error::{Error, Result};
use crate::exact::rational::{dot, q_to_f64, qi, Q};
use crate::exact::{QMat, QPoly};
use crate::polytope::{AffineFunction, DelzantPolytope};
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

/// Solve the (n+1)x(n+1) exact moment system for the extremal affine
/// function: `int_P l_ext f dx = 2 int_dP f dsigma` for f in {1, x_1..x_n}.
pub fn extremal_affine(poly: &DelzantPolytope) -> Result<AffineFunction> {
    let n = poly.dim();
    let moments = poly.moments(2)?;
    let mono = |e: Vec<u32>| moments[&e].clone();
    let basis_expos: Vec<Vec<u32>> = std::iter::once(vec![0u32; n])
        .chain((0..n).map(|i| {
            let mut e = vec![0u32; n];
            e[i] = 1;
            e
        }))
        .collect();
    let mut gram = QMat::zeros(n + 1, n + 1);
    for (r, er) in basis_expos.iter().enumerate() {
        for (c, ec) in basis_expos.iter().enumerate() {
            let e: Vec<u32> = er.iter().zip(ec).map(|(a, b)| a + b).collect();
            gram[(r, c)] = mono(e);
        }
    }
    let rhs: Vec<Q> = basis_expos
        .iter()
        .map(|e| {
            qi(2) * poly.boundary_moment(&QPoly::monomial(n, e.clone(), qi(1)))
        })
        .collect();
    let sol = gram
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("extremal Gram system singular".into()))?;
    Ok(AffineFunction {
        constant: sol[0].clone(),
        gradient: sol[1..].to_vec(),
    })
}

/// F_ell(f) for polynomial f, exact.
pub fn futaki_polynomial(poly: &DelzantPolytope, ell: &AffineFunction, f: &QPoly) -> Q {
    let interior = poly.moment_of(&ell.as_poly(poly.dim()).mul(f));
    let boundary = poly.boundary_moment(f);
    qi(2) * boundary - interior
}

/// F_ell(f) for a sampled function, via interior and boundary quadrature.
pub fn futaki_quadrature(
    poly: &DelzantPolytope,
    ell: &AffineFunction,
    f: impl Fn(&[f64]) -> f64,
    level: u32,
) -> Result<f64> {
    let irule = crate::polytope::quadrature::interior_rule(poly, level)?;
    let brule = crate::polytope::quadrature::boundary_rule(poly, level)?;
    let interior = irule.integrate(|x| ell.eval_f64(x) * f(x));
    let boundary = brule.integrate(&f);
    Ok(2.0 * boundary - interior)
}

/// Piecewise-linear convex test function `max over pieces`, normalized so
/// that f >= f(x0) = 0 by subtracting a supporting affine piece at x0.
#[derive(Debug, Clone)]
pub struct ConvexTestFunction {
    pub pieces: Vec<AffineFunction>,
    pub basepoint: Vec<Q>,
    pub normalized: bool,
}

impl ConvexTestFunction {
    /// A single affine function (convex trivially).
    pub fn affine(f: AffineFunction, basepoint: Vec<Q>) -> Self {
        ConvexTestFunction { pieces: vec![f], basepoint, normalized: false }
    }

    /// Crease max(0, <a, x> - c).
    pub fn crease(a: Vec<Q>, c: Q, basepoint: Vec<Q>) -> Self {
        let dim = a.len();
        ConvexTestFunction {
            pieces: vec![
                AffineFunction::constant_fn(dim, Q::zero()),
                AffineFunction { constant: -c, gradient: a },
            ],
            basepoint,
            normalized: false,
        }
    }

    pub fn max_of(pieces: Vec<AffineFunction>, basepoint: Vec<Q>) -> Self {
        assert!(!pieces.is_empty());
        ConvexTestFunction { pieces, basepoint, normalized: false }
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        self.pieces
            .iter()
            .map(|p| p.eval(x))
            .max()
            .expect("nonempty pieces")
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval_f64(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Subtract the supporting piece at the basepoint: the result satisfies
    /// f(x) >= f(x0) = 0 everywhere.
    pub fn normalize(&self) -> Self {
        let x0 = &self.basepoint;
        let best = self
            .pieces
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.eval(x0).cmp(&b.eval(x0)))
            .map(|(i, _)| i)
            .expect("nonempty pieces");
        let support = self.pieces[best].clone();
        let pieces = self
            .pieces
            .iter()
            .map(|p| AffineFunction {
                constant: &p.constant - &support.constant,
                gradient: p
                    .gradient
                    .iter()
                    .zip(&support.gradient)
                    .map(|(a, b)| a - b)
                    .collect(),
            })
            .collect();
        ConvexTestFunction { pieces, basepoint: x0.clone(), normalized: true }
    }
}

/// Exact F_ell of a piecewise-linear convex function by clipping P into the
/// regions where each piece attains the max.
pub fn futaki_convex_pl(
    poly: &DelzantPolytope,
    ell: &AffineFunction,
    f: &ConvexTestFunction,
) -> Q {
    let n = poly.dim();
    let body = poly.body();
    let mut interior = Q::zero();
    let mut boundary = Q::zero();
    for (k, piece) in f.pieces.iter().enumerate() {
        if piece.constant.is_zero() && piece.gradient.iter().all(|g| g.is_zero()) {
            continue; // zero piece contributes nothing
        }
        // region where piece k dominates: <a_k - a_j, x> + (c_k - c_j) >= 0
        let cuts: Vec<(Vec<Q>, Q)> = f
            .pieces
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, other)| {
                (
                    piece
                        .gradient
                        .iter()
                        .zip(&other.gradient)
                        .map(|(a, b)| a - b)
                        .collect(),
                    &piece.constant - &other.constant,
                )
            })
            .collect();
        // interior part
        let mut region = body.clone();
        let mut alive = true;
        for (a, c) in &cuts {
            match region.clip(a.clone(), c.clone()) {
                Some(r) => region = r,
                None => {
                    alive = false;
                    break;
                }
            }
        }
        if alive {
            let fk = piece.as_poly(n);
            interior += region.moment(&ell.as_poly(n).mul(&fk));
        }
        // boundary part, facet by facet in chart coordinates
        for j in body.facet_indices() {
            let chart = body.facet_chart(j);
            let mut reg = chart.polytope.clone();
            let mut alive = true;
            for (a, c) in &cuts {
                let cut_poly = QPoly::affine(n, c.clone(), a);
                let pulled = chart.pull_back(&cut_poly);
                let (na, nc) = poly_to_affine(&pulled, reg.dim);
                if na.iter().all(|v| v.is_zero()) {
                    if nc.is_negative() {
                        alive = false;
                        break;
                    }
                    continue;
                }
                match reg.clip(na, nc) {
                    Some(r) => reg = r,
                    None => {
                        alive = false;
                        break;
                    }
                }
            }
            if !alive {
                continue;
            }
            let fk_chart = chart.pull_back(&piece.as_poly(n));
            boundary += &chart.factor * reg.moment(&fk_chart);
        }
    }
    qi(2) * boundary - interior
}

fn poly_to_affine(p: &QPoly, dim: usize) -> (Vec<Q>, Q) {
    let mut grad = vec![Q::zero(); dim];
    let mut c = Q::zero();
    for (e, v) in &p.terms {
        let total: u32 = e.iter().sum();
        if total == 0 {
            c = v.clone();
        } else {
            debug_assert_eq!(total, 1);
            let i = e.iter().position(|&x| x == 1).unwrap();
            grad[i] = v.clone();
        }
    }
    (grad, c)
}

// ---- stability probes ----------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// primitive integer directions with max-norm up to this bound
    pub max_direction: i64,
    /// offsets per direction across the polytope width
    pub offsets_per_direction: usize,
    /// probe basepoint; defaults to the barycenter
    pub basepoint: Option<Vec<String>>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { max_direction: 2, offsets_per_direction: 15, basepoint: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub id: String,
    pub direction: Vec<i64>,
    pub offset: String,
    pub futaki: f64,
    pub boundary_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityVerdict {
    UnstableCertificate,
    NoViolationFound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub probes: Vec<ProbeResult>,
    pub min_ratio: f64,
    pub verdict: StabilityVerdict,
    pub probes_evaluated: usize,
    /// The probe family is finite: a positive sweep is evidence only; a
    /// negative value is an exact certificate.
    pub exhaustive: bool,
}

/// All primitive integer vectors with max-norm <= k (both signs, no zero).
fn primitive_directions(dim: usize, k: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; dim];
    fn rec(i: usize, k: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if i == cur.len() {
            if cur.iter().any(|&v| v != 0) {
                let g = cur
                    .iter()
                    .fold(0i64, |acc, &v| num::integer::gcd(acc, v.abs()));
                if g == 1 {
                    out.push(cur.clone());
                }
            }
            return;
        }
        for v in -k..=k {
            cur[i] = v;
            rec(i + 1, k, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, k, &mut cur, &mut out);
    out.sort();
    out
}

/// Evaluate the deterministic crease family. `ell_override` substitutes a
/// different affine function for l_ext (a test injection hook).
pub fn stability_probe(
    poly: &DelzantPolytope,
    config: &ProbeConfig,
    ell_override: Option<AffineFunction>,
) -> Result<StabilityReport> {
    if config.offsets_per_direction == 0 || config.max_direction < 1 {
        return Err(Error::EmptyProbeFamily);
    }
    let n = poly.dim();
    let ell = match ell_override {
        Some(e) => e,
        None => extremal_affine(poly)?,
    };
    let x0: Vec<Q> = match &config.basepoint {
        Some(coords) => coords
            .iter()
            .map(|s| {
                crate::exact::rational::parse_rational(s)
                    .ok_or_else(|| Error::InvalidInput(format!("bad basepoint entry {s}")))
            })
            .collect::<Result<Vec<Q>>>()?,
        None => poly.barycenter(),
    };
    let mut probes = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut unstable = false;
    for a in primitive_directions(n, config.max_direction) {
        let aq: Vec<Q> = a.iter().map(|&v| qi(v)).collect();
        let vals: Vec<Q> = poly.vertices().iter().map(|v| dot(&aq, v)).collect();
        let hmin = vals.iter().min().unwrap().clone();
        let hmax = vals.iter().max().unwrap().clone();
        let at_x0 = dot(&aq, &x0);
        // offsets strictly between <a, x0> and max over P: positive part is
        // a proper piece of P and the normalization f(x0) = 0 holds.
        let lo = if at_x0 > hmin { at_x0.clone() } else { hmin.clone() };
        if lo >= hmax {
            continue;
        }
        let m = config.offsets_per_direction;
        for r in 1..=m {
            let c = &lo + (&hmax - &lo) * Q::new((r as i64).into(), (m as i64 + 1).into());
            let f = ConvexTestFunction::crease(aq.clone(), c.clone(), x0.clone());
            let fut = futaki_convex_pl(poly, &ell, &f);
            let bnorm = boundary_norm_crease(poly, &aq, &c);
            if bnorm.is_zero() {
                continue;
            }
            if fut.is_negative() {
                unstable = true;
            }
            let ratio = q_to_f64(&(&fut / &bnorm));
            min_ratio = min_ratio.min(ratio);
            probes.push(ProbeResult {
                id: format!(
                    "a={:?};c={}",
                    a,
                    crate::exact::rational::format_rational(&c)
                ),
                direction: a.clone(),
                offset: crate::exact::rational::format_rational(&c),
                futaki: q_to_f64(&fut),
                boundary_norm: q_to_f64(&bnorm),
                ratio,
            });
        }
    }
    if probes.is_empty() {
        return Err(Error::EmptyProbeFamily);
    }
    probes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(StabilityReport {
        probes_evaluated: probes.len(),
        probes,
        min_ratio,
        verdict: if unstable {
            StabilityVerdict::UnstableCertificate
        } else {
            StabilityVerdict::NoViolationFound
        },
        exhaustive: false,
    })
}

/// int_dP max(0, <a,x> - c) dsigma, exact.
fn boundary_norm_crease(poly: &DelzantPolytope, a: &[Q], c: &Q) -> Q {
    let n = poly.dim();
    let body = poly.body();
    let mut acc = Q::zero();
    let h = QPoly::affine(n, -c.clone(), a);
    for j in body.facet_indices() {
        let chart = body.facet_chart(j);
        let pulled = chart.pull_back(&h);
        let (na, nc) = poly_to_affine(&pulled, chart.polytope.dim);
        if na.iter().all(|v| v.is_zero()) {
            if !nc.is_negative() {
                acc += &chart.factor * chart.polytope.moment(&pulled);
            }
            continue;
        }
        if let Some(reg) = chart.polytope.clip(na, nc) {
            acc += &chart.factor * reg.moment(&pulled);
        }
    }
    acc
}
