//! Exact integrals of `f * L^k * log L` over rational polytopes, where `L`
//! is an affine form nonnegative on the region and `f` a polynomial.
//!
//! The interior integral is reduced by the divergence theorem: with
//! `W_k(z) = z^{k+1} log z/(k+1) - z^{k+1}/(k+1)^2` and a direction `e`
//! satisfying `<grad L, e> = 1`, the field `e * W_k(L)` has divergence
//! `L^k log L`. Each application trades one degree of `f` for boundary terms
//! one dimension lower; dimension one is integrated in closed form. The only
//! floating-point operations are the final `ln` evaluations, so the result
//! carries no quadrature error.

use super::qpolytope::QPolytope;
use crate::exact::rational::{dot, q_to_f64, Q};
use crate::exact::QPoly;
use num::{Signed, Zero};

/// integral over `region` of f * L^k * log L, with L = region-affine form
/// (as polynomial of degree <= 1) nonnegative on the region, k >= 1.
pub fn poly_llogl(region: &QPolytope, f: &QPoly, l: &QPoly, k: u32) -> f64 {
    assert!(k >= 1);
    assert!(l.degree() <= 1);
    let dim = region.dim;
    if dim == 0 {
        let lv = l.eval(&[]);
        if lv.is_zero() {
            return 0.0;
        }
        let lf = q_to_f64(&lv);
        return q_to_f64(&f.eval(&[])) * lf.powi(k as i32) * lf.ln();
    }
    let grad: Vec<Q> = (0..dim)
        .map(|i| {
            let mut e = vec![0u32; dim];
            e[i] = 1;
            l.terms.get(&e).cloned().unwrap_or_else(Q::zero)
        })
        .collect();
    if grad.iter().all(|g| g.is_zero()) {
        // L constant on the region.
        let c = l.terms.get(&vec![0; dim]).cloned().unwrap_or_else(Q::zero);
        assert!(!c.is_negative());
        if c.is_zero() {
            return 0.0;
        }
        let cf = q_to_f64(&c);
        return q_to_f64(&region.moment(f)) * cf.powi(k as i32) * cf.ln();
    }
    if dim == 1 {
        return line_llogl(region, f, l, k);
    }
    // e = grad L / |grad L|^2, so <grad L, e> = 1.
    let gg = dot(&grad, &grad);
    let e: Vec<Q> = grad.iter().map(|g| g / &gg).collect();
    let c1 = Q::new(1.into(), (k as i64 + 1).into());
    let c2 = -(&c1 * &c1);
    let lk1 = l.pow(k + 1);

    let mut acc = 0.0;
    for j in region.facet_indices() {
        let w = &region.halfspaces[j].normal;
        let flux = -q_to_f64(&dot(&e, w));
        if flux == 0.0 {
            continue;
        }
        let chart = region.facet_chart(j);
        let factor = q_to_f64(&chart.factor);
        let f_c = chart.pull_back(f);
        let l_c = chart.pull_back(l);
        let term_log = poly_llogl(&chart.polytope, &f_c, &l_c, k + 1);
        let term_poly = q_to_f64(&chart.polytope.moment(&f_c.mul(&chart.pull_back(&lk1))));
        acc += flux * factor * (q_to_f64(&c1) * term_log + q_to_f64(&c2) * term_poly);
    }
    let fe = f.diff_dir(&e);
    if !fe.is_zero() {
        acc -= q_to_f64(&c1) * poly_llogl(region, &fe, l, k + 1);
        acc -= q_to_f64(&c2) * q_to_f64(&region.moment(&fe.mul(&lk1)));
    }
    acc
}

/// One-dimensional closed form via the substitution z = L(t).
fn line_llogl(region: &QPolytope, f: &QPoly, l: &QPoly, k: u32) -> f64 {
    let t0 = region.vertices.iter().map(|v| v[0].clone()).min().unwrap();
    let t1 = region.vertices.iter().map(|v| v[0].clone()).max().unwrap();
    let a = l.terms.get(&vec![1]).cloned().unwrap_or_else(Q::zero);
    let b = l.terms.get(&vec![0]).cloned().unwrap_or_else(Q::zero);
    assert!(!a.is_zero());
    // t = (z - b)/a ; integral = (1/a) * int_{L(t0)}^{L(t1)} f((z-b)/a) z^k log z dz
    let ainv = a.recip();
    let z = QPoly::var(1, 0);
    let t_of_z = QPoly::affine(1, -&b * &ainv, &[ainv.clone()]);
    let q = f.compose(&[t_of_z]).mul(&z.pow(k));
    let z0 = l.eval(&[t0]);
    let z1 = l.eval(&[t1]);
    let mut acc = 0.0;
    for (e, c) in &q.terms {
        let m = e[0];
        acc += q_to_f64(c) * (antideriv_zlog(&z1, m) - antideriv_zlog(&z0, m));
    }
    q_to_f64(&ainv) * acc
}

/// Antiderivative of z^m log z evaluated at a nonnegative rational.
fn antideriv_zlog(z: &Q, m: u32) -> f64 {
    if z.is_zero() {
        return 0.0;
    }
    let zf = q_to_f64(z);
    let p = m as f64 + 1.0;
    zf.powi(m as i32 + 1) * (zf.ln() / p - 1.0 / (p * p))
}
