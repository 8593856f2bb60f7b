//! Symplectic potentials `u = u0 + v` and admissibility with respect to a
//! constant antisymmetric datum `(A, B)`.
//!
//! `u0 = 1/2 sum_j L_j log L_j` is the canonical singular part; the
//! correction `v` is a polynomial, smooth across the boundary, gauged so
//! that `v(x0) = 0` and `grad v(x0) = 0` at a fixed basepoint (potentials
//! are only defined up to affine functions). Admissibility of `(u, B)`
//! means `Hess(u) + iB` is positive definite Hermitian on the interior,
//! tested through the real embedding `[[G, -B], [B, G]]`.

use crate::error::{Error, Result};
use crate::exact::rational::q_to_f64;
use crate::exact::QPoly;
use crate::polytope::quadrature::QuadratureRule;
use crate::polytope::DelzantPolytope;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Sparse polynomial with float coefficients, indexed by exponent vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolynomialField {
    pub nvars: usize,
    pub coeffs: BTreeMap<Vec<u32>, f64>,
}

impl PolynomialField {
    pub fn zero(nvars: usize) -> Self {
        PolynomialField { nvars, coeffs: BTreeMap::new() }
    }

    pub fn monomial(nvars: usize, expo: Vec<u32>, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.coeffs.insert(expo, c);
        }
        p
    }

    pub fn from_qpoly(p: &QPoly) -> Self {
        let mut out = Self::zero(p.nvars);
        for (e, c) in &p.terms {
            out.coeffs.insert(e.clone(), q_to_f64(c));
        }
        out
    }

    pub fn insert(&mut self, expo: Vec<u32>, c: f64) {
        if c == 0.0 {
            self.coeffs.remove(&expo);
        } else {
            self.coeffs.insert(expo, c);
        }
    }

    pub fn add_scaled(&mut self, other: &PolynomialField, s: f64) {
        for (e, c) in &other.coeffs {
            let v = self.coeffs.get(e).copied().unwrap_or(0.0) + s * c;
            if v == 0.0 {
                self.coeffs.remove(e);
            } else {
                self.coeffs.insert(e.clone(), v);
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.coeffs {
            let v = c * s;
            if v != 0.0 {
                out.coeffs.insert(e.clone(), v);
            }
        }
        out
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.coeffs {
            let mut t = *c;
            for (i, &p) in e.iter().enumerate() {
                t *= x[i].powi(p as i32);
            }
            acc += t;
        }
        acc
    }

    pub fn diff(&self, i: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.coeffs {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            let v = out.coeffs.get(&e2).copied().unwrap_or(0.0) + c * e[i] as f64;
            out.coeffs.insert(e2, v);
        }
        out
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.diff(i).eval(x)).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.nvars;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let di = self.diff(i);
            for j in i..n {
                let v = di.diff(j).eval(x);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Exact-coefficient view for pairing against rational moments.
    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> {
        self.coeffs.iter().map(|(e, &c)| (e, c))
    }
}

/// Constant antisymmetric pair (A, B) on the torus Lie algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonDatum {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl PoissonDatum {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        for m in [&a, &b] {
            if m.nrows() != m.ncols() {
                return Err(Error::NotAntisymmetric);
            }
            if (m + m.transpose()).abs().max() > 1e-12 {
                return Err(Error::NotAntisymmetric);
            }
        }
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
        }
        Ok(PoissonDatum { a, b })
    }

    pub fn zero(n: usize) -> Self {
        PoissonDatum { a: DMatrix::zeros(n, n), b: DMatrix::zeros(n, n) }
    }

    pub fn from_b(b: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        Self::new(DMatrix::zeros(n, n), b)
    }

    /// Single-entry antisymmetric matrix, convenient for 2-d tests.
    pub fn b_from_entry(n: usize, i: usize, j: usize, v: f64) -> Result<Self> {
        let mut b = DMatrix::zeros(n, n);
        b[(i, j)] = v;
        b[(j, i)] = -v;
        Self::from_b(b)
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn scaled(&self, t: f64) -> Self {
        PoissonDatum { a: &self.a * t, b: &self.b * t }
    }
}

/// Symplectic potential u = u0 + v over a fixed polytope.
#[derive(Debug, Clone)]
pub struct SymplecticPotential {
    polytope: Arc<DelzantPolytope>,
    correction: PolynomialField,
    gauge_point: Vec<f64>,
}

impl SymplecticPotential {
    /// The Guillemin potential (v = 0).
    pub fn guillemin(polytope: Arc<DelzantPolytope>) -> Self {
        let gauge_point = polytope.barycenter_f64();
        let correction = PolynomialField::zero(polytope.dim());
        SymplecticPotential { polytope, correction, gauge_point }
    }

    /// u0 + v with v gauged to v(x0) = 0, grad v(x0) = 0.
    pub fn with_correction(
        polytope: Arc<DelzantPolytope>,
        correction: PolynomialField,
    ) -> Self {
        let gauge_point = polytope.barycenter_f64();
        Self::with_correction_at(polytope, correction, gauge_point)
    }

    pub fn with_correction_at(
        polytope: Arc<DelzantPolytope>,
        mut correction: PolynomialField,
        gauge_point: Vec<f64>,
    ) -> Self {
        if correction.nvars == 0 {
            correction.nvars = polytope.dim();
        }
        assert_eq!(correction.nvars, polytope.dim());
        let gauged = gauge_out_affine(&correction, &gauge_point);
        SymplecticPotential { polytope, correction: gauged, gauge_point }
    }

    pub fn polytope(&self) -> &Arc<DelzantPolytope> {
        &self.polytope
    }

    pub fn correction(&self) -> &PolynomialField {
        &self.correction
    }

    pub fn gauge_point(&self) -> &[f64] {
        &self.gauge_point
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn same_polytope(&self, other: &SymplecticPotential) -> bool {
        Arc::ptr_eq(&self.polytope, &other.polytope)
            || self.polytope.vertices() == other.polytope.vertices()
    }

    fn require_interior(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !self.polytope.is_interior(x) {
            return Err(Error::NotInterior);
        }
        Ok(())
    }

    /// u(x) = 1/2 sum L log L + v(x).
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.require_interior(x)?;
        let mut acc = 0.0;
        for j in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(j, x);
            acc += 0.5 * l * l.ln();
        }
        if !self.correction.is_zero() {
            acc += self.correction.eval(x);
        }
        Ok(acc)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_interior(x)?;
        let n = self.dim();
        let mut g = vec![0.0; n];
        for j in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(j, x);
            let nu = self.polytope.normal_f64(j);
            let f = 0.5 * (l.ln() + 1.0);
            for i in 0..n {
                g[i] += f * nu[i];
            }
        }
        if !self.correction.is_zero() {
            for (i, d) in self.correction.gradient(x).into_iter().enumerate() {
                g[i] += d;
            }
        }
        Ok(g)
    }

    /// G = Hess u(x), closed form for the Guillemin part.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_interior(x)?;
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for j in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(j, x);
            let nu = DVector::from_vec(self.polytope.normal_f64(j));
            g += &nu * nu.transpose() * (0.5 / l);
        }
        if !self.correction.is_zero() {
            g += self.correction.hessian(x);
        }
        Ok(g)
    }

    /// Hessian of the Guillemin reference u0 alone (the matrix G0).
    pub fn guillemin_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_interior(x)?;
        let n = self.dim();
        let mut g = DMatrix::zeros(n, n);
        for j in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(j, x);
            let nu = DVector::from_vec(self.polytope.normal_f64(j));
            g += &nu * nu.transpose() * (0.5 / l);
        }
        Ok(g)
    }

    /// First derivatives of the Hessian: dG/dmu_i for each i.
    pub fn hessian_d1(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.require_interior(x)?;
        let n = self.dim();
        let mut out = vec![DMatrix::zeros(n, n); n];
        for j in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(j, x);
            let nu = DVector::from_vec(self.polytope.normal_f64(j));
            let block = &nu * nu.transpose() * (-0.5 / (l * l));
            for i in 0..n {
                out[i] += &block * nu[i];
            }
        }
        if !self.correction.is_zero() {
            for i in 0..n {
                out[i] += self.correction.diff(i).hessian(x);
            }
        }
        Ok(out)
    }

    /// Second derivatives of the Hessian: d2G/dmu_i dmu_j, row-major in (i, j).
    pub fn hessian_d2(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.require_interior(x)?;
        let n = self.dim();
        let mut out = vec![DMatrix::zeros(n, n); n * n];
        for jf in 0..self.polytope.num_facets() {
            let l = self.polytope.label_f64(jf, x);
            let nu = DVector::from_vec(self.polytope.normal_f64(jf));
            let block = &nu * nu.transpose() * (1.0 / (l * l * l));
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] += &block * (nu[i] * nu[j]);
                }
            }
        }
        if !self.correction.is_zero() {
            for i in 0..n {
                let di = self.correction.diff(i);
                for j in 0..n {
                    out[i * n + j] += di.diff(j).hessian(x);
                }
            }
        }
        Ok(out)
    }

    /// Linear-interpolation geodesic endpoint blend (same polytope, gauge).
    pub fn blend(&self, other: &SymplecticPotential, t: f64) -> Result<SymplecticPotential> {
        if !self.same_polytope(other) {
            return Err(Error::PolytopeMismatch);
        }
        let mut v = self.correction.scale(1.0 - t);
        v.add_scaled(&other.correction, t);
        Ok(SymplecticPotential {
            polytope: self.polytope.clone(),
            correction: v,
            gauge_point: self.gauge_point.clone(),
        })
    }
}

/// Subtract the affine part of `v` at `x0` so that v(x0)=0, grad v(x0)=0.
pub fn gauge_out_affine(v: &PolynomialField, x0: &[f64]) -> PolynomialField {
    if v.is_zero() {
        return v.clone();
    }
    let n = v.nvars;
    let mut out = v.clone();
    let grad = v.gradient(x0);
    // subtract <grad, x - x0> + v(x0)
    for i in 0..n {
        let mut e = vec![0u32; n];
        e[i] = 1;
        let c = out.coeffs.get(&e).copied().unwrap_or(0.0) - grad[i];
        out.insert(e, c);
    }
    let shifted_val = out.eval(x0);
    let e0 = vec![0u32; n];
    let c0 = out.coeffs.get(&e0).copied().unwrap_or(0.0) - shifted_val;
    out.insert(e0, c0);
    out
}

/// Pointwise admissibility margins sampled on a quadrature rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// min over nodes of the smallest eigenvalue of the Hermitian G + iB
    pub min_margin: f64,
    pub argmin: Vec<f64>,
    /// max over nodes of the Frobenius norm of (G + iB)^{-1} G0
    pub max_zg0_norm: f64,
    pub nodes_checked: usize,
}

/// Smallest eigenvalue of the Hermitian matrix G + iB via the real
/// embedding [[G, -B], [B, G]] (spectra agree with doubled multiplicity).
pub fn hermitian_min_eig(g: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(g);
    m.view_mut((0, n), (n, n)).copy_from(&(-b));
    m.view_mut((n, 0), (n, n)).copy_from(b);
    m.view_mut((n, n), (n, n)).copy_from(g);
    let eig = m.symmetric_eigenvalues();
    eig.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Check admissibility of (u, B) on the nodes of `quad`.
pub fn admissibility_check(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    quad: &QuadratureRule,
) -> Result<AdmissibilityReport> {
    use crate::polytope::quadrature::MeasureTag;
    if quad.tag != MeasureTag::InteriorDx {
        return Err(Error::MeasureMismatch("interior rule"));
    }
    let mut min_margin = f64::INFINITY;
    let mut argmin = vec![];
    let mut max_norm: f64 = 0.0;
    for x in &quad.nodes {
        let g = u.hessian(x)?;
        let margin = hermitian_min_eig(&g, &datum.b);
        if margin < min_margin {
            min_margin = margin;
            argmin = x.clone();
        }
        if margin > 0.0 {
            let g0 = u.guillemin_hessian(x)?;
            if let Some(zg0) = complex_inverse_times(&g, &datum.b, &g0) {
                max_norm = max_norm.max(zg0);
            }
        }
    }
    Ok(AdmissibilityReport {
        admissible: min_margin > 0.0,
        min_margin,
        argmin,
        max_zg0_norm: max_norm,
        nodes_checked: quad.len(),
    })
}

/// Frobenius norm of (G + iB)^{-1} G0, or None if singular.
fn complex_inverse_times(g: &DMatrix<f64>, b: &DMatrix<f64>, g0: &DMatrix<f64>) -> Option<f64> {
    use num_complex::Complex64;
    let n = g.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(g[(i, j)], b[(i, j)]));
    let inv = m.try_inverse()?;
    let g0c = DMatrix::from_fn(n, n, |i, j| Complex64::new(g0[(i, j)], 0.0));
    let prod = inv * g0c;
    Some(prod.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}
