//! Solver for the extremal equation `kappa(u, 0, B) = l_ext` over the
//! gauged polynomial correction space, with continuation in the Poisson
//! scale t.
//!
//! The discretized Mabuchi energy is convex in the correction coefficients
//! (linear Futaki term plus -log det of an affine matrix family), so the
//! loop is a limited-memory quasi-Newton descent with an
//! admissibility-preserving backtracking line search, followed by Newton
//! polishing with the exact second-variation Gram matrix. The gradient used
//! is the exact gradient of the discretized functional,
//! `F_{l_ext}(phi_m) - sum_q w_q tr(X_q Hess phi_m(x_q))`, which is the
//! integration-by-parts form of `int phi_m (kappa - l_ext) dx`; the latter
//! is kept as an independent post-solve verification.
//!
//! Affine directions are excluded from the basis (monomials of total degree
//! >= 2 in barycenter-centered coordinates), which realizes the projection
//! away from the affine kernel exactly in the discrete space.

use crate::curvature::abreu_gscal;
use crate::error::{Error, Result};
use crate::exact::rational::{q_to_f64, qi, Q};
use crate::exact::QPoly;
use crate::extremal::extremal_affine;
use crate::mabuchi::{futaki_of_potential, logdet_hermitian};
use crate::polytope::quadrature::{interior_grid, interior_rule};
use crate::polytope::{AffineFunction, DelzantPolytope};
use crate::potential::{
    hermitian_min_eig, PoissonDatum, PolynomialField, SymplecticPotential,
};
use nalgebra::{DMatrix, DVector};
use num::Zero;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// total degree of the polynomial correction space
    pub degree: u32,
    /// ceiling for automatic degree escalation
    pub degree_cap: u32,
    pub quad_level: u32,
    pub max_iterations: usize,
    /// sup-norm target for kappa - l_ext on the check nodes
    pub residual_target: f64,
    /// backtracking shrink factor and step cap
    pub backtrack_shrink: f64,
    pub max_backtracks: usize,
    pub armijo_slope: f64,
    /// accepted steps must keep the sampled margin above this fraction of
    /// the current margin
    pub margin_fraction: f64,
    /// Poisson scales for continuation, increasing from 0
    pub continuation_steps: Vec<f64>,
    pub newton_polish: bool,
    pub check_points_per_axis: usize,
    pub check_margin: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            degree: 8,
            degree_cap: 12,
            quad_level: 5,
            max_iterations: 400,
            residual_target: 1e-4,
            backtrack_shrink: 0.5,
            max_backtracks: 48,
            armijo_slope: 1e-4,
            margin_fraction: 0.1,
            continuation_steps: vec![0.0],
            newton_polish: true,
            check_points_per_axis: 32,
            check_margin: 0.01,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.residual_target <= 0.0 {
            return Err(Error::InvalidInput("residual_target must be positive".into()));
        }
        if self.degree < 2 || self.degree > self.degree_cap {
            return Err(Error::BadDegree(self.degree_cap));
        }
        let mut prev = -f64::EPSILON;
        for &t in &self.continuation_steps {
            if t.abs() < prev {
                return Err(Error::InvalidInput(
                    "continuation steps must increase in |t| starting at 0".into(),
                ));
            }
            prev = t.abs();
        }
        Ok(())
    }
}

/// Serializable potential checkpoint (warm starts, CLI round trips).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialCheckpoint {
    pub degree: u32,
    /// multi-index "a,b" -> coefficient
    pub coefficients: BTreeMap<String, f64>,
    pub gauge_point: Vec<f64>,
}

impl PotentialCheckpoint {
    pub fn from_potential(u: &SymplecticPotential) -> Self {
        let coefficients = u
            .correction()
            .terms()
            .map(|(e, c)| {
                (
                    e.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                    c,
                )
            })
            .collect();
        PotentialCheckpoint {
            degree: u.correction().degree(),
            coefficients,
            gauge_point: u.gauge_point().to_vec(),
        }
    }

    pub fn to_potential(&self, poly: Arc<DelzantPolytope>) -> Result<SymplecticPotential> {
        let n = poly.dim();
        let mut v = PolynomialField::zero(n);
        for (key, &c) in &self.coefficients {
            let expo: Vec<u32> = key
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidInput(format!("bad multi-index '{key}'")))?;
            if expo.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: expo.len() });
            }
            v.insert(expo, c);
        }
        Ok(SymplecticPotential::with_correction_at(
            poly,
            v,
            self.gauge_point.clone(),
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionReport {
    pub potential: PotentialCheckpoint,
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub energy_trace: Vec<(usize, f64)>,
    pub admissibility_margin: f64,
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    pub degree_used: u32,
    /// l_ext coefficients (constant, gradient...) as floats for reporting
    pub lext: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// One gauged basis element: exact polynomial in ambient coordinates.
struct BasisFn {
    qpoly: QPoly,
    field: PolynomialField,
}

/// Monomials of total degree 2..=d in centered, scaled coordinates; they
/// vanish to second order at the barycenter, so the affine gauge is exact.
fn gauged_basis(poly: &DelzantPolytope, degree: u32) -> Vec<BasisFn> {
    let n = poly.dim();
    let center = poly.barycenter();
    let bb = poly.bounding_box();
    let scales: Vec<Q> = (0..n)
        .map(|i| {
            let w = bb[i].1 - bb[i].0;
            crate::exact::rational::q_from_f64((w / 2.0).max(1e-6)).unwrap_or_else(|| qi(1))
        })
        .collect();
    let coords: Vec<QPoly> = (0..n)
        .map(|i| {
            let inv = scales[i].recip();
            QPoly::affine(
                n,
                -&center[i] * &inv,
                &(0..n)
                    .map(|k| if k == i { inv.clone() } else { Q::zero() })
                    .collect::<Vec<Q>>(),
            )
        })
        .collect();
    let mut out = Vec::new();
    for e in crate::polytope::qpolytope::expos_up_to(n, degree) {
        let total: u32 = e.iter().sum();
        if total < 2 {
            continue;
        }
        let mut p = QPoly::constant(n, qi(1));
        for (i, &k) in e.iter().enumerate() {
            if k > 0 {
                p = p.mul(&coords[i].pow(k));
            }
        }
        let field = PolynomialField::from_qpoly(&p);
        out.push(BasisFn { qpoly: p, field });
    }
    out
}

struct Workspace {
    poly: Arc<DelzantPolytope>,
    b: DMatrix<f64>,
    ell: AffineFunction,
    basis: Vec<BasisFn>,
    /// exact F_{l_ext}(phi_m)
    futvec: Vec<f64>,
    fut0: f64,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Guillemin Hessian per node
    g0: Vec<DMatrix<f64>>,
    logdet_g0: Vec<f64>,
    /// Hess phi_m per node, indexed [m][q]
    basis_hess: Vec<Vec<DMatrix<f64>>>,
    check_points: Vec<Vec<f64>>,
}

impl Workspace {
    fn build(poly: &Arc<DelzantPolytope>, b: &DMatrix<f64>, opts: &SolveOptions) -> Result<Self> {
        let n = poly.dim();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
        }
        let ell = extremal_affine(poly)?;
        let basis = gauged_basis(poly, opts.degree);
        let ell_poly = ell.as_poly(n);
        let futvec: Vec<f64> = basis
            .iter()
            .map(|bf| {
                let bnd = poly.boundary_moment(&bf.qpoly);
                let int = poly.moment_of(&ell_poly.mul(&bf.qpoly));
                2.0 * q_to_f64(&bnd) - q_to_f64(&int)
            })
            .collect();
        let u0 = SymplecticPotential::guillemin(poly.clone());
        let fut0 = futaki_of_potential(poly, &ell, &u0);
        let rule = interior_rule(poly, opts.quad_level)?;
        let zero = DMatrix::zeros(n, n);
        let mut g0 = Vec::with_capacity(rule.len());
        let mut logdet_g0 = Vec::with_capacity(rule.len());
        for x in &rule.nodes {
            let g = u0.guillemin_hessian(x)?;
            logdet_g0.push(logdet_hermitian(&g, &zero)?);
            g0.push(g);
        }
        let basis_hess: Vec<Vec<DMatrix<f64>>> = basis
            .iter()
            .map(|bf| rule.nodes.iter().map(|x| bf.field.hessian(x)).collect())
            .collect();
        let margin = opts.check_margin * poly.diameter().max(1.0);
        let check_points = interior_grid(poly, opts.check_points_per_axis, margin);
        Ok(Workspace {
            poly: poly.clone(),
            b: b.clone(),
            ell,
            basis,
            futvec,
            fut0,
            nodes: rule.nodes,
            weights: rule.weights,
            g0,
            logdet_g0,
            basis_hess,
            check_points,
        })
    }

    fn hessian_at(&self, theta: &DVector<f64>, qi_: usize) -> DMatrix<f64> {
        let mut g = self.g0[qi_].clone();
        for (m, t) in theta.iter().enumerate() {
            if *t != 0.0 {
                g += &self.basis_hess[m][qi_] * *t;
            }
        }
        g
    }

    /// Discretized Mabuchi energy (reference u0; the singular reference
    /// integral cancels exactly against the u0 log-det term).
    fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        let mut acc = self.fut0;
        for (m, t) in theta.iter().enumerate() {
            acc += self.futvec[m] * t;
        }
        for qi_ in 0..self.nodes.len() {
            let g = self.hessian_at(theta, qi_);
            let ld = logdet_hermitian(&g, &self.b)
                .map_err(|_| Error::Inadmissible("line search left the admissible set".into()))?;
            acc -= self.weights[qi_] * (ld - self.logdet_g0[qi_]);
        }
        Ok(acc)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut grad = DVector::from_column_slice(&self.futvec);
        for qi_ in 0..self.nodes.len() {
            let g = self.hessian_at(theta, qi_);
            let z = crate::curvature::hermitian_inverse_of(&g, &self.b)?;
            for m in 0..self.basis.len() {
                let tr = (&z.x_re * &self.basis_hess[m][qi_]).trace();
                grad[m] -= self.weights[qi_] * tr;
            }
        }
        Ok(grad)
    }

    /// Exact second-variation Gram matrix of the discretized energy.
    fn newton_matrix(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mdim = self.basis.len();
        let n = self.poly.dim();
        let mut h = DMatrix::zeros(mdim, mdim);
        for qi_ in 0..self.nodes.len() {
            let g = self.hessian_at(theta, qi_);
            let z = crate::curvature::hermitian_inverse_of(&g, &self.b)?.z;
            let zs: Vec<DMatrix<Complex64>> = (0..mdim)
                .map(|m| {
                    let s = &self.basis_hess[m][qi_];
                    let sc = DMatrix::from_fn(n, n, |i, j| Complex64::new(s[(i, j)], 0.0));
                    &z * sc
                })
                .collect();
            for m in 0..mdim {
                for k in m..mdim {
                    let v = (&zs[m] * &zs[k]).trace().re * self.weights[qi_];
                    h[(m, k)] += v;
                    if k != m {
                        h[(k, m)] += v;
                    }
                }
            }
        }
        Ok(h)
    }

    fn margin(&self, theta: &DVector<f64>) -> f64 {
        let mut min = f64::INFINITY;
        for qi_ in 0..self.nodes.len() {
            let g = self.hessian_at(theta, qi_);
            min = min.min(hermitian_min_eig(&g, &self.b));
        }
        min
    }

    fn potential_of(&self, theta: &DVector<f64>) -> SymplecticPotential {
        let n = self.poly.dim();
        let mut v = PolynomialField::zero(n);
        for (m, t) in theta.iter().enumerate() {
            if *t != 0.0 {
                v.add_scaled(&self.basis[m].field, *t);
            }
        }
        SymplecticPotential::with_correction(self.poly.clone(), v)
    }

    /// sup of kappa - l_ext on the check nodes. A node where the Hermitian
    /// matrix is numerically singular counts as an infinite residual: such an
    /// iterate cannot be verified, so it is never declared converged.
    fn residual_sup(&self, u: &SymplecticPotential, datum: &PoissonDatum) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for x in &self.check_points {
            match abreu_gscal(u, datum, x) {
                Ok(k) => sup = sup.max((k - self.ell.eval_f64(x)).abs()),
                Err(Error::SingularMatrix(_)) | Err(Error::Inadmissible(_)) => {
                    return Ok(f64::INFINITY)
                }
                Err(e) => return Err(e),
            }
        }
        Ok(sup)
    }

    fn residual_l2(&self, u: &SymplecticPotential, datum: &PoissonDatum) -> Result<f64> {
        let mut l2 = 0.0;
        let mut vol = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let r = match abreu_gscal(u, datum, x) {
                Ok(k) => k - self.ell.eval_f64(x),
                Err(Error::SingularMatrix(_)) | Err(Error::Inadmissible(_)) => {
                    return Ok(f64::INFINITY)
                }
                Err(e) => return Err(e),
            };
            l2 += w * r * r;
            vol += w;
        }
        Ok((l2 / vol).sqrt())
    }
}

/// Minimize the discretized energy at a fixed Poisson scale.
fn minimize(
    ws: &Workspace,
    theta0: DVector<f64>,
    opts: &SolveOptions,
    t_scale: f64,
) -> Result<SolutionReport> {
    let datum = PoissonDatum::new(DMatrix::zeros(ws.poly.dim(), ws.poly.dim()), ws.b.clone())?;
    let mut theta = theta0;
    let mut margin = ws.margin(&theta);
    if margin <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "initial potential has nonpositive Hermitian margin {margin:.3e}"
        )));
    }
    let mut energy = ws.objective(&theta)?;
    let mut trace = vec![(0usize, energy)];
    let mut history: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let mut grad = ws.gradient(&theta)?;
    let mut iterations = 0;
    let mut converged = false;
    let mut diagnostic = None;
    let mut last_residual = f64::INFINITY;
    // quasi-Newton first, Newton polish for the endgame
    let mut newton_phase = false;
    let mut stall = 0usize;

    for iter in 0..=opts.max_iterations {
        iterations = iter;
        let u = ws.potential_of(&theta);
        let sup = ws.residual_sup(&u, &datum)?;
        if sup <= opts.residual_target {
            converged = true;
            break;
        }
        if iter == opts.max_iterations {
            diagnostic = Some(format!(
                "iteration cap {} reached with residual {sup:.3e}",
                opts.max_iterations
            ));
            break;
        }
        if sup > last_residual * 0.99 {
            stall += 1;
        } else {
            stall = 0;
        }
        last_residual = sup;
        if opts.newton_polish && (stall >= 4 || grad.norm() < 1e-7 * ws.basis.len() as f64) {
            newton_phase = true;
        }
        // A long plateau means the target is below the truncation floor of
        // this basis; stop so the caller can escalate the degree or report.
        if stall >= 30 {
            diagnostic = Some(format!(
                "residual plateau at {sup:.3e} (target {:.3e})",
                opts.residual_target
            ));
            break;
        }

        // direction
        let dir = if newton_phase {
            let mut h = ws.newton_matrix(&theta)?;
            for i in 0..h.nrows() {
                h[(i, i)] += 1e-12 + 1e-9 * h[(i, i)].abs();
            }
            match h.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -h
                    .lu()
                    .solve(&grad)
                    .ok_or_else(|| Error::Internal("Newton system singular".into()))?,
            }
        } else {
            lbfgs_direction(&history, &grad)
        };
        let slope = grad.dot(&dir);
        if slope >= 0.0 {
            history.clear();
            // fall back to steepest descent
            let dir = -&grad;
            let (theta_new, e_new, ok) =
                line_search(ws, &theta, &dir, energy, grad.dot(&dir), margin, opts)?;
            if !ok {
                return Err(Error::LineSearchFailed(
                    "no admissible decrease along steepest descent".into(),
                ));
            }
            let grad_new = ws.gradient(&theta_new)?;
            history.push((&theta_new - &theta, &grad_new - &grad));
            theta = theta_new;
            energy = e_new;
            grad = grad_new;
        } else {
            let (theta_new, e_new, ok) =
                line_search(ws, &theta, &dir, energy, slope, margin, opts)?;
            if !ok {
                return Err(Error::LineSearchFailed(
                    "admissibility boundary hit during backtracking".into(),
                ));
            }
            let grad_new = ws.gradient(&theta_new)?;
            history.push((&theta_new - &theta, &grad_new - &grad));
            if history.len() > 10 {
                history.remove(0);
            }
            theta = theta_new;
            energy = e_new;
            grad = grad_new;
        }
        margin = ws.margin(&theta);
        trace.push((iter + 1, energy));
    }

    let u = ws.potential_of(&theta);
    let residual_sup = ws.residual_sup(&u, &datum)?;
    let residual_l2 = ws.residual_l2(&u, &datum)?;
    Ok(SolutionReport {
        potential: PotentialCheckpoint::from_potential(&u),
        residual_sup,
        residual_l2,
        energy_trace: trace,
        admissibility_margin: ws.margin(&theta),
        t: t_scale,
        converged,
        iterations,
        degree_used: opts.degree,
        lext: std::iter::once(q_to_f64(&ws.ell.constant))
            .chain(ws.ell.gradient.iter().map(q_to_f64))
            .collect(),
        diagnostic,
    })
}

fn line_search(
    ws: &Workspace,
    theta: &DVector<f64>,
    dir: &DVector<f64>,
    energy: f64,
    slope: f64,
    margin: f64,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, f64, bool)> {
    let mut step = 1.0;
    for _ in 0..opts.max_backtracks {
        let cand = theta + dir * step;
        let m = ws.margin(&cand);
        if m > opts.margin_fraction * margin && m > 0.0 {
            if let Ok(e) = ws.objective(&cand) {
                if e <= energy + opts.armijo_slope * step * slope {
                    return Ok((cand, e, true));
                }
            }
        }
        step *= opts.backtrack_shrink;
    }
    Ok((theta.clone(), energy, false))
}

/// Two-loop L-BFGS direction from (s, y) history.
fn lbfgs_direction(history: &[(DVector<f64>, DVector<f64>)], grad: &DVector<f64>) -> DVector<f64> {
    if history.is_empty() {
        return -grad;
    }
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let sy = s.dot(y);
        if sy <= 1e-14 {
            alphas.push(0.0);
            continue;
        }
        let a = s.dot(&q) / sy;
        q -= y * a;
        alphas.push(a);
    }
    let (s_last, y_last) = history.last().unwrap();
    let yy = y_last.dot(y_last);
    let gamma = if yy > 0.0 { s_last.dot(y_last) / yy } else { 1.0 };
    let mut r = q * gamma.max(1e-12);
    for ((s, y), a) in history.iter().zip(alphas.iter().rev()) {
        let sy = s.dot(y);
        if sy <= 1e-14 {
            continue;
        }
        let beta = y.dot(&r) / sy;
        r += s * (a - beta);
    }
    -r
}

/// Direct solve at the given B, starting from the Guillemin potential.
pub fn solve_extremal(
    poly: &Arc<DelzantPolytope>,
    b: &DMatrix<f64>,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    solve_extremal_from(poly, b, opts, None)
}

/// Direct solve with an optional admissible initialization.
pub fn solve_extremal_from(
    poly: &Arc<DelzantPolytope>,
    b: &DMatrix<f64>,
    opts: &SolveOptions,
    initial: Option<&SymplecticPotential>,
) -> Result<SolutionReport> {
    opts.validate()?;
    let mut opts_now = opts.clone();
    loop {
        let ws = Workspace::build(poly, b, &opts_now)?;
        let theta0 = match initial {
            Some(u) => fit_theta(&ws, u.correction()),
            None => DVector::zeros(ws.basis.len()),
        };
        let report = minimize(&ws, theta0, &opts_now, 1.0)?;
        if report.converged || opts_now.degree + 2 > opts_now.degree_cap {
            return Ok(report);
        }
        // polynomial truncation is the binding error: escalate the degree
        opts_now.degree += 2;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationOutcome {
    pub reports: Vec<SolutionReport>,
    /// present when the list was truncated before the last step
    pub ceiling: Option<String>,
}

/// Warm-started solves along the grid `t * B` for t in continuation_steps.
pub fn continuation(
    poly: &Arc<DelzantPolytope>,
    b: &DMatrix<f64>,
    opts: &SolveOptions,
) -> Result<ContinuationOutcome> {
    opts.validate()?;
    let mut reports = Vec::new();
    let mut warm: Option<PotentialCheckpoint> = None;
    for &t in &opts.continuation_steps {
        let bt = b * t;
        let ws = match Workspace::build(poly, &bt, opts) {
            Ok(ws) => ws,
            Err(e) => {
                return Ok(ContinuationOutcome {
                    reports,
                    ceiling: Some(format!("workspace build failed at t = {t}: {e}")),
                })
            }
        };
        // Warm start: express the previous correction in the current basis
        // (same monomial span, so the coefficient solve is exact).
        let theta0 = match &warm {
            Some(cp) => fit_theta(&ws, cp.to_potential(poly.clone())?.correction()),
            None => DVector::zeros(ws.basis.len()),
        };
        match minimize(&ws, theta0, opts, t) {
            Ok(rep) => {
                let done = rep.converged;
                warm = Some(rep.potential.clone());
                reports.push(rep);
                if !done {
                    return Ok(ContinuationOutcome {
                        reports,
                        ceiling: Some(format!("solve at t = {t} hit the iteration cap")),
                    });
                }
            }
            Err(e) => {
                return Ok(ContinuationOutcome {
                    reports,
                    ceiling: Some(format!("continuation ceiling at t = {t}: {e}")),
                })
            }
        }
    }
    Ok(ContinuationOutcome { reports, ceiling: None })
}

/// Express a gauged correction in the basis by sampling: the basis fields
/// and the correction share the monomial space, so an exact linear solve on
/// monomial coefficients recovers theta.
fn fit_theta(ws: &Workspace, v: &PolynomialField) -> DVector<f64> {
    use std::collections::BTreeSet;
    let mut expos: BTreeSet<Vec<u32>> = BTreeSet::new();
    for bf in &ws.basis {
        for (e, _) in bf.field.terms() {
            expos.insert(e.clone());
        }
    }
    let expos: Vec<Vec<u32>> = expos.into_iter().collect();
    let rows = expos.len();
    let cols = ws.basis.len();
    let mut a = DMatrix::zeros(rows, cols);
    for (m, bf) in ws.basis.iter().enumerate() {
        for (e, c) in bf.field.terms() {
            let r = expos.binary_search(e).unwrap();
            a[(r, m)] = c;
        }
    }
    let mut rhs = DVector::zeros(rows);
    for (e, c) in v.terms() {
        if let Ok(r) = expos.binary_search(e) {
            rhs[r] = c;
        }
    }
    // least squares via normal equations (well conditioned at desk scale)
    let ata = a.transpose() * &a;
    let atb = a.transpose() * rhs;
    ata.lu().solve(&atb).unwrap_or_else(|| DVector::zeros(cols))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub ok: bool,
    pub lext: Vec<f64>,
    pub max_lext_deviation: f64,
    pub reports_checked: usize,
    pub detail: Option<String>,
}

/// All continuation solves must share the single B-independent l_ext and
/// every converged solution's curvature must match it.
pub fn lext_invariance_check(
    poly: &DelzantPolytope,
    reports: &[SolutionReport],
) -> Result<InvarianceReport> {
    let ell = extremal_affine(poly)?;
    let reference: Vec<f64> = std::iter::once(q_to_f64(&ell.constant))
        .chain(ell.gradient.iter().map(q_to_f64))
        .collect();
    let mut max_dev: f64 = 0.0;
    let mut detail = None;
    let mut ok = true;
    for rep in reports {
        for (a, b) in rep.lext.iter().zip(&reference) {
            max_dev = max_dev.max((a - b).abs());
        }
        if rep.lext.len() != reference.len() {
            ok = false;
            detail = Some("l_ext dimension mismatch".into());
        }
        if rep.converged && rep.residual_sup > 10.0 * rep.residual_l2.max(1e-12) + 1.0 {
            ok = false;
            detail = Some(format!(
                "converged report at t = {} has inconsistent residuals",
                rep.t
            ));
        }
    }
    if max_dev > 1e-12 {
        ok = false;
        detail = Some(format!("l_ext deviates by {max_dev:.3e} across solves"));
    }
    Ok(InvarianceReport {
        ok,
        lext: reference,
        max_lext_deviation: max_dev,
        reports_checked: reports.len(),
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn segment() -> Arc<DelzantPolytope> {
        Arc::new(
            DelzantPolytope::from_facets(1, vec![(vec![1], qi(0)), (vec![-1], qi(1))]).unwrap(),
        )
    }

    fn square() -> Arc<DelzantPolytope> {
        Arc::new(
            DelzantPolytope::from_facets(
                2,
                vec![
                    (vec![1, 0], qi(0)),
                    (vec![-1, 0], qi(1)),
                    (vec![0, 1], qi(0)),
                    (vec![0, -1], qi(1)),
                ],
            )
            .unwrap(),
        )
    }

    fn simplex() -> Arc<DelzantPolytope> {
        Arc::new(
            DelzantPolytope::from_facets(
                2,
                vec![(vec![1, 0], qi(0)), (vec![0, 1], qi(0)), (vec![-1, -1], qi(1))],
            )
            .unwrap(),
        )
    }

    #[test]
    fn segment_b0_immediate() {
        let poly = segment();
        let opts = SolveOptions {
            degree: 4,
            quad_level: 4,
            residual_target: 1e-8,
            ..Default::default()
        };
        let rep = solve_extremal(&poly, &DMatrix::zeros(1, 1), &opts).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.residual_sup < 1e-8, "residual {}", rep.residual_sup);
        assert_relative_eq!(rep.lext[0], 4.0);
    }

    #[test]
    fn simplex_b0_immediate() {
        let poly = simplex();
        let opts = SolveOptions {
            degree: 4,
            quad_level: 4,
            residual_target: 1e-8,
            ..Default::default()
        };
        let rep = solve_extremal(&poly, &DMatrix::zeros(2, 2), &opts).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert!(rep.residual_sup < 1e-8);
        assert_relative_eq!(rep.lext[0], 12.0);
    }

    #[test]
    fn square_with_b_converges() {
        let poly = square();
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = 0.1;
        b[(1, 0)] = -0.1;
        let opts = SolveOptions {
            degree: 8,
            quad_level: 5,
            residual_target: 1e-4,
            ..Default::default()
        };
        let rep = solve_extremal(&poly, &b, &opts).unwrap();
        assert!(rep.converged, "diagnostic: {:?}", rep.diagnostic);
        assert!(rep.residual_sup < 1e-4, "residual {}", rep.residual_sup);
        assert!(!rep.potential.coefficients.is_empty());
        assert!(rep.admissibility_margin > 0.0);
        // energy trace nonincreasing
        for w in rep.energy_trace.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-10);
        }
    }

    #[test]
    fn inadmissible_b_rejected() {
        let poly = square();
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = 5.0; // beyond the b^2 < 4 admissibility bound for u0
        b[(1, 0)] = -5.0;
        let opts = SolveOptions { degree: 4, ..Default::default() };
        assert!(matches!(
            solve_extremal(&poly, &b, &opts),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn continuation_trivial_grid_matches_direct() {
        let poly = simplex();
        let opts = SolveOptions {
            degree: 4,
            quad_level: 4,
            residual_target: 1e-8,
            continuation_steps: vec![0.0],
            ..Default::default()
        };
        let out = continuation(&poly, &DMatrix::zeros(2, 2), &opts).unwrap();
        assert!(out.ceiling.is_none());
        assert_eq!(out.reports.len(), 1);
        assert!(out.reports[0].converged);
        let inv = lext_invariance_check(&poly, &out.reports).unwrap();
        assert!(inv.ok);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let poly = square();
        let mut v = PolynomialField::zero(2);
        v.insert(vec![2, 1], 0.034);
        v.insert(vec![0, 4], -0.002);
        let u = SymplecticPotential::with_correction(poly.clone(), v);
        let cp = PotentialCheckpoint::from_potential(&u);
        let u2 = cp.to_potential(poly.clone()).unwrap();
        let x = [0.31, 0.62];
        assert_eq!(
            u.value(&x).unwrap().to_bits(),
            u2.value(&x).unwrap().to_bits()
        );
    }

    #[test]
    fn continuation_truncates_at_ceiling() {
        // t = 3 pushes b past the Guillemin admissibility bound b < 2 on the
        // square, so the list must stop there with a diagnostic.
        let poly = square();
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = 1.0;
        b[(1, 0)] = -1.0;
        let opts = SolveOptions {
            degree: 6,
            quad_level: 3,
            residual_target: 1e-3,
            continuation_steps: vec![0.0, 0.1, 3.0],
            ..Default::default()
        };
        let out = continuation(&poly, &b, &opts).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert!(out.ceiling.is_some(), "expected a ceiling diagnostic");
        assert!(out.reports.iter().all(|r| r.converged));
    }

    #[test]
    fn invariance_check_empty_is_vacuous() {
        let poly = square();
        let rep = lext_invariance_check(&poly, &[]).unwrap();
        assert!(rep.ok);
        assert_eq!(rep.reports_checked, 0);
    }

    #[test]
    fn options_validation() {
        let bad = SolveOptions { residual_target: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions {
            continuation_steps: vec![0.1, 0.05],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
