//! The Abreu-type curvature operator and the pointwise biHermitian frame.
//!
//! In momentum-angle coordinates a toric structure is determined by the
//! potential Hessian `G = Hess u` and the constant antisymmetric pair
//! `(A, B)`. The generalized scalar curvature is
//!
//! ```text
//! kappa(u, A, B) = - sum_{i,j} d^2/dmu_i dmu_j [ (G + iB)^{-1} ]_{ij}
//! ```
//!
//! which never sees `A`. Derivatives of the matrix inverse are propagated in
//! closed form (`dZ = -Z dG Z`), so `kappa` carries no finite-difference
//! error; a central-difference evaluation is kept as a secondary validator.
//!
//! The frame matrices live on the basis (d/dmu_1..d/dmu_n, d/dtheta_1..
//! d/dtheta_n). 2-forms are stored as the matrix of `X -> F(X, .)`, so the
//! compositions below are literal matrix products; operators act on 1-forms
//! through the metric (conjugation by g).

use crate::error::{Error, Result};
use crate::potential::{PoissonDatum, SymplecticPotential};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

const IMAG_RESIDUE_TOL: f64 = 1e-10;
const CONDITION_LIMIT: f64 = 1e14;
const DEGENERACY_TOL: f64 = 1e-6;

type CMatrix = DMatrix<Complex64>;

fn to_complex(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}

/// Sample of Z = (Hess u + iB)^{-1} at one interior point.
#[derive(Debug, Clone)]
pub struct HermitianInverse {
    pub z: CMatrix,
    /// real part; symmetric positive definite, equal to (G + B H B)^{-1}
    pub x_re: DMatrix<f64>,
    /// imaginary part; antisymmetric, equal to -G^{-1} B X
    pub y_im: DMatrix<f64>,
}

/// Invert G + iB with a condition guard.
pub fn hermitian_inverse(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    x: &[f64],
) -> Result<HermitianInverse> {
    let g = u.hessian(x)?;
    hermitian_inverse_of(&g, &datum.b)
}

pub fn hermitian_inverse_of(g: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<HermitianInverse> {
    let n = g.nrows();
    let m = to_complex(g, b);
    let eigs = hermitian_eigenvalues(g, b);
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().copied().fold(0.0_f64, f64::max);
    if min <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "Hermitian form has nonpositive eigenvalue {min:.3e}"
        )));
    }
    if max / min > CONDITION_LIMIT {
        return Err(Error::SingularMatrix(CONDITION_LIMIT));
    }
    let z = m
        .try_inverse()
        .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
    let x_re = DMatrix::from_fn(n, n, |i, j| z[(i, j)].re);
    let y_im = DMatrix::from_fn(n, n, |i, j| z[(i, j)].im);
    Ok(HermitianInverse { z, x_re, y_im })
}

/// Eigenvalues of the Hermitian G + iB via the real embedding.
pub fn hermitian_eigenvalues(g: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(g);
    m.view_mut((0, n), (n, n)).copy_from(&(-b));
    m.view_mut((n, 0), (n, n)).copy_from(b);
    m.view_mut((n, n), (n, n)).copy_from(g);
    m.symmetric_eigenvalues().iter().copied().collect()
}

/// kappa(u, A, B) by exact differentiation of the inverse.
pub fn abreu_gscal(u: &SymplecticPotential, datum: &PoissonDatum, x: &[f64]) -> Result<f64> {
    let n = u.dim();
    let g = u.hessian(x)?;
    let z = hermitian_inverse_of(&g, &datum.b)?.z;
    let d1 = u.hessian_d1(x)?;
    let d2 = u.hessian_d2(x)?;
    let d1c: Vec<CMatrix> = d1
        .iter()
        .map(|m| to_complex(m, &DMatrix::zeros(n, n)))
        .collect();
    let mut total = Complex64::new(0.0, 0.0);
    // zi[i] = Z dG_i Z
    let zi: Vec<CMatrix> = d1c.iter().map(|gi| &z * gi * &z).collect();
    for i in 0..n {
        for j in 0..n {
            let gij = to_complex(&d2[i * n + j], &DMatrix::zeros(n, n));
            // d2Z = Z Gj Z Gi Z + Z Gi Z Gj Z - Z Gij Z
            let term = &zi[j] * &d1c[i] * &z + &zi[i] * &d1c[j] * &z - &z * gij * &z;
            total += term[(i, j)];
        }
    }
    if total.im.abs() > IMAG_RESIDUE_TOL * (1.0 + total.re.abs()) {
        return Err(Error::Internal(format!(
            "imaginary residue {:.3e} in curvature",
            total.im
        )));
    }
    Ok(-total.re)
}

/// Secondary validator: central finite differences of Z entries.
pub fn abreu_gscal_fd(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    x: &[f64],
    h: f64,
) -> Result<f64> {
    let n = u.dim();
    let margin = u.polytope().interior_margin(x);
    let h = h.min(margin / 4.0);
    if h <= 0.0 {
        return Err(Error::StencilExitsPolytope);
    }
    let z_at = |p: &[f64]| -> Result<CMatrix> {
        Ok(hermitian_inverse(u, datum, p)?.z)
    };
    let mut total = Complex64::new(0.0, 0.0);
    let z0 = z_at(x)?;
    for i in 0..n {
        for j in 0..n {
            let d2 = if i == j {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (z_at(&xp)?[(i, j)] - 2.0 * z0[(i, j)] + z_at(&xm)?[(i, j)]) / (h * h)
            } else {
                let mut xpp = x.to_vec();
                let mut xpm = x.to_vec();
                let mut xmp = x.to_vec();
                let mut xmm = x.to_vec();
                xpp[i] += h;
                xpp[j] += h;
                xpm[i] += h;
                xpm[j] -= h;
                xmp[i] -= h;
                xmp[j] += h;
                xmm[i] -= h;
                xmm[j] -= h;
                (z_at(&xpp)?[(i, j)] - z_at(&xpm)?[(i, j)] - z_at(&xmp)?[(i, j)]
                    + z_at(&xmm)?[(i, j)])
                    / (4.0 * h * h)
            };
            total += d2;
        }
    }
    Ok(-total.re)
}

/// Pointwise biHermitian package in momentum-angle coordinates.
///
/// All 2-tensors are 2n x 2n matrices over the basis
/// (d/dmu_1..d/dmu_n, d/dtheta_1..d/dtheta_n); `f_flat` is the matrix of
/// `X -> F(X, .)`.
#[derive(Debug, Clone)]
pub struct PointFrame {
    pub dim: usize,
    pub g: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub f_flat: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub pi: DMatrix<f64>,
}

/// Worst-case residuals of the frame's defining relations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameResiduals {
    pub j_squared: f64,
    pub i_squared: f64,
    pub g_min_eig: f64,
    pub gj_antisym: f64,
    pub gi_antisym: f64,
    pub taming: f64,
    pub f_ij_relation: f64,
    pub pi_antisym: f64,
}

impl PointFrame {
    pub fn residuals(&self) -> FrameResiduals {
        let n2 = 2 * self.dim;
        let id = DMatrix::<f64>::identity(n2, n2);
        let gj = &self.g * &self.j;
        let gi = &self.g * &self.i;
        let fij = &self.f_flat * (&self.i + &self.j) + 2.0 * &self.g;
        FrameResiduals {
            j_squared: (&self.j * &self.j + &id).abs().max(),
            i_squared: (&self.i * &self.i + &id).abs().max(),
            g_min_eig: self
                .g
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            gj_antisym: (&gj + gj.transpose()).abs().max(),
            gi_antisym: (&gi + gi.transpose()).abs().max(),
            taming: 0.0,
            f_ij_relation: fij.abs().max(),
            pi_antisym: (&self.pi + self.pi.transpose()).abs().max(),
        }
    }

    pub fn max_defect(&self) -> f64 {
        let r = self.residuals();
        [
            r.j_squared,
            r.i_squared,
            r.gj_antisym,
            r.gi_antisym,
            r.f_ij_relation,
            r.pi_antisym,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Construct the frame of (u, A, B) at an interior point.
pub fn bihermitian_frame(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    x: &[f64],
) -> Result<PointFrame> {
    let g_hess = u.hessian(x)?;
    frame_from_matrices(&g_hess, datum)
}

pub fn frame_from_matrices(g_hess: &DMatrix<f64>, datum: &PoissonDatum) -> Result<PointFrame> {
    let n = g_hess.nrows();
    // N = (G + A)^T; the display uses (u_{,ij} + A_{ij}) per dmu_i x dtheta_j.
    let nmat = g_hess - &datum.a;
    let ninv = nmat
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&(-&ninv));
    j.view_mut((n, 0), (n, n)).copy_from(&nmat);

    let mut f_flat = DMatrix::zeros(2 * n, 2 * n);
    f_flat
        .view_mut((0, 0), (n, n))
        .copy_from(&(-2.0 * &datum.b));
    f_flat
        .view_mut((0, n), (n, n))
        .copy_from(&(-DMatrix::<f64>::identity(n, n)));
    f_flat
        .view_mut((n, 0), (n, n))
        .copy_from(&DMatrix::<f64>::identity(n, n));

    let fj = &f_flat * &j;
    let g = -0.5 * (&fj + fj.transpose());
    let b = -0.5 * (&fj - fj.transpose());
    let f_inv = f_flat
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
    let i = -&f_inv * j.transpose() * &f_flat;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
    let pi = 0.5 * (&i * &j - &j * &i) * &g_inv;
    Ok(PointFrame { dim: n, g, j, i, f_flat, b, pi })
}

/// Real part of the holomorphic Poisson tensor built directly from (A, B)
/// and the theta-frame, for cross-checking `PointFrame::pi`. The overall
/// normalization constant between the two constructions is 1.
pub fn poisson_from_datum(frame: &PointFrame, datum: &PoissonDatum) -> DMatrix<f64> {
    let n = frame.dim;
    let wedge = |u: &DVector<f64>, v: &DVector<f64>| -> DMatrix<f64> {
        v * u.transpose() - u * v.transpose()
    };
    let mut acc = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for jj in 0..n {
            let a = datum.a[(i, jj)];
            let b = datum.b[(i, jj)];
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let mut ei = DVector::zeros(2 * n);
            ei[n + i] = 1.0;
            let mut ej = DVector::zeros(2 * n);
            ej[n + jj] = 1.0;
            let jei = &frame.j * &ei;
            let jej = &frame.j * &ej;
            acc += a * (wedge(&ei, &ej) - wedge(&jei, &jej));
            acc += b * (wedge(&ei, &jej) + wedge(&jei, &ej));
        }
    }
    acc
}

// ---- algebraic identity suite ------------------------------------------

/// flat matrix of alpha ^ beta (first slot): beta alpha^T - alpha beta^T
fn wedge_flat(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    b * a.transpose() - a * b.transpose()
}

/// tr_F(psi) = 1/2 tr(F^{-1} psi)
fn tr_f(f_inv: &DMatrix<f64>, psi: &DMatrix<f64>) -> f64 {
    0.5 * (f_inv * psi).trace()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub name: String,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentitySuiteReport {
    pub seed: u64,
    pub draws: usize,
    pub residuals: Vec<IdentityResidual>,
    pub max_residual: f64,
    pub ok: bool,
}

/// Check the pointwise algebraic identities of a symplectic-type frame on
/// randomized covectors drawn from a fixed seed.
pub fn identity_suite(frame: &PointFrame, draws: usize, seed: u64) -> IdentitySuiteReport {
    let n2 = 2 * frame.dim;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g_inv = frame.g.clone().try_inverse().expect("frame metric invertible");
    let f_inv = frame
        .f_flat
        .clone()
        .try_inverse()
        .expect("frame symplectic form invertible");
    let ipj = &frame.i + &frame.j;

    // operator action on 1-forms through the metric: alpha -> g S g^{-1} alpha
    let on_form = |s: &DMatrix<f64>, a: &DVector<f64>| -> DVector<f64> {
        &frame.g * (s * (&g_inv * a))
    };
    let ip = |a: &DVector<f64>, b: &DVector<f64>| -> f64 { (a.transpose() * &g_inv * b)[(0, 0)] };

    let mut res = vec![0.0f64; 8];
    let names = [
        "trace-pairing",        // tr_F(a^b) = 1/2 <(I+J)a, b>_g
        "intertwine",           // I(I+J) = (I+J)J
        "volume-exchange",      // tr_F(a ^ Jb) = -tr_F(Ia ^ b)
        "poisson-pairing",      // <pi, a^b> = tr_F((J-I)a ^ b)
        "double-trace-left",    // deep2, first symmetrization
        "double-trace-right",   // deep2, second symmetrization
        "square-form",          // deep4
        "exchange",             // deep5
    ];
    let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / (1.0 + lhs.abs());

    // identity (2) is covector-free
    let lhs2 = (&frame.i * &ipj - &ipj * &frame.j).abs().max();
    res[1] = lhs2;

    for _ in 0..draws {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            DVector::from_fn(n2, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
        };
        let (al, be) = (draw(&mut rng), draw(&mut rng));
        let (a1, a2) = (draw(&mut rng), draw(&mut rng));
        let (b1, b2) = (draw(&mut rng), draw(&mut rng));

        let lhs = tr_f(&f_inv, &wedge_flat(&al, &be));
        let rhs = 0.5 * ip(&on_form(&ipj, &al), &be);
        res[0] = res[0].max(rel(lhs, rhs));

        let lhs = tr_f(&f_inv, &wedge_flat(&al, &on_form(&frame.j, &be)));
        let rhs = -tr_f(&f_inv, &wedge_flat(&on_form(&frame.i, &al), &be));
        res[2] = res[2].max(rel(lhs, rhs));

        let jmi = &frame.j - &frame.i;
        let lhs = -0.5 * (&frame.pi * wedge_flat(&al, &be)).trace();
        let rhs = tr_f(&f_inv, &wedge_flat(&on_form(&jmi, &al), &be));
        res[3] = res[3].max(rel(lhs, rhs));

        let gram2 = |p1: &DVector<f64>, p2: &DVector<f64>, q1: &DVector<f64>, q2: &DVector<f64>| {
            ip(p1, q1) * ip(p2, q2) - ip(p1, q2) * ip(p2, q1)
        };
        let lhs = (&f_inv * wedge_flat(&b1, &b2) * &f_inv * wedge_flat(&a1, &a2)).trace();
        let rhs_l = 0.5 * gram2(&on_form(&ipj, &a1), &on_form(&ipj, &a2), &b1, &b2);
        let rhs_r = 0.5 * gram2(&a1, &a2, &on_form(&ipj, &b1), &on_form(&ipj, &b2));
        res[4] = res[4].max(rel(lhs, rhs_l));
        res[5] = res[5].max(rel(lhs, rhs_r));

        let lhs = (&f_inv
            * wedge_flat(&be, &on_form(&frame.i, &be))
            * &f_inv
            * wedge_flat(&al, &on_form(&frame.j, &al)))
            .trace();
        let rhs = 0.5
            * (ip(&on_form(&ipj, &al), &be).powi(2)
                + ip(&on_form(&ipj, &al), &on_form(&frame.i, &be)).powi(2));
        res[6] = res[6].max(rel(lhs, rhs));

        let lhs = (&f_inv
            * wedge_flat(&on_form(&frame.i, &b1), &on_form(&frame.i, &b2))
            * &f_inv
            * wedge_flat(&a1, &a2))
            .trace();
        let rhs = (&f_inv
            * wedge_flat(&b1, &b2)
            * &f_inv
            * wedge_flat(&on_form(&frame.j, &a1), &on_form(&frame.j, &a2)))
            .trace();
        res[7] = res[7].max(rel(lhs, rhs));
    }
    let max = res.iter().copied().fold(0.0, f64::max);
    IdentitySuiteReport {
        seed,
        draws,
        residuals: names
            .iter()
            .zip(&res)
            .map(|(n, &r)| IdentityResidual { name: (*n).into(), max_residual: r })
            .collect(),
        max_residual: max,
        ok: max < 1e-10,
    }
}

// ---- independent curvature cross-check ----------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheck {
    pub kappa_abreu: f64,
    pub kappa_phi: f64,
    pub rel_err: f64,
}

/// Evaluate the curvature through the potential-independent route
/// `tr_F(d(F g^{-1} dPhi))` with `Phi = 1/2 log det(I-J) - 1/2 log det(I+J)`
/// and compare against the Abreu-type value. Points where `I - J` drops
/// rank are rejected as degenerate.
pub fn gscal_crosscheck(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    x: &[f64],
    h: f64,
) -> Result<CrossCheck> {
    let n = u.dim();
    let margin = u.polytope().interior_margin(x);
    // Frame derivatives grow like 1/L near the boundary; shrink the stencil
    // with the margin to keep the truncation error flat.
    let h = h * margin.min(1.0);
    if margin < 4.0 * h || h <= 0.0 {
        return Err(Error::StencilExitsPolytope);
    }
    {
        let fr = bihermitian_frame(u, datum, x)?;
        let imj = &fr.i - &fr.j;
        let smin = imj
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if smin < DEGENERACY_TOL {
            return Err(Error::DegeneratePoisson);
        }
    }
    let phi = |p: &[f64]| -> Result<f64> {
        let fr = bihermitian_frame(u, datum, p)?;
        let di = (&fr.i - &fr.j).determinant();
        let dp = (&fr.i + &fr.j).determinant();
        if di <= 0.0 || dp <= 0.0 {
            return Err(Error::DegeneratePoisson);
        }
        Ok(0.5 * di.ln() - 0.5 * dp.ln())
    };
    // eta = F(., g^{-1} dPhi), theta-invariant, so only mu-derivatives act.
    let eta = |p: &[f64]| -> Result<DVector<f64>> {
        let fr = bihermitian_frame(u, datum, p)?;
        let mut dphi = DVector::zeros(2 * n);
        for i in 0..n {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[i] += h;
            pm[i] -= h;
            dphi[i] = (phi(&pp)? - phi(&pm)?) / (2.0 * h);
        }
        let g_inv = fr
            .g
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
        Ok(-(&fr.f_flat * (g_inv * dphi)))
    };
    let mut d_eta = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let diff = (eta(&xp)? - eta(&xm)?) / (2.0 * h);
        d_eta.row_mut(i).copy_from(&diff.transpose());
    }
    let fr = bihermitian_frame(u, datum, x)?;
    let f_inv = fr
        .f_flat
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix(CONDITION_LIMIT))?;
    let sigma = d_eta.transpose() - &d_eta;
    let kappa_phi = 0.5 * (f_inv * sigma).trace();
    let kappa_abreu = abreu_gscal(u, datum, x)?;
    Ok(CrossCheck {
        kappa_abreu,
        kappa_phi,
        rel_err: (kappa_phi - kappa_abreu).abs() / (1.0 + kappa_abreu.abs()),
    })
}

// ---- field export --------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSample {
    pub point: Vec<f64>,
    pub kappa: f64,
    pub min_eig_margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSummary {
    pub samples: usize,
    pub average: f64,
    pub min: f64,
    pub max: f64,
}

/// Evaluate kappa and the admissibility margin on a set of interior points.
/// Point-local and parallel; the row order follows the input order, so the
/// output is independent of the thread count.
pub fn gscal_field(
    u: &SymplecticPotential,
    datum: &PoissonDatum,
    points: &[Vec<f64>],
) -> Result<(Vec<FieldSample>, FieldSummary)> {
    use rayon::prelude::*;
    let rows: Vec<FieldSample> = points
        .par_iter()
        .map(|p| -> Result<FieldSample> {
            let kappa = abreu_gscal(u, datum, p)?;
            let g = u.hessian(p)?;
            let margin = hermitian_eigenvalues(&g, &datum.b)
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Ok(FieldSample { point: p.clone(), kappa, min_eig_margin: margin })
        })
        .collect::<Result<_>>()?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for r in &rows {
        min = min.min(r.kappa);
        max = max.max(r.kappa);
        sum += r.kappa;
    }
    let summary = FieldSummary {
        samples: rows.len(),
        average: if rows.is_empty() { f64::NAN } else { sum / rows.len() as f64 },
        min,
        max,
    };
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational::qi;
    use crate::polytope::DelzantPolytope;
    use crate::potential::PolynomialField;
    use approx::assert_relative_eq;
    use std::sync::Arc;

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

    fn datum_ab(a12: f64, b12: f64) -> PoissonDatum {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = a12;
        a[(1, 0)] = -a12;
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 1)] = b12;
        b[(1, 0)] = -b12;
        PoissonDatum::new(a, b).unwrap()
    }

    #[test]
    fn hermitian_inverse_closed_form_on_square() {
        let u = SymplecticPotential::guillemin(square());
        let b = 0.1;
        let datum = datum_ab(0.0, b);
        for (x, y) in [(0.5, 0.5), (0.3, 0.8), (0.11, 0.64)] {
            let hi = hermitian_inverse(&u, &datum, &[x, y]).unwrap();
            let p = 2.0 * x * (1.0 - x);
            let q = 2.0 * y * (1.0 - y);
            let denom = 1.0 - b * b * p * q;
            assert_relative_eq!(hi.x_re[(0, 0)], p / denom, max_relative = 1e-12);
            assert_relative_eq!(hi.x_re[(1, 1)], q / denom, max_relative = 1e-12);
            assert!(hi.x_re[(0, 1)].abs() < 1e-13);
            // invariants: X = (G + BHB)^{-1}, Y = -G^{-1} B X
            let g = u.hessian(&[x, y]).unwrap();
            let h = g.clone().try_inverse().unwrap();
            let xi = (&g + &datum.b * &h * &datum.b).try_inverse().unwrap();
            assert!((&hi.x_re - &xi).abs().max() < 1e-12);
            let yi = -&h * &datum.b * &hi.x_re;
            assert!((&hi.y_im - &yi).abs().max() < 1e-12);
            assert!((&hi.y_im + hi.y_im.transpose()).abs().max() < 1e-13);
        }
        // spot value from the closed form at the center
        let hi = hermitian_inverse(&u, &datum, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(hi.x_re[(0, 0)], 0.5 / 0.9975, max_relative = 1e-13);
    }

    #[test]
    fn hermitian_inverse_real_when_b_zero() {
        let u = SymplecticPotential::guillemin(square());
        let hi = hermitian_inverse(&u, &PoissonDatum::zero(2), &[0.4, 0.6]).unwrap();
        assert!(hi.y_im.abs().max() < 1e-14);
    }

    #[test]
    fn abreu_constants_on_models() {
        let useg = SymplecticPotential::guillemin(segment());
        let d1 = PoissonDatum::zero(1);
        for x in [0.07, 0.33, 0.5, 0.91] {
            assert_relative_eq!(abreu_gscal(&useg, &d1, &[x]).unwrap(), 4.0, max_relative = 1e-11);
        }
        let usq = SymplecticPotential::guillemin(square());
        let d2 = PoissonDatum::zero(2);
        for p in [[0.5, 0.5], [0.21, 0.77], [0.05, 0.4]] {
            assert_relative_eq!(abreu_gscal(&usq, &d2, &p).unwrap(), 8.0, max_relative = 1e-11);
        }
        let usx = SymplecticPotential::guillemin(simplex());
        for p in [[1.0 / 3.0, 1.0 / 3.0], [0.2, 0.3], [0.6, 0.1]] {
            assert_relative_eq!(abreu_gscal(&usx, &d2, &p).unwrap(), 12.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn abreu_vs_fd_validator() {
        let u = SymplecticPotential::guillemin(square());
        let datum = datum_ab(0.0, 0.1);
        let x = [0.37, 0.61];
        let exact = abreu_gscal(&u, &datum, &x).unwrap();
        let fd = abreu_gscal_fd(&u, &datum, &x, 1e-3).unwrap();
        assert_relative_eq!(exact, fd, max_relative = 1e-5);
        // also with a polynomial correction
        let mut v = PolynomialField::zero(2);
        v.insert(vec![2, 1], 0.07);
        let u2 = SymplecticPotential::with_correction(square(), v);
        let exact = abreu_gscal(&u2, &datum, &x).unwrap();
        let fd = abreu_gscal_fd(&u2, &datum, &x, 1e-3).unwrap();
        assert_relative_eq!(exact, fd, max_relative = 1e-5);
    }

    #[test]
    fn abreu_is_bitwise_independent_of_a() {
        let u = SymplecticPotential::guillemin(square());
        let x = [0.42, 0.58];
        let k1 = abreu_gscal(&u, &datum_ab(0.0, 0.1), &x).unwrap();
        let k2 = abreu_gscal(&u, &datum_ab(0.7, 0.1), &x).unwrap();
        assert_eq!(k1.to_bits(), k2.to_bits());
    }

    #[test]
    fn kahler_frame_degenerates() {
        let u = SymplecticPotential::guillemin(square());
        let fr = bihermitian_frame(&u, &PoissonDatum::zero(2), &[0.3, 0.4]).unwrap();
        assert!((&fr.i - &fr.j).abs().max() < 1e-13);
        assert!(fr.b.abs().max() < 1e-13);
        // F = gJ in the Kahler case, as flat maps: F(X,.) = -(FJ)J = gJ sign
        let gj = &fr.g * &fr.j;
        assert!((&fr.f_flat - &gj).abs().max() < 1e-12);
        assert!(fr.max_defect() < 1e-12);
    }

    #[test]
    fn segment_kahler_frame_matrix() {
        let u = SymplecticPotential::guillemin(segment());
        let fr = bihermitian_frame(&u, &PoissonDatum::zero(1), &[0.25]).unwrap();
        let g = 8.0 / 3.0; // u0'' at 1/4
        assert_relative_eq!(fr.g[(0, 0)], g, max_relative = 1e-13);
        assert_relative_eq!(fr.g[(1, 1)], 1.0 / g, max_relative = 1e-13);
        assert!(fr.g[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn frame_invariants_with_a_and_b() {
        let u = SymplecticPotential::guillemin(square());
        for (a12, b12) in [(0.2, 0.0), (0.0, 0.1), (0.15, 0.1)] {
            let fr = bihermitian_frame(&u, &datum_ab(a12, b12), &[0.5, 0.5]).unwrap();
            assert!(fr.max_defect() < 1e-12, "A={a12} B={b12}: {:?}", fr.residuals());
            let r = fr.residuals();
            assert!(r.g_min_eig > 0.0);
            if a12 != 0.0 {
                assert!((&fr.i - &fr.j).abs().max() > 1e-3);
            }
        }
    }

    #[test]
    fn poisson_tensor_matches_datum_with_unit_constant() {
        let u = SymplecticPotential::guillemin(square());
        for (a12, b12) in [(0.2, 0.0), (0.0, 0.1), (0.13, 0.07)] {
            let datum = datum_ab(a12, b12);
            let fr = bihermitian_frame(&u, &datum, &[0.31, 0.57]).unwrap();
            let rebuilt = poisson_from_datum(&fr, &datum);
            assert!(
                (&fr.pi - &rebuilt).abs().max() < 1e-11,
                "A={a12} B={b12}: {}",
                (&fr.pi - &rebuilt).abs().max()
            );
        }
    }

    #[test]
    fn identity_suite_on_gk_frame() {
        let u = SymplecticPotential::guillemin(square());
        let fr = bihermitian_frame(&u, &datum_ab(0.2, 0.1), &[0.37, 0.61]).unwrap();
        let rep = identity_suite(&fr, 100, 42);
        assert!(rep.ok, "residuals: {:?}", rep.residuals);
        assert_eq!(rep.residuals.len(), 8);
    }

    #[test]
    fn identity_suite_kahler_poisson_vanishes() {
        let u = SymplecticPotential::guillemin(square());
        let fr = bihermitian_frame(&u, &PoissonDatum::zero(2), &[0.5, 0.5]).unwrap();
        assert!(fr.pi.abs().max() < 1e-13);
        let rep = identity_suite(&fr, 25, 7);
        assert!(rep.ok);
    }

    #[test]
    fn crosscheck_b_deformation() {
        let u = SymplecticPotential::guillemin(square());
        let c = gscal_crosscheck(&u, &datum_ab(0.0, 0.1), &[0.5, 0.5], 1e-3).unwrap();
        assert!(c.rel_err < 1e-4, "rel err {}", c.rel_err);
        assert_relative_eq!(c.kappa_abreu, 8.040150501659643, max_relative = 1e-9);
    }

    #[test]
    fn crosscheck_a_deformation_reproduces_kahler_kappa() {
        let u = SymplecticPotential::guillemin(square());
        let c = gscal_crosscheck(&u, &datum_ab(0.2, 0.0), &[0.37, 0.61], 1e-3).unwrap();
        assert!(c.rel_err < 1e-4, "rel err {}", c.rel_err);
        assert_relative_eq!(c.kappa_abreu, 8.0, max_relative = 1e-11);
    }

    #[test]
    fn crosscheck_rejects_kahler_point() {
        let u = SymplecticPotential::guillemin(square());
        let r = gscal_crosscheck(&u, &PoissonDatum::zero(2), &[0.5, 0.5], 1e-3);
        assert!(matches!(r, Err(Error::DegeneratePoisson)));
    }

    #[test]
    fn field_export_summary() {
        let u = SymplecticPotential::guillemin(square());
        let pts = crate::polytope::quadrature::interior_grid(u.polytope(), 8, 0.01);
        let (rows, summary) = gscal_field(&u, &PoissonDatum::zero(2), &pts).unwrap();
        assert_eq!(rows.len(), summary.samples);
        assert_relative_eq!(summary.average, 8.0, max_relative = 1e-9);
        assert!(rows.iter().all(|r| r.min_eig_margin > 0.0));
    }
}
