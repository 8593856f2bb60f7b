//! Labeled Delzant polytopes: validation, exact moments, and the
//! label-induced boundary measure.
//!
//! A labeled polytope is the intersection of halfspaces `L_j(x) >= 0` with
//! `L_j(x) = <nu_j, x> + c_j`, `nu_j` a primitive integer inward normal. On
//! the facet `{L_j = 0}` the boundary measure `d sigma` is normalized by
//! `dL_j ^ d sigma = dx`, which makes boundary integrals exact rational for
//! polynomial integrands.

pub mod llogl;
pub mod qpolytope;
pub mod quadrature;

use crate::error::{Error, Result};
use crate::exact::rational::{dot, format_rational, parse_rational, q_to_f64, qi, Q};
use crate::exact::{Expo, QPoly};
use num::{BigInt, Integer, One, Signed, ToPrimitive, Zero};
use qpolytope::{HalfSpace, HullStatus, QPolytope};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Raw polytope description as read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolytopeSpec {
    pub dim: usize,
    pub facets: Vec<FacetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FacetSpec {
    pub normal: Vec<i64>,
    pub offset: OffsetSpec,
}

/// Offsets are accepted as rational strings ("3/2") or plain numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetSpec {
    Text(String),
    Number(f64),
}

impl OffsetSpec {
    pub fn to_rational(&self) -> Option<Q> {
        match self {
            OffsetSpec::Text(s) => parse_rational(s),
            OffsetSpec::Number(v) => parse_rational(&format!("{v}")),
        }
    }
}

/// Machine-readable validation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticCode {
    EmptyFacetList,
    DimensionMismatch,
    ZeroNormal,
    NonPrimitiveNormal,
    Unbounded,
    EmptyOrDegenerate,
    RedundantFacet,
    VertexNotSimple,
    VertexNotUnimodular,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub checks_run: Vec<String>,
}

impl DiagnosticReport {
    fn push(&mut self, code: DiagnosticCode, detail: String) {
        self.ok = false;
        self.diagnostics.push(Diagnostic { code, detail });
    }
}

impl std::fmt::Display for DiagnosticReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.ok {
            write!(f, "ok")
        } else {
            let msgs: Vec<String> = self
                .diagnostics
                .iter()
                .map(|d| format!("{:?}: {}", d.code, d.detail))
                .collect();
            write!(f, "{}", msgs.join("; "))
        }
    }
}

/// Affine function c0 + <grad, x> with exact coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunction {
    pub constant: Q,
    pub gradient: Vec<Q>,
}

impl AffineFunction {
    pub fn constant_fn(dim: usize, c: Q) -> Self {
        AffineFunction { constant: c, gradient: vec![Q::zero(); dim] }
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        &self.constant + dot(&self.gradient, x)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        q_to_f64(&self.constant)
            + self
                .gradient
                .iter()
                .zip(x)
                .map(|(g, v)| q_to_f64(g) * v)
                .sum::<f64>()
    }

    pub fn as_poly(&self, dim: usize) -> QPoly {
        QPoly::affine(dim, self.constant.clone(), &self.gradient)
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }
}

/// Validated labeled Delzant polytope with cached vertices.
#[derive(Debug, Clone)]
pub struct DelzantPolytope {
    dim: usize,
    normals: Vec<Vec<BigInt>>,
    offsets: Vec<Q>,
    body: QPolytope,
}

/// Run all Delzant checks without constructing the polytope.
pub fn validate_delzant(spec: &PolytopeSpec) -> DiagnosticReport {
    let mut report = DiagnosticReport {
        ok: true,
        diagnostics: vec![],
        checks_run: vec![
            "facet-list".into(),
            "normal-primitivity".into(),
            "boundedness".into(),
            "interior".into(),
            "facet-nonredundancy".into(),
            "vertex-unimodularity".into(),
        ],
    };
    let n = spec.dim;
    if spec.facets.is_empty() {
        report.push(DiagnosticCode::EmptyFacetList, "no facets given".into());
        return report;
    }
    if n == 0 {
        report.push(DiagnosticCode::DimensionMismatch, "dim must be positive".into());
        return report;
    }
    let mut halfspaces = Vec::new();
    for (j, f) in spec.facets.iter().enumerate() {
        if f.normal.len() != n {
            report.push(
                DiagnosticCode::DimensionMismatch,
                format!("facet {j}: normal has length {}, expected {n}", f.normal.len()),
            );
            return report;
        }
        if f.normal.iter().all(|&v| v == 0) {
            report.push(DiagnosticCode::ZeroNormal, format!("facet {j}: zero normal"));
            return report;
        }
        let g = f
            .normal
            .iter()
            .fold(BigInt::zero(), |acc, &v| acc.gcd(&BigInt::from(v)));
        if g != BigInt::one() {
            report.push(
                DiagnosticCode::NonPrimitiveNormal,
                format!("facet {j}: gcd of normal entries is {g}"),
            );
        }
        let Some(off) = f.offset.to_rational() else {
            report.push(
                DiagnosticCode::DimensionMismatch,
                format!("facet {j}: unparseable offset"),
            );
            return report;
        };
        halfspaces.push(HalfSpace::new(
            f.normal.iter().map(|&v| qi(v)).collect(),
            off,
        ));
    }
    let body = match QPolytope::from_halfspaces(n, halfspaces) {
        Ok(b) => b,
        Err(HullStatus::Unbounded) => {
            report.push(DiagnosticCode::Unbounded, "halfspace intersection is unbounded".into());
            return report;
        }
        Err(_) => {
            report.push(
                DiagnosticCode::EmptyOrDegenerate,
                "halfspace intersection has no interior".into(),
            );
            return report;
        }
    };
    let facet_idx = body.facet_indices();
    for j in 0..body.halfspaces.len() {
        if !facet_idx.contains(&j) {
            report.push(
                DiagnosticCode::RedundantFacet,
                format!("facet {j} does not support an (n-1)-dimensional face"),
            );
        }
    }
    for (vi, _v) in body.vertices.iter().enumerate() {
        let tight = &body.tight[vi];
        if tight.len() != n {
            report.push(
                DiagnosticCode::VertexNotSimple,
                format!("vertex {vi}: {} facets meet, expected {n}", tight.len()),
            );
            continue;
        }
        let m = crate::exact::QMat::from_rows(
            tight
                .iter()
                .map(|&j| body.halfspaces[j].normal.clone())
                .collect(),
        );
        let d = m.det().abs();
        if d != qi(1) {
            report.push(
                DiagnosticCode::VertexNotUnimodular,
                format!("vertex {vi}: normal determinant {}", format_rational(&d)),
            );
        }
    }
    report
}

impl DelzantPolytope {
    pub fn from_spec(spec: &PolytopeSpec) -> Result<Self> {
        let report = validate_delzant(spec);
        if !report.ok {
            return Err(Error::InvalidPolytope(report.to_string()));
        }
        let halfspaces: Vec<HalfSpace> = spec
            .facets
            .iter()
            .map(|f| {
                HalfSpace::new(
                    f.normal.iter().map(|&v| qi(v)).collect(),
                    f.offset.to_rational().unwrap(),
                )
            })
            .collect();
        let body = QPolytope::from_halfspaces(spec.dim, halfspaces)
            .map_err(|s| Error::Internal(format!("validated polytope failed hull: {s:?}")))?;
        Ok(DelzantPolytope {
            dim: spec.dim,
            normals: spec
                .facets
                .iter()
                .map(|f| f.normal.iter().map(|&v| BigInt::from(v)).collect())
                .collect(),
            offsets: spec
                .facets
                .iter()
                .map(|f| f.offset.to_rational().unwrap())
                .collect(),
            body,
        })
    }

    /// Convenience constructor from integer normals and rational offsets.
    pub fn from_facets(dim: usize, facets: Vec<(Vec<i64>, Q)>) -> Result<Self> {
        let spec = PolytopeSpec {
            dim,
            facets: facets
                .into_iter()
                .map(|(normal, offset)| FacetSpec {
                    normal,
                    offset: OffsetSpec::Text(format_rational(&offset)),
                })
                .collect(),
        };
        Self::from_spec(&spec)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_facets(&self) -> usize {
        self.normals.len()
    }

    pub fn body(&self) -> &QPolytope {
        &self.body
    }

    pub fn vertices(&self) -> &[Vec<Q>] {
        &self.body.vertices
    }

    /// Label L_j as an exact affine function.
    pub fn label(&self, j: usize) -> AffineFunction {
        AffineFunction {
            constant: self.offsets[j].clone(),
            gradient: self.normals[j].iter().map(|v| Q::from_integer(v.clone())).collect(),
        }
    }

    pub fn labels(&self) -> Vec<AffineFunction> {
        (0..self.num_facets()).map(|j| self.label(j)).collect()
    }

    pub fn normal_f64(&self, j: usize) -> Vec<f64> {
        self.normals[j]
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// L_j evaluated at a float point.
    pub fn label_f64(&self, j: usize, x: &[f64]) -> f64 {
        q_to_f64(&self.offsets[j])
            + self.normals[j]
                .iter()
                .zip(x)
                .map(|(n, v)| n.to_f64().unwrap_or(f64::NAN) * v)
                .sum::<f64>()
    }

    /// Minimum label value over all facets; positive iff strictly interior.
    pub fn interior_margin(&self, x: &[f64]) -> f64 {
        (0..self.num_facets())
            .map(|j| self.label_f64(j, x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self, x: &[f64]) -> bool {
        self.interior_margin(x) > 0.0
    }

    pub fn barycenter(&self) -> Vec<Q> {
        self.body.vertex_barycenter()
    }

    pub fn barycenter_f64(&self) -> Vec<f64> {
        self.barycenter().iter().map(q_to_f64).collect()
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|i| {
                let lo = self
                    .vertices()
                    .iter()
                    .map(|v| q_to_f64(&v[i]))
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .vertices()
                    .iter()
                    .map(|v| q_to_f64(&v[i]))
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        self.bounding_box()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    /// Exact monomial moments for all |alpha| <= max_degree.
    pub fn moments(&self, max_degree: i64) -> Result<BTreeMap<Expo, Q>> {
        if max_degree < 0 {
            return Err(Error::BadDegree(0));
        }
        Ok(self
            .body
            .moment_table(max_degree as u32)
            .into_iter()
            .collect())
    }

    pub fn moment_of(&self, f: &QPoly) -> Q {
        self.body.moment(f)
    }

    pub fn volume(&self) -> Q {
        self.body.volume()
    }

    /// sigma-measure moment of a polynomial over one facet.
    pub fn facet_sigma_moment(&self, j: usize, f: &QPoly) -> Q {
        self.body.facet_moment(j, f)
    }

    /// sigma-measure integral of a polynomial over the whole boundary.
    pub fn boundary_moment(&self, f: &QPoly) -> Q {
        (0..self.num_facets())
            .map(|j| self.facet_sigma_moment(j, f))
            .sum()
    }

    pub fn boundary_volume(&self) -> Q {
        self.boundary_moment(&QPoly::constant(self.dim, qi(1)))
    }

    /// Quadrature of a scalar function against d sigma over the boundary;
    /// exact for polynomials up to the rule order on each facet.
    pub fn boundary_integral(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let rule = quadrature::boundary_rule(self, 4).expect("boundary rule");
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Average generalized scalar curvature 2 Vol(dP, sigma) / Vol(P, dx);
    /// a topological constant of the labeled polytope.
    pub fn average_gscal(&self) -> Q {
        qi(2) * self.boundary_volume() / self.volume()
    }

    pub fn average_gscal_f64(&self) -> f64 {
        q_to_f64(&self.average_gscal())
    }

    /// integral over P of f * L_j^k * log L_j dx, exact up to final ln calls.
    pub fn llogl_moment(&self, j: usize, f: &QPoly, k: u32) -> f64 {
        let l = self.label(j).as_poly(self.dim);
        llogl::poly_llogl(&self.body, f, &l, k)
    }

    /// sigma-integral over facet i of f * L_j^k * log L_j (i != j).
    pub fn facet_llogl_moment(&self, i: usize, j: usize, f: &QPoly, k: u32) -> f64 {
        assert_ne!(i, j);
        let chart = self.body.facet_chart(i);
        let f_c = chart.pull_back(f);
        let l_c = chart.pull_back(&self.label(j).as_poly(self.dim));
        q_to_f64(&chart.factor) * llogl::poly_llogl(&chart.polytope, &f_c, &l_c, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational::q;

    pub fn segment() -> DelzantPolytope {
        DelzantPolytope::from_facets(1, vec![(vec![1], qi(0)), (vec![-1], qi(1))]).unwrap()
    }

    pub fn square() -> DelzantPolytope {
        DelzantPolytope::from_facets(
            2,
            vec![
                (vec![1, 0], qi(0)),
                (vec![-1, 0], qi(1)),
                (vec![0, 1], qi(0)),
                (vec![0, -1], qi(1)),
            ],
        )
        .unwrap()
    }

    pub fn simplex() -> DelzantPolytope {
        DelzantPolytope::from_facets(
            2,
            vec![(vec![1, 0], qi(0)), (vec![0, 1], qi(0)), (vec![-1, -1], qi(1))],
        )
        .unwrap()
    }

    pub fn trapezoid() -> DelzantPolytope {
        DelzantPolytope::from_facets(
            2,
            vec![
                (vec![1, 0], qi(0)),
                (vec![0, 1], qi(0)),
                (vec![0, -1], qi(1)),
                (vec![-1, -1], qi(2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation_passes_on_library() {
        for p in [
            PolytopeSpec {
                dim: 1,
                facets: vec![
                    FacetSpec { normal: vec![1], offset: OffsetSpec::Number(0.0) },
                    FacetSpec { normal: vec![-1], offset: OffsetSpec::Number(1.0) },
                ],
            },
        ] {
            assert!(validate_delzant(&p).ok);
        }
        assert!(DelzantPolytope::from_facets(
            2,
            vec![
                (vec![1, 0], qi(0)),
                (vec![-1, 0], qi(1)),
                (vec![0, 1], qi(0)),
                (vec![0, -1], qi(1)),
            ],
        )
        .is_ok());
    }

    #[test]
    fn validation_rejects_unbounded() {
        let spec = PolytopeSpec {
            dim: 2,
            facets: vec![
                FacetSpec { normal: vec![1, 0], offset: OffsetSpec::Number(0.0) },
                FacetSpec { normal: vec![0, 1], offset: OffsetSpec::Number(0.0) },
            ],
        };
        let r = validate_delzant(&spec);
        assert!(!r.ok);
        assert!(r
            .diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::Unbounded));
    }

    #[test]
    fn validation_rejects_non_primitive() {
        let spec = PolytopeSpec {
            dim: 1,
            facets: vec![
                FacetSpec { normal: vec![2], offset: OffsetSpec::Number(0.0) },
                FacetSpec { normal: vec![-1], offset: OffsetSpec::Number(1.0) },
            ],
        };
        let r = validate_delzant(&spec);
        assert!(r
            .diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::NonPrimitiveNormal));
    }

    #[test]
    fn validation_rejects_bad_vertex() {
        // triangle with non-unimodular corner: x>=0, y>=0, 2-x-2y>=0 has a
        // vertex (2,0) where normals (0,1),(-1,-2) are fine, but (0,1) vs
        // (1,0) at origin fine; vertex (0,1): normals (1,0),(-1,-2) det=-2.
        let spec = PolytopeSpec {
            dim: 2,
            facets: vec![
                FacetSpec { normal: vec![1, 0], offset: OffsetSpec::Number(0.0) },
                FacetSpec { normal: vec![0, 1], offset: OffsetSpec::Number(0.0) },
                FacetSpec { normal: vec![-1, -2], offset: OffsetSpec::Number(2.0) },
            ],
        };
        let r = validate_delzant(&spec);
        assert!(r
            .diagnostics
            .iter()
            .any(|d| d.code == DiagnosticCode::VertexNotUnimodular));
    }

    #[test]
    fn segment_moments() {
        let s = segment();
        let m = s.moments(2).unwrap();
        assert_eq!(m[&vec![0u32]], qi(1));
        assert_eq!(m[&vec![1u32]], q(1, 2));
        assert_eq!(m[&vec![2u32]], q(1, 3));
        assert!(s.moments(-1).is_err());
    }

    #[test]
    fn trapezoid_area() {
        assert_eq!(trapezoid().volume(), q(3, 2));
    }

    #[test]
    fn boundary_volumes_and_average() {
        assert_eq!(segment().boundary_volume(), qi(2));
        assert_eq!(segment().average_gscal(), qi(4));
        assert_eq!(square().boundary_volume(), qi(4));
        assert_eq!(square().average_gscal(), qi(8));
        assert_eq!(simplex().boundary_volume(), qi(3));
        assert_eq!(simplex().average_gscal(), qi(12));
    }

    #[test]
    fn boundary_integral_of_x1_on_square() {
        // facets x1=0 -> 0, x1=1 -> 1, and the two x2-facets -> 1/2 each
        let sq = square();
        let x1 = QPoly::var(2, 0);
        assert_eq!(sq.boundary_moment(&x1), qi(2));
        let quad = sq.boundary_integral(|x| x[0]);
        assert!((quad - 2.0).abs() < 1e-12, "{quad}");
    }

    #[test]
    fn futaki_consistency_moments_exact() {
        // For affine ell and f: int_P ell*f from the moment table is exact.
        let sq = square();
        let ell = AffineFunction { constant: qi(8), gradient: vec![qi(0), qi(0)] };
        let f = QPoly::var(2, 0);
        let prod = ell.as_poly(2).mul(&f);
        let m = sq.moments(2).unwrap();
        assert_eq!(sq.moment_of(&prod), &m[&vec![1u32, 0u32]] * qi(8));
    }
}
