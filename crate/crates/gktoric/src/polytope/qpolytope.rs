//! Exact rational polytopes: vertex enumeration, triangulation, moments,
//! halfspace clipping, and facet charts carrying the label-induced measure.

use crate::exact::rational::{affine_rank, dot, q_to_f64, qi, sub, QMat, Q};
use crate::exact::{Expo, QPoly};
use num::{BigInt, One, Signed, Zero};
use std::collections::BTreeSet;

/// Closed halfspace `<normal, x> + offset >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfSpace {
    pub normal: Vec<Q>,
    pub offset: Q,
}

impl HalfSpace {
    pub fn new(normal: Vec<Q>, offset: Q) -> Self {
        HalfSpace { normal, offset }
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        dot(&self.normal, x) + &self.offset
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.normal
            .iter()
            .zip(x)
            .map(|(n, v)| q_to_f64(n) * v)
            .sum::<f64>()
            + q_to_f64(&self.offset)
    }

    pub fn as_poly(&self, nvars: usize) -> QPoly {
        QPoly::affine(nvars, self.offset.clone(), &self.normal)
    }
}

/// Outcome of constructing a `QPolytope` from halfspaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HullStatus {
    Bounded,
    Unbounded,
    Empty,
    NotFullDimensional,
}

/// A bounded full-dimensional rational polytope in both representations.
#[derive(Debug, Clone)]
pub struct QPolytope {
    pub dim: usize,
    pub halfspaces: Vec<HalfSpace>,
    pub vertices: Vec<Vec<Q>>,
    /// halfspace indices tight at each vertex
    pub tight: Vec<Vec<usize>>,
}

/// A simplex as an ordered list of dim+1 vertices.
pub type Simplex = Vec<Vec<Q>>;

impl QPolytope {
    /// Enumerate vertices of the halfspace intersection. Returns the polytope
    /// or a status describing why it is not a bounded full-dimensional body.
    pub fn from_halfspaces(dim: usize, halfspaces: Vec<HalfSpace>) -> Result<Self, HullStatus> {
        assert!(halfspaces.iter().all(|h| h.normal.len() == dim));
        if dim == 0 {
            // Point polytope; feasible iff all offsets are >= 0.
            if halfspaces.iter().all(|h| !h.offset.is_negative()) {
                return Ok(QPolytope { dim, halfspaces, vertices: vec![vec![]], tight: vec![vec![]] });
            }
            return Err(HullStatus::Empty);
        }
        if unbounded(dim, &halfspaces) {
            return Err(HullStatus::Unbounded);
        }
        let vertices = enumerate_vertices(dim, &halfspaces);
        if vertices.is_empty() {
            return Err(HullStatus::Empty);
        }
        if affine_rank(&vertices) < dim {
            return Err(HullStatus::NotFullDimensional);
        }
        let tight = tight_sets(&halfspaces, &vertices);
        Ok(QPolytope { dim, halfspaces, vertices, tight })
    }

    /// Build from known vertices plus their halfspace description (used for
    /// facet charts where both representations are already available).
    pub fn from_reps(dim: usize, halfspaces: Vec<HalfSpace>, vertices: Vec<Vec<Q>>) -> Self {
        let tight = tight_sets(&halfspaces, &vertices);
        QPolytope { dim, halfspaces, vertices, tight }
    }

    pub fn vertex_barycenter(&self) -> Vec<Q> {
        let n = qi(self.vertices.len() as i64);
        let mut acc = vec![Q::zero(); self.dim];
        for v in &self.vertices {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        }
        acc.into_iter().map(|v| v / &n).collect()
    }

    pub fn contains(&self, x: &[Q]) -> bool {
        self.halfspaces.iter().all(|h| !h.eval(x).is_negative())
    }

    pub fn contains_strictly(&self, x: &[Q]) -> bool {
        self.halfspaces.iter().all(|h| h.eval(x).is_positive())
    }

    /// Indices of halfspaces that support a genuine facet.
    pub fn facet_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (j, _) in self.halfspaces.iter().enumerate() {
            let pts: Vec<Vec<Q>> = self
                .vertices
                .iter()
                .zip(&self.tight)
                .filter(|(_, t)| t.contains(&j))
                .map(|(v, _)| v.clone())
                .collect();
            if !pts.is_empty() && (self.dim == 1 || affine_rank(&pts) == self.dim - 1) {
                out.push(j);
            }
        }
        out
    }

    /// Triangulate the polytope into simplices with vertices among its own.
    pub fn triangulate(&self) -> Vec<Simplex> {
        if self.dim == 0 {
            return vec![vec![vec![]]];
        }
        let ids: Vec<usize> = (0..self.vertices.len()).collect();
        let mut out = Vec::new();
        self.triangulate_face(&ids, self.dim, &mut out);
        out.into_iter()
            .map(|ids| ids.into_iter().map(|i| self.vertices[i].clone()).collect())
            .collect()
    }

    fn triangulate_face(&self, face: &[usize], fdim: usize, out: &mut Vec<Vec<usize>>) {
        if fdim == 1 {
            // A 1-face has exactly two vertices; order deterministically.
            assert!(face.len() >= 2, "degenerate edge in triangulation");
            let mut f = face.to_vec();
            f.sort_by(|&a, &b| cmp_pts(&self.vertices[a], &self.vertices[b]));
            out.push(vec![f[0], *f.last().unwrap()]);
            return;
        }
        let anchor = *face
            .iter()
            .min_by(|&&a, &&b| cmp_pts(&self.vertices[a], &self.vertices[b]))
            .unwrap();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        for j in 0..self.halfspaces.len() {
            let sub: Vec<usize> = face
                .iter()
                .copied()
                .filter(|&i| self.tight[i].contains(&j))
                .collect();
            if sub.len() < fdim || sub.contains(&anchor) || sub.len() == face.len() {
                continue;
            }
            let pts: Vec<Vec<Q>> = sub.iter().map(|&i| self.vertices[i].clone()).collect();
            if affine_rank(&pts) != fdim - 1 {
                continue;
            }
            let mut key = sub.clone();
            key.sort_unstable();
            if !seen.insert(key) {
                continue;
            }
            let mut pieces = Vec::new();
            self.triangulate_face(&sub, fdim - 1, &mut pieces);
            for mut piece in pieces {
                piece.insert(0, anchor);
                out.push(piece);
            }
        }
    }

    /// Exact integral of a polynomial against Lebesgue measure.
    pub fn moment(&self, f: &QPoly) -> Q {
        assert_eq!(f.nvars, self.dim);
        if self.dim == 0 {
            return f.eval(&[]);
        }
        let mut acc = Q::zero();
        for s in self.triangulate() {
            acc += simplex_moment(&s, f);
        }
        acc
    }

    pub fn volume(&self) -> Q {
        self.moment(&QPoly::constant(self.dim, qi(1)))
    }

    /// Table of monomial moments for all |alpha| <= max_degree.
    pub fn moment_table(&self, max_degree: u32) -> Vec<(Expo, Q)> {
        let tris = self.triangulate();
        let mut out = Vec::new();
        for e in expos_up_to(self.dim, max_degree) {
            let f = QPoly::monomial(self.dim, e.clone(), qi(1));
            let mut acc = Q::zero();
            for s in &tris {
                acc += simplex_moment(s, &f);
            }
            out.push((e, acc));
        }
        out
    }

    /// Intersect with `<normal, x> + offset >= 0`. `None` if the result has
    /// no interior.
    pub fn clip(&self, normal: Vec<Q>, offset: Q) -> Option<QPolytope> {
        let mut hs = self.halfspaces.clone();
        hs.push(HalfSpace::new(normal, offset));
        QPolytope::from_halfspaces(self.dim, hs).ok()
    }

    /// Chart of the facet supported by halfspace `j`, carrying the measure
    /// normalized by `d ell ^ d sigma = dx` for that halfspace's affine form.
    pub fn facet_chart(&self, j: usize) -> FacetChart {
        let h = &self.halfspaces[j];
        let tight_vs: Vec<Vec<Q>> = self
            .vertices
            .iter()
            .zip(&self.tight)
            .filter(|(_, t)| t.contains(&j))
            .map(|(v, _)| v.clone())
            .collect();
        assert!(!tight_vs.is_empty(), "facet chart of non-facet halfspace");
        let base = tight_vs
            .iter()
            .min_by(|a, b| cmp_pts(a, b))
            .unwrap()
            .clone();
        let k = self.dim - 1;
        if k == 0 {
            let poly = QPolytope {
                dim: 0,
                halfspaces: vec![],
                vertices: vec![vec![]],
                tight: vec![vec![]],
            };
            return FacetChart { base, basis: vec![], factor: qi(1), polytope: poly };
        }
        let w_mat = QMat::from_rows(vec![h.normal.clone()]);
        let basis = w_mat.kernel_basis();
        assert_eq!(basis.len(), k);
        // m with <w, m> = 1 completes the frame; dy = |det[basis, m]| dz dt.
        let ww = dot(&h.normal, &h.normal);
        let m: Vec<Q> = h.normal.iter().map(|v| v / &ww).collect();
        let mut cols = basis.clone();
        cols.push(m);
        let factor = QMat::from_cols(cols).det().abs();

        // Vertices in chart coordinates: solve basis * z = v - base.
        let bmat = QMat::from_cols(basis.clone());
        let gram = mat_mul_t(&bmat);
        let chart_vertices: Vec<Vec<Q>> = tight_vs
            .iter()
            .map(|v| {
                let rhs_full = sub(v, &base);
                let rhs: Vec<Q> = (0..k).map(|r| dot(&bmat.col(r), &rhs_full)).collect();
                gram.solve(&rhs).expect("facet chart solve")
            })
            .collect();
        // Remaining constraints pulled back to chart coordinates.
        let mut chart_hs = Vec::new();
        for (i, other) in self.halfspaces.iter().enumerate() {
            if i == j {
                continue;
            }
            let n: Vec<Q> = (0..k).map(|r| dot(&other.normal, &bmat.col(r))).collect();
            let c = other.eval(&base);
            if n.iter().all(|v| v.is_zero()) {
                continue;
            }
            chart_hs.push(HalfSpace::new(n, c));
        }
        let polytope = QPolytope::from_reps(k, chart_hs, dedupe_pts(chart_vertices));
        FacetChart { base, basis, factor, polytope }
    }

    /// sigma-measure integral of an ambient polynomial over facet `j`.
    pub fn facet_moment(&self, j: usize, f: &QPoly) -> Q {
        let chart = self.facet_chart(j);
        let g = chart.pull_back(f);
        &chart.factor * chart.polytope.moment(&g)
    }
}

/// Affine chart `x = base + basis * z` of a facet, with `factor * dz` equal
/// to the halfspace-normalized facet measure.
#[derive(Debug, Clone)]
pub struct FacetChart {
    pub base: Vec<Q>,
    /// columns spanning the facet direction space
    pub basis: Vec<Vec<Q>>,
    pub factor: Q,
    pub polytope: QPolytope,
}

impl FacetChart {
    /// Compose an ambient-coordinates polynomial with the chart map.
    pub fn pull_back(&self, f: &QPoly) -> QPoly {
        let k = self.polytope.dim;
        let subs: Vec<QPoly> = (0..self.base.len())
            .map(|i| {
                let grad: Vec<Q> = self.basis.iter().map(|col| col[i].clone()).collect();
                QPoly::affine(k, self.base[i].clone(), &grad)
            })
            .collect();
        f.compose(&subs)
    }

    pub fn push_point(&self, z: &[Q]) -> Vec<Q> {
        let mut x = self.base.clone();
        for (col, zi) in self.basis.iter().zip(z) {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += ci * zi;
            }
        }
        x
    }

    pub fn push_point_f64(&self, z: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.base.iter().map(q_to_f64).collect();
        for (col, zi) in self.basis.iter().zip(z) {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += q_to_f64(ci) * zi;
            }
        }
        x
    }
}

fn mat_mul_t(b: &QMat) -> QMat {
    // Gram matrix B^T B for a matrix given by columns.
    let k = b.cols;
    let mut g = QMat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = dot(&b.col(i), &b.col(j));
        }
    }
    g
}

fn cmp_pts(a: &[Q], b: &[Q]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn dedupe_pts(mut pts: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    pts.sort_by(|a, b| cmp_pts(a, b));
    pts.dedup();
    pts
}

fn tight_sets(halfspaces: &[HalfSpace], vertices: &[Vec<Q>]) -> Vec<Vec<usize>> {
    vertices
        .iter()
        .map(|v| {
            halfspaces
                .iter()
                .enumerate()
                .filter(|(_, h)| h.eval(v).is_zero())
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Recession-cone test: the intersection is unbounded iff some nonzero
/// direction satisfies all constraints. A pointed cone has an extreme ray
/// tight on dim-1 independent normals; a cone with a line shows up as a
/// rank-deficient normal matrix.
fn unbounded(dim: usize, halfspaces: &[HalfSpace]) -> bool {
    let rows: Vec<Vec<Q>> = halfspaces.iter().map(|h| h.normal.clone()).collect();
    if rows.is_empty() || QMat::from_rows(rows.clone()).rank() < dim {
        return true;
    }
    let feasible = |d: &[Q]| halfspaces.iter().all(|h| !dot(&h.normal, d).is_negative());
    if dim == 1 {
        return feasible(&[qi(1)]) || feasible(&[qi(-1)]);
    }
    for subset in subsets(halfspaces.len(), dim - 1) {
        let m = QMat::from_rows(subset.iter().map(|&i| rows[i].clone()).collect());
        if m.rank() != dim - 1 {
            continue;
        }
        let kernel = m.kernel_basis();
        if kernel.len() != 1 {
            continue;
        }
        let d = &kernel[0];
        let neg: Vec<Q> = d.iter().map(|v| -v.clone()).collect();
        if feasible(d) || feasible(&neg) {
            return true;
        }
    }
    false
}

fn enumerate_vertices(dim: usize, halfspaces: &[HalfSpace]) -> Vec<Vec<Q>> {
    let mut out: Vec<Vec<Q>> = Vec::new();
    for subset in subsets(halfspaces.len(), dim) {
        let m = QMat::from_rows(subset.iter().map(|&i| halfspaces[i].normal.clone()).collect());
        let b: Vec<Q> = subset.iter().map(|&i| -halfspaces[i].offset.clone()).collect();
        let Some(x) = m.solve(&b) else { continue };
        if halfspaces.iter().all(|h| !h.eval(&x).is_negative()) && !out.contains(&x) {
            out.push(x);
        }
    }
    dedupe_pts(out)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact integral of a polynomial over a simplex via the Dirichlet formula.
pub fn simplex_moment(simplex: &Simplex, f: &QPoly) -> Q {
    let dim = simplex.len() - 1;
    assert_eq!(f.nvars, dim);
    if dim == 0 {
        return f.eval(&[]);
    }
    let v0 = &simplex[0];
    let cols: Vec<Vec<Q>> = simplex[1..].iter().map(|v| sub(v, v0)).collect();
    let det = QMat::from_cols(cols.clone()).det().abs();
    if det.is_zero() {
        return Q::zero();
    }
    // x_i = v0_i + sum_k E_ik s_k
    let subs: Vec<QPoly> = (0..dim)
        .map(|i| {
            let grad: Vec<Q> = cols.iter().map(|c| c[i].clone()).collect();
            QPoly::affine(dim, v0[i].clone(), &grad)
        })
        .collect();
    let g = f.compose(&subs);
    let mut acc = Q::zero();
    for (e, c) in &g.terms {
        acc += c * &dirichlet(dim, e);
    }
    acc * det
}

/// integral over the standard simplex of s^beta: prod(beta_i!) / (dim + |beta|)!
fn dirichlet(dim: usize, beta: &[u32]) -> Q {
    let mut num = BigInt::one();
    for &b in beta {
        num *= factorial(b);
    }
    let total: u32 = beta.iter().sum();
    Q::new(num, factorial(dim as u32 + total))
}

fn factorial(n: u32) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    acc
}

pub fn expos_up_to(nvars: usize, max_degree: u32) -> Vec<Expo> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; nvars];
    fn rec(i: usize, left: u32, cur: &mut Expo, out: &mut Vec<Expo>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[i] = v;
            rec(i + 1, left - v, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, max_degree, &mut cur, &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational::q;

    fn unit_square() -> QPolytope {
        QPolytope::from_halfspaces(
            2,
            vec![
                HalfSpace::new(vec![qi(1), qi(0)], qi(0)),
                HalfSpace::new(vec![qi(-1), qi(0)], qi(1)),
                HalfSpace::new(vec![qi(0), qi(1)], qi(0)),
                HalfSpace::new(vec![qi(0), qi(-1)], qi(1)),
            ],
        )
        .unwrap()
    }

    fn std_simplex() -> QPolytope {
        QPolytope::from_halfspaces(
            2,
            vec![
                HalfSpace::new(vec![qi(1), qi(0)], qi(0)),
                HalfSpace::new(vec![qi(0), qi(1)], qi(0)),
                HalfSpace::new(vec![qi(-1), qi(-1)], qi(1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn square_vertices_and_volume() {
        let p = unit_square();
        assert_eq!(p.vertices.len(), 4);
        assert_eq!(p.volume(), qi(1));
        let xy = QPoly::monomial(2, vec![1, 1], qi(1));
        assert_eq!(p.moment(&xy), q(1, 4));
    }

    #[test]
    fn simplex_moments() {
        let p = std_simplex();
        assert_eq!(p.volume(), q(1, 2));
        let xy = QPoly::monomial(2, vec![1, 1], qi(1));
        assert_eq!(p.moment(&xy), q(1, 24));
        let x2 = QPoly::monomial(2, vec![2, 0], qi(1));
        assert_eq!(p.moment(&x2), q(1, 12));
    }

    #[test]
    fn unbounded_detected() {
        let r = QPolytope::from_halfspaces(
            2,
            vec![
                HalfSpace::new(vec![qi(1), qi(0)], qi(0)),
                HalfSpace::new(vec![qi(0), qi(1)], qi(0)),
            ],
        );
        assert!(matches!(r, Err(HullStatus::Unbounded)));
    }

    #[test]
    fn empty_detected() {
        let r = QPolytope::from_halfspaces(
            1,
            vec![
                HalfSpace::new(vec![qi(1)], qi(0)),
                HalfSpace::new(vec![qi(-1)], qi(-1)),
            ],
        );
        assert!(matches!(r, Err(HullStatus::Empty)));
    }

    #[test]
    fn clip_square() {
        let p = unit_square();
        // keep x + y <= 1 half
        let c = p.clip(vec![qi(-1), qi(-1)], qi(1)).unwrap();
        assert_eq!(c.volume(), q(1, 2));
        // clip away everything
        assert!(p.clip(vec![qi(1), qi(0)], qi(-2)).is_none());
    }

    #[test]
    fn facet_measure_of_simplex_hypotenuse() {
        let p = std_simplex();
        // facet with normal (-1,-1): sigma-length must be 1 (lattice measure)
        let j = p
            .halfspaces
            .iter()
            .position(|h| h.normal == vec![qi(-1), qi(-1)])
            .unwrap();
        let one = QPoly::constant(2, qi(1));
        assert_eq!(p.facet_moment(j, &one), qi(1));
        // and x1 integrates to 1/2 on it
        let x1 = QPoly::var(2, 0);
        assert_eq!(p.facet_moment(j, &x1), q(1, 2));
    }

    #[test]
    fn cube_triangulation_and_moment() {
        let mut hs = Vec::new();
        for i in 0..3 {
            let mut n = vec![qi(0); 3];
            n[i] = qi(1);
            hs.push(HalfSpace::new(n.clone(), qi(0)));
            let mut n2 = vec![qi(0); 3];
            n2[i] = qi(-1);
            hs.push(HalfSpace::new(n2, qi(1)));
        }
        let p = QPolytope::from_halfspaces(3, hs).unwrap();
        assert_eq!(p.vertices.len(), 8);
        assert_eq!(p.volume(), qi(1));
        let xyz = QPoly::monomial(3, vec![1, 1, 1], qi(1));
        assert_eq!(p.moment(&xyz), q(1, 8));
    }

    #[test]
    fn moment_table_square() {
        let p = unit_square();
        let t = p.moment_table(2);
        let get = |e: &[u32]| -> Q {
            t.iter().find(|(k, _)| k == e).unwrap().1.clone()
        };
        assert_eq!(get(&[0, 0]), qi(1));
        assert_eq!(get(&[1, 0]), q(1, 2));
        assert_eq!(get(&[2, 0]), q(1, 3));
        assert_eq!(get(&[1, 1]), q(1, 4));
    }
}
