//! Exact rational vectors and dense matrices.
//!
//! All polytope geometry (vertex enumeration, moments, clipping) runs on
//! `BigRational` so that stability verdicts and the extremal affine system
//! never depend on floating-point rounding. Conversion to `f64` happens only
//! at the interface to the analysis modules.

use num::{BigRational, FromPrimitive, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n.into(), d.into())
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(n.into())
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Fall back to a division of rounded parts for huge operands.
        let n = x.numer().to_f64().unwrap_or(f64::NAN);
        let d = x.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

pub fn q_from_f64(x: f64) -> Option<Q> {
    Q::from_f64(x)
}

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[Q], b: &[Q]) -> Vec<Q> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[Q], s: &Q) -> Vec<Q> {
    a.iter().map(|x| x * s).collect()
}

/// Dense matrix of rationals, row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Q>,
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![Q::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = qi(1);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Q>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c));
        QMat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_cols(cols: Vec<Vec<Q>>) -> Self {
        let c = cols.len();
        let r = if c == 0 { 0 } else { cols[0].len() };
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), r);
            for (i, v) in col.iter().enumerate() {
                m[(i, j)] = v.clone();
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> &[Q] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<Q> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn mul_vec(&self, v: &[Q]) -> Vec<Q> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Row echelon reduction in place; returns (rank, pivot columns, det-if-square).
    fn eliminate(&mut self) -> (usize, Vec<usize>, Q) {
        let mut det = qi(1);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let piv = (r..self.rows).find(|&i| !self[(i, c)].is_zero());
            let Some(p) = piv else {
                continue;
            };
            if p != r {
                for j in 0..self.cols {
                    self.data.swap(p * self.cols + j, r * self.cols + j);
                }
                det = -det;
            }
            let inv = self[(r, c)].recip();
            det *= &self[(r, c)];
            for j in c..self.cols {
                let v = &self[(r, j)] * &inv;
                self[(r, j)] = v;
            }
            for i in 0..self.rows {
                if i != r && !self[(i, c)].is_zero() {
                    let f = self[(i, c)].clone();
                    for j in c..self.cols {
                        let v = &self[(i, j)] - &(&f * &self[(r, j)]);
                        self[(i, j)] = v;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        if r < self.rows {
            det = Q::zero();
        }
        (r, pivots, det)
    }

    pub fn rank(&self) -> usize {
        self.clone().eliminate().0
    }

    pub fn det(&self) -> Q {
        assert_eq!(self.rows, self.cols);
        self.clone().eliminate().2
    }

    /// Solve `self * x = b`; `None` when the system is singular/inconsistent.
    pub fn solve(&self, b: &[Q]) -> Option<Vec<Q>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = QMat::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, self.cols)] = b[i].clone();
        }
        let (rank, pivots, _) = aug.eliminate();
        // Inconsistent if a pivot lands in the augmented column.
        if pivots.iter().any(|&c| c == self.cols) {
            return None;
        }
        if rank < self.cols {
            return None;
        }
        let mut x = vec![Q::zero(); self.cols];
        for (r, &c) in pivots.iter().enumerate() {
            x[c] = aug[(r, self.cols)].clone();
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<QMat> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut aug = QMat::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, n + i)] = qi(1);
        }
        let (_, pivots, _) = aug.eliminate();
        // Singular iff some pivot escapes into the identity block.
        if pivots.iter().take(n).any(|&c| c >= n) || pivots.len() < n {
            return None;
        }
        let mut out = QMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = aug[(i, n + j)].clone();
            }
        }
        Some(out)
    }

    /// Basis of the kernel of `self` (viewed as a map on column vectors).
    pub fn kernel_basis(&self) -> Vec<Vec<Q>> {
        let mut m = self.clone();
        let (_, pivots, _) = m.eliminate();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Vec::new();
        for &f in &free {
            let mut v = vec![Q::zero(); self.cols];
            v[f] = qi(1);
            for (r, &c) in pivots.iter().enumerate() {
                v[c] = -m[(r, f)].clone();
            }
            basis.push(v);
        }
        basis
    }
}

impl std::ops::Index<(usize, usize)> for QMat {
    type Output = Q;
    fn index(&self, (i, j): (usize, usize)) -> &Q {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Q {
        &mut self.data[i * self.cols + j]
    }
}

/// Affine rank of a point set (dimension of its affine hull).
pub fn affine_rank(points: &[Vec<Q>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let rows: Vec<Vec<Q>> = points[1..].iter().map(|p| sub(p, &points[0])).collect();
    QMat::from_rows(rows).rank()
}

/// Parse "p/q", "p", or a plain JSON number into a rational.
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: num::BigInt = n.trim().parse().ok()?;
        let d: num::BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        Some(Q::new(n, d))
    } else if let Ok(n) = s.parse::<num::BigInt>() {
        Some(Q::from_integer(n))
    } else {
        let f: f64 = s.parse().ok()?;
        Q::from_f64(f)
    }
}

pub fn format_rational(x: &Q) -> String {
    if x.denom() == &num::BigInt::from(1) {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn gcd_of(values: &[num::BigInt]) -> num::BigInt {
    values
        .iter()
        .fold(num::BigInt::zero(), |acc, v| num::Integer::gcd(&acc, v))
        .abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let m = QMat::from_rows(vec![vec![qi(2), qi(1)], vec![qi(1), qi(3)]]);
        let x = m.solve(&[qi(5), qi(10)]).unwrap();
        assert_eq!(x, vec![qi(1), qi(3)]);
        let inv = m.inverse().unwrap();
        assert_eq!(inv.mul_vec(&[qi(5), qi(10)]), vec![qi(1), qi(3)]);
        assert_eq!(m.det(), qi(5));
    }

    #[test]
    fn singular_detection() {
        let m = QMat::from_rows(vec![vec![qi(1), qi(2)], vec![qi(2), qi(4)]]);
        assert_eq!(m.rank(), 1);
        assert!(m.solve(&[qi(1), qi(1)]).is_none());
        assert!(m.inverse().is_none());
        assert_eq!(m.det(), qi(0));
    }

    #[test]
    fn kernel() {
        let m = QMat::from_rows(vec![vec![qi(1), qi(1), qi(1)]]);
        let k = m.kernel_basis();
        assert_eq!(k.len(), 2);
        for v in k {
            assert_eq!(dot(&[qi(1), qi(1), qi(1)], &v), qi(0));
        }
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/4").unwrap(), q(3, 4));
        assert_eq!(parse_rational("-2").unwrap(), qi(-2));
        assert_eq!(parse_rational("0.5").unwrap(), q(1, 2));
        assert!(parse_rational("1/0").is_none());
    }
}
