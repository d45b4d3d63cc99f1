//! Exact rational matrices: row reduction, nullspaces, ranks, inverses and
//! symmetric congruence.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `p`, `p/q`, or a finite decimal such as `-0.25`.
pub fn parse_q(text: &str) -> Option<Q> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let d = num_traits::pow(BigInt::from(10), frac.len());
    let v = Q::new(n, d);
    Some(if neg { -v } else { v })
}

/// Canonical text form: `p` for integers, `p/q` otherwise.
pub fn fmt_q(v: &Q) -> String {
    if v.is_integer() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Correctly rounded whenever numerator and denominator are exact in binary64.
pub fn q_to_f64(v: &Q) -> f64 {
    const EXACT: u64 = 1 << 53;
    let (n, d) = (v.numer(), v.denom());
    if n.abs() <= BigInt::from(EXACT) && d <= &BigInt::from(EXACT) {
        n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
    } else {
        v.to_f64().unwrap_or(f64::NAN)
    }
}

/// Exact rational value of a finite binary64 number.
pub fn f64_to_q(x: f64) -> Option<Q> {
    Q::from_float(x)
}

pub type QVec = Vec<Q>;

pub fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |acc, (x, y)| acc + x * y)
}

pub fn is_zero_vec(v: &[Q]) -> bool {
    v.iter().all(Zero::is_zero)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct QMat {
    rows: usize,
    cols: usize,
    data: Vec<Q>,
}

impl fmt::Debug for QMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<String>> = (0..self.rows)
            .map(|r| self.row(r).iter().map(fmt_q).collect())
            .collect();
        write!(f, "{rows:?}")
    }
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![Q::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Q::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Q>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        QMat { rows: r, cols: c, data: rows.iter().flatten().cloned().collect() }
    }

    pub fn from_i64(rows: &[&[i64]]) -> Self {
        let rows: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(|&x| q(x)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn from_columns(cols: &[Vec<Q>], nrows: usize) -> Self {
        let mut m = Self::zeros(nrows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for i in 0..nrows {
                m[(i, j)] = c[i].clone();
            }
        }
        m
    }

    pub fn diag(d: &[Q]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[Q] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> QVec {
        (0..self.rows).map(|r| self[(r, c)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<QVec> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).iter().map(q_to_f64).collect()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, other: &QMat) -> QMat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * &other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Q]) -> QVec {
        assert_eq!(self.cols, v.len(), "dimension mismatch in product");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn add(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: &Q) -> QMat {
        QMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// Bilinear form value uᵀ A v.
    pub fn form(&self, u: &[Q], v: &[Q]) -> Q {
        dot(u, &self.mul_vec(v))
    }

    pub fn kron(&self, other: &QMat) -> QMat {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = &self[(i, j)] * &other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn block_diag(&self, other: &QMat) -> QMat {
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)].clone();
            }
        }
        for i in 0..other.rows {
            for j in 0..other.cols {
                out[(self.rows + i, self.cols + j)] = other[(i, j)].clone();
            }
        }
        out
    }

    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (QMat, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m[(i, c)].is_zero()) else { continue };
            m.swap_rows(r, p);
            let inv = m[(r, c)].recip();
            for j in c..m.cols {
                m[(r, j)] = &m[(r, j)] * &inv;
            }
            for i in 0..m.rows {
                if i != r && !m[(i, c)].is_zero() {
                    let factor = m[(i, c)].clone();
                    for j in c..m.cols {
                        let delta = &factor * &m[(r, j)];
                        m[(i, j)] -= delta;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of {v : A v = 0}, one vector per free column.
    pub fn nullspace(&self) -> Vec<QVec> {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![Q::zero(); self.cols];
                v[f] = Q::one();
                for (row, &p) in pivots.iter().enumerate() {
                    v[p] = -r[(row, f)].clone();
                }
                v
            })
            .collect()
    }

    pub fn inverse(&self) -> Option<QMat> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut aug = Self::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, n + i)] = Q::one();
        }
        let (r, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = r[(i, n + j)].clone();
            }
        }
        Some(inv)
    }

    /// Solves A x = b when a solution exists.
    pub fn solve(&self, b: &[Q]) -> Option<QVec> {
        let mut aug = Self::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, self.cols)] = b[i].clone();
        }
        let (r, pivots) = aug.rref();
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![Q::zero(); self.cols];
        for (row, &p) in pivots.iter().enumerate() {
            x[p] = r[(row, self.cols)].clone();
        }
        Some(x)
    }

    /// Sign pattern of a symmetric matrix by rational congruence: returns
    /// `(positive, negative, zero)` counts of the diagonalised form.
    pub fn inertia(&self) -> (usize, usize, usize) {
        assert!(self.is_symmetric(), "inertia needs a symmetric matrix");
        let mut m = self.clone();
        let n = m.rows;
        let mut active: Vec<usize> = (0..n).collect();
        let (mut pos, mut neg) = (0, 0);
        while !active.is_empty() {
            let pivot = active.iter().copied().find(|&i| !m[(i, i)].is_zero());
            let p = match pivot {
                Some(p) => p,
                None => {
                    // all diagonal entries vanish: use a hyperbolic pair if one exists
                    let pair = active.iter().flat_map(|&i| active.iter().map(move |&j| (i, j)))
                        .find(|&(i, j)| i < j && !m[(i, j)].is_zero());
                    let Some((i, j)) = pair else { break };
                    for k in 0..n {
                        let v = m[(j, k)].clone();
                        m[(i, k)] += v;
                    }
                    for k in 0..n {
                        let v = m[(k, j)].clone();
                        m[(k, i)] += v;
                    }
                    i
                }
            };
            let d = m[(p, p)].clone();
            if d.is_positive() {
                pos += 1;
            } else {
                neg += 1;
            }
            active.retain(|&i| i != p);
            for &i in &active {
                let f = &m[(i, p)] / &d;
                if f.is_zero() {
                    continue;
                }
                for &j in &active {
                    let delta = &f * &m[(p, j)];
                    m[(i, j)] -= delta;
                }
            }
            for &i in &active {
                m[(i, p)] = Q::zero();
                m[(p, i)] = Q::zero();
            }
        }
        (pos, neg, n - pos - neg)
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.inertia().1 == 0
    }

    pub fn is_positive_definite(&self) -> bool {
        self.inertia().0 == self.rows
    }
}

impl std::ops::Index<(usize, usize)> for QMat {
    type Output = Q;
    fn index(&self, (r, c): (usize, usize)) -> &Q {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Q {
        &mut self.data[r * self.cols + c]
    }
}

/// Row-reduced basis of the span of `vectors` (zero rows dropped).
pub fn span_basis(vectors: &[QVec], dim: usize) -> Vec<QVec> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let m = QMat::from_rows(vectors);
    assert_eq!(m.ncols(), dim, "vector length mismatch");
    let (r, pivots) = m.rref();
    (0..pivots.len()).map(|i| r.row(i).to_vec()).collect()
}

pub fn in_span(basis: &[QVec], v: &[Q]) -> bool {
    if is_zero_vec(v) {
        return true;
    }
    if basis.is_empty() {
        return false;
    }
    let mut rows = basis.to_vec();
    rows.push(v.to_vec());
    QMat::from_rows(&rows).rank() == QMat::from_rows(basis).rank()
}

pub fn same_span(a: &[QVec], b: &[QVec]) -> bool {
    a.iter().all(|v| in_span(b, v)) && b.iter().all(|v| in_span(a, v))
}

/// Dense binary64 helpers used for sampled (transcendental) evaluations.
pub mod real {
    pub type Mat = Vec<Vec<f64>>;

    pub fn zeros(r: usize, c: usize) -> Mat {
        vec![vec![0.0; c]; r]
    }

    pub fn mul(a: &Mat, b: &Mat) -> Mat {
        let n = b.first().map_or(0, Vec::len);
        a.iter()
            .map(|row| (0..n).map(|j| row.iter().zip(b).map(|(x, r)| x * r[j]).sum()).collect())
            .collect()
    }

    pub fn mul_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
    }

    pub fn transpose(a: &Mat) -> Mat {
        let c = a.first().map_or(0, Vec::len);
        (0..c).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }

    pub fn form(a: &Mat, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(mul_vec(a, v)).map(|(x, y)| x * y).sum()
    }

    pub fn max_abs(a: &Mat) -> f64 {
        a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Relative closeness: |a − b| ≤ tol·(1 + max(|a|, |b|)).
    pub fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    pub fn close_vec(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
    }

    pub fn close_mat(a: &Mat, b: &Mat, tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close_vec(x, y, tol))
    }

    /// Numerical rank by Gaussian elimination with partial pivoting.
    pub fn rank(a: &Mat, tol: f64) -> usize {
        let mut m = a.clone();
        let rows = m.len();
        let cols = m.first().map_or(0, Vec::len);
        let floor = tol * max_abs(a).max(1.0);
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let p = (r..rows).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            if m[p][c].abs() <= floor {
                continue;
            }
            m.swap(r, p);
            for i in r + 1..rows {
                let f = m[i][c] / m[r][c];
                for k in c..cols {
                    m[i][k] -= f * m[r][k];
                }
            }
            r += 1;
        }
        r
    }

    /// Cholesky-based definiteness test with a relative pivot floor.
    pub fn is_positive_definite(a: &Mat, tol: f64) -> bool {
        let n = a.len();
        let scale = max_abs(a).max(1.0);
        let mut l = zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    let d = a[i][i] - s;
                    if d <= tol * scale {
                        return false;
                    }
                    l[i][i] = d.sqrt();
                } else {
                    l[i][j] = (a[i][j] - s) / l[j][j];
                }
            }
        }
        true
    }
}
