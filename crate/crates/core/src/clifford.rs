//! Clifford and exterior algebras of a finite-dimensional space with a
//! symmetric, possibly degenerate, bilinear form q, with v·v = −q(v,v).
//!
//! Clifford elements are stored on the blades of a q-orthogonal frame
//! b_1..b_n; exterior elements are stored on the blades of the standard basis.
//! Blades are bitmasks.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::Neg;

use thiserror::Error;

use crate::linalg::{QMat, Q};

pub trait Scalar: Clone + Debug + PartialOrd + num_traits::Num + Neg<Output = Self> {}
impl<T: Clone + Debug + PartialOrd + num_traits::Num + Neg<Output = T>> Scalar for T {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliffordError {
    #[error("metric is not symmetric")]
    NotSymmetric,
    #[error("no orthogonal frame: the form is not positive semi-definite")]
    NotSemidefinite,
    #[error("element uses generator {index} but the algebra has {dim}")]
    ForeignElement { index: u32, dim: usize },
    #[error("vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Sparse element of a 2ⁿ-dimensional algebra, keyed by blade bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct Multivector<S: Scalar> {
    terms: BTreeMap<u32, S>,
}

impl<S: Scalar> Default for Multivector<S> {
    fn default() -> Self {
        Multivector { terms: BTreeMap::new() }
    }
}

impl<S: Scalar> Multivector<S> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(s: S) -> Self {
        Self::blade(0, s)
    }

    pub fn one() -> Self {
        Self::scalar(S::one())
    }

    pub fn blade(mask: u32, s: S) -> Self {
        let mut m = Self::zero();
        m.add_term(mask, s);
        m
    }

    /// Σ vᵢ e_i on the degree-one blades.
    pub fn from_vector(v: &[S]) -> Self {
        let mut m = Self::zero();
        for (i, c) in v.iter().enumerate() {
            m.add_term(1 << i, c.clone());
        }
        m
    }

    pub fn add_term(&mut self, mask: u32, s: S) {
        if s.is_zero() {
            return;
        }
        let entry = self.terms.entry(mask).or_insert_with(S::zero);
        *entry = entry.clone() + s;
        if entry.is_zero() {
            self.terms.remove(&mask);
        }
    }

    pub fn coeff(&self, mask: u32) -> S {
        self.terms.get(&mask).cloned().unwrap_or_else(S::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &S)> {
        self.terms.iter().map(|(m, s)| (*m, s))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, s) in other.terms() {
            out.add_term(m, s.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-S::one()))
    }

    pub fn scale(&self, s: &S) -> Self {
        let mut out = Self::zero();
        for (m, c) in self.terms() {
            out.add_term(m, c.clone() * s.clone());
        }
        out
    }

    /// Largest blade size carrying a non-zero coefficient.
    pub fn filtration_degree(&self) -> usize {
        self.terms.keys().map(|m| m.count_ones() as usize).max().unwrap_or(0)
    }

    /// `Some(0)` or `Some(1)` for homogeneous parity, `None` when mixed.
    pub fn parity(&self) -> Option<u32> {
        let mut parities = self.terms.keys().map(|m| m.count_ones() % 2);
        let first = parities.next().unwrap_or(0);
        parities.all(|p| p == first).then_some(first)
    }

    pub fn grade(&self, k: u32) -> Self {
        Multivector { terms: self.terms.iter().filter(|(m, _)| m.count_ones() == k).map(|(m, s)| (*m, s.clone())).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Multivector<T> {
        let mut out = Multivector::zero();
        for (m, s) in self.terms() {
            out.add_term(m, f(s));
        }
        out
    }

    fn max_index(&self) -> Option<u32> {
        self.terms.keys().filter(|m| **m != 0).map(|m| 31 - m.leading_zeros()).max()
    }
}

/// Sign of e_A e_B → e_{A△B} from reordering: (−1)^{#{(a,b): a∈A, b∈B, a>b}}.
pub fn reorder_sign(a: u32, b: u32) -> bool {
    let mut swaps = 0;
    let mut rest = a >> 1;
    while rest != 0 {
        swaps += (rest & b).count_ones();
        rest >>= 1;
    }
    swaps % 2 == 1
}

pub fn sym_form<S: Scalar>(q: &[Vec<S>], u: &[S], v: &[S]) -> S {
    let mut acc = S::zero();
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            acc = acc + ui.clone() * q[i][j].clone() * vj.clone();
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordAlgebra<S: Scalar> {
    n: usize,
    metric: Vec<Vec<S>>,
    /// Columns are the orthogonal frame vectors in standard coordinates.
    frame: Vec<Vec<S>>,
    frame_inv: Vec<Vec<S>>,
    diag: Vec<S>,
}

impl<S: Scalar> CliffordAlgebra<S> {
    /// Builds the algebra of (ℝⁿ, q) on a q-orthogonal frame found by
    /// Gram–Schmidt, skipping null pivots.
    pub fn new(metric: Vec<Vec<S>>) -> Result<Self, CliffordError> {
        let n = metric.len();
        if metric.iter().any(|r| r.len() != n) {
            return Err(CliffordError::DimensionMismatch { expected: n, found: metric.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0) });
        }
        for i in 0..n {
            for j in 0..i {
                if metric[i][j] != metric[j][i] {
                    return Err(CliffordError::NotSymmetric);
                }
            }
        }
        // unit upper-triangular frame: b_i = e_i − Σ_{j<i, d_j≠0} q(e_i,b_j)/d_j b_j
        let mut basis: Vec<Vec<S>> = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let mut b = vec![S::zero(); n];
            b[i] = S::one();
            let e = b.clone();
            for (j, bj) in basis.iter().enumerate() {
                let dj: &S = &diag[j];
                if dj.is_zero() {
                    continue;
                }
                let c = sym_form(&metric, &e, bj) / dj.clone();
                for (bk, bjk) in b.iter_mut().zip(bj) {
                    *bk = bk.clone() - c.clone() * bjk.clone();
                }
            }
            diag.push(sym_form(&metric, &b, &b));
            basis.push(b);
        }
        if diag.iter().any(|d| *d < S::zero()) {
            return Err(CliffordError::NotSemidefinite);
        }
        for i in 0..n {
            for j in 0..i {
                if !sym_form(&metric, &basis[i], &basis[j]).is_zero() {
                    return Err(CliffordError::NotSemidefinite);
                }
            }
        }
        let frame_inv = unit_upper_inverse(&basis);
        Ok(CliffordAlgebra { n, metric, frame: basis, frame_inv, diag })
    }

    /// The algebra of diag(d) on the standard basis.
    pub fn diagonal(d: &[S]) -> Self {
        let n = d.len();
        let mut metric = vec![vec![S::zero(); n]; n];
        for (i, di) in d.iter().enumerate() {
            metric[i][i] = di.clone();
        }
        Self::new(metric).expect("diagonal forms are orthogonal in the standard basis")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn metric(&self) -> &[Vec<S>] {
        &self.metric
    }

    pub fn diag(&self) -> &[S] {
        &self.diag
    }

    /// The i-th frame vector in standard coordinates.
    pub fn frame_vector(&self, i: usize) -> &[S] {
        &self.frame[i]
    }

    /// Frame coordinates of a vector given in standard coordinates.
    pub fn frame_coords(&self, v: &[S]) -> Vec<S> {
        // frame_inv is stored by columns like the frame
        (0..self.n)
            .map(|r| (0..self.n).fold(S::zero(), |acc, c| acc + self.frame_inv[c][r].clone() * v[c].clone()))
            .collect()
    }

    /// The element v of the algebra, for v in standard coordinates.
    pub fn vector(&self, v: &[S]) -> Result<Multivector<S>, CliffordError> {
        if v.len() != self.n {
            return Err(CliffordError::DimensionMismatch { expected: self.n, found: v.len() });
        }
        Ok(Multivector::from_vector(&self.frame_coords(v)))
    }

    fn blade_product(&self, a: u32, b: u32) -> (S, u32) {
        let mut c = if reorder_sign(a, b) { -S::one() } else { S::one() };
        let common = a & b;
        for i in 0..self.n {
            if common & (1 << i) != 0 {
                c = c * -self.diag[i].clone();
            }
        }
        (c, a ^ b)
    }

    fn owns(&self, a: &Multivector<S>) -> Result<(), CliffordError> {
        match a.max_index() {
            Some(i) if i as usize >= self.n => Err(CliffordError::ForeignElement { index: i, dim: self.n }),
            _ => Ok(()),
        }
    }

    pub fn checked_mul(&self, a: &Multivector<S>, b: &Multivector<S>) -> Result<Multivector<S>, CliffordError> {
        self.owns(a)?;
        self.owns(b)?;
        let mut out = Multivector::zero();
        for (ma, ca) in a.terms() {
            for (mb, cb) in b.terms() {
                let (s, m) = self.blade_product(ma, mb);
                if !s.is_zero() {
                    out.add_term(m, s * ca.clone() * cb.clone());
                }
            }
        }
        Ok(out)
    }

    /// Clifford product; panics on elements of a larger algebra.
    pub fn mul(&self, a: &Multivector<S>, b: &Multivector<S>) -> Multivector<S> {
        self.checked_mul(a, b).expect("element of a different algebra")
    }

    /// Every product of frame blades: (a, b, coefficient, a△b).
    pub fn table(&self) -> Vec<(u32, u32, S, u32)> {
        let d = self.dim() as u32;
        (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| {
                let (c, m) = self.blade_product(a, b);
                (a, b, c, m)
            })
            .collect()
    }

    /// Image of a frame blade under the exterior action c, as an operator on ⋀ℝⁿ.
    pub fn act(&self, a: &Multivector<S>, alpha: &Multivector<S>) -> Multivector<S> {
        let mut out = Multivector::zero();
        for (mask, c) in a.terms() {
            let mut cur = alpha.clone();
            // c(b_{i1}⋯b_{ik}) = c(b_{i1})∘⋯∘c(b_{ik}): apply the last factor first
            for i in (0..self.n).rev() {
                if mask & (1 << i) != 0 {
                    cur = cl_action(&self.frame[i], &cur, &self.metric);
                }
            }
            out = out.add(&cur.scale(c));
        }
        out
    }

    /// σ(a) = c(a)1.
    pub fn symbol(&self, a: &Multivector<S>) -> Multivector<S> {
        self.act(a, &Multivector::one())
    }

    /// Quantization of an exterior element given on standard blades: each
    /// standard vector is rewritten in the frame and frame wedges become
    /// Clifford products of orthogonal vectors.
    pub fn quantize(&self, alpha: &Multivector<S>) -> Multivector<S> {
        let mut out = Multivector::zero();
        for (mask, c) in alpha.terms() {
            let mut acc = Multivector::one();
            for i in 0..self.n {
                if mask & (1 << i) != 0 {
                    let mut e = vec![S::zero(); self.n];
                    e[i] = S::one();
                    acc = wedge(&acc, &Multivector::from_vector(&self.frame_coords(&e)));
                }
            }
            out = out.add(&acc.scale(c));
        }
        out
    }
}

fn unit_upper_inverse<S: Scalar>(cols: &[Vec<S>]) -> Vec<Vec<S>> {
    // cols[j][i] is entry (i, j) of a unit upper-triangular matrix
    let n = cols.len();
    let mut inv = vec![vec![S::zero(); n]; n];
    for j in 0..n {
        // solve B x = e_j by back substitution
        let mut x = vec![S::zero(); n];
        for i in (0..n).rev() {
            let mut s = if i == j { S::one() } else { S::zero() };
            for k in i + 1..n {
                s = s - cols[k][i].clone() * x[k].clone();
            }
            x[i] = s;
        }
        inv[j] = x;
    }
    inv
}

/// Exterior product on standard blades.
pub fn wedge<S: Scalar>(a: &Multivector<S>, b: &Multivector<S>) -> Multivector<S> {
    let mut out = Multivector::zero();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            if ma & mb == 0 {
                let s = ca.clone() * cb.clone();
                out.add_term(ma | mb, if reorder_sign(ma, mb) { -s } else { s });
            }
        }
    }
    out
}

/// ε(v)α = v∧α.
pub fn ext_mul<S: Scalar>(v: &[S], alpha: &Multivector<S>) -> Multivector<S> {
    wedge(&Multivector::from_vector(v), alpha)
}

/// i(v)(w_1∧…∧w_l) = Σ_j (−1)^{j+1} q(v,w_j) w_1∧…ŵ_j…∧w_l on standard blades.
pub fn contract<S: Scalar>(v: &[S], alpha: &Multivector<S>, q: &[Vec<S>]) -> Multivector<S> {
    let n = q.len();
    let qv: Vec<S> = (0..n).map(|j| (0..v.len()).fold(S::zero(), |acc, i| acc + v[i].clone() * q[i][j].clone())).collect();
    let mut out = Multivector::zero();
    for (mask, c) in alpha.terms() {
        let mut position = 0;
        for (j, qvj) in qv.iter().enumerate() {
            if mask & (1 << j) == 0 {
                continue;
            }
            let s = qvj.clone() * c.clone();
            out.add_term(mask & !(1 << j), if position % 2 == 1 { -s } else { s });
            position += 1;
        }
    }
    out
}

/// c(v)α = ε(v)α − i(v)α.
pub fn cl_action<S: Scalar>(v: &[S], alpha: &Multivector<S>, q: &[Vec<S>]) -> Multivector<S> {
    ext_mul(v, alpha).sub(&contract(v, alpha, q))
}

/// Determinant by fraction-producing elimination.
pub fn det<S: Scalar>(m: &[Vec<S>]) -> S {
    let n = m.len();
    let mut a: Vec<Vec<S>> = m.to_vec();
    let mut d = S::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !a[r][c].is_zero()) else { return S::zero() };
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        let pivot = a[c][c].clone();
        d = d * pivot.clone();
        for r in c + 1..n {
            let f = a[r][c].clone() / pivot.clone();
            if f.is_zero() {
                continue;
            }
            for k in c..n {
                a[r][k] = a[r][k].clone() - f.clone() * a[c][k].clone();
            }
        }
    }
    d
}

/// Scalar product on ⋀ℝⁿ induced by q: Gram determinants on standard blades.
pub fn induced_product<S: Scalar>(q: &[Vec<S>], a: &Multivector<S>, b: &Multivector<S>) -> S {
    let mut acc = S::zero();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            if ma.count_ones() != mb.count_ones() {
                continue;
            }
            let rows: Vec<usize> = (0..q.len()).filter(|i| ma & (1 << i) != 0).collect();
            let cols: Vec<usize> = (0..q.len()).filter(|j| mb & (1 << j) != 0).collect();
            let sub: Vec<Vec<S>> = rows.iter().map(|&i| cols.iter().map(|&j| q[i][j].clone()).collect()).collect();
            acc = acc + ca.clone() * cb.clone() * det(&sub);
        }
    }
    acc
}

/// Exact algebra of a rational metric.
pub fn rational_algebra(g: &QMat) -> Result<CliffordAlgebra<Q>, CliffordError> {
    CliffordAlgebra::new(g.to_rows())
}

/// Multiplicative extension of a linear map f: V₁ → V₂ (standard coordinates,
/// `f[i][j]` = entry (i, j)) to the algebras, as the images of the frame blades of `a1`.
pub fn extend_linear_map<S: Scalar>(
    a1: &CliffordAlgebra<S>,
    a2: &CliffordAlgebra<S>,
    f: &[Vec<S>],
) -> Vec<Multivector<S>> {
    let images: Vec<Multivector<S>> = (0..a1.n())
        .map(|i| {
            let b = a1.frame_vector(i);
            let fb: Vec<S> = f.iter().map(|row| row.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())).collect();
            a2.vector(&fb).expect("map has the target dimension")
        })
        .collect();
    (0..a1.dim() as u32)
        .map(|mask| {
            let mut acc = Multivector::one();
            for (i, img) in images.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    acc = a2.mul(&acc, img);
                }
            }
            acc
        })
        .collect()
}

/// Applies a linear map given by its values on frame blades.
pub fn apply_blade_map<S: Scalar>(images: &[Multivector<S>], a: &Multivector<S>) -> Multivector<S> {
    let mut out = Multivector::zero();
    for (m, c) in a.terms() {
        out = out.add(&images[m as usize].scale(c));
    }
    out
}

/// True when the blade images define an algebra homomorphism: checked on all
/// pairs of basis blades.
pub fn is_homomorphism<S: Scalar>(a1: &CliffordAlgebra<S>, a2: &CliffordAlgebra<S>, images: &[Multivector<S>]) -> bool {
    let d = a1.dim() as u32;
    if images[0] != Multivector::one() {
        return false;
    }
    (0..d).all(|x| {
        (0..d).all(|y| {
            let xy = a1.mul(&Multivector::blade(x, S::one()), &Multivector::blade(y, S::one()));
            apply_blade_map(images, &xy) == a2.mul(&images[x as usize], &images[y as usize])
        })
    })
}
