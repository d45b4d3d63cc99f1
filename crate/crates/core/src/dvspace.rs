//! Finite-dimensional diffeological vector spaces ℝⁿ whose diffeology is
//! generated by the plots x ↦ |x|k for k in a subspace K.
//!
//! A linear functional is smooth iff it kills K, and a symmetric bilinear form
//! is smooth iff it kills K in either slot. Everything below is exact linear
//! algebra over ℚ.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg::{in_span, is_zero_vec, span_basis, QMat, QVec, Q};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DvsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("not a pseudo-metric: {0}")]
    InvalidMetric(MetricFailure),
    #[error("linear map does not send non-smooth directions to non-smooth directions")]
    NotSmooth,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricFailure {
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive semi-definite")]
    NotPositiveSemidefinite,
    #[error("kernel has dimension {kernel_dim} but the non-smooth subspace has dimension {expected}")]
    KernelDimension { kernel_dim: usize, expected: usize },
    #[error("kernel differs from the non-smooth subspace")]
    KernelMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DvsModel {
    dim: usize,
    k_basis: Vec<QVec>,
}

impl DvsModel {
    pub fn new(dim: usize, generators: &[QVec]) -> Result<Self, DvsError> {
        if let Some(g) = generators.iter().find(|g| g.len() != dim) {
            return Err(DvsError::DimensionMismatch { expected: dim, found: g.len() });
        }
        Ok(DvsModel { dim, k_basis: span_basis(generators, dim) })
    }

    /// ℝⁿ with its standard (fine) diffeology.
    pub fn standard(dim: usize) -> Self {
        DvsModel { dim, k_basis: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nonsmooth_basis(&self) -> &[QVec] {
        &self.k_basis
    }

    pub fn nonsmooth_dim(&self) -> usize {
        self.k_basis.len()
    }

    pub fn is_standard(&self) -> bool {
        self.k_basis.is_empty()
    }

    fn check_square(&self, a: &QMat) -> Result<(), DvsError> {
        if a.nrows() != self.dim || a.ncols() != self.dim {
            return Err(DvsError::DimensionMismatch {
                expected: self.dim,
                found: if a.nrows() != self.dim { a.nrows() } else { a.ncols() },
            });
        }
        Ok(())
    }

    /// Row-reduced basis of the annihilator of K.
    pub fn dual_space(&self) -> Vec<QVec> {
        if self.k_basis.is_empty() {
            return QMat::identity(self.dim).to_rows();
        }
        let ann = QMat::from_rows(&self.k_basis).nullspace();
        span_basis(&ann, self.dim)
    }

    pub fn dual_dim(&self) -> usize {
        self.dim - self.k_basis.len()
    }

    /// Basis of the symmetric matrices A with A·k = 0 for all k in K.
    pub fn smooth_form_basis(&self) -> Vec<QMat> {
        let n = self.dim;
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let build = |coeffs: &[Q]| {
            let mut a = QMat::zeros(n, n);
            for (c, &(i, j)) in coeffs.iter().zip(&slots) {
                a[(i, j)] = c.clone();
                a[(j, i)] = c.clone();
            }
            a
        };
        if self.k_basis.is_empty() {
            return (0..slots.len())
                .map(|s| {
                    let mut c = vec![Q::zero(); slots.len()];
                    c[s] = Q::one();
                    build(&c)
                })
                .collect();
        }
        // one linear constraint per (row of A, generator of K)
        let mut constraints = Vec::new();
        for k in &self.k_basis {
            for r in 0..n {
                let row: QVec = slots
                    .iter()
                    .map(|&(i, j)| {
                        if i == r && j == r {
                            k[r].clone()
                        } else if i == r {
                            k[j].clone()
                        } else if j == r {
                            k[i].clone()
                        } else {
                            Q::zero()
                        }
                    })
                    .collect();
                constraints.push(row);
            }
        }
        QMat::from_rows(&constraints).nullspace().iter().map(|c| build(c)).collect()
    }

    /// Checks symmetry, positive semi-definiteness and ker A = K, in that order.
    pub fn is_pseudo_metric(&self, a: &QMat) -> Result<MetricVerdict, DvsError> {
        self.check_square(a)?;
        let failure = if !a.is_symmetric() {
            Some(MetricFailure::NotSymmetric)
        } else if !a.is_positive_semidefinite() {
            Some(MetricFailure::NotPositiveSemidefinite)
        } else {
            let kernel = a.nullspace();
            if kernel.len() != self.k_basis.len() {
                Some(MetricFailure::KernelDimension { kernel_dim: kernel.len(), expected: self.k_basis.len() })
            } else if !self.k_basis.iter().all(|k| is_zero_vec(&a.mul_vec(k))) {
                Some(MetricFailure::KernelMismatch)
            } else {
                None
            }
        };
        Ok(MetricVerdict { valid: failure.is_none(), rank: a.rank(), failure })
    }

    /// The canonical pseudo-metric PᵀP, with P the projection killing K along
    /// the coordinate directions complementary to K's pivots.
    pub fn make_pseudo_metric(&self) -> PseudoMetric {
        let n = self.dim;
        let (_, pivots) = if self.k_basis.is_empty() {
            (QMat::zeros(0, n), Vec::new())
        } else {
            QMat::from_rows(&self.k_basis).rref()
        };
        let complement: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        let mut cols: Vec<QVec> = self.k_basis.clone();
        let mut images: Vec<QVec> = vec![vec![Q::zero(); n]; self.k_basis.len()];
        for &c in &complement {
            let mut e = vec![Q::zero(); n];
            e[c] = Q::one();
            cols.push(e.clone());
            images.push(e);
        }
        let b = QMat::from_columns(&cols, n);
        let p = QMat::from_columns(&images, n).mul(&b.inverse().expect("K plus complement spans"));
        let g = p.transpose().mul(&p);
        PseudoMetric { rank: n - self.k_basis.len(), matrix: g }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricVerdict {
    pub valid: bool,
    pub rank: usize,
    pub failure: Option<MetricFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoMetric {
    matrix: QMat,
    rank: usize,
}

impl PseudoMetric {
    pub fn new(model: &DvsModel, matrix: QMat) -> Result<Self, DvsError> {
        let v = model.is_pseudo_metric(&matrix)?;
        match v.failure {
            Some(f) => Err(DvsError::InvalidMetric(f)),
            None => Ok(PseudoMetric { matrix, rank: v.rank }),
        }
    }

    pub fn matrix(&self) -> &QMat {
        &self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eval(&self, u: &[Q], v: &[Q]) -> Q {
        self.matrix.form(u, v)
    }
}

/// Basis of V₀, the image of g; V = V₀ ⊕ K.
pub fn characteristic_subspace(model: &DvsModel, g: &PseudoMetric) -> Result<Vec<QVec>, DvsError> {
    model.check_square(g.matrix())?;
    Ok(span_basis(&g.matrix().to_rows(), model.dim()))
}

/// Coordinates of g(v,·) in the basis returned by `dual_space`.
pub fn pairing_map(model: &DvsModel, g: &PseudoMetric, v: &[Q]) -> Result<QVec, DvsError> {
    if v.len() != model.dim() {
        return Err(DvsError::DimensionMismatch { expected: model.dim(), found: v.len() });
    }
    let dual = model.dual_space();
    let covector = g.matrix().mul_vec(v);
    let basis = QMat::from_columns(&dual, model.dim());
    Ok(basis.solve(&covector).expect("g(v,·) annihilates K"))
}

/// Matrix of the pairing map, one column per standard basis vector.
pub fn pairing_matrix(model: &DvsModel, g: &PseudoMetric) -> QMat {
    let n = model.dim();
    let cols: Vec<QVec> = (0..n)
        .map(|j| {
            let mut e = vec![Q::zero(); n];
            e[j] = Q::one();
            pairing_map(model, g, &e).expect("dimension checked")
        })
        .collect();
    QMat::from_columns(&cols, model.dual_dim())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualMetric {
    pub basis: Vec<QVec>,
    pub matrix: QMat,
    /// B(Φu, Φv) = g(u, v) on every pair of standard basis vectors.
    pub verified: bool,
}

/// The metric on the diffeological dual induced through the pairing map.
pub fn dual_metric(model: &DvsModel, g: &PseudoMetric) -> Result<DualMetric, DvsError> {
    model.check_square(g.matrix())?;
    let p = pairing_matrix(model, g);
    let m = model.dual_dim();
    let (_, pivots) = p.rref();
    let pivot_cols: Vec<QVec> = pivots.iter().map(|&c| p.column(c)).collect();
    let p_i = QMat::from_columns(&pivot_cols, m);
    let mut a_ii = QMat::zeros(m, m);
    for (r, &i) in pivots.iter().enumerate() {
        for (c, &j) in pivots.iter().enumerate() {
            a_ii[(r, c)] = g.matrix()[(i, j)].clone();
        }
    }
    let inv = p_i.inverse().expect("pairing map is onto the dual");
    let b = inv.transpose().mul(&a_ii).mul(&inv);
    let verified = p.transpose().mul(&b).mul(&p) == *g.matrix();
    Ok(DualMetric { basis: model.dual_space(), matrix: b, verified })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapCompatibility {
    /// Fᵀ g₂ F = g₁.
    pub isometric: bool,
    /// Ker F ∩ V₀ = 0.
    pub kernel_meets_characteristic_trivially: bool,
    /// F(V₀) ⊆ W₀.
    pub preserves_characteristic: bool,
    /// F(K₁) ⊆ K₂.
    pub smooth: bool,
}

impl MapCompatibility {
    pub fn compatible(&self) -> bool {
        self.isometric
    }
}

fn check_map_shape(m1: &DvsModel, m2: &DvsModel, f: &QMat) -> Result<(), DvsError> {
    if f.ncols() != m1.dim() {
        return Err(DvsError::DimensionMismatch { expected: m1.dim(), found: f.ncols() });
    }
    if f.nrows() != m2.dim() {
        return Err(DvsError::DimensionMismatch { expected: m2.dim(), found: f.nrows() });
    }
    Ok(())
}

pub fn maps_nonsmooth_into(m1: &DvsModel, m2: &DvsModel, f: &QMat) -> bool {
    m1.nonsmooth_basis().iter().all(|k| in_span(m2.nonsmooth_basis(), &f.mul_vec(k)))
}

pub fn check_map_compatibility(
    m1: &DvsModel,
    g1: &PseudoMetric,
    m2: &DvsModel,
    g2: &PseudoMetric,
    f: &QMat,
) -> Result<MapCompatibility, DvsError> {
    check_map_shape(m1, m2, f)?;
    let isometric = f.transpose().mul(g2.matrix()).mul(f) == *g1.matrix();
    let v0 = characteristic_subspace(m1, g1)?;
    let w0 = characteristic_subspace(m2, g2)?;
    let kernel_trivial = v0.is_empty() || f.mul(&QMat::from_columns(&v0, m1.dim())).nullspace().is_empty();
    let preserves = v0.iter().all(|v| in_span(&w0, &f.mul_vec(v)));
    Ok(MapCompatibility {
        isometric,
        kernel_meets_characteristic_trivially: kernel_trivial,
        preserves_characteristic: preserves,
        smooth: maps_nonsmooth_into(m1, m2, f),
    })
}

/// Matrix of F*: W* → V*, α ↦ α∘F, in the `dual_space` bases.
pub fn dual_map(m1: &DvsModel, m2: &DvsModel, f: &QMat) -> Result<QMat, DvsError> {
    check_map_shape(m1, m2, f)?;
    let target = QMat::from_columns(&m1.dual_space(), m1.dim());
    let cols = m2
        .dual_space()
        .iter()
        .map(|alpha| {
            let pulled = f.transpose().mul_vec(alpha);
            target.solve(&pulled).ok_or(DvsError::NotSmooth)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QMat::from_columns(&cols, m1.dual_dim()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCompatibility {
    pub dual_map: QMat,
    /// g₂*(α, β) = g₁*(F*α, F*β) on every pair of dual basis vectors.
    pub compatible: bool,
    pub isomorphism: bool,
}

pub fn check_dual_compatibility(
    m1: &DvsModel,
    g1: &PseudoMetric,
    m2: &DvsModel,
    g2: &PseudoMetric,
    f: &QMat,
) -> Result<DualCompatibility, DvsError> {
    let d = dual_map(m1, m2, f)?;
    let b1 = dual_metric(m1, g1)?.matrix;
    let b2 = dual_metric(m2, g2)?.matrix;
    let compatible = d.transpose().mul(&b1).mul(&d) == b2;
    let isomorphism = d.is_square() && d.inverse().is_some();
    Ok(DualCompatibility { dual_map: d, compatible, isomorphism })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{q, qf};
    use proptest::prelude::*;

    fn v(xs: &[i64]) -> QVec {
        xs.iter().map(|&x| q(x)).collect()
    }

    fn worked() -> (DvsModel, PseudoMetric) {
        let m = DvsModel::new(3, &[v(&[0, 1, 1])]).unwrap();
        let a = QMat::from_i64(&[&[2, 1, -1], &[1, 2, -2], &[-1, -2, 2]]);
        (m.clone(), PseudoMetric::new(&m, a).unwrap())
    }

    #[test]
    fn dual_space_examples() {
        let (m, _) = worked();
        assert_eq!(m.dual_space(), vec![v(&[1, 0, 0]), v(&[0, 1, -1])]);
        assert_eq!(DvsModel::standard(3).dual_space().len(), 3);
        let m = DvsModel::new(2, &[v(&[0, 1])]).unwrap();
        assert_eq!(m.dual_space(), vec![v(&[1, 0])]);
    }

    #[test]
    fn smooth_forms_have_the_expected_shape() {
        let (m, _) = worked();
        let basis = m.smooth_form_basis();
        assert_eq!(basis.len(), 3);
        for a in &basis {
            // [[c,a,-a],[a,b,-b],[-a,-b,b]]
            assert!(a.is_symmetric());
            assert_eq!(a[(0, 2)], -a[(0, 1)].clone());
            assert_eq!(a[(1, 2)], -a[(1, 1)].clone());
            assert_eq!(a[(2, 2)], a[(1, 1)]);
        }
        let span: Vec<QVec> = basis.iter().map(|a| a.to_rows().concat()).collect();
        assert_eq!(span_basis(&span, 9).len(), 3);
        assert_eq!(DvsModel::standard(2).smooth_form_basis().len(), 3);
        let m = DvsModel::new(2, &[v(&[0, 1])]).unwrap();
        assert_eq!(m.smooth_form_basis(), vec![QMat::from_i64(&[&[1, 0], &[0, 0]])]);
    }

    #[test]
    fn pseudo_metric_verdicts() {
        let (m, g) = worked();
        assert_eq!(g.rank(), 2);
        assert!(DvsModel::standard(3).is_pseudo_metric(&QMat::identity(3)).unwrap().valid);
        let bad = m.is_pseudo_metric(&QMat::identity(3)).unwrap();
        assert_eq!(bad.failure, Some(MetricFailure::KernelDimension { kernel_dim: 0, expected: 1 }));
        let indefinite = QMat::from_i64(&[&[1, 0, 0], &[0, 1, -1], &[0, -1, 1]]).scale(&q(-1));
        assert_eq!(m.is_pseudo_metric(&indefinite).unwrap().failure, Some(MetricFailure::NotPositiveSemidefinite));
        let wrong_kernel = QMat::from_i64(&[&[1, 0, 0], &[0, 1, 1], &[0, 1, 1]]);
        assert_eq!(m.is_pseudo_metric(&wrong_kernel).unwrap().failure, Some(MetricFailure::KernelMismatch));
        assert!(matches!(m.is_pseudo_metric(&QMat::identity(2)), Err(DvsError::DimensionMismatch { .. })));
    }

    #[test]
    fn characteristic_subspace_examples() {
        let (m, g) = worked();
        let v0 = characteristic_subspace(&m, &g).unwrap();
        assert_eq!(v0.len(), 2);
        assert!(!in_span(&v0, &v(&[0, 1, 1])));
        let m2 = DvsModel::new(2, &[v(&[0, 1])]).unwrap();
        let g2 = PseudoMetric::new(&m2, QMat::from_i64(&[&[4, 0], &[0, 0]])).unwrap();
        assert_eq!(characteristic_subspace(&m2, &g2).unwrap(), vec![v(&[1, 0])]);
    }

    #[test]
    fn pairing_examples() {
        let (m, g) = worked();
        assert_eq!(pairing_map(&m, &g, &v(&[1, 0, 0])).unwrap(), v(&[2, 1]));
        assert_eq!(pairing_map(&m, &g, &v(&[0, 1, 1])).unwrap(), v(&[0, 0]));
        let s = DvsModel::standard(2);
        let id = PseudoMetric::new(&s, QMat::identity(2)).unwrap();
        assert_eq!(pairing_map(&s, &id, &v(&[3, -4])).unwrap(), v(&[3, -4]));
    }

    #[test]
    fn dual_metric_examples() {
        let (m, g) = worked();
        let d = dual_metric(&m, &g).unwrap();
        assert!(d.verified);
        assert_eq!(d.matrix, QMat::from_i64(&[&[6, -3], &[-3, 6]]).scale(&qf(1, 9)));
        let s = DvsModel::standard(3);
        assert_eq!(dual_metric(&s, &PseudoMetric::new(&s, QMat::identity(3)).unwrap()).unwrap().matrix, QMat::identity(3));
        let m2 = DvsModel::new(2, &[v(&[0, 1])]).unwrap();
        let g2 = PseudoMetric::new(&m2, QMat::from_i64(&[&[4, 0], &[0, 0]])).unwrap();
        assert_eq!(dual_metric(&m2, &g2).unwrap().matrix, QMat::from_rows(&[vec![qf(1, 4)]]));
    }

    #[test]
    fn map_compatibility_in_one_dimension() {
        let line = DvsModel::standard(1);
        let metric = |x: Q| PseudoMetric::new(&line, QMat::from_rows(&[vec![x]])).unwrap();
        let scale = |a: i64| QMat::from_i64(&[&[a]]);
        // f₁(0) = a² f₂(0)
        assert!(check_map_compatibility(&line, &metric(q(4)), &line, &metric(q(1)), &scale(2)).unwrap().compatible());
        assert!(!check_map_compatibility(&line, &metric(q(1)), &line, &metric(q(1)), &scale(2)).unwrap().compatible());
        let id = check_map_compatibility(&line, &metric(q(3)), &line, &metric(q(3)), &scale(1)).unwrap();
        assert!(id.compatible() && id.kernel_meets_characteristic_trivially && id.preserves_characteristic);
    }

    #[test]
    fn dual_compatibility_examples() {
        let line = DvsModel::standard(1);
        let metric = |x: i64| PseudoMetric::new(&line, QMat::from_i64(&[&[x]])).unwrap();
        let r = check_dual_compatibility(&line, &metric(9), &line, &metric(1), &QMat::from_i64(&[&[3]])).unwrap();
        assert_eq!(r.dual_map, QMat::from_i64(&[&[3]]));
        assert!(r.compatible && r.isomorphism);

        let (n, k) = (2, 1);
        let v = DvsModel::standard(n);
        let w = DvsModel::standard(n + k);
        let embed = QMat::from_i64(&[&[1, 0], &[0, 1], &[0, 0]]);
        let r = check_dual_compatibility(
            &v,
            &PseudoMetric::new(&v, QMat::identity(n)).unwrap(),
            &w,
            &PseudoMetric::new(&w, QMat::identity(n + k)).unwrap(),
            &embed,
        )
        .unwrap();
        assert!(!r.compatible && !r.isomorphism);
        // the embedding itself is an isometry even though its dual is not
        let direct = check_map_compatibility(
            &v,
            &PseudoMetric::new(&v, QMat::identity(n)).unwrap(),
            &w,
            &PseudoMetric::new(&w, QMat::identity(n + k)).unwrap(),
            &embed,
        )
        .unwrap();
        assert!(direct.compatible());
    }

    #[test]
    fn dual_map_rejects_non_smooth_maps() {
        let v = DvsModel::new(2, &[vec![q(0), q(1)]]).unwrap();
        let w = DvsModel::standard(2);
        assert_eq!(dual_map(&w, &v, &QMat::identity(2)), Ok(QMat::from_i64(&[&[1], &[0]])));
        assert_eq!(dual_map(&v, &w, &QMat::identity(2)), Err(DvsError::NotSmooth));
    }

    fn arb_model() -> impl Strategy<Value = DvsModel> {
        (1usize..5).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(-2i64..3, n), 0..n).prop_map(move |gens| {
                let gens: Vec<QVec> = gens.iter().map(|g| g.iter().map(|&x| q(x)).collect()).collect();
                DvsModel::new(n, &gens).unwrap()
            })
        })
    }

    fn arb_model_with_metric() -> impl Strategy<Value = (DvsModel, PseudoMetric)> {
        arb_model().prop_flat_map(|m| {
            let n = m.dim();
            proptest::collection::vec(-3i64..4, n * n).prop_map(move |entries| {
                // M = PᵀP + Pᵀ RᵀR P keeps ker = K and stays PSD
                let base = m.make_pseudo_metric();
                let r = QMat::from_rows(&entries.chunks(n).map(|c| c.iter().map(|&x| q(x)).collect()).collect::<Vec<_>>());
                let rr = r.transpose().mul(&r);
                let extra = base.matrix().mul(&rr).mul(base.matrix());
                let a = base.matrix().add(&extra);
                let g = PseudoMetric::new(&m, a).unwrap();
                (m.clone(), g)
            })
        })
    }

    proptest! {
        #[test]
        fn dual_dimension_complements_k(m in arb_model()) {
            prop_assert_eq!(m.dual_space().len() + m.nonsmooth_dim(), m.dim());
            for alpha in m.dual_space() {
                for k in m.nonsmooth_basis() {
                    prop_assert!(crate::linalg::dot(&alpha, k).is_zero());
                }
            }
        }

        #[test]
        fn canonical_metric_is_valid(m in arb_model()) {
            let g = m.make_pseudo_metric();
            let verdict = m.is_pseudo_metric(g.matrix()).unwrap();
            prop_assert!(verdict.valid);
            prop_assert_eq!(verdict.rank, m.dual_space().len());
        }

        #[test]
        fn pairing_and_dual_metric_laws((m, g) in arb_model_with_metric()) {
            let p = pairing_matrix(&m, &g);
            prop_assert_eq!(p.rank(), m.dual_dim());
            let kernel = p.nullspace();
            prop_assert!(crate::linalg::same_span(&kernel, m.nonsmooth_basis()));
            let d = dual_metric(&m, &g).unwrap();
            prop_assert!(d.verified);
            prop_assert!(d.matrix.is_positive_definite());
        }

        #[test]
        fn characteristic_decomposition((m, g) in arb_model_with_metric(), seed in 0usize..1000) {
            let v0 = characteristic_subspace(&m, &g).unwrap();
            prop_assert_eq!(v0.len() + m.nonsmooth_dim(), m.dim());
            let restricted = QMat::from_columns(&v0, m.dim());
            prop_assert!(restricted.transpose().mul(g.matrix()).mul(&restricted).is_positive_definite() || v0.is_empty());
            if let (Some(k), false) = (m.nonsmooth_basis().first(), v0.is_empty()) {
                let a = &v0[seed % v0.len()];
                let b = &v0[(seed / 7) % v0.len()];
                let ak: QVec = a.iter().zip(k).map(|(x, y)| x + y).collect();
                let bk: QVec = b.iter().zip(k).map(|(x, y)| x - y * q(2)).collect();
                prop_assert_eq!(g.eval(&ak, &bk), g.eval(a, b));
            }
        }
    }
}
