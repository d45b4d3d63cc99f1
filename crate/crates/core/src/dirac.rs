//! Clifford modules, Clifford connections and Dirac operators.
//!
//! Fibre algebra first: exterior modules ⋀V over Cℓ(V, q) with the action
//! c(v) = ε(v) − i(v), their compatibility under a gluing and the induced
//! morphism of Clifford algebras, all exact. Then the bundle E = ⋀Λ¹(X) over
//! a wedge complex: over a point with k branches its fibre is ⋀ℝᵏ with the
//! Gram-determinant metric of g^Λ. Sections are kept in degrees 0 and 1,
//! u·1 + a·dx on each chart, and u must be continuous across glue classes.

use thiserror::Error;

use crate::bundle::{BundleError, BundleGluing};
use crate::clifford::{cl_action, extend_linear_map, induced_product, is_homomorphism, CliffordAlgebra, Multivector, Scalar};
use crate::complex::{Gluing, Point};
use crate::connection::{glue_form_connections, ConnectionError, FormConnection, VectorField};
use crate::forms::{branch_coords, check_glued_function, rho, FormsError, Leg, OneFormBundle, OneFormSection};
use crate::linalg::{fmt_q, QMat, Q};
use crate::sampling::{to_f64_mat, Coord};
use crate::symexpr::{EvalError, Expr, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiracError {
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Connection(#[from] ConnectionError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Complex(#[from] crate::complex::ComplexError),
    #[error("cannot evaluate on chart `{chart}` at {x}: {source}")]
    Eval { chart: String, x: f64, source: EvalError },
    #[error("module map is not invertible")]
    NotInvertible,
    #[error("map is not an isometry of the fibre metrics")]
    NotIsometric,
    #[error("{check} fails: {witness}")]
    Incompatible { check: &'static str, witness: String },
    #[error("{0}")]
    Shape(String),
    #[error("operator and section live over different data")]
    Mismatch,
}

fn ev<'a>(chart: &'a str, c: &Coord) -> impl Fn(EvalError) -> DiracError + 'a {
    let x = c.to_f64();
    move |source| DiracError::Eval { chart: chart.to_string(), x, source }
}

/// Coordinates of a multivector on the 2ⁿ standard blades.
pub fn blade_coords<S: Scalar>(m: &Multivector<S>, n: usize) -> Vec<S> {
    (0..1u32 << n).map(|mask| m.coeff(mask)).collect()
}

pub fn from_blade_coords<S: Scalar>(v: &[S]) -> Multivector<S> {
    let mut m = Multivector::zero();
    for (mask, c) in v.iter().enumerate() {
        m.add_term(mask as u32, c.clone());
    }
    m
}

/// ⋀F as a 2^m × 2ⁿ matrix on standard blades, for F: ℝⁿ → ℝᵐ.
pub fn exterior_map(f: &QMat) -> QMat {
    let (m, n) = (f.nrows(), f.ncols());
    let cols: Vec<Vec<Q>> = (0..1u32 << n)
        .map(|mask| {
            let mut acc = Multivector::<Q>::one();
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    acc = crate::clifford::wedge(&acc, &Multivector::from_vector(&f.column(i)));
                }
            }
            blade_coords(&acc, m)
        })
        .collect();
    QMat::from_columns(&cols, 1 << m)
}

fn unit(n: usize, i: usize) -> Vec<Q> {
    (0..n).map(|j| if i == j { Q::from_integer(1.into()) } else { Q::from_integer(0.into()) }).collect()
}

/// f̃′(c₁(v)e) = c₂(F̃v)(f̃′e) on all basis vectors v of V₁ and blades e of ⋀V₁.
/// `ftilde` maps V₁ → V₂ and `fprime` maps ⋀V₁ → ⋀V₂ on standard blades.
pub fn check_action_compatibility(q1: &QMat, q2: &QMat, ftilde: &QMat, fprime: &QMat) -> Result<(), DiracError> {
    let (n1, n2) = (q1.nrows(), q2.nrows());
    if ftilde.nrows() != n2 || ftilde.ncols() != n1 || fprime.nrows() != 1 << n2 || fprime.ncols() != 1 << n1 {
        return Err(DiracError::Shape("maps do not match the module dimensions".into()));
    }
    if fprime.inverse().is_none() {
        return Err(DiracError::NotInvertible);
    }
    let (g1, g2) = (q1.to_rows(), q2.to_rows());
    for i in 0..n1 {
        let v = unit(n1, i);
        let fv = ftilde.mul_vec(&v);
        for mask in 0..1usize << n1 {
            let e = unit(1 << n1, mask);
            let lhs = fprime.mul_vec(&blade_coords(&cl_action(&v, &from_blade_coords(&e), &g1), n1));
            let rhs = blade_coords(&cl_action(&fv, &from_blade_coords(&fprime.mul_vec(&e)), &g2), n2);
            if lhs != rhs {
                return Err(DiracError::Incompatible { check: "action compatibility", witness: format!("generator {i} on blade {mask:#b}") });
            }
        }
    }
    Ok(())
}

/// c(v)c(w) + c(w)c(v) = −2q(v,w) on ⋀ℝⁿ for all basis pairs, which makes c
/// an action of Cℓ(ℝⁿ, q).
pub fn is_clifford_action<S: Scalar>(q: &[Vec<S>], same: impl Fn(&Multivector<S>, &Multivector<S>) -> bool) -> bool {
    let n = q.len();
    let e = |i: usize| -> Vec<S> { (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect() };
    (0..n).all(|i| {
        (0..n).all(|j| {
            (0..1u32 << n).all(|mask| {
                let b = Multivector::blade(mask, S::one());
                let ij = cl_action(&e(i), &cl_action(&e(j), &b, q), q);
                let ji = cl_action(&e(j), &cl_action(&e(i), &b, q), q);
                let two = S::one() + S::one();
                same(&ij.add(&ji), &b.scale(&-(two * q[i][j].clone())))
            })
        })
    })
}

/// The action on the glued fibre over a glue point: c₂ transported by the
/// compatibility of the two actions.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedAction {
    pub metric: QMat,
}

impl GluedAction {
    pub fn act(&self, v: &[Q], e: &Multivector<Q>) -> Multivector<Q> {
        cl_action(v, e, &self.metric.to_rows())
    }
}

pub fn induced_action(q1: &QMat, q2: &QMat, ftilde: &QMat, fprime: &QMat) -> Result<GluedAction, DiracError> {
    check_action_compatibility(q1, q2, ftilde, fprime)?;
    if !is_clifford_action(&q2.to_rows(), |a, b| a == b) {
        return Err(DiracError::Incompatible { check: "induced action", witness: "anticommutator".into() });
    }
    Ok(GluedAction { metric: q2.clone() })
}

/// F̃^Cℓ: the multiplicative extension of an isometry F̃: (V₁,q₁) → (V₂,q₂),
/// as images of the frame blades of Cℓ(V₁, q₁).
pub fn clifford_gluing(q1: &QMat, q2: &QMat, ftilde: &QMat) -> Result<(CliffordAlgebra<Q>, CliffordAlgebra<Q>, Vec<Multivector<Q>>), DiracError> {
    if ftilde.nrows() != q2.nrows() || ftilde.ncols() != q1.nrows() {
        return Err(DiracError::Shape("map does not match the fibre dimensions".into()));
    }
    if ftilde.transpose().mul(q2).mul(ftilde) != *q1 {
        return Err(DiracError::NotIsometric);
    }
    let a1 = crate::clifford::rational_algebra(q1).map_err(|e| DiracError::Shape(e.to_string()))?;
    let a2 = crate::clifford::rational_algebra(q2).map_err(|e| DiracError::Shape(e.to_string()))?;
    let images = extend_linear_map(&a1, &a2, &ftilde.to_rows());
    if !is_homomorphism(&a1, &a2, &images) {
        return Err(DiracError::NotIsometric);
    }
    Ok((a1, a2, images))
}

/// Clifford product in the fibre of Cℓ(V₁ ∪ V₂, g̃) over p, on standard blades.
pub fn glued_clifford_product(g: &BundleGluing, p: &Point, a: &Multivector<f64>, b: &Multivector<f64>) -> Result<Multivector<f64>, DiracError> {
    let metric = to_f64_mat(&g.glued.metric_at(p)?);
    let alg = CliffordAlgebra::new(metric).map_err(|e| DiracError::Shape(e.to_string()))?;
    let frame = |m: &Multivector<f64>| -> Multivector<f64> {
        // standard blades to frame blades
        let mut out = Multivector::zero();
        for (mask, c) in m.terms() {
            let mut acc = Multivector::one();
            for i in 0..alg.n() {
                if mask & (1 << i) != 0 {
                    let e: Vec<f64> = (0..alg.n()).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
                    acc = crate::clifford::wedge(&acc, &Multivector::from_vector(&alg.frame_coords(&e)));
                }
            }
            out = out.add(&acc.scale(c));
        }
        out
    };
    let prod = alg.mul(&frame(a), &frame(b));
    // frame wedges of orthogonal vectors back to standard blades
    let mut out = Multivector::zero();
    for (mask, c) in prod.terms() {
        let mut acc = Multivector::one();
        for i in 0..alg.n() {
            if mask & (1 << i) != 0 {
                acc = crate::clifford::wedge(&acc, &Multivector::from_vector(alg.frame_vector(i)));
            }
        }
        out = out.add(&acc.scale(c));
    }
    Ok(out)
}

/// E = ⋀Λ¹(X) with the action c(v) = ε(v) − i(v) for q = g^Λ.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorBundle {
    forms: OneFormBundle,
}

pub fn exterior_module(forms: OneFormBundle) -> ExteriorBundle {
    ExteriorBundle { forms }
}

impl ExteriorBundle {
    pub fn forms(&self) -> &OneFormBundle {
        &self.forms
    }

    pub fn fibre_dim(&self, p: &Point) -> Result<usize, DiracError> {
        Ok(1 << self.forms.fibre_dim(p)?)
    }

    pub fn q_at(&self, p: &Point) -> Result<Vec<Vec<f64>>, DiracError> {
        Ok(to_f64_mat(&self.forms.metric_at(p)?))
    }

    /// g^Λ(p) when all of its entries are exact.
    pub fn exact_q_at(&self, p: &Point) -> Result<Option<QMat>, DiracError> {
        Ok(crate::sampling::exact_matrix(&self.forms.metric_at(p)?))
    }

    pub fn act(&self, p: &Point, v: &[f64], e: &Multivector<f64>) -> Result<Multivector<f64>, DiracError> {
        Ok(cl_action(v, e, &self.q_at(p)?))
    }

    /// Gram-determinant metric of E over p.
    pub fn metric(&self, p: &Point, a: &Multivector<f64>, b: &Multivector<f64>) -> Result<f64, DiracError> {
        Ok(induced_product(&self.q_at(p)?, a, b))
    }

    /// The anticommutation relations of c over p: exact when g^Λ(p) is.
    pub fn check_action(&self, p: &Point, tol: f64) -> Result<bool, DiracError> {
        if let Some(q) = self.exact_q_at(p)? {
            return Ok(is_clifford_action(&q.to_rows(), |a, b| a == b));
        }
        let q = self.q_at(p)?;
        let n = q.len();
        Ok(is_clifford_action(&q, |a, b| {
            let (x, y) = (blade_coords(a, n), blade_coords(b, n));
            crate::linalg::real::close_vec(&x, &y, tol)
        }))
    }

    /// max |g(c(α)e₁, c(α)e₂) − g(e₁, e₂)| over blades, for α rescaled to g^Λ-unit length.
    pub fn unitarity_defect(&self, p: &Point, alpha: &[f64]) -> Result<f64, DiracError> {
        let q = self.q_at(p)?;
        let n = q.len();
        let norm = crate::linalg::real::form(&q, alpha, alpha);
        if norm <= 0.0 {
            return Err(DiracError::Shape("α has no unit rescaling".into()));
        }
        let a: Vec<f64> = alpha.iter().map(|x| x / norm.sqrt()).collect();
        let mut worst: f64 = 0.0;
        for m1 in 0..1u32 << n {
            for m2 in 0..1u32 << n {
                let (e1, e2) = (Multivector::blade(m1, 1.0), Multivector::blade(m2, 1.0));
                let lhs = induced_product(&q, &cl_action(&a, &e1, &q), &cl_action(&a, &e2, &q));
                worst = worst.max((lhs - induced_product(&q, &e1, &e2)).abs());
            }
        }
        Ok(worst)
    }
}

/// u·1 + a·dx on each chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorSection {
    pub u: Vec<Expr>,
    pub a: Vec<Expr>,
}

impl ExteriorSection {
    pub fn zero(e: &ExteriorBundle) -> Self {
        let n = e.forms.coefficients().len();
        ExteriorSection { u: vec![Expr::zero(); n], a: vec![Expr::zero(); n] }
    }

    pub fn check(&self, e: &ExteriorBundle, tol: f64) -> Result<(), DiracError> {
        let n = e.forms.coefficients().len();
        if self.u.len() != n || self.a.len() != n {
            return Err(DiracError::Mismatch);
        }
        Ok(check_glued_function(e.forms.base(), &self.u, tol)?)
    }

    /// s₁ ∪ s₂: the chart data of both factors, in chart order.
    pub fn glue(s1: &ExteriorSection, s2: &ExteriorSection) -> Self {
        ExteriorSection { u: s1.u.iter().chain(&s2.u).cloned().collect(), a: s1.a.iter().chain(&s2.a).cloned().collect() }
    }

    pub fn add(&self, other: &ExteriorSection) -> Self {
        let sum = |x: &[Expr], y: &[Expr]| x.iter().zip(y).map(|(a, b)| a.clone() + b.clone()).collect();
        ExteriorSection { u: sum(&self.u, &other.u), a: sum(&self.a, &other.a) }
    }

    /// Branch values over p: (u_i, a_i) for each branch.
    pub fn branch_values(&self, e: &ExteriorBundle, p: &Point) -> Result<Vec<(f64, f64)>, DiracError> {
        branch_coords(e.forms.base(), p)?
            .iter()
            .map(|(i, b, c)| {
                let u = c.eval(&self.u[*i]).map_err(ev(&b.chart, c))?.to_f64();
                let a = c.eval(&self.a[*i]).map_err(ev(&b.chart, c))?.to_f64();
                Ok((u, a))
            })
            .collect()
    }

    /// s(p) in ⋀ℝᵏ: the average of the u_i on 1 and a_i on the i-th generator.
    pub fn value_at(&self, e: &ExteriorBundle, p: &Point) -> Result<Multivector<f64>, DiracError> {
        Ok(assemble(&self.branch_values(e, p)?, &[]))
    }
}

/// ι: a scalar part averaged with the given multiplicities and one generator
/// per branch. Empty multiplicities mean one per entry.
fn assemble(parts: &[(f64, f64)], weights: &[usize]) -> Multivector<f64> {
    let w: Vec<f64> = if weights.is_empty() { vec![1.0; parts.len()] } else { weights.iter().map(|&k| k as f64).collect() };
    let total: f64 = w.iter().sum();
    let mut m = Multivector::scalar(parts.iter().zip(&w).map(|((u, _), w)| u * w).sum::<f64>() / total);
    for (i, (_, a)) in parts.iter().enumerate() {
        m.add_term(1 << i, *a);
    }
    m
}

/// c(σ dx)(u + a dx) = −hσa + σu dx on each chart, with the chart metric h.
pub fn clifford_multiply(forms: &OneFormBundle, sigma: &OneFormSection, r: &ExteriorSection) -> ExteriorSection {
    let h = forms.coefficients();
    ExteriorSection {
        u: (0..h.len()).map(|i| -(h[i].clone() * sigma.coeffs[i].clone() * r.a[i].clone())).collect(),
        a: (0..h.len()).map(|i| sigma.coeffs[i].clone() * r.u[i].clone()).collect(),
    }
}

/// The connection on ⋀Λ¹ induced by ∇ on Λ¹: u′·1 + (a′ + Γa)dx on each chart.
pub fn exterior_derivative(conn: &FormConnection, s: &ExteriorSection) -> ExteriorSection {
    let a = conn.chart_derivative(&OneFormSection { coeffs: s.a.clone() }).to_vec();
    ExteriorSection { u: s.u.iter().map(Expr::differentiate).collect(), a }
}

fn times(t: &VectorField, s: &ExteriorSection) -> ExteriorSection {
    let m = |v: &[Expr]| v.iter().zip(&t.coeffs).map(|(x, b)| b.clone() * x.clone()).collect();
    ExteriorSection { u: m(&s.u), a: m(&s.a) }
}

/// Per-branch sides of ∇_t(c(σ)r) = c(∇_t σ)r + c(σ)∇_t r as (scalar, dx)
/// pairs. Each branch uses its own chart metric, so over a glue class this is
/// the identity for the germs of the branches.
pub fn clifford_connection_sides(
    conn: &FormConnection,
    t: &VectorField,
    sigma: &OneFormSection,
    r: &ExteriorSection,
    p: &Point,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), DiracError> {
    clifford_sides(conn, t, sigma, r, p, false)
}

/// The same identity with the right side acting through g^Λ(p), whose
/// weights 1/k rescale the scalar part over a k-branch class.
pub fn pointwise_clifford_connection_sides(
    conn: &FormConnection,
    t: &VectorField,
    sigma: &OneFormSection,
    r: &ExteriorSection,
    p: &Point,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), DiracError> {
    clifford_sides(conn, t, sigma, r, p, true)
}

fn clifford_sides(
    conn: &FormConnection,
    t: &VectorField,
    sigma: &OneFormSection,
    r: &ExteriorSection,
    p: &Point,
    weighted: bool,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), DiracError> {
    let forms = conn.forms();
    let e = ExteriorBundle { forms: forms.clone() };
    let lhs = times(t, &exterior_derivative(conn, &clifford_multiply(forms, sigma, r)));
    let nabla_sigma = OneFormSection {
        coeffs: conn.chart_derivative(sigma).into_iter().zip(&t.coeffs).map(|(d, b)| b.clone() * d).collect(),
    };
    let rhs = clifford_multiply(forms, &nabla_sigma, r).add(&clifford_multiply(forms, sigma, &times(t, &exterior_derivative(conn, r))));
    let mut right = rhs.branch_values(&e, p)?;
    if weighted {
        for ((u, _), w) in right.iter_mut().zip(forms.weights(p)?) {
            *u *= crate::linalg::q_to_f64(&w);
        }
    }
    Ok((lhs.branch_values(&e, p)?, right))
}

/// D = c ∘ ∇^E on ⋀Λ¹ with ∇^E induced by a connection on Λ¹.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracOperator {
    module: ExteriorBundle,
    connection: FormConnection,
}

/// The Clifford-connection property of ∇ is not enforced here.
pub fn dirac(module: ExteriorBundle, connection: FormConnection) -> Result<DiracOperator, DiracError> {
    if module.forms != *connection.forms() {
        return Err(DiracError::Mismatch);
    }
    Ok(DiracOperator { module, connection })
}

impl DiracOperator {
    pub fn module(&self) -> &ExteriorBundle {
        &self.module
    }

    pub fn connection(&self) -> &FormConnection {
        &self.connection
    }

    /// Ds = −h(a′ + Γa)·1 + u′·dx on each chart.
    pub fn chart_apply(&self, s: &ExteriorSection) -> ExteriorSection {
        let d = exterior_derivative(&self.connection, s);
        let h = self.module.forms.coefficients();
        ExteriorSection { u: d.a.iter().zip(h).map(|(a, h)| -(h.clone() * a.clone())).collect(), a: d.u }
    }

    /// ∇^E s over p: one row ι_i(u_i′·1 + (a_i′ + Γ_i a_i)dx_i) per branch.
    pub fn connection_rows(&self, s: &ExteriorSection, p: &Point) -> Result<Vec<Multivector<f64>>, DiracError> {
        let d = exterior_derivative(&self.connection, s).branch_values(&self.module, p)?;
        Ok(d.iter()
            .enumerate()
            .map(|(i, (u, a))| {
                let mut m = Multivector::scalar(*u);
                m.add_term(1 << i, *a);
                m
            })
            .collect())
    }

    /// (Ds)(p) = Σ_i c(dx_i)(row_i) in ⋀ℝᵏ with q = g^Λ(p).
    pub fn apply(&self, s: &ExteriorSection, p: &Point) -> Result<Multivector<f64>, DiracError> {
        s.check(&self.module, 1e-9)?;
        let rows = self.connection_rows(s, p)?;
        let k = rows.len();
        let mut out = Multivector::zero();
        for (i, row) in rows.iter().enumerate() {
            let dx: Vec<f64> = (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
            out = out.add(&self.module.act(p, &dx, row)?);
        }
        Ok(out)
    }
}

/// D₁ ∪ D₂ = c̃ ∘ ∇^∪, after checking at each glued pair that f̃′ = ⋀(a)
/// is an isometry of the leg fibres and intertwines the leg actions.
pub fn glue_dirac(d1: &DiracOperator, d2: &DiracOperator, gluing: &Gluing, a: &Q) -> Result<DiracOperator, DiracError> {
    for (y, fy) in &gluing.pairs {
        let q1 = site_q(&d1.module, &gluing.x1, y)?;
        let q2 = site_q(&d2.module, &gluing.x2, fy)?;
        if q1.nrows() != q2.nrows() {
            return Err(DiracError::Incompatible { check: "fibre dimension", witness: format!("{}@{}", y.0, fmt_q(&y.1)) });
        }
        let f = QMat::identity(q1.nrows()).scale(a);
        let witness = || format!("{}@{} ~ {}@{}", y.0, fmt_q(&y.1), fy.0, fmt_q(&fy.1));
        if f.transpose().mul(&q2).mul(&f) != q1 {
            return Err(DiracError::Incompatible { check: "metric compatibility", witness: witness() });
        }
        match check_action_compatibility(&q1, &q2, &f, &exterior_map(&f)) {
            Ok(()) => {}
            Err(DiracError::Incompatible { check, witness: w }) => return Err(DiracError::Incompatible { check, witness: format!("{} ({w})", witness()) }),
            Err(e) => return Err(e),
        }
    }
    let connection = glue_form_connections(&d1.connection, &d2.connection, gluing)?;
    dirac(exterior_module(connection.forms().clone()), connection)
}

fn site_q(e: &ExteriorBundle, x: &crate::complex::WedgeComplex, site: &crate::complex::Site) -> Result<QMat, DiracError> {
    let p = match x.class_of_site(site) {
        Some(class) => Point::Glue { class },
        None => Point::Chart { chart: site.0.clone(), x: crate::linalg::q_to_f64(&site.1) },
    };
    let g = e.forms.metric_at(&p)?;
    // the compatibility test is exact; sampled values are accepted as their binary64 rationals
    let rows: Option<Vec<Vec<Q>>> = g
        .iter()
        .map(|r| r.iter().map(|v| v.exact().cloned().or_else(|| crate::linalg::f64_to_q(v.to_f64()))).collect())
        .collect();
    rows.map(|r| QMat::from_rows(&r)).ok_or_else(|| DiracError::Shape("metric value is not finite".into()))
}

/// Both sides of D̃(s₁ ∪ s₂)(p) = (D₁s₁ ∪ D₂s₂)(p) at each point, with the
/// glued value of the right side assembled by ι from the legs.
pub fn splitting_sides(
    glued: &DiracOperator,
    d1: &DiracOperator,
    d2: &DiracOperator,
    gluing: &Gluing,
    s1: &ExteriorSection,
    s2: &ExteriorSection,
    p: &Point,
) -> Result<(Multivector<f64>, Multivector<f64>), DiracError> {
    let s = ExteriorSection::glue(s1, s2);
    let lhs = glued.apply(&s, p)?;
    let branches = gluing.glued.branches_at(p)?;
    let mut legs: Vec<(Leg, &DiracOperator, &ExteriorSection)> = Vec::new();
    for (leg, d, sec) in [(Leg::First, d1, s1), (Leg::Second, d2, s2)] {
        let on_leg = |chart: &str| (leg == Leg::First) == gluing.is_from_x1(chart);
        if branches.iter().any(|b| on_leg(&b.chart)) {
            legs.push((leg, d, sec));
        }
    }
    let mut parts = Vec::new();
    let mut weights = Vec::new();
    let mut vectors: (Vec<Value>, Vec<Value>) = (Vec::new(), Vec::new());
    for (leg, d, sec) in legs {
        let zeros = vec![Value::zero(); branches.len()];
        let (q, _) = rho(gluing, leg, p, &zeros)?;
        let v = d.apply(sec, &q)?;
        let k = d.module.forms.fibre_dim(&q)?;
        let comps: Vec<Value> = (0..k).map(|i| Value::Float(v.coeff(1 << i))).collect();
        parts.push(v.coeff(0));
        weights.push(k);
        if leg == Leg::First {
            vectors.0 = comps;
        } else {
            vectors.1 = comps;
        }
    }
    let vec = crate::forms::rho_sum_inverse(gluing, p, &vectors.0, &vectors.1)?;
    let total: usize = weights.iter().sum();
    let scalar = parts.iter().zip(&weights).map(|(s, k)| s * *k as f64).sum::<f64>() / total as f64;
    let mut rhs = Multivector::scalar(scalar);
    for (i, v) in vec.iter().enumerate() {
        rhs.add_term(1 << i, v.to_f64());
    }
    Ok((lhs, rhs))
}

pub fn multivectors_agree(a: &Multivector<f64>, b: &Multivector<f64>, tol: f64) -> bool {
    let n = a.terms().chain(b.terms()).map(|(m, _)| 32 - m.leading_zeros()).max().unwrap_or(0) as usize;
    crate::linalg::real::close_vec(&blade_coords(a, n), &blade_coords(b, n), tol)
}

/// Pass/fail of the splitting identity at each point.
pub fn verify_splitting(
    glued: &DiracOperator,
    d1: &DiracOperator,
    d2: &DiracOperator,
    gluing: &Gluing,
    s1: &ExteriorSection,
    s2: &ExteriorSection,
    points: &[Point],
    tol: f64,
) -> Result<Vec<(Point, bool)>, DiracError> {
    points
        .iter()
        .map(|p| {
            let (l, r) = splitting_sides(glued, d1, d2, gluing, s1, s2, p)?;
            Ok((p.clone(), multivectors_agree(&l, &r, tol)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{glue_along, Fibre, PseudoBundle};
    use crate::complex::{glue_complexes, WedgeComplex};
    use crate::linalg::{q, qf};
    use crate::symexpr::parse_expr;
    use proptest::prelude::*;

    fn e(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    fn line(id: &str, h: &str) -> OneFormBundle {
        OneFormBundle::new(WedgeComplex::lines(&[id]), vec![e(h)]).unwrap()
    }

    fn single(h: &str) -> DiracOperator {
        let l = line("x", h);
        dirac(exterior_module(l.clone()), FormConnection::levi_civita(l)).unwrap()
    }

    fn wedge() -> (DiracOperator, DiracOperator, Gluing, DiracOperator) {
        let (l1, l2) = (line("x", "exp(x)"), line("y", "exp(-x)"));
        let d1 = dirac(exterior_module(l1.clone()), FormConnection::levi_civita(l1.clone())).unwrap();
        let d2 = dirac(exterior_module(l2.clone()), FormConnection::levi_civita(l2.clone())).unwrap();
        let g = glue_complexes(l1.base(), l2.base(), &[(("x".into(), q(0)), ("y".into(), q(0)))]).unwrap();
        let d = glue_dirac(&d1, &d2, &g, &q(1)).unwrap();
        (d1, d2, g, d)
    }

    #[test]
    fn exterior_fibre_dimensions() {
        let (_, _, g, d) = wedge();
        assert_eq!(d.module().fibre_dim(&Point::at("x", 1.0)).unwrap(), 2);
        assert_eq!(d.module().fibre_dim(&g.glued.glue_points()[0]).unwrap(), 4);
    }

    #[test]
    fn action_on_one_and_dx() {
        let m = exterior_module(line("x", "x^2+1"));
        let p = Point::at("x", 2.0);
        assert_eq!(m.act(&p, &[1.0], &Multivector::one()).unwrap(), Multivector::blade(1, 1.0));
        assert_eq!(m.act(&p, &[1.0], &Multivector::blade(1, 1.0)).unwrap(), Multivector::scalar(-5.0));
    }

    #[test]
    fn two_line_modules_are_compatible_iff_f1_is_a_squared_f2() {
        let a = q(3);
        let f = QMat::from_rows(&[vec![a.clone()]]);
        let (q1, q2) = (QMat::from_rows(&[vec![q(18)]]), QMat::from_rows(&[vec![q(2)]]));
        assert!(check_action_compatibility(&q1, &q2, &f, &exterior_map(&f)).is_ok());
        let bad = QMat::from_rows(&[vec![q(5)]]);
        assert!(matches!(check_action_compatibility(&bad, &q2, &f, &exterior_map(&f)), Err(DiracError::Incompatible { .. })));
        assert_eq!(check_action_compatibility(&q1, &q2, &f, &QMat::zeros(2, 2)), Err(DiracError::NotInvertible));
        let glued = induced_action(&q1, &q2, &f, &exterior_map(&f)).unwrap();
        // on leg 2's fibre the induced action is c₂
        let b = Multivector::blade(1, q(1));
        assert_eq!(glued.act(&[q(1)], &b), Multivector::scalar(-q(2)));
    }

    #[test]
    fn clifford_gluing_scales_the_vector_part() {
        let a = qf(1, 2);
        let f = QMat::from_rows(&[vec![a.clone()]]);
        let (q1, q2) = (QMat::from_rows(&[vec![q(1)]]), QMat::from_rows(&[vec![q(4)]]));
        let (_, _, images) = clifford_gluing(&q1, &q2, &f).unwrap();
        let z = Multivector::scalar(q(7)).add(&Multivector::blade(1, q(3)));
        let img = crate::clifford::apply_blade_map(&images, &z);
        assert_eq!(img, Multivector::scalar(q(7)).add(&Multivector::blade(1, qf(3, 2))));
        assert_eq!(clifford_gluing(&q1, &q1, &f).unwrap_err(), DiracError::NotIsometric);
        let id = QMat::identity(2);
        let g = QMat::from_i64(&[&[2, 1], &[1, 3]]);
        let (a1, _, images) = clifford_gluing(&g, &g, &id).unwrap();
        assert!(images.iter().enumerate().all(|(m, x)| *x == Multivector::blade(m as u32, q(1))));
        assert_eq!(a1.dim(), 4);
    }

    #[test]
    fn two_planes_product_and_gate() {
        let v1 = PseudoBundle::new(WedgeComplex::lines(&["x"]), vec![Fibre::line(e("exp(x)"))], vec![]).unwrap();
        let v2 = PseudoBundle::new(WedgeComplex::lines(&["y"]), vec![Fibre::line(e("x^2+1"))], vec![]).unwrap();
        let pairs = [(("x".to_string(), q(0)), ("y".to_string(), q(0)))];
        let g = glue_along(&v1, &v2, &pairs, &[QMat::identity(1)]).unwrap();
        let (z1, w1, z2, w2) = (0.7, -1.2, 2.5, 0.4);
        let el = |z: f64, w: f64| Multivector::blade(1, z).add(&Multivector::scalar(w));
        for x in [-1.0, 0.0, 0.5, 2.0] {
            let p = g.glued.base().resolve(&Point::at("x", x)).unwrap();
            let prod = glued_clifford_product(&g, &p, &el(z1, w1), &el(z2, w2)).unwrap();
            assert!((prod.coeff(1) - (z1 * w2 + z2 * w1)).abs() < 1e-12);
            assert!((prod.coeff(0) - (-f64::exp(x) * z1 * z2 + w1 * w2)).abs() < 1e-12);
        }
        assert!(glue_along(&v1, &v2, &pairs, &[QMat::from_i64(&[&[2]])]).is_err());
    }

    #[test]
    fn flat_dirac_examples() {
        let d = single("1");
        let p = Point::at("x", 0.3);
        let s = ExteriorSection { u: vec![e("x")], a: vec![e("0")] };
        assert_eq!(d.apply(&s, &p).unwrap(), Multivector::blade(1, 1.0));
        let s = ExteriorSection { u: vec![e("0")], a: vec![e("x")] };
        assert_eq!(d.apply(&s, &p).unwrap(), Multivector::scalar(-1.0));
        assert!(d.apply(&ExteriorSection::zero(d.module()), &p).unwrap().is_zero());
    }

    #[test]
    fn wedge_value_sums_branch_contributions() {
        let (_, _, g, d) = wedge();
        let p = g.glued.glue_points()[0].clone();
        let s = ExteriorSection { u: vec![e("x+1"), e("cos(x)")], a: vec![e("2*x+1"), e("3")] };
        let v = d.apply(&s, &p).unwrap();
        // rows: (1, 2 + ½·1) and (0, 0 − ½·3); c(dx_i) with q = ½·diag(1, 1)
        assert!((v.coeff(0) - (-(0.5 * 2.5) - 0.5 * (-1.5))).abs() < 1e-12);
        assert!((v.coeff(1) - 1.0).abs() < 1e-12);
        assert!(v.coeff(2).abs() < 1e-12);
        assert_eq!(v.coeff(3), 0.0);
    }

    #[test]
    fn splitting_holds_on_the_wedge() {
        let (d1, d2, g, d) = wedge();
        let s1 = ExteriorSection { u: vec![e("x^2+1")], a: vec![e("sin(x)")] };
        let s2 = ExteriorSection { u: vec![e("exp(x)")], a: vec![e("x^3-2")] };
        let mut pts = g.glued.glue_points();
        pts.extend([Point::at("x", -1.5), Point::at("y", 0.5)]);
        for (p, ok) in verify_splitting(&d, &d1, &d2, &g, &s1, &s2, &pts, 1e-10).unwrap() {
            assert!(ok, "{p}");
        }
        let bad = ExteriorSection { u: vec![e("x+5")], a: vec![e("0")] };
        assert!(d.apply(&ExteriorSection::glue(&s1, &bad), &pts[0]).is_err());
    }

    #[test]
    fn glue_dirac_rejects_mismatched_metrics() {
        let (l1, l2) = (line("x", "exp(x)"), line("y", "x^2+1"));
        let d1 = dirac(exterior_module(l1.clone()), FormConnection::levi_civita(l1.clone())).unwrap();
        let d2 = dirac(exterior_module(l2.clone()), FormConnection::levi_civita(l2.clone())).unwrap();
        let g = glue_complexes(l1.base(), l2.base(), &[(("x".into(), q(0)), ("y".into(), q(0)))]).unwrap();
        assert!(glue_dirac(&d1, &d2, &g, &q(1)).is_ok());
        assert!(matches!(glue_dirac(&d1, &d2, &g, &q(2)), Err(DiracError::Incompatible { check: "metric compatibility", .. })));
    }

    #[test]
    fn levi_civita_is_a_clifford_connection_and_flat_is_not() {
        let l = line("x", "exp(x)");
        let t = VectorField { coeffs: vec![e("x^2+1")] };
        let sigma = OneFormSection { coeffs: vec![e("sin(x)+2")] };
        let r = ExteriorSection { u: vec![e("x")], a: vec![e("cos(x)")] };
        let p = Point::at("x", 0.8);
        let (lhs, rhs) = clifford_connection_sides(&FormConnection::levi_civita(l.clone()), &t, &sigma, &r, &p).unwrap();
        assert!((lhs[0].0 - rhs[0].0).abs() < 1e-12 && (lhs[0].1 - rhs[0].1).abs() < 1e-12);
        let (lhs, rhs) = clifford_connection_sides(&FormConnection::flat(l), &t, &sigma, &r, &p).unwrap();
        assert!((lhs[0].0 - rhs[0].0).abs() > 1e-3);
    }

    #[test]
    fn pointwise_clifford_identity_is_off_by_the_branch_weight() {
        let (_, _, g, d) = wedge();
        let p = g.glued.glue_points()[0].clone();
        let t = VectorField { coeffs: vec![e("1"), e("2")] };
        let sigma = OneFormSection { coeffs: vec![e("x+1"), e("2")] };
        let r = ExteriorSection { u: vec![e("3"), e("3")], a: vec![e("x+2"), e("1")] };
        let (l, r_germ) = clifford_connection_sides(d.connection(), &t, &sigma, &r, &p).unwrap();
        let (_, r_point) = pointwise_clifford_connection_sides(d.connection(), &t, &sigma, &r, &p).unwrap();
        for i in 0..2 {
            assert!((l[i].0 - r_germ[i].0).abs() < 1e-12 && l[i].0.abs() > 1e-3);
            assert!((r_point[i].0 - 0.5 * l[i].0).abs() < 1e-12);
        }
    }

    #[test]
    fn action_relations_hold_exactly_at_the_wedge() {
        let (_, _, g, d) = wedge();
        let p = g.glued.glue_points()[0].clone();
        assert!(d.module().exact_q_at(&p).unwrap().is_some());
        assert!(d.module().check_action(&p, 0.0).unwrap());
        assert!(d.module().check_action(&Point::at("x", 1.3), 1e-12).unwrap());
    }

    proptest! {
        #[test]
        fn unit_vectors_act_unitarily(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -2.0f64..2.0) {
            prop_assume!(a.abs() + b.abs() > 1e-3);
            let (_, _, g, d) = wedge();
            let p = g.glued.glue_points()[0].clone();
            prop_assert!(d.module().unitarity_defect(&p, &[a, b]).unwrap() < 1e-12);
            prop_assert!(d.module().unitarity_defect(&Point::at("y", x), &[a]).unwrap() < 1e-9);
        }
    }
}
