//! Connections over wedge complexes.
//!
//! A [`Connection`] acts on a general pseudo-bundle: on chart c it is
//! ∇s = (s′ + Γ_c s) dx ⊗ frame, and over a glue class the Λ¹-slot has one
//! row per branch, each carrying that branch's value pushed into the
//! representative fibre. A [`FormConnection`] acts on Λ¹ itself and is
//! branch-diagonal over glue classes; [`VectorConnection`] is its dual on
//! (Λ¹)*.

use thiserror::Error;

use crate::bundle::{BundleError, BundleGluing, PseudoBundle, Section};
use crate::complex::{Point, WedgeComplex};
use crate::forms::{branch_coords, check_glued_function, FormsError, OneFormBundle, OneFormSection};
use crate::sampling::{apply, eval_matrix, eval_vector, values_agree, Coord};
use crate::symexpr::matrix::{self, ExprMat};
use crate::symexpr::{EvalError, Expr, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectionError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Complex(#[from] crate::complex::ComplexError),
    #[error("cannot evaluate on chart `{chart}` at {x}: {source}")]
    Eval { chart: String, x: f64, source: EvalError },
    #[error("{0}")]
    Shape(String),
    #[error("connections live over different bundles")]
    Mismatch,
}

fn ev<'a>(chart: &'a str, c: &Coord) -> impl Fn(EvalError) -> ConnectionError + 'a {
    let x = c.to_f64();
    move |source| ConnectionError::Eval { chart: chart.to_string(), x, source }
}

/// Λ¹ ⊗ V at a point: one row per branch.
pub type Rows = Vec<Vec<Value>>;

fn scale(v: &[Value], s: &Value) -> Vec<Value> {
    v.iter().map(|x| x.clone() * s.clone()).collect()
}

fn vadd(a: &[Value], b: &[Value]) -> Vec<Value> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

fn inner(g: &[Vec<Value>], u: &[Value], v: &[Value]) -> Value {
    let mut acc = Value::zero();
    for i in 0..g.len() {
        for j in 0..g.len() {
            acc = acc + u[i].clone() * g[i][j].clone() * v[j].clone();
        }
    }
    acc
}

pub fn rows_agree(a: &Rows, b: &Rows, tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_agree(x, y, tol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    bundle: PseudoBundle,
    gamma: Vec<ExprMat>,
}

impl Connection {
    pub fn new(bundle: PseudoBundle, gamma: Vec<ExprMat>) -> Result<Self, ConnectionError> {
        if gamma.len() != bundle.fibres().len() {
            return Err(ConnectionError::Shape(format!("{} charts but {} Christoffel matrices", bundle.fibres().len(), gamma.len())));
        }
        for (g, f) in gamma.iter().zip(bundle.fibres()) {
            if g.len() != f.dim() || g.iter().any(|r| r.len() != f.dim()) {
                return Err(ConnectionError::Shape(format!("Christoffel matrix must be {0}x{0}", f.dim())));
            }
        }
        Ok(Connection { bundle, gamma })
    }

    pub fn flat(bundle: PseudoBundle) -> Self {
        let gamma = bundle.fibres().iter().map(|f| matrix::zeros(f.dim(), f.dim())).collect();
        Connection { bundle, gamma }
    }

    /// Γ = h′/(2h) on a line bundle with metric h on every chart.
    pub fn levi_civita(bundle: PseudoBundle) -> Result<Self, ConnectionError> {
        let gamma = bundle
            .fibres()
            .iter()
            .map(|f| {
                if f.dim() != 1 {
                    return Err(ConnectionError::Shape("the closed form needs line bundles".into()));
                }
                let h = &f.metric[0][0];
                Ok(vec![vec![h.differentiate() / (Expr::int(2) * h.clone())]])
            })
            .collect::<Result<_, _>>()?;
        Ok(Connection { bundle, gamma })
    }

    pub fn bundle(&self) -> &PseudoBundle {
        &self.bundle
    }

    pub fn christoffel(&self) -> &[ExprMat] {
        &self.gamma
    }

    /// s′ + Γ s on each chart, symbolically.
    pub fn chart_derivative(&self, s: &Section) -> Vec<Vec<Expr>> {
        s.components
            .iter()
            .zip(&self.gamma)
            .map(|(c, g)| {
                let gs = matrix::mul_vec(g, c);
                c.iter().zip(gs).map(|(x, y)| x.differentiate() + y).collect()
            })
            .collect()
    }

    /// ∇s at p.
    pub fn apply(&self, s: &Section, p: &Point) -> Result<Rows, ConnectionError> {
        self.check_section(s)?;
        let d = self.chart_derivative(s);
        let base = self.bundle.base();
        let glue = matches!(base.resolve(p)?, Point::Glue { .. });
        branch_coords(base, p)?
            .into_iter()
            .map(|(i, b, c)| {
                let v = eval_vector(&d[i], &c).map_err(ev(&b.chart, &c))?;
                Ok(match (glue, &c) {
                    (true, Coord::Exact(q)) => apply(&self.bundle.site_map(&(b.chart.clone(), q.clone())), &v),
                    _ => v,
                })
            })
            .collect()
    }

    /// ∇_t s at p: the Λ¹-slot contracted with the branch values of t.
    pub fn covariant(&self, t: &VectorField, s: &Section, p: &Point) -> Result<Vec<Value>, ConnectionError> {
        let rows = self.apply(s, p)?;
        let tau = t.value_at(self.bundle.base(), p)?;
        let n = rows.first().map_or(0, Vec::len);
        Ok(rows.iter().zip(&tau).fold(vec![Value::zero(); n], |acc, (r, t)| vadd(&acc, &scale(r, t))))
    }

    fn check_section(&self, s: &Section) -> Result<(), ConnectionError> {
        if s.components.len() != self.gamma.len() || s.components.iter().zip(&self.gamma).any(|(c, g)| c.len() != g.len()) {
            return Err(ConnectionError::Mismatch);
        }
        Ok(())
    }

    /// Both sides of ∇(fs) = df ⊗ s + f ∇s at p.
    pub fn leibniz_sides(&self, f: &[Expr], s: &Section, p: &Point) -> Result<(Rows, Rows), ConnectionError> {
        let fs = s.scale(f);
        let lhs = self.apply(&fs, p)?;
        let (chart, c) = self.bundle.anchor(p)?;
        let fp = c.eval(&f[self.bundle.base().chart_index(&chart).expect("known chart")]).map_err(ev(&chart, &c))?;
        let sp = self.bundle.section_at(s, p)?;
        let df: Vec<Value> = branch_coords(self.bundle.base(), p)?
            .iter()
            .map(|(i, b, c)| c.eval(&f[*i].differentiate()).map_err(ev(&b.chart, c)))
            .collect::<Result<_, _>>()?;
        let rhs = self.apply(s, p)?.iter().zip(&df).map(|(r, d)| vadd(&scale(&sp, d), &scale(r, &fp))).collect();
        Ok((lhs, rhs))
    }

    /// Both sides of d(g(s,t)) = g(∇s, t) + g(s, ∇t) at p, one entry per branch.
    pub fn compatibility_sides(&self, s: &Section, t: &Section, p: &Point) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        let base = self.bundle.base();
        let lhs = branch_coords(base, p)?
            .iter()
            .map(|(i, b, c)| {
                let g = &self.bundle.fibres()[*i].metric;
                let gst = matrix::mul_vec(g, &t.components[*i])
                    .into_iter()
                    .zip(&s.components[*i])
                    .fold(Expr::zero(), |acc, (x, y)| acc + y.clone() * x);
                c.eval(&gst.differentiate()).map_err(ev(&b.chart, c))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let g = self.bundle.metric_at(p)?;
        let (sp, tp) = (self.bundle.section_at(s, p)?, self.bundle.section_at(t, p)?);
        let rhs = self
            .apply(s, p)?
            .iter()
            .zip(self.apply(t, p)?)
            .map(|(ds, dt)| inner(&g, ds, &tp) + inner(&g, &sp, &dt))
            .collect();
        Ok((lhs, rhs))
    }
}

/// Block-diagonal Christoffel data on V ⊕ W.
pub fn sum_connection(a: &Connection, b: &Connection) -> Result<Connection, ConnectionError> {
    let bundle = crate::bundle::direct_sum(&a.bundle, &b.bundle)?;
    let gamma = a.gamma.iter().zip(&b.gamma).map(|(x, y)| matrix::block_diag(x, y)).collect();
    Connection::new(bundle, gamma)
}

/// Γ₁ ⊗ I + I ⊗ Γ₂ on V ⊗ W.
pub fn tensor_connection(a: &Connection, b: &Connection) -> Result<Connection, ConnectionError> {
    let bundle = crate::bundle::tensor_product(&a.bundle, &b.bundle)?;
    let gamma = a
        .gamma
        .iter()
        .zip(&b.gamma)
        .map(|(x, y)| matrix::add(&matrix::kron(x, &matrix::identity(y.len())), &matrix::kron(&matrix::identity(x.len()), y)))
        .collect();
    Connection::new(bundle, gamma)
}

/// ∇¹ ∪ ∇² on V₁ ∪ V₂. Over point gluings the compatibility condition on
/// connections is empty, so only the shapes are checked.
pub fn glue_connections(a: &Connection, b: &Connection, g: &BundleGluing) -> Result<Connection, ConnectionError> {
    if a.bundle != g.v1 || b.bundle != g.v2 {
        return Err(ConnectionError::Mismatch);
    }
    Connection::new(g.glued.clone(), a.gamma.iter().chain(&b.gamma).cloned().collect())
}

/// Sections of (Λ¹)*: the coefficient of ∂_c on each chart.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub coeffs: Vec<Expr>,
}

impl VectorField {
    pub fn value_at(&self, base: &WedgeComplex, p: &Point) -> Result<Vec<Value>, ConnectionError> {
        branch_coords(base, p)?.iter().map(|(i, b, c)| c.eval(&self.coeffs[*i]).map_err(ev(&b.chart, c))).collect()
    }

    pub fn scale(&self, f: &[Expr]) -> Self {
        VectorField { coeffs: self.coeffs.iter().zip(f).map(|(a, b)| b.clone() * a.clone()).collect() }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        VectorField { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() + b.clone()).collect() }
    }

    /// t(f) = b·f′ on each chart.
    pub fn derive(&self, f: &[Expr]) -> Vec<Expr> {
        self.coeffs.iter().zip(f).map(|(b, f)| b.clone() * f.differentiate()).collect()
    }
}

/// [t₁, t₂] = (b₁b₂′ − b₂b₁′) ∂ on each chart; branch-wise over glue classes.
pub fn lie_bracket(t1: &VectorField, t2: &VectorField) -> VectorField {
    VectorField {
        coeffs: t1
            .coeffs
            .iter()
            .zip(&t2.coeffs)
            .map(|(a, b)| a.clone() * b.differentiate() - b.clone() * a.differentiate())
            .collect(),
    }
}

/// A connection on Λ¹(X): (a′ + Γ_c a) dx ⊗ dx on chart c, branch-diagonal
/// over glue classes.
#[derive(Debug, Clone, PartialEq)]
pub struct FormConnection {
    forms: OneFormBundle,
    gamma: Vec<Expr>,
}

impl FormConnection {
    pub fn new(forms: OneFormBundle, gamma: Vec<Expr>) -> Result<Self, ConnectionError> {
        if gamma.len() != forms.coefficients().len() {
            return Err(ConnectionError::Shape("one Christoffel symbol per chart".into()));
        }
        Ok(FormConnection { forms, gamma })
    }

    pub fn flat(forms: OneFormBundle) -> Self {
        let gamma = vec![Expr::zero(); forms.coefficients().len()];
        FormConnection { forms, gamma }
    }

    /// Γ_c = h_c′/(2h_c).
    pub fn levi_civita(forms: OneFormBundle) -> Self {
        let gamma = forms.coefficients().iter().map(|h| h.differentiate() / (Expr::int(2) * h.clone())).collect();
        FormConnection { forms, gamma }
    }

    pub fn forms(&self) -> &OneFormBundle {
        &self.forms
    }

    pub fn christoffel(&self) -> &[Expr] {
        &self.gamma
    }

    /// a′ + Γ a on each chart.
    pub fn chart_derivative(&self, s: &OneFormSection) -> Vec<Expr> {
        s.coeffs.iter().zip(&self.gamma).map(|(a, g)| a.differentiate() + g.clone() * a.clone()).collect()
    }

    /// ∇s at p as a k×k matrix on dx_i ⊗ dx_j.
    pub fn apply(&self, s: &OneFormSection, p: &Point) -> Result<Rows, ConnectionError> {
        let d = self.covariant_branches(s, p)?;
        Ok(crate::forms::diag(&d))
    }

    fn covariant_branches(&self, s: &OneFormSection, p: &Point) -> Result<Vec<Value>, ConnectionError> {
        let d = self.chart_derivative(s);
        branch_coords(self.forms.base(), p)?.iter().map(|(i, b, c)| c.eval(&d[*i]).map_err(ev(&b.chart, c))).collect()
    }

    /// ∇_t s at p: the branch tuple τ_i (a_i′ + Γ_i a_i).
    pub fn covariant(&self, t: &VectorField, s: &OneFormSection, p: &Point) -> Result<Vec<Value>, ConnectionError> {
        let tau = t.value_at(self.forms.base(), p)?;
        Ok(self.covariant_branches(s, p)?.into_iter().zip(tau).map(|(x, t)| x * t).collect())
    }

    /// The dual connection on (Λ¹)*: Γ* = −Γ.
    pub fn dual(&self) -> VectorConnection {
        VectorConnection { forms: self.forms.clone(), gamma: self.gamma.iter().map(|g| -g.clone()).collect() }
    }

    /// Per-branch sides of d(g(s,t)) = g(∇s,t) + g(s,∇t). Each branch is paired
    /// with its own chart metric h_i, so over a glue class this is the identity
    /// of the branch germs.
    pub fn compatibility_sides(&self, s: &OneFormSection, t: &OneFormSection, p: &Point) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        self.compatibility_with_weights(s, t, p, false)
    }

    /// The same identity with the pointwise metric g^Λ(p) on the right, which
    /// over a k-branch class carries the weights 1/k.
    pub fn pointwise_compatibility_sides(&self, s: &OneFormSection, t: &OneFormSection, p: &Point) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        self.compatibility_with_weights(s, t, p, true)
    }

    fn compatibility_with_weights(&self, s: &OneFormSection, t: &OneFormSection, p: &Point, weighted: bool) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        let h = self.forms.coefficients();
        let base = self.forms.base();
        let coords = branch_coords(base, p)?;
        let weights = self.forms.weights(p)?;
        let ds = self.covariant_branches(s, p)?;
        let dt = self.covariant_branches(t, p)?;
        let (sv, tv) = (s.value_at(&self.forms, p)?, t.value_at(&self.forms, p)?);
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        for (k, (i, b, c)) in coords.iter().enumerate() {
            let g = h[*i].clone() * s.coeffs[*i].clone() * t.coeffs[*i].clone();
            lhs.push(c.eval(&g.differentiate()).map_err(ev(&b.chart, c))?);
            let hv = c.eval(&h[*i]).map_err(ev(&b.chart, c))?;
            let w = if weighted { Value::Exact(weights[k].clone()) } else { Value::one() };
            rhs.push(w * hv * (ds[k].clone() * tv[k].clone() + sv[k].clone() * dt[k].clone()));
        }
        Ok((lhs, rhs))
    }

    /// Per-branch Leibniz sides for ∇(fs) = df ⊗ s + f∇s on the branch diagonal.
    pub fn leibniz_sides(&self, f: &[Expr], s: &OneFormSection, p: &Point) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        let lhs = self.covariant_branches(&s.scale(f), p)?;
        let coords = branch_coords(self.forms.base(), p)?;
        let sv = s.value_at(&self.forms, p)?;
        let ds = self.covariant_branches(s, p)?;
        let rhs = coords
            .iter()
            .enumerate()
            .map(|(k, (i, b, c))| {
                let fv = c.eval(&f[*i]).map_err(ev(&b.chart, c))?;
                let dfv = c.eval(&f[*i].differentiate()).map_err(ev(&b.chart, c))?;
                Ok(dfv * sv[k].clone() + fv * ds[k].clone())
            })
            .collect::<Result<_, ConnectionError>>()?;
        Ok((lhs, rhs))
    }
}

/// ∇¹ ∪ ∇² on Λ¹(X₁ ∪ X₂): each factor's symbol on its charts.
pub fn glue_form_connections(a: &FormConnection, b: &FormConnection, gluing: &crate::complex::Gluing) -> Result<FormConnection, ConnectionError> {
    let forms = OneFormBundle::glued(&a.forms, &b.forms, gluing)?;
    FormConnection::new(forms, a.gamma.iter().chain(&b.gamma).cloned().collect())
}

/// A connection on (Λ¹)* with symbol Γ*_c on chart c.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorConnection {
    forms: OneFormBundle,
    gamma: Vec<Expr>,
}

impl VectorConnection {
    /// The Levi-Civita connection of (g^Λ)* = 1/h: Γ* = G′/(2G) with G = 1/h.
    pub fn levi_civita(forms: OneFormBundle) -> Self {
        let gamma = forms
            .coefficients()
            .iter()
            .map(|h| {
                let g = Expr::one() / h.clone();
                g.differentiate() / (Expr::int(2) * g)
            })
            .collect();
        VectorConnection { forms, gamma }
    }

    pub fn christoffel(&self) -> &[Expr] {
        &self.gamma
    }

    /// ∇_{t₁} t₂ on each chart: b₁(b₂′ + Γ* b₂).
    pub fn covariant_field(&self, t1: &VectorField, t2: &VectorField) -> VectorField {
        VectorField {
            coeffs: t1
                .coeffs
                .iter()
                .zip(&t2.coeffs)
                .zip(&self.gamma)
                .map(|((a, b), g)| a.clone() * (b.differentiate() + g.clone() * b.clone()))
                .collect(),
        }
    }

    /// T(t₁, t₂) = ∇_{t₁}t₂ − ∇_{t₂}t₁ − [t₁, t₂], branch tuple at p.
    pub fn torsion(&self, t1: &VectorField, t2: &VectorField, p: &Point) -> Result<Vec<Value>, ConnectionError> {
        let a = self.covariant_field(t1, t2);
        let b = self.covariant_field(t2, t1);
        let c = lie_bracket(t1, t2);
        let t = VectorField { coeffs: (0..a.coeffs.len()).map(|i| a.coeffs[i].clone() - b.coeffs[i].clone() - c.coeffs[i].clone()).collect() };
        t.value_at(self.forms.base(), p)
    }

    fn g(&self, a: &VectorField, b: &VectorField) -> Vec<Expr> {
        a.coeffs.iter().zip(&b.coeffs).zip(self.forms.coefficients()).map(|((x, y), h)| x.clone() * y.clone() / h.clone()).collect()
    }

    /// Both sides of the Koszul formula for G = 1/h, per branch.
    pub fn koszul_sides(&self, t1: &VectorField, t2: &VectorField, t3: &VectorField, p: &Point) -> Result<(Vec<Value>, Vec<Value>), ConnectionError> {
        let n = t1.coeffs.len();
        let terms = [
            t1.derive(&self.g(t2, t3)),
            t2.derive(&self.g(t3, t1)),
            t3.derive(&self.g(t1, t2)),
            self.g(&lie_bracket(t1, t2), t3),
            self.g(&lie_bracket(t3, t1), t2),
            self.g(&lie_bracket(t2, t3), t1),
        ];
        let lhs: Vec<Expr> = (0..n)
            .map(|i| terms[0][i].clone() + terms[1][i].clone() - terms[2][i].clone() + terms[3][i].clone() + terms[4][i].clone() - terms[5][i].clone())
            .collect();
        let rhs: Vec<Expr> = self.g(&self.covariant_field(t1, t2), t3).into_iter().map(|e| Expr::int(2) * e).collect();
        let base = self.forms.base();
        Ok((VectorField { coeffs: lhs }.value_at(base, p)?, VectorField { coeffs: rhs }.value_at(base, p)?))
    }
}

/// g̃ evaluated on the glued bundle of a connection: used by callers that
/// compare metrics of glued and factor bundles.
pub fn metric_rows(b: &PseudoBundle, p: &Point) -> Result<Rows, ConnectionError> {
    let (chart, c) = b.anchor(p)?;
    let i = b.base().chart_index(&chart).expect("known chart");
    Ok(eval_matrix(&b.fibres()[i].metric, &c).map_err(ev(&chart, &c))?)
}

/// Checks a glued function is continuous, for Leibniz batteries.
pub fn check_function(base: &WedgeComplex, f: &[Expr], tol: f64) -> Result<(), ConnectionError> {
    Ok(check_glued_function(base, f, tol)?)
}
