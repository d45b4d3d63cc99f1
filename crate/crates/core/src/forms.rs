//! The pseudo-bundle Λ¹(X) of a wedge complex. Over a point with k incident
//! branches the fibre is ℝᵏ with basis (dx_c) for the branch charts c, and
//! the metric there is the equal-weight average Σ (1/k)·h_c(x_c)·(dx_c)².

use num_traits::Signed;
use thiserror::Error;

use crate::complex::{Branch, ComplexError, Gluing, Point, WedgeComplex};
use crate::linalg::{fmt_q, real, Q};
use crate::sampling::{values_agree, Coord, SamplePlan};
use crate::symexpr::{EvalError, Expr, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormsError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("cannot evaluate on chart `{chart}` at {x}: {source}")]
    Eval { chart: String, x: f64, source: EvalError },
    #[error("metric coefficient on chart `{chart}` is not positive at {x}")]
    NonPositive { chart: String, x: f64 },
    #[error("{0}")]
    Shape(String),
    #[error("function values disagree at {point}: {values:?}")]
    Discontinuous { point: String, values: Vec<f64> },
    #[error("point {0} is outside the domain of the projection")]
    OutsideDomain(String),
}

/// A point's branches paired with the chart index and the coordinate at
/// which chart data is evaluated: exact at glue classes.
pub fn branch_coords(base: &WedgeComplex, p: &Point) -> Result<Vec<(usize, Branch, Coord)>, ComplexError> {
    let glue = matches!(base.resolve(p)?, Point::Glue { .. });
    Ok(base
        .branches_at(p)?
        .into_iter()
        .map(|b| {
            let i = base.chart_index(&b.chart).expect("branch names a chart");
            let c = match (&b.exact, glue) {
                (Some(q), true) => Coord::Exact(q.clone()),
                _ => Coord::Float(b.x),
            };
            (i, b, c)
        })
        .collect())
}

fn eval(chart: &str, e: &Expr, c: &Coord) -> Result<Value, FormsError> {
    c.eval(e).map_err(|source| FormsError::Eval { chart: chart.to_string(), x: c.to_f64(), source })
}

fn positive(v: &Value) -> bool {
    match v {
        Value::Exact(q) => q.is_positive(),
        Value::Float(x) => *x > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneFormBundle {
    base: WedgeComplex,
    h: Vec<Expr>,
}

impl OneFormBundle {
    /// Λ¹(X) with g^Λ(dx_c, dx_c) = h_c on chart c.
    pub fn new(base: WedgeComplex, h: Vec<Expr>) -> Result<Self, FormsError> {
        Self::with_plan(base, h, &SamplePlan::default())
    }

    pub fn with_plan(base: WedgeComplex, h: Vec<Expr>, plan: &SamplePlan) -> Result<Self, FormsError> {
        if h.len() != base.charts().len() {
            return Err(FormsError::Shape(format!("{} charts but {} metric coefficients", base.charts().len(), h.len())));
        }
        let l = OneFormBundle { base, h };
        for (chart, xs) in plan.chart_points(&l.base) {
            let e = &l.h[l.base.chart_index(&chart).expect("known chart")];
            for x in xs {
                let v = eval(&chart, e, &Coord::Float(x))?;
                if !positive(&v) {
                    return Err(FormsError::NonPositive { chart, x });
                }
            }
        }
        for class in l.base.classes() {
            for (chart, q) in class {
                let e = &l.h[l.base.chart_index(chart).expect("known chart")];
                if !positive(&eval(chart, e, &Coord::Exact(q.clone()))?) {
                    return Err(FormsError::NonPositive { chart: chart.clone(), x: crate::linalg::q_to_f64(q) });
                }
            }
        }
        Ok(l)
    }

    /// Λ¹ of a glued complex, with the factors' coefficients on their charts.
    pub fn glued(l1: &OneFormBundle, l2: &OneFormBundle, gluing: &Gluing) -> Result<Self, FormsError> {
        if l1.base != gluing.x1 || l2.base != gluing.x2 {
            return Err(FormsError::Shape("bundles do not match the gluing".into()));
        }
        Self::new(gluing.glued.clone(), l1.h.iter().chain(&l2.h).cloned().collect())
    }

    pub fn base(&self) -> &WedgeComplex {
        &self.base
    }

    pub fn coefficients(&self) -> &[Expr] {
        &self.h
    }

    pub fn coefficient(&self, chart: usize) -> &Expr {
        &self.h[chart]
    }

    pub fn fibre_dim(&self, p: &Point) -> Result<usize, FormsError> {
        Ok(self.base.branches_at(p)?.len())
    }

    /// Branch weights: 1/k at a k-branch point.
    pub fn weights(&self, p: &Point) -> Result<Vec<Q>, FormsError> {
        let k = self.fibre_dim(p)?;
        Ok(vec![Q::new(1.into(), (k as i64).into()); k])
    }

    /// h_c at each branch of p.
    pub fn branch_metrics(&self, p: &Point) -> Result<Vec<Value>, FormsError> {
        branch_coords(&self.base, p)?.iter().map(|(i, b, c)| eval(&b.chart, &self.h[*i], c)).collect()
    }

    /// g^Λ at p on the branch basis.
    pub fn metric_at(&self, p: &Point) -> Result<Vec<Vec<Value>>, FormsError> {
        let d: Vec<Value> = self.branch_metrics(p)?.into_iter().zip(self.weights(p)?).map(|(h, w)| Value::Exact(w) * h).collect();
        Ok(diag(&d))
    }

    /// (g^Λ)* at p on the dual branch basis.
    pub fn dual_metric_at(&self, p: &Point) -> Result<Vec<Vec<Value>>, FormsError> {
        let d: Vec<Value> =
            self.branch_metrics(p)?.into_iter().zip(self.weights(p)?).map(|(h, w)| Value::one() / (Value::Exact(w) * h)).collect();
        Ok(diag(&d))
    }

    /// Φ_{g^Λ}(ω) = g^Λ(ω, ·) in the dual branch basis.
    pub fn pairing(&self, p: &Point, omega: &[Value]) -> Result<Vec<Value>, FormsError> {
        let g = self.metric_at(p)?;
        check_len(omega, g.len())?;
        Ok((0..g.len()).map(|i| g[i][i].clone() * omega[i].clone()).collect())
    }

    pub fn pairing_inverse(&self, p: &Point, alpha: &[Value]) -> Result<Vec<Value>, FormsError> {
        let g = self.metric_at(p)?;
        check_len(alpha, g.len())?;
        Ok((0..g.len()).map(|i| alpha[i].clone() / g[i][i].clone()).collect())
    }

    /// Checks g^Λ is positive definite at every sample and glue point.
    pub fn check_positive(&self, plan: &SamplePlan, tol: f64) -> Result<(), String> {
        for p in self.sample_points(plan) {
            let g = self.metric_at(&p).map_err(|e| e.to_string())?;
            let m: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(Value::to_f64).collect()).collect();
            if !real::is_positive_definite(&m, tol) {
                return Err(format!("g^Λ is not positive definite at {p}"));
            }
        }
        Ok(())
    }

    /// Sample points of every chart followed by the glue classes.
    pub fn sample_points(&self, plan: &SamplePlan) -> Vec<Point> {
        sample_points(&self.base, plan)
    }
}

pub fn sample_points(base: &WedgeComplex, plan: &SamplePlan) -> Vec<Point> {
    let mut pts = Vec::new();
    for (chart, xs) in plan.chart_points(base) {
        for x in xs {
            let p = Point::at(&chart, x);
            if !matches!(base.resolve(&p), Ok(Point::Glue { .. })) {
                pts.push(p);
            }
        }
    }
    pts.extend(base.glue_points());
    pts
}

fn check_len(v: &[Value], n: usize) -> Result<(), FormsError> {
    if v.len() != n {
        return Err(FormsError::Shape(format!("expected {n} components, got {}", v.len())));
    }
    Ok(())
}

pub fn diag(d: &[Value]) -> Vec<Vec<Value>> {
    (0..d.len()).map(|i| (0..d.len()).map(|j| if i == j { d[i].clone() } else { Value::zero() }).collect()).collect()
}

/// A 1-form section: coefficient of dx_c on each chart c.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormSection {
    pub coeffs: Vec<Expr>,
}

impl OneFormSection {
    pub fn zero(l: &OneFormBundle) -> Self {
        OneFormSection { coeffs: vec![Expr::zero(); l.h.len()] }
    }

    /// The branch tuple at p: each chart's coefficient at its branch coordinate.
    pub fn value_at(&self, l: &OneFormBundle, p: &Point) -> Result<Vec<Value>, FormsError> {
        branch_coords(&l.base, p)?.iter().map(|(i, b, c)| eval(&b.chart, &self.coeffs[*i], c)).collect()
    }

    pub fn add(&self, other: &OneFormSection) -> Self {
        OneFormSection { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.clone() + b.clone()).collect() }
    }

    pub fn scale(&self, f: &[Expr]) -> Self {
        OneFormSection { coeffs: self.coeffs.iter().zip(f).map(|(a, b)| b.clone() * a.clone()).collect() }
    }
}

/// Checks that a piecewise function takes one value at every glue class.
pub fn check_glued_function(base: &WedgeComplex, f: &[Expr], tol: f64) -> Result<(), FormsError> {
    if f.len() != base.charts().len() {
        return Err(FormsError::Shape(format!("{} charts but {} function pieces", base.charts().len(), f.len())));
    }
    for p in base.glue_points() {
        let values: Vec<Value> =
            branch_coords(base, &p)?.iter().map(|(i, b, c)| eval(&b.chart, &f[*i], c)).collect::<Result<_, _>>()?;
        if values.iter().any(|v| !values_agree(std::slice::from_ref(v), std::slice::from_ref(&values[0]), tol)) {
            return Err(FormsError::Discontinuous { point: p.to_string(), values: values.iter().map(Value::to_f64).collect() });
        }
    }
    Ok(())
}

/// d of a glued function: chart-wise derivatives, the branch tuple of
/// derivatives at glue classes.
pub fn differential(l: &OneFormBundle, f: &[Expr], tol: f64) -> Result<OneFormSection, FormsError> {
    check_glued_function(&l.base, f, tol)?;
    Ok(OneFormSection { coeffs: f.iter().map(Expr::differentiate).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    First,
    Second,
}

/// ρ̃₁^Λ / ρ̃₂^Λ: the branch components of ω over p that belong to the given
/// factor, together with the factor's point.
pub fn rho(gluing: &Gluing, leg: Leg, p: &Point, omega: &[Value]) -> Result<(Point, Vec<Value>), FormsError> {
    let branches = gluing.glued.branches_at(p)?;
    check_len(omega, branches.len())?;
    let on_leg = |chart: &str| (leg == Leg::First) == gluing.is_from_x1(chart);
    let kept: Vec<(Branch, Value)> =
        branches.into_iter().zip(omega.iter().cloned()).filter(|(b, _)| on_leg(&b.chart)).collect();
    let Some((first, _)) = kept.first() else {
        return Err(FormsError::OutsideDomain(p.to_string()));
    };
    let factor = if leg == Leg::First { &gluing.x1 } else { &gluing.x2 };
    let point = match first.exact.as_ref().and_then(|q| factor.class_of_site(&(first.chart.clone(), q.clone()))) {
        Some(class) => Point::Glue { class },
        None => Point::at(&first.chart, first.x),
    };
    Ok((point, kept.into_iter().map(|(_, v)| v).collect()))
}

/// Inverse of ρ̃₁ ⊕ ρ̃₂ on a glue fibre: reassembles the branch tuple.
pub fn rho_sum_inverse(gluing: &Gluing, p: &Point, first: &[Value], second: &[Value]) -> Result<Vec<Value>, FormsError> {
    let branches = gluing.glued.branches_at(p)?;
    let (mut a, mut b) = (first.iter(), second.iter());
    let out: Option<Vec<Value>> =
        branches.iter().map(|br| if gluing.is_from_x1(&br.chart) { a.next().cloned() } else { b.next().cloned() }).collect();
    match out {
        Some(v) if a.next().is_none() && b.next().is_none() => Ok(v),
        _ => Err(FormsError::Shape(format!("branch counts do not match at {p}"))),
    }
}

/// Metric compatibility of Λ¹ on an explicit list: each entry is a glued pair index and
/// two pairs of forms (ω′, ω″), (μ′, μ″) at y and f(y).
#[derive(Debug, Clone, PartialEq)]
pub struct FormPairs {
    pub pair: usize,
    pub omega: (Vec<Value>, Vec<Value>),
    pub mu: (Vec<Value>, Vec<Value>),
}

pub fn check_metric_pairs(l1: &OneFormBundle, l2: &OneFormBundle, gluing: &Gluing, pairs: &[FormPairs], tol: f64) -> Result<Vec<bool>, FormsError> {
    pairs
        .iter()
        .map(|fp| {
            let (y, fy) = gluing.pairs.get(fp.pair).ok_or_else(|| FormsError::Shape(format!("no glued pair {}", fp.pair)))?;
            let py = gluing.x1.resolve(&Point::at(&y.0, crate::linalg::q_to_f64(&y.1)))?;
            let pfy = gluing.x2.resolve(&Point::at(&fy.0, crate::linalg::q_to_f64(&fy.1)))?;
            let a = bilinear(&l1.metric_at(&py)?, &fp.omega.0, &fp.mu.0)?;
            let b = bilinear(&l2.metric_at(&pfy)?, &fp.omega.1, &fp.mu.1)?;
            Ok(values_agree(&[a], &[b], tol))
        })
        .collect()
}

pub fn bilinear(g: &[Vec<Value>], u: &[Value], v: &[Value]) -> Result<Value, FormsError> {
    check_len(u, g.len())?;
    check_len(v, g.len())?;
    let mut acc = Value::zero();
    for i in 0..g.len() {
        for j in 0..g.len() {
            acc = acc + u[i].clone() * g[i][j].clone() * v[j].clone();
        }
    }
    Ok(acc)
}

/// The combined dual metric ½(g₁^Λ)*(χ₁*·, χ₁*·) + ½(g₂^Λ)*(χ₂*·, χ₂*·) at a
/// glued point, on the dual branch basis; the factors' own metrics elsewhere.
pub fn combined_dual_metric(l1: &OneFormBundle, l2: &OneFormBundle, glued: &OneFormBundle, gluing: &Gluing, p: &Point) -> Result<Vec<Vec<Value>>, FormsError> {
    let coords = branch_coords(&glued.base, p)?;
    let n = coords.len();
    let g = glued.metric_at(p)?;
    let legs: Vec<(Leg, &OneFormBundle, Vec<usize>)> = [(Leg::First, l1), (Leg::Second, l2)]
        .into_iter()
        .map(|(leg, l)| (leg, l, (0..n).filter(|&i| (leg == Leg::First) == gluing.is_from_x1(&coords[i].1.chart)).collect::<Vec<_>>()))
        .filter(|(_, _, idx)| !idx.is_empty())
        .collect();
    let weight = Value::Exact(Q::new(1.into(), (legs.len() as i64).into()));
    let mut out = vec![vec![Value::zero(); n]; n];
    for (leg, l, idx) in &legs {
        let (q, _) = rho(gluing, *leg, p, &vec![Value::zero(); n])?;
        let w = l.weights(&q)?;
        // the factor's metric on its branches, read at the same exact coordinates
        let m: Vec<Value> = idx
            .iter()
            .zip(w)
            .map(|(&i, w)| {
                let (_, b, c) = &coords[i];
                let chart = l.base.chart_index(&b.chart).expect("factor chart");
                Ok(Value::Exact(w) * eval(&b.chart, &l.h[chart], c)?)
            })
            .collect::<Result<_, FormsError>>()?;
        // χ*(e^i) = Φ_{g_leg}(ρ(Φ_{g^Λ}⁻¹ e^i)) has component m_j/g_ii in slot j when idx_j = i
        for (j, &i) in idx.iter().enumerate() {
            let chi = m[j].clone() / g[i][i].clone();
            let term = chi.clone() * chi / m[j].clone();
            out[i][i] = out[i][i].clone() + weight.clone() * term;
        }
    }
    Ok(out)
}

/// Fibrewise comparison of the combined dual metric with (g^Λ)*.
pub fn check_dual_sum(l1: &OneFormBundle, l2: &OneFormBundle, gluing: &Gluing, plan: &SamplePlan, tol: f64) -> Result<(), String> {
    let glued = OneFormBundle::glued(l1, l2, gluing).map_err(|e| e.to_string())?;
    for p in glued.sample_points(plan) {
        let a = combined_dual_metric(l1, l2, &glued, gluing, &p).map_err(|e| e.to_string())?;
        let b = glued.dual_metric_at(&p).map_err(|e| e.to_string())?;
        if !crate::sampling::matrices_agree(&a, &b, tol) {
            return Err(format!("dual metrics differ at {p}"));
        }
    }
    Ok(())
}

pub fn describe_branch(b: &Branch) -> String {
    match &b.exact {
        Some(q) => format!("{}:{}", b.chart, fmt_q(q)),
        None => format!("{}:{}", b.chart, b.x),
    }
}
