//! Evaluation of expression vectors and matrices at chart coordinates, exact
//! where possible, plus the deterministic sample plans used by the checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex::{Domain, WedgeComplex};
use crate::linalg::{q_to_f64, QMat, Q};
use crate::symexpr::{EvalError, Expr, Value};

/// A chart coordinate: exact at glue sites, binary64 at samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Coord {
    Exact(Q),
    Float(f64),
}

impl Coord {
    pub fn to_f64(&self) -> f64 {
        match self {
            Coord::Exact(q) => q_to_f64(q),
            Coord::Float(x) => *x,
        }
    }

    pub fn eval(&self, e: &Expr) -> Result<Value, EvalError> {
        match self {
            Coord::Exact(q) => e.value_at(q),
            Coord::Float(x) => e.evaluate(*x).map(Value::Float),
        }
    }

    pub fn eval_f64(&self, e: &Expr) -> Result<f64, EvalError> {
        self.eval(e).map(|v| v.to_f64())
    }
}

pub fn eval_vector(es: &[Expr], c: &Coord) -> Result<Vec<Value>, EvalError> {
    es.iter().map(|e| c.eval(e)).collect()
}

pub fn eval_matrix(es: &[Vec<Expr>], c: &Coord) -> Result<Vec<Vec<Value>>, EvalError> {
    es.iter().map(|r| eval_vector(r, c)).collect()
}

pub fn exact_vector(v: &[Value]) -> Option<Vec<Q>> {
    v.iter().map(|x| x.exact().cloned()).collect()
}

pub fn exact_matrix(m: &[Vec<Value>]) -> Option<QMat> {
    let rows: Option<Vec<Vec<Q>>> = m.iter().map(|r| exact_vector(r)).collect();
    rows.map(|r| if r.is_empty() { QMat::zeros(0, 0) } else { QMat::from_rows(&r) })
}

pub fn to_f64_vec(v: &[Value]) -> Vec<f64> {
    v.iter().map(Value::to_f64).collect()
}

pub fn to_f64_mat(m: &[Vec<Value>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| to_f64_vec(r)).collect()
}

/// M·v, exact when every entry of v is.
pub fn apply(m: &QMat, v: &[Value]) -> Vec<Value> {
    match exact_vector(v) {
        Some(e) => m.mul_vec(&e).into_iter().map(Value::Exact).collect(),
        None => {
            let f = m.to_f64();
            let vf = to_f64_vec(v);
            f.iter().map(|row| Value::Float(row.iter().zip(&vf).map(|(a, b)| a * b).sum())).collect()
        }
    }
}

/// Exact equality when both sides are exact, else relative closeness.
pub fn values_agree(a: &[Value], b: &[Value], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    match (exact_vector(a), exact_vector(b)) {
        (Some(x), Some(y)) => x == y,
        _ => crate::linalg::real::close_vec(&to_f64_vec(a), &to_f64_vec(b), tol),
    }
}

pub fn matrices_agree(a: &[Vec<Value>], b: &[Vec<Value>], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_agree(x, y, tol))
}

/// Points per chart: a uniform grid on [lo, hi] clipped to the chart domain,
/// the chart's glue coordinates, and seeded uniform random points.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub grid: usize,
    pub lo: f64,
    pub hi: f64,
    pub random: usize,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan { grid: 21, lo: -2.0, hi: 2.0, random: 5, seed: 0 }
    }
}

impl SamplePlan {
    pub fn with_seed(seed: u64) -> Self {
        SamplePlan { seed, ..Self::default() }
    }

    pub fn grid_points(&self, domain: &Domain) -> Vec<f64> {
        let (lo, hi) = match domain {
            Domain::Line => (self.lo, self.hi),
            Domain::Interval(a, b) => (self.lo.max(q_to_f64(a)), self.hi.min(q_to_f64(b))),
        };
        if self.grid == 0 || lo > hi {
            return Vec::new();
        }
        if self.grid == 1 {
            return vec![lo];
        }
        let step = (hi - lo) / (self.grid - 1) as f64;
        (0..self.grid).map(|k| if k + 1 == self.grid { hi } else { lo + step * k as f64 }).collect()
    }

    /// Sample coordinates of every chart, in chart order.
    pub fn chart_points(&self, x: &WedgeComplex) -> Vec<(String, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        x.charts()
            .iter()
            .map(|c| {
                let mut pts = self.grid_points(&c.domain);
                for class in x.classes() {
                    for (id, q) in class {
                        if *id == c.id {
                            pts.push(q_to_f64(q));
                        }
                    }
                }
                let (lo, hi) = match &c.domain {
                    Domain::Line => (self.lo, self.hi),
                    Domain::Interval(a, b) => (self.lo.max(q_to_f64(a)), self.hi.min(q_to_f64(b))),
                };
                for _ in 0..self.random {
                    if lo < hi {
                        pts.push(rng.gen_range(lo..hi));
                    }
                }
                (c.id.clone(), pts)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{q, qf};
    use crate::symexpr::parse_expr;

    #[test]
    fn grid_has_21_points_on_the_default_window() {
        let g = SamplePlan::default().grid_points(&Domain::Line);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[20], 2.0);
        let clipped = SamplePlan::default().grid_points(&Domain::Interval(q(0), q(1)));
        assert!(clipped.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn plans_are_deterministic() {
        let x = WedgeComplex::lines(&["a", "b"]);
        assert_eq!(SamplePlan::with_seed(3).chart_points(&x), SamplePlan::with_seed(3).chart_points(&x));
        assert_ne!(SamplePlan::with_seed(3).chart_points(&x), SamplePlan::with_seed(4).chart_points(&x));
    }

    #[test]
    fn exact_coordinates_keep_exactness() {
        let e = parse_expr("exp(x)*(x+1/3)").unwrap();
        assert_eq!(Coord::Exact(q(0)).eval(&e), Ok(Value::Exact(qf(1, 3))));
        assert!(matches!(Coord::Exact(q(1)).eval(&e), Ok(Value::Float(_))));
    }
}
