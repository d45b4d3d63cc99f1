//! Pseudo-bundles over wedge complexes: a fibre model and an expression
//! pseudo-metric per chart, and at every glue class a representative member
//! together with invertible maps from each member's fibre into the
//! representative's fibre.

use thiserror::Error;

use crate::complex::{glue_complexes, ComplexError, Gluing, Point, Site, WedgeComplex};
use crate::dvspace::{dual_map, maps_nonsmooth_into, DvsError, DvsModel};
use crate::linalg::{fmt_q, in_span, real, same_span, QMat, QVec, Q};
use crate::sampling::{apply, eval_matrix, eval_vector, exact_matrix, matrices_agree, to_f64_mat, values_agree, Coord, SamplePlan};
use crate::symexpr::matrix::{self, ExprMat};
use crate::symexpr::{EvalError, Expr, Value};

/// Tolerance for metric compatibility when values are not exact.
pub const COMPAT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Dvs(#[from] DvsError),
    #[error("cannot evaluate on chart `{chart}` at {x}: {source}")]
    Eval { chart: String, x: f64, source: EvalError },
    #[error("{0}")]
    Shape(String),
    #[error("glue map at {point} is not invertible")]
    NotInvertible { point: String },
    #[error("glue map at {point} does not carry the non-smooth directions onto each other")]
    NotSmooth { point: String },
    #[error("metrics are incompatible at {point}: {left:?} vs {right:?}")]
    IncompatibleMetrics { point: String, left: Vec<Vec<f64>>, right: Vec<Vec<f64>> },
    #[error("sections are incompatible at {point}: {left:?} vs {right:?}")]
    IncompatibleSections { point: String, left: Vec<f64>, right: Vec<f64> },
    #[error("bundles live over different bases")]
    BaseMismatch,
    #[error("constructions were glued along different data")]
    MismatchedGluing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fibre {
    pub model: DvsModel,
    pub metric: ExprMat,
}

impl Fibre {
    pub fn new(model: DvsModel, metric: ExprMat) -> Result<Self, BundleError> {
        let n = model.dim();
        if metric.len() != n || metric.iter().any(|r| r.len() != n) {
            return Err(BundleError::Shape(format!("metric must be {n}x{n}")));
        }
        Ok(Fibre { model, metric })
    }

    /// ℝ with metric h.
    pub fn line(h: Expr) -> Self {
        Fibre { model: DvsModel::standard(1), metric: vec![vec![h]] }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlueData {
    pub representative: usize,
    /// `maps[i]` sends the fibre of member i into the representative's fibre.
    pub maps: Vec<QMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoBundle {
    base: WedgeComplex,
    fibres: Vec<Fibre>,
    glue: Vec<GlueData>,
}

fn site_name(s: &Site) -> String {
    format!("{}:{}", s.0, fmt_q(&s.1))
}

fn eval_err<'a>(chart: &'a str, c: &Coord) -> impl Fn(EvalError) -> BundleError + 'a {
    let x = c.to_f64();
    move |source| BundleError::Eval { chart: chart.to_string(), x, source }
}

/// Fᵀ G F.
pub fn pullback(f: &QMat, g: &[Vec<Value>]) -> Vec<Vec<Value>> {
    match exact_matrix(g) {
        Some(e) => f.transpose().mul(&e).mul(f).to_rows().into_iter().map(|r| r.into_iter().map(Value::Exact).collect()).collect(),
        None => {
            let ff = f.to_f64();
            let p = real::mul(&real::transpose(&ff), &real::mul(&to_f64_mat(g), &ff));
            p.into_iter().map(|r| r.into_iter().map(Value::Float).collect()).collect()
        }
    }
}

impl PseudoBundle {
    pub fn new(base: WedgeComplex, fibres: Vec<Fibre>, glue: Vec<GlueData>) -> Result<Self, BundleError> {
        if fibres.len() != base.charts().len() {
            return Err(BundleError::Shape(format!("{} charts but {} fibres", base.charts().len(), fibres.len())));
        }
        if glue.len() != base.classes().len() {
            return Err(BundleError::Shape(format!("{} glue classes but {} glue entries", base.classes().len(), glue.len())));
        }
        let b = PseudoBundle { base, fibres, glue };
        for (c, (class, data)) in b.base.classes().iter().zip(&b.glue).enumerate() {
            if data.maps.len() != class.len() || data.representative >= class.len() {
                return Err(BundleError::Shape(format!("glue class {c} needs one map per member")));
            }
            let rep_site = &class[data.representative];
            let rep = b.fibre_of(&rep_site.0);
            if data.maps[data.representative] != QMat::identity(rep.dim()) {
                return Err(BundleError::Shape(format!("the representative map of glue class {c} must be the identity")));
            }
            for (site, map) in class.iter().zip(&data.maps) {
                let member = b.fibre_of(&site.0);
                b.check_glue_map(&member.model, &rep.model, map, &format!("{} -> {}", site_name(site), site_name(rep_site)))?;
                b.check_compatible(site, rep_site, map)?;
            }
        }
        Ok(b)
    }

    /// Every glue class gets its last member as representative and identity maps.
    pub fn with_identity_glue(base: WedgeComplex, fibres: Vec<Fibre>) -> Result<Self, BundleError> {
        let glue = base
            .classes()
            .iter()
            .map(|class| {
                let n = fibres[base.chart_index(&class[0].0).expect("class sites name charts")].dim();
                GlueData { representative: class.len() - 1, maps: vec![QMat::identity(n); class.len()] }
            })
            .collect();
        Self::new(base, fibres, glue)
    }

    fn check_glue_map(&self, from: &DvsModel, to: &DvsModel, map: &QMat, point: &str) -> Result<(), BundleError> {
        if map.nrows() != to.dim() || map.ncols() != from.dim() {
            return Err(BundleError::Shape(format!("glue map at {point} must be {}x{}", to.dim(), from.dim())));
        }
        if map.inverse().is_none() {
            return Err(BundleError::NotInvertible { point: point.to_string() });
        }
        let images: Vec<QVec> = from.nonsmooth_basis().iter().map(|k| map.mul_vec(k)).collect();
        if !same_span(&images, to.nonsmooth_basis()) {
            return Err(BundleError::NotSmooth { point: point.to_string() });
        }
        Ok(())
    }

    fn check_compatible(&self, site: &Site, rep_site: &Site, map: &QMat) -> Result<(), BundleError> {
        let g_member = self.metric_at_site(site)?;
        let g_rep = self.metric_at_site(rep_site)?;
        let pulled = pullback(map, &g_rep);
        if !matrices_agree(&g_member, &pulled, COMPAT_TOL) {
            return Err(BundleError::IncompatibleMetrics {
                point: format!("{} ~ {}", site_name(site), site_name(rep_site)),
                left: to_f64_mat(&g_member),
                right: to_f64_mat(&pulled),
            });
        }
        Ok(())
    }

    pub fn base(&self) -> &WedgeComplex {
        &self.base
    }

    pub fn fibres(&self) -> &[Fibre] {
        &self.fibres
    }

    pub fn glue(&self) -> &[GlueData] {
        &self.glue
    }

    pub fn fibre_of(&self, chart: &str) -> &Fibre {
        &self.fibres[self.base.chart_index(chart).expect("known chart")]
    }

    pub fn metric_at_site(&self, site: &Site) -> Result<Vec<Vec<Value>>, BundleError> {
        let c = Coord::Exact(site.1.clone());
        eval_matrix(&self.fibre_of(&site.0).metric, &c).map_err(eval_err(&site.0, &c))
    }

    /// The chart and coordinate at which the fibre over p is read.
    pub fn anchor(&self, p: &Point) -> Result<(String, Coord), BundleError> {
        Ok(match self.base.resolve(p)? {
            Point::Chart { chart, x } => (chart, Coord::Float(x)),
            Point::Glue { class } => {
                let (chart, q) = self.base.classes()[class][self.glue[class].representative].clone();
                (chart, Coord::Exact(q))
            }
        })
    }

    pub fn fibre_at(&self, p: &Point) -> Result<&Fibre, BundleError> {
        let (chart, _) = self.anchor(p)?;
        Ok(self.fibre_of(&chart))
    }

    pub fn metric_at(&self, p: &Point) -> Result<Vec<Vec<Value>>, BundleError> {
        let (chart, c) = self.anchor(p)?;
        eval_matrix(&self.fibre_of(&chart).metric, &c).map_err(eval_err(&chart, &c))
    }

    /// The map from the fibre of `site` into the fibre over its point.
    pub fn site_map(&self, site: &Site) -> QMat {
        match self.base.class_of_site(site) {
            Some(class) => {
                let i = self.base.classes()[class].iter().position(|s| s == site).expect("member");
                self.glue[class].maps[i].clone()
            }
            None => QMat::identity(self.fibre_of(&site.0).dim()),
        }
    }

    /// The representative site of a glue class.
    pub fn representative(&self, class: usize) -> &Site {
        &self.base.classes()[class][self.glue[class].representative]
    }

    pub fn section_at(&self, s: &Section, p: &Point) -> Result<Vec<Value>, BundleError> {
        let (chart, c) = self.anchor(p)?;
        let i = self.base.chart_index(&chart).expect("known chart");
        eval_vector(&s.components[i], &c).map_err(eval_err(&chart, &c))
    }

    pub fn section_at_site(&self, s: &Section, site: &Site) -> Result<Vec<Value>, BundleError> {
        let c = Coord::Exact(site.1.clone());
        let i = self.base.chart_index(&site.0).expect("known chart");
        eval_vector(&s.components[i], &c).map_err(eval_err(&site.0, &c))
    }

    /// Checks that every member value maps onto the representative value.
    pub fn check_section(&self, s: &Section, tol: f64) -> Result<(), BundleError> {
        if s.components.len() != self.fibres.len()
            || s.components.iter().zip(&self.fibres).any(|(c, f)| c.len() != f.dim())
        {
            return Err(BundleError::Shape("section does not match the fibre dimensions".into()));
        }
        for (class, data) in self.base.classes().iter().zip(&self.glue) {
            let rep_site = &class[data.representative];
            let rep_value = self.section_at_site(s, rep_site)?;
            for (site, map) in class.iter().zip(&data.maps) {
                let mapped = apply(map, &self.section_at_site(s, site)?);
                if !values_agree(&mapped, &rep_value, tol) {
                    return Err(BundleError::IncompatibleSections {
                        point: format!("{} ~ {}", site_name(site), site_name(rep_site)),
                        left: mapped.iter().map(Value::to_f64).collect(),
                        right: rep_value.iter().map(Value::to_f64).collect(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks the metric is a pseudo-metric for the fibre model at every
    /// sample: exactly where values are rational, numerically otherwise.
    pub fn validate_metric(&self, plan: &SamplePlan, tol: f64) -> Result<(), String> {
        for (chart, xs) in plan.chart_points(&self.base) {
            let fibre = self.fibre_of(&chart);
            for x in xs {
                let c = Coord::Float(x);
                let g = eval_matrix(&fibre.metric, &c).map_err(|e| format!("{chart}:{x}: {e}"))?;
                metric_is_valid(&fibre.model, &g, tol).map_err(|e| format!("{chart}:{x}: {e}"))?;
            }
        }
        for class in self.base.classes() {
            for site in class {
                let g = self.metric_at_site(site).map_err(|e| e.to_string())?;
                metric_is_valid(&self.fibre_of(&site.0).model, &g, tol).map_err(|e| format!("{}: {e}", site_name(site)))?;
            }
        }
        Ok(())
    }
}

/// Pseudo-metric test for an evaluated matrix.
pub fn metric_is_valid(model: &DvsModel, g: &[Vec<Value>], tol: f64) -> Result<(), String> {
    if let Some(e) = exact_matrix(g) {
        let v = model.is_pseudo_metric(&e).map_err(|e| e.to_string())?;
        return match v.failure {
            None => Ok(()),
            Some(f) => Err(f.to_string()),
        };
    }
    let m = to_f64_mat(g);
    let n = model.dim();
    for i in 0..n {
        for j in 0..i {
            if !real::close(m[i][j], m[j][i], tol) {
                return Err("matrix is not symmetric".into());
            }
        }
    }
    let scale = real::max_abs(&m).max(1.0);
    for k in model.nonsmooth_basis() {
        let kf: Vec<f64> = k.iter().map(crate::linalg::q_to_f64).collect();
        if real::mul_vec(&m, &kf).iter().any(|x| x.abs() > tol * scale) {
            return Err("a non-smooth direction is not in the kernel".into());
        }
    }
    // restricted to the coordinate complement of K the form must be definite
    let (_, pivots) = if model.dual_dim() == n {
        (QMat::zeros(0, 0), (0..n).collect())
    } else {
        QMat::from_rows(&model.dual_space()).rref()
    };
    let sub: Vec<Vec<f64>> = pivots.iter().map(|&i| pivots.iter().map(|&j| m[i][j]).collect()).collect();
    if !real::is_positive_definite(&sub, tol) {
        return Err("matrix is not positive definite off the non-smooth directions".into());
    }
    Ok(())
}

/// Piecewise expression section: one coefficient vector per chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub components: Vec<Vec<Expr>>,
}

impl Section {
    pub fn zero(b: &PseudoBundle) -> Self {
        Section { components: b.fibres.iter().map(|f| vec![Expr::zero(); f.dim()]).collect() }
    }

    pub fn add(&self, other: &Section) -> Section {
        Section {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect())
                .collect(),
        }
    }

    /// Multiplication by a piecewise function, one expression per chart.
    pub fn scale(&self, h: &[Expr]) -> Section {
        Section {
            components: self.components.iter().zip(h).map(|(c, f)| c.iter().map(|x| f.clone() * x.clone()).collect()).collect(),
        }
    }
}

/// A gluing of two pseudo-bundles along f̃ covering a gluing of their bases.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleGluing {
    pub gluing: Gluing,
    pub v1: PseudoBundle,
    pub v2: PseudoBundle,
    /// f̃ at each glued pair, from V₁ at y to V₂ at f(y).
    pub ftilde: Vec<QMat>,
    pub glued: PseudoBundle,
}

pub fn glue_bundles(v1: &PseudoBundle, v2: &PseudoBundle, gluing: &Gluing, ftilde: &[QMat]) -> Result<BundleGluing, BundleError> {
    if v1.base != gluing.x1 || v2.base != gluing.x2 {
        return Err(BundleError::BaseMismatch);
    }
    if ftilde.len() != gluing.pairs.len() {
        return Err(BundleError::Shape(format!("{} glued points but {} fibre maps", gluing.pairs.len(), ftilde.len())));
    }
    for ((y, fy), map) in gluing.pairs.iter().zip(ftilde) {
        let point = format!("{} -> {}", site_name(y), site_name(fy));
        v1.check_glue_map(&v1.fibre_of(&y.0).model, &v2.fibre_of(&fy.0).model, map, &point)?;
        let g1 = v1.metric_at_site(y)?;
        let pulled = pullback(map, &v2.metric_at_site(fy)?);
        if !matrices_agree(&g1, &pulled, COMPAT_TOL) {
            return Err(BundleError::IncompatibleMetrics { point, left: to_f64_mat(&g1), right: to_f64_mat(&pulled) });
        }
    }

    let glued_base = &gluing.glued;
    let mut glue = Vec::new();
    for class in glued_base.classes() {
        let side2: Vec<&Site> = class.iter().filter(|s| gluing.x2.chart(&s.0).is_some()).collect();
        let (rep_site, map_of): (Site, Box<dyn Fn(&Site) -> QMat>) = if let Some(first2) = side2.first() {
            let rep2 = match gluing.x2.class_of_site(first2) {
                Some(c2) => v2.representative(c2).clone(),
                None => (*first2).clone(),
            };
            let pairs = gluing.pairs.clone();
            let maps = ftilde.to_vec();
            let (v1c, v2c) = (v1.clone(), v2.clone());
            let x1 = gluing.x1.clone();
            (
                rep2,
                Box::new(move |s: &Site| {
                    if v2c.base.chart(&s.0).is_some() {
                        return v2c.site_map(s);
                    }
                    // X₁ member: into y's fibre, across f̃, then into the representative
                    let same_point = |y: &Site| match (x1.class_of_site(s), x1.class_of_site(y)) {
                        (Some(a), Some(b)) => a == b,
                        _ => s == y,
                    };
                    let k = pairs.iter().position(|(y, _)| same_point(y)).expect("glued member has a partner");
                    let (y, fy) = &pairs[k];
                    let back = v1c.site_map(y).inverse().expect("glue maps are invertible");
                    v2c.site_map(fy).mul(&maps[k]).mul(&back).mul(&v1c.site_map(s))
                }),
            )
        } else {
            let c1 = gluing.x1.class_of_site(&class[0]).expect("an unglued class comes from X1");
            let v1c = v1.clone();
            (v1.representative(c1).clone(), Box::new(move |s: &Site| v1c.site_map(s)))
        };
        let representative = class.iter().position(|s| *s == rep_site).expect("representative is a member");
        glue.push(GlueData { representative, maps: class.iter().map(|s| map_of(s)).collect() });
    }
    let fibres = v1.fibres.iter().chain(&v2.fibres).cloned().collect();
    let glued = PseudoBundle::new(glued_base.clone(), fibres, glue)?;
    Ok(BundleGluing { gluing: gluing.clone(), v1: v1.clone(), v2: v2.clone(), ftilde: ftilde.to_vec(), glued })
}

/// Convenience: glue bases and bundles in one step.
pub fn glue_along(v1: &PseudoBundle, v2: &PseudoBundle, pairs: &[(Site, Site)], ftilde: &[QMat]) -> Result<BundleGluing, BundleError> {
    let gluing = glue_complexes(&v1.base, &v2.base, pairs)?;
    glue_bundles(v1, v2, &gluing, ftilde)
}

impl BundleGluing {
    fn nfirst(&self) -> usize {
        self.v1.fibres.len()
    }

    pub fn glue_sections(&self, s1: &Section, s2: &Section, tol: f64) -> Result<Section, BundleError> {
        self.v1.check_section(s1, tol)?;
        self.v2.check_section(s2, tol)?;
        for ((y, fy), map) in self.gluing.pairs.iter().zip(&self.ftilde) {
            let left = apply(map, &self.v1.section_at_site(s1, y)?);
            let right = self.v2.section_at_site(s2, fy)?;
            if !values_agree(&left, &right, tol) {
                return Err(BundleError::IncompatibleSections {
                    point: format!("{} -> {}", site_name(y), site_name(fy)),
                    left: left.iter().map(Value::to_f64).collect(),
                    right: right.iter().map(Value::to_f64).collect(),
                });
            }
        }
        let s = Section { components: s1.components.iter().chain(&s2.components).cloned().collect() };
        self.glued.check_section(&s, tol)?;
        Ok(s)
    }

    pub fn split_section(&self, s: &Section, tol: f64) -> Result<(Section, Section), BundleError> {
        self.glued.check_section(s, tol)?;
        let n = self.nfirst();
        Ok((Section { components: s.components[..n].to_vec() }, Section { components: s.components[n..].to_vec() }))
    }

    fn push(&self, b: &PseudoBundle, p: &Point, v: &[Value]) -> Result<Vec<Value>, BundleError> {
        // v is given in the fibre over p as V_i reads it; rewrite via the site it came from
        let (chart, c) = b.anchor(p)?;
        Ok(match c {
            Coord::Exact(q) => apply(&self.glued.site_map(&(chart, q)), v),
            Coord::Float(_) => v.to_vec(),
        })
    }

    /// j₁ (extended by f̃ over Y): V₁ → V₁ ∪ V₂.
    pub fn j1(&self, p: &Point, v: &[Value]) -> Result<(Point, Vec<Value>), BundleError> {
        Ok((self.gluing.i1_tilde(p)?, self.push(&self.v1, p, v)?))
    }

    /// j₂: V₂ → V₁ ∪ V₂.
    pub fn j2(&self, p: &Point, v: &[Value]) -> Result<(Point, Vec<Value>), BundleError> {
        Ok((self.gluing.i2(p)?, self.push(&self.v2, p, v)?))
    }
}

fn same_structure(a: &PseudoBundle, b: &PseudoBundle) -> Result<(), BundleError> {
    if a.base != b.base {
        return Err(BundleError::BaseMismatch);
    }
    Ok(())
}

/// W's glue maps re-expressed towards V's representatives.
fn rebased_maps(v: &PseudoBundle, w: &PseudoBundle, class: usize) -> Vec<QMat> {
    let r = v.glue[class].representative;
    let back = w.glue[class].maps[r].inverse().expect("glue maps are invertible");
    w.glue[class].maps.iter().map(|m| back.mul(m)).collect()
}

fn block_diag_q(a: &QMat, b: &QMat) -> QMat {
    a.block_diag(b)
}

pub fn direct_sum(v: &PseudoBundle, w: &PseudoBundle) -> Result<PseudoBundle, BundleError> {
    same_structure(v, w)?;
    let fibres = v
        .fibres
        .iter()
        .zip(&w.fibres)
        .map(|(a, b)| {
            let (n, m) = (a.dim(), b.dim());
            let k: Vec<QVec> = a
                .model
                .nonsmooth_basis()
                .iter()
                .map(|k| k.iter().cloned().chain(std::iter::repeat(Q::default()).take(m)).collect())
                .chain(b.model.nonsmooth_basis().iter().map(|k| std::iter::repeat(Q::default()).take(n).chain(k.iter().cloned()).collect()))
                .collect();
            Fibre::new(DvsModel::new(n + m, &k)?, matrix::block_diag(&a.metric, &b.metric))
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    let glue = (0..v.glue.len())
        .map(|c| GlueData {
            representative: v.glue[c].representative,
            maps: v.glue[c].maps.iter().zip(rebased_maps(v, w, c)).map(|(a, b)| block_diag_q(a, &b)).collect(),
        })
        .collect();
    PseudoBundle::new(v.base.clone(), fibres, glue)
}

fn kron_vec(a: &[Q], b: &[Q]) -> QVec {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

pub fn tensor_product(v: &PseudoBundle, w: &PseudoBundle) -> Result<PseudoBundle, BundleError> {
    same_structure(v, w)?;
    let fibres = v
        .fibres
        .iter()
        .zip(&w.fibres)
        .map(|(a, b)| {
            let (n, m) = (a.dim(), b.dim());
            let unit = |d: usize, i: usize| -> QVec { (0..d).map(|j| if i == j { Q::from_integer(1.into()) } else { Q::default() }).collect() };
            let mut k = Vec::new();
            for ka in a.model.nonsmooth_basis() {
                for j in 0..m {
                    k.push(kron_vec(ka, &unit(m, j)));
                }
            }
            for kb in b.model.nonsmooth_basis() {
                for i in 0..n {
                    k.push(kron_vec(&unit(n, i), kb));
                }
            }
            Fibre::new(DvsModel::new(n * m, &k)?, matrix::kron(&a.metric, &b.metric))
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    let glue = (0..v.glue.len())
        .map(|c| GlueData {
            representative: v.glue[c].representative,
            maps: v.glue[c].maps.iter().zip(rebased_maps(v, w, c)).map(|(a, b)| a.kron(&b)).collect(),
        })
        .collect();
    PseudoBundle::new(v.base.clone(), fibres, glue)
}

/// Pivot columns of the dual basis: a coordinate complement of K.
fn dual_pivots(model: &DvsModel) -> Vec<usize> {
    if model.is_standard() {
        return (0..model.dim()).collect();
    }
    QMat::from_rows(&model.dual_space()).rref().1
}

/// Fibrewise diffeological dual. In the dual basis of each chart the dual
/// metric is the inverse of g restricted to the pivot coordinates.
pub fn dual_bundle(v: &PseudoBundle) -> Result<PseudoBundle, BundleError> {
    let fibres = v
        .fibres
        .iter()
        .map(|f| {
            let piv = dual_pivots(&f.model);
            let sub: ExprMat = piv.iter().map(|&i| piv.iter().map(|&j| f.metric[i][j].clone()).collect()).collect();
            Fibre::new(DvsModel::standard(piv.len()), matrix::inverse(&sub))
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    let glue = v
        .base
        .classes()
        .iter()
        .zip(&v.glue)
        .map(|(class, data)| {
            let rep = &v.fibre_of(&class[data.representative].0).model;
            let maps = class
                .iter()
                .zip(&data.maps)
                .map(|(site, m)| {
                    let d = dual_map(&v.fibre_of(&site.0).model, rep, m)?;
                    Ok(d.inverse().expect("dual of an isomorphism"))
                })
                .collect::<Result<Vec<_>, BundleError>>()?;
            Ok(GlueData { representative: data.representative, maps })
        })
        .collect::<Result<Vec<_>, BundleError>>()?;
    PseudoBundle::new(v.base.clone(), fibres, glue)
}

/// A fibrewise linear map between two bundles, covering a map of bases.
#[derive(Debug, Clone)]
pub struct FibreIso {
    pub source: PseudoBundle,
    pub target: PseudoBundle,
    /// Base map on glue classes; chart points map to themselves.
    pub class_map: Vec<usize>,
}

impl FibreIso {
    pub fn base_point(&self, p: &Point) -> Result<Point, BundleError> {
        Ok(match self.source.base.resolve(p)? {
            Point::Glue { class } => Point::Glue { class: self.class_map[class] },
            chart => chart,
        })
    }

    /// Matrix at p: source fibre coordinates → target fibre coordinates.
    pub fn matrix_at(&self, p: &Point) -> Result<QMat, BundleError> {
        let (chart, c) = self.source.anchor(p)?;
        Ok(match c {
            Coord::Exact(q) => self.target.site_map(&(chart, q)),
            Coord::Float(_) => QMat::identity(self.source.fibre_of(&chart).dim()),
        })
    }

    pub fn apply(&self, p: &Point, v: &[Value]) -> Result<(Point, Vec<Value>), BundleError> {
        Ok((self.base_point(p)?, apply(&self.matrix_at(p)?, v)))
    }

    pub fn invertible_everywhere(&self) -> bool {
        self.source.base.glue_points().iter().all(|p| self.matrix_at(p).map(|m| m.inverse().is_some()).unwrap_or(false))
    }
}

fn check_same_gluing(a: &BundleGluing, b: &BundleGluing) -> Result<(), BundleError> {
    if a.gluing != b.gluing {
        return Err(BundleError::MismatchedGluing);
    }
    Ok(())
}

fn identity_classes(g: &Gluing) -> Vec<usize> {
    (0..g.glued.classes().len()).collect()
}

/// Φ_{∪,⊕}: (V₁∪V₂) ⊕ (V₁'∪V₂') → (V₁⊕V₁') ∪ (V₂⊕V₂').
pub fn phi_sum(a: &BundleGluing, b: &BundleGluing) -> Result<(FibreIso, BundleGluing), BundleError> {
    check_same_gluing(a, b)?;
    let source = direct_sum(&a.glued, &b.glued)?;
    let maps: Vec<QMat> = a.ftilde.iter().zip(&b.ftilde).map(|(x, y)| x.block_diag(y)).collect();
    let target = glue_bundles(&direct_sum(&a.v1, &b.v1)?, &direct_sum(&a.v2, &b.v2)?, &a.gluing, &maps)?;
    Ok((FibreIso { source, target: target.glued.clone(), class_map: identity_classes(&a.gluing) }, target))
}

/// Φ_{∪,⊗}: (V₁∪V₂) ⊗ (V₁'∪V₂') → (V₁⊗V₁') ∪ (V₂⊗V₂').
pub fn phi_tensor(a: &BundleGluing, b: &BundleGluing) -> Result<(FibreIso, BundleGluing), BundleError> {
    check_same_gluing(a, b)?;
    let source = tensor_product(&a.glued, &b.glued)?;
    let maps: Vec<QMat> = a.ftilde.iter().zip(&b.ftilde).map(|(x, y)| x.kron(y)).collect();
    let target = glue_bundles(&tensor_product(&a.v1, &b.v1)?, &tensor_product(&a.v2, &b.v2)?, &a.gluing, &maps)?;
    Ok((FibreIso { source, target: target.glued.clone(), class_map: identity_classes(&a.gluing) }, target))
}

/// Φ_{∪,*}: (V₁∪_{f̃}V₂)* → V₂* ∪_{f̃*} V₁*, covering the switch map.
pub fn phi_dual(a: &BundleGluing) -> Result<(FibreIso, BundleGluing), BundleError> {
    let source = dual_bundle(&a.glued)?;
    let reversed = a.gluing.reversed()?;
    let maps = a
        .gluing
        .pairs
        .iter()
        .zip(&a.ftilde)
        .map(|((y, fy), f)| Ok(dual_map(&a.v1.fibre_of(&y.0).model, &a.v2.fibre_of(&fy.0).model, f)?))
        .collect::<Result<Vec<_>, BundleError>>()?;
    let target = glue_bundles(&dual_bundle(&a.v2)?, &dual_bundle(&a.v1)?, &reversed, &maps)?;
    let switch = crate::complex::switch_map(&a.gluing)?;
    let class_map = (0..a.gluing.glued.classes().len())
        .map(|c| match switch.apply(&Point::Glue { class: c }) {
            Ok(Point::Glue { class }) => class,
            _ => unreachable!("glue classes switch to glue classes"),
        })
        .collect();
    Ok((FibreIso { source, target: target.glued.clone(), class_map }, target))
}

/// Checks the rank statement of the induced metric: the fibre metric over
/// i₁(x) and i₂(x) has the rank of the factor's metric, and equals it.
pub fn induced_pseudometric(g: &BundleGluing, p: &Point) -> Result<Vec<Vec<Value>>, BundleError> {
    g.glued.metric_at(p)
}

pub fn check_induced_metric(g: &BundleGluing, plan: &SamplePlan, tol: f64) -> Result<(), String> {
    let check = |from: &PseudoBundle, p: Point, image: Point| -> Result<(), String> {
        let own = from.metric_at(&p).map_err(|e| e.to_string())?;
        let glued = g.glued.metric_at(&image).map_err(|e| e.to_string())?;
        let ok = if let Coord::Exact(q) = g.glued.anchor(&image).map_err(|e| e.to_string())?.1 {
            // over a glue class the fibre is the representative's: compare through the site map
            let (chart, c) = from.anchor(&p).map_err(|e| e.to_string())?;
            let site = (chart, match c {
                Coord::Exact(x) => x,
                Coord::Float(_) => q,
            });
            let m = g.glued.site_map(&site);
            let inner = from.site_map(&site).inverse().ok_or("non-invertible glue map")?;
            matrices_agree(&own, &pullback(&m.mul(&inner), &glued), tol)
        } else {
            matrices_agree(&own, &glued, tol)
        };
        let rank = |m: &[Vec<Value>]| real::rank(&to_f64_mat(m), 1e-12);
        if !ok || rank(&own) != rank(&glued) {
            return Err(format!("induced metric differs over {image}"));
        }
        Ok(())
    };
    for (chart, xs) in plan.chart_points(&g.gluing.x1) {
        for x in xs {
            let p = Point::at(&chart, x);
            check(&g.v1, p.clone(), g.gluing.i1_tilde(&p).map_err(|e| e.to_string())?)?;
        }
    }
    for (chart, xs) in plan.chart_points(&g.gluing.x2) {
        for x in xs {
            let p = Point::at(&chart, x);
            check(&g.v2, p.clone(), g.gluing.i2(&p).map_err(|e| e.to_string())?)?;
        }
    }
    Ok(())
}

/// Basis vectors of ℚⁿ as exact values.
pub fn unit_values(n: usize) -> Vec<Vec<Value>> {
    (0..n)
        .map(|i| (0..n).map(|j| Value::Exact(if i == j { Q::from_integer(1.into()) } else { Q::default() })).collect())
        .collect()
}

/// Whether F(K₁) ⊆ K₂ and F(K₁) spans a subspace of the same dimension.
pub fn preserves_nonsmooth(m1: &DvsModel, m2: &DvsModel, f: &QMat) -> bool {
    maps_nonsmooth_into(m1, m2, f) && m2.nonsmooth_basis().iter().all(|k| {
        let images: Vec<QVec> = m1.nonsmooth_basis().iter().map(|v| f.mul_vec(v)).collect();
        in_span(&images, k)
    })
}

/// Points at which the Φ identities are checked on leg `first` (or the
/// second): every glued site and one sample per chart.
fn identity_points(g: &Gluing, first: bool) -> Result<Vec<Point>, BundleError> {
    let x = if first { &g.x1 } else { &g.x2 };
    let mut out = Vec::new();
    for (y, fy) in &g.pairs {
        let s = if first { y } else { fy };
        out.push(x.resolve(&Point::at(&s.0, crate::linalg::q_to_f64(&s.1)))?);
    }
    for c in x.charts() {
        out.push(x.resolve(&Point::at(&c.id, 0.625))?);
    }
    Ok(out)
}

/// Φ_{∪,⊕} or Φ_{∪,⊗} carries j^a(u) ⊕ j^b(w) (or ⊗) to j(u ⊕ w) (or ⊗) for
/// all basis vectors u, w over every identity point of both legs, exactly.
pub fn check_phi_product(a: &BundleGluing, b: &BundleGluing, tensor: bool) -> Result<bool, BundleError> {
    let (phi, target) = if tensor { phi_tensor(a, b)? } else { phi_sum(a, b)? };
    if !phi.invertible_everywhere() {
        return Ok(false);
    }
    let combine = |u: &[Value], w: &[Value]| -> Vec<Value> {
        if tensor {
            u.iter().flat_map(|x| w.iter().map(move |y| x.clone() * y.clone())).collect()
        } else {
            u.iter().chain(w).cloned().collect()
        }
    };
    for first in [true, false] {
        for p in identity_points(&a.gluing, first)? {
            let (va, vb) = if first { (&a.v1, &b.v1) } else { (&a.v2, &b.v2) };
            let j = |g: &BundleGluing, v: &[Value]| if first { g.j1(&p, v) } else { g.j2(&p, v) };
            for u in unit_values(va.fibre_at(&p)?.dim()) {
                for w in unit_values(vb.fibre_at(&p)?.dim()) {
                    let (pa, ja) = j(a, &u)?;
                    let (pb, jb) = j(b, &w)?;
                    if pa != pb {
                        return Ok(false);
                    }
                    let (q1, lhs) = phi.apply(&pa, &combine(&ja, &jb))?;
                    let (q2, rhs) = j(&target, &combine(&u, &w))?;
                    if q1 != q2 || !values_agree(&lhs, &rhs, 0.0) {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Φ_{∪,*} read in the coordinates of V₁*(y) at each glued pair is the
/// transpose of the map V₁(y) → (V₁ ∪ V₂)(y), and the identity elsewhere.
/// Needs standard fibres, where dual coordinates are the standard ones.
pub fn check_phi_dual(a: &BundleGluing) -> Result<bool, BundleError> {
    if a.v1.fibres.iter().chain(&a.v2.fibres).any(|f| !f.model.is_standard()) {
        return Err(BundleError::Shape("the dual identity is checked on standard fibres".into()));
    }
    let (phi, target) = phi_dual(a)?;
    if !phi.invertible_everywhere() {
        return Ok(false);
    }
    for (y, _) in &a.gluing.pairs {
        let p = a.gluing.i1_tilde(&a.gluing.x1.resolve(&Point::at(&y.0, crate::linalg::q_to_f64(&y.1)))?)?;
        let m = phi.matrix_at(&p)?;
        let back = target.glued.site_map(y).inverse().ok_or(BundleError::NotInvertible { point: site_name(y) })?;
        if back.mul(&m) != a.glued.site_map(y).transpose() {
            return Ok(false);
        }
    }
    for first in [true, false] {
        for p in identity_points(&a.gluing, first)? {
            let image = if first { a.gluing.i1_tilde(&p)? } else { a.gluing.i2(&p)? };
            if matches!(image, Point::Chart { .. }) {
                if phi.matrix_at(&image)? != QMat::identity(a.glued.fibre_at(&image)?.dim()) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
