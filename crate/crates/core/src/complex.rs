//! Wedge complexes: finitely many copies of ℝ (or closed intervals) with
//! finitely many points identified, and gluing of two such complexes along a
//! bijection of finite point sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::linalg::{f64_to_q, fmt_q, q_to_f64, Q};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexError {
    #[error("chart `{0}` is declared twice")]
    DuplicateChart(String),
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
    #[error("coordinate {coord} is outside the domain of chart `{chart}`")]
    OutOfDomain { chart: String, coord: String },
    #[error("point {0} appears in two glue classes")]
    OverlappingClasses(String),
    #[error("gluing map is not injective at {0}")]
    NonInjective(String),
    #[error("glue class {0} does not exist")]
    UnknownClass(usize),
    #[error("point {0} lies in the gluing locus")]
    InGlueLocus(String),
    #[error("empty interval on chart `{0}`")]
    EmptyInterval(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Line,
    Interval(Q, Q),
}

impl Domain {
    pub fn contains(&self, x: &Q) -> bool {
        match self {
            Domain::Line => true,
            Domain::Interval(a, b) => a <= x && x <= b,
        }
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        match self {
            Domain::Line => x.is_finite(),
            Domain::Interval(a, b) => q_to_f64(a) <= x && x <= q_to_f64(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    pub id: String,
    pub domain: Domain,
}

impl Chart {
    pub fn line(id: &str) -> Self {
        Chart { id: id.to_string(), domain: Domain::Line }
    }
}

/// A chart incidence (chart id, exact coordinate).
pub type Site = (String, Q);

fn site_name(s: &Site) -> String {
    format!("{}:{}", s.0, fmt_q(&s.1))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Chart { chart: String, x: f64 },
    Glue { class: usize },
}

impl Point {
    pub fn at(chart: &str, x: f64) -> Self {
        Point::Chart { chart: chart.to_string(), x }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Chart { chart, x } => write!(f, "{chart}:{x}"),
            Point::Glue { class } => write!(f, "class {class}"),
        }
    }
}

/// One chart incidence of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub chart: String,
    pub x: f64,
    /// Exact coordinate, known at glue points.
    pub exact: Option<Q>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WedgeComplex {
    charts: Vec<Chart>,
    /// Members ordered by chart position, then coordinate.
    classes: Vec<Vec<Site>>,
}

impl WedgeComplex {
    pub fn new(charts: Vec<Chart>, classes: Vec<Vec<Site>>) -> Result<Self, ComplexError> {
        let mut seen = BTreeSet::new();
        for c in &charts {
            if !seen.insert(c.id.clone()) {
                return Err(ComplexError::DuplicateChart(c.id.clone()));
            }
            if let Domain::Interval(a, b) = &c.domain {
                if a > b {
                    return Err(ComplexError::EmptyInterval(c.id.clone()));
                }
            }
        }
        let mut x = WedgeComplex { charts, classes: Vec::new() };
        let mut used = BTreeSet::new();
        for class in classes {
            for s in &class {
                x.check_site(s)?;
                if !used.insert(s.clone()) {
                    return Err(ComplexError::OverlappingClasses(site_name(s)));
                }
            }
            x.classes.push(x.sorted(class));
        }
        Ok(x)
    }

    /// Disjoint union of full lines.
    pub fn lines(ids: &[&str]) -> Self {
        Self::new(ids.iter().map(|id| Chart::line(id)).collect(), Vec::new()).expect("distinct ids")
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: &str) -> Option<&Chart> {
        self.charts.iter().find(|c| c.id == id)
    }

    pub fn chart_index(&self, id: &str) -> Option<usize> {
        self.charts.iter().position(|c| c.id == id)
    }

    pub fn classes(&self) -> &[Vec<Site>] {
        &self.classes
    }

    fn sorted(&self, mut class: Vec<Site>) -> Vec<Site> {
        class.sort_by(|a, b| (self.chart_index(&a.0), &a.1).cmp(&(self.chart_index(&b.0), &b.1)));
        class.dedup();
        class
    }

    fn check_site(&self, s: &Site) -> Result<(), ComplexError> {
        let chart = self.chart(&s.0).ok_or_else(|| ComplexError::UnknownChart(s.0.clone()))?;
        if !chart.domain.contains(&s.1) {
            return Err(ComplexError::OutOfDomain { chart: s.0.clone(), coord: fmt_q(&s.1) });
        }
        Ok(())
    }

    pub fn class_of_site(&self, s: &Site) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(s))
    }

    /// Canonical form: a chart point that is a class member becomes the class.
    pub fn resolve(&self, p: &Point) -> Result<Point, ComplexError> {
        match p {
            Point::Glue { class } => {
                if *class < self.classes.len() {
                    Ok(p.clone())
                } else {
                    Err(ComplexError::UnknownClass(*class))
                }
            }
            Point::Chart { chart, x } => {
                let c = self.chart(chart).ok_or_else(|| ComplexError::UnknownChart(chart.clone()))?;
                if !c.domain.contains_f64(*x) {
                    return Err(ComplexError::OutOfDomain { chart: chart.clone(), coord: x.to_string() });
                }
                let hit = self
                    .classes
                    .iter()
                    .position(|cl| cl.iter().any(|(id, q)| id == chart && q_to_f64(q) == *x && f64_to_q(*x).as_ref() == Some(q)));
                Ok(match hit {
                    Some(class) => Point::Glue { class },
                    None => p.clone(),
                })
            }
        }
    }

    pub fn same_point(&self, a: &Point, b: &Point) -> Result<bool, ComplexError> {
        Ok(self.resolve(a)? == self.resolve(b)?)
    }

    pub fn branches_at(&self, p: &Point) -> Result<Vec<Branch>, ComplexError> {
        Ok(match self.resolve(p)? {
            Point::Chart { chart, x } => vec![Branch { chart, x, exact: f64_to_q(x) }],
            Point::Glue { class } => self.classes[class]
                .iter()
                .map(|(chart, q)| Branch { chart: chart.clone(), x: q_to_f64(q), exact: Some(q.clone()) })
                .collect(),
        })
    }

    pub fn glue_points(&self) -> Vec<Point> {
        (0..self.classes.len()).map(|class| Point::Glue { class }).collect()
    }
}

/// A gluing of X₁ to X₂ along f: Y → X₂ with Y ⊆ X₁ finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Gluing {
    pub x1: WedgeComplex,
    pub x2: WedgeComplex,
    /// Pairs (y, f(y)) as chart incidences.
    pub pairs: Vec<(Site, Site)>,
    pub glued: WedgeComplex,
    /// New class index of every class of X₁ and X₂.
    class1: Vec<usize>,
    class2: Vec<usize>,
    /// Classes of the result that contain a point of Y.
    glue_classes: BTreeSet<usize>,
}

pub fn glue_complexes(x1: &WedgeComplex, x2: &WedgeComplex, f: &[(Site, Site)]) -> Result<Gluing, ComplexError> {
    for c in x2.charts() {
        if x1.chart(&c.id).is_some() {
            return Err(ComplexError::DuplicateChart(c.id.clone()));
        }
    }
    // points of X₁ and X₂ named by a canonical key: a class index or a bare site
    #[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
    enum Key {
        Class(usize),
        Site(String, Q),
    }
    let key = |x: &WedgeComplex, s: &Site| -> Result<Key, ComplexError> {
        x.check_site(s)?;
        Ok(match x.class_of_site(s) {
            Some(c) => Key::Class(c),
            None => Key::Site(s.0.clone(), s.1.clone()),
        })
    };
    let mut dom = BTreeSet::new();
    let mut cod = BTreeSet::new();
    for (y, fy) in f {
        let ky = key(x1, y)?;
        let kf = key(x2, fy)?;
        if !dom.insert(ky) {
            return Err(ComplexError::NonInjective(site_name(y)));
        }
        if !cod.insert(kf) {
            return Err(ComplexError::NonInjective(site_name(fy)));
        }
    }

    let charts: Vec<Chart> = x1.charts.iter().chain(&x2.charts).cloned().collect();
    let skeleton = WedgeComplex { charts, classes: Vec::new() };
    // merge old classes and glued pairs by union-find over sites
    let mut groups: Vec<BTreeSet<Site>> = Vec::new();
    let mut owner: BTreeMap<Site, usize> = BTreeMap::new();
    let add_group = |members: Vec<Site>, groups: &mut Vec<BTreeSet<Site>>, owner: &mut BTreeMap<Site, usize>| {
        let mut hit: BTreeSet<usize> = members.iter().filter_map(|s| owner.get(s).copied()).collect();
        let target = match hit.pop_first() {
            Some(t) => t,
            None => {
                groups.push(BTreeSet::new());
                groups.len() - 1
            }
        };
        for other in hit {
            let moved = std::mem::take(&mut groups[other]);
            for s in &moved {
                owner.insert(s.clone(), target);
            }
            groups[target].extend(moved);
        }
        for s in members {
            owner.insert(s.clone(), target);
            groups[target].insert(s);
        }
    };
    for class in x1.classes.iter().chain(&x2.classes) {
        add_group(class.clone(), &mut groups, &mut owner);
    }
    for (y, fy) in f {
        add_group(vec![y.clone(), fy.clone()], &mut groups, &mut owner);
    }
    let live: Vec<usize> = (0..groups.len()).filter(|&g| !groups[g].is_empty()).collect();
    // order result classes by their smallest member position for determinism
    let mut classes: Vec<(usize, Vec<Site>)> =
        live.iter().map(|&g| (g, skeleton.sorted(groups[g].iter().cloned().collect()))).collect();
    classes.sort_by(|a, b| {
        let ka = (skeleton.chart_index(&a.1[0].0), &a.1[0].1);
        let kb = (skeleton.chart_index(&b.1[0].0), &b.1[0].1);
        ka.cmp(&kb)
    });
    let index_of_group: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, (g, _))| (*g, i)).collect();
    let new_index = |s: &Site| index_of_group[&owner[s]];
    let class1 = x1.classes.iter().map(|c| new_index(&c[0])).collect();
    let class2 = x2.classes.iter().map(|c| new_index(&c[0])).collect();
    let glue_classes = f.iter().map(|(y, _)| new_index(y)).collect();
    let glued = WedgeComplex { charts: skeleton.charts, classes: classes.into_iter().map(|(_, c)| c).collect() };
    Ok(Gluing { x1: x1.clone(), x2: x2.clone(), pairs: f.to_vec(), glued, class1, class2, glue_classes })
}

impl Gluing {
    /// Whether a point of X₁ lies in Y.
    pub fn in_domain(&self, p: &Point) -> Result<bool, ComplexError> {
        Ok(match self.x1.resolve(p)? {
            Point::Glue { class } => self.glue_classes.contains(&self.class1[class]),
            Point::Chart { chart, x } => self
                .pairs
                .iter()
                .any(|((c, y), _)| *c == chart && f64_to_q(x).as_ref() == Some(y)),
        })
    }

    /// ĩ₁: X₁ → X₁ ∪_f X₂, defined everywhere.
    pub fn i1_tilde(&self, p: &Point) -> Result<Point, ComplexError> {
        match self.x1.resolve(p)? {
            Point::Glue { class } => Ok(Point::Glue { class: self.class1[class] }),
            chart => self.glued.resolve(&chart),
        }
    }

    /// i₁: X₁∖Y → X₁ ∪_f X₂.
    pub fn i1(&self, p: &Point) -> Result<Point, ComplexError> {
        if self.in_domain(p)? {
            return Err(ComplexError::InGlueLocus(p.to_string()));
        }
        self.i1_tilde(p)
    }

    /// i₂: X₂ → X₁ ∪_f X₂.
    pub fn i2(&self, p: &Point) -> Result<Point, ComplexError> {
        match self.x2.resolve(p)? {
            Point::Glue { class } => Ok(Point::Glue { class: self.class2[class] }),
            chart => self.glued.resolve(&chart),
        }
    }

    /// Classes of the result that came from the gluing.
    pub fn glue_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.glue_classes.iter().copied()
    }

    pub fn is_from_x1(&self, chart: &str) -> bool {
        self.x1.chart(chart).is_some()
    }

    /// The same data read in the other direction, along f⁻¹.
    pub fn reversed(&self) -> Result<Gluing, ComplexError> {
        let inv: Vec<(Site, Site)> = self.pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
        glue_complexes(&self.x2, &self.x1, &inv)
    }
}

/// The switch map X₁ ∪_f X₂ → X₂ ∪_{f⁻¹} X₁.
#[derive(Debug, Clone)]
pub struct SwitchMap {
    pub source: Gluing,
    pub target: Gluing,
}

pub fn switch_map(g: &Gluing) -> Result<SwitchMap, ComplexError> {
    Ok(SwitchMap { source: g.clone(), target: g.reversed()? })
}

impl SwitchMap {
    pub fn apply(&self, p: &Point) -> Result<Point, ComplexError> {
        match self.source.glued.resolve(p)? {
            Point::Glue { class } => {
                let members: BTreeSet<&Site> = self.source.glued.classes[class].iter().collect();
                let hit = self
                    .target
                    .glued
                    .classes
                    .iter()
                    .position(|c| c.iter().collect::<BTreeSet<_>>() == members)
                    .expect("both orders identify the same sites");
                Ok(Point::Glue { class: hit })
            }
            chart => Ok(chart),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{q, qf};

    fn site(c: &str, x: i64) -> Site {
        (c.to_string(), q(x))
    }

    fn wedge2() -> Gluing {
        glue_complexes(&WedgeComplex::lines(&["a"]), &WedgeComplex::lines(&["b"]), &[(site("a", 0), site("b", 0))]).unwrap()
    }

    #[test]
    fn two_lines_glued_at_origins() {
        let g = wedge2();
        assert_eq!(g.glued.classes().len(), 1);
        assert_eq!(g.glued.classes()[0].len(), 2);
        assert_eq!(g.i1_tilde(&Point::at("a", 0.0)).unwrap(), g.i2(&Point::at("b", 0.0)).unwrap());
        assert!(g.i1(&Point::at("a", 0.0)).is_err());
        assert_eq!(g.glued.branches_at(&Point::Glue { class: 0 }).unwrap().len(), 2);
        assert_eq!(g.glued.branches_at(&Point::at("a", 0.5)).unwrap().len(), 1);
    }

    #[test]
    fn empty_gluing_is_disjoint_union() {
        let g = glue_complexes(&WedgeComplex::lines(&["a"]), &WedgeComplex::lines(&["b"]), &[]).unwrap();
        assert!(g.glued.classes().is_empty());
        assert_eq!(g.glued.charts().len(), 2);
    }

    #[test]
    fn three_consecutive_gluings() {
        let ab = wedge2().glued;
        let abc = glue_complexes(&ab, &WedgeComplex::lines(&["c"]), &[(site("a", 0), site("c", 0))]).unwrap();
        assert_eq!(abc.glued.classes().len(), 1);
        assert_eq!(abc.glued.branches_at(&Point::at("b", 0.0)).unwrap().len(), 3);
        // the same point set when gluing in the other grouping
        let bc = glue_complexes(&WedgeComplex::lines(&["b"]), &WedgeComplex::lines(&["c"]), &[(site("b", 0), site("c", 0))]).unwrap();
        let a_bc = glue_complexes(&WedgeComplex::lines(&["a"]), &bc.glued, &[(site("a", 0), site("b", 0))]).unwrap();
        assert_eq!(a_bc.glued.classes(), abc.glued.classes());
    }

    #[test]
    fn associativity_with_disjoint_loci() {
        let l = |id: &str| WedgeComplex::lines(&[id]);
        let ab = glue_complexes(&l("a"), &l("b"), &[(site("a", 0), site("b", 1))]).unwrap();
        let ab_c = glue_complexes(&ab.glued, &l("c"), &[(site("b", 2), site("c", 0))]).unwrap();
        let bc = glue_complexes(&l("b"), &l("c"), &[(site("b", 2), site("c", 0))]).unwrap();
        let a_bc = glue_complexes(&l("a"), &bc.glued, &[(site("a", 0), site("b", 1))]).unwrap();
        let set = |x: &WedgeComplex| x.classes().iter().map(|c| c.iter().cloned().collect::<BTreeSet<_>>()).collect::<BTreeSet<_>>();
        assert_eq!(set(&ab_c.glued), set(&a_bc.glued));
    }

    #[test]
    fn errors() {
        let a = WedgeComplex::lines(&["a"]);
        let b = WedgeComplex::lines(&["b"]);
        assert_eq!(
            glue_complexes(&a, &b, &[(site("a", 0), site("b", 0)), (site("a", 1), site("b", 0))]).unwrap_err(),
            ComplexError::NonInjective("b:0".into())
        );
        assert_eq!(glue_complexes(&a, &b, &[(site("z", 0), site("b", 0))]).unwrap_err(), ComplexError::UnknownChart("z".into()));
        assert_eq!(glue_complexes(&a, &a, &[]).unwrap_err(), ComplexError::DuplicateChart("a".into()));
        let seg = WedgeComplex::new(vec![Chart { id: "s".into(), domain: Domain::Interval(q(0), q(1)) }], vec![]).unwrap();
        assert!(matches!(glue_complexes(&seg, &b, &[(site("s", 2), site("b", 0))]), Err(ComplexError::OutOfDomain { .. })));
        assert!(matches!(seg.branches_at(&Point::at("s", 1.5)), Err(ComplexError::OutOfDomain { .. })));
    }

    #[test]
    fn switch_map_cases() {
        let g = glue_complexes(
            &WedgeComplex::lines(&["a"]),
            &WedgeComplex::lines(&["b"]),
            &[(site("a", 0), site("b", 0)), ((String::from("a"), qf(1, 2)), site("b", 3))],
        )
        .unwrap();
        let s = switch_map(&g).unwrap();
        let back = switch_map(&s.target).unwrap();
        // i₁(x) for x ∉ Y goes to i₂(x) of the reversed gluing
        let p = Point::at("a", 0.25);
        assert_eq!(s.apply(&g.i1(&p).unwrap()).unwrap(), s.target.i2(&p).unwrap());
        for class in 0..2 {
            let w = Point::Glue { class };
            let image = s.apply(&w).unwrap();
            assert!(matches!(image, Point::Glue { .. }));
            assert_eq!(back.apply(&image).unwrap(), w);
        }
        for k in 0..10 {
            let p = if k % 2 == 0 { Point::at("a", -1.0 + 0.37 * k as f64) } else { Point::at("b", 2.0 - 0.41 * k as f64) };
            let p = g.glued.resolve(&p).unwrap();
            assert_eq!(back.apply(&s.apply(&p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn images_partition_the_glued_space() {
        let g = wedge2();
        let samples: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.5).collect();
        let from1: Vec<Point> = samples.iter().filter_map(|&x| g.i1(&Point::at("a", x)).ok()).collect();
        let from2: Vec<Point> = samples.iter().map(|&x| g.i2(&Point::at("b", x)).unwrap()).collect();
        assert!(from1.iter().all(|p| !from2.contains(p)));
        assert_eq!(from1.len() + from2.len(), 2 * samples.len() - 1);
        let total: usize = g.glued.classes().iter().map(Vec::len).sum();
        assert_eq!(total, 2);
    }
}
