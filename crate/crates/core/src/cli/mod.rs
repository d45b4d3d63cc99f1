//! Command dispatch and JSON reports for the `diffeo` binary.

pub mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

pub use config::{load_config, parse_config, Config, ConfigError};

use crate::bundle::{check_induced_metric, check_phi_dual, check_phi_product, glue_bundles, BundleGluing, Fibre, PseudoBundle, Section};
use crate::clifford::Multivector;
use crate::complex::{glue_complexes, Gluing, Point, WedgeComplex};
use crate::connection::{glue_form_connections, FormConnection, VectorConnection, VectorField};
use crate::dirac::{blade_coords, clifford_connection_sides, clifford_gluing, dirac, exterior_module, glue_dirac, splitting_sides, multivectors_agree, DiracOperator, ExteriorSection};
use crate::dvspace::{dual_metric, DvsModel, PseudoMetric};
use crate::forms::{check_dual_sum, sample_points, OneFormBundle, OneFormSection};
use crate::linalg::{f64_to_q, fmt_q, parse_q, QMat, Q};
use crate::sampling::{exact_matrix, values_agree, SamplePlan};
use crate::symexpr::parse_expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    DualMetric,
    CliffordTable,
    Dirac,
    Report,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "check" => Command::Check,
            "dual-metric" => Command::DualMetric,
            "clifford-table" => Command::CliffordTable,
            "dirac" => Command::Dirac,
            "report" => Command::Report,
            other => return Err(format!("unknown command `{other}`")),
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Check => "check",
            Command::DualMetric => "dual-metric",
            Command::CliffordTable => "clifford-table",
            Command::Dirac => "dirac",
            Command::Report => "report",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Options {
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    /// Diagonal metric for `clifford-table`, overriding the config's fibre.
    pub diag: Option<Vec<Q>>,
}

pub fn parse_diag(text: &str) -> Result<Vec<Q>, ConfigError> {
    text.split(',')
        .map(|t| parse_q(t).ok_or_else(|| ConfigError { pointer: String::new(), message: format!("--diag: `{t}` is not a rational number"), column: None }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: Command,
    pub seed: u64,
    pub tolerance: f64,
    pub verdicts: Vec<Verdict>,
    pub values: BTreeMap<String, Json>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> Json {
        json!({
            "command": self.command.to_string(),
            "seed": self.seed,
            "tolerance": num(self.tolerance),
            "pass": self.passed(),
            "verdicts": self.verdicts.iter().map(|v| json!({"name": v.name, "pass": v.pass, "detail": v.detail})).collect::<Vec<_>>(),
            "values": self.values,
        })
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("reports serialize");
        s.push('\n');
        s
    }

    fn verdict(&mut self, name: &str, pass: bool, detail: Json) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail });
    }

    fn outcome<E: fmt::Display>(&mut self, name: &str, r: Result<Json, E>) {
        match r {
            Ok(detail) => self.verdict(name, true, detail),
            Err(e) => self.verdict(name, false, Json::String(e.to_string())),
        }
    }
}

fn num(x: f64) -> Json {
    serde_json::Number::from_f64(x).map(Json::Number).unwrap_or_else(|| Json::String(x.to_string()))
}

fn qj(q: &Q) -> Json {
    Json::String(fmt_q(q))
}

fn qmat_json(m: &QMat) -> Json {
    Json::Array(m.to_rows().iter().map(|r| Json::Array(r.iter().map(qj).collect())).collect())
}

fn blade_name(mask: u32) -> String {
    if mask == 0 {
        return "1".into();
    }
    (0..32).filter(|i| mask & (1 << i) != 0).map(|i| format!("e{}", i + 1)).collect()
}

fn multivector_json(m: &Multivector<f64>) -> Json {
    let mut out = serde_json::Map::new();
    for (mask, c) in m.terms() {
        if *c != 0.0 {
            out.insert(blade_name(mask), num(*c));
        }
    }
    Json::Object(out)
}

fn config_error(pointer: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError { pointer: pointer.to_string(), message: message.to_string(), column: None }
}

/// Everything built from a config before any check runs. Failures here are
/// configuration errors.
struct Built {
    left: Option<(WedgeComplex, Option<PseudoBundle>, Option<OneFormBundle>)>,
    right: Option<(WedgeComplex, Option<PseudoBundle>, Option<OneFormBundle>)>,
    gluing: Option<Gluing>,
}

fn build_side(side: &config::SideConfig, name: &str, plan: &SamplePlan, tol: f64) -> Result<(WedgeComplex, Option<PseudoBundle>, Option<OneFormBundle>), ConfigError> {
    let ids: Vec<&str> = side.charts.iter().map(String::as_str).collect();
    let base = WedgeComplex::lines(&ids);
    let bundle = match &side.fibres {
        None => None,
        Some(fs) => {
            let fibres = fs
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let p = format!("/{name}/fibres/{i}");
                    let model = DvsModel::new(f.dim, &f.generators).map_err(|e| config_error(&p, e))?;
                    Fibre::new(model, f.metric.clone()).map_err(|e| config_error(&format!("{p}/metric"), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let b = PseudoBundle::new(base.clone(), fibres, vec![]).map_err(|e| config_error(&format!("/{name}/fibres"), e))?;
            b.validate_metric(plan, tol).map_err(|e| config_error(&format!("/{name}/fibres"), e))?;
            Some(b)
        }
    };
    let forms = match &side.lambda {
        None => None,
        Some(h) => Some(OneFormBundle::with_plan(base.clone(), h.clone(), plan).map_err(|e| config_error(&format!("/{name}/lambda"), e))?),
    };
    Ok((base, bundle, forms))
}

fn build(cfg: &Config) -> Result<Built, ConfigError> {
    let left = cfg.left.as_ref().map(|s| build_side(s, "left", &cfg.plan, cfg.tolerance)).transpose()?;
    let right = cfg.right.as_ref().map(|s| build_side(s, "right", &cfg.plan, cfg.tolerance)).transpose()?;
    let gluing = match (&left, &right) {
        (Some(l), Some(r)) => {
            let pairs: Vec<_> = cfg.gluing.iter().map(|g| (g.left.clone(), g.right.clone())).collect();
            Some(glue_complexes(&l.0, &r.0, &pairs).map_err(|e| config_error("/gluing", e))?)
        }
        _ => None,
    };
    Ok(Built { left, right, gluing })
}

pub fn run(command: Command, cfg: &Config, opts: &Options) -> Result<Report, ConfigError> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.plan.seed = s;
    }
    if let Some(t) = opts.tolerance {
        cfg.tolerance = t;
    }
    let built = build(&cfg)?;
    let mut report = Report { command, seed: cfg.plan.seed, tolerance: cfg.tolerance, verdicts: Vec::new(), values: BTreeMap::new() };
    let all = matches!(command, Command::Check | Command::Report);
    match command {
        Command::DualMetric if cfg.dvs.is_none() => return Err(config_error("/dvs", "`dual-metric` needs a `dvs` section")),
        Command::CliffordTable if cfg.fibre.is_none() && opts.diag.is_none() => {
            return Err(config_error("/fibre", "`clifford-table` needs a `fibre` section or --diag"))
        }
        Command::Dirac if cfg.dirac.is_none() => return Err(config_error("/dirac", "`dirac` needs a `dirac` section")),
        _ => {}
    }
    if let Some(d) = &cfg.dvs {
        if all || command == Command::DualMetric {
            dvs_checks(d, &mut report)?;
        }
    }
    let fibre = match &opts.diag {
        Some(d) => Some(QMat::diag(d)),
        None => cfg.fibre.clone(),
    };
    if let Some(q) = &fibre {
        if all || command == Command::CliffordTable {
            clifford_checks(q, &mut report, command != Command::Check)?;
        }
    }
    if all {
        bundle_checks(&cfg, &built, &mut report);
        lambda_checks(&cfg, &built, &mut report);
    }
    if cfg.dirac.is_some() && (all || command == Command::Dirac) {
        dirac_checks(&cfg, &built, &mut report, command != Command::Check);
    }
    Ok(report)
}

fn dvs_checks(d: &config::DvsConfig, r: &mut Report) -> Result<(), ConfigError> {
    let model = DvsModel::new(d.dim, &d.generators).map_err(|e| config_error("/dvs/generators", e))?;
    let verdict = model.is_pseudo_metric(&d.metric).map_err(|e| config_error("/dvs/metric", e))?;
    r.verdict("pseudo-metric", verdict.valid, json!({"rank": verdict.rank, "failure": verdict.failure.map(|f| f.to_string())}));
    r.values.insert("dual_space".into(), Json::Array(model.dual_space().iter().map(|v| Json::Array(v.iter().map(qj).collect())).collect()));
    r.values.insert("smooth_form_basis".into(), Json::Array(model.smooth_form_basis().iter().map(qmat_json).collect()));
    if !verdict.valid {
        return Ok(());
    }
    let g = PseudoMetric::new(&model, d.metric.clone()).map_err(|e| config_error("/dvs/metric", e))?;
    let dm = dual_metric(&model, &g).map_err(|e| config_error("/dvs/metric", e))?;
    r.verdict("dual metric oracle", dm.verified, Json::Null);
    r.values.insert("dual_metric".into(), qmat_json(&dm.matrix));
    if let Some(reference) = &d.reference_dual_metric {
        let agrees = *reference == dm.matrix;
        let note = if agrees {
            "the reference matrix agrees with the computed dual metric".to_string()
        } else {
            "the reference matrix differs from the computed dual metric; the computed one satisfies g*(Φu, Φv) = g(u, v) on all basis pairs".to_string()
        };
        r.values.insert("reference_dual_metric".into(), json!({"matrix": qmat_json(reference), "agrees": agrees, "note": note}));
    }
    Ok(())
}

fn clifford_checks(q: &QMat, r: &mut Report, table: bool) -> Result<(), ConfigError> {
    let alg = crate::clifford::rational_algebra(q).map_err(|e| config_error("/fibre/metric", e))?;
    let d = alg.dim() as u32;
    let basis: Vec<Multivector<Q>> = (0..d).map(|m| Multivector::blade(m, Q::from_integer(1.into()))).collect();
    let assoc = alg.n() > 4
        || basis.iter().all(|a| basis.iter().all(|b| basis.iter().all(|c| alg.mul(&alg.mul(a, b), c) == alg.mul(a, &alg.mul(b, c)))));
    r.verdict("clifford associativity", assoc, json!({"dim": alg.dim()}));
    if table {
        let entries: Vec<Json> = alg
            .table()
            .iter()
            .map(|(a, b, c, m)| json!({"left": blade_name(*a), "right": blade_name(*b), "coefficient": qj(c), "blade": blade_name(*m)}))
            .collect();
        r.values.insert("clifford_table".into(), json!({"metric": qmat_json(q), "frame_diagonal": alg.diag().iter().map(qj).collect::<Vec<_>>(), "entries": entries}));
    }
    Ok(())
}

fn site_metric(b: &PseudoBundle, site: &crate::complex::Site) -> Option<QMat> {
    let g = b.metric_at_site(site).ok()?;
    exact_matrix(&g).or_else(|| {
        let rows: Option<Vec<Vec<Q>>> = g.iter().map(|r| r.iter().map(|v| f64_to_q(v.to_f64())).collect()).collect();
        rows.map(|r| QMat::from_rows(&r))
    })
}

fn bundle_checks(cfg: &Config, built: &Built, r: &mut Report) {
    let (Some((_, Some(v1), _)), Some((_, Some(v2), _)), Some(gluing)) = (&built.left, &built.right, &built.gluing) else {
        return;
    };
    let maps: Vec<QMat> = cfg.gluing.iter().map(|g| g.map.clone()).collect();
    let bg = match glue_bundles(v1, v2, gluing, &maps) {
        Ok(bg) => {
            r.verdict("metric compatibility", true, Json::Null);
            bg
        }
        Err(e) => {
            r.verdict("metric compatibility", false, Json::String(e.to_string()));
            return;
        }
    };
    r.outcome("induced metric", check_induced_metric(&bg, &cfg.plan, cfg.tolerance).map(|_| Json::Null));
    let (l, rt) = (cfg.left.as_ref().expect("built"), cfg.right.as_ref().expect("built"));
    for (i, (s1, s2)) in l.sections.iter().zip(&rt.sections).enumerate() {
        let s1 = Section { components: s1.clone() };
        let s2 = Section { components: s2.clone() };
        let res = bg.glue_sections(&s1, &s2, cfg.tolerance).and_then(|s| bg.split_section(&s, cfg.tolerance)).map(|(a, b)| a == s1 && b == s2);
        match res {
            Ok(true) => r.verdict(&format!("section pair {i} glues and splits"), true, Json::Null),
            Ok(false) => r.verdict(&format!("section pair {i} glues and splits"), false, Json::String("split differs from the input".into())),
            Err(e) => r.verdict(&format!("section pair {i} glues and splits"), false, Json::String(e.to_string())),
        }
    }
    r.outcome("phi sum", check_phi_product(&bg, &bg, false).map_err(|e| e.to_string()).and_then(|ok| if ok { Ok(Json::Null) } else { Err("identity fails".to_string()) }));
    r.outcome("phi tensor", check_phi_product(&bg, &bg, true).map_err(|e| e.to_string()).and_then(|ok| if ok { Ok(Json::Null) } else { Err("identity fails".to_string()) }));
    match check_phi_dual(&bg) {
        Ok(ok) => r.verdict("phi dual", ok, Json::Null),
        Err(e) => r.verdict("phi dual", true, json!({"skipped": e.to_string()})),
    }
    for (k, (y, fy)) in gluing.pairs.iter().enumerate() {
        let name = format!("clifford gluing at pair {k}");
        match (site_metric(v1, y), site_metric(v2, fy)) {
            (Some(q1), Some(q2)) => r.outcome(&name, clifford_gluing(&q1, &q2, &bg.ftilde[k]).map(|(a, _, _)| json!({"dim": a.dim()}))),
            _ => r.verdict(&name, false, Json::String("metric values are not finite".into())),
        }
    }
    r.outcome("glued clifford relations", glued_relations(&bg, &cfg.plan, cfg.tolerance));
    r.values.insert("glue_fibre_dims".into(), Json::Array(bg.glued.base().glue_points().iter().map(|p| json!(bg.glued.fibre_at(p).map(|f| f.dim()).unwrap_or(0))).collect()));
}

/// e_i e_j + e_j e_i = −2 g̃(e_i, e_j) in the fibre algebra of V₁ ∪ V₂ at every sample.
fn glued_relations(bg: &BundleGluing, plan: &SamplePlan, tol: f64) -> Result<Json, String> {
    let points = sample_points(bg.glued.base(), plan);
    for p in &points {
        let g = bg.glued.metric_at(p).map_err(|e| e.to_string())?;
        let n = g.len();
        for i in 0..n {
            for j in 0..n {
                let (ei, ej) = (Multivector::blade(1 << i, 1.0), Multivector::blade(1 << j, 1.0));
                let ij = crate::dirac::glued_clifford_product(bg, p, &ei, &ej).map_err(|e| e.to_string())?;
                let ji = crate::dirac::glued_clifford_product(bg, p, &ej, &ei).map_err(|e| e.to_string())?;
                let sum = ij.add(&ji);
                let want = -2.0 * g[i][j].to_f64();
                let rest = blade_coords(&sum, n).iter().skip(1).fold(0.0f64, |m, x| m.max(x.abs()));
                if !crate::linalg::real::close(sum.coeff(0), want, tol) || rest > tol {
                    return Err(format!("relation fails at {p} for e{} e{}", i + 1, j + 1));
                }
            }
        }
    }
    Ok(json!({"points": points.len()}))
}

fn field(rng: &mut ChaCha8Rng, n: usize) -> VectorField {
    let mut c = || rng.gen_range(-3i64..=3);
    let text = format!("{}*x^2+{}*sin(x)+{}*x+4", c(), c(), c());
    VectorField { coeffs: vec![parse_expr(&text).expect("generated expression parses"); n] }
}

fn lambda_checks(cfg: &Config, built: &Built, r: &mut Report) {
    let (Some((_, _, Some(l1))), Some((_, _, Some(l2))), Some(gluing)) = (&built.left, &built.right, &built.gluing) else {
        return;
    };
    let tol = cfg.tolerance;
    let glued = match OneFormBundle::glued(l1, l2, gluing) {
        Ok(g) => g,
        Err(e) => return r.verdict("lambda gluing", false, Json::String(e.to_string())),
    };
    r.outcome("lambda positive", glued.check_positive(&cfg.plan, tol).map(|_| Json::Null));
    let dims: Vec<Json> = glued.base().glue_points().iter().map(|p| json!(glued.fibre_dim(p).unwrap_or(0))).collect();
    let branch_ok = glued.base().glue_points().iter().all(|p| glued.fibre_dim(p).ok() == glued.base().branches_at(p).ok().map(|b| b.len()));
    r.verdict("lambda fibre dimensions", branch_ok, Json::Array(dims));
    r.outcome("dual metric sum", check_dual_sum(l1, l2, gluing, &cfg.plan, tol).map(|_| Json::Null));

    let (c1, c2) = (FormConnection::levi_civita(l1.clone()), FormConnection::levi_civita(l2.clone()));
    let u = match glue_form_connections(&c1, &c2, gluing) {
        Ok(u) => u,
        Err(e) => return r.verdict("connection gluing", false, Json::String(e.to_string())),
    };
    let points = sample_points(glued.base(), &cfg.plan);
    let n = glued.coefficients().len();
    let restrict = (0..n).all(|i| {
        let leg = if i < l1.coefficients().len() { &c1.christoffel()[i] } else { &c2.christoffel()[i - l1.coefficients().len()] };
        points.iter().filter_map(|p| match p {
            Point::Chart { chart, x } if glued.base().chart_index(chart) == Some(i) => Some(*x),
            _ => None,
        })
        .all(|x| match (u.christoffel()[i].evaluate(x), leg.evaluate(x)) {
            (Ok(a), Ok(b)) => crate::linalg::real::close(a, b, 1e-12),
            _ => false,
        })
    });
    r.verdict("connection restricts to legs", restrict, Json::Null);
    let s = OneFormSection { coeffs: vec![parse_expr("x^2+1").expect("literal"); n] };
    let t = OneFormSection { coeffs: vec![parse_expr("cos(x)+2").expect("literal"); n] };
    let compat = points.iter().try_for_each(|p| match u.compatibility_sides(&s, &t, p) {
        Ok((a, b)) if values_agree(&a, &b, tol) => Ok(()),
        Ok(_) => Err(format!("fails at {p}")),
        Err(e) => Err(e.to_string()),
    });
    r.outcome("levi-civita metric compatibility", compat.map(|_| Json::Null));
    let vc = VectorConnection::levi_civita(glued.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.plan.seed);
    let (t1, t2) = (field(&mut rng, n), field(&mut rng, n));
    let torsion = points.iter().try_for_each(|p| match vc.torsion(&t1, &t2, p) {
        Ok(v) if v.iter().all(|x| x.to_f64().abs() <= tol) => Ok(()),
        Ok(_) => Err(format!("nonzero at {p}")),
        Err(e) => Err(e.to_string()),
    });
    r.outcome("levi-civita torsion", torsion.map(|_| Json::Null));
    let mut koszul = Ok(());
    for k in 0..10 {
        let (a, b, c) = (field(&mut rng, n), field(&mut rng, n), field(&mut rng, n));
        let p = &points[(k * 7) % points.len()];
        match vc.koszul_sides(&a, &b, &c, p) {
            Ok((x, y)) if values_agree(&x, &y, tol.max(1e-9)) => {}
            Ok(_) => koszul = Err(format!("fails at {p}")),
            Err(e) => koszul = Err(e.to_string()),
        }
    }
    r.outcome("koszul formula", koszul.map(|_| json!({"triples": 10})));
}

fn exterior(e: &config::ExteriorConfig) -> ExteriorSection {
    ExteriorSection { u: e.u.clone(), a: e.a.clone() }
}

fn dirac_points(cfg: &Config, glued: &DiracOperator) -> Vec<Point> {
    match cfg.dirac.as_ref().and_then(|d| d.points.clone()) {
        Some(pts) => pts.iter().map(|(c, x)| glued.module().forms().base().resolve(&Point::at(c, *x)).unwrap_or(Point::at(c, *x))).collect(),
        None => sample_points(glued.module().forms().base(), &cfg.plan),
    }
}

fn dirac_checks(cfg: &Config, built: &Built, r: &mut Report, values: bool) {
    let d = cfg.dirac.as_ref().expect("checked by caller");
    let (Some((_, _, Some(l1))), Some((_, _, Some(l2))), Some(gluing)) = (&built.left, &built.right, &built.gluing) else {
        return r.verdict("dirac data", false, Json::String("lambda and gluing are required".into()));
    };
    let tol = cfg.tolerance;
    let op = |l: &OneFormBundle| dirac(exterior_module(l.clone()), FormConnection::levi_civita(l.clone())).expect("same forms bundle");
    let (d1, d2) = (op(l1), op(l2));
    let glued = match glue_dirac(&d1, &d2, gluing, &d.scale) {
        Ok(g) => {
            r.verdict("dirac compatibility", true, Json::Null);
            g
        }
        Err(e) => return r.verdict("dirac compatibility", false, Json::String(e.to_string())),
    };
    let points = dirac_points(cfg, &glued);
    let module = glued.module();
    let glue_points = module.forms().base().glue_points();
    let exact = glue_points.iter().all(|p| module.check_action(p, 0.0).unwrap_or(false));
    let sampled = points.iter().all(|p| module.check_action(p, tol).unwrap_or(false));
    r.verdict("clifford action relations", exact && sampled, Json::Null);
    let unitary = points.iter().try_for_each(|p| {
        let k = module.forms().fibre_dim(p).map_err(|e| e.to_string())?;
        let alpha: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
        match module.unitarity_defect(p, &alpha) {
            Ok(x) if x <= tol.max(1e-9) => Ok(()),
            Ok(x) => Err(format!("defect {x} at {p}")),
            Err(e) => Err(e.to_string()),
        }
    });
    r.outcome("unitarity", unitary.map(|_| Json::Null));
    let n = glued.module().forms().coefficients().len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.plan.seed ^ 0x5eed);
    let tf = field(&mut rng, n);
    let sigma = OneFormSection { coeffs: field(&mut rng, n).coeffs };
    let rsec = ExteriorSection { u: vec![parse_expr("x^2+2").expect("literal"); n], a: field(&mut rng, n).coeffs };
    let cc = points.iter().try_for_each(|p| match clifford_connection_sides(glued.connection(), &tf, &sigma, &rsec, p) {
        Ok((a, b)) => {
            let ok = a.iter().zip(&b).all(|(x, y)| crate::linalg::real::close(x.0, y.0, tol.max(1e-9)) && crate::linalg::real::close(x.1, y.1, tol.max(1e-9)));
            if ok {
                Ok(())
            } else {
                Err(format!("fails at {p}"))
            }
        }
        Err(e) => Err(e.to_string()),
    });
    r.outcome("clifford connection", cc.map(|_| Json::Null));
    let mut evaluations = Vec::new();
    for (i, (s1, s2)) in d.sections.iter().enumerate() {
        let (s1, s2) = (exterior(s1), exterior(s2));
        let mut failure = None;
        for p in &points {
            match splitting_sides(&glued, &d1, &d2, gluing, &s1, &s2, p) {
                Ok((lhs, rhs)) => {
                    if !multivectors_agree(&lhs, &rhs, tol) && failure.is_none() {
                        failure = Some(format!("fails at {p}"));
                    }
                    if values {
                        evaluations.push(json!({"section": i, "point": p.to_string(), "glued": multivector_json(&lhs), "legs": multivector_json(&rhs)}));
                    }
                }
                Err(e) => {
                    failure.get_or_insert(e.to_string());
                }
            }
        }
        match failure {
            None => r.verdict(&format!("dirac splitting for section pair {i}"), true, json!({"points": points.len()})),
            Some(f) => r.verdict(&format!("dirac splitting for section pair {i}"), false, Json::String(f)),
        }
    }
    if values {
        r.values.insert("dirac".into(), Json::Array(evaluations));
    }
}

/// Entry point of the binary: returns the process exit code.
pub fn execute(command: &str, config: Option<&std::path::Path>, opts: &Options, json_out: Option<&std::path::Path>) -> i32 {
    let result = (|| -> Result<Report, ConfigError> {
        let command: Command = command.parse().map_err(|e: String| config_error("", e))?;
        let cfg = match config {
            Some(p) => load_config(p)?,
            None if command == Command::CliffordTable && opts.diag.is_some() => Config::default(),
            None => return Err(config_error("", "a config file is required")),
        };
        run(command, &cfg, opts)
    })();
    match result {
        Ok(report) => {
            let text = report.render();
            if let Some(path) = json_out {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("cannot write {}: {e}", path.display());
                    return 2;
                }
            }
            print!("{text}");
            for v in report.verdicts.iter().filter(|v| !v.pass) {
                eprintln!("FAILED {}: {}", v.name, v.detail);
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("{e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commands_round_trip() {
        for c in ["check", "dual-metric", "clifford-table", "dirac", "report"] {
            assert_eq!(c.parse::<Command>().unwrap().to_string(), c);
        }
        assert!("plot".parse::<Command>().is_err());
    }

    #[test]
    fn diag_table_needs_no_config() {
        let opts = Options { diag: Some(parse_diag("1,1/2").unwrap()), ..Options::default() };
        let r = run(Command::CliffordTable, &Config::default(), &opts).unwrap();
        assert!(r.passed());
        assert_eq!(r.values["clifford_table"]["entries"].as_array().unwrap().len(), 16);
        assert!(parse_diag("1,,2").is_err());
        let indefinite = Options { diag: Some(parse_diag("1,-1/2").unwrap()), ..Options::default() };
        assert!(run(Command::CliffordTable, &Config::default(), &indefinite).is_err());
    }

    #[test]
    fn wedge_without_fibres_checks_forms_only() {
        let cfg = parse_config(
            r#"{"left": {"charts": ["x"], "lambda": ["x^2+1"]}, "right": {"charts": ["y"], "lambda": ["2"]},
                "gluing": {"points": [{"left": {"chart": "x", "at": 0}, "right": {"chart": "y", "at": 0}}]}}"#,
        )
        .unwrap();
        let r = run(Command::Check, &cfg, &Options { seed: Some(11), ..Options::default() }).unwrap();
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.seed, 11);
        assert!(r.verdicts.iter().all(|v| !v.name.starts_with("phi")));
        assert_eq!(r.render(), run(Command::Check, &cfg, &Options { seed: Some(11), ..Options::default() }).unwrap().render());
    }
}
