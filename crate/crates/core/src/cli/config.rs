//! JSON configuration files. Every error names the offending value by its
//! JSON pointer.

use std::fmt;
use std::path::Path;

use serde_json::Value as Json;

use crate::complex::Site;
use crate::linalg::{parse_q, QMat, QVec};
use crate::sampling::SamplePlan;
use crate::symexpr::matrix::ExprMat;
use crate::symexpr::{parse_expr, Expr};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
    /// 1-based column inside an expression string.
    pub column: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.to_string(), message: message.into(), column: None }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvsConfig {
    pub dim: usize,
    pub generators: Vec<QVec>,
    pub metric: QMat,
    pub reference_dual_metric: Option<QMat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FibreConfig {
    pub dim: usize,
    pub generators: Vec<QVec>,
    pub metric: ExprMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideConfig {
    pub charts: Vec<String>,
    pub fibres: Option<Vec<FibreConfig>>,
    pub lambda: Option<Vec<Expr>>,
    /// Sections of the fibre bundle: per chart, the component expressions.
    pub sections: Vec<Vec<Vec<Expr>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluePoint {
    pub left: Site,
    pub right: Site,
    pub map: QMat,
}

/// u·1 + a·dx on each chart of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorConfig {
    pub u: Vec<Expr>,
    pub a: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracConfig {
    pub scale: crate::linalg::Q,
    pub sections: Vec<(ExteriorConfig, ExteriorConfig)>,
    /// (chart, coordinate); `None` picks the default sample points.
    pub points: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dvs: Option<DvsConfig>,
    pub fibre: Option<QMat>,
    pub left: Option<SideConfig>,
    pub right: Option<SideConfig>,
    pub gluing: Vec<GluePoint>,
    pub dirac: Option<DiracConfig>,
    pub plan: SamplePlan,
    pub tolerance: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config { dvs: None, fibre: None, left: None, right: None, gluing: Vec::new(), dirac: None, plan: SamplePlan::default(), tolerance: 1e-10 }
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let json: Json = serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    let root = object(&json, "")?;
    const KNOWN: [&str; 10] = ["dvs", "fibre", "left", "right", "gluing", "dirac", "samples", "tolerance", "seed", "description"];
    for key in root.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(err(&ptr("", key), "unknown field"));
        }
    }
    let mut cfg = Config::default();
    if let Some(v) = root.get("dvs") {
        cfg.dvs = Some(dvs(v, "/dvs")?);
    }
    if let Some(v) = root.get("fibre") {
        let o = object(v, "/fibre")?;
        let m = o.get("metric").ok_or_else(|| err("/fibre", "missing field `metric`"))?;
        cfg.fibre = Some(qmat(m, "/fibre/metric")?);
    }
    if let Some(v) = root.get("left") {
        cfg.left = Some(side(v, "/left")?);
    }
    if let Some(v) = root.get("right") {
        cfg.right = Some(side(v, "/right")?);
    }
    if let Some(v) = root.get("gluing") {
        let o = object(v, "/gluing")?;
        let pts = o.get("points").ok_or_else(|| err("/gluing", "missing field `points`"))?;
        cfg.gluing = array(pts, "/gluing/points")?
            .iter()
            .enumerate()
            .map(|(i, p)| glue_point(p, &format!("/gluing/points/{i}")))
            .collect::<Result<_, _>>()?;
        if cfg.left.is_none() || cfg.right.is_none() {
            return Err(err("/gluing", "a gluing needs both `left` and `right`"));
        }
    }
    if let Some(v) = root.get("dirac") {
        cfg.dirac = Some(dirac(v, "/dirac")?);
    }
    if let Some(v) = root.get("samples") {
        let o = object(v, "/samples")?;
        if let Some(g) = o.get("grid") {
            cfg.plan.grid = uint(g, "/samples/grid")?;
        }
        if let Some(g) = o.get("random") {
            cfg.plan.random = uint(g, "/samples/random")?;
        }
        if let Some(g) = o.get("lo") {
            cfg.plan.lo = number(g, "/samples/lo")?;
        }
        if let Some(g) = o.get("hi") {
            cfg.plan.hi = number(g, "/samples/hi")?;
        }
        if cfg.plan.lo > cfg.plan.hi {
            return Err(err("/samples", "`lo` exceeds `hi`"));
        }
    }
    if let Some(v) = root.get("tolerance") {
        cfg.tolerance = number(v, "/tolerance")?;
        if cfg.tolerance < 0.0 {
            return Err(err("/tolerance", "must be non-negative"));
        }
    }
    if let Some(v) = root.get("seed") {
        cfg.plan.seed = uint(v, "/seed")? as u64;
    }
    validate_references(&cfg)?;
    Ok(cfg)
}

fn ptr(base: &str, key: &str) -> String {
    format!("{base}/{}", key.replace('~', "~0").replace('/', "~1"))
}

fn object<'a>(v: &'a Json, p: &str) -> Result<&'a serde_json::Map<String, Json>, ConfigError> {
    v.as_object().ok_or_else(|| err(p, "expected an object"))
}

fn array<'a>(v: &'a Json, p: &str) -> Result<&'a Vec<Json>, ConfigError> {
    v.as_array().ok_or_else(|| err(p, "expected an array"))
}

fn field<'a>(o: &'a serde_json::Map<String, Json>, key: &str, p: &str) -> Result<&'a Json, ConfigError> {
    o.get(key).ok_or_else(|| err(p, format!("missing field `{key}`")))
}

fn string<'a>(v: &'a Json, p: &str) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| err(p, "expected a string"))
}

fn number(v: &Json, p: &str) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| err(p, "expected a number"))
}

fn uint(v: &Json, p: &str) -> Result<usize, ConfigError> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| err(p, "expected a non-negative integer"))
}

fn rational(v: &Json, p: &str) -> Result<crate::linalg::Q, ConfigError> {
    let text = match v {
        Json::String(s) => s.clone(),
        Json::Number(n) if n.is_i64() => n.to_string(),
        _ => return Err(err(p, "expected an integer or a \"p/q\" string")),
    };
    parse_q(&text).ok_or_else(|| err(p, format!("`{text}` is not a rational number")))
}

fn expr(v: &Json, p: &str) -> Result<Expr, ConfigError> {
    let text = match v {
        Json::String(s) => s.clone(),
        Json::Number(n) => n.to_string(),
        _ => return Err(err(p, "expected an expression string")),
    };
    parse_expr(&text).map_err(|e| ConfigError { pointer: p.to_string(), message: format!("in `{text}`: {e}"), column: Some(e.column()) })
}

fn list<T>(v: &Json, p: &str, f: impl Fn(&Json, &str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    array(v, p)?.iter().enumerate().map(|(i, x)| f(x, &format!("{p}/{i}"))).collect()
}

fn qmat(v: &Json, p: &str) -> Result<QMat, ConfigError> {
    let rows = list(v, p, |r, rp| list(r, rp, rational))?;
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != n) {
        return Err(err(p, "expected a non-empty rectangular matrix"));
    }
    Ok(QMat::from_rows(&rows))
}

fn exprmat(v: &Json, p: &str) -> Result<ExprMat, ConfigError> {
    let rows = list(v, p, |r, rp| list(r, rp, expr))?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(err(p, "expected a non-empty square matrix"));
    }
    Ok(rows)
}

fn generators(o: &serde_json::Map<String, Json>, dim: usize, p: &str) -> Result<Vec<QVec>, ConfigError> {
    match o.get("generators") {
        None => Ok(Vec::new()),
        Some(g) => {
            let gp = ptr(p, "generators");
            let gens = list(g, &gp, |r, rp| list(r, rp, rational))?;
            for (i, g) in gens.iter().enumerate() {
                if g.len() != dim {
                    return Err(err(&format!("{gp}/{i}"), format!("expected {dim} entries")));
                }
            }
            Ok(gens)
        }
    }
}

fn dvs(v: &Json, p: &str) -> Result<DvsConfig, ConfigError> {
    let o = object(v, p)?;
    let dim = uint(field(o, "dim", p)?, &ptr(p, "dim"))?;
    let generators = generators(o, dim, p)?;
    let metric = qmat(field(o, "metric", p)?, &ptr(p, "metric"))?;
    if metric.nrows() != dim || metric.ncols() != dim {
        return Err(err(&ptr(p, "metric"), format!("expected a {dim}x{dim} matrix")));
    }
    let reference_dual_metric = o.get("reference_dual_metric").map(|r| qmat(r, &ptr(p, "reference_dual_metric"))).transpose()?;
    Ok(DvsConfig { dim, generators, metric, reference_dual_metric })
}

fn side(v: &Json, p: &str) -> Result<SideConfig, ConfigError> {
    let o = object(v, p)?;
    let charts = list(field(o, "charts", p)?, &ptr(p, "charts"), |c, cp| string(c, cp).map(str::to_string))?;
    if charts.is_empty() {
        return Err(err(&ptr(p, "charts"), "expected at least one chart"));
    }
    let per_chart = |key: &str, n: usize| -> Result<(), ConfigError> { Err(err(&ptr(p, key), format!("expected one entry per chart ({n})"))) };
    let fibres = match o.get("fibres") {
        None => None,
        Some(f) => {
            let fp = ptr(p, "fibres");
            let fs = list(f, &fp, |x, xp| {
                let fo = object(x, xp)?;
                let metric = exprmat(field(fo, "metric", xp)?, &ptr(xp, "metric"))?;
                let dim = match fo.get("dim") {
                    Some(d) => uint(d, &ptr(xp, "dim"))?,
                    None => metric.len(),
                };
                if metric.len() != dim {
                    return Err(err(&ptr(xp, "metric"), format!("expected a {dim}x{dim} matrix")));
                }
                Ok(FibreConfig { dim, generators: generators(fo, dim, xp)?, metric })
            })?;
            if fs.len() != charts.len() {
                per_chart("fibres", charts.len())?;
            }
            Some(fs)
        }
    };
    let lambda = match o.get("lambda") {
        None => None,
        Some(l) => {
            let hs = list(l, &ptr(p, "lambda"), expr)?;
            if hs.len() != charts.len() {
                per_chart("lambda", charts.len())?;
            }
            Some(hs)
        }
    };
    let sections = match o.get("sections") {
        None => Vec::new(),
        Some(s) => {
            let sp = ptr(p, "sections");
            let secs = list(s, &sp, |x, xp| list(x, xp, |c, cp| list(c, cp, expr)))?;
            for (i, s) in secs.iter().enumerate() {
                let Some(fs) = &fibres else {
                    return Err(err(&sp, "sections need `fibres`"));
                };
                if s.len() != charts.len() {
                    return Err(err(&format!("{sp}/{i}"), format!("expected one entry per chart ({})", charts.len())));
                }
                for (j, (c, f)) in s.iter().zip(fs).enumerate() {
                    if c.len() != f.dim {
                        return Err(err(&format!("{sp}/{i}/{j}"), format!("expected {} components", f.dim)));
                    }
                }
            }
            secs
        }
    };
    Ok(SideConfig { charts, fibres, lambda, sections })
}

fn site(v: &Json, p: &str) -> Result<Site, ConfigError> {
    let o = object(v, p)?;
    let chart = string(field(o, "chart", p)?, &ptr(p, "chart"))?.to_string();
    let at = rational(field(o, "at", p)?, &ptr(p, "at"))?;
    Ok((chart, at))
}

fn glue_point(v: &Json, p: &str) -> Result<GluePoint, ConfigError> {
    let o = object(v, p)?;
    let left = site(field(o, "left", p)?, &ptr(p, "left"))?;
    let right = site(field(o, "right", p)?, &ptr(p, "right"))?;
    let map = match o.get("map") {
        Some(m) => qmat(m, &ptr(p, "map"))?,
        None => QMat::identity(1),
    };
    Ok(GluePoint { left, right, map })
}

fn exterior(v: &Json, p: &str) -> Result<ExteriorConfig, ConfigError> {
    let o = object(v, p)?;
    let u = list(field(o, "u", p)?, &ptr(p, "u"), expr)?;
    let a = list(field(o, "a", p)?, &ptr(p, "a"), expr)?;
    if u.len() != a.len() {
        return Err(err(p, "`u` and `a` need one entry per chart"));
    }
    Ok(ExteriorConfig { u, a })
}

fn dirac(v: &Json, p: &str) -> Result<DiracConfig, ConfigError> {
    let o = object(v, p)?;
    let scale = match o.get("a") {
        Some(a) => rational(a, &ptr(p, "a"))?,
        None => crate::linalg::q(1),
    };
    let sections = match o.get("sections") {
        None => Vec::new(),
        Some(s) => list(s, &ptr(p, "sections"), |x, xp| {
            let xo = object(x, xp)?;
            Ok((exterior(field(xo, "left", xp)?, &ptr(xp, "left"))?, exterior(field(xo, "right", xp)?, &ptr(xp, "right"))?))
        })?,
    };
    let points = o
        .get("points")
        .map(|pts| {
            list(pts, &ptr(p, "points"), |x, xp| {
                let xo = object(x, xp)?;
                Ok((string(field(xo, "chart", xp)?, &ptr(xp, "chart"))?.to_string(), number(field(xo, "at", xp)?, &ptr(xp, "at"))?))
            })
        })
        .transpose()?;
    Ok(DiracConfig { scale, sections, points })
}

fn validate_references(cfg: &Config) -> Result<(), ConfigError> {
    let charts = |s: &Option<SideConfig>| s.as_ref().map(|s| s.charts.clone()).unwrap_or_default();
    let (left, right) = (charts(&cfg.left), charts(&cfg.right));
    for c in &right {
        if left.contains(c) {
            return Err(err("/right/charts", format!("chart `{c}` is also a left chart")));
        }
    }
    for (i, g) in cfg.gluing.iter().enumerate() {
        let p = format!("/gluing/points/{i}");
        if !left.contains(&g.left.0) {
            return Err(err(&format!("{p}/left/chart"), format!("unknown left chart `{}`", g.left.0)));
        }
        if !right.contains(&g.right.0) {
            return Err(err(&format!("{p}/right/chart"), format!("unknown right chart `{}`", g.right.0)));
        }
        let dims = |s: &Option<SideConfig>, chart: &str| -> Option<usize> {
            let s = s.as_ref()?;
            let i = s.charts.iter().position(|c| c == chart)?;
            s.fibres.as_ref().map(|f| f[i].dim)
        };
        let (d1, d2) = (dims(&cfg.left, &g.left.0), dims(&cfg.right, &g.right.0));
        let (r, c) = (g.map.nrows(), g.map.ncols());
        if d1.is_some_and(|d| d != c) || d2.is_some_and(|d| d != r) {
            return Err(err(&format!("{p}/map"), "map does not match the fibre dimensions"));
        }
    }
    if let Some(d) = &cfg.dirac {
        let (Some(l), Some(r)) = (&cfg.left, &cfg.right) else {
            return Err(err("/dirac", "a Dirac operator needs both `left` and `right`"));
        };
        if l.lambda.is_none() || r.lambda.is_none() {
            return Err(err("/dirac", "a Dirac operator needs `lambda` on both sides"));
        }
        for (i, (a, b)) in d.sections.iter().enumerate() {
            if a.u.len() != left.len() {
                return Err(err(&format!("/dirac/sections/{i}/left"), "expected one entry per left chart"));
            }
            if b.u.len() != right.len() {
                return Err(err(&format!("/dirac/sections/{i}/right"), "expected one entry per right chart"));
            }
        }
        for (i, (c, _)) in d.points.iter().flatten().enumerate() {
            if !left.contains(c) && !right.contains(c) {
                return Err(err(&format!("/dirac/points/{i}/chart"), format!("unknown chart `{c}`")));
            }
        }
    }
    Ok(())
}
