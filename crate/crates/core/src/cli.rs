//! Experiment driver: config parsing, sweeps, fits and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

use crate::align::{alignment_probability, alignment_probability_timeavg_oracle};
use crate::clock::{embed_l, time_basis_state, ClockSpec, ClockState, Generator};
use crate::codes::{make_identity_code, make_unitary_conjugation_code, BaseCode, CovariantCode, KrausChannel};
use crate::error::Error;
use crate::fidelity::{
    expected_max_p, f_worst_direct, f_worst_lower, fidelity_report, golden_section, RunParams, DEFAULT_TOL,
};
use crate::linalg::{CMatrix, C64};
use crate::phase3::{three_clock_pipeline, PhaseErrorSpec};
use crate::pipeline::{full_channel_with_table, page_wootters_condition, stationarity, FTable, KAlphaPolicy};

pub const SCHEMA_VERSION: &str = "covclock-csv v1";
pub const CSV_HEADER: &str = "experiment,clock,d,d_c,L,M,sigma,t_ph,block,tau,f_lower,f_direct,f_converse,one_minus_f,metric,aux,wall_time_ms";
const COST_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SwpScaling,
    QiScaling,
    LSiteEquivalence,
    Phase3Sweep,
    AlignBench,
    PwCheck,
    ConverseAudit,
}

impl Experiment {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "swp-scaling" => Self::SwpScaling,
            "qi-scaling" => Self::QiScaling,
            "l-site-equivalence" => Self::LSiteEquivalence,
            "phase3-sweep" => Self::Phase3Sweep,
            "align-bench" => Self::AlignBench,
            "pw-check" => Self::PwCheck,
            "converse-audit" => Self::ConverseAudit,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SwpScaling => "swp-scaling",
            Self::QiScaling => "qi-scaling",
            Self::LSiteEquivalence => "l-site-equivalence",
            Self::Phase3Sweep => "phase3-sweep",
            Self::AlignBench => "align-bench",
            Self::PwCheck => "pw-check",
            Self::ConverseAudit => "converse-audit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    Fixed(f64),
    SqrtD,
    Log32D,
    GridOptimize { min: f64, max_frac: f64 },
}

impl SigmaPolicy {
    pub fn sigma(&self, d: usize) -> f64 {
        let x = d as f64;
        match *self {
            Self::Fixed(s) => s,
            Self::SqrtD => x.sqrt(),
            Self::Log32D => x.ln().powf(1.5),
            Self::GridOptimize { min, max_frac } => (min * max_frac * x).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodeSpec {
    Identity { levels_l: Vec<i64>, levels_co: Vec<i64> },
    Unitary { encoder: CMatrix, noise: Vec<CMatrix>, levels_l: Vec<i64>, levels_co: Vec<i64> },
    Custom {
        encoder: CMatrix,
        errors: Vec<Vec<CMatrix>>,
        decoders: Vec<Vec<CMatrix>>,
        levels_l: Vec<i64>,
        levels_co: Vec<i64>,
    },
}

impl CodeSpec {
    pub fn build(&self) -> crate::Result<BaseCode> {
        match self {
            Self::Identity { levels_l, levels_co } => {
                if levels_l.len() != levels_co.len() {
                    return Err(Error::Validation("identity code needs level lists of equal length".into()));
                }
                make_identity_code(levels_l.len(), levels_l, levels_co)
            }
            Self::Unitary { encoder, noise, levels_l, levels_co } => {
                make_unitary_conjugation_code(encoder.clone(), noise.clone(), levels_l, levels_co)
            }
            Self::Custom { encoder, errors, decoders, levels_l, levels_co } => BaseCode::new(
                encoder.clone(),
                errors.iter().map(|k| KrausChannel::new(k.clone())).collect::<crate::Result<_>>()?,
                decoders.iter().map(|k| KrausChannel::new(k.clone())).collect::<crate::Result<_>>()?,
                Generator::new(levels_l.clone(), crate::codes::DEFAULT_OMEGA)?,
                Generator::new(levels_co.clone(), crate::codes::DEFAULT_OMEGA)?,
            ),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Identity { .. } => "identity",
            Self::Unitary { .. } => "unitary",
            Self::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub d_list: Vec<usize>,
    pub sigma_policy: SigmaPolicy,
    pub l: usize,
    pub l_list: Option<Vec<usize>>,
    pub m: usize,
    pub code: CodeSpec,
    pub error: usize,
    pub k0: f64,
    pub seed: u64,
    pub restarts: usize,
    pub t_ph_points: usize,
    pub tau_points: usize,
    pub out: Option<PathBuf>,
}

fn schema(msg: impl Into<String>) -> String {
    msg.into()
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| schema(format!("{key}: cannot parse '{x}'"))))
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.trim().parse::<T>().map_err(|_| schema(format!("{key}: cannot parse '{v}'")))
}

fn json_matrix(v: &Value) -> Result<CMatrix, String> {
    let rows = v.as_array().ok_or("matrix must be an array of rows")?;
    let n_rows = rows.len();
    let mut data = Vec::new();
    let mut n_cols = None;
    for row in rows {
        let row = row.as_array().ok_or("matrix row must be an array")?;
        if *n_cols.get_or_insert(row.len()) != row.len() {
            return Err("ragged matrix".into());
        }
        for entry in row {
            let z = match entry {
                Value::Number(n) => C64::new(n.as_f64().ok_or("bad number")?, 0.0),
                Value::Array(p) if p.len() == 2 => C64::new(
                    p[0].as_f64().ok_or("bad real part")?,
                    p[1].as_f64().ok_or("bad imaginary part")?,
                ),
                _ => return Err("entries must be numbers or [re, im] pairs".into()),
            };
            data.push(z);
        }
    }
    let n_cols = n_cols.unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err("empty matrix".into());
    }
    Ok(CMatrix::from_row_slice(n_rows, n_cols, &data))
}

fn json_matrices(key: &str, v: &str) -> Result<Vec<CMatrix>, String> {
    let parsed: Value = serde_json::from_str(v).map_err(|e| format!("{key}: {e}"))?;
    parsed
        .as_array()
        .ok_or_else(|| format!("{key}: expected a list of matrices"))?
        .iter()
        .map(|m| json_matrix(m).map_err(|e| format!("{key}: {e}")))
        .collect()
}

fn json_kraus_sets(key: &str, v: &str) -> Result<Vec<Vec<CMatrix>>, String> {
    let parsed: Value = serde_json::from_str(v).map_err(|e| format!("{key}: {e}"))?;
    parsed
        .as_array()
        .ok_or_else(|| format!("{key}: expected a list of Kraus lists"))?
        .iter()
        .map(|set| {
            set.as_array()
                .ok_or_else(|| format!("{key}: expected a Kraus list"))?
                .iter()
                .map(|m| json_matrix(m).map_err(|e| format!("{key}: {e}")))
                .collect()
        })
        .collect()
}

const KEYS: &[&str] = &[
    "experiment", "d_list", "sigma_policy", "sigma_min", "sigma_max_frac", "L", "l_list", "M", "code",
    "levels_L", "levels_Co", "encoder", "noise", "errors", "decoders", "error", "k0", "seed", "restarts",
    "t_ph_points", "tau_points", "out",
];

/// Parses the flat `key=value` format. `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", lineno + 1))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(format!("line {}: unknown key '{k}'", lineno + 1));
        }
        if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key '{k}'", lineno + 1));
        }
    }
    let get = |k: &str| kv.get(k).map(String::as_str);

    let experiment = get("experiment").ok_or("missing key 'experiment'")?;
    let experiment = Experiment::parse(experiment).ok_or_else(|| format!("unknown experiment '{experiment}'"))?;
    let d_list: Vec<usize> = parse_list("d_list", get("d_list").ok_or("missing key 'd_list'")?)?;
    if d_list.is_empty() {
        return Err("d_list must not be empty".into());
    }
    if let Some(d) = d_list.iter().find(|&&d| d < 2) {
        return Err(format!("d_list: dimension {d} is below 2"));
    }
    let d_min = *d_list.iter().min().unwrap() as f64;

    let sigma_policy = match get("sigma_policy").unwrap_or("sqrt_d") {
        "sqrt_d" => SigmaPolicy::SqrtD,
        "log32_d" => SigmaPolicy::Log32D,
        "grid-optimize" => {
            let min: f64 = parse_scalar("sigma_min", get("sigma_min").unwrap_or("1"))?;
            let max_frac: f64 = parse_scalar("sigma_max_frac", get("sigma_max_frac").unwrap_or("0.25"))?;
            if !(min > 0.0 && max_frac > 0.0 && min < max_frac * d_min && max_frac * d_min < d_min) {
                return Err(format!(
                    "grid-optimize range [{min}, {max_frac}*d] must be a nonempty subset of (0, {d_min})"
                ));
            }
            SigmaPolicy::GridOptimize { min, max_frac }
        }
        other => match other.strip_prefix("fixed:") {
            Some(x) => {
                let s: f64 = parse_scalar("sigma_policy", x)?;
                if !(s > 0.0 && s < d_min) {
                    return Err(format!("fixed sigma {s} must lie in (0, {d_min})"));
                }
                SigmaPolicy::Fixed(s)
            }
            None => return Err(format!("unknown sigma_policy '{other}'")),
        },
    };

    let l: usize = parse_scalar("L", get("L").unwrap_or("1"))?;
    let m: usize = parse_scalar("M", get("M").unwrap_or("1"))?;
    if l == 0 || m == 0 {
        return Err("L and M must be positive".into());
    }
    if m > 3 {
        return Err("M must be at most 3".into());
    }
    let l_list = match get("l_list") {
        Some(v) => {
            let ls: Vec<usize> = parse_list("l_list", v)?;
            if ls.len() != d_list.len() || ls.contains(&0) {
                return Err("l_list must match d_list in length and be positive".into());
            }
            Some(ls)
        }
        None => None,
    };

    let levels_l: Vec<i64> = parse_list("levels_L", get("levels_L").unwrap_or("0,1"))?;
    let levels_co: Vec<i64> = parse_list("levels_Co", get("levels_Co").unwrap_or("0,0"))?;
    let code = match get("code").unwrap_or("identity") {
        "identity" => CodeSpec::Identity { levels_l, levels_co },
        "unitary" => {
            let enc = json_matrices("encoder", &format!("[{}]", get("encoder").ok_or("unitary code needs 'encoder'")?))?;
            let noise = json_matrices("noise", get("noise").ok_or("unitary code needs 'noise'")?)?;
            CodeSpec::Unitary { encoder: enc[0].clone(), noise, levels_l, levels_co }
        }
        "custom" => {
            let enc = json_matrices("encoder", &format!("[{}]", get("encoder").ok_or("custom code needs 'encoder'")?))?;
            CodeSpec::Custom {
                encoder: enc[0].clone(),
                errors: json_kraus_sets("errors", get("errors").ok_or("custom code needs 'errors'")?)?,
                decoders: json_kraus_sets("decoders", get("decoders").ok_or("custom code needs 'decoders'")?)?,
                levels_l,
                levels_co,
            }
        }
        other => return Err(format!("unknown code '{other}'")),
    };
    code.build().map_err(|e| format!("code: {e}"))?;

    let error: usize = parse_scalar("error", get("error").unwrap_or("0"))?;
    let seed: u64 = parse_scalar("seed", get("seed").unwrap_or("0"))?;
    let restarts: usize = parse_scalar("restarts", get("restarts").unwrap_or("16"))?;
    let t_ph_points: usize = parse_scalar("t_ph_points", get("t_ph_points").unwrap_or("17"))?;
    let tau_points: usize = parse_scalar("tau_points", get("tau_points").unwrap_or("9"))?;
    let k0: f64 = parse_scalar("k0", get("k0").unwrap_or("0"))?;
    if restarts == 0 || t_ph_points == 0 || tau_points == 0 {
        return Err("restarts, t_ph_points and tau_points must be positive".into());
    }
    Ok(RunConfig {
        experiment,
        d_list,
        sigma_policy,
        l,
        l_list,
        m,
        code,
        error,
        k0,
        seed,
        restarts,
        t_ph_points,
        tau_points,
        out: get("out").map(PathBuf::from),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultRow {
    pub experiment: String,
    pub clock: String,
    pub d: usize,
    pub d_c: usize,
    pub l: usize,
    pub m: usize,
    pub sigma: Option<f64>,
    pub t_ph: Option<f64>,
    pub block: Option<usize>,
    pub tau: Option<f64>,
    pub f_lower: Option<f64>,
    pub f_direct: Option<f64>,
    pub f_converse: Option<f64>,
    pub one_minus_f: Option<f64>,
    pub metric: Option<f64>,
    pub aux: Option<f64>,
    pub wall_time_ms: f64,
}

fn fmt_f(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl ResultRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.experiment,
            self.clock,
            self.d,
            self.d_c,
            self.l,
            self.m,
            fmt_f(self.sigma),
            fmt_f(self.t_ph),
            self.block.map(|b| b.to_string()).unwrap_or_default(),
            fmt_f(self.tau),
            fmt_f(self.f_lower),
            fmt_f(self.f_direct),
            fmt_f(self.f_converse),
            fmt_f(self.one_minus_f),
            fmt_f(self.metric),
            fmt_f(self.aux),
            self.wall_time_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> crate::Result<Fit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 paired points, got {} and {}", xs.len(), ys.len())));
    }
    if let Some(y) = ys.iter().find(|&&y| !(y > 0.0)) {
        return Err(Error::Fit(format!("nonpositive value {y}")));
    }
    if let Some(x) = xs.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Fit(format!("nonpositive abscissa {x}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(Fit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub fit: Option<Fit>,
    pub fit_target: &'static str,
}

impl RunOutput {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {SCHEMA_VERSION}\n{CSV_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        if let Some(f) = self.fit {
            let _ = writeln!(s, "# fit target={} x=d", self.fit_target);
            let _ = writeln!(s, "# fit slope={:.16e}", f.slope);
            let _ = writeln!(s, "# fit intercept={:.16e}", f.intercept);
            let _ = writeln!(s, "# fit r2={:.16e}", f.r2);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Schema(String),
    Invariant(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 1,
            Self::Invariant(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Schema(m) => write!(f, "config error: {m}"),
            Self::Invariant(m) => write!(f, "invariant failure: {m}"),
        }
    }
}

#[derive(Debug, Clone)]
enum Point {
    Single { d: usize, qi: bool },
    LSite { site_dim: usize, l: usize },
    Phase3 { d: usize, j: usize, block: usize },
    Align { d: usize, qi: bool },
    Pw { d: usize, j: usize },
}

fn points(cfg: &RunConfig) -> Vec<Point> {
    let mut out = Vec::new();
    for (i, &d) in cfg.d_list.iter().enumerate() {
        match cfg.experiment {
            Experiment::SwpScaling => out.push(Point::Single { d, qi: false }),
            Experiment::QiScaling => out.push(Point::Single { d, qi: true }),
            Experiment::ConverseAudit => {
                out.push(Point::Single { d, qi: false });
                out.push(Point::Single { d, qi: true });
            }
            Experiment::LSiteEquivalence => {
                let l = cfg.l_list.as_ref().map(|ls| ls[i]).unwrap_or(cfg.l);
                out.push(Point::LSite { site_dim: d, l });
            }
            Experiment::Phase3Sweep => {
                for j in 0..cfg.t_ph_points {
                    for block in 1..=3 {
                        out.push(Point::Phase3 { d, j, block });
                    }
                }
            }
            Experiment::AlignBench => {
                out.push(Point::Align { d, qi: false });
                out.push(Point::Align { d, qi: true });
            }
            Experiment::PwCheck => {
                for j in 0..cfg.tau_points {
                    out.push(Point::Pw { d, j });
                }
            }
        }
    }
    out
}

/// Rough inner-operation count used to gate very large sweeps.
pub fn predicted_cost(cfg: &RunConfig) -> f64 {
    points(cfg)
        .iter()
        .map(|p| {
            let (d, n) = match *p {
                Point::Single { d, .. } | Point::Align { d, .. } => (d * cfg.l.max(1), cfg.m),
                Point::LSite { site_dim, l } => (crate::clock::effective_dim(site_dim, l), 1),
                Point::Phase3 { d, .. } => (d * cfg.l.max(1), 3),
                Point::Pw { d, .. } => (d, cfg.m),
            };
            let d = d as f64;
            d.powi(3).max(d.powi(n as i32 + 1))
        })
        .sum()
}

fn qi_spec(k0: f64, sigma: f64) -> ClockSpec {
    ClockSpec::QuasiIdeal { k1_0: k0, n0: None, sigma }
}

fn clock_block(cfg: &RunConfig, d: usize, qi: bool, sigma: f64) -> crate::Result<ClockState> {
    let spec = if qi { qi_spec(cfg.k0, sigma) } else { ClockSpec::Swp { k0: cfg.k0.round() as i64 } };
    // Per-site dimension d with L sites; the effective clock is L(d-1)+1.
    embed_l(d, cfg.l, &spec)
}

fn single_policy(cfg: &RunConfig, qi: bool, m: usize) -> KAlphaPolicy {
    let k0 = if qi { cfg.k0 } else { cfg.k0.round() };
    if m == 1 {
        KAlphaPolicy::SingleClock { k1_0: k0 }
    } else {
        KAlphaPolicy::Anchor { clock: 0, k0 }
    }
}

/// σ minimising `Σ F0 max|p|` for a single Quasi-Ideal clock.
pub fn optimize_sigma(base: &BaseCode, d: usize, l: usize, k0: f64, lo: f64, hi: f64) -> crate::Result<(f64, f64)> {
    let objective = |sigma: f64| -> f64 {
        let eval = || -> crate::Result<f64> {
            let clock = embed_l(d, l, &qi_spec(k0, sigma))?;
            let code = CovariantCode::new(base.clone(), vec![clock])?;
            let table = FTable::compute(&code.surviving(), code.q_max())?;
            expected_max_p(&code, &table, &KAlphaPolicy::SingleClock { k1_0: k0 })
        };
        eval().unwrap_or(f64::INFINITY)
    };
    let n = 48;
    let grid: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let vals: Vec<f64> = grid.iter().map(|&s| objective(s)).collect();
    let best = (0..n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n - 1)];
    let (s, v) = golden_section(objective, a, b, 1e-6 * b);
    Ok(if v <= vals[best] { (s, v) } else { (grid[best], vals[best]) })
}

fn params(cfg: &RunConfig, clock: &ClockState, sigma: Option<f64>, m: usize) -> RunParams {
    RunParams {
        d_c: clock.site_dim,
        d_eff: clock.dim,
        sigma,
        l: clock.embed_factor,
        m,
        clock_kind: format!("{:?}", clock.kind),
        code: cfg.code.label().to_string(),
        error: cfg.error,
    }
}

fn run_point(cfg: &RunConfig, point: &Point, seed: u64) -> Result<Vec<ResultRow>, String> {
    let base = cfg.code.build().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let row = |clock: &str, d: usize, d_c: usize, l: usize, m: usize| ResultRow {
        experiment: cfg.experiment.name().into(),
        clock: clock.into(),
        d,
        d_c,
        l,
        m,
        ..Default::default()
    };
    let ctx = |e: Error| format!("{point:?}: {e}");
    let mut rows = Vec::new();
    match *point {
        Point::Single { d, qi } => {
            let sigma = if qi {
                Some(match cfg.sigma_policy {
                    SigmaPolicy::GridOptimize { min, max_frac } => {
                        optimize_sigma(&base, d, cfg.l, cfg.k0, min, max_frac * d as f64).map_err(ctx)?.0
                    }
                    p => p.sigma(crate::clock::effective_dim(d, cfg.l)),
                })
            } else {
                None
            };
            let clock = clock_block(cfg, d, qi, sigma.unwrap_or(1.0)).map_err(ctx)?;
            let clocks = vec![clock.clone(); cfg.m];
            let code = CovariantCode::new(base, clocks).map_err(ctx)?;
            let policy = single_policy(cfg, qi, cfg.m);
            let rep = fidelity_report(&code, &policy, cfg.error, params(cfg, &clock, sigma, cfg.m), cfg.restarts, seed)
                .map_err(ctx)?;
            let mut r = row(if qi { "qi" } else { "swp" }, clock.dim, d, cfg.l, cfg.m);
            r.sigma = sigma;
            r.f_lower = Some(rep.f_lower);
            r.f_direct = Some(rep.f_direct);
            r.f_converse = Some(rep.f_converse);
            r.one_minus_f = Some(1.0 - rep.f_lower);
            if cfg.experiment == Experiment::ConverseAudit {
                let slack = rep.f_converse - rep.f_direct;
                if slack < -1e-6 {
                    return Err(format!("{point:?}: f_direct {} exceeds converse {}", rep.f_direct, rep.f_converse));
                }
                r.metric = Some(slack);
                r.one_minus_f = Some(1.0 - rep.f_direct);
            }
            r.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
        Point::LSite { site_dim, l } => {
            let d_eff = crate::clock::effective_dim(site_dim, l);
            let sigma = cfg.sigma_policy.sigma(d_eff).min(d_eff as f64 - 1e-9);
            let spec = qi_spec(cfg.k0, sigma);
            let block = embed_l(site_dim, l, &spec).map_err(ctx)?;
            let single = spec.build(d_eff).map_err(ctx)?;
            let policy = KAlphaPolicy::SingleClock { k1_0: cfg.k0 };
            let code_b = CovariantCode::new(base.clone(), vec![block.clone()]).map_err(ctx)?;
            let code_s = CovariantCode::new(base, vec![single]).map_err(ctx)?;
            let q = code_b.q_max();
            let tb = FTable::compute(&code_b.surviving(), q).map_err(ctx)?;
            let ts = FTable::compute(&code_s.surviving(), q).map_err(ctx)?;
            let grid = FTable::exact_grid(d_eff, 1, q);
            let tm = FTable::compute_materialized(&code_b.surviving(), q, grid).map_err(ctx)?;
            let kb = full_channel_with_table(&code_b, &tb, &policy, cfg.error).map_err(ctx)?;
            let ks = full_channel_with_table(&code_s, &ts, &policy, cfg.error).map_err(ctx)?;
            let km = full_channel_with_table(&code_b, &tm, &policy, cfg.error).map_err(ctx)?;
            let dist = kb.choi_distance(&ks).max(km.choi_distance(&ks));
            let f0_gap = (0..ts.outcomes())
                .map(|i| (tb.f0(i) - ts.f0(i)).abs().max((tm.f0(i) - ts.f0(i)).abs()))
                .fold(0.0, f64::max);
            if dist >= 1e-10 || f0_gap >= 1e-12 {
                return Err(format!("{point:?}: equivalence broken, Choi distance {dist:e}, F0 gap {f0_gap:e}"));
            }
            let f_lower = f_worst_lower(&code_b, &tb, &policy).map_err(ctx)?;
            let (f_direct, _) = f_worst_direct(&kb, cfg.restarts, DEFAULT_TOL, seed).map_err(ctx)?;
            let b = &code_b.base;
            let mut r = row("qi-embedded", d_eff, site_dim, l, 1);
            r.sigma = Some(sigma);
            r.f_lower = Some(f_lower);
            r.f_direct = Some(f_direct);
            r.f_converse = Some(crate::fidelity::converse_bound(b.gen_l.delta_h(), b.gen_co.delta_h(), l, site_dim));
            r.one_minus_f = Some(1.0 - f_lower);
            r.metric = Some(dist);
            r.aux = Some(f0_gap);
            r.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
        Point::Phase3 { d, j, block } => {
            let d_eff = crate::clock::effective_dim(d, cfg.l);
            let sigma = cfg.sigma_policy.sigma(d_eff);
            let clock = embed_l(d, cfg.l, &qi_spec(cfg.k0, sigma)).map_err(ctx)?;
            let code = CovariantCode::new(base, vec![clock.clone(); 3]).map_err(ctx)?;
            let period = code.base.gen_l.period();
            let t_ph = period * j as f64 / cfg.t_ph_points as f64;
            let err = PhaseErrorSpec { target_block: block, t_ph };
            let rep = three_clock_pipeline(&code, &err, cfg.error, params(cfg, &clock, Some(sigma), 3), cfg.restarts, seed)
                .map_err(ctx)?;
            let mut r = row("qi", d_eff, d, cfg.l, 3);
            r.sigma = Some(sigma);
            r.t_ph = Some(t_ph);
            r.block = Some(block);
            r.f_lower = Some(rep.f_lower);
            r.f_direct = Some(rep.f_direct);
            r.f_converse = Some(rep.f_converse);
            r.one_minus_f = Some(1.0 - rep.f_direct);
            r.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
        Point::Align { d, qi } => {
            let sigma = qi.then(|| cfg.sigma_policy.sigma(d));
            let frame = if qi {
                qi_spec(cfg.k0, sigma.unwrap()).build(d)
            } else {
                time_basis_state(d, cfg.k0.round() as i64)
            }
            .map_err(ctx)?;
            let gen = Generator::clock(d, 1.0).map_err(ctx)?;
            let exact = alignment_probability(&frame, &gen).map_err(ctx)?;
            let oracle = alignment_probability_timeavg_oracle(&frame, &gen, 4 * d).map_err(ctx)?;
            let gap = (exact.p - oracle.p).abs();
            if gap >= 1e-10 {
                return Err(format!("{point:?}: exact and time-average routes differ by {gap:e}"));
            }
            let mut r = row(if qi { "qi" } else { "swp" }, d, d, 1, 1);
            r.sigma = sigma;
            r.metric = Some(exact.p);
            r.aux = Some(gap);
            r.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
        Point::Pw { d, j } => {
            let sigma = cfg.sigma_policy.sigma(d);
            let clock = qi_spec(cfg.k0, sigma).build(d).map_err(ctx)?;
            let code = CovariantCode::new(base, vec![clock; cfg.m]).map_err(ctx)?;
            let dl = code.base.d_l;
            let rho = CMatrix::from_element(dl, dl, C64::new(1.0 / dl as f64, 0.0));
            let tau = code.base.gen_l.period() * j as f64 / cfg.tau_points as f64;
            let dist = page_wootters_condition(&code, &rho, tau).map_err(ctx)?;
            let stat = stationarity(&code, &rho).map_err(ctx)?;
            if stat >= 1e-10 {
                return Err(format!("{point:?}: encoded state not stationary, commutator norm {stat:e}"));
            }
            let mut r = row("qi", d, d, 1, cfg.m);
            r.sigma = Some(sigma);
            r.tau = Some(tau);
            r.metric = Some(dist);
            r.aux = Some(stat);
            r.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            rows.push(r);
        }
    }
    Ok(rows)
}

fn fit_rows(cfg: &RunConfig, rows: &[ResultRow]) -> (Option<Fit>, &'static str) {
    let mut by_d: BTreeMap<usize, f64> = BTreeMap::new();
    let target = match cfg.experiment {
        Experiment::SwpScaling | Experiment::QiScaling => {
            for r in rows {
                by_d.insert(r.d, r.one_minus_f.unwrap_or(f64::NAN));
            }
            "one_minus_f_lower"
        }
        Experiment::Phase3Sweep => {
            for r in rows {
                let e = by_d.entry(r.d).or_insert(0.0);
                *e = e.max(r.one_minus_f.unwrap_or(f64::NAN));
            }
            "max_one_minus_f_direct"
        }
        Experiment::AlignBench => {
            for r in rows.iter().filter(|r| r.clock == "qi") {
                by_d.insert(r.d, r.metric.unwrap_or(f64::NAN));
            }
            "p_qi"
        }
        Experiment::PwCheck => {
            for r in rows {
                let e = by_d.entry(r.d).or_insert(0.0);
                *e = e.max(r.metric.unwrap_or(f64::NAN));
            }
            "max_trace_distance"
        }
        Experiment::LSiteEquivalence | Experiment::ConverseAudit => return (None, ""),
    };
    let xs: Vec<f64> = by_d.keys().map(|&d| d as f64).collect();
    let ys: Vec<f64> = by_d.values().copied().collect();
    (fit_loglog(&xs, &ys).ok(), target)
}

/// Runs every sweep point of `cfg`, in parallel, and gathers rows in config order.
pub fn execute(cfg: &RunConfig, threads: Option<usize>, force: bool) -> Result<RunOutput, RunError> {
    let cost = predicted_cost(cfg);
    if cost > COST_LIMIT && !force {
        return Err(RunError::Schema(format!(
            "predicted cost {cost:.2e} exceeds {COST_LIMIT:.0e} inner operations; pass --force"
        )));
    }
    let pts = points(cfg);
    let work = || -> Vec<Result<Vec<ResultRow>, String>> {
        pts.par_iter()
            .enumerate()
            .map(|(i, p)| run_point(cfg, p, cfg.seed.wrapping_add(1000 * i as u64)))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Schema(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r.map_err(RunError::Invariant)?);
    }
    let (fit, fit_target) = fit_rows(cfg, &rows);
    Ok(RunOutput { rows, fit, fit_target })
}

pub fn gnuplot_script(csv_path: &str, out: &RunOutput) -> String {
    let ycol = match out.fit_target {
        "p_qi" | "max_trace_distance" => 15,
        _ => 14,
    };
    format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set logscale xy\nset xlabel 'd'\nset ylabel '{}'\nplot '{}' using 3:{} with points pt 7\n",
        if out.fit_target.is_empty() { "value" } else { out.fit_target },
        csv_path,
        ycol
    )
}

#[derive(Debug, Parser)]
#[command(name = "covclock", version, about = "Covariant clock-code simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config and write CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        gnuplot: bool,
        /// Allow configs whose predicted cost exceeds the limit.
        #[arg(long)]
        force: bool,
    },
    /// Run the built-in invariant checks.
    Verify,
}

/// Loads a config file and applies the `COVCLOCK_SEED` override.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(RunError::Schema)?;
    if let Ok(s) = std::env::var("COVCLOCK_SEED") {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| RunError::Schema(format!("COVCLOCK_SEED: cannot parse '{s}'")))?;
    }
    Ok(cfg)
}

pub fn run_command(config: &std::path::Path, out: Option<PathBuf>, threads: Option<usize>, gnuplot: bool, force: bool) -> i32 {
    let result = (|| -> Result<(), RunError> {
        let cfg = load_config(config)?;
        let output = execute(&cfg, threads, force)?;
        let csv = output.to_csv();
        match out.or(cfg.out.clone()) {
            Some(path) => {
                std::fs::write(&path, csv).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))?;
                if gnuplot {
                    let gp = path.with_extension("gp");
                    std::fs::write(&gp, gnuplot_script(&path.display().to_string(), &output))
                        .map_err(|e| RunError::Schema(format!("{}: {e}", gp.display())))?;
                }
            }
            None => {
                if gnuplot {
                    return Err(RunError::Schema("--gnuplot needs an output path".into()));
                }
                print!("{csv}");
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads, gnuplot, force } => run_command(&config, out, threads, gnuplot, force),
        Command::Verify => {
            let results = crate::verify::run_all();
            let mut failed = 0;
            for (name, r) in &results {
                match r {
                    Ok(()) => println!("PASS {name}"),
                    Err(msg) => {
                        failed += 1;
                        println!("FAIL {name}: {msg}");
                    }
                }
            }
            println!("{} checks, {failed} failed", results.len());
            if failed == 0 { 0 } else { 2 }
        }
    }
}
