//! Experiment configuration: TOML in, a validated [`ExperimentConfig`] out.
//!
//! Validation collects every violation before failing. Probabilities may be
//! written as decimal strings; each is parsed once here and echoed back in the
//! manifest so that rounding is visible.

use std::fmt;

use hts_core::diagnostics::AuditSpec;
use hts_core::environment::{BaseSystem, RandomMatrixFamily};
use hts_core::hts::Normalization;
use hts_core::transfer::WordTable;
use hts_core::{
    GibbsModel, MarginalMode, MeasureModel, PotentialModel, RandomProductMeasure, TargetPoint, TransitionMatrix, Word,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, message } => write!(f, "syntax error at line {line}: {message}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "{} configuration error(s):", v.len())?;
                for e in v {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A probability or real as written and as parsed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedNumber {
    pub key: String,
    pub text: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSpec {
    pub label: String,
    #[serde(skip)]
    pub point: TargetPoint,
    pub expect: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub depths: Vec<usize>,
    pub annealed: bool,
    pub normalization: Normalization,
    /// Asserted bound on KS(curve, Theta) when present.
    pub ks_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyConfig {
    pub depths: Vec<usize>,
    pub bias_budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub depths: Vec<usize>,
    pub t: f64,
    pub gap: Option<usize>,
    pub j_max: Option<usize>,
    pub subsample: usize,
    pub epsilon: f64,
    pub h1: Option<f64>,
    pub bound_depths: Vec<usize>,
    pub expectation_depth: usize,
    pub recursion_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub positions: usize,
    pub duality_depth: usize,
    pub decay_gaps: Vec<usize>,
    pub theta_depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub environments: usize,
    pub model: MeasureModel,
    pub targets: Vec<TargetSpec>,
    pub trials: usize,
    pub t_grid: Vec<f64>,
    pub marginal: MarginalMode,
    pub simulate: SimulateConfig,
    pub dichotomy: DichotomyConfig,
    pub diagnostics: DiagnosticsConfig,
    pub audit: AuditConfig,
    pub output_dir: Option<String>,
    pub parsed: Vec<ParsedNumber>,
    /// SHA-256 of the canonical (key-sorted) JSON form of the document.
    pub hash: String,
}

impl ExperimentConfig {
    pub fn alphabet(&self) -> usize {
        use hts_core::SampleMeasureModel;
        self.model.alphabet()
    }

    pub fn audit_spec(&self, h1: f64, seed: u64) -> AuditSpec {
        let d = &self.diagnostics;
        AuditSpec {
            gap: d.gap,
            j_max: d.j_max,
            subsample: d.subsample,
            marginal: self.marginal,
            epsilon: d.epsilon,
            ..AuditSpec::new(d.t, h1, seed)
        }
    }
}

struct Reader {
    errors: Vec<String>,
    parsed: Vec<ParsedNumber>,
}

fn nearest<'a>(key: &str, allowed: &[&'a str]) -> Option<&'a str> {
    allowed.iter().copied().min_by_key(|a| strsim::levenshtein(key, a))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Reader {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                let hint = nearest(k, allowed).map(|n| format!("; nearest valid key is `{}`", join(path, n))).unwrap_or_default();
                self.err(format!("unknown key `{}`{hint}", join(path, k)));
            }
        }
    }

    fn table<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(x)) => Some(x),
            Some(_) => {
                self.err(format!("`{}` must be a table", join(path, key)));
                None
            }
        }
    }

    fn real_value(&mut self, v: &Value, key: &str) -> Option<f64> {
        let (text, value) = match v {
            Value::String(s) => (s.clone(), s.trim().parse::<f64>().ok()),
            Value::Float(x) => (x.to_string(), Some(*x)),
            Value::Integer(i) => (i.to_string(), Some(*i as f64)),
            _ => (String::new(), None),
        };
        match value {
            Some(x) if x.is_finite() => {
                self.parsed.push(ParsedNumber { key: key.to_string(), text, value: x });
                Some(x)
            }
            _ => {
                self.err(format!("`{key}` must be a finite number or decimal string"));
                None
            }
        }
    }

    fn real(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        self.real_value(v, &join(path, key))
    }

    fn prob_row(&mut self, v: &Value, key: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = v else {
            self.err(format!("`{key}` must be an array of probabilities"));
            return None;
        };
        let mut row = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, x) in items.iter().enumerate() {
            let k = format!("{key}[{i}]");
            match self.real_value(x, &k) {
                Some(p) if (0.0..=1.0).contains(&p) => row.push(p),
                Some(p) => {
                    self.err(format!("`{k}` = {p} is not in [0, 1]"));
                    ok = false;
                }
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            self.err(format!("row `{key}` sums to {sum:.9}, not 1"));
            return None;
        }
        Some(row)
    }

    fn prob_matrix(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<Vec<f64>>> {
        let full = join(path, key);
        let Some(Value::Array(rows)) = t.get(key) else {
            if t.contains_key(key) {
                self.err(format!("`{full}` must be an array of rows"));
            }
            return None;
        };
        let parsed: Vec<Option<Vec<f64>>> =
            rows.iter().enumerate().map(|(i, r)| self.prob_row(r, &format!("{full}[{i}]"))).collect();
        let out: Option<Vec<Vec<f64>>> = parsed.into_iter().collect();
        if let Some(m) = &out {
            if m.is_empty() || m.iter().any(|r| r.len() != m[0].len()) {
                self.err(format!("`{full}` rows must be non-empty and of equal length"));
                return None;
            }
        }
        out
    }

    fn uint(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            _ => {
                self.err(format!("`{}` must be a non-negative integer", join(path, key)));
                None
            }
        }
    }

    fn uints(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<usize>> {
        let full = join(path, key);
        match t.get(key)? {
            Value::Array(a) => {
                let v: Option<Vec<usize>> =
                    a.iter().map(|x| x.as_integer().filter(|&i| i >= 0).map(|i| i as usize)).collect();
                if v.is_none() {
                    self.err(format!("`{full}` must be an array of non-negative integers"));
                }
                v
            }
            _ => {
                self.err(format!("`{full}` must be an array"));
                None
            }
        }
    }

    fn string(&mut self, t: &Table, path: &str, key: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.err(format!("`{}` must be a string", join(path, key)));
                None
            }
        }
    }

    fn boolean(&mut self, t: &Table, path: &str, key: &str) -> Option<bool> {
        match t.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.err(format!("`{}` must be true or false", join(path, key)));
                None
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Canonical JSON with sorted keys; equal documents give equal text.
pub fn canonical_json(doc: &Table) -> String {
    let v: serde_json::Value = serde_json::to_value(doc).expect("TOML values are JSON-representable");
    serde_json::to_string(&v).expect("serializable")
}

pub fn config_hash(doc: &Table) -> String {
    hex::encode(Sha256::digest(canonical_json(doc).as_bytes()))
}

const TOP: &[&str] =
    &["name", "seed", "environments", "base", "model", "targets", "run", "marginal", "simulate", "dichotomy", "diagnostics", "audit", "output"];

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut r = Reader { errors: Vec::new(), parsed: Vec::new() };
    r.keys(&doc, "", TOP);

    let name = r.string(&doc, "", "name").unwrap_or_else(|| "experiment".into());
    let seed = r.uint(&doc, "", "seed").unwrap_or(1);
    let environments = r.uint(&doc, "", "environments").unwrap_or(3) as usize;
    if environments == 0 {
        r.err("`environments` must be at least 1".into());
    }

    let base = parse_base(&mut r, &doc);
    let model = match r.table(&doc, "", "model") {
        Some(t) => base.and_then(|b| parse_model(&mut r, t, b)),
        None => {
            r.err("missing table `model`".into());
            None
        }
    };
    let alphabet = model.as_ref().map(|m| {
        use hts_core::SampleMeasureModel;
        m.alphabet()
    });
    let targets = parse_targets(&mut r, &doc, alphabet);

    let empty = Table::new();
    let run = r.table(&doc, "", "run").unwrap_or(&empty);
    r.keys(run, "run", &["trials", "t_max", "t_step"]);
    let trials = r.uint(run, "run", "trials").unwrap_or(10_000) as usize;
    if trials == 0 {
        r.err("`run.trials` must be positive".into());
    }
    let t_max = r.real(run, "run", "t_max").unwrap_or(5.0);
    let t_step = r.real(run, "run", "t_step").unwrap_or(0.05);
    let t_grid = if t_max > 0.0 && t_step > 0.0 && t_max / t_step <= 1e5 {
        let steps = (t_max / t_step).round() as usize;
        (0..=steps).map(|i| i as f64 * t_max / steps as f64).collect()
    } else {
        r.err("`run.t_max` and `run.t_step` must be positive with at most 1e5 grid steps".into());
        vec![0.0]
    };

    let marginal = parse_marginal(&mut r, &doc, seed);
    let mut simulate = parse_simulate(&mut r, &doc);
    if let Normalization::Marginal(_) = simulate.normalization {
        simulate.normalization = Normalization::Marginal(marginal);
    }
    let dichotomy = parse_dichotomy(&mut r, &doc);
    let diagnostics = parse_diagnostics(&mut r, &doc);
    let audit = parse_audit(&mut r, &doc);
    let output_dir = r.table(&doc, "", "output").and_then(|t| {
        r.keys(t, "output", &["dir"]);
        r.string(t, "output", "dir")
    });

    if !r.errors.is_empty() {
        return Err(ConfigError::Invalid(r.errors));
    }
    Ok(ExperimentConfig {
        name,
        seed,
        environments,
        model: model.expect("checked"),
        targets: targets.expect("checked"),
        trials,
        t_grid,
        marginal,
        simulate,
        dichotomy,
        diagnostics,
        audit,
        output_dir,
        parsed: r.parsed,
        hash: config_hash(&doc),
    })
}

fn parse_base(r: &mut Reader, doc: &Table) -> Option<BaseSystem> {
    let Some(t) = r.table(doc, "", "base") else {
        return Some(BaseSystem::trivial(0));
    };
    r.keys(t, "base", &["kind", "probs", "transition", "window_radius"]);
    let radius = r.uint(t, "base", "window_radius").unwrap_or(0) as usize;
    let kind = r.string(t, "base", "kind").unwrap_or_else(|| "trivial".into());
    let built = match kind.as_str() {
        "trivial" => Ok(BaseSystem::trivial(radius)),
        "iid" => {
            let row = t.get("probs").and_then(|v| r.prob_row(v, "base.probs"));
            if !t.contains_key("probs") {
                r.err("`base.probs` is required for kind = \"iid\"".into());
            }
            match row {
                Some(p) => BaseSystem::iid(p, radius),
                None => return None,
            }
        }
        "markov" => {
            if !t.contains_key("transition") {
                r.err("`base.transition` is required for kind = \"markov\"".into());
            }
            match r.prob_matrix(t, "base", "transition") {
                Some(m) => BaseSystem::new(m, None, radius),
                None => return None,
            }
        }
        other => {
            r.err(format!("`base.kind` = \"{other}\" is not one of trivial, iid, markov"));
            return None;
        }
    };
    built.map_err(|e| r.err(format!("base: {e}"))).ok()
}

fn parse_model(r: &mut Reader, t: &Table, base: BaseSystem) -> Option<MeasureModel> {
    let kind = r.string(t, "model", "kind");
    match kind.as_deref() {
        Some("product") => {
            r.keys(t, "model", &["kind", "probs"]);
            if !t.contains_key("probs") {
                r.err("`model.probs` is required for kind = \"product\"".into());
            }
            let probs = r.prob_matrix(t, "model", "probs")?;
            if probs.len() != base.alphabet_size() {
                r.err(format!(
                    "`model.probs` has {} rows but the base has {} states",
                    probs.len(),
                    base.alphabet_size()
                ));
                return None;
            }
            RandomProductMeasure::new(probs, base).map(Into::into).map_err(|e| r.err(format!("model: {e}"))).ok()
        }
        Some("gibbs") => parse_gibbs(r, t, base),
        Some(other) => {
            r.err(format!("`model.kind` = \"{other}\" is not one of product, gibbs"));
            None
        }
        None => {
            r.err("missing key `model.kind`".into());
            None
        }
    }
}

const GIBBS_KEYS: &[&str] =
    &["kind", "alphabet", "depth", "default", "potential", "forbid", "markov", "probs", "horizon", "tail", "tol"];

fn parse_gibbs(r: &mut Reader, t: &Table, base: BaseSystem) -> Option<MeasureModel> {
    r.keys(t, "model", GIBBS_KEYS);
    let horizon = r.uint(t, "model", "horizon").unwrap_or(hts_core::transfer::DEFAULT_HORIZON as u64) as usize;
    let tail = r.uint(t, "model", "tail").unwrap_or(hts_core::transfer::DEFAULT_TAIL as u64) as usize;
    let tol = r.real(t, "model", "tol").unwrap_or(hts_core::transfer::DEFAULT_TOL);
    let potential = if t.contains_key("markov") {
        if !base.is_trivial() {
            r.err("`model.markov` needs a trivial base".into());
            return None;
        }
        let m = r.prob_matrix(t, "model", "markov")?;
        PotentialModel::markov(&m)
    } else if t.contains_key("probs") {
        let p = r.prob_matrix(t, "model", "probs")?;
        PotentialModel::bernoulli(&p, base)
    } else {
        let (Some(alphabet), Some(depth)) = (r.uint(t, "model", "alphabet"), r.uint(t, "model", "depth")) else {
            r.err("a gibbs model needs `markov`, `probs`, or `alphabet` and `depth`".into());
            return None;
        };
        let (alphabet, depth) = (alphabet as usize, depth as usize);
        if !(2..=16).contains(&alphabet) || !(1..=12).contains(&depth) || (alphabet as f64).powi(depth as i32) > 1e6 {
            r.err(format!("unsupported table size: alphabet {alphabet}, depth {depth}"));
            return None;
        }
        let default = r.real(t, "model", "default").unwrap_or(0.0);
        let states = base.alphabet_size();
        let mut tables = vec![WordTable::constant(alphabet, depth, default); states];
        let mut values: Vec<Vec<f64>> = tables.iter().map(|w| w.values().to_vec()).collect();
        if let Some(v) = t.get("potential") {
            let Value::Array(items) = v else {
                r.err("`model.potential` must be an array of tables".into());
                return None;
            };
            for (i, item) in items.iter().enumerate() {
                let path = format!("model.potential[{i}]");
                let Value::Table(e) = item else {
                    r.err(format!("`{path}` must be a table"));
                    continue;
                };
                r.keys(e, &path, &["base", "word", "value"]);
                let b = r.uint(e, &path, "base").unwrap_or(0) as usize;
                let value = r.real(e, &path, "value");
                let word = r.string(e, &path, "word").and_then(|s| Word::parse(&s, alphabet).ok());
                match (word, value) {
                    (Some(w), Some(x)) if w.len() == depth && b < states => {
                        let idx = tables[b].index(w.as_slice());
                        values[b][idx] = x;
                    }
                    _ => r.err(format!("`{path}` needs base < {states}, a word of length {depth} and a value")),
                }
            }
        }
        for (b, v) in values.into_iter().enumerate() {
            tables[b] = WordTable::from_values(alphabet, depth, v).ok()?;
        }
        let mut allowed = vec![vec![vec![true; alphabet]; alphabet]; states];
        if let Some(v) = t.get("forbid") {
            let Value::Array(items) = v else {
                r.err("`model.forbid` must be an array of tables".into());
                return None;
            };
            for (i, item) in items.iter().enumerate() {
                let path = format!("model.forbid[{i}]");
                let Value::Table(e) = item else {
                    r.err(format!("`{path}` must be a table"));
                    continue;
                };
                r.keys(e, &path, &["base", "from", "to"]);
                let (b, x, y) = (r.uint(e, &path, "base"), r.uint(e, &path, "from"), r.uint(e, &path, "to"));
                match (b, x, y) {
                    (Some(b), Some(x), Some(y)) if (b as usize) < states && (x as usize) < alphabet && (y as usize) < alphabet => {
                        allowed[b as usize][x as usize][y as usize] = false;
                    }
                    _ => r.err(format!("`{path}` needs base, from and to within range")),
                }
            }
        }
        let family = allowed
            .into_iter()
            .map(TransitionMatrix::new)
            .collect::<hts_core::Result<Vec<_>>>()
            .and_then(RandomMatrixFamily::new);
        match family {
            Ok(f) => PotentialModel::new(tables, f, base),
            Err(e) => {
                r.err(format!("model.forbid: {e}"));
                return None;
            }
        }
    };
    potential
        .map(|p| GibbsModel::new(p).with_knobs(horizon, tail, tol).into())
        .map_err(|e| r.err(format!("model: {e}")))
        .ok()
}

fn parse_targets(r: &mut Reader, doc: &Table, alphabet: Option<usize>) -> Option<Vec<TargetSpec>> {
    let Some(Value::Array(items)) = doc.get("targets") else {
        r.err("missing array `targets` (use [[targets]] sections)".into());
        return None;
    };
    if items.is_empty() {
        r.err("`targets` must not be empty".into());
    }
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("targets[{i}]");
        let Value::Table(t) = item else {
            r.err(format!("`{path}` must be a table"));
            continue;
        };
        r.keys(t, &path, &["periodic", "prefix", "expect"]);
        let expect = r.string(t, &path, "expect");
        if let Some(e) = &expect {
            if !["periodic", "non_periodic", "inconclusive"].contains(&e.as_str()) {
                r.err(format!("`{path}.expect` = \"{e}\" is not one of periodic, non_periodic, inconclusive"));
            }
        }
        let Some(a) = alphabet else { continue };
        let point = match (r.string(t, &path, "periodic"), r.string(t, &path, "prefix")) {
            (Some(s), None) => Word::parse(&s, a).and_then(TargetPoint::periodic),
            (None, Some(s)) => Word::parse(&s, a).map(TargetPoint::finite),
            _ => {
                r.err(format!("`{path}` needs exactly one of `periodic` or `prefix`"));
                continue;
            }
        };
        match point {
            Ok(p) => out.push(TargetSpec { label: p.describe(a), point: p, expect }),
            Err(e) => r.err(format!("`{path}`: {e}")),
        }
    }
    Some(out)
}

fn parse_marginal(r: &mut Reader, doc: &Table, seed: u64) -> MarginalMode {
    let Some(t) = r.table(doc, "", "marginal") else {
        return MarginalMode::default();
    };
    r.keys(t, "marginal", &["mode", "cap", "samples"]);
    match r.string(t, "marginal", "mode").as_deref() {
        None | Some("exact") => MarginalMode::Exact { cap: r.uint(t, "marginal", "cap").unwrap_or(20) as usize },
        Some("monte_carlo") => MarginalMode::MonteCarlo {
            samples: r.uint(t, "marginal", "samples").unwrap_or(1000) as usize,
            seed: hts_core::rng::derive_seed(seed, 0x4d43),
        },
        Some(other) => {
            r.err(format!("`marginal.mode` = \"{other}\" is not one of exact, monte_carlo"));
            MarginalMode::default()
        }
    }
}

fn parse_simulate(r: &mut Reader, doc: &Table) -> SimulateConfig {
    let empty = Table::new();
    let t = r.table(doc, "", "simulate").unwrap_or(&empty);
    r.keys(t, "simulate", &["depths", "annealed", "normalization", "ks_tolerance"]);
    let depths = r.uints(t, "simulate", "depths").unwrap_or_else(|| vec![10]);
    if depths.is_empty() || depths.contains(&0) {
        r.err("`simulate.depths` must be non-empty and positive".into());
    }
    let normalization = match r.string(t, "simulate", "normalization").as_deref() {
        None | Some("marginal") => Normalization::default(),
        Some("sample") => Normalization::SampleMeasure,
        Some(other) => {
            r.err(format!("`simulate.normalization` = \"{other}\" is not one of marginal, sample"));
            Normalization::default()
        }
    };
    SimulateConfig {
        depths,
        annealed: r.boolean(t, "simulate", "annealed").unwrap_or(false),
        normalization,
        ks_tolerance: r.real(t, "simulate", "ks_tolerance"),
    }
}

fn parse_dichotomy(r: &mut Reader, doc: &Table) -> DichotomyConfig {
    let empty = Table::new();
    let t = r.table(doc, "", "dichotomy").unwrap_or(&empty);
    r.keys(t, "dichotomy", &["depths", "bias_budget"]);
    DichotomyConfig {
        depths: r.uints(t, "dichotomy", "depths").unwrap_or_else(|| vec![8, 10]),
        bias_budget: r.real(t, "dichotomy", "bias_budget").unwrap_or(0.015),
    }
}

const DIAG_KEYS: &[&str] = &[
    "depths",
    "t",
    "gap",
    "j_max",
    "subsample",
    "epsilon",
    "h1",
    "bound_depths",
    "expectation_depth",
    "recursion_k",
];

fn parse_diagnostics(r: &mut Reader, doc: &Table) -> DiagnosticsConfig {
    let empty = Table::new();
    let t = r.table(doc, "", "diagnostics").unwrap_or(&empty);
    r.keys(t, "diagnostics", DIAG_KEYS);
    let d = DiagnosticsConfig {
        depths: r.uints(t, "diagnostics", "depths").unwrap_or_else(|| vec![8, 11, 14]),
        t: r.real(t, "diagnostics", "t").unwrap_or(1.0),
        gap: r.uint(t, "diagnostics", "gap").map(|g| g as usize),
        j_max: r.uint(t, "diagnostics", "j_max").map(|g| g as usize),
        subsample: r.uint(t, "diagnostics", "subsample").unwrap_or(64) as usize,
        epsilon: r.real(t, "diagnostics", "epsilon").unwrap_or(0.1),
        h1: r.real(t, "diagnostics", "h1"),
        bound_depths: r.uints(t, "diagnostics", "bound_depths").unwrap_or_else(|| vec![2, 4, 6, 8, 10]),
        expectation_depth: r.uint(t, "diagnostics", "expectation_depth").unwrap_or(3) as usize,
        recursion_k: r.uint(t, "diagnostics", "recursion_k").unwrap_or(12) as usize,
    };
    if d.t < 0.0 {
        r.err("`diagnostics.t` must be non-negative".into());
    }
    if d.depths.is_empty() || d.depths.contains(&0) {
        r.err("`diagnostics.depths` must be non-empty and positive".into());
    }
    d
}

fn parse_audit(r: &mut Reader, doc: &Table) -> AuditConfig {
    let empty = Table::new();
    let t = r.table(doc, "", "audit").unwrap_or(&empty);
    r.keys(t, "audit", &["positions", "duality_depth", "decay_gaps", "theta_depth"]);
    AuditConfig {
        positions: r.uint(t, "audit", "positions").unwrap_or(64) as usize,
        duality_depth: r.uint(t, "audit", "duality_depth").unwrap_or(2) as usize,
        decay_gaps: r.uints(t, "audit", "decay_gaps").unwrap_or_else(|| vec![0, 2, 4, 6]),
        theta_depth: r.uint(t, "audit", "theta_depth").unwrap_or(12) as usize,
    }
}
