//! The INI-like experiment configuration.
//!
//! ```text
//! [model]
//! process = "chain2:p=0.25,q=0.25"
//! ell = "one_vee_log"
//!
//! [run]
//! seed = 42
//! ```
//!
//! Keys may also appear before the first section header. Every key has one
//! home section and [`ExperimentConfig::emit`] writes keys there, in a
//! fixed order, so `emit(parse(x))` is a normal form of `x`.

use std::collections::BTreeMap;
use std::fmt;

use stationary_lil::conditions::NormMode;
use stationary_lil::experiments::{RemainderForm, SigmaMode};
use stationary_lil::processes::{ProcessModel, StartState};
use stationary_lil::SlowlyVaryingSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Model,
    Run,
    Numerics,
    Acceptance,
    Output,
}

impl Section {
    const ALL: [Section; 5] = [
        Section::Model,
        Section::Run,
        Section::Numerics,
        Section::Acceptance,
        Section::Output,
    ];

    fn name(self) -> &'static str {
        match self {
            Section::Model => "model",
            Section::Run => "run",
            Section::Numerics => "numerics",
            Section::Acceptance => "acceptance",
            Section::Output => "output",
        }
    }
}

/// Every accepted key, in emission order, with its home section.
const KEYS: &[(&str, Section)] = &[
    ("process", Section::Model),
    ("ell", Section::Model),
    ("seed", Section::Run),
    ("sigma_mode", Section::Run),
    ("sigma_n", Section::Run),
    ("sigma_reps", Section::Run),
    ("N", Section::Numerics),
    ("n_ladder", Section::Numerics),
    ("reps", Section::Numerics),
    ("tolerance", Section::Numerics),
    ("t", Section::Numerics),
    ("epsilon", Section::Numerics),
    ("mode", Section::Numerics),
    ("outer", Section::Numerics),
    ("inner", Section::Numerics),
    ("alpha", Section::Numerics),
    ("delta", Section::Numerics),
    ("quadrature_level", Section::Numerics),
    ("starts", Section::Numerics),
    ("form", Section::Numerics),
    ("window", Section::Acceptance),
    ("endpoint_max", Section::Acceptance),
    ("endpoint_min", Section::Acceptance),
    ("integral_max", Section::Acceptance),
    ("ks_max", Section::Acceptance),
    ("prefix", Section::Output),
];

/// One problem in a config, located by line where possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// All problems found in a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Line numbers of the keys as they were read; ignored by equality.
#[derive(Debug, Clone, Default)]
pub struct KeyLines(BTreeMap<&'static str, usize>);

impl PartialEq for KeyLines {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// A validated configuration. Unset keys fall back to per-command defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub process: Option<String>,
    pub ell: Option<String>,
    pub seed: Option<u64>,
    pub sigma_mode: Option<SigmaMode>,
    pub sigma_n: Option<usize>,
    pub sigma_reps: Option<usize>,
    pub n: Option<u64>,
    pub n_ladder: Option<Vec<u64>>,
    pub reps: Option<usize>,
    pub tolerance: Option<f64>,
    pub t: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub mode: Option<NormMode>,
    pub outer: Option<usize>,
    pub inner: Option<usize>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub quadrature_level: Option<u32>,
    pub starts: Option<Vec<String>>,
    pub form: Option<RemainderForm>,
    pub window: Option<(f64, f64)>,
    pub endpoint_max: Option<f64>,
    pub endpoint_min: Option<f64>,
    pub integral_max: Option<f64>,
    pub ks_max: Option<f64>,
    pub prefix: Option<String>,
    pub lines: KeyLines,
}

fn unquote(raw: &str) -> Result<&str, String> {
    let raw = raw.trim();
    if let Some(rest) = raw.strip_prefix('"') {
        let inner = rest.strip_suffix('"').ok_or("unterminated string")?;
        if inner.contains('"') {
            return Err("stray quote inside string".into());
        }
        Ok(inner)
    } else {
        Ok(raw)
    }
}

fn int(raw: &str) -> Result<u64, String> {
    let s = raw.replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= 9_007_199_254_740_992.0 => Ok(x as u64),
        _ => Err(format!("expected a nonnegative integer, got '{raw}'")),
    }
}

fn real(raw: &str) -> Result<f64, String> {
    match raw.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got '{raw}'")),
    }
}

fn list<T>(raw: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let v: Vec<T> = raw.split(',').map(|p| item(p.trim())).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

fn positive(x: u64) -> Result<u64, String> {
    if x == 0 {
        Err("must be at least 1".into())
    } else {
        Ok(x)
    }
}

fn positive_real(x: f64) -> Result<f64, String> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

/// Parses a start descriptor: `stationary`, `state:i`, `dyadic:0x…` or
/// `w0:x` with x an exact 64-bit binary fraction in [0, 1).
pub fn parse_start(s: &str) -> Result<StartState, String> {
    let s = s.trim();
    if s == "stationary" {
        return Ok(StartState::Stationary);
    }
    let (kind, arg) = s.split_once(':').ok_or_else(|| format!("unknown start '{s}'"))?;
    match kind {
        "state" => arg
            .parse()
            .map(StartState::Chain)
            .map_err(|_| format!("bad state index '{arg}'")),
        "dyadic" => {
            let hex = arg
                .strip_prefix("0x")
                .ok_or_else(|| format!("dyadic start needs 0x…, got '{arg}'"))?;
            u64::from_str_radix(hex, 16)
                .map(StartState::Dyadic)
                .map_err(|_| format!("bad hex '{arg}'"))
        }
        "w0" => {
            let w = real(arg)?;
            if !(0.0..1.0).contains(&w) {
                return Err(format!("w0 must lie in [0, 1), got {w}"));
            }
            let scaled = w * 2f64.powi(64);
            if scaled.fract() != 0.0 {
                return Err(format!("w0 = {w} is not a 64-bit binary fraction"));
            }
            Ok(StartState::Dyadic(scaled as u64))
        }
        _ => Err(format!("unknown start '{s}'")),
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn join<T>(v: &[T], f: fn(&T) -> String) -> String {
    v.iter().map(f).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let v = unquote(raw)?;
        match key {
            "process" => {
                v.parse::<ProcessModel>().map_err(|e| e.to_string())?;
                self.process = Some(v.to_string());
            }
            "ell" => {
                v.parse::<SlowlyVaryingSpec>().map_err(|e| e.to_string())?;
                self.ell = Some(v.to_string());
            }
            "seed" => self.seed = Some(int(v)?),
            "sigma_mode" => {
                self.sigma_mode = Some(match v {
                    "analytic" => SigmaMode::Analytic,
                    "estimated" => SigmaMode::Estimated,
                    _ => return Err(format!("expected analytic or estimated, got '{v}'")),
                })
            }
            "sigma_n" => self.sigma_n = Some(positive(int(v)?)? as usize),
            "sigma_reps" => self.sigma_reps = Some(positive(int(v)?)? as usize),
            "N" => self.n = Some(positive(int(v)?)?),
            "n_ladder" => {
                let l = list(v, int)?;
                if l.windows(2).any(|w| w[0] >= w[1]) || l[0] == 0 {
                    return Err("must be positive and strictly increasing".into());
                }
                self.n_ladder = Some(l);
            }
            "reps" => self.reps = Some(positive(int(v)?)? as usize),
            "tolerance" => self.tolerance = Some(positive_real(real(v)?)?),
            "t" => {
                let l = list(v, real)?;
                if l.contains(&0.0) {
                    return Err("t = 0 is not allowed".into());
                }
                self.t = Some(l);
            }
            "epsilon" => self.epsilon = Some(positive_real(real(v)?)?),
            "mode" => {
                self.mode = Some(match v {
                    "exact" => NormMode::Exact,
                    "monte_carlo" => NormMode::MonteCarlo,
                    _ => return Err(format!("expected exact or monte_carlo, got '{v}'")),
                })
            }
            "outer" => self.outer = Some(positive(int(v)?)? as usize),
            "inner" => self.inner = Some(positive(int(v)?)? as usize),
            "alpha" => {
                let a = real(v)?;
                if a < 0.0 {
                    return Err(format!("must be nonnegative, got {a}"));
                }
                self.alpha = Some(a);
            }
            "delta" => self.delta = Some(positive_real(real(v)?)?),
            "quadrature_level" => {
                let l = int(v)?;
                if !(1..=1000).contains(&l) {
                    return Err(format!("must lie in 1..=1000, got {l}"));
                }
                self.quadrature_level = Some(l as u32);
            }
            "starts" => {
                let l: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                for s in &l {
                    parse_start(s)?;
                }
                self.starts = Some(l);
            }
            "form" => {
                self.form = Some(match v {
                    "resolvent" => RemainderForm::Resolvent,
                    "limit" => RemainderForm::Limit,
                    _ => return Err(format!("expected resolvent or limit, got '{v}'")),
                })
            }
            "window" => {
                let l = list(v, real)?;
                if l.len() != 2 || l[0] >= l[1] {
                    return Err("expected 'lo, hi' with lo < hi".into());
                }
                self.window = Some((l[0], l[1]));
            }
            "endpoint_max" => self.endpoint_max = Some(positive_real(real(v)?)?),
            "endpoint_min" => self.endpoint_min = Some(positive_real(real(v)?)?),
            "integral_max" => self.integral_max = Some(positive_real(real(v)?)?),
            "ks_max" => self.ks_max = Some(positive_real(real(v)?)?),
            "prefix" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err("must be a non-empty file stem".into());
                }
                self.prefix = Some(v.to_string());
            }
            _ => unreachable!("key table and setter disagree on '{key}'"),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<String> {
        let q = |s: &Option<String>| s.as_ref().map(|v| format!("\"{v}\""));
        match key {
            "process" => q(&self.process),
            "ell" => q(&self.ell),
            "seed" => self.seed.map(|v| v.to_string()),
            "sigma_mode" => self.sigma_mode.map(|m| {
                match m {
                    SigmaMode::Analytic => "analytic",
                    SigmaMode::Estimated => "estimated",
                }
                .to_string()
            }),
            "sigma_n" => self.sigma_n.map(|v| v.to_string()),
            "sigma_reps" => self.sigma_reps.map(|v| v.to_string()),
            "N" => self.n.map(|v| v.to_string()),
            "n_ladder" => self.n_ladder.as_ref().map(|l| join(l, |x| x.to_string())),
            "reps" => self.reps.map(|v| v.to_string()),
            "tolerance" => self.tolerance.map(fmt_real),
            "t" => self.t.as_ref().map(|l| join(l, |x| fmt_real(*x))),
            "epsilon" => self.epsilon.map(fmt_real),
            "mode" => self.mode.map(|m| {
                match m {
                    NormMode::Exact => "exact",
                    NormMode::MonteCarlo => "monte_carlo",
                }
                .to_string()
            }),
            "outer" => self.outer.map(|v| v.to_string()),
            "inner" => self.inner.map(|v| v.to_string()),
            "alpha" => self.alpha.map(fmt_real),
            "delta" => self.delta.map(fmt_real),
            "quadrature_level" => self.quadrature_level.map(|v| v.to_string()),
            "starts" => self.starts.as_ref().map(|l| l.join(", ")),
            "form" => self.form.map(|f| {
                match f {
                    RemainderForm::Resolvent => "resolvent",
                    RemainderForm::Limit => "limit",
                }
                .to_string()
            }),
            "window" => self.window.map(|(a, b)| format!("{}, {}", fmt_real(a), fmt_real(b))),
            "endpoint_max" => self.endpoint_max.map(fmt_real),
            "endpoint_min" => self.endpoint_min.map(fmt_real),
            "integral_max" => self.integral_max.map(fmt_real),
            "ks_max" => self.ks_max.map(fmt_real),
            "prefix" => q(&self.prefix),
            _ => None,
        }
    }

    /// Line on which `key` was set, if it came from text.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.0.get(key).copied()
    }

    /// Canonical text: sections in fixed order, one key per line.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for section in Section::ALL {
            let entries: Vec<(&str, String)> = KEYS
                .iter()
                .filter(|(_, s)| *s == section)
                .filter_map(|(k, _)| self.get(k).map(|v| (*k, v)))
                .collect();
            if entries.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{}]\n", section.name()));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut cfg = ExperimentConfig::default();
    let mut errors = Vec::new();
    let mut section: Option<Section> = None;
    let mut err = |line: usize, key: Option<&str>, message: String| {
        errors.push(ConfigError {
            line: Some(line),
            key: key.map(str::to_string),
            message,
        })
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
            continue;
        }
        if let Some(name) = l.strip_prefix('[') {
            match name
                .strip_suffix(']')
                .and_then(|n| Section::ALL.into_iter().find(|s| s.name() == n.trim()))
            {
                Some(s) => section = Some(s),
                None => err(line, None, format!("unknown section header '{l}'")),
            }
            continue;
        }
        let Some((key, value)) = l.split_once('=') else {
            err(line, None, format!("expected 'key = value', got '{l}'"));
            continue;
        };
        let key = key.trim();
        let Some(&(name, home)) = KEYS.iter().find(|(k, _)| *k == key) else {
            err(line, Some(key), "unknown key".into());
            continue;
        };
        if let Some(s) = section {
            if s != home {
                err(
                    line,
                    Some(key),
                    format!("belongs in [{}], not [{}]", home.name(), s.name()),
                );
                continue;
            }
        }
        if let Some(prev) = cfg.lines.0.get(name) {
            err(line, Some(key), format!("duplicate key (first set on line {prev})"));
            continue;
        }
        match cfg.set(name, value) {
            Ok(()) => {
                cfg.lines.0.insert(name, line);
            }
            Err(m) => err(line, Some(key), m),
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

/// `emit(parse(text))`.
pub fn normalize(text: &str) -> Result<String, ConfigErrors> {
    parse_config(text).map(|c| c.emit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_example() {
        let c = parse_config("process = \"iid:normal\"\nell = \"one_vee_log\"\nN = 1000000\nreps = 32\nseed = 42\n")
            .unwrap();
        assert_eq!(c.n, Some(1_000_000));
        assert_eq!(c.line_of("seed"), Some(5));
        let again = parse_config(&c.emit()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.emit(), c.emit());
    }

    #[test]
    fn every_error_is_reported() {
        let e = parse_config(
            "[model]\nprocess = \"chain2:p=1.5,q=0.25\"\nfoo = 1\n[numerics]\nseed = 3\nreps = x\n[bogus]\n",
        )
        .unwrap_err();
        let lines: Vec<_> = e.0.iter().map(|x| x.line.unwrap()).collect();
        assert_eq!(lines, vec![2, 3, 5, 6, 7]);
        assert_eq!(e.0[0].key.as_deref(), Some("process"));
    }

    #[test]
    fn starts() {
        assert_eq!(parse_start("w0:0.5"), Ok(StartState::Dyadic(1 << 63)));
        assert_eq!(
            parse_start("dyadic:0x8000000000000000"),
            Ok(StartState::Dyadic(1 << 63))
        );
        assert_eq!(parse_start("state:1"), Ok(StartState::Chain(1)));
        assert!(parse_start("w0:1e-30").is_err());
        assert!(parse_start("w0:1").is_err());
    }

    #[test]
    fn reals_round_trip() {
        let c = parse_config("t = 0.001, 1e-4, 0.1\ntolerance = 1e-10\nwindow = 0.85, 1.1\n").unwrap();
        assert_eq!(parse_config(&c.emit()).unwrap(), c);
    }
}
