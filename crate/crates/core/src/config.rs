//! Experiment configuration as a sectioned `key = value` text file.
//!
//! ```text
//! [experiment]
//! zeta = 100
//! case = a
//!
//! [ggn]
//! tau = 5
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are rejected, and so are
//! repeated keys. [`ExperimentConfig::to_text`] writes every key, and its
//! SHA-256 names the configuration in manifests.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::baseline::NtConfig;
use crate::driver::{BetaTrigger, GgnConfig};
use crate::estimators::WeightMode;
use crate::problem::{ObservationKind, SyntheticCase};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    Duplicate { line: usize, section: String, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
}

/// Which table a sweep reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Varying `ζ` at fixed noise.
    Zeta,
    /// Varying noise at fixed `ζ`.
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub sweep: SweepKind,
    pub zetas: Vec<f64>,
    pub noises: Vec<f64>,
    /// Also run the reference solver and report the time reduction.
    pub baseline: bool,
    pub threads: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            sweep: SweepKind::Zeta,
            zetas: vec![1.0, 10.0, 100.0, 500.0, 1000.0],
            noises: vec![0.005, 0.01, 0.02, 0.04, 0.08],
            baseline: true,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: SyntheticCase,
    pub obs: ObservationKind,
    /// Lattice size used when `obs` is point data.
    pub points_per_side: usize,
    pub zeta: f64,
    pub noise: f64,
    pub seed: u64,
    pub fine_levels: u8,
    pub out: PathBuf,
    pub ggn: GgnConfig,
    pub nt: NtConfig,
    pub table: TableConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: SyntheticCase::A,
            obs: ObservationKind::Point { n_side: 9 },
            points_per_side: 9,
            zeta: 100.0,
            noise: 0.01,
            seed: 1,
            fine_levels: 8,
            out: PathBuf::from("out"),
            ggn: GgnConfig::default(),
            nt: NtConfig::default(),
            table: TableConfig::default(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(u8, u64, usize, bool);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Option<Self> {
        s.parse().ok().filter(|x: &f64| x.is_finite())
    }
    fn render(&self) -> String {
        // shortest representation that reads back to the same value
        format!("{self:?}")
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Option<Self> {
        (!s.is_empty()).then(|| PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> Option<Self> {
        if s.trim().is_empty() {
            return Some(Vec::new());
        }
        s.split(',').map(|t| f64::parse_value(t.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(|x| x.render()).collect::<Vec<_>>().join(", ")
    }
}

macro_rules! labelled_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                <$t>::parse(s)
            }
            fn render(&self) -> String {
                self.label().to_string()
            }
        }
    )*};
}
labelled_value!(WeightMode, BetaTrigger, SyntheticCase);

impl ConfigValue for SweepKind {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "zeta" => Some(SweepKind::Zeta),
            "noise" => Some(SweepKind::Noise),
            _ => None,
        }
    }
    fn render(&self) -> String {
        match self {
            SweepKind::Zeta => "zeta",
            SweepKind::Noise => "noise",
        }
        .to_string()
    }
}

/// Parses an observation label; point data keeps its lattice size.
pub fn parse_obs(s: &str, n_side: usize) -> Option<ObservationKind> {
    match s {
        "point" => Some(ObservationKind::Point { n_side }),
        "l2" => Some(ObservationKind::L2),
        _ => None,
    }
}

/// Generates the key table of one section: parse by key, and render all keys.
macro_rules! section {
    ($parse:ident, $render:ident, $ty:ty { $($key:ident $(. $sub:ident)*),* $(,)? }) => {
        fn $parse(c: &mut $ty, key: &str, value: &str) -> Option<Option<()>> {
            match key {
                $(stringify!($key) => Some(ConfigValue::parse_value(value).map(|v| c.$key $(.$sub)* = v)),)*
                _ => None,
            }
        }
        fn $render(c: &$ty, out: &mut String) {
            $(out.push_str(&format!("{} = {}\n", stringify!($key), c.$key $(.$sub)*.render()));)*
        }
    };
}

section!(parse_ggn, render_ggn, GgnConfig {
    tau, tau_beta, tau_beta_tilde, theta_lo, theta_hi, theta_tilde, c_tc, c2, c3, beta0,
    coarse_levels, max_level, max_outer, max_refinements, marking_fraction,
    max_beta_expansions, max_beta_updates, beta_min, beta_max, weights, trigger,
});

section!(parse_nt, render_nt, NtConfig {
    tau_tilde, tau_lo, tau, tau_hi, c1, c2, beta0, coarse_levels, max_level, gn_tol, max_gn,
    max_backtracks, max_beta_updates, max_refinements, marking_fraction, beta_min, beta_max, weights,
});

section!(parse_table, render_table, TableConfig { sweep, zetas, noises, baseline, threads });

fn parse_forward(c: &mut NtConfig, key: &str, value: &str) -> Option<Option<()>> {
    match key {
        "forward_tol" => Some(f64::parse_value(value).map(|v| c.forward.tol = v)),
        "forward_max_steps" => Some(usize::parse_value(value).map(|v| c.forward.max_steps = v)),
        _ => None,
    }
}

// `obs` depends on `points_per_side`, so it is resolved after all lines are read
fn parse_experiment(c: &mut ExperimentConfig, obs: &mut Option<String>, key: &str, value: &str) -> Option<Option<()>> {
    match key {
        "case" => Some(SyntheticCase::parse_value(value).map(|v| c.case = v)),
        "obs" => Some(parse_obs(value, 1).map(|_| *obs = Some(value.to_string()))),
        "points_per_side" => Some(usize::parse_value(value).filter(|&n| n > 0).map(|v| c.points_per_side = v)),
        "zeta" => Some(f64::parse_value(value).map(|v| c.zeta = v)),
        "noise" => Some(f64::parse_value(value).map(|v| c.noise = v)),
        "seed" => Some(u64::parse_value(value).map(|v| c.seed = v)),
        "fine_levels" => Some(u8::parse_value(value).map(|v| c.fine_levels = v)),
        "out" => Some(PathBuf::parse_value(value).map(|v| c.out = v)),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ExperimentConfig::default();
        let mut obs: Option<String> = None;
        let mut section: Option<String> = None;
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, msg: "unterminated section header".into() })?
                    .trim();
                if !matches!(name, "experiment" | "ggn" | "nt" | "table") {
                    return Err(ConfigError::UnknownSection { line, section: name.to_string() });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::Syntax { line, msg: "expected `key = value`".into() })?;
            let sec = section
                .clone()
                .ok_or_else(|| ConfigError::Syntax { line, msg: "key outside of a section".into() })?;
            let hit = match sec.as_str() {
                "experiment" => parse_experiment(&mut c, &mut obs, key, value),
                "ggn" => parse_ggn(&mut c.ggn, key, value),
                "nt" => parse_nt(&mut c.nt, key, value).or_else(|| parse_forward(&mut c.nt, key, value)),
                _ => parse_table(&mut c.table, key, value),
            };
            match hit {
                None => return Err(ConfigError::UnknownKey { line, section: sec, key: key.to_string() }),
                Some(None) => {
                    return Err(ConfigError::Value { line, key: key.to_string(), value: value.to_string() })
                }
                Some(Some(())) => {}
            }
            if !seen.insert((sec.clone(), key.to_string())) {
                return Err(ConfigError::Duplicate { line, section: sec, key: key.to_string() });
            }
        }
        c.obs = match obs.as_deref() {
            Some(s) => parse_obs(s, c.points_per_side).expect("checked while reading"),
            None => ObservationKind::Point { n_side: c.points_per_side },
        };
        Ok(c)
    }

    /// Sets the observation kind, keeping `points_per_side` consistent.
    pub fn set_obs(&mut self, label: &str) -> bool {
        match parse_obs(label, self.points_per_side) {
            Some(o) => {
                self.obs = o;
                true
            }
            None => false,
        }
    }

    /// Every key in canonical order; parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::from("[experiment]\n");
        s.push_str(&format!("case = {}\n", self.case.render()));
        s.push_str(&format!("obs = {}\n", self.obs.label()));
        s.push_str(&format!("points_per_side = {}\n", self.points_per_side));
        s.push_str(&format!("zeta = {}\n", self.zeta.render()));
        s.push_str(&format!("noise = {}\n", self.noise.render()));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("fine_levels = {}\n", self.fine_levels));
        s.push_str(&format!("out = {}\n", self.out.render()));
        s.push_str("\n[ggn]\n");
        render_ggn(&self.ggn, &mut s);
        s.push_str("\n[nt]\n");
        render_nt(&self.nt, &mut s);
        s.push_str(&format!("forward_tol = {}\n", self.nt.forward.tol.render()));
        s.push_str(&format!("forward_max_steps = {}\n", self.nt.forward.max_steps));
        s.push_str("\n[table]\n");
        render_table(&self.table, &mut s);
        s
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
