//! Flat `key = value` scenario files with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MainTheorem,
    CalibrateLambdas,
    ClashTime,
    SurvivingTypes,
    Duality,
    GrowthConcentration,
    OracleValidation,
    LocalLimit,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::MainTheorem,
        Scenario::CalibrateLambdas,
        Scenario::ClashTime,
        Scenario::SurvivingTypes,
        Scenario::Duality,
        Scenario::GrowthConcentration,
        Scenario::OracleValidation,
        Scenario::LocalLimit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::MainTheorem => "main_theorem",
            Scenario::CalibrateLambdas => "calibrate_lambdas",
            Scenario::ClashTime => "clash_time",
            Scenario::SurvivingTypes => "surviving_types",
            Scenario::Duality => "duality",
            Scenario::GrowthConcentration => "growth_concentration",
            Scenario::OracleValidation => "oracle_validation",
            Scenario::LocalLimit => "local_limit",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| invalid(format!("unknown scenario '{s}'")))
    }
}

const KEYS: &[&str] = &[
    "scenario",
    "d",
    "lambda",
    "lambda_grid",
    "lambda_weak",
    "lambda_strong",
    "n_grid",
    "epsilon",
    "horizon",
    "replicas",
    "seed",
    "threads",
    "out_dir",
    "t_cond",
    "certify_size",
    "max_attempts",
    "c_horizon",
    "c_replicas",
    "k",
    "t",
    "t_grid",
    "delta",
    "radius",
    "node_budget",
];

/// Validated scenario configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub d: usize,
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub lambda_weak: Option<f64>,
    pub lambda_strong: Option<f64>,
    pub n_grid: Vec<usize>,
    pub epsilon: f64,
    pub horizon: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub t_cond: Option<f64>,
    pub certify_size: Option<usize>,
    pub max_attempts: Option<usize>,
    pub c_horizon: Option<f64>,
    pub c_replicas: usize,
    pub k: Option<usize>,
    pub t: Option<f64>,
    pub t_grid: Vec<f64>,
    pub delta: f64,
    pub radius: usize,
    pub node_budget: usize,
    /// Key/value pairs exactly as read, for the manifest.
    pub echo: BTreeMap<String, String>,
}

impl ScenarioConfig {
    /// Defaults for `scenario` with nothing overridden.
    pub fn defaults(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            d: 3,
            lambda: None,
            lambda_grid: Vec::new(),
            lambda_weak: None,
            lambda_strong: None,
            n_grid: vec![1_000, 10_000, 100_000, 300_000],
            epsilon: 0.5,
            horizon: None,
            replicas: 1000,
            seed: 1,
            threads: 1,
            out_dir: PathBuf::from("out"),
            t_cond: None,
            certify_size: None,
            max_attempts: None,
            c_horizon: None,
            c_replicas: 2000,
            k: None,
            t: None,
            t_grid: Vec::new(),
            delta: 0.5,
            radius: 3,
            node_budget: crate::tree::DEFAULT_NODE_BUDGET,
            echo: BTreeMap::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses and validates a config file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut echo = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown key '{k}'"),
                });
            }
            if echo.insert(k.clone(), v.clone()).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key '{k}'"),
                });
            }
            entries.push((line_no, k, v));
        }
        let scenario_line = entries
            .iter()
            .find(|(_, k, _)| k == "scenario")
            .ok_or_else(|| invalid("missing required key 'scenario'"))?;
        let scenario: Scenario = scenario_line.2.parse().map_err(|e: Error| Error::Parse {
            line: scenario_line.0,
            msg: e.to_string(),
        })?;
        let mut c = ScenarioConfig::defaults(scenario);
        for (line, k, v) in &entries {
            c.set(k, v).map_err(|msg| Error::Parse { line: *line, msg })?;
        }
        c.echo = echo;
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}' for '{key}'"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        // Integers may be written as 1e5 or 3e5.
        fn count(key: &str, v: &str) -> std::result::Result<usize, String> {
            if let Ok(x) = v.parse::<usize>() {
                return Ok(x);
            }
            let f: f64 = num(key, v)?;
            if f >= 0.0 && f.fract() == 0.0 && f < 1e15 {
                Ok(f as usize)
            } else {
                Err(format!("'{v}' is not a non-negative integer for '{key}'"))
            }
        }
        match key {
            "scenario" => {}
            "d" => self.d = count(key, v)?,
            "lambda" => self.lambda = Some(num(key, v)?),
            "lambda_grid" => self.lambda_grid = list(key, v)?,
            "lambda_weak" => self.lambda_weak = Some(num(key, v)?),
            "lambda_strong" => self.lambda_strong = Some(num(key, v)?),
            "n_grid" => {
                self.n_grid = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| count(key, s))
                    .collect::<std::result::Result<_, _>>()?
            }
            "epsilon" => self.epsilon = num(key, v)?,
            "horizon" => self.horizon = Some(num(key, v)?),
            "replicas" => self.replicas = count(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "threads" => self.threads = count(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "t_cond" => self.t_cond = Some(num(key, v)?),
            "certify_size" => self.certify_size = Some(count(key, v)?),
            "max_attempts" => self.max_attempts = Some(count(key, v)?),
            "c_horizon" => self.c_horizon = Some(num(key, v)?),
            "c_replicas" => self.c_replicas = count(key, v)?,
            "k" => self.k = Some(count(key, v)?),
            "t" => self.t = Some(num(key, v)?),
            "t_grid" => self.t_grid = list(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "radius" => self.radius = count(key, v)?,
            "node_budget" => self.node_budget = count(key, v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Range checks, plus the keys each scenario needs.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, x: Option<f64>| match x {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(invalid(format!("{name} must be positive, got {v}"))),
            _ => Ok(()),
        };
        let nonneg = |name: &str, x: Option<f64>| match x {
            Some(v) if !(v >= 0.0 && v.is_finite()) => Err(invalid(format!("{name} must be >= 0, got {v}"))),
            _ => Ok(()),
        };
        if self.d < 3 {
            return Err(invalid(format!("d must be at least 3, got {}", self.d)));
        }
        nonneg("lambda", self.lambda)?;
        nonneg("lambda_weak", self.lambda_weak)?;
        nonneg("lambda_strong", self.lambda_strong)?;
        for &l in &self.lambda_grid {
            nonneg("lambda_grid entry", Some(l))?;
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("lambda_grid must be strictly increasing"));
        }
        for &n in &self.n_grid {
            if n == 0 || (n * self.d) % 2 != 0 {
                return Err(invalid(format!("N = {n} with d = {} needs N*d even and N > 0", self.d)));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        pos("horizon", self.horizon)?;
        pos("t_cond", self.t_cond)?;
        pos("c_horizon", self.c_horizon)?;
        nonneg("t", self.t)?;
        if self.replicas == 0 || self.c_replicas == 0 {
            return Err(invalid("replicas must be positive"));
        }
        if self.threads == 0 {
            return Err(invalid("threads must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.t_grid.iter().any(|t| !(*t >= 0.0)) || self.t_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("t_grid must be sorted and non-negative"));
        }
        if self.node_budget == 0 {
            return Err(invalid("node_budget must be positive"));
        }
        if self.k == Some(0) {
            return Err(invalid("k must be positive"));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(invalid(format!("scenario {} requires {what}", self.scenario)))
            }
        };
        match self.scenario {
            Scenario::MainTheorem => need(
                self.lambda_weak.is_some() || self.lambda_strong.is_some(),
                "lambda_weak and/or lambda_strong",
            )?,
            Scenario::CalibrateLambdas => need(!self.lambda_grid.is_empty(), "lambda_grid")?,
            Scenario::ClashTime | Scenario::SurvivingTypes | Scenario::GrowthConcentration => {
                need(self.lambda.is_some(), "lambda")?
            }
            Scenario::Duality | Scenario::OracleValidation | Scenario::LocalLimit => {}
        }
        if let (Some(k), Some(h)) = (self.k, self.horizon) {
            if self.scenario == Scenario::SurvivingTypes && h <= k as f64 {
                return Err(invalid(format!("horizon {h} must exceed k = {k}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = ScenarioConfig::parse(
            "# weak and strong\nscenario = main_theorem\nlambda_weak=0.7 # trailing\nn_grid = 1e3, 10000\n\nseed=9\n",
        )
        .unwrap();
        assert_eq!(c.scenario, Scenario::MainTheorem);
        assert_eq!(c.n_grid, vec![1000, 10000]);
        assert_eq!(c.lambda_weak, Some(0.7));
        assert_eq!(c.seed, 9);
        assert_eq!(c.echo["lambda_weak"], "0.7");
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            "lambda = 1\n",
            "scenario = nope\n",
            "scenario = duality\nfoo = 1\n",
            "scenario = duality\nd = 3\nd = 4\n",
            "scenario = duality\njust words\n",
            "scenario = clash_time\n",
            "scenario = clash_time\nlambda = -1\n",
            "scenario = duality\nd = 2\n",
            "scenario = duality\nd = 3\nn_grid = 101\n",
            "scenario = main_theorem\nlambda_weak = 1\nepsilon = 1.5\n",
            "scenario = surviving_types\nlambda = 1\nk = 50\nhorizon = 40\n",
        ] {
            let e = ScenarioConfig::parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad:?} -> {e}");
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match ScenarioConfig::parse("scenario = duality\n\nreplicas = many\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
