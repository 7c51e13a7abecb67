//! Experiment configuration: command-line flags layered over an optional
//! JSON file, resolved into fully specified settings before anything runs.

use clap::Args;
use massgame::mass_seq::MassSpec;
use massgame::montecarlo::{SumMode, Tolerance};
use massgame::rv_family::FamilySpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;

/// Raised for anything that prevents a run from starting.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Reads a config file, or the `config` section of a previous report, and
/// checks its schema version and command.
pub fn read_file(path: &Path, command: &str) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let mut obj = match value {
        Value::Object(mut o) if !o.contains_key("schema_version") && o.contains_key("config") => match o.remove("config") {
            Some(Value::Object(c)) => c,
            _ => return Err(bad("report 'config' section is not an object")),
        },
        Value::Object(o) => o,
        _ => return Err(bad("config file must hold a JSON object")),
    };
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(bad(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(bad("config file lacks schema_version")),
    }
    match obj.remove("command") {
        Some(Value::String(c)) if c == command => {}
        Some(c) => return Err(bad(format!("config file is for command {c}, not '{command}'"))),
        None => {}
    }
    Ok(obj)
}

/// `flags > file > default`: flags that were given replace file keys, and
/// unknown keys are rejected.
pub fn layer<T: Serialize + DeserializeOwned>(flags: &T, file: Option<Map<String, Value>>) -> Result<T> {
    let mut merged = file.unwrap_or_default();
    match serde_json::to_value(flags).map_err(|e| bad(e.to_string()))? {
        Value::Object(f) => merged.extend(f),
        _ => unreachable!("argument structs serialize to objects"),
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| bad(format!("invalid configuration: {e}")))
}

fn mass(s: &Option<String>, seed: Option<u64>) -> Result<MassSpec> {
    let s = s.as_deref().ok_or_else(|| bad("a mass sequence is required (--mass)"))?;
    let spec: MassSpec = s.parse().map_err(|e| bad(format!("{e}")))?;
    let spec = match seed {
        Some(seed) => spec.with_default_seed(seed),
        None => spec,
    };
    spec.validate().map_err(|e| bad(format!("{e}")))?;
    Ok(spec)
}

fn family(s: &Option<String>) -> Result<FamilySpec> {
    let s = s.as_deref().ok_or_else(|| bad("a family is required (--family)"))?;
    s.parse().map_err(|e| bad(format!("{e}")))
}

fn seed(s: Option<u64>) -> Result<u64> {
    s.ok_or_else(|| bad("a seed is required (--seed)"))
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(bad(format!("{name} must be positive and finite, got {x}")))
    }
}

macro_rules! partial {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

partial!(
    /// Replicated simulation of gradual sums.
    SimulateArgs {
        /// Mass sequence, e.g. `const:1`, `example_cesar`, `iid:uniform:1,2`
        #[arg(long)]
        mass: String,
        /// Path family, e.g. `rw_bounded`, `biased`, `constant:0`
        #[arg(long)]
        family: String,
        /// Last grid time
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        grid_start: f64,
        #[arg(long)]
        grid_ratio: f64,
        #[arg(long = "reps", alias = "replications")]
        replications: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
        /// Tail starts for the strong probe
        #[arg(long, value_delimiter = ',')]
        n0: Vec<f64>,
        /// `blocked` or `per_increment`
        #[arg(long)]
        mode: String,
        #[arg(skip)]
        tolerance: Tolerance,
    }
);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulate {
    pub mass: String,
    pub family: String,
    pub horizon: f64,
    pub grid_start: f64,
    pub grid_ratio: f64,
    pub replications: u64,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub n0: Vec<f64>,
    pub mode: SumMode,
    pub tolerance: Tolerance,
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<Simulate> {
        let seed = seed(self.seed)?;
        let mass = mass(&self.mass, Some(seed))?;
        let family = family(&self.family)?;
        family.build(seed).map_err(|e| bad(format!("{e}")))?;
        let horizon = positive("horizon", self.horizon.unwrap_or(1e6))?;
        let grid_start = positive("grid_start", self.grid_start.unwrap_or(1.0))?;
        let grid_ratio = self.grid_ratio.unwrap_or(1.5);
        let n0 = self.n0.unwrap_or_else(|| [1e-3, 1e-2, 1e-1].iter().map(|f| horizon * f).filter(|&x| x >= grid_start).collect());
        let mode = match self.mode.as_deref() {
            None | Some("blocked") => SumMode::Blocked,
            Some("per_increment") => SumMode::PerIncrement,
            Some(other) => return Err(bad(format!("unknown mode '{other}' (blocked or per_increment)"))),
        };
        let s = Simulate {
            mass: mass.to_string(),
            family: family.to_string(),
            horizon,
            grid_start,
            grid_ratio,
            replications: self.replications.unwrap_or(100),
            seed,
            epsilons: self.epsilons.unwrap_or_else(|| vec![0.05]),
            n0,
            mode,
            tolerance: self.tolerance.unwrap_or_default(),
        };
        s.sim_config()?;
        Ok(s)
    }
}

impl Simulate {
    pub fn sim_config(&self) -> Result<massgame::montecarlo::SimConfig> {
        use massgame::montecarlo::{GridSpec, SimConfig};
        let grid = GridSpec::Geometric { start: self.grid_start, ratio: self.grid_ratio, end: self.horizon };
        let cfg = SimConfig {
            mass: self.mass.parse().map_err(|e| bad(format!("{e}")))?,
            family: self.family.parse().map_err(|e| bad(format!("{e}")))?,
            grid,
            replications: self.replications,
            seed: self.seed,
            epsilons: self.epsilons.clone(),
            tolerance: self.tolerance,
            mode: self.mode,
        };
        cfg.validate().map_err(|e| bad(format!("{e}")))?;
        if self.n0.is_empty() || self.n0.windows(2).any(|w| w[0] >= w[1]) || self.n0.iter().any(|&x| !(x > 0.0 && x <= self.horizon)) {
            return Err(bad("n0 must be a nonempty increasing list within (0, horizon]"));
        }
        Ok(cfg)
    }
}

partial!(
    /// Classification of a mass sequence by its empirical measures.
    ClassifyArgs {
        #[arg(long)]
        mass: String,
        /// Time horizon
        #[arg(long)]
        horizon: f64,
        /// Horizon as a number of increments
        #[arg(long)]
        terms: u64,
        /// Seed for random mass sequences
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        tol: f64,
        #[arg(long)]
        probes_per_octave: u32,
    }
);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classify {
    pub mass: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tol: f64,
    pub probes_per_octave: u32,
}

impl ClassifyArgs {
    pub fn resolve(self) -> Result<Classify> {
        let spec = mass(&self.mass, self.seed).map_err(|e| {
            if self.seed.is_none() {
                bad(format!("{e}; random sequences need --seed"))
            } else {
                e
            }
        })?;
        let key = spec.to_string();
        let (horizon, terms) = match (self.horizon, self.terms) {
            (Some(_), Some(_)) => return Err(bad("give either --horizon or --terms, not both")),
            (Some(t), None) => (Some(positive("horizon", t)?), None),
            (None, Some(n)) => (None, Some(n)),
            (None, None) => match massgame::catalog::catalog().into_iter().find(|e| e.key == key).map(|e| e.horizon) {
                Some(massgame::catalog::Horizon::Time(t)) => (Some(t), None),
                Some(massgame::catalog::Horizon::Terms(n)) => (None, Some(n)),
                None => (None, Some(1 << 20)),
            },
        };
        let tol = positive("tol", self.tol.unwrap_or(1e-2))?;
        let probes_per_octave = self.probes_per_octave.unwrap_or(4);
        if probes_per_octave == 0 {
            return Err(bad("probes_per_octave must be positive"));
        }
        Ok(Classify { mass: key, horizon, terms, seed: self.seed, tol, probes_per_octave })
    }
}

partial!(
    /// Monte Carlo checks of the conditions declared by a family.
    VerifyArgs {
        #[arg(long)]
        family: String,
        #[arg(long)]
        seed: u64,
        /// Subset of C, W1, W2, S1, S2, S3
        #[arg(long, value_delimiter = ',')]
        conditions: Vec<String>,
        /// Increment indices probed
        #[arg(long, value_delimiter = ',')]
        ks: Vec<u64>,
        /// Largest probed mass is 2^max_exp
        #[arg(long)]
        max_exp: u32,
        #[arg(long)]
        step: u32,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        eps: f64,
    }
);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verify {
    pub family: String,
    pub seed: u64,
    pub conditions: Vec<String>,
    pub ks: Vec<u64>,
    pub max_exp: u32,
    pub step: u32,
    pub budget: u64,
    pub eps: f64,
}

impl VerifyArgs {
    pub fn resolve(self) -> Result<Verify> {
        use massgame::rv_family::ConditionId;
        let family = family(&self.family)?;
        let conditions = match self.conditions {
            Some(list) => list
                .iter()
                .map(|c| c.parse::<ConditionId>().map(|c| c.to_string()).map_err(|e| bad(format!("{e}"))))
                .collect::<Result<Vec<_>>>()?,
            None => ConditionId::ALL.iter().map(|c| c.to_string()).collect(),
        };
        Ok(Verify {
            family: family.to_string(),
            seed: seed(self.seed)?,
            conditions,
            ks: self.ks.unwrap_or_else(|| vec![1, 2]),
            max_exp: self.max_exp.unwrap_or(10),
            step: self.step.unwrap_or(2),
            budget: self.budget.unwrap_or(2000),
            eps: positive("eps", self.eps.unwrap_or(0.5))?,
        })
    }
}

partial!(
    /// Weak-law counterexample built from spikes without uniform integrability.
    W2Args {
        /// Driving mass sequence
        #[arg(long)]
        mass: String,
        /// Number of tabulated spike levels
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<usize>,
        /// Sets every spike height to zero
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        zero_spikes: bool,
    }
);

impl W2Args {
    pub fn resolve(self) -> Result<massgame::montecarlo::W2Options> {
        let d = massgame::montecarlo::W2Options::default();
        Ok(massgame::montecarlo::W2Options {
            mass: match self.mass {
                Some(_) => mass(&self.mass, None)?,
                None => d.mass,
            },
            levels: self.levels.unwrap_or(d.levels),
            budget: self.budget.unwrap_or(d.budget),
            seed: seed(self.seed)?,
            checkpoints: self.checkpoints.unwrap_or(d.checkpoints),
            zero_spikes: self.zero_spikes.unwrap_or(false),
        })
    }

    /// The fully specified arguments behind `opts`.
    pub fn echo(opts: &massgame::montecarlo::W2Options) -> W2Args {
        W2Args {
            mass: Some(opts.mass.to_string()),
            levels: Some(opts.levels),
            budget: Some(opts.budget),
            seed: Some(opts.seed),
            checkpoints: Some(opts.checkpoints.clone()),
            zero_spikes: Some(opts.zero_spikes),
        }
    }
}

partial!(
    /// Strong-law counterexample on masses 4^k.
    S1Args {
        /// Number of increments K
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "reps", alias = "replications")]
        replications: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        eps: f64,
        /// Replaces the family by X = 0
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        zero: bool,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        n0: Vec<f64>,
        #[arg(skip)]
        tolerance: Tolerance,
    }
);

impl S1Args {
    pub fn resolve(self) -> Result<massgame::montecarlo::S1Options> {
        let d = massgame::montecarlo::S1Options::default();
        Ok(massgame::montecarlo::S1Options {
            horizon: self.k.unwrap_or(d.horizon),
            replications: self.replications.unwrap_or(d.replications),
            seed: seed(self.seed)?,
            eps: positive("eps", self.eps.unwrap_or(d.eps))?,
            zero: self.zero.unwrap_or(false),
            checkpoints: self.checkpoints.unwrap_or(d.checkpoints),
            n0: self.n0.unwrap_or_default(),
            tolerance: self.tolerance.unwrap_or_default(),
        })
    }

    /// The fully specified arguments behind `opts`.
    pub fn echo(opts: &massgame::montecarlo::S1Options) -> S1Args {
        S1Args {
            k: Some(opts.horizon),
            replications: Some(opts.replications),
            seed: Some(opts.seed),
            eps: Some(opts.eps),
            zero: Some(opts.zero),
            checkpoints: Some(opts.checkpoints.clone()),
            n0: Some(opts.n0.clone()),
            tolerance: Some(opts.tolerance),
        }
    }
}
