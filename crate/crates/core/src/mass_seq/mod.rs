//! Mass sequences: specifications, lazy generators and prefix indexes.
//!
//! Generators emit *runs* `(mass, count)` of equal consecutive masses so
//! that sequences with billions of increments (long stretches of ones or of
//! clamped tiny masses) stay cheap to traverse.

mod gen;
mod prefix;

pub use prefix::{tri_index, PrefixIndex, RunIndex, RunSpan, TimeLocation};

use crate::error::{Error, Result};
use crate::ext::{ExtFloat, RangeError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Smallest exponent used for dyadic "negligible" masses `2^-k`; deeper
/// terms are clamped so that every mass stays a normal `f64`.
pub const TINY_EXP_FLOOR: u64 = 1022;

/// `2^-k`, clamped at `2^-1022`.
pub fn tiny_mass(k: u64) -> f64 {
    2f64.powi(-(k.min(TINY_EXP_FLOOR) as i32))
}

/// Law of an i.i.d. random mass sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MassLaw {
    /// Uniform over a finite set of positive values.
    Uniform { values: Vec<f64> },
    /// Finitely supported law given as `(value, probability)` pairs.
    Discrete { atoms: Vec<(f64, f64)> },
    Exponential { rate: f64 },
    /// Pareto with tail index `alpha` and scale `xmin`.
    Pareto { alpha: f64, xmin: f64 },
}

impl MassLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidSpec(s.to_string()));
        match self {
            MassLaw::Uniform { values } => {
                if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("uniform law needs a non-empty set of positive finite values");
                }
            }
            MassLaw::Discrete { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|(v, p)| !(v.is_finite() && *v > 0.0) || !(*p >= 0.0)) {
                    return bad("discrete law needs positive values and non-negative probabilities");
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad("discrete law probabilities must sum to 1");
                }
            }
            MassLaw::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad("exponential rate must be positive");
                }
            }
            MassLaw::Pareto { alpha, xmin } => {
                if !(alpha.is_finite() && *alpha > 0.0 && xmin.is_finite() && *xmin > 0.0) {
                    return bad("pareto parameters must be positive");
                }
            }
        }
        Ok(())
    }

    /// Mean of the law (`inf` for heavy tails).
    pub fn mean(&self) -> f64 {
        match self {
            MassLaw::Uniform { values } => values.iter().sum::<f64>() / values.len() as f64,
            MassLaw::Discrete { atoms } => atoms.iter().map(|(v, p)| v * p).sum(),
            MassLaw::Exponential { rate } => 1.0 / rate,
            MassLaw::Pareto { alpha, xmin } => {
                if *alpha > 1.0 {
                    alpha * xmin / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Declarative description of a mass sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id")]
pub enum MassSpec {
    #[serde(rename = "const")]
    Const { c: f64 },
    #[serde(rename = "example_F0")]
    F0,
    #[serde(rename = "example_Fnot")]
    Fnot,
    #[serde(rename = "example_irr")]
    Irr {
        #[serde(default = "default_irr_k")]
        k: f64,
        #[serde(default = "default_irr_l")]
        l: f64,
    },
    #[serde(rename = "example_irregbounded")]
    IrregBounded,
    #[serde(rename = "example_triangular")]
    Triangular,
    #[serde(rename = "example_cesar")]
    Cesar,
    #[serde(rename = "example_divergent")]
    Divergent,
    #[serde(rename = "example_remp")]
    Remp,
    #[serde(rename = "example_irregL1")]
    IrregL1,
    #[serde(rename = "example_unbnofreq")]
    Unbnofreq,
    #[serde(rename = "example_imifreq")]
    Imifreq,
    #[serde(rename = "example_cesaroifreq")]
    Cesaroifreq,
    #[serde(rename = "iid")]
    Iid {
        #[serde(flatten)]
        law: MassLaw,
        #[serde(default)]
        seed: Option<u64>,
    },
    #[serde(rename = "geom4")]
    Geom4,
    #[serde(rename = "geometric")]
    Geometric { base: f64 },
    #[serde(rename = "w2counter")]
    W2Counter,
    #[serde(rename = "explicit")]
    Explicit { masses: Vec<f64> },
}

fn default_irr_k() -> f64 {
    1.0
}
fn default_irr_l() -> f64 {
    2.0
}

/// One run of equal consecutive masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub mass: ExtFloat,
    pub count: u64,
}

/// Lazy generator over the terms of a [`MassSpec`].
pub struct MassSequence {
    spec: MassSpec,
    src: gen::Splitter,
    emitted: u64,
}

impl MassSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MassSpec::Const { c } if !(c.is_finite() && *c > 0.0) => {
                Err(Error::InvalidSpec(format!("const mass must be positive and finite, got {c}")))
            }
            MassSpec::Irr { k, l } if !(k.is_finite() && l.is_finite() && *k > 0.0 && *l > 0.0 && k != l) => {
                Err(Error::InvalidSpec("example_irr needs distinct positive K and L".into()))
            }
            MassSpec::Iid { law, seed } => {
                law.validate()?;
                if seed.is_none() {
                    return Err(Error::InvalidSpec("iid mass sequence requires a seed".into()));
                }
                Ok(())
            }
            MassSpec::Geometric { base } if !(base.is_finite() && *base > 1.0) => {
                Err(Error::InvalidSpec("geometric base must exceed 1".into()))
            }
            MassSpec::Explicit { masses } => {
                if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
                    return Err(Error::InvalidMass(format!("explicit mass {m} is not positive and finite")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Fills in the seed of a random specification when none was given.
    pub fn with_default_seed(&self, seed: u64) -> MassSpec {
        match self {
            MassSpec::Iid { law, seed: None } => MassSpec::Iid { law: law.clone(), seed: Some(seed) },
            other => other.clone(),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, MassSpec::Iid { .. })
    }

    pub fn sequence(&self) -> Result<MassSequence> {
        self.validate()?;
        Ok(MassSequence { spec: self.clone(), src: gen::Splitter::new(gen::build(self)?), emitted: 0 })
    }

    /// First `n` masses in extended precision.
    pub fn generate_ext(&self, n: usize) -> Result<Vec<ExtFloat>> {
        let mut seq = self.sequence()?;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let run = seq.next_run((n - out.len()) as u64)?;
            out.extend(std::iter::repeat_n(run.mass, run.count as usize));
        }
        Ok(out)
    }

    /// First `n` masses as `f64`; fails if any term leaves the `f64` range.
    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        let mut seq = self.sequence()?;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let run = seq.next_run((n - out.len()) as u64)?;
            let m = to_f64_mass(run.mass, seq.emitted)?;
            out.extend(std::iter::repeat_n(m, run.count as usize));
        }
        Ok(out)
    }

    /// Explicit prefix index over the first `n` increments.
    pub fn prefix(&self, n: usize) -> Result<PrefixIndex> {
        PrefixIndex::from_masses(&self.generate(n)?)
    }
}

pub(crate) fn to_f64_mass(m: ExtFloat, k: u64) -> Result<f64> {
    match m.to_f64() {
        Ok(x) => Ok(x),
        Err(RangeError::Overflow) => Err(Error::Overflow(format!("mass near index {k} ({m}) exceeds f64 range"))),
        Err(RangeError::Underflow) => Err(Error::InvalidMass(format!("mass near index {k} underflows f64"))),
    }
}

impl MassSequence {
    pub fn spec(&self) -> &MassSpec {
        &self.spec
    }

    /// Number of terms emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Next run, truncated to at most `max_count` terms (`max_count >= 1`).
    pub fn next_run(&mut self, max_count: u64) -> Result<Run> {
        let run = self.src.next(max_count.max(1))?;
        self.emitted += run.count;
        Ok(run)
    }

    pub fn next_mass(&mut self) -> Result<ExtFloat> {
        Ok(self.next_run(1)?.mass)
    }
}

impl fmt::Display for MassLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassLaw::Uniform { values } => write!(f, "uniform:{}", join(values)),
            MassLaw::Discrete { atoms } => {
                let parts: Vec<String> = atoms.iter().map(|(v, p)| format!("{v}={p}")).collect();
                write!(f, "discrete:{}", parts.join(","))
            }
            MassLaw::Exponential { rate } => write!(f, "exponential:{rate}"),
            MassLaw::Pareto { alpha, xmin } => write!(f, "pareto:{alpha},{xmin}"),
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for MassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MassSpec::Const { c } => write!(f, "const:{c}"),
            MassSpec::F0 => write!(f, "example_F0"),
            MassSpec::Fnot => write!(f, "example_Fnot"),
            MassSpec::Irr { k, l } => write!(f, "example_irr:{k},{l}"),
            MassSpec::IrregBounded => write!(f, "example_irregbounded"),
            MassSpec::Triangular => write!(f, "example_triangular"),
            MassSpec::Cesar => write!(f, "example_cesar"),
            MassSpec::Divergent => write!(f, "example_divergent"),
            MassSpec::Remp => write!(f, "example_remp"),
            MassSpec::IrregL1 => write!(f, "example_irregL1"),
            MassSpec::Unbnofreq => write!(f, "example_unbnofreq"),
            MassSpec::Imifreq => write!(f, "example_imifreq"),
            MassSpec::Cesaroifreq => write!(f, "example_cesaroifreq"),
            MassSpec::Iid { law, seed } => match seed {
                Some(s) => write!(f, "iid:{law}:seed={s}"),
                None => write!(f, "iid:{law}"),
            },
            MassSpec::Geom4 => write!(f, "geom4"),
            MassSpec::Geometric { base } => write!(f, "geometric:{base}"),
            MassSpec::W2Counter => write!(f, "w2counter"),
            MassSpec::Explicit { masses } => write!(f, "explicit:{}", join(masses)),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::InvalidSpec(format!("bad number '{p}'"))))
        .collect()
}

fn parse_law(s: &str) -> Result<MassLaw> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let law = match name {
        "uniform" => MassLaw::Uniform { values: parse_list(args)? },
        "discrete" => {
            let mut atoms = Vec::new();
            for part in args.split(',') {
                let (v, p) = part
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidSpec(format!("discrete atom '{part}' must be value=prob")))?;
                let v = parse_list(v)?[0];
                let p = parse_list(p)?[0];
                atoms.push((v, p));
            }
            MassLaw::Discrete { atoms }
        }
        "exponential" => MassLaw::Exponential { rate: parse_list(args)?[0] },
        "pareto" => {
            let v = parse_list(args)?;
            if v.len() != 2 {
                return Err(Error::InvalidSpec("pareto needs alpha,xmin".into()));
            }
            MassLaw::Pareto { alpha: v[0], xmin: v[1] }
        }
        other => return Err(Error::InvalidSpec(format!("unknown mass law '{other}'"))),
    };
    law.validate()?;
    Ok(law)
}

impl FromStr for MassSpec {
    type Err = Error;

    /// Parses the compact command-line syntax, e.g. `const:1`,
    /// `example_irr:1,2` or `iid:uniform:1,2:seed=7`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let need = |what: &str| -> Result<()> {
            if rest.is_empty() {
                Err(Error::InvalidSpec(format!("{name} needs {what}")))
            } else {
                Ok(())
            }
        };
        let spec = match name {
            "const" => {
                need("a value")?;
                MassSpec::Const { c: parse_list(rest)?[0] }
            }
            "example_F0" => MassSpec::F0,
            "example_Fnot" => MassSpec::Fnot,
            "example_irr" => {
                if rest.is_empty() {
                    MassSpec::Irr { k: 1.0, l: 2.0 }
                } else {
                    let v = parse_list(rest)?;
                    if v.len() != 2 {
                        return Err(Error::InvalidSpec("example_irr needs K,L".into()));
                    }
                    MassSpec::Irr { k: v[0], l: v[1] }
                }
            }
            "example_irregbounded" => MassSpec::IrregBounded,
            "example_triangular" => MassSpec::Triangular,
            "example_cesar" => MassSpec::Cesar,
            "example_divergent" => MassSpec::Divergent,
            "example_remp" => MassSpec::Remp,
            "example_irregL1" => MassSpec::IrregL1,
            "example_unbnofreq" => MassSpec::Unbnofreq,
            "example_imifreq" => MassSpec::Imifreq,
            "example_cesaroifreq" => MassSpec::Cesaroifreq,
            "geom4" => MassSpec::Geom4,
            "w2counter" => MassSpec::W2Counter,
            "geometric" => {
                need("a base")?;
                MassSpec::Geometric { base: parse_list(rest)?[0] }
            }
            "explicit" => {
                need("a list of masses")?;
                MassSpec::Explicit { masses: parse_list(rest)? }
            }
            "iid" => {
                need("a law")?;
                let (law_part, seed) = match rest.rsplit_once(":seed=") {
                    Some((l, sd)) => (
                        l,
                        Some(sd.parse::<u64>().map_err(|_| Error::InvalidSpec(format!("bad seed '{sd}'")))?),
                    ),
                    None => (rest, None),
                };
                MassSpec::Iid { law: parse_law(law_part)?, seed }
            }
            other => return Err(Error::InvalidSpec(format!("unknown mass spec '{other}'"))),
        };
        if let MassSpec::Iid { law, .. } = &spec {
            law.validate()?;
        } else {
            spec.validate()?;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first(spec: &str, n: usize) -> Vec<f64> {
        spec.parse::<MassSpec>().unwrap().generate(n).unwrap()
    }

    #[test]
    fn f0_rows() {
        assert_eq!(first("example_F0", 10), vec![1.0, 1.0, 0.5, 1.0, 0.25, 0.25, 1.0, 0.125, 0.125, 0.125]);
    }

    #[test]
    fn triangular_rows() {
        assert_eq!(first("example_triangular", 10), vec![1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 4.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn cesar_and_divergent() {
        assert_eq!(first("example_cesar", 6), vec![1.0, 2.0, 1.0, 4.0, 1.0, 6.0]);
        assert_eq!(first("example_divergent", 4), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn irr_blocks() {
        // A = 1, 2, 9, ...; B = 1, 2, 9, ...
        let m = first("example_irr:1,2", 15);
        assert_eq!(m, vec![1.0, 2.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn remp_layout() {
        // N = 1, 1, 10, ...; K = 1, 4, 36, ...
        let m = first("example_remp", 17);
        let mut want = vec![1.0, 1.0, 1.0, 4.0];
        want.extend(std::iter::repeat_n(1.0, 10));
        want.push(36.0);
        want.extend([1.0, 1.0]);
        assert_eq!(m, want);
    }

    #[test]
    fn fnot_phases() {
        // 1, then smalls until the share of ones is <= 1/4, then ones until >= 3/4.
        let m = first("example_Fnot", 16);
        let mut want = vec![1.0, 0.25, 0.125, 0.0625];
        want.extend(std::iter::repeat_n(1.0, 8));
        want.extend((13..=16).map(|k| 2f64.powi(-k)));
        assert_eq!(m, want);
    }

    #[test]
    fn geometric_and_w2counter() {
        assert_eq!(first("geom4", 3), vec![4.0, 16.0, 64.0]);
        assert_eq!(first("w2counter", 4), vec![3.0, 8.0, 15.0, 24.0]);
        assert!(matches!("geom4".parse::<MassSpec>().unwrap().generate(600), Err(Error::Overflow(_))));
        let ext = "geom4".parse::<MassSpec>().unwrap().generate_ext(1000).unwrap();
        assert!((ext[999].log2() - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn cesaroifreq_intercalates() {
        let m = first("example_cesaroifreq", 6);
        // m'_1 = 1, then 1*1; m'_2 = 2, then 2*(1+1+2); m'_3 = 1, then 3*(1+1+2+8+1)
        assert_eq!(m, vec![1.0, 1.0, 2.0, 8.0, 1.0, 39.0]);
    }

    #[test]
    fn iid_is_seeded() {
        let a = first("iid:uniform:1,2:seed=5", 50);
        let b = first("iid:uniform:1,2:seed=5", 50);
        let c = first("iid:uniform:1,2:seed=6", 50);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&x| x == 1.0 || x == 2.0));
        assert!("iid:uniform:1,2".parse::<MassSpec>().unwrap().generate(3).is_err());
    }

    #[test]
    fn display_roundtrips() {
        for s in ["const:2.5", "example_irr:1,3", "iid:pareto:0.5,1:seed=9", "geometric:2", "explicit:1,2,3"] {
            let spec: MassSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<MassSpec>().unwrap(), spec);
        }
    }

    #[test]
    fn json_roundtrip() {
        let spec = MassSpec::Iid { law: MassLaw::Uniform { values: vec![1.0, 2.0] }, seed: Some(3) };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<MassSpec>(&s).unwrap(), spec);
        let irr: MassSpec = serde_json::from_str(r#"{"id":"example_irr"}"#).unwrap();
        assert_eq!(irr, MassSpec::Irr { k: 1.0, l: 2.0 });
    }

    #[test]
    fn rejects_bad_specs() {
        assert!("const:0".parse::<MassSpec>().is_err());
        assert!("const:-1".parse::<MassSpec>().is_err());
        assert!("nope".parse::<MassSpec>().is_err());
        assert!("explicit:1,0".parse::<MassSpec>().is_err());
    }
}
