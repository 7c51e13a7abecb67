//! Families `X_k(m) = W_k(m) / m` of random variables built over cumulative
//! paths, with mean profiles and declared condition constants.

mod path;
mod probe;
pub(crate) mod w2;

pub use path::{Path, MAX_WALK_STEPS};
pub use probe::{condition_probe, ConditionId, ConditionReport, ProbeGrid, ProbeOptions, ProbePoint, ProbeVerdict};
pub use w2::{w2_g, W2Table};

use crate::error::{Error, Result};
use crate::ext::ExtFloat;
use crate::rng::StreamKey;
use path::PathKind;
use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Mean profile `m -> v_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { c: f64 },
    /// `lo + (hi - lo) m / (m + scale)`.
    Saturating { lo: f64, hi: f64, scale: f64 },
    /// `coef * m^exp`; bounded only when `exp == 0`.
    Power { coef: f64, exp: f64 },
}

impl Default for Profile {
    /// `v_m = m / (1 + m)`: `v_1 = 1/2`, `v_inf = 1`.
    fn default() -> Self {
        Profile::Saturating { lo: 0.0, hi: 1.0, scale: 1.0 }
    }
}

impl Profile {
    pub fn eval(&self, m: f64) -> f64 {
        match *self {
            Profile::Constant { c } => c,
            Profile::Saturating { lo, hi, scale } => {
                if m.is_infinite() {
                    hi
                } else {
                    lo + (hi - lo) * m / (m + scale)
                }
            }
            Profile::Power { coef, exp } => coef * m.powf(exp),
        }
    }

    /// `v_inf`, when the profile has a finite limit.
    pub fn at_infinity(&self) -> Option<f64> {
        match *self {
            Profile::Constant { c } => Some(c),
            Profile::Saturating { hi, .. } => Some(hi),
            Profile::Power { coef, exp } => {
                if exp == 0.0 {
                    Some(coef)
                } else if exp < 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Bounded, continuous and convergent at infinity.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Profile::Constant { c } if c.is_finite() => Ok(()),
            Profile::Saturating { lo, hi, scale } if lo.is_finite() && hi.is_finite() && scale > 0.0 && scale.is_finite() => {
                Ok(())
            }
            Profile::Power { coef, exp } if coef.is_finite() && exp == 0.0 => Ok(()),
            Profile::Power { .. } => Err(Error::InvalidFamily("mean profile m^p with p != 0 is unbounded".into())),
            _ => Err(Error::InvalidFamily(format!("invalid mean profile {self:?}"))),
        }
    }

    /// `sup |v_m|`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            Profile::Constant { c } => c.abs(),
            Profile::Saturating { lo, hi, .. } => lo.abs().max(hi.abs()),
            Profile::Power { coef, .. } => coef.abs(),
        }
    }
}

/// `E X_k(m) = (2^k - m) / max(2^k, m)`.
pub fn craz_mean(k: u64, m: f64) -> f64 {
    if k < 1000 {
        let p = 2f64.powi(k as i32);
        (p - m) / p.max(m)
    } else {
        let p = ExtFloat::pow2(k as i64);
        let m = ExtFloat::from_f64(m);
        ((p - m) / p).to_f64_lossy()
    }
}

/// Specification of a family, as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum FamilySpec {
    RwBounded,
    GaussScaled,
    Constant { value: f64 },
    Deterministic {
        #[serde(default)]
        profile: Profile,
    },
    Biased {
        #[serde(default)]
        profile: Profile,
    },
    CrazMean,
    W2Violator {
        #[serde(default = "default_w2_mass")]
        mass: crate::mass_seq::MassSpec,
        #[serde(default = "default_w2_levels")]
        levels: usize,
        #[serde(default = "default_w2_budget")]
        budget: u64,
        #[serde(default)]
        zero_spikes: bool,
    },
    S1Violator,
}

fn default_w2_mass() -> crate::mass_seq::MassSpec {
    crate::mass_seq::MassSpec::W2Counter
}
fn default_w2_levels() -> usize {
    32
}
fn default_w2_budget() -> u64 {
    10_000
}

impl FamilySpec {
    /// Materializes the family; `seed` feeds construction-time estimates.
    pub fn build(&self, seed: u64) -> Result<PathFamily> {
        let kind = match self {
            FamilySpec::RwBounded => Kind::Walk,
            FamilySpec::GaussScaled => Kind::Gauss,
            FamilySpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidFamily("constant family needs a finite value".into()));
                }
                Kind::Constant(*value)
            }
            FamilySpec::Deterministic { profile } => {
                profile.validate()?;
                Kind::Drift(profile.clone())
            }
            FamilySpec::Biased { profile } => {
                profile.validate()?;
                Kind::Biased(profile.clone())
            }
            FamilySpec::CrazMean => Kind::Craz,
            FamilySpec::W2Violator { mass, levels, budget, zero_spikes } => {
                Kind::W2(Arc::new(W2Table::build(mass, *levels, *budget, seed, *zero_spikes)?))
            }
            FamilySpec::S1Violator => Kind::S1,
        };
        let conditions = ConditionProfile::for_kind(&kind);
        Ok(PathFamily { spec: self.clone(), kind, conditions })
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::RwBounded => write!(f, "rw_bounded"),
            FamilySpec::GaussScaled => write!(f, "gauss_scaled"),
            FamilySpec::Constant { value } => write!(f, "constant:{value}"),
            FamilySpec::Deterministic { profile } => write!(f, "deterministic:{}", profile_str(profile)),
            FamilySpec::Biased { profile } => write!(f, "biased:{}", profile_str(profile)),
            FamilySpec::CrazMean => write!(f, "craz_mean"),
            FamilySpec::W2Violator { .. } => write!(f, "w2_violator"),
            FamilySpec::S1Violator => write!(f, "s1_violator"),
        }
    }
}

fn profile_str(p: &Profile) -> String {
    match p {
        Profile::Constant { c } => format!("constant:{c}"),
        Profile::Saturating { lo, hi, scale } => format!("saturating:{lo},{hi},{scale}"),
        Profile::Power { coef, exp } => format!("power:{coef},{exp}"),
    }
}

fn parse_profile(s: &str) -> Result<Profile> {
    if s.is_empty() {
        return Ok(Profile::default());
    }
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidFamily(format!("bad number '{x}'"))))
            .collect::<Result<_>>()?
    };
    let p = match (name, nums.as_slice()) {
        ("constant", [c]) => Profile::Constant { c: *c },
        ("saturating", []) => Profile::default(),
        ("saturating", [lo, hi, scale]) => Profile::Saturating { lo: *lo, hi: *hi, scale: *scale },
        ("power", [coef, exp]) => Profile::Power { coef: *coef, exp: *exp },
        _ => return Err(Error::InvalidFamily(format!("unknown mean profile '{s}'"))),
    };
    p.validate()?;
    Ok(p)
}

impl FromStr for FamilySpec {
    type Err = Error;

    /// Compact syntax: `rw_bounded`, `constant:0.5`, `biased`,
    /// `biased:saturating:0,1,1`, `s1_violator`, ...
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(match name {
            "rw_bounded" => FamilySpec::RwBounded,
            "gauss_scaled" => FamilySpec::GaussScaled,
            "constant" => FamilySpec::Constant {
                value: rest.parse().map_err(|_| Error::InvalidFamily(format!("bad constant '{rest}'")))?,
            },
            "deterministic" => FamilySpec::Deterministic { profile: parse_profile(rest)? },
            "biased" => FamilySpec::Biased { profile: parse_profile(rest)? },
            "craz_mean" => FamilySpec::CrazMean,
            "w2_violator" => FamilySpec::W2Violator {
                mass: default_w2_mass(),
                levels: default_w2_levels(),
                budget: default_w2_budget(),
                zero_spikes: false,
            },
            "s1_violator" => FamilySpec::S1Violator,
            other => return Err(Error::InvalidFamily(format!("unknown family '{other}'"))),
        })
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Walk,
    Gauss,
    Constant(f64),
    Drift(Profile),
    Biased(Profile),
    Craz,
    W2(Arc<W2Table>),
    S1,
}

/// `C(eps) = c * eps^(-p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub c: f64,
    pub p: f64,
}

impl EpsSchedule {
    pub fn at(&self, eps: f64) -> f64 {
        self.c * eps.powf(-self.p)
    }
}

/// Law of the dominating variable `X_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dominating {
    /// The constant `b`.
    Bounded { b: f64 },
    /// `|N(0, sigma^2)|`.
    HalfNormal { sigma: f64 },
}

impl Dominating {
    /// `P(X_* > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        match *self {
            Dominating::Bounded { b } => {
                if x < b {
                    1.0
                } else {
                    0.0
                }
            }
            Dominating::HalfNormal { sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    libm::erfc(x / (sigma * std::f64::consts::SQRT_2))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S1Decl {
    pub delta: f64,
    pub c: EpsSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S2Decl {
    pub gamma: f64,
    pub dominating: Dominating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S3Decl {
    pub beta: f64,
    pub c: EpsSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanProfile {
    Zero,
    VOfM { profile: Profile, v_inf: f64 },
    VOfKm,
}

/// Declared conditions. Everything except `centered` refers to the
/// centred variables `X_k(m) - E X_k(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub centered: bool,
    pub w1: bool,
    pub w2: bool,
    pub s1: Option<S1Decl>,
    pub s2: Option<S2Decl>,
    pub s3: Option<S3Decl>,
    pub mean_profile: MeanProfile,
}

impl ConditionProfile {
    fn for_kind(kind: &Kind) -> ConditionProfile {
        let e = std::f64::consts::E;
        // Hoeffding: P(|X(m)| > eps) <= 2 exp(-m eps^2 / 2) <= C(eps) m^-2.
        let walk_s1 = S1Decl { delta: 2.0, c: EpsSchedule { c: 32.0 / (e * e), p: 4.0 } };
        let walk_s2 = S2Decl { gamma: 1.0, dominating: Dominating::Bounded { b: 1.0 } };
        let walk_s3 = S3Decl { beta: 2.0, c: EpsSchedule { c: 1.0, p: 2.0 } };
        let walk = |mean_profile| ConditionProfile {
            centered: matches!(mean_profile, MeanProfile::Zero),
            w1: true,
            w2: true,
            s1: Some(walk_s1),
            s2: Some(walk_s2),
            s3: Some(walk_s3),
            mean_profile,
        };
        match kind {
            Kind::Walk => walk(MeanProfile::Zero),
            Kind::Gauss => ConditionProfile {
                centered: true,
                w1: true,
                w2: true,
                s1: Some(walk_s1),
                s2: Some(S2Decl { gamma: 1.0, dominating: Dominating::HalfNormal { sigma: 1.0 } }),
                s3: Some(S3Decl { beta: 2.0, c: EpsSchedule { c: 46.0, p: 4.0 } }),
                mean_profile: MeanProfile::Zero,
            },
            Kind::Constant(c) => ConditionProfile {
                centered: *c == 0.0,
                w1: true,
                w2: true,
                s1: Some(S1Decl { delta: 1.0, c: EpsSchedule { c: 0.0, p: 0.0 } }),
                s2: Some(S2Decl { gamma: 1.0, dominating: Dominating::Bounded { b: 0.0 } }),
                s3: Some(S3Decl { beta: 2.0, c: EpsSchedule { c: 0.0, p: 0.0 } }),
                mean_profile: MeanProfile::VOfM { profile: Profile::Constant { c: *c }, v_inf: *c },
            },
            Kind::Drift(p) => ConditionProfile {
                centered: p.sup_abs() == 0.0,
                w1: true,
                w2: true,
                s1: Some(S1Decl { delta: 1.0, c: EpsSchedule { c: 0.0, p: 0.0 } }),
                s2: Some(S2Decl { gamma: 1.0, dominating: Dominating::Bounded { b: 0.0 } }),
                s3: None,
                mean_profile: MeanProfile::VOfM { profile: p.clone(), v_inf: p.at_infinity().unwrap_or(f64::NAN) },
            },
            Kind::Biased(p) => {
                let mut c = walk(MeanProfile::VOfM { profile: p.clone(), v_inf: p.at_infinity().unwrap_or(f64::NAN) });
                c.centered = false;
                c
            }
            Kind::Craz => {
                let mut c = walk(MeanProfile::VOfKm);
                c.centered = false;
                c
            }
            Kind::W2(_) => ConditionProfile {
                centered: true,
                w1: true,
                w2: false,
                // P(X != 0) = g(m) <= m^(-1/2)
                s1: Some(S1Decl { delta: 0.5, c: EpsSchedule { c: 1.0, p: 0.0 } }),
                s2: None,
                s3: None,
                mean_profile: MeanProfile::Zero,
            },
            Kind::S1 => ConditionProfile {
                centered: true,
                w1: true,
                w2: true,
                s1: None,
                s2: Some(S2Decl { gamma: 1.0, dominating: Dominating::Bounded { b: 1.0 } }),
                s3: Some(S3Decl { beta: 2.0, c: EpsSchedule { c: 1.0, p: 2.0 } }),
                mean_profile: MeanProfile::Zero,
            },
        }
    }
}

/// A stretch of increments summed in one draw by the Monte Carlo engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BlockTerm {
    pub mass: f64,
    pub count: u64,
    pub first: u64,
}

/// A materialized, immutable family.
#[derive(Debug, Clone)]
pub struct PathFamily {
    spec: FamilySpec,
    kind: Kind,
    conditions: ConditionProfile,
}

/// `sum of n independent +-1 steps`.
fn rademacher_sum<R: RngCore>(n: u64, rng: &mut R) -> f64 {
    if n <= 512 {
        let mut ones = 0u64;
        let mut left = n;
        while left > 0 {
            let take = left.min(64);
            let w = rng.next_u64();
            let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
            ones += (w & mask).count_ones() as u64;
            left -= take;
        }
        2.0 * ones as f64 - n as f64
    } else {
        let b = Binomial::new(n, 0.5).expect("valid binomial");
        2.0 * b.sample(rng) as f64 - n as f64
    }
}

impl PathFamily {
    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn conditions(&self) -> &ConditionProfile {
        &self.conditions
    }

    pub fn w2_table(&self) -> Option<&W2Table> {
        match &self.kind {
            Kind::W2(t) => Some(t),
            _ => None,
        }
    }

    /// The coherent path of increment `k` on `(0, horizon]`.
    pub fn path(&self, key: &StreamKey, k: u64, horizon: f64) -> Path {
        let mut rng = key.stream(k);
        let kind = match &self.kind {
            Kind::Walk => return Path::walk(rng, horizon),
            Kind::Gauss => return Path::gauss(rng, horizon),
            Kind::Constant(c) => PathKind::Constant(*c),
            Kind::Drift(p) => PathKind::Drift(p.clone()),
            Kind::Biased(p) => PathKind::Biased(p.clone(), path::Walk::new(rng)),
            Kind::Craz => PathKind::Craz(k, path::Walk::new(rng)),
            Kind::W2(table) => PathKind::W2 { u: rng.random::<f64>(), table: table.clone() },
            Kind::S1 => PathKind::S1 { u: rng.random::<f64>() },
        };
        Path::new(kind, horizon)
    }

    /// One draw of `X_k(m)`.
    pub fn sample_x(&self, key: &StreamKey, k: u64, m: f64) -> Result<f64> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidMass(format!("sample_x needs m > 0, got {m}")));
        }
        self.path(key, k, m).x(m)
    }

    /// One draw of `X_k(m)` for masses possibly beyond the `f64` range.
    pub fn sample_x_ext(&self, key: &StreamKey, k: u64, m: ExtFloat) -> Result<f64> {
        if m.is_sign_negative() || m.is_zero() {
            return Err(Error::InvalidMass(format!("sample_x needs m > 0, got {m}")));
        }
        let horizon = m.to_f64().unwrap_or(f64::MAX);
        self.path(key, k, horizon).x_ext(m)
    }

    /// Draw of `X_k(m)` through the marginal law only; walks of any
    /// integer-reachable length are sampled in O(1). No path coherence.
    pub fn sample_x_marginal<R: RngCore>(&self, k: u64, m: f64, rng: &mut R) -> Result<f64> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidMass(format!("sample_x needs m > 0, got {m}")));
        }
        let term = [BlockTerm { mass: m, count: 1, first: k }];
        match self.block_sum(&term, rng) {
            Some(w) => Ok(w / m),
            None => {
                let u: f64 = rng.random();
                match &self.kind {
                    Kind::W2(t) => Ok(t.value(m, u)),
                    Kind::S1 => Ok(path::s1_value(u, m.log2())),
                    _ => Err(Error::InvalidMass(format!("mass {m} is beyond the marginal sampler's range"))),
                }
            }
        }
    }

    /// `E X_k(m)`.
    pub fn mean(&self, k: u64, m: f64) -> f64 {
        match &self.kind {
            Kind::Walk | Kind::Gauss | Kind::W2(_) | Kind::S1 => 0.0,
            Kind::Constant(c) => *c,
            Kind::Drift(p) | Kind::Biased(p) => p.eval(m),
            Kind::Craz => craz_mean(k, m),
        }
    }

    /// `sup_{s <= m} |(r+s) X(r+s) - r X(r)|` over an evaluation grid of
    /// `resolution` equal steps, refined by integer breakpoints when the
    /// path is piecewise linear between integers.
    pub fn sample_path_sup(&self, key: &StreamKey, k: u64, r: f64, m: f64, resolution: usize) -> Result<f64> {
        if !(r >= 0.0) || !(m > 0.0) || resolution == 0 {
            return Err(Error::InvalidMass(format!("sample_path_sup needs r >= 0, m > 0 (r = {r}, m = {m})")));
        }
        let mut path = self.path(key, k, r + m);
        let base = path.w(r)?;
        let mut sup = 0.0f64;
        for j in 1..=resolution {
            let s = if j == resolution { m } else { m * j as f64 / resolution as f64 };
            sup = sup.max((path.w(r + s)? - base).abs());
        }
        if path.integer_breakpoints() && m <= 1e6 {
            let mut i = r.floor() + 1.0;
            while i < r + m {
                sup = sup.max((path.w(i)? - base).abs());
                i += 1.0;
            }
        }
        Ok(sup)
    }

    /// `sum_k W_k(m_k)` over the terms, drawn jointly when the law of the
    /// sum is available in closed form.
    pub(crate) fn block_sum<R: RngCore>(&self, terms: &[BlockTerm], rng: &mut R) -> Option<f64> {
        let drift = |p: &Profile| terms.iter().map(|t| t.count as f64 * t.mass * p.eval(t.mass)).sum::<f64>();
        match &self.kind {
            Kind::Walk => walk_block(terms, rng),
            Kind::Gauss => {
                let var: f64 = terms
                    .iter()
                    .map(|t| {
                        let f = t.mass.fract();
                        t.count as f64 * (t.mass.floor() + f * f)
                    })
                    .sum();
                let z: f64 = rng.sample(StandardNormal);
                Some(var.sqrt() * z)
            }
            Kind::Constant(c) => Some(terms.iter().map(|t| t.count as f64 * t.mass * c).sum()),
            Kind::Drift(p) => Some(drift(p)),
            Kind::Biased(p) => Some(drift(p) + walk_block(terms, rng)?),
            Kind::Craz => {
                let mut d = 0.0;
                for t in terms {
                    if t.count > 1 << 24 {
                        return None;
                    }
                    for k in t.first..t.first + t.count {
                        d += t.mass * craz_mean(k, t.mass);
                    }
                }
                Some(d + walk_block(terms, rng)?)
            }
            Kind::W2(_) | Kind::S1 => None,
        }
    }
}

/// Walk contributions: integer parts pooled into one binomial, fractional
/// parts grouped by value.
fn walk_block<R: RngCore>(terms: &[BlockTerm], rng: &mut R) -> Option<f64> {
    let mut int_steps: u128 = 0;
    let mut fracs: BTreeMap<u64, u64> = BTreeMap::new();
    for t in terms {
        let whole = t.mass.floor();
        if whole > 2f64.powi(60) {
            return None;
        }
        int_steps += whole as u128 * t.count as u128;
        let f = t.mass - whole;
        if f > 0.0 {
            *fracs.entry(f.to_bits()).or_insert(0) += t.count;
        }
    }
    if int_steps > u64::MAX as u128 / 2 {
        return None;
    }
    let mut sum = rademacher_sum(int_steps as u64, rng);
    for (bits, count) in fracs {
        sum += f64::from_bits(bits) * rademacher_sum(count, rng);
    }
    Some(sum)
}
