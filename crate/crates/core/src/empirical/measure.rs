use crate::error::{Error, Result};
use crate::stats::Compensated;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

/// `|arctan x - arctan y|` on `[0, inf]`, with `arctan inf = pi/2`.
pub fn compact_distance(x: f64, y: f64) -> f64 {
    (x.atan() - y.atan()).abs()
}

/// Finite measure on `[0, inf]` made of atoms; `f64::INFINITY` is the
/// point at infinity. Atoms are sorted by location and distinct.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointMeasure {
    atoms: Vec<(f64, f64)>,
}

/// Coarsening grid `{0} u {2^j : |j| <= 20} u {inf}`.
const GRID_EXP: i32 = 20;

fn grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((-GRID_EXP..=GRID_EXP).map(|j| 2f64.powi(j)));
    g.push(f64::INFINITY);
    g
}

impl PointMeasure {
    /// Merges atoms at equal locations and drops zero weights.
    pub fn new<I: IntoIterator<Item = (f64, f64)>>(atoms: I) -> Result<PointMeasure> {
        let mut acc: BTreeMap<u64, Compensated> = BTreeMap::new();
        for (x, w) in atoms {
            if x.is_nan() || x < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom location {x} is outside [0, inf]")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMeasure(format!("atom weight {w} is not a nonnegative real")));
            }
            // normalizes -0.0
            let x = if x == 0.0 { 0.0 } else { x };
            acc.entry(x.to_bits()).or_default().add(w);
        }
        Ok(PointMeasure::from_sorted_unchecked(
            acc.into_iter().map(|(b, w)| (f64::from_bits(b), w.value())).collect(),
        ))
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<(f64, f64)>) -> PointMeasure {
        PointMeasure { atoms: atoms.into_iter().filter(|&(_, w)| w > 0.0).collect() }
    }

    pub fn dirac(x: f64) -> PointMeasure {
        PointMeasure::new([(x, 1.0)]).expect("dirac location must lie in [0, inf]")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        let mut acc = Compensated::new();
        for &(_, w) in &self.atoms {
            acc.add(w);
        }
        acc.value()
    }

    pub fn weight_at(&self, x: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == x).map_or(0.0, |a| a.1)
    }

    /// Weight of atoms strictly above `x`.
    pub fn weight_above(&self, x: f64) -> f64 {
        let mut acc = Compensated::new();
        for &(_, w) in self.atoms.iter().filter(|a| a.0 > x) {
            acc.add(w);
        }
        acc.value()
    }

    pub fn normalized(&self) -> Result<PointMeasure> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("cannot normalize a zero measure".into()));
        }
        Ok(PointMeasure { atoms: self.atoms.iter().map(|&(x, w)| (x, w / total)).collect() })
    }

    pub fn integrate(&self, f: &TestFunction) -> f64 {
        self.integrate_with(|x| f.eval(x), f.at_inf())
    }

    /// `sum w f(x)`, using `at_inf` for the atom at infinity.
    pub fn integrate_with(&self, f: impl Fn(f64) -> f64, at_inf: f64) -> f64 {
        let mut acc = Compensated::new();
        for &(x, w) in &self.atoms {
            acc.add(w * if x.is_infinite() { at_inf } else { f(x) });
        }
        acc.value()
    }

    /// `int m dlambda`; infinite when an atom at infinity has positive weight.
    pub fn first_moment(&self) -> f64 {
        if self.atoms.last().is_some_and(|a| a.0.is_infinite()) {
            return f64::INFINITY;
        }
        self.integrate_with(|x| x, f64::INFINITY)
    }

    /// `int 1/m dlambda`; atoms at infinity contribute 0 and an atom at 0
    /// makes it infinite.
    pub fn inverse_moment(&self) -> f64 {
        if self.atoms.first().is_some_and(|a| a.0 == 0.0) {
            return f64::INFINITY;
        }
        self.integrate_with(|x| 1.0 / x, 0.0)
    }

    /// Moves each atom to the nearest point of `{0} u {2^j : |j| <= 20} u {inf}`
    /// in the compactified metric.
    pub fn coarsen(&self) -> PointMeasure {
        let g = grid();
        let angles: Vec<f64> = g.iter().map(|x| x.atan()).collect();
        let moved = self.atoms.iter().map(|&(x, w)| {
            let a = x.atan();
            let i = angles.partition_point(|&b| b < a);
            let j = if i == 0 {
                0
            } else if i == g.len() || a - angles[i - 1] <= angles[i] - a {
                i - 1
            } else {
                i
            };
            (g[j], w)
        });
        PointMeasure::new(moved).expect("grid points are valid locations")
    }

    /// `max_f |<self, f> - <other, f>|`.
    pub fn panel_distance(&self, other: &PointMeasure, panel: &[TestFunction]) -> f64 {
        panel.iter().map(|f| (self.integrate(f) - other.integrate(f)).abs()).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Loc {
    Finite(f64),
    Inf(String),
}

impl Serialize for PointMeasure {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.atoms.len()))?;
        for &(x, w) in &self.atoms {
            let loc = if x.is_infinite() { Loc::Inf("inf".into()) } else { Loc::Finite(x) };
            seq.serialize_element(&(loc, w))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for PointMeasure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<(Loc, f64)> = Vec::deserialize(d)?;
        let mut atoms = Vec::with_capacity(raw.len());
        for (loc, w) in raw {
            let x = match loc {
                Loc::Finite(x) => x,
                Loc::Inf(s) if s == "inf" => f64::INFINITY,
                Loc::Inf(s) => return Err(de::Error::custom(format!("unknown atom location {s:?}"))),
            };
            atoms.push((x, w));
        }
        PointMeasure::new(atoms).map_err(de::Error::custom)
    }
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bounded continuous function on `[0, inf]` with an explicit value at infinity.
#[derive(Clone)]
pub enum TestFunction {
    /// `1 / (1 + m)`.
    Reciprocal,
    /// `arctan(m) / (pi/2)`.
    Arctan,
    /// `exp(-m)`.
    ExpNeg,
    /// One on `[0, a]`, linear down to zero at `2a`.
    Ramp { a: f64 },
    /// `min(m, cap)`.
    Capped { cap: f64 },
    Constant(f64),
    Custom { name: String, f: Evaluator, at_inf: f64 },
}

impl TestFunction {
    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static, at_inf: f64) -> TestFunction {
        TestFunction::Custom { name: name.to_string(), f: Arc::new(f), at_inf }
    }

    /// `1/(1+m)`, `arctan`, `exp(-m)`, ramps at `a = 4^j` for `|j| <= 2`, and `1`.
    pub fn default_panel() -> Vec<TestFunction> {
        let mut panel = vec![TestFunction::Reciprocal, TestFunction::Arctan, TestFunction::ExpNeg];
        panel.extend((-2..=2).map(|j| TestFunction::Ramp { a: 4f64.powi(j) }));
        panel.push(TestFunction::Constant(1.0));
        panel
    }

    pub fn eval(&self, m: f64) -> f64 {
        if m.is_infinite() {
            return self.at_inf();
        }
        match self {
            TestFunction::Reciprocal => 1.0 / (1.0 + m),
            TestFunction::Arctan => m.atan() / FRAC_PI_2,
            TestFunction::ExpNeg => (-m).exp(),
            TestFunction::Ramp { a } => (2.0 - m / a).clamp(0.0, 1.0),
            TestFunction::Capped { cap } => m.min(*cap),
            TestFunction::Constant(c) => *c,
            TestFunction::Custom { f, .. } => f(m),
        }
    }

    pub fn at_inf(&self) -> f64 {
        match self {
            TestFunction::Reciprocal | TestFunction::ExpNeg | TestFunction::Ramp { .. } => 0.0,
            TestFunction::Arctan => 1.0,
            TestFunction::Capped { cap } => *cap,
            TestFunction::Constant(c) => *c,
            TestFunction::Custom { at_inf, .. } => *at_inf,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Reciprocal => write!(f, "reciprocal"),
            TestFunction::Arctan => write!(f, "arctan"),
            TestFunction::ExpNeg => write!(f, "exp_neg"),
            TestFunction::Ramp { a } => write!(f, "ramp({a})"),
            TestFunction::Capped { cap } => write!(f, "capped({cap})"),
            TestFunction::Constant(c) => write!(f, "constant({c})"),
            TestFunction::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({self})")
    }
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_examples() {
        let capped = TestFunction::Capped { cap: 10.0 };
        assert_eq!(PointMeasure::dirac(1.0).integrate(&capped), 1.0);
        let m = PointMeasure::new([(1.0, 0.5), (f64::INFINITY, 0.5)]).unwrap();
        let f = TestFunction::custom("f", |x| if x <= 1.0 { 0.2 } else { 0.8 }, 0.8);
        assert!((m.integrate(&f) - 0.5).abs() < 1e-15);
        assert_eq!(m.first_moment(), f64::INFINITY);
        assert_eq!(m.inverse_moment(), 0.5);
    }

    #[test]
    fn merges_and_sorts() {
        let m = PointMeasure::new([(2.0, 0.25), (1.0, 0.25), (2.0, 0.5), (3.0, 0.0), (-0.0, 0.0)]).unwrap();
        assert_eq!(m.atoms(), &[(1.0, 0.25), (2.0, 0.75)]);
        assert!(PointMeasure::new([(-1.0, 1.0)]).is_err());
        assert!(PointMeasure::new([(1.0, f64::NAN)]).is_err());
    }

    #[test]
    fn json_round_trip_with_infinity() {
        let m = PointMeasure::new([(0.5, 0.25), (f64::INFINITY, 0.75)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"[[0.5,0.25],["inf",0.75]]"#);
        let back: PointMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<PointMeasure>(r#"[["nan",1.0]]"#).is_err());
    }

    #[test]
    fn coarsening_uses_compact_metric() {
        let m = PointMeasure::new([(1.3, 0.25), (3e6, 0.25), (1e-9, 0.25), (1000.0, 0.25)]).unwrap();
        let c = m.coarsen();
        assert_eq!(c.weight_at(1.0), 0.25);
        assert_eq!(c.weight_at(f64::INFINITY), 0.25);
        assert_eq!(c.weight_at(0.0), 0.25);
        assert_eq!(c.weight_at(1024.0), 0.25);
        assert_eq!(compact_distance(0.0, f64::INFINITY), FRAC_PI_2);
        assert_eq!(compact_distance(2.0, 1.0), compact_distance(1.0, 2.0));
    }

    #[test]
    fn panel_is_bounded_with_limits() {
        for f in TestFunction::default_panel() {
            let far = f.eval(1e12);
            assert!((far - f.at_inf()).abs() < 1e-9, "{f}");
            for x in [0.0, 0.1, 1.0, 10.0, 1e6] {
                assert!((0.0..=1.0).contains(&f.eval(x)));
            }
        }
    }
}
