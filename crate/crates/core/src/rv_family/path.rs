use super::{craz_mean, Profile, W2Table};
use crate::error::{Error, Result};
use crate::ext::ExtFloat;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// Longest walk (in unit steps) a single path may materialize.
pub const MAX_WALK_STEPS: f64 = (1u64 << 32) as f64;

/// Lazily sampled +-1 random walk; bit `j` of the stream is step `j + 1`.
#[derive(Debug, Clone)]
pub(crate) struct Walk {
    rng: ChaCha8Rng,
    words: Vec<u64>,
    ones_before: Vec<u64>,
}

impl Walk {
    pub(crate) fn new(rng: ChaCha8Rng) -> Self {
        Walk { rng, words: Vec::new(), ones_before: vec![0] }
    }

    fn ensure_steps(&mut self, steps: u64) {
        let need = steps.div_ceil(64) as usize;
        while self.words.len() < need {
            let w = self.rng.next_u64();
            let before = *self.ones_before.last().expect("seeded with 0");
            self.words.push(w);
            self.ones_before.push(before + w.count_ones() as u64);
        }
    }

    fn at_integer(&mut self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.ensure_steps(n);
        let word = (n / 64) as usize;
        let bits = n % 64;
        let mut ones = self.ones_before[word];
        if bits > 0 {
            ones += (self.words[word] & ((1u64 << bits) - 1)).count_ones() as u64;
        }
        2.0 * ones as f64 - n as f64
    }

    /// Step `j` (1-based) as +-1.
    fn step(&mut self, j: u64) -> f64 {
        self.ensure_steps(j);
        let bit = (self.words[((j - 1) / 64) as usize] >> ((j - 1) % 64)) & 1;
        if bit == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub(crate) fn w(&mut self, t: f64) -> Result<f64> {
        if t > MAX_WALK_STEPS {
            return Err(Error::InvalidFamily(format!("walk path of length {t} exceeds the materialization limit")));
        }
        let n = t.floor();
        let frac = t - n;
        let base = self.at_integer(n as u64);
        if frac > 0.0 {
            Ok(base + frac * self.step(n as u64 + 1))
        } else {
            Ok(base)
        }
    }
}

/// Cumulative standard Gaussian increments at integer times.
#[derive(Debug, Clone)]
pub(crate) struct Gauss {
    rng: ChaCha8Rng,
    z: Vec<f64>,
    cum: Vec<f64>,
}

impl Gauss {
    fn new(rng: ChaCha8Rng) -> Self {
        Gauss { rng, z: Vec::new(), cum: vec![0.0] }
    }

    fn ensure(&mut self, steps: usize) {
        while self.z.len() < steps {
            let z: f64 = self.rng.sample(StandardNormal);
            let c = self.cum.last().expect("seeded with 0") + z;
            self.z.push(z);
            self.cum.push(c);
        }
    }

    fn w(&mut self, t: f64) -> Result<f64> {
        if t > MAX_WALK_STEPS / 256.0 {
            return Err(Error::InvalidFamily(format!("gaussian path of length {t} exceeds the materialization limit")));
        }
        let n = t.floor() as usize;
        let frac = t - n as f64;
        self.ensure(n + usize::from(frac > 0.0));
        let mut w = self.cum[n];
        if frac > 0.0 {
            w += frac * self.z[n];
        }
        Ok(w)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum PathKind {
    Walk(Walk),
    Gauss(Gauss),
    Constant(f64),
    Drift(Profile),
    Biased(Profile, Walk),
    Craz(u64, Walk),
    W2 { u: f64, table: Arc<W2Table> },
    S1 { u: f64 },
}

/// One cumulative path `W_k(.)` on `(0, horizon]`; `X_k(t) = W_k(t) / t`.
#[derive(Debug, Clone)]
pub struct Path {
    kind: PathKind,
    horizon: f64,
}

/// `+1` below `p/2`, `-1` on `[p/2, p)`, `0` otherwise, with
/// `p = min(1, 1 / log2 m)`.
pub(crate) fn s1_value(u: f64, log2_m: f64) -> f64 {
    let p = if log2_m <= 1.0 { 1.0 } else { 1.0 / log2_m };
    if u < p / 2.0 {
        1.0
    } else if u < p {
        -1.0
    } else {
        0.0
    }
}

impl Path {
    pub(crate) fn new(kind: PathKind, horizon: f64) -> Self {
        Path { kind, horizon }
    }

    pub(crate) fn walk(rng: ChaCha8Rng, horizon: f64) -> Self {
        Path::new(PathKind::Walk(Walk::new(rng)), horizon)
    }

    pub(crate) fn gauss(rng: ChaCha8Rng, horizon: f64) -> Self {
        Path::new(PathKind::Gauss(Gauss::new(rng)), horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `W_k(t)` for `0 <= t <= horizon`.
    pub fn w(&mut self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon {
            return Err(Error::IncoherentAccess { t, horizon: self.horizon });
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        match &mut self.kind {
            PathKind::Walk(walk) => walk.w(t),
            PathKind::Gauss(g) => g.w(t),
            PathKind::Constant(c) => Ok(t * *c),
            PathKind::Drift(v) => Ok(t * v.eval(t)),
            PathKind::Biased(v, walk) => Ok(t * v.eval(t) + walk.w(t)?),
            PathKind::Craz(k, walk) => Ok(t * craz_mean(*k, t) + walk.w(t)?),
            PathKind::W2 { u, table } => Ok(t * table.value(t, *u)),
            PathKind::S1 { u } => Ok(t * s1_value(*u, t.log2())),
        }
    }

    /// `X_k(t) = W_k(t) / t`.
    pub fn x(&mut self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidMass(format!("X(t) needs t > 0, got {t}")));
        }
        Ok(self.w(t)? / t)
    }

    /// `X_k(m)` for masses beyond the `f64` range; only closed-form
    /// families support this.
    pub fn x_ext(&mut self, m: ExtFloat) -> Result<f64> {
        if let Ok(t) = m.to_f64() {
            return self.x(t);
        }
        match &self.kind {
            PathKind::S1 { u } => Ok(s1_value(*u, m.log2())),
            PathKind::Constant(c) => Ok(*c),
            _ => Err(Error::InvalidFamily(format!("family cannot be evaluated at mass {m}"))),
        }
    }

    /// Whether `W` is piecewise linear between integer times.
    pub(crate) fn integer_breakpoints(&self) -> bool {
        matches!(self.kind, PathKind::Walk(_) | PathKind::Gauss(_) | PathKind::Constant(_))
    }
}
