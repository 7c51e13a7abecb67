use super::{to_f64_mass, MassSpec};
use crate::error::{Error, Result};
use serde::Serialize;
use std::io::Write;

/// Position of a time `t` inside the mass sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeLocation {
    pub t: f64,
    /// `ell_t`: least index with `M_ell >= t`.
    pub ell: usize,
    /// `t - M_{ell-1}`, equal to `m_ell` when `t = M_ell`.
    pub tbar: f64,
    /// `M_{ell-1}`.
    pub before: f64,
}

/// Explicit masses with prefix sums.
///
/// Masses are stored as the floating-point differences of consecutive
/// prefix sums. When a term is too small to move the running sum it is
/// replaced by one ulp, which keeps the prefix sums strictly increasing and
/// makes `cum(k) - cum(k-1) == mass(k)` hold exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixIndex {
    masses: Vec<f64>,
    cums: Vec<f64>,
    max_adjustment: f64,
}

impl PrefixIndex {
    pub fn from_masses(nominal: &[f64]) -> Result<PrefixIndex> {
        let mut masses = Vec::with_capacity(nominal.len());
        let mut cums = Vec::with_capacity(nominal.len() + 1);
        cums.push(0.0);
        let mut max_adjustment = 0.0f64;
        let mut prev = 0.0f64;
        for (i, &m) in nominal.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidMass(format!("m_{} = {m} is not positive and finite", i + 1)));
            }
            let mut next = prev + m;
            if !next.is_finite() {
                return Err(Error::Overflow(format!("M_{} exceeds f64 range", i + 1)));
            }
            if next <= prev {
                next = prev.next_up();
            }
            let mut eff = next - prev;
            // round-trip guard: the stored difference must reproduce the sum
            while prev + eff != next {
                next = prev + eff;
                eff = next - prev;
            }
            max_adjustment = max_adjustment.max((eff - m).abs());
            masses.push(eff);
            cums.push(next);
            prev = next;
        }
        Ok(PrefixIndex { masses, cums, max_adjustment })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// `m_k` for `1 <= k <= len`.
    pub fn mass(&self, k: usize) -> f64 {
        self.masses[k - 1]
    }

    /// `M_k` for `0 <= k <= len`.
    pub fn cum(&self, k: usize) -> f64 {
        self.cums[k]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Prefix sums `M_1, .., M_n`.
    pub fn cumsums(&self) -> &[f64] {
        &self.cums[1..]
    }

    pub fn total(&self) -> f64 {
        *self.cums.last().expect("cums holds M_0")
    }

    /// Largest absolute change applied to a nominal mass.
    pub fn max_adjustment(&self) -> f64 {
        self.max_adjustment
    }

    pub fn locate(&self, t: f64) -> Result<TimeLocation> {
        let total = self.total();
        if !(t > 0.0 && t <= total) {
            return Err(Error::TimeOutOfRange { t, total });
        }
        // least ell with M_ell >= t
        let ell = self.cums.partition_point(|&c| c < t);
        let before = self.cums[ell - 1];
        let tbar = if t == self.cums[ell] { self.masses[ell - 1] } else { t - before };
        Ok(TimeLocation { t, ell, tbar, before })
    }

    /// Writes `k,m_k,M_k` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,m_k,M_k")?;
        for k in 1..=self.len() {
            writeln!(w, "{},{},{}", k, self.mass(k), self.cum(k))?;
        }
        Ok(())
    }
}

/// A run of equal masses inside a [`RunIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSpan {
    pub mass: f64,
    pub count: u64,
    /// Index of the first term of the run.
    pub first: u64,
    /// Prefix sum just before the run.
    pub before: f64,
}

impl RunSpan {
    pub fn last(&self) -> u64 {
        self.first + self.count - 1
    }

    pub fn end(&self) -> f64 {
        self.before + self.count as f64 * self.mass
    }
}

/// Run-length encoded mass sequence for long horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct RunIndex {
    runs: Vec<RunSpan>,
    total: f64,
    len: u64,
}

impl RunIndex {
    /// Terms up to the first index whose prefix sum reaches `t_max`.
    pub fn until_time(spec: &MassSpec, t_max: f64) -> Result<RunIndex> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidGrid(format!("time horizon {t_max} must be positive and finite")));
        }
        let mut seq = spec.sequence()?;
        let mut idx = RunIndex { runs: Vec::new(), total: 0.0, len: 0 };
        while idx.total < t_max {
            let run = seq.next_run(u64::MAX)?;
            let m = to_f64_mass(run.mass, seq.emitted())?;
            let needed = ((t_max - idx.total) / m).ceil().max(1.0);
            let count = if needed < run.count as f64 { needed as u64 } else { run.count };
            idx.push(m, count)?;
        }
        Ok(idx)
    }

    /// The first `n` terms.
    pub fn until_count(spec: &MassSpec, n: u64) -> Result<RunIndex> {
        let mut seq = spec.sequence()?;
        let mut idx = RunIndex { runs: Vec::new(), total: 0.0, len: 0 };
        while idx.len < n {
            let run = seq.next_run(n - idx.len)?;
            let m = to_f64_mass(run.mass, seq.emitted())?;
            idx.push(m, run.count)?;
        }
        Ok(idx)
    }

    pub fn from_prefix(p: &PrefixIndex) -> RunIndex {
        let mut idx = RunIndex { runs: Vec::new(), total: 0.0, len: 0 };
        for &m in p.masses() {
            idx.push(m, 1).expect("prefix index masses are valid");
        }
        idx.total = p.total();
        idx
    }

    fn push(&mut self, m: f64, count: u64) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        let len = self
            .len
            .checked_add(count)
            .ok_or_else(|| Error::Overflow(format!("more than {} terms", u64::MAX)))?;
        match self.runs.last_mut() {
            Some(last) if last.mass == m => {
                last.count += count;
                self.total = last.end();
            }
            _ => {
                let span = RunSpan { mass: m, count, first: self.len + 1, before: self.total };
                self.total = span.end();
                self.runs.push(span);
            }
        }
        self.len = len;
        if !self.total.is_finite() {
            return Err(Error::Overflow(format!("M_{} exceeds f64 range", self.len)));
        }
        Ok(())
    }

    pub fn runs(&self) -> &[RunSpan] {
        &self.runs
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Locates `t`; the returned `ell` is a global index and the run
    /// position is returned alongside.
    pub fn locate(&self, t: f64) -> Result<(TimeLocation, usize)> {
        if !(t > 0.0 && t <= self.total) {
            return Err(Error::TimeOutOfRange { t, total: self.total });
        }
        let r = self.runs.partition_point(|s| s.before < t) - 1;
        let span = &self.runs[r];
        let mut j = ((t - span.before) / span.mass).ceil().clamp(1.0, span.count as f64) as u64;
        let mut before = span.before + (j - 1) as f64 * span.mass;
        while j > 1 && before >= t {
            j -= 1;
            before = span.before + (j - 1) as f64 * span.mass;
        }
        let tbar = (t - before).clamp(f64::MIN_POSITIVE, span.mass);
        let ell = (span.first + j - 1) as usize;
        Ok((TimeLocation { t, ell, tbar, before }, r))
    }
}

/// Row and column of the `k`-th entry of a triangular array read row by
/// row (`k >= 1`); the smallest admissible row is chosen.
pub fn tri_index(k: u64) -> (u64, u64) {
    assert!(k >= 1, "tri_index is 1-based");
    let mut i = (((8.0 * k as f64 + 1.0).sqrt() - 1.0) / 2.0).ceil() as u64;
    while i > 1 && (i - 1) * i / 2 >= k {
        i -= 1;
    }
    while i * (i + 1) / 2 < k {
        i += 1;
    }
    (i, k - (i - 1) * i / 2)
}
