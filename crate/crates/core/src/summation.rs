//! Incremental and gradual sums, their expectations, the Toeplitz check and
//! the truncation / scale-decomposition gadgets.
//!
//! Both sums are evaluated in the form `(sum_k W_k(m_k)) / M_n` since
//! `m_k X_k(m_k) = W_k(m_k)`; with the same summation order this makes the
//! gradual sum at `t = M_n` bit-identical to the incremental sum.

use crate::error::{Error, Result};
use crate::ext::ExtFloat;
use crate::mass_seq::{PrefixIndex, RunIndex};
use crate::rng::StreamKey;
use crate::rv_family::PathFamily;
use crate::stats::Compensated;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SumKind {
    Incremental { n: usize },
    Gradual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumSample {
    pub t: f64,
    pub value: f64,
    pub kind: SumKind,
}

/// `S_n` with `W_k(t)` supplied by `w(k, m_k, t)`.
pub fn incremental_with<F>(idx: &PrefixIndex, n: usize, mut w: F) -> Result<SumSample>
where
    F: FnMut(u64, f64, f64) -> Result<f64>,
{
    if n == 0 || n > idx.len() {
        return Err(Error::IndexOutOfRange { index: n, len: idx.len() });
    }
    let mut acc = Compensated::new();
    for k in 1..=n {
        let m = idx.mass(k);
        acc.add(w(k as u64, m, m)?);
    }
    let t = idx.cum(n);
    Ok(SumSample { t, value: acc.value() / t, kind: SumKind::Incremental { n } })
}

/// `S_t` with `W_k(t)` supplied by `w(k, m_k, t)`; the boundary term uses
/// the path of increment `ell_t` at the partial time.
pub fn gradual_with<F>(idx: &PrefixIndex, t: f64, mut w: F) -> Result<SumSample>
where
    F: FnMut(u64, f64, f64) -> Result<f64>,
{
    let loc = idx.locate(t)?;
    let mut acc = Compensated::new();
    for k in 1..loc.ell {
        let m = idx.mass(k);
        acc.add(w(k as u64, m, m)?);
    }
    acc.add(w(loc.ell as u64, idx.mass(loc.ell), loc.tbar)?);
    Ok(SumSample { t, value: acc.value() / t, kind: SumKind::Gradual })
}

fn family_w<'a>(family: &'a PathFamily, key: &'a StreamKey) -> impl FnMut(u64, f64, f64) -> Result<f64> + 'a {
    move |k, m, t| family.path(key, k, m).w(t)
}

/// `S_n = sum_{k <= n} (m_k / M_n) X_k(m_k)` on the paths of replication `key`.
pub fn incremental(idx: &PrefixIndex, family: &PathFamily, n: usize, key: &StreamKey) -> Result<SumSample> {
    incremental_with(idx, n, family_w(family, key))
}

/// Gradual sum at time `t` on the paths of replication `key`.
pub fn gradual(idx: &PrefixIndex, family: &PathFamily, t: f64, key: &StreamKey) -> Result<SumSample> {
    gradual_with(idx, t, family_w(family, key))
}

/// `sum_k (m_k / M_n) x_k` for masses beyond the `f64` range.
pub fn weighted_average_ext(masses: &[ExtFloat], xs: &[f64]) -> Result<f64> {
    if masses.is_empty() || masses.len() != xs.len() {
        return Err(Error::InvalidMass(format!("{} masses for {} values", masses.len(), xs.len())));
    }
    let total = masses.iter().fold(ExtFloat::ZERO, |a, &m| a + m);
    let mut acc = Compensated::new();
    for (&m, &x) in masses.iter().zip(xs) {
        if x != 0.0 {
            acc.add((m / total).to_f64_lossy() * x);
        }
    }
    Ok(acc.value())
}

/// `E S_t` for a mean function `v(k, m)`.
pub fn expected_gradual_with<F: Fn(u64, f64) -> f64>(idx: &PrefixIndex, t: f64, v: F) -> Result<f64> {
    let loc = idx.locate(t)?;
    let mut acc = Compensated::new();
    for k in 1..loc.ell {
        let m = idx.mass(k);
        acc.add(m * v(k as u64, m));
    }
    acc.add(loc.tbar * v(loc.ell as u64, loc.tbar));
    Ok(acc.value() / t)
}

pub fn expected_gradual(idx: &PrefixIndex, family: &PathFamily, t: f64) -> Result<f64> {
    expected_gradual_with(idx, t, |k, m| family.mean(k, m))
}

/// `E S_t` over a run-length encoded sequence. `per_index` forces a
/// term-by-term loop for means that depend on `k`.
pub fn expected_gradual_runs<F: Fn(u64, f64) -> f64>(idx: &RunIndex, t: f64, per_index: bool, v: F) -> Result<f64> {
    let (loc, r) = idx.locate(t)?;
    let mut acc = Compensated::new();
    let mut add_run = |first: u64, count: u64, m: f64| {
        if count == 0 {
            return;
        }
        if per_index {
            for k in first..first + count {
                acc.add(m * v(k, m));
            }
        } else {
            acc.add(count as f64 * m * v(first, m));
        }
    };
    for span in &idx.runs()[..r] {
        add_run(span.first, span.count, span.mass);
    }
    let span = idx.runs()[r];
    add_run(span.first, loc.ell as u64 - span.first, span.mass);
    acc.add(loc.tbar * v(loc.ell as u64, loc.tbar));
    Ok(acc.value() / t)
}

/// Behaviour of `a_{n,k} = m_k / M_n` over a window of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToeplitzReport {
    pub n_window: (usize, usize),
    pub k_window: (usize, usize),
    /// Whether every row sum `sum_{k <= n} a_{n,k}` equals 1 exactly.
    pub row_sums_exact: bool,
    pub max_row_sum_error: f64,
    /// `sup_n sum_k |a_{n,k}|` over the window.
    pub sup_row_abs_sum: f64,
    /// `(k, a_{n_lo,k}, a_{n_hi,k})` for `k` in the column window.
    pub columns: Vec<(usize, f64, f64)>,
    /// Shrink factor `M_{n_lo} / M_{n_hi}` shared by every fixed column.
    pub column_decay: f64,
    pub columns_vanishing: bool,
    /// `(n, max_{k <= n} a_{n,k})` at the window ends.
    pub max_entry: ((usize, f64), (usize, f64)),
    pub max_entry_vanishing: bool,
}

/// Checks the Toeplitz conditions for `a_{n,k} = m_k / M_n` on rows
/// `n_window` and columns `k_window` (both inclusive, 1-based).
pub fn toeplitz_check(idx: &PrefixIndex, n_window: (usize, usize), k_window: (usize, usize)) -> Result<ToeplitzReport> {
    let (n_lo, n_hi) = n_window;
    let (k_lo, k_hi) = k_window;
    if n_lo == 0 || n_lo > n_hi || n_hi > idx.len() {
        return Err(Error::InvalidGrid(format!("row window {n_lo}..={n_hi} outside 1..={}", idx.len())));
    }
    if k_lo == 0 || k_lo > k_hi || k_hi > n_lo {
        return Err(Error::InvalidGrid(format!("column window {k_lo}..={k_hi} must lie in 1..={n_lo}")));
    }
    let mut running = 0.0;
    let mut max_mass = 0.0f64;
    let mut exact = true;
    let mut max_err = 0.0f64;
    let mut sup_abs = 0.0f64;
    let mut max_lo = 0.0;
    let mut max_hi = 0.0;
    for n in 1..=n_hi {
        running += idx.mass(n);
        max_mass = max_mass.max(idx.mass(n));
        if n >= n_lo {
            let mn = idx.cum(n);
            let row = running / mn;
            exact &= row == 1.0;
            max_err = max_err.max((row - 1.0).abs());
            sup_abs = sup_abs.max(row.abs());
            if n == n_lo {
                max_lo = max_mass / mn;
            }
            if n == n_hi {
                max_hi = max_mass / mn;
            }
        }
    }
    let columns =
        (k_lo..=k_hi).map(|k| (k, idx.mass(k) / idx.cum(n_lo), idx.mass(k) / idx.cum(n_hi))).collect::<Vec<_>>();
    let column_decay = idx.cum(n_lo) / idx.cum(n_hi);
    Ok(ToeplitzReport {
        n_window,
        k_window,
        row_sums_exact: exact,
        max_row_sum_error: max_err,
        sup_row_abs_sum: sup_abs,
        columns,
        column_decay,
        columns_vanishing: column_decay < 0.5,
        max_entry: ((n_lo, max_lo), (n_hi, max_hi)),
        max_entry_vanishing: max_hi < 0.5 * max_lo,
    })
}

/// `x` if `|x| < bound`, else 0.
pub fn truncate_strict(x: f64, bound: f64) -> f64 {
    assert!(bound > 0.0, "truncation bound must be positive");
    if x.abs() < bound {
        x
    } else {
        0.0
    }
}

/// `x` if `|x| <= bound`, else 0.
pub fn truncate_inclusive(x: f64, bound: f64) -> f64 {
    assert!(bound > 0.0, "truncation bound must be positive");
    if x.abs() <= bound {
        x
    } else {
        0.0
    }
}

/// Least `K` with `delta K > 1` and `K / (K - 1) < 1 + gamma`.
pub fn choose_k(delta: f64, gamma: f64) -> Result<usize> {
    if !(delta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("delta and gamma must be positive (got {delta}, {gamma})")));
    }
    let start = ((1.0 / delta).floor() as usize).max(1 + (1.0 / gamma).floor() as usize).max(2);
    (start.saturating_sub(1).max(2)..start + 4)
        .find(|&k| delta * k as f64 > 1.0 && (k as f64) / (k as f64 - 1.0) < 1.0 + gamma)
        .ok_or_else(|| Error::InvalidConfig(format!("no K for delta = {delta}, gamma = {gamma}")))
}

/// Partition of `1..=n` into small-increment classes `M^{0,s} .. M^{K-1,s}`
/// and the large class `M^K` (1-based indices).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleDecomposition {
    pub k: usize,
    pub n: usize,
    pub small: Vec<Vec<usize>>,
    pub large: Vec<usize>,
}

impl ScaleDecomposition {
    /// `(S^{0,s}_n, .., S^{K-1,s}_n, S^K_n)` for values `x_k = X_k(m_k)`.
    pub fn partial_sums(&self, idx: &PrefixIndex, xs: &[f64]) -> Result<(Vec<f64>, f64)> {
        if xs.len() < self.n || idx.len() < self.n {
            return Err(Error::IndexOutOfRange { index: self.n, len: xs.len().min(idx.len()) });
        }
        let mn = idx.cum(self.n);
        let class = |c: &[usize]| {
            let mut acc = Compensated::new();
            for &j in c {
                acc.add(idx.mass(j) / mn * xs[j - 1]);
            }
            acc.value()
        };
        Ok((self.small.iter().map(|c| class(c)).collect(), class(&self.large)))
    }
}

/// Recursive scale decomposition of `1..=n`: `M^{0,s} = {j : m_j <= 1}`,
/// then level `i` keeps as small the `j`-th remaining index when its mass
/// is below `j^{i/K}`. Enumerations are taken within the horizon `n`.
pub fn scale_decompose(idx: &PrefixIndex, n: usize, delta: f64, gamma: f64) -> Result<ScaleDecomposition> {
    if n > idx.len() {
        return Err(Error::IndexOutOfRange { index: n, len: idx.len() });
    }
    let k = choose_k(delta, gamma)?;
    let (zero, mut rest): (Vec<usize>, Vec<usize>) = (1..=n).partition(|&j| idx.mass(j) <= 1.0);
    let mut small = vec![zero];
    for i in 1..k {
        let expo = i as f64 / k as f64;
        let (s, r): (Vec<_>, Vec<_>) =
            rest.iter().copied().enumerate().partition(|&(pos, j)| idx.mass(j) < ((pos + 1) as f64).powf(expo));
        small.push(s.into_iter().map(|p| p.1).collect());
        rest = r.into_iter().map(|p| p.1).collect();
    }
    Ok(ScaleDecomposition { k, n, small, large: rest })
}

/// `N(x) = #{k <= n : M_k / m_k <= x}`.
pub fn count_n(idx: &PrefixIndex, x: f64) -> usize {
    (1..=idx.len()).filter(|&k| idx.cum(k) / idx.mass(k) <= x).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass_seq::MassSpec;
    use crate::rv_family::FamilySpec;

    fn idx(ms: &[f64]) -> PrefixIndex {
        PrefixIndex::from_masses(ms).unwrap()
    }

    #[test]
    fn incremental_of_mass_identity_profile() {
        // W(t) = t^2, so X(m) = m
        let s = incremental_with(&idx(&[1.0, 2.0, 3.0]), 3, |_, _, t| Ok(t * t)).unwrap();
        assert!((s.value - 14.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gradual_hand_examples() {
        let p = idx(&[2.0, 2.0]);
        assert_eq!(gradual_with(&p, 3.0, |_, _, t| Ok(t)).unwrap().value, 1.0);
        let s = gradual_with(&p, 3.0, |_, _, t| Ok(t * t)).unwrap();
        assert!((s.value - 5.0 / 3.0).abs() < 1e-15);
        assert!(gradual_with(&p, 4.5, |_, _, t| Ok(t)).is_err());
        assert!(gradual_with(&p, 0.0, |_, _, t| Ok(t)).is_err());
    }

    #[test]
    fn gradual_at_prefix_sums_is_incremental() {
        let p = MassSpec::Triangular.prefix(60).unwrap();
        let fam = FamilySpec::RwBounded.build(0).unwrap();
        let key = StreamKey::new(9, 4);
        for n in 1..=60 {
            let a = incremental(&p, &fam, n, &key).unwrap();
            let b = gradual(&p, &fam, p.cum(n), &key).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits(), "n = {n}");
        }
    }

    #[test]
    fn rw_sum_is_bounded_and_constant_family_is_exact() {
        let p = MassSpec::Const { c: 1.0 }.prefix(200).unwrap();
        let rw = FamilySpec::RwBounded.build(0).unwrap();
        let c = FamilySpec::Constant { value: 0.3 }.build(0).unwrap();
        let q = MassSpec::Irr { k: 1.0, l: 2.0 }.prefix(200).unwrap();
        for n in [1, 7, 200] {
            let key = StreamKey::new(1, n as u64);
            assert!(incremental(&p, &rw, n, &key).unwrap().value.abs() <= 1.0);
            assert!((incremental(&q, &c, n, &key).unwrap().value - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_gradual_craz_at_prefix_sums() {
        let spec = MassSpec::Geometric { base: 2.0 };
        let p = spec.prefix(60).unwrap();
        let fam = FamilySpec::CrazMean.build(0).unwrap();
        let e = expected_gradual(&p, &fam, p.cum(60)).unwrap();
        assert!(e.abs() < 1e-12, "{e}");
    }

    #[test]
    fn expected_gradual_runs_matches_prefix() {
        let spec = MassSpec::Triangular;
        let p = spec.prefix(500).unwrap();
        let runs = RunIndex::from_prefix(&p);
        let v = |_: u64, m: f64| m / (1.0 + m);
        for t in [0.3, 1.0, 7.25, p.cum(321), p.total()] {
            let a = expected_gradual_with(&p, t, v).unwrap();
            let b = expected_gradual_runs(&runs, t, false, v).unwrap();
            assert!((a - b).abs() < 1e-12, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn toeplitz_examples() {
        let c = MassSpec::Const { c: 1.0 }.prefix(1000).unwrap();
        let r = toeplitz_check(&c, (10, 1000), (1, 5)).unwrap();
        assert!(r.row_sums_exact);
        assert_eq!(r.max_entry.1, (1000, 1.0 / 1000.0));
        assert!(r.max_entry_vanishing && r.columns_vanishing);

        let g = MassSpec::Geom4.prefix(200).unwrap();
        let r = toeplitz_check(&g, (100, 200), (1, 3)).unwrap();
        assert!(r.row_sums_exact);
        // a_{n,n} = 3 * 4^n / (4^{n+1} - 4) -> 3/4
        assert!((r.max_entry.1 .1 - 0.75).abs() < 1e-12);
        assert!(!r.max_entry_vanishing);
        assert!(toeplitz_check(&g, (0, 5), (1, 1)).is_err());
    }

    #[test]
    fn truncation_variants() {
        assert_eq!(truncate_strict(5.0, 4.0), 0.0);
        assert_eq!(truncate_strict(-0.5, 4.0), -0.5);
        assert_eq!(truncate_strict(4.0, 4.0), 0.0);
        assert_eq!(truncate_inclusive(4.0, 4.0), 4.0);
        assert_eq!(truncate_inclusive(-4.5, 4.0), 0.0);
    }

    #[test]
    fn k_choice() {
        assert_eq!(choose_k(1.0, 1.0).unwrap(), 3);
        assert_eq!(choose_k(0.1, 10.0).unwrap(), 11);
        assert_eq!(choose_k(2.0, 0.5).unwrap(), 4);
        assert!(choose_k(0.0, 1.0).is_err());
    }

    #[test]
    fn decomposition_hand_trace() {
        let d = scale_decompose(&idx(&[0.5, 2.0, 1.0, 8.0]), 4, 1.0, 1.0).unwrap();
        assert_eq!(d.k, 3);
        assert_eq!(d.small, vec![vec![1, 3], vec![], vec![]]);
        assert_eq!(d.large, vec![2, 4]);
        let d = scale_decompose(&idx(&[0.5, 0.25, 1.0]), 3, 1.0, 1.0).unwrap();
        assert_eq!(d.small[0], vec![1, 2, 3]);
        assert!(d.large.is_empty());
    }

    #[test]
    fn counting_function() {
        let c = MassSpec::Const { c: 1.0 }.prefix(50).unwrap();
        assert_eq!(count_n(&c, 2.5), 2);
        assert_eq!(count_n(&c, 0.5), 0);
        assert_eq!(count_n(&idx(&[1.0, 1.0, 2.0]), 2.0), 3);
    }
}
