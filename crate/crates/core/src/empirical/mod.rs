//! Empirical mass measures `mu_t`, mass frequencies `F_t`, convergence
//! diagnostics and the regular/irregular classification of mass sequences.

mod classify;
mod measure;
mod probe;

pub use classify::{classify, classify_prefix, Cell, ClassificationReport, ClassifyOptions, FreqCell, FreqMode, Regularity};
pub use measure::{compact_distance, PointMeasure, TestFunction};
pub use probe::{
    probe_cesaro, probe_cesaro_runs, probe_l1, probe_weak, probe_wplus, CesaroReport, CesaroVerdict, CesaroWindow,
    Convergence, ConvergenceReport, MomentTrail, Witness,
};

use crate::error::{Error, Result};
use crate::mass_seq::{PrefixIndex, RunIndex};
use crate::stats::Compensated;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Weighting {
    Mass,
    Count,
}

/// Atoms of `mu_t` or `F_t` from the completed terms `(mass, count)` and the
/// partial term `tbar`.
fn build_measure<I>(complete: I, tbar: f64, t: f64, ell: u64, weighting: Weighting) -> PointMeasure
where
    I: IntoIterator<Item = (f64, u64)>,
{
    let mut acc: BTreeMap<u64, Compensated> = BTreeMap::new();
    let mut put = |m: f64, w: f64| acc.entry(m.to_bits()).or_default().add(w);
    let ell_f = ell as f64;
    for (m, count) in complete {
        let w = match weighting {
            Weighting::Mass => count as f64 * m / t,
            Weighting::Count => count as f64 / ell_f,
        };
        put(m, w);
    }
    let w = match weighting {
        Weighting::Mass => tbar / t,
        Weighting::Count => 1.0 / ell_f,
    };
    put(tbar, w);
    PointMeasure::from_sorted_unchecked(acc.into_iter().map(|(bits, w)| (f64::from_bits(bits), w.value())).collect())
}

fn prefix_terms(idx: &PrefixIndex, ell: usize) -> impl Iterator<Item = (f64, u64)> + '_ {
    idx.masses()[..ell - 1].iter().map(|&m| (m, 1))
}

fn run_terms(idx: &RunIndex, ell: u64, run: usize) -> impl Iterator<Item = (f64, u64)> + '_ {
    let span = idx.runs()[run];
    idx.runs()[..run].iter().map(|s| (s.mass, s.count)).chain(std::iter::once((span.mass, ell - span.first)))
}

/// `mu_t = (tbar/t) delta_tbar + sum_{k<ell} (m_k/t) delta_{m_k}`.
pub fn mu(idx: &PrefixIndex, t: f64) -> Result<PointMeasure> {
    let loc = idx.locate(t)?;
    Ok(build_measure(prefix_terms(idx, loc.ell), loc.tbar, t, loc.ell as u64, Weighting::Mass))
}

/// `F_t = delta_tbar / ell + sum_{k<ell} delta_{m_k} / ell`.
pub fn freq(idx: &PrefixIndex, t: f64) -> Result<PointMeasure> {
    let loc = idx.locate(t)?;
    Ok(build_measure(prefix_terms(idx, loc.ell), loc.tbar, t, loc.ell as u64, Weighting::Count))
}

/// [`mu`] on a run-length encoded index.
pub fn mu_runs(idx: &RunIndex, t: f64) -> Result<PointMeasure> {
    let (loc, r) = idx.locate(t)?;
    let ell = loc.ell as u64;
    Ok(build_measure(run_terms(idx, ell, r), loc.tbar, t, ell, Weighting::Mass))
}

/// [`freq`] on a run-length encoded index.
pub fn freq_runs(idx: &RunIndex, t: f64) -> Result<PointMeasure> {
    let (loc, r) = idx.locate(t)?;
    let ell = loc.ell as u64;
    Ok(build_measure(run_terms(idx, ell, r), loc.tbar, t, ell, Weighting::Count))
}

/// `<lambda, f>`.
pub fn integrate(measure: &PointMeasure, f: &TestFunction) -> f64 {
    measure.integrate(f)
}

/// Both sides of an exact identity and their relative discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` divided by the natural scale of the identity.
    pub discrepancy: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, scale: f64) -> Self {
        let diff = (lhs - rhs).abs();
        let discrepancy = if scale > 0.0 { diff / scale } else { diff };
        IdentityCheck { lhs, rhs, discrepancy }
    }
}

/// `int f dmu_t` against `(ell_t / t) int m f(m) dF_t`, relative to
/// `int |f| dmu_t`.
pub fn duality_check(idx: &PrefixIndex, t: f64, f: &TestFunction) -> Result<IdentityCheck> {
    let loc = idx.locate(t)?;
    let m = mu(idx, t)?;
    let fr = freq(idx, t)?;
    let lhs = m.integrate(f);
    let ell = loc.ell as f64;
    let rhs = ell / t * fr.integrate_with(|x| x * f.eval(x), 0.0);
    let scale = m.integrate_with(|x| f.eval(x).abs(), f.at_inf().abs());
    Ok(IdentityCheck::new(lhs, rhs, scale))
}

/// `t / ell_t` against `int m dF_t`.
pub fn lt_check(idx: &PrefixIndex, t: f64) -> Result<IdentityCheck> {
    let loc = idx.locate(t)?;
    let lhs = t / loc.ell as f64;
    let rhs = freq(idx, t)?.first_moment();
    Ok(IdentityCheck::new(lhs, rhs, lhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferDirection {
    FToMu,
    MuToF,
}

/// Tolerance on the normalization implied by `A` before rescaling.
const TRANSFER_TOL: f64 = 1e-9;

/// Size-biasing `F -> mu` (`<mu, f> = A int m f dF`) or its inverse
/// `mu -> F` (`<F, f> = A^-1 int f/m dmu`), normalized to total mass one.
pub fn transfer(direction: TransferDirection, source: &PointMeasure, a: f64) -> Result<PointMeasure> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InconsistentTransfer(format!("A = {a} must lie in (0, inf)")));
    }
    let atoms: Vec<(f64, f64)> = match direction {
        TransferDirection::FToMu => {
            let moment = source.first_moment();
            if !moment.is_finite() {
                return Err(Error::InconsistentTransfer("source has an infinite first moment".into()));
            }
            if moment <= 0.0 {
                return Err(Error::InconsistentTransfer("source is concentrated at 0".into()));
            }
            source.atoms().iter().filter(|(x, _)| *x > 0.0).map(|&(x, w)| (x, a * x * w)).collect()
        }
        TransferDirection::MuToF => {
            let inverse = source.inverse_moment();
            if !inverse.is_finite() {
                return Err(Error::InconsistentTransfer("source has an infinite inverse moment".into()));
            }
            if inverse <= 0.0 {
                return Err(Error::InconsistentTransfer("source is concentrated at infinity".into()));
            }
            source.atoms().iter().filter(|(x, _)| x.is_finite()).map(|&(x, w)| (x, w / (a * x))).collect()
        }
    };
    let out = PointMeasure::new(atoms)?;
    let total = out.total();
    if (total - 1.0).abs() > TRANSFER_TOL {
        return Err(Error::InconsistentTransfer(format!(
            "A = {a} is inconsistent with the source: transferred mass is {total}"
        )));
    }
    out.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass_seq::MassSpec;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn mu_and_freq_by_hand() {
        let idx = PrefixIndex::from_masses(&[1.0, 2.0, 3.0]).unwrap();
        let m = mu(&idx, 4.0).unwrap();
        assert_eq!(m.atoms().len(), 2);
        assert!(close(m.weight_at(1.0), 0.5) && close(m.weight_at(2.0), 0.5));
        let f = freq(&idx, 4.0).unwrap();
        assert!(close(f.weight_at(1.0), 2.0 / 3.0) && close(f.weight_at(2.0), 1.0 / 3.0));
        let id = TestFunction::custom("identity", |x| x, f64::INFINITY);
        assert!(close(m.integrate(&id), 1.5));
    }

    #[test]
    fn const_measures_are_dirac() {
        let idx = MassSpec::Const { c: 1.0 }.prefix(50).unwrap();
        assert_eq!(mu(&idx, 50.0).unwrap(), PointMeasure::dirac(1.0));
        let idx = MassSpec::Const { c: 3.0 }.prefix(10).unwrap();
        assert_eq!(freq(&idx, 30.0).unwrap(), PointMeasure::dirac(3.0));
    }

    #[test]
    fn f0_mass_concentrates_at_one() {
        let n = 20_000;
        let idx = MassSpec::F0.prefix(n).unwrap();
        let m = mu(&idx, idx.total()).unwrap();
        // effective masses after tiny terms may differ from 1 by rounding
        let near_one = m.integrate_with(|x| if (x - 1.0).abs() < 1e-9 { 1.0 } else { 0.0 }, 0.0);
        // the tail masses of row i sum to (i - 1) 2^-(i-1), about 2 in total
        let rows = (2.0 * n as f64).sqrt();
        assert!(near_one > 1.0 - 2.5 / rows, "{near_one}");
        assert!(near_one >= 0.99);
    }

    #[test]
    fn cesar_frequency_half_at_one() {
        let idx = MassSpec::Cesar.prefix(2000).unwrap();
        let f = freq(&idx, idx.total()).unwrap();
        assert!((f.weight_at(1.0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn run_index_measures_match_prefix() {
        let spec = MassSpec::Triangular;
        let p = spec.prefix(500).unwrap();
        let r = RunIndex::from_prefix(&p);
        for &t in &[1.0, 17.5, 300.0, p.total()] {
            let a = mu(&p, t).unwrap();
            let b = mu_runs(&r, t).unwrap();
            for f in TestFunction::default_panel() {
                assert!((a.integrate(&f) - b.integrate(&f)).abs() < 1e-12);
            }
            assert_eq!(freq(&p, t).unwrap().atoms().len(), freq_runs(&r, t).unwrap().atoms().len());
        }
    }

    #[test]
    fn duality_by_hand() {
        let idx = PrefixIndex::from_masses(&[1.0, 2.0, 3.0]).unwrap();
        let id = TestFunction::custom("identity", |x| x, f64::INFINITY);
        let c = duality_check(&idx, 4.0, &id).unwrap();
        assert!(close(c.lhs, 1.5));
        // (ell/t) int m^2 dF_4 = (3/4) (2/3 + 4/3)
        assert!(close(c.rhs, 1.5));
        assert!(c.discrepancy <= 1e-12);
        let one = TestFunction::Constant(1.0);
        let c = duality_check(&idx, 4.0, &one).unwrap();
        assert!(close(c.lhs, 1.0) && close(c.rhs, 1.0));
        let lt = lt_check(&idx, 4.0).unwrap();
        assert!(close(lt.lhs, 4.0 / 3.0) && lt.discrepancy <= 1e-12);
        let c = duality_check(&idx, 1.0, &TestFunction::Reciprocal).unwrap();
        assert!(close(c.lhs, 0.5) && close(c.rhs, 0.5));
    }

    #[test]
    fn transfer_examples() {
        let f = PointMeasure::new([(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let m = transfer(TransferDirection::FToMu, &f, 1.0 / 1.5).unwrap();
        assert!(close(m.weight_at(1.0), 1.0 / 3.0) && close(m.weight_at(2.0), 2.0 / 3.0));
        let back = transfer(TransferDirection::MuToF, &m, 1.0 / 1.5).unwrap();
        assert!(close(back.weight_at(1.0), 0.5) && close(back.weight_at(2.0), 0.5));
        let d = PointMeasure::dirac(4.0);
        assert_eq!(transfer(TransferDirection::FToMu, &d, 0.25).unwrap(), d);
    }

    #[test]
    fn transfer_rejects_excluded_cases() {
        let f = PointMeasure::new([(1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!(transfer(TransferDirection::FToMu, &f, 0.0).is_err());
        assert!(transfer(TransferDirection::FToMu, &f, 1.0).is_err());
        assert!(transfer(TransferDirection::FToMu, &PointMeasure::dirac(0.0), 1.0).is_err());
        assert!(transfer(TransferDirection::MuToF, &PointMeasure::dirac(f64::INFINITY), 1.0).is_err());
        let inf = PointMeasure::new([(1.0, 0.5), (f64::INFINITY, 0.5)]).unwrap();
        assert!(transfer(TransferDirection::FToMu, &inf, 1.0).is_err());
    }
}
