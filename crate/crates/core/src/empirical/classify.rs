use super::probe::{assess, windows, WINDOW_RATIO};
use super::{build_measure, probe_cesaro_runs, run_terms, CesaroReport, Convergence, ConvergenceReport, MomentTrail};
use super::{PointMeasure, TestFunction, Weighting, Witness};
use crate::error::{Error, Result};
use crate::mass_seq::{PrefixIndex, RunIndex};
use crate::stats::Compensated;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub tol: f64,
    /// Time-grid density; the count grid uses twice as many points per octave.
    pub probes_per_octave: u32,
    pub panel: Vec<TestFunction>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { tol: 1e-2, probes_per_octave: 4, panel: TestFunction::default_panel() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Regularity {
    Regular { candidate: PointMeasure },
    Irregular { witness: Witness },
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FreqMode {
    Weak { limit: PointMeasure },
    L1 { limit: PointMeasure },
    None { witness: Witness },
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqCell {
    Weak,
    L1,
    None,
    Undetermined,
}

/// Position of a mass sequence in the regular/bounded/Cesaro/frequency chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub regular: Option<bool>,
    pub bounded: bool,
    pub cesaro_divergent: Option<bool>,
    pub freq: FreqCell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub horizon_terms: u64,
    pub horizon_time: f64,
    pub tol: f64,
    pub regular: Regularity,
    pub bounded: bool,
    pub cesaro: CesaroReport,
    pub freq_mode: FreqMode,
    /// `ell_t / t` at the horizon.
    pub a: f64,
    /// Panel distance between `mu_t` at the horizon and the coarsened candidate.
    pub candidate_error: f64,
    /// Cut above which `int_{m > cut} m dF_t` must vanish for `L^1` convergence.
    pub ui_cut: f64,
    /// Distances are to the measure at the horizon.
    pub mu_probe: ConvergenceReport,
    pub freq_probe: ConvergenceReport,
}

impl ClassificationReport {
    pub fn cell(&self) -> Cell {
        Cell {
            regular: match self.regular {
                Regularity::Regular { .. } => Some(true),
                Regularity::Irregular { .. } => Some(false),
                Regularity::Undetermined => None,
            },
            bounded: self.bounded,
            cesaro_divergent: self.cesaro.verdict.divergent(),
            freq: match self.freq_mode {
                FreqMode::Weak { .. } => FreqCell::Weak,
                FreqMode::L1 { .. } => FreqCell::L1,
                FreqMode::None { .. } => FreqCell::None,
                FreqMode::Undetermined => FreqCell::Undetermined,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    ell: u64,
    tbar: f64,
    run: usize,
    t: f64,
}

/// Index count grid `1..=64` then `2^(1/(2 ppo))` spacing, each at `M_n` and at
/// the middle of increment `n`, merged with a geometric time grid.
fn probe_points(idx: &RunIndex, per_octave: u32) -> Result<Vec<Probe>> {
    let runs = idx.runs();
    let n_max = idx.len();
    let mut ns: Vec<u64> = (1..=n_max.min(64)).collect();
    let step = 2f64.powf(1.0 / (2 * per_octave) as f64);
    let mut x = 64.0 * step;
    while x < n_max as f64 {
        ns.push(x.round() as u64);
        x *= step;
    }
    ns.push(n_max);
    let mut out = Vec::new();
    for n in ns {
        let r = runs.partition_point(|s| s.first <= n) - 1;
        let s = runs[r];
        let before = s.before + (n - s.first) as f64 * s.mass;
        for tbar in [s.mass / 2.0, s.mass] {
            out.push(Probe { ell: n, tbar, run: r, t: before + tbar });
        }
    }
    let step = 2f64.powf(1.0 / per_octave as f64);
    let total = idx.total();
    let mut t = runs[0].mass * step;
    while t < total {
        let (loc, r) = idx.locate(t)?;
        out.push(Probe { ell: loc.ell as u64, tbar: loc.tbar, run: r, t: loc.before + loc.tbar });
        t *= step;
    }
    out.sort_by(|a, b| a.ell.cmp(&b.ell).then(a.tbar.total_cmp(&b.tbar)));
    out.dedup_by(|a, b| a.ell == b.ell && a.tbar == b.tbar);
    Ok(out)
}

/// Sends grid atoms whose panel profile is within `tol/4` of the profile at
/// infinity (or at zero) to that endpoint.
fn snap(measure: PointMeasure, panel: &[TestFunction], tol: f64) -> PointMeasure {
    let gap = |x: f64, y: f64| panel.iter().map(|f| (f.eval(x) - f.eval(y)).abs()).fold(0.0, f64::max);
    let atoms = measure.atoms().iter().map(|&(x, w)| {
        if x.is_finite() && x > 0.0 {
            if gap(x, f64::INFINITY) <= tol / 4.0 {
                return (f64::INFINITY, w);
            }
            if gap(x, 0.0) <= tol / 4.0 {
                return (0.0, w);
            }
        }
        (x, w)
    });
    PointMeasure::new(atoms).expect("snapped atoms are valid")
}

fn median(measure: &PointMeasure) -> f64 {
    let mut acc = 0.0;
    for &(x, w) in measure.atoms() {
        acc += w;
        if acc >= 0.5 {
            return x;
        }
    }
    measure.atoms().last().map_or(0.0, |a| a.0)
}

/// Multiplier on the median of `F_t` for the uniform-integrability cut.
const UI_FACTOR: f64 = 1024.0;

pub fn classify_prefix(idx: &PrefixIndex, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    classify(&RunIndex::from_prefix(idx), opts)
}

/// Classifies the sequence covered by `idx`.
///
/// Regularity is judged on `mu_t` along the probe times: oscillation of a
/// panel integral gives an irregular verdict with its witness, and panel
/// integrals settling within `tol` of their values at the horizon over the
/// final scale window give a regular verdict with the coarsened horizon
/// measure as candidate. Frequencies are judged the same way on `F_t`, with
/// `L^1` additionally requiring `t/ell_t` to settle and the mass above the
/// uniform-integrability cut to vanish.
pub fn classify(idx: &RunIndex, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance {} must be positive", opts.tol)));
    }
    if opts.probes_per_octave == 0 || opts.panel.is_empty() {
        return Err(Error::InvalidConfig("classification needs probes and a nonempty panel".into()));
    }
    if idx.is_empty() {
        return Err(Error::InsufficientData("empty mass sequence".into()));
    }
    let probes = probe_points(idx, opts.probes_per_octave)?;
    let (first, last) = (probes[0], *probes.last().expect("nonempty"));
    let scales = WINDOW_RATIO * WINDOW_RATIO;
    if last.t < scales * first.t || (last.ell as f64) < scales * first.ell as f64 {
        return Err(Error::InsufficientData(format!(
            "horizon of {} terms covers fewer than three probe scales",
            idx.len()
        )));
    }
    let panel = &opts.panel;
    let runs = idx.runs();
    let mu_last = build_measure(run_terms(idx, last.ell, last.run), last.tbar, last.t, last.ell, Weighting::Mass);
    let f_last = build_measure(run_terms(idx, last.ell, last.run), last.tbar, last.t, last.ell, Weighting::Count);
    let ui_cut = UI_FACTOR * median(&f_last).max(1.0);

    let nf = panel.len();
    let mut mu_vals = vec![Vec::with_capacity(probes.len()); nf];
    let mut f_vals = vec![Vec::with_capacity(probes.len()); nf];
    let mut tail = Vec::with_capacity(probes.len());
    let mut ratio = Vec::with_capacity(probes.len());
    let mut sm = vec![Compensated::new(); nf];
    let mut sc = vec![Compensated::new(); nf];
    let mut st = Compensated::new();
    let mut done = 0;
    for p in &probes {
        while done < p.run {
            let s = runs[done];
            let c = s.count as f64;
            for (k, f) in panel.iter().enumerate() {
                let v = f.eval(s.mass);
                sm[k].add(c * s.mass * v);
                sc[k].add(c * v);
            }
            if s.mass > ui_cut {
                st.add(c * s.mass);
            }
            done += 1;
        }
        let s = runs[p.run];
        let j = (p.ell - s.first) as f64;
        let ell = p.ell as f64;
        for (k, f) in panel.iter().enumerate() {
            let (vm, vt) = (f.eval(s.mass), f.eval(p.tbar));
            mu_vals[k].push((sm[k].value() + j * s.mass * vm + p.tbar * vt) / p.t);
            f_vals[k].push((sc[k].value() + j * vm + vt) / ell);
        }
        let above = |m: f64| if m > ui_cut { m } else { 0.0 };
        tail.push((st.value() + j * above(s.mass) + above(p.tbar)) / ell);
        ratio.push(p.t / ell);
    }

    let names: Vec<String> = panel.iter().map(|f| f.name()).collect();
    let times: Vec<f64> = probes.iter().map(|p| p.t).collect();
    let counts: Vec<u64> = probes.iter().map(|p| p.ell).collect();
    let count_scales: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mu_targets: Vec<f64> = mu_vals.iter().map(|v| *v.last().expect("nonempty")).collect();
    let f_targets: Vec<f64> = f_vals.iter().map(|v| *v.last().expect("nonempty")).collect();
    let (mw, mh) = windows(&times);
    let mu_probe = assess(times.clone(), counts.clone(), &mu_vals, &mu_targets, &names, opts.tol, mw, mh);
    let (fw, fh) = windows(&count_scales);
    let mut freq_probe = assess(times, counts, &f_vals, &f_targets, &names, opts.tol, fw, fh);

    let candidate = snap(mu_last.coarsen(), panel, opts.tol);
    let candidate_error = mu_last.panel_distance(&candidate, panel);
    let regular = match (&mu_probe.verdict, &mu_probe.witness) {
        (Convergence::Oscillating, Some(w)) => Regularity::Irregular { witness: w.clone() },
        (Convergence::Converged, _) => Regularity::Regular { candidate },
        _ => Regularity::Undetermined,
    };

    let last_ratio = *ratio.last().expect("nonempty");
    let freq_mode = match (&freq_probe.verdict, &freq_probe.witness) {
        (Convergence::Oscillating, Some(w)) => FreqMode::None { witness: w.clone() },
        (Convergence::Converged, _) => {
            let limit = snap(f_last.coarsen(), panel, opts.tol);
            let settled = ratio[fw..].iter().all(|r| (r - last_ratio).abs() <= opts.tol);
            let uniform = tail[fw..].iter().all(|&v| v <= opts.tol);
            if settled && uniform {
                FreqMode::L1 { limit }
            } else {
                FreqMode::Weak { limit }
            }
        }
        _ => FreqMode::Undetermined,
    };
    freq_probe.moment = Some(MomentTrail { name: "upper_tail_moment".into(), target: 0.0, values: tail });

    let root = (idx.len() as f64).sqrt().floor() as u64;
    let max_all = runs.iter().map(|s| s.mass).fold(0.0, f64::max);
    let max_root = runs.iter().take_while(|s| s.first <= root.max(1)).map(|s| s.mass).fold(0.0, f64::max);

    Ok(ClassificationReport {
        horizon_terms: idx.len(),
        horizon_time: idx.total(),
        tol: opts.tol,
        regular,
        bounded: max_all <= max_root,
        cesaro: probe_cesaro_runs(idx),
        freq_mode,
        a: 1.0 / last_ratio,
        candidate_error,
        ui_cut,
        mu_probe,
        freq_probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass_seq::MassSpec;

    fn run(spec: MassSpec, n: u64) -> ClassificationReport {
        classify(&RunIndex::until_count(&spec, n).unwrap(), &ClassifyOptions::default()).unwrap()
    }

    #[test]
    fn triangular_is_regular_half_one_half_infinity() {
        let r = run(MassSpec::Triangular, 1 << 20);
        let Regularity::Regular { candidate } = &r.regular else { panic!("{:?}", r.regular) };
        let target = PointMeasure::new([(1.0, 0.5), (f64::INFINITY, 0.5)]).unwrap();
        assert!(candidate.panel_distance(&target, &TestFunction::default_panel()) < 0.02);
        assert_eq!(r.cell().freq, FreqCell::Weak);
        assert!(!r.bounded);
    }

    #[test]
    fn remp_is_irregular_with_weak_frequency() {
        let r = run(MassSpec::Remp, 1 << 22);
        assert!(matches!(r.regular, Regularity::Irregular { .. }), "{:?}", r.regular);
        let FreqMode::Weak { limit } = &r.freq_mode else { panic!("{:?}", r.freq_mode) };
        assert!(limit.weight_at(1.0) > 0.99);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let idx = RunIndex::until_count(&MassSpec::Const { c: 1.0 }, 10).unwrap();
        assert!(classify(&idx, &ClassifyOptions::default()).is_err());
    }

    #[test]
    fn const_is_regular_bounded_l1() {
        let r = run(MassSpec::Const { c: 1.0 }, 10_000);
        assert_eq!(
            r.cell(),
            Cell { regular: Some(true), bounded: true, cesaro_divergent: Some(false), freq: FreqCell::L1 }
        );
        assert_eq!(r.a, 1.0);
    }
}
