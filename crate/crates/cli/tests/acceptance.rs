//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any fails.

use massgame::catalog::catalog;
use massgame::empirical::{classify, duality_check, lt_check, ClassifyOptions, TestFunction};
use massgame::mass_seq::{MassSpec, PrefixIndex};
use massgame::montecarlo::{
    counterexample_s1, counterexample_w2, limit_probe, run, strong_probe, GridSpec, LimitVerdict, S1Options, SimConfig,
    Tolerance, Trend, Verdict, W2Options,
};
use massgame::rng::StreamKey;
use massgame::rv_family::FamilySpec;
use massgame::summation::{expected_gradual, gradual, incremental, scale_decompose, toeplitz_check};
use rand::Rng;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_prefix(rng: &mut impl Rng) -> PrefixIndex {
    let n = rng.random_range(1..200);
    let masses: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => 1.0,
            1 => rng.random_range(1..5) as f64,
            _ => 10f64.powf(rng.random_range(-3.0..3.0)),
        })
        .collect();
    PrefixIndex::from_masses(&masses).unwrap()
}

fn random_function(rng: &mut impl Rng) -> TestFunction {
    match rng.random_range(0..5) {
        0 => TestFunction::Reciprocal,
        1 => TestFunction::Arctan,
        2 => TestFunction::ExpNeg,
        3 => TestFunction::Ramp { a: rng.random_range(0.1..50.0) },
        _ => TestFunction::Capped { cap: rng.random_range(0.1..50.0) },
    }
}

fn exact_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = StreamKey::new(2024, 0).stream(0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_prefix(&mut rng);
        let t = rng.random_range(1e-9..1.0) * p.total();
        let f = random_function(&mut rng);
        worst = worst.max(duality_check(&p, t, &f).unwrap().discrepancy);
        worst = worst.max(lt_check(&p, t).unwrap().discrepancy);
    }
    if worst > 1e-12 {
        return Err(format!("duality or lt discrepancy {worst:e}"));
    }

    let specs = [MassSpec::Const { c: 1.0 }, MassSpec::Triangular, MassSpec::Cesar, MassSpec::Divergent, MassSpec::Fnot];
    let families = [FamilySpec::RwBounded, FamilySpec::GaussScaled, FamilySpec::Biased { profile: Default::default() }];
    for case in 0..50u64 {
        let spec = &specs[rng.random_range(0..specs.len())];
        let fam = families[rng.random_range(0..families.len())].build(case).unwrap();
        let p = spec.prefix(150).unwrap();
        let n = rng.random_range(1..=150);
        let key = StreamKey::new(case, 7);
        let a = incremental(&p, &fam, n, &key).unwrap().value;
        let b = gradual(&p, &fam, p.cum(n), &key).unwrap().value;
        if a.to_bits() != b.to_bits() {
            return Err(format!("gradual and incremental differ for {spec} at n = {n}: {a} vs {b}"));
        }
    }

    let walk = FamilySpec::RwBounded.build(0).unwrap();
    let mut worst_split = 0.0f64;
    for case in 0..50u64 {
        let p = random_prefix(&mut rng);
        let n = p.len();
        let d = scale_decompose(&p, n, rng.random_range(0.05..3.0), rng.random_range(0.05..3.0)).unwrap();
        let key = StreamKey::new(case, 11);
        let xs: Vec<f64> = (1..=n).map(|k| walk.sample_x(&key, k as u64, p.mass(k)).unwrap()).collect();
        let (small, large) = d.partial_sums(&p, &xs).unwrap();
        let whole = incremental(&p, &walk, n, &key).unwrap().value;
        let scale: f64 = (1..=n).map(|k| p.mass(k) / p.cum(n) * xs[k - 1].abs()).sum();
        let split = small.iter().sum::<f64>() + large;
        worst_split = worst_split.max((split - whole).abs() / scale.max(f64::MIN_POSITIVE));
    }
    if worst_split > 1e-12 {
        return Err(format!("scale decomposition discrepancy {worst_split:e}"));
    }

    for _ in 0..20 {
        let p = random_prefix(&mut rng);
        if !toeplitz_check(&p, (1, p.len()), (1, 1)).unwrap().row_sums_exact {
            return Err("a Toeplitz row sum differs from 1".into());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, format!("worst relative discrepancy {:e}, {secs:.2} s", worst.max(worst_split)))
}

fn strong_law() -> Outcome {
    let masses = ["const:1", "example_F0", "example_cesar", "example_divergent", "iid:uniform:1,2"];
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, m) in masses.iter().enumerate() {
        let seed = 100 + i as u64;
        let spec = m.parse::<MassSpec>().unwrap().with_default_seed(seed);
        let cfg = SimConfig::new(spec, FamilySpec::RwBounded, GridSpec::geometric(1e6), 200, seed);
        let traj = run(&cfg).map_err(|e| e.to_string())?;
        let s = strong_probe(&traj, &[0.05], &[1e5], &Tolerance::default()).map_err(|e| e.to_string())?;
        let frac = s.fractions[0][0].estimate;
        ok &= frac <= 0.01;
        parts.push(format!("{m} {frac}"));
    }
    check(ok, format!("tail fractions: {}", parts.join(", ")))
}

fn game_of_mass_limits() -> Outcome {
    let tol = Tolerance::default();
    let cases = [("example_triangular", 0.75), ("example_cesar", 1.0), ("iid:uniform:1,2", 1.0 / 6.0 + 4.0 / 9.0)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (m, target) in cases {
        let spec = m.parse::<MassSpec>().unwrap().with_default_seed(3);
        let cfg = SimConfig::new(spec, FamilySpec::Biased { profile: Default::default() }, GridSpec::geometric(1e6), 50, 3);
        let traj = run(&cfg).map_err(|e| e.to_string())?;
        let l = limit_probe(&traj, None, 0.05, &tol).map_err(|e| e.to_string())?;
        let converged = matches!(l.verdict, LimitVerdict::Converging { limit } if (limit - target).abs() <= tol.limit_tol);
        ok &= converged && (l.v_hat - target).abs() <= tol.limit_tol;
        parts.push(format!("{m} E = {:.4}, mean = {:.4} (target {target:.4})", l.expected_last, l.v_hat));
    }
    let remp = "example_remp".parse::<MassSpec>().unwrap();
    let cfg = SimConfig::new(remp, FamilySpec::Biased { profile: Default::default() }, GridSpec::geometric(1e7), 10, 3);
    let traj = run(&cfg).map_err(|e| e.to_string())?;
    let l = limit_probe(&traj, None, 0.05, &tol).map_err(|e| e.to_string())?;
    let spread = l.expected_range.1 - l.expected_range.0;
    ok &= matches!(l.verdict, LimitVerdict::Oscillating { .. }) && spread > 0.3;
    parts.push(format!("example_remp spread {spread:.3}"));
    check(ok, parts.join("; "))
}

fn craz_boundary() -> Outcome {
    let start = Instant::now();
    let p = MassSpec::Geometric { base: 2.0 }.prefix(20).unwrap();
    let fam = FamilySpec::CrazMean.build(0).unwrap();
    let at_sum = expected_gradual(&p, &fam, p.cum(20)).map_err(|e| e.to_string())?;
    let mid = expected_gradual(&p, &fam, p.cum(19) + p.mass(20) / 2.0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        at_sum.abs() <= 0.01 && (mid - 0.25).abs() <= 0.01 && secs < 1.0,
        format!("at M_20: {at_sum:e}; at the midpoint of increment 20: {mid:.6} (required 0.25 +- 0.01)"),
    )
}

fn w2_counterexample() -> Outcome {
    let opts = W2Options { budget: 10_000, seed: 1, ..W2Options::default() };
    let r = counterexample_w2(&opts).map_err(|e| e.to_string())?;
    let est: Vec<String> = r.checkpoints.iter().map(|c| format!("N = {}: {}", c.horizon, c.exceed.estimate)).collect();
    check(r.checkpoints.len() == 3 && r.checkpoints.iter().all(|c| c.exceed.estimate >= 0.45), est.join(", "))
}

fn s1_counterexample() -> Outcome {
    let opts = S1Options { horizon: 1000, replications: 200, seed: 1, ..S1Options::default() };
    let r = counterexample_s1(&opts).map_err(|e| e.to_string())?;
    let last = r.checkpoints.iter().find(|c| c.k == 1000).ok_or("no checkpoint at K = 1000")?;
    let trend = r.weak.per_eps[0].trend;
    check(
        last.within_3se && r.strong.verdict == Verdict::NotConverging && trend == Trend::Decreasing,
        format!(
            "mean jumps {} vs {:.4} (3 se = {:.3}); strong {:?}; weak trend {:?}",
            last.mean_count,
            last.expected,
            3.0 * last.standard_error,
            r.strong.verdict,
            trend
        ),
    )
}

fn classification_table() -> Outcome {
    let entries: Vec<_> = catalog().into_iter().filter(|e| e.expected.is_some()).collect();
    let mut mismatches = Vec::new();
    for e in &entries {
        let idx = e.horizon.index(&e.spec).map_err(|x| x.to_string())?;
        let cell = classify(&idx, &ClassifyOptions::default()).map_err(|x| x.to_string())?.cell();
        if Some(cell) != e.expected {
            mismatches.push(e.key.clone());
        }
    }
    check(
        entries.len() == 15 && mismatches.is_empty(),
        format!("{} sequences, mismatches: [{}]", entries.len(), mismatches.join(", ")),
    )
}

fn determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("massgame-acceptance-{}", std::process::id()));
    let experiments: [&[&str]; 2] = [
        &["simulate", "--mass", "iid:uniform:1,2", "--family", "rw_bounded", "--seed", "5", "--horizon", "1e5", "--reps", "64"],
        &["counterexample", "s1", "--K", "300", "--reps", "64", "--seed", "5"],
    ];
    let mut result = Ok(format!("{} experiments byte-identical with 1 and 4 threads", experiments.len()));
    'outer: for (i, args) in experiments.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let dir = tmp.join(format!("{i}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_massgame"))
                .args(["--threads", threads, "--out", dir.to_str().unwrap()])
                .args(*args)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                result = Err(format!("{} failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)));
                break 'outer;
            }
            outputs.push((std::fs::read(dir.join("report.json")).unwrap(), std::fs::read(dir.join("data.csv")).unwrap()));
        }
        if outputs[0] != outputs[1] {
            result = Err(format!("{} differs between thread counts", args.join(" ")));
            break;
        }
    }
    let _ = std::fs::remove_dir_all(&tmp);
    result
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("exact identities", exact_identities),
        ("strong law for bounded walks", strong_law),
        ("limits of the biased family", game_of_mass_limits),
        ("boundary effect of the geometric sequence", craz_boundary),
        ("weak-law counterexample", w2_counterexample),
        ("strong-law counterexample", s1_counterexample),
        ("classification table", classification_table),
        ("thread-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} ({name}): {tag} [{:.1} s] {detail}", i + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
