//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gsd_core::gsd::{d_matrix, egsd_front_from, nonnegative, EmpiricalMeasure, StatisticEngine};
use gsd_core::permtest::{resample_pair, SplitSampler};
use gsd_core::prefsys::{build_constraints, granularity, ConstraintLimits};
use gsd_core::robust::{aggregate_curve, challenger_curves, contamination_pvalue};
use gsd_core::synth::{consistency_experiment, fsd_oracle, grid_oracle_d, PopulationModel};
use gsd_core::{
    d_statistic, pairwise_test, pareto_front, EvaluationPoint, GsdOptions, PerformanceTable, ResamplingPlan, ScaleSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn table(scale: &ScaleSpec, rows: Vec<Vec<EvaluationPoint>>) -> PerformanceTable {
    let s = rows[0].len();
    PerformanceTable::new(
        (0..rows.len()).map(|c| format!("C{c}")).collect(),
        (0..s).map(|d| format!("D{d}")).collect(),
        scale.clone(),
        rows,
    )
    .expect("generated table is valid")
}

/// `levels` equally spaced interior values, `(i + 0.5) / levels`.
fn level(rng: &mut ChaCha8Rng, levels: usize) -> f64 {
    (rng.random_range(0..levels) as f64 + 0.5) / levels as f64
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, z: usize) -> EvaluationPoint {
    EvaluationPoint::new(
        (0..n)
            .map(|j| {
                if j < z {
                    rng.random_range(0..=100) as f64 / 100.0
                } else {
                    level(rng, 10)
                }
            })
            .collect(),
    )
}

fn front_containment() -> Outcome {
    let scale = ScaleSpec::mixed(3, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut violations = 0;
    for _ in 0..100 {
        let rows = (0..4)
            .map(|_| (0..20).map(|_| random_point(&mut rng, 3, 1)).collect())
            .collect();
        let t = table(&scale, rows);
        let d = d_matrix(&t, &GsdOptions::default()).unwrap();
        let (e1, e2) = (egsd_front_from(&d, 0.05), egsd_front_from(&d, 0.2));
        let pareto = pareto_front(&t).unwrap();
        if !(e2.is_subset_of(&e1) && e1.is_subset_of(&pareto)) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations}/100 containment violations"))
}

fn fsd_equivalence() -> Outcome {
    let scale = ScaleSpec::ordinal(&["m"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut agree = 0;
    for _ in 0..200 {
        let s = rng.random_range(2..=15);
        let levels = rng.random_range(2..=12);
        let x: Vec<f64> = (0..s).map(|_| level(&mut rng, levels)).collect();
        let y: Vec<f64> = (0..s).map(|_| level(&mut rng, levels)).collect();
        let wrap = |v: &[f64]| v.iter().map(|&a| EvaluationPoint::new(vec![a])).collect();
        let t = table(&scale, vec![wrap(&x), wrap(&y)]);
        let d = d_statistic("C0", "C1", &t, 0.0).unwrap().value;
        if nonnegative(d) == fsd_oracle(&x, &y) {
            agree += 1;
        }
    }
    outcome(
        agree == 200,
        format!("{agree}/200 instances agree with the ECDF oracle"),
    )
}

fn grid_bound() -> Outcome {
    const G: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=2);
        let z = rng.random_range(0..=n);
        let scale = ScaleSpec::mixed(n, z).unwrap();
        let (zero, one) = (EvaluationPoint::zeros(n), EvaluationPoint::ones(n));
        let mut points: Vec<EvaluationPoint> = Vec::new();
        let want = rng.random_range(1..=4);
        while points.len() < want {
            let p = EvaluationPoint::new((0..n).map(|_| rng.random_range(0..=G) as f64 / G as f64).collect());
            if p != zero && p != one && !points.contains(&p) {
                points.push(p);
            }
        }
        let draw = |rng: &mut ChaCha8Rng| -> Vec<EvaluationPoint> {
            let s = rng.random_range(2..=5);
            (0..s)
                .map(|_| points[rng.random_range(0..points.len())].clone())
                .collect()
        };
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        let (mx, my) = (EmpiricalMeasure::from_sample(&x), EmpiricalMeasure::from_sample(&y));
        let engine = StatisticEngine::new(&points, &scale, 0.0, ConstraintLimits::default()).unwrap();
        let lp = engine
            .minimize(&engine.measure_objective(&mx, &my).unwrap())
            .unwrap()
            .value;
        let grid = grid_oracle_d(&mx, &my, &points, &scale, G).unwrap();
        let bound = points.len() as f64 / G as f64;
        if !(lp <= grid + 1e-9 && grid - lp <= bound + 1e-9) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max((grid - lp) / bound);
    }
    outcome(
        violations == 0,
        format!("{violations}/100 violations, largest gap / bound = {worst_ratio:.3}"),
    )
}

fn exhaustive_equality() -> Outcome {
    let scale = ScaleSpec::mixed(2, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let enumerating = ResamplingPlan::sampled(20, 9)
        .with_sampler(SplitSampler::Enumerating)
        .with_observed(false);
    let mut mismatches = 0;
    let mut rule_failures = 0;
    for _ in 0..50 {
        let rows: Vec<Vec<EvaluationPoint>> = (0..2)
            .map(|_| (0..3).map(|_| random_point(&mut rng, 2, 1)).collect())
            .collect();
        let exhaustive = resample_pair(
            &rows[0],
            &rows[1],
            &scale,
            &ResamplingPlan::exhaustive(),
            0.0,
            ConstraintLimits::default(),
        )
        .unwrap();
        let sampled = resample_pair(
            &rows[0],
            &rows[1],
            &scale,
            &enumerating,
            0.0,
            ConstraintLimits::default(),
        )
        .unwrap();
        if exhaustive.resampled.len() != 20 || exhaustive.resampled != sampled.resampled {
            mismatches += 1;
        }
        let t = table(&scale, rows);
        let r = pairwise_test("C0", "C1", &t, 0.05, &ResamplingPlan::exhaustive(), 0.0).unwrap();
        // The observed split is one of the 20, so it never lies strictly below the minimum.
        let below_min = r.observed < r.resampled[0] - 1e-9;
        if r.ell != 1 || r.critical_value != Some(r.resampled[0]) || r.reject != below_min || r.reject {
            rule_failures += 1;
        }
        let shifted = gsd_core::PairwiseTestResult {
            observed: r.resampled[0] - 0.01,
            ..r.clone()
        }
        .at_level(0.05);
        if !shifted.reject {
            rule_failures += 1;
        }
    }
    outcome(
        mismatches == 0 && rule_failures == 0,
        format!("{mismatches}/50 multiset mismatches, {rule_failures} decision-rule failures (ell = 1)"),
    )
}

fn level_validity() -> Outcome {
    const RUNS: u64 = 200;
    let scale = ScaleSpec::mixed(2, 1).unwrap();
    let rejections: usize = (0..RUNS)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + run);
            let mut draw = || -> Vec<EvaluationPoint> {
                (0..10)
                    .map(|_| EvaluationPoint::new(vec![level(&mut rng, 10), level(&mut rng, 5)]))
                    .collect()
            };
            let t = table(&scale, vec![draw(), draw()]);
            let r = pairwise_test("C0", "C1", &t, 0.05, &ResamplingPlan::sampled(100, run), 0.0).unwrap();
            usize::from(r.reject)
        })
        .sum();
    let rate = rejections as f64 / RUNS as f64;
    let limit = 0.05 + 3.0 * (0.05f64 * 0.95 / RUNS as f64).sqrt();
    outcome(
        rate <= limit,
        format!("rejection rate {rate:.3} (limit {limit:.3}) over {RUNS} null runs"),
    )
}

fn consistency() -> Outcome {
    let report = consistency_experiment(&PopulationModel::default_model(), &[50, 200, 800], 50, 1.0, 606).unwrap();
    let rates: Vec<(f64, f64)> = report
        .summaries
        .iter()
        .map(|s| (s.recovery_rate, s.superset_rate))
        .collect();
    let nondecreasing = rates.windows(2).all(|w| w[0].0 <= w[1].0);
    let superset_dominates = rates.iter().all(|(r, s)| s >= r);
    let last = rates.last().unwrap().1;
    let text = report
        .summaries
        .iter()
        .map(|s| {
            format!(
                "s={} recovery {:.2} superset {:.2}",
                s.s, s.recovery_rate, s.superset_rate
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(nondecreasing && superset_dominates && last >= 0.95, text)
}

/// Direct count of the contamination formula, kept apart from the library code.
fn f_oracle(resampled: &[f64], observed: f64, k: usize, s: usize) -> f64 {
    let threshold = 2.0 * k as f64 / (s - k) as f64;
    let exceed = resampled.iter().filter(|&&d| d - observed > threshold + 1e-9).count();
    1.0 - exceed as f64 / resampled.len() as f64
}

fn contamination() -> Outcome {
    let mut failures = Vec::new();
    let r = [-0.2, -0.1, 0.0, 0.1];
    for (k, expected) in [(0, 0.0), (1, 0.5)] {
        if contamination_pvalue(&r, -0.3, k, 10).unwrap() != expected {
            failures.push(format!("hand value k={k}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut monotone_violations = 0;
    for _ in 0..1000 {
        let s = rng.random_range(2..=40);
        let len = rng.random_range(1..=200);
        let res: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obs = rng.random_range(-1.0..1.0);
        let curve: Vec<f64> = (0..s).map(|k| contamination_pvalue(&res, obs, k, s).unwrap()).collect();
        if curve.windows(2).any(|w| w[1] < w[0]) {
            monotone_violations += 1;
        }
        if curve
            .iter()
            .enumerate()
            .any(|(k, &v)| (v - f_oracle(&res, obs, k, s)).abs() > 1e-12)
        {
            failures.push("oracle mismatch".into());
        }
    }
    if monotone_violations > 0 {
        failures.push(format!("{monotone_violations} monotonicity violations"));
    }
    let scale = ScaleSpec::mixed(2, 1).unwrap();
    let rows = (0..4)
        .map(|_| (0..8).map(|_| random_point(&mut rng, 2, 1)).collect())
        .collect();
    let t = table(&scale, rows);
    let curves = challenger_curves("C0", &t, &ResamplingPlan::sampled(100, 1), 0.0, 2).unwrap();
    let agg = aggregate_curve(&curves).unwrap();
    for k in 0..=2 {
        let max = curves.iter().map(|c| c.values[k]).fold(f64::NEG_INFINITY, f64::max);
        if agg.values[k] != max {
            failures.push(format!("aggregate differs from max at k={k}"));
        }
    }
    failures.dedup();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "hand values exact; 0/1000 monotonicity violations; aggregate equals pointwise max".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn granularity_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        for z in 0..=n {
            let cs = build_constraints(&[], &ScaleSpec::mixed(n, z).unwrap(), ConstraintLimits::default()).unwrap();
            worst = worst.max((granularity(&cs).unwrap().xi_star - 1.0).abs());
        }
    }
    // u(0.5) - u(0) = u(1) - u(0.5) forces u(0.5) = 1/2, hence margin 1/2.
    let half = EvaluationPoint::new(vec![0.5]);
    let cs = build_constraints(
        &[half],
        &ScaleSpec::cardinal(&["c"]).unwrap(),
        ConstraintLimits::default(),
    )
    .unwrap();
    let xi = granularity(&cs).unwrap().xi_star;
    let err = worst.max((xi - 0.5).abs());
    outcome(
        err <= 1e-9,
        format!("xi* on {{0,1}}-only systems within {worst:.1e} of 1; cardinal {{0,0.5,1}} gives {xi}"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_gsd"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let sample = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../sample");
    let csv = sample.join("results.csv");
    let config = sample.join("config.toml");
    let (csv, config) = (csv.to_str().unwrap(), config.to_str().unwrap());
    let commands: Vec<Vec<&str>> = vec![
        vec!["analyze", csv, "--config", config],
        vec![
            "analyze",
            csv,
            "--config",
            config,
            "--scope",
            "suite",
            "--epsilon",
            "0.05",
        ],
        vec!["test", csv, "--config", config, "--target", "SVM", "--resamples", "200"],
        vec![
            "robust",
            csv,
            "--config",
            config,
            "--target",
            "RF",
            "--resamples",
            "200",
        ],
        vec!["baseline", csv, "--config", config],
        vec!["simulate", "--s-grid", "20,60", "--runs", "6", "--seed", "5"],
        vec!["validate", csv, "--config", config],
    ];
    let root = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    let mut file_count = 0;
    for (i, cmd) in commands.iter().enumerate() {
        let dirs: Vec<PathBuf> = (0..2).map(|rep| root.path().join(format!("{i}-{rep}"))).collect();
        for d in &dirs {
            let mut args = vec!["--out", d.to_str().unwrap()];
            args.extend(cmd);
            if let Err(e) = run_cli(&args) {
                return outcome(false, format!("command failed: {e}"));
            }
        }
        let (a, b) = (files(&dirs[0]), files(&dirs[1]));
        file_count += a.len();
        if a.is_empty() || a != b {
            differing.push(cmd[0]);
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} commands, {file_count} files compared; differing: {}",
            commands.len(),
            if differing.is_empty() {
                "none".to_string()
            } else {
                differing.join(", ")
            }
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("front containment", front_containment),
        ("FSD oracle equivalence", fsd_equivalence),
        ("grid-oracle bound", grid_bound),
        ("exhaustive permutation equality", exhaustive_equality),
        ("level-alpha validity", level_validity),
        ("consistency experiment", consistency),
        ("contamination formula", contamination),
        ("granularity", granularity_check),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} {:<32} {} ({:.1}s): {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
