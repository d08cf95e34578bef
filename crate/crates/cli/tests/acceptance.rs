//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with
//! `cargo test -p datadefect-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use datadefect_core::benchmark::{benchmark_at, sensitivity_band, BenchmarkSeries};
use datadefect_core::ingest::{parse_benchmark_counts, parse_waves, SchemaMode};
use datadefect_core::metrics::data_scarcity;
use datadefect_core::response_models::{
    heckman_ddc, heckman_oracle, replication_rng, simulate_logit_population, HeckmanParams,
    LogitResponseModel, SimulationSummary,
};
use datadefect_core::scenarios::{
    allocate_ddc, signed_residual, solve_population_mean, wilson_equivalent, RESIDUAL_TOLERANCE,
};
use datadefect_core::{
    ddc_population_oracle, decompose_wave, kendall_tau, FinitePopulation, PopulationFrame,
    SurveyWave,
};

// Pinned tolerances and budgets.
const IDENTITY_RTOL: f64 = 1e-12;
const IDENTITY_POPULATIONS: usize = 1_000;
const IDENTITY_BUDGET: Duration = Duration::from_secs(10);
const SOLVER_CASES: usize = 10_000;
const SOLVER_AGREEMENT: f64 = 1e-10;
const SOLVER_BUDGET: Duration = Duration::from_secs(5);
const LOGIT_RHO_TARGET: f64 = 0.46212;
const LOGIT_RHO_TOL: f64 = 0.005;
const LOGIT_F_TOL: f64 = 0.001;
const LOGIT_NULL_SE: f64 = 3.0;
const LOGIT_BUDGET: Duration = Duration::from_secs(60);
const LLP_SLOPE: f64 = 0.5;
const LLP_SLOPE_TOL: f64 = 0.05;
const HECKMAN_MC_TOL: f64 = 0.003;
const HECKMAN_TARGET: f64 = 0.33114;
const HECKMAN_TARGET_TOL: f64 = 5e-5;
const HECKMAN_DRAWS: usize = 1_000_000;
const HECKMAN_BUDGET: Duration = Duration::from_secs(30);
const MAGNITUDE_TOL_PP: f64 = 1.0;
const US_ADULTS: u64 = 255_200_373;

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

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn random_population(rng: &mut impl Rng, binary: bool, weighted: bool) -> FinitePopulation {
    loop {
        let size = rng.gen_range(2..=1000);
        let propensity = rng.gen_range(0.05..0.95);
        let y: Vec<f64> = (0..size)
            .map(|_| {
                if binary {
                    f64::from(u8::from(rng.gen_bool(0.5)))
                } else {
                    rng.gen_range(-3.0..3.0)
                }
            })
            .collect();
        let r: Vec<bool> = (0..size).map(|_| rng.gen_bool(propensity)).collect();
        let n = r.iter().filter(|&&b| b).count();
        let w = weighted.then(|| (0..n).map(|_| rng.gen_range(0.1..10.0)).collect());
        let Ok(pop) = FinitePopulation::new(y, r, w) else {
            continue;
        };
        if ddc_population_oracle(&pop).is_ok() {
            return pop;
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = replication_rng(2021, 1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..IDENTITY_POPULATIONS {
        let pop = random_population(&mut rng, i % 2 == 0, i % 4 >= 2);
        let rho = ddc_population_oracle(&pop).unwrap();
        let (n_w, _) = pop.kish_effective_n().unwrap();
        let lhs = pop.sample_mean() - pop.population_mean();
        let rhs = rho * data_scarcity(n_w, pop.size() as u64).unwrap() * pop.population_sd();
        let rel = (lhs - rhs).abs() / lhs.abs().max(1.0);
        worst = worst.max(rel);
        if rel > IDENTITY_RTOL {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < IDENTITY_BUDGET,
        format!(
            "{IDENTITY_POPULATIONS} populations (binary/continuous x unit/random weights), worst scaled residual {worst:.2e}, {failures} over {IDENTITY_RTOL:e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn wave(n: u64, de: f64, estimate: f64) -> SurveyWave {
    let d = chrono::NaiveDate::from_ymd_opt(2021, 5, 15).unwrap();
    SurveyWave {
        survey_id: "c2".into(),
        wave_start: d,
        wave_end: d,
        n,
        estimate,
        se: None,
        design_effect: Some(de),
        cv_w: None,
    }
}

fn criterion_2() -> Outcome {
    let frame = PopulationFrame::new(255_000_000, "US adults").unwrap();
    let fb = decompose_wave(&wave(250_000, 1.48, 0.57 + 0.17), &frame, 0.57).unwrap();
    let hp = decompose_wave(&wave(75_000, 4.6, 0.57 + 0.14), &frame, 0.57).unwrap();
    let fb_reduction = 1.0 - fb.n_eff / 250_000.0;
    let hp_reduction = 1.0 - hp.n_eff / 75_000.0;
    outcome(
        fb.n_eff > 5.0 && fb.n_eff < 12.0 && hp_reduction > 0.99,
        format!(
            "n=250,000: n_eff {:.2} (reduction {:.4}%); n=75,000: n_eff {:.2} (reduction {:.3}%)",
            fb.n_eff,
            fb_reduction * 100.0,
            hp.n_eff,
            hp_reduction * 100.0
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = replication_rng(2021, 3);
    let (mut worst_residual, mut worst_gap): (f64, f64) = (0.0, 0.0);
    let mut errors = 0;
    for _ in 0..SOLVER_CASES {
        let observed = rng.gen_range(0.001..0.999);
        let rho = rng.gen_range(-0.02..0.02);
        let n_w = rng.gen_range(50.0..1e6);
        let big_n = rng.gen_range((n_w as u64 * 2)..400_000_000);
        match solve_population_mean(observed, rho, n_w, big_n) {
            Ok(x) => {
                let c = rho * ((big_n as f64 - n_w) / n_w).sqrt();
                worst_residual = worst_residual.max(signed_residual(observed, c, x).abs());
                let z = rho * (big_n as f64).sqrt();
                match wilson_equivalent(observed, z, n_w, n_w / big_n as f64) {
                    Ok(w) => worst_gap = worst_gap.max((w - x).abs()),
                    Err(_) => errors += 1,
                }
            }
            Err(_) => errors += 1,
        }
    }
    // access scenario, lambda = 1: all of the uptake ddc moves to willingness
    let mut unchanged = true;
    for &(h, rho_v) in &[(0.145, 0.0084), (0.3, -0.002), (0.05, 0.0003)] {
        let (rho_h, _) = allocate_ddc(rho_v, 1.0);
        let x = solve_population_mean(h, rho_h, 168_919.0, 255_000_000).unwrap();
        unchanged &= x == h;
    }
    let elapsed = start.elapsed();
    outcome(
        errors == 0
            && worst_residual <= RESIDUAL_TOLERANCE
            && worst_gap <= SOLVER_AGREEMENT
            && unchanged
            && elapsed < SOLVER_BUDGET,
        format!(
            "{SOLVER_CASES} cases, max residual {worst_residual:.2e}, max |solver - wilson| {worst_gap:.2e}, {errors} errors, lambda=1 hesitancy unchanged: {unchanged}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn logit(beta: f64, population: u64, reps: usize, seed: u64) -> SimulationSummary {
    let model = LogitResponseModel::new(-1.0, beta, 0.5).unwrap();
    simulate_logit_population(&model, population, seed, reps).unwrap()
}

fn criterion_4() -> (Outcome, SimulationSummary) {
    let start = Instant::now();
    let s = logit(2.0, 1_000_000, 200, 4);
    let null = logit(0.0, 1_000_000, 200, 5);
    let elapsed = start.elapsed();
    let null_se = null.rho.standard_error(null.replications);
    let pass = (s.rho.mean - LOGIT_RHO_TARGET).abs() < LOGIT_RHO_TOL
        && (s.f.mean - 0.5).abs() < LOGIT_F_TOL
        && null.rho.mean.abs() <= LOGIT_NULL_SE * null_se
        && elapsed < LOGIT_BUDGET;
    let detail = format!(
        "mean rho {:.5} (target {LOGIT_RHO_TARGET}), mean f {:.5}; beta=0 mean rho {:.2e} vs 3 SE {:.2e}; {:.1}s for 2 x 200 reps at N=1e6",
        s.rho.mean,
        s.f.mean,
        null.rho.mean,
        LOGIT_NULL_SE * null_se,
        elapsed.as_secs_f64()
    );
    (outcome(pass, detail), s)
}

fn criterion_5(at_million: &SimulationSummary) -> Outcome {
    let points: Vec<(f64, f64)> = [10_000u64, 100_000]
        .iter()
        .map(|&n| (n as f64, logit(2.0, n, 200, 6).z.mean))
        .chain(std::iter::once((1e6, at_million.z.mean)))
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.abs().ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    outcome(
        (slope - LLP_SLOPE).abs() <= LLP_SLOPE_TOL,
        format!(
            "slope of log mean Z on log N = {slope:.4}; mean Z = {}",
            points
                .iter()
                .map(|(n, z)| format!("{z:.1} @ N={n:.0e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut i = 0;
    for r in [-0.8, -0.3, 0.3, 0.8] {
        for z in [-1.0, 0.0, 1.0] {
            let p = HeckmanParams::new(r, z).unwrap();
            let exact = heckman_ddc(&p).unwrap();
            let mc = heckman_oracle(&p, HECKMAN_DRAWS, 600 + i).unwrap();
            worst = worst.max((mc - exact).abs());
            i += 1;
        }
    }
    let anchor = heckman_ddc(&HeckmanParams::new(0.5, 1.0).unwrap()).unwrap();
    let elapsed = start.elapsed();
    outcome(
        worst <= HECKMAN_MC_TOL
            && (anchor - HECKMAN_TARGET).abs() <= HECKMAN_TARGET_TOL
            && elapsed < HECKMAN_BUDGET,
        format!(
            "12-point grid, 1e6 draws each: max |MC - analytic| {worst:.5}; analytic(0.5, 1) = {anchor:.6}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct Survey {
    name: &'static str,
    waves: Vec<SurveyWave>,
    /// Error in percentage points encoded for the last May wave.
    expected_error_pp: f64,
}

fn load_surveys() -> (Vec<Survey>, BenchmarkSeries, PopulationFrame) {
    let dir = fixtures();
    let frame = PopulationFrame::new(US_ADULTS, "US adults").unwrap();
    let series =
        parse_benchmark_counts(dir.join("cdc_benchmark.csv"), &frame, SchemaMode::Strict).unwrap();
    let survey = |name, file: &str, expected_error_pp| {
        let parsed = parse_waves(dir.join(file), SchemaMode::Strict).unwrap();
        assert!(parsed.rejected.is_empty());
        Survey {
            name,
            waves: parsed.waves,
            expected_error_pp,
        }
    };
    let surveys = vec![
        survey("Axios-Ipsos", "axios_ipsos.csv", 4.2),
        survey("Household Pulse", "household_pulse.csv", 14.0),
        survey("Delphi-Facebook", "delphi_facebook.csv", 17.0),
    ];
    (surveys, series, frame)
}

/// |ddc| range and final total error (pp) over each survey's May 2021 waves.
fn may_summary(
    surveys: &[Survey],
    series: &BenchmarkSeries,
    frame: &PopulationFrame,
    factor: f64,
) -> Vec<(f64, f64, f64)> {
    surveys
        .iter()
        .map(|s| {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            let mut last_error = f64::NAN;
            for w in s
                .waves
                .iter()
                .filter(|w| w.wave_end.format("%Y-%m").to_string() == "2021-05")
            {
                let base = benchmark_at(series, w.wave_end).unwrap();
                let bench = sensitivity_band(base, &[factor]).unwrap()[0];
                let d = decompose_wave(w, frame, bench).unwrap();
                lo = lo.min(d.ddc.abs());
                hi = hi.max(d.ddc.abs());
                last_error = d.total_error * 100.0;
            }
            (lo, hi, last_error)
        })
        .collect()
}

fn ordered(summary: &[(f64, f64, f64)]) -> bool {
    // every May |ddc| of a lower-ranked survey sits below every May |ddc| of
    // the next one
    summary.windows(2).all(|w| w[0].1 < w[1].0)
}

fn criterion_7() -> Outcome {
    let (surveys, series, frame) = load_surveys();
    let summary = may_summary(&surveys, &series, &frame, 1.0);
    let ddc_ordered = ordered(&summary);
    let errors_ordered = summary.windows(2).all(|w| w[0].2 < w[1].2);
    let magnitudes_ok = surveys
        .iter()
        .zip(&summary)
        .all(|(s, m)| (m.2 - s.expected_error_pp).abs() <= MAGNITUDE_TOL_PP);
    let detail = surveys
        .iter()
        .zip(&summary)
        .map(|(s, m)| format!("{} |ddc| {:.5}-{:.5}, error {:.2}pp", s.name, m.0, m.1, m.2))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(ddc_ordered && errors_ordered && magnitudes_ok, detail)
}

fn criterion_8() -> Outcome {
    let (surveys, series, frame) = load_surveys();
    let mut held = Vec::new();
    let mut all = true;
    for factor in [0.9, 0.95, 1.05, 1.1] {
        let ok = ordered(&may_summary(&surveys, &series, &frame, factor));
        all &= ok;
        held.push(format!(
            "{factor}: {}",
            if ok { "ordered" } else { "VIOLATED" }
        ));
    }
    outcome(
        all,
        format!("|ddc| ordering under benchmark factors {}", held.join(", ")),
    )
}

fn criterion_9() -> Outcome {
    fn brute(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0i32;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                s += ((a[i] - a[j]) * (b[i] - b[j])).signum() as i32;
            }
        }
        f64::from(s) / 10.0
    }
    let base = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut perm = base;
    let mut count = 0;
    let mut mismatches = 0;
    // Heap's algorithm
    let mut c = [0usize; 5];
    let mut check = |p: &[f64; 5]| {
        count += 1;
        if kendall_tau(&base, p).unwrap() != brute(&base, p) {
            mismatches += 1;
        }
    };
    check(&perm);
    let mut i = 0;
    while i < 5 {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            check(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    outcome(
        count == 120 && mismatches == 0,
        format!("{count} permutations, {mismatches} mismatches against all-pairs enumeration"),
    )
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_datadefect");
    let root = std::env::temp_dir().join(format!("datadefect-acceptance-{}", std::process::id()));
    let commands: [&[&str]; 2] = [
        &[
            "simulate-logit",
            "--alpha",
            "-1",
            "--beta",
            "2",
            "--mu",
            "0.5",
            "--N",
            "1000000",
            "--reps",
            "200",
            "--seed",
            "7",
        ],
        &[
            "simulate-heckman",
            "--grid",
            "--draws",
            "200000",
            "--seed",
            "7",
        ],
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    for run in ["a", "b"] {
        for args in commands {
            let status = Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(root.join(run))
                .output()
                .expect("binary runs");
            if !status.status.success() {
                failed.push(args[0]);
            }
        }
    }
    if let Ok(entries) = fs::read_dir(root.join("a")) {
        for e in entries.flatten() {
            let name = e.file_name();
            let a = fs::read(e.path()).unwrap_or_default();
            let b = fs::read(root.join("b").join(&name)).unwrap_or_default();
            compared += 1;
            if a != b || a.is_empty() {
                differing.push(name.to_string_lossy().to_string());
            }
        }
    }
    let _ = fs::remove_dir_all(&root);
    outcome(
        failed.is_empty() && differing.is_empty() && compared == 3,
        format!("{compared} output files compared across two runs; differing: {differing:?}; failed commands: {failed:?}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "exact identities", criterion_1()));
    results.push((2, "effective sample size", criterion_2()));
    results.push((3, "scenario solver", criterion_3()));
    let (c4, at_million) = criterion_4();
    results.push((4, "logit convergence", c4));
    results.push((5, "law of large populations", criterion_5(&at_million)));
    results.push((6, "Heckman agreement", criterion_6()));
    results.push((7, "figure ordering from fixtures", criterion_7()));
    results.push((8, "sensitivity bands", criterion_8()));
    results.push((9, "Kendall tau", criterion_9()));
    results.push((10, "determinism", criterion_10()));

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
