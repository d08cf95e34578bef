//! `datadefect`: decompositions, scenario bands and simulations from CSV
//! inputs. Every output file carries a provenance header; identical inputs
//! and flags give byte-identical files.

mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use datadefect_core::benchmark::{
    benchmark_at, impute_adult_series, sensitivity_band, BenchmarkSeries,
};
use datadefect_core::ingest::{
    as_of_from_path, composition_compare, parse_age_table_str, parse_benchmark_counts_str,
    parse_composition_str, parse_outcomes_str, parse_waves_str, SchemaMode,
};
use datadefect_core::response_models::{
    heckman_ddc, heckman_oracle, heckman_oracle_antithetic, logit_bias_mse,
    simulate_logit_population, HeckmanParams, LogitResponseModel,
};
use datadefect_core::scenarios::{
    scenario_band, solve_population_mean, ScenarioName, ScenarioSpec,
};
use datadefect_core::{decompose_wave, Error, PopulationFrame, SurveyWave};

use output::{write_tables, Cell, Format, Provenance, Table};

#[derive(Parser)]
#[command(
    name = "datadefect",
    version,
    about = "Survey error decomposition and data defect diagnostics"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Accept reordered or extra columns and missing optional columns; skip
    /// rejected wave rows with a warning instead of failing.
    #[arg(long, global = true)]
    lax: bool,
    /// Benchmark sensitivity factors. The unperturbed benchmark (1) is
    /// always included.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = vec![0.9, 0.95, 1.05, 1.1])]
    factors: Vec<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose each wave's error under every benchmark scenario.
    Decompose(DecomposeArgs),
    /// Bias-adjusted effective sample size for one estimate.
    Neff(NeffArgs),
    /// Correct willingness and hesitancy under a split of the uptake ddc.
    Scenario(ScenarioArgs),
    /// Monte Carlo finite populations under a logit response model.
    SimulateLogit(LogitArgs),
    /// Latent-selection ddc: closed form against Monte Carlo.
    SimulateHeckman(HeckmanArgs),
    /// Impute an adult benchmark series from all-ages totals.
    ImputeBenchmark(ImputeArgs),
    /// Benchmark proportions under each sensitivity factor.
    Sensitivity(SensitivityArgs),
    /// Compare sample composition with a population benchmark.
    CompareComposition(CompositionArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Decompose(_) => "decompose",
            Command::Neff(_) => "neff",
            Command::Scenario(_) => "scenario",
            Command::SimulateLogit(_) => "simulate-logit",
            Command::SimulateHeckman(_) => "simulate-heckman",
            Command::ImputeBenchmark(_) => "impute-benchmark",
            Command::Sensitivity(_) => "sensitivity",
            Command::CompareComposition(_) => "compare-composition",
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// Wave files; may be repeated or comma-separated.
    #[arg(long, required = true, value_delimiter = ',')]
    waves: Vec<PathBuf>,
    /// Cumulative benchmark counts.
    #[arg(long)]
    benchmark: PathBuf,
    /// Target population size N.
    #[arg(long, visible_alias = "N")]
    population: u64,
}

#[derive(Args)]
struct NeffArgs {
    #[arg(long)]
    n: u64,
    /// Survey estimate, as a proportion.
    #[arg(long)]
    estimate: f64,
    /// Benchmark proportion.
    #[arg(long)]
    benchmark: f64,
    #[arg(long, visible_alias = "N")]
    population: u64,
    #[arg(long, conflicts_with = "cv_w")]
    design_effect: Option<f64>,
    #[arg(long)]
    cv_w: Option<f64>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, required = true, value_delimiter = ',')]
    waves: Vec<PathBuf>,
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, visible_alias = "N")]
    population: u64,
    /// Observed vaccinated/willing/hesitant shares per wave.
    #[arg(long)]
    outcomes: PathBuf,
    /// Run one named scenario instead of all three.
    #[arg(long)]
    scenario: Option<ScenarioName>,
    /// Custom lambda range `low,high`; replaces the named defaults.
    #[arg(long, value_parser = parse_range)]
    lambda_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = ScenarioSpec::DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

#[derive(Args)]
struct LogitArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long = "N", visible_alias = "population")]
    population: u64,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct HeckmanArgs {
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid")]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid")]
    z: Option<f64>,
    /// Evaluate r in {-0.8, -0.3, 0.3, 0.8} crossed with z in {-1, 0, 1}.
    #[arg(long, conflicts_with_all = ["r", "z"])]
    grid: bool,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long)]
    antithetic: bool,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct ImputeArgs {
    /// Age-split cumulative doses by jurisdiction.
    #[arg(long)]
    ages: PathBuf,
    /// All-ages cumulative totals.
    #[arg(long)]
    totals: PathBuf,
    /// Jurisdiction whose age split is not used.
    #[arg(long)]
    exclude: String,
    #[arg(long, visible_alias = "N")]
    population: u64,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, visible_alias = "N")]
    population: u64,
}

#[derive(Args)]
struct CompositionArgs {
    #[arg(long)]
    sample: PathBuf,
    /// Population composition, e.g. from a census survey.
    #[arg(long)]
    benchmark: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi] = parts[..] else {
        return Err(format!("expected `low,high`, got '{s}'"));
    };
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| format!("'{v}' is not a number"))
    };
    Ok((num(lo)?, num(hi)?))
}

/// Exit 1 for bad input, 2 when a computation on valid input fails.
#[derive(Debug)]
enum Failure {
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Compute(_) => 2,
        }
    }

    fn context(e: Error, what: impl fmt::Display) -> Self {
        let msg = match &e {
            Error::RejectedRows { diagnostics, .. } => {
                let mut m = format!("{what}: {e}");
                for d in diagnostics.iter().skip(1) {
                    m.push_str(&format!("\n  {d}"));
                }
                m
            }
            _ => format!("{what}: {e}"),
        };
        if e.is_computational() {
            Failure::Compute(msg)
        } else {
            Failure::Input(msg)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Compute(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome<Vec<PathBuf>> {
    let g = &cli.global;
    let mode = if g.lax {
        SchemaMode::Lax
    } else {
        SchemaMode::Strict
    };
    let mut prov = Provenance::new(cli.command.name());
    prov.set("lax", g.lax);
    let tables = match &cli.command {
        Command::Decompose(a) => decompose(a, g, mode, &mut prov)?,
        Command::Neff(a) => neff(a, &mut prov)?,
        Command::Scenario(a) => scenario(a, mode, &mut prov)?,
        Command::SimulateLogit(a) => simulate_logit(a, &mut prov)?,
        Command::SimulateHeckman(a) => simulate_heckman(a, &mut prov)?,
        Command::ImputeBenchmark(a) => impute(a, mode, &mut prov)?,
        Command::Sensitivity(a) => sensitivity(a, g, mode, &mut prov)?,
        Command::CompareComposition(a) => compare(a, mode, &mut prov)?,
    };
    Ok(write_tables(&g.out, &tables, &prov, g.format)?)
}

/// Sorted, deduplicated factors with the unperturbed benchmark included.
fn scenario_factors(user: &[f64]) -> Outcome<Vec<f64>> {
    let mut factors = vec![1.0];
    for &f in user {
        if !(f.is_finite() && f > 0.0) {
            return Err(Failure::context(Error::InvalidFactor(f), "--factors"));
        }
        factors.push(f);
    }
    factors.sort_by(f64::total_cmp);
    factors.dedup();
    Ok(factors)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn frame(population: u64) -> Outcome<PopulationFrame> {
    PopulationFrame::new(population, "target population")
        .map_err(|e| Failure::context(e, "--population"))
}

fn load_waves(
    paths: &[PathBuf],
    mode: SchemaMode,
    prov: &mut Provenance,
) -> Outcome<Vec<SurveyWave>> {
    let mut texts = Vec::with_capacity(paths.len());
    for p in paths {
        texts.push((p.display().to_string(), prov.read("waves", p)?));
    }
    // files are independent, so parse them side by side
    let parsed: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = texts
            .iter()
            .map(|(src, text)| s.spawn(move || parse_waves_str(src, text, mode)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("wave parser panicked"))
            .collect()
    });
    let mut waves = Vec::new();
    for ((src, _), result) in texts.iter().zip(parsed) {
        let parse = result.map_err(|e| Failure::context(e, src))?;
        if !parse.rejected.is_empty() {
            if mode == SchemaMode::Strict {
                let e = Error::RejectedRows {
                    path: src.clone(),
                    diagnostics: parse.rejected,
                };
                return Err(Failure::context(e, "wave input"));
            }
            for d in &parse.rejected {
                eprintln!("warning: {src}: skipped {d}");
            }
        }
        waves.extend(parse.waves);
    }
    Ok(waves)
}

fn load_benchmark(
    path: &Path,
    frame: &PopulationFrame,
    mode: SchemaMode,
    prov: &mut Provenance,
) -> Outcome<BenchmarkSeries> {
    let text = prov.read("benchmark", path)?;
    let src = path.display().to_string();
    parse_benchmark_counts_str(&src, &text, frame, as_of_from_path(path), mode)
        .map_err(|e| Failure::context(e, "benchmark input"))
}

fn wave_label(w: &SurveyWave) -> String {
    format!("wave {} ending {}", w.survey_id, w.wave_end)
}

fn date(d: NaiveDate) -> Cell {
    Cell::text(d.format("%Y-%m-%d").to_string())
}

const DECOMPOSITION_COLUMNS: [&str; 18] = [
    "survey_id",
    "wave_start",
    "wave_end",
    "n",
    "estimate",
    "factor",
    "benchmark",
    "total_error",
    "ddc",
    "scarcity",
    "difficulty",
    "n_w",
    "design_effect",
    "z_w",
    "data_defect_index",
    "n_eff",
    "log10_n_eff",
    "srs_floor_applied",
];

fn decompose(
    a: &DecomposeArgs,
    g: &Global,
    mode: SchemaMode,
    prov: &mut Provenance,
) -> Outcome<Vec<Table>> {
    let factors = scenario_factors(&g.factors)?;
    prov.set("population", a.population);
    prov.set("factors", join(&factors));
    let frame = frame(a.population)?;
    let waves = load_waves(&a.waves, mode, prov)?;
    let series = load_benchmark(&a.benchmark, &frame, mode, prov)?;

    let mut wide = Table::new("decomposition", &DECOMPOSITION_COLUMNS);
    let mut long = Table::new(
        "decomposition_long",
        &["survey_id", "wave_end", "factor", "metric", "value"],
    );
    for w in &waves {
        let base =
            benchmark_at(&series, w.wave_end).map_err(|e| Failure::context(e, wave_label(w)))?;
        let scaled =
            sensitivity_band(base, &factors).map_err(|e| Failure::context(e, wave_label(w)))?;
        for (&factor, &bench) in factors.iter().zip(&scaled) {
            let d = decompose_wave(w, &frame, bench)
                .map_err(|e| Failure::context(e, format!("{} (factor {factor})", wave_label(w))))?;
            wide.push(vec![
                Cell::text(&w.survey_id),
                date(w.wave_start),
                date(w.wave_end),
                Cell::Int(w.n),
                Cell::Fixed(w.estimate),
                Cell::Real(factor),
                Cell::Fixed(d.benchmark),
                Cell::Fixed(d.total_error),
                Cell::Real(d.ddc),
                Cell::Real(d.scarcity),
                Cell::Real(d.difficulty),
                Cell::Real(d.n_w),
                Cell::Real(d.design_effect),
                Cell::Real(d.z_w),
                Cell::Real(d.data_defect_index),
                Cell::Real(d.n_eff),
                Cell::Real(d.log10_n_eff),
                Cell::Bool(d.srs_floor_applied),
            ]);
            let metrics = [
                ("total_error_pp", Cell::Fixed(d.total_error * 100.0)),
                ("ddc", Cell::Real(d.ddc)),
                ("scarcity", Cell::Real(d.scarcity)),
                ("difficulty", Cell::Real(d.difficulty)),
                ("z_w", Cell::Real(d.z_w)),
                ("data_defect_index", Cell::Real(d.data_defect_index)),
                ("n_eff", Cell::Real(d.n_eff)),
                ("log10_n_eff", Cell::Real(d.log10_n_eff)),
            ];
            for (metric, value) in metrics {
                long.push(vec![
                    Cell::text(&w.survey_id),
                    date(w.wave_end),
                    Cell::Real(factor),
                    Cell::text(metric),
                    value,
                ]);
            }
        }
    }
    Ok(vec![wide, long])
}

fn neff(a: &NeffArgs, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    prov.set("n", a.n);
    prov.set("estimate", a.estimate);
    prov.set("benchmark", a.benchmark);
    prov.set("population", a.population);
    if let Some(de) = a.design_effect {
        prov.set("design_effect", de);
    }
    if let Some(cv) = a.cv_w {
        prov.set("cv_w", cv);
    }
    let frame = frame(a.population)?;
    let epoch = NaiveDate::default();
    let wave = SurveyWave {
        survey_id: "cli".into(),
        wave_start: epoch,
        wave_end: epoch,
        n: a.n,
        estimate: a.estimate,
        se: None,
        design_effect: a.design_effect,
        cv_w: a.cv_w,
    };
    let d = decompose_wave(&wave, &frame, a.benchmark).map_err(|e| Failure::context(e, "neff"))?;
    let mut t = Table::new(
        "neff",
        &[
            "n",
            "n_w",
            "design_effect",
            "total_error",
            "ddc",
            "n_eff",
            "log10_n_eff",
            "reduction_percent",
            "srs_floor_applied",
        ],
    );
    t.push(vec![
        Cell::Int(a.n),
        Cell::Real(d.n_w),
        Cell::Real(d.design_effect),
        Cell::Fixed(d.total_error),
        Cell::Real(d.ddc),
        Cell::Real(d.n_eff),
        Cell::Real(d.log10_n_eff),
        Cell::Fixed((1.0 - d.n_eff / a.n as f64) * 100.0),
        Cell::Bool(d.srs_floor_applied),
    ]);
    Ok(vec![t])
}

fn scenario(a: &ScenarioArgs, mode: SchemaMode, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    prov.set("population", a.population);
    prov.set("grid_points", a.grid_points);
    let specs: Vec<(String, ScenarioSpec)> = match (&a.lambda_range, a.scenario) {
        (Some((lo, hi)), name) => {
            let label = name
                .map(|n| n.as_str().to_string())
                .unwrap_or_else(|| "custom".into());
            let spec = ScenarioSpec::new(
                name.unwrap_or(ScenarioName::Access),
                *lo,
                *hi,
                a.grid_points,
            )
            .map_err(|e| Failure::context(e, "--lambda-range"))?;
            prov.set("lambda_range", join(&[*lo, *hi]));
            vec![(label, spec)]
        }
        (None, Some(name)) => {
            let (lo, hi) = name.default_range();
            let spec = ScenarioSpec::new(name, lo, hi, a.grid_points)
                .map_err(|e| Failure::context(e, "--grid-points"))?;
            vec![(name.as_str().to_string(), spec)]
        }
        (None, None) => ScenarioName::ALL
            .iter()
            .map(|&name| {
                let (lo, hi) = name.default_range();
                ScenarioSpec::new(name, lo, hi, a.grid_points)
                    .map(|s| (name.as_str().to_string(), s))
                    .map_err(|e| Failure::context(e, "--grid-points"))
            })
            .collect::<Outcome<_>>()?,
    };
    prov.set(
        "scenarios",
        specs
            .iter()
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );

    let frame = frame(a.population)?;
    let waves = load_waves(&a.waves, mode, prov)?;
    let series = load_benchmark(&a.benchmark, &frame, mode, prov)?;
    let outcome_text = prov.read("outcomes", &a.outcomes)?;
    let outcomes = parse_outcomes_str(&a.outcomes.display().to_string(), &outcome_text, mode)
        .map_err(|e| Failure::context(e, "outcomes input"))?;

    let mut t = Table::new(
        "scenario",
        &[
            "survey_id",
            "wave_end",
            "scenario",
            "outcome",
            "observed",
            "corrected_low",
            "corrected_high",
            "lambda_low",
            "lambda_high",
            "max_residual",
        ],
    );
    for row in &outcomes {
        let w = waves
            .iter()
            .find(|w| w.survey_id == row.survey_id && w.wave_end == row.wave_end)
            .ok_or_else(|| {
                Failure::Input(format!(
                    "outcomes for {} ending {} have no matching wave",
                    row.survey_id, row.wave_end
                ))
            })?;
        let label = wave_label(w);
        if (row.outcomes.vaccinated - w.estimate).abs() > 1e-9 {
            return Err(Failure::Input(format!(
                "{label}: outcomes file has vaccinated {} but the wave estimate is {}",
                row.outcomes.vaccinated, w.estimate
            )));
        }
        let bench = benchmark_at(&series, w.wave_end).map_err(|e| Failure::context(e, &label))?;
        let d = decompose_wave(w, &frame, bench).map_err(|e| Failure::context(e, &label))?;
        for (name, spec) in &specs {
            let v = solve_population_mean(w.estimate, d.ddc, d.n_w, a.population)
                .map_err(|e| Failure::context(e, &label))?;
            let band = scenario_band(&row.outcomes, d.ddc, spec, d.n_w, a.population)
                .map_err(|e| Failure::context(e, format!("{label}, scenario {name}")))?;
            let lines = [
                ("vaccinated", row.outcomes.vaccinated, (v, v)),
                ("willing", row.outcomes.willing, band.corrected_willingness),
                ("hesitant", row.outcomes.hesitant, band.corrected_hesitancy),
            ];
            for (outcome, observed, (lo, hi)) in lines {
                t.push(vec![
                    Cell::text(&w.survey_id),
                    date(w.wave_end),
                    Cell::text(name.as_str()),
                    Cell::text(outcome),
                    Cell::Fixed(observed),
                    Cell::Fixed(lo),
                    Cell::Fixed(hi),
                    Cell::Real(spec.lambda_low),
                    Cell::Real(spec.lambda_high),
                    Cell::Real(band.residuals),
                ]);
            }
        }
    }
    Ok(vec![t])
}

fn simulate_logit(a: &LogitArgs, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    prov.set("alpha", a.alpha);
    prov.set("beta", a.beta);
    prov.set("mu", a.mu);
    prov.set("population", a.population);
    prov.set("reps", a.reps);
    prov.set("seed", a.seed);
    let model = LogitResponseModel::new(a.alpha, a.beta, a.mu)
        .map_err(|e| Failure::context(e, "logit model"))?;
    let s = simulate_logit_population(&model, a.population, a.seed, a.reps)
        .map_err(|e| Failure::context(e, "simulate-logit"))?;
    if s.redraw_warning {
        eprintln!(
            "warning: {} degenerate populations were redrawn; the response fraction is near 0 or 1",
            s.redraws
        );
    }
    let limits =
        logit_bias_mse(&model, a.population).map_err(|e| Failure::context(e, "simulate-logit"))?;

    let mut summary = Table::new(
        "simulate_logit_summary",
        &["quantity", "mean", "sd", "mc_se", "limit"],
    );
    let sqrt_n = (a.population as f64).sqrt();
    for (q, m, limit) in [
        ("f", s.f, s.limits.f_limit),
        ("rho", s.rho, s.limits.rho_limit),
        ("error", s.error, limits.bias),
        ("z", s.z, s.limits.rho_limit * sqrt_n),
    ] {
        summary.push(vec![
            Cell::text(q),
            Cell::Real(m.mean),
            Cell::Real(m.sd),
            Cell::Real(m.standard_error(s.replications)),
            Cell::Real(limit),
        ]);
    }
    let mut runs = Table::new(
        "simulate_logit_runs",
        &["replication", "f", "rho", "error", "z", "redraws"],
    );
    for (i, r) in s.runs.iter().enumerate() {
        runs.push(vec![
            Cell::Int(i as u64),
            Cell::Real(r.f),
            Cell::Real(r.rho),
            Cell::Real(r.error),
            Cell::Real(r.z),
            Cell::Int(u64::from(r.redraws)),
        ]);
    }
    Ok(vec![summary, runs])
}

const HECKMAN_GRID_R: [f64; 4] = [-0.8, -0.3, 0.3, 0.8];
const HECKMAN_GRID_Z: [f64; 3] = [-1.0, 0.0, 1.0];

fn simulate_heckman(a: &HeckmanArgs, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    let points: Vec<(f64, f64)> = if a.grid {
        HECKMAN_GRID_R
            .iter()
            .flat_map(|&r| HECKMAN_GRID_Z.iter().map(move |&z| (r, z)))
            .collect()
    } else {
        // clap guarantees both are present without --grid
        vec![(a.r.unwrap_or_default(), a.z.unwrap_or_default())]
    };
    match (a.grid, a.r, a.z) {
        (true, ..) => prov.set("grid", true),
        (false, Some(r), Some(z)) => {
            prov.set("r", r);
            prov.set("z", z);
        }
        _ => {
            return Err(Failure::Input(
                "--r and --z are required without --grid".into(),
            ))
        }
    }
    prov.set("draws", a.draws);
    prov.set("antithetic", a.antithetic);
    prov.set("seed", a.seed);

    let mut t = Table::new(
        "simulate_heckman",
        &["r", "z", "analytic", "monte_carlo", "abs_difference"],
    );
    for (i, &(r, z)) in points.iter().enumerate() {
        let ctx = format!("(r = {r}, z = {z})");
        let p = HeckmanParams::new(r, z).map_err(|e| Failure::context(e, &ctx))?;
        let exact = heckman_ddc(&p).map_err(|e| Failure::context(e, &ctx))?;
        // one seed per grid point so points do not share draws
        let seed = a.seed.wrapping_add(i as u64);
        let mc = if a.antithetic {
            heckman_oracle_antithetic(&p, a.draws, seed)
        } else {
            heckman_oracle(&p, a.draws, seed)
        }
        .map_err(|e| Failure::context(e, &ctx))?;
        t.push(vec![
            Cell::Real(r),
            Cell::Real(z),
            Cell::Real(exact),
            Cell::Real(mc),
            Cell::Real((mc - exact).abs()),
        ]);
    }
    Ok(vec![t])
}

fn impute(a: &ImputeArgs, mode: SchemaMode, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    prov.set("exclude", &a.exclude);
    prov.set("population", a.population);
    let frame = frame(a.population)?;
    let age_text = prov.read("ages", &a.ages)?;
    let ages = parse_age_table_str(&a.ages.display().to_string(), &age_text, mode)
        .map_err(|e| Failure::context(e, "age input"))?;
    let totals_text = prov.read("totals", &a.totals)?;
    let totals = parse_benchmark_counts_str(
        &a.totals.display().to_string(),
        &totals_text,
        &frame,
        as_of_from_path(&a.totals),
        mode,
    )
    .map_err(|e| Failure::context(e, "totals input"))?;
    let (series, detail) = impute_adult_series(&ages, &totals, &a.exclude)
        .map_err(|e| Failure::context(e, "impute-benchmark"))?;

    let mut counts = Table::new("imputed_benchmark", &["date", "cumulative_count"]);
    for e in series.entries() {
        counts.push(vec![date(e.date), Cell::Int(e.cumulative_count)]);
    }
    let mut t = Table::new(
        "imputation_detail",
        &[
            "date",
            "total_count",
            "adult_share",
            "imputed_count",
            "cumulative_count",
        ],
    );
    for (d, e) in detail.iter().zip(series.entries()) {
        t.push(vec![
            date(d.date),
            Cell::Int(d.total_count),
            Cell::Fixed(d.adult_share),
            Cell::Int(d.imputed_count),
            Cell::Int(e.cumulative_count),
        ]);
    }
    Ok(vec![counts, t])
}

fn sensitivity(
    a: &SensitivityArgs,
    g: &Global,
    mode: SchemaMode,
    prov: &mut Provenance,
) -> Outcome<Vec<Table>> {
    let factors = scenario_factors(&g.factors)?;
    prov.set("population", a.population);
    prov.set("factors", join(&factors));
    let frame = frame(a.population)?;
    let series = load_benchmark(&a.benchmark, &frame, mode, prov)?;
    let mut t = Table::new(
        "sensitivity",
        &["date", "cumulative_count", "factor", "proportion"],
    );
    for e in series.entries() {
        let base = series.proportion(e.cumulative_count);
        let band = sensitivity_band(base, &factors).map_err(|err| Failure::context(err, e.date))?;
        for (&f, &v) in factors.iter().zip(&band) {
            t.push(vec![
                date(e.date),
                Cell::Int(e.cumulative_count),
                Cell::Real(f),
                Cell::Fixed(v),
            ]);
        }
    }
    Ok(vec![t])
}

fn compare(a: &CompositionArgs, mode: SchemaMode, prov: &mut Provenance) -> Outcome<Vec<Table>> {
    let stem = |p: &Path| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("table")
            .to_string()
    };
    let sample_text = prov.read("sample", &a.sample)?;
    let bench_text = prov.read("benchmark", &a.benchmark)?;
    let sample = parse_composition_str(&stem(&a.sample), &sample_text, mode)
        .map_err(|e| Failure::context(e, "sample composition"))?;
    let bench = parse_composition_str(&stem(&a.benchmark), &bench_text, mode)
        .map_err(|e| Failure::context(e, "benchmark composition"))?;
    let diffs = composition_compare(&sample, &bench)
        .map_err(|e| Failure::context(e, "compare-composition"))?;
    let mut t = Table::new(
        "composition",
        &[
            "dimension",
            "category",
            "sample",
            "benchmark",
            "difference_pp",
        ],
    );
    for d in diffs {
        t.push(vec![
            Cell::text(d.dimension),
            Cell::text(d.category),
            Cell::Fixed(d.sample),
            Cell::Fixed(d.benchmark),
            Cell::Fixed(d.difference_pp),
        ]);
    }
    Ok(vec![t])
}
