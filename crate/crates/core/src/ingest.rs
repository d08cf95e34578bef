//! CSV ingestion for waves, benchmark counts, age-split doses, outcome
//! triples and sample composition tables.
//!
//! All shares in input files are proportions in `[0, 1]` (0.57, not 57).
//! Files are UTF-8, comma-separated, with a mandatory header row. Lines
//! starting with `#` are comments, so provenance headers written by the CLI
//! can be read back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::benchmark::{AgeDoseRow, AgeDoseTable, AgeGroup, BenchmarkSeries, CountEntry};
use crate::error::{Error, Result};
use crate::metrics::{PopulationFrame, SurveyWave, DESIGN_EFFECT_CV_TOLERANCE};
use crate::scenarios::OutcomeTriple;

pub const WAVE_COLUMNS: [&str; 8] = [
    "survey_id",
    "wave_start",
    "wave_end",
    "n",
    "estimate",
    "se",
    "design_effect",
    "cv_w",
];
const WAVE_OPTIONAL: [&str; 3] = ["se", "design_effect", "cv_w"];
pub const BENCHMARK_COLUMNS: [&str; 2] = ["date", "cumulative_count"];
pub const AGE_COLUMNS: [&str; 4] = ["date", "jurisdiction", "age_group", "cumulative_doses"];
pub const COMPOSITION_COLUMNS: [&str; 3] = ["dimension", "category", "share"];
pub const OUTCOME_COLUMNS: [&str; 5] =
    ["survey_id", "wave_end", "vaccinated", "willing", "hesitant"];

/// Published composition tables are rounded, so per-dimension shares only
/// need to sum to 1 within this tolerance.
pub const COMPOSITION_SUM_TOLERANCE: f64 = 0.02;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// One rejected row: 1-based file line, offending column and reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub column: String,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    /// Header must match the canonical columns exactly.
    #[default]
    Strict,
    /// Unknown columns are ignored, order is free and optional columns may
    /// be absent.
    Lax,
}

/// Parsed waves plus one diagnostic per rejected row.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveParse {
    pub waves: Vec<SurveyWave>,
    pub rejected: Vec<RowDiagnostic>,
}

struct Table {
    /// Canonical column -> position in the file.
    index: Vec<Option<usize>>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(
    source: &str,
    text: &str,
    columns: &[&str],
    optional: &[&str],
    mode: SchemaMode,
) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::EmptyFile(source.to_string())),
    };
    let header: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();

    let index = match mode {
        SchemaMode::Strict => {
            if header != columns {
                return Err(Error::Schema(format!(
                    "{source}: header [{}] does not match expected [{}]",
                    header.join(","),
                    columns.join(",")
                )));
            }
            (0..columns.len()).map(Some).collect()
        }
        SchemaMode::Lax => {
            let mut index = Vec::with_capacity(columns.len());
            for col in columns {
                let pos = header.iter().position(|h| h == col);
                if pos.is_none() && !optional.contains(col) {
                    return Err(Error::Schema(format!(
                        "{source}: required column '{col}' missing"
                    )));
                }
                index.push(pos);
            }
            index
        }
    };

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(source.to_string()));
    }
    Ok(Table { index, rows })
}

struct RowReader<'a> {
    line: u64,
    rec: &'a csv::StringRecord,
    index: &'a [Option<usize>],
    columns: &'a [&'a str],
    expected_len: Option<usize>,
}

impl<'a> RowReader<'a> {
    fn diag(&self, column: &str, message: impl Into<String>) -> RowDiagnostic {
        RowDiagnostic {
            line: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn check_width(&self) -> std::result::Result<(), RowDiagnostic> {
        match self.expected_len {
            Some(len) if self.rec.len() != len => Err(self.diag(
                "*",
                format!("expected {len} fields, found {}", self.rec.len()),
            )),
            _ => Ok(()),
        }
    }

    fn raw(&self, column: &str) -> Option<&'a str> {
        let k = self.columns.iter().position(|c| *c == column)?;
        let pos = self.index[k]?;
        self.rec.get(pos).map(str::trim)
    }

    fn required(&self, column: &str) -> std::result::Result<&'a str, RowDiagnostic> {
        match self.raw(column) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.diag(column, "missing value")),
        }
    }

    fn date(&self, column: &str) -> std::result::Result<NaiveDate, RowDiagnostic> {
        let v = self.required(column)?;
        NaiveDate::parse_from_str(v, DATE_FORMAT)
            .map_err(|_| self.diag(column, format!("'{v}' is not an ISO-8601 date")))
    }

    fn integer(&self, column: &str) -> std::result::Result<u64, RowDiagnostic> {
        let v = self.required(column)?;
        v.parse::<u64>()
            .map_err(|_| self.diag(column, format!("'{v}' is not a nonnegative integer")))
    }

    fn real(&self, column: &str) -> std::result::Result<f64, RowDiagnostic> {
        let v = self.required(column)?;
        self.parse_real(column, v)
    }

    fn optional_real(&self, column: &str) -> std::result::Result<Option<f64>, RowDiagnostic> {
        match self.raw(column) {
            None | Some("") => Ok(None),
            Some(v) => self.parse_real(column, v).map(Some),
        }
    }

    fn parse_real(&self, column: &str, v: &str) -> std::result::Result<f64, RowDiagnostic> {
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.diag(column, format!("'{v}' is not a finite number"))),
        }
    }

    fn proportion(&self, column: &str, v: f64) -> std::result::Result<f64, RowDiagnostic> {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(self.diag(
                column,
                format!("{v} outside [0, 1] (shares are proportions)"),
            ))
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    Ok(text)
}

/// Reads a wave file. Rows that fail validation are reported in
/// [`WaveParse::rejected`]; structural problems are fatal.
pub fn parse_waves(path: impl AsRef<Path>, mode: SchemaMode) -> Result<WaveParse> {
    let path = path.as_ref();
    parse_waves_str(&path.display().to_string(), &read_to_string(path)?, mode)
}

pub fn parse_waves_str(source: &str, text: &str, mode: SchemaMode) -> Result<WaveParse> {
    let table = read_table(source, text, &WAVE_COLUMNS, &WAVE_OPTIONAL, mode)?;
    let expected_len = (mode == SchemaMode::Strict).then_some(WAVE_COLUMNS.len());
    let mut waves = Vec::new();
    let mut rejected = Vec::new();
    for (line, rec) in &table.rows {
        let row = RowReader {
            line: *line,
            rec,
            index: &table.index,
            columns: &WAVE_COLUMNS,
            expected_len,
        };
        match wave_from_row(&row) {
            Ok(w) => waves.push(w),
            Err(d) => rejected.push(d),
        }
    }
    Ok(WaveParse { waves, rejected })
}

fn wave_from_row(row: &RowReader<'_>) -> std::result::Result<SurveyWave, RowDiagnostic> {
    row.check_width()?;
    let survey_id = row.required("survey_id")?.to_string();
    let wave_start = row.date("wave_start")?;
    let wave_end = row.date("wave_end")?;
    if wave_start > wave_end {
        return Err(row.diag(
            "wave_end",
            format!("wave_end {wave_end} precedes wave_start {wave_start}"),
        ));
    }
    let n = row.integer("n")?;
    if n == 0 {
        return Err(row.diag("n", "n must be at least 1"));
    }
    let estimate = row.real("estimate")?;
    let estimate = row.proportion("estimate", estimate)?;
    let se = match row.optional_real("se")? {
        Some(v) => Some(row.proportion("se", v)?),
        None => None,
    };
    let design_effect = row.optional_real("design_effect")?;
    if let Some(de) = design_effect {
        if de < 1.0 {
            return Err(row.diag("design_effect", format!("{de} is below 1")));
        }
    }
    let cv_w = row.optional_real("cv_w")?;
    if let Some(cv) = cv_w {
        if cv < 0.0 {
            return Err(row.diag("cv_w", format!("{cv} is negative")));
        }
    }
    if let (Some(de), Some(cv)) = (design_effect, cv_w) {
        if (de - (1.0 + cv * cv)).abs() > DESIGN_EFFECT_CV_TOLERANCE {
            return Err(row.diag(
                "design_effect",
                format!("{de} disagrees with 1 + cv_w^2 = {}", 1.0 + cv * cv),
            ));
        }
    }
    Ok(SurveyWave {
        survey_id,
        wave_start,
        wave_end,
        n,
        estimate,
        se,
        design_effect,
        cv_w,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Canonical wave CSV. Numbers use the shortest representation that reads
/// back to the same `f64`.
pub fn write_waves(waves: &[SurveyWave]) -> String {
    let mut out = WAVE_COLUMNS.join(",");
    out.push('\n');
    for w in waves {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(&w.survey_id),
            w.wave_start.format(DATE_FORMAT),
            w.wave_end.format(DATE_FORMAT),
            w.n,
            w.estimate,
            fmt_opt(w.se),
            fmt_opt(w.design_effect),
            fmt_opt(w.cv_w),
        ));
    }
    out
}

/// Quotes a field when it contains a delimiter, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.starts_with('#') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fatal(source: &str, rejected: Vec<RowDiagnostic>) -> Result<()> {
    if rejected.is_empty() {
        Ok(())
    } else {
        Err(Error::RejectedRows {
            path: source.to_string(),
            diagnostics: rejected,
        })
    }
}

/// Extracts a snapshot date from a file name such as `cdc_2021-04-12.csv`.
pub fn as_of_from_path(path: &Path) -> Option<NaiveDate> {
    let stem = path.file_stem()?.to_str()?;
    if stem.len() < 10 {
        return None;
    }
    let tail = stem.get(stem.len() - 10..)?;
    NaiveDate::parse_from_str(tail, DATE_FORMAT).ok()
}

/// Reads a cumulative count series. Any bad row, reordering or decrease is
/// fatal. The snapshot date comes from the file name when it ends in an
/// ISO date, otherwise it is the last entry's date.
pub fn parse_benchmark_counts(
    path: impl AsRef<Path>,
    population: &PopulationFrame,
    mode: SchemaMode,
) -> Result<BenchmarkSeries> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_benchmark_counts_str(
        &path.display().to_string(),
        &text,
        population,
        as_of_from_path(path),
        mode,
    )
}

pub fn parse_benchmark_counts_str(
    source: &str,
    text: &str,
    population: &PopulationFrame,
    as_of: Option<NaiveDate>,
    mode: SchemaMode,
) -> Result<BenchmarkSeries> {
    let table = read_table(source, text, &BENCHMARK_COLUMNS, &[], mode)?;
    let expected_len = (mode == SchemaMode::Strict).then_some(BENCHMARK_COLUMNS.len());
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    for (line, rec) in &table.rows {
        let row = RowReader {
            line: *line,
            rec,
            index: &table.index,
            columns: &BENCHMARK_COLUMNS,
            expected_len,
        };
        let parsed = row.check_width().and_then(|_| {
            Ok(CountEntry {
                date: row.date("date")?,
                cumulative_count: row.integer("cumulative_count")?,
            })
        });
        match parsed {
            Ok(e) => entries.push(e),
            Err(d) => rejected.push(d),
        }
    }
    fatal(source, rejected)?;
    let as_of = as_of.unwrap_or_else(|| entries.iter().map(|e| e.date).max().unwrap_or_default());
    BenchmarkSeries::new(entries, population.clone(), as_of).map_err(|e| match e {
        Error::InvalidSeries(m) => Error::InvalidSeries(format!("{source}: {m}")),
        other => other,
    })
}

pub fn write_benchmark_counts(series: &BenchmarkSeries) -> String {
    let mut out = BENCHMARK_COLUMNS.join(",");
    out.push('\n');
    for e in series.entries() {
        out.push_str(&format!(
            "{},{}\n",
            e.date.format(DATE_FORMAT),
            e.cumulative_count
        ));
    }
    out
}

/// Reads age-split cumulative doses. Bad rows are fatal.
pub fn parse_age_table(path: impl AsRef<Path>, mode: SchemaMode) -> Result<AgeDoseTable> {
    let path = path.as_ref();
    parse_age_table_str(&path.display().to_string(), &read_to_string(path)?, mode)
}

pub fn parse_age_table_str(source: &str, text: &str, mode: SchemaMode) -> Result<AgeDoseTable> {
    let table = read_table(source, text, &AGE_COLUMNS, &[], mode)?;
    let expected_len = (mode == SchemaMode::Strict).then_some(AGE_COLUMNS.len());
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for (line, rec) in &table.rows {
        let row = RowReader {
            line: *line,
            rec,
            index: &table.index,
            columns: &AGE_COLUMNS,
            expected_len,
        };
        let parsed = row.check_width().and_then(|_| {
            let group = row.required("age_group")?;
            let age_group: AgeGroup = group
                .parse()
                .map_err(|_| row.diag("age_group", format!("unknown age group '{group}'")))?;
            Ok(AgeDoseRow {
                date: row.date("date")?,
                jurisdiction: row.required("jurisdiction")?.to_string(),
                age_group,
                cumulative_doses: row.integer("cumulative_doses")?,
            })
        });
        match parsed {
            Ok(r) => rows.push(r),
            Err(d) => rejected.push(d),
        }
    }
    fatal(source, rejected)?;
    AgeDoseTable::new(rows)
}

/// Observed uptake, willingness and hesitancy for one wave.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub survey_id: String,
    pub wave_end: NaiveDate,
    pub outcomes: OutcomeTriple,
}

/// Reads per-wave outcome triples. Bad rows and repeated
/// `(survey_id, wave_end)` keys are fatal.
pub fn parse_outcomes(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Vec<OutcomeRow>> {
    let path = path.as_ref();
    parse_outcomes_str(&path.display().to_string(), &read_to_string(path)?, mode)
}

pub fn parse_outcomes_str(source: &str, text: &str, mode: SchemaMode) -> Result<Vec<OutcomeRow>> {
    let table = read_table(source, text, &OUTCOME_COLUMNS, &[], mode)?;
    let expected_len = (mode == SchemaMode::Strict).then_some(OUTCOME_COLUMNS.len());
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, rec) in &table.rows {
        let row = RowReader {
            line: *line,
            rec,
            index: &table.index,
            columns: &OUTCOME_COLUMNS,
            expected_len,
        };
        let parsed = row.check_width().and_then(|_| {
            let survey_id = row.required("survey_id")?.to_string();
            let wave_end = row.date("wave_end")?;
            if !seen.insert((survey_id.clone(), wave_end)) {
                return Err(row.diag(
                    "wave_end",
                    format!("duplicate row for {survey_id} {wave_end}"),
                ));
            }
            let v = row.real("vaccinated")?;
            let w = row.real("willing")?;
            let h = row.real("hesitant")?;
            let outcomes =
                OutcomeTriple::new(v, w, h).map_err(|e| row.diag("hesitant", e.to_string()))?;
            Ok(OutcomeRow {
                survey_id,
                wave_end,
                outcomes,
            })
        });
        match parsed {
            Ok(r) => rows.push(r),
            Err(d) => rejected.push(d),
        }
    }
    fatal(source, rejected)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionRow {
    pub dimension: String,
    pub category: String,
    pub share: f64,
}

/// Shares of respondents (or of the population) by category.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionTable {
    pub source: String,
    rows: Vec<CompositionRow>,
}

impl CompositionTable {
    pub fn new(source: impl Into<String>, rows: Vec<CompositionRow>) -> Result<Self> {
        let source = source.into();
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !(r.share.is_finite() && (0.0..=1.0).contains(&r.share)) {
                return Err(Error::InvalidArgument(format!(
                    "{source}: share {} for {}/{} outside [0, 1]",
                    r.share, r.dimension, r.category
                )));
            }
            if !seen.insert((r.dimension.as_str(), r.category.as_str())) {
                return Err(Error::Schema(format!(
                    "{source}: duplicate category {}/{}",
                    r.dimension, r.category
                )));
            }
            *sums.entry(&r.dimension).or_default() += r.share;
        }
        for (dim, sum) in sums {
            if (sum - 1.0).abs() > COMPOSITION_SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "{source}: shares for '{dim}' sum to {sum:.4}, not 1 +/- {COMPOSITION_SUM_TOLERANCE}"
                )));
            }
        }
        Ok(Self { source, rows })
    }

    pub fn rows(&self) -> &[CompositionRow] {
        &self.rows
    }

    fn share(&self, dimension: &str, category: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.dimension == dimension && r.category == category)
            .map(|r| r.share)
    }
}

pub fn parse_composition(path: impl AsRef<Path>, mode: SchemaMode) -> Result<CompositionTable> {
    let path = path.as_ref();
    let source = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("composition")
        .to_string();
    parse_composition_str(&source, &read_to_string(path)?, mode)
}

pub fn parse_composition_str(
    source: &str,
    text: &str,
    mode: SchemaMode,
) -> Result<CompositionTable> {
    let table = read_table(source, text, &COMPOSITION_COLUMNS, &[], mode)?;
    let expected_len = (mode == SchemaMode::Strict).then_some(COMPOSITION_COLUMNS.len());
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for (line, rec) in &table.rows {
        let row = RowReader {
            line: *line,
            rec,
            index: &table.index,
            columns: &COMPOSITION_COLUMNS,
            expected_len,
        };
        let parsed = row.check_width().and_then(|_| {
            let share = row.real("share")?;
            Ok(CompositionRow {
                dimension: row.required("dimension")?.to_string(),
                category: row.required("category")?.to_string(),
                share: row.proportion("share", share)?,
            })
        });
        match parsed {
            Ok(r) => rows.push(r),
            Err(d) => rejected.push(d),
        }
    }
    fatal(source, rejected)?;
    CompositionTable::new(source, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionDiff {
    pub dimension: String,
    pub category: String,
    pub sample: f64,
    pub benchmark: f64,
    /// `sample - benchmark` in percentage points.
    pub difference_pp: f64,
}

/// Signed over-representation of each category, in percentage points, in
/// the sample table's row order.
pub fn composition_compare(
    sample: &CompositionTable,
    benchmark: &CompositionTable,
) -> Result<Vec<CompositionDiff>> {
    let keys = |t: &CompositionTable| -> BTreeSet<(String, String)> {
        t.rows
            .iter()
            .map(|r| (r.dimension.clone(), r.category.clone()))
            .collect()
    };
    let (a, b) = (keys(sample), keys(benchmark));
    if a != b {
        let only_sample: Vec<String> = a.difference(&b).map(|(d, c)| format!("{d}/{c}")).collect();
        let only_bench: Vec<String> = b.difference(&a).map(|(d, c)| format!("{d}/{c}")).collect();
        return Err(Error::Schema(format!(
            "category sets differ: only in {}: [{}]; only in {}: [{}]",
            sample.source,
            only_sample.join(", "),
            benchmark.source,
            only_bench.join(", ")
        )));
    }
    Ok(sample
        .rows
        .iter()
        .map(|r| {
            let bench = benchmark
                .share(&r.dimension, &r.category)
                .unwrap_or(f64::NAN);
            CompositionDiff {
                dimension: r.dimension.clone(),
                category: r.category.clone(),
                sample: r.share,
                benchmark: bench,
                difference_pp: (r.share - bench) * 100.0,
            }
        })
        .collect())
}
