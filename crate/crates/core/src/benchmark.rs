//! Ground-truth benchmark series: adult-share imputation, step lookup,
//! multiplicative sensitivity scenarios, age-group bounds and revision curves.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PopulationFrame;

/// Cumulative counts may exceed the population by this factor before they
/// are treated as a unit error (e.g. numerators that include territories
/// the denominator does not).
pub const POPULATION_SLACK: f64 = 1.02;

/// Default multiplicative benchmark scenarios, including the reported value.
pub const DEFAULT_FACTORS: [f64; 5] = [0.9, 0.95, 1.0, 1.05, 1.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEntry {
    pub date: NaiveDate,
    pub cumulative_count: u64,
}

/// Dated cumulative counts against a population, as reported on `as_of`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSeries {
    entries: Vec<CountEntry>,
    population: PopulationFrame,
    as_of: NaiveDate,
}

/// At most five dates, then a count of the rest.
fn list_dates(dates: &[String]) -> String {
    const SHOWN: usize = 5;
    if dates.len() <= SHOWN {
        dates.join(", ")
    } else {
        format!(
            "{} and {} more",
            dates[..SHOWN].join(", "),
            dates.len() - SHOWN
        )
    }
}

impl BenchmarkSeries {
    pub fn new(
        entries: Vec<CountEntry>,
        population: PopulationFrame,
        as_of: NaiveDate,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSeries("series has no entries".into()));
        }
        let unordered: Vec<String> = entries
            .windows(2)
            .filter(|w| w[1].date <= w[0].date)
            .map(|w| w[1].date.to_string())
            .collect();
        if !unordered.is_empty() {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly ascending at {}",
                list_dates(&unordered)
            )));
        }
        let decreasing: Vec<String> = entries
            .windows(2)
            .filter(|w| w[1].cumulative_count < w[0].cumulative_count)
            .map(|w| w[1].date.to_string())
            .collect();
        if !decreasing.is_empty() {
            return Err(Error::InvalidSeries(format!(
                "cumulative count decreases on {}",
                list_dates(&decreasing)
            )));
        }
        let cap = population.size as f64 * POPULATION_SLACK;
        let oversized: Vec<String> = entries
            .iter()
            .filter(|e| e.cumulative_count as f64 > cap)
            .map(|e| e.date.to_string())
            .collect();
        if !oversized.is_empty() {
            return Err(Error::InvalidSeries(format!(
                "count exceeds {POPULATION_SLACK} x population {} on {} (unit error?)",
                population.size,
                list_dates(&oversized)
            )));
        }
        Ok(Self {
            entries,
            population,
            as_of,
        })
    }

    pub fn entries(&self) -> &[CountEntry] {
        &self.entries
    }

    pub fn population(&self) -> &PopulationFrame {
        &self.population
    }

    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    pub fn first_date(&self) -> NaiveDate {
        self.entries[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.entries[self.entries.len() - 1].date
    }

    /// Count recorded exactly on `date`, if present.
    pub fn count_on(&self, date: NaiveDate) -> Option<u64> {
        self.entries
            .binary_search_by_key(&date, |e| e.date)
            .ok()
            .map(|i| self.entries[i].cumulative_count)
    }

    pub fn proportion(&self, count: u64) -> f64 {
        count as f64 / self.population.size as f64
    }
}

/// Proportion at `query`: the latest entry dated on or before the query,
/// divided by the population. No interpolation.
pub fn benchmark_at(series: &BenchmarkSeries, query: NaiveDate) -> Result<f64> {
    let idx = series.entries.partition_point(|e| e.date <= query);
    if idx == 0 {
        return Err(Error::OutOfRange {
            query,
            first: series.first_date(),
        });
    }
    Ok(series.proportion(series.entries[idx - 1].cumulative_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Adult,
    Minor,
    Senior,
    Nonsenior,
    Unknown,
}

impl std::str::FromStr for AgeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adult" => Ok(AgeGroup::Adult),
            "minor" => Ok(AgeGroup::Minor),
            "senior" => Ok(AgeGroup::Senior),
            "nonsenior" => Ok(AgeGroup::Nonsenior),
            "unknown" => Ok(AgeGroup::Unknown),
            other => Err(Error::Schema(format!("unknown age group '{other}'"))),
        }
    }
}

impl std::fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgeGroup::Adult => "adult",
            AgeGroup::Minor => "minor",
            AgeGroup::Senior => "senior",
            AgeGroup::Nonsenior => "nonsenior",
            AgeGroup::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeDoseRow {
    pub date: NaiveDate,
    pub jurisdiction: String,
    pub age_group: AgeGroup,
    pub cumulative_doses: u64,
}

/// Cumulative doses by date, jurisdiction and age group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgeDoseTable {
    rows: Vec<AgeDoseRow>,
}

impl AgeDoseTable {
    pub fn new(rows: Vec<AgeDoseRow>) -> Result<Self> {
        let mut last: BTreeMap<(&str, AgeGroup), (NaiveDate, u64)> = BTreeMap::new();
        let mut sorted: Vec<&AgeDoseRow> = rows.iter().collect();
        sorted.sort_by_key(|r| r.date);
        for row in sorted {
            let key = (row.jurisdiction.as_str(), row.age_group);
            if let Some(&(date, count)) = last.get(&key) {
                if date == row.date {
                    return Err(Error::Schema(format!(
                        "duplicate row for {} {} on {}",
                        row.jurisdiction, row.age_group, row.date
                    )));
                }
                if row.cumulative_doses < count {
                    return Err(Error::InconsistentCounts(format!(
                        "{} {} doses decrease from {count} on {date} to {} on {}",
                        row.jurisdiction, row.age_group, row.cumulative_doses, row.date
                    )));
                }
            }
            last.insert(key, (row.date, row.cumulative_doses));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[AgeDoseRow] {
        &self.rows
    }
}

/// Per-date adult share among reporting jurisdictions, with the imputed count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImputedEntry {
    pub date: NaiveDate,
    pub adult_share: f64,
    pub total_count: u64,
    pub imputed_count: u64,
}

/// Imputes adult counts by applying the adult share observed in every
/// jurisdiction except `excluded_jurisdiction` to the all-ages totals, which
/// assumes the excluded jurisdiction's age mix matches the rest.
pub fn impute_adult_series(
    ages: &AgeDoseTable,
    totals: &BenchmarkSeries,
    excluded_jurisdiction: &str,
) -> Result<(BenchmarkSeries, Vec<ImputedEntry>)> {
    let mut by_date: BTreeMap<NaiveDate, (u64, u64, bool)> = BTreeMap::new();
    for row in ages.rows() {
        if row.jurisdiction.eq_ignore_ascii_case(excluded_jurisdiction) {
            continue;
        }
        let slot = by_date.entry(row.date).or_insert((0, 0, false));
        match row.age_group {
            AgeGroup::Adult => slot.0 += row.cumulative_doses,
            AgeGroup::Minor => slot.1 += row.cumulative_doses,
            _ => continue,
        }
        slot.2 = true;
    }

    let mut out = Vec::with_capacity(totals.entries().len());
    let mut detail = Vec::with_capacity(totals.entries().len());
    for entry in totals.entries() {
        let Some(&(adult, minor, true)) = by_date.get(&entry.date) else {
            return Err(Error::ImputationImpossible {
                date: entry.date,
                reason: format!("no adult/minor rows outside {excluded_jurisdiction} on this date"),
            });
        };
        let reported = adult + minor;
        let (share, imputed) = if entry.cumulative_count == 0 {
            let share = if reported == 0 {
                0.0
            } else {
                adult as f64 / reported as f64
            };
            (share, 0)
        } else if reported == 0 {
            return Err(Error::ImputationImpossible {
                date: entry.date,
                reason: "reporting jurisdictions have zero doses but the total is positive".into(),
            });
        } else {
            let share = adult as f64 / reported as f64;
            let imputed = (share * entry.cumulative_count as f64).round() as u64;
            (share, imputed.min(entry.cumulative_count))
        };
        out.push(CountEntry {
            date: entry.date,
            cumulative_count: imputed,
        });
        detail.push(ImputedEntry {
            date: entry.date,
            adult_share: share,
            total_count: entry.cumulative_count,
            imputed_count: imputed,
        });
    }
    // Monotone shares are not guaranteed, so a shrinking share can make the
    // imputed count dip; carry the running maximum to keep the series valid.
    let mut running = 0;
    for e in &mut out {
        running = running.max(e.cumulative_count);
        e.cumulative_count = running;
    }
    let series = BenchmarkSeries::new(out, totals.population().clone(), totals.as_of())?;
    Ok((series, detail))
}

/// Multiplies `value` by each factor, clipping to `[0, 1]`.
pub fn sensitivity_band(value: f64, factors: &[f64]) -> Result<Vec<f64>> {
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        return Err(Error::InvalidArgument(format!(
            "value {value} outside [0, 1]"
        )));
    }
    factors
        .iter()
        .map(|&f| {
            if f.is_finite() && f > 0.0 {
                Ok((value * f).clamp(0.0, 1.0))
            } else {
                Err(Error::InvalidFactor(f))
            }
        })
        .collect()
}

/// Known cumulative doses and population for one of two age groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupCount {
    pub known: u64,
    pub population: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on two groups' uptake when `unknown` doses lack an age.
///
/// Each group's upper bound assigns every unknown dose to it. Doses that
/// would push a group past 100% spill into the other group, raising that
/// group's lower bound.
pub fn age_group_bounds(groups: [GroupCount; 2], unknown: u64) -> Result<[GroupBounds; 2]> {
    for g in &groups {
        if g.population == 0 {
            return Err(Error::InvalidArgument(
                "group population must be positive".into(),
            ));
        }
        if g.known > g.population {
            return Err(Error::InconsistentCounts(format!(
                "{} known doses exceed group population {}",
                g.known, g.population
            )));
        }
    }
    let total = groups[0].known + groups[1].known + unknown;
    if total > groups[0].population + groups[1].population {
        return Err(Error::InconsistentCounts(format!(
            "{total} doses exceed the combined population"
        )));
    }

    // upper[g]: everything unknown to g, capped at g's population
    let mut bounds = [GroupBounds {
        lower: 0.0,
        upper: 0.0,
    }; 2];
    let mut spill = [0u64; 2];
    for g in 0..2 {
        let cap = groups[g].population - groups[g].known;
        let assigned = unknown.min(cap);
        spill[1 - g] = unknown - assigned;
        bounds[g].upper = (groups[g].known + assigned) as f64 / groups[g].population as f64;
    }
    for g in 0..2 {
        bounds[g].lower = (groups[g].known + spill[g]) as f64 / groups[g].population as f64;
    }
    Ok(bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RevisionPoint {
    pub as_of: NaiveDate,
    pub lag_days: i64,
    pub percent_increase: f64,
}

/// Revisions of one target date's count across later snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevisionCurve {
    pub target: NaiveDate,
    pub first_report: u64,
    pub points: Vec<RevisionPoint>,
    /// Snapshots that did not contain the target date.
    pub missing: Vec<NaiveDate>,
}

/// Percent change of each target date's count relative to its value in the
/// earliest snapshot, indexed by days since that snapshot.
pub fn revision_curve(
    snapshots: &[BenchmarkSeries],
    target_dates: &[NaiveDate],
) -> Result<Vec<RevisionCurve>> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument("need at least two snapshots".into()));
    }
    let mut ordered: Vec<&BenchmarkSeries> = snapshots.iter().collect();
    ordered.sort_by_key(|s| s.as_of());
    if ordered.windows(2).any(|w| w[0].as_of() == w[1].as_of()) {
        return Err(Error::InvalidArgument(
            "snapshot as_of dates must be distinct".into(),
        ));
    }
    let first = ordered[0];

    target_dates
        .iter()
        .map(|&target| {
            let first_report = first.count_on(target).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "target {target} missing from the earliest snapshot ({})",
                    first.as_of()
                ))
            })?;
            if first_report == 0 {
                return Err(Error::InvalidArgument(format!(
                    "first report for {target} is zero; percent change undefined"
                )));
            }
            let mut points = Vec::new();
            let mut missing = Vec::new();
            for snap in &ordered[1..] {
                match snap.count_on(target) {
                    Some(count) => points.push(RevisionPoint {
                        as_of: snap.as_of(),
                        lag_days: (snap.as_of() - first.as_of()).num_days(),
                        percent_increase: (count as f64 - first_report as f64)
                            / first_report as f64
                            * 100.0,
                    }),
                    None => missing.push(snap.as_of()),
                }
            }
            Ok(RevisionCurve {
                target,
                first_report,
                points,
                missing,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, m, day).unwrap()
    }

    fn frame(n: u64) -> PopulationFrame {
        PopulationFrame::new(n, "test").unwrap()
    }

    fn series(counts: &[(NaiveDate, u64)], n: u64, as_of: NaiveDate) -> BenchmarkSeries {
        let entries = counts
            .iter()
            .map(|&(date, cumulative_count)| CountEntry {
                date,
                cumulative_count,
            })
            .collect();
        BenchmarkSeries::new(entries, frame(n), as_of).unwrap()
    }

    #[test]
    fn lookup_is_a_step_function() {
        let s = series(&[(d(4, 1), 100), (d(4, 10), 200)], 1000, d(4, 10));
        assert_eq!(benchmark_at(&s, d(4, 1)).unwrap(), 0.1);
        assert_eq!(benchmark_at(&s, d(4, 5)).unwrap(), 0.1);
        assert_eq!(benchmark_at(&s, d(4, 10)).unwrap(), 0.2);
        assert_eq!(benchmark_at(&s, d(5, 1)).unwrap(), 0.2);
        assert!(matches!(
            benchmark_at(&s, d(3, 31)),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn lookup_divides_by_population() {
        let s = series(&[(d(5, 1), 145_350_000)], 255_000_000, d(5, 1));
        assert!((benchmark_at(&s, d(5, 1)).unwrap() - 0.57).abs() < 1e-15);
    }

    #[test]
    fn series_validation() {
        let e = |date, c| CountEntry {
            date,
            cumulative_count: c,
        };
        let err = BenchmarkSeries::new(vec![e(d(4, 1), 10), e(d(4, 2), 5)], frame(100), d(4, 2))
            .unwrap_err();
        assert!(err.to_string().contains("2021-04-02"));
        assert!(
            BenchmarkSeries::new(vec![e(d(4, 2), 1), e(d(4, 1), 5)], frame(100), d(4, 2)).is_err()
        );
        assert!(BenchmarkSeries::new(vec![e(d(4, 1), 102)], frame(100), d(4, 1)).is_ok());
        assert!(BenchmarkSeries::new(vec![e(d(4, 1), 103)], frame(100), d(4, 1)).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_band(0.37, &[1.0]).unwrap(), vec![0.37]);
        let band = sensitivity_band(0.5, &[0.9, 0.95, 1.05, 1.1]).unwrap();
        for (got, want) in band.iter().zip([0.45, 0.475, 0.525, 0.55]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(sensitivity_band(0.95, &[1.1]).unwrap(), vec![1.0]);
        assert!(matches!(
            sensitivity_band(0.5, &[0.0]),
            Err(Error::InvalidFactor(_))
        ));
        assert!(sensitivity_band(1.5, &[1.0]).is_err());
    }

    fn row(date: NaiveDate, j: &str, g: AgeGroup, c: u64) -> AgeDoseRow {
        AgeDoseRow {
            date,
            jurisdiction: j.into(),
            age_group: g,
            cumulative_doses: c,
        }
    }

    #[test]
    fn imputation_applies_share_to_totals() {
        let ages = AgeDoseTable::new(vec![
            row(d(4, 1), "A", AgeGroup::Adult, 80),
            row(d(4, 1), "A", AgeGroup::Minor, 20),
            row(d(4, 1), "TX", AgeGroup::Adult, 1),
            row(d(4, 1), "TX", AgeGroup::Minor, 99),
        ])
        .unwrap();
        let totals = series(&[(d(4, 1), 200)], 1000, d(4, 1));
        let (out, detail) = impute_adult_series(&ages, &totals, "TX").unwrap();
        assert_eq!(out.entries()[0].cumulative_count, 160);
        assert_eq!(detail[0].adult_share, 0.8);
    }

    #[test]
    fn imputation_degenerate_cases() {
        let ages = AgeDoseTable::new(vec![
            row(d(4, 1), "A", AgeGroup::Adult, 0),
            row(d(4, 1), "A", AgeGroup::Minor, 0),
            row(d(4, 2), "A", AgeGroup::Adult, 50),
            row(d(4, 2), "A", AgeGroup::Minor, 0),
        ])
        .unwrap();
        let totals = series(&[(d(4, 1), 0), (d(4, 2), 70)], 1000, d(4, 2));
        let (out, _) = impute_adult_series(&ages, &totals, "TX").unwrap();
        assert_eq!(out.entries()[0].cumulative_count, 0);
        assert_eq!(out.entries()[1].cumulative_count, 70);

        let only_tx = AgeDoseTable::new(vec![row(d(4, 1), "TX", AgeGroup::Adult, 5)]).unwrap();
        let totals = series(&[(d(4, 1), 10)], 1000, d(4, 1));
        assert!(matches!(
            impute_adult_series(&only_tx, &totals, "TX"),
            Err(Error::ImputationImpossible { .. })
        ));
    }

    #[test]
    fn age_table_rejects_decreasing_doses() {
        let err = AgeDoseTable::new(vec![
            row(d(4, 2), "A", AgeGroup::Adult, 5),
            row(d(4, 1), "A", AgeGroup::Adult, 9),
        ]);
        assert!(matches!(err, Err(Error::InconsistentCounts(_))));
    }

    #[test]
    fn bounds_without_unknown_collapse() {
        let b = age_group_bounds(
            [
                GroupCount {
                    known: 30,
                    population: 200,
                },
                GroupCount {
                    known: 50,
                    population: 100,
                },
            ],
            0,
        )
        .unwrap();
        for g in b {
            assert_eq!(g.lower, g.upper);
        }
    }

    #[test]
    fn bounds_hand_example() {
        let [ns, s] = age_group_bounds(
            [
                GroupCount {
                    known: 30,
                    population: 200,
                },
                GroupCount {
                    known: 50,
                    population: 100,
                },
            ],
            20,
        )
        .unwrap();
        assert_eq!((ns.lower, ns.upper), (0.15, 0.25));
        assert_eq!((s.lower, s.upper), (0.5, 0.7));
    }

    #[test]
    fn bounds_overflow_spills_to_other_group() {
        let [ns, s] = age_group_bounds(
            [
                GroupCount {
                    known: 30,
                    population: 200,
                },
                GroupCount {
                    known: 95,
                    population: 100,
                },
            ],
            20,
        )
        .unwrap();
        assert_eq!(s.upper, 1.0);
        assert_eq!(s.lower, 0.95);
        // 15 of the 20 unknown doses cannot fit among seniors
        assert_eq!(ns.lower, 45.0 / 200.0);
        assert_eq!(ns.upper, 50.0 / 200.0);
    }

    #[test]
    fn bounds_reject_inconsistent_counts() {
        assert!(matches!(
            age_group_bounds(
                [
                    GroupCount {
                        known: 101,
                        population: 100
                    },
                    GroupCount {
                        known: 0,
                        population: 100
                    },
                ],
                0
            ),
            Err(Error::InconsistentCounts(_))
        ));
    }

    #[test]
    fn revision_examples() {
        let a = series(&[(d(4, 12), 100)], 1000, d(4, 12));
        let b = series(&[(d(4, 12), 100)], 1000, d(5, 26));
        let curves = revision_curve(&[a.clone(), b], &[d(4, 12)]).unwrap();
        assert_eq!(curves[0].points[0].percent_increase, 0.0);

        let c = series(&[(d(4, 12), 106)], 1000, d(5, 27));
        let e = series(&[(d(4, 11), 104)], 1000, d(5, 1));
        let curves = revision_curve(&[c, a.clone(), e], &[d(4, 12)]).unwrap();
        let p = curves[0].points[0];
        assert_eq!(p.lag_days, 45);
        assert!((p.percent_increase - 6.0).abs() < 1e-12);
        assert_eq!(curves[0].missing, vec![d(5, 1)]);

        let f = series(&[(d(4, 12), 104)], 1000, d(5, 1));
        let curves = revision_curve(&[a, f], &[d(4, 12)]).unwrap();
        assert!((curves[0].points[0].percent_increase - 4.0).abs() < 1e-12);
    }
}
