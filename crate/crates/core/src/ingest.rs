//! Loading and aligning real paired series: CSV ingestion with missing-value
//! tracking, inner-joined pair construction with seasonal filtering and
//! covariate aggregation, and a comonotonicity screen for pairs too dependent
//! to analyse.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::tail::PairedSample;

/// One named daily series. Timestamps are strictly increasing; `values[i]`
/// belongs to `timestamps[i]`, `None` marking a recorded-but-missing day.
#[derive(Debug, Clone)]
pub struct Series {
    pub id: String,
    pub timestamps: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl Series {
    pub fn new(id: String, timestamps: Vec<NaiveDate>, values: Vec<Option<f64>>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Input(format!("series {id}: timestamps and values differ in length")));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!("series {id}: timestamps must be strictly increasing")));
        }
        Ok(Series { id, timestamps, values, metadata: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// How multiple covariate series collapse into one column of H per day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

/// Description of one pair to analyse: target series, covariates feeding the
/// confounder column, and the months kept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSpec {
    pub upstream: String,
    pub downstream: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "default_aggregation")]
    pub aggregation: Aggregation,
    /// Months (1–12) retained; e.g. [6, 7, 8] for June–August.
    pub season: BTreeSet<u32>,
}

fn default_aggregation() -> Aggregation {
    Aggregation::Mean
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        if self.upstream == self.downstream {
            return Err(Error::Input("pair upstream and downstream must differ".into()));
        }
        if self.season.is_empty() {
            return Err(Error::Input("pair season month set must be nonempty".into()));
        }
        if self.season.iter().any(|&m| m == 0 || m > 12) {
            return Err(Error::Input("season months must lie in 1..=12".into()));
        }
        Ok(())
    }
}

/// Parse a headered CSV with a leading date column (ISO-8601) and one column
/// per series. Unparsable or "NA" cells become missing; duplicate dates and
/// malformed dates are errors carrying the offending line number.
pub fn load_csv(path: &Path) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Ingest { line: 1, msg: "need a date column and at least one series column".into() });
    }
    let ids: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut timestamps: Vec<NaiveDate> = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    let mut seen: BTreeSet<NaiveDate> = BTreeSet::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        let raw_date = record.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| Error::Ingest { line, msg: format!("unparsable date {raw_date:?}") })?;
        if !seen.insert(date) {
            return Err(Error::Ingest { line, msg: format!("duplicate date {date}") });
        }
        timestamps.push(date);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let cell = cell.trim();
            let value = if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                None
            } else {
                cell.parse::<f64>().ok()
            };
            columns[j].push(value);
        }
    }
    // Rows may arrive unordered; sort every column by date.
    let mut order: Vec<usize> = (0..timestamps.len()).collect();
    order.sort_by_key(|&i| timestamps[i]);
    let sorted_dates: Vec<NaiveDate> = order.iter().map(|&i| timestamps[i]).collect();
    ids.into_iter()
        .zip(columns)
        .map(|(id, col)| {
            let values = order.iter().map(|&i| col[i]).collect();
            Series::new(id, sorted_dates.clone(), values)
        })
        .collect()
}

/// Bookkeeping of the join: how many dates the series had in common and how
/// many rows survived missing-value removal. `joined == retained + dropped`.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub joined: usize,
    pub retained: usize,
    pub dropped_missing: usize,
}

fn series_map(store: &[Series]) -> BTreeMap<&str, &Series> {
    store.iter().map(|s| (s.id.as_str(), s)).collect()
}

fn lookup<'a>(map: &BTreeMap<&str, &'a Series>, id: &str) -> Result<&'a Series> {
    map.get(id).copied().ok_or_else(|| Error::Input(format!("unknown series id {id:?}")))
}

/// Inner-join the two targets and every covariate on dates, keep the
/// in-season rows, drop rows with any missing value, and aggregate the
/// covariates into a single confounder column.
pub fn build_pair(store: &[Series], spec: &PairSpec) -> Result<(PairedSample, Vec<NaiveDate>, BuildReport)> {
    spec.validate()?;
    let map = series_map(store);
    let up = lookup(&map, &spec.upstream)?;
    let down = lookup(&map, &spec.downstream)?;
    let covs: Vec<&Series> = spec
        .covariates
        .iter()
        .map(|id| lookup(&map, id))
        .collect::<Result<_>>()?;

    let indexed = |s: &Series| -> BTreeMap<NaiveDate, Option<f64>> {
        s.timestamps.iter().copied().zip(s.values.iter().copied()).collect()
    };
    let up_idx = indexed(up);
    let down_idx = indexed(down);
    let cov_idx: Vec<BTreeMap<NaiveDate, Option<f64>>> = covs.iter().map(|s| indexed(s)).collect();

    let mut joined = 0usize;
    let mut dropped = 0usize;
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut dates = Vec::new();
    for (&date, &u) in &up_idx {
        if !spec.season.contains(&date.month()) {
            continue;
        }
        let Some(&d) = down_idx.get(&date) else { continue };
        let cov_cells: Option<Vec<Option<f64>>> =
            cov_idx.iter().map(|m| m.get(&date).copied()).collect();
        let Some(cov_cells) = cov_cells else { continue };
        joined += 1;
        let complete: Option<Vec<f64>> = cov_cells.into_iter().collect();
        match (u, d, complete) {
            (Some(u), Some(d), Some(cov_vals)) => {
                x1.push(u);
                x2.push(d);
                if !cov_vals.is_empty() {
                    let agg = match spec.aggregation {
                        Aggregation::Mean => stats::mean(&cov_vals),
                        Aggregation::Sum => cov_vals.iter().sum(),
                    };
                    h.push(vec![agg]);
                }
                dates.push(date);
            }
            _ => dropped += 1,
        }
    }
    if x1.is_empty() {
        return Err(Error::Input("pair has no complete common in-season observations".into()));
    }
    let retained = x1.len();
    let sample = PairedSample::new(x1, x2, if h.is_empty() { None } else { Some(h) })?;
    Ok((sample, dates, BuildReport { joined, retained, dropped_missing: dropped }))
}

/// Spearman rank correlation of (x1, x2); near-unity means the pair is too
/// dependent for directional analysis.
pub fn comonotonicity_screen(s: &PairedSample) -> Result<f64> {
    if s.n() < 10 {
        return Err(Error::Input("comonotonicity screen needs n >= 10".into()));
    }
    stats::spearman(&s.x1, &s.x2)
}

/// Audit dump of an aligned pair: date, x1, x2 and the confounder column.
pub fn write_pair_csv(path: &Path, s: &PairedSample, dates: &[NaiveDate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string(), "x1".to_string(), "x2".to_string()];
    let d = s.h.as_ref().map_or(0, |rows| rows[0].len());
    for j in 0..d {
        header.push(format!("h{}", j + 1));
    }
    w.write_record(&header)?;
    for i in 0..s.n() {
        let mut row = vec![dates[i].to_string(), format!("{:.17e}", s.x1[i]), format!("{:.17e}", s.x2[i])];
        if let Some(rows) = &s.h {
            for v in &rows[i] {
                row.push(format!("{v:.17e}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
