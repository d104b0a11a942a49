//! Dissolution datasets, CSV ingestion and the summary statistics used by
//! the comparison methods.
//!
//! A dataset holds one product group: `n` dosage units measured at the same
//! `p` sampling times. Values are cumulative percent dissolved.

use std::collections::HashMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted range for a single percent-dissolved measurement.
pub const VALUE_RANGE: (f64, f64) = (-5.0, 150.0);

const GRID_TOL: f64 = 1e-9;

/// One product group: `values[(j, i)]` is unit `j` at time `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissolutionDataset {
    pub group_label: String,
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    pub unit_ids: Vec<String>,
}

impl DissolutionDataset {
    pub fn new(
        group_label: impl Into<String>,
        times: Vec<f64>,
        values: DMatrix<f64>,
        unit_ids: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            group_label: group_label.into(),
            times,
            values,
            unit_ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from unit rows, naming units `1..=n`.
    pub fn from_rows(group_label: impl Into<String>, times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = times.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Structure(format!(
                "every unit row must have {p} values"
            )));
        }
        let values = DMatrix::from_fn(rows.len(), p, |j, i| rows[j][i]);
        let unit_ids = (1..=rows.len()).map(|j| j.to_string()).collect();
        Self::new(group_label, times, values, unit_ids)
    }

    fn validate(&self) -> Result<()> {
        let p = self.times.len();
        if p == 0 || self.values.nrows() == 0 {
            return Err(Error::Structure("dataset needs at least one unit and one time point".into()));
        }
        if self.values.ncols() != p {
            return Err(Error::Structure(format!(
                "value matrix has {} columns but {} times",
                self.values.ncols(),
                p
            )));
        }
        if self.unit_ids.len() != self.values.nrows() {
            return Err(Error::Structure("unit id count does not match value rows".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Structure("sampling times must be finite".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Structure("sampling times must be strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structure("values must be finite".into()));
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Unit `j` as a length-p vector.
    pub fn unit(&self, j: usize) -> DVector<f64> {
        self.values.row(j).transpose()
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        let n = self.n_units() as f64;
        DVector::from_iterator(
            self.n_times(),
            self.values.column_iter().map(|c| c.sum() / n),
        )
    }

    /// Copy of the dataset with time column `index` removed.
    pub fn without_time(&self, index: usize) -> Result<Self> {
        if index >= self.n_times() || self.n_times() < 2 {
            return Err(Error::Structure(format!("cannot drop time index {index}")));
        }
        let times = self
            .times
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, t)| *t)
            .collect();
        Self::new(
            self.group_label.clone(),
            times,
            self.values.clone().remove_column(index),
            self.unit_ids.clone(),
        )
    }

    /// Copy keeping only the listed time indices (in order).
    pub fn select_times(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.n_times()) {
            return Err(Error::Structure("time index out of range".into()));
        }
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let values = DMatrix::from_fn(self.n_units(), indices.len(), |j, k| self.values[(j, indices[k])]);
        Self::new(self.group_label.clone(), times, values, self.unit_ids.clone())
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= GRID_TOL * (1.0 + a.abs()))
    }
}

/// Input layout of a dissolution CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvFormat {
    /// Header `group,unit,time,value`, one measurement per row.
    Long,
    /// Header `unit,<t1>,...,<tp>`, one unit per row; the group label is supplied.
    Wide { group: String },
}

/// Parses a CSV source holding exactly one product group.
pub fn parse_dataset<R: Read>(source: R, format: &CsvFormat) -> Result<DissolutionDataset> {
    let mut groups = parse_groups(source, format)?;
    match groups.len() {
        1 => Ok(groups.remove(0)),
        k => Err(Error::Structure(format!(
            "expected a single group, found {k}; use parse_groups"
        ))),
    }
}

/// Parses a CSV source into one dataset per group, in order of first appearance.
pub fn parse_groups<R: Read>(source: R, format: &CsvFormat) -> Result<Vec<DissolutionDataset>> {
    match format {
        CsvFormat::Long => parse_long(source),
        CsvFormat::Wide { group } => parse_wide(source, group).map(|d| vec![d]),
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_num(field: &str, line: usize, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} '{field}'"),
    })
}

fn check_range(value: f64, line: usize) -> Result<()> {
    let (min, max) = VALUE_RANGE;
    if !value.is_finite() || value < min || value > max {
        return Err(Error::Range { line, value, min, max });
    }
    Ok(())
}

#[derive(Default)]
struct GroupAcc {
    units: Vec<String>,
    cells: HashMap<String, Vec<(f64, f64)>>,
}

fn parse_long<R: Read>(source: R) -> Result<Vec<DissolutionDataset>> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "empty input".into(),
        });
    }
    let expected = ["group", "unit", "time", "value"];
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header group,unit,time,value, got {}", names.join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, GroupAcc> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let group = record[0].to_string();
        let unit = record[1].to_string();
        let time = parse_num(&record[2], line, "time")?;
        let value = parse_num(&record[3], line, "value")?;
        check_range(value, line)?;
        if !order.contains(&group) {
            order.push(group.clone());
        }
        let acc = groups.entry(group).or_default();
        if !acc.cells.contains_key(&unit) {
            acc.units.push(unit.clone());
        }
        acc.cells.entry(unit).or_default().push((time, value));
    }
    if order.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }

    order
        .into_iter()
        .map(|label| {
            let acc = groups.remove(&label).unwrap_or_default();
            assemble_group(label, acc)
        })
        .collect()
}

fn assemble_group(label: String, mut acc: GroupAcc) -> Result<DissolutionDataset> {
    let mut grid: Option<Vec<f64>> = None;
    let mut rows = Vec::with_capacity(acc.units.len());
    for unit in &acc.units {
        let mut cells = acc.cells.remove(unit).unwrap_or_default();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        if cells.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Structure(format!(
                "group {label}, unit {unit}: duplicate time point"
            )));
        }
        let times: Vec<f64> = cells.iter().map(|c| c.0).collect();
        match &grid {
            None => grid = Some(times),
            Some(g) if *g != times => {
                return Err(Error::Structure(format!(
                    "group {label}, unit {unit}: time grid differs from the first unit"
                )))
            }
            _ => {}
        }
        rows.push(cells.iter().map(|c| c.1).collect::<Vec<_>>());
    }
    let times = grid.unwrap_or_default();
    let values = DMatrix::from_fn(rows.len(), times.len(), |j, i| rows[j][i]);
    DissolutionDataset::new(label, times, values, acc.units)
}

fn parse_wide<R: Read>(source: R, group: &str) -> Result<DissolutionDataset> {
    let mut rdr = reader(source);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "wide header must be unit,<t1>,...,<tp>".into(),
        });
    }
    let times = headers
        .iter()
        .skip(1)
        .map(|h| {
            let h = h.trim_start_matches(['t', 'T']);
            parse_num(h, 1, "time label")
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut unit_ids = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != times.len() + 1 {
            return Err(Error::Structure(format!(
                "line {line}: expected {} fields, found {} (missing cells are not allowed)",
                times.len() + 1,
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(times.len());
        for &k in &order {
            let field = &record[k + 1];
            if field.is_empty() {
                return Err(Error::Structure(format!("line {line}: missing cell")));
            }
            let v = parse_num(field, line, "value")?;
            check_range(v, line)?;
            row.push(v);
        }
        unit_ids.push(record[0].to_string());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let sorted_times: Vec<f64> = order.iter().map(|&k| times[k]).collect();
    let values = DMatrix::from_fn(rows.len(), sorted_times.len(), |j, i| rows[j][i]);
    DissolutionDataset::new(group, sorted_times, values, unit_ids)
}

/// Writes datasets in the long CSV layout.
pub fn write_long_csv<W: std::io::Write>(out: W, datasets: &[&DissolutionDataset]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["group", "unit", "time", "value"]).map_err(io)?;
    for ds in datasets {
        for (j, unit) in ds.unit_ids.iter().enumerate() {
            for (i, t) in ds.times.iter().enumerate() {
                w.write_record([
                    ds.group_label.as_str(),
                    unit.as_str(),
                    &t.to_string(),
                    &ds.values[(j, i)].to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Column summaries of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageProfile {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    /// Population variance (divisor n).
    pub per_time_variance: Vec<f64>,
    /// 100 * sd / mean with the n-1 divisor; absent when n = 1.
    pub per_time_cv_percent: Option<Vec<f64>>,
}

pub fn average_profile(ds: &DissolutionDataset) -> AverageProfile {
    let n = ds.n_units() as f64;
    let means: Vec<f64> = ds.mean_vector().iter().copied().collect();
    let ss: Vec<f64> = ds
        .values
        .column_iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum())
        .collect();
    let per_time_cv_percent = (ds.n_units() > 1).then(|| {
        ss.iter()
            .zip(&means)
            .map(|(s, m)| 100.0 * (s / (n - 1.0)).sqrt() / m)
            .collect()
    });
    AverageProfile {
        times: ds.times.clone(),
        means,
        per_time_variance: ss.iter().map(|s| s / n).collect(),
        per_time_cv_percent,
    }
}

/// Sample covariance of the unit rows (divisor n - 1).
pub fn sample_covariance(ds: &DissolutionDataset) -> Result<DMatrix<f64>> {
    let n = ds.n_units();
    if n < 2 {
        return Err(Error::InsufficientReplication(format!(
            "group {} has {n} unit(s); covariance needs at least 2",
            ds.group_label
        )));
    }
    let mean = ds.mean_vector();
    let mut centered = ds.values.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut s = centered.transpose() * &centered / (n as f64 - 1.0);
    // exact symmetry
    let st = s.transpose();
    s = (s + st) * 0.5;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCovariance {
    pub s: DMatrix<f64>,
    pub s_r: DMatrix<f64>,
    pub s_t: DMatrix<f64>,
}

pub fn pooled_covariance(reference: &DissolutionDataset, test: &DissolutionDataset) -> Result<PooledCovariance> {
    if !reference.same_grid(test) {
        return Err(Error::Structure("reference and test time grids differ".into()));
    }
    let s_r = sample_covariance(reference)?;
    let s_t = sample_covariance(test)?;
    let s = (&s_r + &s_t) * 0.5;
    Ok(PooledCovariance { s, s_r, s_t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub note: String,
}

/// Outcome of the five regulatory preconditions for using f2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub criteria: Vec<CriterionResult>,
    pub overall: bool,
}

impl ValidityReport {
    pub fn passed(&self, index: usize) -> bool {
        self.criteria[index].passed
    }
}

pub const MIN_TIME_POINTS: usize = 3;
pub const MIN_UNITS: usize = 12;
pub const SATURATION_PERCENT: f64 = 85.0;
pub const CV_LIMIT_FIRST: f64 = 20.0;
pub const CV_LIMIT_LATER: f64 = 10.0;

/// Evaluates the five validity criteria. Criterion 4 counts time points where
/// the average profile exceeds 85%; criterion 5 applies the 20% CV limit to the
/// first time point only.
pub fn check_validity(reference: &DissolutionDataset, test: &DissolutionDataset) -> ValidityReport {
    let groups = [reference, test];
    let mut criteria = Vec::with_capacity(5);

    let p_min = reference.n_times().min(test.n_times());
    criteria.push(CriterionResult {
        name: "minimum three time points".into(),
        passed: p_min >= MIN_TIME_POINTS,
        note: format!("p = {} (R), {} (T)", reference.n_times(), test.n_times()),
    });

    criteria.push(CriterionResult {
        name: "twelve units per group".into(),
        passed: groups.iter().all(|g| g.n_units() >= MIN_UNITS),
        note: format!("n = {} (R), {} (T)", reference.n_units(), test.n_units()),
    });

    let same = reference.same_grid(test);
    criteria.push(CriterionResult {
        name: "identical time points".into(),
        passed: same,
        note: if same { "grids match".into() } else { "grids differ".into() },
    });

    let above: Vec<usize> = groups
        .iter()
        .map(|g| {
            average_profile(g)
                .means
                .iter()
                .filter(|&&m| m > SATURATION_PERCENT)
                .count()
        })
        .collect();
    criteria.push(CriterionResult {
        name: "at most one mean above 85%".into(),
        passed: above.iter().all(|&k| k <= 1),
        note: format!("points above 85%: {} (R), {} (T)", above[0], above[1]),
    });

    let mut cv_ok = true;
    let mut notes = Vec::new();
    for g in groups {
        match average_profile(g).per_time_cv_percent {
            None => {
                cv_ok = false;
                notes.push(format!("{}: CV undefined for n = 1", g.group_label));
            }
            Some(cv) => {
                for (i, c) in cv.iter().enumerate() {
                    let limit = if i == 0 { CV_LIMIT_FIRST } else { CV_LIMIT_LATER };
                    if !(c.abs() <= limit) {
                        cv_ok = false;
                        notes.push(format!(
                            "{}: CV {:.2}% at t = {} exceeds {limit}%",
                            g.group_label, c, g.times[i]
                        ));
                    }
                }
            }
        }
    }
    criteria.push(CriterionResult {
        name: "coefficient of variation limits".into(),
        passed: cv_ok,
        note: if notes.is_empty() { "all CVs within limits".into() } else { notes.join("; ") },
    });

    let overall = criteria.iter().all(|c| c.passed);
    ValidityReport { criteria, overall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_minimal_long_csv() {
        let ds = parse_dataset("group,unit,time,value\nR,1,10,50.0\n".as_bytes(), &CsvFormat::Long).unwrap();
        assert_eq!(ds.n_units(), 1);
        assert_eq!(ds.n_times(), 1);
        assert_eq!(ds.values[(0, 0)], 50.0);
    }

    #[test]
    fn empty_file_is_parse_error() {
        let err = parse_dataset("".as_bytes(), &CsvFormat::Long).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let src = "group,unit,time,value\nR,1,10,50\nR,2,10,abc\n";
        match parse_dataset(src.as_bytes(), &CsvFormat::Long).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn out_of_range_value_rejected() {
        let src = "group,unit,time,value\nR,1,10,50\nR,1,20,180\n";
        assert!(matches!(
            parse_dataset(src.as_bytes(), &CsvFormat::Long).unwrap_err(),
            Error::Range { line: 3, .. }
        ));
    }

    #[test]
    fn inconsistent_grid_is_structural() {
        let src = "group,unit,time,value\nR,1,10,50\nR,1,20,60\nR,2,10,51\nR,2,30,61\n";
        assert!(matches!(
            parse_dataset(src.as_bytes(), &CsvFormat::Long).unwrap_err(),
            Error::Structure(_)
        ));
    }

    #[test]
    fn long_rows_are_sorted_by_time() {
        let src = "group,unit,time,value\nR,1,20,60\nR,1,10,50\nR,2,10,52\nR,2,20,62\n";
        let ds = parse_dataset(src.as_bytes(), &CsvFormat::Long).unwrap();
        assert_eq!(ds.times, vec![10.0, 20.0]);
        assert_eq!(ds.values[(0, 0)], 50.0);
        assert_eq!(ds.values[(1, 1)], 62.0);
    }

    #[test]
    fn wide_format_matches_long() {
        let wide = "unit,10,20\n1,50,60\n2,52,62\n";
        let a = parse_dataset(wide.as_bytes(), &CsvFormat::Wide { group: "R".into() }).unwrap();
        let long = "group,unit,time,value\nR,1,10,50\nR,1,20,60\nR,2,10,52\nR,2,20,62\n";
        let b = parse_dataset(long.as_bytes(), &CsvFormat::Long).unwrap();
        assert_eq!(a, b);
        let wide_missing = "unit,10,20\n1,50,\n";
        assert!(parse_dataset(wide_missing.as_bytes(), &CsvFormat::Wide { group: "R".into() }).is_err());
    }

    #[test]
    fn appendix_dataset_one_reference() {
        let (r, t) = fixtures::dataset1();
        assert_eq!((r.n_units(), r.n_times()), (12, 8));
        assert_eq!(r.times, (1..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(t.n_units(), 12);
        let prof = average_profile(&r);
        // hand average of the twelve t = 1 values
        assert!((prof.means[0] - 19.875).abs() < 1e-12);
    }

    #[test]
    fn average_profile_basics() {
        let ds = DissolutionDataset::from_rows("R", vec![1.0, 2.0], &[vec![10.0, 20.0], vec![20.0, 40.0]]).unwrap();
        let prof = average_profile(&ds);
        assert_eq!(prof.means, vec![15.0, 30.0]);
        assert_eq!(prof.per_time_variance, vec![25.0, 100.0]);
        let cv = prof.per_time_cv_percent.unwrap();
        assert!((cv[0] - 100.0 * 50f64.sqrt() / 15.0).abs() < 1e-12);

        let one = DissolutionDataset::from_rows("R", vec![1.0, 2.0], &[vec![10.0, 20.0]]).unwrap();
        let prof = average_profile(&one);
        assert_eq!(prof.means, vec![10.0, 20.0]);
        assert!(prof.per_time_cv_percent.is_none());
    }

    #[test]
    fn pooled_covariance_cases() {
        let a = DissolutionDataset::from_rows("R", vec![1.0, 2.0], &[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let pc = pooled_covariance(&a, &a).unwrap();
        assert_eq!(pc.s, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));

        let flat = DissolutionDataset::from_rows("R", vec![1.0, 2.0], &[vec![5.0, 6.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(pooled_covariance(&flat, &flat).unwrap().s, DMatrix::zeros(2, 2));

        // variances 4 and 2
        let r = DissolutionDataset::from_rows("R", vec![1.0], &[vec![0.0], vec![2.0], vec![4.0]]).unwrap();
        let t = DissolutionDataset::from_rows("T", vec![1.0], &[vec![0.0], vec![2.0]]).unwrap();
        assert!((pooled_covariance(&r, &t).unwrap().s[(0, 0)] - 3.0).abs() < 1e-12);

        let single = DissolutionDataset::from_rows("T", vec![1.0], &[vec![0.0]]).unwrap();
        assert!(matches!(
            pooled_covariance(&r, &single).unwrap_err(),
            Error::InsufficientReplication(_)
        ));
        let other = DissolutionDataset::from_rows("T", vec![3.0], &[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(pooled_covariance(&r, &other).unwrap_err(), Error::Structure(_)));
    }

    #[test]
    fn validity_on_appendix_dataset_one() {
        let (r, t) = fixtures::dataset1();
        let report = check_validity(&r, &t);
        // Averages peak at 82.86 (R) and 81.71 (T); CVs stay below 8%.
        assert!(report.criteria.iter().all(|c| c.passed), "{report:?}");
        assert!(report.overall);
    }

    #[test]
    fn validity_flags_short_grids() {
        let rows: Vec<Vec<f64>> = (0..12).map(|j| vec![30.0 + j as f64 * 0.1, 50.0]).collect();
        let a = DissolutionDataset::from_rows("R", vec![10.0, 20.0], &rows).unwrap();
        let report = check_validity(&a, &a);
        assert!(!report.passed(0));
        assert!(report.passed(2));
        assert!(!report.overall);
    }

    #[test]
    fn validity_constructed_passing_case() {
        let times: Vec<f64> = (1..=8).map(|i| 10.0 * i as f64).collect();
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|j| times.iter().map(|t| t + 0.5 * ((j % 3) as f64 - 1.0)).collect())
            .collect();
        let a = DissolutionDataset::from_rows("R", times.clone(), &rows).unwrap();
        let report = check_validity(&a, &a);
        assert!(report.overall, "{report:?}");

        let shifted = DissolutionDataset::from_rows("T", times.iter().map(|t| t + 1.0).collect(), &rows).unwrap();
        assert!(!check_validity(&a, &shifted).passed(2));
    }
}
