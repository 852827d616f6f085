//! Predictor frames, paired or two-sample outcomes, empirical CDFs and
//! quantiles, and CSV ingestion.
//!
//! All types here are immutable once built. Categorical levels are numbered
//! in order of first appearance so level ids are stable across runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single predictor cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    /// Index into the owning column's level table.
    Level(u32),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Name, kind and level table of a column; what a fitted tree needs to route
/// rows from a different file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    name: String,
    kind: ColumnKind,
    levels: Vec<String>,
    values: Vec<Value>,
}

impl FeatureColumn {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { Value::Num(v) } else { Value::Missing })
            .collect();
        Ok(FeatureColumn {
            name,
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
            values,
        })
    }

    /// Numeric column where `None` marks a missing cell.
    pub fn numeric_with_missing(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        FeatureColumn {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
            values: values
                .into_iter()
                .map(|v| match v {
                    Some(x) if x.is_finite() => Value::Num(x),
                    _ => Value::Missing,
                })
                .collect(),
        }
    }

    /// Categorical column from labels; `None` marks a missing cell. Levels
    /// are numbered by first appearance.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[Option<S>]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let values = labels
            .iter()
            .map(|label| match label {
                None => Value::Missing,
                Some(s) => {
                    let s = s.as_ref();
                    let id = *index.entry(s.to_string()).or_insert_with(|| {
                        levels.push(s.to_string());
                        (levels.len() - 1) as u32
                    });
                    Value::Level(id)
                }
            })
            .collect();
        FeatureColumn {
            name: name.into(),
            kind: ColumnKind::Categorical,
            levels,
            values,
        }
    }

    /// Builds a categorical column from an explicit level table and ids.
    pub fn from_levels(name: impl Into<String>, levels: Vec<String>, values: Vec<Value>) -> Result<Self> {
        let name = name.into();
        let distinct: HashSet<&String> = levels.iter().collect();
        if distinct.len() != levels.len() {
            return Err(Error::Schema(format!("column {name}: duplicate level labels")));
        }
        for v in &values {
            match v {
                Value::Level(id) if (*id as usize) < levels.len() => {}
                Value::Missing => {}
                other => {
                    return Err(Error::Schema(format!("column {name}: bad categorical value {other:?}")))
                }
            }
        }
        Ok(FeatureColumn {
            name,
            kind: ColumnKind::Categorical,
            levels,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            name: self.name.clone(),
            kind: self.kind,
            levels: self.levels.clone(),
        }
    }

    /// Applies `f` to every numeric cell, keeping missing cells missing.
    pub fn map_numeric(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        if self.kind != ColumnKind::Numeric {
            return Err(Error::Schema(format!("column {} is not numeric", self.name)));
        }
        let values = self
            .values
            .iter()
            .map(|v| match v {
                Value::Num(x) => {
                    let y = f(*x);
                    if y.is_finite() {
                        Value::Num(y)
                    } else {
                        Value::Missing
                    }
                }
                other => *other,
            })
            .collect();
        Ok(FeatureColumn {
            values,
            ..self.clone()
        })
    }

    fn select(&self, rows: &[usize]) -> Self {
        FeatureColumn {
            name: self.name.clone(),
            kind: self.kind,
            levels: self.levels.clone(),
            values: rows.iter().map(|&i| self.values[i]).collect(),
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match self.values[row] {
            Value::Num(x) => format!("{x}"),
            Value::Level(id) => self.levels[id as usize].clone(),
            Value::Missing => String::new(),
        }
    }
}

/// Predictor matrix stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: Vec<FeatureColumn>,
    n_rows: usize,
}

impl Frame {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.len());
        let mut names = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column {} has {} rows, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {}", c.name)));
            }
        }
        Ok(Frame { columns, n_rows })
    }

    /// Numeric frame from row-major data; columns named `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        let columns = (0..p)
            .map(|j| FeatureColumn::numeric(format!("x{}", j + 1), rows.iter().map(|r| r[j]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Frame::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &FeatureColumn {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        self.columns[col].values[row]
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.values[row]).collect()
    }

    /// Numeric row as `f64`s; missing and categorical cells become NaN.
    pub fn numeric_row(&self, row: usize) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match c.values[row] {
                Value::Num(x) => x,
                _ => f64::NAN,
            })
            .collect()
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(FeatureColumn::schema).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn with_column(&self, j: usize, column: FeatureColumn) -> Result<Frame> {
        let mut columns = self.columns.clone();
        columns[j] = column;
        Frame::new(columns)
    }

    /// Reorders columns by name to match `schema` and remaps categorical
    /// level ids onto the schema's level tables. Labels the schema has never
    /// seen get ids past the end of its table, so routing treats them as
    /// unseen levels.
    pub fn conform_to(&self, schema: &[ColumnSchema]) -> Result<Frame> {
        let mut by_name: HashMap<&str, &FeatureColumn> = HashMap::new();
        for c in &self.columns {
            by_name.insert(c.name.as_str(), c);
        }
        let mut columns = Vec::with_capacity(schema.len());
        for s in schema {
            let col = by_name
                .get(s.name.as_str())
                .ok_or_else(|| Error::Schema(format!("input lacks model column {}", s.name)))?;
            match (s.kind, col.kind) {
                (ColumnKind::Numeric, ColumnKind::Numeric) => columns.push((*col).clone()),
                (ColumnKind::Numeric, ColumnKind::Categorical) => {
                    // All-missing columns load as categorical only if declared so.
                    return Err(Error::Schema(format!(
                        "column {} is numeric in the model but categorical in the input",
                        s.name
                    )));
                }
                (ColumnKind::Categorical, ColumnKind::Numeric) => {
                    if col.values.iter().any(|v| !v.is_missing()) {
                        return Err(Error::Schema(format!(
                            "column {} is categorical in the model but numeric in the input",
                            s.name
                        )));
                    }
                    columns.push(FeatureColumn {
                        name: s.name.clone(),
                        kind: ColumnKind::Categorical,
                        levels: s.levels.clone(),
                        values: col.values.clone(),
                    });
                }
                (ColumnKind::Categorical, ColumnKind::Categorical) => {
                    let mut levels = s.levels.clone();
                    let mut index: HashMap<String, u32> =
                        levels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
                    let remap: Vec<u32> = col
                        .levels
                        .iter()
                        .map(|l| {
                            *index.entry(l.clone()).or_insert_with(|| {
                                levels.push(l.clone());
                                (levels.len() - 1) as u32
                            })
                        })
                        .collect();
                    let values = col
                        .values
                        .iter()
                        .map(|v| match v {
                            Value::Level(id) => Value::Level(remap[*id as usize]),
                            other => *other,
                        })
                        .collect();
                    columns.push(FeatureColumn {
                        name: s.name.clone(),
                        kind: ColumnKind::Categorical,
                        levels,
                        values,
                    });
                }
            }
        }
        Frame::new(columns).map(|mut f| {
            f.n_rows = self.n_rows;
            f
        })
    }
}

/// Which of the two samples a row belongs to in two-sample mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    /// Carries a `y` outcome.
    First,
    /// Carries a `z` outcome.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    Paired,
    TwoSample,
}

#[derive(Debug, Clone, PartialEq)]
enum Outcomes {
    Paired { y: Vec<f64>, z: Vec<f64> },
    TwoSample { values: Vec<f64>, origin: Vec<Origin> },
}

/// Predictors plus the two outcomes being contrasted.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSample {
    x: Frame,
    outcomes: Outcomes,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Cell {
            row: i,
            column: name.to_string(),
            detail: "outcome must be finite".into(),
        });
    }
    Ok(())
}

impl ContrastSample {
    pub fn paired(x: Frame, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if y.len() != x.n_rows() || z.len() != x.n_rows() {
            return Err(Error::Data(format!(
                "paired sample needs |y| = |z| = rows ({} / {} / {})",
                y.len(),
                z.len(),
                x.n_rows()
            )));
        }
        check_finite("y", &y)?;
        check_finite("z", &z)?;
        Ok(ContrastSample {
            x,
            outcomes: Outcomes::Paired { y, z },
        })
    }

    /// Two-sample data: row `i` carries `values[i]`, a `y` outcome when its
    /// origin is [`Origin::First`] and a `z` outcome otherwise.
    pub fn two_sample(x: Frame, values: Vec<f64>, origin: Vec<Origin>) -> Result<Self> {
        if values.len() != x.n_rows() || origin.len() != x.n_rows() {
            return Err(Error::Data("two-sample outcome/origin length mismatch".into()));
        }
        check_finite("outcome", &values)?;
        Ok(ContrastSample {
            x,
            outcomes: Outcomes::TwoSample { values, origin },
        })
    }

    /// Stacks two separate samples over a pooled predictor frame.
    pub fn from_two_samples(x1: &Frame, y: &[f64], x2: &Frame, z: &[f64]) -> Result<Self> {
        if x1.schema().iter().map(|c| (&c.name, c.kind)).ne(x2.schema().iter().map(|c| (&c.name, c.kind))) {
            return Err(Error::Schema("two samples have different predictor columns".into()));
        }
        if x1.n_rows() != y.len() || x2.n_rows() != z.len() {
            return Err(Error::Data("sample sizes do not match outcome lengths".into()));
        }
        let x2 = x2.conform_to(&x1.schema())?;
        let mut columns = Vec::with_capacity(x1.n_cols());
        for (a, b) in x1.columns.iter().zip(&x2.columns) {
            let mut col = FeatureColumn {
                name: a.name.clone(),
                kind: a.kind,
                levels: b.levels.clone(),
                values: a.values.clone(),
            };
            col.values.extend_from_slice(&b.values);
            columns.push(col);
        }
        let mut values = y.to_vec();
        values.extend_from_slice(z);
        let mut origin = vec![Origin::First; y.len()];
        origin.extend(std::iter::repeat_n(Origin::Second, z.len()));
        ContrastSample::two_sample(Frame::new(columns)?, values, origin)
    }

    pub fn x(&self) -> &Frame {
        &self.x
    }

    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    pub fn mode(&self) -> SampleMode {
        match self.outcomes {
            Outcomes::Paired { .. } => SampleMode::Paired,
            Outcomes::TwoSample { .. } => SampleMode::TwoSample,
        }
    }

    /// Paired `y`; `None` in two-sample mode.
    pub fn y(&self) -> Option<&[f64]> {
        match &self.outcomes {
            Outcomes::Paired { y, .. } => Some(y),
            Outcomes::TwoSample { .. } => None,
        }
    }

    /// Paired `z`; `None` in two-sample mode.
    pub fn z(&self) -> Option<&[f64]> {
        match &self.outcomes {
            Outcomes::Paired { z, .. } => Some(z),
            Outcomes::TwoSample { .. } => None,
        }
    }

    pub fn origin(&self) -> Option<&[Origin]> {
        match &self.outcomes {
            Outcomes::Paired { .. } => None,
            Outcomes::TwoSample { origin, .. } => Some(origin),
        }
    }

    /// Outcome of row `i` and which side it belongs to, for two-sample data.
    pub fn two_sample_value(&self, i: usize) -> Option<(f64, Origin)> {
        match &self.outcomes {
            Outcomes::Paired { .. } => None,
            Outcomes::TwoSample { values, origin } => Some((values[i], origin[i])),
        }
    }

    /// The `y`-side and `z`-side outcome lists of `rows`, in row order.
    pub fn sides(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        match &self.outcomes {
            Outcomes::Paired { y, z } => (rows.iter().map(|&i| y[i]).collect(), rows.iter().map(|&i| z[i]).collect()),
            Outcomes::TwoSample { values, origin } => {
                let mut ys = Vec::new();
                let mut zs = Vec::new();
                for &i in rows {
                    match origin[i] {
                        Origin::First => ys.push(values[i]),
                        Origin::Second => zs.push(values[i]),
                    }
                }
                (ys, zs)
            }
        }
    }

    /// Row counts on the `y` and `z` sides of `rows`.
    pub fn side_counts(&self, rows: &[usize]) -> (usize, usize) {
        match &self.outcomes {
            Outcomes::Paired { .. } => (rows.len(), rows.len()),
            Outcomes::TwoSample { origin, .. } => {
                let first = rows.iter().filter(|&&i| origin[i] == Origin::First).count();
                (first, rows.len() - first)
            }
        }
    }

    /// Same predictors and `y`, new `z`. Paired samples only.
    pub fn with_z(&self, z: Vec<f64>) -> Result<Self> {
        match &self.outcomes {
            Outcomes::Paired { y, .. } => ContrastSample::paired(self.x.clone(), y.clone(), z),
            Outcomes::TwoSample { .. } => Err(Error::Data("with_z needs a paired sample".into())),
        }
    }

    pub fn with_x(&self, x: Frame) -> Result<Self> {
        if x.n_rows() != self.x.n_rows() {
            return Err(Error::Data("replacement frame has a different row count".into()));
        }
        Ok(ContrastSample {
            x,
            outcomes: self.outcomes.clone(),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> ContrastSample {
        let outcomes = match &self.outcomes {
            Outcomes::Paired { y, z } => Outcomes::Paired {
                y: rows.iter().map(|&i| y[i]).collect(),
                z: rows.iter().map(|&i| z[i]).collect(),
            },
            Outcomes::TwoSample { values, origin } => Outcomes::TwoSample {
                values: rows.iter().map(|&i| values[i]).collect(),
                origin: rows.iter().map(|&i| origin[i]).collect(),
            },
        };
        ContrastSample {
            x: self.x.select_rows(rows),
            outcomes,
        }
    }

    pub fn conform_to(&self, schema: &[ColumnSchema]) -> Result<Self> {
        Ok(ContrastSample {
            x: self.x.conform_to(schema)?,
            outcomes: self.outcomes.clone(),
        })
    }

    /// Writes the sample as CSV: predictor columns, then `y` and `z`. In
    /// two-sample mode each row leaves the other side's cell empty.
    pub fn to_csv_string(&self, y_name: &str, z_name: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.x.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(y_name);
        header.push(z_name);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.x.columns.iter().map(|c| c.cell_text(i)).collect();
            match &self.outcomes {
                Outcomes::Paired { y, z } => {
                    rec.push(format!("{}", y[i]));
                    rec.push(format!("{}", z[i]));
                }
                Outcomes::TwoSample { values, origin } => match origin[i] {
                    Origin::First => {
                        rec.push(format!("{}", values[i]));
                        rec.push(String::new());
                    }
                    Origin::Second => {
                        rec.push(String::new());
                        rec.push(format!("{}", values[i]));
                    }
                },
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Sorted list of row indices belonging to one region.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionMask {
    indices: Vec<usize>,
}

impl RegionMask {
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("region mask has duplicate rows".into()));
        }
        if indices.last().is_some_and(|&i| i >= n) {
            return Err(Error::Data("region mask row out of range".into()));
        }
        Ok(RegionMask { indices })
    }

    pub fn all(n: usize) -> Self {
        RegionMask {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empirical CDF of an empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("empirical CDF needs finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{v <= t} / n`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.sorted, p)
    }
}

/// Sample quantile with plotting positions `(i - 0.5) / n` and linear
/// interpolation between order statistics; clamped outside
/// `[0.5 / n, 1 - 0.5 / n]`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("quantile probability {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// [`quantile`] on already sorted, nonempty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    // 1-based fractional order-statistic position.
    let mut h = p * n as f64 + 0.5;
    let nearest = h.round();
    if (h - nearest).abs() <= 1e-9 {
        h = nearest;
    }
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let frac = h - lo;
    let k = lo as usize;
    if frac == 0.0 {
        return sorted[k - 1];
    }
    sorted[k - 1] + frac * (sorted[k] - sorted[k - 1])
}

/// How a two-sample CSV marks which rows belong to which sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleLayout {
    /// One row per observation with both `y` and `z`.
    Paired,
    /// `y` and `z` columns where every row fills exactly one of them.
    TwoSampleColumns,
    /// A single outcome column (`y`); rows whose `column` equals `level`
    /// form the first sample.
    TwoSampleGroup { column: String, level: String },
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRoles {
    pub y: String,
    pub z: Option<String>,
    /// Predictor columns; `None` takes every column without another role.
    pub x: Option<Vec<String>>,
    pub categorical: Vec<String>,
    /// Numeric columns loaded alongside but kept out of the predictors.
    pub aux: Vec<String>,
    pub layout: SampleLayout,
}

impl ColumnRoles {
    pub fn paired(y: impl Into<String>, z: impl Into<String>) -> Self {
        ColumnRoles {
            y: y.into(),
            z: Some(z.into()),
            x: None,
            categorical: Vec::new(),
            aux: Vec::new(),
            layout: SampleLayout::Paired,
        }
    }

    fn reserved(&self) -> HashSet<&str> {
        let mut set: HashSet<&str> = HashSet::new();
        set.insert(self.y.as_str());
        if let Some(z) = &self.z {
            set.insert(z.as_str());
        }
        if let SampleLayout::TwoSampleGroup { column, .. } = &self.layout {
            set.insert(column.as_str());
        }
        for a in &self.aux {
            set.insert(a.as_str());
        }
        set
    }
}

fn is_missing_cell(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA" || t.eq_ignore_ascii_case("nan")
}

/// Raw CSV contents, header plus string cells.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl CsvTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut index = HashMap::new();
        for (j, h) in header.iter().enumerate() {
            if index.insert(h.clone(), j).is_some() {
                return Err(Error::Schema(format!("duplicate column name {h}")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(CsvTable { header, rows, index })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn col_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("no column named {name}")))
    }

    /// Numeric column with `None` for missing cells; unparsable cells are an error.
    pub fn numeric_optional(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.col_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r[j].trim();
                if is_missing_cell(cell) {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::Cell {
                        row: i + 1,
                        column: name.to_string(),
                        detail: format!("cannot parse {cell:?} as a finite number"),
                    }),
                }
            })
            .collect()
    }

    /// Numeric column that must be present on every row.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        self.numeric_optional(name)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::Cell {
                    row: i + 1,
                    column: name.to_string(),
                    detail: "missing value".into(),
                })
            })
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let j = self.col_index(name)?;
        Ok(self.rows.iter().map(|r| r[j].trim().to_string()).collect())
    }

    /// Builds a predictor column, inferring numeric unless declared
    /// categorical or some non-missing cell fails to parse as a finite number.
    pub fn feature(&self, name: &str, categorical: bool) -> Result<FeatureColumn> {
        let j = self.col_index(name)?;
        let cells: Vec<Option<&str>> = self
            .rows
            .iter()
            .map(|r| {
                let c = r[j].trim();
                if is_missing_cell(c) {
                    None
                } else {
                    Some(c)
                }
            })
            .collect();
        if !categorical {
            let parsed: Option<Vec<Option<f64>>> = cells
                .iter()
                .map(|c| match c {
                    None => Some(None),
                    Some(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some),
                })
                .collect();
            if let Some(values) = parsed {
                return Ok(FeatureColumn::numeric_with_missing(name, values));
            }
        }
        Ok(FeatureColumn::categorical(name, &cells))
    }

    pub fn frame(&self, names: &[String], categorical: &[String]) -> Result<Frame> {
        let cat: HashSet<&str> = categorical.iter().map(String::as_str).collect();
        let cols = names
            .iter()
            .map(|n| self.feature(n, cat.contains(n.as_str())))
            .collect::<Result<Vec<_>>>()?;
        let mut frame = Frame::new(cols)?;
        frame.n_rows = self.rows.len();
        Ok(frame)
    }

    /// Predictor columns named by `roles` (or all unreserved ones).
    pub fn predictor_names(&self, roles: &ColumnRoles) -> Result<Vec<String>> {
        let names = match &roles.x {
            Some(x) => x.clone(),
            None => {
                let reserved = roles.reserved();
                self.header
                    .iter()
                    .filter(|h| !reserved.contains(h.as_str()))
                    .cloned()
                    .collect()
            }
        };
        if names.is_empty() {
            return Err(Error::Schema("no predictor columns".into()));
        }
        let reserved = roles.reserved();
        if let Some(bad) = names.iter().find(|n| reserved.contains(n.as_str())) {
            return Err(Error::Schema(format!("column {bad} cannot be both a predictor and an outcome")));
        }
        Ok(names)
    }

    pub fn aux_columns(&self, roles: &ColumnRoles) -> Result<BTreeMap<String, Vec<f64>>> {
        roles
            .aux
            .iter()
            .map(|a| Ok((a.clone(), self.numeric(a)?)))
            .collect()
    }

    /// Applies `roles` to the table.
    pub fn to_sample(&self, roles: &ColumnRoles) -> Result<ContrastSample> {
        let x_names = self.predictor_names(roles)?;
        let x = self.frame(&x_names, &roles.categorical)?;
        match &roles.layout {
            SampleLayout::Paired => {
                let z_name = roles
                    .z
                    .as_ref()
                    .ok_or_else(|| Error::Schema("paired data needs a z column".into()))?;
                let y = self.numeric(&roles.y)?;
                let z = self.numeric(z_name)?;
                ContrastSample::paired(x, y, z)
            }
            SampleLayout::TwoSampleColumns => {
                let z_name = roles
                    .z
                    .as_ref()
                    .ok_or_else(|| Error::Schema("two-sample columns layout needs a z column".into()))?;
                let y = self.numeric_optional(&roles.y)?;
                let z = self.numeric_optional(z_name)?;
                let mut values = Vec::with_capacity(y.len());
                let mut origin = Vec::with_capacity(y.len());
                for (i, (a, b)) in y.iter().zip(&z).enumerate() {
                    match (a, b) {
                        (Some(v), None) => {
                            values.push(*v);
                            origin.push(Origin::First);
                        }
                        (None, Some(v)) => {
                            values.push(*v);
                            origin.push(Origin::Second);
                        }
                        (Some(_), Some(_)) => {
                            return Err(Error::Cell {
                                row: i + 1,
                                column: format!("{}/{}", roles.y, z_name),
                                detail: "two-sample row carries both y and z".into(),
                            })
                        }
                        (None, None) => {
                            return Err(Error::Cell {
                                row: i + 1,
                                column: roles.y.clone(),
                                detail: "missing y value (row has neither y nor z)".into(),
                            })
                        }
                    }
                }
                ContrastSample::two_sample(x, values, origin)
            }
            SampleLayout::TwoSampleGroup { column, level } => {
                let values = self.numeric(&roles.y)?;
                let groups = self.strings(column)?;
                let origin = groups
                    .iter()
                    .map(|g| if g == level { Origin::First } else { Origin::Second })
                    .collect();
                ContrastSample::two_sample(x, values, origin)
            }
        }
    }
}

/// Reads `path` and applies the column roles.
pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<ContrastSample> {
    CsvTable::read(path)?.to_sample(roles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(text: &str) -> CsvTable {
        CsvTable::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn cdf_counts_right_continuous() {
        let cdf = EmpiricalCdf::new(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cdf.eval(2.0), 2.0 / 3.0);
        assert_eq!(cdf.eval(0.0), 0.0);
        assert_eq!(cdf.eval(3.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[3.0, 1.0], 0.5).unwrap(), 2.0);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn loads_paired_sample() {
        let t = table("a,b,out,pred\n1,u,0.5,0.4\n2,v,1.5,1.0\n,u,2.0,2.5\n");
        let s = t.to_sample(&ColumnRoles::paired("out", "pred")).unwrap();
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.mode(), SampleMode::Paired);
        assert_eq!(s.x().n_cols(), 2);
        assert_eq!(s.x().value(2, 0), Value::Missing);
        assert_eq!(s.x().column(1).kind(), ColumnKind::Categorical);
        assert_eq!(s.x().column(1).levels(), &["u".to_string(), "v".to_string()]);
        assert_eq!(s.y().unwrap(), &[0.5, 1.5, 2.0]);
    }

    #[test]
    fn missing_y_is_an_error_naming_row_and_column() {
        let t = table("a,out,pred\n1,NA,0.4\n");
        let err = t.to_sample(&ColumnRoles::paired("out", "pred")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("out"), "{msg}");
    }

    #[test]
    fn duplicate_columns_rejected() {
        assert!(CsvTable::from_reader("a,a,y\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv("/nonexistent/file.csv", &ColumnRoles::paired("y", "z")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn two_sample_columns_layout() {
        let t = table("a,y,z\n1,0.5,\n2,,1.0\n3,0.1,\n");
        let mut roles = ColumnRoles::paired("y", "z");
        roles.layout = SampleLayout::TwoSampleColumns;
        let s = t.to_sample(&roles).unwrap();
        assert_eq!(s.mode(), SampleMode::TwoSample);
        assert_eq!(s.side_counts(&[0, 1, 2]), (2, 1));
        let (ys, zs) = s.sides(&[0, 1, 2]);
        assert_eq!(ys, vec![0.5, 0.1]);
        assert_eq!(zs, vec![1.0]);

        let both = table("a,y,z\n1,0.5,0.2\n");
        assert!(both.to_sample(&roles).is_err());
    }

    #[test]
    fn two_sample_group_layout() {
        let t = table("a,sex,y\n1,M,1\n2,F,0\n3,M,0\n");
        let roles = ColumnRoles {
            y: "y".into(),
            z: None,
            x: None,
            categorical: vec![],
            aux: vec![],
            layout: SampleLayout::TwoSampleGroup {
                column: "sex".into(),
                level: "M".into(),
            },
        };
        let s = t.to_sample(&roles).unwrap();
        assert_eq!(s.x().n_cols(), 1);
        assert_eq!(s.origin().unwrap(), &[Origin::First, Origin::Second, Origin::First]);
    }

    #[test]
    fn conform_remaps_levels_and_marks_unseen() {
        let train = FeatureColumn::categorical("c", &[Some("a"), Some("b")]);
        let test = FeatureColumn::categorical("c", &[Some("b"), Some("z"), None]);
        let schema = Frame::new(vec![train]).unwrap().schema();
        let f = Frame::new(vec![test]).unwrap().conform_to(&schema).unwrap();
        assert_eq!(f.value(0, 0), Value::Level(1));
        assert_eq!(f.value(1, 0), Value::Level(2));
        assert_eq!(f.value(2, 0), Value::Missing);
    }

    proptest! {
        #[test]
        fn cdf_monotone_on_grid(values in prop::collection::vec(-100.0f64..100.0, 1..40), a in -120.0f64..120.0, b in -120.0f64..120.0) {
            let cdf = EmpiricalCdf::new(&values).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cdf.eval(lo) <= cdf.eval(hi));
            let k = cdf.eval(lo) * values.len() as f64;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }

        #[test]
        fn quantile_monotone_and_bounded(values in prop::collection::vec(-100.0f64..100.0, 1..40), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let qa = quantile(&values, lo).unwrap();
            let qb = quantile(&values, hi).unwrap();
            prop_assert!(qa <= qb);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(qa >= min && qb <= max);
        }

        #[test]
        fn quantile_hits_order_statistics(values in prop::collection::hash_set(-10_000i64..10_000, 1..50)) {
            let mut v: Vec<f64> = values.into_iter().map(|x| x as f64 / 7.0).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            for i in 1..=n {
                let p = (i as f64 - 0.5) / n as f64;
                prop_assert_eq!(quantile(&v, p).unwrap(), v[i - 1]);
            }
        }

        #[test]
        fn csv_round_trip(rows in prop::collection::vec((prop::option::of(-1e3f64..1e3), prop::option::of(0usize..4), -5.0f64..5.0, -5.0f64..5.0), 1..20)) {
            let labels = ["red", "green", "blue", "x y"];
            let num = FeatureColumn::numeric_with_missing("n", rows.iter().map(|r| r.0).collect());
            let cat_labels: Vec<Option<&str>> = rows.iter().map(|r| r.1.map(|k| labels[k])).collect();
            let cat = FeatureColumn::categorical("c", &cat_labels);
            let x = Frame::new(vec![num, cat]).unwrap();
            let s = ContrastSample::paired(x, rows.iter().map(|r| r.2).collect(), rows.iter().map(|r| r.3).collect()).unwrap();
            let text = s.to_csv_string("y", "z").unwrap();
            let mut roles = ColumnRoles::paired("y", "z");
            roles.categorical = vec!["c".into()];
            let back = CsvTable::from_reader(text.as_bytes()).unwrap().to_sample(&roles).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
