//! Tabular input, predictor normalization and the four response types.

use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Kind of response a dataset carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResponseKind {
    Continuous,
    Binary,
    Count,
    Survival,
}

impl ResponseKind {
    pub fn name(self) -> &'static str {
        match self {
            ResponseKind::Continuous => "continuous",
            ResponseKind::Binary => "binary",
            ResponseKind::Count => "count",
            ResponseKind::Survival => "survival",
        }
    }
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" | "regression" => Ok(ResponseKind::Continuous),
            "binary" | "class" => Ok(ResponseKind::Binary),
            "count" | "counts" => Ok(ResponseKind::Count),
            "survival" | "cox" => Ok(ResponseKind::Survival),
            other => Err(Error::Config(format!("unknown response kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Continuous(Vec<f64>),
    Binary(Vec<bool>),
    Count(Vec<u64>),
    Survival { time: Vec<f64>, event: Vec<bool> },
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(y) => y.len(),
            Response::Binary(t) => t.len(),
            Response::Count(s) => s.len(),
            Response::Survival { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ResponseKind {
        match self {
            Response::Continuous(_) => ResponseKind::Continuous,
            Response::Binary(_) => ResponseKind::Binary,
            Response::Count(_) => ResponseKind::Count,
            Response::Survival { .. } => ResponseKind::Survival,
        }
    }

    /// Rows `idx` of the response, in that order.
    pub fn select(&self, idx: &[usize]) -> Response {
        match self {
            Response::Continuous(y) => Response::Continuous(idx.iter().map(|&i| y[i]).collect()),
            Response::Binary(t) => Response::Binary(idx.iter().map(|&i| t[i]).collect()),
            Response::Count(s) => Response::Count(idx.iter().map(|&i| s[i]).collect()),
            Response::Survival { time, event } => Response::Survival {
                time: idx.iter().map(|&i| time[i]).collect(),
                event: idx.iter().map(|&i| event[i]).collect(),
            },
        }
    }

    /// Response values as reals (class labels and event flags as 0/1; for
    /// survival data the times).
    pub fn as_reals(&self) -> Vec<f64> {
        match self {
            Response::Continuous(y) => y.clone(),
            Response::Binary(t) => t.iter().map(|&b| f64::from(u8::from(b))).collect(),
            Response::Count(s) => s.iter().map(|&c| c as f64).collect(),
            Response::Survival { time, .. } => time.clone(),
        }
    }
}

/// How raw predictor columns are mapped before modelling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScalingMethod {
    /// `(x - min) / (max - min)`; zero-range columns map to 0.5.
    #[default]
    UnitCube,
    /// `(x - mean) / sd`; zero-variance columns map to 0.
    Standardize,
}

impl std::str::FromStr for ScalingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-cube" | "unit_cube" | "minmax" => Ok(ScalingMethod::UnitCube),
            "standardize" | "zscore" => Ok(ScalingMethod::Standardize),
            other => Err(Error::Config(format!("unknown scaling `{other}`"))),
        }
    }
}

/// Per-column normalization constants. For [`ScalingMethod::UnitCube`]
/// `offsets` are the column minima and `spreads` the ranges; for
/// standardization they are the means and standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub method: ScalingMethod,
    pub offsets: Vec<f64>,
    pub spreads: Vec<f64>,
}

impl Scaling {
    fn degenerate_value(&self) -> f64 {
        match self.method {
            ScalingMethod::UnitCube => 0.5,
            ScalingMethod::Standardize => 0.0,
        }
    }

    /// Apply these constants to another raw matrix (e.g. a test set).
    pub fn apply(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.offsets.len() {
            return Err(Error::Dimension(format!(
                "scaling has {} columns, matrix has {}",
                self.offsets.len(),
                raw.ncols()
            )));
        }
        let fill = self.degenerate_value();
        Ok(DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, k| {
            if self.spreads[k] > 0.0 {
                (raw[(i, k)] - self.offsets[k]) / self.spreads[k]
            } else {
                fill
            }
        }))
    }

    /// Map normalized values back to the raw scale. Zero-spread columns
    /// return their constant.
    pub fn invert(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| {
            if self.spreads[k] > 0.0 {
                x[(i, k)] * self.spreads[k] + self.offsets[k]
            } else {
                self.offsets[k]
            }
        })
    }
}

/// Min–max normalize each column to [0, 1]. Returns the normalized matrix,
/// the column minima and the column ranges.
pub fn normalize(x_raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let scaling = fit_scaling(x_raw, ScalingMethod::UnitCube)?;
    let x = scaling.apply(x_raw)?;
    Ok((x, scaling.offsets, scaling.spreads))
}

pub fn fit_scaling(x_raw: &DMatrix<f64>, method: ScalingMethod) -> Result<Scaling> {
    if x_raw.nrows() == 0 || x_raw.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let p = x_raw.ncols();
    let mut offsets = Vec::with_capacity(p);
    let mut spreads = Vec::with_capacity(p);
    for col in x_raw.column_iter() {
        match method {
            ScalingMethod::UnitCube => {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                offsets.push(min);
                spreads.push(max - min);
            }
            ScalingMethod::Standardize => {
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                offsets.push(mean);
                spreads.push(var.sqrt());
            }
        }
    }
    Ok(Scaling {
        method,
        offsets,
        spreads,
    })
}

/// Normalized design matrix plus one response.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelData {
    pub x: DMatrix<f64>,
    pub response: Response,
    pub names: Vec<String>,
    pub scaling: Scaling,
}

impl ModelData {
    /// Normalize `x_raw` with constants fitted on it.
    pub fn from_raw(
        x_raw: &DMatrix<f64>,
        response: Response,
        names: Vec<String>,
        method: ScalingMethod,
    ) -> Result<Self> {
        let scaling = fit_scaling(x_raw, method)?;
        Self::with_scaling(x_raw, response, names, scaling)
    }

    /// Normalize `x_raw` with externally supplied constants (test sets use
    /// the training constants, so their entries may leave [0, 1]).
    pub fn with_scaling(
        x_raw: &DMatrix<f64>,
        response: Response,
        names: Vec<String>,
        scaling: Scaling,
    ) -> Result<Self> {
        if x_raw.nrows() == 0 || x_raw.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if response.len() != x_raw.nrows() {
            return Err(Error::Dimension(format!(
                "{} rows but {} responses",
                x_raw.nrows(),
                response.len()
            )));
        }
        if names.len() != x_raw.ncols() {
            return Err(Error::Dimension(format!(
                "{} columns but {} names",
                x_raw.ncols(),
                names.len()
            )));
        }
        let x = scaling.apply(x_raw)?;
        Ok(ModelData {
            x,
            response,
            names,
            scaling,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Predictors on their original scale.
    pub fn raw_x(&self) -> DMatrix<f64> {
        self.scaling.invert(&self.x)
    }

    /// Split rows into a training set (re-normalized on its own rows) and a
    /// test set normalized with the training constants.
    pub fn split(&self, train: &[usize], test: &[usize]) -> Result<(ModelData, ModelData)> {
        let raw = self.raw_x();
        let pick = |idx: &[usize]| raw.select_rows(idx);
        let train_raw = pick(train);
        let tr = ModelData::from_raw(
            &train_raw,
            self.response.select(train),
            self.names.clone(),
            self.scaling.method,
        )?;
        if tr.n() < 2 {
            return Err(Error::TooFewRows(tr.n()));
        }
        let te = ModelData::with_scaling(
            &pick(test),
            self.response.select(test),
            self.names.clone(),
            tr.scaling.clone(),
        )?;
        Ok((tr, te))
    }
}

/// Which column(s) hold the response, and how to read them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseSpec {
    pub kind: ResponseKind,
    /// Response column; for survival data, the time column.
    pub column: String,
    /// Event indicator column (survival only; 1 = observed, 0 = censored).
    pub event_column: Option<String>,
}

impl ResponseSpec {
    pub fn new(kind: ResponseKind, column: impl Into<String>) -> Self {
        ResponseSpec {
            kind,
            column: column.into(),
            event_column: None,
        }
    }

    pub fn survival(time: impl Into<String>, event: impl Into<String>) -> Self {
        ResponseSpec {
            kind: ResponseKind::Survival,
            column: time.into(),
            event_column: Some(event.into()),
        }
    }
}

/// A raw table: header plus rows of unparsed fields.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_owned).collect());
    }
    Ok(Table { headers, rows })
}

fn column_index(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
}

fn field<'a>(table: &'a Table, row: usize, col: usize) -> Result<&'a str> {
    // Data lines are 1-based after the header line.
    let line = row + 2;
    let value = table.rows[row].get(col).map(String::as_str).unwrap_or("");
    if value.is_empty() || value.eq_ignore_ascii_case("na") || value.eq_ignore_ascii_case("nan") {
        return Err(Error::MissingValue {
            line,
            column: table.headers[col].clone(),
        });
    }
    Ok(value)
}

fn parse_real(table: &Table, row: usize, col: usize) -> Result<f64> {
    let value = field(table, row, col)?;
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line: row + 2,
            column: table.headers[col].clone(),
            value: value.to_owned(),
        })
}

fn parse_flag(table: &Table, row: usize, col: usize) -> Result<Option<bool>> {
    let value = field(table, row, col)?;
    Ok(match value.parse::<f64>() {
        Ok(v) if v == 0.0 => Some(false),
        Ok(v) if v == 1.0 => Some(true),
        _ => None,
    })
}

/// Read a CSV with a header row. Every column other than the response
/// column(s) is a predictor. Predictors are min–max normalized.
pub fn load_csv(path: impl AsRef<Path>, spec: &ResponseSpec) -> Result<ModelData> {
    load_csv_with(path, spec, ScalingMethod::UnitCube)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    spec: &ResponseSpec,
    method: ScalingMethod,
) -> Result<ModelData> {
    let (x_raw, response, names) = read_raw(path.as_ref(), spec)?;
    ModelData::from_raw(&x_raw, response, names, method)
}

/// Read a CSV and normalize it with given constants (for test sets).
pub fn load_csv_scaled(
    path: impl AsRef<Path>,
    spec: &ResponseSpec,
    scaling: &Scaling,
) -> Result<ModelData> {
    let (x_raw, response, names) = read_raw(path.as_ref(), spec)?;
    ModelData::with_scaling(&x_raw, response, names, scaling.clone())
}

fn read_raw(path: &Path, spec: &ResponseSpec) -> Result<(DMatrix<f64>, Response, Vec<String>)> {
    let table = read_table(path)?;
    let n = table.rows.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let resp_col = column_index(&table.headers, &spec.column)?;
    let event_col = match (spec.kind, &spec.event_column) {
        (ResponseKind::Survival, Some(name)) => Some(column_index(&table.headers, name)?),
        (ResponseKind::Survival, None) => {
            return Err(Error::Config("survival response needs an event column".into()))
        }
        _ => None,
    };
    let predictors: Vec<usize> = (0..table.headers.len())
        .filter(|&c| c != resp_col && Some(c) != event_col)
        .collect();
    if predictors.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut x = DMatrix::zeros(n, predictors.len());
    for row in 0..n {
        for (j, &c) in predictors.iter().enumerate() {
            x[(row, j)] = parse_real(&table, row, c)?;
        }
    }
    let bad = |row: usize, col: usize| Error::Parse {
        line: row + 2,
        column: table.headers[col].clone(),
        value: table.rows[row].get(col).cloned().unwrap_or_default(),
    };
    let response = match spec.kind {
        ResponseKind::Continuous => Response::Continuous(
            (0..n).map(|r| parse_real(&table, r, resp_col)).collect::<Result<_>>()?,
        ),
        ResponseKind::Binary => Response::Binary(
            (0..n)
                .map(|r| parse_flag(&table, r, resp_col)?.ok_or_else(|| bad(r, resp_col)))
                .collect::<Result<_>>()?,
        ),
        ResponseKind::Count => Response::Count(
            (0..n)
                .map(|r| {
                    let v = parse_real(&table, r, resp_col)?;
                    if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
                        Ok(v as u64)
                    } else {
                        Err(bad(r, resp_col))
                    }
                })
                .collect::<Result<_>>()?,
        ),
        ResponseKind::Survival => {
            let ec = event_col.expect("checked above");
            let mut time = Vec::with_capacity(n);
            let mut event = Vec::with_capacity(n);
            for r in 0..n {
                let t = parse_real(&table, r, resp_col)?;
                if t <= 0.0 {
                    return Err(bad(r, resp_col));
                }
                time.push(t);
                let flag = parse_flag(&table, r, ec)?.ok_or_else(|| Error::CensoringFlag {
                    line: r + 2,
                    value: table.rows[r][ec].clone(),
                })?;
                event.push(flag);
            }
            Response::Survival { time, event }
        }
    };
    let names = predictors.iter().map(|&c| table.headers[c].clone()).collect();
    Ok((x, response, names))
}

/// Default response column names used by [`write_csv`].
pub fn default_response_spec(kind: ResponseKind) -> ResponseSpec {
    match kind {
        ResponseKind::Survival => ResponseSpec::survival("time", "event"),
        other => ResponseSpec::new(other, "y"),
    }
}

/// Write predictors followed by the response column(s) named as in
/// [`default_response_spec`]. `raw` selects the original scale instead of
/// the normalized one.
pub fn write_csv(path: impl AsRef<Path>, data: &ModelData, raw: bool) -> Result<()> {
    let path = path.as_ref();
    let x = if raw { data.raw_x() } else { data.x.clone() };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = data.names.clone();
    match data.response.kind() {
        ResponseKind::Survival => {
            header.push("time".into());
            header.push("event".into());
        }
        _ => header.push("y".into()),
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = (0..data.p()).map(|k| x[(i, k)].to_string()).collect();
        match &data.response {
            Response::Continuous(y) => rec.push(y[i].to_string()),
            Response::Binary(t) => rec.push(u8::from(t[i]).to_string()),
            Response::Count(s) => rec.push(s[i].to_string()),
            Response::Survival { time, event } => {
                rec.push(time[i].to_string());
                rec.push(u8::from(event[i]).to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
