//! Datasets, CSV ingestion and seeded synthetic generators.
//!
//! Generators draw from ChaCha8 with one stream per purpose (labels, symbols,
//! coordinate choices, label flips, noise), so a stream's draws for the first
//! `n` observations do not depend on how many observations follow.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::loss::{Label, LabelKind};

/// Dense feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<Label>, names: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if p == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one feature".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidConfig(format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(names) = &names {
            if names.len() != p {
                return Err(Error::InvalidConfig(format!("{} feature names for {p} columns", names.len())));
            }
        }
        if let Some(((r, c), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parse {
                line: r as u64 + 1,
                column: c + 1,
                reason: format!("non-finite feature value {v}"),
            });
        }
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().to_owned()
        };
        Ok(Dataset {
            features,
            labels,
            names,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows in the given order (duplicates allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select(Axis(0), rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
            self.names.clone(),
        )
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.names.clone())
    }
}

/// Which CSV columns hold the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumns {
    /// Last column, or last two columns for interval labels.
    #[default]
    Auto,
    Single(usize),
    Interval { lower: usize, upper: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub header: bool,
    pub label_kind: LabelKind,
    pub label_columns: LabelColumns,
}

impl CsvOptions {
    pub fn new(label_kind: LabelKind) -> Self {
        CsvOptions {
            header: true,
            label_kind,
            label_columns: LabelColumns::Auto,
        }
    }
}

fn parse_cell(s: &str, line: u64, column: usize) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>().map_err(|_| Error::Parse {
        line,
        column,
        reason: if t.is_empty() {
            "missing value".to_string()
        } else {
            format!("cannot parse '{t}' as a number")
        },
    })
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

pub fn read_csv(reader: impl Read, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(false)
        .from_reader(reader);
    let header: Option<Vec<String>> = if opts.header {
        Some(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut label_cols: Option<Vec<usize>> = None;
    let mut ncols = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if label_cols.is_none() {
            ncols = record.len();
            label_cols = Some(resolve_label_columns(opts, ncols)?);
        }
        let lc = label_cols.as_ref().expect("resolved above");
        let mut feats = Vec::with_capacity(ncols - lc.len());
        for (c, cell) in record.iter().enumerate() {
            if lc.contains(&c) {
                continue;
            }
            let v = parse_cell(cell, line, c + 1)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    reason: format!("non-finite feature value '{}'", cell.trim()),
                });
            }
            feats.push(v);
        }
        let cell = |i: usize| parse_cell(&record[lc[i]], line, lc[i] + 1);
        let label = match opts.label_kind {
            LabelKind::Value => Label::Value(cell(0)?),
            LabelKind::Class => {
                let v = cell(0)?;
                if !(v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64) {
                    return Err(Error::Parse {
                        line,
                        column: lc[0] + 1,
                        reason: format!("class label must be a nonnegative integer, got {v}"),
                    });
                }
                Label::Class(v as usize)
            }
            LabelKind::Interval => Label::Interval {
                lower: cell(0)?,
                upper: cell(1)?,
            },
        };
        rows.push(feats);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lc = label_cols.expect("at least one row");
    let p = ncols - lc.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((labels.len(), p), flat)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| !lc.contains(i))
            .map(|(_, s)| s)
            .collect()
    });
    Dataset::new(features, labels, names)
}

/// Reads a feature matrix for prediction. A file with exactly `n_features`
/// columns is taken as features only; otherwise the label columns selected by
/// `opts` are dropped first.
pub fn read_feature_matrix(reader: impl Read, opts: &CsvOptions, n_features: usize) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(false)
        .from_reader(reader);
    let mut flat = Vec::new();
    let mut skip: Option<Vec<usize>> = None;
    let mut n = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if skip.is_none() {
            let ncols = record.len();
            let s = if ncols == n_features {
                Vec::new()
            } else {
                resolve_label_columns(opts, ncols)?
            };
            if ncols - s.len() != n_features {
                return Err(Error::FeatureMismatch {
                    expected: n_features,
                    found: ncols - s.len(),
                });
            }
            skip = Some(s);
        }
        let s = skip.as_ref().expect("resolved above");
        for (c, cell) in record.iter().enumerate() {
            if s.contains(&c) {
                continue;
            }
            let v = parse_cell(cell, line, c + 1)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    reason: format!("non-finite feature value '{}'", cell.trim()),
                });
            }
            flat.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Array2::from_shape_vec((n, n_features), flat).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn resolve_label_columns(opts: &CsvOptions, ncols: usize) -> Result<Vec<usize>> {
    let needed = if opts.label_kind == LabelKind::Interval { 2 } else { 1 };
    if ncols < needed + 1 {
        return Err(Error::InvalidConfig(format!(
            "need at least {} columns, found {ncols}",
            needed + 1
        )));
    }
    let cols = match (opts.label_columns, opts.label_kind) {
        (LabelColumns::Auto, LabelKind::Interval) => vec![ncols - 2, ncols - 1],
        (LabelColumns::Auto, _) => vec![ncols - 1],
        (LabelColumns::Single(c), LabelKind::Value | LabelKind::Class) => vec![c],
        (LabelColumns::Interval { lower, upper }, LabelKind::Interval) => vec![lower, upper],
        _ => {
            return Err(Error::InvalidConfig(
                "label column selection does not match the label kind".into(),
            ))
        }
    };
    if let Some(&c) = cols.iter().find(|&&c| c >= ncols) {
        return Err(Error::InvalidConfig(format!("label column {c} out of range for {ncols} columns")));
    }
    if cols.len() == 2 && cols[0] == cols[1] {
        return Err(Error::InvalidConfig("lower and upper label columns coincide".into()));
    }
    Ok(cols)
}

fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "+Inf".to_string()
    } else {
        // Display for f64 is the shortest representation that round-trips.
        format!("{v}")
    }
}

/// Writes features followed by the label column(s), with a header row.
/// Unbounded interval upper limits are written as `+Inf`.
pub fn write_csv(writer: impl Write, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let p = data.n_features();
    let mut header: Vec<String> = match data.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..p).map(|j| format!("x{j}")).collect(),
    };
    match data.labels()[0].kind() {
        LabelKind::Interval => {
            header.push("lower".into());
            header.push("upper".into());
        }
        _ => header.push("label".into()),
    }
    w.write_record(&header)?;
    for (row, label) in data.features.outer_iter().zip(data.labels()) {
        let mut rec: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        match *label {
            Label::Value(y) => rec.push(format_number(y)),
            Label::Class(c) => rec.push(c.to_string()),
            Label::Interval { lower, upper } => {
                rec.push(format_number(lower));
                rec.push(format_number(upper));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), data)
}

/// Seeded permutation split; the first `round(fraction * n)` permuted rows
/// form the training part.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = data.n_rows();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "fraction {fraction} of {n} rows leaves one side empty"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select(&perm[..n_train])?, data.select(&perm[n_train..])?))
}

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

mod streams {
    pub const LABEL: u64 = 1;
    pub const SYMBOL: u64 = 2;
    pub const COORDS: u64 = 3;
    pub const FLIP: u64 = 4;
    pub const FEATURES: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const OUTLIERS: u64 = 7;
    pub const COEFS: u64 = 8;
    pub const CENSOR: u64 = 9;
}

/// Symbol drawn for a Long-Servedio observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsSymbol {
    A,
    B,
    C,
}

/// Long-Servedio binary classification data with 21 features in {-1, +1}.
#[derive(Debug, Clone)]
pub struct LongServedio {
    pub train: Dataset,
    pub test: Dataset,
    pub train_symbols: Vec<LsSymbol>,
    /// Training rows whose label was flipped.
    pub flipped: Vec<usize>,
}

pub const LS_FEATURES: usize = 21;

/// Generates Long-Servedio data. Training labels are flipped independently
/// with probability `contamination`; test labels stay clean.
pub fn gen_long_servedio(n_train: usize, n_test: usize, contamination: f64, seed: u64) -> Result<LongServedio> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidConfig("sample sizes must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&contamination) {
        return Err(Error::InvalidConfig(format!(
            "contamination must lie in [0, 1), got {contamination}"
        )));
    }
    let mut label_rng = stream(seed, streams::LABEL);
    let mut symbol_rng = stream(seed, streams::SYMBOL);
    let mut coord_rng = stream(seed, streams::COORDS);
    let mut flip_rng = stream(seed, streams::FLIP);

    let mut draw = |n: usize| {
        let mut x = Array2::zeros((n, LS_FEATURES));
        let mut y = Vec::with_capacity(n);
        let mut symbols = Vec::with_capacity(n);
        for i in 0..n {
            let yi: f64 = if label_rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let u: f64 = symbol_rng.random();
            let symbol = if u < 0.25 {
                LsSymbol::A
            } else if u < 0.5 {
                LsSymbol::B
            } else {
                LsSymbol::C
            };
            let mut row = [-yi; LS_FEATURES];
            match symbol {
                LsSymbol::A => row = [yi; LS_FEATURES],
                LsSymbol::B => row[..11].fill(yi),
                LsSymbol::C => {
                    for j in index::sample(&mut coord_rng, 11, 5) {
                        row[j] = yi;
                    }
                    for j in index::sample(&mut coord_rng, 10, 6) {
                        row[11 + j] = yi;
                    }
                }
            }
            for (j, v) in row.iter().enumerate() {
                x[[i, j]] = *v;
            }
            y.push(yi);
            symbols.push(symbol);
        }
        (x, y, symbols)
    };

    let (xtr, mut ytr, train_symbols) = draw(n_train);
    let (xte, yte, _) = draw(n_test);
    let mut flipped = Vec::new();
    for (i, y) in ytr.iter_mut().enumerate() {
        if flip_rng.random_bool(contamination) {
            *y = -*y;
            flipped.push(i);
        }
    }
    let to_labels = |y: Vec<f64>| y.into_iter().map(Label::Value).collect();
    Ok(LongServedio {
        train: Dataset::new(xtr, to_labels(ytr), None)?,
        test: Dataset::new(xte, to_labels(yte), None)?,
        train_symbols,
        flipped,
    })
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    Array2::from_shape_simple_fn((n, p), || normal.sample(rng))
}

fn coefficients(seed: u64, p: usize) -> Vec<f64> {
    let mut rng = stream(seed, streams::COEFS);
    (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Linear-response data with a known set of shifted responses.
#[derive(Debug, Clone)]
pub struct ContaminatedRegression {
    pub data: Dataset,
    /// Indices of shifted responses, ascending.
    pub outliers: Vec<usize>,
    pub beta: Vec<f64>,
}

/// `y = x beta + noise` with `x ~ N(0, I)`, `beta ~ U(-2, 2)`, then
/// `n_outliers` randomly chosen responses shifted by `outlier_shift`.
pub fn gen_contaminated_regression(
    n: usize,
    p: usize,
    n_outliers: usize,
    outlier_shift: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<ContaminatedRegression> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidConfig("n and p must be >= 1".into()));
    }
    if n_outliers >= n {
        return Err(Error::InvalidConfig(format!("n_outliers ({n_outliers}) must be < n ({n})")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) || !outlier_shift.is_finite() {
        return Err(Error::InvalidConfig("noise_sd must be >= 0 and the shift finite".into()));
    }
    let x = standard_normal_matrix(&mut stream(seed, streams::FEATURES), n, p);
    let beta = coefficients(seed, p);
    let mut noise_rng = stream(seed, streams::NOISE);
    let noise = Normal::new(0.0, noise_sd).expect("valid normal");
    let mut y: Vec<f64> = x
        .outer_iter()
        .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut noise_rng))
        .collect();
    let mut outliers = index::sample(&mut stream(seed, streams::OUTLIERS), n, n_outliers).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        y[i] += outlier_shift;
    }
    Ok(ContaminatedRegression {
        data: Dataset::new(x, y.into_iter().map(Label::Value).collect(), None)?,
        outliers,
        beta,
    })
}

/// Isotropic Gaussian clusters, one per class, with centres drawn from
/// `N(0, separation^2 I)`.
pub fn gen_blobs(n: usize, p: usize, n_class: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || p == 0 || n_class < 2 {
        return Err(Error::InvalidConfig("need n >= 1, p >= 1 and at least two classes".into()));
    }
    let mut coef_rng = stream(seed, streams::COEFS);
    let centre = Normal::new(0.0, separation).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..n_class)
        .map(|_| (0..p).map(|_| centre.sample(&mut coef_rng)).collect())
        .collect();
    let mut x = standard_normal_matrix(&mut stream(seed, streams::FEATURES), n, p);
    let labels: Vec<Label> = (0..n).map(|i| Label::Class(i % n_class)).collect();
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        for (v, c) in row.iter_mut().zip(&centres[i % n_class]) {
            *v += c;
        }
    }
    Dataset::new(x, labels, None)
}

/// Response family for [`gen_glm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Bernoulli,
    Poisson,
}

/// Draws responses from a GLM with linear predictor `x beta / sqrt(p)`:
/// Gaussian (unit noise), Bernoulli labels in {-1, +1} via the logistic
/// link, or Poisson counts via the log link.
pub fn gen_glm(family: Family, n: usize, p: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidConfig("n and p must be >= 1".into()));
    }
    let x = standard_normal_matrix(&mut stream(seed, streams::FEATURES), n, p);
    let beta = coefficients(seed, p);
    let scale = (p as f64).sqrt();
    let mut rng = stream(seed, streams::NOISE);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let labels = x
        .outer_iter()
        .map(|row| {
            let eta = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() / scale;
            match family {
                Family::Gaussian => Label::Value(eta + normal.sample(&mut rng)),
                Family::Bernoulli => {
                    let p1 = 1.0 / (1.0 + (-2.0 * eta).exp());
                    Label::Value(if rng.random_bool(p1) { 1.0 } else { -1.0 })
                }
                Family::Poisson => {
                    let mu = eta.exp();
                    let draw: f64 = Poisson::new(mu).expect("positive mean").sample(&mut rng);
                    Label::Value(draw)
                }
            }
        })
        .collect();
    Dataset::new(x, labels, None)
}

/// Parameters for [`gen_survival`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalParams {
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub censored_fraction: f64,
    pub noise_sd: f64,
    pub n_outliers: usize,
    pub outlier_factor: f64,
}

impl Default for SurvivalParams {
    fn default() -> Self {
        SurvivalParams {
            n_train: 150,
            n_test: 150,
            p: 5,
            censored_fraction: 0.3,
            noise_sd: 0.5,
            n_outliers: 10,
            outlier_factor: 100.0,
        }
    }
}

/// Right-censored log-normal survival data.
#[derive(Debug, Clone)]
pub struct SurvivalSample {
    pub train: Dataset,
    pub test: Dataset,
    /// Training rows whose recorded times were multiplied by the outlier
    /// factor, ascending.
    pub outliers: Vec<usize>,
}

/// `ln T = x beta / sqrt(p) + noise_sd * N(0, 1)`. In each part a random
/// `round(censored_fraction * n)` rows are right-censored at `T * U`,
/// `U ~ U(0.2, 1)`. Then `n_outliers` random training rows have their
/// recorded times multiplied by `outlier_factor`; test rows stay clean.
pub fn gen_survival(params: &SurvivalParams, seed: u64) -> Result<SurvivalSample> {
    let &SurvivalParams {
        n_train,
        n_test,
        p,
        censored_fraction,
        noise_sd,
        n_outliers,
        outlier_factor,
    } = params;
    if n_train == 0 || n_test == 0 || p == 0 {
        return Err(Error::InvalidConfig("sample sizes and p must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&censored_fraction) {
        return Err(Error::InvalidConfig("censored fraction must lie in [0, 1)".into()));
    }
    if n_outliers > n_train || !(outlier_factor > 0.0 && outlier_factor.is_finite()) {
        return Err(Error::InvalidConfig(
            "need n_outliers <= n_train and a positive finite factor".into(),
        ));
    }
    let n = n_train + n_test;
    let x = standard_normal_matrix(&mut stream(seed, streams::FEATURES), n, p);
    let beta = coefficients(seed, p);
    let scale = (p as f64).sqrt();
    let normal = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut noise_rng = stream(seed, streams::NOISE);
    let mut lower: Vec<f64> = x
        .outer_iter()
        .map(|row| {
            let mean = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() / scale;
            (mean + normal.sample(&mut noise_rng)).exp()
        })
        .collect();
    let mut upper = lower.clone();

    let mut censor_rng = stream(seed, streams::CENSOR);
    for (offset, size) in [(0, n_train), (n_train, n_test)] {
        let count = (censored_fraction * size as f64).round() as usize;
        for i in index::sample(&mut censor_rng, size, count) {
            lower[offset + i] *= censor_rng.random_range(0.2..1.0);
            upper[offset + i] = f64::INFINITY;
        }
    }
    let mut outliers = index::sample(&mut stream(seed, streams::OUTLIERS), n_train, n_outliers).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        lower[i] *= outlier_factor;
        if upper[i].is_finite() {
            upper[i] *= outlier_factor;
        }
    }
    let labels: Vec<Label> = lower
        .into_iter()
        .zip(upper)
        .map(|(lower, upper)| Label::Interval { lower, upper })
        .collect();
    let all = Dataset::new(x, labels, None)?;
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n).collect();
    Ok(SurvivalSample {
        train: all.select(&train)?,
        test: all.select(&test)?,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header() {
        let text = "a,y\n1.5,2\n2.5,3\n-1,4\n";
        let d = read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Value)).unwrap();
        assert_eq!((d.n_rows(), d.n_features()), (3, 1));
        assert_eq!(d.feature_names().unwrap(), &["a".to_string()]);
        assert_eq!(d.labels()[2], Label::Value(4.0));
    }

    #[test]
    fn csv_interval_inf_round_trip() {
        let text = "x,lo,hi\n1,2,+Inf\n3,4,4\n";
        let d = read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Interval)).unwrap();
        assert_eq!(
            d.labels()[0],
            Label::Interval {
                lower: 2.0,
                upper: f64::INFINITY
            }
        );
        let mut buf = Vec::new();
        write_csv(&mut buf, &d).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("+Inf"));
        let back = read_csv(buf.as_slice(), &CsvOptions::new(LabelKind::Interval)).unwrap();
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.features(), d.features());
    }

    #[test]
    fn csv_missing_cell_names_position() {
        let text = "a,b,y\n1,2,3\n4,,6\n";
        let err = read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Value)).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other}"),
        }
        let ragged = "a,b,y\n1,2,3\n4,5\n";
        assert!(read_csv(ragged.as_bytes(), &CsvOptions::new(LabelKind::Value)).is_err());
    }

    #[test]
    fn csv_rejects_non_finite_features_and_bad_classes() {
        let text = "a,y\ninf,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Value)),
            Err(Error::Parse { column: 1, .. })
        ));
        let text = "a,y\n1,0.5\n";
        assert!(read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Class)).is_err());
        let text = "a,y\n1,2\n";
        let d = read_csv(text.as_bytes(), &CsvOptions::new(LabelKind::Class)).unwrap();
        assert_eq!(d.labels()[0], Label::Class(2));
    }

    #[test]
    fn csv_explicit_label_column_without_header() {
        let text = "7,1,2\n8,3,4\n";
        let opts = CsvOptions {
            header: false,
            label_kind: LabelKind::Value,
            label_columns: LabelColumns::Single(0),
        };
        let d = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(d.labels(), &[Label::Value(7.0), Label::Value(8.0)]);
        assert_eq!(d.features().row(1).to_vec(), vec![3.0, 4.0]);
        assert!(d.feature_names().is_none());
    }

    #[test]
    fn feature_matrix_with_and_without_labels() {
        let opts = CsvOptions::new(LabelKind::Value);
        let m = read_feature_matrix("a,b\n1,2\n3,4\n".as_bytes(), &opts, 2).unwrap();
        assert_eq!(m.row(1).to_vec(), vec![3.0, 4.0]);
        let m = read_feature_matrix("a,b,y\n1,2,9\n".as_bytes(), &opts, 2).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 2.0]);
        assert!(matches!(
            read_feature_matrix("a,b,c,y\n1,2,3,9\n".as_bytes(), &opts, 2),
            Err(Error::FeatureMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn long_servedio_shapes_and_symbols() {
        let ls = gen_long_servedio(400, 200, 0.0, 3).unwrap();
        assert_eq!((ls.train.n_rows(), ls.train.n_features()), (400, 21));
        assert_eq!(ls.test.n_rows(), 200);
        assert!(ls.flipped.is_empty());
        for (i, sym) in ls.train_symbols.iter().enumerate() {
            let y = ls.train.labels()[i].value().unwrap();
            let row = ls.train.features().row(i).to_vec();
            assert!(row.iter().all(|v| v.abs() == 1.0));
            let agree = |r: std::ops::Range<usize>| r.filter(|&j| row[j] == y).count();
            match sym {
                LsSymbol::A => assert_eq!(agree(0..21), 21),
                LsSymbol::B => assert_eq!((agree(0..11), agree(11..21)), (11, 0)),
                LsSymbol::C => assert_eq!((agree(0..11), agree(11..21)), (5, 6)),
            }
        }
    }

    #[test]
    fn long_servedio_rejects_full_contamination() {
        assert!(gen_long_servedio(10, 10, 1.0, 0).is_err());
    }

    #[test]
    fn long_servedio_frequencies() {
        let n = 10_000;
        let ls = gen_long_servedio(n, 1, 0.5, 11).unwrap();
        let count = |s| ls.train_symbols.iter().filter(|&&x| x == s).count() as f64;
        for (s, p) in [(LsSymbol::A, 0.25), (LsSymbol::B, 0.25), (LsSymbol::C, 0.5)] {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((count(s) / n as f64 - p).abs() < 3.0 * se, "{s:?}");
        }
        let se = (0.25 / n as f64).sqrt();
        assert!((ls.flipped.len() as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn generators_are_reproducible() {
        let a = gen_long_servedio(50, 20, 0.1, 9).unwrap();
        let b = gen_long_servedio(50, 20, 0.1, 9).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let a = gen_contaminated_regression(30, 3, 2, 10.0, 1.0, 4).unwrap();
        let b = gen_contaminated_regression(30, 3, 2, 10.0, 1.0, 4).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.outliers, b.outliers);
        assert_eq!(gen_blobs(30, 4, 3, 3.0, 1).unwrap(), gen_blobs(30, 4, 3, 3.0, 1).unwrap());
        let a = gen_survival(&SurvivalParams::default(), 2).unwrap();
        let b = gen_survival(&SurvivalParams::default(), 2).unwrap();
        assert_eq!((a.train, a.test), (b.train, b.test));
    }

    #[test]
    fn extending_a_sample_keeps_earlier_rows() {
        let small = gen_contaminated_regression(20, 3, 0, 0.0, 1.0, 5).unwrap();
        let big = gen_contaminated_regression(40, 3, 0, 0.0, 1.0, 5).unwrap();
        assert_eq!(small.data.features(), big.data.features().slice(ndarray::s![..20, ..]));
        assert_eq!(small.data.labels(), &big.data.labels()[..20]);
    }

    #[test]
    fn injected_outliers_have_largest_true_residuals() {
        let g = gen_contaminated_regression(200, 5, 5, 50.0, 1.0, 17).unwrap();
        let resid: Vec<f64> = g
            .data
            .features()
            .outer_iter()
            .zip(g.data.labels())
            .map(|(row, l)| {
                let fit: f64 = row.iter().zip(&g.beta).map(|(a, b)| a * b).sum();
                (l.value().unwrap() - fit).abs()
            })
            .collect();
        let mut order: Vec<usize> = (0..200).collect();
        order.sort_by(|&a, &b| resid[b].total_cmp(&resid[a]));
        let mut top: Vec<usize> = order[..5].to_vec();
        top.sort_unstable();
        assert_eq!(top, g.outliers);
        let clean = gen_contaminated_regression(50, 2, 0, 50.0, 1.0, 1).unwrap();
        assert!(clean.outliers.is_empty());
    }

    #[test]
    fn survival_censoring_fraction() {
        let s = gen_survival(&SurvivalParams::default(), 3).unwrap();
        let censored = |d: &Dataset| {
            d.labels()
                .iter()
                .filter(|l| matches!(l, Label::Interval { upper, .. } if upper.is_infinite()))
                .count()
        };
        assert_eq!((censored(&s.train), censored(&s.test)), (45, 45));
        assert_eq!(s.outliers.len(), 10);
        assert!(gen_survival(&SurvivalParams { n_outliers: 151, ..SurvivalParams::default() }, 3).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let d = Dataset::new(x, (0..10).map(|i| Label::Value(i as f64)).collect(), None).unwrap();
        let (a, b) = train_test_split(&d, 0.5, 3).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (5, 5));
        let (a2, _) = train_test_split(&d, 0.5, 3).unwrap();
        assert_eq!(a, a2);
        let mut all: Vec<f64> = a.features().iter().chain(b.features().iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(train_test_split(&d, 0.01, 3).is_err());
        assert!(train_test_split(&d, 1.0, 3).is_err());
    }

    #[test]
    fn dataset_validation() {
        let x = Array2::<f64>::zeros((0, 2));
        assert!(matches!(Dataset::new(x, vec![], None), Err(Error::EmptyDataset)));
        let x = Array2::from_elem((2, 1), f64::NAN);
        assert!(Dataset::new(x, vec![Label::Value(0.0); 2], None).is_err());
        let x = Array2::zeros((2, 1));
        assert!(Dataset::new(x, vec![Label::Value(0.0)], None).is_err());
    }
}
