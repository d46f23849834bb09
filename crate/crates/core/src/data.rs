//! Dataset handling: synthetic generation, CSV ingestion, standardization,
//! splitting, minibatching, and measurement-set sampling.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gp::MeasurementSet;
use crate::linalg::DenseMatrix;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationRecord {
    /// Indices of input columns kept (zero-variance inputs are dropped).
    pub kept_inputs: Vec<usize>,
    pub input_means: Vec<f64>,
    pub input_stds: Vec<f64>,
    pub target_means: Vec<f64>,
    pub target_stds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub record: Option<StandardizationRecord>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(x: DenseMatrix, y: DenseMatrix, provenance: impl Into<String>) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs with {} targets",
                x.rows(),
                y.rows()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFiniteLoss("dataset contains non-finite entries".into()));
        }
        Ok(Dataset {
            x,
            y,
            record: None,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Single-output targets as a flat vector.
    pub fn targets_vec(&self) -> Vec<f64> {
        self.y.data().to_vec()
    }
}

/// Noise-free mean of the synthetic 1-D oscillation task.
pub fn oscillation_mean(x: f64) -> f64 {
    use std::f64::consts::PI;
    (3.0 * PI * x).sin() + 0.3 * (9.0 * PI * x).cos() + 0.5 * (7.0 * PI * x).sin()
}

/// Noise level of the synthetic generator.
pub const SYNTHETIC_NOISE_STD: f64 = 0.5;

/// 1-D oscillation dataset: half the inputs from Uniform(-0.75, -0.25), half
/// from Uniform(0.25, 0.75), targets from the oscillation curve plus
/// N(0, 0.5^2) noise.
pub fn synthetic_1d(n: usize, seed: u64) -> Result<Dataset> {
    synthetic_1d_with_noise(n, seed, SYNTHETIC_NOISE_STD)
}

/// Same generator with the noise scale exposed (0 disables noise in tests).
pub fn synthetic_1d_with_noise(n: usize, seed: u64, noise_std: f64) -> Result<Dataset> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Config("synthetic_1d needs an even n >= 2".into()));
    }
    let mut rng = RngState::new(seed);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        xs.push(rng.uniform(-0.75, -0.25));
    }
    for _ in 0..n / 2 {
        xs.push(rng.uniform(0.25, 0.75));
    }
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| oscillation_mean(x) + noise_std * rng.standard_normal())
        .collect();
    Dataset::new(
        DenseMatrix::column(&xs),
        DenseMatrix::column(&ys),
        format!("synthetic1d(n={n}, seed={seed})"),
    )
}

/// Column schema entry read from the one-line-per-column sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaColumn {
    pub name: String,
    pub is_target: bool,
}

/// Parse a schema sidecar: one line per column, `name,feature|target`.
pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<SchemaColumn>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cols = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, kind) = line.split_once(',').ok_or_else(|| Error::Parse {
            row: i,
            col: 0,
            msg: "schema line must be name,feature|target".into(),
        })?;
        let is_target = match kind.trim() {
            "feature" => false,
            "target" => true,
            other => {
                return Err(Error::Parse {
                    row: i,
                    col: 1,
                    msg: format!("unknown column kind {other:?}"),
                })
            }
        };
        cols.push(SchemaColumn {
            name: name.trim().to_string(),
            is_target,
        });
    }
    Ok(cols)
}

/// Load a numeric CSV, splitting columns into features and targets by index.
/// Rows with missing or non-numeric values are rejected with their location.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_columns: &[usize],
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut y_rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (row, line) in text.lines().enumerate() {
        if row == 0 && has_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row,
                    col: cells.len(),
                    msg: format!("expected {w} cells, found {}", cells.len()),
                })
            }
            _ => {}
        }
        let mut xr = Vec::new();
        let mut yr = Vec::new();
        for (col, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::Parse {
                    row,
                    col,
                    msg: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if target_columns.contains(&col) {
                yr.push(v);
            } else {
                xr.push(v);
            }
        }
        x_rows.push(xr);
        y_rows.push(yr);
    }
    if x_rows.is_empty() {
        return Err(Error::Config(format!("{} contains no data rows", path.display())));
    }
    Dataset::new(
        DenseMatrix::from_rows(&x_rows)?,
        DenseMatrix::from_rows(&y_rows)?,
        path.display().to_string(),
    )
}

fn column_moments(m: &DenseMatrix, j: usize) -> (f64, f64) {
    let n = m.rows() as f64;
    let mean = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
    // population (1/n) convention
    let var = (0..m.rows()).map(|i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-score inputs and targets per column with the population-std convention.
/// Zero-variance input columns are dropped with a warning; a zero-variance
/// target is an error.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let mut kept = Vec::new();
    let mut imeans = Vec::new();
    let mut istds = Vec::new();
    for j in 0..ds.x.cols() {
        let (mean, std) = column_moments(&ds.x, j);
        if std == 0.0 {
            eprintln!(
                "warning: dropping zero-variance input column {j} of {}",
                ds.provenance
            );
            continue;
        }
        kept.push(j);
        imeans.push(mean);
        istds.push(std);
    }
    let mut tmeans = Vec::new();
    let mut tstds = Vec::new();
    for j in 0..ds.y.cols() {
        let (mean, std) = column_moments(&ds.y, j);
        if std == 0.0 {
            return Err(Error::DegenerateColumn(format!("target {j}")));
        }
        tmeans.push(mean);
        tstds.push(std);
    }
    let record = StandardizationRecord {
        kept_inputs: kept,
        input_means: imeans,
        input_stds: istds,
        target_means: tmeans,
        target_stds: tstds,
    };
    apply_record(&record, ds)
}

/// Apply an existing standardization record (e.g. train statistics to test).
pub fn apply_record(record: &StandardizationRecord, ds: &Dataset) -> Result<Dataset> {
    let n = ds.len();
    let p = record.kept_inputs.len();
    let mut x = DenseMatrix::zeros(n, p);
    for i in 0..n {
        for (jj, &j) in record.kept_inputs.iter().enumerate() {
            x.set(
                i,
                jj,
                (ds.x.get(i, j) - record.input_means[jj]) / record.input_stds[jj],
            );
        }
    }
    if ds.y.cols() != record.target_means.len() {
        return Err(Error::DimensionMismatch("target column count".into()));
    }
    let mut y = DenseMatrix::zeros(n, ds.y.cols());
    for i in 0..n {
        for j in 0..ds.y.cols() {
            y.set(
                i,
                j,
                (ds.y.get(i, j) - record.target_means[j]) / record.target_stds[j],
            );
        }
    }
    let mut out = Dataset::new(x, y, ds.provenance.clone())?;
    out.record = Some(record.clone());
    Ok(out)
}

/// Map standardized predictive means/stds of a single target back to the
/// original scale.
pub fn destandardize_predictions(
    record: &StandardizationRecord,
    means: &[f64],
    stds: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m0 = record.target_means[0];
    let s0 = record.target_stds[0];
    (
        means.iter().map(|v| v * s0 + m0).collect(),
        stds.iter().map(|v| v * s0).collect(),
    )
}

fn select_rows(m: &DenseMatrix, idx: &[usize]) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| m.row(i).to_vec()).collect();
    DenseMatrix::from_rows(&rows).unwrap()
}

/// Seeded shuffle split into disjoint, exhaustive train/test parts.
/// Standardization is left to the caller so test statistics never leak.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config("test fraction must be in [0, 1)".into()));
    }
    let n = ds.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut rng = RngState::new(seed);
    let perm = rng.permutation(n);
    let (test_idx, train_idx) = perm.split_at(n_test);
    let train = Dataset::new(
        select_rows(&ds.x, train_idx),
        select_rows(&ds.y, train_idx),
        format!("{} [train seed={seed}]", ds.provenance),
    )?;
    let test = Dataset::new(
        select_rows(&ds.x, test_idx),
        select_rows(&ds.y, test_idx),
        format!("{} [test seed={seed}]", ds.provenance),
    )?;
    Ok((train, test))
}

/// How measurement points are drawn each iteration: some from the training
/// inputs, some uniformly from a box.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPolicy {
    pub m_train: usize,
    pub m_inducing: usize,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl MeasurementPolicy {
    pub fn train_only(m_train: usize) -> Self {
        MeasurementPolicy {
            m_train,
            m_inducing: 0,
            box_lo: 0.0,
            box_hi: 1.0,
        }
    }

    /// True when the policy always returns the full training set, so the
    /// kernel factorization can be cached across iterations.
    pub fn is_fixed_full_train(&self, n_train: usize) -> bool {
        self.m_inducing == 0 && self.m_train == n_train
    }
}

pub fn draw_measurement_set(
    policy: &MeasurementPolicy,
    train_x: &DenseMatrix,
    rng: &mut RngState,
) -> Result<MeasurementSet> {
    if policy.m_train + policy.m_inducing == 0 {
        return Err(Error::Policy("measurement policy draws zero points".into()));
    }
    if policy.m_train > train_x.rows() {
        return Err(Error::Policy(format!(
            "m_train {} exceeds training size {}",
            policy.m_train,
            train_x.rows()
        )));
    }
    let idx = rng.sample_without_replacement(train_x.rows(), policy.m_train);
    let mut rows: Vec<Vec<f64>> = idx.iter().map(|&i| train_x.row(i).to_vec()).collect();
    for _ in 0..policy.m_inducing {
        rows.push(
            (0..train_x.cols())
                .map(|_| rng.uniform(policy.box_lo, policy.box_hi))
                .collect(),
        );
    }
    MeasurementSet::new(DenseMatrix::from_rows(&rows)?)
}

/// One epoch of seeded minibatches; the final partial batch is included.
pub fn minibatches(
    x: &DenseMatrix,
    y: &DenseMatrix,
    n_batch: usize,
    rng: &mut RngState,
) -> Vec<(DenseMatrix, DenseMatrix)> {
    let perm = rng.permutation(x.rows());
    perm.chunks(n_batch)
        .map(|chunk| (select_rows(x, chunk), select_rows(y, chunk)))
        .collect()
}

/// Stateful minibatch cycler for chain runners: reshuffles at each epoch
/// boundary and never yields an empty batch.
pub struct Minibatcher {
    x: DenseMatrix,
    y: DenseMatrix,
    n_batch: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl Minibatcher {
    pub fn new(x: DenseMatrix, y: DenseMatrix, n_batch: usize) -> Self {
        let n = x.rows();
        Minibatcher {
            x,
            y,
            n_batch: n_batch.clamp(1, n.max(1)),
            order: (0..n).collect(),
            cursor: n, // force an initial shuffle
        }
    }

    pub fn next_batch(&mut self, rng: &mut RngState) -> (DenseMatrix, DenseMatrix) {
        if self.cursor >= self.order.len() {
            self.order = rng.permutation(self.x.rows());
            self.cursor = 0;
        }
        let end = (self.cursor + self.n_batch).min(self.order.len());
        let chunk = &self.order[self.cursor..end];
        self.cursor = end;
        (select_rows(&self.x, chunk), select_rows(&self.y, chunk))
    }
}
