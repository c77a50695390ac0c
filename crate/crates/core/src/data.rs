//! Core containers: the masked response matrix, encoded confounds, the
//! factor model and the per-fit solver report.

use ndarray::{concatenate, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{IcqfError, Result};

/// Response matrix with an availability mask.
///
/// Unobserved cells hold `NaN` in `values`; every computation reads the data
/// through [`MaskedMatrix::masked_values`] (zero at unobserved cells) and
/// [`MaskedMatrix::mask`], so the sentinel never reaches arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    mask: Array2<f64>,
    masked: Array2<f64>,
    lower: f64,
    upper: f64,
    observed: usize,
    column_ids: Vec<String>,
}

impl MaskedMatrix {
    /// Builds a masked matrix. Values at unobserved cells are discarded.
    ///
    /// Requires at least one observed entry and finite observed values. Row
    /// and column coverage is not enforced here (see [`Self::check_coverage`]);
    /// held-out folds and new participants legitimately have empty rows.
    pub fn new(values: Array2<f64>, observed: Array2<bool>) -> Result<Self> {
        if values.dim() != observed.dim() {
            return Err(IcqfError::Dimension(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                observed.dim()
            )));
        }
        let (n, m) = values.dim();
        if n == 0 || m == 0 {
            return Err(IcqfError::Dimension("empty matrix".into()));
        }
        let mut lower = f64::INFINITY;
        let mut upper = f64::NEG_INFINITY;
        let mut count = 0usize;
        for ((i, j), &v) in values.indexed_iter() {
            if observed[(i, j)] {
                if !v.is_finite() {
                    return Err(IcqfError::BadCell {
                        row: i,
                        col: j,
                        value: v.to_string(),
                    });
                }
                lower = lower.min(v);
                upper = upper.max(v);
                count += 1;
            }
        }
        if count == 0 {
            return Err(IcqfError::EmptyMask);
        }
        let mask = observed.mapv(|b| if b { 1.0 } else { 0.0 });
        let masked = Zip::from(&values)
            .and(&observed)
            .map_collect(|&v, &o| if o { v } else { 0.0 });
        let values = Zip::from(&values)
            .and(&observed)
            .map_collect(|&v, &o| if o { v } else { f64::NAN });
        Ok(MaskedMatrix {
            values,
            mask,
            masked,
            lower,
            upper,
            observed: count,
            column_ids: (0..m).map(|j| format!("q{j}")).collect(),
        })
    }

    /// Fully observed matrix.
    pub fn from_dense(values: Array2<f64>) -> Result<Self> {
        let observed = Array2::from_elem(values.dim(), true);
        Self::new(values, observed)
    }

    pub fn with_column_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.ncols() {
            return Err(IcqfError::Dimension(format!(
                "{} column ids for {} columns",
                ids.len(),
                self.ncols()
            )));
        }
        self.column_ids = ids;
        Ok(self)
    }

    /// Errors unless every row and every column has an observed entry.
    pub fn check_coverage(&self) -> Result<()> {
        if let Some(i) = self
            .mask
            .axis_iter(Axis(0))
            .position(|row| row.iter().all(|&v| v == 0.0))
        {
            return Err(IcqfError::EmptyRow(i));
        }
        if let Some(j) = self
            .mask
            .axis_iter(Axis(1))
            .position(|col| col.iter().all(|&v| v == 0.0))
        {
            return Err(IcqfError::EmptyColumn(j));
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Smallest observed value.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Largest observed value.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)] != 0.0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[(i, j)])
    }

    /// Raw values with `NaN` at unobserved cells.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// 0/1 availability mask.
    pub fn mask(&self) -> ArrayView2<'_, f64> {
        self.mask.view()
    }

    /// `mask ⊙ values`, with exact zeros at unobserved cells.
    pub fn masked_values(&self) -> ArrayView2<'_, f64> {
        self.masked.view()
    }

    pub fn column_ids(&self) -> &[String] {
        &self.column_ids
    }

    /// Copy with additional cells hidden. Bounds are recomputed from what
    /// remains observed, so hidden values cannot influence anything fitted on
    /// the result.
    pub fn hide(&self, hidden: &Array2<bool>) -> Result<Self> {
        if hidden.dim() != self.dim() {
            return Err(IcqfError::Dimension("hidden mask shape".into()));
        }
        let observed = Zip::from(&self.mask)
            .and(hidden)
            .map_collect(|&m, &h| m != 0.0 && !h);
        let mut out = Self::new(self.values.clone(), observed)?;
        out.column_ids = self.column_ids.clone();
        Ok(out)
    }

    /// Observed values with unobserved cells replaced by their column's
    /// observed mean (zero for a column with nothing observed).
    pub fn column_mean_filled(&self) -> Array2<f64> {
        let mut out = self.masked.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let mask_col = self.mask.column(j);
            let count: f64 = mask_col.sum();
            let mean = if count > 0.0 { col.sum() / count } else { 0.0 };
            Zip::from(&mut col).and(&mask_col).for_each(|v, &o| {
                if o == 0.0 {
                    *v = mean;
                }
            });
        }
        out
    }

    /// Masked squared error `‖mask ⊙ (M − other)‖_F²`.
    pub fn masked_sq_error(&self, other: ArrayView2<'_, f64>) -> f64 {
        let mut acc = 0.0;
        Zip::from(&self.masked)
            .and(&self.mask)
            .and(other)
            .for_each(|&v, &o, &x| {
                if o != 0.0 {
                    acc += (v - x) * (v - x);
                }
            });
        acc
    }
}

/// How a raw confound column should be encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfoundKind {
    Categorical,
    Continuous,
}

/// One entry of the confound declaration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundSpec {
    pub name: String,
    pub kind: ConfoundKind,
    /// Optional closed set of categorical levels, in indicator-column order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumnData {
    Categorical(Vec<String>),
    Continuous(Vec<f64>),
}

/// A named raw confound column, one value per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfound {
    pub name: String,
    pub data: RawColumnData,
    pub levels: Option<Vec<String>>,
}

impl RawConfound {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        RawConfound {
            name: name.into(),
            data: RawColumnData::Continuous(values),
            levels: None,
        }
    }

    pub fn categorical(name: impl Into<String>, values: Vec<String>) -> Self {
        RawConfound {
            name: name.into(),
            data: RawColumnData::Categorical(values),
            levels: None,
        }
    }

    pub fn with_levels(mut self, levels: Vec<String>) -> Self {
        self.levels = Some(levels);
        self
    }

    fn len(&self) -> usize {
        match &self.data {
            RawColumnData::Categorical(v) => v.len(),
            RawColumnData::Continuous(v) => v.len(),
        }
    }
}

/// Provenance of one encoded confound column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub source: String,
    pub tag: String,
}

impl ColumnLabel {
    fn new(source: &str, tag: &str) -> Self {
        ColumnLabel {
            source: source.to_string(),
            tag: tag.to_string(),
        }
    }

    pub fn display(&self) -> String {
        format!("{}:{}", self.source, self.tag)
    }
}

/// Frozen encoding rule for one raw column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Continuous { name: String, min: f64, max: f64 },
    Categorical { name: String, levels: Vec<String> },
}

/// Encoding rules learned on a training table; re-applied verbatim to new
/// participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundEncoder {
    pub columns: Vec<ColumnEncoding>,
    pub intercept: bool,
}

impl ConfoundEncoder {
    /// Learns rescaling ranges and level sets from `raw`.
    pub fn fit(raw: &[RawConfound], intercept: bool) -> Result<Self> {
        let mut columns = Vec::with_capacity(raw.len());
        for col in raw {
            match &col.data {
                RawColumnData::Continuous(v) => {
                    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                        return Err(IcqfError::Invalid(format!(
                            "confound {:?} has non-finite value {bad}",
                            col.name
                        )));
                    }
                    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if !(max > min) {
                        return Err(IcqfError::ConstantConfound(col.name.clone()));
                    }
                    columns.push(ColumnEncoding::Continuous {
                        name: col.name.clone(),
                        min,
                        max,
                    });
                }
                RawColumnData::Categorical(v) => {
                    let levels = match &col.levels {
                        Some(levels) => levels.clone(),
                        None => {
                            let mut levels: Vec<String> = Vec::new();
                            for x in v {
                                if !levels.contains(x) {
                                    levels.push(x.clone());
                                }
                            }
                            levels
                        }
                    };
                    columns.push(ColumnEncoding::Categorical {
                        name: col.name.clone(),
                        levels,
                    });
                }
            }
        }
        Ok(ConfoundEncoder { columns, intercept })
    }

    pub fn labels(&self) -> Vec<ColumnLabel> {
        let mut labels = Vec::new();
        for enc in &self.columns {
            match enc {
                ColumnEncoding::Continuous { name, .. } => {
                    labels.push(ColumnLabel::new(name, "high"));
                    labels.push(ColumnLabel::new(name, "low"));
                }
                ColumnEncoding::Categorical { name, levels } => {
                    labels.extend(levels.iter().map(|l| ColumnLabel::new(name, l)));
                }
            }
        }
        if self.intercept {
            labels.push(ColumnLabel::new("intercept", "1"));
        }
        labels
    }

    /// Applies the frozen rules. Continuous values outside the training range
    /// are clipped into `[0, 1]` after rescaling.
    pub fn encode(&self, raw: &[RawConfound], n: usize) -> Result<EncodedConfounds> {
        let width = self.labels().len();
        let mut out = Array2::<f64>::zeros((n, width));
        let mut col = 0;
        for enc in &self.columns {
            let name = match enc {
                ColumnEncoding::Continuous { name, .. } | ColumnEncoding::Categorical { name, .. } => {
                    name
                }
            };
            let source = raw.iter().find(|r| &r.name == name).ok_or_else(|| {
                IcqfError::Invalid(format!("confound column {name:?} missing from table"))
            })?;
            if source.len() != n {
                return Err(IcqfError::Dimension(format!(
                    "confound {name:?} has {} rows, expected {n}",
                    source.len()
                )));
            }
            match (enc, &source.data) {
                (ColumnEncoding::Continuous { min, max, .. }, RawColumnData::Continuous(v)) => {
                    for (i, &x) in v.iter().enumerate() {
                        if !x.is_finite() {
                            return Err(IcqfError::Invalid(format!(
                                "confound {name:?} has non-finite value at row {i}"
                            )));
                        }
                        let c = ((x - min) / (max - min)).clamp(0.0, 1.0);
                        out[(i, col)] = c;
                        out[(i, col + 1)] = 1.0 - c;
                    }
                    col += 2;
                }
                (ColumnEncoding::Categorical { levels, .. }, RawColumnData::Categorical(v)) => {
                    for (i, x) in v.iter().enumerate() {
                        let idx = levels.iter().position(|l| l == x).ok_or_else(|| {
                            IcqfError::UnknownLevel {
                                column: name.clone(),
                                level: x.clone(),
                            }
                        })?;
                        out[(i, col + idx)] = 1.0;
                    }
                    col += levels.len();
                }
                _ => {
                    return Err(IcqfError::Invalid(format!(
                        "confound {name:?} kind differs from its encoding"
                    )))
                }
            }
        }
        if self.intercept {
            out.column_mut(col).fill(1.0);
        }
        Ok(EncodedConfounds {
            columns: out,
            labels: self.labels(),
            has_intercept: self.intercept,
            encoder: self.clone(),
        })
    }
}

/// Confound matrix `C` in `[0, 1]`, one row per participant.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedConfounds {
    columns: Array2<f64>,
    labels: Vec<ColumnLabel>,
    has_intercept: bool,
    encoder: ConfoundEncoder,
}

impl EncodedConfounds {
    /// A single all-ones intercept column.
    pub fn intercept_only(n: usize) -> Self {
        let encoder = ConfoundEncoder {
            columns: Vec::new(),
            intercept: true,
        };
        EncodedConfounds {
            columns: Array2::ones((n, 1)),
            labels: encoder.labels(),
            has_intercept: true,
            encoder,
        }
    }

    /// No confound columns at all, not even an intercept.
    pub fn none(n: usize) -> Self {
        EncodedConfounds {
            columns: Array2::zeros((n, 0)),
            labels: Vec::new(),
            has_intercept: false,
            encoder: ConfoundEncoder {
                columns: Vec::new(),
                intercept: false,
            },
        }
    }

    /// Wraps an already-encoded matrix. Entries must lie in `[0, 1]`.
    pub fn from_matrix(columns: Array2<f64>, labels: Vec<ColumnLabel>) -> Result<Self> {
        if labels.len() != columns.ncols() {
            return Err(IcqfError::Dimension("one label per confound column".into()));
        }
        if columns.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(IcqfError::Invalid("confound entries must lie in [0, 1]".into()));
        }
        let has_intercept = columns.ncols() > 0 && columns.column(columns.ncols() - 1).iter().all(|&v| v == 1.0);
        Ok(EncodedConfounds {
            columns,
            labels,
            has_intercept,
            encoder: ConfoundEncoder {
                columns: Vec::new(),
                intercept: has_intercept,
            },
        })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.columns.view()
    }

    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }

    pub fn labels(&self) -> &[ColumnLabel] {
        &self.labels
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn encoder(&self) -> &ConfoundEncoder {
        &self.encoder
    }

    /// Rows selected by `rows`, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        out.columns = self.columns.select(Axis(0), rows);
        out
    }
}

/// Encodes raw confounds: continuous columns are min/max rescaled and
/// mirrored into `(c, 1 − c)`, categorical columns become one indicator per
/// level, and an all-ones intercept column is appended last.
pub fn encode_confounds(raw: &[RawConfound], n: usize) -> Result<EncodedConfounds> {
    ConfoundEncoder::fit(raw, true)?.encode(raw, n)
}

/// Fitted factorization `[W, C] Qᵀ ≈ Z` together with its ADMM state.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// Factor expressions, `n × k`, in `[0, w_upper]`.
    pub w: Array2<f64>,
    /// Factor loadings, `m × k`.
    pub rq: Array2<f64>,
    /// Confound loadings, `m × c`.
    pub cq: Array2<f64>,
    /// Auxiliary reconstruction, `n × m`, in `[lower, upper]`.
    pub z: Array2<f64>,
    /// Dual variable for `Z = [W, C] Qᵀ`.
    pub alpha: Array2<f64>,
    pub k: usize,
    pub beta: f64,
    /// Multiplier applied to `beta` on the loading side.
    pub gamma: f64,
    pub rho: f64,
    pub q_upper: f64,
    pub w_upper: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FactorModel {
    /// `[RQ, CQ]` as one `m × (k + c)` matrix.
    pub fn q(&self) -> Array2<f64> {
        concatenate![Axis(1), self.rq, self.cq]
    }

    pub fn reconstruct(&self, confounds: &EncodedConfounds) -> Result<Array2<f64>> {
        reconstruct(self, confounds)
    }

    /// Checks membership of `W`, `Q` and `Z` in their constraint sets.
    pub fn check_constraints(&self, tol: f64) -> Result<()> {
        if let Some(v) = self
            .w
            .iter()
            .find(|&&v| !(v >= -tol && v <= self.w_upper + tol))
        {
            return Err(IcqfError::Constraint {
                set: "W",
                detail: format!("entry {v} outside [0, {}]", self.w_upper),
            });
        }
        if let Some(v) = self
            .rq
            .iter()
            .chain(self.cq.iter())
            .find(|&&v| !(v >= -tol && v <= self.q_upper + tol))
        {
            return Err(IcqfError::Constraint {
                set: "Q",
                detail: format!("entry {v} outside [0, {}]", self.q_upper),
            });
        }
        if let Some(v) = self
            .z
            .iter()
            .find(|&&v| !(v >= self.lower - tol && v <= self.upper + tol))
        {
            return Err(IcqfError::Constraint {
                set: "Z",
                detail: format!("entry {v} outside [{}, {}]", self.lower, self.upper),
            });
        }
        Ok(())
    }
}

/// `W·RQᵀ + C·CQᵀ`, unclipped.
pub fn reconstruct(model: &FactorModel, confounds: &EncodedConfounds) -> Result<Array2<f64>> {
    reconstruct_parts(model.w.view(), model.rq.view(), confounds.matrix(), model.cq.view())
}

pub(crate) fn reconstruct_parts(
    w: ArrayView2<'_, f64>,
    rq: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    cq: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if w.ncols() != rq.ncols() || c.ncols() != cq.ncols() || w.nrows() != c.nrows() || rq.nrows() != cq.nrows()
    {
        return Err(IcqfError::Dimension(format!(
            "W {:?}, RQ {:?}, C {:?}, CQ {:?}",
            w.dim(),
            rq.dim(),
            c.dim(),
            cq.dim()
        )));
    }
    let mut out = w.dot(&rq.t());
    if c.ncols() > 0 {
        ndarray::linalg::general_mat_mul(1.0, &c, &cq.t(), 1.0, &mut out);
    }
    Ok(out)
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIter,
}

/// Per-iteration diagnostics of a fit. Index 0 of every trace is the
/// initial state; index `t` is the state after iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub lagrangian_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
    pub data_fit_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Row sub-problems that hit their iteration cap.
    pub inner_unconverged: usize,
    /// Factors whose coordinate updates were skipped for lack of curvature.
    pub dead_factors: Vec<usize>,
}

impl SolverReport {
    /// Largest single-step increase of the Lagrangian relative to `|L₀|`.
    pub fn max_relative_increase(&self) -> f64 {
        let scale = self.lagrangian_trace.first().map_or(1.0, |v| v.abs().max(f64::MIN_POSITIVE));
        self.lagrangian_trace
            .windows(2)
            .map(|w| (w[1] - w[0]) / scale)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when the Lagrangian never rose by more than `slack · |L₀|`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.lagrangian_trace.len() < 2 || self.max_relative_increase() <= slack
    }

    pub fn final_data_fit(&self) -> f64 {
        self.data_fit_trace.last().copied().unwrap_or(f64::NAN)
    }
}
