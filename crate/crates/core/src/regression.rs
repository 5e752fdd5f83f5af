//! Least squares, expanding-window direct h-step estimation, and BIC lag
//! selection.
//!
//! Time indices in this module are 0-based array positions. The public
//! forecast-origin argument `k0` keeps the usual 1-based convention: with `T`
//! observations the origins are `k0, …, T − h` and there are
//! `n = T − h − k0 + 1` forecasts. At origin `t` the fit uses the pairs
//! `(x̃_{s−h}, y_s)` for `s = h + 1, …, t`; pairs with `s ≤ h` would need
//! regressors dated before the sample and are never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{EncError, Result};
use crate::linalg::{dot, CholeskyWorkspace, RCOND_FLOOR};

/// Observations on a common time index, row `t` = time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    values: DMatrix<f64>,
}

impl TimeSeriesMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(EncError::EmptyInput("time series matrix"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncError::NonFinite("time series matrix"));
        }
        Ok(Self { values })
    }

    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let t = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != t) {
            return Err(EncError::DimensionMismatch(
                "columns of unequal length".into(),
            ));
        }
        Self::new(DMatrix::from_fn(t, columns.len(), |i, j| columns[j][i]))
    }

    pub fn periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Direct h-step regression layout.
///
/// Row `t` of the regressor block holds `x̃_t = (1, x_t')'`, the information
/// available at forecast origin `t`; it is paired with `targets[t + h]`.
/// Entries `targets[0..h]` are never used as responses and may be NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectDesign {
    regressors: Vec<f64>,
    width: usize,
    targets: Vec<f64>,
    h: usize,
}

impl DirectDesign {
    /// Builds a design from a row-major regressor block whose first column is
    /// the intercept.
    pub fn new(regressors: Vec<f64>, width: usize, targets: Vec<f64>, h: usize) -> Result<Self> {
        if h == 0 {
            return Err(EncError::InvalidSpec("horizon h must be at least 1".into()));
        }
        if width == 0 || regressors.len() != width * targets.len() {
            return Err(EncError::DimensionMismatch(format!(
                "{} regressor entries for {} rows of width {}",
                regressors.len(),
                targets.len(),
                width
            )));
        }
        if regressors.chunks_exact(width).any(|row| row[0] != 1.0) {
            return Err(EncError::InvalidSpec(
                "first regressor column must be the intercept".into(),
            ));
        }
        if regressors.iter().any(|v| !v.is_finite()) {
            return Err(EncError::NonFinite("regressors"));
        }
        if targets.iter().skip(h).any(|v| !v.is_finite()) {
            return Err(EncError::NonFinite("targets"));
        }
        Ok(Self {
            regressors,
            width,
            targets,
            h,
        })
    }

    /// Intercept plus the given predictor columns, all dated at the origin.
    pub fn from_predictors(targets: &[f64], predictors: &[&[f64]], h: usize) -> Result<Self> {
        let t = targets.len();
        if predictors.iter().any(|p| p.len() != t) {
            return Err(EncError::DimensionMismatch(
                "predictor and target lengths differ".into(),
            ));
        }
        let width = predictors.len() + 1;
        let mut regressors = Vec::with_capacity(t * width);
        for i in 0..t {
            regressors.push(1.0);
            regressors.extend(predictors.iter().map(|p| p[i]));
        }
        Self::new(regressors, width, targets.to_vec(), h)
    }

    /// Intercept plus distributed lags: for each `(series, p)` the columns
    /// `series[t − j]`, `j = 0, …, p`. Rows start at `start`, which must be at
    /// least the largest `p`; `targets[t]` is taken from `target[t]`.
    pub fn from_lags(
        target: &[f64],
        lagged: &[(&[f64], usize)],
        h: usize,
        start: usize,
    ) -> Result<Self> {
        let t_len = target.len();
        if lagged.iter().any(|(s, _)| s.len() != t_len) {
            return Err(EncError::DimensionMismatch(
                "lagged series and target lengths differ".into(),
            ));
        }
        if lagged.iter().any(|&(_, p)| p > start) || start >= t_len {
            return Err(EncError::InsufficientData(format!(
                "start row {start} cannot host the requested lags in {t_len} observations"
            )));
        }
        let width = 1 + lagged.iter().map(|&(_, p)| p + 1).sum::<usize>();
        let rows = t_len - start;
        let mut regressors = Vec::with_capacity(rows * width);
        for t in start..t_len {
            regressors.push(1.0);
            for &(series, p) in lagged {
                regressors.extend((0..=p).map(|j| series[t - j]));
            }
        }
        Self::new(regressors, width, target[start..].to_vec(), h)
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn horizon(&self) -> usize {
        self.h
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.regressors[t * self.width..(t + 1) * self.width]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Number of forecasts produced from origin `k0`.
    pub fn forecast_count(&self, k0: usize) -> usize {
        (self.rows() + 1).saturating_sub(self.h + k0)
    }

    /// The design with extra columns appended after the existing ones.
    pub fn augmented(&self, extra: &[&[f64]]) -> Result<Self> {
        if extra.iter().any(|c| c.len() != self.rows()) {
            return Err(EncError::DimensionMismatch(
                "extra column length differs from design rows".into(),
            ));
        }
        let width = self.width + extra.len();
        let mut regressors = Vec::with_capacity(self.rows() * width);
        for t in 0..self.rows() {
            regressors.extend_from_slice(self.row(t));
            regressors.extend(extra.iter().map(|c| c[t]));
        }
        Self::new(regressors, width, self.targets.clone(), self.h)
    }

    /// The `(X, y)` pairs `(x̃_{s−h}, y_s)` for `s` in `h..=last` as a batch
    /// problem.
    pub fn batch_problem(&self, last: usize) -> (DMatrix<f64>, DVector<f64>) {
        let h = self.h;
        let m = (last + 1).saturating_sub(h);
        let x = DMatrix::from_fn(m, self.width, |i, j| self.row(i)[j]);
        let y = DVector::from_fn(m, |i, _| self.targets[i + h]);
        (x, y)
    }

    fn check_origin(&self, k0: usize) -> Result<()> {
        if k0 < self.width + self.h {
            return Err(EncError::InsufficientData(format!(
                "k0 = {k0} leaves {} observations for {} parameters",
                k0.saturating_sub(self.h),
                self.width
            )));
        }
        if k0 + self.h > self.rows() {
            return Err(EncError::InsufficientData(format!(
                "k0 = {k0} with h = {} exceeds the {} available periods",
                self.h,
                self.rows()
            )));
        }
        Ok(())
    }
}

/// Running cross-products for an expanding-window least squares fit.
#[derive(Debug, Clone)]
pub struct RecursiveFitState {
    gram: Vec<f64>,
    cross: Vec<f64>,
    count: usize,
    workspace: CholeskyWorkspace,
}

impl RecursiveFitState {
    pub fn new(width: usize) -> Self {
        Self {
            gram: vec![0.0; width * width],
            cross: vec![0.0; width],
            count: 0,
            workspace: CholeskyWorkspace::new(width),
        }
    }

    pub fn width(&self) -> usize {
        self.cross.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Row-major `Σ x̃ x̃'`.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn cross(&self) -> &[f64] {
        &self.cross
    }

    pub fn absorb(&mut self, x: &[f64], y: f64) {
        let k = self.width();
        for i in 0..k {
            let xi = x[i];
            self.cross[i] += xi * y;
            for j in 0..=i {
                self.gram[i * k + j] += xi * x[j];
            }
        }
        for i in 0..k {
            for j in (i + 1)..k {
                self.gram[i * k + j] = self.gram[j * k + i];
            }
        }
        self.count += 1;
    }

    /// Writes the current least squares coefficients into `out`.
    pub fn coefficients_into(&mut self, out: &mut [f64]) -> Result<()> {
        if self.count < self.width() {
            return Err(EncError::InsufficientData(format!(
                "{} observations for {} parameters",
                self.count,
                self.width()
            )));
        }
        if self.workspace.solve(&self.gram, &self.cross, out) {
            Ok(())
        } else {
            Err(EncError::RankDeficient { origin: None })
        }
    }

    pub fn coefficients(&mut self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.coefficients_into(&mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
}

/// Least squares through an SVD of the column-equilibrated regressor matrix.
///
/// Fails with `RankDeficient` when the equilibrated cross-product matrix has
/// reciprocal condition below 1e-12.
pub fn solve_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (rows, cols) = x.shape();
    if rows != y.len() {
        return Err(EncError::DimensionMismatch(format!(
            "{rows} regressor rows for {} responses",
            y.len()
        )));
    }
    if cols == 0 || rows < cols {
        return Err(EncError::InsufficientData(format!(
            "{rows} observations for {cols} parameters"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EncError::NonFinite("regression inputs"));
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if norms.contains(&0.0) {
        return Err(EncError::RankDeficient { origin: None });
    }
    let scaled = DMatrix::from_fn(rows, cols, |i, j| x[(i, j)] / norms[j]);
    let svd = scaled.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if !((smin / smax).powi(2) >= RCOND_FLOOR) {
        return Err(EncError::RankDeficient { origin: None });
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let yv = DVector::from_column_slice(y);
    let uty = u.transpose() * &yv;
    let z = DVector::from_fn(cols, |i, _| uty[i] / s[i]);
    let beta_scaled = v_t.transpose() * z;
    let coefficients: Vec<f64> = (0..cols).map(|j| beta_scaled[j] / norms[j]).collect();
    let fitted = x * DVector::from_column_slice(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr = residuals.iter().map(|r| r * r).sum();
    Ok(OlsFit {
        coefficients,
        residuals,
        ssr,
    })
}

/// Coefficient path θ̂_t for origins `t = k0, …, T − h` (1-based).
pub fn expanding_window_coefficients(design: &DirectDesign, k0: usize) -> Result<Vec<Vec<f64>>> {
    let mut path = Vec::with_capacity(design.forecast_count(k0));
    walk_expanding_window(design, k0, |_, theta| path.push(theta.to_vec()))?;
    Ok(path)
}

/// Pseudo out-of-sample errors `y_{t+h} − θ̂_t' x̃_t` for origins
/// `t = k0, …, T − h` (1-based).
pub fn recursive_forecast_errors(design: &DirectDesign, k0: usize) -> Result<Vec<f64>> {
    let h = design.horizon();
    let mut errors = Vec::with_capacity(design.forecast_count(k0));
    walk_expanding_window(design, k0, |origin, theta| {
        let forecast = dot(design.row(origin), theta);
        errors.push(design.targets()[origin + h] - forecast);
    })?;
    Ok(errors)
}

/// Calls `visit(origin, θ̂)` for each 0-based origin `k0 − 1, …, T − 1 − h`.
fn walk_expanding_window(
    design: &DirectDesign,
    k0: usize,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    design.check_origin(k0)?;
    let h = design.horizon();
    let last_origin = design.rows() - 1 - h;
    let first_origin = k0 - 1;
    let mut state = RecursiveFitState::new(design.width());
    for s in h..=first_origin {
        state.absorb(design.row(s - h), design.targets()[s]);
    }
    let mut theta = vec![0.0; design.width()];
    for origin in first_origin..=last_origin {
        if origin > first_origin {
            state.absorb(design.row(origin - h), design.targets()[origin]);
        }
        state.coefficients_into(&mut theta).map_err(|e| match e {
            EncError::RankDeficient { .. } => EncError::RankDeficient {
                origin: Some(origin + 1),
            },
            other => other,
        })?;
        visit(origin, &theta);
    }
    Ok(())
}

/// BIC profile for lag orders `0..=p_max` of the direct regression of
/// `target[t + h]` on an intercept and `predictor[t − j]`, `j = 0, …, p`.
///
/// Every order is fitted on the rows `t = p_max, …, T − 1 − h`, so the sums of
/// squared residuals are comparable. The penalty counts the intercept and the
/// `p + 1` lag coefficients. Lag columns are centred before fitting, which
/// leaves every SSR unchanged but keeps near-constant series well conditioned.
pub fn bic_profile(target: &[f64], predictor: &[f64], h: usize, p_max: usize) -> Result<Vec<f64>> {
    if target.len() != predictor.len() {
        return Err(EncError::DimensionMismatch(
            "target and predictor lengths differ".into(),
        ));
    }
    if h == 0 {
        return Err(EncError::InvalidSpec("horizon h must be at least 1".into()));
    }
    let t_len = target.len();
    if t_len < p_max + h + 10 {
        return Err(EncError::InsufficientData(format!(
            "{t_len} observations for p_max = {p_max}, h = {h}"
        )));
    }
    let rows: Vec<usize> = (p_max..t_len - h).collect();
    let n_eff = rows.len() as f64;
    let y: Vec<f64> = rows.iter().map(|&t| target[t + h]).collect();
    let lag_means: Vec<f64> = (0..=p_max)
        .map(|j| rows.iter().map(|&t| predictor[t - j]).sum::<f64>() / n_eff)
        .collect();
    (0..=p_max)
        .map(|p| {
            let x = DMatrix::from_fn(rows.len(), p + 2, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    predictor[rows[i] - (j - 1)] - lag_means[j - 1]
                }
            });
            let fit = solve_ols(&x, &y)?;
            Ok(n_eff * (fit.ssr / n_eff).ln() + (p as f64 + 2.0) * n_eff.ln())
        })
        .collect()
}

/// Lag order minimising the BIC profile; ties go to the smaller order.
pub fn bic_select_lag_direct(
    target: &[f64],
    predictor: &[f64],
    h: usize,
    p_max: usize,
) -> Result<usize> {
    let profile = bic_profile(target, predictor, h, p_max)?;
    let mut best = 0;
    for (p, &b) in profile.iter().enumerate() {
        if b < profile[best] {
            best = p;
        }
    }
    Ok(best)
}

/// Autoregressive direct-regression lag order for `y` by BIC.
pub fn bic_select_lag(y: &[f64], h: usize, p_max: usize) -> Result<usize> {
    bic_select_lag_direct(y, y, h, p_max)
}
