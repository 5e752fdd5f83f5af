//! Country inflation forecasts with and without a global-inflation predictor.
//!
//! For each country the benchmark regresses `π^h_t` on an intercept and
//! `π¹_{t−h−j}`, `j = 0, …, p₁`; the large model adds `π^g_{t−h−j}`,
//! `j = 0, …, p₂`, where `π^g` is the cross-country mean of `π¹`. Forecasts
//! are recursive from 25% of the sample and compared by RMSE ratio and the
//! split-sample encompassing test.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dgp::RngStream;
use crate::enc_test::{encompassing_test, ForecastErrorSet, HacConfig, SplitSpec};
use crate::error::{EncError, Result};
use crate::monte_carlo::{first_origin, ReportFormat};
use crate::regression::{bic_select_lag_direct, recursive_forecast_errors, DirectDesign};

/// Minimum usable quarters per country when loading a panel.
pub const MIN_QUARTERS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(EncError::Parse(format!("quarter {q} out of range")));
        }
        Ok(Self { year, q })
    }

    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_index(i: i64) -> Self {
        Self {
            year: i.div_euclid(4) as i32,
            q: (i.rem_euclid(4) + 1) as u8,
        }
    }

    pub fn offset(self, by: i64) -> Self {
        Self::from_index(self.index() + by)
    }
}

impl FromStr for Quarter {
    type Err = EncError;

    /// Accepts `YYYY-Qq` and `YYYYQq`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || EncError::Parse(format!("malformed quarter `{s}` (expected YYYY-Qq)"));
        let (year, q) = s.split_once(['Q', 'q']).ok_or_else(bad)?;
        let year = year.strip_suffix('-').unwrap_or(year);
        if year.len() != 4 || q.len() != 1 {
            return Err(bad());
        }
        let year: i32 = year.parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q).map_err(|_| bad())
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.q)
    }
}

impl Serialize for Quarter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Quarterly price levels on a common date axis. Each country uses its
/// longest contiguous block of observed prices.
#[derive(Debug, Clone, PartialEq)]
pub struct InflationPanel {
    countries: Vec<String>,
    start: Quarter,
    prices: Vec<Vec<Option<f64>>>,
    ranges: Vec<std::ops::Range<usize>>,
}

fn longest_block(series: &[Option<f64>]) -> std::ops::Range<usize> {
    let mut best = 0..0;
    let mut begin = None;
    for i in 0..=series.len() {
        let present = i < series.len() && series[i].is_some();
        match (present, begin) {
            (true, None) => begin = Some(i),
            (false, Some(b)) => {
                if i - b > best.len() {
                    best = b..i;
                }
                begin = None;
            }
            _ => {}
        }
    }
    best
}

impl InflationPanel {
    /// `prices[c][t]` is country `c` in quarter `start + t`; `None` is missing.
    pub fn new(
        countries: Vec<String>,
        start: Quarter,
        prices: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if countries.is_empty() {
            return Err(EncError::EmptyInput("panel has no countries"));
        }
        if countries.len() != prices.len() {
            return Err(EncError::DimensionMismatch(
                "country list and price columns differ".into(),
            ));
        }
        let len = prices[0].len();
        if prices.iter().any(|p| p.len() != len) {
            return Err(EncError::DimensionMismatch(
                "price columns have different lengths".into(),
            ));
        }
        for series in &prices {
            for (t, p) in series.iter().enumerate() {
                if let Some(v) = p {
                    if !(*v > 0.0) || !v.is_finite() {
                        return Err(EncError::NonPositivePrice(t));
                    }
                }
            }
        }
        let ranges: Vec<_> = prices.iter().map(|p| longest_block(p)).collect();
        if let Some(c) = ranges.iter().position(|r| r.len() < 2) {
            return Err(EncError::Coverage(format!(
                "{} has fewer than two consecutive quarters",
                countries[c]
            )));
        }
        Ok(Self {
            countries,
            start,
            prices,
            ranges,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn periods(&self) -> usize {
        self.prices[0].len()
    }

    pub fn start(&self) -> Quarter {
        self.start
    }

    pub fn date(&self, t: usize) -> Quarter {
        self.start.offset(t as i64)
    }

    pub fn country_index(&self, code: &str) -> Result<usize> {
        self.countries
            .iter()
            .position(|c| c == code)
            .ok_or_else(|| EncError::InvalidSpec(format!("country `{code}` is not in the panel")))
    }

    /// Quarters (panel positions) used for country `c`.
    pub fn used_range(&self, c: usize) -> std::ops::Range<usize> {
        self.ranges[c].clone()
    }

    /// Prices over the country's used range.
    pub fn used_prices(&self, c: usize) -> Vec<f64> {
        self.prices[c][self.used_range(c)]
            .iter()
            .map(|p| p.expect("used range is fully observed"))
            .collect()
    }

    pub fn raw_prices(&self, c: usize) -> &[Option<f64>] {
        &self.prices[c]
    }

    pub fn scale_country(&self, c: usize, factor: f64) -> Result<Self> {
        let mut prices = self.prices.clone();
        for p in prices[c].iter_mut().flatten() {
            *p *= factor;
        }
        Self::new(self.countries.clone(), self.start, prices)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelFilter {
    pub countries: Option<Vec<String>>,
    pub from: Option<Quarter>,
    pub to: Option<Quarter>,
}

/// Parses long-format `country,date,hcpi` CSV. Empty `hcpi` marks a missing
/// quarter; non-positive prices are parse errors.
pub fn parse_panel(
    text: &str,
    filter: &PanelFilter,
    min_quarters: usize,
) -> Result<InflationPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| EncError::Parse(format!("header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| EncError::Parse(format!("missing column `{name}` in header")))
    };
    let (ci, di, pi) = (col("country")?, col("date")?, col("hcpi")?);

    let mut order: Vec<String> = Vec::new();
    let mut obs: HashMap<String, BTreeMap<i64, Option<f64>>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| EncError::Parse(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let country = field(ci).to_string();
        if country.is_empty() {
            return Err(EncError::Parse(format!("line {line}: empty country code")));
        }
        let date: Quarter = field(di)
            .parse()
            .map_err(|e: EncError| EncError::Parse(format!("line {line}: {}", e.root())))?;
        let raw = field(pi);
        let price = if raw.is_empty() {
            None
        } else {
            let v: f64 = raw
                .parse()
                .map_err(|_| EncError::Parse(format!("line {line}: malformed price `{raw}`")))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(EncError::Parse(format!(
                    "line {line}: non-positive price {raw}"
                )));
            }
            Some(v)
        };
        if let Some(keep) = &filter.countries {
            if !keep.contains(&country) {
                continue;
            }
        }
        if filter.from.is_some_and(|f| date < f) || filter.to.is_some_and(|t| date > t) {
            continue;
        }
        let series = obs.entry(country.clone()).or_insert_with(|| {
            order.push(country.clone());
            BTreeMap::new()
        });
        if series.insert(date.index(), price).is_some() {
            return Err(EncError::Parse(format!(
                "line {line}: duplicate entry for {country} {date}"
            )));
        }
    }
    if let Some(keep) = &filter.countries {
        if let Some(missing) = keep.iter().find(|c| !obs.contains_key(*c)) {
            return Err(EncError::Coverage(format!(
                "country `{missing}` has no observations"
            )));
        }
    }
    if order.len() < 2 {
        return Err(EncError::Coverage(format!(
            "{} countries after filtering; at least 2 are required",
            order.len()
        )));
    }
    let first = obs
        .values()
        .filter_map(|s| s.keys().next())
        .min()
        .copied()
        .unwrap_or(0);
    let last = obs
        .values()
        .filter_map(|s| s.keys().next_back())
        .max()
        .copied()
        .unwrap_or(0);
    let len = (last - first + 1) as usize;
    let prices: Vec<Vec<Option<f64>>> = order
        .iter()
        .map(|c| {
            let mut column = vec![None; len];
            for (&i, &p) in &obs[c] {
                column[(i - first) as usize] = p;
            }
            column
        })
        .collect();
    for (c, column) in order.iter().zip(&prices) {
        let usable = longest_block(column).len();
        if usable < min_quarters {
            return Err(EncError::Coverage(format!(
                "{c} has {usable} contiguous quarters; at least {min_quarters} are required"
            )));
        }
    }
    InflationPanel::new(order, Quarter::from_index(first), prices)
}

pub fn load_panel(path: &Path, filter: &PanelFilter) -> Result<InflationPanel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EncError::Io(format!("{}: {e}", path.display())))?;
    parse_panel(&text, filter, MIN_QUARTERS)
}

/// Long-format CSV writer, the inverse of [`parse_panel`].
pub fn write_panel_csv(panel: &InflationPanel) -> String {
    let mut out = String::from("country,date,hcpi\n");
    for (c, code) in panel.countries.iter().enumerate() {
        for (t, p) in panel.prices[c].iter().enumerate() {
            let value = p.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{code},{},{value}", panel.date(t));
        }
    }
    out
}

/// `(400/h) · ln(P_t / P_{t−h})`; the first `h` entries are `None`.
pub fn annualized_inflation(prices: &[f64], h: usize) -> Result<Vec<Option<f64>>> {
    if h == 0 {
        return Err(EncError::InvalidSpec("horizon h must be at least 1".into()));
    }
    if let Some(i) = prices.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(EncError::NonPositivePrice(i));
    }
    let scale = 400.0 / h as f64;
    Ok((0..prices.len())
        .map(|t| (t >= h).then(|| scale * (prices[t] / prices[t - h]).ln()))
        .collect())
}

/// Equal-weight mean of quarter-on-quarter inflation over the countries
/// observed in each quarter (both `t` and `t − 1` inside their used range).
///
/// Quarters before the first or after the last contributing quarter are
/// `None`; an empty quarter in between is an error.
pub fn global_inflation(panel: &InflationPanel) -> Result<Vec<Option<f64>>> {
    global_inflation_excluding(panel, None)
}

pub fn global_inflation_excluding(
    panel: &InflationPanel,
    exclude: Option<usize>,
) -> Result<Vec<Option<f64>>> {
    let len = panel.periods();
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for c in 0..panel.countries.len() {
        if Some(c) == exclude {
            continue;
        }
        let range = panel.used_range(c);
        let pi1 = annualized_inflation(&panel.used_prices(c), 1)?;
        for (k, v) in pi1.iter().enumerate() {
            if let Some(v) = v {
                sum[range.start + k] += v;
                count[range.start + k] += 1;
            }
        }
    }
    let first = count.iter().position(|&n| n > 0);
    let last = count.iter().rposition(|&n| n > 0);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(EncError::EmptyQuarter("every quarter".into()));
    };
    if let Some(gap) = (first..=last).find(|&t| count[t] == 0) {
        return Err(EncError::EmptyQuarter(panel.date(gap).to_string()));
    }
    Ok((0..len)
        .map(|t| (count[t] > 0).then(|| sum[t] / count[t] as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryStudyConfig {
    pub h: usize,
    pub pi0: f64,
    pub p2: usize,
    pub p_max: usize,
    pub mu0_list: Vec<f64>,
    pub hac: HacConfig,
    pub exclude_own: bool,
}

impl Default for CountryStudyConfig {
    fn default() -> Self {
        Self {
            h: 4,
            pi0: 0.25,
            p2: 4,
            p_max: 8,
            mu0_list: vec![0.40, 0.45],
            hac: HacConfig::default(),
            exclude_own: false,
        }
    }
}

impl CountryStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(EncError::InvalidSpec("h must be at least 1".into()));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "pi0 = {} must lie in (0, 1)",
                self.pi0
            )));
        }
        if self.mu0_list.is_empty() {
            return Err(EncError::InvalidSpec("mu0 list must not be empty".into()));
        }
        for &mu0 in &self.mu0_list {
            crate::enc_test::validate_mu0(mu0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountryResult {
    pub country: String,
    pub rmse_ratio: f64,
    /// `(μ0, p-value)` in configuration order.
    pub p_values: Vec<(f64, f64)>,
    pub statistics: Vec<(f64, f64)>,
    pub selected_lag: usize,
    pub n_forecasts: usize,
    pub first_target: Quarter,
    pub last_target: Quarter,
}

/// The nested designs for one country, built on a common row range.
#[derive(Debug, Clone)]
pub struct CountryDesigns {
    pub benchmark: DirectDesign,
    pub large: DirectDesign,
    /// Position (within the country's series) of the first design row.
    pub start: usize,
}

/// Benchmark `[1, π¹_{s}, …, π¹_{s−p₁}]` and large
/// `[…, g_{s}, …, g_{s−p₂}]` rows for origins `s ≥ max(p₁, p₂) + 1`, paired
/// with `π^h_{s+h}`. Series are aligned; index 0 of `pi1` and `global` may be
/// undefined.
pub fn build_designs(
    target: &[f64],
    pi1: &[f64],
    global: &[f64],
    h: usize,
    p1: usize,
    p2: usize,
) -> Result<CountryDesigns> {
    let start = p1.max(p2) + 1;
    let benchmark = DirectDesign::from_lags(target, &[(pi1, p1)], h, start)?;
    let large = DirectDesign::from_lags(target, &[(pi1, p1), (global, p2)], h, start)?;
    Ok(CountryDesigns {
        benchmark,
        large,
        start,
    })
}

fn unwrap_series(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

pub fn country_encompassing(
    panel: &InflationPanel,
    country: usize,
    global: &[Option<f64>],
    config: &CountryStudyConfig,
) -> Result<CountryResult> {
    config.validate()?;
    let code = &panel.countries()[country];
    let inner = || -> Result<CountryResult> {
        let range = panel.used_range(country);
        let prices = panel.used_prices(country);
        let target = unwrap_series(&annualized_inflation(&prices, config.h)?);
        let pi1 = unwrap_series(&annualized_inflation(&prices, 1)?);
        let g = unwrap_series(&global[range.clone()]);
        let p1 = bic_select_lag_direct(&target[1..], &pi1[1..], config.h, config.p_max)?;
        let designs = build_designs(&target, &pi1, &g, config.h, p1, config.p2)?;
        let k0 = first_origin(designs.benchmark.rows(), config.pi0);
        let e1 = recursive_forecast_errors(&designs.benchmark, k0)?;
        let e2 = recursive_forecast_errors(&designs.large, k0)?;
        let fes = ForecastErrorSet::new(e1, e2, config.h, k0)?;
        let n = fes.len();
        let mut p_values = Vec::new();
        let mut statistics = Vec::new();
        let mut mses = (0.0, 0.0);
        for &mu0 in &config.mu0_list {
            let r = encompassing_test(&fes, &SplitSpec::new(mu0, n)?, &config.hac)?;
            p_values.push((mu0, r.p_value));
            statistics.push((mu0, r.statistic));
            mses = (r.mse1, r.mse2);
        }
        // First target dated at series position start + k0 − 1 + h.
        let first = range.start + designs.start + k0 - 1 + config.h;
        Ok(CountryResult {
            country: code.clone(),
            rmse_ratio: (mses.1 / mses.0).sqrt(),
            p_values,
            statistics,
            selected_lag: p1,
            n_forecasts: n,
            first_target: panel.date(first),
            last_target: panel.date(range.end - 1),
        })
    };
    inner().map_err(|e| e.context(format!("country {code}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountryOutcome {
    pub country: String,
    #[serde(flatten)]
    pub result: Option<CountryResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: CountryStudyConfig,
    pub countries: Vec<CountryOutcome>,
}

/// Runs every country; a failing country is reported inline.
pub fn run_study(panel: &InflationPanel, config: &CountryStudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let shared = if config.exclude_own {
        None
    } else {
        Some(global_inflation(panel)?)
    };
    let work = |c: usize| -> CountryOutcome {
        let outcome = match &shared {
            Some(g) => country_encompassing(panel, c, g, config),
            None => global_inflation_excluding(panel, Some(c))
                .map_err(|e| e.context(format!("country {}", panel.countries()[c])))
                .and_then(|g| country_encompassing(panel, c, &g, config)),
        };
        match outcome {
            Ok(r) => CountryOutcome {
                country: r.country.clone(),
                result: Some(r),
                error: None,
            },
            Err(e) => CountryOutcome {
                country: panel.countries()[c].clone(),
                result: None,
                error: Some(e.to_string()),
            },
        }
    };
    #[cfg(feature = "parallel")]
    let countries = {
        use rayon::prelude::*;
        (0..panel.countries().len())
            .into_par_iter()
            .map(work)
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let countries = (0..panel.countries().len()).map(work).collect();
    Ok(StudyReport {
        config: config.clone(),
        countries,
    })
}

/// Significance level below which a p-value is highlighted.
pub const HIGHLIGHT_LEVEL: f64 = 0.10;

pub fn render_study(report: &StudyReport, format: ReportFormat) -> Result<String> {
    let mu0s = &report.config.mu0_list;
    match format {
        ReportFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(report).map_err(|e| EncError::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["country".to_string(), "rmse_ratio".to_string()];
            header.extend(mu0s.iter().map(|m| format!("p_mu0_{m}")));
            header.extend(mu0s.iter().map(|m| format!("stat_mu0_{m}")));
            header.extend(
                [
                    "selected_lag",
                    "n_forecasts",
                    "first_target",
                    "last_target",
                    "error",
                ]
                .map(String::from),
            );
            w.write_record(&header)
                .map_err(|e| EncError::Io(e.to_string()))?;
            for row in &report.countries {
                let mut rec = vec![row.country.clone()];
                match &row.result {
                    Some(r) => {
                        rec.push(r.rmse_ratio.to_string());
                        rec.extend(r.p_values.iter().map(|(_, p)| p.to_string()));
                        rec.extend(r.statistics.iter().map(|(_, s)| s.to_string()));
                        rec.push(r.selected_lag.to_string());
                        rec.push(r.n_forecasts.to_string());
                        rec.push(r.first_target.to_string());
                        rec.push(r.last_target.to_string());
                        rec.push(String::new());
                    }
                    None => {
                        rec.extend(std::iter::repeat_n(String::new(), 1 + 2 * mu0s.len() + 4));
                        rec.push(row.error.clone().unwrap_or_default());
                    }
                }
                w.write_record(&rec)
                    .map_err(|e| EncError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| EncError::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| EncError::Io(e.to_string()))
        }
        ReportFormat::Markdown => {
            let bold = |text: String, on: bool| if on { format!("**{text}**") } else { text };
            let mut out = String::new();
            let _ = write!(out, "| country | RMSE ratio |");
            for m in mu0s {
                let _ = write!(out, " p (mu0 = {m:.2}) |");
            }
            let _ = writeln!(out, " p1 | n |");
            let _ = writeln!(out, "|---|---:|{}---:|---:|", "---:|".repeat(mu0s.len()));
            for row in &report.countries {
                match &row.result {
                    Some(r) => {
                        let _ = write!(
                            out,
                            "| {} | {} |",
                            r.country,
                            bold(format!("{:.3}", r.rmse_ratio), r.rmse_ratio < 1.0)
                        );
                        for (_, p) in &r.p_values {
                            let _ =
                                write!(out, " {} |", bold(format!("{p:.3}"), *p < HIGHLIGHT_LEVEL));
                        }
                        let _ = writeln!(out, " {} | {} |", r.selected_lag, r.n_forecasts);
                    }
                    None => {
                        let _ = writeln!(
                            out,
                            "| {} | failed: {} |{} | |",
                            row.country,
                            row.error.as_deref().unwrap_or("unknown error"),
                            " |".repeat(mu0s.len())
                        );
                    }
                }
            }
            let _ = writeln!(
                out,
                "\nh = {}, pi0 = {}, p2 = {}, BIC p_max = {}. Bold: RMSE ratio below 1 or p-value below {HIGHLIGHT_LEVEL}.",
                report.config.h, report.config.pi0, report.config.p2, report.config.p_max
            );
            Ok(out)
        }
    }
}

/// Parameters of a simulated price panel. Country 0 is the target: its
/// quarterly inflation is an AR(1) that loads `target_loading` on last
/// quarter's common factor; the other countries load one-for-one on the
/// current factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanelSpec {
    pub countries: usize,
    pub periods: usize,
    pub start: Quarter,
    pub mean_inflation: f64,
    pub own_rho: f64,
    pub factor_rho: f64,
    pub target_loading: f64,
    pub noise_sd: f64,
    pub burn_in: usize,
}

impl Default for SyntheticPanelSpec {
    fn default() -> Self {
        Self {
            countries: 6,
            periods: 216,
            start: Quarter { year: 1970, q: 1 },
            mean_inflation: 4.0,
            own_rho: 0.5,
            factor_rho: 0.8,
            target_loading: 0.0,
            noise_sd: 2.0,
            burn_in: 100,
        }
    }
}

pub fn synthetic_panel(spec: &SyntheticPanelSpec, stream: RngStream) -> Result<InflationPanel> {
    if spec.countries < 2 || spec.periods < 20 {
        return Err(EncError::InvalidSpec(
            "synthetic panel needs 2 countries and 20 quarters".into(),
        ));
    }
    let mut rng = stream.rng();
    let mut z = move || -> f64 { rng.sample(StandardNormal) };
    let mut factor = 0.0;
    let mut own = vec![0.0; spec.countries];
    let mut log_p = vec![100f64.ln(); spec.countries];
    let mut prices = vec![Vec::with_capacity(spec.periods); spec.countries];
    for t in 0..spec.burn_in + spec.periods {
        let lagged = factor;
        factor = spec.factor_rho * factor + spec.noise_sd * z();
        for c in 0..spec.countries {
            own[c] = spec.own_rho * own[c] + spec.noise_sd * z();
            let common = if c == 0 {
                spec.target_loading * lagged
            } else {
                factor
            };
            let pi1 = spec.mean_inflation + own[c] + common;
            log_p[c] += pi1 / 400.0;
            if t >= spec.burn_in {
                prices[c].push(Some(log_p[c].exp()));
            }
        }
    }
    let codes = (0..spec.countries).map(|c| format!("c{c:02}")).collect();
    InflationPanel::new(codes, spec.start, prices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Quarter {
        s.parse().unwrap()
    }

    fn panel_from(prices: Vec<Vec<f64>>) -> InflationPanel {
        let codes = (0..prices.len()).map(|c| format!("k{c}")).collect();
        let prices = prices
            .into_iter()
            .map(|p| p.into_iter().map(Some).collect())
            .collect();
        InflationPanel::new(codes, q("2000-Q1"), prices).unwrap()
    }

    #[test]
    fn quarter_parsing_and_arithmetic() {
        assert_eq!(q("1999-Q4"), Quarter { year: 1999, q: 4 });
        assert_eq!(q("1999Q4"), q("1999-Q4"));
        assert_eq!(q("1999-Q4").offset(1).to_string(), "2000-Q1");
        assert_eq!(q("2000-Q1").offset(-5).to_string(), "1998-Q4");
        for bad in ["1999-Q5", "1999-Q0", "99-Q1", "1999-4", "1999-Qx", ""] {
            assert!(bad.parse::<Quarter>().is_err(), "{bad}");
        }
    }

    #[test]
    fn annualized_examples() {
        let flat = annualized_inflation(&[5.0; 10], 4).unwrap();
        assert!(flat[..4].iter().all(Option::is_none));
        assert!(flat[4..].iter().all(|v| *v == Some(0.0)));
        let p = [1.0, 1.1, 1.2, 1.3, std::f64::consts::E];
        let v = annualized_inflation(&p, 4).unwrap();
        assert!((v[4].unwrap() - 100.0).abs() < 1e-12);
        let one = annualized_inflation(&p, 1).unwrap();
        assert_eq!(one[2], Some(400.0 * (1.2f64 / 1.1).ln()));
        assert!(matches!(
            annualized_inflation(&[1.0, -1.0], 1),
            Err(EncError::NonPositivePrice(1))
        ));
        assert!(annualized_inflation(&[1.0], 0).is_err());
    }

    #[test]
    fn global_inflation_examples() {
        let p = vec![100.0, 101.0, 103.0, 102.5, 104.0];
        let own = annualized_inflation(&p, 1).unwrap();
        let close = |g: Vec<Option<f64>>| {
            g.iter().zip(&own).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (a, b) => a == b,
            })
        };
        assert!(close(
            global_inflation(&panel_from(vec![p.clone()])).unwrap()
        ));

        let up: Vec<f64> = (0..5).map(|t| (0.005 * t as f64).exp()).collect();
        let down: Vec<f64> = (0..5).map(|t| (-0.005 * t as f64).exp()).collect();
        let g = global_inflation(&panel_from(vec![up, down])).unwrap();
        assert_eq!(g[0], None);
        assert!(g[1..].iter().all(|v| v.unwrap().abs() < 1e-12));

        let twins = panel_from(vec![p.clone(), p.clone(), p.clone()]);
        assert!(close(global_inflation(&twins).unwrap()));
    }

    #[test]
    fn global_inflation_interior_gap() {
        let a = vec![Some(1.0), Some(1.1), Some(1.2), None, None, None, None];
        let b = vec![None, None, None, None, Some(1.0), Some(1.1), Some(1.2)];
        let panel =
            InflationPanel::new(vec!["a".into(), "b".into()], q("2000-Q1"), vec![a, b]).unwrap();
        match global_inflation(&panel) {
            Err(EncError::EmptyQuarter(date)) => assert_eq!(date, "2000-Q4"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn longest_block_selection() {
        let s = [
            Some(1.0),
            None,
            Some(1.0),
            Some(1.0),
            Some(1.0),
            None,
            Some(1.0),
        ];
        assert_eq!(longest_block(&s), 2..5);
        assert_eq!(longest_block(&[Some(1.0); 3]), 0..3);
        assert_eq!(longest_block(&[None, None]), 0..0);
    }

    fn csv_panel(rows: &[(&str, &str, &str)]) -> String {
        let mut s = String::from("country,date,hcpi\n");
        for (c, d, p) in rows {
            s.push_str(&format!("{c},{d},{p}\n"));
        }
        s
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = csv_panel(&[("a", "2000-Q1", "1.0"), ("a", "2000-Q2", "-1.0")]);
        match parse_panel(&text, &PanelFilter::default(), 1) {
            Err(EncError::Parse(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = csv_panel(&[("a", "2000-Q1", "1.0"), ("a", "2000-Q1", "1.0")]);
        assert!(matches!(
            parse_panel(&text, &PanelFilter::default(), 1),
            Err(EncError::Parse(_))
        ));
        let text = csv_panel(&[("a", "2000-13", "1.0")]);
        match parse_panel(&text, &PanelFilter::default(), 1) {
            Err(EncError::Parse(m)) => assert!(m.contains("line 2")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_panel("country,when,hcpi\n", &PanelFilter::default(), 1),
            Err(EncError::Parse(_))
        ));
    }

    #[test]
    fn parse_coverage_rules() {
        let mut rows = Vec::new();
        let dates: Vec<String> = (0..10)
            .map(|t| q("2000-Q1").offset(t).to_string())
            .collect();
        for d in &dates {
            rows.push(("a", d.as_str(), "1.5"));
        }
        let one = csv_panel(&rows);
        assert!(matches!(
            parse_panel(&one, &PanelFilter::default(), 5),
            Err(EncError::Coverage(_))
        ));
        for d in &dates[..6] {
            rows.push(("b", d.as_str(), "2.0"));
        }
        let two = csv_panel(&rows);
        let panel = parse_panel(&two, &PanelFilter::default(), 5).unwrap();
        assert_eq!(panel.periods(), 10);
        assert_eq!(panel.used_range(1), 0..6);
        assert!(matches!(
            parse_panel(&two, &PanelFilter::default(), 7),
            Err(EncError::Coverage(_))
        ));
        let filter = PanelFilter {
            to: Some(q("2001-Q1")),
            ..PanelFilter::default()
        };
        assert_eq!(parse_panel(&two, &filter, 5).unwrap().periods(), 5);
        let filter = PanelFilter {
            countries: Some(vec!["a".into(), "z".into()]),
            ..PanelFilter::default()
        };
        assert!(matches!(
            parse_panel(&two, &filter, 5),
            Err(EncError::Coverage(_))
        ));
    }

    #[test]
    fn csv_writer_round_trip() {
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(1, 0)).unwrap();
        let text = write_panel_csv(&panel);
        assert_eq!(
            parse_panel(&text, &PanelFilter::default(), 80).unwrap(),
            panel
        );
    }

    #[test]
    fn designs_never_look_ahead() {
        // Each series holds its own time index, so a regressor's value is
        // the date it is measured at.
        let len = 60;
        let time: Vec<f64> = (0..len).map(|t| t as f64).collect();
        for (h, p1, p2) in [(1, 0, 0), (4, 2, 4), (8, 5, 1)] {
            let d = build_designs(&time, &time, &time, h, p1, p2).unwrap();
            for design in [&d.benchmark, &d.large] {
                for row in 0..design.rows() - h {
                    let target_date = design.targets()[row + h];
                    for &value in &design.row(row)[1..] {
                        assert!(value <= target_date - h as f64);
                    }
                }
            }
        }
    }

    #[test]
    fn large_design_nests_benchmark() {
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(2, 0)).unwrap();
        let prices = panel.used_prices(0);
        let target = unwrap_series(&annualized_inflation(&prices, 4).unwrap());
        let pi1 = unwrap_series(&annualized_inflation(&prices, 1).unwrap());
        let g = unwrap_series(&global_inflation(&panel).unwrap());
        let d = build_designs(&target, &pi1, &g, 4, 2, 4).unwrap();
        assert_eq!(d.benchmark.rows(), d.large.rows());
        assert_eq!(d.large.width(), d.benchmark.width() + 5);
        for t in 0..d.large.rows() {
            assert_eq!(&d.large.row(t)[..d.benchmark.width()], d.benchmark.row(t));
        }
        let truncated = DirectDesign::new(
            (0..d.large.rows())
                .flat_map(|t| d.large.row(t)[..d.benchmark.width()].to_vec())
                .collect(),
            d.benchmark.width(),
            d.large.targets().to_vec(),
            4,
        )
        .unwrap();
        let k0 = first_origin(d.benchmark.rows(), 0.25);
        assert_eq!(
            recursive_forecast_errors(&truncated, k0).unwrap(),
            recursive_forecast_errors(&d.benchmark, k0).unwrap()
        );
    }

    #[test]
    fn country_result_fields() {
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(3, 0)).unwrap();
        let g = global_inflation(&panel).unwrap();
        let cfg = CountryStudyConfig::default();
        let r = country_encompassing(&panel, 0, &g, &cfg).unwrap();
        assert_eq!(r.country, "c00");
        assert!(r.rmse_ratio > 0.0);
        assert_eq!(r.p_values.len(), 2);
        assert!(r.p_values.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
        assert!(r.selected_lag <= cfg.p_max);
        assert_eq!(r.last_target, panel.date(panel.periods() - 1));
        let span = r.last_target.index() - r.first_target.index() + 1;
        assert_eq!(span as usize, r.n_forecasts);
    }

    #[test]
    fn scale_invariance() {
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(4, 0)).unwrap();
        let scaled = panel
            .scale_country(0, 37.5)
            .unwrap()
            .scale_country(2, 0.01)
            .unwrap();
        let cfg = CountryStudyConfig::default();
        let a = run_study(&panel, &cfg).unwrap();
        let b = run_study(&scaled, &cfg).unwrap();
        for (x, y) in a.countries.iter().zip(&b.countries) {
            let (x, y) = (x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
            assert_eq!(x.selected_lag, y.selected_lag);
            assert!((x.rmse_ratio - y.rmse_ratio).abs() < 1e-10);
            for ((_, p), (_, p2)) in x.p_values.iter().zip(&y.p_values) {
                assert!((p - p2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_prices_fail_inline() {
        let mut panel =
            synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(5, 0)).unwrap();
        let flat = vec![Some(100.0); panel.periods()];
        let mut prices: Vec<Vec<Option<f64>>> = (0..panel.countries().len())
            .map(|c| panel.raw_prices(c).to_vec())
            .collect();
        prices[1] = flat;
        panel = InflationPanel::new(panel.countries().to_vec(), panel.start(), prices).unwrap();
        let report = run_study(&panel, &CountryStudyConfig::default()).unwrap();
        assert!(report.countries[1].result.is_none());
        assert!(report.countries[1].error.as_ref().unwrap().contains("c01"));
        assert!(report.countries[0].result.is_some());
        let md = render_study(&report, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| c01 | failed:"));
    }

    #[test]
    fn config_validation() {
        let cfg = CountryStudyConfig {
            mu0_list: vec![],
            ..CountryStudyConfig::default()
        };
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(6, 0)).unwrap();
        assert!(run_study(&panel, &cfg).is_err());
        let cfg = CountryStudyConfig {
            mu0_list: vec![0.4, 0.5],
            ..CountryStudyConfig::default()
        };
        assert!(matches!(
            run_study(&panel, &cfg),
            Err(EncError::InvalidSplit(_))
        ));
    }

    #[test]
    fn exclude_own_changes_predictor() {
        let panel = synthetic_panel(&SyntheticPanelSpec::default(), RngStream::new(7, 0)).unwrap();
        let with = run_study(&panel, &CountryStudyConfig::default()).unwrap();
        let without = run_study(
            &panel,
            &CountryStudyConfig {
                exclude_own: true,
                ..CountryStudyConfig::default()
            },
        )
        .unwrap();
        let a = with.countries[0].result.as_ref().unwrap();
        let b = without.countries[0].result.as_ref().unwrap();
        assert_eq!(a.selected_lag, b.selected_lag);
        assert_ne!(a.rmse_ratio, b.rmse_ratio);
    }

    #[test]
    fn strong_global_loading_is_detected() {
        let spec = SyntheticPanelSpec {
            target_loading: 1.5,
            ..SyntheticPanelSpec::default()
        };
        let cfg = CountryStudyConfig::default();
        let mut hits = 0;
        let mut ratios_below_one = 0;
        for r in 0..40 {
            let panel = synthetic_panel(&spec, RngStream::new(8, r)).unwrap();
            let g = global_inflation(&panel).unwrap();
            let res = country_encompassing(&panel, 0, &g, &cfg).unwrap();
            if res.p_values[1].1 < 0.01 {
                hits += 1;
            }
            if res.rmse_ratio < 1.0 {
                ratios_below_one += 1;
            }
        }
        assert!(hits >= 30, "p < 0.01 in {hits}/40 panels");
        assert!(
            ratios_below_one >= 36,
            "ratio < 1 in {ratios_below_one}/40 panels"
        );
    }
}
