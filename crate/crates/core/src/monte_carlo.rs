//! Replication engine for empirical size and power studies.
//!
//! Replication `r` of cell `i` draws from the keyed stream
//! `(mix_seed(base_seed, i), r)`, so results do not depend on scheduling.
//! Aggregation uses integer counts only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dgp::{
    estimate_factor, mix_seed, simulate_dgp1, simulate_dgp2, Dgp1Spec, Dgp2Spec, RngStream,
    SIGMA_CORRELATED, SIGMA_UNCORRELATED,
};
use crate::enc_test::{encompassing_test, validate_mu0, ForecastErrorSet, HacConfig, SplitSpec};
use crate::error::{EncError, Result};
use crate::normal;
use crate::regression::{recursive_forecast_errors, DirectDesign};

/// Failure share at or above which a cell is flagged unreliable.
pub const RELIABILITY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dgp", rename_all = "lowercase")]
pub enum DgpChoice {
    Dgp1(Dgp1Spec),
    Dgp2(Dgp2Spec),
}

impl DgpChoice {
    pub fn periods(&self) -> usize {
        match self {
            DgpChoice::Dgp1(s) => s.t,
            DgpChoice::Dgp2(s) => s.t,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            DgpChoice::Dgp1(s) => s.h,
            DgpChoice::Dgp2(s) => s.h,
        }
    }

    pub fn beta2(&self) -> f64 {
        match self {
            DgpChoice::Dgp1(s) => s.beta2,
            DgpChoice::Dgp2(s) => s.beta2,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DgpChoice::Dgp1(s) => s.validate(),
            DgpChoice::Dgp2(s) => s.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub dgp: DgpChoice,
    pub pi0: f64,
    pub mu0: f64,
    pub hac: HacConfig,
    pub level: f64,
    pub label: String,
}

impl McCell {
    /// A cell with the default `π0 = 0.25`, 10% level and automatic bandwidth.
    pub fn new(dgp: DgpChoice, mu0: f64) -> Self {
        let label = default_label(&dgp, mu0);
        Self {
            dgp,
            pi0: 0.25,
            mu0,
            hac: HacConfig::default(),
            level: 0.10,
            label,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "pi0 = {} must lie in (0, 1)",
                self.pi0
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "level = {} must lie in (0, 1)",
                self.level
            )));
        }
        validate_mu0(self.mu0)?;
        self.dgp.validate()?;
        let k0 = first_origin(self.dgp.periods(), self.pi0);
        let n = (self.dgp.periods() + 1).saturating_sub(self.dgp.horizon() + k0);
        SplitSpec::new(self.mu0, n)?;
        self.hac.resolve(n)?;
        Ok(())
    }

    pub fn critical_value(&self) -> f64 {
        normal::quantile(1.0 - self.level)
    }
}

/// Human-readable identifier built from the cell's grid coordinates.
pub fn default_label(dgp: &DgpChoice, mu0: f64) -> String {
    match dgp {
        DgpChoice::Dgp1(s) => format!(
            "dgp1/{}/h={}/T={}/rho={}/beta2={}/mu0={}",
            sigma_label(&s.sigma),
            s.h,
            s.t,
            s.rho,
            s.beta2,
            mu0
        ),
        DgpChoice::Dgp2(s) => format!(
            "dgp2/h={}/T={}/N={}/beta2={}/mu0={}",
            s.h, s.t, s.n_cross, s.beta2, mu0
        ),
    }
}

pub fn sigma_label(sigma: &[[f64; 2]; 2]) -> &'static str {
    if *sigma == SIGMA_UNCORRELATED {
        "sigma1"
    } else if *sigma == SIGMA_CORRELATED {
        "sigma2"
    } else {
        "custom"
    }
}

/// First forecast origin `k0 = ⌊T π0⌋` (1-based).
pub fn first_origin(periods: usize, pi0: f64) -> usize {
    (periods as f64 * pi0 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub reject: bool,
    pub statistic: f64,
}

/// Nested forecast errors: benchmark `[1, y_t]`, large `[1, y_t, z_t]` with
/// `z = x` (design 1) or the estimated factor (design 2).
pub fn simulate_forecast_errors(cell: &McCell, stream: RngStream) -> Result<ForecastErrorSet> {
    let (y, extra, h) = match &cell.dgp {
        DgpChoice::Dgp1(spec) => {
            let s = simulate_dgp1(spec, stream)?;
            (s.y, s.x, spec.h)
        }
        DgpChoice::Dgp2(spec) => {
            let s = simulate_dgp2(spec, stream)?;
            let f = estimate_factor(&s.panel)?;
            (s.y, f, spec.h)
        }
    };
    let k0 = first_origin(y.len(), cell.pi0);
    let small = DirectDesign::from_predictors(&y, &[&y], h)?;
    let large = small.augmented(&[&extra])?;
    let e1 = recursive_forecast_errors(&small, k0)?;
    let e2 = recursive_forecast_errors(&large, k0)?;
    ForecastErrorSet::new(e1, e2, h, k0)
}

/// One replication on stream `(base_seed, rep_id)`.
pub fn run_replication(cell: &McCell, rep_id: u64, base_seed: u64) -> Result<Replication> {
    let fes = simulate_forecast_errors(cell, RngStream::new(base_seed, rep_id))?;
    let split = SplitSpec::new(cell.mu0, fes.len())?;
    let result = encompassing_test(&fes, &split, &cell.hac)?;
    Ok(Replication {
        reject: result.statistic > cell.critical_value(),
        statistic: result.statistic,
    })
}

/// Seed driving every replication of the cell at `cell_index`.
pub fn cell_seed(base_seed: u64, cell_index: usize) -> u64 {
    mix_seed(base_seed, cell_index as u64)
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..count).map(f).collect()
}

/// Null or alternative statistics for one cell; `None` marks a failed
/// replication.
pub fn collect_statistics(cell: &McCell, reps: usize, seed: u64) -> Result<Vec<Option<f64>>> {
    cell.validate()?;
    Ok(map_indices(reps, |r| {
        run_replication(cell, r as u64, seed)
            .ok()
            .map(|rep| rep.statistic)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub reps: usize,
    pub rejection_frequency: f64,
    pub mc_se: f64,
    pub failures: usize,
    pub rejections: usize,
    pub unreliable: bool,
    pub dgp: String,
    pub sigma: Option<String>,
    pub t: usize,
    pub h: usize,
    pub rho: Option<f64>,
    pub n_cross: Option<usize>,
    pub beta2: f64,
    pub mu0: f64,
    pub level: f64,
}

impl CellReport {
    fn from_counts(cell: &McCell, reps: usize, rejections: usize, failures: usize) -> Self {
        let completed = reps - failures;
        let freq = if completed == 0 {
            f64::NAN
        } else {
            rejections as f64 / completed as f64
        };
        let mc_se = (freq * (1.0 - freq) / completed as f64).sqrt();
        let (dgp, sigma, rho, n_cross) = match &cell.dgp {
            DgpChoice::Dgp1(s) => (
                "dgp1",
                Some(sigma_label(&s.sigma).to_string()),
                Some(s.rho),
                None,
            ),
            DgpChoice::Dgp2(s) => ("dgp2", None, None, Some(s.n_cross)),
        };
        Self {
            label: cell.label.clone(),
            reps,
            rejection_frequency: freq,
            mc_se,
            failures,
            rejections,
            unreliable: failures as f64 >= RELIABILITY_THRESHOLD * reps as f64,
            dgp: dgp.into(),
            sigma,
            t: cell.dgp.periods(),
            h: cell.dgp.horizon(),
            rho,
            n_cross,
            beta2: cell.dgp.beta2(),
            mu0: cell.mu0,
            level: cell.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub cells: Vec<CellReport>,
}

impl McReport {
    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }
}

fn run_experiment(cells: &[McCell], reps: usize, base_seed: u64) -> Result<McReport> {
    if reps == 0 {
        return Err(EncError::InvalidSpec("reps must be positive".into()));
    }
    for cell in cells {
        cell.validate()
            .map_err(|e| e.context(format!("cell {}", cell.label)))?;
    }
    let seeds: Vec<u64> = (0..cells.len()).map(|i| cell_seed(base_seed, i)).collect();
    let outcomes = map_indices(cells.len() * reps, |job| {
        let (i, r) = (job / reps, job % reps);
        run_replication(&cells[i], r as u64, seeds[i])
            .ok()
            .map(|rep| rep.reject)
    });
    let report = cells
        .iter()
        .zip(outcomes.chunks(reps))
        .map(|(cell, chunk)| {
            let failures = chunk.iter().filter(|o| o.is_none()).count();
            let rejections = chunk.iter().filter(|o| **o == Some(true)).count();
            CellReport::from_counts(cell, reps, rejections, failures)
        })
        .collect();
    Ok(McReport { cells: report })
}

/// Rejection frequencies under the null; every cell must have `β₂ = 0`.
pub fn run_size_experiment(cells: &[McCell], reps: usize, base_seed: u64) -> Result<McReport> {
    if let Some(cell) = cells.iter().find(|c| c.dgp.beta2() != 0.0) {
        return Err(EncError::InvalidSpec(format!(
            "size cell {} has beta2 = {}; size experiments require beta2 = 0",
            cell.label,
            cell.dgp.beta2()
        )));
    }
    run_experiment(cells, reps, base_seed)
}

/// Rejection frequencies under alternatives. `β₂ = 0` cells are accepted as
/// embedded size checks.
pub fn run_power_experiment(cells: &[McCell], reps: usize, base_seed: u64) -> Result<McReport> {
    run_experiment(cells, reps, base_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = EncError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(EncError::InvalidSpec(format!("unknown format `{other}`"))),
        }
    }
}

pub fn render_report(report: &McReport, format: ReportFormat) -> Result<String> {
    if report.cells.is_empty() {
        return Err(EncError::EmptyInput("report has no cells"));
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for cell in &report.cells {
                w.serialize(cell).map_err(|e| EncError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| EncError::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| EncError::Io(e.to_string()))
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report.cells)
                .map_err(|e| EncError::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

pub fn parse_report_csv(text: &str) -> Result<McReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let cells = reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| EncError::Parse(format!("report row {}: {e}", i + 1))))
        .collect::<Result<Vec<CellReport>>>()?;
    Ok(McReport { cells })
}

/// Sortable wrapper so float grid coordinates can key ordered maps.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn fmt_coord(v: f64) -> String {
    format!("{v}")
}

/// One pivot table per (design, σ, h): rows are T (or β₂ when it varies),
/// columns are ρ (or N) crossed with μ0.
fn render_markdown(report: &McReport) -> String {
    type Group = (String, Option<String>, usize);
    let mut groups: BTreeMap<Group, Vec<&CellReport>> = BTreeMap::new();
    for cell in &report.cells {
        groups
            .entry((cell.dgp.clone(), cell.sigma.clone(), cell.h))
            .or_default()
            .push(cell);
    }
    let mut out = String::new();
    for ((dgp, sigma, h), cells) in groups {
        let by_beta = cells
            .iter()
            .map(|c| Key(c.beta2))
            .collect::<BTreeSet<_>>()
            .len()
            > 1;
        let col_name = if dgp == "dgp2" { "N" } else { "rho" };
        let col_of = |c: &CellReport| match (c.rho, c.n_cross) {
            (Some(r), _) => r,
            (None, Some(n)) => n as f64,
            (None, None) => f64::NAN,
        };
        let row_of = |c: &CellReport| if by_beta { c.beta2 } else { c.t as f64 };
        let columns: BTreeSet<(Key, Key)> =
            cells.iter().map(|c| (Key(col_of(c)), Key(c.mu0))).collect();
        let rows: BTreeSet<Key> = cells.iter().map(|c| Key(row_of(c))).collect();
        // Extra coordinates that do not appear in the pivot are kept apart so
        // no two cells share a table slot.
        let mut slots: BTreeMap<(Key, Key, Key), Vec<&CellReport>> = BTreeMap::new();
        for c in &cells {
            slots
                .entry((Key(row_of(c)), Key(col_of(c)), Key(c.mu0)))
                .or_default()
                .push(c);
        }
        let fixed = if by_beta {
            let ts: BTreeSet<usize> = cells.iter().map(|c| c.t).collect();
            format!(
                "T = {}",
                ts.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        } else {
            let bs: BTreeSet<Key> = cells.iter().map(|c| Key(c.beta2)).collect();
            format!(
                "beta2 = {}",
                bs.iter()
                    .map(|b| fmt_coord(b.0))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        };
        let _ = writeln!(
            out,
            "### {dgp}{} h = {h} ({fixed})\n",
            sigma
                .as_deref()
                .map(|s| format!(" {s}"))
                .unwrap_or_default()
        );
        let row_name = if by_beta { "beta2" } else { "T" };
        let mut header = format!("| {row_name} |");
        let mut rule = String::from("|---|");
        for (col, mu0) in &columns {
            let _ = write!(
                header,
                " {col_name}={} mu0={} |",
                fmt_coord(col.0),
                fmt_coord(mu0.0)
            );
            rule.push_str("---:|");
        }
        let _ = writeln!(out, "{header}\n{rule}");
        for row in &rows {
            let mut line = format!("| {} |", fmt_coord(row.0));
            for (col, mu0) in &columns {
                let cell_text = match slots.get(&(*row, *col, *mu0)) {
                    Some(found) => found
                        .iter()
                        .map(|c| {
                            format!(
                                "{:.3}{}",
                                c.rejection_frequency,
                                if c.unreliable { "*" } else { "" }
                            )
                        })
                        .collect::<Vec<_>>()
                        .join(" / "),
                    None => String::new(),
                };
                let _ = write!(line, " {cell_text} |");
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');
    }
    let reps: BTreeSet<usize> = report.cells.iter().map(|c| c.reps).collect();
    let _ = writeln!(
        out,
        "Replications per cell: {}. `*` marks cells with at least {}% failed replications.",
        reps.iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        RELIABILITY_THRESHOLD * 100.0
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dgp1_cell(t: usize, h: usize, rho: f64, beta2: f64, mu0: f64) -> McCell {
        McCell::new(
            DgpChoice::Dgp1(Dgp1Spec {
                t,
                h,
                rho,
                beta2,
                ..Dgp1Spec::default()
            }),
            mu0,
        )
    }

    #[test]
    fn first_origin_matches_effective_sample() {
        for (t, n) in [(250, 188), (500, 375), (1000, 750)] {
            let k0 = first_origin(t, 0.25);
            assert_eq!(t - 1 - k0 + 1, n);
        }
        assert_eq!(first_origin(100, 0.3), 30);
    }

    #[test]
    fn replication_is_reproducible() {
        let cell = dgp1_cell(300, 1, 0.25, 0.0, 0.45);
        let a = run_replication(&cell, 4, 11).unwrap();
        let b = run_replication(&cell, 4, 11).unwrap();
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        let c = run_replication(&cell, 5, 11).unwrap();
        assert_ne!(a.statistic, c.statistic);
    }

    #[test]
    fn forecast_error_count() {
        let cell = dgp1_cell(200, 3, 0.5, 0.0, 0.4);
        let fes = simulate_forecast_errors(&cell, RngStream::new(1, 1)).unwrap();
        assert_eq!(fes.len(), 200 - 3 - 50 + 1);
        assert_eq!(fes.first_origin(), 50);
    }

    #[test]
    fn factor_cell_runs() {
        let cell = McCell::new(
            DgpChoice::Dgp2(Dgp2Spec {
                t: 120,
                n_cross: 20,
                ..Dgp2Spec::default()
            }),
            0.4,
        );
        let r = run_replication(&cell, 0, 3).unwrap();
        assert!(r.statistic.is_finite());
    }

    #[test]
    fn single_rep_frequency_is_binary() {
        let cells = [dgp1_cell(200, 1, 0.25, 0.0, 0.45)];
        let report = run_size_experiment(&cells, 1, 9).unwrap();
        let f = report.cells[0].rejection_frequency;
        assert!(f == 0.0 || f == 1.0);
    }

    #[test]
    fn size_experiment_requires_null() {
        let cells = [dgp1_cell(200, 1, 0.25, 0.2, 0.45)];
        assert!(matches!(
            run_size_experiment(&cells, 10, 1),
            Err(EncError::InvalidSpec(_))
        ));
        assert!(run_power_experiment(&cells, 10, 1).is_ok());
    }

    #[test]
    fn invalid_cell_rejected_up_front() {
        let cells = [dgp1_cell(200, 1, 0.25, 0.0, 0.5)];
        let err = run_size_experiment(&cells, 10, 1).unwrap_err();
        assert!(matches!(err.root(), EncError::InvalidSplit(_)));
    }

    #[test]
    fn report_counts_and_se() {
        let cell = dgp1_cell(200, 1, 0.25, 0.0, 0.45);
        let r = CellReport::from_counts(&cell, 200, 20, 0);
        assert_eq!(r.rejection_frequency, 0.1);
        assert!((r.mc_se - (0.09f64 / 200.0).sqrt()).abs() < 1e-15);
        assert!(!r.unreliable);
        let r = CellReport::from_counts(&cell, 200, 20, 2);
        assert!(r.unreliable);
        assert_eq!(r.rejection_frequency, 20.0 / 198.0);
    }

    #[test]
    fn experiment_matches_direct_replications() {
        let cells = [
            dgp1_cell(150, 1, 0.25, 0.0, 0.45),
            dgp1_cell(150, 2, 0.9, 0.0, 0.30),
        ];
        let report = run_size_experiment(&cells, 30, 42).unwrap();
        for (i, cell) in cells.iter().enumerate() {
            let seed = cell_seed(42, i);
            let rejections = (0..30)
                .filter(|&r| {
                    run_replication(cell, r, seed)
                        .map(|x| x.reject)
                        .unwrap_or(false)
                })
                .count();
            assert_eq!(report.cells[i].rejections, rejections);
        }
    }

    #[test]
    fn csv_round_trip() {
        let cells = [
            dgp1_cell(150, 1, 0.25, 0.0, 0.45),
            dgp1_cell(150, 1, 0.9, 0.0, 0.45),
        ];
        let report = run_size_experiment(&cells, 20, 5).unwrap();
        let text = render_report(&report, ReportFormat::Csv).unwrap();
        assert!(text.starts_with("label,reps,rejection_frequency,mc_se,failures,"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_report_csv(&text).unwrap(), report);
    }

    #[test]
    fn empty_report_is_an_error() {
        let empty = McReport { cells: vec![] };
        for f in [
            ReportFormat::Csv,
            ReportFormat::Json,
            ReportFormat::Markdown,
        ] {
            assert!(render_report(&empty, f).is_err());
        }
    }

    #[test]
    fn markdown_pivot_layout() {
        let mut cells = Vec::new();
        for t in [250, 500] {
            for rho in [0.25, 0.9] {
                for mu0 in [0.3, 0.45] {
                    let c = dgp1_cell(t, 1, rho, 0.0, mu0);
                    cells.push(CellReport::from_counts(&c, 100, 10, 0));
                }
            }
        }
        let md = render_markdown(&McReport { cells });
        assert!(md.contains("### dgp1 sigma1 h = 1 (beta2 = 0)"));
        assert!(md.contains(
            "| T | rho=0.25 mu0=0.3 | rho=0.25 mu0=0.45 | rho=0.9 mu0=0.3 | rho=0.9 mu0=0.45 |"
        ));
        assert!(md.contains("| 250 | 0.100 | 0.100 | 0.100 | 0.100 |"));
        assert!(md.contains("| 500 |"));
    }
}
