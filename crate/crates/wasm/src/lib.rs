//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string; the page
//! parses it. The computations live in ordinary functions so they can be
//! tested natively.

use encompass_core::dgp::{Dgp1Spec, RngStream};
use encompass_core::local_power::LocalPowerInput;
use encompass_core::monte_carlo::{
    collect_statistics, simulate_forecast_errors, DgpChoice, McCell,
};
use encompass_core::{
    encompassing_test, local_power_stationary, normal, EncompassingResult, Result, SplitSpec,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Histogram range for null statistics.
const HIST_RANGE: (f64, f64) = (-4.0, 4.0);

#[derive(Debug, Serialize)]
pub struct PowerCurve {
    pub mu0: Vec<f64>,
    pub drift: Vec<f64>,
    pub power: Vec<f64>,
}

/// Drift and power for one benchmark regressor and one extra predictor with
/// second moments `q11`, `q12`, `q22`, swept over `points` split fractions
/// from 0.10 to 0.48.
#[allow(clippy::too_many_arguments)]
pub fn power_curve(
    c: f64,
    q11: f64,
    q12: f64,
    q22: f64,
    phi2: f64,
    pi0: f64,
    level: f64,
    points: usize,
) -> Result<PowerCurve> {
    let points = points.max(2);
    let mut curve = PowerCurve {
        mu0: Vec::with_capacity(points),
        drift: Vec::with_capacity(points),
        power: Vec::with_capacity(points),
    };
    for i in 0..points {
        let mu0 = 0.10 + 0.38 * i as f64 / (points - 1) as f64;
        let lp = local_power_stationary(&LocalPowerInput {
            c: vec![c],
            m11: vec![vec![q11]],
            m12: vec![vec![q12]],
            m21: vec![vec![q12]],
            m22: vec![vec![q22]],
            phi2,
            mu0,
            pi0,
            level,
        })?;
        curve.mu0.push(mu0);
        curve.drift.push(lp.drift);
        curve.power.push(lp.power);
    }
    Ok(curve)
}

#[derive(Debug, Serialize)]
pub struct NullSummary {
    pub statistics: usize,
    pub failures: usize,
    pub rejection_rate: f64,
    pub ks_distance: f64,
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
    pub normal_density: Vec<f64>,
}

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

/// Simulated statistics for the first design with uncorrelated shocks.
pub fn null_summary(
    t: usize,
    h: usize,
    rho: f64,
    mu0: f64,
    reps: usize,
    seed: u64,
    bins: usize,
) -> Result<NullSummary> {
    let cell = dgp1_cell(t, h, rho, 0.0, mu0);
    let stats: Vec<f64> = collect_statistics(&cell, reps, seed)?
        .into_iter()
        .flatten()
        .collect();
    let bins = bins.clamp(4, 200);
    let (lo, hi) = HIST_RANGE;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in &stats {
        if (lo..hi).contains(&s) {
            counts[((s - lo) / width) as usize] += 1;
        }
    }
    let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let total = stats.len().max(1) as f64;
    let critical = cell.critical_value();
    Ok(NullSummary {
        statistics: stats.len(),
        failures: reps - stats.len(),
        rejection_rate: stats.iter().filter(|&&s| s > critical).count() as f64 / total,
        ks_distance: normal::ks_distance(&stats),
        density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        normal_density: bin_edges
            .windows(2)
            .map(|e| (normal::cdf(e[1]) - normal::cdf(e[0])) / width)
            .collect(),
        bin_edges,
    })
}

/// One simulated sample and its test result.
pub fn single_test(
    t: usize,
    h: usize,
    rho: f64,
    beta2: f64,
    mu0: f64,
    seed: u64,
) -> Result<EncompassingResult> {
    let cell = dgp1_cell(t, h, rho, beta2, mu0);
    cell.validate()?;
    let fes = simulate_forecast_errors(&cell, RngStream::new(seed, 0))?;
    encompassing_test(&fes, &SplitSpec::new(mu0, fes.len())?, &cell.hac)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = powerCurve)]
#[allow(clippy::too_many_arguments)]
pub fn power_curve_js(
    c: f64,
    q11: f64,
    q12: f64,
    q22: f64,
    phi2: f64,
    pi0: f64,
    level: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    to_js(power_curve(c, q11, q12, q22, phi2, pi0, level, points))
}

#[wasm_bindgen(js_name = nullSummary)]
pub fn null_summary_js(
    t: usize,
    h: usize,
    rho: f64,
    mu0: f64,
    reps: usize,
    seed: u32,
    bins: usize,
) -> std::result::Result<String, JsError> {
    to_js(null_summary(t, h, rho, mu0, reps, seed as u64, bins))
}

#[wasm_bindgen(js_name = singleTest)]
pub fn single_test_js(
    t: usize,
    h: usize,
    rho: f64,
    beta2: f64,
    mu0: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(single_test(t, h, rho, beta2, mu0, seed as u64))
}
