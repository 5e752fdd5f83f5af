//! Simulation designs: a predictive regression with a persistent predictor,
//! a factor-augmented regression with a principal-components factor, and a
//! mildly integrated VAR.
//!
//! Every generator is a pure function of its spec and an [`RngStream`]. All
//! recursions start from zero and the first `burn_in` draws are discarded.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EncError, Result};

/// Keyed random stream: a ChaCha8 generator seeded from `base_seed` and
/// positioned on the independent keystream `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer, used to derive per-cell seeds from a base seed.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        ^ salt
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Innovation covariance Σ₁ (uncorrelated shocks).
pub const SIGMA_UNCORRELATED: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 0.25]];
/// Innovation covariance Σ₂ (shock correlation −0.8).
pub const SIGMA_CORRELATED: [[f64; 2]; 2] = [[1.0, -0.4], [-0.4, 0.25]];

/// `y_t = β₁ y_{t−h} + β₂ x_{t−h} + w_t`, `x_t = ρ x_{t−1} + v_t`,
/// `w_t = Σ_{j<h} θʲ ε_{t−j}`, `(ε, v) ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp1Spec {
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub theta: f64,
    pub sigma: [[f64; 2]; 2],
    pub t: usize,
    pub h: usize,
    pub burn_in: usize,
}

impl Default for Dgp1Spec {
    fn default() -> Self {
        Self {
            beta1: 0.3,
            beta2: 0.0,
            rho: 0.25,
            theta: 0.5,
            sigma: SIGMA_UNCORRELATED,
            t: 1000,
            h: 1,
            burn_in: 200,
        }
    }
}

impl Dgp1Spec {
    pub fn validate(&self) -> Result<()> {
        let s = self.sigma;
        if s[0][1] != s[1][0] {
            return Err(EncError::InvalidSpec("sigma must be symmetric".into()));
        }
        if !(s[0][0] > 0.0 && s[0][0] * s[1][1] - s[0][1] * s[1][0] > 0.0) {
            return Err(EncError::InvalidSpec(
                "sigma must be positive definite".into(),
            ));
        }
        if !(self.beta1.abs() < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "|beta1| = {} must be < 1",
                self.beta1.abs()
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "|rho| = {} must be < 1",
                self.rho.abs()
            )));
        }
        if !self.beta2.is_finite() || !self.theta.is_finite() {
            return Err(EncError::InvalidSpec(
                "beta2 and theta must be finite".into(),
            ));
        }
        if self.t < 50 {
            return Err(EncError::InvalidSpec(format!(
                "T = {} must be at least 50",
                self.t
            )));
        }
        if self.h == 0 || self.h >= self.t {
            return Err(EncError::InvalidSpec(format!(
                "h = {} out of range",
                self.h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dgp1Sample {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// The (ε, v) innovations behind the returned observations.
    pub shocks: Vec<[f64; 2]>,
}

/// `w_t = Σ_{j=0}^{h−1} θʲ e_{t−j}` with pre-sample shocks set to zero.
fn ma_errors(shocks: impl Iterator<Item = f64>, theta: f64, h: usize) -> Vec<f64> {
    let e: Vec<f64> = shocks.collect();
    let weights: Vec<f64> = (0..h).map(|j| theta.powi(j as i32)).collect();
    (0..e.len())
        .map(|t| {
            weights
                .iter()
                .enumerate()
                .take(t + 1)
                .map(|(j, w)| w * e[t - j])
                .sum()
        })
        .collect()
}

/// Direct h-step autoregression with one extra predictor; the first `h` values
/// of `y` are their MA errors.
fn direct_recursion(
    w: &[f64],
    drive: &[f64],
    intercept: f64,
    beta1: f64,
    beta2: f64,
    h: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; w.len()];
    for t in 0..w.len() {
        y[t] = if t < h {
            w[t]
        } else {
            intercept + beta1 * y[t - h] + beta2 * drive[t - h] + w[t]
        };
    }
    y
}

pub fn simulate_dgp1(spec: &Dgp1Spec, stream: RngStream) -> Result<Dgp1Sample> {
    spec.validate()?;
    let mut rng = stream.rng();
    let total = spec.burn_in + spec.t;
    let s = spec.sigma;
    let l11 = s[0][0].sqrt();
    let l21 = s[1][0] / l11;
    let l22 = (s[1][1] - l21 * l21).sqrt();

    let mut shocks = Vec::with_capacity(total);
    let mut x = vec![0.0; total];
    for t in 0..total {
        let z1 = normal(&mut rng);
        let z2 = normal(&mut rng);
        let eps = l11 * z1;
        let v = l21 * z1 + l22 * z2;
        shocks.push([eps, v]);
        x[t] = if t == 0 { v } else { spec.rho * x[t - 1] + v };
    }
    let w = ma_errors(shocks.iter().map(|s| s[0]), spec.theta, spec.h);
    let y = direct_recursion(&w, &x, 0.0, spec.beta1, spec.beta2, spec.h);
    let keep = spec.burn_in..total;
    Ok(Dgp1Sample {
        y: y[keep.clone()].to_vec(),
        x: x[keep.clone()].to_vec(),
        shocks: shocks[keep].to_vec(),
    })
}

/// Factor-augmented direct regression
/// `y_t = α + β₁ y_{t−h} + β₂ f_{t−h} + w_t` with panel `X_it = λ_i f_t + e_it`,
/// `f_t = α₁ f_{t−1} + u_t`, `e_it = ρ_i e_{i,t−1} + ε_it`, all innovations
/// standard normal and `λ_i ~ N(0, loading_std²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp2Spec {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub theta: f64,
    pub n_cross: usize,
    pub t: usize,
    pub h: usize,
    pub alpha1: f64,
    pub rho_idio: f64,
    pub loading_std: f64,
    pub burn_in: usize,
}

impl Default for Dgp2Spec {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta1: 0.3,
            beta2: 0.0,
            theta: 0.5,
            n_cross: 100,
            t: 250,
            h: 1,
            alpha1: 0.5,
            rho_idio: 0.5,
            loading_std: 1.0,
            burn_in: 200,
        }
    }
}

impl Dgp2Spec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1.abs() < 1.0) || !(self.rho_idio.abs() < 1.0) || !(self.beta1.abs() < 1.0) {
            return Err(EncError::InvalidSpec(
                "alpha1, rho_idio and beta1 must be below 1 in absolute value".into(),
            ));
        }
        if self.n_cross < 10 {
            return Err(EncError::InvalidSpec(format!(
                "N = {} must be at least 10",
                self.n_cross
            )));
        }
        if self.t < 50 {
            return Err(EncError::InvalidSpec(format!(
                "T = {} must be at least 50",
                self.t
            )));
        }
        if self.h == 0 || self.h >= self.t {
            return Err(EncError::InvalidSpec(format!(
                "h = {} out of range",
                self.h
            )));
        }
        if !(self.loading_std >= 0.0)
            || ![self.alpha, self.beta2, self.theta]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(EncError::InvalidSpec(
                "non-finite or negative DGP2 parameter".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dgp2Sample {
    pub y: Vec<f64>,
    /// `T × N` panel.
    pub panel: DMatrix<f64>,
    pub factor: Vec<f64>,
    pub loadings: Vec<f64>,
}

pub fn simulate_dgp2(spec: &Dgp2Spec, stream: RngStream) -> Result<Dgp2Sample> {
    spec.validate()?;
    let mut rng = stream.rng();
    let total = spec.burn_in + spec.t;
    let n = spec.n_cross;
    let loadings: Vec<f64> = (0..n)
        .map(|_| spec.loading_std * normal(&mut rng))
        .collect();

    let mut f = vec![0.0; total];
    let mut v = vec![0.0; total];
    let mut idio = vec![0.0; n];
    let mut panel = DMatrix::zeros(spec.t, n);
    for t in 0..total {
        let u = normal(&mut rng);
        v[t] = normal(&mut rng);
        f[t] = if t == 0 {
            u
        } else {
            spec.alpha1 * f[t - 1] + u
        };
        for (i, e) in idio.iter_mut().enumerate() {
            *e = spec.rho_idio * *e + normal(&mut rng);
            if t >= spec.burn_in {
                panel[(t - spec.burn_in, i)] = loadings[i] * f[t] + *e;
            }
        }
    }
    let w = ma_errors(v.into_iter(), spec.theta, spec.h);
    let y = direct_recursion(&w, &f, spec.alpha, spec.beta1, spec.beta2, spec.h);
    Ok(Dgp2Sample {
        y: y[spec.burn_in..].to_vec(),
        panel,
        factor: f[spec.burn_in..].to_vec(),
        loadings,
    })
}

/// Leading principal component of a `T × N` panel, scaled so that
/// `Σ f̂_t² / T = 1` and signed so that `Σ f̂_t X_{t,1} ≥ 0`.
///
/// Columns are demeaned first. The eigenproblem is solved on whichever of
/// `XX'` and `X'X` is smaller.
pub fn estimate_factor(panel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (t, n) = panel.shape();
    if t < 2 || n < 2 {
        return Err(EncError::InsufficientData(format!("panel is {t} x {n}")));
    }
    if panel.iter().any(|v| !v.is_finite()) {
        return Err(EncError::NonFinite("panel"));
    }
    let mut x = panel.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let (gram, time_side) = if t <= n {
        (&x * x.transpose(), true)
    } else {
        (x.transpose() * &x, false)
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let second = eig.eigenvalues[order[1]].max(0.0);
    if !(top > 0.0) || top - second <= 1e-10 * top {
        return Err(EncError::DegenerateSpectrum { top, second });
    }
    let leading = eig.eigenvectors.column(order[0]);
    let mut f: Vec<f64> = if time_side {
        leading.iter().copied().collect()
    } else {
        (&x * leading).iter().copied().collect()
    };
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = (t as f64).sqrt() / norm;
    let sign_ref: f64 = f.iter().zip(x.column(0).iter()).map(|(a, b)| a * b).sum();
    let sign = if sign_ref < 0.0 { -1.0 } else { 1.0 };
    for v in &mut f {
        *v *= scale * sign;
    }
    Ok(f)
}

/// Mildly integrated VAR `x_t = diag(1 − b_i / T^α) x_{t−1} + v_t`,
/// `v_t ~ N(0, innovation_cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dgp3Spec {
    pub b: Vec<f64>,
    pub alpha_exp: f64,
    pub innovation_cov: Vec<Vec<f64>>,
    pub t: usize,
    pub burn_in: usize,
}

impl Dgp3Spec {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn ar_coefficients(&self) -> Vec<f64> {
        let scale = (self.t as f64).powf(self.alpha_exp);
        self.b.iter().map(|b| 1.0 - b / scale).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if k == 0 {
            return Err(EncError::InvalidSpec(
                "VAR dimension must be positive".into(),
            ));
        }
        if self.b.iter().any(|&b| !(b > 0.0)) {
            return Err(EncError::InvalidSpec(
                "localization constants must be positive".into(),
            ));
        }
        if !(self.alpha_exp > 0.0 && self.alpha_exp < 1.0) {
            return Err(EncError::InvalidSpec(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha_exp
            )));
        }
        if self.t < 2 {
            return Err(EncError::InvalidSpec("T must be at least 2".into()));
        }
        if self
            .ar_coefficients()
            .iter()
            .any(|&a| !(a > 0.0 && a < 1.0))
        {
            return Err(EncError::InvalidSpec(
                "AR coefficients must lie in (0, 1)".into(),
            ));
        }
        if self.innovation_cov.len() != k || self.innovation_cov.iter().any(|r| r.len() != k) {
            return Err(EncError::InvalidSpec(
                "innovation covariance has wrong shape".into(),
            ));
        }
        Ok(())
    }
}

fn cholesky_factor(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = cov.len();
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    if (0..k).any(|i| (0..k).any(|j| m[(i, j)] != m[(j, i)])) {
        return Err(EncError::InvalidSpec(
            "innovation covariance must be symmetric".into(),
        ));
    }
    m.cholesky().map(|c| c.l()).ok_or_else(|| {
        EncError::InvalidSpec("innovation covariance must be positive definite".into())
    })
}

/// Returns a `T × dim` path.
pub fn simulate_mild_var(spec: &Dgp3Spec, stream: RngStream) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let chol = cholesky_factor(&spec.innovation_cov)?;
    let ar = spec.ar_coefficients();
    let k = spec.dim();
    let mut rng = stream.rng();
    let mut state = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut out = DMatrix::zeros(spec.t, k);
    for step in 0..spec.burn_in + spec.t {
        for zi in z.iter_mut() {
            *zi = normal(&mut rng);
        }
        for i in 0..k {
            let innovation: f64 = (0..=i).map(|j| chol[(i, j)] * z[j]).sum();
            state[i] = ar[i] * state[i] + innovation;
        }
        if step >= spec.burn_in {
            for i in 0..k {
                out[(step - spec.burn_in, i)] = state[i];
            }
        }
    }
    Ok(out)
}
