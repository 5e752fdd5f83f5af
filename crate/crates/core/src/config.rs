//! TOML experiment definitions.
//!
//! ```toml
//! name = "table1"
//! kind = "size"          # or "power"
//! reps = 10000
//! seed = 20240501
//! level = 0.10
//! pi0 = 0.25
//! bandwidth = { mode = "auto", c = 1.0 }
//!
//! [[grid]]
//! dgp = "dgp1"
//! sigma = "sigma1"
//! t = [250, 500, 1000]
//! h = [1, 12, 24]
//! rho = [0.25, 0.90, 0.95]
//! mu0 = [0.30, 0.40, 0.45]
//! ```
//!
//! Every grid field accepts a scalar or a list; cells are the Cartesian
//! product in the order `h, t, rho | n_cross, beta2, mu0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::{Dgp1Spec, Dgp2Spec, SIGMA_CORRELATED, SIGMA_UNCORRELATED};
use crate::enc_test::HacConfig;
use crate::error::{EncError, Result};
use crate::monte_carlo::{default_label, DgpChoice, McCell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Size,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OneOrMany<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::value::{
            BoolDeserializer, F64Deserializer, I64Deserializer, StrDeserializer, U64Deserializer,
        };
        use serde::de::{Error, SeqAccess, Visitor};

        struct V<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = OneOrMany<T>;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a value or a list of values")
            }

            fn visit_bool<E: Error>(self, v: bool) -> std::result::Result<Self::Value, E> {
                T::deserialize(BoolDeserializer::new(v)).map(OneOrMany::One)
            }

            fn visit_i64<E: Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                T::deserialize(I64Deserializer::new(v)).map(OneOrMany::One)
            }

            fn visit_u64<E: Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                T::deserialize(U64Deserializer::new(v)).map(OneOrMany::One)
            }

            fn visit_f64<E: Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                T::deserialize(F64Deserializer::new(v)).map(OneOrMany::One)
            }

            fn visit_str<E: Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                T::deserialize(StrDeserializer::new(v)).map(OneOrMany::One)
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some(v) = seq.next_element()? {
                    out.push(v);
                }
                Ok(OneOrMany::Many(out))
            }
        }

        d.deserialize_any(V(std::marker::PhantomData))
    }
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

/// Either a named covariance or an explicit 2 × 2 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaChoice {
    Named(String),
    Matrix([[f64; 2]; 2]),
}

impl SigmaChoice {
    fn resolve(&self) -> Result<[[f64; 2]; 2]> {
        match self {
            SigmaChoice::Named(name) => match name.as_str() {
                "sigma1" => Ok(SIGMA_UNCORRELATED),
                "sigma2" => Ok(SIGMA_CORRELATED),
                other => Err(EncError::Config {
                    path: "grid.sigma".into(),
                    message: format!("unknown covariance `{other}` (expected sigma1 or sigma2)"),
                }),
            },
            SigmaChoice::Matrix(m) => Ok(*m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dgp1Grid {
    pub t: OneOrMany<usize>,
    pub h: OneOrMany<usize>,
    pub rho: OneOrMany<f64>,
    pub mu0: OneOrMany<f64>,
    #[serde(default = "zero")]
    pub beta2: OneOrMany<f64>,
    #[serde(default)]
    pub sigma: Option<SigmaChoice>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dgp2Grid {
    pub t: OneOrMany<usize>,
    pub h: OneOrMany<usize>,
    pub n_cross: OneOrMany<usize>,
    pub mu0: OneOrMany<f64>,
    #[serde(default = "zero")]
    pub beta2: OneOrMany<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub alpha1: Option<f64>,
    #[serde(default)]
    pub rho_idio: Option<f64>,
    #[serde(default)]
    pub loading_std: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

fn zero() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dgp", rename_all = "lowercase")]
pub enum GridBlock {
    Dgp1(Dgp1Grid),
    Dgp2(Dgp2Grid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_pi0")]
    pub pi0: f64,
    #[serde(default)]
    pub bandwidth: HacConfig,
    pub grid: Vec<GridBlock>,
}

/// Top-level keys; `grid` is filled in separately.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    kind: ExperimentKind,
    #[serde(default = "default_reps")]
    reps: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_level")]
    level: f64,
    #[serde(default = "default_pi0")]
    pi0: f64,
    #[serde(default)]
    bandwidth: HacConfig,
    #[serde(skip)]
    grid: Vec<GridBlock>,
}

fn with_path<T: serde::de::DeserializeOwned>(prefix: &str, value: toml::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, ".") => "(top level)".to_string(),
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        EncError::Config {
            path,
            message: e.into_inner().message().trim().to_string(),
        }
    })
}

fn default_reps() -> usize {
    10_000
}

fn default_level() -> f64 {
    0.10
}

fn default_pi0() -> f64 {
    0.25
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| EncError::Config {
            path: String::from("<document>"),
            message: e.message().trim().to_string(),
        })?;
        // Grid blocks are dispatched on `dgp` by hand so that errors inside a
        // block keep their full key path.
        let raw_grid = table.remove("grid");
        let mut cfg: RawConfig = with_path("", toml::Value::Table(table))?;
        let blocks = match raw_grid {
            None => Vec::new(),
            Some(toml::Value::Array(items)) => items,
            Some(_) => {
                return Err(EncError::Config {
                    path: "grid".into(),
                    message: "expected an array of [[grid]] tables".into(),
                })
            }
        };
        for (i, item) in blocks.into_iter().enumerate() {
            let prefix = format!("grid[{i}]");
            let toml::Value::Table(mut block) = item else {
                return Err(EncError::Config {
                    path: prefix,
                    message: "expected a table".into(),
                });
            };
            let dgp = block.remove("dgp");
            let parsed = match dgp.as_ref().and_then(toml::Value::as_str) {
                Some("dgp1") => GridBlock::Dgp1(with_path(&prefix, toml::Value::Table(block))?),
                Some("dgp2") => GridBlock::Dgp2(with_path(&prefix, toml::Value::Table(block))?),
                _ => {
                    return Err(EncError::Config {
                        path: format!("{prefix}.dgp"),
                        message: "expected \"dgp1\" or \"dgp2\"".into(),
                    })
                }
            };
            cfg.grid.push(parsed);
        }
        let cfg = ExperimentConfig {
            name: cfg.name,
            kind: cfg.kind,
            reps: cfg.reps,
            seed: cfg.seed,
            level: cfg.level,
            pi0: cfg.pi0,
            bandwidth: cfg.bandwidth,
            grid: cfg.grid,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EncError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<()> {
        let fail = |path: &str, message: String| EncError::Config {
            path: path.into(),
            message,
        };
        if self.reps == 0 {
            return Err(fail("reps", "must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(fail("level", format!("{} must lie in (0, 1)", self.level)));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(fail("pi0", format!("{} must lie in (0, 1)", self.pi0)));
        }
        if self.grid.is_empty() {
            return Err(fail(
                "grid",
                "at least one [[grid]] block is required".into(),
            ));
        }
        Ok(())
    }

    /// Expands every grid block into cells.
    pub fn cells(&self) -> Result<Vec<McCell>> {
        let mut cells = Vec::new();
        for (b, block) in self.grid.iter().enumerate() {
            let at = |field: &str| format!("grid[{b}].{field}");
            let nonempty = |n: usize, field: &str| -> Result<()> {
                if n == 0 {
                    Err(EncError::Config {
                        path: at(field),
                        message: "list must not be empty".into(),
                    })
                } else {
                    Ok(())
                }
            };
            match block {
                GridBlock::Dgp1(g) => {
                    let sigma = match &g.sigma {
                        Some(s) => s.resolve().map_err(|e| match e {
                            EncError::Config { message, .. } => EncError::Config {
                                path: at("sigma"),
                                message,
                            },
                            other => other,
                        })?,
                        None => SIGMA_UNCORRELATED,
                    };
                    let base = Dgp1Spec::default();
                    let (hs, ts, rhos, betas, mus) = (
                        g.h.values(),
                        g.t.values(),
                        g.rho.values(),
                        g.beta2.values(),
                        g.mu0.values(),
                    );
                    for (v, name) in [
                        (hs.len(), "h"),
                        (ts.len(), "t"),
                        (rhos.len(), "rho"),
                        (betas.len(), "beta2"),
                        (mus.len(), "mu0"),
                    ] {
                        nonempty(v, name)?;
                    }
                    for &h in &hs {
                        for &t in &ts {
                            for &rho in &rhos {
                                for &beta2 in &betas {
                                    for &mu0 in &mus {
                                        let spec = Dgp1Spec {
                                            beta1: g.beta1.unwrap_or(base.beta1),
                                            beta2,
                                            rho,
                                            theta: g.theta.unwrap_or(base.theta),
                                            sigma,
                                            t,
                                            h,
                                            burn_in: g.burn_in.unwrap_or(base.burn_in),
                                        };
                                        cells.push(self.cell(DgpChoice::Dgp1(spec), mu0));
                                    }
                                }
                            }
                        }
                    }
                }
                GridBlock::Dgp2(g) => {
                    let base = Dgp2Spec::default();
                    let (hs, ts, ns, betas, mus) = (
                        g.h.values(),
                        g.t.values(),
                        g.n_cross.values(),
                        g.beta2.values(),
                        g.mu0.values(),
                    );
                    for (v, name) in [
                        (hs.len(), "h"),
                        (ts.len(), "t"),
                        (ns.len(), "n_cross"),
                        (betas.len(), "beta2"),
                        (mus.len(), "mu0"),
                    ] {
                        nonempty(v, name)?;
                    }
                    for &h in &hs {
                        for &t in &ts {
                            for &n_cross in &ns {
                                for &beta2 in &betas {
                                    for &mu0 in &mus {
                                        let spec = Dgp2Spec {
                                            alpha: g.alpha.unwrap_or(base.alpha),
                                            beta1: g.beta1.unwrap_or(base.beta1),
                                            beta2,
                                            theta: g.theta.unwrap_or(base.theta),
                                            n_cross,
                                            t,
                                            h,
                                            alpha1: g.alpha1.unwrap_or(base.alpha1),
                                            rho_idio: g.rho_idio.unwrap_or(base.rho_idio),
                                            loading_std: g.loading_std.unwrap_or(base.loading_std),
                                            burn_in: g.burn_in.unwrap_or(base.burn_in),
                                        };
                                        cells.push(self.cell(DgpChoice::Dgp2(spec), mu0));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, cell) in cells.iter().enumerate() {
            cell.validate()
                .map_err(|e| e.context(format!("cell {i} ({})", cell.label)))?;
        }
        Ok(cells)
    }

    fn cell(&self, dgp: DgpChoice, mu0: f64) -> McCell {
        McCell {
            label: default_label(&dgp, mu0),
            dgp,
            pi0: self.pi0,
            mu0,
            hac: self.bandwidth,
            level: self.level,
        }
    }
}
