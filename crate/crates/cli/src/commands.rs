use std::fmt::Write as _;
use std::path::Path;

use encompass_core::config::{ExperimentConfig, ExperimentKind};
use encompass_core::inflation::{
    load_panel, render_study, run_study, CountryStudyConfig, PanelFilter,
};
use encompass_core::local_power::{local_power_mild, local_power_stationary, LocalPowerInput};
use encompass_core::monte_carlo::{
    render_report, run_power_experiment, run_size_experiment, ReportFormat,
};
use encompass_core::{
    encompassing_test_with, EncError, EncompassingResult, ForecastErrorSet, Result, SplitSpec,
};
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, McArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let format = cli.output.format;
    let text = match &cli.command {
        Command::Test {
            errors,
            mu0,
            bandwidth,
            centering,
            h,
            k0,
        } => {
            let (e1, e2) = read_errors(errors)?;
            let fes = ForecastErrorSet::new(e1, e2, *h, *k0)?;
            let hac = bandwidth.resolve();
            echo(&serde_json::json!({
                "command": "test",
                "errors": errors,
                "n": fes.len(),
                "mu0": mu0,
                "hac": hac,
                "centering": centering,
                "h": h,
                "k0": k0,
            }));
            let split = SplitSpec::new(*mu0, fes.len())?;
            let result = encompassing_test_with(&fes, &split, &hac, *centering)?;
            render_test(
                &TestOutput {
                    h: *h,
                    k0: *k0,
                    result,
                },
                format,
            )?
        }
        Command::McSize(args) => run_mc(args, ExperimentKind::Size, format)?,
        Command::McPower(args) => run_mc(args, ExperimentKind::Power, format)?,
        Command::LocalPower {
            mu0,
            pi0,
            phi2,
            level,
            blocks,
            c_scale,
            mild,
        } => {
            let blocks = match blocks {
                Some(path) => read_blocks(path)?,
                None => Blocks::scalar(),
            };
            let mu0s = if mu0.is_empty() {
                (0..10).map(|i| 0.30 + 0.02 * i as f64).collect()
            } else {
                mu0.clone()
            };
            let scales = if c_scale.is_empty() {
                vec![1.0]
            } else {
                c_scale.clone()
            };
            echo(&serde_json::json!({
                "command": "local-power",
                "mu0": mu0s,
                "pi0": pi0,
                "phi2": phi2,
                "level": level,
                "blocks": blocks,
                "c_scale": scales,
                "mild": mild,
            }));
            let mut rows = Vec::new();
            for &m in &mu0s {
                for &s in &scales {
                    let input = LocalPowerInput {
                        c: blocks.c.iter().map(|v| v * s).collect(),
                        m11: blocks.m11.clone(),
                        m12: blocks.m12.clone(),
                        m21: blocks.m21.clone(),
                        m22: blocks.m22.clone(),
                        phi2: *phi2,
                        mu0: m,
                        pi0: *pi0,
                        level: *level,
                    };
                    let lp = if *mild {
                        local_power_mild(&input)?
                    } else {
                        local_power_stationary(&input)?
                    };
                    rows.push(PowerRow {
                        mu0: m,
                        c_scale: s,
                        drift: lp.drift,
                        power: lp.power,
                    });
                }
            }
            render_power(&rows, format)?
        }
        Command::Inflation {
            panel,
            h,
            pi0,
            p2,
            p_max,
            mu0,
            bandwidth,
            exclude_own,
            countries,
            from,
            to,
        } => {
            let defaults = CountryStudyConfig::default();
            let config = CountryStudyConfig {
                h: *h,
                pi0: *pi0,
                p2: *p2,
                p_max: *p_max,
                mu0_list: if mu0.is_empty() {
                    defaults.mu0_list
                } else {
                    mu0.clone()
                },
                hac: bandwidth.resolve(),
                exclude_own: *exclude_own,
            };
            config.validate()?;
            let filter = PanelFilter {
                countries: (!countries.is_empty()).then(|| countries.clone()),
                from: *from,
                to: *to,
            };
            let data = load_panel(panel, &filter)?;
            echo(&serde_json::json!({
                "command": "inflation",
                "panel": panel,
                "countries": data.countries(),
                "first_quarter": data.start(),
                "last_quarter": data.date(data.periods() - 1),
                "study": config,
            }));
            render_study(&run_study(&data, &config)?, format)?
        }
    };
    emit(cli.output.out.as_deref(), &text)
}

/// The resolved configuration goes to stderr so stdout stays a clean artifact.
fn echo(value: &serde_json::Value) {
    eprintln!(
        "resolved configuration:\n{}",
        serde_json::to_string_pretty(value).unwrap_or_default()
    );
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| EncError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_mc(args: &McArgs, kind: ExperimentKind, format: ReportFormat) -> Result<String> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if config.kind != kind {
        return Err(EncError::Config {
            path: "kind".into(),
            message: format!(
                "config declares a {:?} experiment; run it with the matching subcommand",
                config.kind
            ),
        });
    }
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err(EncError::InvalidSpec("--reps must be positive".into()));
        }
        config.reps = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    echo(&serde_json::to_value(&config).unwrap_or_default());
    let cells = config.cells()?;
    let report = match kind {
        ExperimentKind::Size => run_size_experiment(&cells, config.reps, config.seed)?,
        ExperimentKind::Power => run_power_experiment(&cells, config.reps, config.seed)?,
    };
    render_report(&report, format)
}

fn read_errors(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EncError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| EncError::Parse(format!("{}: {e}", path.display())))?;
    if header.iter().collect::<Vec<_>>() != ["e1", "e2"] {
        return Err(EncError::Parse(format!(
            "{}: line 1: expected header `e1,e2`",
            path.display()
        )));
    }
    let (mut e1, mut e2) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| EncError::Parse(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    EncError::Parse(format!(
                        "{}: line {line}: column {} is not a finite number",
                        path.display(),
                        i + 1
                    ))
                })
        };
        e1.push(field(0)?);
        e2.push(field(1)?);
    }
    Ok((e1, e2))
}

#[derive(Debug, Serialize)]
struct TestOutput {
    h: usize,
    k0: usize,
    #[serde(flatten)]
    result: EncompassingResult,
}

fn render_test(out: &TestOutput, format: ReportFormat) -> Result<String> {
    let r = &out.result;
    let io = |e: csv::Error| EncError::Io(e.to_string());
    match format {
        ReportFormat::Json => Ok(format!(
            "{}\n",
            serde_json::to_string_pretty(out).map_err(|e| EncError::Io(e.to_string()))?
        )),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "statistic",
                "p_value",
                "dbar",
                "omega2",
                "mse1",
                "mse2",
                "classic_moment",
                "n",
                "m0",
                "mu0",
                "bandwidth",
                "h",
                "k0",
            ])
            .map_err(io)?;
            let floats = [
                r.statistic,
                r.p_value,
                r.dbar,
                r.omega2,
                r.mse1,
                r.mse2,
                r.classic_moment,
            ];
            let mut record: Vec<String> = floats.iter().map(f64::to_string).collect();
            record.extend([r.n, r.m0].map(|v| v.to_string()));
            record.push(r.mu0.to_string());
            record.extend([r.bandwidth, out.h, out.k0].map(|v| v.to_string()));
            w.write_record(&record).map_err(io)?;
            let bytes = w.into_inner().map_err(|e| EncError::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| EncError::Io(e.to_string()))
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| quantity | value |\n|---|---:|\n");
            let rows: [(&str, String); 13] = [
                ("statistic", format!("{:.6}", r.statistic)),
                ("p-value", format!("{:.6}", r.p_value)),
                ("dbar", format!("{:.6e}", r.dbar)),
                ("omega^2", format!("{:.6e}", r.omega2)),
                ("MSE benchmark", format!("{:.6}", r.mse1)),
                ("MSE larger model", format!("{:.6}", r.mse2)),
                ("classic moment", format!("{:.6}", r.classic_moment)),
                ("n", r.n.to_string()),
                ("m0", r.m0.to_string()),
                ("mu0", r.mu0.to_string()),
                ("bandwidth", r.bandwidth.to_string()),
                ("h", out.h.to_string()),
                ("k0", out.k0.to_string()),
            ];
            for (name, value) in rows {
                let _ = writeln!(s, "| {name} | {value} |");
            }
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blocks {
    c: Vec<f64>,
    m11: Vec<Vec<f64>>,
    m12: Vec<Vec<f64>>,
    m21: Vec<Vec<f64>>,
    m22: Vec<Vec<f64>>,
}

impl Blocks {
    /// One benchmark regressor and one extra predictor, uncorrelated, unit variance.
    fn scalar() -> Self {
        Self {
            c: vec![1.0],
            m11: vec![vec![1.0]],
            m12: vec![vec![0.0]],
            m21: vec![vec![0.0]],
            m22: vec![vec![1.0]],
        }
    }
}

fn read_blocks(path: &Path) -> Result<Blocks> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EncError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| EncError::Config {
        path: path.display().to_string(),
        message: e.message().to_string(),
    })
}

#[derive(Debug, Serialize)]
struct PowerRow {
    mu0: f64,
    c_scale: f64,
    drift: f64,
    power: f64,
}

fn render_power(rows: &[PowerRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(format!(
            "{}\n",
            serde_json::to_string_pretty(rows).map_err(|e| EncError::Io(e.to_string()))?
        )),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| EncError::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| EncError::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| EncError::Io(e.to_string()))
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| mu0 | c scale | drift | power |\n|---:|---:|---:|---:|\n");
            for r in rows {
                let _ = writeln!(
                    s,
                    "| {:.2} | {} | {:.6} | {:.6} |",
                    r.mu0, r.c_scale, r.drift, r.power
                );
            }
            Ok(s)
        }
    }
}
