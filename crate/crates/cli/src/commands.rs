//! Subcommand implementations. Each returns the list of files it wrote.

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, Ingested};
use crate::output::{write_atomic, write_csv, write_json};
use crate::report::{file_stem, posterior_grid, FitReport, ProviderRow, Scorer, PROVIDER_COLUMNS};
use provconf_core::en_fit::null_intervals;
use provconf_core::sim_lab::{replicate_rng, ReplicateMetrics};
use provconf_core::{fit, NullInterval, ProviderSummary, Scenario, SimConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Applies saved centers in place of the ones computed from this input.
fn recenter(data: &mut Ingested, centers: &[f64]) -> CliResult<()> {
    if centers.len() != data.centers.len() {
        return Err(CliError::Config(format!(
            "fit has {} covariates but the input has {}",
            centers.len(),
            data.centers.len()
        )));
    }
    for p in &mut data.providers {
        for ((w, own), saved) in p.covariates.iter_mut().zip(&data.centers).zip(centers) {
            // Skipping equal centers keeps a re-read of the fitted input bit-identical.
            if own != saved {
                *w = (*w + own) - saved;
            }
        }
    }
    data.centers = centers.to_vec();
    Ok(())
}

fn write_providers(path: &Path, rows: &[ProviderRow]) -> CliResult<()> {
    debug_assert_eq!(PROVIDER_COLUMNS.len(), 16);
    write_csv(path, rows)
}

fn write_posteriors(out: &Path, scorer: &Scorer<'_>, providers: &[ProviderSummary], ids: &[String]) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for id in ids {
        let p = providers
            .iter()
            .find(|p| &p.id == id)
            .ok_or_else(|| CliError::Config(format!("posterior requested for unknown provider `{id}`")))?;
        let (orig, adj) = scorer.posteriors(p)?.ok_or_else(|| {
            CliError::Config("posterior grids need a count family and a covariance estimate".into())
        })?;
        let grid = posterior_grid(&orig, &adj, scorer.config.posterior_grid_points)?;
        let path = out.join(format!("posterior_{}.csv", file_stem(id)));
        write_csv(&path, &grid)?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_fit(input: &Path, config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    config.validate()?;
    let data = ingest(input)?;
    let family = config.family()?;
    let result = fit(&data.providers, &family, &config.fit_config())?;
    let report = FitReport::new(&result, &data.providers, &data.covariate_names, &data.centers, config, data.warnings.clone());
    let scorer = Scorer::new(&report, config)?;
    let rows = scorer.table(&data.providers, &result.intervals)?;

    let out = &config.output_dir;
    let mut written = vec![out.join("fit.json"), out.join("providers.csv")];
    write_json(&written[0], &report)?;
    write_providers(&written[1], &rows)?;
    written.extend(write_posteriors(out, &scorer, &data.providers, &config.posterior_ids)?);
    Ok(written)
}

fn load_scored(fit_path: &Path, input: &Path) -> CliResult<(FitReport, Ingested, Vec<NullInterval>)> {
    let report = FitReport::load(fit_path)?;
    let mut data = ingest(input)?;
    recenter(&mut data, &report.centers)?;
    let family = report.family()?;
    // Providers that were not part of the fit get intervals at the saved starting values.
    let fresh = null_intervals(&data.providers, &family, &report.init, report.config.interval_multiplier)?;
    let intervals = data.providers.iter().zip(fresh).map(|(p, f)| report.interval_for(&p.id).unwrap_or(f)).collect();
    Ok((report, data, intervals))
}

/// Flags providers against a saved fit, using the fit's own configuration
/// except for the output directory.
pub fn cmd_flag(fit_path: &Path, input: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (report, data, intervals) = load_scored(fit_path, input)?;
    let config = report.config.clone();
    let scorer = Scorer::new(&report, &config)?;
    let rows = scorer.table(&data.providers, &intervals)?;
    let path = out.join("providers.csv");
    write_providers(&path, &rows)?;
    Ok(vec![path])
}

pub fn cmd_posterior(fit_path: &Path, input: &Path, ids: &[String], points: Option<usize>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (report, data, _) = load_scored(fit_path, input)?;
    let mut config = report.config.clone();
    if let Some(n) = points {
        config.posterior_grid_points = n;
    }
    config.validate()?;
    let scorer = Scorer::new(&report, &config)?;
    write_posteriors(out, &scorer, &data.providers, ids)
}

/// Values of a single scenario field to sweep over; `parameter` is a dotted
/// path into the scenario table, with numeric segments indexing arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub reps: Option<usize>,
    pub scenario: Scenario,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub sim: SimConfig,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The scenario at every sweep point, in file order.
    pub fn points(&self) -> CliResult<Vec<(Option<toml::Value>, Scenario)>> {
        let Some(sweep) = &self.sweep else { return Ok(vec![(None, self.scenario.clone())]) };
        if sweep.values.is_empty() {
            return Err(CliError::Config("sweep has no values".into()));
        }
        let base = toml::Value::try_from(&self.scenario).map_err(|e| CliError::Config(e.to_string()))?;
        sweep
            .values
            .iter()
            .map(|v| {
                let mut t = base.clone();
                set_path(&mut t, &sweep.parameter, v.clone())?;
                let s: Scenario = t.try_into().map_err(|e| CliError::Config(format!("sweep `{}`: {e}", sweep.parameter)))?;
                s.validate()?;
                Ok((Some(v.clone()), s))
            })
            .collect()
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> CliResult<()> {
    let missing = || CliError::Config(format!("sweep parameter `{path}` does not name a scenario field"));
    let mut cur = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    if !t.contains_key(*seg) && *seg != "target" {
                        return Err(missing());
                    }
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*seg).ok_or_else(missing)?
            }
            toml::Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| missing())?;
                let slot = a.get_mut(i).ok_or_else(missing)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(missing()),
        };
    }
    Err(missing())
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_rows(point: usize, sweep: Option<&toml::Value>, m: &ReplicateMetrics) -> Vec<Vec<String>> {
    let head = |kind: &str, method: &str| {
        vec![
            point.to_string(),
            sweep.map(value_text).unwrap_or_default(),
            kind.to_string(),
            method.to_string(),
            m.n_reps.to_string(),
            m.n_failed.to_string(),
        ]
    };
    let mut rows = Vec::new();
    for e in &m.estimators {
        let mut r = head("estimator", e.estimator.as_str());
        for v in [
            e.bias_nu,
            e.se_bias_nu,
            e.mse_nu,
            e.se_mse_nu,
            e.bias_sigma2_alpha,
            e.se_bias_sigma2_alpha,
            e.mse_sigma2_alpha,
            e.se_mse_sigma2_alpha,
        ] {
            r.push(v.to_string());
        }
        r.push(opt(e.coverage_nu));
        r.push(e.mean_pi0.to_string());
        r.extend([String::new(), String::new(), String::new()]);
        rows.push(r);
    }
    for f in &m.flags {
        let mut r = head("flag", f.method.as_str());
        r.extend(std::iter::repeat_n(String::new(), 10));
        r.extend([opt(f.ffp), opt(f.tfp), f.se.to_string()]);
        rows.push(r);
    }
    rows
}

pub const METRICS_COLUMNS: [&str; 19] = [
    "point",
    // Renamed to the sweep parameter when a sweep is present.
    "sweep_value",
    "row_type",
    "method",
    "n_reps",
    "n_failed",
    "bias_nu",
    "se_bias_nu",
    "mse_nu",
    "se_mse_nu",
    "bias_sigma2_alpha",
    "se_bias_sigma2_alpha",
    "mse_sigma2_alpha",
    "se_mse_sigma2_alpha",
    "coverage_nu",
    "mean_pi0",
    "ffp",
    "tfp",
    "se_rate",
];

#[derive(Debug, Serialize)]
struct SimulationEcho<'a> {
    schema_version: u32,
    seed: u64,
    reps: usize,
    file: &'a ScenarioFile,
    points: Vec<(Option<toml::Value>, &'a ReplicateMetrics)>,
}

pub fn cmd_simulate(scenario_path: &Path, reps: Option<usize>, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut file = ScenarioFile::load(scenario_path)?;
    if let Some(s) = seed {
        file.scenario = file.scenario.with_seed(s);
    }
    let reps = reps.or(file.reps).unwrap_or(100);
    file.reps = Some(reps);
    let points = file.points()?;
    let mut metrics = Vec::with_capacity(points.len());
    for (_, scenario) in &points {
        metrics.push(provconf_core::run_replicates(scenario, &file.sim, reps)?);
    }

    let mut header: Vec<String> = METRICS_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(sw) = &file.sweep {
        header[1] = sw.parameter.clone();
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (k, ((v, _), m)) in points.iter().zip(&metrics).enumerate() {
        for row in metrics_rows(k, v.as_ref(), m) {
            w.write_record(&row)?;
        }
    }
    let csv_path = out.join("metrics.csv");
    let bytes = w.into_inner().map_err(|e| CliError::io(&csv_path, e.into_error()))?;
    write_atomic(&csv_path, &bytes)?;

    let echo = SimulationEcho {
        schema_version: crate::report::SCHEMA_VERSION,
        seed: file.scenario.seed(),
        reps,
        file: &file,
        points: points.iter().map(|(v, _)| v.clone()).zip(&metrics).collect(),
    };
    let json_path = out.join("simulation.json");
    write_json(&json_path, &echo)?;
    Ok(vec![csv_path, json_path])
}

#[derive(Debug, Serialize)]
struct TruthRow<'a> {
    id: &'a str,
    gamma: f64,
    alpha: f64,
    is_null: bool,
}

/// Writes one synthetic dataset in the ingestion schema, plus its truth.
pub fn cmd_generate(scenario_path: &Path, seed: Option<u64>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let file = ScenarioFile::load(scenario_path)?;
    let scenario = match seed {
        Some(s) => file.scenario.with_seed(s),
        None => file.scenario,
    };
    let data = scenario.generate(&mut replicate_rng(scenario.seed(), 0))?;
    let p = data.providers.first().map_or(0, |x| x.covariates.len());
    let with_n = data.providers.iter().any(|x| x.n_patients.is_some());
    let with_b3 = data.providers.iter().any(|x| x.b3_sum.is_some());

    let mut header = vec!["id".to_string(), "observed".into(), "expected".into(), "effective_size".into()];
    if with_n {
        header.push("n_patients".into());
    }
    if with_b3 {
        header.push("b3_sum".into());
    }
    header.extend((1..=p).map(|k| format!("w_{k}")));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for x in &data.providers {
        let mut r = vec![x.id.clone(), x.observed.to_string(), x.expected.to_string(), x.effective_size.to_string()];
        if with_n {
            r.push(x.n_patients.map(|n| n.to_string()).unwrap_or_default());
        }
        if with_b3 {
            r.push(opt(x.b3_sum));
        }
        r.extend(x.covariates.iter().map(|v| v.to_string()));
        w.write_record(&r)?;
    }
    let path = out.join("providers.csv");
    let bytes = w.into_inner().map_err(|e| CliError::io(&path, e.into_error()))?;
    write_atomic(&path, &bytes)?;

    let truth: Vec<TruthRow> = data
        .providers
        .iter()
        .enumerate()
        .map(|(i, x)| TruthRow { id: &x.id, gamma: data.truth.gamma[i], alpha: data.truth.alpha[i], is_null: data.truth.is_null[i] })
        .collect();
    let truth_path = out.join("truth.csv");
    write_csv(&truth_path, &truth)?;
    Ok(vec![path, truth_path])
}
