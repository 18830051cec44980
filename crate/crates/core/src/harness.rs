//! Scenario runs: fit the selected models on a training range, forecast the
//! test range one day ahead, score both ranges and write plot-data tables.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::additive::{
    components, fit_additive, fit_without_holidays, predict_additive, write_components_csv, AdditiveConfig,
    AdditiveForecast, AdditiveModel,
};
use crate::arima::{residual_diagnostics, rolling_forecast_refit, stepwise_search, ResidualDiagnostics, SearchConfig, SearchOutcome};
use crate::data::{
    aggregate_daily, build_features, ingest_granular, parse_received, split_scenario, DailyAggregate, DateRange,
    FeatureMatrix, ScenarioName, ScenarioSplit,
};
use crate::error::{Error, Result};
use crate::lasso::{
    bootstrap, cv_select_lambda, fit_lasso, lambda_path, predict_lasso, write_weight_report, BootstrapBand, CvResult,
    FoldScheme, LassoModel,
};
use crate::lstm::{
    expand_grid, grid_search, predict_lstm, train_lstm, write_checkpoint, write_loss_history, GridResult, LstmConfig,
    LstmModel,
};
use crate::stats::{
    adf_test, anova_oneway, boxplot_stats, mann_whitney_u, mape, rmse, stl_decompose, Anova, AdfResult,
    BoxplotSummary, MannWhitney, StlConfig, StlResult,
};
use crate::synth::{generate, GroundTruth, SynthConfig};

/// Days before the first training date that only feed the lag features.
const LAG_DAYS: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Arima,
    Additive,
    Lasso,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Arima, ModelKind::Additive, ModelKind::Lasso, ModelKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Arima => "arima",
            ModelKind::Additive => "additive",
            ModelKind::Lasso => "lasso",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn group(self) -> ModelGroup {
        match self {
            ModelKind::Arima | ModelKind::Additive => ModelGroup::Univariate,
            ModelKind::Lasso | ModelKind::Lstm => ModelGroup::Multivariate,
        }
    }

    /// Comma-separated names, duplicates dropped, order kept.
    pub fn parse_list(s: &str) -> Result<Vec<ModelKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: ModelKind = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("no models selected".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arima" => Ok(ModelKind::Arima),
            "additive" => Ok(ModelKind::Additive),
            "lasso" => Ok(ModelKind::Lasso),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidInput(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelGroup {
    Univariate,
    Multivariate,
}

impl ModelGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelGroup::Univariate => "univariate",
            ModelGroup::Multivariate => "multivariate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ArimaSettings {
    pub search: SearchConfig,
    /// Re-estimate parameters every this many test days (`0` never refits).
    pub refit_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoSettings {
    pub n_lambdas: usize,
    pub folds: usize,
    pub fold_scheme: FoldScheme,
    /// Bootstrap replicates; `0` skips the bands.
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings { n_lambdas: 50, folds: 5, fold_scheme: FoldScheme::Contiguous, bootstrap: 1000, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmSettings {
    /// Fields not covered by the grid.
    pub base: LstmConfig,
    pub windows: Vec<usize>,
    pub hiddens: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for LstmSettings {
    fn default() -> Self {
        LstmSettings {
            base: LstmConfig::default(),
            windows: vec![7, 14],
            hiddens: vec![16, 32],
            learning_rates: vec![1e-3, 3e-3],
        }
    }
}

/// Input files, or a synthetic generator when both paths are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub granular: Option<PathBuf>,
    pub received: Option<PathBuf>,
    /// Its range and seed are replaced by the run's data range and master seed.
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub scenarios: Vec<ScenarioName>,
    pub custom_train: Option<DateRange>,
    pub custom_test: Option<DateRange>,
    pub models: Vec<ModelKind>,
    pub arima: ArimaSettings,
    pub additive: AdditiveConfig,
    pub lasso: LassoSettings,
    pub lstm: LstmSettings,
    pub stl: StlConfig,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            scenarios: vec![ScenarioName::TwoYear, ScenarioName::EightYear],
            custom_train: None,
            custom_test: None,
            models: ModelKind::ALL.to_vec(),
            arima: ArimaSettings::default(),
            additive: AdditiveConfig::default(),
            lasso: LassoSettings::default(),
            lstm: LstmSettings::default(),
            stl: StlConfig::default(),
            out_dir: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model must be selected".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario must be selected".into()));
        }
        if self.data.granular.is_some() != self.data.received.is_some() {
            return Err(Error::Config("granular and received paths must be given together".into()));
        }
        self.additive.validate()?;
        self.lstm.base.validate()?;
        if self.lstm.windows.is_empty() || self.lstm.hiddens.is_empty() || self.lstm.learning_rates.is_empty() {
            return Err(Error::Config("LSTM grid lists must be non-empty".into()));
        }
        if self.lasso.n_lambdas < 2 || self.lasso.folds < 2 {
            return Err(Error::Config("lasso needs n_lambdas >= 2 and folds >= 2".into()));
        }
        if !(self.lasso.level > 0.0 && self.lasso.level < 1.0) {
            return Err(Error::Config(format!("lasso level must lie in (0, 1), got {}", self.lasso.level)));
        }
        self.splits().map(|_| ())
    }

    pub fn splits(&self) -> Result<Vec<ScenarioSplit>> {
        self.scenarios
            .iter()
            .map(|&name| match name {
                ScenarioName::Custom => match (self.custom_train, self.custom_test) {
                    (Some(train), Some(test)) => ScenarioSplit::custom(train, test),
                    _ => Err(Error::Config("custom scenario needs custom_train and custom_test".into())),
                },
                other => ScenarioSplit::named(other),
            })
            .collect()
    }

    /// Daily data needed by every scenario, including the lag lead-in.
    pub fn data_range(&self) -> Result<DateRange> {
        let splits = self.splits()?;
        let start = splits.iter().map(|s| s.train.start).min().expect("validated non-empty");
        let end = splits.iter().map(|s| s.test.end).max().expect("validated non-empty");
        DateRange::new(start - Days::new(LAG_DAYS), end)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig { range: self.data_range()?, seed: self.seed, ..self.data.synth.clone() })
    }
}

/// Mixes a master seed with a label into an independent sub-seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Daily series and raw features for the whole run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub daily: Vec<DailyAggregate>,
    pub features: FeatureMatrix,
    /// Present for generated data.
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn from_daily(daily: Vec<DailyAggregate>, truth: Option<GroundTruth>) -> Result<Self> {
        let features = build_features(&daily)?;
        Ok(Dataset { daily, features, truth })
    }
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let range = config.data_range()?;
    match (&config.data.granular, &config.data.received) {
        (Some(g), Some(r)) => {
            let records: Vec<_> = ingest_granular(File::open(g)?)?
                .into_strict()?
                .into_iter()
                .filter(|rec| range.contains(rec.date))
                .collect();
            let received = parse_received(File::open(r)?)?;
            Dataset::from_daily(aggregate_daily(&records, &received, range)?, None)
        }
        (None, None) => {
            let data = generate(&config.synth_config()?)?;
            Dataset::from_daily(data.daily, Some(data.truth))
        }
        _ => Err(Error::Config("granular and received paths must be given together".into())),
    }
}

/// Standardized train and test rows of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub split: ScenarioSplit,
    pub train: FeatureMatrix,
    /// Standardized with the training statistics.
    pub test: FeatureMatrix,
    /// Train and test rows together, standardized with the training statistics.
    pub span: FeatureMatrix,
}

pub fn prepare_scenario(features: &FeatureMatrix, split: ScenarioSplit) -> Result<ScenarioData> {
    let (train, test) = split_scenario(features, &split)?;
    let stats = train.stats.clone().expect("standardized");
    let span = features.rows_in(split.span())?.standardize(Some(&stats))?;
    Ok(ScenarioData { split, train, test, span })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub forecast: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl ForecastSeries {
    fn point(dates: &[NaiveDate], actual: &[f64], forecast: Vec<f64>) -> Self {
        ForecastSeries { dates: dates.to_vec(), actual: actual.to_vec(), forecast, lower: None, upper: None }
    }

    pub fn has_band(&self) -> bool {
        self.lower.is_some()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date", "actual", "forecast"];
        if self.has_band() {
            header.extend(["lower", "upper"]);
        }
        w.write_record(&header)?;
        for i in 0..self.dates.len() {
            let mut row = vec![self.dates[i].to_string(), self.actual[i].to_string(), self.forecast[i].to_string()];
            if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
                row.push(lo[i].to_string());
                row.push(hi[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(source);
        let banded = rdr.headers()?.len() >= 5;
        let mut s = ForecastSeries {
            dates: vec![],
            actual: vec![],
            forecast: vec![],
            lower: banded.then(Vec::new),
            upper: banded.then(Vec::new),
        };
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = |m: String| Error::Row { line: i + 2, message: m };
            let num = |c: usize| -> Result<f64> {
                row.get(c).unwrap_or("").parse::<f64>().map_err(|e| bad(format!("column {c}: {e}")))
            };
            s.dates.push(row.get(0).unwrap_or("").parse().map_err(|e| bad(format!("date: {e}")))?);
            s.actual.push(num(1)?);
            s.forecast.push(num(2)?);
            if banded {
                s.lower.as_mut().expect("banded").push(num(3)?);
                s.upper.as_mut().expect("banded").push(num(4)?);
            }
        }
        Ok(s)
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub scenario: ScenarioName,
    pub train_rmse: f64,
    pub train_mape: f64,
    pub test_rmse: f64,
    pub test_mape: f64,
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(source: R) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(source).deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub search: SearchOutcome,
    pub diagnostics: ResidualDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub model: AdditiveModel,
    pub test_forecast: AdditiveForecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub model: LassoModel,
    pub cv: CvResult,
    /// Weight and test-prediction bands.
    pub band: Option<BootstrapBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmFit {
    pub model: LstmModel,
    pub grid: GridResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Arima(ArimaFit),
    Additive(AdditiveFit),
    Lasso(LassoFit),
    Lstm(LstmFit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub metrics: MetricsRow,
    /// In-sample one-step predictions (days with full lag history only).
    pub train: ForecastSeries,
    pub test: ForecastSeries,
    pub fitted: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model: ModelKind,
    pub scenario: ScenarioName,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlSeries {
    pub dates: Vec<NaiveDate>,
    pub result: StlResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: ScenarioSplit,
    /// In the order the models were requested.
    pub runs: Vec<ModelRun>,
    pub failures: Vec<ModelFailure>,
    /// Weekly STL of the training demand.
    pub stl: Option<StlSeries>,
}

impl EvaluationReport {
    pub fn metrics(&self) -> Vec<MetricsRow> {
        self.runs.iter().map(|r| r.metrics).collect()
    }

    pub fn run(&self, model: ModelKind) -> Option<&ModelRun> {
        self.runs.iter().find(|r| r.metrics.model == model)
    }
}

fn score(model: ModelKind, scenario: ScenarioName, train: &ForecastSeries, test: &ForecastSeries) -> Result<MetricsRow> {
    let row = MetricsRow {
        model,
        scenario,
        train_rmse: rmse(&train.actual, &train.forecast)?,
        train_mape: mape(&train.actual, &train.forecast)?.percent,
        test_rmse: rmse(&test.actual, &test.forecast)?,
        test_mape: mape(&test.actual, &test.forecast)?.percent,
    };
    if [row.train_rmse, row.train_mape, row.test_rmse, row.test_mape].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{model} metrics")));
    }
    Ok(row)
}

fn run_arima(data: &ScenarioData, settings: &ArimaSettings) -> Result<(ForecastSeries, ForecastSeries, FittedModel)> {
    let y = &data.train.target;
    let search = stepwise_search(y, &settings.search)?;
    let model = &search.model;
    let r = &model.residuals;
    let start = y.len() - r.len();
    let fitted: Vec<f64> = y[start..].iter().zip(r).map(|(a, e)| a - e).collect();
    let train = ForecastSeries::point(&data.train.dates[start..], &y[start..], fitted);
    let preds = rolling_forecast_refit(model, y, &data.test.target, settings.refit_every)?;
    let test = ForecastSeries::point(&data.test.dates, &data.test.target, preds);
    let diagnostics = residual_diagnostics(model)?;
    Ok((train, test, FittedModel::Arima(ArimaFit { search, diagnostics })))
}

fn run_additive(
    data: &ScenarioData,
    config: &AdditiveConfig,
    seed: u64,
) -> Result<(ForecastSeries, ForecastSeries, FittedModel)> {
    let model = fit_additive(&data.train.dates, &data.train.target, config)?;
    let train = ForecastSeries::point(&data.train.dates, &data.train.target, components(&model, &data.train.dates).point);
    let fc = predict_additive(&model, &data.test.dates, seed);
    let test = ForecastSeries {
        dates: data.test.dates.clone(),
        actual: data.test.target.clone(),
        forecast: fc.point.clone(),
        lower: Some(fc.lower.clone()),
        upper: Some(fc.upper.clone()),
    };
    Ok((train, test, FittedModel::Additive(AdditiveFit { model, test_forecast: fc })))
}

fn run_lasso(
    data: &ScenarioData,
    settings: &LassoSettings,
    seed: u64,
) -> Result<(ForecastSeries, ForecastSeries, FittedModel)> {
    let (x, y) = (&data.train.values, &data.train.target);
    let grid = lambda_path(x, y, settings.n_lambdas)?;
    let cv = cv_select_lambda(x, y, settings.folds, &grid, settings.fold_scheme, seed)?;
    let model = fit_lasso(&data.train, cv.lambda_star)?;
    let train = ForecastSeries::point(&data.train.dates, y, predict_lasso(&model, &data.train)?);
    let mut test = ForecastSeries::point(&data.test.dates, &data.test.target, predict_lasso(&model, &data.test)?);
    let band = if settings.bootstrap > 0 {
        let b = bootstrap(x, y, cv.lambda_star, settings.bootstrap, settings.level, seed, Some(&data.test.values))?;
        test.lower = Some(b.prediction_low.clone());
        test.upper = Some(b.prediction_high.clone());
        Some(b)
    } else {
        None
    };
    Ok((train, test, FittedModel::Lasso(LassoFit { model, cv, band })))
}

fn run_lstm(data: &ScenarioData, settings: &LstmSettings, seed: u64) -> Result<(ForecastSeries, ForecastSeries, FittedModel)> {
    let base = LstmConfig { seed, ..settings.base.clone() };
    let configs = expand_grid(&base, &settings.windows, &settings.hiddens, &settings.learning_rates);
    let grid = grid_search(&data.train, &configs)?;
    let model = train_lstm(&data.train, &grid.best)?;
    let first = model.config.window - 1;
    let train_dates = &data.train.dates[first..];
    let train = ForecastSeries::point(train_dates, &data.train.target[first..], predict_lstm(&model, &data.span, train_dates)?);
    let test = ForecastSeries::point(
        &data.test.dates,
        &data.test.target,
        predict_lstm(&model, &data.span, &data.test.dates)?,
    );
    Ok((train, test, FittedModel::Lstm(LstmFit { model, grid })))
}

/// Fits and scores one model. Its seed depends only on the master seed,
/// the model and the scenario.
pub fn run_model(kind: ModelKind, data: &ScenarioData, config: &RunConfig) -> Result<ModelRun> {
    let scenario = data.split.name;
    let seed = derive_seed(config.seed, &format!("{kind}/{scenario}"));
    let (train, test, fitted) = match kind {
        ModelKind::Arima => run_arima(data, &config.arima)?,
        ModelKind::Additive => run_additive(data, &config.additive, seed)?,
        ModelKind::Lasso => run_lasso(data, &config.lasso, seed)?,
        ModelKind::Lstm => run_lstm(data, &config.lstm, seed)?,
    };
    let metrics = score(kind, scenario, &train, &test)?;
    Ok(ModelRun { metrics, train, test, fitted })
}

/// Runs every configured model on one scenario. Models run concurrently; a
/// model that fails is listed in `failures` and the others still report.
pub fn run_scenario(dataset: &Dataset, split: ScenarioSplit, config: &RunConfig) -> Result<EvaluationReport> {
    let data = prepare_scenario(&dataset.features, split)?;
    let outcomes: Vec<(ModelKind, Result<ModelRun>)> =
        config.models.par_iter().map(|&m| (m, run_model(m, &data, config))).collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (model, outcome) in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(ModelFailure { model, scenario: split.name, error: e.to_string() }),
        }
    }
    let stl = stl_decompose(&data.train.target, 7, &config.stl)
        .ok()
        .map(|result| StlSeries { dates: data.train.dates.clone(), result });
    Ok(EvaluationReport { split, runs, failures, stl })
}

/// Loads the data once and runs every configured scenario.
pub fn run_all(config: &RunConfig) -> Result<(Dataset, Vec<EvaluationReport>)> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let reports = config.splits()?.into_iter().map(|s| run_scenario(&dataset, s, config)).collect::<Result<_>>()?;
    Ok((dataset, reports))
}

/// Test RMSE of the additive model fitted with and without holiday terms.
pub fn holiday_ablation(data: &ScenarioData, config: &AdditiveConfig) -> Result<(f64, f64)> {
    let (dates, y) = (&data.train.dates, &data.train.target);
    let with = fit_additive(dates, y, config)?;
    let without = fit_without_holidays(dates, y, config)?;
    let score = |m: &AdditiveModel| rmse(&data.test.target, &components(m, &data.test.dates).point);
    Ok((score(&with)?, score(&without)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub group: ModelGroup,
    pub model: ModelKind,
    pub scenario: ScenarioName,
    pub train_rmse: f64,
    pub train_mape: f64,
    pub test_rmse: f64,
    pub test_mape: f64,
}

impl ComparisonRow {
    pub fn metrics(&self) -> MetricsRow {
        MetricsRow {
            model: self.model,
            scenario: self.scenario,
            train_rmse: self.train_rmse,
            train_mape: self.train_mape,
            test_rmse: self.test_rmse,
            test_mape: self.test_mape,
        }
    }
}

/// Metrics grouped univariate then multivariate, each sorted by model then scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_report(rows: &[MetricsRow]) -> Result<ComparisonTable> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("comparison needs at least one metrics row".into()));
    }
    let mut out: Vec<ComparisonRow> = rows
        .iter()
        .map(|m| ComparisonRow {
            group: m.model.group(),
            model: m.model,
            scenario: m.scenario,
            train_rmse: m.train_rmse,
            train_mape: m.train_mape,
            test_rmse: m.test_rmse,
            test_mape: m.test_mape,
        })
        .collect();
    out.sort_by_key(|r| (r.group, r.model, r.scenario));
    Ok(ComparisonTable { rows: out })
}

impl ComparisonTable {
    pub fn groups(&self) -> Vec<ModelGroup> {
        let mut g: Vec<ModelGroup> = self.rows.iter().map(|r| r.group).collect();
        g.dedup();
        g
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let rows = csv::Reader::from_reader(source).deserialize().collect::<Result<_, _>>()?;
        Ok(ComparisonTable { rows })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for g in self.groups() {
            s.push_str(&format!("{} models\n", capitalize(g.as_str())));
            s.push_str(&format!(
                "  {:<10} {:<11} {:>10} {:>10} {:>10} {:>10}\n",
                "model", "scenario", "train_rmse", "train_mape", "test_rmse", "test_mape"
            ));
            for r in self.rows.iter().filter(|r| r.group == g) {
                s.push_str(&format!(
                    "  {:<10} {:<11} {:>10.3} {:>9.2}% {:>10.3} {:>9.2}%\n",
                    r.model.as_str(),
                    r.scenario.as_str(),
                    r.train_rmse,
                    r.train_mape,
                    r.test_rmse,
                    r.test_mape
                ));
            }
        }
        s
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_stl_csv<W: Write>(dates: &[NaiveDate], stl: &StlResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "trend", "seasonal", "residual"])?;
    for (i, d) in dates.iter().enumerate() {
        w.write_record([
            d.to_string(),
            stl.trend[i].to_string(),
            stl.seasonal[i].to_string(),
            stl.residual[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residual_acf_csv<W: Write>(diag: &ResidualDiagnostics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lag", "acf", "pacf", "band"])?;
    for k in 0..diag.acf.len() {
        w.write_record([k.to_string(), diag.acf[k].to_string(), diag.pacf[k].to_string(), diag.band.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the raw feature table with its date and target columns.
pub fn write_features_csv<W: Write>(m: &FeatureMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(m.columns.iter().cloned());
    header.push("target".into());
    w.write_record(&header)?;
    for i in 0..m.n_rows() {
        let mut row = vec![m.dates[i].to_string()];
        row.extend((0..m.n_cols()).map(|j| m.values[(i, j)].to_string()));
        row.push(m.target[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the fitted-model artifacts of every run into `dir`.
pub fn write_model_artifacts(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &report.runs {
        match &run.fitted {
            FittedModel::Arima(a) => {
                let p = dir.join("arima_model.json");
                std::fs::write(&p, a.search.model.to_json()?)?;
                written.push(p);
                let p = dir.join("arima_residual_acf.csv");
                write_residual_acf_csv(&a.diagnostics, create(&p)?)?;
                written.push(p);
            }
            FittedModel::Additive(a) => {
                let p = dir.join("additive_model.json");
                serde_json::to_writer_pretty(create(&p)?, &a.model)?;
                written.push(p);
                let p = dir.join("additive_components.csv");
                let parts = components(&a.model, &run.test.dates);
                write_components_csv(create(&p)?, &run.test.dates, &parts, &a.test_forecast)?;
                written.push(p);
            }
            FittedModel::Lasso(l) => {
                let p = dir.join("lasso_model.json");
                serde_json::to_writer_pretty(create(&p)?, &l.model)?;
                written.push(p);
                if let Some(band) = &l.band {
                    let p = dir.join("lasso_weights.csv");
                    write_weight_report(create(&p)?, &l.model, band)?;
                    written.push(p);
                }
            }
            FittedModel::Lstm(l) => {
                let p = dir.join("lstm_checkpoint.json");
                write_checkpoint(&l.model, create(&p)?)?;
                written.push(p);
                let p = dir.join("lstm_loss.csv");
                write_loss_history(&l.model, create(&p)?)?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Writes metrics, failures, per-model forecast files, the STL table and
/// model artifacts into `dir`.
pub fn emit_plot_data(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let p = dir.join("metrics.csv");
    write_metrics_csv(&report.metrics(), create(&p)?)?;
    written.push(p);
    let p = dir.join("failures.csv");
    {
        let mut w = csv::Writer::from_writer(create(&p)?);
        w.write_record(["model", "scenario", "error"])?;
        for f in &report.failures {
            w.write_record([f.model.as_str(), f.scenario.as_str(), &f.error])?;
        }
        w.flush()?;
    }
    written.push(p);
    for run in &report.runs {
        let p = dir.join(format!("forecast_{}.csv", run.metrics.model));
        run.test.write_csv(create(&p)?)?;
        written.push(p);
    }
    if let Some(stl) = &report.stl {
        let p = dir.join("stl.csv");
        write_stl_csv(&stl.dates, &stl.result, create(&p)?)?;
        written.push(p);
    }
    written.extend(write_model_artifacts(report, dir)?);
    Ok(written)
}

/// Writes each report under `out/<scenario>/` plus the merged metrics and
/// comparison tables at the top level.
pub fn write_evaluation(reports: &[EvaluationReport], out: &Path) -> Result<ComparisonTable> {
    std::fs::create_dir_all(out)?;
    let mut all = Vec::new();
    for r in reports {
        emit_plot_data(r, &out.join(r.split.name.as_str()))?;
        all.extend(r.metrics());
    }
    write_metrics_csv(&all, create(&out.join("metrics.csv"))?)?;
    let table = compare_report(&all)?;
    table.write_csv(create(&out.join("comparison.csv"))?)?;
    std::fs::write(out.join("comparison.txt"), table.render())?;
    Ok(table)
}

/// Exploratory statistics of the daily demand series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploratory {
    pub n_days: usize,
    pub mean: f64,
    pub sd: f64,
    /// Monday first.
    pub dow_means: [f64; 7],
    /// January first.
    pub month_means: [f64; 12],
    pub weekday_mean: f64,
    pub weekend_mean: f64,
    /// Weekday vs weekend days, each day one observation.
    pub weekday_weekend_daily: MannWhitney,
    /// Five weekday means vs two weekend means.
    pub weekday_weekend_dow_means: MannWhitney,
    pub anova_weekday: Anova,
    pub anova_month: Anova,
    pub boxplot: BoxplotSummary,
    pub received_mean: f64,
    pub received_sd: f64,
    pub transfused_vs_received: MannWhitney,
    pub adf: AdfResult,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

pub fn exploratory_report(daily: &[DailyAggregate]) -> Result<Exploratory> {
    if daily.len() < 28 {
        return Err(Error::InsufficientData(format!("exploratory report needs 28 days, got {}", daily.len())));
    }
    let demand: Vec<f64> = daily.iter().map(|d| f64::from(d.units_transfused)).collect();
    let received: Vec<f64> = daily.iter().map(|d| f64::from(d.units_received)).collect();
    let mut by_dow: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut by_month: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for (d, &y) in daily.iter().zip(&demand) {
        by_dow[d.date.weekday().num_days_from_monday() as usize].push(y);
        by_month[d.date.month0() as usize].push(y);
    }
    let group_mean = |g: &[f64]| if g.is_empty() { f64::NAN } else { g.iter().sum::<f64>() / g.len() as f64 };
    let dow_means: [f64; 7] = std::array::from_fn(|i| group_mean(&by_dow[i]));
    let month_means: [f64; 12] = std::array::from_fn(|i| group_mean(&by_month[i]));
    let weekday: Vec<f64> = by_dow[..5].concat();
    let weekend: Vec<f64> = by_dow[5..].concat();
    let months: Vec<Vec<f64>> = by_month.into_iter().filter(|g| !g.is_empty()).collect();
    let (mean, sd) = mean_sd(&demand);
    let (received_mean, received_sd) = mean_sd(&received);
    Ok(Exploratory {
        n_days: daily.len(),
        mean,
        sd,
        dow_means,
        month_means,
        weekday_mean: group_mean(&weekday),
        weekend_mean: group_mean(&weekend),
        weekday_weekend_daily: mann_whitney_u(&weekday, &weekend)?,
        weekday_weekend_dow_means: mann_whitney_u(&dow_means[..5], &dow_means[5..])?,
        anova_weekday: anova_oneway(&by_dow)?,
        anova_month: anova_oneway(&months)?,
        boxplot: boxplot_stats(&demand)?,
        received_mean,
        received_sd,
        transfused_vs_received: mann_whitney_u(&demand, &received)?,
        adf: adf_test(&demand, None)?,
    })
}

impl Exploratory {
    pub fn render(&self) -> String {
        let p = |r: &crate::stats::TestResult| r.p_value.map_or("n/a".to_string(), |p| format!("{p:.4}"));
        let mut s = String::new();
        s.push_str(&format!("days: {}\nmean demand: {:.2} (sd {:.2})\n", self.n_days, self.mean, self.sd));
        s.push_str(&format!(
            "weekday mean {:.2}, weekend mean {:.2}\n",
            self.weekday_mean, self.weekend_mean
        ));
        let names = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
        s.push_str("day-of-week means:");
        for (n, m) in names.iter().zip(&self.dow_means) {
            s.push_str(&format!(" {n} {m:.2}"));
        }
        s.push_str("\nmonthly means:");
        for (i, m) in self.month_means.iter().enumerate() {
            s.push_str(&format!(" {} {m:.2}", i + 1));
        }
        s.push('\n');
        s.push_str(&format!(
            "Mann-Whitney weekday vs weekend (daily values): U {:.1}, p {}\n",
            self.weekday_weekend_daily.u_a,
            p(&self.weekday_weekend_daily.result)
        ));
        s.push_str(&format!(
            "Mann-Whitney weekday vs weekend (day-of-week means): U {:.1}, p {}\n",
            self.weekday_weekend_dow_means.u_a,
            p(&self.weekday_weekend_dow_means.result)
        ));
        s.push_str(&format!("ANOVA by weekday: F {:.2}, p {}\n", self.anova_weekday.f, p(&self.anova_weekday.result)));
        s.push_str(&format!("ANOVA by month: F {:.2}, p {}\n", self.anova_month.f, p(&self.anova_month.result)));
        let b = &self.boxplot;
        s.push_str(&format!(
            "boxplot: q1 {:.2}, median {:.2}, q3 {:.2}, whiskers [{:.2}, {:.2}], {} outliers\n",
            b.q1,
            b.median,
            b.q3,
            b.whisker_low,
            b.whisker_high,
            b.outliers.len()
        ));
        s.push_str(&format!(
            "received: mean {:.2} (sd {:.2}); Mann-Whitney transfused vs received p {}\n",
            self.received_mean,
            self.received_sd,
            p(&self.transfused_vs_received.result)
        ));
        s.push_str(&format!(
            "ADF: statistic {:.3}, 5% critical {:.3}, {} lags, unit root {}\n",
            self.adf.result.statistic,
            self.adf.critical_values.five_pct,
            self.adf.lags,
            if self.adf.result.reject_at_5pct { "rejected" } else { "not rejected" }
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_list_parsing() {
        assert_eq!(ModelKind::parse_list("lasso, arima,lasso").unwrap(), vec![ModelKind::Lasso, ModelKind::Arima]);
        assert!(ModelKind::parse_list("").is_err());
        assert!(ModelKind::parse_list("arima,prophet").is_err());
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "lasso/two_year"), derive_seed(1, "lasso/eight_year"));
        assert_ne!(derive_seed(1, "lasso/two_year"), derive_seed(2, "lasso/two_year"));
        assert_eq!(derive_seed(7, "x"), derive_seed(7, "x"));
    }

    #[test]
    fn data_range_includes_lag_lead_in() {
        let cfg = RunConfig::default();
        let r = cfg.data_range().unwrap();
        assert_eq!(r.start, NaiveDate::from_ymd_opt(2009, 12, 25).unwrap());
        assert_eq!(r.end, NaiveDate::from_ymd_opt(2018, 12, 31).unwrap());
    }

    #[test]
    fn config_rejects_empty_models_and_half_paths() {
        assert!(RunConfig::from_toml("models = []").is_err());
        assert!(RunConfig::from_toml("[data]\ngranular = \"g.csv\"").is_err());
        assert!(RunConfig::from_toml("scenarios = [\"custom\"]").is_err());
        let ok = RunConfig::from_toml("seed = 3\nmodels = [\"arima\"]\n[lasso]\nbootstrap = 10").unwrap();
        assert_eq!(ok.seed, 3);
        assert_eq!(ok.lasso.bootstrap, 10);
        assert_eq!(ok.lasso.folds, 5);
    }
}
