//! Versioned JSON documents written and read by the CLI.
//!
//! Every document starts with `schema_version`. Readers accept any `1.x` and
//! reject other majors before looking at the rest of the document.

use std::path::Path;

use bcbof::factor::FactorModel;
use bcbof::fuzzy::RuleBase;
use bcbof::indicators::IndicatorSpec;
use bcbof::metrics::MetricsReport;
use bcbof::pipeline::TradingModel;
use bcbof::strategy::{PsoConfig, PsoResult, RuleCounts, Signal, StrategyParams, Trade};
use bcbof::{Bicluster, Error, NormalizationParams, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiclusterRecord {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub msr: f64,
    pub col_labels: Vec<String>,
}

impl BiclusterRecord {
    pub fn from_bicluster(b: &Bicluster, col_labels: &[String]) -> Self {
        BiclusterRecord {
            rows: b.rows.clone(),
            cols: b.cols.clone(),
            msr: b.msr,
            col_labels: b.cols.iter().map(|&c| col_labels.get(c).cloned().unwrap_or_default()).collect(),
        }
    }

    pub fn to_bicluster(&self) -> Bicluster {
        Bicluster {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            msr: self.msr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiclustersDoc {
    pub schema_version: String,
    /// Rows and columns of the matrix the indices refer to.
    pub shape: [usize; 2],
    pub delta: f64,
    pub biclusters: Vec<BiclusterRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsDoc {
    pub schema_version: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorsDoc {
    pub schema_version: String,
    pub col_labels: Vec<String>,
    pub model: FactorModel,
    pub column_clusters: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesDoc {
    pub schema_version: String,
    pub rule_base: RuleBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormDoc {
    pub schema_version: String,
    pub indicators: Vec<IndicatorSpec>,
    pub norm: NormalizationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub schema_version: String,
    /// Strategy parameters; `t_h` is the optimized threshold.
    pub params: StrategyParams,
    pub pso_config: PsoConfig,
    pub pso: PsoResult,
    pub train_days: usize,
    pub train_first_date: String,
    pub train_last_date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsDoc {
    pub schema_version: String,
    pub signals: Vec<Signal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub schema_version: String,
    pub t_h: f64,
    pub start_day: usize,
    pub start_date: String,
    pub end_date: String,
    pub test_days: usize,
    /// Percent over all trades, forced exit included.
    pub strategy_profit: f64,
    pub profit_without_forced: f64,
    pub buy_and_hold_profit: f64,
    pub rule_counts: RuleCounts,
    pub trades: Vec<Trade>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

/// Checks `schema_version`, then decodes the document strictly.
pub fn from_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| Error::Schema(format!("{what}: missing field `schema_version`")))?
        .as_str()
        .ok_or_else(|| Error::Schema(format!("{what}: `schema_version` must be a string")))?;
    if version.split('.').next() != Some(SUPPORTED_MAJOR) {
        return Err(Error::Schema(format!(
            "{what}: unsupported schema_version {version:?}, expected {SUPPORTED_MAJOR}.x"
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn parse_biclusters_json(text: &str) -> Result<BiclustersDoc> {
    let doc: BiclustersDoc = from_json(text, "biclusters.json")?;
    let [n, p] = doc.shape;
    for (k, r) in doc.biclusters.iter().enumerate() {
        if r.col_labels.len() != r.cols.len() {
            return Err(Error::Schema(format!(
                "biclusters.json: bicluster {k} has {} columns but {} col_labels",
                r.cols.len(),
                r.col_labels.len()
            )));
        }
        r.to_bicluster()
            .validate((n, p), None)
            .map_err(|e| Error::Schema(format!("biclusters.json: bicluster {k}: {e}")))?;
    }
    Ok(doc)
}

pub fn load_biclusters(path: &Path) -> Result<BiclustersDoc> {
    parse_biclusters_json(&read(path)?).map_err(|e| with_path(e, path))
}

pub fn parse_rules_json(text: &str) -> Result<RulesDoc> {
    let doc: RulesDoc = from_json(text, "rules.json")?;
    doc.rule_base.validate().map_err(|e| Error::Schema(format!("rules.json: {e}")))?;
    Ok(doc)
}

pub fn parse_norm_json(text: &str) -> Result<NormDoc> {
    let doc: NormDoc = from_json(text, "norm.json")?;
    doc.norm.validate().map_err(|e| Error::Schema(format!("norm.json: {e}")))?;
    Ok(doc)
}

pub fn parse_params_json(text: &str) -> Result<ParamsDoc> {
    let doc: ParamsDoc = from_json(text, "params.json")?;
    // both sections default missing fields when read from a config; a stored
    // bundle must spell them all out
    let value: serde_json::Value = serde_json::from_str(text)?;
    require_fields(&value, "params", &StrategyParams::default())?;
    require_fields(&value, "pso_config", &PsoConfig::default())?;
    doc.params.validate().map_err(|e| Error::Schema(format!("params.json: {e}")))?;
    Ok(doc)
}

fn require_fields<T: Serialize>(doc: &serde_json::Value, section: &str, template: &T) -> Result<()> {
    let template = serde_json::to_value(template)?;
    let present = doc.get(section).and_then(|v| v.as_object());
    for key in template.as_object().into_iter().flat_map(|m| m.keys()) {
        if !present.is_some_and(|m| m.contains_key(key)) {
            return Err(Error::Schema(format!("params.json: missing field `{section}.{key}`")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model: TradingModel,
    pub params: ParamsDoc,
}

/// Assembles a trading model from its three documents and cross-checks them.
pub fn parse_bundle(rules: &str, norm: &str, params: &str) -> Result<Bundle> {
    let rules = parse_rules_json(rules)?;
    let norm = parse_norm_json(norm)?;
    let params = parse_params_json(params)?;
    let model = TradingModel {
        indicators: norm.indicators,
        norm: norm.norm,
        rule_base: rules.rule_base,
        params: params.params,
    };
    model.validate().map_err(|e| Error::Schema(format!("bundle: {e}")))?;
    Ok(Bundle { model, params })
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let [rules, norm, params] = ["rules.json", "norm.json", "params.json"].map(|f| read(&dir.join(f)));
    parse_bundle(&rules?, &norm?, &params?).map_err(|e| with_path(e, dir))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    }
}
