//! Configuration, CSV ingestion with metric normalization, and report encoding.
//!
//! Input CSV: header row, columns `dataset`, `classifier`, then one column per
//! declared metric (extra columns are ignored). Every metric is mapped into
//! `[0, 1]` with higher meaning better, rounded, and reordered so cardinal
//! metrics come first.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{validate_table, EvaluationPoint, MetricSpec, PerformanceTable, Scale, ScaleSpec, TestConfig};

pub const TOOL_NAME: &str = "gsd";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Higher,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// Values must already lie in `[0, 1]`; lower-is-better maps to `1 - x`.
    #[default]
    None,
    /// Equal-frequency bins embedded at their midpoints `(2j - 1) / (2 bins)`.
    Decile,
    /// `(x - min) / (max - min)`; a constant column maps to `0.5`.
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecileScope {
    /// Bins over the whole metric column.
    #[default]
    Pooled,
    /// Bins over the classifiers within each dataset.
    PerDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub name: String,
    pub scale: Scale,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub version: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `ceil(s / 4)`.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_decimals")]
    pub decimals: u32,
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default)]
    pub decile_scope: DecileScope,
    #[serde(rename = "metric")]
    pub metrics: Vec<MetricConfig>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_resamples() -> usize {
    1000
}

fn default_decimals() -> u32 {
    6
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("declare at least one [[metric]]".into()));
        }
        if self.decimals > 12 {
            return Err(Error::Config(format!("decimals {} not in 0..=12", self.decimals)));
        }
        for m in &self.metrics {
            if m.transform == Transform::Decile && m.bins < 2 {
                return Err(Error::Config(format!("metric '{}': bins must be at least 2", m.name)));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in [0,1]", self.epsilon)));
        }
        self.test_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.scale().map(|_| ())
    }

    /// Canonical scale (cardinal first) and the declared index of each canonical metric.
    pub fn scale(&self) -> Result<(ScaleSpec, Vec<usize>)> {
        ScaleSpec::canonical(
            self.metrics
                .iter()
                .map(|m| MetricSpec {
                    name: m.name.clone(),
                    scale: m.scale,
                })
                .collect(),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            n_resamples: self.n_resamples,
            delta: self.delta,
            seed: self.seed,
            exhaustive: self.exhaustive,
        }
    }
}

/// One input row; `values` follow the declared metric order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub dataset_id: String,
    pub classifier_id: String,
    pub values: Vec<f64>,
}

/// Reads the declared metric columns. Rows must have unique `(dataset, classifier)`.
pub fn read_raw_records<R: Read>(input: R, config: &AnalysisConfig) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    };
    let (dcol, ccol) = (col("dataset")?, col("classifier")?);
    let mcols: Vec<usize> = config.metrics.iter().map(|m| col(&m.name)).collect::<Result<_>>()?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |c: usize| row.get(c).unwrap_or("");
        let (dataset_id, classifier_id) = (field(dcol).to_string(), field(ccol).to_string());
        if dataset_id.is_empty() || classifier_id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty dataset or classifier id")));
        }
        if let Some(prev) = seen.insert((dataset_id.clone(), classifier_id.clone()), line) {
            return Err(Error::Data(format!(
                "line {line}: duplicate record ({classifier_id}, {dataset_id}), first seen on line {prev}"
            )));
        }
        let values = mcols
            .iter()
            .zip(&config.metrics)
            .map(|(&c, m)| {
                let text = field(c);
                if text.is_empty() {
                    return Err(Error::Data(format!(
                        "line {line}: missing value for metric '{}' ({classifier_id}, {dataset_id})",
                        m.name
                    )));
                }
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("line {line}: cannot parse '{text}' for metric '{}'", m.name)))
            })
            .collect::<Result<_>>()?;
        out.push(RawRecord {
            dataset_id,
            classifier_id,
            values,
        });
    }
    Ok(out)
}

/// Equal-frequency bin midpoints for `values`, counting positions from the worst value.
/// Tied values share the bin of the first position of their group.
pub fn decile_embed(values: &[f64], bins: usize, orientation: Orientation) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    match orientation {
        Orientation::Higher => order.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
        Orientation::Lower => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let bin = start * bins / n;
        let mid = (2 * bin + 1) as f64 / (2 * bins) as f64;
        order[start..=end].iter().for_each(|&i| out[i] = mid);
        start = end + 1;
    }
    out
}

/// Min-max scaling with orientation; `None` signals a constant column (mapped to 0.5).
fn minmax(values: &[f64], orientation: Orientation) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return (vec![0.5; values.len()], true);
    }
    let out = values
        .iter()
        .map(|&x| match orientation {
            Orientation::Higher => (x - lo) / (hi - lo),
            Orientation::Lower => (hi - x) / (hi - lo),
        })
        .collect();
    (out, false)
}

pub fn round_to(x: f64, decimals: u32) -> f64 {
    let f = 10f64.powi(decimals as i32);
    let r = (x * f).round() / f;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub table: PerformanceTable,
    pub warnings: Vec<String>,
}

/// Normalized table before validation, with warnings; used by dry runs.
pub fn ingest_unchecked(records: &[RawRecord], config: &AnalysisConfig) -> Result<Ingested> {
    let (scale, order) = config.scale()?;
    let mut classifiers: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut c_index: HashMap<&str, usize> = HashMap::new();
    let mut d_index: HashMap<&str, usize> = HashMap::new();
    for r in records {
        if !c_index.contains_key(r.classifier_id.as_str()) {
            c_index.insert(&r.classifier_id, classifiers.len());
            classifiers.push(r.classifier_id.clone());
        }
        if !d_index.contains_key(r.dataset_id.as_str()) {
            d_index.insert(&r.dataset_id, datasets.len());
            datasets.push(r.dataset_id.clone());
        }
    }
    let mut warnings = Vec::new();
    let n_decl = config.metrics.len();
    let mut transformed: Vec<Vec<f64>> = vec![vec![0.0; n_decl]; records.len()];
    for (j, m) in config.metrics.iter().enumerate() {
        let column: Vec<f64> = records.iter().map(|r| r.values[j]).collect();
        let mapped: Vec<f64> = match m.transform {
            Transform::None => column
                .iter()
                .map(|&x| match m.orientation {
                    Orientation::Higher => x,
                    Orientation::Lower => 1.0 - x,
                })
                .collect(),
            Transform::Minmax => {
                let (v, constant) = minmax(&column, m.orientation);
                if constant {
                    warnings.push(format!("metric '{}' is constant; mapped to 0.5", m.name));
                }
                v
            }
            Transform::Decile => match config.decile_scope {
                DecileScope::Pooled => decile_embed(&column, m.bins, m.orientation),
                DecileScope::PerDataset => {
                    let mut v = vec![0.0; records.len()];
                    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for (i, r) in records.iter().enumerate() {
                        groups.entry(d_index[r.dataset_id.as_str()]).or_default().push(i);
                    }
                    for rows in groups.values() {
                        let vals: Vec<f64> = rows.iter().map(|&i| column[i]).collect();
                        for (&i, e) in rows.iter().zip(decile_embed(&vals, m.bins, m.orientation)) {
                            v[i] = e;
                        }
                    }
                    v
                }
            },
        };
        for (i, x) in mapped.into_iter().enumerate() {
            transformed[i][j] = round_to(x, config.decimals);
        }
    }
    let s = datasets.len();
    let mut cells: Vec<Option<EvaluationPoint>> = vec![None; classifiers.len() * s];
    for (r, vals) in records.iter().zip(transformed) {
        let (c, d) = (c_index[r.classifier_id.as_str()], d_index[r.dataset_id.as_str()]);
        cells[c * s + d] = Some(EvaluationPoint::new(order.iter().map(|&k| vals[k]).collect()));
    }
    Ok(Ingested {
        table: PerformanceTable::from_cells(classifiers, datasets, scale, cells),
        warnings,
    })
}

/// Reads, normalizes and validates a CSV into a table.
pub fn ingest<R: Read>(input: R, config: &AnalysisConfig) -> Result<Ingested> {
    let records = read_raw_records(input, config)?;
    let out = ingest_unchecked(&records, config)?;
    let violations = validate_table(&out.table);
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(Error::InvalidTable(violations))
    }
}

/// Parameters echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub seed: u64,
}

impl RunInfo {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            command: command.into(),
            seed,
        }
    }

    /// One-line provenance comment for CSV and DOT outputs.
    pub fn banner(&self, comment: &str) -> String {
        format!(
            "{comment} {} {} {} seed={}\n",
            self.tool, self.tool_version, self.command, self.seed
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    #[serde(flatten)]
    pub info: RunInfo,
    pub result: T,
}

/// Pretty JSON with a trailing newline; struct fields keep declaration order.
pub fn to_json<T: Serialize>(info: &RunInfo, result: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&Report {
        info: info.clone(),
        result,
    })?;
    text.push('\n');
    Ok(text)
}

/// CSV text preceded by a `#` provenance line.
pub fn to_csv<S: Serialize>(info: &RunInfo, rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(info.banner("#") + &String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))?)
}

/// Prepends a `#` provenance line to already formatted CSV.
pub fn with_csv_banner(info: &RunInfo, csv_text: &str) -> String {
    info.banner("#") + csv_text
}

/// DOT text preceded by a `//` provenance line.
pub fn with_dot_banner(info: &RunInfo, dot: &str) -> String {
    info.banner("//") + dot
}

/// Writes `content`, creating parent directories.
pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Long-format rows of a `d` matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DRow<'a> {
    pub first: &'a str,
    pub second: &'a str,
    pub d: f64,
}

pub fn d_rows(d: &crate::gsd::DMatrix) -> Vec<DRow<'_>> {
    let k = d.classifiers.len();
    (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| DRow {
            first: &d.classifiers[i],
            second: &d.classifiers[j],
            d: d.get(i, j),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
version = 1
seed = 7

[[metric]]
name = "time"
scale = "ordinal"
orientation = "lower"
transform = "decile"

[[metric]]
name = "acc"
scale = "cardinal"
"#;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = AnalysisConfig::from_toml_str(CONFIG).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.decimals, 6);
        assert_eq!(cfg.metrics[0].bins, 10);
        let (scale, order) = cfg.scale().unwrap();
        assert_eq!(scale.metrics()[0].name, "acc");
        assert_eq!(order, vec![1, 0]);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(AnalysisConfig::from_toml_str(&CONFIG.replace("version = 1", "version = 2")).is_err());
        assert!(AnalysisConfig::from_toml_str(&CONFIG.replace("seed = 7", "seed = 7\ndecimals = 13")).is_err());
        assert!(AnalysisConfig::from_toml_str(&CONFIG.replace("seed = 7", "seed = 7\nbogus = 1")).is_err());
        assert!(AnalysisConfig::from_toml_str(
            &CONFIG.replace("transform = \"decile\"", "transform = \"decile\"\nbins = 1")
        )
        .is_err());
    }

    #[test]
    fn runtimes_fall_into_oriented_deciles() {
        let times: Vec<f64> = (1..=10).map(|t| t as f64).collect();
        let e = decile_embed(&times, 10, Orientation::Lower);
        assert!((e[9] - 0.05).abs() < 1e-12, "slowest");
        assert!((e[0] - 0.95).abs() < 1e-12, "fastest");
    }

    #[test]
    fn ties_share_a_bin() {
        // Positions 3..5 straddle the boundary between bins 1 and 2 of 5.
        let v = [1.0, 2.0, 3.0, 4.0, 4.0, 4.0, 7.0, 8.0, 9.0, 10.0];
        let e = decile_embed(&v, 5, Orientation::Higher);
        assert_eq!(e[3], e[4]);
        assert_eq!(e[4], e[5]);
        assert_eq!(e[3], 0.3);
    }

    #[test]
    fn ingest_reorders_and_rounds() {
        let cfg = AnalysisConfig::from_toml_str(CONFIG).unwrap();
        let csv = "dataset,classifier,acc,time\nd1,A,0.91234567,3\nd1,B,0.8,5\nd2,A,0.7,1\nd2,B,0.6,2\n";
        let t = ingest(csv.as_bytes(), &cfg).unwrap().table;
        assert_eq!(t.classifiers(), ["A", "B"]);
        assert_eq!(t.point(0, 0).values()[0], 0.912346);
        // time: 5 slowest -> bin 0 of 10 over 4 values.
        assert_eq!(t.point(1, 0).values()[1], 0.05);
    }

    #[test]
    fn ingest_reports_missing_and_out_of_range() {
        let cfg = AnalysisConfig::from_toml_str(CONFIG).unwrap();
        let csv = "dataset,classifier,acc,time\nd1,A,0.9,3\nd1,B,1.2,5\nd2,A,0.7,1\n";
        match ingest(csv.as_bytes(), &cfg) {
            Err(Error::InvalidTable(v)) => {
                let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                assert!(text.contains(&"value out of [0,1] at (B, d1, metric acc)".to_string()));
                assert!(text.contains(&"missing evaluation (B, d2)".to_string()));
            }
            other => panic!("{other:?}"),
        }
        let bad = "dataset,classifier,acc,time\nd1,A,abc,3\n";
        assert!(matches!(ingest(bad.as_bytes(), &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn constant_minmax_column_warns() {
        let cfg = AnalysisConfig::from_toml_str(
            "version = 1\n[[metric]]\nname = \"x\"\nscale = \"cardinal\"\ntransform = \"minmax\"\n",
        )
        .unwrap();
        let csv = "dataset,classifier,x\nd1,A,3\nd1,B,3\n";
        let out = ingest(csv.as_bytes(), &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.table.point(0, 0).values(), [0.5]);
    }

    #[test]
    fn empty_front_serializes() {
        let info = RunInfo::new("analyze", 3);
        let front = crate::gsd::FrontResult {
            members: vec![],
            epsilon: 0.1,
            kind: crate::gsd::FrontKind::EGsd,
        };
        let text = to_json(&info, &front).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["result"]["members"], serde_json::json!([]));
        assert_eq!(v["seed"], 3);
        assert_eq!(v["tool_version"], TOOL_VERSION);
    }
}
