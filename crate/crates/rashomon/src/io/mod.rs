//! Run configuration, CSV ingestion and result artifacts.

mod artifact;

pub use artifact::{
    artifact_bytes, parse_artifact, read_artifact, write_artifact, write_atomic, Artifact, ARTIFACT_FORMAT, ARTIFACT_VERSION,
};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::enumerate::{EnumerationOptions, ReferenceMode};
use crate::error::{Error, Result};
use crate::hasse::{FeatureCombination, FeatureSpace, PartitionMatrix, Profile};
use crate::loss::{Dataset, LossConfig};

/// One factor: its column name and ordered level labels. In profile mode
/// the first label is the control level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Constant,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub features: Vec<FeatureDecl>,
    #[serde(default = "default_outcome_column")]
    pub outcome_column: String,
    pub lambda: f64,
    pub epsilon: f64,
    /// `fullsplit`, `greedy`, `map` or `file:PATH`.
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_true")]
    pub cross_profile: bool,
    #[serde(default)]
    pub single_profile: bool,
    #[serde(default)]
    pub outcome_model: OutcomeKind,
    #[serde(default)]
    pub h_max: Option<usize>,
    #[serde(default)]
    pub max_rps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_outcome_column() -> String {
    "y".into()
}

fn default_reference() -> String {
    "fullsplit".into()
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn new(features: Vec<FeatureDecl>, lambda: f64, epsilon: f64) -> Self {
        Self {
            features,
            outcome_column: default_outcome_column(),
            lambda,
            epsilon,
            reference: default_reference(),
            cross_profile: true,
            single_profile: false,
            outcome_model: OutcomeKind::Constant,
            h_max: None,
            max_rps: None,
            seed: None,
            data: None,
            out: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidParameter("no features declared".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidParameter(format!("feature {:?} declared twice", f.name)));
            }
            let mut labels = HashSet::new();
            for l in &f.levels {
                if !labels.insert(l.as_str()) {
                    return Err(Error::InvalidParameter(format!("label {l:?} repeated in feature {:?}", f.name)));
                }
            }
        }
        if names.contains(self.outcome_column.as_str()) {
            return Err(Error::InvalidParameter("outcome column clashes with a feature name".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        self.space()?;
        self.reference_spec()?;
        Ok(())
    }

    pub fn space(&self) -> Result<FeatureSpace> {
        let levels = self.features.iter().map(|f| f.levels.len()).collect();
        if self.single_profile {
            FeatureSpace::single_profile(levels)
        } else {
            FeatureSpace::new(levels)
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        let cfg = LossConfig::new(self.lambda);
        match self.outcome_model {
            OutcomeKind::Constant => cfg,
            OutcomeKind::Linear => cfg.linear(),
        }
    }

    pub fn enumeration_options(&self) -> EnumerationOptions {
        EnumerationOptions {
            h_max: self.h_max,
            cross_profile: self.cross_profile && !self.single_profile,
            profiles: None,
            max_rps: self.max_rps,
        }
    }

    pub fn reference_spec(&self) -> Result<ReferenceSpec> {
        ReferenceSpec::parse(&self.reference)
    }

    /// Level index of `label` for feature `m`.
    pub fn level_of(&self, m: usize, label: &str) -> Option<usize> {
        let offset = if self.single_profile { 1 } else { 0 };
        self.features[m].levels.iter().position(|l| l == label).map(|i| i + offset)
    }

    pub fn label_of(&self, m: usize, level: usize) -> Option<&str> {
        let offset = if self.single_profile { 1 } else { 0 };
        level.checked_sub(offset).and_then(|i| self.features[m].levels.get(i)).map(String::as_str)
    }

    /// Parses labels (or, failing that, integer levels) for the given features.
    pub fn parse_levels(&self, features: &[usize], items: &[&str]) -> Result<Vec<usize>> {
        if items.len() != features.len() {
            return Err(Error::DimensionMismatch { expected: features.len(), got: items.len() });
        }
        features
            .iter()
            .zip(items)
            .map(|(&m, s)| {
                let s = s.trim();
                self.level_of(m, s)
                    .or_else(|| s.parse().ok().filter(|&l| self.label_of(m, l).is_some()))
                    .ok_or_else(|| Error::Data(format!("unknown level {s:?} for feature {:?}", self.features[m].name)))
            })
            .collect()
    }

    pub fn combination_labels(&self, k: &FeatureCombination) -> Vec<String> {
        k.levels()
            .iter()
            .enumerate()
            .map(|(m, &l)| self.label_of(m, l).map_or_else(|| l.to_string(), str::to_string))
            .collect()
    }
}

/// Parsed form of the `reference` setting.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceSpec {
    FullSplit,
    Greedy,
    Map,
    File(PathBuf),
}

impl ReferenceSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fullsplit" => Ok(Self::FullSplit),
            "greedy" => Ok(Self::Greedy),
            "map" => Ok(Self::Map),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::InvalidParameter(format!("unknown reference {s:?}"))),
            },
        }
    }

    pub fn resolve(&self, space: &FeatureSpace) -> Result<ReferenceMode> {
        Ok(match self {
            Self::FullSplit => ReferenceMode::FullSplit,
            Self::Greedy => ReferenceMode::Greedy,
            Self::Map => ReferenceMode::Map,
            Self::File(p) => ReferenceMode::Explicit(read_sigma_file(space, &fs::read_to_string(p)?)?),
        })
    }
}

/// Reference matrices, one per line: a profile bit string followed by one
/// 0/1 string per active feature, `-` standing for an empty row. Blank lines
/// and `#` comments are skipped.
pub fn read_sigma_file(space: &FeatureSpace, text: &str) -> Result<Vec<PartitionMatrix>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let profile = Profile::parse(parts.next().unwrap_or(""))
            .map_err(|e| Error::MalformedSigma(format!("line {}: {e}", i + 1)))?;
        let rows: Vec<String> = parts.map(|r| if r == "-" { String::new() } else { r.to_string() }).collect();
        out.push(
            PartitionMatrix::from_row_strings(space, profile, &rows)
                .map_err(|e| Error::MalformedSigma(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Reads a comma-delimited file with a header row into per-combination
/// statistics. Rows are numbered as file lines, the header being line 1.
pub fn ingest_csv(path: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    ingest_reader(file, cfg)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    let space = cfg.space()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Data("empty file".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column {name:?}")))
    };
    let y_col = find(&cfg.outcome_column)?;
    let feature_cols: Vec<usize> = cfg.features.iter().map(|f| find(&f.name)).collect::<Result<_>>()?;
    let lookups: Vec<HashMap<&str, usize>> = (0..cfg.features.len())
        .map(|m| {
            cfg.features[m].levels.iter().map(|l| (l.as_str(), cfg.level_of(m, l).expect("declared label"))).collect()
        })
        .collect();

    let mut d = Dataset::new(space);
    let mut levels = vec![0usize; cfg.features.len()];
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for (m, &col) in feature_cols.iter().enumerate() {
            let raw = record.get(col).unwrap_or("");
            levels[m] = *lookups[m].get(raw).ok_or_else(|| {
                Error::Data(format!("row {line}, column {:?}: unknown level {raw:?}", cfg.features[m].name))
            })?;
        }
        let raw = record.get(y_col).unwrap_or("");
        let y: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Data(format!("row {line}, column {:?}: non-numeric outcome {raw:?}", cfg.outcome_column)))?;
        d.push(&FeatureCombination::new(levels.clone()), y)?;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data("empty file".into()));
    }
    Ok(d)
}
