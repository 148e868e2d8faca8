//! Experiment configuration, loaded from a JSON file.

use std::path::{Path, PathBuf};

use commflow::generator::SplitMergeParams;
use commflow::mcmc::ClustererConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Static planted partition observed with a growing edge budget.
    Emerging,
    /// Generated dynamic graph with a split and a merge.
    SyntheticDynamic,
    /// Split/merge nodes injected into a real temporal graph.
    SemiSynthetic,
    /// A real temporal graph without ground truth.
    Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergingSpec {
    pub nodes: usize,
    pub blocks: usize,
    /// External/internal edge ratio.
    pub edge_ratio: f64,
    /// Edge budgets, ascending. Each repetition samples the largest budget
    /// once and evaluates its prefixes.
    pub budgets: Vec<usize>,
}

impl Default for EmergingSpec {
    fn default() -> Self {
        Self {
            nodes: 500,
            blocks: 8,
            edge_ratio: 0.2,
            budgets: (10..=19).map(|b| b * 100).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicSpec {
    /// Schedule JSON; when absent the split/merge preset is built.
    pub schedule: Option<PathBuf>,
    pub split_merge: SplitMergeParams,
    pub edges_per_segment: usize,
    /// Segment count for a schedule file; the preset uses its own.
    pub segments: usize,
}

impl Default for DynamicSpec {
    fn default() -> Self {
        Self {
            schedule: None,
            split_merge: SplitMergeParams::default(),
            edges_per_segment: 2000,
            segments: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// SNAP temporal edge list.
    pub path: Option<PathBuf>,
    /// Segment width in the dataset's time unit.
    pub segment_width: f64,
    pub segments: usize,
    /// Segments start here; defaults to the first timestamp.
    pub start: Option<f64>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            path: None,
            segment_width: 7.0 * 24.0 * 3600.0,
            segments: 10,
            start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionSpec {
    pub split_merge: SplitMergeParams,
    pub edges_per_segment: usize,
    pub cross_edges_per_segment: usize,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        Self {
            split_merge: SplitMergeParams {
                constant_blocks: 0,
                noise_size: 0,
                ..SplitMergeParams::default()
            },
            edges_per_segment: 960,
            cross_edges_per_segment: 160,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub repetitions: usize,
    /// Clusterer runs per segment (K).
    pub ensemble_size: usize,
    /// Context radius of the smoothed method; `None` disables it.
    pub smoothing: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
    pub clusterer: ClustererConfig,
    pub min_overlap: u64,
    /// Leave noise nodes out of precision and recall.
    pub exclude_noise: bool,
    pub emerging: EmergingSpec,
    pub dynamic: DynamicSpec,
    pub dataset: DatasetSpec,
    pub injection: InjectionSpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            mode: Mode::SyntheticDynamic,
            seed: 0,
            repetitions: 10,
            ensemble_size: 10,
            smoothing: Some(1),
            workers: None,
            clusterer: ClustererConfig::default(),
            min_overlap: 1,
            exclude_noise: false,
            emerging: EmergingSpec::default(),
            dynamic: DynamicSpec::default(),
            dataset: DatasetSpec::default(),
            injection: InjectionSpec::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Data(e.into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::in_file(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::in_file(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Usage(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad(format!("experiment name {:?} is not a plain directory name", self.name));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.ensemble_size < 2 {
            return bad("ensemble_size must be >= 2".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be >= 1".into());
        }
        if self.smoothing == Some(0) {
            return bad("smoothing radius must be >= 1 (omit it to disable smoothing)".into());
        }
        match self.mode {
            Mode::Emerging => {
                let b = &self.emerging.budgets;
                if b.is_empty() || b.contains(&0) || b.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("emerging budgets must be positive and strictly ascending".into());
                }
            }
            Mode::SyntheticDynamic => {
                if self.dynamic.edges_per_segment == 0 || self.dynamic.segments == 0 {
                    return bad("edges_per_segment and segments must be positive".into());
                }
                if let Some(p) = &self.dynamic.schedule {
                    require_file(p)?;
                }
            }
            Mode::SemiSynthetic | Mode::Real => {
                let Some(p) = &self.dataset.path else {
                    return bad("this mode needs dataset.path".into());
                };
                require_file(p)?;
                if self.dataset.segment_width.is_nan() || self.dataset.segment_width <= 0.0 || self.dataset.segments == 0 {
                    return bad("dataset segmentation needs a positive width and count".into());
                }
                let inj = &self.injection;
                if self.mode == Mode::SemiSynthetic
                    && (inj.edges_per_segment == 0 || inj.cross_edges_per_segment > inj.edges_per_segment)
                {
                    return bad("injection needs 0 <= cross edges <= edges per segment, edges > 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(HarnessError::Usage(format!("referenced file {} does not exist", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
        let cfg = ExperimentConfig {
            mode: Mode::Emerging,
            ..Default::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = ExperimentConfig::default();
        let cases = [
            ExperimentConfig { repetitions: 0, ..base.clone() },
            ExperimentConfig { ensemble_size: 1, ..base.clone() },
            ExperimentConfig { name: "../x".into(), ..base.clone() },
            ExperimentConfig { mode: Mode::Real, ..base.clone() },
            ExperimentConfig { smoothing: Some(0), ..base.clone() },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(HarnessError::Usage(_))), "{cfg:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"mode": "emerging", "clusterer": {"sweeps": 7}}"#).unwrap();
        assert_eq!(cfg.mode, Mode::Emerging);
        assert_eq!(cfg.clusterer.sweeps, 7);
        assert_eq!(cfg.clusterer.beta, ClustererConfig::default().beta);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
