//! Run configuration: `key=value` text over documented defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataset::{GenConfig, Provenance, ScenarioRanges};
use crate::error::{Error, Result};
use crate::kv;
use crate::processor::{ModelConfig, Schedule};
use crate::training::{CoarseSpec, TrainConfig};

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("out", "run", "output directory; every command writes only below it"),
    ("data", "", "dataset directory read by train (default <out>/dataset)"),
    ("checkpoint", "", "checkpoint read by eval and analyze (default <out>/checkpoint.bin)"),
    ("resume", "", "checkpoint to continue training from"),
    ("seed", "0", "master seed for sampling, initialization and training"),
    ("workers", "1", "threads for per-scenario and per-mesh work"),
    ("length", "1.0", "channel length"),
    ("height", "0.4", "channel height"),
    ("mu", "0.001", "diffusivity"),
    ("dt", "0.01", "recorded timestep"),
    ("steps", "50", "recorded steps per trajectory"),
    ("scenarios", "20", "number of generated scenarios"),
    ("radius_min", "0.02", "obstacle radius range"),
    ("radius_max", "0.08", "obstacle radius range"),
    ("center_x_min", "0.15", "obstacle center x range"),
    ("center_x_max", "0.4", "obstacle center x range"),
    ("center_y_min", "0.1", "obstacle center y range"),
    ("center_y_max", "0.3", "obstacle center y range"),
    ("u_mean_min", "0.2", "mean inflow speed range"),
    ("u_mean_max", "12", "mean inflow speed range"),
    ("edge_min_min", "0.001", "mesh edge_min range, sampled log-uniformly"),
    ("edge_min_max", "0.01", "mesh edge_min range, sampled log-uniformly"),
    ("labels", "native", "training labels: native or high-accuracy"),
    ("refine", "4", "edge_min divisor of the high-accuracy reference mesh"),
    ("processor", "p=15H (U=0,D=0)", "processor schedule"),
    ("latent", "128", "latent width"),
    ("hidden", "128", "MLP hidden width"),
    ("normalizer_budget", "1000", "samples folded into the normalizers before they freeze"),
    ("coarse", "mesh", "coarse level: mesh or grid"),
    ("coarse_edge_min", "0.01", "edge_min of the coarse mesh"),
    ("grid_spacing", "0.02", "spacing of the coarse grid"),
    ("lr", "1e-4", "initial learning rate"),
    ("lr_decay", "0.1", "learning-rate multiplier reached at the last step"),
    ("train_steps", "10000", "optimizer steps"),
    ("batch", "1", "graphs per optimizer step"),
    ("noise_std", "0.02", "input noise on u in normalized units"),
    ("holdout", "0.1", "fraction of scenarios held out for validation"),
    ("log_every", "100", "history row interval"),
    ("test_resolutions", "5", "number of test meshes"),
    ("test_edge_max", "0.01", "coarsest test edge_min (times the domain scale)"),
    ("test_edge_min", "0.001", "finest test edge_min (times the domain scale), also the reference"),
    ("spectral_max_nodes", "4000", "node cap of the dense eigensolver"),
    ("laplacian", "unit", "Laplacian edge weights: unit or inverse_length"),
    ("bench_resolutions", "0.005,0.004,0.0025", "fine edge_min values timed by bench"),
    ("bench_repeats", "7", "timing repeats; the median is reported"),
];

/// Typed view of the configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub gen: GenConfig,
    pub scenarios: usize,
    pub ranges: ScenarioRanges,
    pub refine: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub holdout: f64,
    pub log_every: u64,
    pub test_resolutions: usize,
    pub test_edge_max: f64,
    pub test_edge_min: f64,
    pub spectral_max_nodes: usize,
    pub inverse_length_laplacian: bool,
    pub bench_resolutions: Vec<f64>,
    pub bench_repeats: usize,
    /// The merged key=value map the config was built from.
    pub raw: BTreeMap<String, String>,
}

fn opt_path(s: &str) -> Option<PathBuf> {
    (!s.is_empty()).then(|| PathBuf::from(s))
}

impl RunConfig {
    pub fn defaults() -> BTreeMap<String, String> {
        KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect()
    }

    /// Applies `overrides` over the defaults; unknown keys are rejected.
    pub fn from_map(overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut m = Self::defaults();
        for (k, v) in overrides {
            if !m.contains_key(k) {
                return Err(Error::Config(format!("unknown config key {k:?}")));
            }
            m.insert(k.clone(), v.clone());
        }
        let w = "config";
        let get_s = |k: &str| m[k].as_str();
        let seed: u64 = kv::get(&m, "seed", w)?;
        let workers: usize = kv::get(&m, "workers", w)?;
        let labels = match get_s("labels") {
            "native" => Provenance::Native,
            "high-accuracy" | "high_accuracy" => Provenance::HighAccuracy,
            other => return Err(Error::Config(format!("labels must be native or high-accuracy, got {other:?}"))),
        };
        let coarse = match get_s("coarse") {
            "mesh" => CoarseSpec::Mesh { edge_min: kv::get(&m, "coarse_edge_min", w)? },
            "grid" => CoarseSpec::Grid { spacing: kv::get(&m, "grid_spacing", w)? },
            other => return Err(Error::Config(format!("coarse must be mesh or grid, got {other:?}"))),
        };
        let inverse_length_laplacian = match get_s("laplacian") {
            "unit" => false,
            "inverse_length" => true,
            other => return Err(Error::Config(format!("laplacian must be unit or inverse_length, got {other:?}"))),
        };
        let bench_resolutions = get_s("bench_resolutions")
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad bench resolution {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let refine: usize = kv::get(&m, "refine", w)?;
        if refine == 0 {
            return Err(Error::Config("refine must be at least 1".into()));
        }
        let gen = GenConfig {
            length: kv::get(&m, "length", w)?,
            height: kv::get(&m, "height", w)?,
            mu: kv::get(&m, "mu", w)?,
            dt: kv::get(&m, "dt", w)?,
            steps: kv::get(&m, "steps", w)?,
            workers,
        };
        let ranges = ScenarioRanges {
            radius: (kv::get(&m, "radius_min", w)?, kv::get(&m, "radius_max", w)?),
            center_x: (kv::get(&m, "center_x_min", w)?, kv::get(&m, "center_x_max", w)?),
            center_y: (kv::get(&m, "center_y_min", w)?, kv::get(&m, "center_y_max", w)?),
            u_mean: (kv::get(&m, "u_mean_min", w)?, kv::get(&m, "u_mean_max", w)?),
            edge_min: (kv::get(&m, "edge_min_min", w)?, kv::get(&m, "edge_min_max", w)?),
        };
        ranges.validate()?;
        let model = ModelConfig {
            schedule: Schedule::parse(get_s("processor"))?,
            latent: kv::get(&m, "latent", w)?,
            hidden: kv::get(&m, "hidden", w)?,
            normalizer_budget: kv::get(&m, "normalizer_budget", w)?,
            seed,
            ..ModelConfig::default()
        };
        let train = TrainConfig {
            lr: kv::get(&m, "lr", w)?,
            lr_decay: kv::get(&m, "lr_decay", w)?,
            steps: kv::get(&m, "train_steps", w)?,
            batch: kv::get(&m, "batch", w)?,
            noise_std: kv::get(&m, "noise_std", w)?,
            seed,
            labels,
            coarse,
        };
        let holdout: f64 = kv::get(&m, "holdout", w)?;
        if !(0.0..1.0).contains(&holdout) {
            return Err(Error::Config(format!("holdout must lie in [0, 1), got {holdout}")));
        }
        Ok(RunConfig {
            out: PathBuf::from(get_s("out")),
            data: opt_path(get_s("data")),
            checkpoint: opt_path(get_s("checkpoint")),
            resume: opt_path(get_s("resume")),
            seed,
            workers,
            gen,
            scenarios: kv::get(&m, "scenarios", w)?,
            ranges,
            refine,
            model,
            train,
            holdout,
            log_every: kv::get(&m, "log_every", w)?,
            test_resolutions: kv::get(&m, "test_resolutions", w)?,
            test_edge_max: kv::get(&m, "test_edge_max", w)?,
            test_edge_min: kv::get(&m, "test_edge_min", w)?,
            spectral_max_nodes: kv::get(&m, "spectral_max_nodes", w)?,
            inverse_length_laplacian,
            bench_resolutions,
            bench_repeats: kv::get(&m, "bench_repeats", w)?,
            raw: m,
        })
    }

    /// Reads an optional config file, then applies `overrides` on top.
    pub fn load(file: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut m = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                kv::parse(&text, &p.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        m.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_map(&m)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.bin"))
    }

    /// The effective configuration as `key=value` text.
    pub fn to_text(&self) -> String {
        kv::format(&self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_parse_and_match_library_defaults() {
        let c = RunConfig::from_map(&BTreeMap::new()).unwrap();
        assert_eq!(c.ranges, ScenarioRanges::default());
        assert_eq!(c.gen, GenConfig::default());
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.refine, 4);
        let again = RunConfig::from_map(&kv::parse(&c.to_text(), "t").unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_and_bad_values() {
        assert!(RunConfig::from_map(&map(&[("colour", "red")])).is_err());
        assert!(RunConfig::from_map(&map(&[("labels", "best")])).is_err());
        assert!(RunConfig::from_map(&map(&[("processor", "p=1L")])).is_err());
        assert!(RunConfig::from_map(&map(&[("refine", "0")])).is_err());
        assert!(RunConfig::from_map(&map(&[("radius_min", "0.1"), ("radius_max", "0.05")])).is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_map(&map(&[
            ("processor", "p=1H 5L 1H (U=1,D=1)"),
            ("labels", "high-accuracy"),
            ("coarse", "grid"),
            ("bench_resolutions", "0.01, 0.005"),
        ]))
        .unwrap();
        assert_eq!(c.model.schedule.total_mps(), 9);
        assert_eq!(c.train.labels, Provenance::HighAccuracy);
        assert_eq!(c.train.coarse, CoarseSpec::Grid { spacing: 0.02 });
        assert_eq!(c.bench_resolutions, vec![0.01, 0.005]);
    }
}
