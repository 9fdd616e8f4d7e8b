//! Flat `key = value` run configuration and the per-run manifest.
//!
//! Keys mirror [`TrainConfig`] field names plus input/output paths. Lines
//! starting with `#` are comments. Keys under `meta.` are ignored, so a
//! manifest written by a run can be fed back as a config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::DEFAULT_PATCH_WIDTH;
use crate::trainer::{GeneScaling, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub expression: Option<PathBuf>,
    pub coords: Option<PathBuf>,
    /// Precomputed image-feature table.
    pub features: Option<PathBuf>,
    /// RGB image to extract patch statistics from when no feature table is given.
    pub image: Option<PathBuf>,
    pub patch_width: u32,
    pub out_dir: PathBuf,
    pub write_checkpoint: bool,
}

const DEFAULT_OUT_DIR: &str = "stmmc_out";

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            expression: None,
            coords: None,
            features: None,
            image: None,
            patch_width: DEFAULT_PATCH_WIDTH,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            write_checkpoint: false,
        }
    }
}

fn config_error(origin: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        origin: origin.to_string(),
        reason: reason.into(),
    }
}

fn parse_bool(origin: &str, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_error(origin, format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn parse_num<T: std::str::FromStr>(origin: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_error(origin, format!("{key}: cannot parse '{v}'")))
}

fn gene_scaling_name(s: GeneScaling) -> &'static str {
    match s {
        GeneScaling::None => "none",
        GeneScaling::Center => "center",
        GeneScaling::Standardize => "standardize",
    }
}

impl RunConfig {
    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_error(origin, format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            if key.starts_with("meta.") {
                continue;
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(config_error(origin, format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        let mut cfg = RunConfig {
            out_dir: base_dir.join(DEFAULT_OUT_DIR),
            ..RunConfig::default()
        };
        for (key, v) in &entries {
            cfg.set(key, v, origin, base_dir)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Assigns one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str, origin: &str, base_dir: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base_dir.join(p) }
        };
        let t = &mut self.train;
        match key {
            "expression" => self.expression = Some(path(v)),
            "coords" => self.coords = Some(path(v)),
            "features" => self.features = Some(path(v)),
            "image" => self.image = Some(path(v)),
            "patch_width" => self.patch_width = parse_num(origin, key, v)?,
            "out_dir" => self.out_dir = path(v),
            "write_checkpoint" => self.write_checkpoint = parse_bool(origin, key, v)?,
            "epochs" => t.epochs = parse_num(origin, key, v)?,
            "learning_rate" => t.learning_rate = parse_num(origin, key, v)?,
            "seed" => t.seed = parse_num(origin, key, v)?,
            "hidden_dims" => {
                t.hidden_dims = v
                    .split(',')
                    .map(|w| parse_num(origin, key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "pca_dim" => t.pca_dim = parse_num(origin, key, v)?,
            "k_neighbors" => t.k_neighbors = parse_num(origin, key, v)?,
            "m_keep" => t.m_keep = parse_num(origin, key, v)?,
            "theta1" => t.loss_weights.theta1 = parse_num(origin, key, v)?,
            "theta2" => t.loss_weights.theta2 = parse_num(origin, key, v)?,
            "use_image_modality" => t.toggles.use_image_modality = parse_bool(origin, key, v)?,
            "use_contrastive" => t.toggles.use_contrastive = parse_bool(origin, key, v)?,
            "use_smoothing" => t.toggles.use_smoothing = parse_bool(origin, key, v)?,
            "b_smooth" => t.b_smooth = parse_num(origin, key, v)?,
            "n_clusters" => t.n_clusters = parse_num(origin, key, v)?,
            "normalize" => t.normalize = parse_bool(origin, key, v)?,
            "gene_scaling" => {
                t.gene_scaling = match v {
                    "none" => GeneScaling::None,
                    "center" => GeneScaling::Center,
                    "standardize" => GeneScaling::Standardize,
                    _ => return Err(config_error(origin, format!("gene_scaling: unknown value '{v}'"))),
                }
            }
            "scale_features" => t.scale_features = parse_bool(origin, key, v)?,
            "cluster_pca_dim" => t.cluster_pca_dim = parse_num(origin, key, v)?,
            _ => return Err(config_error(origin, format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks that the config describes a runnable job.
    pub fn validate(&self, origin: &str) -> Result<()> {
        if self.expression.is_none() || self.coords.is_none() {
            return Err(config_error(origin, "both 'expression' and 'coords' must be set"));
        }
        if self.train.toggles.use_image_modality && self.features.is_none() && self.image.is_none() {
            return Err(config_error(
                origin,
                "the image modality needs 'features' or 'image' (or set use_image_modality = false)",
            ));
        }
        self.train
            .validate()
            .map_err(|e| config_error(origin, e.to_string()))
    }

    /// Renders every setting, so that parsing the result gives back `self`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "{k} = {v}").unwrap();
        for (k, p) in [
            ("expression", &self.expression),
            ("coords", &self.coords),
            ("features", &self.features),
            ("image", &self.image),
        ] {
            if let Some(p) = p {
                kv(k, &p.display());
            }
        }
        kv("patch_width", &self.patch_width);
        kv("out_dir", &self.out_dir.display());
        kv("write_checkpoint", &self.write_checkpoint);
        let t = &self.train;
        kv("epochs", &t.epochs);
        kv("learning_rate", &t.learning_rate);
        kv("seed", &t.seed);
        let dims: Vec<String> = t.hidden_dims.iter().map(usize::to_string).collect();
        kv("hidden_dims", &dims.join(","));
        kv("pca_dim", &t.pca_dim);
        kv("k_neighbors", &t.k_neighbors);
        kv("m_keep", &t.m_keep);
        kv("theta1", &t.loss_weights.theta1);
        kv("theta2", &t.loss_weights.theta2);
        kv("use_image_modality", &t.toggles.use_image_modality);
        kv("use_contrastive", &t.toggles.use_contrastive);
        kv("use_smoothing", &t.toggles.use_smoothing);
        kv("b_smooth", &t.b_smooth);
        kv("n_clusters", &t.n_clusters);
        kv("normalize", &t.normalize);
        kv("gene_scaling", &gene_scaling_name(t.gene_scaling));
        kv("scale_features", &t.scale_features);
        kv("cluster_pca_dim", &t.cluster_pca_dim);
        out
    }
}

/// Record of one run: the resolved config plus provenance of the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: RunConfig,
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::from("# stmmc run manifest; usable as a config file\n");
        writeln!(out, "meta.tool_version = {}", self.tool_version).unwrap();
        writeln!(out, "meta.seed = {}", self.config.train.seed).unwrap();
        writeln!(out, "meta.started_unix = {}", self.started_unix).unwrap();
        writeln!(out, "meta.finished_unix = {}", self.finished_unix).unwrap();
        for (i, f) in self.outputs.iter().enumerate() {
            writeln!(out, "meta.output.{i} = {f}").unwrap();
        }
        out.push_str(&self.config.render());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, "test", Path::new("/data"))
    }

    #[test]
    fn parses_keys_and_resolves_paths() {
        let cfg = parse(
            "# comment\nexpression = expr.csv\ncoords=/abs/coords.csv\n\nepochs = 5\nhidden_dims = 8, 4\nuse_smoothing = false\nn_clusters = 3\ngene_scaling = standardize\n",
        )
        .unwrap();
        assert_eq!(cfg.expression, Some(PathBuf::from("/data/expr.csv")));
        assert_eq!(cfg.coords, Some(PathBuf::from("/abs/coords.csv")));
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.hidden_dims, vec![8, 4]);
        assert!(!cfg.train.toggles.use_smoothing);
        assert_eq!(cfg.train.gene_scaling, GeneScaling::Standardize);
        assert_eq!(cfg.train.learning_rate, 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse("bogus = 1"), Err(Error::Config { .. })));
        assert!(parse("epochs = ten").is_err());
        assert!(parse("epochs = 1\nepochs = 2").is_err());
        assert!(parse("just words").is_err());
        assert!(parse("use_image_modality = maybe").is_err());
    }

    #[test]
    fn meta_keys_are_ignored() {
        let cfg = parse("meta.anything = 3\nmeta.output.0 = labels.csv\nseed = 9").unwrap();
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = parse("expression = e.csv\ncoords = c.csv\nfeatures = f.csv\nn_clusters = 4\ntheta2 = 0.25\n").unwrap();
        cfg.train.toggles.use_contrastive = false;
        let back = parse(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        let manifest = RunManifest {
            config: cfg.clone(),
            tool_version: "0.1.0".into(),
            started_unix: 1,
            finished_unix: 2,
            outputs: vec!["labels.csv".into()],
        };
        assert_eq!(parse(&manifest.render()).unwrap(), cfg);
    }

    #[test]
    fn validation() {
        let ok = parse("expression = e.csv\ncoords = c.csv\nfeatures = f.csv\nn_clusters = 4").unwrap();
        assert!(ok.validate("t").is_ok());
        assert!(parse("coords = c.csv\nfeatures = f.csv\nn_clusters = 4").unwrap().validate("t").is_err());
        assert!(parse("expression = e.csv\ncoords = c.csv\nn_clusters = 4").unwrap().validate("t").is_err());
        assert!(parse("expression = e.csv\ncoords = c.csv\nfeatures = f.csv").unwrap().validate("t").is_err());
    }
}
