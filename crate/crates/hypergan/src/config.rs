//! Flat key=value config files.
//!
//! `#` comments and blank lines are skipped. Unknown keys are usage errors
//! that name the offending key.

use crate::error::{Error, Result};
use crate::synthetic::SyntheticSpec;
use crate::training::{RegSign, TrainConfig};

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

impl TrainConfig {
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "lr_d" => cfg.lr_d = parse_num(&key, &value)?,
                "lr_g" => cfg.lr_g = parse_num(&key, &value)?,
                "batch_size" => cfg.batch_size = parse_num(&key, &value)?,
                "epochs" => cfg.epochs = parse_num(&key, &value)?,
                "k" => cfg.k = parse_num(&key, &value)?,
                "p" => cfg.p = parse_num(&key, &value)?,
                "beta" => cfg.beta = parse_num(&key, &value)?,
                "d" => cfg.d = parse_num(&key, &value)?,
                "layers" => cfg.layers = parse_num(&key, &value)?,
                "channels" => cfg.channels = parse_num(&key, &value)?,
                "noise_dim" => cfg.noise_dim = parse_num(&key, &value)?,
                "seed" => cfg.seed = parse_num(&key, &value)?,
                "eval_every" => cfg.eval_every = parse_num(&key, &value)?,
                "reg_sign" => {
                    cfg.reg_sign = match value.as_str() {
                        "penalty" => RegSign::Penalty,
                        "raw" => RegSign::Raw,
                        other => {
                            return Err(Error::Config(format!(
                                "bad value `{other}` for key `reg_sign` (penalty|raw)"
                            )))
                        }
                    }
                }
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::from_kv_text(&text)
    }

    /// Resolved configuration as ordered key/value pairs (manifest record).
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let sign = match self.reg_sign {
            RegSign::Penalty => "penalty",
            RegSign::Raw => "raw",
        };
        vec![
            ("lr_d".into(), self.lr_d.to_string()),
            ("lr_g".into(), self.lr_g.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("k".into(), self.k.to_string()),
            ("p".into(), self.p.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("d".into(), self.d.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("channels".into(), self.channels.to_string()),
            ("noise_dim".into(), self.noise_dim.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("eval_every".into(), self.eval_every.to_string()),
            ("reg_sign".into(), sign.into()),
            ("guidance".into(), self.guidance.to_string()),
        ]
    }
}

impl SyntheticSpec {
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut spec = SyntheticSpec {
            num_nodes: 200,
            num_communities: 20,
            edges_per_community: 15,
            size_min: 3,
            size_max: 6,
            noise_edge_fraction: 0.05,
            feature_dim: 20,
            seed: 7,
        };
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "num_nodes" => spec.num_nodes = parse_num(&key, &value)?,
                "num_communities" => spec.num_communities = parse_num(&key, &value)?,
                "edges_per_community" => spec.edges_per_community = parse_num(&key, &value)?,
                "size_min" => spec.size_min = parse_num(&key, &value)?,
                "size_max" => spec.size_max = parse_num(&key, &value)?,
                "noise_edge_fraction" => spec.noise_edge_fraction = parse_num(&key, &value)?,
                "feature_dim" => spec.feature_dim = parse_num(&key, &value)?,
                "seed" => spec.seed = parse_num(&key, &value)?,
                other => return Err(Error::Config(format!("unknown spec key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::from_kv_text(&text)
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("num_nodes".into(), self.num_nodes.to_string()),
            ("num_communities".into(), self.num_communities.to_string()),
            ("edges_per_community".into(), self.edges_per_community.to_string()),
            ("size_min".into(), self.size_min.to_string()),
            ("size_max".into(), self.size_max.to_string()),
            ("noise_edge_fraction".into(), self.noise_edge_fraction.to_string()),
            ("feature_dim".into(), self.feature_dim.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}
