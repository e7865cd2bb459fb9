//! Run configuration: a flat `key = value` text file whose every key can
//! also be overridden individually.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsan::GsanConfig;
use crate::ingest::PreprocessConfig;
use crate::numerics::AdamConfig;
use crate::pretrain::{PretrainConfig, SkipGramConfig, WalkConfig};
use crate::ssl::AugmentConfig;

trait ConfigValue: Sized {
    fn parse_value(key: &str, raw: &str) -> Result<Self>;
    fn render(&self) -> String;
}

fn bad(key: &str, raw: &str, what: &str) -> Error {
    Error::Config(format!("`{key}` expects {what}, got `{raw}`"))
}

macro_rules! parsed_value {
    ($($t:ty => $what:literal),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(key: &str, raw: &str) -> Result<Self> {
                raw.parse().map_err(|_| bad(key, raw, $what))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

parsed_value!(usize => "a nonnegative integer", u32 => "a nonnegative integer",
    u64 => "a nonnegative integer", f64 => "a number", bool => "true or false");

impl ConfigValue for Option<usize> {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        if raw == "auto" {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| bad(key, raw, "`auto` or a nonnegative integer"))
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.to_string())
    }
}

macro_rules! run_config {
    ($($field:ident: $t:ty = $default:expr, $help:literal;)*) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct RunConfig {
            $(#[doc = $help] pub $field: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        /// Every key with its description, in file order.
        pub const CONFIG_KEYS: &[(&str, &str)] = &[$((stringify!($field), $help),)*];

        impl RunConfig {
            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => self.$field = ConfigValue::parse_value(key, raw.trim())?,)*
                    _ => return Err(Error::UnknownKey {
                        key: key.to_string(),
                        valid: CONFIG_KEYS.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", "),
                    }),
                }
                Ok(())
            }

            /// Text form of one key's value.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($field) => Some(self.$field.render()),)*
                    _ => None,
                }
            }
        }
    };
}

run_config! {
    dim: usize = 160, "embedding and hidden dimension";
    max_len: usize = 100, "maximum trajectory length (position table size)";
    heads: usize = 1, "attention heads";
    layers: usize = 1, "stacked attention layers";
    batch_size: usize = 32, "trajectories per optimizer step";
    lr: f64 = 0.003, "Adam learning rate";
    epochs: usize = 50, "maximum training epochs";
    patience: usize = 5, "epochs without validation HR@10 gain before stopping";
    seed: u64 = 42, "root random seed";
    lambda: f64 = 0.1, "weight of the contrastive loss";
    gamma: f64 = 1e-5, "squared-L2 penalty weight";
    dropout: f64 = 0.3, "node dropout probability in augmented views";
    augment_count: Option<usize> = None, "nodes touched by insertion/substitution (auto = max(1, ceil(n/10)))";
    temperature: f64 = 1.0, "contrastive softmax temperature";
    all_prefixes: bool = false, "supervise every prefix instead of only the final transition";
    category_bias: bool = true, "use the category-path attention bias";
    freeze_poi: bool = false, "keep the pretrained POI embeddings fixed";
    spatial_threshold_km: f64 = 3.0, "distance threshold of the global spatial graph";
    max_neighbors: usize = 20, "neighbours kept per POI in the global temporal graph";
    dist_bins: usize = 20, "distance bias bins";
    spd_cap: u32 = 5, "largest hop distance with its own bias";
    degree_buckets: usize = 50, "degree and popularity table size";
    correlation_top: usize = 10, "ranked correlated POIs kept per POI";
    walks_per_node: usize = 10, "node2vec walks started at each node";
    walk_len: usize = 40, "node2vec walk length";
    window: usize = 5, "skip-gram context window";
    negatives: usize = 5, "skip-gram negative samples";
    node2vec_p: f64 = 1.0, "node2vec return parameter";
    node2vec_q: f64 = 1.0, "node2vec in-out parameter";
    pretrain_epochs: usize = 5, "skip-gram epochs";
    pretrain_lr: f64 = 0.025, "skip-gram starting learning rate";
    min_user_visits: usize = 10, "drop users with fewer check-ins";
    min_poi_users: usize = 10, "drop POIs with fewer distinct visitors";
    gap_hours: f64 = 24.0, "session split gap";
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, help) in CONFIG_KEYS {
            let _ = writeln!(out, "# {help}\n{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("max_len", self.max_len),
            ("heads", self.heads),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("max_neighbors", self.max_neighbors),
            ("dist_bins", self.dist_bins),
            ("degree_buckets", self.degree_buckets),
            ("walks_per_node", self.walks_per_node),
            ("window", self.window),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.walk_len < 2 {
            return Err(Error::Config("`walk_len` must be at least 2".into()));
        }
        let strictly_positive = [
            ("lr", self.lr),
            ("temperature", self.temperature),
            ("spatial_threshold_km", self.spatial_threshold_km),
            ("node2vec_p", self.node2vec_p),
            ("node2vec_q", self.node2vec_q),
            ("pretrain_lr", self.pretrain_lr),
            ("gap_hours", self.gap_hours),
        ];
        for (k, v) in strictly_positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be a positive number")));
            }
        }
        for (k, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be nonnegative")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`dropout` must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn gsan(&self) -> GsanConfig {
        GsanConfig {
            dim: self.dim,
            heads: self.heads,
            layers: self.layers,
            max_len: self.max_len,
            spd_cap: self.spd_cap,
            dist_bins: self.dist_bins,
            degree_buckets: self.degree_buckets,
            category_bias: self.category_bias,
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            walk: WalkConfig {
                walks_per_node: self.walks_per_node,
                walk_len: self.walk_len,
                p: self.node2vec_p,
                q: self.node2vec_q,
            },
            skipgram: SkipGramConfig {
                dim: self.dim,
                window: self.window,
                negatives: self.negatives,
                epochs: self.pretrain_epochs,
                lr: self.pretrain_lr,
            },
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            dropout: self.dropout,
            count: self.augment_count,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            min_user_visits: self.min_user_visits,
            min_poi_users: self.min_poi_users,
            gap_secs: (self.gap_hours * 3600.0).round() as i64,
            max_len: self.max_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("lambda", "0.4").unwrap();
        cfg.set("augment_count", "3").unwrap();
        cfg.set("category_bias", "false").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn comments_and_spacing() {
        let cfg = RunConfig::parse("# header\n  dim=32 # inline\n\nseed =  7\n").unwrap();
        assert_eq!((cfg.dim, cfg.seed), (32, 7));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::parse("learning_rate = 0.1").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::UnknownKey { .. }));
        assert!(msg.contains("learning_rate") && msg.contains("lr") && msg.contains("temperature"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse("dim = -3").is_err());
        assert!(RunConfig::parse("dropout = 1.0").is_err());
        assert!(RunConfig::parse("lambda = -0.1").is_err());
        assert!(RunConfig::parse("just words").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_overrides(&["seed"]).is_err());
        cfg.apply_overrides(&["seed=9", "augment_count = auto"]).unwrap();
        assert_eq!((cfg.seed, cfg.augment_count), (9, None));
    }

    #[test]
    fn every_key_has_a_rendered_default() {
        let cfg = RunConfig::default();
        for (k, _) in CONFIG_KEYS {
            assert!(cfg.get(k).is_some(), "{k}");
        }
        assert_eq!(cfg.get("gamma").unwrap(), "0.00001");
    }
}
