//! Flat `key = value` run configuration.
//!
//! Values resolve as defaults, then the config file, then command-line
//! overrides; the rightmost source wins. Rendering a config and parsing the
//! result gives back the same config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::oracle::OracleConfig;
use crate::discriminator::DiscConfig;
use crate::generator::GeneratorConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}` as {expected}")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config key `{key}`: {detail}")]
    OutOfRange { key: String, detail: String },
}

/// Offsets combined with the run seed through [`crate::stream_seed`].
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const GEN_INIT: u64 = 2;
    pub const DISC_INIT: u64 = 3;
    pub const PRETRAIN_GEN: u64 = 4;
    pub const PRETRAIN_DISC: u64 = 5;
    pub const ADVERSARIAL: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const ORACLE_CORPUS: u64 = 8;
    pub const SAMPLE: u64 = 9;
}

trait ConfigValue: Sized {
    const KIND: &'static str;
    fn parse_value(s: &str) -> Option<Self>;
    fn render_value(&self) -> String;
}

macro_rules! display_value {
    ($($ty:ty => $kind:literal),*) => {$(
        impl ConfigValue for $ty {
            const KIND: &'static str = $kind;
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(usize => "a non-negative integer", u64 => "a non-negative integer", f64 => "a number", bool => "true or false");

impl ConfigValue for PathBuf {
    const KIND: &'static str = "a path";
    fn parse_value(s: &str) -> Option<Self> {
        Some(PathBuf::from(s))
    }
    fn render_value(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for Vec<usize> {
    const KIND: &'static str = "a comma-separated list of integers";
    fn parse_value(s: &str) -> Option<Self> {
        s.split(',').map(|x| x.trim().parse().ok()).collect()
    }
    fn render_value(&self) -> String {
        self.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr;)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $name: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($name: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// Sets one field from its text form without range checks.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(stringify!($name) => {
                        self.$name = <$ty as ConfigValue>::parse_value(value).ok_or_else(|| ConfigError::Type {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: <$ty as ConfigValue>::KIND,
                        })?;
                    })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            pub fn render(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($name), self.$name.render_value()).unwrap();)*
                out
            }
        }
    };
}

run_config! {
    seed: u64 = 42;
    /// Adam learning rate for both players.
    lr: f64 = 0.001;
    /// Global gradient-norm ceiling applied before every update.
    clip_norm: f64 = 5.0;
    g_steps: usize = 5;
    d_steps: usize = 3;
    /// Monte Carlo completions per intermediate reward.
    rollouts: usize = 16;
    batch_size: usize = 32;
    /// Sequences sampled per generator policy-gradient step.
    pg_batch_size: usize = 16;
    pretrain_epochs: usize = 40;
    disc_epochs: usize = 5;
    rounds: usize = 30;
    /// Longest sentence in words; framed sequences add S and E.
    max_len: usize = 10;
    vocab_cap: usize = 24;
    hidden_dim: usize = 32;
    embed_dim: usize = 16;
    latent_dim: usize = 8;
    dropout: f64 = 0.5;
    disc_embed_dim: usize = 16;
    disc_windows: Vec<usize> = vec![2, 3];
    disc_filters: usize = 16;
    /// Subtract a per-position moving-average baseline from rewards.
    baseline: bool = false;
    baseline_decay: f64 = 0.9;
    /// Prior draws per step in likelihood estimates.
    n_z: usize = 8;
    split_ratio: f64 = 0.9;
    /// Sentences in the synthetic oracle corpus.
    oracle_sentences: usize = 2000;
    oracle_seed: u64 = 7;
    oracle_hidden_dim: usize = 32;
    oracle_embed_dim: usize = 16;
    oracle_init_std: f64 = 1.0;
    oracle_end_bias: f64 = 3.0;
    /// Generated sentences scored per metrics row.
    eval_samples: usize = 200;
    corpus: PathBuf = PathBuf::from("work/corpus.txt");
    vocab: PathBuf = PathBuf::from("work/vocab.txt");
    oracle: PathBuf = PathBuf::from("work/oracle.ckpt");
    generator: PathBuf = PathBuf::from("work/generator.ckpt");
    discriminator: PathBuf = PathBuf::from("work/discriminator.ckpt");
    output_dir: PathBuf = PathBuf::from("work");
}

impl RunConfig {
    /// Desk-scale defaults: hidden 32, embedding 16, latent 8, vocabulary 24, length 10.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Dimensions for a real corpus with a 5000-word vocabulary.
    pub fn full_scale() -> Self {
        Self {
            hidden_dim: 300,
            embed_dim: 300,
            latent_dim: 60,
            vocab_cap: 5000,
            max_len: 20,
            disc_embed_dim: 64,
            disc_windows: vec![2, 3, 4, 5],
            disc_filters: 100,
            oracle_hidden_dim: 300,
            oracle_embed_dim: 300,
            batch_size: 64,
            pg_batch_size: 64,
            ..Self::default()
        }
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Parses a complete config from text over the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `base ← file ← overrides`, then validation.
    pub fn load(base: Self, path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = base;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, detail: String| Err(ConfigError::OutOfRange {
            key: key.to_string(),
            detail,
        });
        let positive = [
            ("g_steps", self.g_steps),
            ("d_steps", self.d_steps),
            ("rollouts", self.rollouts),
            ("batch_size", self.batch_size),
            ("pg_batch_size", self.pg_batch_size),
            ("max_len", self.max_len),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("latent_dim", self.latent_dim),
            ("disc_embed_dim", self.disc_embed_dim),
            ("disc_filters", self.disc_filters),
            ("n_z", self.n_z),
            ("oracle_hidden_dim", self.oracle_hidden_dim),
            ("oracle_embed_dim", self.oracle_embed_dim),
            ("eval_samples", self.eval_samples),
        ];
        for (key, v) in positive {
            if v == 0 {
                return bad(key, "must be at least 1".into());
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("{} is not a positive learning rate", self.lr));
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm", "must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("{} is outside [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay", format!("{} is outside [0, 1)", self.baseline_decay));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio", format!("{} is outside (0, 1)", self.split_ratio));
        }
        if self.vocab_cap < 6 {
            return bad("vocab_cap", "must leave room for at least two words".into());
        }
        if self.disc_windows.is_empty() {
            return bad("disc_windows", "needs at least one window".into());
        }
        if let Some(&w) = self.disc_windows.iter().find(|&&w| w == 0 || w > self.max_len + 1) {
            return bad("disc_windows", format!("window {w} must lie in 1..={}", self.max_len + 1));
        }
        if !(self.oracle_init_std > 0.0) {
            return bad("oracle_init_std", "must be positive".into());
        }
        if self.oracle_sentences < 10 {
            return bad("oracle_sentences", "need at least 10 sentences to split".into());
        }
        Ok(())
    }

    pub fn generator_config(&self, vocab_size: usize) -> GeneratorConfig {
        GeneratorConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            dropout: self.dropout,
        }
    }

    /// Discriminator inputs hold up to `max_len` words plus E.
    pub fn disc_config(&self, vocab_size: usize) -> DiscConfig {
        DiscConfig {
            vocab_size,
            embed_dim: self.disc_embed_dim,
            windows: self.disc_windows.clone(),
            filters_per_window: self.disc_filters,
            seq_len: self.max_len + 1,
        }
    }

    pub fn oracle_config(&self) -> OracleConfig {
        OracleConfig {
            vocab_size: self.vocab_cap,
            embed_dim: self.oracle_embed_dim,
            hidden_dim: self.oracle_hidden_dim,
            seed: self.oracle_seed,
            init_std: self.oracle_init_std,
            end_bias: self.oracle_end_bias,
        }
    }

    pub fn stream(&self, offset: u64) -> u64 {
        crate::stream_seed(self.seed, offset)
    }
}
