//! Plain-text checkpoint format.
//!
//! ```text
//! sugar-checkpoint 1
//! variant c
//! seed 0
//! ...                      scalar header, one `key value` per line
//! param processing.w_x 448
//! 1.25e-1 -3.5e-2 ...      row-major values on one line
//! m processing.w_x 448     ADAM first moment
//! ...
//! v processing.w_x 448     ADAM second moment
//! ...
//! end
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so
//! save → load → save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{GateShape, ModelConfig, SugarModel, SugarVariant, SurpriseConfig, SurpriseEstimator};
use crate::nn::{AdamConfig, AdamState, ParamBlocks};

const MAGIC: &str = "sugar-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    /// Completed parameter updates.
    pub windows: usize,
    /// Training episodes started.
    pub episodes: usize,
    pub model: SugarModel,
    pub adam: AdamState,
    /// Surprise statistics at the end of training.
    pub surprise: SurpriseEstimator,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let c = &m.config;
        let a = &self.adam.config;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} {v}");
        };
        kv("variant", m.variant.to_string());
        kv("seed", self.seed.to_string());
        kv("config_hash", self.config_hash.clone());
        kv("windows", self.windows.to_string());
        kv("episodes", self.episodes.to_string());
        kv("eb_width", m.eb_width.to_string());
        kv("model.processing_hidden", c.processing_hidden.to_string());
        kv("model.anticipation_hidden", c.anticipation_hidden.to_string());
        kv("model.boundary_hidden", c.boundary_hidden.to_string());
        kv("model.switching_hidden", c.switching_hidden.to_string());
        kv("model.gate.theta0", format!("{:e}", c.gate.theta0));
        kv("model.gate.theta1", format!("{:e}", c.gate.theta1));
        kv("model.surprise.rate", format!("{:e}", c.surprise.rate));
        kv("model.surprise.theta0", format!("{:e}", c.surprise.theta0));
        kv("model.surprise.theta1", format!("{:e}", c.surprise.theta1));
        kv("model.surprise.sigma_floor", format!("{:e}", c.surprise.sigma_floor));
        kv("adam.learning_rate", format!("{:e}", a.learning_rate));
        kv("adam.beta1", format!("{:e}", a.beta1));
        kv("adam.beta2", format!("{:e}", a.beta2));
        kv("adam.epsilon", format!("{:e}", a.epsilon));
        kv("adam.step", self.adam.step.to_string());
        kv("surprise.mean", format!("{:e}", self.surprise.mean));
        kv("surprise.var", format!("{:e}", self.surprise.var));

        let mut text = format!("{MAGIC}\n{out}");
        for ((name, values), mom) in m.params.blocks().into_iter().zip(&self.adam.moments) {
            write_block(&mut text, "param", &name, values);
            write_block(&mut text, "m", &name, &mom.m);
            write_block(&mut text, "v", &name, &mom.v);
        }
        text.push_str("end\n");
        text
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        let (off, magic) = p.line()?;
        if magic != MAGIC {
            return Err(Error::Parse {
                offset: off,
                message: format!("expected {MAGIC:?}"),
            });
        }
        let variant: SugarVariant = p.value("variant")?;
        let seed = p.value("seed")?;
        let config_hash: String = p.value("config_hash")?;
        let windows = p.value("windows")?;
        let episodes = p.value("episodes")?;
        let eb_width = p.value("eb_width")?;
        let config = ModelConfig {
            processing_hidden: p.value("model.processing_hidden")?,
            anticipation_hidden: p.value("model.anticipation_hidden")?,
            boundary_hidden: p.value("model.boundary_hidden")?,
            switching_hidden: p.value("model.switching_hidden")?,
            gate: GateShape {
                theta0: p.value("model.gate.theta0")?,
                theta1: p.value("model.gate.theta1")?,
            },
            surprise: SurpriseConfig {
                rate: p.value("model.surprise.rate")?,
                theta0: p.value("model.surprise.theta0")?,
                theta1: p.value("model.surprise.theta1")?,
                sigma_floor: p.value("model.surprise.sigma_floor")?,
            },
        };
        let adam_config = AdamConfig {
            learning_rate: p.value("adam.learning_rate")?,
            beta1: p.value("adam.beta1")?,
            beta2: p.value("adam.beta2")?,
            epsilon: p.value("adam.epsilon")?,
        };
        let adam_step = p.value("adam.step")?;
        let surprise_mean = p.value("surprise.mean")?;
        let surprise_var = p.value("surprise.var")?;

        let mut model = SugarModel::new(variant, config.clone(), eb_width, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Parse {
                offset: 0,
                message: format!("header describes an invalid model: {e}"),
            })?;
        let mut adam = AdamState::new(adam_config, &model.params);
        adam.step = adam_step;
        for ((name, values), mom) in model.params.blocks_mut().into_iter().zip(adam.moments.iter_mut()) {
            p.block("param", &name, values)?;
            p.block("m", &name, &mut mom.m)?;
            p.block("v", &name, &mut mom.v)?;
        }
        let (off, end) = p.line()?;
        if end != "end" {
            return Err(Error::Parse {
                offset: off,
                message: format!("expected \"end\", found {end:?}"),
            });
        }
        if let Some(off) = p.trailing() {
            return Err(Error::Parse {
                offset: off,
                message: "trailing content after \"end\"".into(),
            });
        }

        Ok(Checkpoint {
            config_hash,
            seed,
            windows,
            episodes,
            model,
            adam,
            surprise: SurpriseEstimator {
                config: config.surprise,
                mean: surprise_mean,
                var: surprise_var,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Rejects a checkpoint whose model would not fit `config`.
    pub fn check_compatible(&self, config: &ExperimentConfig) -> Result<()> {
        if self.model.variant != config.variant {
            return Err(Error::Shape(format!(
                "checkpoint holds variant {}, config asks for {}",
                self.model.variant, config.variant
            )));
        }
        let expected = SugarModel::new(
            config.variant,
            config.model.clone(),
            config.task.eb.width(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        expected.check_params(&self.model.params)
    }
}

fn write_block(out: &mut String, tag: &str, name: &str, values: &[f64]) {
    let _ = writeln!(out, "{tag} {name} {}", values.len());
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn err(offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// Next line (without the newline) and its byte offset.
    fn line(&mut self) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let rest = &self.text[start..];
        if rest.is_empty() {
            return Err(Self::err(start, "unexpected end of file"));
        }
        match rest.find('\n') {
            Some(i) => {
                self.pos = start + i + 1;
                Ok((start, &rest[..i]))
            }
            None => Err(Self::err(self.text.len(), "unexpected end of file (missing newline)")),
        }
    }

    fn trailing(&self) -> Option<usize> {
        (self.pos < self.text.len()).then_some(self.pos)
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (off, line) = self.line()?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Self::err(off, format!("expected `{key} <value>`")))?;
        if k != key {
            return Err(Self::err(off, format!("expected key {key:?}, found {k:?}")));
        }
        v.parse()
            .map_err(|_| Self::err(off + k.len() + 1, format!("cannot parse value of {key}: {v:?}")))
    }

    fn block(&mut self, tag: &str, name: &str, out: &mut [f64]) -> Result<()> {
        let (off, header) = self.line()?;
        let mut parts = header.split(' ');
        let (t, n, len) = (parts.next(), parts.next(), parts.next());
        if t != Some(tag) || n != Some(name) {
            return Err(Self::err(off, format!("expected block `{tag} {name}`, found {header:?}")));
        }
        let len: usize = len
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| Self::err(off, format!("bad length in {header:?}")))?;
        if len != out.len() {
            return Err(Self::err(
                off,
                format!("block {name} has {len} values, model expects {}", out.len()),
            ));
        }
        let (off, line) = self.line()?;
        let mut count = 0;
        for tok in line.split(' ').filter(|t| !t.is_empty()) {
            let tok_off = off + (tok.as_ptr() as usize - line.as_ptr() as usize);
            if count == out.len() {
                return Err(Self::err(tok_off, format!("too many values in block {name}")));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Self::err(tok_off, format!("bad float {tok:?}")))?;
            if !v.is_finite() {
                return Err(Self::err(tok_off, format!("non-finite value {tok:?}")));
            }
            out[count] = v;
            count += 1;
        }
        if count != out.len() {
            return Err(Self::err(
                off + line.len(),
                format!("block {name}: expected {} values, found {count}", out.len()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{train, ExperimentConfig};

    fn small_checkpoint() -> Checkpoint {
        let mut c = ExperimentConfig::default();
        c.train.windows = 3;
        c.train.episode_len = 60;
        c.variant = SugarVariant::C;
        train(&c).unwrap().checkpoint
    }

    #[test]
    fn text_round_trip_is_exact() {
        let ck = small_checkpoint();
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let text = small_checkpoint().to_text();
        for cut in [0, 10, text.len() / 3, text.len() / 2, text.len() - 2] {
            match Checkpoint::from_text(&text[..cut]) {
                Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupt_float_reports_its_offset() {
        let text = small_checkpoint().to_text();
        let pos = text.find("\nparam ").unwrap();
        let line_start = text[pos + 1..].find('\n').unwrap() + pos + 2;
        let mut bad = text.clone();
        bad.replace_range(line_start..line_start + 1, "x");
        match Checkpoint::from_text(&bad) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, line_start, "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_config_rejected() {
        let ck = small_checkpoint();
        let mut c = ExperimentConfig::default();
        c.variant = SugarVariant::C;
        ck.check_compatible(&c).unwrap();
        c.model.processing_hidden = 12;
        assert!(matches!(ck.check_compatible(&c), Err(Error::Shape(_))));
        let mut c = ExperimentConfig::default();
        c.variant = SugarVariant::A;
        assert!(matches!(ck.check_compatible(&c), Err(Error::Shape(_))));
    }
}
