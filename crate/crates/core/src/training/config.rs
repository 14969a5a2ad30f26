use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoder::DEFAULT_INV_TEMPERATURE;
use crate::error::{Error, Result};
use crate::hypervector::DEFAULT_DIM;
use crate::nn::DEFAULT_LOGIT_SCALE;
use crate::training::SplitMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate of the cosine schedule.
    pub lr: f64,
    pub lr_min: f64,
    /// Initial `1/K`.
    pub inv_temperature: f64,
    pub learn_temperature: bool,
    pub weight_decay: f64,
    /// Multiplier on cosine similarities before the BCE sigmoid.
    pub logit_scale: f64,
    pub seed: u64,
    pub dim: usize,
    pub mode: SplitMode,
    /// Threshold class attributes into {0, 1} BCE targets instead of using
    /// them as soft targets.
    pub binarize: Option<f64>,
    /// Replace the stationary encoder by a trainable MLP with this hidden width.
    pub mlp_hidden: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 3e-3,
            lr_min: 1e-5,
            inv_temperature: DEFAULT_INV_TEMPERATURE,
            learn_temperature: true,
            weight_decay: 0.01,
            logit_scale: DEFAULT_LOGIT_SCALE,
            seed: 0,
            dim: DEFAULT_DIM,
            mode: SplitMode::Zs,
            binarize: None,
            mlp_hidden: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("lr", self.lr),
            ("inv_temperature", self.inv_temperature),
            ("logit_scale", self.logit_scale),
            ("dim", self.dim as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return Err(Error::InvalidValue(format!("lr_min {} must lie in [0, lr]", self.lr_min)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidValue(format!("weight_decay {} must be non-negative", self.weight_decay)));
        }
        if self.mlp_hidden == Some(0) {
            return Err(Error::InvalidValue("mlp_hidden must be positive".into()));
        }
        if let Some(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidValue(format!("binarize threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AttributeExtraction,
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub phase: Phase,
    pub config: RunConfig,
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub inv_temperature: f64,
    pub metrics: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// `# key=value` provenance lines followed by the loss curve.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# phase={}\n# config={}\n", serde_json::to_string(&self.phase).expect("phase"), self.config.to_json());
        for (k, v) in &self.metrics {
            s += &format!("# {k}={v}\n");
        }
        s += "epoch,loss\n";
        for (e, l) in self.epoch_losses.iter().enumerate() {
            s += &format!("{},{l}\n", e + 1);
        }
        s
    }
}

/// Sample mean and sample standard deviation of per-seed values; the
/// deviation is only defined for two or more values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Metric("no values to summarize".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Ok(Summary { n, mean, std })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.2} ± {:.2}", self.mean, s),
            None => write!(f, "{:.2}", self.mean),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_textbook() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((s.mean - 5.0).abs() < 1e-12);
        assert!((s.std.unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        let one = summarize(&[3.5]).unwrap();
        assert_eq!(one.std, None);
        assert_eq!(one.to_string(), "3.50");
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn config_validation_and_json() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.epochs, 10);
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let bad = RunConfig { lr: 0.0, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { lr_min: 1.0, ..c };
        assert!(bad.validate().is_err());
    }
}
