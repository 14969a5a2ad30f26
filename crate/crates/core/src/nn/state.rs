//! Trainer state and its checkpoint format.
//!
//! A checkpoint is a short ASCII header terminated by a line `end`, followed
//! by little-endian `f64` blocks: the flattened parameters, then (when the
//! optimizer has taken a step) the first and second moments in the same
//! order. Floats in the header use the shortest round-trip representation, so
//! save/load is exact.

use std::path::Path;

use crate::encoder::SimilarityKernel;
use crate::error::{Error, FormatError, Result};
use crate::linalg::Matrix;
use crate::nn::layers::{MlpAttributeEncoder, ProjectionHead};
use crate::nn::model::Parameters;
use crate::nn::optim::{AdamW, AdamWConfig, CosineSchedule};

const MAGIC: &str = "HDZSC-CHECKPOINT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Parameters,
    pub optimizer: AdamW,
    pub schedule: CosineSchedule,
    /// Configuration of the run that produced this state, as one JSON line.
    pub config: String,
}

impl TrainState {
    pub fn new(params: Parameters, adamw: AdamWConfig, schedule: CosineSchedule) -> Self {
        Self {
            params,
            optimizer: AdamW::new(adamw),
            schedule,
            config: "{}".into(),
        }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut header = format!("{MAGIC} {VERSION}\n");
        header += &format!("d_in {}\nd {}\n", p.head.d_in(), p.head.d_out());
        match &p.mlp {
            Some(m) => header += &format!("mlp {} {}\n", m.alpha(), m.hidden()),
            None => header += "mlp none\n",
        }
        header += &format!("temperature_learnable {}\n", p.kernel.learnable);
        header += &format!("step {}\n", self.optimizer.step);
        let s = &self.schedule;
        header += &format!("schedule {:?} {:?} {}\n", s.lr_max, s.lr_min, s.total_steps);
        let c = &self.optimizer.config;
        header += &format!("adamw {:?} {:?} {:?} {:?}\n", c.beta1, c.beta2, c.eps, c.weight_decay);
        let has_moments = !self.optimizer.first_moments.is_empty();
        header += &format!("moments {}\n", has_moments as u8);
        header += &format!("config {}\n", self.config.replace('\n', " "));
        header += "end\n";

        let mut out = header.into_bytes();
        let mut push = |vals: &[f64]| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        push(&p.flatten());
        if has_moments {
            push(&self.optimizer.first_moments.concat());
            push(&self.optimizer.second_moments.concat());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let mut header = Header::default();
        let mut offset = 0;
        let mut lineno = 0;
        loop {
            let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                return Err(Error::format(path, FormatError::TruncatedHeader));
            };
            lineno += 1;
            let line = std::str::from_utf8(&bytes[offset..offset + nl])
                .map_err(|_| Error::malformed(path, lineno, "header is not ASCII"))?;
            offset += nl + 1;
            if line == "end" {
                break;
            }
            header.apply(line, lineno, path)?;
        }
        header.build(&bytes[offset..], path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[derive(Default)]
struct Header {
    magic: bool,
    d_in: Option<usize>,
    d: Option<usize>,
    mlp: Option<Option<(usize, usize)>>,
    learnable: Option<bool>,
    step: Option<u64>,
    schedule: Option<CosineSchedule>,
    adamw: Option<AdamWConfig>,
    moments: Option<bool>,
    config: Option<String>,
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, what: &str, line: usize, path: &str) -> Result<T> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::malformed(path, line, format!("expected {what}")))
}

impl Header {
    fn apply(&mut self, line: &str, n: usize, path: &str) -> Result<()> {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let mut f = rest.split_whitespace();
        if !self.magic {
            if key != MAGIC {
                return Err(Error::format(
                    path,
                    FormatError::BadMagic {
                        expected: MAGIC.into(),
                        found: key.chars().take(32).collect(),
                    },
                ));
            }
            let version: u32 = parse_field(f.next(), "version", n, path)?;
            if version != VERSION {
                return Err(Error::format(
                    path,
                    FormatError::UnsupportedVersion {
                        expected: VERSION,
                        found: version,
                    },
                ));
            }
            self.magic = true;
            return Ok(());
        }
        match key {
            "d_in" => self.d_in = Some(parse_field(f.next(), "input dimension", n, path)?),
            "d" => self.d = Some(parse_field(f.next(), "hypervector dimension", n, path)?),
            "mlp" => {
                self.mlp = Some(if rest == "none" {
                    None
                } else {
                    Some((
                        parse_field(f.next(), "mlp alpha", n, path)?,
                        parse_field(f.next(), "mlp hidden width", n, path)?,
                    ))
                })
            }
            "temperature_learnable" => self.learnable = Some(parse_field(f.next(), "true or false", n, path)?),
            "step" => self.step = Some(parse_field(f.next(), "step count", n, path)?),
            "schedule" => {
                self.schedule = Some(CosineSchedule {
                    lr_max: parse_field(f.next(), "lr_max", n, path)?,
                    lr_min: parse_field(f.next(), "lr_min", n, path)?,
                    total_steps: parse_field(f.next(), "total steps", n, path)?,
                })
            }
            "adamw" => {
                self.adamw = Some(AdamWConfig {
                    beta1: parse_field(f.next(), "beta1", n, path)?,
                    beta2: parse_field(f.next(), "beta2", n, path)?,
                    eps: parse_field(f.next(), "eps", n, path)?,
                    weight_decay: parse_field(f.next(), "weight decay", n, path)?,
                })
            }
            "moments" => self.moments = Some(parse_field::<u8>(f.next(), "0 or 1", n, path)? == 1),
            "config" => self.config = Some(rest.to_string()),
            other => return Err(Error::malformed(path, n, format!("unknown header key `{other}`"))),
        }
        Ok(())
    }

    fn build(self, payload: &[u8], path: &str) -> Result<TrainState> {
        let missing = |what: &str| Error::format(path, FormatError::Malformed {
            line: 0,
            message: format!("header lacks `{what}`"),
        });
        if !self.magic {
            return Err(Error::format(path, FormatError::TruncatedHeader));
        }
        let d_in = self.d_in.ok_or_else(|| missing("d_in"))?;
        let d = self.d.ok_or_else(|| missing("d"))?;
        let mlp_dims = self.mlp.ok_or_else(|| missing("mlp"))?;
        let learnable = self.learnable.ok_or_else(|| missing("temperature_learnable"))?;
        let step = self.step.ok_or_else(|| missing("step"))?;
        let schedule = self.schedule.ok_or_else(|| missing("schedule"))?;
        let adamw = self.adamw.ok_or_else(|| missing("adamw"))?;
        let moments = self.moments.ok_or_else(|| missing("moments"))?;

        let mut params = Parameters {
            head: ProjectionHead {
                weight: Matrix::zeros(d_in, d),
                bias: vec![0.0; d],
            },
            kernel: SimilarityKernel {
                log_temperature: 0.0,
                learnable,
            },
            mlp: mlp_dims.map(|(alpha, h)| MlpAttributeEncoder {
                w1: Matrix::zeros(alpha, h),
                b1: vec![0.0; h],
                w2: Matrix::zeros(h, d),
                b2: vec![0.0; d],
            }),
        };
        let shapes: Vec<usize> = params.slots().iter().map(|s| s.values.len()).collect();
        let n: usize = shapes.iter().sum();
        let blocks = if moments { 3 } else { 1 };
        let mut values = Vec::with_capacity(n * blocks);
        for (i, chunk) in payload.chunks(8).enumerate() {
            if i == n * blocks {
                break;
            }
            let Ok(raw) = <[u8; 8]>::try_from(chunk) else {
                return Err(Error::format(path, FormatError::TruncatedPayload { row: i }));
            };
            values.push(f64::from_le_bytes(raw));
        }
        if values.len() < n * blocks {
            return Err(Error::format(path, FormatError::TruncatedPayload { row: values.len() }));
        }
        if payload.len() > n * blocks * 8 {
            return Err(Error::format(path, FormatError::TrailingBytes(payload.len() - n * blocks * 8)));
        }
        params.set_flat(&values[..n])?;
        let split = |block: &[f64]| {
            let mut out = Vec::with_capacity(shapes.len());
            let mut o = 0;
            for &len in &shapes {
                out.push(block[o..o + len].to_vec());
                o += len;
            }
            out
        };
        let mut optimizer = AdamW::new(adamw);
        optimizer.step = step;
        if moments {
            optimizer.first_moments = split(&values[n..2 * n]);
            optimizer.second_moments = split(&values[2 * n..]);
        }
        Ok(TrainState {
            params,
            optimizer,
            schedule,
            config: self.config.unwrap_or_else(|| "{}".into()),
        })
    }
}
