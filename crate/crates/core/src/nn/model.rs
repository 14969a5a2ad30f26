//! Forward and backward passes through the projection head, the cosine
//! kernel with temperature, and (in ablation mode) the trainable MLP
//! attribute encoder. The hypervector dictionary is an input, never a
//! parameter, so no gradient reaches it.

use crate::encoder::{normalize_rows, SimilarityKernel};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::nn::layers::{MlpAttributeEncoder, MlpGradients, ProjectionHead};
use crate::nn::loss::{cross_entropy_loss, weighted_bce_loss};
use crate::nn::optim::ParamSlot;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub head: ProjectionHead,
    pub kernel: SimilarityKernel,
    pub mlp: Option<MlpAttributeEncoder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
    pub log_temperature: f64,
    pub mlp: Option<MlpGradients>,
}

impl Parameters {
    /// Optimizer view: head weight, head bias, log K, then the MLP tensors.
    pub fn slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut out = vec![
            ParamSlot {
                name: "head.weight",
                values: self.head.weight.as_mut_slice(),
                decay: true,
                frozen: false,
            },
            ParamSlot {
                name: "head.bias",
                values: &mut self.head.bias,
                decay: false,
                frozen: false,
            },
            ParamSlot {
                name: "log_temperature",
                values: std::slice::from_mut(&mut self.kernel.log_temperature),
                decay: false,
                frozen: !self.kernel.learnable,
            },
        ];
        if let Some(mlp) = &mut self.mlp {
            out.extend([
                ParamSlot {
                    name: "mlp.w1",
                    values: mlp.w1.as_mut_slice(),
                    decay: true,
                    frozen: false,
                },
                ParamSlot {
                    name: "mlp.b1",
                    values: &mut mlp.b1,
                    decay: false,
                    frozen: false,
                },
                ParamSlot {
                    name: "mlp.w2",
                    values: mlp.w2.as_mut_slice(),
                    decay: true,
                    frozen: false,
                },
                ParamSlot {
                    name: "mlp.b2",
                    values: &mut mlp.b2,
                    decay: false,
                    frozen: false,
                },
            ]);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.head.weight.as_slice().to_vec();
        out.extend_from_slice(&self.head.bias);
        out.push(self.kernel.log_temperature);
        if let Some(m) = &self.mlp {
            out.extend_from_slice(m.w1.as_slice());
            out.extend_from_slice(&m.b1);
            out.extend_from_slice(m.w2.as_slice());
            out.extend_from_slice(&m.b2);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut slots = self.slots();
        let total: usize = slots.iter().map(|s| s.values.len()).sum();
        if total != flat.len() {
            return Err(Error::Shape(format!("{} values for {total} parameters", flat.len())));
        }
        let mut offset = 0;
        for s in slots.iter_mut() {
            let n = s.values.len();
            s.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

impl Gradients {
    pub fn zeros_like(p: &Parameters) -> Self {
        Self {
            head_weight: Matrix::zeros(p.head.weight.rows(), p.head.weight.cols()),
            head_bias: vec![0.0; p.head.bias.len()],
            log_temperature: 0.0,
            mlp: p.mlp.as_ref().map(|m| MlpGradients {
                w1: Matrix::zeros(m.w1.rows(), m.w1.cols()),
                b1: vec![0.0; m.b1.len()],
                w2: Matrix::zeros(m.w2.rows(), m.w2.cols()),
                b2: vec![0.0; m.b2.len()],
            }),
        }
    }

    /// Same order as [`Parameters::slots`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.head_weight.as_slice(),
            self.head_bias.as_slice(),
            std::slice::from_ref(&self.log_temperature),
        ];
        if let Some(m) = &self.mlp {
            out.extend([m.w1.as_slice(), m.b1.as_slice(), m.w2.as_slice(), m.b2.as_slice()]);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Values kept from the kernel's forward pass.
#[derive(Debug, Clone)]
pub struct KernelCache {
    pub e_hat: Matrix,
    pub e_norms: Vec<f64>,
    pub t_hat: Matrix,
    pub t_norms: Vec<f64>,
    /// `cos(e_i, t_j) / K`
    pub logits: Matrix,
    pub inv_temperature: f64,
}

pub fn kernel_forward(embeddings: &Matrix, targets: &Matrix, inv_temperature: f64) -> Result<KernelCache> {
    if embeddings.cols() != targets.cols() {
        return Err(Error::DimensionMismatch {
            left: embeddings.cols(),
            right: targets.cols(),
        });
    }
    let (e_hat, e_norms) = normalize_rows(embeddings, "embedding")?;
    let (t_hat, t_norms) = normalize_rows(targets, "target")?;
    let mut logits = e_hat.matmul_t(&t_hat)?;
    logits.as_mut_slice().iter_mut().for_each(|v| *v *= inv_temperature);
    Ok(KernelCache {
        e_hat,
        e_norms,
        t_hat,
        t_norms,
        logits,
        inv_temperature,
    })
}

#[derive(Debug, Clone)]
pub struct KernelGrads {
    pub embeddings: Matrix,
    pub targets: Option<Matrix>,
    pub log_temperature: f64,
}

/// Gradient of `x ↦ x / ‖x‖` applied row-wise.
fn normalize_backward(x_hat: &Matrix, norms: &[f64], d_hat: &Matrix) -> Matrix {
    let mut out = d_hat.clone();
    for (i, &n) in norms.iter().enumerate() {
        let xi = x_hat.row(i);
        let proj = dot(xi, d_hat.row(i));
        for (o, &x) in out.row_mut(i).iter_mut().zip(xi) {
            *o = (*o - x * proj) / n;
        }
    }
    out
}

/// Chain rule from `∂L/∂logits` back to the raw embeddings, optionally the
/// raw targets, and `log K`.
pub fn backward_through_kernel(cache: &KernelCache, d_logits: &Matrix, with_targets: bool) -> Result<KernelGrads> {
    if d_logits.rows() != cache.logits.rows() || d_logits.cols() != cache.logits.cols() {
        return Err(Error::Shape("logit gradient does not match cached logits".into()));
    }
    // logits = S / K with K = exp(log K), so ∂logits/∂log K = -logits.
    let log_temperature = -dot(d_logits.as_slice(), cache.logits.as_slice());
    let mut d_sim = d_logits.clone();
    d_sim.as_mut_slice().iter_mut().for_each(|v| *v *= cache.inv_temperature);

    let d_e_hat = d_sim.matmul(&cache.t_hat)?;
    let embeddings = normalize_backward(&cache.e_hat, &cache.e_norms, &d_e_hat);
    let targets = if with_targets {
        let d_t_hat = d_sim.t_matmul(&cache.e_hat)?;
        Some(normalize_backward(&cache.t_hat, &cache.t_norms, &d_t_hat))
    } else {
        None
    };
    Ok(KernelGrads {
        embeddings,
        targets,
        log_temperature,
    })
}

/// Class embeddings for the classification loss.
#[derive(Debug, Clone, Copy)]
pub enum ClassTargets<'a> {
    /// Fixed `φ` rows (C × d).
    Stationary(&'a Matrix),
    /// Class attribute rows (C × α) fed through the parameters' MLP encoder.
    Trainable(&'a Matrix),
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub logits: Matrix,
}

/// Mean softmax cross-entropy over a batch, with gradients for every
/// parameter.
pub fn zsc_batch(params: &Parameters, x: &Matrix, labels: &[usize], targets: ClassTargets<'_>) -> Result<BatchLoss> {
    if x.rows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), labels.len())));
    }
    let e = params.head.forward(x)?;
    let (t, mlp_cache) = match targets {
        ClassTargets::Stationary(phi) => (phi.clone(), None),
        ClassTargets::Trainable(a) => {
            let mlp = params
                .mlp
                .as_ref()
                .ok_or_else(|| Error::InvalidValue("trainable targets need an MLP encoder".into()))?;
            let (t, cache) = mlp.forward(a)?;
            (t, Some((a, cache)))
        }
    };
    let cache = kernel_forward(&e, &t, params.kernel.inv_temperature())?;
    let b = x.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut d_logits = Matrix::zeros(cache.logits.rows(), cache.logits.cols());
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = cross_entropy_loss(cache.logits.row(i), label)?;
        loss += l;
        d_logits.row_mut(i).iter_mut().zip(g).for_each(|(d, gi)| *d = gi / b);
    }
    loss /= b;

    let kg = backward_through_kernel(&cache, &d_logits, mlp_cache.is_some())?;
    let (head_weight, head_bias) = params.head.backward(x, &kg.embeddings)?;
    let mut grads = Gradients::zeros_like(params);
    grads.head_weight = head_weight;
    grads.head_bias = head_bias;
    grads.log_temperature = if params.kernel.learnable { kg.log_temperature } else { 0.0 };
    if let (Some((a, mc)), Some(dt), Some(mlp)) = (mlp_cache, kg.targets.as_ref(), params.mlp.as_ref()) {
        grads.mlp = Some(mlp.backward(a, &mc, dt)?);
    }
    Ok(BatchLoss {
        loss,
        grads,
        logits: cache.logits,
    })
}

/// Mean weighted BCE between `q = cos(γ(x), B)` and per-sample attribute
/// targets. `dictionary` holds the ±1 attribute vectors (α × d); the
/// temperature is not involved, the sigmoid sees `scale * q`.
pub fn attribute_batch(
    params: &Parameters,
    x: &Matrix,
    targets: &Matrix,
    pos_weights: &[f64],
    dictionary: &Matrix,
    scale: f64,
) -> Result<BatchLoss> {
    if x.rows() != targets.rows() {
        return Err(Error::Shape(format!("{} rows but {} target rows", x.rows(), targets.rows())));
    }
    let e = params.head.forward(x)?;
    let cache = kernel_forward(&e, dictionary, 1.0)?;
    let b = x.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut d_q = Matrix::zeros(cache.logits.rows(), cache.logits.cols());
    for i in 0..x.rows() {
        let (l, g) = weighted_bce_loss(cache.logits.row(i), targets.row(i), pos_weights, scale)?;
        loss += l;
        d_q.row_mut(i).iter_mut().zip(g).for_each(|(d, gi)| *d = gi / b);
    }
    loss /= b;
    let kg = backward_through_kernel(&cache, &d_q, false)?;
    let (head_weight, head_bias) = params.head.backward(x, &kg.embeddings)?;
    let mut grads = Gradients::zeros_like(params);
    grads.head_weight = head_weight;
    grads.head_bias = head_bias;
    Ok(BatchLoss {
        loss,
        grads,
        logits: cache.logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebooks::{AttributeSchema, AttributeVectorMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn params(d_in: usize, d: usize, mlp: Option<(usize, usize)>, rng: &mut ChaCha8Rng) -> Parameters {
        let mut head = ProjectionHead::init(d_in, d, rng);
        head.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        Parameters {
            head,
            kernel: SimilarityKernel::with_inv_temperature(3.0, true),
            mlp: mlp.map(|(alpha, h)| MlpAttributeEncoder::init(alpha, h, d, rng)),
        }
    }

    /// Central differences over every parameter; returns the worst relative error.
    fn fd_check(p: &Parameters, analytic: &[f64], loss: impl Fn(&Parameters) -> f64) -> f64 {
        let h = 1e-5;
        let base = p.flatten();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut q = p.clone();
            let mut v = base.clone();
            v[i] += h;
            q.set_flat(&v).unwrap();
            let up = loss(&q);
            v[i] -= 2.0 * h;
            q.set_flat(&v).unwrap();
            let dn = loss(&q);
            let fd = (up - dn) / (2.0 * h);
            let a = analytic[i];
            let denom = a.abs().max(fd.abs());
            let err = if denom < 1e-7 { (a - fd).abs() } else { (a - fd).abs() / denom };
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn zsc_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (b, d_in, d, c) = (6, 5, 32, 4);
        let p = params(d_in, d, None, &mut rng);
        let x = random_matrix(b, d_in, &mut rng);
        let phi = random_matrix(c, d, &mut rng);
        let labels: Vec<usize> = (0..b).map(|i| i % c).collect();
        let out = zsc_batch(&p, &x, &labels, ClassTargets::Stationary(&phi)).unwrap();
        let err = fd_check(&p, &out.grads.flatten(), |q| {
            zsc_batch(q, &x, &labels, ClassTargets::Stationary(&phi)).unwrap().loss
        });
        assert!(err < 1e-4, "worst relative error {err}");
        assert!(out.grads.log_temperature != 0.0);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (b, d_in, d, c, alpha, h) = (5, 4, 16, 3, 6, 7);
        let p = params(d_in, d, Some((alpha, h)), &mut rng);
        let x = random_matrix(b, d_in, &mut rng);
        let a = random_matrix(c, alpha, &mut rng);
        let labels = vec![0, 2, 1, 1, 0];
        let out = zsc_batch(&p, &x, &labels, ClassTargets::Trainable(&a)).unwrap();
        assert!(out.grads.mlp.is_some());
        let err = fd_check(&p, &out.grads.flatten(), |q| {
            zsc_batch(q, &x, &labels, ClassTargets::Trainable(&a)).unwrap().loss
        });
        assert!(err < 1e-4, "worst relative error {err}");
    }

    #[test]
    fn attribute_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (b, d_in, d, alpha) = (4, 6, 32, 8);
        let schema = AttributeSchema::from_pairs((0..alpha).map(|i| (format!("g{}", i % 3), format!("v{}", i / 3)))).unwrap();
        let dict = AttributeVectorMatrix::generate(schema, d, 4).unwrap().dense_f64();
        let p = params(d_in, d, None, &mut rng);
        let x = random_matrix(b, d_in, &mut rng);
        let t = Matrix::from_vec(b, alpha, (0..b * alpha).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let w: Vec<f64> = (0..alpha).map(|i| if i == 0 { 0.0 } else { rng.random_range(0.5..3.0) }).collect();
        let out = attribute_batch(&p, &x, &t, &w, &dict, 5.0).unwrap();
        assert_eq!(out.grads.log_temperature, 0.0);
        let err = fd_check(&p, &out.grads.flatten(), |q| attribute_batch(q, &x, &t, &w, &dict, 5.0).unwrap().loss);
        assert!(err < 1e-4, "worst relative error {err}");
    }

    #[test]
    fn gradients_vanish_at_a_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let (b, d_in, d, alpha) = (5, 6, 32, 8);
        let schema = AttributeSchema::from_pairs((0..alpha).map(|i| (format!("g{}", i % 2), format!("v{i}")))).unwrap();
        let dict = AttributeVectorMatrix::generate(schema, d, 9).unwrap().dense_f64();
        let p = params(d_in, d, None, &mut rng);
        let x = random_matrix(b, d_in, &mut rng);
        // targets equal to the model's own sigmoid outputs make BCE stationary
        let q = kernel_forward(&p.head.forward(&x).unwrap(), &dict, 1.0).unwrap().logits;
        let t = Matrix::from_vec(b, alpha, q.as_slice().iter().map(|v| crate::nn::loss::sigmoid(5.0 * v)).collect()).unwrap();
        let out = attribute_batch(&p, &x, &t, &[1.0; 8], &dict, 5.0).unwrap();
        assert!(out.grads.norm() < 1e-8, "{}", out.grads.norm());
    }

    #[test]
    fn frozen_temperature_gets_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut p = params(3, 8, None, &mut rng);
        p.kernel.learnable = false;
        let x = random_matrix(2, 3, &mut rng);
        let phi = random_matrix(2, 8, &mut rng);
        let out = zsc_batch(&p, &x, &[0, 1], ClassTargets::Stationary(&phi)).unwrap();
        assert_eq!(out.grads.log_temperature, 0.0);
        assert!(p.slots()[2].frozen);
    }

    #[test]
    fn zero_embedding_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = Parameters {
            head: ProjectionHead {
                weight: Matrix::zeros(3, 8),
                bias: vec![0.0; 8],
            },
            kernel: SimilarityKernel::default(),
            mlp: None,
        };
        let x = random_matrix(2, 3, &mut rng);
        let phi = random_matrix(2, 8, &mut rng);
        assert!(matches!(
            zsc_batch(&p, &x, &[0, 1], ClassTargets::Stationary(&phi)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let p = params(3, 4, Some((2, 3)), &mut rng);
        let mut q = params(3, 4, Some((2, 3)), &mut rng);
        q.set_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
        let g = Gradients::zeros_like(&p);
        assert_eq!(g.flatten().len(), p.flatten().len());
    }
}
