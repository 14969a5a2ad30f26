use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// The trainable FC projection from backbone embeddings (d_in) to the
/// hypervector space (d).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    /// d_in × d
    pub weight: Matrix,
    /// d
    pub bias: Vec<f64>,
}

impl ProjectionHead {
    /// Gaussian weights with std `1/√d_in`, zero bias.
    pub fn init(d_in: usize, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: gaussian_matrix(d_in, d, 1.0 / (d_in.max(1) as f64).sqrt(), rng),
            bias: vec![0.0; d],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    /// `X W + b` row-wise.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "head expects {} input columns, got {}",
                self.d_in(),
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.weight)?;
        for i in 0..out.rows() {
            axpy(1.0, &self.bias, out.row_mut(i));
        }
        Ok(out)
    }

    /// Weight and bias gradients given the input batch and `∂L/∂output`.
    pub fn backward(&self, x: &Matrix, d_out: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        Ok((x.t_matmul(d_out)?, d_out.column_sums()))
    }
}

/// Two-layer trainable attribute encoder `α → hidden → d` with a tanh between
/// the layers, used in place of the stationary codebooks for ablations.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAttributeEncoder {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

pub struct MlpCache {
    pub hidden: Matrix,
}

impl MlpAttributeEncoder {
    pub fn init(alpha: usize, hidden: usize, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: gaussian_matrix(alpha, hidden, 1.0 / (alpha.max(1) as f64).sqrt(), rng),
            b1: vec![0.0; hidden],
            w2: gaussian_matrix(hidden, d, 1.0 / (hidden.max(1) as f64).sqrt(), rng),
            b2: vec![0.0; d],
        }
    }

    pub fn alpha(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, a: &Matrix) -> Result<(Matrix, MlpCache)> {
        if a.cols() != self.alpha() {
            return Err(Error::Shape(format!(
                "mlp expects {} attribute columns, got {}",
                self.alpha(),
                a.cols()
            )));
        }
        let mut hidden = a.matmul(&self.w1)?;
        for i in 0..hidden.rows() {
            let row = hidden.row_mut(i);
            axpy(1.0, &self.b1, row);
            row.iter_mut().for_each(|v| *v = v.tanh());
        }
        let mut out = hidden.matmul(&self.w2)?;
        for i in 0..out.rows() {
            axpy(1.0, &self.b2, out.row_mut(i));
        }
        Ok((out, MlpCache { hidden }))
    }

    pub fn backward(&self, a: &Matrix, cache: &MlpCache, d_out: &Matrix) -> Result<MlpGradients> {
        let w2 = cache.hidden.t_matmul(d_out)?;
        let b2 = d_out.column_sums();
        let mut d_hidden = d_out.matmul_t(&self.w2)?;
        for (dh, h) in d_hidden.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
            *dh *= 1.0 - h * h;
        }
        Ok(MlpGradients {
            w1: a.t_matmul(&d_hidden)?,
            b1: d_hidden.column_sums(),
            w2,
            b2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_head_is_passthrough() {
        let head = ProjectionHead {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 4.0, 1.0]]).unwrap();
        assert_eq!(head.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weight_head_outputs_bias() {
        let head = ProjectionHead {
            weight: Matrix::zeros(2, 3),
            bias: vec![1.0, 2.0, 3.0],
        };
        let x = Matrix::from_rows(&[vec![5.0, 6.0], vec![-1.0, 0.0]]).unwrap();
        let y = head.forward(&x).unwrap();
        for r in y.row_iter() {
            assert_eq!(r, &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn head_matches_hand_multiply() {
        let head = ProjectionHead {
            weight: Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.75, 1.5]]).unwrap(),
            bias: vec![0.1, -0.2],
        };
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]).unwrap();
        let y = head.forward(&x).unwrap();
        let expected = [
            [0.5 + 4.0 - 2.25 + 0.1, -1.0 + 0.5 + 4.5 - 0.2],
            [-0.5 + 1.0 + 0.1, 1.0 + 0.125 - 0.2],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y[(i, j)] - expected[i][j]).abs() < 1e-12);
            }
        }
        assert!(head.forward(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = ProjectionHead::init(4, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let b = ProjectionHead::init(4, 6, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.weight.all_finite());
    }
}
