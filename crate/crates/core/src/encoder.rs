//! The stationary attribute encoder `φ = A × B` and the cosine similarity
//! kernel that compares image embeddings against it.

use std::sync::Arc;

use crate::audit::{self, Access, AccessAudit};
use crate::codebooks::AttributeVectorMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// How values in a class-attribute file are scaled on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttributeScale {
    #[default]
    Raw,
    /// Values are percentages (0–100) and are divided by 100.
    Percent,
}

/// Per-class attribute strengths `A` (C × α).
#[derive(Debug, Clone)]
pub struct ClassAttributeMatrix {
    values: Matrix,
    class_ids: Vec<u32>,
    audit: Option<Arc<AccessAudit>>,
}

impl ClassAttributeMatrix {
    pub fn new(values: Matrix, class_ids: Vec<u32>) -> Result<Self> {
        if values.rows() != class_ids.len() {
            return Err(Error::Shape(format!(
                "{} attribute rows for {} class ids",
                values.rows(),
                class_ids.len()
            )));
        }
        if !values.all_finite() {
            return Err(Error::InvalidValue("class attribute matrix has non-finite entries".into()));
        }
        let mut sorted = class_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidValue("duplicate class id in attribute matrix".into()));
        }
        Ok(Self {
            values,
            class_ids,
            audit: None,
        })
    }

    /// Parses whitespace-separated rows; row `i` (0-based) is class `i + 1`.
    pub fn parse(text: &str, scale: AttributeScale, path: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::malformed(path, lineno + 1, format!("expected a finite real, found {tok:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::malformed(
                        path,
                        lineno + 1,
                        format!("{} columns, expected {}", row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        let divisor = match scale {
            AttributeScale::Raw => 1.0,
            AttributeScale::Percent => 100.0,
        };
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / divisor).collect())
            .collect();
        let ids = (1..=rows.len() as u32).collect();
        Self::new(Matrix::from_rows(&rows)?, ids)
    }

    pub fn with_audit(mut self, audit: Arc<AccessAudit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn alpha(&self) -> usize {
        self.values.cols()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn position(&self, class_id: u32) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class_id)
    }

    /// Attribute row of `class_id`.
    pub fn row(&self, class_id: u32) -> Result<&[f64]> {
        let i = self.position(class_id).ok_or(Error::UnknownLabel(class_id))?;
        audit::record(&self.audit, || Access::AttributeRow { class_id });
        Ok(self.values.row(i))
    }

    /// Copy restricted to `class_ids`, in that order. Only those rows are read.
    pub fn select(&self, class_ids: &[u32]) -> Result<Self> {
        let rows = class_ids
            .iter()
            .map(|&c| self.row(c).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let values = if rows.is_empty() {
            Matrix::zeros(0, self.alpha())
        } else {
            Matrix::from_rows(&rows)?
        };
        Ok(Self {
            values,
            class_ids: class_ids.to_vec(),
            audit: self.audit.clone(),
        })
    }

    /// All rows, as a matrix. Counts as reading every class.
    pub fn matrix(&self) -> &Matrix {
        for &class_id in &self.class_ids {
            audit::record(&self.audit, || Access::AttributeRow { class_id });
        }
        &self.values
    }

    pub fn to_text(&self) -> String {
        self.values
            .row_iter()
            .map(|r| {
                let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                cells.join(" ") + "\n"
            })
            .collect()
    }
}

/// `φ = A × B`, one real d-dimensional row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEncoderMatrix {
    pub phi: Matrix,
    pub class_ids: Vec<u32>,
}

impl ClassEncoderMatrix {
    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }
}

pub fn build_class_encoder(a: &ClassAttributeMatrix, b: &AttributeVectorMatrix) -> Result<ClassEncoderMatrix> {
    if a.alpha() != b.alpha() {
        return Err(Error::Shape(format!(
            "class attributes have {} columns but the dictionary has {} attributes",
            a.alpha(),
            b.alpha()
        )));
    }
    let values = a.matrix();
    let mut phi = Matrix::zeros(values.rows(), b.dim());
    for (x, bx) in b.rows().enumerate() {
        for i in 0..values.rows() {
            let w = values[(i, x)];
            if w != 0.0 {
                bx.axpy_into(w, phi.row_mut(i));
            }
        }
    }
    Ok(ClassEncoderMatrix {
        phi,
        class_ids: a.class_ids().to_vec(),
    })
}

/// Lowest value allowed for `log K`, i.e. `1/K ≤ 100`.
pub const MIN_LOG_TEMPERATURE: f64 = -4.605_170_185_988_091; // ln(0.01)
pub const DEFAULT_INV_TEMPERATURE: f64 = 10.0;

/// Cosine kernel with temperature `K`, stored as `log K` so `K > 0` holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityKernel {
    pub log_temperature: f64,
    pub learnable: bool,
}

impl Default for SimilarityKernel {
    fn default() -> Self {
        Self::with_inv_temperature(DEFAULT_INV_TEMPERATURE, true)
    }
}

impl SimilarityKernel {
    pub fn with_inv_temperature(inv_k: f64, learnable: bool) -> Self {
        let mut k = Self {
            log_temperature: -inv_k.ln(),
            learnable,
        };
        k.clamp();
        k
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn inv_temperature(&self) -> f64 {
        (-self.log_temperature).exp()
    }

    pub fn clamp(&mut self) {
        if self.log_temperature < MIN_LOG_TEMPERATURE {
            self.log_temperature = MIN_LOG_TEMPERATURE;
        }
    }
}

/// Row-normalized copy of `m` plus the original row norms.
pub fn normalize_rows(m: &Matrix, what: &str) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate(format!("{what} row {i} has norm {n}")));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Class logits: entry `(i, j)` is `cos(e_i, t_j) / K`.
pub fn cossim_batch(embeddings: &Matrix, targets: &Matrix, kernel: &SimilarityKernel) -> Result<Matrix> {
    if embeddings.cols() != targets.cols() {
        return Err(Error::DimensionMismatch {
            left: embeddings.cols(),
            right: targets.cols(),
        });
    }
    let (e, _) = normalize_rows(embeddings, "embedding")?;
    let (t, _) = normalize_rows(targets, "target")?;
    let mut logits = e.matmul_t(&t)?;
    let inv_k = kernel.inv_temperature();
    logits.as_mut_slice().iter_mut().for_each(|v| *v *= inv_k);
    Ok(logits)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Position (row of `phi`) of the best matching class.
pub fn predict(x: &[f64], phi: &ClassEncoderMatrix, kernel: &SimilarityKernel) -> Result<usize> {
    let query = Matrix::from_vec(1, x.len(), x.to_vec())?;
    let logits = cossim_batch(&query, &phi.phi, kernel)?;
    argmax(logits.row(0)).ok_or_else(|| Error::Shape("no classes to predict from".into()))
}

/// `q_x = cos(x, b_x)` for every attribute row of `B`.
pub fn attribute_similarity(x: &[f64], b: &AttributeVectorMatrix) -> Result<Vec<f64>> {
    if x.len() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: b.dim(),
        });
    }
    let n = norm(x);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Degenerate(format!("query embedding has norm {n}")));
    }
    let scale = 1.0 / (n * (b.dim() as f64).sqrt());
    Ok(b.rows().map(|row| row.dot_f64(x) * scale).collect())
}

/// Plain cosine similarity of two real vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebooks::AttributeSchema;
    use crate::hypervector::Hypervector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dictionary(alpha: usize, dim: usize) -> AttributeVectorMatrix {
        let pairs: Vec<(String, String)> = (0..alpha).map(|i| (format!("g{}", i % 3), format!("v{i}"))).collect();
        AttributeVectorMatrix::generate(AttributeSchema::from_pairs(pairs).unwrap(), dim, 11).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_attributes_reproduce_rows() {
        let b = toy_dictionary(5, 64);
        let a = ClassAttributeMatrix::new(Matrix::identity(5), (1..=5).collect()).unwrap();
        let phi = build_class_encoder(&a, &b).unwrap();
        for (i, row) in b.rows().enumerate() {
            assert_eq!(phi.phi.row(i), row.to_f64().as_slice());
        }
    }

    #[test]
    fn two_by_three_case() {
        let b = toy_dictionary(3, 8);
        let a = ClassAttributeMatrix::new(
            Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap(),
            vec![1, 2],
        )
        .unwrap();
        let phi = build_class_encoder(&a, &b).unwrap();
        let rows: Vec<Vec<f64>> = b.rows().map(|r| r.to_f64()).collect();
        assert_eq!(phi.phi.row(0), rows[0].as_slice());
        let sum: Vec<f64> = rows[1].iter().zip(&rows[2]).map(|(p, q)| p + q).collect();
        assert_eq!(phi.phi.row(1), sum.as_slice());
    }

    #[test]
    fn zero_attribute_row_gives_zero_phi() {
        let b = toy_dictionary(4, 32);
        let a = ClassAttributeMatrix::new(
            Matrix::from_rows(&[vec![0.0; 4], vec![0.5, 0.0, 1.0, 0.0]]).unwrap(),
            vec![1, 2],
        )
        .unwrap();
        let phi = build_class_encoder(&a, &b).unwrap();
        assert!(phi.phi.row(0).iter().all(|&v| v == 0.0));
        assert!(phi.phi.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn alpha_mismatch_rejected() {
        let b = toy_dictionary(4, 32);
        let a = ClassAttributeMatrix::new(Matrix::identity(3), vec![1, 2, 3]).unwrap();
        assert!(matches!(build_class_encoder(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (c, alpha, d) in [(1, 1, 1), (4, 7, 65), (16, 32, 256), (9, 13, 100)] {
            let b = toy_dictionary(alpha, d);
            let a = ClassAttributeMatrix::new(random_matrix(c, alpha, &mut rng), (1..=c as u32).collect()).unwrap();
            let phi = build_class_encoder(&a, &b).unwrap();
            let dense: Vec<Vec<f64>> = b.rows().map(|r| r.to_f64()).collect();
            for i in 0..c {
                for j in 0..d {
                    let mut expected = 0.0;
                    for (x, row) in dense.iter().enumerate() {
                        expected += a.matrix()[(i, x)] * row[j];
                    }
                    let got = phi.phi[(i, j)];
                    assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn cossim_simple_cases() {
        let e = Matrix::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
        let k1 = SimilarityKernel::with_inv_temperature(1.0, false);
        let l = cossim_batch(&e, &e, &k1).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-15);

        let x = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![0.0, 3.0]]).unwrap();
        let khalf = SimilarityKernel::with_inv_temperature(2.0, false);
        assert_eq!(cossim_batch(&x, &y, &khalf).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn cossim_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = random_matrix(3, 4, &mut rng);
        let t = random_matrix(5, 4, &mut rng);
        let kernel = SimilarityKernel::with_inv_temperature(7.5, true);
        let got = cossim_batch(&e, &t, &kernel).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let (mut d, mut ne, mut nt) = (0.0, 0.0, 0.0);
                for k in 0..4 {
                    d += e[(i, k)] * t[(j, k)];
                    ne += e[(i, k)] * e[(i, k)];
                    nt += t[(j, k)] * t[(j, k)];
                }
                let expected = 7.5 * d / (ne.sqrt() * nt.sqrt());
                assert!((got[(i, j)] - expected).abs() <= 1e-12 * expected.abs());
                assert!(got[(i, j)].abs() <= 7.5 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_rows_are_errors() {
        let z = Matrix::zeros(1, 3);
        let t = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let k = SimilarityKernel::default();
        assert!(matches!(cossim_batch(&z, &t, &k), Err(Error::Degenerate(_))));
        assert!(matches!(cossim_batch(&t, &z, &k), Err(Error::Degenerate(_))));
        let phi = ClassEncoderMatrix {
            phi: t.clone(),
            class_ids: vec![1],
        };
        assert!(predict(&[0.0; 3], &phi, &k).is_err());
        let b = toy_dictionary(3, 16);
        assert!(matches!(attribute_similarity(&[0.0; 16], &b), Err(Error::Degenerate(_))));
    }

    #[test]
    fn predict_recovers_own_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = ClassEncoderMatrix {
            phi: random_matrix(12, 1536, &mut rng),
            class_ids: (1..=12).collect(),
        };
        let k = SimilarityKernel::default();
        let k2 = SimilarityKernel {
            log_temperature: k.log_temperature + 2f64.ln(),
            ..k
        };
        for i in 0..12 {
            let x = phi.phi.row(i);
            // exhaustive oracle
            let sims: Vec<f64> = (0..12).map(|j| cosine(x, phi.phi.row(j))).collect();
            assert_eq!(argmax(&sims), Some(i));
            assert_eq!(predict(x, &phi, &k).unwrap(), i);
            assert_eq!(predict(x, &phi, &k2).unwrap(), i);
            let scaled: Vec<f64> = x.iter().map(|v| v * 3.7).collect();
            assert_eq!(predict(&scaled, &phi, &k).unwrap(), i);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let phi = ClassEncoderMatrix {
            phi: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            class_ids: vec![1, 2, 3],
        };
        assert_eq!(predict(&[2.0, 2.0], &phi, &SimilarityKernel::default()).unwrap(), 1);
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn attribute_similarity_cases() {
        let b = toy_dictionary(6, 1536);
        let row = b.row(3).unwrap().to_f64();
        let q = attribute_similarity(&row, &b).unwrap();
        assert!((q[2] - 1.0).abs() < 1e-15);

        // flipping the sign of half of the coordinates makes x orthogonal to b_3
        let orth: Vec<f64> = row.iter().enumerate().map(|(i, v)| if i % 2 == 0 { *v } else { -v }).collect();
        assert_eq!(attribute_similarity(&orth, &b).unwrap()[2], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..1536).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = attribute_similarity(&x, &b).unwrap();
        for (i, hv) in b.rows().enumerate() {
            let dense = hv.to_f64();
            let expected = dot(&dense, &x) / (norm(&dense) * norm(&x));
            assert!((q[i] - expected).abs() <= 1e-12 * expected.abs().max(1e-3));
        }
        let _ = Hypervector::identity(1).unwrap();
    }

    #[test]
    fn parse_class_attributes() {
        let a = ClassAttributeMatrix::parse("50 0 100\n25.5 10 0\n", AttributeScale::Percent, "a.txt").unwrap();
        assert_eq!(a.class_ids(), &[1, 2]);
        assert_eq!(a.row(1).unwrap(), &[0.5, 0.0, 1.0]);
        assert_eq!(a.row(2).unwrap(), &[0.255, 0.1, 0.0]);
        let err = ClassAttributeMatrix::parse("1 2\n3\n", AttributeScale::Raw, "a.txt").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ClassAttributeMatrix::parse("1 nan\n", AttributeScale::Raw, "a.txt").is_err());
    }

    #[test]
    fn select_reads_only_requested_rows() {
        let audit = AccessAudit::new();
        let a = ClassAttributeMatrix::new(Matrix::identity(3), vec![1, 2, 3]).unwrap().with_audit(audit.clone());
        let s = a.select(&[3, 1]).unwrap();
        assert_eq!(s.class_ids(), &[3, 1]);
        assert_eq!(
            audit.events(),
            vec![Access::AttributeRow { class_id: 3 }, Access::AttributeRow { class_id: 1 }]
        );
        assert!(matches!(a.select(&[4]), Err(Error::UnknownLabel(4))));
    }
}
