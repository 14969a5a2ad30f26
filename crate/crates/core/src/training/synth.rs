//! Seeded synthetic zero-shot tasks whose ground truth is known by
//! construction.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codebooks::{AttributeSchema, AttributeVectorMatrix};
use crate::encoder::{build_class_encoder, normalize_rows, ClassAttributeMatrix};
use crate::error::{Error, Result};
use crate::io::{EmbeddingTable, IndexEntry};
use crate::linalg::Matrix;
use crate::rng::HdcSeed;
use crate::training::{DatasetSplit, Role, SplitMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub classes: usize,
    pub train_classes: usize,
    pub alpha: usize,
    pub groups: usize,
    pub values: usize,
    pub d_in: usize,
    pub dim: usize,
    pub noise: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            classes: 40,
            train_classes: 30,
            alpha: 24,
            groups: 8,
            values: 10,
            d_in: 256,
            dim: 512,
            noise: 0.1,
            samples_per_class: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub params: SyntheticParams,
    pub schema: AttributeSchema,
    pub attributes: ClassAttributeMatrix,
    pub assignments: Vec<(u32, Role)>,
    pub embeddings: EmbeddingTable,
    /// Hidden map from the hypervector space into embedding space (d_in × d).
    pub mixing: Matrix,
    /// Dictionary built from `schema` with the task seed.
    pub dictionary: AttributeVectorMatrix,
}

impl SyntheticTask {
    pub fn split(&self) -> Result<DatasetSplit> {
        DatasetSplit::from_assignments(SplitMode::Zs, &self.assignments, self.embeddings.entries())
    }
}

fn name(prefix: char, i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("{prefix}{i:0width$}")
}

/// Attributes go round-robin over the groups; each group takes a run of
/// distinct values from a seeded permutation, so every group and value is
/// used.
fn synthetic_schema(p: &SyntheticParams) -> Result<AttributeSchema> {
    let (g, v, a) = (p.groups, p.values, p.alpha);
    if g == 0 || v == 0 || a < g.max(v) || a > g * v {
        return Err(Error::InvalidValue(format!(
            "infeasible schema: need max(G, V) <= alpha <= G*V, got G={g}, V={v}, alpha={a}"
        )));
    }
    let mut perm: Vec<usize> = (0..v).collect();
    perm.shuffle(&mut HdcSeed::new(p.seed, "synth-schema").rng(0));
    let counts: Vec<usize> = (0..g).map(|gi| a / g + usize::from(gi < a % g)).collect();
    let starts: Vec<usize> = counts.iter().scan(0, |acc, &c| {
        let s = *acc;
        *acc += c;
        Some(s)
    }).collect();
    let mut seen = vec![0usize; g];
    let pairs = (0..a).map(|x| {
        let gi = x % g;
        let j = seen[gi];
        seen[gi] += 1;
        (name('g', gi, g), name('v', perm[(starts[gi] + j) % v], v))
    });
    AttributeSchema::from_pairs(pairs.collect::<Vec<_>>())
}

/// One active attribute per group; classes differ in at least
/// `min(3, variable groups)` groups.
fn synthetic_classes(p: &SyntheticParams, schema: &AttributeSchema) -> Result<Vec<Vec<usize>>> {
    let groups = schema.attributes_by_group();
    let variable = groups.iter().filter(|m| m.len() > 1).count();
    let min_diff = variable.min(3);
    if p.classes > 1 && min_diff == 0 {
        return Err(Error::InvalidValue("every group has a single attribute; classes cannot differ".into()));
    }
    let mut rng = HdcSeed::new(p.seed, "synth-classes").rng(0);
    let mut classes: Vec<Vec<usize>> = Vec::with_capacity(p.classes);
    for c in 0..p.classes {
        let mut tries = 0;
        loop {
            let pick: Vec<usize> = groups.iter().map(|m| m[rng.random_range(0..m.len())]).collect();
            let ok = classes
                .iter()
                .all(|o| o.iter().zip(&pick).filter(|(a, b)| a != b).count() >= min_diff);
            if ok {
                classes.push(pick);
                break;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::InvalidValue(format!(
                    "cannot draw {} classes differing in {min_diff} groups (stuck at class {})",
                    p.classes,
                    c + 1
                )));
            }
        }
    }
    Ok(classes)
}

pub fn generate_synthetic(p: &SyntheticParams) -> Result<SyntheticTask> {
    if p.samples_per_class == 0 {
        return Err(Error::InvalidValue("samples per class must be positive".into()));
    }
    if p.train_classes == 0 || p.train_classes >= p.classes {
        return Err(Error::InvalidValue(format!(
            "need 0 < train classes < classes, got {} of {}",
            p.train_classes, p.classes
        )));
    }
    if p.d_in == 0 || p.dim == 0 {
        return Err(Error::InvalidValue("dimensions must be positive".into()));
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(Error::InvalidValue(format!("noise {} must be non-negative", p.noise)));
    }
    let schema = synthetic_schema(p)?;
    let class_attrs = synthetic_classes(p, &schema)?;
    let mut a = Matrix::zeros(p.classes, p.alpha);
    for (c, attrs) in class_attrs.iter().enumerate() {
        for &x in attrs {
            a[(c, x)] = 1.0;
        }
    }
    let class_ids: Vec<u32> = (1..=p.classes as u32).collect();
    let attributes = ClassAttributeMatrix::new(a, class_ids.clone())?;
    let dictionary = AttributeVectorMatrix::generate(schema.clone(), p.dim, p.seed)?;
    let phi = build_class_encoder(&attributes, &dictionary)?;
    let (phi_hat, _) = normalize_rows(&phi.phi, "class encoding")?;

    let mut mrng = HdcSeed::new(p.seed, "synth-mixing").rng(0);
    let mixing = Matrix::from_vec(
        p.d_in,
        p.dim,
        (0..p.d_in * p.dim).map(|_| StandardNormal.sample(&mut mrng)).collect(),
    )?;
    let clean = phi_hat.matmul_t(&mixing)?;

    let noise = Normal::new(0.0, p.noise).map_err(|e| Error::InvalidValue(e.to_string()))?;
    let mut nrng = HdcSeed::new(p.seed, "synth-noise").rng(0);
    let n = p.classes * p.samples_per_class;
    let mut rows = Matrix::zeros(n, p.d_in);
    let mut entries = Vec::with_capacity(n);
    for (c, &class_id) in class_ids.iter().enumerate() {
        for _ in 0..p.samples_per_class {
            let row = entries.len();
            for (o, &v) in rows.row_mut(row).iter_mut().zip(clean.row(c)) {
                // stored as f32 on disk, so keep the in-memory copy identical
                *o = (v + noise.sample(&mut nrng)) as f32 as f64;
            }
            entries.push(IndexEntry {
                row,
                sample_id: row as u64 + 1,
                class_id,
            });
        }
    }
    let embeddings = EmbeddingTable::new(rows, entries)?;

    let mut order = class_ids.clone();
    order.shuffle(&mut HdcSeed::new(p.seed, "synth-split").rng(0));
    let train: BTreeSet<u32> = order[..p.train_classes].iter().copied().collect();
    let assignments = class_ids
        .iter()
        .map(|&c| (c, if train.contains(&c) { Role::Train } else { Role::Test }))
        .collect();
    Ok(SyntheticTask {
        params: p.clone(),
        schema,
        attributes,
        assignments,
        embeddings,
        mixing,
        dictionary,
    })
}
