use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hdzsc_core::codebooks::{parse_schema, AttributeSchema, AttributeVectorMatrix};
use hdzsc_core::encoder::{AttributeScale, ClassAttributeMatrix};
use hdzsc_core::io::{load_embeddings, EmbeddingTable};
use hdzsc_core::training::{parse_split_file, DatasetSplit, SplitMode, TaskData};
use serde_json::Value;

use crate::UsageError;

pub const MANIFEST: &str = "manifest.json";
pub const SCHEMA_FILE: &str = "schema.txt";
pub const ATTRIBUTES_FILE: &str = "attributes.txt";
pub const SPLIT_FILE: &str = "split.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.hdce";
pub const INDEX_FILE: &str = "embeddings.idx";

/// Where a task's files live. `--data` points at a directory laid out by
/// `synth`; explicit paths override its members.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Task directory (as written by `synth`)
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Class attribute matrix, one whitespace-separated row per class
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Attribute values are percentages
    #[arg(long)]
    pub percent: bool,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// `class_id,split` assignments
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// zs keeps train and test classes disjoint, nozs shares them
    #[arg(long, default_value = "zs")]
    pub mode: SplitMode,
    /// Seed of the codebooks; defaults to the task manifest, then --seed
    #[arg(long)]
    pub codebook_seed: Option<u64>,
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub codebook_seed: Option<u64>,
    pub dim: Option<usize>,
}

pub struct Task {
    pub attributes: ClassAttributeMatrix,
    pub dictionary: AttributeVectorMatrix,
    pub embeddings: EmbeddingTable,
    pub split: DatasetSplit,
    pub codebook_seed: u64,
}

impl Task {
    pub fn data(&self) -> TaskData<'_> {
        TaskData {
            attributes: &self.attributes,
            dictionary: &self.dictionary,
            embeddings: &self.embeddings,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_schema(path: &Path) -> Result<AttributeSchema> {
    parse_schema(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

impl DataArgs {
    fn resolve(&self, given: &Option<PathBuf>, default: &str, flag: &str) -> Result<PathBuf> {
        match (given, &self.data) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(default)),
            (None, None) => Err(UsageError(format!("--{flag} is required unless --data is given")).into()),
        }
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let Some(dir) = &self.data else {
            return Ok(Manifest::default());
        };
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let v: Value = serde_json::from_str(&read_text(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        Ok(Manifest {
            codebook_seed: v["codebook_seed"].as_u64(),
            dim: v["dim"].as_u64().map(|d| d as usize),
        })
    }

    pub fn codebook_seed(&self, fallback: u64) -> Result<u64> {
        Ok(self.codebook_seed.or(self.manifest()?.codebook_seed).unwrap_or(fallback))
    }

    pub fn load(&self, dim: usize, fallback_seed: u64) -> Result<Task> {
        let schema = load_schema(&self.resolve(&self.schema, SCHEMA_FILE, "schema")?)?;
        let attr_path = self.resolve(&self.attributes, ATTRIBUTES_FILE, "attributes")?;
        let scale = if self.percent { AttributeScale::Percent } else { AttributeScale::Raw };
        let attributes = ClassAttributeMatrix::parse(&read_text(&attr_path)?, scale, &attr_path.display().to_string())?;
        let codebook_seed = self.codebook_seed(fallback_seed)?;
        let dictionary = AttributeVectorMatrix::generate(schema, dim, codebook_seed)?;
        let embeddings = load_embeddings(
            &self.resolve(&self.embeddings, EMBEDDINGS_FILE, "embeddings")?,
            &self.resolve(&self.index, INDEX_FILE, "index")?,
        )?;
        let split_path = self.resolve(&self.split, SPLIT_FILE, "split")?;
        let assignments = parse_split_file(&read_text(&split_path)?, &split_path.display().to_string())?;
        let split = DatasetSplit::from_assignments(self.mode, &assignments, embeddings.entries())?;
        Ok(Task {
            attributes,
            dictionary,
            embeddings,
            split,
            codebook_seed,
        })
    }
}
