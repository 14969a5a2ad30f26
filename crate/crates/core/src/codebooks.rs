//! Attribute schemas and the factored group/value codebooks.
//!
//! An attribute is a `(group, value)` pair. Instead of one atomic hypervector
//! per attribute, the dictionary stores one per group and one per value and
//! materializes attribute `x` as `bind(g[group(x)], v[value(x)])` on demand.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::hypervector::{bind, random_hypervector, Hypervector};
use crate::linalg::Matrix;
use crate::rng::HdcSeed;

pub const GROUP_STREAM: &str = "groups";
pub const VALUE_STREAM: &str = "values";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeEntry {
    /// 1-based position in the attribute dictionary.
    pub index: usize,
    pub group: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    entries: Vec<AttributeEntry>,
    groups: Vec<String>,
    values: Vec<String>,
    group_of: Vec<usize>,
    value_of: Vec<usize>,
}

impl AttributeSchema {
    /// Builds a schema from `(group, value)` pairs listed in attribute order.
    pub fn from_pairs<G, V>(pairs: impl IntoIterator<Item = (G, V)>) -> Result<Self>
    where
        G: Into<String>,
        V: Into<String>,
    {
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (g, v))| AttributeEntry {
                index: i + 1,
                group: g.into(),
                value: v.into(),
            })
            .collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<AttributeEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Schema {
                line: 0,
                message: "schema has no attributes".into(),
            });
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.group.is_empty() || e.value.is_empty() {
                return Err(Error::Schema {
                    line: e.index,
                    message: "empty group or value name".into(),
                });
            }
            if !seen.insert((e.group.as_str(), e.value.as_str())) {
                return Err(Error::Schema {
                    line: e.index,
                    message: format!("duplicate pair {}::{}", e.group, e.value),
                });
            }
        }
        let groups: Vec<String> = entries
            .iter()
            .map(|e| e.group.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let values: Vec<String> = entries
            .iter()
            .map(|e| e.value.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rank = |names: &[String], n: &str| names.binary_search_by(|x| x.as_str().cmp(n)).unwrap();
        let group_of = entries.iter().map(|e| rank(&groups, &e.group)).collect();
        let value_of = entries.iter().map(|e| rank(&values, &e.value)).collect();
        Ok(Self {
            entries,
            groups,
            values,
            group_of,
            value_of,
        })
    }

    /// Number of attributes (α).
    pub fn alpha(&self) -> usize {
        self.entries.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    pub fn entries(&self) -> &[AttributeEntry] {
        &self.entries
    }

    /// Group names in codebook order (sorted).
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    /// Value names in codebook order (sorted).
    pub fn values(&self) -> &[String] {
        &self.values
    }

    /// Codebook indices `(group, value)` of 1-based attribute `x`.
    pub fn codes(&self, x: usize) -> Result<(usize, usize)> {
        self.check_index(x)?;
        Ok((self.group_of[x - 1], self.value_of[x - 1]))
    }

    /// Zero-based attribute positions belonging to each group, in group order.
    pub fn attributes_by_group(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.groups.len()];
        for (pos, &g) in self.group_of.iter().enumerate() {
            out[g].push(pos);
        }
        out
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x == 0 || x > self.alpha() {
            Err(Error::AttributeOutOfRange {
                index: x,
                alpha: self.alpha(),
            })
        } else {
            Ok(())
        }
    }

    /// Renders the schema in the line format accepted by [`parse_schema`].
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} {}::{}\n", e.index, e.group, e.value))
            .collect()
    }
}

/// Parses `<index> <group>::<value>` lines. Blank lines and lines starting
/// with `#` are ignored; indices must cover `1..=α` exactly once.
pub fn parse_schema(text: &str) -> Result<AttributeSchema> {
    let mut by_index: BTreeMap<usize, (usize, AttributeEntry)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Schema {
            line: line_no,
            message,
        };
        let (idx, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad(format!("expected `<index> <group>::<value>`, got {line:?}")))?;
        let index: usize = idx
            .parse()
            .map_err(|_| bad(format!("attribute index {idx:?} is not a positive integer")))?;
        if index == 0 {
            return Err(bad("attribute indices start at 1".into()));
        }
        let (group, value) = rest
            .trim()
            .split_once("::")
            .ok_or_else(|| bad(format!("missing `::` separator in {rest:?}")))?;
        if group.is_empty() || value.is_empty() {
            return Err(bad("empty group or value name".into()));
        }
        let entry = AttributeEntry {
            index,
            group: group.to_string(),
            value: value.to_string(),
        };
        if let Some((first, _)) = by_index.insert(index, (line_no, entry)) {
            return Err(bad(format!("duplicate index {index} (first seen on line {first})")));
        }
    }
    let mut entries = Vec::with_capacity(by_index.len());
    let mut pairs: HashMap<(String, String), usize> = HashMap::new();
    for (expected, (index, (line, entry))) in (1..).zip(by_index) {
        if let Some(first) = pairs.insert((entry.group.clone(), entry.value.clone()), line) {
            return Err(Error::Schema {
                line: line.max(first),
                message: format!(
                    "duplicate pair {}::{} (also on line {})",
                    entry.group,
                    entry.value,
                    line.min(first)
                ),
            });
        }
        if index != expected {
            return Err(Error::Schema {
                line,
                message: format!("non-contiguous attribute indices: expected {expected}, found {index}"),
            });
        }
        entries.push(entry);
    }
    AttributeSchema::from_entries(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookKind {
    Groups,
    Values,
}

impl CodebookKind {
    pub fn stream(self) -> &'static str {
        match self {
            CodebookKind::Groups => GROUP_STREAM,
            CodebookKind::Values => VALUE_STREAM,
        }
    }
}

/// Stationary atomic hypervectors, one per group or value name; entry `i`
/// belongs to the `i`-th name in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub seed: HdcSeed,
    pub dim: usize,
    names: Vec<String>,
    vectors: Vec<Hypervector>,
}

impl Codebook {
    pub fn generate(kind: CodebookKind, names: &[String], dim: usize, seed: u64) -> Result<Self> {
        let seed = HdcSeed::new(seed, kind.stream());
        let vectors = (0..names.len() as u64)
            .map(|i| random_hypervector(&seed, i, dim))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            seed,
            dim,
            names: names.to_vec(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vectors(&self) -> &[Hypervector] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &Hypervector {
        &self.vectors[i]
    }

    pub fn lookup(&self, name: &str) -> Option<&Hypervector> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| &self.vectors[i])
    }
}

/// Generates the group and value codebooks for `schema`.
pub fn build_codebooks(schema: &AttributeSchema, dim: usize, seed: u64) -> Result<(Codebook, Codebook)> {
    Ok((
        Codebook::generate(CodebookKind::Groups, schema.groups(), dim, seed)?,
        Codebook::generate(CodebookKind::Values, schema.values(), dim, seed)?,
    ))
}

/// `b_x = g_group(x) ⊙ v_value(x)` for 1-based attribute `x`.
pub fn attribute_vector(
    schema: &AttributeSchema,
    groups: &Codebook,
    values: &Codebook,
    x: usize,
) -> Result<Hypervector> {
    let (g, v) = schema.codes(x)?;
    bind(groups.get(g), values.get(v))
}

/// The attribute dictionary `B` (α × d, bipolar). Only the atomic codebooks
/// are held; rows are bound on request.
#[derive(Debug, Clone)]
pub struct AttributeVectorMatrix {
    schema: AttributeSchema,
    groups: Codebook,
    values: Codebook,
}

impl AttributeVectorMatrix {
    pub fn new(schema: AttributeSchema, groups: Codebook, values: Codebook) -> Result<Self> {
        if groups.len() != schema.num_groups() || values.len() != schema.num_values() {
            return Err(Error::Shape(format!(
                "codebooks have {}+{} entries, schema needs {}+{}",
                groups.len(),
                values.len(),
                schema.num_groups(),
                schema.num_values()
            )));
        }
        if groups.dim != values.dim {
            return Err(Error::DimensionMismatch {
                left: groups.dim,
                right: values.dim,
            });
        }
        Ok(Self {
            schema,
            groups,
            values,
        })
    }

    pub fn generate(schema: AttributeSchema, dim: usize, seed: u64) -> Result<Self> {
        let (g, v) = build_codebooks(&schema, dim, seed)?;
        Self::new(schema, g, v)
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn groups(&self) -> &Codebook {
        &self.groups
    }

    pub fn values(&self) -> &Codebook {
        &self.values
    }

    pub fn alpha(&self) -> usize {
        self.schema.alpha()
    }

    pub fn dim(&self) -> usize {
        self.groups.dim
    }

    /// Row `x` (1-based).
    pub fn row(&self, x: usize) -> Result<Hypervector> {
        attribute_vector(&self.schema, &self.groups, &self.values, x)
    }

    pub fn rows(&self) -> impl Iterator<Item = Hypervector> + '_ {
        (1..=self.alpha()).map(|x| self.row(x).expect("index in range"))
    }

    /// All α rows as packed hypervectors.
    pub fn dense(&self) -> Vec<Hypervector> {
        self.rows().collect()
    }

    /// All α rows as a ±1 real matrix.
    pub fn dense_f64(&self) -> Matrix {
        let mut m = Matrix::zeros(self.alpha(), self.dim());
        for (i, row) in self.rows().enumerate() {
            row.axpy_into(1.0, m.row_mut(i));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryReport {
    pub alpha: usize,
    pub groups: usize,
    pub values: usize,
    pub dim: usize,
    /// Bytes for the G + V atomic vectors at one bit per coordinate.
    pub factored_bytes: u64,
    /// Bytes for α unfactored attribute vectors.
    pub unfactored_bytes: u64,
    /// `1 - (G + V) / α`.
    pub reduction_fraction: f64,
}

impl MemoryReport {
    pub fn reduction_percent(&self) -> u64 {
        (self.reduction_fraction * 100.0).round() as u64
    }
}

impl fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "factored={} bytes, reduction={}%",
            self.factored_bytes,
            self.reduction_percent()
        )
    }
}

pub fn memory_report(schema: &AttributeSchema, dim: usize) -> MemoryReport {
    memory_report_counts(schema.alpha(), schema.num_groups(), schema.num_values(), dim)
}

pub fn memory_report_counts(alpha: usize, groups: usize, values: usize, dim: usize) -> MemoryReport {
    let bytes = |count: usize| (count as u64 * dim as u64).div_ceil(8);
    MemoryReport {
        alpha,
        groups,
        values,
        dim,
        factored_bytes: bytes(groups + values),
        unfactored_bytes: bytes(alpha),
        reduction_fraction: 1.0 - (groups + values) as f64 / alpha as f64,
    }
}
