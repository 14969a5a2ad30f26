use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use super::{parse_header, HEADER_LEN};
use crate::audit::{self, Access, AccessAudit};
use crate::error::{Error, FormatError, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 4] = b"HDCE";
const VERSION: u32 = 1;

/// Serializes rows as 32-bit floats. Values are narrowed, so only
/// f32-representable inputs round-trip exactly.
pub fn encode_hdce(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_hdce(bytes: &[u8], path: &str) -> Result<Matrix> {
    let (n, d_in) = parse_header(bytes, MAGIC, VERSION, path)?;
    let payload = &bytes[HEADER_LEN..];
    let row_bytes = d_in * 4;
    let mut data = Vec::with_capacity(n * d_in);
    for row in 0..n {
        let Some(chunk) = payload.get(row * row_bytes..(row + 1) * row_bytes) else {
            return Err(Error::format(path, FormatError::TruncatedPayload { row }));
        };
        data.extend(
            chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64),
        );
    }
    if payload.len() > n * row_bytes {
        return Err(Error::format(path, FormatError::TrailingBytes(payload.len() - n * row_bytes)));
    }
    Matrix::from_vec(n, d_in, data)
}

pub fn read_hdce(path: &Path) -> Result<Matrix> {
    decode_hdce(&std::fs::read(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub row: usize,
    pub sample_id: u64,
    pub class_id: u32,
}

/// Parses `row,sample_id,class_id` lines. Rows must be listed in order
/// starting at 0; `#` lines and blank lines are ignored.
pub fn parse_index(text: &str, path: &str) -> Result<Vec<IndexEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::malformed(path, lineno, format!("expected `row,sample_id,class_id`, found {line:?}")));
        }
        let bad = |what: &str, v: &str| Error::malformed(path, lineno, format!("{what} {v:?} is not a non-negative integer"));
        let row: usize = fields[0].parse().map_err(|_| bad("row", fields[0]))?;
        let sample_id: u64 = fields[1].parse().map_err(|_| bad("sample id", fields[1]))?;
        let class_id: u32 = fields[2].parse().map_err(|_| bad("class id", fields[2]))?;
        if row != out.len() {
            return Err(Error::malformed(path, lineno, format!("expected row {}, found {row}", out.len())));
        }
        out.push(IndexEntry { row, sample_id, class_id });
    }
    Ok(out)
}

pub fn format_index(entries: &[IndexEntry], header: &str) -> String {
    let mut s = String::new();
    for line in header.lines() {
        s += &format!("# {line}\n");
    }
    s += "# row,sample_id,class_id\n";
    for e in entries {
        s += &format!("{},{},{}\n", e.row, e.sample_id, e.class_id);
    }
    s
}

/// Embedding rows with their sample and class ids. Row reads go through
/// [`EmbeddingTable::gather`], which records them when an audit is attached.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    rows: Matrix,
    entries: Vec<IndexEntry>,
    by_sample: HashMap<u64, usize>,
    audit: Option<Arc<AccessAudit>>,
}

impl EmbeddingTable {
    pub fn new(rows: Matrix, entries: Vec<IndexEntry>) -> Result<Self> {
        if rows.rows() != entries.len() {
            return Err(Error::Shape(format!(
                "{} embedding rows but {} index entries",
                rows.rows(),
                entries.len()
            )));
        }
        if entries.iter().enumerate().any(|(i, e)| e.row != i) {
            return Err(Error::Shape("index entries must list rows 0..n in order".into()));
        }
        if !rows.all_finite() {
            return Err(Error::InvalidValue("embedding matrix has non-finite entries".into()));
        }
        let mut by_sample = HashMap::with_capacity(entries.len());
        for e in &entries {
            if by_sample.insert(e.sample_id, e.row).is_some() {
                return Err(Error::InvalidValue(format!("duplicate sample id {}", e.sample_id)));
            }
        }
        Ok(Self {
            rows,
            entries,
            by_sample,
            audit: None,
        })
    }

    pub fn with_audit(mut self, audit: Arc<AccessAudit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.rows.cols()
    }

    /// Index metadata; reading it does not touch embedding values.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn row_of_sample(&self, sample_id: u64) -> Option<usize> {
        self.by_sample.get(&sample_id).copied()
    }

    /// Rows for the given sample ids, or the list of ids that have none.
    pub fn rows_of_samples(&self, sample_ids: &[u64]) -> Result<Vec<usize>> {
        let missing: Vec<u64> = sample_ids
            .iter()
            .copied()
            .filter(|s| !self.by_sample.contains_key(s))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingSamples(missing));
        }
        Ok(sample_ids.iter().map(|s| self.by_sample[s]).collect())
    }

    /// Copies the requested rows into a new matrix.
    pub fn gather(&self, rows: &[usize]) -> Result<Matrix> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::Shape(format!("row {r} out of range for {} embeddings", self.len())));
        }
        for &r in rows {
            audit::record(&self.audit, || Access::EmbeddingRow {
                row: r,
                class_id: self.entries[r].class_id,
            });
        }
        Ok(self.rows.select_rows(rows))
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_hdce(&self.rows)
    }
}

/// Reads an HDCE file and its index, checking that they agree.
pub fn load_embeddings(path: &Path, index_path: &Path) -> Result<EmbeddingTable> {
    let rows = read_hdce(path)?;
    let index_name = index_path.display().to_string();
    let entries = parse_index(&std::fs::read_to_string(index_path)?, &index_name)?;
    if entries.len() != rows.rows() {
        return Err(Error::format(
            index_name,
            FormatError::IndexRowCount {
                rows: rows.rows(),
                index_rows: entries.len(),
            },
        ));
    }
    EmbeddingTable::new(rows, entries)
}

pub fn save_embeddings(path: &Path, index_path: &Path, table: &EmbeddingTable, header: &str) -> Result<()> {
    std::fs::write(path, table.encode())?;
    std::fs::write(index_path, format_index(table.entries(), header))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix::from_vec(3, 2, vec![0.5, -1.25, 3.0, 1e-3f32 as f64, 7.0, -0.0]).unwrap()
    }

    #[test]
    fn payload_roundtrip_is_bit_identical() {
        let bytes = encode_hdce(&sample());
        let back = decode_hdce(&bytes, "m").unwrap();
        assert_eq!(encode_hdce(&back), bytes);
        assert_eq!(back, sample());
    }

    #[test]
    fn empty_file_is_valid() {
        let m = decode_hdce(&encode_hdce(&Matrix::zeros(0, 8)), "m").unwrap();
        assert_eq!((m.rows(), m.cols()), (0, 8));
    }

    #[test]
    fn truncation_names_row() {
        let bytes = encode_hdce(&sample());
        match decode_hdce(&bytes[..bytes.len() - 13], "emb.hdce") {
            Err(e @ Error::Format { .. }) => assert_eq!(e.to_string(), "emb.hdce: truncated payload at row 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn index_parsing() {
        let idx = parse_index("# c\n0,10,1\n1,11,2\n\n2,12,2\n", "i").unwrap();
        assert_eq!(idx[2], IndexEntry { row: 2, sample_id: 12, class_id: 2 });
        assert!(parse_index("1,10,1\n", "i").is_err());
        assert!(parse_index("0,10\n", "i").is_err());
        let back = parse_index(&format_index(&idx, "seed=3"), "i").unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn index_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (p, i) = (dir.path().join("e.hdce"), dir.path().join("e.idx"));
        std::fs::write(&p, encode_hdce(&sample())).unwrap();
        std::fs::write(&i, "0,1,1\n1,2,1\n").unwrap();
        assert!(matches!(
            load_embeddings(&p, &i),
            Err(Error::Format {
                source: FormatError::IndexRowCount { rows: 3, index_rows: 2 },
                ..
            })
        ));
        std::fs::write(&i, "0,1,1\n1,2,1\n2,3,4\n").unwrap();
        let t = load_embeddings(&p, &i).unwrap();
        assert_eq!(t.rows_of_samples(&[3, 1]).unwrap(), vec![2, 0]);
        assert!(matches!(t.rows_of_samples(&[9, 1, 8]), Err(Error::MissingSamples(ref v)) if v == &vec![9, 8]));
    }

    #[test]
    fn gather_is_audited() {
        let entries = (0..3).map(|r| IndexEntry { row: r, sample_id: r as u64, class_id: 5 + r as u32 }).collect();
        let audit = AccessAudit::new();
        let t = EmbeddingTable::new(sample(), entries).unwrap().with_audit(audit.clone());
        let g = t.gather(&[2, 0]).unwrap();
        assert_eq!(g.row(0), sample().row(2));
        assert_eq!(
            audit.events(),
            vec![Access::EmbeddingRow { row: 2, class_id: 7 }, Access::EmbeddingRow { row: 0, class_id: 5 }]
        );
    }
}
