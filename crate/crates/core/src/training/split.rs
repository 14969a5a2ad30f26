use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::IndexEntry;
use crate::rng::HdcSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Train and test classes are disjoint.
    #[default]
    Zs,
    /// Classes may appear on both sides; their samples are then divided.
    NoZs,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zs" => Ok(Self::Zs),
            "nozs" => Ok(Self::NoZs),
            other => Err(Error::InvalidValue(format!("unknown split mode `{other}` (expected zs or nozs)"))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zs => "zs",
            Self::NoZs => "nozs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Train,
    Test,
    Val,
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            "val" => Ok(Self::Val),
            other => Err(Error::InvalidValue(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Test => "test",
            Self::Val => "val",
        })
    }
}

/// Parses `class_id,split` lines; `#` lines and blanks are skipped.
pub fn parse_split_file(text: &str, path: &str) -> Result<Vec<(u32, Role)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((class, role)) = line.split_once(',') else {
            return Err(Error::malformed(path, i + 1, format!("expected `class_id,split`, found {line:?}")));
        };
        let class: u32 = class
            .trim()
            .parse()
            .map_err(|_| Error::malformed(path, i + 1, format!("class id {:?} is not an integer", class.trim())))?;
        let role: Role = role
            .trim()
            .parse()
            .map_err(|_| Error::malformed(path, i + 1, format!("split {:?} is not train, test or val", role.trim())))?;
        out.push((class, role));
    }
    Ok(out)
}

pub fn format_split_file(assignments: &[(u32, Role)], header: &str) -> String {
    let mut s: String = header.lines().map(|l| format!("# {l}\n")).collect();
    s += "# class_id,split\n";
    for (c, r) in assignments {
        s += &format!("{c},{r}\n");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub row: usize,
    pub sample_id: u64,
    pub class_id: u32,
}

/// One side of a split: its classes and the samples that belong to it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSide {
    pub classes: Vec<u32>,
    /// In embedding row order.
    pub samples: Vec<SampleRef>,
}

impl SplitSide {
    pub fn rows(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.row).collect()
    }

    pub fn sample_ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.sample_id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub mode: SplitMode,
    pub train: SplitSide,
    pub test: SplitSide,
    pub val: SplitSide,
}

impl DatasetSplit {
    /// Assigns embedding rows to sides. Only index metadata is read.
    ///
    /// In ZS mode each class has exactly one role. In noZS mode a class may
    /// be both `train` and `test`; its samples then alternate between the two
    /// sides in row order, starting with train.
    pub fn from_assignments(mode: SplitMode, assignments: &[(u32, Role)], index: &[IndexEntry]) -> Result<Self> {
        let mut roles: BTreeMap<u32, BTreeSet<Role>> = BTreeMap::new();
        for &(c, r) in assignments {
            if !roles.entry(c).or_default().insert(r) {
                return Err(Error::Split(format!("class {c} is listed twice as {r}")));
            }
        }
        for (c, rs) in &roles {
            let allowed = match mode {
                SplitMode::Zs => rs.len() == 1,
                SplitMode::NoZs => rs.len() == 1 || (rs.len() == 2 && !rs.contains(&Role::Val)),
            };
            if !allowed {
                let list: Vec<String> = rs.iter().map(Role::to_string).collect();
                return Err(Error::Split(format!("class {c} is assigned to {} in {mode} mode", list.join(" and "))));
            }
        }
        let mut split = Self {
            mode,
            train: SplitSide::default(),
            test: SplitSide::default(),
            val: SplitSide::default(),
        };
        let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
        for e in index {
            let Some(rs) = roles.get(&e.class_id) else { continue };
            let n = seen.entry(e.class_id).or_default();
            let role = if rs.len() == 2 {
                if n.is_multiple_of(2) { Role::Train } else { Role::Test }
            } else {
                *rs.iter().next().expect("one role")
            };
            *n += 1;
            split.side_mut(role).samples.push(SampleRef {
                row: e.row,
                sample_id: e.sample_id,
                class_id: e.class_id,
            });
        }
        for (&c, rs) in &roles {
            if seen.get(&c).copied().unwrap_or(0) < rs.len() {
                return Err(Error::Split(format!("class {c} has too few samples for its split")));
            }
            for &r in rs {
                split.side_mut(r).classes.push(c);
            }
        }
        split.check()?;
        Ok(split)
    }

    fn side_mut(&mut self, role: Role) -> &mut SplitSide {
        match role {
            Role::Train => &mut self.train,
            Role::Test => &mut self.test,
            Role::Val => &mut self.val,
        }
    }

    pub fn side(&self, role: Role) -> &SplitSide {
        match role {
            Role::Train => &self.train,
            Role::Test => &self.test,
            Role::Val => &self.val,
        }
    }

    /// In ZS mode, no class may sit on two sides.
    pub fn check(&self) -> Result<()> {
        if self.mode == SplitMode::Zs {
            let train: BTreeSet<u32> = self.train.classes.iter().copied().collect();
            for side in [&self.test, &self.val] {
                if let Some(c) = side.classes.iter().find(|c| train.contains(c)) {
                    return Err(Error::Split(format!("class {c} is both seen and unseen")));
                }
            }
        }
        Ok(())
    }

    /// Moves `n` seeded-random training classes to a fresh validation side
    /// and drops the test side, so that model selection never sees test data.
    pub fn carve_validation(&self, n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n >= self.train.classes.len() {
            return Err(Error::Split(format!(
                "cannot carve {n} validation classes from {} training classes",
                self.train.classes.len()
            )));
        }
        if self.mode == SplitMode::NoZs && self.test.classes.iter().any(|c| self.train.classes.contains(c)) {
            return Err(Error::Split("validation carving needs disjoint classes".into()));
        }
        let mut classes = self.train.classes.clone();
        classes.shuffle(&mut HdcSeed::new(seed, "validation").rng(0));
        let val: BTreeSet<u32> = classes[..n].iter().copied().collect();
        let (val_samples, train_samples) = self.train.samples.iter().copied().partition(|s| val.contains(&s.class_id));
        Ok(Self {
            mode: SplitMode::Zs,
            train: SplitSide {
                classes: self.train.classes.iter().copied().filter(|c| !val.contains(c)).collect(),
                samples: train_samples,
            },
            test: SplitSide::default(),
            val: SplitSide {
                classes: val.into_iter().collect(),
                samples: val_samples,
            },
        })
    }

    /// The validation side promoted to the evaluation side.
    pub fn validation_as_test(&self) -> Self {
        Self {
            mode: self.mode,
            train: self.train.clone(),
            test: self.val.clone(),
            val: SplitSide::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(per_class: usize, classes: u32) -> Vec<IndexEntry> {
        let mut out = Vec::new();
        for c in 1..=classes {
            for _ in 0..per_class {
                let row = out.len();
                out.push(IndexEntry { row, sample_id: 100 + row as u64, class_id: c });
            }
        }
        out
    }

    #[test]
    fn zs_split_is_disjoint() {
        let a = parse_split_file("# s\n1,train\n2,train\n3,test\n", "s").unwrap();
        let s = DatasetSplit::from_assignments(SplitMode::Zs, &a, &index(2, 4)).unwrap();
        assert_eq!(s.train.classes, vec![1, 2]);
        assert_eq!(s.test.rows(), vec![4, 5]);
        let both = [(1, Role::Train), (1, Role::Test)];
        assert!(matches!(
            DatasetSplit::from_assignments(SplitMode::Zs, &both, &index(2, 2)),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn nozs_alternates_samples() {
        let both = [(1, Role::Train), (1, Role::Test), (2, Role::Train)];
        let s = DatasetSplit::from_assignments(SplitMode::NoZs, &both, &index(3, 2)).unwrap();
        assert_eq!(s.train.rows(), vec![0, 2, 3, 4, 5]);
        assert_eq!(s.test.rows(), vec![1]);
        assert_eq!(s.test.classes, vec![1]);
    }

    #[test]
    fn parse_errors_name_line() {
        let e = parse_split_file("1,train\n2,holdout\n", "split.txt").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(parse_split_file("x,train\n", "s").is_err());
        let text = format_split_file(&[(3, Role::Val)], "seed=1");
        assert_eq!(parse_split_file(&text, "s").unwrap(), vec![(3, Role::Val)]);
    }

    #[test]
    fn missing_class_samples() {
        let a = [(1, Role::Train), (9, Role::Test)];
        assert!(DatasetSplit::from_assignments(SplitMode::Zs, &a, &index(1, 2)).is_err());
    }

    #[test]
    fn carving_is_seeded_and_disjoint() {
        let a: Vec<(u32, Role)> = (1..=10).map(|c| (c, if c <= 8 { Role::Train } else { Role::Test })).collect();
        let s = DatasetSplit::from_assignments(SplitMode::Zs, &a, &index(2, 10)).unwrap();
        let v = s.carve_validation(3, 4).unwrap();
        assert_eq!(v, s.carve_validation(3, 4).unwrap());
        assert_eq!(v.val.classes.len(), 3);
        assert!(v.test.classes.is_empty());
        v.check().unwrap();
        assert!(v.val.classes.iter().all(|c| *c <= 8));
        assert_eq!(v.train.samples.len() + v.val.samples.len(), 16);
        assert!(s.carve_validation(8, 1).is_err());
    }
}
