//! Top-k accuracy, per-group attribute accuracy and weighted mean average
//! precision.

use std::fmt;
use std::str::FromStr;

use crate::codebooks::AttributeSchema;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Indices of the `k` largest entries; ties go to the lower index.
pub fn top_k_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Percentage of rows whose label is among the `k` largest logits.
pub fn topk_accuracy(logits: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!("{} logit rows but {} labels", logits.rows(), labels.len())));
    }
    if k == 0 || k > logits.cols() {
        return Err(Error::Metric(format!("k = {k} outside 1..={}", logits.cols())));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &label)| {
            // count entries that beat the label under the tie rule
            let v = row[label];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|&(j, &u)| u > v || (u == v && j < label))
                .count();
            ahead < k
        })
        .count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy {
    pub group: String,
    /// `None` when no sample had an active value in this group.
    pub accuracy: Option<f64>,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracyReport {
    pub groups: Vec<GroupAccuracy>,
    /// Unweighted mean over the groups that were evaluated.
    pub average: f64,
}

impl GroupAccuracyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,top1_percent,samples\n");
        for g in &self.groups {
            let acc = g.accuracy.map_or(String::new(), |a| format!("{a:.4}"));
            s += &format!("{},{},{}\n", g.group, acc, g.evaluated);
        }
        s += &format!("average,{:.4},\n", self.average);
        s
    }
}

/// Per-group top-1: within each group, the highest-scoring value (lowest
/// index on ties) must be an active ground-truth value. The ground truth's
/// active value is its largest positive entry in the group; samples with no
/// positive entry in a group are skipped for that group.
pub fn group_top1(scores: &Matrix, truth: &Matrix, schema: &AttributeSchema) -> Result<GroupAccuracyReport> {
    if scores.rows() != truth.rows() || scores.cols() != truth.cols() {
        return Err(Error::Shape("scores and ground truth differ in shape".into()));
    }
    if scores.cols() != schema.alpha() {
        return Err(Error::Shape(format!("{} score columns for {} attributes", scores.cols(), schema.alpha())));
    }
    let members = schema.attributes_by_group();
    let mut groups = Vec::with_capacity(members.len());
    for (g, attrs) in members.iter().enumerate() {
        if attrs.is_empty() {
            return Err(Error::Schema {
                line: 0,
                message: format!("group `{}` has no attributes", schema.groups()[g]),
            });
        }
        let (mut hits, mut evaluated) = (0usize, 0usize);
        for i in 0..scores.rows() {
            let t = truth.row(i);
            let best_truth = attrs.iter().copied().max_by(|&a, &b| t[a].total_cmp(&t[b]).then(b.cmp(&a)));
            let Some(active) = best_truth.filter(|&a| t[a] > 0.0) else {
                continue;
            };
            let s = scores.row(i);
            let pred = attrs
                .iter()
                .copied()
                .max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a)))
                .expect("non-empty group");
            evaluated += 1;
            if pred == active || t[pred] == t[active] {
                hits += 1;
            }
        }
        groups.push(GroupAccuracy {
            group: schema.groups()[g].clone(),
            accuracy: (evaluated > 0).then(|| 100.0 * hits as f64 / evaluated as f64),
            evaluated,
        });
    }
    let scored: Vec<f64> = groups.iter().filter_map(|g| g.accuracy).collect();
    let average = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    Ok(GroupAccuracyReport { groups, average })
}

/// Average precision of one ranking: precision at each positive hit,
/// averaged over positives. Ranking is by descending score, ties by lower
/// sample index. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let order = top_k_indices(scores, scores.len());
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half. `None` unless both
/// classes are present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // average ranks over tied runs
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// How attributes are weighted when averaging their APs.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum WmapWeights {
    /// `1 / n_pos`, favouring rare attributes.
    #[default]
    InvFreq,
    /// `n_pos`
    Freq,
    Uniform,
    Custom(Vec<f64>),
}

impl FromStr for WmapWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv_freq" => Ok(Self::InvFreq),
            "freq" => Ok(Self::Freq),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidValue(format!(
                "unknown weighting `{other}` (expected inv_freq, freq or uniform)"
            ))),
        }
    }
}

impl fmt::Display for WmapWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvFreq => f.write_str("inv_freq"),
            Self::Freq => f.write_str("freq"),
            Self::Uniform => f.write_str("uniform"),
            Self::Custom(_) => f.write_str("custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmapReport {
    pub wmap: f64,
    /// AP per attribute; `None` for attributes without positives.
    pub per_attribute: Vec<Option<f64>>,
    pub weights: Vec<f64>,
}

impl WmapReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("attribute,ap,weight\n");
        for (x, (ap, w)) in self.per_attribute.iter().zip(&self.weights).enumerate() {
            let ap = ap.map_or(String::new(), |a| format!("{a:.6}"));
            s += &format!("{},{},{:.6}\n", x + 1, ap, w);
        }
        s += &format!("wmap,{:.6},\n", self.wmap);
        s
    }
}

/// Weighted mean of per-attribute AP. `scores` and `labels` are samples ×
/// attributes; attributes with no positive sample are left out.
pub fn wmap(scores: &Matrix, labels: &[Vec<bool>], weights: &WmapWeights) -> Result<WmapReport> {
    if scores.rows() != labels.len() || labels.iter().any(|l| l.len() != scores.cols()) {
        return Err(Error::Shape("scores and labels differ in shape".into()));
    }
    if !scores.all_finite() {
        return Err(Error::Metric("scores contain non-finite values".into()));
    }
    let alpha = scores.cols();
    if let WmapWeights::Custom(w) = weights {
        if w.len() != alpha {
            return Err(Error::Shape(format!("{} custom weights for {alpha} attributes", w.len())));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Metric("custom weights must be finite and non-negative".into()));
        }
    }
    let mut per_attribute = Vec::with_capacity(alpha);
    let mut used = Vec::with_capacity(alpha);
    let (mut num, mut den) = (0.0, 0.0);
    for x in 0..alpha {
        let col: Vec<f64> = (0..scores.rows()).map(|i| scores[(i, x)]).collect();
        let lab: Vec<bool> = labels.iter().map(|l| l[x]).collect();
        let n_pos = lab.iter().filter(|&&l| l).count();
        let ap = average_precision(&col, &lab);
        let w = match (ap, weights) {
            (None, _) => 0.0,
            (Some(_), WmapWeights::InvFreq) => 1.0 / n_pos.max(1) as f64,
            (Some(_), WmapWeights::Freq) => n_pos as f64,
            (Some(_), WmapWeights::Uniform) => 1.0,
            (Some(_), WmapWeights::Custom(w)) => w[x],
        };
        if let Some(a) = ap {
            num += w * a;
            den += w;
        }
        per_attribute.push(ap);
        used.push(w);
    }
    if per_attribute.iter().all(Option::is_none) {
        return Err(Error::Metric("no attribute has a positive label".into()));
    }
    if den <= 0.0 {
        return Err(Error::Metric("weights of attributes with positives sum to zero".into()));
    }
    let total = den;
    used.iter_mut().for_each(|w| *w /= total);
    Ok(WmapReport {
        wmap: num / den,
        per_attribute,
        weights: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn topk_examples() {
        let logits = m(&[vec![0.1, 0.9, 0.0], vec![0.8, 0.1, 0.1], vec![0.2, 0.3, 0.5]]);
        assert_eq!(topk_accuracy(&logits, &[1, 0, 2], 1).unwrap(), 100.0);
        let acc = topk_accuracy(&logits, &[1, 1, 0], 1).unwrap();
        assert!((acc - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(topk_accuracy(&logits, &[2, 2, 0], 3).unwrap(), 100.0);
        assert!(topk_accuracy(&logits, &[0, 0, 0], 4).is_err());
    }

    #[test]
    fn topk_ties_favour_lower_index() {
        let logits = m(&[vec![1.0, 1.0, 1.0]]);
        assert_eq!(topk_accuracy(&logits, &[0], 1).unwrap(), 100.0);
        assert_eq!(topk_accuracy(&logits, &[1], 1).unwrap(), 0.0);
        assert_eq!(top_k_indices(&[1.0, 2.0, 2.0, 0.0], 2), vec![1, 2]);
    }

    fn schema() -> AttributeSchema {
        AttributeSchema::from_pairs([("color", "red"), ("color", "blue"), ("shape", "round"), ("shape", "flat")]).unwrap()
    }

    #[test]
    fn group_top1_examples() {
        let truth = m(&[vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]);
        let r = group_top1(&truth, &truth, &schema()).unwrap();
        assert!(r.groups.iter().all(|g| g.accuracy == Some(100.0)));
        let mut neg = truth.clone();
        neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let r = group_top1(&neg, &truth, &schema()).unwrap();
        assert!(r.groups.iter().all(|g| g.accuracy == Some(0.0)));
        assert_eq!(r.average, 0.0);
        // third sample has no active colour
        assert_eq!(r.groups[0].evaluated, 2);
        assert_eq!(r.groups[1].evaluated, 3);
    }

    #[test]
    fn ap_hand_case() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[false, false]), None);
    }

    #[test]
    fn wmap_examples() {
        let scores = m(&[vec![0.9, 0.1], vec![0.1, 0.8], vec![0.5, 0.2]]);
        let labels = vec![vec![true, false], vec![false, true], vec![true, false]];
        assert_eq!(wmap(&scores, &labels, &WmapWeights::InvFreq).unwrap().wmap, 1.0);
        let none = vec![vec![false, false]; 3];
        assert!(matches!(wmap(&scores, &none, &WmapWeights::Uniform), Err(Error::Metric(_))));
        assert_eq!("freq".parse::<WmapWeights>().unwrap(), WmapWeights::Freq);
        assert!("bogus".parse::<WmapWeights>().is_err());
    }

    #[test]
    fn equal_aps_give_that_ap_for_any_weights() {
        let scores = m(&[vec![0.9, 0.9], vec![0.8, 0.8], vec![0.7, 0.7]]);
        let labels = vec![vec![true, true], vec![false, false], vec![true, true]];
        for w in [WmapWeights::InvFreq, WmapWeights::Freq, WmapWeights::Custom(vec![0.1, 7.0])] {
            assert!((wmap(&scores, &labels, &w).unwrap().wmap - 5.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_group_scores_are_at_chance() {
        use rand::{Rng, SeedableRng};
        let schema = AttributeSchema::from_pairs((0..4).map(|v| ("g", format!("v{v}")))).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 4000;
        let scores = Matrix::from_vec(n, 4, (0..n * 4).map(|_| rng.random::<f64>()).collect()).unwrap();
        let mut truth = Matrix::zeros(n, 4);
        for i in 0..n {
            truth[(i, rng.random_range(0..4))] = 1.0;
        }
        let acc = group_top1(&scores, &truth, &schema).unwrap().average / 100.0;
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((acc - 0.25).abs() < 3.0 * sd, "{acc}");
    }

    #[test]
    fn auc_matches_pair_count() {
        let scores = [0.3, 0.9, 0.3, 0.1, 0.5];
        let labels = [true, true, false, false, false];
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..5 {
            for j in 0..5 {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-15);
        assert_eq!(roc_auc(&[1.0], &[true]), None);
    }

    /// Enumerates every prefix of the ranking and averages the precision of
    /// the prefixes that end on a positive.
    fn brute_force_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let n = scores.len();
        let mut ranked: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..n - 1 - i {
                let (a, b) = (ranked[j], ranked[j + 1]);
                if scores[b] > scores[a] || (scores[b] == scores[a] && b < a) {
                    ranked.swap(j, j + 1);
                }
            }
        }
        let mut precisions = Vec::new();
        for len in 1..=n {
            let prefix = &ranked[..len];
            if labels[prefix[len - 1]] {
                let tp = prefix.iter().filter(|&&i| labels[i]).count();
                precisions.push(tp as f64 / len as f64);
            }
        }
        (!precisions.is_empty()).then(|| precisions.iter().sum::<f64>() / precisions.len() as f64)
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(data in prop::collection::vec((0u8..5, any::<bool>()), 1..=10)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(average_precision(&scores, &labels), brute_force_ap(&scores, &labels));
        }

        #[test]
        fn topk_is_monotone(raw in prop::collection::vec(0u8..4, 12), labels in prop::collection::vec(0usize..4, 3)) {
            let logits = Matrix::from_vec(3, 4, raw.iter().map(|&v| v as f64).collect()).unwrap();
            for k in 1..4 {
                prop_assert!(topk_accuracy(&logits, &labels, k + 1).unwrap() >= topk_accuracy(&logits, &labels, k).unwrap());
            }
        }

        #[test]
        fn wmap_weight_scale_invariant(raw in prop::collection::vec(-1.0f64..1.0, 18), lab in prop::collection::vec(any::<bool>(), 18), c in 0.01f64..100.0) {
            prop_assume!(lab.iter().any(|&l| l));
            let scores = Matrix::from_vec(6, 3, raw).unwrap();
            let labels: Vec<Vec<bool>> = lab.chunks(3).map(<[bool]>::to_vec).collect();
            let w = vec![0.3, 1.0, 2.5];
            let a = wmap(&scores, &labels, &WmapWeights::Custom(w.clone())).unwrap().wmap;
            let b = wmap(&scores, &labels, &WmapWeights::Custom(w.iter().map(|v| v * c).collect())).unwrap().wmap;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
