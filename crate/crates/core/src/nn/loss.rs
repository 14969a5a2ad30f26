//! Losses with analytic gradients.

use crate::error::{Error, Result};

/// Default multiplier applied to cosine similarities before the sigmoid.
pub const DEFAULT_LOGIT_SCALE: f64 = 5.0;

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted binary cross-entropy on scaled similarities `z = scale * q`:
///
/// ```text
/// loss = mean_x [ -w_x t_x log σ(z_x) - (1 - t_x) log(1 - σ(z_x)) ]
/// ```
///
/// Attributes whose positive weight is zero are left out of the mean
/// entirely. Returns the loss and `∂loss/∂q`.
pub fn weighted_bce_loss(q: &[f64], targets: &[f64], pos_weights: &[f64], scale: f64) -> Result<(f64, Vec<f64>)> {
    if q.len() != targets.len() || q.len() != pos_weights.len() {
        return Err(Error::Shape(format!(
            "bce inputs have lengths {}, {}, {}",
            q.len(),
            targets.len(),
            pos_weights.len()
        )));
    }
    if let Some((x, t)) = targets.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidValue(format!("target {t} for attribute {x} is outside [0, 1]")));
    }
    let included = pos_weights.iter().filter(|&&w| w != 0.0).count();
    let mut grad = vec![0.0; q.len()];
    if included == 0 {
        return Ok((0.0, grad));
    }
    let n = included as f64;
    let mut loss = 0.0;
    for x in 0..q.len() {
        let (w, t) = (pos_weights[x], targets[x]);
        if w == 0.0 {
            continue;
        }
        let z = scale * q[x];
        loss += w * t * softplus(-z) + (1.0 - t) * softplus(z);
        grad[x] = scale * (-w * t * sigmoid(-z) + (1.0 - t) * sigmoid(z)) / n;
    }
    Ok((loss / n, grad))
}

/// Per-attribute positive weights `Σ(1 - t) / Σ t` over the given target
/// rows; attributes without any positive mass get weight 0.
pub fn positive_weights<'a>(rows: impl IntoIterator<Item = &'a [f64]>, alpha: usize) -> Vec<f64> {
    let mut pos = vec![0.0; alpha];
    let mut neg = vec![0.0; alpha];
    for row in rows {
        for (x, &t) in row.iter().enumerate() {
            pos[x] += t;
            neg[x] += 1.0 - t;
        }
    }
    pos.iter()
        .zip(&neg)
        .map(|(&p, &n)| if p > 0.0 { n / p } else { 0.0 })
        .collect()
}

pub fn softmax(p: &[f64]) -> Vec<f64> {
    let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = p.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax cross-entropy of one logit row. Returns the loss and
/// `softmax(p) - onehot(label)`.
pub fn cross_entropy_loss(p: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= p.len() {
        return Err(Error::InvalidValue(format!("label {label} out of range for {} classes", p.len())));
    }
    let (top, m) = p
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    let rest: f64 = p
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, v)| (v - m).exp())
        .sum();
    let log_norm = rest.ln_1p();
    let loss = (m - p[label]) + log_norm;
    let lse = m + log_norm;
    let mut grad: Vec<f64> = p.iter().map(|v| (v - lse).exp()).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn bce_stationary_point() {
        let s = DEFAULT_LOGIT_SCALE;
        let q = [-0.4, 0.0, 0.2, 0.9];
        let t: Vec<f64> = q.iter().map(|v| sigmoid(s * v)).collect();
        let (_, g) = weighted_bce_loss(&q, &t, &[1.0; 4], s).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn bce_at_zero_is_ln2() {
        let (l, _) = weighted_bce_loss(&[0.0; 5], &[0.5; 5], &[1.0; 5], 5.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 12;
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|i| if i == 3 { 0.0 } else { rng.random_range(0.1..5.0) }).collect();
            let (_, g) = weighted_bce_loss(&q, &t, &w, 5.0).unwrap();
            let h = 1e-5;
            for x in 0..n {
                let mut up = q.clone();
                up[x] += h;
                let mut dn = q.clone();
                dn[x] -= h;
                let fd = (weighted_bce_loss(&up, &t, &w, 5.0).unwrap().0 - weighted_bce_loss(&dn, &t, &w, 5.0).unwrap().0)
                    / (2.0 * h);
                if x == 3 {
                    assert_eq!(g[x], 0.0);
                } else {
                    assert!(rel_err(g[x], fd) < 1e-6, "{} vs {fd}", g[x]);
                }
            }
        }
    }

    #[test]
    fn bce_rejects_bad_targets() {
        assert!(weighted_bce_loss(&[0.0], &[1.5], &[1.0], 5.0).is_err());
        assert!(weighted_bce_loss(&[0.0], &[-0.1], &[1.0], 5.0).is_err());
        assert!(weighted_bce_loss(&[0.0, 1.0], &[0.5], &[1.0], 5.0).is_err());
    }

    #[test]
    fn bce_all_excluded_is_zero() {
        let (l, g) = weighted_bce_loss(&[0.3, 0.1], &[0.0, 1.0], &[0.0, 0.0], 5.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn positive_weights_balance_classes() {
        let rows = [vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        let w = positive_weights(rows.iter().map(Vec::as_slice), 3);
        assert_eq!(w, vec![3.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn ce_uniform_is_ln_c() {
        let (l, g) = cross_entropy_loss(&[0.7; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn ce_saturates() {
        let (l, _) = cross_entropy_loss(&[50.0, 0.0, 0.0, 0.0], 0).unwrap();
        assert!(l < 1e-20, "{l}");
        assert!(l > 0.0);
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = 7;
            let p: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
            let label = rng.random_range(0..c);
            let (_, g) = cross_entropy_loss(&p, label).unwrap();
            let sm = softmax(&p);
            assert!((sm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let h = 1e-5;
            for j in 0..c {
                let mut up = p.clone();
                up[j] += h;
                let mut dn = p.clone();
                dn[j] -= h;
                let fd = (cross_entropy_loss(&up, label).unwrap().0 - cross_entropy_loss(&dn, label).unwrap().0) / (2.0 * h);
                assert!(rel_err(g[j], fd) < 1e-6, "{} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn ce_rejects_label_out_of_range() {
        assert!(cross_entropy_loss(&[0.0, 1.0], 2).is_err());
    }
}
