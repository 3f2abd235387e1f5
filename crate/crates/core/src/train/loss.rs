//! Siamese objective: cosine loss between long codes plus the mutual
//! difference penalty between codes of one branch.

use crate::error::{Error, Result};
use crate::hash::HashCodeSet;

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero_norm(v: &[f64], what: &str) -> Result<f64> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::numeric(format!(
            "{what} has zero or non-finite norm"
        )));
    }
    Ok(n)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "cosine needs equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = nonzero_norm(a, "first code")?;
    let nb = nonzero_norm(b, "second code")?;
    Ok(dot(a, b) / (na * nb))
}

/// `1 - cos(a, b)`.
pub fn cosine_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Negated cosine loss, used to push negative pairs apart.
pub fn negative_pair_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(-cosine_loss(a, b)?)
}

/// Mean pairwise cosine between the `B` codes, scaled by `2 / (R B (B-1))`.
pub fn mutual_difference_loss(codes: &[Vec<f64>]) -> Result<f64> {
    let b = codes.len();
    if b < 2 {
        return Err(Error::invalid(format!(
            "mutual difference needs B >= 2, got {b}"
        )));
    }
    let r = codes[0].len();
    if r == 0 || codes.iter().any(|c| c.len() != r) {
        return Err(Error::invalid("codes must share a nonzero length"));
    }
    let sq: Vec<f64> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| nonzero_norm(c, &format!("code {i}")).map(|_| dot(c, c)))
        .collect::<Result<_>>()?;
    // dot / sqrt(|a|^2 |b|^2) makes identical codes contribute exactly 1
    let mut sum = 0.0;
    for j in 0..b {
        for i in j + 1..b {
            sum += (dot(&codes[i], &codes[j]) / (sq[i] * sq[j]).sqrt()).min(1.0);
        }
    }
    Ok(2.0 * sum / (r as f64 * b as f64 * (b as f64 - 1.0)))
}

/// Loss terms of one positive pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cosine: f64,
    /// Mean of the two branches' mutual difference losses.
    pub mutual: f64,
    pub negative: f64,
    pub total: f64,
}

fn branch_mutual(set: &HashCodeSet, lambda_m: f64) -> Result<f64> {
    if set.num_codes() < 2 && lambda_m == 0.0 {
        return Ok(0.0);
    }
    mutual_difference_loss(&set.codes)
}

pub fn total_loss_terms(a: &HashCodeSet, b: &HashCodeSet, lambda_m: f64) -> Result<LossBreakdown> {
    if a.num_codes() != b.num_codes() || a.code_len() != b.code_len() {
        return Err(Error::invalid("branches must have equal B and R"));
    }
    let cosine = cosine_loss(&a.concat(), &b.concat())?;
    let m1 = branch_mutual(a, lambda_m)?;
    let m2 = branch_mutual(b, lambda_m)?;
    Ok(LossBreakdown {
        cosine,
        mutual: 0.5 * (m1 + m2),
        negative: 0.0,
        total: cosine + 0.5 * lambda_m * (m1 + m2),
    })
}

/// `L_c + (lambda_m / 2) (L_m(a) + L_m(b))`.
pub fn total_loss(a: &HashCodeSet, b: &HashCodeSet, lambda_m: f64) -> Result<f64> {
    Ok(total_loss_terms(a, b, lambda_m)?.total)
}
