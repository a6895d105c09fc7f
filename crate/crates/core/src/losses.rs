//! Contrastive objectives between observational and counterfactual user
//! representations, and the combined training objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Tape, Var};

/// How the triplet terms over all positive/negative pairs are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// `Σ_m Σ_n max(d(xq, x⁺ₘ) − d(xq, x⁻ₙ) + margin, 0)` with Euclidean `d`.
pub fn loss_co(
    tape: &mut Tape,
    xq: Var,
    positives: &[Var],
    negatives: &[Var],
    margin: f64,
    reduction: Reduction,
) -> Result<Var> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput("counterfactual representations"));
    }
    let d_pos = positives
        .iter()
        .map(|&p| tape.distance(xq, p))
        .collect::<Result<Vec<_>>>()?;
    let d_neg = negatives
        .iter()
        .map(|&n| tape.distance(xq, n))
        .collect::<Result<Vec<_>>>()?;
    let mut terms = Vec::with_capacity(d_pos.len() * d_neg.len());
    for &dp in &d_pos {
        for &dn in &d_neg {
            let diff = tape.sub(dp, dn)?;
            let shifted = tape.add_scalar(diff, margin);
            terms.push(tape.relu(shifted));
        }
    }
    let total = tape.sum_all(&terms)?;
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => tape.scale(total, 1.0 / terms.len() as f64),
    })
}

/// The two halves of the interest-independence objective.
#[derive(Clone, Copy, Debug)]
pub struct IiTerms {
    /// `Σ_m 1 − cos(x⁺ₘ, y)`.
    pub positive: Var,
    /// `Σ_n max(cos(x⁻ₙ, y) − margin, 0)`.
    pub negative: Var,
}

/// Both halves of the interest-independence objective. `y` is a `1 × d`
/// node; every input is L2-normalized first.
pub fn loss_ii_terms(
    tape: &mut Tape,
    positives: &[Var],
    negatives: &[Var],
    y: Var,
    margin: f64,
) -> Result<IiTerms> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput("counterfactual representations"));
    }
    let y_unit = tape.l2_normalize_rows(y)?;
    let cosines = |tape: &mut Tape, reps: &[Var]| -> Result<Var> {
        let stacked = tape.stack(reps)?;
        let unit = tape.l2_normalize_rows(stacked)?;
        tape.matmul_t(unit, y_unit)
    };
    let cos_pos = cosines(tape, positives)?;
    let cos_neg = cosines(tape, negatives)?;

    let sum_pos = tape.sum(cos_pos);
    let negated = tape.scale(sum_pos, -1.0);
    let positive = tape.add_scalar(negated, positives.len() as f64);

    let shifted = tape.add_scalar(cos_neg, -margin);
    let hinged = tape.relu(shifted);
    let negative = tape.sum(hinged);
    Ok(IiTerms { positive, negative })
}

/// Sum of both halves of [`loss_ii_terms`].
pub fn loss_ii(
    tape: &mut Tape,
    positives: &[Var],
    negatives: &[Var],
    y: Var,
    margin: f64,
) -> Result<Var> {
    let t = loss_ii_terms(tape, positives, negatives, y, margin)?;
    tape.add(t.positive, t.negative)
}

/// Loss components of one step or example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub matching: f64,
    pub co: f64,
    pub ii: f64,
    pub total: f64,
}

/// `matching + λ1·co + λ2·ii`.
pub fn loss_total(matching: f64, co: f64, ii: f64, lambda1: f64, lambda2: f64) -> Result<LossBreakdown> {
    for (name, v) in [
        ("matching loss", matching),
        ("contrastive loss", co),
        ("independence loss", ii),
        ("lambda1", lambda1),
        ("lambda2", lambda2),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    let mut total = matching;
    if lambda1 != 0.0 {
        total += lambda1 * co;
    }
    if lambda2 != 0.0 {
        total += lambda2 * ii;
    }
    Ok(LossBreakdown {
        matching,
        co,
        ii,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Dense2, ParamSet};

    fn rep(tape: &mut Tape, v: &[f64]) -> Var {
        tape.constant(Dense2::row_vector(v.to_vec()))
    }

    #[test]
    fn co_examples() {
        let ps = ParamSet::new();
        let mut t = Tape::new(&ps);
        let q = rep(&mut t, &[0.0]);
        let p = rep(&mut t, &[0.5]);
        let n = rep(&mut t, &[2.0]);
        let l = loss_co(&mut t, q, &[p], &[n], 1.0, Reduction::Sum).unwrap();
        assert_eq!(t.value(l).item(), 0.0);
        let l = loss_co(&mut t, q, &[p], &[p], 1.0, Reduction::Sum).unwrap();
        assert_eq!(t.value(l).item(), 1.0);
    }

    #[test]
    fn co_double_sum_matches_pairwise_oracle() {
        let (pos, neg) = ([1.0, 0.3], [3.0, 1.0]);
        let mut oracle = 0.0;
        for p in pos {
            for n in neg {
                oracle += f64::max(p - n + 1.0, 0.0);
            }
        }
        let ps = ParamSet::new();
        let mut t = Tape::new(&ps);
        let q = rep(&mut t, &[0.0]);
        let pv: Vec<Var> = pos.iter().map(|&v| rep(&mut t, &[v])).collect();
        let nv: Vec<Var> = neg.iter().map(|&v| rep(&mut t, &[v])).collect();
        let l = loss_co(&mut t, q, &pv, &nv, 1.0, Reduction::Sum).unwrap();
        assert!((t.value(l).item() - oracle).abs() < 1e-12);
        assert!((oracle - 1.3).abs() < 1e-12);
        let mean = loss_co(&mut t, q, &pv, &nv, 1.0, Reduction::Mean).unwrap();
        assert!((t.value(mean).item() - oracle / 4.0).abs() < 1e-12);
        assert!(loss_co(&mut t, q, &[], &nv, 1.0, Reduction::Sum).is_err());
    }

    #[test]
    fn ii_examples() {
        let ps = ParamSet::new();
        let mut t = Tape::new(&ps);
        let y = rep(&mut t, &[1.0, 0.0]);
        let same = rep(&mut t, &[3.0, 0.0]);
        let inside = rep(&mut t, &[0.4, (1.0f64 - 0.16).sqrt()]);
        let outside = rep(&mut t, &[0.9, (1.0f64 - 0.81).sqrt()]);
        let a = loss_ii_terms(&mut t, &[same], &[inside], y, 0.5).unwrap();
        assert!(t.value(a.positive).item().abs() < 1e-15);
        assert_eq!(t.value(a.negative).item(), 0.0);
        let b = loss_ii_terms(&mut t, &[same], &[outside], y, 0.5).unwrap();
        assert!((t.value(b.negative).item() - 0.4).abs() < 1e-12);
        let zero = rep(&mut t, &[0.0, 0.0]);
        assert!(matches!(
            loss_ii(&mut t, &[zero], &[same], y, 0.5),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn total_examples() {
        let b = loss_total(1.0, 0.5, 0.2, 1.0, 1.0).unwrap();
        assert!((b.total - 1.7).abs() < 1e-12);
        assert_eq!(loss_total(1.0, 0.5, 0.2, 0.0, 0.0).unwrap().total, 1.0);
        assert_eq!(loss_total(1.0, 0.0, 0.0, 1.0, 1.0).unwrap().total, 1.0);
        assert!(loss_total(f64::NAN, 0.0, 0.0, 1.0, 1.0).is_err());
    }
}
