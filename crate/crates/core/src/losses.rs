//! Pointwise evaluation, expected value, and subgradients of the target
//! top-k loss and the four polyhedral surrogates.
//!
//! All four surrogates are convex and piecewise linear in the score vector;
//! subgradients are closed-form selections, no autodiff involved.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{Label, LabelSpace, ProbVector, ScoreVector, TopKSet};
use crate::util::{pairwise_sum, sort_indices_desc, top_m_sum};

/// Selects one of the five losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossId {
    /// Discrete top-k loss on size-k label sets.
    Topk,
    /// Hinge on the mean of the top-k entries of `u - e_y`, clamped outside.
    L2,
    /// Mean of per-entry hinges over the top-k of `u - e_y`.
    L3,
    /// Hinge on the mean of the top-k entries of `u` with coordinate `y` removed.
    L4,
    /// The consistent surrogate: support-function form of the top-k Bayes risk.
    Lk,
}

impl LossId {
    pub const SURROGATES: [LossId; 4] = [LossId::L2, LossId::L3, LossId::L4, LossId::Lk];

    pub fn is_surrogate(&self) -> bool {
        !matches!(self, LossId::Topk)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LossId::Topk => "topk",
            LossId::L2 => "l2",
            LossId::L3 => "l3",
            LossId::L4 => "l4",
            LossId::Lk => "lk",
        }
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(LossId::Topk),
            "l2" => Ok(LossId::L2),
            "l3" => Ok(LossId::L3),
            "l4" => Ok(LossId::L4),
            "lk" => Ok(LossId::Lk),
            other => Err(Error::usage(format!(
                "unknown loss {other:?}, expected topk|l2|l3|l4|lk"
            ))),
        }
    }
}

/// A report for [`expected_loss`]: a label set for the target loss, a score
/// vector for the surrogates.
#[derive(Debug, Clone)]
pub enum Report {
    Set(TopKSet),
    Score(ScoreVector),
}

/// A subgradient selection; one entry per label.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Subgradient(Vec<f64>);

impl Subgradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_dims(u: &ScoreVector, y: Label, space: LabelSpace) -> Result<()> {
    if u.len() != space.n() {
        return Err(Error::usage(format!(
            "score vector length {} does not match n={}",
            u.len(),
            space.n()
        )));
    }
    space.check_label(y)
}

/// 0/1 loss: 0 iff the realized label lies in the reported set.
pub fn topk_loss(set: &TopKSet, y: Label, space: LabelSpace) -> Result<f64> {
    space.check_label(y)?;
    Ok(if set.contains(y) { 0.0 } else { 1.0 })
}

/// `(1 - u_y + mean of top-k entries of (u - e_y))_+`.
pub fn loss_l2(u: &ScoreVector, y: Label, space: LabelSpace) -> Result<f64> {
    check_dims(u, y, space)?;
    let k = space.k();
    let mut v = u.as_slice().to_vec();
    v[y - 1] -= 1.0;
    let arg = 1.0 - u.score(y) + top_m_sum(&v, k) / k as f64;
    Ok(arg.max(0.0))
}

/// Mean over the top-k entries `v_[i]` of `(u - e_y)` of `(1 - u_y + v_[i])_+`.
pub fn loss_l3(u: &ScoreVector, y: Label, space: LabelSpace) -> Result<f64> {
    check_dims(u, y, space)?;
    let k = space.k();
    let mut v = u.as_slice().to_vec();
    v[y - 1] -= 1.0;
    v.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let terms: Vec<f64> = v[..k]
        .iter()
        .map(|vi| (1.0 - u.score(y) + vi).max(0.0))
        .collect();
    Ok(pairwise_sum(&terms) / k as f64)
}

/// `(1 - u_y + mean of top-k entries of u with coordinate y dropped)_+`.
pub fn loss_l4(u: &ScoreVector, y: Label, space: LabelSpace) -> Result<f64> {
    check_dims(u, y, space)?;
    let k = space.k();
    let rest: Vec<f64> = u
        .as_slice()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y - 1)
        .map(|(_, &x)| x)
        .collect();
    let arg = 1.0 - u.score(y) + top_m_sum(&rest, k) / k as f64;
    Ok(arg.max(0.0))
}

/// Value of `max_m { mean of top-m scores + (1 - k/m)_+ }` together with the
/// smallest maximizing `m`. The max runs over `1..=n`.
fn lk_envelope(u: &ScoreVector, space: LabelSpace) -> (f64, usize) {
    let k = space.k() as f64;
    let mut sorted = u.as_slice().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut best = f64::NEG_INFINITY;
    let mut best_m = 1;
    let mut prefix = 0.0;
    for m in 1..=sorted.len() {
        prefix += sorted[m - 1];
        let value = prefix / m as f64 + (1.0 - k / m as f64).max(0.0);
        if value > best {
            best = value;
            best_m = m;
        }
    }
    (best, best_m)
}

/// The consistent surrogate: `max_m { sigma_m(u)/m + (1 - k/m)_+ } - u_y`.
pub fn loss_lk(u: &ScoreVector, y: Label, space: LabelSpace) -> Result<f64> {
    check_dims(u, y, space)?;
    let (envelope, _) = lk_envelope(u, space);
    Ok(envelope - u.score(y))
}

/// Pointwise surrogate dispatch; rejects the discrete loss.
pub fn surrogate_loss(loss: LossId, u: &ScoreVector, y: Label, space: LabelSpace) -> Result<f64> {
    match loss {
        LossId::Topk => Err(Error::usage(
            "topk is a discrete loss; evaluate it on a label set",
        )),
        LossId::L2 => loss_l2(u, y, space),
        LossId::L3 => loss_l3(u, y, space),
        LossId::L4 => loss_l4(u, y, space),
        LossId::Lk => loss_lk(u, y, space),
    }
}

/// `sum_y p_y * loss(report, y)`, with the report type matching the loss.
pub fn expected_loss(
    loss: LossId,
    report: &Report,
    p: &ProbVector,
    space: LabelSpace,
) -> Result<f64> {
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    let mut terms = Vec::with_capacity(space.n());
    match (loss, report) {
        (LossId::Topk, Report::Set(s)) => {
            for y in space.labels() {
                terms.push(p.prob(y) * topk_loss(s, y, space)?);
            }
        }
        (LossId::Topk, Report::Score(_)) => {
            return Err(Error::usage("topk expects a label-set report"))
        }
        (id, Report::Score(u)) => {
            for y in space.labels() {
                terms.push(p.prob(y) * surrogate_loss(id, u, y, space)?);
            }
        }
        (id, Report::Set(_)) => {
            return Err(Error::usage(format!("{id} expects a score-vector report")))
        }
    }
    Ok(pairwise_sum(&terms))
}

/// Minimum expected top-k loss under `p`: one minus the top-k probability mass.
pub fn bayes_risk_topk(p: &ProbVector, space: LabelSpace) -> Result<f64> {
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    Ok(1.0 - p.sigma(space.k()))
}

/// A deterministic subgradient selection at `u` for outcome `y`.
///
/// Active pieces are chosen by the stable descending sort (ties toward
/// smaller labels); a positive part contributes only when its argument is
/// strictly positive; the envelope in the consistent surrogate takes the
/// smallest maximizing m.
pub fn subgradient(
    loss: LossId,
    u: &ScoreVector,
    y: Label,
    space: LabelSpace,
) -> Result<Subgradient> {
    check_dims(u, y, space)?;
    let n = space.n();
    let k = space.k();
    let mut g = vec![0.0; n];
    match loss {
        LossId::Topk => return Err(Error::usage("topk has no subgradient in score space")),
        LossId::L2 => {
            let mut v = u.as_slice().to_vec();
            v[y - 1] -= 1.0;
            let order = sort_indices_desc(&v);
            let arg = 1.0 - u.score(y) + order[..k].iter().map(|&i| v[i]).sum::<f64>() / k as f64;
            if arg > 0.0 {
                g[y - 1] -= 1.0;
                for &i in &order[..k] {
                    g[i] += 1.0 / k as f64;
                }
            }
        }
        LossId::L3 => {
            let mut v = u.as_slice().to_vec();
            v[y - 1] -= 1.0;
            let order = sort_indices_desc(&v);
            for &i in &order[..k] {
                let term = 1.0 - u.score(y) + v[i];
                if term > 0.0 {
                    g[i] += 1.0 / k as f64;
                    g[y - 1] -= 1.0 / k as f64;
                }
            }
        }
        LossId::L4 => {
            let others: Vec<usize> = (0..n).filter(|&i| i != y - 1).collect();
            let mut order = others.clone();
            order.sort_by(|&a, &b| {
                u.as_slice()[b]
                    .partial_cmp(&u.as_slice()[a])
                    .expect("finite")
                    .then(a.cmp(&b))
            });
            let arg = 1.0 - u.score(y)
                + order[..k].iter().map(|&i| u.as_slice()[i]).sum::<f64>() / k as f64;
            if arg > 0.0 {
                g[y - 1] -= 1.0;
                for &i in &order[..k] {
                    g[i] += 1.0 / k as f64;
                }
            }
        }
        LossId::Lk => {
            let (_, m) = lk_envelope(u, space);
            let order = sort_indices_desc(u.as_slice());
            for &i in &order[..m] {
                g[i] += 1.0 / m as f64;
            }
            g[y - 1] -= 1.0;
        }
    }
    Ok(Subgradient(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::argmax_link;

    fn space(n: usize, k: usize) -> LabelSpace {
        LabelSpace::new(n, k).unwrap()
    }

    fn sv(u: &[f64]) -> ScoreVector {
        ScoreVector::new(u.to_vec()).unwrap()
    }

    fn pv(p: &[f64]) -> ProbVector {
        ProbVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn loss_id_round_trips_lowercase() {
        for id in [LossId::Topk, LossId::L2, LossId::L3, LossId::L4, LossId::Lk] {
            assert_eq!(id.as_str().parse::<LossId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
        assert!("hinge".parse::<LossId>().is_err());
    }

    #[test]
    fn topk_loss_examples() {
        let sp = space(4, 2);
        let s12 = TopKSet::new(vec![1, 2], sp).unwrap();
        let s24 = TopKSet::new(vec![2, 4], sp).unwrap();
        assert_eq!(topk_loss(&s12, 1, sp).unwrap(), 0.0);
        assert_eq!(topk_loss(&s12, 3, sp).unwrap(), 1.0);
        assert_eq!(topk_loss(&s24, 4, sp).unwrap(), 0.0);
        assert!(topk_loss(&s12, 5, sp).is_err());
    }

    #[test]
    fn loss_l2_examples() {
        let sp = space(4, 2);
        assert!((loss_l2(&sv(&[0.0; 4]), 1, sp).unwrap() - 1.0).abs() < 1e-15);
        assert!((loss_l2(&sv(&[2.0, 1.0, 0.0, 0.0]), 2, sp).unwrap() - 1.0).abs() < 1e-15);
        assert!((loss_l2(&sv(&[2.0, 1.0, 0.0, 0.0]), 3, sp).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn loss_l3_examples() {
        let sp = space(4, 2);
        assert!((loss_l3(&sv(&[2.0, 1.0, 0.0, 0.0]), 1, sp).unwrap() - 0.0).abs() < 1e-15);
        assert!((loss_l3(&sv(&[2.0, 1.0, 0.0, 0.0]), 2, sp).unwrap() - 1.0).abs() < 1e-15);
        assert!((loss_l3(&sv(&[1.0, 0.0, 0.0, 0.0]), 2, sp).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn loss_l4_examples() {
        let sp = space(4, 2);
        assert!((loss_l4(&sv(&[2.0, 2.0, 0.0, 0.0]), 1, sp).unwrap() - 0.0).abs() < 1e-15);
        assert!((loss_l4(&sv(&[2.0, 2.0, 0.0, 0.0]), 3, sp).unwrap() - 3.0).abs() < 1e-15);
        assert!((loss_l4(&sv(&[1.0, 0.0, 0.0, 0.0]), 2, sp).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn loss_lk_examples() {
        let sp = space(4, 2);
        assert!((loss_lk(&sv(&[1.0, 1.0, 0.0, 0.0]), 1, sp).unwrap() - 0.0).abs() < 1e-15);
        assert!((loss_lk(&sv(&[0.0; 4]), 1, sp).unwrap() - 0.5).abs() < 1e-15);
        assert!((loss_lk(&sv(&[2.0, 0.0, 0.0, 0.0]), 2, sp).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn expected_loss_examples() {
        let sp = space(3, 2);
        let p = pv(&[0.5, 0.3, 0.2]);
        let set = Report::Set(TopKSet::new(vec![1, 2], sp).unwrap());
        assert!((expected_loss(LossId::Topk, &set, &p, sp).unwrap() - 0.2).abs() < 1e-15);

        let sp4 = space(4, 2);
        let p4 = pv(&[0.25; 4]);
        let u = Report::Score(sv(&[1.0, 1.0, 0.0, 0.0]));
        assert!((expected_loss(LossId::Lk, &u, &p4, sp4).unwrap() - 0.5).abs() < 1e-15);

        let zero = Report::Score(sv(&[0.0; 4]));
        assert!((expected_loss(LossId::L2, &zero, &p4, sp4).unwrap() - 1.0).abs() < 1e-15);

        // Report/loss mismatch is a usage error.
        assert!(expected_loss(LossId::Topk, &zero, &p4, sp4).is_err());
        let set4 = Report::Set(TopKSet::new(vec![1, 2], sp4).unwrap());
        assert!(expected_loss(LossId::L2, &set4, &p4, sp4).is_err());
    }

    #[test]
    fn bayes_risk_examples() {
        assert!((bayes_risk_topk(&pv(&[0.5, 0.3, 0.2]), space(3, 2)).unwrap() - 0.2).abs() < 1e-15);
        assert!((bayes_risk_topk(&pv(&[0.25; 4]), space(4, 2)).unwrap() - 0.5).abs() < 1e-15);
        let p = pv(&[0.15, 0.15, 0.15, 0.2, 0.35]);
        assert!((bayes_risk_topk(&p, space(5, 3)).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn bayes_risk_is_min_over_sets() {
        let sp = space(4, 2);
        let p = pv(&[0.4, 0.3, 0.2, 0.1]);
        let mut best = f64::INFINITY;
        for a in 1..=4usize {
            for b in (a + 1)..=4usize {
                let s = Report::Set(TopKSet::new(vec![a, b], sp).unwrap());
                best = best.min(expected_loss(LossId::Topk, &s, &p, sp).unwrap());
            }
        }
        assert!((best - bayes_risk_topk(&p, sp).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn subgradient_examples() {
        let sp = space(4, 2);
        let g = subgradient(LossId::Lk, &sv(&[2.0, 0.0, 0.0, 0.0]), 1, sp).unwrap();
        assert_eq!(g.as_slice(), &[0.0; 4]);

        let g = subgradient(LossId::Lk, &sv(&[2.0, 0.0, 0.0, 0.0]), 2, sp).unwrap();
        assert_eq!(g.as_slice(), &[1.0, -1.0, 0.0, 0.0]);

        let g = subgradient(LossId::L2, &sv(&[5.0, 0.0, 0.0, 0.0]), 1, sp).unwrap();
        assert_eq!(g.as_slice(), &[0.0; 4]);
    }

    #[test]
    fn shift_invariance_of_prior_surrogates() {
        let sp = space(4, 2);
        let us = [
            sv(&[2.0, 1.0, 0.0, 0.0]),
            sv(&[0.3, -0.7, 1.9, 0.4]),
            sv(&[0.0; 4]),
        ];
        for u in &us {
            for alpha in [-3.5, 0.2, 7.0] {
                let shifted = sv(&u.as_slice().iter().map(|x| x + alpha).collect::<Vec<_>>());
                for y in 1..=4 {
                    for id in [LossId::L2, LossId::L3, LossId::L4] {
                        let a = surrogate_loss(id, u, y, sp).unwrap();
                        let b = surrogate_loss(id, &shifted, y, sp).unwrap();
                        assert!((a - b).abs() < 1e-10, "{id} not shift invariant");
                    }
                }
            }
        }
    }

    // The consistent surrogate is not shift invariant, but its expected-loss
    // argmin is: shifting a report by a constant shifts the loss by the same
    // constant on every outcome.
    #[test]
    fn lk_shifts_loss_uniformly() {
        let sp = space(4, 2);
        let u = sv(&[1.0, 0.4, 0.0, -0.3]);
        let shifted = sv(&u.as_slice().iter().map(|x| x + 2.0).collect::<Vec<_>>());
        for y in 1..=4 {
            let a = loss_lk(&u, y, sp).unwrap();
            let b = loss_lk(&shifted, y, sp).unwrap();
            assert!((b - a).abs() < 1e-12);
        }
    }

    #[test]
    fn lk_at_indicators_reproduces_topk_loss() {
        let sp = space(4, 2);
        for a in 1..=4usize {
            for b in (a + 1)..=4usize {
                let set = TopKSet::new(vec![a, b], sp).unwrap();
                let u = ScoreVector::indicator(set.members(), 4);
                for y in 1..=4 {
                    let lhs = loss_lk(&u, y, sp).unwrap();
                    let rhs = topk_loss(&set, y, sp).unwrap();
                    assert!((lhs - rhs).abs() < 1e-15);
                }
                assert_eq!(argmax_link(&u, sp).unwrap(), set);
            }
        }
    }

    #[test]
    fn sigma_mean_is_nonincreasing_in_m() {
        let u = sv(&[0.9, 0.1, 0.4, -0.2, 0.0]);
        let mut prev = f64::INFINITY;
        let mut sorted = u.as_slice().to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut prefix = 0.0;
        for m in 1..=5 {
            prefix += sorted[m - 1];
            let avg = prefix / m as f64;
            assert!(avg <= prev + 1e-15);
            prev = avg;
        }
    }
}
