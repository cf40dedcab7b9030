//! Optimal-report (property) computation: brute force over representative
//! sets, the greedy subset rule for the leave-one-out hinge, threshold
//! indices for the high/medium binning, membership in the consistent
//! surrogate's optimal set, and the separation probe around it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::embeddings::{HMReport, RepresentativeSet, SubsetReport};
use crate::error::{Error, Result};
use crate::losses::bayes_risk_topk;
use crate::simplex::{
    argmax_link, top_k_sets, Label, LabelSpace, ProbVector, ScoreVector, TopKSet,
};

/// Reports within this tolerance of the minimum count as optimal.
pub const ARGMIN_TOL: f64 = 1e-9;

/// The optimal entries of a representative set under one distribution.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyValue {
    pub min_value: f64,
    /// Indices into the representative set's entries, ascending.
    pub optima: Vec<usize>,
}

/// The set of top-k optimal reports for the target loss: all top-k index
/// sets of `p`.
pub fn prop_topk(p: &ProbVector, space: LabelSpace) -> Result<Vec<TopKSet>> {
    top_k_sets(&p.as_scores(), space)
}

/// Exact argmin over a finite representative set by expected discrete loss.
pub fn prop_over_reps(reps: &RepresentativeSet, p: &ProbVector, tol: f64) -> Result<PropertyValue> {
    if p.len() != reps.space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            reps.space.n()
        )));
    }
    let expected = reps.expected_rows(p);
    let min_value = expected.iter().copied().fold(f64::INFINITY, f64::min);
    let optima: Vec<usize> = expected
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v <= min_value + tol)
        .map(|(i, _)| i)
        .collect();
    debug_assert!(!optima.is_empty());
    Ok(PropertyValue { min_value, optima })
}

/// One threshold comparison of the greedy subset rule.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyStep {
    pub candidate: Label,
    pub threshold: f64,
    pub accepted: bool,
}

/// Trace of the greedy rule: candidates in descending probability order, the
/// threshold `(1 - mass(T)) / (k + 1 - |T|)` they faced, and the final set.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
    pub final_set: SubsetReport,
}

/// Greedy minimizer of the expected subset loss: scan labels by descending
/// probability and add while the running threshold is met and `|T| < k`.
pub fn greedy_prop_l4(p: &ProbVector, space: LabelSpace) -> Result<GreedyTrace> {
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    let order = crate::util::sort_indices_desc(p.as_slice());
    let k = space.k() as f64;
    let mut steps = Vec::new();
    let mut members: Vec<Label> = Vec::new();
    let mut mass = 0.0;
    for &i in &order {
        if members.len() == space.k() {
            break;
        }
        let threshold = (1.0 - mass) / (k + 1.0 - members.len() as f64);
        let prob = p.as_slice()[i];
        let accepted = prob >= threshold;
        steps.push(GreedyStep {
            candidate: i + 1,
            threshold,
            accepted,
        });
        if !accepted {
            break;
        }
        members.push(i + 1);
        mass += prob;
    }
    Ok(GreedyTrace {
        steps,
        final_set: SubsetReport::new(members, space)?,
    })
}

fn sorted_prefix_sums(p: &ProbVector) -> Vec<f64> {
    let sorted = p.sorted_desc();
    let mut prefix = vec![0.0; sorted.len() + 1];
    for (i, &x) in sorted.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    prefix
}

/// Number of labels that belong in the high bin: the largest
/// `i in {0, ..., k-1}` with `p_[i] > (1 - sigma_{i-1}(p)) / (k - (i-1))`;
/// index 0 passes vacuously.
pub fn h_star(p: &ProbVector, space: LabelSpace) -> Result<usize> {
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    let sorted = p.sorted_desc();
    let prefix = sorted_prefix_sums(p);
    let mut best = 0;
    for i in 1..space.k() {
        let threshold = (1.0 - prefix[i - 1]) / (space.k() as f64 - (i as f64 - 1.0));
        if sorted[i - 1] > threshold {
            best = i;
        }
    }
    Ok(best)
}

/// Threshold above which a label earns a medium slot, given `h` high labels
/// holding mass `sigma_h`: `k (1 - sigma_h) / ((k+1)(k-h))`.
///
/// Derived by differencing the expected high/medium loss when one label moves
/// from the low to the medium bin; the commonly quoted form drops the leading
/// factor k and is unsound as a consistency test.
pub fn medium_threshold(sigma_h: f64, h: usize, space: LabelSpace) -> Result<f64> {
    if h >= space.k() {
        return Err(Error::domain(format!(
            "medium threshold degenerates at h={h} >= k={}",
            space.k()
        )));
    }
    let k = space.k() as f64;
    Ok(k * (1.0 - sigma_h) / ((k + 1.0) * (k - h as f64)))
}

/// Number of labels that belong in the high or medium bin: the largest
/// `j in {0, ..., k}` whose sorted probability clears [`medium_threshold`]
/// at `h = h_star(p)`; index 0 passes vacuously.
pub fn m_star(p: &ProbVector, space: LabelSpace) -> Result<usize> {
    let h = h_star(p, space)?;
    let sorted = p.sorted_desc();
    let prefix = sorted_prefix_sums(p);
    let threshold = medium_threshold(prefix[h], h, space)?;
    let mut best = 0;
    for j in 1..=space.k() {
        if sorted[j - 1] > threshold {
            best = j;
        }
    }
    Ok(best)
}

/// The high/medium report the threshold indices describe: the top `h_star`
/// labels in H and the next `m_star - h_star` in M, in descending
/// probability order with ties toward smaller labels.
pub fn hm_from_stars(p: &ProbVector, space: LabelSpace) -> Result<HMReport> {
    let h = h_star(p, space)?;
    let m = m_star(p, space)?;
    let order = crate::util::sort_indices_desc(p.as_slice());
    let high: Vec<Label> = order[..h].iter().map(|&i| i + 1).collect();
    let medium: Vec<Label> = if m > h {
        order[h..m].iter().map(|&i| i + 1).collect()
    } else {
        Vec::new()
    };
    HMReport::new(high, medium, space)
}

/// Whether `u` minimizes the expected consistent surrogate under `p`:
/// expected loss equals the top-k Bayes risk within 1e-9.
pub fn gamma_k_membership(u: &ScoreVector, p: &ProbVector, space: LabelSpace) -> Result<bool> {
    let expected = crate::losses::expected_loss(
        crate::losses::LossId::Lk,
        &crate::losses::Report::Score(u.clone()),
        p,
        space,
    )?;
    let bayes = bayes_risk_topk(p, space)?;
    Ok((expected - bayes).abs() <= 1e-9)
}

/// Builds a member of the consistent surrogate's optimal set: a convex
/// combination of top-k indicators of `p`, minus a conic combination of unit
/// vectors on zero-probability labels, plus a constant shift.
pub fn gamma_k_construct(
    p: &ProbVector,
    space: LabelSpace,
    hull_weights: &[f64],
    cone_coeffs: &[f64],
    alpha: f64,
) -> Result<ScoreVector> {
    let maximizers = prop_topk(p, space)?;
    if hull_weights.len() != maximizers.len() {
        return Err(Error::usage(format!(
            "{} hull weights for {} top-k maximizers",
            hull_weights.len(),
            maximizers.len()
        )));
    }
    if hull_weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::domain("hull weights must be nonnegative"));
    }
    let total: f64 = hull_weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "hull weights sum to {total}, expected 1"
        )));
    }
    if cone_coeffs.len() != space.n() {
        return Err(Error::usage(format!(
            "{} cone coefficients for n={}",
            cone_coeffs.len(),
            space.n()
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::domain("shift must be finite"));
    }
    let mut u = vec![alpha; space.n()];
    for (set, &w) in maximizers.iter().zip(hull_weights.iter()) {
        for &y in set.members() {
            u[y - 1] += w;
        }
    }
    for (i, &c) in cone_coeffs.iter().enumerate() {
        if c < 0.0 || !c.is_finite() {
            return Err(Error::domain("cone coefficients must be nonnegative"));
        }
        if c > 0.0 {
            if p.as_slice()[i] > 0.0 {
                return Err(Error::domain(format!(
                    "cone coefficient on label {} with positive probability",
                    i + 1
                )));
            }
            u[i] -= c;
        }
    }
    ScoreVector::new(u)
}

/// One probe failure: a constructed optimum whose perturbation linked outside
/// the top-k optimal sets.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeViolation {
    pub trial: usize,
    pub member: Vec<f64>,
    pub perturbed: Vec<f64>,
    pub linked: TopKSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub violations: usize,
    /// Perturbation bound applied per coordinate.
    pub radius: f64,
    /// At most the first ten violating inputs.
    pub first_violations: Vec<ProbeViolation>,
}

/// Samples optimal reports of the consistent surrogate, perturbs them within
/// sup-norm radius `1/(2n) - 1e-6`, and checks the perturbed link stays
/// top-k optimal. Deterministic per `(p, trials, seed)`.
pub fn epsilon_separation_probe(
    p: &ProbVector,
    space: LabelSpace,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let gamma = prop_topk(p, space)?;
    let radius = 1.0 / (2.0 * space.n() as f64) - 1e-6;
    if radius <= 0.0 {
        return Err(Error::domain("label count too large for the probe radius"));
    }
    let zero_labels: Vec<usize> = (0..space.n()).filter(|&i| p.as_slice()[i] == 0.0).collect();
    let mut violations = 0;
    let mut first_violations = Vec::new();
    for trial in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        // Dirichlet(1,...,1) over the maximizers via normalized exponentials.
        let mut weights: Vec<f64> = (0..gamma.len())
            .map(|_| -f64::ln(1.0 - rng.random_range(0.0..1.0)))
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let alpha = rng.random_range(-1.0..1.0);
        let mut cone = vec![0.0; space.n()];
        for &i in &zero_labels {
            cone[i] = rng.random_range(0.0..1.0);
        }
        let member = gamma_k_construct(p, space, &weights, &cone, alpha)?;
        let perturbed: Vec<f64> = member
            .as_slice()
            .iter()
            .map(|&x| x + rng.random_range(-radius..radius))
            .collect();
        let perturbed = ScoreVector::new(perturbed)?;
        let linked = argmax_link(&perturbed, space)?;
        if !gamma.contains(&linked) {
            violations += 1;
            if first_violations.len() < 10 {
                first_violations.push(ProbeViolation {
                    trial,
                    member: member.as_slice().to_vec(),
                    perturbed: perturbed.as_slice().to_vec(),
                    linked,
                });
            }
        }
    }
    Ok(ProbeReport {
        trials,
        violations,
        radius,
        first_violations,
    })
}
