//! Closed-form consistency-region predicates and the empirical audit that
//! checks whether surrogate minimization followed by the argmax link recovers
//! a top-k optimal set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::{enumerate, RepresentativeSet};
use crate::error::{Error, Result};
use crate::losses::LossId;
use crate::properties::{h_star, medium_threshold, prop_over_reps, prop_topk, ARGMIN_TOL};
use crate::simplex::{argmax_link, dirichlet_sample, top_k_sets, LabelSpace, ProbVector, TopKSet};

/// Sufficient condition for the clamped top-k hinge to link consistently:
/// the k-th sorted probability clears the medium threshold at `h_star(p)`,
/// which forces every optimal high/medium report to fill all k slots.
pub fn in_p2(p: &ProbVector, space: LabelSpace) -> Result<bool> {
    let h = h_star(p, space)?;
    let sorted = p.sorted_desc();
    let sigma_h: f64 = sorted[..h].iter().sum();
    let threshold = medium_threshold(sigma_h, h, space)?;
    Ok(sorted[space.k() - 1] > threshold)
}

/// The printed region for the per-entry top-k hinge:
/// `p_[k+1] > 1/(k+1)` and `(sum of the n-k smallest) / (k-1) >= p_[k]`.
///
/// The first conjunct forces the top k+1 probabilities above unit mass, so
/// the region is empty on the simplex; it is kept verbatim and the audit is
/// the ground truth for where this surrogate actually links consistently.
pub fn in_p3(p: &ProbVector, space: LabelSpace) -> Result<bool> {
    if space.k() < 2 {
        return Err(Error::domain(
            "the partition-loss region predicate degenerates at k=1",
        ));
    }
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    let sorted = p.sorted_desc();
    let k = space.k();
    let first = sorted[k] > 1.0 / (k as f64 + 1.0);
    let tail: f64 = sorted[k..].iter().sum();
    let second = tail / (k as f64 - 1.0) >= sorted[k - 1];
    Ok(first && second)
}

/// Sufficient condition for the leave-one-out hinge:
/// `p_[k] > 1 - sigma_k(p)`, i.e. the greedy rule fills all k slots strictly.
pub fn in_p4(p: &ProbVector, space: LabelSpace) -> Result<bool> {
    if p.len() != space.n() {
        return Err(Error::usage(format!(
            "probability vector length {} does not match n={}",
            p.len(),
            space.n()
        )));
    }
    let sorted = p.sorted_desc();
    let sigma_k: f64 = sorted[..space.k()].iter().sum();
    Ok(sorted[space.k() - 1] > 1.0 - sigma_k)
}

/// An optimal surrogate report that fails one of the audit checks.
#[derive(Debug, Clone, Serialize)]
pub struct AuditWitness {
    pub entry: usize,
    pub embed: Vec<f64>,
    pub linked: TopKSet,
    pub link_ok: bool,
    pub agnostic_ok: bool,
}

/// Per-distribution audit outcome.
///
/// `link_consistent`: the lexicographic link of every optimal embedded report
/// is a top-k optimal set. `link_agnostic_consistent`: every top-k set of
/// every optimal report is top-k optimal (implies the former).
#[derive(Debug, Clone, Serialize)]
pub struct AuditVerdict {
    pub link_consistent: bool,
    pub link_agnostic_consistent: bool,
    pub witnesses: Vec<AuditWitness>,
}

/// Audits one distribution against a prebuilt representative set.
pub fn audit_with_reps(reps: &RepresentativeSet, p: &ProbVector) -> Result<AuditVerdict> {
    let space = reps.space;
    let gamma = prop_topk(p, space)?;
    let value = prop_over_reps(reps, p, ARGMIN_TOL)?;
    let mut link_consistent = true;
    let mut agnostic = true;
    let mut witnesses = Vec::new();
    for &idx in &value.optima {
        let embed = &reps.entries[idx].embed;
        let linked = argmax_link(embed, space)?;
        let link_ok = gamma.contains(&linked);
        let agnostic_ok = top_k_sets(embed, space)?.iter().all(|s| gamma.contains(s));
        link_consistent &= link_ok;
        agnostic &= agnostic_ok;
        if !link_ok || !agnostic_ok {
            witnesses.push(AuditWitness {
                entry: idx,
                embed: embed.as_slice().to_vec(),
                linked,
                link_ok,
                agnostic_ok,
            });
        }
    }
    debug_assert!(!agnostic || link_consistent);
    Ok(AuditVerdict {
        link_consistent,
        link_agnostic_consistent: agnostic,
        witnesses,
    })
}

/// Convenience audit that enumerates the representative set on the fly.
pub fn audit(loss: LossId, space: LabelSpace, p: &ProbVector) -> Result<AuditVerdict> {
    if !loss.is_surrogate() {
        return Err(Error::usage("audit applies to surrogate losses"));
    }
    let reps = enumerate(loss, space)?;
    audit_with_reps(&reps, p)
}

/// Region predicate selector for scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    P2,
    P3,
    P4,
    None,
}

impl Predicate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Predicate::P2 => "p2",
            Predicate::P3 => "p3",
            Predicate::P4 => "p4",
            Predicate::None => "none",
        }
    }

    pub fn evaluate(&self, p: &ProbVector, space: LabelSpace) -> Result<Option<bool>> {
        match self {
            Predicate::P2 => in_p2(p, space).map(Some),
            Predicate::P3 => in_p3(p, space).map(Some),
            Predicate::P4 => in_p4(p, space).map(Some),
            Predicate::None => Ok(None),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2" => Ok(Predicate::P2),
            "p3" => Ok(Predicate::P3),
            "p4" => Ok(Predicate::P4),
            "none" => Ok(Predicate::None),
            other => Err(Error::usage(format!(
                "unknown predicate {other:?}, expected p2|p3|p4|none"
            ))),
        }
    }
}

/// Where a region scan draws its distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanInput {
    /// Dirichlet(1, ..., 1) samples.
    Samples(usize),
    /// The lattice `{ c/r : c has nonnegative integer entries summing to r }`.
    Grid(usize),
}

/// Distributions whose adjacent sorted probabilities come closer than this
/// are flagged as near ties in the scan output.
pub const NEAR_TIE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct RegionRecord {
    pub sample_id: usize,
    pub p: Vec<f64>,
    pub predicate: Option<bool>,
    pub link_consistent: bool,
    pub link_agnostic: bool,
    pub near_tie: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub total: usize,
    pub predicate_true: usize,
    pub predicate_and_link: usize,
    pub link_consistent_count: usize,
    pub link_agnostic_count: usize,
    pub near_tie_count: usize,
    /// Fraction of predicate-true samples that audit link-consistent;
    /// absent when the predicate never fires (or is `none`).
    pub implication_rate: Option<f64>,
    pub link_rate: f64,
}

fn near_tie(p: &ProbVector) -> bool {
    let sorted = p.sorted_desc();
    sorted.windows(2).any(|w| w[0] - w[1] < NEAR_TIE_TOL)
}

fn grid_points(n: usize, resolution: usize) -> Result<Vec<ProbVector>> {
    if resolution == 0 {
        return Err(Error::domain("grid resolution must be positive"));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn rec(
        counts: &mut Vec<usize>,
        coord: usize,
        remaining: usize,
        resolution: usize,
        out: &mut Vec<ProbVector>,
    ) {
        if coord + 1 == counts.len() {
            counts[coord] = remaining;
            let p: Vec<f64> = counts
                .iter()
                .map(|&c| c as f64 / resolution as f64)
                .collect();
            out.push(ProbVector::new(p).expect("lattice points lie on the simplex"));
            return;
        }
        for c in 0..=remaining {
            counts[coord] = c;
            rec(counts, coord + 1, remaining - c, resolution, out);
        }
    }
    rec(&mut counts, 0, resolution, resolution, &mut out);
    Ok(out)
}

/// Evaluates a predicate and the audit over sampled or gridded distributions.
pub fn region_scan(
    loss: LossId,
    predicate: Predicate,
    input: ScanInput,
    space: LabelSpace,
    seed: u64,
) -> Result<(Vec<RegionRecord>, RegionSummary)> {
    if !loss.is_surrogate() {
        return Err(Error::usage("region scans audit surrogate losses"));
    }
    let reps = enumerate(loss, space)?;
    let points = match input {
        ScanInput::Samples(count) => dirichlet_sample(&vec![1.0; space.n()], seed, count.max(1))?,
        ScanInput::Grid(resolution) => grid_points(space.n(), resolution)?,
    };
    let mut records = Vec::with_capacity(points.len());
    let mut predicate_true = 0;
    let mut predicate_and_link = 0;
    let mut link_count = 0;
    let mut agnostic_count = 0;
    let mut tie_count = 0;
    for (i, p) in points.iter().enumerate() {
        let verdict = audit_with_reps(&reps, p)?;
        let pred = predicate.evaluate(p, space)?;
        let tie = near_tie(p);
        if pred == Some(true) {
            predicate_true += 1;
            if verdict.link_consistent {
                predicate_and_link += 1;
            }
        }
        if verdict.link_consistent {
            link_count += 1;
        }
        if verdict.link_agnostic_consistent {
            agnostic_count += 1;
        }
        if tie {
            tie_count += 1;
        }
        records.push(RegionRecord {
            sample_id: i,
            p: p.as_slice().to_vec(),
            predicate: pred,
            link_consistent: verdict.link_consistent,
            link_agnostic: verdict.link_agnostic_consistent,
            near_tie: tie,
        });
    }
    let summary = RegionSummary {
        total: records.len(),
        predicate_true,
        predicate_and_link,
        link_consistent_count: link_count,
        link_agnostic_count: agnostic_count,
        near_tie_count: tie_count,
        implication_rate: if predicate_true > 0 {
            Some(predicate_and_link as f64 / predicate_true as f64)
        } else {
            None
        },
        link_rate: link_count as f64 / records.len().max(1) as f64,
    };
    Ok((records, summary))
}
