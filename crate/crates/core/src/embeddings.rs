//! Finite representative sets for each surrogate, bijections to their
//! discrete reparameterizations, the embedded discrete losses, and
//! verification that the surrogates restrict to those losses.

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::losses::{self, LossId};
use crate::simplex::{Label, LabelSpace, ProbVector, ScoreVector, TopKSet};
use crate::util::{pairwise_sum, subsets_of_size};

/// Enumerations are closed-form but combinatorial; keep them at desk scale.
pub const MAX_ENUM_LABELS: usize = 12;

fn check_enum_scale(space: LabelSpace) -> Result<()> {
    if space.n() > MAX_ENUM_LABELS {
        return Err(Error::domain(format!(
            "representative-set enumeration is bounded to n <= {MAX_ENUM_LABELS}, got n={}",
            space.n()
        )));
    }
    Ok(())
}

/// Report for the loss embedded by the clamped top-k hinge: a set `H` of
/// high-confidence labels and a disjoint set `M` of medium-confidence labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HMReport {
    high: Vec<Label>,
    medium: Vec<Label>,
}

impl HMReport {
    pub fn new(mut high: Vec<Label>, mut medium: Vec<Label>, space: LabelSpace) -> Result<Self> {
        high.sort_unstable();
        medium.sort_unstable();
        for &y in high.iter().chain(medium.iter()) {
            space.check_label(y)?;
        }
        if high.windows(2).any(|w| w[0] == w[1]) || medium.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("repeated labels in H or M"));
        }
        if high.iter().any(|y| medium.binary_search(y).is_ok()) {
            return Err(Error::domain("H and M must be disjoint"));
        }
        if high.len() >= space.k() {
            return Err(Error::Invariant(format!(
                "|H|={} must be strictly below k={}",
                high.len(),
                space.k()
            )));
        }
        if high.len() + medium.len() > space.k() {
            return Err(Error::Invariant(format!(
                "|H|+|M|={} must be at most k={}",
                high.len() + medium.len(),
                space.k()
            )));
        }
        Ok(HMReport { high, medium })
    }

    pub fn high(&self) -> &[Label] {
        &self.high
    }

    pub fn medium(&self) -> &[Label] {
        &self.medium
    }

    /// Level shared by medium labels in the discrete loss:
    /// `(|H| + |M| - 1) / (k - |H|)`.
    pub fn medium_level(&self, space: LabelSpace) -> f64 {
        (self.high.len() as f64 + self.medium.len() as f64 - 1.0)
            / (space.k() as f64 - self.high.len() as f64)
    }

    /// Embedded score vector: high labels at `(|M|+k-1)/(k-|H|)`, medium at 1.
    pub fn embed(&self, space: LabelSpace) -> ScoreVector {
        let c = (self.medium.len() as f64 + space.k() as f64 - 1.0)
            / (space.k() as f64 - self.high.len() as f64);
        let mut u = vec![0.0; space.n()];
        for &y in &self.high {
            u[y - 1] = c;
        }
        for &y in &self.medium {
            u[y - 1] = 1.0;
        }
        ScoreVector::new(u).expect("finite by construction")
    }
}

/// Report for the loss embedded by the per-entry top-k hinge: an ordered
/// partition `(Q_0, ..., Q_s)`; labels in `Q_j` sit at confidence level `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderedPartition {
    blocks: Vec<Vec<Label>>,
}

impl OrderedPartition {
    pub fn new(mut blocks: Vec<Vec<Label>>, space: LabelSpace) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::domain(
                "ordered partition needs at least the 0 block",
            ));
        }
        let s = blocks.len() - 1;
        if s > space.k() {
            return Err(Error::domain(format!(
                "partition has {s} positive levels, at most k={} allowed",
                space.k()
            )));
        }
        let mut seen = vec![false; space.n()];
        let mut positive = 0usize;
        for (level, block) in blocks.iter_mut().enumerate() {
            block.sort_unstable();
            if level > 0 && block.is_empty() {
                return Err(Error::domain(format!("block {level} is empty")));
            }
            for &y in block.iter() {
                space.check_label(y)?;
                if seen[y - 1] {
                    return Err(Error::domain(format!("label {y} appears in two blocks")));
                }
                seen[y - 1] = true;
            }
            if level > 0 {
                positive += block.len();
            }
        }
        if positive > space.k() {
            return Err(Error::domain(format!(
                "{positive} positively scored labels, at most k={} allowed",
                space.k()
            )));
        }
        if !seen.iter().all(|&b| b) {
            return Err(Error::domain("blocks must cover every label"));
        }
        Ok(OrderedPartition { blocks })
    }

    /// Builds the partition of a vector with entries in `{0..=k}`:
    /// label `i` goes to block `u_i`.
    pub fn from_scores(u: &ScoreVector, space: LabelSpace) -> Result<Self> {
        let mut max_level = 0usize;
        let mut levels = Vec::with_capacity(u.len());
        for &x in u.as_slice() {
            if x < 0.0 || x.fract() != 0.0 || x > space.k() as f64 {
                return Err(Error::domain(format!(
                    "score {x} is not an integer level in 0..={}",
                    space.k()
                )));
            }
            let level = x as usize;
            max_level = max_level.max(level);
            levels.push(level);
        }
        let mut blocks = vec![Vec::new(); max_level + 1];
        for (i, &level) in levels.iter().enumerate() {
            blocks[level].push(i + 1);
        }
        OrderedPartition::new(blocks, space)
    }

    pub fn blocks(&self) -> &[Vec<Label>] {
        &self.blocks
    }

    /// Highest confidence level `s`.
    pub fn levels(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Confidence level of a label.
    pub fn level_of(&self, y: Label) -> usize {
        self.blocks
            .iter()
            .position(|b| b.binary_search(&y).is_ok())
            .expect("partition covers every label")
    }

    /// Inverse of [`OrderedPartition::from_scores`].
    pub fn embed(&self, space: LabelSpace) -> ScoreVector {
        let mut u = vec![0.0; space.n()];
        for (level, block) in self.blocks.iter().enumerate() {
            for &y in block {
                u[y - 1] = level as f64;
            }
        }
        ScoreVector::new(u).expect("finite by construction")
    }
}

/// Report for the loss embedded by the leave-one-out hinge: any label set of
/// size at most k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubsetReport {
    members: Vec<Label>,
}

impl SubsetReport {
    pub fn new(mut members: Vec<Label>, space: LabelSpace) -> Result<Self> {
        members.sort_unstable();
        if members.len() > space.k() {
            return Err(Error::domain(format!(
                "subset report has {} members, at most k={} allowed",
                members.len(),
                space.k()
            )));
        }
        for &y in &members {
            space.check_label(y)?;
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("subset report has repeated labels"));
        }
        Ok(SubsetReport { members })
    }

    pub fn members(&self) -> &[Label] {
        &self.members
    }

    pub fn contains(&self, y: Label) -> bool {
        self.members.binary_search(&y).is_ok()
    }

    /// Embedded score vector: members at `k/(k+1-|T|)`, the rest at 0.
    pub fn embed(&self, space: LabelSpace) -> ScoreVector {
        let c = space.k() as f64 / (space.k() as f64 + 1.0 - self.members.len() as f64);
        let mut u = vec![0.0; space.n()];
        for &y in &self.members {
            u[y - 1] = c;
        }
        ScoreVector::new(u).expect("finite by construction")
    }
}

/// A discrete report in any of the four reparameterizations.
#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteReport {
    Hm(HMReport),
    Partition(OrderedPartition),
    Subset(SubsetReport),
    TopK(TopKSet),
}

impl Serialize for DiscreteReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        match self {
            DiscreteReport::Hm(r) => {
                map.serialize_entry("type", "hm")?;
                map.serialize_entry("high", r.high())?;
                map.serialize_entry("medium", r.medium())?;
            }
            DiscreteReport::Partition(q) => {
                map.serialize_entry("type", "partition")?;
                map.serialize_entry("blocks", q.blocks())?;
            }
            DiscreteReport::Subset(t) => {
                map.serialize_entry("type", "subset")?;
                map.serialize_entry("members", t.members())?;
            }
            DiscreteReport::TopK(s) => {
                map.serialize_entry("type", "topk")?;
                map.serialize_entry("members", s.members())?;
            }
        }
        map.end()
    }
}

/// One embedded point: the discrete reports mapping to it (more than one when
/// distinct reports share an embedding), the score vector, and the per-label
/// discrete loss row.
#[derive(Debug, Clone)]
pub struct RepEntry {
    pub reports: Vec<DiscreteReport>,
    pub embed: ScoreVector,
    pub rows: Vec<f64>,
}

impl RepEntry {
    pub fn report(&self) -> &DiscreteReport {
        &self.reports[0]
    }
}

impl Serialize for RepEntry {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("RepEntry", 3)?;
        st.serialize_field("report", self.report())?;
        st.serialize_field("embed", &self.embed)?;
        st.serialize_field("rows", &self.rows)?;
        st.end()
    }
}

/// A finite representative set for one surrogate: minimizing expected loss
/// over these points matches minimizing over all score vectors.
#[derive(Debug, Clone, Serialize)]
pub struct RepresentativeSet {
    pub loss: LossId,
    pub space: LabelSpace,
    pub entries: Vec<RepEntry>,
}

impl RepresentativeSet {
    /// Expected discrete loss of every entry under `p`.
    pub fn expected_rows(&self, p: &ProbVector) -> Vec<f64> {
        let ps = p.as_slice();
        self.entries
            .iter()
            .map(|e| {
                let terms: Vec<f64> = e.rows.iter().zip(ps.iter()).map(|(r, q)| r * q).collect();
                pairwise_sum(&terms)
            })
            .collect()
    }
}

/// Collects `(report, embed)` pairs into a deduplicated representative set,
/// asserting that reports sharing an embedding share a loss row.
fn build_set(
    loss: LossId,
    space: LabelSpace,
    items: Vec<(DiscreteReport, ScoreVector, Vec<f64>)>,
) -> Result<RepresentativeSet> {
    let mut entries: Vec<RepEntry> = Vec::new();
    let mut index: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for (report, embed, rows) in items {
        let key: Vec<u64> = embed.as_slice().iter().map(|x| x.to_bits()).collect();
        match index.get(&key) {
            Some(&at) => {
                let existing = &mut entries[at];
                for (a, b) in existing.rows.iter().zip(rows.iter()) {
                    if (a - b).abs() > 1e-12 {
                        return Err(Error::Invariant(format!(
                            "duplicate embedding {:?} with diverging loss rows ({a} vs {b})",
                            embed.as_slice()
                        )));
                    }
                }
                existing.reports.push(report);
            }
            None => {
                index.insert(key, entries.len());
                entries.push(RepEntry {
                    reports: vec![report],
                    embed,
                    rows,
                });
            }
        }
    }
    Ok(RepresentativeSet {
        loss,
        space,
        entries,
    })
}

/// Discrete loss embedded by the clamped top-k hinge: 0 on `H`, the medium
/// level on `M`, the medium level plus `(k+1)/k` elsewhere.
pub fn ell2_hat(r: &HMReport, y: Label, space: LabelSpace) -> Result<f64> {
    space.check_label(y)?;
    if r.high().len() >= space.k() {
        return Err(Error::Invariant("|H| must be strictly below k".into()));
    }
    if r.high().binary_search(&y).is_ok() {
        return Ok(0.0);
    }
    let level = r.medium_level(space);
    if r.medium().binary_search(&y).is_ok() {
        Ok(level)
    } else {
        Ok(level + (space.k() as f64 + 1.0) / space.k() as f64)
    }
}

/// Discrete loss embedded by the per-entry top-k hinge, defined as the
/// surrogate's value at the embedded point.
///
/// A closed form exists but only agrees when exactly k labels carry positive
/// levels; see [`ell3_hat_closed_form`].
pub fn ell3_hat(q: &OrderedPartition, y: Label, space: LabelSpace) -> Result<f64> {
    losses::loss_l3(&q.embed(space), y, space)
}

/// Closed form for the partition loss. Valid whenever
/// `|Q_1 ∪ ... ∪ Q_s| = k`; outside that slice it undercounts the zero-level
/// slots of the embedded hinge and disagrees with [`ell3_hat`].
pub fn ell3_hat_closed_form(q: &OrderedPartition, y: Label, space: LabelSpace) -> Result<f64> {
    space.check_label(y)?;
    let k = space.k() as f64;
    let j = q.level_of(y);
    let blocks = q.blocks();
    if j > 0 {
        let mut acc = blocks[j].len() as f64 - 1.0;
        for (i, block) in blocks.iter().enumerate().skip(j + 1) {
            acc += block.len() as f64 * (i as f64 - j as f64 + 1.0);
        }
        Ok(acc / k)
    } else {
        let mut acc = 0.0;
        for (i, block) in blocks.iter().enumerate().skip(1) {
            acc += block.len() as f64 * (i as f64 + 1.0);
        }
        Ok(acc / k)
    }
}

/// Discrete loss embedded by the leave-one-out hinge: 0 on the reported set,
/// `(k+1)/(k+1-|T|)` off it.
pub fn ell4_hat(t: &SubsetReport, y: Label, space: LabelSpace) -> Result<f64> {
    space.check_label(y)?;
    if t.contains(y) {
        Ok(0.0)
    } else {
        Ok((space.k() as f64 + 1.0) / (space.k() as f64 + 1.0 - t.members().len() as f64))
    }
}

fn rows_for<F: Fn(Label) -> Result<f64>>(space: LabelSpace, f: F) -> Result<Vec<f64>> {
    space.labels().map(f).collect()
}

/// All (H, M) reports with their embedded vertices.
///
/// Reports whose embeddings coincide (exactly the `|H ∪ M| = 1` pairs) are
/// merged after checking their loss rows agree.
pub fn enumerate_r2(space: LabelSpace) -> Result<RepresentativeSet> {
    check_enum_scale(space)?;
    let labels: Vec<Label> = space.labels().collect();
    let mut items = Vec::new();
    for h_size in 0..space.k() {
        for high in subsets_of_size(&labels, h_size) {
            let rest: Vec<Label> = labels
                .iter()
                .copied()
                .filter(|y| !high.contains(y))
                .collect();
            for m_size in 0..=(space.k() - h_size) {
                for medium in subsets_of_size(&rest, m_size) {
                    let report = HMReport::new(high.clone(), medium, space)?;
                    let embed = report.embed(space);
                    let rows = rows_for(space, |y| ell2_hat(&report, y, space))?;
                    items.push((DiscreteReport::Hm(report), embed, rows));
                }
            }
        }
    }
    build_set(LossId::L2, space, items)
}

/// All integer score vectors with entries in `{0..=k}`, at most k nonzero
/// entries, and no sorted gap above 1, paired with their ordered partitions.
pub fn enumerate_r3(space: LabelSpace) -> Result<RepresentativeSet> {
    check_enum_scale(space)?;
    let labels: Vec<Label> = space.labels().collect();

    // Level-size profiles: every positive level 1..=s nonempty, total <= k.
    let mut profiles: Vec<Vec<usize>> = Vec::new();
    fn extend(current: &mut Vec<usize>, budget: usize, out: &mut Vec<Vec<usize>>) {
        out.push(current.clone());
        for c in 1..=budget {
            current.push(c);
            extend(current, budget - c, out);
            current.pop();
        }
    }
    extend(&mut Vec::new(), space.k(), &mut profiles);

    let mut items = Vec::new();
    for profile in profiles {
        // Assign labels to levels s, s-1, ..., 1; whatever remains is level 0.
        let mut assignments: Vec<Vec<Vec<Label>>> = vec![Vec::new()];
        for (level_idx, &size) in profile.iter().enumerate().rev() {
            let _ = level_idx;
            let mut next = Vec::new();
            for partial in &assignments {
                let used: Vec<Label> = partial.iter().flatten().copied().collect();
                let available: Vec<Label> = labels
                    .iter()
                    .copied()
                    .filter(|y| !used.contains(y))
                    .collect();
                for chosen in subsets_of_size(&available, size) {
                    let mut extended = partial.clone();
                    extended.push(chosen);
                    next.push(extended);
                }
            }
            assignments = next;
        }
        for assignment in assignments {
            // assignment[j] holds the labels of level s-j.
            let s = profile.len();
            let mut blocks: Vec<Vec<Label>> = vec![Vec::new(); s + 1];
            for (j, block) in assignment.into_iter().enumerate() {
                blocks[s - j] = block;
            }
            let mut in_positive = vec![false; space.n()];
            for block in blocks.iter().skip(1) {
                for &y in block {
                    in_positive[y - 1] = true;
                }
            }
            blocks[0] = labels
                .iter()
                .copied()
                .filter(|&y| !in_positive[y - 1])
                .collect();
            let report = OrderedPartition::new(blocks, space)?;
            let embed = report.embed(space);
            let rows = rows_for(space, |y| ell3_hat(&report, y, space))?;
            items.push((DiscreteReport::Partition(report), embed, rows));
        }
    }
    build_set(LossId::L3, space, items)
}

/// All subsets of size at most k with their embedded vertices.
pub fn enumerate_r4(space: LabelSpace) -> Result<RepresentativeSet> {
    check_enum_scale(space)?;
    let labels: Vec<Label> = space.labels().collect();
    let mut items = Vec::new();
    for size in 0..=space.k() {
        for members in subsets_of_size(&labels, size) {
            let report = SubsetReport::new(members, space)?;
            let embed = report.embed(space);
            let rows = rows_for(space, |y| ell4_hat(&report, y, space))?;
            items.push((DiscreteReport::Subset(report), embed, rows));
        }
    }
    build_set(LossId::L4, space, items)
}

/// All size-k indicator vectors, the representative set of the consistent
/// surrogate.
pub fn enumerate_rk(space: LabelSpace) -> Result<RepresentativeSet> {
    check_enum_scale(space)?;
    let labels: Vec<Label> = space.labels().collect();
    let mut items = Vec::new();
    for members in subsets_of_size(&labels, space.k()) {
        let set = TopKSet::new(members, space)?;
        let embed = ScoreVector::indicator(set.members(), space.n());
        let rows = rows_for(space, |y| losses::topk_loss(&set, y, space))?;
        items.push((DiscreteReport::TopK(set), embed, rows));
    }
    build_set(LossId::Lk, space, items)
}

/// Builds the representative set of any surrogate.
pub fn enumerate(loss: LossId, space: LabelSpace) -> Result<RepresentativeSet> {
    match loss {
        LossId::L2 => enumerate_r2(space),
        LossId::L3 => enumerate_r3(space),
        LossId::L4 => enumerate_r4(space),
        LossId::Lk => enumerate_rk(space),
        LossId::Topk => Err(Error::usage(
            "topk is the target loss; it has no surrogate representative set",
        )),
    }
}

/// A loss-row disagreement between surrogate and discrete loss.
#[derive(Debug, Clone, Serialize)]
pub struct LossMismatch {
    pub entry: usize,
    pub label: Label,
    pub discrete: f64,
    pub surrogate: f64,
}

/// Outcome of checking both embedding conditions.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    /// Largest `|surrogate(embed, y) - discrete(report, y)|` over all entries.
    pub max_loss_deviation: f64,
    pub loss_mismatches: Vec<LossMismatch>,
    /// Indices of sampled distributions whose discrete and surrogate argmin
    /// sets (over the embedded points) differ.
    pub argmin_mismatches: Vec<usize>,
    pub samples_checked: usize,
}

impl EmbeddingReport {
    pub fn pass(&self) -> bool {
        self.loss_mismatches.is_empty() && self.argmin_mismatches.is_empty()
    }
}

const ROW_TOL: f64 = 1e-12;
const ARGMIN_TOL: f64 = 1e-9;

fn argmin_indices(values: &[f64], tol: f64) -> Vec<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v <= min + tol)
        .map(|(i, _)| i)
        .collect()
}

/// Checks the two embedding conditions on a representative set:
/// (i) the surrogate reproduces the discrete loss rows at the embedded
/// points; (ii) for each sampled distribution, the discrete argmin entries
/// are exactly the surrogate argmin entries.
pub fn verify_embedding(
    reps: &RepresentativeSet,
    p_samples: &[ProbVector],
) -> Result<EmbeddingReport> {
    let space = reps.space;
    let mut max_dev: f64 = 0.0;
    let mut loss_mismatches = Vec::new();
    for (idx, entry) in reps.entries.iter().enumerate() {
        for y in space.labels() {
            let surrogate = losses::surrogate_loss(reps.loss, &entry.embed, y, space)?;
            let discrete = entry.rows[y - 1];
            let dev = (surrogate - discrete).abs();
            max_dev = max_dev.max(dev);
            if dev > ROW_TOL {
                loss_mismatches.push(LossMismatch {
                    entry: idx,
                    label: y,
                    discrete,
                    surrogate,
                });
            }
        }
    }

    let mut argmin_mismatches = Vec::new();
    for (pi, p) in p_samples.iter().enumerate() {
        let discrete = reps.expected_rows(p);
        let mut surrogate = Vec::with_capacity(reps.entries.len());
        for entry in &reps.entries {
            surrogate.push(losses::expected_loss(
                reps.loss,
                &losses::Report::Score(entry.embed.clone()),
                p,
                space,
            )?);
        }
        if argmin_indices(&discrete, ARGMIN_TOL) != argmin_indices(&surrogate, ARGMIN_TOL) {
            argmin_mismatches.push(pi);
        }
    }

    Ok(EmbeddingReport {
        max_loss_deviation: max_dev,
        loss_mismatches,
        argmin_mismatches,
        samples_checked: p_samples.len(),
    })
}
