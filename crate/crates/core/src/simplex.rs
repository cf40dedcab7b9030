//! Label-space bookkeeping: probability and score vectors, sorted order
//! statistics, top-k index sets, the lexicographic argmax link, and seeded
//! Dirichlet sampling.
//!
//! Labels are 1-based everywhere in the public surface; vector storage is an
//! implementation detail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{pairwise_sum, sort_indices_desc, subsets_of_size};

/// Scores closer than this count as tied when forming top-k sets.
pub const TIE_TOL: f64 = 1e-12;

/// Probability vectors may deviate from unit mass by at most this much.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// 1-based label index.
pub type Label = usize;

/// The pair (n, k): n labels, reports are size-k label sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    n: usize,
    k: usize,
}

impl LabelSpace {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("need at least 2 labels, got n={n}")));
        }
        if k < 1 || k >= n {
            return Err(Error::domain(format!("need 1 <= k < n, got k={k}, n={n}")));
        }
        Ok(LabelSpace { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// All labels, `1..=n`.
    pub fn labels(&self) -> impl Iterator<Item = Label> {
        1..=self.n
    }

    pub(crate) fn check_label(&self, y: Label) -> Result<()> {
        if y < 1 || y > self.n {
            Err(Error::range(format!("label {y} outside 1..={}", self.n)))
        } else {
            Ok(())
        }
    }
}

/// A point of the probability simplex over `n` labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and unit mass (within [`SIMPLEX_TOL`]).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::domain("probability vector needs at least 2 entries"));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("probability vector has non-finite entries"));
        }
        if let Some(x) = p.iter().find(|&&x| x < 0.0) {
            return Err(Error::domain(format!("negative probability {x}")));
        }
        let sum = pairwise_sum(&p);
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!(
                "probabilities sum to {sum}, expected 1 within {SIMPLEX_TOL:e}"
            )));
        }
        Ok(ProbVector(p))
    }

    /// Accepts a vector whose mass deviates from 1 by at most `tol` and
    /// rescales it onto the simplex. Returns whether rescaling changed it
    /// beyond [`SIMPLEX_TOL`].
    pub fn normalized(p: Vec<f64>, tol: f64) -> Result<(Self, bool)> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("probability vector has non-finite entries"));
        }
        let sum = pairwise_sum(&p);
        if (sum - 1.0).abs() > tol {
            return Err(Error::domain(format!(
                "probabilities sum to {sum}, outside renormalization tolerance {tol:e}"
            )));
        }
        let adjusted = (sum - 1.0).abs() > SIMPLEX_TOL;
        let scaled: Vec<f64> = p.iter().map(|x| x / sum).collect();
        Ok((ProbVector::new(scaled)?, adjusted))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Probability of a 1-based label.
    pub fn prob(&self, y: Label) -> f64 {
        self.0[y - 1]
    }

    /// View the probabilities as a score vector (used for the top-k property).
    pub fn as_scores(&self) -> ScoreVector {
        ScoreVector(self.0.clone())
    }

    /// Sum of the `m` largest probabilities; `m = 0` gives 0.
    pub fn sigma(&self, m: usize) -> f64 {
        debug_assert!(m <= self.0.len());
        let mut sorted = self.0.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        pairwise_sum(&sorted[..m])
    }

    /// Probabilities sorted descending.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut sorted = self.0.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        sorted
    }
}

/// A surrogate report: a real score per label.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::domain("score vector must be non-empty"));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("score vector has non-finite entries"));
        }
        Ok(ScoreVector(u))
    }

    pub fn zeros(n: usize) -> Self {
        ScoreVector(vec![0.0; n])
    }

    /// Indicator vector of a label set.
    pub fn indicator(members: &[Label], n: usize) -> Self {
        let mut u = vec![0.0; n];
        for &y in members {
            u[y - 1] = 1.0;
        }
        ScoreVector(u)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Score of a 1-based label.
    pub fn score(&self, y: Label) -> f64 {
        self.0[y - 1]
    }

    /// Lexicographic comparison on coordinates.
    pub fn lex_cmp(&self, other: &ScoreVector) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.partial_cmp(b).expect("finite") {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// A size-k label set, members sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct TopKSet(Vec<Label>);

impl TopKSet {
    pub fn new(mut members: Vec<Label>, space: LabelSpace) -> Result<Self> {
        members.sort_unstable();
        if members.len() != space.k() {
            return Err(Error::domain(format!(
                "top-k set has {} members, expected k={}",
                members.len(),
                space.k()
            )));
        }
        for &y in &members {
            space.check_label(y)?;
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("top-k set has repeated labels"));
        }
        Ok(TopKSet(members))
    }

    pub fn members(&self) -> &[Label] {
        &self.0
    }

    pub fn contains(&self, y: Label) -> bool {
        self.0.binary_search(&y).is_ok()
    }
}

/// Result of sorting a score vector: labels by descending score (ties by
/// ascending label) together with the sorted values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SortedDesc {
    pub order: Vec<Label>,
    pub values: Vec<f64>,
}

/// Stable descending sort of the scores.
pub fn sorted_desc(u: &ScoreVector) -> SortedDesc {
    let idx = sort_indices_desc(u.as_slice());
    let values = idx.iter().map(|&i| u.as_slice()[i]).collect();
    let order = idx.into_iter().map(|i| i + 1).collect();
    SortedDesc { order, values }
}

/// Sum of the `m` largest scores, `1 <= m <= n`.
pub fn sigma(u: &ScoreVector, m: usize) -> Result<f64> {
    if m < 1 || m > u.len() {
        return Err(Error::range(format!(
            "sigma index m={m} outside 1..={}",
            u.len()
        )));
    }
    Ok(crate::util::top_m_sum(u.as_slice(), m))
}

/// Splits coordinates into those strictly above the k-th largest value (within
/// [`TIE_TOL`]) and those tied with it. Every top-k set is the forced block
/// plus a completion from the tied block.
fn forced_and_tied(vals: &[f64], k: usize) -> (Vec<usize>, Vec<usize>) {
    let order = sort_indices_desc(vals);
    let vk = vals[order[k - 1]];
    let forced: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > vk + TIE_TOL)
        .collect();
    let tied: Vec<usize> = (0..vals.len())
        .filter(|&i| (vals[i] - vk).abs() <= TIE_TOL)
        .collect();
    debug_assert!(forced.len() < k && forced.len() + tied.len() >= k);
    (forced, tied)
}

/// All size-k sets maximizing the summed score, sorted lexicographically.
///
/// More than one set comes back exactly when the k-th and (k+1)-th largest
/// scores tie within [`TIE_TOL`].
pub fn top_k_sets(u: &ScoreVector, space: LabelSpace) -> Result<Vec<TopKSet>> {
    if u.len() != space.n() {
        return Err(Error::usage(format!(
            "score vector length {} does not match n={}",
            u.len(),
            space.n()
        )));
    }
    let (forced, tied) = forced_and_tied(u.as_slice(), space.k());
    let need = space.k() - forced.len();
    let mut out = Vec::new();
    for completion in subsets_of_size(&tied, need) {
        let mut members: Vec<Label> = forced.iter().map(|&i| i + 1).collect();
        members.extend(completion.into_iter().map(|i| i + 1));
        out.push(TopKSet::new(members, space)?);
    }
    out.sort();
    Ok(out)
}

/// The lexicographically smallest top-k set: the argmax link with
/// deterministic tie-breaking toward smaller labels.
pub fn argmax_link(u: &ScoreVector, space: LabelSpace) -> Result<TopKSet> {
    if u.len() != space.n() {
        return Err(Error::usage(format!(
            "score vector length {} does not match n={}",
            u.len(),
            space.n()
        )));
    }
    let (forced, tied) = forced_and_tied(u.as_slice(), space.k());
    let need = space.k() - forced.len();
    let mut members: Vec<Label> = forced.iter().map(|&i| i + 1).collect();
    members.extend(tied[..need].iter().map(|&i| i + 1));
    TopKSet::new(members, space)
}

/// Seeded Dirichlet sampler over the simplex.
///
/// Samples are independent unit-scale gamma variates with shapes `alpha`,
/// normalized. Carries its own RNG stream; do not share one instance across
/// concurrent callers.
pub struct DirichletSampler {
    gammas: Vec<Gamma<f64>>,
    rng: ChaCha12Rng,
}

impl DirichletSampler {
    pub fn new(alpha: &[f64], seed: u64) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::domain("Dirichlet needs at least 2 shape parameters"));
        }
        let mut gammas = Vec::with_capacity(alpha.len());
        for &a in alpha {
            if a <= 0.0 || !a.is_finite() {
                return Err(Error::domain(format!(
                    "Dirichlet shape must be positive, got {a}"
                )));
            }
            gammas
                .push(Gamma::new(a, 1.0).map_err(|e| Error::domain(format!("gamma setup: {e}")))?);
        }
        Ok(DirichletSampler {
            gammas,
            rng: ChaCha12Rng::seed_from_u64(seed),
        })
    }

    pub fn sample_one(&mut self) -> ProbVector {
        loop {
            let draws: Vec<f64> = self
                .gammas
                .iter()
                .map(|g| g.sample(&mut self.rng))
                .collect();
            let total = pairwise_sum(&draws);
            // Underflow to zero total is possible in principle for tiny shapes.
            if total > 0.0 && total.is_finite() {
                let p: Vec<f64> = draws.iter().map(|x| x / total).collect();
                if let Ok(pv) = ProbVector::new(p) {
                    return pv;
                }
            }
        }
    }

    /// Draw a label from `p` using this sampler's stream.
    pub fn sample_label(&mut self, p: &ProbVector) -> Label {
        let x: f64 = self.rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        for (i, &pi) in p.as_slice().iter().enumerate() {
            acc += pi;
            if x < acc {
                return i + 1;
            }
        }
        p.len()
    }
}

/// `count` Dirichlet draws, deterministic in `(alpha, seed, count)`.
pub fn dirichlet_sample(alpha: &[f64], seed: u64, count: usize) -> Result<Vec<ProbVector>> {
    if count < 1 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let mut sampler = DirichletSampler::new(alpha, seed)?;
    Ok((0..count).map(|_| sampler.sample_one()).collect())
}
