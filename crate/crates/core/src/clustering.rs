//! Seeding, the cosine objective, the dense reference iteration and the run
//! driver shared by every variant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counters::{OpCounters, Volumes};
use crate::data::{Dataset, InvertedFile, SparseVector};
use crate::means::{Assignment, DenseMatrix, MeanRepr, MeanSet};
use crate::rng;
use crate::variants::{self, Scratch};
use crate::{Error, Result};

/// The clustering algorithms. All of them produce the same clustering from the
/// same initial means; they differ in data layout and cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Variant {
    /// Dense reference: full `D`-length dot products, dense update.
    Ref,
    /// Inverted-file sparse means.
    Ivf,
    /// Dense `k × D` means, no zero skipping.
    Mfn,
    /// Dense inverted `D × k` means, no zero skipping.
    Ifn,
    /// Dense inverted `D × k` means with zero skipping.
    Ifb,
    /// Sparse means, two-way merge per pair.
    Twm,
    /// Inverted objects, sparse means.
    Ivfd,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Ref,
        Variant::Ivf,
        Variant::Mfn,
        Variant::Ifn,
        Variant::Ifb,
        Variant::Twm,
        Variant::Ivfd,
    ];

    pub fn repr(self) -> MeanRepr {
        match self {
            Variant::Ref | Variant::Mfn => MeanRepr::Dense,
            Variant::Ifn | Variant::Ifb => MeanRepr::DenseInverted,
            Variant::Ivf => MeanRepr::SparseInverted,
            Variant::Twm | Variant::Ivfd => MeanRepr::SparseStandard,
        }
    }

    /// Whether the run keeps an inverted copy of the objects as well.
    pub fn holds_inverted_objects(self) -> bool {
        self == Variant::Ivfd
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ref => "REF",
            Variant::Ivf => "IVF",
            Variant::Mfn => "MFN",
            Variant::Ifn => "IFN",
            Variant::Ifb => "IFB",
            Variant::Twm => "TWM",
            Variant::Ivfd => "IVFD",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::domain(format!("unknown variant {s:?}")))
    }
}

/// Indices (0-based) of `k` distinct objects drawn with the seeded generator.
pub fn init_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(rng::sample_indices(&mut rng::seeded(seed), n, k))
}

/// `k` distinct objects as initial means, laid out as `repr`.
pub fn init_means(ds: &Dataset, k: usize, seed: u64, repr: MeanRepr) -> Result<MeanSet> {
    let idx = init_indices(ds.len(), k, seed)?;
    let means = idx.iter().map(|&i| ds.vector(i).clone()).collect();
    MeanSet::from_sparse(means, ds.dim(), repr)
}

/// Σ with Neumaier compensation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `Σ_j Σ_{x_i ∈ C_j} x_i · μ_j`.
pub fn objective_cosine(ds: &Dataset, asg: &Assignment, means: &MeanSet) -> Result<f64> {
    if asg.labels().len() != ds.len() {
        return Err(Error::domain(format!(
            "assignment covers {} objects, dataset has {}",
            asg.labels().len(),
            ds.len()
        )));
    }
    if asg.k() != means.k() {
        return Err(Error::domain(format!(
            "assignment uses {} clusters but {} means are available",
            asg.k(),
            means.k()
        )));
    }
    Ok(compensated_sum(
        ds.vectors()
            .iter()
            .zip(asg.labels())
            .map(|(x, &a)| means.dot(a as usize - 1, x)),
    ))
}

/// Per-object gap between the best and second-best similarity (`+∞` when
/// `k = 1`).
pub fn similarity_gaps(ds: &Dataset, means: &MeanSet) -> Vec<f64> {
    let k = means.k();
    ds.vectors()
        .iter()
        .map(|x| {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 0..k {
                let r = means.dot(j, x);
                if r > first {
                    second = first;
                    first = r;
                } else if r > second {
                    second = r;
                }
            }
            if k < 2 {
                f64::INFINITY
            } else {
                first - second
            }
        })
        .collect()
}

/// Dense reference assignment: every similarity is a full `D`-term dot
/// product between the expanded object and a mean row.
fn reference_assign(
    ds: &Dataset,
    means: &DenseMatrix,
    buf: &mut Vec<f64>,
    counters: &mut OpCounters,
) -> Result<Assignment> {
    let (k, dim) = (means.rows(), means.cols());
    if dim != ds.dim() {
        return Err(Error::domain("reference means have the wrong dimension"));
    }
    buf.clear();
    buf.resize(dim, 0.0);
    let mut labels = Vec::with_capacity(ds.len());
    let mut rho = vec![0.0; k];
    for x in ds.vectors() {
        for (t, v) in x.iter() {
            buf[t as usize - 1] = v;
        }
        for (j, r) in rho.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (a, b) in buf.iter().zip(means.row(j)) {
                acc += a * b;
            }
            *r = acc;
        }
        for &t in x.terms() {
            buf[t as usize - 1] = 0.0;
        }
        labels.push(variants::argmax(&rho));
    }
    let n = (ds.len() * k * dim) as u64;
    counters.mults += n;
    counters.adds += n;
    counters.inner_entries += n;
    Assignment::from_labels(labels, k)
}

/// Dense reference update: sum member vectors per cluster, divide by the
/// cluster size, divide by the L2 norm. Empty clusters keep `prev`.
fn reference_update(ds: &Dataset, asg: &Assignment, prev: &DenseMatrix) -> DenseMatrix {
    let (k, dim) = (asg.k(), ds.dim());
    let mut sums = DenseMatrix::zeros(k, dim);
    let mut dense = vec![0.0; dim];
    for (i, x) in ds.vectors().iter().enumerate() {
        for (t, v) in x.iter() {
            dense[t as usize - 1] = v;
        }
        let row = sums.row_mut(asg.label(i) as usize - 1);
        for (w, d) in row.iter_mut().zip(&dense) {
            *w += d;
        }
        for &t in x.terms() {
            dense[t as usize - 1] = 0.0;
        }
    }
    for j in 0..k {
        let size = asg.sizes()[j];
        let row = sums.row_mut(j);
        if size == 0 {
            row.copy_from_slice(prev.row(j));
            continue;
        }
        for w in row.iter_mut() {
            *w /= size as f64;
        }
        let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            row.copy_from_slice(prev.row(j));
            continue;
        }
        for w in row.iter_mut() {
            *w /= norm;
        }
    }
    sums
}

/// One full spherical k-means iteration on dense means: assignment by
/// maximum cosine, then normalized-centroid update.
pub fn reference_iterate(ds: &Dataset, means: &MeanSet) -> Result<(Assignment, MeanSet)> {
    let MeanSet::Dense(m) = means else {
        return Err(Error::domain("reference iteration expects dense means"));
    };
    let asg = reference_assign(ds, m, &mut Vec::new(), &mut OpCounters::default())?;
    let next = reference_update(ds, &asg, m);
    Ok((asg, MeanSet::Dense(next)))
}

/// Run parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Optional stop once the objective improves by no more than this.
    pub epsilon: Option<f64>,
}

impl RunConfig {
    pub fn new(k: usize, seed: u64, max_iter: usize) -> Self {
        Self {
            k,
            seed,
            max_iter,
            epsilon: None,
        }
    }
}

/// What one iteration did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Cosine objective of this iteration's assignment against the updated
    /// means.
    pub objective: f64,
    #[serde(flatten)]
    pub counters: OpCounters,
    /// FNV-1a over the labels.
    pub assignment_digest: u64,
    /// Objects whose label changed; absent on the first iteration.
    pub changed: Option<usize>,
    pub empty_clusters: usize,
    /// `Σ_j (ntm)_j` of the updated means.
    pub mean_terms: u64,
    /// `k · Σ (nt)_i` for the means used by this assignment.
    pub ifn_volume: u64,
    /// `Σ (no)_p (nc)_p` for the means used by this assignment.
    pub ivf_volume: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    AssignmentUnchanged,
    ObjectiveDelta,
    MaxIter,
}

/// Outcome of [`run`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub k: usize,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub sum_nnz: u64,
    pub iterations: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub final_labels: Vec<u32>,
    #[serde(skip)]
    pub final_means: Option<MeanSet>,
}

impl RunResult {
    pub fn final_assignment(&self) -> Result<Assignment> {
        Assignment::from_labels(self.final_labels.clone(), self.k)
    }

    pub fn digests(&self) -> Vec<u64> {
        self.iterations.iter().map(|r| r.assignment_digest).collect()
    }

    /// Largest `Σ_j (ntm)_j / k` over the iterations.
    pub fn max_avg_mean_terms(&self) -> f64 {
        self.iterations
            .iter()
            .map(|r| r.mean_terms as f64 / self.k as f64)
            .fold(0.0, f64::max)
    }
}

/// Steps one variant through Lloyd iterations, exposing its state between
/// steps.
pub struct Runner<'a> {
    variant: Variant,
    ds: &'a Dataset,
    means: MeanSet,
    assignment: Option<Assignment>,
    objects_inverted: Option<InvertedFile>,
    scratch: Scratch,
    dense_buf: Vec<f64>,
    iter: usize,
}

impl<'a> Runner<'a> {
    /// Starts from `k` seeded distinct objects.
    pub fn new(variant: Variant, ds: &'a Dataset, k: usize, seed: u64) -> Result<Self> {
        let means = init_means(ds, k, seed, variant.repr())?;
        Self::from_means(variant, ds, means)
    }

    /// Starts from caller-provided means, converted to the variant's layout.
    pub fn from_means(variant: Variant, ds: &'a Dataset, means: MeanSet) -> Result<Self> {
        if means.dim() != ds.dim() {
            return Err(Error::domain(format!(
                "means dimension {} differs from dataset dimension {}",
                means.dim(),
                ds.dim()
            )));
        }
        if means.k() == 0 {
            return Err(Error::domain("need at least one mean"));
        }
        let means = means.convert(variant.repr());
        let objects_inverted = variant.holds_inverted_objects().then(|| ds.inverted());
        Ok(Self {
            variant,
            ds,
            scratch: Scratch::new(ds.len(), means.k(), ds.dim()),
            means,
            assignment: None,
            objects_inverted,
            dense_buf: Vec::new(),
            iter: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn means(&self) -> &MeanSet {
        &self.means
    }

    pub fn assignment(&self) -> Option<&Assignment> {
        self.assignment.as_ref()
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    /// Assignment step only, against the current means.
    pub fn assign(&mut self, counters: &mut OpCounters) -> Result<Assignment> {
        let ds = self.ds;
        match (&self.variant, &self.means) {
            (Variant::Ref, MeanSet::Dense(m)) => reference_assign(ds, m, &mut self.dense_buf, counters),
            (Variant::Mfn, MeanSet::Dense(m)) => variants::assign_mfn(ds, m, &mut self.scratch, counters),
            (Variant::Ifn, MeanSet::DenseInverted(m)) => {
                variants::assign_ifn(ds, m, &mut self.scratch, counters)
            }
            (Variant::Ifb, MeanSet::DenseInverted(m)) => {
                variants::assign_ifb(ds, m, &mut self.scratch, counters)
            }
            (Variant::Ivf, MeanSet::SparseInverted(inv)) => {
                variants::assign_ivf(ds, inv, &mut self.scratch, counters)
            }
            (Variant::Twm, MeanSet::SparseStandard { means, dim }) => {
                variants::assign_twm(ds, means, *dim, &mut self.scratch, counters)
            }
            (Variant::Ivfd, MeanSet::SparseStandard { means, .. }) => {
                let objects = self
                    .objects_inverted
                    .as_ref()
                    .expect("built for IVFD at construction");
                variants::assign_ivfd(objects, means, &mut self.scratch, counters)
            }
            (v, m) => Err(Error::domain(format!("{v} cannot run on {:?} means", m.repr()))),
        }
    }

    /// One assignment + update iteration.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let ds = self.ds;
        let volumes = Volumes::of(ds, &self.means)?;
        let mut counters = OpCounters::default();
        let asg = self.assign(&mut counters)?;
        let next = match (&self.variant, &self.means) {
            (Variant::Ref, MeanSet::Dense(m)) => MeanSet::Dense(reference_update(ds, &asg, m)),
            _ => variants::update_means(ds, &asg, &self.means, &mut self.scratch)?,
        };
        let objective = objective_cosine(ds, &asg, &next)?;
        let changed = self.assignment.as_ref().map(|prev| prev.disagreements(&asg));
        self.iter += 1;
        let record = IterationRecord {
            iter: self.iter,
            objective,
            counters,
            assignment_digest: asg.digest(),
            changed,
            empty_clusters: asg.empty_clusters(),
            mean_terms: next.total_terms(),
            ifn_volume: volumes.ifn,
            ivf_volume: volumes.ivf,
        };
        self.means = next;
        self.assignment = Some(asg);
        Ok(record)
    }

    pub fn into_means(self) -> MeanSet {
        self.means
    }
}

/// Runs `variant` from seeded initial means until the assignment stops
/// changing or `max_iter` iterations have run.
pub fn run(variant: Variant, ds: &Dataset, cfg: &RunConfig) -> Result<RunResult> {
    if cfg.max_iter == 0 {
        return Err(Error::domain("max_iter must be at least 1"));
    }
    let mut runner = Runner::new(variant, ds, cfg.k, cfg.seed)?;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    while runner.iterations() < cfg.max_iter {
        let rec = runner.step()?;
        let prev_objective = iterations.last().map(|r| r.objective);
        let unchanged = rec.changed == Some(0);
        let small_delta = match (cfg.epsilon, prev_objective) {
            (Some(eps), Some(prev)) => (rec.objective - prev).abs() <= eps,
            _ => false,
        };
        iterations.push(rec);
        if unchanged {
            stop_reason = StopReason::AssignmentUnchanged;
            break;
        }
        if small_delta {
            stop_reason = StopReason::ObjectiveDelta;
            break;
        }
    }
    let final_labels = runner
        .assignment()
        .map(|a| a.labels().to_vec())
        .unwrap_or_default();
    Ok(RunResult {
        variant,
        k: cfg.k,
        seed: cfg.seed,
        n: ds.len(),
        d: ds.dim(),
        sum_nnz: ds.sum_nnz(),
        iterations_used: iterations.len(),
        converged: stop_reason != StopReason::MaxIter,
        stop_reason,
        iterations,
        final_labels,
        final_means: Some(runner.into_means()),
    })
}

/// Dense copy of every object, for oracles.
pub fn dense_objects(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.vectors().iter().map(|x| x.to_dense(ds.dim())).collect()
}

/// Sparse means as the normalized arithmetic mean of each cluster, computed
/// densely. Clusters without members come back empty.
pub fn centroid_oracle(ds: &Dataset, asg: &Assignment) -> Vec<SparseVector> {
    let dense = dense_objects(ds);
    asg.members()
        .iter()
        .map(|m| {
            if m.is_empty() {
                return SparseVector::empty();
            }
            let mut w = vec![0.0; ds.dim()];
            for &i in m {
                for (a, b) in w.iter_mut().zip(&dense[i]) {
                    *a += b;
                }
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            SparseVector::from_dense(&w.iter().map(|v| v / norm).collect::<Vec<_>>())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn tiny() -> Dataset {
        Dataset::new_normalized(
            vec![
                SparseVector::new(vec![1, 2], vec![H, H]).unwrap(),
                SparseVector::new(vec![2, 3], vec![H, H]).unwrap(),
                SparseVector::new(vec![3, 4], vec![H, H]).unwrap(),
            ],
            4,
        )
        .unwrap()
    }

    fn tiny_init(repr: MeanRepr) -> MeanSet {
        let ds = tiny();
        MeanSet::from_sparse(vec![ds.vector(0).clone(), ds.vector(2).clone()], 4, repr).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(v.name().to_lowercase().parse::<Variant>().unwrap(), v);
        }
        assert!("XYZ".parse::<Variant>().is_err());
    }

    #[test]
    fn init_is_deterministic_subset() {
        let ds = tiny();
        let a = init_indices(3, 2, 7).unwrap();
        let b = init_indices(3, 2, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| i < 3) && a[0] != a[1]);
        let mut all = init_indices(3, 3, 1).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(init_means(&ds, 0, 1, MeanRepr::Dense).is_err());
        assert!(init_means(&ds, 4, 1, MeanRepr::Dense).is_err());
    }

    #[test]
    fn objective_examples() {
        let ds = tiny();
        let asg = Assignment::from_labels(vec![1, 1, 2], 2).unwrap();
        let obj = objective_cosine(&ds, &asg, &tiny_init(MeanRepr::SparseStandard)).unwrap();
        assert!((obj - 2.5).abs() < 1e-12);

        let own = MeanSet::from_sparse(ds.vectors().to_vec(), 4, MeanRepr::Dense).unwrap();
        let asg = Assignment::from_labels(vec![1, 2, 3], 3).unwrap();
        assert!((objective_cosine(&ds, &asg, &own).unwrap() - 3.0).abs() < 1e-12);

        let wrong_k = Assignment::from_labels(vec![1, 1, 1], 1).unwrap();
        assert!(objective_cosine(&ds, &wrong_k, &own).is_err());
    }

    #[test]
    fn reference_iteration_on_tiny() {
        let ds = tiny();
        let (asg, next) = reference_iterate(&ds, &tiny_init(MeanRepr::Dense)).unwrap();
        assert_eq!(asg.labels(), &[1, 1, 2]);
        let d = next.to_dense();
        let want = [0.408_248_290_463_863, 0.816_496_580_927_726, 0.408_248_290_463_863, 0.0];
        for (a, b) in d.row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.row(1), &[0.0, 0.0, H, H]);
        assert!(reference_iterate(&ds, &tiny_init(MeanRepr::SparseStandard)).is_err());
    }

    #[test]
    fn single_cluster_gets_normalized_centroid() {
        let ds = tiny();
        let m = MeanSet::from_sparse(vec![ds.vector(1).clone()], 4, MeanRepr::Dense).unwrap();
        let (asg, next) = reference_iterate(&ds, &m).unwrap();
        assert_eq!(asg.labels(), &[1, 1, 1]);
        let oracle = centroid_oracle(&ds, &asg);
        for (a, b) in next.to_sparse()[0].values().iter().zip(oracle[0].values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_variant_converges_with_k_equal_n() {
        let ds = tiny();
        for v in Variant::ALL {
            let r = run(v, &ds, &RunConfig::new(3, 5, 10)).unwrap();
            assert!(r.converged, "{v}");
            assert!(r.iterations_used <= 2, "{v}");
            assert!((r.iterations.last().unwrap().objective - 3.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn max_iter_bounds_and_errors() {
        let ds = tiny();
        let r = run(Variant::Ivf, &ds, &RunConfig::new(2, 1, 1)).unwrap();
        assert_eq!(r.iterations.len(), 1);
        assert!(!r.converged);
        assert_eq!(r.stop_reason, StopReason::MaxIter);
        assert!(run(Variant::Ivf, &ds, &RunConfig::new(2, 1, 0)).is_err());
        assert!(run(Variant::Ivf, &ds, &RunConfig::new(4, 1, 3)).is_err());
    }

    #[test]
    fn runner_from_tiny_means_matches_across_variants() {
        let ds = tiny();
        let mut digests = Vec::new();
        for v in Variant::ALL {
            let mut r = Runner::from_means(v, &ds, tiny_init(MeanRepr::SparseStandard)).unwrap();
            let rec = r.step().unwrap();
            assert_eq!(r.assignment().unwrap().labels(), &[1, 1, 2], "{v}");
            digests.push(rec.assignment_digest);
            assert_eq!(rec.ivf_volume, 4 + 2, "{v}");
        }
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn gaps() {
        let ds = tiny();
        let g = similarity_gaps(&ds, &tiny_init(MeanRepr::SparseStandard));
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
        let one = MeanSet::from_sparse(vec![ds.vector(0).clone()], 4, MeanRepr::Dense).unwrap();
        assert!(similarity_gaps(&ds, &one).iter().all(|g| g.is_infinite()));
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v.into_iter()), 2.0);
    }
}
