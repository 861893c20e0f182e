//! Seeded synthetic corpora and frequency profiles with Zipf-shaped term
//! popularity and document lengths.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, Zipf};

use crate::cache::FreqProfile;
use crate::clustering::Variant;
use crate::cpi::{cpi_predict, phi, CpiWeights, DfSample, SampleSet};
use crate::data::{tfidf_normalize, Dataset, RawCounts};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusConfig {
    pub n: usize,
    pub d: usize,
    /// Target average number of distinct terms per document.
    pub mean_nnz: f64,
    pub max_nnz: usize,
    /// Zipf exponent of term popularity.
    pub term_exponent: f64,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn new(n: usize, d: usize, mean_nnz: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            mean_nnz,
            max_nnz: (d / 4).min((mean_nnz * 10.0).ceil() as usize).max(1),
            term_exponent: 1.0,
            seed,
        }
    }
}

/// `Σ m^{1-a} / Σ m^{-a}` over `1..=max`.
fn power_law_mean(a: f64, max: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for m in 1..=max {
        let w = (m as f64).powf(-a);
        num += m as f64 * w;
        den += w;
    }
    num / den
}

/// Exponent of a power law on `1..=max` with the given mean.
fn power_law_exponent(mean: f64, max: usize) -> Result<f64> {
    let hi_mean = (max as f64 + 1.0) / 2.0;
    if !(mean > 1.0 && mean <= hi_mean) {
        return Err(Error::domain(format!(
            "mean nnz {mean} not reachable on 1..={max} (need 1 < mean <= {hi_mean})"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 30.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if power_law_mean(mid, max) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Raw term counts: document lengths from a truncated power law, terms drawn
/// without repetition from a Zipf popularity law, counts from a steep Zipf.
pub fn zipf_counts(cfg: &CorpusConfig) -> Result<RawCounts> {
    if cfg.n == 0 || cfg.d == 0 {
        return Err(Error::domain("corpus needs N >= 1 and D >= 1"));
    }
    if cfg.max_nnz > cfg.d {
        return Err(Error::domain("max_nnz exceeds D"));
    }
    let a = power_law_exponent(cfg.mean_nnz, cfg.max_nnz)?;
    let weights: Vec<f64> = (1..=cfg.max_nnz).map(|m| (m as f64).powf(-a)).collect();
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cdf.push(acc);
    }

    let terms = Zipf::new(cfg.d as f64, cfg.term_exponent).map_err(|e| Error::domain(e.to_string()))?;
    let tf = Zipf::new(8.0, 2.0).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = rng::seeded(cfg.seed);
    let mut triples = Vec::new();
    let mut doc = Vec::new();
    for i in 0..cfg.n {
        let u: f64 = rng.random();
        let nnz = (cdf.partition_point(|&c| c < u) + 1).min(cfg.max_nnz);
        doc.clear();
        while doc.len() < nnz {
            let t = terms.sample(&mut rng) as u32;
            if let Err(pos) = doc.binary_search(&t) {
                doc.insert(pos, t);
            }
        }
        for &t in &doc {
            triples.push((i as u32 + 1, t, tf.sample(&mut rng) as u32));
        }
    }
    Ok(RawCounts {
        n_docs: cfg.n,
        dim: cfg.d,
        triples,
    })
}

/// tf-idf normalized synthetic corpus.
pub fn zipf_corpus(cfg: &CorpusConfig) -> Result<Dataset> {
    Ok(tfidf_normalize(&zipf_counts(cfg)?)?.dataset)
}

/// `(no)_p ≈ c / p^s` capped at `N`, with `c` chosen so `Σ (no)_p` is close to
/// `total_no`.
pub fn zipf_doc_freq(n: u64, d: usize, total_no: u64, s: f64) -> Result<Vec<u64>> {
    if n == 0 || d == 0 {
        return Err(Error::domain("need N >= 1 and D >= 1"));
    }
    if total_no > n * d as u64 {
        return Err(Error::domain("total_no exceeds N·D"));
    }
    let gen = |c: f64| -> Vec<u64> {
        (1..=d)
            .map(|p| ((c / (p as f64).powf(s)).round() as u64).min(n))
            .collect()
    };
    let (mut lo, mut hi) = (0.0f64, (n as f64) * (d as f64).powf(s) * 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gen(mid).iter().sum::<u64>() < total_no {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(gen(hi))
}

/// Expected distinct centroids among `k` that `no` uniformly assigned objects
/// reach, rounded: `k (1 − (1 − 1/k)^no)`.
pub fn expected_centroid_freq(no: u64, k: u64) -> u64 {
    if k == 0 {
        return 0;
    }
    let kf = k as f64;
    let v = -kf * (no as f64 * (-1.0 / kf).ln_1p()).exp_m1();
    (v.round() as u64).min(k).min(no)
}

/// Zipf document frequencies with centroid frequencies from uniform spread
/// over `k` clusters.
pub fn zipf_profile(n: u64, d: usize, total_no: u64, s: f64, k: u64) -> Result<FreqProfile> {
    let no = zipf_doc_freq(n, d, total_no, s)?;
    let nc = no.iter().map(|&o| expected_centroid_freq(o, k)).collect();
    FreqProfile::new(n, k, no, nc)
}

/// The `k = N` limit where every object is its own centroid: `(nc)_p = (no)_p`.
pub fn singleton_profile(n: u64, d: usize, total_no: u64, s: f64) -> Result<FreqProfile> {
    let no = zipf_doc_freq(n, d, total_no, s)?;
    FreqProfile::new(n, n, no.clone(), no)
}

/// A small unstructured profile: `N ≤ max_n`, `k ≤ max_k`, `D ≤ max_d`.
pub fn random_profile<R: RngCore>(rng: &mut R, max_n: u64, max_k: u64, max_d: usize) -> FreqProfile {
    let n = 1 + rng::below(rng, max_n);
    let k = 1 + rng::below(rng, max_k);
    let d = 1 + rng::below(rng, max_d as u64) as usize;
    let no: Vec<u64> = (0..d).map(|_| rng::below(rng, n + 1)).collect();
    let nc: Vec<u64> = (0..d).map(|_| rng::below(rng, k + 1)).collect();
    FreqProfile::new(n, k, no, nc).expect("frequencies drawn within bounds")
}

/// Counter series generated from known weights. Degradation factors are
/// drawn per `(algorithm, k)`: `φ1` in `[0.005, 0.05]`, `φ2` in
/// `[0.0005, 0.01]`, and `φ3` in `[0.001, 0.01]` for algorithms with a
/// nonzero `w3` (zero otherwise). Counts are whole numbers at `10^12`
/// instructions; cycles carry multiplicative Gaussian noise of relative size
/// `noise`.
pub fn cpi_series(weights: &[(Variant, CpiWeights)], ks: &[usize], noise: f64, seed: u64) -> SampleSet {
    const INST: f64 = 1e12;
    let mut rng = rng::seeded(seed);
    let mut set = SampleSet::new();
    for &(algo, w) in weights {
        let mut out = Vec::with_capacity(ks.len());
        for &k in ks {
            let phi1 = rng.random_range(0.005..0.05);
            let phi2 = rng.random_range(0.0005..0.01);
            let phi3 = if w.w3 > 0.0 { rng.random_range(0.001..0.01) } else { 0.0 };
            let llcm = (phi2 * INST).round();
            let mut s = DfSample {
                k,
                inst: INST,
                l1cm: llcm + (phi1 * INST).round(),
                llcm,
                bm: (phi3 * INST).round(),
                cycles: 0.0,
            };
            let eps: f64 = rng.sample(StandardNormal);
            let cpi = cpi_predict(&w, &phi(&s).expect("valid by construction"));
            s.cycles = (cpi * (1.0 + noise * eps) * INST).round();
            out.push(s);
        }
        set.insert(algo, out);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_hits_target_mean() {
        let a = power_law_exponent(10.0, 100).unwrap();
        assert!((power_law_mean(a, 100) - 10.0).abs() < 1e-9);
        assert!(power_law_exponent(1.0, 10).is_err());
        assert!(power_law_exponent(6.0, 10).is_err());
    }

    #[test]
    fn corpus_shape() {
        let cfg = CorpusConfig::new(2000, 500, 10.0, 3);
        let ds = zipf_corpus(&cfg).unwrap();
        assert!(ds.len() >= 1990);
        assert_eq!(ds.dim(), 500);
        assert!((ds.avg_nnz() - 10.0).abs() < 1.0, "{}", ds.avg_nnz());
        assert!(ds.is_normalized());
        let again = zipf_corpus(&cfg).unwrap();
        assert_eq!(ds.vectors(), again.vectors());
    }

    #[test]
    fn doc_freq_targets_total() {
        let no = zipf_doc_freq(1_000_000, 140_914, 58_950_000, 1.0).unwrap();
        let total: u64 = no.iter().sum();
        assert!((total as f64 / 58_950_000.0 - 1.0).abs() < 1e-3);
        assert!(no.windows(2).all(|w| w[0] >= w[1]));
        assert!(no[0] <= 1_000_000);
    }

    #[test]
    fn centroid_freq_limits() {
        assert_eq!(expected_centroid_freq(0, 10), 0);
        assert_eq!(expected_centroid_freq(1, 10), 1);
        assert_eq!(expected_centroid_freq(100_000, 10), 10);
        assert_eq!(expected_centroid_freq(5, 0), 0);
    }

    #[test]
    fn random_profiles_are_valid() {
        let mut r = rng::seeded(1);
        for _ in 0..100 {
            random_profile(&mut r, 50, 10, 20).validate().unwrap();
        }
    }
}
