//! Browser bindings: every export takes a JSON settings object and returns a
//! JSON result string.

use serde::{Deserialize, Serialize};
use sparse_kmeans::cache::{cache_report, CacheParams, MissModel, ZStar};
use sparse_kmeans::counters::{Crossover, Volumes};
use sparse_kmeans::data::DatasetSummary;
use sparse_kmeans::synth::{self, CorpusConfig};
use sparse_kmeans::{run, Dataset, InstModelParams, RunConfig, Variant};
use wasm_bindgen::prelude::*;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub n: usize,
    pub d: usize,
    pub mean_nnz: f64,
    pub data_seed: u64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 400,
            mean_nnz: 10.0,
            data_seed: 1,
        }
    }
}

impl CorpusSettings {
    fn build(&self) -> Result<Dataset, String> {
        synth::zipf_corpus(&CorpusConfig::new(self.n, self.d, self.mean_nnz, self.data_seed)).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSettings {
    #[serde(flatten)]
    pub corpus: CorpusSettings,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub variants: Vec<Variant>,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            corpus: CorpusSettings::default(),
            k: 16,
            seed: 0,
            max_iter: 30,
            variants: vec![Variant::Ifn, Variant::Ivf],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IterationPoint {
    pub iter: usize,
    pub objective: f64,
    pub mults: u64,
    pub changed: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct VariantTrace {
    pub variant: Variant,
    pub converged: bool,
    pub iterations: Vec<IterationPoint>,
    pub total_mults: u64,
}

#[derive(Debug, Serialize)]
pub struct ClusterOutput {
    pub corpus: DatasetSummary,
    pub traces: Vec<VariantTrace>,
    /// All variants ended with the same labels.
    pub identical_labels: bool,
}

pub fn cluster_with(s: &ClusterSettings) -> Result<ClusterOutput, String> {
    if s.variants.is_empty() {
        return Err("choose at least one variant".into());
    }
    let ds = s.corpus.build()?;
    let cfg = RunConfig::new(s.k, s.seed, s.max_iter);
    let mut traces = Vec::new();
    let mut labels = Vec::new();
    for &v in &s.variants {
        let r = run(v, &ds, &cfg).map_err(|e| e.to_string())?;
        let iterations: Vec<IterationPoint> = r
            .iterations
            .iter()
            .map(|it| IterationPoint {
                iter: it.iter,
                objective: it.objective,
                mults: it.counters.mults,
                changed: it.changed,
            })
            .collect();
        traces.push(VariantTrace {
            variant: v,
            converged: r.converged,
            total_mults: iterations.iter().map(|p| p.mults).sum(),
            iterations,
        });
        labels.push(r.final_labels);
    }
    Ok(ClusterOutput {
        corpus: ds.summary(),
        identical_labels: labels.windows(2).all(|w| w[0] == w[1]),
        traces,
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(flatten)]
    pub corpus: CorpusSettings,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            corpus: CorpusSettings::default(),
            ks: vec![2, 4, 8, 16, 32, 64, 128, 256],
            seed: 0,
            max_iter: 20,
            alpha: 28.0,
            beta: 40.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    pub ifn_volume: u64,
    pub ivf_volume: u64,
    pub avg_mean_terms: f64,
    pub crossover: Crossover,
}

/// Runs IVF at each `k` and evaluates the crossover test on the volumes of
/// the last iteration.
pub fn sweep_with(s: &SweepSettings) -> Result<Vec<SweepPoint>, String> {
    let params = InstModelParams::new(s.alpha, s.beta).map_err(|e| e.to_string())?;
    let ds = s.corpus.build()?;
    let mut out = Vec::new();
    for &k in &s.ks {
        let r = run(Variant::Ivf, &ds, &RunConfig::new(k, s.seed, s.max_iter)).map_err(|e| format!("k={k}: {e}"))?;
        let last = r.iterations.last().ok_or("run recorded no iterations")?;
        let v = Volumes {
            ifn: last.ifn_volume,
            ivf: last.ivf_volume,
        };
        out.push(SweepPoint {
            k,
            ifn_volume: v.ifn,
            ivf_volume: v.ivf,
            avg_mean_terms: last.mean_terms as f64 / k as f64,
            crossover: Crossover::from_volumes(v, params).map_err(|e| e.to_string())?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSettings {
    pub n: u64,
    pub d: usize,
    pub total_no: u64,
    pub zipf_exponent: f64,
    pub ks: Vec<u64>,
    pub cache_bytes: u64,
    pub nb_llc: u64,
    pub beta: f64,
}

impl Default for CacheSettings {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            d: 140_914,
            total_no: 58_950_000,
            zipf_exponent: 1.0,
            ks: vec![100, 200, 500, 1000, 2000, 5000, 10_000],
            cache_bytes: CacheParams::default().cache_bytes,
            nb_llc: CacheParams::default().nb_llc,
            beta: 40.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CachePoint {
    pub k: u64,
    pub e_nb_ivf: f64,
    pub e_nb_ivfd: f64,
    pub z_star: ZStar,
    pub llcm_ivf: MissModel,
    pub llcm_ivfd: MissModel,
}

#[derive(Debug, Serialize)]
pub struct CacheOutput {
    pub gamma: f64,
    pub nb_llc: u64,
    pub points: Vec<CachePoint>,
}

/// Cache models on Zipf profiles with uniformly spread centroid frequencies.
pub fn cache_with(s: &CacheSettings) -> Result<CacheOutput, String> {
    let params = CacheParams {
        cache_bytes: s.cache_bytes,
        nb_llc: s.nb_llc,
        ..CacheParams::default()
    };
    let no = synth::zipf_doc_freq(s.n, s.d, s.total_no, s.zipf_exponent).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for &k in &s.ks {
        let nc = no.iter().map(|&f| synth::expected_centroid_freq(f, k)).collect();
        let profile = sparse_kmeans::cache::FreqProfile::new(s.n, k, no.clone(), nc).map_err(|e| e.to_string())?;
        let r = cache_report(&profile, &params, s.beta).map_err(|e| format!("k={k}: {e}"))?;
        points.push(CachePoint {
            k,
            e_nb_ivf: r.e_nb_ivf,
            e_nb_ivfd: r.e_nb_ivfd,
            z_star: r.z_star,
            llcm_ivf: r.llcm_ivf,
            llcm_ivfd: r.llcm_ivfd,
        });
    }
    Ok(CacheOutput {
        gamma: params.gamma(),
        nb_llc: params.nb_llc,
        points,
    })
}

fn call<S, T>(settings: &str, f: impl FnOnce(&S) -> Result<T, String>) -> Result<String, String>
where
    S: for<'de> Deserialize<'de> + Default,
    T: Serialize,
{
    let s: S = if settings.trim().is_empty() {
        S::default()
    } else {
        serde_json::from_str(settings).map_err(|e| format!("bad settings: {e}"))?
    };
    serde_json::to_string(&f(&s)?).map_err(|e| e.to_string())
}

pub fn cluster_json(settings: &str) -> Result<String, String> {
    call(settings, cluster_with)
}

pub fn sweep_json(settings: &str) -> Result<String, String> {
    call(settings, sweep_with)
}

pub fn cache_json(settings: &str) -> Result<String, String> {
    call(settings, cache_with)
}

/// Clusters a synthetic corpus with each chosen variant.
#[wasm_bindgen]
pub fn cluster(settings: &str) -> Result<String, JsError> {
    cluster_json(settings).map_err(|e| JsError::new(&e))
}

/// IVF-versus-IFN crossover over a k grid.
#[wasm_bindgen]
pub fn crossover_sweep(settings: &str) -> Result<String, JsError> {
    sweep_json(settings).map_err(|e| JsError::new(&e))
}

/// LLC occupancy and miss models over a k grid.
#[wasm_bindgen]
pub fn cache_curve(settings: &str) -> Result<String, JsError> {
    cache_json(settings).map_err(|e| JsError::new(&e))
}
