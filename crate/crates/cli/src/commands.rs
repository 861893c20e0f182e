use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sparse_kmeans::cache::{cache_report, CacheParams, FreqProfile};
use sparse_kmeans::counters::{Crossover, Volumes};
use sparse_kmeans::cpi::{fit_report, read_samples_csv};
use sparse_kmeans::data::footprint::{mean_bytes, object_bytes};
use sparse_kmeans::data::{parse_uci_bow, parse_uci_header, read_value_rows, tfidf_normalize, DatasetSummary};
use sparse_kmeans::{Dataset, Error, InstModelParams, RunConfig, RunResult, Variant};

use crate::InputFormat;

pub enum Status {
    Ok,
    /// Some items failed; the rest completed.
    Partial,
}

/// The cluster counts of the standard grid that fit in `n` objects, or powers
/// of two up to `n` when none do.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    let grid: Vec<usize> = [200, 500, 1000, 2000, 5000, 10_000, 20_000]
        .into_iter()
        .filter(|&k| k <= n)
        .collect();
    if !grid.is_empty() {
        return grid;
    }
    let mut out = Vec::new();
    let mut k = 2;
    while k <= n {
        out.push(k);
        k *= 2;
    }
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn emit_text(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn summary_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("json")
}

pub fn ingest(input: &Path, format: InputFormat, output: Option<&Path>, dry_run: bool) -> Result<Status> {
    let ctx = || input.display().to_string();
    let dataset = match format {
        InputFormat::Bow if dry_run => {
            let header = parse_uci_header(open(input)?).with_context(ctx)?;
            emit_json(&header, None)?;
            return Ok(Status::Ok);
        }
        InputFormat::Bow => {
            let raw = parse_uci_bow(open(input)?).with_context(ctx)?;
            tfidf_normalize(&raw).with_context(ctx)?.dataset
        }
        InputFormat::Csv => {
            let docs = read_value_rows(open(input)?).with_context(ctx)?;
            if docs.is_empty() {
                return Err(Error::EmptyInput).with_context(ctx);
            }
            let dim = docs.iter().filter_map(|d| d.max_term()).max().unwrap_or(0) as usize;
            Dataset::normalize(docs, dim).with_context(ctx)?
        }
    };
    let summary = dataset.summary();
    if dry_run {
        emit_json(&summary, None)?;
        return Ok(Status::Ok);
    }
    let out = output.expect("clap requires --output without --dry-run");
    let file = File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
    dataset.write_native_csv(BufWriter::new(file))?;
    emit_json(&summary, Some(&summary_path(out)))?;
    Ok(Status::Ok)
}

pub fn load_dataset(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let sidecar = summary_path(path);
    let dim = match dim {
        Some(d) => Some(d),
        None if sidecar.exists() => {
            let s: DatasetSummary = serde_json::from_reader(open(&sidecar)?)
                .with_context(|| format!("bad summary {}", sidecar.display()))?;
            Some(s.d)
        }
        None => None,
    };
    let ds = Dataset::read_native_csv(open(path)?, dim).with_context(|| path.display().to_string())?;
    if ds.is_empty() {
        bail!("{}: empty input", path.display());
    }
    if !ds.is_normalized() {
        log::warn!("{}: vectors are not unit length; normalizing", path.display());
        return Ok(Dataset::normalize(ds.vectors().to_vec(), ds.dim())?);
    }
    Ok(ds)
}

pub struct RunArgs {
    pub dataset: PathBuf,
    pub variants: Vec<String>,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub epsilon: Option<f64>,
    pub dim: Option<usize>,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunEntry {
    Ok {
        variant: Variant,
        k: usize,
        result: RunResult,
    },
    Error {
        variant: Variant,
        k: usize,
        error: String,
    },
}

#[derive(Serialize, Deserialize)]
pub struct Equivalence {
    pub k: usize,
    pub variants: Vec<Variant>,
    /// Largest count of objects whose final label differs from the first
    /// variant's.
    pub max_disagreements: usize,
    /// Largest absolute gap between final objectives.
    pub max_objective_gap: f64,
}

#[derive(Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    pub max_iter: usize,
    pub epsilon: Option<f64>,
    pub variants: Vec<Variant>,
    pub k: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct RunFile {
    pub metadata: Metadata,
    pub dataset: DatasetSummary,
    pub settings: RunSettings,
    pub runs: Vec<RunEntry>,
    #[serde(default)]
    pub equivalence: Vec<Equivalence>,
}

#[derive(Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
}

pub fn run(args: RunArgs) -> Result<Status> {
    let variants = args
        .variants
        .iter()
        .map(|v| v.parse::<Variant>())
        .collect::<Result<Vec<_>, _>>()?;
    let ds = load_dataset(&args.dataset, args.dim)?;
    let ks = if args.ks.is_empty() {
        default_k_grid(ds.len())
    } else {
        args.ks.clone()
    };
    let jobs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| ks.iter().map(move |&k| (v, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let entries: Vec<RunEntry> = pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, k)| {
                let cfg = RunConfig {
                    k,
                    seed: args.seed,
                    max_iter: args.max_iter,
                    epsilon: args.epsilon,
                };
                match sparse_kmeans::run(variant, &ds, &cfg) {
                    Ok(result) => {
                        log::info!(
                            "{variant} k={k}: {} iterations, stop: {:?}",
                            result.iterations_used,
                            result.stop_reason
                        );
                        RunEntry::Ok { variant, k, result }
                    }
                    Err(e) => {
                        log::error!("{variant} k={k}: {e}");
                        RunEntry::Error {
                            variant,
                            k,
                            error: e.to_string(),
                        }
                    }
                }
            })
            .collect()
    });

    let equivalence = if variants.len() > 1 {
        ks.iter().filter_map(|&k| equivalence_for(k, &entries)).collect()
    } else {
        Vec::new()
    };
    let failed = entries.iter().any(|e| matches!(e, RunEntry::Error { .. }));
    let file = RunFile {
        metadata: Metadata {
            tool: "sparse-kmeans".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        dataset: ds.summary(),
        settings: RunSettings {
            seed: args.seed,
            max_iter: args.max_iter,
            epsilon: args.epsilon,
            variants,
            k: ks,
        },
        runs: entries,
        equivalence,
    };
    if let Some(path) = &args.table {
        write_iteration_table(&file.runs, path)?;
    }
    emit_json(&file, args.output.as_deref())?;
    Ok(if failed { Status::Partial } else { Status::Ok })
}

fn equivalence_for(k: usize, entries: &[RunEntry]) -> Option<Equivalence> {
    let ok: Vec<&RunResult> = entries
        .iter()
        .filter_map(|e| match e {
            RunEntry::Ok { k: kk, result, .. } if *kk == k => Some(result),
            _ => None,
        })
        .collect();
    if ok.len() < 2 {
        return None;
    }
    let base = ok[0];
    let base_obj = base.iterations.last().map_or(0.0, |r| r.objective);
    let mut eq = Equivalence {
        k,
        variants: ok.iter().map(|r| r.variant).collect(),
        max_disagreements: 0,
        max_objective_gap: 0.0,
    };
    for r in &ok[1..] {
        let d = r
            .final_labels
            .iter()
            .zip(&base.final_labels)
            .filter(|(a, b)| a != b)
            .count();
        eq.max_disagreements = eq.max_disagreements.max(d);
        let obj = r.iterations.last().map_or(0.0, |r| r.objective);
        eq.max_objective_gap = eq.max_objective_gap.max((obj - base_obj).abs());
    }
    Some(eq)
}

fn write_iteration_table(entries: &[RunEntry], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    writeln!(
        w,
        "variant,k,iter,objective,mults,adds,inner_entries,branch_checks,merge_steps,changed,empty_clusters,mean_terms,ifn_volume,ivf_volume"
    )?;
    for e in entries {
        if let RunEntry::Ok { variant, k, result } = e {
            for r in &result.iterations {
                let c = &r.counters;
                writeln!(
                    w,
                    "{variant},{k},{},{:?},{},{},{},{},{},{},{},{},{},{}",
                    r.iter,
                    r.objective,
                    c.mults,
                    c.adds,
                    c.inner_entries,
                    c.branch_checks,
                    c.merge_steps,
                    r.changed.map_or(String::new(), |c| c.to_string()),
                    r.empty_clusters,
                    r.mean_terms,
                    r.ifn_volume,
                    r.ivf_volume
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit_cpi(samples: &Path, output: Option<&Path>) -> Result<Status> {
    let set = read_samples_csv(open(samples)?).with_context(|| samples.display().to_string())?;
    let report = fit_report(&set)?;
    emit_json(&report, output)?;
    Ok(Status::Ok)
}

pub fn cache_model(profile: &Path, params: CacheParams, beta: f64, output: Option<&Path>) -> Result<Status> {
    let p = FreqProfile::read_csv(open(profile)?).with_context(|| profile.display().to_string())?;
    let report = cache_report(&p, &params, beta)?;
    emit_json(&report, output)?;
    Ok(Status::Ok)
}

pub fn stats(results: &[PathBuf], alpha: f64, beta: f64, output: Option<&Path>) -> Result<Status> {
    let params = InstModelParams::new(alpha, beta)?;
    let mut out = String::from(
        "variant,k,iterations,converged,max_avg_mean_terms,final_avg_mean_terms,object_bytes,mean_bytes,\
         ifn_mults,ivf_mults,ifn_instructions,ivf_instructions,crossover_rhs,ivf_wins\n",
    );
    let mut partial = false;
    for path in results {
        let file: RunFile = serde_json::from_reader(open(path)?)
            .with_context(|| format!("{}: not a run result file", path.display()))?;
        for entry in &file.runs {
            let r = match entry {
                RunEntry::Ok { result, .. } => result,
                RunEntry::Error { variant, k, error } => {
                    log::warn!("{}: skipping failed run {variant} k={k}: {error}", path.display());
                    partial = true;
                    continue;
                }
            };
            let Some(last) = r.iterations.last() else {
                bail!("{}: run {} k={} has no iterations", path.display(), r.variant, r.k);
            };
            let k = r.k as u64;
            let copies = if r.variant.holds_inverted_objects() { 2 } else { 1 };
            let ob = copies * object_bytes(r.sum_nnz);
            let mb = mean_bytes(r.variant.repr(), k, r.d as u64, last.mean_terms);
            let v = Volumes {
                ifn: last.ifn_volume,
                ivf: last.ivf_volume,
            };
            let cross = Crossover::from_volumes(v, params)?;
            out.push_str(&format!(
                "{},{},{},{},{:?},{:?},{ob},{mb},{},{},{:?},{:?},{:?},{}\n",
                r.variant,
                r.k,
                r.iterations_used,
                r.converged,
                r.max_avg_mean_terms(),
                last.mean_terms as f64 / r.k as f64,
                v.ifn,
                v.ivf,
                params.alpha * v.ifn as f64,
                params.beta * v.ivf as f64,
                cross.rhs,
                cross.ivf_wins
            ));
        }
    }
    emit_text(&out, output)?;
    Ok(if partial { Status::Partial } else { Status::Ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grid() {
        assert_eq!(default_k_grid(100_000), vec![200, 500, 1000, 2000, 5000, 10_000, 20_000]);
        assert_eq!(default_k_grid(1200), vec![200, 500, 1000]);
        assert_eq!(default_k_grid(20), vec![2, 4, 8, 16]);
        assert_eq!(default_k_grid(1), vec![1]);
    }
}
