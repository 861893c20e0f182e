//! Linear CPI model over per-instruction degradation factors, and the staged
//! least-squares fit across MFN, IFN, IFB and IVF.
//!
//! `CPI = w0 + w1·φ1 + w2·φ2 + w3·φ3` with `φ1 = (L1CM − LLCM)/Inst`,
//! `φ2 = LLCM/Inst` and `φ3 = BM/Inst`.

use std::collections::BTreeMap;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::clustering::Variant;
use crate::{Error, Result};

/// Counter totals of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfSample {
    pub k: usize,
    pub inst: f64,
    pub l1cm: f64,
    pub llcm: f64,
    pub bm: f64,
    pub cycles: f64,
}

impl DfSample {
    pub fn validate(&self) -> Result<()> {
        let all = [self.inst, self.l1cm, self.llcm, self.bm, self.cycles];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("counter values must be finite and nonnegative"));
        }
        if self.inst <= 0.0 {
            return Err(Error::domain("inst must be positive"));
        }
        if self.l1cm < self.llcm {
            return Err(Error::domain(format!(
                "l1cm ({}) is below llcm ({})",
                self.l1cm, self.llcm
            )));
        }
        Ok(())
    }

    pub fn cpi(&self) -> f64 {
        self.cycles / self.inst
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiVector {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CpiWeights {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl CpiWeights {
    pub const fn new(w0: f64, w1: f64, w2: f64, w3: f64) -> Self {
        Self { w0, w1, w2, w3 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w0, self.w1, self.w2, self.w3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain(format!("weights must be finite and nonnegative: {self:?}")));
        }
        Ok(())
    }
}

pub fn phi(s: &DfSample) -> Result<PhiVector> {
    if s.inst.is_nan() || s.inst <= 0.0 {
        return Err(Error::domain("inst must be positive"));
    }
    if s.l1cm < s.llcm {
        return Err(Error::Validation {
            row: 0,
            msg: format!("l1cm ({}) is below llcm ({})", s.l1cm, s.llcm),
        });
    }
    Ok(PhiVector {
        phi1: (s.l1cm - s.llcm) / s.inst,
        phi2: s.llcm / s.inst,
        phi3: s.bm / s.inst,
    })
}

pub fn cpi_predict(w: &CpiWeights, p: &PhiVector) -> f64 {
    w.w0 + w.w1 * p.phi1 + w.w2 * p.phi2 + w.w3 * p.phi3
}

/// Root-mean-square and worst relative deviation of the model from the
/// measured CPI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    /// `sqrt(mean((CPI_a − CPI_m)²))`, in CPI units.
    pub avg_err: f64,
    /// `avg_err` over the mean measured CPI, in percent.
    pub avg_err_pct: f64,
    /// `max |CPI_m / CPI_a − 1|`.
    pub max_err: f64,
    pub max_err_pct: f64,
}

pub fn fit_errors(samples: &[DfSample], w: &CpiWeights) -> Result<FitErrors> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sq = 0.0;
    let mut max = 0.0f64;
    let mut mean_actual = 0.0;
    for s in samples {
        let actual = s.cpi();
        if actual == 0.0 {
            return Err(Error::domain(format!("actual CPI is zero at k={}", s.k)));
        }
        let model = cpi_predict(w, &phi(s)?);
        sq += (actual - model).powi(2);
        max = max.max((model / actual - 1.0).abs());
        mean_actual += actual;
    }
    let n = samples.len() as f64;
    let avg_err = (sq / n).sqrt();
    mean_actual /= n;
    Ok(FitErrors {
        avg_err,
        avg_err_pct: 100.0 * avg_err / mean_actual,
        max_err: max,
        max_err_pct: 100.0 * max,
    })
}

/// The four algorithms the model is calibrated for, in fit order.
pub const FIT_ALGORITHMS: [Variant; 4] = [Variant::Mfn, Variant::Ifn, Variant::Ifb, Variant::Ivf];

/// Samples grouped by algorithm.
pub type SampleSet = BTreeMap<Variant, Vec<DfSample>>;

/// Nonnegative least squares for a handful of columns: the unconstrained
/// solution when feasible, otherwise the best feasible solution over all
/// subsets of free columns.
fn nnls(x: &DMatrix<f64>, y: &DVector<f64>, stage: usize) -> Result<Vec<f64>> {
    let cols = x.ncols();
    if x.nrows() < cols {
        return Err(Error::Fit {
            stage,
            msg: format!("{} rows for {cols} free parameters", x.nrows()),
        });
    }
    let mut scale = Vec::with_capacity(cols);
    for c in 0..cols {
        let n = x.column(c).norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Fit {
                stage,
                msg: format!("design column {c} is zero"),
            });
        }
        scale.push(n);
    }
    let scaled = DMatrix::from_fn(x.nrows(), cols, |r, c| x[(r, c)] / scale[c]);
    let sv = scaled.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= smax * 1e-10 {
        return Err(Error::Fit {
            stage,
            msg: "rank-deficient design (collinear columns)".into(),
        });
    }

    let solve = |subset: &[usize]| -> Result<(Vec<f64>, f64)> {
        let mut w = vec![0.0; cols];
        if !subset.is_empty() {
            let sub = scaled.select_columns(subset);
            let b = sub.svd(true, true).solve(y, 0.0).map_err(|m| Error::Fit {
                stage,
                msg: m.to_string(),
            })?;
            for (&c, v) in subset.iter().zip(b.iter()) {
                w[c] = v / scale[c];
            }
        }
        let resid = y - x * DVector::from_column_slice(&w);
        Ok((w, resid.norm_squared()))
    };

    let all: Vec<usize> = (0..cols).collect();
    let (w, _) = solve(&all)?;
    if w.iter().all(|v| *v >= 0.0) {
        return Ok(w);
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0..(1u32 << cols) - 1 {
        let subset: Vec<usize> = (0..cols).filter(|c| mask & (1 << c) != 0).collect();
        let (w, sse) = solve(&subset)?;
        if w.iter().all(|v| *v >= 0.0) && best.as_ref().is_none_or(|b| sse < b.1) {
            best = Some((w, sse));
        }
    }
    Ok(best.expect("the empty subset is always feasible").0)
}

fn series(set: &SampleSet, algo: Variant, stage: usize) -> Result<&[DfSample]> {
    let s = set.get(&algo).map(Vec::as_slice).unwrap_or_default();
    let mut ks: Vec<usize> = s.iter().map(|s| s.k).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 4 {
        return Err(Error::Fit {
            stage,
            msg: format!("{algo} needs samples at 4 or more distinct k, found {}", ks.len()),
        });
    }
    Ok(s)
}

fn phis(s: &[DfSample]) -> Result<Vec<PhiVector>> {
    s.iter().map(phi).collect()
}

/// Fitted weights per algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedFit {
    pub mfn: CpiWeights,
    pub ifn: CpiWeights,
    pub ifb: CpiWeights,
    pub ivf: CpiWeights,
}

impl StagedFit {
    pub fn get(&self, algo: Variant) -> Option<&CpiWeights> {
        match algo {
            Variant::Mfn => Some(&self.mfn),
            Variant::Ifn => Some(&self.ifn),
            Variant::Ifb => Some(&self.ifb),
            Variant::Ivf => Some(&self.ivf),
            _ => None,
        }
    }

    /// MFN and IFN share `w0`, IFN and IFB share `w1, w2`, all share `w3`.
    pub fn sharing_holds(&self) -> bool {
        self.mfn.w0 == self.ifn.w0
            && self.ifn.w1 == self.ifb.w1
            && self.ifn.w2 == self.ifb.w2
            && [self.mfn.w3, self.ifn.w3, self.ivf.w3]
                .iter()
                .all(|w| *w == self.ifb.w3)
    }
}

/// Five-stage fit:
///
/// 1. MFN `w1, w2` from the MFN − IFN differences of CPI, `φ1`, `φ2` at
///    matching k (no intercept, `w3 = 0`).
/// 2. MFN `w0` with `w1, w2` fixed.
/// 3. IFN `w1, w2` with `w0` fixed to MFN's.
/// 4. IFB `w0, w3` with `w1, w2` fixed to IFN's.
/// 5. IVF `w0, w1, w2` with `w3` fixed to the shared value.
///
/// Every stage is least squares with weights clamped at zero. The shared `w3`
/// is reported for all four algorithms.
pub fn fit_staged(set: &SampleSet) -> Result<StagedFit> {
    // 1
    let mfn = series(set, Variant::Mfn, 1)?;
    let ifn = series(set, Variant::Ifn, 1)?;
    let ifn_by_k: BTreeMap<usize, &DfSample> = ifn.iter().map(|s| (s.k, s)).collect();
    let mut rows = Vec::new();
    for m in mfn {
        if let Some(i) = ifn_by_k.get(&m.k) {
            let (pm, pi) = (phi(m)?, phi(i)?);
            rows.push((m.cpi() - i.cpi(), pm.phi1 - pi.phi1, pm.phi2 - pi.phi2));
        }
    }
    if rows.len() < 2 {
        return Err(Error::Fit {
            stage: 1,
            msg: format!("MFN and IFN share {} k values; need at least 2", rows.len()),
        });
    }
    let x = DMatrix::from_fn(rows.len(), 2, |r, c| if c == 0 { rows[r].1 } else { rows[r].2 });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
    let w12 = nnls(&x, &y, 1)?;
    let (m_w1, m_w2) = (w12[0], w12[1]);

    // 2
    let p = phis(mfn)?;
    let x = DMatrix::from_element(mfn.len(), 1, 1.0);
    let y = DVector::from_iterator(
        mfn.len(),
        mfn.iter().zip(&p).map(|(s, p)| s.cpi() - m_w1 * p.phi1 - m_w2 * p.phi2),
    );
    let w0 = nnls(&x, &y, 2)?[0];

    // 3
    let p = phis(ifn)?;
    let x = DMatrix::from_fn(ifn.len(), 2, |r, c| if c == 0 { p[r].phi1 } else { p[r].phi2 });
    let y = DVector::from_iterator(ifn.len(), ifn.iter().map(|s| s.cpi() - w0));
    let w = nnls(&x, &y, 3)?;
    let (i_w1, i_w2) = (w[0], w[1]);

    // 4
    let ifb = series(set, Variant::Ifb, 4)?;
    let p = phis(ifb)?;
    let x = DMatrix::from_fn(ifb.len(), 2, |r, c| if c == 0 { 1.0 } else { p[r].phi3 });
    let y = DVector::from_iterator(
        ifb.len(),
        ifb.iter().zip(&p).map(|(s, p)| s.cpi() - i_w1 * p.phi1 - i_w2 * p.phi2),
    );
    let w = nnls(&x, &y, 4)?;
    let (b_w0, w3) = (w[0], w[1]);

    // 5
    let ivf = series(set, Variant::Ivf, 5)?;
    let p = phis(ivf)?;
    let x = DMatrix::from_fn(ivf.len(), 3, |r, c| match c {
        0 => 1.0,
        1 => p[r].phi1,
        _ => p[r].phi2,
    });
    let y = DVector::from_iterator(ivf.len(), ivf.iter().zip(&p).map(|(s, p)| s.cpi() - w3 * p.phi3));
    let v = nnls(&x, &y, 5)?;

    Ok(StagedFit {
        mfn: CpiWeights::new(w0, m_w1, m_w2, w3),
        ifn: CpiWeights::new(w0, i_w1, i_w2, w3),
        ifb: CpiWeights::new(b_w0, i_w1, i_w2, w3),
        ivf: CpiWeights::new(v[0], v[1], v[2], w3),
    })
}

/// Reads `algo,k,inst,l1cm,llcm,bm,cycles` rows. Row numbers in errors count
/// the header as row 1.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<SampleSet> {
    #[derive(Deserialize)]
    struct Row {
        algo: String,
        k: usize,
        inst: f64,
        l1cm: f64,
        llcm: f64,
        bm: f64,
        cycles: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let want = ["algo", "k", "inst", "l1cm", "llcm", "bm", "cycles"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::parse(1, format!("expected header {}", want.join(","))));
    }
    let mut set = SampleSet::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| Error::Validation {
            row,
            msg: e.to_string(),
        })?;
        let algo: Variant = r.algo.parse().map_err(|_| Error::Validation {
            row,
            msg: format!("unknown algorithm {:?}", r.algo),
        })?;
        if !FIT_ALGORITHMS.contains(&algo) {
            return Err(Error::Validation {
                row,
                msg: format!("{algo} is not one of MFN, IFN, IFB, IVF"),
            });
        }
        let s = DfSample {
            k: r.k,
            inst: r.inst,
            l1cm: r.l1cm,
            llcm: r.llcm,
            bm: r.bm,
            cycles: r.cycles,
        };
        s.validate().map_err(|e| Error::Validation {
            row,
            msg: e.to_string(),
        })?;
        set.entry(algo).or_default().push(s);
    }
    if set.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(set)
}

/// One line of the fit report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoFit {
    pub algo: Variant,
    #[serde(flatten)]
    pub weights: CpiWeights,
    #[serde(flatten)]
    pub errors: FitErrors,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub algorithms: Vec<AlgoFit>,
    pub shared_w3: f64,
    pub sharing_constraints_hold: bool,
}

pub fn fit_report(set: &SampleSet) -> Result<FitReport> {
    let fit = fit_staged(set)?;
    let mut algorithms = Vec::new();
    for algo in FIT_ALGORITHMS {
        let w = *fit.get(algo).expect("fit algorithm");
        let samples = &set[&algo];
        algorithms.push(AlgoFit {
            algo,
            weights: w,
            errors: fit_errors(samples, &w)?,
            samples: samples.len(),
        });
    }
    Ok(FitReport {
        algorithms,
        shared_w3: fit.ifb.w3,
        sharing_constraints_hold: fit.sharing_holds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(k: usize, inst: f64, l1cm: f64, llcm: f64, bm: f64, cycles: f64) -> DfSample {
        DfSample {
            k,
            inst,
            l1cm,
            llcm,
            bm,
            cycles,
        }
    }

    #[test]
    fn phi_examples() {
        let p = phi(&sample(1, 100.0, 3.0, 1.0, 2.0, 50.0)).unwrap();
        assert_eq!((p.phi1, p.phi2, p.phi3), (0.02, 0.01, 0.02));
        let p = phi(&sample(1, 100.0, 0.0, 0.0, 0.0, 50.0)).unwrap();
        assert_eq!(p, PhiVector::default());
        assert!(matches!(
            phi(&sample(1, 0.0, 0.0, 0.0, 0.0, 1.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            phi(&sample(1, 10.0, 1.0, 2.0, 0.0, 1.0)),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn predict_examples() {
        let mfn = CpiWeights::new(0.255, 7.52, 56.1, 23.8);
        assert_eq!(cpi_predict(&mfn, &PhiVector::default()), 0.255);
        let ivf = CpiWeights::new(0.243, 3.13, 13.5, 23.8);
        let p = PhiVector {
            phi1: 0.01,
            phi2: 0.001,
            phi3: 0.0,
        };
        assert!((cpi_predict(&ivf, &p) - 0.2878).abs() < 1e-15);
        let p = PhiVector {
            phi3: 1.0,
            ..Default::default()
        };
        assert_eq!(cpi_predict(&ivf, &p), 0.243 + 23.8);
    }

    #[test]
    fn errors_single_point() {
        // phi = 0 so the model CPI is w0
        let s = [sample(1, 100.0, 0.0, 0.0, 0.0, 50.0)];
        let w = CpiWeights::new(0.55, 0.0, 0.0, 0.0);
        let e = fit_errors(&s, &w).unwrap();
        assert!((e.avg_err - 0.05).abs() < 1e-15);
        assert!((e.max_err - 0.1).abs() < 1e-15);
        assert!((e.avg_err_pct - 10.0).abs() < 1e-12);
        let zero = [sample(1, 100.0, 0.0, 0.0, 0.0, 0.0)];
        assert!(fit_errors(&zero, &w).is_err());
        assert!(fit_errors(&[], &w).is_err());
    }

    #[test]
    fn nnls_clamps_negative_weight() {
        // y = 1 - x; the best nonnegative fit of y ~ a + b x drops b
        let x = DMatrix::from_fn(4, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0, -2.0]);
        let w = nnls(&x, &y, 9).unwrap();
        assert_eq!(w[1], 0.0);
        assert!((w[0] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_rejects_collinear() {
        let x = DMatrix::from_fn(5, 2, |r, c| (r + 1) as f64 * (c + 1) as f64);
        let y = DVector::from_element(5, 1.0);
        assert!(matches!(nnls(&x, &y, 3), Err(Error::Fit { stage: 3, .. })));
    }

    #[test]
    fn csv_validation() {
        let ok = "algo,k,inst,l1cm,llcm,bm,cycles\nMFN,2,100,3,1,0,50\n";
        let set = read_samples_csv(ok.as_bytes()).unwrap();
        assert_eq!(set[&Variant::Mfn].len(), 1);
        let bad = "algo,k,inst,l1cm,llcm,bm,cycles\nMFN,2,100,3,1,0,50\nIFN,2,100,1,3,0,50\n";
        match read_samples_csv(bad.as_bytes()) {
            Err(Error::Validation { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_samples_csv("algo,k\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_series_names_stage() {
        let mut set = SampleSet::new();
        set.insert(
            Variant::Mfn,
            (1..=5).map(|k| sample(k, 1e6, 1e3 * k as f64, 10.0, 0.0, 4e5)).collect(),
        );
        assert!(matches!(fit_staged(&set), Err(Error::Fit { stage: 1, .. })));
    }
}
