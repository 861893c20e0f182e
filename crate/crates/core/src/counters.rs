//! Operation counters and the analytic multiplication / instruction models.
//!
//! Multiplication volumes for one assignment step:
//!
//! * full-expression means (MFN, IFN): `k · Σ_i (nt)_i`
//! * inverted sparse means (IVF) and inverted objects (IVFD):
//!   `Σ_i Σ_h (nc)_{t(i,h)} = Σ_p (no)_p (nc)_p`
//!
//! The instruction model charges `alpha` instructions per inner-loop entry of
//! IFN and `beta` per entry of IVF (the extra ones load the mean id).

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::clustering::Variant;
use crate::data::Dataset;
use crate::means::MeanSet;
use crate::{Error, Result};

/// Tallies for one assignment step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Floating-point multiplications in the similarity loops.
    pub mults: u64,
    /// Accumulations into a partial similarity.
    pub adds: u64,
    /// Innermost-loop entries, executed or skipped.
    pub inner_entries: u64,
    /// Zero tests on mean values (branch variant only).
    pub branch_checks: u64,
    /// Pointer advances of two-way merges.
    pub merge_steps: u64,
}

impl OpCounters {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Inner-loop entries that did not multiply.
    pub fn skipped(&self) -> u64 {
        self.inner_entries - self.mults
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, o: Self) {
        self.mults += o.mults;
        self.adds += o.adds;
        self.inner_entries += o.inner_entries;
        self.branch_checks += o.branch_checks;
        self.merge_steps += o.merge_steps;
    }
}

/// Instructions per inner-loop entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstModelParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for InstModelParams {
    fn default() -> Self {
        Self {
            alpha: 28.0,
            beta: 40.0,
        }
    }
}

impl InstModelParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > alpha && beta.is_finite()) {
            return Err(Error::domain(format!(
                "instruction model needs beta > alpha > 0, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

/// `k · Σ_i (nt)_i`.
pub fn mult_volume_ifn(ds: &Dataset, k: usize) -> u64 {
    k as u64 * ds.sum_nnz()
}

/// `Σ_p (no)_p (nc)_p` from per-term frequencies.
pub fn mult_volume_from_freqs(no: &[u64], nc: &[u64]) -> u64 {
    no.iter().zip(nc).map(|(a, b)| a * b).sum()
}

/// `Σ_p (no)_p (nc)_p` for `ds` against `means`.
pub fn mult_volume_ivf(ds: &Dataset, means: &MeanSet) -> Result<u64> {
    check_dims(ds, means)?;
    Ok(mult_volume_from_freqs(ds.doc_freq(), &means.centroid_freq()))
}

/// The same volume summed object by object, `Σ_i Σ_h (nc)_{t(i,h)}`.
pub fn mult_volume_ivf_objectwise(ds: &Dataset, means: &MeanSet) -> Result<u64> {
    check_dims(ds, means)?;
    let nc = means.centroid_freq();
    Ok(ds
        .vectors()
        .iter()
        .flat_map(|x| x.terms())
        .map(|&t| nc[t as usize - 1])
        .sum())
}

fn check_dims(ds: &Dataset, means: &MeanSet) -> Result<()> {
    if ds.dim() != means.dim() {
        return Err(Error::domain(format!(
            "dataset dimension {} differs from means dimension {}",
            ds.dim(),
            means.dim()
        )));
    }
    Ok(())
}

/// Both multiplication volumes of one assignment step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Volumes {
    /// `k · Σ (nt)_i`
    pub ifn: u64,
    /// `Σ (no)_p (nc)_p`
    pub ivf: u64,
}

impl Volumes {
    pub fn of(ds: &Dataset, means: &MeanSet) -> Result<Self> {
        Ok(Self {
            ifn: mult_volume_ifn(ds, means.k()),
            ivf: mult_volume_ivf(ds, means)?,
        })
    }
}

/// Modeled triple-loop instructions: `alpha · ifn` for IFN, `beta · ivf` for
/// IVF. Other variants have no calibrated constant.
pub fn modeled_instructions(variant: Variant, volumes: Volumes, params: InstModelParams) -> Result<f64> {
    match variant {
        Variant::Ifn => Ok(params.alpha * volumes.ifn as f64),
        Variant::Ivf => Ok(params.beta * volumes.ivf as f64),
        other => Err(Error::domain(format!(
            "no instruction model for {other}; only IFN and IVF are modeled"
        ))),
    }
}

/// Both sides of the IVF-beats-IFN condition `alpha/beta > rhs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub lhs: f64,
    /// `(1/k) · Σ (nc)_p (no)_p / Σ (no)_p`
    pub rhs: f64,
    pub ivf_wins: bool,
}

impl Crossover {
    /// The condition from both volumes: `rhs = ivf / ifn`, one division so
    /// equal rationals give equal doubles.
    pub fn from_volumes(v: Volumes, params: InstModelParams) -> Result<Self> {
        if v.ifn == 0 {
            return Err(Error::domain("crossover undefined for a zero IFN volume"));
        }
        let lhs = params.alpha / params.beta;
        let rhs = v.ivf as f64 / v.ifn as f64;
        Ok(Self {
            lhs,
            rhs,
            ivf_wins: lhs > rhs,
        })
    }
}

/// Evaluates the crossover condition from raw frequencies.
pub fn crossover(no: &[u64], nc: &[u64], k: usize, params: InstModelParams) -> Result<Crossover> {
    if k == 0 {
        return Err(Error::domain("crossover needs k >= 1"));
    }
    let total_no: u64 = no.iter().sum();
    if total_no == 0 {
        return Err(Error::domain("crossover undefined for a dataset without terms"));
    }
    let v = Volumes {
        ifn: k as u64 * total_no,
        ivf: mult_volume_from_freqs(no, nc),
    };
    Crossover::from_volumes(v, params)
}

pub fn ivf_beats_ifn(ds: &Dataset, means: &MeanSet, params: InstModelParams) -> Result<Crossover> {
    check_dims(ds, means)?;
    crossover(ds.doc_freq(), &means.centroid_freq(), means.k(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseVector;
    use crate::means::MeanRepr;

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

    fn tiny_means(repr: MeanRepr) -> MeanSet {
        let s = 1.0 / 6f64.sqrt();
        MeanSet::from_sparse(
            vec![
                SparseVector::new(vec![1, 2, 3], vec![s, 2.0 * s, s]).unwrap(),
                SparseVector::new(vec![3, 4], vec![H, H]).unwrap(),
            ],
            4,
            repr,
        )
        .unwrap()
    }

    #[test]
    fn volumes_on_tiny() {
        let ds = tiny();
        assert_eq!(mult_volume_ifn(&ds, 2), 12);
        assert_eq!(mult_volume_ifn(&ds, 0), 0);
        let m = tiny_means(MeanRepr::SparseInverted);
        assert_eq!(mult_volume_ivf(&ds, &m).unwrap(), 8);
        assert_eq!(mult_volume_ivf_objectwise(&ds, &m).unwrap(), 8);
        let empty = MeanSet::from_sparse(vec![SparseVector::empty(); 2], 4, MeanRepr::SparseInverted)
            .unwrap();
        assert_eq!(mult_volume_ivf(&ds, &empty).unwrap(), 0);
    }

    #[test]
    fn instruction_model() {
        let v = Volumes { ifn: 12, ivf: 8 };
        let p = InstModelParams::default();
        assert_eq!(modeled_instructions(Variant::Ifn, v, p).unwrap(), 336.0);
        assert_eq!(modeled_instructions(Variant::Ivf, v, p).unwrap(), 320.0);
        assert!(modeled_instructions(Variant::Twm, v, p).is_err());
        let same = InstModelParams { alpha: 3.0, beta: 3.0 };
        let eq = Volumes { ifn: 7, ivf: 7 };
        assert_eq!(
            modeled_instructions(Variant::Ifn, eq, same).unwrap(),
            modeled_instructions(Variant::Ivf, eq, same).unwrap()
        );
    }

    #[test]
    fn params_validation() {
        assert!(InstModelParams::new(28.0, 40.0).is_ok());
        assert!(InstModelParams::new(40.0, 28.0).is_err());
        assert!(InstModelParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn crossover_tiny() {
        let ds = tiny();
        let p = InstModelParams::new(0.7, 1.0).unwrap();
        let c = ivf_beats_ifn(&ds, &tiny_means(MeanRepr::SparseInverted), p).unwrap();
        assert!((c.rhs - 2.0 / 3.0).abs() < 1e-15);
        assert!(c.ivf_wins);
    }

    #[test]
    fn crossover_dense_limit() {
        let no = [3, 1, 4];
        let nc = [5, 5, 5];
        let c = crossover(&no, &nc, 5, InstModelParams::default()).unwrap();
        assert_eq!(c.rhs, 1.0);
        assert!(!c.ivf_wins);
    }

    #[test]
    fn crossover_errors() {
        let p = InstModelParams::default();
        assert!(crossover(&[0, 0], &[1, 1], 2, p).is_err());
        assert!(crossover(&[1], &[1], 0, p).is_err());
    }

    #[test]
    fn counters_accumulate() {
        let mut a = OpCounters {
            mults: 3,
            inner_entries: 5,
            ..Default::default()
        };
        a += OpCounters {
            mults: 1,
            inner_entries: 1,
            merge_steps: 2,
            ..Default::default()
        };
        assert_eq!(a.skipped(), 2);
        assert_eq!(a.merge_steps, 2);
        a.reset();
        assert_eq!(a, OpCounters::default());
    }
}
