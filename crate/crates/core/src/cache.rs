//! Closed-form last-level-cache models for IVF and IVFD under a fully
//! associative LRU idealization.
//!
//! A posting list of `n` tuples occupies `⌈n·γ⌉` blocks, `γ = tuple/block`.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::means::MeanSet;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheParams {
    pub cache_bytes: u64,
    pub block_bytes: u64,
    pub tuple_bytes: u64,
    /// Blocks available to the mean index.
    pub nb_llc: u64,
}

impl Default for CacheParams {
    fn default() -> Self {
        Self {
            cache_bytes: 36_700_160,
            block_bytes: 64,
            tuple_bytes: 12,
            nb_llc: 500_000,
        }
    }
}

impl CacheParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_bytes == 0 || self.tuple_bytes == 0 || self.tuple_bytes > self.block_bytes {
            return Err(Error::domain(format!(
                "need 0 < tuple_bytes <= block_bytes, got {} and {}",
                self.tuple_bytes, self.block_bytes
            )));
        }
        if self.nb_llc > self.cache_bytes / self.block_bytes {
            return Err(Error::domain(format!(
                "nb_llc {} exceeds the {} blocks of the cache",
                self.nb_llc,
                self.cache_bytes / self.block_bytes
            )));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.tuple_bytes as f64 / self.block_bytes as f64
    }

    /// `⌈n·γ⌉` in integer arithmetic.
    pub fn blocks(&self, n: u64) -> u64 {
        ((n as u128 * self.tuple_bytes as u128).div_ceil(self.block_bytes as u128)) as u64
    }
}

/// Per-term object and centroid frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqProfile {
    #[serde(rename = "N")]
    pub n: u64,
    pub k: u64,
    /// `(no)_p`, index `p - 1`.
    pub no: Vec<u64>,
    /// `(nc)_p`, index `p - 1`.
    pub nc: Vec<u64>,
}

impl FreqProfile {
    pub fn new(n: u64, k: u64, no: Vec<u64>, nc: Vec<u64>) -> Result<Self> {
        let p = Self { n, k, no, nc };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.no.len() != self.nc.len() {
            return Err(Error::domain("no and nc have different lengths"));
        }
        if self.n == 0 {
            return Err(Error::domain("profile needs N >= 1"));
        }
        for (i, (&o, &c)) in self.no.iter().zip(&self.nc).enumerate() {
            if o > self.n || c > self.k {
                return Err(Error::domain(format!(
                    "term {}: need no <= N and nc <= k, got no={o} nc={c}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.no.len()
    }

    /// Frequencies of `ds` against `means`.
    pub fn from_run(ds: &Dataset, means: &MeanSet) -> Result<Self> {
        if ds.dim() != means.dim() {
            return Err(Error::domain("dataset and means differ in dimension"));
        }
        Self::new(
            ds.len() as u64,
            means.k() as u64,
            ds.doc_freq().to_vec(),
            means.centroid_freq(),
        )
    }

    /// `Σ_p (no)_p (nc)_p`.
    pub fn volume(&self) -> u128 {
        self.no
            .iter()
            .zip(&self.nc)
            .map(|(&a, &b)| a as u128 * b as u128)
            .sum()
    }

    /// Reads the profile format: a `N,k,D` header and its values, then a
    /// `term_id,no,nc` header and one row per term. Unlisted terms are zero.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(Error::parse(0, format!("missing {what}"))),
            }
        };
        let (ln, head) = next("N,k,D header").map_err(|_| Error::EmptyInput)?;
        if squash(&head) != "N,k,D" {
            return Err(Error::parse(ln, "expected header N,k,D"));
        }
        let (ln, vals) = next("N,k,D values")?;
        let vals = ints(&vals, 3, ln)?;
        let (n, k, d) = (vals[0], vals[1], vals[2] as usize);
        let (ln, head) = next("term_id,no,nc header")?;
        if squash(&head) != "term_id,no,nc" {
            return Err(Error::parse(ln, "expected header term_id,no,nc"));
        }
        let mut no = vec![0; d];
        let mut nc = vec![0; d];
        let mut seen = vec![false; d];
        for (ln, line) in lines {
            let row = ints(&line?, 3, ln)?;
            let t = row[0] as usize;
            if t == 0 || t > d {
                return Err(Error::parse(ln, format!("term_id {t} outside 1..={d}")));
            }
            if std::mem::replace(&mut seen[t - 1], true) {
                return Err(Error::parse(ln, format!("duplicate term_id {t}")));
            }
            if row[1] > n || row[2] > k {
                return Err(Error::parse(
                    ln,
                    format!("need no <= N and nc <= k, got no={} nc={}", row[1], row[2]),
                ));
            }
            no[t - 1] = row[1];
            nc[t - 1] = row[2];
        }
        Self::new(n, k, no, nc)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,k,D")?;
        writeln!(w, "{},{},{}", self.n, self.k, self.dim())?;
        writeln!(w, "term_id,no,nc")?;
        for (p, (o, c)) in self.no.iter().zip(&self.nc).enumerate() {
            if *o != 0 || *c != 0 {
                writeln!(w, "{},{o},{c}", p + 1)?;
            }
        }
        Ok(())
    }
}

fn squash(s: &str) -> String {
    s.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

fn ints(line: &str, n: usize, ln: usize) -> Result<Vec<u64>> {
    let vals: Vec<u64> = line
        .split(',')
        .map(|f| f.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(ln, format!("{e} in {line:?}")))?;
    if vals.len() != n {
        return Err(Error::parse(ln, format!("expected {n} fields, got {}", vals.len())));
    }
    Ok(vals)
}

/// `1 − (1 − x)^z`: chance that at least one of `z` objects touches a term of
/// document frequency ratio `x`.
fn touch_probability(x: f64, z: u64) -> f64 {
    match z {
        0 => 0.0,
        _ => -(z as f64 * (-x).ln_1p()).exp_m1(),
    }
}

/// `(1 − x)^z`, with `z = ∞` giving 0 for `x > 0`.
fn untouched(x: f64, z: ZStar) -> f64 {
    match z {
        ZStar::Finite(0) => 1.0,
        ZStar::Finite(z) => (z as f64 * (-x).ln_1p()).exp(),
        ZStar::Unbounded if x > 0.0 => 0.0,
        ZStar::Unbounded => 1.0,
    }
}

/// `E[NB_IVF] = Σ_p ((no)_p/N)·⌈(nc)_p γ⌉`: blocks of the mean index touched
/// by one object.
pub fn e_nb_ivf(p: &FreqProfile, c: &CacheParams) -> f64 {
    let total: u128 = p
        .no
        .iter()
        .zip(&p.nc)
        .map(|(&o, &m)| o as u128 * c.blocks(m) as u128)
        .sum();
    total as f64 / p.n as f64
}

/// `E[NB_IVFD] = Σ_p ((nc)_p/k)·⌈(no)_p γ⌉`: blocks of the object index
/// touched by one mean.
pub fn e_nb_ivfd(p: &FreqProfile, c: &CacheParams) -> Result<f64> {
    if p.k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let total: u128 = p
        .no
        .iter()
        .zip(&p.nc)
        .map(|(&o, &m)| m as u128 * c.blocks(o) as u128)
        .sum();
    Ok(total as f64 / p.k as f64)
}

/// Expected mean-index blocks touched by `z` consecutive objects,
/// `Σ_p {1 − (1 − (no)_p/N)^z}·⌈(nc)_p γ⌉`.
/// At `z = 1` this is [`e_nb_ivf`].
pub fn e_nb_ivf_z(p: &FreqProfile, c: &CacheParams, z: u64) -> f64 {
    if z == 1 {
        return e_nb_ivf(p, c);
    }
    let n = p.n as f64;
    p.no
        .iter()
        .zip(&p.nc)
        .map(|(&o, &m)| touch_probability(o as f64 / n, z) * c.blocks(m) as f64)
        .sum()
}

/// Blocks of every posting list some object can touch, the `z → ∞` limit.
pub fn e_nb_ivf_limit(p: &FreqProfile, c: &CacheParams) -> u64 {
    p.no
        .iter()
        .zip(&p.nc)
        .filter(|(&o, _)| o > 0)
        .map(|(_, &m)| c.blocks(m))
        .sum()
}

/// Largest number of consecutive objects whose touched mean blocks fit in
/// the cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZStar {
    Finite(u64),
    /// The whole reachable index fits.
    Unbounded,
}

impl fmt::Display for ZStar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZStar::Finite(z) => write!(f, "{z}"),
            ZStar::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Exponential then binary search for the largest `z` with
/// `E[NB^(z)] ≤ nb_llc`.
pub fn find_z_star(p: &FreqProfile, c: &CacheParams) -> ZStar {
    let nb = c.nb_llc as f64;
    if e_nb_ivf_limit(p, c) <= c.nb_llc {
        return ZStar::Unbounded;
    }
    let fits = |z: u64| e_nb_ivf_z(p, c, z) <= nb;
    if !fits(1) {
        return ZStar::Finite(0);
    }
    let (mut lo, mut hi) = (1u64, 2u64);
    while fits(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if lo == u64::MAX {
            return ZStar::Unbounded;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ZStar::Finite(lo)
}

/// Modeled LLC misses of one assignment step and their rate per modeled
/// instruction `β·Σ(no)_p(nc)_p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissModel {
    pub exact: f64,
    pub approx: f64,
    pub rate: f64,
    pub approx_rate: f64,
}

fn rates(exact: f64, approx: f64, vol: u128, beta: f64) -> MissModel {
    let denom = beta * vol as f64;
    let rate = |v: f64| if denom > 0.0 { v / denom } else { 0.0 };
    MissModel {
        exact,
        approx,
        rate: rate(exact),
        approx_rate: rate(approx),
    }
}

/// `LLCM_IVFD = Σ_p (nc)_p ⌈(no)_p γ⌉ ≈ γ Σ_p (no)_p (nc)_p`.
pub fn llcm_ivfd(p: &FreqProfile, c: &CacheParams, beta: f64) -> MissModel {
    let exact: f64 = p
        .no
        .iter()
        .zip(&p.nc)
        .map(|(&o, &m)| m as f64 * c.blocks(o) as f64)
        .sum();
    let vol = p.volume();
    rates(exact, c.gamma() * vol as f64, vol, beta)
}

/// `LLCM_IVF = N Σ_p ((no)_p/N)(1 − (no)_p/N)^{z*} ⌈(nc)_p γ⌉`, approximated
/// by `γ Σ_p (no)_p (nc)_p (1 − (no)_p/N)^{z*}`.
pub fn llcm_ivf(p: &FreqProfile, c: &CacheParams, z: ZStar, beta: f64) -> MissModel {
    let n = p.n as f64;
    let g = c.gamma();
    let (mut exact, mut approx) = (0.0, 0.0);
    for (&o, &m) in p.no.iter().zip(&p.nc) {
        if o == 0 || m == 0 {
            continue;
        }
        let x = o as f64 / n;
        let miss = untouched(x, z);
        exact += x * miss * c.blocks(m) as f64;
        approx += g * o as f64 * m as f64 * miss;
    }
    rates(n * exact, approx, p.volume(), beta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub params: CacheParams,
    pub gamma: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub k: u64,
    #[serde(rename = "D")]
    pub d: usize,
    pub e_nb_ivf: f64,
    pub e_nb_ivfd: f64,
    pub z_star: ZStar,
    pub llcm_ivf: MissModel,
    pub llcm_ivfd: MissModel,
}

pub fn cache_report(p: &FreqProfile, c: &CacheParams, beta: f64) -> Result<CacheReport> {
    c.validate()?;
    p.validate()?;
    let e_nb_ivfd = e_nb_ivfd(p, c)?;
    let z = find_z_star(p, c);
    Ok(CacheReport {
        params: *c,
        gamma: c.gamma(),
        beta,
        n: p.n,
        k: p.k,
        d: p.dim(),
        e_nb_ivf: e_nb_ivf(p, c),
        e_nb_ivfd,
        z_star: z,
        llcm_ivf: llcm_ivf(p, c, z, beta),
        llcm_ivfd: llcm_ivfd(p, c, beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FreqProfile {
        FreqProfile::new(3, 2, vec![1, 2, 2, 1], vec![1, 1, 2, 1]).unwrap()
    }

    #[test]
    fn defaults() {
        let c = CacheParams::default();
        assert_eq!(c.gamma(), 0.1875);
        c.validate().unwrap();
        assert_eq!(c.blocks(0), 0);
        assert_eq!(c.blocks(1), 1);
        assert_eq!(c.blocks(16), 3);
        assert_eq!(c.blocks(17), 4);
        assert!((c.gamma() / 40.0 - 4.6875e-3).abs() < 1e-18);
    }

    #[test]
    fn tiny_block_counts() {
        let c = CacheParams::default();
        let p = tiny();
        assert_eq!(e_nb_ivf(&p, &c), 2.0);
        assert_eq!(e_nb_ivfd(&p, &c).unwrap(), 2.5);
        assert_eq!(e_nb_ivf_z(&p, &c, 0), 0.0);
        assert_eq!(e_nb_ivf_z(&p, &c, 1), e_nb_ivf(&p, &c));
        assert!((e_nb_ivf_z(&p, &c, 10_000) - 4.0).abs() < 1e-12);
        let zero_k = FreqProfile::new(3, 0, vec![1, 2, 2, 1], vec![0; 4]).unwrap();
        assert!(e_nb_ivfd(&zero_k, &c).is_err());
        assert_eq!(e_nb_ivf(&zero_k, &c), 0.0);
    }

    #[test]
    fn gamma_one_degenerates() {
        let c = CacheParams {
            tuple_bytes: 64,
            ..Default::default()
        };
        let p = FreqProfile::new(4, 1, vec![1, 3, 4], vec![1, 1, 1]).unwrap();
        assert_eq!(e_nb_ivf(&p, &c), 0.25 + 0.75 + 1.0);
    }

    #[test]
    fn tiny_misses() {
        let c = CacheParams::default();
        let m = llcm_ivfd(&tiny(), &c, 40.0);
        assert_eq!(m.exact, 5.0);
        assert_eq!(m.approx, 1.5);
        assert_eq!(m.rate, 5.0 / 320.0);
    }

    #[test]
    fn z_star_limits() {
        let p = tiny();
        let c = CacheParams::default();
        assert_eq!(find_z_star(&p, &c), ZStar::Unbounded);
        let none = CacheParams { nb_llc: 0, ..c };
        assert_eq!(find_z_star(&p, &none), ZStar::Finite(0));
        let three = CacheParams { nb_llc: 3, ..c };
        // e(2) = 26/9, e(3) = 10/3
        assert_eq!(find_z_star(&p, &three), ZStar::Finite(2));
        assert_eq!(llcm_ivf(&p, &c, ZStar::Unbounded, 40.0).exact, 0.0);
    }

    #[test]
    fn z_zero_is_every_access_missing() {
        let p = tiny();
        let c = CacheParams::default();
        let ivf = llcm_ivf(&p, &c, ZStar::Finite(0), 40.0);
        assert_eq!(ivf.approx, c.gamma() * p.volume() as f64);
        assert!((ivf.exact - 6.0).abs() < 1e-12);
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = tiny();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(FreqProfile::read_csv(buf.as_slice()).unwrap(), p);
        assert!(matches!(FreqProfile::read_csv("".as_bytes()), Err(Error::EmptyInput)));
        let dup = "N,k,D\n3,2,4\nterm_id,no,nc\n1,1,1\n1,1,1\n";
        assert!(matches!(
            FreqProfile::read_csv(dup.as_bytes()),
            Err(Error::Parse { line: 5, .. })
        ));
        let over = "N,k,D\n3,2,4\nterm_id,no,nc\n1,1,3\n";
        assert!(FreqProfile::read_csv(over.as_bytes()).is_err());
    }

    #[test]
    fn params_validation() {
        let bad = CacheParams {
            tuple_bytes: 65,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let too_many = CacheParams {
            nb_llc: 1 << 40,
            ..Default::default()
        };
        assert!(too_many.validate().is_err());
    }
}
