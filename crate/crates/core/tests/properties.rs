use proptest::prelude::*;

use sparse_kmeans::cache::{self, CacheParams, FreqProfile, ZStar};
use sparse_kmeans::clustering::{centroid_oracle, init_means, objective_cosine};
use sparse_kmeans::counters::{crossover, ivf_beats_ifn, mult_volume_ifn, mult_volume_ivf};
use sparse_kmeans::cpi::{cpi_predict, fit_errors, fit_staged, CpiWeights, DfSample, PhiVector};
use sparse_kmeans::data::OwnerKind;
use sparse_kmeans::means::MeanRepr;
use sparse_kmeans::synth;
use sparse_kmeans::{
    run, Dataset, InstModelParams, InvertedFile, MeanSet, OpCounters, RunConfig, Runner, SparseVector, Variant,
};

fn sparse_vec(dim: usize) -> impl Strategy<Value = SparseVector> {
    proptest::collection::btree_map(1..=dim as u32, -1.0f64..1.0, 0..=dim.min(12)).prop_map(|m| {
        SparseVector::from_entries(m.into_iter().filter(|(_, v)| *v != 0.0).collect()).unwrap()
    })
}

fn vectors() -> impl Strategy<Value = (usize, Vec<SparseVector>)> {
    (1usize..30).prop_flat_map(|dim| (Just(dim), proptest::collection::vec(sparse_vec(dim), 0..25)))
}

/// Normalized dataset without empty objects.
fn dataset() -> impl Strategy<Value = Dataset> {
    (2usize..25).prop_flat_map(|dim| {
        proptest::collection::vec(sparse_vec(dim), 2..30).prop_filter_map("too few nonempty objects", move |vs| {
            let vs: Vec<_> = vs.into_iter().filter(|v| !v.is_empty()).collect();
            if vs.len() < 2 {
                return None;
            }
            Dataset::normalize(vs, dim).ok()
        })
    })
}

fn profile() -> impl Strategy<Value = FreqProfile> {
    (1u64..60, 1u64..20, 1usize..25).prop_flat_map(|(n, k, d)| {
        (
            proptest::collection::vec(0..=n, d),
            proptest::collection::vec(0..=k, d),
        )
            .prop_map(move |(no, nc)| FreqProfile::new(n, k, no, nc).unwrap())
    })
}

/// Small dyadic rationals: every sum and product below stays exact.
fn dyadic() -> impl Strategy<Value = f64> {
    (0i32..256).prop_map(|v| v as f64 / 64.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inverted_round_trip((dim, vs) in vectors()) {
        let inv = InvertedFile::build(&vs, dim, OwnerKind::Means).unwrap();
        prop_assert_eq!(inv.to_vectors(), vs.clone());
        prop_assert_eq!(inv.total_postings(), vs.iter().map(SparseVector::nnz).sum::<usize>());
    }

    #[test]
    fn sparse_dot_matches_dense((dim, vs) in vectors()) {
        for a in &vs {
            for b in &vs {
                let dense: f64 = a.to_dense(dim).iter().zip(b.to_dense(dim)).map(|(x, y)| x * y).sum();
                prop_assert!((a.dot(b) - dense).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn doc_freq_sums_to_nnz(ds in dataset()) {
        prop_assert_eq!(ds.doc_freq().iter().sum::<u64>(), ds.sum_nnz());
    }

    #[test]
    fn counter_laws_hold(ds in dataset(), k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((ds.len() - 1) as f64 * k_frac) as usize;
        let means = init_means(&ds, k, seed, MeanRepr::SparseStandard).unwrap();
        let full = mult_volume_ifn(&ds, k);
        let vol = mult_volume_ivf(&ds, &means).unwrap();
        let mut by_variant = Vec::new();
        for v in Variant::ALL {
            let mut r = Runner::from_means(v, &ds, means.clone()).unwrap();
            let mut c = OpCounters::default();
            let asg = r.assign(&mut c).unwrap();
            by_variant.push((v, c, asg.digest()));
        }
        let get = |v: Variant| by_variant.iter().find(|x| x.0 == v).unwrap().1;
        prop_assert_eq!(get(Variant::Mfn).mults, full);
        prop_assert_eq!(get(Variant::Ifn).mults, full);
        prop_assert_eq!(get(Variant::Ivf).mults, vol);
        prop_assert_eq!(get(Variant::Ivfd).mults, vol);
        prop_assert_eq!(get(Variant::Twm).mults, vol);
        prop_assert_eq!(get(Variant::Ifb).branch_checks, full);
        prop_assert_eq!(get(Variant::Ifb).mults + get(Variant::Ifb).skipped(), full);
        prop_assert!(vol <= full);
        prop_assert!(by_variant.windows(2).all(|w| w[0].2 == w[1].2));
    }

    #[test]
    fn all_variants_reach_the_same_clustering(ds in dataset(), seed in any::<u64>()) {
        let k = 1 + (seed as usize % ds.len());
        let cfg = RunConfig::new(k, seed, 20);
        let reference = run(Variant::Ref, &ds, &cfg).unwrap();
        for v in &Variant::ALL[1..] {
            let r = run(*v, &ds, &cfg).unwrap();
            prop_assert_eq!(r.digests(), reference.digests(), "{}", v);
            for (a, b) in r.iterations.iter().zip(&reference.iterations) {
                prop_assert!((a.objective - b.objective).abs() <= 1e-9 * b.objective.abs().max(1.0));
            }
        }
    }

    #[test]
    fn update_matches_centroid_oracle(ds in dataset(), seed in any::<u64>()) {
        let k = 1 + (seed as usize % ds.len());
        let mut r = Runner::new(Variant::Ivf, &ds, k, seed).unwrap();
        r.step().unwrap();
        let asg = r.assignment().unwrap().clone();
        let oracle = centroid_oracle(&ds, &asg);
        let got = r.means().to_sparse();
        for (j, (g, o)) in got.iter().zip(&oracle).enumerate() {
            if asg.sizes()[j] == 0 {
                continue;
            }
            prop_assert_eq!(g.terms(), o.terms());
            for (a, b) in g.values().iter().zip(o.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        let obj = objective_cosine(&ds, &asg, r.means()).unwrap();
        prop_assert!(obj <= ds.len() as f64 + 1e-9);
    }

    #[test]
    fn crossover_matches_instruction_order(ds in dataset(), seed in any::<u64>(), a in 1u32..60, extra in 1u32..60) {
        let k = 1 + (seed as usize % ds.len());
        let means = init_means(&ds, k, seed, MeanRepr::SparseInverted).unwrap();
        let p = InstModelParams::new(a as f64, (a + extra) as f64).unwrap();
        let c = ivf_beats_ifn(&ds, &means, p).unwrap();
        let ivf = p.beta * mult_volume_ivf(&ds, &means).unwrap() as f64;
        let ifn = p.alpha * mult_volume_ifn(&ds, k) as f64;
        prop_assert_eq!(c.ivf_wins, ivf < ifn);
    }

    #[test]
    fn crossover_is_scale_free(p in profile(), m in 1u64..5) {
        prop_assume!(p.no.iter().any(|&o| o > 0));
        let params = InstModelParams::default();
        let a = crossover(&p.no, &p.nc, p.k as usize, params).unwrap();
        let no: Vec<u64> = p.no.iter().map(|o| o * m).collect();
        let b = crossover(&no, &p.nc, p.k as usize, params).unwrap();
        prop_assert_eq!(a.ivf_wins, b.ivf_wins);
    }

    #[test]
    fn cpi_predict_is_affine(
        w in (dyadic(), dyadic(), dyadic(), dyadic()),
        f in (dyadic(), dyadic(), dyadic()),
        g in (dyadic(), dyadic(), dyadic()),
        a in 0u32..8, b in 0u32..8,
    ) {
        let w = CpiWeights::new(w.0, w.1, w.2, w.3);
        let phi = PhiVector { phi1: f.0, phi2: f.1, phi3: f.2 };
        let psi = PhiVector { phi1: g.0, phi2: g.1, phi3: g.2 };
        let (a, b) = (a as f64, b as f64);
        let mix = PhiVector {
            phi1: a * phi.phi1 + b * psi.phi1,
            phi2: a * phi.phi2 + b * psi.phi2,
            phi3: a * phi.phi3 + b * psi.phi3,
        };
        let lhs = cpi_predict(&w, &mix);
        let rhs = w.w0 + a * (cpi_predict(&w, &phi) - w.w0) + b * (cpi_predict(&w, &psi) - w.w0);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn fit_errors_ignore_order(mut cycles in proptest::collection::vec(1u32..1000, 1..12), w0 in 0.1f64..5.0) {
        let mk = |c: &[u32]| -> Vec<DfSample> {
            c.iter().enumerate().map(|(i, &c)| DfSample {
                k: i + 1, inst: 100.0, l1cm: 0.0, llcm: 0.0, bm: 0.0, cycles: c as f64,
            }).collect()
        };
        let w = CpiWeights::new(w0, 0.0, 0.0, 0.0);
        let a = fit_errors(&mk(&cycles), &w).unwrap();
        cycles.reverse();
        let b = fit_errors(&mk(&cycles), &w).unwrap();
        prop_assert!((a.avg_err - b.avg_err).abs() <= 1e-12 * a.avg_err.max(1.0));
        prop_assert_eq!(a.max_err, b.max_err);
    }

    #[test]
    fn z_star_matches_linear_scan(p in profile(), nb in 0u64..60) {
        let c = CacheParams { nb_llc: nb, ..Default::default() };
        let limit = cache::e_nb_ivf_limit(&p, &c);
        let scan = if limit <= nb {
            ZStar::Unbounded
        } else {
            let mut z = 0;
            while cache::e_nb_ivf_z(&p, &c, z + 1) <= nb as f64 {
                z += 1;
            }
            ZStar::Finite(z)
        };
        prop_assert_eq!(cache::find_z_star(&p, &c), scan);
    }

    #[test]
    fn block_expectation_grows_with_z(p in profile(), z in 0u64..200) {
        let c = CacheParams::default();
        prop_assert!(cache::e_nb_ivf_z(&p, &c, z) <= cache::e_nb_ivf_z(&p, &c, z + 1));
        prop_assert_eq!(cache::e_nb_ivf_z(&p, &c, 1), cache::e_nb_ivf(&p, &c));
    }

    #[test]
    fn profile_csv_round_trip(p in profile()) {
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        prop_assert_eq!(FreqProfile::read_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn native_csv_round_trip(ds in dataset()) {
        let mut buf = Vec::new();
        ds.write_native_csv(&mut buf).unwrap();
        let back = Dataset::read_native_csv(buf.as_slice(), Some(ds.dim())).unwrap();
        prop_assert_eq!(back.vectors(), ds.vectors());
    }
}

#[test]
fn staged_fit_respects_sharing_bit_exactly() {
    let gen = [
        (Variant::Mfn, CpiWeights::new(0.3, 4.0, 20.0, 0.0)),
        (Variant::Ifn, CpiWeights::new(0.3, 4.0, 20.0, 0.0)),
        (Variant::Ifb, CpiWeights::new(0.31, 4.0, 20.0, 10.0)),
        (Variant::Ivf, CpiWeights::new(0.2, 2.0, 9.0, 10.0)),
    ];
    let ks: Vec<usize> = (1..=8).map(|i| 250 * i).collect();
    for seed in 0..5 {
        let fit = fit_staged(&synth::cpi_series(&gen, &ks, 0.02, seed)).unwrap();
        assert!(fit.sharing_holds());
        for w in [fit.mfn, fit.ifn, fit.ifb, fit.ivf] {
            w.validate().unwrap();
        }
    }
}

/// Miss rate of IVF against `k` on a Zipf profile at corpus scale, with
/// centroid frequencies spreading as `k` grows.
#[test]
fn ivf_miss_rate_rises_with_k_and_stays_below_ivfd_rate() {
    let c = CacheParams::default();
    let beta = 40.0;
    let bound = c.gamma() / beta;
    let mut prev = 0.0;
    for k in [200u64, 500, 1000, 2000, 5000, 10_000, 20_000, 100_000, 1_000_000] {
        let p = synth::zipf_profile(1_000_000, 140_914, 58_950_000, 1.0, k).unwrap();
        let z = cache::find_z_star(&p, &c);
        let rate = cache::llcm_ivf(&p, &c, z, beta).rate;
        assert!(rate >= prev, "k={k}: rate {rate:e} fell below {prev:e}");
        assert!(rate <= bound * 1.05, "k={k}: rate {rate:e} above {bound:e}");
        prev = rate;
    }
}

#[test]
fn e_nb_ordering_at_corpus_scale() {
    let c = CacheParams::default();
    for k in [200u64, 1000, 10_000] {
        let p = synth::zipf_profile(1_000_000, 140_914, 58_950_000, 1.0, k).unwrap();
        let (ivf, ivfd) = (cache::e_nb_ivf(&p, &c), cache::e_nb_ivfd(&p, &c).unwrap());
        assert!(ivf < c.nb_llc as f64 && (c.nb_llc as f64) < ivfd, "k={k}: {ivf} {ivfd}");
    }
}

#[test]
fn mean_set_layouts_agree_on_similarities() {
    let ds = synth::zipf_corpus(&synth::CorpusConfig::new(200, 80, 6.0, 1)).unwrap();
    let base = init_means(&ds, 7, 3, MeanRepr::SparseStandard).unwrap();
    let layouts: Vec<MeanSet> = [MeanRepr::Dense, MeanRepr::DenseInverted, MeanRepr::SparseInverted]
        .iter()
        .map(|&r| base.convert(r))
        .collect();
    for x in ds.vectors() {
        for j in 0..7 {
            let want = base.dot(j, x);
            for l in &layouts {
                assert_eq!(l.dot(j, x), want);
            }
        }
    }
}
