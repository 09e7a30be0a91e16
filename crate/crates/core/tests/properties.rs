use adapair::data::{nested_prefix, parse_libsvm, split, write_libsvm, SplitSpec};
use adapair::metrics::{auc_bruteforce, auc_rank, ScoredSet, TiesPolicy};
use adapair::optimizer::stage_sizes;
use adapair::pairloss::{full_gradient, full_loss, pair_grad, pair_loss, SquaredPairMoments};
use adapair::prox::{prox_elastic_net, LazyIterate};
use adapair::sampling::{expected_gradient, variance_exact, DEFAULT_ENUMERATION_CAP};
use adapair::theory::{convergence_bound, optimal_inner_iters, stability_generalization_bound, theorem1_bound};
use adapair::{Dataset, Label, Normalization, PairDistribution, PairLoss, PairSampling, Regularizer, SparseVector};
use proptest::prelude::*;

/// Dense row of length `d` with roughly a third of the entries zero.
fn row(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 2 => -2.0..2.0f64], d)
}

fn dataset(max_per_class: usize, max_d: usize) -> impl Strategy<Value = Dataset> {
    (1..=max_per_class, 1..=max_per_class, 1..=max_d).prop_flat_map(|(p, q, d)| {
        prop::collection::vec(row(d), p + q).prop_map(move |rows| {
            let labels = (0..p + q).map(|i| if i < p { Label::Positive } else { Label::Negative }).collect();
            let rows = rows.iter().map(|r| SparseVector::from_dense(r).with_dim(d)).collect();
            Dataset::new(rows, labels).unwrap()
        })
    })
}

fn dataset_and_model(max_per_class: usize, max_d: usize) -> impl Strategy<Value = (Dataset, Vec<f64>)> {
    dataset(max_per_class, max_d).prop_flat_map(|ds| {
        let d = ds.dim();
        (Just(ds), prop::collection::vec(-1.5..1.5f64, d))
    })
}

fn loss_kind() -> impl Strategy<Value = PairLoss> {
    prop_oneof![Just(PairLoss::Squared), Just(PairLoss::Hinge)]
}

fn norm_kind() -> impl Strategy<Value = Normalization> {
    prop_oneof![Just(Normalization::OppositeSpace), Just(Normalization::PairSpace)]
}

fn partition_ok(ds: &Dataset) -> bool {
    let mut seen = vec![false; ds.len()];
    for &i in ds.pos_idx() {
        if ds.label(i) != Label::Positive || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    for &i in ds.neg_idx() {
        if ds.label(i) != Label::Negative || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    seen.iter().all(|&s| s) && ds.n_pos() + ds.n_neg() == ds.len()
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #[test]
    fn libsvm_round_trip(ds in dataset(6, 6)) {
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        let back = parse_libsvm(buf.as_slice()).unwrap().binarize(0).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.rows().iter().zip(ds.rows()) {
            prop_assert_eq!(a.indices(), b.indices());
            prop_assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn partitions_consistent_after_split_and_prefix(ds in dataset(8, 3), seed in any::<u64>(), frac in 0.3..0.9f64) {
        prop_assert!(partition_ok(&ds));
        if let Ok((a, b)) = split(&ds, SplitSpec::new(frac, seed)) {
            prop_assert!(partition_ok(&a) && partition_ok(&b));
            prop_assert_eq!(a.len() + b.len(), ds.len());
        }
        let n = ds.len();
        let mut prev = std::collections::BTreeSet::new();
        for m in 1..=n {
            if let Ok(p) = nested_prefix(&ds, m, seed) {
                prop_assert!(partition_ok(&p));
                let ids: std::collections::BTreeSet<usize> = p.ids().iter().copied().collect();
                prop_assert!(prev.is_subset(&ids));
                prev = ids;
            }
        }
    }

    #[test]
    fn sparse_algebra_matches_dense(a in row(7), b in row(7), w in prop::collection::vec(-3.0..3.0f64, 7)) {
        let (sa, sb) = (SparseVector::from_dense(&a), SparseVector::from_dense(&b));
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mut got = sa.sub(&sb).to_dense();
        got.resize(7, 0.0);
        prop_assert_eq!(got, diff);
        let dot: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
        prop_assert!((sa.dot(&w) - dot).abs() < 1e-12);
    }

    #[test]
    fn losses_nonnegative_and_convex(
        kind in loss_kind(),
        xp in row(4), xn in row(4),
        w1 in prop::collection::vec(-3.0..3.0f64, 4),
        w2 in prop::collection::vec(-3.0..3.0f64, 4),
        t in 0.0..1.0f64,
    ) {
        let (p, n) = (SparseVector::from_dense(&xp).with_dim(4), SparseVector::from_dense(&xn).with_dim(4));
        let l1 = pair_loss(kind, &w1, &p, &n).unwrap();
        let l2 = pair_loss(kind, &w2, &p, &n).unwrap();
        let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lm = pair_loss(kind, &mid, &p, &n).unwrap();
        prop_assert!(l1 >= 0.0 && l2 >= 0.0);
        prop_assert!(lm <= t * l1 + (1.0 - t) * l2 + 1e-12 * (1.0 + l1 + l2));
    }

    #[test]
    fn squared_grad_lipschitz(
        xp in row(4), xn in row(4),
        w1 in prop::collection::vec(-3.0..3.0f64, 4),
        w2 in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        let (p, n) = (SparseVector::from_dense(&xp).with_dim(4), SparseVector::from_dense(&xn).with_dim(4));
        let g1 = pair_grad(PairLoss::Squared, &w1, &p, &n).unwrap().to_dense();
        let g2 = pair_grad(PairLoss::Squared, &w2, &p, &n).unwrap().to_dense();
        let dg: f64 = (0..4).map(|k| (g1.get(k).unwrap_or(&0.0) - g2.get(k).unwrap_or(&0.0)).powi(2)).sum::<f64>().sqrt();
        let dw: f64 = w1.iter().zip(&w2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let delta_sq = p.sub(&n).norm_sq();
        prop_assert!(dg <= 2.0 * delta_sq * dw * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn pair_grad_matches_finite_differences(
        kind in loss_kind(),
        xp in row(4), xn in row(4),
        w in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let (p, n) = (SparseVector::from_dense(&xp).with_dim(4), SparseVector::from_dense(&xn).with_dim(4));
        let m = p.dot(&w) - n.dot(&w);
        // skip a neighbourhood of the hinge kink, where the loss is not differentiable
        prop_assume!(kind == PairLoss::Squared || (m - 1.0).abs() > 1e-3);
        let g = pair_grad(kind, &w, &p, &n).unwrap().to_dense();
        let h = 1e-6;
        for k in 0..4 {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (pair_loss(kind, &up, &p, &n).unwrap() - pair_loss(kind, &dn, &p, &n).unwrap()) / (2.0 * h);
            let gk = g.get(k).copied().unwrap_or(0.0);
            prop_assert!((fd - gk).abs() <= 1e-6 * (1.0 + gk.abs()), "coord {}: fd {} vs {}", k, fd, gk);
        }
    }

    #[test]
    fn full_gradient_is_mean_of_pair_gradients((ds, w) in dataset_and_model(7, 4), kind in loss_kind(), norm in norm_kind()) {
        let got = full_gradient(kind, &w, &ds, norm).unwrap();
        let c = norm.pair_coefficient(ds.n_pos(), ds.n_neg());
        let mut expect = vec![0.0; w.len()];
        for &i in ds.pos_idx() {
            for &j in ds.neg_idx() {
                for (k, v) in pair_grad(kind, &w, ds.row(i), ds.row(j)).unwrap().iter() {
                    expect[k] += c * v;
                }
            }
        }
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn full_gradient_matches_finite_differences((ds, w) in dataset_and_model(5, 3), norm in norm_kind()) {
        let g = full_gradient(PairLoss::Squared, &w, &ds, norm).unwrap();
        let h = 1e-6;
        for k in 0..w.len() {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (full_loss(PairLoss::Squared, &up, &ds, norm).unwrap()
                - full_loss(PairLoss::Squared, &dn, &ds, norm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()));
        }
    }

    #[test]
    fn normalizations_related_by_constant((ds, w) in dataset_and_model(6, 3), kind in loss_kind()) {
        let a = full_loss(kind, &w, &ds, Normalization::OppositeSpace).unwrap();
        let b = full_loss(kind, &w, &ds, Normalization::PairSpace).unwrap();
        let n = ds.len() as f64;
        let factor = 2.0 * ds.n_pos() as f64 * ds.n_neg() as f64 / (n * (n - 1.0));
        prop_assert!((a * factor - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn stochastic_gradient_unbiased(
        (ds, w) in dataset_and_model(6, 4),
        kind in loss_kind(),
        norm in norm_kind(),
        uniform in any::<bool>(),
    ) {
        let dist = PairDistribution::new(if uniform { PairSampling::Uniform } else { PairSampling::Opposite }, &ds).unwrap();
        let e = expected_gradient(kind, &w, &dist, &ds, norm).unwrap();
        let f = full_gradient(kind, &w, &ds, norm).unwrap();
        prop_assert!(rel_close(&e, &f, 1e-12), "{:?} vs {:?}", e, f);
    }

    #[test]
    fn opposite_sampling_reduces_variance((ds, w) in dataset_and_model(6, 4), kind in loss_kind()) {
        prop_assume!(ds.len() >= 3);
        // strict reduction needs at least one nonzero pair gradient
        let any_nonzero = ds.pos_idx().iter().any(|&i| ds.neg_idx().iter().any(|&j| {
            pair_grad(kind, &w, ds.row(i), ds.row(j)).unwrap().nnz() > 0
        }));
        prop_assume!(any_nonzero);
        let u = PairDistribution::new(PairSampling::Uniform, &ds).unwrap();
        let o = PairDistribution::new(PairSampling::Opposite, &ds).unwrap();
        let vu = variance_exact(kind, &w, &u, &ds, Normalization::PairSpace, DEFAULT_ENUMERATION_CAP).unwrap();
        let vo = variance_exact(kind, &w, &o, &ds, Normalization::PairSpace, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert!(vo < vu, "opposite {} vs uniform {}", vo, vu);
    }

    #[test]
    fn prox_optimal_nonexpansive_sparse(
        z1 in row(6), z2 in row(6),
        gamma in 1e-3..10.0f64, l2 in 0.0..2.0f64, l1 in 0.0..2.0f64,
    ) {
        let reg = Regularizer::new(l2, l1).unwrap();
        let w1 = prox_elastic_net(&z1, gamma, &reg).unwrap();
        let w2 = prox_elastic_net(&z2, gamma, &reg).unwrap();
        for (w, z) in w1.iter().zip(&z1) {
            if *z == 0.0 {
                prop_assert_eq!(*w, 0.0);
            }
            let smooth = (w - z) / gamma + 2.0 * l2 * w;
            if *w != 0.0 {
                prop_assert!((smooth + l1 * w.signum()).abs() <= 1e-8 * (1.0 + z.abs() / gamma));
            } else {
                prop_assert!(smooth.abs() <= l1 + 1e-8);
            }
        }
        let dw: f64 = w1.iter().zip(&w2).map(|(a, b)| (a - b).powi(2)).sum();
        let dz: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b).powi(2)).sum();
        prop_assert!(dw <= dz * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn lazy_iterate_matches_dense(
        w0 in row(5),
        grads in prop::collection::vec(row(5), 1..30),
        gamma in 1e-3..0.5f64, l2 in 0.0..1.0f64, l1 in 0.0..0.5f64,
    ) {
        let reg = Regularizer::new(l2, l1).unwrap();
        let mut lazy = LazyIterate::new(w0.clone(), reg, gamma).unwrap();
        let mut dense = w0.clone();
        for g in &grads {
            prop_assert!(lazy.step(&SparseVector::from_dense(g).with_dim(5)));
            let z: Vec<f64> = dense.iter().zip(g).map(|(w, g)| w - gamma * g).collect();
            dense = prox_elastic_net(&z, gamma, &reg).unwrap();
        }
        let got = lazy.into_weights();
        prop_assert!(rel_close(&got, &dense, 1e-12), "{:?} vs {:?}", got, dense);
    }

    #[test]
    fn auc_rank_equals_bruteforce(
        scores in prop::collection::vec(prop_oneof![(-3i32..3).prop_map(f64::from), -3.0..3.0f64], 2..80),
        bits in prop::collection::vec(any::<bool>(), 80),
    ) {
        let mut labels: Vec<Label> = scores.iter().zip(&bits)
            .map(|(_, &b)| if b { Label::Positive } else { Label::Negative }).collect();
        labels[0] = Label::Positive;
        labels[1] = Label::Negative;
        let ss = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
        for t in [TiesPolicy::Half, TiesPolicy::Strict] {
            let a = auc_rank(&ss, t).unwrap();
            let b = auc_bruteforce(&ss, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
        // strictly increasing transform
        let warped = ScoredSet::new(scores.iter().map(|s| s.exp() * 3.0 - 1.0).collect(), labels.clone()).unwrap();
        prop_assert_eq!(auc_rank(&warped, TiesPolicy::Half).unwrap(), auc_rank(&ss, TiesPolicy::Half).unwrap());
        let flipped = ScoredSet::new(scores.iter().map(|s| -s).collect(), labels).unwrap();
        let s = auc_rank(&ss, TiesPolicy::Half).unwrap() + auc_rank(&flipped, TiesPolicy::Half).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn stage_sizes_shape(n in 2usize..5000, m0 in 2usize..200, beta in 1.05..8.0f64) {
        prop_assume!(m0 <= n);
        let s = stage_sizes(n, m0, beta).unwrap();
        prop_assert_eq!(s[0], m0);
        prop_assert_eq!(*s.last().unwrap(), n);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        for w in s.windows(2) {
            prop_assert_eq!(w[1], ((beta * w[0] as f64).ceil() as usize).max(w[0] + 1).min(n));
        }
    }

    #[test]
    fn bounds_monotone(
        delta in 0.0..1.0f64, n in 10usize..10_000, alpha in 0.01..0.5f64,
        g in 0.1..5.0f64, gamma in 1e-3..1.0f64, t in 1u64..100_000,
    ) {
        let m = n / 2;
        prop_assert!(theorem1_bound(delta, m + 1, n, alpha) <= theorem1_bound(delta, m, n, alpha));
        let gammas = vec![gamma; 50];
        prop_assert!(stability_generalization_bound(g, n + 1, &gammas) < stability_generalization_bound(g, n, &gammas));
        prop_assert!(convergence_bound(1.0, gamma, 0.5, 0.3, t + 1) < convergence_bound(1.0, gamma, 0.5, 0.3, t));
    }

    #[test]
    fn optimal_iters_is_integer_argmin(g in 0.1..3.0f64, mu in 0.05..3.0f64, gamma in 0.01..3.0f64, n in 2usize..60) {
        let t = optimal_inner_iters(g, mu, gamma, n).unwrap();
        prop_assume!(t <= 20_000);
        let f = |t: u64| adapair::theory::inner_iters_objective(g, mu, gamma, n, t);
        let grid = (1..=10 * t).min_by(|&a, &b| f(a).total_cmp(&f(b))).unwrap();
        prop_assert_eq!(t, grid);
    }

    #[test]
    fn moments_agree_with_enumeration((ds, w) in dataset_and_model(6, 4), norm in norm_kind()) {
        let m = SquaredPairMoments::new(&ds, norm).unwrap();
        let a = m.loss(&w);
        let b = full_loss(PairLoss::Squared, &w, &ds, norm).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        prop_assert!(rel_close(&m.gradient(&w), &full_gradient(PairLoss::Squared, &w, &ds, norm).unwrap(), 1e-10));
    }
}
