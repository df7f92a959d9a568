use lmcortex::causal::{graph_from_aggregate, Direction, degree_partition};
use lmcortex::encoder::{fit_encoding, EncodingConfig, FoldSpec};
use lmcortex::ingest::{align_tokens_to_tr, fir_expand, hfm, BoldMatrix, TokenTimeline};
use lmcortex::mat::{pca_fit, pearson, ridge_solve, spearman};
use lmcortex::temporal::{autocorr, fit_time_constant};
use lmcortex::toylm::{perturbation_pair, toylm_init, ToyLmConfig};
use lmcortex::Matrix;
use proptest::prelude::*;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| Matrix::new(r, c, v).unwrap())
    })
}

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn distinct(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[1] - w[0] > 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_projection_is_orthonormal(x in matrix(8..30, 2..8), k in 1usize..8) {
        let k = k.min(x.cols()).min(x.rows());
        let m = pca_fit(&x, k).unwrap();
        let gram = m.projection.t_matmul(&m.projection).unwrap();
        prop_assert!(gram.max_abs_diff(&Matrix::identity(k)) <= 1e-8);
    }

    #[test]
    fn ridge_norm_shrinks_with_alpha(x in matrix(10..25, 1..6), seed in 0u64..1000, a1 in 0.01f64..100.0, f in 1.01f64..100.0) {
        let w: Vec<f64> = (0..x.rows()).map(|i| ((i as u64 * 7919 + seed) % 17) as f64 - 8.0).collect();
        let norm = |a: f64| ridge_solve(&x, &w, a).unwrap().weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (n1, n2) = (norm(a1), norm(a1 * f));
        prop_assert!(n1 + 1e-12 * n1.max(1.0) >= n2, "{} < {}", n1, n2);
    }

    #[test]
    fn pearson_of_affine_map_is_sign(a in series(3..40), c in prop_oneof![0.1f64..50.0, -50.0f64..-0.1], k in -100.0f64..100.0) {
        prop_assume!(distinct(&a));
        let b: Vec<f64> = a.iter().map(|v| c * v + k).collect();
        let r = pearson(&a, &b).unwrap();
        prop_assert!((r.value - c.signum()).abs() < 1e-9);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(a in series(4..30), b in series(4..30)) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let base = spearman(a, b, 10, 1).unwrap();
        let ta: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let tb: Vec<f64> = b.iter().map(|v| v * v * v + 2.0 * v).collect();
        let t = spearman(&ta, &tb, 10, 1).unwrap();
        prop_assert!((base.rho - t.rho).abs() < 1e-12);
    }

    #[test]
    fn autocorr_is_reversal_symmetric(s in series(12..60), tau in 0usize..8) {
        let r: Vec<f64> = s.iter().rev().copied().collect();
        let a = autocorr(&s, tau).unwrap().value;
        let b = autocorr(&r, tau).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lambda_preserves_decay_order(l1 in 0.5f64..50.0, f in 1.05f64..1.8) {
        let curve = |l: f64| (1..=10).map(|t| (-(t as f64) / l).exp()).collect::<Vec<_>>();
        let a = fit_time_constant(&curve(l1)).unwrap();
        let b = fit_time_constant(&curve(l1 * f)).unwrap();
        prop_assert!(b.lambda > a.lambda);
    }

    #[test]
    fn fitted_lambda_beats_every_grid_point(ac in prop::collection::vec(-0.2f64..1.0, 2..15)) {
        let fit = fit_time_constant(&ac).unwrap();
        let obj = |l: f64| ac.iter().enumerate().map(|(i, a)| ((-((i + 1) as f64) / l).exp() - a).powi(2)).sum::<f64>();
        for i in 0..200 {
            let l = (0.1f64.ln() + (1000f64).ln() * i as f64 / 199.0).exp();
            prop_assert!(fit.residual <= obj(l) + 1e-12);
        }
    }

    #[test]
    fn graph_is_scale_invariant(agg in matrix(2..12, 2..12), c in 1e-3f64..1e3) {
        let agg = Matrix::new(agg.rows(), agg.cols(), agg.values().iter().map(|v| v.abs()).collect()).unwrap();
        let g = graph_from_aggregate(&agg).unwrap();
        let h = graph_from_aggregate(&agg.scale(c)).unwrap();
        prop_assert_eq!(&g.adjacency, &h.adjacency);
        prop_assert_eq!(
            degree_partition(&g, Direction::In).unwrap().labels,
            degree_partition(&h, Direction::In).unwrap().labels
        );
        prop_assert!(2 * g.edge_count() <= agg.values().len());
    }

    #[test]
    fn out_degree_is_transposed_in_degree(agg in matrix(2..10, 2..10)) {
        let agg = Matrix::new(agg.rows(), agg.cols(), agg.values().iter().map(|v| v.abs()).collect()).unwrap();
        let g = graph_from_aggregate(&agg).unwrap();
        let t = graph_from_aggregate(&agg.transpose()).unwrap();
        prop_assert_eq!(g.out_degree, t.in_degree);
    }

    #[test]
    fn alignment_conserves_mass(
        (feats, gaps) in (2usize..30).prop_flat_map(|n| (
            prop::collection::vec(-3.0f64..3.0, n * 3),
            prop::collection::vec(0.0f64..1.2, n),
        ))
    ) {
        let n = gaps.len();
        let mut t = 0.0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let timeline = TokenTimeline::new(times, 1.0).unwrap();
        let n_tr = timeline.tr_index(t) + 1;
        let x = Matrix::new(n, 3, feats).unwrap();
        let a = align_tokens_to_tr(&x, &timeline, n_tr).unwrap();
        for c in 0..3 {
            let token_sum: f64 = (0..n).map(|r| x.get(r, c)).sum();
            let tr_sum: f64 = (0..n_tr).map(|r| a.features.get(r, c) * a.tokens_per_tr[r] as f64).sum();
            prop_assert!((token_sum - tr_sum).abs() < 1e-9);
        }
        for (m, k) in a.empty_mask.iter().zip(&a.tokens_per_tr) {
            prop_assert_eq!(*m, *k == 0);
        }
    }

    #[test]
    fn fir_shape_and_zero_head(x in matrix(12..30, 1..5), lags in prop::collection::btree_set(1usize..10, 1..5)) {
        let lags: Vec<usize> = lags.into_iter().collect();
        let e = fir_expand(&x, &lags).unwrap();
        prop_assert_eq!(e.cols(), x.cols() * lags.len());
        for (b, &lag) in lags.iter().enumerate() {
            for r in 0..x.rows() {
                for c in 0..x.cols() {
                    let expect = if r >= lag { x.get(r - lag, c) } else { 0.0 };
                    prop_assert_eq!(e.get(r, b * x.cols() + c), expect);
                }
            }
        }
    }

    #[test]
    fn hfm_round_trip_is_f32_exact(x in matrix(0..6, 0..6)) {
        let bytes = hfm::encode(&x).unwrap();
        prop_assert_eq!(bytes.len(), 12 + 4 * x.rows() * x.cols());
        let back = hfm::decode(&bytes).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        for (a, b) in back.values().iter().zip(x.values()) {
            prop_assert_eq!(*a, f64::from(*b as f32));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn toylm_prefix_property(seed in 0u64..500, tokens in prop::collection::vec(0usize..16, 2..10), cut in 1usize..9) {
        let cfg = ToyLmConfig { n_layers: 2, d_model: 8, n_heads: 2, d_ff: 16, vocab_size: 16, max_seq: 16, seed };
        let m = toylm_init(&cfg).unwrap();
        let cut = cut.min(tokens.len() - 1);
        let full = m.forward(&tokens).unwrap();
        let prefix = m.forward(&tokens[..cut]).unwrap();
        for (f, p) in full.iter().zip(&prefix) {
            for r in 0..cut {
                prop_assert_eq!(f.row(r), p.row(r));
            }
            prop_assert!(f.values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn small_perturbations_stay_finite(seed in 0u64..500, source in 0usize..2) {
        let cfg = ToyLmConfig { n_layers: 3, d_model: 8, n_heads: 2, d_ff: 16, vocab_size: 16, max_seq: 16, seed };
        let m = toylm_init(&cfg).unwrap();
        let tokens: Vec<usize> = (0..12).map(|i| (i * 5 + seed as usize) % 16).collect();
        let runs = perturbation_pair(&m, &tokens, source, 3, 0.05, 2, seed).unwrap();
        for r in runs {
            prop_assert!(r.dy.values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn accuracy_stays_in_unit_interval(x in matrix(60..90, 1..4), y in matrix(60..90, 1..3)) {
        let t = x.rows().min(y.rows());
        let rows: Vec<usize> = (0..t).collect();
        let cfg = EncodingConfig { folds: FoldSpec::Contiguous { n_folds: 3 }, alpha_grid: vec![0.1, 10.0, 1e4], guard: 2 };
        let bold = BoldMatrix::with_index_ids(y.select_rows(&rows), 1.0).unwrap();
        let r = fit_encoding(&x.select_rows(&rows), &bold, &cfg, None).unwrap();
        prop_assert!(r.fold_accuracy.values().iter().all(|a| (-1.0..=1.0).contains(a)));
    }
}
