//! Property tests for the data-type invariants across modules.

use hybridseq::corpus::{split, split_ranges, DiscretizationSpec, Observations, SymbolTable};
use hybridseq::hmm::{forward_filter, gibbs_train, predictive_loglik, smoothing_marginals, EmissionModel, GibbsConfig, HmmParams};
use hybridseq::hybrid::{FeatureMode, SeqHybrid};
use hybridseq::interpret::{
    fit_surrogate_tree, inertia, kmeans, render_colored_text, trailing_symbol, StateMatrix, TreeConfig, TreeNode,
};
use hybridseq::nncore::{train, LstmParams, TrainConfig};
use hybridseq::task::PredictionStream;
use hybridseq::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stochastic_rows(raw: &[f64], rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::from_vec(rows, cols, raw[..rows * cols].iter().map(|x| x + 0.01).collect()).unwrap();
    for r in 0..rows {
        let s: f64 = m.row(r).iter().sum();
        for c in 0..cols {
            m[(r, c)] /= s;
        }
    }
    m
}

fn hmm_strategy() -> impl Strategy<Value = (HmmParams, usize)> {
    (1usize..5, 1usize..6).prop_flat_map(|(k, v)| {
        prop::collection::vec(0.0f64..1.0, k * k + k * v + k).prop_map(move |raw| {
            let pi = stochastic_rows(&raw[..k], 1, k).row(0).to_vec();
            let trans = stochastic_rows(&raw[k..], k, k);
            let emit = stochastic_rows(&raw[k + k * k..], k, v);
            (HmmParams::new(pi, trans, EmissionModel::categorical(emit)).unwrap(), v)
        })
    })
}

fn assert_stochastic(m: &Matrix) {
    for r in 0..m.rows() {
        assert!(m.row(r).iter().all(|&x| x >= 0.0));
        assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn visit(node: &TreeNode, f: &mut dyn FnMut(&TreeNode)) {
    f(node);
    if let TreeNode::Split { yes, no, .. } = node {
        visit(yes, f);
        visit(no, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbol_ids_are_contiguous_with_unk_last(text in "[a-f #\n]{1,200}") {
        let table = SymbolTable::from_text(&text).unwrap();
        let v = table.len();
        prop_assert_eq!(table.unk_id(), v - 1);
        for id in 0..v - 1 {
            let s = *table.symbol(id).unwrap();
            prop_assert_eq!(table.id(&s), id);
        }
        prop_assert!(table.symbol(v - 1).is_none());
        prop_assert_eq!(table.id(&'Z'), v - 1);
        prop_assert!(table.encode_text(&text).iter().all(|&i| i < v - 1));
    }

    #[test]
    fn splits_are_disjoint_contiguous_segments(n in 0usize..500, a in 0.1f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let total = a + b + c;
        let fr = (a / total, b / total, 1.0 - a / total - b / total);
        let data: Vec<usize> = (0..n).collect();
        let Ok([tr, va, te]) = split(&data, fr) else {
            // only refused when some segment would be empty
            let small = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
            prop_assert!(small(fr.1) == 0 || small(fr.2) == 0 || small(fr.1) + small(fr.2) >= n);
            return Ok(());
        };
        let ranges = split_ranges(n, fr).unwrap();
        prop_assert_eq!(ranges[0].start, 0);
        prop_assert_eq!(ranges[0].end, ranges[1].start);
        prop_assert_eq!(ranges[1].end, ranges[2].start);
        prop_assert_eq!(ranges[2].end, n);
        let joined: Vec<usize> = tr.into_iter().chain(va).chain(te).collect();
        prop_assert_eq!(joined, data);
    }

    #[test]
    fn discretization_edges_ascend_and_bins_cover(column in prop::collection::vec(-5.0f64..5.0, 1..300), n_bins in 2usize..8, probe in prop::collection::vec(-10.0f64..10.0, 20)) {
        let spec = DiscretizationSpec::fit(std::slice::from_ref(&column), n_bins).unwrap();
        prop_assert!(spec.edges[0].windows(2).all(|w| w[0] < w[1]));
        prop_assert!(spec.n_bins(0) <= n_bins);
        let mut sorted = probe.clone();
        sorted.extend_from_slice(&column);
        sorted.sort_by(f64::total_cmp);
        let bins: Vec<usize> = sorted.iter().map(|&x| spec.bin(0, x)).collect();
        prop_assert!(bins.iter().all(|&b| b < spec.n_bins(0)));
        prop_assert!(bins.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn filtered_rows_are_distributions((params, v) in hmm_strategy(), seed in 0u64..1000, len in 1usize..60) {
        let (_, obs) = params.sample(len, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let post = forward_filter(&params, &obs).unwrap();
        prop_assert_eq!(post.len(), len);
        assert_stochastic(&post.probs);
        prop_assert!(post.loglik.is_finite());
        assert_stochastic(&smoothing_marginals(&params, &obs).unwrap());
        let mean = predictive_loglik(&params, &obs).unwrap();
        prop_assert!((mean - post.loglik / len as f64).abs() < 1e-12);
        prop_assert!(obs.feature_ids(0).iter().all(|&x| x < v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gibbs_samples_are_valid_models(ids in prop::collection::vec(0usize..4, 5..200), k in 1usize..4, seed in 0u64..100) {
        let obs = Observations::categorical(ids, 4).unwrap();
        let config = GibbsConfig { n_iters: 6, burn_in: 2, seed, ..GibbsConfig::default() };
        let out = gibbs_train(&[obs], k, &config).unwrap();
        prop_assert_eq!(out.trace.len(), 6);
        prop_assert!(out.trace.iter().all(|x| x.is_finite()));
        let p = out.params;
        prop_assert!((p.pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_stochastic(&p.trans);
        prop_assert_eq!(p.emission.categorical.len(), 1);
        assert_stochastic(&p.emission.categorical[0]);
    }

    #[test]
    fn neural_training_leaves_the_hmm_frozen((hmm, v) in hmm_strategy().prop_filter("needs two symbols", |(_, v)| *v >= 2), seed in 0u64..100, h in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, obs) = hmm.sample(120, &mut rng).unwrap();
        let stream = PredictionStream::text(&obs.feature_ids(0), v).unwrap();
        let k = hmm.n_states();
        let lstm = LstmParams::init(stream.input_dim(), h, stream.n_classes, k, &mut rng);
        prop_assert_eq!(lstm.w_out.cols(), h + k);
        let model = SeqHybrid::new(hmm.clone(), lstm, FeatureMode::Filtered).unwrap();
        let config = TrainConfig { epochs: 2, seq_len: 10, batch_size: 2, seed, ..TrainConfig::default() };
        let streams = vec![stream];
        let out = match train(model, &streams, &streams, &config) {
            Ok(out) => out,
            Err(f) => panic!("training failed: {}", f.error),
        };
        prop_assert_eq!(&out.model.hmm, &hmm);
        prop_assert!(out.model.lstm.w_out.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn clustering_reports_its_own_inertia(raw in prop::collection::vec(-3.0f64..3.0, 60..300), k in 1usize..6, seed in 0u64..100) {
        let n = raw.len() / 3;
        let data = Matrix::from_vec(n, 3, raw[..n * 3].to_vec()).unwrap();
        let c = kmeans(&data, k, seed, 100).unwrap();
        prop_assert!(c.assignments.iter().all(|&a| a < k));
        prop_assert!((c.inertia - inertia(&data, &c.centroids, &c.assignments)).abs() <= 1e-9 * c.inertia.max(1.0));
    }

    #[test]
    fn tree_leaves_are_target_means(ids in prop::collection::vec(0usize..5, 50..300), window in 1usize..4, depth in 0usize..4) {
        let y: Vec<f64> = (0..ids.len()).map(|t| trailing_symbol(&ids, t, 1).map_or(0.0, |s| s as f64)).collect();
        let states = StateMatrix { rows: Matrix::from_vec(y.len(), 1, y.clone()).unwrap(), alignment: (0..ids.len()).collect() };
        let config = TreeConfig { window, max_depth: depth, min_leaf: 5, heldout: 0.2 };
        let tree = fit_surrogate_tree(&states, 0, &ids, &config, &|i| i.to_string()).unwrap();
        prop_assert!(tree.root.depth() <= depth);
        let mut offsets_ok = true;
        visit(&tree.root, &mut |n| if let TreeNode::Split { offset, .. } = n { offsets_ok &= (1..=window).contains(offset) });
        prop_assert!(offsets_ok);
        // every leaf value is the mean of the training rows routed to it
        let n_train = ids.len() - (ids.len() as f64 * 0.2).floor() as usize;
        for leaf in tree.root.leaves() {
            let TreeNode::Leaf { value, n } = leaf else { unreachable!() };
            let routed: Vec<f64> = (0..n_train)
                .filter(|&t| std::ptr::eq(route(&tree.root, &ids, t), leaf))
                .map(|t| y[t])
                .collect();
            prop_assert_eq!(routed.len(), *n);
            let mean = routed.iter().sum::<f64>() / routed.len().max(1) as f64;
            prop_assert!((mean - value).abs() < 1e-9);
        }
    }

    #[test]
    fn rendering_keeps_one_label_per_symbol(text in ".{0,80}", shift in 0usize..10) {
        let symbols: Vec<String> = text.chars().map(String::from).collect();
        let labels: Vec<usize> = (0..symbols.len()).map(|i| (i + shift) % 10).collect();
        let doc = render_colored_text(symbols.clone(), labels.clone(), Some(labels)).unwrap();
        prop_assert_eq!(doc.len(), symbols.len());
        prop_assert_eq!(doc.to_html("t").matches("<span style=").count(), symbols.len());
        prop_assert!(render_colored_text(vec!["x".into()], vec![10], None).is_err());
    }
}

fn route<'a>(node: &'a TreeNode, ids: &[usize], t: usize) -> &'a TreeNode {
    match node {
        TreeNode::Leaf { .. } => node,
        TreeNode::Split { offset, symbol, yes, no, .. } => {
            if trailing_symbol(ids, t, *offset) == Some(*symbol) {
                route(yes, ids, t)
            } else {
                route(no, ids, t)
            }
        }
    }
}
