use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Observations, Sequence};
use crate::hmm::EmissionModel;
use crate::nncore::{evaluate, gradient_check, rel_err};

fn stochastic_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let s: f64 = r.iter().sum();
    r.into_iter().map(|x| x / s).collect()
}

fn random_hmm(rng: &mut ChaCha8Rng, k: usize, cards: &[usize]) -> HmmParams {
    let pi = stochastic_row(rng, k);
    let trans = Matrix::from_rows(&(0..k).map(|_| stochastic_row(rng, k)).collect::<Vec<_>>()).unwrap();
    let categorical = cards
        .iter()
        .map(|&c| Matrix::from_rows(&(0..k).map(|_| stochastic_row(rng, c)).collect::<Vec<_>>()).unwrap())
        .collect();
    HmmParams::new(pi, trans, EmissionModel { categorical, gaussian: None }).unwrap()
}

fn random_ids(rng: &mut ChaCha8Rng, n: usize, v: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..v)).collect()
}

fn randomize(tensors: Vec<&mut [f64]>, rng: &mut ChaCha8Rng) {
    for t in tensors {
        t.iter_mut().for_each(|x| *x = rng.random_range(-0.8..0.8));
    }
}

#[test]
fn single_state_feature_is_constant_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let hmm = random_hmm(&mut rng, 1, &[4]);
    let obs = Observations::categorical(random_ids(&mut rng, 30, 4), 4).unwrap();
    for mode in [FeatureMode::Filtered, FeatureMode::Advance] {
        let f = hmm_feature_stream(&hmm, &obs, mode).unwrap();
        assert!(f.probs.as_slice().iter().all(|&x| x == 1.0));
    }
}

#[test]
fn deterministic_hmm_gives_one_hot_path() {
    // state i emits symbol i and moves to (i + 1) mod 3
    let trans = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let hmm = HmmParams::new(vec![1.0, 0.0, 0.0], trans, EmissionModel::categorical(Matrix::identity(3))).unwrap();
    let obs = Observations::categorical(vec![0, 1, 2, 0, 1], 3).unwrap();
    let f = hmm_feature_stream(&hmm, &obs, FeatureMode::Filtered).unwrap();
    for t in 0..5 {
        let mut want = vec![0.0; 3];
        want[t % 3] = 1.0;
        assert_eq!(f.probs.row(t), &want[..]);
    }
}

#[test]
fn filtered_features_equal_forward_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hmm = random_hmm(&mut rng, 4, &[5]);
    let obs = Observations::categorical(random_ids(&mut rng, 200, 5), 5).unwrap();
    let f = hmm_feature_stream(&hmm, &obs, FeatureMode::Filtered).unwrap();
    assert_eq!(f.probs, forward_filter(&hmm, &obs).unwrap().probs);
    let adv = hmm_feature_stream(&hmm, &obs, FeatureMode::Advance).unwrap();
    for t in 0..200 {
        assert!((f.probs.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((adv.probs.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn seq_hybrid(rng: &mut ChaCha8Rng, v: usize, h: usize, k: usize) -> SeqHybrid {
    let hmm = random_hmm(rng, k, &[v]);
    let mut lstm = LstmParams::init(v, h, v, k, rng);
    randomize(lstm.tensors_mut().into_iter().collect(), rng);
    SeqHybrid::new(hmm, lstm, FeatureMode::Filtered).unwrap()
}

#[test]
fn ablated_hybrids_evaluate_like_the_plain_lstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids = random_ids(&mut rng, 700, 5);
    let stream = PredictionStream::text(&ids, 5).unwrap();
    let plain = LstmParams::init(5, 4, 5, 0, &mut ChaCha8Rng::seed_from_u64(9));
    let want = evaluate(&plain, std::slice::from_ref(&stream)).unwrap();

    let wide = LstmParams::init(5, 4, 5, 3, &mut ChaCha8Rng::seed_from_u64(9));
    let seq = SeqHybrid::new(random_hmm(&mut rng, 3, &[5]), wide, FeatureMode::Filtered).unwrap().ablated();
    assert_eq!(evaluate(&seq, std::slice::from_ref(&stream)).unwrap().to_bits(), want.to_bits());

    let joint = JointHybrid::init(&stream, 4, 3, FeatureMode::Filtered, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().ablated();
    assert_eq!(evaluate(&joint, &[stream]).unwrap().to_bits(), want.to_bits());
}

#[test]
fn one_hot_features_select_output_columns() {
    // zero LSTM, K = V, HMM column j scores symbol j
    let v = 3;
    let trans = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let hmm = HmmParams::new(vec![1.0, 0.0, 0.0], trans, EmissionModel::categorical(Matrix::identity(3))).unwrap();
    let mut lstm = LstmParams::zeros(v, 2, v, 3);
    for j in 0..3 {
        lstm.w_out[(j, 2 + j)] = 5.0;
    }
    let model = SeqHybrid::new(hmm, lstm, FeatureMode::Advance).unwrap();
    let stream = PredictionStream::text(&[0, 1, 2, 0, 1, 2], 3).unwrap();
    let feats = model.prepare(&stream).unwrap();
    let mut carry = model.initial_carry();
    let lp = model.window_logprob(&stream, &feats, 0..5, &mut carry).unwrap();
    let per_step = 5.0 - (5f64.exp() + 2.0).ln();
    assert!((lp / 5.0 - per_step).abs() < 1e-12);
}

#[test]
fn seq_hybrid_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let model = seq_hybrid(&mut rng, 4, 2, 3);
        let stream = PredictionStream::text(&random_ids(&mut rng, 6, 4), 4).unwrap();
        let check = gradient_check(&model, &stream, 1..5, 1e-5).unwrap();
        assert!(check.max_rel_err < 1e-4, "{check:?}");
    }
}

#[test]
fn single_state_diff_hmm_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut hmm = DiffHmm::init(1, &[3], &mut rng);
    randomize(hmm.tensors_mut(), &mut rng);
    let obs = Observations::categorical(random_ids(&mut rng, 6, 3), 3).unwrap();
    let probs = hmm.probs();
    let c = diff_hmm_forward(&hmm, &probs, &obs, 0..6, &DiffCarry::Start, FeatureMode::Filtered).unwrap();
    assert!(c.features.iter().all(|&x| x == 1.0));
    let mut g = hmm.zeros_like();
    diff_hmm_backward(&probs, &obs, &c, &[0.7; 6], &mut g).unwrap();
    assert_eq!(g.trans_logits.as_slice(), &[0.0]);
}

#[test]
fn diff_forward_matches_forward_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = rng.random_range(1..5);
        let hmm = random_hmm(&mut rng, k, &[4, 2]);
        let ids = random_ids(&mut rng, 80, 4);
        let other = random_ids(&mut rng, 80, 2);
        let obs = Observations::new(80, vec![4, 2], ids.iter().zip(&other).flat_map(|(&a, &b)| [a, b]).collect(), 0, vec![])
            .unwrap();
        let reference = forward_filter(&hmm, &obs).unwrap();
        let diff = DiffHmm::from_params(&hmm).unwrap();
        let probs = diff.probs();
        // two windows with the carry threaded between them
        let a = diff_hmm_forward(&diff, &probs, &obs, 0..30, &DiffCarry::Start, FeatureMode::Filtered).unwrap();
        let b = diff_hmm_forward(&diff, &probs, &obs, 30..80, &a.carry_out(&DiffCarry::Start), FeatureMode::Filtered).unwrap();
        for t in 0..80 {
            let got = if t < 30 { a.filtered(t) } else { b.filtered(t - 30) };
            for (x, y) in got.iter().zip(reference.probs.row(t)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

fn diff_loss(hmm: &DiffHmm, obs: &Observations, carry: &DiffCarry, weights: &[f64], mode: FeatureMode) -> f64 {
    let c = diff_hmm_forward(hmm, &hmm.probs(), obs, 0..obs.len(), carry, mode).unwrap();
    c.features.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + c.features.iter().map(|x| x * x).sum::<f64>()
}

#[test]
fn diff_hmm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..20 {
        let k = rng.random_range(1..4);
        let v = rng.random_range(2..5);
        let l = rng.random_range(1..6);
        let mode = if case % 2 == 0 { FeatureMode::Filtered } else { FeatureMode::Advance };
        let mut hmm = DiffHmm::zeros(k, &[v]);
        randomize(hmm.tensors_mut(), &mut rng);
        let obs = Observations::categorical(random_ids(&mut rng, l, v), v).unwrap();
        let carry = if case % 3 == 0 { DiffCarry::Start } else { DiffCarry::Dist(stochastic_row(&mut rng, k)) };
        let weights: Vec<f64> = (0..l * k).map(|_| rng.random_range(-1.0..1.0)).collect();

        let probs = hmm.probs();
        let c = diff_hmm_forward(&hmm, &probs, &obs, 0..l, &carry, mode).unwrap();
        let dfeat: Vec<f64> = c.features.iter().zip(&weights).map(|(f, w)| w + 2.0 * f).collect();
        let mut g = hmm.zeros_like();
        diff_hmm_backward(&probs, &obs, &c, &dfeat, &mut g).unwrap();

        let eps = 1e-5;
        let analytic: Vec<Vec<f64>> = g.tensors().iter().map(|t| t.to_vec()).collect();
        for (ti, tensor) in analytic.iter().enumerate() {
            for (i, &a) in tensor.iter().enumerate() {
                let mut up = hmm.clone();
                up.tensors_mut()[ti][i] += eps;
                let mut down = hmm.clone();
                down.tensors_mut()[ti][i] -= eps;
                let fd = (diff_loss(&up, &obs, &carry, &weights, mode) - diff_loss(&down, &obs, &carry, &weights, mode)) / (2.0 * eps);
                assert!(rel_err(a, fd) < 1e-4, "case {case} tensor {ti}[{i}]: {a} vs {fd}");
            }
        }
    }
}

#[test]
fn joint_hybrid_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..20 {
        let stream = PredictionStream::text(&random_ids(&mut rng, 6, 3), 3).unwrap();
        let mode = if case % 2 == 0 { FeatureMode::Filtered } else { FeatureMode::Advance };
        let mut model = JointHybrid::init(&stream, 2, 2, mode, &mut rng).unwrap();
        randomize(model.tensors_mut(), &mut rng);
        let check = gradient_check(&model, &stream, 0..5, 1e-5).unwrap();
        assert!(check.max_rel_err < 1e-4, "{check:?}");
    }
}

#[test]
fn hybrid_evaluation_matches_naive_chain_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = seq_hybrid(&mut rng, 3, 2, 2);
    let ids = random_ids(&mut rng, 100, 3);
    let stream = PredictionStream::text(&ids, 3).unwrap();
    let feats = forward_filter(&model.hmm, &stream.hmm_obs).unwrap().probs;
    let hs = crate::nncore::hidden_states(&model.lstm, &stream.inputs).unwrap();
    let mut total = 0.0;
    for t in 0..99 {
        let z: Vec<f64> = (0..3)
            .map(|r| {
                let w = model.lstm.w_out.row(r);
                model.lstm.b_out[r] + w[0] * hs[(t, 0)] + w[1] * hs[(t, 1)] + w[2] * feats[(t, 0)] + w[3] * feats[(t, 1)]
            })
            .collect();
        total += z[ids[t + 1]] - z.iter().map(|x| x.exp()).sum::<f64>().ln();
    }
    let got = evaluate(&model, &[stream]).unwrap();
    assert!((got - total / 99.0).abs() < 1e-10);
}

#[test]
fn joint_features_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let stream = PredictionStream::text(&random_ids(&mut rng, 300, 4), 4).unwrap();
    let mut model = JointHybrid::init(&stream, 3, 4, FeatureMode::Advance, &mut rng).unwrap();
    randomize(model.hmm.tensors_mut(), &mut rng);
    let f = model.features(&stream).unwrap();
    for t in 0..300 {
        assert!((f.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn abab_streams() -> (PredictionStream, PredictionStream) {
    let ids: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
    (PredictionStream::text(&ids[..9000], 2).unwrap(), PredictionStream::text(&ids[9000..], 2).unwrap())
}

#[test]
fn seq_hybrid_learns_alternating_sequence_without_touching_the_hmm() {
    let (tr, va) = abab_streams();
    let gibbs = GibbsConfig { n_iters: 20, burn_in: 10, ..Default::default() };
    let out = train_seq_hybrid(&[tr], &[va], 2, 5, &gibbs, &TrainConfig::default(), FeatureMode::Filtered).unwrap();
    assert!(*out.train.val_ll_history.last().unwrap() >= -0.05);
    assert_eq!(out.train.model.hmm, out.gibbs.params);
}

#[test]
fn joint_hybrid_learns_alternating_sequence() {
    let (tr, va) = abab_streams();
    let out = train_joint_hybrid(&[tr], &[va], 2, 5, &TrainConfig::default(), FeatureMode::Filtered).unwrap();
    assert!(*out.val_ll_history.last().unwrap() >= -0.1, "{:?}", out.val_ll_history);
}

#[test]
fn joint_hybrid_on_uniform_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ids = random_ids(&mut rng, 20_000, 4);
    let tr = PredictionStream::text(&ids[..18_000], 4).unwrap();
    let va = PredictionStream::text(&ids[18_000..], 4).unwrap();
    let out = train_joint_hybrid(&[tr], &[va], 3, 5, &TrainConfig::default(), FeatureMode::Filtered).unwrap();
    let ll = *out.val_ll_history.last().unwrap();
    assert!((ll + 4f64.ln()).abs() < 0.05, "{ll}");
}

#[test]
fn signal_streams_feed_hybrids() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 400;
    let cats: Vec<usize> = (0..n * 2).map(|i| if i % 2 == 0 { rng.random_range(0..3) } else { rng.random_range(0..2) }).collect();
    let obs = Observations::new(n, vec![3, 2], cats, 0, vec![]).unwrap();
    let targets = random_ids(&mut rng, n, 2);
    let stream = PredictionStream::from_sequence(&Sequence::with_targets(obs, targets, 2).unwrap()).unwrap();
    let mut model = JointHybrid::init(&stream, 3, 2, FeatureMode::Filtered, &mut rng).unwrap();
    randomize(model.tensors_mut(), &mut rng);
    let check = gradient_check(&model, &stream, 10..14, 1e-5).unwrap();
    assert!(check.max_rel_err < 1e-4, "{check:?}");
    assert!(evaluate(&model, &[stream]).unwrap().is_finite());
}
