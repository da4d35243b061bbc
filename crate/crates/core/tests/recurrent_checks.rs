mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferoute::recurrent::{
    batch_gradients, bptt_gradients, forecast, forward_sequence, gru_step, lstm_step, sequence_loss, train, Cell,
    CellKind, CellState, GruParams, LstmParams, TrainConfig,
};

use common::max_relative_error;

const FD_EPS: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-7;

fn pinned(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.1 * ((k * 7) % 11) as f64 - 0.5).collect()
}

const XS: [f64; 4] = [0.5, -1.0, 0.25, 0.8];

#[test]
fn lstm_matches_scalar_transcript() {
    let mut p = LstmParams::zeros(2, 1);
    p.set_flat(&pinned(35));
    let (out, _) = forward_sequence(&p, &XS).unwrap();
    let want = [0.16681565395857817, 0.23883042949875227, 0.2022654874403409, 0.15574669598219887];
    for (a, b) in out.iter().zip(want) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn gru_matches_scalar_transcript() {
    let mut p = GruParams::zeros(2, 1);
    p.set_flat(&pinned(27));
    let (out, _) = forward_sequence(&p, &XS).unwrap();
    let want = [0.20424755102988212, 0.17702708494032246, 0.23068979194220401, 0.267234664926545];
    for (a, b) in out.iter().zip(want) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn sequence_equals_manual_step_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lstm = LstmParams::random(3, 1, 0.5, &mut rng);
    let gru = GruParams::random(3, 1, true, 0.5, &mut rng);
    let xs = [0.1, 0.9, 0.4, 0.3, 0.7];

    let (seq, _) = forward_sequence(&lstm, &xs).unwrap();
    let mut s = lstm.initial_state();
    for (x, want) in xs.iter().zip(&seq) {
        let (next, y) = lstm_step(&lstm, &s, &[*x]).unwrap();
        assert_eq!(y, *want);
        s = next;
    }
    let (seq, _) = forward_sequence(&gru, &xs).unwrap();
    let mut s = gru.initial_state();
    for (x, want) in xs.iter().zip(&seq) {
        let (next, y) = gru_step(&gru, &s, &[*x]).unwrap();
        assert_eq!(y, *want);
        s = next;
    }
}

fn check_gradients<C: Cell>(cell: &C, xs: &[f64], ys: &[f64]) -> f64 {
    let (_, grad) = bptt_gradients(cell, xs, ys).unwrap();
    let loss = |flat: &[f64]| {
        let mut c = cell.clone();
        c.set_flat(flat);
        sequence_loss(&c, xs, ys).unwrap()
    };
    max_relative_error(&cell.to_flat(), &grad.to_flat(), loss, FD_EPS, FD_FLOOR)
}

#[test]
fn bptt_matches_finite_differences() {
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let lstm = LstmParams::random(2, 1, 0.5, &mut rng);
        let gru = GruParams::random(2, 1, true, 0.5, &mut rng);
        let gru_plain = GruParams::random(3, 1, false, 0.5, &mut rng);
        assert!(check_gradients(&lstm, &xs, &ys) < 1e-4, "lstm seed {seed}");
        assert!(check_gradients(&gru, &xs, &ys) < 1e-4, "gru seed {seed}");
        assert!(check_gradients(&gru_plain, &xs, &ys) < 1e-4, "bias-free gru seed {seed}");
    }
}

#[test]
fn zero_loss_gives_zero_gradient() {
    let lstm = LstmParams::zeros(3, 1);
    let (loss, g) = bptt_gradients(&lstm, &[0.0; 4], &[0.0; 4]).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.to_flat().iter().all(|&v| v == 0.0));
    let gru = GruParams::zeros(3, 1);
    let (_, g) = bptt_gradients(&gru, &[0.0; 4], &[0.0; 4]).unwrap();
    assert!(g.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_window_doubles_gradient() {
    let p = LstmParams::random(2, 1, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
    let w = (vec![0.2, 0.5, 0.1], vec![0.5, 0.1, 0.7]);
    let (l1, g1) = batch_gradients(&p, std::slice::from_ref(&w)).unwrap();
    let (l2, g2) = batch_gradients(&p, &[w.clone(), w]).unwrap();
    assert_eq!(l2, 2.0 * l1);
    for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
        assert_eq!(2.0 * a, b);
    }
}

#[test]
fn zero_weight_fixpoints() {
    let lstm = LstmParams::zeros(3, 1);
    let mut s = lstm.initial_state();
    for x in [0.3, -2.0, 5.0] {
        let (next, y) = lstm_step(&lstm, &s, &[x]).unwrap();
        assert_eq!(next.h, vec![0.0; 3]);
        assert_eq!(next.c, Some(vec![0.0; 3]));
        assert_eq!(y, 0.0);
        s = next;
    }
    let (_, steps) = forward_sequence(&lstm, &[1.0]).unwrap();
    for gate in [&steps[0].forget, &steps[0].input, &steps[0].output] {
        assert_eq!(gate, &vec![0.5; 3]);
    }

    let gru = GruParams::zeros(2, 1);
    let (next, _) = gru_step(&gru, &CellState { h: vec![0.8, -0.4], c: None }, &[1.0]).unwrap();
    assert_eq!(next.h, vec![0.4, -0.2]);
    let (next, y) = gru_step(&gru, &gru.initial_state(), &[0.0]).unwrap();
    assert_eq!(next.h, vec![0.0; 2]);
    assert_eq!(y, gru.b_out);
}

#[test]
fn constant_series_is_learned() {
    let series = [6.0; 12];
    let cfg = TrainConfig { hidden_size: 4, window: 4, epochs: 2000, ..TrainConfig::default() };
    for kind in [CellKind::Lstm, CellKind::Gru] {
        let m = train(&series, &cfg, kind).unwrap();
        assert!(m.training_loss < 1e-3, "{kind:?}: {}", m.training_loss);
        let f = forecast(&m, &series, 3).unwrap();
        assert!(f.iter().all(|v| (v - 6.0).abs() < 0.1), "{f:?}");
    }
}

#[test]
fn training_is_deterministic() {
    let series = [3.0, 5.0, 4.0, 8.0, 6.0, 7.0, 5.0, 9.0];
    let cfg = TrainConfig { hidden_size: 3, window: 3, epochs: 100, seed: 7, ..TrainConfig::default() };
    for kind in [CellKind::Lstm, CellKind::Gru] {
        assert_eq!(train(&series, &cfg, kind).unwrap(), train(&series, &cfg, kind).unwrap());
    }
}

fn in_open_unit(v: &[f64]) -> bool {
    v.iter().all(|&g| g > 0.0 && g < 1.0)
}

fn in_open_sym(v: &[f64]) -> bool {
    v.iter().all(|&g| g > -1.0 && g < 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_ranges_hold(seed in 0u64..100_000, xs in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = LstmParams::random(3, 1, 1.0, &mut rng);
        let (_, steps) = forward_sequence(&lstm, &xs).unwrap();
        for s in &steps {
            prop_assert!(in_open_unit(&s.forget) && in_open_unit(&s.input) && in_open_unit(&s.output));
            prop_assert!(in_open_sym(&s.candidate) && in_open_sym(&s.tanh_c));
        }
        let gru = GruParams::random(3, 1, true, 1.0, &mut rng);
        let (_, steps) = forward_sequence(&gru, &xs).unwrap();
        for s in &steps {
            prop_assert!(in_open_unit(&s.reset) && in_open_unit(&s.update));
            prop_assert!(in_open_sym(&s.candidate));
        }
    }

    #[test]
    fn gru_state_is_convex_blend(seed in 0u64..100_000, xs in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let gru = GruParams::random(4, 1, true, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let (_, steps) = forward_sequence(&gru, &xs).unwrap();
        for s in &steps {
            for k in 0..4 {
                let (lo, hi) = if s.h_prev[k] <= s.candidate[k] { (s.h_prev[k], s.candidate[k]) } else { (s.candidate[k], s.h_prev[k]) };
                prop_assert!(s.h[k] >= lo - 1e-15 && s.h[k] <= hi + 1e-15);
            }
        }
    }
}
