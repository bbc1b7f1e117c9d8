use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use topicforge::embeddings::EmbeddingMatrix;
use topicforge::eval::{mae, rmse};
use topicforge::indicators::{build_features, ema};
use topicforge::ingest::{Bar, BarSeries};
use topicforge::nn::layers::Lstm;
use topicforge::nn::MinMax;
use topicforge::reducer::ce_term;
use topicforge::sentiment::{score_comment, Lexicon};

fn paired(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| {
        (
            prop::collection::vec(1.0..1000.0f64, n),
            prop::collection::vec(-100.0..100.0f64, n),
        )
    })
    .prop_map(|(y, err)| {
        let yhat = y.iter().zip(&err).map(|(a, e)| a + e).collect();
        (y, yhat)
    })
}

fn bars(close: &[f64]) -> BarSeries {
    let start = chrono::NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    BarSeries {
        bars: close
            .iter()
            .enumerate()
            .map(|(i, &c)| Bar {
                date: start + chrono::Days::new(i as u64),
                open: c,
                high: c,
                low: c,
                close: c,
                adj_close: c,
                volume: 10,
                stock_name: "P".into(),
            })
            .collect(),
    }
}

const WORDS: &[&str] = &[
    "good",
    "bad",
    "great",
    "terrible",
    "not",
    "very",
    "extremely",
    "but",
    "stock",
    "GOOD",
    "BAD",
    "love",
    "hate",
    "!",
    "!!!",
    "?",
    "kind",
    "of",
    "never",
    "slightly",
    "crash",
    "moon",
];

proptest! {
    #[test]
    fn rmse_dominates_mae((y, yhat) in paired(1..50)) {
        prop_assert!(rmse(&y, &yhat).unwrap() >= mae(&y, &yhat).unwrap() - 1e-12);
    }

    #[test]
    fn errors_ignore_a_common_shift((y, yhat) in paired(1..50), shift in -500.0..500.0f64) {
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let yhats: Vec<f64> = yhat.iter().map(|v| v + shift).collect();
        let tol = 1e-9 * (1.0 + shift.abs());
        prop_assert!((rmse(&y, &yhat).unwrap() - rmse(&ys, &yhats).unwrap()).abs() < tol);
        prop_assert!((mae(&y, &yhat).unwrap() - mae(&ys, &yhats).unwrap()).abs() < tol);
    }

    #[test]
    fn scaler_inverse_restores_values(values in prop::collection::vec(-1e4..1e4f64, 2..40)) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let s = MinMax::fit(&values, "x").unwrap();
        for &v in &values {
            let scaled = s.transform(v);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&scaled));
            prop_assert!((s.inverse(scaled) - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn emb1_bytes_round_trip(
        n_docs in 1usize..6,
        dim in 1usize..5,
        normalized: bool,
        seed: u64,
        comment in proptest::option::of("[a-z0-9 ]{0,12}"),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f32> = (0..n_docs * dim).map(|_| rng.gen_range(0.5f32..3.0)).collect();
        if normalized {
            for row in values.chunks_mut(dim) {
                let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        let m = EmbeddingMatrix {
            n_docs,
            dim,
            values,
            doc_ids: (0..n_docs).map(|i| format!("doc-{i}")).collect(),
            normalized,
            comments: comment.into_iter().map(|c| format!("# {c}")).collect(),
        };
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn edge_cross_entropy_is_non_negative(w_h in 0.0..=1.0f64, w_l in 0.0..=1.0f64) {
        prop_assert!(ce_term(w_h, w_l) >= -1e-12);
    }

    #[test]
    fn lstm_gates_stay_in_range(
        seed: u64,
        scale in 0.1..20.0f64,
        xs in prop::collection::vec(-5.0..5.0f64, 12),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lstm = Lstm::new(3, 4, &mut rng);
        for w in lstm.w_input.value.iter_mut().chain(lstm.w_hidden.value.iter_mut()) {
            *w *= scale;
        }
        let trace = lstm.forward(&xs, 4);
        for t in 0..4 {
            for gate in 0..4 {
                for &g in trace.gate(t, gate, 4) {
                    if gate == 1 {
                        prop_assert!((-1.0..=1.0).contains(&g));
                    } else {
                        prop_assert!((0.0..=1.0).contains(&g));
                    }
                }
            }
            prop_assert!(trace.h(t, 4).iter().all(|h| h.abs() <= 1.0));
        }
    }

    #[test]
    fn compound_is_bounded(words in prop::collection::vec(prop::sample::select(WORDS), 0..25)) {
        let lex = Lexicon::bundled();
        let s = score_comment(&words.join(" "), &lex);
        prop_assert!((-1.0..=1.0).contains(&s.compound));
        prop_assert!(s.pos >= 0.0 && s.neu >= 0.0 && s.neg >= 0.0);
    }

    #[test]
    fn ema_stays_inside_the_running_range(series in prop::collection::vec(1.0..100.0f64, 1..80), span in 1usize..30) {
        let e = ema(&series, span).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (v, x) in e.iter().zip(&series) {
            lo = lo.min(*x);
            hi = hi.max(*x);
            prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
        }
    }

    #[test]
    fn indicator_rows_are_consistent(
        steps in prop::collection::vec(-0.05..0.05f64, 46..90),
        start in 5.0..500.0f64,
        lag in 1usize..6,
    ) {
        let mut p = start;
        let close: Vec<f64> = steps.iter().map(|s| { p *= 1.0 + s; p }).collect();
        let table = build_features(&bars(&close), lag).unwrap();
        prop_assert_eq!(table.len(), close.len() - 25.max(lag));
        let col = |n: &str| table.column(n).unwrap();
        for r in 0..table.len() {
            let t = r + 25.max(lag);
            let recent = &close[t - 6..=t];
            let (lo, hi) = recent.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
            prop_assert!(col("ma7")[r] >= lo - 1e-9 && col("ma7")[r] <= hi + 1e-9);
            prop_assert!(col("sd20")[r] >= 0.0);
            prop_assert!(col("lower_band")[r] <= col("ma20")[r] && col("ma20")[r] <= col("upper_band")[r]);
            let m = close[t] - close[t - lag];
            prop_assert_eq!(col("log_momentum")[r].signum() * m.signum() >= 0.0, true);
        }
    }
}
