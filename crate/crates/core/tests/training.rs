//! Slow properties of the trainers on a synthetic price series.

use topicforge::frame::DailyFeatureFrame;
use topicforge::indicators::build_features;
use topicforge::ingest::align;
use topicforge::nn::{
    train, window_dataset, Architecture, ModelSpec, TrainConfig, WindowedDataset,
};
use topicforge::synth::{generate, SyntheticConfig};

fn dataset() -> WindowedDataset {
    let corpus = generate(&SyntheticConfig {
        days: 120,
        ..SyntheticConfig::default()
    });
    let aligned = align(&corpus.comments, &corpus.bars, "SYN").unwrap();
    let features = build_features(&aligned.bars, 1).unwrap();
    let frame = DailyFeatureFrame::new(&features, &[], None);
    window_dataset(&frame, 5, false, false).unwrap()
}

#[test]
fn same_seed_same_model() {
    let data = dataset();
    for arch in [
        Architecture::Lstm,
        Architecture::Cnn,
        Architecture::CnnLstm,
        Architecture::Gan,
    ] {
        let config = TrainConfig {
            epochs: 15,
            ..TrainConfig::new(3)
        };
        let a = train(ModelSpec::new(arch), &data, &config).unwrap();
        let b = train(ModelSpec::new(arch), &data, &config).unwrap();
        assert_eq!(a.model, b.model, "{arch}");
        assert_eq!(a.loss_curve, b.loss_curve, "{arch}");
        assert_eq!(a.test_predictions, b.test_predictions, "{arch}");
        let c = train(
            ModelSpec::new(arch),
            &data,
            &TrainConfig { seed: 4, ..config },
        )
        .unwrap();
        assert_ne!(a.test_predictions, c.test_predictions, "{arch}");
    }
}

// Fails: with full-batch alternating Adam steps the discriminator trails the
// generator and its accuracy sweeps between 0 and 1 on 9 of 10 seeds.
// Run with `--ignored` to reproduce.
#[test]
#[ignore = "discriminator accuracy oscillates outside (0.2, 0.98)"]
fn discriminator_neither_wins_nor_gives_up() {
    let data = dataset();
    for seed in 0..10 {
        let trained = train(
            ModelSpec::new(Architecture::Gan),
            &data,
            &TrainConfig::new(seed),
        )
        .unwrap();
        assert_eq!(trained.disc_accuracy.len(), 200);
        for (epoch, &acc) in trained.disc_accuracy.iter().enumerate().skip(10) {
            assert!(
                acc > 0.2 && acc < 0.98,
                "seed {seed} epoch {}: accuracy {acc}",
                epoch + 1
            );
        }
        assert!(trained.test_predictions.iter().all(|p| p.is_finite()));
        let spread = trained
            .test_predictions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| {
                (l.min(*p), h.max(*p))
            });
        assert!(
            spread.1 > spread.0,
            "seed {seed}: constant generator output"
        );
    }
}
