use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topicforge::nn::check::finite_difference_check;
use topicforge::nn::gan::{sample_noise, Gan, GanOptions};
use topicforge::nn::{Architecture, ModelSpec, Network, Trainable};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn batch(n: usize, len: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n)
        .map(|_| (0..len).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let ys = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    (xs, ys)
}

#[test]
fn supervised_networks_match_finite_differences() {
    for arch in [Architecture::Lstm, Architecture::Cnn, Architecture::CnnLstm] {
        let mut net = Network::new(ModelSpec::narrow(arch, 4), 3, 3, 21).unwrap();
        let (xs, ys) = batch(4, 9, 5);
        net.accumulate_gradients(&xs, &ys);
        let tensors = 0..net.params().len();
        let report = finite_difference_check(&mut net, tensors, STEP, |n| n.loss(&xs, &ys));
        println!("{arch}: {report:?}");
        assert_eq!(report.checked, net.n_params());
        assert!(report.max_relative_error < TOLERANCE, "{arch}: {report:?}");
    }
}

#[test]
fn adversarial_players_match_finite_differences() {
    let mut gan = Gan::new(ModelSpec::narrow(Architecture::Gan, 4), 3, 3, 8).unwrap();
    let (xs, ys) = batch(4, 9, 6);
    let zs = sample_noise(4, gan.noise_dim(), &mut ChaCha8Rng::seed_from_u64(1));

    gan.discriminator_gradients(&xs, &ys, &zs);
    let d = finite_difference_check(&mut gan, Gan::discriminator_tensors(), STEP, |g| {
        g.discriminator_loss(&xs, &ys, &zs)
    });
    println!("discriminator: {d:?}");
    assert!(d.max_relative_error < TOLERANCE, "{d:?}");

    for options in [
        GanOptions::default(),
        GanOptions {
            non_saturating: true,
        },
    ] {
        gan.generator_gradients(&xs, &zs, options);
        let g = finite_difference_check(&mut gan, Gan::generator_tensors(), STEP, |g| {
            g.generator_loss(&xs, &zs, options)
        });
        println!("generator {options:?}: {g:?}");
        assert!(g.max_relative_error < TOLERANCE, "{g:?}");
    }
}
