//! Adversarial forecaster.
//!
//! The generator runs an LSTM over the window, concatenates its last hidden
//! state with a noise vector and maps that to one scaled value. The
//! discriminator sees the flattened window plus a candidate next value and
//! outputs the probability that the value is real. Training alternates one
//! discriminator step and one generator step per epoch on the game
//!
//! ```text
//! min_G max_D  E[ln D(window, next)] + E[ln(1 - D(window, G(window, z)))]
//! ```
//!
//! Discriminator outputs are clamped to `[1e-7, 1 - 1e-7]` before the log.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::data::WindowedDataset;
use super::layers::{relu, relu_backward, sigmoid, Dense, Lstm, LstmTrace, Param};
use super::model::{
    predict_unscaled, Adam, Model, ModelSpec, TrainConfig, Trainable, TrainedForecaster,
};
use crate::error::{Error, Result};

pub const CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GanOptions {
    /// Generator minimises `-ln D(G)` instead of `ln(1 - D(G))`.
    pub non_saturating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gan {
    pub spec: ModelSpec,
    pub steps: usize,
    pub features: usize,
    pub gen_lstm: Lstm,
    pub gen_head: Dense,
    pub disc_hidden: Dense,
    pub disc_head: Dense,
}

struct GenTrace {
    lstm: LstmTrace,
    head_in: Vec<f64>,
}

struct DiscTrace {
    input: Vec<f64>,
    hidden: Vec<f64>,
    /// Unclamped probability.
    prob: f64,
}

/// Clamped probability and whether the clamp was active.
fn clamp_prob(p: f64) -> (f64, bool) {
    let c = p.clamp(CLAMP, 1.0 - CLAMP);
    (c, c != p)
}

/// The value of the game at a fixed discriminator output on real and fake
/// samples.
pub fn game_value(real: &[f64], fake: &[f64]) -> f64 {
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| {
        xs.iter().map(|&p| f(clamp_prob(p).0)).sum::<f64>() / xs.len() as f64
    };
    mean(real, &|p| p.ln()) + mean(fake, &|p| (1.0 - p).ln())
}

impl Gan {
    pub fn new(spec: ModelSpec, steps: usize, features: usize, seed: u64) -> Result<Gan> {
        if steps == 0 || features == 0 || spec.noise_dim == 0 {
            return Err(Error::Shape("empty window or noise".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Gan {
            spec,
            steps,
            features,
            gen_lstm: Lstm::new(features, spec.gan_hidden, &mut rng),
            gen_head: Dense::new(spec.gan_hidden + spec.noise_dim, 1, &mut rng),
            disc_hidden: Dense::new(steps * features + 1, spec.gan_hidden, &mut rng),
            disc_head: Dense::new(spec.gan_hidden, 1, &mut rng),
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.spec.noise_dim
    }

    fn generate_trace(&self, x: &[f64], z: &[f64]) -> (f64, GenTrace) {
        let lstm = self.gen_lstm.forward(x, self.steps);
        let mut head_in = lstm.last_hidden(self.gen_lstm.hidden).to_vec();
        head_in.extend_from_slice(z);
        let out = self.gen_head.forward(&head_in)[0];
        (out, GenTrace { lstm, head_in })
    }

    pub fn generate(&self, x: &[f64], z: &[f64]) -> f64 {
        self.generate_trace(x, z).0
    }

    fn gen_backward(&mut self, x: &[f64], trace: &GenTrace, dout: f64) {
        let mut d_in = vec![0.0; trace.head_in.len()];
        self.gen_head
            .backward(&trace.head_in, &[dout], Some(&mut d_in));
        d_in.truncate(self.gen_lstm.hidden);
        self.gen_lstm.backward(x, &trace.lstm, &d_in, None);
    }

    fn discriminate_trace(&self, x: &[f64], value: f64) -> DiscTrace {
        let mut input = x.to_vec();
        input.push(value);
        let mut hidden = self.disc_hidden.forward(&input);
        relu(&mut hidden);
        let prob = sigmoid(self.disc_head.forward(&hidden)[0]);
        DiscTrace {
            input,
            hidden,
            prob,
        }
    }

    /// Probability that `value` is the real continuation of `x`.
    pub fn discriminate(&self, x: &[f64], value: f64) -> f64 {
        self.discriminate_trace(x, value).prob
    }

    /// `dprob` is the gradient at the clamped probability. Returns the
    /// gradient with respect to the candidate value.
    fn disc_backward(&mut self, trace: &DiscTrace, dprob: f64) -> f64 {
        if clamp_prob(trace.prob).1 {
            return 0.0;
        }
        let dlogit = dprob * trace.prob * (1.0 - trace.prob);
        let mut dh = vec![0.0; trace.hidden.len()];
        self.disc_head
            .backward(&trace.hidden, &[dlogit], Some(&mut dh));
        relu_backward(&trace.hidden, &mut dh);
        let mut d_in = vec![0.0; trace.input.len()];
        self.disc_hidden
            .backward(&trace.input, &dh, Some(&mut d_in));
        d_in[d_in.len() - 1]
    }

    /// Zero-noise generator output per window.
    pub fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let z = vec![0.0; self.noise_dim()];
        xs.iter().map(|x| self.generate(x, &z)).collect()
    }

    /// `-V`: what the discriminator minimises.
    pub fn discriminator_loss(&self, xs: &[Vec<f64>], ys: &[f64], zs: &[Vec<f64>]) -> f64 {
        let real: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| self.discriminate(x, y))
            .collect();
        let fake: Vec<f64> = xs
            .iter()
            .zip(zs)
            .map(|(x, z)| self.discriminate(x, self.generate(x, z)))
            .collect();
        -game_value(&real, &fake)
    }

    pub fn generator_loss(&self, xs: &[Vec<f64>], zs: &[Vec<f64>], options: GanOptions) -> f64 {
        let n = xs.len() as f64;
        xs.iter()
            .zip(zs)
            .map(|(x, z)| {
                let p = clamp_prob(self.discriminate(x, self.generate(x, z))).0;
                if options.non_saturating {
                    -p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / n
    }

    /// Zeroes all gradients and fills the discriminator's with those of the
    /// discriminator loss. Returns the loss, the accuracy on real and fake
    /// samples, and whether any output was clamped.
    pub fn discriminator_gradients(
        &mut self,
        xs: &[Vec<f64>],
        ys: &[f64],
        zs: &[Vec<f64>],
    ) -> (f64, f64, bool) {
        self.zero_grad();
        let n = xs.len() as f64;
        let (mut loss, mut correct, mut clamped) = (0.0, 0usize, false);
        for ((x, &y), z) in xs.iter().zip(ys).zip(zs) {
            let real = self.discriminate_trace(x, y);
            let (p_real, c1) = clamp_prob(real.prob);
            loss -= p_real.ln() / n;
            self.disc_backward(&real, -1.0 / (p_real * n));
            let fake_value = self.generate(x, z);
            let fake = self.discriminate_trace(x, fake_value);
            let (p_fake, c2) = clamp_prob(fake.prob);
            loss -= (1.0 - p_fake).ln() / n;
            self.disc_backward(&fake, 1.0 / ((1.0 - p_fake) * n));
            correct += (real.prob > 0.5) as usize + (fake.prob < 0.5) as usize;
            clamped |= c1 || c2;
        }
        (loss, correct as f64 / (2.0 * n), clamped)
    }

    /// Zeroes all gradients and fills the generator's with those of the
    /// generator loss. Discriminator gradients are left as garbage.
    pub fn generator_gradients(
        &mut self,
        xs: &[Vec<f64>],
        zs: &[Vec<f64>],
        options: GanOptions,
    ) -> f64 {
        self.zero_grad();
        let n = xs.len() as f64;
        let mut loss = 0.0;
        for (x, z) in xs.iter().zip(zs) {
            let (value, gen) = self.generate_trace(x, z);
            let disc = self.discriminate_trace(x, value);
            let p = clamp_prob(disc.prob).0;
            let dprob = if options.non_saturating {
                loss -= p.ln() / n;
                -1.0 / (p * n)
            } else {
                loss += (1.0 - p).ln() / n;
                -1.0 / ((1.0 - p) * n)
            };
            let dvalue = self.disc_backward(&disc, dprob);
            self.gen_backward(x, &gen, dvalue);
        }
        loss
    }

    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.gen_lstm.params_mut();
        v.extend(self.gen_head.params_mut());
        v
    }

    pub fn discriminator_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.disc_hidden.params_mut();
        v.extend(self.disc_head.params_mut());
        v
    }

    /// Tensor indices into `params()` that belong to the generator.
    pub fn generator_tensors() -> std::ops::Range<usize> {
        0..5
    }

    pub fn discriminator_tensors() -> std::ops::Range<usize> {
        5..9
    }
}

impl Trainable for Gan {
    fn params(&self) -> Vec<&Param> {
        [
            self.gen_lstm.params(),
            self.gen_head.params(),
            self.disc_hidden.params(),
            self.disc_head.params(),
        ]
        .concat()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.gen_lstm.params_mut();
        v.extend(self.gen_head.params_mut());
        v.extend(self.disc_hidden.params_mut());
        v.extend(self.disc_head.params_mut());
        v
    }
}

pub fn sample_noise(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn gan_train(
    spec: ModelSpec,
    data: &WindowedDataset,
    config: &TrainConfig,
) -> Result<TrainedForecaster> {
    if data.x_train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let mut gan = Gan::new(spec, data.lookback, data.n_features(), config.seed)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut adam_d = Adam::for_params(config.learning_rate, &gan.discriminator_params_mut());
    let mut adam_g = Adam::for_params(config.learning_rate, &gan.generator_params_mut());
    let (xs, ys) = (&data.x_train, &data.y_train);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut accuracy = Vec::with_capacity(config.epochs);
    let mut warned = false;
    for epoch in 1..=config.epochs {
        let zs = sample_noise(xs.len(), spec.noise_dim, &mut noise_rng);
        let (d_loss, acc, clamped) = gan.discriminator_gradients(xs, ys, &zs);
        if clamped && !warned {
            log::warn!("discriminator output saturated at epoch {epoch}; clamped to [{CLAMP}, 1 - {CLAMP}]");
            warned = true;
        }
        adam_d.step(gan.discriminator_params_mut());
        gan.generator_gradients(xs, &zs, config.gan);
        adam_g.step(gan.generator_params_mut());
        if !d_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_curve.push(d_loss);
        accuracy.push(acc);
    }
    let model = Model::Gan(gan);
    Ok(TrainedForecaster {
        train_predictions: predict_unscaled(&model, &data.x_train, &data.scalers),
        test_predictions: predict_unscaled(&model, &data.x_test, &data.scalers),
        model,
        scalers: data.scalers.clone(),
        loss_curve,
        disc_accuracy: accuracy,
    })
}
