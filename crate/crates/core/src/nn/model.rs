//! Forecaster architectures, Adam and the training loop.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{ScalerPair, WindowedDataset};
use super::gan::{gan_train, Gan, GanOptions};
use super::layers::{
    maxpool, maxpool_backward, relu, relu_backward, Conv1d, Dense, Lstm, LstmTrace, Param,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Lstm,
    Cnn,
    CnnLstm,
    Gan,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Lstm,
        Architecture::Cnn,
        Architecture::CnnLstm,
        Architecture::Gan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::Cnn => "cnn",
            Architecture::CnnLstm => "cnn_lstm",
            Architecture::Gan => "gan",
        }
    }

    /// Column title used in reports.
    pub fn title(self) -> &'static str {
        match self {
            Architecture::Lstm => "LSTM",
            Architecture::Cnn => "CNN",
            Architecture::CnnLstm => "CNN-LSTM",
            Architecture::Gan => "GAN",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "model",
                name: s.to_string(),
            })
    }
}

/// Layer widths of one architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub lstm_hidden: usize,
    pub conv_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub dense_hidden: usize,
    pub gan_hidden: usize,
    pub noise_dim: usize,
}

impl ModelSpec {
    pub fn new(arch: Architecture) -> ModelSpec {
        ModelSpec {
            arch,
            lstm_hidden: 50,
            conv_filters: 64,
            kernel: 2,
            pool: 2,
            dense_hidden: 50,
            gan_hidden: 32,
            noise_dim: 4,
        }
    }

    /// Every width set to `width`; handy for gradient checks.
    pub fn narrow(arch: Architecture, width: usize) -> ModelSpec {
        ModelSpec {
            lstm_hidden: width,
            conv_filters: width,
            dense_hidden: width,
            gan_hidden: width,
            noise_dim: 2,
            ..ModelSpec::new(arch)
        }
    }
}

/// Parameter access shared by all models.
pub trait Trainable {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Lstm {
        lstm: Lstm,
        head: Dense,
    },
    Cnn {
        conv: Conv1d,
        pool: usize,
        hidden: Dense,
        head: Dense,
    },
    CnnLstm {
        conv: Conv1d,
        lstm: Lstm,
        head: Dense,
    },
}

/// A supervised forecaster mapping one window to one scaled value.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    pub steps: usize,
    pub features: usize,
    body: Body,
}

enum Trace {
    Lstm {
        lstm: LstmTrace,
        top: Vec<f64>,
    },
    Cnn {
        conv: Vec<f64>,
        pooled: Vec<f64>,
        arg: Vec<usize>,
        hidden: Vec<f64>,
    },
    CnnLstm {
        conv: Vec<f64>,
        lstm: LstmTrace,
        top: Vec<f64>,
    },
}

impl Network {
    pub fn new(spec: ModelSpec, steps: usize, features: usize, seed: u64) -> Result<Network> {
        if steps == 0 || features == 0 {
            return Err(Error::Shape("empty window".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = match spec.arch {
            Architecture::Lstm => Body::Lstm {
                lstm: Lstm::new(features, spec.lstm_hidden, &mut rng),
                head: Dense::new(spec.lstm_hidden, 1, &mut rng),
            },
            Architecture::Cnn => {
                if steps < spec.kernel + spec.pool - 1 {
                    return Err(Error::Shape(format!(
                        "lookback {steps} too short for kernel {} and pool {}",
                        spec.kernel, spec.pool
                    )));
                }
                let pooled = (steps + 1 - spec.kernel) / spec.pool;
                Body::Cnn {
                    conv: Conv1d::new(features, spec.conv_filters, spec.kernel, &mut rng),
                    pool: spec.pool,
                    hidden: Dense::new(pooled * spec.conv_filters, spec.dense_hidden, &mut rng),
                    head: Dense::new(spec.dense_hidden, 1, &mut rng),
                }
            }
            Architecture::CnnLstm => {
                if steps < spec.kernel {
                    return Err(Error::Shape(format!(
                        "lookback {steps} shorter than kernel {}",
                        spec.kernel
                    )));
                }
                Body::CnnLstm {
                    conv: Conv1d::new(features, spec.conv_filters, spec.kernel, &mut rng),
                    lstm: Lstm::new(spec.conv_filters, spec.lstm_hidden, &mut rng),
                    head: Dense::new(spec.lstm_hidden, 1, &mut rng),
                }
            }
            Architecture::Gan => {
                return Err(Error::InvalidInput(
                    "the adversarial model is built with Gan::new".into(),
                ))
            }
        };
        Ok(Network {
            spec,
            steps,
            features,
            body,
        })
    }

    fn check_input(&self, x: &[f64]) {
        assert_eq!(x.len(), self.steps * self.features, "window shape");
    }

    fn forward_trace(&self, x: &[f64]) -> (f64, Trace) {
        self.check_input(x);
        match &self.body {
            Body::Lstm { lstm, head } => {
                let trace = lstm.forward(x, self.steps);
                let mut top = trace.last_hidden(lstm.hidden).to_vec();
                relu(&mut top);
                let out = head.forward(&top)[0];
                (out, Trace::Lstm { lstm: trace, top })
            }
            Body::Cnn {
                conv,
                pool,
                hidden,
                head,
            } => {
                let maps = conv.forward(x, self.steps);
                let (pooled, arg) =
                    maxpool(&maps, conv.output_steps(self.steps), conv.filters, *pool);
                let mut h = hidden.forward(&pooled);
                relu(&mut h);
                let out = head.forward(&h)[0];
                (
                    out,
                    Trace::Cnn {
                        conv: maps,
                        pooled,
                        arg,
                        hidden: h,
                    },
                )
            }
            Body::CnnLstm { conv, lstm, head } => {
                let maps = conv.forward(x, self.steps);
                let trace = lstm.forward(&maps, conv.output_steps(self.steps));
                let mut top = trace.last_hidden(lstm.hidden).to_vec();
                relu(&mut top);
                let out = head.forward(&top)[0];
                (
                    out,
                    Trace::CnnLstm {
                        conv: maps,
                        lstm: trace,
                        top,
                    },
                )
            }
        }
    }

    fn backward(&mut self, x: &[f64], trace: &Trace, dout: f64) {
        match (&mut self.body, trace) {
            (Body::Lstm { lstm, head }, Trace::Lstm { lstm: tr, top }) => {
                let mut dh = vec![0.0; top.len()];
                head.backward(top, &[dout], Some(&mut dh));
                relu_backward(top, &mut dh);
                lstm.backward(x, tr, &dh, None);
            }
            (
                Body::Cnn {
                    conv,
                    hidden: dense,
                    head,
                    ..
                },
                Trace::Cnn {
                    conv: maps,
                    pooled,
                    arg,
                    hidden,
                },
            ) => {
                let mut dh = vec![0.0; hidden.len()];
                head.backward(hidden, &[dout], Some(&mut dh));
                relu_backward(hidden, &mut dh);
                let mut dpool = vec![0.0; pooled.len()];
                dense.backward(pooled, &dh, Some(&mut dpool));
                let mut dmaps = vec![0.0; maps.len()];
                maxpool_backward(&dpool, arg, &mut dmaps);
                conv.backward(x, maps, &dmaps, None);
            }
            (
                Body::CnnLstm { conv, lstm, head },
                Trace::CnnLstm {
                    conv: maps,
                    lstm: tr,
                    top,
                },
            ) => {
                let mut dh = vec![0.0; top.len()];
                head.backward(top, &[dout], Some(&mut dh));
                relu_backward(top, &mut dh);
                let mut dmaps = vec![0.0; maps.len()];
                lstm.backward(maps, tr, &dh, Some(&mut dmaps));
                conv.backward(x, maps, &dmaps, None);
            }
            _ => unreachable!("trace built by the same body"),
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).0
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Mean squared error over the batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        mse(&self.predict(xs), ys)
    }

    /// Zeroes the gradients, then accumulates those of the batch loss.
    /// Returns the loss.
    pub fn accumulate_gradients(&mut self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        self.zero_grad();
        let n = xs.len() as f64;
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let (out, trace) = self.forward_trace(x);
            let err = out - y;
            total += err * err;
            self.backward(x, &trace, 2.0 * err / n);
        }
        total / n
    }
}

impl Trainable for Network {
    fn params(&self) -> Vec<&Param> {
        match &self.body {
            Body::Lstm { lstm, head } => [lstm.params(), head.params()].concat(),
            Body::Cnn {
                conv, hidden, head, ..
            } => [conv.params(), hidden.params(), head.params()].concat(),
            Body::CnnLstm { conv, lstm, head } => {
                [conv.params(), lstm.params(), head.params()].concat()
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.body {
            Body::Lstm { lstm, head } => {
                let mut v = lstm.params_mut();
                v.extend(head.params_mut());
                v
            }
            Body::Cnn {
                conv, hidden, head, ..
            } => {
                let mut v = conv.params_mut();
                v.extend(hidden.params_mut());
                v.extend(head.params_mut());
                v
            }
            Body::CnnLstm { conv, lstm, head } => {
                let mut v = conv.params_mut();
                v.extend(lstm.params_mut());
                v.extend(head.params_mut());
                v
            }
        }
    }
}

pub fn mse(predicted: &[f64], target: &[f64]) -> f64 {
    assert_eq!(predicted.len(), target.len());
    predicted
        .iter()
        .zip(target)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / predicted.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: &[usize]) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(learning_rate: f64, params: &[&mut Param]) -> Adam {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Adam::new(learning_rate, &shapes)
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in params
            .into_iter()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.value[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains on the whole training split each step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub gan: GanOptions,
}

impl TrainConfig {
    pub fn new(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: None,
            seed,
            gan: GanOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Network(Network),
    Gan(Gan),
}

impl Model {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Network(n) => n.spec,
            Model::Gan(g) => g.spec,
        }
    }

    pub fn steps_and_features(&self) -> (usize, usize) {
        match self {
            Model::Network(n) => (n.steps, n.features),
            Model::Gan(g) => (g.steps, g.features),
        }
    }

    /// Scaled one-step prediction; the adversarial model uses zero noise.
    pub fn predict_scaled(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match self {
            Model::Network(n) => n.predict(xs),
            Model::Gan(g) => g.predict(xs),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Model::Network(n) => n.params(),
            Model::Gan(g) => g.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Model::Network(n) => n.params_mut(),
            Model::Gan(g) => g.params_mut(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedForecaster {
    pub model: Model,
    pub scalers: ScalerPair,
    pub loss_curve: Vec<f64>,
    /// Discriminator accuracy per epoch; empty for supervised models.
    pub disc_accuracy: Vec<f64>,
    pub train_predictions: Vec<f64>,
    pub test_predictions: Vec<f64>,
}

impl TrainedForecaster {
    pub fn arch(&self) -> Architecture {
        self.model.spec().arch
    }

    pub fn write_loss_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["epoch", "loss"])?;
        for (e, l) in self.loss_curve.iter().enumerate() {
            wtr.write_record([(e + 1).to_string(), format!("{l:?}")])?;
        }
        wtr.flush().map_err(|e| Error::io("<loss writer>", e))?;
        Ok(())
    }
}

/// Reads the `epoch,loss` file written by [`TrainedForecaster::write_loss_csv`].
pub fn read_loss_csv<R: std::io::Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut losses = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let loss = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Row {
                line: i as u64 + 2,
                message: "bad loss value".into(),
            })?;
        losses.push(loss);
    }
    Ok(losses)
}

/// Forward pass followed by inverse target scaling.
pub fn predict_unscaled(model: &Model, xs: &[Vec<f64>], scalers: &ScalerPair) -> Vec<f64> {
    model
        .predict_scaled(xs)
        .into_iter()
        .map(|y| scalers.target.inverse(y))
        .collect()
}

fn check_dataset(data: &WindowedDataset) -> Result<()> {
    if data.x_train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    Ok(())
}

/// Adam on the mean squared error, one step per batch.
pub fn train(
    spec: ModelSpec,
    data: &WindowedDataset,
    config: &TrainConfig,
) -> Result<TrainedForecaster> {
    check_dataset(data)?;
    if spec.arch == Architecture::Gan {
        return gan_train(spec, data, config);
    }
    let mut net = Network::new(spec, data.lookback, data.n_features(), config.seed)?;
    let mut adam = Adam::for_params(config.learning_rate, &net.params_mut());
    let n = data.x_train.len();
    let batch = config.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ba7c);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let loss = if batch == n {
            let l = net.accumulate_gradients(&data.x_train, &data.y_train);
            adam.step(net.params_mut());
            l
        } else {
            order.shuffle(&mut shuffle_rng);
            let mut weighted = 0.0;
            for chunk in order.chunks(batch) {
                let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| data.x_train[i].clone()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| data.y_train[i]).collect();
                weighted += net.accumulate_gradients(&xs, &ys) * chunk.len() as f64;
                adam.step(net.params_mut());
            }
            weighted / n as f64
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_curve.push(loss);
    }
    let model = Model::Network(net);
    Ok(TrainedForecaster {
        train_predictions: predict_unscaled(&model, &data.x_train, &data.scalers),
        test_predictions: predict_unscaled(&model, &data.x_test, &data.scalers),
        model,
        scalers: data.scalers.clone(),
        loss_curve,
        disc_accuracy: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::data::MinMax;
    use rand::Rng;

    fn dataset(n: usize, steps: usize, features: usize, seed: u64) -> WindowedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..steps * features)
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect()
            })
            .collect();
        // a learnable target: mean of the last step
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x[(steps - 1) * features..].iter().sum::<f64>() / features as f64)
            .collect();
        WindowedDataset {
            x_train: xs[..n - 4].to_vec(),
            y_train: ys[..n - 4].to_vec(),
            x_test: xs[n - 4..].to_vec(),
            y_test: ys[n - 4..].to_vec(),
            lookback: steps,
            feature_names: (0..features).map(|i| format!("f{i}")).collect(),
            scalers: ScalerPair {
                target: MinMax { min: 0.0, max: 1.0 },
                features: vec![MinMax { min: 0.0, max: 1.0 }; features],
            },
            target_dates: Vec::new(),
        }
    }

    #[test]
    fn architecture_tags() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("transformer".parse::<Architecture>().is_err());
    }

    #[test]
    fn zero_weights_give_the_output_bias() {
        for arch in [Architecture::Lstm, Architecture::Cnn, Architecture::CnnLstm] {
            let mut net = Network::new(ModelSpec::narrow(arch, 3), 4, 2, 1).unwrap();
            let mut params = net.params_mut();
            let last = params.len() - 1;
            for (i, p) in params.iter_mut().enumerate() {
                let fill = if i == last { 0.25 } else { 0.0 };
                p.value.iter_mut().for_each(|v| *v = fill);
            }
            assert_eq!(net.forward(&[0.3; 8]), 0.25);
        }
    }

    #[test]
    fn batch_of_one_matches_single_forward() {
        let data = dataset(10, 5, 3, 2);
        let net = Network::new(ModelSpec::new(Architecture::CnnLstm), 5, 3, 7).unwrap();
        let single = net.forward(&data.x_train[0]);
        assert_eq!(net.predict(&data.x_train[..1]), [single]);
    }

    #[test]
    fn loss_is_mean_squared_error() {
        let data = dataset(12, 3, 2, 3);
        let mut net = Network::new(ModelSpec::narrow(Architecture::Lstm, 4), 3, 2, 5).unwrap();
        let direct: f64 = data
            .x_train
            .iter()
            .zip(&data.y_train)
            .map(|(x, y)| (net.forward(x) - y).powi(2))
            .sum::<f64>()
            / data.x_train.len() as f64;
        assert!((net.loss(&data.x_train, &data.y_train) - direct).abs() < 1e-12);
        assert!((net.accumulate_gradients(&data.x_train, &data.y_train) - direct).abs() < 1e-12);
    }

    #[test]
    fn perfect_weights_have_zero_loss_and_gradient() {
        let mut net = Network::new(ModelSpec::narrow(Architecture::Cnn, 3), 3, 2, 4).unwrap();
        let xs = vec![
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
        ];
        let ys = net.predict(&xs);
        assert_eq!(net.accumulate_gradients(&xs, &ys), 0.0);
        assert!(net
            .params()
            .iter()
            .all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let data = dataset(40, 4, 3, 9);
        let mut cfg = TrainConfig::new(1);
        cfg.epochs = 60;
        cfg.learning_rate = 1e-2;
        for arch in [Architecture::Lstm, Architecture::Cnn, Architecture::CnnLstm] {
            let spec = ModelSpec::narrow(arch, 6);
            let a = train(spec, &data, &cfg).unwrap();
            assert!(a.loss_curve.iter().all(|l| l.is_finite()));
            assert!(a.loss_curve.last().unwrap() < &a.loss_curve[0], "{arch}");
            assert_eq!(a.test_predictions.len(), 4);
            let b = train(spec, &data, &cfg).unwrap();
            assert_eq!(a, b);
        }
        cfg.batch_size = Some(8);
        let mb = train(ModelSpec::narrow(Architecture::Lstm, 6), &data, &cfg).unwrap();
        assert!(mb.loss_curve.last().unwrap() < &mb.loss_curve[0]);
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = dataset(10, 3, 2, 1);
        data.y_train[0] = f64::NAN;
        let err = train(
            ModelSpec::narrow(Architecture::Lstm, 2),
            &data,
            &TrainConfig::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1 }));
    }

    #[test]
    fn unscaled_prediction() {
        let data = dataset(10, 3, 2, 1);
        let trained = train(
            ModelSpec::narrow(Architecture::Cnn, 2),
            &data,
            &TrainConfig {
                epochs: 3,
                ..TrainConfig::new(0)
            },
        )
        .unwrap();
        let scalers = ScalerPair {
            target: MinMax {
                min: 100.0,
                max: 200.0,
            },
            features: data.scalers.features.clone(),
        };
        let scaled = trained.model.predict_scaled(&data.x_test);
        let manual: Vec<f64> = scaled.iter().map(|s| 100.0 + 100.0 * s).collect();
        assert_eq!(
            predict_unscaled(&trained.model, &data.x_test, &scalers),
            manual
        );
    }
}
