//! Small forecasters trained from scratch.
//!
//! All arithmetic is `f64`. Windows are flattened `lookback x features`
//! slices, time-major. The supervised models are
//!
//! * `lstm`: LSTM, ReLU on the last hidden state, dense output
//! * `cnn`: Conv1D with ReLU, max pool, dense with ReLU, dense output
//! * `cnn_lstm`: Conv1D with ReLU feeding an LSTM, ReLU, dense output
//!
//! and `gan` is the adversarial model in [`gan`].
//!
//! The LSTM cell computes, per step,
//!
//! ```text
//! f = σ(W_fx x + W_fh h + b_f)      c̃ = tanh(W_cx x + W_ch h + b_c)
//! i = σ(W_ix x + W_ih h + b_i)      o = σ(W_ox x + W_oh h + b_o)
//! C = f ⊙ C_prev + i ⊙ c̃            h = o ⊙ tanh(C)
//! ```

pub mod check;
pub mod checkpoint;
pub mod data;
pub mod gan;
pub mod layers;
pub mod model;

pub use data::{fit_scalers, window_dataset, MinMax, ScalerPair, WindowedDataset};
pub use gan::{Gan, GanOptions};
pub use model::{
    predict_unscaled, read_loss_csv, train, Architecture, Model, ModelSpec, Network, TrainConfig,
    Trainable, TrainedForecaster,
};
