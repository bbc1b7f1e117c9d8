//! Layers with hand-written backward passes.
//!
//! Sequences are flat `steps x channels` slices, time-major. Every backward
//! pass accumulates into the parameter gradients and optionally writes the
//! gradient with respect to its input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A parameter tensor and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(len: usize) -> Param {
        Param {
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    /// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform(len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Param {
        let s = 1.0 / (fan_in as f64).sqrt();
        Param {
            value: (0..len).map(|_| rng.gen_range(-s..s)).collect(),
            grad: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(xs: &mut [f64]) {
    xs.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes `grad` where the forward output was not positive.
pub fn relu_backward(output: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Fully connected layer, weights stored `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            inputs,
            outputs,
            weight: Param::uniform(inputs * outputs, inputs, rng),
            bias: Param::uniform(outputs, inputs, rng),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .value
            .chunks_exact(self.inputs)
            .zip(&self.bias.value)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    pub fn backward(&mut self, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            self.bias.grad[o] += g;
            axpy(
                g,
                x,
                &mut self.weight.grad[o * self.inputs..(o + 1) * self.inputs],
            );
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (row, &g) in self.weight.value.chunks_exact(self.inputs).zip(dy) {
                axpy(g, row, dx);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

/// Valid 1-D cross-correlation with ReLU. Weights stored
/// `filters x kernel x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Conv1d {
    pub fn new(channels: usize, filters: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Conv1d {
        let fan_in = channels * kernel;
        Conv1d {
            channels,
            filters,
            kernel,
            weight: Param::uniform(filters * kernel * channels, fan_in, rng),
            bias: Param::uniform(filters, fan_in, rng),
        }
    }

    pub fn output_steps(&self, steps: usize) -> usize {
        steps + 1 - self.kernel
    }

    /// Pre-activation maps, `(steps - kernel + 1) x filters`.
    pub fn pre_activation(&self, x: &[f64], steps: usize) -> Vec<f64> {
        assert!(steps >= self.kernel, "input shorter than kernel");
        let span = self.kernel * self.channels;
        let out_steps = self.output_steps(steps);
        let mut z = Vec::with_capacity(out_steps * self.filters);
        for t in 0..out_steps {
            let window = &x[t * self.channels..t * self.channels + span];
            for (w, b) in self.weight.value.chunks_exact(span).zip(&self.bias.value) {
                z.push(b + dot(w, window));
            }
        }
        z
    }

    pub fn forward(&self, x: &[f64], steps: usize) -> Vec<f64> {
        let mut a = self.pre_activation(x, steps);
        relu(&mut a);
        a
    }

    /// `output` is the forward result, `dy` the gradient at it.
    pub fn backward(&mut self, x: &[f64], output: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        let span = self.kernel * self.channels;
        let mut dz = dy.to_vec();
        relu_backward(output, &mut dz);
        for (t, row) in dz.chunks_exact(self.filters).enumerate() {
            let window = &x[t * self.channels..t * self.channels + span];
            for (f, &g) in row.iter().enumerate() {
                if g != 0.0 {
                    self.bias.grad[f] += g;
                    axpy(g, window, &mut self.weight.grad[f * span..(f + 1) * span]);
                }
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (t, row) in dz.chunks_exact(self.filters).enumerate() {
                let window = &mut dx[t * self.channels..t * self.channels + span];
                for (w, &g) in self.weight.value.chunks_exact(span).zip(row) {
                    if g != 0.0 {
                        axpy(g, w, window);
                    }
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

/// Non-overlapping max pooling over time; a trailing remainder is dropped.
/// Returns the pooled maps and the source index of every output.
pub fn maxpool(x: &[f64], steps: usize, channels: usize, pool: usize) -> (Vec<f64>, Vec<usize>) {
    let out_steps = steps / pool;
    let mut y = Vec::with_capacity(out_steps * channels);
    let mut arg = Vec::with_capacity(out_steps * channels);
    for t in 0..out_steps {
        for c in 0..channels {
            let mut best = (t * pool) * channels + c;
            for s in 1..pool {
                let idx = (t * pool + s) * channels + c;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            y.push(x[best]);
            arg.push(best);
        }
    }
    (y, arg)
}

pub fn maxpool_backward(dy: &[f64], arg: &[usize], dx: &mut [f64]) {
    dx.iter_mut().for_each(|v| *v = 0.0);
    for (&g, &i) in dy.iter().zip(arg) {
        dx[i] += g;
    }
}

/// Gate order inside the stacked weights.
const FORGET: usize = 0;
const CANDIDATE: usize = 1;
const INPUT: usize = 2;
const OUTPUT: usize = 3;

/// LSTM with forget, input and output gates. Stacked weights are
/// `4*hidden x inputs` and `4*hidden x hidden`, gate blocks in the order
/// forget, candidate, input, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub inputs: usize,
    pub hidden: usize,
    pub w_input: Param,
    pub w_hidden: Param,
    pub bias: Param,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub steps: usize,
    /// `steps x 4*hidden` gate activations.
    pub gates: Vec<f64>,
    /// `(steps + 1) x hidden`, row 0 is the zero initial state.
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmTrace {
    pub fn h(&self, t: usize, hidden: usize) -> &[f64] {
        &self.hidden[(t + 1) * hidden..(t + 2) * hidden]
    }

    pub fn c(&self, t: usize, hidden: usize) -> &[f64] {
        &self.cell[(t + 1) * hidden..(t + 2) * hidden]
    }

    pub fn last_hidden(&self, hidden: usize) -> &[f64] {
        &self.hidden[self.steps * hidden..]
    }

    /// Activation of `gate` (0 forget, 1 candidate, 2 input, 3 output) at step `t`.
    pub fn gate(&self, t: usize, gate: usize, hidden: usize) -> &[f64] {
        let base = t * 4 * hidden + gate * hidden;
        &self.gates[base..base + hidden]
    }
}

impl Lstm {
    pub fn new(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Lstm {
        let fan_in = inputs + hidden;
        Lstm {
            inputs,
            hidden,
            w_input: Param::uniform(4 * hidden * inputs, fan_in, rng),
            w_hidden: Param::uniform(4 * hidden * hidden, fan_in, rng),
            bias: Param::uniform(4 * hidden, fan_in, rng),
        }
    }

    pub fn forward(&self, x: &[f64], steps: usize) -> LstmTrace {
        let zeros = vec![0.0; self.hidden];
        self.forward_from(x, steps, &zeros, &zeros)
    }

    /// Runs from a given initial hidden and cell state.
    pub fn forward_from(&self, x: &[f64], steps: usize, h0: &[f64], c0: &[f64]) -> LstmTrace {
        let (n_in, n_h) = (self.inputs, self.hidden);
        assert_eq!(x.len(), steps * n_in, "sequence shape");
        let mut gates = Vec::with_capacity(steps * 4 * n_h);
        let mut cell = vec![0.0; (steps + 1) * n_h];
        let mut hidden = vec![0.0; (steps + 1) * n_h];
        cell[..n_h].copy_from_slice(c0);
        hidden[..n_h].copy_from_slice(h0);
        let mut z = vec![0.0; 4 * n_h];
        for t in 0..steps {
            let xt = &x[t * n_in..(t + 1) * n_in];
            let h_prev = &hidden[t * n_h..(t + 1) * n_h];
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = self.bias.value[r]
                    + dot(&self.w_input.value[r * n_in..(r + 1) * n_in], xt)
                    + dot(&self.w_hidden.value[r * n_h..(r + 1) * n_h], h_prev);
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = if r / n_h == CANDIDATE {
                    zr.tanh()
                } else {
                    sigmoid(*zr)
                };
            }
            gates.extend_from_slice(&z);
            let (c_done, c_next) = cell.split_at_mut((t + 1) * n_h);
            let c_prev = &c_done[t * n_h..];
            let h_next = &mut hidden[(t + 1) * n_h..(t + 2) * n_h];
            for j in 0..n_h {
                let f = z[FORGET * n_h + j];
                let g = z[CANDIDATE * n_h + j];
                let i = z[INPUT * n_h + j];
                let o = z[OUTPUT * n_h + j];
                let c = f * c_prev[j] + i * g;
                c_next[j] = c;
                h_next[j] = o * c.tanh();
            }
        }
        LstmTrace {
            steps,
            gates,
            cell,
            hidden,
        }
    }

    /// Back-propagates a gradient arriving at the final hidden state.
    pub fn backward(
        &mut self,
        x: &[f64],
        trace: &LstmTrace,
        dh_last: &[f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let (n_in, n_h) = (self.inputs, self.hidden);
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; n_h];
        let mut dz = vec![0.0; 4 * n_h];
        if let Some(dx) = dx.as_deref_mut() {
            dx.iter_mut().for_each(|v| *v = 0.0);
        }
        for t in (0..trace.steps).rev() {
            let g_all = &trace.gates[t * 4 * n_h..(t + 1) * 4 * n_h];
            let c_prev = &trace.cell[t * n_h..(t + 1) * n_h];
            let c_now = &trace.cell[(t + 1) * n_h..(t + 2) * n_h];
            for j in 0..n_h {
                let f = g_all[FORGET * n_h + j];
                let g = g_all[CANDIDATE * n_h + j];
                let i = g_all[INPUT * n_h + j];
                let o = g_all[OUTPUT * n_h + j];
                let tc = c_now[j].tanh();
                let d_out = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                dz[FORGET * n_h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
                dz[CANDIDATE * n_h + j] = dc[j] * i * (1.0 - g * g);
                dz[INPUT * n_h + j] = dc[j] * g * i * (1.0 - i);
                dz[OUTPUT * n_h + j] = d_out * o * (1.0 - o);
                dc[j] *= f;
            }
            let xt = &x[t * n_in..(t + 1) * n_in];
            let h_prev = &trace.hidden[t * n_h..(t + 1) * n_h];
            for (r, &g) in dz.iter().enumerate() {
                self.bias.grad[r] += g;
                axpy(g, xt, &mut self.w_input.grad[r * n_in..(r + 1) * n_in]);
                axpy(g, h_prev, &mut self.w_hidden.grad[r * n_h..(r + 1) * n_h]);
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxt = &mut dx[t * n_in..(t + 1) * n_in];
                for (r, &g) in dz.iter().enumerate() {
                    axpy(g, &self.w_input.value[r * n_in..(r + 1) * n_in], dxt);
                }
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dz.iter().enumerate() {
                axpy(g, &self.w_hidden.value[r * n_h..(r + 1) * n_h], &mut dh);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn conv_examples() {
        let mut conv = Conv1d::new(1, 1, 1, &mut rng());
        conv.weight.value = vec![1.0];
        conv.bias.value = vec![0.0];
        assert_eq!(conv.forward(&[3.0, 5.0, 9.0], 3), [3.0, 5.0, 9.0]);
        let mut diff = Conv1d::new(1, 1, 2, &mut rng());
        diff.weight.value = vec![1.0, -1.0];
        diff.bias.value = vec![0.0];
        assert_eq!(diff.pre_activation(&[3.0, 5.0, 9.0], 3), [-2.0, -4.0]);
        assert_eq!(diff.forward(&[3.0, 5.0, 9.0], 3), [0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "shorter than kernel")]
    fn conv_rejects_short_input() {
        Conv1d::new(1, 1, 3, &mut rng()).forward(&[1.0, 2.0], 2);
    }

    #[test]
    fn conv_matches_double_loop() {
        let mut r = rng();
        let conv = Conv1d::new(3, 4, 2, &mut r);
        let x: Vec<f64> = (0..15).map(|_| r.gen_range(-1.0..1.0)).collect();
        let z = conv.pre_activation(&x, 5);
        for t in 0..4 {
            for f in 0..4 {
                let mut acc = conv.bias.value[f];
                for k in 0..2 {
                    for c in 0..3 {
                        acc += conv.weight.value[f * 6 + k * 3 + c] * x[(t + k) * 3 + c];
                    }
                }
                assert!((z[t * 4 + f] - acc).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn maxpool_examples() {
        assert_eq!(maxpool(&[1.0, 3.0, 2.0, 5.0], 4, 1, 2).0, [3.0, 5.0]);
        assert_eq!(maxpool(&[4.0; 6], 6, 1, 2).0, [4.0; 3]);
        assert!(maxpool(&[7.0], 1, 1, 2).0.is_empty());
        let (y, arg) = maxpool(&[1.0, 9.0, 8.0, 2.0, 0.0, 0.0], 3, 2, 2);
        assert_eq!(y, [8.0, 9.0]);
        assert_eq!(arg, [2, 1]);
    }

    #[test]
    fn lstm_zero_weights_stay_at_zero() {
        let mut cell = Lstm::new(2, 3, &mut rng());
        for p in cell.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let trace = cell.forward(&[0.3, -1.0, 2.0, 0.5], 2);
        assert!(trace.hidden.iter().all(|&h| h == 0.0));
        assert!(trace.cell.iter().all(|&c| c == 0.0));
        for t in 0..2 {
            assert!(trace.gate(t, FORGET, 3).iter().all(|&f| f == 0.5));
            assert!(trace.gate(t, INPUT, 3).iter().all(|&f| f == 0.5));
            assert!(trace.gate(t, OUTPUT, 3).iter().all(|&f| f == 0.5));
        }
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut r = rng();
        let cell = Lstm::new(2, 3, &mut r);
        let x: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
        let trace = cell.forward(&x, 3);
        let (wx, wh, b) = (&cell.w_input.value, &cell.w_hidden.value, &cell.bias.value);
        let mut h = [0.0f64; 3];
        let mut c = [0.0f64; 3];
        for t in 0..3 {
            let pre = |gate: usize, j: usize| {
                let r = gate * 3 + j;
                let mut s = b[r];
                for k in 0..2 {
                    s += wx[r * 2 + k] * x[t * 2 + k];
                }
                for k in 0..3 {
                    s += wh[r * 3 + k] * h[k];
                }
                s
            };
            let mut h_new = [0.0; 3];
            for j in 0..3 {
                let f = sigmoid(pre(0, j));
                let cand = pre(1, j).tanh();
                let i = sigmoid(pre(2, j));
                let o = sigmoid(pre(3, j));
                c[j] = f * c[j] + i * cand;
                h_new[j] = o * c[j].tanh();
            }
            h = h_new;
            for j in 0..3 {
                assert!((trace.h(t, 3)[j] - h[j]).abs() < 1e-12);
                assert!((trace.c(t, 3)[j] - c[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forced_gates_carry_the_cell_state() {
        let mut r = rng();
        let mut cell = Lstm::new(1, 2, &mut r);
        for j in 0..2 {
            cell.bias.value[FORGET * 2 + j] = 800.0;
            cell.bias.value[INPUT * 2 + j] = -800.0;
        }
        cell.w_input.value.iter_mut().for_each(|v| *v *= 1e-3);
        cell.w_hidden.value.iter_mut().for_each(|v| *v *= 1e-3);
        let x: Vec<f64> = (0..40).map(|_| r.gen_range(-1.0..1.0)).collect();
        let c0 = [0.7, -1.3];
        let trace = cell.forward_from(&x, 40, &[0.1, 0.2], &c0);
        for t in 0..40 {
            assert_eq!(trace.gate(t, FORGET, 2), [1.0, 1.0]);
            assert_eq!(trace.gate(t, INPUT, 2), [0.0, 0.0]);
            assert_eq!(trace.c(t, 2), c0);
        }
    }

    #[test]
    fn dense_backward_input_gradient() {
        let mut r = rng();
        let mut d = Dense::new(3, 2, &mut r);
        let x = [0.5, -0.25, 1.0];
        let mut dx = [0.0; 3];
        d.backward(&x, &[1.0, 0.0], Some(&mut dx));
        assert_eq!(dx.to_vec(), d.weight.value[..3].to_vec());
        assert_eq!(d.weight.grad[..3], x);
        assert_eq!(d.bias.grad, [1.0, 0.0]);
    }
}
