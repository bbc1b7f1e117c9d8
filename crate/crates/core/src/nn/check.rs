//! Central finite-difference comparison against analytic gradients.

use super::model::Trainable;

/// Gradients smaller than this are compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// `(tensor, element)` of the worst entry.
    pub worst: (usize, usize),
}

/// `|a - n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Compares the gradients currently stored in `model` for the listed
/// tensors against `(loss(θ+h) - loss(θ-h)) / 2h`. The model's parameters are
/// restored afterwards.
pub fn finite_difference_check<M: Trainable>(
    model: &mut M,
    tensors: impl IntoIterator<Item = usize>,
    h: f64,
    loss: impl Fn(&M) -> f64,
) -> GradientCheck {
    let mut report = GradientCheck {
        max_relative_error: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    for t in tensors {
        let len = model.params()[t].len();
        for i in 0..len {
            let analytic = model.params()[t].grad[i];
            let original = model.params()[t].value[i];
            model.params_mut()[t].value[i] = original + h;
            let up = loss(model);
            model.params_mut()[t].value[i] = original - h;
            let down = loss(model);
            model.params_mut()[t].value[i] = original;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic, numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (t, i);
            }
            report.checked += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Param;

    struct Quadratic(Param);

    impl Trainable for Quadratic {
        fn params(&self) -> Vec<&Param> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            vec![&mut self.0]
        }
    }

    fn loss(q: &Quadratic) -> f64 {
        q.0.value.iter().map(|v| v * v * v).sum()
    }

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let mut q = Quadratic(Param {
            value: vec![0.5, -1.5],
            grad: vec![0.75, 6.75],
        });
        let ok = finite_difference_check(&mut q, [0], 1e-5, loss);
        assert!(ok.max_relative_error < 1e-8);
        assert_eq!(ok.checked, 2);
        assert_eq!(q.0.value, [0.5, -1.5]);
        q.0.grad[1] = 6.0;
        let bad = finite_difference_check(&mut q, [0], 1e-5, loss);
        assert_eq!(bad.worst, (0, 1));
        assert!(bad.max_relative_error > 0.1);
    }
}
