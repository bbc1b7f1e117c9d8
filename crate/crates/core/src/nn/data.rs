//! Min-max scaling and sliding-window sample construction.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::frame::{DailyFeatureFrame, TARGET};
use crate::indicators::TEST_ROWS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64], name: &str) -> Result<MinMax> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::ConstantColumn(name.to_string()));
        }
        Ok(MinMax { min, max })
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// One scaler for the target and one per feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerPair {
    pub target: MinMax,
    pub features: Vec<MinMax>,
}

impl ScalerPair {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.features)
            .map(|(&x, s)| s.transform(x))
            .collect()
    }
}

/// Fits on the given rows; the caller passes only training-region rows.
pub fn fit_scalers(rows: &[Vec<f64>], names: &[String], target: &[f64]) -> Result<ScalerPair> {
    let features = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            MinMax::fit(&col, name)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalerPair {
        target: MinMax::fit(target, TARGET)?,
        features,
    })
}

/// Samples are flattened `lookback x features`, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
    pub x_test: Vec<Vec<f64>>,
    pub y_test: Vec<f64>,
    pub lookback: usize,
    pub feature_names: Vec<String>,
    pub scalers: ScalerPair,
    /// Date of each target, train then test.
    pub target_dates: Vec<NaiveDate>,
}

impl WindowedDataset {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn train_dates(&self) -> &[NaiveDate] {
        &self.target_dates[..self.y_train.len()]
    }

    pub fn test_dates(&self) -> &[NaiveDate] {
        &self.target_dates[self.y_train.len()..]
    }

    pub fn unscaled_targets(&self, test: bool) -> Vec<f64> {
        let ys = if test { &self.y_test } else { &self.y_train };
        ys.iter().map(|&y| self.scalers.target.inverse(y)).collect()
    }
}

/// Number of leading frame rows whose values may be used for fitting scalers.
pub fn training_rows(n_rows: usize) -> usize {
    n_rows.saturating_sub(TEST_ROWS)
}

/// Sample `t` holds rows `t-lookback+1 ..= t` and targets `adj_close[t+1]`.
/// The last 20 targets form the test split; scalers see only rows before them.
pub fn window_dataset(
    frame: &DailyFeatureFrame,
    lookback: usize,
    with_score: bool,
    with_topic_score: bool,
) -> Result<WindowedDataset> {
    if lookback == 0 {
        return Err(Error::InvalidInput("lookback must be positive".into()));
    }
    let needed = lookback + TEST_ROWS + 1;
    if frame.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: frame.len(),
        });
    }
    let names = frame.feature_names(with_score, with_topic_score);
    let rows = frame.rows(&names)?;
    let target = frame.column(TARGET)?;
    let fit_until = training_rows(frame.len());
    let scalers = fit_scalers(&rows[..fit_until], &names, &target[..fit_until])?;
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scalers.transform_row(r)).collect();

    let n_samples = frame.len() - lookback;
    let n_train = n_samples - TEST_ROWS;
    let mut x = Vec::with_capacity(n_samples);
    let mut y = Vec::with_capacity(n_samples);
    let mut target_dates = Vec::with_capacity(n_samples);
    for t in (lookback - 1)..(frame.len() - 1) {
        x.push(scaled[t + 1 - lookback..=t].concat());
        y.push(scalers.target.transform(target[t + 1]));
        target_dates.push(frame.dates[t + 1]);
    }
    let x_test = x.split_off(n_train);
    let y_test = y.split_off(n_train);
    Ok(WindowedDataset {
        x_train: x,
        y_train: y,
        x_test,
        y_test,
        lookback,
        feature_names: names,
        scalers,
        target_dates,
    })
}
