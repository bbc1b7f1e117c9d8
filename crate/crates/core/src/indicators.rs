//! Technical indicators derived from daily closes.
//!
//! Windowed indicators return `Option<f64>` per index; `None` marks warm-up
//! positions where the window is not yet full.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::ingest::BarSeries;

pub const MA_SHORT: usize = 7;
pub const MA_LONG: usize = 20;
pub const SD_WINDOW: usize = 20;
pub const EMA_SPAN: usize = 20;
pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const BAND_WIDTH: f64 = 2.0;
pub const DEFAULT_MOMENTUM_LAG: usize = 1;
/// Rows reserved for the test split on top of the MACD warm-up.
pub const TEST_ROWS: usize = 20;

/// Column order of a [`FeatureTable`].
pub const FEATURE_COLUMNS: [&str; 14] = [
    "open",
    "high",
    "low",
    "close",
    "adj_close",
    "volume",
    "ma7",
    "ma20",
    "macd",
    "sd20",
    "upper_band",
    "lower_band",
    "ema",
    "log_momentum",
];

pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    if window > series.len() {
        return Err(Error::TooShort {
            needed: window,
            got: series.len(),
        });
    }
    // Each window is summed directly so values do not drift over long series.
    Ok((0..series.len())
        .map(|i| {
            (i + 1 >= window)
                .then(|| series[i + 1 - window..=i].iter().sum::<f64>() / window as f64)
        })
        .collect())
}

pub fn ema(series: &[f64], span: usize) -> Result<Vec<f64>> {
    if span == 0 {
        return Err(Error::InvalidInput("span must be positive".into()));
    }
    let first = *series
        .first()
        .ok_or(Error::TooShort { needed: 1, got: 0 })?;
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    out.push(first);
    for &x in &series[1..] {
        let prev = *out.last().unwrap();
        out.push(alpha * x + (1.0 - alpha) * prev);
    }
    Ok(out)
}

/// 12-day EMA minus 26-day EMA. The first 25 values are marked undefined.
pub fn macd(series: &[f64]) -> Result<Vec<Option<f64>>> {
    if series.len() < MACD_SLOW {
        return Err(Error::TooShort {
            needed: MACD_SLOW,
            got: series.len(),
        });
    }
    let fast = ema(series, MACD_FAST)?;
    let slow = ema(series, MACD_SLOW)?;
    Ok(fast
        .iter()
        .zip(&slow)
        .enumerate()
        .map(|(i, (f, s))| (i + 1 >= MACD_SLOW).then_some(f - s))
        .collect())
}

/// Population standard deviation over each trailing window.
pub fn rolling_std(series: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window < 2 {
        return Err(Error::InvalidInput("window must be at least 2".into()));
    }
    if window > series.len() {
        return Err(Error::TooShort {
            needed: window,
            got: series.len(),
        });
    }
    Ok((0..series.len())
        .map(|i| {
            (i + 1 >= window).then(|| {
                let w = &series[i + 1 - window..=i];
                let mean = w.iter().sum::<f64>() / window as f64;
                let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64;
                var.sqrt()
            })
        })
        .collect())
}

pub fn bollinger(ma: &[f64], sd: &[f64], k: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if ma.len() != sd.len() {
        return Err(Error::LengthMismatch {
            left: ma.len(),
            right: sd.len(),
        });
    }
    let upper = ma.iter().zip(sd).map(|(m, s)| m + k * s).collect();
    let lower = ma.iter().zip(sd).map(|(m, s)| m - k * s).collect();
    Ok((upper, lower))
}

/// Signed log of the `lag`-day price change: `sign(m) * ln(1 + |m|)`.
///
/// The plain logarithm of momentum is undefined for non-positive changes;
/// the signed form keeps sign and ordering while being total.
pub fn log_momentum(series: &[f64], lag: usize) -> Result<Vec<Option<f64>>> {
    if lag == 0 {
        return Err(Error::InvalidInput("lag must be positive".into()));
    }
    if lag >= series.len() {
        return Err(Error::TooShort {
            needed: lag + 1,
            got: series.len(),
        });
    }
    Ok((0..series.len())
        .map(|i| {
            (i >= lag).then(|| {
                let m = series[i] - series[i - lag];
                m.signum() * m.abs().ln_1p()
            })
        })
        .map(|v| v.map(|x| if x == 0.0 { 0.0 } else { x }))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dates: Vec<NaiveDate>,
    /// Columns in [`FEATURE_COLUMNS`] order.
    pub columns: Vec<(String, Vec<f64>)>,
    pub warmup_dropped: usize,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        wtr.write_record(&header)?;
        for (i, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.to_string()];
            row.extend(self.columns.iter().map(|(_, c)| format!("{:?}", c[i])));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<feature writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<FeatureTable> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("date") {
            return Err(Error::InvalidInput(
                "feature table must start with `date`".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            dates.push(
                NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| Error::Row {
                    line,
                    message: e.to_string(),
                })?,
            );
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(rec[j + 1].parse().map_err(|_| Error::Row {
                    line,
                    message: format!("bad value in column {}", names[j]),
                })?);
            }
        }
        Ok(FeatureTable {
            dates,
            columns: names.into_iter().zip(cols).collect(),
            warmup_dropped: 0,
        })
    }
}

/// Computes every indicator column on `close` and trims the warm-up rows.
pub fn build_features(bars: &BarSeries, momentum_lag: usize) -> Result<FeatureTable> {
    let needed = MACD_SLOW + TEST_ROWS;
    if bars.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: bars.len(),
        });
    }
    let close = bars.column(|b| b.close);
    let ma7 = moving_average(&close, MA_SHORT)?;
    let ma20 = moving_average(&close, MA_LONG)?;
    let macd = macd(&close)?;
    let sd20 = rolling_std(&close, SD_WINDOW)?;
    let ema20 = ema(&close, EMA_SPAN)?;
    let mom = log_momentum(&close, momentum_lag)?;

    let warmup = (MACD_SLOW - 1)
        .max(MA_LONG - 1)
        .max(SD_WINDOW - 1)
        .max(MA_SHORT - 1)
        .max(momentum_lag);
    if warmup >= bars.len() {
        return Err(Error::TooShort {
            needed: warmup + 1,
            got: bars.len(),
        });
    }
    let defined = |v: &[Option<f64>]| -> Vec<f64> {
        v[warmup..]
            .iter()
            .map(|x| x.expect("defined after warm-up"))
            .collect()
    };
    let ma20_t = defined(&ma20);
    let sd20_t = defined(&sd20);
    let (upper, lower) = bollinger(&ma20_t, &sd20_t, BAND_WIDTH)?;
    let tail = |v: Vec<f64>| v[warmup..].to_vec();

    let columns = vec![
        ("open", tail(bars.column(|b| b.open))),
        ("high", tail(bars.column(|b| b.high))),
        ("low", tail(bars.column(|b| b.low))),
        ("close", tail(close.clone())),
        ("adj_close", tail(bars.column(|b| b.adj_close))),
        ("volume", tail(bars.column(|b| b.volume as f64))),
        ("ma7", defined(&ma7)),
        ("ma20", ma20_t),
        ("macd", defined(&macd)),
        ("sd20", sd20_t),
        ("upper_band", upper),
        ("lower_band", lower),
        ("ema", tail(ema20)),
        ("log_momentum", defined(&mom)),
    ]
    .into_iter()
    .map(|(n, v)| (n.to_string(), v))
    .collect();

    Ok(FeatureTable {
        dates: bars.dates()[warmup..].to_vec(),
        columns,
        warmup_dropped: warmup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TABLE2_CLOSE: [f64; 9] = [
        164.25, 164.16, 159.49, 161.05, 163.10, 165.12, 164.43, 162.32, 162.37,
    ];

    #[test]
    fn moving_average_examples() {
        let ma = moving_average(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(ma, vec![None, Some(1.5), Some(2.5), Some(3.5)]);
        let c = moving_average(&[3.25; 10], 4).unwrap();
        assert!(c.iter().flatten().all(|&x| x == 3.25));
        assert!(moving_average(&[1.0], 2).is_err());
    }

    #[test]
    fn ma7_on_table_two() {
        // 2021-10-08 is the 7th row
        let ma = moving_average(&TABLE2_CLOSE, 7).unwrap();
        let hand = (164.25 + 164.16 + 159.49 + 161.05 + 163.10 + 165.12 + 164.43) / 7.0;
        assert_abs_diff_eq!(ma[6].unwrap(), hand, epsilon = 1e-12);
        assert_abs_diff_eq!(hand, 163.085_714_285_714_3, epsilon = 1e-9);
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema(&[1.0, 2.0, 3.0], 3).unwrap(), vec![1.0, 1.5, 2.25]);
        let s = [4.0, 1.0, 7.5];
        assert_eq!(ema(&s, 1).unwrap(), s.to_vec());
        assert!(ema(&[5.0; 8], 6).unwrap().iter().all(|&x| x == 5.0));
        assert!(ema(&[], 3).is_err());
    }

    #[test]
    fn macd_examples() {
        let m = macd(&[10.0; 30]).unwrap();
        assert!(m.iter().flatten().all(|&x| x == 0.0));
        let lin: Vec<f64> = (0..60).map(|i| 0.5 * i as f64).collect();
        let m = macd(&lin).unwrap();
        assert!(m.iter().flatten().all(|&x| x > 0.0));
        let e12 = ema(&lin, 12).unwrap();
        let e26 = ema(&lin, 26).unwrap();
        assert_eq!(m[40].unwrap(), e12[40] - e26[40]);
        assert!(macd(&[1.0; 25]).is_err());
    }

    #[test]
    fn rolling_std_examples() {
        assert!(rolling_std(&[2.0; 25], 20)
            .unwrap()
            .iter()
            .flatten()
            .all(|&x| x == 0.0));
        let alt: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(rolling_std(&alt, 2)
            .unwrap()
            .iter()
            .flatten()
            .all(|&x| x == 1.0));
        assert!(rolling_std(&alt, 11).is_err());
        assert!(rolling_std(&alt, 1).is_err());
    }

    #[test]
    fn bollinger_examples() {
        assert_eq!(
            bollinger(&[100.0], &[2.0], 2.0).unwrap(),
            (vec![104.0], vec![96.0])
        );
        assert_eq!(
            bollinger(&[100.0], &[0.0], 2.0).unwrap(),
            (vec![100.0], vec![100.0])
        );
        assert_eq!(
            bollinger(&[100.0], &[3.0], 0.0).unwrap(),
            (vec![100.0], vec![100.0])
        );
        assert!(bollinger(&[1.0, 2.0], &[1.0], 2.0).is_err());
    }

    #[test]
    fn log_momentum_examples() {
        let e1 = std::f64::consts::E - 1.0;
        let lm = log_momentum(&[1.0, 1.0 + e1, 1.0], 1).unwrap();
        assert_eq!(lm[0], None);
        assert_abs_diff_eq!(lm[1].unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lm[2].unwrap(), -1.0, epsilon = 1e-15);
        assert!(log_momentum(&[7.0; 5], 2)
            .unwrap()
            .iter()
            .flatten()
            .all(|&x| x == 0.0));
        assert!(log_momentum(&[1.0, 2.0], 2).is_err());
    }
}
