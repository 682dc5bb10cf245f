//! Classical additive decomposition and z-scoring.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::corpus::MonthlySeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Undefined on the first and last `period / 2` points.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<Option<f64>>,
    pub period: usize,
}

/// Centered moving-average trend, phase-mean seasonal component re-centered
/// to sum to zero over a period, and the remainder.
///
/// An even period uses the 2×period average (half weight on both ends).
pub fn decompose(values: &[f64], period: usize) -> Result<Decomposition, StatsError> {
    if period < 2 {
        return Err(StatsError::Period);
    }
    let n = values.len();
    if n < 2 * period {
        return Err(StatsError::TooShort {
            len: n,
            period,
            required: 2 * period,
        });
    }
    let half = period / 2;
    let mut trend = vec![None; n];
    for (t, slot) in trend.iter_mut().enumerate().take(n - half).skip(half) {
        let window = &values[t - half..=t + half];
        let sum: f64 = if period % 2 == 0 {
            0.5 * window[0]
                + window[1..window.len() - 1].iter().sum::<f64>()
                + 0.5 * window[window.len() - 1]
        } else {
            window.iter().sum()
        };
        *slot = Some(sum / period as f64);
    }

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (t, tr) in trend.iter().enumerate() {
        if let Some(tr) = tr {
            sums[t % period] += values[t] - tr;
            counts[t % period] += 1;
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| s / *c as f64)
        .collect();
    let centre = means.iter().sum::<f64>() / period as f64;
    let profile: Vec<f64> = means.iter().map(|m| m - centre).collect();
    let seasonal: Vec<f64> = (0..n).map(|t| profile[t % period]).collect();

    let residual = trend
        .iter()
        .zip(values)
        .zip(&seasonal)
        .map(|((tr, x), s)| tr.map(|tr| x - tr - s))
        .collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
        period,
    })
}

/// `(x - mean) / s` with the sample standard deviation, over the defined
/// entries only.
pub fn zscore_defined(values: &[Option<f64>]) -> Result<Vec<Option<f64>>, StatsError> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let n = defined.len();
    if n < 2 {
        return Err(StatsError::TooFewValues(n));
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let var = defined.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // Relative threshold: rounding in the mean leaves ~1e-16 scatter.
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok(values.iter().map(|v| v.map(|x| (x - mean) / sd)).collect())
}

pub fn zscore(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    let wrapped: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    Ok(zscore_defined(&wrapped)?.into_iter().flatten().collect())
}

/// One row of the trend export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub year: i32,
    pub month: u32,
    pub raw: f64,
    pub trend: Option<f64>,
    pub seasonal: f64,
    pub residual: Option<f64>,
    pub trend_z: Option<f64>,
}

/// Decomposes a monthly series and z-scores its trend component.
pub fn trend_table(series: &MonthlySeries, period: usize) -> Result<Vec<TrendRow>, StatsError> {
    let d = decompose(&series.values, period)?;
    let z = zscore_defined(&d.trend)?;
    Ok((0..series.len())
        .map(|i| {
            let ym = series.month_at(i);
            TrendRow {
                year: ym.year,
                month: ym.month,
                raw: series.values[i],
                trend: d.trend[i],
                seasonal: d.seasonal[i],
                residual: d.residual[i],
                trend_z: z[i],
            }
        })
        .collect())
}

pub fn write_trend_csv<W: std::io::Write>(out: W, rows: &[TrendRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "year", "month", "raw", "trend", "seasonal", "residual", "trend_z",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.month.to_string(),
            format!("{}", r.raw),
            opt(r.trend),
            format!("{:.6}", r.seasonal),
            opt(r.residual),
            opt(r.trend_z),
        ])?;
    }
    w.flush()?;
    Ok(())
}
