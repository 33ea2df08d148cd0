//! Statistical kernels over exact decimals.
//!
//! Intermediate values keep the full 28-digit decimal precision; callers that
//! present results round explicitly.

use rust_decimal::prelude::*;
use rust_decimal::MathematicalOps;
use serde::{Deserialize, Serialize};

use super::AggregationError;

fn domain(msg: impl Into<String>) -> AggregationError {
    AggregationError::Domain(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    Population,
    Sample,
}

pub fn sum(xs: &[Decimal]) -> Result<Decimal, AggregationError> {
    xs.iter()
        .try_fold(Decimal::ZERO, |acc, x| acc.checked_add(*x))
        .ok_or_else(|| domain("sum overflows"))
}

pub fn mean(xs: &[Decimal]) -> Result<Decimal, AggregationError> {
    if xs.is_empty() {
        return Err(domain("mean of an empty list"));
    }
    Ok(sum(xs)? / Decimal::from(xs.len()))
}

pub fn median(xs: &[Decimal]) -> Result<Decimal, AggregationError> {
    if xs.is_empty() {
        return Err(domain("median of an empty list"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort();
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok((sorted[n / 2 - 1] + sorted[n / 2]) / Decimal::TWO)
    }
}

/// Sum of squared deviations from the mean.
fn sum_sq_dev(xs: &[Decimal]) -> Result<Decimal, AggregationError> {
    let m = mean(xs)?;
    xs.iter()
        .try_fold(Decimal::ZERO, |acc, x| {
            let d = *x - m;
            d.checked_mul(d).and_then(|sq| acc.checked_add(sq))
        })
        .ok_or_else(|| domain("variance overflows"))
}

pub fn variance(xs: &[Decimal], mode: StdMode) -> Result<Decimal, AggregationError> {
    let denom = match mode {
        StdMode::Population if !xs.is_empty() => xs.len(),
        StdMode::Sample if xs.len() >= 2 => xs.len() - 1,
        StdMode::Population => return Err(domain("population variance needs at least 1 value")),
        StdMode::Sample => return Err(domain("sample variance needs at least 2 values")),
    };
    Ok(sum_sq_dev(xs)? / Decimal::from(denom))
}

pub fn stddev(xs: &[Decimal], mode: StdMode) -> Result<Decimal, AggregationError> {
    let v = variance(xs, mode)?;
    v.sqrt().ok_or_else(|| domain("square root of a negative variance"))
}

/// Pearson correlation coefficient, clamped to [-1, 1].
pub fn pearson(xs: &[Decimal], ys: &[Decimal]) -> Result<Decimal, AggregationError> {
    if xs.len() != ys.len() {
        return Err(domain(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(domain("pearson needs at least 2 pairs"));
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let mut sxy = Decimal::ZERO;
    let mut sxx = Decimal::ZERO;
    let mut syy = Decimal::ZERO;
    for (x, y) in xs.iter().zip(ys) {
        let dx = *x - mx;
        let dy = *y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return Err(domain("pearson is undefined for a constant series"));
    }
    let denom = sxx.sqrt().zip(syy.sqrt()).map(|(a, b)| a * b);
    let denom = denom.ok_or_else(|| domain("pearson denominator"))?;
    let r = sxy / denom;
    Ok(r.clamp(-Decimal::ONE, Decimal::ONE))
}

/// Relative change from `start` to `end`. With `periods`, the compound
/// per-period rate `(end/start)^(1/periods) - 1`.
pub fn growth_rate(
    start: Decimal,
    end: Decimal,
    periods: Option<u32>,
) -> Result<Decimal, AggregationError> {
    if start.is_zero() {
        return Err(AggregationError::DivisionByZero);
    }
    match periods {
        None => Ok((end - start) / start),
        Some(0) => Err(domain("growth_rate needs a positive number of periods")),
        Some(p) => {
            let ratio = end / start;
            if ratio.is_sign_negative() {
                return Err(domain("compound growth across a sign change"));
            }
            let f = ratio.to_f64().ok_or_else(|| domain("growth ratio out of range"))?;
            let rate = f.powf(1.0 / f64::from(p)) - 1.0;
            Decimal::from_f64(rate).ok_or_else(|| domain("growth rate out of range"))
        }
    }
}

/// Grid of smoothing constants scanned by [`ses_best_alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SesGrid {
    pub lo: Decimal,
    pub hi: Decimal,
    pub step: Decimal,
}

impl Default for SesGrid {
    fn default() -> Self {
        Self {
            lo: Decimal::new(1, 2),
            hi: Decimal::new(99, 2),
            step: Decimal::new(1, 2),
        }
    }
}

impl SesGrid {
    pub fn alphas(&self) -> Result<Vec<Decimal>, AggregationError> {
        if self.step <= Decimal::ZERO
            || self.lo <= Decimal::ZERO
            || self.hi > Decimal::ONE
            || self.lo > self.hi
        {
            return Err(domain(format!(
                "invalid alpha grid lo={} hi={} step={}",
                self.lo, self.hi, self.step
            )));
        }
        let mut out = Vec::new();
        let mut i: u32 = 0;
        loop {
            let a = self.lo + self.step * Decimal::from(i);
            if a > self.hi {
                break;
            }
            out.push(a);
            i += 1;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SesFit {
    pub alpha: Decimal,
    pub mse: Decimal,
    pub next_forecast: Decimal,
}

/// Runs single exponential smoothing with `s_1 = x_1`. Returns the sum of
/// squared one-step-ahead errors over `t = 2..n` and the final level `s_n`.
pub fn ses_run(xs: &[Decimal], alpha: Decimal) -> Result<(Decimal, Decimal), AggregationError> {
    let (first, rest) = xs.split_first().ok_or_else(|| domain("empty series"))?;
    let keep = Decimal::ONE - alpha;
    let mut level = *first;
    let mut sse = Decimal::ZERO;
    for x in rest {
        let err = *x - level;
        sse = err
            .checked_mul(err)
            .and_then(|sq| sse.checked_add(sq))
            .ok_or_else(|| domain("smoothing error overflows"))?;
        level = alpha * *x + keep * level;
    }
    Ok((sse, level))
}

pub fn ses_forecast(xs: &[Decimal], alpha: Decimal) -> Result<Decimal, AggregationError> {
    if alpha < Decimal::ZERO || alpha > Decimal::ONE {
        return Err(domain("alpha must lie in [0, 1]"));
    }
    Ok(ses_run(xs, alpha)?.1)
}

/// Picks the grid alpha with the smallest one-step-ahead MSE; ties go to the
/// smaller alpha.
pub fn ses_best_alpha(xs: &[Decimal], grid: &SesGrid) -> Result<SesFit, AggregationError> {
    if xs.len() < 3 {
        return Err(domain("ses_best_alpha needs at least 3 observations"));
    }
    let n_err = Decimal::from(xs.len() - 1);
    let mut best: Option<(Decimal, Decimal, Decimal)> = None;
    for alpha in grid.alphas()? {
        let (sse, level) = ses_run(xs, alpha)?;
        let better = match best {
            None => true,
            Some((b_sse, b_alpha, _)) => (sse, alpha) < (b_sse, b_alpha),
        };
        if better {
            best = Some((sse, alpha, level));
        }
    }
    let (sse, alpha, level) = best.ok_or_else(|| domain("empty alpha grid"))?;
    Ok(SesFit {
        alpha,
        mse: sse / n_err,
        next_forecast: level,
    })
}

/// Rounds to `digits` significant digits (half away from zero).
pub fn round_significant(d: Decimal, digits: u32) -> Decimal {
    if d.is_zero() {
        return Decimal::ZERO;
    }
    let abs = d.abs();
    let int_digits = if abs >= Decimal::ONE {
        abs.trunc().to_string().len() as i64
    } else {
        // Count leading zeros after the point: 0.00123 -> -2
        let s = abs.to_string();
        let frac = s.split('.').nth(1).unwrap_or("");
        -(frac.chars().take_while(|c| *c == '0').count() as i64)
    };
    let dp = digits as i64 - int_digits;
    if dp < 0 {
        let factor = Decimal::from(10u64.pow((-dp) as u32));
        return ((d / factor).round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero)
            * factor)
            .normalize();
    }
    d.round_dp_with_strategy(dp.min(28) as u32, RoundingStrategy::MidpointAwayFromZero)
        .normalize()
}
