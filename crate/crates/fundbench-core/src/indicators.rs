//! Technical summaries that fill the technical-analyst prompt placeholders:
//! trend, mean reversion, RSI, volatility, volume, and support/resistance.
//! All computations are pure functions of their inputs and render to
//! fixed-format sentences so replayed prompts are byte-stable.

use rust_decimal::Decimal;

use crate::market::OHLCVBar;

pub const DEFAULT_RSI_PERIOD: usize = 14;
pub const DEFAULT_TREND_SHORT: usize = 10;
pub const DEFAULT_TREND_LONG: usize = 50;
pub const DEFAULT_STAT_WINDOW: usize = 20;

/// Relative tolerance separating Uptrend/Downtrend from Flat.
const TREND_EPSILON: f64 = 0.001;
const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndicatorError {
    #[error("insufficient history: need {need} points, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("average volume over the window is zero")]
    ZeroAverageVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendLabel {
    Uptrend,
    Downtrend,
    Flat,
}

impl TrendLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrendLabel::Uptrend => "Uptrend",
            TrendLabel::Downtrend => "Downtrend",
            TrendLabel::Flat => "Flat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendReading {
    pub label: TrendLabel,
    pub short_sma: f64,
    pub long_sma: f64,
}

/// Parameters for the six sub-computations.
#[derive(Debug, Clone)]
pub struct IndicatorParams {
    pub rsi_period: usize,
    pub trend_short: usize,
    pub trend_long: usize,
    pub mean_reversion_window: usize,
    pub volatility_window: usize,
    pub volume_window: usize,
    pub levels_window: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        IndicatorParams {
            rsi_period: DEFAULT_RSI_PERIOD,
            trend_short: DEFAULT_TREND_SHORT,
            trend_long: DEFAULT_TREND_LONG,
            mean_reversion_window: DEFAULT_STAT_WINDOW,
            volatility_window: DEFAULT_STAT_WINDOW,
            volume_window: DEFAULT_STAT_WINDOW,
            levels_window: DEFAULT_STAT_WINDOW,
        }
    }
}

/// The six prompt fields; each is absent when history is too short and then
/// renders as an "insufficient history" fragment instead of failing the day.
#[derive(Debug, Clone, PartialEq)]
pub struct TechnicalSummary {
    pub trend: Option<TrendReading>,
    pub mean_reversion_z: Option<f64>,
    pub rsi: Option<f64>,
    pub volatility: Option<f64>,
    pub volume_ratio: Option<f64>,
    pub price_levels: Option<(Decimal, Decimal)>,
}

const NO_HISTORY: &str = "insufficient history";

impl TechnicalSummary {
    pub fn render_trend(&self) -> String {
        match &self.trend {
            Some(t) => format!(
                "{} (short SMA {:.2} vs long SMA {:.2})",
                t.label.as_str(),
                t.short_sma,
                t.long_sma
            ),
            None => NO_HISTORY.to_string(),
        }
    }

    pub fn render_mean_reversion(&self) -> String {
        match self.mean_reversion_z {
            Some(z) => format!("z-score {:.2} relative to the rolling mean", z),
            None => NO_HISTORY.to_string(),
        }
    }

    pub fn render_rsi(&self) -> String {
        match self.rsi {
            Some(r) => format!("{:.1}", r),
            None => NO_HISTORY.to_string(),
        }
    }

    pub fn render_volatility(&self) -> String {
        match self.volatility {
            Some(v) => format!("{:.2}% annualized", v * 100.0),
            None => NO_HISTORY.to_string(),
        }
    }

    pub fn render_volume(&self) -> String {
        match self.volume_ratio {
            Some(r) => format!("latest volume {:.2}x the rolling average", r),
            None => NO_HISTORY.to_string(),
        }
    }

    pub fn render_price_levels(&self) -> String {
        match &self.price_levels {
            Some((support, resistance)) => {
                format!("support {:.2}, resistance {:.2}", support, resistance)
            }
            None => NO_HISTORY.to_string(),
        }
    }
}

fn need(have: usize, need: usize) -> Result<(), IndicatorError> {
    if have < need {
        Err(IndicatorError::InsufficientHistory { need, have })
    } else {
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n-1) standard deviation.
fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Wilder RSI over `period`: seed averages are simple means of the first
/// `period` gains/losses, then smoothed as avg = (avg*(period-1) + x)/period.
/// All-gain history returns 100, all-loss returns 0.
pub fn compute_rsi(closes: &[f64], period: usize) -> Result<f64, IndicatorError> {
    need(closes.len(), period + 1)?;
    let changes: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    let gain = |c: &f64| c.max(0.0);
    let loss = |c: &f64| (-c).max(0.0);

    let mut avg_gain = changes[..period].iter().map(gain).sum::<f64>() / period as f64;
    let mut avg_loss = changes[..period].iter().map(loss).sum::<f64>() / period as f64;
    for c in &changes[period..] {
        avg_gain = (avg_gain * (period - 1) as f64 + gain(c)) / period as f64;
        avg_loss = (avg_loss * (period - 1) as f64 + loss(c)) / period as f64;
    }

    if avg_loss == 0.0 {
        return Ok(100.0);
    }
    if avg_gain == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 - 100.0 / (1.0 + avg_gain / avg_loss))
}

/// SMA-crossover trend label with a relative epsilon band around equality.
pub fn compute_trend(
    closes: &[f64],
    short_window: usize,
    long_window: usize,
) -> Result<TrendReading, IndicatorError> {
    assert!(short_window < long_window, "short window must be < long window");
    need(closes.len(), long_window)?;
    let sma = |w: usize| mean(&closes[closes.len() - w..]);
    let short_sma = sma(short_window);
    let long_sma = sma(long_window);
    let label = if short_sma > long_sma * (1.0 + TREND_EPSILON) {
        TrendLabel::Uptrend
    } else if short_sma < long_sma * (1.0 - TREND_EPSILON) {
        TrendLabel::Downtrend
    } else {
        TrendLabel::Flat
    };
    Ok(TrendReading {
        label,
        short_sma,
        long_sma,
    })
}

/// Z-score of the last close against the rolling mean/std of the final
/// `window` closes. A zero-variance window yields 0 by convention.
pub fn compute_mean_reversion(closes: &[f64], window: usize) -> Result<f64, IndicatorError> {
    assert!(window >= 2, "mean reversion window must be >= 2");
    need(closes.len(), window)?;
    let tail = &closes[closes.len() - window..];
    let m = mean(tail);
    let sd = sample_std(tail);
    if sd == 0.0 {
        return Ok(0.0);
    }
    Ok((closes[closes.len() - 1] - m) / sd)
}

/// Annualized close-to-close volatility: sample std of the final `window` log
/// returns scaled by sqrt(252).
pub fn compute_volatility(closes: &[f64], window: usize) -> Result<f64, IndicatorError> {
    assert!(window >= 2, "volatility window must be >= 2");
    need(closes.len(), window + 1)?;
    let tail = &closes[closes.len() - (window + 1)..];
    let log_returns: Vec<f64> = tail.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(sample_std(&log_returns) * TRADING_DAYS_PER_YEAR.sqrt())
}

/// Latest volume over the mean of the `window` volumes preceding it; the
/// window excludes the latest bar so a spike reads above 1.
pub fn compute_volume_ratio(volumes: &[u64], window: usize) -> Result<f64, IndicatorError> {
    assert!(window >= 1, "volume window must be >= 1");
    need(volumes.len(), window + 1)?;
    let latest = volumes[volumes.len() - 1] as f64;
    let prior = &volumes[volumes.len() - 1 - window..volumes.len() - 1];
    let avg = prior.iter().map(|&v| v as f64).sum::<f64>() / window as f64;
    if avg == 0.0 {
        return Err(IndicatorError::ZeroAverageVolume);
    }
    Ok(latest / avg)
}

/// Rolling extrema over the final `window` bars: (min low, max high).
pub fn compute_price_levels(
    bars: &[OHLCVBar],
    window: usize,
) -> Result<(Decimal, Decimal), IndicatorError> {
    assert!(window >= 1, "levels window must be >= 1");
    need(bars.len(), window)?;
    let tail = &bars[bars.len() - window..];
    let support = tail.iter().map(|b| b.low).min().expect("non-empty window");
    let resistance = tail.iter().map(|b| b.high).max().expect("non-empty window");
    Ok((support, resistance))
}

/// Assembles all six fields; sub-computations without enough history are
/// simply absent and render as "insufficient history".
pub fn summarize(bars: &[OHLCVBar], params: &IndicatorParams) -> TechnicalSummary {
    let closes: Vec<f64> = bars.iter().map(|b| b.close_f64()).collect();
    let volumes: Vec<u64> = bars.iter().map(|b| b.volume).collect();
    TechnicalSummary {
        trend: compute_trend(&closes, params.trend_short, params.trend_long).ok(),
        mean_reversion_z: compute_mean_reversion(&closes, params.mean_reversion_window).ok(),
        rsi: compute_rsi(&closes, params.rsi_period).ok(),
        volatility: compute_volatility(&closes, params.volatility_window).ok(),
        volume_ratio: compute_volume_ratio(&volumes, params.volume_window).ok(),
        price_levels: compute_price_levels(bars, params.levels_window).ok(),
    }
}
