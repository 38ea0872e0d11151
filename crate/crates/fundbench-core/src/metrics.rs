//! Performance metrics and behavioral analyses over ledger data: cumulative
//! return, buy-and-hold baseline, Sharpe ratio, maximum drawdown, win rate,
//! beta and alpha, validity rates, signal-to-decision consistency, decision
//! effectiveness, and signal/action distributions. Everything here is a pure
//! function over loaded ledger entries.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;

use crate::domain::{
    AnalystKind, Decision, DecisionAction, Portfolio, Signal, SignalDirection, Ticker, TradeRecord,
};
use crate::ledger::{LedgerEntry, LedgerEntryKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("insufficient data: need {need} points, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("excess returns have zero variance")]
    ZeroVariance,
    #[error("market returns have zero variance")]
    ZeroMarketVariance,
    #[error("series share fewer than 3 aligned dates")]
    MisalignedSeries,
    #[error("no price for held ticker {0}")]
    MissingPrice(Ticker),
    #[error("no next-day price for {ticker} after {date}")]
    MissingNextPrice { ticker: Ticker, date: NaiveDate },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

/// Daily portfolio totals in date order; all values positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    points: Vec<(NaiveDate, Decimal)>,
}

impl ReturnSeries {
    pub fn new(points: Vec<(NaiveDate, Decimal)>) -> Result<Self, MetricsError> {
        if points.is_empty() {
            return Err(MetricsError::InsufficientData { need: 1, have: 0 });
        }
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(MetricsError::InvalidSeries(format!(
                    "dates not strictly ascending at {}",
                    pair[1].0
                )));
            }
        }
        if let Some((date, v)) = points.iter().find(|(_, v)| *v <= Decimal::ZERO) {
            return Err(MetricsError::InvalidSeries(format!(
                "non-positive value {v} at {date}"
            )));
        }
        Ok(ReturnSeries { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(NaiveDate, Decimal)] {
        &self.points
    }

    pub fn first_value(&self) -> Decimal {
        self.points[0].1
    }

    pub fn last_value(&self) -> Decimal {
        self.points[self.points.len() - 1].1
    }

    /// Daily simple returns P_t / P_{t-1} - 1 as f64.
    pub fn simple_returns(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| value_f64(w[1].1) / value_f64(w[0].1) - 1.0)
            .collect()
    }
}

fn value_f64(v: Decimal) -> f64 {
    v.to_f64().expect("portfolio value fits in f64")
}

/// Risk-free and annualization conventions. The default risk-free rate is the
/// 1-month Treasury yield snapshot used throughout (4.29%).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricParams {
    pub risk_free_annual: f64,
    pub periods_per_year: u32,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams { risk_free_annual: 0.0429, periods_per_year: 252 }
    }
}

fn pct_change(initial: Decimal, fin: Decimal) -> Decimal {
    (fin / initial - Decimal::ONE) * Decimal::from(100)
}

/// (P_final / P_initial - 1) * 100, exact in decimal arithmetic.
pub fn cumulative_return(series: &ReturnSeries) -> Decimal {
    pct_change(series.first_value(), series.last_value())
}

/// Revalues the frozen day-one portfolio at final prices:
/// CR of (cash + shares at day-one prices) -> (cash + shares at final prices).
pub fn buy_and_hold_return(
    day1_portfolio: &Portfolio,
    day1_prices: &BTreeMap<Ticker, Decimal>,
    final_prices: &BTreeMap<Ticker, Decimal>,
) -> Result<Decimal, MetricsError> {
    let value_at = |prices: &BTreeMap<Ticker, Decimal>| -> Result<Decimal, MetricsError> {
        let mut total = day1_portfolio.cash;
        for p in day1_portfolio.positions.values() {
            let price = prices
                .get(&p.ticker)
                .ok_or_else(|| MetricsError::MissingPrice(p.ticker.clone()))?;
            total += Decimal::from(p.shares) * price;
        }
        Ok(total)
    };
    Ok(pct_change(value_at(day1_prices)?, value_at(final_prices)?))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n-1) standard deviation.
fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// mean(excess) / std(excess) * sqrt(periods per year), with daily excess
/// return r_t - rf_annual/periods.
pub fn sharpe_ratio(series: &ReturnSeries, params: &MetricParams) -> Result<f64, MetricsError> {
    if series.len() < 3 {
        return Err(MetricsError::InsufficientData { need: 3, have: series.len() });
    }
    let rf_daily = params.risk_free_annual / params.periods_per_year as f64;
    let excess: Vec<f64> = series.simple_returns().iter().map(|r| r - rf_daily).collect();
    let sd = sample_std(&excess);
    if sd == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(mean(&excess) / sd * (params.periods_per_year as f64).sqrt())
}

/// Largest percentage decline from a running peak, in [0, 100).
pub fn max_drawdown(series: &ReturnSeries) -> f64 {
    let mut peak = f64::MIN;
    let mut worst: f64 = 0.0;
    for &(_, v) in series.points() {
        let v = value_f64(v);
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst * 100.0
}

/// Win rate over executed Buy/Sell trades marked against the next trading
/// day's close, excluding final-day trades. Returns None when no trade
/// qualifies.
pub fn win_rate(
    trades: &[TradeRecord],
    next_day_prices: &BTreeMap<(NaiveDate, Ticker), Decimal>,
    final_date: NaiveDate,
) -> Result<Option<f64>, MetricsError> {
    let mut wins = 0u64;
    let mut total = 0u64;
    for trade in trades {
        if trade.executed_shares == 0 || trade.action == DecisionAction::Hold {
            continue;
        }
        if trade.date >= final_date {
            continue;
        }
        let next = next_day_prices
            .get(&(trade.date, trade.ticker.clone()))
            .ok_or_else(|| MetricsError::MissingNextPrice {
                ticker: trade.ticker.clone(),
                date: trade.date,
            })?;
        let won = match trade.action {
            DecisionAction::Buy => *next > trade.price,
            DecisionAction::Sell => *next < trade.price,
            DecisionAction::Hold => unreachable!("holds filtered above"),
        };
        total += 1;
        if won {
            wins += 1;
        }
    }
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(wins as f64 / total as f64 * 100.0))
}

fn aligned_returns(
    series: &ReturnSeries,
    market: &ReturnSeries,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let market_by_date: BTreeMap<NaiveDate, Decimal> = market.points().iter().copied().collect();
    let mut s_vals = Vec::new();
    let mut m_vals = Vec::new();
    for &(date, v) in series.points() {
        if let Some(&m) = market_by_date.get(&date) {
            s_vals.push(value_f64(v));
            m_vals.push(value_f64(m));
        }
    }
    if s_vals.len() < 3 {
        return Err(MetricsError::MisalignedSeries);
    }
    let rets = |vals: &[f64]| -> Vec<f64> {
        vals.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    };
    Ok((rets(&s_vals), rets(&m_vals)))
}

fn sample_cov(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Cov(r_s, r_m) / Var(r_m) over date-aligned daily returns, sample
/// normalization on both sides.
pub fn beta(series: &ReturnSeries, market: &ReturnSeries) -> Result<f64, MetricsError> {
    let (rs, rm) = aligned_returns(series, market)?;
    let var_m = sample_cov(&rm, &rm);
    if var_m == 0.0 {
        return Err(MetricsError::ZeroMarketVariance);
    }
    Ok(sample_cov(&rs, &rm) / var_m)
}

/// r_s - [r_f + beta (r_m - r_f)] with r_s, r_m the cumulative returns over
/// the aligned window and r_f the period-scaled risk-free rate
/// (annual * window_days / periods_per_year).
pub fn alpha(
    series: &ReturnSeries,
    market: &ReturnSeries,
    params: &MetricParams,
) -> Result<f64, MetricsError> {
    let b = beta(series, market)?;
    let market_by_date: BTreeMap<NaiveDate, Decimal> = market.points().iter().copied().collect();
    let aligned: Vec<(f64, f64)> = series
        .points()
        .iter()
        .filter_map(|&(date, v)| market_by_date.get(&date).map(|&m| (value_f64(v), value_f64(m))))
        .collect();
    let window_days = aligned.len() - 1;
    let (s0, m0) = aligned[0];
    let (s1, m1) = aligned[aligned.len() - 1];
    let r_s = s1 / s0 - 1.0;
    let r_m = m1 / m0 - 1.0;
    let r_f = params.risk_free_annual * window_days as f64 / params.periods_per_year as f64;
    Ok(r_s - (r_f + b * (r_m - r_f)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ValidityReport {
    pub signal_count: u64,
    pub valid_signal_count: u64,
    pub decision_count: u64,
    pub valid_decision_count: u64,
}

impl ValidityReport {
    pub fn signal_rate(&self) -> Option<f64> {
        (self.signal_count > 0).then(|| self.valid_signal_count as f64 / self.signal_count as f64)
    }

    pub fn decision_rate(&self) -> Option<f64> {
        (self.decision_count > 0)
            .then(|| self.valid_decision_count as f64 / self.decision_count as f64)
    }
}

/// Fractions of valid signals and decisions, with raw counts.
pub fn validity_rates(entries: &[LedgerEntry]) -> ValidityReport {
    let mut report = ValidityReport::default();
    for entry in entries {
        match &entry.kind {
            LedgerEntryKind::Signal(s) => {
                report.signal_count += 1;
                if s.valid {
                    report.valid_signal_count += 1;
                }
            }
            LedgerEntryKind::Decision(d) => {
                report.decision_count += 1;
                if d.valid {
                    report.valid_decision_count += 1;
                }
            }
            _ => {}
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consistency {
    pub consistent: bool,
    pub reason: String,
}

/// Dominant direction: a strict majority among directional (non-Neutral)
/// valid signals. Buy needs dominant Bullish, Sell dominant Bearish, Hold
/// needs no dominant direction. Invalid signals never count.
pub fn classify_consistency(signals_of_day: &[Signal], decision: &Decision) -> Consistency {
    let mut bullish = 0usize;
    let mut bearish = 0usize;
    let mut neutral = 0usize;
    for s in signals_of_day.iter().filter(|s| s.valid) {
        match s.direction {
            SignalDirection::Bullish => bullish += 1,
            SignalDirection::Bearish => bearish += 1,
            SignalDirection::Neutral => neutral += 1,
        }
    }
    let dominant = if bullish > bearish && bullish >= 1 {
        Some(SignalDirection::Bullish)
    } else if bearish > bullish && bearish >= 1 {
        Some(SignalDirection::Bearish)
    } else {
        None
    };
    let tally = format!("{bullish} bullish / {bearish} bearish / {neutral} neutral");
    let (consistent, why) = match (decision.action, dominant) {
        (DecisionAction::Buy, Some(SignalDirection::Bullish)) => (true, "Buy with dominant Bullish"),
        (DecisionAction::Buy, _) => (false, "Buy without dominant Bullish"),
        (DecisionAction::Sell, Some(SignalDirection::Bearish)) => (true, "Sell with dominant Bearish"),
        (DecisionAction::Sell, _) => (false, "Sell without dominant Bearish"),
        (DecisionAction::Hold, None) => (true, "Hold with no dominant direction"),
        (DecisionAction::Hold, Some(_)) => (false, "Hold against a dominant direction"),
    };
    Consistency { consistent, reason: format!("{why} ({tally})") }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Effectiveness {
    Effective,
    Ineffective,
    NotApplicable,
}

/// Buy is effective when the next close is strictly higher, Sell when
/// strictly lower. Holds, unexecuted decisions, and final-day decisions are
/// not applicable.
pub fn classify_effectiveness(
    decision: &Decision,
    next_price: Option<Decimal>,
    is_final_day: bool,
) -> Result<Effectiveness, MetricsError> {
    if decision.action == DecisionAction::Hold || decision.shares == 0 || is_final_day {
        return Ok(Effectiveness::NotApplicable);
    }
    let next = next_price.ok_or_else(|| MetricsError::MissingNextPrice {
        ticker: decision.ticker.clone(),
        date: decision.date,
    })?;
    let effective = match decision.action {
        DecisionAction::Buy => next > decision.price,
        DecisionAction::Sell => next < decision.price,
        DecisionAction::Hold => unreachable!("holds returned above"),
    };
    Ok(if effective { Effectiveness::Effective } else { Effectiveness::Ineffective })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DirectionHistogram {
    pub bullish: u64,
    pub bearish: u64,
    pub neutral: u64,
    pub invalid: u64,
}

impl DirectionHistogram {
    pub fn total(&self) -> u64 {
        self.bullish + self.bearish + self.neutral + self.invalid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ActionHistogram {
    pub buy: u64,
    pub sell: u64,
    pub hold: u64,
    pub invalid: u64,
}

impl ActionHistogram {
    pub fn total(&self) -> u64 {
        self.buy + self.sell + self.hold + self.invalid
    }
}

/// Signal directions per analyst and decision actions per ticker. Invalid
/// records count in their own bucket so totals conserve record counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Distributions {
    pub signals_by_analyst: BTreeMap<AnalystKind, DirectionHistogram>,
    pub actions_by_ticker: BTreeMap<Ticker, ActionHistogram>,
}

pub fn distributions(entries: &[LedgerEntry]) -> Distributions {
    let mut out = Distributions::default();
    for entry in entries {
        match &entry.kind {
            LedgerEntryKind::Signal(s) => {
                let hist = out.signals_by_analyst.entry(s.analyst).or_default();
                if !s.valid {
                    hist.invalid += 1;
                } else {
                    match s.direction {
                        SignalDirection::Bullish => hist.bullish += 1,
                        SignalDirection::Bearish => hist.bearish += 1,
                        SignalDirection::Neutral => hist.neutral += 1,
                    }
                }
            }
            LedgerEntryKind::Decision(d) => {
                let hist = out.actions_by_ticker.entry(d.ticker.clone()).or_default();
                if !d.valid {
                    hist.invalid += 1;
                } else {
                    match d.action {
                        DecisionAction::Buy => hist.buy += 1,
                        DecisionAction::Sell => hist.sell += 1,
                        DecisionAction::Hold => hist.hold += 1,
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Per-ticker close prices recorded by the daily decision records. Every
/// ticker gets a decision every trading day, so this doubles as the price
/// table for valuation-adjacent analyses.
pub fn decision_price_table(entries: &[LedgerEntry]) -> BTreeMap<(NaiveDate, Ticker), Decimal> {
    let mut table = BTreeMap::new();
    for entry in entries {
        if let LedgerEntryKind::Decision(d) = &entry.kind {
            table.insert((d.date, d.ticker.clone()), d.price);
        }
    }
    table
}

/// Maps (date, ticker) to that ticker's price on the NEXT trading day.
pub fn next_day_price_table(
    entries: &[LedgerEntry],
) -> BTreeMap<(NaiveDate, Ticker), Decimal> {
    let prices = decision_price_table(entries);
    let mut dates: Vec<NaiveDate> = prices.keys().map(|(d, _)| *d).collect();
    dates.sort();
    dates.dedup();
    // prev_of[d] is the trading day immediately before d.
    let prev_of: BTreeMap<NaiveDate, NaiveDate> =
        dates.windows(2).map(|w| (w[1], w[0])).collect();
    let mut table = BTreeMap::new();
    for ((date, ticker), price) in &prices {
        if let Some(&prev) = prev_of.get(date) {
            table.insert((prev, ticker.clone()), *price);
        }
    }
    table
}

/// The full per-run metric and behavioral report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub run_id: String,
    pub model: String,
    pub cr_pct: Decimal,
    pub cr_bnh_pct: Option<Decimal>,
    pub sr: Option<f64>,
    pub mdd_pct: f64,
    pub wr_pct: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub signal_validity: Option<f64>,
    pub decision_validity: Option<f64>,
    pub days: usize,
    pub validity: ValidityReport,
    pub distributions: Distributions,
}

/// Builds a [`ReturnSeries`] from daily bars (date, close), for benchmark
/// fixtures.
pub fn series_from_bars(
    bars: &[crate::market::OHLCVBar],
) -> Result<ReturnSeries, MetricsError> {
    ReturnSeries::new(bars.iter().map(|b| (b.date, b.close)).collect())
}

/// Assembles every metric this module defines from one run's ledger entries.
/// Metrics whose preconditions fail (zero variance, too few points, missing
/// benchmark) report as absent rather than failing the whole report.
pub fn compute_report(
    run_id: &str,
    model: &str,
    entries: &[LedgerEntry],
    benchmark: Option<&ReturnSeries>,
    params: &MetricParams,
) -> Result<MetricReport, MetricsError> {
    let value_points: Vec<(NaiveDate, Decimal)> = {
        let mut by_date: BTreeMap<NaiveDate, Decimal> = BTreeMap::new();
        for entry in entries {
            if let LedgerEntryKind::Snapshot { total_value, .. } = &entry.kind {
                by_date.insert(entry.date, *total_value);
            }
        }
        by_date.into_iter().collect()
    };
    let series = ReturnSeries::new(value_points)?;
    let final_date = series.points().last().expect("non-empty series").0;

    let cr_pct = cumulative_return(&series);

    let prices = decision_price_table(entries);
    let price_map_at = |date: NaiveDate| -> BTreeMap<Ticker, Decimal> {
        prices
            .iter()
            .filter(|((d, _), _)| *d == date)
            .map(|((_, t), p)| (t.clone(), *p))
            .collect()
    };
    let day1 = entries.iter().find_map(|e| match &e.kind {
        LedgerEntryKind::Snapshot { portfolio, .. } => Some((portfolio.clone(), e.date)),
        _ => None,
    });
    let cr_bnh_pct = day1.and_then(|(portfolio, day1_date)| {
        match buy_and_hold_return(&portfolio, &price_map_at(day1_date), &price_map_at(final_date))
        {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("run {run_id}: buy-and-hold baseline unavailable: {e}");
                None
            }
        }
    });

    let sr = match sharpe_ratio(&series, params) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("run {run_id}: sharpe ratio unavailable: {e}");
            None
        }
    };
    let mdd_pct = max_drawdown(&series);

    let trades: Vec<TradeRecord> = entries
        .iter()
        .filter_map(|e| match &e.kind {
            LedgerEntryKind::Trade(t) => Some(t.clone()),
            _ => None,
        })
        .collect();
    let wr_pct = win_rate(&trades, &next_day_price_table(entries), final_date)?;

    let (beta_v, alpha_v) = match benchmark {
        None => (None, None),
        Some(market) => {
            let b = match beta(&series, market) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("run {run_id}: beta unavailable: {e}");
                    None
                }
            };
            let a = match alpha(&series, market, params) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("run {run_id}: alpha unavailable: {e}");
                    None
                }
            };
            (b, a)
        }
    };

    let validity = validity_rates(entries);
    Ok(MetricReport {
        run_id: run_id.to_string(),
        model: model.to_string(),
        cr_pct,
        cr_bnh_pct,
        sr,
        mdd_pct,
        wr_pct,
        beta: beta_v,
        alpha: alpha_v,
        signal_validity: validity.signal_rate(),
        decision_validity: validity.decision_rate(),
        days: series.len(),
        validity,
        distributions: distributions(entries),
    })
}
