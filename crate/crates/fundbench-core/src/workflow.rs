//! The orchestrator-worker engine: plans analysts for the day, fans analyst
//! calls out (optionally in parallel), aggregates signals, computes the
//! risk-controlled tradable-share capacity, obtains the manager decision,
//! executes it against the portfolio, and advances the fund state day by day,
//! appending everything to the run ledger in canonical order.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::domain::{
    push_decision_memory, AnalystKind, Decision, DecisionAction, FundState, Portfolio, Position,
    Signal, Ticker, TradeRecord, DEFAULT_DECISION_MEMORY_SIZE,
};
use crate::ledger::{self, LedgerEntryKind, LedgerError, LedgerStore, RunWriter};
use crate::llm::{
    render_analyst_prompt, render_manager_prompt, render_planner_prompt, AgentRole,
    AnalystPayload, CallContext, ChatExchange, LlmGateway, ModelProfile,
};
use crate::market::{ClockMode, MarketError, MarketGateway, SimulationClock};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("infeasible execution: {0}")]
    InfeasibleExecution(String),
}

/// Risk-control knobs for the tradable-share computation: an equal-weight
/// base tilted by net signal sentiment, clamped to a maximum weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskParams {
    #[serde(default = "default_tilt")]
    pub tilt_factor: Decimal,
    #[serde(default = "default_max_weight")]
    pub max_weight: Decimal,
}

fn default_tilt() -> Decimal {
    Decimal::new(5, 1) // 0.5
}

fn default_max_weight() -> Decimal {
    Decimal::new(30, 2) // 0.30
}

impl Default for RiskParams {
    fn default() -> Self {
        RiskParams { tilt_factor: default_tilt(), max_weight: default_max_weight() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Deterministic,
    Dynamic,
}

/// Upstream data windows/counts (daily bars for the technical window, item
/// counts for news/insider/macro).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataParams {
    #[serde(default = "default_technical_window")]
    pub technical_window: usize,
    #[serde(default = "default_item_count")]
    pub news_count: usize,
    #[serde(default = "default_item_count")]
    pub insider_count: usize,
    #[serde(default = "default_item_count")]
    pub macro_count: usize,
}

fn default_technical_window() -> usize {
    100
}

fn default_item_count() -> usize {
    10
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            technical_window: default_technical_window(),
            news_count: default_item_count(),
            insider_count: default_item_count(),
            macro_count: default_item_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub universe: Vec<Ticker>,
    pub initial_cash: Decimal,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub planner_mode: PlannerMode,
    pub analyst_set: Vec<AnalystKind>,
    pub model_profile: ModelProfile,
    pub decision_memory_size: usize,
    pub risk: RiskParams,
    pub data: DataParams,
    pub parallel_analysts: bool,
}

impl RunConfig {
    /// A replay-oriented config with the engine defaults ($100k cash, memory
    /// size 5, deterministic planner).
    pub fn new(
        run_id: impl Into<String>,
        universe: Vec<Ticker>,
        start_date: NaiveDate,
        end_date: NaiveDate,
        analyst_set: Vec<AnalystKind>,
        model_profile: ModelProfile,
    ) -> Self {
        RunConfig {
            run_id: run_id.into(),
            universe,
            initial_cash: Decimal::from(100_000),
            start_date,
            end_date,
            planner_mode: PlannerMode::Deterministic,
            analyst_set,
            model_profile,
            decision_memory_size: DEFAULT_DECISION_MEMORY_SIZE,
            risk: RiskParams::default(),
            data: DataParams::default(),
            parallel_analysts: true,
        }
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let fail = |msg: &str| Err(WorkflowError::InvalidConfig(msg.to_string()));
        if self.run_id.trim().is_empty() {
            return fail("run_id must be non-empty");
        }
        if self.universe.is_empty() {
            return fail("universe must be non-empty");
        }
        let mut seen = self.universe.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.universe.len() {
            return fail("universe contains duplicate tickers");
        }
        if self.initial_cash <= Decimal::ZERO {
            return fail("initial_cash must be positive");
        }
        if self.start_date > self.end_date {
            return fail("start_date must not be after end_date");
        }
        if self.analyst_set.is_empty() {
            return fail("analyst_set must be non-empty");
        }
        if self.decision_memory_size == 0 {
            return fail("decision_memory_size must be >= 1");
        }
        Ok(())
    }
}

/// Counts and accounting returned by [`run_period`]. Validity tallies cover
/// the whole ledger (including any resumed prefix); token and cost totals
/// cover only the completions made by this invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub model_id: String,
    pub days: usize,
    pub signal_count: u64,
    pub valid_signal_count: u64,
    pub decision_count: u64,
    pub valid_decision_count: u64,
    pub final_value: Option<Decimal>,
    pub final_cash: Option<Decimal>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_estimate: Decimal,
}

/// Session-scoped token and cost accumulator.
#[derive(Debug, Default)]
pub struct Accounting {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Decimal,
}

impl Accounting {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn absorb(&mut self, exchange: &ChatExchange) {
        self.prompt_tokens += exchange.token_usage.prompt_tokens;
        self.completion_tokens += exchange.token_usage.completion_tokens;
        self.cost += exchange.cost_estimate;
    }
}

/// Selects the analysts for the day. Deterministic mode returns the
/// configured list verbatim; dynamic mode asks the model and falls back to
/// the configured list on any planner failure.
pub fn plan_analysts(
    config: &RunConfig,
    state: &FundState,
    llm: &LlmGateway,
    accounting: &mut Accounting,
) -> Vec<AnalystKind> {
    match config.planner_mode {
        PlannerMode::Deterministic => config.analyst_set.clone(),
        PlannerMode::Dynamic => {
            let (system, user) =
                render_planner_prompt(&config.universe, &state.portfolio, &config.analyst_set);
            let ctx = CallContext {
                role: AgentRole::Planner,
                ticker: None,
                date: state.trading_date,
            };
            match llm.complete(&ctx, &system, &user) {
                Ok(exchange) => {
                    accounting.absorb(&exchange);
                    let text = exchange.response_text.as_deref().unwrap_or_default();
                    match crate::llm::parse_planner_response(text, &config.analyst_set) {
                        Ok(selected) => selected,
                        Err(e) => {
                            log::warn!(
                                "{}: planner response unusable ({e}); using configured list",
                                state.trading_date
                            );
                            config.analyst_set.clone()
                        }
                    }
                }
                Err(e) => {
                    log::warn!(
                        "{}: planner unavailable ({e}); using configured list",
                        state.trading_date
                    );
                    config.analyst_set.clone()
                }
            }
        }
    }
}

fn fetch_payload(
    kind: AnalystKind,
    ticker: &Ticker,
    clock: &SimulationClock,
    gateway: &MarketGateway,
    data: &DataParams,
) -> Result<AnalystPayload, MarketError> {
    Ok(match kind {
        AnalystKind::Technical => {
            let bars = gateway.fetch_ohlcv(ticker, data.technical_window, clock)?;
            let summary = crate::indicators::summarize(&bars, &Default::default());
            AnalystPayload::Technical(summary)
        }
        AnalystKind::CompanyNews => {
            AnalystPayload::CompanyNews(gateway.fetch_company_news(ticker, data.news_count, clock)?)
        }
        AnalystKind::Policy => {
            AnalystPayload::Policy(gateway.fetch_policy_news(data.news_count, clock)?)
        }
        AnalystKind::Insider => {
            AnalystPayload::Insider(gateway.fetch_insider(ticker, data.insider_count, clock)?)
        }
        AnalystKind::Fundamental => {
            AnalystPayload::Fundamentals(gateway.fetch_fundamentals(ticker, clock)?)
        }
        AnalystKind::MacroEconomic => {
            AnalystPayload::Macro(gateway.fetch_macro(data.macro_count, clock)?)
        }
    })
}

/// Runs one analyst for one ticker: fetch data, render, complete, parse. LLM
/// failures and malformed responses degrade to the invalid-signal fallback;
/// market errors (leakage above all) propagate as fatal.
pub fn run_analyst(
    kind: AnalystKind,
    ticker: &Ticker,
    clock: &SimulationClock,
    gateway: &MarketGateway,
    llm: &LlmGateway,
    data: &DataParams,
) -> Result<(Signal, Option<ChatExchange>), MarketError> {
    let date = clock.current_date();
    let payload = fetch_payload(kind, ticker, clock, gateway, data)?;
    let (system, user) =
        render_analyst_prompt(kind, ticker, date, &payload).expect("payload matches kind");
    let ctx = CallContext {
        role: AgentRole::Analyst(kind),
        ticker: Some(ticker.clone()),
        date,
    };
    match llm.complete(&ctx, &system, &user) {
        Ok(exchange) => {
            let text = exchange.response_text.as_deref().unwrap_or_default();
            match crate::llm::parse_signal_response(text) {
                Ok((direction, justification)) => {
                    let signal =
                        Signal::valid(kind, ticker.clone(), date, direction, justification)
                            .expect("parser enforces non-empty justification");
                    Ok((signal, Some(exchange)))
                }
                Err(e) => {
                    log::warn!("{date} {ticker} {kind}: {e}; recording invalid signal");
                    Ok((Signal::invalid(kind, ticker.clone(), date), Some(exchange)))
                }
            }
        }
        Err(e) => {
            log::warn!("{date} {ticker} {kind}: {e}; recording invalid signal");
            Ok((Signal::invalid(kind, ticker.clone(), date), None))
        }
    }
}

/// Signed share capacity toward the risk target:
/// base weight 1/universe, tilted by net valid-signal sentiment
/// (tilt_factor * (bullish - bearish) / max(1, valid)), clamped to
/// [0, max_weight]; tradable = floor((target_value - position_value)/price).
pub fn compute_tradable_shares(
    portfolio: &Portfolio,
    ticker: &Ticker,
    prices: &BTreeMap<Ticker, Decimal>,
    signals: &[Signal],
    risk: &RiskParams,
    universe_size: usize,
) -> Result<i64, WorkflowError> {
    assert!(universe_size >= 1, "universe must be non-empty");
    let price = *prices.get(ticker).ok_or_else(|| {
        WorkflowError::Market(MarketError::NoPriceAvailable(ticker.clone()))
    })?;
    let total = ledger::portfolio_value(portfolio, prices)?;

    let valid: Vec<&Signal> = signals.iter().filter(|s| s.valid).collect();
    let bullish = valid.iter().filter(|s| s.direction == crate::domain::SignalDirection::Bullish).count() as i64;
    let bearish = valid.iter().filter(|s| s.direction == crate::domain::SignalDirection::Bearish).count() as i64;
    let denominator = Decimal::from(valid.len().max(1) as u64);
    let tilt = risk.tilt_factor * Decimal::from(bullish - bearish) / denominator;

    let base = Decimal::ONE / Decimal::from(universe_size as u64);
    let target_weight = (base * (Decimal::ONE + tilt))
        .max(Decimal::ZERO)
        .min(risk.max_weight);

    let position_value = Decimal::from(portfolio.shares_held(ticker)) * price;
    let tradable = ((target_weight * total - position_value) / price).floor();
    Ok(tradable.to_i64().expect("tradable share count fits in i64"))
}

/// Outcome metadata from [`decide`], for the trade record and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct DecideMeta {
    pub requested_shares: u32,
    pub clamped: bool,
    pub exchange: Option<ChatExchange>,
}

/// Obtains the manager decision for one ticker. Parsed shares are clamped to
/// execution feasibility (Buy: tradable capacity and cash; Sell: holdings);
/// a Buy/Sell clamped to zero becomes a Hold. The engine's price of the day
/// always wins over the model's echoed price. Any LLM or parse failure yields
/// the invalid-decision fallback.
pub fn decide(
    ticker: &Ticker,
    state: &FundState,
    price: Decimal,
    tradable: i64,
    llm: &LlmGateway,
) -> (Decision, DecideMeta) {
    let date = state.trading_date;
    let holding = state.portfolio.shares_held(ticker);
    let empty = Vec::new();
    let signals = state.signals_today.get(ticker).unwrap_or(&empty);
    let (system, user) = render_manager_prompt(
        ticker,
        state.memory_for(ticker),
        price,
        holding,
        tradable,
        signals,
    );
    let ctx = CallContext {
        role: AgentRole::Manager,
        ticker: Some(ticker.clone()),
        date,
    };
    let fallback = |exchange: Option<ChatExchange>| {
        (
            Decision::invalid(ticker.clone(), date, price),
            DecideMeta { requested_shares: 0, clamped: false, exchange },
        )
    };
    let exchange = match llm.complete(&ctx, &system, &user) {
        Ok(exchange) => exchange,
        Err(e) => {
            log::warn!("{date} {ticker} manager: {e}; holding");
            return fallback(None);
        }
    };
    let text = exchange.response_text.clone().unwrap_or_default();
    let parsed = match crate::llm::parse_decision_response(&text) {
        Ok(parsed) => parsed,
        Err(e) => {
            log::warn!("{date} {ticker} manager: {e}; holding");
            return fallback(Some(exchange));
        }
    };
    if parsed.hold_shares_normalized {
        log::warn!("{date} {ticker}: hold decision carried nonzero shares; normalized to 0");
    }
    if parsed.price != price {
        log::debug!(
            "{date} {ticker}: model echoed price {} but the engine price is {price}; using engine price",
            parsed.price
        );
    }

    let requested = parsed.shares;
    let feasible = match parsed.action {
        DecisionAction::Buy => {
            let capacity = tradable.max(0) as u64;
            let affordable = (state.portfolio.cash / price)
                .floor()
                .to_u64()
                .unwrap_or(0);
            (requested as u64).min(capacity).min(affordable) as u32
        }
        DecisionAction::Sell => requested.min(holding),
        DecisionAction::Hold => 0,
    };
    let clamped = feasible != requested && parsed.action != DecisionAction::Hold;
    if clamped {
        log::warn!(
            "{date} {ticker}: {} {requested} clamped to {feasible}",
            parsed.action
        );
    }
    let action = if feasible == 0 && parsed.action != DecisionAction::Hold {
        DecisionAction::Hold
    } else {
        parsed.action
    };
    let decision = Decision::valid(
        ticker.clone(),
        date,
        action,
        if action == DecisionAction::Hold { 0 } else { feasible },
        price,
        parsed.justification,
    )
    .expect("clamped decision satisfies invariants");
    (
        decision,
        DecideMeta { requested_shares: requested, clamped, exchange: Some(exchange) },
    )
}

/// Applies one decision to the portfolio. The caller's clamps guarantee
/// feasibility; violations here indicate a bug and error out.
pub fn execute_decision(
    portfolio: &Portfolio,
    decision: &Decision,
    requested_shares: u32,
    run_id: &str,
) -> Result<(Portfolio, TradeRecord), WorkflowError> {
    let mut next = portfolio.clone();
    next.as_of = decision.date;
    let held = portfolio.shares_held(&decision.ticker);
    match decision.action {
        DecisionAction::Buy => {
            let cost = Decimal::from(decision.shares) * decision.price;
            if cost > portfolio.cash {
                return Err(WorkflowError::InfeasibleExecution(format!(
                    "buy {} x {} needs {cost} with cash {}",
                    decision.shares, decision.price, portfolio.cash
                )));
            }
            next.cash -= cost;
            let old_value = Decimal::from(held) * portfolio
                .positions
                .get(&decision.ticker)
                .map_or(Decimal::ZERO, |p| p.cost_basis);
            let new_shares = held + decision.shares;
            let basis = ((old_value + cost) / Decimal::from(new_shares))
                .round_dp_with_strategy(4, RoundingStrategy::MidpointAwayFromZero);
            next.positions.insert(
                decision.ticker.clone(),
                Position { ticker: decision.ticker.clone(), shares: new_shares, cost_basis: basis },
            );
        }
        DecisionAction::Sell => {
            if decision.shares > held {
                return Err(WorkflowError::InfeasibleExecution(format!(
                    "sell {} with only {held} held",
                    decision.shares
                )));
            }
            next.cash += Decimal::from(decision.shares) * decision.price;
            let remaining = held - decision.shares;
            if remaining == 0 {
                next.positions.remove(&decision.ticker);
            } else if let Some(p) = next.positions.get_mut(&decision.ticker) {
                p.shares = remaining;
            }
        }
        DecisionAction::Hold => {}
    }
    let record = TradeRecord {
        run_id: run_id.to_string(),
        date: decision.date,
        ticker: decision.ticker.clone(),
        action: decision.action,
        requested_shares,
        executed_shares: decision.shares,
        price: decision.price,
        cash_after: next.cash,
        shares_after: next.shares_held(&decision.ticker),
        justification: decision.justification.clone(),
    };
    Ok((next, record))
}

struct TickerOutcome {
    signals: Vec<Signal>,
    decision: Decision,
    trade: TradeRecord,
}

/// Runs one trading day: plan once, then per ticker in universe order run the
/// planned analysts (in parallel when configured), record signals, compute
/// tradable capacity, decide, execute, and push decision memory; finally
/// snapshot the portfolio. The day's entries are appended in canonical
/// (ticker, analyst) order so ledger bytes are schedule-independent.
pub fn step_day(
    config: &RunConfig,
    state: FundState,
    clock: &SimulationClock,
    gateway: &MarketGateway,
    llm: &LlmGateway,
    writer: &mut RunWriter,
    accounting: &mut Accounting,
) -> Result<FundState, WorkflowError> {
    let date = clock.current_date();
    let mut prices: BTreeMap<Ticker, Decimal> = BTreeMap::new();
    for ticker in &config.universe {
        prices.insert(ticker.clone(), gateway.fetch_price(ticker, clock)?);
    }

    let mut state = state;
    state.trading_date = date;
    state.signals_today.clear();

    let planned = plan_analysts(config, &state, llm, accounting);

    let mut outcomes: BTreeMap<Ticker, TickerOutcome> = BTreeMap::new();
    for ticker in &config.universe {
        let mut signals: Vec<Signal> = Vec::with_capacity(planned.len());
        if config.parallel_analysts && planned.len() > 1 {
            let results: Vec<Result<(Signal, Option<ChatExchange>), MarketError>> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = planned
                        .iter()
                        .map(|&kind| {
                            let data = &config.data;
                            scope.spawn(move || {
                                run_analyst(kind, ticker, clock, gateway, llm, data)
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("analyst thread")).collect()
                });
            for result in results {
                let (signal, exchange) = result?;
                if let Some(e) = exchange {
                    accounting.absorb(&e);
                }
                signals.push(signal);
            }
        } else {
            for &kind in &planned {
                let (signal, exchange) =
                    run_analyst(kind, ticker, clock, gateway, llm, &config.data)?;
                if let Some(e) = exchange {
                    accounting.absorb(&e);
                }
                signals.push(signal);
            }
        }
        signals.sort_by_key(|s| s.analyst);
        state.signals_today.insert(ticker.clone(), signals.clone());

        let tradable = compute_tradable_shares(
            &state.portfolio,
            ticker,
            &prices,
            &signals,
            &config.risk,
            config.universe.len(),
        )?;
        let price = prices[ticker];
        let (decision, meta) = decide(ticker, &state, price, tradable, llm);
        if let Some(e) = &meta.exchange {
            accounting.absorb(e);
        }
        let (portfolio, trade) =
            execute_decision(&state.portfolio, &decision, meta.requested_shares, &config.run_id)?;
        state.portfolio = portfolio;
        let memory = push_decision_memory(
            state.memory_for(ticker),
            decision.clone(),
            config.decision_memory_size,
        );
        state.decision_memory.insert(ticker.clone(), memory);
        outcomes.insert(ticker.clone(), TickerOutcome { signals, decision, trade });
    }

    // Canonical append order: tickers sorted, signals sorted by analyst,
    // decision then trade per ticker, snapshot last.
    for (_, outcome) in outcomes {
        for signal in outcome.signals {
            writer.append(date, LedgerEntryKind::Signal(signal))?;
        }
        writer.append(date, LedgerEntryKind::Decision(outcome.decision))?;
        writer.append(date, LedgerEntryKind::Trade(outcome.trade))?;
    }
    let total_value = ledger::portfolio_value(&state.portfolio, &prices)?;
    writer.append(
        date,
        LedgerEntryKind::Snapshot { portfolio: state.portfolio.clone(), total_value },
    )?;
    Ok(state)
}

/// Rebuilds the fund state from an existing ledger (last snapshot portfolio
/// plus the most recent decisions per ticker), for resuming a partial run.
fn reconstruct_state(
    config: &RunConfig,
    entries: &[crate::ledger::LedgerEntry],
) -> Option<(FundState, NaiveDate)> {
    let last_snapshot = entries.iter().rev().find_map(|e| match &e.kind {
        LedgerEntryKind::Snapshot { portfolio, .. } => Some((portfolio.clone(), e.date)),
        _ => None,
    })?;
    let (portfolio, last_date) = last_snapshot;
    let mut state = FundState::new(&config.run_id, last_date, Decimal::ZERO);
    state.portfolio = portfolio;
    let mut per_ticker: BTreeMap<Ticker, Vec<Decision>> = BTreeMap::new();
    for entry in entries {
        if let LedgerEntryKind::Decision(d) = &entry.kind {
            per_ticker.entry(d.ticker.clone()).or_default().push(d.clone());
        }
    }
    for (ticker, decisions) in per_ticker {
        let recent: Vec<Decision> = decisions
            .into_iter()
            .rev()
            .take(config.decision_memory_size)
            .collect();
        state.decision_memory.insert(ticker, recent);
    }
    Some((state, last_date))
}

/// Runs the configured period end to end, iterating trading days (dates with
/// a bar for any universe ticker) and stepping the workflow on each. An
/// existing ledger resumes after its last snapshot date.
pub fn run_period(
    config: &RunConfig,
    mode: ClockMode,
    gateway: &MarketGateway,
    llm: &LlmGateway,
    store: &LedgerStore,
) -> Result<RunSummary, WorkflowError> {
    config.validate()?;
    store.ensure_run(&config.run_id, &config.model_profile.model_id)?;

    let existing = store.load_run(&config.run_id)?;
    let (mut state, resume_after) = match reconstruct_state(config, &existing) {
        Some((state, last_date)) => {
            log::info!(
                "run {}: resuming after {last_date} ({} entries)",
                config.run_id,
                existing.len()
            );
            (state, Some(last_date))
        }
        None => (
            FundState::new(&config.run_id, config.start_date, config.initial_cash),
            None,
        ),
    };
    let mut writer = store.open_writer(&config.run_id)?;
    let mut accounting = Accounting::default();

    let first_day = match resume_after {
        Some(last) if last >= config.end_date => None,
        Some(last) => Some(last + chrono::Days::new(1)),
        None => Some(config.start_date),
    };
    if let Some(first_day) = first_day {
        let mut clock = SimulationClock::new(mode, first_day)?;
        let mut day = first_day;
        loop {
            clock.advance_to(day)?;
            if gateway.is_trading_day(&config.universe, &clock)? {
                state = step_day(config, state, &clock, gateway, llm, &mut writer, &mut accounting)?;
            }
            if day >= config.end_date {
                break;
            }
            day = day + chrono::Days::new(1);
        }
    }

    let entries = store.load_run(&config.run_id)?;
    let validity = crate::metrics::validity_rates(&entries);
    let series = ledger::daily_value_series(&config.run_id, &entries).ok();
    let days = series.as_ref().map_or(0, |s| s.len());
    if days == 0 {
        log::warn!(
            "run {}: no trading days between {} and {}",
            config.run_id,
            config.start_date,
            config.end_date
        );
    }
    let final_cash = entries.iter().rev().find_map(|e| match &e.kind {
        LedgerEntryKind::Snapshot { portfolio, .. } => Some(portfolio.cash),
        _ => None,
    });
    Ok(RunSummary {
        run_id: config.run_id.clone(),
        model_id: config.model_profile.model_id.clone(),
        days,
        signal_count: validity.signal_count,
        valid_signal_count: validity.valid_signal_count,
        decision_count: validity.decision_count,
        valid_decision_count: validity.valid_decision_count,
        final_value: series.and_then(|s| s.last().map(|&(_, v)| v)),
        final_cash,
        prompt_tokens: accounting.prompt_tokens,
        completion_tokens: accounting.completion_tokens,
        cost_estimate: accounting.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SignalDirection;
    use crate::llm::ScriptedStub;
    use rust_decimal_macros::dec;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn t(s: &str) -> Ticker {
        Ticker::new(s).unwrap()
    }

    fn stub_gateway(stub: ScriptedStub) -> LlmGateway {
        LlmGateway::new(Box::new(stub), ModelProfile::stub("test-model"))
    }

    fn neutral_signal(ticker: &str) -> Signal {
        Signal::valid(
            AnalystKind::Technical,
            t(ticker),
            d("2025-04-03"),
            SignalDirection::Neutral,
            "flat",
        )
        .unwrap()
    }

    #[test]
    fn tradable_equal_weight_examples() {
        // Empty position, 5-ticker universe, all-Neutral, cash 100000,
        // price 200 -> target 20000 -> 100 shares.
        let portfolio = Portfolio::new(dec!(100000), d("2025-04-03"));
        let prices: BTreeMap<Ticker, Decimal> = [(t("AAPL"), dec!(200))].into();
        let signals = vec![neutral_signal("AAPL")];
        let tradable = compute_tradable_shares(
            &portfolio,
            &t("AAPL"),
            &prices,
            &signals,
            &RiskParams::default(),
            5,
        )
        .unwrap();
        assert_eq!(tradable, 100);

        // Position exactly at equal weight with all-Neutral signals: 0.
        let mut portfolio = Portfolio::new(dec!(80000), d("2025-04-03"));
        portfolio.positions.insert(
            t("AAPL"),
            Position { ticker: t("AAPL"), shares: 100, cost_basis: dec!(200) },
        );
        let tradable = compute_tradable_shares(
            &portfolio,
            &t("AAPL"),
            &prices,
            &signals,
            &RiskParams::default(),
            5,
        )
        .unwrap();
        assert_eq!(tradable, 0);
    }

    #[test]
    fn tradable_reproduces_the_negative_27_rebalance_case() {
        // Holdings 184 at 156.12 with cash 4252.06; single-ticker universe
        // with max weight calibrated so the target is 157 shares.
        let mut portfolio = Portfolio::new(dec!(4252.06), d("2025-04-03"));
        portfolio.positions.insert(
            t("CVX"),
            Position { ticker: t("CVX"), shares: 184, cost_basis: dec!(166.06) },
        );
        let prices: BTreeMap<Ticker, Decimal> = [(t("CVX"), dec!(156.12))].into();
        let risk = RiskParams { tilt_factor: dec!(0.5), max_weight: dec!(0.7433) };
        let tradable = compute_tradable_shares(
            &portfolio,
            &t("CVX"),
            &prices,
            &[neutral_signal("CVX")],
            &risk,
            1,
        )
        .unwrap();
        assert_eq!(tradable, -27);
    }

    #[test]
    fn tilt_moves_target_with_sentiment() {
        let portfolio = Portfolio::new(dec!(100000), d("2025-04-03"));
        let prices: BTreeMap<Ticker, Decimal> = [(t("AAPL"), dec!(200))].into();
        let bullish = vec![
            Signal::valid(AnalystKind::Technical, t("AAPL"), d("2025-04-03"), SignalDirection::Bullish, "up").unwrap(),
            Signal::valid(AnalystKind::Policy, t("AAPL"), d("2025-04-03"), SignalDirection::Bullish, "up").unwrap(),
        ];
        // tilt = 0.5 * 2/2 = 0.5 -> target weight 0.3 (clamped from 0.2*1.5).
        let tradable = compute_tradable_shares(
            &portfolio, &t("AAPL"), &prices, &bullish, &RiskParams::default(), 5,
        )
        .unwrap();
        assert_eq!(tradable, 150);

        // Invalid signals are excluded from the tilt.
        let invalid = vec![Signal::invalid(AnalystKind::Technical, t("AAPL"), d("2025-04-03"))];
        let tradable = compute_tradable_shares(
            &portfolio, &t("AAPL"), &prices, &invalid, &RiskParams::default(), 5,
        )
        .unwrap();
        assert_eq!(tradable, 100);
    }

    fn state_with(cash: Decimal, ticker: &str, shares: u32, basis: Decimal) -> FundState {
        let mut state = FundState::new("r", d("2025-04-03"), cash);
        if shares > 0 {
            state.portfolio.positions.insert(
                t(ticker),
                Position { ticker: t(ticker), shares, cost_basis: basis },
            );
        }
        state
    }

    #[test]
    fn decide_records_scripted_sell() {
        let stub = ScriptedStub::new().respond(
            AgentRole::Manager,
            Some(&t("CVX")),
            d("2025-04-03"),
            r#"{"action":"Sell","shares":27,"price":156.12,"justification":"rebalance"}"#,
        );
        let llm = stub_gateway(stub);
        let state = state_with(dec!(4252.06), "CVX", 184, dec!(166.06));
        let (decision, meta) = decide(&t("CVX"), &state, dec!(156.12), -27, &llm);
        assert_eq!(decision.action, DecisionAction::Sell);
        assert_eq!(decision.shares, 27);
        assert_eq!(decision.price, dec!(156.12));
        assert!(decision.valid);
        assert_eq!(meta.requested_shares, 27);
        assert!(!meta.clamped);
    }

    #[test]
    fn decide_clamps_buy_to_cash_and_capacity() {
        let stub = ScriptedStub::new().respond(
            AgentRole::Manager,
            Some(&t("KO")),
            d("2025-04-03"),
            r#"{"action":"Buy","shares":1000,"price":100,"justification":"all in"}"#,
        );
        let llm = stub_gateway(stub);
        // Cash allows 10 shares; tradable capacity allows 500.
        let state = state_with(dec!(1000), "KO", 0, dec!(0));
        let (decision, meta) = decide(&t("KO"), &state, dec!(100), 500, &llm);
        assert_eq!(decision.action, DecisionAction::Buy);
        assert_eq!(decision.shares, 10);
        assert_eq!(meta.requested_shares, 1000);
        assert!(meta.clamped);
    }

    #[test]
    fn decide_turns_infeasible_trades_into_holds() {
        let stub = ScriptedStub::new().respond(
            AgentRole::Manager,
            Some(&t("KO")),
            d("2025-04-03"),
            r#"{"action":"Sell","shares":10,"price":100,"justification":"exit"}"#,
        );
        let llm = stub_gateway(stub);
        let state = state_with(dec!(1000), "KO", 0, dec!(0)); // nothing held
        let (decision, meta) = decide(&t("KO"), &state, dec!(100), 0, &llm);
        assert_eq!(decision.action, DecisionAction::Hold);
        assert_eq!(decision.shares, 0);
        assert!(decision.valid);
        assert!(meta.clamped);
    }

    #[test]
    fn decide_overrides_model_price_and_absorbs_failure() {
        let stub = ScriptedStub::new().respond(
            AgentRole::Manager,
            Some(&t("KO")),
            d("2025-04-03"),
            r#"{"action":"Buy","shares":1,"price":999.99,"justification":"typo"}"#,
        );
        let llm = stub_gateway(stub);
        let state = state_with(dec!(1000), "KO", 0, dec!(0));
        let (decision, _) = decide(&t("KO"), &state, dec!(100), 5, &llm);
        assert_eq!(decision.price, dec!(100));

        let stub = ScriptedStub::new().fail_then(
            AgentRole::Manager,
            Some(&t("KO")),
            d("2025-04-03"),
            u32::MAX,
            None,
        );
        let llm = stub_gateway(stub);
        let (decision, meta) = decide(&t("KO"), &state, dec!(100), 5, &llm);
        assert!(!decision.valid);
        assert_eq!(decision.action, DecisionAction::Hold);
        assert_eq!(decision.justification, "Just hold due to error");
        assert!(meta.exchange.is_none());
    }

    #[test]
    fn execute_buy_sell_hold_arithmetic() {
        let run = "r";
        let portfolio = Portfolio::new(dec!(100000), d("2025-03-17"));
        let buy = Decision::valid(t("KO"), d("2025-03-17"), DecisionAction::Buy, 10, dec!(150), "b").unwrap();
        let (p1, rec) = execute_decision(&portfolio, &buy, 10, run).unwrap();
        assert_eq!(p1.cash, dec!(98500));
        assert_eq!(p1.shares_held(&t("KO")), 10);
        assert_eq!(p1.positions[&t("KO")].cost_basis, dec!(150));
        assert_eq!(rec.cash_after, dec!(98500));
        assert_eq!(rec.shares_after, 10);

        // Volume-weighted basis: 10 @ 150 + 10 @ 160 -> 155.
        let buy2 = Decision::valid(t("KO"), d("2025-03-18"), DecisionAction::Buy, 10, dec!(160), "b").unwrap();
        let (p2, _) = execute_decision(&p1, &buy2, 10, run).unwrap();
        assert_eq!(p2.positions[&t("KO")].cost_basis, dec!(155));

        let sell = Decision::valid(t("KO"), d("2025-03-19"), DecisionAction::Sell, 20, dec!(160), "s").unwrap();
        let (p3, rec) = execute_decision(&p2, &sell, 20, run).unwrap();
        assert_eq!(p3.shares_held(&t("KO")), 0);
        assert!(p3.positions.is_empty());
        assert_eq!(rec.executed_shares, 20);

        let hold = Decision::valid(t("KO"), d("2025-03-20"), DecisionAction::Hold, 0, dec!(160), "h").unwrap();
        let (p4, rec) = execute_decision(&p3, &hold, 0, run).unwrap();
        assert_eq!(p4.cash, p3.cash);
        assert_eq!(rec.executed_shares, 0);

        // Sells at a higher price leave more cash than the buys consumed.
        assert_eq!(p3.cash, dec!(100000) - dec!(1500) - dec!(1600) + dec!(3200));
    }

    #[test]
    fn execute_rejects_bypassed_clamps() {
        let portfolio = Portfolio::new(dec!(100), d("2025-03-17"));
        let buy = Decision::valid(t("KO"), d("2025-03-17"), DecisionAction::Buy, 10, dec!(150), "b").unwrap();
        assert!(matches!(
            execute_decision(&portfolio, &buy, 10, "r"),
            Err(WorkflowError::InfeasibleExecution(_))
        ));
        let sell = Decision::valid(t("KO"), d("2025-03-17"), DecisionAction::Sell, 10, dec!(150), "s").unwrap();
        assert!(matches!(
            execute_decision(&portfolio, &sell, 10, "r"),
            Err(WorkflowError::InfeasibleExecution(_))
        ));
    }

    #[test]
    fn plan_analysts_deterministic_and_dynamic() {
        let kinds = vec![
            AnalystKind::Technical,
            AnalystKind::CompanyNews,
            AnalystKind::Policy,
            AnalystKind::Insider,
        ];
        let config = RunConfig::new(
            "r",
            vec![t("AAPL")],
            d("2025-03-17"),
            d("2025-03-17"),
            kinds.clone(),
            ModelProfile::stub("m"),
        );
        let state = FundState::new("r", d("2025-03-17"), dec!(100000));
        let mut acct = Accounting::default();

        let llm = stub_gateway(ScriptedStub::new());
        assert_eq!(plan_analysts(&config, &state, &llm, &mut acct), kinds);

        let mut dynamic = config.clone();
        dynamic.planner_mode = PlannerMode::Dynamic;
        let stub = ScriptedStub::new().respond(
            AgentRole::Planner,
            None,
            d("2025-03-17"),
            r#"["Technical"]"#,
        );
        let llm = stub_gateway(stub);
        assert_eq!(plan_analysts(&dynamic, &state, &llm, &mut acct), vec![AnalystKind::Technical]);

        // Planner failure falls back to the configured list.
        let stub = ScriptedStub::new().fail_then(AgentRole::Planner, None, d("2025-03-17"), u32::MAX, None);
        let llm = stub_gateway(stub);
        assert_eq!(plan_analysts(&dynamic, &state, &llm, &mut acct), kinds);
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        let ok = RunConfig::new(
            "r",
            vec![t("AAPL")],
            d("2025-03-17"),
            d("2025-04-17"),
            vec![AnalystKind::Technical],
            ModelProfile::stub("m"),
        );
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.universe = vec![t("AAPL"), t("AAPL")];
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.start_date = d("2025-05-01");
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.analyst_set.clear();
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.initial_cash = Decimal::ZERO;
        assert!(bad.validate().is_err());
    }
}
