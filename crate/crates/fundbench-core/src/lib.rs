//! Evaluation engine for LLM-driven fund management: a planner / analyst-team /
//! portfolio-manager workflow runs against live or replayed market data behind a
//! leakage guard, executes trades on a simulated fund, persists every signal,
//! decision, and portfolio snapshot to an append-only ledger, and computes a
//! full performance and behavioral metric suite over the results.

pub mod config;
pub mod domain;
pub mod indicators;
pub mod ledger;
pub mod llm;
pub mod market;
pub mod metrics;
pub mod report;
pub mod workflow;

pub use domain::{
    AnalystKind, Decision, DecisionAction, DomainError, FundState, Portfolio, Position, Signal,
    SignalDirection, Ticker, TradeRecord,
};
pub use market::{MarketError, MarketGateway, SimulationClock};
pub use workflow::{RunConfig, RunSummary};
