//! Deterministic prompt templates for the planner, the six analyst roles, and
//! the portfolio manager. Rendering is a pure function of the inputs; values
//! are formatted at fixed precision so replayed prompts are byte-identical.

use chrono::NaiveDate;
use rust_decimal::Decimal;

use crate::domain::{AnalystKind, Decision, DecisionAction, Portfolio, Signal, Ticker};
use crate::indicators::TechnicalSummary;
use crate::market::{
    FundamentalsSnapshot, InsiderKind, InsiderTransaction, MacroIndicator, NewsItem,
};

use super::LlmError;

/// Analyst-specific data injected into the prompt; the variant must match the
/// analyst kind.
#[derive(Debug, Clone)]
pub enum AnalystPayload {
    Technical(TechnicalSummary),
    CompanyNews(Vec<NewsItem>),
    Policy(Vec<NewsItem>),
    Insider(Vec<InsiderTransaction>),
    Fundamentals(Option<FundamentalsSnapshot>),
    Macro(Vec<MacroIndicator>),
}

impl AnalystPayload {
    fn describe(&self) -> &'static str {
        match self {
            AnalystPayload::Technical(_) => "technical summary",
            AnalystPayload::CompanyNews(_) => "company news",
            AnalystPayload::Policy(_) => "policy news",
            AnalystPayload::Insider(_) => "insider transactions",
            AnalystPayload::Fundamentals(_) => "fundamentals snapshot",
            AnalystPayload::Macro(_) => "macro indicators",
        }
    }
}

const SIGNAL_OUTPUT_INSTRUCTION: &str = "You must provide your analysis as a structured output with the following fields:\n\
- signal: One of [\"Bullish\", \"Bearish\", \"Neutral\"]\n\
- justification: A brief explanation of your analysis\n\n\
Respond with a single JSON object containing exactly these fields.";

const DECISION_OUTPUT_INSTRUCTION: &str = "You must provide your decision as a structured output with the following fields:\n\
- action: One of [\"Buy\", \"Sell\", \"Hold\"]\n\
- shares: Number of shares to buy or sell, set 0 for hold\n\
- price: The current price of the ticker\n\
- justification: A brief explanation of your decision\n\n\
Respond with a single JSON object containing exactly these fields.";

fn no_data(lines: &str) -> String {
    if lines.is_empty() {
        "No recent data is available.".to_string()
    } else {
        lines.to_string()
    }
}

fn news_lines(items: &[NewsItem]) -> String {
    let lines: Vec<String> = items
        .iter()
        .map(|n| format!("- {} ({}): {} {}", n.date, n.source, n.headline, n.summary))
        .collect();
    no_data(&lines.join("\n"))
}

/// Renders (system, user) for one analyst call.
pub fn render_analyst_prompt(
    kind: AnalystKind,
    ticker: &Ticker,
    date: NaiveDate,
    payload: &AnalystPayload,
) -> Result<(String, String), LlmError> {
    let mismatch = || LlmError::PayloadMismatch {
        kind,
        given: payload.describe().to_string(),
    };
    match (kind, payload) {
        (AnalystKind::Technical, AnalystPayload::Technical(summary)) => {
            let system = format!(
                "You are a technical analyst evaluating {ticker} using multiple technical \
                 analysis strategies."
            );
            let user = format!(
                "Date: {date}\n\nThe following signals have been generated from our analysis:\n\n\
                 Price Trend Analysis: {}\n\
                 Mean Reversion: {}\n\
                 RSI: {}\n\
                 Volatility: {}\n\
                 Volume Analysis: {}\n\
                 Support and Resistance Levels: {}\n\n{SIGNAL_OUTPUT_INSTRUCTION}",
                summary.render_trend(),
                summary.render_mean_reversion(),
                summary.render_rsi(),
                summary.render_volatility(),
                summary.render_volume(),
                summary.render_price_levels(),
            );
            Ok((system, user))
        }
        (AnalystKind::CompanyNews, AnalystPayload::CompanyNews(items)) => {
            let system = format!(
                "You are a company news analyst evaluating {ticker} using recent company-specific \
                 news coverage."
            );
            let user = format!(
                "Date: {date}\n\nRecent news about {ticker}:\n{}\n\n{SIGNAL_OUTPUT_INSTRUCTION}",
                news_lines(items)
            );
            Ok((system, user))
        }
        (AnalystKind::Policy, AnalystPayload::Policy(items)) => {
            let system = format!(
                "You are a policy analyst assessing how fiscal and monetary policy developments \
                 affect {ticker}."
            );
            let user = format!(
                "Date: {date}\n\nRecent policy news:\n{}\n\n{SIGNAL_OUTPUT_INSTRUCTION}",
                news_lines(items)
            );
            Ok((system, user))
        }
        (AnalystKind::Insider, AnalystPayload::Insider(items)) => {
            let system = format!(
                "You are an insider-activity analyst evaluating {ticker} using recent insider \
                 transaction filings."
            );
            let lines: Vec<String> = items
                .iter()
                .map(|t| {
                    let verb = match t.kind {
                        InsiderKind::InsiderBuy => "bought",
                        InsiderKind::InsiderSell => "sold",
                    };
                    format!(
                        "- {}: {} ({}) {verb} {} shares at {:.2}",
                        t.date, t.insider_name, t.role, t.shares, t.price
                    )
                })
                .collect();
            let user = format!(
                "Date: {date}\n\nRecent insider transactions in {ticker}:\n{}\n\n{SIGNAL_OUTPUT_INSTRUCTION}",
                no_data(&lines.join("\n"))
            );
            Ok((system, user))
        }
        (AnalystKind::Fundamental, AnalystPayload::Fundamentals(snapshot)) => {
            let system = format!(
                "You are a fundamental analyst evaluating {ticker} using its latest reported \
                 financials."
            );
            let body = match snapshot {
                None => "No fundamentals snapshot is available.".to_string(),
                Some(s) => {
                    let ratio = |r: Option<f64>| match r {
                        Some(v) => format!("{v:.2}"),
                        None => "n/a".to_string(),
                    };
                    format!(
                        "Latest snapshot (period ending {}):\n\
                         - Revenue: {:.2}\n\
                         - Net income: {:.2}\n\
                         - Gross margin: {:.1}%\n\
                         - Net margin: {:.1}%\n\
                         - P/E: {}\n\
                         - P/B: {}",
                        s.period_end,
                        s.revenue,
                        s.net_income,
                        s.gross_margin * 100.0,
                        s.net_margin * 100.0,
                        ratio(s.pe_ratio),
                        ratio(s.pb_ratio),
                    )
                }
            };
            let user = format!("Date: {date}\n\n{body}\n\n{SIGNAL_OUTPUT_INSTRUCTION}");
            Ok((system, user))
        }
        (AnalystKind::MacroEconomic, AnalystPayload::Macro(items)) => {
            let system = format!(
                "You are a macro-economic analyst assessing how broad economic conditions affect \
                 {ticker}."
            );
            let lines: Vec<String> = items
                .iter()
                .map(|m| format!("- {}: {} {} {}", m.date, m.name, m.value, m.unit))
                .collect();
            let user = format!(
                "Date: {date}\n\nRecent macro indicator readings:\n{}\n\n{SIGNAL_OUTPUT_INSTRUCTION}",
                no_data(&lines.join("\n"))
            );
            Ok((system, user))
        }
        _ => Err(mismatch()),
    }
}

fn memory_lines(memory: &[Decision]) -> String {
    if memory.is_empty() {
        return "No prior decisions.".to_string();
    }
    memory
        .iter()
        .map(|d| match d.action {
            DecisionAction::Hold => {
                format!("- {}: Hold ({})", d.date, d.justification)
            }
            action => format!(
                "- {}: {} {} shares at {:.2} ({})",
                d.date, action, d.shares, d.price, d.justification
            ),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn signal_lines(signals: &[Signal]) -> String {
    let lines: Vec<String> = signals
        .iter()
        .filter(|s| s.valid)
        .map(|s| format!("- [{}] {}: {}", s.analyst, s.direction, s.justification))
        .collect();
    if lines.is_empty() {
        "No valid signals today.".to_string()
    } else {
        lines.join("\n")
    }
}

/// Renders (system, user) for the portfolio-manager call. Only valid signals
/// are shown; invalid ones never reach the manager.
pub fn render_manager_prompt(
    ticker: &Ticker,
    decision_memory: &[Decision],
    current_price: Decimal,
    holding_shares: u32,
    tradable_shares: i64,
    signals: &[Signal],
) -> (String, String) {
    let system = "You are a portfolio manager making final trading decisions based on decision \
                  memory, and the provided optimal position ratio."
        .to_string();
    let user = format!(
        "Ticker: {ticker}\n\n\
         Here is the decision memory:\n{}\n\n\
         Current Price: {:.2}\n\
         Holding Shares: {holding_shares}\n\
         Tradable Shares: {tradable_shares}\n\n\
         If the value of tradable shares is positive, you can buy more shares.\n\
         If the value of tradable shares is negative, you can sell some shares.\n\
         If the value of tradable shares is close to 0, you can hold.\n\n\
         Today's analyst signals:\n{}\n\n{DECISION_OUTPUT_INSTRUCTION}",
        memory_lines(decision_memory),
        current_price,
        signal_lines(signals),
    );
    (system, user)
}

/// Renders (system, user) for the planner call.
pub fn render_planner_prompt(
    universe: &[Ticker],
    portfolio: &Portfolio,
    available_analysts: &[AnalystKind],
) -> (String, String) {
    assert!(!available_analysts.is_empty(), "planner needs at least one analyst");
    let system = "You are a financial planner orchestrating a team of specialist analysts for a \
                  fund."
        .to_string();
    let universe_list = universe
        .iter()
        .map(|t| t.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let positions = if portfolio.positions.is_empty() {
        "- none".to_string()
    } else {
        portfolio
            .positions
            .values()
            .map(|p| format!("- {}: {} shares (cost basis {:.2})", p.ticker, p.shares, p.cost_basis))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let analysts = available_analysts
        .iter()
        .map(|k| format!("- {k}"))
        .collect::<Vec<_>>()
        .join("\n");
    let user = format!(
        "Trading universe: {universe_list}\n\
         Portfolio cash: {:.2}\n\
         Current positions:\n{positions}\n\n\
         Available analysts:\n{analysts}\n\n\
         Select the subset of available analysts to run today based on market conditions and \
         portfolio status.\n\n\
         Respond with a single JSON array of analyst names drawn from the available analysts.",
        portfolio.cash,
    );
    (system, user)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SignalDirection;
    use crate::indicators::{summarize, IndicatorParams};
    use crate::market::{NewsScope, OHLCVBar};
    use rust_decimal_macros::dec;

    fn t(s: &str) -> Ticker {
        Ticker::new(s).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn summary() -> TechnicalSummary {
        let bars: Vec<OHLCVBar> = (0..100)
            .map(|i| {
                let p = dec!(100) + Decimal::from(i % 5);
                OHLCVBar {
                    date: d("2025-01-01") + chrono::Days::new(i as u64),
                    open: p,
                    high: p + dec!(1),
                    low: p - dec!(1),
                    close: p,
                    volume: 1000,
                }
            })
            .collect();
        summarize(&bars, &IndicatorParams::default())
    }

    #[test]
    fn technical_prompt_contains_all_six_labels() {
        let (system, user) = render_analyst_prompt(
            AnalystKind::Technical,
            &t("AAPL"),
            d("2025-03-17"),
            &AnalystPayload::Technical(summary()),
        )
        .unwrap();
        assert!(system.contains("technical analyst evaluating AAPL"));
        for label in [
            "Price Trend Analysis:",
            "Mean Reversion:",
            "RSI:",
            "Volatility:",
            "Volume Analysis:",
            "Support and Resistance Levels:",
        ] {
            assert!(user.contains(label), "missing label {label:?}");
        }
        assert!(user.contains("signal: One of [\"Bullish\", \"Bearish\", \"Neutral\"]"));
        assert!(user.contains("justification:"));
    }

    #[test]
    fn payload_mismatch_is_rejected() {
        let err = render_analyst_prompt(
            AnalystKind::Technical,
            &t("AAPL"),
            d("2025-03-17"),
            &AnalystPayload::CompanyNews(vec![]),
        )
        .unwrap_err();
        assert!(matches!(err, LlmError::PayloadMismatch { kind: AnalystKind::Technical, .. }));
    }

    #[test]
    fn policy_prompt_enumerates_items() {
        let items: Vec<NewsItem> = (0..10)
            .map(|i| NewsItem {
                date: d("2025-04-10"),
                headline: format!("Policy item {i}"),
                summary: "Detail.".into(),
                source: "Policy Desk".into(),
                scope: NewsScope::Policy,
            })
            .collect();
        let (_, user) = render_analyst_prompt(
            AnalystKind::Policy,
            &t("AAPL"),
            d("2025-04-10"),
            &AnalystPayload::Policy(items),
        )
        .unwrap();
        assert_eq!(user.matches("Policy item").count(), 10);
    }

    #[test]
    fn empty_payload_renders_no_data_line() {
        let (_, user) = render_analyst_prompt(
            AnalystKind::CompanyNews,
            &t("KO"),
            d("2025-03-17"),
            &AnalystPayload::CompanyNews(vec![]),
        )
        .unwrap();
        assert!(user.contains("No recent data is available."));
    }

    #[test]
    fn manager_prompt_carries_negative_tradable_and_rules() {
        let signals = vec![Signal::valid(
            AnalystKind::Policy,
            t("CVX"),
            d("2025-04-03"),
            SignalDirection::Bearish,
            "tariff risk",
        )
        .unwrap()];
        let (system, user) =
            render_manager_prompt(&t("CVX"), &[], dec!(156.12), 184, -27, &signals);
        assert!(system.contains("portfolio manager"));
        assert!(user.contains("Current Price: 156.12"));
        assert!(user.contains("Holding Shares: 184"));
        assert!(user.contains("Tradable Shares: -27"));
        assert!(user.contains("If the value of tradable shares is positive, you can buy more shares."));
        assert!(user.contains("If the value of tradable shares is negative, you can sell some shares."));
        assert!(user.contains("If the value of tradable shares is close to 0, you can hold."));
        assert!(user.contains("[Policy] Bearish: tariff risk"));
        assert!(user.contains("No prior decisions."));
        assert!(user.contains("action: One of [\"Buy\", \"Sell\", \"Hold\"]"));
    }

    #[test]
    fn manager_prompt_hides_invalid_signals() {
        let signals = vec![Signal::invalid(AnalystKind::Technical, t("CVX"), d("2025-04-03"))];
        let (_, user) = render_manager_prompt(&t("CVX"), &[], dec!(156.12), 0, 0, &signals);
        assert!(user.contains("No valid signals today."));
        assert!(!user.contains("No signal provided due to error"));
    }

    #[test]
    fn prompts_are_deterministic() {
        let signals = vec![];
        let a = render_manager_prompt(&t("KO"), &[], dec!(70.00), 10, 5, &signals);
        let b = render_manager_prompt(&t("KO"), &[], dec!(70.00), 10, 5, &signals);
        assert_eq!(a, b);

        let p = Portfolio::new(dec!(100000), d("2025-03-17"));
        let kinds = [AnalystKind::Technical, AnalystKind::Policy];
        let x = render_planner_prompt(&[t("KO")], &p, &kinds);
        let y = render_planner_prompt(&[t("KO")], &p, &kinds);
        assert_eq!(x, y);
    }

    #[test]
    fn planner_prompt_lists_exactly_the_available_analysts() {
        let p = Portfolio::new(dec!(100000), d("2025-03-17"));
        let kinds = [
            AnalystKind::Technical,
            AnalystKind::CompanyNews,
            AnalystKind::Policy,
            AnalystKind::Insider,
        ];
        let (_, user) = render_planner_prompt(&[t("AAPL")], &p, &kinds);
        for k in &kinds {
            assert!(user.contains(&format!("- {k}")));
        }
        assert!(!user.contains("- Fundamental\n"));
        assert!(!user.contains("- MacroEconomic"));

        let (_, single) = render_planner_prompt(&[t("AAPL")], &p, &[AnalystKind::Technical]);
        assert!(single.contains("- Technical"));
    }
}
