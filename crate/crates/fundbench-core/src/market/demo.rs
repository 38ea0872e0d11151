//! Deterministic generator for the bundled demo fixture set: five large-cap
//! tickers plus the SPX benchmark over 2024-10-21 .. 2025-04-17, with a
//! 24-trading-day evaluation window from 2025-03-17 to 2025-04-17. Prices are
//! seeded random walks pinned to a handful of anchor closes (a tariff-shock
//! drawdown in early April and the 2025-04-09 rebound), so runs over these
//! fixtures are byte-reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::FromPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};

use crate::domain::Ticker;

use super::fixtures::FixtureWriter;
use super::{
    FundamentalsSnapshot, InsiderKind, InsiderTransaction, MacroIndicator, NewsItem, NewsScope,
    OHLCVBar,
};

/// First bar date in the bundled fixtures.
pub const DEMO_START: &str = "2024-10-21";
/// Last bar date (and last evaluation day) in the bundled fixtures.
pub const DEMO_END: &str = "2025-04-17";
/// The five demo portfolio tickers (SPX is bundled separately as benchmark).
pub const DEMO_TICKERS: [&str; 5] = ["AAPL", "AXP", "BAC", "KO", "CVX"];

fn d(s: &str) -> NaiveDate {
    s.parse().expect("static date literal")
}

fn dec2(f: f64) -> Decimal {
    Decimal::from_f64(f)
        .expect("finite price")
        .round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

/// Monday-to-Friday dates in [start, end].
pub fn weekdays_between(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut day = start;
    while day <= end {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + chrono::Days::new(1);
    }
    out
}

struct TickerSpec {
    symbol: &'static str,
    seed: u64,
    base_volume: u64,
    /// (date, close) anchors, chronological; interiors are interpolated.
    anchors: &'static [(&'static str, f64)],
    revenue_base: f64,
}

const SPECS: [TickerSpec; 6] = [
    TickerSpec {
        symbol: "AAPL",
        seed: 11,
        base_volume: 52_000_000,
        anchors: &[
            ("2024-10-21", 232.00),
            ("2025-01-02", 243.30),
            ("2025-02-18", 244.50),
            ("2025-03-17", 214.00),
            ("2025-04-02", 223.80),
            ("2025-04-08", 172.42),
            ("2025-04-09", 198.85),
            ("2025-04-17", 196.90),
        ],
        revenue_base: 94_900.0,
    },
    TickerSpec {
        symbol: "AXP",
        seed: 23,
        base_volume: 3_100_000,
        anchors: &[
            ("2024-10-21", 270.00),
            ("2025-01-02", 297.40),
            ("2025-02-18", 305.10),
            ("2025-03-17", 268.00),
            ("2025-04-02", 269.30),
            ("2025-04-08", 233.00),
            ("2025-04-09", 252.00),
            ("2025-04-17", 255.00),
        ],
        revenue_base: 17_200.0,
    },
    TickerSpec {
        symbol: "BAC",
        seed: 37,
        base_volume: 38_000_000,
        anchors: &[
            ("2024-10-21", 42.00),
            ("2025-01-02", 44.20),
            ("2025-02-18", 46.10),
            ("2025-03-17", 41.50),
            ("2025-04-02", 41.90),
            ("2025-04-08", 34.50),
            ("2025-04-09", 37.50),
            ("2025-04-17", 36.80),
        ],
        revenue_base: 25_300.0,
    },
    TickerSpec {
        symbol: "KO",
        seed: 41,
        base_volume: 14_500_000,
        anchors: &[
            ("2024-10-21", 69.00),
            ("2025-01-02", 62.50),
            ("2025-02-18", 70.60),
            ("2025-03-17", 70.00),
            ("2025-04-02", 71.40),
            ("2025-04-08", 66.00),
            ("2025-04-09", 69.50),
            ("2025-04-17", 71.20),
        ],
        revenue_base: 11_900.0,
    },
    TickerSpec {
        symbol: "CVX",
        seed: 53,
        base_volume: 7_800_000,
        anchors: &[
            ("2024-10-21", 148.00),
            ("2025-01-02", 143.50),
            ("2025-02-18", 157.30),
            ("2025-03-17", 163.00),
            ("2025-03-28", 166.47),
            ("2025-03-31", 168.51),
            ("2025-04-01", 167.29),
            ("2025-04-02", 166.06),
            ("2025-04-03", 156.12),
            ("2025-04-08", 141.00),
            ("2025-04-09", 150.20),
            ("2025-04-17", 154.30),
        ],
        revenue_base: 52_600.0,
    },
    TickerSpec {
        symbol: "SPX",
        seed: 71,
        base_volume: 2_400_000_000,
        anchors: &[
            ("2024-10-21", 5850.00),
            ("2025-01-02", 5880.00),
            ("2025-02-19", 6140.00),
            ("2025-03-17", 5638.00),
            ("2025-04-02", 5670.00),
            ("2025-04-08", 4983.00),
            ("2025-04-09", 5456.00),
            ("2025-04-17", 5283.00),
        ],
        revenue_base: 0.0,
    },
];

/// Log-linear interpolation between anchor closes with seeded noise on
/// interior days; anchor dates keep their pinned values exactly.
#[allow(clippy::needless_range_loop)] // the RNG draw order is part of the fixture format
fn close_series(spec: &TickerSpec, calendar: &[NaiveDate]) -> Vec<f64> {
    let anchors: Vec<(NaiveDate, f64)> =
        spec.anchors.iter().map(|&(s, p)| (d(s), p)).collect();
    let index_of: BTreeMap<NaiveDate, usize> =
        calendar.iter().enumerate().map(|(i, &dt)| (dt, i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut closes = vec![0.0; calendar.len()];

    for pair in anchors.windows(2) {
        let (d0, p0) = pair[0];
        let (d1, p1) = pair[1];
        let i0 = index_of[&d0];
        let i1 = index_of[&d1];
        let span = (i1 - i0) as f64;
        for i in i0..=i1 {
            let frac = (i - i0) as f64 / span;
            let base = p0 * (p1 / p0).powf(frac);
            closes[i] = if i == i0 || i == i1 {
                base
            } else {
                base * (1.0 + rng.gen_range(-0.007..0.007))
            };
        }
    }
    closes
}

fn bars_from_closes(spec: &TickerSpec, calendar: &[NaiveDate], closes: &[f64]) -> Vec<OHLCVBar> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(7919));
    let mut bars = Vec::with_capacity(calendar.len());
    for (i, (&date, &close_f)) in calendar.iter().zip(closes).enumerate() {
        let prev = if i == 0 { close_f } else { closes[i - 1] };
        let open_f = prev * (1.0 + rng.gen_range(-0.004..0.004));
        let open = dec2(open_f);
        let close = dec2(close_f);
        let hi_span = rng.gen_range(0.0..0.008);
        let lo_span = rng.gen_range(0.0..0.008);
        let mut high = dec2(open_f.max(close_f) * (1.0 + hi_span));
        let mut low = dec2(open_f.min(close_f) * (1.0 - lo_span));
        high = high.max(open).max(close);
        low = low.min(open).min(close);
        let volume = (spec.base_volume as f64 * rng.gen_range(0.7..1.4)) as u64;
        bars.push(OHLCVBar { date, open, high, low, close, volume });
    }
    bars
}

const COMPANY_HEADLINES: [(&str, &str); 8] = [
    (
        "{T} quarterly results edge past consensus",
        "Revenue and margins came in slightly above analyst expectations.",
    ),
    (
        "{T} expands buyback authorization",
        "The board added capacity to the existing share repurchase program.",
    ),
    (
        "Analysts revisit {T} price targets",
        "Several desks adjusted targets citing demand trends and cost discipline.",
    ),
    (
        "{T} supplier commentary points to steady volumes",
        "Channel checks suggest order volumes holding near plan.",
    ),
    (
        "{T} announces leadership transition in a key unit",
        "A senior operating executive will rotate into a new division role.",
    ),
    (
        "{T} flags input-cost pressure in investor update",
        "Management noted mixed cost trends while reaffirming full-year guidance.",
    ),
    (
        "Institutional filings show position changes in {T}",
        "Quarterly filings revealed modest adds and trims among large holders.",
    ),
    (
        "{T} highlights product roadmap at industry conference",
        "Executives outlined near-term launches and capital priorities.",
    ),
];

fn company_news(spec: &TickerSpec, ticker: &Ticker, calendar: &[NaiveDate]) -> Vec<NewsItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(104729));
    let mut items = Vec::new();
    for (i, &date) in calendar.iter().enumerate() {
        // Roughly two items a week.
        if i % 3 != 0 {
            continue;
        }
        let (h, s) = COMPANY_HEADLINES[rng.gen_range(0..COMPANY_HEADLINES.len())];
        items.push(NewsItem {
            date,
            headline: h.replace("{T}", ticker.as_str()),
            summary: s.to_string(),
            source: "Newswire".to_string(),
            scope: NewsScope::Company { ticker: ticker.clone() },
        });
    }
    items
}

fn policy_news(calendar: &[NaiveDate]) -> Vec<NewsItem> {
    let pinned: [(&str, &str, &str); 9] = [
        (
            "2025-01-29",
            "Central bank leaves policy rate unchanged",
            "The first policy meeting of the year kept the target range steady.",
        ),
        (
            "2025-03-19",
            "Policy rate held at 4.5 percent for a second straight meeting",
            "Officials paused again, citing balanced risks between inflation and growth.",
        ),
        (
            "2025-04-02",
            "Sweeping import tariffs announced on major trading partners",
            "A broad tariff schedule was unveiled, raising duties across most import categories.",
        ),
        (
            "2025-04-03",
            "Trading partners weigh retaliation as tariff shock hits equities",
            "Several governments signaled countermeasures while index futures slid.",
        ),
        (
            "2025-04-07",
            "Officials defend tariff plan amid deepening market slide",
            "Administration voices argued the duties would be phased and negotiable.",
        ),
        (
            "2025-04-09",
            "Ninety-day tariff pause announced for most countries",
            "Most of the new duties were suspended pending negotiations, sparking a sharp rally.",
        ),
        (
            "2025-04-10",
            "Equities extend rebound as tariff pause takes effect",
            "Stocks that had been hit hardest by the tariff schedule led the recovery.",
        ),
        (
            "2025-04-14",
            "Negotiators outline framework talks during tariff pause",
            "Working groups were announced to settle sector-level disputes within the window.",
        ),
        (
            "2025-04-16",
            "Central bank speakers flag tariff uncertainty in outlook remarks",
            "Speeches emphasized two-sided risks to inflation from trade policy.",
        ),
    ];
    let mut items: Vec<NewsItem> = pinned
        .iter()
        .map(|&(date, h, s)| NewsItem {
            date: d(date),
            headline: h.to_string(),
            summary: s.to_string(),
            source: "Policy Desk".to_string(),
            scope: NewsScope::Policy,
        })
        .collect();
    // Weekly filler before the pinned cluster.
    let mut rng = ChaCha8Rng::seed_from_u64(977);
    let fillers = [
        (
            "Lawmakers debate spending package",
            "Budget negotiations continued with no agreement announced.",
        ),
        (
            "Regulators publish bank capital consultation",
            "A consultation paper proposed adjustments to capital buffers.",
        ),
        (
            "Treasury auction demand steady",
            "Bid-to-cover ratios held near recent averages.",
        ),
    ];
    for &date in calendar.iter().filter(|&&dt| dt < d("2025-01-29")) {
        if date.weekday() == Weekday::Wed && rng.gen_bool(0.6) {
            let (h, s) = fillers[rng.gen_range(0..fillers.len())];
            items.push(NewsItem {
                date,
                headline: h.to_string(),
                summary: s.to_string(),
                source: "Policy Desk".to_string(),
                scope: NewsScope::Policy,
            });
        }
    }
    items.sort_by_key(|n| n.date);
    items
}

fn insider_transactions(
    spec: &TickerSpec,
    ticker: &Ticker,
    calendar: &[NaiveDate],
    closes: &[f64],
) -> Vec<InsiderTransaction> {
    let names = [
        ("M. Alvarez", "Chief Financial Officer"),
        ("R. Chen", "Director"),
        ("S. Osei", "Chief Operating Officer"),
        ("L. Novak", "General Counsel"),
        ("P. Iyer", "Director"),
        ("D. Virtanen", "EVP, Strategy"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1299709));
    let mut items = Vec::new();
    let step = calendar.len() / 7;
    for (k, &(name, role)) in names.iter().enumerate() {
        let idx = step * (k + 1) + rng.gen_range(0..step / 2);
        let date = calendar[idx.min(calendar.len() - 1)];
        let kind = if k % 2 == 0 { InsiderKind::InsiderSell } else { InsiderKind::InsiderBuy };
        items.push(InsiderTransaction {
            date,
            ticker: ticker.clone(),
            insider_name: name.to_string(),
            role: role.to_string(),
            kind,
            shares: 500 + (rng.gen_range(1..12) * 250),
            price: dec2(closes[idx.min(closes.len() - 1)]),
        });
    }
    items.sort_by_key(|i| i.date);
    items
}

fn fundamentals(spec: &TickerSpec, ticker: &Ticker) -> Vec<FundamentalsSnapshot> {
    let periods = [("2024-09-30", 1.00), ("2024-12-31", 1.06), ("2025-03-31", 1.02)];
    periods
        .iter()
        .enumerate()
        .map(|(i, &(end, growth))| FundamentalsSnapshot {
            ticker: ticker.clone(),
            period_end: d(end),
            revenue: dec2(spec.revenue_base * growth),
            net_income: dec2(spec.revenue_base * growth * 0.22),
            gross_margin: 0.41 + i as f64 * 0.005,
            net_margin: 0.21 + i as f64 * 0.003,
            pe_ratio: Some(24.0 + spec.seed as f64 % 7.0),
            pb_ratio: Some(4.0 + spec.seed as f64 % 3.0),
        })
        .collect()
}

fn macro_indicators() -> Vec<MacroIndicator> {
    let mut items = Vec::new();
    let monthly: [(&str, f64, f64, f64); 7] = [
        // (release date, cpi yoy %, unemployment %, gdp-growth % annualized)
        ("2024-10-10", 3.2, 4.1, 2.8),
        ("2024-11-13", 3.1, 4.1, 2.8),
        ("2024-12-11", 3.0, 4.2, 2.6),
        ("2025-01-15", 2.9, 4.1, 2.6),
        ("2025-02-12", 3.0, 4.0, 2.4),
        ("2025-03-12", 2.8, 4.1, 2.4),
        ("2025-04-10", 2.4, 4.2, 2.2),
    ];
    for (date, cpi, unemp, gdp) in monthly {
        items.push(MacroIndicator {
            name: "CPI".into(),
            date: d(date),
            value: cpi,
            unit: "% yoy".into(),
        });
        items.push(MacroIndicator {
            name: "Unemployment".into(),
            date: d(date),
            value: unemp,
            unit: "%".into(),
        });
        items.push(MacroIndicator {
            name: "GDP growth".into(),
            date: d(date),
            value: gdp,
            unit: "% annualized".into(),
        });
    }
    for date in ["2024-11-07", "2024-12-18", "2025-01-29", "2025-03-19"] {
        items.push(MacroIndicator {
            name: "Policy rate".into(),
            date: d(date),
            value: if date < "2024-12-01" { 4.75 } else { 4.5 },
            unit: "%".into(),
        });
    }
    items.sort_by_key(|a| (a.date, a.name.clone()));
    items
}

/// Writes the complete demo fixture set into `dir`.
pub fn write_demo_fixtures(dir: &Path) -> std::io::Result<()> {
    let calendar = weekdays_between(d(DEMO_START), d(DEMO_END));
    let mut writer = FixtureWriter::new(dir);
    for spec in &SPECS {
        let ticker = Ticker::new(spec.symbol).expect("static ticker");
        let closes = close_series(spec, &calendar);
        let bars = bars_from_closes(spec, &calendar, &closes);
        writer.ohlcv(&ticker, &bars)?;
        if spec.symbol != "SPX" {
            writer.news(&ticker, &company_news(spec, &ticker, &calendar))?;
            writer.insider(&ticker, &insider_transactions(spec, &ticker, &calendar, &closes))?;
            writer.fundamentals(&ticker, &fundamentals(spec, &ticker))?;
        }
    }
    writer.policy_news(&policy_news(&calendar))?;
    writer.macro_indicators(&macro_indicators())?;
    writer.finish()
}

/// Stub script for the quickstart demo run: opens positions on day one,
/// rebalances CVX after the 2025-04-03 drop, and adds AAPL on the rebound.
/// Unscripted calls fall back to the stub defaults (Neutral / Hold).
pub fn demo_stub_script() -> String {
    fn buy(ticker: &str, date: &str, shares: u32, why: &str) -> String {
        manager(ticker, date, "Buy", shares, why)
    }
    fn sell(ticker: &str, date: &str, shares: u32, why: &str) -> String {
        manager(ticker, date, "Sell", shares, why)
    }
    fn manager(ticker: &str, date: &str, action: &str, shares: u32, why: &str) -> String {
        let response = serde_json::json!({
            "action": action,
            "shares": shares,
            "price": 0.0,
            "justification": why,
        });
        serde_json::json!({
            "role": "manager",
            "ticker": ticker,
            "date": date,
            "response": response.to_string(),
        })
        .to_string()
    }
    fn signal(kind: &str, ticker: &str, date: &str, direction: &str, why: &str) -> String {
        let response = serde_json::json!({
            "signal": direction,
            "justification": why,
        });
        serde_json::json!({
            "role": kind,
            "ticker": ticker,
            "date": date,
            "response": response.to_string(),
        })
        .to_string()
    }

    let lines = vec![
        buy("AAPL", "2025-03-17", 70, "Establish a core position near recent support."),
        buy("AXP", "2025-03-17", 55, "Open an initial stake at a reasonable multiple."),
        buy("BAC", "2025-03-17", 361, "Deploy part of the cash reserve into financials."),
        buy("KO", "2025-03-17", 214, "Defensive staple to balance the book."),
        buy("CVX", "2025-03-17", 92, "Energy exposure with supportive price trend."),
        signal(
            "Policy",
            "CVX",
            "2025-04-03",
            "Bearish",
            "New tariffs raise near-term demand risk for energy.",
        ),
        sell("CVX", "2025-04-03", 30, "Tradable shares are negative; trim toward target weight."),
        signal(
            "CompanyNews",
            "AAPL",
            "2025-04-09",
            "Bullish",
            "Tariff pause removes the immediate cost overhang.",
        ),
        buy("AAPL", "2025-04-09", 20, "Add on the rebound while capacity is positive."),
    ];
    lines.join("\n") + "\n"
}

/// Writes [`demo_stub_script`] to `path`.
pub fn write_demo_stub_script(path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, demo_stub_script())
}
