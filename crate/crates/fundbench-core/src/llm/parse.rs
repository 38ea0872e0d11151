//! Parsers for structured model output. Prompts request a JSON object, but a
//! labeled-lines fallback ("signal: ...", "justification: ...") tolerates
//! models that ignore the JSON instruction. Parsers are total: every input
//! yields either fully valid fields or a Malformed* error, never a partially
//! valid value.

use rust_decimal::Decimal;
use serde_json::Value;

use crate::domain::{
    parse_action, parse_direction, AnalystKind, DecisionAction, SignalDirection,
};

use super::LlmError;

/// First JSON value embedded in free text, if any. Tries each candidate start
/// position so fenced or prefixed JSON still parses.
fn extract_json(text: &str, opener: char) -> Option<Value> {
    for (i, c) in text.char_indices() {
        if c != opener {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            return Some(v);
        }
    }
    None
}

/// Case-insensitive "label: value" scan over lines, tolerating list markers
/// and markdown emphasis around the label.
fn labeled_line<'t>(text: &'t str, label: &str) -> Option<&'t str> {
    for line in text.lines() {
        let trimmed = line.trim_start_matches(['-', '*', '>', ' ', '\t']);
        if trimmed.len() < label.len() + 1 {
            continue;
        }
        let (head, rest) = trimmed.split_at(label.len());
        if head.eq_ignore_ascii_case(label) {
            if let Some(value) = rest.strip_prefix(':') {
                let value = value.trim().trim_matches('*').trim();
                if !value.is_empty() {
                    return Some(value);
                }
            }
        }
    }
    None
}

fn string_field(obj: &Value, key: &str) -> Option<String> {
    obj.get(key).and_then(Value::as_str).map(str::to_string)
}

/// Extracts (direction, justification) from an analyst response.
pub fn parse_signal_response(text: &str) -> Result<(SignalDirection, String), LlmError> {
    let malformed = |why: &str| LlmError::MalformedSignalResponse(why.to_string());

    if let Some(obj) = extract_json(text, '{') {
        let signal = string_field(&obj, "signal")
            .ok_or_else(|| malformed("missing \"signal\" field"))?;
        let direction =
            parse_direction(&signal).map_err(|e| malformed(&e.to_string()))?;
        let justification = string_field(&obj, "justification")
            .ok_or_else(|| malformed("missing \"justification\" field"))?;
        if justification.trim().is_empty() {
            return Err(malformed("empty justification"));
        }
        return Ok((direction, justification));
    }

    let signal = labeled_line(text, "signal").ok_or_else(|| malformed("no signal field found"))?;
    let direction = parse_direction(signal).map_err(|e| malformed(&e.to_string()))?;
    let justification = labeled_line(text, "justification")
        .ok_or_else(|| malformed("no justification field found"))?;
    Ok((direction, justification.to_string()))
}

/// Decision fields parsed from a manager response. A Hold that arrived with a
/// nonzero share count is normalized to zero and flagged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDecision {
    pub action: DecisionAction,
    pub shares: u32,
    pub price: Decimal,
    pub justification: String,
    pub hold_shares_normalized: bool,
}

fn shares_from_value(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                u32::try_from(u).ok()
            } else {
                // Integral floats like 27.0 are accepted; anything else is not.
                n.as_f64().filter(|f| *f >= 0.0 && f.fract() == 0.0).map(|f| f as u32)
            }
        }
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn decimal_from_value(v: &Value) -> Option<Decimal> {
    match v {
        Value::Number(n) => n.to_string().parse().ok(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Extracts (action, shares, price, justification) from a manager response.
pub fn parse_decision_response(text: &str) -> Result<ParsedDecision, LlmError> {
    let malformed = |why: &str| LlmError::MalformedDecisionResponse(why.to_string());

    let (action, shares, price, justification) = if let Some(obj) = extract_json(text, '{') {
        let action = string_field(&obj, "action")
            .ok_or_else(|| malformed("missing \"action\" field"))?;
        let action = parse_action(&action).map_err(|e| malformed(&e.to_string()))?;
        let shares = obj
            .get("shares")
            .and_then(shares_from_value)
            .ok_or_else(|| malformed("missing or non-integer \"shares\" field"))?;
        let price = obj
            .get("price")
            .and_then(decimal_from_value)
            .ok_or_else(|| malformed("missing or non-numeric \"price\" field"))?;
        let justification = string_field(&obj, "justification")
            .ok_or_else(|| malformed("missing \"justification\" field"))?;
        (action, shares, price, justification)
    } else {
        let action = labeled_line(text, "action")
            .ok_or_else(|| malformed("no action field found"))?;
        let action = parse_action(action).map_err(|e| malformed(&e.to_string()))?;
        let shares: u32 = labeled_line(text, "shares")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| malformed("no integer shares field found"))?;
        let price: Decimal = labeled_line(text, "price")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| malformed("no numeric price field found"))?;
        let justification = labeled_line(text, "justification")
            .ok_or_else(|| malformed("no justification field found"))?
            .to_string();
        (action, shares, price, justification)
    };

    if justification.trim().is_empty() {
        return Err(malformed("empty justification"));
    }
    match action {
        DecisionAction::Hold => Ok(ParsedDecision {
            action,
            shares: 0,
            price,
            justification,
            hold_shares_normalized: shares != 0,
        }),
        DecisionAction::Buy | DecisionAction::Sell => {
            if shares == 0 {
                return Err(malformed("buy/sell with zero shares"));
            }
            Ok(ParsedDecision {
                action,
                shares,
                price,
                justification,
                hold_shares_normalized: false,
            })
        }
    }
}

/// Parses the planner's analyst selection and intersects it with `available`
/// (response order, de-duplicated). An empty result is malformed; the caller
/// falls back to the configured deterministic list.
pub fn parse_planner_response(
    text: &str,
    available: &[AnalystKind],
) -> Result<Vec<AnalystKind>, LlmError> {
    let malformed = |why: &str| LlmError::MalformedPlannerResponse(why.to_string());

    let names: Vec<String> = if let Some(Value::Array(items)) = extract_json(text, '[') {
        items
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect()
    } else if let Some(obj) = extract_json(text, '{') {
        match obj.get("analysts") {
            Some(Value::Array(items)) => items
                .iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect(),
            _ => return Err(malformed("no analyst list found")),
        }
    } else {
        text.split([',', '\n'])
            .map(|tok| tok.trim().trim_matches(['-', '*', '"', ' ']).to_string())
            .filter(|tok| !tok.is_empty())
            .collect()
    };

    let mut selected = Vec::new();
    for name in names {
        if let Ok(kind) = name.parse::<AnalystKind>() {
            if available.contains(&kind) && !selected.contains(&kind) {
                selected.push(kind);
            }
        }
    }
    if selected.is_empty() {
        return Err(malformed("no recognized analysts in response"));
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal_macros::dec;

    #[test]
    fn signal_json_object() {
        let (dir, j) = parse_signal_response(
            r#"{"signal":"Bullish","justification":"tariff pause lifts stocks"}"#,
        )
        .unwrap();
        assert_eq!(dir, SignalDirection::Bullish);
        assert_eq!(j, "tariff pause lifts stocks");
    }

    #[test]
    fn signal_fenced_json() {
        let text = "Here is my analysis:\n```json\n{\"signal\": \"Bearish\", \"justification\": \"weak demand\"}\n```";
        let (dir, j) = parse_signal_response(text).unwrap();
        assert_eq!(dir, SignalDirection::Bearish);
        assert_eq!(j, "weak demand");
    }

    #[test]
    fn signal_labeled_lines() {
        let (dir, j) = parse_signal_response("signal: Neutral\njustification: mixed data").unwrap();
        assert_eq!(dir, SignalDirection::Neutral);
        assert_eq!(j, "mixed data");
    }

    #[test]
    fn signal_garbage_is_malformed() {
        assert!(matches!(
            parse_signal_response("I think it will go up"),
            Err(LlmError::MalformedSignalResponse(_))
        ));
        assert!(matches!(
            parse_signal_response(r#"{"signal":"Sideways","justification":"x"}"#),
            Err(LlmError::MalformedSignalResponse(_))
        ));
        assert!(matches!(
            parse_signal_response(r#"{"signal":"Bullish","justification":""}"#),
            Err(LlmError::MalformedSignalResponse(_))
        ));
    }

    #[test]
    fn decision_json_object() {
        let d = parse_decision_response(
            r#"{"action":"Sell","shares":27,"price":156.12,"justification":"rebalance"}"#,
        )
        .unwrap();
        assert_eq!(d.action, DecisionAction::Sell);
        assert_eq!(d.shares, 27);
        assert_eq!(d.price, dec!(156.12));
        assert_eq!(d.justification, "rebalance");
        assert!(!d.hold_shares_normalized);
    }

    #[test]
    fn decision_integral_float_shares_accepted() {
        let d = parse_decision_response(
            r#"{"action":"Buy","shares":68.0,"price":"156.12","justification":"capacity"}"#,
        )
        .unwrap();
        assert_eq!(d.shares, 68);
        assert_eq!(d.price, dec!(156.12));
    }

    #[test]
    fn decision_hold_normalizes_shares() {
        let d = parse_decision_response(
            r#"{"action":"Hold","shares":5,"price":100,"justification":"wait"}"#,
        )
        .unwrap();
        assert_eq!(d.action, DecisionAction::Hold);
        assert_eq!(d.shares, 0);
        assert!(d.hold_shares_normalized);

        let d = parse_decision_response(
            r#"{"action":"Hold","shares":0,"price":100,"justification":"wait"}"#,
        )
        .unwrap();
        assert!(!d.hold_shares_normalized);
    }

    #[test]
    fn decision_buy_zero_shares_is_malformed() {
        assert!(matches!(
            parse_decision_response(
                r#"{"action":"Buy","shares":0,"price":100,"justification":"x"}"#
            ),
            Err(LlmError::MalformedDecisionResponse(_))
        ));
        assert!(matches!(
            parse_decision_response(
                r#"{"action":"Sell","shares":-3,"price":100,"justification":"x"}"#
            ),
            Err(LlmError::MalformedDecisionResponse(_))
        ));
    }

    #[test]
    fn decision_labeled_lines() {
        let d = parse_decision_response(
            "action: buy\nshares: 10\nprice: 150.25\njustification: dip entry",
        )
        .unwrap();
        assert_eq!(d.action, DecisionAction::Buy);
        assert_eq!(d.shares, 10);
        assert_eq!(d.price, dec!(150.25));
    }

    #[test]
    fn planner_array_and_intersection() {
        let available = [AnalystKind::Technical, AnalystKind::Policy];
        let picked =
            parse_planner_response(r#"["Technical","Policy"]"#, &available).unwrap();
        assert_eq!(picked, vec![AnalystKind::Technical, AnalystKind::Policy]);

        let picked =
            parse_planner_response(r#"["Technical","Fundamental"]"#, &available).unwrap();
        assert_eq!(picked, vec![AnalystKind::Technical]);

        let picked = parse_planner_response(
            r#"{"analysts":["policy","policy","technical"]}"#,
            &available,
        )
        .unwrap();
        assert_eq!(picked, vec![AnalystKind::Policy, AnalystKind::Technical]);
    }

    #[test]
    fn planner_empty_or_unknown_is_malformed() {
        let available = [AnalystKind::Technical];
        assert!(matches!(
            parse_planner_response("[]", &available),
            Err(LlmError::MalformedPlannerResponse(_))
        ));
        assert!(matches!(
            parse_planner_response(r#"["Fundamental"]"#, &available),
            Err(LlmError::MalformedPlannerResponse(_))
        ));
    }

    #[test]
    fn planner_free_text_fallback() {
        let available = [AnalystKind::Technical, AnalystKind::CompanyNews];
        let picked =
            parse_planner_response("Technical, Company News", &available).unwrap();
        assert_eq!(picked, vec![AnalystKind::Technical, AnalystKind::CompanyNews]);
    }
}
