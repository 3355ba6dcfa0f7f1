//! Optional per-thread log of route decisions, written as JSON lines by
//! the command-line driver.

use std::cell::RefCell;

use serde::Serialize;

use super::Regime;

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub op: &'static str,
    pub mu: u32,
    pub k: f64,
    pub x: f64,
    pub regime: Option<Regime>,
    pub abs_err: Option<f64>,
}

thread_local! {
    static SINK: RefCell<Option<Vec<TraceRecord>>> = const { RefCell::new(None) };
}

/// Start collecting records on the current thread.
pub fn enable() {
    SINK.with(|s| *s.borrow_mut() = Some(Vec::new()));
}

/// Stop collecting and return what was gathered.
pub fn take() -> Vec<TraceRecord> {
    SINK.with(|s| s.borrow_mut().take().unwrap_or_default())
}

pub(crate) fn record(op: &'static str, mu: u32, k: f64, x: f64, regime: Option<Regime>, abs_err: Option<f64>) {
    SINK.with(|s| {
        if let Some(v) = s.borrow_mut().as_mut() {
            v.push(TraceRecord { op, mu, k, x, regime, abs_err });
        }
    });
}

/// Render records as JSON lines.
pub fn to_json_lines(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace record serialises"));
        out.push('\n');
    }
    out
}
