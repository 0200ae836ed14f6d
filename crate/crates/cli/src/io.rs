//! CSV event logs and summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value read back is bit-identical to the one written.

use std::path::Path;

use evosearch_core::Event;

use crate::error::{CliError, CliResult};

pub const EVENT_COLUMNS: [&str; 4] = ["event_index", "generation", "cumulative_nfe", "reward"];

pub fn write_events(path: &Path, events: &[Event]) -> CliResult<()> {
    let dim = events.first().map_or(0, |e| e.x.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header: Vec<String> = EVENT_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for e in events {
        let mut row = vec![
            e.index.to_string(),
            e.generation.to_string(),
            e.cumulative_nfe.to_string(),
            e.reward.to_string(),
        ];
        row.extend(e.x.iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_events(path: &Path) -> CliResult<Vec<Event>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    if header.len() < EVENT_COLUMNS.len() || header.iter().zip(EVENT_COLUMNS).any(|(a, b)| a != b) {
        return Err(CliError::io(path, "not an event log"));
    }
    let bad = |line: usize, what: &str| CliError::io(path, format!("line {line}: bad {what}"));
    let mut events = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        events.push(Event {
            index: field(0).parse().map_err(|_| bad(line, "event_index"))?,
            generation: field(1).parse().map_err(|_| bad(line, "generation"))?,
            cumulative_nfe: field(2).parse().map_err(|_| bad(line, "cumulative_nfe"))?,
            reward: field(3).parse().map_err(|_| bad(line, "reward"))?,
            x: (4..rec.len())
                .map(|k| field(k).parse().map_err(|_| bad(line, "coordinate")))
                .collect::<CliResult<_>>()?,
        });
    }
    Ok(events)
}

/// One row of `summary.csv`: metrics of a single (method, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub seed: u64,
    pub model_calls: u64,
    pub reward_calls: u64,
    pub num_events: usize,
    pub best_reward: f64,
    pub top_mean_reward: f64,
    pub diversity: f64,
    pub diversity_mean_reward: f64,
    pub angular_coverage: f64,
    pub mode_coverage: f64,
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "method",
    "seed",
    "model_calls",
    "reward_calls",
    "num_events",
    "best_reward",
    "top_mean_reward",
    "diversity",
    "diversity_mean_reward",
    "angular_coverage",
    "mode_coverage",
];

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(SUMMARY_COLUMNS)
        .map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.model_calls.to_string(),
            r.reward_calls.to_string(),
            r.num_events.to_string(),
            r.best_reward.to_string(),
            r.top_mean_reward.to_string(),
            r.diversity.to_string(),
            r.diversity_mean_reward.to_string(),
            r.angular_coverage.to_string(),
            r.mode_coverage.to_string(),
        ])
        .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_summary(path: &Path) -> CliResult<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    if header.iter().ne(SUMMARY_COLUMNS) {
        return Err(CliError::io(path, "not a summary file"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let bad = |what: &str| CliError::io(path, format!("line {}: bad {what}", i + 2));
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(SUMMARY_COLUMNS[k]));
        rows.push(SummaryRow {
            method: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            model_calls: rec[2].parse().map_err(|_| bad("model_calls"))?,
            reward_calls: rec[3].parse().map_err(|_| bad("reward_calls"))?,
            num_events: rec[4].parse().map_err(|_| bad("num_events"))?,
            best_reward: num(5)?,
            top_mean_reward: num(6)?,
            diversity: num(7)?,
            diversity_mean_reward: num(8)?,
            angular_coverage: num(9)?,
            mode_coverage: num(10)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let events = vec![
            Event {
                index: 0,
                generation: 0,
                cumulative_nfe: 50,
                reward: -2.0 / 3.0,
                x: vec![0.1 + 0.2, -1e-300],
            },
            Event {
                index: 1,
                generation: 3,
                cumulative_nfe: 90,
                reward: f64::NEG_INFINITY,
                x: vec![1.0, 2.5e17],
            },
        ];
        write_events(&path, &events).unwrap();
        assert_eq!(read_events(&path).unwrap(), events);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("event_index,generation,cumulative_nfe,reward,x0,x1\n"));
    }

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![SummaryRow {
            method: "evosearch".into(),
            seed: 3,
            model_calls: 19920,
            reward_calls: 581,
            num_events: 581,
            best_reward: -1.2345678901234567,
            top_mean_reward: -2.0,
            diversity: 1.5,
            diversity_mean_reward: -1.7,
            angular_coverage: 0.125,
            mode_coverage: 1.0,
        }];
        write_summary(&path, &rows).unwrap();
        assert_eq!(read_summary(&path).unwrap(), rows);
    }
}
