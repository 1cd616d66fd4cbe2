//! Request-log ingestion and the per-node indicator request matrix.
//!
//! Two input formats are supported: MovieLens `u.data` style TSV (user, item,
//! rating, timestamp — the rating is discarded, every row counts as one
//! request) and a plain `timestamp,user_id,content_id` CSV. Each user issues
//! at most one request per time slot; later duplicates are dropped and
//! counted.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestEvent {
    pub timestamp: u64,
    pub user_id: u64,
    pub content_id: u32,
    pub node_id: Option<u32>,
}

/// Time-ordered request events plus the slot geometry they map onto.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestLog {
    pub events: Vec<RequestEvent>,
    /// Catalog size N_c; content ids lie in [1, N_c].
    pub catalog_size: u32,
    /// Number of time slots T.
    pub horizon: usize,
    pub slot_seconds: u64,
    /// Timestamp of slot 0. Per-node logs keep the parent's base so window
    /// boundaries stay aligned across nodes.
    pub base_ts: u64,
}

impl RequestLog {
    pub fn slot_of(&self, event: &RequestEvent) -> usize {
        ((event.timestamp - self.base_ts) / self.slot_seconds) as usize
    }
}

/// Input trace format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    MovielensTsv,
    EventsCsv,
}

/// Result of parsing a raw trace.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub log: RequestLog,
    /// Requests dropped because the user already requested in that slot.
    pub duplicates_dropped: u64,
}

/// Dense binary indicator matrix: entry (t, l) is 1 iff content l+1 was
/// requested at least once in slot t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestMatrix {
    data: Vec<u8>,
    n_slots: usize,
    n_contents: usize,
    pub node_id: Option<u32>,
}

impl RequestMatrix {
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn n_contents(&self) -> usize {
        self.n_contents
    }

    /// Indicator for slot `t` and 0-based content index `l`.
    pub fn at(&self, t: usize, l: usize) -> u8 {
        self.data[t * self.n_contents + l]
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.n_contents..(t + 1) * self.n_contents]
    }

    #[cfg(test)]
    pub(crate) fn from_rows(rows: &[Vec<u8>]) -> Self {
        let n_contents = rows.first().map_or(0, |r| r.len());
        RequestMatrix {
            data: rows.concat(),
            n_slots: rows.len(),
            n_contents,
            node_id: None,
        }
    }
}

fn parse_int<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what}: {field:?}"),
    })
}

/// Parses a raw byte stream in the declared format into a time-sorted log.
///
/// N_c is the largest content id seen, T = ceil((max_ts - min_ts + 1) /
/// slot_seconds), and duplicate (user, slot) requests beyond the first are
/// dropped and counted.
pub fn parse_trace(
    reader: impl BufRead,
    format: TraceFormat,
    slot_seconds: u64,
) -> Result<ParsedTrace> {
    if slot_seconds == 0 {
        return Err(Error::InvalidArgument("slot_seconds must be >= 1".into()));
    }
    let mut events: Vec<RequestEvent> = Vec::new();
    let mut lines = reader.lines().enumerate();

    if format == TraceFormat::EventsCsv {
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("no header line".into()))?;
        let header = header?;
        if header.trim() != "timestamp,user_id,content_id" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header 'timestamp,user_id,content_id', got {header:?}"),
            });
        }
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = match format {
            TraceFormat::MovielensTsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 4 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
                    });
                }
                // user, item, rating, timestamp; rating discarded.
                RequestEvent {
                    user_id: parse_int(fields[0], line_no, "user id")?,
                    content_id: parse_int(fields[1], line_no, "item id")?,
                    timestamp: parse_int(fields[3], line_no, "timestamp")?,
                    node_id: None,
                }
            }
            TraceFormat::EventsCsv => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected 3 comma-separated fields, got {}", fields.len()),
                    });
                }
                RequestEvent {
                    timestamp: parse_int(fields[0], line_no, "timestamp")?,
                    user_id: parse_int(fields[1], line_no, "user id")?,
                    content_id: parse_int(fields[2], line_no, "content id")?,
                    node_id: None,
                }
            }
        };
        if event.content_id == 0 {
            return Err(Error::Parse {
                line: line_no,
                msg: "content id must be >= 1".into(),
            });
        }
        events.push(event);
    }

    if events.is_empty() {
        return Err(Error::EmptyInput("trace contains no events".into()));
    }

    events.sort_by_key(|e| e.timestamp);
    let base_ts = events.first().unwrap().timestamp;
    let max_ts = events.last().unwrap().timestamp;
    let catalog_size = events.iter().map(|e| e.content_id).max().unwrap();
    let horizon = ((max_ts - base_ts + 1) as f64 / slot_seconds as f64).ceil() as usize;

    // One request per user per slot: keep the earliest, drop the rest.
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let mut duplicates_dropped = 0u64;
    events.retain(|e| {
        let slot = (e.timestamp - base_ts) / slot_seconds;
        if seen.insert((e.user_id, slot)) {
            true
        } else {
            duplicates_dropped += 1;
            false
        }
    });

    Ok(ParsedTrace {
        log: RequestLog {
            events,
            catalog_size,
            horizon,
            slot_seconds,
            base_ts,
        },
        duplicates_dropped,
    })
}

/// Writes a log in the `events_csv` interchange format.
pub fn write_events_csv(log: &RequestLog, mut writer: impl Write) -> Result<()> {
    writeln!(writer, "timestamp,user_id,content_id")?;
    for e in &log.events {
        writeln!(writer, "{},{},{}", e.timestamp, e.user_id, e.content_id)?;
    }
    Ok(())
}

/// Per-node split of a log.
#[derive(Debug, Clone)]
pub struct NodeAssignment {
    /// One log per hgNB: FAPs first (node ids 1..=N_f), then UAVs.
    pub node_logs: Vec<RequestLog>,
    /// Events whose user is outside every hgNB's transmission range.
    pub dropped: u64,
}

/// Assigns every event to the nearest in-range hgNB (ties to the lower node
/// id). Events with no covering node are dropped and counted.
pub fn assign_requests_to_nodes(log: &RequestLog, topo: &Topology) -> Result<NodeAssignment> {
    let mut positions: HashMap<u64, (f64, f64)> = HashMap::new();
    for &(id, x, y) in &topo.ues {
        positions.insert(id, (x, y));
    }
    // (node position, range); index order defines node ids.
    let nodes: Vec<((f64, f64), f64)> = topo
        .faps
        .iter()
        .map(|&p| (p, topo.tx_range.fap))
        .chain(topo.uavs.iter().map(|&p| (p, topo.tx_range.uav)))
        .collect();

    let mut per_node: Vec<Vec<RequestEvent>> = vec![Vec::new(); nodes.len()];
    let mut dropped = 0u64;
    for event in &log.events {
        let &(ux, uy) = positions
            .get(&event.user_id)
            .ok_or(Error::MissingPosition(event.user_id))?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &((nx, ny), range)) in nodes.iter().enumerate() {
            let d = ((ux - nx).powi(2) + (uy - ny).powi(2)).sqrt();
            if d <= range {
                match best {
                    Some((_, bd)) if bd <= d => {}
                    _ => best = Some((i, d)),
                }
            }
        }
        match best {
            Some((i, _)) => per_node[i].push(RequestEvent {
                node_id: Some(i as u32 + 1),
                ..*event
            }),
            None => dropped += 1,
        }
    }

    let node_logs = per_node
        .into_iter()
        .map(|events| RequestLog {
            events,
            catalog_size: log.catalog_size,
            horizon: log.horizon,
            slot_seconds: log.slot_seconds,
            base_ts: log.base_ts,
        })
        .collect();
    Ok(NodeAssignment { node_logs, dropped })
}

/// Builds the T x N_c indicator matrix: 1 iff the content saw at least one
/// request in the slot. Duplicate requests collapse.
pub fn build_request_matrix(log: &RequestLog) -> RequestMatrix {
    let n_contents = log.catalog_size as usize;
    let n_slots = log.horizon;
    let mut data = vec![0u8; n_slots * n_contents];
    let node_id = log.events.first().and_then(|e| e.node_id);
    for event in &log.events {
        let t = log.slot_of(event);
        debug_assert!(t < n_slots);
        data[t * n_contents + event.content_id as usize - 1] = 1;
    }
    RequestMatrix {
        data,
        n_slots,
        n_contents,
        node_id,
    }
}
