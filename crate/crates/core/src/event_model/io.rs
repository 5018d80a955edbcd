//! Event-history files.
//!
//! The native format is JSON Lines. An optional first line carries the
//! schema tag and the dimensions:
//!
//! ```text
//! {"schema":"rcrte-history/1","q":4,"p":3}
//! {"unit_id":"7","tau":1.42,"te_time":null,"covariates":[0.1,-1.2,0.4],"events":[{"time":0.21,"risk":3}]}
//! ```
//!
//! Risks are numbered `1..=Q` in files. Without a header, `Q` is the largest
//! risk seen and `p` the covariate length of the first record.
//!
//! The tabular import is CSV with one row per event:
//! `unit_id,tau,te_time,x1,..,xp,event_time,risk`. A unit without events has
//! a single row with empty `event_time` and `risk`; `te_time` is empty when
//! the terminal event was not observed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Event, UnitHistory};
use crate::error::{Error, Result};

pub const SCHEMA_TAG: &str = "rcrte-history/1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    q: usize,
    p: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    time: f64,
    risk: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitRecord {
    unit_id: String,
    tau: f64,
    te_time: Option<f64>,
    covariates: Vec<f64>,
    events: Vec<EventRecord>,
}

impl UnitRecord {
    fn into_history(self, q: usize) -> Result<UnitHistory> {
        let events = self
            .events
            .into_iter()
            .map(|e| {
                if e.risk == 0 || e.risk > q {
                    Err(Error::InvalidRisk { risk: e.risk, q })
                } else {
                    Ok(Event {
                        time: e.time,
                        risk: e.risk - 1,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        UnitHistory::new(self.unit_id, q, events, self.tau, self.te_time, self.covariates)
    }

    fn from_history(u: &UnitHistory) -> Self {
        UnitRecord {
            unit_id: u.id().to_string(),
            tau: u.tau(),
            te_time: u.te_time(),
            covariates: u.covariates().to_vec(),
            events: u
                .events()
                .iter()
                .map(|e| EventRecord {
                    time: e.time,
                    risk: e.risk + 1,
                })
                .collect(),
        }
    }
}

pub fn read_jsonl<R: Read>(reader: R) -> Result<Dataset> {
    let mut header: Option<Header> = None;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        if value.get("schema").is_some() {
            if header.is_some() || !records.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "schema header must be the first record".into(),
                });
            }
            let h: Header = serde_json::from_value(value).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            if h.schema != SCHEMA_TAG {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("unsupported schema '{}'", h.schema),
                });
            }
            header = Some(h);
            continue;
        }
        let rec: UnitRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push((idx + 1, rec));
    }
    let (q, p) = match header {
        Some(h) => (h.q, h.p),
        None => {
            let q = records
                .iter()
                .flat_map(|(_, r)| r.events.iter().map(|e| e.risk))
                .max()
                .unwrap_or(1);
            let p = records.first().map_or(0, |(_, r)| r.covariates.len());
            (q, p)
        }
    };
    let units = records
        .into_iter()
        .map(|(line, r)| {
            r.into_history(q).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(q, p, units)
}

pub fn write_jsonl<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let header = Header {
        schema: SCHEMA_TAG.to_string(),
        q: data.q(),
        p: data.p(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for u in data.units() {
        serde_json::to_writer(&mut w, &UnitRecord::from_history(u))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the one-row-per-event CSV import. `q` overrides the inferred risk count.
pub fn read_csv<R: Read>(reader: R, q: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing column '{name}'")))
    };
    let (c_id, c_tau, c_te, c_time, c_risk) = (
        col("unit_id")?,
        col("tau")?,
        col("te_time")?,
        col("event_time")?,
        col("risk")?,
    );
    let mut cov_cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_prefix('x')
                .and_then(|k| k.parse::<usize>().ok())
                .map(|k| (k, i))
        })
        .collect();
    cov_cols.sort_unstable();

    struct Partial {
        tau: f64,
        te: Option<f64>,
        x: Vec<f64>,
        events: Vec<EventRecord>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut units: BTreeMap<String, Partial> = BTreeMap::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row_idx + 2;
        let parse = |c: usize| -> Result<Option<f64>> {
            let s = row.get(c).unwrap_or("");
            if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("null") {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    line,
                    msg: format!("'{s}': {e}"),
                })
            }
        };
        let id = row.get(c_id).unwrap_or("").to_string();
        let tau = parse(c_tau)?.ok_or_else(|| Error::Parse {
            line,
            msg: "missing tau".into(),
        })?;
        let te = parse(c_te)?;
        let x = cov_cols
            .iter()
            .map(|&(_, c)| {
                parse(c)?.ok_or_else(|| Error::Parse {
                    line,
                    msg: "missing covariate value".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let event = match (parse(c_time)?, parse(c_risk)?) {
            (Some(t), Some(r)) => Some(EventRecord {
                time: t,
                risk: r as usize,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: "event_time and risk must both be present or both empty".into(),
                })
            }
        };
        let entry = units.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Partial {
                tau,
                te,
                x: x.clone(),
                events: Vec::new(),
            }
        });
        if entry.tau != tau || entry.te != te || entry.x != x {
            return Err(Error::Parse {
                line,
                msg: format!("unit {id}: per-unit fields differ between rows"),
            });
        }
        if let Some(e) = event {
            entry.events.push(e);
        }
    }
    let q = q.unwrap_or_else(|| {
        units
            .values()
            .flat_map(|u| u.events.iter().map(|e| e.risk))
            .max()
            .unwrap_or(1)
    });
    let p = cov_cols.len();
    let histories = order
        .into_iter()
        .map(|id| {
            let mut u = units.remove(&id).expect("unit recorded in order");
            u.events.sort_by(|a, b| a.time.total_cmp(&b.time));
            UnitRecord {
                unit_id: id,
                tau: u.tau,
                te_time: u.te,
                covariates: u.x,
                events: u.events,
            }
            .into_history(q)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(q, p, histories)
}

/// Loads a dataset, choosing the CSV import for `.csv` files.
pub fn load(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(file, None),
        _ => read_jsonl(file),
    }
}

pub fn save(path: &Path, data: &Dataset) -> Result<()> {
    write_jsonl(File::create(path)?, data)
}
