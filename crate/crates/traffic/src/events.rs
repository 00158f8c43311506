//! Line-delimited episode event log: spawn / exit / collision / signal
//! change records, written for the replay oracle.

use crate::sim::CollisionEvent;
use crate::signal::{Indication, IntervalKind};
use crate::{Result, TrafficError};

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Spawn {
        t: f64,
        vehicle: u64,
        movement: usize,
        ignores_foes: bool,
    },
    Exit {
        t: f64,
        vehicle: u64,
    },
    Collision(Box<CollisionEvent>),
    SignalChange {
        t: f64,
        phase: usize,
        interval: IntervalKind,
        /// Post-override per-movement indication codes.
        codes: String,
    },
}

fn interval_code(i: IntervalKind) -> &'static str {
    match i {
        IntervalKind::Green => "green",
        IntervalKind::Yellow => "yellow",
        IntervalKind::AllRed => "all_red",
    }
}

fn parse_interval(s: &str) -> Result<IntervalKind> {
    match s {
        "green" => Ok(IntervalKind::Green),
        "yellow" => Ok(IntervalKind::Yellow),
        "all_red" => Ok(IntervalKind::AllRed),
        other => Err(TrafficError::Config(format!("bad interval code {other:?}"))),
    }
}

impl Event {
    pub fn to_line(&self) -> String {
        match self {
            Event::Spawn {
                t,
                vehicle,
                movement,
                ignores_foes,
            } => format!("spawn,{t},{vehicle},{movement},{}", u8::from(*ignores_foes)),
            Event::Exit { t, vehicle } => format!("exit,{t},{vehicle}"),
            Event::Collision(c) => format!(
                "collision,{},{},{},{},{},{},{},{},{}",
                c.time_s,
                c.vehicle_a,
                c.vehicle_b,
                c.movement_a,
                c.movement_b,
                c.offset_a_m,
                c.offset_b_m,
                c.entered_on_a.code(),
                c.entered_on_b.code()
            ),
            Event::SignalChange {
                t,
                phase,
                interval,
                codes,
            } => format!("signal,{t},{phase},{},{codes}", interval_code(*interval)),
        }
    }

    pub fn from_line(line: &str) -> Result<Event> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let bad = || TrafficError::Config(format!("malformed event line {line:?}"));
        let f = |i: usize| -> Result<&str> { fields.get(i).copied().ok_or_else(bad) };
        let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| bad()) };
        let int = |i: usize| -> Result<u64> { f(i)?.parse().map_err(|_| bad()) };
        match *fields.first().ok_or_else(bad)? {
            "spawn" => Ok(Event::Spawn {
                t: num(1)?,
                vehicle: int(2)?,
                movement: int(3)? as usize,
                ignores_foes: f(4)? == "1",
            }),
            "exit" => Ok(Event::Exit {
                t: num(1)?,
                vehicle: int(2)?,
            }),
            "collision" => {
                let code = |i: usize| -> Result<Indication> {
                    let s = f(i)?;
                    s.chars()
                        .next()
                        .and_then(Indication::from_code)
                        .ok_or_else(bad)
                };
                Ok(Event::Collision(Box::new(CollisionEvent {
                    time_s: num(1)?,
                    vehicle_a: int(2)?,
                    vehicle_b: int(3)?,
                    movement_a: int(4)? as usize,
                    movement_b: int(5)? as usize,
                    offset_a_m: num(6)?,
                    offset_b_m: num(7)?,
                    entered_on_a: code(8)?,
                    entered_on_b: code(9)?,
                })))
            }
            "signal" => Ok(Event::SignalChange {
                t: num(1)?,
                phase: int(2)? as usize,
                interval: parse_interval(f(3)?)?,
                codes: f(4)?.to_string(),
            }),
            _ => Err(bad()),
        }
    }
}

/// Serializes an event stream with a self-describing header line.
pub fn write_log(scenario: &str, seed: u64, events: &[Event]) -> String {
    let mut out = format!("# tsc-events v1 scenario={scenario} seed={seed}\n");
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

pub struct ParsedLog {
    pub scenario: String,
    pub seed: u64,
    pub events: Vec<Event>,
}

pub fn parse_log(text: &str) -> Result<ParsedLog> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| TrafficError::Config("empty event log".into()))?;
    let mut scenario = String::new();
    let mut seed = 0u64;
    if !header.starts_with("# tsc-events v1") {
        return Err(TrafficError::Config("missing event log header".into()));
    }
    for part in header.split_whitespace() {
        if let Some(v) = part.strip_prefix("scenario=") {
            scenario = v.to_string();
        } else if let Some(v) = part.strip_prefix("seed=") {
            seed = v
                .parse()
                .map_err(|_| TrafficError::Config("bad seed in event log header".into()))?;
        }
    }
    let events = lines
        .filter(|l| !l.is_empty())
        .map(Event::from_line)
        .collect::<Result<Vec<_>>>()?;
    Ok(ParsedLog {
        scenario,
        seed,
        events,
    })
}
