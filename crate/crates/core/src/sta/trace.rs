use std::io::{self, Write};

use super::model::{ChannelId, ComponentId, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    /// Emitting component, `None` when injected from outside the network.
    pub component: Option<ComponentId>,
    pub channel: ChannelId,
    /// Values of the channel's payload variables right after the emission.
    pub payload: Vec<f64>,
}

/// Timestamped record of observed broadcasts of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub events: Vec<TraceEvent>,
    pub time_bound: f64,
    /// Global time when the run stopped.
    pub end_time: f64,
}

impl EventTrace {
    pub fn new(time_bound: f64) -> Self {
        EventTrace {
            events: Vec::new(),
            time_bound,
            end_time: 0.0,
        }
    }

    /// Writes one tab-separated line per event: `time_ms component channel payload`.
    /// Injected events show `env` as component; payload is `name=value` pairs
    /// joined by commas, or `-` when empty.
    pub fn write_tsv<W: Write>(&self, net: &Network, mut out: W) -> io::Result<()> {
        for ev in &self.events {
            let component = match ev.component {
                Some(c) => net.automaton(c).name.as_str(),
                None => "env",
            };
            let ch = net.channel(ev.channel);
            let payload = if ch.payload.is_empty() {
                "-".to_string()
            } else {
                ch.payload
                    .iter()
                    .zip(&ev.payload)
                    .map(|(v, value)| format!("{}={}", net.var_name(*v), value))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            writeln!(out, "{}\t{}\t{}\t{}", ev.time, component, ch.name, payload)?;
        }
        Ok(())
    }
}
