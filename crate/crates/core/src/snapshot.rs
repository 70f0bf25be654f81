//! Plain-text parameter snapshots.
//!
//! A network snapshot is line oriented:
//!
//! ```text
//! ADVDDPG-NET 1
//! sizes 3 64 64 1
//! output identity            (or: output bounded <low..> | <high..>)
//! layer 0
//! weights <fan_out*fan_in values, row-major>
//! biases <fan_out values>
//! layer 1
//! ...
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so save followed by
//! load reproduces every parameter bit for bit. An agent snapshot starts
//! with `ADVDDPG-AGENT 1`, a `hyperparams <json>` line, and then the four
//! networks in the order actor, critic, target actor, target critic, each
//! introduced by a `net <name>` line. Optimizer moments are not stored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::agent::{ActorCriticAgent, Hyperparams};
use crate::error::{Error, Result};
use crate::nn::{DenseNetwork, OutputKind, ParamBlock};

pub const NET_MAGIC: &str = "ADVDDPG-NET 1";
pub const AGENT_MAGIC: &str = "ADVDDPG-AGENT 1";

const NET_NAMES: [&str; 4] = ["actor", "critic", "target_actor", "target_critic"];

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn net_to_string(net: &DenseNetwork) -> String {
    let mut out = String::new();
    out.push_str(NET_MAGIC);
    out.push('\n');
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "sizes {}", sizes.join(" "));
    match net.output_kind() {
        OutputKind::Identity => out.push_str("output identity\n"),
        OutputKind::Bounded { low, high } => {
            let _ = writeln!(out, "output bounded {} | {}", join(low), join(high));
        }
    }
    for (k, layer) in net.layers().iter().enumerate() {
        let _ = writeln!(out, "layer {k}");
        let _ = writeln!(out, "weights {}", join(&layer.weights));
        let _ = writeln!(out, "biases {}", join(&layer.biases));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.inner.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => return Ok((i + 1, l.trim())),
                None => return Err(Error::Snapshot("unexpected end of input".into())),
            }
        }
    }

    /// Next line, which must start with `keyword`; returns the remainder.
    fn expect(&mut self, keyword: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        let rest = line
            .strip_prefix(keyword)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| Error::Snapshot(format!("line {n}: expected `{keyword}`")))?;
        Ok((n, rest.trim()))
    }
}

fn parse_list<T: FromStr>(line: usize, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| Error::Snapshot(format!("line {line}: cannot parse `{tok}`")))
        })
        .collect()
}

fn parse_net(lines: &mut Lines<'_>) -> Result<DenseNetwork> {
    let (n, magic) = lines.next_line()?;
    if magic != NET_MAGIC {
        return Err(Error::Snapshot(format!(
            "line {n}: expected `{NET_MAGIC}`, found `{magic}`"
        )));
    }
    let (n, sizes) = lines.expect("sizes")?;
    let sizes: Vec<usize> = parse_list(n, sizes)?;
    let (n, output) = lines.expect("output")?;
    let output = if output == "identity" {
        OutputKind::Identity
    } else if let Some(bounds) = output.strip_prefix("bounded") {
        let (low, high) = bounds
            .split_once('|')
            .ok_or_else(|| Error::Snapshot(format!("line {n}: bounded output needs `|`")))?;
        OutputKind::Bounded {
            low: parse_list(n, low)?,
            high: parse_list(n, high)?,
        }
    } else {
        return Err(Error::Snapshot(format!("line {n}: unknown output `{output}`")));
    };
    let mut layers = Vec::new();
    for k in 0..sizes.len().saturating_sub(1) {
        let (n, idx) = lines.expect("layer")?;
        if idx != k.to_string() {
            return Err(Error::Snapshot(format!("line {n}: expected layer {k}")));
        }
        let (n, w) = lines.expect("weights")?;
        let weights = parse_list(n, w)?;
        let (n, b) = lines.expect("biases")?;
        let biases = parse_list(n, b)?;
        layers.push(ParamBlock { weights, biases });
    }
    DenseNetwork::from_layers(&sizes, layers, output)
}

pub fn net_from_str(text: &str) -> Result<DenseNetwork> {
    parse_net(&mut Lines::new(text))
}

pub fn save_net(net: &DenseNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, net_to_string(net)).map_err(|e| Error::io(path, e))
}

pub fn load_net(path: &Path) -> Result<DenseNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    net_from_str(&text)
}

pub fn agent_to_string(agent: &ActorCriticAgent) -> String {
    let mut out = String::new();
    out.push_str(AGENT_MAGIC);
    out.push('\n');
    let hp = serde_json::to_string(agent.hyperparams()).expect("hyperparameters serialize");
    let _ = writeln!(out, "hyperparams {hp}");
    let nets = [
        &agent.actor,
        &agent.critic,
        &agent.target_actor,
        &agent.target_critic,
    ];
    for (name, net) in NET_NAMES.iter().zip(nets) {
        let _ = writeln!(out, "net {name}");
        out.push_str(&net_to_string(net));
    }
    out
}

pub fn agent_from_str(text: &str) -> Result<ActorCriticAgent> {
    let mut lines = Lines::new(text);
    let (n, magic) = lines.next_line()?;
    if magic != AGENT_MAGIC {
        return Err(Error::Snapshot(format!(
            "line {n}: expected `{AGENT_MAGIC}`, found `{magic}`"
        )));
    }
    let (n, hp) = lines.expect("hyperparams")?;
    let hp: Hyperparams = serde_json::from_str(hp)
        .map_err(|e| Error::Snapshot(format!("line {n}: hyperparameters: {e}")))?;
    let mut nets = Vec::with_capacity(4);
    for name in NET_NAMES {
        let (n, found) = lines.expect("net")?;
        if found != name {
            return Err(Error::Snapshot(format!("line {n}: expected net {name}")));
        }
        nets.push(parse_net(&mut lines)?);
    }
    let target_critic = nets.pop().unwrap();
    let target_actor = nets.pop().unwrap();
    let critic = nets.pop().unwrap();
    let actor = nets.pop().unwrap();
    if !target_actor.same_architecture(&actor) || !target_critic.same_architecture(&critic) {
        return Err(Error::Snapshot("target networks differ in shape from online networks".into()));
    }
    let mut agent = ActorCriticAgent::from_networks(actor, critic, hp)?;
    agent.target_actor = target_actor;
    agent.target_critic = target_critic;
    Ok(agent)
}

pub fn save_agent(agent: &ActorCriticAgent, path: &Path) -> Result<()> {
    std::fs::write(path, agent_to_string(agent)).map_err(|e| Error::io(path, e))
}

pub fn load_agent(path: &Path) -> Result<ActorCriticAgent> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    agent_from_str(&text)
}
