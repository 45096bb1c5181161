use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::machine::{EventKind, EventRecord, MachineId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Transmission to its reception.
    Signal,
    /// Consecutive events of one machine.
    Succession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceGraph {
    pub nodes: Vec<EventRecord>,
    /// `(from, to, kind)` as indices into `nodes`.
    pub edges: Vec<(usize, usize, EdgeKind)>,
}

/// Nodes in log order; signal edges in transmission order followed by
/// succession edges grouped by machine.
pub fn export_occurrence_graph(log: &[EventRecord]) -> OccurrenceGraph {
    let nodes = log.to_vec();
    let mut edges = Vec::new();

    let rx: HashMap<u64, usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == EventKind::Receive)
        .map(|(i, r)| (r.signal, i))
        .collect();
    for (i, r) in nodes.iter().enumerate() {
        if r.kind == EventKind::Transmit {
            if let Some(&j) = rx.get(&r.signal) {
                edges.push((i, j, EdgeKind::Signal));
            }
        }
    }

    let mut by_machine: BTreeMap<&MachineId, Vec<usize>> = BTreeMap::new();
    for (i, r) in nodes.iter().enumerate() {
        by_machine.entry(&r.machine).or_default().push(i);
    }
    for idx in by_machine.values() {
        for w in idx.windows(2) {
            edges.push((w[0], w[1], EdgeKind::Succession));
        }
    }
    OccurrenceGraph { nodes, edges }
}

impl OccurrenceGraph {
    pub fn signal_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .filter(|e| e.2 == EdgeKind::Signal)
            .map(|e| (e.0, e.1))
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph occurrences {\n  rankdir=BT;\n");
        for (i, r) in self.nodes.iter().enumerate() {
            let kind = match r.kind {
                EventKind::Transmit => "tx",
                EventKind::Receive => "rx",
            };
            let _ = writeln!(
                s,
                "  n{i} [label=\"{} {} {} {}\"];",
                r.machine, kind, r.counterpart, r.reading
            );
        }
        for &(a, b, kind) in &self.edges {
            let style = match kind {
                EdgeKind::Signal => "solid",
                EdgeKind::Succession => "dashed",
            };
            let _ = writeln!(s, "  n{a} -> n{b} [style={style}];");
        }
        s.push_str("}\n");
        s
    }
}
