//! Stable text reports and DOT output.
//!
//! Reports are `key: value` lines followed by a one-line machine-readable
//! JSON block. Key order is insertion order and JSON keys are sorted, so
//! output is byte-stable for a fixed input; the only non-deterministic field
//! is `wall_ms`, which callers append last so tooling can strip it.

use crate::ergodic::ReachabilityGraph;
use crate::gamble::StateSpace;

/// Ordered key/value report with a machine block.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    fields: Vec<(String, String)>,
    machine: serde_json::Map<String, serde_json::Value>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        let mut report = Self::default();
        report.field("command", command);
        report
    }

    /// Appends a human-readable line and mirrors it into the machine block.
    pub fn field(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        self.machine.insert(key.to_string(), serde_json::Value::String(value.clone()));
        self.fields.push((key.to_string(), value));
        self
    }

    /// Appends a human-readable line only.
    pub fn line(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    /// Sets a structured value in the machine block only.
    pub fn machine(&mut self, key: &str, value: serde_json::Value) -> &mut Self {
        self.machine.insert(key.to_string(), value);
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out.push_str("machine: ");
        out.push_str(
            &serde_json::to_string(&serde_json::Value::Object(self.machine.clone()))
                .expect("machine block serialises"),
        );
        out.push('\n');
        out
    }
}

/// Content digest of the model document (FNV-1a, 64 bit). Stable across
/// runs; not cryptographic.
pub fn model_digest(text: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("fnv1a:{hash:016x}")
}

fn quote(label: &str) -> String {
    format!("\"{}\"", label.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT rendering of the upper-reachability graph: one node per state in
/// state order, one edge per graph edge in (source, target) order, and
/// doubled peripheries on the members of the top class. Byte-stable.
pub fn dot_graph(space: &StateSpace, graph: &ReachabilityGraph, top_class: &[usize]) -> String {
    let mut out = String::from("digraph reachability {\n    rankdir=LR;\n");
    for (i, label) in space.labels().iter().enumerate() {
        if top_class.contains(&i) {
            out.push_str(&format!("    {} [peripheries=2];\n", quote(label)));
        } else {
            out.push_str(&format!("    {};\n", quote(label)));
        }
    }
    for from in 0..graph.n() {
        for &to in graph.edges_from(from) {
            out.push_str(&format!(
                "    {} -> {};\n",
                quote(space.label(from)),
                quote(space.label(to))
            ));
        }
    }
    out.push_str("}\n");
    out
}
