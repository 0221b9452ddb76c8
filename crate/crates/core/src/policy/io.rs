//! JSON and DOT renderings of explicit policies.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError, PolicyInput, PolicyOutput, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub input: String,
    pub output: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutomatonDoc {
    pub assoc: usize,
    pub states: Vec<String>,
    pub initial: String,
    pub transitions: Vec<TransitionDoc>,
}

impl From<&Policy> for AutomatonDoc {
    fn from(p: &Policy) -> Self {
        let mut transitions = Vec::with_capacity(p.num_states() * (p.assoc() + 1));
        for s in 0..p.num_states() {
            for i in p.alphabet() {
                transitions.push(TransitionDoc {
                    from: p.label(s).to_string(),
                    input: i.to_string(),
                    output: p.output(s, i).to_string(),
                    to: p.label(p.next(s, i)).to_string(),
                });
            }
        }
        AutomatonDoc {
            assoc: p.assoc(),
            states: p.labels().to_vec(),
            initial: p.label(p.initial()).to_string(),
            transitions,
        }
    }
}

impl TryFrom<AutomatonDoc> for Policy {
    type Error = PolicyError;

    fn try_from(doc: AutomatonDoc) -> Result<Policy> {
        let n = doc.assoc;
        if n == 0 {
            return Err(PolicyError::ZeroAssoc);
        }
        let mut ids = HashMap::with_capacity(doc.states.len());
        for (k, s) in doc.states.iter().enumerate() {
            if ids.insert(s.as_str(), k).is_some() {
                return Err(PolicyError::Format(format!("duplicate state {s:?}")));
            }
        }
        let lookup = |s: &str| {
            ids.get(s)
                .copied()
                .ok_or_else(|| PolicyError::Format(format!("undeclared state {s:?}")))
        };
        let width = n + 1;
        // Complete machines list one transition per state and input, which
        // also bounds the tables allocated below.
        let total = doc.states.len().checked_mul(width);
        if total != Some(doc.transitions.len()) {
            return Err(PolicyError::Format(format!(
                "{} states over {width} inputs need exactly that many transitions each, got {} in total",
                doc.states.len(),
                doc.transitions.len()
            )));
        }
        let total = doc.transitions.len();
        let mut next = vec![usize::MAX; total];
        let mut out = vec![PolicyOutput::NoEvict; total];
        for t in &doc.transitions {
            let from = lookup(&t.from)?;
            let to = lookup(&t.to)?;
            let input: PolicyInput = t.input.parse()?;
            let output: PolicyOutput = t.output.parse()?;
            if !input.fits(n) || !output.fits(n) {
                return Err(PolicyError::InvalidSymbol(format!(
                    "{}/{}",
                    t.input, t.output
                )));
            }
            let slot = from * width + input.index(n);
            if next[slot] != usize::MAX {
                return Err(PolicyError::Format(format!(
                    "state {:?} has two transitions on {}",
                    t.from, t.input
                )));
            }
            next[slot] = to;
            out[slot] = output;
        }
        if let Some(slot) = next.iter().position(|&t| t == usize::MAX) {
            return Err(PolicyError::Format(format!(
                "state {:?} has no transition on {}",
                doc.states[slot / width],
                PolicyInput::from_index(slot % width, n)
            )));
        }
        let initial = lookup(&doc.initial)?;
        Policy::from_tables(n, initial, next, out, doc.states)
    }
}

pub fn to_json(policy: &Policy) -> String {
    serde_json::to_string_pretty(&AutomatonDoc::from(policy)).expect("automaton serializes")
}

pub fn from_json(text: &str) -> Result<Policy> {
    let doc: AutomatonDoc = serde_json::from_str(text)?;
    Policy::try_from(doc)
}

/// Graphviz rendering with `input/output` edge labels; parallel edges between
/// the same pair of states are merged into one comma-separated label.
pub fn to_dot(policy: &Policy) -> String {
    let mut dot = String::from("digraph policy {\n  rankdir=LR;\n  __start [shape=point];\n");
    for s in 0..policy.num_states() {
        let _ = writeln!(dot, "  s{s} [label={:?}];", policy.label(s));
    }
    let _ = writeln!(dot, "  __start -> s{};", policy.initial());
    for s in 0..policy.num_states() {
        let mut edges: Vec<(usize, Vec<String>)> = Vec::new();
        for i in policy.alphabet() {
            let t = policy.next(s, i);
            let label = format!("{}/{}", i, policy.output(s, i));
            match edges.iter_mut().find(|(to, _)| *to == t) {
                Some((_, labels)) => labels.push(label),
                None => edges.push((t, vec![label])),
            }
        }
        for (t, labels) in edges {
            let _ = writeln!(dot, "  s{s} -> s{t} [label=\"{}\"];", labels.join(", "));
        }
    }
    dot.push_str("}\n");
    dot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{build_policy, is_isomorphic, minimize, PolicyKind};

    #[test]
    fn json_round_trip() {
        for kind in [PolicyKind::Lru, PolicyKind::Plru, PolicyKind::SrripHp] {
            let p = minimize(&build_policy(kind, 4).unwrap());
            let back = from_json(&to_json(&p)).unwrap();
            assert!(is_isomorphic(&p, &back));
            assert_eq!(back.labels(), p.labels());
        }
    }

    #[test]
    fn json_schema_fields() {
        let p = minimize(&build_policy(PolicyKind::Lru, 2).unwrap());
        let v: serde_json::Value = serde_json::from_str(&to_json(&p)).unwrap();
        assert_eq!(v["assoc"], 2);
        assert_eq!(v["initial"], "s0");
        assert_eq!(v["states"].as_array().unwrap().len(), 2);
        let t = &v["transitions"][2];
        assert_eq!(t["from"], "s0");
        assert_eq!(t["input"], "E");
        assert_eq!(t["output"], "V0");
    }

    #[test]
    fn rejects_malformed_documents() {
        let base = AutomatonDoc::from(&minimize(&build_policy(PolicyKind::Lru, 2).unwrap()));

        let mut missing = base.clone();
        missing.transitions.pop();
        assert!(Policy::try_from(missing).is_err());

        let mut dup = base.clone();
        dup.transitions.push(dup.transitions[0].clone());
        assert!(Policy::try_from(dup).is_err());

        let mut bad_output = base.clone();
        bad_output.transitions[0].output = "V0".into();
        assert!(matches!(
            Policy::try_from(bad_output),
            Err(PolicyError::OutputCondition { .. })
        ));

        let mut out_of_range = base.clone();
        out_of_range.transitions[2].output = "V9".into();
        assert!(Policy::try_from(out_of_range).is_err());

        let mut bad_initial = base;
        bad_initial.initial = "nowhere".into();
        assert!(Policy::try_from(bad_initial).is_err());

        assert!(from_json("{").is_err());
    }

    #[test]
    fn dot_has_edge_labels() {
        let p = minimize(&build_policy(PolicyKind::Lru, 2).unwrap());
        let dot = to_dot(&p);
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("E/V0"));
        assert!(dot.contains("H1/N"));
    }
}
