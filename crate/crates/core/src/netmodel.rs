//! Three-unicast network model: parsing, validation, the local coding
//! coefficient index and per-session min-cuts.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gf::{GfError, PrimeField};

pub const SESSIONS: usize = 3;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network: {0}")]
    Validation(String),
}

impl From<GfError> for NetError {
    fn from(e: GfError) -> Self {
        NetError::Validation(e.to_string())
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, NetError> {
    Err(NetError::Validation(msg.into()))
}

/// On-disk form of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub field_prime: u64,
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
    pub sessions: Vec<SessionDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionDocument {
    pub source: String,
    pub destination: String,
}

/// Where a coefficient takes its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputSlot {
    /// The source's own message symbol.
    Inject,
    Edge(usize),
}

/// Where a coefficient sends its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputSlot {
    Edge(usize),
    /// The destination's single combined output symbol.
    Combine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coefficient {
    pub node: usize,
    pub input: InputSlot,
    pub output: OutputSlot,
}

/// Enumeration of the local coding coefficients ξ_0..ξ_{s-1}.
///
/// Ordered by topological node position, then input slot (injection first,
/// then in-edges in declaration order), then output slot (out-edges in
/// declaration order, combining last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientIndex {
    entries: Vec<Coefficient>,
    lookup: HashMap<(usize, InputSlot, OutputSlot), usize>,
}

impl CoefficientIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Coefficient] {
        &self.entries
    }

    pub fn get(&self, idx: usize) -> Option<&Coefficient> {
        self.entries.get(idx)
    }

    pub fn position(&self, node: usize, input: InputSlot, output: OutputSlot) -> Option<usize> {
        self.lookup.get(&(node, input, output)).copied()
    }
}

/// What a node does with symbols, with the coefficient indices it uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum NodeRule {
    /// Session source `j`: each out-edge gets `ξ · x_j`.
    Source {
        session: usize,
        outputs: Vec<(usize, usize)>,
    },
    /// Each out-edge gets `Σ ξ · in-edge symbol`; entries are `(out_edge, [(in_edge, coef)])`.
    Relay {
        outputs: Vec<(usize, Vec<(usize, usize)>)>,
    },
    /// Session destination `i`: `y_i = Σ ξ · in-edge symbol`.
    Destination {
        session: usize,
        inputs: Vec<(usize, usize)>,
    },
}

/// A validated DAG carrying three unicast sessions over unit-capacity links.
#[derive(Debug, Clone)]
pub struct Network {
    field: PrimeField,
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    sessions: [(usize, usize); SESSIONS],
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    topo: Vec<usize>,
    index: CoefficientIndex,
    rules: Vec<(usize, NodeRule)>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.field == other.field
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.sessions == other.sessions
    }
}

impl Eq for Network {}

impl Network {
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self, NetError> {
        let field = PrimeField::new(doc.field_prime)?;
        let mut ids = HashMap::new();
        for (i, name) in doc.nodes.iter().enumerate() {
            if ids.insert(name.as_str(), i).is_some() {
                return invalid(format!("duplicate node `{name}`"));
            }
        }
        let node = |name: &str| -> Result<usize, NetError> {
            ids.get(name)
                .copied()
                .ok_or_else(|| NetError::Validation(format!("unknown node `{name}`")))
        };
        let edges = doc
            .edges
            .iter()
            .map(|[t, h]| Ok((node(t)?, node(h)?)))
            .collect::<Result<Vec<_>, NetError>>()?;
        if doc.sessions.len() != SESSIONS {
            return invalid(format!(
                "expected {SESSIONS} sessions, found {}",
                doc.sessions.len()
            ));
        }
        let mut sessions = [(0, 0); SESSIONS];
        for (k, s) in doc.sessions.iter().enumerate() {
            sessions[k] = (node(&s.source)?, node(&s.destination)?);
        }
        Self::build(field, doc.nodes.clone(), edges, sessions)
    }

    fn build(
        field: PrimeField,
        nodes: Vec<String>,
        edges: Vec<(usize, usize)>,
        sessions: [(usize, usize); SESSIONS],
    ) -> Result<Self, NetError> {
        let endpoints: BTreeSet<usize> = sessions.iter().flat_map(|&(s, d)| [s, d]).collect();
        if endpoints.len() != 2 * SESSIONS {
            return invalid("session endpoints must be six distinct nodes");
        }
        let n = nodes.len();
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (e, &(t, h)) in edges.iter().enumerate() {
            out_edges[t].push(e);
            in_edges[h].push(e);
        }
        for (k, &(s, d)) in sessions.iter().enumerate() {
            if !in_edges[s].is_empty() {
                return invalid(format!(
                    "source {} of session {} has incoming edges",
                    nodes[s],
                    k + 1
                ));
            }
            if !out_edges[d].is_empty() {
                return invalid(format!(
                    "destination {} of session {} has outgoing edges",
                    nodes[d],
                    k + 1
                ));
            }
        }

        // Kahn's algorithm, lowest declared node first.
        let mut indeg: Vec<usize> = in_edges.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo.push(v);
            for &e in &out_edges[v] {
                let h = edges[e].1;
                indeg[h] -= 1;
                if indeg[h] == 0 {
                    ready.insert(h);
                }
            }
        }
        if topo.len() != n {
            return invalid("graph contains a cycle");
        }

        let source_of: HashMap<usize, usize> = sessions
            .iter()
            .enumerate()
            .map(|(k, &(s, _))| (s, k))
            .collect();
        let dest_of: HashMap<usize, usize> = sessions
            .iter()
            .enumerate()
            .map(|(k, &(_, d))| (d, k))
            .collect();
        let mut entries = Vec::new();
        let mut rules = Vec::new();
        for &v in &topo {
            if let Some(&k) = source_of.get(&v) {
                let outputs = out_edges[v]
                    .iter()
                    .map(|&e| {
                        entries.push(Coefficient {
                            node: v,
                            input: InputSlot::Inject,
                            output: OutputSlot::Edge(e),
                        });
                        (e, entries.len() - 1)
                    })
                    .collect();
                rules.push((
                    v,
                    NodeRule::Source {
                        session: k,
                        outputs,
                    },
                ));
            } else if let Some(&k) = dest_of.get(&v) {
                let inputs = in_edges[v]
                    .iter()
                    .map(|&e| {
                        entries.push(Coefficient {
                            node: v,
                            input: InputSlot::Edge(e),
                            output: OutputSlot::Combine,
                        });
                        (e, entries.len() - 1)
                    })
                    .collect();
                rules.push((v, NodeRule::Destination { session: k, inputs }));
            } else if !in_edges[v].is_empty() && !out_edges[v].is_empty() {
                let mut per_out: Vec<(usize, Vec<(usize, usize)>)> =
                    out_edges[v].iter().map(|&o| (o, Vec::new())).collect();
                for &i in &in_edges[v] {
                    for (o, terms) in per_out.iter_mut() {
                        entries.push(Coefficient {
                            node: v,
                            input: InputSlot::Edge(i),
                            output: OutputSlot::Edge(*o),
                        });
                        terms.push((i, entries.len() - 1));
                    }
                }
                rules.push((v, NodeRule::Relay { outputs: per_out }));
            }
        }
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(k, c)| ((c.node, c.input, c.output), k))
            .collect();
        Ok(Network {
            field,
            nodes,
            edges,
            sessions,
            in_edges,
            out_edges,
            topo,
            index: CoefficientIndex { entries, lookup },
            rules,
        })
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            field_prime: self.field.modulus(),
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(t, h)| [self.nodes[t].clone(), self.nodes[h].clone()])
                .collect(),
            sessions: self
                .sessions
                .iter()
                .map(|&(s, d)| SessionDocument {
                    source: self.nodes[s].clone(),
                    destination: self.nodes[d].clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }

    /// Key-sorted, whitespace-free JSON of the network.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self.to_document()).expect("document serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// Hex SHA-256 of [`Network::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    /// Same topology over a different field.
    pub fn with_field(&self, field: PrimeField) -> Network {
        Network {
            field,
            ..self.clone()
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_id(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn sessions(&self) -> &[(usize, usize); SESSIONS] {
        &self.sessions
    }

    pub fn source(&self, session: usize) -> usize {
        self.sessions[session].0
    }

    pub fn destination(&self, session: usize) -> usize {
        self.sessions[session].1
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn coefficients(&self) -> &CoefficientIndex {
        &self.index
    }

    /// Number of coefficient variables `s`.
    pub fn num_coefficients(&self) -> usize {
        self.index.len()
    }

    pub(crate) fn rules(&self) -> &[(usize, NodeRule)] {
        &self.rules
    }

    /// Longest path, in edges, from `from` to `to`; `None` if unreachable.
    pub fn longest_path(&self, from: usize, to: usize) -> Option<usize> {
        let mut dist: Vec<Option<usize>> = vec![None; self.nodes.len()];
        dist[from] = Some(0);
        for &v in &self.topo {
            let Some(d) = dist[v] else { continue };
            for &e in &self.out_edges[v] {
                let h = self.edges[e].1;
                dist[h] = Some(dist[h].map_or(d + 1, |x| x.max(d + 1)));
            }
        }
        dist[to]
    }

    /// Longest path anywhere in the graph, in edges.
    pub fn longest_path_overall(&self) -> usize {
        let mut dist = vec![0usize; self.nodes.len()];
        for &v in &self.topo {
            for &e in &self.out_edges[v] {
                let h = self.edges[e].1;
                dist[h] = dist[h].max(dist[v] + 1);
            }
        }
        dist.into_iter().max().unwrap_or(0)
    }

    /// Max-flow value from `from` to `to` with unit edge capacities.
    pub fn max_flow(&self, from: usize, to: usize) -> usize {
        max_flow_unit(self.nodes.len(), &self.edges, from, to)
    }

    /// Sessions whose min-cut exceeds one; the scheme still targets a single unit for them.
    pub fn sessions_above_unit_mincut(&self) -> Vec<usize> {
        (0..SESSIONS).filter(|&k| mincut(self, k) > 1).collect()
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} nodes, {} edges, s = {}, {}",
            self.nodes.len(),
            self.edges.len(),
            self.index.len(),
            self.field
        )
    }
}

/// Edmonds-Karp on a unit-capacity multigraph.
fn max_flow_unit(n: usize, edges: &[(usize, usize)], from: usize, to: usize) -> usize {
    if from == to {
        return 0;
    }
    // residual arcs: 2e forward, 2e+1 backward
    let mut cap: Vec<u8> = Vec::with_capacity(edges.len() * 2);
    let mut head = Vec::with_capacity(edges.len() * 2);
    let mut adj = vec![Vec::new(); n];
    for (e, &(t, h)) in edges.iter().enumerate() {
        cap.push(1);
        head.push(h);
        cap.push(0);
        head.push(t);
        adj[t].push(2 * e);
        adj[h].push(2 * e + 1);
    }
    let mut flow = 0;
    loop {
        let mut via: Vec<Option<usize>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for &a in &adj[v] {
                let w = head[a];
                if cap[a] > 0 && !seen[w] {
                    seen[w] = true;
                    via[w] = Some(a);
                    queue.push_back(w);
                }
            }
        }
        if !seen[to] {
            return flow;
        }
        let mut v = to;
        while let Some(a) = via[v] {
            cap[a] -= 1;
            cap[a ^ 1] += 1;
            v = head[a ^ 1];
        }
        flow += 1;
    }
}

/// Min-cut of session `session` (0-based).
pub fn mincut(net: &Network, session: usize) -> usize {
    let (s, d) = net.sessions[session];
    net.max_flow(s, d)
}

pub fn mincuts(net: &Network) -> [usize; SESSIONS] {
    [0, 1, 2].map(|k| mincut(net, k))
}

pub fn coefficient_index(net: &Network) -> &CoefficientIndex {
    net.coefficients()
}

pub fn parse_network(text: &str) -> Result<Network, NetError> {
    Network::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(nodes: &[&str], edges: &[(&str, &str)], sessions: [(&str, &str); 3]) -> String {
        let d = NetworkDocument {
            field_prime: 65537,
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| [a.to_string(), b.to_string()])
                .collect(),
            sessions: sessions
                .iter()
                .map(|(s, d)| SessionDocument {
                    source: s.to_string(),
                    destination: d.to_string(),
                })
                .collect(),
        };
        serde_json::to_string(&d).unwrap()
    }

    const MIN_NODES: [&str; 6] = ["S1", "D1", "S2", "D2", "S3", "D3"];
    const SESS: [(&str, &str); 3] = [("S1", "D1"), ("S2", "D2"), ("S3", "D3")];

    #[test]
    fn minimal_network() {
        let net = Network::parse(&doc(
            &MIN_NODES,
            &[("S1", "D1"), ("S2", "D2"), ("S3", "D3")],
            SESS,
        ))
        .unwrap();
        assert_eq!(net.num_coefficients(), 6);
        assert_eq!(mincuts(&net), [1, 1, 1]);
    }

    #[test]
    fn rejects_destination_out_edge_and_cycles() {
        let err = Network::parse(&doc(
            &MIN_NODES,
            &[("S1", "D1"), ("S2", "D2"), ("S3", "D3"), ("D1", "S1")],
            SESS,
        ))
        .unwrap_err();
        assert!(matches!(err, NetError::Validation(_)));

        let mut nodes = MIN_NODES.to_vec();
        nodes.extend(["a", "b"]);
        let err = Network::parse(&doc(
            &nodes,
            &[("S1", "a"), ("a", "b"), ("b", "a"), ("a", "D1")],
            SESS,
        ))
        .unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(Network::parse("{"), Err(NetError::Parse(_))));
        // dangling endpoint
        let err = Network::parse(&doc(&MIN_NODES, &[("S1", "X")], SESS)).unwrap_err();
        assert!(err.to_string().contains("unknown node"));
        // two sessions
        let text = doc(&MIN_NODES, &[], SESS).replace(r#",{"source":"S3","destination":"D3"}"#, "");
        assert!(Network::parse(&text)
            .unwrap_err()
            .to_string()
            .contains("3 sessions"));
        // shared endpoints
        let err = Network::parse(&doc(
            &MIN_NODES,
            &[],
            [("S1", "D1"), ("S1", "D2"), ("S3", "D3")],
        ))
        .unwrap_err();
        assert!(err.to_string().contains("distinct"));
        // non-prime field
        let text = doc(&MIN_NODES, &[], SESS).replace("65537", "65535");
        assert!(matches!(
            Network::parse(&text),
            Err(NetError::Validation(_))
        ));
        // duplicate node
        let mut nodes = MIN_NODES.to_vec();
        nodes.push("S1");
        assert!(Network::parse(&doc(&nodes, &[], SESS)).is_err());
    }

    #[test]
    fn line_network_index() {
        let mut nodes = MIN_NODES.to_vec();
        nodes.push("a");
        let net = Network::parse(&doc(&nodes, &[("S1", "a"), ("a", "D1")], SESS)).unwrap();
        let s1 = net.node_id("S1").unwrap();
        let a = net.node_id("a").unwrap();
        let d1 = net.node_id("D1").unwrap();
        let idx = net.coefficients();
        assert_eq!(idx.len(), 3);
        assert_eq!(
            idx.entries(),
            &[
                Coefficient {
                    node: s1,
                    input: InputSlot::Inject,
                    output: OutputSlot::Edge(0)
                },
                Coefficient {
                    node: a,
                    input: InputSlot::Edge(0),
                    output: OutputSlot::Edge(1)
                },
                Coefficient {
                    node: d1,
                    input: InputSlot::Edge(1),
                    output: OutputSlot::Combine
                },
            ]
        );
        assert_eq!(mincut(&net, 0), 1);
        assert_eq!(mincut(&net, 1), 0);
    }

    #[test]
    fn two_by_two_node_contributes_four() {
        let mut nodes = MIN_NODES.to_vec();
        nodes.push("m");
        let net = Network::parse(&doc(
            &nodes,
            &[("S1", "m"), ("S2", "m"), ("m", "D1"), ("m", "D2")],
            SESS,
        ))
        .unwrap();
        let m = net.node_id("m").unwrap();
        let at_m = net
            .coefficients()
            .entries()
            .iter()
            .filter(|c| c.node == m)
            .count();
        assert_eq!(at_m, 4);
        // 2 injections + 4 relay + 2 combines
        assert_eq!(net.num_coefficients(), 8);
    }

    #[test]
    fn parallel_edges_are_distinct_slots() {
        let net = Network::parse(&doc(&MIN_NODES, &[("S1", "D1"), ("S1", "D1")], SESS)).unwrap();
        assert_eq!(net.num_coefficients(), 4);
        assert_eq!(mincut(&net, 0), 2);
        assert_eq!(net.sessions_above_unit_mincut(), vec![0]);
    }

    #[test]
    fn index_is_a_bijection() {
        let mut nodes = MIN_NODES.to_vec();
        nodes.extend(["a", "b"]);
        let net = Network::parse(&doc(
            &nodes,
            &[
                ("S1", "a"),
                ("S2", "a"),
                ("a", "b"),
                ("a", "D1"),
                ("b", "D2"),
                ("b", "D3"),
                ("S3", "b"),
            ],
            SESS,
        ))
        .unwrap();
        let idx = net.coefficients();
        for (k, c) in idx.entries().iter().enumerate() {
            assert_eq!(idx.position(c.node, c.input, c.output), Some(k));
        }
        let distinct: BTreeSet<_> = idx
            .entries()
            .iter()
            .map(|c| (c.node, c.input, c.output))
            .collect();
        assert_eq!(distinct.len(), idx.len());
    }

    #[test]
    fn digest_ignores_formatting() {
        let text = doc(
            &MIN_NODES,
            &[("S1", "D1"), ("S2", "D2"), ("S3", "D3")],
            SESS,
        );
        let a = Network::parse(&text).unwrap();
        let pretty = serde_json::to_string_pretty(
            &serde_json::from_str::<serde_json::Value>(&text).unwrap(),
        )
        .unwrap();
        let b = Network::parse(&pretty).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let c = a.with_field(PrimeField::new(5).unwrap());
        assert_ne!(a.digest(), c.digest());
    }
}
