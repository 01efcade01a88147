#![allow(dead_code)]

use netalign::gf::{Elem, PrimeField};
use netalign::netmodel::{InputSlot, Network, NetworkDocument, OutputSlot, SessionDocument};
use netalign::rng::SplitMix64;

/// `m_ij` as a sum over all `S_j -> D_i` paths of the product of the local
/// coefficients met along the path.
pub fn path_sum_transfer(net: &Network, xi: &[Elem]) -> [[Elem; 3]; 3] {
    let f = net.field();
    let idx = net.coefficients();
    let coef = |v, i, o| xi[idx.position(v, i, o).expect("indexed slot")];
    let mut out = [[0; 3]; 3];
    for j in 0..3 {
        let src = net.source(j);
        for i in 0..3 {
            let dst = net.destination(i);
            let mut total = 0;
            let mut stack: Vec<(usize, Elem)> = Vec::new();
            for &e in net.out_edges(src) {
                stack.push((e, coef(src, InputSlot::Inject, OutputSlot::Edge(e))));
            }
            while let Some((e, w)) = stack.pop() {
                let head = net.edges()[e].1;
                if head == dst {
                    total = f.add(
                        total,
                        f.mul(w, coef(head, InputSlot::Edge(e), OutputSlot::Combine)),
                    );
                    continue;
                }
                if net.sessions().iter().any(|&(s, d)| s == head || d == head) {
                    continue;
                }
                for &o in net.out_edges(head) {
                    stack.push((
                        o,
                        f.mul(w, coef(head, InputSlot::Edge(e), OutputSlot::Edge(o))),
                    ));
                }
            }
            out[i][j] = total;
        }
    }
    out
}

/// Random DAG with three sessions, `relays` intermediate nodes and up to
/// `max_edges` edges (parallel edges allowed). Edges only go forward in the
/// order sources, relays, destinations.
pub fn random_dag(
    rng: &mut SplitMix64,
    relays: usize,
    max_edges: usize,
    prime: u64,
) -> NetworkDocument {
    let mut nodes: Vec<String> = (1..=3).map(|i| format!("S{i}")).collect();
    nodes.extend((0..relays).map(|r| format!("r{r}")));
    nodes.extend((1..=3).map(|i| format!("D{i}")));
    let total = nodes.len();
    let edges_wanted = 1 + rng.below(max_edges as u64) as usize;
    let mut edges = Vec::new();
    while edges.len() < edges_wanted {
        let u = rng.below((total - 3) as u64) as usize;
        let lo = (u + 1).max(3);
        if lo >= total {
            continue;
        }
        let v = lo + rng.below((total - lo) as u64) as usize;
        edges.push([nodes[u].clone(), nodes[v].clone()]);
    }
    let sessions = (1..=3)
        .map(|i| SessionDocument {
            source: format!("S{i}"),
            destination: format!("D{i}"),
        })
        .collect();
    NetworkDocument {
        field_prime: prime,
        nodes,
        edges,
        sessions,
    }
}

/// Smallest number of edges whose removal disconnects `from` and `to`,
/// found by trying every edge subset.
pub fn exhaustive_mincut(net: &Network, from: usize, to: usize) -> usize {
    let m = net.edges().len();
    assert!(m <= 20, "exhaustive search over {m} edges");
    let mut best = m;
    for mask in 0u32..(1u32 << m) {
        let cut = mask.count_ones() as usize;
        if cut >= best {
            continue;
        }
        if !reachable(net, from, to, mask) {
            best = cut;
        }
    }
    best
}

fn reachable(net: &Network, from: usize, to: usize, removed: u32) -> bool {
    let mut seen = vec![false; net.nodes().len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        for &e in net.out_edges(v) {
            let w = net.edges()[e].1;
            if removed & (1 << e) == 0 && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

pub fn field(p: u64) -> PrimeField {
    PrimeField::new(p).unwrap()
}
