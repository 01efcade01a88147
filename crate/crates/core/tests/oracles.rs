mod common;

use common::{exhaustive_mincut, field, path_sum_transfer, random_dag};
use netalign::align::{build_blocks, SymbolExtension};
use netalign::fixtures;
use netalign::gf::{Elem, FieldMatrix, PrimeField};
use netalign::netmodel::{mincut, Network};
use netalign::rng::SplitMix64;
use netalign::sim::{block_model_output, propagate};
use netalign::transfer::{evaluate_transfer, rank_probe, NetworkModel, TransferModel};

fn all_fixtures() -> Vec<(&'static str, Network)> {
    vec![
        ("bottleneck", fixtures::bottleneck()),
        ("dualrelay", fixtures::dualrelay()),
        ("partial", fixtures::partial()),
    ]
}

#[test]
fn coefficient_counts() {
    let counts: Vec<usize> = all_fixtures()
        .iter()
        .map(|(_, n)| n.num_coefficients())
        .collect();
    assert_eq!(counts, vec![12, 33, 25]);
}

#[test]
fn transfer_matches_path_enumeration() {
    for (name, net) in all_fixtures() {
        let f = net.field();
        let mut rng = SplitMix64::derive(1, name, 0);
        for _ in 0..100 {
            let xi = rng.elems(&f, net.num_coefficients());
            let eval = evaluate_transfer(&net, &xi).unwrap();
            assert_eq!(eval.values, path_sum_transfer(&net, &xi), "{name}");
        }
    }
}

#[test]
fn transfer_matches_path_enumeration_on_random_dags() {
    let mut rng = SplitMix64::new(77);
    for _ in 0..50 {
        let doc = random_dag(&mut rng, 3, 14, 101);
        let Ok(net) = Network::from_document(&doc) else {
            continue;
        };
        for _ in 0..10 {
            let xi = rng.elems(&net.field(), net.num_coefficients());
            assert_eq!(
                evaluate_transfer(&net, &xi).unwrap().values,
                path_sum_transfer(&net, &xi)
            );
        }
    }
}

#[test]
fn mincut_matches_exhaustive_cuts() {
    for (name, net) in all_fixtures() {
        for s in 0..3 {
            assert_eq!(mincut(&net, s), 1, "{name} session {}", s + 1);
            assert_eq!(
                mincut(&net, s),
                exhaustive_mincut(&net, net.source(s), net.destination(s))
            );
        }
    }
    let mut rng = SplitMix64::new(2024);
    let mut checked = 0;
    while checked < 50 {
        let doc = random_dag(&mut rng, 3, 12, 101);
        let net = Network::from_document(&doc).expect("generator emits valid networks");
        for s in 0..3 {
            assert_eq!(
                mincut(&net, s),
                exhaustive_mincut(&net, net.source(s), net.destination(s)),
                "{doc:?}"
            );
        }
        checked += 1;
    }
}

/// Determinant by cofactor expansion along the first row.
fn cofactor_det(f: &PrimeField, m: &[Vec<Elem>]) -> Elem {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    let mut total = 0;
    for c in 0..n {
        if m[0][c] == 0 {
            continue;
        }
        let minor: Vec<Vec<Elem>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != c)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        let term = f.mul(m[0][c], cofactor_det(f, &minor));
        total = if c % 2 == 0 {
            f.add(total, term)
        } else {
            f.sub(total, term)
        };
    }
    total
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect())
        .collect()
}

/// Rank as the size of the largest nonvanishing minor.
fn minor_rank(f: &PrimeField, m: &FieldMatrix) -> usize {
    for k in (1..=m.rows().min(m.cols())).rev() {
        for rs in subsets(m.rows(), k) {
            for cs in subsets(m.cols(), k) {
                let sub: Vec<Vec<Elem>> = rs
                    .iter()
                    .map(|&r| cs.iter().map(|&c| m.get(r, c)).collect())
                    .collect();
                if cofactor_det(f, &sub) != 0 {
                    return k;
                }
            }
        }
    }
    0
}

#[test]
fn rank_matches_minor_oracle() {
    let f = field(101);
    let mut rng = SplitMix64::new(5);
    for _ in 0..300 {
        let rows = 1 + rng.below(5) as usize;
        let cols = 1 + rng.below(5) as usize;
        // product of thin factors gives a spread of ranks
        let inner = 1 + rng.below(5) as usize;
        let a = FieldMatrix::from_vec(f, rows, inner, rng.elems(&f, rows * inner)).unwrap();
        let b = FieldMatrix::from_vec(f, inner, cols, rng.elems(&f, inner * cols)).unwrap();
        let m = a.mul(&b).unwrap();
        assert_eq!(m.rank(), minor_rank(&f, &m), "{m:?}");
    }
}

#[test]
fn propagation_matches_block_model() {
    for (name, net) in all_fixtures() {
        let f = net.field();
        let model = NetworkModel::new(&net);
        let mut rng = SplitMix64::derive(3, name, 0);
        for t in 0..100 {
            let n = 1 + t % 3;
            let ext = SymbolExtension::random(n, f, model.num_vars(), &mut rng).unwrap();
            let inputs: [Vec<Elem>; 3] = std::array::from_fn(|_| rng.elems(&f, 2 * n + 1));
            let blocks = build_blocks(&model, &ext);
            assert_eq!(
                propagate(&net, &ext, &inputs).unwrap(),
                block_model_output(&blocks, &inputs),
                "{name}"
            );
        }
    }
}

#[test]
fn propagation_is_linear() {
    let net = fixtures::dualrelay();
    let f = net.field();
    let mut rng = SplitMix64::new(8);
    for _ in 0..20 {
        let ext = SymbolExtension::random(2, f, net.num_coefficients(), &mut rng).unwrap();
        let x: [Vec<Elem>; 3] = std::array::from_fn(|_| rng.elems(&f, 5));
        let y: [Vec<Elem>; 3] = std::array::from_fn(|_| rng.elems(&f, 5));
        let c = rng.next_elem(&f);
        let combo: [Vec<Elem>; 3] = std::array::from_fn(|j| {
            x[j].iter()
                .zip(&y[j])
                .map(|(&a, &b)| f.add(f.mul(c, a), b))
                .collect()
        });
        let px = propagate(&net, &ext, &x).unwrap();
        let py = propagate(&net, &ext, &y).unwrap();
        let pc = propagate(&net, &ext, &combo).unwrap();
        for i in 0..3 {
            let expect: Vec<Elem> = px[i]
                .iter()
                .zip(&py[i])
                .map(|(&a, &b)| f.add(f.mul(c, a), b))
                .collect();
            assert_eq!(pc[i], expect);
        }
    }
}

#[test]
fn removing_edges_never_raises_rank() {
    let partial = fixtures::partial();
    let dual = fixtures::dualrelay();
    for seed in 0..5 {
        let rp = rank_probe(&NetworkModel::new(&partial), 8, seed);
        let rd = rank_probe(&NetworkModel::new(&dual), 8, seed);
        assert!(rp <= rd, "partial {rp} > dualrelay {rd}");
    }
    assert_eq!(
        rank_probe(&NetworkModel::new(&fixtures::bottleneck()), 8, 0),
        1
    );
    assert_eq!(rank_probe(&NetworkModel::new(&dual), 8, 0), 3);
}
