mod common;

use common::{field, random_dag};
use netalign::gf::{fp_inv, mat_rank, mat_solve, FieldMatrix, GfError, PrimeField};
use netalign::netmodel::Network;
use netalign::rng::SplitMix64;
use proptest::prelude::*;

const PRIMES: [u64; 5] = [3, 7, 101, 65537, 2147483647];

fn prime() -> impl Strategy<Value = PrimeField> {
    prop::sample::select(PRIMES.to_vec()).prop_map(field)
}

fn matrix(f: PrimeField, rows: usize, cols: usize, seed: u64) -> FieldMatrix {
    let mut rng = SplitMix64::new(seed);
    FieldMatrix::from_vec(f, rows, cols, rng.elems(&f, rows * cols)).unwrap()
}

proptest! {
    #[test]
    fn inverse_is_an_involution(f in prime(), raw in any::<u64>()) {
        let a = f.reduce(raw);
        if a == 0 {
            prop_assert_eq!(fp_inv(a, &f), Err(GfError::ZeroInverse));
        } else {
            let inv = fp_inv(a, &f).unwrap();
            prop_assert_eq!(f.mul(a, inv), 1);
            prop_assert_eq!(fp_inv(inv, &f).unwrap(), a);
        }
    }

    #[test]
    fn field_operations_agree_with_integers(raw_a in any::<u64>(), raw_b in any::<u64>(), f in prime()) {
        let p = f.modulus() as u128;
        let (a, b) = (f.reduce(raw_a), f.reduce(raw_b));
        prop_assert_eq!(f.add(a, b) as u128, (a as u128 + b as u128) % p);
        prop_assert_eq!(f.mul(a, b) as u128, (a as u128 * b as u128) % p);
        prop_assert_eq!(f.add(f.sub(a, b), b), a);
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
    }

    #[test]
    fn solve_multiplies_back(f in prime(), n in 1usize..6, k in 1usize..4, seed in any::<u64>()) {
        let a = matrix(f, n, n, seed);
        let y = matrix(f, n, k, seed ^ 1);
        match mat_solve(&a, &y) {
            Ok(x) => prop_assert_eq!(a.mul(&x).unwrap(), y),
            Err(GfError::Singular) => prop_assert!(mat_rank(&a) < n),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn rank_survives_row_operations(
        f in prime(), rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(),
        r1 in 0usize..6, r2 in 0usize..6, c in 1u64..1000,
    ) {
        let m = matrix(f, rows, cols, seed);
        let (r1, r2) = (r1 % rows, r2 % rows);
        let scale = f.reduce(c).max(1);
        let mut out = m.to_rows();
        if r1 == r2 {
            out[r1] = out[r1].iter().map(|&v| f.mul(v, scale)).collect();
        } else {
            let src = out[r2].clone();
            out[r1] = out[r1].iter().zip(&src).map(|(&a, &b)| f.add(a, f.mul(scale, b))).collect();
            out.swap(r1, r2);
        }
        let moved = FieldMatrix::from_rows(f, &out).unwrap();
        prop_assert_eq!(mat_rank(&moved), mat_rank(&m));
        prop_assert_eq!(mat_rank(&m.transpose()), mat_rank(&m));
    }

    #[test]
    fn inverse_round_trips(f in prime(), n in 1usize..6, seed in any::<u64>()) {
        let a = matrix(f, n, n, seed);
        if let Ok(inv) = a.inverse() {
            prop_assert_eq!(a.mul(&inv).unwrap(), FieldMatrix::identity(f, n));
            prop_assert_ne!(a.determinant().unwrap(), 0);
        } else {
            prop_assert_eq!(a.determinant().unwrap(), 0);
        }
    }

    #[test]
    fn networks_round_trip_through_json(seed in any::<u64>(), relays in 0usize..5) {
        let mut rng = SplitMix64::new(seed);
        let doc = random_dag(&mut rng, relays, 16, 101);
        let net = Network::from_document(&doc).unwrap();
        let back = Network::parse(&net.to_json()).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(back.digest(), net.digest());
        prop_assert_eq!(back.num_coefficients(), net.num_coefficients());
        let pretty = serde_json::to_string_pretty(&net.to_document()).unwrap();
        prop_assert_eq!(Network::parse(&pretty).unwrap().digest(), net.digest());
    }
}
