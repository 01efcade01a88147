mod common;

use common::{field, path_sum_transfer};
use netalign::fixtures;
use netalign::gf::{Elem, PrimeField, DEFAULT_PRIME};
use netalign::rng::SplitMix64;
use netalign::transfer::{
    analyze, asymmetry_certificate, classify, classify_detailed, cycle_products,
    proportionality_test, ratio_constancy_test, schwartz_zippel_bound, triviality_test, Assumption,
    CaseTag, NetworkModel, TestConfig, TransferError, TransferMatrix, TransferModel, VerdictKind,
    Virtualized,
};

/// Hand-built transfer functions: diagonal `x0, x1, x2`, off-diagonal
/// entries `x3..x8`, with optional overrides.
struct Engineered {
    field: PrimeField,
    build: fn(&PrimeField, &[Elem]) -> TransferMatrix,
    degree: usize,
}

impl TransferModel for Engineered {
    fn field(&self) -> PrimeField {
        self.field
    }
    fn num_vars(&self) -> usize {
        9
    }
    fn evaluate(&self, x: &[Elem]) -> TransferMatrix {
        (self.build)(&self.field, x)
    }
    fn degree_bound(&self, _: usize, _: usize) -> usize {
        self.degree
    }
}

fn generic(_: &PrimeField, x: &[Elem]) -> TransferMatrix {
    [[x[0], x[3], x[4]], [x[5], x[1], x[6]], [x[7], x[8], x[2]]]
}

/// `m12 = 5 m11`, so (A1) fails for the pair (1,2).
fn proportional(f: &PrimeField, x: &[Elem]) -> TransferMatrix {
    let mut m = generic(f, x);
    m[0][1] = f.mul(5, x[0]);
    m
}

/// `m11 = m12 m31` and `m32 = 1`, so `m11 m32 / (m12 m31)` is identically 1.
fn symmetric_a2(f: &PrimeField, x: &[Elem]) -> TransferMatrix {
    let mut m = generic(f, x);
    m[0][0] = f.mul(x[3], x[7]);
    m[2][1] = 1;
    m
}

fn engineered(build: fn(&PrimeField, &[Elem]) -> TransferMatrix) -> Engineered {
    Engineered {
        field: field(DEFAULT_PRIME),
        build,
        degree: 2,
    }
}

#[test]
fn zero_entry_of_partial_is_likely_zero() {
    let net = fixtures::partial();
    let model = NetworkModel::new(&net);
    let v = triviality_test(&model, 0, 1, 32, 0);
    assert_eq!(v.kind, VerdictKind::LikelyZero);
    let expected = schwartz_zippel_bound(model.degree_bound(0, 1), DEFAULT_PRIME, 32);
    assert_eq!(v.error_bound, Some(expected));
    assert!(expected > 0.0 && expected < 1e-200);
    // every other entry has a witness, confirmed by the path-sum oracle
    for i in 0..3 {
        for j in 0..3 {
            if (i, j) == (0, 1) {
                continue;
            }
            let v = triviality_test(&model, i, j, 32, 0);
            assert_eq!(v.kind, VerdictKind::CertifiedNonzero, "({i},{j})");
            assert_ne!(path_sum_transfer(&net, &v.witness[0])[i][j], 0);
        }
    }
}

#[test]
fn error_bound_is_geometric() {
    let p = 101;
    let b1 = schwartz_zippel_bound(3, p, 1);
    assert!((b1 - 3.0 / 101.0).abs() < 1e-15);
    assert!((schwartz_zippel_bound(3, p, 4) - b1.powi(4)).abs() < 1e-15);
    assert_eq!(schwartz_zippel_bound(200, p, 4), 1.0);
    assert!(schwartz_zippel_bound(5, DEFAULT_PRIME, 10_000) > 0.0);
}

#[test]
fn bottleneck_pairs_are_distinct() {
    let net = fixtures::bottleneck();
    let model = NetworkModel::new(&net);
    let f = net.field();
    for (i, j) in [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)] {
        let v = proportionality_test(&model, i, j, 32, 0).unwrap();
        assert_eq!(v.kind, VerdictKind::CertifiedDistinct);
        let a = path_sum_transfer(&net, &v.witness[0]);
        let b = path_sum_transfer(&net, &v.witness[1]);
        assert_ne!(f.mul(a[i][i], b[i][j]), f.mul(b[i][i], a[i][j]));
    }
    assert!(matches!(
        proportionality_test(&model, 1, 1, 32, 0),
        Err(TransferError::PreconditionViolated(_))
    ));
    let partial = fixtures::partial();
    assert!(matches!(
        proportionality_test(&NetworkModel::new(&partial), 0, 1, 32, 0),
        Err(TransferError::PreconditionViolated(_))
    ));
}

#[test]
fn proportional_pair_breaks_a1() {
    let model = engineered(proportional);
    let v = proportionality_test(&model, 0, 1, 32, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::LikelyProportional);
    assert!(v.error_bound.unwrap() < 1e-200);
    assert_eq!(
        classify(&model, 0).unwrap(),
        CaseTag::BrokenA1 { pair: (0, 1) }
    );
    assert_eq!(
        classify(&engineered(generic), 0).unwrap(),
        CaseTag::CaseIGenericRatio
    );
}

#[test]
fn bottleneck_ratio_is_one() {
    // oracle: path sums over F_7, where b vanishes often
    let net = fixtures::bottleneck();
    let small = net.with_field(field(7));
    let mut rng = SplitMix64::new(3);
    let mut compared = 0;
    for _ in 0..2000 {
        let xi = rng.elems(&small.field(), small.num_coefficients());
        let (a, b) = cycle_products(small.field(), &path_sum_transfer(&small, &xi));
        if b != 0 {
            assert_eq!(a, b);
            compared += 1;
        }
    }
    assert!(compared > 100);
    let v = ratio_constancy_test(&NetworkModel::new(&net), 32, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::LikelyConstant);
    assert_eq!(v.ratio, Some(1));
    let cls = classify_detailed(&NetworkModel::new(&net), 0, &TestConfig::default()).unwrap();
    assert_eq!(cls.case, CaseTag::DegenerateRank1);
    assert_eq!(cls.max_rank, 1);
}

#[test]
fn dualrelay_ratio_is_nonconstant() {
    let net = fixtures::dualrelay();
    let v = ratio_constancy_test(&NetworkModel::new(&net), 32, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::CertifiedNonconstant);
    let f = net.field();
    let (a0, b0) = cycle_products(f, &path_sum_transfer(&net, &v.witness[0]));
    let (a1, b1) = cycle_products(f, &path_sum_transfer(&net, &v.witness[1]));
    assert_ne!(f.mul(a0, b1), f.mul(a1, b0));
}

/// `m11 m32 / (m12 m31)` and `a/b` from a transfer matrix.
fn g_and_h(f: &PrimeField, m: &TransferMatrix) -> (Elem, Elem) {
    let g = f
        .div(f.mul(m[0][0], m[2][1]), f.mul(m[0][1], m[2][0]))
        .unwrap();
    let (a, b) = cycle_products(*f, m);
    (g, f.div(a, b).unwrap())
}

#[test]
fn dualrelay_a2_has_a_certificate() {
    let net = fixtures::dualrelay();
    let model = NetworkModel::new(&net);
    let v = asymmetry_certificate(&model, Assumption::A2, 10_000, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::CertifiedAsymmetric);
    assert_eq!(v.witness.len(), 2);
    let f = net.field();
    let (ga, ha) = g_and_h(&f, &path_sum_transfer(&net, &v.witness[0]));
    let (gb, hb) = g_and_h(&f, &path_sum_transfer(&net, &v.witness[1]));
    assert_eq!(ha, hb);
    assert_ne!(ga, gb);
    assert!(Assumption::A2.certifies(&model, &v.witness[0], &v.witness[1]));
    assert!(v.probes.unwrap() <= 10_000);
}

#[test]
fn dualrelay_a3_a4_have_certificates() {
    let net = fixtures::dualrelay();
    let model = NetworkModel::new(&net);
    for which in [Assumption::A3, Assumption::A4] {
        let v = asymmetry_certificate(&model, which, 10_000, 0).unwrap();
        assert_eq!(v.kind, VerdictKind::CertifiedAsymmetric, "{which:?}");
        assert!(which.certifies(&model, &v.witness[0], &v.witness[1]));
    }
}

#[test]
fn constant_g_stays_unverified() {
    let model = engineered(symmetric_a2);
    let v = asymmetry_certificate(&model, Assumption::A2, 500, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::Unverified);
    assert_eq!(v.probes, Some(500));
    assert!(v.witness.is_empty());
    let net = fixtures::bottleneck();
    let v = asymmetry_certificate(&NetworkModel::new(&net), Assumption::A2, 500, 0).unwrap();
    assert_eq!(v.kind, VerdictKind::Unverified);
}

#[test]
fn virtualization_rejects_bad_pairs() {
    let net = fixtures::partial();
    let model = NetworkModel::new(&net);
    assert!(matches!(
        Virtualized::new(&model, &[]),
        Err(TransferError::InvalidPair(_))
    ));
    assert!(matches!(
        Virtualized::new(&model, &[(1, 1)]),
        Err(TransferError::InvalidPair(_))
    ));
    assert!(matches!(
        Virtualized::new(&model, &[(0, 1), (0, 1)]),
        Err(TransferError::InvalidPair(_))
    ));
    assert!(matches!(
        Virtualized::new(&model, &[(0, 3)]),
        Err(TransferError::InvalidPair(_))
    ));
    let v = Virtualized::new(&model, &[(0, 1)]).unwrap();
    assert_eq!(v.num_vars(), model.num_vars() + 1);
    let mut x = vec![3; v.num_vars()];
    *x.last_mut().unwrap() = 42;
    assert_eq!(v.evaluate(&x)[0][1], 42);
    assert_eq!(
        v.evaluate(&x)[1][0],
        model.evaluate(&x[..model.num_vars()])[1][0]
    );
}

#[test]
fn analysis_reports_bounds_and_cases() {
    let cfg = TestConfig {
        collision_budget: 2_000,
        ..TestConfig::default()
    };
    let d = analyze(&fixtures::dualrelay(), 0, &cfg).unwrap();
    assert_eq!(d.case, CaseTag::CaseIGenericRatio);
    assert_eq!(d.mincuts, [1, 1, 1]);
    assert_eq!(d.max_rank, 3);
    assert_eq!(d.error_bounds.triviality, None);
    assert_eq!(d.asymmetry.A2.kind, VerdictKind::CertifiedAsymmetric);
    let p = analyze(&fixtures::partial(), 0, &cfg).unwrap();
    assert_eq!(
        p.case,
        CaseTag::CaseII {
            trivial_pairs: vec![(0, 1)]
        }
    );
    assert!(p.error_bounds.triviality.unwrap() < 1e-200);
    assert_eq!(p.triviality[0][1].kind, VerdictKind::LikelyZero);
    assert!(p.a1[0][1].is_none());
    let again = analyze(&fixtures::partial(), 0, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&p).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}
