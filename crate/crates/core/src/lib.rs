//! Interference-alignment linear network codes for three unicast sessions
//! over directed acyclic networks with unit-capacity links.
//!
//! The pipeline is: parse a [`Network`], [`classify`] its transfer matrix,
//! [`search_design`] for precoders over a `(2n+1)`-symbol extension, then
//! [`run_simulation`] to push random messages through the network and decode
//! them exactly. Session 1 gets rate `(n+1)/(2n+1)`, sessions 2 and 3 get
//! `n/(2n+1)`.

pub mod align;
pub mod gf;
pub mod netmodel;
pub mod rng;
pub mod sim;
pub mod transfer;

pub use align::{
    build_blocks, build_precoding_case1, build_precoding_case2, recommended_prime, search_design,
    verify_conditions, virtualize, AlignError, CodeDesign, ConditionReport, DiagonalBlocks,
    PrecodingSet, SymbolExtension,
};
pub use gf::{Elem, FieldMatrix, GfError, PrimeField, DEFAULT_PRIME};
pub use netmodel::{mincut, mincuts, parse_network, CoefficientIndex, NetError, Network};
pub use sim::{run_simulation, SimError, SimulationReport};
pub use transfer::{
    analyze, classify, evaluate_transfer, AnalysisReport, CaseTag, IdentityVerdict, NetworkModel,
    TransferModel,
};

/// Networks shipped with the repository.
pub mod fixtures {
    pub const BOTTLENECK: &str = include_str!("../../../fixtures/bottleneck.json");
    pub const DUALRELAY: &str = include_str!("../../../fixtures/dualrelay.json");
    pub const PARTIAL: &str = include_str!("../../../fixtures/partial.json");

    pub fn bottleneck() -> crate::Network {
        crate::Network::parse(BOTTLENECK).expect("fixture parses")
    }

    pub fn dualrelay() -> crate::Network {
        crate::Network::parse(DUALRELAY).expect("fixture parses")
    }

    pub fn partial() -> crate::Network {
        crate::Network::parse(PARTIAL).expect("fixture parses")
    }
}
