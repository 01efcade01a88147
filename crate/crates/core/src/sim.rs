//! End-to-end block simulation: encode, push symbols through the network
//! edge by edge, decode at the destinations and count exact recoveries.
//!
//! Propagation here does not use transfer matrices. It looks up each local
//! coefficient by its (node, input, output) slot and moves one symbol per edge
//! per channel use, so it checks the transfer model independently.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{CodeDesign, SymbolExtension};
use crate::gf::{Elem, PrimeField};
use crate::netmodel::{InputSlot, Network, OutputSlot, SESSIONS};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design was built for network {expected}, not {actual}")]
    DigestMismatch { expected: String, actual: String },
}

/// One block of messages: `n+1` symbols for session 1, `n` for sessions 2 and 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageBlock {
    pub index: u64,
    pub z: [Vec<Elem>; SESSIONS],
}

impl MessageBlock {
    pub fn random(design: &CodeDesign, seed: u64, index: u64) -> Self {
        let mut rng = SplitMix64::derive(seed, "block", index);
        let f = design.field;
        let z = design.message_lengths().map(|len| rng.elems(&f, len));
        MessageBlock { index, z }
    }

    /// Every symbol set to `value`.
    pub fn constant(design: &CodeDesign, value: Elem, index: u64) -> Self {
        MessageBlock {
            index,
            z: design.message_lengths().map(|len| vec![value; len]),
        }
    }
}

/// `x_i = V_i z_i`.
pub fn encode_block(
    msg: &MessageBlock,
    design: &CodeDesign,
) -> Result<[Vec<Elem>; SESSIONS], SimError> {
    let lengths = design.message_lengths();
    for i in 0..SESSIONS {
        if msg.z[i].len() != lengths[i] {
            return Err(SimError::DimensionMismatch(format!(
                "session {} message has {} symbols, expected {}",
                i + 1,
                msg.z[i].len(),
                lengths[i]
            )));
        }
    }
    let x: Vec<Vec<Elem>> = (0..SESSIONS)
        .map(|i| {
            design
                .precoder(i)
                .mul_vec(&msg.z[i])
                .expect("checked lengths")
        })
        .collect();
    Ok([x[0].clone(), x[1].clone(), x[2].clone()])
}

/// Sends `inputs[j][k]` from source `j` at channel use `k`, using row `k` of
/// the extension as the local coefficients, and returns each destination's
/// combined output per channel use.
pub fn propagate(
    net: &Network,
    ext: &SymbolExtension,
    inputs: &[Vec<Elem>; SESSIONS],
) -> Result<[Vec<Elem>; SESSIONS], SimError> {
    let uses = ext.len();
    if inputs.iter().any(|x| x.len() != uses) {
        return Err(SimError::DimensionMismatch(format!(
            "inputs must have {uses} symbols"
        )));
    }
    let s = net.num_coefficients();
    if ext.rows().iter().any(|r| r.len() != s) {
        return Err(SimError::DimensionMismatch(format!(
            "assignments must have {s} coefficients"
        )));
    }
    let f = ext.field();
    let index = net.coefficients();
    let coef = |xi: &[Elem], v: usize, input: InputSlot, output: OutputSlot| -> Elem {
        xi[index
            .position(v, input, output)
            .expect("every slot pair is indexed")]
    };
    let sessions = net.sessions();
    let mut outputs: [Vec<Elem>; SESSIONS] = std::array::from_fn(|_| vec![0; uses]);
    let mut symbol = vec![0 as Elem; net.edges().len()];
    for k in 0..uses {
        let xi = ext.row(k);
        symbol.iter_mut().for_each(|v| *v = 0);
        for &v in net.topological_order() {
            if let Some(j) = sessions.iter().position(|&(src, _)| src == v) {
                for &e in net.out_edges(v) {
                    symbol[e] = f.mul(
                        coef(xi, v, InputSlot::Inject, OutputSlot::Edge(e)),
                        f.reduce(inputs[j][k]),
                    );
                }
            } else if let Some(i) = sessions.iter().position(|&(_, dst)| dst == v) {
                outputs[i][k] = net.in_edges(v).iter().fold(0, |acc, &e| {
                    f.add(
                        acc,
                        f.mul(
                            coef(xi, v, InputSlot::Edge(e), OutputSlot::Combine),
                            symbol[e],
                        ),
                    )
                });
            } else if !net.in_edges(v).is_empty() {
                for &o in net.out_edges(v) {
                    symbol[o] = net.in_edges(v).iter().fold(0, |acc, &e| {
                        f.add(
                            acc,
                            f.mul(
                                coef(xi, v, InputSlot::Edge(e), OutputSlot::Edge(o)),
                                symbol[e],
                            ),
                        )
                    });
                }
            }
        }
    }
    Ok(outputs)
}

/// Zero-forcing: `W_i y_i`, keeping the desired coordinates.
pub fn decode_block(
    y: &[Elem],
    design: &CodeDesign,
    session: usize,
) -> Result<Vec<Elem>, SimError> {
    if y.len() != design.block_length() {
        return Err(SimError::DimensionMismatch(format!(
            "received {} symbols",
            y.len()
        )));
    }
    let d = design.decoders[session].mul_vec(y).expect("square decoder");
    Ok(d[..design.message_lengths()[session]].to_vec())
}

/// Encode, propagate and decode one block; per-session exact-recovery flags.
pub fn transmit_block(
    net: &Network,
    design: &CodeDesign,
    msg: &MessageBlock,
) -> Result<[bool; SESSIONS], SimError> {
    let x = encode_block(msg, design)?;
    let y = propagate(net, &design.extension, &x)?;
    let mut ok = [false; SESSIONS];
    for i in 0..SESSIONS {
        ok[i] = decode_block(&y[i], design, i)? == msg.z[i];
    }
    Ok(ok)
}

/// Outcome of a simulation run. Rates are exact `[numerator, denominator]`
/// pairs in symbols per channel use, `null` when no blocks ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub blocks: u64,
    pub n: usize,
    pub p: u64,
    pub successes: [u64; SESSIONS],
    pub rates: Option<[[u64; 2]; SESSIONS]>,
    pub first_failure: Option<u64>,
    pub seed: u64,
}

impl SimulationReport {
    pub fn rate(&self, session: usize) -> Option<Ratio<u64>> {
        self.rates.map(|r| Ratio::new(r[session][0], r[session][1]))
    }

    pub fn all_decoded(&self) -> bool {
        self.successes.iter().all(|&s| s == self.blocks)
    }
}

pub fn run_simulation(
    net: &Network,
    design: &CodeDesign,
    blocks: u64,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    let actual = net.digest();
    if actual != design.network_digest {
        return Err(SimError::DigestMismatch {
            expected: design.network_digest.clone(),
            actual,
        });
    }
    let net = net.with_field(design.field);
    let outcomes: Vec<[bool; SESSIONS]> = (0..blocks)
        .into_par_iter()
        .map(|b| transmit_block(&net, design, &MessageBlock::random(design, seed, b)))
        .collect::<Result<_, _>>()?;
    let mut successes = [0u64; SESSIONS];
    for o in &outcomes {
        for i in 0..SESSIONS {
            successes[i] += o[i] as u64;
        }
    }
    let first_failure = outcomes
        .iter()
        .position(|o| !o.iter().all(|&b| b))
        .map(|b| b as u64);
    let rates = (blocks > 0).then(|| {
        let lens = design.message_lengths();
        let d = design.block_length() as u64;
        std::array::from_fn(|i| {
            let r = Ratio::new(successes[i] * lens[i] as u64, blocks * d);
            [*r.numer(), *r.denom()]
        })
    });
    Ok(SimulationReport {
        blocks,
        n: design.n,
        p: design.field.modulus(),
        successes,
        rates,
        first_failure,
        seed,
    })
}

/// Block-model output `Σ_j M_ij x_j` from evaluated diagonal blocks.
pub fn block_model_output(
    blocks: &crate::align::DiagonalBlocks,
    inputs: &[Vec<Elem>; SESSIONS],
) -> [Vec<Elem>; SESSIONS] {
    let f: PrimeField = blocks.field();
    std::array::from_fn(|i| {
        (0..blocks.len())
            .map(|k| {
                (0..SESSIONS).fold(0, |acc, j| {
                    f.add(acc, f.mul(blocks.entry(i, j, k), inputs[j][k]))
                })
            })
            .collect()
    })
}
