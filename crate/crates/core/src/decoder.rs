//! Flooding sum-product decoder with mutual-information probes.
//!
//! One iteration is a variable-node half-iteration followed by a check-node
//! half-iteration over all edges. After each half the decoder measures the
//! mutual information carried by the freshly computed edge messages; those
//! measurements are the vertices of the decoding trajectory in the EXIT
//! plane.

use serde::{Deserialize, Serialize};

use crate::channel::LLR_MAX;
use crate::graph::TannerGraph;
use crate::{Error, Result};

/// Default stop margin on the variable-node extrinsic information.
pub const CONV_DELTA: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Vnd,
    Cnd,
}

/// One measured point of a decoding trajectory.
///
/// `x` lies on the I_A,VND / I_E,CND axis and `y` on the I_E,VND / I_A,CND
/// axis, so both layers share one chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryVertex {
    pub x: f64,
    pub y: f64,
    pub layer: Layer,
    pub half_iteration: u32,
}

impl TrajectoryVertex {
    /// A-priori input of the vertex's own component decoder.
    pub fn apriori(&self) -> f64 {
        match self.layer {
            Layer::Vnd => self.x,
            Layer::Cnd => self.y,
        }
    }

    /// Extrinsic output of the vertex's own component decoder.
    pub fn extrinsic(&self) -> f64 {
        match self.layer {
            Layer::Vnd => self.y,
            Layer::Cnd => self.x,
        }
    }
}

/// What the variable-node probe measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    /// Extrinsic variable-to-check messages.
    #[default]
    Edges,
    /// A-posteriori LLRs (debugging aid).
    Posteriors,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub max_iter: usize,
    pub probe: Probe,
    /// Stop once the hard decision is a codeword or the VND information
    /// reaches `1 - conv_delta`.
    pub early_stop: bool,
    pub conv_delta: f64,
    /// Record trajectory vertices.
    pub record: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_iter: DEFAULT_MAX_ITER,
            probe: Probe::Edges,
            early_stop: true,
            conv_delta: CONV_DELTA,
            record: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub converged: bool,
    pub iterations: usize,
    /// Hard decisions (0/1); an undecided bit (posterior exactly 0) reads 0.
    pub hard_decisions: Vec<u8>,
    pub posteriors: Vec<f64>,
    pub vertices: Vec<TrajectoryVertex>,
}

impl DecodeResult {
    /// Bits with a posterior LLR of exactly zero (unresolved erasures).
    pub fn undecided(&self) -> usize {
        self.posteriors.iter().filter(|&&l| l == 0.0).count()
    }
}

/// Message state of the decoder on one graph.
#[derive(Debug, Clone)]
pub struct Decoder<'g> {
    graph: &'g TannerGraph,
    channel: Vec<f64>,
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    scratch: Vec<f64>,
    suffix: Vec<f64>,
}

impl<'g> Decoder<'g> {
    pub fn new(graph: &'g TannerGraph, channel_llrs: &[f64]) -> Result<Self> {
        if channel_llrs.len() != graph.num_vns() {
            return Err(Error::InvalidArgument(format!(
                "{} channel LLRs for a graph with {} variable nodes",
                channel_llrs.len(),
                graph.num_vns()
            )));
        }
        let e = graph.num_edges();
        Ok(Decoder {
            graph,
            channel: channel_llrs.to_vec(),
            v2c: vec![0.0; e],
            c2v: vec![0.0; e],
            scratch: Vec::new(),
            suffix: Vec::new(),
        })
    }

    pub fn graph(&self) -> &TannerGraph {
        self.graph
    }

    pub fn vn_to_cn(&self) -> &[f64] {
        &self.v2c
    }

    pub fn cn_to_vn(&self) -> &[f64] {
        &self.c2v
    }

    pub fn vn_to_cn_mut(&mut self) -> &mut [f64] {
        &mut self.v2c
    }

    pub fn cn_to_vn_mut(&mut self) -> &mut [f64] {
        &mut self.c2v
    }

    /// `v2c[v,c] = L_ch[v] + sum_{c' != c} c2v[v,c']`, clipped.
    pub fn vnd_half_iteration(&mut self) {
        for v in 0..self.graph.num_vns() {
            let range = self.graph.vn_edge_range(v);
            let total: f64 = self.channel[v] + self.c2v[range.clone()].iter().sum::<f64>();
            for e in range {
                self.v2c[e] = (total - self.c2v[e]).clamp(-LLR_MAX, LLR_MAX);
            }
        }
    }

    /// `c2v[c,v] = 2 atanh(prod_{v' != v} tanh(v2c[v',c] / 2))`, clipped.
    ///
    /// Leave-one-out products use prefix/suffix products, so a zero input
    /// (an erasure) zeroes every other output exactly.
    pub fn cnd_half_iteration(&mut self) {
        for c in 0..self.graph.num_cns() {
            let ids = self.graph.cn_edge_ids(c);
            let d = ids.len();
            self.scratch.clear();
            self.scratch
                .extend(ids.iter().map(|&e| (self.v2c[e as usize] / 2.0).tanh()));
            self.suffix.clear();
            self.suffix.resize(d + 1, 1.0);
            for k in (0..d).rev() {
                self.suffix[k] = self.suffix[k + 1] * self.scratch[k];
            }
            let mut prefix = 1.0;
            for (k, &e) in ids.iter().enumerate() {
                let p = prefix * self.suffix[k + 1];
                self.c2v[e as usize] = (2.0 * p.atanh()).clamp(-LLR_MAX, LLR_MAX);
                prefix *= self.scratch[k];
            }
        }
    }

    /// A-posteriori LLR per variable node.
    pub fn posteriors(&self) -> Vec<f64> {
        (0..self.graph.num_vns())
            .map(|v| self.channel[v] + self.c2v[self.graph.vn_edge_range(v)].iter().sum::<f64>())
            .collect()
    }
}

/// Eq.-(1)-style estimate `1 - mean(log2(1 + exp(-x L)))`, clamped to
/// `[0, 1]`. Valid for any LLR distribution.
pub fn measure_mi(messages: &[f64], ref_symbols: &[f64]) -> Result<f64> {
    if messages.is_empty() {
        return Err(Error::NoMessages);
    }
    if messages.len() != ref_symbols.len() {
        return Err(Error::InvalidArgument(format!(
            "{} messages but {} reference symbols",
            messages.len(),
            ref_symbols.len()
        )));
    }
    let sum: f64 = messages
        .iter()
        .zip(ref_symbols)
        .map(|(&l, &x)| softplus(-x * l))
        .sum();
    let mi = 1.0 - sum / (messages.len() as f64 * std::f64::consts::LN_2);
    Ok(mi.clamp(0.0, 1.0))
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Runs the flooding decoder and records one vertex per half-iteration.
///
/// `ref_symbols` holds the transmitted ±1 symbol of every variable node and
/// is only used by the probes.
pub fn decode(
    graph: &TannerGraph,
    channel_llrs: &[f64],
    ref_symbols: &[f64],
    opts: &DecodeOptions,
) -> Result<DecodeResult> {
    if ref_symbols.len() != graph.num_vns() {
        return Err(Error::InvalidArgument(format!(
            "{} reference symbols for {} variable nodes",
            ref_symbols.len(),
            graph.num_vns()
        )));
    }
    let mut dec = Decoder::new(graph, channel_llrs)?;
    let edge_ref: Vec<f64> = (0..graph.num_edges())
        .map(|e| ref_symbols[graph.edge(e).0])
        .collect();

    let mut vertices = Vec::new();
    let mut cnd_mi = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut posteriors = dec.posteriors();

    for it in 0..opts.max_iter {
        dec.vnd_half_iteration();
        let vnd_mi = match opts.probe {
            Probe::Edges => measure_mi(&dec.v2c, &edge_ref).unwrap_or(0.0),
            Probe::Posteriors => measure_mi(&dec.posteriors(), ref_symbols).unwrap_or(0.0),
        };
        dec.cnd_half_iteration();
        if opts.record {
            push_vertex(&mut vertices, cnd_mi, vnd_mi, it, Layer::Vnd);
            cnd_mi = measure_mi(&dec.c2v, &edge_ref).unwrap_or(0.0);
            push_vertex(&mut vertices, cnd_mi, vnd_mi, it, Layer::Cnd);
        }
        iterations = it + 1;
        posteriors = dec.posteriors();
        if opts.early_stop && (vnd_mi >= 1.0 - opts.conv_delta || is_codeword(graph, &posteriors)) {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = is_codeword(graph, &posteriors);
    }
    let hard_decisions = posteriors.iter().map(|&l| u8::from(l < 0.0)).collect();
    Ok(DecodeResult {
        converged,
        iterations,
        hard_decisions,
        posteriors,
        vertices,
    })
}

fn push_vertex(out: &mut Vec<TrajectoryVertex>, cnd_mi: f64, vnd_mi: f64, it: usize, layer: Layer) {
    out.push(TrajectoryVertex {
        x: cnd_mi,
        y: vnd_mi,
        layer,
        half_iteration: 2 * it as u32 + u32::from(layer == Layer::Cnd),
    });
}

/// Hard decision satisfies every check and no bit is undecided.
fn is_codeword(graph: &TannerGraph, posteriors: &[f64]) -> bool {
    if posteriors.contains(&0.0) {
        return false;
    }
    let bits: Vec<u8> = posteriors.iter().map(|&l| u8::from(l < 0.0)).collect();
    graph.syndrome_ok(&bits)
}
