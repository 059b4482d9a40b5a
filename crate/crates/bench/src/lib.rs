//! Shared workloads for the benchmarks.

use sexit_core::graph::sample_graph_best_effort;
use sexit_core::profile::{fixtures, NodeDegreeSpec};
use sexit_core::{seed, transmit, ChannelSpec, TannerGraph};

/// Block length of the short codes.
pub const N: usize = 180;

/// Node counts of a fixture profile at block length [`N`].
pub fn spec(name: &str) -> NodeDegreeSpec {
    fixtures::get(name)
        .unwrap_or_else(|| panic!("unknown fixture {name}"))
        .quantize(N)
        .expect("fixture quantizes")
}

/// A graph of `name` at block length [`N`] with the ensemble's default
/// 4-cycle budget.
pub fn graph(name: &str, seed: u64) -> TannerGraph {
    let spec = spec(name);
    sample_graph_best_effort(&spec, seed, 100 * spec.edges)
        .expect("graph samples")
        .graph
}

/// Channel LLRs of the all-zero codeword.
pub fn llrs(graph: &TannerGraph, channel: &ChannelSpec, seed: u64) -> Vec<f64> {
    let symbols = vec![1.0; graph.num_vns()];
    transmit(&symbols, channel, &mut seed::rng(seed, &[]))
}
