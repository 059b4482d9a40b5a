//! Finite-length LDPC degree-profile design toolkit.
//!
//! The crate covers the whole measurement loop used to tune the degree
//! distribution of short LDPC codes:
//!
//! * [`profile`]: edge/node degree distributions, design rate and
//!   quantization to integer node counts for a block length.
//! * [`graph`]: random Tanner graph realizations with 4-cycle removal.
//! * [`channel`]: BEC and binary-input AWGN channels producing LLRs.
//! * [`decoder`]: flooding sum-product decoder that records the mutual
//!   information exchanged between the variable- and check-node decoders.
//! * [`exit`]: analytic EXIT curves, the J-function, tunnel and threshold
//!   search.
//! * [`sexit`]: scattered EXIT charts, i.e. 2D histograms of many simulated
//!   decoding trajectories, plus column statistics.
//! * [`ber`]: ensemble-averaged bit error rate simulation.

pub mod ber;
pub mod channel;
pub mod decoder;
pub mod error;
pub mod exit;
pub mod graph;
pub mod profile;
pub mod seed;
pub mod sexit;

pub use ber::{gain_at_ber, run_ber, BerConfig, BerRow, BerTable, StopRule};
pub use channel::{channel_mi, transmit, ChannelKind, ChannelSpec, LLR_MAX};
pub use decoder::{measure_mi, DecodeResult, Decoder, Layer, TrajectoryVertex};
pub use error::{Error, Result};
pub use exit::{ExitCurve, TunnelReport};
pub use graph::{
    count_4cycles, forced_4cycles, remove_girth4, sample_graph, GirthPolicy, TannerGraph,
};
pub use profile::{DegreeProfile, NodeDegreeSpec, Perspective, Term, Violation};
pub use seed::RunControl;
pub use sexit::{
    accumulate_histogram, column_stats, optimization_metrics, run_independent, run_sexit,
    run_trajectories, ColumnStats, HMode, IndependentConfig, OptimizationMetrics, SExitConfig,
    SExitHistogram, Trajectory,
};
