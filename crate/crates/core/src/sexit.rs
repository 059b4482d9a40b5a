//! Scattered EXIT charts.
//!
//! Many decoding trajectories of a short code are simulated and only their
//! vertices are kept. The vertices are binned into two `grid x grid` count
//! layers over the unit square, one per component decoder, which shows how
//! the extrinsic information is distributed for each a-priori value instead
//! of a single deterministic transfer curve.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, ChannelKind, ChannelSpec, LLR_MAX};
use crate::decoder::{self, measure_mi, DecodeOptions, Decoder, Layer, TrajectoryVertex};
use crate::exit::j_inverse_saturating;
use crate::graph::{GirthPolicy, TannerGraph};
use crate::profile::{Code, NodeDegreeSpec};
use crate::seed::{self, RunControl};
use crate::{Error, Result};

pub const DEFAULT_GRID: usize = 200;
pub const DEFAULT_TRAJECTORIES: usize = 1000;
/// A trajectory that never brings the VND output to `1 - STUCK_DELTA` is stuck.
pub const STUCK_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HMode {
    /// Fresh graph per trajectory (ensemble average).
    #[default]
    ResamplePerTrajectory,
    /// One graph, only the channel noise varies.
    FixedGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SExitConfig {
    pub code: Code,
    pub n: usize,
    pub channel: ChannelSpec,
    pub trajectories: usize,
    pub max_iter: usize,
    pub grid: usize,
    pub h_mode: HMode,
    #[serde(default)]
    pub girth: GirthPolicy,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool. Never affects results.
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

impl SExitConfig {
    pub fn new(code: Code, n: usize, channel: ChannelSpec) -> Self {
        SExitConfig {
            code,
            n,
            channel,
            trajectories: DEFAULT_TRAJECTORIES,
            max_iter: decoder::DEFAULT_MAX_ITER,
            grid: DEFAULT_GRID,
            h_mode: HMode::default(),
            girth: GirthPolicy::default(),
            seed: 0,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::InvalidArgument(
                "need at least one trajectory".into(),
            ));
        }
        if self.grid < 2 {
            return Err(Error::InvalidArgument("grid must be >= 2".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        self.channel.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vertices: Vec<TrajectoryVertex>,
    pub converged: bool,
    pub iterations: usize,
    /// 4-cycles left in the graph this trajectory was decoded on.
    pub graph_4cycles: usize,
}

impl Trajectory {
    /// Neither decoded to a codeword nor brought the VND output within
    /// `STUCK_DELTA` of 1.
    pub fn is_stuck(&self) -> bool {
        !self.converged && self.peak_vnd() < 1.0 - STUCK_DELTA
    }

    /// Largest VND output reached.
    pub fn peak_vnd(&self) -> f64 {
        self.vertices
            .iter()
            .filter(|v| v.layer == Layer::Vnd)
            .map(|v| v.y)
            .fold(0.0, f64::max)
    }
}

fn all_zero_codeword(n: usize) -> Vec<f64> {
    vec![1.0; n]
}

/// Simulates `config.trajectories` decoding runs. Trajectory `k` draws all
/// of its randomness from `(seed, k)`, so the output does not depend on the
/// number of workers.
pub fn run_trajectories(config: &SExitConfig, control: &RunControl) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let spec = config.code.realize(config.n)?;
    let fixed = match config.h_mode {
        HMode::FixedGraph => Some(
            config
                .girth
                .sample(&spec, seed::derive(config.seed, &[seed::TAG_GRAPH]))?,
        ),
        HMode::ResamplePerTrajectory => None,
    };
    control.add_total(config.trajectories as u64);
    let opts = DecodeOptions {
        max_iter: config.max_iter,
        ..Default::default()
    };
    let symbols = all_zero_codeword(config.n);

    seed::with_workers(config.workers, || {
        (0..config.trajectories as u64)
            .into_par_iter()
            .map(|k| {
                control.check()?;
                let item = seed::derive(config.seed, &[k]);
                let sampled;
                let drawn = match &fixed {
                    Some(g) => g,
                    None => {
                        sampled = config
                            .girth
                            .sample(&spec, seed::derive(item, &[seed::TAG_GRAPH]))?;
                        &sampled
                    }
                };
                let llr = transmit(
                    &symbols,
                    &config.channel,
                    &mut seed::rng(item, &[seed::TAG_CHANNEL]),
                );
                let r = decoder::decode(&drawn.graph, &llr, &symbols, &opts)?;
                control.advance(1);
                Ok(Trajectory {
                    vertices: r.vertices,
                    converged: r.converged,
                    iterations: r.iterations,
                    graph_4cycles: drawn.residual,
                })
            })
            .collect()
    })
}

/// Two-layer count grid over the EXIT plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SExitHistogram {
    pub grid: usize,
    /// Row-major by `iy`: `counts[iy * grid + ix]`.
    pub vnd: Vec<u64>,
    pub cnd: Vec<u64>,
    /// Echo of the producing configuration, if any.
    pub config: Option<serde_json::Value>,
}

/// `min(floor(value * grid), grid - 1)`.
pub fn bin_index(value: f64, grid: usize) -> usize {
    ((value.clamp(0.0, 1.0) * grid as f64).floor() as usize).min(grid - 1)
}

impl SExitHistogram {
    pub fn new(grid: usize) -> Self {
        SExitHistogram {
            grid,
            vnd: vec![0; grid * grid],
            cnd: vec![0; grid * grid],
            config: None,
        }
    }

    pub fn layer(&self, layer: Layer) -> &[u64] {
        match layer {
            Layer::Vnd => &self.vnd,
            Layer::Cnd => &self.cnd,
        }
    }

    fn layer_mut(&mut self, layer: Layer) -> &mut Vec<u64> {
        match layer {
            Layer::Vnd => &mut self.vnd,
            Layer::Cnd => &mut self.cnd,
        }
    }

    pub fn count(&self, layer: Layer, ix: usize, iy: usize) -> u64 {
        self.layer(layer)[iy * self.grid + ix]
    }

    pub fn total(&self, layer: Layer) -> u64 {
        self.layer(layer).iter().sum()
    }

    pub fn add(&mut self, v: &TrajectoryVertex) {
        let (ix, iy) = (bin_index(v.x, self.grid), bin_index(v.y, self.grid));
        let g = self.grid;
        self.layer_mut(v.layer)[iy * g + ix] += 1;
    }

    /// Adds another histogram of the same grid size.
    pub fn merge(&mut self, other: &SExitHistogram) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::InvalidArgument(format!(
                "grid mismatch: {} vs {}",
                self.grid, other.grid
            )));
        }
        for (a, b) in self.vnd.iter_mut().zip(&other.vnd) {
            *a += b;
        }
        for (a, b) in self.cnd.iter_mut().zip(&other.cnd) {
            *a += b;
        }
        Ok(())
    }

    fn nonzero(&self, layer: Layer) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        let g = self.grid;
        // (ix, iy) order
        (0..g).flat_map(move |ix| {
            (0..g).filter_map(move |iy| {
                let c = self.count(layer, ix, iy);
                (c > 0).then_some((ix, iy, c))
            })
        })
    }

    /// Nonzero bins as `layer,ix,iy,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,ix,iy,count\n");
        for (name, layer) in [("vnd", Layer::Vnd), ("cnd", Layer::Cnd)] {
            for (ix, iy, c) in self.nonzero(layer) {
                let _ = writeln!(out, "{name},{ix},{iy},{c}");
            }
        }
        out
    }

    /// Binary PGM (P5) of one layer with log-scaled counts; the top row is
    /// `I = 1`.
    pub fn to_pgm(&self, layer: Layer) -> Vec<u8> {
        let g = self.grid;
        let counts = self.layer(layer);
        let max = counts.iter().copied().max().unwrap_or(0);
        let mut out = format!("P5\n{g} {g}\n255\n").into_bytes();
        let scale = ((max as f64) + 1.0).ln();
        for row in 0..g {
            let iy = g - 1 - row;
            for ix in 0..g {
                let c = counts[iy * g + ix];
                let v = if max == 0 {
                    0
                } else {
                    (255.0 * ((c as f64) + 1.0).ln() / scale).round() as u8
                };
                out.push(v);
            }
        }
        out
    }

    /// Self-describing JSON bundle with sparse bins.
    pub fn to_bundle_json(&self) -> String {
        let layer = |l: Layer| BundleLayer {
            total: self.total(l),
            bins: self
                .nonzero(l)
                .map(|(ix, iy, c)| [ix as u64, iy as u64, c])
                .collect(),
        };
        let bundle = Bundle {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            grid: self.grid,
            config: self.config.clone(),
            layers: BundleLayers {
                vnd: layer(Layer::Vnd),
                cnd: layer(Layer::Cnd),
            },
        };
        serde_json::to_string(&bundle).expect("bundle serializes")
    }

    pub fn from_bundle_json(text: &str) -> Result<Self> {
        let bundle: Bundle = serde_json::from_str(text)?;
        if bundle.format != BUNDLE_FORMAT {
            return Err(Error::Format(format!(
                "unexpected format '{}'",
                bundle.format
            )));
        }
        if bundle.grid < 2 {
            return Err(Error::Format("grid < 2".into()));
        }
        let mut h = SExitHistogram::new(bundle.grid);
        h.config = bundle.config;
        for (layer, data) in [
            (Layer::Vnd, &bundle.layers.vnd),
            (Layer::Cnd, &bundle.layers.cnd),
        ] {
            let g = h.grid;
            for &[ix, iy, c] in &data.bins {
                let (ix, iy) = (ix as usize, iy as usize);
                if ix >= g || iy >= g {
                    return Err(Error::Format(format!("bin ({ix}, {iy}) outside grid {g}")));
                }
                h.layer_mut(layer)[iy * g + ix] += c;
            }
            if h.total(layer) != data.total {
                return Err(Error::Format(format!("{layer:?} total mismatch")));
            }
        }
        Ok(h)
    }
}

const BUNDLE_FORMAT: &str = "sexit-histogram";
const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Bundle {
    format: String,
    version: u32,
    grid: usize,
    config: Option<serde_json::Value>,
    layers: BundleLayers,
}

#[derive(Serialize, Deserialize)]
struct BundleLayers {
    vnd: BundleLayer,
    cnd: BundleLayer,
}

#[derive(Serialize, Deserialize)]
struct BundleLayer {
    total: u64,
    bins: Vec<[u64; 3]>,
}

/// Bins every vertex into its layer.
pub fn accumulate_histogram(trajectories: &[Trajectory], grid: usize) -> SExitHistogram {
    let mut h = SExitHistogram::new(grid.max(2));
    for v in trajectories.iter().flat_map(|t| &t.vertices) {
        h.add(v);
    }
    h
}

/// A simulated chart: histogram plus the raw trajectories behind it.
#[derive(Debug, Clone)]
pub struct SExitChart {
    pub histogram: SExitHistogram,
    pub trajectories: Vec<Trajectory>,
}

impl SExitChart {
    pub fn vertices(&self) -> impl Iterator<Item = &TrajectoryVertex> {
        self.trajectories.iter().flat_map(|t| &t.vertices)
    }
}

pub fn run_sexit(config: &SExitConfig, control: &RunControl) -> Result<SExitChart> {
    let trajectories = run_trajectories(config, control)?;
    let mut histogram = accumulate_histogram(&trajectories, config.grid);
    histogram.config = Some(serde_json::to_value(config)?);
    Ok(SExitChart {
        histogram,
        trajectories,
    })
}

/// Independent-component simulation: each component decoder is fed
/// synthetic a-priori messages of known mutual information and run for a
/// single half-iteration, which removes the coupling between successive
/// iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentConfig {
    pub code: Code,
    pub n: usize,
    pub channel: ChannelSpec,
    pub apriori: Vec<f64>,
    pub samples_per_point: usize,
    pub grid: usize,
    #[serde(default)]
    pub girth: GirthPolicy,
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

impl IndependentConfig {
    /// `points` a-priori values spread evenly over `[0, 1]`.
    pub fn uniform_apriori(points: usize) -> Vec<f64> {
        let points = points.max(2);
        (0..points)
            .map(|k| k as f64 / (points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct IndependentChart {
    pub histogram: SExitHistogram,
    /// VND and CND vertex for every (a-priori point, sample), in order.
    pub vertices: Vec<TrajectoryVertex>,
}

/// Consistent a-priori LLRs for the all-zero codeword.
fn synth_apriori<R: Rng + ?Sized>(kind: ChannelKind, info: f64, out: &mut [f64], rng: &mut R) {
    match kind {
        ChannelKind::Bec => {
            for m in out.iter_mut() {
                *m = if rng.random::<f64>() < info {
                    LLR_MAX
                } else {
                    0.0
                };
            }
        }
        ChannelKind::Awgn => {
            let sigma = j_inverse_saturating(info);
            if sigma.is_infinite() {
                out.fill(LLR_MAX);
                return;
            }
            let normal = rand_distr::Normal::new(sigma * sigma / 2.0, sigma).expect("finite sigma");
            for m in out.iter_mut() {
                *m = rand_distr::Distribution::sample(&normal, rng).clamp(-LLR_MAX, LLR_MAX);
            }
        }
    }
}

fn independent_sample(
    graph: &TannerGraph,
    channel: &ChannelSpec,
    info: f64,
    item: u64,
) -> Result<(f64, f64)> {
    let n = graph.num_vns();
    let symbols = all_zero_codeword(n);
    let edge_ref = vec![1.0; graph.num_edges()];
    let llr = transmit(
        &symbols,
        channel,
        &mut seed::rng(item, &[seed::TAG_CHANNEL]),
    );
    let mut rng = seed::rng(item, &[seed::TAG_APRIORI]);

    let mut dec = Decoder::new(graph, &llr)?;
    synth_apriori(channel.kind, info, dec.cn_to_vn_mut(), &mut rng);
    dec.vnd_half_iteration();
    let vnd = measure_mi(dec.vn_to_cn(), &edge_ref)?;

    let mut dec = Decoder::new(graph, &llr)?;
    synth_apriori(channel.kind, info, dec.vn_to_cn_mut(), &mut rng);
    dec.cnd_half_iteration();
    let cnd = measure_mi(dec.cn_to_vn(), &edge_ref)?;
    Ok((vnd, cnd))
}

pub fn run_independent(
    config: &IndependentConfig,
    control: &RunControl,
) -> Result<IndependentChart> {
    config.channel.validate()?;
    if config.samples_per_point == 0 || config.apriori.is_empty() {
        return Err(Error::InvalidArgument(
            "need a-priori points and samples".into(),
        ));
    }
    if config.apriori.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument(
            "a-priori values must lie in [0, 1]".into(),
        ));
    }
    let spec: NodeDegreeSpec = config.code.realize(config.n)?;
    let per = config.samples_per_point;
    control.add_total((config.apriori.len() * per) as u64);

    let pairs: Vec<(f64, f64)> = seed::with_workers(config.workers, || {
        (0..config.apriori.len() * per)
            .into_par_iter()
            .map(|idx| {
                control.check()?;
                let (p, s) = (idx / per, idx % per);
                let item = seed::derive(config.seed, &[p as u64, s as u64]);
                let drawn = config
                    .girth
                    .sample(&spec, seed::derive(item, &[seed::TAG_GRAPH]))?;
                let r = independent_sample(&drawn.graph, &config.channel, config.apriori[p], item)?;
                control.advance(1);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut vertices = Vec::with_capacity(2 * pairs.len());
    for (idx, &(vnd, cnd)) in pairs.iter().enumerate() {
        let ia = config.apriori[idx / per];
        vertices.push(TrajectoryVertex {
            x: ia,
            y: vnd,
            layer: Layer::Vnd,
            half_iteration: 0,
        });
        vertices.push(TrajectoryVertex {
            x: cnd,
            y: ia,
            layer: Layer::Cnd,
            half_iteration: 1,
        });
    }
    let mut histogram = SExitHistogram::new(config.grid.max(2));
    for v in &vertices {
        histogram.add(v);
    }
    histogram.config = Some(serde_json::to_value(config)?);
    Ok(IndependentChart {
        histogram,
        vertices,
    })
}

/// Distribution of the extrinsic output within one a-priori column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl ColumnStats {
    fn from_sorted(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        ColumnStats {
            count: n as u64,
            mean,
            std: var.sqrt(),
            q10: quantile(values, 0.1),
            q50: quantile(values, 0.5),
            q90: quantile(values, 0.9),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per a-priori bin statistics of the extrinsic output of one layer, from
/// raw vertices. Columns are indexed by the layer's own a-priori value
/// (`x` for the VND, `y` for the CND); empty columns are `None`.
pub fn column_stats<'a>(
    vertices: impl IntoIterator<Item = &'a TrajectoryVertex>,
    layer: Layer,
    grid: usize,
) -> Vec<Option<ColumnStats>> {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); grid];
    for v in vertices.into_iter().filter(|v| v.layer == layer) {
        columns[bin_index(v.apriori(), grid)].push(v.extrinsic());
    }
    columns
        .into_iter()
        .map(|mut c| {
            if c.is_empty() {
                None
            } else {
                c.sort_by(f64::total_cmp);
                Some(ColumnStats::from_sorted(&c))
            }
        })
        .collect()
}

/// Same as [`column_stats`] but from binned counts, using bin centers
/// (values quantized to within `1 / (2 grid)`).
pub fn column_stats_binned(hist: &SExitHistogram, layer: Layer) -> Vec<Option<ColumnStats>> {
    let g = hist.grid;
    let center = |i: usize| (i as f64 + 0.5) / g as f64;
    (0..g)
        .map(|col| {
            let mut values = Vec::new();
            for other in 0..g {
                let (ix, iy) = match layer {
                    Layer::Vnd => (col, other),
                    Layer::Cnd => (other, col),
                };
                let c = hist.count(layer, ix, iy);
                values.extend(std::iter::repeat_n(center(other), c as usize));
            }
            (!values.is_empty()).then(|| ColumnStats::from_sorted(&values))
        })
        .collect()
}

/// Scalar summaries of how well the two scattered clouds are separated.
///
/// * `stuck_fraction`: share of stuck trajectories (see
///   [`Trajectory::is_stuck`]).
/// * `min_gap_band`: over chart columns (`x` bins) holding both layers, the
///   smallest `q10(VND y) - q90(CND y)`.
/// * `overlap_mass`: share of all vertices lying in columns where that band
///   is `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationMetrics {
    pub stuck_fraction: f64,
    pub min_gap_band: Option<f64>,
    pub min_gap_location: Option<f64>,
    pub overlap_mass: f64,
}

pub fn optimization_metrics(trajectories: &[Trajectory], grid: usize) -> OptimizationMetrics {
    let stuck = trajectories.iter().filter(|t| t.is_stuck()).count();
    let stuck_fraction = if trajectories.is_empty() {
        0.0
    } else {
        stuck as f64 / trajectories.len() as f64
    };

    let mut vnd_cols: Vec<Vec<f64>> = vec![Vec::new(); grid];
    let mut cnd_cols: Vec<Vec<f64>> = vec![Vec::new(); grid];
    for v in trajectories.iter().flat_map(|t| &t.vertices) {
        let col = bin_index(v.x, grid);
        match v.layer {
            Layer::Vnd => vnd_cols[col].push(v.y),
            Layer::Cnd => cnd_cols[col].push(v.y),
        }
    }
    let total: usize = vnd_cols.iter().chain(&cnd_cols).map(Vec::len).sum();

    let mut min_gap: Option<(f64, f64)> = None;
    let mut overlap = 0usize;
    for (col, (v, c)) in vnd_cols.iter_mut().zip(cnd_cols.iter_mut()).enumerate() {
        if v.is_empty() || c.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        c.sort_by(f64::total_cmp);
        let band = quantile(v, 0.1) - quantile(c, 0.9);
        if min_gap.is_none_or(|(g, _)| band < g) {
            min_gap = Some((band, (col as f64 + 0.5) / grid as f64));
        }
        if band <= 0.0 {
            overlap += v.len() + c.len();
        }
    }
    OptimizationMetrics {
        stuck_fraction,
        min_gap_band: min_gap.map(|g| g.0),
        min_gap_location: min_gap.map(|g| g.1),
        overlap_mass: if total == 0 {
            0.0
        } else {
            overlap as f64 / total as f64
        },
    }
}
