//! Ensemble-averaged bit error rate simulation.
//!
//! Every frame sends the all-zero codeword, decodes it and counts residual
//! bit errors. The parity-check matrix is redrawn every `h_refresh` frames,
//! so the curve is averaged over the code ensemble rather than one graph.
//!
//! On the BEC an unresolved erasure counts as half a bit error. Counts are
//! kept in half-error units so aggregation stays exact integer addition.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, ChannelKind, ChannelSpec};
use crate::decoder::{self, DecodeOptions};
use crate::graph::{GirthPolicy, TannerGraph};
use crate::profile::Code;
use crate::seed::{self, RunControl};
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_bit_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_bit_errors: 200,
            max_frames: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerConfig {
    pub code: Code,
    pub n: usize,
    /// Channel template; `param` is replaced by each entry of `points`.
    pub channel: ChannelSpec,
    pub points: Vec<f64>,
    #[serde(default)]
    pub stop: StopRule,
    /// Frames per parity-check matrix.
    #[serde(default = "one")]
    pub h_refresh: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Frames simulated between two stop-rule checks. Part of the result's
    /// identity: a different batch may stop at a different frame count.
    #[serde(default = "default_batch")]
    pub batch: u64,
    #[serde(default)]
    pub girth: GirthPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub workers: usize,
}

fn one() -> u64 {
    1
}

fn default_max_iter() -> usize {
    decoder::DEFAULT_MAX_ITER
}

fn default_batch() -> u64 {
    64
}

impl BerConfig {
    pub fn new(code: Code, n: usize, channel: ChannelSpec, points: Vec<f64>) -> Self {
        BerConfig {
            code,
            n,
            channel,
            points,
            stop: StopRule::default(),
            h_refresh: 1,
            max_iter: decoder::DEFAULT_MAX_ITER,
            batch: default_batch(),
            girth: GirthPolicy::default(),
            seed: 0,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("no channel points".into()));
        }
        if self.h_refresh == 0 || self.batch == 0 || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "h_refresh, batch and max_iter must be >= 1".into(),
            ));
        }
        if self.stop.max_frames == 0 {
            return Err(Error::InvalidArgument("max_frames must be >= 1".into()));
        }
        for &p in &self.points {
            self.channel.with_param(p).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub channel_param: f64,
    pub frames: u64,
    /// May end in `.5` on the BEC.
    pub bit_errors: f64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub graphs_used: u64,
    /// Stopped on `max_frames` before collecting `min_bit_errors`.
    pub undersampled: bool,
}

impl BerRow {
    fn from_counts(param: f64, n: usize, c: &Counts, graphs_used: u64, min_errors: u64) -> Self {
        let bits = (c.frames * n as u64) as f64;
        let bit_errors = c.half_errors as f64 / 2.0;
        let ber = if c.frames == 0 {
            0.0
        } else {
            bit_errors / bits
        };
        let (ci_low, ci_high) = wilson(ber, bits);
        BerRow {
            channel_param: param,
            frames: c.frames,
            bit_errors,
            frame_errors: c.frame_errors,
            ber,
            fer: if c.frames == 0 {
                0.0
            } else {
                c.frame_errors as f64 / c.frames as f64
            },
            ci_low,
            ci_high,
            graphs_used,
            undersampled: bit_errors < min_errors as f64,
        }
    }
}

/// Wilson score interval for a proportion `p` observed over `trials`.
pub fn wilson(p: f64, trials: f64) -> (f64, f64) {
    if trials <= 0.0 {
        return (0.0, 1.0);
    }
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / trials;
    let center = (p + z2 / (2.0 * trials)) / denom;
    let half = Z95 * (p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerTable {
    pub kind: ChannelKind,
    pub rows: Vec<BerRow>,
    /// Echo of the producing configuration, if any.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

const CSV_HEADER: &str = "channel_param,frames,bit_errors,frame_errors,ber,fer,ci_low,ci_high";

impl BerTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                r.channel_param,
                r.frames,
                r.bit_errors,
                r.frame_errors,
                r.ber,
                r.fer,
                r.ci_low,
                r.ci_high
            );
        }
        out
    }

    /// Reads the CSV written by [`to_csv`](Self::to_csv). Block length and
    /// graph counts are not part of the CSV, so `graphs_used` reads 0 and no
    /// row is flagged as under-sampled.
    pub fn from_csv(kind: ChannelKind, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Format("missing BER CSV header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("line {}: expected 8 fields", i + 2)));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse()
                    .map_err(|_| Error::Format(format!("line {}: bad number '{}'", i + 2, f[k])))
            };
            rows.push(BerRow {
                channel_param: num(0)?,
                frames: num(1)? as u64,
                bit_errors: num(2)?,
                frame_errors: num(3)? as u64,
                ber: num(4)?,
                fer: num(5)?,
                ci_low: num(6)?,
                ci_high: num(7)?,
                graphs_used: 0,
                undersampled: false,
            });
        }
        let mut table = BerTable {
            kind,
            rows,
            config: None,
        };
        table.sort_rows();
        Ok(table)
    }

    fn sort_rows(&mut self) {
        self.rows
            .sort_by(|a, b| a.channel_param.total_cmp(&b.channel_param));
    }

    /// Channel parameter at which the curve crosses `target`, by linear
    /// interpolation of `log10(ber)` between the bracketing rows.
    pub fn param_at(&self, target: f64) -> Result<f64> {
        if target.is_nan() || target <= 0.0 {
            return Err(Error::InvalidArgument("target BER must be > 0".into()));
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.ber > 0.0)
            .map(|r| (r.channel_param, r.ber.log10()))
            .collect();
        let t = target.log10();
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if (y0 - t) * (y1 - t) <= 0.0 {
                if y0 == y1 {
                    return Ok(x0);
                }
                return Ok(x0 + (t - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        let (min, max) = pts
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, y)| {
                (lo.min(10f64.powf(y)), hi.max(10f64.powf(y)))
            });
        Err(Error::NotBracketed { target, min, max })
    }
}

/// Gain of curve `b` over curve `a` at `target` BER; positive means `b` is
/// better. In dB on the AWGN channel and in erasure probability on the BEC.
pub fn gain_at_ber(a: &BerTable, b: &BerTable, target: f64) -> Result<f64> {
    if a.kind != b.kind {
        return Err(Error::InvalidArgument(
            "tables use different channels".into(),
        ));
    }
    let (pa, pb) = (a.param_at(target)?, b.param_at(target)?);
    Ok(match a.kind {
        ChannelKind::Awgn => pa - pb,
        ChannelKind::Bec => pb - pa,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    frames: u64,
    half_errors: u64,
    frame_errors: u64,
}

impl Counts {
    fn add(mut self, o: Counts) -> Counts {
        self.frames += o.frames;
        self.half_errors += o.half_errors;
        self.frame_errors += o.frame_errors;
        self
    }
}

fn simulate_frame(
    graph: &TannerGraph,
    channel: &ChannelSpec,
    opts: &DecodeOptions,
    frame_seed: u64,
) -> Result<Counts> {
    let symbols = vec![1.0; graph.num_vns()];
    let llr = transmit(
        &symbols,
        channel,
        &mut seed::rng(frame_seed, &[seed::TAG_CHANNEL]),
    );
    let r = decoder::decode(graph, &llr, &symbols, opts)?;
    let half_errors: u64 = r
        .posteriors
        .iter()
        .map(|&l| {
            if l < 0.0 {
                2
            } else if l == 0.0 {
                1
            } else {
                0
            }
        })
        .sum();
    Ok(Counts {
        frames: 1,
        half_errors,
        frame_errors: u64::from(half_errors > 0),
    })
}

/// Progress units announced per channel point.
const PROGRESS_UNITS: u64 = 1000;

/// Share of the stop rule met so far, whichever limit is closer.
fn point_progress(total: &Counts, stop: &StopRule) -> u64 {
    let by_errors = total.half_errors as f64 / (2 * stop.min_bit_errors.max(1)) as f64;
    let by_frames = total.frames as f64 / stop.max_frames as f64;
    (by_errors.max(by_frames).min(1.0) * PROGRESS_UNITS as f64) as u64
}

/// Runs every channel point of `config`. Frame `f` of point `p` uses the
/// seed `(seed, p, f)` and the graph of block `f / h_refresh`, so the table
/// does not depend on the worker count.
pub fn run_ber(config: &BerConfig, control: &RunControl) -> Result<BerTable> {
    config.validate()?;
    let spec = config.code.realize(config.n)?;
    let opts = DecodeOptions {
        max_iter: config.max_iter,
        record: false,
        ..Default::default()
    };
    let stop = config.stop;
    control.add_total(config.points.len() as u64 * PROGRESS_UNITS);

    let mut rows = Vec::with_capacity(config.points.len());
    for (p, &param) in config.points.iter().enumerate() {
        let channel = config.channel.with_param(param);
        let mut total = Counts::default();
        let mut graphs: BTreeMap<u64, TannerGraph> = BTreeMap::new();
        let mut reported = 0;
        while total.frames < stop.max_frames && total.half_errors < 2 * stop.min_bit_errors {
            control.check()?;
            let start = total.frames;
            let end = (start + config.batch).min(stop.max_frames);
            let blocks: Vec<u64> = (start / config.h_refresh..=(end - 1) / config.h_refresh)
                .filter(|b| !graphs.contains_key(b))
                .collect();
            let fresh: Vec<(u64, TannerGraph)> = seed::with_workers(config.workers, || {
                blocks
                    .par_iter()
                    .map(|&b| {
                        let s = seed::derive(config.seed, &[seed::TAG_GRAPH, p as u64, b]);
                        config.girth.sample(&spec, s).map(|g| (b, g.graph))
                    })
                    .collect::<Result<_>>()
            })?;
            graphs.extend(fresh);
            let batch = seed::with_workers(config.workers, || {
                (start..end)
                    .into_par_iter()
                    .map(|f| {
                        let g = &graphs[&(f / config.h_refresh)];
                        simulate_frame(
                            g,
                            &channel,
                            &opts,
                            seed::derive(config.seed, &[p as u64, f]),
                        )
                    })
                    .try_reduce(Counts::default, |a, b| Ok(a.add(b)))
            })?;
            total = total.add(batch);
            // keep only the block that may continue into the next batch
            let keep = total.frames / config.h_refresh;
            graphs.retain(|&b, _| b >= keep);
            let units = point_progress(&total, &stop);
            control.advance(units - reported);
            reported = units;
        }
        let graphs_used = total.frames.div_ceil(config.h_refresh);
        rows.push(BerRow::from_counts(
            param,
            config.n,
            &total,
            graphs_used,
            stop.min_bit_errors,
        ));
        control.advance(PROGRESS_UNITS - reported);
    }
    let mut table = BerTable {
        kind: config.channel.kind,
        rows,
        config: Some(serde_json::to_value(config)?),
    };
    table.sort_rows();
    Ok(table)
}
