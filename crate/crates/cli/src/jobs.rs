//! Job parameters and their execution.
//!
//! The CLI and the HTTP service both turn requests into a [`JobParams`],
//! resolve it with [`JobParams::prepare`] and run it with [`execute`], so the
//! artifacts they produce for the same parameters are the same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sexit_core::exit::{self, TunnelReport};
use sexit_core::profile::{fixtures, Code};
use sexit_core::sexit::{self as engine, IndependentConfig};
use sexit_core::{
    BerConfig, ChannelKind, ChannelSpec, DegreeProfile, Error, GirthPolicy, HMode, Layer,
    RunControl, SExitConfig, SExitHistogram, StopRule,
};

pub const DEFAULT_CURVE_POINTS: usize = 101;
pub const DEFAULT_APRIORI_POINTS: usize = 21;
pub const DEFAULT_SAMPLES_PER_POINT: usize = 20;

/// A profile given inline or by name. Names refer to stored workspace
/// profiles or to the built-in fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Named(String),
    Inline(DegreeProfile),
}

impl ProfileSource {
    fn inline(&self) -> Result<&DegreeProfile, Error> {
        match self {
            ProfileSource::Inline(p) => Ok(p),
            ProfileSource::Named(name) => Err(Error::InvalidArgument(format!(
                "profile '{name}' was not resolved"
            ))),
        }
    }

    fn resolve(&mut self, lookup: &dyn Fn(&str) -> Option<DegreeProfile>) -> Result<(), Error> {
        if let ProfileSource::Named(name) = self {
            let profile = lookup(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown profile '{name}'")))?;
            *self = ProfileSource::Inline(profile);
        }
        let violations = self.inline()?.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(violations))
        }
    }
}

/// Built-in fixture profiles by name.
pub fn fixture_lookup(name: &str) -> Option<DegreeProfile> {
    fixtures::get(name)
}

/// Reads a profile file, falling back to a fixture name.
pub fn load_profile(path: &str) -> anyhow::Result<DegreeProfile> {
    if !Path::new(path).exists() {
        if let Some(p) = fixtures::get(path) {
            return Ok(p);
        }
    }
    let text =
        fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading profile {path}: {e}"))?;
    Ok(DegreeProfile::from_json(&text)?)
}

fn channel_spec(
    profile: &DegreeProfile,
    channel: &str,
    rate: Option<f64>,
) -> Result<ChannelSpec, Error> {
    ChannelSpec::parse(channel, rate.unwrap_or_else(|| profile.design_rate()))
}

fn default_trajectories() -> usize {
    engine::DEFAULT_TRAJECTORIES
}

fn default_grid() -> usize {
    engine::DEFAULT_GRID
}

fn default_max_iter() -> usize {
    sexit_core::decoder::DEFAULT_MAX_ITER
}

fn default_curve_points() -> usize {
    DEFAULT_CURVE_POINTS
}

fn default_apriori() -> Vec<f64> {
    IndependentConfig::uniform_apriori(DEFAULT_APRIORI_POINTS)
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_POINT
}

fn default_batch() -> u64 {
    64
}

fn one() -> u64 {
    1
}

/// Scattered chart over full decoding trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SExitParams {
    pub profile: ProfileSource,
    pub n: usize,
    /// `bec:<erasure>` or `awgn:<Eb/N0 dB>`.
    pub channel: String,
    /// Rate used for Eb/N0; defaults to the design rate.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub h_mode: HMode,
    #[serde(default)]
    pub girth: GirthPolicy,
    #[serde(default)]
    pub seed: u64,
}

/// Chart from isolated component decoders fed synthetic a-priori input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentParams {
    pub profile: ProfileSource,
    pub n: usize,
    pub channel: String,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_apriori")]
    pub apriori: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_point: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub girth: GirthPolicy,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerParams {
    pub profile: ProfileSource,
    pub n: usize,
    pub channel: ChannelKind,
    /// Erasure probabilities or Eb/N0 values in dB.
    pub points: Vec<f64>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default = "one")]
    pub h_refresh: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_batch")]
    pub batch: u64,
    #[serde(default)]
    pub girth: GirthPolicy,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub profile: ProfileSource,
    pub channel: String,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_curve_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub profile: ProfileSource,
    pub channel: ChannelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobParams {
    Sexit(SExitParams),
    SexitIndependent(IndependentParams),
    Ber(BerParams),
    Analytic(AnalyticParams),
    Threshold(ThresholdParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Sexit,
    SexitIndependent,
    Ber,
    Analytic,
    Threshold,
}

impl SExitParams {
    pub fn config(&self) -> Result<SExitConfig, Error> {
        let profile = self.profile.inline()?;
        let config = SExitConfig {
            trajectories: self.trajectories,
            max_iter: self.max_iter,
            grid: self.grid,
            h_mode: self.h_mode,
            girth: self.girth,
            seed: self.seed,
            ..SExitConfig::new(
                Code::Profile(profile.clone()),
                self.n,
                channel_spec(profile, &self.channel, self.rate)?,
            )
        };
        config.validate()?;
        Ok(config)
    }
}

impl IndependentParams {
    pub fn config(&self) -> Result<IndependentConfig, Error> {
        let profile = self.profile.inline()?;
        if self.samples_per_point == 0 || self.apriori.is_empty() || self.grid < 2 {
            return Err(Error::InvalidArgument(
                "need a-priori points, samples_per_point >= 1 and grid >= 2".into(),
            ));
        }
        if let Some(bad) = self.apriori.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!(
                "a-priori value {bad} outside [0, 1]"
            )));
        }
        Ok(IndependentConfig {
            code: Code::Profile(profile.clone()),
            n: self.n,
            channel: channel_spec(profile, &self.channel, self.rate)?,
            apriori: self.apriori.clone(),
            samples_per_point: self.samples_per_point,
            grid: self.grid,
            girth: self.girth,
            seed: self.seed,
            workers: 0,
        })
    }
}

impl BerParams {
    pub fn config(&self) -> Result<BerConfig, Error> {
        let profile = self.profile.inline()?;
        let rate = self.rate.unwrap_or_else(|| profile.design_rate());
        let config = BerConfig {
            stop: self.stop,
            h_refresh: self.h_refresh,
            max_iter: self.max_iter,
            batch: self.batch,
            girth: self.girth,
            seed: self.seed,
            ..BerConfig::new(
                Code::Profile(profile.clone()),
                self.n,
                ChannelSpec {
                    kind: self.channel,
                    param: 0.0,
                    rate,
                },
                self.points.clone(),
            )
        };
        config.validate()?;
        Ok(config)
    }
}

impl AnalyticParams {
    pub fn channel(&self) -> Result<ChannelSpec, Error> {
        channel_spec(self.profile.inline()?, &self.channel, self.rate)
    }

    pub fn curve_set(&self) -> Result<CurveSet, Error> {
        Ok(curve_set(
            self.profile.inline()?,
            &self.channel()?,
            self.points,
        ))
    }
}

impl JobParams {
    pub fn kind(&self) -> JobKind {
        match self {
            JobParams::Sexit(_) => JobKind::Sexit,
            JobParams::SexitIndependent(_) => JobKind::SexitIndependent,
            JobParams::Ber(_) => JobKind::Ber,
            JobParams::Analytic(_) => JobKind::Analytic,
            JobParams::Threshold(_) => JobKind::Threshold,
        }
    }

    fn profile_mut(&mut self) -> &mut ProfileSource {
        match self {
            JobParams::Sexit(p) => &mut p.profile,
            JobParams::SexitIndependent(p) => &mut p.profile,
            JobParams::Ber(p) => &mut p.profile,
            JobParams::Analytic(p) => &mut p.profile,
            JobParams::Threshold(p) => &mut p.profile,
        }
    }

    /// Inlines a named profile and checks everything that can be checked
    /// without simulating, including quantization at the block length.
    pub fn prepare(
        mut self,
        lookup: &dyn Fn(&str) -> Option<DegreeProfile>,
    ) -> Result<Self, Error> {
        self.profile_mut().resolve(lookup)?;
        match &self {
            JobParams::Sexit(p) => {
                p.config()?.code.realize(p.n)?;
            }
            JobParams::SexitIndependent(p) => {
                p.config()?.code.realize(p.n)?;
            }
            JobParams::Ber(p) => {
                p.config()?.code.realize(p.n)?;
            }
            JobParams::Analytic(p) => {
                p.channel()?;
            }
            JobParams::Threshold(_) => {}
        }
        Ok(self)
    }
}

/// Files produced by one job. `primary` names the file served by default.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub primary: String,
    pub files: Vec<(String, Vec<u8>)>,
    /// Short human-readable report for the CLI.
    pub summary: String,
}

impl Artifacts {
    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    pub fn primary_bytes(&self) -> &[u8] {
        self.get(&self.primary).expect("primary artifact present")
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn pretty(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn histogram_files(hist: &SExitHistogram) -> Vec<(String, Vec<u8>)> {
    vec![
        ("bundle.json".into(), hist.to_bundle_json().into_bytes()),
        ("bins.csv".into(), hist.to_csv().into_bytes()),
        ("vnd.pgm".into(), hist.to_pgm(Layer::Vnd)),
        ("cnd.pgm".into(), hist.to_pgm(Layer::Cnd)),
    ]
}

/// Analytic curves on a shared a-priori grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub channel: ChannelSpec,
    pub design_rate: f64,
    pub ia: Vec<f64>,
    pub vnd: Vec<f64>,
    pub cnd: Vec<f64>,
    pub tunnel: TunnelReport,
}

pub fn curve_set(profile: &DegreeProfile, channel: &ChannelSpec, points: usize) -> CurveSet {
    let (vnd, cnd) = exit::sample_curves(profile, channel, points);
    CurveSet {
        channel: *channel,
        design_rate: profile.design_rate(),
        ia: vnd.samples.iter().map(|s| s.0).collect(),
        vnd: vnd.samples.iter().map(|s| s.1).collect(),
        cnd: cnd.samples.iter().map(|s| s.1).collect(),
        tunnel: exit::tunnel_open(profile, channel, exit::TUNNEL_GRID),
    }
}

/// Serialized form of a [`CurveSet`], shared by the synchronous endpoint,
/// the analytic job and `exit-curves --out`.
pub fn curve_set_json(set: &CurveSet) -> Vec<u8> {
    pretty(set)
}

/// Runs a prepared job.
pub fn execute(params: &JobParams, control: &RunControl) -> Result<Artifacts, Error> {
    match params {
        JobParams::Sexit(p) => {
            let config = p.config()?;
            let chart = engine::run_sexit(&config, control)?;
            let metrics = engine::optimization_metrics(&chart.trajectories, config.grid);
            let total = chart.trajectories.len();
            let converged = chart.trajectories.iter().filter(|t| t.converged).count();
            let mean_iterations = chart
                .trajectories
                .iter()
                .map(|t| t.iterations)
                .sum::<usize>() as f64
                / total as f64;
            let max_4cycles = chart
                .trajectories
                .iter()
                .map(|t| t.graph_4cycles)
                .max()
                .unwrap_or(0);
            let summary = json!({
                "trajectories": total,
                "converged": converged,
                "mean_iterations": mean_iterations,
                "max_graph_4cycles": max_4cycles,
                "metrics": metrics,
            });
            let mut files = histogram_files(&chart.histogram);
            files.push(("summary.json".into(), pretty(&summary)));
            Ok(Artifacts {
                primary: "bundle.json".into(),
                files,
                summary: format!(
                    "trajectories {total}\nconverged {converged}\nmean iterations {mean_iterations:.2}\n\
                     stuck fraction {:.4}\nmin gap band {}\noverlap mass {:.4}\nmax 4-cycles per graph {max_4cycles}\n",
                    metrics.stuck_fraction,
                    metrics
                        .min_gap_band
                        .map_or("n/a".to_string(), |g| format!("{g:.4}")),
                    metrics.overlap_mass,
                ),
            })
        }
        JobParams::SexitIndependent(p) => {
            let config = p.config()?;
            let chart = engine::run_independent(&config, control)?;
            let columns = json!({
                "vnd": engine::column_stats_binned(&chart.histogram, Layer::Vnd),
                "cnd": engine::column_stats_binned(&chart.histogram, Layer::Cnd),
            });
            let mut files = histogram_files(&chart.histogram);
            files.push(("columns.json".into(), pretty(&columns)));
            Ok(Artifacts {
                primary: "bundle.json".into(),
                files,
                summary: format!(
                    "a-priori points {}\nsamples per point {}\nvertices {}\n",
                    config.apriori.len(),
                    config.samples_per_point,
                    chart.vertices.len()
                ),
            })
        }
        JobParams::Ber(p) => {
            let table = sexit_core::run_ber(&p.config()?, control)?;
            let csv = table.to_csv();
            Ok(Artifacts {
                primary: "ber.csv".into(),
                files: vec![("ber.csv".into(), csv.clone().into_bytes())],
                summary: csv,
            })
        }
        JobParams::Analytic(p) => {
            let set = p.curve_set()?;
            let csv = exit::curves_csv(p.profile.inline()?, &set.channel, p.points);
            Ok(Artifacts {
                primary: "curves.json".into(),
                files: vec![
                    ("curves.json".into(), curve_set_json(&set)),
                    ("curves.csv".into(), csv.clone().into_bytes()),
                ],
                summary: csv,
            })
        }
        JobParams::Threshold(p) => {
            let profile = p.profile.inline()?;
            let threshold = exit::threshold_search(profile, p.channel)?;
            let value = json!({
                "channel": p.channel,
                "threshold": threshold,
                "design_rate": profile.design_rate(),
            });
            Ok(Artifacts {
                primary: "threshold.json".into(),
                files: vec![("threshold.json".into(), pretty(&value))],
                summary: format_threshold(p.channel, threshold),
            })
        }
    }
}

/// `0.4294` for an erasure probability, `1.23 dB` for Eb/N0.
pub fn format_threshold(kind: ChannelKind, value: f64) -> String {
    match kind {
        ChannelKind::Bec => format!("{value:.4}\n"),
        ChannelKind::Awgn => format!("{value:.2} dB\n"),
    }
}

/// Error payload: one entry per violated rule.
pub fn violations(err: &Error) -> Vec<Value> {
    match err {
        Error::InvalidProfile(list) => list
            .iter()
            .map(|v| {
                let mut entry = serde_json::to_value(v).unwrap_or(Value::Null);
                if let Value::Object(map) = &mut entry {
                    map.insert("message".into(), Value::String(v.to_string()));
                }
                entry
            })
            .collect(),
        Error::Infeasible(_) => vec![json!({"rule": "infeasible", "message": err.to_string()})],
        _ => vec![json!({"rule": "invalid_argument", "message": err.to_string()})],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(name: &str) -> ProfileSource {
        ProfileSource::Named(name.into())
    }

    #[test]
    fn params_parse_with_defaults() {
        let p: JobParams = serde_json::from_str(
            r#"{"kind":"sexit","profile":"reg35","n":155,"channel":"bec:0.25"}"#,
        )
        .unwrap();
        let JobParams::Sexit(s) = &p else {
            panic!("wrong kind")
        };
        assert_eq!(s.trajectories, 1000);
        assert_eq!(s.grid, 200);
        assert_eq!(p.kind(), JobKind::Sexit);
    }

    #[test]
    fn prepare_inlines_named_profiles() {
        let p = JobParams::Threshold(ThresholdParams {
            profile: named("reg36"),
            channel: ChannelKind::Bec,
        })
        .prepare(&fixture_lookup)
        .unwrap();
        let JobParams::Threshold(t) = p else {
            unreachable!()
        };
        assert_eq!(
            t.profile,
            ProfileSource::Inline(DegreeProfile::regular(3, 6))
        );
    }

    #[test]
    fn prepare_reports_profile_violations() {
        let bad = DegreeProfile::from_exponents(&[(2, 0.7)], &[(5, 1.0)]);
        let err = JobParams::Analytic(AnalyticParams {
            profile: ProfileSource::Inline(bad),
            channel: "bec:0.3".into(),
            rate: None,
            points: 11,
        })
        .prepare(&fixture_lookup)
        .unwrap_err();
        let list = violations(&err);
        assert_eq!(list.len(), 1);
        assert_eq!(list[0]["rule"], "weight_sum");
        assert!(list[0]["message"].as_str().unwrap().contains("lambda"));
    }

    #[test]
    fn prepare_rejects_unknown_names_and_bad_channels() {
        let unknown = JobParams::Threshold(ThresholdParams {
            profile: named("nope"),
            channel: ChannelKind::Bec,
        });
        assert!(unknown.prepare(&fixture_lookup).is_err());
        let bad_channel = JobParams::Analytic(AnalyticParams {
            profile: named("reg36"),
            channel: "bec:1.5".into(),
            rate: None,
            points: 11,
        });
        assert!(bad_channel.prepare(&fixture_lookup).is_err());
    }

    #[test]
    fn rate_defaults_to_design_rate() {
        let p = AnalyticParams {
            profile: ProfileSource::Inline(fixtures::get("code_b_orig").unwrap()),
            channel: "awgn:1.0".into(),
            rate: None,
            points: 11,
        };
        let ch = p.channel().unwrap();
        assert!((ch.rate - 0.50199).abs() < 1e-4);
    }

    #[test]
    fn analytic_job_matches_core_curves() {
        let params = JobParams::Analytic(AnalyticParams {
            profile: named("code_a_orig"),
            channel: "bec:0.25".into(),
            rate: None,
            points: 21,
        })
        .prepare(&fixture_lookup)
        .unwrap();
        let art = execute(&params, &RunControl::new()).unwrap();
        let set: CurveSet = serde_json::from_slice(art.primary_bytes()).unwrap();
        let profile = fixtures::get("code_a_orig").unwrap();
        let ch = set.channel;
        for (k, &ia) in set.ia.iter().enumerate() {
            assert_eq!(set.vnd[k], exit::vnd_curve(&profile, ia, &ch));
            assert_eq!(set.cnd[k], exit::cnd_curve(&profile, ia, &ch));
        }
    }

    #[test]
    fn threshold_formatting() {
        assert_eq!(format_threshold(ChannelKind::Bec, 0.429_44), "0.4294\n");
        assert_eq!(format_threshold(ChannelKind::Awgn, 1.111), "1.11 dB\n");
    }
}
