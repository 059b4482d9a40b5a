//! Analytic EXIT curves for the variable- and check-node decoders.
//!
//! On the BEC the curves are exact polynomials in the a-priori information.
//! On the binary-input AWGN channel messages are modelled as consistent
//! Gaussians and mapped through the J-function; the check-node curve uses the
//! usual duality approximation.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, ChannelSpec};
use crate::decoder::Layer;
use crate::profile::DegreeProfile;
use crate::{Error, Result};

const TABLE_STEP: f64 = 0.01;
const TABLE_MAX: f64 = 40.0;
const QUAD_HALF_WIDTH: f64 = 12.0;
const QUAD_INTERVALS: usize = 2400;

/// End guard: curves meet at (1, 1) by construction.
pub const TUNNEL_DELTA: f64 = 1e-3;
pub const TUNNEL_GRID: usize = 1024;
pub const BEC_TOL: f64 = 1e-4;
pub const DB_TOL: f64 = 0.01;
pub const DB_RANGE: (f64, f64) = (-10.0, 20.0);

/// `J(sigma)` by composite Simpson quadrature over the standardized Gaussian.
pub fn j_quadrature(sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let mu = sigma * sigma / 2.0;
    let h = 2.0 * QUAD_HALF_WIDTH / QUAD_INTERVALS as f64;
    let f = |t: f64| {
        let l = mu + sigma * t;
        let sp = if l < 0.0 {
            -l + l.exp().ln_1p()
        } else {
            (-l).exp().ln_1p()
        };
        (-t * t / 2.0).exp() * sp
    };
    let mut acc = f(-QUAD_HALF_WIDTH) + f(QUAD_HALF_WIDTH);
    for k in 1..QUAD_INTERVALS {
        let t = -QUAD_HALF_WIDTH + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(t);
    }
    let expectation = acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt();
    (1.0 - expectation / std::f64::consts::LN_2).clamp(0.0, 1.0)
}

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (TABLE_MAX / TABLE_STEP).round() as usize;
        (0..=n)
            .map(|k| j_quadrature(k as f64 * TABLE_STEP))
            .collect()
    })
}

/// Mutual information of a consistent Gaussian LLR with standard deviation
/// `sigma` (mean `sigma^2 / 2`). Tabulated quadrature, cubic interpolation.
pub fn j_function(sigma: f64) -> f64 {
    if sigma.is_nan() || sigma <= 0.0 {
        return 0.0;
    }
    if sigma >= TABLE_MAX {
        return if sigma.is_finite() {
            j_quadrature(sigma)
        } else {
            1.0
        };
    }
    let t = table();
    let pos = sigma / TABLE_STEP;
    let i = (pos.floor() as usize).clamp(1, t.len() - 3);
    let u = pos - i as f64;
    // 4-point Lagrange on nodes i-1 .. i+2
    let (p0, p1, p2, p3) = (t[i - 1], t[i], t[i + 1], t[i + 2]);
    let v = -u * (u - 1.0) * (u - 2.0) / 6.0 * p0 + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * p1
        - (u + 1.0) * u * (u - 2.0) / 2.0 * p2
        + (u + 1.0) * u * (u - 1.0) / 6.0 * p3;
    v.clamp(0.0, 1.0)
}

/// Inverse of [`j_function`] by bisection. `I = 1` has no finite preimage.
pub fn j_inverse(info: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&info) {
        return if info >= 1.0 {
            Err(Error::Unbounded(info))
        } else {
            Err(Error::InvalidArgument(format!(
                "mutual information {info} < 0"
            )))
        };
    }
    Ok(j_inverse_saturating(info))
}

/// Like [`j_inverse`] but returns `+inf` for `I >= 1` and 0 for `I <= 0`.
pub fn j_inverse_saturating(info: f64) -> f64 {
    if info <= 0.0 {
        return 0.0;
    }
    if info >= 1.0 {
        return f64::INFINITY;
    }
    let mut hi = 1.0;
    while j_function(hi) < info {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if j_function(mid) < info {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Variable-node decoder extrinsic information for a-priori input `ia`.
pub fn vnd_curve(profile: &DegreeProfile, ia: f64, channel: &ChannelSpec) -> f64 {
    let edge = profile.to_edge();
    match channel.kind {
        ChannelKind::Bec => edge
            .lambda
            .iter()
            .map(|t| t.weight * (1.0 - channel.param * (1.0 - ia).powi(t.degree as i32 - 1)))
            .sum::<f64>(),
        ChannelKind::Awgn => {
            let sa = j_inverse_saturating(ia);
            let sch = channel.llr_sigma();
            edge.lambda
                .iter()
                .map(|t| {
                    let s = if sa.is_infinite() {
                        f64::INFINITY
                    } else {
                        ((t.degree as f64 - 1.0) * sa * sa + sch * sch).sqrt()
                    };
                    t.weight * j_function(s)
                })
                .sum()
        }
    }
    .clamp(0.0, 1.0)
}

/// Check-node decoder extrinsic information for a-priori input `ia`.
pub fn cnd_curve(profile: &DegreeProfile, ia: f64, channel: &ChannelSpec) -> f64 {
    let edge = profile.to_edge();
    match channel.kind {
        ChannelKind::Bec => edge
            .rho
            .iter()
            .map(|t| t.weight * ia.powi(t.degree as i32 - 1))
            .sum::<f64>(),
        ChannelKind::Awgn => {
            let s = j_inverse_saturating(1.0 - ia);
            edge.rho
                .iter()
                .map(|t| {
                    let d = t.degree as f64 - 1.0;
                    let inner = if d == 0.0 { 0.0 } else { d.sqrt() * s };
                    t.weight * (1.0 - j_function(inner))
                })
                .sum()
        }
    }
    .clamp(0.0, 1.0)
}

/// A-priori input at which the check-node curve outputs `ie`.
pub fn cnd_inverse(profile: &DegreeProfile, ie: f64, channel: &ChannelSpec) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cnd_curve(profile, mid, channel) < ie {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A sampled analytic transfer curve on a uniform a-priori grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCurve {
    pub component: Layer,
    pub channel: ChannelSpec,
    /// `(I_A, I_E)` pairs.
    pub samples: Vec<(f64, f64)>,
}

/// Samples both curves at `points` uniformly spaced a-priori values.
pub fn sample_curves(
    profile: &DegreeProfile,
    channel: &ChannelSpec,
    points: usize,
) -> (ExitCurve, ExitCurve) {
    let points = points.max(2);
    let grid: Vec<f64> = (0..points)
        .map(|k| k as f64 / (points - 1) as f64)
        .collect();
    let vnd = grid
        .iter()
        .map(|&x| (x, vnd_curve(profile, x, channel)))
        .collect();
    let cnd = grid
        .iter()
        .map(|&x| (x, cnd_curve(profile, x, channel)))
        .collect();
    (
        ExitCurve {
            component: Layer::Vnd,
            channel: *channel,
            samples: vnd,
        },
        ExitCurve {
            component: Layer::Cnd,
            channel: *channel,
            samples: cnd,
        },
    )
}

/// CSV with columns `I_A,I_E_vnd,I_E_cnd`.
pub fn curves_csv(profile: &DegreeProfile, channel: &ChannelSpec, points: usize) -> String {
    let (vnd, cnd) = sample_curves(profile, channel, points);
    let mut out = String::from("I_A,I_E_vnd,I_E_cnd\n");
    for (v, c) in vnd.samples.iter().zip(&cnd.samples) {
        out.push_str(&format!("{},{},{}\n", v.0, v.1, c.1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelReport {
    pub open: bool,
    pub min_gap: f64,
    /// `I_A,VND` where the gap is smallest.
    pub pinch_location: f64,
}

/// Gap `vnd(I) - cnd^{-1}(I)` on a uniform grid over `[0, 1 - delta]`.
/// Open iff the gap stays positive.
pub fn tunnel_open(
    profile: &DegreeProfile,
    channel: &ChannelSpec,
    grid_size: usize,
) -> TunnelReport {
    let grid_size = grid_size.max(2);
    let top = 1.0 - TUNNEL_DELTA;
    let mut min_gap = f64::INFINITY;
    let mut pinch = 0.0;
    for k in 0..grid_size {
        let x = top * k as f64 / (grid_size - 1) as f64;
        let gap = vnd_curve(profile, x, channel) - cnd_inverse(profile, x, channel);
        if gap < min_gap {
            min_gap = gap;
            pinch = x;
        }
    }
    TunnelReport {
        open: min_gap > 0.0,
        min_gap,
        pinch_location: pinch,
    }
}

/// Worst channel parameter with an open tunnel: the largest erasure
/// probability on the BEC, the smallest Eb/N0 (dB) on the AWGN channel.
pub fn threshold_search(profile: &DegreeProfile, kind: ChannelKind) -> Result<f64> {
    let violations = profile.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProfile(violations));
    }
    let rate = profile.design_rate();
    let open = |param: f64| {
        let ch = ChannelSpec { kind, param, rate };
        tunnel_open(profile, &ch, TUNNEL_GRID).open
    };
    // `good` is the open end of the bracket
    let (mut good, mut bad, tol) = match kind {
        ChannelKind::Bec => (0.0, 1.0, BEC_TOL),
        ChannelKind::Awgn => (DB_RANGE.1, DB_RANGE.0, DB_TOL),
    };
    if !open(good) {
        return Err(Error::Bracket(format!("tunnel closed at {kind}:{good}")));
    }
    if open(bad) {
        return Err(Error::Bracket(format!("tunnel open at {kind}:{bad}")));
    }
    // bisect well below the reporting tolerance
    while (good - bad).abs() > tol / 16.0 {
        let mid = 0.5 * (good + bad);
        if open(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(0.5 * (good + bad))
}

/// Areas under the a-priori-only transfer curves (BEC, no channel
/// information) and the rate they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaCheck {
    /// `1 - sum lambda_i / i`
    pub vnd_area: f64,
    /// `sum rho_j / j`
    pub cnd_area: f64,
    /// `1 - cnd_area / (1 - vnd_area)`
    pub implied_rate: f64,
}

pub fn area_rate_check(profile: &DegreeProfile) -> AreaCheck {
    let edge = profile.to_edge();
    let inv_v: f64 = edge.lambda.iter().map(|t| t.weight / t.degree as f64).sum();
    let inv_c: f64 = edge.rho.iter().map(|t| t.weight / t.degree as f64).sum();
    let vnd_area = 1.0 - inv_v;
    let cnd_area = inv_c;
    AreaCheck {
        vnd_area,
        cnd_area,
        implied_rate: 1.0 - cnd_area / (1.0 - vnd_area),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{fixtures, Term};
    use approx::assert_abs_diff_eq;

    #[test]
    fn j_endpoints() {
        assert_eq!(j_function(0.0), 0.0);
        assert!(j_function(100.0) > 1.0 - 1e-9);
        assert!(matches!(j_inverse(1.0), Err(Error::Unbounded(_))));
        assert_eq!(j_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn j_matches_reference_quadrature() {
        // adaptive quadrature reference values (independent integrator)
        let reference = [
            (0.5, 0.04372996294430942),
            (1.0, 0.16074721979641682),
            (2.0, 0.48594415413293524),
            (3.0, 0.759979007771231),
            (5.0, 0.9751790043132441),
            (10.0, 0.9999987547147489),
        ];
        for (s, j) in reference {
            assert_abs_diff_eq!(j_function(s), j, epsilon = 1e-8);
            assert_abs_diff_eq!(j_quadrature(s), j, epsilon = 1e-10);
        }
        // interpolation between nodes
        for k in 0..400 {
            let s = 0.003 + k as f64 * 0.0731;
            assert_abs_diff_eq!(j_function(s), j_quadrature(s), epsilon = 1e-8);
        }
    }

    #[test]
    fn j_half_point() {
        let s = j_inverse(0.5).unwrap();
        assert_abs_diff_eq!(s, 2.0435393957078567, epsilon = 1e-6);
        for i in [0.01, 0.2, 0.7, 0.99, 0.999999] {
            assert_abs_diff_eq!(j_function(j_inverse(i).unwrap()), i, epsilon = 1e-10);
        }
    }

    #[test]
    fn bec_curves() {
        let p = DegreeProfile::regular(3, 6);
        let ch = ChannelSpec::bec(0.25);
        assert_abs_diff_eq!(vnd_curve(&p, 0.5, &ch), 0.9375, epsilon = 1e-15);
        assert_abs_diff_eq!(cnd_curve(&p, 0.5, &ch), 0.03125, epsilon = 1e-15);
        for (_, q) in fixtures::code_profiles() {
            assert_abs_diff_eq!(vnd_curve(&q, 1.0, &ch), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(vnd_curve(&q, 0.0, &ch), 0.75, epsilon = 1e-12);
            assert_abs_diff_eq!(cnd_curve(&q, 1.0, &ch), 1.0, epsilon = 1e-12);
            assert_eq!(cnd_curve(&q, 0.0, &ch), 0.0);
        }
    }

    #[test]
    fn awgn_curves_endpoints() {
        let p = fixtures::get("code_b_orig").unwrap();
        let ch = ChannelSpec::awgn(2.0, p.design_rate());
        assert_eq!(vnd_curve(&p, 1.0, &ch), 1.0);
        assert_abs_diff_eq!(cnd_curve(&p, 1.0, &ch), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cnd_curve(&p, 0.0, &ch), 0.0, epsilon = 1e-12);
        // with no a-priori input every VN sees only the channel
        assert_abs_diff_eq!(
            vnd_curve(&p, 0.0, &ch),
            j_function(ch.llr_sigma()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn curves_monotone() {
        let channels = [ChannelSpec::bec(0.3), ChannelSpec::awgn(1.0, 0.5)];
        for (_, p) in fixtures::code_profiles() {
            for ch in &channels {
                let (v, c) = sample_curves(&p, ch, 201);
                for w in v.samples.windows(2) {
                    assert!(w[1].1 >= w[0].1 - 1e-12);
                }
                for w in c.samples.windows(2) {
                    assert!(w[1].1 >= w[0].1 - 1e-12);
                }
                assert!(v
                    .samples
                    .iter()
                    .chain(&c.samples)
                    .all(|s| (0.0..=1.0).contains(&s.1)));
            }
        }
    }

    /// Density evolution on the BEC: x <- eps * lambda(1 - rho(1 - x)).
    fn de_converges(p: &DegreeProfile, eps: f64) -> bool {
        let lam = |x: f64| {
            p.lambda
                .iter()
                .map(|t| t.weight * x.powi(t.degree as i32 - 1))
                .sum::<f64>()
        };
        let rho = |x: f64| {
            p.rho
                .iter()
                .map(|t| t.weight * x.powi(t.degree as i32 - 1))
                .sum::<f64>()
        };
        let mut x = eps;
        for _ in 0..100_000 {
            let next = eps * lam(1.0 - rho(1.0 - x));
            if next < 1e-10 {
                return true;
            }
            if (x - next).abs() < 1e-15 {
                return false;
            }
            x = next;
        }
        false
    }

    #[test]
    fn tunnel_matches_density_evolution() {
        let p = DegreeProfile::regular(3, 6);
        assert!(de_converges(&p, 0.40));
        assert!(!de_converges(&p, 0.45));
        assert!(tunnel_open(&p, &ChannelSpec::bec(0.40), TUNNEL_GRID).open);
        let closed = tunnel_open(&p, &ChannelSpec::bec(0.45), TUNNEL_GRID);
        assert!(!closed.open);
        assert!(closed.min_gap <= 0.0);
        for (_, q) in fixtures::code_profiles() {
            assert!(tunnel_open(&q, &ChannelSpec::bec(0.0), 256).open);
        }
    }

    #[test]
    fn bec_thresholds() {
        let t36 = threshold_search(&DegreeProfile::regular(3, 6), ChannelKind::Bec).unwrap();
        assert_abs_diff_eq!(t36, 0.42944, epsilon = 1e-3);
        let t35 = threshold_search(&DegreeProfile::regular(3, 5), ChannelKind::Bec).unwrap();
        assert_abs_diff_eq!(t35, 0.51757, epsilon = 2e-3);
    }

    #[test]
    fn awgn_threshold_regular() {
        // (3,6)-regular BiAWGN Gaussian-approximation threshold ~1.1 dB
        let t = threshold_search(&DegreeProfile::regular(3, 6), ChannelKind::Awgn).unwrap();
        assert!((0.9..1.3).contains(&t), "{t}");
    }

    #[test]
    fn threshold_rejects_invalid() {
        let bad = DegreeProfile::edge(vec![Term::new(2, 0.5)], vec![Term::new(6, 1.0)]);
        assert!(matches!(
            threshold_search(&bad, ChannelKind::Bec),
            Err(Error::InvalidProfile(_))
        ));
    }

    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn areas_match_quadrature() {
        let ch = ChannelSpec::bec(1.0);
        for (_, p) in fixtures::code_profiles() {
            let a = area_rate_check(&p);
            assert_abs_diff_eq!(
                a.vnd_area,
                simpson(|x| vnd_curve(&p, x, &ch), 2000),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                a.cnd_area,
                simpson(|x| cnd_curve(&p, x, &ch), 2000),
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(a.implied_rate, p.design_rate(), epsilon = 1e-12);
        }
        let reg = area_rate_check(&DegreeProfile::regular(3, 6));
        assert_abs_diff_eq!(reg.implied_rate, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(reg.cnd_area, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn code_a_edit_preserves_rate() {
        let orig = area_rate_check(&fixtures::get("code_a_orig").unwrap());
        let modi = area_rate_check(&fixtures::get("code_a_mod").unwrap());
        assert!((orig.implied_rate - modi.implied_rate).abs() < 0.005);
    }

    #[test]
    fn csv_layout() {
        let csv = curves_csv(&DegreeProfile::regular(3, 6), &ChannelSpec::bec(0.25), 3);
        assert_eq!(
            csv,
            "I_A,I_E_vnd,I_E_cnd\n0,0.75,0\n0.5,0.9375,0.03125\n1,1,1\n"
        );
    }
}
