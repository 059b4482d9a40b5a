//! LDPC degree distributions.
//!
//! A [`DegreeProfile`] holds the variable-node polynomial `lambda` and the
//! check-node polynomial `rho`, either from the edge perspective (fraction of
//! edges attached to nodes of a degree) or the node perspective (fraction of
//! nodes). Degrees are stored directly; a polynomial term `w * Z^k` in the
//! usual edge-perspective notation is a node of degree `k + 1`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    Edge,
    Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub degree: u32,
    pub weight: f64,
}

impl Term {
    pub fn new(degree: u32, weight: f64) -> Self {
        Term { degree, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Poly {
    Lambda,
    Rho,
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Poly::Lambda => "lambda",
            Poly::Rho => "rho",
        })
    }
}

/// A broken profile invariant. Validation returns these as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    Empty {
        field: Poly,
    },
    WeightSum {
        field: Poly,
        sum: f64,
    },
    NegativeWeight {
        field: Poly,
        degree: u32,
        weight: f64,
    },
    NonFinite {
        field: Poly,
        degree: u32,
    },
    ZeroDegree {
        field: Poly,
    },
    DuplicateDegree {
        field: Poly,
        degree: u32,
    },
    Rate {
        rate: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty { field } => write!(f, "{field}: no terms"),
            Violation::WeightSum { field, sum } => write!(f, "{field}: weights sum to {sum}"),
            Violation::NegativeWeight {
                field,
                degree,
                weight,
            } => write!(f, "{field}: negative weight {weight} at degree {degree}"),
            Violation::NonFinite { field, degree } => {
                write!(f, "{field}: non-finite weight at degree {degree}")
            }
            Violation::ZeroDegree { field } => write!(f, "{field}: degree must be >= 1"),
            Violation::DuplicateDegree { field, degree } => {
                write!(f, "{field}: degree {degree} listed more than once")
            }
            Violation::Rate { rate } => write!(f, "rate: design rate {rate} outside (0, 1)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub perspective: Perspective,
    pub lambda: Vec<Term>,
    pub rho: Vec<Term>,
}

impl DegreeProfile {
    pub fn edge(lambda: Vec<Term>, rho: Vec<Term>) -> Self {
        DegreeProfile {
            perspective: Perspective::Edge,
            lambda,
            rho,
        }
    }

    /// Builds an edge-perspective profile from `(exponent, weight)` pairs,
    /// where exponent `k` denotes degree `k + 1`.
    pub fn from_exponents(lambda: &[(u32, f64)], rho: &[(u32, f64)]) -> Self {
        let conv = |terms: &[(u32, f64)]| {
            terms
                .iter()
                .map(|&(k, w)| Term::new(k + 1, w))
                .collect::<Vec<_>>()
        };
        DegreeProfile::edge(conv(lambda), conv(rho))
    }

    pub fn regular(dv: u32, dc: u32) -> Self {
        DegreeProfile::edge(vec![Term::new(dv, 1.0)], vec![Term::new(dc, 1.0)])
    }

    /// Parses the JSON profile format and rejects invalid profiles.
    pub fn from_json(text: &str) -> Result<Self> {
        let profile: DegreeProfile = serde_json::from_str(text)?;
        profile.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Returns `self` if it is valid, otherwise the list of violations.
    pub fn validated(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidProfile(violations))
        }
    }

    /// Checks every profile invariant; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (field, terms) in [(Poly::Lambda, &self.lambda), (Poly::Rho, &self.rho)] {
            check_poly(field, terms, &mut out);
        }
        if out.is_empty() {
            let rate = self.design_rate();
            if !(rate > 0.0 && rate < 1.0) {
                out.push(Violation::Rate { rate });
            }
        }
        out
    }

    /// Design rate `1 - (sum rho_j / j) / (sum lambda_i / i)`.
    pub fn design_rate(&self) -> f64 {
        match self.perspective {
            Perspective::Edge => 1.0 - inverse_mean(&self.rho) / inverse_mean(&self.lambda),
            Perspective::Node => 1.0 - mean_degree(&self.lambda) / mean_degree(&self.rho),
        }
    }

    pub fn to_node(&self) -> DegreeProfile {
        match self.perspective {
            Perspective::Node => self.clone(),
            Perspective::Edge => DegreeProfile {
                perspective: Perspective::Node,
                lambda: edge_to_node(&self.lambda),
                rho: edge_to_node(&self.rho),
            },
        }
    }

    pub fn to_edge(&self) -> DegreeProfile {
        match self.perspective {
            Perspective::Edge => self.clone(),
            Perspective::Node => DegreeProfile {
                perspective: Perspective::Edge,
                lambda: node_to_edge(&self.lambda),
                rho: node_to_edge(&self.rho),
            },
        }
    }

    pub fn max_vn_degree(&self) -> u32 {
        self.lambda.iter().map(|t| t.degree).max().unwrap_or(0)
    }

    pub fn max_cn_degree(&self) -> u32 {
        self.rho.iter().map(|t| t.degree).max().unwrap_or(0)
    }

    /// Realizes the profile with integer node counts for block length `n`.
    ///
    /// Variable-node counts are the rounded node fractions, repaired one node
    /// at a time at the degree with the largest rounding residual. Check-node
    /// counts must then hit the edge total exactly; if the check-node degree
    /// set cannot, single (then double) variable-node degree moves are tried,
    /// cheapest first.
    pub fn quantize(&self, n: usize) -> Result<NodeDegreeSpec> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidProfile(violations));
        }
        if n < 8 {
            return Err(Error::InvalidArgument(format!(
                "block length {n} too small (need >= 8)"
            )));
        }
        let node = self.to_node();
        let edge = self.to_edge();

        let vn_target: Vec<(u32, f64)> = sorted_terms(&node.lambda)
            .into_iter()
            .map(|t| (t.degree, t.weight * n as f64))
            .collect();
        let mut vn = round_to_total(&vn_target, n);
        let cn_inv_mean = inverse_mean(&edge.rho);
        let cn_node = sorted_terms(&node.rho);

        let edges_of = |counts: &[usize]| -> usize {
            vn_target
                .iter()
                .zip(counts)
                .map(|(&(d, _), &c)| d as usize * c)
                .sum()
        };

        let mut e = edges_of(&vn);
        let mut cn = assign_check_nodes(e, cn_inv_mean, &cn_node);
        if cn.is_none() {
            let (moved, assigned) = repair_vn_counts(&vn_target, &vn, |counts| {
                assign_check_nodes(edges_of(counts), cn_inv_mean, &cn_node)
            })
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "no check-node assignment with degrees {:?} matches {} edges, \
                     even after moving up to two variable nodes",
                    cn_node.iter().map(|t| t.degree).collect::<Vec<_>>(),
                    e
                ))
            })?;
            vn = moved;
            e = edges_of(&vn);
            cn = Some(assigned);
        }
        let cn = cn.expect("assigned above");

        let spec = NodeDegreeSpec {
            n,
            edges: e,
            vn_counts: vn_target
                .iter()
                .zip(&vn)
                .filter(|(_, &c)| c > 0)
                .map(|(&(d, _), &c)| (d, c))
                .collect(),
            cn_counts: cn_node
                .iter()
                .zip(&cn)
                .filter(|(_, &c)| c > 0)
                .map(|(t, &c)| (t.degree, c))
                .collect(),
        };
        spec.check()?;
        Ok(spec)
    }
}

fn check_poly(field: Poly, terms: &[Term], out: &mut Vec<Violation>) {
    if terms.is_empty() {
        out.push(Violation::Empty { field });
        return;
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut sum = 0.0;
    let mut finite = true;
    for t in terms {
        if t.degree == 0 {
            out.push(Violation::ZeroDegree { field });
        }
        if !seen.insert(t.degree) {
            out.push(Violation::DuplicateDegree {
                field,
                degree: t.degree,
            });
        }
        if !t.weight.is_finite() {
            out.push(Violation::NonFinite {
                field,
                degree: t.degree,
            });
            finite = false;
            continue;
        }
        if t.weight < 0.0 {
            out.push(Violation::NegativeWeight {
                field,
                degree: t.degree,
                weight: t.weight,
            });
        }
        sum += t.weight;
    }
    if finite && (sum - 1.0).abs() > SUM_TOLERANCE {
        out.push(Violation::WeightSum { field, sum });
    }
}

/// `sum w_i / d_i`, the reciprocal of the node-perspective mean degree.
fn inverse_mean(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.weight / t.degree as f64).sum()
}

fn mean_degree(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.weight * t.degree as f64).sum()
}

fn edge_to_node(terms: &[Term]) -> Vec<Term> {
    let norm = inverse_mean(terms);
    terms
        .iter()
        .map(|t| Term::new(t.degree, t.weight / t.degree as f64 / norm))
        .collect()
}

fn node_to_edge(terms: &[Term]) -> Vec<Term> {
    let norm = mean_degree(terms);
    terms
        .iter()
        .map(|t| Term::new(t.degree, t.weight * t.degree as f64 / norm))
        .collect()
}

fn sorted_terms(terms: &[Term]) -> Vec<Term> {
    let mut v = terms.to_vec();
    v.sort_by_key(|t| t.degree);
    v
}

/// Rounds real targets to integers summing to `total`, adjusting at the
/// largest residual (or most negative one when removing).
fn round_to_total(target: &[(u32, f64)], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = target.iter().map(|&(_, t)| t.round() as usize).collect();
    let residual = |i: usize, c: &[usize]| target[i].1 - c[i] as f64;
    loop {
        let sum: usize = counts.iter().sum();
        if sum == total {
            return counts;
        }
        if sum < total {
            let i = (0..counts.len())
                .max_by(|&a, &b| {
                    residual(a, &counts)
                        .total_cmp(&residual(b, &counts))
                        .then(b.cmp(&a))
                })
                .expect("non-empty");
            counts[i] += 1;
        } else {
            let i = (0..counts.len())
                .filter(|&i| counts[i] > 0)
                .min_by(|&a, &b| {
                    residual(a, &counts)
                        .total_cmp(&residual(b, &counts))
                        .then(a.cmp(&b))
                })
                .expect("some count positive");
            counts[i] -= 1;
        }
    }
}

fn deviation(target: &[(u32, f64)], counts: &[usize]) -> f64 {
    target
        .iter()
        .zip(counts)
        .map(|(&(_, t), &c)| (c as f64 - t).abs())
        .sum()
}

/// Moves one or two variable nodes between degrees until the check side
/// becomes feasible, minimizing the total deviation from the targets.
fn repair_vn_counts(
    target: &[(u32, f64)],
    counts: &[usize],
    feasible: impl Fn(&[usize]) -> Option<Vec<usize>>,
) -> Option<(Vec<usize>, Vec<usize>)> {
    let k = counts.len();
    let moves: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();

    let apply = |base: &[usize], (a, b): (usize, usize)| -> Option<Vec<usize>> {
        if base[a] == 0 {
            return None;
        }
        let mut c = base.to_vec();
        c[a] -= 1;
        c[b] += 1;
        Some(c)
    };

    let mut candidates: Vec<Vec<usize>> = moves.iter().filter_map(|&m| apply(counts, m)).collect();
    let doubles: Vec<Vec<usize>> = candidates
        .iter()
        .flat_map(|c| moves.iter().filter_map(|&m| apply(c, m)))
        .collect();

    for pool in [&mut candidates, &mut doubles.clone()] {
        pool.sort_by(|x, y| deviation(target, x).total_cmp(&deviation(target, y)));
        for c in pool.iter() {
            if let Some(cn) = feasible(c) {
                return Some((c.clone(), cn));
            }
        }
    }
    None
}

/// Integer check-node counts with `sum d_j * m_j = edges`, as close as the
/// greedy repair gets to the node fractions of `rho`.
fn assign_check_nodes(edges: usize, inv_mean: f64, node: &[Term]) -> Option<Vec<usize>> {
    let dmin = node.iter().map(|t| t.degree).min()? as usize;
    let dmax = node.iter().map(|t| t.degree).max()? as usize;
    let lo = edges.div_ceil(dmax);
    let hi = edges / dmin;
    if lo > hi {
        return None;
    }
    let m_target = edges as f64 * inv_mean;
    let mut ms: Vec<usize> = (lo..=hi).collect();
    ms.sort_by(|&a, &b| {
        (a as f64 - m_target)
            .abs()
            .total_cmp(&(b as f64 - m_target).abs())
            .then(a.cmp(&b))
    });
    ms.into_iter()
        .find_map(|m| assign_for_count(edges, m, node))
}

fn assign_for_count(edges: usize, m: usize, node: &[Term]) -> Option<Vec<usize>> {
    let target: Vec<(u32, f64)> = node
        .iter()
        .map(|t| (t.degree, t.weight * m as f64))
        .collect();
    let mut counts = round_to_total(&target, m);
    loop {
        let current: i64 = target
            .iter()
            .zip(&counts)
            .map(|(&(d, _), &c)| d as i64 * c as i64)
            .sum();
        let deficit = edges as i64 - current;
        if deficit == 0 {
            return Some(counts);
        }
        let mut best: Option<(f64, i64, usize, usize)> = None;
        for a in 0..counts.len() {
            if counts[a] == 0 {
                continue;
            }
            for b in 0..counts.len() {
                let step = target[b].0 as i64 - target[a].0 as i64;
                if step == 0 || step.signum() != deficit.signum() || step.abs() > deficit.abs() {
                    continue;
                }
                let mut c = counts.clone();
                c[a] -= 1;
                c[b] += 1;
                let cost = deviation(&target, &c);
                let better = match best {
                    None => true,
                    Some((bc, bs, _, _)) => cost < bc || (cost == bc && step.abs() > bs.abs()),
                };
                if better {
                    best = Some((cost, step, a, b));
                }
            }
        }
        let (_, _, a, b) = best?;
        counts[a] -= 1;
        counts[b] += 1;
    }
}

/// The code ensemble a simulation draws graphs from: a degree profile
/// (quantized at the run's block length) or explicit node counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Code {
    Profile(DegreeProfile),
    Spec(NodeDegreeSpec),
}

impl Code {
    pub fn realize(&self, n: usize) -> Result<NodeDegreeSpec> {
        match self {
            Code::Profile(p) => p.quantize(n),
            Code::Spec(s) if s.n == n => {
                s.check()?;
                Ok(s.clone())
            }
            Code::Spec(s) => Err(Error::InvalidArgument(format!(
                "node-degree spec has N = {}, run asks for {n}",
                s.n
            ))),
        }
    }
}

/// Integer node-degree counts realizing a profile at block length `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDegreeSpec {
    pub n: usize,
    pub edges: usize,
    pub vn_counts: BTreeMap<u32, usize>,
    pub cn_counts: BTreeMap<u32, usize>,
}

impl NodeDegreeSpec {
    pub fn regular(n: usize, dv: u32, dc: u32) -> Result<Self> {
        let edges = n * dv as usize;
        if dc == 0 || !edges.is_multiple_of(dc as usize) {
            return Err(Error::Infeasible(format!(
                "{edges} edges not divisible by check degree {dc}"
            )));
        }
        let spec = NodeDegreeSpec {
            n,
            edges,
            vn_counts: [(dv, n)].into_iter().collect(),
            cn_counts: [(dc, edges / dc as usize)].into_iter().collect(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn num_checks(&self) -> usize {
        self.cn_counts.values().sum()
    }

    /// `1 - M/N` for the realized counts.
    pub fn realized_rate(&self) -> f64 {
        1.0 - self.num_checks() as f64 / self.n as f64
    }

    /// Degree of every variable node, ascending degree order.
    pub fn vn_degrees(&self) -> Vec<u32> {
        expand(&self.vn_counts)
    }

    pub fn cn_degrees(&self) -> Vec<u32> {
        expand(&self.cn_counts)
    }

    /// Verifies the counting invariants.
    pub fn check(&self) -> Result<()> {
        let vn_sum: usize = self.vn_counts.values().sum();
        if vn_sum != self.n {
            return Err(Error::Infeasible(format!(
                "variable-node counts sum to {vn_sum}, expected N = {}",
                self.n
            )));
        }
        let vn_edges: usize = self.vn_counts.iter().map(|(&d, &c)| d as usize * c).sum();
        let cn_edges: usize = self.cn_counts.iter().map(|(&d, &c)| d as usize * c).sum();
        if vn_edges != self.edges || cn_edges != self.edges {
            return Err(Error::Infeasible(format!(
                "edge totals disagree: E = {}, variable side {vn_edges}, check side {cn_edges}",
                self.edges
            )));
        }
        if self.vn_counts.contains_key(&0) || self.cn_counts.contains_key(&0) {
            return Err(Error::Infeasible("degree-0 nodes".into()));
        }
        Ok(())
    }
}

fn expand(counts: &BTreeMap<u32, usize>) -> Vec<u32> {
    counts
        .iter()
        .flat_map(|(&d, &c)| std::iter::repeat_n(d, c))
        .collect()
}

/// Degree profiles of the three short codes (A, B, C) and two regular
/// reference ensembles, as shipped in `fixtures/`.
pub mod fixtures {
    use super::DegreeProfile;

    pub const CODE_A_ORIG: &str = include_str!("../fixtures/code_a_orig.json");
    pub const CODE_A_MOD: &str = include_str!("../fixtures/code_a_mod.json");
    pub const CODE_B_ORIG: &str = include_str!("../fixtures/code_b_orig.json");
    pub const CODE_B_MOD: &str = include_str!("../fixtures/code_b_mod.json");
    pub const CODE_C_MOD1: &str = include_str!("../fixtures/code_c_mod1.json");
    pub const CODE_C_MOD2: &str = include_str!("../fixtures/code_c_mod2.json");
    pub const REG36: &str = include_str!("../fixtures/reg36.json");
    pub const REG35: &str = include_str!("../fixtures/reg35.json");

    /// The six distinct short-code profiles. Code C's original profile is
    /// identical to code B's.
    pub fn code_profiles() -> Vec<(&'static str, DegreeProfile)> {
        [
            ("code_a_orig", CODE_A_ORIG),
            ("code_a_mod", CODE_A_MOD),
            ("code_b_orig", CODE_B_ORIG),
            ("code_b_mod", CODE_B_MOD),
            ("code_c_mod1", CODE_C_MOD1),
            ("code_c_mod2", CODE_C_MOD2),
        ]
        .into_iter()
        .map(|(name, text)| {
            (
                name,
                DegreeProfile::from_json(text).expect("fixture parses"),
            )
        })
        .collect()
    }

    pub fn get(name: &str) -> Option<DegreeProfile> {
        let text = match name {
            "code_a_orig" => CODE_A_ORIG,
            "code_a_mod" => CODE_A_MOD,
            "code_b_orig" | "code_c_orig" => CODE_B_ORIG,
            "code_b_mod" => CODE_B_MOD,
            "code_c_mod1" => CODE_C_MOD1,
            "code_c_mod2" => CODE_C_MOD2,
            "reg36" => REG36,
            "reg35" => REG35,
            _ => return None,
        };
        DegreeProfile::from_json(text).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lam(terms: &[(u32, f64)]) -> Vec<Term> {
        terms.iter().map(|&(d, w)| Term::new(d, w)).collect()
    }

    #[test]
    fn code_a_modified_rho_is_valid() {
        let p = fixtures::get("code_a_mod").unwrap();
        let w: Vec<f64> = p.rho.iter().map(|t| t.weight).collect();
        assert_eq!(w, vec![0.01, 0.02, 0.1, 0.435, 0.435]);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn weight_sum_violation() {
        let p = DegreeProfile::edge(lam(&[(2, 0.5), (3, 0.4)]), lam(&[(6, 1.0)]));
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(
            v[0],
            Violation::WeightSum {
                field: Poly::Lambda,
                ..
            }
        ));
        assert_eq!(v[0].to_string(), "lambda: weights sum to 0.9");
    }

    #[test]
    fn negative_weight_violation() {
        let p = DegreeProfile::edge(lam(&[(2, -0.1), (3, 1.1)]), lam(&[(6, 1.0)]));
        let v = p.validate();
        assert!(v.iter().any(|v| matches!(
            v,
            Violation::NegativeWeight {
                field: Poly::Lambda,
                degree: 2,
                ..
            }
        )));
    }

    #[test]
    fn structural_violations() {
        let p = DegreeProfile::edge(lam(&[(0, 0.5), (0, 0.5)]), vec![]);
        let v = p.validate();
        assert!(v.contains(&Violation::ZeroDegree {
            field: Poly::Lambda
        }));
        assert!(v.contains(&Violation::DuplicateDegree {
            field: Poly::Lambda,
            degree: 0
        }));
        assert!(v.contains(&Violation::Empty { field: Poly::Rho }));
        // rate >= 1 when checks have huge degree relative to variables
        let p = DegreeProfile::regular(6, 3);
        assert!(matches!(p.validate()[..], [Violation::Rate { .. }]));
    }

    #[test]
    fn parser_rejects_invalid() {
        let text = r#"{"perspective":"edge","lambda":[{"degree":2,"weight":0.5}],"rho":[{"degree":6,"weight":1.0}]}"#;
        match DegreeProfile::from_json(text) {
            Err(Error::InvalidProfile(v)) => assert_eq!(v.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regular_rates() {
        assert_abs_diff_eq!(
            DegreeProfile::regular(3, 6).design_rate(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            DegreeProfile::regular(3, 5).design_rate(),
            0.4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn table_rates() {
        let b = fixtures::get("code_b_orig").unwrap();
        // sum lambda_i/i = 0.251, rho term 1/8
        assert_abs_diff_eq!(b.design_rate(), 1.0 - 0.125 / 0.251, epsilon = 1e-12);
        assert_abs_diff_eq!(b.design_rate(), 0.502, epsilon = 5e-4);
        let a = fixtures::get("code_a_orig").unwrap();
        assert_abs_diff_eq!(a.design_rate(), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn exponent_convention() {
        let p = DegreeProfile::from_exponents(&[(2, 1.0)], &[(5, 1.0)]);
        assert_eq!(p, DegreeProfile::regular(3, 6));
    }

    #[test]
    fn perspective_change() {
        let p = DegreeProfile::edge(lam(&[(2, 0.5), (4, 0.5)]), lam(&[(6, 1.0)]));
        let node = p.to_node();
        assert_eq!(node.perspective, Perspective::Node);
        assert_abs_diff_eq!(node.lambda[0].weight, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(node.lambda[1].weight, 1.0 / 3.0, epsilon = 1e-15);

        let reg = DegreeProfile::regular(3, 6);
        assert_eq!(reg.to_node().lambda, reg.lambda);
        assert_eq!(reg.to_node().rho, reg.rho);

        let c = fixtures::get("code_b_orig").unwrap();
        let back = c.to_node().to_edge();
        for (x, y) in back.lambda.iter().zip(&c.lambda) {
            assert_eq!(x.degree, y.degree);
            assert_abs_diff_eq!(x.weight, y.weight, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantize_regular() {
        let q = DegreeProfile::regular(3, 6).quantize(180).unwrap();
        assert_eq!(q.vn_counts, [(3, 180)].into_iter().collect());
        assert_eq!(q.cn_counts, [(6, 90)].into_iter().collect());
        assert_eq!(q.edges, 540);

        let q = DegreeProfile::regular(3, 5).quantize(155).unwrap();
        assert_eq!(q.cn_counts, [(5, 93)].into_iter().collect());
        assert_eq!(q.edges, 465);
        assert_abs_diff_eq!(q.realized_rate(), 0.4, epsilon = 1e-15);
        assert_eq!(q, NodeDegreeSpec::regular(155, 3, 5).unwrap());
    }

    #[test]
    fn quantize_code_b() {
        // Rounded node counts {63,33,9,10,13} give E = 506, not a multiple
        // of 8; the cheapest single move (total count deviation 2.81) is one
        // node from degree 15 to 5.
        let q = fixtures::get("code_b_orig").unwrap().quantize(128).unwrap();
        let expected: BTreeMap<u32, usize> = [(2, 63), (3, 33), (4, 9), (5, 11), (15, 12)]
            .into_iter()
            .collect();
        assert_eq!(q.vn_counts, expected);
        assert_eq!(q.edges, 496);
        assert_eq!(q.cn_counts, [(8, 62)].into_iter().collect());
        assert!((q.realized_rate() - 0.5).abs() < 0.02);
    }

    #[test]
    fn quantize_all_fixtures() {
        for (name, p) in fixtures::code_profiles() {
            for n in [128, 155, 180, 512] {
                let q = p
                    .quantize(n)
                    .unwrap_or_else(|e| panic!("{name} N={n}: {e}"));
                q.check().unwrap();
                let bound = 2.0 * p.max_vn_degree().max(p.max_cn_degree()) as f64 / n as f64;
                assert!(
                    (q.realized_rate() - p.design_rate()).abs() <= bound,
                    "{name} N={n}"
                );
            }
        }
    }

    #[test]
    fn quantize_infeasible_reports() {
        // all variable nodes degree 3 and only degree-7 checks: E = 3n must be
        // a multiple of 7, unreachable by moving variable nodes.
        let p = DegreeProfile::regular(3, 7);
        assert!(matches!(p.quantize(10), Err(Error::Infeasible(_))));
        assert!(matches!(p.quantize(4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rate_error_shrinks_with_length() {
        for (name, p) in fixtures::code_profiles() {
            let errs: Vec<f64> = [128, 512, 4096]
                .iter()
                .map(|&n| (p.quantize(n).unwrap().realized_rate() - p.design_rate()).abs())
                .collect();
            assert!(errs[2] <= errs[0], "{name}: {errs:?}");
            assert!(errs[2] < 2e-3, "{name}: {errs:?}");
        }
    }

    fn arb_terms() -> impl Strategy<Value = Vec<Term>> {
        prop::collection::btree_map(2u32..20, 0.05f64..1.0, 1..6).prop_map(|m| {
            let total: f64 = m.values().sum();
            m.into_iter()
                .map(|(d, w)| Term::new(d, w / total))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn round_trip_preserves_rate(lambda in arb_terms(), rho in arb_terms()) {
            let p = DegreeProfile::edge(lambda, rho);
            let back = p.to_node().to_edge();
            prop_assert!((p.design_rate() - p.to_node().design_rate()).abs() < 1e-12);
            prop_assert!((p.design_rate() - back.design_rate()).abs() < 1e-12);
            for (x, y) in back.lambda.iter().zip(&p.lambda) {
                prop_assert!((x.weight - y.weight).abs() < 1e-12);
            }
        }
    }
}
