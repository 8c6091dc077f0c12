//! Detection metrics: equal error rate and normalized minimum detection cost.
//!
//! A trial is accepted when `score >= threshold`. Thresholds are swept over
//! the sorted unique scores, plus sentinels that accept or reject everything.

use std::collections::HashMap;

use crate::data::{Trial, TrialLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub enroll: String,
    pub test: String,
    pub score: f64,
    pub label: Option<TrialLabel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub trials: Vec<ScoredTrial>,
}

impl ScoreSet {
    /// Builds an anonymous labeled score set, mostly for tests and benchmarks.
    pub fn from_labeled(targets: &[f64], nontargets: &[f64]) -> Self {
        let mk = |i: usize, score: f64, label| ScoredTrial {
            enroll: format!("e{i}"),
            test: format!("t{i}"),
            score,
            label: Some(label),
        };
        let trials = targets
            .iter()
            .map(|&s| (s, TrialLabel::Target))
            .chain(nontargets.iter().map(|&s| (s, TrialLabel::Nontarget)))
            .enumerate()
            .map(|(i, (s, l))| mk(i, s, l))
            .collect();
        Self { trials }
    }

    /// Copies labels from a trial list, matching on `(enroll, test)`.
    pub fn label_from(mut self, trials: &[Trial]) -> Result<Self> {
        let key = |e: &str, t: &str| format!("{e}\u{0}{t}");
        let labels: HashMap<String, Option<TrialLabel>> =
            trials.iter().map(|t| (key(&t.enroll, &t.test), t.label)).collect();
        for (i, st) in self.trials.iter_mut().enumerate() {
            match labels.get(&key(&st.enroll, &st.test)) {
                Some(l) => st.label = *l,
                None => {
                    return Err(Error::Resolution {
                        line: i + 1,
                        id: format!("{} {}", st.enroll, st.test),
                    })
                }
            }
        }
        Ok(self)
    }

    fn split(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tar = Vec::new();
        let mut non = Vec::new();
        for (i, t) in self.trials.iter().enumerate() {
            match t.label {
                Some(TrialLabel::Target) => tar.push(t.score),
                Some(TrialLabel::Nontarget) => non.push(t.score),
                None => {
                    return Err(Error::Precondition(format!("trial {} has no target/nontarget label", i + 1)))
                }
            }
        }
        if tar.is_empty() || non.is_empty() {
            return Err(Error::Precondition(format!(
                "metrics need at least one target and one nontarget trial ({} targets, {} nontargets)",
                tar.len(),
                non.len()
            )));
        }
        Ok((tar, non))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl DcfParams {
    pub fn new(p_target: f64, c_miss: f64, c_fa: f64) -> Result<Self> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::Precondition(format!("p_target {p_target} must lie in (0, 1)")));
        }
        if !(c_miss > 0.0 && c_fa > 0.0) || !c_miss.is_finite() || !c_fa.is_finite() {
            return Err(Error::Precondition("detection costs must be positive and finite".into()));
        }
        Ok(Self { p_target, c_miss, c_fa })
    }

    /// Cost of the better of the two trivial systems (accept all, reject all).
    pub fn default_cost(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }

    pub fn cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        self.c_miss * self.p_target * p_miss + self.c_fa * (1.0 - self.p_target) * p_fa
    }
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// Target priors averaged by the two-prior cost mode.
pub const SRE16_PRIORS: [f64; 2] = [0.01, 0.005];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Operating points at every unique score, ascending, followed by the
/// reject-all point at `+∞`.
pub fn operating_points(scores: &ScoreSet) -> Result<Vec<OperatingPoint>> {
    let (tar, non) = scores.split()?;
    let mut all: Vec<(f64, bool)> = tar
        .iter()
        .map(|&s| (s, true))
        .chain(non.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Precondition("scores contain NaN".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let mut points = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        points.push(OperatingPoint {
            threshold,
            p_miss: tar_below as f64 / nt,
            p_fa: (non.len() - non_below) as f64 / nn,
        });
        while i < all.len() && all[i].0 == threshold {
            if all[i].1 {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// Equal error rate by linear interpolation between the two operating points
/// that straddle `P_miss = P_fa`.
pub fn compute_eer(scores: &ScoreSet) -> Result<f64> {
    let points = operating_points(scores)?;
    Ok(eer_from_points(&points))
}

pub(crate) fn eer_from_points(points: &[OperatingPoint]) -> f64 {
    let gap = |p: &OperatingPoint| p.p_miss - p.p_fa;
    let j = points
        .iter()
        .position(|p| gap(p) >= 0.0)
        .expect("the reject-all point has P_miss - P_fa = 1");
    let (b, gb) = (&points[j], gap(&points[j]));
    if gb == 0.0 || j == 0 {
        return b.p_miss;
    }
    let (a, ga) = (&points[j - 1], gap(&points[j - 1]));
    let t = -ga / (gb - ga);
    a.p_miss + t * (b.p_miss - a.p_miss)
}

/// Minimum normalized detection cost over all thresholds.
pub fn compute_min_dcf(scores: &ScoreSet, params: &DcfParams) -> Result<f64> {
    let points = operating_points(scores)?;
    // Accept-all sentinel at −∞.
    let mut best = params.cost(0.0, 1.0);
    for p in &points {
        best = best.min(params.cost(p.p_miss, p.p_fa));
    }
    Ok(best / params.default_cost())
}

/// Mean of the normalized minimum costs at each target prior.
pub fn compute_min_dcf_averaged(scores: &ScoreSet, priors: &[f64], c_miss: f64, c_fa: f64) -> Result<f64> {
    if priors.is_empty() {
        return Err(Error::Precondition("no target priors given".into()));
    }
    let mut sum = 0.0;
    for &p in priors {
        sum += compute_min_dcf(scores, &DcfParams::new(p, c_miss, c_fa)?)?;
    }
    Ok(sum / priors.len() as f64)
}

/// Formats with 6 significant digits in positional notation.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.5}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}
