//! Distributions of the small model's top-1 confidence over a workload.
//!
//! Every variant has a piecewise-linear CDF (with possible atoms), which lets
//! the cascade planner invert the escalation curve exactly instead of
//! bisecting.

// Negated comparisons below are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::Rng;
use serde::{Deserialize, Serialize};

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceDistribution {
    /// Recorded per-input confidences, sorted ascending.
    Empirical {
        samples: Vec<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    PointMass {
        at: f64,
    },
    /// CDF given by `(confidence, cumulative probability)` knots from (0, 0)
    /// to (1, 1), linear in between.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    Mixture {
        components: Vec<Component>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub dist: ConfidenceDistribution,
}

impl ConfidenceDistribution {
    /// Builds an empirical distribution, sorting the samples.
    pub fn empirical(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self::Empirical { samples }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        Self::Uniform { low, high }
    }

    pub fn point_mass(at: f64) -> Self {
        Self::PointMass { at }
    }

    pub fn mixture(components: impl IntoIterator<Item = (f64, ConfidenceDistribution)>) -> Self {
        Self::Mixture {
            components: components
                .into_iter()
                .map(|(weight, dist)| Component { weight, dist })
                .collect(),
        }
    }

    /// `Pr[confidence < t]`.
    pub fn prob_below(&self, t: f64) -> f64 {
        match self {
            Self::Empirical { samples } => {
                if samples.is_empty() {
                    return 0.0;
                }
                samples.partition_point(|&s| s < t) as f64 / samples.len() as f64
            }
            Self::Uniform { low, high } => {
                if t <= *low {
                    0.0
                } else if t >= *high {
                    1.0
                } else {
                    (t - low) / (high - low)
                }
            }
            Self::PointMass { at } => f64::from(u8::from(*at < t)),
            Self::PiecewiseLinear { knots } => piecewise_cdf(knots, t),
            Self::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.prob_below(t))
                .sum(),
        }
    }

    /// `Pr[confidence <= t]`.
    pub fn prob_at_or_below(&self, t: f64) -> f64 {
        match self {
            Self::Empirical { samples } => {
                if samples.is_empty() {
                    return 0.0;
                }
                samples.partition_point(|&s| s <= t) as f64 / samples.len() as f64
            }
            Self::Uniform { low, high } => {
                if t < *low {
                    0.0
                } else if t >= *high {
                    1.0
                } else {
                    (t - low) / (high - low)
                }
            }
            Self::PointMass { at } => f64::from(u8::from(*at <= t)),
            Self::PiecewiseLinear { knots } => piecewise_cdf(knots, t),
            Self::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.prob_at_or_below(t))
                .sum(),
        }
    }

    /// Points in [0, 1] where the CDF may jump or change slope, sorted and
    /// deduplicated, always including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = vec![0.0, 1.0];
        self.push_breakpoints(&mut points);
        points.retain(|p| (0.0..=1.0).contains(p));
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }

    fn push_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Self::Empirical { samples } => out.extend_from_slice(samples),
            Self::Uniform { low, high } => out.extend([*low, *high]),
            Self::PointMass { at } => out.push(*at),
            Self::PiecewiseLinear { knots } => out.extend(knots.iter().map(|k| k.0)),
            Self::Mixture { components } => {
                for c in components {
                    c.dist.push_breakpoints(out);
                }
            }
        }
    }

    /// Largest `t` in [0, 1] with `prob_below(t) <= p`.
    ///
    /// `prob_below` is nondecreasing and left-continuous, so the set of such
    /// thresholds is a closed interval starting at 0. Between breakpoints it is
    /// linear, which gives the maximum in closed form.
    pub fn largest_threshold_at_most(&self, p: f64) -> f64 {
        let points = self.breakpoints();
        for pair in points.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let end = self.prob_below(hi);
            if end <= p {
                continue;
            }
            let start = self.prob_at_or_below(lo);
            if start > p {
                return lo;
            }
            return lo + (p - start) / (end - start) * (hi - lo);
        }
        1.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Empirical { samples } => samples[rng.random_range(0..samples.len())],
            Self::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Self::PointMass { at } => *at,
            Self::PiecewiseLinear { knots } => {
                let u: f64 = rng.random();
                for pair in knots.windows(2) {
                    let ((x0, f0), (x1, f1)) = (pair[0], pair[1]);
                    if u < f1 {
                        return x0 + (u - f0) / (f1 - f0) * (x1 - x0);
                    }
                }
                knots.last().map_or(1.0, |k| k.0)
            }
            Self::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        return c.dist.sample(rng);
                    }
                }
                components.last().map_or(0.0, |c| c.dist.sample(rng))
            }
        }
    }

    /// Broken invariants, as `(field, invariant)` pairs. NaN fails every check.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.collect_violations("", &mut out);
        out
    }

    fn collect_violations(&self, prefix: &str, out: &mut Vec<(String, String)>) {
        let mut push = |field: &str, invariant: &str| {
            out.push((format!("{prefix}{field}"), invariant.to_string()));
        };
        match self {
            Self::Empirical { samples } => {
                if samples.is_empty() {
                    push(
                        "samples",
                        "empirical distribution needs at least one sample",
                    );
                }
                if samples.iter().any(|s| !in_unit(*s)) {
                    push("samples", "samples must lie in [0, 1]");
                }
                if samples.windows(2).any(|w| !(w[0] <= w[1])) {
                    push("samples", "samples must be sorted ascending");
                }
            }
            Self::Uniform { low, high } => {
                if !(in_unit(*low) && in_unit(*high) && low <= high) {
                    push(
                        "low/high",
                        "uniform bounds must satisfy 0 <= low <= high <= 1",
                    );
                }
            }
            Self::PointMass { at } => {
                if !in_unit(*at) {
                    push("at", "point mass must lie in [0, 1]");
                }
            }
            Self::PiecewiseLinear { knots } => {
                let endpoints_ok = knots.first() == Some(&(0.0, 0.0))
                    && knots.last() == Some(&(1.0, 1.0))
                    && knots.len() >= 2;
                if !endpoints_ok {
                    push("knots", "CDF knots must start at (0, 0) and end at (1, 1)");
                }
                if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    push("knots", "knot confidences must be strictly increasing");
                }
                if knots.windows(2).any(|w| !(w[0].1 <= w[1].1)) {
                    push("knots", "CDF values must be nondecreasing");
                }
            }
            Self::Mixture { components } => {
                if components.is_empty() {
                    push("components", "mixture needs at least one component");
                }
                if components.iter().any(|c| !(c.weight >= 0.0)) {
                    push("components.weight", "weights must be nonnegative");
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if !((total - 1.0).abs() <= WEIGHT_TOLERANCE) {
                    push("components.weight", "weights must sum to 1");
                }
                for (i, c) in components.iter().enumerate() {
                    c.dist
                        .collect_violations(&format!("{prefix}components[{i}].dist."), out);
                }
            }
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

fn piecewise_cdf(knots: &[(f64, f64)], t: f64) -> f64 {
    let Some(&(first_x, first_f)) = knots.first() else {
        return 0.0;
    };
    if t <= first_x {
        return if t < first_x { 0.0 } else { first_f };
    }
    for pair in knots.windows(2) {
        let ((x0, f0), (x1, f1)) = (pair[0], pair[1]);
        if t == x1 {
            return f1;
        }
        if t < x1 {
            return f0 + (t - x0) / (x1 - x0) * (f1 - f0);
        }
    }
    knots.last().map_or(1.0, |k| k.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_half() {
        assert_eq!(
            ConfidenceDistribution::uniform(0.0, 1.0).prob_below(0.5),
            0.5
        );
    }

    #[test]
    fn empirical_counts_strictly_below() {
        let d = ConfidenceDistribution::empirical(vec![0.9, 0.2, 0.6]);
        assert_eq!(d.prob_below(0.7), 2.0 / 3.0);
        // a sample equal to the threshold is accepted locally
        assert_eq!(d.prob_below(0.6), 1.0 / 3.0);
        assert_eq!(d.prob_at_or_below(0.6), 2.0 / 3.0);
    }

    #[test]
    fn point_mass_threshold_is_exact() {
        let d = ConfidenceDistribution::point_mass(0.95);
        assert_eq!(d.prob_below(0.95), 0.0);
        assert_eq!(d.prob_below(0.950_000_1), 1.0);
        assert_eq!(d.largest_threshold_at_most(0.3), 0.95);
    }

    #[test]
    fn piecewise_hits_knots_exactly() {
        let d = ConfidenceDistribution::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (0.5, 0.59), (0.8, 0.89), (1.0, 1.0)],
        };
        assert_eq!(d.prob_below(0.5), 0.59);
        assert_eq!(d.prob_below(0.8), 0.89);
        assert_eq!(d.prob_below(1.0), 1.0);
        assert!((d.prob_below(0.65) - 0.74).abs() < 1e-12);
        assert!((d.largest_threshold_at_most(0.74) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn mixture_matches_monte_carlo() {
        let d = ConfidenceDistribution::mixture([
            (0.9, ConfidenceDistribution::point_mass(0.95)),
            (0.1, ConfidenceDistribution::uniform(0.0, 1.0)),
        ]);
        let exact = d.prob_below(0.8);
        assert!((exact - 0.08).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let below = (0..draws).filter(|_| d.sample(&mut rng) < 0.8).count();
        let estimate = below as f64 / draws as f64;
        assert!((estimate - 0.08).abs() < 1e-3, "monte carlo {estimate}");
    }

    #[test]
    fn empirical_inverse_lands_on_sample() {
        let d = ConfidenceDistribution::empirical(vec![0.2, 0.6, 0.9]);
        assert_eq!(d.largest_threshold_at_most(0.5), 0.6);
        assert_eq!(d.largest_threshold_at_most(0.0), 0.2);
        assert_eq!(d.largest_threshold_at_most(1.0), 1.0);
    }

    #[test]
    fn violations_flag_bad_mixture() {
        let d = ConfidenceDistribution::mixture([
            (0.7, ConfidenceDistribution::point_mass(1.5)),
            (0.2, ConfidenceDistribution::uniform(0.0, 1.0)),
        ]);
        let v = d.violations();
        assert!(v.iter().any(|(_, inv)| inv.contains("sum to 1")));
        assert!(v.iter().any(|(f, _)| f == "components[0].dist.at"));
    }

    #[test]
    fn serde_shape() {
        let d: ConfidenceDistribution =
            serde_json::from_str(r#"{"kind":"piecewise_linear","knots":[[0,0],[1,1]]}"#).unwrap();
        assert_eq!(d.prob_below(0.25), 0.25);
    }
}
