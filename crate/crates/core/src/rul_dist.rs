//! Discrete remaining-useful-life distributions.
//!
//! The support is the set of integers `1..=H`; value `h` stands for the event
//! "RUL lies in `[h, h+1)` cycles". Probability vectors over this support are
//! what every maintenance policy consumes. Model outputs (a Weibull scale and
//! shape) become such vectors by evaluating the Weibull density on the support,
//! truncating, and renormalizing. All sums run in log-space with a max shift so
//! that sharp shapes (large `k`) do not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NLL assigned to a label that carries exactly zero mass (about `-ln` of the
/// smallest positive subnormal double), so batch means stay finite.
pub const NLL_CAP: f64 = 745.0;

/// Tolerance on the unit-sum invariant of [`DiscreteRulDist`].
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulSupport {
    horizon: usize,
}

impl RulSupport {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidParameter(format!(
                "support horizon must be at least 2, got {horizon}"
            )));
        }
        if horizon > u32::MAX as usize {
            return Err(Error::InvalidParameter("support horizon too large".into()));
        }
        Ok(Self { horizon })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + Clone {
        1..=self.horizon as u32
    }

    pub fn contains(&self, y: u32) -> bool {
        y >= 1 && (y as usize) <= self.horizon
    }

    /// Zero-based index of a support value.
    pub fn index_of(&self, y: u32) -> Result<usize> {
        if self.contains(y) {
            Ok(y as usize - 1)
        } else {
            Err(Error::OutOfSupport {
                value: y,
                horizon: self.horizon,
            })
        }
    }
}

/// Where on the interval `[h, h+1)` the Weibull density is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityAnchor {
    #[default]
    LeftEndpoint,
    Midpoint,
}

impl DensityAnchor {
    fn point(self, h: u32) -> f64 {
        match self {
            DensityAnchor::LeftEndpoint => h as f64,
            DensityAnchor::Midpoint => h as f64 + 0.5,
        }
    }
}

/// Scale `lambda` (cycles) and shape `k` of a Weibull distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    scale: f64,
    shape: f64,
}

impl WeibullParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Weibull scale must be finite and > 0, got {scale}"
            )));
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Weibull shape must be finite and > 0, got {shape}"
            )));
        }
        Ok(Self { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.scale, self.shape]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRulDist {
    support: RulSupport,
    probs: Vec<f64>,
}

impl DiscreteRulDist {
    /// Validating constructor: entries non-negative, finite, summing to one.
    pub fn new(support: RulSupport, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.horizon() {
            return Err(Error::SupportMismatch(probs.len(), support.horizon()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { support, probs })
    }

    /// Normalize non-negative weights into a distribution.
    pub fn from_weights(support: RulSupport, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.horizon() {
            return Err(Error::SupportMismatch(weights.len(), support.horizon()));
        }
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be non-negative with a positive finite sum".into(),
            ));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Self::new(support, probs)
    }

    /// Normalize log-weights with a max shift.
    pub fn from_log_weights(support: RulSupport, log_weights: &[f64]) -> Result<Self> {
        let mut probs = vec![0.0; log_weights.len()];
        if !normalize_log_weights(log_weights, &mut probs) {
            return Err(Error::InvalidParameter(
                "log-weights contain no finite maximum".into(),
            ));
        }
        Self::new(support, probs)
    }

    pub fn point_mass(support: RulSupport, y: u32) -> Result<Self> {
        let idx = support.index_of(y)?;
        let mut probs = vec![0.0; support.horizon()];
        probs[idx] = 1.0;
        Ok(Self { support, probs })
    }

    pub fn uniform(support: RulSupport) -> Self {
        let h = support.horizon();
        Self {
            support,
            probs: vec![1.0 / h as f64; h],
        }
    }

    pub fn support(&self) -> RulSupport {
        self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mass at support value `y` (zero outside the support).
    pub fn prob(&self, y: u32) -> f64 {
        self.support
            .index_of(y)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    /// `P(Y < z)`: zero for `z <= 1`, one for `z > H`.
    pub fn cdf_below(&self, z: u32) -> f64 {
        cdf_below(&self.probs, z)
    }

    /// Negative log-likelihood of label `y`, capped at [`NLL_CAP`].
    pub fn nll(&self, y: u32) -> Result<f64> {
        let idx = self.support.index_of(y)?;
        Ok(capped_neg_log(self.probs[idx]))
    }

    /// Smallest support value attaining the maximal mass.
    pub fn mode(&self) -> u32 {
        argmax_first(&self.probs) as u32 + 1
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * (i + 1) as f64)
            .sum()
    }

    /// `-sum p(y) log q(y)` with `p = self`.
    pub fn cross_entropy(&self, q: &DiscreteRulDist) -> Result<f64> {
        if self.support != q.support {
            return Err(Error::SupportMismatch(
                self.support.horizon(),
                q.support.horizon(),
            ));
        }
        let mut acc = 0.0;
        for (i, (&p, &qv)) in self.probs.iter().zip(&q.probs).enumerate() {
            if p > 0.0 {
                if qv <= 0.0 {
                    return Err(Error::InfiniteDivergence(i as u32 + 1));
                }
                acc -= p * qv.ln();
            }
        }
        Ok(acc)
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

pub(crate) fn capped_neg_log(p: f64) -> f64 {
    if p > 0.0 {
        (-p.ln()).min(NLL_CAP)
    } else {
        NLL_CAP
    }
}

pub(crate) fn cdf_below(probs: &[f64], z: u32) -> f64 {
    if z <= 1 {
        return 0.0;
    }
    let upto = (z as usize - 1).min(probs.len());
    if upto == probs.len() {
        return 1.0;
    }
    probs[..upto].iter().sum::<f64>().min(1.0)
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax of `log_weights` into `out`. Returns `false` when no
/// entry is finite (the distribution is degenerate).
pub(crate) fn normalize_log_weights(log_weights: &[f64], out: &mut [f64]) -> bool {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for (o, &lw) in out.iter_mut().zip(log_weights) {
        let w = if lw.is_nan() { 0.0 } else { (lw - max).exp() };
        *o = w;
        total += w;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    true
}

/// `(k/lambda) (y/lambda)^(k-1) exp(-(y/lambda)^k)`.
pub fn weibull_density(params: WeibullParams, y: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "density argument must be positive, got {y}"
        )));
    }
    let (lambda, k) = (params.scale, params.shape);
    let ratio = y / lambda;
    let value = (k / lambda) * ratio.powf(k - 1.0) * (-ratio.powf(k)).exp();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericOverflow(format!(
            "Weibull density at y={y} (scale={lambda}, shape={k})"
        )))
    }
}

/// Log of the unnormalized Weibull density given `ln y`.
#[inline]
fn log_density_at(ln_y: f64, ln_lambda: f64, ln_k: f64, k: f64) -> f64 {
    let log_ratio = ln_y - ln_lambda;
    ln_k - ln_lambda + (k - 1.0) * log_ratio - (k * log_ratio).exp()
}

/// Precomputed logarithms of the evaluation points of a support, reused by
/// the hot loops that discretize many parameter vectors.
#[derive(Clone, Debug)]
pub struct WeibullDiscretizer {
    support: RulSupport,
    ln_points: Vec<f64>,
}

impl WeibullDiscretizer {
    pub fn new(support: RulSupport, anchor: DensityAnchor) -> Self {
        let ln_points = support.values().map(|h| anchor.point(h).ln()).collect();
        Self { support, ln_points }
    }

    pub fn support(&self) -> RulSupport {
        self.support
    }

    /// Write the discretized probabilities into `out` (length `H`).
    pub fn fill(&self, params: WeibullParams, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.ln_points.len());
        let (ln_lambda, ln_k, k) = (params.scale.ln(), params.shape.ln(), params.shape);
        for (o, &ln_y) in out.iter_mut().zip(&self.ln_points) {
            *o = log_density_at(ln_y, ln_lambda, ln_k, k);
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateDistribution {
                scale: params.scale,
                shape: params.shape,
            });
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        let inv = 1.0 / total;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(())
    }

    pub fn discretize(&self, params: WeibullParams) -> Result<DiscreteRulDist> {
        let mut probs = vec![0.0; self.support.horizon()];
        self.fill(params, &mut probs)?;
        Ok(DiscreteRulDist {
            support: self.support,
            probs,
        })
    }

    /// NLL of label `y` under the discretized distribution together with its
    /// gradient with respect to `(scale, shape)`.
    ///
    /// With `g(h) = d log p~(h) / d theta`, the gradient is
    /// `-g(y) + sum_h P(h) g(h)`, where
    /// `d/d scale = (k/scale)((h/scale)^k - 1)` and
    /// `d/d shape = 1/k + ln(h/scale) (1 - (h/scale)^k)`.
    pub fn nll_with_grad(&self, params: WeibullParams, y: u32) -> Result<(f64, [f64; 2])> {
        let yi = self.support.index_of(y)?;
        let (lambda, k) = (params.scale, params.shape);
        let (ln_lambda, ln_k) = (lambda.ln(), k.ln());
        let h = self.ln_points.len();
        let mut log_w = Vec::with_capacity(h);
        let mut g_scale = Vec::with_capacity(h);
        let mut g_shape = Vec::with_capacity(h);
        for &ln_y in &self.ln_points {
            let log_ratio = ln_y - ln_lambda;
            let pow = (k * log_ratio).exp();
            log_w.push(ln_k - ln_lambda + (k - 1.0) * log_ratio - pow);
            g_scale.push((k / lambda) * (pow - 1.0));
            g_shape.push(1.0 / k + log_ratio * (1.0 - pow));
        }
        let mut probs = vec![0.0; h];
        if !normalize_log_weights(&log_w, &mut probs) {
            return Err(Error::DegenerateDistribution {
                scale: lambda,
                shape: k,
            });
        }
        let mut mean_scale = 0.0;
        let mut mean_shape = 0.0;
        for i in 0..h {
            if probs[i] > 0.0 {
                mean_scale += probs[i] * g_scale[i];
                mean_shape += probs[i] * g_shape[i];
            }
        }
        let loss = capped_neg_log(probs[yi]);
        if probs[yi] <= 0.0 || loss >= NLL_CAP {
            // Capped region: the loss is constant there.
            return Ok((loss, [0.0, 0.0]));
        }
        Ok((loss, [mean_scale - g_scale[yi], mean_shape - g_shape[yi]]))
    }
}

/// Truncate the Weibull density to the support and renormalize.
pub fn discretize_weibull(params: WeibullParams, support: RulSupport) -> Result<DiscreteRulDist> {
    WeibullDiscretizer::new(support, DensityAnchor::LeftEndpoint).discretize(params)
}

/// Poisson(rate) masses on `1..=H`, renormalized; computed in log-space.
pub fn truncated_poisson(rate: f64, support: RulSupport) -> Result<DiscreteRulDist> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Poisson rate must be finite and > 0, got {rate}"
        )));
    }
    let ln_rate = rate.ln();
    let mut ln_fact = 0.0;
    let log_w: Vec<f64> = support
        .values()
        .map(|h| {
            ln_fact += (h as f64).ln();
            h as f64 * ln_rate - rate - ln_fact
        })
        .collect();
    DiscreteRulDist::from_log_weights(support, &log_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sup(h: usize) -> RulSupport {
        RulSupport::new(h).unwrap()
    }

    #[test]
    fn support_rejects_short_horizon() {
        assert!(RulSupport::new(1).is_err());
        assert!(RulSupport::new(2).is_ok());
        assert_eq!(sup(3).values().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn density_exponential_special_case() {
        let p = WeibullParams::new(1.0, 1.0).unwrap();
        assert_relative_eq!(
            weibull_density(p, 1.0).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            weibull_density(p, 2.0).unwrap(),
            (-2.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn density_high_precision_reference() {
        // 50-digit evaluation of (15/20)(20/20)^14 exp(-1).
        let p = WeibullParams::new(20.0, 15.0).unwrap();
        assert_relative_eq!(
            weibull_density(p, 20.0).unwrap(),
            0.275_909_580_878_581_74,
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_overflow_is_reported() {
        let p = WeibullParams::new(1e-308, 1e3).unwrap();
        assert!(matches!(
            weibull_density(p, 1e-308),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn params_validated() {
        assert!(WeibullParams::new(0.0, 1.0).is_err());
        assert!(WeibullParams::new(1.0, -1.0).is_err());
        assert!(WeibullParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn two_point_discretization() {
        let d = discretize_weibull(WeibullParams::new(1.0, 1.0).unwrap(), sup(2)).unwrap();
        assert_relative_eq!(d.probs()[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_relative_eq!(d.probs()[1], 0.268_941_421_369_995_1, epsilon = 1e-12);
    }

    #[test]
    fn large_shape_concentrates_at_scale() {
        for c in [5u32, 37, 100] {
            let d =
                discretize_weibull(WeibullParams::new(c as f64, 200.0).unwrap(), sup(150)).unwrap();
            assert_eq!(d.mode(), c);
        }
    }

    #[test]
    fn figure_point_distribution() {
        let d = discretize_weibull(WeibullParams::new(100.0, 15.0).unwrap(), sup(150)).unwrap();
        assert_relative_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!((90..=100).contains(&d.mode()));
    }

    #[test]
    fn degenerate_discretization_is_an_error() {
        // (h/scale)^k overflows for every h.
        let p = WeibullParams::new(1e-6, 200.0).unwrap();
        assert!(matches!(
            discretize_weibull(p, sup(10)),
            Err(Error::DegenerateDistribution { .. })
        ));
    }

    #[test]
    fn midpoint_anchor_differs_from_left_endpoint() {
        let p = WeibullParams::new(10.0, 3.0).unwrap();
        let left = WeibullDiscretizer::new(sup(20), DensityAnchor::LeftEndpoint)
            .discretize(p)
            .unwrap();
        let mid = WeibullDiscretizer::new(sup(20), DensityAnchor::Midpoint)
            .discretize(p)
            .unwrap();
        assert!(left.probs()[0] < mid.probs()[0]);
    }

    #[test]
    fn truncated_poisson_examples() {
        let d = truncated_poisson(20.0, sup(30)).unwrap();
        let m = d.mode();
        assert!(m == 19 || m == 20);
        // linear-scan oracle for the mode
        let mut best = 0;
        for i in 0..30 {
            if d.probs()[i] > d.probs()[best] {
                best = i;
            }
        }
        assert_eq!(m as usize, best + 1);

        let d = truncated_poisson(1.0, sup(2)).unwrap();
        assert_relative_eq!(d.probs()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(d.probs()[1], 1.0 / 3.0, epsilon = 1e-14);
        for rate in [0.1, 3.0, 500.0] {
            let d = truncated_poisson(rate, sup(2)).unwrap();
            assert_relative_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
        assert!(truncated_poisson(0.0, sup(2)).is_err());
    }

    #[test]
    fn cdf_below_examples() {
        let d = discretize_weibull(WeibullParams::new(1.0, 1.0).unwrap(), sup(2)).unwrap();
        assert_eq!(d.cdf_below(0), 0.0);
        assert_eq!(d.cdf_below(1), 0.0);
        assert_relative_eq!(d.cdf_below(2), 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_eq!(d.cdf_below(3), 1.0);
        assert_eq!(d.cdf_below(300), 1.0);
    }

    #[test]
    fn nll_examples() {
        let s = sup(30);
        assert_eq!(
            DiscreteRulDist::point_mass(s, 7).unwrap().nll(7).unwrap(),
            0.0
        );
        assert_eq!(
            DiscreteRulDist::point_mass(s, 7).unwrap().nll(8).unwrap(),
            NLL_CAP
        );
        assert_relative_eq!(
            DiscreteRulDist::uniform(s).nll(13).unwrap(),
            30f64.ln(),
            epsilon = 1e-12
        );
        let d = discretize_weibull(WeibullParams::new(1.0, 1.0).unwrap(), sup(2)).unwrap();
        assert_relative_eq!(d.nll(1).unwrap(), 0.313_261_687_518_222_8, epsilon = 1e-12);
        assert!(matches!(d.nll(3), Err(Error::OutOfSupport { .. })));
        assert!(matches!(d.nll(0), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn mode_tie_breaks_to_smallest() {
        let s = sup(30);
        assert_eq!(DiscreteRulDist::point_mass(s, 7).unwrap().mode(), 7);
        assert_eq!(DiscreteRulDist::uniform(s).mode(), 1);
        let d = DiscreteRulDist::new(sup(4), vec![0.1, 0.4, 0.1, 0.4]).unwrap();
        assert_eq!(d.mode(), 2);
    }

    #[test]
    fn cross_entropy_examples() {
        let p = DiscreteRulDist::new(sup(2), vec![0.5, 0.5]).unwrap();
        let q = DiscreteRulDist::new(sup(2), vec![0.75, 0.25]).unwrap();
        assert_relative_eq!(
            p.cross_entropy(&q).unwrap(),
            0.836_988_216_785_835_8,
            epsilon = 1e-12
        );
        assert_relative_eq!(p.cross_entropy(&p).unwrap(), p.entropy(), epsilon = 1e-15);
        assert!(p.cross_entropy(&q).unwrap() >= p.entropy());
        let r = DiscreteRulDist::point_mass(sup(2), 1).unwrap();
        assert!(matches!(
            p.cross_entropy(&r),
            Err(Error::InfiniteDivergence(2))
        ));
        let other = DiscreteRulDist::uniform(sup(3));
        assert!(p.cross_entropy(&other).is_err());
    }

    #[test]
    fn constructor_rejects_bad_vectors() {
        assert!(DiscreteRulDist::new(sup(2), vec![0.5, 0.6]).is_err());
        assert!(DiscreteRulDist::new(sup(2), vec![1.5, -0.5]).is_err());
        assert!(DiscreteRulDist::new(sup(3), vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn nll_gradient_two_point_closed_form() {
        // For H = 2 and label 1: loss = ln(1 + e^r), r = ln p~(2) - ln p~(1)
        // = (k-1) ln 2 - (2/l)^k + (1/l)^k.
        let disc = WeibullDiscretizer::new(sup(2), DensityAnchor::LeftEndpoint);
        for &(l, k) in &[(1.0f64, 1.0f64), (1.7, 2.5), (0.8, 0.6), (3.0, 4.0)] {
            let r: f64 = (k - 1.0) * 2f64.ln() - (2.0 / l).powf(k) + (1.0 / l).powf(k);
            let loss = (1.0 + r.exp()).ln();
            let dr_dl = (k / l) * ((2.0 / l).powf(k) - (1.0 / l).powf(k));
            let dr_dk =
                2f64.ln() - (2.0 / l).powf(k) * (2.0 / l).ln() + (1.0 / l).powf(k) * (1.0 / l).ln();
            let sig = 1.0 / (1.0 + (-r).exp());
            let (got, grad) = disc
                .nll_with_grad(WeibullParams::new(l, k).unwrap(), 1)
                .unwrap();
            assert_relative_eq!(got, loss, max_relative = 1e-12);
            assert_relative_eq!(grad[0], sig * dr_dl, max_relative = 1e-10);
            assert_relative_eq!(grad[1], sig * dr_dk, max_relative = 1e-10);
        }
    }

    #[test]
    fn nll_gradient_vanishes_at_sharp_optimum() {
        let disc = WeibullDiscretizer::new(sup(150), DensityAnchor::LeftEndpoint);
        let (loss, grad) = disc
            .nll_with_grad(WeibullParams::new(60.0, 1000.0).unwrap(), 60)
            .unwrap();
        assert!(loss < 1e-3, "loss {loss}");
        assert!(grad[0].abs() < 1e-2 && grad[1].abs() < 1e-3, "{grad:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn discretization_is_a_distribution(scale in 1.0f64..300.0, shape in 0.5f64..50.0) {
            let d = discretize_weibull(WeibullParams::new(scale, shape).unwrap(), sup(150)).unwrap();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn log_space_matches_direct_normalization(scale in 5.0f64..100.0, shape in 0.5f64..6.0) {
            let params = WeibullParams::new(scale, shape).unwrap();
            let support = sup(60);
            let direct: Vec<f64> = support.values().map(|h| weibull_density(params, h as f64).unwrap()).collect();
            let total: f64 = direct.iter().sum();
            prop_assume!(direct.iter().all(|d| *d > 1e-250));
            let d = discretize_weibull(params, support).unwrap();
            for (a, b) in d.probs().iter().zip(&direct) {
                prop_assert!((a - b / total).abs() <= 1e-10 * (b / total).max(1e-300) + 1e-15);
            }
        }

        #[test]
        fn cdf_below_monotone(weights in proptest::collection::vec(0.0f64..1.0, 12)) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-6);
            let d = DiscreteRulDist::from_weights(sup(12), weights).unwrap();
            let mut prev = 0.0;
            for z in 0..=13 {
                let c = d.cdf_below(z);
                prop_assert!(c >= prev);
                prev = c;
            }
            prop_assert_eq!(d.cdf_below(13), 1.0);
        }

        #[test]
        fn nll_equals_cross_entropy_with_point_mass(weights in proptest::collection::vec(0.01f64..1.0, 8), y in 1u32..=8) {
            let d = DiscreteRulDist::from_weights(sup(8), weights).unwrap();
            let point = DiscreteRulDist::point_mass(sup(8), y).unwrap();
            prop_assert!((d.nll(y).unwrap() - point.cross_entropy(&d).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn gibbs_inequality(a in proptest::collection::vec(0.01f64..1.0, 6), b in proptest::collection::vec(0.01f64..1.0, 6)) {
            let p = DiscreteRulDist::from_weights(sup(6), a).unwrap();
            let q = DiscreteRulDist::from_weights(sup(6), b).unwrap();
            prop_assert!(p.cross_entropy(&q).unwrap() >= p.entropy() - 1e-12);
        }

        #[test]
        fn nll_gradient_matches_finite_differences(scale in 3.0f64..120.0, shape in 0.7f64..12.0, y in 1u32..=80) {
            let disc = WeibullDiscretizer::new(sup(80), DensityAnchor::LeftEndpoint);
            let p = WeibullParams::new(scale, shape).unwrap();
            let (loss, g) = disc.nll_with_grad(p, y).unwrap();
            prop_assume!(loss < 30.0);
            let f = |l: f64, k: f64| disc.nll_with_grad(WeibullParams::new(l, k).unwrap(), y).unwrap().0;
            let hs = 1e-5 * scale;
            let hk = 1e-5 * shape;
            let fd_l = (f(scale + hs, shape) - f(scale - hs, shape)) / (2.0 * hs);
            let fd_k = (f(scale, shape + hk) - f(scale, shape - hk)) / (2.0 * hk);
            prop_assert!((g[0] - fd_l).abs() <= 1e-5 * fd_l.abs().max(1e-3), "{} vs {}", g[0], fd_l);
            prop_assert!((g[1] - fd_k).abs() <= 1e-5 * fd_k.abs().max(1e-3), "{} vs {}", g[1], fd_k);
        }
    }
}
