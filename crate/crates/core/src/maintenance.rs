//! Maintenance cost, the two decision policies, and regret.
//!
//! A decision `z` is a maintenance window measured in cycles from now; a label
//! `y` is the realized RUL on the same integer axis. Maintaining at `z <= y`
//! is preventive, anything later is a failure followed by corrective repair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rul_dist::{DiscreteRulDist, RulSupport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Preventive maintenance cost `c_p`.
    pub preventive: f64,
    /// Corrective maintenance cost `c_c`.
    pub corrective: f64,
    /// Amortized component cost per unused cycle `c_m`.
    pub component_rate: f64,
    /// Downtime cost per cycle of unplanned outage `c_d`.
    pub downtime_rate: f64,
}

impl CostParams {
    pub fn new(
        preventive: f64,
        corrective: f64,
        component_rate: f64,
        downtime_rate: f64,
    ) -> Result<Self> {
        let all = [preventive, corrective, component_rate, downtime_rate];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter(
                "cost coefficients must be finite and non-negative".into(),
            ));
        }
        if corrective <= preventive {
            return Err(Error::InvalidParameter(format!(
                "corrective cost {corrective} must exceed preventive cost {preventive}"
            )));
        }
        if downtime_rate <= component_rate {
            return Err(Error::InvalidParameter(format!(
                "downtime rate {downtime_rate} must exceed component rate {component_rate}"
            )));
        }
        Ok(Self {
            preventive,
            corrective,
            component_rate,
            downtime_rate,
        })
    }

    /// Turbofan case-study economics: `c_p=50, c_c=200, c_m=1, c_d=5`.
    pub fn turbofan() -> Self {
        Self::new(50.0, 200.0, 1.0, 5.0).expect("valid constants")
    }

    /// Motivating-example economics: `c_p=10, c_c=100, c_m=1, c_d=5`.
    pub fn motivating_example() -> Self {
        Self::new(10.0, 100.0, 1.0, 5.0).expect("valid constants")
    }

    /// Multiply every coefficient by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.preventive * factor,
            self.corrective * factor,
            self.component_rate * factor,
            self.downtime_rate * factor,
        )
    }

    /// Largest cost over `windows x support`, by enumeration.
    pub fn max_cost(&self, windows: &FeasibleSet, support: RulSupport) -> f64 {
        windows
            .iter()
            .flat_map(|z| support.values().map(move |y| cost(z, y, self)))
            .fold(0.0, f64::max)
    }
}

/// Sorted, distinct candidate maintenance windows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleSet {
    windows: Vec<u32>,
}

impl FeasibleSet {
    pub fn new(windows: Vec<u32>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidParameter("feasible set is empty".into()));
        }
        if windows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "feasible windows must be strictly increasing".into(),
            ));
        }
        Ok(Self { windows })
    }

    /// `{start, start+step, ..., <= end}`.
    pub fn grid(start: u32, step: u32, end: u32) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidParameter("grid step must be positive".into()));
        }
        Self::new((start..=end).step_by(step as usize).collect())
    }

    /// Every value of the support as a window.
    pub fn from_support(support: RulSupport) -> Self {
        Self {
            windows: support.values().collect(),
        }
    }

    pub fn windows(&self) -> &[u32] {
        &self.windows
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.windows.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn max(&self) -> u32 {
        *self.windows.last().expect("non-empty")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileParams {
    alpha: f64,
}

impl QuantileParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerated failure probability must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Realized cost of maintaining at `z` when the component fails at `y`.
#[inline]
pub fn cost(z: u32, y: u32, params: &CostParams) -> f64 {
    if z <= y {
        params.preventive + params.component_rate * (y - z) as f64
    } else {
        params.corrective + params.downtime_rate * (z - y) as f64
    }
}

/// Exact expectation of [`cost`] over the full support.
pub fn expected_cost(z: u32, dist: &DiscreteRulDist, params: &CostParams) -> f64 {
    dist.probs()
        .iter()
        .zip(dist.support().values())
        .map(|(p, y)| p * cost(z, y, params))
        .sum()
}

/// Expected cost of every window, computed from running sums in one pass
/// over the support.
///
/// With `P = P(Y < z)`, `S = E[Y; Y < z]` and `Q, T` the complementary
/// masses and partial means,
/// `E c(z;Y) = c_p Q + c_m (T - zQ) + c_c P + c_d (zP - S)`.
pub(crate) fn expected_costs_into(
    probs: &[f64],
    params: &CostParams,
    windows: &[u32],
    out: &mut Vec<f64>,
) {
    out.clear();
    let h = probs.len();
    let (mut total_mass, mut total_moment) = (0.0, 0.0);
    for (i, p) in probs.iter().enumerate() {
        total_mass += p;
        total_moment += p * (i + 1) as f64;
    }
    let (mut below_mass, mut below_moment) = (0.0, 0.0);
    let mut next = 0usize;
    for &z in windows {
        // accumulate y < z, y in 1..=H
        let upto = (z.saturating_sub(1) as usize).min(h);
        while next < upto {
            below_mass += probs[next];
            below_moment += probs[next] * (next + 1) as f64;
            next += 1;
        }
        let above_mass = (total_mass - below_mass).max(0.0);
        let above_moment = total_moment - below_moment;
        let zf = z as f64;
        out.push(
            params.preventive * above_mass
                + params.component_rate * (above_moment - zf * above_mass)
                + params.corrective * below_mass
                + params.downtime_rate * (zf * below_mass - below_moment),
        );
    }
}

pub(crate) fn cso_decide_probs(
    probs: &[f64],
    params: &CostParams,
    windows: &[u32],
    scratch: &mut Vec<f64>,
) -> u32 {
    expected_costs_into(probs, params, windows, scratch);
    let mut best = 0;
    for i in 1..scratch.len() {
        if scratch[i] < scratch[best] {
            best = i;
        }
    }
    windows[best]
}

pub(crate) fn quantile_decide_probs(
    probs: &[f64],
    q: QuantileParams,
    windows: &[u32],
) -> Result<u32> {
    let h = probs.len();
    let mut chosen = None;
    let mut below = 0.0;
    let mut next = 0usize;
    for &z in windows {
        let upto = (z.saturating_sub(1) as usize).min(h);
        while next < upto {
            below += probs[next];
            next += 1;
        }
        let mass = if upto == h { 1.0 } else { below.min(1.0) };
        if mass <= q.alpha() {
            chosen = Some(z);
        } else {
            // the cdf is non-decreasing in z, so no later window can qualify
            break;
        }
    }
    chosen.ok_or(Error::Infeasible { alpha: q.alpha() })
}

/// Window minimizing expected cost; ties go to the smallest window.
pub fn cso_decide(dist: &DiscreteRulDist, params: &CostParams, windows: &FeasibleSet) -> u32 {
    let mut scratch = Vec::with_capacity(windows.len());
    cso_decide_probs(dist.probs(), params, windows.windows(), &mut scratch)
}

/// Latest window whose predicted pre-window failure probability is at most alpha.
pub fn quantile_decide(
    dist: &DiscreteRulDist,
    q: QuantileParams,
    windows: &FeasibleSet,
) -> Result<u32> {
    quantile_decide_probs(dist.probs(), q, windows.windows())
}

/// Hindsight-optimal cost for a realized RUL.
pub fn oracle_cost(y: u32, params: &CostParams, windows: &FeasibleSet) -> f64 {
    windows
        .iter()
        .map(|z| cost(z, y, params))
        .fold(f64::INFINITY, f64::min)
}

/// `cost(z, y) - oracle_cost(y)`; non-negative whenever `z` is drawn from `windows`.
pub fn regret(z: u32, y: u32, params: &CostParams, windows: &FeasibleSet) -> f64 {
    cost(z, y, params) - oracle_cost(y, params, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rul_dist::truncated_poisson;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_atoms() -> DiscreteRulDist {
        let support = RulSupport::new(30).unwrap();
        let mut p = vec![0.0; 30];
        p[9] = 0.5;
        p[19] = 0.5;
        DiscreteRulDist::new(support, p).unwrap()
    }

    fn small_grid() -> FeasibleSet {
        FeasibleSet::new(vec![0, 5, 10, 15, 20]).unwrap()
    }

    #[test]
    fn cost_branches() {
        let c = CostParams::turbofan();
        assert_eq!(cost(100, 120, &c), 70.0);
        assert_eq!(cost(100, 90, &c), 250.0);
        assert_eq!(cost(40, 40, &c), 50.0);
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::new(50.0, 40.0, 1.0, 5.0).is_err());
        assert!(CostParams::new(50.0, 200.0, 5.0, 1.0).is_err());
        assert!(CostParams::new(-1.0, 200.0, 1.0, 5.0).is_err());
    }

    #[test]
    fn feasible_set_validation() {
        assert!(FeasibleSet::new(vec![]).is_err());
        assert!(FeasibleSet::new(vec![0, 5, 5]).is_err());
        assert!(FeasibleSet::new(vec![5, 0]).is_err());
        let g = FeasibleSet::grid(0, 5, 125).unwrap();
        assert_eq!(g.len(), 26);
        assert_eq!(g.max(), 125);
    }

    #[test]
    fn expected_cost_examples() {
        let c = CostParams::turbofan();
        let d = two_atoms();
        assert_relative_eq!(expected_cost(10, &d, &c), 55.0, epsilon = 1e-12);
        assert_relative_eq!(expected_cost(15, &d, &c), 140.0, epsilon = 1e-12);
        let point = DiscreteRulDist::point_mass(d.support(), 17).unwrap();
        assert_eq!(expected_cost(12, &point, &c), cost(12, 17, &c));
    }

    #[test]
    fn running_sums_match_direct_expectation() {
        let c = CostParams::turbofan();
        let d = two_atoms();
        let mut out = Vec::new();
        expected_costs_into(d.probs(), &c, small_grid().windows(), &mut out);
        let expected = [65.0, 60.0, 55.0, 140.0, 150.0];
        for (a, b) in out.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn cso_examples() {
        let c = CostParams::turbofan();
        assert_eq!(cso_decide(&two_atoms(), &c, &small_grid()), 10);
        let point = DiscreteRulDist::point_mass(RulSupport::new(30).unwrap(), 15).unwrap();
        assert_eq!(cso_decide(&point, &c, &small_grid()), 15);
    }

    #[test]
    fn cso_matches_enumeration_on_motivating_example() {
        let support = RulSupport::new(30).unwrap();
        let d = truncated_poisson(20.0, support).unwrap();
        let c = CostParams::motivating_example();
        let z_set = FeasibleSet::from_support(support);
        let mut best = (u32::MAX, f64::INFINITY);
        for z in z_set.iter() {
            let e = expected_cost(z, &d, &c);
            if e < best.1 {
                best = (z, e);
            }
        }
        assert_eq!(cso_decide(&d, &c, &z_set), best.0);
    }

    #[test]
    fn quantile_examples() {
        let d = two_atoms();
        let z = small_grid();
        assert_eq!(
            quantile_decide(&d, QuantileParams::new(0.01).unwrap(), &z).unwrap(),
            10
        );
        assert_eq!(
            quantile_decide(&d, QuantileParams::new(0.6).unwrap(), &z).unwrap(),
            20
        );
        // slack tolerance: every window qualifies
        let support = RulSupport::new(30).unwrap();
        let u = DiscreteRulDist::uniform(support);
        let q = QuantileParams::new(1.0 - 1.0 / 60.0).unwrap();
        assert_eq!(
            quantile_decide(&u, q, &FeasibleSet::from_support(support)).unwrap(),
            30
        );
    }

    #[test]
    fn quantile_infeasible_when_first_window_violates() {
        let support = RulSupport::new(10).unwrap();
        let d = DiscreteRulDist::point_mass(support, 1).unwrap();
        let z = FeasibleSet::new(vec![3, 6]).unwrap();
        assert!(matches!(
            quantile_decide(&d, QuantileParams::new(0.5).unwrap(), &z),
            Err(Error::Infeasible { .. })
        ));
        assert!(QuantileParams::new(0.0).is_err());
        assert!(QuantileParams::new(1.0).is_err());
    }

    #[test]
    fn oracle_and_regret_examples() {
        let c = CostParams::turbofan();
        let z = FeasibleSet::grid(0, 5, 125).unwrap();
        assert_eq!(oracle_cost(95, &c, &z), 50.0);
        assert_eq!(oracle_cost(3, &c, &z), 53.0);
        assert_eq!(oracle_cost(40, &c, &z), c.preventive);
        assert_eq!(regret(90, 95, &c, &z), 5.0);
        assert_eq!(regret(100, 95, &c, &z), 175.0);
        assert_eq!(regret(95, 95, &c, &z), 0.0);
    }

    #[test]
    fn max_cost_by_enumeration() {
        let c = CostParams::turbofan();
        let z = FeasibleSet::grid(0, 5, 125).unwrap();
        assert_eq!(
            c.max_cost(&z, RulSupport::new(150).unwrap()),
            200.0 + 5.0 * 124.0
        );
    }

    fn arb_dist() -> impl Strategy<Value = DiscreteRulDist> {
        proptest::collection::vec(0.0f64..1.0, 40).prop_filter_map("positive mass", |w| {
            DiscreteRulDist::from_weights(RulSupport::new(40).unwrap(), w).ok()
        })
    }

    proptest! {
        #[test]
        fn regret_non_negative(k in 0u32..11, y in 1u32..60) {
            let c = CostParams::turbofan();
            let set = FeasibleSet::grid(0, 5, 50).unwrap();
            let z = set.windows()[k as usize];
            let r = regret(z, y, &c, &set);
            prop_assert!(r >= 0.0);
            let hindsight_best = set.iter().all(|w| cost(z, y, &c) <= cost(w, y, &c));
            prop_assert_eq!(r == 0.0, hindsight_best);
        }

        #[test]
        fn cost_monotone_in_window(y in 1u32..100, z in 0u32..150) {
            let c = CostParams::turbofan();
            if z < y {
                prop_assert!(cost(z + 1, y, &c) <= cost(z, y, &c));
            } else {
                prop_assert!(cost(z + 1, y, &c) > cost(z, y, &c));
            }
        }

        #[test]
        fn cso_is_scale_invariant(d in arb_dist(), factor in 0.01f64..100.0) {
            let c = CostParams::turbofan();
            let set = FeasibleSet::grid(0, 3, 39).unwrap();
            prop_assert_eq!(cso_decide(&d, &c, &set), cso_decide(&d, &c.scaled(factor).unwrap(), &set));
        }

        #[test]
        fn quantile_decision_is_latest_feasible(d in arb_dist(), alpha in 0.01f64..0.99) {
            let set = FeasibleSet::grid(0, 2, 40).unwrap();
            let q = QuantileParams::new(alpha).unwrap();
            let z = quantile_decide(&d, q, &set).unwrap();
            prop_assert!(d.cdf_below(z) <= alpha);
            for w in set.iter().filter(|w| *w > z) {
                prop_assert!(d.cdf_below(w) > alpha);
            }
        }

        #[test]
        fn running_sums_agree_with_direct(d in arb_dist()) {
            let c = CostParams::turbofan();
            let set = FeasibleSet::grid(0, 1, 45).unwrap();
            let mut out = Vec::new();
            expected_costs_into(d.probs(), &c, set.windows(), &mut out);
            for (z, e) in set.iter().zip(&out) {
                prop_assert!((expected_cost(z, &d, &c) - e).abs() < 1e-9);
            }
        }
    }
}
