//! Heavy-traffic delay law, light-traffic mean delay and the interpolations
//! between them.
//!
//! All heavy-traffic quantities describe `(1 - L rho) W` as `rho -> 1/L`.
//! Light-traffic values are first order in `rho` and exactly linear in it.

use statrs::function::{exponential, gamma};

use crate::distributions::DensityAtZero;
use crate::error::{ModelError, Result};
use crate::model::{
    check_stability, derive_quantities, scale, DerivedQuantities, FlowRef, IntersectionSpec,
    LoadedScenario, Sigma2Convention, Stability,
};
use crate::{lit, to_f64, Real};

/// Mixture law: zero with probability `atom`, otherwise `U * Gamma(shape, rate)`
/// with `U` uniform on `[0, 1]` and independent of the gamma variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayLaw<T> {
    pub atom: T,
    pub shape: T,
    pub rate: T,
}

impl<T: Real> DelayLaw<T> {
    pub fn mean(&self) -> T {
        (T::one() - self.atom) * self.shape / (lit::<T>(2.0) * self.rate)
    }

    /// Probability of the uniform-times-gamma branch.
    pub fn spread_probability(&self) -> T {
        T::one() - self.atom
    }

    /// Distribution function, evaluated in `f64`.
    pub fn cdf(&self, x: f64) -> f64 {
        let atom = to_f64(self.atom);
        if x < 0.0 {
            return 0.0;
        }
        atom + (1.0 - atom) * uniform_gamma_cdf(to_f64(self.shape), to_f64(self.rate), x)
    }
}

/// `P(U G <= x)` for `G ~ Gamma(a, mu)`:
/// `P(G <= x) + x E[1/G; G > x]`.
fn uniform_gamma_cdf(a: f64, mu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let y = mu * x;
    let body = gamma::gamma_lr(a, y);
    let tail = if (a - 1.0).abs() < 1e-12 {
        y * exponential::integral(y, 1).unwrap_or(0.0)
    } else if a > 1.0 {
        y / (a - 1.0) * gamma::gamma_ur(a - 1.0, y)
    } else {
        // a < 1: x * mu^a / Gamma(a) * Gamma(a - 1, y), via upper incomplete gamma recursion
        let upper = (gamma::gamma_ui(a, y) - y.powf(a - 1.0) * (-y).exp()) / (a - 1.0);
        y * upper / gamma::gamma(a)
    };
    (body + tail).min(1.0)
}

/// Heavy-traffic mean selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HtFormula {
    /// Mean of the heavy-traffic delay law, `(E[R]/2 + sigma^2/(4 delta))`.
    #[default]
    Mixture,
    /// `(E[R]/2 + sigma^2/delta)` with the unnormalized variance constant.
    Compact,
}

fn ht_topology<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef) -> Result<(T, T)> {
    let share = *dq
        .dominant_share
        .get(at.group)
        .ok_or_else(|| ModelError::InvalidInput(format!("no group {}", at.group + 1)))?;
    let own = dq
        .relative_loads
        .get(at.group)
        .and_then(|g| g.get(at.index))
        .copied()
        .ok_or_else(|| ModelError::InvalidInput(format!("no flow {at}")))?
        / dq.critical_load;
    if !(share < T::one()) || !(dq.delta > T::zero()) {
        return Err(ModelError::UnsupportedTopology(
            "heavy-traffic limit needs at least two loaded groups".into(),
        ));
    }
    Ok((share, own))
}

/// Limit law of the scaled delay `(1 - L rho) W_{g,j}`.
pub fn ht_delay_law<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef) -> Result<DelayLaw<T>> {
    let (share, own) = ht_topology(dq, at)?;
    if !(dq.sigma2 > T::zero()) {
        return Err(ModelError::InvalidInput(
            "heavy-traffic variance constant is zero; the gamma law degenerates".into(),
        ));
    }
    let two = lit::<T>(2.0);
    let l = dq.critical_load;
    let rho_1 = share * l;
    let rho_j = own * l;
    Ok(DelayLaw {
        atom: (rho_1 - rho_j) / (l - rho_j),
        shape: two * dq.total_red_mean * dq.delta / dq.sigma2 + T::one(),
        rate: two * dq.delta / (dq.sigma2 * (T::one() - share)),
    })
}

/// `lim (1 - L rho) E[W_{g,j}]` as `rho -> 1/L`.
pub fn ht_scaled_mean<T: Real>(
    dq: &DerivedQuantities<T>,
    at: FlowRef,
    formula: HtFormula,
) -> Result<T> {
    let (share, own) = ht_topology(dq, at)?;
    let one = T::one();
    let weight = (one - share) * (one - share) / (one - own);
    let half_red = dq.total_red_mean / lit(2.0);
    let spread = match formula {
        HtFormula::Mixture => dq.sigma2 / (lit::<T>(4.0) * dq.delta),
        HtFormula::Compact => dq.sigma2_raw / dq.delta,
    };
    Ok(weight * (half_red + spread))
}

/// Light-traffic mean delay as `intercept + slope * rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtLine<T> {
    pub intercept: T,
    pub slope: T,
}

impl<T: Real> LtLine<T> {
    pub fn at(&self, rho: T) -> T {
        self.intercept + self.slope * rho
    }
}

fn cyc(i: isize, m: usize) -> usize {
    i.rem_euclid(m as isize) as usize
}

fn require_red<T: Real>(dq: &DerivedQuantities<T>) -> Result<()> {
    if dq.total_red_mean > T::zero() {
        Ok(())
    } else {
        Err(ModelError::InvalidInput(
            "light-traffic formulas need a positive total all-red time".into(),
        ))
    }
}

fn check_flow<T: Real>(spec: &IntersectionSpec<T>, at: FlowRef) -> Result<()> {
    spec.get(at)
        .map(|_| ())
        .ok_or_else(|| ModelError::InvalidInput(format!("no flow {at}")))
}

/// Light-traffic mean delay under Poisson arrivals, term by term by arrival
/// epoch (own-flow service, other-group service, each all-red period).
pub fn lt_mean_poisson<T: Real>(scenario: &LoadedScenario<T>, at: FlowRef) -> Result<T> {
    let spec = scenario.spec();
    check_flow(spec, at)?;
    let dq = derive_quantities(spec, Sigma2Convention::Normalized)?;
    require_red(&dq)?;
    let rho = scenario.rho();
    let one = T::one();
    let two = lit::<T>(2.0);
    let m_count = spec.group_count();
    let g = at.group as isize;
    let mi = m_count as isize;
    let load = |grp: usize, k: usize| rho * dq.relative_loads[grp][k];
    let group_load = |grp: isize| rho * dq.group_load[cyc(grp, m_count)];
    let red = |k: isize| dq.red_mean[cyc(k, m_count)];
    let between = |from: isize, to: isize| -> T { (from..=to).map(group_load).sum() };
    let reds = |from: isize, to: isize| -> T { (from..=to).map(red).sum() };

    let own_load = load(at.group, at.index);
    let own_b = dq.headway_means[at.group][at.index];
    let own_bres = dq.headway_residuals[at.group][at.index];

    let mut total = own_load * (own_bres + own_b);
    for m in (g - mi + 1)..g {
        let mg = cyc(m, m_count);
        let after = reds(m, g - 1);
        for k in 0..dq.relative_loads[mg].len() {
            total = total + load(mg, k) * (dq.headway_residuals[mg][k] + after + own_b);
        }
    }
    for m in (g - mi)..g {
        let mg = cyc(m, m_count);
        let s = between(m + 1, g - 1);
        let inner = dq.red_residual[mg] * (one - rho + two * s + own_load)
            + reds(g - mi, m - 1) * (s + own_load)
            + reds(m + 1, g - 1) * (one - rho + s)
            + (one - rho) * own_b;
        total = total + dq.red_mean[mg] / dq.total_red_mean * inner;
    }
    Ok(total)
}

/// `E[A_hat] g_hat(0)` of a flow's unscaled interarrival law.
pub fn density_zero<T: Real>(
    spec: &IntersectionSpec<T>,
    at: FlowRef,
    mode: DensityAtZero,
) -> Result<T> {
    let flow = spec.flow(at);
    Ok(flow.unscaled_interarrival()?.fit().density_zero_factor(mode))
}

/// Intercept and slope of the general-renewal light-traffic mean delay.
/// With `stay_empty = false`, same-group arrivals during another flow's
/// service wait one own headway instead of passing through.
pub fn lt_line<T: Real>(
    spec: &IntersectionSpec<T>,
    at: FlowRef,
    g0: DensityAtZero,
    stay_empty: bool,
) -> Result<LtLine<T>> {
    check_flow(spec, at)?;
    let dq = derive_quantities(spec, Sigma2Convention::Normalized)?;
    require_red(&dq)?;
    let factor = density_zero(spec, at, g0)?;
    let one = T::one();
    let m_count = spec.group_count();
    let g = at.group as isize;
    let mi = m_count as isize;
    let own_b = dq.headway_means[at.group][at.index];
    let own_bres = dq.headway_residuals[at.group][at.index];
    let own_hat = dq.relative_loads[at.group][at.index];

    let mut same_group = T::zero();
    for (k, (&r, &bres)) in dq.relative_loads[at.group]
        .iter()
        .zip(&dq.headway_residuals[at.group])
        .enumerate()
    {
        if k != at.index {
            same_group = same_group + r * (bres + own_b);
            if !stay_empty {
                same_group = same_group - r * own_b;
            }
        }
    }
    let mut variance_term = T::zero();
    for m in (g - mi)..g {
        let s: T = ((m + 1)..g).map(|k| dq.group_load[cyc(k, m_count)]).sum();
        variance_term = variance_term + s * dq.red_variance[cyc(m, m_count)];
    }
    let er = dq.total_red_mean;
    let rres = dq.total_red_residual;
    let gl = dq.group_load[at.group];

    let intercept = own_b + rres;
    let slope = own_hat * (factor - one) * own_bres + dq.headway_residual - same_group
        + (own_hat - one) * rres
        + (one - gl) * er
        + variance_term / er;
    Ok(LtLine { intercept, slope })
}

/// Light-traffic mean delay for general renewal arrivals.
pub fn lt_mean_general<T: Real>(
    scenario: &LoadedScenario<T>,
    at: FlowRef,
    g0: DensityAtZero,
    stay_empty: bool,
) -> Result<T> {
    Ok(lt_line(scenario.spec(), at, g0, stay_empty)?.at(scenario.rho()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterpolationOrder {
    First,
    Second,
}

impl InterpolationOrder {
    pub fn degree(self) -> u8 {
        match self {
            InterpolationOrder::First => 1,
            InterpolationOrder::Second => 2,
        }
    }

    pub fn from_degree(d: u8) -> Option<Self> {
        match d {
            1 => Some(InterpolationOrder::First),
            2 => Some(InterpolationOrder::Second),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OrderChoice {
    #[default]
    Auto,
    Fixed(InterpolationOrder),
}

/// First order iff the load of all other groups is smaller than the load of
/// the other flows in the own group. Exact ties give second order.
pub fn select_order<T: Real>(spec: &IntersectionSpec<T>, at: FlowRef) -> InterpolationOrder {
    let group = &spec.groups()[at.group];
    let own_group = group.relative_load();
    let others_in_group = own_group - group.flows()[at.index].relative_load;
    let other_groups = T::one() - own_group;
    let criterion = other_groups - others_in_group;
    if criterion < -(lit::<T>(64.0) * T::epsilon()) {
        InterpolationOrder::First
    } else {
        InterpolationOrder::Second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ApproxOptions {
    pub order: OrderChoice,
    pub ht_formula: HtFormula,
    pub sigma2: Sigma2Convention,
    pub g0: DensityAtZero,
    pub stay_empty: bool,
}

impl ApproxOptions {
    pub fn new() -> Self {
        Self {
            stay_empty: true,
            ..Self::default()
        }
    }

    pub fn with_order(mut self, order: OrderChoice) -> Self {
        self.order = order;
        self
    }
}

/// Numerator coefficients of `(k0 + k1 rho + k2 rho^2) / (1 - L rho)`.
/// First order leaves `k2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationConstants<T> {
    pub order: InterpolationOrder,
    pub k0: T,
    pub k1: T,
    pub k2: T,
    pub critical_load: T,
    pub ht_mean: T,
    pub lt: LtLine<T>,
}

impl<T: Real> InterpolationConstants<T> {
    pub fn numerator(&self, rho: T) -> T {
        self.k0 + rho * (self.k1 + rho * self.k2)
    }

    /// Interpolated mean delay; no stability check.
    pub fn evaluate(&self, rho: T) -> T {
        self.numerator(rho) / (T::one() - self.critical_load * rho)
    }
}

pub fn interpolation_constants<T: Real>(
    spec: &IntersectionSpec<T>,
    at: FlowRef,
    options: &ApproxOptions,
) -> Result<InterpolationConstants<T>> {
    let dq = derive_quantities(spec, options.sigma2)?;
    let ht_mean = ht_scaled_mean(&dq, at, options.ht_formula)?;
    let lt = lt_line(spec, at, options.g0, options.stay_empty)?;
    let order = match options.order {
        OrderChoice::Auto => select_order(spec, at),
        OrderChoice::Fixed(o) => o,
    };
    let l = dq.critical_load;
    let k0 = lt.intercept;
    let (k1, k2) = match order {
        InterpolationOrder::First => (l * (ht_mean - k0), T::zero()),
        InterpolationOrder::Second => {
            let k1 = lt.slope - l * k0;
            (k1, l * l * (ht_mean - k0) - l * k1)
        }
    };
    Ok(InterpolationConstants {
        order,
        k0,
        k1,
        k2,
        critical_load: l,
        ht_mean,
        lt,
    })
}

/// Approximate mean delay of flow `at` at total load `rho`.
pub fn approx_mean_delay<T: Real>(
    spec: &IntersectionSpec<T>,
    rho: T,
    at: FlowRef,
    options: &ApproxOptions,
) -> Result<T> {
    let verdict = check_stability(spec, rho);
    if verdict.stability != Stability::Stable {
        return Err(ModelError::UnstableLoad {
            critical_load: to_f64(spec.critical_load() * rho),
            margin: to_f64(verdict.margin),
        });
    }
    if rho < T::zero() {
        return Err(ModelError::InvalidInput("load must be nonnegative".into()));
    }
    Ok(interpolation_constants(spec, at, options)?.evaluate(rho))
}

/// Convenience: loaded scenario plus approximation for every flow.
pub fn approx_all<T: Real>(
    spec: &IntersectionSpec<T>,
    rho: T,
    options: &ApproxOptions,
) -> Result<Vec<(FlowRef, T)>> {
    scale(spec, rho)?;
    spec.flow_refs()
        .map(|at| Ok((at, approx_mean_delay(spec, rho, at, options)?)))
        .collect()
}
