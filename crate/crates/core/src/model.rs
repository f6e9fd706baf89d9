//! Intersection data model: flows, groups, load normalization, derived
//! constants and the stability test.
//!
//! Loads are expressed relative to a reference system with total load 1:
//! flow `i` carries the fraction `relative_load` of the traffic, and a
//! scenario at total load `rho` gives it the flow ratio `rho * relative_load`.
//! Interarrival times scale as `A = A_hat / rho`, headways and all-red
//! times do not scale.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::distributions::{DistributionModel, Family};
use crate::error::{ModelError, Result};
use crate::{lit, to_f64, Real};

const SECONDS_PER_HOUR: f64 = 3600.0;

/// One lane of traffic at the stop line.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec<T> {
    pub id: String,
    /// Fraction of the total load routed to this flow.
    pub relative_load: T,
    pub headway: DistributionModel<T>,
    pub interarrival_scv: T,
}

impl<T: Real> FlowSpec<T> {
    pub fn arrival_family(&self) -> Family {
        Family::for_scv(self.interarrival_scv)
    }

    /// Arrival rate at total load 1, `relative_load / E[B]`.
    pub fn unscaled_rate(&self) -> T {
        self.relative_load / self.headway.mean()
    }

    /// Interarrival law at total load 1.
    pub fn unscaled_interarrival(&self) -> Result<DistributionModel<T>> {
        DistributionModel::new(self.headway.mean() / self.relative_load, self.interarrival_scv)
    }
}

/// What happens to vehicles that reach a flow after it has emptied during
/// its own green.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// They cross without delay; the flow does not queue again.
    #[default]
    StayEmpty,
    /// They queue and are served, possibly extending the green.
    Refill,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::StayEmpty => "stay-empty",
            Mode::Refill => "refill",
        }
    }
}

/// Position of a flow: group index and rank within the group, both
/// zero-based. Rank 0 is the dominant flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowRef {
    pub group: usize,
    pub index: usize,
}

impl FlowRef {
    pub fn new(group: usize, index: usize) -> Self {
        Self { group, index }
    }

    pub fn is_dominant(&self) -> bool {
        self.index == 0
    }
}

impl fmt::Display for FlowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.group + 1, self.index + 1)
    }
}

/// Flows that receive green together, followed by an all-red period.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec<T> {
    flows: Vec<FlowSpec<T>>,
    all_red: DistributionModel<T>,
}

impl<T: Real> GroupSpec<T> {
    /// Orders the flows by decreasing relative load. The sort is stable, so on
    /// exact ties the flow listed first becomes dominant.
    pub fn new(mut flows: Vec<FlowSpec<T>>, all_red: DistributionModel<T>) -> Result<Self> {
        if flows.is_empty() {
            return Err(ModelError::InvalidInput("group without flows".into()));
        }
        flows.sort_by(|a, b| {
            b.relative_load
                .partial_cmp(&a.relative_load)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if flows.len() > 1 && flows[0].relative_load == flows[1].relative_load {
            log::warn!(
                "flows {} and {} tie for dominance; using {} as dominant",
                flows[0].id,
                flows[1].id,
                flows[0].id
            );
        }
        Ok(Self { flows, all_red })
    }

    pub fn flows(&self) -> &[FlowSpec<T>] {
        &self.flows
    }

    pub fn dominant(&self) -> &FlowSpec<T> {
        &self.flows[0]
    }

    pub fn all_red(&self) -> &DistributionModel<T> {
        &self.all_red
    }

    pub fn relative_load(&self) -> T {
        self.flows.iter().map(|f| f.relative_load).sum()
    }
}

/// The static description of an intersection, groups in cyclic order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionSpec<T> {
    groups: Vec<GroupSpec<T>>,
}

impl<T: Real> IntersectionSpec<T> {
    pub fn new(groups: Vec<GroupSpec<T>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(ModelError::InvalidInput("intersection without groups".into()));
        }
        let mut seen = HashSet::new();
        let mut total = T::zero();
        for flow in groups.iter().flat_map(|g| g.flows.iter()) {
            if !seen.insert(flow.id.as_str()) {
                return Err(ModelError::InvalidInput(format!(
                    "flow {} appears more than once",
                    flow.id
                )));
            }
            if !(flow.relative_load > T::zero()) || !flow.relative_load.is_finite() {
                return Err(ModelError::InvalidInput(format!(
                    "flow {} has non-positive relative load {}",
                    flow.id, flow.relative_load
                )));
            }
            if !(flow.headway.mean() > T::zero()) {
                return Err(ModelError::InvalidInput(format!(
                    "flow {} has a non-positive mean headway",
                    flow.id
                )));
            }
            if !(flow.interarrival_scv >= T::zero()) || !flow.interarrival_scv.is_finite() {
                return Err(ModelError::InvalidInput(format!(
                    "flow {} has invalid interarrival scv {}",
                    flow.id, flow.interarrival_scv
                )));
            }
            total = total + flow.relative_load;
        }
        if (total - T::one()).abs() > load_tolerance::<T>() {
            return Err(ModelError::InvalidInput(format!(
                "relative loads must sum to 1, got {total}"
            )));
        }
        Ok(Self { groups })
    }

    /// Builds the intersection from flows with relative loads in any positive
    /// proportion; loads are rescaled to sum to one.
    pub fn from_relative_loads(
        mut flows: Vec<FlowSpec<T>>,
        layout: &[GroupLayout<T>],
    ) -> Result<Self> {
        let total: T = flows.iter().map(|f| f.relative_load).sum();
        if !(total > T::zero()) || !total.is_finite() {
            return Err(ModelError::InvalidInput("relative loads must be positive".into()));
        }
        for f in &mut flows {
            f.relative_load = f.relative_load / total;
        }
        assemble(flows, layout)
    }

    pub fn groups(&self) -> &[GroupSpec<T>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn flow_count(&self) -> usize {
        self.groups.iter().map(|g| g.flows.len()).sum()
    }

    pub fn flow(&self, at: FlowRef) -> &FlowSpec<T> {
        &self.groups[at.group].flows[at.index]
    }

    pub fn get(&self, at: FlowRef) -> Option<&FlowSpec<T>> {
        self.groups.get(at.group)?.flows.get(at.index)
    }

    /// All flow positions, group by group, dominant first.
    pub fn flow_refs(&self) -> impl Iterator<Item = FlowRef> + '_ {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, grp)| (0..grp.flows.len()).map(move |j| FlowRef::new(g, j)))
    }

    pub fn find(&self, id: &str) -> Option<FlowRef> {
        self.flow_refs().find(|&r| self.flow(r).id == id)
    }

    /// `L`: the summed relative load of the dominant flows.
    pub fn critical_load(&self) -> T {
        self.groups.iter().map(|g| g.dominant().relative_load).sum()
    }

    pub fn total_red_mean(&self) -> T {
        self.groups.iter().map(|g| g.all_red.mean()).sum()
    }

    pub fn all_red_deterministic(&self) -> bool {
        self.groups.iter().all(|g| g.all_red.scv() == T::zero())
    }
}

fn load_tolerance<T: Real>() -> T {
    T::epsilon().sqrt()
}

/// Group membership and all-red time, groups listed in cyclic order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout<T> {
    pub flow_ids: Vec<String>,
    pub all_red: DistributionModel<T>,
}

/// Flow as measured in the field, rates in vehicles per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFlow<T> {
    pub id: String,
    pub arrival_rate_per_hour: T,
    pub saturation_rate_per_hour: T,
    pub headway_scv: T,
    pub interarrival_scv: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLoads<T> {
    pub spec: IntersectionSpec<T>,
    /// Total load `sum(arrival / saturation)` implied by the raw rates.
    pub actual_load: T,
}

/// Converts measured rates into relative loads and headway means (seconds).
pub fn normalize_loads<T: Real>(
    raw: &[RawFlow<T>],
    layout: &[GroupLayout<T>],
) -> Result<NormalizedLoads<T>> {
    let mut ratios = Vec::with_capacity(raw.len());
    for f in raw {
        let ok = |x: T| x > T::zero() && x.is_finite();
        if !ok(f.arrival_rate_per_hour) || !ok(f.saturation_rate_per_hour) {
            return Err(ModelError::InvalidInput(format!(
                "flow {} needs positive arrival and saturation rates",
                f.id
            )));
        }
        ratios.push(f.arrival_rate_per_hour / f.saturation_rate_per_hour);
    }
    let actual_load: T = ratios.iter().copied().sum();
    let flows = raw
        .iter()
        .zip(&ratios)
        .map(|(f, &ratio)| {
            Ok(FlowSpec {
                id: f.id.clone(),
                relative_load: ratio / actual_load,
                headway: DistributionModel::new(
                    lit::<T>(SECONDS_PER_HOUR) / f.saturation_rate_per_hour,
                    f.headway_scv,
                )?,
                interarrival_scv: f.interarrival_scv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedLoads {
        spec: assemble(flows, layout)?,
        actual_load,
    })
}

fn assemble<T: Real>(flows: Vec<FlowSpec<T>>, layout: &[GroupLayout<T>]) -> Result<IntersectionSpec<T>> {
    let mut by_id: HashMap<String, FlowSpec<T>> = HashMap::with_capacity(flows.len());
    for f in flows {
        let id = f.id.clone();
        if by_id.insert(id.clone(), f).is_some() {
            return Err(ModelError::InvalidInput(format!("duplicate flow id {id}")));
        }
    }
    let mut groups = Vec::with_capacity(layout.len());
    for (g, lay) in layout.iter().enumerate() {
        let members = lay
            .flow_ids
            .iter()
            .map(|id| {
                by_id.remove(id).ok_or_else(|| {
                    ModelError::InvalidInput(format!(
                        "group {} references unknown or already assigned flow {id}",
                        g + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(GroupSpec::new(members, lay.all_red)?);
    }
    if let Some(id) = by_id.keys().next() {
        return Err(ModelError::InvalidInput(format!("flow {id} is not assigned to any group")));
    }
    IntersectionSpec::new(groups)
}

/// Which normalization of the heavy-traffic variance constant to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Sigma2Convention {
    /// `sum_g (lambda_{g,1} / L) (Var B_{g,1} + rho_{g,1}^2 Var A_{g,1})`.
    #[default]
    Normalized,
    /// Same sum without the `1/L` factor.
    Raw,
}

/// Constants derived from an [`IntersectionSpec`]; all at total load 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities<T> {
    /// `L`, relative load of the dominant flows.
    pub critical_load: T,
    /// `delta = sum_g s_g (1 - s_g) / 2` with `s_g = rho_{g,1} / L`.
    pub delta: T,
    /// Variance constant in the selected convention.
    pub sigma2: T,
    pub sigma2_convention: Sigma2Convention,
    pub sigma2_normalized: T,
    pub sigma2_raw: T,
    pub red_mean: Vec<T>,
    pub red_variance: Vec<T>,
    pub red_residual: Vec<T>,
    /// `E[R]` of the total all-red time per cycle.
    pub total_red_mean: T,
    /// `E[R^res]` of the total all-red time (independent all-reds).
    pub total_red_residual: T,
    /// Headway of an arbitrary vehicle, `1 / sum lambda_i`.
    pub mean_headway: T,
    pub headway_residual: T,
    pub relative_loads: Vec<Vec<T>>,
    pub headway_means: Vec<Vec<T>>,
    pub headway_residuals: Vec<Vec<T>>,
    pub group_load: Vec<T>,
    pub group_rate: Vec<T>,
    /// `rho_{g,1} / L` per group.
    pub dominant_share: Vec<T>,
    /// Index of the dominant flow within each group (always 0 after ordering).
    pub dominant: Vec<usize>,
}

impl<T: Real> DerivedQuantities<T> {
    pub fn group_count(&self) -> usize {
        self.group_load.len()
    }

    pub fn relative_load(&self, at: FlowRef) -> T {
        self.relative_loads[at.group][at.index]
    }
}

pub fn derive_quantities<T: Real>(
    spec: &IntersectionSpec<T>,
    convention: Sigma2Convention,
) -> Result<DerivedQuantities<T>> {
    let two = lit::<T>(2.0);
    let critical_load = spec.critical_load();
    let mut group_load = Vec::with_capacity(spec.group_count());
    let mut group_rate = Vec::with_capacity(spec.group_count());
    for (g, grp) in spec.groups().iter().enumerate() {
        let load = grp.relative_load();
        if !(load > T::zero()) {
            return Err(ModelError::DegenerateGroup { group: g });
        }
        group_load.push(load);
        group_rate.push(grp.flows().iter().map(|f| f.unscaled_rate()).sum());
    }
    let dominant_share: Vec<T> = spec
        .groups()
        .iter()
        .map(|g| g.dominant().relative_load / critical_load)
        .collect();
    let delta = dominant_share.iter().map(|&s| s * (T::one() - s)).sum::<T>() / two;

    let mut sigma2_raw = T::zero();
    for grp in spec.groups() {
        let d = grp.dominant();
        let b = d.headway.mean();
        // rho^2 Var[A_hat] = scv_A E[B]^2 because E[A_hat] = E[B] / rho_hat
        let term = d.headway.variance() + d.interarrival_scv * b * b;
        sigma2_raw = sigma2_raw + d.unscaled_rate() * term;
    }
    let sigma2_normalized = sigma2_raw / critical_load;
    let sigma2 = match convention {
        Sigma2Convention::Normalized => sigma2_normalized,
        Sigma2Convention::Raw => sigma2_raw,
    };

    let red_mean: Vec<T> = spec.groups().iter().map(|g| g.all_red().mean()).collect();
    let red_variance: Vec<T> = spec.groups().iter().map(|g| g.all_red().variance()).collect();
    let red_residual: Vec<T> = spec.groups().iter().map(|g| g.all_red().residual_mean()).collect();
    let total_red_mean: T = red_mean.iter().copied().sum();
    let total_red_second =
        red_variance.iter().copied().sum::<T>() + total_red_mean * total_red_mean;
    let total_red_residual = if total_red_mean > T::zero() {
        total_red_second / (two * total_red_mean)
    } else {
        T::zero()
    };

    let total_rate: T = group_rate.iter().copied().sum();
    let second: T = spec
        .groups()
        .iter()
        .flat_map(|g| g.flows())
        .map(|f| f.unscaled_rate() * f.headway.second_moment())
        .sum::<T>()
        / total_rate;
    let mean_headway = T::one() / total_rate;

    let per_flow = |f: fn(&FlowSpec<T>) -> T| -> Vec<Vec<T>> {
        spec.groups()
            .iter()
            .map(|g| g.flows().iter().map(f).collect())
            .collect()
    };

    Ok(DerivedQuantities {
        critical_load,
        delta,
        sigma2,
        sigma2_convention: convention,
        sigma2_normalized,
        sigma2_raw,
        red_mean,
        red_variance,
        red_residual,
        total_red_mean,
        total_red_residual,
        mean_headway,
        headway_residual: second / (two * mean_headway),
        relative_loads: per_flow(|f| f.relative_load),
        headway_means: per_flow(|f| f.headway.mean()),
        headway_residuals: per_flow(|f| f.headway.residual_mean()),
        group_load,
        group_rate,
        dominant_share,
        dominant: vec![0; spec.group_count()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict<T> {
    pub stability: Stability,
    /// `1 - L * rho`.
    pub margin: T,
}

impl<T: Real> StabilityVerdict<T> {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::Stable
    }
}

/// Undersaturated iff `L * rho < 1`. Margins within a few ulps of zero
/// count as the boundary.
pub fn check_stability<T: Real>(spec: &IntersectionSpec<T>, rho: T) -> StabilityVerdict<T> {
    let margin = T::one() - spec.critical_load() * rho;
    let tol = lit::<T>(16.0) * T::epsilon();
    let stability = if margin.abs() <= tol {
        Stability::Boundary
    } else if margin > T::zero() {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    StabilityVerdict { stability, margin }
}

/// Per-flow quantities at total load `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFlow<T> {
    pub arrival_rate: T,
    pub load: T,
    /// `None` at `rho = 0`, where the flow sees no arrivals.
    pub interarrival: Option<DistributionModel<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario<T> {
    spec: IntersectionSpec<T>,
    rho: T,
    flows: Vec<Vec<LoadedFlow<T>>>,
}

impl<T: Real> LoadedScenario<T> {
    pub fn spec(&self) -> &IntersectionSpec<T> {
        &self.spec
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn flow(&self, at: FlowRef) -> &LoadedFlow<T> {
        &self.flows[at.group][at.index]
    }

    /// `L * rho`.
    pub fn saturation(&self) -> T {
        self.spec.critical_load() * self.rho
    }

    pub fn group_load(&self, group: usize) -> T {
        self.flows[group].iter().map(|f| f.load).sum()
    }

    pub fn stability(&self) -> StabilityVerdict<T> {
        check_stability(&self.spec, self.rho)
    }
}

/// Scales the intersection to total load `rho`: arrival rates are multiplied
/// by `rho`, interarrival SCVs are kept.
pub fn scale<T: Real>(spec: &IntersectionSpec<T>, rho: T) -> Result<LoadedScenario<T>> {
    if !(rho >= T::zero()) || !rho.is_finite() {
        return Err(ModelError::InvalidInput(format!(
            "load must be finite and nonnegative, got {}",
            to_f64(rho)
        )));
    }
    let flows = spec
        .groups()
        .iter()
        .map(|g| {
            g.flows()
                .iter()
                .map(|f| {
                    let interarrival = if rho > T::zero() {
                        let base = f.unscaled_interarrival()?;
                        Some(base.with_mean(base.mean() / rho)?)
                    } else {
                        None
                    };
                    Ok(LoadedFlow {
                        arrival_rate: rho * f.unscaled_rate(),
                        load: rho * f.relative_load,
                        interarrival,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedScenario {
        spec: spec.clone(),
        rho,
        flows,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn red(x: f64) -> DistributionModel<f64> {
        DistributionModel::deterministic(x).unwrap()
    }

    #[test]
    fn normalize_example_one_ratios() {
        let raw: Vec<_> = (1..=6)
            .map(|i| RawFlow {
                id: i.to_string(),
                arrival_rate_per_hour: 100.0 * i as f64,
                saturation_rate_per_hour: 1800.0,
                headway_scv: 1.0,
                interarrival_scv: 1.0,
            })
            .collect();
        let layout = vec![GroupLayout {
            flow_ids: (1..=6).map(|i| i.to_string()).collect(),
            all_red: red(12.0),
        }];
        let n = normalize_loads(&raw, &layout).unwrap();
        for i in 1..=6 {
            let at = n.spec.find(&i.to_string()).unwrap();
            assert_relative_eq!(n.spec.flow(at).relative_load, i as f64 / 21.0, max_relative = 1e-14);
            assert_relative_eq!(n.spec.flow(at).headway.mean(), 2.0);
        }
        assert_relative_eq!(n.actual_load, 2100.0 / 1800.0, max_relative = 1e-14);
    }

    #[test]
    fn single_flow_has_full_load() {
        let raw = vec![RawFlow {
            id: "a".into(),
            arrival_rate_per_hour: 37.0,
            saturation_rate_per_hour: 1234.0,
            headway_scv: 0.5,
            interarrival_scv: 2.0,
        }];
        let layout = vec![GroupLayout { flow_ids: vec!["a".into()], all_red: red(3.0) }];
        let n = normalize_loads(&raw, &layout).unwrap();
        assert_eq!(n.spec.flow(FlowRef::new(0, 0)).relative_load, 1.0);
    }

    #[test]
    fn intersection_one_group_four() {
        let arrivals = [280.0, 930.0, 700.0, 120.0, 240.0, 60.0, 60.0, 60.0, 60.0];
        let sat = [1800.0, 1900.0, 1900.0, 1700.0, 1700.0, 1e4, 1e4, 1e4, 1e4];
        let raw: Vec<_> = (0..9)
            .map(|i| RawFlow {
                id: (i + 1).to_string(),
                arrival_rate_per_hour: arrivals[i],
                saturation_rate_per_hour: sat[i],
                headway_scv: if i < 5 { 1.0 } else { 0.0 },
                interarrival_scv: 1.0,
            })
            .collect();
        let ids = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>();
        let layout = vec![
            GroupLayout { flow_ids: ids(&[2, 3, 8, 9]), all_red: red(2.0) },
            GroupLayout { flow_ids: ids(&[4]), all_red: red(8.0) },
            GroupLayout { flow_ids: ids(&[6, 7]), all_red: red(4.0) },
            GroupLayout { flow_ids: ids(&[1, 5]), all_red: red(5.0) },
        ];
        let spec = normalize_loads(&raw, &layout).unwrap().spec;
        let g4 = &spec.groups()[3];
        assert_eq!(g4.flows()[0].id, "1");
        assert_eq!((g4.flows()[0].relative_load * 100.0).round(), 12.0);
        assert_eq!((g4.flows()[1].relative_load * 100.0).round(), 11.0);
    }

    #[test]
    fn rejects_bad_rates_and_layouts() {
        let raw = vec![RawFlow {
            id: "a".into(),
            arrival_rate_per_hour: 0.0,
            saturation_rate_per_hour: 1800.0,
            headway_scv: 1.0,
            interarrival_scv: 1.0,
        }];
        let layout = vec![GroupLayout { flow_ids: vec!["a".into()], all_red: red(3.0) }];
        assert!(matches!(normalize_loads(&raw, &layout), Err(ModelError::InvalidInput(_))));

        let mut ok = raw.clone();
        ok[0].arrival_rate_per_hour = 10.0;
        let missing = vec![GroupLayout { flow_ids: vec!["b".into()], all_red: red(3.0) }];
        assert!(normalize_loads(&ok, &missing).is_err());
        let twice = vec![
            GroupLayout { flow_ids: vec!["a".into()], all_red: red(3.0) },
            GroupLayout { flow_ids: vec!["a".into()], all_red: red(3.0) },
        ];
        assert!(normalize_loads(&ok, &twice).is_err());
    }

    #[test]
    fn flows_ordered_by_load_within_group() {
        let spec = scenario_v();
        let ids: Vec<_> = spec.groups()[1].flows().iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["6", "5", "4"]);
    }

    #[test]
    fn scenario_v_constants() {
        let spec = scenario_v();
        let dq = derive_quantities(&spec, Sigma2Convention::Normalized).unwrap();
        assert_relative_eq!(dq.critical_load, 3.0 / 7.0, max_relative = 1e-14);
        assert_relative_eq!(dq.delta, 2.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(dq.sigma2, 4.0, max_relative = 1e-14);
        // Poisson simplification: E[B^2] / E[B] of a dominant-flow headway
        assert_relative_eq!(dq.sigma2, 8.0 / 2.0, max_relative = 1e-14);
        assert_relative_eq!(dq.sigma2_raw, 4.0 * 3.0 / 7.0, max_relative = 1e-14);
        assert_relative_eq!(dq.total_red_mean, 12.0);
        assert_relative_eq!(dq.total_red_residual, 6.0);
        assert_relative_eq!(dq.mean_headway, 2.0, max_relative = 1e-14);
        assert_relative_eq!(dq.headway_residual, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn arbitrary_headway_is_inverse_total_rate() {
        let spec = fixtures::example_one(&[&[1, 6], &[2, 5], &[3, 4]]);
        let dq = derive_quantities(&spec, Sigma2Convention::Normalized).unwrap();
        let total: f64 = spec.flow_refs().map(|r| spec.flow(r).unscaled_rate()).sum();
        assert_eq!(dq.mean_headway, 1.0 / total);
    }

    #[test]
    fn random_all_red_residual() {
        let flows = vec![FlowSpec {
            id: "a".to_string(),
            relative_load: 0.5,
            headway: DistributionModel::exponential(2.0).unwrap(),
            interarrival_scv: 1.0,
        }, FlowSpec {
            id: "b".to_string(),
            relative_load: 0.5,
            headway: DistributionModel::exponential(2.0).unwrap(),
            interarrival_scv: 1.0,
        }];
        let exp6 = DistributionModel::exponential(6.0).unwrap();
        let layout = vec![
            GroupLayout { flow_ids: vec!["a".into()], all_red: exp6 },
            GroupLayout { flow_ids: vec!["b".into()], all_red: exp6 },
        ];
        let spec = IntersectionSpec::from_relative_loads(flows, &layout).unwrap();
        let dq = derive_quantities(&spec, Sigma2Convention::Normalized).unwrap();
        // E[R^2] = 72 + 144
        assert_relative_eq!(dq.total_red_residual, 216.0 / 24.0);
    }

    #[test]
    fn stability_verdicts() {
        let spec = scenario_v();
        let v = check_stability(&spec, 2.0);
        assert_eq!(v.stability, Stability::Stable);
        assert_relative_eq!(v.margin, 1.0 / 7.0, max_relative = 1e-12);
        assert_eq!(check_stability(&spec, 0.0).stability, Stability::Stable);
        assert_eq!(check_stability(&spec, 7.0 / 3.0).stability, Stability::Boundary);
        assert_eq!(check_stability(&spec, 2.5).stability, Stability::Unstable);
    }

    #[test]
    fn scaling() {
        let spec = scenario_v();
        let id = scale(&spec, 1.0).unwrap();
        for r in spec.flow_refs() {
            assert_eq!(id.flow(r).arrival_rate, spec.flow(r).unscaled_rate());
        }
        let two = scale(&spec, 2.0).unwrap();
        let six = spec.find("6").unwrap();
        assert_relative_eq!(two.flow(six).arrival_rate, 2.0 / 7.0, max_relative = 1e-14);
        assert_relative_eq!(two.flow(six).interarrival.unwrap().mean(), 3.5, max_relative = 1e-14);
        assert!(scale(&spec, 0.0).unwrap().flow(six).interarrival.is_none());
        assert!(scale(&spec, -1.0).is_err());
    }

    #[test]
    fn scaling_keeps_hyperexponential_scv() {
        let spec = example_one_with(&[&[1, 6], &[2, 5], &[3, 4]], 2.0, 1.0);
        let s = scale(&spec, 1.7).unwrap();
        for r in spec.flow_refs() {
            let d = s.flow(r).interarrival.unwrap();
            let m = d.fit().moments().unwrap();
            assert_relative_eq!(m.scv(), 2.0, max_relative = 1e-10);
            assert_relative_eq!(m.mean, spec.flow(r).unscaled_interarrival().unwrap().mean() / 1.7, max_relative = 1e-10);
        }
    }

    #[test]
    fn generic_over_f32() {
        let flows = vec![
            FlowSpec { id: "a".to_string(), relative_load: 1.0f32, headway: DistributionModel::exponential(2.0f32).unwrap(), interarrival_scv: 1.0 },
            FlowSpec { id: "b".to_string(), relative_load: 2.0f32, headway: DistributionModel::exponential(2.0f32).unwrap(), interarrival_scv: 1.0 },
        ];
        let layout = vec![
            GroupLayout { flow_ids: vec!["a".into()], all_red: DistributionModel::deterministic(6.0f32).unwrap() },
            GroupLayout { flow_ids: vec!["b".into()], all_red: DistributionModel::deterministic(6.0f32).unwrap() },
        ];
        let spec = IntersectionSpec::from_relative_loads(flows, &layout).unwrap();
        let dq = derive_quantities(&spec, Sigma2Convention::Normalized).unwrap();
        assert!((dq.critical_load - 1.0).abs() < 1e-6);
        assert!((dq.delta - 2.0 / 9.0).abs() < 1e-6);
    }

    fn arb_spec() -> impl Strategy<Value = IntersectionSpec<f64>> {
        (1usize..5, prop::collection::vec((0.05f64..1.0, 1.0f64..4.0, 0.0f64..2.0), 2..9))
            .prop_map(|(m, flows)| {
                let m = m.min(flows.len()).max(1);
                let specs = flows
                    .iter()
                    .enumerate()
                    .map(|(i, &(w, b, scv))| FlowSpec {
                        id: i.to_string(),
                        relative_load: w,
                        headway: DistributionModel::new(b, scv).unwrap(),
                        interarrival_scv: 1.0,
                    })
                    .collect();
                let layout = (0..m)
                    .map(|g| GroupLayout {
                        flow_ids: (0..flows.len()).filter(|i| i % m == g).map(|i| i.to_string()).collect(),
                        all_red: DistributionModel::deterministic(1.0 + g as f64).unwrap(),
                    })
                    .collect::<Vec<_>>();
                IntersectionSpec::from_relative_loads(specs, &layout).unwrap()
            })
    }

    proptest! {
        #[test]
        fn loads_sum_to_one_and_l_is_dominant_sum(spec in arb_spec()) {
            let total: f64 = spec.flow_refs().map(|r| spec.flow(r).relative_load).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let l = spec.critical_load();
            let max_sum: f64 = spec.groups().iter()
                .map(|g| g.flows().iter().map(|f| f.relative_load).fold(0.0, f64::max))
                .sum();
            prop_assert!((l - max_sum).abs() < 1e-15);
            prop_assert!(l > 0.0 && l <= 1.0 + 1e-12);
            let singletons = spec.groups().iter().all(|g| g.flows().len() == 1);
            prop_assert_eq!(singletons, (l - 1.0).abs() < 1e-12);
        }

        #[test]
        fn stability_is_monotone(spec in arb_spec(), rho in 0.0f64..5.0, frac in 0.0f64..1.0) {
            if check_stability(&spec, rho).is_stable() {
                prop_assert!(check_stability(&spec, rho * frac).is_stable());
            }
        }

        #[test]
        fn delta_formula_and_permutation_invariance(spec in arb_spec()) {
            let dq = derive_quantities(&spec, Sigma2Convention::Normalized).unwrap();
            let l = spec.critical_load();
            let direct: f64 = spec.groups().iter()
                .map(|g| { let s = g.dominant().relative_load / l; s * (1.0 - s) / 2.0 })
                .sum();
            prop_assert!((dq.delta - direct).abs() < 1e-15);
            let mut groups = spec.groups().to_vec();
            groups.reverse();
            let rotated = IntersectionSpec::new(groups).unwrap();
            let dq2 = derive_quantities(&rotated, Sigma2Convention::Normalized).unwrap();
            prop_assert!((dq.delta - dq2.delta).abs() < 1e-14);
            prop_assert!((dq.sigma2 - dq2.sigma2).abs() < 1e-12 * dq.sigma2.max(1.0));
        }
    }
}
