//! Per-flow tables for the analytic, oracle and fluid commands.

use std::fmt::Write as _;

use signal_core::{
    check_stability, derive_quantities, dominant_trajectories, fluid_trajectory, interpolation_constants,
    lt_mean_poisson, scale, ApproxOptions, IntersectionSpec, ModelError, Stability,
};
use signal_oracle::{CtmcSpec, Oracle};
use signal_sim::Mode;

use crate::Result;

pub const ANALYSIS_HEADER: &str =
    "flow_id,group,j,L_rho,rho,lt_intercept,lt_slope,lt_value,ht_scaled_mean,order,k0,k1,k2,approx_mean";

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub flow_id: String,
    pub group: usize,
    pub j: usize,
    pub l_rho: f64,
    pub rho: f64,
    pub lt_intercept: f64,
    pub lt_slope: f64,
    pub lt_value: f64,
    pub ht_scaled_mean: f64,
    pub order: u8,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub approx_mean: f64,
}

/// Light- and heavy-traffic quantities and the approximation at `L rho`.
pub fn analyze(spec: &IntersectionSpec<f64>, l_rho: f64, options: &ApproxOptions) -> Result<Vec<AnalysisRow>> {
    let rho = l_rho / spec.critical_load();
    let verdict = check_stability(spec, rho);
    if verdict.stability != Stability::Stable {
        return Err(ModelError::UnstableLoad { critical_load: l_rho, margin: verdict.margin }.into());
    }
    scale(spec, rho)?;
    spec.flow_refs()
        .map(|at| {
            let k = interpolation_constants(spec, at, options)?;
            Ok(AnalysisRow {
                flow_id: spec.flow(at).id.clone(),
                group: at.group + 1,
                j: at.index + 1,
                l_rho,
                rho,
                lt_intercept: k.lt.intercept,
                lt_slope: k.lt.slope,
                lt_value: k.lt.at(rho),
                ht_scaled_mean: k.ht_mean,
                order: k.order.degree(),
                k0: k.k0,
                k1: k.k1,
                k2: k.k2,
                approx_mean: k.evaluate(rho),
            })
        })
        .collect()
}

pub fn analysis_csv(rows: &[AnalysisRow]) -> String {
    let mut out = format!("{ANALYSIS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.flow_id,
            r.group,
            r.j,
            r.l_rho,
            r.rho,
            r.lt_intercept,
            r.lt_slope,
            r.lt_value,
            r.ht_scaled_mean,
            r.order,
            r.k0,
            r.k1,
            r.k2,
            r.approx_mean
        );
    }
    out
}

pub const ORACLE_HEADER: &str = "flow_id,group,j,L_rho,rho,mode,cap,exact_mean,lt_mean,loss_probability";

/// Exact mean delays next to the Poisson light-traffic value.
pub fn oracle_csv(spec: &IntersectionSpec<f64>, rho: f64, mode: Mode, cap: usize) -> Result<String> {
    let scenario = scale(spec, rho)?;
    let oracle = Oracle::new(CtmcSpec::new(scenario.clone(), mode)?.with_cap(cap)?)?;
    let mut out = format!("{ORACLE_HEADER}\n");
    for (at, w) in oracle.mean_delays()? {
        let lt = lt_mean_poisson(&scenario, at)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            spec.flow(at).id,
            at.group + 1,
            at.index + 1,
            rho * spec.critical_load(),
            rho,
            mode.label(),
            cap,
            w,
            lt,
            oracle.loss_probability(at)?
        );
    }
    Ok(out)
}

/// Fluid workload breakpoints over one cycle: one flow, or every dominant
/// flow on a common clock.
pub fn fluid_csv(spec: &IntersectionSpec<f64>, flow: Option<&str>, cycle: f64) -> Result<String> {
    let dq = derive_quantities(spec, Default::default())?;
    match flow {
        Some(id) => {
            let at = spec
                .find(id)
                .ok_or_else(|| crate::HarnessError::Config(format!("no flow {id}")))?;
            Ok(fluid_trajectory(&dq, at, cycle)?.to_csv())
        }
        None => {
            let mut out = String::from("flow_id,time,workload\n");
            for (g, traj) in dominant_trajectories(&dq, cycle)?.iter().enumerate() {
                let id = &spec.groups()[g].dominant().id;
                for (t, w) in &traj.points {
                    let _ = writeln!(out, "{id},{t},{w}");
                }
            }
            Ok(out)
        }
    }
}
