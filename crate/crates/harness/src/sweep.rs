//! Load sweeps comparing the interpolation approximation to simulation.

use std::fmt::Write as _;

use signal_core::{
    interpolation_constants, scale, ApproxOptions, FlowRef, IntersectionSpec, InterpolationConstants,
};
use signal_sim::{run, Mode, SimConfig};

use crate::{HarnessError, Result};

pub const SWEEP_HEADER: &str = "flow_id,group,j,L_rho,rho,sim_mean,sim_ci,approx_mean,order,rel_err_pct";

/// Relative CI half width above which a grid point is flagged noisy.
pub const NOISE_FLOOR: f64 = 0.02;

/// `L rho` in {0.001, 0.1, 0.2, ..., 0.9, 0.99}.
pub fn default_grid() -> Vec<f64> {
    let mut g = vec![0.001];
    g.extend((1..=9).map(|k| k as f64 / 10.0));
    g.push(0.99);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Values of `L rho`, each in (0, 1).
    pub grid: Vec<f64>,
    pub sim: SimConfig,
    pub approx: ApproxOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self::new(SimConfig::default())
    }
}

impl SweepSpec {
    /// Default grid; the approximation follows the simulated mode.
    pub fn new(sim: SimConfig) -> Self {
        let approx = ApproxOptions { stay_empty: sim.mode == Mode::StayEmpty, ..ApproxOptions::new() };
        Self { grid: default_grid(), sim, approx }
    }

    pub fn grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub flow_id: String,
    /// One-based group number.
    pub group: usize,
    /// One-based rank within the group.
    pub j: usize,
    pub l_rho: f64,
    pub rho: f64,
    pub sim_mean: f64,
    pub sim_ci: f64,
    pub approx_mean: f64,
    pub order: u8,
    pub rel_err_pct: f64,
}

impl SweepRow {
    pub fn noisy(&self) -> bool {
        !(self.sim_ci <= NOISE_FLOOR * self.sim_mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstError {
    pub error_pct: f64,
    pub flow_id: String,
    pub l_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    /// Largest relative error over all flows and loads.
    pub qm1: WorstError,
    /// Arrival-rate weighted mean of the per-flow mean errors, percent.
    pub qm2: f64,
    /// Mean relative error per flow over the grid, percent.
    pub flow_errors: Vec<(String, f64)>,
    /// Interpolation order per flow.
    pub orders: Vec<(String, u8)>,
    /// Rows whose simulated CI exceeds the noise floor.
    pub noisy_points: usize,
}

impl QualityReport {
    pub fn order_string(&self) -> String {
        self.orders.iter().map(|(_, o)| o.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn summary(&self) -> String {
        format!(
            "QM1 {:.2}% (flow {}, L_rho {}) QM2 {:.2}% orders {} noisy points {}",
            self.qm1.error_pct,
            self.qm1.flow_id,
            self.qm1.l_rho,
            self.qm2,
            self.order_string(),
            self.noisy_points
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub report: QualityReport,
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.flow_id, r.group, r.j, r.l_rho, r.rho, r.sim_mean, r.sim_ci, r.approx_mean, r.order, r.rel_err_pct
        );
    }
    out
}

impl SweepOutcome {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(HarnessError::Config("empty load grid".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(HarnessError::Config(format!("grid value L_rho = {v} is outside (0, 1)")));
    }
    Ok(())
}

/// Per-flow rows for one grid point.
fn grid_point(
    spec: &IntersectionSpec<f64>,
    l_rho: f64,
    sim: &SimConfig,
    constants: &[(FlowRef, InterpolationConstants<f64>)],
) -> Result<Vec<SweepRow>> {
    let rho = l_rho / spec.critical_load();
    let result = run(&scale(spec, rho)?, sim)?;
    Ok(constants
        .iter()
        .map(|(at, k)| {
            let stats = result.flow(*at).expect("simulator reports every flow");
            let approx_mean = k.evaluate(rho);
            SweepRow {
                flow_id: stats.id.clone(),
                group: at.group + 1,
                j: at.index + 1,
                l_rho,
                rho,
                sim_mean: stats.mean_delay,
                sim_ci: stats.ci_half_width,
                approx_mean,
                order: k.order.degree(),
                rel_err_pct: (approx_mean - stats.mean_delay).abs() / stats.mean_delay * 100.0,
            }
        })
        .collect())
}

pub fn sweep(spec: &IntersectionSpec<f64>, sweep_spec: &SweepSpec) -> Result<SweepOutcome> {
    check_grid(&sweep_spec.grid)?;
    let constants = spec
        .flow_refs()
        .map(|at| Ok((at, interpolation_constants(spec, at, &sweep_spec.approx)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(sweep_spec.grid.len() * constants.len());
    for &l_rho in &sweep_spec.grid {
        log::info!("sweep point L_rho = {l_rho}");
        rows.extend(grid_point(spec, l_rho, &sweep_spec.sim, &constants)?);
    }
    let report = quality(spec, &rows)?;
    Ok(SweepOutcome { rows, report })
}

/// QM1 and QM2 recomputed from a sweep table.
pub fn quality(spec: &IntersectionSpec<f64>, rows: &[SweepRow]) -> Result<QualityReport> {
    let worst = rows
        .iter()
        .filter(|r| r.rel_err_pct.is_finite())
        .max_by(|a, b| a.rel_err_pct.total_cmp(&b.rel_err_pct))
        .ok_or_else(|| HarnessError::Config("no finite errors in the sweep table".into()))?;
    let mut flow_errors = Vec::new();
    let mut orders = Vec::new();
    let mut weighted = 0.0;
    let mut total_rate = 0.0;
    for at in spec.flow_refs() {
        let flow = spec.flow(at);
        let errs: Vec<f64> = rows.iter().filter(|r| r.flow_id == flow.id).map(|r| r.rel_err_pct).collect();
        if errs.is_empty() {
            continue;
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let rate = flow.unscaled_rate();
        weighted += rate * mean;
        total_rate += rate;
        flow_errors.push((flow.id.clone(), mean));
        if let Some(r) = rows.iter().find(|r| r.flow_id == flow.id) {
            orders.push((flow.id.clone(), r.order));
        }
    }
    // report flows in numeric id order when ids are numbers
    let key = |id: &str| id.parse::<u64>().map_or((1, 0, id.to_string()), |n| (0, n, String::new()));
    flow_errors.sort_by_key(|(id, _)| key(id));
    orders.sort_by_key(|(id, _)| key(id));
    Ok(QualityReport {
        qm1: WorstError { error_pct: worst.rel_err_pct, flow_id: worst.flow_id.clone(), l_rho: worst.l_rho },
        qm2: weighted / total_rate,
        flow_errors,
        orders,
        noisy_points: rows.iter().filter(|r| r.noisy()).count(),
    })
}
