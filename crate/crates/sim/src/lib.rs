//! Discrete-event simulation of a signalized intersection under
//! vehicle-actuated exhaustive control.
//!
//! Groups receive green in cyclic order. All flows of the green group are
//! served in parallel, one vehicle per flow at a time, each vehicle taking
//! one headway. The green ends when every flow of the group is empty and is
//! followed by the group's all-red time. In [`Mode::StayEmpty`] a flow that
//! has emptied stays empty for the rest of the green: later arrivals pass
//! the stop line without delay. In [`Mode::Refill`] they queue and are
//! served, which can extend the green.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod engine;
pub mod stats;

use signal_core::{FlowRef, LoadedScenario, ModelError};

pub use signal_core::Mode;
use thiserror::Error;

pub use stats::{t_interval, EmpiricalCdf};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("L*rho = {saturation:.4} >= 1 needs a finite time horizon")]
    Unstable { saturation: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Cycles per replication, warm-up included.
    pub cycles_per_replication: u64,
    pub warmup_cycles: u64,
    pub replications: u32,
    pub root_seed: u64,
    pub mode: Mode,
    /// Stop a replication at the first cycle start at or after this time.
    pub max_time: Option<f64>,
    /// Record a queue trace at every cycle start and at the stop.
    pub trace: bool,
    /// Flows whose individual delays are kept (reservoir subsample).
    pub sample_flows: Vec<FlowRef>,
    /// Reservoir size per flow and replication.
    pub sample_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::with_cycles(100_000, 10)
    }
}

impl SimConfig {
    /// Warm-up defaults to 10% of the cycles, at least 200.
    pub fn with_cycles(cycles: u64, replications: u32) -> Self {
        Self {
            cycles_per_replication: cycles,
            warmup_cycles: default_warmup(cycles),
            replications,
            root_seed: 1,
            mode: Mode::StayEmpty,
            max_time: None,
            trace: false,
            sample_flows: Vec::new(),
            sample_cap: 200_000,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(SimError::InvalidConfig("at least one replication needed".into()));
        }
        if self.warmup_cycles >= self.cycles_per_replication {
            return Err(SimError::InvalidConfig(format!(
                "warm-up ({}) must be shorter than the run ({})",
                self.warmup_cycles, self.cycles_per_replication
            )));
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return Err(SimError::InvalidConfig("max_time must be positive".into()));
            }
        }
        Ok(())
    }
}

pub fn default_warmup(cycles: u64) -> u64 {
    (cycles / 10).max(200).min(cycles.saturating_sub(1))
}

/// Per-flow outcome pooled over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow: FlowRef,
    pub id: String,
    /// Pooled mean over all recorded vehicles.
    pub mean_delay: f64,
    /// 95% half width from replication means.
    pub ci_half_width: f64,
    pub samples: u64,
    pub zero_delay: u64,
    /// Fraction of greens with departures whose last departure was this flow.
    pub p_last_departure: f64,
    pub replication_means: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub arrivals: u64,
    pub departures: u64,
    pub pass_throughs: u64,
    pub final_queue: u64,
}

impl Counts {
    pub fn balanced(&self) -> bool {
        self.arrivals == self.departures + self.pass_throughs + self.final_queue
    }

    fn add(&mut self, o: &Counts) {
        self.arrivals += o.arrivals;
        self.departures += o.departures;
        self.pass_throughs += o.pass_throughs;
        self.final_queue += o.final_queue;
    }
}

/// Queue state at a cycle start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time: f64,
    /// `sum_g Q_{g,1} E[B_{g,1}]`.
    pub dominant_workload: f64,
    pub total_queue: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub counts: Counts,
    pub cycles: u64,
    pub end_time: f64,
    /// Mean cycle length after warm-up.
    pub mean_cycle: f64,
    pub trace: Vec<TracePoint>,
    /// Greens with at least one departure, per group, after warm-up.
    pub busy_greens: Vec<u64>,
    /// Zero-length greens per group after warm-up.
    pub empty_greens: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub mode: Mode,
    pub rho: f64,
    pub saturation: f64,
    pub flows: Vec<FlowStats>,
    pub mean_cycle: f64,
    pub mean_green: Vec<f64>,
    pub counts: Counts,
    pub replications: Vec<ReplicationSummary>,
    /// Subsampled raw delays per requested flow, all replications merged.
    pub delay_samples: Vec<(FlowRef, Vec<f64>)>,
}

impl SimResult {
    pub fn flow(&self, at: FlowRef) -> Option<&FlowStats> {
        self.flows.iter().find(|f| f.flow == at)
    }

    pub fn by_id(&self, id: &str) -> Option<&FlowStats> {
        self.flows.iter().find(|f| f.id == id)
    }

    /// CSV with columns
    /// `flow_id,mode,rho,L_rho,mean_delay,ci_half_width,p_last_departure,samples`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "flow_id,mode,rho,L_rho,mean_delay,ci_half_width,p_last_departure,samples\n",
        );
        for f in &self.flows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                f.id,
                self.mode.label(),
                self.rho,
                self.saturation,
                f.mean_delay,
                f.ci_half_width,
                f.p_last_departure,
                f.samples
            ));
        }
        out
    }
}

/// Runs all replications sequentially.
pub fn run(scenario: &LoadedScenario<f64>, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let saturation = scenario.saturation();
    if saturation >= 1.0 && config.max_time.is_none() {
        return Err(SimError::Unstable { saturation });
    }
    let layout = engine::Layout::new(scenario, config)?;
    let reps: Vec<engine::RepOutput> = (0..config.replications)
        .map(|r| engine::replicate(&layout, config, r))
        .collect();
    Ok(merge(scenario, config, &layout, reps))
}

fn merge(
    scenario: &LoadedScenario<f64>,
    config: &SimConfig,
    layout: &engine::Layout,
    reps: Vec<engine::RepOutput>,
) -> SimResult {
    let spec = scenario.spec();
    let n = layout.flows.len();
    let groups = spec.group_count();
    let mut sum = vec![0.0; n];
    let mut count = vec![0u64; n];
    let mut zeros = vec![0u64; n];
    let mut last = vec![0u64; n];
    let mut rep_means: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut busy = vec![0u64; groups];
    let mut green_time = vec![0.0; groups];
    let mut greens = vec![0u64; groups];
    let mut counts = Counts::default();
    let mut cycle_time = 0.0;
    let mut cycles = 0u64;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); config.sample_flows.len()];
    let mut summaries = Vec::with_capacity(reps.len());

    for rep in reps {
        for i in 0..n {
            sum[i] += rep.sum[i];
            count[i] += rep.count[i];
            zeros[i] += rep.zeros[i];
            last[i] += rep.last[i];
            if rep.count[i] > 0 {
                rep_means[i].push(rep.sum[i] / rep.count[i] as f64);
            }
        }
        for g in 0..groups {
            busy[g] += rep.busy_greens[g];
            green_time[g] += rep.green_time[g];
            greens[g] += rep.greens[g];
        }
        counts.add(&rep.counts);
        cycle_time += rep.measured_time;
        cycles += rep.measured_cycles;
        for (dst, src) in samples.iter_mut().zip(rep.samples) {
            dst.extend(src);
        }
        summaries.push(ReplicationSummary {
            counts: rep.counts,
            cycles: rep.cycles,
            end_time: rep.end_time,
            mean_cycle: rep.measured_time / rep.measured_cycles.max(1) as f64,
            trace: rep.trace,
            busy_greens: rep.busy_greens,
            empty_greens: rep.empty_greens,
        });
    }

    let flows = layout
        .flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (_, half) = stats::t_interval(&rep_means[i]);
            FlowStats {
                flow: f.at,
                id: f.id.clone(),
                mean_delay: if count[i] > 0 { sum[i] / count[i] as f64 } else { f64::NAN },
                ci_half_width: half,
                samples: count[i],
                zero_delay: zeros[i],
                p_last_departure: if busy[f.at.group] > 0 {
                    last[i] as f64 / busy[f.at.group] as f64
                } else {
                    f64::NAN
                },
                replication_means: rep_means[i].clone(),
            }
        })
        .collect();

    SimResult {
        mode: config.mode,
        rho: scenario.rho(),
        saturation: scenario.saturation(),
        flows,
        mean_cycle: cycle_time / cycles.max(1) as f64,
        mean_green: green_time
            .iter()
            .zip(&greens)
            .map(|(t, &k)| t / k.max(1) as f64)
            .collect(),
        counts,
        replications: summaries,
        delay_samples: config.sample_flows.iter().copied().zip(samples).collect(),
    }
}

/// Empirical distribution of the scaled delay `(1 - L rho) W` of one flow.
pub fn collect_delay_cdf(
    scenario: &LoadedScenario<f64>,
    config: &SimConfig,
    flow: FlowRef,
) -> Result<EmpiricalCdf> {
    let mut cfg = config.clone();
    cfg.sample_flows = vec![flow];
    let res = run(scenario, &cfg)?;
    let factor = 1.0 - scenario.saturation();
    let raw = res.delay_samples.into_iter().next().map(|(_, v)| v).unwrap_or_default();
    Ok(EmpiricalCdf::new(raw.into_iter().map(|d| d * factor).collect()))
}
