use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use signal_core::{FittedDistribution, FlowRef, LoadedScenario};

use crate::stats::Reservoir;
use crate::{Counts, Mode, Result, SimConfig, SimError, TracePoint};

const RED_STREAM: u64 = 0xFFFF_FFF0;
const SAMPLE_STREAM: u64 = 0xFFFF_FFF1;

pub(crate) struct FlowInfo {
    pub at: FlowRef,
    pub id: String,
    interarrival: Option<FittedDistribution<f64>>,
    headway: FittedDistribution<f64>,
    mean_headway: f64,
}

pub(crate) struct Layout {
    pub flows: Vec<FlowInfo>,
    /// Flat flow indices per group.
    groups: Vec<Vec<usize>>,
    reds: Vec<FittedDistribution<f64>>,
    zero_red: bool,
    sample_slot: Vec<Option<usize>>,
}

impl Layout {
    pub fn new(scenario: &LoadedScenario<f64>, config: &SimConfig) -> Result<Self> {
        let spec = scenario.spec();
        let mut flows = Vec::with_capacity(spec.flow_count());
        let mut groups = Vec::with_capacity(spec.group_count());
        for (g, grp) in spec.groups().iter().enumerate() {
            let mut idx = Vec::with_capacity(grp.flows().len());
            for (j, f) in grp.flows().iter().enumerate() {
                let at = FlowRef::new(g, j);
                let interarrival = scenario.flow(at).interarrival.map(|d| d.fit());
                idx.push(flows.len());
                flows.push(FlowInfo {
                    at,
                    id: f.id.clone(),
                    interarrival,
                    headway: f.headway.fit(),
                    mean_headway: f.headway.mean(),
                });
            }
            groups.push(idx);
        }
        let reds: Vec<_> = spec.groups().iter().map(|g| g.all_red().fit()).collect();
        let zero_red = spec.total_red_mean() == 0.0;
        if zero_red && flows.iter().all(|f| f.interarrival.is_none()) {
            return Err(SimError::InvalidConfig(
                "no arrivals and no all-red time: the clock cannot advance".into(),
            ));
        }
        let mut sample_slot = vec![None; flows.len()];
        for (slot, at) in config.sample_flows.iter().enumerate() {
            let i = flows
                .iter()
                .position(|f| f.at == *at)
                .ok_or_else(|| SimError::InvalidConfig(format!("no flow {at} to sample")))?;
            sample_slot[i] = Some(slot);
        }
        Ok(Self { flows, groups, reds, zero_red, sample_slot })
    }
}

pub(crate) struct RepOutput {
    pub sum: Vec<f64>,
    pub count: Vec<u64>,
    pub zeros: Vec<u64>,
    pub last: Vec<u64>,
    pub busy_greens: Vec<u64>,
    pub empty_greens: Vec<u64>,
    pub greens: Vec<u64>,
    pub green_time: Vec<f64>,
    pub counts: Counts,
    pub cycles: u64,
    pub measured_cycles: u64,
    pub measured_time: f64,
    pub end_time: f64,
    pub trace: Vec<TracePoint>,
    pub samples: Vec<Vec<f64>>,
}

fn stream(seed: u64, rep: u32, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(rep) << 32) | id);
    rng
}

struct Lane<'a> {
    info: &'a FlowInfo,
    queue: VecDeque<f64>,
    next_arrival: f64,
    arrivals_rng: ChaCha8Rng,
    headway_rng: ChaCha8Rng,
    sum: f64,
    count: u64,
    zeros: u64,
    arrivals: u64,
    departures: u64,
    passes: u64,
    reservoir: Option<Reservoir>,
}

impl<'a> Lane<'a> {
    fn new(info: &'a FlowInfo, seed: u64, rep: u32, index: usize, cap: Option<usize>) -> Self {
        let mut arrivals_rng = stream(seed, rep, 2 * index as u64);
        let next_arrival = match &info.interarrival {
            Some(d) => d.sample(&mut arrivals_rng),
            None => f64::INFINITY,
        };
        Self {
            info,
            queue: VecDeque::new(),
            next_arrival,
            arrivals_rng,
            headway_rng: stream(seed, rep, 2 * index as u64 + 1),
            sum: 0.0,
            count: 0,
            zeros: 0,
            arrivals: 0,
            departures: 0,
            passes: 0,
            reservoir: cap.map(Reservoir::new),
        }
    }

    #[inline]
    fn advance_arrival(&mut self) {
        let d = self.info.interarrival.as_ref().expect("finite arrival implies a law");
        self.next_arrival += d.sample(&mut self.arrivals_rng);
        self.arrivals += 1;
    }

    #[inline]
    fn pull(&mut self, until: f64) {
        while self.next_arrival <= until {
            self.queue.push_back(self.next_arrival);
            self.advance_arrival();
        }
    }

    #[inline]
    fn record(&mut self, arrival: f64, delay: f64, from: f64, sampler: &mut ChaCha8Rng) {
        if arrival >= from {
            self.sum += delay;
            self.count += 1;
            if delay == 0.0 {
                self.zeros += 1;
            }
            if let Some(r) = self.reservoir.as_mut() {
                r.offer(delay, sampler);
            }
        }
    }

    /// Serves the queue from `start` until empty; returns the empty time and
    /// the last departure, if any.
    fn drain(&mut self, start: f64, from: f64, sampler: &mut ChaCha8Rng) -> (f64, Option<f64>) {
        let mut s = start;
        let mut last = None;
        self.pull(s);
        while let Some(a) = self.queue.pop_front() {
            s += self.info.headway.sample(&mut self.headway_rng);
            self.departures += 1;
            self.record(a, s - a, from, sampler);
            last = Some(s);
            self.pull(s);
        }
        (s, last)
    }

    /// Arrivals up to `until` cross without stopping.
    fn pass_through(&mut self, until: f64, from: f64, sampler: &mut ChaCha8Rng) {
        while self.next_arrival <= until {
            let a = self.next_arrival;
            self.advance_arrival();
            self.passes += 1;
            self.record(a, 0.0, from, sampler);
        }
    }
}

fn snapshot(layout: &Layout, lanes: &mut [Lane], t: f64) -> TracePoint {
    let mut work = 0.0;
    let mut total = 0u64;
    for idx in &layout.groups {
        for (j, &i) in idx.iter().enumerate() {
            lanes[i].pull(t);
            total += lanes[i].queue.len() as u64;
            if j == 0 {
                work += lanes[i].queue.len() as f64 * layout.flows[i].mean_headway;
            }
        }
    }
    TracePoint { time: t, dominant_workload: work, total_queue: total }
}

pub(crate) fn replicate(layout: &Layout, config: &SimConfig, rep: u32) -> RepOutput {
    let seed = config.root_seed;
    let mut lanes: Vec<Lane> = layout
        .flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cap = layout.sample_slot[i].map(|_| config.sample_cap);
            Lane::new(f, seed, rep, i, cap)
        })
        .collect();
    let mut red_rng = stream(seed, rep, RED_STREAM);
    let mut sampler = stream(seed, rep, SAMPLE_STREAM);
    let groups = layout.groups.len();
    let n = lanes.len();

    let mut last = vec![0u64; n];
    let mut busy_greens = vec![0u64; groups];
    let mut empty_greens = vec![0u64; groups];
    let mut greens = vec![0u64; groups];
    let mut green_time = vec![0.0; groups];
    let mut trace = Vec::new();
    let mut lasts: Vec<Option<f64>> = vec![None; n];

    let mut t = 0.0f64;
    let mut from = f64::INFINITY;
    let mut warm_time = 0.0;
    let mut cycle = 0u64;
    while cycle < config.cycles_per_replication {
        if config.max_time.is_some_and(|m| t >= m) {
            break;
        }
        if cycle == config.warmup_cycles {
            from = t;
            warm_time = t;
        }
        if layout.zero_red && lanes.iter().all(|l| l.queue.is_empty()) {
            let next = lanes.iter().map(|l| l.next_arrival).fold(f64::INFINITY, f64::min);
            t = t.max(next);
        }
        if config.trace {
            trace.push(snapshot(layout, &mut lanes, t));
        }
        let measuring = cycle >= config.warmup_cycles;
        for (g, idx) in layout.groups.iter().enumerate() {
            let start = t;
            let mut end = start;
            for &i in idx {
                let (e, l) = lanes[i].drain(start, from, &mut sampler);
                lasts[i] = l;
                end = end.max(e);
            }
            match config.mode {
                Mode::StayEmpty => {
                    for &i in idx {
                        lanes[i].pass_through(end, from, &mut sampler);
                    }
                }
                Mode::Refill => loop {
                    let mut changed = false;
                    for &i in idx {
                        let lane = &mut lanes[i];
                        if lane.next_arrival <= end {
                            let (e, l) = lane.drain(lane.next_arrival, from, &mut sampler);
                            if l.is_some() {
                                lasts[i] = l;
                            }
                            end = end.max(e);
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                },
            }
            if measuring {
                greens[g] += 1;
                green_time[g] += end - start;
                let mut winner: Option<(usize, f64)> = None;
                for &i in idx {
                    if let Some(l) = lasts[i] {
                        if winner.is_none_or(|(_, w)| l > w) {
                            winner = Some((i, l));
                        }
                    }
                }
                match winner {
                    Some((i, _)) => {
                        last[i] += 1;
                        busy_greens[g] += 1;
                    }
                    None => empty_greens[g] += 1,
                }
            }
            t = end + layout.reds[g].sample(&mut red_rng);
        }
        cycle += 1;
    }

    if config.trace {
        trace.push(snapshot(layout, &mut lanes, t));
    }
    for lane in &mut lanes {
        lane.pull(t);
    }
    let counts = lanes.iter().fold(Counts::default(), |mut c, l| {
        c.arrivals += l.arrivals;
        c.departures += l.departures;
        c.pass_throughs += l.passes;
        c.final_queue += l.queue.len() as u64;
        c
    });
    let mut samples = vec![Vec::new(); config.sample_flows.len()];
    for (i, lane) in lanes.iter_mut().enumerate() {
        if let (Some(slot), Some(r)) = (layout.sample_slot[i], lane.reservoir.take()) {
            samples[slot] = r.items;
        }
    }
    RepOutput {
        sum: lanes.iter().map(|l| l.sum).collect(),
        count: lanes.iter().map(|l| l.count).collect(),
        zeros: lanes.iter().map(|l| l.zeros).collect(),
        last,
        busy_greens,
        empty_greens,
        greens,
        green_time,
        counts,
        cycles: cycle,
        measured_cycles: cycle.saturating_sub(config.warmup_cycles),
        measured_time: if cycle > config.warmup_cycles { t - warm_time } else { 0.0 },
        end_time: t,
        trace,
        samples,
    }
}
