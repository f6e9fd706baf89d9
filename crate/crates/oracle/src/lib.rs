//! Exact mean delays for small intersections whose headways, interarrival
//! times and all-red times are all exponential.
//!
//! The intersection is a continuous-time Markov chain on queue lengths,
//! truncated at `cap` vehicles per flow, plus the signal phase. Arrivals to
//! a full queue are lost. A green ends the instant its last queue empties,
//! so that event is folded into the final departure.
//!
//! A delay is obtained by conditioning on the state an arrival sees and
//! solving for the expected absorption time of a tagged vehicle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use signal_core::{FlowRef, LoadedScenario, Mode, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("the Markov oracle needs exponential laws: {0}")]
    NotExponential(String),
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
    #[error("state space of {states} states exceeds the limit of {limit}")]
    TooLarge { states: u128, limit: usize },
    #[error("no unique stationary distribution: {0}")]
    NoStationary(String),
    #[error("sparse solve failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = OracleError> = std::result::Result<T, E>;

pub const DEFAULT_CAP: usize = 6;
pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

/// A loaded all-exponential intersection with a truncation level.
#[derive(Debug, Clone)]
pub struct CtmcSpec {
    scenario: LoadedScenario<f64>,
    cap: usize,
    mode: Mode,
    state_limit: usize,
}

fn exponential(what: &str, mean: f64, scv: f64) -> Result<()> {
    if mean > 0.0 && scv != 1.0 {
        return Err(OracleError::NotExponential(format!("{what} has scv {scv}")));
    }
    Ok(())
}

impl CtmcSpec {
    /// All-red times may also be zero.
    pub fn new(scenario: LoadedScenario<f64>, mode: Mode) -> Result<Self> {
        if !(scenario.rho() > 0.0) {
            return Err(OracleError::InvalidInput("load must be positive".into()));
        }
        let spec = scenario.spec();
        for (g, grp) in spec.groups().iter().enumerate() {
            let red = grp.all_red();
            exponential(&format!("all-red of group {}", g + 1), red.mean(), red.scv())?;
            for f in grp.flows() {
                exponential(&format!("headway of flow {}", f.id), f.headway.mean(), f.headway.scv())?;
                if f.headway.mean() <= 0.0 {
                    return Err(OracleError::InvalidInput(format!("flow {} has zero headway", f.id)));
                }
                exponential(&format!("interarrival of flow {}", f.id), 1.0, f.interarrival_scv)?;
            }
        }
        Ok(Self { scenario, cap: DEFAULT_CAP, mode, state_limit: DEFAULT_STATE_LIMIT })
    }

    pub fn with_cap(mut self, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(OracleError::InvalidInput("cap must be at least 1".into()));
        }
        self.cap = cap;
        Ok(self)
    }

    pub fn with_state_limit(mut self, limit: usize) -> Self {
        self.state_limit = limit;
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn scenario(&self) -> &LoadedScenario<f64> {
        &self.scenario
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Green(usize),
    Red(usize),
    /// Empty system with no all-red time anywhere.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CtmcState {
    /// Queue lengths in flat flow order (group by group, dominant first).
    pub queues: Vec<usize>,
    pub phase: Phase,
}

enum Target {
    To(Vec<usize>, Phase),
    Absorb,
}

#[derive(Debug, Clone)]
struct Layout {
    flows: Vec<FlowRef>,
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    red_rate: Vec<Option<f64>>,
    cap: usize,
    mode: Mode,
}

impl Layout {
    fn new(spec: &CtmcSpec) -> Self {
        let sc = &spec.scenario;
        let mut flows = Vec::new();
        let mut group_of = Vec::new();
        let mut members = Vec::new();
        let mut lambda = Vec::new();
        let mut mu = Vec::new();
        for (g, grp) in sc.spec().groups().iter().enumerate() {
            let mut m = Vec::new();
            for (j, f) in grp.flows().iter().enumerate() {
                let at = FlowRef::new(g, j);
                m.push(flows.len());
                flows.push(at);
                group_of.push(g);
                lambda.push(sc.flow(at).arrival_rate);
                mu.push(1.0 / f.headway.mean());
            }
            members.push(m);
        }
        let red_rate = sc
            .spec()
            .groups()
            .iter()
            .map(|g| {
                let m = g.all_red().mean();
                (m > 0.0).then(|| 1.0 / m)
            })
            .collect();
        Self { flows, group_of, members, lambda, mu, red_rate, cap: spec.cap, mode: spec.mode }
    }

    fn groups(&self) -> usize {
        self.members.len()
    }

    fn busy(&self, g: usize, n: &[usize]) -> bool {
        self.members[g].iter().any(|&f| n[f] > 0)
    }

    fn leave_green(&self, g: usize, n: &[usize]) -> Phase {
        let m = self.groups();
        let mut h = g;
        for _ in 0..m {
            if self.red_rate[h].is_some() {
                return Phase::Red(h);
            }
            h = (h + 1) % m;
            if self.busy(h, n) {
                return Phase::Green(h);
            }
        }
        Phase::Idle
    }

    fn end_red(&self, g: usize, n: &[usize]) -> Phase {
        let h = (g + 1) % self.groups();
        if self.busy(h, n) {
            Phase::Green(h)
        } else {
            self.leave_green(h, n)
        }
    }

    fn passes(&self, f: usize, n: &[usize], phase: Phase) -> bool {
        self.mode == Mode::StayEmpty && phase == Phase::Green(self.group_of[f]) && n[f] == 0
    }

    /// Where an accepted flow-`f` arrival takes the chain.
    fn arrive(&self, f: usize, n: &[usize], phase: Phase) -> (Vec<usize>, Phase) {
        let mut next = n.to_vec();
        next[f] += 1;
        let phase = if phase == Phase::Idle { Phase::Green(self.group_of[f]) } else { phase };
        (next, phase)
    }

    /// Outgoing transitions. With a tagged flow, its arrivals are ignored and
    /// its front-vehicle departure from queue length 1 absorbs.
    fn transitions(&self, n: &[usize], phase: Phase, tagged: Option<usize>, out: &mut Vec<(Target, f64)>) {
        out.clear();
        for f in 0..n.len() {
            if Some(f) == tagged || self.lambda[f] == 0.0 || n[f] >= self.cap || self.passes(f, n, phase) {
                continue;
            }
            let (next, p) = self.arrive(f, n, phase);
            out.push((Target::To(next, p), self.lambda[f]));
        }
        match phase {
            Phase::Green(g) => {
                for &f in &self.members[g] {
                    if n[f] == 0 {
                        continue;
                    }
                    if Some(f) == tagged && n[f] == 1 {
                        out.push((Target::Absorb, self.mu[f]));
                        continue;
                    }
                    let mut next = n.to_vec();
                    next[f] -= 1;
                    let p = if self.busy(g, &next) { Phase::Green(g) } else { self.leave_green(g, &next) };
                    out.push((Target::To(next, p), self.mu[f]));
                }
            }
            Phase::Red(g) => {
                let rate = self.red_rate[g].expect("red states exist only for positive reds");
                out.push((Target::To(n.to_vec(), self.end_red(g, n)), rate));
            }
            Phase::Idle => {}
        }
    }
}

/// Enumerated states of a chain with lookup.
#[derive(Debug, Clone)]
struct Space {
    states: Vec<CtmcState>,
    index: HashMap<CtmcState, usize>,
}

impl Space {
    fn enumerate(layout: &Layout, tagged: Option<usize>, limit: usize) -> Result<Self> {
        let flows = layout.flows.len();
        let m = layout.groups();
        let per = (layout.cap + 1) as u128;
        let bound = per
            .checked_pow(flows as u32)
            .and_then(|q| q.checked_mul(2 * m as u128 + 1))
            .unwrap_or(u128::MAX);
        if bound > limit as u128 {
            return Err(OracleError::TooLarge { states: bound, limit });
        }
        let all_zero_red = layout.red_rate.iter().all(Option::is_none);
        let mut states = Vec::new();
        let mut n = vec![0usize; flows];
        if let Some(t) = tagged {
            n[t] = 1;
        }
        loop {
            for g in 0..m {
                if layout.busy(g, &n) {
                    states.push(CtmcState { queues: n.clone(), phase: Phase::Green(g) });
                }
            }
            for g in 0..m {
                if layout.red_rate[g].is_some() {
                    states.push(CtmcState { queues: n.clone(), phase: Phase::Red(g) });
                }
            }
            if all_zero_red && n.iter().all(|&q| q == 0) {
                states.push(CtmcState { queues: n.clone(), phase: Phase::Idle });
            }
            // odometer step
            let mut k = 0;
            loop {
                if k == flows {
                    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
                    return Ok(Self { states, index });
                }
                if n[k] < layout.cap {
                    n[k] += 1;
                    break;
                }
                n[k] = if Some(k) == tagged { 1 } else { 0 };
                k += 1;
            }
        }
    }

    fn find(&self, queues: Vec<usize>, phase: Phase) -> usize {
        self.index[&CtmcState { queues, phase }]
    }
}

fn sparse(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<SparseColMat<usize, f64>> {
    entries.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut merged: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        match merged.last_mut() {
            Some(t) if t.row == r && t.col == c => t.val += v,
            _ => merged.push(Triplet::new(r, c, v)),
        }
    }
    SparseColMat::try_new_from_triplets(n, n, &merged).map_err(|e| OracleError::Solver(format!("{e:?}")))
}

/// Rate matrix of the intersection chain.
#[derive(Debug, Clone)]
pub struct Generator {
    layout: Layout,
    space: Space,
    /// Off-diagonal rates per row, duplicates merged.
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

pub fn build_generator(spec: &CtmcSpec) -> Result<Generator> {
    let layout = Layout::new(spec);
    let space = Space::enumerate(&layout, None, spec.state_limit)?;
    let mut rows = Vec::with_capacity(space.states.len());
    let mut diagonal = Vec::with_capacity(space.states.len());
    let mut buf = Vec::new();
    for (row_index, s) in space.states.iter().enumerate() {
        layout.transitions(&s.queues, s.phase, None, &mut buf);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(buf.len());
        for (target, rate) in buf.drain(..) {
            let Target::To(q, p) = target else { unreachable!("untagged chain never absorbs") };
            let j = space.find(q, p);
            if j == row_index {
                continue;
            }
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some((_, r)) => *r += rate,
                None => row.push((j, rate)),
            }
        }
        let out: f64 = row.iter().map(|&(_, r)| r).sum();
        diagonal.push(-out);
        rows.push(row);
    }
    Ok(Generator { layout, space, rows, diagonal })
}

impl Generator {
    pub fn len(&self) -> usize {
        self.space.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &CtmcState {
        &self.space.states[i]
    }

    pub fn index_of(&self, state: &CtmcState) -> Option<usize> {
        self.space.index.get(state).copied()
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum::<f64>() + self.diagonal[i]
    }

    pub fn flows(&self) -> &[FlowRef] {
        &self.layout.flows
    }

    pub fn to_sparse(&self) -> Result<SparseColMat<usize, f64>> {
        sparse(self.len(), self.entries().collect())
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(i, row)| {
            row.iter().map(move |&(j, r)| (i, j, r)).chain(std::iter::once((i, i, self.diagonal[i])))
        })
    }
}

/// Stationary distribution with its `max |pi Q|` residual.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub pi: Vec<f64>,
    pub residual: f64,
}

pub fn stationary(generator: &Generator) -> Result<Stationary> {
    let n = generator.len();
    if n == 0 {
        return Err(OracleError::NoStationary("empty state space".into()));
    }
    // Solve Q^T pi = 0 with the first equation replaced by sum(pi) = 1,
    // i.e. column 0 of Q replaced by ones.
    let mut entries: Vec<_> = generator.entries().filter(|&(_, c, _)| c != 0).collect();
    entries.extend((0..n).map(|i| (i, 0, 1.0)));
    let a = sparse(n, entries)?;
    let lu = a.sp_lu().map_err(|e| OracleError::NoStationary(format!("{e:?}")))?;
    let mut x = Mat::<f64>::zeros(n, 1);
    x[(0, 0)] = 1.0;
    lu.solve_transpose_in_place(x.as_mut());
    let mut pi: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if pi.iter().any(|p| !p.is_finite() || *p < -1e-9) {
        return Err(OracleError::NoStationary("solution is not a probability vector".into()));
    }
    for p in &mut pi {
        *p = p.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    let mut flux = vec![0.0; n];
    for (i, j, r) in generator.entries() {
        flux[j] += pi[i] * r;
    }
    let residual = flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > 1e-10 {
        return Err(OracleError::NoStationary(format!("residual {residual:e}")));
    }
    Ok(Stationary { pi, residual })
}

/// Generator plus stationary law, reused across flows.
#[derive(Debug, Clone)]
pub struct Oracle {
    spec: CtmcSpec,
    generator: Generator,
    stationary: Stationary,
}

impl Oracle {
    pub fn new(spec: CtmcSpec) -> Result<Self> {
        let generator = build_generator(&spec)?;
        let stationary = stationary(&generator)?;
        Ok(Self { spec, generator, stationary })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn stationary(&self) -> &Stationary {
        &self.stationary
    }

    /// Probability that at least one queue is at the cap.
    pub fn mass_at_cap(&self) -> f64 {
        let cap = self.spec.cap;
        self.generator
            .space
            .states
            .iter()
            .zip(&self.stationary.pi)
            .filter(|(s, _)| s.queues.contains(&cap))
            .map(|(_, p)| p)
            .sum()
    }

    /// Probability that a flow-`at` arrival finds its queue full.
    pub fn loss_probability(&self, at: FlowRef) -> Result<f64> {
        let f = self.flat(at)?;
        let cap = self.spec.cap;
        Ok(self
            .generator
            .space
            .states
            .iter()
            .zip(&self.stationary.pi)
            .filter(|(s, _)| s.queues[f] == cap)
            .map(|(_, p)| p)
            .sum())
    }

    fn flat(&self, at: FlowRef) -> Result<usize> {
        self.generator
            .layout
            .flows
            .iter()
            .position(|&r| r == at)
            .ok_or_else(|| OracleError::InvalidInput(format!("no flow {at}")))
    }

    /// Mean delay, arrival to departure, of accepted flow-`at` vehicles.
    pub fn mean_delay(&self, at: FlowRef) -> Result<f64> {
        let f = self.flat(at)?;
        let layout = &self.generator.layout;
        let space = Space::enumerate(layout, Some(f), self.spec.state_limit)?;
        let n = space.states.len();
        let mut entries = Vec::new();
        let mut buf = Vec::new();
        for (i, s) in space.states.iter().enumerate() {
            layout.transitions(&s.queues, s.phase, Some(f), &mut buf);
            let mut out = 0.0;
            for (target, rate) in buf.drain(..) {
                out += rate;
                if let Target::To(q, p) = target {
                    entries.push((i, space.find(q, p), -rate));
                }
            }
            entries.push((i, i, out));
        }
        let lu = sparse(n, entries)?.sp_lu().map_err(|e| OracleError::Solver(format!("{e:?}")))?;
        let mut t = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
        lu.solve_in_place(t.as_mut());

        let mut weight = 0.0;
        let mut total = 0.0;
        for (s, &p) in self.generator.space.states.iter().zip(&self.stationary.pi) {
            if p == 0.0 || s.queues[f] >= self.spec.cap {
                continue;
            }
            weight += p;
            if layout.passes(f, &s.queues, s.phase) {
                continue;
            }
            let (q, phase) = layout.arrive(f, &s.queues, s.phase);
            total += p * t[(space.find(q, phase), 0)];
        }
        if !total.is_finite() {
            return Err(OracleError::Solver("absorption times are not finite".into()));
        }
        Ok(total / weight)
    }

    pub fn mean_delays(&self) -> Result<Vec<(FlowRef, f64)>> {
        self.generator.layout.flows.iter().map(|&at| Ok((at, self.mean_delay(at)?))).collect()
    }
}

/// One-shot mean delay of a flow.
pub fn mean_delay_exact(spec: &CtmcSpec, at: FlowRef) -> Result<f64> {
    Oracle::new(spec.clone())?.mean_delay(at)
}
