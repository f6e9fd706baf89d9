//! Deterministic fluid model of a saturated intersection and the drain-time
//! recursion used for stability arguments.
//!
//! In the fluid scaling a flow `{g,j}` receives work at rate
//! `r_j = rho_hat_{g,j} / L` and is served at unit rate during its green. The
//! cycle length `c` is a free scale parameter.

use std::fmt::Write as _;

use crate::error::{ModelError, Result};
use crate::model::{DerivedQuantities, FlowRef, LoadedScenario};
use crate::{to_f64, Real};

/// Split of one fluid cycle from the viewpoint of a single flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleParts<T> {
    /// Green time during which the flow is non-empty.
    pub busy: T,
    /// Green time after the flow emptied.
    pub idle: T,
    /// Red time (other groups' greens).
    pub red: T,
    pub cycle: T,
}

fn shares<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef) -> Result<(T, T)> {
    let load = dq
        .relative_loads
        .get(at.group)
        .and_then(|g| g.get(at.index))
        .copied()
        .ok_or_else(|| ModelError::InvalidInput(format!("no flow {at}")))?;
    let own = load / dq.critical_load;
    if !(own < T::one()) {
        return Err(ModelError::SaturatedFlow {
            flow: at.to_string(),
            share: to_f64(own),
        });
    }
    Ok((dq.dominant_share[at.group], own))
}

pub fn cycle_parts<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef, cycle: T) -> Result<CycleParts<T>> {
    if !(cycle > T::zero()) || !cycle.is_finite() {
        return Err(ModelError::InvalidInput("cycle length must be positive".into()));
    }
    let (dominant, own) = shares(dq, at)?;
    let one = T::one();
    let red = (one - dominant) * cycle;
    let busy = if at.is_dominant() {
        dominant * cycle
    } else {
        own * (one - dominant) / (one - own) * cycle
    };
    let idle = if at.is_dominant() {
        T::zero()
    } else {
        (cycle - red - busy).max(T::zero())
    };
    Ok(CycleParts { busy, idle, red, cycle })
}

/// Fluid delay: zero with probability `atom`, else uniform on `[0, span]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidDelayLaw<T> {
    pub atom: T,
    pub span: T,
    /// `rho_hat_{g,j} / L`.
    pub inflow: T,
    parts: CycleParts<T>,
}

/// One uniform component of the fluid delay law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPiece<T> {
    pub probability: T,
    pub low: T,
    pub high: T,
}

impl<T: Real> UniformPiece<T> {
    fn cdf(&self, x: T) -> T {
        if x < self.low {
            T::zero()
        } else if x >= self.high || self.high <= self.low {
            self.probability
        } else {
            self.probability * (x - self.low) / (self.high - self.low)
        }
    }
}

impl<T: Real> FluidDelayLaw<T> {
    pub fn parts(&self) -> CycleParts<T> {
        self.parts
    }

    pub fn mean(&self) -> T {
        (T::one() - self.atom) * self.span / (T::one() + T::one())
    }

    pub fn cdf(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        let spread = T::one() - self.atom;
        if x >= self.span {
            T::one()
        } else {
            self.atom + spread * x / self.span
        }
    }

    /// Arrivals during the busy green see the queue drain: uniform on
    /// `[0, r P_R]`. Arrivals during red wait out the red plus the work
    /// that arrived before them: uniform on `[r P_R, P_R]`.
    pub fn pieces(&self) -> [UniformPiece<T>; 2] {
        let p = self.parts;
        let cut = self.inflow * p.red;
        [
            UniformPiece { probability: p.busy / p.cycle, low: T::zero(), high: cut },
            UniformPiece { probability: p.red / p.cycle, low: cut, high: p.red },
        ]
    }

    pub fn cdf_from_pieces(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        let [green, red] = self.pieces();
        let idle = self.parts.idle / self.parts.cycle;
        idle + green.cdf(x) + red.cdf(x)
    }
}

/// Delay of an arbitrary fluid particle of flow `at`.
pub fn fluid_delay_law<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef, cycle: T) -> Result<FluidDelayLaw<T>> {
    let parts = cycle_parts(dq, at, cycle)?;
    let (_, own) = shares(dq, at)?;
    Ok(FluidDelayLaw {
        atom: parts.idle / parts.cycle,
        span: parts.red,
        inflow: own,
        parts,
    })
}

/// Piecewise-linear workload path given by its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidTrajectory<T> {
    pub points: Vec<(T, T)>,
}

impl<T: Real> FluidTrajectory<T> {
    fn push(&mut self, t: T, w: T) {
        if self.points.last().is_some_and(|&(lt, lw)| lt == t && lw == w) {
            return;
        }
        self.points.push((t, w));
    }

    /// Linear interpolation between breakpoints; clamps outside the range.
    pub fn value_at(&self, t: T) -> T {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, x0), (t1, x1)) = (w[0], w[1]);
            if t <= t1 {
                if t1 == t0 {
                    return x1;
                }
                return x0 + (x1 - x0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }

    /// Exact time average over the span of the breakpoints.
    pub fn time_average(&self) -> T {
        let two = T::one() + T::one();
        let area: T = self
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / two)
            .sum();
        let span = self.points[self.points.len() - 1].0 - self.points[0].0;
        area / span
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,workload\n");
        for &(t, w) in &self.points {
            let _ = writeln!(out, "{t},{w}");
        }
        out
    }
}

/// Workload of flow `at` over one cycle starting at the beginning of its
/// group's green.
pub fn fluid_trajectory<T: Real>(dq: &DerivedQuantities<T>, at: FlowRef, cycle: T) -> Result<FluidTrajectory<T>> {
    let parts = cycle_parts(dq, at, cycle)?;
    let (_, own) = shares(dq, at)?;
    let peak = own * parts.red;
    let mut tr = FluidTrajectory { points: Vec::with_capacity(4) };
    tr.push(T::zero(), peak);
    tr.push(parts.busy, T::zero());
    tr.push(parts.busy + parts.idle, T::zero());
    tr.push(cycle, peak);
    Ok(tr)
}

/// Dominant-flow trajectories on a common clock that starts with the green of
/// the first group.
pub fn dominant_trajectories<T: Real>(dq: &DerivedQuantities<T>, cycle: T) -> Result<Vec<FluidTrajectory<T>>> {
    let mut offset = T::zero();
    let mut out = Vec::with_capacity(dq.group_count());
    for g in 0..dq.group_count() {
        let at = FlowRef::new(g, 0);
        let parts = cycle_parts(dq, at, cycle)?;
        let s = dq.dominant_share[g];
        let green_end = offset + parts.busy;
        // accumulated since the group's green in the previous cycle
        let start = s * (cycle - green_end);
        let mut tr = FluidTrajectory { points: Vec::with_capacity(4) };
        tr.push(T::zero(), start);
        tr.push(offset, start + s * offset);
        tr.push(green_end, T::zero());
        tr.push(cycle, s * (cycle - green_end));
        out.push(tr);
        offset = green_end;
    }
    Ok(out)
}

/// Times at which each group is switched away from for the first time,
/// starting from queue contents `initial` with zero all-red times.
/// `rates[g][j] = (arrival, service)`.
pub fn drain_times_with_rates<T: Real>(rates: &[Vec<(T, T)>], initial: &[Vec<T>]) -> Result<Vec<T>> {
    if rates.len() != initial.len() || rates.iter().zip(initial).any(|(r, x)| r.len() != x.len()) {
        return Err(ModelError::InvalidInput("initial contents do not match the layout".into()));
    }
    let mut t = T::zero();
    let mut out = Vec::with_capacity(rates.len());
    for (g, (grp, xs)) in rates.iter().zip(initial).enumerate() {
        let mut longest = T::zero();
        for (j, (&(lambda, mu), &x)) in grp.iter().zip(xs).enumerate() {
            if !(lambda < mu) {
                return Err(ModelError::InfiniteDrain {
                    group: g,
                    index: j,
                    arrival_rate: to_f64(lambda),
                    service_rate: to_f64(mu),
                });
            }
            longest = longest.max((x + lambda * t) / (mu - lambda));
        }
        t = t + longest;
        out.push(t);
    }
    Ok(out)
}

pub fn drain_times<T: Real>(scenario: &LoadedScenario<T>, initial: &[Vec<T>]) -> Result<Vec<T>> {
    let rates: Vec<Vec<(T, T)>> = scenario
        .spec()
        .groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            (0..grp.flows().len())
                .map(|j| {
                    let at = FlowRef::new(g, j);
                    (scenario.flow(at).arrival_rate, T::one() / grp.flows()[j].headway.mean())
                })
                .collect()
        })
        .collect();
    drain_times_with_rates(&rates, initial)
}

/// Rate of change of the dominant-flow workload, `L rho - 1`.
pub fn fluid_drift<T: Real>(scenario: &LoadedScenario<T>) -> T {
    scenario.saturation() - T::one()
}
