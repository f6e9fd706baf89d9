use signal_core::{scale, DistributionModel, FlowSpec, GroupLayout, IntersectionSpec};
use signal_sim::{run, SimConfig};
use std::time::Instant;

fn main() {
    let flows = (1..=6)
        .map(|i| FlowSpec {
            id: i.to_string(),
            relative_load: i as f64,
            headway: DistributionModel::exponential(2.0).unwrap(),
            interarrival_scv: 1.0,
        })
        .collect();
    let red = DistributionModel::deterministic(4.0).unwrap();
    let layout: Vec<_> = [["1", "4"], ["2", "5"], ["3", "6"]]
        .iter()
        .map(|g| GroupLayout { flow_ids: g.iter().map(|s| s.to_string()).collect(), all_red: red })
        .collect();
    let spec = IntersectionSpec::from_relative_loads(flows, &layout).unwrap();
    let lr: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.99);
    let s = scale(&spec, lr / spec.critical_load()).unwrap();
    let t = Instant::now();
    let r = run(&s, &SimConfig::with_cycles(100_000, 1)).unwrap();
    println!("{:?} arrivals {} cycle {}", t.elapsed(), r.counts.arrivals, r.mean_cycle);
    for f in &r.flows {
        println!("{} {:.3} {:.3}", f.id, f.mean_delay, f.p_last_departure);
    }
}
