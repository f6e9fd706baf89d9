//! Exact mean delays of the four-flow exponential intersection near zero
//! load, next to the light-traffic line.

use signal_core::{lt_line, scale, DensityAtZero, DistributionModel, FlowSpec, GroupLayout, IntersectionSpec, Mode};
use signal_oracle::{CtmcSpec, Oracle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let flows = [0.1, 0.4, 0.1, 0.4]
        .iter()
        .enumerate()
        .map(|(i, &r)| FlowSpec {
            id: (i + 1).to_string(),
            relative_load: r,
            headway: DistributionModel::exponential(2.0).unwrap(),
            interarrival_scv: 1.0,
        })
        .collect();
    let red = DistributionModel::exponential(6.0)?;
    let layout = [
        GroupLayout { flow_ids: vec!["1".into(), "2".into()], all_red: red },
        GroupLayout { flow_ids: vec!["3".into(), "4".into()], all_red: red },
    ];
    let spec = IntersectionSpec::from_relative_loads(flows, &layout)?;
    println!("rho,flow,exact,lt");
    for rho in [1e-4, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4] {
        let oracle = Oracle::new(CtmcSpec::new(scale(&spec, rho)?, Mode::StayEmpty)?)?;
        for (at, w) in oracle.mean_delays()? {
            let lt = lt_line(&spec, at, DensityAtZero::TwoMoment, true)?.at(rho);
            println!("{rho},{},{w:.6},{lt:.6}", spec.flow(at).id);
        }
    }
    Ok(())
}
