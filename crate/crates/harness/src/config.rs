//! Intersection configuration documents and bundled presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use signal_core::{
    normalize_loads, DistributionModel, FlowSpec, GroupLayout, IntersectionSpec, RawFlow,
};

use crate::{HarnessError, Result};

const SECONDS_PER_HOUR: f64 = 3600.0;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_rate_per_hour: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_load: Option<f64>,
    pub saturation_rate_per_hour: f64,
    #[serde(default = "one")]
    pub headway_scv: f64,
    #[serde(default = "one")]
    pub interarrival_scv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEntry {
    pub flow_ids: Vec<String>,
    pub all_red_seconds: f64,
    /// Deterministic unless given.
    #[serde(default)]
    pub all_red_scv: f64,
}

/// Groups are listed in cyclic service order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub flows: Vec<FlowEntry>,
    pub groups: Vec<GroupEntry>,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub name: String,
    pub spec: IntersectionSpec<f64>,
    /// Total load implied by measured arrival rates, if they were given.
    pub actual_load: Option<f64>,
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn validate(&self, name: &str) -> Result<LoadedConfig> {
        let invalid = |path: String, message: &str| HarnessError::Parse { path, message: message.into() };
        let layout = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, e)| {
                let all_red = DistributionModel::new(e.all_red_seconds, e.all_red_scv)
                    .map_err(|err| invalid(format!("groups[{g}]"), &err.to_string()))?;
                Ok(GroupLayout { flow_ids: e.flow_ids.clone(), all_red })
            })
            .collect::<Result<Vec<_>>>()?;
        let raw = self.flows.iter().all(|f| f.arrival_rate_per_hour.is_some());
        let relative = self.flows.iter().all(|f| f.relative_load.is_some());
        for (i, f) in self.flows.iter().enumerate() {
            if f.arrival_rate_per_hour.is_some() && f.relative_load.is_some() {
                return Err(invalid(
                    format!("flows[{i}]"),
                    "give either arrival_rate_per_hour or relative_load, not both",
                ));
            }
        }
        let (spec, actual_load) = if raw && !self.flows.is_empty() {
            let flows: Vec<RawFlow<f64>> = self
                .flows
                .iter()
                .map(|f| RawFlow {
                    id: f.id.clone(),
                    arrival_rate_per_hour: f.arrival_rate_per_hour.unwrap_or_default(),
                    saturation_rate_per_hour: f.saturation_rate_per_hour,
                    headway_scv: f.headway_scv,
                    interarrival_scv: f.interarrival_scv,
                })
                .collect();
            let n = normalize_loads(&flows, &layout)?;
            (n.spec, Some(n.actual_load))
        } else if relative {
            let flows = self
                .flows
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    if !(f.saturation_rate_per_hour > 0.0) {
                        return Err(invalid(
                            format!("flows[{i}].saturation_rate_per_hour"),
                            "must be positive",
                        ));
                    }
                    let headway =
                        DistributionModel::new(SECONDS_PER_HOUR / f.saturation_rate_per_hour, f.headway_scv)
                            .map_err(|e| invalid(format!("flows[{i}].headway_scv"), &e.to_string()))?;
                    Ok(FlowSpec {
                        id: f.id.clone(),
                        relative_load: f.relative_load.unwrap_or_default(),
                        headway,
                        interarrival_scv: f.interarrival_scv,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (IntersectionSpec::from_relative_loads(flows, &layout)?, None)
        } else {
            return Err(invalid(
                "flows".into(),
                "every flow needs arrival_rate_per_hour, or every flow needs relative_load",
            ));
        };
        Ok(LoadedConfig {
            name: self.name.clone().unwrap_or_else(|| name.to_string()),
            spec,
            actual_load,
        })
    }
}

const INTERSECTION_1: &str = include_str!("../presets/intersection-1.json");
const INTERSECTION_2: &str = include_str!("../presets/intersection-2.json");
const INTERSECTION_3: &str = include_str!("../presets/intersection-3.json");
const FIGURE3_FOUR_FLOW: &str = include_str!("../presets/figure3-four-flow.json");

pub const SCENARIOS: [&str; 12] = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"];

/// Names accepted by [`preset`].
pub fn preset_names() -> Vec<String> {
    SCENARIOS
        .iter()
        .map(|s| format!("scenario-{s}"))
        .chain(["intersection-1", "intersection-2", "intersection-3", "figure3-four-flow"].map(String::from))
        .collect()
}

/// Six flows with arrival ratios 1:2:...:6, 1800 veh/h saturation and 12 s
/// of deterministic all-red per cycle split evenly over the groups.
pub fn six_flow_document(name: &str, groups: &[&[usize]], interarrival_scv: f64, headway_scv: f64) -> ConfigDocument {
    let red = 12.0 / groups.len() as f64;
    ConfigDocument {
        name: Some(name.to_string()),
        flows: (1..=6)
            .map(|i| FlowEntry {
                id: i.to_string(),
                arrival_rate_per_hour: None,
                relative_load: Some(i as f64),
                saturation_rate_per_hour: 1800.0,
                headway_scv,
                interarrival_scv,
            })
            .collect(),
        groups: groups
            .iter()
            .map(|g| GroupEntry {
                flow_ids: g.iter().map(|i| i.to_string()).collect(),
                all_red_seconds: red,
                all_red_scv: 0.0,
            })
            .collect(),
    }
}

fn scenario_document(roman: &str) -> Option<ConfigDocument> {
    const IV: &[&[usize]] = &[&[1, 6], &[2, 5], &[3, 4]];
    let (groups, ca, cb): (&[&[usize]], f64, f64) = match roman {
        "I" => (&[&[1], &[2], &[3], &[4], &[5], &[6]], 1.0, 1.0),
        "II" => (&[&[1, 2], &[3, 4], &[5, 6]], 1.0, 1.0),
        "III" => (&[&[1, 4], &[2, 5], &[3, 6]], 1.0, 1.0),
        "IV" => (IV, 1.0, 1.0),
        "V" => (&[&[1, 2, 3], &[4, 5, 6]], 1.0, 1.0),
        "VI" => (&[&[1, 2, 5], &[3, 4, 6]], 1.0, 1.0),
        "VII" => (&[&[1, 3, 5], &[2, 4, 6]], 1.0, 1.0),
        "VIII" => (IV, 0.5, 1.0),
        "IX" => (IV, 2.0, 1.0),
        "X" => (IV, 1.0, 0.0),
        "XI" => (IV, 1.0, 0.5),
        "XII" => (IV, 1.0, 2.0),
        _ => return None,
    };
    Some(six_flow_document(&format!("scenario-{roman}"), groups, ca, cb))
}

pub fn preset_document(name: &str) -> Option<ConfigDocument> {
    let text = match name {
        "intersection-1" => INTERSECTION_1,
        "intersection-2" => INTERSECTION_2,
        "intersection-3" => INTERSECTION_3,
        "figure3-four-flow" => FIGURE3_FOUR_FLOW,
        _ => return name.strip_prefix("scenario-").and_then(scenario_document),
    };
    Some(ConfigDocument::from_json(text).expect("bundled presets parse"))
}

pub fn preset(name: &str) -> Result<LoadedConfig> {
    preset_document(name)
        .ok_or_else(|| HarnessError::UnknownConfig(name.to_string()))?
        .validate(name)
}

/// A preset name or a path to a JSON document.
pub fn load_config(source: &str) -> Result<LoadedConfig> {
    if let Some(doc) = preset_document(source) {
        return doc.validate(source);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(HarnessError::UnknownConfig(source.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(source);
    ConfigDocument::from_json(&text)?.validate(name)
}
