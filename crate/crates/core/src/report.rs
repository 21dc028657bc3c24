//! Analysis results and their serialization.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::StateCode;
use crate::stg::AttractorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Firefront,
    Avatar,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Firefront => "firefront",
            Method::Avatar => "avatar",
        }
    }
}

/// Probability share of one input valuation leading to an attractor.
#[derive(Debug, Clone, PartialEq)]
pub struct InputShare {
    /// Sampled input component name -> level.
    pub assignment: BTreeMap<String, u8>,
    pub probability: f64,
}

/// One attractor with its estimated reachability data.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorOutcome {
    /// Set when the attractor is a user-declared oracle.
    pub oracle_id: Option<String>,
    pub kind: AttractorKind,
    pub size: u64,
    /// Sorted member codes; empty for user oracles (pattern-defined sets).
    pub members: Vec<StateCode>,
    pub probability: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub std_error: Option<f64>,
    pub avg_depth: Option<f64>,
    pub inputs: Option<Vec<InputShare>>,
}

impl AttractorOutcome {
    fn sort_key(&self) -> (StateCode, String) {
        (
            self.members.first().copied().unwrap_or(StateCode(u128::MAX)),
            self.oracle_id.clone().unwrap_or_default(),
        )
    }
}

/// A finalized analysis result.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionResult {
    pub model: String,
    pub method: Method,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Sorted by descending probability, ties by smallest member code.
    pub attractors: Vec<AttractorOutcome>,
    pub residual: f64,
    pub iterations: Option<u64>,
    pub runs: Option<u64>,
    pub wall_time_s: f64,
}

impl AbsorptionResult {
    /// Applies the canonical attractor ordering.
    pub fn sort_attractors(&mut self) {
        self.attractors.sort_by(|a, b| {
            b.probability
                .partial_cmp(&a.probability)
                .unwrap()
                .then_with(|| a.sort_key().cmp(&b.sort_key()))
        });
    }

    /// Display id per attractor: the oracle id, or `PA<rank>`/`CA<rank>` with
    /// the 1-based rank in the canonical order.
    pub fn attractor_ids(&self) -> Vec<String> {
        self.attractors
            .iter()
            .enumerate()
            .map(|(i, a)| match &a.oracle_id {
                Some(id) => id.clone(),
                None => match a.kind {
                    AttractorKind::Point => format!("PA{}", i + 1),
                    AttractorKind::Complex => format!("CA{}", i + 1),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Serialize)]
struct JsonAttractor<'a> {
    id: &'a str,
    kind: &'a str,
    size: u64,
    probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    avg_depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inputs: Option<Vec<JsonInputShare>>,
}

#[derive(Serialize)]
struct JsonInputShare {
    assignment: BTreeMap<String, u8>,
    probability: f64,
}

#[derive(Serialize)]
struct JsonResult<'a> {
    model: &'a str,
    method: &'a str,
    parameters: &'a BTreeMap<String, serde_json::Value>,
    attractors: Vec<JsonAttractor<'a>>,
    residual_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<u64>,
    wall_time_s: f64,
}

fn kind_name(kind: AttractorKind) -> &'static str {
    match kind {
        AttractorKind::Point => "point",
        AttractorKind::Complex => "complex",
    }
}

/// Serializes a result deterministically in the requested format.
pub fn serialize_result(result: &AbsorptionResult, format: OutputFormat) -> String {
    let ids = result.attractor_ids();
    match format {
        OutputFormat::Json => {
            let attractors = result
                .attractors
                .iter()
                .zip(&ids)
                .map(|(a, id)| JsonAttractor {
                    id,
                    kind: kind_name(a.kind),
                    size: a.size,
                    probability: a.probability,
                    lower_bound: a.lower_bound,
                    upper_bound: a.upper_bound,
                    std_error: a.std_error,
                    avg_depth: a.avg_depth,
                    inputs: a.inputs.as_ref().map(|shares| {
                        shares
                            .iter()
                            .map(|s| JsonInputShare {
                                assignment: s.assignment.clone(),
                                probability: s.probability,
                            })
                            .collect()
                    }),
                })
                .collect();
            let doc = JsonResult {
                model: &result.model,
                method: result.method.name(),
                parameters: &result.parameters,
                attractors,
                residual_probability: result.residual,
                iterations: result.iterations,
                runs: result.runs,
                wall_time_s: result.wall_time_s,
            };
            let mut text = serde_json::to_string_pretty(&doc).expect("result serialization");
            text.push('\n');
            text
        }
        OutputFormat::Csv => {
            let mut out = String::from(
                "id,kind,size,probability,lower_bound,upper_bound,std_error,avg_depth\n",
            );
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for (a, id) in result.attractors.iter().zip(&ids) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    id,
                    kind_name(a.kind),
                    a.size,
                    a.probability,
                    opt(a.lower_bound),
                    opt(a.upper_bound),
                    opt(a.std_error),
                    opt(a.avg_depth),
                ));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(code: u128, p: f64) -> AttractorOutcome {
        AttractorOutcome {
            oracle_id: None,
            kind: AttractorKind::Point,
            size: 1,
            members: vec![StateCode(code)],
            probability: p,
            lower_bound: None,
            upper_bound: None,
            std_error: None,
            avg_depth: None,
            inputs: None,
        }
    }

    fn base(attractors: Vec<AttractorOutcome>) -> AbsorptionResult {
        let mut r = AbsorptionResult {
            model: "toggle".into(),
            method: Method::Exact,
            parameters: BTreeMap::new(),
            attractors,
            residual: 0.0,
            iterations: None,
            runs: None,
            wall_time_s: 0.0,
        };
        r.sort_attractors();
        r
    }

    #[test]
    fn ordering_and_ids() {
        let r = base(vec![point(2, 0.5), point(1, 0.5)]);
        // equal probability: smallest member first
        assert_eq!(r.attractors[0].members[0], StateCode(1));
        assert_eq!(r.attractor_ids(), vec!["PA1", "PA2"]);

        let r = base(vec![point(1, 0.2), point(2, 0.8)]);
        assert_eq!(r.attractors[0].members[0], StateCode(2));
    }

    #[test]
    fn json_shape() {
        let r = base(vec![point(1, 0.5), point(2, 0.5)]);
        let text = serialize_result(&r, OutputFormat::Json);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["method"], "exact");
        assert_eq!(value["attractors"].as_array().unwrap().len(), 2);
        assert_eq!(value["attractors"][0]["probability"], 0.5);
        assert_eq!(value["residual_probability"], 0.0);
        assert!(value["attractors"][0].get("lower_bound").is_none());
        // repeat serialization is byte-identical
        assert_eq!(text, serialize_result(&r, OutputFormat::Json));
    }

    #[test]
    fn csv_shape() {
        let r = base(vec![point(1, 0.5), point(2, 0.5)]);
        let text = serialize_result(&r, OutputFormat::Csv);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "id,kind,size,probability,lower_bound,upper_bound,std_error,avg_depth"
        );
        assert_eq!(lines[1], "PA1,point,1,0.5,,,,");
    }

    #[test]
    fn oracle_id_used_verbatim() {
        let mut r = base(vec![point(1, 0.25)]);
        r.attractors.push(AttractorOutcome {
            oracle_id: Some("cc".into()),
            kind: AttractorKind::Complex,
            size: 6,
            members: vec![],
            probability: 0.75,
            lower_bound: None,
            upper_bound: None,
            std_error: None,
            avg_depth: None,
            inputs: None,
        });
        r.sort_attractors();
        assert_eq!(r.attractor_ids(), vec!["cc", "PA2"]);
    }
}
