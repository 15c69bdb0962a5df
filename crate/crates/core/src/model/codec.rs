//! JSON form of an [`Instance`]. Documents use 1-based agent and item
//! indices; values are `"p/q"` strings, integer strings or exact decimals.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::instance::Instance;
use super::rational::{format_rational, from_json};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    n: usize,
    m: usize,
    values: Vec<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arrival: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    master_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hypergraph: Option<HypergraphDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HypergraphDoc {
    edges: Vec<Vec<usize>>,
}

fn one_based(xs: &[usize]) -> Vec<usize> {
    xs.iter().map(|x| x + 1).collect()
}

fn zero_based(xs: &[usize], what: &str) -> Result<Vec<usize>> {
    xs.iter()
        .map(|&x| {
            x.checked_sub(1)
                .ok_or_else(|| Error::Malformed(format!("{what} uses index 0; indices are 1-based")))
        })
        .collect()
}

/// Serializes an instance, attaching `meta` (e.g. generator settings) when given.
pub fn instance_to_json(inst: &Instance, meta: Option<Value>) -> Value {
    let doc = InstanceDoc {
        n: inst.n(),
        m: inst.m(),
        values: inst
            .values()
            .iter()
            .map(|row| row.iter().map(|v| Value::String(format_rational(v))).collect())
            .collect(),
        arrival: inst.arrival().map(one_based),
        master_list: inst.master_list().map(one_based),
        hypergraph: inst.hypergraph().map(|edges| HypergraphDoc {
            edges: edges.iter().map(|e| one_based(e)).collect(),
        }),
        meta,
    };
    serde_json::to_value(doc).expect("instance document serializes")
}

/// Parses and validates an instance document. Returns the instance and its `meta` field.
pub fn instance_from_json(raw: &Value) -> Result<(Instance, Option<Value>)> {
    let doc: InstanceDoc =
        serde_json::from_value(raw.clone()).map_err(|e| Error::Malformed(e.to_string()))?;
    let values = doc
        .values
        .iter()
        .map(|row| row.iter().map(from_json).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut inst = Instance::with_dims(doc.n, doc.m, values)?;
    if let Some(order) = doc.arrival {
        inst = inst.with_arrival(zero_based(&order, "arrival")?)?;
    }
    if let Some(list) = doc.master_list {
        inst = inst.with_master_list(zero_based(&list, "master_list")?)?;
    }
    if let Some(h) = doc.hypergraph {
        let edges = h
            .edges
            .iter()
            .map(|e| zero_based(e, "hypergraph edge"))
            .collect::<Result<Vec<_>>>()?;
        inst = inst.with_hypergraph(edges)?;
    }
    Ok((inst, doc.meta))
}

pub fn instance_to_string(inst: &Instance, meta: Option<Value>) -> String {
    serde_json::to_string_pretty(&instance_to_json(inst, meta)).expect("json value prints")
}

pub fn instance_from_str(text: &str) -> Result<(Instance, Option<Value>)> {
    let raw: Value = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    instance_from_json(&raw)
}

/// Serializes and parses back; used to check that nothing is lost in transit.
pub fn codec_roundtrip(inst: &Instance) -> Result<Instance> {
    instance_from_str(&instance_to_string(inst, None)).map(|(i, _)| i)
}
