//! Browser bindings for the demo page. Every export takes and returns JSON
//! strings so the page needs no generated TypeScript types.

use serde_json::{json, Value};
use specind::dynamics::{glauber_kernel, shattering_check};
use specind::gibbs::parse_rational;
use specind::influence::spectral_independence;
use specind::levels::WeightedComplex;
use specind::matroid::{bases_exchange_kernel, reliability, MatroidSpec};
use specind::numerics::{gap, reversible_spectrum};
use specind::{Caps, Graph, SpinSystem};
use wasm_bindgen::prelude::*;

// Small enough that a slider drag stays responsive.
fn caps() -> Caps {
    Caps { max_configs: 1 << 12, max_pinnings: 50_000, max_bases: 5_000 }
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// η, b, the smallest local gap and the Glauber gap of the hard-core model
/// on `graph_json` for each activity in `lambdas` (comma separated).
pub fn hardcore_curve_json(graph_json: &str, lambdas: &str) -> Result<String, String> {
    let graph = Graph::from_json(graph_json).map_err(text)?;
    let caps = caps();
    let mut rows = Vec::new();
    for raw in lambdas.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let system = SpinSystem::build_hardcore(&graph, &parse_rational(raw).map_err(text)?, &caps).map_err(text)?;
        let si = spectral_independence(&system, &caps).map_err(text)?;
        let levels = WeightedComplex::from_spin_system(&system, &caps)
            .and_then(|c| c.local_gaps())
            .map_err(text)?;
        let glauber = gap(&reversible_spectrum(&glauber_kernel(&system).map_err(text)?).map_err(text)?);
        let n = graph.n() as f64;
        rows.push(json!({
            "lambda": raw,
            "eta": si.eta,
            "b": si.b,
            "min_level_gamma": levels.iter().map(|l| l.gamma).fold(f64::INFINITY, f64::min),
            "product_bound": levels.iter().map(|l| l.gamma).product::<f64>() / n,
            "glauber_gamma": glauber.gamma,
        }));
    }
    Ok(Value::Array(rows).to_string())
}

/// Exact (or sampled) distribution of the component size of each vertex
/// inside a random block, next to the shattering bound.
pub fn shattering_json(graph_json: &str, block_size: usize, seed: u64) -> Result<String, String> {
    let graph = Graph::from_json(graph_json).map_err(text)?;
    let report = shattering_check(&graph, block_size, 20_000, seed, 1).map_err(text)?;
    serde_json::to_string(&report).map_err(text)
}

/// Bases count, exchange-walk gap and the reliability polynomial at `p` by
/// both routes.
pub fn matroid_json(spec_json: &str, p: f64) -> Result<String, String> {
    let caps = caps();
    let m = MatroidSpec::from_json(spec_json).and_then(|s| s.build()).map_err(text)?;
    let walk = bases_exchange_kernel(&m, &caps).map_err(text)?;
    let g = gap(&reversible_spectrum(&walk.kernel).map_err(text)?);
    let rel = reliability(&m, p, &caps).map_err(text)?;
    Ok(json!({
        "kind": m.kind_name(),
        "ground": m.ground_size(),
        "rank": m.rank(),
        "bases": walk.bases.len(),
        "exchange_gamma": g.gamma,
        "reliability": rel,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn hardcore_curve(graph_json: &str, lambdas: &str) -> Result<String, JsValue> {
    hardcore_curve_json(graph_json, lambdas).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn shattering(graph_json: &str, block_size: usize, seed: u64) -> Result<String, JsValue> {
    shattering_json(graph_json, block_size, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn matroid(spec_json: &str, p: f64) -> Result<String, JsValue> {
    matroid_json(spec_json, p).map_err(|e| JsValue::from_str(&e))
}
