//! The frozen reference file `reference/oracle_values.json`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bessel::{bessel_k, circle_single_layer, sphere_single_layer};
use crate::quadrature::{ellipse_perimeter, mode_fourier_single_layer};
use crate::roots::bessel_root_bisect;
use crate::shooting::{shoot_weyl, shooting_bound_states, Interaction, ShootingProblem};
use crate::Result;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub generator: String,
    pub inputs: Value,
    pub output: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub version: u32,
    pub entries: Vec<ReferenceEntry>,
}

impl ReferenceFile {
    pub fn find(&self, generator: &str, inputs: &Value) -> Option<&Value> {
        self.entries.iter().find(|e| e.generator == generator && &e.inputs == inputs).map(|e| &e.output)
    }
}

fn entry(generator: &str, inputs: Value, output: Value) -> ReferenceEntry {
    ReferenceEntry { generator: generator.into(), inputs, output }
}

/// Bound-state brackets used throughout: `κ ∈ [1e-3, 20]`, orders up to 12.
pub const KAPPA_BRACKET: (f64, f64) = (1e-3, 20.0);
pub const MAX_ORDER: u32 = 12;

pub fn compute_reference() -> Result<ReferenceFile> {
    let mut entries = Vec::new();
    for l in 0..=10u32 {
        let v = mode_fourier_single_layer(l, 1.0, 1.0, 1024)?;
        entries.push(entry("mode_fourier_single_layer", json!({"l": l, "kappa": 1.0, "radius": 1.0, "order": 1024}), json!(v)));
    }
    let cases = [(2u32, 0.5), (2, 2.0), (2, 8.0), (3, 2.0), (3, 8.0)];
    for (dim, alpha) in cases {
        let s = shooting_bound_states(dim, 1.0, Interaction::Delta { alpha }, MAX_ORDER, KAPPA_BRACKET.0, KAPPA_BRACKET.1)?;
        entries.push(entry(
            "shooting_bound_states",
            json!({"dimension": dim, "radius": 1.0, "interaction": {"kind": "delta", "alpha": alpha}}),
            serde_json::to_value(s).expect("states serialize"),
        ));
    }
    for beta in [0.3, 1.0] {
        let s = shooting_bound_states(2, 1.0, Interaction::DeltaPrime { beta }, MAX_ORDER, KAPPA_BRACKET.0, KAPPA_BRACKET.1)?;
        entries.push(entry(
            "shooting_bound_states",
            json!({"dimension": 2, "radius": 1.0, "interaction": {"kind": "delta_prime", "beta": beta}}),
            serde_json::to_value(s).expect("states serialize"),
        ));
    }
    for dim in [2u32, 3] {
        for l in [0u32, 1, 5, 20] {
            for kappa in [0.3, 1.0, 3.0] {
                let p = ShootingProblem::new(dim, l, 1.0, Interaction::Delta { alpha: 0.0 });
                let (mi, me) = shoot_weyl(&p, kappa)?;
                entries.push(entry(
                    "shoot_weyl",
                    json!({"dimension": dim, "l": l, "kappa": kappa, "radius": 1.0}),
                    json!({"m_i": mi, "m_e": me}),
                ));
            }
        }
    }
    let root = bessel_root_bisect(|k| 2.0 * circle_single_layer(0, k, 1.0) - 1.0, 1e-4, 10.0)?;
    entries.push(entry("bessel_root_bisect", json!({"equation": "2 I0(k) K0(k) = 1", "bracket": [1e-4, 10.0]}), serde_json::to_value(root).expect("root serializes")));
    let none = bessel_root_bisect(|k| 0.9 * sphere_single_layer(0, k, 1.0) - 1.0, 1e-4, 10.0)?;
    entries.push(entry("bessel_root_bisect", json!({"equation": "0.9 k i0(k) k0(k) = 1", "bracket": [1e-4, 10.0]}), serde_json::to_value(none).expect("root serializes")));
    entries.push(entry("bessel_k_integral", json!({"l": 0, "z": 1.0}), json!(bessel_k(0, 1.0))));
    for (a, b) in [(1.0, 1.0), (2.0, 1.0), (3.0, 0.5)] {
        entries.push(entry("ellipse_perimeter", json!({"a": a, "b": b}), json!(ellipse_perimeter(a, b))));
    }
    Ok(ReferenceFile { version: FORMAT_VERSION, entries })
}

/// Path of the frozen file relative to the workspace root.
pub const REFERENCE_PATH: &str = "reference/oracle_values.json";

pub fn load(path: &std::path::Path) -> std::io::Result<ReferenceFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
