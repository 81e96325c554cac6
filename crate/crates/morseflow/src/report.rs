//! Deterministic run report: plain serde structs serialized in struct
//! order, no hash maps, so identical configs and seeds produce
//! byte-identical JSON.

use serde::Serialize;

use crate::complex::{HomologyGroup, IntMatrix};
use crate::config::Tolerances;
use crate::loop_homology::ExtendedEntry;
use crate::stems::Verdict;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointReport {
    pub id: usize,
    pub location: Vec<f64>,
    pub value: f64,
    pub index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub upper: usize,
    pub lower: usize,
    pub index_gap: i64,
    /// zero-dimensional connecting orbits, when the gap is 1
    pub orbit_count: Option<usize>,
    pub orbit_signs: Vec<i64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexReport {
    /// one row-major matrix per grade, D_k : C_k -> C_{k-1}
    pub basis: Vec<Vec<usize>>,
    pub differentials: Vec<IntMatrix>,
    pub d_squared_zero: bool,
    pub homology: Vec<HomologyGroup>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualitySection {
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuliReport {
    pub upper: usize,
    pub lower: usize,
    pub dimension: usize,
    pub hit_count: usize,
    pub component_count: usize,
    pub swept_label: Option<String>,
    pub factor_variance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendedSection {
    pub ring_tag: String,
    pub ring_basis: Vec<String>,
    pub levels: Vec<f64>,
    pub level_basis: Vec<Vec<usize>>,
    pub entries: Vec<ExtendedEntry>,
    pub composites_checked: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObstructionReport {
    pub k: usize,
    pub delta: Vec<i64>,
    pub delta_prime: Vec<i64>,
    pub verdict: Verdict,
    /// the check is a conservative necessary condition via Im(J⁰)
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub morseflow_schema: u32,
    pub seed: u64,
    pub budget: usize,
    pub resolution: usize,
    pub moduli_samples: usize,
    pub tolerances: Tolerances,
    pub critical_points: Vec<CriticalPointReport>,
    pub pairs: Vec<PairReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integer_complex: Option<ComplexReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mod2_complex: Option<ComplexReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualitySection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub moduli: Vec<ModuliReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extended_complex: Option<ExtendedSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub obstructions: Vec<ObstructionReport>,
    pub summary: Summary,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
