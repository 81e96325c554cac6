//! Finite-group arithmetic for the stable stems π^S_k, k ≤ 7, with their
//! Im(J) subgroups, and the two-attaching-map smoothability obstruction
//! check. The verdict is a conservative necessary condition via Im(J⁰):
//! OBSTRUCTED can be a false alarm relative to the sharper mod-Im(J^q)
//! test, PASSES never asserts smoothability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const STEM_TABLE_JSON: &str = include_str!("../data/stem_table.json");

#[derive(Debug, Error)]
pub enum StemError {
    #[error("stem degree {0} outside the shipped table (k <= 7)")]
    OutOfTable(usize),
    #[error("element has {got} residues, stem {k} has {expected} cyclic factors")]
    DegreeMismatch {
        k: usize,
        got: usize,
        expected: usize,
    },
}

/// One stable stem: cyclic factor orders and the Im(J) suborder in each
/// factor. Order 0 marks an infinite cyclic factor (k = 0 only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemGroup {
    pub k: usize,
    pub factors: Vec<u64>,
    pub im_j_factor_orders: Vec<u64>,
    pub infinite_cyclic: bool,
}

/// Element of a stem: one residue per cyclic factor, reduced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemElement {
    pub residues: Vec<i64>,
}

impl StemElement {
    pub fn zero(group: &StemGroup) -> Self {
        StemElement {
            residues: vec![0; group.factors.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Necessary condition met; never asserts smoothability.
    Passes,
    Obstructed,
}

#[derive(Deserialize)]
struct StemTableFile {
    stems: Vec<StemGroup>,
}

fn table() -> Vec<StemGroup> {
    let file: StemTableFile =
        serde_json::from_str(STEM_TABLE_JSON).expect("shipped stem table parses");
    file.stems
}

/// Shipped stem data for 0 <= k <= 7.
pub fn stem_group(k: usize) -> Result<StemGroup, StemError> {
    table()
        .into_iter()
        .find(|g| g.k == k)
        .ok_or(StemError::OutOfTable(k))
}

fn reduce(group: &StemGroup, e: &StemElement) -> Result<Vec<i64>, StemError> {
    if e.residues.len() != group.factors.len() {
        return Err(StemError::DegreeMismatch {
            k: group.k,
            got: e.residues.len(),
            expected: group.factors.len(),
        });
    }
    Ok(e.residues
        .iter()
        .zip(&group.factors)
        .map(|(&r, &m)| if m == 0 { r } else { r.rem_euclid(m as i64) })
        .collect())
}

/// Membership of `e` in the Im(J) subgroup of π^S_k.
pub fn element_in_im_j(k: usize, e: &StemElement) -> Result<bool, StemError> {
    let group = stem_group(k)?;
    let red = reduce(&group, e)?;
    if group.infinite_cyclic {
        // k = 0: Im(J) is the whole infinite cyclic group
        return Ok(true);
    }
    Ok(red
        .iter()
        .zip(group.factors.iter().zip(&group.im_j_factor_orders))
        .all(|(&r, (&m, &j))| {
            // Im(J) in Z/m of order j is the subgroup generated by m/j
            j != 0 && r as u64 % (m / j) == 0
        }))
}

/// Corollary-style necessary condition on the pair ({δ}, {δ′}):
/// OBSTRUCTED iff neither δ−δ′ nor δ+δ′ lies in Im(J).
pub fn smoothing_verdict(
    k: usize,
    delta: &StemElement,
    delta_prime: &StemElement,
) -> Result<Verdict, StemError> {
    let group = stem_group(k)?;
    let a = reduce(&group, delta)?;
    let b = reduce(&group, delta_prime)?;
    let diff = StemElement {
        residues: a.iter().zip(&b).map(|(x, y)| x - y).collect(),
    };
    let sum = StemElement {
        residues: a.iter().zip(&b).map(|(x, y)| x + y).collect(),
    };
    if element_in_im_j(k, &diff)? || element_in_im_j(k, &sum)? {
        Ok(Verdict::Passes)
    } else {
        Ok(Verdict::Obstructed)
    }
}

/// All elements of a finite stem, for exhaustive property checks.
pub fn enumerate_elements(group: &StemGroup) -> Vec<StemElement> {
    assert!(!group.infinite_cyclic, "finite stems only");
    let mut out = vec![StemElement { residues: vec![] }];
    for &m in &group.factors {
        let mut next = Vec::new();
        for e in &out {
            for r in 0..m as i64 {
                let mut v = e.residues.clone();
                v.push(r);
                next.push(StemElement { residues: v });
            }
        }
        out = next;
    }
    out
}

/// Human-readable table of all shipped stems, for the CLI.
pub fn render_table() -> String {
    let mut s = String::from("k   pi^S_k        Im(J) order\n");
    for g in table() {
        let group = if g.infinite_cyclic {
            "Z".to_string()
        } else if g.factors.is_empty() {
            "0".to_string()
        } else {
            g.factors
                .iter()
                .map(|m| format!("Z/{m}"))
                .collect::<Vec<_>>()
                .join(" x ")
        };
        let imj = if g.infinite_cyclic {
            "whole group".to_string()
        } else {
            g.im_j_factor_orders
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(" x ")
        };
        s.push_str(&format!("{:<3} {:<13} {}\n", g.k, group, imj));
    }
    s
}
