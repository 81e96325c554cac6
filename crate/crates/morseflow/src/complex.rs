//! The classical Morse complex over Z and Z/2: assembly from signed orbit
//! counts, d∘d = 0 verification in exact integer arithmetic, homology via
//! Smith normal form, and the -f transpose duality check.

use serde::Serialize;
use thiserror::Error;

use crate::critical::CriticalPoint;
use crate::flow::ConnectingOrbit;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("d∘d != 0: offending composite entries {entries:?}")]
    Inconsistent { entries: Vec<(usize, usize, i64)> },
    #[error("duality violation: {0}")]
    DualityViolation(String),
    #[error("precondition violation: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Coefficients {
    Integer,
    Mod2,
}

/// Dense integer matrix, row-major. Small complexes only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut out = IntMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn map_abs(&self) -> IntMatrix {
        IntMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.abs()).collect(),
        }
    }

    pub fn map_mod2(&self) -> IntMatrix {
        IntMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.rem_euclid(2)).collect(),
        }
    }
}

/// Diagonal of the Smith normal form, exact integer arithmetic with
/// unimodular row/column operations (i128 working precision).
pub fn smith_normal_form(m: &IntMatrix) -> Vec<i64> {
    let rows = m.rows;
    let cols = m.cols;
    let mut a: Vec<Vec<i128>> = (0..rows)
        .map(|r| (0..cols).map(|c| m.get(r, c) as i128).collect())
        .collect();
    let mut diag = Vec::new();
    let mut t = 0usize;
    while t < rows.min(cols) {
        // find the nonzero pivot of least magnitude in the remaining block
        let mut pivot: Option<(usize, usize)> = None;
        for r in t..rows {
            for c in t..cols {
                if a[r][c] != 0
                    && pivot
                        .map(|(pr, pc)| a[r][c].abs() < a[pr][pc].abs())
                        .unwrap_or(true)
                {
                    pivot = Some((r, c));
                }
            }
        }
        let Some((pr, pc)) = pivot else { break };
        a.swap(t, pr);
        for row in a.iter_mut() {
            row.swap(t, pc);
        }
        // clear row and column t
        let mut clean = false;
        while !clean {
            clean = true;
            for r in (t + 1)..rows {
                if a[r][t] != 0 {
                    let q = a[r][t] / a[t][t];
                    for c in t..cols {
                        a[r][c] -= q * a[t][c];
                    }
                    if a[r][t] != 0 {
                        a.swap(t, r);
                        clean = false;
                    }
                }
            }
            for c in (t + 1)..cols {
                if a[t][c] != 0 {
                    let q = a[t][c] / a[t][t];
                    for row in a.iter_mut().skip(t) {
                        let v = row[t];
                        row[c] -= q * v;
                    }
                    if a[t][c] != 0 {
                        for row in a.iter_mut() {
                            row.swap(t, c);
                        }
                        clean = false;
                    }
                }
            }
            if clean {
                // divisibility: pivot must divide every remaining entry
                'outer: for r in (t + 1)..rows {
                    for c in (t + 1)..cols {
                        if a[r][c] % a[t][t] != 0 {
                            for cc in t..cols {
                                a[t][cc] += a[r][cc];
                            }
                            clean = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        diag.push((a[t][t].abs()) as i64);
        t += 1;
    }
    diag
}

/// Free rank and torsion coefficients of one homology group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HomologyGroup {
    pub free_rank: usize,
    pub torsion: Vec<i64>,
}

/// Chain complex generated by critical points graded by Morse index.
#[derive(Debug, Clone, Serialize)]
pub struct GradedComplex {
    pub coefficients: Coefficients,
    /// `basis[k]` lists critical-point ids of index k, in the module's
    /// reproducible order (value descending, location tie-break).
    pub basis: Vec<Vec<usize>>,
    /// `differentials[k]`: matrix of D_k : C_k -> C_{k-1}; rows indexed by
    /// grade k-1 basis, columns by grade k basis. `differentials[0]` is a
    /// 0 x |C_0| matrix.
    pub differentials: Vec<IntMatrix>,
}

impl GradedComplex {
    pub fn top_grade(&self) -> usize {
        self.basis.len() - 1
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let s = b.len() as i64;
                if k % 2 == 0 {
                    s
                } else {
                    -s
                }
            })
            .sum()
    }
}

/// Assemble the Morse complex from critical points and zero-dimensional
/// connecting orbits; verifies d∘d = 0 exactly and fails hard otherwise.
pub fn build_morse_complex(
    points: &[CriticalPoint],
    orbits: &[ConnectingOrbit],
    n: usize,
    coefficients: Coefficients,
) -> Result<GradedComplex, ComplexError> {
    let mut basis: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for p in points {
        // points arrive sorted by value descending with lexicographic
        // tie-break, so push order is the reproducible basis order
        basis[p.index].push(p.id);
    }
    let index_of = |id: usize| points.iter().find(|p| p.id == id).map(|p| p.index);
    let pos_in = |k: usize, id: usize| basis[k].iter().position(|&b| b == id);

    let mut differentials = Vec::with_capacity(n + 1);
    differentials.push(IntMatrix::zeros(0, basis[0].len()));
    for k in 1..=n {
        let mut d = IntMatrix::zeros(basis[k - 1].len(), basis[k].len());
        for orbit in orbits {
            let (Some(pu), Some(pl)) = (index_of(orbit.upper), index_of(orbit.lower)) else {
                continue;
            };
            if pu != k || pl != k - 1 {
                continue;
            }
            let col = pos_in(k, orbit.upper).expect("basis contains upper");
            let row = pos_in(k - 1, orbit.lower).expect("basis contains lower");
            let inc = match coefficients {
                Coefficients::Integer => orbit.sign,
                Coefficients::Mod2 => 1,
            };
            let v = d.get(row, col) + inc;
            d.set(row, col, v);
        }
        if coefficients == Coefficients::Mod2 {
            d = d.map_mod2();
        }
        differentials.push(d);
    }

    let complex = GradedComplex {
        coefficients,
        basis,
        differentials,
    };
    verify_d_squared(&complex)?;
    Ok(complex)
}

/// d∘d = 0, exactly, for every composable pair of differentials.
pub fn verify_d_squared(c: &GradedComplex) -> Result<(), ComplexError> {
    let mut offending = Vec::new();
    for k in 1..c.differentials.len() - 1 {
        let composite = c.differentials[k].mul(&c.differentials[k + 1]);
        let composite = if c.coefficients == Coefficients::Mod2 {
            composite.map_mod2()
        } else {
            composite
        };
        for r in 0..composite.rows {
            for col in 0..composite.cols {
                let v = composite.get(r, col);
                if v != 0 {
                    offending.push((r, col, v));
                }
            }
        }
        if !offending.is_empty() {
            return Err(ComplexError::Inconsistent { entries: offending });
        }
    }
    Ok(())
}

/// Homology per grade: Smith normal form over Z, or plain rank mod 2.
pub fn homology_ranks(c: &GradedComplex) -> Vec<HomologyGroup> {
    let top = c.top_grade();
    let mut rank = vec![0usize; top + 2];
    let mut torsion: Vec<Vec<i64>> = vec![Vec::new(); top + 2];
    for k in 1..=top {
        let diag = match c.coefficients {
            Coefficients::Integer => smith_normal_form(&c.differentials[k]),
            Coefficients::Mod2 => smith_normal_form(&c.differentials[k].map_mod2())
                .into_iter()
                .map(|v| v.rem_euclid(2))
                .collect(),
        };
        let nonzero: Vec<i64> = diag.into_iter().filter(|v| *v != 0).collect();
        rank[k] = nonzero.len();
        torsion[k] = nonzero.into_iter().filter(|v| *v > 1).collect();
    }
    (0..=top)
        .map(|k| HomologyGroup {
            free_rank: c.basis[k].len() - rank[k] - rank[k + 1],
            torsion: torsion[k + 1].clone(),
        })
        .collect()
}

/// Report of the -f transpose duality check.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub holds: bool,
    pub detail: String,
}

/// Check that the -f complex is, gradewise, the index-flipped transpose
/// of the f complex up to entrywise sign: basis of grade k under -f must
/// be the grade n-k basis under f (same points), and |D_k(-f)| must equal
/// |D_{n-k+1}(f)ᵀ| entrywise.
pub fn duality_transpose_check(
    forward: &GradedComplex,
    forward_points: &[CriticalPoint],
    backward: &GradedComplex,
    backward_points: &[CriticalPoint],
) -> Result<DualityReport, ComplexError> {
    let n = forward.top_grade();
    if backward.top_grade() != n {
        return Err(ComplexError::Precondition(
            "complexes have different top grades".into(),
        ));
    }
    // match backward points to forward points by location
    let match_id = |bp: &CriticalPoint| -> Option<&CriticalPoint> {
        forward_points.iter().find(|fp| {
            fp.location
                .iter()
                .zip(&bp.location)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < 1e-6
        })
    };
    for bp in backward_points {
        let Some(fp) = match_id(bp) else {
            return Err(ComplexError::DualityViolation(format!(
                "-f critical point at {:?} has no f counterpart",
                bp.location
            )));
        };
        if bp.index != n - fp.index {
            return Err(ComplexError::DualityViolation(format!(
                "index {} under -f, expected {} (n - {})",
                bp.index,
                n - fp.index,
                fp.index
            )));
        }
    }
    if backward_points.len() != forward_points.len() {
        return Err(ComplexError::DualityViolation(
            "critical point counts differ between f and -f".into(),
        ));
    }
    for k in 0..=n {
        if backward.basis[k].len() != forward.basis[n - k].len() {
            return Err(ComplexError::DualityViolation(format!(
                "grade {k} basis size {} under -f, expected {}",
                backward.basis[k].len(),
                forward.basis[n - k].len()
            )));
        }
    }
    // entrywise absolute values against the transpose; the -f value
    // ordering is the reverse of f's, so matched bases line up reversed
    for k in 1..=n {
        let expected = forward.differentials[n - k + 1].transpose().map_abs();
        let mut got = backward.differentials[k].map_abs();
        // reverse row/column order to account for the reversed value sort
        let mut rev = IntMatrix::zeros(got.rows, got.cols);
        for r in 0..got.rows {
            for c in 0..got.cols {
                rev.set(got.rows - 1 - r, got.cols - 1 - c, got.get(r, c));
            }
        }
        got = rev;
        if got != expected {
            return Err(ComplexError::DualityViolation(format!(
                "grade {k}: |D_k(-f)| != |D_{}(f)ᵀ| entrywise",
                n - k + 1
            )));
        }
    }
    Ok(DualityReport {
        holds: true,
        detail: format!(
            "basis flip k -> {n}-k and entrywise |transpose| match for all grades"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[i64]) -> IntMatrix {
        IntMatrix {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    #[test]
    fn snf_diagonalizes_known_matrix() {
        // classic example: [[2,4,4],[-6,6,12],[10,4,16]] -> (2, 2, 156)
        let m = mat(3, 3, &[2, 4, 4, -6, 6, 12, 10, 4, 16]);
        assert_eq!(smith_normal_form(&m), vec![2, 2, 156]);
    }

    #[test]
    fn snf_zero_and_identity() {
        let z = mat(2, 3, &[0, 0, 0, 0, 0, 0]);
        assert_eq!(smith_normal_form(&z), Vec::<i64>::new());
        let id = mat(2, 2, &[1, 0, 0, 1]);
        assert_eq!(smith_normal_form(&id), vec![1, 1]);
    }

    #[test]
    fn snf_torsion_klein_bottle() {
        // Klein bottle d_2 in cellular homology: column (0, 2)
        let m = mat(2, 1, &[0, 2]);
        assert_eq!(smith_normal_form(&m), vec![2]);
    }

    #[test]
    fn zero_complex_ranks() {
        let c = GradedComplex {
            coefficients: Coefficients::Integer,
            basis: vec![vec![0], vec![1, 2, 3], vec![4]],
            differentials: vec![
                IntMatrix::zeros(0, 1),
                IntMatrix::zeros(1, 3),
                IntMatrix::zeros(3, 1),
            ],
        };
        let h = homology_ranks(&c);
        let ranks: Vec<usize> = h.iter().map(|g| g.free_rank).collect();
        assert_eq!(ranks, vec![1, 3, 1]);
        assert!(h.iter().all(|g| g.torsion.is_empty()));
    }

    #[test]
    fn rp2_style_torsion() {
        // C_2 -> C_1 -> C_0 with d_2 = (2), d_1 = 0 gives H_1 = Z/2
        let c = GradedComplex {
            coefficients: Coefficients::Integer,
            basis: vec![vec![0], vec![1], vec![2]],
            differentials: vec![
                IntMatrix::zeros(0, 1),
                IntMatrix::zeros(1, 1),
                mat(1, 1, &[2]),
            ],
        };
        verify_d_squared(&c).unwrap();
        let h = homology_ranks(&c);
        assert_eq!(h[0].free_rank, 1);
        assert_eq!(h[1].free_rank, 0);
        assert_eq!(h[1].torsion, vec![2]);
        assert_eq!(h[2].free_rank, 0);
    }

    #[test]
    fn d_squared_violation_detected() {
        let c = GradedComplex {
            coefficients: Coefficients::Integer,
            basis: vec![vec![0], vec![1], vec![2]],
            differentials: vec![
                IntMatrix::zeros(0, 1),
                mat(1, 1, &[1]),
                mat(1, 1, &[1]),
            ],
        };
        assert!(matches!(
            verify_d_squared(&c),
            Err(ComplexError::Inconsistent { .. })
        ));
    }
}
