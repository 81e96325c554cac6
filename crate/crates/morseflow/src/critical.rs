//! Critical points of f|M: multistart Newton on the Lagrange system,
//! nondegeneracy certification, Morse indices and eigenframes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeomError, RestrictedFunction};

/// Ambient distance under which two converged points are merged.
pub const DEDUP_DISTANCE: f64 = 1e-6;
/// Smallest admissible |eigenvalue| of the restricted Hessian.
pub const NONDEGENERACY_THRESHOLD: f64 = 1e-6;
/// Residual target for the projected gradient at an accepted point.
pub const GRADIENT_TOL: f64 = 1e-9;
const NEWTON_MAX_ITERS: usize = 80;
const SEED_PROJECT_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum CriticalError {
    #[error("degenerate critical point at {location:?} (min |eigenvalue| = {min_abs_eig:.3e})")]
    DegenerateCriticalPoint {
        location: Vec<f64>,
        min_abs_eig: f64,
    },
    #[error("budget {got} below minimum {min}")]
    BudgetTooSmall { got: usize, min: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// A certified nondegenerate critical point of f|M.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    /// Stable identifier: position in the value-descending ordering.
    pub id: usize,
    pub location: Vec<f64>,
    pub value: f64,
    /// Number of negative restricted-Hessian eigenvalues.
    pub index: usize,
    /// Restricted-Hessian spectrum, ascending.
    pub hessian_spectrum: Vec<f64>,
    /// Ambient N x index matrix of unstable tangent eigenvectors.
    pub unstable_frame: DMatrix<f64>,
    /// Ambient N x (n - index) matrix of stable tangent eigenvectors.
    pub stable_frame: DMatrix<f64>,
}

/// Halton low-discrepancy sequence, one prime base per dimension.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Quasi-random points on the unit sphere S^{d-1} (d >= 1). For d == 1
/// this is the two-point sphere {-1, +1}.
pub fn halton_sphere(count: usize, dim: usize, skip: usize) -> Vec<DVector<f64>> {
    if dim == 1 {
        return vec![
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        ];
    }
    let mut out = Vec::with_capacity(count);
    let mut idx = skip;
    while out.len() < count {
        // inverse-cdf-free rejection from the cube
        let u = halton(idx, dim);
        idx += 1;
        let v = DVector::from_iterator(dim, u.iter().map(|x| 2.0 * x - 1.0));
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            out.push(v / norm);
        }
    }
    out
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Project an arbitrary ambient seed onto M by damped Gauss-Newton on g.
/// More forgiving than `retract`, which is restricted to a narrow basin.
fn project_seed(rf: &RestrictedFunction, x0: &[f64]) -> Option<Vec<f64>> {
    let m = &rf.manifold;
    let mut x = DVector::from_column_slice(x0);
    for _ in 0..SEED_PROJECT_ITERS {
        let res = m.constraint_residual(x.as_slice());
        if !res.norm().is_finite() {
            return None;
        }
        if res.norm() <= 1e-10 {
            return Some(x.as_slice().to_vec());
        }
        let jac = m.constraint_jacobian(x.as_slice());
        let gram = &jac * jac.transpose();
        let lambda = gram.lu().solve(&res)?;
        let step = jac.transpose() * lambda;
        // damp long steps
        let scale = if step.norm() > 0.5 { 0.5 / step.norm() } else { 1.0 };
        x -= step * scale;
    }
    None
}

/// Full Newton on the Lagrange system F(x, lambda) = (grad f - Jgᵀ lambda, g).
fn lagrange_newton(rf: &RestrictedFunction, x0: &[f64]) -> Option<Vec<f64>> {
    let m = &rf.manifold;
    let n_amb = m.ambient_dim;
    let c = m.constraints.len();
    let mut x = DVector::from_column_slice(x0);

    // initial multipliers by least squares
    let jac = m.constraint_jacobian(x.as_slice());
    let gram = &jac * jac.transpose();
    let mut lambda = gram.lu().solve(&(&jac * rf.f.gradient(x.as_slice())))?;

    for _ in 0..NEWTON_MAX_ITERS {
        let xs = x.as_slice();
        let jac = m.constraint_jacobian(xs);
        let grad_f = rf.f.gradient(xs);
        let g = m.constraint_residual(xs);
        let top = grad_f - jac.transpose() * &lambda;
        let res_norm = (top.norm_squared() + g.norm_squared()).sqrt();
        if !res_norm.is_finite() {
            return None;
        }
        if res_norm <= 1e-12 {
            return Some(xs.to_vec());
        }
        let mut h = rf.f.hessian(xs);
        for (k, gk) in m.constraints.iter().enumerate() {
            h -= gk.hessian(xs) * lambda[k];
        }
        let mut big = DMatrix::zeros(n_amb + c, n_amb + c);
        big.view_mut((0, 0), (n_amb, n_amb)).copy_from(&h);
        big.view_mut((0, n_amb), (n_amb, c))
            .copy_from(&(-jac.transpose()));
        big.view_mut((n_amb, 0), (c, n_amb)).copy_from(&jac);
        let mut rhs = DVector::zeros(n_amb + c);
        rhs.rows_mut(0, n_amb).copy_from(&top);
        rhs.rows_mut(n_amb, c).copy_from(&g);
        let delta = big.lu().solve(&rhs)?;
        let mut step = delta.rows(0, n_amb).clone_owned();
        let lam_step = delta.rows(n_amb, c).clone_owned();
        // trust-region style cap keeps seeds from jumping off the chart
        let cap = 0.5;
        if step.norm() > cap {
            let s = cap / step.norm();
            step *= s;
            // multipliers follow the same damping
            lambda -= lam_step * s;
        } else {
            lambda -= lam_step;
        }
        x -= step;
    }
    None
}

fn certify(
    rf: &RestrictedFunction,
    location: Vec<f64>,
) -> Result<Option<CriticalPoint>, CriticalError> {
    let (grad, hess, basis) = rf.restricted_grad_hess(&location)?;
    if grad.norm() > GRADIENT_TOL {
        return Ok(None);
    }
    let n = hess.nrows();
    let eig = nalgebra::SymmetricEigen::new(hess);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let min_abs = spectrum.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_abs < NONDEGENERACY_THRESHOLD {
        return Err(CriticalError::DegenerateCriticalPoint {
            location,
            min_abs_eig: min_abs,
        });
    }
    let index = spectrum.iter().filter(|v| **v < 0.0).count();
    let n_amb = rf.manifold.ambient_dim;
    let mut unstable = DMatrix::zeros(n_amb, index);
    let mut stable = DMatrix::zeros(n_amb, n - index);
    for (rank, &i) in order.iter().enumerate() {
        // ambient eigenvector through the tangent basis
        let mut v = &basis * eig.eigenvectors.column(i);
        let lead = v.iter().cloned().fold(0.0f64, |acc, w| {
            if w.abs() > acc.abs() {
                w
            } else {
                acc
            }
        });
        if lead < 0.0 {
            v.neg_mut();
        }
        if rank < index {
            unstable.set_column(rank, &v);
        } else {
            stable.set_column(rank - index, &v);
        }
    }
    let value = rf.value(&location);
    Ok(Some(CriticalPoint {
        id: usize::MAX, // assigned after sorting
        location,
        value,
        index,
        hessian_spectrum: spectrum,
        unstable_frame: unstable,
        stable_frame: stable,
    }))
}

/// Multistart Newton from `budget` quasi-random ambient seeds, retracted
/// to M, deduplicated and sorted by value descending. Deterministic for a
/// fixed seed; the seed only offsets the low-discrepancy sequence, so any
/// seed recovers the same point set once the budget covers the basins.
pub fn find_critical_points(
    rf: &RestrictedFunction,
    budget: usize,
    seed: u64,
    bounding_halfwidths: &[f64],
) -> Result<Vec<CriticalPoint>, CriticalError> {
    if budget < 100 {
        return Err(CriticalError::BudgetTooSmall {
            got: budget,
            min: 100,
        });
    }
    let n_amb = rf.manifold.ambient_dim;
    let skip = (seed % 8192) as usize;

    let converged: Vec<Vec<f64>> = (0..budget)
        .into_par_iter()
        .filter_map(|i| {
            let u = halton(skip + i, n_amb);
            let seed_pt: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(d, v)| (2.0 * v - 1.0) * bounding_halfwidths[d])
                .collect();
            let on_m = project_seed(rf, &seed_pt)?;
            lagrange_newton(rf, &on_m)
        })
        .collect();

    // polish with retraction, then dedup
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for x in converged {
        let x = match rf.manifold.retract(&x) {
            Ok(y) => y,
            Err(_) => continue,
        };
        if rf
            .restricted_gradient(&x)
            .map(|g| g.norm() > GRADIENT_TOL)
            .unwrap_or(true)
        {
            continue;
        }
        let dup = unique.iter().any(|y| {
            x.iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < DEDUP_DISTANCE
        });
        if !dup {
            unique.push(x);
        }
    }

    let mut points = Vec::with_capacity(unique.len());
    for loc in unique {
        if let Some(cp) = certify(rf, loc)? {
            points.push(cp);
        }
    }
    points.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then_with(|| lexicographic(&a.location, &b.location))
    });
    for (i, p) in points.iter_mut().enumerate() {
        p.id = i;
    }
    Ok(points)
}

/// Ordered pair of critical points with its index gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsecutivePair {
    pub upper: usize,
    pub lower: usize,
    /// p - q, may be zero or negative for equal-index pairs.
    pub index_gap: i64,
}

/// Value-consecutive pairs: f(P) > f(Q), Q flow-reachable from P, and no
/// third critical point with value strictly between through which the
/// pair breaks (reachable from P and reaching Q). Reachability is
/// supplied by the flow-line probe.
pub fn consecutive_pairs(
    points: &[CriticalPoint],
    reachable: impl Fn(usize, usize) -> bool,
) -> Vec<ConsecutivePair> {
    let mut pairs = Vec::new();
    for p in points {
        for q in points {
            if p.value <= q.value + 1e-12 {
                continue;
            }
            if !reachable(p.id, q.id) {
                continue;
            }
            let broken = points.iter().any(|r| {
                r.id != p.id
                    && r.id != q.id
                    && r.value < p.value - 1e-12
                    && r.value > q.value + 1e-12
                    && reachable(p.id, r.id)
                    && reachable(r.id, q.id)
            });
            if !broken {
                pairs.push(ConsecutivePair {
                    upper: p.id,
                    lower: q.id,
                    index_gap: p.index as i64 - q.index as i64,
                });
            }
        }
    }
    pairs.sort_by_key(|pr| (pr.upper, pr.lower));
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{Catalog, ImplicitManifold};

    fn sphere_height() -> RestrictedFunction {
        let m = ImplicitManifold::from_catalog(Catalog::Sphere(2)).unwrap();
        RestrictedFunction::new(parse("x3", 3).unwrap(), m)
    }

    #[test]
    fn sphere_height_two_poles() {
        let rf = sphere_height();
        let pts = find_critical_points(&rf, 100, 0, &[1.2, 1.2, 1.2]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].index, 2);
        assert_eq!(pts[1].index, 0);
        assert!((pts[0].location[2] - 1.0).abs() < 1e-9);
        assert!((pts[1].location[2] + 1.0).abs() < 1e-9);
        assert_eq!(pts[0].id, 0);
        assert_eq!(pts[1].id, 1);
    }

    #[test]
    fn seed_invariance() {
        let rf = sphere_height();
        let a = find_critical_points(&rf, 120, 1, &[1.2, 1.2, 1.2]).unwrap();
        let b = find_critical_points(&rf, 120, 99, &[1.2, 1.2, 1.2]).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            let d: f64 = p
                .location
                .iter()
                .zip(&q.location)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(d < 1e-6);
        }
    }

    #[test]
    fn budget_guard() {
        let rf = sphere_height();
        assert!(matches!(
            find_critical_points(&rf, 50, 0, &[1.2, 1.2, 1.2]),
            Err(CriticalError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn degenerate_height_squared_detected() {
        let m = ImplicitManifold::from_catalog(Catalog::Sphere(2)).unwrap();
        let rf = RestrictedFunction::new(parse("x3^2", 3).unwrap(), m);
        assert!(matches!(
            find_critical_points(&rf, 200, 0, &[1.2, 1.2, 1.2]),
            Err(CriticalError::DegenerateCriticalPoint { .. })
        ));
    }

    #[test]
    fn tilted_torus_four_points() {
        let m = ImplicitManifold::from_catalog(Catalog::Torus {
            big_r: 2.0,
            small_r: 1.0,
        })
        .unwrap();
        let rf = RestrictedFunction::new(parse("x3 + 0.05*x1", 3).unwrap(), m);
        let pts = find_critical_points(&rf, 300, 0, &[3.2, 3.2, 1.2]).unwrap();
        assert_eq!(pts.len(), 4);
        let mut indices: Vec<usize> = pts.iter().map(|p| p.index).collect();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1, 1, 2]);
        // values descending
        for w in pts.windows(2) {
            assert!(w[0].value > w[1].value);
        }
        // Euler characteristic from the Morse counts
        let chi: i64 = pts.iter().map(|p| if p.index % 2 == 0 { 1 } else { -1 }).sum();
        assert_eq!(chi, 0);
    }

    #[test]
    fn consecutive_pairs_single_point() {
        let rf = sphere_height();
        let pts = find_critical_points(&rf, 100, 0, &[1.2, 1.2, 1.2]).unwrap();
        let single = &pts[..1];
        assert!(consecutive_pairs(single, |_, _| true).is_empty());
    }

    #[test]
    fn consecutive_pairs_value_ordering() {
        let rf = sphere_height();
        let pts = find_critical_points(&rf, 100, 0, &[1.2, 1.2, 1.2]).unwrap();
        let pairs = consecutive_pairs(&pts, |_, _| true);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].upper, 0);
        assert_eq!(pairs[0].lower, 1);
        assert_eq!(pairs[0].index_gap, 2);
    }
}
