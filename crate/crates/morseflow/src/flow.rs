//! Negative projected gradient flow on an implicit manifold: trajectory
//! integration, zero-dimensional connecting-orbit enumeration with signs,
//! positive-dimensional moduli sampling, and the broken-line reachability
//! probe used to decide consecutiveness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::critical::{halton_sphere, ConsecutivePair, CriticalPoint};
use crate::geometry::{GeomError, RestrictedFunction};

/// Shooting-sphere radius in eigenframe coordinates.
pub const R_SHOOT: f64 = 1e-3;
/// Arrival-ball radius around the target critical point.
pub const ARRIVAL_RADIUS: f64 = 1e-3;
/// Probe shots per critical point for the reachability matrix.
pub const PROBE_SHOTS: usize = 32;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("step size underflow (stiff flow) at {last:?}")]
    StiffFlow { last: Vec<f64> },
    #[error("precondition violation: {0}")]
    Precondition(String),
    #[error("sign indeterminate: |det| = {det:.3e} below 1e-6")]
    SignIndeterminate { det: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEnd {
    /// Converged to the critical point with this id.
    Critical(usize),
    /// Hit the step or time budget away from any known critical point.
    Escaped,
}

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Integrate +grad f instead of -grad f.
    pub backward: bool,
    pub max_steps: usize,
    pub max_time: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Projected-gradient norm below which the flow is considered limited.
    pub grad_stop: f64,
    /// A limit point is classified to a critical point within this radius.
    pub classify_radius: f64,
    pub record_polyline: bool,
    /// Record the first crossing of the level set f == value.
    pub level_cross: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            backward: false,
            max_steps: 200_000,
            max_time: 1.0e4,
            rtol: 1e-10,
            atol: 1e-12,
            grad_stop: 1e-8,
            classify_radius: 1e-4,
            record_polyline: false,
            level_cross: None,
        }
    }
}

/// One integrated trajectory. The polyline always contains at least the
/// start and end vertex; intermediate vertices only when requested.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub polyline: Vec<Vec<f64>>,
    pub end: FlowEnd,
    pub arc_length: f64,
    /// Per-critical-point closest approach distance along the trajectory.
    pub closest: Vec<f64>,
    /// Vertex realizing the closest approach, per critical point.
    pub closest_points: Vec<Vec<f64>>,
    /// First crossing of the requested level set, if any.
    pub level_point: Option<Vec<f64>>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient field; NaN components signal an evaluation failure
/// and force step rejection.
fn velocity(rf: &RestrictedFunction, x: &DVector<f64>, backward: bool) -> DVector<f64> {
    let m = &rf.manifold;
    let xs = x.as_slice();
    let jac = m.constraint_jacobian(xs);
    let grad = rf.f.gradient(xs);
    let gram = &jac * jac.transpose();
    let v = match gram.lu().solve(&(&jac * &grad)) {
        Some(lambda) => grad - jac.transpose() * lambda,
        None => DVector::from_element(x.len(), f64::NAN),
    };
    if backward {
        v
    } else {
        -v
    }
}

// Dormand-Prince 5(4) coefficients.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_ERR: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrate the (anti)gradient flow from `x0` until the projected
/// gradient vanishes, with retraction onto the constraint set after every
/// accepted step. f is monotone along the result up to 1e-12 per step.
pub fn flow_to_limit(
    rf: &RestrictedFunction,
    x0: &[f64],
    points: &[CriticalPoint],
    opts: &FlowOptions,
) -> Result<FlowTrajectory, FlowError> {
    let n_amb = rf.manifold.ambient_dim;
    let mut x = DVector::from_column_slice(x0);
    let mut polyline = vec![x0.to_vec()];
    let mut closest: Vec<f64> = points.iter().map(|p| dist(x0, &p.location)).collect();
    let mut closest_points: Vec<Vec<f64>> = points.iter().map(|_| x0.to_vec()).collect();
    let mut level_point: Option<Vec<f64>> = None;
    let mut f_prev = rf.value(x.as_slice());
    if let Some(level) = opts.level_cross {
        if (!opts.backward && f_prev <= level) || (opts.backward && f_prev >= level) {
            level_point = Some(x0.to_vec());
        }
    }
    let mut arc = 0.0;
    let mut t = 0.0;
    let mut k1 = velocity(rf, &x, opts.backward);
    let mut h = {
        let sp = k1.norm();
        if sp > 0.0 {
            (1e-3 / sp).min(1e-2)
        } else {
            1e-3
        }
    };

    let mut step_count = 0usize;
    while step_count < opts.max_steps && t < opts.max_time {
        if k1.norm() <= opts.grad_stop {
            break;
        }
        // one DP45 attempt
        let mut ks: Vec<DVector<f64>> = Vec::with_capacity(7);
        ks.push(k1.clone());
        let mut failed = false;
        for stage in 0..6 {
            let mut y = x.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    y += kj * (h * a);
                }
            }
            let k = velocity(rf, &y, opts.backward);
            if k.iter().any(|v| !v.is_finite()) {
                failed = true;
                break;
            }
            ks.push(k);
        }
        if failed {
            h *= 0.25;
            if h < 1e-15 {
                return Err(FlowError::StiffFlow {
                    last: x.as_slice().to_vec(),
                });
            }
            continue;
        }
        // 5th order solution is stage 6's y (FSAL structure)
        let mut x_new = x.clone();
        for (j, kj) in ks.iter().enumerate().take(6) {
            let a = DP_A[5][j];
            if a != 0.0 {
                x_new += kj * (h * a);
            }
        }
        let mut err_vec = DVector::zeros(n_amb);
        for (j, kj) in ks.iter().enumerate() {
            if DP_ERR[j] != 0.0 {
                err_vec += kj * (h * DP_ERR[j]);
            }
        }
        let mut err = 0.0f64;
        for i in 0..n_amb {
            let sc = opts.atol + opts.rtol * x[i].abs().max(x_new[i].abs());
            err = err.max((err_vec[i] / sc).abs());
        }
        if !err.is_finite() || err > 1.0 {
            h *= (0.9 * (1.0 / err.max(1e-10)).powf(0.2)).clamp(0.1, 0.5);
            if h < 1e-15 {
                return Err(FlowError::StiffFlow {
                    last: x.as_slice().to_vec(),
                });
            }
            continue;
        }
        // accepted: retract back onto M
        let retracted = match rf.manifold.retract(x_new.as_slice()) {
            Ok(y) => DVector::from_vec(y),
            Err(_) => {
                h *= 0.25;
                if h < 1e-15 {
                    return Err(FlowError::StiffFlow {
                        last: x.as_slice().to_vec(),
                    });
                }
                continue;
            }
        };
        let f_new = rf.value(retracted.as_slice());
        let monotone_ok = if opts.backward {
            f_new >= f_prev - 1e-12
        } else {
            f_new <= f_prev + 1e-12
        };
        if !monotone_ok {
            h *= 0.25;
            if h < 1e-15 {
                return Err(FlowError::StiffFlow {
                    last: x.as_slice().to_vec(),
                });
            }
            continue;
        }

        if let (Some(level), None) = (opts.level_cross, level_point.as_ref()) {
            let crossed = if opts.backward {
                f_prev < level && f_new >= level
            } else {
                f_prev > level && f_new <= level
            };
            if crossed {
                let w = if (f_new - f_prev).abs() > 0.0 {
                    (level - f_prev) / (f_new - f_prev)
                } else {
                    1.0
                };
                let y = &x + (&retracted - &x) * w;
                level_point = Some(
                    rf.manifold
                        .retract(y.as_slice())
                        .unwrap_or_else(|_| y.as_slice().to_vec()),
                );
            }
        }

        arc += (&retracted - &x).norm();
        t += h;
        x = retracted;
        f_prev = f_new;
        step_count += 1;
        for (i, p) in points.iter().enumerate() {
            let d = dist(x.as_slice(), &p.location);
            if d < closest[i] {
                closest[i] = d;
                closest_points[i] = x.as_slice().to_vec();
            }
        }
        if opts.record_polyline {
            polyline.push(x.as_slice().to_vec());
        }
        k1 = velocity(rf, &x, opts.backward);
        if k1.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::StiffFlow {
                last: x.as_slice().to_vec(),
            });
        }
        h = (h * (0.9 * (1.0 / err.max(1e-10)).powf(0.2)).clamp(0.2, 5.0)).min(0.5);
    }

    if !opts.record_polyline || polyline.len() == 1 {
        polyline.push(x.as_slice().to_vec());
    }
    let end = if k1.norm() <= opts.grad_stop {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let d = dist(x.as_slice(), &p.location);
            if d <= opts.classify_radius && best.map(|(_, bd)| d < bd).unwrap_or(true) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => FlowEnd::Critical(points[i].id),
            None => FlowEnd::Escaped,
        }
    } else {
        FlowEnd::Escaped
    };
    Ok(FlowTrajectory {
        polyline,
        end,
        arc_length: arc,
        closest,
        closest_points,
        level_point,
    })
}

/// Retract `center + radius * frame * s` onto M.
pub fn shoot_point(
    rf: &RestrictedFunction,
    center: &[f64],
    frame: &DMatrix<f64>,
    s: &DVector<f64>,
    radius: f64,
) -> Result<Vec<f64>, FlowError> {
    let offset = frame * s * radius;
    let x: Vec<f64> = center.iter().zip(offset.iter()).map(|(a, b)| a + b).collect();
    Ok(rf.manifold.retract(&x)?)
}

/// A flow line between two critical points of consecutive index.
#[derive(Debug, Clone)]
pub struct ConnectingOrbit {
    pub upper: usize,
    pub lower: usize,
    /// Point on the unit sphere in the upper point's unstable-frame
    /// coordinates from which the orbit was shot (or reconstructed).
    pub shoot_parameter: Vec<f64>,
    /// Orientation-transport sign; 0 until `orbit_sign` runs.
    pub sign: i64,
    pub trajectory: FlowTrajectory,
}

#[derive(Debug, Clone, Default)]
pub struct OrbitSet {
    pub orbits: Vec<ConnectingOrbit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitParams {
    pub r_shoot: f64,
    pub arrival_radius: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams {
            r_shoot: R_SHOOT,
            arrival_radius: ARRIVAL_RADIUS,
        }
    }
}

fn scan_options() -> FlowOptions {
    FlowOptions {
        max_steps: 60_000,
        ..FlowOptions::default()
    }
}

/// Reconstruct the shoot parameter of a forward trajectory: the unstable
/// components of the first vertex at distance >= r_shoot/2 from P.
fn infer_shoot_parameter(
    traj: &FlowTrajectory,
    upper: &CriticalPoint,
    r_shoot: f64,
) -> Vec<f64> {
    let frame = &upper.unstable_frame;
    for v in &traj.polyline {
        if dist(v, &upper.location) >= 0.5 * r_shoot {
            let delta = DVector::from_iterator(
                v.len(),
                v.iter().zip(&upper.location).map(|(a, b)| a - b),
            );
            let mut s = frame.transpose() * delta;
            let n = s.norm();
            if n > 0.0 {
                s /= n;
            }
            return s.as_slice().to_vec();
        }
    }
    vec![0.0; frame.ncols()]
}

/// Enumerate the finite set Z(P,Q) for an index gap of one.
///
/// The shooting direction adapts to the pair: when the upper point is a
/// local maximum the stable sphere of Q is zero-dimensional for the
/// reversed flow, and two backward shots recover the orbits with
/// certified arrival; when the upper index is one, two forward shots do.
/// Otherwise a scan of `resolution` points on the unstable sphere locates
/// sign changes of the passage coordinate past Q and bisects each change
/// to 1e-10 in parameter.
pub fn enumerate_orbits_zero_dim(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    pair: &ConsecutivePair,
    resolution: usize,
    params: &OrbitParams,
) -> Result<OrbitSet, FlowError> {
    let p_pt = &points[pair.upper];
    let q_pt = &points[pair.lower];
    let p = p_pt.index;
    let q = q_pt.index;
    if p as i64 - q as i64 != 1 {
        return Err(FlowError::Precondition(format!(
            "index gap must be 1, got p={p}, q={q}"
        )));
    }
    let n = rf.manifold.intrinsic_dim();
    let mut set = OrbitSet::default();

    if q == n - 1 {
        // backward shots from Q's one-dimensional stable sphere
        let ropts = FlowOptions {
            backward: true,
            record_polyline: true,
            ..scan_options()
        };
        for dir in [1.0f64, -1.0] {
            let s = DVector::from_vec(vec![dir]);
            let x0 = shoot_point(
                rf,
                &q_pt.location,
                &q_pt.stable_frame,
                &s,
                0.5 * params.r_shoot,
            )?;
            let traj = flow_to_limit(rf, &x0, points, &ropts)?;
            let reaches_p = traj.end == FlowEnd::Critical(p_pt.id)
                || traj.closest[idx_of(points, p_pt.id)] <= params.arrival_radius;
            if reaches_p {
                let mut poly = traj.polyline.clone();
                poly.reverse();
                let forward = FlowTrajectory {
                    polyline: poly,
                    end: FlowEnd::Critical(q_pt.id),
                    arc_length: traj.arc_length,
                    closest: traj.closest.clone(),
                    closest_points: traj.closest_points.clone(),
                    level_point: None,
                };
                let shoot = infer_shoot_parameter(&forward, p_pt, params.r_shoot);
                set.orbits.push(ConnectingOrbit {
                    upper: p_pt.id,
                    lower: q_pt.id,
                    shoot_parameter: shoot,
                    sign: 0,
                    trajectory: forward,
                });
            }
        }
    } else if p == 1 {
        let opts = FlowOptions {
            record_polyline: true,
            ..scan_options()
        };
        for dir in [1.0f64, -1.0] {
            let s = DVector::from_vec(vec![dir]);
            let x0 = shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, &s, params.r_shoot)?;
            let traj = flow_to_limit(rf, &x0, points, &opts)?;
            let qi = idx_of(points, q_pt.id);
            if traj.end == FlowEnd::Critical(q_pt.id) || traj.closest[qi] <= params.arrival_radius
            {
                set.orbits.push(ConnectingOrbit {
                    upper: p_pt.id,
                    lower: q_pt.id,
                    shoot_parameter: vec![dir],
                    sign: 0,
                    trajectory: traj,
                });
            }
        }
    } else if p == 2 {
        circle_scan(rf, points, pair, resolution, params, &mut set)?;
    } else {
        sphere_scan(rf, points, pair, resolution, params, &mut set)?;
    }
    let mut orbits = std::mem::take(&mut set.orbits);
    for orbit in orbits.iter_mut() {
        orbit.sign = orbit_sign(rf, points, orbit)?;
    }
    set.orbits = orbits;
    Ok(set)
}

fn idx_of(points: &[CriticalPoint], id: usize) -> usize {
    points.iter().position(|p| p.id == id).expect("known id")
}

/// Passage coordinate for the circle scan: signed unstable component at
/// the first crossing of Q's level set. Sign changes bracket separatrices
/// into Q.
fn passage_w(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    p_pt: &CriticalPoint,
    q_pt: &CriticalPoint,
    theta: f64,
    params: &OrbitParams,
) -> Result<(f64, f64), FlowError> {
    let s = DVector::from_vec(vec![theta.cos(), theta.sin()]);
    let x0 = shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, &s, params.r_shoot)?;
    let opts = FlowOptions {
        level_cross: Some(q_pt.value),
        ..scan_options()
    };
    let traj = flow_to_limit(rf, &x0, points, &opts)?;
    let qi = idx_of(points, q_pt.id);
    let w = match &traj.level_point {
        Some(y) => {
            let delta = DVector::from_iterator(
                y.len(),
                y.iter().zip(&q_pt.location).map(|(a, b)| a - b),
            );
            (q_pt.unstable_frame.transpose() * delta)[0]
        }
        None => 0.0,
    };
    Ok((w, traj.closest[qi]))
}

fn circle_scan(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    pair: &ConsecutivePair,
    resolution: usize,
    params: &OrbitParams,
    set: &mut OrbitSet,
) -> Result<(), FlowError> {
    let p_pt = &points[pair.upper];
    let q_pt = &points[pair.lower];
    let res = resolution.max(4);
    let thetas: Vec<f64> = (0..res)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / res as f64)
        .collect();
    let scans: Vec<(f64, f64)> = thetas
        .par_iter()
        .map(|&t| passage_w(rf, points, p_pt, q_pt, t, params))
        .collect::<Result<_, _>>()?;

    for i in 0..res {
        let j = (i + 1) % res;
        let (wi, _) = scans[i];
        let (wj, _) = scans[j];
        if wi == 0.0 || wi * wj >= 0.0 {
            continue;
        }
        // bisect the bracket [theta_i, theta_j] to 1e-10
        let mut a = thetas[i];
        let mut b = if j == 0 {
            2.0 * std::f64::consts::PI
        } else {
            thetas[j]
        };
        let mut wa = wi;
        while b - a > 1e-10 {
            let mid = 0.5 * (a + b);
            let (wm, _) = passage_w(rf, points, p_pt, q_pt, mid, params)?;
            if wm == 0.0 {
                a = mid;
                break;
            }
            if wa * wm < 0.0 {
                b = mid;
            } else {
                a = mid;
                wa = wm;
            }
        }
        let theta = 0.5 * (a + b);
        let s = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let x0 = shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, &s, params.r_shoot)?;
        let opts = FlowOptions {
            record_polyline: true,
            ..scan_options()
        };
        let traj = flow_to_limit(rf, &x0, points, &opts)?;
        let qi = idx_of(points, q_pt.id);
        let d = traj.closest[qi];
        if d <= params.arrival_radius {
            set.orbits.push(ConnectingOrbit {
                upper: p_pt.id,
                lower: q_pt.id,
                shoot_parameter: s.as_slice().to_vec(),
                sign: 0,
                trajectory: traj,
            });
        } else if d <= 10.0 * params.arrival_radius {
            set.warnings.push(format!(
                "transversality warning: crossing at theta={theta:.12} for pair ({},{}) \
                 approaches only to {d:.3e}",
                p_pt.id, q_pt.id
            ));
        }
        // farther misses are plane crossings unrelated to Q
    }
    Ok(())
}

/// Quasi-random scan with local refinement for unstable spheres of
/// dimension two or more.
fn sphere_scan(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    pair: &ConsecutivePair,
    resolution: usize,
    params: &OrbitParams,
    set: &mut OrbitSet,
) -> Result<(), FlowError> {
    let p_pt = &points[pair.upper];
    let q_pt = &points[pair.lower];
    let qi = idx_of(points, q_pt.id);
    let dim = p_pt.index;
    let samples = halton_sphere(resolution.max(16), dim, 0);
    let objective = |s: &DVector<f64>| -> f64 {
        match shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, s, params.r_shoot) {
            Ok(x0) => match flow_to_limit(rf, &x0, points, &scan_options()) {
                Ok(traj) => traj.closest[qi],
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };
    let mut scored: Vec<(f64, DVector<f64>)> = samples
        .par_iter()
        .map(|s| (objective(s), s.clone()))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut found: Vec<DVector<f64>> = Vec::new();
    for (d0, s0) in scored.into_iter().take(16) {
        if !d0.is_finite() {
            continue;
        }
        let (s, d) = refine_on_sphere(&s0, &objective, params.arrival_radius, 400);
        if d <= params.arrival_radius {
            let dup = found.iter().any(|t| (t - &s).norm() < 1e-4);
            if !dup {
                found.push(s);
            }
        }
    }
    let opts = FlowOptions {
        record_polyline: true,
        ..scan_options()
    };
    for s in found {
        let x0 = shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, &s, params.r_shoot)?;
        let traj = flow_to_limit(rf, &x0, points, &opts)?;
        set.orbits.push(ConnectingOrbit {
            upper: p_pt.id,
            lower: q_pt.id,
            shoot_parameter: s.as_slice().to_vec(),
            sign: 0,
            trajectory: traj,
        });
    }
    Ok(())
}

/// Nelder-Mead on a tangent chart of the unit sphere at `s0`.
/// Returns the best sphere point and objective value.
fn refine_on_sphere(
    s0: &DVector<f64>,
    objective: &dyn Fn(&DVector<f64>) -> f64,
    target: f64,
    max_evals: usize,
) -> (DVector<f64>, f64) {
    let dim = s0.len();
    let chart_dim = dim - 1;
    if chart_dim == 0 {
        return (s0.clone(), objective(s0));
    }
    // orthonormal basis of the tangent plane at s0
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(chart_dim);
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        let mut v = &e - s0 * s0.dot(&e);
        for b in &basis {
            let coeff = b.dot(&v);
            v -= b * coeff;
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
        if basis.len() == chart_dim {
            break;
        }
    }
    let embed = |xi: &DVector<f64>| -> DVector<f64> {
        let mut v = s0.clone();
        for (k, b) in basis.iter().enumerate() {
            v += b * xi[k];
        }
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            s0.clone()
        }
    };

    let evals = std::cell::Cell::new(0usize);
    let f = |xi: &DVector<f64>| -> f64 {
        evals.set(evals.get() + 1);
        objective(&embed(xi))
    };

    // standard Nelder-Mead
    let d = chart_dim;
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(d + 1);
    let origin = DVector::zeros(d);
    let v0 = f(&origin);
    simplex.push((origin, v0));
    for i in 0..d {
        let mut p = DVector::zeros(d);
        p[i] = 0.3;
        let v = f(&p);
        simplex.push((p, v));
    }
    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if simplex[0].1 <= 0.5 * target {
            break;
        }
        let spread = (&simplex[d].0 - &simplex[0].0).norm();
        if spread < 1e-15 {
            break;
        }
        let centroid: DVector<f64> = simplex[..d]
            .iter()
            .fold(DVector::zeros(d), |acc, (p, _)| acc + p)
            / d as f64;
        let worst = simplex[d].clone();
        let refl = &centroid + (&centroid - &worst.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let expd = &centroid + (&refl - &centroid) * 2.0;
            let fe = f(&expd);
            simplex[d] = if fe < fr { (expd, fe) } else { (refl, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (refl, fr);
        } else {
            let contr = &centroid + (&worst.0 - &centroid) * 0.5;
            let fc = f(&contr);
            if fc < worst.1 {
                simplex[d] = (contr, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    item.0 = &best + (&item.0 - &best) * 0.5;
                    item.1 = f(&item.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    (embed(&simplex[0].0), simplex[0].1)
}

/// Orientation sign of a connecting orbit: transport the upper point's
/// unstable frame along the trajectory by tangent projection with
/// re-orthonormalization, then compare at arrival against the flow
/// direction joined with the lower point's unstable frame.
pub fn orbit_sign(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    orbit: &ConnectingOrbit,
) -> Result<i64, FlowError> {
    let p_pt = &points[idx_of(points, orbit.upper)];
    let q_pt = &points[idx_of(points, orbit.lower)];
    let mut frame = p_pt.unstable_frame.clone();
    for v in &orbit.trajectory.polyline {
        let proj = rf.manifold.projector_unchecked(v)?;
        frame = &proj * frame;
        gram_schmidt(&mut frame).map_err(|det| FlowError::SignIndeterminate { det })?;
    }
    let last = orbit.trajectory.polyline.last().expect("nonempty polyline");
    let mut v = velocity(rf, &DVector::from_column_slice(last), false);
    let vn = v.norm();
    if vn < 1e-14 {
        return Err(FlowError::SignIndeterminate { det: 0.0 });
    }
    v /= vn;
    Ok(compare_sign(&frame, &v, &q_pt.unstable_frame)?)
}

/// det sign of [flow | unstable(Q)]ᵀ · T for a transported frame T.
fn compare_sign(
    transported: &DMatrix<f64>,
    flow_dir: &DVector<f64>,
    q_unstable: &DMatrix<f64>,
) -> Result<i64, FlowError> {
    let p = transported.ncols();
    let mut cmp = DMatrix::zeros(p, p);
    for j in 0..p {
        let col = transported.column(j);
        cmp[(0, j)] = flow_dir.dot(&col);
        for k in 0..q_unstable.ncols() {
            cmp[(k + 1, j)] = q_unstable.column(k).dot(&col);
        }
    }
    let det = cmp.determinant();
    if det.abs() < 1e-6 {
        return Err(FlowError::SignIndeterminate { det: det.abs() });
    }
    Ok(if det > 0.0 { 1 } else { -1 })
}

/// In-place modified Gram-Schmidt; errors with the collapsed norm when a
/// column degenerates.
fn gram_schmidt(m: &mut DMatrix<f64>) -> Result<(), f64> {
    let cols = m.ncols();
    for j in 0..cols {
        for k in 0..j {
            let coeff = m.column(k).dot(&m.column(j));
            let prev = m.column(k).clone_owned();
            let mut cj = m.column_mut(j);
            cj -= prev * coeff;
        }
        let n = m.column(j).norm();
        if n < 1e-12 {
            return Err(n);
        }
        m.column_mut(j).scale_mut(1.0 / n);
    }
    Ok(())
}

/// A sampled positive-dimensional connecting family Z(P,Q).
#[derive(Debug, Clone)]
pub struct ModuliSample {
    pub upper: usize,
    pub lower: usize,
    /// p - q - 1.
    pub dimension: usize,
    pub hit_parameters: Vec<Vec<f64>>,
    pub component_count: usize,
    pub swept_label: Option<String>,
    /// Mean per-coordinate variance of hit-trajectory midpoints, grouped
    /// by catalog factor (single entry for non-products).
    pub factor_variance: Vec<f64>,
}

fn sphere_area(d: usize) -> f64 {
    // surface area of the unit d-sphere
    match d {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * sphere_area(d - 2) / (d as f64 - 1.0),
    }
}

/// Quasi-random sampling of Z(P,Q) for index gap >= 2: each sample is
/// refined toward the hit set by minimizing the trajectory's closest
/// approach to Q over the unstable sphere.
pub fn sample_moduli(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    pair: &ConsecutivePair,
    samples: usize,
    seed: u64,
    params: &OrbitParams,
) -> Result<ModuliSample, FlowError> {
    let p_pt = &points[pair.upper];
    let q_pt = &points[pair.lower];
    let p = p_pt.index;
    let q = q_pt.index;
    if (p as i64) - (q as i64) < 2 {
        return Err(FlowError::Precondition(format!(
            "index gap must be >= 2, got p={p}, q={q}"
        )));
    }
    let qi = idx_of(points, q_pt.id);
    let sphere_dim = p - 1;
    let starts = halton_sphere(samples, p, (seed % 4096) as usize);

    let objective = |s: &DVector<f64>| -> f64 {
        match shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, s, params.r_shoot) {
            Ok(x0) => match flow_to_limit(rf, &x0, points, &scan_options()) {
                Ok(traj) => traj.closest[qi],
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };

    let refined: Vec<Option<DVector<f64>>> = starts
        .par_iter()
        .map(|s0| {
            let d0 = objective(s0);
            if d0 <= params.arrival_radius {
                return Some(s0.clone());
            }
            if !d0.is_finite() {
                return None;
            }
            let (s, d) = refine_on_sphere(s0, &objective, params.arrival_radius, 600);
            (d <= params.arrival_radius).then_some(s)
        })
        .collect();
    let hits: Vec<DVector<f64>> = refined.into_iter().flatten().collect();

    // cluster at five times the nominal sample spacing
    let spacing = (sphere_area(sphere_dim) / starts.len().max(1) as f64)
        .powf(1.0 / sphere_dim.max(1) as f64);
    let radius = 5.0 * spacing;
    let component_count = single_linkage_components(&hits, radius);

    // hit trajectories, recorded, for midpoint statistics
    let opts = FlowOptions {
        record_polyline: true,
        ..scan_options()
    };
    let mut midpoints: Vec<Vec<f64>> = Vec::new();
    for s in &hits {
        let x0 = shoot_point(rf, &p_pt.location, &p_pt.unstable_frame, s, params.r_shoot)?;
        let traj = flow_to_limit(rf, &x0, points, &opts)?;
        midpoints.push(midpoint_by_arc_to(&traj, &q_pt.location));
    }

    let spans = rf
        .manifold
        .catalog
        .as_ref()
        .map(|c| c.factor_spans())
        .unwrap_or_else(|| vec![0..rf.manifold.ambient_dim]);
    let mut factor_variance = vec![0.0; spans.len()];
    if midpoints.len() >= 2 {
        for (fi, span) in spans.iter().enumerate() {
            let mut acc = 0.0;
            for c in span.clone() {
                let mean =
                    midpoints.iter().map(|m| m[c]).sum::<f64>() / midpoints.len() as f64;
                acc += midpoints
                    .iter()
                    .map(|m| (m[c] - mean).powi(2))
                    .sum::<f64>()
                    / midpoints.len() as f64;
            }
            factor_variance[fi] = acc / span.len() as f64;
        }
    }
    let is_product = matches!(
        rf.manifold.catalog,
        Some(crate::geometry::Catalog::Product(_))
    );
    let swept_label = if is_product && !hits.is_empty() {
        let above: Vec<usize> = factor_variance
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.1)
            .map(|(i, _)| i)
            .collect();
        if above.len() == 1 {
            Some(format!("factor-{} sphere", above[0] + 1))
        } else {
            None
        }
    } else {
        None
    };

    Ok(ModuliSample {
        upper: p_pt.id,
        lower: q_pt.id,
        dimension: p - q - 1,
        hit_parameters: hits.iter().map(|h| h.as_slice().to_vec()).collect(),
        component_count,
        swept_label,
        factor_variance,
    })
}

/// Midpoint (by arc length) of the trajectory segment ending at its
/// closest approach to `target`. The full polyline overshoots past the
/// target toward lower critical points, so the tail is cut first.
fn midpoint_by_arc_to(traj: &FlowTrajectory, target: &[f64]) -> Vec<f64> {
    let cut = traj
        .polyline
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            dist(a, target)
                .partial_cmp(&dist(b, target))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let segment = &traj.polyline[..=cut];
    let total: f64 = segment.windows(2).map(|w| dist(&w[0], &w[1])).sum();
    let half = total / 2.0;
    let mut acc = 0.0;
    for w in segment.windows(2) {
        acc += dist(&w[0], &w[1]);
        if acc >= half {
            return w[1].clone();
        }
    }
    segment.last().cloned().unwrap_or_default()
}

fn single_linkage_components(pts: &[DVector<f64>], radius: f64) -> usize {
    let n = pts.len();
    if n == 0 {
        return 0;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (&pts[i] - &pts[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..n)
        .map(|i| find(&mut parent, i))
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

/// Reachability matrix for the broken-line probe: `reach[p][q]` is true
/// when some probe trajectory from P's unstable sphere passes within
/// 10 x arrival radius of Q, or some reversed-flow probe from Q's stable
/// sphere passes that close to P.
pub fn reachability(
    rf: &RestrictedFunction,
    points: &[CriticalPoint],
    params: &OrbitParams,
) -> Result<Vec<Vec<bool>>, FlowError> {
    let n = rf.manifold.intrinsic_dim();
    let m = points.len();
    let thresh = 10.0 * params.arrival_radius;

    let probe = |center: &CriticalPoint, frame: &DMatrix<f64>, backward: bool| -> Result<Vec<f64>, FlowError> {
        let dim = frame.ncols();
        let mut best = vec![f64::INFINITY; m];
        if dim == 0 {
            return Ok(best);
        }
        let shots = halton_sphere(PROBE_SHOTS, dim, 0);
        let opts = FlowOptions {
            backward,
            max_steps: 40_000,
            ..FlowOptions::default()
        };
        let radius = if backward {
            0.5 * params.r_shoot
        } else {
            params.r_shoot
        };
        let results: Vec<Vec<f64>> = shots
            .par_iter()
            .map(|s| {
                match shoot_point(rf, &center.location, frame, s, radius) {
                    Ok(x0) => match flow_to_limit(rf, &x0, points, &opts) {
                        Ok(traj) => traj.closest,
                        Err(_) => vec![f64::INFINITY; m],
                    },
                    Err(_) => vec![f64::INFINITY; m],
                }
            })
            .collect();
        for r in results {
            for (i, d) in r.into_iter().enumerate() {
                if d < best[i] {
                    best[i] = d;
                }
            }
        }
        Ok(best)
    };

    let mut fwd = vec![vec![f64::INFINITY; m]; m];
    let mut bwd = vec![vec![f64::INFINITY; m]; m];
    for (pi, p) in points.iter().enumerate() {
        if p.index > 0 {
            fwd[pi] = probe(p, &p.unstable_frame, false)?;
        }
        if p.index < n {
            bwd[pi] = probe(p, &p.stable_frame, true)?;
        }
    }
    let mut reach = vec![vec![false; m]; m];
    for pi in 0..m {
        for qi in 0..m {
            if pi == qi {
                continue;
            }
            reach[pi][qi] = fwd[pi][qi] <= thresh || bwd[qi][pi] <= thresh;
        }
    }
    Ok(reach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::find_critical_points;
    use crate::expr::parse;
    use crate::geometry::{Catalog, ImplicitManifold};

    fn sphere_height() -> (RestrictedFunction, Vec<CriticalPoint>) {
        let m = ImplicitManifold::from_catalog(Catalog::Sphere(2)).unwrap();
        let rf = RestrictedFunction::new(parse("x3", 3).unwrap(), m);
        let pts = find_critical_points(&rf, 100, 0, &[1.2, 1.2, 1.2]).unwrap();
        (rf, pts)
    }

    #[test]
    fn meridian_flow_reaches_south_pole() {
        let (rf, pts) = sphere_height();
        let theta: f64 = 0.1;
        let x0 = [theta.sin(), 0.0, theta.cos()];
        let x0 = rf.manifold.retract(&x0).unwrap();
        let traj = flow_to_limit(&rf, &x0, &pts, &FlowOptions::default()).unwrap();
        assert_eq!(traj.end, FlowEnd::Critical(1));
        let last = traj.polyline.last().unwrap();
        assert!((last[2] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn flow_from_critical_point_stays() {
        let (rf, pts) = sphere_height();
        let traj = flow_to_limit(&rf, &[0.0, 0.0, 1.0], &pts, &FlowOptions::default()).unwrap();
        assert_eq!(traj.end, FlowEnd::Critical(0));
        assert!(traj.arc_length < 1e-10);
    }

    #[test]
    fn f_decreases_along_flow() {
        let (rf, pts) = sphere_height();
        let x0 = rf.manifold.retract(&[0.6, 0.5, 0.62]).unwrap();
        let opts = FlowOptions {
            record_polyline: true,
            ..FlowOptions::default()
        };
        let traj = flow_to_limit(&rf, &x0, &pts, &opts).unwrap();
        let mut prev = f64::INFINITY;
        for v in &traj.polyline {
            let f = rf.value(v);
            assert!(f <= prev + 1e-12);
            prev = f;
        }
        // every vertex satisfies the constraint invariant
        for v in &traj.polyline {
            assert!(rf.manifold.constraint_residual(v).norm() <= 1e-10);
        }
    }

    #[test]
    fn gap_two_pair_rejected_for_zero_dim() {
        let (rf, pts) = sphere_height();
        let pair = ConsecutivePair {
            upper: 0,
            lower: 1,
            index_gap: 2,
        };
        assert!(matches!(
            enumerate_orbits_zero_dim(&rf, &pts, &pair, 64, &OrbitParams::default()),
            Err(FlowError::Precondition(_))
        ));
    }

    #[test]
    fn identity_frame_comparison_is_positive() {
        // comparing a frame against itself (flow joined with unstable)
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let u = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let mut t = DMatrix::zeros(3, 2);
        t.set_column(0, &v);
        t.set_column(1, &u.column(0));
        assert_eq!(compare_sign(&t, &v, &u).unwrap(), 1);
    }

    #[test]
    fn sphere_reachability() {
        let (rf, pts) = sphere_height();
        let reach = reachability(&rf, &pts, &OrbitParams::default()).unwrap();
        assert!(reach[0][1]); // max reaches min
        assert!(!reach[1][0]);
    }
}
