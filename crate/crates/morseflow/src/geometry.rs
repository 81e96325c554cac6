//! Implicit submanifolds `M = g^{-1}(0)` of Euclidean space, with tangent
//! projectors, Newton retraction onto the constraint set, and the gradient
//! and Hessian of a function restricted to `M`.
//!
//! The presentation is always implicit (no chart atlases). Products are
//! realized as concatenated coordinates with concatenated constraints.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError, Program};

/// Constraint residual target for retraction.
pub const CONSTRAINT_TOL: f64 = 1e-12;
/// Relative singular-value threshold below which the constraint Jacobian
/// counts as rank-deficient.
pub const RANK_THRESHOLD: f64 = 1e-8;
/// Retraction basin guard on the constraint residual norm. Wide enough
/// to admit points displaced ~0.1 off a unit-scale constraint set.
pub const RETRACTION_BASIN: f64 = 0.5;
const RETRACTION_MAX_ITERS: usize = 50;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("singular constraint Jacobian at {point:?}")]
    SingularConstraint { point: Vec<f64> },
    #[error("retraction failed after {iters} iterations at {point:?} (|g| = {residual:.3e})")]
    RetractionFailure {
        point: Vec<f64>,
        iters: usize,
        residual: f64,
    },
    #[error("point outside retraction basin (|g| = {residual:.3e} > {basin})")]
    OutsideBasin { residual: f64, basin: f64 },
    #[error("point has length {got}, ambient dimension is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("constraint count {constraints} must be below ambient dimension {ambient}")]
    TooManyConstraints { constraints: usize, ambient: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Catalog presentations with known topology.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Catalog {
    /// Unit n-sphere in R^{n+1}.
    Sphere(usize),
    /// Torus of revolution about the x3 axis in R^3.
    Torus { big_r: f64, small_r: f64 },
    /// Product of catalog factors, coordinates concatenated.
    Product(Vec<Catalog>),
}

impl Catalog {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Catalog::Sphere(n) => n + 1,
            Catalog::Torus { .. } => 3,
            Catalog::Product(fs) => fs.iter().map(Catalog::ambient_dim).sum(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Catalog::Sphere(n) => *n,
            Catalog::Torus { .. } => 2,
            Catalog::Product(fs) => fs.iter().map(Catalog::intrinsic_dim).sum(),
        }
    }

    /// Mod-2 Betti numbers, indices 0..=intrinsic_dim.
    pub fn reference_betti(&self) -> Vec<usize> {
        match self {
            Catalog::Sphere(n) => {
                let mut b = vec![0; n + 1];
                b[0] = 1;
                b[*n] += 1; // S^0 would be [2]; catalog spheres have n >= 1
                b
            }
            Catalog::Torus { .. } => vec![1, 2, 1],
            Catalog::Product(fs) => {
                let mut acc = vec![1usize];
                for f in fs {
                    let b = f.reference_betti();
                    let mut next = vec![0; acc.len() + b.len() - 1];
                    for (i, &x) in acc.iter().enumerate() {
                        for (j, &y) in b.iter().enumerate() {
                            next[i + j] += x * y;
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
    }

    /// Constraint expressions with variables offset by `base` coordinates.
    fn constraint_strings(&self, base: usize) -> Vec<String> {
        match self {
            Catalog::Sphere(n) => {
                let terms: Vec<String> =
                    (1..=n + 1).map(|i| format!("x{}^2", base + i)).collect();
                vec![format!("{} - 1", terms.join(" + "))]
            }
            Catalog::Torus { big_r, small_r } => {
                vec![format!(
                    "(sqrt(x{a}^2 + x{b}^2) - {big_r})^2 + x{c}^2 - {rr}",
                    a = base + 1,
                    b = base + 2,
                    c = base + 3,
                    rr = small_r * small_r,
                )]
            }
            Catalog::Product(fs) => {
                let mut out = Vec::new();
                let mut offset = base;
                for f in fs {
                    out.extend(f.constraint_strings(offset));
                    offset += f.ambient_dim();
                }
                out
            }
        }
    }

    /// Ambient coordinate spans of the product factors (single span for
    /// non-products).
    pub fn factor_spans(&self) -> Vec<std::ops::Range<usize>> {
        match self {
            Catalog::Product(fs) => {
                let mut spans = Vec::new();
                let mut offset = 0;
                for f in fs {
                    let d = f.ambient_dim();
                    spans.push(offset..offset + d);
                    offset += d;
                }
                spans
            }
            _ => vec![0..self.ambient_dim()],
        }
    }

    /// Default ambient bounding box half-widths for quasi-random seeding.
    /// Basic shape sanity for configs.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Catalog::Sphere(n) if *n >= 1 => Ok(()),
            Catalog::Sphere(n) => Err(format!("sphere dimension {n} must be >= 1")),
            Catalog::Torus { big_r, small_r } => {
                if *small_r > 0.0 && big_r > small_r {
                    Ok(())
                } else {
                    Err(format!("torus needs big_r > small_r > 0, got ({big_r}, {small_r})"))
                }
            }
            Catalog::Product(fs) if fs.len() >= 2 => {
                fs.iter().try_for_each(Catalog::validate)
            }
            Catalog::Product(_) => Err("product needs at least two factors".into()),
        }
    }

    /// Loop-space ring tag, when the Pontryagin table is catalogued.
    pub fn ring_tag(&self) -> Option<String> {
        match self {
            Catalog::Sphere(n) if *n >= 2 => Some(format!("sphere({n})")),
            Catalog::Product(fs) if fs.len() == 2 => {
                let tags: Option<Vec<String>> = fs.iter().map(Catalog::ring_tag).collect();
                tags.map(|t| format!("product({},{})", t[0], t[1]))
            }
            _ => None,
        }
    }

    pub fn bounding_halfwidths(&self) -> Vec<f64> {
        match self {
            Catalog::Sphere(n) => vec![1.2; n + 1],
            Catalog::Torus { big_r, small_r } => {
                let w = big_r + small_r + 0.2;
                vec![w, w, small_r + 0.2]
            }
            Catalog::Product(fs) => fs
                .iter()
                .flat_map(|f| f.bounding_halfwidths())
                .collect(),
        }
    }
}

/// A scalar field with precompiled value, gradient and Hessian programs.
#[derive(Debug, Clone)]
pub struct CompiledScalar {
    pub expr: Expr,
    value: Program,
    grad: Vec<Program>,
    hess: Vec<Vec<Program>>, // row-major N x N
    dim: usize,
}

impl CompiledScalar {
    pub fn new(expr: Expr, dim: usize) -> Self {
        let grads: Vec<Expr> = (0..dim).map(|i| expr.differentiate(i)).collect();
        let hess = grads
            .iter()
            .map(|g| (0..dim).map(|j| g.differentiate(j).compile()).collect())
            .collect();
        CompiledScalar {
            value: expr.compile(),
            grad: grads.iter().map(Expr::compile).collect(),
            hess,
            expr,
            dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.grad.iter().map(|p| p.eval(x)))
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                h[(i, j)] = self.hess[i][j].eval(x);
            }
        }
        // exact mixed partials commute; average out float noise
        for i in 0..self.dim {
            for j in 0..i {
                let m = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = m;
                h[(j, i)] = m;
            }
        }
        h
    }
}

/// `M = g^{-1}(0)` in R^N with full-rank constraint Jacobian on M.
#[derive(Debug, Clone)]
pub struct ImplicitManifold {
    pub ambient_dim: usize,
    pub constraints: Vec<CompiledScalar>,
    pub catalog: Option<Catalog>,
    pub reference_betti: Option<Vec<usize>>,
}

impl ImplicitManifold {
    pub fn new(ambient_dim: usize, constraints: Vec<Expr>) -> Result<Self, GeomError> {
        if constraints.len() >= ambient_dim {
            return Err(GeomError::TooManyConstraints {
                constraints: constraints.len(),
                ambient: ambient_dim,
            });
        }
        Ok(ImplicitManifold {
            ambient_dim,
            constraints: constraints
                .into_iter()
                .map(|e| CompiledScalar::new(e, ambient_dim))
                .collect(),
            catalog: None,
            reference_betti: None,
        })
    }

    pub fn from_catalog(catalog: Catalog) -> Result<Self, GeomError> {
        let n_amb = catalog.ambient_dim();
        let exprs = catalog
            .constraint_strings(0)
            .iter()
            .map(|s| expr::parse(s, n_amb))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m = ImplicitManifold::new(n_amb, exprs)?;
        m.reference_betti = Some(catalog.reference_betti());
        m.catalog = Some(catalog);
        Ok(m)
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.ambient_dim - self.constraints.len()
    }

    pub fn constraint_residual(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|g| g.value(x)),
        )
    }

    pub fn constraint_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let c = self.constraints.len();
        let mut jac = DMatrix::zeros(c, self.ambient_dim);
        for (k, g) in self.constraints.iter().enumerate() {
            jac.row_mut(k).copy_from(&g.gradient(x).transpose());
        }
        jac
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeomError> {
        if x.len() != self.ambient_dim {
            return Err(GeomError::DimensionMismatch {
                got: x.len(),
                expected: self.ambient_dim,
            });
        }
        Ok(())
    }

    /// Gram matrix `Jg Jgᵀ` solved against `rhs`; error when the Jacobian
    /// is rank-deficient at `x`.
    fn solve_gram(
        &self,
        jac: &DMatrix<f64>,
        rhs: &DVector<f64>,
        x: &[f64],
    ) -> Result<DVector<f64>, GeomError> {
        let gram = jac * jac.transpose();
        let svd = gram.clone().svd(false, false);
        let max_sv = svd.singular_values.max();
        let min_sv = svd.singular_values.min();
        // gram singular values are squares of Jg's
        if max_sv <= 0.0 || min_sv < (RANK_THRESHOLD * RANK_THRESHOLD) * max_sv {
            return Err(GeomError::SingularConstraint { point: x.to_vec() });
        }
        gram.lu()
            .solve(rhs)
            .ok_or_else(|| GeomError::SingularConstraint { point: x.to_vec() })
    }

    /// Orthogonal projector onto the tangent space, without the
    /// on-manifold precondition. Used by the flow integrator at
    /// intermediate Runge-Kutta stages which sit slightly off M.
    pub fn projector_unchecked(&self, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        self.check_dim(x)?;
        let jac = self.constraint_jacobian(x);
        let mut proj = DMatrix::identity(self.ambient_dim, self.ambient_dim);
        // Pi = I - Jgᵀ (Jg Jgᵀ)⁻¹ Jg, one column of the correction at a time
        let gram = &jac * jac.transpose();
        let svd = gram.clone().svd(false, false);
        let max_sv = svd.singular_values.max();
        if max_sv <= 0.0 || svd.singular_values.min() < (RANK_THRESHOLD * RANK_THRESHOLD) * max_sv
        {
            return Err(GeomError::SingularConstraint { point: x.to_vec() });
        }
        let lu = gram.lu();
        let sol = lu
            .solve(&jac)
            .ok_or_else(|| GeomError::SingularConstraint { point: x.to_vec() })?;
        proj -= jac.transpose() * sol;
        Ok(proj)
    }

    /// Tangent projector at a point satisfying the constraints.
    pub fn tangent_projector(&self, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        self.check_dim(x)?;
        let res = self.constraint_residual(x).norm();
        if res > 10.0 * CONSTRAINT_TOL {
            return Err(GeomError::OutsideBasin {
                residual: res,
                basin: 10.0 * CONSTRAINT_TOL,
            });
        }
        self.projector_unchecked(x)
    }

    /// Newton iteration on g along the normal directions until
    /// `|g| <= CONSTRAINT_TOL`.
    pub fn retract(&self, x: &[f64]) -> Result<Vec<f64>, GeomError> {
        self.check_dim(x)?;
        let mut y = DVector::from_column_slice(x);
        let mut res = self.constraint_residual(y.as_slice());
        if res.norm() > RETRACTION_BASIN {
            return Err(GeomError::OutsideBasin {
                residual: res.norm(),
                basin: RETRACTION_BASIN,
            });
        }
        for _ in 0..RETRACTION_MAX_ITERS {
            if res.norm() <= CONSTRAINT_TOL {
                return Ok(y.as_slice().to_vec());
            }
            let jac = self.constraint_jacobian(y.as_slice());
            let lambda = self.solve_gram(&jac, &res, y.as_slice())?;
            y -= jac.transpose() * lambda;
            res = self.constraint_residual(y.as_slice());
            if !res.norm().is_finite() {
                break;
            }
        }
        Err(GeomError::RetractionFailure {
            point: y.as_slice().to_vec(),
            iters: RETRACTION_MAX_ITERS,
            residual: res.norm(),
        })
    }

    /// Orthonormal tangent basis (N x n), the eigenvectors of the tangent
    /// projector with unit eigenvalue.
    pub fn tangent_basis(&self, x: &[f64]) -> Result<DMatrix<f64>, GeomError> {
        let proj = self.projector_unchecked(x)?;
        let n = self.intrinsic_dim();
        let eig = nalgebra::SymmetricEigen::new(proj);
        // eigenvalues are ~0 or ~1; pick the top n deterministically
        let mut order: Vec<usize> = (0..self.ambient_dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut basis = DMatrix::zeros(self.ambient_dim, n);
        for (j, &idx) in order.iter().take(n).enumerate() {
            let mut col = eig.eigenvectors.column(idx).clone_owned();
            // pin sign: largest-magnitude component positive
            let lead = col.iter().cloned().fold(0.0f64, |acc, v| {
                if v.abs() > acc.abs() {
                    v
                } else {
                    acc
                }
            });
            if lead < 0.0 {
                col.neg_mut();
            }
            basis.set_column(j, &col);
        }
        Ok(basis)
    }
}

/// A smooth function restricted to an implicit manifold.
#[derive(Debug, Clone)]
pub struct RestrictedFunction {
    pub f: CompiledScalar,
    pub manifold: ImplicitManifold,
}

impl RestrictedFunction {
    pub fn new(f: Expr, manifold: ImplicitManifold) -> Self {
        let dim = manifold.ambient_dim;
        RestrictedFunction {
            f: CompiledScalar::new(f, dim),
            manifold,
        }
    }

    /// Negated copy, for the duality run against -f.
    pub fn negated(&self) -> Self {
        let neg = Expr::Sub(
            Box::new(Expr::Const(0.0)),
            Box::new(self.f.expr.clone()),
        );
        RestrictedFunction::new(neg, self.manifold.clone())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x)
    }

    /// Projected (ambient) gradient of f|M.
    pub fn restricted_gradient(&self, x: &[f64]) -> Result<DVector<f64>, GeomError> {
        let proj = self.manifold.projector_unchecked(x)?;
        Ok(proj * self.f.gradient(x))
    }

    /// Projected gradient, intrinsic Hessian in an orthonormal tangent
    /// basis, and that basis. The Hessian carries the Lagrange correction
    /// `Hf - sum_k lambda_k Hg_k` so that at critical points it is the
    /// intrinsic Hessian of f|M.
    pub fn restricted_grad_hess(
        &self,
        x: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), GeomError> {
        let m = &self.manifold;
        let jac = m.constraint_jacobian(x);
        let grad_f = self.f.gradient(x);
        let lambda = m.solve_gram(&jac, &(&jac * &grad_f), x)?;
        let mut h = self.f.hessian(x);
        for (k, g) in m.constraints.iter().enumerate() {
            h -= g.hessian(x) * lambda[k];
        }
        let basis = m.tangent_basis(x)?;
        let mut hess = basis.transpose() * h * &basis;
        let n = hess.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (hess[(i, j)] + hess[(j, i)]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let proj = m.projector_unchecked(x)?;
        Ok((proj * grad_f, hess, basis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sphere2() -> ImplicitManifold {
        ImplicitManifold::from_catalog(Catalog::Sphere(2)).unwrap()
    }

    fn torus() -> ImplicitManifold {
        ImplicitManifold::from_catalog(Catalog::Torus {
            big_r: 2.0,
            small_r: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn sphere_projector_at_pole() {
        let m = sphere2();
        let p = m.tangent_projector(&[0.0, 0.0, 1.0]).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn projector_idempotent_and_kills_normals() {
        let m = torus();
        let x = m.retract(&[3.0, 0.01, 0.02]).unwrap();
        let p = m.tangent_projector(&x).unwrap();
        assert!((&p * &p - &p).norm() < 1e-9);
        let jac = m.constraint_jacobian(&x);
        for k in 0..jac.nrows() {
            let normal = jac.row(k).transpose();
            assert!((&p * normal).norm() < 1e-9);
        }
    }

    #[test]
    fn torus_outer_equator_kernel_is_radial() {
        let m = torus();
        let p = m.tangent_projector(&[3.0, 0.0, 0.0]).unwrap();
        let radial = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((&p * &radial).norm() < 1e-9);
        // tangent directions survive
        let t1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let t2 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!((&p * &t1 - &t1).norm() < 1e-9);
        assert!((&p * &t2 - &t2).norm() < 1e-9);
    }

    #[test]
    fn projector_singular_at_origin() {
        let m = sphere2();
        assert!(matches!(
            m.projector_unchecked(&[0.0, 0.0, 0.0]),
            Err(GeomError::SingularConstraint { .. })
        ));
    }

    #[test]
    fn retract_sphere_radially() {
        let m = sphere2();
        let y = m.retract(&[0.0, 0.0, 1.1]).unwrap();
        assert_abs_diff_eq!(y[2], 1.0, epsilon = 1e-10);
        assert!(m.constraint_residual(&y).norm() <= CONSTRAINT_TOL);
    }

    #[test]
    fn retract_torus_small_displacement() {
        let m = torus();
        let base = [3.0, 0.0, 0.0];
        let off = [3.0 + 1e-3, 2e-4, -3e-4];
        let y = m.retract(&off).unwrap();
        assert!(m.constraint_residual(&y).norm() <= CONSTRAINT_TOL);
        let disp: f64 = off
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(disp <= 2e-3, "displacement {disp}");
        let _ = base;
    }

    #[test]
    fn retract_outside_basin_fails() {
        let m = sphere2();
        assert!(matches!(
            m.retract(&[0.0, 0.0, 5.0]),
            Err(GeomError::OutsideBasin { .. })
        ));
    }

    #[test]
    fn height_on_sphere_pole_hessian() {
        let m = sphere2();
        let f = expr::parse("x3", 3).unwrap();
        let rf = RestrictedFunction::new(f, m);
        let (grad, hess, _basis) = rf.restricted_grad_hess(&[0.0, 0.0, 1.0]).unwrap();
        assert!(grad.norm() < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(hess);
        for ev in eig.eigenvalues.iter() {
            assert_abs_diff_eq!(*ev, -1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn height_on_sphere_equator_gradient() {
        let m = sphere2();
        let f = expr::parse("x3", 3).unwrap();
        let rf = RestrictedFunction::new(f, m);
        let g = rf.restricted_gradient(&[1.0, 0.0, 0.0]).unwrap();
        assert!((g - DVector::from_vec(vec![0.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn restricted_gradient_matches_finite_difference() {
        let m = torus();
        let f = expr::parse("x3 + 0.1*x1", 3).unwrap();
        let rf = RestrictedFunction::new(f, m);
        let x = rf.manifold.retract(&[2.6, 1.1, 0.4]).unwrap();
        let basis = rf.manifold.tangent_basis(&x).unwrap();
        let grad = rf.restricted_gradient(&x).unwrap();
        let h = 1e-6;
        for j in 0..basis.ncols() {
            let v = basis.column(j);
            let xp: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(v.iter()).map(|(a, b)| a - h * b).collect();
            let fp = rf.value(&rf.manifold.retract(&xp).unwrap());
            let fm = rf.value(&rf.manifold.retract(&xm).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            let sym = grad.dot(&v);
            assert!((fd - sym).abs() <= 1e-6, "fd {fd} vs {sym}");
        }
    }

    #[test]
    fn product_catalog_concatenates() {
        let cat = Catalog::Product(vec![Catalog::Sphere(2), Catalog::Sphere(2)]);
        assert_eq!(cat.ambient_dim(), 6);
        assert_eq!(cat.intrinsic_dim(), 4);
        assert_eq!(cat.reference_betti(), vec![1, 0, 2, 0, 1]);
        let m = ImplicitManifold::from_catalog(cat).unwrap();
        let x = [0.0, 0.0, 1.0, 0.0, 0.0, -1.0];
        assert!(m.constraint_residual(&x).norm() < 1e-14);
        assert_eq!(m.intrinsic_dim(), 4);
    }
}
