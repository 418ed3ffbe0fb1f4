//! Radial-function bodies and one-parameter perturbation families.
//!
//! A body is star-shaped about the origin and represented by its radial
//! function rho on the unit sphere. Built-in kinds (ball, ellipsoid,
//! smooth star) carry enough structure for analytic normals where
//! possible; everything else goes through finite differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Result, TansecError};
use crate::geometry::{check_orthonormal, tangency_direction_grid, UnitVector};

/// Step used for t-derivatives of a family.
pub const TIME_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Ball,
    Ellipsoid,
    SmoothStar,
}

/// One additive term of a smooth-star radial function: coef * u[axis]^power.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coef: f64,
    pub axis: usize,
    pub power: u32,
}

#[derive(Debug, Clone)]
enum Shape {
    Ball { radius: f64 },
    /// {x : x^T A x <= 1}; axis-aligned ellipsoids use A = diag(1/a_i^2),
    /// restrictions may produce dense A.
    QuadForm { a: DMatrix<f64> },
    SmoothStar { r0: f64, terms: Vec<PolyTerm> },
    /// Restriction of a parent body to a linear subspace with orthonormal
    /// basis `embed` (columns).
    Restricted { parent: Arc<RadialBody>, embed: DMatrix<f64> },
}

/// Convex body of class C^2_+ given by its radial function.
#[derive(Debug, Clone)]
pub struct RadialBody {
    dim: usize,
    kind: BodyKind,
    shape: Shape,
}

impl RadialBody {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim < 2 || radius <= 0.0 {
            return Err(TansecError::Config("ball needs dim >= 2, radius > 0".into()));
        }
        Ok(RadialBody { dim, kind: BodyKind::Ball, shape: Shape::Ball { radius } })
    }

    pub fn ellipsoid(semiaxes: &[f64]) -> Result<Self> {
        if semiaxes.len() < 2 || semiaxes.iter().any(|&a| a <= 0.0) {
            return Err(TansecError::Config("ellipsoid needs >= 2 positive semiaxes".into()));
        }
        let dim = semiaxes.len();
        let a = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            semiaxes.iter().map(|&ai| 1.0 / (ai * ai)),
        ));
        Ok(RadialBody { dim, kind: BodyKind::Ellipsoid, shape: Shape::QuadForm { a } })
    }

    /// Smooth star body rho(u) = r0 + sum coef_j * u[axis_j]^power_j.
    /// Rejects inputs that fail the C^2_+ eigenvalue scan over a direction
    /// grid.
    pub fn smooth_star(dim: usize, r0: f64, terms: Vec<PolyTerm>) -> Result<Self> {
        if dim < 2 || r0 <= 0.0 {
            return Err(TansecError::Config("smooth star needs dim >= 2, r0 > 0".into()));
        }
        for t in &terms {
            if t.axis >= dim {
                return Err(TansecError::Config(format!(
                    "term axis {} out of range for dimension {}",
                    t.axis, dim
                )));
            }
        }
        let body = RadialBody { dim, kind: BodyKind::SmoothStar, shape: Shape::SmoothStar { r0, terms } };
        body.validate_convexity()?;
        Ok(body)
    }

    fn validate_convexity(&self) -> Result<()> {
        let grid = tangency_direction_grid(self.dim, if self.dim == 2 { 64 } else { 128 }, 7);
        for u in &grid {
            if self.rho(u.as_vector()) <= 0.0 {
                return Err(TansecError::Config("radial function not positive".into()));
            }
            crate::frame::boundary_frame(self, u)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> BodyKind {
        self.kind
    }

    /// Radial function at a direction (not necessarily normalized input).
    pub fn rho(&self, u: &DVector<f64>) -> f64 {
        let n = u.norm();
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::QuadForm { a } => {
                let q = (u.transpose() * a * u)[(0, 0)] / (n * n);
                1.0 / q.sqrt()
            }
            Shape::SmoothStar { r0, terms } => {
                let mut v = *r0;
                for t in terms {
                    v += t.coef * (u[t.axis] / n).powi(t.power as i32);
                }
                v
            }
            Shape::Restricted { parent, embed } => parent.rho(&(embed * u)),
        }
    }

    /// Boundary point rho(u) u.
    pub fn boundary_point(&self, u: &UnitVector) -> DVector<f64> {
        u.as_vector() * self.rho(u.as_vector())
    }

    /// Outward unit normal, analytic for ball/ellipsoid kinds.
    pub(crate) fn analytic_normal(&self, u: &UnitVector) -> Option<DVector<f64>> {
        match &self.shape {
            Shape::Ball { .. } => Some(u.as_vector().clone()),
            Shape::QuadForm { a } => {
                let x = self.boundary_point(u);
                let g = a * x;
                let n = g.norm();
                Some(g / n)
            }
            Shape::Restricted { parent, embed } => {
                // The in-subspace normal is the projection of the parent
                // gradient, which for quadratic forms is again analytic.
                match &parent.shape {
                    Shape::Ball { .. } => Some(u.as_vector().clone()),
                    Shape::QuadForm { a } => {
                        let sub = embed.transpose() * a * embed;
                        let x = self.boundary_point(u);
                        let g = sub * x;
                        let n = g.norm();
                        Some(g / n)
                    }
                    _ => None,
                }
            }
            Shape::SmoothStar { .. } => None,
        }
    }

    /// For ball/ellipsoid kinds the quadratic form defining the body, used
    /// for analytic curvature.
    pub(crate) fn quad_form(&self) -> Option<DMatrix<f64>> {
        match &self.shape {
            Shape::Ball { radius } => {
                Some(DMatrix::identity(self.dim, self.dim) / (radius * radius))
            }
            Shape::QuadForm { a } => Some(a.clone()),
            Shape::Restricted { parent, embed } => parent
                .quad_form()
                .map(|a| embed.transpose() * a * embed),
            Shape::SmoothStar { .. } => None,
        }
    }

    /// Restriction to the linear subspace spanned by the orthonormal
    /// columns of `embed`.
    pub fn restrict(&self, embed: &DMatrix<f64>) -> Result<RadialBody> {
        check_orthonormal(embed, 1e-10)?;
        if embed.nrows() != self.dim {
            return Err(TansecError::BadSubspace(f64::NAN));
        }
        let sub_dim = embed.ncols();
        let shape = match &self.shape {
            Shape::Ball { radius } => Shape::Ball { radius: *radius },
            Shape::QuadForm { a } => Shape::QuadForm { a: embed.transpose() * a * embed },
            _ => Shape::Restricted { parent: Arc::new(self.clone()), embed: embed.clone() },
        };
        Ok(RadialBody { dim: sub_dim, kind: self.kind, shape })
    }
}

/// First-order perturbation speed h(u) >= 0 with rho^t = rho + t h.
#[derive(Debug, Clone)]
pub enum Speed {
    /// h(u) = c
    Constant(f64),
    /// h(u) = lambda * rho(u), i.e. rho^t = rho (1 + lambda t)
    RadialMultiple(f64),
    /// h(u) = c0 + sum coef_j u[axis_j]^power_j
    Poly { c0: f64, terms: Vec<PolyTerm> },
    /// Speed of a restricted family, evaluated through the embedding.
    Restricted { parent: Box<Speed>, embed: DMatrix<f64> },
}

impl Speed {
    fn eval(&self, body: &RadialBody, u: &DVector<f64>) -> f64 {
        self.eval_dir(body, u, u)
    }

    // `local_u` stays in the coordinates of `body`; `dir` accumulates the
    // embeddings so Poly terms read ambient coordinates. rho of a restriction
    // agrees with the parent on embedded directions, so RadialMultiple can
    // always evaluate through the local body.
    fn eval_dir(&self, body: &RadialBody, local_u: &DVector<f64>, dir: &DVector<f64>) -> f64 {
        match self {
            Speed::Constant(c) => *c,
            Speed::RadialMultiple(l) => l * body.rho(local_u),
            Speed::Poly { c0, terms } => {
                let n = dir.norm();
                let mut v = *c0;
                for t in terms {
                    v += t.coef * (dir[t.axis] / n).powi(t.power as i32);
                }
                v
            }
            Speed::Restricted { parent, embed } => {
                parent.eval_dir(body, local_u, &(embed * dir))
            }
        }
    }
}

/// One-parameter family rho^t = rho + t h with h >= 0 of class C^2.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    base: RadialBody,
    speed: Speed,
    /// Optional second-order term r(u): rho^t = rho + t h + t^2 r. It does
    /// not affect the first-order limits; carried to exercise exactly that.
    second: Option<Speed>,
}

impl PerturbationFamily {
    pub fn new(base: RadialBody, speed: Speed) -> Result<Self> {
        let fam = PerturbationFamily { base, speed, second: None };
        fam.validate()?;
        Ok(fam)
    }

    /// Same family with a second-order term added.
    pub fn with_second_order(mut self, second: Speed) -> Self {
        self.second = Some(second);
        self
    }

    fn validate(&self) -> Result<()> {
        let grid = tangency_direction_grid(self.base.dim, 64, 11);
        for u in &grid {
            let h = self.speed_at(u.as_vector());
            if h < -1e-9 {
                return Err(TansecError::NegativeSpeed(h));
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &RadialBody {
        &self.base
    }

    /// rho^t(u)
    pub fn rho_t(&self, u: &DVector<f64>, t: f64) -> f64 {
        let second = self
            .second
            .as_ref()
            .map_or(0.0, |r| t * t * r.eval(&self.base, u));
        self.base.rho(u) + t * self.speed_at(u) + second
    }

    /// (d rho^t / dt)|_{t=0} = h(u); analytic for the affine-in-t families.
    pub fn speed_at(&self, u: &DVector<f64>) -> f64 {
        self.speed.eval(&self.base, u)
    }

    /// Finite-difference time derivative, the independent route used by the
    /// oracle tests.
    pub fn speed_fd(&self, u: &DVector<f64>) -> f64 {
        (self.rho_t(u, TIME_STEP) - self.rho_t(u, 0.0)) / TIME_STEP
    }

    pub fn restrict(&self, embed: &DMatrix<f64>) -> Result<PerturbationFamily> {
        let base = self.base.restrict(embed)?;
        let restrict_speed = |s: &Speed| match s {
            Speed::Constant(c) => Speed::Constant(*c),
            Speed::RadialMultiple(l) => Speed::RadialMultiple(*l),
            other => Speed::Restricted { parent: Box::new(other.clone()), embed: embed.clone() },
        };
        Ok(PerturbationFamily {
            base,
            speed: restrict_speed(&self.speed),
            second: self.second.as_ref().map(restrict_speed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ellipsoid_radial_function() {
        let e = RadialBody::ellipsoid(&[2.0, 1.0]).unwrap();
        let u = DVector::from_column_slice(&[1.0, 0.0]);
        assert_relative_eq!(e.rho(&u), 2.0, epsilon = 1e-14);
        let u = DVector::from_column_slice(&[0.0, 3.0]);
        assert_relative_eq!(e.rho(&u), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn coordinate_plane_restriction_is_sub_ellipsoid() {
        let e = RadialBody::ellipsoid(&[1.0, 1.2, 1.5]).unwrap();
        let embed = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let r = e.restrict(&embed).unwrap();
        let sub = RadialBody::ellipsoid(&[1.0, 1.5]).unwrap();
        for i in 0..64 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
            let v = DVector::from_column_slice(&[th.cos(), th.sin()]);
            assert_relative_eq!(r.rho(&v), sub.rho(&v), epsilon = 1e-12);
        }
    }

    #[test]
    fn oblique_restriction_matches_parent_rho() {
        let e = RadialBody::ellipsoid(&[1.0, 1.2, 1.5]).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        let embed = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, s, s]);
        let r = e.restrict(&embed).unwrap();
        for i in 0..64 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
            let v = DVector::from_column_slice(&[th.cos(), th.sin()]);
            let ambient = &embed * &v;
            assert_relative_eq!(r.rho(&v), e.rho(&ambient), epsilon = 1e-12);
        }
    }

    #[test]
    fn family_monotone_in_t() {
        let body = RadialBody::ball(3, 1.0).unwrap();
        let fam = PerturbationFamily::new(
            body,
            Speed::Poly {
                c0: 0.3,
                terms: vec![PolyTerm { coef: 0.1, axis: 0, power: 2 }],
            },
        )
        .unwrap();
        let grid = tangency_direction_grid(3, 64, 3);
        for u in &grid {
            let d = fam.rho_t(u.as_vector(), 1e-3) - fam.rho_t(u.as_vector(), 0.0);
            assert!(d >= -1e-9);
        }
    }

    #[test]
    fn negative_speed_rejected() {
        let body = RadialBody::ball(2, 1.0).unwrap();
        let err = PerturbationFamily::new(body, Speed::Constant(-0.1));
        assert!(matches!(err, Err(TansecError::NegativeSpeed(_))));
    }

    #[test]
    fn nonconvex_star_rejected() {
        // Large quartic coefficient destroys positive curvature.
        let err = RadialBody::smooth_star(
            2,
            1.0,
            vec![PolyTerm { coef: 0.9, axis: 0, power: 4 }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn mild_star_accepted() {
        let body = RadialBody::smooth_star(
            3,
            1.0,
            vec![PolyTerm { coef: 0.05, axis: 0, power: 2 }],
        )
        .unwrap();
        assert_eq!(body.kind(), BodyKind::SmoothStar);
    }
}
