//! Tangent affine flats, subspace pencils, and the reduction of tangent
//! l-planes to tangent hyperplanes of restricted bodies.

use nalgebra::{DMatrix, DVector};

use crate::body::RadialBody;
use crate::error::{Result, TansecError};
use crate::frame::{boundary_frame, BoundaryFrame};
use crate::geometry::{check_orthonormal, tangency_direction_grid, UnitVector};

/// Affine l-flat given by a base point and an orthonormal basis, embedded
/// in the ambient space.
#[derive(Debug, Clone)]
pub struct AffineFlat {
    pub base: DVector<f64>,
    pub basis: Vec<DVector<f64>>,
    pub ambient_dim: usize,
}

impl AffineFlat {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Family of linear (l+1)-subspaces containing a fixed linear l-subspace.
/// For l = d-1 the family degenerates to the single subspace R^d.
#[derive(Debug, Clone)]
pub struct SubspacePencil {
    ambient_dim: usize,
    fixed: Option<DMatrix<f64>>,
    rotation_samples: usize,
}

impl SubspacePencil {
    /// The degenerate pencil for l = d-1: one subspace, all of R^d.
    pub fn full(d: usize) -> Self {
        SubspacePencil { ambient_dim: d, fixed: None, rotation_samples: 1 }
    }

    /// Pencil about the fixed l-subspace spanned by the orthonormal columns
    /// of `fixed`.
    pub fn about(fixed: DMatrix<f64>, rotation_samples: usize) -> Result<Self> {
        check_orthonormal(&fixed, 1e-10)?;
        if rotation_samples == 0 {
            return Err(TansecError::Config("pencil needs at least one rotation".into()));
        }
        Ok(SubspacePencil {
            ambient_dim: fixed.nrows(),
            fixed: Some(fixed),
            rotation_samples,
        })
    }

    /// Pencil about the coordinate subspace spanned by axes [d-l .. d-1]
    /// (for d=3, l=1 this is the pencil about span(e3)).
    pub fn about_last_axes(d: usize, l: usize, rotation_samples: usize) -> Result<Self> {
        if l + 1 == d {
            return Ok(Self::full(d));
        }
        let mut fixed = DMatrix::zeros(d, l);
        for j in 0..l {
            fixed[(d - l + j, j)] = 1.0;
        }
        Self::about(fixed, rotation_samples)
    }

    pub fn subspace_dim(&self) -> usize {
        match &self.fixed {
            None => self.ambient_dim,
            Some(f) => f.ncols() + 1,
        }
    }

    /// Orthonormal bases (d x (l+1)) of the sampled subspaces L in the
    /// pencil.
    pub fn subspaces(&self) -> Vec<DMatrix<f64>> {
        let d = self.ambient_dim;
        let fixed = match &self.fixed {
            None => return vec![DMatrix::identity(d, d)],
            Some(f) => f,
        };
        let l = fixed.ncols();
        // Orthonormal complement of the fixed subspace.
        let mut comp: Vec<DVector<f64>> = Vec::with_capacity(d - l);
        for i in 0..d {
            if comp.len() == d - l {
                break;
            }
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            for j in 0..l {
                let col = fixed.column(j).into_owned();
                let p = col.dot(&e);
                e -= col * p;
            }
            for b in &comp {
                let p = b.dot(&e);
                e -= b * p;
            }
            let n = e.norm();
            if n > 1e-8 {
                comp.push(e / n);
            }
        }
        let comp_dim = comp.len();
        // Directions in the complement, modulo sign: half circle for
        // comp_dim = 2, a direction grid otherwise.
        let rot_dirs: Vec<DVector<f64>> = if comp_dim == 1 {
            vec![DVector::from_column_slice(&[1.0])]
        } else if comp_dim == 2 {
            (0..self.rotation_samples)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / self.rotation_samples as f64;
                    DVector::from_column_slice(&[th.cos(), th.sin()])
                })
                .collect()
        } else {
            tangency_direction_grid(comp_dim, self.rotation_samples, 17)
                .into_iter()
                .map(|u| u.as_vector().clone())
                .collect()
        };
        rot_dirs
            .into_iter()
            .map(|w| {
                let mut basis = DMatrix::zeros(d, l + 1);
                for j in 0..l {
                    basis.set_column(j, &fixed.column(j));
                }
                let mut last = DVector::zeros(d);
                for (i, q) in comp.iter().enumerate() {
                    last += q * w[i];
                }
                basis.set_column(l, &last);
                basis
            })
            .collect()
    }
}

/// Tangent l-flat of K, realized inside lin Y: carries the containing
/// subspace, the boundary frame of the restricted body, and the embedded
/// flat.
#[derive(Debug, Clone)]
pub struct TangentFlat {
    pub id: usize,
    /// Ambient tangency direction u.
    pub direction: UnitVector,
    /// d x (l+1) orthonormal basis of lin Y.
    pub subspace: DMatrix<f64>,
    /// Tangency direction in subspace coordinates.
    pub local_direction: UnitVector,
    /// Frame of K cap lin Y at the tangency point, in subspace coordinates.
    pub frame: BoundaryFrame,
    /// The flat embedded in the ambient space.
    pub flat: AffineFlat,
}

/// Tangent l-flats of `body` generated from a pencil: for each subspace L
/// in the pencil, tangent hyperplanes of K cap L at a grid of directions,
/// embedded into the ambient space.
pub fn tangent_flats(
    body: &RadialBody,
    l: usize,
    pencil: &SubspacePencil,
    per_subspace_samples: usize,
) -> Result<Vec<TangentFlat>> {
    let d = body.dim();
    if l < 1 || l > d - 1 {
        return Err(TansecError::Config(format!("l = {l} out of range for d = {d}")));
    }
    if pencil.subspace_dim() != l + 1 {
        return Err(TansecError::Config(format!(
            "pencil subspace dimension {} does not match l+1 = {}",
            pencil.subspace_dim(),
            l + 1
        )));
    }
    let mut flats = Vec::new();
    for sub in pencil.subspaces() {
        let restricted = body.restrict(&sub)?;
        let dirs = tangency_direction_grid(l + 1, per_subspace_samples, 23);
        for v in dirs {
            let fr = boundary_frame(&restricted, &v)?;
            let base = &sub * &fr.point;
            let basis = fr
                .tangent_basis
                .iter()
                .map(|e| &sub * e)
                .collect::<Vec<_>>();
            let direction = UnitVector::new(&sub * v.as_vector())?;
            flats.push(TangentFlat {
                id: flats.len(),
                direction,
                subspace: sub.clone(),
                local_direction: v,
                frame: fr,
                flat: AffineFlat { base, basis, ambient_dim: d },
            });
        }
    }
    Ok(flats)
}

/// Tangent hyperplane flats (l = d-1) at an explicit direction set. Used
/// when the grid must be closed under an isometry, e.g. for symmetry
/// certificates.
pub fn hyperplane_flats_at(body: &RadialBody, directions: &[UnitVector]) -> Result<Vec<TangentFlat>> {
    let d = body.dim();
    let identity = DMatrix::identity(d, d);
    let mut flats = Vec::with_capacity(directions.len());
    for v in directions {
        let fr = boundary_frame(body, v)?;
        flats.push(TangentFlat {
            id: flats.len(),
            direction: v.clone(),
            subspace: identity.clone(),
            local_direction: v.clone(),
            flat: AffineFlat {
                base: fr.point.clone(),
                basis: fr.tangent_basis.clone(),
                ambient_dim: d,
            },
            frame: fr,
        });
    }
    Ok(flats)
}

/// Dimension bookkeeping for the pencil construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ManifoldReport {
    pub d: usize,
    pub l: usize,
    /// d - l - 1, the pencil parameter dimension.
    pub pencil_dim: usize,
    /// l, the tangency dimension within one subspace.
    pub tangency_dim: usize,
    /// pencil_dim + (l+1) - 1 = d - 1.
    pub total_dim: usize,
    /// (l+1)(d-l) - 1, dimension of all tangent affine l-planes.
    pub full_grassmannian_dim: usize,
}

pub fn flat_count_manifold_check(d: usize, l: usize) -> ManifoldReport {
    ManifoldReport {
        d,
        l,
        pencil_dim: d - l - 1,
        tangency_dim: l,
        total_dim: (d - l - 1) + (l + 1) - 1,
        full_grassmannian_dim: (l + 1) * (d - l) - 1,
    }
}

/// Max violation of the support property of a tangent hyperplane flat over
/// a dense boundary grid of the restricted body (negative means supported).
pub fn support_defect(flat: &TangentFlat, body: &RadialBody, grid: usize) -> Result<f64> {
    let restricted = body.restrict(&flat.subspace)?;
    let n = restricted.dim();
    let plane_level = flat.frame.normal.dot(&flat.frame.point);
    let mut max_excess = f64::NEG_INFINITY;
    for u in tangency_direction_grid(n, grid, 29) {
        let p = restricted.boundary_point(&u);
        max_excess = max_excess.max(flat.frame.normal.dot(&p) - plane_level);
    }
    Ok(max_excess)
}
