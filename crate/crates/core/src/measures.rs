//! Intrinsic volumes and the generalized monotone functionals evaluated on
//! convex samples and on reference ellipsoids.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TansecError};
use crate::frame::DupinForm;
use crate::geometry::{
    direction_grid, gauss_legendre, random_subspace, seeded_rng, sphere_mean_quadrature,
    unit_ball_intrinsic_volume, unit_ball_volume,
};
use crate::sample::{sample_star_body, ConvexSample};

const KUBOTA_SUBSPACES: usize = 384;
const REJECTION_SAMPLES: usize = 200_000;
const QUADRATURE_RESOLUTION: usize = 48;
// Relative duality-gap target for the MVEE iteration. Below ~1e-6 the
// away-step updates cycle among numerically degenerate support points; 1e-5
// already bounds the relative volume error by about the same amount.
pub const JOHN_TOL: f64 = 1e-5;

/// Monotone k-homogeneous functional kinds of the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    IntrinsicVolume,
    MeanWidthPower,
    JohnEllipsoidVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalDescriptor {
    pub kind: FunctionalKind,
    /// Degree of positive homogeneity.
    pub k: usize,
}

impl FunctionalDescriptor {
    pub fn intrinsic(k: usize) -> Self {
        FunctionalDescriptor { kind: FunctionalKind::IntrinsicVolume, k }
    }
}

/// Axis-aligned reference ellipsoid (center irrelevant for intrinsic
/// volumes).
#[derive(Debug, Clone)]
pub struct EllipsoidSpec {
    pub semiaxes: Vec<f64>,
}

impl EllipsoidSpec {
    pub fn from_dupin(dupin: &DupinForm) -> Self {
        EllipsoidSpec { semiaxes: dupin.semiaxes.clone() }
    }

    pub fn dim(&self) -> usize {
        self.semiaxes.len()
    }
}

/// Value with the standard error of its Monte Carlo part (zero when the
/// evaluation is deterministic quadrature or an exact hull).
#[derive(Debug, Clone, Copy)]
pub struct Measured {
    pub value: f64,
    pub stderr: f64,
}

impl Measured {
    fn exact(value: f64) -> Self {
        Measured { value, stderr: 0.0 }
    }
}

/// V_k of a convex sample. Exact hull formulas for k = m <= 3, mean-width
/// quadrature for k = 1, Cauchy-Kubota projection averaging in between,
/// rejection sampling above dimension 3.
pub fn intrinsic_volume_measured(sample: &ConvexSample, k: usize) -> Result<Measured> {
    let m = sample.dim;
    if k < 1 || k > m {
        return Err(TansecError::DimensionMismatch { expected: m, got: k });
    }
    if sample.degenerate {
        return Ok(Measured::exact(0.0));
    }
    if k == m {
        return hull_volume(sample);
    }
    if k == 1 {
        return Ok(Measured::exact(mean_width_v1(sample)));
    }
    if m == 3 && k == 2 {
        if let Some(faces) = sample.faces.as_ref() {
            // V_2 = surface area / 2; the star triangulation inscribes the
            // boundary with only second-order area deficit, far better than
            // hull-of-projections on flat cap bodies.
            let mut area = 0.0;
            for f in faces {
                let p = &sample.boundary[f[0]];
                let q = &sample.boundary[f[1]] - p;
                let r = &sample.boundary[f[2]] - p;
                area += q.cross(&r).norm();
            }
            return Ok(Measured::exact(area / 4.0));
        }
    }
    kubota_projection_volume(sample, k)
}

pub fn intrinsic_volume(sample: &ConvexSample, k: usize) -> Result<f64> {
    intrinsic_volume_measured(sample, k).map(|m| m.value)
}

fn hull_volume(sample: &ConvexSample) -> Result<Measured> {
    let m = sample.dim;
    match m {
        1 => {
            let hi = sample.boundary.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
            let lo = sample.boundary.iter().map(|p| p[0]).fold(f64::MAX, f64::min);
            Ok(Measured::exact((hi - lo).max(0.0)))
        }
        2 => {
            // boundary points are ordered by ray angle: shoelace about the anchor
            let a = &sample.anchor;
            let n = sample.boundary.len();
            let mut area = 0.0;
            for i in 0..n {
                let p = &sample.boundary[i] - a;
                let q = &sample.boundary[(i + 1) % n] - a;
                area += p[0] * q[1] - p[1] * q[0];
            }
            Ok(Measured::exact(area.abs() / 2.0))
        }
        3 => {
            let faces = sample
                .faces
                .as_ref()
                .ok_or_else(|| TansecError::Config("3d sample without triangulation".into()))?;
            let a = &sample.anchor;
            let mut vol = 0.0;
            for f in faces {
                let p = &sample.boundary[f[0]] - a;
                let q = &sample.boundary[f[1]] - a;
                let r = &sample.boundary[f[2]] - a;
                let det = p[0] * (q[1] * r[2] - q[2] * r[1])
                    - p[1] * (q[0] * r[2] - q[2] * r[0])
                    + p[2] * (q[0] * r[1] - q[1] * r[0]);
                vol += det.abs();
            }
            Ok(Measured::exact(vol / 6.0))
        }
        _ => rejection_volume(sample),
    }
}

/// Seeded rejection sampling against the halfspaces carried by the support
/// values of the sample's own direction grid.
fn rejection_volume(sample: &ConvexSample) -> Result<Measured> {
    let m = sample.dim;
    let dirs = &sample.dirs;
    let supports: Vec<f64> = dirs.iter().map(|v| sample.support(v)).collect();
    let mut lo = vec![f64::MAX; m];
    let mut hi = vec![f64::MIN; m];
    for p in &sample.boundary {
        for i in 0..m {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let mut box_vol = 1.0;
    for i in 0..m {
        box_vol *= hi[i] - lo[i];
    }
    let mut rng = seeded_rng(&[0xca11, m as u64, sample.boundary.len() as u64]);
    let mut hits = 0usize;
    for _ in 0..REJECTION_SAMPLES {
        let p = DVector::from_fn(m, |i, _| rng.gen_range(lo[i]..hi[i]));
        let inside = dirs
            .iter()
            .zip(&supports)
            .all(|(v, h)| p.dot(v) <= *h + 1e-12);
        if inside {
            hits += 1;
        }
    }
    let frac = hits as f64 / REJECTION_SAMPLES as f64;
    let value = box_vol * frac;
    let stderr = box_vol * (frac * (1.0 - frac) / REJECTION_SAMPLES as f64).sqrt();
    Ok(Measured { value, stderr })
}

/// V_1 from the mean width: V_1 = m kappa_m / (2 kappa_{m-1}) * mean(h(u)+h(-u)).
fn mean_width_v1(sample: &ConvexSample) -> f64 {
    let m = sample.dim;
    if m == 1 {
        let hi = sample.boundary.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
        let lo = sample.boundary.iter().map(|p| p[0]).fold(f64::MAX, f64::min);
        return (hi - lo).max(0.0);
    }
    let (dirs, w) = sphere_mean_quadrature(m, QUADRATURE_RESOLUTION);
    let mean_width: f64 = dirs
        .iter()
        .zip(&w)
        .map(|(v, w)| w * (sample.support(v) + sample.support(&-v)))
        .sum();
    m as f64 * unit_ball_volume(m) / (2.0 * unit_ball_volume(m - 1)) * mean_width
}

/// Cauchy-Kubota projection averaging over seeded uniform k-subspaces,
/// normalized so the unit ball reproduces C(m,k) kappa_m / kappa_{m-k}.
fn kubota_projection_volume(sample: &ConvexSample, k: usize) -> Result<Measured> {
    let m = sample.dim;
    let mut rng = seeded_rng(&[0x6b75, m as u64, k as u64]);
    let mut values = Vec::with_capacity(KUBOTA_SUBSPACES);
    for _ in 0..KUBOTA_SUBSPACES {
        let w = random_subspace(m, k, &mut rng);
        let projected: Vec<DVector<f64>> = sample
            .boundary
            .iter()
            .map(|p| w.transpose() * p)
            .collect();
        values.push(point_cloud_volume(&projected, k)?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n * (n - 1.0));
    let constant = unit_ball_intrinsic_volume(m, k) / unit_ball_volume(k);
    Ok(Measured { value: constant * mean, stderr: constant * var.sqrt() })
}

/// k-volume of the convex hull of a point cloud, k <= 3.
fn point_cloud_volume(points: &[DVector<f64>], k: usize) -> Result<f64> {
    match k {
        1 => {
            let hi = points.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
            let lo = points.iter().map(|p| p[0]).fold(f64::MAX, f64::min);
            Ok((hi - lo).max(0.0))
        }
        2 => Ok(convex_hull_area_2d(points)),
        3 => {
            // Halfspace surrogate from a fixed direction grid plus seeded MC.
            let dirs = direction_grid(3, 320, 3);
            let supports: Vec<f64> = dirs
                .iter()
                .map(|v| points.iter().map(|p| p.dot(v)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let mut lo = [f64::MAX; 3];
            let mut hi = [f64::MIN; 3];
            for p in points {
                for i in 0..3 {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
            let box_vol: f64 = (0..3).map(|i| hi[i] - lo[i]).product();
            if box_vol <= 0.0 {
                return Ok(0.0);
            }
            let mut rng = seeded_rng(&[0x3d, points.len() as u64]);
            let n = 20_000;
            let mut hits = 0usize;
            for _ in 0..n {
                let p = DVector::from_fn(3, |i, _| rng.gen_range(lo[i]..hi[i]));
                if dirs.iter().zip(&supports).all(|(v, h)| p.dot(v) <= *h + 1e-12) {
                    hits += 1;
                }
            }
            Ok(box_vol * hits as f64 / n as f64)
        }
        _ => Err(TansecError::DimensionMismatch { expected: 3, got: k }),
    }
}

/// Andrew monotone chain hull area.
pub fn convex_hull_area_2d(points: &[DVector<f64>]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().chain(pts.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    let n = hull.len();
    if n < 3 {
        return 0.0;
    }
    let mut area = 0.0;
    for i in 0..n {
        let p = hull[i];
        let q = hull[(i + 1) % n];
        area += p.0 * q.1 - p.1 * q.0;
    }
    area.abs() / 2.0
}

/// V_k of an axis-aligned ellipsoid: exact for k = m, deterministic width
/// quadrature for k = 1, exact projection determinants averaged over
/// seeded subspaces otherwise.
pub fn ellipsoid_intrinsic_volume(spec: &EllipsoidSpec, k: usize) -> Result<Measured> {
    let m = spec.dim();
    if k < 1 || k > m {
        return Err(TansecError::DimensionMismatch { expected: m, got: k });
    }
    if k == m {
        return Ok(Measured::exact(
            unit_ball_volume(m) * spec.semiaxes.iter().product::<f64>(),
        ));
    }
    if k == 1 {
        if m == 1 {
            return Ok(Measured::exact(2.0 * spec.semiaxes[0]));
        }
        let (dirs, w) = sphere_mean_quadrature(m, 4 * QUADRATURE_RESOLUTION);
        let mean_h: f64 = dirs
            .iter()
            .zip(&w)
            .map(|(v, w)| {
                let h: f64 = v
                    .iter()
                    .zip(&spec.semiaxes)
                    .map(|(vi, a)| a * a * vi * vi)
                    .sum::<f64>()
                    .sqrt();
                w * h
            })
            .sum();
        return Ok(Measured::exact(
            m as f64 * unit_ball_volume(m) / unit_ball_volume(m - 1) * mean_h,
        ));
    }
    // Kubota with exact projection volumes: kappa_k sqrt(det(W^T A^2 W)).
    let a2 = DMatrix::from_diagonal(&DVector::from_iterator(
        m,
        spec.semiaxes.iter().map(|a| a * a),
    ));
    let mut rng = seeded_rng(&[0xe111, m as u64, k as u64]);
    let samples = 4 * KUBOTA_SUBSPACES;
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let w = random_subspace(m, k, &mut rng);
        let g = w.transpose() * &a2 * &w;
        values.push(unit_ball_volume(k) * g.determinant().max(0.0).sqrt());
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n * (n - 1.0));
    let constant = unit_ball_intrinsic_volume(m, k) / unit_ball_volume(k);
    Ok(Measured { value: constant * mean, stderr: constant * var.sqrt() })
}

/// Evaluate a registry functional on a sample.
pub fn functional_value(sample: &ConvexSample, f: &FunctionalDescriptor) -> Result<Measured> {
    match f.kind {
        FunctionalKind::IntrinsicVolume => intrinsic_volume_measured(sample, f.k),
        FunctionalKind::MeanWidthPower => {
            if sample.degenerate {
                return Ok(Measured::exact(0.0));
            }
            let v1 = intrinsic_volume_measured(sample, 1)?;
            Ok(Measured::exact(v1.value.powi(f.k as i32)))
        }
        FunctionalKind::JohnEllipsoidVolume => {
            if f.k != sample.dim && !sample.degenerate {
                return Err(TansecError::UnsupportedCombination(format!(
                    "john_ellipsoid_volume needs k = sample dim ({}), got k = {}",
                    sample.dim, f.k
                )));
            }
            if sample.degenerate {
                return Ok(Measured::exact(0.0));
            }
            Ok(Measured::exact(john_ellipsoid_volume(sample)?))
        }
    }
}

/// Value of a registry functional on the Dupin hull E, the reference factor
/// in the limit inversions.
pub fn functional_of_dupin(dupin: &DupinForm, f: &FunctionalDescriptor) -> Result<f64> {
    let spec = EllipsoidSpec::from_dupin(dupin);
    match f.kind {
        FunctionalKind::IntrinsicVolume => Ok(ellipsoid_intrinsic_volume(&spec, f.k)?.value),
        FunctionalKind::MeanWidthPower => {
            let v1 = ellipsoid_intrinsic_volume(&spec, 1)?.value;
            Ok(v1.powi(f.k as i32))
        }
        FunctionalKind::JohnEllipsoidVolume => {
            if f.k != spec.dim() {
                return Err(TansecError::UnsupportedCombination(
                    "john_ellipsoid_volume needs k = m".into(),
                ));
            }
            // The John ellipsoid of an ellipsoid is itself.
            Ok(unit_ball_volume(spec.dim()) * spec.semiaxes.iter().product::<f64>())
        }
    }
}

/// Volume of a maximum-volume inscribed ellipsoid surrogate: polar of the
/// Khachiyan minimum-volume ellipsoid of the symmetrized polar vertices
/// about the centroid.
pub fn john_ellipsoid_volume(sample: &ConvexSample) -> Result<f64> {
    let m = sample.dim;
    let n = sample.boundary.len();
    if n < m + 1 {
        return Ok(0.0);
    }
    let mut center = DVector::zeros(m);
    for p in &sample.boundary {
        center += p;
    }
    center /= n as f64;
    // Support directions warped by the inverse per-axis extents: the polar
    // body of a flat sample is a needle along the sample's thin axis, and an
    // unwarped grid misses its tips, overestimating the inscribed volume.
    let mut ext = vec![0.0f64; m];
    for p in &sample.boundary {
        for i in 0..m {
            ext[i] = ext[i].max((p[i] - center[i]).abs());
        }
    }
    if ext.iter().any(|&e| e <= 0.0) {
        return Ok(0.0);
    }
    let grid = direction_grid(m, n.max(256), 0x504f);
    let mut polar: Vec<DVector<f64>> = Vec::with_capacity(2 * grid.len());
    for g in &grid {
        let v = DVector::from_fn(m, |i, _| g[i] / ext[i]);
        let nv = v.norm();
        if nv <= 0.0 {
            continue;
        }
        let dir = v / nv;
        let h = sample
            .boundary
            .iter()
            .map(|q| (q - &center).dot(&dir))
            .fold(f64::NEG_INFINITY, f64::max);
        if h <= 0.0 {
            return Ok(0.0);
        }
        polar.push(&dir / h);
        polar.push(dir * (-1.0 / h));
    }
    let mvee = minimum_volume_enclosing_ellipsoid(&polar, JOHN_TOL)?;
    // Polar of {z^T M z <= 1} is {z^T M^{-1} z <= 1} with volume
    // kappa_m sqrt(det M); it is inscribed in the (symmetrized) body.
    Ok(unit_ball_volume(m) * mvee.determinant().max(0.0).sqrt())
}

/// Khachiyan iteration for the minimum-volume enclosing ellipsoid of a
/// 0-symmetric point set; returns M with {z : z^T M z <= 1} containing the
/// points.
pub fn minimum_volume_enclosing_ellipsoid(
    points: &[DVector<f64>],
    tol: f64,
) -> Result<DMatrix<f64>> {
    let m = points[0].len();
    let n = points.len();
    // Precondition by per-axis extents; the MVEE is affine-equivariant, so
    // solving on the rescaled set and mapping back is exact while keeping
    // the iteration well conditioned on flat (cap-like) sets.
    let mut ext = vec![0.0f64; m];
    for p in points {
        for i in 0..m {
            ext[i] = ext[i].max(p[i].abs());
        }
    }
    if ext.iter().any(|&e| e <= 0.0) {
        return Err(TansecError::Config("degenerate point set in MVEE".into()));
    }
    let scaled: Vec<DVector<f64>> =
        points.iter().map(|p| DVector::from_fn(m, |i, _| p[i] / ext[i])).collect();
    let points = &scaled;
    let m_f = m as f64;
    let mut u = vec![1.0 / n as f64; n];
    // Centered variant: Lambda(u) = sum u_i x_i x_i^T, M = (m Lambda)^{-1}.
    // Frank-Wolfe with away steps; the plain Khachiyan update has an O(1/k)
    // tail that stalls below ~1e-5 on cap-shaped sets.
    for _ in 0..50_000 {
        let mut lambda = DMatrix::zeros(m, m);
        for (p, &ui) in points.iter().zip(&u) {
            lambda += p * p.transpose() * ui;
        }
        let inv = lambda
            .try_inverse()
            .ok_or_else(|| TansecError::Config("degenerate point set in MVEE".into()))?;
        let mut w_max = f64::MIN;
        let mut j_max = 0;
        let mut w_min = f64::MAX;
        let mut j_min = 0;
        for (i, p) in points.iter().enumerate() {
            let w = (p.transpose() * &inv * p)[(0, 0)];
            if w > w_max {
                w_max = w;
                j_max = i;
            }
            if u[i] > 1e-12 && w < w_min {
                w_min = w;
                j_min = i;
            }
        }
        if w_max - m_f <= m_f * tol && m_f - w_min <= m_f * tol {
            // Map back through the preconditioning rescale.
            let mut out = inv / m_f;
            for i in 0..m {
                for j in 0..m {
                    out[(i, j)] /= ext[i] * ext[j];
                }
            }
            return Ok(out);
        }
        let (j, step) = if w_max - m_f >= m_f - w_min {
            (j_max, (w_max - m_f) / (m_f * (w_max - 1.0)))
        } else {
            // Away step: shrink the weight of the most interior support
            // point, clamped so u[j_min] stays nonnegative.
            let raw = if w_min > 1.0 {
                (w_min - m_f) / (m_f * (w_min - 1.0))
            } else {
                f64::NEG_INFINITY
            };
            (j_min, raw.max(-u[j_min] / (1.0 - u[j_min])))
        };
        for ui in u.iter_mut() {
            *ui *= 1.0 - step;
        }
        u[j] += step;
    }
    Err(TansecError::Config("MVEE iteration did not converge".into()))
}

/// Eq-style sandwich test: the support of S^eps lies between the supports
/// of (c1 eps)^{1/2} E and (c2 eps)^{1/2} E. `c1 = None` checks only the
/// upper inclusion (the c(x) = 0 branch).
pub fn sandwich_check(
    sample: &ConvexSample,
    dupin: &DupinForm,
    c1: Option<f64>,
    c2: f64,
    eps: f64,
) -> bool {
    let tol = 1e-8 * eps.sqrt();
    if sample.degenerate {
        return c1.is_none();
    }
    let upper = (c2 * eps).sqrt();
    let lower = c1.map(|c| (c * eps).sqrt());
    for v in &sample.dirs {
        let h = sample.support(v);
        let he = dupin.support(v);
        if h > upper * he + tol {
            return false;
        }
        if let Some(lo) = lower {
            if h < lo * he - tol {
                return false;
            }
        }
    }
    true
}

/// Reference shapes of the cap construction: the Dupin hull E, the
/// paraboloid cap E' below it, and the circumscribed right cylinder.
pub struct ReferenceCapShapes {
    pub dupin: DupinForm,
}

impl ReferenceCapShapes {
    pub fn new(dupin: DupinForm) -> Self {
        ReferenceCapShapes { dupin }
    }

    /// Sample of E' = {(z, w) : -1 + z^T Q z <= w <= 0}, shifted to
    /// w' = -w so it matches the cap orientation (w' in [0, 1]).
    pub fn paraboloid_cap_sample(&self, rays: usize, seed: u64) -> Result<ConvexSample> {
        let m = self.dupin.dim() + 1;
        let q = &self.dupin.q;
        let member = |zw: &DVector<f64>| {
            let w = zw[m - 1];
            if !(0.0..=1.0).contains(&w) {
                return false;
            }
            let z = zw.rows(0, m - 1).into_owned();
            let val = (z.transpose() * q * z)[(0, 0)];
            val <= 1.0 - w
        };
        let mut anchor = DVector::zeros(m);
        anchor[m - 1] = 0.5;
        let mut extents = DVector::from_fn(m, |i, _| {
            if i < m - 1 {
                self.dupin.semiaxes[i]
            } else {
                1.0
            }
        });
        let max_e = extents.amax();
        extents /= max_e;
        sample_star_body(&member, &anchor, m, rays, seed, 1e3 * max_e, Some(&extents))
    }

    /// Exact volume of E': kappa_{d-1} / sqrt(det Q) * 2 / (d+1) with
    /// d - 1 = dim E.
    pub fn paraboloid_cap_volume(&self) -> f64 {
        let m = self.dupin.dim();
        let det_q: f64 = self.dupin.semiaxes.iter().map(|s| 1.0 / (s * s)).product();
        unit_ball_volume(m) / det_q.sqrt() * 2.0 / (m as f64 + 2.0)
    }

    /// Volume of the circumscribed right cylinder of E' (base E, height 1).
    pub fn cylinder_volume(&self) -> f64 {
        let m = self.dupin.dim();
        unit_ball_volume(m) * self.dupin.semiaxes.iter().product::<f64>()
    }
}

/// Numeric paraboloid-cap / circumscribed-cylinder volume ratio for the cap
/// {z^T Q z <= c eps, -c eps + z^T Q z <= x_d <= 0}; tends to 2/(d+1).
pub fn paraboloid_cap_ratio(q: &DMatrix<f64>, c: f64, eps: f64) -> f64 {
    let m = q.nrows(); // = d - 1
    let det_q = q.clone().determinant();
    let h = c * eps;
    // Affine normalization: cap volume = h^{(m+2)/2} / sqrt(det Q) * I_m with
    // I_m = m kappa_m int_0^1 r^{m-1} (1 - r^2) dr, computed by quadrature.
    let (nodes, weights) = gauss_legendre(64);
    let mut integral = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let r = 0.5 * (x + 1.0);
        integral += 0.5 * w * r.powi(m as i32 - 1) * (1.0 - r * r);
    }
    let cap_vol =
        h.powf((m as f64 + 2.0) / 2.0) / det_q.sqrt() * m as f64 * unit_ball_volume(m) * integral;
    let base = unit_ball_volume(m) * (h.powi(m as i32) / det_q).sqrt();
    let cylinder = base * h;
    cap_vol / cylinder
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn disc_sample(r: f64, n: usize) -> ConvexSample {
        let dirs: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                DVector::from_column_slice(&[th.cos(), th.sin()])
            })
            .collect();
        ConvexSample {
            dim: 2,
            anchor: DVector::zeros(2),
            boundary: dirs.iter().map(|d| d * r).collect(),
            dirs,
            faces: None,
            degenerate: false,
        }
    }

    fn ball_sample(r: f64) -> ConvexSample {
        let (verts, faces) = crate::geometry::icosphere(3);
        ConvexSample {
            dim: 3,
            anchor: DVector::zeros(3),
            boundary: verts.iter().map(|v| v * r).collect(),
            dirs: verts,
            faces: Some(faces),
            degenerate: false,
        }
    }

    fn segment_sample(len: f64) -> ConvexSample {
        ConvexSample {
            dim: 1,
            anchor: DVector::zeros(1),
            boundary: vec![
                DVector::from_column_slice(&[len / 2.0]),
                DVector::from_column_slice(&[-len / 2.0]),
            ],
            dirs: vec![
                DVector::from_column_slice(&[1.0]),
                DVector::from_column_slice(&[-1.0]),
            ],
            faces: None,
            degenerate: false,
        }
    }

    #[test]
    fn segment_intrinsic_volume() {
        assert_relative_eq!(intrinsic_volume(&segment_sample(3.0), 1).unwrap(), 3.0);
    }

    #[test]
    fn disc_steiner_values() {
        // Steiner coefficients of K + r B^2: V_2 = pi r^2, V_1 = pi r.
        let s = disc_sample(0.7, 1024);
        assert_relative_eq!(intrinsic_volume(&s, 2).unwrap(), PI * 0.49, max_relative = 1e-4);
        assert_relative_eq!(intrinsic_volume(&s, 1).unwrap(), PI * 0.7, max_relative = 1e-4);
    }

    #[test]
    fn unit_ball_intrinsic_volumes() {
        let s = ball_sample(1.0);
        // star-tet volume of the level-3 inscribed icosphere: ~0.9% deficit
        assert_relative_eq!(
            intrinsic_volume(&s, 3).unwrap(),
            4.0 * PI / 3.0,
            max_relative = 0.02
        );
        assert_relative_eq!(intrinsic_volume(&s, 2).unwrap(), 2.0 * PI, max_relative = 0.02);
        assert_relative_eq!(
            intrinsic_volume(&s, 1).unwrap(),
            unit_ball_intrinsic_volume(3, 1),
            max_relative = 3e-3
        );
    }

    #[test]
    fn kubota_calibration_m_up_to_4() {
        for m in 2..=4usize {
            for k in 1..m {
                let spec = EllipsoidSpec { semiaxes: vec![1.0; m] };
                let v = ellipsoid_intrinsic_volume(&spec, k).unwrap();
                let expect = unit_ball_intrinsic_volume(m, k);
                assert!(
                    (v.value - expect).abs() / expect < 0.01,
                    "V_{k}(B^{m}) = {} vs {}",
                    v.value,
                    expect
                );
            }
        }
    }

    #[test]
    fn sqrt2_ball_volume_example() {
        let spec = EllipsoidSpec { semiaxes: vec![2.0f64.sqrt(); 2] };
        let v = ellipsoid_intrinsic_volume(&spec, 2).unwrap();
        assert_relative_eq!(v.value, 2.0 * PI, epsilon = 1e-12);
        let seg = EllipsoidSpec { semiaxes: vec![2.0f64.sqrt()] };
        assert_relative_eq!(
            ellipsoid_intrinsic_volume(&seg, 1).unwrap().value,
            2.0 * 2.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ellipse_half_perimeter() {
        // adaptive-quadrature oracle: perimeter of the (2,1) ellipse
        // computed by dense arc-length summation
        let n = 200_000;
        let mut per = 0.0;
        let mut prev = (2.0, 0.0);
        for i in 1..=n {
            let t = 2.0 * PI * i as f64 / n as f64;
            let p = (2.0 * t.cos(), t.sin());
            per += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            prev = p;
        }
        let spec = EllipsoidSpec { semiaxes: vec![2.0, 1.0] };
        let v1 = ellipsoid_intrinsic_volume(&spec, 1).unwrap().value;
        assert_relative_eq!(v1, per / 2.0, max_relative = 1e-6);
        assert_relative_eq!(v1, 4.84422, max_relative = 1e-4);
    }

    #[test]
    fn mean_width_power_on_segment() {
        let f = FunctionalDescriptor { kind: FunctionalKind::MeanWidthPower, k: 2 };
        let v = functional_value(&segment_sample(3.0), &f).unwrap();
        assert_relative_eq!(v.value, 9.0, epsilon = 1e-9);
    }

    #[test]
    fn john_volume_of_disc() {
        let f = FunctionalDescriptor { kind: FunctionalKind::JohnEllipsoidVolume, k: 2 };
        let v = functional_value(&disc_sample(0.8, 512), &f).unwrap();
        assert_relative_eq!(v.value, PI * 0.64, max_relative = 1e-3);
    }

    #[test]
    fn john_rejects_wrong_degree() {
        let f = FunctionalDescriptor { kind: FunctionalKind::JohnEllipsoidVolume, k: 1 };
        assert!(matches!(
            functional_value(&disc_sample(1.0, 64), &f),
            Err(TansecError::UnsupportedCombination(_))
        ));
    }

    #[test]
    fn homogeneity_of_registry_functionals() {
        let s = disc_sample(0.9, 512);
        for (kind, k) in [
            (FunctionalKind::IntrinsicVolume, 1),
            (FunctionalKind::IntrinsicVolume, 2),
            (FunctionalKind::MeanWidthPower, 2),
            (FunctionalKind::JohnEllipsoidVolume, 2),
        ] {
            let f = FunctionalDescriptor { kind, k };
            let base = functional_value(&s, &f).unwrap().value;
            for lambda in [0.5f64, 2.0] {
                let map = DMatrix::identity(2, 2) * lambda;
                let scaled = functional_value(&s.mapped(&map), &f).unwrap().value;
                assert_relative_eq!(
                    scaled,
                    base * lambda.powi(k as i32),
                    max_relative = 1e-6
                );
            }
        }
    }

    #[test]
    fn paraboloid_cap_ratio_matches_2_over_d_plus_1() {
        for d in 2..=4usize {
            let m = d - 1;
            let q = DMatrix::from_fn(m, m, |i, j| if i == j { 0.5 + 0.3 * i as f64 } else { 0.0 });
            let ratio = paraboloid_cap_ratio(&q, 0.7, 1e-2);
            assert_relative_eq!(ratio, 2.0 / (d as f64 + 1.0), epsilon = 1e-6);
        }
    }

    #[test]
    fn reference_cap_ordering() {
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.5, 0.8]));
        let frame_dupin = DupinForm {
            q: q.clone(),
            semiaxes: vec![(1.0f64 / 0.5).sqrt(), (1.0f64 / 0.8).sqrt()],
            axes: vec![
                DVector::from_column_slice(&[1.0, 0.0]),
                DVector::from_column_slice(&[0.0, 1.0]),
            ],
        };
        let shapes = ReferenceCapShapes::new(frame_dupin);
        let cap = shapes.paraboloid_cap_volume();
        let cyl = shapes.cylinder_volume();
        assert!(cap < cyl);
        let sample = shapes.paraboloid_cap_sample(2048, 5).unwrap();
        let numeric = intrinsic_volume(&sample, 3).unwrap();
        // star-tet sampling of a body with a flat face and a rim edge:
        // sub-percent but not 5e-3 accurate at 2048 rays
        assert_relative_eq!(numeric, cap, max_relative = 0.015);
        // inscribed scaled copy: half-height cap scaled by the paraboloid law
        assert!(0.25f64.powf(0.5) * cap < cap);
    }
}
