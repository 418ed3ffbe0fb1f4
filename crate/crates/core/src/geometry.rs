//! Shared numeric geometry: unit vectors, sphere grids, quadrature, and
//! small linear-algebra helpers used across the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TansecError};

pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Direction on the unit sphere S^{d-1}, normalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    pub fn new(components: DVector<f64>) -> Result<Self> {
        let n = components.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(TansecError::Config("zero or non-finite direction".into()));
        }
        Ok(UnitVector(components / n))
    }

    pub fn from_slice(components: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn negated(&self) -> UnitVector {
        UnitVector(-&self.0)
    }
}

/// Volume of the unit ball B^m.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(m - 2) * 2.0 * std::f64::consts::PI / m as f64,
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// V_k of the unit ball B^m: C(m,k) kappa_m / kappa_{m-k}.
pub fn unit_ball_intrinsic_volume(m: usize, k: usize) -> f64 {
    binomial(m, k) * unit_ball_volume(m) / unit_ball_volume(m - k)
}

/// splitmix64 step, used to derive per-task seeds from (seed, ids).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9e3779b97f4a7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

pub fn seeded_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}

/// Orthonormal basis of the orthogonal complement of a unit vector.
pub fn complement_basis(v: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = v.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d - 1);
    // Gram-Schmidt the coordinate axes against v and previous basis vectors.
    for i in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        e -= v * v.dot(&e);
        for b in &basis {
            let proj = b.dot(&e);
            e -= b * proj;
        }
        let n = e.norm();
        if n > 1e-8 {
            basis.push(e / n);
        }
    }
    debug_assert_eq!(basis.len(), d - 1);
    basis
}

/// Orthonormalize the span of `columns`; error if they were not already
/// orthonormal within `tol`.
pub fn check_orthonormal(columns: &DMatrix<f64>, tol: f64) -> Result<()> {
    let gram = columns.transpose() * columns;
    let n = gram.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[(i, j)] - target).abs());
        }
    }
    if defect > tol {
        return Err(TansecError::BadSubspace(defect));
    }
    Ok(())
}

/// Deterministic grid of unit directions on S^{m-1} for ray shooting.
/// m=1: the two endpoints; m=2: uniform angles; m=3: subdivided icosahedron
/// vertices; m>=4: seeded Gaussian directions.
pub fn direction_grid(m: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    match m {
        1 => vec![
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[-1.0]),
        ],
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_column_slice(&[th.cos(), th.sin()])
            })
            .collect(),
        3 => icosphere_for_count(count).0,
        _ => {
            let mut rng = seeded_rng(&[seed, m as u64, count as u64]);
            (0..count)
                .map(|_| {
                    loop {
                        let v = DVector::from_fn(m, |_, _| {
                            // Box-Muller from uniform pairs.
                            let u1: f64 = rng.gen_range(1e-12..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                        });
                        let n = v.norm();
                        if n > 1e-6 {
                            return v / n;
                        }
                    }
                })
                .collect()
        }
    }
}

/// Icosphere with at least `count` vertices; returns (vertices, faces).
pub fn icosphere_for_count(count: usize) -> (Vec<DVector<f64>>, Vec<[usize; 3]>) {
    let mut level = 0usize;
    // 12, 42, 162, 642, 2562, ...
    while 10 * 4usize.pow(level as u32) + 2 < count && level < 6 {
        level += 1;
    }
    icosphere(level)
}

/// Subdivided icosahedron on S^2.
pub fn icosphere(level: usize) -> (Vec<DVector<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut verts: Vec<DVector<f64>> = raw
        .iter()
        .map(|p| {
            let v = DVector::from_column_slice(p);
            let n = v.norm();
            v / n
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    use std::collections::HashMap;
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<DVector<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let v = (&verts[a] + &verts[b]) / 2.0;
                let n = v.norm();
                verts.push(v / n);
                verts.len() - 1
            })
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next_faces.push([f[0], ab, ca]);
            next_faces.push([f[1], bc, ab]);
            next_faces.push([f[2], ca, bc]);
            next_faces.push([ab, bc, ca]);
        }
        faces = next_faces;
    }
    (verts, faces)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration from the Chebyshev initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule (directions, weights) for the normalized mean over
/// S^{m-1}; weights sum to 1. Product Gauss-Legendre rule built by the
/// recursion mean_{S^{m-1}} f = int f(cos t, sin t v) sin^{m-2} t dt / B.
pub fn sphere_mean_quadrature(m: usize, resolution: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    match m {
        1 => (
            vec![
                DVector::from_column_slice(&[1.0]),
                DVector::from_column_slice(&[-1.0]),
            ],
            vec![0.5, 0.5],
        ),
        2 => {
            let n = resolution.max(8);
            let w = 1.0 / n as f64;
            (
                (0..n)
                    .map(|i| {
                        let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                        DVector::from_column_slice(&[th.cos(), th.sin()])
                    })
                    .collect(),
                vec![w; n],
            )
        }
        _ => {
            let (sub_dirs, sub_w) = sphere_mean_quadrature(m - 1, resolution);
            let n = resolution.max(8);
            // t = acos(x) maps the rule to [0, pi] with dt sin t = -dx,
            // so int_0^pi g(t) sin^{m-2} t dt = int_-1^1 g(acos x) (1-x^2)^{(m-3)/2} dx.
            // Split the latitude weight into its sqrt part (absorbed by
            // Chebyshev-U nodes for even m) and a polynomial part, keeping
            // the rule spectrally accurate in both parities.
            let (nodes, wts, poly_pow): (Vec<f64>, Vec<f64>, i32) = if m % 2 == 1 {
                let (x, w) = gauss_legendre(n);
                (x, w, (m as i32 - 3) / 2)
            } else {
                let x: Vec<f64> = (1..=n)
                    .map(|i| (std::f64::consts::PI * i as f64 / (n as f64 + 1.0)).cos())
                    .collect();
                let w: Vec<f64> = (1..=n)
                    .map(|i| {
                        let s = (std::f64::consts::PI * i as f64 / (n as f64 + 1.0)).sin();
                        std::f64::consts::PI / (n as f64 + 1.0) * s * s
                    })
                    .collect();
                (x, w, (m as i32 - 4) / 2)
            };
            let mut dirs = Vec::with_capacity(n * sub_dirs.len());
            let mut weights = Vec::with_capacity(n * sub_dirs.len());
            let mut norm = 0.0;
            for (x, w) in nodes.iter().zip(&wts) {
                let s2 = (1.0 - x * x).max(0.0);
                let wt = w * s2.powi(poly_pow);
                norm += wt;
                let sin_t = s2.sqrt();
                for (v, sw) in sub_dirs.iter().zip(&sub_w) {
                    let mut dir = DVector::zeros(m);
                    dir[0] = *x;
                    for j in 0..m - 1 {
                        dir[j + 1] = sin_t * v[j];
                    }
                    dirs.push(dir);
                    weights.push(wt * sw);
                }
            }
            for w in &mut weights {
                *w /= norm;
            }
            (dirs, weights)
        }
    }
}

/// Uniformly distributed grid of tangency directions on S^{d-1}:
/// uniform angles (d=2), Fibonacci sphere (d=3), seeded Gaussian otherwise.
pub fn tangency_direction_grid(d: usize, count: usize, seed: u64) -> Vec<UnitVector> {
    match d {
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                UnitVector::from_slice(&[th.cos(), th.sin()]).unwrap()
            })
            .collect(),
        3 => (0..count)
            .map(|i| {
                let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                UnitVector::from_slice(&[r * th.cos(), r * th.sin(), z]).unwrap()
            })
            .collect(),
        _ => direction_grid(d, count, seed)
            .into_iter()
            .map(UnitVector)
            .collect(),
    }
}

/// Random seeded uniform orthonormal k-frame in R^m (Gaussian + QR).
pub fn random_subspace(m: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(m, k, |_, _| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let qr = g.clone().qr();
        let q = qr.q();
        if q.ncols() == k {
            return q;
        }
    }
}
