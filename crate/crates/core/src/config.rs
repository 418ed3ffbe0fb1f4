//! TOML experiment configuration: body, family, experiment geometry,
//! functional, epsilon grid, sampling, tolerances, output.

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::body::{PerturbationFamily, PolyTerm, RadialBody, Speed};
use crate::error::{Result, TansecError};
use crate::estimator::EpsilonGrid;
use crate::flats::{tangent_flats, SubspacePencil, TangentFlat};
use crate::geometry::{tangency_direction_grid, UnitVector};
use crate::measures::{FunctionalDescriptor, FunctionalKind};
use crate::recovery::RecoveryMode;
use crate::sample::SampleParams;

fn config_err(msg: impl Into<String>) -> TansecError {
    TansecError::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub semiaxes: Option<Vec<f64>>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coef: f64,
    pub axis: usize,
    pub power: u32,
}

impl From<TermConfig> for PolyTerm {
    fn from(t: TermConfig) -> PolyTerm {
        PolyTerm { coef: t.coef, axis: t.axis, power: t.power }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub l: Option<usize>,
    /// Tangency directions per subspace.
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Rotation samples of the pencil (l < d-1 only).
    #[serde(default = "default_rotations")]
    pub rotations: usize,
}

fn default_directions() -> usize {
    16
}

fn default_rotations() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub kind: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid_start")]
    pub start: f64,
    #[serde(default = "default_grid_ratio")]
    pub ratio: f64,
    #[serde(default = "default_grid_count")]
    pub count: usize,
}

fn default_grid_start() -> f64 {
    2f64.powi(-6)
}
fn default_grid_ratio() -> f64 {
    0.5
}
fn default_grid_count() -> usize {
    9
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            start: default_grid_start(),
            ratio: default_grid_ratio(),
            count: default_grid_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub rays: usize,
    #[serde(default = "default_patch_factor")]
    pub patch_factor: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_patch_factor() -> f64 {
    0.75
}
fn default_seed() -> u64 {
    1
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { rays: 0, patch_factor: default_patch_factor(), seed: default_seed() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// RMS relative field error vs ground truth.
    #[serde(default = "default_rms_tol")]
    pub rms: f64,
    /// Constancy tolerance of the first-order constant-chord demo.
    #[serde(default = "default_santalo_tol")]
    pub santalo: f64,
    /// Sandwich constants as multiples of c: (c1_factor, c2_factor).
    #[serde(default = "default_c1_factor")]
    pub sandwich_c1_factor: f64,
    #[serde(default = "default_c2_factor")]
    pub sandwich_c2_factor: f64,
}

fn default_rms_tol() -> f64 {
    0.03
}
fn default_santalo_tol() -> f64 {
    0.02
}
fn default_c1_factor() -> f64 {
    0.8
}
fn default_c2_factor() -> f64 {
    1.25
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            rms: default_rms_tol(),
            santalo: default_santalo_tol(),
            sandwich_c1_factor: default_c1_factor(),
            sandwich_c2_factor: default_c2_factor(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    /// "negation" or an explicit row-major orthogonal matrix.
    #[serde(default)]
    pub isometry: Option<String>,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub body: BodyConfig,
    pub family: FamilyConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub symmetry: Option<SymmetryConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| config_err(format!("config parse error: {e}")))
    }

    pub fn body(&self) -> Result<RadialBody> {
        let b = &self.body;
        match b.kind.as_str() {
            "ball" => RadialBody::ball(
                b.dim.ok_or_else(|| config_err("body.dim required for kind = ball"))?,
                b.radius.unwrap_or(1.0),
            ),
            "ellipsoid" => RadialBody::ellipsoid(
                b.semiaxes
                    .as_ref()
                    .ok_or_else(|| config_err("body.semiaxes required for kind = ellipsoid"))?,
            ),
            "smooth_star" => RadialBody::smooth_star(
                b.dim.ok_or_else(|| config_err("body.dim required for kind = smooth_star"))?,
                b.r0.unwrap_or(1.0),
                b.terms.iter().map(|&t| t.into()).collect(),
            ),
            other => Err(config_err(format!("unknown body.kind {other:?}"))),
        }
    }

    pub fn family(&self) -> Result<PerturbationFamily> {
        let body = self.body()?;
        let f = &self.family;
        let speed = match f.kind.as_str() {
            "constant" => Speed::Constant(
                f.value.ok_or_else(|| config_err("family.value required for kind = constant"))?,
            ),
            "radial_multiple" => Speed::RadialMultiple(
                f.value
                    .ok_or_else(|| config_err("family.value required for kind = radial_multiple"))?,
            ),
            "poly" => Speed::Poly {
                c0: f.c0.unwrap_or(0.0),
                terms: f.terms.iter().map(|&t| t.into()).collect(),
            },
            other => return Err(config_err(format!("unknown family.kind {other:?}"))),
        };
        PerturbationFamily::new(body, speed)
    }

    pub fn mode(&self) -> Result<RecoveryMode> {
        match self.experiment.mode.as_str() {
            "sections" => Ok(RecoveryMode::Sections),
            "cap_volume" => Ok(RecoveryMode::CapVolume),
            "cap_intrinsic" => Ok(RecoveryMode::CapIntrinsic),
            other => Err(config_err(format!("unknown experiment.mode {other:?}"))),
        }
    }

    /// Validated (k, l) per the theorem parameter ranges.
    pub fn degrees(&self, d: usize) -> Result<(usize, usize)> {
        let mode = self.mode()?;
        let l = self.experiment.l.unwrap_or(d - 1);
        let k = self.experiment.k.unwrap_or(match mode {
            RecoveryMode::CapVolume => d,
            _ => l,
        });
        match mode {
            RecoveryMode::Sections => {
                if !(1 <= k && k <= l && l < d) {
                    return Err(config_err(format!(
                        "sections need 1 <= k <= l <= d-1, got k={k}, l={l}, d={d}"
                    )));
                }
            }
            RecoveryMode::CapVolume => {
                if l != d - 1 || k != d {
                    return Err(config_err(format!(
                        "cap_volume needs l = d-1 and k = d, got k={k}, l={l}, d={d}"
                    )));
                }
            }
            RecoveryMode::CapIntrinsic => {
                if l != d - 1 || !(1 <= k && k < d) {
                    return Err(config_err(format!(
                        "cap_intrinsic needs l = d-1 and 1 <= k <= d-1, got k={k}, l={l}, d={d}"
                    )));
                }
            }
        }
        Ok((k, l))
    }

    pub fn functional(&self, d: usize) -> Result<FunctionalDescriptor> {
        let (k, _) = self.degrees(d)?;
        let kind = match self.functional.as_ref().map(|f| f.kind.as_str()) {
            None | Some("intrinsic_volume") => FunctionalKind::IntrinsicVolume,
            Some("mean_width_power") => FunctionalKind::MeanWidthPower,
            Some("john_ellipsoid_volume") => FunctionalKind::JohnEllipsoidVolume,
            Some(other) => return Err(config_err(format!("unknown functional.kind {other:?}"))),
        };
        Ok(FunctionalDescriptor { kind, k })
    }

    pub fn epsilon_grid(&self) -> Result<EpsilonGrid> {
        let g = &self.grid;
        if !(g.start > 0.0 && 0.0 < g.ratio && g.ratio < 1.0 && g.count >= 3) {
            return Err(config_err(
                "grid needs start > 0, ratio in (0,1), count >= 3".to_string(),
            ));
        }
        Ok(EpsilonGrid { start: g.start, ratio: g.ratio, count: g.count })
    }

    pub fn sample_params(&self, seed_override: Option<u64>) -> SampleParams {
        SampleParams {
            rays: self.sampling.rays,
            patch_factor: self.sampling.patch_factor,
            seed: seed_override.unwrap_or(self.sampling.seed),
        }
    }

    /// Tangent flats of the configured experiment. Symmetry runs get a
    /// direction grid closed under the isometry via `hyperplane_flats_at`
    /// from the caller instead.
    pub fn flats(&self, body: &RadialBody) -> Result<Vec<TangentFlat>> {
        let d = body.dim();
        let (_, l) = self.degrees(d)?;
        let pencil = if l + 1 == d {
            SubspacePencil::full(d)
        } else {
            SubspacePencil::about_last_axes(d, l, self.experiment.rotations)?
        };
        tangent_flats(body, l, &pencil, self.experiment.directions)
    }

    /// Direction grid closed under the configured isometry, for symmetry
    /// certificates on tangent hyperplanes.
    pub fn symmetric_directions(&self, d: usize) -> Result<Vec<UnitVector>> {
        let t = self.isometry(d)?;
        let base = tangency_direction_grid(d, self.experiment.directions, 23);
        let mut all = base.clone();
        for u in &base {
            let tu = &t * u.as_vector();
            all.push(UnitVector::new(tu)?);
        }
        Ok(all)
    }

    pub fn isometry(&self, d: usize) -> Result<DMatrix<f64>> {
        let sym = self
            .symmetry
            .as_ref()
            .ok_or_else(|| config_err("missing [symmetry] section"))?;
        if let Some(rows) = &sym.matrix {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(config_err(format!("symmetry.matrix must be {d}x{d}")));
            }
            let mut t = DMatrix::zeros(d, d);
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    t[(i, j)] = *v;
                }
            }
            return Ok(t);
        }
        match sym.isometry.as_deref() {
            Some("negation") | None => Ok(DMatrix::identity(d, d) * -1.0),
            Some(other) => Err(config_err(format!("unknown symmetry.isometry {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [body]
        kind = "ball"
        dim = 2

        [family]
        kind = "constant"
        value = 0.5

        [experiment]
        mode = "sections"
        k = 1
        l = 1
    "#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::parse(BASE).unwrap();
        let body = cfg.body().unwrap();
        assert_eq!(body.dim(), 2);
        assert_eq!(cfg.degrees(2).unwrap(), (1, 1));
        assert_eq!(cfg.epsilon_grid().unwrap().values().len(), 9);
    }

    #[test]
    fn k_greater_than_l_rejected() {
        let cfg = RunConfig::parse(&BASE.replace("k = 1", "k = 2")).unwrap();
        assert!(matches!(cfg.degrees(2), Err(TansecError::Config(_))));
    }

    #[test]
    fn cap_volume_degree_rules() {
        let text = BASE
            .replace("mode = \"sections\"", "mode = \"cap_volume\"")
            .replace("k = 1", "k = 2");
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.degrees(2).unwrap(), (2, 1));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{BASE}\nbogus = 1\n");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn negation_isometry_default() {
        let text = format!("{BASE}\n[symmetry]\nisometry = \"negation\"\n");
        let cfg = RunConfig::parse(&text).unwrap();
        let t = cfg.isometry(2).unwrap();
        assert_eq!(t[(0, 0)], -1.0);
        assert_eq!(t[(0, 1)], 0.0);
    }
}
