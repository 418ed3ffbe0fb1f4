//! Numerical toolkit for local determination of convex-body perturbations
//! from tangent-plane section and tangent-hyperplane cap asymptotics.
//!
//! The pipeline: fix a convex body K and a one-parameter outward
//! perturbation family; for tangent flats of K, measure intrinsic volumes
//! (or other monotone homogeneous functionals) of the slightly inflated
//! body's sections and caps; extrapolate the epsilon -> 0 limits; invert
//! them to the local normal speed c(x); and divide by the radial-normal
//! factor to recover the radial derivative field over the sphere, together
//! with symmetry certificates of that field.

pub mod body;
pub mod config;
pub mod error;
pub mod estimator;
pub mod flats;
pub mod frame;
pub mod geometry;
pub mod measures;
pub mod recovery;
pub mod report;
pub mod sample;

pub use body::{BodyKind, PerturbationFamily, PolyTerm, RadialBody, Speed};
pub use error::{Result, TansecError};
pub use estimator::{
    extract_limit, invert_cap_volume_limit, invert_section_limit, invert_series_limit, sweep,
    EpsilonGrid, LimitEstimate, MeasurementSeries, Mode,
};
pub use flats::{
    hyperplane_flats_at, tangent_flats, AffineFlat, SubspacePencil, TangentFlat,
};
pub use frame::{boundary_frame, ground_truth_c, radial_derivative_from_c, BoundaryFrame, DupinForm};
pub use geometry::UnitVector;
pub use measures::{
    functional_of_dupin, functional_value, intrinsic_volume, paraboloid_cap_ratio, sandwich_check,
    FunctionalDescriptor, FunctionalKind,
};
pub use recovery::{
    recover_field, santalo_first_order, symmetry_check, FieldSample, RecoveryMode, RecoveryReport,
    SymmetryCertificate,
};
pub use sample::{cap_body, section_body, ConvexSample, SampleParams, TangentContext};
