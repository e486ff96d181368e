//! Time separation, causal classification, cut-locus probing and the
//! reconstruction steps built on them.

pub mod cut;
pub mod eikonal;
pub mod exterior;
pub mod gradient;
pub mod isometry;
pub mod lightcone;
pub mod timesep;

pub use cut::{cut_locus_probe, orthonormal_frame, CutBudget, CutLocusProbe, CutWitness, SecondGeodesic};
pub use eikonal::{eikonal_residuals, EikonalSample};
pub use exterior::{exterior_lightlike_traveltime, Disk, DiskObstacle, ExteriorParams, ExteriorRun, ExteriorStep};
pub use gradient::{aitken, euclidean_angle, recover_null_direction_via_gradient, GradientRecovery};
pub use isometry::{
    construct_isometry, phi_at, pushforward_domain, pushforward_metric, verify_isometry, ChartMap, EntryState,
    IsometryCandidate, IsometryCheck, IsometryParams, IsometrySample, Side,
};
pub use lightcone::{boundary_lightcone_id, cylinder_embedding, BoundaryGrid, CellClass, LightconeCell, LightconeId};
pub use timesep::{causal_boundary_class, minkowski_separation, CausalRelation, Method, Separation, TimeSeparationField};
