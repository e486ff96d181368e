//! Metrics on a coordinate chart, domains with boundary, and the catalog of
//! analytic model spacetimes.

pub mod catalog;
pub mod chart;
pub mod domain;

pub use catalog::{build as build_catalog, CatalogEntry, Params};
pub use chart::{
    christoffel_from, CausalClass, ChartBounds, ChartMetric, Christoffel, MetricAt, Signature,
    TangentVec, CLASS_TOL,
};
pub use domain::{
    boundary_frame, frame_at, second_fundamental_form, BoundaryFrame, DomainSpec, PointClass,
};
