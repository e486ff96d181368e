//! Normal-jet reconstruction from travel times of probes near a strictly
//! convex boundary direction.

pub mod numeric;
pub mod symbolic;

pub use numeric::{
    default_order, eps_grid, fit_expansion, fit_line, fit_series, probe_direction, probe_travel_time, recover_m1,
    reconstruct_jet, verify_jet_linearity, ExpansionFit, FirstOrderJet, JetEntry, JetProbe, JetResult,
    LinearityParams, LinearityReport,
};
pub use symbolic::{
    assembled_coefficient, expansion_closed_form, expansion_recurrence, jet_coefficient, jet_coefficient_symbolic,
    series_closed_form, series_sum, worked_m2, KMonomial, Rational, SymbolicTerm,
};
