//! Connecting curves, arclength reparametrization, curve tension, the
//! bubble/neck decomposition and the estimate verifiers.

mod curve;
mod decompose;
mod lemmas;

pub use curve::{
    arclength_reparametrize, connecting_curve, curve_tension, curve_tension_lp, geodesic_deviation,
    reparametrization_residual, velocity_lower_bound_check, ConnectingCurve, UnitSpeedCurve, VelocityReport,
    UNIT_SPEED_TOLERANCE,
};
pub use decompose::{
    decompose, extended_region_diagnostics, neck_tension_split, normalized_tension_of, DecomposeParams,
    Decomposition, DomainKind, ExtendedRegionDiagnostic, GapRecord, NeckCase, TensionSplit,
};
pub use lemmas::{
    default_lemma_maps, refinement_stability, verify_lemma_suite, EstimateCheck, LemmaParams, LemmaReport,
    RefinementChange,
};
