//! Architecture description, validation, presets and the simulatable
//! system built from them.

mod spec;
mod system;

pub use spec::{
    preset, validate_spec, Clocks, LevelConfig, Placement, Sharing, SystemSpec, TierKind, TierSpec,
    Violation, PRESETS,
};
pub use system::{build_system, BuildError, PerformedAccess, RunError, System, SystemCounts};
