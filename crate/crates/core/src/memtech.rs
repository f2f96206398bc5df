//! Memory technology catalog and cost models.
//!
//! Every technology is described by one [`TechnologyParams`] record. Latencies
//! are in nanoseconds, dynamic energies in nanojoules per access, and standby
//! power in milliwatts per MiB of capacity.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Endurance values at or above this count are treated as unlimited.
pub const UNLIMITED_ENDURANCE_THRESHOLD: f64 = 1e16;

/// 1 mW sustained for 1 ns.
const NJ_PER_MW_NS: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum TechError {
    #[error("unknown technology `{0}`")]
    UnknownTechnology(String),
    #[error("unknown cache level `{0}`")]
    UnknownLevel(String),
    #[error("technology `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

/// Maximum number of writes a cell group tolerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endurance {
    Writes(u64),
    /// Effectively unlimited (10^16 writes or more).
    Unlimited,
}

impl Endurance {
    /// Returns true once `write_count` has exceeded the endurance.
    pub fn exceeded_by(self, write_count: u64) -> bool {
        match self {
            Endurance::Writes(limit) => write_count > limit,
            Endurance::Unlimited => false,
        }
    }

    fn from_count(count: f64) -> Endurance {
        if count >= UNLIMITED_ENDURANCE_THRESHOLD {
            Endurance::Unlimited
        } else {
            Endurance::Writes(count as u64)
        }
    }
}

impl Serialize for Endurance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Endurance::Writes(n) => s.serialize_u64(*n),
            Endurance::Unlimited => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for Endurance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct EnduranceVisitor;

        impl Visitor<'_> for EnduranceVisitor {
            type Value = Endurance;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a write count or \"unlimited\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Endurance, E> {
                Ok(Endurance::from_count(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Endurance, E> {
                if v < 0 {
                    return Err(E::custom("endurance must be positive"));
                }
                Ok(Endurance::from_count(v as f64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Endurance, E> {
                if v.is_nan() || v < 0.0 {
                    return Err(E::custom("endurance must be positive"));
                }
                Ok(Endurance::from_count(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Endurance, E> {
                match v {
                    "unlimited" => Ok(Endurance::Unlimited),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        d.deserialize_any(EnduranceVisitor)
    }
}

/// Latency, energy, standby, endurance and density figures of one technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyParams {
    pub name: String,
    pub read_latency: f64,
    pub write_set_latency: f64,
    pub write_reset_latency: f64,
    pub read_energy: f64,
    pub write_set_energy: f64,
    pub write_reset_energy: f64,
    pub standby_power_per_mib: f64,
    pub endurance: Endurance,
    pub norm_density: f64,
    pub non_volatile: bool,
}

impl TechnologyParams {
    /// Checks the record invariants, returning a description of the first
    /// violated one.
    pub fn validate(&self) -> Result<(), TechError> {
        let fail = |reason: &str| {
            Err(TechError::Invalid {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        let latencies = [
            self.read_latency,
            self.write_set_latency,
            self.write_reset_latency,
        ];
        if latencies.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return fail("latencies must be positive");
        }
        let energies = [
            self.read_energy,
            self.write_set_energy,
            self.write_reset_energy,
            self.standby_power_per_mib,
        ];
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return fail("energies and standby power must be non-negative");
        }
        if self.endurance == Endurance::Writes(0) {
            return fail("endurance must be at least 1");
        }
        if self.norm_density.is_nan() || self.norm_density <= 0.0 {
            return fail("norm_density must be positive");
        }
        if self.non_volatile && self.standby_power_per_mib != 0.0 {
            return fail("non-volatile technologies draw no standby power");
        }
        Ok(())
    }

    /// Latency charged for a full line write, which mixes set and reset bits.
    pub fn line_write_latency(&self) -> f64 {
        self.write_set_latency.max(self.write_reset_latency)
    }

    /// Energy of one write given the fraction of set (as opposed to reset)
    /// operations.
    pub fn mixed_write_energy(&self, write_mix: f64) -> f64 {
        write_mix * self.write_set_energy + (1.0 - write_mix) * self.write_reset_energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    WriteSet,
    WriteReset,
}

/// Returns `(latency ns, energy nJ)` of one access of the given kind.
pub fn access_cost(params: &TechnologyParams, kind: AccessKind) -> (f64, f64) {
    match kind {
        AccessKind::Read => (params.read_latency, params.read_energy),
        AccessKind::WriteSet => (params.write_set_latency, params.write_set_energy),
        AccessKind::WriteReset => (params.write_reset_latency, params.write_reset_energy),
    }
}

/// Access counts and time split of one cache component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessCounters {
    pub n_read: u64,
    pub n_write: u64,
    /// ns
    pub busy_time: f64,
    /// ns
    pub idle_time: f64,
}

/// Total energy (nJ) of a cache level: dynamic read and write energy plus
/// standby power integrated over the idle time.
pub fn level_energy(
    counters: &AccessCounters,
    params: &TechnologyParams,
    capacity_mib: f64,
    write_mix: f64,
) -> f64 {
    let dynamic = counters.n_read as f64 * params.read_energy
        + counters.n_write as f64 * params.mixed_write_energy(write_mix);
    let standby = counters.idle_time * params.standby_power_per_mib * capacity_mib * NJ_PER_MW_NS;
    dynamic + standby
}

/// Silicon area in SRAM-equivalent MiB.
pub fn area_estimate(capacity_mib: f64, params: &TechnologyParams) -> f64 {
    capacity_mib / params.norm_density
}

#[allow(clippy::too_many_arguments)]
fn tech(
    name: &str,
    read_latency: f64,
    write_set_latency: f64,
    write_reset_latency: f64,
    read_energy: f64,
    write_set_energy: f64,
    write_reset_energy: f64,
    standby_power_per_mib: f64,
    endurance: Endurance,
    norm_density: f64,
    non_volatile: bool,
) -> TechnologyParams {
    TechnologyParams {
        name: name.to_string(),
        read_latency,
        write_set_latency,
        write_reset_latency,
        read_energy,
        write_set_energy,
        write_reset_energy,
        standby_power_per_mib,
        endurance,
        norm_density,
        non_volatile,
    }
}

/// Technology name to parameters.
pub type Catalog = BTreeMap<String, TechnologyParams>;

/// The six built-in technologies. Ranges from the published comparison are
/// reduced to their midpoints; PCRAM endurance takes the low end of its range.
/// Standby power of the volatile technologies is a configurable guess.
pub fn catalog_default() -> Catalog {
    use Endurance::{Unlimited, Writes};
    [
        tech(
            "SRAM", 3.0, 3.0, 3.0, 0.45, 0.75, 0.75, 1.0, Unlimited, 1.0, false,
        ),
        tech(
            "DRAM", 4.0, 4.0, 4.0, 0.70, 0.70, 0.70, 1.5, Unlimited, 4.0, false,
        ),
        tech(
            "eDRAM", 4.0, 4.0, 4.0, 0.60, 0.60, 0.60, 1.5, Unlimited, 4.0, false,
        ),
        tech(
            "PCRAM",
            4.0,
            105.0,
            43.0,
            0.40,
            4.0,
            9.5,
            0.0,
            Writes(100_000_000),
            16.0,
            true,
        ),
        tech(
            "MRAM",
            1.5,
            3.5,
            3.5,
            0.13,
            0.35,
            0.35,
            0.0,
            Writes(1_000_000_000_000),
            4.0,
            true,
        ),
        tech(
            "DWM", 2.0, 3.5, 3.5, 0.34, 0.45, 0.45, 0.0, Unlimited, 6.0, true,
        ),
    ]
    .into_iter()
    .map(|t| (t.name.clone(), t))
    .collect()
}

/// Applies partial JSON overrides (keyed by technology name) on top of a
/// catalog. Unknown names must supply every field.
pub fn apply_overrides(
    catalog: &Catalog,
    overrides: &BTreeMap<String, serde_json::Value>,
) -> Result<Catalog, TechError> {
    let mut out = catalog.clone();
    for (name, patch) in overrides {
        let mut base = match catalog.get(name) {
            Some(params) => serde_json::to_value(params).expect("params serialize"),
            None => serde_json::json!({ "name": name }),
        };
        let (Some(base_obj), Some(patch_obj)) = (base.as_object_mut(), patch.as_object()) else {
            return Err(TechError::Invalid {
                name: name.clone(),
                reason: "override must be an object".into(),
            });
        };
        for (k, v) in patch_obj {
            base_obj.insert(k.clone(), v.clone());
        }
        base_obj.insert("name".into(), serde_json::Value::String(name.clone()));
        let params: TechnologyParams =
            serde_json::from_value(base).map_err(|e| TechError::Invalid {
                name: name.clone(),
                reason: e.to_string(),
            })?;
        params.validate()?;
        out.insert(name.clone(), params);
    }
    Ok(out)
}

/// Criteria order used by [`ScoringMatrix`] weights.
pub const CRITERIA: [&str; 6] = [
    "dyn_energy",
    "standby",
    "heat_in_use",
    "heat_standby",
    "latency",
    "endurance",
];

/// Requirement weights per cache level and coarse technology ratings.
///
/// Weights are ordered as [`CRITERIA`] and take values 1 (low), 2 (moderate)
/// or 3 (severe). Ratings are `(dyn_energy, standby, latency, endurance)` with
/// 0 (poor) to 2 (good).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringMatrix {
    pub weights: BTreeMap<String, [u8; 6]>,
    pub ratings: BTreeMap<String, [u8; 4]>,
}

impl Default for ScoringMatrix {
    fn default() -> Self {
        let weights = [
            ("L1", [3, 2, 3, 2, 3, 3]),
            ("L2", [2, 2, 2, 1, 2, 2]),
            ("L3", [1, 3, 1, 1, 1, 2]),
        ];
        let ratings = [
            ("SRAM", [1, 0, 2, 2]),
            ("DRAM", [1, 0, 1, 2]),
            ("eDRAM", [1, 0, 1, 2]),
            ("PCRAM", [0, 2, 0, 0]),
            ("MRAM", [1, 2, 1, 1]),
            ("DWM", [2, 2, 1, 2]),
        ];
        ScoringMatrix {
            weights: weights
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            ratings: ratings
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

impl ScoringMatrix {
    pub fn validate(&self) -> Result<(), TechError> {
        for (level, w) in &self.weights {
            if w.iter().any(|x| !(1..=3).contains(x)) {
                return Err(TechError::Invalid {
                    name: level.clone(),
                    reason: "weights must be 1, 2 or 3".into(),
                });
            }
        }
        for (tech, r) in &self.ratings {
            if r.iter().any(|x| *x > 2) {
                return Err(TechError::Invalid {
                    name: tech.clone(),
                    reason: "ratings must be 0, 1 or 2".into(),
                });
            }
        }
        Ok(())
    }
}

/// Weighted suitability of `tech` for `level`. The two heat criteria reuse
/// the dynamic-energy and standby ratings.
pub fn score_technology(tech: &str, level: &str, matrix: &ScoringMatrix) -> Result<u32, TechError> {
    let r = matrix
        .ratings
        .get(tech)
        .ok_or_else(|| TechError::UnknownTechnology(tech.to_string()))?;
    let w = matrix
        .weights
        .get(level)
        .ok_or_else(|| TechError::UnknownLevel(level.to_string()))?;
    let [dyn_energy, standby, latency, endurance] = r.map(u32::from);
    let expanded = [dyn_energy, standby, dyn_energy, standby, latency, endurance];
    Ok(w.iter()
        .zip(expanded)
        .map(|(weight, rating)| u32::from(*weight) * rating)
        .sum())
}
