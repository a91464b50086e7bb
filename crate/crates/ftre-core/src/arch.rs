//! Architecture descriptions: primitive sets, physical gate speeds, and the
//! timing recipes that turn both into per-primitive durations.
//!
//! Architectures are data. Every shipped preset is a JSON config embedded at
//! build time; user configs with the same schema can be loaded from disk and
//! take precedence when a search directory is supplied.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::GateKind;
use crate::error::{Error, Result};

/// Family of fault-tolerant instruction sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveSet {
    Movement,
    Lattice,
}

/// Published speed column of a preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedColumn {
    #[default]
    Current,
    Proposed,
}

impl SpeedColumn {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeedColumn::Current => "current",
            SpeedColumn::Proposed => "proposed",
        }
    }

    pub fn parse(s: &str) -> Option<SpeedColumn> {
        match s {
            "current" => Some(SpeedColumn::Current),
            "proposed" => Some(SpeedColumn::Proposed),
            _ => None,
        }
    }
}

/// Alley-movement time model: either a fixed per-move cost or the
/// acceleration-limited distance formula with clamping bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AMoveSpec {
    Fixed { us: f64 },
    Formula { min_us: f64, max_us: f64 },
}

/// Physical operation times in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpeeds {
    #[serde(rename = "1q")]
    pub t_1q: f64,
    #[serde(rename = "2q")]
    pub t_2q: f64,
    #[serde(rename = "meas")]
    pub t_meas: f64,
    #[serde(rename = "reset")]
    pub t_reset: f64,
    #[serde(rename = "zmove", default, skip_serializing_if = "Option::is_none")]
    pub t_zmove: Option<f64>,
    #[serde(rename = "amove", default, skip_serializing_if = "Option::is_none")]
    pub a_move: Option<AMoveSpec>,
}

/// Physical-operation classes a recipe may count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhysClass {
    #[serde(rename = "1q")]
    OneQ,
    #[serde(rename = "2q")]
    TwoQ,
    #[serde(rename = "meas")]
    Meas,
    #[serde(rename = "reset")]
    Reset,
    #[serde(rename = "zmove")]
    ZMove,
    #[serde(rename = "amove")]
    AMove,
    /// One syndrome-extraction round, expanded from the SE recipe.
    #[serde(rename = "se")]
    Se,
}

impl PhysClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PhysClass::OneQ => "1q",
            PhysClass::TwoQ => "2q",
            PhysClass::Meas => "meas",
            PhysClass::Reset => "reset",
            PhysClass::ZMove => "zmove",
            PhysClass::AMove => "amove",
            PhysClass::Se => "se",
        }
    }
}

/// Pre-compiled physical decomposition of one primitive.
///
/// The duration is `factor * (sum counts[class] * speed(class) + residual)`,
/// where `factor` is the code distance when `scales_with_d` is set and 1
/// otherwise. Calibrated recipes carry their time entirely in `residual_us`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct PrimitiveRecipe {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<PhysClass, f64>,
    #[serde(default)]
    pub residual_us: f64,
    /// Time multiplies by the expected cultivation repetitions.
    #[serde(default)]
    pub rep_scaling: bool,
    /// Counts and residual are per code-distance round.
    #[serde(default)]
    pub scales_with_d: bool,
}

/// Whether one logical step costs one syndrome round or a full distance worth
/// of rounds, per the decoding strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyndromeRounds {
    One,
    PerDistance,
}

impl SyndromeRounds {
    pub fn count(self, d: u32) -> u32 {
        match self {
            SyndromeRounds::One => 1,
            SyndromeRounds::PerDistance => d,
        }
    }
}

/// Movement abilities of the physical platform; these determine which moves
/// the compiler must insert around entangling gates and readout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementCapabilities {
    pub in_place_entangle: bool,
    pub in_place_readout: bool,
    pub movement: bool,
}

/// Default layout parameters carried by a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutDefaults {
    pub strategy: String,
    pub t_factories: u32,
    pub s_factories: u32,
}

/// A fully-resolved architecture: one preset at one speed column, or a user
/// config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Architecture {
    pub name: String,
    pub column: SpeedColumn,
    pub primitive_set: PrimitiveSet,
    pub primitives: BTreeSet<GateKind>,
    pub speeds: GateSpeeds,
    pub recipes: BTreeMap<GateKind, PrimitiveRecipe>,
    pub movement_capabilities: MovementCapabilities,
    pub d: u32,
    pub syndrome_rounds: SyndromeRounds,
    pub folded_cultivation: bool,
    pub post_op_correction: bool,
    pub idling_se: bool,
    pub se_frequency: u32,
    /// Expected cultivation repetitions per T and S resource state.
    pub rep_t: f64,
    pub rep_s: f64,
    pub layout: LayoutDefaults,
}

const ALL_PAULIS: [GateKind; 4] = [GateKind::I, GateKind::X, GateKind::Y, GateKind::Z];

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.d < 3 || self.d.is_multiple_of(2) {
            return Err(Error::Arch(format!("code distance must be odd and at least 3, got {}", self.d)));
        }
        if self.se_frequency == 0 {
            return Err(Error::Arch("se_frequency must be at least 1".into()));
        }
        if !(self.rep_t > 0.0 && self.rep_s > 0.0) {
            return Err(Error::Arch("cultivation repetition parameters must be positive".into()));
        }
        for (label, v) in [
            ("1q", self.speeds.t_1q),
            ("2q", self.speeds.t_2q),
            ("meas", self.speeds.t_meas),
            ("reset", self.speeds.t_reset),
            ("zmove", self.speeds.t_zmove.unwrap_or(0.0)),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Arch(format!("speed `{label}` must be a nonnegative number, got {v}")));
            }
        }
        let required: &[GateKind] = match self.primitive_set {
            PrimitiveSet::Movement => &[
                GateKind::H,
                GateKind::S,
                GateKind::Cnot,
                GateKind::Se,
                GateKind::Measure,
                GateKind::Reset,
                GateKind::CultT,
                GateKind::CultS,
            ],
            PrimitiveSet::Lattice => &[
                GateKind::H,
                GateKind::Merge,
                GateKind::Split,
                GateKind::Se,
                GateKind::Measure,
                GateKind::Reset,
                GateKind::CultT,
                GateKind::CultS,
            ],
        };
        for &kind in required.iter().chain(ALL_PAULIS.iter()) {
            if !self.primitives.contains(&kind) {
                return Err(Error::Arch(format!(
                    "{} architecture is missing required primitive {kind}",
                    self.name
                )));
            }
        }
        match self.primitive_set {
            PrimitiveSet::Movement => {
                if self.primitives.contains(&GateKind::Merge) || self.primitives.contains(&GateKind::Split) {
                    return Err(Error::Arch(format!("movement architecture {} must not contain Merge/Split", self.name)));
                }
                if !self.primitives.contains(&GateKind::ZMove) && !self.primitives.contains(&GateKind::AMove) {
                    return Err(Error::Arch(format!("movement architecture {} needs ZMove or AMove", self.name)));
                }
            }
            PrimitiveSet::Lattice => {
                for bad in [GateKind::Cnot, GateKind::S, GateKind::ZMove, GateKind::AMove] {
                    if self.primitives.contains(&bad) {
                        return Err(Error::Arch(format!(
                            "lattice architecture {} must not contain transversal/movement primitive {bad}",
                            self.name
                        )));
                    }
                }
            }
        }
        for &kind in &self.primitives {
            let recipe = self.recipes.get(&kind).ok_or_else(|| {
                Error::Arch(format!("{}: no recipe for primitive {kind}", self.name))
            })?;
            if recipe.rep_scaling && !matches!(kind, GateKind::CultT | GateKind::CultS) {
                return Err(Error::Arch(format!("{kind}: rep_scaling is only valid on cultivation recipes")));
            }
            if recipe.residual_us < 0.0 || recipe.counts.values().any(|&c| c < 0.0) {
                return Err(Error::Arch(format!("{kind}: recipe counts and residual must be nonnegative")));
            }
            if kind == GateKind::Se && recipe.counts.contains_key(&PhysClass::Se) {
                return Err(Error::Arch("SE recipe must not reference itself".into()));
            }
        }
        Ok(())
    }

    /// Speed-table value for one physical operation class, in microseconds.
    pub fn class_speed(&self, class: PhysClass) -> Result<f64> {
        match class {
            PhysClass::OneQ => Ok(self.speeds.t_1q),
            PhysClass::TwoQ => Ok(self.speeds.t_2q),
            PhysClass::Meas => Ok(self.speeds.t_meas),
            PhysClass::Reset => Ok(self.speeds.t_reset),
            PhysClass::ZMove => self.speeds.t_zmove.ok_or_else(|| {
                Error::Arch(format!("{}: recipe references zmove but no Z-Move speed is configured", self.name))
            }),
            PhysClass::AMove => match self.a_move_spec()? {
                AMoveSpec::Fixed { us } => Ok(us),
                AMoveSpec::Formula { .. } => Err(Error::Arch(format!(
                    "{}: A-Move is in formula mode; its time needs a travel distance",
                    self.name
                ))),
            },
            PhysClass::Se => self.se_round_us(),
        }
    }

    pub fn a_move_spec(&self) -> Result<AMoveSpec> {
        self.speeds.a_move.ok_or_else(|| {
            Error::Arch(format!("{}: no A-Move speed is configured", self.name))
        })
    }

    fn eval_recipe(&self, recipe: &PrimitiveRecipe, d: u32) -> Result<f64> {
        let mut us = recipe.residual_us;
        for (&class, &count) in &recipe.counts {
            us += count * self.class_speed(class)?;
        }
        Ok(if recipe.scales_with_d { us * d as f64 } else { us })
    }

    /// Duration of one syndrome-extraction round in microseconds.
    pub fn se_round_us(&self) -> Result<f64> {
        let recipe = self
            .recipes
            .get(&GateKind::Se)
            .ok_or_else(|| Error::Arch(format!("{}: no SE recipe", self.name)))?;
        let mut us = recipe.residual_us;
        for (&class, &count) in &recipe.counts {
            us += count * self.class_speed(class)?;
        }
        Ok(us)
    }

    /// Duration of `kind` at distance `d`, in microseconds, full precision.
    ///
    /// Cultivation primitives multiply their attempt time by the expected
    /// repetitions. The SE value is per round for recipes that do not scale
    /// with distance; the compiler applies the decoding-dependent round
    /// count on top.
    pub fn primitive_time(&self, kind: GateKind, d: u32) -> Result<f64> {
        if !self.primitives.contains(&kind) {
            return Err(Error::Arch(format!(
                "{} does not support primitive {kind}",
                self.name
            )));
        }
        let recipe = self
            .recipes
            .get(&kind)
            .ok_or_else(|| Error::Arch(format!("{}: no recipe for primitive {kind}", self.name)))?;
        let mut us = self.eval_recipe(recipe, d)?;
        if recipe.rep_scaling {
            let rep = match kind {
                GateKind::CultT => self.rep_t,
                GateKind::CultS => self.rep_s,
                _ => unreachable!("rep_scaling is validated to cultivation kinds"),
            };
            us *= rep;
        }
        Ok(us)
    }

    /// `primitive_time` rounded half-up to whole microseconds, as published.
    pub fn primitive_time_rounded(&self, kind: GateKind, d: u32) -> Result<i64> {
        Ok(self.primitive_time(kind, d)?.round() as i64)
    }

    /// Number of syndrome rounds one SE primitive spans at the configured
    /// decoding strategy.
    pub fn se_rounds(&self) -> u32 {
        let recipe = self.recipes.get(&GateKind::Se);
        if recipe.is_some_and(|r| r.scales_with_d) {
            // The recipe already covers the full distance worth of rounds.
            1
        } else {
            self.syndrome_rounds.count(self.d)
        }
    }
}

/// Acceleration-limited movement time over `l_sites` lattice sites, before
/// clamping.
pub fn a_move_formula_us(l_sites: f64) -> f64 {
    debug_assert!(l_sites >= 0.0);
    2.0 * (12.0 * l_sites / 5500e-6).sqrt()
}

/// Movement time with optional clamping bounds.
pub fn a_move_time(l_sites: f64, clamp: Option<(f64, f64)>) -> f64 {
    let t = a_move_formula_us(l_sites);
    match clamp {
        Some((lo, hi)) => t.clamp(lo, hi),
        None => t,
    }
}

impl AMoveSpec {
    /// Time for a move spanning `l_sites` under this spec.
    pub fn time_us(&self, l_sites: f64) -> f64 {
        match *self {
            AMoveSpec::Fixed { us } => us,
            AMoveSpec::Formula { min_us, max_us } => a_move_time(l_sites, Some((min_us, max_us))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: String,
    #[serde(default)]
    column: Option<SpeedColumn>,
    primitive_set: PrimitiveSet,
    primitives: Vec<String>,
    #[serde(default)]
    movement_capabilities: MovementCapabilities,
    speeds: GateSpeeds,
    recipes: BTreeMap<String, PrimitiveRecipe>,
    kwargs: KwargsConfig,
    layout: LayoutDefaults,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KwargsConfig {
    d: u32,
    syndrome_rounds: SyndromeRoundsConfig,
    #[serde(default)]
    folded: bool,
    #[serde(default = "default_true")]
    post_op_correction: bool,
    #[serde(default)]
    idling_se: bool,
    #[serde(default = "default_se_frequency")]
    se_frequency: u32,
    #[serde(default = "default_rep_t")]
    rep_t: f64,
    #[serde(default = "default_rep_s")]
    rep_s: f64,
}

fn default_true() -> bool {
    true
}

fn default_se_frequency() -> u32 {
    1
}

fn default_rep_t() -> f64 {
    100.0
}

fn default_rep_s() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SyndromeRoundsConfig {
    Count(u32),
    Symbol(String),
}

/// Parse and validate an architecture config.
pub fn load_architecture(config: &str) -> Result<Architecture> {
    let de = &mut serde_json::Deserializer::from_str(config);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Arch(format!("config schema error at {}: {}", e.path(), e.inner()))
    })?;

    let mut primitives = BTreeSet::new();
    for name in &file.primitives {
        let kind = GateKind::parse(name)
            .ok_or_else(|| Error::Arch(format!("config schema error at primitives: unknown primitive `{name}`")))?;
        primitives.insert(kind);
    }
    let mut recipes = BTreeMap::new();
    for (name, recipe) in file.recipes {
        let kind = GateKind::parse(&name)
            .ok_or_else(|| Error::Arch(format!("config schema error at recipes.{name}: unknown primitive")))?;
        recipes.insert(kind, recipe);
    }
    let syndrome_rounds = match file.kwargs.syndrome_rounds {
        SyndromeRoundsConfig::Count(1) => SyndromeRounds::One,
        SyndromeRoundsConfig::Count(n) if n == file.kwargs.d => SyndromeRounds::PerDistance,
        SyndromeRoundsConfig::Count(n) => {
            return Err(Error::Arch(format!(
                "config schema error at kwargs.syndrome_rounds: must be 1 or d (= {}), got {n}",
                file.kwargs.d
            )));
        }
        SyndromeRoundsConfig::Symbol(s) if s == "d" => SyndromeRounds::PerDistance,
        SyndromeRoundsConfig::Symbol(s) => {
            return Err(Error::Arch(format!(
                "config schema error at kwargs.syndrome_rounds: must be 1 or \"d\", got \"{s}\""
            )));
        }
    };

    let arch = Architecture {
        name: file.name,
        column: file.column.unwrap_or_default(),
        primitive_set: file.primitive_set,
        primitives,
        speeds: file.speeds,
        recipes,
        movement_capabilities: file.movement_capabilities,
        d: file.kwargs.d,
        syndrome_rounds,
        folded_cultivation: file.kwargs.folded,
        post_op_correction: file.kwargs.post_op_correction,
        idling_se: file.kwargs.idling_se,
        se_frequency: file.kwargs.se_frequency,
        rep_t: file.kwargs.rep_t,
        rep_s: file.kwargs.rep_s,
        layout: file.layout,
    };
    arch.validate()?;
    Ok(arch)
}

macro_rules! presets {
    ($(($name:literal, $col:literal, $file:literal)),+ $(,)?) => {
        &[$(($name, $col, include_str!(concat!("../presets/", $file)))),+]
    };
}

/// Embedded preset configs: (name, column, source).
pub const PRESETS: &[(&str, &str, &str)] = presets![
    ("ssm", "current", "ssm.current.json"),
    ("ssm", "proposed", "ssm.proposed.json"),
    ("ssm-fold", "current", "ssm-fold.current.json"),
    ("ssm-fold", "proposed", "ssm-fold.proposed.json"),
    ("mzo", "current", "mzo.current.json"),
    ("mzo", "proposed", "mzo.proposed.json"),
    ("mzo-fold", "current", "mzo-fold.current.json"),
    ("mzo-fold", "proposed", "mzo-fold.proposed.json"),
    ("dsm", "current", "dsm.current.json"),
    ("dsm", "proposed", "dsm.proposed.json"),
    ("dsm-fold", "current", "dsm-fold.current.json"),
    ("dsm-fold", "proposed", "dsm-fold.proposed.json"),
    ("dsnm", "current", "dsnm.current.json"),
    ("dsnm", "proposed", "dsnm.proposed.json"),
    ("ssoq", "current", "ssoq.current.json"),
];

/// Names of all shipped presets, without fold variants duplicated.
pub fn preset_names() -> Vec<&'static str> {
    let mut names: Vec<&str> = PRESETS.iter().map(|(n, _, _)| *n).collect();
    names.dedup();
    names
}

/// Load a shipped preset by name and speed column. When `search_dir` is
/// given, a file `<name>.<column>.json` there overrides the embedded config.
pub fn load_preset(name: &str, column: SpeedColumn, search_dir: Option<&Path>) -> Result<Architecture> {
    let name_lower = name.to_ascii_lowercase();
    if let Some(dir) = search_dir {
        let path = dir.join(format!("{name_lower}.{}.json", column.as_str()));
        if path.is_file() {
            let text = std::fs::read_to_string(&path)?;
            return load_architecture(&text)
                .map_err(|e| Error::Arch(format!("{}: {e}", path.display())));
        }
    }
    let source = PRESETS
        .iter()
        .find(|(n, c, _)| *n == name_lower && *c == column.as_str())
        .map(|(_, _, s)| *s)
        .ok_or_else(|| {
            Error::Arch(format!(
                "unknown preset `{name}@{}`; shipped presets: {}",
                column.as_str(),
                preset_names().join(", ")
            ))
        })?;
    load_architecture(source)
}

/// Switch a preset name between its folded and unfolded variant.
pub fn fold_variant(name: &str, folded: bool) -> String {
    let base = name
        .strip_suffix("-fold")
        .unwrap_or(name)
        .to_ascii_lowercase();
    if folded {
        format!("{base}-fold")
    } else {
        base
    }
}

/// Compare the transversal S implementation against S gate teleportation on
/// a movement preset: transversal uses the proposed speed column, the
/// teleport alternative (CNOT + move + Measure) the current one, as
/// published. Returns `(transversal_us, teleport_us)` rounded half-up.
pub fn s_injection_comparison(preset: &str, search_dir: Option<&Path>) -> Result<(i64, i64)> {
    let current = load_preset(preset, SpeedColumn::Current, search_dir)?;
    let proposed = load_preset(preset, SpeedColumn::Proposed, search_dir)?;
    if current.primitive_set != PrimitiveSet::Movement {
        return Err(Error::Arch(format!(
            "s-injection comparison applies to movement architectures, not {preset}"
        )));
    }
    let transversal = proposed.primitive_time(GateKind::S, proposed.d)?;
    let move_us = if current.primitives.contains(&GateKind::AMove) {
        current.primitive_time(GateKind::AMove, current.d)?
    } else {
        current.primitive_time(GateKind::ZMove, current.d)?
    };
    let teleport = current.primitive_time(GateKind::Cnot, current.d)?
        + move_us
        + current.primitive_time(GateKind::Measure, current.d)?;
    Ok((transversal.round() as i64, teleport.round() as i64))
}
