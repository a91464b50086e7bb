//! Resolution of architecture and layout flags into core configuration.
//!
//! Precedence: CLI flags > config file > preset defaults. Presets are
//! addressed as `preset:NAME[@COLUMN]` and may be shadowed by files named
//! `NAME.COLUMN.json` under `$FTRE_CONFIG_DIR`.

use std::path::PathBuf;

use ftre::arch::{fold_variant, load_architecture, load_preset, SyndromeRounds};
use ftre::layout::generate_layout;
use ftre::{Architecture, LayoutGrid, LayoutStrategy, SpeedColumn};

use crate::{config_err, ArchFlags, CliError, CliResult, DecodingArg, LayoutFlags, OnOff};

/// Preset search directory taken from the environment.
pub fn config_dir() -> Option<PathBuf> {
    std::env::var_os("FTRE_CONFIG_DIR").map(PathBuf::from)
}

pub fn resolve_arch(flags: &ArchFlags) -> CliResult<Architecture> {
    let dir = config_dir();
    if let Some(spec) = flags.arch.strip_prefix("preset:") {
        let (raw_name, at_column) = match spec.split_once('@') {
            Some((name, col)) => {
                let parsed = SpeedColumn::parse(col).ok_or_else(|| {
                    config_err(format!("unknown speed column {col:?} in --arch {spec:?}"))
                })?;
                (name, Some(parsed))
            }
            None => (spec, None),
        };
        let column = match (at_column, flags.speeds.map(SpeedColumn::from)) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err(format!(
                    "--arch names speed column {} but --speeds says {}",
                    a.as_str(),
                    b.as_str()
                )));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => SpeedColumn::Current,
        };
        let mut name = raw_name.to_ascii_lowercase();
        if let Some(folded) = flags.folded {
            name = fold_variant(&name, folded == OnOff::On);
        }
        let mut arch = load_preset(&name, column, dir.as_deref())?;
        apply_decoding(&mut arch, flags.decoding);
        Ok(arch)
    } else {
        if flags.folded.is_some() {
            return Err(config_err(
                "--folded only applies to presets; set kwargs.folded in the config file",
            ));
        }
        if flags.speeds.is_some() {
            return Err(config_err(
                "--speeds only applies to presets; a config file carries one timing column",
            ));
        }
        let text = std::fs::read_to_string(&flags.arch).map_err(|e| {
            CliError::Core(ftre::Error::Arch(format!(
                "cannot read architecture config {:?}: {e}",
                flags.arch
            )))
        })?;
        let mut arch = load_architecture(&text)?;
        apply_decoding(&mut arch, flags.decoding);
        Ok(arch)
    }
}

pub fn apply_decoding(arch: &mut Architecture, decoding: Option<DecodingArg>) {
    if let Some(mode) = decoding {
        arch.syndrome_rounds = match mode {
            DecodingArg::Correlated => SyndromeRounds::One,
            DecodingArg::Standard => SyndromeRounds::PerDistance,
        };
    }
}

/// Builds the layout for `n_data` qubits, preferring flag overrides and
/// falling back to the architecture's defaults.
pub fn resolve_layout(
    arch: &Architecture,
    flags: &LayoutFlags,
    n_data: u32,
) -> CliResult<LayoutGrid> {
    let strategy = match flags.layout {
        Some(l) => LayoutStrategy::from(l),
        None => LayoutStrategy::parse(&arch.layout.strategy).ok_or_else(|| {
            config_err(format!(
                "architecture {} declares unknown layout strategy {:?}",
                arch.name, arch.layout.strategy
            ))
        })?,
    };
    let t = flags.factories_t.unwrap_or(arch.layout.t_factories);
    let s = flags.factories_s.unwrap_or(arch.layout.s_factories);
    Ok(generate_layout(strategy, n_data, t, s)?)
}
