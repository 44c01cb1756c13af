//! Run configuration: strict TOML or JSON documents plus named presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Selection;
use crate::apparatus::{ApparatusConfig, ValidationError};
use crate::compton::{flip_probability, ELECTRON_MASS_KEV};
use crate::pair::PairModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    EntangledBaseline,
    DecoherentAll,
    ClassA,
    ClassB,
    ClassC,
    ClassD,
    SFunctionEntangled,
    SFunctionClassA,
    #[serde(rename = "point_82deg")]
    Point82Deg,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::EntangledBaseline,
        Preset::DecoherentAll,
        Preset::ClassA,
        Preset::ClassB,
        Preset::ClassC,
        Preset::ClassD,
        Preset::SFunctionEntangled,
        Preset::SFunctionClassA,
        Preset::Point82Deg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::EntangledBaseline => "entangled_baseline",
            Preset::DecoherentAll => "decoherent_all",
            Preset::ClassA => "class_a",
            Preset::ClassB => "class_b",
            Preset::ClassC => "class_c",
            Preset::ClassD => "class_d",
            Preset::SFunctionEntangled => "s_function_entangled",
            Preset::SFunctionClassA => "s_function_class_a",
            Preset::Point82Deg => "point_82deg",
        }
    }

    /// Event class whose fit is the headline result.
    pub fn selection(&self) -> Selection {
        match self {
            Preset::EntangledBaseline | Preset::SFunctionEntangled | Preset::Point82Deg => {
                Selection::EntangledCandidate
            }
            Preset::DecoherentAll => Selection::Decoherent,
            Preset::ClassA | Preset::SFunctionClassA => Selection::A,
            Preset::ClassB => Selection::B,
            Preset::ClassC => Selection::C,
            Preset::ClassD => Selection::D,
        }
    }

    fn uses_gagg(&self) -> bool {
        !matches!(
            self,
            Preset::EntangledBaseline | Preset::SFunctionEntangled | Preset::Point82Deg
        )
    }

    /// Values the preset pins, as (field, value) pairs.
    pub fn fixed_fields(&self) -> Vec<(&'static str, String)> {
        let c = RunConfig::from_preset(*self);
        vec![
            ("model", c.model.to_string()),
            ("decoherent_model", c.decoherent_model.to_string()),
            ("backscatter_model", c.backscatter_model.to_string()),
            (
                "apparatus.gagg_enabled",
                c.apparatus.gagg_enabled.to_string(),
            ),
            (
                "apparatus.point_detector_mode",
                c.apparatus.point_detector_mode.to_string(),
            ),
            (
                "apparatus.theta_window",
                format!(
                    "[{}, {}]",
                    c.apparatus.theta_window[0], c.apparatus.theta_window[1]
                ),
            ),
        ]
    }

    fn apply(&self, c: &mut RunConfig) {
        c.model = PairModel::EntangledPW;
        c.decoherent_model = PairModel::MixedHM;
        c.backscatter_model = default_backscatter_model();
        c.apparatus.gagg_enabled = self.uses_gagg();
        if *self == Preset::Point82Deg {
            c.apparatus.point_detector_mode = true;
            c.apparatus.theta_window = [82.0, 82.0];
        } else {
            c.apparatus.point_detector_mode = false;
            c.apparatus.theta_window = [80.0, 100.0];
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown preset `{0}`")]
pub struct UnknownPreset(pub String);

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json_summary: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listmode: Option<PathBuf>,
}

fn default_model() -> PairModel {
    PairModel::EntangledPW
}

fn default_decoherent_model() -> PairModel {
    PairModel::MixedHM
}

/// Depolarized pairing weighted by the single-backscatter flip probability.
pub fn default_backscatter_model() -> PairModel {
    let w = flip_probability(ELECTRON_MASS_KEV, std::f64::consts::PI).expect("valid constants");
    PairModel::DepolarizedMixture { w }
}

fn default_n_events() -> u64 {
    1_000_000
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// State of pairs that reach the plastics without a GAGG interaction.
    #[serde(default = "default_model")]
    pub model: PairModel,
    /// State of pairs after a GAGG Compton scatter.
    #[serde(default = "default_decoherent_model")]
    pub decoherent_model: PairModel,
    /// State of pairs whose arm-1 photon backscattered in the plastic.
    #[serde(default = "default_backscatter_model")]
    pub backscatter_model: PairModel,
    #[serde(default)]
    pub apparatus: ApparatusConfig,
    /// Attempted events.
    #[serde(default = "default_n_events")]
    pub n_events: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            model: default_model(),
            decoherent_model: default_decoherent_model(),
            backscatter_model: default_backscatter_model(),
            apparatus: ApparatusConfig::default(),
            n_events: default_n_events(),
            seed: 0,
            workers: default_workers(),
            outputs: Outputs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let mut c = Self {
            preset: Some(preset),
            ..Self::default()
        };
        preset.apply(&mut c);
        c
    }

    /// Re-applies the preset, if any, over the current fields.
    pub fn apply_preset(&mut self) {
        if let Some(p) = self.preset {
            p.apply(self);
        }
    }

    pub fn selection(&self) -> Selection {
        match self.preset {
            Some(p) => p.selection(),
            None if self.apparatus.gagg_enabled => Selection::Decoherent,
            None => Selection::EntangledCandidate,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.n_events == 0 {
            return Err(ValidationError::new("n_events", "must be at least 1"));
        }
        // TOML integers are signed 64-bit.
        if self.n_events > i64::MAX as u64 {
            return Err(ValidationError::new(
                "n_events",
                "must fit in a signed 64-bit integer",
            ));
        }
        if self.seed > i64::MAX as u64 {
            return Err(ValidationError::new(
                "seed",
                "must fit in a signed 64-bit integer",
            ));
        }
        if self.workers == 0 {
            return Err(ValidationError::new("workers", "must be at least 1"));
        }
        self.apparatus
            .validate()
            .map_err(|e| ValidationError::new(format!("apparatus.{}", e.field), e.reason))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses a TOML document, or JSON when the text starts with `{`. Unknown
/// keys are rejected, defaults filled, the preset applied, and the result
/// validated.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config: RunConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?
    };
    config.apply_preset();
    config.validate()?;
    Ok(config)
}

/// TOML form of `config`; [`parse_config`] reads it back unchanged.
pub fn emit_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("run configuration always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config("model = \"entangled\"\nn_events = 1000\nseed = 1\n").unwrap();
        assert_eq!(c.apparatus.n_counters_per_arm, 16);
        assert_eq!(c.apparatus.theta_window, [80.0, 100.0]);
        assert_eq!(c.n_events, 1000);
        assert_eq!(c.seed, 1);
        assert_eq!(c.workers, 1);
        assert_eq!(c.decoherent_model, PairModel::MixedHM);
        match c.backscatter_model {
            PairModel::DepolarizedMixture { w } => assert!((w - 0.2).abs() < 1e-15),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn json_documents_parse() {
        let c = parse_config(r#"{"model": "mixed_ba", "n_events": 5, "seed": 9, "apparatus": {"gagg_enabled": true}}"#).unwrap();
        assert_eq!(c.model, PairModel::MixedBA);
        assert!(c.apparatus.gagg_enabled);
    }

    #[test]
    fn point_preset() {
        let c = parse_config("preset = \"point_82deg\"\n").unwrap();
        assert!(c.apparatus.point_detector_mode);
        assert_eq!(c.apparatus.theta_window, [82.0, 82.0]);
        assert_eq!(c.model, PairModel::EntangledPW);
    }

    #[test]
    fn preset_overrides_conflicting_fields() {
        let c = parse_config("preset = \"entangled_baseline\"\nmodel = \"mixed_ba\"\n[apparatus]\ngagg_enabled = true\n").unwrap();
        assert_eq!(c.model, PairModel::EntangledPW);
        assert!(!c.apparatus.gagg_enabled);
        assert_eq!(c.selection(), Selection::EntangledCandidate);
    }

    #[test]
    fn pitch_violation_is_named() {
        let err = parse_config("[apparatus]\ncounter_pitch = 20\n").unwrap_err();
        match err {
            ConfigError::Invalid(v) => assert_eq!(v.field, "apparatus.counter_pitch"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = parse_config("seed = 1\n\nmodle = \"entangled\"\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("modle"), "{message}");
            }
            other => panic!("{other}"),
        }
        let err = parse_config("[apparatus]\nn_counter = 4\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
        let err = parse_config("{\"seed\": 1,\n \"bogus\": 2}").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }), "{err}");
        let err = parse_config("model = \"bell\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn zero_events_rejected() {
        let err = parse_config("n_events = 0\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Invalid(ValidationError::new("n_events", "must be at least 1"))
        );
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            let c = RunConfig::from_preset(p);
            c.validate().unwrap();
            assert_eq!(parse_config(&emit_config(&c)).unwrap(), c);
        }
    }

    fn any_model() -> impl Strategy<Value = PairModel> {
        prop_oneof![
            Just(PairModel::EntangledPW),
            Just(PairModel::MixedHM),
            Just(PairModel::MixedBA),
            Just(PairModel::ProductFixedBasis),
            (0.0f64..=1.0).prop_map(|w| PairModel::DepolarizedMixture { w }),
        ]
    }

    prop_compose! {
        fn any_config()(
            model in any_model(),
            decoherent in any_model(),
            n_events in 1u64..u64::MAX / 2,
            seed in 0..=i64::MAX as u64,
            workers in 1usize..64,
            n4 in 1usize..16,
            lo in 1.0f64..90.0,
            width in 0.0f64..80.0,
            gagg in any::<bool>(),
            point in any::<bool>(),
            p_int in 0.0f64..=1.0,
            fwhm in 0.0f64..0.5,
            listmode in any::<bool>(),
        ) -> RunConfig {
            let n = 4 * n4;
            RunConfig {
                preset: None,
                model,
                decoherent_model: decoherent,
                backscatter_model: PairModel::DepolarizedMixture { w: 0.2 },
                apparatus: ApparatusConfig {
                    n_counters_per_arm: n,
                    counter_pitch: 360.0 / n as f64,
                    theta_window: [lo, lo + width],
                    gagg_enabled: gagg,
                    point_detector_mode: point,
                    gagg_interaction_probability: p_int,
                    nai_resolution_fwhm_frac_at_511: fwhm,
                    ..ApparatusConfig::default()
                },
                n_events,
                seed,
                workers,
                outputs: Outputs {
                    listmode: listmode.then(|| PathBuf::from("out/events.csv")),
                    ..Outputs::default()
                },
            }
        }
    }

    proptest! {
        #[test]
        fn config_round_trip(c in any_config()) {
            prop_assume!(c.validate().is_ok());
            let text = emit_config(&c);
            prop_assert_eq!(parse_config(&text).unwrap(), c);
        }
    }
}
