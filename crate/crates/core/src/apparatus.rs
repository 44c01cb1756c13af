//! Parametric model of the two-arm polarimeter: optional GAGG pre-scatter on
//! arm 1, plastic scatterers, NaI rings, detector response and event classes.
//!
//! Geometry is not ray-traced. The polar acceptance is a window on the plastic
//! scattering angle and the azimuth is binned by counter pitch.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compton::{
    epsilon_unchecked, DomainError, PhotonState, ScatterSampler, ELECTRON_MASS_KEV,
};
use crate::geometry::Vec3;
use crate::pair::{PairKinematics, PairModel, PairSampler};

const DEG: f64 = PI / 180.0;
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Energy boxes separating the GAGG-tagged classes. Estimates from two-step
/// Compton kinematics; all bounds in keV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassBands {
    /// Class a: 0 < E_gagg < this, NaI inside the main window.
    pub a_gagg_max: f64,
    /// Class b NaI band (high), used with E_gagg in [a_gagg_max, gagg_max].
    pub b_nai: [f64; 2],
    /// Class c NaI band (low), half open at the top.
    pub c_nai: [f64; 2],
    /// Class d GAGG band (second scatter near 90°).
    pub d_gagg: [f64; 2],
    /// Class d NaI band (backscattered photon).
    pub d_nai: [f64; 2],
}

impl Default for ClassBands {
    fn default() -> Self {
        Self {
            a_gagg_max: 30.0,
            b_nai: [250.0, 420.0],
            c_nai: [150.0, 250.0],
            d_gagg: [25.0, 65.0],
            d_nai: [80.0, 150.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApparatusConfig {
    pub n_counters_per_arm: usize,
    /// Degrees.
    pub counter_pitch: f64,
    /// Accepted plastic scattering angles, degrees. Equal bounds fix θ.
    pub theta_window: [f64; 2],
    /// cm; documentation only.
    pub plastic_separation: f64,
    /// cm; documentation only.
    pub source_offset_toward_gagg_arm: f64,
    pub gagg_enabled: bool,
    pub gagg_interaction_probability: f64,
    /// keV.
    pub gagg_threshold: f64,
    /// keV; upper edge of the b/c GAGG band.
    pub gagg_max: f64,
    /// Largest GAGG deflection that still reaches the plastic, degrees.
    pub gagg_max_deflection_deg: f64,
    /// Probability that a photon passing the GAGG backscatters in the plastic.
    pub backscatter_probability: f64,
    /// Smallest plastic backscatter angle, degrees.
    pub backscatter_theta_min_deg: f64,
    /// keV.
    pub nai_window: [f64; 2],
    pub nai_resolution_fwhm_frac_at_511: f64,
    pub gagg_resolution_fwhm_frac_at_170: f64,
    pub plastic_resolution_fwhm_frac_at_255: f64,
    /// Ideal point counters: azimuths sit on the counter axes.
    pub point_detector_mode: bool,
    pub class_bands: ClassBands,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        Self {
            n_counters_per_arm: 16,
            counter_pitch: 22.5,
            theta_window: [80.0, 100.0],
            plastic_separation: 70.0,
            source_offset_toward_gagg_arm: 10.0,
            gagg_enabled: false,
            gagg_interaction_probability: 0.25,
            gagg_threshold: 2.0,
            gagg_max: 110.0,
            gagg_max_deflection_deg: 45.0,
            backscatter_probability: 0.05,
            backscatter_theta_min_deg: 160.0,
            nai_window: [235.0, 280.0],
            nai_resolution_fwhm_frac_at_511: 0.09,
            gagg_resolution_fwhm_frac_at_170: 0.10,
            plastic_resolution_fwhm_frac_at_255: 0.20,
            point_detector_mode: false,
            class_bands: ClassBands::default(),
        }
    }
}

/// A configuration value that breaks an invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

fn ordered(field: &str, band: [f64; 2]) -> Result<(), ValidationError> {
    if band.iter().all(|v| v.is_finite()) && band[0] <= band[1] {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("bounds {band:?} must be finite and ordered"),
        ))
    }
}

fn probability(field: &str, p: f64) -> Result<(), ValidationError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("{p} is not a probability"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ValidationError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("{v} must be finite and non-negative"),
        ))
    }
}

impl ApparatusConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.n_counters_per_arm;
        if n == 0 || !n.is_multiple_of(4) {
            return Err(ValidationError::new(
                "n_counters_per_arm",
                format!("{n} must be a positive multiple of 4 so that +90° is a counter"),
            ));
        }
        if (n as f64 * self.counter_pitch - 360.0).abs() > 1e-9 {
            return Err(ValidationError::new(
                "counter_pitch",
                format!("{n} counters × {}° ≠ 360°", self.counter_pitch),
            ));
        }
        let [lo, hi] = self.theta_window;
        if !(lo > 0.0 && hi < 180.0 && lo <= hi) {
            return Err(ValidationError::new(
                "theta_window",
                format!("[{lo}, {hi}] must be ordered and inside (0°, 180°)"),
            ));
        }
        ordered("nai_window", self.nai_window)?;
        probability(
            "gagg_interaction_probability",
            self.gagg_interaction_probability,
        )?;
        probability("backscatter_probability", self.backscatter_probability)?;
        if !(self.gagg_threshold > 0.0 && self.gagg_threshold.is_finite()) {
            return Err(ValidationError::new("gagg_threshold", "must be positive"));
        }
        if !(self.gagg_max > self.class_bands.a_gagg_max) {
            return Err(ValidationError::new(
                "gagg_max",
                "must exceed class_bands.a_gagg_max",
            ));
        }
        if !(self.gagg_max_deflection_deg > 0.0 && self.gagg_max_deflection_deg <= 180.0) {
            return Err(ValidationError::new(
                "gagg_max_deflection_deg",
                "must be in (0°, 180°]",
            ));
        }
        if !(self.backscatter_theta_min_deg >= 90.0 && self.backscatter_theta_min_deg <= 180.0) {
            return Err(ValidationError::new(
                "backscatter_theta_min_deg",
                "must be in [90°, 180°]",
            ));
        }
        non_negative(
            "nai_resolution_fwhm_frac_at_511",
            self.nai_resolution_fwhm_frac_at_511,
        )?;
        non_negative(
            "gagg_resolution_fwhm_frac_at_170",
            self.gagg_resolution_fwhm_frac_at_170,
        )?;
        non_negative(
            "plastic_resolution_fwhm_frac_at_255",
            self.plastic_resolution_fwhm_frac_at_255,
        )?;
        non_negative("plastic_separation", self.plastic_separation)?;
        let bands = &self.class_bands;
        if !(bands.a_gagg_max > self.gagg_threshold) {
            return Err(ValidationError::new(
                "class_bands.a_gagg_max",
                "must exceed gagg_threshold",
            ));
        }
        ordered("class_bands.b_nai", bands.b_nai)?;
        ordered("class_bands.c_nai", bands.c_nai)?;
        ordered("class_bands.d_gagg", bands.d_gagg)?;
        ordered("class_bands.d_nai", bands.d_nai)?;
        Ok(())
    }

    pub fn theta_window_rad(&self) -> (f64, f64) {
        (self.theta_window[0] * DEG, self.theta_window[1] * DEG)
    }

    /// Counter hit by azimuth `phi` (radians, any range).
    pub fn counter_index(&self, phi: f64) -> usize {
        let pitch = self.counter_pitch * DEG;
        let k = (phi.rem_euclid(2.0 * PI) / pitch).floor() as usize;
        k.min(self.n_counters_per_arm - 1)
    }
}

/// Gaussian smearing with FWHM = fwhm_frac·√(E·ref), i.e. a fractional
/// resolution `fwhm_frac` at `ref_energy` scaling as 1/√E. Negative draws
/// clamp to 0.
pub fn detector_response<R: Rng + ?Sized>(
    true_energy: f64,
    fwhm_frac_at_ref: f64,
    ref_energy: f64,
    rng: &mut R,
) -> f64 {
    if true_energy <= 0.0 {
        return 0.0;
    }
    if fwhm_frac_at_ref == 0.0 {
        return true_energy;
    }
    let sigma = fwhm_frac_at_ref * (true_energy * ref_energy).sqrt() / FWHM_PER_SIGMA;
    let z: f64 = rng.sample(StandardNormal);
    (true_energy + sigma * z).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    EntangledCandidate,
    A,
    B,
    C,
    D,
    Rejected,
}

impl ClassTag {
    pub const ALL: [ClassTag; 6] = [
        ClassTag::EntangledCandidate,
        ClassTag::A,
        ClassTag::B,
        ClassTag::C,
        ClassTag::D,
        ClassTag::Rejected,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassTag::EntangledCandidate => "entangled_candidate",
            ClassTag::A => "a",
            ClassTag::B => "b",
            ClassTag::C => "c",
            ClassTag::D => "d",
            ClassTag::Rejected => "rejected",
        }
    }
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown class tag `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for ClassTag {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassTag::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

/// Which kinematic chain produced the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Photon 1 passes the GAGG untouched.
    Direct,
    /// Compton scatter in the GAGG, then in the plastic.
    GaggScatter,
    /// Pass through the GAGG, backscatter in the plastic, scatter back in the GAGG.
    Backscatter,
}

/// True (unsmeared) deposits, keV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthDeposits {
    pub gagg: f64,
    pub plastic1: f64,
    pub plastic2: f64,
    pub nai1: f64,
    pub nai2: f64,
    /// Energy leaving the apparatus; NaI counters absorb fully, so 0.
    pub escaped: f64,
    /// Scattering angle in the GAGG, when there was one.
    pub gagg_theta: Option<f64>,
    pub channel: Channel,
}

impl TruthDeposits {
    pub fn total(&self) -> f64 {
        self.gagg + self.plastic1 + self.plastic2 + self.nai1 + self.nai2 + self.escaped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// True pair kinematics at the plastic scatterers.
    pub kin: PairKinematics,
    pub e_gagg: f64,
    pub e_plastic1: f64,
    pub e_plastic2: f64,
    pub e_nai1: f64,
    pub e_nai2: f64,
    pub counter1: usize,
    pub counter2: usize,
    pub class_tag: ClassTag,
    pub truth: TruthDeposits,
}

fn in_band(v: f64, band: [f64; 2]) -> bool {
    v >= band[0] && v <= band[1]
}

/// Class from measured energies. The arm-2 NaI must lie in the main window.
pub fn classify_event(e: &EventRecord, config: &ApparatusConfig) -> ClassTag {
    classify_energies(e.e_gagg, e.e_nai1, e.e_nai2, config)
}

pub fn classify_energies(
    e_gagg: f64,
    e_nai1: f64,
    e_nai2: f64,
    config: &ApparatusConfig,
) -> ClassTag {
    let window = config.nai_window;
    let bands = &config.class_bands;
    if !in_band(e_nai2, window) {
        return ClassTag::Rejected;
    }
    if e_gagg == 0.0 {
        return if in_band(e_nai1, window) {
            ClassTag::EntangledCandidate
        } else {
            ClassTag::Rejected
        };
    }
    if in_band(e_gagg, bands.d_gagg) && in_band(e_nai1, bands.d_nai) {
        return ClassTag::D;
    }
    if e_gagg < bands.a_gagg_max {
        return if in_band(e_nai1, window) {
            ClassTag::A
        } else {
            ClassTag::Rejected
        };
    }
    if e_gagg <= config.gagg_max {
        if in_band(e_nai1, bands.b_nai) {
            return ClassTag::B;
        }
        if e_nai1 >= bands.c_nai[0] && e_nai1 < bands.c_nai[1] {
            return ClassTag::C;
        }
    }
    ClassTag::Rejected
}

/// Result of the GAGG stage for the arm-1 photon.
#[derive(Debug, Clone)]
pub struct GaggOutcome {
    /// Measured deposit; 0 when below threshold or without interaction.
    pub deposited: f64,
    pub true_recoil: f64,
    pub photon_after: PhotonState,
    pub interacted: bool,
    pub theta: Option<f64>,
}

/// GAGG pre-scatterer. Deflections are limited to those that still reach the
/// arm-1 plastic.
#[derive(Debug, Clone)]
pub struct Gagg {
    sampler: ScatterSampler,
    interaction_probability: f64,
    threshold: f64,
    resolution: f64,
}

impl Gagg {
    pub fn new(config: &ApparatusConfig) -> Result<Self, DomainError> {
        Ok(Self {
            sampler: ScatterSampler::new(
                ELECTRON_MASS_KEV,
                (0.0, config.gagg_max_deflection_deg * DEG),
            )?,
            interaction_probability: config.gagg_interaction_probability,
            threshold: config.gagg_threshold,
            resolution: config.gagg_resolution_fwhm_frac_at_170,
        })
    }

    /// Measured GAGG reading for a true recoil energy.
    pub fn record<R: Rng + ?Sized>(&self, true_recoil: f64, rng: &mut R) -> f64 {
        let measured = detector_response(true_recoil, self.resolution, 170.0, rng);
        if measured < self.threshold {
            0.0
        } else {
            measured
        }
    }

    /// Forced Compton scatter of `photon` in the GAGG.
    pub fn interact<R: Rng + ?Sized>(&self, photon: &PhotonState, rng: &mut R) -> GaggOutcome {
        let s = self.sampler.sample(photon, rng);
        let deposited = self.record(s.recoil_energy, rng);
        GaggOutcome {
            deposited,
            true_recoil: s.recoil_energy,
            photon_after: s.photon_out(),
            interacted: true,
            theta: Some(s.theta),
        }
    }

    /// Interacts with the configured probability, otherwise passes the photon through.
    pub fn prescatter<R: Rng + ?Sized>(&self, photon: &PhotonState, rng: &mut R) -> GaggOutcome {
        if rng.random::<f64>() < self.interaction_probability {
            self.interact(photon, rng)
        } else {
            GaggOutcome {
                deposited: 0.0,
                true_recoil: 0.0,
                photon_after: *photon,
                interacted: false,
                theta: None,
            }
        }
    }
}

/// One GAGG stage. Builds the sampler on every call; use [`Gagg`] in loops.
pub fn gagg_prescatter<R: Rng + ?Sized>(
    photon: &PhotonState,
    config: &ApparatusConfig,
    rng: &mut R,
) -> Result<GaggOutcome, DomainError> {
    Ok(Gagg::new(config)?.prescatter(photon, rng))
}

/// Pair states assigned to each chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModels {
    /// Pairs with no GAGG interaction.
    pub main: PairModel,
    /// Pairs whose arm-1 photon scattered in the GAGG.
    pub decoherent: PairModel,
    /// Pairs whose arm-1 photon backscattered in the plastic.
    pub backscatter: PairModel,
}

impl ChannelModels {
    pub fn uniform(model: PairModel) -> Self {
        Self {
            main: model,
            decoherent: model,
            backscatter: model,
        }
    }
}

fn scattered(energy: f64, theta: f64) -> f64 {
    energy * epsilon_unchecked(energy, theta)
}

struct GaggChains {
    gagg: Gagg,
    backscatter: ScatterSampler,
    decoherent: PairSampler,
    backscatter_pairs: PairSampler,
}

/// Reusable event generator for one configuration.
pub struct EventGenerator {
    config: ApparatusConfig,
    main: PairSampler,
    gagg: Option<GaggChains>,
}

impl EventGenerator {
    pub fn new(models: ChannelModels, config: &ApparatusConfig) -> Result<Self, DomainError> {
        let window = config.theta_window_rad();
        let main = PairSampler::new(models.main, ELECTRON_MASS_KEV, window)?;
        let gagg = if config.gagg_enabled {
            Some(GaggChains {
                gagg: Gagg::new(config)?,
                backscatter: ScatterSampler::new(
                    ELECTRON_MASS_KEV,
                    (config.backscatter_theta_min_deg * DEG, PI),
                )?,
                decoherent: PairSampler::new(models.decoherent, ELECTRON_MASS_KEV, window)?,
                backscatter_pairs: PairSampler::new(models.backscatter, ELECTRON_MASS_KEV, window)?,
            })
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            main,
            gagg,
        })
    }

    pub fn config(&self) -> &ApparatusConfig {
        &self.config
    }

    fn draw_pair<R: Rng + ?Sized>(
        &self,
        sampler: &PairSampler,
        rng: &mut R,
    ) -> (PairKinematics, usize, usize) {
        if self.config.point_detector_mode {
            sampler.sample_on_axes(self.config.n_counters_per_arm, rng)
        } else {
            let k = sampler.sample(rng);
            (
                k,
                self.config.counter_index(k.phi1),
                self.config.counter_index(k.phi2),
            )
        }
    }

    /// One attempted event; rejected events carry [`ClassTag::Rejected`].
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> EventRecord {
        let e0 = ELECTRON_MASS_KEV;
        let mut truth = TruthDeposits {
            gagg: 0.0,
            plastic1: 0.0,
            plastic2: 0.0,
            nai1: 0.0,
            nai2: 0.0,
            escaped: 0.0,
            gagg_theta: None,
            channel: Channel::Direct,
        };
        let mut e_gagg = 0.0;
        let (kin, counter1, counter2) = match &self.gagg {
            None => self.direct(&mut truth, rng),
            Some(chains) => {
                let photon = PhotonState::annihilation(Vec3::Z);
                let outcome = chains.gagg.prescatter(&photon, rng);
                if outcome.interacted {
                    let (kin, c1, c2) = self.draw_pair(&chains.decoherent, rng);
                    let k_final = Vec3::from_spherical(kin.theta1, kin.phi1);
                    let after = &outcome.photon_after;
                    let theta_p = after.direction().angle_to(k_final);
                    let e_nai = scattered(after.energy(), theta_p);
                    truth.channel = Channel::GaggScatter;
                    truth.gagg = outcome.true_recoil;
                    truth.gagg_theta = outcome.theta;
                    truth.plastic1 = after.energy() - e_nai;
                    truth.nai1 = e_nai;
                    e_gagg = outcome.deposited;
                    (kin, c1, c2)
                } else if rng.random::<f64>() < self.config.backscatter_probability {
                    let back = chains.backscatter.sample(&photon, rng);
                    let (kin, c1, c2) = self.draw_pair(&chains.backscatter_pairs, rng);
                    let k_final = Vec3::from_spherical(kin.theta1, kin.phi1);
                    let theta_g = back.direction_out.angle_to(k_final);
                    let e_nai = scattered(back.energy_out, theta_g);
                    truth.channel = Channel::Backscatter;
                    truth.plastic1 = back.recoil_energy;
                    truth.gagg = back.energy_out - e_nai;
                    truth.gagg_theta = Some(theta_g);
                    truth.nai1 = e_nai;
                    e_gagg = chains.gagg.record(truth.gagg, rng);
                    (kin, c1, c2)
                } else {
                    self.direct(&mut truth, rng)
                }
            }
        };
        truth.nai2 = scattered(e0, kin.theta2);
        truth.plastic2 = e0 - truth.nai2;

        let cfg = &self.config;
        let e_plastic1 = detector_response(
            truth.plastic1,
            cfg.plastic_resolution_fwhm_frac_at_255,
            255.0,
            rng,
        );
        let e_plastic2 = detector_response(
            truth.plastic2,
            cfg.plastic_resolution_fwhm_frac_at_255,
            255.0,
            rng,
        );
        let e_nai1 = detector_response(truth.nai1, cfg.nai_resolution_fwhm_frac_at_511, 511.0, rng);
        let e_nai2 = detector_response(truth.nai2, cfg.nai_resolution_fwhm_frac_at_511, 511.0, rng);
        let class_tag = classify_energies(e_gagg, e_nai1, e_nai2, cfg);
        EventRecord {
            kin,
            e_gagg,
            e_plastic1,
            e_plastic2,
            e_nai1,
            e_nai2,
            counter1,
            counter2,
            class_tag,
            truth,
        }
    }

    fn direct<R: Rng + ?Sized>(
        &self,
        truth: &mut TruthDeposits,
        rng: &mut R,
    ) -> (PairKinematics, usize, usize) {
        let drawn = self.draw_pair(&self.main, rng);
        truth.nai1 = scattered(ELECTRON_MASS_KEV, drawn.0.theta1);
        truth.plastic1 = ELECTRON_MASS_KEV - truth.nai1;
        drawn
    }
}

/// One event with a single pair model on every chain; `None` when rejected.
/// Builds the samplers on every call; use [`EventGenerator`] in loops.
pub fn simulate_event<R: Rng + ?Sized>(
    model: PairModel,
    config: &ApparatusConfig,
    rng: &mut R,
) -> Result<Option<EventRecord>, DomainError> {
    let event = EventGenerator::new(ChannelModels::uniform(model), config)?.generate(rng);
    Ok((event.class_tag != ClassTag::Rejected).then_some(event))
}
