//! Joint quantum-state models of the annihilation photon pair.
//!
//! Both photons fly along the common z axis in opposite directions. Their
//! scattering planes are described by polar angles `theta1`, `theta2` and
//! azimuths `phi1`, `phi2` measured from the shared lab x axis. The models
//! differ only in how the joint Compton density depends on those azimuths.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::compton::{
    analyzing_power_unchecked, kn_polarized_unchecked, kn_unpolarized_unchecked, DomainError,
};

/// Catalogue of pair states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairModel {
    /// (|HV⟩ + |VH⟩)/√2: density k1k2(1 − α1α2 cos 2Δφ).
    EntangledPW,
    /// Separable mixture in the Bohm–Aharonov reading: no azimuthal correlation.
    MixedBA,
    /// Separable mixture in the Hiesmayr–Moskal reading: same density as the
    /// entangled state.
    MixedHM,
    /// Equal mixture of definite H⊗V and V⊗H products in a fixed lab basis.
    ProductFixedBasis,
    /// (1 − w)·perpendicular pairing + w·parallel pairing.
    DepolarizedMixture { w: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelParseError {
    #[error("unknown pair model `{0}` (expected entangled, mixed_ba, mixed_hm, product or depolarized:<w>)")]
    UnknownTag(String),
    #[error("mixture weight `{0}` is not a number")]
    BadWeight(String),
    #[error("mixture weight {0} is outside [0, 1]")]
    WeightRange(f64),
}

impl PairModel {
    pub fn depolarized(w: f64) -> Result<Self, ModelParseError> {
        if (0.0..=1.0).contains(&w) {
            Ok(Self::DepolarizedMixture { w })
        } else {
            Err(ModelParseError::WeightRange(w))
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::EntangledPW => "entangled",
            Self::MixedBA => "mixed_ba",
            Self::MixedHM => "mixed_hm",
            Self::ProductFixedBasis => "product",
            Self::DepolarizedMixture { .. } => "depolarized",
        }
    }

    /// Whether the density depends on the azimuths only through φ1 − φ2.
    pub fn is_rotation_invariant(&self) -> bool {
        !matches!(self, Self::ProductFixedBasis)
    }
}

impl fmt::Display for PairModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DepolarizedMixture { w } => write!(f, "depolarized:{w}"),
            other => f.write_str(other.tag()),
        }
    }
}

impl FromStr for PairModel {
    type Err = ModelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "entangled" => return Ok(Self::EntangledPW),
            "mixed_ba" => return Ok(Self::MixedBA),
            "mixed_hm" => return Ok(Self::MixedHM),
            "product" => return Ok(Self::ProductFixedBasis),
            _ => {}
        }
        match s.split_once(':') {
            Some(("depolarized", w)) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| ModelParseError::BadWeight(w.to_string()))?;
                Self::depolarized(w)
            }
            _ => Err(ModelParseError::UnknownTag(s.to_string())),
        }
    }
}

impl Serialize for PairModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Scattering angles of both photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairKinematics {
    pub theta1: f64,
    pub theta2: f64,
    /// In [0, 2π).
    pub phi1: f64,
    /// In [0, 2π).
    pub phi2: f64,
    /// φ1 − φ2 folded into [0, π).
    pub delta_phi: f64,
}

impl PairKinematics {
    pub fn new(theta1: f64, phi1: f64, theta2: f64, phi2: f64) -> Self {
        let phi1 = phi1.rem_euclid(TAU);
        let phi2 = phi2.rem_euclid(TAU);
        let delta_phi = (phi1 - phi2).rem_euclid(PI);
        // rem_euclid can round up to exactly PI.
        let delta_phi = if delta_phi >= PI { 0.0 } else { delta_phi };
        Self {
            theta1,
            theta2,
            phi1,
            phi2,
            delta_phi,
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        for theta in [self.theta1, self.theta2] {
            if !theta.is_finite() {
                return Err(DomainError::NonFinite(theta));
            }
            if !(0.0..=PI).contains(&theta) {
                return Err(DomainError::PolarAngle(theta));
            }
        }
        for phi in [self.phi1, self.phi2] {
            if !phi.is_finite() {
                return Err(DomainError::NonFinite(phi));
            }
        }
        Ok(())
    }
}

fn check_energy(energy: f64) -> Result<(), DomainError> {
    if energy.is_finite() && energy > 0.0 {
        Ok(())
    } else {
        Err(DomainError::Energy(energy))
    }
}

/// Per-photon factors: unpolarized KN weight and analyzing power.
#[derive(Debug, Clone, Copy)]
struct ArmFactors {
    k: f64,
    alpha: f64,
}

impl ArmFactors {
    fn new(energy: f64, theta: f64) -> Self {
        Self {
            k: kn_unpolarized_unchecked(energy, theta),
            alpha: analyzing_power_unchecked(energy, theta),
        }
    }
}

fn density_unchecked(
    model: PairModel,
    energy: f64,
    theta1: f64,
    phi1: f64,
    theta2: f64,
    phi2: f64,
) -> f64 {
    let correlated = |sign: f64| {
        let (a1, a2) = (
            ArmFactors::new(energy, theta1),
            ArmFactors::new(energy, theta2),
        );
        a1.k * a2.k * (1.0 - sign * a1.alpha * a2.alpha * (2.0 * (phi1 - phi2)).cos())
    };
    match model {
        PairModel::EntangledPW | PairModel::MixedHM => correlated(1.0),
        PairModel::MixedBA => {
            kn_unpolarized_unchecked(energy, theta1) * kn_unpolarized_unchecked(energy, theta2)
        }
        PairModel::ProductFixedBasis => {
            // H along lab x, V along lab y; photon 1 carries H (V) with photon 2 V (H).
            let hv = kn_polarized_unchecked(energy, theta1, phi1)
                * kn_polarized_unchecked(energy, theta2, phi2 - PI / 2.0);
            let vh = kn_polarized_unchecked(energy, theta1, phi1 - PI / 2.0)
                * kn_polarized_unchecked(energy, theta2, phi2);
            0.5 * (hv + vh)
        }
        PairModel::DepolarizedMixture { w } => (1.0 - w) * correlated(1.0) + w * correlated(-1.0),
    }
}

/// Joint Compton density of both photons, up to a constant.
pub fn joint_pdf(model: PairModel, kin: &PairKinematics, energy: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    kin.validate()?;
    Ok(density_unchecked(
        model, energy, kin.theta1, kin.phi1, kin.theta2, kin.phi2,
    ))
}

/// Density of the parallel (HH + VV) pairing, used by the mixture model.
pub fn parallel_pairing_pdf(kin: &PairKinematics, energy: f64) -> Result<f64, DomainError> {
    joint_pdf(PairModel::DepolarizedMixture { w: 1.0 }, kin, energy)
}

const MARGINAL_GRID: usize = 64;

/// Amplitude μ of the cos 2Δφ term in the Δφ-marginal of the joint density,
/// normalized to its mean: marginal ∝ 1 − μ cos 2Δφ. Evaluated by periodic
/// quadrature over both azimuths.
pub fn marginal_modulation(
    model: PairModel,
    theta1: f64,
    theta2: f64,
    energy: f64,
) -> Result<f64, DomainError> {
    check_energy(energy)?;
    PairKinematics::new(theta1, 0.0, theta2, 0.0).validate()?;
    let n = MARGINAL_GRID;
    let step = TAU / n as f64;
    let (mut mean, mut cos_moment) = (0.0, 0.0);
    for j in 0..n {
        let delta = step * j as f64;
        let marginal = (0..n)
            .map(|i| {
                let phi2 = step * i as f64;
                density_unchecked(model, energy, theta1, phi2 + delta, theta2, phi2)
            })
            .sum::<f64>()
            / n as f64;
        mean += marginal;
        cos_moment += marginal * (2.0 * delta).cos();
    }
    mean /= n as f64;
    cos_moment /= n as f64;
    // marginal = a − b cos 2Δ  ⇒  ⟨marginal·cos 2Δ⟩ = −b/2.
    Ok(-2.0 * cos_moment / mean)
}

/// Closed-form counterpart of [`marginal_modulation`].
pub fn modulation_closed_form(
    model: PairModel,
    theta1: f64,
    theta2: f64,
    energy: f64,
) -> Result<f64, DomainError> {
    check_energy(energy)?;
    PairKinematics::new(theta1, 0.0, theta2, 0.0).validate()?;
    let product =
        analyzing_power_unchecked(energy, theta1) * analyzing_power_unchecked(energy, theta2);
    Ok(match model {
        PairModel::EntangledPW | PairModel::MixedHM => product,
        PairModel::MixedBA => 0.0,
        PairModel::ProductFixedBasis => 0.5 * product,
        PairModel::DepolarizedMixture { w } => (1.0 - 2.0 * w) * product,
    })
}

const ENVELOPE_SAFETY: f64 = 1.05;

/// Rejection sampler of [`joint_pdf`] restricted to a polar window on both
/// arms; uniform proposal in cos θ1, cos θ2, φ1, φ2.
#[derive(Debug, Clone)]
pub struct PairSampler {
    model: PairModel,
    energy: f64,
    cos_lo: f64,
    cos_hi: f64,
    envelope: f64,
}

impl PairSampler {
    /// `theta_window` must lie inside (0, π); equal bounds fix the polar angle.
    pub fn new(
        model: PairModel,
        energy: f64,
        theta_window: (f64, f64),
    ) -> Result<Self, DomainError> {
        check_energy(energy)?;
        let (lo, hi) = theta_window;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi >= PI || lo > hi {
            return Err(DomainError::Window(lo, hi));
        }
        let (cos_lo, cos_hi) = (hi.cos(), lo.cos());
        let nc = if lo == hi { 1 } else { 13 };
        let np = 48;
        let cos_at = |i: usize| {
            if nc == 1 {
                cos_hi
            } else {
                cos_lo + (cos_hi - cos_lo) * i as f64 / (nc - 1) as f64
            }
        };
        let mut peak: f64 = 0.0;
        for i1 in 0..nc {
            let t1 = cos_at(i1).acos();
            for i2 in 0..nc {
                let t2 = cos_at(i2).acos();
                for j1 in 0..np {
                    let p1 = TAU * j1 as f64 / np as f64;
                    for j2 in 0..np {
                        let p2 = TAU * j2 as f64 / np as f64;
                        peak = peak.max(density_unchecked(model, energy, t1, p1, t2, p2));
                    }
                }
            }
        }
        let envelope = ENVELOPE_SAFETY * peak;
        assert!(
            envelope > 0.0 && envelope.is_finite(),
            "degenerate pair envelope"
        );
        Ok(Self {
            model,
            energy,
            cos_lo,
            cos_hi,
            envelope,
        })
    }

    pub fn model(&self) -> PairModel {
        self.model
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.cos_lo == self.cos_hi {
            self.cos_lo.acos()
        } else {
            rng.random_range(self.cos_lo..=self.cos_hi)
                .clamp(-1.0, 1.0)
                .acos()
        }
    }

    fn accept<R: Rng + ?Sized>(&self, rng: &mut R, t1: f64, p1: f64, t2: f64, p2: f64) -> bool {
        let density = density_unchecked(self.model, self.energy, t1, p1, t2, p2);
        assert!(
            density <= self.envelope,
            "pair envelope {} violated by density {density}",
            self.envelope
        );
        rng.random::<f64>() * self.envelope < density
    }

    /// Continuous azimuths.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PairKinematics {
        loop {
            let t1 = self.draw_theta(rng);
            let t2 = self.draw_theta(rng);
            let p1 = TAU * rng.random::<f64>();
            let p2 = TAU * rng.random::<f64>();
            if self.accept(rng, t1, p1, t2, p2) {
                return PairKinematics::new(t1, p1, t2, p2);
            }
        }
    }

    /// Point-counter limit: azimuths restricted to `n_axes` counter axes at
    /// (j + ½)·2π/n, weighted by the density. Returns the axis indices too.
    pub fn sample_on_axes<R: Rng + ?Sized>(
        &self,
        n_axes: usize,
        rng: &mut R,
    ) -> (PairKinematics, usize, usize) {
        assert!(n_axes > 0, "need at least one counter axis");
        let pitch = TAU / n_axes as f64;
        loop {
            let t1 = self.draw_theta(rng);
            let t2 = self.draw_theta(rng);
            let j1 = rng.random_range(0..n_axes);
            let j2 = rng.random_range(0..n_axes);
            let p1 = (j1 as f64 + 0.5) * pitch;
            let p2 = (j2 as f64 + 0.5) * pitch;
            if self.accept(rng, t1, p1, t2, p2) {
                return (PairKinematics::new(t1, p1, t2, p2), j1, j2);
            }
        }
    }
}

/// One pair draw. Builds the envelope on every call; use [`PairSampler`] in loops.
pub fn sample_pair<R: Rng + ?Sized>(
    model: PairModel,
    energy: f64,
    theta_window: (f64, f64),
    rng: &mut R,
) -> Result<PairKinematics, DomainError> {
    Ok(PairSampler::new(model, energy, theta_window)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compton::{analyzing_power, ELECTRON_MASS_KEV};
    use proptest::prelude::*;

    const DEG: f64 = PI / 180.0;
    const E: f64 = ELECTRON_MASS_KEV;

    fn pdf(model: PairModel, t1: f64, p1: f64, t2: f64, p2: f64) -> f64 {
        joint_pdf(model, &PairKinematics::new(t1, p1, t2, p2), E).unwrap()
    }

    #[test]
    fn model_tags_round_trip() {
        for m in [
            PairModel::EntangledPW,
            PairModel::MixedBA,
            PairModel::MixedHM,
            PairModel::ProductFixedBasis,
            PairModel::DepolarizedMixture { w: 0.2 },
            PairModel::DepolarizedMixture { w: 1.0 / 3.0 },
        ] {
            assert_eq!(m.to_string().parse::<PairModel>().unwrap(), m);
        }
        assert!(matches!(
            "bell".parse::<PairModel>(),
            Err(ModelParseError::UnknownTag(_))
        ));
        assert!(matches!(
            "depolarized:x".parse::<PairModel>(),
            Err(ModelParseError::BadWeight(_))
        ));
        assert_eq!(
            "depolarized:1.5".parse::<PairModel>(),
            Err(ModelParseError::WeightRange(1.5))
        );
    }

    #[test]
    fn delta_phi_normalization() {
        let k = PairKinematics::new(1.0, 0.1, 1.0, 3.5);
        assert!((0.0..PI).contains(&k.delta_phi));
        assert!(
            ((k.delta_phi - (0.1 - 3.5)).rem_euclid(PI))
                .min(PI - (k.delta_phi - (0.1 - 3.5)).rem_euclid(PI))
                < 1e-12
        );
        let k = PairKinematics::new(1.0, -0.5, 1.0, 7.0);
        assert!((0.0..TAU).contains(&k.phi1) && (0.0..TAU).contains(&k.phi2));
    }

    #[test]
    fn entangled_ratio_at_82_degrees() {
        let t = 82.0 * DEG;
        let r = pdf(PairModel::EntangledPW, t, PI / 2.0, t, 0.0)
            / pdf(PairModel::EntangledPW, t, 0.0, t, 0.0);
        let mu = analyzing_power(E, t).unwrap().powi(2);
        assert!((r - (1.0 + mu) / (1.0 - mu)).abs() < 1e-12);
        // Closed form gives 2.835; the commonly quoted figure is 2.85.
        assert!((r - 2.8353).abs() < 1e-4, "{r}");
    }

    #[test]
    fn bohm_aharonov_is_flat() {
        for deg in [30.0, 82.0, 120.0] {
            let t = deg * DEG;
            let r = pdf(PairModel::MixedBA, t, PI / 2.0, t, 0.0)
                / pdf(PairModel::MixedBA, t, 0.0, t, 0.0);
            assert_eq!(r, 1.0);
        }
    }

    /// Independent quadrature of the fixed-basis product density, written
    /// straight from the single-photon formula.
    fn product_oracle_modulation(theta1: f64, theta2: f64) -> f64 {
        let kn = |theta: f64, phi_from_pol: f64| {
            let eps = 1.0 / (2.0 - theta.cos());
            0.5 * eps
                * eps
                * (eps + 1.0 / eps - 2.0 * theta.sin().powi(2) * phi_from_pol.cos().powi(2))
        };
        let n = 360;
        let h = TAU / n as f64;
        let (mut norm, mut cos2) = (0.0, 0.0);
        for i in 0..n {
            let p1 = (i as f64 + 0.5) * h;
            for j in 0..n {
                let p2 = (j as f64 + 0.5) * h;
                let d = 0.5
                    * (kn(theta1, p1) * kn(theta2, p2 - PI / 2.0)
                        + kn(theta1, p1 - PI / 2.0) * kn(theta2, p2));
                norm += d;
                cos2 += d * (2.0 * (p1 - p2)).cos();
            }
        }
        -2.0 * cos2 / norm
    }

    #[test]
    fn product_basis_halves_modulation() {
        let t = 82.0 * DEG;
        let oracle = product_oracle_modulation(t, t);
        let alpha = analyzing_power(E, t).unwrap();
        assert!(
            (oracle - alpha * alpha / 2.0).abs() < 1e-9,
            "oracle {oracle}"
        );
        assert!((oracle - 0.239).abs() < 1e-3);
        let mu = marginal_modulation(PairModel::ProductFixedBasis, t, t, E).unwrap();
        assert!((mu - oracle).abs() < 1e-9);
    }

    #[test]
    fn modulation_examples() {
        let t = 82.0 * DEG;
        let a2 = analyzing_power(E, t).unwrap().powi(2);
        let ent = marginal_modulation(PairModel::EntangledPW, t, t, E).unwrap();
        assert!((ent - a2).abs() < 1e-12);
        assert!((ent - 0.48).abs() < 0.005);
        for theta in [60.0, 90.0, 100.0] {
            let t = theta * DEG;
            let a2 = analyzing_power(E, t).unwrap().powi(2);
            let d2 =
                marginal_modulation(PairModel::DepolarizedMixture { w: 0.2 }, t, t, E).unwrap();
            assert!((d2 - 0.6 * a2).abs() < 1e-12);
            let d5 =
                marginal_modulation(PairModel::DepolarizedMixture { w: 0.5 }, t, t, E).unwrap();
            assert!(d5.abs() < 1e-12);
        }
        assert!(
            marginal_modulation(PairModel::MixedBA, t, t, E)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn quadrature_and_closed_form_agree() {
        let models = [
            PairModel::EntangledPW,
            PairModel::MixedHM,
            PairModel::MixedBA,
            PairModel::ProductFixedBasis,
            PairModel::DepolarizedMixture { w: 0.3 },
        ];
        for m in models {
            for (a, b) in [(20.0, 150.0), (82.0, 82.0), (95.0, 70.0)] {
                let q = marginal_modulation(m, a * DEG, b * DEG, E).unwrap();
                let c = modulation_closed_form(m, a * DEG, b * DEG, E).unwrap();
                assert!((q - c).abs() < 1e-12, "{m}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn entangled_marginal_recovers_alpha_product() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let t1 = rng.random_range(0.01..PI - 0.01);
            let t2 = rng.random_range(0.01..PI - 0.01);
            let mu = marginal_modulation(PairModel::EntangledPW, t1, t2, E).unwrap();
            let expect = analyzing_power(E, t1).unwrap() * analyzing_power(E, t2).unwrap();
            assert!((mu - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn product_is_not_rotation_invariant() {
        let t = 90.0 * DEG;
        let a = pdf(PairModel::ProductFixedBasis, t, 0.0, t, PI / 2.0);
        let b = pdf(PairModel::ProductFixedBasis, t, PI / 4.0, t, 3.0 * PI / 4.0);
        assert!((a - b).abs() > 1e-3 * a);
    }

    #[test]
    fn domain_checks() {
        let bad = PairKinematics::new(-0.1, 0.0, 1.0, 0.0);
        assert!(joint_pdf(PairModel::EntangledPW, &bad, E).is_err());
        let ok = PairKinematics::new(1.0, 0.0, 1.0, 0.0);
        assert!(joint_pdf(PairModel::EntangledPW, &ok, 0.0).is_err());
        assert!(PairSampler::new(PairModel::EntangledPW, E, (0.0, 1.0)).is_err());
        assert!(PairSampler::new(PairModel::EntangledPW, E, (1.2, 1.0)).is_err());
        assert!(PairSampler::new(PairModel::EntangledPW, E, (1.0, PI)).is_err());
        assert!(PairSampler::new(PairModel::EntangledPW, E, (1.0, 1.0)).is_ok());
    }

    #[test]
    fn samples_stay_in_window() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let window = (80.0 * DEG, 100.0 * DEG);
        let sampler = PairSampler::new(PairModel::ProductFixedBasis, E, window).unwrap();
        for _ in 0..10_000 {
            let k = sampler.sample(&mut rng);
            assert!(k.theta1 >= window.0 - 1e-12 && k.theta1 <= window.1 + 1e-12);
            assert!(k.theta2 >= window.0 - 1e-12 && k.theta2 <= window.1 + 1e-12);
        }
        let fixed = PairSampler::new(PairModel::EntangledPW, E, (1.2, 1.2)).unwrap();
        let (k, j1, j2) = fixed.sample_on_axes(16, &mut rng);
        assert!((k.theta1 - 1.2).abs() < 1e-12);
        assert!((k.phi1 - (j1 as f64 + 0.5) * TAU / 16.0).abs() < 1e-12);
        assert!((k.phi2 - (j2 as f64 + 0.5) * TAU / 16.0).abs() < 1e-12);
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

    proptest! {
        #[test]
        fn entangled_and_hm_identical(t1 in 0.0f64..PI, t2 in 0.0f64..PI, p1 in 0.0f64..TAU, p2 in 0.0f64..TAU) {
            let a = pdf(PairModel::EntangledPW, t1, p1, t2, p2);
            let b = pdf(PairModel::MixedHM, t1, p1, t2, p2);
            prop_assert!((a - b).abs() <= 1e-15 * a.abs());
        }

        #[test]
        fn mixture_is_linear(w in 0.0f64..=1.0, t1 in 0.0f64..PI, t2 in 0.0f64..PI, p1 in 0.0f64..TAU, p2 in 0.0f64..TAU) {
            let k = PairKinematics::new(t1, p1, t2, p2);
            let mix = joint_pdf(PairModel::DepolarizedMixture { w }, &k, E).unwrap();
            let perp = joint_pdf(PairModel::DepolarizedMixture { w: 0.0 }, &k, E).unwrap();
            let par = parallel_pairing_pdf(&k, E).unwrap();
            let lin = (1.0 - w) * perp + w * par;
            prop_assert!((mix - lin).abs() <= 1e-12 * lin.abs());
        }

        #[test]
        fn swap_symmetry(m in any_model(), t1 in 0.0f64..PI, t2 in 0.0f64..PI, p1 in 0.0f64..TAU, p2 in 0.0f64..TAU) {
            let a = pdf(m, t1, p1, t2, p2);
            let b = pdf(m, t2, p2, t1, p1);
            prop_assert!((a - b).abs() <= 1e-14 * a.abs());
        }

        #[test]
        fn rotation_invariance(t1 in 0.0f64..PI, t2 in 0.0f64..PI, p1 in 0.0f64..TAU, p2 in 0.0f64..TAU, offset in -PI..PI) {
            for m in [PairModel::EntangledPW, PairModel::MixedHM, PairModel::MixedBA] {
                let a = pdf(m, t1, p1, t2, p2);
                let b = pdf(m, t1, p1 + offset, t2, p2 + offset);
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0), "{} {} {}", m, a, b);
            }
        }
    }
}
