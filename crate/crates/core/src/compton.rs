//! Polarized Compton scattering off free electrons at rest.
//!
//! Cross sections are expressed in units of the squared classical electron
//! radius, so every weight returned here is dimensionless. Only ratios and
//! normalized sampling weights are consumed elsewhere in the crate.
//!
//! Azimuths `phi` passed to [`kn_dcs_polarized`] are measured from the
//! incident polarization vector. Sampled azimuths in [`ScatterSample`] are
//! measured from the reference axis of the photon's [`Frame`].

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// Electron rest energy in keV. Equal to the energy of each annihilation photon.
pub const ELECTRON_MASS_KEV: f64 = 511.0;

const UNIT_TOL: f64 = 1e-12;
const ANGLE_SLOP: f64 = 1e-12;

/// Physical constants used by the cross sections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsConstants {
    pub electron_mass: f64,
    /// Cross sections are reported in units of this radius squared.
    pub classical_electron_radius: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self {
            electron_mass: ELECTRON_MASS_KEV,
            classical_electron_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("photon energy must be positive and finite, got {0} keV")]
    Energy(f64),
    #[error("angle {0} rad is outside [0, pi]")]
    PolarAngle(f64),
    #[error("angle {0} is not finite")]
    NonFinite(f64),
    #[error("angular window [{0}, {1}] rad is not ordered inside [0, pi]")]
    Window(f64, f64),
    #[error("invalid photon state: {0}")]
    Photon(&'static str),
}

fn check_energy(energy: f64) -> Result<(), DomainError> {
    if energy.is_finite() && energy > 0.0 {
        Ok(())
    } else {
        Err(DomainError::Energy(energy))
    }
}

fn check_polar(theta: f64) -> Result<f64, DomainError> {
    if !theta.is_finite() {
        return Err(DomainError::NonFinite(theta));
    }
    if !(-ANGLE_SLOP..=PI + ANGLE_SLOP).contains(&theta) {
        return Err(DomainError::PolarAngle(theta));
    }
    Ok(theta.clamp(0.0, PI))
}

fn check_finite(angle: f64) -> Result<f64, DomainError> {
    if angle.is_finite() {
        Ok(angle)
    } else {
        Err(DomainError::NonFinite(angle))
    }
}

/// Ratio E1/E of scattered to incident photon energy.
#[inline]
pub(crate) fn epsilon_unchecked(energy: f64, theta: f64) -> f64 {
    1.0 / (1.0 + energy / ELECTRON_MASS_KEV * (1.0 - theta.cos()))
}

#[inline]
pub(crate) fn kn_polarized_unchecked(energy: f64, theta: f64, phi: f64) -> f64 {
    let eps = epsilon_unchecked(energy, theta);
    let s2 = theta.sin().powi(2);
    let c2 = phi.cos().powi(2);
    0.5 * eps * eps * (eps + 1.0 / eps - 2.0 * s2 * c2)
}

#[inline]
pub(crate) fn kn_unpolarized_unchecked(energy: f64, theta: f64) -> f64 {
    let eps = epsilon_unchecked(energy, theta);
    let s2 = theta.sin().powi(2);
    0.5 * eps * eps * (eps + 1.0 / eps - s2)
}

#[inline]
pub(crate) fn analyzing_power_unchecked(energy: f64, theta: f64) -> f64 {
    let eps = epsilon_unchecked(energy, theta);
    let s2 = theta.sin().powi(2);
    s2 / (eps + 1.0 / eps - s2)
}

/// Scattered photon energy for incident energy `energy` (keV) and polar angle `theta`.
pub fn scattered_energy(energy: f64, theta: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    Ok(energy * epsilon_unchecked(energy, theta))
}

/// Polarized Klein–Nishina cross section, `phi` measured from the incident
/// polarization vector.
pub fn kn_dcs_polarized(energy: f64, theta: f64, phi: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    let phi = check_finite(phi)?;
    Ok(kn_polarized_unchecked(energy, theta, phi))
}

/// Azimuthally averaged (unpolarized) Klein–Nishina cross section.
pub fn kn_dcs_unpolarized(energy: f64, theta: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    Ok(kn_unpolarized_unchecked(energy, theta))
}

/// Analyzing power sin²θ / (E1/E + E/E1 − sin²θ) of a Compton polarimeter.
pub fn analyzing_power(energy: f64, theta: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    Ok(analyzing_power_unchecked(energy, theta))
}

/// Polarized-to-polarized cross section
/// (ε²/4)(ε + 1/ε − 2 + 4cos²Θ), with Θ the angle between the incident and
/// final polarization vectors.
///
/// Summing over two orthogonal final polarizations (both orthogonal to the
/// scattered direction) gives back [`kn_dcs_polarized`].
pub fn kn_dcs_pol_to_pol(energy: f64, theta: f64, pol_angle: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    let pol_angle = check_polar(pol_angle)?;
    let eps = epsilon_unchecked(energy, theta);
    Ok(0.25 * eps * eps * (eps + 1.0 / eps - 2.0 + 4.0 * pol_angle.cos().powi(2)))
}

/// Probability that a photon polarized perpendicular to the scattering plane
/// ends up polarized in that plane.
pub fn flip_probability(energy: f64, theta: f64) -> Result<f64, DomainError> {
    check_energy(energy)?;
    let theta = check_polar(theta)?;
    let eps = epsilon_unchecked(energy, theta);
    // Ratio of the pol-to-pol weights at Θ = 90° and Θ = 0°, summed.
    let s = eps + 1.0 / eps;
    Ok((s - 2.0) / (2.0 * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Polarization {
    /// Linear polarization along a unit vector orthogonal to the direction.
    Linear(Vec3),
    Unpolarized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonState {
    energy: f64,
    direction: Vec3,
    polarization: Polarization,
}

impl PhotonState {
    pub fn new(
        energy: f64,
        direction: Vec3,
        polarization: Polarization,
    ) -> Result<Self, DomainError> {
        check_energy(energy)?;
        if (direction.norm() - 1.0).abs() > UNIT_TOL {
            return Err(DomainError::Photon("direction must have unit norm"));
        }
        if let Polarization::Linear(e) = polarization {
            if (e.norm() - 1.0).abs() > UNIT_TOL {
                return Err(DomainError::Photon(
                    "polarization vector must have unit norm",
                ));
            }
            if e.dot(direction).abs() > UNIT_TOL {
                return Err(DomainError::Photon(
                    "polarization must be orthogonal to direction",
                ));
            }
        }
        Ok(Self {
            energy,
            direction,
            polarization,
        })
    }

    /// A 511 keV annihilation photon in an unpolarized reduced state.
    pub fn annihilation(direction: Vec3) -> Self {
        Self::new(
            ELECTRON_MASS_KEV,
            direction.normalized(),
            Polarization::Unpolarized,
        )
        .expect("normalized direction is valid")
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn polarization(&self) -> Polarization {
        self.polarization
    }

    /// Local frame: z along the direction, x along the polarization vector
    /// (or the deterministic orthogonal axis for unpolarized photons).
    pub fn frame(&self) -> Frame {
        let x = match self.polarization {
            Polarization::Linear(e) => e,
            Polarization::Unpolarized => self.direction.any_orthogonal(),
        };
        Frame::new(self.direction, x)
    }
}

/// Orthonormal frame attached to a photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl Frame {
    fn new(z: Vec3, x: Vec3) -> Self {
        Self {
            x,
            y: z.cross(x),
            z,
        }
    }

    pub fn direction_at(&self, theta: f64, phi: f64) -> Vec3 {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        self.x * (st * cp) + self.y * (st * sp) + self.z * ct
    }
}

/// Outcome of one Compton scatter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSample {
    pub theta: f64,
    /// Azimuth of the scattering plane, measured from the frame reference axis.
    pub phi: f64,
    pub energy_in: f64,
    pub energy_out: f64,
    pub epsilon: f64,
    pub recoil_energy: f64,
    pub direction_out: Vec3,
    pub polarization_out: Polarization,
    /// Final polarization is orthogonal to the no-flip transfer direction.
    pub flipped: bool,
}

impl ScatterSample {
    pub fn photon_out(&self) -> PhotonState {
        PhotonState {
            energy: self.energy_out,
            direction: self.direction_out,
            polarization: self.polarization_out,
        }
    }
}

/// No-flip transfer direction and the (keep, flip) weights for a photon
/// polarized along `pol_in` scattered into `k_out`.
fn transfer(energy: f64, theta: f64, pol_in: Vec3, k_out: Vec3) -> (Vec3, f64, f64) {
    let along = pol_in.dot(k_out);
    let perp = pol_in - k_out * along;
    let n = perp.norm();
    let e_keep = if n > 1e-9 {
        perp * (1.0 / n)
    } else {
        k_out.any_orthogonal()
    };
    let cos_keep = n.min(1.0);
    let eps = epsilon_unchecked(energy, theta);
    let base = eps + 1.0 / eps - 2.0;
    let w_keep = 0.25 * eps * eps * (base + 4.0 * cos_keep * cos_keep);
    let w_flip = 0.25 * eps * eps * base;
    (e_keep, w_keep, w_flip)
}

fn build_sample(
    photon: &PhotonState,
    frame: &Frame,
    pol_in: Vec3,
    theta: f64,
    phi: f64,
    flip_draw: impl FnOnce(f64, f64) -> bool,
) -> ScatterSample {
    let energy = photon.energy;
    let epsilon = epsilon_unchecked(energy, theta);
    let energy_out = energy * epsilon;
    let direction_out = frame.direction_at(theta, phi).normalized();
    let (e_keep, w_keep, w_flip) = transfer(energy, theta, pol_in, direction_out);
    let flipped = flip_draw(w_keep, w_flip);
    let e_out = if flipped {
        direction_out.cross(e_keep).normalized()
    } else {
        e_keep
    };
    ScatterSample {
        theta,
        phi: phi.rem_euclid(TAU),
        energy_in: energy,
        energy_out,
        epsilon,
        recoil_energy: energy - energy_out,
        direction_out,
        polarization_out: Polarization::Linear(e_out),
        flipped,
    }
}

/// Deterministic scatter at a given angle pair with a given polarization
/// outcome. Unpolarized photons are treated as polarized along the frame
/// reference axis.
pub fn scatter_at(
    photon: &PhotonState,
    theta: f64,
    phi: f64,
    flipped: bool,
) -> Result<ScatterSample, DomainError> {
    let theta = check_polar(theta)?;
    let phi = check_finite(phi)?;
    let frame = photon.frame();
    Ok(build_sample(photon, &frame, frame.x, theta, phi, |_, _| {
        flipped
    }))
}

/// Rejection sampler for the polarized Klein–Nishina density over a polar
/// window, uniform in cos θ and φ.
#[derive(Debug, Clone)]
pub struct ScatterSampler {
    energy: f64,
    cos_lo: f64,
    cos_hi: f64,
    envelope: f64,
}

const ENVELOPE_SAFETY: f64 = 1.05;

impl ScatterSampler {
    pub fn new(energy: f64, theta_window: (f64, f64)) -> Result<Self, DomainError> {
        check_energy(energy)?;
        let lo = check_polar(theta_window.0)?;
        let hi = check_polar(theta_window.1)?;
        if lo > hi {
            return Err(DomainError::Window(lo, hi));
        }
        let (cos_lo, cos_hi) = (hi.cos(), lo.cos());
        let mut peak: f64 = 0.0;
        const NC: usize = 200;
        const NP: usize = 72;
        for i in 0..=NC {
            let c = cos_lo + (cos_hi - cos_lo) * i as f64 / NC as f64;
            let theta = c.clamp(-1.0, 1.0).acos();
            for j in 0..NP {
                let phi = TAU * j as f64 / NP as f64;
                peak = peak.max(kn_polarized_unchecked(energy, theta, phi));
            }
        }
        let envelope = ENVELOPE_SAFETY * peak;
        assert!(
            envelope > 0.0 && envelope.is_finite(),
            "degenerate scatter envelope"
        );
        Ok(Self {
            energy,
            cos_lo,
            cos_hi,
            envelope,
        })
    }

    /// Sampler over the full sphere.
    pub fn full(energy: f64) -> Result<Self, DomainError> {
        Self::new(energy, (0.0, PI))
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// Draws (θ, φ) with φ measured from the incident polarization vector.
    pub fn sample_polarized_angles<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let c = if self.cos_lo == self.cos_hi {
                self.cos_lo
            } else {
                rng.random_range(self.cos_lo..=self.cos_hi)
            };
            let theta = c.clamp(-1.0, 1.0).acos();
            let phi = TAU * rng.random::<f64>();
            let density = kn_polarized_unchecked(self.energy, theta, phi);
            assert!(
                density <= self.envelope,
                "scatter envelope {} violated by density {density}",
                self.envelope
            );
            if rng.random::<f64>() * self.envelope < density {
                return (theta, phi);
            }
        }
    }

    /// Samples a full scatter of `photon`, which must carry the sampler's energy.
    pub fn sample<R: Rng + ?Sized>(&self, photon: &PhotonState, rng: &mut R) -> ScatterSample {
        assert!(
            photon.energy == self.energy,
            "sampler built for {} keV used with a {} keV photon",
            self.energy,
            photon.energy
        );
        let frame = photon.frame();
        // An unpolarized photon is an equal mixture of linear states; draw one.
        let psi = match photon.polarization {
            Polarization::Linear(_) => 0.0,
            Polarization::Unpolarized => TAU * rng.random::<f64>(),
        };
        let pol_in = frame.x * psi.cos() + frame.y * psi.sin();
        let (theta, phi_rel) = self.sample_polarized_angles(rng);
        let u: f64 = rng.random();
        build_sample(
            photon,
            &frame,
            pol_in,
            theta,
            psi + phi_rel,
            |keep, flip| u * (keep + flip) < flip,
        )
    }
}

/// One scatter of `photon` over the full sphere.
///
/// Builds the envelope on every call; use [`ScatterSampler`] in loops.
pub fn sample_scatter<R: Rng + ?Sized>(photon: &PhotonState, rng: &mut R) -> ScatterSample {
    ScatterSampler::full(photon.energy)
        .expect("photon energy validated at construction")
        .sample(photon, rng)
}
