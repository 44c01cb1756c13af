//! Relative-azimuth histograms, cosine fits, correlation coefficients and the
//! CHSH-type S-function.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apparatus::{ClassTag, EventRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("fit needs at least 3 non-empty bins, got {0}")]
    TooFewBins(usize),
    #[error("fit is degenerate: singular normal equations")]
    FitDegenerate,
    #[error("angle {0}° is not a multiple of the {1}° counter pitch")]
    OffGrid(f64, f64),
    #[error("correlation at {0}° is undefined: no counts at φ or φ + 90°")]
    UndefinedCorrelation(f64),
    #[error("S-curve fit needs at least 2 points with finite sigma, got {0}")]
    TooFewPoints(usize),
}

/// Event-class filter for histogramming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    EntangledCandidate,
    A,
    B,
    C,
    D,
    /// Union of the GAGG-tagged forward classes a, b and c.
    Decoherent,
    /// Every class except rejected.
    AllAccepted,
}

impl Selection {
    pub const ALL: [Selection; 7] = [
        Selection::EntangledCandidate,
        Selection::A,
        Selection::B,
        Selection::C,
        Selection::D,
        Selection::Decoherent,
        Selection::AllAccepted,
    ];

    pub fn contains(&self, tag: ClassTag) -> bool {
        match self {
            Selection::EntangledCandidate => tag == ClassTag::EntangledCandidate,
            Selection::A => tag == ClassTag::A,
            Selection::B => tag == ClassTag::B,
            Selection::C => tag == ClassTag::C,
            Selection::D => tag == ClassTag::D,
            Selection::Decoherent => matches!(tag, ClassTag::A | ClassTag::B | ClassTag::C),
            Selection::AllAccepted => tag != ClassTag::Rejected,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Selection::EntangledCandidate => "entangled_candidate",
            Selection::A => "a",
            Selection::B => "b",
            Selection::C => "c",
            Selection::D => "d",
            Selection::Decoherent => "decoherent",
            Selection::AllAccepted => "all_accepted",
        }
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coincidence counts by relative counter azimuth: bin k holds events with
/// (counter1 − counter2) mod n = k, i.e. Δφ = k·pitch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl AngleHistogram {
    pub fn new(n_bins: usize) -> Self {
        assert!(
            n_bins > 0 && n_bins.is_multiple_of(4),
            "bin count must be a positive multiple of 4"
        );
        Self {
            counts: vec![0; n_bins],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let mut h = Self::new(counts.len());
        h.total = counts.iter().sum();
        h.counts = counts;
        h
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn pitch_deg(&self) -> f64 {
        360.0 / self.n_bins() as f64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bin_angle_deg(&self, k: usize) -> f64 {
        k as f64 * self.pitch_deg()
    }

    pub fn fill(&mut self, counter1: usize, counter2: usize) {
        let n = self.n_bins();
        let k = (counter1 % n + n - counter2 % n) % n;
        self.counts[k] += 1;
        self.total += 1;
    }

    /// Bin-wise sum; associative and commutative.
    pub fn merge(&mut self, other: &AngleHistogram) {
        assert_eq!(
            self.n_bins(),
            other.n_bins(),
            "cannot merge histograms of different binning"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Counts folded onto [0°, 180°]: bins k and n − k are summed.
    pub fn folded(&self) -> Vec<(f64, u64)> {
        let n = self.n_bins();
        (0..=n / 2)
            .map(|k| {
                let c = if k == 0 || k == n / 2 {
                    self.counts[k]
                } else {
                    self.counts[k] + self.counts[n - k]
                };
                (self.bin_angle_deg(k), c)
            })
            .collect()
    }

    fn bin_of(&self, phi_deg: f64) -> Result<usize, AnalysisError> {
        let pitch = self.pitch_deg();
        let steps = phi_deg / pitch;
        let k = steps.round();
        if !phi_deg.is_finite() || (steps - k).abs() > 1e-9 {
            return Err(AnalysisError::OffGrid(phi_deg, pitch));
        }
        Ok((k as i64).rem_euclid(self.n_bins() as i64) as usize)
    }
}

pub fn build_histogram<'a>(
    events: impl IntoIterator<Item = &'a EventRecord>,
    selection: Selection,
    n_bins: usize,
) -> AngleHistogram {
    let mut h = AngleHistogram::new(n_bins);
    for e in events {
        if selection.contains(e.class_tag) {
            h.fill(e.counter1, e.counter2);
        }
    }
    h
}

/// Weighted least-squares fit of N(Δφ) = A − B cos 2Δφ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub cov: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "sigma_R")]
    pub sigma_r: f64,
    pub mu: f64,
    pub sigma_mu: f64,
}

impl FitResult {
    pub fn sigma_a(&self) -> f64 {
        self.cov[0][0].sqrt()
    }

    pub fn sigma_b(&self) -> f64 {
        self.cov[1][1].sqrt()
    }

    /// Fitted curve and its 1σ band at `phi_deg`.
    pub fn curve(&self, phi_deg: f64) -> (f64, f64) {
        let g = -(2.0 * phi_deg.to_radians()).cos();
        let var = self.cov[0][0] + 2.0 * g * self.cov[0][1] + g * g * self.cov[1][1];
        (self.a + g * self.b, var.max(0.0).sqrt())
    }
}

/// Per-bin Poisson variance, floored at 1 so empty bins stay finite.
fn variance(count: f64) -> f64 {
    count.max(1.0)
}

pub fn fit_cosine(hist: &AngleHistogram) -> Result<FitResult, AnalysisError> {
    if hist.total() == 0 {
        return Err(AnalysisError::EmptyHistogram);
    }
    let values: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    fit_cosine_values(&values)
}

/// [`fit_cosine`] on real-valued bin contents spread evenly over 360°, e.g.
/// expected counts.
pub fn fit_cosine_values(values: &[f64]) -> Result<FitResult, AnalysisError> {
    let n = values.len();
    if values.iter().all(|&v| v == 0.0) {
        return Err(AnalysisError::EmptyHistogram);
    }
    let nonempty = values.iter().filter(|&&v| v > 0.0).count();
    if nonempty < 3 {
        return Err(AnalysisError::TooFewBins(nonempty));
    }
    // Normal equations in the basis {1, −cos 2Δφ}.
    let basis: Vec<f64> = (0..n)
        .map(|k| -(2.0 * (k as f64 * 360.0 / n as f64).to_radians()).cos())
        .collect();
    // Counts confined to bins sharing one basis value say nothing about B.
    let mut filled = values
        .iter()
        .zip(&basis)
        .filter(|(&v, _)| v > 0.0)
        .map(|(_, &g)| g);
    let first = filled.next().unwrap_or(0.0);
    if filled.all(|g| (g - first).abs() < 1e-12) {
        return Err(AnalysisError::FitDegenerate);
    }
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&y, &g) in values.iter().zip(&basis) {
        let w = 1.0 / variance(y);
        s00 += w;
        s01 += w * g;
        s11 += w * g * g;
        t0 += w * y;
        t1 += w * g * y;
    }
    let det = s00 * s11 - s01 * s01;
    if !(det.abs() > 1e-12 * s00 * s11) {
        return Err(AnalysisError::FitDegenerate);
    }
    let cov = [[s11 / det, -s01 / det], [-s01 / det, s00 / det]];
    let a = cov[0][0] * t0 + cov[0][1] * t1;
    let b = cov[1][0] * t0 + cov[1][1] * t1;
    let chi2 = values
        .iter()
        .zip(&basis)
        .map(|(&y, &g)| (y - a - g * b).powi(2) / variance(y))
        .sum();
    let mu = b / a;
    let r = (a + b) / (a - b);
    let grad_mu = [-b / (a * a), 1.0 / a];
    let grad_r = [-2.0 * b / (a - b).powi(2), 2.0 * a / (a - b).powi(2)];
    let propagate = |g: [f64; 2]| {
        (g[0] * g[0] * cov[0][0] + 2.0 * g[0] * g[1] * cov[0][1] + g[1] * g[1] * cov[1][1])
            .max(0.0)
            .sqrt()
    };
    Ok(FitResult {
        a,
        b,
        cov,
        chi2,
        dof: n - 2,
        r,
        sigma_r: propagate(grad_r),
        mu,
        sigma_mu: propagate(grad_mu),
    })
}

/// A derived quantity at an azimuth, with its 1σ error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePoint {
    pub angle_deg: f64,
    pub value: f64,
    pub sigma: f64,
}

/// E(φ) with its gradient with respect to every bin count.
fn correlation_with_gradient(
    hist: &AngleHistogram,
    phi_deg: f64,
) -> Result<(f64, Vec<f64>), AnalysisError> {
    let n = hist.n_bins();
    let k = hist.bin_of(phi_deg)?;
    let k90 = (k + n / 4) % n;
    let (par, perp) = (hist.counts()[k] as f64, hist.counts()[k90] as f64);
    let sum = par + perp;
    if sum == 0.0 {
        return Err(AnalysisError::UndefinedCorrelation(phi_deg));
    }
    let mut grad = vec![0.0; n];
    grad[k] += 2.0 * perp / (sum * sum);
    grad[k90] -= 2.0 * par / (sum * sum);
    Ok(((par - perp) / sum, grad))
}

fn poisson_sigma(hist: &AngleHistogram, grad: &[f64]) -> f64 {
    grad.iter()
        .zip(hist.counts())
        .map(|(g, &c)| g * g * c as f64)
        .sum::<f64>()
        .sqrt()
}

/// E(φ) = [N(φ) − N(φ+90°)]/[N(φ) + N(φ+90°)]: parallel channel at the
/// counter azimuth, perpendicular channel 90° away.
pub fn correlation_coefficient(
    hist: &AngleHistogram,
    phi_deg: f64,
) -> Result<AnglePoint, AnalysisError> {
    let (value, grad) = correlation_with_gradient(hist, phi_deg)?;
    Ok(AnglePoint {
        angle_deg: phi_deg,
        value,
        sigma: poisson_sigma(hist, &grad),
    })
}

fn s_with_gradient(hist: &AngleHistogram, phi_deg: f64) -> Result<(f64, Vec<f64>), AnalysisError> {
    let (e1, g1) = correlation_with_gradient(hist, phi_deg)?;
    let (e3, g3) = correlation_with_gradient(hist, 3.0 * phi_deg)?;
    let grad = g1.iter().zip(&g3).map(|(a, b)| 3.0 * a - b).collect();
    Ok((3.0 * e1 - e3, grad))
}

/// S(φ) = 3E(φ) − E(3φ), with bin correlations between the two terms kept.
pub fn s_function(hist: &AngleHistogram, phi_deg: f64) -> Result<AnglePoint, AnalysisError> {
    let (value, grad) = s_with_gradient(hist, phi_deg)?;
    Ok(AnglePoint {
        angle_deg: phi_deg,
        value,
        sigma: poisson_sigma(hist, &grad),
    })
}

/// Poisson covariance of S at the given azimuths. S values share bins, so
/// off-diagonal terms are not small.
pub fn s_covariance(
    hist: &AngleHistogram,
    phis_deg: &[f64],
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let grads = phis_deg
        .iter()
        .map(|&phi| s_with_gradient(hist, phi).map(|(_, g)| g))
        .collect::<Result<Vec<_>, _>>()?;
    let counts = hist.counts();
    Ok(grads
        .iter()
        .map(|ga| {
            grads
                .iter()
                .map(|gb| {
                    ga.iter()
                        .zip(gb)
                        .zip(counts)
                        .map(|((a, b), &c)| a * b * c as f64)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Shape of the ideal S-curve per unit amplitude.
pub fn s_curve_shape(phi_deg: f64) -> f64 {
    let phi = phi_deg.to_radians();
    -(3.0 * (2.0 * phi).cos() - (6.0 * phi).cos())
}

/// Fit of S(φ) = −p0 (3 cos 2φ − cos 6φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SFit {
    pub p0: f64,
    pub sigma_p0: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl SFit {
    pub fn chi2_per_dof(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

pub fn fit_s_curve(points: &[AnglePoint]) -> Result<SFit, AnalysisError> {
    let usable: Vec<&AnglePoint> = points
        .iter()
        .filter(|p| p.sigma.is_finite() && p.sigma > 0.0 && p.value.is_finite())
        .collect();
    if usable.len() < 2 {
        return Err(AnalysisError::TooFewPoints(usable.len()));
    }
    let (mut sw, mut sgg, mut sgy) = (0.0, 0.0, 0.0);
    for p in &usable {
        let g = s_curve_shape(p.angle_deg);
        let w = 1.0 / (p.sigma * p.sigma);
        sw += w;
        sgg += w * g * g;
        sgy += w * g * p.value;
    }
    // The shape is zero up to rounding at every sampled angle.
    if sgg <= 1e-20 * sw {
        return Err(AnalysisError::FitDegenerate);
    }
    let p0 = sgy / sgg;
    let chi2 = usable
        .iter()
        .map(|p| ((p.value - p0 * s_curve_shape(p.angle_deg)) / p.sigma).powi(2))
        .sum();
    Ok(SFit {
        p0,
        sigma_p0: (1.0 / sgg).sqrt(),
        chi2,
        dof: usable.len() - 1,
    })
}

/// Generalized least-squares fit of the S-curve with the full covariance of
/// the points. Falls back to the diagonal fit if the covariance is not
/// positive definite.
pub fn fit_s_curve_correlated(
    points: &[AnglePoint],
    cov: &[Vec<f64>],
) -> Result<SFit, AnalysisError> {
    let n = points.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    assert!(
        cov.len() == n && cov.iter().all(|row| row.len() == n),
        "covariance must be n x n"
    );
    let c = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let sw: f64 = c.diagonal().iter().map(|v| 1.0 / v).sum();
    let Some(chol) = c.cholesky() else {
        log::debug!("S covariance not positive definite; using diagonal weights");
        return fit_s_curve(points);
    };
    let g = DVector::from_iterator(n, points.iter().map(|p| s_curve_shape(p.angle_deg)));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.value));
    let cinv_g = chol.solve(&g);
    let sgg = g.dot(&cinv_g);
    if !(sgg > 1e-20 * sw) {
        return Err(AnalysisError::FitDegenerate);
    }
    let p0 = y.dot(&cinv_g) / sgg;
    let resid = &y - &g * p0;
    let chi2 = resid.dot(&chol.solve(&resid));
    Ok(SFit {
        p0,
        sigma_p0: (1.0 / sgg).sqrt(),
        chi2,
        dof: n - 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub max_abs_s: f64,
    pub sigma_max_abs_s: f64,
    pub angle_of_max_deg: f64,
    /// |S| > 2 on the raw values.
    pub raw_violation: bool,
    /// max |S| / p0, to compare with 2√2.
    pub normalized_max: f64,
    pub sigma_normalized_max: f64,
    pub tsirelson_bound: f64,
}

pub fn chsh_report(s_values: &[AnglePoint], p0: &SFit) -> ChshReport {
    let best = s_values
        .iter()
        .copied()
        .max_by(|a, b| a.value.abs().total_cmp(&b.value.abs()))
        .unwrap_or(AnglePoint {
            angle_deg: 0.0,
            value: 0.0,
            sigma: 0.0,
        });
    let max_abs_s = best.value.abs();
    let normalized_max = if p0.p0 != 0.0 {
        max_abs_s / p0.p0.abs()
    } else {
        f64::NAN
    };
    let rel = |v: f64, s: f64| if v != 0.0 { s / v } else { 0.0 };
    let sigma_normalized_max = normalized_max.abs()
        * (rel(max_abs_s, best.sigma).powi(2) + rel(p0.p0, p0.sigma_p0).powi(2)).sqrt();
    ChshReport {
        max_abs_s,
        sigma_max_abs_s: best.sigma,
        angle_of_max_deg: best.angle_deg,
        raw_violation: max_abs_s > 2.0,
        normalized_max,
        sigma_normalized_max,
        tsirelson_bound: 2.0 * SQRT_2,
    }
}

/// Correlation coefficients at every bin, S at every bin in [0°, 180°) and
/// the S-curve fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    pub e_values: Vec<AnglePoint>,
    pub s_values: Vec<AnglePoint>,
    pub s_fit: Option<SFit>,
    pub chsh: Option<ChshReport>,
}

/// Undefined coefficients are skipped rather than failing the whole set.
pub fn correlation_set(hist: &AngleHistogram) -> CorrelationSet {
    let n = hist.n_bins();
    let e_values = (0..n)
        .filter_map(|k| correlation_coefficient(hist, hist.bin_angle_deg(k)).ok())
        .collect();
    let s_values: Vec<AnglePoint> = (0..n / 2)
        .filter_map(|k| s_function(hist, hist.bin_angle_deg(k)).ok())
        .filter(|p| p.sigma > 0.0 && p.sigma.is_finite())
        .collect();
    let phis: Vec<f64> = s_values.iter().map(|p| p.angle_deg).collect();
    let s_fit = s_covariance(hist, &phis)
        .and_then(|cov| fit_s_curve_correlated(&s_values, &cov))
        .ok();
    let chsh = s_fit.as_ref().map(|f| chsh_report(&s_values, f));
    CorrelationSet {
        e_values,
        s_values,
        s_fit,
        chsh,
    }
}

/// Ideal extremum of |S| for modulation μ: |S|max = 2√2·μ at φ = 22.5°.
pub fn s_extremum(mu: f64) -> f64 {
    s_curve_shape(22.5).abs() * mu
}
