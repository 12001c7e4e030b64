//! Periodic one-dimensional spectral discretization.
//!
//! Transform convention: the forward transform carries the `1/M` factor,
//!
//! ```text
//! û_k = (1/M) Σ_j u(x_j) e^{-i k x_j},      u(x_j) = Σ_k û_k e^{i k x_j},
//! ```
//!
//! so a pure mode `e^{i k x}` has unit coefficient and Parseval reads
//! `‖u‖²_{L²} = (L/M) Σ_j |u_j|² = L Σ_k |û_k|²`.
//!
//! Coefficients are stored in FFT-native order: index `i < M/2` holds the
//! logical mode `i`, index `i ≥ M/2` holds `i - M`. The Nyquist mode is kept
//! as `-M/2`; every multiplier applied to it in this crate depends on `k²`
//! only, so its sign does not matter.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Index, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Sobolev index the norms support.
pub const MAX_SOBOLEV_INDEX: u32 = 8;

/// Complex grid function in physical space.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField(Vec<Complex64>);

impl ComplexField {
    pub fn new(values: Vec<Complex64>) -> Self {
        ComplexField(values)
    }

    pub fn zeros(len: usize) -> Self {
        ComplexField(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_real(values: &[f64]) -> Self {
        ComplexField(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Sup norm over the grid nodes.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<usize> for ComplexField {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;

    fn sub(self, rhs: &ComplexField) -> ComplexField {
        assert_eq!(self.len(), rhs.len(), "field length mismatch");
        ComplexField(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

/// Fourier coefficients in FFT-native order, normalized as in the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierCoefficients(Vec<Complex64>);

impl FourierCoefficients {
    pub fn new(values: Vec<Complex64>) -> Self {
        FourierCoefficients(values)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for FourierCoefficients {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// Order `m` of a discrete `H^m` norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SobolevIndex(u32);

impl TryFrom<u32> for SobolevIndex {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        SobolevIndex::new(m)
    }
}

impl From<SobolevIndex> for u32 {
    fn from(m: SobolevIndex) -> u32 {
        m.0
    }
}

impl SobolevIndex {
    pub const L2: SobolevIndex = SobolevIndex(0);
    pub const H1: SobolevIndex = SobolevIndex(1);
    pub const H2: SobolevIndex = SobolevIndex(2);

    pub fn new(m: u32) -> Result<Self> {
        if m > MAX_SOBOLEV_INDEX {
            return Err(Error::config(format!(
                "Sobolev index {m} exceeds the supported maximum {MAX_SOBOLEV_INDEX}"
            )));
        }
        Ok(SobolevIndex(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `w_m(k) = Σ_{j=0}^{m} k^{2j}`.
    pub fn weight(self, k: f64) -> f64 {
        let k2 = k * k;
        let mut term = 1.0;
        let mut sum = 1.0;
        for _ in 0..self.0 {
            term *= k2;
            sum += term;
        }
        sum
    }
}

/// Grid geometry and transform plans. Immutable after construction; cloning
/// shares the plans.
#[derive(Clone)]
pub struct SpectralGrid {
    points: usize,
    length: f64,
    wavenumbers: Arc<[f64]>,
    dealias: bool,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("points", &self.points)
            .field("length", &self.length)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(points: usize, length: f64) -> Result<Self> {
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::config(format!(
                "grid size must be a power of two >= 4, got {points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::config(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        let scale = 2.0 * PI / length;
        let half = points / 2;
        let wavenumbers: Arc<[f64]> = (0..points)
            .map(|i| {
                let n = if i < half {
                    i as f64
                } else {
                    i as f64 - points as f64
                };
                n * scale
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(SpectralGrid {
            points,
            length,
            wavenumbers,
            dealias: false,
            fft: planner.plan_fft_forward(points),
            ifft: planner.plan_fft_inverse(points),
        })
    }

    /// Grid on the standard torus `[0, 2π)`.
    pub fn periodic_2pi(points: usize) -> Result<Self> {
        Self::new(points, 2.0 * PI)
    }

    /// Enables the 2/3-rule truncation of the interaction spectrum.
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn dealiasing(&self) -> bool {
        self.dealias
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.length / self.points as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }

    /// Physical wavenumbers in FFT-native order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Integer mode number stored at FFT index `i`.
    pub fn mode_index(&self, i: usize) -> i64 {
        if i < self.points / 2 {
            i as i64
        } else {
            i as i64 - self.points as i64
        }
    }

    /// Whether mode `i` survives the 2/3 rule (always true when dealiasing is off).
    pub fn keeps_mode(&self, i: usize) -> bool {
        !self.dealias || 3 * self.mode_index(i).unsigned_abs() as usize <= self.points
    }

    /// Samples `f` at the grid nodes.
    pub fn sample(&self, f: impl Fn(f64) -> Complex64) -> ComplexField {
        ComplexField((0..self.points).map(|j| f(self.node(j))).collect())
    }

    pub fn sample_real(&self, f: impl Fn(f64) -> f64) -> ComplexField {
        self.sample(|x| Complex64::new(f(x), 0.0))
    }

    pub(crate) fn check(&self, u: &ComplexField) {
        assert_eq!(
            u.len(),
            self.points,
            "field length does not match the grid size"
        );
    }

    /// Unnormalized in-place forward FFT followed by the `1/M` scaling.
    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.fft.process(buf);
        let inv = 1.0 / self.points as f64;
        for z in buf.iter_mut() {
            *z *= inv;
        }
    }

    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.ifft.process(buf);
    }

    pub fn forward(&self, u: &ComplexField) -> Result<FourierCoefficients> {
        if u.len() != self.points {
            return Err(Error::LengthMismatch {
                expected: self.points,
                actual: u.len(),
            });
        }
        let mut buf = u.0.clone();
        self.forward_in_place(&mut buf);
        Ok(FourierCoefficients(buf))
    }

    pub fn inverse(&self, coeffs: &FourierCoefficients) -> Result<ComplexField> {
        if coeffs.len() != self.points {
            return Err(Error::LengthMismatch {
                expected: self.points,
                actual: coeffs.len(),
            });
        }
        let mut buf = coeffs.0.clone();
        self.inverse_in_place(&mut buf);
        Ok(ComplexField(buf))
    }

    /// Trapezoid approximation of `(∫|u|²)^{1/2}`.
    pub fn l2_norm(&self, u: &ComplexField) -> f64 {
        self.check(u);
        let sum: f64 = u.0.iter().map(|z| z.norm_sqr()).sum();
        (self.spacing() * sum).sqrt()
    }

    /// `(L Σ_k w_m(k) |û_k|²)^{1/2}`. For `m = 0` this is [`Self::l2_norm`].
    pub fn sobolev_norm(&self, u: &ComplexField, m: SobolevIndex) -> f64 {
        if m.get() == 0 {
            return self.l2_norm(u);
        }
        self.check(u);
        let mut buf = u.0.clone();
        self.forward_in_place(&mut buf);
        self.sobolev_norm_of_coefficients(&buf, m)
    }

    pub(crate) fn sobolev_norm_of_coefficients(&self, coeffs: &[Complex64], m: SobolevIndex) -> f64 {
        let sum: f64 = coeffs
            .iter()
            .zip(self.wavenumbers.iter())
            .map(|(c, &k)| m.weight(k) * c.norm_sqr())
            .sum();
        (self.length * sum).sqrt()
    }

    /// Several Sobolev norms from a single transform.
    pub fn sobolev_norms(&self, u: &ComplexField, ms: &[SobolevIndex]) -> Vec<f64> {
        self.check(u);
        let mut buf = u.0.clone();
        self.forward_in_place(&mut buf);
        ms.iter()
            .map(|&m| self.sobolev_norm_of_coefficients(&buf, m))
            .collect()
    }

    /// Applies the Fourier multiplier `multiplier(k)` to `u`.
    pub fn apply_multiplier(&self, u: &ComplexField, multiplier: impl Fn(f64) -> Complex64) -> ComplexField {
        self.check(u);
        let mut buf = u.0.clone();
        self.forward_in_place(&mut buf);
        for (c, &k) in buf.iter_mut().zip(self.wavenumbers.iter()) {
            *c *= multiplier(k);
        }
        self.inverse_in_place(&mut buf);
        ComplexField(buf)
    }

    /// `factor · Δ u`, i.e. coefficients scaled by `factor · (-k²)`.
    pub fn apply_laplacian_multiplier(&self, u: &ComplexField, factor: Complex64) -> ComplexField {
        self.apply_multiplier(u, |k| factor * (-k * k))
    }
}
