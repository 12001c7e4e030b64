//! Nonlocal cubic interaction and the two exactly solvable sub-flows.
//!
//! The interaction is the periodic convolution
//!
//! ```text
//! V[u](x_i) = (L/M) Σ_j V(x_i - x_j) |u(x_j)|²
//! ```
//!
//! which, under the grid's transform convention, has Fourier coefficients
//! `L · V̂_k · ρ̂_k` with `ρ = |u|²`. The kernel spectrum `L · V̂_k` is
//! computed once when the [`Model`] is built.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, SpectralGrid};

#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    /// `V(x) = cos(x)`.
    Cosine,
    /// `V ≡ 0`: the equation is linear and every scheme reduces to its linear part.
    Zero,
    /// Samples `V(x_j)` on the grid nodes.
    Tabulated(Vec<f64>),
}

impl Potential {
    /// Accepts complex samples only if every imaginary part is exactly zero.
    pub fn from_complex_samples(samples: &[Complex64]) -> Result<Self> {
        if let Some((index, z)) = samples.iter().enumerate().find(|(_, z)| z.im != 0.0) {
            return Err(Error::NonRealPotential { index, imag: z.im });
        }
        Ok(Potential::Tabulated(samples.iter().map(|z| z.re).collect()))
    }

    pub fn samples(&self, grid: &SpectralGrid) -> Result<Vec<f64>> {
        match self {
            Potential::Cosine => Ok(grid.nodes().into_iter().map(f64::cos).collect()),
            Potential::Zero => Ok(vec![0.0; grid.points()]),
            Potential::Tabulated(v) => {
                if v.len() != grid.points() {
                    return Err(Error::LengthMismatch {
                        expected: grid.points(),
                        actual: v.len(),
                    });
                }
                if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::config(format!("potential sample {index} is not finite")));
                }
                Ok(v.clone())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Cosine => false,
            Potential::Tabulated(v) => v.iter().all(|&x| x == 0.0),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Cosine => f.write_str("cos"),
            Potential::Zero => f.write_str("zero"),
            Potential::Tabulated(v) => write!(f, "tabulated[{}]", v.len()),
        }
    }
}

/// Flow time of the nonlinear sub-step, restricted to `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FlowTime(f64);

impl FlowTime {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::config(format!("time step must lie in (0, 1), got {tau}")));
        }
        Ok(FlowTime(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Grid plus the precomputed interaction kernel.
#[derive(Clone, Debug)]
pub struct Model {
    grid: SpectralGrid,
    potential: Potential,
    kernel: Vec<Complex64>,
    linear: bool,
}

impl Model {
    pub fn new(grid: SpectralGrid, potential: Potential) -> Result<Self> {
        let samples = potential.samples(&grid)?;
        let mut kernel = ComplexField::from_real(&samples).into_values();
        grid.forward_in_place(&mut kernel);
        let length = grid.length();
        for (i, c) in kernel.iter_mut().enumerate() {
            *c = if grid.keeps_mode(i) { *c * length } else { Complex64::new(0.0, 0.0) };
        }
        let linear = potential.is_zero();
        Ok(Model {
            grid,
            potential,
            kernel,
            linear,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// True when `V ≡ 0`.
    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// `V[u]` together with the discarded imaginary residue, relative to the
    /// natural scale `max|L V̂| · ‖u‖²_{L²} / L`.
    pub fn interaction_with_residual(&self, u: &ComplexField) -> (Vec<f64>, f64) {
        self.grid.check(u);
        let mut buf: Vec<Complex64> = u.values().iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
        self.grid.forward_in_place(&mut buf);
        let mass = buf[0].re;
        for (c, k) in buf.iter_mut().zip(&self.kernel) {
            *c *= k;
        }
        self.grid.inverse_in_place(&mut buf);
        let kernel_max = self.kernel.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let scale = kernel_max * mass;
        let imag_max = buf.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let residual = if scale > 0.0 { imag_max / scale } else { imag_max };
        (buf.into_iter().map(|z| z.re).collect(), residual)
    }

    /// `V[u] = V ⋆ |u|²`, exactly real.
    pub fn interaction(&self, u: &ComplexField) -> Vec<f64> {
        let (v, residual) = self.interaction_with_residual(u);
        debug_assert!(residual <= 1e-12, "imaginary residue {residual:e} in V[u]");
        v
    }

    /// `Ψ₀(u) = V[u] u`.
    pub fn psi0(&self, u: &ComplexField) -> ComplexField {
        let v = self.interaction(u);
        ComplexField::new(u.values().iter().zip(&v).map(|(z, &p)| z * p).collect())
    }

    /// `Φ_τ(u) = e^{iτV[u]} u`, a pointwise phase rotation.
    pub fn phi_flow(&self, tau: FlowTime, u: &ComplexField) -> ComplexField {
        let mut out = u.clone();
        self.phi_flow_in_place(tau.get(), &mut out);
        out
    }

    pub(crate) fn phi_flow_in_place(&self, tau: f64, u: &mut ComplexField) {
        if self.linear {
            return;
        }
        let v = self.interaction(u);
        for (z, p) in u.values_mut().iter_mut().zip(v) {
            *z *= Complex64::cis(tau * p);
        }
    }

    /// `Ψ_τ(u) = (Φ_τ(u) - u) / (iτ)`.
    ///
    /// Evaluated as `u · e^{iτV/2} · 2 sin(τV/2) / τ`, which is the same
    /// quantity without the cancellation of `e^{iτV} - 1` for small `τV`.
    pub fn psi_tau(&self, tau: FlowTime, u: &ComplexField) -> ComplexField {
        let tau = tau.get();
        let v = self.interaction(u);
        ComplexField::new(
            u.values()
                .iter()
                .zip(v)
                .map(|(z, p)| {
                    let half = 0.5 * tau * p;
                    z * Complex64::cis(half) * (2.0 * half.sin() / tau)
                })
                .collect(),
        )
    }
}

/// `S(t,s) u = e^{i Δβ Δ} u`: multiplies `û_k` by `e^{-i Δβ k²}`.
pub fn propagate_linear(grid: &SpectralGrid, u: &ComplexField, dbeta: f64) -> ComplexField {
    let mut out = u.clone();
    propagate_linear_in_place(grid, &mut out, dbeta);
    out
}

pub(crate) fn propagate_linear_in_place(grid: &SpectralGrid, u: &mut ComplexField, dbeta: f64) {
    grid.check(u);
    let buf = u.values_mut();
    grid.forward_in_place(buf);
    for (c, &k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *c *= Complex64::cis(-dbeta * k * k);
    }
    grid.inverse_in_place(buf);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SobolevIndex;
    use std::f64::consts::PI;

    fn gaussian(x: f64) -> f64 {
        (-0.5 * (x - PI) * (x - PI)).exp()
    }

    fn cos_model(m: usize) -> Model {
        Model::new(SpectralGrid::periodic_2pi(m).unwrap(), Potential::Cosine).unwrap()
    }

    #[test]
    fn flow_time_range() {
        assert!(FlowTime::new(0.0).is_err());
        assert!(FlowTime::new(1.0).is_err());
        assert!(FlowTime::new(f64::NAN).is_err());
        assert_eq!(FlowTime::new(0.25).unwrap().get(), 0.25);
    }

    #[test]
    fn non_real_potential_rejected() {
        let s = [Complex64::new(1.0, 0.0), Complex64::new(0.5, 1e-300)];
        assert!(matches!(
            Potential::from_complex_samples(&s),
            Err(Error::NonRealPotential { index: 1, .. })
        ));
        let s = [Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)];
        assert_eq!(Potential::from_complex_samples(&s).unwrap(), Potential::Tabulated(vec![1.0, 0.5]));
    }

    #[test]
    fn tabulated_length_checked() {
        let g = SpectralGrid::periodic_2pi(8).unwrap();
        assert!(Model::new(g, Potential::Tabulated(vec![0.0; 4])).is_err());
    }

    #[test]
    fn cosine_samples_exact() {
        let g = SpectralGrid::periodic_2pi(64).unwrap();
        let s = Potential::Cosine.samples(&g).unwrap();
        for (j, v) in s.iter().enumerate() {
            assert_eq!(*v, g.node(j).cos());
        }
    }

    #[test]
    fn cosine_annihilates_constants() {
        let model = cos_model(32);
        let u = model.grid().sample(|_| Complex64::new(0.7, -0.2));
        let v = model.interaction(&u);
        assert!(v.iter().all(|x| x.abs() < 1e-14));
        assert!(model.psi0(&u).max_abs() < 1e-14);
    }

    #[test]
    fn zero_potential_is_inert() {
        let model = Model::new(SpectralGrid::periodic_2pi(32).unwrap(), Potential::Zero).unwrap();
        let u = model.grid().sample_real(gaussian);
        assert!(model.interaction(&u).iter().all(|&x| x == 0.0));
        let tau = FlowTime::new(0.1).unwrap();
        assert_eq!(model.phi_flow(tau, &u), u);
        assert!(model.psi_tau(tau, &u).max_abs() == 0.0);
    }

    #[test]
    fn psi0_of_zero() {
        let model = cos_model(16);
        assert_eq!(model.psi0(&ComplexField::zeros(16)).max_abs(), 0.0);
    }

    #[test]
    fn phase_flow_preserves_modulus() {
        let model = cos_model(128);
        let u = model.grid().sample(|x| Complex64::new(gaussian(x), (2.0 * x).sin()));
        let out = model.phi_flow(FlowTime::new(0.9).unwrap(), &u);
        for j in 0..128 {
            let (a, b) = (u[j].norm(), out[j].norm());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * a, "node {j}");
        }
        let (n0, n1) = (model.grid().l2_norm(&u), model.grid().l2_norm(&out));
        assert!((n0 - n1).abs() <= 1e-14 * n0);
    }

    // Oracle: RK4 on i du/dt + V[u]u = 0 with V[u] re-evaluated at every stage.
    #[test]
    fn phase_flow_matches_rk4() {
        let model = cos_model(64);
        let u0 = model.grid().sample_real(gaussian);
        let tau = 1e-3;
        let rhs = |u: &ComplexField| -> ComplexField {
            let p = model.psi0(u);
            ComplexField::new(p.values().iter().map(|z| Complex64::i() * z).collect())
        };
        let axpy = |u: &ComplexField, a: f64, k: &ComplexField| {
            ComplexField::new(u.values().iter().zip(k.values()).map(|(x, y)| x + a * y).collect())
        };
        let steps = 100;
        let h = tau / steps as f64;
        let mut u = u0.clone();
        for _ in 0..steps {
            let k1 = rhs(&u);
            let k2 = rhs(&axpy(&u, h / 2.0, &k1));
            let k3 = rhs(&axpy(&u, h / 2.0, &k2));
            let k4 = rhs(&axpy(&u, h, &k3));
            u = ComplexField::new(
                (0..64)
                    .map(|j| u[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                    .collect(),
            );
        }
        let exact = model.phi_flow(FlowTime::new(tau).unwrap(), &u0);
        assert!((&exact - &u).max_abs() < 1e-10);
    }

    #[test]
    fn psi_tau_small_limit() {
        let model = cos_model(128);
        let u = model.grid().sample_real(gaussian);
        let p0 = model.psi0(&u);
        let pt = model.psi_tau(FlowTime::new(1e-8).unwrap(), &u);
        let g = model.grid();
        assert!(g.l2_norm(&(&pt - &p0)) / g.l2_norm(&p0) <= 1e-6);
    }

    #[test]
    fn psi_tau_is_difference_quotient() {
        let model = cos_model(64);
        let u = model.grid().sample(|x| Complex64::new(gaussian(x), 0.3 * x.sin()));
        let tau = FlowTime::new(0.3).unwrap();
        let phi = model.phi_flow(tau, &u);
        let quotient: Vec<Complex64> = (0..64).map(|j| (phi[j] - u[j]) / (Complex64::i() * 0.3)).collect();
        let psi = model.psi_tau(tau, &u);
        for j in 0..64 {
            assert!((psi[j] - quotient[j]).norm() < 1e-14);
        }
    }

    #[test]
    fn psi_tau_defect_halves() {
        let model = cos_model(128);
        let g = model.grid();
        let u = g.sample_real(gaussian);
        let p0 = model.psi0(&u);
        let defect = |tau: f64| g.sobolev_norm(&(&model.psi_tau(FlowTime::new(tau).unwrap(), &u) - &p0), SobolevIndex::H1);
        for &tau in &[1e-2, 1e-3, 1e-4] {
            let ratio = defect(tau) / defect(tau / 2.0);
            assert!((ratio - 2.0).abs() <= 0.2, "tau {tau}: ratio {ratio}");
        }
    }

    #[test]
    fn propagator_identity_and_group() {
        let g = SpectralGrid::periodic_2pi(64).unwrap();
        let u = g.sample(|x| Complex64::new(gaussian(x), (3.0 * x).cos()));
        let same = propagate_linear(&g, &u, 0.0);
        assert!((&same - &u).max_abs() < 1e-15);
        let ab = propagate_linear(&g, &propagate_linear(&g, &u, 0.3), -0.17);
        let direct = propagate_linear(&g, &u, 0.3 - 0.17);
        assert!((&ab - &direct).max_abs() <= 1e-12 * u.max_abs());
    }

    #[test]
    fn propagator_on_single_mode() {
        let g = SpectralGrid::periodic_2pi(32).unwrap();
        let u = g.sample(|x| Complex64::new(0.0, 3.0 * x).exp());
        let out = propagate_linear(&g, &u, 0.1);
        let phase = Complex64::cis(-0.9);
        for j in 0..32 {
            assert!((out[j] - phase * u[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn dealiasing_leaves_cosine_untouched() {
        let g = SpectralGrid::periodic_2pi(64).unwrap();
        let plain = Model::new(g.clone(), Potential::Cosine).unwrap();
        let cut = Model::new(g.with_dealiasing(true), Potential::Cosine).unwrap();
        let u = plain.grid().sample_real(gaussian);
        let (a, b) = (plain.interaction(&u), cut.interaction(&u));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}
