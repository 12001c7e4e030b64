//! One-step maps and trajectory evolution.
//!
//! * `Split`: `u_{n+1} = S(Δβ_n) Φ_τ(u_n)`, nonlinear phase flow first.
//! * `Exp`:   `u_{n+1} = S(Δβ_n) (u_n + iτ V[u_n] u_n)`.
//! * `Mid`:   `i(u_{n+1} - u_n)/τ + (χ_n/√τ) Δ u_{n+1/2} + V[u_n] u_n = 0`,
//!   solved mode by mode in Fourier space. With `a_k = Δβ_n k² / 2` and
//!   `N̂_k` the coefficients of `V[u_n] u_n`,
//!   `û_{n+1,k} = ((i + a_k) û_{n,k} - τ N̂_k) / (i - a_k)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, SobolevIndex};
use crate::model::{propagate_linear_in_place, FlowTime, Model};
use crate::noise::{BrownianPath, NormalizedIncrement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Split,
    Exp,
    Mid,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Split, SchemeKind::Exp, SchemeKind::Mid];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Split => "split",
            SchemeKind::Exp => "exp",
            SchemeKind::Mid => "mid",
        }
    }

    /// One step of size `tau` driven by the raw increment `dbeta`.
    pub fn step(self, model: &Model, u: &ComplexField, dbeta: f64, tau: FlowTime) -> ComplexField {
        let mut out = u.clone();
        self.advance(model, &mut out, dbeta, tau.get());
        out
    }

    pub(crate) fn advance(self, model: &Model, u: &mut ComplexField, dbeta: f64, tau: f64) {
        match self {
            SchemeKind::Split => {
                model.phi_flow_in_place(tau, u);
                propagate_linear_in_place(model.grid(), u, dbeta);
            }
            SchemeKind::Exp => {
                if !model.is_linear() {
                    let v = model.interaction(u);
                    for (z, p) in u.values_mut().iter_mut().zip(v) {
                        *z += Complex64::new(0.0, tau * p) * *z;
                    }
                }
                propagate_linear_in_place(model.grid(), u, dbeta);
            }
            SchemeKind::Mid => mid_in_place(model, u, dbeta, tau),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "split" => Ok(SchemeKind::Split),
            "exp" => Ok(SchemeKind::Exp),
            "mid" => Ok(SchemeKind::Mid),
            other => Err(Error::config(format!(
                "unknown scheme `{other}` (expected split, exp or mid)"
            ))),
        }
    }
}

pub fn step_split(model: &Model, u: &ComplexField, dbeta: f64, tau: FlowTime) -> ComplexField {
    SchemeKind::Split.step(model, u, dbeta, tau)
}

pub fn step_exp(model: &Model, u: &ComplexField, dbeta: f64, tau: FlowTime) -> ComplexField {
    SchemeKind::Exp.step(model, u, dbeta, tau)
}

pub fn step_mid(model: &Model, u: &ComplexField, chi: NormalizedIncrement, tau: FlowTime) -> ComplexField {
    SchemeKind::Mid.step(model, u, chi.increment(tau.get()), tau)
}

fn mid_in_place(model: &Model, u: &mut ComplexField, dbeta: f64, tau: f64) {
    let grid = model.grid();
    grid.check(u);
    let nonlinear = (!model.is_linear()).then(|| {
        let mut n = model.psi0(u).into_values();
        grid.forward_in_place(&mut n);
        n
    });
    let buf = u.values_mut();
    grid.forward_in_place(buf);
    let i = Complex64::i();
    for (idx, (c, &k)) in buf.iter_mut().zip(grid.wavenumbers()).enumerate() {
        let a = 0.5 * dbeta * k * k;
        let mut num = (i + a) * *c;
        if let Some(n) = &nonlinear {
            num -= tau * n[idx];
        }
        *c = num / (i - a);
    }
    grid.inverse_in_place(buf);
}

/// Residual of the Mid defining relation, per Fourier mode, scaled by `τ`:
/// `max_k |i(û_{n+1} - û_n) - a_k (û_n + û_{n+1}) + τ N̂_k|`.
pub fn mid_residual(model: &Model, u_n: &ComplexField, u_next: &ComplexField, dbeta: f64, tau: f64) -> f64 {
    let grid = model.grid();
    let a_hat = grid.forward(u_n).expect("grid-sized field");
    let b_hat = grid.forward(u_next).expect("grid-sized field");
    let n_hat = grid.forward(&model.psi0(u_n)).expect("grid-sized field");
    let i = Complex64::i();
    grid.wavenumbers()
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let a = 0.5 * dbeta * k * k;
            (i * (b_hat[idx] - a_hat[idx]) - a * (a_hat[idx] + b_hat[idx]) + tau * n_hat[idx]).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub n: usize,
    pub t: f64,
    pub field: ComplexField,
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub n: usize,
    pub t: f64,
    pub u: ComplexField,
    pub l2: f64,
    /// Norm at the configured diagnostic index.
    pub hm: f64,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub scheme: SchemeKind,
    /// `T / N`; equal to the horizon when no step was taken.
    pub tau: f64,
    pub state: EvolutionState,
    pub diagnostics: Vec<DiagnosticRow>,
    pub snapshots: Vec<Snapshot>,
}

impl Evolution {
    /// `max_n |‖u_n‖ - ‖u_0‖| / ‖u_0‖` over the recorded diagnostics.
    pub fn max_l2_drift(&self) -> f64 {
        let l0 = self.diagnostics[0].l2;
        self.diagnostics
            .iter()
            .map(|d| if l0 > 0.0 { (d.l2 - l0).abs() / l0 } else { d.l2 })
            .fold(0.0, f64::max)
    }
}

fn diagnostics_row(model: &Model, n: usize, t: f64, u: &ComplexField) -> DiagnosticRow {
    let g = model.grid();
    let hs = g.sobolev_norms(u, &[SobolevIndex::H1, SobolevIndex::H2]);
    DiagnosticRow {
        n,
        t,
        l2: g.l2_norm(u),
        h1: hs[0],
        h2: hs[1],
    }
}

/// Runs `steps` steps of `scheme` over `path` coarse-grained to `steps`
/// intervals. Snapshots are taken at `n = 0`, every `snapshot_every` steps
/// and at the final step (`snapshot_every = 0` disables all but the last two).
pub fn evolve(
    scheme: SchemeKind,
    model: &Model,
    u0: &ComplexField,
    path: &BrownianPath,
    steps: usize,
    snapshot_every: usize,
    m_diag: SobolevIndex,
) -> Result<Evolution> {
    model.grid().check(u0);
    let g = model.grid();
    let mut snapshots = vec![Snapshot {
        n: 0,
        t: 0.0,
        field: u0.clone(),
    }];
    let mut diagnostics = vec![diagnostics_row(model, 0, 0.0, u0)];
    let (increments, tau) = if steps == 0 {
        (Vec::new(), path.horizon())
    } else {
        (path.coarse_increments(steps)?, path.horizon() / steps as f64)
    };
    if steps > 0 {
        FlowTime::new(tau)?;
    }
    let mut u = u0.clone();
    for (i, &dbeta) in increments.iter().enumerate() {
        scheme.advance(model, &mut u, dbeta, tau);
        let n = i + 1;
        if !u.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        let t = n as f64 * tau;
        diagnostics.push(diagnostics_row(model, n, t, &u));
        if n == steps || (snapshot_every > 0 && n % snapshot_every == 0) {
            snapshots.push(Snapshot {
                n,
                t,
                field: u.clone(),
            });
        }
    }
    let last = *diagnostics.last().expect("at least the initial row");
    let state = EvolutionState {
        n: steps,
        t: last.t,
        l2: last.l2,
        hm: g.sobolev_norm(&u, m_diag),
        u,
    };
    Ok(Evolution {
        scheme,
        tau,
        state,
        diagnostics,
        snapshots,
    })
}

/// Final field only; no per-step diagnostics.
pub fn integrate(scheme: SchemeKind, model: &Model, u0: &ComplexField, increments: &[f64], tau: f64) -> Result<ComplexField> {
    let mut u = u0.clone();
    for (i, &dbeta) in increments.iter().enumerate() {
        scheme.advance(model, &mut u, dbeta, tau);
        if !u.is_finite() {
            return Err(Error::NonFinite { step: i + 1 });
        }
    }
    Ok(u)
}

/// Largest grid for which [`symplectic_defect`] builds the Jacobian.
pub const SYMPLECTIC_MAX_POINTS: usize = 16;

/// `‖JᵀΩJ - Ω‖_max` for the one-step map viewed on `(p, q) = (Re u, Im u)`,
/// with `Ω` the matrix of `(L/M) Σ_j dp_j ∧ dq_j` and `J` built by central
/// differences with step `1e-6 (1 + ‖u‖_∞)`.
pub fn symplectic_defect(scheme: SchemeKind, model: &Model, u: &ComplexField, dbeta: f64, tau: FlowTime) -> Result<f64> {
    let g = model.grid();
    let m = g.points();
    if m > SYMPLECTIC_MAX_POINTS {
        return Err(Error::config(format!(
            "symplectic defect needs at most {SYMPLECTIC_MAX_POINTS} grid points, got {m}"
        )));
    }
    g.check(u);
    let dim = 2 * m;
    let h = 1e-6 * (1.0 + u.max_abs());
    let to_field = |x: &[f64]| ComplexField::new((0..m).map(|j| Complex64::new(x[j], x[m + j])).collect());
    let to_real = |f: &ComplexField| -> Vec<f64> {
        f.values().iter().map(|z| z.re).chain(f.values().iter().map(|z| z.im)).collect()
    };
    let x0 = to_real(u);
    // jac[row][col] = ∂ out_row / ∂ x_col
    let mut jac = vec![vec![0.0; dim]; dim];
    for col in 0..dim {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[col] += h;
        xm[col] -= h;
        let fp = to_real(&scheme.step(model, &to_field(&xp), dbeta, tau));
        let fm = to_real(&scheme.step(model, &to_field(&xm), dbeta, tau));
        for row in 0..dim {
            jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    let w = g.spacing();
    let omega = |r: usize, c: usize| -> f64 {
        if r < m && c == r + m {
            w
        } else if r >= m && c + m == r {
            -w
        } else {
            0.0
        }
    };
    // (Ω J)[r][c] only has one nonzero term per row.
    let omega_j: Vec<Vec<f64>> = (0..dim)
        .map(|r| {
            let (partner, sign) = if r < m { (r + m, w) } else { (r - m, -w) };
            jac[partner].iter().map(|v| sign * v).collect()
        })
        .collect();
    let defect = (0..dim)
        .flat_map(|r| (0..dim).map(move |c| (r, c)))
        .map(|(r, c)| {
            let jt_omega_j: f64 = jac.iter().zip(&omega_j).map(|(jk, ok)| jk[r] * ok[c]).sum();
            (jt_omega_j - omega(r, c)).abs()
        })
        .fold(0.0, f64::max);
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpectralGrid;
    use crate::model::{propagate_linear, Potential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gaussian(x: f64) -> f64 {
        (-0.5 * (x - PI) * (x - PI)).exp()
    }

    fn model(m: usize, potential: Potential) -> Model {
        Model::new(SpectralGrid::periodic_2pi(m).unwrap(), potential).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, m: usize) -> ComplexField {
        ComplexField::new((0..m).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeKind::ALL {
            assert_eq!(s.name().parse::<SchemeKind>().unwrap(), s);
        }
        assert!("strang".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn split_fixes_constants() {
        let md = model(32, Potential::Cosine);
        let u = md.grid().sample(|_| Complex64::new(0.4, 0.3));
        let tau = FlowTime::new(0.1).unwrap();
        let out = step_split(&md, &u, 0.77, tau);
        assert!((&out - &u).max_abs() < 1e-14);
    }

    #[test]
    fn identity_when_nothing_happens() {
        let md = model(32, Potential::Zero);
        let u = md.grid().sample_real(gaussian);
        let tau = FlowTime::new(0.1).unwrap();
        for s in SchemeKind::ALL {
            assert!((&s.step(&md, &u, 0.0, tau) - &u).max_abs() < 1e-15, "{s}");
        }
        assert!((&step_mid(&md, &u, NormalizedIncrement(0.0), tau) - &u).max_abs() < 1e-15);
    }

    #[test]
    fn exp_of_zero_field() {
        let md = model(16, Potential::Cosine);
        let tau = FlowTime::new(0.1).unwrap();
        assert_eq!(step_exp(&md, &ComplexField::zeros(16), 0.3, tau).max_abs(), 0.0);
    }

    #[test]
    fn split_and_exp_coincide_without_potential() {
        let md = model(64, Potential::Zero);
        let u = md.grid().sample_real(gaussian);
        let tau = FlowTime::new(0.01).unwrap();
        let a = step_split(&md, &u, 0.05, tau);
        let b = step_exp(&md, &u, 0.05, tau);
        let c = propagate_linear(md.grid(), &u, 0.05);
        assert!((&a - &b).max_abs() <= 1e-14);
        assert!((&a - &c).max_abs() <= 1e-14);
    }

    #[test]
    fn split_preserves_l2_per_step() {
        let md = model(128, Potential::Cosine);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tau = FlowTime::new(2f64.powi(-6)).unwrap();
        for _ in 0..20 {
            let u = random_field(&mut rng, 128);
            let out = step_split(&md, &u, rng.random_range(-0.5..0.5), tau);
            let (a, b) = (md.grid().l2_norm(&u), md.grid().l2_norm(&out));
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn mid_cayley_is_unitary_without_potential() {
        let md = model(64, Potential::Zero);
        let u = md.grid().sample_real(gaussian);
        let tau = FlowTime::new(0.01).unwrap();
        let out = step_mid(&md, &u, NormalizedIncrement(1.3), tau);
        let (uh, oh) = (md.grid().forward(&u).unwrap(), md.grid().forward(&out).unwrap());
        for i in 0..64 {
            assert!((uh[i].norm() - oh[i].norm()).abs() <= 1e-15 + 1e-13 * uh[i].norm());
        }
        let (a, b) = (md.grid().l2_norm(&u), md.grid().l2_norm(&out));
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn mid_satisfies_its_defining_relation() {
        let md = model(128, Potential::Cosine);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let u = random_field(&mut rng, 128);
            let tau = 2f64.powi(-8);
            let dbeta = rng.random_range(-0.2..0.2);
            let next = SchemeKind::Mid.step(&md, &u, dbeta, FlowTime::new(tau).unwrap());
            let res = mid_residual(&md, &u, &next, dbeta, tau);
            let scale = md.grid().l2_norm(&u);
            assert!(res <= 1e-11 * scale, "residual {res:e}");
        }
    }

    #[test]
    fn evolve_zero_steps_returns_input() {
        let md = model(32, Potential::Cosine);
        let u0 = md.grid().sample_real(gaussian);
        let path = BrownianPath::generate(1, 0, 0.5, 16).unwrap();
        let ev = evolve(SchemeKind::Split, &md, &u0, &path, 0, 1, SobolevIndex::H1).unwrap();
        assert_eq!(ev.state.u, u0);
        assert_eq!(ev.diagnostics.len(), 1);
    }

    #[test]
    fn evolve_split_conserves_l2() {
        let md = model(128, Potential::Cosine);
        let u0 = md.grid().sample_real(gaussian);
        let path = BrownianPath::generate(5, 0, 1.0, 1024).unwrap();
        let ev = evolve(SchemeKind::Split, &md, &u0, &path, 1024, 256, SobolevIndex::H1).unwrap();
        assert!(ev.max_l2_drift() <= 1e-10);
        assert_eq!(ev.diagnostics.len(), 1025);
        assert_eq!(ev.snapshots.iter().map(|s| s.n).collect::<Vec<_>>(), vec![0, 256, 512, 768, 1024]);
        assert_eq!(ev.diagnostics[1024].t, 1.0);
        assert_eq!(ev.diagnostics[3].t, 3.0 / 1024.0);
    }

    #[test]
    fn evolve_rejects_non_dividing_steps() {
        let md = model(16, Potential::Cosine);
        let u0 = md.grid().sample_real(gaussian);
        let path = BrownianPath::generate(1, 0, 1.0, 64).unwrap();
        assert!(evolve(SchemeKind::Split, &md, &u0, &path, 48, 0, SobolevIndex::H1).is_err());
    }

    #[test]
    fn evolve_reports_blow_up() {
        let md = model(16, Potential::Tabulated(vec![1e300; 16]));
        let u0 = md.grid().sample(|_| Complex64::new(1e10, 0.0));
        let path = BrownianPath::generate(1, 0, 0.5, 8).unwrap();
        let err = evolve(SchemeKind::Exp, &md, &u0, &path, 8, 0, SobolevIndex::H1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1 }), "{err}");
    }

    // Self-refinement oracle: one step versus 64 sub-steps over the same path
    // segment. The local gap comes from the commutator of S(Δβ) and Φ_τ, so it
    // scales like |Δβ|·τ ~ τ^{3/2}.
    #[test]
    fn split_local_defect_has_order_three_halves() {
        let md = model(64, Potential::Cosine);
        let g = md.grid();
        let u0 = g.sample_real(gaussian);
        let gap = |tau: f64, seed: u64| {
            let path = BrownianPath::generate(seed, 0, tau, 64).unwrap();
            let one = integrate(SchemeKind::Split, &md, &u0, &[path.terminal_value()], tau).unwrap();
            let many = integrate(SchemeKind::Split, &md, &u0, path.increments(), tau / 64.0).unwrap();
            g.sobolev_norm(&(&one - &many), SobolevIndex::H1)
        };
        let avg = |tau: f64| (0..16).map(|s| gap(tau, s)).sum::<f64>() / 16.0;
        let (coarse, fine) = (avg(2f64.powi(-6)), avg(2f64.powi(-10)));
        let slope = (coarse / fine).log2() / 4.0;
        assert!((1.3..1.7).contains(&slope), "slope {slope}");
    }

    #[test]
    fn symplectic_defect_small_for_split() {
        let md = model(8, Potential::Cosine);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let tau = FlowTime::new(0.1).unwrap();
        for _ in 0..5 {
            let u = random_field(&mut rng, 8);
            let d = symplectic_defect(SchemeKind::Split, &md, &u, rng.random_range(-1.0..1.0), tau).unwrap();
            assert!(d <= 1e-5, "defect {d:e}");
        }
    }

    #[test]
    fn symplectic_defect_linear_maps() {
        let md = model(8, Potential::Zero);
        let u = md.grid().sample_real(gaussian);
        let tau = FlowTime::new(0.1).unwrap();
        for s in [SchemeKind::Split, SchemeKind::Exp, SchemeKind::Mid] {
            let d = symplectic_defect(s, &md, &u, 0.37, tau).unwrap();
            assert!(d <= 1e-8, "{s}: {d:e}");
        }
    }

    #[test]
    fn symplectic_defect_exp_is_not_symplectic() {
        let md = model(8, Potential::Cosine);
        let u = md.grid().sample(|x| Complex64::new(1.0 + x.sin(), x.cos()));
        let tau = FlowTime::new(0.25).unwrap();
        let d = symplectic_defect(SchemeKind::Exp, &md, &u, 0.1, tau).unwrap();
        assert!(d > 1e-4, "exp defect {d:e}");
    }

    #[test]
    fn symplectic_defect_rejects_large_grid() {
        let md = model(32, Potential::Cosine);
        let u = ComplexField::zeros(32);
        assert!(symplectic_defect(SchemeKind::Split, &md, &u, 0.1, FlowTime::new(0.1).unwrap()).is_err());
    }
}
