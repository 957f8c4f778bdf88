//! Ground-truth gauge potentials and dynamics diagnostics.
//!
//! Three independent reference paths check the trained protocol:
//!
//! * the exact gauge potential from diagonalization, with matrix elements
//!   `-i <m|dH/dlambda|n> / (E_m - E_n)` in the instantaneous eigenbasis and
//!   the diagonal gauge-fixed to zero;
//! * a nested-commutator expansion `A = i sum_k alpha_k O_k` whose
//!   coefficients solve a small least-squares problem in closed form;
//! * Schroedinger evolution under the assembled drive, reporting the overlap
//!   with the target ground state over time.
//!
//! The action `||dH/dlambda + i[A, H]||_F^2` ties them together: the exact
//! gauge is its global minimizer over Hermitian matrices, the
//! nested-commutator ansatz minimizes it over a restricted span, and the
//! training loss penalizes the commutator of its integrand with `H`, which
//! the exact minimizer annihilates.

use crate::linalg::{
    commutator, hermitian_eigensystem, pauli_basis, pauli_reconstruct, Complex64, ComplexMatrix,
    LinalgError, PauliBasis,
};
use crate::net::{forward_with_input_derivative, MlpParameters};
use crate::physics::build_h_ad;
use crate::problem::{d_h_ad_d_lambda, ProblemSpec};
use thiserror::Error;

/// Default minimum eigenvalue gap (Hartree) below which a coupled pair makes
/// the exact gauge potential singular.
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "degenerate spectrum: levels {m} and {n} are only {gap:.3e} apart but coupled by the drive"
    )]
    DegenerateSpectrum { m: usize, n: usize, gap: f64 },
    #[error("normal equations are singular (condition number {condition:.3e}): {message}")]
    IllConditioned { condition: f64, message: String },
    #[error("integration step too large: {0}")]
    StepSize(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Exact gauge potential at one schedule value, with its quality measures.
#[derive(Debug, Clone)]
pub struct GaugeReport {
    pub lambda: f64,
    /// Hermitian gauge potential in the computational basis, diagonal
    /// gauge-fixed to zero in the instantaneous eigenbasis.
    pub a_exact: ComplexMatrix,
    /// Smallest eigenvalue gap among pairs the drive actually couples;
    /// infinite when no pair is coupled.
    pub min_coupled_gap: f64,
    /// Frobenius norm of the Euler-Lagrange commutator; zero for the exact
    /// minimizer up to round-off.
    pub el_residual: f64,
    pub action_value: f64,
}

/// Nested-commutator approximation of the gauge potential.
#[derive(Debug, Clone)]
pub struct NcExpansion {
    pub order: usize,
    pub alphas: Vec<f64>,
    pub a_nc: ComplexMatrix,
}

/// `Re Tr(a^dagger b)`, the Frobenius inner product restricted to its real
/// part.
fn real_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// `dH/dlambda + i [a, H_AD(lambda)]`, the integrand the action measures.
fn action_integrand(p: &ProblemSpec, lambda: f64, a: &ComplexMatrix) -> ComplexMatrix {
    let h = build_h_ad(p, lambda);
    let bracket = commutator(a, &h).expect("caller guarantees matching dimensions");
    d_h_ad_d_lambda(p)
        .add(&bracket.scaled(Complex64::new(0.0, 1.0)))
        .expect("dimensions agree by construction")
}

/// Action of a candidate gauge potential: `||dH/dlambda + i[a, H]||_F^2`.
/// Dimensions must match the problem.
pub fn action_value(p: &ProblemSpec, lambda: f64, a: &ComplexMatrix) -> f64 {
    action_integrand(p, lambda, a).frobenius_norm_sq()
}

/// Frobenius norm of the Euler-Lagrange commutator `[G, H]` where `G` is the
/// action integrand; the exact gauge potential drives it to zero.
pub fn el_residual_value(p: &ProblemSpec, lambda: f64, a: &ComplexMatrix) -> f64 {
    let h = build_h_ad(p, lambda);
    let g = action_integrand(p, lambda, a);
    commutator(&g, &h)
        .expect("dimensions agree by construction")
        .frobenius_norm_sq()
        .sqrt()
}

/// Exact gauge potential by diagonalization.
///
/// Fails when two levels closer than `gap_tolerance` are coupled by the
/// drive (matrix element above the same tolerance); an uncoupled near
/// degeneracy is harmless and its element is gauge-fixed to zero.
pub fn exact_gauge_potential(
    p: &ProblemSpec,
    lambda: f64,
    gap_tolerance: f64,
) -> Result<GaugeReport, OracleError> {
    let h = build_h_ad(p, lambda);
    let eig = hermitian_eigensystem(&h)?;
    let v = &eig.eigenvectors;
    let d = d_h_ad_d_lambda(p);
    // Drive in the instantaneous eigenbasis.
    let m = v.dagger().matmul(&d.matmul(v)?)?;
    let dim = p.dim();
    let mut min_coupled_gap = f64::INFINITY;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let gap = (eig.eigenvalues[i] - eig.eigenvalues[j]).abs();
            let coupled = m.get(i, j).norm() > gap_tolerance;
            if coupled {
                if gap < gap_tolerance {
                    return Err(OracleError::DegenerateSpectrum { m: i, n: j, gap });
                }
                min_coupled_gap = min_coupled_gap.min(gap);
            }
        }
    }
    let mut tilde = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let gap = eig.eigenvalues[i] - eig.eigenvalues[j];
            if gap.abs() < gap_tolerance {
                continue;
            }
            let value = m.get(i, j) * Complex64::new(0.0, -1.0 / gap);
            tilde.set(i, j, value);
            tilde.set(j, i, value.conj());
        }
    }
    let a_exact = v.matmul(&tilde.matmul(&v.dagger())?)?;
    Ok(GaugeReport {
        lambda,
        el_residual: el_residual_value(p, lambda, &a_exact),
        action_value: action_value(p, lambda, &a_exact),
        a_exact,
        min_coupled_gap,
    })
}

/// Nested-commutator gauge potential of the given order (1 through 4).
///
/// Builds `O_k` with `2k - 1` nestings of `H` around `dH/dlambda` and picks
/// the real coefficients minimizing the action of `i sum_k alpha_k O_k`.
/// The normal equations are solved through a spectral pseudo-inverse, so an
/// exactly rank-deficient span (every two-level system beyond order one)
/// still yields the minimum-norm optimum; only a span with no signal at all,
/// meaning the drive commutes with the Hamiltonian, is an error.
pub fn nc_gauge_potential(
    p: &ProblemSpec,
    lambda: f64,
    order: usize,
) -> Result<NcExpansion, OracleError> {
    if !(1..=4).contains(&order) {
        return Err(OracleError::Config(format!(
            "nested-commutator order must be between 1 and 4, got {order}"
        )));
    }
    let h = build_h_ad(p, lambda);
    let d = d_h_ad_d_lambda(p);
    let mut operators = Vec::with_capacity(order);
    let mut brackets = Vec::with_capacity(order);
    let mut o = commutator(&h, &d)?;
    let signal = o.frobenius_norm_sq().sqrt();
    let scale = h.frobenius_norm_sq().sqrt() * d.frobenius_norm_sq().sqrt();
    if signal <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
        return Err(OracleError::IllConditioned {
            condition: f64::INFINITY,
            message: "the drive commutes with the Hamiltonian, no commutator direction exists"
                .into(),
        });
    }
    for _ in 0..order {
        let b = commutator(&h, &o)?;
        let next = commutator(&h, &b)?;
        operators.push(o);
        brackets.push(b);
        o = next;
    }

    // Gram system for min ||d + sum_k alpha_k [H, O_k]||_F^2.
    let mut gram = ComplexMatrix::zeros(order);
    let mut rhs = vec![0.0f64; order];
    for k in 0..order {
        for j in 0..order {
            gram.set(
                k,
                j,
                Complex64::new(real_inner(&brackets[k], &brackets[j]), 0.0),
            );
        }
        rhs[k] = real_inner(&brackets[k], &d);
    }
    let geig = hermitian_eigensystem(&gram)?;
    let g_max = geig.eigenvalues[order - 1];
    if g_max <= 0.0 {
        return Err(OracleError::IllConditioned {
            condition: f64::INFINITY,
            message: "Gram matrix of the commutator span has no positive eigenvalue".into(),
        });
    }
    let cutoff = 1e-12 * g_max;
    let mut alphas = vec![0.0f64; order];
    for k in 0..order {
        let g = geig.eigenvalues[k];
        if g <= cutoff {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..order {
            proj += geig.eigenvectors.get(i, k).re * rhs[i];
        }
        let step = -proj / g;
        for i in 0..order {
            alphas[i] += step * geig.eigenvectors.get(i, k).re;
        }
    }
    let mut sum = ComplexMatrix::zeros(p.dim());
    for (alpha, op) in alphas.iter().zip(&operators) {
        sum = sum.add(&op.scaled(Complex64::new(*alpha, 0.0)))?;
    }
    let a_nc = sum.scaled(Complex64::new(0.0, 1.0));
    Ok(NcExpansion {
        order,
        alphas,
        a_nc,
    })
}

/// Instantaneous spectra of the driven and bare Hamiltonians along a
/// trained protocol.
#[derive(Debug, Clone)]
pub struct EigenTracks {
    pub times: Vec<f64>,
    /// Ascending eigenvalues of `H_AD(lambda(t))` per time.
    pub adiabatic: Vec<Vec<f64>>,
    /// Ascending eigenvalues of the full driving Hamiltonian per time, with
    /// the realizable Hermitian reconstruction as the counterdiabatic term.
    pub cd: Vec<Vec<f64>>,
}

/// Hermitian counterdiabatic term from the model's Pauli coefficients.
fn reconstructed_drive(basis: &PauliBasis, c: &[f64]) -> Result<ComplexMatrix, LinalgError> {
    let coefficients: Vec<Complex64> = c.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    pauli_reconstruct(&coefficients, basis)
}

/// Eigenvalue tracks of the protocol encoded by `params` over `times`.
pub fn eigen_tracks(
    p: &ProblemSpec,
    params: &MlpParameters,
    times: &[f64],
) -> Result<EigenTracks, OracleError> {
    if params.state_dim() != p.dim() {
        return Err(OracleError::Config(format!(
            "model acts on dimension {} but the problem has dimension {}",
            params.state_dim(),
            p.dim()
        )));
    }
    let basis = pauli_basis(p.n_qubits)?;
    let mut adiabatic = Vec::with_capacity(times.len());
    let mut cd = Vec::with_capacity(times.len());
    for &t in times {
        let bundle = forward_with_input_derivative(params, t);
        let h_ad = build_h_ad(p, bundle.lambda);
        let drive = reconstructed_drive(&basis, &bundle.c)?;
        let h_cd = h_ad.add(&drive.scaled(Complex64::new(bundle.dlambda_dt, 0.0)))?;
        adiabatic.push(hermitian_eigensystem(&h_ad)?.eigenvalues);
        cd.push(hermitian_eigensystem(&h_cd)?.eigenvalues);
    }
    Ok(EigenTracks {
        times: times.to_vec(),
        adiabatic,
        cd,
    })
}

/// What the drive looks like at one instant.
#[derive(Debug, Clone)]
pub struct ProtocolPoint {
    pub lambda: f64,
    pub dlambda_dt: f64,
    /// Hermitian counterdiabatic operator; the full Hamiltonian is
    /// `H_AD(lambda) + dlambda_dt * a_cd`.
    pub a_cd: ComplexMatrix,
}

/// Time-indexed provider of the protocol entering the evolution.
pub trait Protocol {
    fn sample(&self, t: f64) -> Result<ProtocolPoint, OracleError>;
}

/// Affine schedule between two endpoint values.
#[derive(Debug, Clone, Copy)]
pub struct LinearSchedule {
    pub t_min: f64,
    pub t_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl LinearSchedule {
    pub fn lambda(&self, t: f64) -> f64 {
        self.lambda_min + self.rate() * (t - self.t_min)
    }

    pub fn rate(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / (self.t_max - self.t_min)
    }
}

/// Bare schedule sweep with no counterdiabatic term.
#[derive(Debug, Clone)]
pub struct AdiabaticRamp {
    pub dim: usize,
    pub schedule: LinearSchedule,
}

impl Protocol for AdiabaticRamp {
    fn sample(&self, t: f64) -> Result<ProtocolPoint, OracleError> {
        Ok(ProtocolPoint {
            lambda: self.schedule.lambda(t),
            dlambda_dt: self.schedule.rate(),
            a_cd: ComplexMatrix::zeros(self.dim),
        })
    }
}

/// Schedule sweep driven by the exact gauge potential at every instant.
#[derive(Debug, Clone)]
pub struct ExactGaugeRamp<'a> {
    pub problem: &'a ProblemSpec,
    pub schedule: LinearSchedule,
    pub gap_tolerance: f64,
}

impl Protocol for ExactGaugeRamp<'_> {
    fn sample(&self, t: f64) -> Result<ProtocolPoint, OracleError> {
        let lambda = self.schedule.lambda(t);
        let report = exact_gauge_potential(self.problem, lambda, self.gap_tolerance)?;
        Ok(ProtocolPoint {
            lambda,
            dlambda_dt: self.schedule.rate(),
            a_cd: report.a_exact,
        })
    }
}

/// Protocol read off a trained model, with the Hermitian Pauli
/// reconstruction as the drive.
pub struct ModelProtocol<'a> {
    params: &'a MlpParameters,
    basis: PauliBasis,
}

impl<'a> ModelProtocol<'a> {
    pub fn new(params: &'a MlpParameters) -> Result<Self, OracleError> {
        let dim = params.state_dim();
        let basis = pauli_basis(dim.trailing_zeros() as usize)?;
        Ok(Self { params, basis })
    }
}

impl Protocol for ModelProtocol<'_> {
    fn sample(&self, t: f64) -> Result<ProtocolPoint, OracleError> {
        let bundle = forward_with_input_derivative(self.params, t);
        Ok(ProtocolPoint {
            lambda: bundle.lambda,
            dlambda_dt: bundle.dlambda_dt,
            a_cd: reconstructed_drive(&self.basis, &bundle.c)?,
        })
    }
}

/// Overlap with the target ground state along the evolution.
#[derive(Debug, Clone)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    /// `|<ground(h_final)|psi(t)>|^2` at each grid node.
    pub fidelity: Vec<f64>,
    /// Per grid node, the largest pre-renormalization norm deviation of any
    /// integration step since the previous node; the first entry is zero.
    pub norm_drift: Vec<f64>,
    /// Largest norm deviation seen before any per-step renormalization.
    pub max_norm_drift: f64,
}

fn matvec(m: &ComplexMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let n = m.dim();
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += m.get(i, j) * v[j];
            }
            acc
        })
        .collect()
}

/// Lowest-eigenvalue column of a Hermitian matrix.
fn ground_state(m: &ComplexMatrix) -> Result<Vec<Complex64>, OracleError> {
    let eig = hermitian_eigensystem(m)?;
    let n = m.dim();
    Ok((0..n).map(|i| eig.eigenvectors.get(i, 0)).collect())
}

/// Integrates `i d/dt psi = H(t) psi` from the ground state of `h_initial`
/// and reports the overlap with the ground state of `h_final` at every grid
/// node.
///
/// `dt` bounds the internal step; each grid cell is subdivided evenly so the
/// integrator lands exactly on the nodes. Classical fourth-order
/// Runge-Kutta with per-step renormalization; the worst norm drift before
/// renormalization is reported, and a drift beyond 1e-6 aborts.
pub fn evolve_fidelity<P: Protocol + ?Sized>(
    p: &ProblemSpec,
    protocol: &P,
    t_grid: &[f64],
    dt: f64,
) -> Result<FidelityTrace, OracleError> {
    if t_grid.len() < 2 {
        return Err(OracleError::Config(format!(
            "time grid needs at least two nodes, got {}",
            t_grid.len()
        )));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OracleError::Config(
            "time grid must be strictly increasing".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(OracleError::Config(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let span = t_grid[t_grid.len() - 1] - t_grid[0];
    if dt > 1e-3 * span {
        return Err(OracleError::StepSize(format!(
            "dt {dt:.3e} exceeds 1e-3 of the protocol span {span:.3e}"
        )));
    }

    let hamiltonian = |t: f64| -> Result<ComplexMatrix, OracleError> {
        let pt = protocol.sample(t)?;
        Ok(build_h_ad(p, pt.lambda).add(&pt.a_cd.scaled(Complex64::new(pt.dlambda_dt, 0.0)))?)
    };
    let derivative = |h: &ComplexMatrix, psi: &[Complex64]| -> Vec<Complex64> {
        matvec(h, psi)
            .into_iter()
            .map(|z| z * Complex64::new(0.0, -1.0))
            .collect()
    };

    let mut psi = ground_state(&p.h_initial)?;
    let target = ground_state(&p.h_final)?;
    let overlap = |psi: &[Complex64]| -> f64 {
        let inner: Complex64 = target.iter().zip(psi).map(|(g, s)| g.conj() * s).sum();
        inner.norm_sqr()
    };

    let mut fidelity = vec![overlap(&psi)];
    let mut norm_drift = vec![0.0f64];
    let mut max_norm_drift = 0.0f64;
    for cell in t_grid.windows(2) {
        let width = cell[1] - cell[0];
        let steps = (width / dt).ceil().max(1.0) as usize;
        let h_step = width / steps as f64;
        let mut cell_drift = 0.0f64;
        for s in 0..steps {
            let t0 = cell[0] + h_step * s as f64;
            let h_start = hamiltonian(t0)?;
            let h_mid = hamiltonian(t0 + 0.5 * h_step)?;
            let h_end = hamiltonian(t0 + h_step)?;
            let k1 = derivative(&h_start, &psi);
            let stage2: Vec<Complex64> = psi
                .iter()
                .zip(&k1)
                .map(|(y, k)| y + k * Complex64::new(0.5 * h_step, 0.0))
                .collect();
            let k2 = derivative(&h_mid, &stage2);
            let stage3: Vec<Complex64> = psi
                .iter()
                .zip(&k2)
                .map(|(y, k)| y + k * Complex64::new(0.5 * h_step, 0.0))
                .collect();
            let k3 = derivative(&h_mid, &stage3);
            let stage4: Vec<Complex64> = psi
                .iter()
                .zip(&k3)
                .map(|(y, k)| y + k * Complex64::new(h_step, 0.0))
                .collect();
            let k4 = derivative(&h_end, &stage4);
            let weight = h_step / 6.0;
            for i in 0..psi.len() {
                psi[i] += (k1[i] + (k2[i] + k3[i]) * Complex64::new(2.0, 0.0) + k4[i])
                    * Complex64::new(weight, 0.0);
            }
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let drift = (norm - 1.0).abs();
            if drift > 1e-6 {
                return Err(OracleError::StepSize(format!(
                    "norm drifted by {drift:.3e} in one step at t = {t0:.6}; decrease dt"
                )));
            }
            cell_drift = cell_drift.max(drift);
            for z in &mut psi {
                *z /= norm;
            }
        }
        max_norm_drift = max_norm_drift.max(cell_drift);
        norm_drift.push(cell_drift);
        fidelity.push(overlap(&psi));
    }
    Ok(FidelityTrace {
        times: t_grid.to_vec(),
        fidelity,
        norm_drift,
        max_norm_drift,
    })
}
