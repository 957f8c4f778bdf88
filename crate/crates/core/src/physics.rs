//! Loss terms tying network outputs to the control physics.
//!
//! The interpolated Hamiltonian is `H(lambda) = (1 - lambda) H_initial +
//! lambda H_final`, and the full driving Hamiltonian adds the
//! counterdiabatic term scaled by the schedule rate. Five penalties shape
//! the protocol:
//!
//! * boundary terms pin `lambda` and the total Hamiltonian to the initial
//!   and final targets;
//! * a least-action term drives the Euler-Lagrange residual
//!   `[i dH/dlambda - [A, H], H]` to zero at interior collocation points,
//!   which is the stationarity condition of the gauge-potential action;
//! * an adiabaticity term keeps the schedule rate small;
//! * a coupling term ties the free-form matrix `A` to its realizable Pauli
//!   expansion with real coefficients.
//!
//! Every term is a squared Frobenius quantity averaged over its batch and
//! scaled by a weight. The implementations are generic over
//! [`Scalar`], so the identical expressions run on `f64` for evaluation, on
//! tape variables for reference gradients, and next to them sits a fused
//! `f64` path that computes value and output-cotangents in one pass for the
//! training loop.
//!
//! Problem matrices are validated real, so everything here works on real
//! matrices: complex quantities are split into real and imaginary parts and
//! commutators with the real symmetric `H` stay part-wise.

use crate::autodiff::Scalar;
use crate::linalg::{pauli_basis, Complex64, ComplexMatrix};
use crate::net::{slot_a_im, slot_a_re, slot_c, NetOutputs, OutputBundle};
use crate::problem::ProblemSpec;
use serde::{Deserialize, Serialize};

/// Weights multiplying the five loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ic: f64,
    pub fc: f64,
    pub action: f64,
    pub adiabaticity: f64,
    pub coupling: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ic: 1e3,
            fc: 1e3,
            action: 1e2,
            adiabaticity: 5e-1,
            coupling: 2.5e2,
        }
    }
}

/// Weighted value of each term plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ic: f64,
    pub l_fc: f64,
    pub l_action: f64,
    pub l_adiabaticity: f64,
    pub l_coupling: f64,
    pub l_total: f64,
    /// Mean squared Hermiticity deviation of the raw matrix over the
    /// interior batch; reported, never part of the objective.
    pub hermiticity_diag: f64,
}

/// `(1 - lambda) H_initial + lambda H_final`.
pub fn build_h_ad(p: &ProblemSpec, lambda: f64) -> ComplexMatrix {
    let dim = p.dim();
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let h0 = p.h_initial.get(i, j);
            let h1 = p.h_final.get(i, j);
            out.set(i, j, h0 + (h1 - h0) * lambda);
        }
    }
    out
}

/// The full driving Hamiltonian `H_AD(lambda) + dlambda/dt * A`.
pub fn build_total_h(p: &ProblemSpec, bundle: &OutputBundle) -> ComplexMatrix {
    build_h_ad(p, bundle.lambda)
        .add(&bundle.a_cd.scaled(Complex64::new(bundle.dlambda_dt, 0.0)))
        .expect("bundle dimension matches problem dimension")
}

/// One addend of the sparse Pauli reconstruction at a fixed matrix entry.
#[derive(Debug, Clone, Copy)]
struct PlanTerm {
    string: usize,
    sign: f64,
}

/// Precomputed loss context for one problem: real matrix data, the Pauli
/// reconstruction plan, and the weights.
#[derive(Debug, Clone)]
pub struct CdLoss {
    dim: usize,
    pub weights: LossWeights,
    /// Real entries of the initial Hamiltonian, row-major.
    h_initial: Vec<f64>,
    /// Real entries of the final Hamiltonian.
    h_final: Vec<f64>,
    /// `h_final - h_initial`, the schedule derivative of the Hamiltonian.
    delta: Vec<f64>,
    /// Per matrix entry, the strings contributing to its real part.
    plan_re: Vec<Vec<PlanTerm>>,
    /// Per matrix entry, the strings contributing to its imaginary part.
    plan_im: Vec<Vec<PlanTerm>>,
    n_strings: usize,
}

impl CdLoss {
    pub fn new(p: &ProblemSpec, weights: LossWeights) -> Self {
        let dim = p.dim();
        let basis = pauli_basis(p.n_qubits).expect("problem qubit count is validated");
        let mut plan_re = vec![Vec::new(); dim * dim];
        let mut plan_im = vec![Vec::new(); dim * dim];
        for (string, rows) in basis.sites().iter().enumerate() {
            for (row, &(col, exponent)) in rows.iter().enumerate() {
                let entry = row * dim + col;
                let (plan, sign) = match exponent % 4 {
                    0 => (&mut plan_re, 1.0),
                    1 => (&mut plan_im, 1.0),
                    2 => (&mut plan_re, -1.0),
                    _ => (&mut plan_im, -1.0),
                };
                plan[entry].push(PlanTerm { string, sign });
            }
        }
        let real_of = |m: &ComplexMatrix| m.data().iter().map(|z| z.re).collect::<Vec<f64>>();
        let h_initial = real_of(&p.h_initial);
        let h_final = real_of(&p.h_final);
        let delta: Vec<f64> = h_final.iter().zip(&h_initial).map(|(a, b)| a - b).collect();
        Self {
            dim,
            weights,
            h_initial,
            h_final,
            delta,
            plan_re,
            plan_im,
            n_strings: basis.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_strings(&self) -> usize {
        self.n_strings
    }

    /// `|lambda - target|^2 + ||H(t) - H_target||_F^2` for one bundle,
    /// unweighted.
    fn endpoint_penalty<S: Scalar>(&self, b: &NetOutputs<S>, lambda_target: f64, fc: bool) -> S {
        let target = if fc { &self.h_final } else { &self.h_initial };
        let dl = b.lambda - lambda_target;
        let mut acc = dl * dl;
        for e in 0..self.dim * self.dim {
            let shift = self.h_initial[e] - target[e];
            let tre = b.lambda * self.delta[e] + b.dlambda_dt * b.a[e].re + shift;
            let tim = b.dlambda_dt * b.a[e].im;
            acc = acc + tre * tre + tim * tim;
        }
        acc
    }

    /// `||[i dH/dlambda - [A, H], H]||_F^2` for one bundle, unweighted.
    fn action_residual<S: Scalar>(&self, b: &NetOutputs<S>) -> S {
        let n = self.dim;
        let h: Vec<S> = (0..n * n)
            .map(|e| b.lambda * self.delta[e] + self.h_initial[e])
            .collect();
        let ar: Vec<S> = b.a.iter().map(|z| z.re).collect();
        let ai: Vec<S> = b.a.iter().map(|z| z.im).collect();
        let car = real_comm(&ar, &h, n);
        let cai = real_comm(&ai, &h, n);
        // P = i dH/dlambda - [A, H] split into parts; dH/dlambda is real.
        let pre: Vec<S> = car.iter().map(|&x| -x).collect();
        let pim: Vec<S> = cai.iter().zip(&self.delta).map(|(&x, &d)| -x + d).collect();
        let fre = real_comm(&pre, &h, n);
        let fim = real_comm(&pim, &h, n);
        let mut acc = fre[0] * fre[0];
        for &x in &fre[1..] {
            acc = acc + x * x;
        }
        for &x in &fim {
            acc = acc + x * x;
        }
        acc
    }

    /// `||A - sum_k c_k P_k||_F^2` for one bundle, unweighted.
    fn coupling_residual<S: Scalar>(&self, b: &NetOutputs<S>) -> S {
        let mut acc = None;
        for e in 0..self.dim * self.dim {
            let mut ere = b.a[e].re;
            for term in &self.plan_re[e] {
                ere = ere - b.c[term.string] * term.sign;
            }
            let mut eim = b.a[e].im;
            for term in &self.plan_im[e] {
                eim = eim - b.c[term.string] * term.sign;
            }
            let contrib = ere * ere + eim * eim;
            acc = Some(match acc {
                None => contrib,
                Some(a) => a + contrib,
            });
        }
        acc.expect("dim is at least one")
    }

    /// Weighted total over the three batches; the reference path every other
    /// evaluation is checked against.
    pub fn total<S: Scalar>(
        &self,
        ic: &[NetOutputs<S>],
        fc: &[NetOutputs<S>],
        interior: &[NetOutputs<S>],
    ) -> S {
        assert!(
            !ic.is_empty() && !fc.is_empty() && !interior.is_empty(),
            "all three batches must be nonempty"
        );
        let mean = |values: Vec<S>| {
            let inv = 1.0 / values.len() as f64;
            let mut it = values.into_iter();
            let first = it.next().expect("nonempty");
            it.fold(first, |a, b| a + b) * inv
        };
        let l_ic = mean(
            ic.iter()
                .map(|b| self.endpoint_penalty(b, 0.0, false))
                .collect(),
        );
        let l_fc = mean(
            fc.iter()
                .map(|b| self.endpoint_penalty(b, 1.0, true))
                .collect(),
        );
        let l_action = mean(interior.iter().map(|b| self.action_residual(b)).collect());
        let l_adiab = mean(
            interior
                .iter()
                .map(|b| b.dlambda_dt * b.dlambda_dt)
                .collect(),
        );
        let l_coupling = mean(interior.iter().map(|b| self.coupling_residual(b)).collect());
        l_ic * self.weights.ic
            + l_fc * self.weights.fc
            + l_action * self.weights.action
            + l_adiab * self.weights.adiabaticity
            + l_coupling * self.weights.coupling
    }

    /// Squared Hermiticity deviation of the raw matrix in one bundle.
    pub fn hermiticity_residual(&self, b: &NetOutputs<f64>) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dre = b.a[i * n + j].re - b.a[j * n + i].re;
                let dim_ = b.a[i * n + j].im + b.a[j * n + i].im;
                acc += dre * dre + dim_ * dim_;
            }
        }
        acc
    }

    /// Weighted per-term means over explicit batches.
    pub fn breakdown(
        &self,
        ic: &[NetOutputs<f64>],
        fc: &[NetOutputs<f64>],
        interior: &[NetOutputs<f64>],
    ) -> LossBreakdown {
        let mean = |values: Vec<f64>| values.iter().sum::<f64>() / values.len() as f64;
        let l_ic = self.weights.ic
            * mean(
                ic.iter()
                    .map(|b| self.endpoint_penalty(b, 0.0, false))
                    .collect(),
            );
        let l_fc = self.weights.fc
            * mean(
                fc.iter()
                    .map(|b| self.endpoint_penalty(b, 1.0, true))
                    .collect(),
            );
        let l_action =
            self.weights.action * mean(interior.iter().map(|b| self.action_residual(b)).collect());
        let l_adiabaticity = self.weights.adiabaticity
            * mean(
                interior
                    .iter()
                    .map(|b| b.dlambda_dt * b.dlambda_dt)
                    .collect(),
            );
        let l_coupling = self.weights.coupling
            * mean(interior.iter().map(|b| self.coupling_residual(b)).collect());
        let hermiticity_diag = mean(
            interior
                .iter()
                .map(|b| self.hermiticity_residual(b))
                .collect(),
        );
        LossBreakdown {
            l_ic,
            l_fc,
            l_action,
            l_adiabaticity,
            l_coupling,
            l_total: l_ic + l_fc + l_action + l_adiabaticity + l_coupling,
            hermiticity_diag,
        }
    }
}

/// `[a, b]` for real row-major square matrices of generic scalars.
fn real_comm<S: Scalar>(a: &[S], b: &[S], n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = a[i * n] * b[j] - b[i * n] * a[j];
            for k in 1..n {
                acc = acc + a[i * n + k] * b[k * n + j] - b[i * n + k] * a[k * n + j];
            }
            out.push(acc);
        }
    }
    out
}

// The fused f64 path: value and output-cotangents of each term in one pass,
// with caller-owned scratch so the training loop never allocates. The
// reverse formulas use, for real matrices with symmetric h,
// d||C||^2 where C = [x, h]: xbar = [cbar, h], hbar = [x^T, cbar].

/// Reusable buffers for [`CdLoss::interior_point_fused`] and
/// [`CdLoss::endpoint_point_fused`].
#[derive(Debug, Clone)]
pub struct CdScratch {
    h: Vec<f64>,
    ar: Vec<f64>,
    ai: Vec<f64>,
    pre: Vec<f64>,
    pim: Vec<f64>,
    fre: Vec<f64>,
    fim: Vec<f64>,
    pbar_re: Vec<f64>,
    pbar_im: Vec<f64>,
    hbar: Vec<f64>,
    tmp: Vec<f64>,
}

impl CdScratch {
    pub fn new(dim: usize) -> Self {
        let make = || vec![0.0f64; dim * dim];
        Self {
            h: make(),
            ar: make(),
            ai: make(),
            pre: make(),
            pim: make(),
            fre: make(),
            fim: make(),
            pbar_re: make(),
            pbar_im: make(),
            hbar: make(),
            tmp: make(),
        }
    }
}

/// `out = [a, b]` on plain `f64` matrices.
fn comm_into(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j] - b[i * n + k] * a[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out += s * [a^T, b]`.
fn add_comm_transposed(a: &[f64], b: &[f64], n: usize, s: f64, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[k * n + i] * b[k * n + j] - b[i * n + k] * a[j * n + k];
            }
            out[i * n + j] += s * acc;
        }
    }
}

/// Normalized weights for one interior point: each term weight divided by
/// the interior batch size.
#[derive(Debug, Clone, Copy)]
pub struct InteriorScales {
    pub action: f64,
    pub adiabaticity: f64,
    pub coupling: f64,
}

/// Raw (unweighted) residuals of one interior point.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPointValues {
    pub action: f64,
    pub adiabaticity: f64,
    pub coupling: f64,
    pub hermiticity: f64,
}

impl CdLoss {
    /// Interior-term residuals of the point plus its contribution to the
    /// output cotangents, scaled by `scales`. `out` is the raw network
    /// output slot vector; cotangents accumulate into `out_bar` and
    /// `dlambda_dt_bar`.
    pub fn interior_point_fused(
        &self,
        out: &[f64],
        dlambda_dt: f64,
        scales: InteriorScales,
        scratch: &mut CdScratch,
        out_bar: &mut [f64],
        dlambda_dt_bar: &mut f64,
    ) -> InteriorPointValues {
        let n = self.dim;
        let nn = n * n;
        let lambda = out[0];
        let s = scratch;
        for e in 0..nn {
            s.h[e] = self.h_initial[e] + lambda * self.delta[e];
            s.ar[e] = out[1 + 2 * e];
            s.ai[e] = out[2 + 2 * e];
        }

        // Action term forward: P = i delta - [A, h] split by parts, then
        // F = [P, h].
        comm_into(&s.ar, &s.h, n, &mut s.pre);
        for e in 0..nn {
            s.pre[e] = -s.pre[e];
        }
        comm_into(&s.ai, &s.h, n, &mut s.pim);
        for e in 0..nn {
            s.pim[e] = self.delta[e] - s.pim[e];
        }
        comm_into(&s.pre, &s.h, n, &mut s.fre);
        comm_into(&s.pim, &s.h, n, &mut s.fim);
        let mut action = 0.0;
        for e in 0..nn {
            action += s.fre[e] * s.fre[e] + s.fim[e] * s.fim[e];
        }

        // Reverse through the same chain. Seeds fold in the 2 * scale of the
        // squared norm.
        let seed = 2.0 * scales.action;
        for e in 0..nn {
            s.fre[e] *= seed;
            s.fim[e] *= seed;
        }
        comm_into(&s.fre, &s.h, n, &mut s.pbar_re);
        comm_into(&s.fim, &s.h, n, &mut s.pbar_im);
        s.hbar.fill(0.0);
        add_comm_transposed(&s.pre, &s.fre, n, 1.0, &mut s.hbar);
        add_comm_transposed(&s.pim, &s.fim, n, 1.0, &mut s.hbar);
        // A enters through P with a minus sign on the commutator.
        comm_into(&s.pbar_re, &s.h, n, &mut s.tmp);
        for e in 0..nn {
            out_bar[1 + 2 * e] -= s.tmp[e];
        }
        comm_into(&s.pbar_im, &s.h, n, &mut s.tmp);
        for e in 0..nn {
            out_bar[2 + 2 * e] -= s.tmp[e];
        }
        add_comm_transposed(&s.ar, &s.pbar_re, n, -1.0, &mut s.hbar);
        add_comm_transposed(&s.ai, &s.pbar_im, n, -1.0, &mut s.hbar);
        let mut lambda_bar = 0.0;
        for e in 0..nn {
            lambda_bar += s.hbar[e] * self.delta[e];
        }
        out_bar[0] += lambda_bar;

        // Adiabaticity.
        let adiabaticity = dlambda_dt * dlambda_dt;
        *dlambda_dt_bar += 2.0 * scales.adiabaticity * dlambda_dt;

        // Coupling, straight off the reconstruction plan.
        let mut coupling = 0.0;
        let cseed = 2.0 * scales.coupling;
        for e in 0..nn {
            let mut ere = s.ar[e];
            for term in &self.plan_re[e] {
                ere -= out[slot_c(n, term.string)] * term.sign;
            }
            let mut eim = s.ai[e];
            for term in &self.plan_im[e] {
                eim -= out[slot_c(n, term.string)] * term.sign;
            }
            coupling += ere * ere + eim * eim;
            out_bar[slot_a_re(n, e / n, e % n)] += cseed * ere;
            out_bar[slot_a_im(n, e / n, e % n)] += cseed * eim;
            for term in &self.plan_re[e] {
                out_bar[slot_c(n, term.string)] -= cseed * ere * term.sign;
            }
            for term in &self.plan_im[e] {
                out_bar[slot_c(n, term.string)] -= cseed * eim * term.sign;
            }
        }

        // Hermiticity diagnostic, no gradient.
        let mut hermiticity = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dre = s.ar[i * n + j] - s.ar[j * n + i];
                let dim_ = s.ai[i * n + j] + s.ai[j * n + i];
                hermiticity += dre * dre + dim_ * dim_;
            }
        }

        InteriorPointValues {
            action,
            adiabaticity,
            coupling,
            hermiticity,
        }
    }

    /// Boundary-term residual of one endpoint bundle plus its cotangent
    /// contribution scaled by `scale`. `fc` selects the final-condition
    /// target, otherwise the initial one.
    pub fn endpoint_point_fused(
        &self,
        out: &[f64],
        dlambda_dt: f64,
        fc: bool,
        scale: f64,
        out_bar: &mut [f64],
        dlambda_dt_bar: &mut f64,
    ) -> f64 {
        let n = self.dim;
        let nn = n * n;
        let lambda = out[0];
        let lambda_target = if fc { 1.0 } else { 0.0 };
        let target = if fc { &self.h_final } else { &self.h_initial };
        let dl = lambda - lambda_target;
        let mut penalty = dl * dl;
        let mut lambda_bar = 2.0 * scale * dl;
        let mut rate_bar = 0.0;
        let seed = 2.0 * scale;
        for e in 0..nn {
            let ar = out[1 + 2 * e];
            let ai = out[2 + 2 * e];
            let tre = self.h_initial[e] + lambda * self.delta[e] + dlambda_dt * ar - target[e];
            let tim = dlambda_dt * ai;
            penalty += tre * tre + tim * tim;
            let tre_bar = seed * tre;
            let tim_bar = seed * tim;
            lambda_bar += tre_bar * self.delta[e];
            rate_bar += tre_bar * ar + tim_bar * ai;
            out_bar[1 + 2 * e] += tre_bar * dlambda_dt;
            out_bar[2 + 2 * e] += tim_bar * dlambda_dt;
        }
        out_bar[0] += lambda_bar;
        *dlambda_dt_bar += rate_bar;
        penalty
    }
}

fn generic_bundles(bundles: &[OutputBundle]) -> Vec<NetOutputs<f64>> {
    bundles.iter().map(OutputBundle::to_generic).collect()
}

/// Initial-condition loss: `w * (mean |lambda|^2 + mean ||H - H_initial||^2)`
/// over bundles evaluated at the start of the protocol.
pub fn loss_ic(p: &ProblemSpec, bundles: &[OutputBundle], weight: f64) -> f64 {
    let cd = CdLoss::new(p, LossWeights::default());
    let gb = generic_bundles(bundles);
    weight
        * gb.iter()
            .map(|b| cd.endpoint_penalty(b, 0.0, false))
            .sum::<f64>()
        / gb.len() as f64
}

/// Final-condition loss: the mirror of [`loss_ic`] with `lambda` pinned to
/// one and the final Hamiltonian as target.
pub fn loss_fc(p: &ProblemSpec, bundles: &[OutputBundle], weight: f64) -> f64 {
    let cd = CdLoss::new(p, LossWeights::default());
    let gb = generic_bundles(bundles);
    weight
        * gb.iter()
            .map(|b| cd.endpoint_penalty(b, 1.0, true))
            .sum::<f64>()
        / gb.len() as f64
}

/// Mean squared Euler-Lagrange residual over interior bundles, weighted.
pub fn loss_least_action(p: &ProblemSpec, bundles: &[OutputBundle], weight: f64) -> f64 {
    let cd = CdLoss::new(p, LossWeights::default());
    let gb = generic_bundles(bundles);
    weight * gb.iter().map(|b| cd.action_residual(b)).sum::<f64>() / gb.len() as f64
}

/// Mean squared schedule rate, weighted.
pub fn loss_adiabaticity(bundles: &[OutputBundle], weight: f64) -> f64 {
    weight
        * bundles
            .iter()
            .map(|b| b.dlambda_dt * b.dlambda_dt)
            .sum::<f64>()
        / bundles.len() as f64
}

/// Mean squared distance between the raw matrix and its Pauli expansion
/// with the bundle's real coefficients, weighted.
pub fn loss_coupling(p: &ProblemSpec, bundles: &[OutputBundle], weight: f64) -> f64 {
    let cd = CdLoss::new(p, LossWeights::default());
    let gb = generic_bundles(bundles);
    weight * gb.iter().map(|b| cd.coupling_residual(b)).sum::<f64>() / gb.len() as f64
}

/// All terms over explicit endpoint and interior batches.
pub fn total_loss(
    p: &ProblemSpec,
    ic: &[OutputBundle],
    fc: &[OutputBundle],
    interior: &[OutputBundle],
    weights: LossWeights,
) -> LossBreakdown {
    CdLoss::new(p, weights).breakdown(
        &generic_bundles(ic),
        &generic_bundles(fc),
        &generic_bundles(interior),
    )
}

/// Adapter exposing the full training loss to [`crate::net::loss_gradient`].
/// By convention the first bundle is the start point, the second the end
/// point, and the rest the interior batch.
pub struct BatchedCdLoss<'a> {
    pub cd: &'a CdLoss,
}

impl crate::net::BundleLoss for BatchedCdLoss<'_> {
    fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S {
        self.cd.total(&bundles[0..1], &bundles[1..2], &bundles[2..])
    }
}

/// One term of the training loss, same batch convention as
/// [`BatchedCdLoss`]; used to check each term's gradient separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossTerm {
    Ic,
    Fc,
    Action,
    Adiabaticity,
    Coupling,
}

pub struct SingleTermLoss<'a> {
    pub cd: &'a CdLoss,
    pub term: LossTerm,
}

impl crate::net::BundleLoss for SingleTermLoss<'_> {
    fn eval<S: Scalar>(&self, bundles: &[NetOutputs<S>]) -> S {
        let interior = &bundles[2..];
        let inv = 1.0 / interior.len() as f64;
        let mean = |values: Vec<S>| {
            let mut it = values.into_iter();
            let first = it.next().expect("interior batch is nonempty");
            it.fold(first, |a, b| a + b) * inv
        };
        match self.term {
            LossTerm::Ic => self.cd.endpoint_penalty(&bundles[0], 0.0, false) * self.cd.weights.ic,
            LossTerm::Fc => self.cd.endpoint_penalty(&bundles[1], 1.0, true) * self.cd.weights.fc,
            LossTerm::Action => {
                mean(
                    interior
                        .iter()
                        .map(|b| self.cd.action_residual(b))
                        .collect(),
                ) * self.cd.weights.action
            }
            LossTerm::Adiabaticity => {
                mean(
                    interior
                        .iter()
                        .map(|b| b.dlambda_dt * b.dlambda_dt)
                        .collect(),
                ) * self.cd.weights.adiabaticity
            }
            LossTerm::Coupling => {
                mean(
                    interior
                        .iter()
                        .map(|b| self.cd.coupling_residual(b))
                        .collect(),
                ) * self.cd.weights.coupling
            }
        }
    }
}
