//! Saddle-point oracle, error metric, convergence-bound constants and curve,
//! and a numeric check of the weighted step-size series lemma.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::engine::ActivationWindow;
use crate::model::{grad_dual, grad_primal, ModelError, ProblemSpec, SmoothnessConstants};
use crate::solvers::StepSizeRule;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("tolerance must be finite and > 0, got {0}")]
    InvalidTolerance(f64),
    #[error("saddle solve did not converge in {iterations} iterations (KKT residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleMethod {
    ClosedForm,
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub theta: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// `‖θ − P_C[θ − ∇_θL]‖ + ‖λ − P_Λ[λ + ∇_λL]‖`.
    pub residual: f64,
    pub method: SaddleMethod,
}

/// Default KKT tolerance of [`saddle_oracle`].
pub const DEFAULT_SADDLE_TOLERANCE: f64 = 1e-10;

const MAX_DUAL_ITERATIONS: usize = 2_000_000;
const MAX_PRIMAL_ITERATIONS: usize = 100_000;

/// KKT residual of `(θ, λ)` for the coupling field of `spec`.
pub fn kkt_residual(spec: &ProblemSpec, theta: &[Vec<f64>], lambda: &[f64]) -> Result<f64, ModelError> {
    let mut primal = 0.0;
    for i in 0..spec.n() {
        let g = grad_primal(spec, theta, lambda, i)?;
        let step: Vec<f64> = theta[i].iter().zip(&g).map(|(t, gi)| t - gi).collect();
        let proj = crate::model::project_box(&step, &spec.boxes()[i]);
        primal += theta[i]
            .iter()
            .zip(&proj)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    let gd = grad_dual(spec, theta, lambda)?;
    let mut step: Vec<f64> = lambda.iter().zip(&gd).map(|(l, g)| l + g).collect();
    spec.project_dual_in_place(&mut step);
    let dual = lambda
        .iter()
        .zip(&step)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>();
    Ok(primal.sqrt() + dual.sqrt())
}

/// Affine-constraint stationary point with no active bounds:
/// `(υI + (s/2) A Aᵀ) λ = A z̄_mean − c`, `θ_i = z̄_i − (s/2) Aᵀ λ`.
///
/// Returns `None` for non-affine constraints or a singular system. The point
/// is not projected; callers check feasibility.
pub fn closed_form_saddle(spec: &ProblemSpec) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let jac = spec.constraint().constant_jacobian()?;
    let (d, m) = (spec.d(), spec.m());
    let s = spec.coupling_scale();
    let a_t = DMatrix::from_row_slice(d, m, &jac);
    let system = DMatrix::identity(m, m) * spec.upsilon() + (a_t.transpose() * &a_t) * (s / 2.0);
    let mean_of_means = spec.average(spec.means());
    let rhs = DVector::from_vec(spec.constraint_value(&mean_of_means));
    let lambda = system.lu().solve(&rhs)?;
    let shift = (&a_t * &lambda) * (s / 2.0);
    let theta = spec
        .means()
        .iter()
        .map(|z| z.iter().zip(shift.iter()).map(|(zr, sr)| zr - sr).collect())
        .collect();
    Some((theta, lambda.iter().copied().collect()))
}

/// Primal best response to a fixed `λ`: the projected fixed point of
/// `2(θ_i − z̄_i) + s (J g(θ̄)) λ = 0`.
fn best_response(spec: &ProblemSpec, lambda: &[f64], tol: f64) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let s = spec.coupling_scale();
    if let Some(jac) = spec.constraint().constant_jacobian() {
        let (d, m) = (spec.d(), spec.m());
        let shift: Vec<f64> = (0..d)
            .map(|r| (0..m).map(|j| jac[r * m + j] * lambda[j]).sum::<f64>() * s / 2.0)
            .collect();
        return Ok(spec
            .means()
            .iter()
            .zip(spec.boxes())
            .map(|(z, b)| {
                let mut t: Vec<f64> = z.iter().zip(&shift).map(|(a, c)| a - c).collect();
                b.project_in_place(&mut t);
                t
            })
            .collect());
    }
    let mut theta: Vec<Vec<f64>> = spec
        .means()
        .iter()
        .zip(spec.boxes())
        .map(|(z, b)| crate::model::project_box(z, b))
        .collect();
    for _ in 0..MAX_PRIMAL_ITERATIONS {
        let correction = spec.dual_correction(&spec.average(&theta), lambda);
        let mut change: f64 = 0.0;
        for (i, t) in theta.iter_mut().enumerate() {
            let old = t.clone();
            let z = &spec.means()[i];
            for r in 0..t.len() {
                t[r] -= 0.25 * (2.0 * (t[r] - z[r]) + correction[r]);
            }
            spec.boxes()[i].project_in_place(t);
            change = change.max(old.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        if change <= tol * 1e-2 {
            return Ok(theta);
        }
    }
    Err(AnalysisError::NonConvergence {
        iterations: MAX_PRIMAL_ITERATIONS,
        residual: f64::NAN,
    })
}

/// Projected dual ascent on `λ ↦ g(θ̄(λ)) − υλ` with an exact primal best
/// response, run to KKT residual `≤ tolerance`.
pub fn iterative_saddle(spec: &ProblemSpec, tolerance: f64) -> Result<SaddlePoint, AnalysisError> {
    check_tolerance(tolerance)?;
    let bounds = {
        let n = spec.n() as f64;
        let lo: Vec<f64> = (0..spec.d())
            .map(|r| spec.boxes().iter().map(|b| b.lower()[r]).sum::<f64>() / n)
            .collect();
        let hi: Vec<f64> = (0..spec.d())
            .map(|r| spec.boxes().iter().map(|b| b.upper()[r]).sum::<f64>() / n)
            .collect();
        spec.constraint().bounds(&lo, &hi)
    };
    let s = spec.coupling_scale();
    let curvature = spec.upsilon() + 0.5 * s * bounds.gradient_norm.powi(2) * spec.m() as f64;
    let eta = 1.0 / curvature;
    let mut lambda = vec![0.0; spec.m()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_DUAL_ITERATIONS {
        let theta = best_response(spec, &lambda, tolerance)?;
        residual = kkt_residual(spec, &theta, &lambda)?;
        if residual <= tolerance {
            return Ok(SaddlePoint {
                theta,
                lambda,
                residual,
                method: SaddleMethod::Iterative,
            });
        }
        let g = grad_dual(spec, &theta, &lambda)?;
        lambda.iter_mut().zip(&g).for_each(|(l, gi)| *l += eta * gi);
        spec.project_dual_in_place(&mut lambda);
    }
    Err(AnalysisError::NonConvergence {
        iterations: MAX_DUAL_ITERATIONS,
        residual,
    })
}

fn check_tolerance(tolerance: f64) -> Result<(), AnalysisError> {
    if tolerance > 0.0 && tolerance.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::InvalidTolerance(tolerance))
    }
}

/// Saddle point of the instance: the closed form when it is feasible and
/// meets the tolerance, the iterative solve otherwise.
pub fn saddle_oracle(spec: &ProblemSpec, tolerance: f64) -> Result<SaddlePoint, AnalysisError> {
    check_tolerance(tolerance)?;
    if let Some((theta, lambda)) = closed_form_saddle(spec) {
        let feasible = theta.iter().zip(spec.boxes()).all(|(t, b)| b.contains(t))
            && lambda.iter().all(|l| (0.0..=spec.lambda_max()).contains(l));
        if feasible {
            let residual = kkt_residual(spec, &theta, &lambda)?;
            if residual <= tolerance {
                return Ok(SaddlePoint {
                    theta,
                    lambda,
                    residual,
                    method: SaddleMethod::ClosedForm,
                });
            }
        }
    }
    iterative_saddle(spec, tolerance)
}

/// `Δ = Σ_i ‖θ_i − θ_i*‖² + ‖λ − λ*‖²`.
pub fn error_metric(theta: &[Vec<f64>], lambda: &[f64], saddle: &SaddlePoint) -> f64 {
    let primal: f64 = theta
        .iter()
        .zip(&saddle.theta)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)))
        .sum();
    let dual: f64 = lambda
        .iter()
        .zip(&saddle.lambda)
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    primal + dual
}

/// Inputs of the bound constants, in the bound's own symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParts {
    pub n: usize,
    pub max_variance: f64,
    pub loss_smoothness_max: f64,
    pub diameter: f64,
    pub gradient_bound: f64,
    pub lipschitz: f64,
    pub upsilon: f64,
    pub monotonicity: f64,
    pub p: u64,
    pub window: u64,
    pub max_staleness: u64,
    /// `b` with `γ_j − γ_t ≤ b² γ_j²` for `t` in the window starting at `j`.
    pub ratio_const: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// `𝒞 = B(nC₁ + C₂) + (C₃ + C₄)`.
    pub total: f64,
    pub p: u64,
    pub window: u64,
    pub monotonicity: f64,
    pub ratio_const: f64,
    /// `B / (a₀(a₁ + 1))` for inverse-iteration rules.
    pub ratio_guidance: Option<f64>,
}

impl BoundConstants {
    pub fn from_parts(parts: &BoundParts) -> Self {
        let n = parts.n as f64;
        let (s2, lmax, d, m) = (
            parts.max_variance,
            parts.loss_smoothness_max,
            parts.diameter,
            parts.gradient_bound,
        );
        let (p, bw, tau) = (parts.p as f64, parts.window as f64, parts.max_staleness as f64);
        let b = parts.ratio_const;
        let c1 = 3.0 * (s2 + (s2 + lmax * lmax) * d * d + 6.0 * m * m * d * d / (n * n));
        let c2 = 2.0 * d * d * (m * m + 2.0 * parts.upsilon * parts.upsilon);
        let c3 = 2.0 * p * (n + 1.0) * m * (b * b * d + bw * d * parts.lipschitz + bw * m);
        let c4 = 2.0 * p * tau * d * m * (m + 1.0);
        Self {
            c1,
            c2,
            c3,
            c4,
            total: combine(parts.n, parts.window, c1, c2, c3, c4),
            p: parts.p,
            window: parts.window,
            monotonicity: parts.monotonicity,
            ratio_const: b,
            ratio_guidance: None,
        }
    }
}

/// `𝒞 = B(nC₁ + C₂) + (C₃ + C₄)`.
pub fn combine(n: usize, window: u64, c1: f64, c2: f64, c3: f64, c4: f64) -> f64 {
    window as f64 * (n as f64 * c1 + c2) + (c3 + c4)
}

/// Smallest `b` with `γ_j − γ_{j+B−1} ≤ b² γ_j²` for `j ≤ horizon`.
pub fn ratio_constant(rule: &StepSizeRule, window: u64, horizon: u64) -> f64 {
    let span = window.saturating_sub(1) as i64;
    (1..=horizon.max(1) as i64)
        .map(|j| {
            let g = rule.gamma(j);
            ((g - rule.gamma(j + span)) / (g * g)).max(0.0)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

pub fn compute_bound_constants(
    constants: &SmoothnessConstants,
    window: ActivationWindow,
    max_staleness: u64,
    rule: &StepSizeRule,
    horizon: u64,
) -> BoundConstants {
    let ratio_const = ratio_constant(rule, window.b, horizon);
    let mut out = BoundConstants::from_parts(&BoundParts {
        n: constants.n(),
        max_variance: constants.max_variance,
        loss_smoothness_max: constants.loss_smoothness_max(),
        diameter: constants.diameter,
        gradient_bound: constants.gradient_bound,
        lipschitz: constants.lipschitz,
        upsilon: constants.upsilon,
        monotonicity: constants.monotonicity,
        p: window.p,
        window: window.b,
        max_staleness,
        ratio_const,
    });
    if let StepSizeRule::Inverse { a0, a1 } = *rule {
        out.ratio_guidance = Some(window.b as f64 / (a0 * (a1 + 1.0)));
    }
    out
}

/// Right-hand side bounding `E[Δ^{k+1}]`:
/// `Π_{i=1}^{q} (1 − pμγ_{k−iB+2}) Δ⁰ + (2𝒞/(pμ)) γ_{k−B+2}`, `q = ⌊(k+1)/B⌋`,
/// with `γ_j = γ_1` for `j ≤ 0`.
pub fn theorem_bound(k: u64, delta0: f64, consts: &BoundConstants, rule: &StepSizeRule) -> f64 {
    let (b, pmu) = (consts.window as i64, consts.p as f64 * consts.monotonicity);
    let k = k as i64;
    let q = (k + 1) / b;
    let product: f64 = (1..=q)
        .map(|i| 1.0 - pmu * rule.gamma(k - i * b + 2))
        .product();
    product * delta0 + 2.0 * consts.total / pmu * rule.gamma(k - b + 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    /// `(k, bound on Δ^k)`.
    pub points: Vec<(u64, f64)>,
    /// Step-size conditions held; the curve is computed either way.
    pub applicable: bool,
}

/// Bound on `Δ^k` at each `k ≥ 1` of `ks`; `k = 0` maps to `Δ⁰`.
pub fn bound_curve(
    ks: &[u64],
    delta0: f64,
    consts: &BoundConstants,
    rule: &StepSizeRule,
    applicable: bool,
) -> BoundCurve {
    let points = ks
        .iter()
        .map(|&k| {
            let v = if k == 0 {
                delta0
            } else {
                theorem_bound(k - 1, delta0, consts, rule)
            };
            (k, v)
        })
        .collect();
    BoundCurve { points, applicable }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxLemmaReport {
    /// `max_k LHS_k / RHS_k`.
    pub max_ratio: f64,
    pub argmax: u64,
    /// First `k` with ratio above one.
    pub first_exceeding: Option<u64>,
    /// `γ_1 < 2/a`.
    pub first_step_ok: bool,
    /// First `k ≥ 2` with `γ_{k−1}^p / γ_k^p > 1 + (a/2) γ_k^p`.
    pub ratio_precondition_violation: Option<u64>,
    /// `(k, LHS_k, RHS_k)`.
    pub values: Vec<(u64, f64, f64)>,
}

impl AuxLemmaReport {
    pub fn preconditions_hold(&self) -> bool {
        self.first_step_ok && self.ratio_precondition_violation.is_none()
    }

    pub fn holds(&self) -> bool {
        self.first_exceeding.is_none()
    }
}

/// Evaluates `Σ_{j=1}^k γ_j^{p+1} Π_{ℓ=j+1}^k (1 − γ_ℓ a)` against
/// `(2/a) γ_k^p` for `k = 1..=horizon`.
pub fn aux_lemma_check(a: f64, p_exp: u32, rule: &StepSizeRule, horizon: u64) -> AuxLemmaReport {
    let p = p_exp as i32;
    let first_step_ok = rule.gamma(1) < 2.0 / a;
    let ratio_precondition_violation = (2..=horizon as i64)
        .find(|&k| {
            let gk = rule.gamma(k).powi(p);
            rule.gamma(k - 1).powi(p) / gk > 1.0 + 0.5 * a * gk
        })
        .map(|k| k as u64);
    let mut lhs = 0.0;
    let mut values = Vec::with_capacity(horizon as usize);
    let (mut max_ratio, mut argmax, mut first_exceeding) = (f64::NEG_INFINITY, 0, None);
    for k in 1..=horizon {
        let g = rule.gamma(k as i64);
        lhs = (1.0 - g * a) * lhs + g.powi(p + 1);
        let rhs = 2.0 / a * g.powi(p);
        let ratio = lhs / rhs;
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = k;
        }
        if ratio > 1.0 && first_exceeding.is_none() {
            first_exceeding = Some(k);
        }
        values.push((k, lhs, rhs));
    }
    AuxLemmaReport {
        max_ratio,
        argmax,
        first_exceeding,
        first_step_ok,
        ratio_precondition_violation,
        values,
    }
}
