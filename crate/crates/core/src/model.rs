//! Resource-allocation instance, regularized Lagrangian, projections and the
//! smoothness/monotonicity constants of the primal-dual gradient map.
//!
//! Workers `i = 0..n` hold decisions `θ_i ∈ C_i ⊂ R^d`. They are coupled only
//! through `m` constraints on the average decision `θ̄ = (1/n) Σ θ_i`. The
//! local expected loss is the quadratic `f_i(θ) = ‖θ − z̄_i‖²`, i.e. the mean of
//! `ℓ_i(θ; Z) = ‖θ − Z‖²` with the additive variance term dropped (it does not
//! move gradients or saddle points).

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("worker index {index} out of range for {n} workers")]
    WorkerIndex { index: usize, n: usize },
    #[error("invalid box on coordinate {coord}: [{lo}, {hi}]")]
    InvalidBox { coord: usize, lo: f64, hi: f64 },
    #[error("feasible box of worker {worker} is unbounded")]
    UnboundedBox { worker: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Axis-aligned box `Π_r [lower_r, upper_r]`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        check_len("box upper bounds", lower.len(), upper.len())?;
        for (coord, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(ModelError::InvalidBox { coord, lo, hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` on each of `dim` coordinates.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, ModelError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Euclidean diameter; infinite for unbounded boxes.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Euclidean projection onto a box (coordinate-wise clamp).
pub fn project_box(x: &[f64], set: &BoxSet) -> Vec<f64> {
    let mut out = x.to_vec();
    set.project_in_place(&mut out);
    out
}

/// Interval enclosure of each constraint value over a box of averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBounds {
    /// `max_j sup ‖∇g_j‖` over the box.
    pub gradient_norm: f64,
    /// Per constraint `(inf g_j, sup g_j)` over the box.
    pub values: Vec<(f64, f64)>,
}

/// A coupling map `g : R^d → R^m` evaluated at the average decision.
pub trait CouplingConstraint: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn count(&self) -> usize;

    fn eval(&self, avg: &[f64], out: &mut [f64]);

    /// Writes `(J g(avg)) λ ∈ R^d` where `J g = [∇g_1 ⋯ ∇g_m]`.
    fn jacobian_times(&self, avg: &[f64], lambda: &[f64], out: &mut [f64]);

    /// Per-constraint gradient Lipschitz constants `L_j`.
    fn smoothness(&self) -> Vec<f64>;

    fn bounds(&self, lower: &[f64], upper: &[f64]) -> ConstraintBounds;

    /// Row-major `d × m` Jacobian when it does not depend on the point.
    fn constant_jacobian(&self) -> Option<Vec<f64>> {
        None
    }
}

/// `g_j(x) = ⟨w_j, x⟩ − c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    weights: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl AffineConstraint {
    pub fn new(weights: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self, ModelError> {
        check_len("constraint offsets", weights.len(), offsets.len())?;
        if weights.is_empty() {
            return Err(ModelError::InvalidParameter {
                name: "constraint",
                reason: "at least one constraint row is required".into(),
            });
        }
        let d = weights[0].len();
        for row in &weights {
            check_len("constraint row", d, row.len())?;
        }
        Ok(Self { weights, offsets })
    }

    /// Scalar capacity constraint `g(θ̄) = θ̄ − capacity`.
    pub fn capacity(capacity: f64) -> Self {
        Self {
            weights: vec![vec![1.0]],
            offsets: vec![capacity],
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

impl CouplingConstraint for AffineConstraint {
    fn dim(&self) -> usize {
        self.weights[0].len()
    }

    fn count(&self) -> usize {
        self.weights.len()
    }

    fn eval(&self, avg: &[f64], out: &mut [f64]) {
        for ((o, w), c) in out.iter_mut().zip(&self.weights).zip(&self.offsets) {
            *o = w.iter().zip(avg).map(|(a, b)| a * b).sum::<f64>() - c;
        }
    }

    fn jacobian_times(&self, _avg: &[f64], lambda: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (w, l) in self.weights.iter().zip(lambda) {
            for (o, wr) in out.iter_mut().zip(w) {
                *o += wr * l;
            }
        }
    }

    fn smoothness(&self) -> Vec<f64> {
        vec![0.0; self.count()]
    }

    fn bounds(&self, lower: &[f64], upper: &[f64]) -> ConstraintBounds {
        let gradient_norm = self
            .weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let values = self
            .weights
            .iter()
            .zip(&self.offsets)
            .map(|(w, c)| {
                let (mut lo, mut hi) = (-c, -c);
                for ((wr, l), u) in w.iter().zip(lower).zip(upper) {
                    let (a, b) = (wr * l, wr * u);
                    lo += a.min(b);
                    hi += a.max(b);
                }
                (lo, hi)
            })
            .collect();
        ConstraintBounds {
            gradient_norm,
            values,
        }
    }

    fn constant_jacobian(&self) -> Option<Vec<f64>> {
        let (d, m) = (self.dim(), self.count());
        let mut jac = vec![0.0; d * m];
        for (j, w) in self.weights.iter().enumerate() {
            for (r, v) in w.iter().enumerate() {
                jac[r * m + j] = *v;
            }
        }
        Some(jac)
    }
}

/// Factor on the coupling term in the primal gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualScaling {
    /// `∇_{θ_i} = ∇f_i + (1/n) (J g) λ`, the gradient of the regularized Lagrangian.
    #[default]
    Averaged,
    /// `∇_{θ_i} = ∇f_i + (J g) λ`.
    Unscaled,
}

/// A distributed resource-allocation instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    means: Vec<Vec<f64>>,
    noise_sd: f64,
    boxes: Vec<BoxSet>,
    lambda_max: f64,
    upsilon: f64,
    dual_scaling: DualScaling,
    constraint: Arc<dyn CouplingConstraint>,
}

impl ProblemSpec {
    pub fn new(
        means: Vec<Vec<f64>>,
        noise_sd: f64,
        boxes: Vec<BoxSet>,
        constraint: Arc<dyn CouplingConstraint>,
        lambda_max: f64,
        upsilon: f64,
    ) -> Result<Self, ModelError> {
        let n = means.len();
        if n == 0 {
            return Err(ModelError::InvalidParameter {
                name: "means",
                reason: "at least one worker is required".into(),
            });
        }
        let d = constraint.dim();
        if d == 0 || constraint.count() == 0 {
            return Err(ModelError::InvalidParameter {
                name: "constraint",
                reason: "dimension and constraint count must be positive".into(),
            });
        }
        check_len("feasible boxes", n, boxes.len())?;
        for (mean, set) in means.iter().zip(&boxes) {
            check_len("worker mean", d, mean.len())?;
            check_len("worker box", d, set.dim())?;
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "noise_sd",
                reason: format!("must be finite and >= 0, got {noise_sd}"),
            });
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "lambda_max",
                reason: format!("must be finite and > 0, got {lambda_max}"),
            });
        }
        if !(upsilon > 0.0 && upsilon.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "upsilon",
                reason: format!("must be finite and > 0, got {upsilon}"),
            });
        }
        Ok(Self {
            means,
            noise_sd,
            boxes,
            lambda_max,
            upsilon,
            dual_scaling: DualScaling::default(),
            constraint,
        })
    }

    /// Five heterogeneous scalar workers sharing a capacity of 5 on their
    /// average allocation: means `[10, 10, 10, 12, 12]`, noise `σ = 2`, boxes
    /// `[0,7]³ × [0,10]²`, `Λ = [0, lambda_max]`, `υ = 1e-5`.
    pub fn five_worker_allocation(lambda_max: f64) -> Self {
        let means = [10.0, 10.0, 10.0, 12.0, 12.0]
            .iter()
            .map(|m| vec![*m])
            .collect();
        let boxes = [7.0, 7.0, 7.0, 10.0, 10.0]
            .iter()
            .map(|hi| BoxSet::cube(1, 0.0, *hi).expect("static box"))
            .collect();
        Self::new(
            means,
            2.0,
            boxes,
            Arc::new(AffineConstraint::capacity(5.0)),
            lambda_max,
            1e-5,
        )
        .expect("static instance is valid")
    }

    pub fn with_dual_scaling(mut self, scaling: DualScaling) -> Self {
        self.dual_scaling = scaling;
        self
    }

    pub fn with_noise_sd(mut self, noise_sd: f64) -> Result<Self, ModelError> {
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "noise_sd",
                reason: format!("must be finite and >= 0, got {noise_sd}"),
            });
        }
        self.noise_sd = noise_sd;
        Ok(self)
    }

    pub fn with_lambda_max(mut self, lambda_max: f64) -> Result<Self, ModelError> {
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "lambda_max",
                reason: format!("must be finite and > 0, got {lambda_max}"),
            });
        }
        self.lambda_max = lambda_max;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn d(&self) -> usize {
        self.constraint.dim()
    }

    pub fn m(&self) -> usize {
        self.constraint.count()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn dual_scaling(&self) -> DualScaling {
        self.dual_scaling
    }

    pub fn constraint(&self) -> &dyn CouplingConstraint {
        self.constraint.as_ref()
    }

    /// `s` in `∇f_i + s (J g) λ`.
    pub fn coupling_scale(&self) -> f64 {
        match self.dual_scaling {
            DualScaling::Averaged => 1.0 / self.n() as f64,
            DualScaling::Unscaled => 1.0,
        }
    }

    pub fn dual_box(&self) -> BoxSet {
        BoxSet::cube(self.m(), 0.0, self.lambda_max).expect("lambda_max > 0")
    }

    pub fn project_dual_in_place(&self, lambda: &mut [f64]) {
        for l in lambda {
            *l = l.clamp(0.0, self.lambda_max);
        }
    }

    pub fn check_worker(&self, i: usize) -> Result<(), ModelError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(ModelError::WorkerIndex {
                index: i,
                n: self.n(),
            })
        }
    }

    pub fn check_joint(&self, theta: &[Vec<f64>], lambda: &[f64]) -> Result<(), ModelError> {
        check_len("joint decision", self.n(), theta.len())?;
        for t in theta {
            check_len("worker decision", self.d(), t.len())?;
        }
        check_len("dual point", self.m(), lambda.len())
    }

    pub fn average(&self, theta: &[Vec<f64>]) -> Vec<f64> {
        let mut avg = vec![0.0; self.d()];
        for t in theta {
            for (a, v) in avg.iter_mut().zip(t) {
                *a += v;
            }
        }
        let n = theta.len() as f64;
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }

    pub fn constraint_value(&self, avg: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        self.constraint.eval(avg, &mut out);
        out
    }

    /// The dual correction term `s (J g(avg)) λ` a worker adds to its gradient.
    pub fn dual_correction(&self, avg: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        self.constraint.jacobian_times(avg, lambda, &mut out);
        let s = self.coupling_scale();
        out.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `∇f_i(θ_i) = 2(θ_i − z̄_i)`.
    pub fn loss_gradient(&self, i: usize, theta_i: &[f64]) -> Vec<f64> {
        theta_i
            .iter()
            .zip(&self.means[i])
            .map(|(t, z)| 2.0 * (t - z))
            .collect()
    }

    /// Regularized Lagrangian `Σ f_i(θ_i) + λᵀ g(θ̄) − (υ/2)‖λ‖²`.
    pub fn lagrangian(&self, theta: &[Vec<f64>], lambda: &[f64]) -> Result<f64, ModelError> {
        self.check_joint(theta, lambda)?;
        let loss: f64 = (0..self.n())
            .map(|i| eval_expected_loss(self, i, &theta[i]))
            .sum();
        let g = self.constraint_value(&self.average(theta));
        let coupling: f64 = g.iter().zip(lambda).map(|(a, b)| a * b).sum();
        let reg = 0.5 * self.upsilon * lambda.iter().map(|l| l * l).sum::<f64>();
        Ok(loss + coupling - reg)
    }
}

/// `f_i(θ_i) = ‖θ_i − z̄_i‖²`.
pub fn eval_expected_loss(spec: &ProblemSpec, i: usize, theta_i: &[f64]) -> f64 {
    theta_i
        .iter()
        .zip(&spec.means[i])
        .map(|(t, z)| (t - z).powi(2))
        .sum()
}

pub fn grad_primal(
    spec: &ProblemSpec,
    theta: &[Vec<f64>],
    lambda: &[f64],
    i: usize,
) -> Result<Vec<f64>, ModelError> {
    spec.check_worker(i)?;
    spec.check_joint(theta, lambda)?;
    let correction = spec.dual_correction(&spec.average(theta), lambda);
    let mut grad = spec.loss_gradient(i, &theta[i]);
    grad.iter_mut().zip(&correction).for_each(|(g, c)| *g += c);
    Ok(grad)
}

/// `∇_λ L = g(θ̄) − υλ`.
pub fn grad_dual(
    spec: &ProblemSpec,
    theta: &[Vec<f64>],
    lambda: &[f64],
) -> Result<Vec<f64>, ModelError> {
    spec.check_joint(theta, lambda)?;
    let mut g = spec.constraint_value(&spec.average(theta));
    g.iter_mut()
        .zip(lambda)
        .for_each(|(v, l)| *v -= spec.upsilon * l);
    Ok(g)
}

/// Stacked `(∇_θ L, −∇_λ L) ∈ R^{nd+m}`.
pub fn gradient_map(
    spec: &ProblemSpec,
    theta: &[Vec<f64>],
    lambda: &[f64],
) -> Result<Vec<f64>, ModelError> {
    spec.check_joint(theta, lambda)?;
    let correction = spec.dual_correction(&spec.average(theta), lambda);
    let mut out = Vec::with_capacity(spec.n() * spec.d() + spec.m());
    for (i, t) in theta.iter().enumerate() {
        out.extend(
            spec.loss_gradient(i, t)
                .iter()
                .zip(&correction)
                .map(|(g, c)| g + c),
        );
    }
    out.extend(grad_dual(spec, theta, lambda)?.iter().map(|v| -v));
    Ok(out)
}

/// Lipschitz constant of the gradient map:
/// `L = sqrt((L_max + M + D·L_g)² + (M + υ)²)`.
pub fn lipschitz_constant(
    loss_smoothness_max: f64,
    gradient_bound: f64,
    diameter: f64,
    constraint_lipschitz: f64,
    upsilon: f64,
) -> f64 {
    let primal = loss_smoothness_max + gradient_bound + diameter * constraint_lipschitz;
    let dual = gradient_bound + upsilon;
    (primal * primal + dual * dual).sqrt()
}

/// Constants of the bounded-set, smoothness, and variance assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessConstants {
    /// `μ_i` per worker.
    pub strong_convexity: Vec<f64>,
    /// `L_i` per worker.
    pub loss_smoothness: Vec<f64>,
    /// `L_j` per constraint.
    pub constraint_smoothness: Vec<f64>,
    /// `M`.
    pub gradient_bound: f64,
    /// `D`.
    pub diameter: f64,
    /// `L_g = sqrt(Σ_j L_j²)`.
    pub constraint_lipschitz: f64,
    /// `μ = min_i{υ, μ_i}`.
    pub monotonicity: f64,
    /// `L`.
    pub lipschitz: f64,
    /// `σ_i²` per worker.
    pub variance: Vec<f64>,
    /// `σ_max²`.
    pub max_variance: f64,
    /// `υ`.
    pub upsilon: f64,
}

impl SmoothnessConstants {
    pub fn loss_smoothness_max(&self) -> f64 {
        self.loss_smoothness.iter().copied().fold(0.0, f64::max)
    }

    pub fn n(&self) -> usize {
        self.strong_convexity.len()
    }
}

/// Default half-width of the sample support, in standard deviations.
pub const DEFAULT_TRUNCATION: f64 = 6.0;

/// Computes `μ, L, M, D, L_g, σ_i²` for the quadratic-loss instance.
///
/// `M` and `D` come from the box bounds plus the sample support truncated to
/// `z̄_i ± truncation·σ`; Gaussian support is unbounded otherwise.
pub fn compute_constants(
    spec: &ProblemSpec,
    truncation: f64,
) -> Result<SmoothnessConstants, ModelError> {
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "truncation",
            reason: format!("must be finite and > 0, got {truncation}"),
        });
    }
    for (worker, set) in spec.boxes.iter().enumerate() {
        if !set.is_bounded() {
            return Err(ModelError::UnboundedBox { worker });
        }
    }
    let (n, d, m) = (spec.n(), spec.d(), spec.m());
    let strong_convexity = vec![2.0; n];
    let loss_smoothness = vec![2.0; n];
    let constraint_smoothness = spec.constraint.smoothness();
    let constraint_lipschitz = constraint_smoothness
        .iter()
        .map(|l| l * l)
        .sum::<f64>()
        .sqrt();
    let variance = vec![4.0 * spec.noise_sd * spec.noise_sd * d as f64; n];
    let max_variance = variance.iter().copied().fold(0.0, f64::max);

    let primal_diameter = spec
        .boxes
        .iter()
        .map(|b| b.diameter().powi(2))
        .sum::<f64>()
        .sqrt();
    let dual_diameter = (m as f64).sqrt() * spec.lambda_max;
    let diameter = primal_diameter.max(dual_diameter);

    // The average decision ranges over the mean of the boxes.
    let mut avg_lo = vec![0.0; d];
    let mut avg_hi = vec![0.0; d];
    for b in &spec.boxes {
        for r in 0..d {
            avg_lo[r] += b.lower()[r] / n as f64;
            avg_hi[r] += b.upper()[r] / n as f64;
        }
    }
    let cb = spec.constraint.bounds(&avg_lo, &avg_hi);

    let s = spec.coupling_scale();
    let half_width = truncation * spec.noise_sd;
    // Interval of s·(Jλ)_r over λ ∈ [0, λ_max]^m, per coordinate.
    let correction: Vec<(f64, f64)> = match spec.constraint.constant_jacobian() {
        Some(jac) => (0..d)
            .map(|r| {
                let (mut lo, mut hi) = (0.0, 0.0);
                for j in 0..m {
                    let v = s * jac[r * m + j] * spec.lambda_max;
                    lo += v.min(0.0);
                    hi += v.max(0.0);
                }
                (lo, hi)
            })
            .collect(),
        None => {
            let r = s * cb.gradient_norm * spec.lambda_max * m as f64;
            vec![(-r, r); d]
        }
    };
    let mut primal_bound: f64 = 0.0;
    for (i, b) in spec.boxes.iter().enumerate() {
        let sq: f64 = (0..d)
            .map(|r| {
                let z = spec.means[i][r];
                let lo = 2.0 * (b.lower()[r] - (z + half_width)) + correction[r].0;
                let hi = 2.0 * (b.upper()[r] - (z - half_width)) + correction[r].1;
                lo.abs().max(hi.abs()).powi(2)
            })
            .sum();
        primal_bound = primal_bound.max(sq.sqrt());
    }
    let dual_bound = cb
        .values
        .iter()
        .map(|(lo, hi)| {
            let lo = lo - spec.upsilon * spec.lambda_max;
            lo.abs().max(hi.abs()).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let gradient_bound = primal_bound.max(dual_bound).max(cb.gradient_norm);

    let monotonicity = strong_convexity
        .iter()
        .copied()
        .fold(spec.upsilon, f64::min);
    let l_max = loss_smoothness.iter().copied().fold(0.0, f64::max);
    let lipschitz = lipschitz_constant(
        l_max,
        gradient_bound,
        diameter,
        constraint_lipschitz,
        spec.upsilon,
    );
    Ok(SmoothnessConstants {
        strong_convexity,
        loss_smoothness,
        constraint_smoothness,
        gradient_bound,
        diameter,
        constraint_lipschitz,
        monotonicity,
        lipschitz,
        variance,
        max_variance,
        upsilon: spec.upsilon,
    })
}
