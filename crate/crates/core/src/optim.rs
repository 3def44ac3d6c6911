//! Tracking-type optimal control: objective, adjoint solve in the weighted
//! space, reduced gradient, box projection, projected-gradient descent with
//! Armijo backtracking, and stationarity certification (fixed-point
//! residual, sampled first-order gap, truncation chain, exponent tables).

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{l2_inner, l2_norm, ExponentInterval, Field, Grid, Operator};
use crate::kernel::Exponent;
use crate::scalar::Scalar;
use crate::sensitivity::{apply_s_prime, solver_floor, SensitivitySystem};
use crate::state::{
    default_dead_zone_eps, pde_residual, solve_state, SolveMethod, StateProblem,
};

const ARMIJO_FACTOR: f64 = 0.5;
const ARMIJO_DECREASE: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Tracking problem data: desired state, Tikhonov weight, box bounds
/// (`None` = unbounded side), and the dead-zone threshold used when
/// linearizing (`None` = relative default).
#[derive(Debug, Clone)]
pub struct ControlProblem<S: Scalar> {
    grid: Grid,
    alpha: Exponent<S>,
    desired_state: Field<S>,
    tikhonov: S,
    lower: Option<Field<S>>,
    upper: Option<Field<S>>,
    eps_dead: Option<S>,
}

impl<S: Scalar> ControlProblem<S> {
    pub fn new(
        grid: Grid,
        alpha: Exponent<S>,
        desired_state: Field<S>,
        tikhonov: S,
        lower: Option<Field<S>>,
        upper: Option<Field<S>>,
    ) -> Result<Self> {
        if desired_state.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if tikhonov <= S::zero() || tikhonov.is_nan() {
            return Err(Error::InvalidArgument(
                "Tikhonov parameter must be positive".into(),
            ));
        }
        for bound in [&lower, &upper].into_iter().flatten() {
            if bound.grid() != grid {
                return Err(Error::GridMismatch);
            }
        }
        if let (Some(lo), Some(hi)) = (&lower, &upper) {
            if lo.values().iter().zip(hi.values()).any(|(&a, &b)| a > b) {
                return Err(Error::InvalidArgument(
                    "box bounds must satisfy lower <= upper nodewise".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            alpha,
            desired_state,
            tikhonov,
            lower,
            upper,
            eps_dead: None,
        })
    }

    /// Fix an absolute dead-zone threshold for the linearizations.
    pub fn with_eps_dead(mut self, eps: S) -> Self {
        self.eps_dead = Some(eps);
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn alpha(&self) -> Exponent<S> {
        self.alpha
    }

    pub fn desired_state(&self) -> &Field<S> {
        &self.desired_state
    }

    pub fn tikhonov(&self) -> S {
        self.tikhonov
    }

    pub fn lower(&self) -> Option<&Field<S>> {
        self.lower.as_ref()
    }

    pub fn upper(&self) -> Option<&Field<S>> {
        self.upper.as_ref()
    }

    fn eps_dead_for(&self, y: &Field<S>) -> S {
        self.eps_dead.unwrap_or_else(|| default_dead_zone_eps(y))
    }
}

/// Objective value with its nodal partial representatives:
/// J = 1/2 ||y - y_D||_L2^2 + nu/2 ||u||_L2^2, dJ/dy = y - y_D, dJ/du = nu u.
pub fn objective<S: Scalar>(
    y: &Field<S>,
    u: &Field<S>,
    cp: &ControlProblem<S>,
) -> Result<(S, Field<S>, Field<S>)> {
    if y.grid() != cp.grid || u.grid() != cp.grid {
        return Err(Error::GridMismatch);
    }
    let half = S::lit(0.5);
    let diff = y.sub(&cp.desired_state)?;
    let value = half * l2_inner(&diff, &diff)? + half * cp.tikhonov * l2_inner(u, u)?;
    Ok((value, diff, u.scaled(cp.tikhonov)))
}

/// Adjoint solve in the weighted space at the frozen state: the operator is
/// the same symmetric one the derivative uses, with right-hand side dJ/dy;
/// the adjoint vanishes on the dead zone.
pub fn solve_adjoint<S: Scalar>(
    sys: &SensitivitySystem<S>,
    dj_dy: &Field<S>,
) -> Result<Field<S>> {
    sys.solve_weighted(dj_dy)
}

/// State, adjoint, and reduced gradient g = p + nu u at a control.
#[derive(Debug, Clone)]
pub struct ReducedGradient<S: Scalar> {
    pub gradient: Field<S>,
    pub adjoint: Field<S>,
    pub state: Field<S>,
}

pub fn reduced_gradient<S: Scalar>(
    u: &Field<S>,
    cp: &ControlProblem<S>,
) -> Result<ReducedGradient<S>> {
    if u.grid() != cp.grid {
        return Err(Error::GridMismatch);
    }
    let problem = StateProblem::new(cp.grid, cp.alpha, u.clone())?;
    let tol = solver_floor(cp.grid, u);
    let (y, _) = solve_state(&problem, SolveMethod::AccelProx, tol)?;
    let sys = SensitivitySystem::build(&y, cp.alpha, cp.eps_dead_for(&y));
    let dj_dy = y.sub(&cp.desired_state)?;
    let p = solve_adjoint(&sys, &dj_dy)?;
    let gradient = p.add(&u.scaled(cp.tikhonov))?;
    Ok(ReducedGradient {
        gradient,
        adjoint: p,
        state: y,
    })
}

/// Nodewise clamp of u into the box; sides without a bound pass through.
pub fn project_box<S: Scalar>(u: &Field<S>, cp: &ControlProblem<S>) -> Field<S> {
    let mut values = u.values().to_vec();
    if let Some(lo) = &cp.lower {
        for (v, &l) in values.iter_mut().zip(lo.values()) {
            *v = v.max(l);
        }
    }
    if let Some(hi) = &cp.upper {
        for (v, &h) in values.iter_mut().zip(hi.values()) {
            *v = v.min(h);
        }
    }
    Field::from_values(u.grid(), values).expect("projection preserves the grid")
}

/// One accepted iteration of the projected-gradient method.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeStep<S: Scalar> {
    pub iteration: usize,
    pub objective: S,
    pub kkt_residual: S,
    pub step: S,
}

/// Per-iteration record of a projected-gradient run.
#[derive(Debug, Clone)]
pub struct OptimizeHistory<S: Scalar> {
    pub steps: Vec<OptimizeStep<S>>,
    pub converged: bool,
}

impl<S: Scalar> OptimizeHistory<S> {
    /// Delimited text dump: header `iter,objective,kkt_residual,step`.
    pub fn write_delimited<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "iter,objective,kkt_residual,step")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{}",
                s.iteration, s.objective, s.kkt_residual, s.step
            )?;
        }
        Ok(())
    }
}

/// Projected gradient with Armijo backtracking on the reduced objective.
///
/// Each outer iteration re-solves the state, rebuilds the linearization at
/// the new state, and re-solves the adjoint; the weight and dead zone move
/// with the iterate, so nothing is reused across iterations. Runs until the
/// step-1 fixed-point residual ||u - P(u - g)||_L2 drops to `tol`; on
/// max_iter exhaustion the best iterate is returned with
/// `converged = false`.
pub fn projected_gradient_solve<S: Scalar>(
    cp: &ControlProblem<S>,
    u0: &Field<S>,
    tol: S,
    max_iter: usize,
) -> Result<(Field<S>, OptimizeHistory<S>)> {
    assert!(tol > S::zero(), "optimizer tolerance must be positive");
    let mut u = project_box(u0, cp);
    let mut rg = reduced_gradient(&u, cp)?;
    let (mut f, _, _) = objective(&rg.state, &u, cp)?;
    let mut history = OptimizeHistory {
        steps: Vec::new(),
        converged: false,
    };
    let mut last_step = S::zero();
    let armijo = S::lit(ARMIJO_DECREASE);
    let shrink = S::lit(ARMIJO_FACTOR);
    for iteration in 0..=max_iter {
        let kkt = {
            let candidate = project_box(&u.sub(&rg.gradient)?, cp);
            l2_norm(&u.sub(&candidate)?)
        };
        history.steps.push(OptimizeStep {
            iteration,
            objective: f,
            kkt_residual: kkt,
            step: last_step,
        });
        if kkt <= tol {
            history.converged = true;
            return Ok((u, history));
        }
        if iteration == max_iter {
            break;
        }
        let mut step = S::one() / cp.tikhonov;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = project_box(&u.sub(&rg.gradient.scaled(step))?, cp);
            let direction = trial.sub(&u)?;
            if direction.linf_norm() == S::zero() {
                break;
            }
            let trial_problem = StateProblem::new(cp.grid, cp.alpha, trial.clone())?;
            let trial_tol = solver_floor(cp.grid, &trial);
            let (y_trial, _) = solve_state(&trial_problem, SolveMethod::AccelProx, trial_tol)?;
            let (f_trial, dj_dy, _) = objective(&y_trial, &trial, cp)?;
            let slope = l2_inner(&rg.gradient, &direction)?;
            let noise = S::lit(1e-13) * (S::one() + f.abs());
            if f_trial <= f + armijo * slope + noise {
                let sys = SensitivitySystem::build(&y_trial, cp.alpha, cp.eps_dead_for(&y_trial));
                let p = solve_adjoint(&sys, &dj_dy)?;
                rg = ReducedGradient {
                    gradient: p.add(&trial.scaled(cp.tikhonov))?,
                    adjoint: p,
                    state: y_trial,
                };
                u = trial;
                f = f_trial;
                last_step = step;
                accepted = true;
                break;
            }
            step = step * shrink;
        }
        if !accepted {
            // no productive step exists at the backtracking resolution
            break;
        }
    }
    Ok((u, history))
}

/// Components of the first-order stationarity residual at a control.
#[derive(Debug, Clone, Copy)]
pub struct KktReport<S: Scalar> {
    /// ||u - P(u - (p + nu u))||_L2, the step-1 fixed-point residual.
    pub residual: S,
    /// Dual-norm residual of the state equation at the certified state.
    pub state_residual: S,
    /// 2-norm residual of the restricted adjoint system.
    pub adjoint_residual: S,
    /// ||u - P(-p/nu)||_L2, the projection-formula residual.
    pub projection_residual: S,
}

pub fn kkt_residual<S: Scalar>(u: &Field<S>, cp: &ControlProblem<S>) -> Result<KktReport<S>> {
    let rg = reduced_gradient(u, cp)?;
    let candidate = project_box(&u.sub(&rg.gradient)?, cp);
    let residual = l2_norm(&u.sub(&candidate)?);
    let state_residual = pde_residual(&rg.state, u, cp.alpha)?;
    let sys = SensitivitySystem::build(&rg.state, cp.alpha, cp.eps_dead_for(&rg.state));
    let dj_dy = rg.state.sub(&cp.desired_state)?;
    let adjoint_residual = sys.weighted_residual(&rg.adjoint, &dj_dy)?;
    let formula = project_box(&rg.adjoint.scaled(-S::one() / cp.tikhonov), cp);
    let projection_residual = l2_norm(&u.sub(&formula)?);
    Ok(KktReport {
        residual,
        state_residual,
        adjoint_residual,
        projection_residual,
    })
}

/// Smallest sampled first-order gap
/// (dJ/dy, S'(u)(v - u))_L2 + (dJ/du, v - u)_L2 over admissible v: seeded
/// uniform draws in the box plus the single-node extreme perturbations.
/// Nonnegative (up to solver noise) at a stationary point; a negative value
/// certifies non-stationarity for that sample set.
///
/// On sides with no bound the draws cover u_i +- (1 + ||u||_inf).
pub fn bouligand_gap<S: Scalar>(
    u: &Field<S>,
    cp: &ControlProblem<S>,
    sample_count: usize,
    seed: u64,
) -> Result<S> {
    assert!(sample_count >= 1, "at least one sample is required");
    if u.grid() != cp.grid {
        return Err(Error::GridMismatch);
    }
    let problem = StateProblem::new(cp.grid, cp.alpha, u.clone())?;
    let (y, _) = solve_state(&problem, SolveMethod::AccelProx, solver_floor(cp.grid, u))?;
    let sys = SensitivitySystem::build(&y, cp.alpha, cp.eps_dead_for(&y));
    let dj_dy = y.sub(&cp.desired_state)?;
    let dj_du = u.scaled(cp.tikhonov);

    let gap_of = |v: &Field<S>| -> Result<S> {
        let d = v.sub(u)?;
        let delta = apply_s_prime(&sys, &d)?;
        Ok(l2_inner(&dj_dy, &delta)? + l2_inner(&dj_du, &d)?)
    };

    let m = u.len();
    let spread = S::one() + u.linf_norm();
    let lo_at = |i: usize| {
        cp.lower
            .as_ref()
            .map(|f| f.values()[i])
            .unwrap_or_else(|| u.values()[i] - spread)
    };
    let hi_at = |i: usize| {
        cp.upper
            .as_ref()
            .map(|f| f.values()[i])
            .unwrap_or_else(|| u.values()[i] + spread)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = S::infinity();
    for _ in 0..sample_count {
        let vals: Vec<S> = (0..m)
            .map(|i| {
                let (lo, hi) = (lo_at(i), hi_at(i));
                if lo == hi {
                    lo
                } else {
                    lo + (hi - lo) * S::lit(rng.random_range(0.0..1.0))
                }
            })
            .collect();
        let v = Field::from_values(cp.grid, vals)?;
        best = best.min(gap_of(&v)?);
    }
    // single-node extreme perturbations
    for i in 0..m {
        for bound in [lo_at(i), hi_at(i)] {
            if bound == u.values()[i] {
                continue;
            }
            let mut vals = u.values().to_vec();
            vals[i] = bound;
            let v = Field::from_values(cp.grid, vals)?;
            best = best.min(gap_of(&v)?);
        }
    }
    Ok(best)
}

/// One level of the truncation chain: quantities at p_k = p - clamp(p, -k, k).
#[derive(Debug, Clone, Copy)]
pub struct TruncationRow<S: Scalar> {
    pub level: S,
    /// ||p_k||_H01^2
    pub h01_sq: S,
    /// (p_k, p_k) in the weighted inner product
    pub weighted_sq: S,
    /// (dJ/dy, p_k)_L2
    pub pairing: S,
}

/// Evaluate the truncation chain ||p_k||_H01^2 <= (p_k, p_k)_V <= (dJ/dy, p_k)_L2
/// for every cutoff k in `levels`; p must solve the adjoint system on `sys`
/// with right-hand side `dj_dy`.
pub fn stampacchia_truncation_check<S: Scalar>(
    p: &Field<S>,
    dj_dy: &Field<S>,
    sys: &SensitivitySystem<S>,
    levels: &[S],
) -> Result<Vec<TruncationRow<S>>> {
    if p.grid() != sys.grid() || dj_dy.grid() != sys.grid() {
        return Err(Error::GridMismatch);
    }
    let stiffness = Operator::<S>::stiffness(sys.grid());
    let mass_diag = Operator::<S>::lumped_mass(sys.grid()).diagonal();
    let mut rows = Vec::with_capacity(levels.len());
    for &k in levels {
        if k < S::zero() {
            return Err(Error::InvalidArgument(
                "truncation levels must be nonnegative".into(),
            ));
        }
        let pk: Vec<S> = p
            .values()
            .iter()
            .map(|&v| v - v.max(-k).min(k))
            .collect();
        let h01_sq = stiffness.quadratic_form(&pk, &pk);
        let mut weighted_sq = h01_sq;
        for (kept_idx, &i) in sys.kept().iter().enumerate() {
            weighted_sq = weighted_sq + mass_diag[i] * sys.weights()[kept_idx] * pk[i] * pk[i];
        }
        let mut pairing = S::zero();
        for i in 0..pk.len() {
            pairing = pairing + mass_diag[i] * dj_dy.values()[i] * pk[i];
        }
        rows.push(TruncationRow {
            level: k,
            h01_sq,
            weighted_sq,
            pairing,
        });
    }
    Ok(rows)
}

/// Lebesgue exponent range R_s for the adjoint state when dJ/dy lies in L^s,
/// in dimension d; requires s > max(1, 2d/(d+2)).
pub fn admissible_adjoint_exponents(s: f64, d: usize) -> Result<ExponentInterval> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let df = d as f64;
    let s_min = 1.0f64.max(2.0 * df / (df + 2.0));
    if s <= s_min || s.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "integrability exponent must exceed max(1, 2d/(d+2)) = {s_min}, got {s}"
        )));
    }
    let half_d = df / 2.0;
    Ok(if s > half_d {
        ExponentInterval::closed(1.0, f64::INFINITY)
    } else if s == half_d {
        ExponentInterval::closed_open(1.0, f64::INFINITY)
    } else {
        // (1/s - 2/d)^{-1}, written division-free as s d/(d - 2s)
        ExponentInterval::closed_open(1.0, s * df / (df - 2.0 * s))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    
    use crate::state::{manufactured_instance, ManufacturedKind};

    fn alpha(a: f64) -> Exponent<f64> {
        Exponent::new(a).unwrap()
    }

    fn rng_stream(mut state: u64) -> impl FnMut() -> f64 {
        move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    fn tracking_problem(n: usize, nu: f64) -> ControlProblem<f64> {
        let g = Grid::new(1, n).unwrap();
        let y_d = Field::from_fn(g, |x: f64, _| (std::f64::consts::PI * x).sin());
        ControlProblem::new(
            g,
            alpha(0.5),
            y_d,
            nu,
            Some(Field::zeros(g)),
            Some(Field::constant(g, 2.0)),
        )
        .unwrap()
    }

    #[test]
    fn control_problem_validates_inputs() {
        let g = Grid::new(1, 8).unwrap();
        let y_d = Field::zeros(g);
        assert!(ControlProblem::new(g, alpha(0.5), y_d.clone(), 0.0, None, None).is_err());
        let lo = Field::constant(g, 1.0);
        let hi = Field::constant(g, -1.0);
        assert!(ControlProblem::new(g, alpha(0.5), y_d, 1.0, Some(lo), Some(hi)).is_err());
    }

    #[test]
    fn objective_values_and_partials() {
        let g = Grid::new(1, 16).unwrap();
        let cp = ControlProblem::new(
            g,
            alpha(0.5),
            Field::from_fn(g, |x: f64, _| x),
            0.5,
            None,
            None,
        )
        .unwrap();
        let y = cp.desired_state().clone();
        let (v0, dy, du) = objective(&y, &Field::zeros(g), &cp).unwrap();
        assert_eq!(v0, 0.0);
        assert_eq!(l2_norm(&dy), 0.0);
        assert_eq!(l2_norm(&du), 0.0);

        // doubling u quadruples the Tikhonov term
        let u1 = Field::constant(g, 1.0);
        let u2 = Field::constant(g, 2.0);
        let (j1, _, _) = objective(&Field::zeros(g), &u1, &cp).unwrap();
        let (j2, _, _) = objective(&Field::zeros(g), &u2, &cp).unwrap();
        let (j0, _, _) = objective(&Field::zeros(g), &Field::zeros(g), &cp).unwrap();
        assert!((j2 - j0 - 4.0 * (j1 - j0)).abs() < 1e-14);

        // directional derivative vs central differences in (y, u)
        let mut next = rng_stream(0x0BEC);
        let y0 = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
        let u0 = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
        let hy = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
        let hu = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
        let (_, dj_dy, dj_du) = objective(&y0, &u0, &cp).unwrap();
        let analytic = l2_inner(&dj_dy, &hy).unwrap() + l2_inner(&dj_du, &hu).unwrap();
        let eps = 1e-6;
        let plus = objective(&y0.add(&hy.scaled(eps)).unwrap(), &u0.add(&hu.scaled(eps)).unwrap(), &cp)
            .unwrap()
            .0;
        let minus = objective(&y0.sub(&hy.scaled(eps)).unwrap(), &u0.sub(&hu.scaled(eps)).unwrap(), &cp)
            .unwrap()
            .0;
        let fd = (plus - minus) / (2.0 * eps);
        assert!(
            (fd - analytic).abs() <= 1e-7 * (1.0 + analytic.abs()),
            "fd {fd}, analytic {analytic}"
        );
    }

    #[test]
    fn adjoint_zero_rhs_and_dead_zone_dirichlet() {
        let g = Grid::new(1, 32).unwrap();
        let inst = manufactured_instance(ManufacturedKind::Plateau, g, alpha(0.5)).unwrap();
        let sys = SensitivitySystem::build(
            &inst.exact_state,
            alpha(0.5),
            default_dead_zone_eps(&inst.exact_state),
        );
        assert_eq!(
            solve_adjoint(&sys, &Field::zeros(g)).unwrap().linf_norm(),
            0.0
        );
        let p = solve_adjoint(&sys, &Field::constant(g, 1.0)).unwrap();
        for i in 0..g.interior_count() {
            let (x, _) = g.coords::<f64>(i);
            if x <= 0.5 {
                assert_eq!(p.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn adjoint_consistency_with_derivative() {
        // (dJ/dy, S'(u) h)_L2 = (p, h)_L2: the identity behind the reduced gradient
        let g = Grid::new(1, 48).unwrap();
        let u = Field::constant(g, 8.0);
        let p_state = StateProblem::new(g, alpha(0.5), u).unwrap();
        let (y, _) = solve_state(&p_state, SolveMethod::AccelProx, 1e-11).unwrap();
        let sys = SensitivitySystem::build(&y, alpha(0.5), default_dead_zone_eps(&y));
        let mut next = rng_stream(0xAD10);
        let dj_dy = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
        let p = solve_adjoint(&sys, &dj_dy).unwrap();
        for _ in 0..5 {
            let h = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
            let lhs = l2_inner(&dj_dy, &apply_s_prime(&sys, &h).unwrap()).unwrap();
            let rhs = l2_inner(&p, &h).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn reduced_gradient_trivial_and_scaling() {
        let g = Grid::new(1, 16).unwrap();
        let cp = ControlProblem::new(g, alpha(0.5), Field::zeros(g), 1e-2, None, None).unwrap();
        let rg = reduced_gradient(&Field::zeros(g), &cp).unwrap();
        assert_eq!(l2_norm(&rg.gradient), 0.0);

        // doubling nu changes g by exactly +nu u
        let u = Field::constant(g, 1.5);
        let cp2 = ControlProblem::new(g, alpha(0.5), Field::zeros(g), 2e-2, None, None).unwrap();
        let g1 = reduced_gradient(&u, &cp).unwrap().gradient;
        let g2 = reduced_gradient(&u, &cp2).unwrap().gradient;
        let diff = g2.sub(&g1).unwrap();
        let expect = u.scaled(1e-2);
        assert!(diff.sub(&expect).unwrap().linf_norm() <= 1e-12);
    }

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let g = Grid::new(1, 32).unwrap();
        let cp = ControlProblem::new(
            g,
            alpha(0.5),
            Field::from_fn(g, |x: f64, _| (std::f64::consts::PI * x).sin()),
            1e-2,
            None,
            None,
        )
        .unwrap();
        let u = Field::constant(g, 10.0);
        let rg = reduced_gradient(&u, &cp).unwrap();
        let reduced = |w: &Field<f64>| -> f64 {
            let sp = StateProblem::new(g, cp.alpha(), w.clone()).unwrap();
            let (y, _) = solve_state(&sp, SolveMethod::AccelProx, 1e-12 * 10.0).unwrap();
            objective(&y, w, &cp).unwrap().0
        };
        let mut next = rng_stream(0xFD);
        for _ in 0..3 {
            let e = Field::from_values(g, (0..g.interior_count()).map(|_| next()).collect()).unwrap();
            let analytic = l2_inner(&rg.gradient, &e).unwrap();
            let eps = 1e-5;
            let fd = (reduced(&u.add(&e.scaled(eps)).unwrap()) - reduced(&u.sub(&e.scaled(eps)).unwrap()))
                / (2.0 * eps);
            assert!(
                (fd - analytic).abs() <= 1e-4 * (1.0 + analytic.abs()),
                "fd {fd}, analytic {analytic}"
            );
        }
    }

    #[test]
    fn projection_properties() {
        let g = Grid::new(1, 12).unwrap();
        let cp = tracking_problem(12, 1e-2);
        let inside = Field::constant(g, 1.0);
        assert_eq!(project_box(&inside, &cp), inside);
        let outside = Field::from_fn(g, |x: f64, _| 6.0 * x - 2.0);
        let proj = project_box(&outside, &cp);
        assert_eq!(project_box(&proj, &cp), proj);
        for &v in proj.values() {
            assert!((0.0..=2.0).contains(&v));
        }
        // pinned box returns the pin
        let pin = Field::constant(g, 0.7);
        let cp_pin = ControlProblem::new(
            g,
            alpha(0.5),
            Field::zeros(g),
            1.0,
            Some(pin.clone()),
            Some(pin.clone()),
        )
        .unwrap();
        assert_eq!(project_box(&outside, &cp_pin), pin);
    }

    #[test]
    fn optimizer_trivial_stationary_start() {
        let g = Grid::new(1, 16).unwrap();
        let cp = ControlProblem::new(
            g,
            alpha(0.5),
            Field::zeros(g),
            1e-2,
            Some(Field::constant(g, -1.0)),
            Some(Field::constant(g, 1.0)),
        )
        .unwrap();
        let (u, history) = projected_gradient_solve(&cp, &Field::zeros(g), 1e-10, 50).unwrap();
        assert!(history.converged);
        assert_eq!(history.steps.len(), 1);
        assert_eq!(u.linf_norm(), 0.0);
        let report = kkt_residual(&u, &cp).unwrap();
        assert_eq!(report.residual, 0.0);
    }

    #[test]
    fn optimizer_reaches_stationarity_on_tracking_instance() {
        let cp = tracking_problem(32, 1e-2);
        let g = cp.grid();
        let (u, history) = projected_gradient_solve(&cp, &Field::constant(g, 1.0), 1e-9, 400).unwrap();
        assert!(history.converged, "history: {} steps", history.steps.len());
        for w in history.steps.windows(2) {
            assert!(
                w[1].objective <= w[0].objective * (1.0 + 1e-12) + 1e-15,
                "objective increased: {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
        let report = kkt_residual(&u, &cp).unwrap();
        assert!(report.residual <= 1e-8, "kkt {:.3e}", report.residual);
        assert!(report.projection_residual <= 1e-7);
        // a clearly non-stationary control has a visible residual
        let bad = Field::constant(g, 2.0);
        assert!(kkt_residual(&bad, &cp).unwrap().residual > 1e-3);
    }

    #[test]
    fn optimizer_flags_max_iter_exhaustion() {
        let cp = tracking_problem(32, 1e-2);
        let g = cp.grid();
        let (u, history) = projected_gradient_solve(&cp, &Field::constant(g, 2.0), 1e-12, 1).unwrap();
        assert!(!history.converged);
        assert_eq!(history.steps.len(), 2);
        // the returned iterate is the last accepted one
        assert!(history.steps[1].objective <= history.steps[0].objective);
        assert!(u.linf_norm() <= 2.0);
    }

    #[test]
    fn optimizer_unconstrained_projection_formula() {
        let g = Grid::new(1, 24).unwrap();
        let cp = ControlProblem::new(
            g,
            alpha(0.5),
            Field::from_fn(g, |x: f64, _| (std::f64::consts::PI * x).sin()),
            1e-1,
            None,
            None,
        )
        .unwrap();
        let tol = 1e-9;
        let (u, history) = projected_gradient_solve(&cp, &Field::zeros(g), tol, 400).unwrap();
        assert!(history.converged);
        // with inactive bounds the fixed point is u = -p/nu
        let rg = reduced_gradient(&u, &cp).unwrap();
        let gap = l2_norm(&u.add(&rg.adjoint.scaled(1.0 / cp.tikhonov())).unwrap());
        assert!(gap <= 10.0 * tol / cp.tikhonov(), "gap {gap:.3e}");
    }

    #[test]
    fn bouligand_gap_cases() {
        let g = Grid::new(1, 16).unwrap();
        // pinned box: only v = u is admissible
        let pin = Field::constant(g, 0.5);
        let cp_pin = ControlProblem::new(
            g,
            alpha(0.5),
            Field::zeros(g),
            1e-2,
            Some(pin.clone()),
            Some(pin.clone()),
        )
        .unwrap();
        assert_eq!(bouligand_gap(&pin, &cp_pin, 20, 7).unwrap(), 0.0);

        // u = 0 is degenerately stationary: the state vanishes, the whole
        // grid is masked, and the derivative is the zero map
        let cp = tracking_problem(16, 1e-2);
        assert_eq!(bouligand_gap(&Field::zeros(g), &cp, 20, 7).unwrap(), 0.0);
        assert_eq!(kkt_residual(&Field::zeros(g), &cp).unwrap().residual, 0.0);

        // a strictly positive non-stationary control exposes a descent sample
        let probe = Field::constant(g, 0.5);
        assert!(kkt_residual(&probe, &cp).unwrap().residual > 1e-3);
        assert!(bouligand_gap(&probe, &cp, 50, 7).unwrap() < 0.0);

        // at the solved control the sampled gap is nonnegative up to noise
        let (u_star, _) = projected_gradient_solve(&cp, &Field::constant(g, 1.0), 1e-9, 400).unwrap();
        assert!(bouligand_gap(&u_star, &cp, 100, 7).unwrap() >= -1e-7);
    }

    #[test]
    fn truncation_chain_holds() {
        let g = Grid::new(1, 48).unwrap();
        let inst = manufactured_instance(ManufacturedKind::Sine, g, alpha(0.5)).unwrap();
        let sp = StateProblem::new(g, alpha(0.5), inst.control).unwrap();
        let (y, _) = solve_state(&sp, SolveMethod::AccelProx, 1e-11).unwrap();
        let sys = SensitivitySystem::build(&y, alpha(0.5), default_dead_zone_eps(&y));
        let dj_dy = y.sub(&Field::from_fn(g, |x: f64, _| x * (1.0 - x))).unwrap();
        let p = solve_adjoint(&sys, &dj_dy).unwrap();
        let pmax = p.linf_norm();
        let levels = [0.0, 0.25 * pmax, 0.5 * pmax, pmax, 2.0 * pmax];
        let rows = stampacchia_truncation_check(&p, &dj_dy, &sys, &levels).unwrap();
        for row in &rows {
            let scale = 1.0 + row.pairing.abs();
            assert!(row.h01_sq <= row.weighted_sq + 1e-10 * scale, "{row:?}");
            assert!(row.weighted_sq <= row.pairing + 1e-10 * scale, "{row:?}");
        }
        // k = 0 reduces to the adjoint identity; k >= ||p||_inf kills everything
        assert!((rows[0].weighted_sq - rows[0].pairing).abs() <= 1e-10 * (1.0 + rows[0].pairing.abs()));
        assert_eq!(rows[4].h01_sq, 0.0);
        assert_eq!(rows[4].weighted_sq, 0.0);
        assert_eq!(rows[4].pairing, 0.0);
        assert!(stampacchia_truncation_check(&p, &dj_dy, &sys, &[-1.0]).is_err());
    }

    #[test]
    fn adjoint_exponent_cases() {
        assert_eq!(
            admissible_adjoint_exponents(2.0, 3).unwrap(),
            ExponentInterval::closed(1.0, f64::INFINITY)
        );
        assert_eq!(
            admissible_adjoint_exponents(2.0, 4).unwrap(),
            ExponentInterval::closed_open(1.0, f64::INFINITY)
        );
        assert_eq!(
            admissible_adjoint_exponents(2.0, 6).unwrap(),
            ExponentInterval::closed_open(1.0, 6.0)
        );
        // s must exceed max(1, 2d/(d+2))
        assert!(admissible_adjoint_exponents(1.0, 1).is_err());
        assert!(admissible_adjoint_exponents(1.5, 6).is_err());
        assert!(admissible_adjoint_exponents(0.0, 0).is_err());
    }
}
