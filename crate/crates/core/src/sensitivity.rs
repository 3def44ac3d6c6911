//! Sensitivity analysis of the control-to-state map: the weighted-space
//! system characterizing its derivative, difference quotients, and the
//! remainder / dead-zone decay studies built on them.
//!
//! The derivative at a state y solves, in the subspace of fields vanishing
//! on the dead zone, the linear problem (A + M diag(a |y|^{a-1})) d = M h.
//! Dead-zone nodes carry homogeneous Dirichlet data: they are removed from
//! the operator and every produced field is exactly zero there.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Operator};
use crate::kernel::{abs_pow, Exponent};
use crate::linsolve;
use crate::scalar::Scalar;
use crate::state::{dead_zone, default_dead_zone_eps, solve_state, SolveMethod, StateProblem};
use crate::study::StudyTable;

/// Frozen linearization data at a base state: the dead-zone mask, the
/// weight a |y|^{a-1} on kept nodes, and the assembled restricted operator.
#[derive(Debug, Clone)]
pub struct SensitivitySystem<S: Scalar> {
    grid: Grid,
    alpha: Exponent<S>,
    base_state: Field<S>,
    mask: Vec<bool>,
    kept: Vec<usize>,
    weights: Vec<S>,
    mass_diag: Vec<S>,
    op: Operator<S>,
}

impl<S: Scalar> SensitivitySystem<S> {
    /// Build the linearization at `y`; nodes with |y_i| <= eps_dead are
    /// masked. A fully masked state yields the empty system, whose solves
    /// return the zero field.
    pub fn build(y: &Field<S>, alpha: Exponent<S>, eps_dead: S) -> Self {
        let grid = y.grid();
        let zone = dead_zone(y, eps_dead);
        let kept: Vec<usize> = (0..y.len()).filter(|&i| !zone.mask[i]).collect();
        let mut kept_index = vec![usize::MAX; y.len()];
        for (k, &i) in kept.iter().enumerate() {
            kept_index[i] = k;
        }
        let a = alpha.value();
        let weights: Vec<S> = kept
            .iter()
            .map(|&i| alpha.value() * abs_pow(y.values()[i], a - S::one()))
            .collect();
        let stiffness = Operator::<S>::stiffness(grid);
        let mass_diag = Operator::<S>::lumped_mass(grid).diagonal();
        let mut triplets = Vec::new();
        for (k, &i) in kept.iter().enumerate() {
            for (c, v) in stiffness.row(i) {
                if kept_index[c] != usize::MAX {
                    triplets.push((k, kept_index[c], v));
                }
            }
            triplets.push((k, k, mass_diag[i] * weights[k]));
        }
        let op = Operator::from_triplets(kept.len(), triplets, true, true);
        Self {
            grid,
            alpha,
            base_state: y.clone(),
            mask: zone.mask,
            kept,
            weights,
            mass_diag,
            op,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn alpha(&self) -> Exponent<S> {
        self.alpha
    }

    pub fn base_state(&self) -> &Field<S> {
        &self.base_state
    }

    /// Dead-zone mask; `true` marks excluded nodes.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Weight a |y_i|^{a-1} per kept node, aligned with [`Self::kept`].
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// The restricted operator A + M diag(w) over kept nodes.
    pub fn operator(&self) -> &Operator<S> {
        &self.op
    }

    /// Solve (A + M diag(w)) x = (M f)|kept and scatter with zeros on the mask.
    pub(crate) fn solve_weighted(&self, f: &Field<S>) -> Result<Field<S>> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if self.kept.is_empty() {
            return Ok(Field::zeros(self.grid));
        }
        let rhs: Vec<S> = self
            .kept
            .iter()
            .map(|&i| self.mass_diag[i] * f.values()[i])
            .collect();
        let tol = S::lit(1e-12).max(S::lit(32.0) * S::epsilon());
        let x = linsolve::cg_solve(&self.op, &rhs, tol)?;
        let mut full = vec![S::zero(); self.mask.len()];
        for (k, &i) in self.kept.iter().enumerate() {
            full[i] = x[k];
        }
        Field::from_values(self.grid, full)
    }

    /// 2-norm residual of the restricted system at a scattered solution.
    pub fn weighted_residual(&self, solution: &Field<S>, f: &Field<S>) -> Result<S> {
        if solution.grid() != self.grid || f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if self.kept.is_empty() {
            return Ok(S::zero());
        }
        let x: Vec<S> = self.kept.iter().map(|&i| solution.values()[i]).collect();
        let ax = self.op.apply_vec(&x);
        let mut sq = S::zero();
        for (k, &i) in self.kept.iter().enumerate() {
            let d = ax[k] - self.mass_diag[i] * f.values()[i];
            sq = sq + d * d;
        }
        Ok(sq.max(S::zero()).sqrt())
    }
}

/// Apply the state-map derivative at the frozen base state to direction `h`.
pub fn apply_s_prime<S: Scalar>(sys: &SensitivitySystem<S>, h: &Field<S>) -> Result<Field<S>> {
    sys.solve_weighted(h)
}

/// Achievable dual-residual floor of a state solve on this grid: nodal
/// roundoff of the assembled residual scales with eps * n * (1 + ||u||_inf).
pub(crate) fn solver_floor<S: Scalar>(grid: Grid, u: &Field<S>) -> S {
    let n = S::from_usize(grid.cells()).unwrap();
    (S::one() + u.linf_norm()) * (S::lit(1e-12)).max(S::lit(40.0) * S::epsilon() * n)
}

/// Difference quotient (S(u + tau h) - S(u)) / tau by two state solves, at
/// tolerance 1e-12*tau floored at the per-grid solver floor.
pub fn difference_quotient<S: Scalar>(
    problem: &StateProblem<S>,
    h: &Field<S>,
    tau: S,
) -> Result<Field<S>> {
    assert!(tau > S::zero(), "difference quotient requires tau > 0");
    if h.grid() != problem.grid() {
        return Err(Error::GridMismatch);
    }
    let tol = (S::lit(1e-12) * tau).max(solver_floor(problem.grid(), problem.control()));
    let (y_base, _) = solve_state(problem, SolveMethod::AccelProx, tol)?;
    let shifted = problem.with_control(problem.control().add(&h.scaled(tau))?)?;
    let (y_shift, _) = solve_state(&shifted, SolveMethod::AccelProx, tol)?;
    Ok(y_shift.sub(&y_base)?.scaled(S::one() / tau))
}

/// Remainder study of the derivative: tabulates
/// r(tau) = ||S(u + tau h) - S(u) - tau S'(u) h||_H01 / tau over `taus`.
pub fn frechet_remainder_study<S: Scalar>(
    problem: &StateProblem<S>,
    h: &Field<S>,
    taus: &[S],
) -> Result<StudyTable<S>> {
    if h.grid() != problem.grid() {
        return Err(Error::GridMismatch);
    }
    let floor = solver_floor(problem.grid(), problem.control());
    let (y_base, _) = solve_state(problem, SolveMethod::AccelProx, floor)?;
    let sys = SensitivitySystem::build(&y_base, problem.alpha(), default_dead_zone_eps(&y_base));
    let derivative = apply_s_prime(&sys, h)?;
    let mut table = StudyTable::new("tau");
    for &tau in taus {
        assert!(tau > S::zero(), "tau values must be positive");
        let tol = (S::lit(1e-12) * tau).max(floor);
        let shifted = problem.with_control(problem.control().add(&h.scaled(tau))?)?;
        let (y_shift, _) = solve_state(&shifted, SolveMethod::AccelProx, tol)?;
        let mut remainder = y_shift.sub(&y_base)?;
        remainder = remainder.sub(&derivative.scaled(tau))?;
        table.push(tau, crate::grid::h01_norm(&remainder) / tau);
    }
    Ok(table)
}

/// Outcome of [`dead_zone_decay_study`]: an empty zone is a distinct result,
/// not an error.
#[derive(Debug, Clone)]
pub enum DecayStudy<S: Scalar> {
    EmptyZone,
    Table(StudyTable<S>),
}

/// Tabulates ||delta_tau||_{L^{a+1}(Z)} over `taus`, where Z is the given
/// zone mask (for the plateau instance, the exact left-half dead zone known
/// by construction).
pub fn dead_zone_decay_study<S: Scalar>(
    problem: &StateProblem<S>,
    h: &Field<S>,
    taus: &[S],
    zone: &[bool],
) -> Result<DecayStudy<S>> {
    if zone.len() != problem.grid().interior_count() {
        return Err(Error::InvalidArgument(
            "zone mask length must match the grid".into(),
        ));
    }
    if zone.iter().all(|&z| !z) {
        return Ok(DecayStudy::EmptyZone);
    }
    let mass_diag = Operator::<S>::lumped_mass(problem.grid()).diagonal();
    let exponent = problem.alpha().value() + S::one();
    let mut table = StudyTable::new("tau");
    for &tau in taus {
        let quotient = difference_quotient(problem, h, tau)?;
        let mut sum = S::zero();
        for i in 0..zone.len() {
            if zone[i] {
                sum = sum + mass_diag[i] * abs_pow(quotient.values()[i], exponent);
            }
        }
        table.push(tau, abs_pow(sum.max(S::zero()), S::one() / exponent));
    }
    Ok(DecayStudy::Table(table))
}
