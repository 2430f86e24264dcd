//! State solvers for the potential-relaxed Dirichlet problem.
//!
//! The linear state solves `-Δu + V u = f` in `H¹₀(D)`. The worst-case
//! state adds the 0-homogeneous term `Φ(u) = δ u |u|^{p'-2} ‖u‖_{p'}^{1-p'}`
//! to the left-hand side and is computed by a plain fixed-point iteration
//! that freezes `Φ` at the previous iterate.

use crate::error::{Error, Result};
use crate::fem::{cg_solve_from, CgOptions, FemSpace};
use crate::field::ScalarField;

/// Conjugate exponent `p' = p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::validation("p", "p must exceed 1 and be finite"));
    }
    Ok(())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::validation("delta", "delta must be a finite nonnegative number"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateConfig {
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub linear_tol: f64,
    /// `None` resolves to `1e-12 √|D|`.
    pub zero_norm_guard: Option<f64>,
    /// Under-relaxation factor θ ∈ (0, 1]; 1 is the plain update.
    pub relaxation: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            fixed_point_tol: 1e-8,
            fixed_point_max_iter: 200,
            linear_tol: 1e-10,
            zero_norm_guard: None,
            relaxation: 1.0,
        }
    }
}

impl StateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0) {
            return Err(Error::validation("fixed_point_tol", "must be positive"));
        }
        if self.fixed_point_max_iter == 0 {
            return Err(Error::validation("fixed_point_max_iter", "must be positive"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::validation("linear_tol", "must be positive"));
        }
        if let Some(g) = self.zero_norm_guard {
            if !(g > 0.0) {
                return Err(Error::validation("zero_norm_guard", "must be positive"));
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::validation("relaxation", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn guard(&self, space: &FemSpace) -> f64 {
        self.zero_norm_guard
            .unwrap_or_else(|| 1e-12 * space.area().sqrt())
    }

    fn cg(&self) -> CgOptions {
        CgOptions {
            tol: self.linear_tol,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StateSolution {
    pub u: ScalarField,
    pub iterations: usize,
    pub converged: bool,
    /// Last relative L² change between iterates.
    pub change: f64,
}

impl StateSolution {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::StateNonConvergence {
                iterations: self.iterations,
                change: self.change,
            })
        }
    }
}

fn check_potential(space: &FemSpace, potential: &ScalarField) -> Result<()> {
    space.check(potential)?;
    if potential.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::validation("potential", "values must be finite and nonnegative"));
    }
    Ok(())
}

impl FemSpace {
    /// Solves `(A + diag(w V)) u = load(rhs)` with `u = 0` on `∂D`.
    pub fn solve_linear_state(&self, potential: &ScalarField, rhs: &ScalarField) -> Result<ScalarField> {
        self.linear_solve(potential, rhs, None, CgOptions::default())
    }

    fn linear_solve(
        &self,
        potential: &ScalarField,
        rhs: &ScalarField,
        guess: Option<&[f64]>,
        opts: CgOptions,
    ) -> Result<ScalarField> {
        check_potential(self, potential)?;
        self.check(rhs)?;
        let k = self.system_matrix(potential);
        let b = self.boundary_load(rhs);
        let out = cg_solve_from(&k, &b, guess, opts)?;
        Ok(ScalarField::new(out.x))
    }

    /// `Φ(u) = δ u |u|^{(2-p)/(p-1)} ‖u‖_{p'}^{-p'/p}`, or zero when
    /// `‖u‖_{p'} < guard`.
    pub fn nonlinear_rhs_term(&self, u: &ScalarField, delta: f64, p: f64, guard: f64) -> ScalarField {
        let q = conjugate_exponent(p);
        let norm = self.lp_norm(u, q);
        if delta == 0.0 || norm < guard {
            return ScalarField::zeros(u.len());
        }
        let scale = delta * norm.powf(-q / p);
        let power = (2.0 - p) / (p - 1.0);
        if power == 0.0 {
            return u.scaled(scale);
        }
        u.map(|v| if v == 0.0 { 0.0 } else { scale * v * v.abs().powf(power) })
    }

    /// Source perturbation `g = -Φ(u)` of norm `‖g‖_p = δ` that maximizes
    /// the energy.
    pub fn worst_perturbation(&self, u: &ScalarField, delta: f64, p: f64, guard: f64) -> Result<ScalarField> {
        let norm = self.lp_norm(u, conjugate_exponent(p));
        if norm <= guard {
            return Err(Error::DegenerateState { norm, guard });
        }
        Ok(self.nonlinear_rhs_term(u, delta, p, 0.0).scaled(-1.0))
    }

    /// Fixed-point solve of `-Δu + V u = f - Φ(u)`, starting from the
    /// `δ = 0` state.
    ///
    /// A run that exhausts the iteration budget is returned with
    /// `converged == false`; [`StateSolution::into_converged`] turns that
    /// into an error.
    pub fn solve_worstcase_state(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        delta: f64,
        p: f64,
        cfg: &StateConfig,
    ) -> Result<StateSolution> {
        check_delta(delta)?;
        check_exponent(p)?;
        cfg.validate()?;
        let cg = cfg.cg();
        let q = conjugate_exponent(p);
        let guard = cfg.guard(self);

        let mut u = self.linear_solve(potential, f, None, cg)?;
        if delta == 0.0 {
            return Ok(StateSolution {
                u,
                iterations: 1,
                converged: true,
                change: 0.0,
            });
        }
        let source_vanishes = f.iter().all(|&v| v == 0.0);
        let theta = cfg.relaxation;
        let mut change = f64::INFINITY;
        let mut iterations = 1;
        while iterations <= cfg.fixed_point_max_iter {
            let norm = self.lp_norm(&u, q);
            if norm < guard {
                if source_vanishes {
                    return Ok(StateSolution {
                        u,
                        iterations,
                        converged: true,
                        change: 0.0,
                    });
                }
                return Err(Error::DegenerateState { norm, guard });
            }
            let phi = self.nonlinear_rhs_term(&u, delta, p, guard);
            let rhs = f.zip_map(&phi, |a, b| a - b);
            let next = self.linear_solve(potential, &rhs, Some(&u), cg)?;
            let next = if theta < 1.0 {
                next.zip_map(&u, |n, o| theta * n + (1.0 - theta) * o)
            } else {
                next
            };
            let diff = next.zip_map(&u, |a, b| a - b);
            change = self.lp_norm(&diff, 2.0) / self.lp_norm(&u, 2.0).max(guard);
            u = next;
            iterations += 1;
            if change <= cfg.fixed_point_tol {
                return Ok(StateSolution {
                    u,
                    iterations,
                    converged: true,
                    change,
                });
            }
        }
        Ok(StateSolution {
            u,
            iterations,
            converged: false,
            change,
        })
    }

    /// `‖(A + diag(wV)) u − load(f − Φ(u))‖₂ / ‖load(f)‖₂`, interior rows only.
    pub fn fixed_point_residual(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        u: &ScalarField,
        delta: f64,
        p: f64,
        guard: f64,
    ) -> f64 {
        let k = self.system_matrix(potential);
        let phi = self.nonlinear_rhs_term(u, delta, p, guard);
        let rhs = f.zip_map(&phi, |a, b| a - b);
        let b = self.boundary_load(&rhs);
        let ku = k.mul_vec(u);
        let res: Vec<f64> = ku.iter().zip(&b).map(|(a, b)| a - b).collect();
        let scale = crate::fem::norm2(&self.boundary_load(f));
        crate::fem::norm2(&res) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StructuredMesh;

    fn space(n: usize) -> FemSpace {
        FemSpace::new(StructuredMesh::unit_square(n).unwrap())
    }

    #[test]
    fn zero_rhs_gives_zero_state() {
        let s = space(6);
        let n = s.node_count();
        let u = s
            .solve_linear_state(&ScalarField::constant(n, 3.0), &ScalarField::zeros(n))
            .unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reaction_dominated_limit() {
        let s = space(40);
        let n = s.node_count();
        let u = s
            .solve_linear_state(&ScalarField::constant(n, 1000.0), &ScalarField::constant(n, 1.0))
            .unwrap();
        assert!(u.max() <= 1.1e-3);
        let centre = s.mesh().node_index(20, 20);
        assert!((u[centre] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn rejects_negative_potential() {
        let s = space(3);
        let n = s.node_count();
        let mut v = ScalarField::zeros(n);
        v[4] = -1.0;
        assert!(s.solve_linear_state(&v, &ScalarField::constant(n, 1.0)).is_err());
    }

    #[test]
    fn nonlinear_term_with_unit_norm() {
        let s = space(5);
        let raw = s.mesh().interpolate(|x, y| (x * 3.0).sin() + y);
        let u = raw.scaled(1.0 / s.lp_norm(&raw, 2.0));
        let phi = s.nonlinear_rhs_term(&u, 0.25, 2.0, 1e-12);
        for (a, b) in phi.iter().zip(u.iter()) {
            assert!((a - 0.25 * b).abs() < 1e-14);
        }
        let zero = s.nonlinear_rhs_term(&u, 0.0, 2.0, 1e-12);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perturbation_has_norm_delta() {
        use rand::{Rng, SeedableRng};
        let s = space(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for p in [1.5, 2.0, 4.0] {
            let u = ScalarField::new((0..s.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let g = s.worst_perturbation(&u, 0.3, p, 1e-12).unwrap();
            assert!((s.lp_norm(&g, p) - 0.3).abs() < 1e-10, "p={p}");
            assert!(g.iter().zip(u.iter()).all(|(g, u)| g * u <= 0.0));
            let g2 = s.worst_perturbation(&u.scaled(17.0), 0.3, p, 1e-12).unwrap();
            for (a, b) in g.iter().zip(g2.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(matches!(
            s.worst_perturbation(&ScalarField::zeros(s.node_count()), 0.3, 2.0, 1e-12),
            Err(Error::DegenerateState { .. })
        ));
    }

    #[test]
    fn delta_zero_matches_linear_state() {
        let s = space(12);
        let n = s.node_count();
        let v = s.mesh().interpolate(|x, y| 40.0 * x * y);
        let f = ScalarField::constant(n, 1.0);
        let lin = s.solve_linear_state(&v, &f).unwrap();
        let sol = s.solve_worstcase_state(&v, &f, 0.0, 2.0, &StateConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
        assert_eq!(sol.u, lin);
    }

    #[test]
    fn zero_source_is_a_fixed_point() {
        let s = space(8);
        let n = s.node_count();
        let sol = s
            .solve_worstcase_state(&ScalarField::zeros(n), &ScalarField::zeros(n), 0.5, 2.0, &StateConfig::default())
            .unwrap();
        assert!(sol.converged);
        assert!(sol.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_state_is_reported() {
        let s = space(4);
        let n = s.node_count();
        // Source supported on the boundary only: the linear state vanishes.
        let f = ScalarField::new(s.mesh().boundary_mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let err = s
            .solve_worstcase_state(&ScalarField::zeros(n), &f, 0.5, 2.0, &StateConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateState { .. }));
    }

    #[test]
    fn worst_case_state_is_smaller_and_satisfies_the_equation() {
        let s = space(50);
        let n = s.node_count();
        let v = ScalarField::zeros(n);
        let f = ScalarField::constant(n, 1.0);
        let cfg = StateConfig::default();
        let u0 = s.solve_linear_state(&v, &f).unwrap();
        let sol = s.solve_worstcase_state(&v, &f, 0.25, 2.0, &cfg).unwrap();
        assert!(sol.converged);
        assert!(s.lp_norm(&sol.u, 2.0) < s.lp_norm(&u0, 2.0));
        for (k, &b) in s.mesh().boundary_mask().iter().enumerate() {
            if b {
                assert_eq!(sol.u[k], 0.0);
            }
        }
        let res = s.fixed_point_residual(&v, &f, &sol.u, 0.25, 2.0, cfg.guard(&s));
        assert!(res <= 10.0 * cfg.fixed_point_tol, "residual {res}");
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let s = space(10);
        let n = s.node_count();
        let cfg = StateConfig {
            fixed_point_max_iter: 2,
            fixed_point_tol: 1e-14,
            ..StateConfig::default()
        };
        let sol = s
            .solve_worstcase_state(&ScalarField::zeros(n), &ScalarField::constant(n, 1.0), 0.25, 2.0, &cfg)
            .unwrap();
        assert!(!sol.converged);
        assert!(matches!(sol.into_converged(), Err(Error::StateNonConvergence { .. })));
    }

    #[test]
    fn under_relaxation_reaches_the_same_state() {
        let s = space(16);
        let n = s.node_count();
        let v = ScalarField::zeros(n);
        let f = ScalarField::constant(n, 1.0);
        let plain = s.solve_worstcase_state(&v, &f, 0.25, 2.0, &StateConfig::default()).unwrap();
        let cfg = StateConfig {
            relaxation: 0.6,
            ..StateConfig::default()
        };
        let damped = s.solve_worstcase_state(&v, &f, 0.25, 2.0, &cfg).unwrap();
        assert!(damped.converged);
        let diff = plain.u.zip_map(&damped.u, |a, b| a - b);
        assert!(s.lp_norm(&diff, 2.0) < 1e-6 * s.lp_norm(&plain.u, 2.0));
    }

    #[test]
    fn relaxation_rescues_oscillating_plain_updates() {
        let s = space(8);
        let n = s.node_count();
        let f = crate::grid::Source::reference_piecewise().interpolate(s.mesh()).unwrap();
        let v = ScalarField::zeros(n);
        let plain = StateConfig {
            fixed_point_tol: 1e-10,
            linear_tol: 1e-12,
            fixed_point_max_iter: 500,
            ..StateConfig::default()
        };
        let sol = s.solve_worstcase_state(&v, &f, 0.45, 1.3, &plain).unwrap();
        assert!(!sol.converged);
        assert!(sol.change > 1e-2);
        let relaxed = StateConfig { relaxation: 0.7, ..plain };
        let sol = s.solve_worstcase_state(&v, &f, 0.45, 1.3, &relaxed).unwrap();
        assert!(sol.converged);
        let r = s.fixed_point_residual(&v, &f, &sol.u, 0.45, 1.3, relaxed.guard(&s));
        assert!(r <= 10.0 * relaxed.fixed_point_tol, "residual {r:e} after {} iterations, change {:e}", sol.iterations, sol.change);
    }
}
