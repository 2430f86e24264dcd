//! Energy functionals over potential-encoded domains.
//!
//! Conventions: the energy `E` is the minimum of
//! `J(u) = ½∫|∇u|² + ½∫V u² − ∫f u`; the objective minimized by the
//! optimizer is `F = −∫f u + δ‖u‖_{p'}` evaluated at the worst-case
//! state, which equals `2 E_{δ,p}`. The two are never mixed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::fem::FemSpace;
use crate::field::ScalarField;
use crate::state::{check_delta, check_exponent, conjugate_exponent, StateConfig, StateSolution};

/// Value of `J(V, u, f) + δ‖u‖_{p'}` with its four contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub value: f64,
    /// `½∫|∇u|²`
    pub quadratic: f64,
    /// `½∫V u²`
    pub potential: f64,
    /// `∫f u`
    pub linear: f64,
    /// `δ‖u‖_{p'}`
    pub norm: f64,
}

impl FunctionalValue {
    pub fn reassembled(&self) -> f64 {
        self.quadratic + self.potential - self.linear + self.norm
    }
}

impl FemSpace {
    /// Evaluates the worst-case energy integrand at an arbitrary state `u`.
    pub fn energy_breakdown(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        u: &ScalarField,
        delta: f64,
        p: f64,
    ) -> FunctionalValue {
        let quadratic = 0.5 * self.dirichlet_integral(u);
        let potential_term = 0.5
            * self
                .weights()
                .iter()
                .zip(potential.iter())
                .zip(u.iter())
                .map(|((w, v), u)| w * v * u * u)
                .sum::<f64>();
        let linear = self.integrate_product(f, u);
        let norm = if delta == 0.0 {
            0.0
        } else {
            delta * self.lp_norm(u, conjugate_exponent(p))
        };
        let mut out = FunctionalValue {
            value: 0.0,
            quadratic,
            potential: potential_term,
            linear,
            norm,
        };
        out.value = out.reassembled();
        out
    }

    /// `E(V, f) = −½∫f u` with `u` the linear state.
    pub fn dirichlet_energy(&self, potential: &ScalarField, f: &ScalarField) -> Result<f64> {
        let u = self.solve_linear_state(potential, f)?;
        Ok(-0.5 * self.integrate_product(f, &u))
    }

    /// `E_{δ,p}(V)` and the converged worst-case state it was evaluated at.
    pub fn worstcase_energy_with_state(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        delta: f64,
        p: f64,
        cfg: &StateConfig,
    ) -> Result<(FunctionalValue, StateSolution)> {
        let state = self
            .solve_worstcase_state(potential, f, delta, p, cfg)?
            .into_converged()?;
        let value = self.energy_breakdown(potential, f, &state.u, delta, p);
        Ok((value, state))
    }

    pub fn worstcase_energy(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        delta: f64,
        p: f64,
        cfg: &StateConfig,
    ) -> Result<FunctionalValue> {
        self.worstcase_energy_with_state(potential, f, delta, p, cfg)
            .map(|(v, _)| v)
    }

    /// `−∫f u + δ‖u‖_{p'}` at a given state.
    pub fn objective_at(&self, f: &ScalarField, u: &ScalarField, delta: f64, p: f64) -> f64 {
        let norm = if delta == 0.0 {
            0.0
        } else {
            delta * self.lp_norm(u, conjugate_exponent(p))
        };
        -self.integrate_product(f, u) + norm
    }

    /// The optimization objective `F(V) = −∫f u + δ‖u‖_{p'}` at the converged
    /// worst-case state, for general `p`.
    pub fn worstcase_objective(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        delta: f64,
        p: f64,
        cfg: &StateConfig,
    ) -> Result<(f64, StateSolution)> {
        let state = self
            .solve_worstcase_state(potential, f, delta, p, cfg)?
            .into_converged()?;
        Ok((self.objective_at(f, &state.u, delta, p), state))
    }

    /// `F(V)` for `p = 2`, the compliance reported by the optimizer.
    pub fn paper_objective(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        delta: f64,
        cfg: &StateConfig,
    ) -> Result<f64> {
        self.worstcase_objective(potential, f, delta, 2.0, cfg)
            .map(|(v, _)| v)
    }

    /// Linear worst-case functional `sup_{‖g‖_p ≤ δ} −∫h u_{f+g}`, evaluated
    /// in closed form as `−∫f w + δ‖w‖_{p'}` with `w` the state for source `h`.
    pub fn linear_worstcase(
        &self,
        potential: &ScalarField,
        f: &ScalarField,
        h: &ScalarField,
        delta: f64,
        p: f64,
    ) -> Result<f64> {
        check_delta(delta)?;
        check_exponent(p)?;
        let w = self.solve_linear_state(potential, h)?;
        Ok(self.objective_at(f, &w, delta, p))
    }

    /// `‖w₁ − w₂‖_{L¹}` between the torsion states of two potentials.
    pub fn gamma_distance(&self, first: &ScalarField, second: &ScalarField) -> Result<f64> {
        let ones = ScalarField::constant(self.node_count(), 1.0);
        let w1 = self.solve_linear_state(first, &ones)?;
        let w2 = self.solve_linear_state(second, &ones)?;
        let diff = w1.zip_map(&w2, |a, b| (a - b).abs());
        Ok(self.integrate(&diff))
    }

    /// Standard normal nodal field rescaled to `‖g‖_p = delta`.
    pub fn random_perturbation<R: Rng + ?Sized>(&self, rng: &mut R, delta: f64, p: f64) -> ScalarField {
        let g = ScalarField::new(
            (0..self.node_count())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        let norm = self.lp_norm(&g, p);
        g.scaled(delta / norm)
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
    fn zero_source_has_zero_energy() {
        let s = space(5);
        let n = s.node_count();
        assert_eq!(s.dirichlet_energy(&ScalarField::zeros(n), &ScalarField::zeros(n)).unwrap(), 0.0);
    }

    #[test]
    fn breakdown_reassembles() {
        let s = space(12);
        let n = s.node_count();
        let v = s.mesh().interpolate(|x, y| 100.0 * x * (1.0 - y));
        let f = ScalarField::constant(n, 1.0);
        let val = s.worstcase_energy(&v, &f, 0.25, 2.0, &StateConfig::default()).unwrap();
        assert!((val.value - val.reassembled()).abs() <= 1e-10 * val.value.abs());
        assert!(val.quadratic > 0.0 && val.potential > 0.0 && val.linear > 0.0 && val.norm > 0.0);
    }

    #[test]
    fn delta_zero_agrees_with_dirichlet_energy() {
        let s = space(20);
        let n = s.node_count();
        let v = s.mesh().interpolate(|x, _| 30.0 * x);
        let f = s.mesh().interpolate(|x, y| 1.0 + x * y);
        let e = s.dirichlet_energy(&v, &f).unwrap();
        let w = s.worstcase_energy(&v, &f, 0.0, 2.0, &StateConfig::default()).unwrap();
        assert_eq!(w.norm, 0.0);
        assert!((w.value - e).abs() <= 1e-9 * e.abs(), "{} vs {}", w.value, e);
        let _ = n;
    }

    #[test]
    fn worst_case_exceeds_nominal() {
        let s = space(16);
        let n = s.node_count();
        let v = ScalarField::zeros(n);
        let f = ScalarField::constant(n, 1.0);
        let cfg = StateConfig::default();
        let e0 = s.worstcase_energy(&v, &f, 0.0, 2.0, &cfg).unwrap().value;
        let e1 = s.worstcase_energy(&v, &f, 0.25, 2.0, &cfg).unwrap().value;
        assert!(e1 > e0);
    }

    #[test]
    fn linear_worstcase_with_h_equal_f() {
        let s = space(14);
        let v = s.mesh().interpolate(|x, y| 20.0 * (x + y));
        let f = s.mesh().interpolate(|x, _| if x <= 0.5 { 1.0 } else { 2.0 });
        let e = s.dirichlet_energy(&v, &f).unwrap();
        let lin0 = s.linear_worstcase(&v, &f, &f, 0.0, 2.0).unwrap();
        assert!((lin0 - 2.0 * e).abs() < 1e-12);
        let w = s.solve_linear_state(&v, &f).unwrap();
        let lin = s.linear_worstcase(&v, &f, &f, 0.3, 3.0).unwrap();
        let expect = 2.0 * e + 0.3 * s.lp_norm(&w, 1.5);
        assert!((lin - expect).abs() < 1e-12);
    }

    #[test]
    fn gamma_distance_basics() {
        let s = space(10);
        let n = s.node_count();
        let a = s.mesh().interpolate(|x, _| 50.0 * x);
        let b = ScalarField::constant(n, 5.0);
        assert_eq!(s.gamma_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(s.gamma_distance(&a, &b).unwrap(), s.gamma_distance(&b, &a).unwrap());
    }

    #[test]
    fn random_perturbations_have_the_requested_norm() {
        use rand::SeedableRng;
        let s = space(9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for p in [1.5, 2.0, 4.0] {
            let g = s.random_perturbation(&mut rng, 0.2, p);
            assert!((s.lp_norm(&g, p) - 0.2).abs() < 1e-12);
        }
    }
}
