//! Radially symmetric worst-case problems on a ball, and the comparison of
//! the ball against other shapes of the same measure.
//!
//! The radial solver uses P1 elements on `(0, R)` with the weight
//! `|S^{d-1}| r^{d-1}`, a natural condition at the origin and a Dirichlet
//! condition at `r = R`. It runs the same fixed-point iteration as the 2D
//! state solver.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::field::ScalarField;
use crate::grid::{RectDomain, StructuredMesh};
use crate::state::{check_delta, check_exponent, conjugate_exponent, StateConfig};

/// Space dimension of the radial reduction.
const DIM: i32 = 2;

fn radial_weight(r: f64) -> f64 {
    // Surface measure of the unit sphere in R^2 times r^(d-1).
    2.0 * PI * r.powi(DIM - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    Constant(f64),
    /// `max(peak − slope r, 0)` with `slope ≥ 0`.
    Linear { peak: f64, slope: f64 },
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Constant(c) => c,
            RadialProfile::Linear { peak, slope } => (peak - slope * r).max(0.0),
        }
    }

    /// Checks monotonicity on `samples + 1` equispaced radii in `[0, radius]`.
    pub fn is_nonincreasing(&self, radius: f64, samples: usize) -> bool {
        let vals: Vec<f64> = (0..=samples)
            .map(|k| self.eval(radius * k as f64 / samples as f64))
            .collect();
        vals.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProblem {
    pub radius: f64,
    pub profile: RadialProfile,
    pub delta: f64,
    pub p: f64,
    pub nr: usize,
}

impl RadialProblem {
    /// Ball of area `measure` in the plane.
    pub fn ball_of_measure(measure: f64, profile: RadialProfile, delta: f64, p: f64, nr: usize) -> Self {
        Self {
            radius: (measure / PI).sqrt(),
            profile,
            delta,
            p,
            nr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::validation("radius", "must be positive"));
        }
        if self.nr < 2 {
            return Err(Error::validation("nr", "need at least two radial intervals"));
        }
        if !self.profile.is_nonincreasing(self.radius, 4 * self.nr) {
            return Err(Error::validation("profile", "radial source must be nonincreasing"));
        }
        check_delta(self.delta)?;
        check_exponent(self.p)
    }
}

#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub radii: Vec<f64>,
    pub u: Vec<f64>,
    /// Worst-case energy `E_{δ,p}` of the ball.
    pub energy: f64,
    pub iterations: usize,
}

struct RadialSystem {
    radii: Vec<f64>,
    weights: Vec<f64>,
    // Tridiagonal stiffness: diagonal and first off-diagonal.
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl RadialSystem {
    fn new(radius: f64, nr: usize) -> Self {
        let radii: Vec<f64> = (0..=nr).map(|k| radius * k as f64 / nr as f64).collect();
        let mut weights = vec![0.0; nr + 1];
        let mut diag = vec![0.0; nr + 1];
        let mut off = vec![0.0; nr];
        for k in 0..nr {
            let (a, b) = (radii[k], radii[k + 1]);
            let h = b - a;
            // Exact integrals of the linear weight against hat functions.
            weights[k] += 2.0 * PI * h * (2.0 * a + b) / 6.0;
            weights[k + 1] += 2.0 * PI * h * (a + 2.0 * b) / 6.0;
            let stiff = radial_weight(0.5 * (a + b)) / h;
            diag[k] += stiff;
            diag[k + 1] += stiff;
            off[k] -= stiff;
        }
        Self {
            radii,
            weights,
            diag,
            off,
        }
    }

    fn n(&self) -> usize {
        self.radii.len()
    }

    /// Solves `K u = load(rhs)` with `u(R) = 0` by the Thomas algorithm.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n() - 1; // unknowns 0..n-1, last node fixed
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let b = self.weights[i] * rhs[i];
            let lower = if i > 0 { self.off[i - 1] } else { 0.0 };
            let denom = self.diag[i] - if i > 0 { lower * c[i - 1] } else { 0.0 };
            c[i] = if i + 1 < n { self.off[i] / denom } else { 0.0 };
            d[i] = (b - if i > 0 { lower * d[i - 1] } else { 0.0 }) / denom;
        }
        let mut u = vec![0.0; n + 1];
        for i in (0..n).rev() {
            u[i] = d[i] - if i + 1 < n { c[i] * u[i + 1] } else { 0.0 };
        }
        u
    }

    fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        crate::fem::lp_norm(&self.weights, u, p)
    }

    fn dirichlet_integral(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n() {
            s += self.diag[i] * u[i] * u[i];
            if i + 1 < self.n() {
                s += 2.0 * self.off[i] * u[i] * u[i + 1];
            }
        }
        s
    }
}

/// Worst-case energy of a ball with a radial source.
pub fn radial_energy(problem: &RadialProblem, cfg: &StateConfig) -> Result<RadialSolution> {
    problem.validate()?;
    cfg.validate()?;
    let sys = RadialSystem::new(problem.radius, problem.nr);
    let f: Vec<f64> = sys.radii.iter().map(|&r| problem.profile.eval(r)).collect();
    let q = conjugate_exponent(problem.p);
    let guard = cfg
        .zero_norm_guard
        .unwrap_or_else(|| 1e-12 * (PI * problem.radius * problem.radius).sqrt());

    let mut u = sys.solve(&f);
    let mut iterations = 1;
    if problem.delta > 0.0 {
        let mut converged = false;
        let mut change = f64::INFINITY;
        while iterations <= cfg.fixed_point_max_iter {
            let norm = sys.lp_norm(&u, q);
            if norm < guard {
                converged = f.iter().all(|&v| v == 0.0);
                if !converged {
                    return Err(Error::DegenerateState { norm, guard });
                }
                break;
            }
            let scale = problem.delta * norm.powf(-q / problem.p);
            let power = (2.0 - problem.p) / (problem.p - 1.0);
            let rhs: Vec<f64> = f
                .iter()
                .zip(&u)
                .map(|(&fv, &uv)| {
                    let phi = if uv == 0.0 { 0.0 } else { scale * uv * uv.abs().powf(power) };
                    fv - phi
                })
                .collect();
            let next = sys.solve(&rhs);
            let next: Vec<f64> = next
                .iter()
                .zip(&u)
                .map(|(n, o)| cfg.relaxation * n + (1.0 - cfg.relaxation) * o)
                .collect();
            let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
            change = sys.lp_norm(&diff, 2.0) / sys.lp_norm(&u, 2.0).max(guard);
            u = next;
            iterations += 1;
            if change <= cfg.fixed_point_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::StateNonConvergence { iterations, change });
        }
    }

    let linear: f64 = sys.weights.iter().zip(&f).zip(&u).map(|((w, f), u)| w * f * u).sum();
    let norm = if problem.delta > 0.0 {
        problem.delta * sys.lp_norm(&u, q)
    } else {
        0.0
    };
    let energy = 0.5 * sys.dirichlet_integral(&u) - linear + norm;
    Ok(RadialSolution {
        radii: sys.radii,
        u,
        energy,
        iterations,
    })
}

/// Shapes of prescribed area centered in the design box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CandidateShape {
    Disc,
    /// Axis-aligned rectangle with side ratio `aspect ≥ 1` (1 is a square).
    Rectangle { aspect: f64 },
}

impl CandidateShape {
    pub fn name(&self) -> String {
        match *self {
            CandidateShape::Disc => "disc".into(),
            CandidateShape::Rectangle { aspect } if aspect == 1.0 => "square".into(),
            CandidateShape::Rectangle { aspect } => format!("rectangle-{aspect}:1"),
        }
    }

    /// Half extents along x and y for area `measure`.
    pub fn half_extents(&self, measure: f64) -> (f64, f64) {
        match *self {
            CandidateShape::Disc => {
                let r = (measure / PI).sqrt();
                (r, r)
            }
            CandidateShape::Rectangle { aspect } => {
                let short = (measure / aspect).sqrt();
                (0.5 * aspect * short, 0.5 * short)
            }
        }
    }

    /// Membership of a point given relative to the shape center.
    pub fn contains(&self, measure: f64, dx: f64, dy: f64) -> bool {
        self.contains_inset(measure, 0.0, dx, dy)
    }

    /// Membership in the shape shrunk by `inset` along its normals.
    pub fn contains_inset(&self, measure: f64, inset: f64, dx: f64, dy: f64) -> bool {
        let (hx, hy) = self.half_extents(measure);
        match self {
            CandidateShape::Disc => dx.hypot(dy) <= hx - inset,
            CandidateShape::Rectangle { .. } => dx.abs() <= hx - inset && dy.abs() <= hy - inset,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymmetrizationSetup {
    pub measure: f64,
    pub profile: RadialProfile,
    pub delta: f64,
    pub p: f64,
    /// Cells per axis of the 2D box.
    pub n: usize,
    pub nr: usize,
    /// Potential outside the candidate shapes.
    pub upper_bound: f64,
    /// Relative slack allowed in the ordering and the cross-check.
    pub tolerance: f64,
    pub state: StateConfig,
    /// Inset of the sampled shapes in units of the mesh width. A node with
    /// V = 0 makes every triangle around it part of the support, so the
    /// literal indicator (inset 0) overshoots the shape by about h/2.
    pub inset_cells: f64,
    /// Worker threads used to evaluate the candidates.
    pub threads: usize,
}

impl SymmetrizationSetup {
    pub fn new(measure: f64, profile: RadialProfile, delta: f64, p: f64) -> Self {
        Self {
            measure,
            profile,
            delta,
            p,
            n: 100,
            nr: 1000,
            upper_bound: 1e6,
            tolerance: 0.02,
            state: StateConfig::default(),
            inset_cells: 0.5,
            threads: 1,
        }
    }

    pub fn default_candidates() -> Vec<CandidateShape> {
        vec![
            CandidateShape::Rectangle { aspect: 1.0 },
            CandidateShape::Rectangle { aspect: 2.0 },
            CandidateShape::Rectangle { aspect: 4.0 },
        ]
    }

    /// Square box centered at the origin that holds every candidate with a
    /// clearance of one ball radius.
    pub fn domain(&self, candidates: &[CandidateShape]) -> RectDomain {
        let ball = (self.measure / PI).sqrt();
        let reach = candidates
            .iter()
            .chain(std::iter::once(&CandidateShape::Disc))
            .map(|c| {
                let (hx, hy) = c.half_extents(self.measure);
                hx.max(hy)
            })
            .fold(0.0, f64::max);
        let half = reach + ball;
        RectDomain {
            x0: -half,
            y0: -half,
            x1: half,
            y1: half,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateRow {
    pub name: String,
    pub energy: f64,
    /// `(E_candidate − E_ball) / |E_ball|` with the radial ball value.
    pub gap: f64,
    pub ball_not_worse: bool,
}

#[derive(Debug, Clone)]
pub struct SymmetrizationReport {
    pub ball_radial: f64,
    pub ball_2d: f64,
    /// `|E_2d − E_radial| / |E_radial|`
    pub cross_check: f64,
    pub cross_check_ok: bool,
    pub rows: Vec<CandidateRow>,
}

impl SymmetrizationReport {
    pub fn passed(&self) -> bool {
        self.cross_check_ok && self.rows.iter().all(|r| r.ball_not_worse)
    }
}

/// Potential encoding of a shape: 0 at nodes inside, `upper` elsewhere.
pub fn shape_potential(
    mesh: &StructuredMesh,
    shape: CandidateShape,
    measure: f64,
    upper: f64,
    inset: f64,
) -> ScalarField {
    let (cx, cy) = mesh.domain().center();
    mesh.interpolate(|x, y| {
        if shape.contains_inset(measure, inset, x - cx, y - cy) {
            0.0
        } else {
            upper
        }
    })
}

/// Evaluates every candidate and the ball, and checks that the ball has the
/// lowest worst-case energy up to the configured tolerance.
pub fn symmetrization_check(setup: &SymmetrizationSetup, candidates: &[CandidateShape]) -> Result<SymmetrizationReport> {
    let radial = radial_energy(
        &RadialProblem::ball_of_measure(setup.measure, setup.profile, setup.delta, setup.p, setup.nr),
        &setup.state,
    )?;
    let ball = radial.energy;

    let domain = setup.domain(candidates);
    let space = FemSpace::new(StructuredMesh::new(domain, setup.n, setup.n)?);
    let (cx, cy) = domain.center();
    let f = space
        .mesh()
        .interpolate(|x, y| setup.profile.eval((x - cx).hypot(y - cy)));
    let energy_of = |shape: CandidateShape| -> Result<f64> {
        let inset = setup.inset_cells * space.mesh().hx().max(space.mesh().hy());
        let v = shape_potential(space.mesh(), shape, setup.measure, setup.upper_bound, inset);
        Ok(space.worstcase_energy(&v, &f, setup.delta, setup.p, &setup.state)?.value)
    };

    let mut shapes = vec![CandidateShape::Disc];
    shapes.extend_from_slice(candidates);
    let energies = if setup.threads > 1 {
        let chunk = shapes.len().div_ceil(setup.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = shapes
                .chunks(chunk)
                .map(|part| scope.spawn(|| part.iter().map(|&c| energy_of(c)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect::<Result<Vec<_>>>()
        })?
    } else {
        shapes.iter().map(|&c| energy_of(c)).collect::<Result<Vec<_>>>()?
    };

    let ball_2d = energies[0];
    let cross_check = (ball_2d - ball).abs() / ball.abs();
    let slack = setup.tolerance * ball.abs();
    let rows = candidates
        .iter()
        .zip(&energies[1..])
        .map(|(c, &energy)| CandidateRow {
            name: c.name(),
            energy,
            gap: (energy - ball) / ball.abs(),
            ball_not_worse: ball <= energy + slack,
        })
        .collect();
    Ok(SymmetrizationReport {
        ball_radial: ball,
        ball_2d,
        cross_check,
        cross_check_ok: cross_check <= setup.tolerance,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disc_closed_form() {
        let problem = RadialProblem {
            radius: 1.0,
            profile: RadialProfile::Constant(1.0),
            delta: 0.0,
            p: 2.0,
            nr: 1000,
        };
        let sol = radial_energy(&problem, &StateConfig::default()).unwrap();
        let exact = -PI / 16.0;
        assert!(((sol.energy - exact) / exact).abs() < 1e-4);
        for (r, u) in sol.radii.iter().zip(&sol.u).step_by(50) {
            assert!((u - (1.0 - r * r) / 4.0).abs() < 1e-5);
        }
    }

    #[test]
    fn ball_of_measure_closed_form() {
        for m in [0.3, 1.0] {
            let problem = RadialProblem::ball_of_measure(m, RadialProfile::Constant(1.0), 0.0, 2.0, 1000);
            let e = radial_energy(&problem, &StateConfig::default()).unwrap().energy;
            let exact = -m * m / (16.0 * PI);
            assert!(((e - exact) / exact).abs() < 1e-4, "m={m}");
        }
    }

    #[test]
    fn perturbation_raises_the_energy() {
        let mut problem = RadialProblem {
            radius: 1.0,
            profile: RadialProfile::Constant(1.0),
            delta: 0.25,
            p: 2.0,
            nr: 400,
        };
        let e = radial_energy(&problem, &StateConfig::default()).unwrap().energy;
        assert!(e > -PI / 16.0);
        problem.p = 3.0;
        assert!(radial_energy(&problem, &StateConfig::default()).unwrap().energy > -PI / 16.0);
    }

    #[test]
    fn second_order_convergence() {
        let exact = -PI / 16.0;
        let err = |nr| {
            let problem = RadialProblem {
                radius: 1.0,
                profile: RadialProfile::Constant(1.0),
                delta: 0.0,
                p: 2.0,
                nr,
            };
            (radial_energy(&problem, &StateConfig::default()).unwrap().energy - exact).abs()
        };
        let (e1, e2) = (err(50), err(100));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn rejects_increasing_profiles() {
        let problem = RadialProblem {
            radius: 1.0,
            profile: RadialProfile::Linear { peak: 1.0, slope: -1.0 },
            delta: 0.0,
            p: 2.0,
            nr: 10,
        };
        assert!(radial_energy(&problem, &StateConfig::default()).is_err());
    }

    #[test]
    fn candidate_geometry() {
        for c in [CandidateShape::Disc, CandidateShape::Rectangle { aspect: 1.0 }, CandidateShape::Rectangle { aspect: 4.0 }] {
            let (hx, hy) = c.half_extents(0.3);
            let area = match c {
                CandidateShape::Disc => PI * hx * hy,
                _ => 4.0 * hx * hy,
            };
            assert!((area - 0.3).abs() < 1e-12);
        }
        assert_eq!(CandidateShape::Rectangle { aspect: 2.0 }.name(), "rectangle-2:1");
    }
}
