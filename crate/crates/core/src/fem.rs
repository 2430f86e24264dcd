//! P1 finite elements on a [`StructuredMesh`]: stiffness assembly, lumped
//! quadrature, Dirichlet elimination and a Jacobi-preconditioned conjugate
//! gradient solver.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::StructuredMesh;

/// Symmetric matrix in compressed sparse row layout.
///
/// Column indices within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetricMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖A − Aᵀ‖_max`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// Adds `d[i]` to every diagonal entry whose mask bit is set. Diagonal
    /// entries must already be present in the sparsity pattern.
    pub fn add_diagonal_masked(&mut self, d: &[f64], mask: &[bool]) {
        for i in 0..self.n {
            if !mask[i] {
                continue;
            }
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            let k = self.col_idx[range.clone()]
                .binary_search(&i)
                .expect("diagonal entry missing from pattern");
            self.values[range.start + k] += d[i];
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Stiffness matrix `∫∇φ_i·∇φ_j` without boundary conditions.
pub fn assemble_stiffness(mesh: &StructuredMesh) -> SparseSymmetricMatrix {
    let coords = mesh.coords();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.signed_area(t);
        let p = tri.map(|k| coords[k]);
        // Gradient of the barycentric coordinate a is (b_a, c_a) / (2 area).
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        for a in 0..3 {
            for e in 0..3 {
                let k = (b[a] * b[e] + c[a] * c[e]) / (4.0 * area);
                triplets.push((tri[a], tri[e], k));
            }
        }
    }
    SparseSymmetricMatrix::from_triplets(mesh.node_count(), &triplets)
}

/// Lumped mass: one third of the area of every incident triangle.
pub fn assemble_lumped_mass(mesh: &StructuredMesh) -> Vec<f64> {
    let mut weights = vec![0.0; mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let third = mesh.signed_area(t) / 3.0;
        for &k in tri {
            weights[k] += third;
        }
    }
    weights
}

pub fn assemble_load(weights: &[f64], f: &[f64]) -> Vec<f64> {
    weights.iter().zip(f).map(|(w, v)| w * v).collect()
}

/// Symmetric elimination of the masked rows and columns: their entries
/// are zeroed, the diagonal set to one and the right-hand side to zero.
/// Valid for homogeneous boundary data only.
pub fn apply_dirichlet(
    a: &SparseSymmetricMatrix,
    b: &[f64],
    mask: &[bool],
) -> (SparseSymmetricMatrix, Vec<f64>) {
    let mut out = a.clone();
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k];
            if mask[i] || mask[j] {
                out.values[k] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    let rhs = b
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { 0.0 } else { v })
        .collect();
    (out, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    /// `None` means `10 n`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn cg_solve(a: &SparseSymmetricMatrix, b: &[f64], opts: CgOptions) -> Result<CgOutcome> {
    cg_solve_from(a, b, None, opts)
}

/// Jacobi-preconditioned conjugate gradients from an optional initial guess.
/// Stops once `‖Ax − b‖₂ ≤ tol ‖b‖₂`.
pub fn cg_solve_from(
    a: &SparseSymmetricMatrix,
    b: &[f64],
    guess: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = a.dim();
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = guess.map_or_else(|| vec![0.0; n], |g| g.to_vec());
    let mut r = a.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = norm2(&r) / b_norm;
    if rel <= opts.tol {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: rel,
        });
    }

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    // Stagnation: no new best residual for this many consecutive steps.
    let patience = 50.max(n);
    let mut best = rel;
    let mut since_best = 0;

    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::IllConditioned {
                iterations: it,
                residual: rel,
            });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rel = norm2(&r) / b_norm;
        if rel <= opts.tol {
            // Guard against drift of the recursive residual.
            let true_rel = {
                let ax = a.mul_vec(&x);
                let res: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
                norm2(&res) / b_norm
            };
            if true_rel <= opts.tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    residual: true_rel,
                });
            }
            let ax = a.mul_vec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            rel = true_rel;
        }
        if rel < best {
            best = rel;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                return Err(Error::IllConditioned {
                    iterations: it,
                    residual: rel,
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: rel,
    })
}

/// Per-mesh cache of the assembled operators.
///
/// Holds the stiffness matrix before and after Dirichlet elimination and
/// the lumped quadrature weights, which every solver and functional in the
/// crate shares.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: StructuredMesh,
    stiffness: SparseSymmetricMatrix,
    eliminated: SparseSymmetricMatrix,
    weights: Vec<f64>,
    interior: Vec<bool>,
}

impl FemSpace {
    pub fn new(mesh: StructuredMesh) -> Self {
        let stiffness = assemble_stiffness(&mesh);
        let weights = assemble_lumped_mass(&mesh);
        let zeros = vec![0.0; mesh.node_count()];
        let (eliminated, _) = apply_dirichlet(&stiffness, &zeros, mesh.boundary_mask());
        let interior = mesh.boundary_mask().iter().map(|b| !b).collect();
        Self {
            mesh,
            stiffness,
            eliminated,
            weights,
            interior,
        }
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn stiffness(&self) -> &SparseSymmetricMatrix {
        &self.stiffness
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn area(&self) -> f64 {
        self.mesh.domain().area()
    }

    pub fn check(&self, field: &ScalarField) -> Result<()> {
        field.check_len(self.node_count())
    }

    pub fn load(&self, f: &[f64]) -> Vec<f64> {
        assemble_load(&self.weights, f)
    }

    /// `(A + diag(w V))` with the boundary rows and columns eliminated.
    pub fn system_matrix(&self, potential: &[f64]) -> SparseSymmetricMatrix {
        let mut k = self.eliminated.clone();
        let reaction: Vec<f64> = self
            .weights
            .iter()
            .zip(potential)
            .map(|(w, v)| w * v)
            .collect();
        k.add_diagonal_masked(&reaction, &self.interior);
        k
    }

    /// Load vector of `rhs` with zeros on the boundary.
    pub fn boundary_load(&self, rhs: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(rhs)
            .zip(&self.interior)
            .map(|((w, f), &inner)| if inner { w * f } else { 0.0 })
            .collect()
    }

    /// `Σ w_i u_i v_i`.
    pub fn integrate_product(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u)
            .zip(v)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        dot(&self.weights, u)
    }

    /// Lumped `L^p` norm, `p >= 1`.
    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        lp_norm(&self.weights, u, p)
    }

    /// `∫|∇u|²` computed with the unconstrained stiffness matrix.
    pub fn dirichlet_integral(&self, u: &[f64]) -> f64 {
        self.stiffness.quadratic_form(u)
    }
}

pub fn lp_norm(weights: &[f64], u: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return weights
            .iter()
            .zip(u)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt();
    }
    let s: f64 = weights
        .iter()
        .zip(u)
        .map(|(w, v)| w * v.abs().powf(p))
        .sum();
    s.powf(1.0 / p)
}

pub fn integrate_product(weights: &[f64], u: &[f64], v: &[f64]) -> f64 {
    weights
        .iter()
        .zip(u)
        .zip(v)
        .map(|((w, a), b)| w * a * b)
        .sum()
}
