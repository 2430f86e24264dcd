//! Structured triangulations of a rectangle.
//!
//! Nodes are numbered row by row: node `(i, j)` (column `i`, row `j`) has
//! index `j * (nx + 1) + i`. Every grid cell is split along its
//! lower-left to upper-right diagonal, so the lower-left and upper-right
//! corners of the rectangle touch two triangles and the other two corners
//! touch one.

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectDomain {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RectDomain {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let domain = Self { x0, y0, x1, y1 };
        domain.validate()?;
        Ok(domain)
    }

    pub fn unit_square() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(Error::InvalidMesh(format!(
                "degenerate domain ({}, {}) x ({}, {})",
                self.x0, self.x1, self.y0, self.y1
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    domain: RectDomain,
    nx: usize,
    ny: usize,
    coords: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

impl StructuredMesh {
    pub fn new(domain: RectDomain, nx: usize, ny: usize) -> Result<Self> {
        domain.validate()?;
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!(
                "cell counts must be positive, got nx={nx}, ny={ny}"
            )));
        }
        let stride = nx + 1;

        let mut coords = Vec::with_capacity(stride * (ny + 1));
        let mut boundary = Vec::with_capacity(stride * (ny + 1));
        for j in 0..=ny {
            let y = lerp(domain.y0, domain.y1, j, ny);
            for i in 0..=nx {
                let x = lerp(domain.x0, domain.x1, i, nx);
                coords.push([x, y]);
                boundary.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }

        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n00 = j * stride + i;
                let n10 = n00 + 1;
                let n01 = n00 + stride;
                let n11 = n01 + 1;
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            }
        }

        Ok(Self {
            domain,
            nx,
            ny,
            coords,
            triangles,
            boundary,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(RectDomain::unit_square(), n, n)
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.domain.height() / self.ny as f64
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    /// Signed area of a triangle, positive for counter-clockwise orientation.
    pub fn signed_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.triangles[tri];
        let (pa, pb, pc) = (self.coords[a], self.coords[b], self.coords[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Evaluates a pointwise function at every node.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        ScalarField::new(self.coords.iter().map(|&[x, y]| f(x, y)).collect())
    }
}

// Exact at both ends and at rational midpoints such as 25/50.
fn lerp(a: f64, b: f64, k: usize, n: usize) -> f64 {
    if k == n {
        b
    } else {
        a + (b - a) * k as f64 / n as f64
    }
}

/// Pointwise description of a source term.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Constant(f64),
    /// `left` where `x <= split`, `right` otherwise.
    PiecewiseX { split: f64, left: f64, right: f64 },
    /// `max(peak - slope * r, 0)` with `r` the distance to the center.
    Radial {
        center: (f64, f64),
        peak: f64,
        slope: f64,
    },
    /// Nodal values in mesh index order.
    Tabulated(Vec<f64>),
}

impl Source {
    /// Piecewise source of the reference experiment: 1 left of `x = 0.5`, 2 right of it.
    pub fn reference_piecewise() -> Self {
        Source::PiecewiseX {
            split: 0.5,
            left: 1.0,
            right: 2.0,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Option<f64> {
        match *self {
            Source::Constant(c) => Some(c),
            Source::PiecewiseX { split, left, right } => {
                Some(if x <= split { left } else { right })
            }
            Source::Radial {
                center,
                peak,
                slope,
            } => {
                let r = (x - center.0).hypot(y - center.1);
                Some((peak - slope * r).max(0.0))
            }
            Source::Tabulated(_) => None,
        }
    }

    pub fn interpolate(&self, mesh: &StructuredMesh) -> Result<ScalarField> {
        match self {
            Source::Tabulated(values) => {
                let field = ScalarField::new(values.clone());
                field.check_len(mesh.node_count())?;
                Ok(field)
            }
            other => Ok(mesh.interpolate(|x, y| other.eval(x, y).unwrap_or(0.0))),
        }
    }
}
