//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [mesh]
//! nx = 50
//! [source]
//! kind = piecewise-x
//! ```
//!
//! Sections are `mesh`, `source`, `problem`, `optimize`, `state` and
//! `output`. Unknown sections and keys are rejected, as are duplicates.
//! Every key that is absent takes its default, and the defaults reproduce
//! the reference experiment on the unit square.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::field::ScalarField;
use crate::grid::{RectDomain, Source, StructuredMesh};
use crate::optimize::{DesignProblem, OptimizationConfig, OptimizerKind};
use crate::state::StateConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Constant { value: f64 },
    PiecewiseX { split: f64, left: f64, right: f64 },
    Radial { center_x: f64, center_y: f64, peak: f64, slope: f64 },
    /// CSV file in the field export format.
    Tabulated { file: PathBuf },
}

impl SourceSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SourceSpec::Constant { .. } => "constant",
            SourceSpec::PiecewiseX { .. } => "piecewise-x",
            SourceSpec::Radial { .. } => "radial",
            SourceSpec::Tabulated { .. } => "tabulated",
        }
    }

    pub fn to_source(&self, mesh: &StructuredMesh) -> Result<Source> {
        Ok(match *self {
            SourceSpec::Constant { value } => Source::Constant(value),
            SourceSpec::PiecewiseX { split, left, right } => Source::PiecewiseX { split, left, right },
            SourceSpec::Radial {
                center_x,
                center_y,
                peak,
                slope,
            } => Source::Radial {
                center: (center_x, center_y),
                peak,
                slope,
            },
            SourceSpec::Tabulated { ref file } => {
                Source::Tabulated(crate::export::read_field_csv(mesh, file)?.into_vec())
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: RectDomain,
    pub nx: usize,
    pub ny: usize,
    pub source: SourceSpec,
    pub delta: f64,
    pub p: f64,
    pub optimization: OptimizationConfig,
    pub state: StateConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// `section.key` names that were filled from defaults.
    pub defaulted: Vec<String>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            domain: RectDomain::unit_square(),
            nx: 50,
            ny: 50,
            source: SourceSpec::PiecewiseX {
                split: 0.5,
                left: 1.0,
                right: 2.0,
            },
            delta: 0.0,
            p: 2.0,
            optimization: OptimizationConfig::default(),
            state: StateConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            defaulted: Vec::new(),
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("mesh", &["x0", "y0", "x1", "y1", "nx", "ny"]),
    (
        "source",
        &["kind", "value", "split", "left", "right", "center_x", "center_y", "peak", "slope", "file"],
    ),
    ("problem", &["delta", "p"]),
    (
        "optimize",
        &[
            "M",
            "alpha",
            "m",
            "optimizer",
            "max_iter",
            "move_limit",
            "kkt_tol",
            "objective_tol",
            "stall_window",
        ],
    ),
    (
        "state",
        &["fixed_point_tol", "fixed_point_max_iter", "linear_tol", "zero_norm_guard", "relaxation"],
    ),
    ("output", &["dir", "seed"]),
];

fn source_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "constant" => &["value"],
        "piecewise-x" => &["split", "left", "right"],
        "radial" => &["center_x", "center_y", "peak", "slope"],
        "tabulated" => &["file"],
        _ => return None,
    })
}

struct Entry {
    line: usize,
    value: String,
}

struct Table {
    entries: BTreeMap<String, Entry>,
    defaulted: Vec<String>,
}

impl Table {
    fn take(&mut self, key: &str) -> Option<Entry> {
        let e = self.entries.remove(key);
        if e.is_none() {
            self.defaulted.push(key.to_string());
        }
        e
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse().map_err(|_| Error::Parse {
                line: e.line,
                message: format!("`{key}`: cannot parse `{}`", e.value),
            }),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> (String, usize) {
        match self.take(key) {
            None => (default.to_string(), 0),
            Some(e) => (e.value, e.line),
        }
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut section: Option<&str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            let known = SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unknown section `[{name}]`"),
            })?;
            section = Some(known.0);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("`{key}` appears before any section header"),
        })?;
        let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !allowed.contains(&key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown key `{key}` in section `[{sec}]`"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("`{key}` has no value"),
            });
        }
        let full = format!("{sec}.{key}");
        if let Some(prev) = entries.get(&full) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.insert(
            full,
            Entry {
                line: line_no,
                value: value.to_string(),
            },
        );
    }

    let mut t = Table {
        entries,
        defaulted: Vec::new(),
    };
    let d = ProblemSpec::default();

    let domain = RectDomain {
        x0: t.number("mesh.x0", d.domain.x0)?,
        y0: t.number("mesh.y0", d.domain.y0)?,
        x1: t.number("mesh.x1", d.domain.x1)?,
        y1: t.number("mesh.y1", d.domain.y1)?,
    };
    let nx = t.number("mesh.nx", d.nx)?;
    let ny = t.number("mesh.ny", d.ny)?;

    let (kind, _) = t.string("source.kind", "piecewise-x");
    let keys = source_keys(&kind).ok_or_else(|| Error::validation("source.kind", format!("unknown source kind `{kind}`")))?;
    let foreign: Vec<String> = t
        .entries
        .keys()
        .filter(|k| k.starts_with("source.") && !keys.contains(&&k["source.".len()..]))
        .cloned()
        .collect();
    if let Some(k) = foreign.first() {
        let line = t.entries[k].line;
        return Err(Error::Parse {
            line,
            message: format!("`{}` does not apply to source kind `{kind}`", &k["source.".len()..]),
        });
    }
    let source = match kind.as_str() {
        "constant" => SourceSpec::Constant {
            value: t.number("source.value", 1.0)?,
        },
        "piecewise-x" => SourceSpec::PiecewiseX {
            split: t.number("source.split", 0.5)?,
            left: t.number("source.left", 1.0)?,
            right: t.number("source.right", 2.0)?,
        },
        "radial" => {
            let (cx, cy) = domain.center();
            SourceSpec::Radial {
                center_x: t.number("source.center_x", cx)?,
                center_y: t.number("source.center_y", cy)?,
                peak: t.number("source.peak", 1.0)?,
                slope: t.number("source.slope", 0.0)?,
            }
        }
        _ => {
            let (file, _) = t.string("source.file", "");
            if file.is_empty() {
                return Err(Error::validation("source.file", "tabulated sources need a file"));
            }
            SourceSpec::Tabulated { file: file.into() }
        }
    };

    let delta = t.number("problem.delta", d.delta)?;
    let p = t.number("problem.p", d.p)?;

    let od = &d.optimization;
    let (kind_name, _) = t.string("optimize.optimizer", od.kind.name());
    let optimizer = OptimizerKind::parse(&kind_name)
        .ok_or_else(|| Error::validation("optimize.optimizer", format!("unknown optimizer `{kind_name}`")))?;
    let optimization = OptimizationConfig {
        upper_bound: t.number("optimize.M", od.upper_bound)?,
        alpha: t.number("optimize.alpha", od.alpha)?,
        volume_fraction: t.number("optimize.m", od.volume_fraction)?,
        max_outer_iter: t.number("optimize.max_iter", od.max_outer_iter)?,
        move_limit: t.number("optimize.move_limit", od.move_limit)?,
        kkt_tol: t.number("optimize.kkt_tol", od.kkt_tol)?,
        objective_tol: t.number("optimize.objective_tol", od.objective_tol)?,
        stall_window: t.number("optimize.stall_window", od.stall_window)?,
        kind: optimizer,
    };

    let sd = d.state;
    let (guard, guard_line) = t.string("state.zero_norm_guard", "auto");
    let zero_norm_guard = if guard == "auto" {
        None
    } else {
        Some(guard.parse().map_err(|_| Error::Parse {
            line: guard_line,
            message: format!("`zero_norm_guard`: cannot parse `{guard}`"),
        })?)
    };
    let state = StateConfig {
        fixed_point_tol: t.number("state.fixed_point_tol", sd.fixed_point_tol)?,
        fixed_point_max_iter: t.number("state.fixed_point_max_iter", sd.fixed_point_max_iter)?,
        linear_tol: t.number("state.linear_tol", sd.linear_tol)?,
        zero_norm_guard,
        relaxation: t.number("state.relaxation", sd.relaxation)?,
    };

    let (dir, _) = t.string("output.dir", "out");
    let seed = t.number("output.seed", d.seed)?;

    let mut defaulted = t.defaulted;
    // Keys of other source kinds are never "defaulted".
    defaulted.retain(|k| !k.starts_with("source.") || k == "source.kind" || keys.contains(&&k["source.".len()..]));

    let spec = ProblemSpec {
        domain,
        nx,
        ny,
        source,
        delta,
        p,
        optimization,
        state,
        output_dir: dir.into(),
        seed,
        defaulted,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn read_config(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.x0 < d.x1) || ![d.x0, d.x1].iter().all(|v| v.is_finite()) {
            return Err(Error::validation("mesh.x1", "x1 must exceed x0"));
        }
        if !(d.y0 < d.y1) || ![d.y0, d.y1].iter().all(|v| v.is_finite()) {
            return Err(Error::validation("mesh.y1", "y1 must exceed y0"));
        }
        if self.nx == 0 {
            return Err(Error::validation("mesh.nx", "must be at least 1"));
        }
        if self.ny == 0 {
            return Err(Error::validation("mesh.ny", "must be at least 1"));
        }
        match self.source {
            SourceSpec::Constant { value } if !value.is_finite() => {
                return Err(Error::validation("source.value", "must be finite"))
            }
            SourceSpec::PiecewiseX { split, left, right }
                if ![split, left, right].iter().all(|v| v.is_finite()) =>
            {
                return Err(Error::validation("source", "piecewise values must be finite"))
            }
            SourceSpec::Radial { slope, .. } if !(slope >= 0.0) => {
                return Err(Error::validation("source.slope", "radial profiles must be nonincreasing"))
            }
            _ => {}
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::validation("problem.delta", "delta must be nonnegative"));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::validation("problem.p", "p must exceed 1"));
        }
        self.optimization.validate(d.area()).map_err(prefix("optimize"))?;
        self.state.validate().map_err(prefix("state"))?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<StructuredMesh> {
        StructuredMesh::new(self.domain, self.nx, self.ny)
    }

    pub fn space(&self) -> Result<FemSpace> {
        Ok(FemSpace::new(self.mesh()?))
    }

    pub fn source_field(&self, mesh: &StructuredMesh) -> Result<ScalarField> {
        self.source.to_source(mesh)?.interpolate(mesh)
    }

    pub fn design_problem(&self) -> Result<DesignProblem> {
        let space = self.space()?;
        let f = self.source_field(space.mesh())?;
        DesignProblem::new(space, f, self.delta, self.p, self.state)
    }

    /// Canonical configuration text. Parsing it reproduces `self` (apart
    /// from the `defaulted` bookkeeping).
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let d = &self.domain;
        let _ = writeln!(s, "[mesh]");
        let _ = writeln!(s, "x0 = {:?}\ny0 = {:?}\nx1 = {:?}\ny1 = {:?}", d.x0, d.y0, d.x1, d.y1);
        let _ = writeln!(s, "nx = {}\nny = {}", self.nx, self.ny);
        let _ = writeln!(s, "\n[source]\nkind = {}", self.source.kind());
        match &self.source {
            SourceSpec::Constant { value } => {
                let _ = writeln!(s, "value = {value:?}");
            }
            SourceSpec::PiecewiseX { split, left, right } => {
                let _ = writeln!(s, "split = {split:?}\nleft = {left:?}\nright = {right:?}");
            }
            SourceSpec::Radial {
                center_x,
                center_y,
                peak,
                slope,
            } => {
                let _ = writeln!(
                    s,
                    "center_x = {center_x:?}\ncenter_y = {center_y:?}\npeak = {peak:?}\nslope = {slope:?}"
                );
            }
            SourceSpec::Tabulated { file } => {
                let _ = writeln!(s, "file = {}", file.display());
            }
        }
        let _ = writeln!(s, "\n[problem]\ndelta = {:?}\np = {:?}", self.delta, self.p);
        let o = &self.optimization;
        let _ = writeln!(
            s,
            "\n[optimize]\nM = {:?}\nalpha = {:?}\nm = {:?}\noptimizer = {}\nmax_iter = {}\nmove_limit = {:?}\nkkt_tol = {:?}\nobjective_tol = {:?}\nstall_window = {}",
            o.upper_bound,
            o.alpha,
            o.volume_fraction,
            o.kind.name(),
            o.max_outer_iter,
            o.move_limit,
            o.kkt_tol,
            o.objective_tol,
            o.stall_window
        );
        let st = &self.state;
        let guard = st.zero_norm_guard.map_or_else(|| "auto".to_string(), |g| format!("{g:?}"));
        let _ = writeln!(
            s,
            "\n[state]\nfixed_point_tol = {:?}\nfixed_point_max_iter = {}\nlinear_tol = {:?}\nzero_norm_guard = {}\nrelaxation = {:?}",
            st.fixed_point_tol, st.fixed_point_max_iter, st.linear_tol, guard, st.relaxation
        );
        let _ = writeln!(s, "\n[output]\ndir = {}\nseed = {}", self.output_dir.display(), self.seed);
        s
    }
}

fn prefix(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}
