//! Run log of an optimization: spec echo, one history row per iterate and
//! a final summary.
//!
//! ```text
//! == spec ==
//! <canonical configuration>
//! == history ==
//! iter,objective,volume,kkt,state_iters
//! 0,-0.0123,0.3,0.8,1
//! == summary ==
//! objective = -0.0297
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{parse_config, ProblemSpec};
use crate::error::{Error, Result};
use crate::export::format_sig9;
use crate::optimize::{IterationRecord, OptimizationResult};

pub const HISTORY_HEADER: &str = "iter,objective,volume,kkt,state_iters";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub objective: f64,
    /// `∫e^{-αV} − m` at the final iterate.
    pub constraint: f64,
    pub volume: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: String,
    pub wall_time_s: f64,
    /// How the reported objective is defined.
    pub objective_reading: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub spec_echo: String,
    pub rows: Vec<IterationRecord>,
    pub summary: Option<RunSummary>,
}

impl RunLog {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self {
            spec_echo: spec.to_config_string(),
            rows: Vec::new(),
            summary: None,
        }
    }

    pub fn push(&mut self, row: IterationRecord) {
        self.rows.push(row);
    }

    pub fn finish(&mut self, result: &OptimizationResult, spec: &ProblemSpec, wall_time_s: f64) {
        let vol = result.constraint() + spec.optimization.volume_fraction;
        let reading = if spec.delta > 0.0 {
            "objective = -int f u + delta * ||u||_{p'} at the worst-case state (delta term included)"
        } else {
            "objective = -int f u at the state (compliance)"
        };
        self.summary = Some(RunSummary {
            objective: result.objective(),
            constraint: result.constraint(),
            volume: vol,
            iterations: result.iterations,
            converged: result.converged,
            termination: result.termination.name().to_string(),
            wall_time_s,
            objective_reading: reading.to_string(),
        });
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        parse_config(&self.spec_echo)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("== spec ==\n");
        s.push_str(&self.spec_echo);
        if !self.spec_echo.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("== history ==\n");
        s.push_str(HISTORY_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{}",
                r.iteration, r.objective, r.volume, r.kkt, r.state_iterations
            );
        }
        if let Some(sum) = &self.summary {
            s.push_str("== summary ==\n");
            let _ = writeln!(s, "objective = {:?}", sum.objective);
            let _ = writeln!(s, "constraint = {:?}", sum.constraint);
            let _ = writeln!(s, "volume = {:?}", sum.volume);
            let _ = writeln!(s, "iterations = {}", sum.iterations);
            let _ = writeln!(s, "converged = {}", sum.converged);
            let _ = writeln!(s, "termination = {}", sum.termination);
            let _ = writeln!(s, "wall_time_s = {}", format_sig9(sum.wall_time_s));
            let _ = writeln!(s, "objective_reading = {}", sum.objective_reading);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Part {
            None,
            Spec,
            History,
            Summary,
        }
        let mut part = Part::None;
        let mut spec_echo = String::new();
        let mut rows = Vec::new();
        let mut kv = std::collections::HashMap::new();
        let bad = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        for (idx, line) in text.lines().enumerate() {
            let n = idx + 1;
            match line {
                "== spec ==" => part = Part::Spec,
                "== history ==" => part = Part::History,
                "== summary ==" => part = Part::Summary,
                _ => match part {
                    Part::None => return Err(bad(n, "expected `== spec ==`")),
                    Part::Spec => {
                        spec_echo.push_str(line);
                        spec_echo.push('\n');
                    }
                    Part::History => {
                        if line == HISTORY_HEADER {
                            continue;
                        }
                        let f: Vec<&str> = line.split(',').collect();
                        if f.len() != 5 {
                            return Err(bad(n, "history rows have five columns"));
                        }
                        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "malformed number"));
                        rows.push(IterationRecord {
                            iteration: f[0].parse().map_err(|_| bad(n, "malformed iteration"))?,
                            objective: num(f[1])?,
                            volume: num(f[2])?,
                            kkt: num(f[3])?,
                            state_iterations: f[4].parse().map_err(|_| bad(n, "malformed count"))?,
                        });
                    }
                    Part::Summary => {
                        let (k, v) = line.split_once(" = ").ok_or_else(|| bad(n, "expected `key = value`"))?;
                        kv.insert(k.to_string(), (n, v.to_string()));
                    }
                },
            }
        }
        let summary = if kv.is_empty() {
            None
        } else {
            let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(0, &format!("summary lacks `{k}`")));
            let num = |k: &str| -> Result<f64> {
                let (n, v) = get(k)?;
                v.parse().map_err(|_| bad(n, &format!("malformed `{k}`")))
            };
            let (_, iterations) = get("iterations")?;
            let (_, converged) = get("converged")?;
            Some(RunSummary {
                objective: num("objective")?,
                constraint: num("constraint")?,
                volume: num("volume")?,
                iterations: iterations.parse().map_err(|_| bad(0, "malformed `iterations`"))?,
                converged: converged == "true",
                termination: get("termination")?.1,
                wall_time_s: num("wall_time_s")?,
                objective_reading: get("objective_reading")?.1,
            })
        };
        Ok(Self {
            spec_echo,
            rows,
            summary,
        })
    }
}
