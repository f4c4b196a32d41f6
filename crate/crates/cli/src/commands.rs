use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use weylctl::gate_io::parse_gate;
use weylctl::geometry::EquivalenceClassTable;
use weylctl::krotov::{estimate_a, optimize_observed, IterationRecord, StopReason};
use weylctl::models::nonlocal_phase;
use weylctl::propagation::propagate_forward;
use weylctl::types::{projected_gate, unitarity_defect, ControlField};
use weylctl::functionals::j_final;

use crate::config::{GuessKind, RunConfig};
use crate::error::CliError;
use crate::pulse::write_pulse;
use crate::report::{gate_report, invariants_line};

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.max_iters {
            cfg.krotov.max_iters = m;
        }
    }
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("weylctl_out"))
}

pub fn invariants(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let u = parse_gate(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(invariants_line(&u)?)
}

pub fn table() -> String {
    let mut s = String::from("class      cx        cy        cz        g1        g2        g3\n");
    for e in EquivalenceClassTable::new().entries() {
        s.push_str(&format!(
            "{:<8} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}\n",
            e.class.name(),
            e.weyl.cx,
            e.weyl.cy,
            e.weyl.cz,
            e.invariants.g1 + 0.0,
            e.invariants.g2 + 0.0,
            e.invariants.g3 + 0.0
        ));
    }
    s
}

/// Outcome of `optimize`: the exit code and a summary line.
#[derive(Debug)]
pub struct RunSummary {
    pub exit_code: i32,
    pub message: String,
    pub output_dir: PathBuf,
}

fn stop_code(stop: StopReason) -> i32 {
    match stop {
        StopReason::Converged => 0,
        StopReason::Stalled | StopReason::MaxIters => 2,
    }
}

fn write_weyl_row(w: &mut impl Write, rec: &IterationRecord) -> std::io::Result<()> {
    match rec.weyl {
        Some(c) => writeln!(w, "{},{:.16e},{:.16e},{:.16e}", rec.iteration, c.cx, c.cy, c.cz),
        None => writeln!(w, "{},nan,nan,nan", rec.iteration),
    }
}

pub fn optimize(config: &Path, over: &Overrides) -> Result<RunSummary, CliError> {
    let mut cfg = RunConfig::load(config)?;
    over.apply(&mut cfg);
    let problem = cfg.problem()?;
    let mut resolved = cfg.resolved();
    if resolved.krotov.estimate_a {
        let est = estimate_a(&problem, &cfg.krotov_config()?, cfg.seed)?;
        log::info!(
            "A estimate {} (curvature bound {:.3e}{})",
            est.numeric,
            est.curvature_bound,
            if est.fell_back { ", fallback" } else { "" }
        );
        resolved.krotov.a = Some(est.numeric);
        resolved.krotov.estimate_a = false;
    }
    let kcfg = resolved.krotov_config()?;

    let dir = output_dir(&resolved);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config_effective.toml"), resolved.to_toml())?;
    let mut log_file = BufWriter::new(File::create(dir.join("convergence.log"))?);
    let mut weyl_file = BufWriter::new(File::create(dir.join("weyl_trajectory.csv"))?);
    writeln!(weyl_file, "iteration,cx,cy,cz")?;

    let mut io_error: Option<std::io::Error> = None;
    let mut last_fields: Vec<ControlField> = problem.guess.clone();
    let mut observer = |rec: &IterationRecord, fields: &[ControlField]| {
        let res = writeln!(log_file, "{rec}")
            .and_then(|_| write_weyl_row(&mut weyl_file, rec))
            .and_then(|_| log_file.flush());
        if let Err(e) = res {
            io_error.get_or_insert(e);
        }
        last_fields = fields.to_vec();
        log::debug!("{rec}");
    };
    let outcome = optimize_observed(&problem, &kcfg, &mut observer);
    drop(observer);
    log_file.flush()?;
    weyl_file.flush()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            // keep the last accepted fields for inspection
            write_pulse(&dir.join("pulse_final.csv"), &last_fields)?;
            return Err(e.into());
        }
    };
    write_pulse(&dir.join("pulse_final.csv"), &result.fields)?;
    fs::write(dir.join("gate_report.txt"), gate_report(&result.gate, &problem.target))?;
    let last = result.history.last().expect("history has the guess");
    Ok(RunSummary {
        exit_code: stop_code(result.stop),
        message: format!("stop={:?} {last}", result.stop),
        output_dir: dir,
    })
}

/// Propagates a stored pulse and writes `dynamics.csv`; returns the stdout summary.
pub fn replay(config: &Path, pulse: &Path, over: &Overrides) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(config)?;
    over.apply(&mut cfg);
    cfg.guess.kind = GuessKind::File;
    cfg.guess.file = Some(pulse.to_path_buf());
    let problem = cfg.problem()?;
    let traj = propagate_forward(
        problem.model.as_ref(),
        &problem.guess,
        &problem.initial_states(),
        problem.method,
    )?;
    let dir = output_dir(&cfg);
    fs::create_dir_all(&dir)?;

    let n_logical = problem.n_logical();
    let mut w = csv::Writer::from_path(dir.join("dynamics.csv"))?;
    let mut header = vec!["t".to_string()];
    for k in 0..n_logical {
        for j in 0..n_logical {
            header.push(format!("re_{j}_{k}"));
            header.push(format!("im_{j}_{k}"));
        }
    }
    header.extend((0..n_logical).map(|k| format!("avoid_{k}")));
    w.write_record(&header)?;

    let grid = problem.grid;
    let mut avoid_integral = 0.0;
    for i in 0..grid.n_nodes() {
        let states = traj.at(i);
        let u = projected_gate(&states, &problem.logical)?;
        let mut row = vec![format!("{:.16e}", grid.node(i))];
        for k in 0..n_logical {
            for j in 0..n_logical {
                row.push(format!("{:.16e}", u[(j, k)].re));
                row.push(format!("{:.16e}", u[(j, k)].im));
            }
        }
        let pops: Vec<f64> = states
            .iter()
            .map(|s| problem.avoid.as_ref().map_or(0.0, |p| p.population(s)))
            .collect();
        avoid_integral += grid.trapezoid_weight(i) * pops.iter().sum::<f64>();
        row.extend(pops.iter().map(|p| format!("{p:.16e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    avoid_integral /= n_logical as f64 * grid.t_final();

    let final_states = traj.final_states();
    let j_t = j_final(&final_states, &problem.target, &problem.logical)?;
    let u = projected_gate(&final_states, &problem.logical)?;
    let chi = nonlocal_phase(&u).map_or_else(|_| "nan".to_string(), |x| format!("{x:e}"));
    Ok(format!(
        "J_T={j_t:e} avoid={avoid_integral:e} chi={chi} defect={:e}",
        unitarity_defect(&u)
    ))
}
