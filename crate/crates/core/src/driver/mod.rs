//! Solve, estimate, mark, refine.

mod output;

use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimator::{estimate_mixed, estimate_primal, true_error_mixed, true_error_primal, ErrorEstimate};
use crate::hdg_mixed::{numerical_flux_mixed, solve_mixed, MixedOptions};
use crate::hdg_primal::{numerical_flux_primal, solve_primal, PrimalOptions};
use crate::mesh::{refine, Mesh};
use crate::postprocess::EquilibrationReport;
use crate::problem::ProblemSpec;
use crate::skeleton::check_conservation;

pub use self::output::{write_convergence_csv, write_convergence_svg, write_estimate_csv, CSV_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeOptions {
    Primal(PrimalOptions),
    Mixed(MixedOptions),
}

impl SchemeOptions {
    pub fn k(&self) -> usize {
        match self {
            SchemeOptions::Primal(o) => o.k,
            SchemeOptions::Mixed(o) => o.k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marking {
    Dorfler(f64),
    Uniform,
}

/// Smallest set of elements whose indicators sum to at least `theta` times
/// the total, taken in decreasing order (ties by element index). Elements
/// with a zero indicator are never marked.
pub fn dorfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indicators.len()).filter(|&i| indicators[i] > 0.0).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| indicators[i]).sum();
    let target = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for i in order {
        if sum >= target && !marked.is_empty() {
            break;
        }
        sum += indicators[i];
        marked.push(i);
    }
    marked.sort_unstable();
    marked
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scheme: SchemeOptions,
    pub marking: Marking,
    /// Number of solves.
    pub steps: usize,
    /// Stop once a solve exceeds this many total DOFs.
    pub max_dofs: Option<usize>,
    /// Record wall-clock seconds per step.
    pub timing: bool,
}

/// Checks of the discrete invariants on one mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    pub equilibration: EquilibrationReport,
    /// Worst relative element conservation residual of the numerical flux.
    pub conservation: f64,
    /// Worst relative jump of the numerical flux across interior facets.
    pub flux_jump: f64,
    /// Relative residual of the skeleton solve.
    pub solver_residual: f64,
    /// Largest off-facet jump contribution (mixed single-facet runs).
    pub off_facet_jump: Option<f64>,
}

/// Everything recorded about one solve.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub nelems: usize,
    pub ndof_total: usize,
    pub ndof_skeleton: usize,
    /// `max_K h_K`.
    pub h_max: f64,
    pub error: Option<f64>,
    pub eta: f64,
    pub eta_cf: f64,
    pub eta_nc: f64,
    pub eta_jump: f64,
    pub seconds: Option<f64>,
    pub invariants: Invariants,
    pub mesh: Mesh,
    pub estimate: ErrorEstimate,
}

impl StepRecord {
    pub fn effectivity(&self) -> Option<f64> {
        self.error.map(|e| self.eta / e)
    }
}

/// Solve and estimate on the mesh of `problem`.
pub fn solve_step(problem: &ProblemSpec, scheme: &SchemeOptions, step: usize) -> Result<StepRecord> {
    let mesh = &problem.mesh;
    let with_exact = problem.exact.is_some();
    let (estimate, error, ndof_total, ndof_skeleton, conservation, residual) = match scheme {
        SchemeOptions::Primal(o) => {
            let sol = solve_primal(problem, o)?;
            let est = estimate_primal(problem, &sol)?;
            let err = if with_exact { Some(true_error_primal(problem, &sol)?.total) } else { None };
            let cons = check_conservation(mesh, &numerical_flux_primal(&sol)?, &sol.loads);
            (est, err, sol.ndof_total(), sol.n_skeleton, cons, sol.residual)
        }
        SchemeOptions::Mixed(o) => {
            let sol = solve_mixed(problem, o)?;
            let est = estimate_mixed(problem, &sol)?;
            let err = if with_exact { Some(true_error_mixed(problem, &sol)?.total) } else { None };
            let cons = check_conservation(mesh, &numerical_flux_mixed(&sol)?, &sol.loads);
            (est, err, sol.ndof_total(), sol.n_skeleton, cons, sol.residual)
        }
    };
    let off_facet_jump = match scheme {
        SchemeOptions::Mixed(o) if o.stabilization == crate::hdg_mixed::MixedStabilization::SingleFacet => {
            estimate.off_facet_jump.as_ref().map(|v| v.iter().fold(0.0, |a: f64, b| a.max(*b)))
        }
        _ => None,
    };
    Ok(StepRecord {
        step,
        nelems: mesh.num_elements(),
        ndof_total,
        ndof_skeleton,
        h_max: (0..mesh.num_elements())
            .map(|e| mesh.element_geometry(e).diameter)
            .fold(0.0, f64::max),
        error,
        eta: estimate.eta(),
        eta_cf: estimate.eta_cf_total(),
        eta_nc: estimate.eta_nc_total(),
        eta_jump: estimate.eta_jump(),
        seconds: None,
        invariants: Invariants {
            equilibration: estimate.equilibration,
            conservation: conservation.max_relative_residual(),
            flux_jump: conservation.max_jump,
            solver_residual: residual,
            off_facet_jump,
        },
        mesh: mesh.clone(),
        estimate,
    })
}

/// Run the adaptive loop, calling `on_step` after every solve.
pub fn adaptive_loop(
    problem: &ProblemSpec,
    config: &RunConfig,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<Vec<StepRecord>> {
    if config.steps == 0 {
        return Err(Error::Config("at least one step is required".into()));
    }
    if let Marking::Dorfler(theta) = config.marking {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Config(format!("Dorfler parameter must lie in (0, 1], got {theta}")));
        }
    }
    let mut current = problem.clone();
    let mut records = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let start = Instant::now();
        let mut rec = solve_step(&current, &config.scheme, step)?;
        if config.timing {
            rec.seconds = Some(start.elapsed().as_secs_f64());
        }
        log::info!(
            "step {step}: {} elements, {} dofs, eta = {:.4e}",
            rec.nelems,
            rec.ndof_total,
            rec.eta
        );
        on_step(&rec)?;
        let done = step + 1 == config.steps || config.max_dofs.is_some_and(|m| rec.ndof_total >= m);
        if !done {
            let marked = match config.marking {
                Marking::Uniform => (0..rec.nelems).collect(),
                Marking::Dorfler(theta) => dorfler_mark(&rec.estimate.indicators(), theta),
            };
            current = current.with_mesh(refine(&current.mesh, &marked)?);
        }
        records.push(rec);
        if done {
            break;
        }
    }
    Ok(records)
}

/// Run the loop and write the per-step files and the convergence table into
/// `out`.
pub fn run_to_dir(problem: &ProblemSpec, config: &RunConfig, out: &Path, vtu: bool) -> Result<Vec<StepRecord>> {
    std::fs::create_dir_all(out)?;
    let records = adaptive_loop(problem, config, |rec| output::write_step(out, rec, vtu))?;
    write_convergence_csv(&records, &out.join("convergence.csv"))?;
    write_convergence_svg(&records, &out.join("convergence.svg"))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dorfler_examples() {
        assert_eq!(dorfler_mark(&[9.0, 4.0, 1.0, 1.0], 0.5), vec![0]);
        assert_eq!(dorfler_mark(&[4.0, 4.0, 4.0, 4.0], 0.5), vec![0, 1]);
        assert_eq!(dorfler_mark(&[1.0, 0.0, 3.0, 2.0], 1.0), vec![0, 2, 3]);
        assert_eq!(dorfler_mark(&[1.0, 3.0, 3.0], 0.5), vec![1, 2]);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn loop_stops_at_dof_limit() {
        let p = ProblemSpec::lshape();
        let cfg = RunConfig {
            scheme: SchemeOptions::Primal(PrimalOptions::new(1)),
            marking: Marking::Dorfler(0.5),
            steps: 20,
            max_dofs: Some(300),
            timing: false,
        };
        let recs = adaptive_loop(&p, &cfg, |_| Ok(())).unwrap();
        assert!(recs.len() < 20);
        assert!(recs.last().unwrap().ndof_total >= 300);
        assert!(recs[..recs.len() - 1].iter().all(|r| r.ndof_total < 300));
        assert!(recs.windows(2).all(|w| w[1].nelems > w[0].nelems));
    }

    #[test]
    fn bad_theta_rejected() {
        let cfg = RunConfig {
            scheme: SchemeOptions::Primal(PrimalOptions::new(1)),
            marking: Marking::Dorfler(1.5),
            steps: 2,
            max_dofs: None,
            timing: false,
        };
        assert!(adaptive_loop(&ProblemSpec::lshape(), &cfg, |_| Ok(())).is_err());
    }
}
