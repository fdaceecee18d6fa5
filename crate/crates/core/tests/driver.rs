use proptest::prelude::*;

use hdg_core::driver::{adaptive_loop, dorfler_mark, loglog_slope, Marking, RunConfig, SchemeOptions, StepRecord};
use hdg_core::hdg_mixed::{MixedOptions, MixedStabilization};
use hdg_core::hdg_primal::PrimalOptions;
use hdg_core::mesh::{refine, Mesh};
use hdg_core::problem::ProblemSpec;

fn run(problem: &ProblemSpec, scheme: SchemeOptions, marking: Marking, steps: usize) -> Vec<StepRecord> {
    let config = RunConfig {
        scheme,
        marking,
        steps,
        max_dofs: None,
        timing: false,
    };
    adaptive_loop(problem, &config, |_| Ok(())).unwrap()
}

#[test]
fn smooth_primal_rate_against_dofs() {
    let recs = run(
        &ProblemSpec::square_smooth(),
        SchemeOptions::Primal(PrimalOptions::new(2)),
        Marking::Uniform,
        5,
    );
    let n: Vec<f64> = recs.iter().map(|r| r.ndof_total as f64).collect();
    let e: Vec<f64> = recs.iter().map(|r| r.error.unwrap()).collect();
    let slope = loglog_slope(&n, &e);
    assert!((slope + 1.0).abs() <= 0.15, "slope {slope}");
}

#[test]
fn smooth_mixed_effectivity() {
    let recs = run(
        &ProblemSpec::square_smooth(),
        SchemeOptions::Mixed(MixedOptions::new(1, MixedStabilization::Uniform)),
        Marking::Uniform,
        6,
    );
    for r in &recs[1..] {
        let eff = r.effectivity().unwrap();
        assert!((1.0..=3.0).contains(&eff), "step {}: {eff}", r.step);
    }
}

#[test]
fn lshape_high_order_effectivity() {
    let recs = run(
        &ProblemSpec::lshape(),
        SchemeOptions::Primal(PrimalOptions::new(4)),
        Marking::Dorfler(0.5),
        10,
    );
    for r in &recs[2..] {
        let eff = r.effectivity().unwrap();
        assert!((1.0..=3.0).contains(&eff), "step {}: {eff}", r.step);
    }
}

/// Log-log interpolation of the uniform error curve at `n` skeleton DOFs.
fn uniform_error_at(uniform: &[StepRecord], n: f64) -> f64 {
    let i = uniform
        .windows(2)
        .position(|w| w[1].ndof_skeleton as f64 >= n)
        .unwrap_or(uniform.len() - 2);
    let (a, b) = (&uniform[i], &uniform[i + 1]);
    let (x0, x1) = ((a.ndof_skeleton as f64).ln(), (b.ndof_skeleton as f64).ln());
    let (y0, y1) = (a.error.unwrap().ln(), b.error.unwrap().ln());
    (y0 + (n.ln() - x0) / (x1 - x0) * (y1 - y0)).exp()
}

#[test]
fn adaptivity_beats_uniform_refinement() {
    let p = ProblemSpec::lshape();
    let scheme = SchemeOptions::Primal(PrimalOptions::new(2));
    let adaptive = run(&p, scheme.clone(), Marking::Dorfler(0.5), 10);
    let uniform = run(&p, scheme, Marking::Uniform, 8);
    for r in &adaptive[4..] {
        let n = r.ndof_skeleton as f64;
        assert!(n <= uniform.last().unwrap().ndof_skeleton as f64);
        let reference = uniform_error_at(&uniform, n);
        assert!(r.error.unwrap() < reference, "step {}: {} vs {reference}", r.step, r.error.unwrap());
    }
}

fn is_conforming(mesh: &Mesh) -> bool {
    let boundary: f64 = mesh
        .facets()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_boundary())
        .map(|(i, _)| mesh.facet_length(i))
        .sum();
    let area: f64 = (0..mesh.num_elements()).map(|e| mesh.signed_area(e)).sum();
    (0..mesh.num_elements()).all(|e| mesh.signed_area(e) > 0.0)
        && (area - 3.0).abs() < 1e-12
        && (boundary - 8.0).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dorfler_set_is_minimal(values in prop::collection::vec(0.0f64..10.0, 1..40), theta in 0.05f64..1.0) {
        let marked = dorfler_mark(&values, theta);
        let total: f64 = values.iter().sum();
        let sum: f64 = marked.iter().map(|&i| values[i]).sum();
        prop_assert!(marked.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(marked.iter().all(|&i| values[i] > 0.0));
        if total > 0.0 {
            prop_assert!(sum >= theta * total * (1.0 - 1e-12));
            let smallest = marked.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(sum - smallest < theta * total);
        }
    }

    #[test]
    fn repeated_refinement_stays_conforming(seed in prop::collection::vec(any::<u32>(), 1..5)) {
        let mut mesh = Mesh::lshape();
        let angle = mesh.min_angle();
        for s in seed {
            let n = mesh.num_elements();
            let marked: Vec<usize> = (0..n).filter(|e| (*e as u32).wrapping_mul(2654435761) ^ s < u32::MAX / 3).collect();
            mesh = refine(&mesh, &marked).unwrap();
            prop_assert!(is_conforming(&mesh));
            prop_assert!(mesh.min_angle() >= angle * (1.0 - 1e-12) / 2.0);
        }
    }
}
