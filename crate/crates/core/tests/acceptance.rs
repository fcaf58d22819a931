//! Acceptance run: every criterion prints one PASS/FAIL line, then the test
//! fails if any of them did. Run with `--nocapture` to see the lines on success.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use biotvem_core::assembly::Discretization;
use biotvem_core::hdiv_space::HdivSpace;
use biotvem_core::hr_space::HrSpace;
use biotvem_core::mesh::{build_structured_quad, example1_boundary};
use biotvem_core::model::{MaterialParams, SymTensor2};
use biotvem_core::polybasis::{dim_p, polygon_quadrature, CellBasis, CellFrame};
use biotvem_core::saddle::run_trials;
use biotvem_core::solver::{picard, FixedPointConfig};
use biotvem_core::verification::{
    balance_residuals, example1_case, project_scalar, project_vector, run_study, RateTable,
};
use biotvem_core::{DMat, DVec, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Star-shaped polygon with `3..=10` vertices, random size and position.
fn random_polygon(rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let n = rng.gen_range(3..=10);
    let gaps = loop {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
        let total: f64 = w.iter().sum();
        let g: Vec<f64> = w.iter().map(|x| 2.0 * PI * x / total).collect();
        if g.iter().all(|a| *a < 0.9 * PI) {
            break g;
        }
    };
    let scale = rng.gen_range(0.05..2.0);
    let center = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let start = rng.gen_range(0.0..2.0 * PI);
    let mut theta = start;
    gaps.iter()
        .map(|g| {
            let r = scale * rng.gen_range(0.5..1.0);
            let p = center + Vec2::new(theta.cos(), theta.sin()) * r;
            theta += g;
            p
        })
        .collect()
}

fn random_params(rng: &mut ChaCha8Rng) -> MaterialParams {
    MaterialParams {
        mu: rng.gen_range(0.2..5.0),
        lambda: rng.gen_range(0.0..50.0),
        alpha: rng.gen_range(0.0..2.0),
        beta: rng.gen_range(0.0..2.0),
        s0: rng.gen_range(0.1..2.0),
        ..MaterialParams::default()
    }
}

fn cell(pts: &[Vec2], k: usize, p: &MaterialParams) -> CellBasis {
    CellBasis::new(CellFrame::from_polygon(pts).unwrap(), k, p).unwrap()
}

fn criterion1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let pts = random_polygon(&mut rng);
        let p = random_params(&mut rng);
        for k in 1..=2 {
            let cb = cell(&pts, k, &p);
            let hr = HrSpace::new(&cb, &p).unwrap();
            for i in 0..cb.tilde.len() {
                let dofs = hr.interpolate(&cb, &|x| HrSpace::tilde_values(&cb, x)[i], None).unwrap();
                let mut c = hr.project(&dofs);
                c[i] -= 1.0;
                worst = worst.max(c.amax());
            }
            let hd = HdivSpace::new(&cb).unwrap();
            let np = dim_p(k);
            for idx in 0..2 * np {
                let m = |x: Vec2| {
                    let v = cb.mono.eval(idx % np, x);
                    if idx < np { Vec2::new(v, 0.0) } else { Vec2::new(0.0, v) }
                };
                let mut c = hd.project(&hd.interpolate(&cb, &m).unwrap());
                c[idx] -= 1.0;
                worst = worst.max(c.amax());
            }
        }
    }
    let time = t0.elapsed();
    outcome(
        worst <= 1e-11 && time < Duration::from_secs(10),
        format!("200 polygons, worst relative error {worst:.3e} (<= 1e-11), {:.2} s (< 10 s)", time.as_secs_f64()),
    )
}

fn wave(rng: &mut ChaCha8Rng) -> (f64, Vec2, f64) {
    (rng.gen_range(0.5..2.0), Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)), rng.gen_range(0.0..2.0 * PI))
}

fn l2_rel(gram: &DMat, got: &DVec, exact: &DVec) -> f64 {
    let e = got - exact;
    (e.dot(&(gram * &e)) / exact.dot(&(gram * exact))).sqrt()
}

fn criterion2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let p = MaterialParams::default();
    let mut worst_flux = 0.0f64;
    let mut worst_stress = 0.0f64;
    for k in 1..=2 {
        for _ in 0..20 {
            let pts = random_polygon(&mut rng);
            let cb = cell(&pts, k, &p);
            let fine = polygon_quadrature(&pts, 24).unwrap();

            let (a1, w1, c1) = wave(&mut rng);
            let (a2, w2, c2) = wave(&mut rng);
            let xi = |x: Vec2| Vec2::new(a1 * (w1.dot(&x) + c1).sin(), a2 * (w2.dot(&x) + c2).cos());
            let div_xi = |x: Vec2| a1 * w1.x * (w1.dot(&x) + c1).cos() - a2 * w2.y * (w2.dot(&x) + c2).sin();
            let hd = HdivSpace::new(&cb).unwrap();
            let got = hd.divergence(&hd.interpolate(&cb, &xi).unwrap());
            let exact = project_scalar(&cb, &fine, &div_xi);
            worst_flux = worst_flux.max(l2_rel(&cb.gram_k(), &got, &exact));

            let (b1, v1, d1) = wave(&mut rng);
            let (b2, v2, d2) = wave(&mut rng);
            let (b3, v3, d3) = wave(&mut rng);
            let sigma = |x: Vec2| {
                SymTensor2::new(b1 * (v1.dot(&x) + d1).sin(), b2 * (v2.dot(&x) + d2).cos(), b3 * (v3.dot(&x) + d3).sin())
            };
            let div_sigma = |x: Vec2| {
                Vec2::new(
                    b1 * v1.x * (v1.dot(&x) + d1).cos() - b2 * v2.y * (v2.dot(&x) + d2).sin(),
                    -b2 * v2.x * (v2.dot(&x) + d2).sin() + b3 * v3.y * (v3.dot(&x) + d3).cos(),
                )
            };
            let hr = HrSpace::new(&cb, &p).unwrap();
            let got = hr.divergence(&hr.interpolate(&cb, &sigma, None).unwrap());
            let exact = project_vector(&cb, &fine, &div_sigma);
            worst_stress = worst_stress.max(l2_rel(&cb.vector_gram_k(), &got, &exact));
        }
    }
    outcome(
        worst_flux.max(worst_stress) <= 1e-9,
        format!("40 flux and 40 stress fields, worst relative errors {worst_flux:.3e} / {worst_stress:.3e} (<= 1e-9)"),
    )
}

fn criterion3() -> Outcome {
    let case = example1_case(MaterialParams::default());
    let d = Discretization::new(build_structured_quad(16).tag_boundary(example1_boundary), 1, case.params).unwrap();
    let (state, report) = match picard(&d, &case, &FixedPointConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("solve failed: {e}")),
    };
    let r = balance_residuals(&d, &state, &report.biot_phi, &case).relative();
    outcome(
        r.iter().all(|v| *v <= 1e-9),
        format!("16x16, k=1, worst cell residual / data scale: momentum {:.3e}, mass {:.3e}, diffusion {:.3e} (<= 1e-9)", r[0], r[1], r[2]),
    )
}

fn study(k: usize, params: MaterialParams) -> Result<(RateTable, Duration), String> {
    let t0 = Instant::now();
    let meshes = [8, 16, 32, 64].into_iter().map(|n| (n, build_structured_quad(n))).collect();
    let table = run_study(meshes, k, &example1_case(params), &FixedPointConfig::default()).map_err(|e| e.to_string())?;
    Ok((table, t0.elapsed()))
}

fn iteration_list(t: &RateTable) -> Vec<usize> {
    t.levels.iter().map(|l| l.report.iterations).collect()
}

fn criterion4(k1: &Result<(RateTable, Duration), String>, k2: &Result<(RateTable, Duration), String>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, res, window, budget) in [(1, k1, (1.85, 2.15), 180), (2, k2, (2.8, 3.2), 900)] {
        let (t, time) = match res {
            Ok(r) => r,
            Err(e) => {
                pass = false;
                parts.push(format!("k={k}: {e}"));
                continue;
            }
        };
        let fin = t.final_rates().unwrap()[0];
        let min_comp = t
            .levels
            .iter()
            .filter_map(|l| l.rates)
            .flat_map(|r| r[1..].to_vec())
            .fold(f64::INFINITY, f64::min);
        let ok = (window.0..=window.1).contains(&fin)
            && min_comp >= k as f64 - 0.15
            && t.all_converged()
            && time.as_secs() < budget;
        pass &= ok;
        parts.push(format!(
            "k={k}: final total rate {fin:.4} in [{}, {}], min component rate {min_comp:.4} (>= {}), {:.0} s (< {budget} s)",
            window.0,
            window.1,
            k as f64 - 0.15,
            time.as_secs_f64()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion5(k1: &Result<(RateTable, Duration), String>) -> Outcome {
    match k1 {
        Ok((t, _)) => {
            let its = iteration_list(t);
            let last = t.levels.last().unwrap();
            outcome(
                t.all_converged() && t.max_iterations() <= 5,
                format!(
                    "k=1 iterations per level {its:?} (<= 5), increments at n=64 {:?}",
                    last.report.increments.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
                ),
            )
        }
        Err(e) => outcome(false, e.clone()),
    }
}

fn criterion6() -> Outcome {
    let base = MaterialParams::default();
    let runs = [
        ("lambda=1e6", MaterialParams { lambda: 1e6, ..base }),
        ("s0=1e-8", MaterialParams { s0: 1e-8, ..base }),
        ("alpha=1e-6", MaterialParams { alpha: 1e-6, ..base }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in runs {
        match study(1, p) {
            Ok((t, _)) => {
                let fin = t.final_rates().unwrap()[0];
                let ok = fin >= 1.85 && t.max_iterations() <= 5 && t.all_converged();
                pass &= ok;
                parts.push(format!("{name}: final rate {fin:.4} (>= 1.85), iterations {:?} (<= 5)", iteration_list(&t)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: solver failure {e}"));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion7() -> Outcome {
    let t0 = Instant::now();
    let s = run_trials(100, 40, 1000, 7);
    let time = t0.elapsed();
    outcome(
        s.passed == 100 && s.trials == 100 && time < Duration::from_secs(5),
        format!(
            "{}/{} instances, max residual {:.3e}, max homogeneous norm {:.3e}, {:.2} s (< 5 s)",
            s.passed,
            s.trials,
            s.max_residual,
            s.max_homogeneous,
            time.as_secs_f64()
        ),
    )
}

fn criterion8() -> Outcome {
    let case = example1_case(MaterialParams { beta: 0.0, eta1: 0.0, ..MaterialParams::default() });
    let d = Discretization::new(build_structured_quad(16).tag_boundary(example1_boundary), 1, case.params).unwrap();
    match picard(&d, &case, &FixedPointConfig::default()) {
        Ok((_, r)) => {
            let second = r.increments.get(1).copied().unwrap_or(f64::INFINITY);
            let res = r.max_residual();
            outcome(
                r.converged && r.iterations == 2 && second <= 10.0 * res,
                format!("{} iterations (== 2), second increment {second:.3e} (<= 10 x residual {res:.3e})", r.iterations),
            )
        }
        Err(e) => outcome(false, format!("solve failed: {e}")),
    }
}

#[test]
fn acceptance() {
    let k1 = study(1, MaterialParams::default());
    let k2 = study(2, MaterialParams::default());
    let results = [
        ("1 projection exactness", criterion1()),
        ("2 commutativity", criterion2()),
        ("3 conservation", criterion3()),
        ("4 convergence rates", criterion4(&k1, &k2)),
        ("5 fixed-point iterations", criterion5(&k1)),
        ("6 parameter robustness", criterion6()),
        ("7 saddle-point theorem", criterion7()),
        ("8 degenerate decoupling", criterion8()),
    ];
    for (name, o) in &results {
        println!("criterion {name}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<_> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
