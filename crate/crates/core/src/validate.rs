//! Built-in self checks: small-scale numeric oracles runnable from the CLI.
//!
//! Each check prints one machine-parseable line: name, measured value,
//! tolerance, PASS or FAIL. Suites:
//! - `lse`: smoothed min/max sandwich bounds and translation identity
//! - `quadform`: quadratic-form rate identities against direct formulas
//! - `gradient`: analytic gradients against central finite differences
//! - `fixed_point`: eigen-relation residuals at converged iterates
//! - `split`: invariance of the iteration under the eigenvalue split scalar

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::C64;
use crate::error::Result;
use crate::gpi::{
    gpi_solve, gpi_solve_with_split, gradient, iter_matrices, nepv_residual, GpiConfig,
    GpiProblem, GpiStatus,
};
use crate::secrecy::{
    build_ab, lse_max, lse_min, secrecy_rate_nc, user_rate, LayerAssignment, PrecoderStack,
};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.measured <= self.tolerance
    }

    pub fn render(&self) -> String {
        format!(
            "{} {:.3e} {:.3e} {}",
            self.name,
            self.measured,
            self.tolerance,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&c.render());
            out.push('\n');
        }
        out
    }

    fn record(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            measured,
            tolerance,
        });
    }
}

/// Deliberate defects injected by the canary fixture to prove the checks
/// can fail. Production paths always use `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    None,
    /// Flips the sign of the denominator-operator contribution in the
    /// gradient, emulating a sign slip in the iteration-matrix builder.
    FlipGradientSign,
}

pub const SUITES: &[&str] = &["lse", "quadform", "gradient", "fixed_point", "split"];

/// Runs the self-check suites; `only` restricts to a single suite by name.
pub fn run_suites(only: Option<&str>) -> Result<Report> {
    run_suites_mutated(only, Mutation::None)
}

/// Canary entry point: same suites with an injected defect.
pub fn run_suites_mutated(only: Option<&str>, mutation: Mutation) -> Result<Report> {
    let mut report = Report::default();
    let want = |name: &str| only.map_or(true, |o| o == name);
    if want("lse") {
        lse_suite(&mut report)?;
    }
    if want("quadform") {
        quadform_suite(&mut report)?;
    }
    if want("gradient") {
        gradient_suite(&mut report, mutation)?;
    }
    if want("fixed_point") {
        fixed_point_suite(&mut report)?;
    }
    if want("split") {
        split_suite(&mut report)?;
    }
    Ok(report)
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5e1f_c0de)
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<C64> {
    DVector::from_iterator(
        len,
        (0..len).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
    )
}

fn random_stack(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PrecoderStack {
    PrecoderStack::new(random_vector(rng, n * k), n, k).normalized()
}

fn lse_suite(report: &mut Report) -> Result<()> {
    let mut rng = rng();
    let alpha = 8.0;
    let mut worst_bound = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..100 {
        let m = 2 + rng.gen::<usize>() % 6;
        let xs: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let smin = lse_min(&xs, alpha)?;
        let smax = lse_max(&xs, alpha)?;
        let gap = (m as f64).ln() / alpha;
        // sandwich: min - ln(M)/alpha <= smoothed min <= min, dually for max
        worst_bound = worst_bound
            .max(smin - min)
            .max((min - gap) - smin)
            .max(max - smax)
            .max(smax - (max + gap));
        // translation equivariance
        let c = rng.gen::<f64>() * 4.0 - 2.0;
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        worst_shift = worst_shift.max((lse_min(&shifted, alpha)? - (smin + c)).abs());
    }
    report.record("lse_sandwich_bounds", worst_bound, 1e-12);
    report.record("lse_translation_identity", worst_shift, 1e-9);
    let huge = [1e6, 1e6 + 1.0];
    report.record(
        "lse_overflow_safety",
        if lse_min(&huge, alpha)?.is_finite() { 0.0 } else { 1.0 },
        0.5,
    );
    Ok(())
}

fn quadform_suite(report: &mut Report) -> Result<()> {
    let mut rng = rng();
    let n = 3;
    let k_total = 3;
    let noise_ratio = 0.1;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let h = random_vector(&mut rng, n);
        let stack = random_stack(&mut rng, n, k_total);
        let k = rng.gen::<usize>() % k_total;
        let pair = build_ab(k, &h, n, k_total, noise_ratio);
        let direct = user_rate(k, &h, &stack, noise_ratio)?;
        worst = worst.max((pair.rate(&stack) - direct).abs());
    }
    report.record("quadform_rate_identity", worst, 1e-10);
    Ok(())
}

fn gradient_suite(report: &mut Report, mutation: Mutation) -> Result<()> {
    let mut rng = rng();
    let n = 3;
    let layers = LayerAssignment::from_sizes(&[2, 1])?;
    let noise_ratio = 0.1;
    let alpha = 5.0;
    let step = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let channels: Vec<DVector<C64>> = (0..3).map(|_| random_vector(&mut rng, n)).collect();
        let stack = random_stack(&mut rng, n, 2);
        let problem = GpiProblem::NonColluding {
            channels: &channels,
            layers: &layers,
            noise_ratio,
        };
        let analytic = match mutation {
            Mutation::None => gradient(&problem, &stack, alpha)?,
            Mutation::FlipGradientSign => {
                let ops = iter_matrices(&problem, &stack, alpha)?;
                ops.a.apply(&stack.f) + ops.b.apply(&stack.f)
            }
        };
        let mut numeric = DVector::zeros(n * 2);
        for i in 0..n * 2 {
            let eval = |re: f64, im: f64| {
                let mut f = stack.f.clone();
                f[i] += C64::new(re, im);
                problem.objective(&PrecoderStack::new(f, n, 2), alpha)
            };
            let d_re = (eval(step, 0.0)? - eval(-step, 0.0)?) / (2.0 * step);
            let d_im = (eval(0.0, step)? - eval(0.0, -step)?) / (2.0 * step);
            numeric[i] = C64::new(d_re / 2.0, d_im / 2.0);
        }
        worst = worst.max((&analytic - &numeric).norm() / numeric.norm());
    }
    report.record("gradient_finite_difference", worst, 1e-5);
    Ok(())
}

fn fixed_point_suite(report: &mut Report) -> Result<()> {
    let mut rng = rng();
    let n = 2;
    let layers = LayerAssignment::singletons(2);
    let noise_ratio = 0.05;
    let config = GpiConfig {
        epsilon: 1e-7,
        max_inner_iters: 300,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    let mut converged = 0usize;
    let trials = 5;
    for _ in 0..trials {
        let channels: Vec<DVector<C64>> = (0..2).map(|_| random_vector(&mut rng, n)).collect();
        let problem = GpiProblem::NonColluding {
            channels: &channels,
            layers: &layers,
            noise_ratio,
        };
        let initial = random_stack(&mut rng, n, 2);
        let (f, trace) = gpi_solve(&problem, &initial, &config, |s| {
            (0..2)
                .map(|k| secrecy_rate_nc(k, &channels, &layers, s, noise_ratio).unwrap_or(0.0))
                .sum()
        })?;
        if trace.status != GpiStatus::Converged {
            continue;
        }
        converged += 1;
        let alpha = trace.rows.last().map(|r| r.alpha).unwrap_or(10.0);
        worst = worst.max(nepv_residual(&problem, &f, alpha)?);
    }
    report.record("fixed_point_residual", worst, 1e-3);
    report.record(
        "fixed_point_convergence",
        (trials - converged) as f64,
        (trials / 2) as f64,
    );
    Ok(())
}

fn split_suite(report: &mut Report) -> Result<()> {
    let mut rng = rng();
    let n = 3;
    let layers = LayerAssignment::from_sizes(&[2, 1])?;
    let noise_ratio = 0.05;
    let channels: Vec<DVector<C64>> = (0..3).map(|_| random_vector(&mut rng, n)).collect();
    let initial = random_stack(&mut rng, n, 2);
    let problem = GpiProblem::NonColluding {
        channels: &channels,
        layers: &layers,
        noise_ratio,
    };
    let config = GpiConfig {
        epsilon: 1e-6,
        ..Default::default()
    };
    let (f1, t1) = gpi_solve_with_split(&problem, &initial, &config, |_| 0.0, 1.0)?;
    let (f2, t2) = gpi_solve_with_split(&problem, &initial, &config, |_| 0.0, 37.0)?;
    let mut worst = (&f1.f - &f2.f).norm();
    if t1.rows.len() != t2.rows.len() {
        worst = f64::INFINITY;
    } else {
        for (a, b) in t1.rows.iter().zip(&t2.rows) {
            worst = worst.max((a.lambda - b.lambda).abs());
        }
    }
    report.record("split_invariance", worst, 1e-9);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes_all_suites() {
        let report = run_suites(None).unwrap();
        assert!(report.all_pass(), "{}", report.render());
        assert_eq!(
            report.checks.len(),
            8,
            "expected one line per check:\n{}",
            report.render()
        );
        for line in report.render().lines() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(cols.len(), 4);
            assert!(cols[3] == "PASS" || cols[3] == "FAIL");
        }
    }

    #[test]
    fn only_filter_selects_one_suite() {
        let report = run_suites(Some("gradient")).unwrap();
        assert_eq!(report.checks.len(), 1);
        assert_eq!(report.checks[0].name, "gradient_finite_difference");
    }

    #[test]
    fn sign_flip_canary_is_caught() {
        let report =
            run_suites_mutated(Some("gradient"), Mutation::FlipGradientSign).unwrap();
        assert!(!report.all_pass(), "canary must fail the gradient check");
    }
}
