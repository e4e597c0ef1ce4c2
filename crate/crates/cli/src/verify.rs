//! Cross-oracle verification: closed forms against Monte Carlo, exact
//! convolution and certified hitting brackets.

use rwdrift::analytic::{entropy_exact, solve_traffic, DriftEntropyReport, DEFAULT_TOL};
use rwdrift::convolution::{distribution_at, entropy_and_length, ConvolutionConfig};
use rwdrift::freeproduct::block_drift_for;
use rwdrift::group::{FactorSpec, FreeProductSpec, StepDistribution};
use rwdrift::hitting::{free_group_z_brackets, PassageConfig};
use rwdrift::simulate::{estimate_drift, EstimateWithCI, LengthFunctional};
use rwdrift::walk::{FreeGroupWalk, FreeProductWalk};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Preset, RunConfig};
use crate::output::Report;
use crate::CliError;

const RESIDUAL_TOL: f64 = 1e-14;
const IDENTITY_TOL: f64 = 1e-10;
const UNIFORM_TOL: f64 = 1e-10;
const FUNDAMENTAL_SLACK: f64 = 1e-10;
const SIGMAS: f64 = 3.0;
/// Largest ball `2d (2d-1)^(n-1)` of the convolution check.
const CONVOLUTION_SUPPORT: f64 = 1e6;
const DEFAULT_LAW: [f64; 4] = [0.4, 0.2, 0.3, 0.1];

#[derive(Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: Value,
}

fn check(name: impl Into<String>, passed: bool, detail: Value) -> Check {
    Check { name: name.into(), passed, detail }
}

fn uniform_checks() -> Result<Vec<Check>, CliError> {
    (2..=5usize)
        .map(|d| {
            let sol = solve_traffic(&StepDistribution::uniform(d), DEFAULT_TOL)?;
            let r = DriftEntropyReport::from_solution(&sol)?;
            let df = d as f64;
            let (l, h) = (1.0 - 1.0 / df, (1.0 - 1.0 / df) * (2.0 * df - 1.0).ln());
            let passed = (r.drift - l).abs() <= UNIFORM_TOL && (r.entropy - h).abs() <= UNIFORM_TOL;
            Ok(check(format!("uniform d={d}"), passed, json!({ "drift": r.drift, "entropy": r.entropy, "expected": [l, h] })))
        })
        .collect()
}

pub fn counterexample_spec(alpha: f64) -> FreeProductSpec {
    let z3 = FactorSpec::cyclic(3, vec![0.5, 0.5]).expect("valid factor");
    let z2 = FactorSpec::cyclic(2, vec![1.0]).expect("valid factor");
    FreeProductSpec::new(vec![z3, z2], vec![alpha, 1.0 - alpha]).expect("valid spec")
}

fn counterexample_checks(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let (n, samples, seed, tol) = (cfg.n.unwrap(), cfg.samples.unwrap(), cfg.seed.unwrap(), cfg.tol.unwrap());
    let (even, skewed) = (counterexample_spec(0.5), counterexample_spec(2.0 / 3.0));
    let (be, bs) = (block_drift_for(&even, tol)?, block_drift_for(&skewed, tol)?);
    let analytic = check(
        "free product: block drift at (1/2,1/2) exceeds (2/3,1/3), analytic",
        be.interval[0] > bs.interval[1],
        json!({ "even": be, "skewed": bs }),
    );
    let me = estimate_drift(&FreeProductWalk::new(&even), &LengthFunctional::Block, n, samples, seed)?;
    let ms = estimate_drift(&FreeProductWalk::new(&skewed), &LengthFunctional::Block, n, samples, seed.wrapping_add(1))?;
    let pooled = me.stderr.hypot(ms.stderr);
    let mc = check(
        "free product: block drift at (1/2,1/2) exceeds (2/3,1/3), Monte Carlo",
        me.value - ms.value > SIGMAS * pooled,
        json!({ "even": me, "skewed": ms, "pooled_stderr": pooled }),
    );
    Ok(vec![analytic, mc])
}

fn within_sigmas(est: &EstimateWithCI, exact: f64) -> bool {
    (est.value - exact).abs() <= SIGMAS * est.stderr
}

/// Largest `n` whose full ball stays below `CONVOLUTION_SUPPORT` entries.
fn convolution_steps(d: usize) -> usize {
    let (first, growth) = ((2 * d) as f64, (2 * d - 1) as f64);
    let mut n = 1;
    while first * growth.powi(n as i32) <= CONVOLUTION_SUPPORT {
        n += 1;
    }
    n
}

fn law_checks(law: &StepDistribution, cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let (n, samples, seed, tol) = (cfg.n.unwrap(), cfg.samples.unwrap(), cfg.seed.unwrap(), cfg.tol.unwrap());
    let d = law.rank();
    let sol = solve_traffic(law, DEFAULT_TOL)?;
    let report = DriftEntropyReport::from_solution(&sol)?;
    let mut checks = vec![
        check("traffic residual", sol.residual <= RESIDUAL_TOL, json!(sol.residual)),
        check(
            "exit-mass identities",
            sol.q_identity_error() <= IDENTITY_TOL && sol.q_mass_error() <= IDENTITY_TOL,
            json!([sol.q_identity_error(), sol.q_mass_error()]),
        ),
        check(
            "fundamental inequality",
            report.entropy <= report.drift * report.volume_entropy + FUNDAMENTAL_SLACK,
            json!(report),
        ),
    ];
    let brackets = free_group_z_brackets(law, &PassageConfig::default())?;
    let inside = brackets.iter().zip(&sol.z).all(|(b, &z)| b.width() < tol && b.contains(z));
    checks.push(check("first-passage values inside certified brackets", inside, json!({ "z": sol.z, "brackets": brackets })));

    let walk = FreeGroupWalk::new(law.clone());
    let est = estimate_drift(&walk, &LengthFunctional::Word, n, samples, seed)?;
    checks.push(check("Monte Carlo drift within 3 stderr", within_sigmas(&est, report.drift), json!(est)));

    let steps = convolution_steps(d);
    let table = distribution_at(&walk, steps, &ConvolutionConfig::from_env())?;
    let s = entropy_and_length(&table, &walk);
    let nf = steps as f64;
    // L_n / n and H_n / n decrease to their limits.
    let above = s.mean_length / nf >= report.drift - 1e-12 && s.entropy / nf >= report.entropy - 1e-12;
    checks.push(check(
        format!("convolution ratios at n={steps} bound the limits from above"),
        above && (table.total_mass() - 1.0).abs() < 1e-12,
        json!(s),
    ));

    if law.is_symmetric(1e-15) {
        let h = entropy_exact(&sol);
        let est = estimate_drift(&walk, &LengthFunctional::Green(sol.neg_log_z()), n, samples, seed.wrapping_add(1))?;
        checks.push(check("Green-metric drift within 3 stderr of entropy", within_sigmas(&est, h), json!(est)));
    }
    Ok(checks)
}

pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let checks = match cfg.preset.expect("defaulted") {
        Preset::Uniform => uniform_checks()?,
        Preset::Z3Z2Counterexample => counterexample_checks(cfg)?,
        Preset::All => {
            let law = if cfg.p.is_some() || cfg.q_sym.is_some() || cfg.d.is_some() {
                cfg.free_law()?
            } else {
                StepDistribution::new(&DEFAULT_LAW)?
            };
            if law.rank() < 2 {
                return Err(CliError::Config("verify needs d >= 2".into()));
            }
            let mut all = uniform_checks()?;
            all.extend(law_checks(&law, cfg)?);
            all.extend(counterexample_checks(cfg)?);
            all
        }
    };
    let breaches = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(Report { result: json!({ "passed": passed, "checks": checks }), table: None, breaches })
}
