use rwdrift::analytic::{
    drift_exact, drift_rank_one, entropy_exact, solve_traffic, symmetric_report, DriftEntropyReport,
};
use rwdrift::convolution::{convolution_rows, return_series, ConvolutionConfig};
use rwdrift::freeproduct::{block_drift, xi_vector};
use rwdrift::group::StepDistribution;
use rwdrift::optimize::{concavity_probe, law_report, maximize_symmetric, sweep_line};
use rwdrift::simulate::{estimate_drift, LengthFunctional};
use rwdrift::walk::{FreeGroupWalk, FreeProductWalk, GroupWalk};
use rwdrift::Error;
use serde_json::{json, Value};

use crate::config::{Functional, GroupChoice, RunConfig};
use crate::output::{Report, Table};
use crate::CliError;

/// Separation `|p_1 - p_{-1}|` below which a rank-one walk counts as recurrent.
pub const RANK_ONE_GUARD: f64 = 1e-9;

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("result types serialize")
}

fn mc_settings(cfg: &RunConfig) -> (usize, usize, u64) {
    (cfg.n.expect("defaulted"), cfg.samples.unwrap_or(0), cfg.seed.unwrap_or(0))
}

pub fn rank_one_report(law: &StepDistribution) -> Result<DriftEntropyReport, CliError> {
    let gap = drift_rank_one(law);
    if gap <= RANK_ONE_GUARD {
        return Err(Error::RecurrentWalk.into());
    }
    Ok(law_report(law)?)
}

pub fn free_exact(cfg: &RunConfig) -> Result<Report, CliError> {
    let law = cfg.free_law()?;
    if law.rank() == 1 {
        let report = rank_one_report(&law)?;
        return Ok(Report::json(json!({ "law": law.probs(), "report": report })));
    }
    let sol = solve_traffic(&law, cfg.tol.expect("defaulted"))?;
    let report = DriftEntropyReport::from_solution(&sol)?;
    let mut result = json!({ "solution": to_value(&sol), "report": report });
    if let Some(q) = &cfg.q_sym {
        result["symmetric"] = to_value(&symmetric_report(q)?);
    }
    Ok(Report::json(result))
}

fn drift_estimate<G: GroupWalk>(walk: &G, f: &LengthFunctional, cfg: &RunConfig) -> Result<Value, CliError> {
    let (n, samples, seed) = mc_settings(cfg);
    Ok(to_value(&estimate_drift(walk, f, n, samples, seed)?))
}

pub fn simulate(cfg: &RunConfig) -> Result<Report, CliError> {
    let functional = cfg.functional.expect("defaulted");
    let (estimate, exact) = match cfg.group()? {
        GroupChoice::Free(law) => {
            let walk = FreeGroupWalk::new(law.clone());
            match functional {
                Functional::Green => {
                    if law.rank() < 2 {
                        return Err(CliError::Config("the Green functional needs d >= 2".into()));
                    }
                    let sol = solve_traffic(&law, rwdrift::analytic::DEFAULT_TOL)?;
                    (drift_estimate(&walk, &LengthFunctional::Green(sol.neg_log_z()), cfg)?, json!(entropy_exact(&sol)))
                }
                Functional::Word | Functional::Block => {
                    let f = if functional == Functional::Word { LengthFunctional::Word } else { LengthFunctional::Block };
                    let exact = if law.rank() == 1 {
                        json!(drift_rank_one(&law))
                    } else if functional == Functional::Word {
                        json!(drift_exact(&solve_traffic(&law, rwdrift::analytic::DEFAULT_TOL)?)?)
                    } else {
                        Value::Null
                    };
                    (drift_estimate(&walk, &f, cfg)?, exact)
                }
            }
        }
        GroupChoice::Product(spec) => {
            let walk = FreeProductWalk::new(&spec);
            match functional {
                Functional::Green => return Err(Error::IncompatibleFunctional("Green distance needs a free-group walk").into()),
                Functional::Word => (drift_estimate(&walk, &LengthFunctional::Word, cfg)?, Value::Null),
                Functional::Block => {
                    let exact = rwdrift::freeproduct::block_drift_for(&spec, crate::config::DEFAULT_BRACKET_TOL)?;
                    (drift_estimate(&walk, &LengthFunctional::Block, cfg)?, json!(exact.l_block))
                }
            }
        }
    };
    Ok(Report::json(json!({ "functional": functional, "estimate": estimate, "exact": exact })))
}

fn convolution_report<G: GroupWalk>(walk: &G, n: usize) -> Result<Report, CliError> {
    let conv = ConvolutionConfig::from_env();
    let rows = convolution_rows(walk, n, &conv)?;
    let series = return_series(walk, n, &conv)?;
    let table = Table {
        header: vec!["n", "entropy", "mean_length", "return_prob", "entropy_ratio", "entropy_increment", "drift_ratio", "mass_defect"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    json!(r.n),
                    json!(r.entropy),
                    json!(r.mean_length),
                    json!(r.return_prob),
                    json!(r.entropy_ratio),
                    json!(r.entropy_increment),
                    json!(r.drift_ratio),
                    json!(r.mass_defect),
                ]
            })
            .collect(),
    };
    let result = json!({ "memory": conv, "rows": rows, "return_series": series });
    Ok(Report { result, table: Some(table), breaches: Vec::new() })
}

pub fn convolve(cfg: &RunConfig) -> Result<Report, CliError> {
    let n = cfg.n.expect("defaulted");
    match cfg.group()? {
        GroupChoice::Free(law) => convolution_report(&FreeGroupWalk::new(law), n),
        GroupChoice::Product(spec) => convolution_report(&FreeProductWalk::new(&spec), n),
    }
}

pub fn free_product(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = cfg.product_spec()?;
    let xi = xi_vector(&spec, cfg.tol.expect("defaulted"))?;
    let drift = block_drift(&spec, &xi)?;
    Ok(Report::json(json!({ "xi": xi, "block_drift": drift })))
}

pub fn optimize(cfg: &RunConfig) -> Result<Report, CliError> {
    let d = cfg.rank()?;
    let objective = cfg.objective.expect("defaulted").into();
    let result = maximize_symmetric(objective, d, cfg.starts.expect("defaulted"), cfg.seed.expect("defaulted"))?;
    Ok(Report::json(to_value(&result)))
}

fn sweep_endpoints(cfg: &RunConfig) -> Result<(StepDistribution, StepDistribution), CliError> {
    if cfg.d == Some(1) && cfg.p.is_none() {
        let (Some(a), Some(b)) = (cfg.from, cfg.to) else {
            return Err(CliError::Config("rank-one sweep needs --from and --to".into()));
        };
        return Ok((StepDistribution::new(&[a, 1.0 - a])?, StepDistribution::new(&[b, 1.0 - b])?));
    }
    let (Some(a), Some(b)) = (&cfg.p, &cfg.p_end) else {
        return Err(CliError::Config("sweep needs --p and --p-end (or --d 1 --from --to)".into()));
    };
    let (a, b) = (StepDistribution::new(a)?, StepDistribution::new(b)?);
    if cfg.d.is_some_and(|d| d != a.rank()) {
        return Err(CliError::Config("sweep endpoints do not match --d".into()));
    }
    Ok((a, b))
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let (a, b) = sweep_endpoints(cfg)?;
    let table = sweep_line(&a, &b, cfg.grid.expect("defaulted"))?;
    let csv = Table {
        header: vec!["t", "drift", "entropy", "d1_drift", "d2_drift", "kink_flag"],
        rows: table
            .rows
            .iter()
            .map(|r| vec![json!(r.t), json!(r.drift), json!(r.entropy), json!(r.d1_drift), json!(r.d2_drift), json!(r.kink_flag)])
            .collect(),
    };
    let kinks_t: Vec<f64> = table.kinks.iter().map(|&k| table.rows[k].t).collect();
    let result = json!({ "from": a.probs(), "to": b.probs(), "kinks_t": kinks_t, "table": table });
    Ok(Report { result, table: Some(csv), breaches: Vec::new() })
}

pub fn concavity(cfg: &RunConfig) -> Result<Report, CliError> {
    let d = cfg.rank()?;
    let report = concavity_probe(d, cfg.chords.expect("defaulted"), cfg.seed.expect("defaulted"), cfg.entropy_probe)?;
    Ok(Report::json(to_value(&report)))
}
