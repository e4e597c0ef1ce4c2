//! Maxima of drift and entropy over symmetric laws, the concavity probe,
//! parameter sweeps, and the Lagrange cubic of the symmetric critical-point
//! equation.
//!
//! Symmetric laws are given by their half-weights `p_1..p_d`, `p(±i) = p_i`,
//! with `Σ p_i = 1/2`. Derivatives are central differences of the analytic
//! pipeline with one Richardson step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{drift_exact, drift_rank_one, entropy_exact, solve_traffic, DriftEntropyReport, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::group::StepDistribution;
use crate::simulate::{random_symmetric_half, sample_rng};

/// Smallest admissible half-weight.
pub const INTERIOR_FLOOR: f64 = 1e-9;
/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Starts of [`maximize_symmetric`].
pub const DEFAULT_STARTS: usize = 8;
/// Endpoints of all starts must agree to this distance.
pub const AGREEMENT_TOL: f64 = 1e-6;
/// Midpoint-concavity gaps below `-CONCAVITY_TOL` are violations.
pub const CONCAVITY_TOL: f64 = 1e-9;
/// Slack allowed in `h <= ℓ v` along optimizer iterates.
pub const FUNDAMENTAL_SLACK: f64 = 1e-10;
/// Central differences of the solver output are noise below this norm.
pub const GRADIENT_FLOOR: f64 = 1e-10;
const MAX_ASCENT: usize = 20_000;
const ARMIJO: f64 = 1e-4;
const KINK_REL: f64 = 50.0;
const KINK_ABS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Drift,
    Entropy,
}

/// Drift and entropy of the symmetric law with half-weights `half`.
pub fn symmetric_point_report(half: &[f64]) -> Result<DriftEntropyReport> {
    let law = StepDistribution::symmetric(half)?;
    law_report(&law)
}

/// Drift and entropy of any law; rank one uses `|p_1 - p_{-1}|` and `h = 0`.
pub fn law_report(law: &StepDistribution) -> Result<DriftEntropyReport> {
    if law.rank() == 1 {
        return Ok(DriftEntropyReport::new(drift_rank_one(law), 0.0, 1));
    }
    let sol = solve_traffic(law, DEFAULT_TOL)?;
    Ok(DriftEntropyReport::new(drift_exact(&sol)?, entropy_exact(&sol), law.rank()))
}

fn objective_value(objective: Objective, half: &[f64]) -> Result<f64> {
    let r = symmetric_point_report(half)?;
    Ok(match objective {
        Objective::Drift => r.drift,
        Objective::Entropy => r.entropy,
    })
}

/// Gradient along the simplex `Σ p_i = 1/2`: central differences along
/// `e_i - e_j`-balanced directions, projected to zero mean, with Richardson
/// extrapolation between steps `h` and `h/2`.
pub fn projected_gradient(objective: Objective, half: &[f64], h: f64) -> Result<Vec<f64>> {
    let d = half.len();
    let central = |step: f64| -> Result<Vec<f64>> {
        let mut g = vec![0.0; d];
        for i in 0..d {
            // Move mass from the others to coordinate i, keeping the sum.
            let mut plus = half.to_vec();
            let mut minus = half.to_vec();
            for (j, (a, b)) in plus.iter_mut().zip(minus.iter_mut()).enumerate() {
                let dir = if j == i { 1.0 } else { -1.0 / (d - 1) as f64 };
                *a += step * dir;
                *b -= step * dir;
            }
            g[i] = (objective_value(objective, &plus)? - objective_value(objective, &minus)?) / (2.0 * step);
        }
        Ok(g)
    };
    let coarse = central(h)?;
    let fine = central(h / 2.0)?;
    let mut g: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    // Directional derivatives along u_i; map back to the tangent gradient.
    let scale = (d - 1) as f64 / d as f64;
    for v in g.iter_mut() {
        *v *= scale;
    }
    let mean = g.iter().sum::<f64>() / d as f64;
    for v in g.iter_mut() {
        *v -= mean;
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean projection onto `{x : Σ x = total, x_i >= floor}`.
pub fn project_to_simplex(x: &[f64], total: f64, floor: f64) -> Vec<f64> {
    let d = x.len();
    let budget = total - floor * d as f64;
    let mut sorted: Vec<f64> = x.iter().map(|v| v - floor).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - budget) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - floor - theta).max(0.0) + floor).collect()
}

/// One ascent run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Iterates where `h > ℓ v + 1e-10`.
    pub bound_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub objective: Objective,
    /// Consensus centroid of the start endpoints, as half-weights.
    pub argmax: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Largest coordinate distance between two endpoints.
    pub spread: f64,
    pub agreement: bool,
    pub bound_violations: usize,
    pub starts: Vec<StartResult>,
}

fn ascend(objective: Objective, start: Vec<f64>, h: f64) -> Result<StartResult> {
    let mut x = start.clone();
    let mut fx = objective_value(objective, &x)?;
    let mut step = 1e-2;
    let mut iterations = 0;
    let mut bound_violations = 0;
    let mut g = projected_gradient(objective, &x, h)?;
    while iterations < MAX_ASCENT {
        iterations += 1;
        let gn = norm(&g);
        if gn < GRADIENT_FLOOR {
            break;
        }
        let mut accepted = None;
        let mut t = step * 2.0;
        while t > 1e-14 {
            let cand = project_to_simplex(
                &x.iter().zip(&g).map(|(a, b)| a + t * b).collect::<Vec<_>>(),
                0.5,
                INTERIOR_FLOOR,
            );
            let gain: f64 = cand.iter().zip(&x).zip(&g).map(|((c, a), b)| (c - a) * b).sum();
            let fc = objective_value(objective, &cand)?;
            if fc > fx && fc >= fx + ARMIJO * gain && gain > 0.0 {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        step = t;
        let moved = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = cand;
        fx = fc;
        let r = symmetric_point_report(&x)?;
        if r.entropy > r.drift * r.volume_entropy + FUNDAMENTAL_SLACK {
            bound_violations += 1;
        }
        g = projected_gradient(objective, &x, h)?;
        if moved < 1e-13 {
            break;
        }
    }
    if iterations >= MAX_ASCENT {
        return Err(Error::NoConvergence { what: "projected gradient ascent", iterations });
    }
    Ok(StartResult { start, end: x, value: fx, gradient_norm: norm(&g), iterations, bound_violations })
}

/// Multi-start projected gradient ascent over symmetric laws of rank `d`.
pub fn maximize_symmetric(objective: Objective, d: usize, starts: usize, seed: u64) -> Result<OptimizationResult> {
    if d < 2 {
        return Err(Error::InvalidSpec("maximization needs d >= 2".into()));
    }
    if starts == 0 {
        return Err(Error::InvalidSpec("at least one start is required".into()));
    }
    let runs: Vec<StartResult> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let start = random_symmetric_half(d, 0.01, &mut sample_rng(seed, s as u64));
            ascend(objective, start, FD_STEP)
        })
        .collect::<Result<_>>()?;
    let mut spread: f64 = 0.0;
    for a in &runs {
        for b in &runs {
            spread = spread.max(a.end.iter().zip(&b.end).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    if spread > AGREEMENT_TOL {
        return Err(Error::MultiStartDisagreement { spread, tol: AGREEMENT_TOL });
    }
    let argmax: Vec<f64> = (0..d).map(|i| runs.iter().map(|r| r.end[i]).sum::<f64>() / runs.len() as f64).collect();
    let value = objective_value(objective, &argmax)?;
    let gradient_norm = norm(&projected_gradient(objective, &argmax, FD_STEP)?);
    Ok(OptimizationResult {
        objective,
        argmax,
        value,
        gradient_norm,
        iterations: runs.iter().map(|r| r.iterations).sum(),
        spread,
        agreement: true,
        bound_violations: runs.iter().map(|r| r.bound_violations).sum(),
        starts: runs,
    })
}

/// `G(A, B, λ, q) = 16Aq³ + 4q²(λA² - 4A - B) + 4q(-λA² + A + B) + λA²`.
pub fn lagrange_cubic(a: f64, b: f64, lambda: f64, q: f64) -> f64 {
    let la2 = lambda * a * a;
    16.0 * a * q * q * q + 4.0 * q * q * (la2 - 4.0 * a - b) + 4.0 * q * (-la2 + a + b) + la2
}

/// `∂G/∂q`.
pub fn lagrange_cubic_dq(a: f64, b: f64, lambda: f64, q: f64) -> f64 {
    let la2 = lambda * a * a;
    48.0 * a * q * q + 8.0 * q * (la2 - 4.0 * a - b) + 4.0 * (-la2 + a + b)
}

/// Number of roots of `G(A, B, λ, ·)` in `[0, 1/2)`, by sign changes over
/// the monotone pieces between critical points.
pub fn root_count(a: f64, b: f64, lambda: f64) -> Result<usize> {
    if !(0.0 < b && b < 1.0 && 1.0 < a) {
        return Err(Error::DomainViolation(format!("need 0 < B < 1 < A, got A = {a}, B = {b}")));
    }
    // Critical points solve 48A q² + 8(λA² - 4A - B) q + 4(A + B - λA²) = 0.
    let (qa, qb, qc) = (48.0 * a, 8.0 * (lambda * a * a - 4.0 * a - b), 4.0 * (a + b - lambda * a * a));
    let disc = qb * qb - 4.0 * qa * qc;
    let mut knots = vec![0.0];
    if disc > 0.0 {
        let s = disc.sqrt();
        let mut roots = [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)];
        roots.sort_by(f64::total_cmp);
        knots.extend(roots.iter().copied().filter(|&r| r > 0.0 && r < 0.5));
    }
    knots.push(0.5);
    let g: Vec<f64> = knots.iter().map(|&q| lagrange_cubic(a, b, lambda, q)).collect();
    let mut count = 0;
    for k in 0..knots.len() - 1 {
        if g[k] == 0.0 || (g[k] < 0.0) != (g[k + 1] < 0.0) && g[k + 1] != 0.0 {
            count += 1;
        }
    }
    Ok(count)
}

/// A chord whose midpoint value falls below the chord mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChordViolation {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub midpoint_value: f64,
    pub chord_mean: f64,
    /// `midpoint_value - chord_mean`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub d: usize,
    pub chords: usize,
    /// Gaps below `-1e-9`.
    pub violations: Vec<ChordViolation>,
    /// Gaps in `[-1e-9, 0)`.
    pub indeterminate: usize,
    pub min_gap: f64,
    /// Same test for the entropy, when requested.
    pub entropy_violations: Option<Vec<ChordViolation>>,
}

struct ChordCheck {
    drift: (f64, Option<ChordViolation>),
    entropy: Option<ChordViolation>,
}

fn check_chord(a: &[f64], b: &[f64], with_entropy: bool) -> Result<ChordCheck> {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let (ra, rb, rm) = (symmetric_point_report(a)?, symmetric_point_report(b)?, symmetric_point_report(&mid)?);
    let violation = |fa: f64, fb: f64, fm: f64| {
        let chord_mean = 0.5 * (fa + fb);
        let gap = fm - chord_mean;
        (gap, ChordViolation { a: a.to_vec(), b: b.to_vec(), midpoint_value: fm, chord_mean, gap })
    };
    let (gap, v) = violation(ra.drift, rb.drift, rm.drift);
    let entropy = if with_entropy {
        let (g, v) = violation(ra.entropy, rb.entropy, rm.entropy);
        (g < -CONCAVITY_TOL).then_some(v)
    } else {
        None
    };
    Ok(ChordCheck { drift: (gap, (gap < 0.0).then_some(v)), entropy })
}

/// Midpoint-concavity test of `p ↦ ℓ_p` on random chords of symmetric laws.
pub fn concavity_probe(d: usize, chords: usize, seed: u64, with_entropy: bool) -> Result<ConcavityReport> {
    if d < 2 {
        return Err(Error::InvalidSpec("concavity probe needs d >= 2".into()));
    }
    let checks: Vec<ChordCheck> = (0..chords)
        .into_par_iter()
        .map(|c| {
            let mut rng = sample_rng(seed, c as u64);
            let a = random_symmetric_half(d, 1e-6, &mut rng);
            let b = random_symmetric_half(d, 1e-6, &mut rng);
            check_chord(&a, &b, with_entropy)
        })
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    let mut indeterminate = 0;
    let mut min_gap = f64::INFINITY;
    let mut entropy_violations = Vec::new();
    for c in checks {
        let (gap, v) = c.drift;
        min_gap = min_gap.min(gap);
        if let Some(v) = v {
            if gap < -CONCAVITY_TOL {
                violations.push(v);
            } else {
                indeterminate += 1;
            }
        }
        entropy_violations.extend(c.entropy);
    }
    Ok(ConcavityReport {
        d,
        chords,
        violations,
        indeterminate,
        min_gap,
        entropy_violations: with_entropy.then_some(entropy_violations),
    })
}

/// Midpoint test of one chord; the degenerate chord gives gap zero.
pub fn chord_gap(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(check_chord(a, b, false)?.drift.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub drift: f64,
    pub entropy: f64,
    pub d1_drift: f64,
    pub d2_drift: f64,
    pub kink_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Row indices of flagged kinks.
    pub kinks: Vec<usize>,
}

/// Point `(1 - t) p_a + t p_b` of a segment.
pub fn segment_point(p_a: &StepDistribution, p_b: &StepDistribution, t: f64) -> Result<StepDistribution> {
    // Endpoints are returned unchanged; renormalizing would move the last bit.
    if t == 0.0 {
        return Ok(p_a.clone());
    }
    if t == 1.0 {
        return Ok(p_b.clone());
    }
    let raw: Vec<f64> = p_a.probs().iter().zip(p_b.probs()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    StepDistribution::new(&raw)
}

/// Drift and entropy along a segment with finite-difference diagnostics.
///
/// A row is flagged when the jump of the first difference exceeds fifty
/// times the median jump along the segment (and an absolute floor) and is a
/// local maximum of the jumps.
pub fn sweep_line(p_a: &StepDistribution, p_b: &StepDistribution, grid: usize) -> Result<SweepTable> {
    if p_a.rank() != p_b.rank() {
        return Err(Error::InvalidShape("segment endpoints have different ranks".into()));
    }
    if grid < 3 {
        return Err(Error::InvalidSpec("sweep grid needs at least 3 points".into()));
    }
    let dt = 1.0 / (grid - 1) as f64;
    let reports: Vec<(f64, DriftEntropyReport)> = (0..grid)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * dt;
            Ok((t, law_report(&segment_point(p_a, p_b, t)?)?))
        })
        .collect::<Result<_>>()?;
    let drift: Vec<f64> = reports.iter().map(|(_, r)| r.drift).collect();
    let slopes: Vec<f64> = drift.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let mut jumps = vec![0.0; grid];
    for k in 1..grid - 1 {
        jumps[k] = (slopes[k] - slopes[k - 1]).abs();
    }
    let mut sorted = jumps[1..grid - 1].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let slope_scale = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let threshold = (KINK_REL * median).max(KINK_ABS * slope_scale.max(1.0));
    let mut kinks = Vec::new();
    for k in 1..grid - 1 {
        if jumps[k] > threshold && jumps[k] >= jumps[k - 1] && jumps[k] > jumps[k + 1] {
            kinks.push(k);
        }
    }
    let rows = (0..grid)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(grid - 1));
            let d1 = (drift[hi] - drift[lo]) / ((hi - lo) as f64 * dt);
            let c = k.clamp(1, grid - 2);
            let d2 = (drift[c + 1] - 2.0 * drift[c] + drift[c - 1]) / (dt * dt);
            SweepRow {
                t: reports[k].0,
                drift: drift[k],
                entropy: reports[k].1.entropy,
                d1_drift: d1,
                d2_drift: d2,
                kink_flag: kinks.contains(&k),
            }
        })
        .collect();
    Ok(SweepTable { rows, kinks })
}
