//! Closed forms for nearest-neighbour walks on free groups.
//!
//! Everything here is driven by the first-passage probabilities
//! `z_i = F(e, i)`, the minimal nonnegative solution of
//!
//! ```text
//! z_i = p_i + z_i Σ_{j ≠ i} p_j z_{-j}
//! ```
//!
//! and the one-letter masses of the exit measure,
//! `q_i = z_i (1 - z_{-i}) / (1 - z_i z_{-i})`. Drift, entropy, cylinder
//! masses and Radon–Nikodym derivatives of the exit measure are explicit in
//! `(z, q)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Letter, ReducedWord, StepDistribution};

/// Default residual tolerance of [`solve_traffic`].
pub const DEFAULT_TOL: f64 = 1e-14;
/// Iteration cap of the monotone fixed-point scheme.
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Residual below which Newton polishing is attempted.
const NEWTON_SWITCH: f64 = 1e-6;
/// Agreement required between the two drift formulas.
pub const FORMULA_TOL: f64 = 1e-10;
/// `|p_1 - p_{-1}|` at or below this is treated as the recurrent walk on ℤ.
pub const RECURRENCE_GUARD: f64 = 1e-9;

#[inline]
fn neg(i: usize) -> usize {
    i ^ 1
}

/// Solution of the traffic equations with the derived scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficSolution {
    pub law: StepDistribution,
    /// `z_i = F(e, i)` in letter-index order.
    pub z: Vec<f64>,
    /// One-letter cylinder masses `q_i = ν([i])`.
    pub q: Vec<f64>,
    /// `Y = Σ_j p_j z_{-j}`.
    pub y: f64,
    /// `A = (1 - Y)⁻¹`, the expected number of visits to the identity.
    pub a: f64,
    pub b: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl TrafficSolution {
    pub fn rank(&self) -> usize {
        self.law.rank()
    }

    pub fn z_of(&self, x: Letter) -> f64 {
        self.z[x.index()]
    }

    pub fn q_of(&self, x: Letter) -> f64 {
        self.q[x.index()]
    }

    /// Largest deviation from `q_i = z_i (1 - q_{-i})`.
    pub fn q_identity_error(&self) -> f64 {
        (0..self.z.len())
            .map(|i| (self.q[i] - self.z[i] * (1.0 - self.q[neg(i)])).abs())
            .fold(0.0, f64::max)
    }

    pub fn q_mass_error(&self) -> f64 {
        (self.q.iter().sum::<f64>() - 1.0).abs()
    }

    /// `-ln z_i` per letter index, the Green-distance weights.
    pub fn neg_log_z(&self) -> Vec<f64> {
        self.z.iter().map(|z| -z.ln()).collect()
    }
}

fn traffic_residual(p: &[f64], z: &[f64]) -> f64 {
    let y: f64 = (0..p.len()).map(|j| p[j] * z[neg(j)]).sum();
    (0..p.len())
        .map(|i| {
            let s = y - p[i] * z[neg(i)];
            (z[i] - p[i] - z[i] * s).abs()
        })
        .fold(0.0, f64::max)
}

fn traffic_map(p: &[f64], z: &[f64], out: &mut [f64]) {
    let y: f64 = (0..p.len()).map(|j| p[j] * z[neg(j)]).sum();
    for i in 0..p.len() {
        out[i] = p[i] + z[i] * (y - p[i] * z[neg(i)]);
    }
}

/// One Newton step on `z - Φ(z) = 0`; `None` when the Jacobian is singular.
fn newton_step(p: &[f64], z: &[f64]) -> Option<Vec<f64>> {
    let n = p.len();
    let y: f64 = (0..n).map(|j| p[j] * z[neg(j)]).sum();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut f = DVector::<f64>::zeros(n);
    for i in 0..n {
        let s = y - p[i] * z[neg(i)];
        f[i] = z[i] - p[i] - z[i] * s;
        for k in 0..n {
            let mut v = if k == i { 1.0 - s } else { 0.0 };
            if k != neg(i) {
                v -= z[i] * p[neg(k)];
            }
            jac[(i, k)] = v;
        }
    }
    let delta = jac.lu().solve(&f)?;
    Some((0..n).map(|i| (z[i] - delta[i]).clamp(0.0, 1.0)).collect())
}

/// Minimal nonnegative solution of the traffic equations.
///
/// Iterates `z ← Φ(z)` from `z = 0`; the map has nonnegative coefficients, so
/// the iterates increase to the minimal fixed point. Once the residual is
/// small, Newton steps are accepted whenever they lower it.
pub fn solve_traffic(law: &StepDistribution, tol: f64) -> Result<TrafficSolution> {
    let p = law.probs();
    let n = p.len();
    if law.rank() == 1 && (p[0] - p[1]).abs() <= RECURRENCE_GUARD {
        return Err(Error::RecurrentWalk);
    }
    let mut z = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = traffic_residual(p, &z);
    let mut iterations = 0;
    let mut newton_failed = false;
    while residual > tol {
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence { what: "traffic equations", iterations });
        }
        iterations += 1;
        if residual < NEWTON_SWITCH && !newton_failed {
            if let Some(candidate) = newton_step(p, &z) {
                let r = traffic_residual(p, &candidate);
                if r < residual {
                    z = candidate;
                    residual = r;
                    continue;
                }
            }
            newton_failed = true;
        }
        traffic_map(p, &z, &mut next);
        std::mem::swap(&mut z, &mut next);
        let r = traffic_residual(p, &z);
        if r < residual {
            // resume Newton after monotone progress
            newton_failed = false;
        }
        residual = r;
    }
    if (0..n).any(|i| 1.0 - z[i] * z[neg(i)] < 1e-12) {
        return Err(Error::RecurrentWalk);
    }

    let q: Vec<f64> = (0..n)
        .map(|i| z[i] * (1.0 - z[neg(i)]) / (1.0 - z[i] * z[neg(i)]))
        .collect();
    let y: f64 = (0..n).map(|j| p[j] * z[neg(j)]).sum();
    let a = 1.0 / (1.0 - y);
    let b = if law.rank() >= 2 {
        1.0 - (0..n)
            .map(|i| {
                let qq = q[i] * q[neg(i)];
                if qq == 0.0 {
                    0.0
                } else {
                    qq * (1.0 - 2.0 * q[i]) / (1.0 - q[i] - q[neg(i)])
                }
            })
            .sum::<f64>()
    } else {
        // 1 - q_1 - q_{-1} vanishes identically on ℤ; B is then ℓ·A.
        a * direct_drift(p, &q)
    };
    Ok(TrafficSolution { law: law.clone(), z, q, y, a, b, residual, iterations })
}

fn direct_drift(p: &[f64], q: &[f64]) -> f64 {
    1.0 - 2.0 * (0..p.len()).map(|i| p[i] * q[neg(i)]).sum::<f64>()
}

/// Linear drift `ℓ_p = 1 - 2 Σ p_i q_{-i}`, cross-checked against `B/A`.
pub fn drift_exact(sol: &TrafficSolution) -> Result<f64> {
    let direct = direct_drift(sol.law.probs(), &sol.q);
    let ratio = sol.b / sol.a;
    if (direct - ratio).abs() > FORMULA_TOL {
        return Err(Error::FormulaMismatch { direct, ratio });
    }
    Ok(direct)
}

/// Asymptotic entropy `h_p = Σ_i p_i [q_{-i} ln z_{-i} - (1 - q_{-i}) ln z_i]`.
pub fn entropy_exact(sol: &TrafficSolution) -> f64 {
    let p = sol.law.probs();
    (0..p.len())
        .map(|i| {
            let m = neg(i);
            p[i] * (sol.q[m] * sol.z[m].ln() - (1.0 - sol.q[m]) * sol.z[i].ln())
        })
        .sum()
}

/// Density `d(g⁻¹ν)/dν` at a boundary point whose first letter is `first_letter`.
pub fn rn_derivative(sol: &TrafficSolution, g: Letter, first_letter: Letter) -> f64 {
    if first_letter == g.inverse() {
        1.0 / sol.z_of(g.inverse())
    } else {
        sol.z_of(g)
    }
}

/// Entropy of the exit measure computed from [`rn_derivative`]:
/// `-Σ_g p(g) ∫ ln (d g⁻¹ν / dν) dν`, integrating over first letters.
pub fn entropy_from_rn(sol: &TrafficSolution) -> f64 {
    let n = sol.z.len();
    -(0..n)
        .map(|gi| {
            let g = Letter::from_index(gi);
            let integral: f64 = (0..n)
                .map(|si| sol.q[si] * rn_derivative(sol, g, Letter::from_index(si)).ln())
                .sum();
            sol.law.probs()[gi] * integral
        })
        .sum::<f64>()
}

/// Exit-measure mass of the cylinder of infinite words starting with `w`;
/// one for the empty word.
pub fn cylinder_mass(sol: &TrafficSolution, w: &ReducedWord) -> f64 {
    match w.last() {
        None => 1.0,
        Some(last) => {
            let hit: f64 = w.letters().iter().map(|&x| sol.z_of(x)).product();
            hit * (1.0 - sol.q_of(last.inverse()))
        }
    }
}

/// Green distance `d_G(e, w) = -ln F(e, w) = -Σ ln z_{i_j}`.
pub fn green_distance(sol: &TrafficSolution, w: &ReducedWord) -> f64 {
    -w.letters().iter().map(|&x| sol.z_of(x).ln()).sum::<f64>()
}

/// Volume entropy `ln(2d - 1)` of the free group of rank `d`.
pub fn volume_entropy_free(d: usize) -> f64 {
    assert!(d >= 1, "rank must be positive");
    ((2 * d - 1) as f64).ln()
}

/// Drift of the walk on ℤ, `|p_1 - p_{-1}|`, valid at the recurrent point too.
pub fn drift_rank_one(law: &StepDistribution) -> f64 {
    assert_eq!(law.rank(), 1, "rank-one drift needs d = 1");
    (law.probs()[0] - law.probs()[1]).abs()
}

/// Inverts `p ↦ q`: recovers the step law from the one-letter exit masses.
pub fn p_from_q(q: &[f64]) -> Result<StepDistribution> {
    let n = q.len();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::DomainViolation(format!("q needs 2d entries, got {n}")));
    }
    if q.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::DomainViolation("q must be positive".into()));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::DomainViolation(format!("q sums to {sum}")));
    }
    if (0..n).any(|i| q[i] + q[neg(i)] >= 1.0) {
        return Err(Error::DomainViolation("q_i + q_-i must stay below 1".into()));
    }
    let z: Vec<f64> = (0..n).map(|i| q[i] / (1.0 - q[neg(i)])).collect();
    let a = 1.0 + (0..n).map(|i| q[i] * q[neg(i)] / (1.0 - q[i] - q[neg(i)])).sum::<f64>();
    let p: Vec<f64> = (0..n).map(|i| z[i] / (a * (1.0 - z[i] * z[neg(i)]))).collect();
    StepDistribution::new(&p)
}

/// Drift, entropy and the fundamental-inequality slack `ℓ v - h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftEntropyReport {
    pub drift: f64,
    pub entropy: f64,
    pub volume_entropy: f64,
    pub fundamental_slack: f64,
}

impl DriftEntropyReport {
    pub fn new(drift: f64, entropy: f64, d: usize) -> DriftEntropyReport {
        let volume_entropy = volume_entropy_free(d);
        DriftEntropyReport { drift, entropy, volume_entropy, fundamental_slack: drift * volume_entropy - entropy }
    }

    pub fn from_solution(sol: &TrafficSolution) -> Result<DriftEntropyReport> {
        Ok(DriftEntropyReport::new(drift_exact(sol)?, entropy_exact(sol), sol.rank()))
    }
}

/// Drift and entropy of a symmetric law given by its exit masses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricReport {
    pub a: f64,
    pub b: f64,
    #[serde(flatten)]
    pub report: DriftEntropyReport,
}

/// Closed forms for symmetric laws, parametrized by `q_i = q_{-i}`,
/// `i = 1..d`, with `Σ q_i = 1/2`.
pub fn symmetric_report(q_half: &[f64]) -> Result<SymmetricReport> {
    check_symmetric_q(q_half)?;
    let a = 1.0 + 2.0 * q_half.iter().map(|q| q * q / (1.0 - 2.0 * q)).sum::<f64>();
    let b = 1.0 - 2.0 * q_half.iter().map(|q| q * q).sum::<f64>();
    let entropy = -(2.0 / a) * q_half.iter().map(|q| q * (1.0 - q) * (q / (1.0 - q)).ln()).sum::<f64>();
    Ok(SymmetricReport { a, b, report: DriftEntropyReport::new(b / a, entropy, q_half.len()) })
}

/// Symmetric step law `p_i = q_i (1 - q_i) / (A (1 - 2 q_i))` from half-masses.
pub fn symmetric_p_from_q(q_half: &[f64]) -> Result<StepDistribution> {
    let a = symmetric_report(q_half)?.a;
    let half: Vec<f64> = q_half.iter().map(|q| q * (1.0 - q) / (a * (1.0 - 2.0 * q))).collect();
    StepDistribution::symmetric(&half)
}

fn check_symmetric_q(q_half: &[f64]) -> Result<()> {
    if q_half.is_empty() {
        return Err(Error::DomainViolation("empty q".into()));
    }
    if q_half.iter().any(|&q| !(q > 0.0 && q < 0.5)) {
        return Err(Error::DomainViolation("each q_i must lie in (0, 1/2)".into()));
    }
    let sum: f64 = q_half.iter().sum();
    if (sum - 0.5).abs() > 1e-12 {
        return Err(Error::DomainViolation(format!("q sums to {sum}, expected 1/2")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &[f64]) -> TrafficSolution {
        solve_traffic(&StepDistribution::new(p).unwrap(), DEFAULT_TOL).unwrap()
    }

    fn w(v: &[i32]) -> ReducedWord {
        ReducedWord::from_values(v).unwrap()
    }

    fn l(v: i32) -> Letter {
        Letter::new(v).unwrap()
    }

    #[test]
    fn uniform_rank_two() {
        let sol = solve(&[0.25; 4]);
        for i in 0..4 {
            assert!((sol.z[i] - 1.0 / 3.0).abs() < 1e-15);
            assert!((sol.q[i] - 0.25).abs() < 1e-15);
        }
        assert!((drift_exact(&sol).unwrap() - 0.5).abs() < 1e-14);
        assert!((entropy_exact(&sol) - 0.5 * 3f64.ln()).abs() < 1e-14);
        assert!((sol.a - 1.5).abs() < 1e-14);
        assert!((sol.b - 0.75).abs() < 1e-14);
    }

    #[test]
    fn uniform_rank_three() {
        let sol = solve(&[1.0 / 6.0; 6]);
        assert!((drift_exact(&sol).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        assert!((entropy_exact(&sol) - 2.0 / 3.0 * 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rank_one_transient() {
        let sol = solve(&[0.7, 0.3]);
        assert!((sol.z[0] - 1.0).abs() < 1e-12);
        assert!((sol.z[1] - 3.0 / 7.0).abs() < 1e-14);
        assert!((drift_exact(&sol).unwrap() - 0.4).abs() < 1e-12);
        assert!(entropy_exact(&sol).abs() < 1e-12);
    }

    #[test]
    fn rank_one_symmetric_is_recurrent() {
        let law = StepDistribution::new(&[0.5, 0.5]).unwrap();
        assert_eq!(solve_traffic(&law, DEFAULT_TOL), Err(Error::RecurrentWalk));
        assert_eq!(drift_rank_one(&law), 0.0);
    }

    #[test]
    fn cylinder_masses() {
        let sol = solve(&[0.25; 4]);
        assert!((cylinder_mass(&sol, &w(&[1])) - sol.q[0]).abs() < 1e-15);
        assert!((cylinder_mass(&sol, &w(&[1, 2])) - 1.0 / 12.0).abs() < 1e-15);
        let sol = solve(&[0.4, 0.2, 0.3, 0.1]);
        for &x in &[1, -1, 2] {
            let parent = w(&[2, x]);
            let children: f64 = [1, -1, 2, -2]
                .iter()
                .filter(|&&c| c != -x)
                .map(|&c| cylinder_mass(&sol, &parent.reduce_concat(l(c))))
                .sum();
            assert!((children - cylinder_mass(&sol, &parent)).abs() < 1e-14);
        }
    }

    #[test]
    fn rn_derivative_examples() {
        let sol = solve(&[0.25; 4]);
        assert!((rn_derivative(&sol, l(1), l(2)) - 1.0 / 3.0).abs() < 1e-15);
        assert!((rn_derivative(&sol, l(1), l(-1)) - 3.0).abs() < 1e-14);
        let sol = solve(&[0.4, 0.2, 0.3, 0.1]);
        for gi in 0..4 {
            let g = Letter::from_index(gi);
            let total = sol.z_of(g) * (1.0 - sol.q_of(g.inverse())) + sol.q_of(g.inverse()) / sol.z_of(g.inverse());
            assert!((total - 1.0).abs() < 1e-14);
        }
        assert!((entropy_from_rn(&sol) - entropy_exact(&sol)).abs() < 1e-12);
    }

    #[test]
    fn green_distance_examples() {
        let sol = solve(&[0.25; 4]);
        assert_eq!(green_distance(&sol, &ReducedWord::identity()), 0.0);
        assert!((green_distance(&sol, &w(&[1, 2, 2, -1, -2])) - 5.0 * 3f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn volume_entropy_values() {
        assert!((volume_entropy_free(2) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(volume_entropy_free(1), 0.0);
        assert!((volume_entropy_free(3) - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn p_from_q_examples() {
        let p = p_from_q(&[0.25; 4]).unwrap();
        for &v in p.probs() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let q = [0.1, 0.1, 0.4, 0.4];
        let p = p_from_q(&q).unwrap();
        let a = symmetric_report(&[0.1, 0.4]).unwrap().a;
        for i in 0..4 {
            let qi = q[i];
            assert!((p.probs()[i] - qi * (1.0 - qi) / (a * (1.0 - 2.0 * qi))).abs() < 1e-14);
        }
        assert!(p_from_q(&[0.5, 0.5]).is_err());
        assert!(p_from_q(&[0.6, 0.1, 0.2, 0.1]).is_ok());
        assert!(p_from_q(&[0.6, 0.4, 0.0, 0.0]).is_err());
    }

    #[test]
    fn symmetric_report_examples() {
        let r = symmetric_report(&[0.25, 0.25]).unwrap();
        assert!((r.a - 1.5).abs() < 1e-15);
        assert!((r.b - 0.75).abs() < 1e-15);
        assert!((r.report.drift - 0.5).abs() < 1e-15);
        assert!((r.report.entropy - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!(matches!(symmetric_report(&[0.5]), Err(Error::DomainViolation(_))));
        let r = symmetric_report(&[1.0 / 6.0; 3]).unwrap();
        assert!((r.report.drift - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.report.entropy - 2.0 / 3.0 * 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_closed_forms_match_general_solver() {
        let q_half = [0.1, 0.15, 0.25];
        let law = symmetric_p_from_q(&q_half).unwrap();
        let sol = solve_traffic(&law, DEFAULT_TOL).unwrap();
        let r = symmetric_report(&q_half).unwrap();
        assert!((drift_exact(&sol).unwrap() - r.report.drift).abs() < 1e-13);
        assert!((entropy_exact(&sol) - r.report.entropy).abs() < 1e-13);
        for k in 0..3 {
            assert!((sol.q[2 * k] - q_half[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn newton_handles_slow_rank_one() {
        let sol = solve(&[0.495, 0.505]);
        assert!(sol.residual <= DEFAULT_TOL);
        assert!((drift_exact(&sol).unwrap() - 0.01).abs() < 1e-12);
    }
}
