//! Horvitz–Thompson estimation, exact variances, estimable variance upper
//! bounds, and confidence intervals.
//!
//! The point estimator weights each selected edge by the inverse of its
//! unconditional selection probability, signed by its label (t positive,
//! c negative). Exact variances need full potential outcomes and serve as
//! simulation oracles; the estimable bound replaces the never-co-observed
//! adjacent cross terms by squared terms (Cauchy–Schwarz) and is computed
//! from selected edges only.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::decompose::{AlternatingComponent, ComponentKind};
use crate::design::{
    check_p, joint_prob, neg_pow, unconditional_prob, AssignmentRealization, DesignParams,
};
use crate::error::EstimateError;
use crate::matching::{MatchEdge, OutcomeTable};

/// Point estimate, variance bound, confidence interval, and per-component
/// diagnostics. Field names match the on-disk report format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub tau_hat: f64,
    pub sigma2_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    pub n_normalizer: f64,
    pub per_component: Vec<ComponentReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub index: usize,
    pub k: usize,
    pub kind: ComponentKind,
    pub gamma_hat: f64,
    pub sigma2_i_hat: f64,
}

/// Check that an assignment aligns with the components (same count, same
/// lengths) and satisfies design feasibility: no two consecutive selections,
/// and on a cycle the deterministic closing rule.
pub fn validate_assignment(
    components: &[AlternatingComponent],
    assignment: &AssignmentRealization,
) -> Result<(), EstimateError> {
    if assignment.w.len() != components.len() {
        return Err(EstimateError::ShapeMismatch(format!(
            "{} components but {} selection vectors",
            components.len(),
            assignment.w.len()
        )));
    }
    for (i, (comp, w)) in components.iter().zip(&assignment.w).enumerate() {
        let k = comp.k();
        if w.len() != k {
            return Err(EstimateError::ShapeMismatch(format!(
                "component {} has {} edges but {} indicators",
                i,
                k,
                w.len()
            )));
        }
        if w.iter().any(|&x| x > 1) {
            return Err(EstimateError::ShapeMismatch(format!(
                "component {} has a non-binary indicator",
                i
            )));
        }
        if w.windows(2).any(|x| x[0] == 1 && x[1] == 1) {
            return Err(EstimateError::InfeasibleAssignment(format!(
                "component {} selects two adjacent edges",
                i
            )));
        }
        if comp.is_cycle() {
            let want = (w[0] == 0 && w[k - 2] == 0) as u8;
            if w[k - 1] != want {
                return Err(EstimateError::InfeasibleAssignment(format!(
                    "component {} violates the cycle closing rule",
                    i
                )));
            }
        }
    }
    Ok(())
}

fn edge_outcome(
    y: &OutcomeTable,
    comp: &AlternatingComponent,
    j: usize,
) -> Result<f64, EstimateError> {
    let (u, v) = (comp.vertices[j], comp.vertices[j + 1]);
    y.get(u, v)
        .ok_or(EstimateError::MissingOutcome(MatchEdge { a: u, b: v }))
}

/// Per-component Horvitz–Thompson estimate of the component effect.
/// Unselected edges need no outcome: their indicator zeroes the term.
pub fn gamma_hat(
    comp: &AlternatingComponent,
    w: &[u8],
    y: &OutcomeTable,
    p: f64,
) -> Result<f64, EstimateError> {
    let mut total = 0.0;
    for j in 0..comp.k() {
        if w[j] == 1 {
            let prob = unconditional_prob(comp, j + 1, p)?;
            total += comp.labels[j].sign() * edge_outcome(y, comp, j)? / prob;
        }
    }
    Ok(total)
}

/// Horvitz–Thompson point estimate: tau_hat and the per-component terms.
pub fn ht_estimate(
    components: &[AlternatingComponent],
    assignment: &AssignmentRealization,
    y: &OutcomeTable,
    params: &DesignParams,
    n: f64,
) -> Result<(f64, Vec<f64>), EstimateError> {
    validate_assignment(components, assignment)?;
    let mut gammas = Vec::with_capacity(components.len());
    for (i, comp) in components.iter().enumerate() {
        gammas.push(gamma_hat(comp, &assignment.w[i], y, params.p_for(i))?);
    }
    // + 0.0 normalizes the -0.0 that summing an empty iterator yields.
    let tau_hat = (gammas.iter().sum::<f64>() + 0.0) / n;
    Ok((tau_hat, gammas))
}

/// Exact variance of the component estimator; requires full potential
/// outcomes, so this is an oracle computation.
pub fn variance_exact(
    comp: &AlternatingComponent,
    y: &OutcomeTable,
    p: f64,
) -> Result<f64, EstimateError> {
    check_p(p).map_err(EstimateError::Design)?;
    let k = comp.k();
    let ys: Vec<f64> = (0..k)
        .map(|j| edge_outcome(y, comp, j))
        .collect::<Result<_, _>>()?;
    Ok(variance_exact_values(comp.kind, &ys, p))
}

fn variance_exact_values(kind: ComponentKind, ys: &[f64], p: f64) -> f64 {
    let k = ys.len();
    match kind {
        ComponentKind::Path => {
            let mut v = ys.iter().map(|y| y * y).sum::<f64>() / p;
            for j in 0..k {
                for q in (j + 1)..k {
                    v += 2.0 * p.powi((q - j - 1) as i32) * ys[j] * ys[q];
                }
            }
            v
        }
        ComponentKind::Cycle => {
            // The first k-1 edges behave like a path; the closing edge adds
            // its own variance term and alternating-sign covariances.
            let denom = 1.0 + p.powi((k - 1) as i32);
            let mut v = ys[..k - 1].iter().map(|y| y * y).sum::<f64>() / p;
            for j in 0..k - 1 {
                for q in (j + 1)..k - 1 {
                    v += 2.0 * p.powi((q - j - 1) as i32) * ys[j] * ys[q];
                }
            }
            v += (p * p + 2.0 * p - p.powi((k - 1) as i32)) / denom * ys[k - 1] * ys[k - 1];
            for j in 1..k {
                let coef = cycle_last_cov_coef(j, k, p, denom);
                v += 2.0 * coef * ys[j - 1] * ys[k - 1];
            }
            v
        }
    }
}

/// Signed covariance coefficient between edge `j` (1-based) and the closing
/// edge of a cycle of length `k`.
fn cycle_last_cov_coef(j: usize, k: usize, p: f64, denom: f64) -> f64 {
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let joint = (1.0 - neg_pow(p, k - 1 - j)) * (1.0 - neg_pow(p, j - 1));
    sign * (joint / denom - 1.0)
}

/// Worst-case (over outcomes in [0, B]) variance of a component estimator:
/// the exact variance evaluated at Y = B everywhere. Computed as the
/// geometric double sum, which is algebraically equal to the closed forms
/// but stays stable arbitrarily close to p = 1 (the closed forms cancel
/// catastrophically there); at p = 1 exactly it returns the analytic limit
/// k^2 B^2 of the degenerate two-realization design.
pub fn worst_case_variance(
    kind: ComponentKind,
    k: usize,
    p: f64,
    bound: f64,
) -> Result<f64, EstimateError> {
    match kind {
        ComponentKind::Path if k >= 1 => {}
        ComponentKind::Cycle if k >= 4 && k % 2 == 0 => {}
        _ => return Err(EstimateError::InvalidK(k)),
    }
    check_p(p).map_err(EstimateError::Design)?;
    let b2 = bound * bound;
    let kf = k as f64;
    if p == 1.0 {
        return Ok(kf * kf * b2);
    }
    // Cross terms of a run of m path-like edges: 2 * sum over distances d of
    // (m - d) p^(d-1).
    let cross = |m: usize| {
        let mut total = 0.0;
        let mut pw = 1.0;
        for d in 1..m {
            total += (m - d) as f64 * pw;
            pw *= p;
        }
        2.0 * total
    };
    let value = match kind {
        ComponentKind::Path => b2 * (kf / p + cross(k)),
        ComponentKind::Cycle => {
            let denom = 1.0 + p.powi((k - 1) as i32);
            let mut v = (kf - 1.0) / p + cross(k - 1);
            v += (p * p + 2.0 * p - p.powi((k - 1) as i32)) / denom;
            for j in 1..k {
                v += 2.0 * cycle_last_cov_coef(j, k, p, denom);
            }
            b2 * v
        }
    };
    Ok(value)
}

/// Deterministic upper bound on the exact variance (full outcomes needed):
/// the exact variance with adjacent cross terms absorbed into squares.
pub fn variance_bound(
    comp: &AlternatingComponent,
    y: &OutcomeTable,
    p: f64,
) -> Result<f64, EstimateError> {
    check_p(p).map_err(EstimateError::Design)?;
    let k = comp.k();
    let ys: Vec<f64> = (0..k)
        .map(|j| edge_outcome(y, comp, j))
        .collect::<Result<_, _>>()?;
    let value = match comp.kind {
        ComponentKind::Path => {
            let mut v = (1.0 / p + 1.0) * ys.iter().map(|y| y * y).sum::<f64>();
            if k >= 2 {
                // Interior squared terms; empty for k <= 2.
                v += ys[1..k - 1].iter().map(|y| y * y).sum::<f64>();
            }
            for j in 0..k {
                for q in (j + 2)..k {
                    v += 2.0 * p.powi((q - j - 1) as i32) * ys[j] * ys[q];
                }
            }
            v
        }
        ComponentKind::Cycle => {
            let denom = 1.0 + p.powi((k - 1) as i32);
            let mut v = (1.0 / p + 2.0) * ys[..k - 1].iter().map(|y| y * y).sum::<f64>();
            for j in 0..k - 1 {
                for q in (j + 2)..k - 1 {
                    v += 2.0 * p.powi((q - j - 1) as i32) * ys[j] * ys[q];
                }
            }
            let last_sq = (p * p + 2.0 * p - p.powi((k - 1) as i32)) / denom + 2.0;
            v += last_sq * ys[k - 1] * ys[k - 1];
            for j in 2..=k - 2 {
                let coef = cycle_last_cov_coef(j, k, p, denom);
                v += 2.0 * coef * ys[j - 1] * ys[k - 1];
            }
            v
        }
    };
    Ok(value)
}

/// Horvitz–Thompson estimate of the variance upper bound, computed from
/// selected edges only. Terms whose co-selection indicator is zero
/// contribute zero, so their (possibly zero) joint probability never
/// divides anything.
pub fn sigma2_i_hat(
    comp: &AlternatingComponent,
    w: &[u8],
    y: &OutcomeTable,
    p: f64,
) -> Result<f64, EstimateError> {
    check_p(p).map_err(EstimateError::Design)?;
    let k = comp.k();
    let out = |j: usize| edge_outcome(y, comp, j);
    let marginal = p / (1.0 + p);
    let value = match comp.kind {
        ComponentKind::Path => {
            let mut v = 0.0;
            for j in 0..k {
                if w[j] == 1 {
                    let yj = out(j)?;
                    let mut coef = 1.0 / p + 1.0;
                    if j >= 1 && j + 1 < k {
                        coef += 1.0;
                    }
                    v += coef * yj * yj / marginal;
                }
            }
            for j in 0..k {
                for q in (j + 2)..k {
                    if w[j] == 1 && w[q] == 1 {
                        let joint = joint_prob(comp, j + 1, q + 1, p)?;
                        v += 2.0 * p.powi((q - j - 1) as i32) * out(j)? * out(q)? / joint;
                    }
                }
            }
            v
        }
        ComponentKind::Cycle => {
            let denom = 1.0 + p.powi((k - 1) as i32);
            let mut v = 0.0;
            for j in 0..k - 1 {
                if w[j] == 1 {
                    let yj = out(j)?;
                    v += (1.0 / p + 2.0) * yj * yj / marginal;
                }
            }
            for j in 0..k - 1 {
                for q in (j + 2)..k - 1 {
                    if w[j] == 1 && w[q] == 1 {
                        let joint = joint_prob(comp, j + 1, q + 1, p)?;
                        v += 2.0 * p.powi((q - j - 1) as i32) * out(j)? * out(q)? / joint;
                    }
                }
            }
            if w[k - 1] == 1 {
                let yk = out(k - 1)?;
                let last_marginal = unconditional_prob(comp, k, p)?;
                let coef = (p * p + 2.0 * p - p.powi((k - 1) as i32)) / denom + 2.0;
                v += coef * yk * yk / last_marginal;
                for j in 2..=k - 2 {
                    if w[j - 1] == 1 {
                        let joint = joint_prob(comp, j, k, p)?;
                        let coef = cycle_last_cov_coef(j, k, p, denom);
                        v += 2.0 * coef * out(j - 1)? * yk / joint;
                    }
                }
            }
            v
        }
    };
    Ok(value)
}

/// Estimated variance upper bound of tau_hat: per-component bound estimates
/// summed and divided by n^2.
pub fn variance_bound_estimate(
    components: &[AlternatingComponent],
    assignment: &AssignmentRealization,
    y: &OutcomeTable,
    params: &DesignParams,
    n: f64,
) -> Result<(f64, Vec<f64>), EstimateError> {
    validate_assignment(components, assignment)?;
    let mut per = Vec::with_capacity(components.len());
    for (i, comp) in components.iter().enumerate() {
        per.push(sigma2_i_hat(comp, &assignment.w[i], y, params.p_for(i))?);
    }
    let sigma2 = (per.iter().sum::<f64>() + 0.0) / (n * n);
    Ok((sigma2, per))
}

/// Exact variance of tau_hat over all components (oracle; full outcomes).
pub fn variance_exact_total(
    components: &[AlternatingComponent],
    y: &OutcomeTable,
    params: &DesignParams,
    n: f64,
) -> Result<f64, EstimateError> {
    let mut total = 0.0;
    for (i, comp) in components.iter().enumerate() {
        total += variance_exact(comp, y, params.p_for(i))?;
    }
    Ok(total / (n * n))
}

/// Symmetric normal-approximation interval at confidence level alpha.
pub fn confidence_interval(
    tau_hat: f64,
    sigma2_hat: f64,
    alpha: f64,
) -> Result<(f64, f64), EstimateError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimateError::InvalidAlpha(alpha));
    }
    if sigma2_hat.is_nan() || sigma2_hat < 0.0 {
        return Err(EstimateError::NegativeVariance(sigma2_hat));
    }
    let quantile = Normal::standard().inverse_cdf((1.0 + alpha) / 2.0);
    let half = quantile * sigma2_hat.sqrt();
    Ok((tau_hat - half, tau_hat + half))
}

/// Variance of the naive (whole-plan coin flip) estimator.
pub fn naive_variance(ybar_t: f64, ybar_c: f64) -> f64 {
    let s = ybar_t + ybar_c;
    s * s
}

/// Full estimation pipeline: point estimate, variance bound estimate, and
/// confidence interval.
pub fn estimate_report(
    components: &[AlternatingComponent],
    assignment: &AssignmentRealization,
    y: &OutcomeTable,
    params: &DesignParams,
    n: f64,
    alpha: f64,
) -> Result<EstimateReport, EstimateError> {
    let (tau_hat, gammas) = ht_estimate(components, assignment, y, params, n)?;
    let (sigma2_hat, per_sigma2) = variance_bound_estimate(components, assignment, y, params, n)?;
    let (ci_lo, ci_hi) = confidence_interval(tau_hat, sigma2_hat, alpha)?;
    let per_component = components
        .iter()
        .enumerate()
        .map(|(i, c)| ComponentReport {
            index: i,
            k: c.k(),
            kind: c.kind,
            gamma_hat: gammas[i],
            sigma2_i_hat: per_sigma2[i],
        })
        .collect();
    Ok(EstimateReport {
        tau_hat,
        sigma2_hat,
        ci_lo,
        ci_hi,
        alpha,
        n_normalizer: n,
        per_component,
    })
}
