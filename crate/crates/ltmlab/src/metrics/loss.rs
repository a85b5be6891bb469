use crate::tensor::{Tape, Tensor, Var};

use super::{crps_studentt, studentt_logpdf, MetricError};

/// The three scores every evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTriple {
    pub mse: f64,
    pub crps: f64,
    pub nll: f64,
}

fn masked_mean(values: impl Iterator<Item = f64>, mask: &[f64]) -> Result<f64, MetricError> {
    let mut sum = 0.0;
    let mut count = 0.0;
    for (v, &m) in values.zip(mask) {
        if m > 0.0 {
            sum += v;
            count += 1.0;
        }
    }
    if count == 0.0 {
        return Err(MetricError::EmptyBatch);
    }
    Ok(sum / count)
}

fn check_len(lhs: usize, rhs: usize) -> Result<(), MetricError> {
    if lhs != rhs {
        return Err(MetricError::LengthMismatch { lhs, rhs });
    }
    Ok(())
}

/// Mean squared error of the point predictions over unmasked positions.
/// `mask` entries are 0/1 weights; `None` means everything counts.
pub fn point_mse(mu: &[f64], targets: &[f64], mask: Option<&[f64]>) -> Result<f64, MetricError> {
    check_len(mu.len(), targets.len())?;
    let ones;
    let mask = match mask {
        Some(m) => {
            check_len(mu.len(), m.len())?;
            m
        }
        None => {
            ones = vec![1.0; mu.len()];
            &ones
        }
    };
    masked_mean(
        mu.iter().zip(targets).map(|(&p, &t)| (p - t) * (p - t)),
        mask,
    )
}

/// Flat means of MSE, CRPS, and NLL over every unmasked position.
pub fn batch_scores(
    mu: &[f64],
    sigma: &[f64],
    nu: &[f64],
    targets: &[f64],
    mask: Option<&[f64]>,
) -> Result<ScoreTriple, MetricError> {
    check_len(mu.len(), sigma.len())?;
    check_len(mu.len(), nu.len())?;
    check_len(mu.len(), targets.len())?;
    let ones;
    let mask = match mask {
        Some(m) => {
            check_len(mu.len(), m.len())?;
            m
        }
        None => {
            ones = vec![1.0; mu.len()];
            &ones
        }
    };
    let mut sums = [0.0f64; 3];
    let mut count = 0.0;
    for i in 0..mu.len() {
        if mask[i] <= 0.0 {
            continue;
        }
        let d = mu[i] - targets[i];
        sums[0] += d * d;
        sums[1] += crps_studentt(targets[i], mu[i], sigma[i], nu[i])?;
        sums[2] -= studentt_logpdf(targets[i], mu[i], sigma[i], nu[i])?;
        count += 1.0;
    }
    if count == 0.0 {
        return Err(MetricError::EmptyBatch);
    }
    Ok(ScoreTriple {
        mse: sums[0] / count,
        crps: sums[1] / count,
        nll: sums[2] / count,
    })
}

/// Differentiable masked mean negative log-likelihood of the Student's-t
/// head. `mu`, `sigma`, `nu` are tape nodes shaped like `targets`; `mask`
/// holds 0/1 weights. Gradient flows through all three parameter nodes.
pub fn nll_loss(
    tape: &mut Tape,
    mu: Var,
    sigma: Var,
    nu: Var,
    targets: &Tensor,
    mask: &Tensor,
) -> Result<Var, MetricError> {
    let count: f64 = mask.data().iter().filter(|&&m| m > 0.0).count() as f64;
    if count == 0.0 || targets.numel() == 0 {
        return Err(MetricError::EmptyBatch);
    }
    let y = tape.constant(targets);
    let m = tape.constant(mask);
    let diff = tape.sub(y, mu)?;
    let z = tape.div(diff, sigma)?;
    let z2 = tape.mul(z, z)?;
    let z2_over_nu = tape.div(z2, nu)?;
    let one_plus = tape.add_scalar(z2_over_nu, 1.0);
    let ln_term = tape.ln(one_plus);
    let nu_plus_half = {
        let t = tape.add_scalar(nu, 1.0);
        tape.mul_scalar(t, 0.5)
    };
    let tail = tape.mul(nu_plus_half, ln_term)?;
    let lg_upper = tape.ln_gamma(nu_plus_half);
    let half_nu = tape.mul_scalar(nu, 0.5);
    let lg_lower = tape.ln_gamma(half_nu);
    let ln_nu = tape.ln(nu);
    let half_ln_nu_pi = {
        let t = tape.add_scalar(ln_nu, std::f64::consts::PI.ln());
        tape.mul_scalar(t, 0.5)
    };
    let ln_sigma = tape.ln(sigma);
    // logpdf = lg_upper - lg_lower - half_ln_nu_pi - ln_sigma - tail
    let a = tape.sub(lg_upper, lg_lower)?;
    let b = tape.sub(a, half_ln_nu_pi)?;
    let c = tape.sub(b, ln_sigma)?;
    let logpdf = tape.sub(c, tail)?;
    let nll = tape.mul_scalar(logpdf, -1.0);
    let masked = tape.mul(nll, m)?;
    let total = tape.sum(masked);
    Ok(tape.mul_scalar(total, 1.0 / count))
}
