//! Compute frontier: the envelope of minimum loss attained at or below
//! each cumulative compute value, merged across runs.

use super::ScalingError;

/// Merges `(compute, loss)` curves from many runs and returns the running
/// minimum over increasing compute: one output point per distinct compute
/// value, loss non-increasing. Each input log must already be strictly
/// increasing in compute (run logs are by construction).
pub fn compute_frontier(logs: &[Vec<(u128, f64)>]) -> Result<Vec<(u128, f64)>, ScalingError> {
    let mut merged: Vec<(u128, f64)> = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        for pair in log.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(ScalingError::NonMonotoneCompute { log: i });
            }
        }
        merged.extend_from_slice(log);
    }
    if merged.is_empty() {
        return Err(ScalingError::NoPoints);
    }
    merged.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(u128, f64)> = Vec::with_capacity(merged.len());
    let mut best = f64::INFINITY;
    for (c, loss) in merged {
        best = best.min(loss);
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 = best,
            _ => out.push((c, best)),
        }
    }
    Ok(out)
}
