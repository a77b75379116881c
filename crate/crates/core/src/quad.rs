//! Composite Simpson rule over uniformly sampled intervals.

/// Integrates samples taken at `nq + 1` uniform nodes of an interval of the
/// given length. `nq` must be even and at least 2.
pub(crate) fn simpson(samples: &[f64], length: f64) -> f64 {
    let nq = samples.len() - 1;
    assert!(nq >= 2 && nq % 2 == 0, "Simpson needs an even number of subintervals");
    let mut acc = samples[0] + samples[nq];
    for (j, &f) in samples.iter().enumerate().take(nq).skip(1) {
        acc += f * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * length / (3.0 * nq as f64)
}

/// Error indicator for [`simpson`]: the difference against a coarser rule on
/// the same samples (stride-2 Simpson when available, trapezoid otherwise).
pub(crate) fn simpson_error_estimate(samples: &[f64], length: f64, fine: f64) -> f64 {
    let nq = samples.len() - 1;
    let coarse = if nq % 4 == 0 {
        let sub: Vec<f64> = samples.iter().copied().step_by(2).collect();
        simpson(&sub, length)
    } else {
        let h = length / nq as f64;
        let inner: f64 = samples[1..nq].iter().sum();
        h * (0.5 * (samples[0] + samples[nq]) + inner)
    };
    (fine - coarse).abs()
}
