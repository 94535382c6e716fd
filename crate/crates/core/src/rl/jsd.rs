use super::RlError;

/// Jensen-Shannon divergence of a population of categorical distributions:
/// the mean KL divergence of each member from the arithmetic mean policy.
/// Zero-probability terms contribute nothing. The result lies in `[0, ln n]`.
pub fn population_jsd<D: AsRef<[f64]>>(dists: &[D]) -> Result<f64, RlError> {
    let mean = mean_policy(dists)?;
    let first = dists[0].as_ref();
    if dists.iter().all(|d| d.as_ref() == first) {
        return Ok(0.0);
    }
    let n = dists.len() as f64;
    let mut total = 0.0;
    for d in dists {
        for (p, m) in d.as_ref().iter().zip(&mean) {
            if *p > 0.0 {
                total += p * (p / m).ln();
            }
        }
    }
    Ok((total / n).max(0.0))
}

/// Shannon entropy of the population's mean policy.
pub fn population_entropy<D: AsRef<[f64]>>(dists: &[D]) -> Result<f64, RlError> {
    let mean = mean_policy(dists)?;
    Ok(-mean
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}

fn mean_policy<D: AsRef<[f64]>>(dists: &[D]) -> Result<Vec<f64>, RlError> {
    let first = dists.first().ok_or(RlError::EmptyPopulation)?.as_ref();
    let k = first.len();
    let mut mean = vec![0.0; k];
    for d in dists {
        let d = d.as_ref();
        if d.len() != k {
            return Err(RlError::SupportMismatch { expected: k, found: d.len() });
        }
        for (m, p) in mean.iter_mut().zip(d) {
            *m += p;
        }
    }
    let n = dists.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}
