//! Shared entropy helpers. Natural log throughout.

/// Shannon entropy in nats with `0 · ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Entropy of an unnormalized non-negative mass vector, normalizing on the fly.
///
/// Returns `(entropy, total_mass)`; entropy is 0 when the total mass is 0.
pub fn entropy_unnormalized(mass: &[f64]) -> (f64, f64) {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return (0.0, total);
    }
    let h = mass
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            -p * p.ln()
        })
        .sum();
    (h, total)
}

/// Normalizes in place; returns the pre-normalization sum.
pub fn normalize(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
    total
}

/// Index of the largest value. Ties go to the lowest index.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some(b) if v[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}
