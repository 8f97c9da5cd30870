use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|, 1e-12)` over checked coordinates.
    pub max_rel_error: f64,
    /// Index of the coordinate with the largest error.
    pub worst: Option<usize>,
    pub checked: usize,
    /// Coordinates where both gradients are below `1e-12` in magnitude.
    pub skipped: usize,
}

/// Minimum number of coordinates examined when a group is subsampled.
pub const MIN_SAMPLED_COORDS: usize = 200;

/// Compares `analytic` against central differences
/// `(f(x + step e_i) - f(x - step e_i)) / (2 step)`.
///
/// With `max_coords = Some(m)` and more than `m` parameters, a seeded uniform
/// sample of `max(m, 200)` coordinates is checked instead of all of them.
pub fn grad_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    step: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    assert!(step > 0.0, "finite-difference step must be positive");
    let coords: Vec<usize> = match max_coords {
        Some(m) if params.len() > m.max(MIN_SAMPLED_COORDS) => {
            let mut r = rng::substream(seed, "grad-check");
            rng::sample_indices(params.len(), m.max(MIN_SAMPLED_COORDS), &mut r)
        }
        _ => (0..params.len()).collect(),
    };

    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for i in coords {
        let keep = x[i];
        x[i] = keep + step;
        let up = loss(&x);
        x[i] = keep - step;
        let down = loss(&x);
        x[i] = keep;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        if a.abs() < 1e-12 && numeric.abs() < 1e-12 {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(i);
        }
    }
    report
}
