//! Small statistics helpers for study summaries.

/// Median of finite values; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Ordinary least squares fit `y ≈ a + b x`; returns `(b, stderr(b))`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((slope, stderr))
}

/// Log-log slope of per-N means across seeds, with a leave-one-seed-out
/// jackknife standard error.
///
/// `values[g][s]` is the statistic at grid point `g` for seed `s`.
pub fn loglog_slope(grid: &[usize], values: &[Vec<f64>]) -> Option<(f64, f64)> {
    let lx: Vec<f64> = grid.iter().map(|&n| (n as f64).ln()).collect();
    let fit = |skip: Option<usize>| -> Option<f64> {
        let ly: Vec<f64> = values
            .iter()
            .map(|row| {
                let kept: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| Some(*s) != skip)
                    .map(|(_, v)| *v)
                    .collect();
                mean(&kept).ln()
            })
            .collect();
        if ly.iter().any(|v| !v.is_finite()) {
            return None;
        }
        ols_slope(&lx, &ly).map(|(b, _)| b)
    };
    let slope = fit(None)?;
    let seeds = values.first()?.len();
    if seeds < 2 {
        return Some((slope, f64::NAN));
    }
    let loo: Vec<f64> = (0..seeds).filter_map(|s| fit(Some(s))).collect();
    if loo.len() != seeds {
        return Some((slope, f64::NAN));
    }
    let m = mean(&loo);
    let var = loo.iter().map(|b| (b - m).powi(2)).sum::<f64>() * (seeds - 1) as f64 / seeds as f64;
    Some((slope, var.sqrt()))
}

/// Whether `series` is non-increasing except for at most one rise no larger
/// than `tolerance`.
pub fn non_increasing_with_one_inversion(series: &[f64], tolerance: f64) -> bool {
    let rises: Vec<f64> = series
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .collect();
    match rises.as_slice() {
        [] => true,
        [r] => *r <= tolerance,
        _ => false,
    }
}
