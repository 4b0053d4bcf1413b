//! Small statistics toolbox: type-7 quantiles, iterated 3-sigma clipping and
//! a kernel-density mode estimate.

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R and NumPy default): `h = (n-1)p`,
/// `q = x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h])`.
///
/// Runs in linear time by selection. Returns `None` for an empty slice.
///
/// # Panics
/// If `p` is outside `[0, 1]` or the data contains NaN.
pub fn quantile(data: &[f64], p: f64) -> Option<f64> {
    assert!((0.0..=1.0).contains(&p), "quantile level {p} outside [0, 1]");
    if data.is_empty() {
        return None;
    }
    let mut v = data.to_vec();
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut x_lo, upper) = v.select_nth_unstable_by(lo, |a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    if frac == 0.0 || upper.is_empty() {
        return Some(x_lo);
    }
    let x_hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Some(x_lo + frac * (x_hi - x_lo))
}

/// `(q25, median, q75)`.
pub fn quartiles(data: &[f64]) -> Option<(f64, f64, f64)> {
    Some((quantile(data, 0.25)?, quantile(data, 0.5)?, quantile(data, 0.75)?))
}

pub fn mean(data: &[f64]) -> Option<f64> {
    (!data.is_empty()).then(|| data.iter().sum::<f64>() / data.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(data: &[f64]) -> Option<f64> {
    let m = mean(data)?;
    Some((data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / data.len() as f64).sqrt())
}

/// Unbiased sample variance; `None` below two points.
pub fn sample_variance(data: &[f64]) -> Option<f64> {
    if data.len() < 2 {
        return None;
    }
    let m = mean(data)?;
    Some(data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (data.len() - 1) as f64)
}

/// Drops points further than 3 population standard deviations from the
/// mean, recomputing mean and sigma on the survivors until nothing more is
/// dropped. Returns the survivors in input order and the number removed.
///
/// Because the loop runs to a fixed point, applying it to its own output
/// removes nothing.
pub fn remove_outliers_3sigma(data: &[f64]) -> (Vec<f64>, usize) {
    let mut kept = data.to_vec();
    while let (Some(m), Some(s)) = (mean(&kept), std_dev(&kept)) {
        let before = kept.len();
        kept.retain(|x| (x - m).abs() <= 3.0 * s);
        if kept.len() == before {
            break;
        }
    }
    let removed = data.len() - kept.len();
    (kept, removed)
}

/// Location of the highest peak of a Gaussian kernel density estimate with
/// Silverman's rule-of-thumb bandwidth, evaluated on a 2000-point grid.
pub fn kde_mode(data: &[f64]) -> Option<f64> {
    match data.len() {
        0 => return None,
        1 => return Some(data[0]),
        _ => {}
    }
    let sd = sample_variance(data)?.sqrt();
    let (q25, _, q75) = quartiles(data)?;
    let spread = match (q75 - q25) / 1.34 {
        iqr if iqr > 0.0 => sd.min(iqr),
        _ => sd,
    };
    if spread == 0.0 {
        return Some(data[0]);
    }
    let h = 0.9 * spread * (data.len() as f64).powf(-0.2);
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    const GRID: usize = 2000;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..GRID {
        let x = lo + i as f64 * step;
        let d: f64 = data
            .iter()
            .map(|v| {
                let z = (x - v) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        if d > best.1 {
            best = (x, d);
        }
    }
    Some(best.0)
}
