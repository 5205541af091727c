//! Adaptive Simpson quadrature.

/// `∫_a^b f` to relative tolerance `rel_tol` (absolute below `1e-300`).
///
/// The integrand should be smooth on `[a, b]`; callers split at kinks.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -adaptive_simpson(f, b, a, rel_tol);
    }
    // coarse composite estimate to scale the tolerance
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let mut coarse = Vec::with_capacity(PANELS);
    let mut scale = 0.0;
    for i in 0..PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == PANELS { b } else { lo + h };
        let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let s = simpson(lo, hi, flo, fmid, fhi);
        scale += s.abs();
        coarse.push((lo, hi, flo, fmid, fhi, s));
    }
    let eps = (rel_tol * scale).max(1e-300) / PANELS as f64;
    coarse
        .into_iter()
        .map(|(lo, hi, flo, fmid, fhi, s)| refine(&f, lo, hi, flo, fmid, fhi, s, eps, 50))
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

/// Composite trapezoid rule with `n` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}
