//! Small numerical kernels shared across modules.
//!
//! Everything here is deterministic and allocation-light: divided
//! differences on (possibly nonuniform) grids, composite quadrature,
//! monotone bisection, smoothstep cutoffs and fixed Gauss-Legendre nodes.
//! Higher-level conventions (measure normalizations, trivializations) live
//! in the domain modules, not here.

use crate::error::{Error, Result};

/// Validates a strictly increasing grid with at least `min_len` points.
pub fn validate_grid(xs: &[f64], min_len: usize) -> Result<()> {
    if xs.len() < min_len {
        return Err(Error::InvalidGrid(format!(
            "need at least {min_len} points, got {}",
            xs.len()
        )));
    }
    for w in xs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(format!(
                "abscissae not strictly increasing near x = {}",
                w[0]
            )));
        }
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("non-finite abscissa".into()));
    }
    Ok(())
}

/// True when the grid spacing is uniform to relative tolerance 1e-9.
pub fn is_uniform(xs: &[f64]) -> bool {
    if xs.len() < 2 {
        return true;
    }
    let h = xs[1] - xs[0];
    xs.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs())
}

/// First derivative by centered divided differences; one-sided at the ends.
///
/// On nonuniform grids the centered value is the derivative of the local
/// quadratic interpolant, second order in the cell widths.
pub fn divided_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    let mut out = vec![0.0; m];
    if m < 2 {
        return out;
    }
    out[0] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    out[m - 1] = (ys[m - 1] - ys[m - 2]) / (xs[m - 1] - xs[m - 2]);
    for i in 1..m - 1 {
        let hl = xs[i] - xs[i - 1];
        let hr = xs[i + 1] - xs[i];
        let sl = (ys[i] - ys[i - 1]) / hl;
        let sr = (ys[i + 1] - ys[i]) / hr;
        // quadratic-fit derivative: weights the one-sided slopes by the
        // opposite cell width
        out[i] = (hr * sl + hl * sr) / (hl + hr);
    }
    out
}

/// Second derivative by the three-point divided difference (interior only;
/// end values are copied from their neighbors).
pub fn divided_curvature(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    let mut out = vec![0.0; m];
    if m < 3 {
        return out;
    }
    for i in 1..m - 1 {
        let hl = xs[i] - xs[i - 1];
        let hr = xs[i + 1] - xs[i];
        let sl = (ys[i] - ys[i - 1]) / hl;
        let sr = (ys[i + 1] - ys[i]) / hr;
        out[i] = 2.0 * (sr - sl) / (hl + hr);
    }
    out[0] = out[1];
    out[m - 1] = out[m - 2];
    out
}

/// Fourth-order centered first derivative on a uniform grid (5-point
/// stencil); falls back to second order within two points of the ends.
pub fn slopes_order4(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    if m < 5 || !is_uniform(xs) {
        return divided_slopes(xs, ys);
    }
    let h = xs[1] - xs[0];
    let mut out = divided_slopes(xs, ys);
    for i in 2..m - 2 {
        out[i] = (ys[i - 2] - 8.0 * ys[i - 1] + 8.0 * ys[i + 1] - ys[i + 2]) / (12.0 * h);
    }
    out
}

/// Fourth-order centered second derivative on a uniform grid (5-point
/// stencil); falls back to second order near the ends.
pub fn curvature_order4(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    if m < 5 || !is_uniform(xs) {
        return divided_curvature(xs, ys);
    }
    let h = xs[1] - xs[0];
    let mut out = divided_curvature(xs, ys);
    for i in 2..m - 2 {
        out[i] = (-ys[i - 2] + 16.0 * ys[i - 1] - 30.0 * ys[i] + 16.0 * ys[i + 1]
            - ys[i + 2])
            / (12.0 * h * h);
    }
    out
}

/// Composite trapezoid integral on a (possibly nonuniform) grid.
pub fn trapezoid(xs: &[f64], fs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (fs[i] + fs[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// Cumulative trapezoid integral; out[0] = 0.
pub fn trapezoid_cumulative(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        out[i] = out[i - 1] + 0.5 * (fs[i] + fs[i - 1]) * (xs[i] - xs[i - 1]);
    }
    out
}

/// Composite Simpson rule over a uniform sample with an odd point count.
///
/// Falls back to trapezoid on the last cell when the count is even.
pub fn simpson_uniform(fs: &[f64], h: f64) -> f64 {
    let m = fs.len();
    if m < 3 {
        return if m == 2 { 0.5 * (fs[0] + fs[1]) * h } else { 0.0 };
    }
    let pairs = (m - 1) / 2;
    let mut acc = 0.0;
    for k in 0..pairs {
        acc += fs[2 * k] + 4.0 * fs[2 * k + 1] + fs[2 * k + 2];
    }
    let mut total = acc * h / 3.0;
    if (m - 1) % 2 == 1 {
        total += 0.5 * (fs[m - 2] + fs[m - 1]) * h;
    }
    total
}

/// Bisection for a nondecreasing function; returns x with f(x) = target to
/// absolute tolerance `tol` on x. Requires f(lo) <= target <= f(hi).
pub fn bisect_monotone(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    tol: f64,
) -> Result<f64> {
    let mut flo = f(lo) - target;
    let fhi = f(hi) - target;
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::NoConvergence(format!(
            "bisection bracket invalid: f({lo}) - t = {flo:e}, f({hi}) - t = {:e}",
            fhi
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid) - target;
        if fm <= 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let _ = flo;
    Ok(0.5 * (lo + hi))
}

/// Linear interpolation of tabulated values; clamps outside the table.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => ys[i],
        Err(0) => ys[0],
        Err(i) if i >= xs.len() => ys[xs.len() - 1],
        Err(i) => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

/// Cubic (4-point Lagrange) interpolation on a uniform grid; used where the
/// second-order kink of linear interpolation would dominate a certificate.
pub fn interp_cubic_uniform(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let m = xs.len();
    if m < 4 {
        return interp_linear(xs, ys, x);
    }
    let h = xs[1] - xs[0];
    let pos = (x - xs[0]) / h;
    let i = (pos.floor() as isize).clamp(1, m as isize - 3) as usize;
    let s = pos - i as f64;
    let (a, b, c, d) = (ys[i - 1], ys[i], ys[i + 1], ys[i + 2]);
    // Lagrange basis on offsets {-1, 0, 1, 2}
    let w0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let w2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let w3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    a * w0 + b * w1 + c * w2 + d * w3
}

/// Clamps a sequence to be nondecreasing; returns the largest decrease that
/// was removed.
pub fn clamp_nondecreasing(values: &mut [f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 1..values.len() {
        if values[i] < values[i - 1] {
            worst = worst.max(values[i - 1] - values[i]);
            values[i] = values[i - 1];
        }
    }
    worst
}

/// Cubic smoothstep on [0, 1]: 0 at 0, 1 at 1, C^1 at both ends.
pub fn smoothstep3(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Derivative of [`smoothstep3`] (with respect to u).
pub fn smoothstep3_d1(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    6.0 * u * (1.0 - u)
}

/// Quintic smoothstep on [0, 1]: C^2 at both ends.
pub fn smoothstep5(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

/// Antiderivative of [`smoothstep5`] with value 0 at u = 0.
pub fn smoothstep5_integral(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        // integral over [0,1] is 1/2; continues with slope 1
        return 0.5 + (u - 1.0);
    }
    let u4 = u * u * u * u;
    u4 * (2.5 + u * (-3.0 + u))
}

/// 32-point Gauss-Legendre nodes and weights on [-1, 1].
///
/// Generated by Newton iteration on the Legendre recurrence at startup; the
/// node count integrates smooth mollifier kernels to machine precision.
pub fn gauss_legendre_32() -> Vec<(f64, f64)> {
    gauss_legendre(32)
}

/// Gauss-Legendre nodes/weights on [-1, 1] for small n (Newton on P_n).
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..64 {
            let (p, dp) = legendre_p_dp(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_p_dp(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_p_dp(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Eigenvalues of the symmetric 2x2 matrix [[a, b], [b, c]], ascending.
pub fn eig2_sym(a: f64, b: f64, c: f64) -> (f64, f64) {
    let tr = a + c;
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Upper incomplete gamma Gamma(n, u) for small integer n >= 1:
/// (n-1)! e^{-u} sum_{k<n} u^k / k!.
pub fn upper_gamma_int(n: usize, u: f64) -> f64 {
    let mut fact = 1.0;
    for k in 2..n {
        fact *= k as f64;
    }
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 0..n {
        if k > 0 {
            term *= u / k as f64;
        }
        sum += term;
    }
    fact * (-u).exp() * sum
}
