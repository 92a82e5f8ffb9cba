//! Adaptive Gauss-Kronrod quadrature (G7-K15 pair with recursive bisection).
//!
//! Shared backend for every delay-averaged moment integral. Integrands here
//! are piecewise smooth with kinks (the rectangular triangle pulse, linear
//! interpolation of the cached convolution grid), so callers split at known
//! breakpoints and the adaptive refinement handles the rest.

use crate::scalar::Scalar;

// Kronrod-15 abscissae (positive half) and weights, Gauss-7 weights embedded
// at the odd positions.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// Single G7-K15 evaluation over `[a, b]`. Returns `(kronrod, |kronrod - gauss|)`.
fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::of(0.5);
    let center = (a + b) * half;
    let hw = (b - a) * half;
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let dx = hw * T::of(x);
        let val = if i == 7 {
            f(center)
        } else {
            f(center - dx) + f(center + dx)
        };
        kronrod += T::of(wk) * val;
        if i % 2 == 1 {
            gauss += T::of(WG[i / 2]) * val;
        }
    }
    kronrod *= hw;
    gauss *= hw;
    (kronrod, (kronrod - gauss).abs())
}

fn adaptive_rec<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T, depth: u32) -> T {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < T::of(1e-14) {
        return k;
    }
    let mid = (a + b) * T::of(0.5);
    let half_tol = tol * T::of(0.5);
    adaptive_rec(f, a, mid, half_tol, depth - 1) + adaptive_rec(f, mid, b, half_tol, depth - 1)
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    adaptive_rec(&f, a, b, tol, 28)
}

/// Adaptive quadrature with the interval pre-split at `breakpoints`
/// (unsorted, possibly outside `[a, b]`; out-of-range points are ignored).
pub fn adaptive_split<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T, breakpoints: &[T]) -> T {
    let mut pts: Vec<T> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let n = pts.len() + 1;
    let sub_tol = tol / T::of(n as f64);
    let mut total = T::zero();
    let mut lo = a;
    for &p in &pts {
        total += adaptive_rec(&f, lo, p, sub_tol, 28);
        lo = p;
    }
    total + adaptive_rec(&f, lo, b, sub_tol, 28)
}

/// Vector-valued G7-K15 pass over `[a, b]`. `f` must overwrite every
/// component of its output slice. Fills `kron` with the Kronrod estimate and
/// `err` with the per-component `|kronrod - gauss|`.
fn gk15_vec<F: Fn(f64, &mut [f64])>(f: &F, a: f64, b: f64, kron: &mut [f64], err: &mut [f64]) {
    let dim = kron.len();
    let center = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let mut gauss = vec![0.0; dim];
    let mut val = vec![0.0; dim];
    let mut other = vec![0.0; dim];
    kron.fill(0.0);
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let dx = hw * x;
        if i == 7 {
            f(center, &mut val);
        } else {
            f(center - dx, &mut val);
            f(center + dx, &mut other);
            for (v, o) in val.iter_mut().zip(&other) {
                *v += *o;
            }
        }
        for c in 0..dim {
            kron[c] += wk * val[c];
            if i % 2 == 1 {
                gauss[c] += WG[i / 2] * val[c];
            }
        }
    }
    for c in 0..dim {
        kron[c] *= hw;
        err[c] = (kron[c] - gauss[c] * hw).abs();
    }
}

fn adaptive_vec_rec<F: Fn(f64, &mut [f64])>(
    f: &F,
    a: f64,
    b: f64,
    tol: &[f64],
    depth: u32,
    out: &mut [f64],
) {
    let dim = out.len();
    let mut kron = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    gk15_vec(f, a, b, &mut kron, &mut err);
    let done = err.iter().zip(tol).all(|(&e, &t)| e <= t);
    if done || depth == 0 || (b - a).abs() < 1e-14 {
        for (o, k) in out.iter_mut().zip(&kron) {
            *o += *k;
        }
        return;
    }
    let mid = 0.5 * (a + b);
    let half: Vec<f64> = tol.iter().map(|&t| 0.5 * t).collect();
    adaptive_vec_rec(f, a, mid, &half, depth - 1, out);
    adaptive_vec_rec(f, mid, b, &half, depth - 1, out);
}

/// Adaptive quadrature of a vector-valued integrand over `[a, b]` with a
/// per-component absolute tolerance, accumulated into `out`. All components
/// share each integrand evaluation, which is the point: callers bundle
/// moments whose integrands share an expensive common factor.
pub fn adaptive_vec<F: Fn(f64, &mut [f64])>(f: &F, a: f64, b: f64, tol: &[f64], out: &mut [f64]) {
    if a == b {
        return;
    }
    adaptive_vec_rec(f, a, b, tol, 24, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        // K15 is exact for degree <= 22.
        let v = adaptive(|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn kinked_integrand() {
        // Triangle |x| over [-1, 1] has a kink at 0.
        let v = adaptive(|x: f64| x.abs(), -1.0, 1.0, 1e-10);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_matches_plain() {
        let f = |x: f64| (x - 0.3).max(0.0);
        let plain = adaptive(f, 0.0, 1.0, 1e-11);
        let split = adaptive_split(f, 0.0, 1.0, 1e-11, &[0.3, 2.0, -1.0]);
        assert!((plain - split).abs() < 1e-10);
        assert!((split - 0.5 * 0.7 * 0.7).abs() < 1e-10);
    }

    #[test]
    fn vector_matches_scalar() {
        let f = |x: f64, out: &mut [f64]| {
            out[0] = x.abs();
            out[1] = 1e4 * (x - 0.3).max(0.0);
        };
        let mut out = [0.0; 2];
        adaptive_vec(&f, -1.0, 1.0, &[1e-10, 1e-6], &mut out);
        assert!((out[0] - 1.0).abs() < 1e-9);
        assert!((out[1] - 1e4 * 0.5 * 0.7 * 0.7).abs() < 1e-5);
    }

    #[test]
    fn works_in_f32() {
        let v = adaptive(|x: f32| x.sin(), 0.0f32, std::f32::consts::PI, 1e-5);
        assert!((v - 2.0).abs() < 1e-4);
    }
}
