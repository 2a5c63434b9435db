//! Deterministic quadrature primitives.
//!
//! Reductions use fixed left-to-right pairwise summation so that results do
//! not depend on thread count or iteration batching.

use crate::float::{Cplx, Real};

/// Pairwise (cascade) sum with a fixed association order.
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    if v.len() <= 8 {
        let mut acc = T::zero();
        for &x in v {
            acc = acc + x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Pairwise sum of complex samples.
pub fn pairwise_sum_c<T: Real>(v: &[Cplx<T>]) -> Cplx<T> {
    if v.len() <= 8 {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for &x in v {
            acc = acc + x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    pairwise_sum_c(&v[..mid]) + pairwise_sum_c(&v[mid..])
}

/// Composite trapezoid rule over uniformly spaced samples.
pub fn trapezoid<T: Real>(values: &[T], dx: T) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let interior = pairwise_sum(&values[1..values.len() - 1]);
    let ends = (values[0] + values[values.len() - 1]) * T::of(0.5);
    dx * (interior + ends)
}

/// Composite trapezoid rule for complex samples.
pub fn trapezoid_c<T: Real>(values: &[Cplx<T>], dx: T) -> Cplx<T> {
    if values.len() < 2 {
        return Cplx::new(T::zero(), T::zero());
    }
    let interior = pairwise_sum_c(&values[1..values.len() - 1]);
    let ends = (values[0] + values[values.len() - 1]) * T::of(0.5);
    (interior + ends) * dx
}

/// Trapezoid weights on a uniform grid of `n` points with spacing `dx`.
pub fn trapezoid_weights<T: Real>(n: usize, dx: T) -> Vec<T> {
    let mut w = vec![dx; n];
    if n >= 2 {
        w[0] = dx * T::of(0.5);
        w[n - 1] = dx * T::of(0.5);
    }
    w
}

/// Least-squares fit of `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> (T, T, T) {
    assert_eq!(x.len(), y.len());
    let n = T::of_usize(x.len());
    let sx = pairwise_sum(x);
    let sy = pairwise_sum(y);
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > T::zero() {
        (sxy * sxy) / (sxx * syy)
    } else {
        T::one()
    };
    (a, b, r2)
}
