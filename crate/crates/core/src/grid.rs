//! Sampled potentials on uniform grids.

use crate::error::{KdvError, Result};
use crate::float::Real;

/// A decaying potential u(x) sampled on a uniform grid, together with the
/// asserted exponential envelope |u(x)| <= M e^{-a|x|} away from the core.
#[derive(Clone, Debug)]
pub struct GridPotential<T> {
    pub x0: T,
    pub dx: T,
    pub values: Vec<T>,
    /// Envelope rate `a` in |u| <= M e^{-a|x|}.
    pub decay_rate: T,
    /// Envelope constant `M`.
    pub envelope_m: T,
}

impl<T: Real> GridPotential<T> {
    pub fn new(x0: T, dx: T, values: Vec<T>, decay_rate: T, envelope_m: T) -> Result<Self> {
        if !(dx > T::zero()) {
            return Err(KdvError::invalid("grid spacing must be positive"));
        }
        if values.len() < 16 {
            return Err(KdvError::invalid("potential needs at least 16 samples"));
        }
        if !(decay_rate > T::zero()) {
            return Err(KdvError::invalid("decay rate must be positive"));
        }
        Ok(GridPotential {
            x0,
            dx,
            values,
            decay_rate,
            envelope_m,
        })
    }

    /// Sample an analytic potential on `[-half_width, half_width]`.
    pub fn from_fn(
        half_width: T,
        dx: T,
        decay_rate: T,
        envelope_m: T,
        f: impl Fn(T) -> T,
    ) -> Result<Self> {
        let n = (T::of(2.0) * half_width / dx).round().as_f64() as usize + 1;
        let x0 = -half_width;
        let values = (0..n).map(|i| f(x0 + dx * T::of_usize(i))).collect();
        Self::new(x0, dx, values, decay_rate, envelope_m)
    }

    /// Infer envelope metadata from the samples themselves (used when a CSV
    /// file carries no decay information).
    pub fn from_samples_infer_decay(x0: T, dx: T, values: Vec<T>) -> Result<Self> {
        let n = values.len();
        if n < 16 {
            return Err(KdvError::invalid("potential needs at least 16 samples"));
        }
        let sup = values.iter().fold(T::zero(), |s, v| s.max(v.abs()));
        // Fit a rate from the two right-tail deciles; fall back to a gentle
        // default when the tail is at round-off level.
        let i1 = n - 1 - n / 10;
        let i2 = n - 1 - n / 20;
        let v1 = values[i1].abs();
        let v2 = values[i2].abs();
        let floor = T::of(1e-300);
        let rate = if v1 > floor && v2 > floor && v1 > v2 {
            ((v1 / v2).ln() / (dx * T::of_usize(i2 - i1))).max(T::of(0.05))
        } else {
            T::of(0.5)
        };
        let m = sup * T::of(4.0) + T::of(1e-30);
        Self::new(x0, dx, values, rate, m)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn x_at(&self, i: usize) -> T {
        self.x0 + self.dx * T::of_usize(i)
    }

    pub fn x_max(&self) -> T {
        self.x_at(self.len() - 1)
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |s, v| s.max(v.abs()))
    }

    /// Cubic (4-point Lagrange) interpolation; zero outside the grid.
    pub fn eval(&self, x: T) -> T {
        let n = self.len();
        let s = (x - self.x0) / self.dx;
        if s < T::zero() || s > T::of_usize(n - 1) {
            return T::zero();
        }
        let mut i1 = s.floor().as_f64() as isize;
        // Clamp the 4-point stencil inside the grid.
        i1 = i1.clamp(1, n as isize - 3);
        let i0 = (i1 - 1) as usize;
        let f = &self.values[i0..i0 + 4];
        let u = s - T::of_usize(i0); // local coordinate in [1,2] typically
        let c0 = -(u - T::one()) * (u - T::of(2.0)) * (u - T::of(3.0)) / T::of(6.0);
        let c1 = u * (u - T::of(2.0)) * (u - T::of(3.0)) / T::of(2.0);
        let c2 = -u * (u - T::one()) * (u - T::of(3.0)) / T::of(2.0);
        let c3 = u * (u - T::one()) * (u - T::of(2.0)) / T::of(6.0);
        c0 * f[0] + c1 * f[1] + c2 * f[2] + c3 * f[3]
    }

    /// Check that the declared envelope really holds on the outer 10% of
    /// samples at both ends.
    pub fn validate_tail(&self) -> Result<()> {
        let n = self.len();
        let tail = (n / 10).max(2);
        let check = |idx: usize| -> bool {
            let x = self.x_at(idx).abs();
            let bound = self.envelope_m * (-self.decay_rate * x).exp();
            self.values[idx].abs() <= bound + T::of(1e-300)
        };
        for i in 0..tail {
            if !check(i) || !check(n - 1 - i) {
                return Err(KdvError::invalid(format!(
                    "tail envelope M e^{{-a|x|}} violated near sample {i} (M={}, a={})",
                    self.envelope_m.as_f64(),
                    self.decay_rate.as_f64()
                )));
            }
        }
        Ok(())
    }

    /// integral of |x u(x)| dx over the grid (trapezoid).
    pub fn weighted_l1(&self) -> T {
        let vals: Vec<T> = (0..self.len())
            .map(|i| (self.x_at(i) * self.values[i]).abs())
            .collect();
        crate::quad::trapezoid(&vals, self.dx)
    }
}
