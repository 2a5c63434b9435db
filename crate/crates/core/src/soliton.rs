//! KdV n-solitons through the Wronskian tau function
//!
//!   u0(x,t) = -2 d^2/dx^2 log Wr(a_1, ..., a_n),
//!   a_j(x,t) = (-1)^{j+1} e^{-theta_j} + alpha_j e^{+theta_j},
//!   theta_j  = beta_j (x - 4 beta_j^2 t),
//!
//! with 0 < beta_1 < ... < beta_n and alpha_j > 0.
//!
//! Derivatives of the Wronskian are exact: differentiating the determinant
//! row-wise only survives where a row-index bump does not collide with the
//! row below, so tau and its first four x-derivatives come out of a small set
//! of row-index determinants, no finite differences involved.
//!
//! Each column is scaled by e^{-|theta_j|} before the determinant so the
//! ratios in u0 stay finite far from the origin where raw entries overflow.

use crate::error::{KdvError, Result};
use crate::float::Real;
use crate::linalg::{det, Matrix};

/// Parameters of a Wronskian n-soliton.
#[derive(Clone, Debug, PartialEq)]
pub struct SolitonSpec<T> {
    betas: Vec<T>,
    alphas: Vec<T>,
}

impl<T: Real> SolitonSpec<T> {
    pub fn new(betas: Vec<T>, alphas: Vec<T>) -> Result<Self> {
        if betas.len() != alphas.len() {
            return Err(KdvError::invalid("betas and alphas must have equal length"));
        }
        validate_betas(&betas)?;
        if alphas.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
            return Err(KdvError::invalid("alphas must be positive and finite"));
        }
        Ok(SolitonSpec { betas, alphas })
    }

    /// Build a spec from norming constants instead of alphas.
    pub fn from_gammas(betas: Vec<T>, gammas: Vec<T>) -> Result<Self> {
        let alphas = alpha_from_gamma(&betas, &gammas)?;
        SolitonSpec::new(betas, alphas)
    }

    pub fn n(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn gammas(&self) -> Vec<T> {
        gamma_from_alpha(&self.betas, &self.alphas).expect("spec already validated")
    }

    /// Slowest decay rate of the profile: u0 decays like e^{-2 beta_1 |x|}.
    pub fn decay_rate(&self) -> T {
        if self.betas.is_empty() {
            T::one()
        } else {
            T::of(2.0) * self.betas[0]
        }
    }
}

fn validate_betas<T: Real>(betas: &[T]) -> Result<()> {
    for (i, b) in betas.iter().enumerate() {
        if !(*b > T::zero()) || !b.is_finite() {
            return Err(KdvError::invalid("betas must be positive and finite"));
        }
        if i > 0 && !(betas[i - 1] < *b) {
            return Err(KdvError::invalid("betas must be strictly increasing"));
        }
    }
    Ok(())
}

/// tau and its first four x-derivatives.
#[derive(Clone, Copy, Debug)]
pub struct TauDerivs<T> {
    pub tau: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
    pub d4: T,
}

/// tau derivatives with a common exponential factor split off:
/// true value = `vals[q] * exp(log_scale)`.
#[derive(Clone, Debug)]
pub struct ScaledTau<T> {
    pub vals: [T; 5],
    pub log_scale: T,
}

/// Row-index expansion of d^q/dx^q of the Wronskian, orders 0..=4.
///
/// A term `(rows, c)` stands for `c * det[a_j^{(rows[i])}]`.
fn derivative_terms(n: usize) -> [Vec<(Vec<usize>, i64)>; 5] {
    let mut orders: [Vec<(Vec<usize>, i64)>; 5] = Default::default();
    let base: Vec<usize> = (0..n).collect();
    orders[0] = vec![(base, 1)];
    for q in 1..5 {
        let mut acc: std::collections::BTreeMap<Vec<usize>, i64> = Default::default();
        for (rows, c) in &orders[q - 1] {
            for i in 0..n {
                // Bumping row i duplicates the row below unless it is free.
                if i + 1 < n && rows[i] + 1 == rows[i + 1] {
                    continue;
                }
                let mut next = rows.clone();
                next[i] += 1;
                *acc.entry(next).or_insert(0) += c;
            }
        }
        orders[q] = acc.into_iter().filter(|(_, c)| *c != 0).collect();
    }
    orders
}

/// Evaluate the scaled tau derivatives, optionally with a per-column shift of
/// the x argument (used by the stability comparison profile).
pub fn tau_scaled<T: Real>(spec: &SolitonSpec<T>, shifts: Option<&[T]>, x: T, t: T) -> ScaledTau<T> {
    let n = spec.n();
    if n == 0 {
        return ScaledTau {
            vals: [T::one(), T::zero(), T::zero(), T::zero(), T::zero()],
            log_scale: T::zero(),
        };
    }
    if let Some(s) = shifts {
        assert_eq!(s.len(), n, "one shift per soliton column");
    }
    // Scaled column pieces: a_j^{(h)} = beta^h [sgn_j (-1)^h em_j + alpha_j ep_j] * e^{|theta_j|}.
    let mut em = vec![T::zero(); n];
    let mut ep = vec![T::zero(); n];
    let mut log_scale = T::zero();
    for j in 0..n {
        let beta = spec.betas[j];
        let shift = shifts.map_or(T::zero(), |s| s[j]);
        let theta = beta * (x - shift - T::of(4.0) * beta * beta * t);
        let a = theta.abs();
        log_scale += a;
        em[j] = (-theta - a).exp();
        ep[j] = (theta - a).exp();
    }
    let orders = derivative_terms(n);
    let mut vals = [T::zero(); 5];
    for (q, terms) in orders.iter().enumerate() {
        let mut total = T::zero();
        for (rows, coeff) in terms {
            let mut m = Matrix::zeros(n, n);
            for (r, &h) in rows.iter().enumerate() {
                for j in 0..n {
                    let beta = spec.betas[j];
                    let bh = beta.powi(h as i32);
                    let sgn_col = if j % 2 == 0 { T::one() } else { -T::one() };
                    let sgn_h = if h % 2 == 0 { T::one() } else { -T::one() };
                    *m.at_mut(r, j) = bh * (sgn_col * sgn_h * em[j] + spec.alphas[j] * ep[j]);
                }
            }
            total += T::of(*coeff as f64) * det(&m);
        }
        vals[q] = total;
    }
    ScaledTau { vals, log_scale }
}

/// Wronskian tau and its first four x-derivatives at (x, t).
pub fn tau<T: Real>(spec: &SolitonSpec<T>, x: T, t: T) -> Result<TauDerivs<T>> {
    let s = tau_scaled(spec, None, x, t);
    if !(s.vals[0] > T::zero()) {
        return Err(KdvError::DegenerateTau {
            x: x.as_f64(),
            t: t.as_f64(),
            tau: s.vals[0].as_f64(),
        });
    }
    let unscale = |v: T| -> Result<T> {
        if v == T::zero() {
            return Ok(T::zero());
        }
        let ln = v.abs().ln() + s.log_scale;
        if ln > T::of(700.0) {
            return Err(KdvError::Overflow(format!(
                "tau derivative exceeds exp(700) at x={}, t={}",
                x.as_f64(),
                t.as_f64()
            )));
        }
        Ok(v.signum() * ln.exp())
    };
    Ok(TauDerivs {
        tau: unscale(s.vals[0])?,
        d1: unscale(s.vals[1])?,
        d2: unscale(s.vals[2])?,
        d3: unscale(s.vals[3])?,
        d4: unscale(s.vals[4])?,
    })
}

/// The n-soliton profile u0(x,t) = -2 (tau'' tau - tau'^2) / tau^2.
pub fn eval_nsoliton<T: Real>(spec: &SolitonSpec<T>, x: T, t: T) -> Result<T> {
    eval_shifted(spec, None, x, t)
}

/// Profile with each Wronskian column shifted: a_j(x - shift_j, t).
pub fn eval_shifted<T: Real>(
    spec: &SolitonSpec<T>,
    shifts: Option<&[T]>,
    x: T,
    t: T,
) -> Result<T> {
    let s = tau_scaled(spec, shifts, x, t);
    if !(s.vals[0] > T::zero()) {
        return Err(KdvError::DegenerateTau {
            x: x.as_f64(),
            t: t.as_f64(),
            tau: s.vals[0].as_f64(),
        });
    }
    let [t0, t1, t2, ..] = s.vals;
    Ok(-T::of(2.0) * (t2 * t0 - t1 * t1) / (t0 * t0))
}

/// Signed coupling constant c_j = 2 (-1)^{j-1} beta_j Prod_{l != j} (beta_l + beta_j)/(beta_l - beta_j),
/// which is positive for admissible orderings and satisfies alpha_j gamma_j = c_j.
fn coupling<T: Real>(betas: &[T], j: usize) -> T {
    let beta = betas[j];
    let mut c = T::of(2.0) * beta;
    if j % 2 == 1 {
        c = -c;
    }
    for (l, &bl) in betas.iter().enumerate() {
        if l != j {
            c = c * (bl + beta) / (bl - beta);
        }
    }
    c
}

/// alphas from norming constants (both positive).
pub fn alpha_from_gamma<T: Real>(betas: &[T], gammas: &[T]) -> Result<Vec<T>> {
    if betas.len() != gammas.len() {
        return Err(KdvError::invalid("betas and gammas must have equal length"));
    }
    validate_betas(betas)?;
    if gammas.iter().any(|g| !(*g > T::zero())) {
        return Err(KdvError::invalid("gammas must be positive"));
    }
    Ok((0..betas.len())
        .map(|j| coupling(betas, j) / gammas[j])
        .collect())
}

/// Norming constants from alphas; exact inverse of [`alpha_from_gamma`].
pub fn gamma_from_alpha<T: Real>(betas: &[T], alphas: &[T]) -> Result<Vec<T>> {
    if betas.len() != alphas.len() {
        return Err(KdvError::invalid("betas and alphas must have equal length"));
    }
    validate_betas(betas)?;
    if alphas.iter().any(|a| !(*a > T::zero())) {
        return Err(KdvError::invalid("alphas must be positive"));
    }
    Ok((0..betas.len())
        .map(|j| coupling(betas, j) / alphas[j])
        .collect())
}

/// Asymptotic wave-crest line of one soliton: as t -> time_sign * infinity,
/// u0 ~ -2 beta_j^2 sech^2(beta_j (x - 4 beta_j^2 t) + phase) along
/// x = 4 beta_j^2 t - phase / beta_j.
#[derive(Clone, Copy, Debug)]
pub struct CrestLine<T> {
    pub speed: T,
    pub phase: T,
    pub time_sign: i8,
}

/// Crest lines for every soliton of the spec at the given time sign.
///
/// The phases come from the two dominant terms of the tau expansion over
/// one-sign-per-pair column subsets: on the line of soliton j the exponent
/// k (b_j^2 - k^2) is maximized (t -> +inf) or minimized (t -> -inf) for every
/// other pair, while the j-th pair itself is balanced; the log-ratio of the
/// two surviving coefficients (minor times kappa Vandermonde) is the phase.
pub fn crest_lines<T: Real>(spec: &SolitonSpec<T>, time_sign: i8) -> Result<Vec<CrestLine<T>>> {
    if time_sign != 1 && time_sign != -1 {
        return Err(KdvError::invalid("time_sign must be +1 or -1"));
    }
    let n = spec.n();
    let betas = spec.betas();
    let alphas = spec.alphas();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        // Sign choice per pair l != j: growth-dominant exponential at the
        // requested time sign; pair j contributes both signs (I and J).
        let choose_plus = |l: usize| -> bool {
            if time_sign > 0 {
                l < j
            } else {
                l > j
            }
        };
        let weight = |j_plus: bool| -> T {
            let mut kappas: Vec<T> = Vec::with_capacity(n);
            let mut minor = T::one();
            for l in 0..n {
                let plus = if l == j { j_plus } else { choose_plus(l) };
                if plus {
                    kappas.push(betas[l]);
                    minor = minor * alphas[l];
                } else {
                    kappas.push(-betas[l]);
                }
            }
            kappas.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut vander = T::one();
            for a in 0..n {
                for b in a + 1..n {
                    vander = vander * (kappas[b] - kappas[a]);
                }
            }
            minor * vander
        };
        let p = weight(false);
        let q = weight(true);
        let phase = T::of(0.5) * (q / p).ln();
        out.push(CrestLine {
            speed: T::of(4.0) * betas[j] * betas[j],
            phase,
            time_sign,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    /// Closed form of the 1-soliton, used as the oracle for n = 1.
    fn one_soliton(beta: f64, alpha: f64, x: f64, t: f64) -> f64 {
        let arg = beta * x - 4.0 * beta.powi(3) * t + 0.5 * alpha.ln();
        -2.0 * beta * beta * sech(arg).powi(2)
    }

    /// Brute-force 2x2 Wronskian with hand-written entries, independent of the
    /// row-shift machinery.
    fn wr2_bruteforce(betas: [f64; 2], alphas: [f64; 2], x: f64, t: f64) -> f64 {
        let a = |j: usize, x: f64| -> f64 {
            let th = betas[j] * (x - 4.0 * betas[j].powi(2) * t);
            let sgn = if j == 0 { 1.0 } else { -1.0 };
            sgn * (-th).exp() + alphas[j] * th.exp()
        };
        let ap = |j: usize, x: f64| -> f64 {
            let th = betas[j] * (x - 4.0 * betas[j].powi(2) * t);
            let sgn = if j == 0 { 1.0 } else { -1.0 };
            betas[j] * (-sgn * (-th).exp() + alphas[j] * th.exp())
        };
        a(0, x) * ap(1, x) - a(1, x) * ap(0, x)
    }

    #[test]
    fn tau_one_soliton_values() {
        let spec = SolitonSpec::new(vec![1.0f64], vec![1.0]).unwrap();
        let tv = tau(&spec, 0.0, 0.0).unwrap();
        assert!((tv.tau - 2.0).abs() < 1e-14);
        assert!(tv.d1.abs() < 1e-14);
        let tv = tau(&spec, 1.0, 0.0).unwrap();
        assert!((tv.tau - ((-1.0f64).exp() + 1.0f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn tau_two_soliton_matches_bruteforce() {
        let spec = SolitonSpec::new(vec![1.0f64, 2.0], vec![1.0, 1.0]).unwrap();
        for &(x, t) in &[(0.0, 0.0), (0.7, 0.0), (-1.3, 0.2), (2.0, -0.1)] {
            let tv = tau(&spec, x, t).unwrap();
            let expect = wr2_bruteforce([1.0, 2.0], [1.0, 1.0], x, t);
            assert!(
                (tv.tau - expect).abs() < 1e-12 * expect.abs().max(1.0),
                "x={x} t={t}"
            );
        }
        // frozen value at the origin: Wr = a1 a2' - a2 a1' = 2*4 - 0*0 = 8
        let tv = tau(&spec, 0.0, 0.0).unwrap();
        assert!((tv.tau - 8.0).abs() < 1e-12);
    }

    #[test]
    fn tau_derivatives_match_finite_differences() {
        let spec = SolitonSpec::new(vec![0.6f64, 1.4, 2.2], vec![0.5, 2.0, 1.0]).unwrap();
        let h = 1e-3;
        for &(x, t) in &[(0.3, 0.1), (-2.0, 0.05), (1.0, -0.2)] {
            let tv = tau(&spec, x, t).unwrap();
            let f = |xx: f64| tau(&spec, xx, t).unwrap().tau;
            // 4th-order central difference for the first derivative
            let fd1 = (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h))
                / (12.0 * h);
            assert!(
                (tv.d1 - fd1).abs() <= 1e-7 * tv.d1.abs().max(1.0),
                "d1 mismatch at x={x}"
            );
            let fd2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x)
                + 16.0 * f(x - h)
                - f(x - 2.0 * h))
                / (12.0 * h * h);
            assert!(
                (tv.d2 - fd2).abs() <= 1e-6 * tv.d2.abs().max(1.0),
                "d2 mismatch at x={x}"
            );
        }
    }

    #[test]
    fn nsoliton_one_matches_sech_form() {
        let spec = SolitonSpec::new(vec![1.0f64], vec![1.0]).unwrap();
        assert!((eval_nsoliton(&spec, 0.0, 0.0).unwrap() + 2.0).abs() < 1e-13);
        for &(beta, alpha) in &[(0.7f64, 0.3), (1.0, 1.0), (2.3, 5.0)] {
            let spec = SolitonSpec::new(vec![beta], vec![alpha]).unwrap();
            for &(x, t) in &[(0.0, 0.0), (1.5, 0.3), (-4.0, -1.0), (30.0, 2.0)] {
                let u = eval_nsoliton(&spec, x, t).unwrap();
                let e = one_soliton(beta, alpha, x, t);
                assert!((u - e).abs() < 1e-12, "beta={beta} alpha={alpha} x={x}");
            }
        }
    }

    #[test]
    fn nsoliton_decays_at_infinity() {
        let spec = SolitonSpec::new(vec![1.0f64], vec![1.0]).unwrap();
        for &x in &[15.0f64, 25.0, 40.0] {
            let u = eval_nsoliton(&spec, x, 0.0).unwrap().abs();
            assert!(u <= 10.0 * (-2.0 * x).exp());
        }
    }

    #[test]
    fn scaling_keeps_far_field_finite() {
        let spec = SolitonSpec::new(vec![1.0f64, 2.5], vec![1.0, 3.0]).unwrap();
        // Raw entries here would be e^{1000}-scale.
        let u = eval_nsoliton(&spec, 400.0, 0.0).unwrap();
        assert!(u.is_finite());
        assert!(u.abs() < 1e-10);
        // And tau itself reports overflow rather than returning inf.
        assert!(matches!(
            tau(&spec, 400.0, 0.0),
            Err(KdvError::Overflow(_))
        ));
    }

    #[test]
    fn alpha_gamma_conversions() {
        // n=1 reduction: alpha = 2 beta / gamma.
        let a = alpha_from_gamma(&[1.0f64], &[2.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15);
        let a = alpha_from_gamma(&[2.0f64], &[4.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15);
        // n=2 worked product: alpha_1 = (2/g1)*3, alpha_2 = 12/g2.
        let g = [0.5f64, 3.0];
        let a = alpha_from_gamma(&[1.0, 2.0], &g).unwrap();
        assert!((a[0] - 6.0 / g[0]).abs() < 1e-13);
        assert!((a[1] - 12.0 / g[1]).abs() < 1e-13);
        assert!(a.iter().all(|v| *v > 0.0));
        // round trip
        let betas = [0.7f64, 1.3, 2.1];
        let alphas = [0.4, 2.0, 9.0];
        let g = gamma_from_alpha(&betas, &alphas).unwrap();
        let back = alpha_from_gamma(&betas, &g).unwrap();
        for (b, a) in back.iter().zip(alphas.iter()) {
            assert!((b - a).abs() < 1e-14 * a);
        }
        // repeated betas rejected
        assert!(alpha_from_gamma(&[1.0f64, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gamma_of_unit_soliton_is_two() {
        let g = gamma_from_alpha(&[1.0f64], &[1.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn crest_lines_one_soliton() {
        let spec = SolitonSpec::new(vec![1.3f64], vec![0.7]).unwrap();
        for sign in [1i8, -1] {
            let lines = crest_lines(&spec, sign).unwrap();
            assert_eq!(lines.len(), 1);
            assert!((lines[0].speed - 4.0 * 1.3 * 1.3).abs() < 1e-14);
            assert!((lines[0].phase - 0.5 * 0.7f64.ln()).abs() < 1e-14);
        }
        let empty = SolitonSpec::new(vec![] as Vec<f64>, vec![]).unwrap();
        assert!(crest_lines(&empty, 1).unwrap().is_empty());
    }

    #[test]
    fn crest_lines_match_located_maxima() {
        // Locate the peaks of |u| at |t| = 20 on a fine grid and compare with
        // the predicted lines, for n = 1, 2, 3.
        let specs = [
            SolitonSpec::new(vec![1.0f64], vec![1.0]).unwrap(),
            SolitonSpec::new(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap(),
            SolitonSpec::new(vec![0.8, 1.4, 2.0], vec![2.0, 0.5, 1.0]).unwrap(),
        ];
        for spec in &specs {
            for sign in [1i8, -1] {
                let t = 20.0 * sign as f64;
                let lines = crest_lines(spec, sign).unwrap();
                for line in &lines {
                    let predicted = line.speed * t - line.phase / (line.speed / 4.0).sqrt();
                    // scan for the local minimum of u (solitons are negative)
                    let mut best_x = predicted;
                    let mut best_u = 0.0;
                    let mut x = predicted - 2.0;
                    while x <= predicted + 2.0 {
                        let u = eval_nsoliton(spec, x, t).unwrap();
                        if u < best_u {
                            best_u = u;
                            best_x = x;
                        }
                        x += 1e-3;
                    }
                    assert!(
                        (best_x - predicted).abs() < 0.05,
                        "n={} sign={sign} predicted={predicted} located={best_x}",
                        spec.n()
                    );
                }
            }
        }
    }

    #[test]
    fn two_soliton_interaction_shift() {
        // The t -> +inf and t -> -inf phases differ by the classical
        // interaction shift log((b2+b1)/(b2-b1)) for the fast soliton.
        let spec = SolitonSpec::new(vec![1.0f64, 2.0], vec![1.0, 1.0]).unwrap();
        let plus = crest_lines(&spec, 1).unwrap();
        let minus = crest_lines(&spec, -1).unwrap();
        let shift_fast = minus[1].phase - plus[1].phase;
        assert!((shift_fast - (3.0f64 / 1.0).ln()).abs() < 1e-12);
        let shift_slow = minus[0].phase - plus[0].phase;
        assert!((shift_slow + (3.0f64 / 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn tau_positive_on_window() {
        let spec = SolitonSpec::new(vec![0.5f64, 1.1, 1.9], vec![3.0, 0.2, 1.0]).unwrap();
        let mut x = -40.0;
        while x <= 40.0 {
            let mut t = -10.0;
            while t <= 10.0 {
                let s = tau_scaled(&spec, None, x, t);
                assert!(s.vals[0] > 0.0, "tau must stay positive at x={x}, t={t}");
                t += 2.5;
            }
            x += 1.0;
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SolitonSpec::new(vec![1.0f64, 0.5], vec![1.0, 1.0]).is_err());
        assert!(SolitonSpec::new(vec![-1.0f64], vec![1.0]).is_err());
        assert!(SolitonSpec::new(vec![1.0f64], vec![0.0]).is_err());
        assert!(SolitonSpec::new(vec![1.0f64], vec![1.0, 2.0]).is_err());
    }
}
