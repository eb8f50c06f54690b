//! Integer-order Bessel and Hankel functions of real argument.
//!
//! `J_n` comes from Miller's backward recurrence normalized with
//! `J₀ + 2ΣJ₂ₖ = 1`; `Y₀` and `Y₁` from their Neumann series in the same
//! `J` sequence; higher `Y_n` from the (stable) forward recurrence.
//! Accuracy is close to machine precision for `0 < x ≲ 500`.

use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Miller start index for orders up to `n` at argument `x`.
fn miller_start(n: usize, x: f64) -> usize {
    let top = (n as f64).max(x);
    let m = top + 25.0 + (60.0 * top.max(1.0)).sqrt();
    2 * ((m as usize) / 2 + 1)
}

/// `J_0(x) … J_m(x)` for `m = max(nmax, Miller start)`.
fn bessel_j_full(nmax: usize, x: f64) -> Vec<f64> {
    let m = miller_start(nmax, x).max(nmax + 2);
    let mut j = vec![0.0; m + 2];
    if x == 0.0 {
        j[0] = 1.0;
        return j;
    }
    j[m] = 1e-30;
    let two_over_x = 2.0 / x;
    for k in (1..=m).rev() {
        j[k - 1] = k as f64 * two_over_x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    let mut k = 2;
    while k <= m {
        norm += 2.0 * j[k];
        k += 2;
    }
    for v in j.iter_mut() {
        *v /= norm;
    }
    j
}

/// `J_n(x)` for `n = 0..=nmax`, `x ≥ 0`.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0, "bessel_j_seq needs x >= 0");
    let mut j = bessel_j_full(nmax, x);
    j.truncate(nmax + 1);
    j
}

/// `(J_n(x), Y_n(x))` for `n = 0..=nmax`, `x > 0`.
pub fn bessel_jy_seq(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(x > 0.0, "Y_n is singular at x <= 0");
    let j = bessel_j_full(nmax.max(1), x);
    let m = j.len() - 2;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 <= m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = std::f64::consts::FRAC_2_PI * (log_term * j[0] - 2.0 * s0);
    let y1 = -std::f64::consts::FRAC_2_PI * (j[0] / x - log_term * j[1] - s1);

    let mut y = Vec::with_capacity(nmax + 1);
    y.push(y0);
    if nmax >= 1 {
        y.push(y1);
    }
    for n in 1..nmax {
        let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
        y.push(next);
    }
    let mut j = j;
    j.truncate(nmax + 1);
    (j, y)
}

/// `H_n^{(2)}(x) = J_n(x) − iY_n(x)` for `n = 0..=nmax`; outgoing for an
/// `exp(+iωt)` time convention.
pub fn hankel2_seq(nmax: usize, x: f64) -> Vec<Complex64> {
    let (j, y) = bessel_jy_seq(nmax, x);
    j.into_iter().zip(y).map(|(a, b)| Complex64::new(a, -b)).collect()
}

pub fn hankel2_0(x: f64) -> Complex64 {
    hankel2_seq(0, x)[0]
}

/// Derivatives `f_n'` from a sequence `f_0..=f_{N}` via
/// `f_n' = (f_{n-1} − f_{n+1})/2`, `f_0' = −f_1`. Returns `N` entries.
pub fn derivative_seq<T>(f: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Neg<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = f.len().saturating_sub(1);
    (0..n)
        .map(|k| if k == 0 { -f[1] } else { (f[k - 1] - f[k + 1]) * 0.5 })
        .collect()
}
