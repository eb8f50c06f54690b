//! Analytic TM scattering by a homogeneous lossless circular cylinder
//! illuminated by a unit line source (Bessel–Hankel series).

use num_complex::Complex64;

use crate::scalar::C0;
use crate::special::{bessel_j_seq, derivative_seq, hankel2_seq};

/// Cylinder of relative permittivity `eps_r` centered at the origin.
#[derive(Clone, Copy, Debug)]
pub struct MieCylinder {
    pub radius: f64,
    pub eps_r: f64,
}

impl MieCylinder {
    /// Series coefficients `c_n`, `n = 0..=order`, relating the outgoing
    /// scattered amplitude to the regular incident amplitude of order `n`.
    pub fn coefficients(&self, k0: f64, order: usize) -> Vec<Complex64> {
        let k1 = k0 * self.eps_r.sqrt();
        let (a0, a1) = (k0 * self.radius, k1 * self.radius);
        let j0 = bessel_j_seq(order + 1, a0);
        let j1 = bessel_j_seq(order + 1, a1);
        let h0 = hankel2_seq(order + 1, a0);
        let dj0 = derivative_seq(&j0);
        let dj1 = derivative_seq(&j1);
        let dh0 = derivative_seq(&h0);
        (0..=order)
            .map(|n| {
                let num = Complex64::new(k1 * dj1[n] * j0[n] - k0 * j1[n] * dj0[n], 0.0);
                let den = dh0[n] * (k0 * j1[n]) - h0[n] * (k1 * dj1[n]);
                num / den
            })
            .collect()
    }

    fn order_for(&self, k0: f64) -> usize {
        let ka = k0 * self.eps_r.sqrt().max(1.0) * self.radius;
        (ka + 4.0 * ka.cbrt() + 20.0).ceil() as usize
    }

    /// Scattered field at `points` (all outside the cylinder) for a unit line
    /// source at `src`, normalized like `(−i/4)H₀⁽²⁾(k₀|r − r_s|)`.
    pub fn scattered_field(&self, freq_hz: f64, src: (f64, f64), points: &[(f64, f64)]) -> Vec<Complex64> {
        let k0 = 2.0 * std::f64::consts::PI * freq_hz / C0;
        let order = self.order_for(k0);
        let c = self.coefficients(k0, order);
        let rs = src.0.hypot(src.1);
        let phis = src.1.atan2(src.0);
        let hs = hankel2_seq(order, k0 * rs);
        points
            .iter()
            .map(|&(x, y)| {
                let r = x.hypot(y);
                let phi = y.atan2(x);
                let h = hankel2_seq(order, k0 * r);
                let sum = (0..=order).fold(Complex64::new(0.0, 0.0), |acc, n| {
                    let weight = if n == 0 { 1.0 } else { 2.0 };
                    acc + c[n] * hs[n] * h[n] * (weight * (n as f64 * (phi - phis)).cos())
                });
                Complex64::new(0.0, -0.25) * sum
            })
            .collect()
    }
}
