//! Derivative-free scalar minimization: geometric bracketing followed by
//! Brent's parabolic/golden-section search.

const GOLD: f64 = 0.381_966_011_250_105_1;

/// Minimizer found by [`minimize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

/// Finds `a < b < c` with `f(b) ≤ f(a)` and `f(b) ≤ f(c)`, starting from
/// `lo < 0 < hi` (midpoint 0) and doubling the far end at most
/// `max_doublings` times.
pub fn bracket(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, max_doublings: usize) -> Option<(f64, f64, f64)> {
    let f0 = f(0.0);
    let (fl, fh) = (f(lo), f(hi));
    if f0 <= fl && f0 <= fh {
        return Some((lo, 0.0, hi));
    }
    // walk downhill on the cheaper side
    let dir = if fh <= fl { 1.0 } else { -1.0 };
    let (mut a, mut b, mut fb) = (0.0, if dir > 0.0 { hi } else { lo }, if dir > 0.0 { fh } else { fl });
    for _ in 0..max_doublings {
        let c = 2.0 * b;
        let fc = f(c);
        if fc >= fb {
            return Some(if dir > 0.0 { (a, b, c) } else { (c, b, a) });
        }
        a = b;
        b = c;
        fb = fc;
    }
    None
}

/// Brent's method on a bracket `(a, b, c)`; stops once the remaining bracket
/// lies within `tol·|x| + 2e-15` of the current best point.
pub fn brent(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, c: f64, tol: f64) -> Minimum {
    const ZEPS: f64 = 1e-15;
    const MAX_ITER: usize = 200;
    let (mut a, mut bb) = if a < c { (a, c) } else { (c, a) };
    let mut x = b;
    let mut w = b;
    let mut v = b;
    let mut fx = f(x);
    let mut evaluations = 1;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..MAX_ITER {
        let xm = 0.5 * (a + bb);
        let tol1 = 0.5 * tol * x.abs() + ZEPS;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (bb - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (bb - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || bb - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { bb - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        evaluations += 1;
        if fu < fx {
            if u >= x {
                a = x;
            } else {
                bb = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                bb = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum { x, fx, evaluations }
}

/// Bracket from `[-1, 1]`, then Brent with relative tolerance `tol`.
/// Non-finite function values count as `+∞`. Returns `None` when no
/// bracket is found within 40 doublings.
pub fn minimize(mut f: impl FnMut(f64) -> f64, tol: f64) -> Option<Minimum> {
    let mut g = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (a, b, c) = bracket(&mut g, -1.0, 1.0, 40)?;
    Some(brent(&mut g, a, b, c, tol))
}
