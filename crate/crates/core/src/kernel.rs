//! Pointwise power-law nonlinearity sgn(s)|s|^a, its convex potential, the
//! exact scalar proximal map, and executable second-order expansion
//! identities for powers of the absolute value.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_PROX_ITERS: usize = 600;
const MAX_QUAD_LEVELS: usize = 54;

/// Exponent of the power nonlinearity, restricted to the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent<S: Scalar>(S);

impl<S: Scalar> Exponent<S> {
    pub fn new(alpha: S) -> Result<Self> {
        // NaN fails both comparisons and is rejected.
        if alpha > S::zero() && alpha < S::one() {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidExponent {
                alpha: alpha.as_f64(),
            })
        }
    }

    pub fn value(self) -> S {
        self.0
    }
}

/// |s|^e with the convention 0^e = 0, evaluated as exp(e*ln|s|).
pub(crate) fn abs_pow<S: Scalar>(s: S, e: S) -> S {
    if s == S::zero() {
        S::zero()
    } else {
        (e * s.abs().ln()).exp()
    }
}

/// The odd power map s -> sgn(s)|s|^alpha.
pub fn phi<S: Scalar>(s: S, alpha: Exponent<S>) -> S {
    if s == S::zero() {
        S::zero()
    } else {
        abs_pow(s, alpha.value()).copysign(s)
    }
}

/// Convex potential |s|^{alpha+1}/(alpha+1); its derivative is [`phi`].
pub fn potential<S: Scalar>(s: S, alpha: Exponent<S>) -> S {
    let a1 = alpha.value() + S::one();
    abs_pow(s, a1) / a1
}

/// Proximal map of [`potential`]: the unique x with x + t*sgn(x)|x|^alpha = v.
///
/// The map x -> x + t*phi(x) is strictly increasing with slope >= 1, so the
/// root shares the sign of v and lies in the bracket [0, |v|]. The bracket is
/// bisected, taking a Newton step whenever its candidate stays strictly
/// inside, until the residual drops below 1e-15*max(1, |v|) or the bracket
/// collapses to machine width. The returned x satisfies
/// |x + t*phi(x) - v| <= 1e-14*max(1, |v|).
pub fn prox_potential<S: Scalar>(v: S, t: S, alpha: Exponent<S>) -> S {
    assert!(t > S::zero(), "prox step must be positive");
    if v == S::zero() {
        return S::zero();
    }
    let a = alpha.value();
    let w = v.abs();
    let two_eps = S::epsilon() + S::epsilon();
    let target = S::lit(1e-15).max(two_eps) * S::one().max(w);
    let f = |x: S| x + t * abs_pow(x, a) - w;

    let mut lo = S::zero();
    let mut hi = w;
    let mut x = w * S::lit(0.5);
    let mut best = (hi, f(hi).abs());
    for _ in 0..MAX_PROX_ITERS {
        let r = f(x);
        let ra = r.abs();
        if ra < best.1 {
            best = (x, ra);
        }
        if ra <= target {
            break;
        }
        if r > S::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let slope = S::one() + t * a * abs_pow(x, a - S::one());
        let newton = x - r / slope;
        let mid = (lo + hi) * S::lit(0.5);
        x = if newton > lo && newton < hi && newton != x {
            newton
        } else {
            mid
        };
        if x == lo || x == hi {
            // bracket exhausted at machine resolution
            let r_edge = f(x).abs();
            if r_edge < best.1 {
                best = (x, r_edge);
            }
            break;
        }
    }
    best.0.copysign(v)
}

/// Residuals |lhs - rhs| of the three expansion identities for |x|^{beta+1}
/// at (x, t, z), in order: the second-order Taylor identity with integral
/// remainder, the second-order quotient identity for |.|, and the squared
/// first-order quotient identity.
///
/// The integral remainder is evaluated by [`taylor_remainder_integral`]; when
/// x and x + t*z share their sign, |x + t*z| - |x| equals sgn(x)*t*z exactly
/// and the power difference is formed through expm1/ln1p so that the double
/// division by t does not amplify cancellation noise.
pub fn expansion_residuals<S: Scalar>(
    x: S,
    t: S,
    z: S,
    beta: Exponent<S>,
) -> Result<(S, S, S)> {
    if x == S::zero() {
        return Err(Error::InvalidArgument(
            "expansion identities require x != 0".into(),
        ));
    }
    assert!(t > S::zero(), "expansion identities require t > 0");
    let b = beta.value();
    let one = S::one();
    let a_abs = x.abs();
    let shifted = x + t * z;
    let b_abs = shifted.abs();
    let sgn = x.signum();
    let same_sign = shifted * x > S::zero();

    // diff = |x + t*z| - |x|, exact in the same-sign case
    let diff = if same_sign { sgn * (t * z) } else { b_abs - a_abs };
    let diff_over_t = if same_sign { sgn * z } else { diff / t };

    // power_diff = |x + t*z|^{beta+1} - |x|^{beta+1}
    let bp1 = b + one;
    let power_diff = if same_sign {
        let ratio = (diff / a_abs).ln_1p();
        abs_pow(a_abs, bp1) * (bp1 * ratio).exp_m1()
    } else {
        abs_pow(b_abs, bp1) - abs_pow(a_abs, bp1)
    };

    let a_pow_b = abs_pow(a_abs, b);
    let sum_abs = a_abs + b_abs;

    // second-order quotient of the absolute value (both sides of the middle identity)
    let lhs2 = (diff_over_t - sgn * z) / t;
    let rhs2 = (a_abs * diff - t * x * z) * z * z / (a_abs * sum_abs * sum_abs);

    // squared first-order quotient (both sides of the last identity)
    let lhs3 = diff_over_t * diff_over_t;
    let rhs3 = (S::lit(4.0) * x * x * z * z
        + (S::lit(4.0) * t * x * z + t * t * z * z) * z * z)
        / (sum_abs * sum_abs);

    // Taylor identity with integral remainder
    let lhs1 = (power_diff / t - bp1 * sgn * a_pow_b * z) / t;
    let remainder = taylor_remainder_integral(a_abs, b_abs, b);
    let rhs1 = bp1 * a_pow_b * lhs2 + diff_over_t * diff_over_t * (b * b + b) * remainder;

    Ok(((lhs1 - rhs1).abs(), (lhs2 - rhs2).abs(), (lhs3 - rhs3).abs()))
}

/// Integral remainder of the second-order Taylor expansion of s^{beta+1}:
/// int_0^1 (1-s) ((1-s)a + s b)^{beta-1} ds for a > 0, b >= 0.
///
/// The base (1-s)a + s b is smallest at one endpoint: at s = 1 when b < a
/// (an integrable singularity when b = 0) and at s = 0 when a < b (a sharp
/// layer of width ~a/b). Composite 16-point Gauss-Legendre on dyadic panels
/// accumulating toward both endpoints, refined until two successive levels
/// agree to 1e-12 relative.
pub(crate) fn taylor_remainder_integral<S: Scalar>(a: S, b: S, beta: S) -> S {
    debug_assert!(a > S::zero());
    let (nodes, weights) = gauss_legendre_16::<S>();
    let one = S::one();
    let half = S::lit(0.5);
    let integrand = |s: S| (one - s) * abs_pow((one - s) * a + s * b, beta - one);
    let panel = |l: S, r: S| {
        let center = (l + r) * half;
        let halfwidth = (r - l) * half;
        let mut acc = S::zero();
        for k in 0..16 {
            acc = acc + weights[k] * integrand(center + halfwidth * nodes[k]);
        }
        acc * halfwidth
    };
    let tol = S::lit(1e-12).max(S::lit(4.0) * S::epsilon());
    let mut prev = S::zero();
    for level in 1..=MAX_QUAD_LEVELS {
        // breakpoints 2^-level, ..., 1/4, 1/2, 3/4, ..., 1 - 2^-level
        let mut total = S::zero();
        let mut left = S::zero();
        for k in 0..2 * level {
            let right = if k + 1 == 2 * level {
                one
            } else if k < level {
                half.powi((level - k) as i32)
            } else {
                one - half.powi((k + 2 - level) as i32)
            };
            total = total + panel(left, right);
            left = right;
        }
        if level > 1 && (total - prev).abs() <= tol * one.max(total.abs()) {
            return total;
        }
        prev = total;
    }
    prev
}

/// Nodes and weights of the 16-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre_16<S: Scalar>() -> ([S; 16], [S; 16]) {
    let n = 16usize;
    let mut nodes = [S::zero(); 16];
    let mut weights = [S::zero(); 16];
    let nf = S::from_usize(n).unwrap();
    for i in 0..n {
        let idx = S::from_usize(i).unwrap();
        let mut x = (S::PI() * (idx + S::lit(0.75)) / (nf + S::lit(0.5))).cos();
        for _ in 0..64 {
            let (p, dp) = legendre_16(x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() <= S::epsilon() * (S::one() + x.abs()) {
                break;
            }
        }
        let (_, dp) = legendre_16(x);
        nodes[i] = x;
        weights[i] = S::lit(2.0) / ((S::one() - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Value and derivative of the degree-16 Legendre polynomial.
fn legendre_16<S: Scalar>(x: S) -> (S, S) {
    let mut p_prev = S::one();
    let mut p = x;
    for k in 1..16 {
        let kf = S::from_usize(k).unwrap();
        let next = ((S::lit(2.0) * kf + S::one()) * x * p - kf * p_prev) / (kf + S::one());
        p_prev = p;
        p = next;
    }
    let n = S::lit(16.0);
    let dp = n * (p_prev - x * p) / (S::one() - x * x);
    (p, dp)
}
