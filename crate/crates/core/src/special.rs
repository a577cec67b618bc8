//! Special functions and numerical helpers shared by the model and generators.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Natural log of the binomial coefficient `C(n, k)`.
///
/// Small `min(k, n - k)` uses an exact running product so that moderate `n`
/// keeps full relative precision; otherwise log-gamma differences are used.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "ln_binomial: k > n");
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k <= 30 {
        let mut acc = 1.0f64;
        for i in 0..k {
            acc *= (n - i) as f64 / (i + 1) as f64;
        }
        return acc.ln();
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// `(1 - p)^n` evaluated as `exp(n * log1p(-p))`.
#[inline]
pub fn survival_pow(p: f64, n: f64) -> f64 {
    if p >= 1.0 {
        return if n == 0.0 { 1.0 } else { 0.0 };
    }
    (n * (-p).ln_1p()).exp()
}

/// `1 - (1 - p)^n` without cancellation for small `p`.
#[inline]
pub fn hit_probability(p: f64, n: f64) -> f64 {
    if p >= 1.0 {
        return if n == 0.0 { 0.0 } else { 1.0 };
    }
    -(n * (-p).ln_1p()).exp_m1()
}

/// Binomial probability mass `C(n, r) p^r (1 - p)^(n - r)`, assembled in log space.
pub fn binomial_pmf(n: u64, r: u64, p: f64) -> f64 {
    debug_assert!(r <= n);
    if p <= 0.0 {
        return if r == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if r == n { 1.0 } else { 0.0 };
    }
    let log_term = ln_binomial(n, r) + r as f64 * p.ln() + (n - r) as f64 * (-p).ln_1p();
    log_term.exp()
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires x > 0");
    if x <= 1.0 {
        // -γ - ln x + Σ_{k≥1} (-1)^{k+1} x^k / (k·k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let add = -term / kf;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Solve `E1(y) = target` for `y` on `[lower, ∞)` by bisection.
///
/// Requires `E1(lower) >= target`. The returned `y` has relative accuracy
/// `1e-12` or better.
pub fn inverse_e1(target: f64, lower: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Numeric(format!("cannot invert E1 at {target}")));
    }
    let mut lo = lower;
    if exp_integral_e1(lo) < target {
        return Err(Error::Numeric(format!(
            "E1 inversion failed to bracket: E1({lower}) < {target}"
        )));
    }
    let mut hi = lo.max(1.0);
    let mut guard = 0;
    while exp_integral_e1(hi) >= target {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 || !hi.is_finite() {
            return Err(Error::Numeric(format!(
                "E1 inversion failed to bracket upper end for {target}"
            )));
        }
    }
    for _ in 0..400 {
        if (hi - lo) <= 1e-13 * hi {
            break;
        }
        // geometric midpoint while the bracket spans decades
        let mid = if hi > 4.0 * lo && lo > 0.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if exp_integral_e1(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Neumaier-compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const GL_ORDER: usize = 20;

fn gauss_legendre_rule() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// Composite 20-point Gauss–Legendre quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_rule();
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = CompensatedSum::new();
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            s += w * f(mid + half * x);
        }
        total.add(s * half);
    }
    total.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        assert!((exp_integral_e1(1.0) - 0.219_383_934_395_520_27).abs() < 1e-15);
        assert!((exp_integral_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((exp_integral_e1(2.0) - 0.048_900_510_708_061_12).abs() < 1e-15);
        assert!((exp_integral_e1(10.0) - 4.156_968_929_685_324e-6).abs() < 1e-19);
        let small = 1e-10;
        assert!((exp_integral_e1(small) - (-EULER_GAMMA - small.ln() + small)).abs() < 1e-14);
    }

    #[test]
    fn e1_inverse_round_trips() {
        for &t in &[1e-8, 0.01, 0.2, 1.0, 3.5, 20.0] {
            let y = inverse_e1(t, 1e-12).unwrap();
            assert!((exp_integral_e1(y) - t).abs() <= 1e-10 * t, "t={t}");
        }
        assert!(inverse_e1(30.0, 1e-10).is_err());
    }

    #[test]
    fn ln_binomial_matches_small_cases() {
        assert_eq!(ln_binomial(4, 0), 0.0);
        assert!((ln_binomial(4, 2) - 6f64.ln()).abs() < 1e-15);
        assert!((ln_binomial(100, 50) - 66.783_841_652_017_37).abs() < 1e-9);
        assert!((ln_binomial(1001, 1) - 1001f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn quadrature_integrates_exponential() {
        let v = integrate(|x| (-x).exp(), 0.0, 40.0, 40);
        assert!((v - (1.0 - (-40f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = compensated_sum([1.0, 1e-17, -1.0]);
        assert!((s - 1e-17).abs() < 1e-30);
    }
}
