//! Exact term algebra for partial derivatives of the Black-Scholes put.
//!
//! A term is A / (x^n y^{m/2}) * phi(d+) * F(d+, d-, sqrt y) with F a polynomial
//! with rational coefficients.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Exponents (i, j, k) of d+^i d-^j (sqrt y)^k.
pub type Exps = (u32, u32, u32);
pub type Poly = BTreeMap<Exps, BigRational>;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn add_into(p: &mut Poly, e: Exps, c: BigRational) {
    if c.is_zero() {
        return;
    }
    let slot = p.entry(e).or_insert_with(BigRational::zero);
    *slot += c;
    if slot.is_zero() {
        p.remove(&e);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivTerm {
    pub a_coef: BigRational,
    pub x_pow: i32,
    pub sqrt_y_pow: i32,
    pub poly: Poly,
}

impl DerivTerm {
    pub fn new(a_coef: BigRational, x_pow: i32, sqrt_y_pow: i32, poly: Poly) -> Self {
        Self {
            a_coef,
            x_pow,
            sqrt_y_pow,
            poly,
        }
    }

    /// Builds a term from small integer data: coefficient num/den and monomials.
    pub fn from_parts(
        num: i64,
        den: i64,
        x_pow: i32,
        sqrt_y_pow: i32,
        monos: &[(i64, Exps)],
    ) -> Self {
        let mut poly = Poly::new();
        for &(c, e) in monos {
            add_into(&mut poly, e, rat(c));
        }
        Self::new(
            BigRational::new(num.into(), den.into()),
            x_pow,
            sqrt_y_pow,
            poly,
        )
    }

    /// d/dx: A/(x^{n+1} y^{(m+1)/2}) phi [-(d+ + n sqrt y) F + F_{d+} + F_{d-}].
    pub fn diff_x(&self) -> Self {
        let n = self.x_pow as i64;
        let mut out = Poly::new();
        for (&(i, j, k), c) in &self.poly {
            add_into(&mut out, (i + 1, j, k), -c.clone());
            add_into(&mut out, (i, j, k + 1), -c.clone() * rat(n));
            if i > 0 {
                add_into(&mut out, (i - 1, j, k), c.clone() * rat(i as i64));
            }
            if j > 0 {
                add_into(&mut out, (i, j - 1, k), c.clone() * rat(j as i64));
            }
        }
        Self::new(
            self.a_coef.clone(),
            self.x_pow + 1,
            self.sqrt_y_pow + 1,
            out,
        )
    }

    /// d/dy: (A/2)/(x^n y^{m/2+1}) phi [(d+ d- - m) F - d- F_{d+} - d+ F_{d-} + s F_s].
    pub fn diff_y(&self) -> Self {
        let m = self.sqrt_y_pow as i64;
        let mut out = Poly::new();
        for (&(i, j, k), c) in &self.poly {
            add_into(&mut out, (i + 1, j + 1, k), c.clone());
            add_into(&mut out, (i, j, k), c.clone() * rat(k as i64 - m));
            if i > 0 {
                add_into(&mut out, (i - 1, j + 1, k), -c.clone() * rat(i as i64));
            }
            if j > 0 {
                add_into(&mut out, (i + 1, j - 1, k), -c.clone() * rat(j as i64));
            }
        }
        Self::new(
            self.a_coef.clone() / rat(2),
            self.x_pow,
            self.sqrt_y_pow + 2,
            out,
        )
    }

    /// Unique representative: d- eliminated via d- = d+ - sqrt y, the smallest
    /// sqrt y power moved into m, and the content of the polynomial moved into A so
    /// that F has coprime integer coefficients and a positive first monomial.
    pub fn canonical(&self) -> Self {
        let mut sub = Poly::new();
        for (&(i, j, k), c) in &self.poly {
            // (d+ - s)^j
            let mut b = BigInt::one();
            for l in 0..=j {
                // term C(j,l) d+^{j-l} (-s)^l
                let mut coef = c.clone() * BigRational::from_integer(b.clone());
                if l % 2 == 1 {
                    coef = -coef;
                }
                add_into(&mut sub, (i + j - l, 0, k + l), coef);
                b = b * BigInt::from(j - l) / BigInt::from(l + 1);
            }
        }
        if sub.is_empty() {
            return Self::new(BigRational::zero(), self.x_pow, self.sqrt_y_pow, sub);
        }
        let kmin = sub.keys().map(|e| e.2).min().unwrap_or(0);
        let mut num_gcd = BigInt::zero();
        let mut den_lcm = BigInt::one();
        for c in sub.values() {
            num_gcd = num_gcd.gcd(c.numer());
            den_lcm = den_lcm.lcm(c.denom());
        }
        let mut content = BigRational::new(num_gcd, den_lcm);
        let first = sub.values().next().expect("nonempty");
        if first.is_negative() {
            content = -content;
        }
        let poly: Poly = sub
            .into_iter()
            .map(|((i, j, k), c)| ((i, j, k - kmin), c / content.clone()))
            .collect();
        Self::new(
            self.a_coef.clone() * content,
            self.x_pow,
            self.sqrt_y_pow - kmin as i32,
            poly,
        )
    }

    /// Degree at least one in d+ or d-.
    pub fn has_d_dependence(&self) -> bool {
        self.poly.keys().any(|&(i, j, _)| i > 0 || j > 0)
    }

    pub fn a_coef_f64(&self) -> f64 {
        ratio_f64(&self.a_coef)
    }

    pub(crate) fn compile(&self) -> CompiledTerm {
        let a = self.a_coef_f64();
        let monos = self.poly.iter().map(|(&e, c)| (e, ratio_f64(c))).collect();
        CompiledTerm {
            ln_abs_a: a.abs().ln(),
            sign_a: a.signum(),
            n: self.x_pow,
            m: self.sqrt_y_pow,
            monos,
        }
    }
}

fn ratio_f64(c: &BigRational) -> f64 {
    match (c.numer().to_f64(), c.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => f64::NAN,
    }
}

fn fmt_rat(c: &BigRational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for DerivTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} / (x^{} y^({}/2)) phi(d+) [",
            fmt_rat(&self.a_coef),
            self.x_pow,
            self.sqrt_y_pow
        )?;
        let mut first = true;
        for (&(i, j, k), c) in &self.poly {
            let (neg, mag) = if c.is_negative() {
                (true, -c.clone())
            } else {
                (false, c.clone())
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let mut parts = Vec::new();
            if !mag.is_one() || (i, j, k) == (0, 0, 0) {
                parts.push(fmt_rat(&mag));
            }
            for (sym, p) in [("d+", i), ("d-", j), ("sqrt(y)", k)] {
                match p {
                    0 => {}
                    1 => parts.push(sym.to_string()),
                    p => parts.push(format!("{sym}^{p}")),
                }
            }
            write!(f, "{}", parts.join(" "))?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, "]")
    }
}

/// Floating-point form used for evaluation.
#[derive(Debug, Clone)]
pub(crate) struct CompiledTerm {
    ln_abs_a: f64,
    sign_a: f64,
    n: i32,
    m: i32,
    monos: Vec<(Exps, f64)>,
}

impl CompiledTerm {
    /// Value at given (x, y) with d+, d- supplied.
    pub(crate) fn eval(&self, x: f64, y: f64, dp: f64, dm: f64) -> f64 {
        let s = y.sqrt();
        // Horner in d+ for each (j, k) group would need regrouping; the monomial
        // count is small, so plain power tables are enough.
        let max_i = self.monos.iter().map(|m| m.0 .0).max().unwrap_or(0) as usize;
        let max_j = self.monos.iter().map(|m| m.0 .1).max().unwrap_or(0) as usize;
        let max_k = self.monos.iter().map(|m| m.0 .2).max().unwrap_or(0) as usize;
        let pw = |b: f64, n: usize| {
            let mut v = Vec::with_capacity(n + 1);
            let mut acc = 1.0;
            for _ in 0..=n {
                v.push(acc);
                acc *= b;
            }
            v
        };
        let (pi, pj, pk) = (pw(dp, max_i), pw(dm, max_j), pw(s, max_k));
        let mut poly = 0.0;
        for &((i, j, k), c) in &self.monos {
            poly += c * pi[i as usize] * pj[j as usize] * pk[k as usize];
        }
        let ln_mag = self.ln_abs_a
            - self.n as f64 * x.ln()
            - 0.5 * self.m as f64 * y.ln()
            - 0.5 * dp * dp
            - 0.918_938_533_204_672_8; // ln sqrt(2 pi)
        self.sign_a * ln_mag.exp() * poly
    }
}
