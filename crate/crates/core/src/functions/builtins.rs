use super::divided::complete_homogeneous;
use super::{
    factorial, Domain, FunctionFlags, FunctionRegistry, FunctionSpec,
    SmoothFunction,
};
use crate::error::{OslabError, Result};

/// Order reported by functions whose derivatives exist to every order.
const UNBOUNDED_ORDER: usize = 64;

const BUMP_MAX_ORDER: usize = 16;

pub(super) fn register_all(registry: &mut FunctionRegistry) {
    registry.register("exp", |spec| {
        Ok(Box::new(Exponential::new(
            "exp",
            spec.param("rate", 1.0),
            spec.param("scale", 1.0),
        )))
    });
    registry.register("exp_decay", |spec| {
        Ok(Box::new(Exponential::new(
            "exp_decay",
            -spec.param("rate", 1.0).abs(),
            spec.param("scale", 1.0),
        )))
    });
    registry.register("neg_exp_decay", |_| Ok(Box::new(NegExpDecay)));
    registry.register("one_minus_exp", |_| Ok(Box::new(OneMinusExp)));
    registry.register("shifted_power", |spec| {
        let p = spec.required("p")?;
        Ok(Box::new(ShiftedPower::new(
            p,
            spec.param("shift", 0.0),
            spec.param("coeff", 1.0),
        )?))
    });
    registry.register("resolvent_power", |spec| {
        Ok(Box::new(ResolventPower::new(
            spec.param("r", 1.0),
            spec.required("shift")?,
        )?))
    });
    registry.register("truncated_power", |spec| {
        let n = integer_param(spec, "n")?;
        Ok(Box::new(TruncatedPower::new(n, spec.param("shift", 0.0))?))
    });
    registry.register("monomial", |spec| {
        let degree = integer_param(spec, "degree")?;
        Ok(Box::new(Monomial::new(degree, spec.param("coeff", 1.0))))
    });
    registry.register("polynomial", |spec| {
        let mut coeffs = Vec::new();
        for (key, &value) in &spec.params {
            let index: usize = key
                .strip_prefix('c')
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| {
                    OslabError::InvalidParameter(format!(
                        "polynomial parameters are named c0, c1, ...; got `{key}`"
                    ))
                })?;
            if coeffs.len() <= index {
                coeffs.resize(index + 1, 0.0);
            }
            coeffs[index] = value;
        }
        Ok(Box::new(Polynomial::new(coeffs)))
    });
    registry.register("bump", |spec| {
        Ok(Box::new(Bump::new(
            spec.param("center", 0.0),
            spec.param("radius", 1.0),
            spec.param("height", 1.0),
        )?))
    });
}

fn integer_param(spec: &FunctionSpec, key: &str) -> Result<usize> {
    let value = spec.required(key)?;
    if value < 0.0 || value.fract() != 0.0 {
        return Err(OslabError::InvalidParameter(format!(
            "`{}` needs a nonnegative integer `{key}`, got {value}",
            spec.name
        )));
    }
    Ok(value as usize)
}

/// `p (p-1) ... (p-k+1)`
fn falling_factorial(p: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (p - j as f64))
}

/// `scale · e^(rate·x)`
#[derive(Debug, Clone)]
pub struct Exponential {
    name: &'static str,
    pub rate: f64,
    pub scale: f64,
}

impl Exponential {
    pub fn new(name: &'static str, rate: f64, scale: f64) -> Self {
        Self { name, rate, scale }
    }
}

impl SmoothFunction for Exponential {
    fn name(&self) -> &str {
        self.name
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        self.scale * self.rate.powi(k as i32) * (self.rate * x).exp()
    }

    fn flags(&self) -> FunctionFlags {
        let decaying = self.rate < 0.0 && self.scale > 0.0;
        FunctionFlags {
            completely_monotone: decaying,
            wiener_extendable: true,
            ..Default::default()
        }
    }

    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `-e^(-x)`: the heat-kernel symbol, with completely monotone derivative.
#[derive(Debug, Clone, Copy)]
pub struct NegExpDecay;

impl SmoothFunction for NegExpDecay {
    fn name(&self) -> &str {
        "neg_exp_decay"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        sign * (-x).exp()
    }

    fn flags(&self) -> FunctionFlags {
        FunctionFlags {
            completely_monotone_derivative: true,
            wiener_extendable: true,
            ..Default::default()
        }
    }

    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `1 - e^(-x)`
#[derive(Debug, Clone, Copy)]
pub struct OneMinusExp;

impl SmoothFunction for OneMinusExp {
    fn name(&self) -> &str {
        "one_minus_exp"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        if k == 0 {
            -(-x).exp_m1()
        } else {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sign * (-x).exp()
        }
    }

    fn flags(&self) -> FunctionFlags {
        FunctionFlags {
            completely_monotone_derivative: true,
            bernstein: true,
            wiener_extendable: true,
            ..Default::default()
        }
    }

    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `coeff · (x - shift)^p`. Non-integer or negative exponents live on
/// `(shift, ∞)`; nonnegative integer exponents on the whole line.
#[derive(Debug, Clone)]
pub struct ShiftedPower {
    pub p: f64,
    pub shift: f64,
    pub coeff: f64,
}

impl ShiftedPower {
    pub fn new(p: f64, shift: f64, coeff: f64) -> Result<Self> {
        if !p.is_finite() || !shift.is_finite() || !coeff.is_finite() {
            return Err(OslabError::InvalidParameter(format!(
                "shifted_power needs finite parameters, got p={p}, shift={shift}, coeff={coeff}"
            )));
        }
        Ok(Self { p, shift, coeff })
    }

    fn integer_exponent(&self) -> Option<i32> {
        (self.p.fract() == 0.0 && self.p.abs() < 1e6).then_some(self.p as i32)
    }

    fn is_polynomial(&self) -> bool {
        matches!(self.integer_exponent(), Some(d) if d >= 0)
    }
}

impl SmoothFunction for ShiftedPower {
    fn name(&self) -> &str {
        "shifted_power"
    }

    fn domain(&self) -> Domain {
        if self.is_polynomial() {
            Domain::REAL
        } else {
            Domain::above(self.shift)
        }
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        let y = x - self.shift;
        match self.integer_exponent() {
            Some(d) if d >= 0 && k as i32 > d => 0.0,
            Some(d) => self.coeff * falling_factorial(self.p, k) * y.powi(d - k as i32),
            None => self.coeff * falling_factorial(self.p, k) * y.powf(self.p - k as f64),
        }
    }

    fn flags(&self) -> FunctionFlags {
        FunctionFlags {
            completely_monotone: self.p < 0.0 && self.coeff > 0.0,
            completely_monotone_derivative: self.p > 0.0 && self.p <= 1.0 && self.coeff > 0.0,
            bernstein: self.p > 0.0 && self.p <= 1.0 && self.coeff > 0.0,
            ..Default::default()
        }
    }

    fn exact_divided_difference(&self, nodes: &[f64]) -> Option<f64> {
        let degree = self.integer_exponent().filter(|&d| d >= 0)? as usize;
        let m = nodes.len() - 1;
        if m > degree {
            return Some(0.0);
        }
        let shifted: Vec<f64> = nodes.iter().map(|x| x - self.shift).collect();
        Some(self.coeff * complete_homogeneous(&shifted, degree - m))
    }

    fn analytic_radius(&self, x: f64) -> Option<f64> {
        if self.is_polynomial() {
            Some(f64::INFINITY)
        } else {
            Some(x - self.shift)
        }
    }
}

/// `-(x - shift)^(-r)`, `r >= 1`: the resolvent-power symbol.
#[derive(Debug, Clone)]
pub struct ResolventPower {
    inner: ShiftedPower,
}

impl ResolventPower {
    pub fn new(r: f64, shift: f64) -> Result<Self> {
        if !(r >= 1.0) {
            return Err(OslabError::InvalidParameter(format!(
                "resolvent_power needs r >= 1, got {r}"
            )));
        }
        Ok(Self {
            inner: ShiftedPower::new(-r, shift, -1.0)?,
        })
    }
}

impl SmoothFunction for ResolventPower {
    fn name(&self) -> &str {
        "resolvent_power"
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        self.inner.eval(x, k)
    }

    fn flags(&self) -> FunctionFlags {
        FunctionFlags {
            completely_monotone_derivative: true,
            wiener_extendable: true,
            ..Default::default()
        }
    }

    fn analytic_radius(&self, x: f64) -> Option<f64> {
        self.inner.analytic_radius(x)
    }
}

/// `(x - shift)_+^n / n!`, whose n-th derivative is the indicator of
/// `(shift, ∞)`. Only `C^(n-1)`, so divided differences are evaluated in
/// closed piecewise-polynomial form.
#[derive(Debug, Clone)]
pub struct TruncatedPower {
    pub degree: usize,
    pub shift: f64,
    norm: f64,
}

impl TruncatedPower {
    pub fn new(degree: usize, shift: f64) -> Result<Self> {
        if degree == 0 {
            return Err(OslabError::InvalidParameter(
                "truncated_power needs n >= 1".into(),
            ));
        }
        if !shift.is_finite() {
            return Err(OslabError::InvalidParameter(format!(
                "truncated_power needs a finite shift, got {shift}"
            )));
        }
        Ok(Self {
            degree,
            shift,
            norm: factorial(degree),
        })
    }

    /// Divided difference of `(x - shift)_+^j` over `nodes` (ascending).
    fn raw(&self, j: usize, nodes: &[f64]) -> f64 {
        let m = nodes.len() - 1;
        let lam = self.shift;
        let first = nodes[0];
        let last = nodes[m];
        if last <= lam {
            return 0.0;
        }
        if first > lam {
            // plain polynomial (x - λ)^j on every node
            if m > j {
                return 0.0;
            }
            let shifted: Vec<f64> = nodes.iter().map(|x| x - lam).collect();
            return complete_homogeneous(&shifted, j - m);
        }
        if m == 0 {
            return (first - lam).max(0.0).powi(j as i32);
        }
        if m >= j {
            // order at or above the smoothness: nodes straddle λ, so last > first
            return (self.raw(j, &nodes[1..]) - self.raw(j, &nodes[..m])) / (last - first);
        }
        // Leibniz rule on (x - λ)·(x - λ)_+^(j-1), expanded at the largest node;
        // both terms are nonnegative because last > λ.
        (last - lam) * self.raw(j - 1, nodes) + self.raw(j - 1, &nodes[..m])
    }
}

impl SmoothFunction for TruncatedPower {
    fn name(&self) -> &str {
        "truncated_power"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        self.degree
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        if k > self.degree {
            return 0.0;
        }
        let y = x - self.shift;
        if y <= 0.0 {
            return 0.0;
        }
        let j = self.degree - k;
        y.powi(j as i32) / factorial(j)
    }

    fn exact_divided_difference(&self, nodes: &[f64]) -> Option<f64> {
        Some(self.raw(self.degree, nodes) / self.norm)
    }
}

/// `Σ c_d x^d`
#[derive(Debug, Clone)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }
}

impl SmoothFunction for Polynomial {
    fn name(&self) -> &str {
        "polynomial"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        UNBOUNDED_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        // Horner on the k-th derivative's coefficients
        self.coeffs
            .iter()
            .enumerate()
            .skip(k)
            .rev()
            .fold(0.0, |acc, (d, &c)| acc * x + c * falling_factorial(d as f64, k))
    }

    fn exact_divided_difference(&self, nodes: &[f64]) -> Option<f64> {
        let m = nodes.len() - 1;
        Some(
            self.coeffs
                .iter()
                .enumerate()
                .skip(m)
                .filter(|(_, &c)| c != 0.0)
                .map(|(d, &c)| c * complete_homogeneous(nodes, d - m))
                .sum(),
        )
    }

    fn analytic_radius(&self, _x: f64) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// `coeff · x^degree`
#[derive(Debug, Clone)]
pub struct Monomial;

impl Monomial {
    #[allow(clippy::new_ret_no_self)]
    pub fn new(degree: usize, coeff: f64) -> Polynomial {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = coeff;
        Polynomial::new(coeffs)
    }
}

/// `height · exp(-1 / (1 - u²))`, `u = (x - center) / radius`, zero for
/// `|u| >= 1`.
#[derive(Debug, Clone)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub height: f64,
    /// `b^(k)(u) = q_k(u) (1-u²)^(-2k) e^(-1/(1-u²))`
    numerators: Vec<Vec<f64>>,
}

impl Bump {
    pub fn new(center: f64, radius: f64, height: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.is_finite() || !height.is_finite() {
            return Err(OslabError::InvalidParameter(format!(
                "bump needs radius > 0 and finite center/height, got center={center}, radius={radius}, height={height}"
            )));
        }
        let mut numerators = vec![vec![1.0]];
        for k in 0..BUMP_MAX_ORDER {
            let q = &numerators[k];
            // q_{k+1} = (1-u²)² q_k' + (4k u (1-u²) - 2u) q_k
            let dq: Vec<f64> = q
                .iter()
                .enumerate()
                .skip(1)
                .map(|(d, &c)| c * d as f64)
                .collect();
            let one_minus_sq_sq = [1.0, 0.0, -2.0, 0.0, 1.0];
            let kf = 4.0 * k as f64;
            let linear = [0.0, kf - 2.0, 0.0, -kf];
            let next = poly_add(&poly_mul(&one_minus_sq_sq, &dq), &poly_mul(&linear, q));
            numerators.push(next);
        }
        Ok(Self {
            center,
            radius,
            height,
            numerators,
        })
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

impl SmoothFunction for Bump {
    fn name(&self) -> &str {
        "bump"
    }

    fn domain(&self) -> Domain {
        Domain::REAL
    }

    fn max_order(&self) -> usize {
        BUMP_MAX_ORDER
    }

    fn eval(&self, x: f64, k: usize) -> f64 {
        let u = (x - self.center) / self.radius;
        if u.abs() >= 1.0 || k > BUMP_MAX_ORDER {
            return 0.0;
        }
        let w = 1.0 - u * u;
        let q = self.numerators[k].iter().rev().fold(0.0, |acc, &c| acc * u + c);
        let envelope = (-1.0 / w - 2.0 * k as f64 * w.ln()).exp();
        self.height * q * envelope / self.radius.powi(k as i32)
    }

    fn flags(&self) -> FunctionFlags {
        FunctionFlags {
            compact_support: true,
            wiener_extendable: true,
            ..Default::default()
        }
    }
}
