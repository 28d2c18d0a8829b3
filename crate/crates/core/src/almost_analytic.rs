//! Almost analytic extensions: given a smooth function f with derivatives up
//! to order ell + 1 and a plateau cutoff tau, build
//!
//! ```text
//! f~(z) = sigma(x,y) * sum_{k=0}^{ell} f^(k)(x) (iy)^k / k!,   sigma(x,y) = tau(y/<x>),
//! ```
//!
//! together with its Wirtinger derivative d/dzbar f~. The extension agrees
//! with f on the real axis and its dbar-derivative vanishes there to order
//! |y|^ell, which is what makes the resolvent-integral calculus converge.
//!
//! Derivatives are supplied in closed form by each bundle (polynomial
//! recurrences precomputed at construction); a finite-difference fallback
//! exists but is flagged reduced-accuracy and stays out of acceptance runs.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// small dense polynomials (ascending coefficients) for derivative recurrences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Poly(Vec<f64>);

impl Poly {
    fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn deriv(&self) -> Self {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    fn mul(&self, other: &Poly) -> Self {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn add(&self, other: &Poly) -> Self {
        let n = self.0.len().max(other.0.len());
        let mut out = vec![0.0; n];
        for (i, c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        Poly(out)
    }
}

// ---------------------------------------------------------------------------
// function bundles
// ---------------------------------------------------------------------------

/// Decay class of a bundle: compactly supported, or a symbol whose m-th
/// derivative decays like <x>^(beta - m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionClass {
    CompactSupport { lo: f64, hi: f64 },
    Symbol { beta: f64 },
}

pub trait SmoothFunction: Send + Sync {
    /// k-th derivative at x, 0 <= k <= max_order.
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64;
    fn class(&self) -> FunctionClass;
    fn max_order(&self) -> usize;
    /// Local length scale on which the derivatives vary; steers quadrature.
    fn smoothness_scale(&self, _x: f64) -> f64 {
        1.0
    }
    fn reduced_accuracy(&self) -> bool {
        false
    }
}

/// A smooth function together with derivative evaluations up to `max_order`.
#[derive(Clone)]
pub struct SmoothFunctionBundle {
    inner: Arc<dyn SmoothFunction>,
}

impl std::fmt::Debug for SmoothFunctionBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothFunctionBundle")
            .field("class", &self.class())
            .field("max_order", &self.max_order())
            .finish()
    }
}

/// Orders kept available on the built-in closed-form bundles.
pub const DEFAULT_MAX_ORDER: usize = 12;

impl SmoothFunctionBundle {
    pub fn from_impl(inner: Arc<dyn SmoothFunction>) -> Self {
        Self { inner }
    }

    /// Standard bump supported on (center - radius, center + radius),
    /// normalized so the peak value is 1.
    pub fn bump(center: f64, radius: f64) -> Self {
        Self::bump_with_amplitude(center, radius, 1.0)
    }

    /// Bump with peak value `amplitude`.
    pub fn bump_with_amplitude(center: f64, radius: f64, amplitude: f64) -> Self {
        Self {
            inner: Arc::new(Bump::new(center, radius, amplitude)),
        }
    }

    /// The symbol <x>^beta = (1 + x^2)^(beta/2).
    pub fn symbol(beta: f64) -> Self {
        Self {
            inner: Arc::new(SymbolPower::new(beta)),
        }
    }

    /// Pointwise product via the Leibniz rule.
    pub fn product(f: &Self, g: &Self) -> Self {
        Self {
            inner: Arc::new(ProductBundle {
                f: f.inner.clone(),
                g: g.inner.clone(),
            }),
        }
    }

    /// Complex linear combination sum_j c_j f_j.
    pub fn linear_combination(terms: Vec<(Complex64, Self)>) -> Self {
        Self {
            inner: Arc::new(LinearCombination {
                terms: terms
                    .into_iter()
                    .map(|(c, b)| (c, b.inner))
                    .collect(),
            }),
        }
    }

    /// Complex conjugate of the function (derivatives conjugate likewise).
    pub fn conj(&self) -> Self {
        Self {
            inner: Arc::new(ConjBundle {
                f: self.inner.clone(),
            }),
        }
    }

    /// Finite-difference fallback around an arbitrary closure. Reduced
    /// accuracy; excluded from acceptance runs.
    pub fn finite_difference(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        class: FunctionClass,
    ) -> Self {
        Self {
            inner: Arc::new(FiniteDifferenceBundle {
                f: Box::new(f),
                class,
            }),
        }
    }

    pub fn eval(&self, order: usize, x: f64) -> Complex64 {
        debug_assert!(order <= self.max_order());
        self.inner.eval_deriv(order, x)
    }

    pub fn value(&self, x: f64) -> Complex64 {
        self.eval(0, x)
    }

    pub fn class(&self) -> FunctionClass {
        self.inner.class()
    }

    pub fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    pub fn smoothness_scale(&self, x: f64) -> f64 {
        self.inner.smoothness_scale(x)
    }

    pub fn reduced_accuracy(&self) -> bool {
        self.inner.reduced_accuracy()
    }

    /// Support interval for compactly supported bundles.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self.class() {
            FunctionClass::CompactSupport { lo, hi } => Some((lo, hi)),
            FunctionClass::Symbol { .. } => None,
        }
    }
}

/// exp(-1/(1 - u^2)) on (-1,1), shifted and scaled. Derivatives follow the
/// recurrence f^(k) = N_k(u) (1-u^2)^(-2k) f with
/// N_{k+1} = (1-u^2)^2 N_k' + (4k u (1-u^2) - 2u) N_k, precomputed once.
struct Bump {
    center: f64,
    radius: f64,
    amplitude: f64,
    numerators: Vec<Poly>,
}

// Below this value of t = 1 - u^2 the bump value underflows f64; every
// derivative is then below ~1e-230 and is returned as exact zero.
const BUMP_UNDERFLOW_T: f64 = 1.45e-3;

impl Bump {
    fn new(center: f64, radius: f64, amplitude: f64) -> Self {
        assert!(radius > 0.0, "bump radius must be positive");
        let one_minus_u2 = Poly(vec![1.0, 0.0, -1.0]);
        let a = one_minus_u2.mul(&one_minus_u2); // (1-u^2)^2
        let mut numerators = vec![Poly::constant(1.0)];
        for k in 0..DEFAULT_MAX_ORDER {
            let n_k = &numerators[k];
            let b_k = Poly(vec![0.0, 4.0 * k as f64 - 2.0, 0.0, -4.0 * k as f64]);
            numerators.push(a.mul(&n_k.deriv()).add(&b_k.mul(n_k)));
        }
        Self {
            center,
            radius,
            amplitude,
            numerators,
        }
    }
}

impl SmoothFunction for Bump {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        let u = (x - self.center) / self.radius;
        let t = 1.0 - u * u;
        if t <= BUMP_UNDERFLOW_T {
            return Complex64::new(0.0, 0.0);
        }
        // peak-normalized: amplitude * exp(1 - 1/t)
        let f = self.amplitude * (1.0 - 1.0 / t).exp();
        let v = self.numerators[order].eval(u) * t.powi(-2 * (order as i32)) * f
            / self.radius.powi(order as i32);
        Complex64::new(v, 0.0)
    }

    fn class(&self) -> FunctionClass {
        FunctionClass::CompactSupport {
            lo: self.center - self.radius,
            hi: self.center + self.radius,
        }
    }

    fn max_order(&self) -> usize {
        DEFAULT_MAX_ORDER
    }

    fn smoothness_scale(&self, _x: f64) -> f64 {
        0.25 * self.radius
    }
}

/// <x>^beta with the polynomial recurrence
/// P_{k+1} = (1+x^2) P_k' + (beta - 2k) x P_k, f^(k) = P_k(x) <x>^(beta - 2k).
struct SymbolPower {
    beta: f64,
    numerators: Vec<Poly>,
}

impl SymbolPower {
    fn new(beta: f64) -> Self {
        let one_plus_x2 = Poly(vec![1.0, 0.0, 1.0]);
        let mut numerators = vec![Poly::constant(1.0)];
        for k in 0..DEFAULT_MAX_ORDER {
            let p_k = &numerators[k];
            let b_k = Poly(vec![0.0, beta - 2.0 * k as f64]);
            numerators.push(one_plus_x2.mul(&p_k.deriv()).add(&b_k.mul(p_k)));
        }
        Self { beta, numerators }
    }
}

impl SmoothFunction for SymbolPower {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        let bracket = (1.0 + x * x).sqrt();
        let v = self.numerators[order].eval(x) * bracket.powf(self.beta - 2.0 * order as f64);
        Complex64::new(v, 0.0)
    }

    fn class(&self) -> FunctionClass {
        FunctionClass::Symbol { beta: self.beta }
    }

    fn max_order(&self) -> usize {
        DEFAULT_MAX_ORDER
    }

    fn smoothness_scale(&self, x: f64) -> f64 {
        0.5 * (1.0 + x * x).sqrt()
    }
}

struct ProductBundle {
    f: Arc<dyn SmoothFunction>,
    g: Arc<dyn SmoothFunction>,
}

impl SmoothFunction for ProductBundle {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        // Leibniz rule
        let mut binom = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..=order {
            if j > 0 {
                binom *= (order - j + 1) as f64 / j as f64;
            }
            acc += binom * self.f.eval_deriv(j, x) * self.g.eval_deriv(order - j, x);
        }
        acc
    }

    fn class(&self) -> FunctionClass {
        match (self.f.class(), self.g.class()) {
            (
                FunctionClass::CompactSupport { lo: a1, hi: b1 },
                FunctionClass::CompactSupport { lo: a2, hi: b2 },
            ) => FunctionClass::CompactSupport {
                lo: a1.max(a2),
                hi: b1.min(b2),
            },
            (FunctionClass::CompactSupport { lo, hi }, FunctionClass::Symbol { .. }) => {
                FunctionClass::CompactSupport { lo, hi }
            }
            (FunctionClass::Symbol { .. }, FunctionClass::CompactSupport { lo, hi }) => {
                FunctionClass::CompactSupport { lo, hi }
            }
            (FunctionClass::Symbol { beta: b1 }, FunctionClass::Symbol { beta: b2 }) => {
                FunctionClass::Symbol { beta: b1 + b2 }
            }
        }
    }

    fn max_order(&self) -> usize {
        self.f.max_order().min(self.g.max_order())
    }

    fn smoothness_scale(&self, x: f64) -> f64 {
        self.f.smoothness_scale(x).min(self.g.smoothness_scale(x))
    }

    fn reduced_accuracy(&self) -> bool {
        self.f.reduced_accuracy() || self.g.reduced_accuracy()
    }
}

struct LinearCombination {
    terms: Vec<(Complex64, Arc<dyn SmoothFunction>)>,
}

impl SmoothFunction for LinearCombination {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, f)| c * f.eval_deriv(order, x))
            .sum()
    }

    fn class(&self) -> FunctionClass {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut beta_max = f64::NEG_INFINITY;
        let mut any_symbol = false;
        for (_, f) in &self.terms {
            match f.class() {
                FunctionClass::CompactSupport { lo: a, hi: b } => {
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
                FunctionClass::Symbol { beta } => {
                    any_symbol = true;
                    beta_max = beta_max.max(beta);
                }
            }
        }
        if any_symbol {
            FunctionClass::Symbol { beta: beta_max }
        } else {
            FunctionClass::CompactSupport { lo, hi }
        }
    }

    fn max_order(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, f)| f.max_order())
            .min()
            .unwrap_or(0)
    }

    fn smoothness_scale(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|(_, f)| f.smoothness_scale(x))
            .fold(f64::INFINITY, f64::min)
    }

    fn reduced_accuracy(&self) -> bool {
        self.terms.iter().any(|(_, f)| f.reduced_accuracy())
    }
}

struct ConjBundle {
    f: Arc<dyn SmoothFunction>,
}

impl SmoothFunction for ConjBundle {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        self.f.eval_deriv(order, x).conj()
    }

    fn class(&self) -> FunctionClass {
        self.f.class()
    }

    fn max_order(&self) -> usize {
        self.f.max_order()
    }

    fn smoothness_scale(&self, x: f64) -> f64 {
        self.f.smoothness_scale(x)
    }

    fn reduced_accuracy(&self) -> bool {
        self.f.reduced_accuracy()
    }
}

struct FiniteDifferenceBundle {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    class: FunctionClass,
}

impl FiniteDifferenceBundle {
    fn diff(&self, order: usize, x: f64, h: f64) -> f64 {
        if order == 0 {
            return (self.f)(x);
        }
        (self.diff(order - 1, x + h, h) - self.diff(order - 1, x - h, h)) / (2.0 * h)
    }
}

impl SmoothFunction for FiniteDifferenceBundle {
    fn eval_deriv(&self, order: usize, x: f64) -> Complex64 {
        // step balances truncation against subtractive noise per order
        let h = 1e-3 * (1.0 + order as f64);
        Complex64::new(self.diff(order, x, h), 0.0)
    }

    fn class(&self) -> FunctionClass {
        self.class
    }

    fn max_order(&self) -> usize {
        4
    }

    fn reduced_accuracy(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// cutoffs
// ---------------------------------------------------------------------------

/// Plateau cutoff: tau = 1 on |s| <= 1, tau = 0 on |s| >= 2, smooth between.
pub trait Cutoff: Send + Sync {
    fn tau(&self, s: f64) -> f64;
    fn tau_prime(&self, s: f64) -> f64;
    fn name(&self) -> &'static str;
}

fn h_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn h_exp_prime(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp() / (t * t)
    } else {
        0.0
    }
}

/// tau(s) = h(2-|s|) / (h(2-|s|) + h(|s|-1)) with h(t) = exp(-1/t) on t > 0.
pub struct BumpQuotientCutoff;

impl Cutoff for BumpQuotientCutoff {
    fn tau(&self, s: f64) -> f64 {
        let s = s.abs();
        if s <= 1.0 {
            return 1.0;
        }
        if s >= 2.0 {
            return 0.0;
        }
        let a = h_exp(2.0 - s);
        let b = h_exp(s - 1.0);
        a / (a + b)
    }

    fn tau_prime(&self, s: f64) -> f64 {
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let s = s.abs();
        if s <= 1.0 || s >= 2.0 {
            return 0.0;
        }
        let a = h_exp(2.0 - s);
        let b = h_exp(s - 1.0);
        let da = -h_exp_prime(2.0 - s);
        let db = h_exp_prime(s - 1.0);
        sign * (da * b - a * db) / ((a + b) * (a + b))
    }

    fn name(&self) -> &'static str {
        "bump-quotient"
    }
}

/// Seventh-order polynomial smoothstep ramp on 1 <= |s| <= 2 (C^3 at the
/// junctions). A second admissible cutoff for invariance checks.
pub struct SmoothstepCutoff;

impl Cutoff for SmoothstepCutoff {
    fn tau(&self, s: f64) -> f64 {
        let s = s.abs();
        if s <= 1.0 {
            return 1.0;
        }
        if s >= 2.0 {
            return 0.0;
        }
        let u = s - 1.0;
        let ramp = u * u * u * u * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)));
        1.0 - ramp
    }

    fn tau_prime(&self, s: f64) -> f64 {
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let s = s.abs();
        if s <= 1.0 || s >= 2.0 {
            return 0.0;
        }
        let u = s - 1.0;
        let v = 1.0 - u;
        sign * (-140.0 * u * u * u * v * v * v)
    }

    fn name(&self) -> &'static str {
        "smoothstep"
    }
}

#[derive(Clone)]
pub struct CutoffProfile {
    inner: Arc<dyn Cutoff>,
}

impl std::fmt::Debug for CutoffProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CutoffProfile({})", self.inner.name())
    }
}

impl CutoffProfile {
    pub fn bump_quotient() -> Self {
        Self {
            inner: Arc::new(BumpQuotientCutoff),
        }
    }

    pub fn smoothstep() -> Self {
        Self {
            inner: Arc::new(SmoothstepCutoff),
        }
    }

    pub fn tau(&self, s: f64) -> f64 {
        self.inner.tau(s)
    }

    pub fn tau_prime(&self, s: f64) -> f64 {
        self.inner.tau_prime(s)
    }

    pub fn name(&self) -> &'static str {
        self.inner.name()
    }
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self::bump_quotient()
    }
}

// ---------------------------------------------------------------------------
// the extension itself
// ---------------------------------------------------------------------------

pub fn bracket(x: f64) -> f64 {
    (x * x + 1.0).sqrt()
}

/// Default Taylor order of the extension.
pub const DEFAULT_ELL: usize = 2;

/// The pair (f~, d f~ / d zbar) for a bundle, order ell and cutoff.
#[derive(Debug, Clone)]
pub struct AlmostAnalyticExtension {
    bundle: SmoothFunctionBundle,
    ell: usize,
    cutoff: CutoffProfile,
}

impl AlmostAnalyticExtension {
    pub fn new(bundle: SmoothFunctionBundle, ell: usize, cutoff: CutoffProfile) -> Result<Self> {
        if ell < 1 {
            return Err(Error::InvalidParameter(format!(
                "extension order ell must be >= 1, got {ell}"
            )));
        }
        if bundle.max_order() < ell + 1 {
            return Err(Error::InsufficientOrder {
                ell,
                needed: ell + 1,
                available: bundle.max_order(),
            });
        }
        Ok(Self {
            bundle,
            ell,
            cutoff,
        })
    }

    /// Order-2 extension with the default cutoff.
    pub fn standard(bundle: SmoothFunctionBundle) -> Result<Self> {
        Self::new(bundle, DEFAULT_ELL, CutoffProfile::default())
    }

    pub fn bundle(&self) -> &SmoothFunctionBundle {
        &self.bundle
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn cutoff(&self) -> &CutoffProfile {
        &self.cutoff
    }

    pub fn with_ell(&self, ell: usize) -> Result<Self> {
        Self::new(self.bundle.clone(), ell, self.cutoff.clone())
    }

    pub fn with_cutoff(&self, cutoff: CutoffProfile) -> Result<Self> {
        Self::new(self.bundle.clone(), self.ell, cutoff)
    }

    /// sigma(x, y) = tau(y / <x>).
    pub fn sigma(&self, x: f64, y: f64) -> f64 {
        self.cutoff.tau(y / bracket(x))
    }

    /// (d sigma / dx, d sigma / dy) by the chain rule.
    pub fn sigma_partials(&self, x: f64, y: f64) -> (f64, f64) {
        let br = bracket(x);
        let s = y / br;
        let tp = self.cutoff.tau_prime(s);
        let sigma_x = -tp * s * x / (br * br);
        let sigma_y = tp / br;
        (sigma_x, sigma_y)
    }

    /// Taylor part sum_{k=0}^{ell} f^(k)(x) (iy)^k / k!.
    fn taylor_sum(&self, x: f64, y: f64) -> Complex64 {
        let iy = Complex64::new(0.0, y);
        let mut power = Complex64::new(1.0, 0.0);
        let mut factorial = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=self.ell {
            if k > 0 {
                power *= iy;
                factorial *= k as f64;
            }
            acc += self.bundle.eval(k, x) * power / factorial;
        }
        acc
    }

    /// f~(z) = sigma(x,y) * Taylor part.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let (x, y) = (z.re, z.im);
        let sigma = self.sigma(x, y);
        if sigma == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        sigma * self.taylor_sum(x, y)
    }

    /// d f~ / d zbar = (sigma_x + i sigma_y)/2 * Taylor part
    ///               + sigma/2 * f^(ell+1)(x) (iy)^ell / ell!.
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        let (x, y) = (z.re, z.im);
        let sigma = self.sigma(x, y);
        let (sigma_x, sigma_y) = self.sigma_partials(x, y);
        let grad = Complex64::new(sigma_x, sigma_y);
        let mut acc = Complex64::new(0.0, 0.0);
        if grad.norm_sqr() > 0.0 {
            acc += 0.5 * grad * self.taylor_sum(x, y);
        }
        if sigma != 0.0 {
            let iy = Complex64::new(0.0, y);
            let mut power = Complex64::new(1.0, 0.0);
            let mut factorial = 1.0;
            for k in 1..=self.ell {
                power *= iy;
                factorial *= k as f64;
            }
            acc += 0.5 * sigma * self.bundle.eval(self.ell + 1, x) * power / factorial;
        }
        acc
    }

    /// sup over the support of |f^(ell+1)| / (2 ell!), which bounds
    /// |dbar f~| / |y|^ell inside the sigma plateau (|y| <= <x>). Used for
    /// the excluded-strip estimates.
    pub fn axis_ratio_bound(&self, x_lo: f64, x_hi: f64) -> f64 {
        let n = 4001;
        let mut sup: f64 = 0.0;
        for i in 0..n {
            let x = x_lo + (x_hi - x_lo) * i as f64 / (n - 1) as f64;
            sup = sup.max(self.bundle.eval(self.ell + 1, x).norm());
        }
        let mut fact = 1.0;
        for k in 2..=self.ell {
            fact *= k as f64;
        }
        sup / (2.0 * fact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_cutoff_plateau_and_support() {
        let tau = CutoffProfile::default();
        for s in [-1.0, -0.5, 0.0, 0.3, 1.0] {
            assert_eq!(tau.tau(s), 1.0);
        }
        for s in [-2.5, -2.0, 2.0, 3.0] {
            assert_eq!(tau.tau(s), 0.0);
        }
        // symmetric midpoint: h(0.5)/(h(0.5)+h(0.5)) = 1/2
        assert_abs_diff_eq!(tau.tau(1.5), 0.5, epsilon = 1e-15);
        let v = tau.tau(1.2);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn cutoff_derivative_matches_finite_differences() {
        for tau in [CutoffProfile::bump_quotient(), CutoffProfile::smoothstep()] {
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for i in 0..=600 {
                let s = -3.0 + 6.0 * i as f64 / 600.0;
                let fd = (tau.tau(s + h) - tau.tau(s - h)) / (2.0 * h);
                worst = worst.max((fd - tau.tau_prime(s)).abs());
            }
            assert!(worst < 1e-6, "cutoff {} derivative off by {worst}", tau.name());
        }
    }

    #[test]
    fn sigma_plateau_and_vanishing() {
        let ext = AlmostAnalyticExtension::standard(SmoothFunctionBundle::bump(0.0, 1.0)).unwrap();
        // |y| <= <x> -> 1
        assert_eq!(ext.sigma(0.0, 0.5), 1.0);
        assert_eq!(ext.sigma(3.0, 3.0), 1.0);
        // |y| >= 2<x> -> 0
        assert_eq!(ext.sigma(0.0, 2.0), 0.0);
        assert_eq!(ext.sigma(1.0, -4.0), 0.0);
        // strictly between at (0, 1.5)
        assert_abs_diff_eq!(ext.sigma(0.0, 1.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn extension_restricts_to_function_on_axis() {
        let bundle = SmoothFunctionBundle::bump(0.0, 1.0);
        let ext = AlmostAnalyticExtension::standard(bundle.clone()).unwrap();
        for x in [-0.9, -0.3, 0.0, 0.4, 0.8] {
            let v = ext.eval(Complex64::new(x, 0.0));
            assert_abs_diff_eq!((v - bundle.value(x)).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn extension_vanishes_off_cutoff_support() {
        let ext = AlmostAnalyticExtension::standard(SmoothFunctionBundle::bump(0.0, 1.0)).unwrap();
        assert_eq!(ext.eval(Complex64::new(0.5, 4.0)).norm(), 0.0);
        assert_eq!(ext.eval(Complex64::new(1.5, 0.2)).norm(), 0.0);
    }

    #[test]
    fn extension_three_term_sum_hand_check() {
        // bump derivatives coded independently: f' = -2u/(1-u^2)^2 f etc.
        let bundle = SmoothFunctionBundle::bump(0.0, 1.0);
        let ext = AlmostAnalyticExtension::standard(bundle).unwrap();
        let (x, y) = (0.5_f64, 0.4);
        let t: f64 = 1.0 - x * x;
        let f = (1.0 - 1.0 / t).exp();
        let f1 = -2.0 * x / (t * t) * f;
        let f2 = ((4.0 * x * x / t.powi(4)) + (-2.0 / (t * t)) + (-8.0 * x * x / t.powi(3))) * f;
        let iy = Complex64::new(0.0, y);
        let direct = Complex64::new(f, 0.0) + f1 * iy + 0.5 * f2 * iy * iy;
        let sigma = ext.sigma(x, y);
        let got = ext.eval(Complex64::new(x, y));
        assert_abs_diff_eq!((got - sigma * direct).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dbar_vanishes_exactly_on_axis() {
        let ext = AlmostAnalyticExtension::standard(SmoothFunctionBundle::bump(0.0, 2.0)).unwrap();
        for x in [-1.9, -0.5, 0.0, 1.2, 3.0] {
            assert_eq!(ext.dbar(Complex64::new(x, 0.0)).norm(), 0.0);
        }
    }

    #[test]
    fn dbar_decays_to_order_ell() {
        for ell in [2usize, 3, 4] {
            let ext = AlmostAnalyticExtension::new(
                SmoothFunctionBundle::bump(0.0, 1.0),
                ell,
                CutoffProfile::default(),
            )
            .unwrap();
            for x in [-0.7, 0.0, 0.5] {
                let ratio_at = |y: f64| ext.dbar(Complex64::new(x, y)).norm() / y.powi(ell as i32);
                let top = ratio_at(0.5);
                for j in 2..12 {
                    let y = 0.5f64.powi(j);
                    assert!(
                        ratio_at(y) <= 10.0 * top + 1e-12,
                        "ratio grew at x={x}, y={y}, ell={ell}"
                    );
                }
            }
        }
    }

    #[test]
    fn dbar_matches_wirtinger_finite_differences() {
        let exts = [
            AlmostAnalyticExtension::standard(SmoothFunctionBundle::bump(0.3, 1.5)).unwrap(),
            AlmostAnalyticExtension::new(
                SmoothFunctionBundle::symbol(-2.0),
                2,
                CutoffProfile::smoothstep(),
            )
            .unwrap(),
        ];
        let h = 1e-4;
        for ext in &exts {
            for &(x, y) in &[
                (0.2, 0.3),
                (-0.5, 0.8),
                (1.0, 1.4),
                (0.0, -0.6),
                (0.9, 2.1),
            ] {
                let fx = (ext.eval(Complex64::new(x + h, y)) - ext.eval(Complex64::new(x - h, y)))
                    / (2.0 * h);
                let fy = (ext.eval(Complex64::new(x, y + h)) - ext.eval(Complex64::new(x, y - h)))
                    / (2.0 * h);
                let wirtinger = 0.5 * (fx + Complex64::new(0.0, 1.0) * fy);
                let got = ext.dbar(Complex64::new(x, y));
                assert!(
                    (got - wirtinger).norm() < 1e-5,
                    "dbar mismatch at ({x},{y}): {got} vs {wirtinger}"
                );
            }
        }
    }

    #[test]
    fn compact_support_rectangle() {
        let bundle = SmoothFunctionBundle::bump(0.5, 1.0);
        let ext = AlmostAnalyticExtension::standard(bundle).unwrap();
        let c: f64 = 1.5;
        let ymax = 2.0 * bracket(c);
        for &(x, y) in &[(1.6, 0.1), (-0.6, 1.0), (0.5, ymax + 0.1), (2.0, -3.0)] {
            assert_eq!(ext.eval(Complex64::new(x, y)).norm(), 0.0, "at ({x},{y})");
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let bundle = SmoothFunctionBundle::bump(0.0, 1.0);
        let h = 1e-5;
        for x in [-0.8, -0.2, 0.0, 0.4, 0.7] {
            let fd1 = (bundle.value(x + h) - bundle.value(x - h)).re / (2.0 * h);
            assert_abs_diff_eq!(bundle.eval(1, x).re, fd1, epsilon = 1e-7);
            let fd2 =
                (bundle.value(x + h) + bundle.value(x - h) - 2.0 * bundle.value(x)).re / (h * h);
            assert_abs_diff_eq!(bundle.eval(2, x).re, fd2, epsilon = 1e-4);
        }
    }

    #[test]
    fn symbol_derivatives_match_finite_differences() {
        let bundle = SmoothFunctionBundle::symbol(-2.0);
        let h = 1e-5;
        for x in [-3.0, -0.5, 0.0, 1.5, 10.0] {
            let fd1 = (bundle.value(x + h) - bundle.value(x - h)).re / (2.0 * h);
            assert_abs_diff_eq!(bundle.eval(1, x).re, fd1, epsilon = 1e-8);
        }
    }

    #[test]
    fn symbol_class_constants_finite() {
        // |f^(k)(x)| <= C_k <x>^(beta - k) with finite fitted C_k
        let beta = -1.5;
        let bundle = SmoothFunctionBundle::symbol(beta);
        for k in 0..=4 {
            let mut c_k: f64 = 0.0;
            for i in 0..400 {
                let x = -40.0 + 80.0 * i as f64 / 399.0;
                let ratio = bundle.eval(k, x).norm() / bracket(x).powf(beta - k as f64);
                c_k = c_k.max(ratio);
            }
            assert!(c_k.is_finite() && c_k > 0.0);
        }
    }

    #[test]
    fn product_bundle_leibniz() {
        let f = SmoothFunctionBundle::bump(0.0, 2.0);
        let g = SmoothFunctionBundle::bump(0.5, 1.0);
        let fg = SmoothFunctionBundle::product(&f, &g);
        for x in [-0.3, 0.2, 0.9] {
            assert_abs_diff_eq!(
                (fg.value(x) - f.value(x) * g.value(x)).norm(),
                0.0,
                epsilon = 1e-15
            );
            let expect =
                f.eval(1, x) * g.value(x) + f.value(x) * g.eval(1, x);
            assert_abs_diff_eq!((fg.eval(1, x) - expect).norm(), 0.0, epsilon = 1e-15);
        }
        match fg.class() {
            FunctionClass::CompactSupport { lo, hi } => {
                assert_abs_diff_eq!(lo, -0.5, epsilon = 1e-15);
                assert_abs_diff_eq!(hi, 1.5, epsilon = 1e-15);
            }
            _ => panic!("product of compact supports must be compactly supported"),
        }
    }

    #[test]
    fn conj_and_linear_combination() {
        let f = SmoothFunctionBundle::bump(0.0, 1.0);
        let g = SmoothFunctionBundle::bump(0.2, 0.5);
        let combo = SmoothFunctionBundle::linear_combination(vec![
            (Complex64::new(1.0, 0.0), f.clone()),
            (Complex64::new(0.0, 2.0), g.clone()),
        ]);
        let x = 0.3;
        let expect = f.value(x) + Complex64::new(0.0, 2.0) * g.value(x);
        assert_abs_diff_eq!((combo.value(x) - expect).norm(), 0.0, epsilon = 1e-15);
        let cc = combo.conj();
        assert_abs_diff_eq!(
            (cc.value(x) - expect.conj()).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn finite_difference_bundle_flagged() {
        let fd = SmoothFunctionBundle::finite_difference(
            |x| (-x * x).exp(),
            FunctionClass::Symbol { beta: -1.5 },
        );
        assert!(fd.reduced_accuracy());
        assert!(!SmoothFunctionBundle::bump(0.0, 1.0).reduced_accuracy());
        // first derivative is still usable
        let x = 0.4;
        let expect = -2.0 * x * (-x * x as f64).exp();
        assert!((fd.eval(1, x).re - expect).abs() < 1e-4);
    }

    #[test]
    fn extension_requires_enough_orders() {
        let fd = SmoothFunctionBundle::finite_difference(
            |x| x,
            FunctionClass::Symbol { beta: 0.0 },
        );
        // max_order 4 allows ell up to 3
        assert!(AlmostAnalyticExtension::new(fd.clone(), 4, CutoffProfile::default()).is_err());
        assert!(AlmostAnalyticExtension::new(fd, 3, CutoffProfile::default()).is_ok());
    }
}
