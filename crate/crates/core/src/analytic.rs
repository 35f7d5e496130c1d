//! Exact analytic maps of the sphere: rational maps and their conjugates,
//! glued bubble configurations, smooth tangent perturbations, and truncated
//! Laurent forms.
//!
//! A rational map `z -> p(z)/q(z)` is written in the chart of the domain that a
//! grid node lives in. In the South chart `z = 1/w`, and with `d = max(deg p, deg q)`
//! the map becomes `w^d p(1/w) / (w^d q(1/w))`, a ratio of the coefficient-reversed
//! polynomials. The antiholomorphic variant evaluates the same ratio at the
//! conjugated coordinate. Target values with `|f| > 1` are produced through the
//! South target chart, where poles of `f` are regular points.

use crate::error::{HmError, Result};
use crate::geometry::{stereo_to_vec, ChartId, SpherePoint};
use crate::vec3::Vec3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Holomorphic,
    Antiholomorphic,
}

/// Anything that can be sampled at a domain point given in chart coordinates.
pub trait MapSource: Sync {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3>;
}

impl<T: MapSource + ?Sized> MapSource for &T {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        (**self).value(chart, s)
    }
}

impl<T: MapSource + ?Sized> MapSource for Box<T> {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        (**self).value(chart, s)
    }
}

/// A map given as a closure of the domain point.
pub struct FnSource<F>(pub F);

impl<F> MapSource for FnSource<F>
where
    F: Fn(SpherePoint) -> Vec3 + Sync,
{
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        Ok((self.0)(SpherePoint::from_vec(stereo_to_vec(s, chart))).normalized())
    }
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn trim(mut c: Vec<Complex64>) -> Vec<Complex64> {
    while c.len() > 1 && c.last().is_some_and(|a| *a == ZERO) {
        c.pop();
    }
    if c.is_empty() {
        c.push(ZERO);
    }
    c
}

fn poly_degree(c: &[Complex64]) -> Option<usize> {
    c.iter().rposition(|a| *a != ZERO)
}

/// Horner evaluation of the polynomial and its derivative.
#[inline]
fn horner(c: &[Complex64], t: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for a in c.iter().rev() {
        dp = dp * t + p;
        p = p * t + a;
    }
    (p, dp)
}

/// Determinant of a small dense complex matrix by partial-pivot elimination.
fn complex_det(mut m: Vec<Vec<Complex64>>) -> Complex64 {
    let n = m.len();
    let mut det = ONE;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].norm().total_cmp(&m[b][col].norm()))
            .unwrap();
        if m[pivot][col] == ZERO {
            return ZERO;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                let v = m[col][k];
                m[row][k] -= f * v;
            }
        }
    }
    det
}

/// Resultant of two polynomials (ascending coefficients) via the Sylvester matrix,
/// after scaling each to unit max-coefficient.
fn scaled_resultant(p: &[Complex64], q: &[Complex64]) -> Complex64 {
    let (dp, dq) = match (poly_degree(p), poly_degree(q)) {
        (Some(a), Some(b)) => (a, b),
        _ => return ZERO,
    };
    if dp == 0 || dq == 0 {
        return ONE;
    }
    let scale = |c: &[Complex64]| {
        let m = c.iter().map(|a| a.norm()).fold(0.0, f64::max);
        c.iter().map(|a| a / m).collect::<Vec<_>>()
    };
    let p = scale(&p[..=dp]);
    let q = scale(&q[..=dq]);
    let n = dp + dq;
    let mut m = vec![vec![ZERO; n]; n];
    for r in 0..dq {
        for (k, a) in p.iter().rev().enumerate() {
            m[r][r + k] = *a;
        }
    }
    for r in 0..dp {
        for (k, a) in q.iter().rev().enumerate() {
            m[dq + r][r + k] = *a;
        }
    }
    complex_det(m)
}

/// Rational map `p/q` (coefficients in ascending degree), holomorphic or composed
/// with conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMapSpec {
    numerator: Vec<Complex64>,
    denominator: Vec<Complex64>,
    orientation: Orientation,
    reversed: Option<(Vec<Complex64>, Vec<Complex64>)>,
}

impl RationalMapSpec {
    pub fn new(
        numerator: Vec<Complex64>,
        denominator: Vec<Complex64>,
        orientation: Orientation,
    ) -> Result<Self> {
        let numerator = trim(numerator);
        let denominator = trim(denominator);
        if numerator
            .iter()
            .chain(&denominator)
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(HmError::DegenerateSpec("non-finite coefficient".into()));
        }
        let dq = poly_degree(&denominator)
            .ok_or_else(|| HmError::DegenerateSpec("denominator is identically zero".into()))?;
        match poly_degree(&numerator) {
            None if dq > 0 => {
                return Err(HmError::DegenerateSpec(
                    "zero numerator over a non-constant denominator".into(),
                ))
            }
            None => {}
            Some(_) => {
                let res = scaled_resultant(&numerator, &denominator);
                if res.norm() <= 1e-10 {
                    return Err(HmError::DegenerateSpec(format!(
                        "numerator and denominator share a root (|resultant| = {:.3e})",
                        res.norm()
                    )));
                }
            }
        }
        let mut spec = RationalMapSpec {
            numerator,
            denominator,
            orientation,
            reversed: None,
        };
        spec.reversed = Some(spec.reversed_pair());
        Ok(spec)
    }

    pub fn holomorphic(numerator: Vec<Complex64>, denominator: Vec<Complex64>) -> Result<Self> {
        Self::new(numerator, denominator, Orientation::Holomorphic)
    }

    pub fn identity() -> Self {
        Self::holomorphic(vec![ZERO, ONE], vec![ONE]).expect("identity spec is valid")
    }

    /// `z -> z^k` for `k >= 0`.
    pub fn power(k: usize) -> Self {
        let mut num = vec![ZERO; k + 1];
        num[k] = ONE;
        Self::holomorphic(num, vec![ONE]).expect("power spec is valid")
    }

    /// `z -> conj(z)`.
    pub fn conjugation() -> Self {
        Self::new(vec![ZERO, ONE], vec![ONE], Orientation::Antiholomorphic)
            .expect("conjugation spec is valid")
    }

    /// Constant map with chart value `c`.
    pub fn constant(c: Complex64) -> Self {
        Self::holomorphic(vec![c], vec![ONE]).expect("constant spec is valid")
    }

    /// `z -> (z - a) / (1 + conj(a) z)`, a degree-one conformal automorphism for `|a| < 1`.
    pub fn mobius(a: Complex64) -> Result<Self> {
        Self::holomorphic(vec![-a, ONE], vec![ONE, a.conj()])
    }

    /// Substitutes `t -> (t - a) / (1 + conj(a) t)` for the polynomial variable.
    pub fn precompose_mobius(&self, a: Complex64) -> Result<Self> {
        let d = self.degree();
        let lin_top = [-a, ONE];
        let lin_bot = [ONE, a.conj()];
        let sub = |c: &[Complex64]| {
            let mut out = vec![ZERO; d + 1];
            for (k, ck) in c.iter().enumerate() {
                let mut term = vec![*ck];
                for _ in 0..k {
                    term = poly_mul(&term, &lin_top);
                }
                for _ in k..d {
                    term = poly_mul(&term, &lin_bot);
                }
                for (o, t) in out.iter_mut().zip(&term) {
                    *o += t;
                }
            }
            out
        };
        Self::new(sub(&self.numerator), sub(&self.denominator), self.orientation)
    }

    pub fn numerator(&self) -> &[Complex64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[Complex64] {
        &self.denominator
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// `max(deg p, deg q)`.
    pub fn degree(&self) -> usize {
        poly_degree(&self.numerator)
            .unwrap_or(0)
            .max(poly_degree(&self.denominator).unwrap_or(0))
    }

    /// Topological degree: `+degree` for holomorphic maps, `-degree` for antiholomorphic.
    pub fn signed_degree(&self) -> i64 {
        let d = self.degree() as i64;
        match self.orientation {
            Orientation::Holomorphic => d,
            Orientation::Antiholomorphic => -d,
        }
    }

    fn reversed_pair(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let d = self.degree();
        let rev = |c: &[Complex64]| {
            let mut out = vec![ZERO; d + 1];
            for (k, a) in c.iter().enumerate().take(d + 1) {
                out[d - k] = *a;
            }
            out
        };
        (rev(&self.numerator), rev(&self.denominator))
    }

    fn local_polys(&self, chart: ChartId) -> (&[Complex64], &[Complex64]) {
        match chart {
            ChartId::North => (&self.numerator, &self.denominator),
            ChartId::South => {
                let (a, b) = self
                    .reversed
                    .as_ref()
                    .expect("reversed coefficients are built at construction");
                (a, b)
            }
        }
    }

    /// Value and first derivatives of the map in the domain chart `chart` at
    /// coordinate `s = x + iy`.
    pub fn eval_local(&self, chart: ChartId, s: Complex64) -> Result<MapJet> {
        let (a_poly, b_poly) = self.local_polys(chart);
        let (t, ty) = match self.orientation {
            Orientation::Holomorphic => (s, Complex64::new(0.0, 1.0)),
            Orientation::Antiholomorphic => (s.conj(), Complex64::new(0.0, -1.0)),
        };
        let (a, da) = horner(a_poly, t);
        let (b, db) = horner(b_poly, t);
        let an = a.norm();
        let bn = b.norm();
        if !(an > 0.0 || bn > 0.0) || !(an.is_finite() && bn.is_finite()) {
            return Err(HmError::DegenerateSpec(format!(
                "numerator and denominator both vanish at {s}"
            )));
        }
        let jet = if an <= bn {
            let zeta = a / b;
            let dzeta = (da * b - a * db) / (b * b);
            target_jet(zeta, dzeta, dzeta * ty, ChartId::North)
        } else {
            let omega = b / a;
            let domega = (db * a - b * da) / (a * a);
            target_jet(omega, domega, domega * ty, ChartId::South)
        };
        Ok(jet)
    }

    /// Value at infinity of the domain.
    pub fn value_at_infinity(&self) -> Result<Vec3> {
        Ok(self.eval_local(ChartId::South, ZERO)?.u)
    }
}

impl MapSource for RationalMapSpec {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        Ok(self.eval_local(chart, s)?.u)
    }
}

/// Map value with its coordinate derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapJet {
    pub u: Vec3,
    pub u_x: Vec3,
    pub u_y: Vec3,
}

/// Differential of the North chart at `zeta` applied to the complex tangent `v`.
#[inline]
fn north_chart_differential(zeta: Complex64, v: Complex64) -> Vec3 {
    let (a, b) = (zeta.re, zeta.im);
    let d = 1.0 + a * a + b * b;
    let d2 = d * d;
    let da = Vec3::new(2.0 / d - 4.0 * a * a / d2, -4.0 * a * b / d2, -4.0 * a / d2);
    let db = Vec3::new(-4.0 * a * b / d2, 2.0 / d - 4.0 * b * b / d2, -4.0 * b / d2);
    da * v.re + db * v.im
}

fn target_jet(c: Complex64, cx: Complex64, cy: Complex64, target: ChartId) -> MapJet {
    let u = stereo_to_vec(c, target);
    let flip = |v: Vec3| match target {
        ChartId::North => v,
        ChartId::South => Vec3::new(v.x, -v.y, -v.z),
    };
    MapJet {
        u,
        u_x: flip(north_chart_differential(c, cx)),
        u_y: flip(north_chart_differential(c, cy)),
    }
}

/// Evaluates a rational map at a North-chart coordinate.
pub fn eval_map(spec: &RationalMapSpec, z: Complex64) -> Result<SpherePoint> {
    Ok(SpherePoint::from_vec(spec.eval_local(ChartId::North, z)?.u))
}

/// Exact value and coordinate derivatives at a North-chart coordinate.
pub fn eval_derivatives(spec: &RationalMapSpec, z: Complex64) -> Result<MapJet> {
    spec.eval_local(ChartId::North, z)
}

/// One bubble glued into a body map.
#[derive(Debug, Clone, PartialEq)]
pub struct Bubble {
    /// Attach point as a North-chart coordinate of the domain.
    pub attach: Complex64,
    pub scale: f64,
    pub map: RationalMapSpec,
}

/// A body map with bubbles glued in at small scales.
///
/// Inside `|z - p| <= sqrt(scale)` the map is `bubble((z - p)/scale)`, outside
/// `|z - p| >= w sqrt(scale)` it is the body, and across the neck the two values
/// are joined along the sphere geodesic with a quintic smoothstep weight
/// `s^3 (10 - 15 s + 6 s^2)`, `s = (|z - p| - sqrt(scale)) / ((w - 1) sqrt(scale))`.
/// Gluing is one admissible construction of multi-scale test data, nothing more.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleSpec {
    pub body: RationalMapSpec,
    pub bubbles: Vec<Bubble>,
    pub cutoff_width: f64,
}

/// Chordal tolerance for matching bubble values at infinity with the body.
pub const GLUING_TOLERANCE: f64 = 1e-8;

impl BubbleSpec {
    pub fn new(body: RationalMapSpec, bubbles: Vec<Bubble>, cutoff_width: f64) -> Result<Self> {
        let spec = BubbleSpec {
            body,
            bubbles,
            cutoff_width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_width > 1.0 && self.cutoff_width <= 4.0) {
            return Err(HmError::InvalidSpec(format!(
                "cutoff_width {} must lie in (1, 4]",
                self.cutoff_width
            )));
        }
        let max_scale = self.bubbles.iter().map(|b| b.scale).fold(0.0, f64::max);
        for (k, b) in self.bubbles.iter().enumerate() {
            if !(b.scale > 0.0 && b.scale <= 0.25) {
                return Err(HmError::InvalidSpec(format!(
                    "bubble {k}: scale {} must lie in (0, 0.25]",
                    b.scale
                )));
            }
            if !(b.attach.re.is_finite() && b.attach.im.is_finite()) {
                return Err(HmError::InvalidSpec(format!("bubble {k}: attach point not finite")));
            }
            let body_value = self.body.value(ChartId::North, b.attach)?;
            let bubble_value = b.map.value_at_infinity()?;
            let gap = (body_value - bubble_value).norm();
            if gap > GLUING_TOLERANCE {
                return Err(HmError::InvalidSpec(format!(
                    "bubble {k}: value at infinity differs from the body value at the attach point by {gap:.3e}"
                )));
            }
            for (l, o) in self.bubbles.iter().enumerate().skip(k + 1) {
                if (b.attach - o.attach).norm() < 4.0 * max_scale {
                    return Err(HmError::InvalidSpec(format!(
                        "bubbles {k} and {l} are closer than 4 x max scale"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Signed degree of the glued map: body plus bubbles.
    pub fn signed_degree(&self) -> i64 {
        self.body.signed_degree() + self.bubbles.iter().map(|b| b.map.signed_degree()).sum::<i64>()
    }

    fn glue_north(&self, z: Complex64) -> Result<Vec3> {
        for b in &self.bubbles {
            let r = (z - b.attach).norm();
            let r_in = b.scale.sqrt();
            let r_out = self.cutoff_width * r_in;
            if r >= r_out {
                continue;
            }
            let inner = b.map.value(ChartId::North, (z - b.attach) / b.scale)?;
            if r <= r_in {
                return Ok(inner);
            }
            let outer = self.body.value(ChartId::North, z)?;
            let s = (r - r_in) / (r_out - r_in);
            return geodesic_blend(inner, outer, smoothstep5(s));
        }
        self.body.value(ChartId::North, z)
    }
}

/// Glued map evaluated at a North-chart coordinate.
pub fn glue(spec: &BubbleSpec, z: Complex64) -> Result<SpherePoint> {
    Ok(SpherePoint::from_vec(spec.glue_north(z)?))
}

impl MapSource for BubbleSpec {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        match chart {
            ChartId::North => self.glue_north(s),
            ChartId::South => {
                if s == ZERO {
                    self.body.value(ChartId::South, ZERO)
                } else {
                    self.glue_north(s.inv())
                }
            }
        }
    }
}

/// `s^3 (10 - 15 s + 6 s^2)` clamped to `[0, 1]`; C^2 with vanishing first and second
/// derivatives at both ends.
pub fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Derivative of [`smoothstep5`].
pub fn smoothstep5_slope(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

/// Point at fraction `t` along the geodesic from `a` to `b`.
fn geodesic_blend(a: Vec3, b: Vec3, t: f64) -> Result<Vec3> {
    let theta = a.cross(b).norm().atan2(a.dot(b));
    if theta > std::f64::consts::FRAC_PI_2 {
        return Err(HmError::GluingMismatch(theta));
    }
    if theta < 1e-12 {
        return Ok((a * (1.0 - t) + b * t).normalized());
    }
    let s = theta.sin();
    Ok((a * (((1.0 - t) * theta).sin() / s) + b * ((t * theta).sin() / s)).normalized())
}

/// Smooth tangent perturbation of a base map: `normalize(u + a P_u V)` where `V` is a
/// random cubic polynomial vector field of the domain point, scaled to unit sup norm.
#[derive(Debug, Clone)]
pub struct TangentPerturbation {
    coeffs: Vec<[f64; 3]>,
    norm: f64,
}

/// Monomials `x^a y^b z^c` with `a + b + c <= 3`.
fn monomials(p: Vec3) -> [f64; 20] {
    let (x, y, z) = (p.x, p.y, p.z);
    [
        1.0,
        x,
        y,
        z,
        x * x,
        y * y,
        z * z,
        x * y,
        y * z,
        z * x,
        x * x * x,
        y * y * y,
        z * z * z,
        x * x * y,
        x * x * z,
        y * y * x,
        y * y * z,
        z * z * x,
        z * z * y,
        x * y * z,
    ]
}

impl TangentPerturbation {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let coeffs: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect();
        let mut pert = TangentPerturbation { coeffs, norm: 1.0 };
        // sup norm over a Fibonacci lattice of the sphere
        let m = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut sup: f64 = 0.0;
        for k in 0..m {
            let zc = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
            let rc = (1.0 - zc * zc).sqrt();
            let phi = golden * k as f64;
            sup = sup.max(pert.raw(Vec3::new(rc * phi.cos(), rc * phi.sin(), zc)).norm());
        }
        pert.norm = if sup > 0.0 { sup } else { 1.0 };
        pert
    }

    fn raw(&self, p: Vec3) -> Vec3 {
        let m = monomials(p);
        let mut v = Vec3::ZERO;
        for (c, w) in self.coeffs.iter().zip(m.iter()) {
            v += Vec3::new(c[0], c[1], c[2]) * *w;
        }
        v
    }

    /// The ambient vector field at domain point `p`, unit sup norm.
    pub fn field(&self, p: Vec3) -> Vec3 {
        self.raw(p) * (1.0 / self.norm)
    }

    /// Tangent direction at the target value `u` over domain point `p`.
    pub fn direction(&self, p: Vec3, u: Vec3) -> Vec3 {
        self.field(p).tangent_part(u)
    }
}

/// Base map moved along a tangent perturbation by `amplitude`, then projected back.
#[derive(Debug, Clone)]
pub struct PerturbedMap<S> {
    pub base: S,
    pub perturbation: TangentPerturbation,
    pub amplitude: f64,
}

impl<S: MapSource> MapSource for PerturbedMap<S> {
    fn value(&self, chart: ChartId, s: Complex64) -> Result<Vec3> {
        let u = self.base.value(chart, s)?;
        let p = stereo_to_vec(s, chart);
        Ok((u + self.perturbation.direction(p, u) * self.amplitude).normalized())
    }
}

/// Truncated Laurent series `sum_{n = n_min}^{n_max} a_n z^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentForm {
    n_min: i32,
    coeffs: Vec<Complex64>,
}

impl LaurentForm {
    pub fn new(n_min: i32, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.iter().all(|a| *a == ZERO) {
            return Err(HmError::InvalidParams(
                "Laurent form needs at least one nonzero coefficient".into(),
            ));
        }
        Ok(LaurentForm { n_min, coeffs })
    }

    /// Single term `a z^n`.
    pub fn monomial(n: i32, a: Complex64) -> Result<Self> {
        Self::new(n, vec![a])
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_min + self.coeffs.len() as i32 - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Random form with `-max_abs_n <= n_min <= n_max <= max_abs_n` and standard
    /// complex Gaussian coefficients (real and imaginary parts of variance 1/2).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_abs_n: i32) -> Self {
        loop {
            let a = rng.gen_range(-max_abs_n..=max_abs_n);
            let b = rng.gen_range(-max_abs_n..=max_abs_n);
            let (lo, hi) = (a.min(b), a.max(b));
            let coeffs: Vec<Complex64> = (lo..=hi)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            if let Ok(f) = LaurentForm::new(lo, coeffs) {
                return f;
            }
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for (k, a) in self.coeffs.iter().enumerate() {
            acc += a * z.powi(self.n_min + k as i32);
        }
        acc
    }
}

/// `F(r) = sqrt(sum |a_n|^2 r^{2n})`, the root-mean-square of the form on `|z| = r`.
pub fn laurent_f(form: &LaurentForm, r: f64) -> f64 {
    let mut acc = 0.0;
    for (k, a) in form.coeffs.iter().enumerate() {
        let n = form.n_min + k as i32;
        acc += a.norm_sqr() * r.powi(2 * n);
    }
    acc.sqrt()
}
