//! Inequality-side quantities: lattice distance, bubble scales, annulus profiles,
//! the Laurent three-annulus oracle and the exponent and rate fits.

use crate::analytic::{laurent_f, LaurentForm};
use crate::energetics::{circle_average, Density, DensityField};
use crate::error::{HmError, Result};
use crate::field::GridLayout;
use crate::flow::FlowTrace;
use crate::geometry::{conformal_factor, ChartId, SpherePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// `(n, |E - 4 pi n|)` with `n` the nearest lattice index, ties toward lower `n`.
pub fn dist_to_4pi_lattice(e: f64) -> (i64, f64) {
    let n = (e / (4.0 * PI) - 0.5).ceil();
    (n as i64, (e - 4.0 * PI * n).abs())
}

/// Geometric ratio of the outer-scale scan.
pub const SCALE_GRID_RATIO: f64 = 1.090_507_732_665_257_7; // 2^(1/8)

/// Sorted node energies by stereographic distance from a center, with prefix sums.
/// An annulus energy is two binary searches.
#[derive(Debug, Clone)]
pub struct RadialEnergyTable {
    center: SpherePoint,
    radii: Vec<f64>,
    prefix: Vec<f64>,
    h_local: f64,
}

impl RadialEnergyTable {
    pub fn new(dens: &DensityField, center: SpherePoint) -> RadialEnergyTable {
        let layout = dens.layout();
        let n = layout.n();
        let h = layout.spacing();
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for chart in [ChartId::North, ChartId::South] {
            let e = dens.values(Density::Total, chart);
            for j in 0..n {
                for i in 0..n {
                    let idx = j * n + i;
                    let w = layout.quad_weight(idx);
                    if w == 0.0 || e[idx] == 0.0 {
                        continue;
                    }
                    let p = SpherePoint::from_vec(layout.domain_point(chart, i, j));
                    pts.push((center.stereo_radius_to(p), w * e[idx] * layout.sigma_sq(idx) * h * h));
                }
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut prefix = Vec::with_capacity(pts.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for (_, w) in &pts {
            acc += w;
            prefix.push(acc);
        }
        let (_, zc) = GridLayout::owning_chart(center);
        RadialEnergyTable {
            center,
            radii: pts.into_iter().map(|p| p.0).collect(),
            prefix,
            h_local: 0.5 * h * conformal_factor(zc),
        }
    }

    pub fn center(&self) -> SpherePoint {
        self.center
    }

    /// Grid spacing at the center, in stereographic distance.
    pub fn h_local(&self) -> f64 {
        self.h_local
    }

    /// Energy of the closed annulus `lo <= r <= hi`.
    pub fn annulus(&self, lo: f64, hi: f64) -> f64 {
        let a = self.radii.partition_point(|r| *r < lo);
        let b = self.radii.partition_point(|r| *r <= hi);
        if b <= a {
            0.0
        } else {
            self.prefix[b] - self.prefix[a]
        }
    }

    /// `E(U^rho_{rho/2})`.
    pub fn half_annulus(&self, rho: f64) -> f64 {
        self.annulus(0.5 * rho, rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDetection {
    pub center: SpherePoint,
    pub epsilon: f64,
    pub r_max: f64,
    pub lambda: f64,
    /// Set when a nonzero `lambda` is below eight local grid spacings.
    pub resolution_floor: bool,
}

/// Largest scan radius `rho <= r_max` whose half-annulus energy reaches `epsilon`, refined
/// by bisection to 5% relative width; 0 when no radius down to `4 h` qualifies.
pub fn outer_energy_scale(
    dens: &DensityField,
    center: SpherePoint,
    epsilon: f64,
    r_max: f64,
) -> Result<ScaleDetection> {
    let table = RadialEnergyTable::new(dens, center);
    outer_energy_scale_from(&table, epsilon, r_max)
}

pub fn outer_energy_scale_from(
    table: &RadialEnergyTable,
    epsilon: f64,
    r_max: f64,
) -> Result<ScaleDetection> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(HmError::InvalidParams(format!("epsilon = {epsilon} must be > 0")));
    }
    if !(r_max.is_finite() && r_max > 0.0 && r_max <= 1.0) {
        return Err(HmError::InvalidParams(format!("R = {r_max} must lie in (0, 1]")));
    }
    let floor = 4.0 * table.h_local();
    let mut lambda = 0.0;
    let mut prev: Option<f64> = None;
    let mut rho = r_max;
    while rho >= floor {
        if table.half_annulus(rho) >= epsilon {
            lambda = match prev {
                None => rho,
                Some(above) => {
                    let (mut lo, mut hi) = (rho, above);
                    while hi / lo - 1.0 > 0.05 {
                        let mid = (lo * hi).sqrt();
                        if table.half_annulus(mid) >= epsilon {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                }
            };
            break;
        }
        prev = Some(rho);
        rho /= SCALE_GRID_RATIO;
    }
    let resolution_floor = lambda > 0.0 && lambda < 8.0 * table.h_local();
    if resolution_floor {
        log::warn!(
            "outer energy scale {lambda:.4e} at {:?} is below 8 grid spacings",
            table.center()
        );
    }
    Ok(ScaleDetection {
        center: table.center(),
        epsilon,
        r_max,
        lambda,
        resolution_floor,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub epsilon: f64,
    /// `R` passed to the outer-scale scan.
    pub r_max: f64,
    /// Candidates need `e > epsilon / area(D_r)` with this stereographic `r`.
    pub candidate_radius: f64,
    /// Later candidates within this multiple of a detected scale are dropped.
    pub suppression: f64,
    pub max_detections: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            epsilon: 3.95,
            r_max: 0.5,
            candidate_radius: 0.25,
            suppression: 4.0,
            max_detections: 16,
        }
    }
}

/// Greedy single-generation bubble detection over local density maxima.
pub fn detect_bubbles(dens: &DensityField, opts: &DetectOptions) -> Result<Vec<ScaleDetection>> {
    let layout = dens.layout();
    let n = layout.n();
    let threshold = opts.epsilon / crate::geometry::disk_area(opts.candidate_radius);
    let mut cands: Vec<(f64, SpherePoint)> = Vec::new();
    for chart in [ChartId::North, ChartId::South] {
        let e = dens.values(Density::Total, chart);
        for j in 2..n - 2 {
            for i in 2..n - 2 {
                let idx = j * n + i;
                let v = e[idx];
                if !layout.owned(chart, idx) || v <= threshold {
                    continue;
                }
                let is_max = [n - 1, n, n + 1, 1]
                    .iter()
                    .all(|&d| v >= e[idx + d] && v > e[idx - d]);
                if is_max {
                    cands.push((v, SpherePoint::from_vec(layout.domain_point(chart, i, j))));
                }
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut found: Vec<ScaleDetection> = Vec::new();
    for (_, c) in cands {
        if found.len() >= opts.max_detections {
            break;
        }
        let near = found
            .iter()
            .any(|d| d.center.stereo_radius_to(c) < opts.suppression * d.lambda);
        if near {
            continue;
        }
        let det = outer_energy_scale(dens, c, opts.epsilon, opts.r_max)?;
        if det.lambda > 0.0 {
            found.push(det);
        }
    }
    Ok(found)
}

/// Weight applied to `f(r)` by [`annulus_sup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `r^{-n}` with the profile's `n`.
    Power,
    /// `(r/rho)^m`
    Inner { rho: f64, m: i32 },
    /// `(R/r)^n`
    Outer { r_outer: f64, n: i32 },
}

impl WeightMode {
    fn weight(self, r: f64, n: i32) -> f64 {
        match self {
            WeightMode::Power => r.powi(-n),
            WeightMode::Inner { rho, m } => (r / rho).powi(m),
            WeightMode::Outer { r_outer, n } => (r_outer / r).powi(n),
        }
    }
}

/// Circle profile `f(r)` on a geometric radius grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusProfile {
    pub center: SpherePoint,
    pub n: i32,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `delta / xi`, 0 for exact profiles.
    pub floor: f64,
}

pub const PROFILE_RATIO: f64 = SCALE_GRID_RATIO;

/// Geometric grid from `lo` up to at least `hi` with the given ratio.
pub fn geometric_radii(lo: f64, hi: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && ratio > 1.0) {
        return Err(HmError::InvalidParams(format!(
            "radius grid needs 0 < lo < hi and ratio > 1, got {lo}, {hi}, {ratio}"
        )));
    }
    let steps = ((hi / lo).ln() / ratio.ln()).ceil() as usize;
    Ok((0..=steps).map(|k| lo * ratio.powi(k as i32)).collect())
}

impl AnnulusProfile {
    /// `f(r) = max(sqrt(circle mean of e_d), delta/xi)`.
    pub fn from_density(
        dens: &DensityField,
        center: SpherePoint,
        n: i32,
        radii: Vec<f64>,
        delta: f64,
        xi: f64,
    ) -> Result<AnnulusProfile> {
        if !(xi > 0.0 && delta >= 0.0) {
            return Err(HmError::InvalidParams("profile floor needs xi > 0, delta >= 0".into()));
        }
        check_increasing(&radii)?;
        let floor = delta / xi;
        let values = radii
            .iter()
            .map(|&r| Ok(circle_average(dens, center, r, Density::Holo)?.max(0.0).sqrt().max(floor)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(AnnulusProfile {
            center,
            n,
            radii,
            values,
            floor,
        })
    }

    /// Exact profile `F(r)` of a holomorphic 1-form `g dz` about the origin.
    pub fn from_laurent(form: &LaurentForm, n: i32, radii: Vec<f64>) -> Result<AnnulusProfile> {
        check_increasing(&radii)?;
        let values = radii.iter().map(|&r| laurent_f(form, r)).collect();
        Ok(AnnulusProfile {
            center: SpherePoint::NORTH_POLE,
            n,
            radii,
            values,
            floor: 0.0,
        })
    }
}

fn check_increasing(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HmError::InvalidParams(
            "profile radii must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `max weight(r) f(r)` over profile radii in `[r_lo, r_hi]`.
pub fn annulus_sup(profile: &AnnulusProfile, r_lo: f64, r_hi: f64, mode: WeightMode) -> Result<f64> {
    let first = profile.radii[0];
    let last = profile.radii[profile.radii.len() - 1];
    let slack = 1e-12;
    if !(r_lo <= r_hi) || r_lo < first * (1.0 - slack) || r_hi > last * (1.0 + slack) {
        return Err(HmError::RangeError(format!(
            "range [{r_lo}, {r_hi}] is not inside the profile range [{first}, {last}]"
        )));
    }
    let mut best: Option<f64> = None;
    for (&r, &f) in profile.radii.iter().zip(&profile.values) {
        if r >= r_lo * (1.0 - slack) && r <= r_hi * (1.0 + slack) {
            let v = mode.weight(r, profile.n) * f;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.ok_or_else(|| HmError::RangeError(format!("no profile radius in [{r_lo}, {r_hi}]")))
}

/// `sup_{lo <= r <= hi} r^{-n} F(r)`. Since `log F` is convex in `log r`, so is the
/// weighted log, and the sup sits at an endpoint.
pub fn band_sup(form: &LaurentForm, n: i32, lo: f64, hi: f64) -> f64 {
    let w = |r: f64| r.powi(-n) * laurent_f(form, r);
    w(lo).max(w(hi))
}

/// `S(1), S(2), S(3)` on the bands `[sigma^{i-2} rho, sigma^{i-1} rho]`.
pub fn band_sups(form: &LaurentForm, n: i32, sigma: f64, rho: f64) -> [f64; 3] {
    let edge = |k: i32| sigma.powi(k) * rho;
    [
        band_sup(form, n, edge(-1), edge(0)),
        band_sup(form, n, edge(0), edge(1)),
        band_sup(form, n, edge(1), edge(2)),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeAnnulusReport {
    pub s: [f64; 3],
    pub a_hyp: bool,
    pub a_concl: bool,
    pub b_hyp: bool,
    pub b_concl: bool,
    pub violated: bool,
}

impl ThreeAnnulusReport {
    fn new(s: [f64; 3], a_hyp: bool, a_concl: bool, b_hyp: bool, b_concl: bool) -> Self {
        ThreeAnnulusReport {
            s,
            a_hyp,
            a_concl,
            b_hyp,
            b_concl,
            violated: (a_hyp && !a_concl) || (b_hyp && !b_concl),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 1.0) {
        return Err(HmError::InvalidParams(format!("sigma = {sigma} must be > 1")));
    }
    Ok(())
}

/// Whether `2 sigma^2/(sigma^2 + 1) < sigma^{2 beta}` with `beta` in `(0, 1/2]`.
pub fn beta_admissible(sigma: f64, beta: f64) -> bool {
    beta > 0.0 && beta <= 0.5 && 2.0 * sigma * sigma / (sigma * sigma + 1.0) < sigma.powf(2.0 * beta)
}

/// Implications `S(1) <= sigma^{1-beta} S(2) => S(2) < sigma^beta S(3)` and the mirror.
pub fn three_annulus_check(
    form: &LaurentForm,
    n: i32,
    sigma: f64,
    beta: f64,
    rho: f64,
) -> Result<ThreeAnnulusReport> {
    check_sigma(sigma)?;
    if !beta_admissible(sigma, beta) {
        return Err(HmError::InvalidParams(format!(
            "beta = {beta} needs 0 < beta <= 1/2 and 2 sigma^2/(sigma^2 + 1) < sigma^(2 beta) at sigma = {sigma}"
        )));
    }
    let s = band_sups(form, n, sigma, rho);
    let up = sigma.powf(1.0 - beta);
    let down = sigma.powf(beta);
    Ok(ThreeAnnulusReport::new(
        s,
        s[0] <= up * s[1],
        s[1] < down * s[2],
        s[2] <= up * s[1],
        s[1] < down * s[0],
    ))
}

/// `(sqrt(k), sqrt(sigma^2/k))` with `k = sigma (1 + (sigma - 1)^2/(2 sigma))`.
pub fn strengthened_constants(sigma: f64) -> (f64, f64) {
    let k = sigma * (1.0 + (sigma - 1.0).powi(2) / (2.0 * sigma));
    (k.sqrt(), (sigma * sigma / k).sqrt())
}

/// The sharper implications with constants from [`strengthened_constants`].
pub fn three_annulus_check_strong(
    form: &LaurentForm,
    n: i32,
    sigma: f64,
    rho: f64,
) -> Result<ThreeAnnulusReport> {
    check_sigma(sigma)?;
    let s = band_sups(form, n, sigma, rho);
    let (hyp, concl) = strengthened_constants(sigma);
    Ok(ThreeAnnulusReport::new(
        s,
        s[0] <= hyp * s[1],
        s[1] <= concl * s[2],
        s[2] <= hyp * s[1],
        s[1] <= concl * s[0],
    ))
}

/// Largest midpoint convexity defect of `log F` against `log r` over consecutive triples.
/// Negative values mean strict convexity.
pub fn hadamard_convexity_check(form: &LaurentForm, radii: &[f64]) -> Result<f64> {
    if radii.len() < 3 {
        return Err(HmError::InvalidParams("convexity check needs at least 3 radii".into()));
    }
    check_increasing(radii)?;
    let pts: Vec<(f64, f64)> = radii.iter().map(|&r| (r.ln(), laurent_f(form, r).ln())).collect();
    let mut worst = f64::NEG_INFINITY;
    for w in pts.windows(3) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let (x2, y2) = w[2];
        let chord = y0 + (y2 - y0) * (x1 - x0) / (x2 - x0);
        worst = worst.max(y1 - chord);
    }
    Ok(worst)
}

/// Summary of a seeded random Laurent sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentSweep {
    pub seed: u64,
    pub forms: usize,
    pub checks: usize,
    pub sigma: f64,
    pub beta: f64,
    pub max_abs_n: i32,
    /// Violations of the strengthened implications.
    pub violations: usize,
    /// Violations of the `beta` implications, `None` when `beta` is inadmissible.
    pub beta_violations: Option<usize>,
    pub max_hadamard_defect: f64,
    /// Worst conclusion slack on the monomial boundary cases (0 when none fails).
    pub monomial_defect: f64,
    pub rows: Vec<LaurentRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentRow {
    pub index: usize,
    pub n_min: i32,
    pub n_max: i32,
    pub rho: f64,
    pub violations: usize,
    pub beta_violations: usize,
    pub hadamard_defect: f64,
}

pub const LAURENT_CSV_HEADER: &str =
    "index,n_min,n_max,rho,violations,beta_violations,hadamard_defect";

impl LaurentSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LAURENT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{},{},{:e}",
                r.index, r.n_min, r.n_max, r.rho, r.violations, r.beta_violations, r.hadamard_defect
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "forms = {}", self.forms);
        let _ = writeln!(s, "checks = {}", self.checks);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "max_abs_n = {}", self.max_abs_n);
        let _ = writeln!(s, "violations = {}", self.violations);
        match self.beta_violations {
            Some(v) => {
                let _ = writeln!(s, "beta_violations = {v}");
            }
            None => {
                let _ = writeln!(s, "beta_violations = n/a (beta inadmissible for sigma)");
            }
        }
        let _ = writeln!(s, "max_hadamard_defect = {:e}", self.max_hadamard_defect);
        let _ = writeln!(s, "monomial_defect = {:e}", self.monomial_defect);
        s
    }
}

/// Monomials `z^{n-1}, z^n, z^{n+1}` under weight `n`: conclusion slack of every
/// implication whose hypothesis holds, as `(lhs - rhs)/lhs` (positive is a failure).
pub fn monomial_boundary_defect(sigma: f64, max_abs_n: i32) -> Result<f64> {
    check_sigma(sigma)?;
    let (hyp, concl) = strengthened_constants(sigma);
    let mut worst: f64 = 0.0;
    for n in -max_abs_n..=max_abs_n {
        for d in -1..=1 {
            let form = LaurentForm::monomial(n + d, num_complex::Complex64::new(1.0, 0.0))?;
            let s = band_sups(&form, n, sigma, 1.0);
            if s[0] <= hyp * s[1] * (1.0 + 1e-15) {
                worst = worst.max((s[1] - concl * s[2]) / s[1]);
            }
            if s[2] <= hyp * s[1] * (1.0 + 1e-15) {
                worst = worst.max((s[1] - concl * s[0]) / s[1]);
            }
        }
    }
    Ok(worst)
}

/// Runs the three-annulus checks over `count` seeded random forms, every weight
/// `|n| <= max_abs_n`, and `rho` log-uniform in `[1/2, 2]`.
pub fn laurent_sweep(count: usize, sigma: f64, beta: f64, seed: u64, max_abs_n: i32) -> Result<LaurentSweep> {
    check_sigma(sigma)?;
    if max_abs_n < 0 {
        return Err(HmError::InvalidParams("max_abs_n must be >= 0".into()));
    }
    let beta_ok = beta_admissible(sigma, beta);
    if !beta_ok {
        log::warn!("beta = {beta} is inadmissible at sigma = {sigma}; only the strengthened implications are checked");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    let mut checks = 0;
    let mut violations = 0;
    let mut beta_violations = 0;
    let mut max_hadamard = f64::NEG_INFINITY;
    for index in 0..count {
        let form = LaurentForm::random(&mut rng, max_abs_n);
        let rho = 2f64.powf(rng.gen_range(-1.0..=1.0));
        let mut row = LaurentRow {
            index,
            n_min: form.n_min(),
            n_max: form.n_max(),
            rho,
            violations: 0,
            beta_violations: 0,
            hadamard_defect: 0.0,
        };
        for n in -max_abs_n..=max_abs_n {
            checks += 1;
            if three_annulus_check_strong(&form, n, sigma, rho)?.violated {
                row.violations += 1;
            }
            if beta_ok && three_annulus_check(&form, n, sigma, beta, rho)?.violated {
                row.beta_violations += 1;
            }
        }
        let radii = geometric_radii(rho / sigma, rho * sigma * sigma, (sigma.powi(3)).powf(1.0 / 63.0))?;
        row.hadamard_defect = hadamard_convexity_check(&form, &radii[..64.min(radii.len())])?;
        max_hadamard = max_hadamard.max(row.hadamard_defect);
        violations += row.violations;
        beta_violations += row.beta_violations;
        rows.push(row);
    }
    Ok(LaurentSweep {
        seed,
        forms: count,
        checks,
        sigma,
        beta,
        max_abs_n,
        violations,
        beta_violations: beta_ok.then_some(beta_violations),
        max_hadamard_defect: max_hadamard,
        monomial_defect: monomial_boundary_defect(sigma, max_abs_n)?,
        rows,
    })
}

/// One point of the Lojasiewicz scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct LojSample {
    pub label: String,
    pub log_delta: f64,
    pub log_dist: f64,
    pub lambda_max: f64,
}

impl LojSample {
    /// `None` when `dist` or `delta` is zero or non-finite.
    pub fn new(label: impl Into<String>, delta: f64, dist: f64, lambda_max: f64) -> Option<LojSample> {
        let (ld, ls) = (delta.ln(), dist.ln());
        (ld.is_finite() && ls.is_finite()).then(|| LojSample {
            label: label.into(),
            log_delta: ld,
            log_dist: ls,
            lambda_max,
        })
    }
}

pub const LOJ_CSV_HEADER: &str = "label,log_delta,log_dist,lambda_max";

pub fn loj_csv(samples: &[LojSample]) -> String {
    let mut s = String::from(LOJ_CSV_HEADER);
    s.push('\n');
    for x in samples {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", x.label, x.log_delta, x.log_dist, x.lambda_max);
    }
    s
}

/// Samples from trace rows. Rows with `dist4pi <= floor` (including zero) or zero
/// tension are dropped and counted.
pub fn loj_samples_from_trace(trace: &FlowTrace, label: &str, floor: f64) -> (Vec<LojSample>, usize) {
    let mut out = Vec::new();
    let mut dropped = 0;
    for r in &trace.rows {
        let s = (r.dist4pi > floor)
            .then(|| LojSample::new(format!("{label}@t={:e}", r.t), r.delta, r.dist4pi, 0.0))
            .flatten();
        match s {
            Some(s) => out.push(s),
            None => dropped += 1,
        }
    }
    (out, dropped)
}

/// Discretization floor of `dist4pi` for a converged run: `factor` times the last row's
/// value, never below `absolute`.
pub fn trace_floor(trace: &FlowTrace, factor: f64, absolute: f64) -> f64 {
    let last = trace.rows.last().map_or(0.0, |r| r.dist4pi);
    (factor * last).max(absolute)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LojFit {
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Least-squares slope of `log dist` against `log delta`.
pub fn fit_loj_exponent(samples: &[LojSample]) -> Result<LojFit> {
    if samples.len() < 8 {
        return Err(HmError::InsufficientSpread(format!(
            "{} samples, at least 8 needed",
            samples.len()
        )));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
            (a.min(s.log_delta), b.max(s.log_delta))
        });
    if hi - lo < 2.0 * std::f64::consts::LN_10 {
        return Err(HmError::InsufficientSpread(format!(
            "delta spans {:.2} decades, at least 2 needed",
            (hi - lo) / std::f64::consts::LN_10
        )));
    }
    let m = samples.len() as f64;
    let mx = samples.iter().map(|s| s.log_delta).sum::<f64>() / m;
    let my = samples.iter().map(|s| s.log_dist).sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for s in samples {
        let (dx, dy) = (s.log_delta - mx, s.log_dist - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let alpha = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LojFit {
        alpha,
        intercept: my - alpha * mx,
        r2,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub c: f64,
    /// RMS of `log dist - log model`.
    pub residual: f64,
    pub predicted: Vec<(f64, f64)>,
}

/// `(c + k t)^{-1/k}` with `k = (2 - alpha)/alpha`, i.e. `(c + k t)^{alpha/(alpha - 2)}`.
pub fn decay_model(alpha: f64, c: f64, t: f64) -> f64 {
    let k = (2.0 - alpha) / alpha;
    (c + k * t).powf(-1.0 / k)
}

/// Fits `c` in the decay family to `(t, dist)` pairs in log space.
pub fn fit_decay_samples(ts: &[f64], dists: &[f64], alpha: f64) -> Result<DecayFit> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(HmError::InvalidParams(format!("alpha = {alpha} must lie in (0, 2)")));
    }
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(dists)
        .filter(|(t, d)| t.is_finite() && **d > 0.0 && d.is_finite())
        .map(|(t, d)| (*t, *d))
        .collect();
    if pts.is_empty() {
        return Err(HmError::WindowEmpty);
    }
    let k = (2.0 - alpha) / alpha;
    let t_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    // linearization: dist^{-k} = c + k t
    let mut c = pts.iter().map(|(t, d)| d.powf(-k) - k * t).sum::<f64>() / pts.len() as f64;
    let c_floor = -k * t_min;
    if c <= c_floor {
        c = c_floor + 1e-12_f64.max(c_floor.abs() * 1e-12);
    }
    let residuals = |c: f64| -> Vec<f64> {
        pts.iter()
            .map(|(t, d)| d.ln() + (c + k * t).ln() / k)
            .collect()
    };
    for _ in 0..100 {
        let r = residuals(c);
        // d r_i / d c = 1/(k (c + k t_i))
        let (mut jj, mut jr) = (0.0, 0.0);
        for ((t, _), ri) in pts.iter().zip(&r) {
            let g = 1.0 / (k * (c + k * t));
            jj += g * g;
            jr += g * ri;
        }
        let mut step = -jr / jj;
        while c + step <= c_floor {
            step *= 0.5;
        }
        c += step;
        if step.abs() <= 1e-15 * c.abs().max(1e-300) {
            break;
        }
    }
    let r = residuals(c);
    let residual = (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    Ok(DecayFit {
        alpha,
        c,
        residual,
        predicted: pts.iter().map(|(t, _)| (*t, decay_model(alpha, c, *t))).collect(),
    })
}

/// Decay fit of a trace's `dist4pi` column over rows with `t` in `window` (all rows if `None`).
pub fn fit_decay_rate(trace: &FlowTrace, alpha: f64, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let rows: Vec<_> = trace.rows.iter().filter(|r| r.t >= lo && r.t <= hi).collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.dist4pi).collect();
    fit_decay_samples(&ts, &ds, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn lattice_distance_examples() {
        assert_eq!(dist_to_4pi_lattice(4.0 * PI), (1, 0.0));
        let (n, d) = dist_to_4pi_lattice(12.7);
        assert_eq!(n, 1);
        assert!((d - (12.7 - 4.0 * PI)).abs() < 1e-15);
        assert!((d - 0.133_629).abs() < 1e-6);
        assert_eq!(dist_to_4pi_lattice(2.0 * PI), (0, 2.0 * PI));
        assert_eq!(dist_to_4pi_lattice(0.0), (0, 0.0));
    }

    #[test]
    fn lattice_periodicity() {
        for e in [0.3, 5.0, 9.1, 17.0, 30.5] {
            let (n, d) = dist_to_4pi_lattice(e);
            let (m, d2) = dist_to_4pi_lattice(e + 4.0 * PI);
            assert_eq!(m, n + 1);
            assert!((d - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn band_sup_matches_dense_sampling() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let form = LaurentForm::random(&mut rng, 6);
            let n = rng.gen_range(-6..=6);
            let (lo, hi) = (0.7, 1.4);
            let exact = band_sup(&form, n, lo, hi);
            let dense = (0..=2000)
                .map(|k| {
                    let r = lo * (hi / lo).powf(k as f64 / 2000.0);
                    r.powi(-n) * laurent_f(&form, r)
                })
                .fold(0.0, f64::max);
            assert!((exact - dense).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn weight_matched_monomial_satisfies_both_forms() {
        for n in -6..=6 {
            let g = LaurentForm::monomial(n, one()).unwrap();
            let r = three_annulus_check(&g, n, 2.0, 0.4, 1.0).unwrap();
            assert!(r.a_hyp && r.a_concl && r.b_hyp && r.b_concl && !r.violated);
            let s = three_annulus_check_strong(&g, n, 2.0, 1.0).unwrap();
            assert!(s.a_hyp && s.a_concl && !s.violated);
        }
    }

    #[test]
    fn growing_monomial_bands() {
        let n = 2;
        let g = LaurentForm::monomial(n + 1, one()).unwrap();
        let r = three_annulus_check(&g, n, 2.0, 0.4, 0.8).unwrap();
        assert!((r.s[0] - 0.8).abs() < 1e-15);
        assert!((r.s[1] - 1.6).abs() < 1e-15);
        assert!((r.s[2] - 3.2).abs() < 1e-14);
        assert!(r.a_hyp && r.a_concl && !r.violated);
    }

    #[test]
    fn beta_assumption_is_enforced() {
        let g = LaurentForm::monomial(0, one()).unwrap();
        assert!(!beta_admissible(2.0, 0.25));
        assert!(beta_admissible(2.0, 0.4));
        assert!(matches!(
            three_annulus_check(&g, 0, 2.0, 0.25, 1.0),
            Err(HmError::InvalidParams(_))
        ));
    }

    #[test]
    fn hadamard_examples() {
        let radii = geometric_radii(0.1, 10.0, 1.2).unwrap();
        let z = LaurentForm::monomial(1, one()).unwrap();
        assert!(hadamard_convexity_check(&z, &radii).unwrap() <= 1e-12);
        let one_plus_z = LaurentForm::new(0, vec![one(), one()]).unwrap();
        assert!(hadamard_convexity_check(&one_plus_z, &radii).unwrap() <= 1e-12);
        assert!(hadamard_convexity_check(&z, &radii[..2]).is_err());
    }

    #[test]
    fn small_sweep_has_no_strong_violations() {
        let s = laurent_sweep(300, 2.0, 0.25, 7, 6).unwrap();
        assert_eq!(s.violations, 0);
        assert_eq!(s.beta_violations, None);
        assert!(s.max_hadamard_defect <= 1e-10);
        assert!(s.monomial_defect <= 1e-12);
        let again = laurent_sweep(300, 2.0, 0.25, 7, 6).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn loj_fit_exact_power_laws() {
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<LojSample> {
            (0..12)
                .map(|k| {
                    let d = 10f64.powf(-0.3 * k as f64);
                    LojSample::new("s", d, f(d), 0.0).unwrap()
                })
                .collect()
        };
        let fit = fit_loj_exponent(&mk(&|d| d * d)).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-10);
        let fit = fit_loj_exponent(&mk(&|d| 3.0 * d)).unwrap();
        assert!((fit.alpha - 1.0).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        let few = mk(&|d| d)[..5].to_vec();
        assert!(matches!(fit_loj_exponent(&few), Err(HmError::InsufficientSpread(_))));
        let narrow: Vec<LojSample> = (0..10)
            .map(|k| LojSample::new("s", 1.0 + 0.1 * k as f64, 1.0, 0.0).unwrap())
            .collect();
        assert!(matches!(fit_loj_exponent(&narrow), Err(HmError::InsufficientSpread(_))));
    }

    #[test]
    fn decay_fit_recovers_model() {
        let ts: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let ds: Vec<f64> = ts.iter().map(|t| decay_model(1.1, 1.0, *t)).collect();
        let fit = fit_decay_samples(&ts, &ds, 1.1).unwrap();
        assert!(fit.residual <= 1e-8);
        assert!((fit.c - 1.0).abs() < 1e-8);
        assert!(fit_decay_samples(&ts, &ds, 2.0).is_err());
        assert!(matches!(fit_decay_samples(&[], &[], 1.0), Err(HmError::WindowEmpty)));
    }

    #[test]
    fn annulus_sup_of_monomial_profile() {
        let radii = geometric_radii(0.1, 3.0, PROFILE_RATIO).unwrap();
        let z = LaurentForm::monomial(1, one()).unwrap();
        let p = AnnulusProfile::from_laurent(&z, 1, radii).unwrap();
        for (lo, hi) in [(0.1, 0.5), (0.3, 2.0), (1.0, 2.9)] {
            let s = annulus_sup(&p, lo, hi, WeightMode::Power).unwrap();
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert!(annulus_sup(&p, 0.01, 0.5, WeightMode::Power).is_err());
        assert!(annulus_sup(&p, 0.5, 0.4, WeightMode::Power).is_err());
        let p0 = AnnulusProfile { n: 0, ..p.clone() };
        let s = annulus_sup(&p0, 0.2, 1.0, WeightMode::Power).unwrap();
        let direct = p0
            .radii
            .iter()
            .zip(&p0.values)
            .filter(|(r, _)| **r >= 0.2 && **r <= 1.0)
            .map(|(_, f)| *f)
            .fold(0.0, f64::max);
        assert_eq!(s, direct);
    }
}
