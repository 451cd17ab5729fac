//! GSI systems on the Fourier side and their analysis.
//!
//! A system is a finite list of pairs `(c_j, ĝ_j)`; the translation system
//! `{T_{c_j k} g_j}` becomes `{E_{c_j k} ĝ_j}` after the Fourier transform,
//! so every frame and duality condition below is a statement about the
//! piecewise polynomials `ĝ_j` and their shifts by `m / c_j`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GsiError, Result};
use crate::piecewise::{integrate_abs_product, integrate_product, merge_eps, Extrema, Interval, PiecewisePoly};

/// Tolerance for pointwise inequality checks that take no explicit `tol`.
pub const CHECK_TOL: f64 = 1e-9;

/// Inclusive integer range, serialized as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct IntRange {
    pub lo: i64,
    pub hi: i64,
}

impl From<[i64; 2]> for IntRange {
    fn from(v: [i64; 2]) -> Self {
        IntRange { lo: v[0], hi: v[1] }
    }
}

impl From<IntRange> for [i64; 2] {
    fn from(r: IntRange) -> Self {
        [r.lo, r.hi]
    }
}

impl IntRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        IntRange { lo, hi }
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn contains(&self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub c: f64,
    pub label: Vec<i64>,
    pub ghat: PiecewisePoly,
    /// Integer frequency `t` of a dropped unimodular factor `e^{2πitγ}`.
    /// Systems carrying phases only support modulus-based analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<i64>,
}

impl Generator {
    pub fn new(c: f64, label: Vec<i64>, ghat: PiecewisePoly) -> Self {
        Generator { c, label, ghat, phase: None }
    }

    /// First label entry; probes accumulate level by level.
    pub fn level(&self) -> i64 {
        self.label.first().copied().unwrap_or(0)
    }
}

/// How the generator list was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyRule {
    Explicit,
    /// `ĝ_j = a^{j/2} ψ̂(a^j γ)`, `c_j = a^j b`.
    Wavelet { a: f64, b: f64, psi: PiecewisePoly, j_range: IntRange },
    /// `c_j = c` for every listed `ĝ_j`.
    ShiftInvariant { c: f64, ghats: Vec<PiecewisePoly> },
    /// `ĝ_j = a_j^{1/2} ψ̂(a_j γ - d_j)`, `c_j = a_j b`, from `(a_j, d_j)`.
    WavePacket { b: f64, points: Vec<[f64; 2]>, psi: PiecewisePoly },
    /// Points `(a^j, d)` over `j_range × d_list`; with `dilate_modulation`
    /// the modulation becomes `a^j d`, i.e. `ĝ = a^{j/2} ψ̂(a^j (γ - d))`.
    SeparableWavePacket {
        a: f64,
        b: f64,
        d_list: Vec<f64>,
        psi: PiecewisePoly,
        j_range: IntRange,
        #[serde(default)]
        dilate_modulation: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsiSystem {
    pub family_rule: FamilyRule,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub blind_set: Vec<f64>,
    /// The set `S` as a union of intervals; empty means all of ℝ.
    #[serde(rename = "band_S", default)]
    pub band_s: Vec<Interval>,
}

fn wave_packet_generator(psi: &PiecewisePoly, a: f64, d: f64, b: f64, label: Vec<i64>) -> Result<Generator> {
    let ghat = psi.affine_substitute(a, -d)?.scale(a.sqrt());
    Ok(Generator::new(a * b, label, ghat))
}

impl GsiSystem {
    pub fn explicit(generators: Vec<Generator>) -> Self {
        GsiSystem { family_rule: FamilyRule::Explicit, generators, blind_set: Vec::new(), band_s: Vec::new() }
    }

    /// Expands a family rule into its generator list.
    pub fn from_rule(rule: FamilyRule) -> Result<Self> {
        let generators = match &rule {
            FamilyRule::Explicit => Vec::new(),
            FamilyRule::Wavelet { a, b, psi, j_range } => j_range
                .iter()
                .map(|j| {
                    let s = a.powi(j as i32);
                    Ok(Generator::new(s * b, vec![j], psi.affine_substitute(s, 0.0)?.scale(s.sqrt())))
                })
                .collect::<Result<_>>()?,
            FamilyRule::ShiftInvariant { c, ghats } => ghats
                .iter()
                .enumerate()
                .map(|(i, g)| Generator::new(*c, vec![i as i64], g.clone()))
                .collect(),
            FamilyRule::WavePacket { b, points, psi } => points
                .iter()
                .enumerate()
                .map(|(i, p)| wave_packet_generator(psi, p[0], p[1], *b, vec![i as i64]))
                .collect::<Result<_>>()?,
            FamilyRule::SeparableWavePacket { a, b, d_list, psi, j_range, dilate_modulation } => {
                let mut out = Vec::new();
                for j in j_range.iter() {
                    let s = a.powi(j as i32);
                    for (m, &d) in d_list.iter().enumerate() {
                        let shift = if *dilate_modulation { s * d } else { d };
                        out.push(wave_packet_generator(psi, s, shift, *b, vec![j, m as i64])?);
                    }
                }
                out
            }
        };
        Ok(GsiSystem { family_rule: rule, generators, blind_set: Vec::new(), band_s: Vec::new() })
    }

    pub fn with_blind_set(mut self, blind: Vec<f64>) -> Self {
        self.blind_set = blind;
        self
    }

    pub fn with_band(mut self, band: Vec<Interval>) -> Self {
        self.band_s = band;
        self
    }

    /// `χ_S` restricted to `w`.
    pub fn chi_s(&self, w: Interval) -> PiecewisePoly {
        if self.band_s.is_empty() {
            return PiecewisePoly::indicator(w.lo, w.hi);
        }
        let parts: Vec<PiecewisePoly> = self
            .band_s
            .iter()
            .map(|s| s.intersect(&w))
            .filter(|s| !s.is_empty())
            .map(|s| PiecewisePoly::indicator(s.lo, s.hi))
            .collect();
        PiecewisePoly::sum(&parts)
    }

    fn has_phases(&self) -> Option<&Generator> {
        self.generators.iter().find(|g| g.phase.is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub j_range: IntRange,
    pub k_range: IntRange,
    pub m_range: IntRange,
    pub alpha_max: f64,
    pub window: Interval,
}

impl TruncationPolicy {
    pub fn new(window: Interval, alpha_max: f64) -> Self {
        TruncationPolicy {
            j_range: IntRange::new(0, 0),
            k_range: IntRange::new(0, 0),
            m_range: IntRange::new(0, 0),
            alpha_max,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("j_range", self.j_range), ("k_range", self.k_range), ("m_range", self.m_range)] {
            if r.lo > r.hi {
                return Err(GsiError::InvalidPolicy(format!("{name} [{}, {}] is empty", r.lo, r.hi)));
            }
        }
        if !(self.alpha_max > 0.0) {
            return Err(GsiError::InvalidPolicy("alpha_max must be positive".into()));
        }
        if !(self.window.hi > self.window.lo) {
            return Err(GsiError::InvalidPolicy("window is degenerate".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaResidual {
    pub alpha: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    #[serde(rename = "bessel_B")]
    pub bessel_b: Option<f64>,
    #[serde(rename = "lower_A")]
    pub lower_a: Option<f64>,
    pub calderon_inf: Option<f64>,
    pub calderon_sup: Option<f64>,
    pub duality_residuals: Vec<AlphaResidual>,
    pub passed: Option<bool>,
    pub notes: String,
    pub policy: TruncationPolicy,
}

impl FrameReport {
    fn empty(policy: &TruncationPolicy) -> Self {
        FrameReport {
            bessel_b: None,
            lower_a: None,
            calderon_inf: None,
            calderon_sup: None,
            duality_residuals: Vec::new(),
            passed: None,
            notes: String::new(),
            policy: policy.clone(),
        }
    }

    /// Largest duality residual and the α where it occurs.
    pub fn worst_residual(&self) -> Option<AlphaResidual> {
        self.duality_residuals.iter().copied().max_by(|a, b| a.residual.total_cmp(&b.residual))
    }
}

/// Sup/inf on `w` with `εmerge`-neighbourhoods of blind points removed.
pub fn essential_extrema(f: &PiecewisePoly, w: Interval, blind: &[f64]) -> Extrema {
    let mut cuts: Vec<(f64, f64)> = blind
        .iter()
        .filter(|&&p| p > w.lo - merge_eps(p) && p < w.hi + merge_eps(p))
        .map(|&p| (p - merge_eps(p), p + merge_eps(p)))
        .collect();
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut segments = Vec::new();
    let mut lo = w.lo;
    for (a, b) in cuts {
        if a > lo {
            segments.push(Interval::new(lo, a.min(w.hi)));
        }
        lo = lo.max(b);
    }
    if w.hi > lo {
        segments.push(Interval::new(lo, w.hi));
    }
    let mut out: Option<Extrema> = None;
    for s in segments {
        let e = f.extrema_with_args(s);
        match out.as_mut() {
            Some(o) => o.merge(&e),
            None => out = Some(e),
        }
    }
    out.unwrap_or_else(|| f.extrema_with_args(Interval::new(w.lo, w.lo)))
}

/// `Σ_j c_j⁻¹ ĝ_j²` on `w`.
pub fn calderon_sum(sys: &GsiSystem, w: Interval) -> Result<PiecewisePoly> {
    let terms = sys
        .generators
        .par_iter()
        .filter(|g| g.ghat.support().is_some_and(|s| s.overlaps(&w)))
        .map(|g| {
            let r = g.ghat.restrict(w);
            Ok(r.mul(&r)?.scale(1.0 / g.c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PiecewisePoly::sum(&terms))
}

/// Whether `α ∈ c⁻¹ℤ` up to the membership tolerance.
pub fn alpha_in_lattice(alpha: f64, c: f64) -> bool {
    let x = alpha * c;
    (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
}

/// All `m / c_j` with `|m / c_j| ≤ alpha_max`, sorted and deduplicated.
pub fn alpha_set(sys: &GsiSystem, policy: &TruncationPolicy) -> Vec<f64> {
    let mut steps: Vec<f64> = sys.generators.iter().map(|g| g.c).collect();
    steps.sort_by(f64::total_cmp);
    steps.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut alphas = vec![0.0];
    for c in steps {
        let m_max = (policy.alpha_max * c * (1.0 + 1e-12)).floor() as i64;
        for m in 1..=m_max {
            let a = m as f64 / c;
            alphas.push(a);
            alphas.push(-a);
        }
    }
    alphas.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(alphas.len());
    for a in alphas {
        match out.last() {
            Some(&last) if a - last <= merge_eps(last) => {}
            _ => out.push(a),
        }
    }
    out
}

fn check_compatible(sys: &GsiSystem, dual: &GsiSystem) -> Result<()> {
    if let Some(g) = sys.has_phases().or(dual.has_phases()) {
        return Err(GsiError::PhaseTagged { label: g.label.clone() });
    }
    if sys.generators.len() != dual.generators.len() {
        return Err(GsiError::MismatchedSystems(format!(
            "{} generators against {}",
            sys.generators.len(),
            dual.generators.len()
        )));
    }
    for (g, h) in sys.generators.iter().zip(&dual.generators) {
        if g.label != h.label {
            return Err(GsiError::MismatchedSystems(format!("label {:?} against {:?}", g.label, h.label)));
        }
        if (g.c - h.c).abs() > 1e-12 * g.c.abs() {
            return Err(GsiError::MismatchedSystems(format!("step {} against {} at {:?}", g.c, h.c, g.label)));
        }
    }
    Ok(())
}

/// `Σ_{j: α c_j ∈ ℤ} c_j⁻¹ ĝ_j(γ) ĥ_j(γ + α)` on `w`.
pub fn t_alpha(sys: &GsiSystem, dual: &GsiSystem, alpha: f64, w: Interval) -> Result<PiecewisePoly> {
    check_compatible(sys, dual)?;
    t_alpha_unchecked(sys, dual, alpha, w)
}

fn t_alpha_unchecked(sys: &GsiSystem, dual: &GsiSystem, alpha: f64, w: Interval) -> Result<PiecewisePoly> {
    let mut terms = Vec::new();
    for (g, h) in sys.generators.iter().zip(&dual.generators) {
        if !alpha_in_lattice(alpha, g.c) {
            continue;
        }
        let (Some(sg), Some(sh)) = (g.ghat.support(), h.ghat.support()) else {
            continue;
        };
        let span = sg.intersect(&w).intersect(&sh.shift(-alpha));
        if span.is_empty() {
            continue;
        }
        let shifted = h.ghat.translate(-alpha);
        terms.push(g.ghat.restrict(span).mul(&shifted)?.scale(1.0 / g.c));
    }
    Ok(PiecewisePoly::sum(&terms).restrict(w))
}

/// Checks `t_α = δ_{α,0} χ_S` on the policy window for every α in the set.
pub fn verify_duality(sys: &GsiSystem, dual: &GsiSystem, policy: &TruncationPolicy, tol: f64) -> Result<FrameReport> {
    verify_duality_scaled(sys, dual, policy, tol, 1.0)
}

/// As [`verify_duality`] with `t_0` compared against `level · χ_S`, for
/// truncations whose diagonal sum is known to fall short of one.
pub fn verify_duality_scaled(
    sys: &GsiSystem,
    dual: &GsiSystem,
    policy: &TruncationPolicy,
    tol: f64,
    level: f64,
) -> Result<FrameReport> {
    policy.validate()?;
    check_compatible(sys, dual)?;
    let w = policy.window;
    let chi = sys.chi_s(w).scale(level);
    let alphas = alpha_set(sys, policy);
    let residuals = alphas
        .par_iter()
        .map(|&alpha| {
            let t = t_alpha_unchecked(sys, dual, alpha, w)?;
            let diff = if alpha == 0.0 { t.sub(&chi) } else { t };
            let e = essential_extrema(&diff, w, &sys.blind_set);
            Ok(AlphaResidual { alpha, residual: e.inf.abs().max(e.sup.abs()) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = FrameReport::empty(policy);
    let passed = residuals.iter().all(|r| r.residual <= tol);
    report.passed = Some(passed);
    report.notes = match residuals.iter().max_by(|a, b| a.residual.total_cmp(&b.residual)) {
        Some(r) => format!("{} alphas checked; worst residual {:.3e} at alpha {}", residuals.len(), r.residual, r.alpha),
        None => "no alphas".into(),
    };
    report.duality_residuals = residuals;
    Ok(report)
}

/// Diagonal and off-diagonal CC sums on the window.
fn cc_sums(sys: &GsiSystem, w: Interval) -> Result<(PiecewisePoly, PiecewisePoly)> {
    let parts = sys
        .generators
        .par_iter()
        .filter_map(|g| {
            let local = g.ghat.restrict(w);
            let ls = local.support()?;
            Some((g, local, ls))
        })
        .map(|(g, local, ls)| {
            let s = g.ghat.support().expect("local part is nonzero");
            let diag = local.mul(&local)?.scale(1.0 / g.c);
            let m_max = (g.c * s.len()).ceil() as i64 + 1;
            let mut off = Vec::new();
            for m in (-m_max..=m_max).filter(|&m| m != 0) {
                let shift = m as f64 / g.c;
                let span = ls.intersect(&s.shift(-shift));
                if span.is_empty() {
                    continue;
                }
                let prod = local.restrict(span).mul(&g.ghat.translate(-shift))?;
                off.push(prod.abs().scale(1.0 / g.c));
            }
            Ok((diag, PiecewisePoly::sum(&off)))
        })
        .collect::<Result<Vec<_>>>()?;
    let diag = PiecewisePoly::sum(parts.iter().map(|p| &p.0));
    let off = PiecewisePoly::sum(parts.iter().map(|p| &p.1));
    Ok((diag, off))
}

/// CC-type estimates: `B = sup Σ_j Σ_m c_j⁻¹ |ĝ_j ĝ_j(· + m/c_j)|` and
/// `A = inf (Calderón sum − off-diagonal part)` over the window.
pub fn frame_bounds_estimate(sys: &GsiSystem, policy: &TruncationPolicy) -> Result<FrameReport> {
    policy.validate()?;
    let w = policy.window;
    let (diag, off) = cc_sums(sys, w)?;
    let blind = &sys.blind_set;
    let cal = essential_extrema(&diag, w, blind);
    let upper = essential_extrema(&diag.add(&off), w, blind);
    let lower = essential_extrema(&diag.sub(&off), w, blind);
    let mut report = FrameReport::empty(policy);
    report.bessel_b = Some(upper.sup);
    report.lower_a = Some(lower.inf);
    report.calderon_inf = Some(cal.inf);
    report.calderon_sup = Some(cal.sup);
    report.notes = format!("B attained near {}, A near {}", upper.arg_sup, lower.arg_inf);
    Ok(report)
}

/// Whether the Calderón sum stays above `A - CHECK_TOL` off the blind set;
/// on failure returns a point where it does not.
pub fn calderon_lower_check(sys: &GsiSystem, a: f64, policy: &TruncationPolicy) -> Result<(bool, Option<f64>)> {
    policy.validate()?;
    let cs = calderon_sum(sys, policy.window)?;
    let e = essential_extrema(&cs, policy.window, &sys.blind_set);
    if e.inf >= a - CHECK_TOL {
        Ok((true, None))
    } else {
        Ok((false, Some(e.arg_inf)))
    }
}

/// Partial sums of an infinite series accumulated level by level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub levels: Vec<i64>,
    pub partial_sums: Vec<f64>,
    pub diverging: bool,
    pub policy: TruncationPolicy,
}

impl ProbeTrace {
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.partial_sums
            .iter()
            .map(|&s| {
                let d = s - prev;
                prev = s;
                d
            })
            .collect()
    }
}

/// Divergence verdict on per-level increments: the last quarter must keep a
/// mean of at least `1e-8` without a downward trend.
pub fn diverges(increments: &[f64]) -> bool {
    if increments.is_empty() {
        return false;
    }
    let q = increments.len().div_ceil(4).max(2).min(increments.len());
    let tail = &increments[increments.len() - q..];
    let mean = tail.iter().sum::<f64>() / q as f64;
    if mean < 10.0 * CHECK_TOL {
        return false;
    }
    if q < 2 {
        return true;
    }
    let xm = (q as f64 - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in tail.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - mean);
        sxx += dx * dx;
    }
    sxy / sxx >= -1e-6 * mean
}

/// Support of `f̂`, provided it is compact, nonempty and avoids the blind set.
pub fn check_dense_class(sys: &GsiSystem, fhat: &PiecewisePoly) -> Result<Interval> {
    let Some(k) = fhat.support() else {
        return Err(GsiError::NotInDenseClass { point: f64::NAN });
    };
    for &p in &sys.blind_set {
        if p >= k.lo - merge_eps(p) && p <= k.hi + merge_eps(p) {
            return Err(GsiError::NotInDenseClass { point: p });
        }
    }
    Ok(k)
}

fn by_level<'a>(gens: impl Iterator<Item = (usize, &'a Generator)>) -> BTreeMap<i64, Vec<usize>> {
    let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, g) in gens {
        out.entry(g.level()).or_default().push(i);
    }
    out
}

fn finish_trace(levels: Vec<i64>, increments: Vec<f64>, policy: &TruncationPolicy) -> ProbeTrace {
    let mut acc = 0.0;
    let partial_sums = increments
        .iter()
        .map(|d| {
            acc += d;
            acc
        })
        .collect();
    ProbeTrace { diverging: diverges(&increments), levels, partial_sums, policy: policy.clone() }
}

/// Partial sums of `L(f) = Σ_j Σ_m c_j⁻¹ ∫_{supp f̂} |f̂(γ + m/c_j) ĝ_j(γ)|²`,
/// one per level with `label[0]` in the policy `j_range`.
pub fn lic_probe(sys: &GsiSystem, fhat: &PiecewisePoly, policy: &TruncationPolicy) -> Result<ProbeTrace> {
    policy.validate()?;
    let k = check_dense_class(sys, fhat)?;
    let groups = by_level(
        sys.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| policy.j_range.contains(g.level()))
            .filter(|(_, g)| g.ghat.support().is_some_and(|s| s.overlaps(&k))),
    );
    let levels: Vec<i64> = policy.j_range.iter().collect();
    let increments = levels
        .par_iter()
        .map(|lvl| {
            let Some(idx) = groups.get(lvl) else {
                return Ok(0.0);
            };
            // Generators sharing a step combine into one energy density.
            let mut by_c: Vec<(f64, Vec<PiecewisePoly>)> = Vec::new();
            for &i in idx {
                let g = &sys.generators[i];
                let r = g.ghat.restrict(k);
                let sq = r.mul(&r)?;
                match by_c.iter_mut().find(|(c, _)| (c - g.c).abs() <= 1e-12 * g.c) {
                    Some((_, v)) => v.push(sq),
                    None => by_c.push((g.c, vec![sq])),
                }
            }
            let mut total = 0.0;
            for (c, sq) in by_c {
                let energy = PiecewisePoly::sum(&sq);
                let Some(es) = energy.support() else { continue };
                let m_max = (c * k.len()).ceil() as i64 + 1;
                for m in -m_max..=m_max {
                    let s = m as f64 / c;
                    let shifted = fhat.translate(-s);
                    let span = es.intersect(&k.shift(-s));
                    if span.is_empty() {
                        continue;
                    }
                    total += integrate_product(&[&shifted, &shifted, &energy], span) / c;
                }
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(finish_trace(levels, increments, policy))
}

/// Partial sums of the mixed series
/// `L'(f) = Σ_j Σ_m c_j⁻¹ ∫ |f̂(γ) f̂(γ + m/c_j) ĝ_j(γ) ĥ_j(γ + m/c_j)|`.
pub fn alpha_lic_probe(
    sys: &GsiSystem,
    dual: &GsiSystem,
    fhat: &PiecewisePoly,
    policy: &TruncationPolicy,
) -> Result<ProbeTrace> {
    policy.validate()?;
    if sys.generators.len() != dual.generators.len()
        || sys.generators.iter().zip(&dual.generators).any(|(g, h)| g.label != h.label || g.c != h.c)
    {
        return Err(GsiError::MismatchedSystems("alpha-LIC needs paired generators".into()));
    }
    let k = check_dense_class(sys, fhat)?;
    let groups = by_level(
        sys.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| policy.j_range.contains(g.level()))
            .filter(|(_, g)| g.ghat.support().is_some_and(|s| s.overlaps(&k))),
    );
    let levels: Vec<i64> = policy.j_range.iter().collect();
    let increments = levels
        .par_iter()
        .map(|lvl| {
            let Some(idx) = groups.get(lvl) else {
                return 0.0;
            };
            let mut total = 0.0;
            for &i in idx {
                let (g, h) = (&sys.generators[i], &dual.generators[i]);
                let Some(sh) = h.ghat.support() else { continue };
                let base = g.ghat.support().expect("filtered").intersect(&k);
                // Shifts with any overlap of the four supports.
                let lo = ((sh.lo - base.hi).max(k.lo - base.hi) * g.c).floor() as i64;
                let hi = ((sh.hi - base.lo).min(k.hi - base.lo) * g.c).ceil() as i64;
                for m in lo..=hi {
                    let s = m as f64 / g.c;
                    let span = base.intersect(&sh.shift(-s)).intersect(&k.shift(-s));
                    if span.is_empty() {
                        continue;
                    }
                    let fs = fhat.translate(-s);
                    let hs = h.ghat.translate(-s);
                    total += integrate_abs_product(&[fhat, &fs, &g.ghat, &hs], span) / g.c;
                }
            }
            total
        })
        .collect::<Vec<f64>>();
    Ok(finish_trace(levels, increments, policy))
}

/// `∫_w Σ_{j: c_j > M} |ĝ_j|²` with its level-by-level accumulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocTrace {
    pub value: f64,
    pub levels: Vec<i64>,
    pub cumulative: Vec<f64>,
}

pub fn loc_condition_check(sys: &GsiSystem, m: f64, w: Interval) -> LocTrace {
    let mut per_level: BTreeMap<i64, f64> = BTreeMap::new();
    for g in sys.generators.iter().filter(|g| g.c > m) {
        let r = g.ghat.restrict(w);
        let e = integrate_abs_product(&[&r, &r], w);
        *per_level.entry(g.level()).or_default() += e;
    }
    let mut acc = 0.0;
    let mut levels = Vec::new();
    let mut cumulative = Vec::new();
    for (l, e) in per_level {
        acc += e;
        levels.push(l);
        cumulative.push(acc);
    }
    LocTrace { value: acc, levels, cumulative }
}

fn shell_of(x: f64) -> i64 {
    // Shell n holds (2^{n-1/2}, 2^{n+1/2}].
    let mut n = (x.log2() - 0.5).ceil() as i64;
    while x > 2f64.powf(n as f64 + 0.5) {
        n += 1;
    }
    while x <= 2f64.powf(n as f64 - 0.5) {
        n -= 1;
    }
    n
}

fn separated(sorted: &[usize], a: &[f64], lambda: f64) -> bool {
    sorted.windows(2).all(|p| a[p[1]] >= lambda * a[p[0]])
}

/// Splits positive numbers into classes whose sorted members have
/// consecutive ratios at least `lambda`.
///
/// Members of the dyadic shell `(2^{n-1/2}, 2^{n+1/2}]` are ranked; the
/// `r`-th members of shells `n ≡ s (mod q)` form a class, where shells `q`
/// apart differ by more than `2^{q-1} ≥ lambda`. Classes are then merged
/// greedily while separation survives.
pub fn log_separation_decompose(a_seq: &[f64], lambda: f64, cap: usize) -> Result<Vec<Vec<usize>>> {
    assert!(lambda > 1.0, "separation ratio must exceed 1");
    assert!(a_seq.iter().all(|&x| x > 0.0), "sequence must be positive");
    let mut shells: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &x) in a_seq.iter().enumerate() {
        shells.entry(shell_of(x)).or_default().push(i);
    }
    for (&n, members) in &shells {
        if members.len() > cap {
            return Err(GsiError::UnboundedMultiplicity { shell: n, count: members.len(), cap });
        }
    }
    let q = 1 + lambda.log2().ceil().max(0.0) as i64;
    let mut classes: BTreeMap<(i64, usize), Vec<usize>> = BTreeMap::new();
    for (&n, members) in &shells {
        let mut sorted = members.clone();
        sorted.sort_by(|&i, &j| a_seq[i].total_cmp(&a_seq[j]));
        for (rank, i) in sorted.into_iter().enumerate() {
            classes.entry((n.rem_euclid(q), rank)).or_default().push(i);
        }
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    for (_, class) in classes {
        let mut placed = false;
        for m in merged.iter_mut() {
            let mut trial: Vec<usize> = m.iter().chain(&class).copied().collect();
            trial.sort_by(|&i, &j| a_seq[i].total_cmp(&a_seq[j]));
            if separated(&trial, a_seq, lambda) {
                *m = trial;
                placed = true;
                break;
            }
        }
        if !placed {
            let mut c = class;
            c.sort_by(|&i, &j| a_seq[i].total_cmp(&a_seq[j]));
            merged.push(c);
        }
    }
    Ok(merged)
}
