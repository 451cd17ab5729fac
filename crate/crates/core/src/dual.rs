//! Dual frame construction from a partition of unity.
//!
//! The frequency axis is split into bands `S_i`, each carrying monotone
//! knots `ξ_k^(i)` and a bijection `φ_i` from the generators active on the
//! band to consecutive knot positions. Given coefficients `a_{k,n}^(i)` the
//! dual generators are
//! `ĥ_j = Σ_n a_{φ_i(j),n}^(i) ĝ_{φ_i⁻¹(φ_i(j)+n)}` on every band touched by
//! `ĝ_j`, and zero elsewhere.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GsiError, Result};
use crate::gsi::{verify_duality, FamilyRule, FrameReport, Generator, GsiSystem, IntRange, TruncationPolicy};
use crate::piecewise::{merge_eps, Interval, PiecewisePoly};

/// Default tolerance for partition and coefficient identities.
pub const SETUP_TOL: f64 = 1e-9;

/// Knots `ξ_k` for `k = first, first + 1, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knots {
    pub first: i64,
    pub values: Vec<f64>,
}

impl Knots {
    pub fn from_fn(range: IntRange, f: impl Fn(i64) -> f64) -> Self {
        Knots { first: range.lo, values: range.iter().map(f).collect() }
    }

    pub fn get(&self, k: i64) -> Option<f64> {
        let i = usize::try_from(k - self.first).ok()?;
        self.values.get(i).copied()
    }
}

/// A generator placed at knot position `φ_i(j)` with its coefficient row
/// `a_{φ_i(j), n}` for `n = -N+1 ..= N-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub generator: usize,
    pub position: i64,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub index: i64,
    pub interval: Interval,
    pub knots: Knots,
    pub members: Vec<Member>,
    /// Where the partition of unity is expected to hold; `None` skips the
    /// check (edge bands of a truncated family).
    #[serde(default)]
    pub window: Option<Interval>,
}

impl Band {
    fn member_at(&self, position: i64) -> Option<&Member> {
        self.members.iter().find(|m| m.position == position)
    }

    fn member_of(&self, generator: usize) -> Option<&Member> {
        self.members.iter().find(|m| m.generator == generator)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MjRule {
    Default,
    #[default]
    Sharper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSetup {
    #[serde(rename = "N")]
    pub n: usize,
    pub generators: Vec<Generator>,
    pub bands: Vec<Band>,
    #[serde(default)]
    pub mj_rule: MjRule,
    /// Allow band members whose generator vanishes on the band.
    #[serde(default)]
    pub pad_inactive: bool,
    #[serde(default)]
    pub blind_set: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Structure { band: i64, detail: String },
    Partition { band: i64, residual: f64, at: f64 },
    Support { label: Vec<i64>, detail: String },
    Coefficient { band: i64, position: i64, n: i64, residual: f64 },
    Step { label: Vec<i64>, c: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Structure { band, detail } => write!(f, "band {band}: {detail}"),
            Violation::Partition { band, residual, at } => {
                write!(f, "band {band}: partition of unity off by {residual:.3e} at {at}")
            }
            Violation::Support { label, detail } => write!(f, "generator {label:?}: {detail}"),
            Violation::Coefficient { band, position, n, residual } => {
                write!(f, "band {band}, position {position}, n = {n}: coefficient identity off by {residual:.3e}")
            }
            Violation::Step { label, c, bound } => {
                write!(f, "generator {label:?}: step {c} exceeds 1/M_j = {bound}")
            }
        }
    }
}

impl DualSetup {
    fn coeff(&self, m: &Member, n: i64) -> f64 {
        let idx = n + self.n as i64 - 1;
        usize::try_from(idx).ok().and_then(|i| m.coeffs.get(i)).copied().unwrap_or(0.0)
    }

    /// Bands on which `ĝ_j` does not vanish, ascending by band index.
    pub fn active_bands(&self, j: usize) -> Vec<usize> {
        let g = &self.generators[j].ghat;
        let mut out: Vec<usize> = (0..self.bands.len())
            .filter(|&i| !g.restrict(self.bands[i].interval).is_zero())
            .collect();
        out.sort_by_key(|&i| self.bands[i].index);
        out
    }

    /// The primal system with `S` the union of the band intervals.
    pub fn primal(&self) -> GsiSystem {
        GsiSystem {
            family_rule: FamilyRule::Explicit,
            generators: self.generators.clone(),
            blind_set: self.blind_set.clone(),
            band_s: self.bands.iter().map(|b| b.interval).collect(),
        }
    }
}

fn knot(band: &Band, k: i64) -> std::result::Result<f64, Violation> {
    band.knots.get(k).ok_or_else(|| Violation::Structure {
        band: band.index,
        detail: format!("knot {k} is outside the stored range"),
    })
}

/// `(default, sharper)` values of `M_j`.
pub fn compute_mj(s: &DualSetup, j: usize) -> Result<(f64, f64)> {
    compute_mj_inner(s, j).map_err(|v| match v {
        Some(v) => GsiError::SetupInvalid(vec![v]),
        None => GsiError::EmptyActiveBands { label: s.generators[j].label.clone() },
    })
}

fn compute_mj_inner(s: &DualSetup, j: usize) -> std::result::Result<(f64, f64), Option<Violation>> {
    let active = s.active_bands(j);
    let (Some(&lo_b), Some(&hi_b)) = (active.first(), active.last()) else {
        return Err(None);
    };
    let (bmin, bmax) = (&s.bands[lo_b], &s.bands[hi_b]);
    let missing = |b: &Band| Violation::Structure {
        band: b.index,
        detail: format!("generator {:?} is active but not a member", s.generators[j].label),
    };
    let mmin = bmin.member_of(j).ok_or_else(|| Some(missing(bmin)))?;
    let mmax = bmax.member_of(j).ok_or_else(|| Some(missing(bmax)))?;
    let n = s.n as i64;
    let (pmin, pmax) = (mmin.position, mmax.position);
    let default = (knot(bmax, pmax + 2 * n)? - knot(bmin, pmin)?).max(knot(bmax, pmax + n)? - knot(bmin, pmin - n)?);
    let n_max = (-n + 1..n).filter(|&k| s.coeff(mmax, k) != 0.0).max().unwrap_or(0);
    let n_min = (-n + 1..n).filter(|&k| s.coeff(mmin, k) != 0.0).min().unwrap_or(0);
    let sharper =
        (knot(bmax, pmax + n_max + n)? - knot(bmin, pmin)?).max(knot(bmax, pmax + n)? - knot(bmin, pmin + n_min)?);
    Ok((default, sharper))
}

fn check_structure(s: &DualSetup, out: &mut Vec<Violation>) {
    let width = 2 * s.n - 1;
    let mut prev: Option<&Band> = None;
    for band in &s.bands {
        let v = |detail: String| Violation::Structure { band: band.index, detail };
        if let Some(p) = prev {
            if p.index >= band.index || p.interval.hi > band.interval.lo + merge_eps(band.interval.lo) {
                out.push(v(format!("bands {} and {} are out of order", p.index, band.index)));
            }
        }
        prev = Some(band);
        if band.knots.values.windows(2).any(|w| w[1] < w[0]) {
            out.push(v("knots decrease".into()));
        }
        let iv = band.interval;
        if band.knots.values.iter().any(|&x| x < iv.lo - merge_eps(x) || x > iv.hi + merge_eps(x)) {
            out.push(v("knots leave the band".into()));
        }
        let mut positions: Vec<i64> = band.members.iter().map(|m| m.position).collect();
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            out.push(v("phi is not injective".into()));
        }
        if positions.windows(2).any(|w| w[1] != w[0] + 1 && w[0] != w[1]) {
            out.push(v("phi has a non-contiguous image".into()));
        }
        let mut gens: Vec<usize> = band.members.iter().map(|m| m.generator).collect();
        gens.sort_unstable();
        if gens.windows(2).any(|w| w[0] == w[1]) {
            out.push(v("a generator appears twice".into()));
        }
        for m in &band.members {
            if m.generator >= s.generators.len() {
                out.push(v(format!("member refers to missing generator {}", m.generator)));
            }
            if m.coeffs.len() != width {
                out.push(v(format!("coefficient row at {} has length {}, expected {width}", m.position, m.coeffs.len())));
            }
        }
    }
}

/// Largest `|sum - 1|` on `w` and where it occurs. Cells narrower than
/// the merge tolerance are rounding slivers between breakpoints that agree
/// in exact arithmetic; the identity is only claimed almost everywhere, so
/// they are skipped.
fn unity_gap(sum: &PiecewisePoly, w: Interval) -> (f64, f64) {
    let pad = w.len().max(1.0);
    let diff = sum.sub(&PiecewisePoly::indicator(w.lo - pad, w.hi + pad));
    let mut cuts: Vec<f64> = diff.breakpoints().iter().copied().filter(|&x| x > w.lo && x < w.hi).collect();
    cuts.insert(0, w.lo);
    cuts.push(w.hi);
    let mut best = (0.0, w.lo);
    for c in cuts.windows(2) {
        if c[1] - c[0] <= 4.0 * merge_eps(c[1]) {
            continue;
        }
        let e = diff.extrema_with_args(Interval::new(c[0], c[1]));
        for (v, x) in [(e.sup.abs(), e.arg_sup), (e.inf.abs(), e.arg_inf)] {
            if v > best.0 {
                best = (v, x);
            }
        }
    }
    best
}

fn check_partition(s: &DualSetup, tol: f64, out: &mut Vec<Violation>) {
    for band in &s.bands {
        let Some(w) = band.window else { continue };
        let terms: Vec<PiecewisePoly> =
            s.generators.iter().map(|g| g.ghat.restrict(w).scale(g.c.powf(-0.5))).collect();
        let (residual, at) = unity_gap(&PiecewisePoly::sum(&terms), w);
        if residual > tol {
            out.push(Violation::Partition { band: band.index, residual, at });
        }
    }
}

fn check_support(s: &DualSetup, out: &mut Vec<Violation>) {
    for (j, g) in s.generators.iter().enumerate() {
        let active = s.active_bands(j);
        if active.is_empty() && !g.ghat.is_zero() {
            out.push(Violation::Support { label: g.label.clone(), detail: "support lies outside every band".into() });
        }
        // The part of supp ĝ_j outside the bands must be empty.
        let inside: f64 = active.iter().map(|&i| g.ghat.restrict(s.bands[i].interval).abs().integrate(s.bands[i].interval)).sum();
        let total = g.ghat.abs().integrate(g.ghat.support().unwrap_or(Interval::new(0.0, 0.0)));
        if total - inside > 1e-12 * total.max(1.0) {
            out.push(Violation::Support { label: g.label.clone(), detail: "support leaves the union of bands".into() });
        }
        for &i in &active {
            let band = &s.bands[i];
            let Some(m) = band.member_of(j) else {
                out.push(Violation::Support {
                    label: g.label.clone(),
                    detail: format!("active on band {} but not a member", band.index),
                });
                continue;
            };
            let (Some(lo), Some(hi)) = (band.knots.get(m.position), band.knots.get(m.position + s.n as i64)) else {
                out.push(Violation::Structure {
                    band: band.index,
                    detail: format!("knots for position {} are missing", m.position),
                });
                continue;
            };
            let sup = g.ghat.restrict(band.interval).support().expect("active");
            if sup.lo < lo - merge_eps(lo) || sup.hi > hi + merge_eps(hi) {
                out.push(Violation::Support {
                    label: g.label.clone(),
                    detail: format!("support [{}, {}] on band {} exceeds knots [{lo}, {hi}]", sup.lo, sup.hi, band.index),
                });
            }
        }
        if !s.pad_inactive {
            for band in &s.bands {
                if band.member_of(j).is_some() && !active.iter().any(|&i| s.bands[i].index == band.index) {
                    out.push(Violation::Structure {
                        band: band.index,
                        detail: format!("member {:?} is inactive and padding is off", g.label),
                    });
                }
            }
        }
    }
}

fn check_coefficients(s: &DualSetup, tol: f64, out: &mut Vec<Violation>) {
    let n = s.n as i64;
    for band in &s.bands {
        for m in &band.members {
            let a0 = s.coeff(m, 0);
            if (a0 - 1.0).abs() > tol {
                out.push(Violation::Coefficient { band: band.index, position: m.position, n: 0, residual: a0 - 1.0 });
            }
            for k in 1..n {
                let Some(p) = band.member_at(m.position + k) else { continue };
                let (c, cp) = (s.generators[m.generator].c, s.generators[p.generator].c);
                let lhs = (cp / c).sqrt() * s.coeff(m, k) + (c / cp).sqrt() * s.coeff(p, -k);
                if (lhs - 2.0).abs() > tol {
                    out.push(Violation::Coefficient { band: band.index, position: m.position, n: k, residual: lhs - 2.0 });
                }
            }
        }
    }
}

fn check_steps(s: &DualSetup, out: &mut Vec<Violation>) {
    for (j, g) in s.generators.iter().enumerate() {
        match compute_mj_inner(s, j) {
            Ok((default, sharper)) => {
                let m = match s.mj_rule {
                    MjRule::Default => default,
                    MjRule::Sharper => sharper,
                };
                if g.c * m > 1.0 + 1e-12 {
                    out.push(Violation::Step { label: g.label.clone(), c: g.c, bound: 1.0 / m });
                }
            }
            Err(Some(v)) => out.push(v),
            Err(None) => {}
        }
    }
}

/// All violated hypotheses; empty iff the setup is valid.
pub fn validate_setup(s: &DualSetup, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.n == 0 {
        out.push(Violation::Structure { band: 0, detail: "N must be positive".into() });
        return out;
    }
    check_structure(s, &mut out);
    if !out.is_empty() {
        return out;
    }
    check_partition(s, tol, &mut out);
    check_support(s, &mut out);
    check_coefficients(s, tol, &mut out);
    check_steps(s, &mut out);
    out
}

/// Builds `ĥ_j` from the coefficient table without validating.
pub fn assemble_duals(s: &DualSetup) -> GsiSystem {
    let n = s.n as i64;
    let generators = (0..s.generators.len())
        .map(|j| {
            let g = &s.generators[j];
            let mut parts = Vec::new();
            for i in s.active_bands(j) {
                let band = &s.bands[i];
                let Some(m) = band.member_of(j) else { continue };
                let terms: Vec<PiecewisePoly> = (-n + 1..n)
                    .filter_map(|k| {
                        let a = s.coeff(m, k);
                        let p = band.member_at(m.position + k)?;
                        (a != 0.0).then(|| s.generators[p.generator].ghat.scale(a))
                    })
                    .collect();
                parts.push(PiecewisePoly::sum(&terms).restrict(band.interval));
            }
            Generator::new(g.c, g.label.clone(), PiecewisePoly::sum(&parts))
        })
        .collect();
    GsiSystem {
        family_rule: FamilyRule::Explicit,
        generators,
        blind_set: s.blind_set.clone(),
        band_s: s.bands.iter().map(|b| b.interval).collect(),
    }
}

/// The dual system of a valid setup.
pub fn construct_duals(s: &DualSetup) -> Result<GsiSystem> {
    let v = validate_setup(s, SETUP_TOL);
    if !v.is_empty() {
        return Err(GsiError::SetupInvalid(v));
    }
    Ok(assemble_duals(s))
}

/// `b_n` for `n = -N+1 ..= N-1`, stored at index `n + N - 1`.
fn bn(b_coeffs: &[f64], big_n: usize, n: i64) -> f64 {
    b_coeffs[(n + big_n as i64 - 1) as usize]
}

fn check_b_coeffs(b_coeffs: &[f64], big_n: usize, tol: f64) -> Result<()> {
    if b_coeffs.len() != 2 * big_n - 1 {
        return Err(GsiError::CoefficientViolation(format!(
            "expected {} coefficients, got {}",
            2 * big_n - 1,
            b_coeffs.len()
        )));
    }
    if (bn(b_coeffs, big_n, 0) - 1.0).abs() > tol {
        return Err(GsiError::CoefficientViolation("b_0 must equal 1".into()));
    }
    for n in 1..big_n as i64 {
        let s = bn(b_coeffs, big_n, n) + bn(b_coeffs, big_n, -n);
        if (s - 2.0).abs() > tol {
            return Err(GsiError::CoefficientViolation(format!("b_{{-{n}}} + b_{n} = {s}, expected 2")));
        }
    }
    Ok(())
}

/// `ℓ = max{n : b_n ≠ 0}`.
pub fn wavelet_ell(b_coeffs: &[f64], big_n: usize) -> i64 {
    (-(big_n as i64) + 1..big_n as i64).filter(|&n| bn(b_coeffs, big_n, n) != 0.0).max().unwrap_or(0)
}

/// Largest admissible step `a^{-M} (1 + a^ℓ)^{-1}`.
pub fn wavelet_step_bound(a: f64, m: i32, ell: i64) -> f64 {
    a.powi(-m) / (1.0 + a.powi(ell as i32))
}

/// The bandlimited wavelet dual `b Σ_n b_n ψ̂(a^{-n} γ)` and whether `b`
/// is admissible.
pub fn wavelet_dual(
    psi: &PiecewisePoly,
    a: f64,
    m: i32,
    big_n: usize,
    b_coeffs: &[f64],
    b: f64,
) -> Result<(PiecewisePoly, bool)> {
    if !(a > 1.0) || big_n == 0 {
        return Err(GsiError::CoefficientViolation("need a > 1 and N >= 1".into()));
    }
    check_b_coeffs(b_coeffs, big_n, SETUP_TOL)?;
    let (lo, hi) = (a.powi(m - big_n as i32), a.powi(m));
    if let Some(s) = psi.support() {
        let neg = psi.restrict(Interval::new(s.lo.min(0.0), 0.0)).support();
        let pos = psi.restrict(Interval::new(0.0, s.hi.max(0.0))).support();
        let bad_neg = neg.is_some_and(|w| w.lo < -hi - merge_eps(hi) || w.hi > -lo + merge_eps(lo));
        let bad_pos = pos.is_some_and(|w| w.lo < lo - merge_eps(lo) || w.hi > hi + merge_eps(hi));
        if bad_neg || bad_pos {
            return Err(GsiError::SupportViolation(format!("psi must live in ±[{lo}, {hi}]")));
        }
    }
    // Σ_j ψ̂(a^j γ) on one full period |γ| ∈ [a^{M-N}, a^M].
    let dil: Vec<PiecewisePoly> = (-(big_n as i32)..=big_n as i32)
        .map(|j| psi.affine_substitute(a.powi(j), 0.0))
        .collect::<Result<_>>()?;
    let total = PiecewisePoly::sum(&dil);
    for w in [Interval::new(lo, hi), Interval::new(-hi, -lo)] {
        let (residual, at) = unity_gap(&total, w);
        if residual > SETUP_TOL {
            return Err(GsiError::PartitionViolation { residual, at });
        }
    }
    let terms: Vec<PiecewisePoly> = (-(big_n as i64) + 1..big_n as i64)
        .filter(|&n| bn(b_coeffs, big_n, n) != 0.0)
        .map(|n| Ok(psi.affine_substitute(a.powi(-n as i32), 0.0)?.scale(b * bn(b_coeffs, big_n, n))))
        .collect::<Result<_>>()?;
    let ell = wavelet_ell(b_coeffs, big_n);
    let valid = b > 0.0 && b <= wavelet_step_bound(a, m, ell) * (1.0 + 1e-12);
    Ok((PiecewisePoly::sum(&terms), valid))
}

/// General setup for the wavelet system `{D_{a^j} T_{bk} √b ψ}` with
/// `j ∈ j_range`: band `S_0 ⊂ (-∞, 0]` with knots `-a^{M-k}` and `φ_0 = id`,
/// band `S_1 ⊂ [0, ∞)` with knots `a^{M-N+k}` and `φ_1 = -id`.
pub fn wavelet_setup(
    psi: &PiecewisePoly,
    a: f64,
    m: i32,
    big_n: usize,
    b_coeffs: &[f64],
    b: f64,
    j_range: IntRange,
) -> Result<DualSetup> {
    check_b_coeffs(b_coeffs, big_n, f64::INFINITY)?;
    let n = big_n as i64;
    let mf = m as f64;
    let p = |e: f64| a.powf(e);
    let generators = j_range
        .iter()
        .map(|j| {
            let s = a.powi(j as i32);
            Ok(Generator::new(s * b, vec![j], psi.affine_substitute(s, 0.0)?.scale((s * b).sqrt())))
        })
        .collect::<Result<Vec<_>>>()?;
    let (jmin, jmax) = (j_range.lo, j_range.hi);
    let k0 = IntRange::new(jmin - n, jmax + 2 * n);
    let k1 = IntRange::new(-jmax - n, -jmin + 2 * n);
    let reach = p(mf - (jmin - n) as f64).max(p(mf - n as f64 + (-jmin + 2 * n) as f64));
    let inner = p(mf - jmax as f64);
    let outer = p(mf - n as f64 - jmin as f64);
    let window = (inner < outer).then_some(());
    let row = |sign: f64| -> Vec<f64> {
        (-n + 1..n).map(|k| a.powf(sign * k as f64 / 2.0) * bn(b_coeffs, big_n, (sign as i64) * k)).collect()
    };
    let members = |pos: &dyn Fn(i64) -> i64, coeffs: Vec<f64>| -> Vec<Member> {
        j_range
            .iter()
            .enumerate()
            .map(|(g, j)| Member { generator: g, position: pos(j), coeffs: coeffs.clone() })
            .collect()
    };
    let neg = Band {
        index: 0,
        interval: Interval::new(-reach, 0.0),
        knots: Knots::from_fn(k0, |k| -p(mf - k as f64)),
        // a^{(0)}_{j,n} = a^{-n/2} b_{-n}
        members: members(&|j| j, row(-1.0)),
        window: window.map(|_| Interval::new(-outer, -inner)),
    };
    let pos = Band {
        index: 1,
        interval: Interval::new(0.0, reach),
        knots: Knots::from_fn(k1, |k| p(mf - n as f64 + k as f64)),
        // a^{(1)}_{k,n} = a^{n/2} b_n
        members: members(&|j| -j, row(1.0)),
        window: window.map(|_| Interval::new(inner, outer)),
    };
    Ok(DualSetup {
        n: big_n,
        generators,
        bands: vec![neg, pos],
        mj_rule: MjRule::Sharper,
        pad_inactive: false,
        blind_set: vec![0.0],
    })
}

/// Window on which a truncated wavelet pair with `j ∈ j_range` is complete:
/// every generator meeting it has all of its dual's neighbours.
pub fn wavelet_complete_window(a: f64, m: i32, big_n: usize, j_range: IntRange) -> Option<Interval> {
    let n = big_n as i32;
    let lo = a.powi(m - (j_range.hi as i32 - n + 1));
    let hi = a.powi(m - n - (j_range.lo as i32 + n - 1));
    (lo < hi).then(|| Interval::new(lo, hi))
}

/// Result of the time-domain construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiDual {
    pub h: Vec<PiecewisePoly>,
    pub report: FrameReport,
}

/// Dual windows `h_p = Σ_n a_{p,n} g_{p+n}` for the modulation systems
/// `{E_{b_p m} g_p}`; duality is checked on the interior where no
/// neighbour is cut off by the truncation.
pub fn si_dual(
    x_knots: &[f64],
    big_n: usize,
    m_bound: f64,
    g_list: &[(f64, PiecewisePoly)],
    a_coeffs: &[Vec<f64>],
) -> Result<SiDual> {
    let n = big_n as i64;
    let count = g_list.len();
    if big_n == 0 || x_knots.len() < count + big_n {
        return Err(GsiError::KnotSpacingViolation(format!(
            "{} knots cannot support {count} windows with N = {big_n}",
            x_knots.len()
        )));
    }
    if x_knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(GsiError::KnotSpacingViolation("knots decrease".into()));
    }
    for p in 0..x_knots.len().saturating_sub(2 * big_n - 1) {
        let span = x_knots[p + 2 * big_n - 1] - x_knots[p];
        if span > m_bound * (1.0 + 1e-12) {
            return Err(GsiError::KnotSpacingViolation(format!("x_{{p+2N-1}} - x_p = {span} > M at p = {p}")));
        }
    }
    for (p, (bp, g)) in g_list.iter().enumerate() {
        if !(*bp > 0.0) || *bp * m_bound > 1.0 + 1e-12 {
            return Err(GsiError::StepTooLarge { step: *bp, bound: 1.0 / m_bound });
        }
        if let Some(s) = g.support() {
            let (lo, hi) = (x_knots[p], x_knots[p + big_n]);
            if s.lo < lo - merge_eps(lo) || s.hi > hi + merge_eps(hi) {
                return Err(GsiError::SupportViolation(format!("g_{p} leaves [x_{p}, x_{{p+N}}]")));
            }
        }
    }
    if a_coeffs.len() != count || a_coeffs.iter().any(|r| r.len() != 2 * big_n - 1) {
        return Err(GsiError::CoefficientViolation("need one row of 2N-1 coefficients per window".into()));
    }
    let a = |p: usize, k: i64| a_coeffs[p][(k + n - 1) as usize];
    for p in 0..count {
        if (a(p, 0) - 1.0).abs() > SETUP_TOL {
            return Err(GsiError::CoefficientViolation(format!("a_{{{p},0}} = {}, expected 1", a(p, 0))));
        }
        for k in 1..n {
            let q = p + k as usize;
            if q >= count {
                continue;
            }
            let (bp, bq) = (g_list[p].0, g_list[q].0);
            let lhs = (bq / bp).sqrt() * a(p, k) + (bp / bq).sqrt() * a(q, -k);
            if (lhs - 2.0).abs() > SETUP_TOL {
                return Err(GsiError::CoefficientViolation(format!("pair ({p}, {q}) sums to {lhs}, expected 2")));
            }
        }
    }
    if count < 3 * big_n {
        return Err(GsiError::KnotSpacingViolation("too few windows for an interior check".into()));
    }
    let interior = Interval::new(x_knots[2 * big_n - 1], x_knots[count - big_n]);
    let part: Vec<PiecewisePoly> = g_list.iter().map(|(bp, g)| g.scale(bp.powf(-0.5))).collect();
    let (residual, at) = unity_gap(&PiecewisePoly::sum(&part), interior);
    if residual > SETUP_TOL {
        return Err(GsiError::PartitionViolation { residual, at });
    }
    let h: Vec<PiecewisePoly> = (0..count)
        .map(|p| {
            let terms: Vec<PiecewisePoly> = (-n + 1..n)
                .filter_map(|k| {
                    let q = usize::try_from(p as i64 + k).ok().filter(|&q| q < count)?;
                    Some(g_list[q].1.scale(a(p, k)))
                })
                .collect();
            PiecewisePoly::sum(&terms)
        })
        .collect();
    // Modulations by b_p m are translations on the Fourier side; the
    // duality conditions read the same with time and frequency exchanged.
    let as_system = |fs: Vec<PiecewisePoly>| {
        GsiSystem::explicit(
            fs.into_iter().enumerate().map(|(p, f)| Generator::new(g_list[p].0, vec![p as i64], f)).collect(),
        )
    };
    let sys = as_system(g_list.iter().map(|(_, g)| g.clone()).collect());
    let dual = as_system(h.clone());
    let span = x_knots[count - 1 + big_n] - x_knots[0];
    let policy = TruncationPolicy::new(interior, span);
    let report = verify_duality(&sys, &dual, &policy, SETUP_TOL)?;
    Ok(SiDual { h, report })
}

/// The partition-of-unity generator built from a profile `f` on
/// `[a^{j0}, a^{j0+1}]`: `f(|γ|)` on the first octave, `1 - f(|γ|/a)` on
/// the second, zero elsewhere.
pub fn build_partition_generator(f_piece: &PiecewisePoly, a: f64, j0: i32) -> Result<PiecewisePoly> {
    let (a0, a1, a2) = (a.powi(j0), a.powi(j0 + 1), a.powi(j0 + 2));
    if let Some(s) = f_piece.support() {
        if s.lo < a0 - merge_eps(a0) || s.hi > a1 + merge_eps(a1) {
            return Err(GsiError::EndpointViolation(format!("profile must live on [{a0}, {a1}]")));
        }
    }
    let (f0, f1) = (f_piece.eval(a0), f_piece.left_limit(a1));
    if f0.abs() > SETUP_TOL || (f1 - 1.0).abs() > SETUP_TOL {
        return Err(GsiError::EndpointViolation(format!("f(a^j0) = {f0}, f(a^(j0+1)) = {f1}")));
    }
    let reflected = f_piece.affine_substitute(-1.0, a1 + a0)?;
    let w = Interval::new(a0, a1);
    let (residual, _) = unity_gap(&reflected.add(f_piece), w);
    if residual > SETUP_TOL {
        return Err(GsiError::ReflectionViolation { residual });
    }
    let right = f_piece.add(&PiecewisePoly::indicator(a1, a2)).sub(&f_piece.dilate(a)?);
    let psi = right.add(&right.affine_substitute(-1.0, 0.0)?);
    // Σ_m Σ_j ψ̂(a^j(γ - dm)) = 1 away from the accumulation points dℤ.
    let d = a2 + a1;
    let mut terms = Vec::new();
    for m in -1..=2 {
        for j in 0..=4 {
            terms.push(psi.affine_substitute(a.powi(j), -a.powi(j) * d * m as f64)?);
        }
    }
    let test = Interval::new(a0, d - a0);
    let (residual, at) = unity_gap(&PiecewisePoly::sum(&terms), test);
    if residual > SETUP_TOL {
        return Err(GsiError::PartitionViolation { residual, at });
    }
    Ok(psi)
}

/// Linear profile `(γ - a^{j0}) / (a^{j0+1} - a^{j0})`.
pub fn linear_profile(a: f64, j0: i32) -> PiecewisePoly {
    let (a0, a1) = (a.powi(j0), a.powi(j0 + 1));
    PiecewisePoly::new(vec![a0, a1], vec![vec![0.0, 1.0 / (a1 - a0)]]).expect("valid profile")
}

/// Cubic smoothstep `3t² - 2t³` in `t = (γ - a^{j0}) / (a^{j0+1} - a^{j0})`.
pub fn smoothstep_profile(a: f64, j0: i32) -> PiecewisePoly {
    let (a0, a1) = (a.powi(j0), a.powi(j0 + 1));
    let w = a1 - a0;
    PiecewisePoly::new(vec![a0, a1], vec![vec![0.0, 0.0, 3.0 / (w * w), -2.0 / (w * w * w)]]).expect("valid profile")
}

/// Modulation spacing `d = a^{j0+1}(a + 1)` of the wave-packet examples.
pub fn wave_packet_spacing(a: f64, j0: i32) -> f64 {
    a.powi(j0 + 1) * (a + 1.0)
}

fn check_wave_packet_params(psi: &PiecewisePoly, a: f64, j0: i32, d: f64) -> Result<()> {
    let expected = wave_packet_spacing(a, j0);
    if (d - expected).abs() > 1e-12 * expected {
        return Err(GsiError::SupportViolation(format!("d = {d}, the partition needs {expected}")));
    }
    let a2 = a.powi(j0 + 2);
    if psi.support().is_some_and(|s| s.lo < -a2 - merge_eps(a2) || s.hi > a2 + merge_eps(a2)) {
        return Err(GsiError::SupportViolation(format!("psi must live in [-{a2}, {a2}]")));
    }
    Ok(())
}

/// The two dual generators of the wave-packet construction, with
/// `ψ̃ = √b ψ`:
/// `φ̂₁ = b₋₁ψ̃̂(aγ) + ψ̃̂(γ) + b₁ψ̃̂(γ/a)` and
/// `φ̂₀ = b₋₁ψ̃̂(aγ) + ψ̃̂(γ) + [c₁ψ̃̂(γ-d) + c₋₁ψ̃̂(γ+d)] χ_{(-d,d]}`.
///
/// The cut to `(-d, d]` comes from `ĥ_{(0,m)}` vanishing off the two bands
/// `S_{m-1} ∪ S_m`; without it `φ̂₀` reaches into the neighbouring bands.
pub fn wave_packet_duals(
    psi: &PiecewisePoly,
    a: f64,
    j0: i32,
    d: f64,
    b: f64,
    b1: f64,
    c1: f64,
) -> Result<(PiecewisePoly, PiecewisePoly)> {
    if ![a, b, b1, c1].iter().all(|v| v.is_finite()) || !(b > 0.0) {
        return Err(GsiError::CoefficientViolation("parameters must be finite with b > 0".into()));
    }
    check_wave_packet_params(psi, a, j0, d)?;
    let (bm1, cm1) = (2.0 - b1, 2.0 - c1);
    let pt = psi.scale(b.sqrt());
    let core = pt.affine_substitute(a, 0.0)?.scale(bm1).add(&pt);
    let phi1 = core.add(&pt.dilate(a)?.scale(b1));
    let shifts = pt.translate(d).scale(c1).add(&pt.translate(-d).scale(cm1)).restrict(Interval::new(-d, d));
    let phi0 = core.add(&shifts);
    Ok((phi0, phi1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleVariant {
    /// `b[ψ̂(aγ) + ψ̂(γ) + (ψ̂(γ-d) + ψ̂(γ+d)) χ_{(-d,d]}]`
    Shifted,
    /// `b[ψ̂(aγ) + ψ̂(γ) + ψ̂(γ/a)]`
    Dilated,
}

/// Step bound of the single-generator duals.
pub fn single_generator_bound(a: f64, j0: i32, variant: SingleVariant) -> f64 {
    match variant {
        SingleVariant::Shifted => a.powi(-j0) / (2.0 * a * a + a - 1.0),
        SingleVariant::Dilated => a.powi(-j0 - 2) / (a + 1.0),
    }
}

/// Step bound of the two-generator construction: the `j ≥ 1` duals carry
/// `ψ̂(γ/a)` whenever `b₁ ≠ 0`, which forces the tighter dilated bound.
pub fn two_generator_bound(a: f64, j0: i32, b1: f64) -> f64 {
    let shifted = single_generator_bound(a, j0, SingleVariant::Shifted);
    if b1 == 0.0 {
        shifted
    } else {
        shifted.min(single_generator_bound(a, j0, SingleVariant::Dilated))
    }
}

/// The single-generator dual (both collapse the two-generator construction
/// at `b₁ = b₋₁ = c₁ = c₋₁ = 1`).
pub fn single_generator_dual(
    psi: &PiecewisePoly,
    a: f64,
    j0: i32,
    d: f64,
    b: f64,
    variant: SingleVariant,
) -> Result<PiecewisePoly> {
    check_wave_packet_params(psi, a, j0, d)?;
    let bound = single_generator_bound(a, j0, variant);
    if !(b > 0.0) || b > bound * (1.0 + 1e-12) {
        return Err(GsiError::StepTooLarge { step: b, bound });
    }
    Ok(single_generator_dual_unchecked(psi, a, d, b, variant))
}

/// As [`single_generator_dual`] without the step check, for probing
/// behaviour beyond the bound.
pub fn single_generator_dual_unchecked(psi: &PiecewisePoly, a: f64, d: f64, b: f64, variant: SingleVariant) -> PiecewisePoly {
    let core = psi.affine_substitute(a, 0.0).expect("a > 0").add(psi);
    let tail = match variant {
        SingleVariant::Shifted => psi.translate(d).add(&psi.translate(-d)).restrict(Interval::new(-d, d)),
        SingleVariant::Dilated => psi.dilate(a).expect("a > 0"),
    };
    core.add(&tail).scale(b)
}

/// Index set of a truncated wave-packet family: `j ∈ 0..=j_max`,
/// `m ∈ m_range`, labels `[j, m - m_range.lo]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacketGrid {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub j_max: i64,
    pub m_range: IntRange,
}

impl WavePacketGrid {
    fn d_list(&self) -> Vec<f64> {
        self.m_range.iter().map(|m| self.d * m as f64).collect()
    }
}

/// `ĝ_{(j,m)} = a^{j/2} ψ̂(a^j(γ - dm))`, `c = a^j b`.
pub fn wave_packet_system(psi: &PiecewisePoly, grid: &WavePacketGrid) -> Result<GsiSystem> {
    let sys = GsiSystem::from_rule(FamilyRule::SeparableWavePacket {
        a: grid.a,
        b: grid.b,
        d_list: grid.d_list(),
        psi: psi.clone(),
        j_range: IntRange::new(0, grid.j_max),
        dilate_modulation: true,
    })?;
    let blind = grid.m_range.iter().map(|m| grid.d * m as f64).collect();
    Ok(sys.with_blind_set(blind))
}

/// Dual family: `ĥ_{(0,m)} = s φ̂₀(γ - dm)` and
/// `ĥ_{(j,m)} = s a^{j/2} φ̂₁(a^j(γ - dm))` for `j ≥ 1`.
pub fn wave_packet_dual_system(
    phi0: &PiecewisePoly,
    phi1: &PiecewisePoly,
    grid: &WavePacketGrid,
    scale: f64,
) -> Result<GsiSystem> {
    let mut gens = Vec::new();
    for j in 0..=grid.j_max {
        let s = grid.a.powi(j as i32);
        let phi = if j == 0 { phi0 } else { phi1 };
        for (idx, m) in grid.m_range.iter().enumerate() {
            let ghat = phi.affine_substitute(s, -s * grid.d * m as f64)?.scale(scale * s.sqrt());
            gens.push(Generator::new(s * grid.b, vec![j, idx as i64], ghat));
        }
    }
    let blind = grid.m_range.iter().map(|m| grid.d * m as f64).collect();
    Ok(GsiSystem::explicit(gens).with_blind_set(blind))
}

/// The wave-packet family as a general setup: bands `(di, d(i+1)]`, knots
/// `-a^{j0+3-k} + d(i+1)` for `k > 0` and `a^{j0+k} + di` for `k ≤ 0`,
/// `φ_i(j, i) = -j`, `φ_i(j, i+1) = 1 + j`.
pub fn wave_packet_setup(psi: &PiecewisePoly, a: f64, j0: i32, grid: &WavePacketGrid, b1: f64, c1: f64) -> Result<DualSetup> {
    check_wave_packet_params(psi, a, j0, grid.d)?;
    let (bm1, cm1) = (2.0 - b1, 2.0 - c1);
    let d = grid.d;
    let sys = wave_packet_system(&psi.scale(grid.b.sqrt()), grid)?;
    let idx = |j: i64, m: i64| -> Option<usize> {
        if !(0..=grid.j_max).contains(&j) || !grid.m_range.contains(m) {
            return None;
        }
        Some((j * (grid.m_range.hi - grid.m_range.lo + 1) + (m - grid.m_range.lo)) as usize)
    };
    let ra = a.sqrt();
    let row_left = |j: i64| if j == 0 { vec![bm1 / ra, 1.0, c1] } else { vec![bm1 / ra, 1.0, ra * b1] };
    let row_right = |j: i64| if j == 0 { vec![cm1, 1.0, bm1 / ra] } else { vec![ra * b1, 1.0, bm1 / ra] };
    let knots = |i: i64| {
        let span = IntRange::new(-grid.j_max - 4, grid.j_max + 6);
        Knots::from_fn(span, move |k| {
            if k > 0 {
                -a.powi(j0 + 3 - k as i32) + d * (i + 1) as f64
            } else {
                a.powi(j0 + k as i32) + d * i as f64
            }
        })
    };
    let mut bands = Vec::new();
    // Below a^{j0+1-j_max} the missing level j_max + 1 would be needed.
    let edge = a.powi(j0 + 1 - grid.j_max as i32);
    for i in grid.m_range.lo - 1..=grid.m_range.hi {
        let mut members = Vec::new();
        for j in 0..=grid.j_max {
            if let Some(g) = idx(j, i) {
                members.push(Member { generator: g, position: -j, coeffs: row_left(j) });
            }
            if let Some(g) = idx(j, i + 1) {
                members.push(Member { generator: g, position: 1 + j, coeffs: row_right(j) });
            }
        }
        members.sort_by_key(|m| m.position);
        let interior = grid.m_range.contains(i) && grid.m_range.contains(i + 1);
        let lo = d * i as f64;
        bands.push(Band {
            index: i,
            interval: Interval::new(lo, lo + d),
            knots: knots(i),
            members,
            window: interior.then(|| Interval::new(lo + edge, lo + d - edge)),
        });
    }
    Ok(DualSetup { n: 2, generators: sys.generators, bands, mj_rule: MjRule::Sharper, pad_inactive: false, blind_set: sys.blind_set })
}

/// Orders members by label so that relabeled setups compare equal.
pub fn relabel(s: &DualSetup, perm: &[usize]) -> DualSetup {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let generators = perm.iter().map(|&old| s.generators[old].clone()).collect();
    let bands = s
        .bands
        .iter()
        .map(|b| Band {
            members: b.members.iter().map(|m| Member { generator: inv[m.generator], ..m.clone() }).collect(),
            ..b.clone()
        })
        .collect();
    DualSetup { generators, bands, ..s.clone() }
}

/// Per-label map of the dual generators.
pub fn duals_by_label(sys: &GsiSystem) -> BTreeMap<Vec<i64>, PiecewisePoly> {
    sys.generators.iter().map(|g| (g.label.clone(), g.ghat.clone())).collect()
}
