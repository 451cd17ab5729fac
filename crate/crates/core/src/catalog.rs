//! Concrete systems: the non-frame of N-adic translates, the α-LIC example,
//! the Shannon wave packet tight frame and a shift-invariant orthonormal
//! basis.

use serde::{Deserialize, Serialize};

use crate::gsi::{FamilyRule, Generator, GsiSystem, IntRange};
use crate::piecewise::{merge_eps, Interval, PiecewisePoly};

fn spiral(i: i64) -> i64 {
    // 0, 1, -1, 2, -2, ...
    if i % 2 == 1 {
        (i + 1) / 2
    } else {
        -i / 2
    }
}

/// Greedy offsets `t_1, ..., t_count` with `t_i + N^i ℤ` pairwise disjoint:
/// each `t_i` is the first integer of the enumeration `0, 1, -1, 2, ...`
/// not yet covered by an earlier coset.
pub fn nadic_translates(n: i64, count: usize) -> Vec<i64> {
    assert!(n >= 2, "N must be at least 2");
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(count);
    let mut next = 0;
    while out.len() < count {
        let z = spiral(next);
        next += 1;
        if out.iter().any(|&(t, m)| (z - t).rem_euclid(m) == 0) {
            continue;
        }
        let modulus = n.checked_pow(out.len() as u32 + 1).expect("N^count overflows i64");
        out.push((z, modulus));
    }
    out.into_iter().map(|(t, _)| t).collect()
}

/// Unit indicators `χ_[m, m+1)` with `c = N^j` for `j = 1..=j_max`, each
/// level tagged with its phase offset `t_j`. Only `|ĝ|` is stored, which is
/// all the Calderón sum and the LIC see.
pub fn build_example31(n: i64, j_max: i64, m_range: IntRange) -> GsiSystem {
    let t = nadic_translates(n, j_max.max(0) as usize);
    let mut gens = Vec::new();
    for j in 1..=j_max {
        for m in m_range.iter() {
            let mut g = Generator::new((n as f64).powi(j as i32), vec![j, m], PiecewisePoly::indicator(m as f64, m as f64 + 1.0));
            g.phase = Some(t[(j - 1) as usize]);
            gens.push(g);
        }
    }
    GsiSystem::explicit(gens)
}

/// Integers `m` whose unit cell `[m, m+1)` meets `w`.
pub fn unit_cells(w: Interval) -> IntRange {
    IntRange::new(w.lo.floor() as i64, (w.hi.ceil() as i64 - 1).max(w.lo.floor() as i64))
}

/// `ĝ_{j,p,ℓ} = (N-1)^{1/2} χ_[ℓ + p N^{-j}, ℓ + (p+1) N^{-j})`, `c = N^j`,
/// for `j = 1..=j_max`, `p = 0..N^j - 1` and every `ℓ` whose cell meets `w`.
/// Labels are `[j, ℓ, p]`.
pub fn build_example33(n: i64, j_max: i64, w: Interval) -> GsiSystem {
    let amp = ((n - 1) as f64).sqrt();
    let mut gens = Vec::new();
    for j in 1..=j_max {
        let c = (n as f64).powi(j as i32);
        let count = n.pow(j as u32);
        for l in unit_cells(w).iter() {
            for p in 0..count {
                let lo = l as f64 + p as f64 / c;
                let hi = l as f64 + (p + 1) as f64 / c;
                gens.push(Generator::new(c, vec![j, l, p], PiecewisePoly::indicator(lo, hi).scale(amp)));
            }
        }
    }
    GsiSystem::explicit(gens)
}

/// `t_0` of the truncated example: `(N-1) Σ_{j ≤ j_max} N^{-j} = 1 - N^{-j_max}`.
pub fn example33_level(n: i64, j_max: i64) -> f64 {
    1.0 - (n as f64).powi(-(j_max as i32))
}

/// `d_m = sign(m)(2^{|m|} - 3/4)` for `m ≠ 0`.
pub fn shannon_modulation(m: i64) -> f64 {
    m.signum() as f64 * (2f64.powi(m.unsigned_abs() as i32) - 0.75)
}

fn shannon_d_list(m_max: i64) -> Vec<f64> {
    (-m_max..=m_max).filter(|&m| m != 0).map(shannon_modulation).collect()
}

/// `ĝ_{(j,m)} = 2^{j/2} χ_[-1/4, 1/4)(2^j γ - d_m)`, `c = 2^j`, over
/// `j_range × {0 < |m| ≤ m_max}`. Labels are `[j, idx]` with `idx`
/// running over `-m_max, ..., -1, 1, ..., m_max`.
pub fn build_shannon_wavepacket(m_max: i64, j_range: IntRange) -> GsiSystem {
    GsiSystem::from_rule(FamilyRule::SeparableWavePacket {
        a: 2.0,
        b: 1.0,
        d_list: shannon_d_list(m_max),
        psi: PiecewisePoly::indicator(-0.25, 0.25),
        j_range,
        dilate_modulation: false,
    })
    .expect("dilation 2^j is nonzero")
}

/// Frequency supports `I_{m,j} = 2^{-j}[d_m - 1/4, d_m + 1/4)`.
pub fn shannon_intervals(m_max: i64, j_range: IntRange) -> Vec<Interval> {
    let mut out = Vec::new();
    for j in j_range.iter() {
        let s = 2f64.powi(-(j as i32));
        for d in shannon_d_list(m_max) {
            out.push(Interval::new(s * (d - 0.25), s * (d + 0.25)));
        }
    }
    out
}

/// The part of `(0, ∞)` covered by `|m| ≤ m_max` in octave `2^k`:
/// `2^k [1/2, 1 - 2^{-m_max-1})`.
pub fn shannon_octave_cover(m_max: i64, k: i32) -> Interval {
    let s = 2f64.powi(k);
    Interval::new(s * 0.5, s * (1.0 - 2f64.powi(-(m_max as i32) - 1)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub disjoint: bool,
    pub cover: bool,
    pub gaps: Vec<Interval>,
    /// Total measure of pairwise overlaps.
    pub overlap: f64,
}

/// Sweep over sorted endpoints: overlap measure and uncovered parts of `w`.
pub fn covering_check(intervals: &[Interval], w: Interval) -> Covering {
    let mut events: Vec<(f64, i32)> = intervals
        .iter()
        .filter(|iv| !iv.is_empty())
        .flat_map(|iv| [(iv.lo, 1), (iv.hi, -1)])
        .collect();
    // Closings sort before openings at a shared point.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut depth = 0;
    let mut prev = f64::NEG_INFINITY;
    let mut overlap = 0.0;
    let mut gaps: Vec<Interval> = Vec::new();
    let mut push_gap = |lo: f64, hi: f64| {
        let g = Interval::new(lo, hi).intersect(&w);
        if g.len() > merge_eps(g.hi) {
            gaps.push(g);
        }
    };
    for &(x, delta) in &events {
        if depth == 0 && x > prev {
            push_gap(prev, x);
        }
        if depth > 1 && prev.is_finite() {
            overlap += (depth - 1) as f64 * (x - prev);
        }
        depth += delta;
        prev = x;
    }
    push_gap(prev, f64::INFINITY);
    let eps = merge_eps(w.hi.abs().max(w.lo.abs()));
    Covering { disjoint: overlap < eps, cover: gaps.is_empty(), gaps, overlap }
}

/// `{T_k χ_[m, m+1)}` with `c = 1` for `m ∈ m_range`: an orthonormal basis of
/// the functions with `f̂` supported in `[m_lo, m_hi + 1)`.
pub fn si_onb(m_range: IntRange) -> GsiSystem {
    let ghats: Vec<PiecewisePoly> = m_range.iter().map(|m| PiecewisePoly::indicator(m as f64, m as f64 + 1.0)).collect();
    let band = Interval::new(m_range.lo as f64, m_range.hi as f64 + 1.0);
    GsiSystem::from_rule(FamilyRule::ShiftInvariant { c: 1.0, ghats }).expect("no dilations").with_band(vec![band])
}
