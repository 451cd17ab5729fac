//! Compactly supported real piecewise polynomials on the frequency line.
//!
//! Piece `i` lives on `[breakpoints[i], breakpoints[i+1])` and is stored in
//! local coordinates: its value at `x` is `sum_k c[k] * (x - breakpoints[i])^k`.
//! Local coordinates keep Horner evaluation well conditioned far from the
//! origin (wave packets sit at frequencies like `d * m` with large `m`).
//! The function vanishes outside `[breakpoints[0], breakpoints[m]]`.

use serde::{Deserialize, Serialize};

use crate::error::{GsiError, Result};

/// Maximum polynomial degree of any stored piece.
pub const DEG_CAP: usize = 8;

/// Breakpoints closer than this are treated as one.
pub fn merge_eps(b: f64) -> f64 {
    1e-12 * b.abs().max(1.0)
}

/// A closed window `[lo, hi]`; `lo == hi` is the empty window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(w: Interval) -> Self {
        [w.lo, w.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Intersection; disjoint inputs give an empty interval at `self.lo`.
    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if hi <= lo {
            Interval { lo, hi: lo }
        } else {
            Interval { lo, hi }
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo.max(other.lo) < self.hi.min(other.hi)
    }

    pub fn shift(&self, s: f64) -> Interval {
        Interval { lo: self.lo + s, hi: self.hi + s }
    }
}

/// Sup and inf of a function on a window, with attaining points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrema {
    pub inf: f64,
    pub arg_inf: f64,
    pub sup: f64,
    pub arg_sup: f64,
}

impl Extrema {
    fn point(x: f64, v: f64) -> Self {
        Extrema { inf: v, arg_inf: x, sup: v, arg_sup: x }
    }

    fn absorb(&mut self, x: f64, v: f64) {
        if v < self.inf {
            self.inf = v;
            self.arg_inf = x;
        }
        if v > self.sup {
            self.sup = v;
            self.arg_sup = x;
        }
    }

    pub fn merge(&mut self, other: &Extrema) {
        self.absorb(other.arg_inf, other.inf);
        self.absorb(other.arg_sup, other.sup);
    }
}

pub(crate) mod poly {
    //! Dense coefficient-vector helpers, ascending degree.

    pub fn trim(c: &mut Vec<f64>) {
        while c.last() == Some(&0.0) {
            c.pop();
        }
    }

    pub fn degree(c: &[f64]) -> usize {
        c.len().saturating_sub(1)
    }

    pub fn horner(c: &[f64], u: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * u + k)
    }

    pub fn add_into(dst: &mut Vec<f64>, src: &[f64]) {
        if dst.len() < src.len() {
            dst.resize(src.len(), 0.0);
        }
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }

    pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    /// Coefficients of `u -> p(u + s)`.
    pub fn taylor_shift(c: &[f64], s: f64) -> Vec<f64> {
        let mut out = c.to_vec();
        if s == 0.0 {
            return out;
        }
        let n = out.len();
        for i in 0..n.saturating_sub(1) {
            for k in (i..n - 1).rev() {
                out[k] += s * out[k + 1];
            }
        }
        out
    }

    /// Coefficients of `u -> p(a u)`.
    pub fn scale_arg(c: &[f64], a: f64) -> Vec<f64> {
        let mut pw = 1.0;
        c.iter()
            .map(|&k| {
                let v = k * pw;
                pw *= a;
                v
            })
            .collect()
    }

    pub fn derivative(c: &[f64]) -> Vec<f64> {
        c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
    }

    /// `int_0^u p`.
    pub fn antiderivative_at(c: &[f64], u: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &v) in c.iter().enumerate().rev() {
            acc = acc * u + v / (k as f64 + 1.0);
        }
        acc * u
    }

    pub fn integral(c: &[f64], u0: f64, u1: f64) -> f64 {
        antiderivative_at(c, u1) - antiderivative_at(c, u0)
    }

    fn bisect(c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
        let mut flo = horner(c, lo);
        for _ in 0..200 {
            if hi - lo <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = horner(c, mid);
            if fm == 0.0 {
                return mid;
            }
            if (fm < 0.0) == (flo < 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Points in `(lo, hi)` where `p` changes sign, ascending.
    ///
    /// The critical points of `p` split `[lo, hi]` into monotone runs, each
    /// holding at most one sign change, so close root pairs are not missed.
    pub fn sign_changes(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let mut c = c.to_vec();
        trim(&mut c);
        if c.len() <= 1 || hi <= lo {
            return Vec::new();
        }
        if c.len() == 2 {
            let r = -c[0] / c[1];
            return if r > lo && r < hi { vec![r] } else { Vec::new() };
        }
        let mut nodes = vec![lo];
        nodes.extend(sign_changes(&derivative(&c), lo, hi));
        nodes.push(hi);
        let mut out = Vec::new();
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (horner(&c, a), horner(&c, b));
            if fa * fb < 0.0 {
                out.push(bisect(&c, a, b));
            }
        }
        out
    }
}

/// A compactly supported real piecewise polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoly")]
pub struct PiecewisePoly {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawPoly {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

impl TryFrom<RawPoly> for PiecewisePoly {
    type Error = GsiError;

    fn try_from(raw: RawPoly) -> Result<Self> {
        PiecewisePoly::new(raw.breakpoints, raw.pieces)
    }
}

/// Sorted, deduplicated union of breakpoints.
fn merged_grid<'a>(polys: impl IntoIterator<Item = &'a PiecewisePoly>, clip: Option<Interval>) -> Vec<f64> {
    let mut pts: Vec<f64> = polys.into_iter().flat_map(|p| p.breakpoints.iter().copied()).collect();
    if let Some(w) = clip {
        pts.retain(|&x| x > w.lo && x < w.hi);
        pts.push(w.lo);
        pts.push(w.hi);
    }
    pts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for x in pts {
        match out.last() {
            Some(&last) if x - last < merge_eps(last) => {}
            _ => out.push(x),
        }
    }
    out
}

impl PiecewisePoly {
    /// Validates and normalizes; coefficients are local to each piece.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.is_empty() && pieces.is_empty() {
            return Ok(Self::zero());
        }
        if breakpoints.len() != pieces.len() + 1 {
            return Err(GsiError::MalformedPoly(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(GsiError::MalformedPoly("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GsiError::MalformedPoly("breakpoints must be strictly increasing".into()));
        }
        let mut pieces = pieces;
        for p in &mut pieces {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(GsiError::MalformedPoly("non-finite coefficient".into()));
            }
            poly::trim(p);
            if poly::degree(p) > DEG_CAP {
                return Err(GsiError::DegreeCapExceeded { degree: poly::degree(p), cap: DEG_CAP });
            }
        }
        Ok(Self::assemble(breakpoints, pieces))
    }

    pub fn zero() -> Self {
        PiecewisePoly { breakpoints: Vec::new(), pieces: Vec::new() }
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        if hi <= lo {
            return Self::zero();
        }
        Self::assemble(vec![lo, hi], vec![vec![value]])
    }

    pub fn indicator(lo: f64, hi: f64) -> Self {
        Self::constant(lo, hi, 1.0)
    }

    /// One piece on `[lo, hi)` given by coefficients in the global variable.
    pub fn from_global(lo: f64, hi: f64, coeffs: &[f64]) -> Result<Self> {
        Self::new(vec![lo, hi], vec![poly::taylor_shift(coeffs, lo)])
    }

    /// Builds from pieces given in the global variable.
    pub fn from_global_pieces(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() != pieces.len() + 1 {
            return Err(GsiError::MalformedPoly("breakpoint/piece count mismatch".into()));
        }
        let local = pieces.iter().zip(&breakpoints).map(|(p, &b)| poly::taylor_shift(p, b)).collect();
        Self::new(breakpoints, local)
    }

    /// Internal constructor: trusts ordering, then normalizes.
    fn assemble(mut bps: Vec<f64>, mut pieces: Vec<Vec<f64>>) -> Self {
        for p in &mut pieces {
            poly::trim(p);
        }
        // Drop slivers narrower than the merge tolerance.
        let mut i = 0;
        while i < pieces.len() {
            if bps[i + 1] - bps[i] < merge_eps(bps[i]) {
                if i == 0 {
                    bps.remove(0);
                } else {
                    bps.remove(i);
                }
                pieces.remove(i);
            } else {
                i += 1;
            }
        }
        while pieces.first().is_some_and(|p| p.is_empty()) {
            pieces.remove(0);
            bps.remove(0);
        }
        while pieces.last().is_some_and(|p| p.is_empty()) {
            pieces.pop();
            bps.pop();
        }
        if pieces.is_empty() {
            return Self::zero();
        }
        // Merge neighbours that continue the same polynomial.
        let mut out_b = vec![bps[0]];
        let mut out_p: Vec<Vec<f64>> = vec![pieces[0].clone()];
        for i in 1..pieces.len() {
            let last = out_p.last().unwrap();
            let start = *out_b.last().unwrap();
            let shifted = poly::taylor_shift(last, bps[i] - start);
            if same_poly(&shifted, &pieces[i]) {
                continue;
            }
            out_b.push(bps[i]);
            out_p.push(pieces[i].clone());
        }
        out_b.push(*bps.last().unwrap());
        PiecewisePoly { breakpoints: out_b, pieces: out_p }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Local-coordinate coefficient vectors.
    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.pieces.iter().map(|p| poly::degree(p)).max().unwrap_or(0)
    }

    /// Hull of the stored pieces, `None` for the zero function.
    pub fn support(&self) -> Option<Interval> {
        Some(Interval { lo: *self.breakpoints.first()?, hi: *self.breakpoints.last()? })
    }

    fn piece_index(&self, x: f64) -> Option<usize> {
        let n = self.breakpoints.len();
        if n == 0 || x < self.breakpoints[0] || x >= self.breakpoints[n - 1] {
            return None;
        }
        Some(self.breakpoints.partition_point(|&b| b <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.piece_index(x) {
            Some(i) => poly::horner(&self.pieces[i], x - self.breakpoints[i]),
            None => 0.0,
        }
    }

    /// Limit from the left at `x`, i.e. the value of the piece ending at `x`.
    pub fn left_limit(&self, x: f64) -> f64 {
        let n = self.breakpoints.len();
        if n == 0 || x <= self.breakpoints[0] || x > self.breakpoints[n - 1] {
            return 0.0;
        }
        let i = self.breakpoints.partition_point(|&b| b < x) - 1;
        poly::horner(&self.pieces[i], x - self.breakpoints[i])
    }

    /// Local coefficients on each grid cell, rebased to the cell's left end.
    fn on_grid(&self, grid: &[f64]) -> Vec<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(grid.len().saturating_sub(1));
        let mut i = 0;
        for cell in grid.windows(2) {
            let mid = 0.5 * (cell[0] + cell[1]);
            while i < self.pieces.len() && self.breakpoints[i + 1] <= mid {
                i += 1;
            }
            if i < self.pieces.len() && self.breakpoints[i] <= mid {
                out.push(Some(poly::taylor_shift(&self.pieces[i], cell[0] - self.breakpoints[i])));
            } else {
                out.push(None);
            }
        }
        out
    }

    /// Pointwise sum of any number of functions.
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a PiecewisePoly>) -> PiecewisePoly {
        let terms: Vec<&PiecewisePoly> = terms.into_iter().filter(|p| !p.is_zero()).collect();
        match terms.len() {
            0 => return Self::zero(),
            1 => return terms[0].clone(),
            _ => {}
        }
        let grid = merged_grid(terms.iter().copied(), None);
        let mut acc: Vec<Vec<f64>> = vec![Vec::new(); grid.len() - 1];
        let mut cursor = vec![0usize; terms.len()];
        for (k, cell) in grid.windows(2).enumerate() {
            let mid = 0.5 * (cell[0] + cell[1]);
            for (t, p) in terms.iter().enumerate() {
                let i = &mut cursor[t];
                while *i < p.pieces.len() && p.breakpoints[*i + 1] <= mid {
                    *i += 1;
                }
                if *i < p.pieces.len() && p.breakpoints[*i] <= mid {
                    let c = poly::taylor_shift(&p.pieces[*i], cell[0] - p.breakpoints[*i]);
                    poly::add_into(&mut acc[k], &c);
                }
            }
        }
        Self::assemble(grid, acc)
    }

    pub fn add(&self, other: &PiecewisePoly) -> PiecewisePoly {
        Self::sum([self, other])
    }

    pub fn sub(&self, other: &PiecewisePoly) -> PiecewisePoly {
        Self::sum([self, &other.scale(-1.0)])
    }

    pub fn scale(&self, s: f64) -> PiecewisePoly {
        if s == 0.0 {
            return Self::zero();
        }
        let pieces = self.pieces.iter().map(|p| p.iter().map(|c| c * s).collect()).collect();
        Self::assemble(self.breakpoints.clone(), pieces)
    }

    /// Pointwise product; the summed degrees must stay within [`DEG_CAP`].
    pub fn mul(&self, other: &PiecewisePoly) -> Result<PiecewisePoly> {
        let degree = self.degree() + other.degree();
        if degree > DEG_CAP {
            return Err(GsiError::DegreeCapExceeded { degree, cap: DEG_CAP });
        }
        let (Some(a), Some(b)) = (self.support(), other.support()) else {
            return Ok(Self::zero());
        };
        let common = a.intersect(&b);
        if common.is_empty() {
            return Ok(Self::zero());
        }
        let (grid, cells) = product_cells(&[self, other], common);
        Ok(Self::assemble(grid, cells))
    }

    /// `x -> f(a x + t)`.
    pub fn affine_substitute(&self, a: f64, t: f64) -> Result<PiecewisePoly> {
        if a == 0.0 || !a.is_finite() {
            return Err(GsiError::ZeroDilation);
        }
        if self.is_zero() {
            return Ok(Self::zero());
        }
        let map = |b: f64| (b - t) / a;
        let n = self.pieces.len();
        let (bps, pieces) = if a > 0.0 {
            let bps: Vec<f64> = self.breakpoints.iter().map(|&b| map(b)).collect();
            let pieces = self.pieces.iter().map(|p| poly::scale_arg(p, a)).collect();
            (bps, pieces)
        } else {
            // Orientation flips: the new piece starts at the image of the
            // old right end, where the local variable equals the width.
            let bps: Vec<f64> = self.breakpoints.iter().rev().map(|&b| map(b)).collect();
            let pieces = (0..n)
                .rev()
                .map(|i| {
                    let w = self.breakpoints[i + 1] - self.breakpoints[i];
                    poly::scale_arg(&poly::taylor_shift(&self.pieces[i], w), a)
                })
                .collect();
            (bps, pieces)
        };
        if bps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GsiError::MalformedPoly("affine image collapsed breakpoints".into()));
        }
        Ok(Self::assemble(bps, pieces))
    }

    /// `x -> f(x - s)`, the translate by `s`.
    pub fn translate(&self, s: f64) -> PiecewisePoly {
        self.affine_substitute(1.0, -s).expect("unit dilation")
    }

    /// `x -> f(x / a)` for `a > 0`, stretching the support by `a`.
    pub fn dilate(&self, a: f64) -> Result<PiecewisePoly> {
        self.affine_substitute(1.0 / a, 0.0)
    }

    pub fn integrate(&self, w: Interval) -> f64 {
        if w.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let (b0, b1) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let lo = b0.max(w.lo);
            let hi = b1.min(w.hi);
            if hi > lo {
                total += poly::integral(p, lo - b0, hi - b0);
            }
        }
        total
    }

    /// Exact sup and inf on `w` with attaining points.
    pub fn extrema_with_args(&self, w: Interval) -> Extrema {
        if w.is_empty() {
            return Extrema::point(w.lo, self.eval(w.lo));
        }
        let mut ext: Option<Extrema> = None;
        let mut take = |x: f64, v: f64| match ext.as_mut() {
            Some(e) => e.absorb(x, v),
            None => ext = Some(Extrema::point(x, v)),
        };
        match self.support() {
            None => take(w.lo, 0.0),
            Some(h) => {
                if w.lo < h.lo {
                    take(w.lo, 0.0);
                }
                if w.hi > h.hi {
                    take(w.hi, 0.0);
                }
            }
        }
        for (i, p) in self.pieces.iter().enumerate() {
            let (b0, b1) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let lo = b0.max(w.lo);
            let hi = b1.min(w.hi);
            if hi <= lo {
                continue;
            }
            let (u0, u1) = (lo - b0, hi - b0);
            take(lo, poly::horner(p, u0));
            take(hi, poly::horner(p, u1));
            for u in poly::sign_changes(&poly::derivative(p), u0, u1) {
                take(b0 + u, poly::horner(p, u));
            }
        }
        ext.expect("nonempty window yields a candidate")
    }

    /// `(inf, sup)` on `w`.
    pub fn extrema_on(&self, w: Interval) -> (f64, f64) {
        let e = self.extrema_with_args(w);
        (e.inf, e.sup)
    }

    pub fn sup_abs(&self) -> f64 {
        match self.support() {
            None => 0.0,
            Some(h) => {
                let (lo, hi) = self.extrema_on(h);
                lo.abs().max(hi.abs())
            }
        }
    }

    /// `|f|`, splitting pieces at sign changes.
    pub fn abs(&self) -> PiecewisePoly {
        let mut bps = Vec::new();
        let mut pieces = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let (b0, b1) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let mut cuts = vec![0.0];
            cuts.extend(poly::sign_changes(p, 0.0, b1 - b0));
            cuts.push(b1 - b0);
            for c in cuts.windows(2) {
                let local = poly::taylor_shift(p, c[0]);
                let mid = 0.5 * (c[0] + c[1]);
                let sign = if poly::horner(p, mid) < 0.0 { -1.0 } else { 1.0 };
                bps.push(b0 + c[0]);
                pieces.push(local.iter().map(|v| v * sign).collect());
            }
        }
        if let Some(&last) = self.breakpoints.last() {
            bps.push(last);
        }
        dedup_slivers(&mut bps, &mut pieces);
        Self::assemble(bps, pieces)
    }

    /// Zero outside `[w.lo, w.hi)`.
    pub fn restrict(&self, w: Interval) -> PiecewisePoly {
        let Some(h) = self.support() else {
            return Self::zero();
        };
        let c = h.intersect(&w);
        if c.is_empty() {
            return Self::zero();
        }
        let grid = merged_grid([self], Some(c));
        let cells = self.on_grid(&grid).into_iter().map(Option::unwrap_or_default).collect();
        Self::assemble(grid, cells)
    }

    /// Evenly spaced samples on `w`, endpoints included.
    pub fn sample(&self, w: Interval, n: usize) -> Vec<(f64, f64)> {
        if n < 2 {
            return vec![(w.lo, self.eval(w.lo))];
        }
        (0..n)
            .map(|k| {
                let x = w.lo + (w.hi - w.lo) * k as f64 / (n - 1) as f64;
                (x, self.eval(x))
            })
            .collect()
    }
}

fn same_poly(a: &[f64], b: &[f64]) -> bool {
    let n = a.len().max(b.len());
    (0..n).all(|k| {
        let x = a.get(k).copied().unwrap_or(0.0);
        let y = b.get(k).copied().unwrap_or(0.0);
        (x - y).abs() <= 1e-13 * x.abs().max(y.abs()).max(1e-300)
    })
}

fn dedup_slivers(bps: &mut Vec<f64>, pieces: &mut Vec<Vec<f64>>) {
    let mut i = 0;
    while i < pieces.len() {
        if bps[i + 1] <= bps[i] {
            bps.remove(i + 1);
            pieces.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Cellwise product of the factors over the merged grid clipped to `w`.
fn product_cells(factors: &[&PiecewisePoly], w: Interval) -> (Vec<f64>, Vec<Vec<f64>>) {
    let grid = merged_grid(factors.iter().copied(), Some(w));
    let mut cells: Vec<Vec<f64>> = vec![vec![1.0]; grid.len().saturating_sub(1)];
    for f in factors {
        for (cell, c) in cells.iter_mut().zip(f.on_grid(&grid)) {
            *cell = match c {
                Some(c) if !cell.is_empty() => poly::mul(cell, &c),
                _ => Vec::new(),
            };
        }
    }
    (grid, cells)
}

fn common_window(factors: &[&PiecewisePoly], w: Interval) -> Option<Interval> {
    let mut acc = w;
    for f in factors {
        acc = acc.intersect(&f.support()?);
        if acc.is_empty() {
            return None;
        }
    }
    Some(acc)
}

/// Cells of `prod f_i` on `w` as `(cell, local coefficients)`, uncapped;
/// zero cells are dropped.
pub fn product_pieces(factors: &[&PiecewisePoly], w: Interval) -> Vec<(Interval, Vec<f64>)> {
    let Some(w) = common_window(factors, w) else {
        return Vec::new();
    };
    let (grid, cells) = product_cells(factors, w);
    grid.windows(2)
        .zip(cells)
        .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
        .map(|(g, c)| (Interval::new(g[0], g[1]), c))
        .collect()
}

/// `int_w prod f_i`, exact and without a degree cap.
pub fn integrate_product(factors: &[&PiecewisePoly], w: Interval) -> f64 {
    let Some(w) = common_window(factors, w) else {
        return 0.0;
    };
    let (grid, cells) = product_cells(factors, w);
    grid.windows(2).zip(&cells).map(|(g, c)| poly::integral(c, 0.0, g[1] - g[0])).sum()
}

/// `int_w |prod f_i|`, splitting each cell at sign changes of the product.
pub fn integrate_abs_product(factors: &[&PiecewisePoly], w: Interval) -> f64 {
    let Some(w) = common_window(factors, w) else {
        return 0.0;
    };
    let (grid, cells) = product_cells(factors, w);
    let mut total = 0.0;
    for (g, c) in grid.windows(2).zip(&cells) {
        if c.is_empty() {
            continue;
        }
        let width = g[1] - g[0];
        let mut cuts = vec![0.0];
        cuts.extend(poly::sign_changes(c, 0.0, width));
        cuts.push(width);
        for s in cuts.windows(2) {
            total += poly::integral(c, s[0], s[1]).abs();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(lo: f64, hi: f64, slope: f64) -> PiecewisePoly {
        PiecewisePoly::new(vec![lo, hi], vec![vec![0.0, slope]]).unwrap()
    }

    #[test]
    fn indicator_eval_is_half_open() {
        let f = PiecewisePoly::indicator(0.0, 1.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(-0.1), 0.0);
        assert_eq!(ramp(0.0, 1.0, 2.0).eval(0.25), 0.5);
    }

    #[test]
    fn adjacent_indicators_merge() {
        let f = PiecewisePoly::indicator(0.0, 1.0).add(&PiecewisePoly::indicator(1.0, 2.0));
        assert_eq!(f, PiecewisePoly::indicator(0.0, 2.0));
        let g = PiecewisePoly::indicator(0.0, 1.0);
        assert_eq!(g.add(&PiecewisePoly::zero()), g);
    }

    #[test]
    fn hat_from_two_ramps() {
        // Rising ramp on [0,1) plus falling ramp 2-x on [1,2).
        let up = ramp(0.0, 1.0, 1.0);
        let down = PiecewisePoly::from_global(1.0, 2.0, &[2.0, -1.0]).unwrap();
        let hat = up.add(&down);
        for k in 0..=2000 {
            let x = -0.5 + 3.0 * k as f64 / 2000.0;
            let direct = if (0.0..1.0).contains(&x) {
                x
            } else if (1.0..2.0).contains(&x) {
                2.0 - x
            } else {
                0.0
            };
            assert!((hat.eval(x) - direct).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn products() {
        let f = PiecewisePoly::indicator(0.0, 1.0);
        let g = PiecewisePoly::indicator(0.5, 2.0);
        assert_eq!(f.mul(&g).unwrap(), PiecewisePoly::indicator(0.5, 1.0));
        let s = PiecewisePoly::indicator(-0.25, 0.25);
        assert_eq!(s.mul(&s).unwrap(), s);
        let x = ramp(0.0, 1.0, 1.0);
        assert_eq!(x.mul(&x).unwrap().eval(0.5), 0.25);
    }

    #[test]
    fn mul_respects_degree_cap() {
        let p = PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(p.mul(&p), Err(GsiError::DegreeCapExceeded { degree: 10, cap: 8 })));
        assert!(PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0; 9].into_iter().chain([1.0]).collect()]).is_err());
    }

    #[test]
    fn affine_substitution() {
        let f = PiecewisePoly::indicator(0.0, 1.0);
        assert_eq!(f.affine_substitute(2.0, 0.0).unwrap(), PiecewisePoly::indicator(0.0, 0.5));
        assert_eq!(f.affine_substitute(1.0, -3.0).unwrap(), PiecewisePoly::indicator(3.0, 4.0));
        assert!(matches!(f.affine_substitute(0.0, 1.0), Err(GsiError::ZeroDilation)));

        // psi(2x - d) for the Shannon generator: support (d +- 1/4) / 2.
        let psi = PiecewisePoly::indicator(-0.25, 0.25);
        let d = 2.0f64.powi(3) - 0.75;
        let s = psi.affine_substitute(2.0, -d).unwrap().support().unwrap();
        assert_eq!((s.lo, s.hi), ((-0.25 + d) / 2.0, (0.25 + d) / 2.0));
    }

    #[test]
    fn reflection_of_a_ramp() {
        let f = ramp(1.0, 3.0, 1.0); // x - 1 on [1, 3)
        let g = f.affine_substitute(-1.0, 0.0).unwrap(); // -x - 1 on (-3, -1]
        for x in [-2.9, -2.0, -1.5, -1.01] {
            assert!((g.eval(x) - (-x - 1.0)).abs() < 1e-14);
        }
        assert_eq!(g.support().unwrap(), Interval::new(-3.0, -1.0));
    }

    #[test]
    fn integrals() {
        let f = PiecewisePoly::indicator(0.0, 1.0);
        assert_eq!(f.integrate(Interval::new(0.0, 1.0)), 1.0);
        assert_eq!(f.integrate(Interval::new(0.3, 0.3)), 0.0);
        assert_eq!(ramp(0.0, 1.0, 1.0).integrate(Interval::new(0.0, 1.0)), 0.5);
        assert_eq!(f.integrate(Interval::new(-5.0, 0.25)), 0.25);
    }

    #[test]
    fn extrema() {
        let f = PiecewisePoly::indicator(0.0, 1.0);
        assert_eq!(f.extrema_on(Interval::new(-1.0, 2.0)), (0.0, 1.0));
        assert_eq!(f.extrema_on(Interval::new(0.2, 0.8)), (1.0, 1.0));
        let p = PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0, 1.0, -1.0]]).unwrap();
        let (lo, hi) = p.extrema_on(Interval::new(0.0, 1.0));
        assert_eq!(lo, 0.0);
        assert!((hi - 0.25).abs() < 1e-15);
    }

    #[test]
    fn support_and_zero() {
        assert_eq!(PiecewisePoly::indicator(0.0, 1.0).support(), Some(Interval::new(0.0, 1.0)));
        assert_eq!(PiecewisePoly::zero().support(), None);
        let f = PiecewisePoly::new(vec![0.0, 1.0, 2.0, 3.0], vec![vec![], vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(f.support(), Some(Interval::new(1.0, 2.0)));
        let cancel = f.sub(&f);
        assert!(cancel.is_zero());
    }

    #[test]
    fn abs_splits_at_roots() {
        let f = PiecewisePoly::from_global(-1.0, 2.0, &[0.0, 1.0]).unwrap();
        let a = f.abs();
        assert!((a.eval(-0.5) - 0.5).abs() < 1e-15);
        assert!((a.eval(1.5) - 1.5).abs() < 1e-15);
        assert!((a.integrate(Interval::new(-1.0, 2.0)) - 2.5).abs() < 1e-14);
        let direct = integrate_abs_product(&[&f], Interval::new(-1.0, 2.0));
        assert!((direct - 2.5).abs() < 1e-14);
    }

    #[test]
    fn close_roots_are_found() {
        // (x - 0.5)(x - 0.5 - 1e-6) has two roots within one pre-grid cell.
        let e = 1e-6;
        let c = [0.5 * (0.5 + e), -(1.0 + e), 1.0];
        let r = poly::sign_changes(&c, 0.0, 1.0);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 0.5).abs() < 1e-10 && (r[1] - 0.5 - e).abs() < 1e-10);
        assert!(r[0] < r[1]);
    }

    #[test]
    fn json_round_trip() {
        let f = PiecewisePoly::new(vec![-1.0, 0.125, 3.0], vec![vec![0.1, -2.0, 1.0 / 3.0], vec![7.0]]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let g: PiecewisePoly = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        assert!(serde_json::from_str::<PiecewisePoly>(r#"{"breakpoints":[1,0],"pieces":[[1]]}"#).is_err());
        let w: Interval = serde_json::from_str("[0.5, 2]").unwrap();
        assert_eq!(w, Interval::new(0.5, 2.0));
    }
}
