//! Energy identity checks for dual pairs.
//!
//! Two independent routes to `Σ_j Σ_k ⟨f, T_{c_j k} g_j⟩ conj⟨f, T_{c_j k} h_j⟩`:
//! the exact one through `d_α = ∫ f̂ f̂(· + α) t_α`, and the truncated
//! coefficient sum built from closed-form oscillatory integrals.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gsi::{alpha_set, check_dense_class, t_alpha, Generator, GsiSystem, TruncationPolicy};
use crate::piecewise::{integrate_product, poly, product_pieces, Interval, PiecewisePoly};

/// A real `f̂` with compact support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSignal {
    pub fhat: PiecewisePoly,
}

impl TestSignal {
    pub fn new(fhat: PiecewisePoly) -> Self {
        TestSignal { fhat }
    }

    pub fn indicator(lo: f64, hi: f64) -> Self {
        TestSignal::new(PiecewisePoly::indicator(lo, hi))
    }

    /// Hat function peaking at the midpoint with height one.
    pub fn linear_bump(lo: f64, hi: f64) -> Self {
        let h = (hi - lo) / 2.0;
        let f = PiecewisePoly::new(vec![lo, lo + h, hi], vec![vec![0.0, 1.0 / h], vec![1.0, -1.0 / h]]).expect("hat");
        TestSignal::new(f)
    }

    /// `C¹` bump: cubic smoothstep up on the first half, down on the second.
    pub fn smooth_bump(lo: f64, hi: f64) -> Self {
        let h = (hi - lo) / 2.0;
        let (a2, a3) = (3.0 / (h * h), 2.0 / (h * h * h));
        let f = PiecewisePoly::new(vec![lo, lo + h, hi], vec![vec![0.0, 0.0, a2, -a3], vec![1.0, 0.0, -a2, a3]])
            .expect("smoothstep");
        TestSignal::new(f)
    }

    pub fn support(&self) -> Option<Interval> {
        self.fhat.support()
    }

    /// `‖f‖² = ∫ f̂²`.
    pub fn energy(&self) -> f64 {
        self.support().map_or(0.0, |s| integrate_product(&[&self.fhat, &self.fhat], s))
    }
}

/// `d_α = ∫ f̂(γ) f̂(γ + α) t_α(γ) dγ`.
pub fn d_alpha(f: &TestSignal, sys: &GsiSystem, dual: &GsiSystem, alpha: f64) -> Result<f64> {
    let k = check_dense_class(sys, &f.fhat)?;
    let t = t_alpha(sys, dual, alpha, k)?;
    let shifted = f.fhat.translate(-alpha);
    Ok(integrate_product(&[&f.fhat, &shifted, &t], k))
}

/// `∫_0^w q(u) e^{iωu} du` for local coefficients `q`.
fn oscillatory_integral(q: &[f64], w: f64, omega: f64) -> Complex64 {
    if omega == 0.0 {
        return Complex64::new(poly::integral(q, 0.0, w), 0.0);
    }
    let iw = Complex64::new(0.0, omega);
    if (omega * w).abs() < 1.0 {
        // Power series in iωu; terms fall off like |ωw|^m / m!.
        let mut total = Complex64::new(0.0, 0.0);
        for (n, &qn) in q.iter().enumerate() {
            if qn == 0.0 {
                continue;
            }
            let mut fact = Complex64::new(1.0, 0.0);
            let mut wp = w.powi(n as i32 + 1);
            for m in 0..60 {
                let term = fact * wp / (n + m + 1) as f64;
                total += term * qn;
                if term.norm() < 1e-18 * (total.norm() / qn.abs()).max(1e-300) {
                    break;
                }
                fact = fact * iw / (m + 1) as f64;
                wp *= w;
            }
        }
        return total;
    }
    // Repeated integration by parts: e^{iωu} Σ_k (-1)^k q^{(k)}(u) / (iω)^{k+1}.
    let antideriv = |u: f64| {
        let mut d = q.to_vec();
        let mut denom = iw;
        let mut sign = 1.0;
        let mut acc = Complex64::new(0.0, 0.0);
        while !d.is_empty() {
            acc += sign * poly::horner(&d, u) / denom;
            d = poly::derivative(&d);
            denom *= iw;
            sign = -sign;
        }
        acc * Complex64::from_polar(1.0, omega * u)
    };
    antideriv(w) - antideriv(0.0)
}

/// `∫ p(γ) e^{iωγ} dγ` over the support of a cellwise polynomial.
fn fourier_of_cells(cells: &[(Interval, Vec<f64>)], omega: f64) -> Complex64 {
    cells
        .iter()
        .map(|(cell, q)| Complex64::from_polar(1.0, omega * cell.lo) * oscillatory_integral(q, cell.len(), omega))
        .sum()
}

/// `⟨f, T_{ck} g⟩ = ∫ f̂(γ) ĝ(γ) e^{2πi c k γ} dγ`.
pub fn frame_coefficient(f: &TestSignal, g: &Generator, k: i64) -> Complex64 {
    let Some(s) = f.support() else {
        return Complex64::new(0.0, 0.0);
    };
    let cells = product_pieces(&[&f.fhat, &g.ghat], s);
    fourier_of_cells(&cells, 2.0 * PI * g.c * k as f64)
}

/// `c⁻¹ ∫_0^{1/c} |Σ_m F(γ + m/c)|² dγ = Σ_k |⟨F, e_{ck}⟩|²` for `F = f̂ ĝ`.
fn periodized_energy(fhat: &PiecewisePoly, ghat: &PiecewisePoly, c: f64) -> f64 {
    let Some(s) = fhat.support() else { return 0.0 };
    let m_max = (c * s.len()).ceil() as i64 + 1;
    (-m_max..=m_max)
        .map(|m| {
            let shift = m as f64 / c;
            let (fs, gs) = (fhat.translate(-shift), ghat.translate(-shift));
            integrate_product(&[fhat, ghat, &fs, &gs], s) / c
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Truncated coefficient sum over `k ∈ k_range`.
    pub lhs: f64,
    /// `‖f‖²`.
    pub rhs: f64,
    pub rel_err: f64,
    /// `d_0` from the exact path.
    pub d0: f64,
    /// `Σ_α d_α`, the value the coefficient sum converges to.
    pub exact: f64,
    /// Cauchy-Schwarz bound on the omitted `k`.
    pub tail_bound: f64,
    pub policy: TruncationPolicy,
}

/// Compares the truncated coefficient sum against `‖f‖²` and the exact
/// `d_α` path. `policy.k_range` bounds `k`; the tail beyond it is bounded
/// by `Σ_j (δ_j(g) δ_j(h))^{1/2}` with `δ_j` the energy the truncated
/// Fourier series of `f̂ ĝ_j` misses.
pub fn reconstruct_check(
    f: &TestSignal,
    sys: &GsiSystem,
    dual: &GsiSystem,
    policy: &TruncationPolicy,
) -> Result<Reconstruction> {
    policy.validate()?;
    let s = check_dense_class(sys, &f.fhat)?;
    let d0 = d_alpha(f, sys, dual, 0.0)?;
    let reach = TruncationPolicy { alpha_max: s.len(), ..policy.clone() };
    let exact = alpha_set(sys, &reach)
        .par_iter()
        .filter(|a| a.abs() < s.len())
        .map(|&a| d_alpha(f, sys, dual, a))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    let ks: Vec<i64> = policy.k_range.iter().collect();
    let per_gen: Vec<(f64, f64)> = sys
        .generators
        .par_iter()
        .zip(&dual.generators)
        .filter(|(g, h)| {
            let meets = |p: &PiecewisePoly| p.support().is_some_and(|t| t.overlaps(&s));
            meets(&g.ghat) && meets(&h.ghat)
        })
        .map(|(g, h)| {
            let cg = product_pieces(&[&f.fhat, &g.ghat], s);
            let ch = product_pieces(&[&f.fhat, &h.ghat], s);
            let (mut sum, mut eg, mut eh) = (0.0, 0.0, 0.0);
            for &k in &ks {
                let omega = 2.0 * PI * g.c * k as f64;
                let (x, y) = (fourier_of_cells(&cg, omega), fourier_of_cells(&ch, omega));
                sum += (x * y.conj()).re;
                eg += x.norm_sqr();
                eh += y.norm_sqr();
            }
            let full_g = periodized_energy(&f.fhat, &g.ghat, g.c);
            let full_h = periodized_energy(&f.fhat, &h.ghat, g.c);
            let tail = ((full_g - eg).max(0.0) * (full_h - eh).max(0.0)).sqrt();
            (sum, tail)
        })
        .collect();
    let lhs: f64 = per_gen.iter().map(|p| p.0).sum();
    let tail_bound: f64 = per_gen.iter().map(|p| p.1).sum();
    let rhs = f.energy();
    Ok(Reconstruction { lhs, rhs, rel_err: (lhs - rhs).abs() / rhs, d0, exact, tail_bound, policy: policy.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsi::IntRange;

    fn quad(f: impl Fn(f64) -> Complex64, lo: f64, hi: f64, n: usize) -> Complex64 {
        // Composite Simpson.
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn orthogonality_of_indicator_translates() {
        let f = TestSignal::indicator(0.0, 1.0);
        let g = Generator::new(1.0, vec![0], PiecewisePoly::indicator(0.0, 1.0));
        assert!((frame_coefficient(&f, &g, 0) - 1.0).norm() < 1e-15);
        for k in [-3, -1, 1, 2, 17] {
            assert!(frame_coefficient(&f, &g, k).norm() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn coefficients_match_quadrature() {
        let f = TestSignal::smooth_bump(0.3, 1.7);
        let g = Generator::new(0.75, vec![0], PiecewisePoly::from_global(0.1, 1.4, &[0.2, -1.0, 0.5]).unwrap());
        for k in [0, 1, -2, 5, 40] {
            let omega = 2.0 * PI * g.c * k as f64;
            let oracle = quad(
                |x| Complex64::from_polar(f.fhat.left_limit(x) * g.ghat.left_limit(x), omega * x),
                0.3,
                1.4,
                20000,
            );
            let got = frame_coefficient(&f, &g, k);
            assert!((got - oracle).norm() <= 1e-9 * oracle.norm().max(1e-3), "k = {k}: {got} vs {oracle}");
        }
    }

    #[test]
    fn small_frequency_series_agrees_with_parts() {
        let q = [0.3, -1.2, 0.7, 2.0];
        for w in [0.5, 1.3] {
            let omega = 0.999 / w;
            let series = oscillatory_integral(&q, w, omega);
            let by_parts = {
                let iw = Complex64::new(0.0, omega);
                let mut d = q.to_vec();
                let (mut acc_w, mut acc_0) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                let (mut denom, mut sign) = (iw, 1.0);
                while !d.is_empty() {
                    acc_w += sign * poly::horner(&d, w) / denom;
                    acc_0 += sign * poly::horner(&d, 0.0) / denom;
                    d = poly::derivative(&d);
                    denom *= iw;
                    sign = -sign;
                }
                acc_w * Complex64::from_polar(1.0, omega * w) - acc_0
            };
            assert!((series - by_parts).norm() < 1e-12);
        }
    }

    #[test]
    fn onb_reconstructs_indicator() {
        let sys = crate::catalog::si_onb(IntRange::new(-1, 2));
        let f = TestSignal::indicator(0.0, 1.0);
        let mut p = TruncationPolicy::new(Interval::new(-1.0, 3.0), 3.0);
        p.k_range = IntRange::new(0, 0);
        let r = reconstruct_check(&f, &sys, &sys, &p).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-14 && (r.rhs - 1.0).abs() < 1e-15);
        assert!((r.d0 - 1.0).abs() < 1e-15 && r.tail_bound < 1e-14);
    }
}
