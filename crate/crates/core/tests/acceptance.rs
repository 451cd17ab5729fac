//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gsiframe::catalog::*;
use gsiframe::dual::*;
use gsiframe::gsi::*;
use gsiframe::piecewise::{Interval, PiecewisePoly};
use gsiframe::verify::{reconstruct_check, TestSignal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn worst(r: &FrameReport) -> f64 {
    r.worst_residual().map_or(0.0, |w| w.residual)
}

fn sup_inf(f: &PiecewisePoly, w: Interval) -> (f64, f64) {
    let (lo, hi) = f.extrema_on(w);
    (hi, lo)
}

// Unit indicators on 3-adic translates, twelve levels: a non-frame.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let w = Interval::new(-5.0, 5.0);
    let sys = build_example31(3, 12, unit_cells(w));
    let want = (1.0 - 3f64.powi(-12)) / 2.0;
    let (sup, inf) = sup_inf(&calderon_sum(&sys, w).unwrap(), w);
    let policy = TruncationPolicy::new(w, 1.0);
    let (ok_31, witness) = calderon_lower_check(&sys, 1.0, &policy).unwrap();
    let onb = si_onb(unit_cells(w));
    let (ok_onb, _) = calderon_lower_check(&onb, 1.0, &policy).unwrap();
    let elapsed = start.elapsed();
    let value_ok = (sup - want).abs() <= 1e-12 && (inf - want).abs() <= 1e-12;
    let pass = value_ok && !ok_31 && witness.is_some() && ok_onb && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "calderon sup {sup:.15} inf {inf:.15} (target {want:.15}); lower check fails at {witness:?}; onb check {ok_onb}; {elapsed:.2?}"
        ),
    )
}

// N-adic indicators: α-LIC holds, LIC fails, t_α = δ_{α,0} up to truncation.
fn criterion_2() -> Outcome {
    let (n, j_max) = (2, 10);
    let w = Interval::new(0.0, 1.0);
    let sys = build_example33(n, j_max, w);
    let fhat = PiecewisePoly::indicator(0.25, 0.75);
    let mut policy = TruncationPolicy::new(w, 1.0);
    policy.j_range = IntRange::new(1, j_max);
    let lic = lic_probe(&sys, &fhat, &policy).unwrap();
    let alic = alpha_lic_probe(&sys, &sys, &fhat, &policy).unwrap();
    let bound = fhat.sup_abs().powi(2) * 0.5;
    let alic_inc = alic.increments();
    let bounded = alic.partial_sums.iter().all(|&s| s <= bound + 1e-9);
    let monotone = alic_inc.windows(2).all(|p| p[1] <= p[0] + 1e-15);
    let lic_inc = lic.increments();
    let floor = lic_inc.iter().cloned().fold(f64::INFINITY, f64::min);
    let level = example33_level(n, j_max);
    let dual = verify_duality_scaled(&sys, &sys, &policy, 1e-10, level).unwrap();
    let pass = lic.diverging && floor > 0.0 && !alic.diverging && bounded && monotone && dual.passed == Some(true);
    outcome(
        pass,
        format!(
            "LIC diverging {} (min increment {floor:.6}); alpha-LIC diverging {} (sum {:.9} <= {bound}); t_0 = {level} and t_alpha = 0 over {} alphas, worst {:.2e}",
            lic.diverging,
            alic.diverging,
            alic.partial_sums.last().unwrap(),
            dual.duality_residuals.len(),
            worst(&dual)
        ),
    )
}

// Shannon wave packets on [1/2, 32] with |m| ≤ 6.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let w = Interval::new(0.5, 32.0);
    let (m_max, j_range) = (6, IntRange::new(-5, 6));
    let cov = covering_check(&shannon_intervals(m_max, j_range), w);
    let sys = build_shannon_wavepacket(m_max, j_range);
    let (sup, inf) = sup_inf(&calderon_sum(&sys, w).unwrap(), w);
    let policy = TruncationPolicy::new(w, 64.0);
    let dual = verify_duality(&sys, &sys, &policy, 1e-9).unwrap();
    let elapsed = start.elapsed();
    let calderon_ok = (sup - 1.0).abs() <= 1e-12 && (inf - 1.0).abs() <= 1e-12;
    let pass = cov.disjoint && cov.cover && calderon_ok && dual.passed == Some(true) && elapsed < Duration::from_secs(5);
    let gap = cov.gaps.first().map(|g| format!("[{}, {})", g.lo, g.hi)).unwrap_or_default();
    outcome(
        pass,
        format!(
            "disjoint {} cover {} ({} gaps, first {gap}); calderon in [{inf}, {sup}]; self-duality worst {:.2e}; {elapsed:.2?}",
            cov.disjoint,
            cov.cover,
            cov.gaps.len(),
            worst(&dual)
        ),
    )
}

struct WaveletCase {
    b_minus: f64,
    b: f64,
    sys: GsiSystem,
    dual: GsiSystem,
    windows: [Interval; 2],
}

const WAVELET_J: IntRange = IntRange { lo: -4, hi: 4 };

fn wavelet_psi() -> PiecewisePoly {
    build_partition_generator(&linear_profile(2.0, -2), 2.0, -2).unwrap()
}

fn wavelet_case(b_minus: f64, inflate: f64) -> (DualSetup, f64) {
    let coeffs = [b_minus, 1.0, 2.0 - b_minus];
    let b = wavelet_step_bound(2.0, 0, wavelet_ell(&coeffs, 2)) * inflate;
    (wavelet_setup(&wavelet_psi(), 2.0, 0, 2, &coeffs, b, WAVELET_J).unwrap(), b)
}

fn wavelet_windows() -> [Interval; 2] {
    let w = wavelet_complete_window(2.0, 0, 2, WAVELET_J).unwrap();
    [w, Interval::new(-w.hi, -w.lo)]
}

fn wavelet_pairs() -> Vec<WaveletCase> {
    [0.0, 1.0, 2.0]
        .into_iter()
        .map(|b_minus| {
            let (setup, b) = wavelet_case(b_minus, 1.0);
            let dual = construct_duals(&setup).unwrap();
            WaveletCase { b_minus, b, sys: setup.primal(), dual, windows: wavelet_windows() }
        })
        .collect()
}

fn wavelet_alpha_max(sys: &GsiSystem, dual: &GsiSystem) -> f64 {
    let reach = |s: &GsiSystem| {
        s.generators.iter().filter_map(|g| g.ghat.support()).map(|s| s.lo.abs().max(s.hi.abs())).fold(0.0, f64::max)
    };
    reach(sys) + reach(dual)
}

// General dual construction through the wavelet specialization.
fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for case in wavelet_pairs() {
        let (setup, _) = wavelet_case(case.b_minus, 1.0);
        let valid = validate_setup(&setup, SETUP_TOL).is_empty();
        let alpha_max = wavelet_alpha_max(&case.sys, &case.dual);
        let mut residual: f64 = 0.0;
        let mut ok = valid;
        for w in case.windows {
            let r = verify_duality(&case.sys, &case.dual, &TruncationPolicy::new(w, alpha_max), 1e-9).unwrap();
            ok &= r.passed == Some(true);
            residual = residual.max(worst(&r));
        }
        let (inflated, _) = wavelet_case(case.b_minus, 1.01);
        let violations = validate_setup(&inflated, SETUP_TOL);
        let flagged = violations.iter().any(|v| matches!(v, Violation::Step { .. }));
        pass &= ok && flagged;
        notes.push(format!(
            "b_-1 = {}: b = {:.6} valid {valid} duality worst {residual:.2e}, +1% flagged {flagged}",
            case.b_minus, case.b
        ));
    }
    outcome(pass, notes.join("; "))
}

const WP_A: f64 = 2.0;
const WP_J0: i32 = -2;

fn wp_grid(b: f64) -> WavePacketGrid {
    WavePacketGrid { a: WP_A, b, d: wave_packet_spacing(WP_A, WP_J0), j_max: 4, m_range: IntRange::new(-2, 3) }
}

fn wp_policy(b: f64) -> TruncationPolicy {
    TruncationPolicy::new(Interval::new(0.25, 1.25), 1.5 / b)
}

fn wp_psi() -> PiecewisePoly {
    build_partition_generator(&linear_profile(WP_A, WP_J0), WP_A, WP_J0).unwrap()
}

#[derive(Clone, Copy)]
enum WpKind {
    TwoGenerator,
    Single(SingleVariant),
}

fn wp_bound(kind: WpKind) -> f64 {
    match kind {
        WpKind::TwoGenerator => two_generator_bound(WP_A, WP_J0, 1.0),
        WpKind::Single(v) => single_generator_bound(WP_A, WP_J0, v),
    }
}

fn wp_pair(kind: WpKind, b: f64) -> (GsiSystem, GsiSystem) {
    let psi = wp_psi();
    let grid = wp_grid(b);
    let d = grid.d;
    let sys = wave_packet_system(&psi, &grid).unwrap();
    let dual = match kind {
        WpKind::TwoGenerator => {
            let (phi0, phi1) = wave_packet_duals(&psi, WP_A, WP_J0, d, b, 1.0, 1.0).unwrap();
            wave_packet_dual_system(&phi0, &phi1, &grid, b.sqrt()).unwrap()
        }
        WpKind::Single(v) => {
            let phi = single_generator_dual_unchecked(&psi, WP_A, d, b, v);
            wave_packet_dual_system(&phi, &phi, &grid, 1.0).unwrap()
        }
    };
    (sys, dual)
}

fn wp_kinds() -> [(&'static str, WpKind); 3] {
    [
        ("two-generator", WpKind::TwoGenerator),
        ("shifted", WpKind::Single(SingleVariant::Shifted)),
        ("dilated", WpKind::Single(SingleVariant::Dilated)),
    ]
}

// Wave packet duals at and beyond their step bounds.
fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, kind) in wp_kinds() {
        let bound = wp_bound(kind);
        let (sys, dual) = wp_pair(kind, bound);
        let at = verify_duality(&sys, &dual, &wp_policy(bound), 1e-9).unwrap();
        let over = 1.05 * bound;
        let (sys, dual) = wp_pair(kind, over);
        let beyond = verify_duality(&sys, &dual, &wp_policy(over), 1e-9).unwrap();
        let ok = at.passed == Some(true) && worst(&beyond) > 1e-3;
        pass &= ok;
        notes.push(format!("{name} b = {bound:.6}: worst {:.2e}, at 1.05x worst {:.2e}", worst(&at), worst(&beyond)));
    }
    outcome(pass, notes.join("; "))
}

// Energy identity through coefficients against the exact d_α path.
fn criterion_6() -> Outcome {
    let mut pairs: Vec<(String, GsiSystem, GsiSystem, Interval)> = Vec::new();
    for case in wavelet_pairs() {
        pairs.push((format!("wavelet b_-1={}", case.b_minus), case.sys, case.dual, Interval::new(0.3, 0.9)));
    }
    for (name, kind) in wp_kinds() {
        let (sys, dual) = wp_pair(kind, wp_bound(kind));
        pairs.push((format!("wave packet {name}"), sys, dual, Interval::new(0.3, 1.2)));
    }
    let shannon = build_shannon_wavepacket(6, IntRange::new(-5, 6));
    pairs.push(("shannon".into(), shannon.clone(), shannon, Interval::new(0.55, 0.95)));
    let mut pass = true;
    let mut worst_rel: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, sys, dual, s) in &pairs {
        for (sig_name, sig) in [
            ("indicator", TestSignal::indicator(s.lo, s.hi)),
            ("linear", TestSignal::linear_bump(s.lo, s.hi)),
            ("smoothstep", TestSignal::smooth_bump(s.lo, s.hi)),
        ] {
            let mut policy = TruncationPolicy::new(*s, 1.0);
            policy.k_range = IntRange::new(-128, 128);
            let r = reconstruct_check(&sig, sys, dual, &policy).unwrap();
            let within = (r.lhs - r.exact).abs() <= r.tail_bound + 1e-12 && (r.d0 - r.rhs).abs() <= 1e-9 * r.rhs;
            let ok = within && r.rel_err <= 1e-4;
            worst_rel = worst_rel.max(r.rel_err);
            if !ok {
                failures.push(format!(
                    "{name}/{sig_name}: rel_err {:.2e}, |lhs-exact| {:.2e} vs tail {:.2e}",
                    r.rel_err,
                    (r.lhs - r.exact).abs(),
                    r.tail_bound
                ));
            }
            pass &= ok;
        }
    }
    let detail = if failures.is_empty() {
        format!("{} pairs x 3 signals, worst rel_err {worst_rel:.2e}", pairs.len())
    } else {
        format!("{} of {} cases fail: {}", failures.len(), pairs.len() * 3, failures.join("; "))
    };
    outcome(pass, detail)
}

fn random_wavelet_setup(rng: &mut StdRng) -> DualSetup {
    let a = rng.gen_range(1.5..3.0);
    let j0 = rng.gen_range(-3..=1);
    let psi = build_partition_generator(&linear_profile(a, j0), a, j0).unwrap();
    let b_minus = [0.0, 2.0, rng.gen_range(0.0..2.0)][rng.gen_range(0..3)];
    let coeffs = [b_minus, 1.0, 2.0 - b_minus];
    let m = j0 + 2;
    let b = wavelet_step_bound(a, m, wavelet_ell(&coeffs, 2)) * rng.gen_range(0.5..=1.0);
    wavelet_setup(&psi, a, m, 2, &coeffs, b, IntRange::new(-3, 3)).unwrap()
}

fn random_wave_packet_setup(rng: &mut StdRng) -> DualSetup {
    let psi = wp_psi();
    let b1 = [0.0, rng.gen_range(0.0..2.0)][rng.gen_range(0..2)];
    let c1 = rng.gen_range(0.0..2.0);
    let b = two_generator_bound(WP_A, WP_J0, b1) * rng.gen_range(0.5..=1.0);
    let mut grid = wp_grid(b);
    grid.j_max = 3;
    grid.m_range = IntRange::new(-1, 2);
    wave_packet_setup(&psi, WP_A, WP_J0, &grid, b1, c1).unwrap()
}

// Frame bound estimates on orthonormal systems and random valid setups.
fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let onbs = [
        ("si onb", si_onb(IntRange::new(-3, 3)), Interval::new(-3.0, 4.0)),
        ("shannon", build_shannon_wavepacket(6, IntRange::new(-5, 6)), shannon_octave_cover(6, 0)),
    ];
    for (name, sys, w) in onbs {
        let r = frame_bounds_estimate(&sys, &TruncationPolicy::new(w, 1.0)).unwrap();
        let (a, b) = (r.lower_a.unwrap_or(f64::NAN), r.bessel_b.unwrap_or(f64::NAN));
        pass &= (a - 1.0).abs() <= 1e-9 && (b - 1.0).abs() <= 1e-9;
        notes.push(format!("{name} A = {a}, B = {b}"));
    }
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let (mut checked, mut invalid, mut breaches) = (0, 0, 0);
    for i in 0..50 {
        let setup = if i % 2 == 0 { random_wavelet_setup(&mut rng) } else { random_wave_packet_setup(&mut rng) };
        if !validate_setup(&setup, SETUP_TOL).is_empty() {
            invalid += 1;
            continue;
        }
        let sys = setup.primal();
        let w = setup.bands.iter().find_map(|b| b.window).unwrap();
        let r = frame_bounds_estimate(&sys, &TruncationPolicy::new(w, 1.0)).unwrap();
        checked += 1;
        if r.calderon_sup.unwrap() > r.bessel_b.unwrap() + 1e-10 {
            breaches += 1;
        }
    }
    pass &= invalid == 0 && breaches == 0 && checked == 50;
    notes.push(format!("{checked} random setups checked, {invalid} invalid, {breaches} with calderon_sup > B"));
    outcome(pass, notes.join("; "))
}

fn spiral_position(z: i64) -> i64 {
    if z > 0 {
        2 * z - 1
    } else {
        -2 * z
    }
}

// N-adic translates against brute-force coset membership.
fn criterion_8() -> Outcome {
    let (n, count, r) = (3i64, 20usize, 10_000i64);
    let t = nadic_translates(n, count);
    let moduli: Vec<i64> = (1..=count as u32).map(|i| n.pow(i)).collect();
    let in_coset = |z: i64, i: usize| (z - t[i]).rem_euclid(moduli[i]) == 0;
    let mut overlaps = 0;
    for z in -r..=r {
        if (0..count).filter(|&i| in_coset(z, i)).count() > 1 {
            overlaps += 1;
        }
    }
    // Each t_i is the earliest spiral integer outside the earlier cosets,
    // and after i steps the first i spiral integers are covered.
    let mut greedy = true;
    for i in 0..count {
        let earliest = (-r..=r)
            .filter(|&z| !(0..i).any(|k| in_coset(z, k)))
            .min_by_key(|&z| spiral_position(z))
            .unwrap();
        greedy &= earliest == t[i];
        let covered: HashSet<i64> = (-r..=r).filter(|&z| (0..=i).any(|k| in_coset(z, k))).collect();
        greedy &= (0..=i as i64).all(|p| {
            let z = if p % 2 == 1 { (p + 1) / 2 } else { -p / 2 };
            covered.contains(&z)
        });
    }
    outcome(overlaps == 0 && greedy, format!("t = {t:?}; {overlaps} overlapping integers; greedy {greedy}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("non-frame calderon sum", criterion_1),
        ("alpha-LIC dichotomy", criterion_2),
        ("shannon tight frame", criterion_3),
        ("wavelet dual round trip", criterion_4),
        ("wave packet duals", criterion_5),
        ("energy identity oracle", criterion_6),
        ("frame bound sanity", criterion_7),
        ("n-adic translates", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {:?}", e.downcast_ref::<String>())));
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id} ({name}) [{:.2?}]: {}", start.elapsed(), result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
