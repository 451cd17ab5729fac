//! `gsiframe` command-line front end.
//!
//! Exit status: 0 on success, 1 when a mathematical check fails, 2 on bad
//! input. Reports go to stdout as canonical JSON; errors go to stderr as a
//! one-line JSON object.

mod output;

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use gsiframe::catalog::{
    build_example31, build_example33, build_shannon_wavepacket, example33_level, si_onb, unit_cells,
};
use gsiframe::dual::{
    build_partition_generator, construct_duals, linear_profile, smoothstep_profile, two_generator_bound,
    validate_setup, wave_packet_setup, wave_packet_spacing, wavelet_ell, wavelet_setup, wavelet_step_bound,
    DualSetup, WavePacketGrid, SETUP_TOL,
};
use gsiframe::error::GsiError;
use gsiframe::gsi::{
    alpha_lic_probe, calderon_sum, essential_extrema, frame_bounds_estimate, lic_probe, verify_duality_scaled,
    GsiSystem, IntRange, ProbeTrace, TruncationPolicy,
};
use gsiframe::piecewise::{Interval, PiecewisePoly};
use gsiframe::verify::{reconstruct_check, TestSignal};

#[derive(Parser)]
#[command(name = "gsiframe", version, about = "Fourier-domain analysis of generalized shift-invariant frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct WindowArg {
    /// Frequency window `LO HI`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, required = true)]
    window: Vec<f64>,
}

impl WindowArg {
    fn interval(&self) -> Result<Interval, Failure> {
        let (lo, hi) = (self.window[0], self.window[1]);
        if !(lo < hi) {
            return Err(Failure::Input(format!("window [{lo}, {hi}] is empty")));
        }
        Ok(Interval::new(lo, hi))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calderón sum extrema on a window, optionally sampled to CSV.
    Calderon {
        /// System JSON, `-` for stdin.
        #[arg(default_value = "-")]
        system: String,
        #[command(flatten)]
        window: WindowArg,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        /// Write `gamma,value` samples here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Frame bound estimates as a report.
    Bounds {
        #[arg(default_value = "-")]
        system: String,
        #[command(flatten)]
        window: WindowArg,
    },
    /// Checks t_α = δ_{α,0} χ_S for a dual candidate against a system.
    VerifyDuality {
        /// Dual system JSON, `-` for stdin.
        #[arg(default_value = "-")]
        dual: String,
        /// The analysis system.
        #[arg(long)]
        against: String,
        #[command(flatten)]
        window: WindowArg,
        /// Largest |α| checked; defaults to the combined support reach.
        #[arg(long)]
        alpha_max: Option<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Target value of t_0 on the window.
        #[arg(long, default_value_t = 1.0)]
        level: f64,
    },
    /// Builds the dual system of a setup.
    Dualize {
        #[arg(long)]
        setup: String,
    },
    /// Emits the analysis system of a setup.
    Primal {
        #[arg(long)]
        setup: String,
    },
    /// Lists violated hypotheses of a setup.
    Validate {
        #[arg(long)]
        setup: String,
        #[arg(long, default_value_t = SETUP_TOL)]
        tol: f64,
    },
    /// Partial sums of the LIC series level by level.
    LicProbe {
        #[arg(default_value = "-")]
        system: String,
        /// Test signal f̂ as piecewise polynomial JSON.
        #[arg(long)]
        fhat: String,
        #[arg(long, allow_negative_numbers = true)]
        jmin: i64,
        #[arg(long, allow_negative_numbers = true)]
        jmax: i64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Partial sums of the α-LIC series level by level.
    AlphaLicProbe {
        #[arg(default_value = "-")]
        system: String,
        #[arg(long)]
        dual: String,
        #[arg(long)]
        fhat: String,
        #[arg(long, allow_negative_numbers = true)]
        jmin: i64,
        #[arg(long, allow_negative_numbers = true)]
        jmax: i64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Energy identity through truncated frame coefficients.
    Reconstruct {
        #[arg(default_value = "-")]
        system: String,
        #[arg(long)]
        dual: String,
        #[arg(long)]
        fhat: String,
        #[arg(long, default_value_t = 128)]
        kmax: i64,
    },
    /// Catalog systems and setups.
    Example {
        #[command(subcommand)]
        which: Example,
    },
    /// Partition-of-unity generator from a profile.
    PartitionGen {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
        j0: i32,
        #[arg(long, value_enum, default_value_t = Profile::Linear)]
        profile: Profile,
        /// Custom profile JSON; overrides `--profile`.
        #[arg(long)]
        profile_file: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Linear,
    Smoothstep,
}

impl Profile {
    fn build(self, a: f64, j0: i32) -> PiecewisePoly {
        match self {
            Profile::Linear => linear_profile(a, j0),
            Profile::Smoothstep => smoothstep_profile(a, j0),
        }
    }
}

#[derive(Subcommand)]
enum Example {
    /// Unit indicators with steps N^j: a non-frame with Calderón sum below 1.
    Ex31 {
        #[arg(long = "N", default_value_t = 3)]
        n: i64,
        #[arg(long, default_value_t = 12)]
        jmax: i64,
        #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [-5.0, 5.0])]
        window: Vec<f64>,
    },
    /// N-adic indicators satisfying the α-LIC but not the LIC.
    Ex33 {
        #[arg(long = "N", default_value_t = 2)]
        n: i64,
        #[arg(long, default_value_t = 8)]
        jmax: i64,
        #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [0.0, 1.0])]
        window: Vec<f64>,
    },
    /// Shannon-type wave packet tight frame.
    ShannonWp {
        #[arg(long, default_value_t = 6)]
        mmax: i64,
        #[arg(long, default_value_t = -5, allow_negative_numbers = true)]
        jmin: i64,
        #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
        jmax: i64,
    },
    /// Orthonormal basis of unit indicators with unit steps.
    SiOnb {
        #[arg(long, default_value_t = -3, allow_negative_numbers = true)]
        mmin: i64,
        #[arg(long, default_value_t = 3, allow_negative_numbers = true)]
        mmax: i64,
    },
    /// Bandlimited wavelet setup with N = 2.
    Wavelet {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
        j0: i32,
        /// b_{-1}; b_1 = 2 - b_{-1}.
        #[arg(long, default_value_t = 1.0)]
        b_minus: f64,
        /// Step; defaults to the largest admissible value.
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = -4, allow_negative_numbers = true)]
        jmin: i64,
        #[arg(long, default_value_t = 4, allow_negative_numbers = true)]
        jmax: i64,
        #[arg(long, value_enum, default_value_t = Profile::Linear)]
        profile: Profile,
    },
    /// Two-generator wave packet setup.
    WavePacket {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
        j0: i32,
        #[arg(long, default_value_t = 1.0)]
        b1: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 4)]
        jmax: i64,
        #[arg(long, default_value_t = -2, allow_negative_numbers = true)]
        mmin: i64,
        #[arg(long, default_value_t = 3, allow_negative_numbers = true)]
        mmax: i64,
        #[arg(long, value_enum, default_value_t = Profile::Linear)]
        profile: Profile,
    },
}

enum Failure {
    Input(String),
    Math(String),
}

impl From<GsiError> for Failure {
    fn from(e: GsiError) -> Self {
        match e {
            GsiError::SetupInvalid(_)
            | GsiError::PartitionViolation { .. }
            | GsiError::SupportViolation(_)
            | GsiError::KnotSpacingViolation(_)
            | GsiError::StepTooLarge { .. }
            | GsiError::EndpointViolation(_)
            | GsiError::ReflectionViolation { .. }
            | GsiError::CoefficientViolation(_) => Failure::Math(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

/// Successful run: text for stdout and whether the check it ran passed.
struct Done {
    stdout: String,
    passed: bool,
}

fn ok(stdout: String) -> Result<Done, Failure> {
    Ok(Done { stdout, passed: true })
}

fn read_source(path: &str) -> Result<String, Failure> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::Input(format!("stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("{path}: {e}")))
    }
}

fn load<T: DeserializeOwned>(path: &str) -> Result<T, Failure> {
    let text = read_source(path)?;
    serde_json::from_str(&text).map_err(|e| {
        let name = if path == "-" { "<stdin>" } else { path };
        Failure::Input(format!("{name}:{}:{}: {e}", e.line(), e.column()))
    })
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn reach(sys: &GsiSystem) -> f64 {
    sys.generators.iter().filter_map(|g| g.ghat.support()).map(|s| s.lo.abs().max(s.hi.abs())).fold(0.0, f64::max)
}

fn probe_csv(trace: &ProbeTrace) -> String {
    output::csv("level,partial_sum", trace.levels.iter().zip(&trace.partial_sums).map(|(&l, &s)| (l as f64, s)))
}

fn run(cli: Cli) -> Result<Done, Failure> {
    match cli.command {
        Command::Calderon { system, window, samples, csv } => {
            let w = window.interval()?;
            let sys: GsiSystem = load(&system)?;
            let sum = calderon_sum(&sys, w)?;
            let e = essential_extrema(&sum, w, &sys.blind_set);
            if let Some(path) = csv {
                write_file(&path, &output::csv("gamma,value", sum.sample(w, samples)))?;
            }
            ok(output::json(&json!({
                "window": w,
                "inf": e.inf,
                "arg_inf": e.arg_inf,
                "sup": e.sup,
                "arg_sup": e.arg_sup,
            })))
        }
        Command::Bounds { system, window } => {
            let sys: GsiSystem = load(&system)?;
            let report = frame_bounds_estimate(&sys, &TruncationPolicy::new(window.interval()?, 1.0))?;
            ok(output::json(&report))
        }
        Command::VerifyDuality { dual, against, window, alpha_max, tol, level } => {
            let w = window.interval()?;
            let dual: GsiSystem = load(&dual)?;
            let sys: GsiSystem = load(&against)?;
            let alpha_max = alpha_max.unwrap_or_else(|| reach(&sys) + reach(&dual));
            let report = verify_duality_scaled(&sys, &dual, &TruncationPolicy::new(w, alpha_max), tol, level)?;
            Ok(Done { stdout: output::json(&report), passed: report.passed == Some(true) })
        }
        Command::Dualize { setup } => {
            let setup: DualSetup = load(&setup)?;
            match construct_duals(&setup) {
                Ok(dual) => ok(output::json(&dual)),
                Err(GsiError::SetupInvalid(v)) => Ok(Done { stdout: output::json(&json!({ "violations": v })), passed: false }),
                Err(e) => Err(e.into()),
            }
        }
        Command::Primal { setup } => {
            let setup: DualSetup = load(&setup)?;
            ok(output::json(&setup.primal()))
        }
        Command::Validate { setup, tol } => {
            let setup: DualSetup = load(&setup)?;
            let v = validate_setup(&setup, tol);
            Ok(Done { passed: v.is_empty(), stdout: output::json(&json!({ "violations": v })) })
        }
        Command::LicProbe { system, fhat, jmin, jmax, csv } => {
            let sys: GsiSystem = load(&system)?;
            let fhat: PiecewisePoly = load(&fhat)?;
            let policy = probe_policy(&fhat, jmin, jmax)?;
            let trace = lic_probe(&sys, &fhat, &policy)?;
            if let Some(path) = csv {
                write_file(&path, &probe_csv(&trace))?;
            }
            ok(output::json(&trace))
        }
        Command::AlphaLicProbe { system, dual, fhat, jmin, jmax, csv } => {
            let sys: GsiSystem = load(&system)?;
            let dual: GsiSystem = load(&dual)?;
            let fhat: PiecewisePoly = load(&fhat)?;
            let policy = probe_policy(&fhat, jmin, jmax)?;
            let trace = alpha_lic_probe(&sys, &dual, &fhat, &policy)?;
            if let Some(path) = csv {
                write_file(&path, &probe_csv(&trace))?;
            }
            ok(output::json(&trace))
        }
        Command::Reconstruct { system, dual, fhat, kmax } => {
            let sys: GsiSystem = load(&system)?;
            let dual: GsiSystem = load(&dual)?;
            let fhat: PiecewisePoly = load(&fhat)?;
            let mut policy = probe_policy(&fhat, 0, 0)?;
            policy.k_range = IntRange::new(-kmax, kmax);
            let r = reconstruct_check(&TestSignal::new(fhat), &sys, &dual, &policy)?;
            let passed = (r.lhs - r.exact).abs() <= r.tail_bound + 1e-12;
            Ok(Done { stdout: output::json(&r), passed })
        }
        Command::Example { which } => example(which),
        Command::PartitionGen { a, j0, profile, profile_file, csv, samples } => {
            let f = match profile_file {
                Some(path) => load(&path)?,
                None => profile.build(a, j0),
            };
            let psi = build_partition_generator(&f, a, j0)?;
            if let Some(path) = csv {
                let s = psi.support().unwrap_or(Interval::new(-1.0, 1.0));
                write_file(&path, &output::csv("gamma,value", psi.sample(s, samples)))?;
            }
            ok(output::json(&psi))
        }
    }
}

fn probe_policy(fhat: &PiecewisePoly, jmin: i64, jmax: i64) -> Result<TruncationPolicy, Failure> {
    let s = fhat.support().ok_or_else(|| Failure::Input("test signal is zero".into()))?;
    let mut policy = TruncationPolicy::new(s, 1.0);
    policy.j_range = IntRange::new(jmin, jmax);
    policy.validate()?;
    Ok(policy)
}

fn window_of(v: &[f64]) -> Result<Interval, Failure> {
    WindowArg { window: v.to_vec() }.interval()
}

fn example(which: Example) -> Result<Done, Failure> {
    match which {
        Example::Ex31 { n, jmax, window } => {
            let w = window_of(&window)?;
            ok(output::json(&build_example31(n, jmax, unit_cells(w))))
        }
        Example::Ex33 { n, jmax, window } => {
            let w = window_of(&window)?;
            let sys = build_example33(n, jmax, w);
            eprintln!("t_0 level of the truncation: {}", example33_level(n, jmax));
            ok(output::json(&sys))
        }
        Example::ShannonWp { mmax, jmin, jmax } => {
            ok(output::json(&build_shannon_wavepacket(mmax, IntRange::new(jmin, jmax))))
        }
        Example::SiOnb { mmin, mmax } => ok(output::json(&si_onb(IntRange::new(mmin, mmax)))),
        Example::Wavelet { a, j0, b_minus, b, jmin, jmax, profile } => {
            let psi = build_partition_generator(&profile.build(a, j0), a, j0)?;
            let coeffs = [b_minus, 1.0, 2.0 - b_minus];
            let m = j0 + 2;
            let b = b.unwrap_or_else(|| wavelet_step_bound(a, m, wavelet_ell(&coeffs, 2)));
            ok(output::json(&wavelet_setup(&psi, a, m, 2, &coeffs, b, IntRange::new(jmin, jmax))?))
        }
        Example::WavePacket { a, j0, b1, c1, b, jmax, mmin, mmax, profile } => {
            let psi = build_partition_generator(&profile.build(a, j0), a, j0)?;
            let b = b.unwrap_or_else(|| two_generator_bound(a, j0, b1));
            let grid = WavePacketGrid { a, b, d: wave_packet_spacing(a, j0), j_max: jmax, m_range: IntRange::new(mmin, mmax) };
            ok(output::json(&wave_packet_setup(&psi, a, j0, &grid, b1, c1)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(done) => {
            print!("{}", done.stdout);
            ExitCode::from(if done.passed { 0 } else { 1 })
        }
        Err(Failure::Input(msg)) => {
            eprintln!("{}", json!({ "error": "input", "message": msg }));
            ExitCode::from(2)
        }
        Err(Failure::Math(msg)) => {
            eprintln!("{}", json!({ "error": "check_failed", "message": msg }));
            ExitCode::from(1)
        }
    }
}
