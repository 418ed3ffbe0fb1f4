//! Command-line driver: theorem verification runs, field recovery,
//! symmetry certificates, and property suites, all from one TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use tansec::body::PerturbationFamily;
use tansec::config::RunConfig;
use tansec::error::{Result, TansecError};
use tansec::flats::hyperplane_flats_at;
use tansec::frame::dupin_hull;
use tansec::geometry::unit_ball_intrinsic_volume;
use tansec::measures::{
    ellipsoid_intrinsic_volume, functional_value, intrinsic_volume, paraboloid_cap_ratio,
    sandwich_check, EllipsoidSpec, FunctionalDescriptor, FunctionalKind,
};
use tansec::recovery::{
    recover_field, santalo_first_order, symmetry_check, RecoveryMode, RecoveryReport,
};
use tansec::report::{write_json, write_recovery_outputs};
use tansec::sample::{section_body, SampleParams, TangentContext};

#[derive(Parser)]
#[command(name = "tansec", about = "Local determination of convex-body perturbations from tangent sections and caps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed override for all sampling randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Section limits (tangent l-flats): recover the field and compare to
    /// ground truth.
    VerifyTheorem1,
    /// Cap limits (tangent hyperplanes): recover the field and compare to
    /// ground truth.
    VerifyTheorem4,
    /// Run the configured mode and write the recovered field.
    Recover,
    /// Symmetry certificate of the recovered field under the configured
    /// isometry.
    Symmetry,
    /// Verify the sandwich inclusion of sections between scaled Dupin
    /// hulls.
    SandwichCheck,
    /// Recover with the configured alternative functional and compare to
    /// the intrinsic-volume recovery.
    FunctionalCheck,
    /// First-order constant-chord demonstration on the disc.
    SantaloDemo,
    /// Invariant suites: cap/cylinder ratio, calibration, homogeneity,
    /// Steiner, embedding.
    Properties,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("FAIL: tolerance violated");
            ExitCode::from(1)
        }
        Err(e) => {
            let code = match e {
                TansecError::Config(_) | TansecError::Io(_) => 2,
                _ => 1,
            };
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| TansecError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    RunConfig::parse(&text)
}

fn run(cli: &Cli) -> Result<bool> {
    match cli.command {
        Command::VerifyTheorem1 => {
            let cfg = load_config(cli)?;
            if cfg.mode()? != RecoveryMode::Sections {
                return Err(TansecError::Config(
                    "verify-theorem1 needs experiment.mode = \"sections\"".into(),
                ));
            }
            verify_recovery(cli, &cfg)
        }
        Command::VerifyTheorem4 => {
            let cfg = load_config(cli)?;
            if cfg.mode()? == RecoveryMode::Sections {
                return Err(TansecError::Config(
                    "verify-theorem4 needs a cap mode (cap_volume or cap_intrinsic)".into(),
                ));
            }
            verify_recovery(cli, &cfg)
        }
        Command::Recover => {
            let cfg = load_config(cli)?;
            let report = run_recovery(&cfg, cli.seed)?;
            write_recovery_outputs(&cli.out, &report)?;
            print_recovery_summary(&report);
            Ok(report.pass)
        }
        Command::Symmetry => run_symmetry(cli),
        Command::SandwichCheck => run_sandwich(cli),
        Command::FunctionalCheck => run_functional_check(cli),
        Command::SantaloDemo => run_santalo(cli),
        Command::Properties => run_properties(cli),
    }
}

fn run_recovery(cfg: &RunConfig, seed: Option<u64>) -> Result<RecoveryReport> {
    let family = cfg.family()?;
    let d = family.base().dim();
    let flats = cfg.flats(family.base())?;
    let functional = cfg.functional(d)?;
    recover_field(
        &family,
        &flats,
        cfg.mode()?,
        &functional,
        &cfg.epsilon_grid()?,
        &cfg.sample_params(seed),
    )
}

fn print_recovery_summary(report: &RecoveryReport) {
    println!(
        "recovered {} flats ({} excluded): rms {:.4}%, max {:.4}%, near-zero max abs {:.3e}",
        report.samples.len(),
        report.excluded_flats,
        100.0 * report.rms_relative_error,
        100.0 * report.max_relative_error,
        report.max_absolute_error_near_zero
    );
}

fn verify_recovery(cli: &Cli, cfg: &RunConfig) -> Result<bool> {
    let report = run_recovery(cfg, cli.seed)?;
    write_recovery_outputs(&cli.out, &report)?;
    print_recovery_summary(&report);
    let ok = report.pass && report.rms_relative_error <= cfg.tolerances.rms;
    println!(
        "ground-truth rms {:.4}% vs tolerance {:.4}%: {}",
        100.0 * report.rms_relative_error,
        100.0 * cfg.tolerances.rms,
        if ok { "pass" } else { "FAIL" }
    );
    Ok(ok)
}

fn run_symmetry(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let family = cfg.family()?;
    let d = family.base().dim();
    let t = cfg.isometry(d)?;
    // Direction grid closed under T so Tu matches are exact.
    let dirs = cfg.symmetric_directions(d)?;
    let flats = hyperplane_flats_at(family.base(), &dirs)?;
    let functional = cfg.functional(d)?;
    let mode = cfg.mode()?;
    if mode == RecoveryMode::Sections {
        let (_, l) = cfg.degrees(d)?;
        if l != d - 1 {
            return Err(TansecError::Config(
                "symmetry certificates run on tangent hyperplanes (l = d-1)".into(),
            ));
        }
    }
    let report = recover_field(
        &family,
        &flats,
        mode,
        &functional,
        &cfg.epsilon_grid()?,
        &cfg.sample_params(cli.seed),
    )?;
    let cert = symmetry_check(&family, &report, &t)?;
    write_recovery_outputs(&cli.out, &report)?;
    write_json(&cli.out.join("symmetry.json"), &cert)?;
    println!(
        "symmetry: body residual {:.2e}, max defect {:.3e}, {}{}",
        cert.body_residual,
        cert.max_defect,
        if cert.pass { "pass" } else { "FAIL" },
        if cert.evenness { " (even function of u)" } else { "" }
    );
    Ok(cert.pass)
}

fn run_sandwich(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let family = cfg.family()?;
    let flats = cfg.flats(family.base())?;
    let grid = cfg.epsilon_grid()?;
    let params = cfg.sample_params(cli.seed);
    let c1f = cfg.tolerances.sandwich_c1_factor;
    let c2f = cfg.tolerances.sandwich_c2_factor;
    let eps_cut = 2f64.powi(-8);
    let mut checked = 0usize;
    let mut ok = true;
    for flat in flats {
        let ctx = TangentContext::new(&family, flat)?;
        let c = ctx.c_true();
        for eps in grid.values().into_iter().filter(|&e| e <= eps_cut) {
            let sample = section_body(&ctx, eps, &params)?;
            let (c1, c2) = if c > 1e-12 {
                (Some(c1f * c), c2f * c)
            } else {
                (None, 1e-9)
            };
            if !sandwich_check(&sample, &ctx.dupin, c1, c2, eps) {
                ok = false;
                println!(
                    "sandwich violated at flat {} eps {eps:.3e} (c = {c:.4})",
                    ctx.flat.id
                );
            }
            checked += 1;
        }
    }
    println!(
        "sandwich inclusion ({c1f} c, {c2f} c) checked on {checked} (flat, eps) pairs: {}",
        if ok { "pass" } else { "FAIL" }
    );
    Ok(ok)
}

fn run_functional_check(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let family = cfg.family()?;
    let d = family.base().dim();
    let flats = cfg.flats(family.base())?;
    let mode = cfg.mode()?;
    let grid = cfg.epsilon_grid()?;
    let params = cfg.sample_params(cli.seed);
    let base_f = FunctionalDescriptor::intrinsic(cfg.degrees(d)?.0);
    let alt_f = cfg.functional(d)?;
    if alt_f.kind == FunctionalKind::IntrinsicVolume {
        return Err(TansecError::Config(
            "functional-check needs functional.kind set to a non-default functional".into(),
        ));
    }
    let base = recover_field(&family, &flats, mode, &base_f, &grid, &params)?;
    let alt = recover_field(&family, &flats, mode, &alt_f, &grid, &params)?;
    write_recovery_outputs(&cli.out, &alt)?;
    let mut sq = 0.0;
    let mut n = 0usize;
    for (a, b) in base.samples.iter().zip(&alt.samples) {
        if a.excluded || b.excluded || a.c_true.abs() <= 1e-3 {
            continue;
        }
        let rel = (a.c_hat - b.c_hat).abs() / a.c_hat.abs().max(1e-12);
        sq += rel * rel;
        n += 1;
    }
    let rms = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };
    let ok = rms <= cfg.tolerances.rms;
    println!(
        "functional independence rms {:.3}% over {} flats vs tolerance {:.3}%: {}",
        100.0 * rms,
        n,
        100.0 * cfg.tolerances.rms,
        if ok { "pass" } else { "FAIL" }
    );
    Ok(ok)
}

fn run_santalo(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let family = cfg.family()?;
    let d = family.base().dim();
    if d != 2 || cfg.mode()? != RecoveryMode::Sections {
        return Err(TansecError::Config(
            "santalo-demo needs d = 2 and experiment.mode = \"sections\"".into(),
        ));
    }
    let report = run_recovery(&cfg, cli.seed)?;
    write_recovery_outputs(&cli.out, &report)?;
    let outcome = santalo_first_order(&report, cfg.tolerances.santalo);
    write_json(&cli.out.join("santalo.json"), &outcome)?;
    if outcome.limits_constant {
        println!(
            "all chord-length limits constant; recovered field constant: {}",
            outcome.field_constant
        );
    } else {
        println!("chord-length limits not constant; implication holds vacuously");
    }
    Ok(outcome.holds)
}

fn run_properties(cli: &Cli) -> Result<bool> {
    let _ = cli;
    let mut all = true;
    let mut check = |name: &str, ok: bool| {
        println!("property {name}: {}", if ok { "pass" } else { "FAIL" });
        all &= ok;
    };

    // Paraboloid cap / cylinder ratio 2/(d+1), d = 2..4.
    for d in 2..=4usize {
        let m = d - 1;
        let q = DMatrix::from_fn(m, m, |i, j| if i == j { 0.4 + 0.25 * i as f64 } else { 0.0 });
        let ratio = paraboloid_cap_ratio(&q, 0.9, 1e-3);
        check(
            &format!("cap/cylinder ratio d={d}"),
            (ratio - 2.0 / (d as f64 + 1.0)).abs() < 1e-6,
        );
    }

    // Kubota calibration within 1% for m <= 4.
    for m in 2..=4usize {
        for k in 1..m {
            let spec = EllipsoidSpec { semiaxes: vec![1.0; m] };
            let v = ellipsoid_intrinsic_volume(&spec, k)?.value;
            let expect = unit_ball_intrinsic_volume(m, k);
            check(
                &format!("Kubota calibration V_{k}(B^{m})"),
                (v - expect).abs() / expect < 0.01,
            );
        }
    }

    // Homogeneity and monotonicity of V_k on a disc section of the ball
    // family, and the Steiner check of the disc.
    let family = PerturbationFamily::new(
        tansec::body::RadialBody::ball(3, 1.0)?,
        tansec::body::Speed::Constant(1.0),
    )?;
    let flats = tansec::flats::tangent_flats(
        family.base(),
        2,
        &tansec::flats::SubspacePencil::full(3),
        4,
    )?;
    let ctx = TangentContext::new(&family, flats.into_iter().next().unwrap())?;
    let sample = section_body(&ctx, 1e-3, &SampleParams::default())?;
    let dupin = dupin_hull(&ctx.flat.frame)?;
    let _ = &dupin;
    for k in 1..=2usize {
        let f = FunctionalDescriptor::intrinsic(k);
        let v = functional_value(&sample, &f)?.value;
        let double = sample.mapped(&(DMatrix::identity(2, 2) * 2.0));
        let vd = functional_value(&double, &f)?.value;
        check(
            &format!("homogeneity degree {k}"),
            (vd / v - 2f64.powi(k as i32)).abs() < 1e-4 * 2f64.powi(k as i32),
        );
        let half = sample.mapped(&(DMatrix::identity(2, 2) * 0.5));
        let vh = functional_value(&half, &f)?.value;
        check(&format!("monotonicity degree {k}"), vh < v && v < vd);
    }
    // Steiner: disc of radius r has V_2 = pi r^2, V_1 = pi r; check the
    // Steiner polynomial of the section disc at outer radius t.
    let r = intrinsic_volume(&sample, 1)? / std::f64::consts::PI;
    let v2 = intrinsic_volume(&sample, 2)?;
    check(
        "Steiner consistency of V_1/V_2",
        (v2 - std::f64::consts::PI * r * r).abs() / v2 < 5e-3,
    );

    // Embedding invariance: a flat disc embedded in R^3 keeps its V_1, V_2.
    {
        let n = 512;
        let dirs2: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                DVector::from_column_slice(&[th.cos(), th.sin()])
            })
            .collect();
        let planar = tansec::sample::ConvexSample {
            dim: 2,
            anchor: DVector::zeros(2),
            boundary: dirs2.iter().map(|d| d * 0.7).collect(),
            dirs: dirs2,
            faces: None,
            degenerate: false,
        };
        let v1p = intrinsic_volume(&planar, 1)?;
        let v2p = intrinsic_volume(&planar, 2)?;
        check(
            "embedding invariance",
            (v1p - std::f64::consts::PI * 0.7).abs() / v1p < 1e-3
                && (v2p - std::f64::consts::PI * 0.49).abs() / v2p < 1e-3,
        );
    }
    Ok(all)
}
