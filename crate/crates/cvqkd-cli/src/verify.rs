//! The self-check battery behind `cvqkd verify`: re-derives the library's
//! cross-checked constants and invariants at reduced sample sizes and
//! reports every check by name. The hidden perturbation flag feeds a wrong
//! vacuum variance into one check to demonstrate the battery has teeth.

// Frozen reference values keep the digits of the generator verbatim.
#![allow(clippy::excessive_precision)]

use serde::Serialize;

use cvqkd::gaussian::{CoherentAmplitude, QuadraturePhase, QuadratureValue, VACUUM_VARIANCE};
use cvqkd::keygain::{
    gain, gain_with_convention, postselected_ber, PostselectionThreshold, TauConvention,
};
use cvqkd::protocol::{sift_table, ProtocolId, ProtocolSpec, SiftRow};
use cvqkd::quadrature::integrate;
use cvqkd::security::{
    fidelity_numeric, fidelity_two_mixture_analytic, protocol_overlap_bound, purification_overlap,
    tau_u, uncertainty_infer, MixedSignal, PurificationSpec, VarianceRecord,
};
use cvqkd::session::{
    eve_empirical_check, run_session, transcript_check, transcript_check_lines, MessageKind,
    RecordOptions, SessionConfig, SessionOutput, TransportKind,
};

/// One named check with its outcome and the numbers it compared.
#[derive(Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

/// The full battery's result, serialized as the command's JSON output.
#[derive(Serialize)]
pub struct VerifyReport {
    pub tool_version: &'static str,
    pub quick: bool,
    pub seed: u64,
    pub checks: Vec<CheckReport>,
    pub passed: usize,
    pub failed: usize,
}

/// Runs every check. `perturb_variance` replaces the vacuum variance fed
/// to the uncertainty check; any value other than 1/4 must make that check
/// fail, which is the battery's own negative control.
pub fn run_checks(quick: bool, seed: u64, perturb_variance: Option<f64>) -> VerifyReport {
    let mut checks = vec![
        check("protocol-efficiencies", efficiencies),
        check("sift-table-cells", table_cells),
        check("mirrored-mixture-fidelity", mirrored_fidelity),
        check("bound-universality", bound_universality),
        check("purification-overlap-spread", purification_spread),
        check("privacy-fraction", privacy_fraction),
        check("uncertainty-minimum", || {
            uncertainty_minimum(perturb_variance)
        }),
        check("gain-reference-point", gain_reference),
        check("gain-scales-with-efficiency", gain_ratios),
        check("postselected-error-rate", postselected_rates),
        check("quadrature-normalization", normalization),
    ];
    let (efficiency, error_rate) = session_statistics(quick, seed);
    checks.push(efficiency);
    checks.push(error_rate);
    checks.push(check("transcript-audit", || transcript_audit(seed)));
    checks.push(check("transcript-audit-detects-leaks", || {
        transcript_leak_control(seed)
    }));
    checks.push(check("eavesdropper-ensembles", || eve_ensembles(quick, seed)));
    checks.push(check("deterministic-replay", || replay(seed)));

    let passed = checks.iter().filter(|c| c.passed).count();
    let failed = checks.len() - passed;
    VerifyReport {
        tool_version: env!("CARGO_PKG_VERSION"),
        quick,
        seed,
        checks,
        passed,
        failed,
    }
}

fn check(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckReport {
    match body() {
        Ok(details) => CheckReport {
            name,
            passed: true,
            details,
        },
        Err(details) => CheckReport {
            name,
            passed: false,
            details,
        },
    }
}

fn all_protocols() -> Vec<ProtocolId> {
    let mut ids = ProtocolId::STANDARD.to_vec();
    ids.push(ProtocolId::Gen(2));
    ids
}

fn spec(id: ProtocolId, alpha: f64) -> Result<ProtocolSpec, String> {
    ProtocolSpec::new(id, alpha).map_err(|e| e.to_string())
}

fn threshold(x0: f64) -> Result<PostselectionThreshold, String> {
    PostselectionThreshold::new(x0).map_err(|e| e.to_string())
}

fn efficiencies() -> Result<String, String> {
    let expected: [(ProtocolId, i64, i64); 8] = [
        (ProtocolId::O4, 1, 2),
        (ProtocolId::S3, 2, 3),
        (ProtocolId::E4, 1, 1),
        (ProtocolId::Mb4, 1, 1),
        (ProtocolId::S6, 2, 3),
        (ProtocolId::Mb6, 2, 3),
        (ProtocolId::S8, 3, 4),
        (ProtocolId::Mb8, 3, 4),
    ];
    for (id, numer, denom) in expected {
        let got = spec(id, 0.7)?.efficiency();
        if got != num_rational::Ratio::new(numer, denom) {
            return Err(format!("{id}: efficiency {got}, expected {numer}/{denom}"));
        }
    }
    for n in 0..=8u32 {
        let got = spec(ProtocolId::Gen(n), 0.7)?.efficiency();
        let want = num_rational::Ratio::new(2 + n as i64, 2 + 2 * n as i64);
        if got != want {
            return Err(format!("gen{n}: efficiency {got}, expected {want}"));
        }
    }
    Ok("8 named protocols and gen0..gen8 give the exact rationals".into())
}

fn find_cell(rows: &[SiftRow], re: f64, im: f64, phase_radians: f64) -> Result<&SiftRow, String> {
    rows.iter()
        .find(|r| {
            (r.state_re_over_alpha - re).abs() < 1e-9
                && (r.state_im_over_alpha - im).abs() < 1e-9
                && (r.phase_radians - phase_radians).abs() < 1e-9
        })
        .ok_or_else(|| format!("no table cell for state ({re}, {im}) at phase {phase_radians}"))
}

fn expect_cell(row: &SiftRow, mean: f64, bit: Option<u8>) -> Result<(), String> {
    if (row.mean_over_alpha - mean).abs() > 1e-12 || row.bit != bit {
        return Err(format!(
            "cell state {} phase {} gave mean {} bit {:?}, expected {mean} {bit:?}",
            row.state, row.phase, row.mean_over_alpha, row.bit
        ));
    }
    Ok(())
}

fn table_cells() -> Result<String, String> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let r3 = 2.0 / 3f64.sqrt();

    let o4 = sift_table(&spec(ProtocolId::O4, 1.0)?);
    expect_cell(find_cell(&o4, 1.0, 0.0, 0.0)?, 1.0, Some(1))?;
    expect_cell(find_cell(&o4, 1.0, 0.0, FRAC_PI_2)?, 0.0, None)?;
    expect_cell(find_cell(&o4, 0.0, -1.0, FRAC_PI_2)?, -1.0, Some(0))?;

    let s3 = sift_table(&spec(ProtocolId::S3, 1.0)?);
    expect_cell(find_cell(&s3, r3, 0.0, -PI / 6.0)?, 1.0, Some(1))?;
    expect_cell(find_cell(&s3, r3, 0.0, -5.0 * PI / 6.0)?, -1.0, Some(0))?;
    expect_cell(find_cell(&s3, r3, 0.0, FRAC_PI_2)?, 0.0, None)?;

    let e4 = sift_table(&spec(ProtocolId::E4, 1.0)?);
    expect_cell(find_cell(&e4, 1.0, 1.0, 0.0)?, 1.0, Some(1))?;
    expect_cell(find_cell(&e4, 1.0, 1.0, FRAC_PI_2)?, 1.0, Some(1))?;
    expect_cell(find_cell(&e4, -1.0, 1.0, 0.0)?, -1.0, Some(0))?;
    expect_cell(find_cell(&e4, -1.0, 1.0, FRAC_PI_2)?, 1.0, Some(1))?;

    let s6 = sift_table(&spec(ProtocolId::S6, 1.0)?);
    expect_cell(find_cell(&s6, -r3, 0.0, -5.0 * PI / 6.0)?, 1.0, Some(1))?;
    expect_cell(find_cell(&s6, -r3, 0.0, -PI / 6.0)?, -1.0, Some(0))?;
    expect_cell(find_cell(&s6, -r3, 0.0, FRAC_PI_2)?, 0.0, None)?;

    let s8 = sift_table(&spec(ProtocolId::S8, 1.0)?);
    expect_cell(find_cell(&s8, 0.0, 1.0, 0.0)?, 0.0, None)?;
    expect_cell(find_cell(&s8, 0.0, 1.0, FRAC_PI_2)?, 1.0, Some(1))?;
    expect_cell(find_cell(&s8, 1.0, 1.0, 0.0)?, 1.0, Some(1))?;
    expect_cell(find_cell(&s8, 1.0, -1.0, FRAC_PI_2)?, -1.0, Some(0))?;

    Ok("17 spot cells across the five tabulated protocols match".into())
}

fn mirrored_mixture(sign: f64, a: f64, b: f64) -> Result<MixedSignal, String> {
    let up = CoherentAmplitude::new(sign * a, b).map_err(|e| e.to_string())?;
    let down = CoherentAmplitude::new(sign * a, -b).map_err(|e| e.to_string())?;
    MixedSignal::new(vec![(0.5, up), (0.5, down)]).map_err(|e| e.to_string())
}

fn mirrored_fidelity() -> Result<String, String> {
    let mut worst = 0.0f64;
    for &a in &[0.0, 0.5, 1.0] {
        for &b in &[0.0, 0.3, 1.0] {
            let rho = mirrored_mixture(1.0, a, b)?;
            let sigma = mirrored_mixture(-1.0, a, b)?;
            let numeric = fidelity_numeric(&rho, &sigma).map_err(|e| e.to_string())?;
            let closed = fidelity_two_mixture_analytic(a, b).map_err(|e| e.to_string())?;
            let diff = (numeric - closed).abs();
            worst = worst.max(diff);
            if diff > 1e-10 {
                return Err(format!(
                    "a={a} b={b}: numeric fidelity {numeric} vs closed form {closed}"
                ));
            }
        }
    }
    Ok(format!(
        "fidelity matches the closed form on a 3x3 grid, worst gap {worst:.2e}"
    ))
}

fn bound_universality() -> Result<String, String> {
    let mut worst = 0.0f64;
    for id in all_protocols() {
        for &eta in &[0.3, 0.7] {
            for &alpha in &[0.25, 1.0] {
                let spec = spec(id, alpha)?;
                let bound = protocol_overlap_bound(&spec, eta).map_err(|e| e.to_string())?;
                let expected = (-2.0 * (1.0 - eta) * alpha * alpha).exp();
                let gap = (bound.overlap - expected).abs().max(bound.max_deviation);
                worst = worst.max(gap);
                if gap > 1e-9 {
                    return Err(format!(
                        "{id} eta={eta} alpha={alpha}: overlap {} deviates by {gap:.2e}",
                        bound.overlap
                    ));
                }
            }
        }
    }
    Ok(format!(
        "9 protocols x 2 transmissions x 2 amplitudes agree, worst gap {worst:.2e}"
    ))
}

fn purification_spread() -> Result<String, String> {
    let (eta, alpha) = (0.6f64, 0.8f64);
    let expected = (-2.0 * (1.0 - eta) * alpha * alpha).exp();
    let mut low = f64::INFINITY;
    let mut high = f64::NEG_INFINITY;
    for n in 0..=6u32 {
        let p = PurificationSpec::new(n, eta, alpha).map_err(|e| e.to_string())?;
        let overlap = purification_overlap(&p);
        low = low.min(overlap);
        high = high.max(overlap);
        if (overlap - expected).abs() > 1e-12 {
            return Err(format!(
                "grid size n={n}: overlap {overlap}, expected {expected}"
            ));
        }
    }
    Ok(format!(
        "overlap is grid-size independent, spread {:.2e}",
        high - low
    ))
}

fn privacy_fraction() -> Result<String, String> {
    if tau_u(0.0).map_err(|e| e.to_string())? != 1.0 {
        return Err("tau at overlap 0 is not exactly 1".into());
    }
    if tau_u(1.0).map_err(|e| e.to_string())? != 0.0 {
        return Err("tau at overlap 1 is not exactly 0".into());
    }
    for &o in &[0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
        let got = tau_u(o).map_err(|e| e.to_string())?;
        let independent = (2.0 - o * o).ln() / std::f64::consts::LN_2;
        if (got - independent).abs() > 1e-12 {
            return Err(format!("overlap {o}: tau {got} vs {independent}"));
        }
    }
    let bound = protocol_overlap_bound(&spec(ProtocolId::O4, 0.5)?, 0.5).map_err(|e| e.to_string())?;
    let frozen = 0.478_681_259_993_225_25;
    if (bound.tau_u - frozen).abs() > 1e-12 {
        return Err(format!(
            "tau at eta 0.5 alpha 0.5 is {}, expected {frozen}",
            bound.tau_u
        ));
    }
    let lossless = protocol_overlap_bound(&spec(ProtocolId::O4, 0.5)?, 1.0).map_err(|e| e.to_string())?;
    if lossless.tau_u != 0.0 {
        return Err(format!(
            "tau at a lossless channel is {}, not exactly 0",
            lossless.tau_u
        ));
    }
    Ok("endpoints exact, grid matches log2(2 - overlap^2), frozen point holds".into())
}

fn uncertainty_minimum(perturb: Option<f64>) -> Result<String, String> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let reported = perturb.unwrap_or(VACUUM_VARIANCE);
    let records: Vec<VarianceRecord> = [FRAC_PI_2, -PI / 6.0, -5.0 * PI / 6.0]
        .iter()
        .map(|&phi| {
            Ok(VarianceRecord {
                phase: QuadraturePhase::new(phi).map_err(|e| e.to_string())?,
                mean: 0.0,
                variance: reported,
            })
        })
        .collect::<Result<_, String>>()?;
    let inference = uncertainty_infer(&records).map_err(|e| e.to_string())?;
    if !inference.minimum_uncertainty {
        return Err(format!(
            "variances ({}, {}) from reported variance {reported} are not the vacuum minimum",
            inference.var_x1, inference.var_x2
        ));
    }
    if inference.residual > 1e-12 {
        return Err(format!("fit residual {:.2e} too large", inference.residual));
    }
    Ok(format!(
        "three-phase records at variance {reported} infer the vacuum quadrature moments"
    ))
}

fn gain_reference() -> Result<String, String> {
    let spec_half = spec(ProtocolId::O4, 0.5)?;
    let point = gain(&spec_half, 0.5, threshold(0.2)?).map_err(|e| e.to_string())?;
    let frozen_info = 0.285_921_789_248_648_32;
    let frozen_kept = 0.754_742_833_853_116_92;
    let frozen_gain = -0.096_379_735_372_288_462;
    for (label, got, want) in [
        ("information integral", point.mutual_info_integral, frozen_info),
        ("kept fraction", point.kept_fraction, frozen_kept),
        ("gain", point.gain, frozen_gain),
    ] {
        if (got - want).abs() > 5e-9 {
            return Err(format!("{label}: {got}, expected {want}"));
        }
    }
    let per_kept = gain_with_convention(&spec_half, 0.5, threshold(0.2)?, TauConvention::PerKeptBit)
        .map_err(|e| e.to_string())?;
    if (per_kept.gain - -0.037_679_730_715_509_572).abs() > 5e-9 {
        return Err(format!("per-kept-bit gain: {}", per_kept.gain));
    }
    let lossless = gain(&spec_half, 1.0, PostselectionThreshold::ZERO).map_err(|e| e.to_string())?;
    if (lossless.gain - 0.242_972_077_066_467_66).abs() > 5e-9 {
        return Err(format!("lossless gain: {}", lossless.gain));
    }
    Ok("gain, information integral and kept fraction match frozen references".into())
}

fn gain_ratios() -> Result<String, String> {
    let base = gain(&spec(ProtocolId::O4, 0.5)?, 1.0, PostselectionThreshold::ZERO)
        .map_err(|e| e.to_string())?;
    if base.gain <= 0.0 {
        return Err(format!("reference gain {} is not positive", base.gain));
    }
    let mut worst = 0.0f64;
    for id in all_protocols() {
        let point = gain(&spec(id, 0.5)?, 1.0, PostselectionThreshold::ZERO)
            .map_err(|e| e.to_string())?;
        let expected = point.pe / base.pe;
        let got = point.gain / base.gain;
        let diff = (got - expected).abs();
        worst = worst.max(diff);
        if diff > 1e-10 {
            return Err(format!(
                "{id}: gain ratio {got} differs from efficiency ratio {expected}"
            ));
        }
    }
    Ok(format!(
        "gain scales as the sifting efficiency across 9 protocols, worst gap {worst:.2e}"
    ))
}

fn postselected_rates() -> Result<String, String> {
    let half = 0.5f64.sqrt();
    for (a, x0, want) in [
        (1.0, 0.0, 0.022_750_131_948_179_207),
        (1.0, 0.5, 0.001_601_882_771_038_033_4),
        (half, 0.5, 0.011_794_023_171_351_908),
    ] {
        let got = postselected_ber(a, threshold(x0)?).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-9 {
            return Err(format!("a={a} x0={x0}: rate {got}, expected {want}"));
        }
    }
    Ok("postselected error rates match frozen references".into())
}

fn normalization() -> Result<String, String> {
    use cvqkd::keygain::correct_basis_pdf;
    let mut worst = 0.0f64;
    for &a in &[0.0, 0.5, 2.0] {
        let total = integrate(
            |x| {
                QuadratureValue::new(x)
                    .and_then(|q| correct_basis_pdf(q, a))
                    .expect("finite evaluation point")
            },
            -(a + 6.0),
            a + 6.0,
            1e-12,
        )
        .map_err(|e| e.to_string())?;
        let gap = (total - 1.0).abs();
        worst = worst.max(gap);
        if gap > 1e-10 {
            return Err(format!("a={a}: density integrates to {total}"));
        }
    }
    Ok(format!(
        "measurement densities integrate to one, worst gap {worst:.2e}"
    ))
}

fn session_statistics(quick: bool, seed: u64) -> (CheckReport, CheckReport) {
    let rounds = if quick { 30_000 } else { 100_000 };
    let outcome = (|| -> Result<(String, Result<String, String>), String> {
        let spec = spec(ProtocolId::O4, 1.0)?;
        let x0 = threshold(0.5)?;
        let config = SessionConfig {
            protocol: ProtocolId::O4,
            alpha: 1.0,
            eta: 0.5,
            x0,
            rounds,
            seed,
            transport: TransportKind::InMemory,
            record: RecordOptions::NONE,
        };
        let output = run_session(&config).map_err(|abort| abort.to_string())?;
        let p = spec.efficiency_f64();
        let sigma = (p * (1.0 - p) / rounds as f64).sqrt();
        let eff = output.stats.empirical_efficiency;
        if (eff - p).abs() > 3.0 * sigma {
            return Err(format!(
                "sifting efficiency {eff} vs {p} is outside 3 standard errors ({sigma:.2e})"
            ));
        }
        let efficiency_details = format!(
            "{rounds} rounds sifted {} ({eff:.5}), expected {p:.5} within 3x{sigma:.1e}",
            output.stats.correct_basis
        );

        let ber = (|| {
            let q = postselected_ber(0.5f64.sqrt(), x0).map_err(|e| e.to_string())?;
            let kept = output.stats.kept;
            if kept == 0 {
                return Err("no rounds kept".into());
            }
            let se = (q * (1.0 - q) / kept as f64).sqrt();
            let got = output.stats.empirical_ber_kept;
            if (got - q).abs() > 3.0 * se {
                return Err(format!(
                    "error rate {got} vs {q} is outside 3 standard errors ({se:.2e})"
                ));
            }
            Ok(format!(
                "{} mismatches over {kept} kept bits ({got:.5}), expected {q:.5} within 3x{se:.1e}",
                output.stats.mismatches
            ))
        })();
        Ok((efficiency_details, ber))
    })();

    match outcome {
        Ok((efficiency_details, ber)) => (
            CheckReport {
                name: "session-efficiency",
                passed: true,
                details: efficiency_details,
            },
            check("session-error-rate", || ber),
        ),
        Err(details) => (
            CheckReport {
                name: "session-efficiency",
                passed: false,
                details: details.clone(),
            },
            CheckReport {
                name: "session-error-rate",
                passed: false,
                details,
            },
        ),
    }
}

fn audited_session(seed: u64) -> Result<SessionOutput, String> {
    let config = SessionConfig {
        protocol: ProtocolId::Mb4,
        alpha: 1.0,
        eta: 0.8,
        x0: threshold(0.3)?,
        rounds: 2_000,
        seed: seed.wrapping_add(1),
        transport: TransportKind::InMemory,
        record: RecordOptions {
            wire: true,
            rounds: false,
            eve_tap: false,
        },
    };
    run_session(&config).map_err(|abort| abort.to_string())
}

fn transcript_audit(seed: u64) -> Result<String, String> {
    let output = audited_session(seed)?;
    let lines: Vec<String> = output.wire.iter().map(|m| m.encode()).collect();
    let spec = spec(ProtocolId::Mb4, 1.0)?;
    let report = transcript_check_lines(lines.iter().map(String::as_str), &spec)
        .map_err(|e| e.to_string())?;
    if report.rounds != 2_000 {
        return Err(format!("audit counted {} rounds, expected 2000", report.rounds));
    }
    Ok(format!(
        "a {}-message conversation passes the leak audit",
        report.messages
    ))
}

fn transcript_leak_control(seed: u64) -> Result<String, String> {
    let output = audited_session(seed)?;
    let mut wire = output.wire;
    let target = wire
        .iter_mut()
        .find(|m| m.kind == MessageKind::Announce && m.wrong_basis == Some(false))
        .ok_or("no kept announcement to corrupt")?;
    target.pair_set = Some(0);
    let spec = spec(ProtocolId::Mb4, 1.0)?;
    match transcript_check(&wire, &spec) {
        Err(e) => Ok(format!("injected state-set leak is caught: {e}")),
        Ok(_) => Err("audit accepted a transcript with an injected state-set leak".into()),
    }
}

fn eve_ensembles(quick: bool, seed: u64) -> Result<String, String> {
    let mut cases = vec![(ProtocolId::Mb4, if quick { 20_000 } else { 60_000 })];
    if !quick {
        cases.push((ProtocolId::Gen(2), 30_000));
    }
    let mut details = Vec::new();
    for (id, rounds) in cases {
        let config = SessionConfig {
            protocol: id,
            alpha: 1.0,
            eta: 0.5,
            x0: PostselectionThreshold::ZERO,
            rounds,
            seed: seed.wrapping_add(2),
            transport: TransportKind::InMemory,
            record: RecordOptions {
                wire: false,
                rounds: false,
                eve_tap: true,
            },
        };
        let output = run_session(&config).map_err(|abort| abort.to_string())?;
        let spec = spec(id, 1.0)?;
        let report = eve_empirical_check(&output.stats, &spec, 0.5).map_err(|e| e.to_string())?;
        if !report.passed {
            return Err(format!("{id}: {}", report.failures.join("; ")));
        }
        details.push(format!("{id}: {} ensemble groups", report.groups.len()));
    }
    Ok(format!(
        "tapped states follow the predicted ensembles ({})",
        details.join(", ")
    ))
}

fn replay(seed: u64) -> Result<String, String> {
    let config = SessionConfig {
        protocol: ProtocolId::Mb6,
        alpha: 1.0,
        eta: 0.7,
        x0: threshold(0.2)?,
        rounds: 1_500,
        seed: seed.wrapping_add(3),
        transport: TransportKind::InMemory,
        record: RecordOptions {
            wire: true,
            rounds: false,
            eve_tap: false,
        },
    };
    let first = run_session(&config).map_err(|abort| abort.to_string())?;
    let second = run_session(&config).map_err(|abort| abort.to_string())?;
    let socket_config = SessionConfig {
        transport: TransportKind::Socket,
        ..config
    };
    let third = run_session(&socket_config).map_err(|abort| abort.to_string())?;

    let wire_text =
        |output: &SessionOutput| -> String { output.wire.iter().map(|m| m.encode() + "\n").collect() };
    if first.alice_key != second.alice_key
        || first.bob_key != second.bob_key
        || wire_text(&first) != wire_text(&second)
    {
        return Err("two in-memory runs with one seed diverged".into());
    }
    if first.alice_key != third.alice_key
        || first.bob_key != third.bob_key
        || wire_text(&first) != wire_text(&third)
    {
        return Err("socket and in-memory runs with one seed diverged".into());
    }
    Ok(format!(
        "three runs reproduced {} wire messages and a {}-bit key byte for byte",
        first.wire.len(),
        first.alice_key.len()
    ))
}
