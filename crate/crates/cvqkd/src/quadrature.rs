//! Adaptive numerical integration on finite intervals.
//!
//! Each rule application evaluates a 15-point Kronrod extension of the
//! embedded 7-point Gauss rule. The gap between the two estimates drives a
//! globally adaptive bisection: the segment with the largest error estimate
//! is split until the summed estimate meets the caller's absolute
//! tolerance.

use crate::{Error, Result};

/// Hard cap on live segments; hitting it means the integrand resists the
/// rule (a genuine singularity or a tolerance below roundoff).
const MAX_SEGMENTS: usize = 4096;

/// Kronrod abscissae on [0, 1] (symmetric about the midpoint).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// 7-point Gauss weights, paired with the odd-index abscissae above.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod weights.
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[derive(Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// `a <= b` and both endpoints finite; degenerate intervals integrate to
/// zero. Fails if the summed error estimate cannot be brought under
/// `abs_tol` or the integrand produces a non-finite value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite {
            context: "integrate: lower bound",
            value: a,
        });
    }
    if !b.is_finite() {
        return Err(Error::NonFinite {
            context: "integrate: upper bound",
            value: b,
        });
    }
    if !(abs_tol > 0.0 && abs_tol.is_finite()) {
        return Err(Error::OutOfDomain {
            context: "integrate",
            message: format!("tolerance must be positive and finite, got {abs_tol}"),
        });
    }
    if a > b {
        return Err(Error::OutOfDomain {
            context: "integrate",
            message: format!("bounds out of order: [{a}, {b}]"),
        });
    }
    if a == b {
        return Ok(0.0);
    }

    let mut segments = vec![kronrod(&f, a, b)?];
    loop {
        let total_error: f64 = segments.iter().map(|s| s.error).sum();
        if total_error <= abs_tol {
            return Ok(segments.iter().map(|s| s.value).sum());
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureNoConvergence {
                a,
                b,
                estimate: total_error,
                tolerance: abs_tol,
            });
        }

        let worst = segments
            .iter()
            .enumerate()
            .max_by(|(_, s), (_, t)| s.error.total_cmp(&t.error))
            .map(|(i, _)| i)
            .expect("segment list is never empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval narrowed to machine resolution without converging.
            return Err(Error::QuadratureNoConvergence {
                a,
                b,
                estimate: total_error,
                tolerance: abs_tol,
            });
        }
        segments.push(kronrod(&f, seg.a, mid)?);
        segments.push(kronrod(&f, mid, seg.b)?);
    }
}

/// One 15-point Kronrod evaluation with the QUADPACK error rescaling.
fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite {
                context: "integrate: integrand value",
                value: y,
            })
        }
    };

    let f_center = eval(center)?;
    let mut result_gauss = WG[3] * f_center;
    let mut result_kronrod = WGK[7] * f_center;
    let mut result_abs = result_kronrod.abs();

    let mut samples = [0.0f64; 15];
    samples[7] = f_center;

    for j in 0..7 {
        let x = half * XGK[j];
        let f_lo = eval(center - x)?;
        let f_hi = eval(center + x)?;
        samples[j] = f_lo;
        samples[14 - j] = f_hi;
        let sum = f_lo + f_hi;
        result_kronrod += WGK[j] * sum;
        result_abs += WGK[j] * (f_lo.abs() + f_hi.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * sum;
        }
    }

    let mean = 0.5 * result_kronrod;
    let mut result_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((samples[j] - mean).abs() + (samples[14 - j] - mean).abs());
    }

    let value = result_kronrod * half;
    result_abs *= half.abs();
    result_asc *= half.abs();

    let mut error = ((result_kronrod - result_gauss) * half).abs();
    if result_asc != 0.0 && error != 0.0 {
        let scale = (200.0 * error / result_asc).powf(1.5);
        error = if scale < 1.0 {
            result_asc * scale
        } else {
            result_asc
        };
    }
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * result_abs);
    }

    Ok(Segment {
        a,
        b,
        value,
        error,
    })
}
