//! Distribution helpers: the standard-normal quantile and the Student-t tail.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Inverse of the standard normal CDF.
///
/// Wichura's algorithm AS 241 (PPND16): rational approximations on three
/// regions of `p`, relative accuracy about 1e-16 over the open unit interval.
/// Returns `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&CENTRAL_NUM, r) / poly(&CENTRAL_DEN, r);
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&INTERMEDIATE_NUM, r) / poly(&INTERMEDIATE_DEN, r)
    } else {
        let r = r - 5.0;
        poly(&TAIL_NUM, r) / poly(&TAIL_DEN, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Horner evaluation, coefficients in increasing degree.
fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const INTERMEDIATE_NUM: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const INTERMEDIATE_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_7e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const TAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const TAIL_DEN: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];

/// Two-sided quantile `z` with `P(|Z| <= z) = level`.
pub fn two_sided_normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(normal_quantile(0.5 * (1.0 + level)))
}

/// Two-sided p-value `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::non_finite("t statistic"));
    }
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::invalid(format!("student t with df = {df}: {e}")))?;
    // Lower tail at -|t| avoids the cancellation in 1 - cdf(|t|).
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // 50-digit mpmath values of sqrt(2) * erfinv(2p - 1).
    const QUANTILE_ORACLE: [(f64, f64); 23] = [
        (1e-300, -37.047096299361199237),
        (1e-100, -21.273453560965324295),
        (1e-20, -9.2623400897984075737),
        (1e-10, -6.3613409024040562047),
        (1e-5, -4.2648907939228246285),
        (0.001, -3.0902323061678135415),
        (0.01, -2.3263478740408411009),
        (0.025, -1.9599639845400542355),
        (0.1, -1.281551565544600467),
        (0.2, -0.84162123357291420518),
        (0.3, -0.52440051270804078404),
        (0.42, -0.20189347914185085095),
        (0.5, 0.0),
        (0.6, 0.2533471031357997988),
        (0.75, 0.6744897501960817432),
        (0.8, 0.84162123357291420518),
        (0.9, 1.281551565544600467),
        (0.975, 1.9599639845400542355),
        (0.99, 2.3263478740408411009),
        (0.999, 3.0902323061678135415),
        (0.99999, 4.2648907939228246285),
        (0.9999999999, 6.3613409024040562047),
        (0.7580292754808566502, 0.69997735099785076542),
    ];

    #[test]
    fn quantile_matches_high_precision_oracle() {
        for &(p, expected) in &QUANTILE_ORACLE {
            let got = normal_quantile(p);
            let tol = 1e-9 * expected.abs().max(1e-300);
            // The decimal p is itself rounded to binary; allow for dz/dp at that rounding.
            let pdf = (-0.5 * expected * expected).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let p_slack = f64::EPSILON * p / pdf;
            assert!(
                (got - expected).abs() <= tol + p_slack,
                "p = {p}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn ucl_quantile_at_first_decision() {
        let alpha = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt();
        assert!((alpha - 0.2419707245191433498).abs() < 1e-15);
        let z = normal_quantile(1.0 - alpha);
        assert!((z - 0.69997735099785076542).abs() < 1e-12);
    }

    #[test]
    fn z_for_95_percent() {
        let z = two_sided_normal_quantile(0.95).unwrap();
        assert!((z - 1.9599639845400542355).abs() < 1e-12);
    }

    #[test]
    fn quantile_endpoints_and_domain() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(-0.1).is_nan());
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn quantile_is_antisymmetric() {
        for &p in &[1e-300, 1e-20, 1e-5, 0.01, 0.2, 0.4, 0.49] {
            let lo = normal_quantile(p);
            let hi = normal_quantile(1.0 - p);
            if p > 1e-15 {
                assert!((lo + hi).abs() <= 1e-9 * lo.abs(), "p = {p}");
            }
            assert!(lo < 0.0);
        }
    }

    #[test]
    fn two_sided_rejects_bad_levels() {
        assert!(two_sided_normal_quantile(0.0).is_err());
        assert!(two_sided_normal_quantile(1.0).is_err());
        assert!(two_sided_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn t_p_value_at_zero_is_one() {
        assert_eq!(student_t_two_sided_p(0.0, 10.0).unwrap(), 1.0);
        assert!(student_t_two_sided_p(1.0, 0.0).is_err());
    }
}
