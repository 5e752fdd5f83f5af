//! Standard normal distribution function, its inverse, and a one-sample
//! Kolmogorov–Smirnov distance against N(0, 1).

use std::f64::consts::SQRT_2;

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// 1 − Φ(x), evaluated without cancellation in the right tail.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

// AS 241 coefficients, highest degree first.
const CENTRAL_NUM: [f64; 8] = [
    2509.080_928_730_122_7,
    33430.575_583_588_13,
    67265.770_927_008_7,
    45921.953_931_549_87,
    13731.693_765_509_461,
    1971.590_950_306_551_4,
    133.141_667_891_784_38,
    3.387_132_872_796_366_5,
];
const CENTRAL_DEN: [f64; 8] = [
    5226.495_278_852_546,
    28729.085_735_721_943,
    39307.895_800_092_71,
    21213.794_301_586_597,
    5394.196_021_424_751,
    687.187_007_492_057_9,
    42.313_330_701_600_91,
    1.0,
];
const NEAR_NUM: [f64; 8] = [
    7.745_450_142_783_414e-4,
    0.022_723_844_989_269_184,
    0.241_780_725_177_450_6,
    1.270_458_252_452_368_4,
    3.647_848_324_763_204_5,
    5.769_497_221_460_691,
    4.630_337_846_156_545,
    1.423_437_110_749_683_5,
];
const NEAR_DEN: [f64; 8] = [
    1.050_750_071_644_416_9e-9,
    5.475_938_084_995_345e-4,
    0.015_198_666_563_616_457,
    0.148_103_976_427_480_08,
    0.689_767_334_985_1,
    1.676_384_830_183_803_8,
    2.053_191_626_637_759,
    1.0,
];
const FAR_NUM: [f64; 8] = [
    2.010_334_399_292_288e-7,
    2.711_555_568_743_487_6e-5,
    0.001_242_660_947_388_078_4,
    0.026_532_189_526_576_124,
    0.296_560_571_828_504_9,
    1.784_826_539_917_291_3,
    5.463_784_911_164_114,
    6.657_904_643_501_103,
];
const FAR_DEN: [f64; 8] = [
    2.044_263_103_389_939_7e-15,
    1.421_511_758_316_446e-7,
    1.846_318_317_510_054_8e-5,
    7.868_691_311_456_133e-4,
    0.014_875_361_290_850_615,
    0.136_929_880_922_735_8,
    0.599_832_206_555_887_9,
    1.0,
];

fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Φ⁻¹(p) by Wichura's AS 241 (PPND16), relative accuracy about 1e-16.
///
/// Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
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
        return q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r);
    }

    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        horner(&NEAR_NUM, r) / horner(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&FAR_NUM, r) / horner(&FAR_DEN, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// sup_x |F_n(x) − Φ(x)| for the empirical distribution of `sample`.
///
/// Non-finite entries are ignored. Returns NaN on an empty sample.
pub fn ks_distance(sample: &[f64]) -> f64 {
    let mut xs: Vec<f64> = sample.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert_eq!(sf(0.0), 0.5);
        assert!((quantile(0.9) - 1.281_551_565_544_600_5).abs() < 1e-14);
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert!((quantile(0.05) + 1.644_853_626_951_472_2).abs() < 1e-14);
        assert!((quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-12);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let z = quantile(p);
            assert!((cdf(z) - p).abs() < 1e-13, "p = {p}");
        }
        for k in 3..300 {
            let p = 10f64.powi(-k / 10);
            let z = quantile(p);
            assert!(((cdf(z) - p) / p).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn endpoints() {
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(quantile(1.0), f64::INFINITY);
        assert!(quantile(1.5).is_nan());
    }

    #[test]
    fn ks_of_quantile_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n)
            .map(|i| quantile((i as f64 + 0.5) / n as f64))
            .collect();
        assert!((ks_distance(&xs) - 0.5 / n as f64).abs() < 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        assert!(ks_distance(&shifted) > 0.3);
    }
}
