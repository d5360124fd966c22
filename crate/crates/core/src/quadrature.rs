//! Gauss-Legendre rules on the unit interval.

/// 3-point Gauss rule on [0, 1]: `(node, weight)`.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// 4-point Gauss rule on [0, 1].
pub const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// Composite 4-point Gauss integral of `f` over `[a, b]` on `panels` equal panels.
pub fn composite_gauss4<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let left = a + p as f64 * width;
        let mut panel = 0.0;
        for &(s, w) in GAUSS4.iter() {
            panel += w * f(left + s * width);
        }
        total += panel * width;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        // degree 5 for 3 points, degree 7 for 4 points
        let p5 = |x: f64| 6.0 * x.powi(5) - x.powi(2);
        let exact5 = 1.0 - 1.0 / 3.0;
        let g3: f64 = GAUSS3.iter().map(|&(s, w)| w * p5(s)).sum();
        assert!((g3 - exact5).abs() < 1e-14);

        let p7 = |x: f64| 8.0 * x.powi(7) + 1.0;
        let g4: f64 = GAUSS4.iter().map(|&(s, w)| w * p7(s)).sum();
        assert!((g4 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_matches_trig_integral() {
        let v = composite_gauss4(
            |x| (2.0 * std::f64::consts::PI * x).sin().powi(2),
            0.0,
            1.0,
            50,
        );
        assert!((v - 0.5).abs() < 1e-13);
    }
}
