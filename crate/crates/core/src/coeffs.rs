//! Problem data: velocity, diffusivity, forcing and initial condition, plus the
//! registry of benchmark cases.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::composite_gauss4;

/// Space-time field `(x, t) -> value`.
pub type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Spatial field `x -> value`.
pub type SpatialField = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of `u_t + c u_x = (mu u_x)_x + g`, `u(., 0) = f`, periodic on [0, 1].
#[derive(Clone)]
pub struct CoefficientSet {
    pub velocity: Field,
    pub diffusivity: Field,
    pub forcing: SpatialField,
    pub initial: SpatialField,
    /// Nominal wavelength of the diffusivity oscillation.
    pub eps_scale: f64,
    /// Nominal wavelength of the velocity oscillation (infinite if `c` is constant in space).
    pub delta_scale: f64,
    /// Whether `g` vanishes identically.
    pub unforced: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("eps_scale", &self.eps_scale)
            .field("delta_scale", &self.delta_scale)
            .field("unforced", &self.unforced)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// Builds a set from closures. Scales default to 1 (no fine oscillation).
    pub fn new<C, M, F>(velocity: C, diffusivity: M, initial: F) -> Self
    where
        C: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        M: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            velocity: Arc::new(velocity),
            diffusivity: Arc::new(diffusivity),
            forcing: Arc::new(|_| 0.0),
            initial: Arc::new(initial),
            eps_scale: 1.0,
            delta_scale: f64::INFINITY,
            unforced: true,
        }
    }

    pub fn with_forcing<G>(mut self, forcing: G) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.forcing = Arc::new(forcing);
        self.unforced = false;
        self
    }

    pub fn with_scales(mut self, eps_scale: f64, delta_scale: f64) -> Self {
        self.eps_scale = eps_scale;
        self.delta_scale = delta_scale;
        self
    }

    #[inline]
    pub fn c(&self, x: f64, t: f64) -> f64 {
        (self.velocity)(x, t)
    }

    #[inline]
    pub fn mu(&self, x: f64, t: f64) -> f64 {
        (self.diffusivity)(x, t)
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        (self.forcing)(x)
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        (self.initial)(x)
    }

    /// Shortest coefficient wavelength.
    pub fn shortest_scale(&self) -> f64 {
        self.eps_scale.min(self.delta_scale)
    }

    /// Panel count for spatial averages: `max(200, 10 k)` with `k` the highest frequency.
    pub fn average_panels(&self) -> usize {
        let k = (1.0 / self.shortest_scale()).ceil();
        let k = if k.is_finite() { k as usize } else { 0 };
        200.max(10 * k)
    }

    /// Spatial mean `<c>(t)` over [0, 1].
    pub fn mean_velocity(&self, t: f64) -> f64 {
        composite_gauss4(|x| self.c(x, t), 0.0, 1.0, self.average_panels())
    }

    /// Normalized L1 norm of the local Peclet number `c L / mu` at time `t`.
    pub fn peclet_diagnostic(&self, length: f64, t: f64) -> Result<f64> {
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Peclet length must be positive, got {length}"
            )));
        }
        Ok(composite_gauss4(
            |x| (self.c(x, t) * length / self.mu(x, t)).abs(),
            0.0,
            1.0,
            self.average_panels(),
        ))
    }

    /// Minimum of `mu` over a uniform sample of `samples` points at the given times.
    pub fn min_diffusivity(&self, samples: usize, times: &[f64]) -> f64 {
        let mut min = f64::INFINITY;
        for &t in times {
            for i in 0..samples {
                min = min.min(self.mu(i as f64 / samples as f64, t));
            }
        }
        min
    }
}

/// Benchmark case identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Convergence,
}

impl CaseId {
    pub fn label(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Case4 => "case4",
            CaseId::Case5 => "case5",
            CaseId::Convergence => "convergence",
        }
    }
}

impl std::str::FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "case1" => Ok(CaseId::Case1),
            "2" | "case2" => Ok(CaseId::Case2),
            "3" | "case3" => Ok(CaseId::Case3),
            "4" | "case4" => Ok(CaseId::Case4),
            "5" | "case5" => Ok(CaseId::Case5),
            "convergence" | "conv" => Ok(CaseId::Convergence),
            other => Err(Error::UnknownCase(other.to_string())),
        }
    }
}

/// Parameters selecting and tuning a benchmark case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseParams {
    pub case: CaseId,
    /// Oscillation index (cases 1, 2, 4, 5 and the convergence data).
    pub k: Option<u32>,
    /// Mean velocity (case 3).
    pub v: Option<f64>,
    /// Velocity variation (convergence data).
    pub alpha: Option<f64>,
    /// Width of the initial Gaussian.
    pub sigma: f64,
    /// Center of the initial Gaussian.
    pub nu: f64,
}

impl CaseParams {
    pub fn new(case: CaseId) -> Self {
        Self {
            case,
            k: None,
            v: None,
            alpha: None,
            sigma: 0.1,
            nu: 0.5,
        }
    }

    pub fn k(mut self, k: u32) -> Self {
        self.k = Some(k);
        self
    }

    pub fn v(mut self, v: f64) -> Self {
        self.v = Some(v);
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn require_k(&self) -> Result<f64> {
        match self.k {
            Some(k) if k > 0 => Ok(k as f64),
            Some(_) => Err(Error::InvalidParameter(
                "k must be a positive integer".into(),
            )),
            None => Err(Error::InvalidParameter(format!(
                "{} requires the oscillation index k",
                self.case.label()
            ))),
        }
    }

    fn require_v(&self) -> Result<f64> {
        self.v
            .ok_or_else(|| Error::InvalidParameter("case3 requires the mean velocity v".into()))
    }

    fn require_alpha(&self) -> Result<f64> {
        self.alpha.ok_or_else(|| {
            Error::InvalidParameter("convergence data requires the velocity variation alpha".into())
        })
    }
}

/// Normalized Gaussian `exp(-(x - nu)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`.
pub fn gaussian(sigma: f64, nu: f64) -> Result<impl Fn(f64) -> f64 + Send + Sync + Copy> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    Ok(move |x: f64| norm * (-(x - nu).powi(2) / (2.0 * sigma * sigma)).exp())
}

/// Initial condition of the benchmark cases.
pub fn initial_condition(params: &CaseParams) -> Result<impl Fn(f64) -> f64 + Send + Sync + Copy> {
    gaussian(params.sigma, params.nu)
}

/// Oscillating diffusivity profile `0.01 + 0.0099 cos(2 pi freq x)`.
#[inline]
fn oscillating(freq: f64, x: f64) -> f64 {
    0.01 + 0.0099 * (2.0 * PI * freq * x).cos()
}

/// Closed-form coefficients of the benchmark cases.
pub fn make_case(params: &CaseParams) -> Result<CoefficientSet> {
    let f = initial_condition(params)?;
    let set = match params.case {
        CaseId::Case1 => {
            let k = params.require_k()?;
            CoefficientSet::new(
                |_x, t| 5.0 * (10.0 * PI * t).cos(),
                move |x, t| 5.0 * (t + 1.0) * oscillating(k, x),
                f,
            )
            .with_scales(1.0 / k, f64::INFINITY)
        }
        CaseId::Case2 => {
            let k = params.require_k()?;
            CoefficientSet::new(
                move |x, _t| 10.0 + (2.0 * k * PI * x).cos(),
                |x, t| 5.0 * (t + 1.0) * oscillating(30.0, x),
                f,
            )
            .with_scales(1.0 / 30.0, 1.0 / k)
        }
        CaseId::Case3 => {
            let v = params.require_v()?;
            CoefficientSet::new(
                move |x, _t| v + 1.5 * (2.0 * PI * x).cos() + 0.5 * (60.0 * PI * x).cos(),
                |x, t| 5.0 * (t + 1.0) * oscillating(25.0, x),
                f,
            )
            .with_scales(1.0 / 25.0, 1.0 / 30.0)
        }
        CaseId::Case4 | CaseId::Case5 => {
            let k = params.require_k()?;
            let set = CoefficientSet::new(
                |x, t| (2.0 * t + 0.5) * (3.0 + (2.0 * PI * x).cos() + (60.0 * PI * x).cos()),
                move |x, _t| oscillating(k, x),
                f,
            )
            .with_scales(1.0 / k, 1.0 / 30.0);
            if params.case == CaseId::Case5 {
                set.with_forcing(|x| 0.015 * (8.0 * PI * x).sin())
            } else {
                set
            }
        }
        CaseId::Convergence => {
            let k = params.require_k()?;
            let alpha = params.require_alpha()?;
            CoefficientSet::new(
                move |x, t| (2.0 * t + 0.5) * (1.5 + 0.5 * alpha * (2.0 * PI * x).cos()),
                move |x, _t| oscillating(k, x),
                f,
            )
            .with_scales(1.0 / k, if alpha == 0.0 { f64::INFINITY } else { 1.0 })
        }
    };
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_cases() -> Vec<CoefficientSet> {
        vec![
            make_case(&CaseParams::new(CaseId::Case1).k(30)).unwrap(),
            make_case(&CaseParams::new(CaseId::Case2).k(3)).unwrap(),
            make_case(&CaseParams::new(CaseId::Case3).v(4.0)).unwrap(),
            make_case(&CaseParams::new(CaseId::Case4).k(200)).unwrap(),
            make_case(&CaseParams::new(CaseId::Case5).k(15)).unwrap(),
            make_case(&CaseParams::new(CaseId::Convergence).k(10).alpha(1.0)).unwrap(),
        ]
    }

    #[test]
    fn case_point_values() {
        let c1 = make_case(&CaseParams::new(CaseId::Case1).k(30)).unwrap();
        assert!((c1.c(0.0, 0.0) - 5.0).abs() < 1e-15);
        assert!((c1.mu(0.0, 0.0) - 0.0995).abs() < 1e-15);
        let c2 = make_case(&CaseParams::new(CaseId::Case2).k(3)).unwrap();
        assert!((c2.c(0.0, 0.7) - 11.0).abs() < 1e-15);
        let c5 = make_case(&CaseParams::new(CaseId::Case5).k(15)).unwrap();
        assert!((c5.g(1.0 / 16.0) - 0.015).abs() < 1e-15);
        assert!(!c5.unforced);
        let c4 = make_case(&CaseParams::new(CaseId::Case4).k(15)).unwrap();
        assert_eq!(c4.g(0.3), 0.0);
    }

    #[test]
    fn missing_parameters_rejected() {
        assert!(make_case(&CaseParams::new(CaseId::Case1)).is_err());
        assert!(make_case(&CaseParams::new(CaseId::Case3)).is_err());
        assert!(make_case(&CaseParams::new(CaseId::Convergence).k(10)).is_err());
        assert!(make_case(&CaseParams::new(CaseId::Case1).k(0)).is_err());
        assert!("case9".parse::<CaseId>().is_err());
        let mut p = CaseParams::new(CaseId::Case1).k(3);
        p.sigma = 0.0;
        assert!(make_case(&p).is_err());
    }

    #[test]
    fn gaussian_peak_and_mass() {
        let f = gaussian(0.1, 0.5).unwrap();
        assert!((f(0.5) - 3.989_422_804_014_327).abs() < 1e-12);
        let g = gaussian(0.05, 0.3).unwrap();
        assert!((g(0.3) - 1.0 / (0.05 * (2.0 * PI).sqrt())).abs() < 1e-12);
        for sigma in [0.05, 0.08, 0.1] {
            let f = gaussian(sigma, 0.5).unwrap();
            let mass = composite_gauss4(f, 0.0, 1.0, 400);
            assert!((mass - 1.0).abs() < 1e-6, "sigma {sigma}: mass {mass}");
        }
    }

    #[test]
    fn mean_velocities() {
        let c2 = make_case(&CaseParams::new(CaseId::Case2).k(3)).unwrap();
        assert!((c2.mean_velocity(0.3) - 10.0).abs() < 1e-12);
        let c3 = make_case(&CaseParams::new(CaseId::Case3).v(4.0)).unwrap();
        assert!((c3.mean_velocity(0.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn peclet_examples() {
        let unit = CoefficientSet::new(|_, _| 1.0, |_, _| 1.0, |_| 0.0);
        assert!((unit.peclet_diagnostic(1.0, 0.0).unwrap() - 1.0).abs() < 1e-13);
        assert!(unit.peclet_diagnostic(0.0, 0.0).is_err());

        let c2 = make_case(&CaseParams::new(CaseId::Case2).k(60)).unwrap();
        let pe = c2.peclet_diagnostic(1.0, 0.0).unwrap();
        assert!((1e2..=1e5).contains(&pe), "Peclet {pe}");

        let doubled = {
            let base = c2.clone();
            let mut d = c2.clone();
            d.diffusivity = Arc::new(move |x, t| 2.0 * base.mu(x, t));
            d
        };
        let half = doubled.peclet_diagnostic(1.0, 0.0).unwrap();
        assert!((half - pe / 2.0).abs() < 1e-9 * pe);
    }

    #[test]
    fn diffusivity_bounded_below() {
        let times: Vec<f64> = (0..=4).map(|i| i as f64 * 0.25).collect();
        for cs in all_cases() {
            assert!(cs.min_diffusivity(10_000, &times) >= 1e-4 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn fields_are_periodic() {
        for cs in all_cases() {
            for i in 0..50 {
                let x = i as f64 / 50.0;
                let t = 0.37;
                assert!((cs.c(x + 1.0, t) - cs.c(x, t)).abs() < 1e-12);
                assert!((cs.mu(x + 1.0, t) - cs.mu(x, t)).abs() < 1e-12);
                assert!((cs.g(x + 1.0) - cs.g(x)).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn case1_mean_matches_closed_form(t in 0.0f64..1.0) {
            let c1 = make_case(&CaseParams::new(CaseId::Case1).k(30)).unwrap();
            let exact = 5.0 * (10.0 * PI * t).cos();
            prop_assert!((c1.mean_velocity(t) - exact).abs() < 1e-12);
        }
    }
}
