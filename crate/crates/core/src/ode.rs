//! Embedded Dormand-Prince 5(4) integrator for scalar ODEs sampled on a fixed grid.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th order weights (also row 7 of the tableau, FSAL)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// difference between 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub safety: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            safety: 0.9,
            min_step: 1e-14,
            max_steps: 10_000_000,
        }
    }

    /// Integrates `y' = rhs(t, y)` from `times[0]` and returns `y` at every grid time.
    ///
    /// Steps never straddle a grid time, so no interpolation is needed.
    pub fn integrate<F>(&self, rhs: F, y0: f64, times: &[f64]) -> Result<Vec<f64>>
    where
        F: Fn(f64, f64) -> f64,
    {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter(
                "ODE tolerance must be positive".into(),
            ));
        }
        let mut out = Vec::with_capacity(times.len());
        if times.is_empty() {
            return Ok(out);
        }
        let mut t = times[0];
        let mut y = y0;
        out.push(y);
        let mut k1 = rhs(t, y);
        let mut h = times.get(1).map(|t1| t1 - times[0]).unwrap_or(0.0);
        let mut steps = 0usize;

        for &target in &times[1..] {
            while t < target {
                steps += 1;
                if steps > self.max_steps {
                    return Err(Error::OdeFailure {
                        time: t,
                        reason: "step budget exhausted".into(),
                    });
                }
                let remaining = target - t;
                let last = h >= remaining;
                let step = if last { remaining } else { h };

                let k2 = rhs(t + C2 * step, y + step * A21 * k1);
                let k3 = rhs(t + C3 * step, y + step * (A31 * k1 + A32 * k2));
                let k4 = rhs(t + C4 * step, y + step * (A41 * k1 + A42 * k2 + A43 * k3));
                let k5 = rhs(
                    t + C5 * step,
                    y + step * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
                );
                let k6 = rhs(
                    t + step,
                    y + step * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
                );
                let y_new = y + step * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
                let t_new = if last { target } else { t + step };
                let k7 = rhs(t_new, y_new);

                let err = step * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
                let scale = self.atol + self.rtol * y.abs().max(y_new.abs());
                let ratio = (err / scale).abs();

                if ratio <= 1.0 {
                    t = t_new;
                    y = y_new;
                    k1 = k7;
                    let grow = if ratio == 0.0 {
                        5.0
                    } else {
                        (self.safety * ratio.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    // keep the controller's step when the grid forced a short one
                    if !last || step >= h {
                        h = step * grow;
                    }
                } else {
                    h = step * (self.safety * ratio.powf(-0.2)).clamp(0.1, 1.0);
                    if h < self.min_step {
                        return Err(Error::OdeFailure {
                            time: t,
                            reason: format!("step size underflow ({h:.3e})"),
                        });
                    }
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..=n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn exponential_growth() {
        let times = grid(100, 0.01);
        let ys = Dopri5::new(1e-10).integrate(|_, y| y, 1.0, &times).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y - t.exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn time_dependent_velocity() {
        // x' = 5 cos(10 pi t) => x = x0 + sin(10 pi t) / (2 pi)
        let times = grid(1000, 1e-3);
        let ys = Dopri5::new(1e-9)
            .integrate(|t, _| 5.0 * (10.0 * PI * t).cos(), 0.3, &times)
            .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            let exact = 0.3 + (10.0 * PI * t).sin() / (2.0 * PI);
            assert!((y - exact).abs() < 1e-9);
        }
        assert!((ys[50] - (0.3 + 1.0 / (2.0 * PI))).abs() < 1e-9);
    }

    #[test]
    fn coarse_grid_uses_substeps() {
        let times = vec![0.0, 2.0];
        let ys = Dopri5::new(1e-10)
            .integrate(|_, y| -3.0 * y, 1.0, &times)
            .unwrap();
        assert!((ys[1] - (-6.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(Dopri5::new(0.0)
            .integrate(|_, y| y, 1.0, &[0.0, 1.0])
            .is_err());
    }
}
