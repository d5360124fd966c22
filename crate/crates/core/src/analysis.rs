//! Error norms against a reference field and aggregation of convergence studies.

use std::io::Write;

use crate::coeffs::CaseParams;
use crate::error::{Error, Result};
use crate::fem1d::FieldSnapshot;

/// Errors of one snapshot relative to the reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub time: f64,
    pub rel_l2: f64,
    pub rel_linf: f64,
    /// Relative error of the derivative (seminorm).
    pub rel_h1: f64,
    pub max_dev: f64,
}

/// Periodic trapezoid L2 norm on a uniform grid of spacing `h`.
pub fn l2_norm(values: &[f64], h: f64) -> f64 {
    (h * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn linf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// L2 norm of the periodic forward-difference derivative.
pub fn h1_seminorm(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let d: Vec<f64> = (0..n)
        .map(|j| (values[(j + 1) % n] - values[j]) / h)
        .collect();
    l2_norm(&d, h)
}

fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn relative(err: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        err / norm
    } else {
        err
    }
}

/// Compares two snapshots on the same uniform periodic grid.
pub fn error_norms(candidate: &FieldSnapshot, reference: &FieldSnapshot) -> Result<ErrorReport> {
    if candidate.x.len() != reference.x.len() || candidate.x.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} grid points",
            candidate.x.len(),
            reference.x.len()
        )));
    }
    if candidate
        .x
        .iter()
        .zip(&reference.x)
        .any(|(a, b)| (a - b).abs() > 1e-12)
        || (candidate.time - reference.time).abs() > 1e-9
    {
        return Err(Error::GridMismatch(format!(
            "snapshots at t = {} and t = {} on different grids",
            candidate.time, reference.time
        )));
    }
    let h = 1.0 / reference.x.len() as f64;
    let e: Vec<f64> = candidate
        .u
        .iter()
        .zip(&reference.u)
        .map(|(a, b)| a - b)
        .collect();
    let r = &reference.u;
    let max_ref = max_value(r);
    Ok(ErrorReport {
        time: reference.time,
        rel_l2: relative(l2_norm(&e, h), l2_norm(r, h)),
        rel_linf: relative(linf_norm(&e), linf_norm(r)),
        rel_h1: relative(h1_seminorm(&e, h), h1_seminorm(r, h)),
        max_dev: relative((max_value(&candidate.u) - max_ref).abs(), max_ref.abs()),
    })
}

/// One report per pair of snapshots; both series must share their times.
pub fn error_series(
    candidate: &[FieldSnapshot],
    reference: &[FieldSnapshot],
) -> Result<Vec<ErrorReport>> {
    if candidate.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} candidate snapshots vs {} reference snapshots",
            candidate.len(),
            reference.len()
        )));
    }
    candidate
        .iter()
        .zip(reference)
        .map(|(c, r)| error_norms(c, r))
        .collect()
}

/// Position of the maximum on a snapshot grid.
pub fn peak_position(s: &FieldSnapshot) -> f64 {
    let (j, _) =
        s.u.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bj, bv), (j, &v)| {
                if v > bv {
                    (j, v)
                } else {
                    (bj, bv)
                }
            });
    s.x[j]
}

/// Shortest signed periodic distance `a - b`.
pub fn periodic_offset(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Grid time rounded to nine decimals, so `7 * 0.1` prints as `0.7`.
pub fn time_label(t: f64) -> String {
    format!("{}", (t * 1e9).round() / 1e9)
}

pub fn write_series_csv<W: Write>(
    out: &mut W,
    rows: &[(String, ErrorReport)],
) -> std::io::Result<()> {
    writeln!(out, "method,t,rel_L2,rel_Linf,rel_H1,max_dev")?;
    for (method, r) in rows {
        writeln!(
            out,
            "{method},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            time_label(r.time),
            r.rel_l2,
            r.rel_linf,
            r.rel_h1,
            r.max_dev
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    /// Coarse resolution in the table's counting convention.
    pub n: usize,
    pub rel_l2: f64,
    pub rel_linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// `e(N_i) / e(N_{i+1})` for consecutive rows.
    pub fn reduction_factors(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[0].rel_l2 / w[1].rel_l2)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "N,rel_L2,rel_Linf")?;
        for r in &self.rows {
            writeln!(out, "{},{:.10e},{:.10e}", r.n, r.rel_l2, r.rel_linf)?;
        }
        Ok(())
    }

    /// gnuplot script plotting error vs N on log axes from `data_file`.
    pub fn gnuplot_script(&self, data_file: &str, title: &str) -> String {
        format!(
            "set datafile separator ','\n\
             set logscale xy\n\
             set key top right\n\
             set xlabel 'N'\n\
             set ylabel 'relative error'\n\
             set title '{title}'\n\
             set terminal pngcairo size 800,600\n\
             set output '{data_file}.png'\n\
             plot '{data_file}' every ::1 using 1:2 with linespoints title 'rel L2', \\\n\
             \x20    '{data_file}' every ::1 using 1:3 with linespoints title 'rel Linf'\n"
        )
    }
}

/// Runs the characteristic MsFEM for every resolution against one shared reference.
pub fn convergence_table(
    params: &CaseParams,
    config: &crate::experiment::ExperimentConfig,
) -> Result<ConvergenceTable> {
    crate::experiment::convergence_rows(params, config).map(|rows| ConvergenceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn snap(u: Vec<f64>) -> FieldSnapshot {
        let n = u.len();
        FieldSnapshot {
            time: 1.0,
            x: FieldSnapshot::grid(n),
            u,
        }
    }

    fn sine(n: usize) -> Vec<f64> {
        FieldSnapshot::grid(n)
            .iter()
            .map(|x| (2.0 * PI * x).sin())
            .collect()
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let r = snap(sine(100));
        let e = error_norms(&r, &r).unwrap();
        assert_eq!(
            (e.rel_l2, e.rel_linf, e.rel_h1, e.max_dev),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn constant_offset_max_deviation() {
        let base: Vec<f64> = sine(64).iter().map(|v| 3.0 + v).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 1e-3).collect();
        let e = error_norms(&snap(shifted), &snap(base)).unwrap();
        assert!((e.max_dev - 2.5e-4).abs() < 1e-15);
        assert!(e.rel_h1 < 1e-12);
    }

    #[test]
    fn doubled_field_has_unit_error() {
        let r = sine(50);
        let c: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let e = error_norms(&snap(c), &snap(r)).unwrap();
        assert!((e.rel_l2 - 1.0).abs() < 1e-14);
        assert!((e.rel_linf - 1.0).abs() < 1e-14);
        assert!((e.rel_h1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn discrete_norms_of_sine() {
        let n = 200;
        let h = 1.0 / n as f64;
        let s = sine(n);
        assert!((l2_norm(&s, h) - 0.5f64.sqrt()).abs() < 1e-13);
        // forward differences of sin(2 pi x): amplitude 2 sin(pi h) / h
        let amp = 2.0 * (PI * h).sin() / h;
        assert!((h1_seminorm(&s, h) - amp * 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn mismatched_grids_rejected() {
        assert!(error_norms(&snap(sine(10)), &snap(sine(11))).is_err());
        let mut late = snap(sine(10));
        late.time = 0.5;
        assert!(error_norms(&late, &snap(sine(10))).is_err());
        assert!(error_series(&[snap(sine(4))], &[]).is_err());
        assert!(error_series(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn peaks_and_offsets() {
        let s = snap((0..10).map(|j| if j == 7 { 2.0 } else { 0.0 }).collect());
        assert!((peak_position(&s) - 0.7).abs() < 1e-15);
        assert!((periodic_offset(0.95, 0.05) + 0.1).abs() < 1e-12);
        assert!((periodic_offset(0.3, 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn table_csv_and_script() {
        let t = ConvergenceTable {
            rows: vec![ConvergenceRow {
                n: 24,
                rel_l2: 1e-3,
                rel_linf: 2e-3,
            }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(t.reduction_factors().is_empty());
        let script = t.gnuplot_script("table_6.csv", "k = 10");
        assert!(script.contains("set logscale xy"));
        assert!(script.contains("table_6.csv"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn norm_axioms(
            a in prop::collection::vec(-5.0f64..5.0, 32),
            b in prop::collection::vec(-5.0f64..5.0, 32),
            s in -4.0f64..4.0,
        ) {
            let h = 1.0 / 32.0;
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
            for norm in [
                |v: &[f64], h: f64| l2_norm(v, h),
                |v: &[f64], _h: f64| linf_norm(v),
                |v: &[f64], h: f64| h1_seminorm(v, h),
            ] {
                let (na, nb, ns) = (norm(&a, h), norm(&b, h), norm(&sum, h));
                prop_assert!(ns <= na + nb + 1e-12 * (na + nb));
                let nsc = norm(&scaled, h);
                prop_assert!((nsc - s.abs() * na).abs() <= 1e-12 * (1.0 + nsc));
            }
        }
    }
}
