//! Advection-induced coordinates.
//!
//! Each coarse node `xi_m` follows a path `x(xi_m, tau)`; inside a coarse cell
//! the map `xi -> x` is the linear interpolant of the two node paths, and the
//! mesh velocity `dx/dtau` the linear interpolant of the node velocities. Three
//! path families are supported: fixed nodes (Eulerian), a common shift by the
//! integrated mean velocity, and true characteristics `dx/dtau = c(x, tau)`.

use std::fmt;
use std::str::FromStr;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::mesh::CoarseMesh;
use crate::ode::Dopri5;
use crate::parallel;

/// Which node paths define the moving coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Eulerian,
    MeanFlow,
    Characteristic,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::Eulerian => "eulerian",
            TransformKind::MeanFlow => "mean-flow",
            TransformKind::Characteristic => "characteristic",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eulerian" => Ok(Self::Eulerian),
            "mean-flow" | "meanflow" | "mf" => Ok(Self::MeanFlow),
            "characteristic" | "char" => Ok(Self::Characteristic),
            other => Err(Error::Config(format!("unknown transform `{other}`"))),
        }
    }
}

/// Fraction of `H` below which a traced cell counts as collapsed.
pub const COLLAPSE_FRACTION: f64 = 0.01;

/// Node paths and node velocities sampled on the global time grid.
#[derive(Debug, Clone)]
pub struct CharacteristicTable {
    kind: TransformKind,
    mesh: CoarseMesh,
    times: Vec<f64>,
    /// `paths[m][n] = x(xi_m, tau_n)`, unwrapped.
    paths: Vec<Vec<f64>>,
    /// `velocities[m][n] = dx/dtau(xi_m, tau_n)`.
    velocities: Vec<Vec<f64>>,
}

/// Geometry of one coarse cell at one stored time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFrame {
    pub x_left: f64,
    pub x_right: f64,
    pub v_left: f64,
    pub v_right: f64,
    /// `dx/dxi`, constant in the cell.
    pub jacobian: f64,
}

impl CellFrame {
    /// Physical position of local coordinate `s` in [0, 1] (unwrapped).
    #[inline]
    pub fn position(&self, s: f64) -> f64 {
        (1.0 - s) * self.x_left + s * self.x_right
    }

    /// Interpolated mesh velocity `dx/dtau` at local coordinate `s`.
    #[inline]
    pub fn mesh_velocity(&self, s: f64) -> f64 {
        (1.0 - s) * self.v_left + s * self.v_right
    }

    /// Residual velocity `(c_hat - dx/dtau) / (dx/dxi)` at local coordinate `s`.
    #[inline]
    pub fn effective_velocity(&self, cs: &CoefficientSet, s: f64, t: f64) -> f64 {
        let x = self.position(s);
        (cs.c(x.rem_euclid(1.0), t) - self.mesh_velocity(s)) / self.jacobian
    }
}

impl CharacteristicTable {
    /// Fixed nodes: `x = xi`, zero mesh velocity.
    pub fn identity(mesh: &CoarseMesh, times: &[f64]) -> Self {
        let paths = mesh
            .nodes()
            .iter()
            .map(|&xi| vec![xi; times.len()])
            .collect();
        let velocities = vec![vec![0.0; times.len()]; mesh.node_count()];
        Self {
            kind: TransformKind::Eulerian,
            mesh: mesh.clone(),
            times: times.to_vec(),
            paths,
            velocities,
        }
    }

    /// Builds the table for `kind`.
    pub fn build(
        kind: TransformKind,
        cs: &CoefficientSet,
        mesh: &CoarseMesh,
        times: &[f64],
        tol: f64,
    ) -> Result<Self> {
        match kind {
            TransformKind::Eulerian => Ok(Self::identity(mesh, times)),
            TransformKind::MeanFlow => mean_flow_table(cs, mesh, times, tol),
            TransformKind::Characteristic => trace_characteristics(cs, mesh, times, tol),
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn mesh(&self) -> &CoarseMesh {
        &self.mesh
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step_count(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    /// Unwrapped path of node `m`.
    pub fn path(&self, m: usize) -> &[f64] {
        &self.paths[m]
    }

    pub fn node_velocity(&self, m: usize, n: usize) -> f64 {
        self.velocities[m][n]
    }

    pub fn frame(&self, cell: usize, n: usize) -> CellFrame {
        let x_left = self.paths[cell][n];
        let x_right = self.paths[cell + 1][n];
        CellFrame {
            x_left,
            x_right,
            v_left: self.velocities[cell][n],
            v_right: self.velocities[cell + 1][n],
            jacobian: (x_right - x_left) / self.mesh.width(),
        }
    }

    /// Fails with `CellCollapse` if any cell is thinner than `COLLAPSE_FRACTION * H`.
    pub fn check_collapse(&self) -> Result<()> {
        let threshold = COLLAPSE_FRACTION * self.mesh.width();
        for cell in 0..self.mesh.cell_count() {
            for (n, &t) in self.times.iter().enumerate() {
                let width = self.paths[cell + 1][n] - self.paths[cell][n];
                if !(width > threshold) {
                    return Err(Error::CellCollapse {
                        cell,
                        time: t,
                        width,
                        threshold,
                    });
                }
            }
        }
        Ok(())
    }

    /// Keeps every `stride`-th stored time; the last time must survive.
    pub fn every(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.step_count() % stride != 0 {
            return Err(Error::GridMismatch(format!(
                "stride {stride} does not divide {} steps",
                self.step_count()
            )));
        }
        let pick = |v: &Vec<f64>| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        Ok(Self {
            kind: self.kind,
            mesh: self.mesh.clone(),
            times: pick(&self.times),
            paths: self.paths.iter().map(pick).collect(),
            velocities: self.velocities.iter().map(pick).collect(),
        })
    }

    /// Eulerian position (in [0, 1)) of reference coordinate `xi` at step `n`.
    pub fn to_eulerian(&self, xi: f64, n: usize) -> f64 {
        let (cell, s) = self.mesh.locate_periodic(xi);
        let wraps = xi.div_euclid(1.0);
        (self.frame(cell, n).position(s) + wraps).rem_euclid(1.0)
    }
}

/// Per-cell Jacobian factors on the stored grid.
#[derive(Debug, Clone)]
pub struct JacobianFactors {
    /// `dx_dxi[cell][n]`
    pub dx_dxi: Vec<Vec<f64>>,
    pub dx_dtau_left: Vec<Vec<f64>>,
    pub dx_dtau_right: Vec<Vec<f64>>,
}

impl JacobianFactors {
    pub fn from_table(tab: &CharacteristicTable) -> Self {
        let cells = tab.mesh().cell_count();
        let steps = tab.times().len();
        let mut jf = Self {
            dx_dxi: vec![vec![0.0; steps]; cells],
            dx_dtau_left: vec![vec![0.0; steps]; cells],
            dx_dtau_right: vec![vec![0.0; steps]; cells],
        };
        for cell in 0..cells {
            for n in 0..steps {
                let fr = tab.frame(cell, n);
                jf.dx_dxi[cell][n] = fr.jacobian;
                jf.dx_dtau_left[cell][n] = fr.v_left;
                jf.dx_dtau_right[cell][n] = fr.v_right;
            }
        }
        jf
    }
}

/// Residual velocity at reference coordinate `xi` (in [0, 1]) and stored step `n`.
pub fn effective_velocity(
    cs: &CoefficientSet,
    tab: &CharacteristicTable,
    jf: &JacobianFactors,
    xi: f64,
    n: usize,
) -> f64 {
    let mesh = tab.mesh();
    let (cell, s) = if xi >= 1.0 {
        (mesh.cell_count() - 1, 1.0)
    } else {
        mesh.locate_periodic(xi)
    };
    let x = tab.frame(cell, n).position(s);
    let mesh_velocity = (1.0 - s) * jf.dx_dtau_left[cell][n] + s * jf.dx_dtau_right[cell][n];
    (cs.c(x.rem_euclid(1.0), tab.times()[n]) - mesh_velocity) / jf.dx_dxi[cell][n]
}

/// Traces `dx/dtau = c(x mod 1, tau)` from every coarse node.
///
/// The last node is the first one shifted by one period, so the glued mesh stays
/// exactly periodic.
pub fn trace_characteristics(
    cs: &CoefficientSet,
    mesh: &CoarseMesh,
    times: &[f64],
    tol: f64,
) -> Result<CharacteristicTable> {
    let solver = Dopri5::new(tol);
    let independent = mesh.dof_count();
    let mut paths = parallel::try_map_indexed(independent, |m| {
        solver.integrate(|t, x| cs.c(x.rem_euclid(1.0), t), mesh.node(m), times)
    })?;
    paths.push(paths[0].iter().map(|x| x + 1.0).collect());
    let velocities = paths
        .iter()
        .map(|p| {
            p.iter()
                .zip(times)
                .map(|(&x, &t)| cs.c(x.rem_euclid(1.0), t))
                .collect()
        })
        .collect();
    let tab = CharacteristicTable {
        kind: TransformKind::Characteristic,
        mesh: mesh.clone(),
        times: times.to_vec(),
        paths,
        velocities,
    };
    tab.check_collapse()?;
    Ok(tab)
}

/// Integrated mean velocity `int_0^tau <c>(s) ds` on the grid.
pub fn mean_flow_shift(cs: &CoefficientSet, times: &[f64], tol: f64) -> Result<Vec<f64>> {
    Dopri5::new(tol).integrate(|t, _| cs.mean_velocity(t), 0.0, times)
}

/// All nodes shifted by the integrated mean velocity.
pub fn mean_flow_table(
    cs: &CoefficientSet,
    mesh: &CoarseMesh,
    times: &[f64],
    tol: f64,
) -> Result<CharacteristicTable> {
    let shift = mean_flow_shift(cs, times, tol)?;
    let mean: Vec<f64> = times.iter().map(|&t| cs.mean_velocity(t)).collect();
    let paths = mesh
        .nodes()
        .iter()
        .map(|&xi| shift.iter().map(|s| xi + s).collect())
        .collect();
    let velocities = vec![mean; mesh.node_count()];
    Ok(CharacteristicTable {
        kind: TransformKind::MeanFlow,
        mesh: mesh.clone(),
        times: times.to_vec(),
        paths,
        velocities,
    })
}

/// Periodic piecewise-linear interpolation.
///
/// `positions` are arbitrary reals (reduced mod 1 here) and must be distinct
/// modulo 1; `targets` are evaluated in [0, 1).
pub fn periodic_interpolate(positions: &[f64], values: &[f64], targets: &[f64]) -> Vec<f64> {
    assert_eq!(positions.len(), values.len());
    assert!(!positions.is_empty());
    let mut pts: Vec<(f64, f64)> = positions
        .iter()
        .zip(values)
        .map(|(&x, &v)| (x.rem_euclid(1.0), v))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    targets
        .iter()
        .map(|&t| {
            let t = t.rem_euclid(1.0);
            // first index with position > t
            let idx = pts.partition_point(|p| p.0 <= t);
            let (x0, v0, x1, v1) = if idx == 0 {
                let (xl, vl) = pts[n - 1];
                (xl - 1.0, vl, pts[0].0, pts[0].1)
            } else if idx == n {
                let (xl, vl) = pts[n - 1];
                (xl, vl, pts[0].0 + 1.0, pts[0].1)
            } else {
                (pts[idx - 1].0, pts[idx - 1].1, pts[idx].0, pts[idx].1)
            };
            if x1 == x0 {
                v0
            } else {
                let w = (t - x0) / (x1 - x0);
                (1.0 - w) * v0 + w * v1
            }
        })
        .collect()
}

/// Samples a field given at moved fine nodes onto an Eulerian grid.
///
/// `positions` are the unwrapped Eulerian positions of the nodes at step `n`.
pub fn pull_back(positions: &[f64], field: &[f64], x_eulerian: &[f64]) -> Vec<f64> {
    periodic_interpolate(positions, field, x_eulerian)
}
