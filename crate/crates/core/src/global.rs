//! Online phase: coarse Galerkin system on the glued basis and its time stepping.

use crate::banded::BandedMatrix;
use crate::basis::{BasisSet, Block, CellBlocks, CellWeighting};
use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::fem1d::{
    imex_step, periodic_p1_load, Boundary, FieldSnapshot, StepInputs, StepperState,
};
use crate::transform::{pull_back, CharacteristicTable};

/// Mass matrix used on the left of the coarse step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassRule {
    /// `M^{n+1}`.
    #[default]
    Next,
    /// `(M^n + M^{n+1}) / 2`.
    Midpoint,
}

impl std::str::FromStr for MassRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next" => Ok(Self::Next),
            "midpoint" => Ok(Self::Midpoint),
            other => Err(Error::Config(format!("unknown mass rule `{other}`"))),
        }
    }
}

/// Coarse matrices at one stored time; all cyclic of size `dof_count`.
#[derive(Debug, Clone)]
pub struct CoarseSystem {
    pub mass: BandedMatrix,
    /// `int phi_i d_tau phi_j`.
    pub time_derivative: BandedMatrix,
    pub advection: BandedMatrix,
    pub diffusion: BandedMatrix,
    pub load: Option<Vec<f64>>,
}

impl CoarseSystem {
    fn zeros(dofs: usize, forced: bool) -> Self {
        Self {
            mass: BandedMatrix::zeros(dofs, true),
            time_derivative: BandedMatrix::zeros(dofs, true),
            advection: BandedMatrix::zeros(dofs, true),
            diffusion: BandedMatrix::zeros(dofs, true),
            load: forced.then(|| vec![0.0; dofs]),
        }
    }

    /// Explicit operator `N + A`.
    pub fn transport(&self) -> BandedMatrix {
        self.time_derivative.add_scaled(1.0, &self.advection)
    }
}

fn scatter(m: &mut BandedMatrix, dofs: [usize; 2], b: &Block) {
    for p in 0..2 {
        for q in 0..2 {
            m.add(dofs[p], dofs[q], b[p][q]);
        }
    }
}

/// Scatters the stored cell blocks of step `n`.
pub fn assemble_coarse(basis: &BasisSet, n: usize, forced: bool) -> CoarseSystem {
    let mesh = basis.mesh();
    let mut sys = CoarseSystem::zeros(mesh.dof_count(), forced);
    for (cell, tr) in basis.trajectories().iter().enumerate() {
        let (l, r) = mesh.cell_dofs(cell);
        let CellBlocks {
            mass,
            time_derivative,
            advection,
            diffusion,
            load,
        } = tr.blocks(n);
        scatter(&mut sys.mass, [l, r], mass);
        scatter(&mut sys.time_derivative, [l, r], time_derivative);
        scatter(&mut sys.advection, [l, r], advection);
        scatter(&mut sys.diffusion, [l, r], diffusion);
        if let Some(g) = sys.load.as_mut() {
            g[l] += load[0];
            g[r] += load[1];
        }
    }
    sys
}

/// Rebuilds the coarse matrices of step `n` from the retained local systems by
/// looping over all pairs of glued nodal functions.
pub fn assemble_coarse_from_systems(
    basis: &BasisSet,
    tab: &CharacteristicTable,
    n: usize,
    forced: bool,
) -> Result<CoarseSystem> {
    let mesh = basis.mesh();
    let dofs = mesh.dof_count();
    let mut sys = CoarseSystem::zeros(dofs, forced);
    for cell in 0..mesh.cell_count() {
        let tr = basis.trajectory(cell);
        let local = tr.system(n)?;
        let weight = match basis.weighting() {
            CellWeighting::Jacobian => tab.frame(cell, n).jacobian,
            CellWeighting::Unit => 1.0,
        };
        let (left, right) = mesh.cell_dofs(cell);
        let rate = |m: usize| -> Vec<f64> {
            let sign = f64::from(u8::from(m == left)) - f64::from(u8::from(m == right));
            tr.time_derivative(n).iter().map(|d| sign * d).collect()
        };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        for i in 0..dofs {
            let phi_i = basis.nodal_values(i, cell, n);
            if phi_i.iter().all(|&v| v == 0.0) {
                continue;
            }
            if let (Some(g), Some(b)) = (sys.load.as_mut(), local.load.as_ref()) {
                g[i] += weight * dot(&phi_i, b);
            }
            for j in 0..dofs {
                let phi_j = basis.nodal_values(j, cell, n);
                if phi_j.iter().all(|&v| v == 0.0) {
                    continue;
                }
                sys.mass
                    .add(i, j, weight * dot(&phi_i, &local.mass.mul_vec(&phi_j)));
                sys.advection
                    .add(i, j, weight * dot(&phi_i, &local.advection.mul_vec(&phi_j)));
                sys.diffusion
                    .add(i, j, weight * dot(&phi_i, &local.diffusion.mul_vec(&phi_j)));
                sys.time_derivative
                    .add(i, j, weight * dot(&phi_i, &local.mass.mul_vec(&rate(j))));
            }
        }
    }
    Ok(sys)
}

/// L2 projection of the initial condition onto the basis at `t = 0` (the hats).
pub fn project_initial(basis: &BasisSet, cs: &CoefficientSet) -> Result<Vec<f64>> {
    let cells = basis.mesh().cell_count();
    let fine = basis.trajectory(0).fine_nodes().max(2);
    let b = periodic_p1_load(cells, |x| cs.f(x), 8 * (fine - 1));
    assemble_coarse(basis, 0, false).mass.solve(&b)
}

/// Coarse coefficients at every stored time.
#[derive(Debug, Clone)]
pub struct CoarseSolution {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Time-steps the coarse system over the basis time grid.
pub fn solve_online(
    basis: &BasisSet,
    cs: &CoefficientSet,
    rule: MassRule,
) -> Result<CoarseSolution> {
    let times = basis.times().to_vec();
    let dt = times[1] - times[0];
    let forced = !cs.unforced;
    let u0 = project_initial(basis, cs)?;
    let mut state = StepperState::new(u0, dt);
    let mut values = Vec::with_capacity(times.len());
    values.push(state.current.clone());

    let mut now = assemble_coarse(basis, 0, forced);
    let mut transport_now = now.transport();
    for n in 0..times.len() - 1 {
        let next = assemble_coarse(basis, n + 1, forced);
        let transport_next = next.transport();
        let mass = match rule {
            MassRule::Next => next.mass.clone(),
            MassRule::Midpoint => now.mass.add_scaled(1.0, &next.mass).scaled(0.5),
        };
        let inputs = StepInputs {
            mass: &mass,
            diffusion_now: &now.diffusion,
            diffusion_next: &next.diffusion,
            advection_now: &transport_now,
            advection_next: &transport_next,
            source_now: now.load.as_deref(),
            source_next: next.load.as_deref(),
        };
        imex_step(&mut state, &inputs, Boundary::Periodic)?;
        values.push(state.current.clone());
        now = next;
        transport_now = transport_next;
    }
    Ok(CoarseSolution { times, values })
}

/// Fine-node positions (unwrapped) and values of the multiscale solution at step `n`.
pub fn fine_field(
    sol: &CoarseSolution,
    basis: &BasisSet,
    tab: &CharacteristicTable,
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mesh = basis.mesh();
    let u = &sol.values[n];
    let mut x = Vec::new();
    let mut v = Vec::new();
    for cell in 0..mesh.cell_count() {
        let (l, r) = mesh.cell_dofs(cell);
        let frame = tab.frame(cell, n);
        let alpha = basis.trajectory(cell).alphas(n);
        let last = alpha.len() - 1;
        for (j, a) in alpha[..last].iter().enumerate() {
            x.push(frame.position(j as f64 / last as f64));
            v.push(u[l] * a + u[r] * (1.0 - a));
        }
    }
    (x, v)
}

/// Samples the multiscale solution at step `n` on a uniform Eulerian grid.
pub fn reconstruct(
    sol: &CoarseSolution,
    basis: &BasisSet,
    tab: &CharacteristicTable,
    n: usize,
    points: usize,
) -> FieldSnapshot {
    let (pos, val) = fine_field(sol, basis, tab, n);
    let x = FieldSnapshot::grid(points);
    let u = pull_back(&pos, &val, &x);
    FieldSnapshot {
        time: sol.times[n],
        x,
        u,
    }
}
