//! Offline phase: time-dependent multiscale basis functions, one local problem
//! per coarse cell.
//!
//! In every cell only the basis function that equals one at the left node is
//! evolved; its partner is `1 - alpha`. Per step the 2x2 Galerkin blocks of the
//! cell (mass, time derivative, advection, diffusion, load) are formed from the
//! local fine matrices, so the online phase only scatters small blocks.

use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::fem1d::{
    advective_substeps, assemble_local, imex_interval, p1_mass, Boundary, LocalSystem,
    StepperState, ELEMENTS_PER_PERIOD,
};
use crate::mesh::{CoarseMesh, FineMesh};
use crate::parallel;
use crate::transform::CharacteristicTable;

/// Weight applied to a cell's contribution in the coarse Galerkin sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellWeighting {
    /// Integrate against `dx = (dx/dxi) dxi`; interface fluxes stay consistent
    /// when neighbouring cells stretch differently.
    #[default]
    Jacobian,
    /// Integrate against `dxi`.
    Unit,
}

impl std::str::FromStr for CellWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jacobian" => Ok(Self::Jacobian),
            "unit" => Ok(Self::Unit),
            other => Err(Error::Config(format!("unknown cell weighting `{other}`"))),
        }
    }
}

/// Time discretisation of the fine diffusion term in the local problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisScheme {
    /// L-stable; damps the stiff fine-scale modes.
    #[default]
    BackwardEuler,
    /// Second order but leaves stiff modes undamped, so the basis rings when
    /// the step is large compared with the fine diffusive time scale.
    CrankNicolson,
}

impl BasisScheme {
    pub fn theta(self) -> f64 {
        match self {
            Self::BackwardEuler => 1.0,
            Self::CrankNicolson => 0.5,
        }
    }
}

impl std::str::FromStr for BasisScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward-euler" => Ok(Self::BackwardEuler),
            "crank-nicolson" => Ok(Self::CrankNicolson),
            other => Err(Error::Config(format!("unknown basis scheme `{other}`"))),
        }
    }
}

/// Default number of offline steps per stored step.
pub const DEFAULT_BASIS_REFINEMENT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisOptions {
    pub weighting: CellWeighting,
    /// Keep every stored `LocalSystem` (memory heavy for fine coarse meshes).
    pub retain_systems: bool,
    pub scheme: BasisScheme,
    /// Offline steps per stored step. The table handed to the offline phase
    /// must live on the refined grid; only every `refinement`-th state is kept.
    pub refinement: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            weighting: CellWeighting::Jacobian,
            retain_systems: false,
            scheme: BasisScheme::default(),
            refinement: DEFAULT_BASIS_REFINEMENT,
        }
    }
}

impl BasisOptions {
    /// Options that integrate on the stored grid itself.
    pub fn unrefined(self) -> Self {
        Self {
            refinement: 1,
            ..self
        }
    }
}

/// 2x2 block in (left, right) basis ordering: `[test][trial]`.
pub type Block = [[f64; 2]; 2];

/// Galerkin blocks of one cell at one stored time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellBlocks {
    pub mass: Block,
    pub time_derivative: Block,
    pub advection: Block,
    pub diffusion: Block,
    pub load: [f64; 2],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[w_p . X w_q]` for the pair `w = (alpha, 1 - alpha)`.
pub fn sandwich(alpha: &[f64], x: &BandedMatrix) -> Block {
    let partner: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
    let xa = x.mul_vec(alpha);
    let xb = x.mul_vec(&partner);
    [
        [dot(alpha, &xa), dot(alpha, &xb)],
        [dot(&partner, &xa), dot(&partner, &xb)],
    ]
}

impl CellBlocks {
    /// Forms the blocks from the local matrices.
    ///
    /// `rate` is the time derivative of `alpha`; the partner's rate is `-rate`.
    pub fn from_system(sys: &LocalSystem, alpha: &[f64], rate: &[f64], weight: f64) -> Self {
        let partner: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        let m_rate = sys.mass.mul_vec(rate);
        let n_left = [dot(alpha, &m_rate), dot(&partner, &m_rate)];
        let scale = |b: Block| b.map(|row| row.map(|v| weight * v));
        let load = match &sys.load {
            Some(b) => [weight * dot(alpha, b), weight * dot(&partner, b)],
            None => [0.0; 2],
        };
        Self {
            mass: scale(sandwich(alpha, &sys.mass)),
            time_derivative: scale([[n_left[0], -n_left[0]], [n_left[1], -n_left[1]]]),
            advection: scale(sandwich(alpha, &sys.advection)),
            diffusion: scale(sandwich(alpha, &sys.diffusion)),
            load,
        }
    }
}

/// Evolution of one cell's left basis function.
#[derive(Debug, Clone)]
pub struct BasisTrajectory {
    pub cell: usize,
    fine_nodes: usize,
    steps: usize,
    dt: f64,
    /// Row-major `(step, fine node)`.
    alphas: Vec<f64>,
    /// Time derivative of `alpha`, same layout.
    rates: Vec<f64>,
    blocks: Vec<CellBlocks>,
    systems: Option<Vec<LocalSystem>>,
}

impl BasisTrajectory {
    pub fn fine_nodes(&self) -> usize {
        self.fine_nodes
    }

    /// Number of stored times.
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn alphas(&self, n: usize) -> &[f64] {
        &self.alphas[n * self.fine_nodes..(n + 1) * self.fine_nodes]
    }

    pub fn blocks(&self, n: usize) -> &CellBlocks {
        &self.blocks[n]
    }

    pub fn system(&self, n: usize) -> Result<&LocalSystem> {
        self.systems
            .as_ref()
            .and_then(|s| s.get(n))
            .ok_or(Error::MissingSystems {
                cell: self.cell,
                step: n,
            })
    }

    /// Largest `|alpha|` over the run (boundary-layer diagnostic).
    pub fn max_abs_alpha(&self) -> f64 {
        self.alphas.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Backward difference of `alpha` over the last offline step; zero at `n = 0`.
    pub fn time_derivative(&self, n: usize) -> &[f64] {
        &self.rates[n * self.fine_nodes..(n + 1) * self.fine_nodes]
    }

    /// Builds a trajectory from given coefficient vectors (no matrices); rates
    /// are backward differences over `dt`.
    pub fn from_alphas(cell: usize, fine_nodes: usize, dt: f64, alphas: Vec<f64>) -> Self {
        let steps = alphas.len() / fine_nodes;
        let mut rates = vec![0.0; fine_nodes.min(alphas.len())];
        for n in 1..steps {
            let now = &alphas[n * fine_nodes..(n + 1) * fine_nodes];
            let before = &alphas[(n - 1) * fine_nodes..n * fine_nodes];
            rates.extend(backward_difference(now, before, dt));
        }
        Self {
            cell,
            fine_nodes,
            steps,
            dt,
            alphas,
            rates,
            blocks: Vec::new(),
            systems: None,
        }
    }
}

pub fn backward_difference(now: &[f64], before: &[f64], dt: f64) -> Vec<f64> {
    now.iter().zip(before).map(|(a, b)| (a - b) / dt).collect()
}

/// Cell weight at step `n`.
fn cell_weight(tab: &CharacteristicTable, cell: usize, n: usize, weighting: CellWeighting) -> f64 {
    match weighting {
        CellWeighting::Jacobian => tab.frame(cell, n).jacobian,
        CellWeighting::Unit => 1.0,
    }
}

/// Largest `|c_tilde|` over the fine nodes and element midpoints of a cell, all stored times.
pub fn max_effective_speed(fine: &FineMesh, cs: &CoefficientSet, tab: &CharacteristicTable) -> f64 {
    let samples = 2 * fine.element_count();
    let mut speed: f64 = 0.0;
    for (n, &t) in tab.times().iter().enumerate() {
        let frame = tab.frame(fine.parent(), n);
        for j in 0..=samples {
            let s = j as f64 / samples as f64;
            speed = speed.max(frame.effective_velocity(cs, s, t).abs());
        }
    }
    speed
}

fn stored_steps(tab: &CharacteristicTable, refinement: usize) -> Result<usize> {
    let offline = tab.step_count();
    if offline == 0 {
        return Err(Error::InvalidParameter(
            "time grid needs at least two points".into(),
        ));
    }
    if refinement == 0 || offline % refinement != 0 {
        return Err(Error::GridMismatch(format!(
            "basis refinement {refinement} does not divide {offline} offline steps"
        )));
    }
    Ok(offline / refinement + 1)
}

/// Solves the local basis problem of `fine.parent()` over the grid of `tab`,
/// keeping every `options.refinement`-th state.
///
/// The explicit advective term is split into substeps when the effective
/// velocity would violate its stability bound on the fine mesh.
pub fn compute_basis(
    fine: &FineMesh,
    cs: &CoefficientSet,
    tab: &CharacteristicTable,
    options: BasisOptions,
) -> Result<BasisTrajectory> {
    let steps = stored_steps(tab, options.refinement)?;
    let times = tab.times();
    let dt = times[1] - times[0];
    let stride = options.refinement;
    let cell = fine.parent();
    let nf = fine.node_count();
    let mass = Arc::new(p1_mass(fine.element_count(), fine.width(), false));

    let initial: Vec<f64> = (0..nf).map(|j| 1.0 - fine.local_coordinate(j)).collect();
    let mut alphas = Vec::with_capacity(steps * nf);
    let mut rates = Vec::with_capacity(steps * nf);
    alphas.extend_from_slice(&initial);
    rates.resize(nf, 0.0);
    let mut blocks = Vec::with_capacity(steps);
    let mut systems = options.retain_systems.then(|| Vec::with_capacity(steps));

    let substeps = advective_substeps(max_effective_speed(fine, cs, tab), fine.width(), dt);
    let mut state =
        StepperState::new(initial, dt / substeps as f64).with_theta(options.scheme.theta());
    let mut now = assemble_local(fine, cs, tab, 0, mass.clone());
    blocks.push(CellBlocks::from_system(
        &now,
        &state.current,
        &vec![0.0; nf],
        cell_weight(tab, cell, 0, options.weighting),
    ));
    if let Some(s) = systems.as_mut() {
        s.push(now.clone());
    }
    let bc = Boundary::Dirichlet {
        left: 1.0,
        right: 0.0,
    };
    for n in 1..times.len() {
        let next = assemble_local(fine, cs, tab, n, mass.clone());
        let before = state.current.clone();
        imex_interval(&mut state, &mass, now.view(), next.view(), substeps, bc)?;
        if n % stride == 0 {
            let rate = backward_difference(&state.current, &before, dt);
            blocks.push(CellBlocks::from_system(
                &next,
                &state.current,
                &rate,
                cell_weight(tab, cell, n, options.weighting),
            ));
            alphas.extend_from_slice(&state.current);
            rates.extend_from_slice(&rate);
            if let Some(s) = systems.as_mut() {
                s.push(next.clone());
            }
        }
        now = next;
    }
    Ok(BasisTrajectory {
        cell,
        fine_nodes: nf,
        steps,
        dt: dt * stride as f64,
        alphas,
        rates,
        blocks,
        systems,
    })
}

/// Glued nodal basis: one trajectory per coarse cell.
#[derive(Debug, Clone)]
pub struct BasisSet {
    mesh: CoarseMesh,
    times: Vec<f64>,
    weighting: CellWeighting,
    trajectories: Vec<BasisTrajectory>,
}

impl BasisSet {
    pub fn mesh(&self) -> &CoarseMesh {
        &self.mesh
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weighting(&self) -> CellWeighting {
        self.weighting
    }

    pub fn trajectories(&self) -> &[BasisTrajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, cell: usize) -> &BasisTrajectory {
        &self.trajectories[cell]
    }

    /// Values of the glued nodal function `phi_m` on the fine nodes of `cell` at step `n`
    /// (zero if `phi_m` is not supported there).
    pub fn nodal_values(&self, m: usize, cell: usize, n: usize) -> Vec<f64> {
        let (left, right) = self.mesh.cell_dofs(cell);
        let alpha = self.trajectories[cell].alphas(n);
        alpha
            .iter()
            .map(|&a| {
                let mut v = 0.0;
                if m == left {
                    v += a;
                }
                if m == right {
                    v += 1.0 - a;
                }
                v
            })
            .collect()
    }

    /// `max |sum_m phi_m - 1|` over all cells, fine nodes and stored times.
    pub fn partition_of_unity_defect(&self) -> f64 {
        let dofs = self.mesh.dof_count();
        let mut worst: f64 = 0.0;
        for cell in 0..self.mesh.cell_count() {
            let nodal: Vec<usize> = {
                let (l, r) = self.mesh.cell_dofs(cell);
                if l == r {
                    vec![l]
                } else {
                    vec![l, r]
                }
            };
            debug_assert!(nodal.iter().all(|&m| m < dofs));
            for n in 0..self.times.len() {
                let mut sum = vec![0.0; self.trajectories[cell].fine_nodes()];
                for &m in &nodal {
                    for (s, v) in sum.iter_mut().zip(self.nodal_values(m, cell, n)) {
                        *s += v;
                    }
                }
                for s in sum {
                    worst = worst.max((s - 1.0).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| t.max_abs_alpha())
            .fold(0.0, f64::max)
    }
}

/// Assembles per-cell trajectories into the nodal basis.
pub fn glue(
    mesh: &CoarseMesh,
    times: &[f64],
    weighting: CellWeighting,
    trajectories: Vec<BasisTrajectory>,
) -> Result<BasisSet> {
    if trajectories.len() != mesh.cell_count() {
        return Err(Error::GridMismatch(format!(
            "{} trajectories for {} cells",
            trajectories.len(),
            mesh.cell_count()
        )));
    }
    for (cell, tr) in trajectories.iter().enumerate() {
        if tr.cell != cell || tr.len() != times.len() {
            return Err(Error::GridMismatch(format!(
                "trajectory of cell {} has {} times, expected {}",
                tr.cell,
                tr.len(),
                times.len()
            )));
        }
    }
    Ok(BasisSet {
        mesh: mesh.clone(),
        times: times.to_vec(),
        weighting,
        trajectories,
    })
}

fn stored_times(tab: &CharacteristicTable, refinement: usize) -> Vec<f64> {
    tab.times()
        .iter()
        .step_by(refinement.max(1))
        .copied()
        .collect()
}

/// Runs the offline phase for all cells, in parallel when enabled.
///
/// `tab` lives on the offline grid, `options.refinement` times finer than the
/// grid of the returned basis.
pub fn compute_offline(
    cs: &CoefficientSet,
    tab: &CharacteristicTable,
    fine_nodes: usize,
    options: BasisOptions,
) -> Result<BasisSet> {
    let mesh = tab.mesh();
    let fine_elements = mesh.cell_count() * (fine_nodes - 1);
    if fine_elements as f64 * cs.shortest_scale() < ELEMENTS_PER_PERIOD {
        log::warn!(
            "{fine_elements} fine elements resolve the shortest coefficient scale {:.3e} with fewer than {ELEMENTS_PER_PERIOD} elements",
            cs.shortest_scale()
        );
    }
    let fines: Vec<FineMesh> = (0..mesh.cell_count())
        .map(|c| mesh.fine(c, fine_nodes))
        .collect::<Result<_>>()?;
    let trajectories =
        parallel::try_map_indexed(fines.len(), |c| compute_basis(&fines[c], cs, tab, options))?;
    glue(
        mesh,
        &stored_times(tab, options.refinement),
        options.weighting,
        trajectories,
    )
}

/// Offline phase with the hat basis frozen (one fine element per cell).
pub fn frozen_hats(
    cs: &CoefficientSet,
    tab: &CharacteristicTable,
    options: BasisOptions,
) -> Result<BasisSet> {
    let mesh = tab.mesh();
    let trajectories = parallel::try_map_indexed(mesh.cell_count(), |c| {
        let fine = FineMesh::single_element(mesh, c)?;
        compute_basis(&fine, cs, tab, options)
    })?;
    glue(
        mesh,
        &stored_times(tab, options.refinement),
        options.weighting,
        trajectories,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banded::dense_solve;
    use crate::coeffs::{make_case, CaseId, CaseParams};
    use crate::fem1d::time_grid;
    use crate::transform::{mean_flow_table, trace_characteristics};
    use std::f64::consts::PI;

    #[test]
    fn linear_hat_is_steady_without_advection() {
        let cs = CoefficientSet::new(|_, _| 0.0, |_, _| 0.3, |_| 0.0);
        let mesh = CoarseMesh::new(5).unwrap();
        let tab = CharacteristicTable::identity(&mesh, &time_grid(1e-3, 200));
        let fine = mesh.fine(2, 20).unwrap();
        let tr = compute_basis(&fine, &cs, &tab, BasisOptions::default().unrefined()).unwrap();
        let a0 = tr.alphas(0).to_vec();
        for n in 0..tr.len() {
            for (a, b) in tr.alphas(n).iter().zip(&a0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(tr.time_derivative(50).iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn boundary_values_fixed() {
        let cs = make_case(&CaseParams::new(CaseId::Case3).v(4.0)).unwrap();
        let mesh = CoarseMesh::new(10).unwrap();
        let tab = trace_characteristics(&cs, &mesh, &time_grid(1e-3, 300), 1e-9).unwrap();
        let fine = mesh.fine(4, 30).unwrap();
        let tr = compute_basis(&fine, &cs, &tab, BasisOptions::default().unrefined()).unwrap();
        for n in 0..tr.len() {
            assert_eq!(tr.alphas(n)[0], 1.0);
            assert_eq!(tr.alphas(n)[29], 0.0);
            let d = tr.time_derivative(n);
            assert_eq!(d[0], 0.0);
            assert_eq!(d[29], 0.0);
        }
    }

    #[test]
    fn case1_basis_identical_under_both_transforms() {
        let cs = make_case(&CaseParams::new(CaseId::Case1).k(30)).unwrap();
        let mesh = CoarseMesh::new(10).unwrap();
        let times = time_grid(1e-3, 300);
        let mf = mean_flow_table(&cs, &mesh, &times, 1e-9).unwrap();
        let ch = trace_characteristics(&cs, &mesh, &times, 1e-9).unwrap();
        let fine = mesh.fine(3, 75).unwrap();
        let a = compute_basis(&fine, &cs, &mf, BasisOptions::default().unrefined()).unwrap();
        let b = compute_basis(&fine, &cs, &ch, BasisOptions::default().unrefined()).unwrap();
        for n in 0..a.len() {
            for (x, y) in a.alphas(n).iter().zip(b.alphas(n)) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    /// Stationary problem with oscillating diffusivity: the long-time basis solves
    /// `(mu phi')' = 0` with phi(left) = 1, phi(right) = 0.
    #[test]
    fn steady_basis_matches_dense_two_point_solve() {
        let nf = 16;
        let mu = |x: f64, _t: f64| 0.05 + 0.04 * (2.0 * PI * 7.0 * x).cos();
        let cs = CoefficientSet::new(|_, _| 0.0, mu, |_| 0.0);
        let mesh = CoarseMesh::new(3).unwrap();
        let tab = CharacteristicTable::identity(&mesh, &time_grid(1e-2, 2000));
        let fine = mesh.fine(0, nf).unwrap();
        let tr = compute_basis(&fine, &cs, &tab, BasisOptions::default().unrefined()).unwrap();
        let last = tr.alphas(tr.len() - 1);

        // oracle: dense assembly of the stiffness with the same element averages
        let h = fine.width();
        let nodes = fine.nodes();
        let kappa: Vec<f64> = (0..nf - 1)
            .map(|e| {
                crate::quadrature::GAUSS3
                    .iter()
                    .map(|&(s, w)| w * mu(nodes[e] + s * h, 0.0))
                    .sum::<f64>()
            })
            .collect();
        let mut a = vec![vec![0.0; nf]; nf];
        let mut b = vec![0.0; nf];
        for (e, k) in kappa.iter().enumerate() {
            for (i, j, s) in [
                (e, e, 1.0),
                (e + 1, e + 1, 1.0),
                (e, e + 1, -1.0),
                (e + 1, e, -1.0),
            ] {
                a[i][j] += s * k / h;
            }
        }
        a[0] = vec![0.0; nf];
        a[0][0] = 1.0;
        b[0] = 1.0;
        a[nf - 1] = vec![0.0; nf];
        a[nf - 1][nf - 1] = 1.0;
        let oracle = dense_solve(a, b).unwrap();
        for (x, y) in last.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        // flux continuity: slope times element diffusivity is constant
        let flux: Vec<f64> = (0..nf - 1)
            .map(|e| kappa[e] * (last[e + 1] - last[e]) / h)
            .collect();
        for f in &flux {
            assert!((f - flux[0]).abs() < 1e-6 * flux[0].abs());
        }
    }

    #[test]
    fn glued_basis_is_partition_of_unity() {
        let cs = make_case(&CaseParams::new(CaseId::Case2).k(3)).unwrap();
        let mesh = CoarseMesh::new(6).unwrap();
        let tab = trace_characteristics(&cs, &mesh, &time_grid(1e-3, 200), 1e-9).unwrap();
        let set = compute_offline(&cs, &tab, 12, BasisOptions::default().unrefined()).unwrap();
        assert!(set.partition_of_unity_defect() <= 1e-12);
        // hats at t = 0; phi_m vanishes at foreign coarse nodes
        for cell in 0..mesh.cell_count() {
            let v = set.nodal_values(cell, cell, 0);
            for (j, x) in v.iter().enumerate() {
                assert!((x - (1.0 - j as f64 / 11.0)).abs() < 1e-15);
            }
            for n in [0, 100, 200] {
                let (l, r) = mesh.cell_dofs(cell);
                assert_eq!(set.nodal_values(l, cell, n)[11], 0.0);
                assert_eq!(set.nodal_values(r, cell, n)[0], 0.0);
                let far = (l + 2) % mesh.dof_count();
                assert!(set.nodal_values(far, cell, n).iter().all(|&x| x == 0.0));
            }
        }
        assert!(set.max_abs_alpha() <= 1.5);
    }

    #[test]
    fn glue_rejects_mismatched_grids() {
        let mesh = CoarseMesh::new(4).unwrap();
        let trs: Vec<BasisTrajectory> = (0..3)
            .map(|c| BasisTrajectory::from_alphas(c, 3, 0.1, vec![1.0, 0.5, 0.0].repeat(c + 2)))
            .collect();
        assert!(glue(&mesh, &[0.0, 0.1], CellWeighting::Jacobian, trs).is_err());
    }

    #[test]
    fn time_derivative_of_linear_in_time_alphas() {
        let nf = 5;
        let dt = 0.01;
        let a0 = [1.0, 0.8, 0.4, 0.1, 0.0];
        let beta = [0.0, 0.3, -0.2, 0.7, 0.0];
        let mut data = Vec::new();
        for n in 0..6 {
            let t = n as f64 * dt;
            data.extend(a0.iter().zip(&beta).map(|(a, b)| a + t * b));
        }
        let tr = BasisTrajectory::from_alphas(0, nf, dt, data);
        assert!(tr.time_derivative(0).iter().all(|&v| v == 0.0));
        for n in 1..6 {
            for (d, b) in tr.time_derivative(n).iter().zip(&beta) {
                assert!((d - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn refinement_samples_the_fine_run() {
        let cs = make_case(&CaseParams::new(CaseId::Case3).v(8.0)).unwrap();
        let mesh = CoarseMesh::new(6).unwrap();
        let tab = trace_characteristics(&cs, &mesh, &time_grid(2.5e-4, 120), 1e-9).unwrap();
        let fine = mesh.fine(2, 25).unwrap();
        let opts = BasisOptions {
            refinement: 3,
            ..BasisOptions::default()
        };
        let every = compute_basis(&fine, &cs, &tab, opts.unrefined()).unwrap();
        let kept = compute_basis(&fine, &cs, &tab, opts).unwrap();
        assert_eq!(kept.len(), 41);
        assert!((kept.dt() - 7.5e-4).abs() < 1e-15);
        for n in 0..kept.len() {
            assert_eq!(kept.alphas(n), every.alphas(3 * n));
            assert_eq!(kept.time_derivative(n), every.time_derivative(3 * n));
            assert_eq!(kept.blocks(n), every.blocks(3 * n));
        }
        let bad = BasisOptions {
            refinement: 7,
            ..opts
        };
        assert!(compute_basis(&fine, &cs, &tab, bad).is_err());
    }

    #[test]
    fn schemes_parse() {
        assert_eq!(
            "crank-nicolson".parse::<BasisScheme>().unwrap().theta(),
            0.5
        );
        assert_eq!(
            "backward-euler".parse::<BasisScheme>().unwrap().theta(),
            1.0
        );
        assert!("rk4".parse::<BasisScheme>().is_err());
    }

    #[test]
    fn offline_is_deterministic() {
        let cs = make_case(&CaseParams::new(CaseId::Case4).k(30)).unwrap();
        let mesh = CoarseMesh::new(10).unwrap();
        let tab = trace_characteristics(&cs, &mesh, &time_grid(1e-3, 100), 1e-9).unwrap();
        let a = parallel::with_workers(1, || {
            compute_offline(&cs, &tab, 20, BasisOptions::default().unrefined())
        })
        .unwrap();
        let b = parallel::with_workers(4, || {
            compute_offline(&cs, &tab, 20, BasisOptions::default().unrefined())
        })
        .unwrap();
        for c in 0..mesh.cell_count() {
            for n in 0..101 {
                let x = a.trajectory(c).alphas(n);
                let y = b.trajectory(c).alphas(n);
                assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
    }
}
