//! P1 finite elements: local assembly, IMEX time stepping and the
//! high-resolution standard FEM used as reference.

use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};
use crate::mesh::FineMesh;
use crate::quadrature::{composite_gauss4, GAUSS3};
use crate::transform::{mean_flow_shift, CellFrame, CharacteristicTable, TransformKind};

/// Minimum number of elements per coefficient wavelength before we warn.
pub const ELEMENTS_PER_PERIOD: f64 = 8.0;

/// Element-wise coefficient samples at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointCoefficients {
    /// Residual advection velocity.
    pub advection: f64,
    /// Diffusivity already divided by the squared Jacobian.
    pub diffusion: f64,
    pub forcing: f64,
}

/// Bound on `sqrt(3) |a| dt / h` for one explicit advective step.
pub const ADVECTIVE_COURANT: f64 = 0.25;

/// Assembled P1 operators with 3-point Gauss quadrature.
#[derive(Debug, Clone)]
pub struct P1Operators {
    pub advection: BandedMatrix,
    pub diffusion: BandedMatrix,
    pub load: Option<Vec<f64>>,
}

impl P1Operators {
    pub fn view(&self) -> OperatorView<'_> {
        OperatorView {
            advection: &self.advection,
            diffusion: &self.diffusion,
            source: self.load.as_deref(),
        }
    }
}

/// Borrowed operators at one end of a time interval.
#[derive(Debug, Clone, Copy)]
pub struct OperatorView<'a> {
    pub advection: &'a BandedMatrix,
    pub diffusion: &'a BandedMatrix,
    pub source: Option<&'a [f64]>,
}

/// Exact P1 mass matrix on a uniform mesh of `elements` elements of width `h`.
pub fn p1_mass(elements: usize, h: f64, periodic: bool) -> BandedMatrix {
    let n = if periodic { elements } else { elements + 1 };
    let mut m = BandedMatrix::zeros(n, periodic);
    for e in 0..elements {
        let (l, r) = (e, (e + 1) % n);
        m.add(l, l, h / 3.0);
        m.add(r, r, h / 3.0);
        m.add(l, r, h / 6.0);
        m.add(r, l, h / 6.0);
    }
    m
}

/// Assembles advection `int psi_k a d(psi_l)`, diffusion `-int kappa d(psi_k) d(psi_l)`
/// and optionally the load `int psi_k g`.
///
/// `coeff(e, s)` returns the coefficients at local coordinate `s` of element `e`.
pub fn assemble_p1<F>(
    elements: usize,
    h: f64,
    periodic: bool,
    with_load: bool,
    mut coeff: F,
) -> P1Operators
where
    F: FnMut(usize, f64) -> PointCoefficients,
{
    let n = if periodic { elements } else { elements + 1 };
    let mut adv = BandedMatrix::zeros(n, periodic);
    let mut dif = BandedMatrix::zeros(n, periodic);
    let mut load = if with_load { Some(vec![0.0; n]) } else { None };
    for e in 0..elements {
        let (l, r) = (e, (e + 1) % n);
        let (mut a_l, mut a_r, mut kappa, mut g_l, mut g_r) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(s, w) in GAUSS3.iter() {
            let pc = coeff(e, s);
            a_l += w * (1.0 - s) * pc.advection;
            a_r += w * s * pc.advection;
            kappa += w * pc.diffusion;
            if with_load {
                g_l += w * (1.0 - s) * pc.forcing;
                g_r += w * s * pc.forcing;
            }
        }
        // d(psi_left) = -1/h, d(psi_right) = 1/h, the h of dx cancels
        adv.add(l, l, -a_l);
        adv.add(l, r, a_l);
        adv.add(r, l, -a_r);
        adv.add(r, r, a_r);
        let d = kappa / h;
        dif.add(l, l, -d);
        dif.add(r, r, -d);
        dif.add(l, r, d);
        dif.add(r, l, d);
        if let Some(b) = load.as_mut() {
            b[l] += h * g_l;
            b[r] += h * g_r;
        }
    }
    P1Operators {
        advection: adv,
        diffusion: dif,
        load,
    }
}

/// Local matrices of one coarse cell at one stored time.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub cell: usize,
    pub step: usize,
    /// Time-independent, shared by all steps of a cell.
    pub mass: Arc<BandedMatrix>,
    pub advection: BandedMatrix,
    pub diffusion: BandedMatrix,
    /// `int psi_k g_hat` when the problem is forced.
    pub load: Option<Vec<f64>>,
}

impl LocalSystem {
    pub fn view(&self) -> OperatorView<'_> {
        OperatorView {
            advection: &self.advection,
            diffusion: &self.diffusion,
            source: None,
        }
    }
}

/// Assembles the fine-scale matrices of `fine.parent()` at step `n` of `tab`.
pub fn assemble_local(
    fine: &FineMesh,
    cs: &CoefficientSet,
    tab: &CharacteristicTable,
    n: usize,
    mass: Arc<BandedMatrix>,
) -> LocalSystem {
    let frame = tab.frame(fine.parent(), n);
    let ops = assemble_cell(fine, cs, &frame, tab.times()[n]);
    LocalSystem {
        cell: fine.parent(),
        step: n,
        mass,
        advection: ops.advection,
        diffusion: ops.diffusion,
        load: ops.load,
    }
}

/// Cell assembly for an explicit frame.
pub fn assemble_cell(
    fine: &FineMesh,
    cs: &CoefficientSet,
    frame: &CellFrame,
    t: f64,
) -> P1Operators {
    let elements = fine.element_count();
    let inv_j2 = 1.0 / (frame.jacobian * frame.jacobian);
    assemble_p1(elements, fine.width(), false, !cs.unforced, |e, q| {
        let s = (e as f64 + q) / elements as f64;
        let x = frame.position(s).rem_euclid(1.0);
        PointCoefficients {
            advection: (cs.c(x, t) - frame.mesh_velocity(s)) / frame.jacobian,
            diffusion: cs.mu(x, t) * inv_j2,
            forcing: if cs.unforced { 0.0 } else { cs.g(x) },
        }
    })
}

/// Boundary treatment of a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Cyclic system.
    Periodic,
    /// Plain (non-periodic) system without constraints.
    Free,
    /// First and last unknowns fixed by row replacement.
    Dirichlet { left: f64, right: f64 },
}

/// Two-level history of the IMEX scheme.
#[derive(Debug, Clone)]
pub struct StepperState {
    pub current: Vec<f64>,
    pub previous: Option<Vec<f64>>,
    /// Explicit term `A^{n-1} u^{n-1}` of the previous step.
    explicit_prev: Option<Vec<f64>>,
    pub step: usize,
    pub dt: f64,
    /// Implicit weight of the diffusion term: 1/2 is Crank-Nicolson, 1 backward Euler.
    pub theta: f64,
}

impl StepperState {
    pub fn new(initial: Vec<f64>, dt: f64) -> Self {
        Self {
            current: initial,
            previous: None,
            explicit_prev: None,
            step: 0,
            dt,
            theta: 0.5,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

/// Operators entering one step `n -> n+1`.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub mass: &'a BandedMatrix,
    pub diffusion_now: &'a BandedMatrix,
    pub diffusion_next: &'a BandedMatrix,
    pub advection_now: &'a BandedMatrix,
    /// Only used by the first (Heun) step.
    pub advection_next: &'a BandedMatrix,
    pub source_now: Option<&'a [f64]>,
    pub source_next: Option<&'a [f64]>,
}

fn apply_boundary(lhs: &mut BandedMatrix, rhs: &mut [f64], bc: Boundary) {
    if let Boundary::Dirichlet { left, right } = bc {
        let n = rhs.len();
        lhs.set_identity_row(0);
        lhs.set_identity_row(n - 1);
        rhs[0] = left;
        rhs[n - 1] = right;
    }
}

/// Advances `state` by one step of
/// `M (u^{n+1} - u^n)/dt + AB2[A u] = th D^{n+1} u^{n+1} + (1 - th) D^n u^n + (s^n + s^{n+1})/2`
/// with `th = state.theta`.
///
/// The first step replaces AB2 by Heun's method for the advective term.
pub fn imex_step(state: &mut StepperState, ops: &StepInputs<'_>, bc: Boundary) -> Result<()> {
    let dt = state.dt;
    let u = &state.current;
    let n = u.len();
    let explicit_now = ops.advection_now.mul_vec(u);
    let mass_u = ops.mass.mul_vec(u);
    let diff_u = ops.diffusion_now.mul_vec(u);
    let mut rhs: Vec<f64> = (0..n)
        .map(|i| mass_u[i] + (1.0 - state.theta) * dt * diff_u[i])
        .collect();
    for src in [ops.source_now, ops.source_next].into_iter().flatten() {
        for (r, s) in rhs.iter_mut().zip(src) {
            *r += 0.5 * dt * s;
        }
    }
    let mut lhs = ops.mass.add_scaled(-state.theta * dt, ops.diffusion_next);
    let mut lhs_bc = lhs.clone();
    apply_boundary(&mut lhs_bc, &mut vec![0.0; n], bc);

    match &state.explicit_prev {
        Some(prev) => {
            for i in 0..n {
                rhs[i] -= dt * (1.5 * explicit_now[i] - 0.5 * prev[i]);
            }
        }
        None => {
            let mut predictor_rhs: Vec<f64> =
                (0..n).map(|i| rhs[i] - dt * explicit_now[i]).collect();
            apply_boundary(&mut lhs, &mut predictor_rhs, bc);
            let predictor = lhs.solve(&predictor_rhs)?;
            let explicit_next = ops.advection_next.mul_vec(&predictor);
            for i in 0..n {
                rhs[i] -= 0.5 * dt * (explicit_now[i] + explicit_next[i]);
            }
        }
    }
    apply_boundary(&mut lhs_bc, &mut rhs, bc);
    let next = lhs_bc.solve(&rhs)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: state.step });
    }
    state.previous = Some(std::mem::replace(&mut state.current, next));
    state.explicit_prev = Some(explicit_now);
    state.step += 1;
    Ok(())
}

/// Number of equal substeps of `dt` that keep the explicit advective term
/// stable for speeds up to `speed` on elements of width `h`.
pub fn advective_substeps(speed: f64, h: f64, dt: f64) -> usize {
    let courant = 3f64.sqrt() * speed * dt / h;
    ((courant / ADVECTIVE_COURANT).ceil() as usize).max(1)
}

fn lerp_matrix(a: &BandedMatrix, b: &BandedMatrix, s: f64) -> BandedMatrix {
    a.scaled(1.0 - s).add_scaled(s, b)
}

fn lerp_vec(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| (1.0 - s) * x + s * y)
        .collect()
}

/// Advances over one grid interval with `substeps` equal IMEX steps.
///
/// Operators at intermediate times are interpolated linearly between `now` and
/// `next`; `state.dt` must be the substep length.
pub fn imex_interval(
    state: &mut StepperState,
    mass: &BandedMatrix,
    now: OperatorView<'_>,
    next: OperatorView<'_>,
    substeps: usize,
    bc: Boundary,
) -> Result<()> {
    if substeps <= 1 {
        let inputs = StepInputs {
            mass,
            diffusion_now: now.diffusion,
            diffusion_next: next.diffusion,
            advection_now: now.advection,
            advection_next: next.advection,
            source_now: now.source,
            source_next: next.source,
        };
        return imex_step(state, &inputs, bc);
    }
    let at = |j: usize| {
        let s = j as f64 / substeps as f64;
        (
            lerp_matrix(now.advection, next.advection, s),
            lerp_matrix(now.diffusion, next.diffusion, s),
            now.source.zip(next.source).map(|(a, b)| lerp_vec(a, b, s)),
        )
    };
    let mut left = at(0);
    for j in 0..substeps {
        let right = at(j + 1);
        let inputs = StepInputs {
            mass,
            diffusion_now: &left.1,
            diffusion_next: &right.1,
            advection_now: &left.0,
            advection_next: &right.0,
            source_now: left.2.as_deref(),
            source_next: right.2.as_deref(),
        };
        imex_step(state, &inputs, bc)?;
        left = right;
    }
    Ok(())
}

/// Uniform time grid `0, dt, ..., steps * dt`.
pub fn time_grid(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|n| n as f64 * dt).collect()
}

/// Number of steps of size `dt` covering `[0, t_end]`; rejects non-integral ratios.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and T > 0 (dt = {dt}, T = {t_end})"
        )));
    }
    let ratio = t_end / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "dt = {dt} does not divide T = {t_end}"
        )));
    }
    Ok(steps as usize)
}

/// Load vector `int psi_i f` on a uniform periodic P1 mesh by composite Gauss quadrature.
pub fn periodic_p1_load<F: Fn(f64) -> f64>(elements: usize, f: F, subdivisions: usize) -> Vec<f64> {
    let h = 1.0 / elements as f64;
    let mut b = vec![0.0; elements];
    for e in 0..elements {
        let x0 = e as f64 * h;
        let left = composite_gauss4(|s| (1.0 - s) * f(x0 + s * h), 0.0, 1.0, subdivisions);
        let right = composite_gauss4(|s| s * f(x0 + s * h), 0.0, 1.0, subdivisions);
        b[e] += h * left;
        b[(e + 1) % elements] += h * right;
    }
    b
}

/// Values on a uniform Eulerian grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl FieldSnapshot {
    pub fn grid(points: usize) -> Vec<f64> {
        (0..points).map(|j| j as f64 / points as f64).collect()
    }
}

/// Time series of a standard periodic P1 solution in moving (or fixed) coordinates.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub kind: TransformKind,
    pub elements: usize,
    pub times: Vec<f64>,
    /// Shift of the frame at every step.
    pub shift: Vec<f64>,
    /// Nodal values per step; empty for steps that were not kept.
    pub values: Vec<Vec<f64>>,
}

impl ReferenceSolution {
    /// Pulls step `n` back to a uniform Eulerian grid of `points` points.
    pub fn snapshot(&self, n: usize, points: usize) -> FieldSnapshot {
        assert!(!self.values[n].is_empty(), "step {n} was not kept");
        let h = 1.0 / self.elements as f64;
        let positions: Vec<f64> = (0..self.elements)
            .map(|j| j as f64 * h + self.shift[n])
            .collect();
        let x = FieldSnapshot::grid(points);
        let u = crate::transform::pull_back(&positions, &self.values[n], &x);
        FieldSnapshot {
            time: self.times[n],
            x,
            u,
        }
    }
}

/// Standard P1 FEM on `elements` periodic elements, in mean-flow coordinates
/// (`TransformKind::MeanFlow`) or fixed ones (`TransformKind::Eulerian`).
pub fn reference_solve(
    cs: &CoefficientSet,
    elements: usize,
    dt: f64,
    t_end: f64,
    kind: TransformKind,
    ode_tol: f64,
) -> Result<ReferenceSolution> {
    reference_solve_kept(cs, elements, dt, t_end, kind, ode_tol, None)
}

/// As [`reference_solve`], but stores only the steps in `keep` (all when `None`).
pub fn reference_solve_kept(
    cs: &CoefficientSet,
    elements: usize,
    dt: f64,
    t_end: f64,
    kind: TransformKind,
    ode_tol: f64,
    keep: Option<&[usize]>,
) -> Result<ReferenceSolution> {
    if elements < 2 {
        return Err(Error::InvalidMesh(format!(
            "need at least 2 elements, got {elements}"
        )));
    }
    let steps = step_count(dt, t_end)?;
    let times = time_grid(dt, steps);
    let (shift, mean) = match kind {
        TransformKind::Eulerian => (vec![0.0; times.len()], vec![0.0; times.len()]),
        TransformKind::MeanFlow => (
            mean_flow_shift(cs, &times, ode_tol)?,
            times.iter().map(|&t| cs.mean_velocity(t)).collect(),
        ),
        TransformKind::Characteristic => {
            return Err(Error::InvalidParameter(
                "the standard FEM runs in Eulerian or mean-flow coordinates".into(),
            ))
        }
    };
    let h = 1.0 / elements as f64;
    if elements as f64 * cs.shortest_scale() < ELEMENTS_PER_PERIOD {
        log::warn!(
            "standard FEM with {elements} elements resolves the shortest coefficient scale {:.3e} with fewer than {ELEMENTS_PER_PERIOD} elements",
            cs.shortest_scale()
        );
    }
    let mass = p1_mass(elements, h, true);
    let assemble = |n: usize| {
        let t = times[n];
        let s0 = shift[n];
        let m = mean[n];
        assemble_p1(elements, h, true, !cs.unforced, |e, q| {
            let x = ((e as f64 + q) * h + s0).rem_euclid(1.0);
            PointCoefficients {
                advection: cs.c(x, t) - m,
                diffusion: cs.mu(x, t),
                forcing: if cs.unforced { 0.0 } else { cs.g(x) },
            }
        })
    };

    let speed = (0..times.len())
        .flat_map(|n| (0..2 * elements).map(move |j| (n, j)))
        .map(|(n, j)| {
            let x = (0.5 * j as f64 * h + shift[n]).rem_euclid(1.0);
            (cs.c(x, times[n]) - mean[n]).abs()
        })
        .fold(0.0, f64::max);
    let substeps = advective_substeps(speed, h, dt);
    if substeps > 1 {
        log::info!("reference: {substeps} advective substeps per step");
    }

    let b = periodic_p1_load(elements, |x| cs.f(x), 8);
    let u0 = mass.solve(&b)?;
    let mut state = StepperState::new(u0, dt / substeps as f64);
    let kept = |n: usize| keep.map_or(true, |k| k.contains(&n));
    let store = |n: usize, u: &[f64]| if kept(n) { u.to_vec() } else { Vec::new() };
    let mut values = Vec::with_capacity(times.len());
    values.push(store(0, &state.current));
    let mut now = assemble(0);
    for n in 0..steps {
        let next = assemble(n + 1);
        imex_interval(
            &mut state,
            &mass,
            now.view(),
            next.view(),
            substeps,
            Boundary::Periodic,
        )?;
        values.push(store(n + 1, &state.current));
        now = next;
    }
    Ok(ReferenceSolution {
        kind,
        elements,
        times,
        shift,
        values,
    })
}
