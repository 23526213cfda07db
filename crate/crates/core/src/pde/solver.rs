//! Lie-split time stepping: backward-Euler Galerkin dispersion with a
//! bound-constrained projected Gauss-Seidel solve, then a pointwise reaction
//! update.

use crate::error::{Error, Result};
use crate::pde::flow::{dispersion_for_velocity, velocity_in_branch, Branch};
use crate::pde::mesh::{build_mesh, Mesh, Pattern};
use crate::pde::params::{ReactionMode, ReactionParams, SimulationConfig, SolverSettings};
use crate::pde::trajectory::{Frame, Trajectory};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    A,
    B,
    C,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::A, Species::B, Species::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::A => "A",
            Species::B => "B",
            Species::C => "C",
        }
    }

    pub fn from_name(s: &str) -> Option<Species> {
        match s {
            "A" | "a" => Some(Species::A),
            "B" | "b" => Some(Species::B),
            "C" | "c" => Some(Species::C),
            _ => None,
        }
    }
}

/// Nodal concentrations of the three species.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalFields<T> {
    pub conc: [Vec<T>; 3],
}

impl<T: Real> NodalFields<T> {
    /// Segregated start: A fills `x < ½`, B fills `x > ½`, nodes on the
    /// interface carry half of each, no product.
    pub fn initial(mesh: &Mesh<T>) -> Self {
        let half = T::lit(0.5);
        let n = mesh.node_count();
        let mut a = vec![T::zero(); n];
        let mut b = vec![T::zero(); n];
        for (k, p) in mesh.coords.iter().enumerate() {
            if p[0] < half {
                a[k] = T::one();
            } else if p[0] > half {
                b[k] = T::one();
            } else {
                a[k] = half;
                b[k] = half;
            }
        }
        NodalFields {
            conc: [a, b, vec![T::zero(); n]],
        }
    }

    pub fn uniform(n: usize, values: [T; 3]) -> Self {
        NodalFields {
            conc: values.map(|v| vec![v; n]),
        }
    }

    pub fn species(&self, s: Species) -> &[T] {
        &self.conc[s.index()]
    }

    pub fn node_count(&self) -> usize {
        self.conc[0].len()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats<T> {
    pub sweeps: [usize; 3],
    /// Mass created (positive) or destroyed (negative) by the bound
    /// projection, before the conservative correction removes it.
    pub mass_defect: [T; 3],
}

/// Reusable stepping state for one mesh and configuration. Assembled
/// operators are cached per flow branch, since the velocity is piecewise
/// constant in time.
#[derive(Debug)]
pub struct Solver<'m, T: Real> {
    mesh: &'m Mesh<T>,
    config: SimulationConfig<T>,
    stiffness: [Option<Vec<T>>; 2],
    system: [Option<(T, Vec<T>)>; 2],
    rhs: Vec<T>,
}

impl<'m, T: Real> Solver<'m, T> {
    pub fn new(mesh: &'m Mesh<T>, config: SimulationConfig<T>) -> Result<Self> {
        config.validate()?;
        if mesh.n_side != config.mesh_n_side {
            return Err(Error::invalid(format!(
                "mesh has {} nodes per side but config asks for {}",
                mesh.n_side, config.mesh_n_side
            )));
        }
        Ok(Solver {
            mesh,
            config,
            stiffness: [None, None],
            system: [None, None],
            rhs: vec![T::zero(); mesh.node_count()],
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        self.mesh
    }

    pub fn config(&self) -> &SimulationConfig<T> {
        &self.config
    }

    fn stiffness(&mut self, branch: Branch) -> &[T] {
        let mesh = self.mesh;
        let cfg = &self.config;
        self.stiffness[branch.index()].get_or_insert_with(|| {
            assemble_stiffness(mesh, |c| {
                dispersion_for_velocity(velocity_in_branch(c, branch, &cfg.flow), &cfg.dispersion)
            })
        })
    }

    fn system(&mut self, branch: Branch, dt: T) -> &[T] {
        let b = branch.index();
        let stale = !matches!(&self.system[b], Some((cached, _)) if *cached == dt);
        if stale {
            let mut values = self.stiffness(branch).to_vec();
            for (i, &d) in self.mesh.pattern.diag.iter().enumerate() {
                values[d] = values[d] + self.mesh.lumped_mass[i] / dt;
            }
            self.system[b] = Some((dt, values));
        }
        &self.system[b].as_ref().unwrap().1
    }

    /// Advances `state` from `t` to `t + dt`.
    pub fn step(&mut self, state: &mut NodalFields<T>, t: T, dt: T) -> Result<StepStats<T>> {
        self.advance(state, t + dt, dt)
    }

    /// One split step ending at `t_new`; the dispersion tensor is frozen at
    /// `t_new`.
    fn advance(&mut self, state: &mut NodalFields<T>, t_new: T, dt: T) -> Result<StepStats<T>> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be finite and > 0, got {dt}")));
        }
        if state.node_count() != self.mesh.node_count() {
            return Err(Error::invalid("state size does not match the mesh"));
        }
        let branch = Branch::at(t_new, self.config.flow.t_osc);
        let settings = self.config.solver;
        let reaction = self.config.reaction;
        // Borrow dance: the system matrix lives in self, the rhs buffer too.
        self.system(branch, dt);
        let values = &self.system[branch.index()].as_ref().unwrap().1;
        let mesh = self.mesh;
        let mut stats = StepStats {
            sweeps: [0; 3],
            mass_defect: [T::zero(); 3],
        };
        for s in 0..3 {
            let c = &mut state.conc[s];
            let hi = c.iter().copied().fold(T::zero(), T::max);
            if hi == T::zero() {
                continue;
            }
            for ((r, &m), &v) in self.rhs.iter_mut().zip(&mesh.lumped_mass).zip(c.iter()) {
                *r = m * v / dt;
            }
            let before = mesh.integrate(c);
            let sweeps = projected_gauss_seidel(&mesh.pattern, values, &self.rhs, c, T::zero(), hi, &settings)
                .map_err(|(sweeps, residual)| Error::StepDivergence {
                    time: t_new.as_f64(),
                    sweeps,
                    residual,
                })?;
            stats.sweeps[s] = sweeps;
            stats.mass_defect[s] = restore_mass(mesh, c, before, hi);
        }
        react_all(state, &reaction, dt);
        Ok(stats)
    }
}

/// Galerkin stiffness `K_ij = Σ_e |e| ∇φ_iᵀ D_e ∇φ_j` with the tensor frozen
/// at element centroids.
pub fn assemble_stiffness<T: Real, F>(mesh: &Mesh<T>, tensor_at: F) -> Vec<T>
where
    F: Fn([T; 2]) -> crate::pde::flow::Tensor2<T>,
{
    let mut values = vec![T::zero(); mesh.pattern.nnz()];
    for (e, slots) in mesh.elements.iter().zip(&mesh.pattern.element_slots) {
        let d = tensor_at(e.centroid);
        for a in 0..3 {
            for b in 0..3 {
                let k = e.area * d.bilinear(e.grads[a], e.grads[b]);
                values[slots[3 * a + b]] = values[slots[3 * a + b]] + k;
            }
        }
    }
    values
}

/// Solves `A x = rhs` subject to `lo ≤ x ≤ hi` by projected (over-relaxed)
/// Gauss-Seidel, warm-started from `x`. Returns the sweep count, or the
/// sweep count and last relative update norm on failure.
pub fn projected_gauss_seidel<T: Real>(
    pattern: &Pattern,
    values: &[T],
    rhs: &[T],
    x: &mut [T],
    lo: T,
    hi: T,
    settings: &SolverSettings,
) -> std::result::Result<usize, (usize, f64)> {
    let omega = T::lit(settings.relaxation);
    let tol = T::lit(settings.tolerance);
    let n = x.len();
    let mut last = f64::INFINITY;
    for sweep in 1..=settings.max_sweeps {
        let mut delta2 = T::zero();
        let mut norm2 = T::zero();
        for i in 0..n {
            let mut s = rhs[i];
            let (start, end) = (pattern.row_ptr[i], pattern.row_ptr[i + 1]);
            for k in start..end {
                let j = pattern.cols[k];
                if j != i {
                    s = s - values[k] * x[j];
                }
            }
            let gs = s / values[pattern.diag[i]];
            let old = x[i];
            let new = (old + omega * (gs - old)).max(lo).min(hi);
            let d = new - old;
            delta2 = delta2 + d * d;
            norm2 = norm2 + new * new;
            x[i] = new;
        }
        if !delta2.is_finite() {
            return Err((sweep, f64::INFINITY));
        }
        let scale = norm2.sqrt().max(T::min_positive_value());
        let rel = delta2.sqrt() / scale;
        last = rel.as_f64();
        if rel <= tol {
            return Ok(sweep);
        }
    }
    Err((settings.max_sweeps, last))
}

/// Pulls the total mass of `c` back to `target` while staying inside
/// `[0, hi]`: excess mass is removed by scaling towards zero, missing mass is
/// added by scaling the gap to `hi`. Returns the defect that was removed.
fn restore_mass<T: Real>(mesh: &Mesh<T>, c: &mut [T], target: T, hi: T) -> T {
    let after = mesh.integrate(c);
    let defect = after - target;
    if defect > T::zero() && after > T::zero() {
        let f = target / after;
        for v in c.iter_mut() {
            *v = *v * f;
        }
    } else if defect < T::zero() {
        let total: T = mesh.lumped_mass.iter().copied().sum();
        let room = hi * total - after;
        if room > T::zero() {
            let f = (hi * total - target) / room;
            for v in c.iter_mut() {
                *v = (hi - (hi - *v) * f).max(T::zero()).min(hi);
            }
        }
    }
    defect
}

fn react_all<T: Real>(state: &mut NodalFields<T>, params: &ReactionParams<T>, dt: T) {
    if matches!(params.mode, ReactionMode::Off) {
        return;
    }
    let [a, b, c] = &mut state.conc;
    for k in 0..a.len() {
        let (na, nb, nc) = react(a[k], b[k], params, dt);
        a[k] = na;
        b[k] = nb;
        c[k] = c[k] + nc;
    }
}

/// Pointwise reaction over `dt`. Returns the new `(c_A, c_B)` and the
/// amount of C produced.
pub fn react<T: Real>(a: T, b: T, params: &ReactionParams<T>, dt: T) -> (T, T, T) {
    let [sa, sb, sc] = params.stoich.map(|n| T::from_u32(n).expect("u32 converts"));
    let p = a / sa;
    let q = b / sb;
    match params.mode {
        ReactionMode::Off => (a, b, T::zero()),
        ReactionMode::Instantaneous => {
            if p <= q {
                (T::zero(), (b - sb * p).max(T::zero()), sc * p)
            } else {
                ((a - sa * q).max(T::zero()), T::zero(), sc * q)
            }
        }
        ReactionMode::FiniteRate { k_ab } => {
            // Extent ξ solves dξ/dt = κ (p − ξ)(q − ξ), κ = k n_A n_B.
            let kappa = k_ab * sa * sb;
            let (big, small) = if p >= q { (p, q) } else { (q, p) };
            let delta = big - small;
            let rest = if small <= T::zero() {
                T::zero()
            } else if delta > T::zero() {
                small * delta / (delta + big * (kappa * delta * dt).exp_m1())
            } else {
                small / (T::one() + kappa * small * dt)
            };
            let rest = rest.max(T::zero()).min(small);
            let extent = small - rest;
            let (ra, rb) = if p >= q { (rest + delta, rest) } else { (rest, rest + delta) };
            (sa * ra, sb * rb, sc * extent)
        }
    }
}

/// Advances one step on a fresh solver; see [`Solver::step`].
pub fn step<T: Real>(
    mesh: &Mesh<T>,
    state: &NodalFields<T>,
    t: T,
    dt: T,
    config: &SimulationConfig<T>,
) -> Result<(NodalFields<T>, StepStats<T>)> {
    let mut solver = Solver::new(mesh, *config)?;
    let mut next = state.clone();
    let stats = solver.step(&mut next, t, dt)?;
    Ok((next, stats))
}

/// Runs a full simulation from the segregated initial condition, keeping
/// every `save_every`-th frame and the last one. A step that fails to
/// converge ends the run early with `completed = false`.
pub fn solve<T: Real>(config: &SimulationConfig<T>, save_every: usize) -> Result<Trajectory<T>> {
    if save_every == 0 {
        return Err(Error::invalid("save_every must be >= 1"));
    }
    let mesh = build_mesh::<T>(config.mesh_n_side)?;
    solve_on(&mesh, config, save_every)
}

pub fn solve_on<T: Real>(mesh: &Mesh<T>, config: &SimulationConfig<T>, save_every: usize) -> Result<Trajectory<T>> {
    if save_every == 0 {
        return Err(Error::invalid("save_every must be >= 1"));
    }
    let mut solver = Solver::new(mesh, *config)?;
    let mut state = NodalFields::initial(mesh);
    let mut traj = Trajectory::new(*config, save_every);
    traj.frames.push(Frame {
        time: T::zero(),
        conc: state.conc.clone(),
    });
    for k in 1..=config.n_steps {
        let t_new = config.time_at(k);
        match solver.advance(&mut state, t_new, config.dt) {
            Ok(stats) => {
                for s in 0..3 {
                    traj.mass_defect[s] = traj.mass_defect[s] + stats.mass_defect[s].abs();
                    traj.max_sweeps = traj.max_sweeps.max(stats.sweeps[s]);
                }
            }
            Err(e @ Error::StepDivergence { .. }) => {
                log::warn!("simulation stopped: {e}");
                traj.failure = Some(e.to_string());
                traj.completed = false;
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
        if k % save_every == 0 || k == config.n_steps {
            traj.frames.push(Frame {
                time: t_new,
                conc: state.conc.clone(),
            });
        }
    }
    traj.completed = true;
    Ok(traj)
}
