use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Oscillating vortex flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FlowParams<T: Real> {
    /// Perturbation amplitude skewing the vortices.
    pub v0: T,
    /// Vortex wavenumber times the (unit) domain length.
    pub kappa_f_l: u32,
    /// Oscillation period.
    pub t_osc: T,
}

/// Molecular diffusion plus velocity-dependent mechanical dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DispersionParams<T: Real> {
    pub d_m: T,
    pub alpha_l: T,
    pub alpha_t: T,
    /// Below this speed the tensor collapses to `d_m · I`.
    #[serde(default = "default_velocity_floor")]
    pub velocity_floor: T,
}

fn default_velocity_floor<T: Real>() -> T {
    T::lit(1e-12)
}

impl<T: Real> DispersionParams<T> {
    /// Dispersivities from an anisotropy ratio `alpha_l / alpha_t` with the
    /// longitudinal dispersivity fixed.
    pub fn from_ratio(d_m: T, alpha_l: T, ratio: T) -> Self {
        DispersionParams {
            d_m,
            alpha_l,
            alpha_t: alpha_l / ratio,
            velocity_floor: default_velocity_floor(),
        }
    }

    pub fn isotropic(d_m: T, alpha: T) -> Self {
        DispersionParams {
            d_m,
            alpha_l: alpha,
            alpha_t: alpha,
            velocity_floor: default_velocity_floor(),
        }
    }

    /// `alpha_l / alpha_t`, or 1 when both vanish.
    pub fn aniso_ratio(&self) -> T {
        if self.alpha_t > T::zero() {
            self.alpha_l / self.alpha_t
        } else {
            T::one()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum ReactionMode<T: Real> {
    /// Pure transport: species do not react.
    Off,
    /// Fast-reaction limit: reactants cannot coexist at a node.
    Instantaneous,
    /// Second-order kinetics `r = k_ab · c_A · c_B`.
    FiniteRate { k_ab: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReactionParams<T: Real> {
    pub mode: ReactionMode<T>,
    /// Stoichiometric coefficients `(n_A, n_B, n_C)`.
    #[serde(default = "default_stoich")]
    pub stoich: [u32; 3],
}

fn default_stoich() -> [u32; 3] {
    [1, 1, 1]
}

impl<T: Real> Default for ReactionParams<T> {
    fn default() -> Self {
        ReactionParams {
            mode: ReactionMode::Instantaneous,
            stoich: default_stoich(),
        }
    }
}

impl<T: Real> ReactionParams<T> {
    pub fn off() -> Self {
        ReactionParams {
            mode: ReactionMode::Off,
            stoich: default_stoich(),
        }
    }
}

/// Projected Gauss-Seidel controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_sweeps: usize,
    /// Stop when `‖Δc‖₂ ≤ tolerance · ‖c‖₂` over one sweep.
    pub tolerance: f64,
    /// Over-relaxation factor; 1 is plain Gauss-Seidel.
    pub relaxation: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_sweeps: 10_000,
            tolerance: 1e-10,
            relaxation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SimulationConfig<T: Real> {
    pub flow: FlowParams<T>,
    pub dispersion: DispersionParams<T>,
    #[serde(default)]
    pub reaction: ReactionParams<T>,
    pub mesh_n_side: usize,
    pub dt: T,
    pub n_steps: usize,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl<T: Real> SimulationConfig<T> {
    /// The paper-scale discretization: 81 nodes per side, 1,000 steps of 1e-3.
    pub fn full_scale(flow: FlowParams<T>, dispersion: DispersionParams<T>) -> Self {
        SimulationConfig {
            flow,
            dispersion,
            reaction: ReactionParams::default(),
            mesh_n_side: 81,
            dt: T::lit(1e-3),
            n_steps: 1000,
            solver: SolverSettings::default(),
        }
    }

    /// Desk-scale discretization: 41 nodes per side, 200 steps of 5e-3.
    pub fn desk_scale(flow: FlowParams<T>, dispersion: DispersionParams<T>) -> Self {
        SimulationConfig {
            mesh_n_side: 41,
            dt: T::lit(5e-3),
            n_steps: 200,
            ..Self::full_scale(flow, dispersion)
        }
    }

    /// Total simulated time `dt · n_steps`.
    pub fn horizon(&self) -> T {
        self.dt * T::from_usize_lossy(self.n_steps)
    }

    /// Time stamp of step `k` (`k = 0` is the initial condition).
    pub fn time_at(&self, k: usize) -> T {
        self.dt * T::from_usize_lossy(k)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.flow;
        let d = &self.dispersion;
        let finite = |x: T| x.is_finite();
        if !(finite(f.v0) && f.v0 >= T::zero()) {
            return Err(Error::invalid(format!("v0 must be finite and >= 0, got {}", f.v0)));
        }
        if f.kappa_f_l < 1 {
            return Err(Error::invalid("kappa_f_l must be >= 1"));
        }
        if !(finite(f.t_osc) && f.t_osc > T::zero()) {
            return Err(Error::invalid(format!("t_osc must be > 0, got {}", f.t_osc)));
        }
        if !(finite(d.d_m) && d.d_m >= T::zero()) {
            return Err(Error::invalid(format!("d_m must be >= 0, got {}", d.d_m)));
        }
        if !(finite(d.alpha_t) && finite(d.alpha_l) && d.alpha_t >= T::zero() && d.alpha_l >= d.alpha_t)
        {
            return Err(Error::invalid(format!(
                "need alpha_l >= alpha_t >= 0, got alpha_l = {}, alpha_t = {}",
                d.alpha_l, d.alpha_t
            )));
        }
        if !(d.velocity_floor > T::zero()) {
            return Err(Error::invalid("velocity_floor must be > 0"));
        }
        if self.reaction.stoich.iter().any(|&n| n < 1) {
            return Err(Error::invalid("stoichiometric coefficients must be >= 1"));
        }
        if let ReactionMode::FiniteRate { k_ab } = self.reaction.mode {
            if !(finite(k_ab) && k_ab > T::zero()) {
                return Err(Error::invalid(format!("k_ab must be > 0, got {k_ab}")));
            }
        }
        if self.mesh_n_side < 3 {
            return Err(Error::invalid(format!(
                "mesh_n_side must be >= 3, got {}",
                self.mesh_n_side
            )));
        }
        if !(finite(self.dt) && self.dt > T::zero()) {
            return Err(Error::invalid(format!("dt must be finite and > 0, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(Error::invalid("n_steps must be >= 1"));
        }
        let s = &self.solver;
        if s.max_sweeps < 1 || !(s.tolerance > 0.0) || !(s.relaxation > 0.0 && s.relaxation < 2.0) {
            return Err(Error::invalid(
                "solver needs max_sweeps >= 1, tolerance > 0 and 0 < relaxation < 2",
            ));
        }
        Ok(())
    }
}
