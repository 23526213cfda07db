use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{DispersionParams, FlowParams, ReactionParams, SimulationConfig, SolverSettings};

/// Parameter lists whose Cartesian product is a campaign.
///
/// `aniso_ratio` is `αL/αT` with `αL` held at `alpha_l`. The optional
/// discretization fields override the desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub v0: Vec<f64>,
    pub aniso_ratio: Vec<f64>,
    pub d_m: Vec<f64>,
    pub kappa_f_l: Vec<u32>,
    pub t_osc: Vec<f64>,
    #[serde(default = "one")]
    pub alpha_l: f64,
    #[serde(default)]
    pub mesh_n_side: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default = "one_usize")]
    pub save_every: usize,
    #[serde(default)]
    pub reaction: ReactionParams<f64>,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl GridSpec {
    /// The 5·5·4·5·5 grid of the reference campaign (2,500 configurations).
    pub fn paper() -> Self {
        GridSpec {
            v0: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
            aniso_ratio: vec![1.0, 1e1, 1e2, 1e3, 1e4],
            d_m: vec![1e-8, 1e-3, 1e-2, 1e-1],
            kappa_f_l: vec![1, 2, 3, 4, 5],
            t_osc: vec![1e-4, 2e-4, 3e-4, 4e-4, 5e-4],
            alpha_l: 1.0,
            mesh_n_side: Some(81),
            dt: Some(1e-3),
            n_steps: Some(1000),
            save_every: 1,
            reaction: ReactionParams::default(),
            solver: SolverSettings::default(),
        }
    }

    /// A 2·3·2·2·2 reduction of [`GridSpec::paper`] at desk scale (48 configurations).
    pub fn desk() -> Self {
        GridSpec {
            v0: vec![1.0, 1e-1],
            aniso_ratio: vec![1.0, 1e2, 1e4],
            d_m: vec![1e-3, 1e-1],
            kappa_f_l: vec![1, 3],
            t_osc: vec![1e-4, 3e-4],
            mesh_n_side: None,
            dt: None,
            n_steps: None,
            ..Self::paper()
        }
    }

    pub fn len(&self) -> usize {
        self.v0.len() * self.aniso_ratio.len() * self.d_m.len() * self.kappa_f_l.len() * self.t_osc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("v0", self.v0.len()),
            ("aniso_ratio", self.aniso_ratio.len()),
            ("d_m", self.d_m.len()),
            ("kappa_f_l", self.kappa_f_l.len()),
            ("t_osc", self.t_osc.len()),
        ];
        for (name, n) in lists {
            if n == 0 {
                return Err(Error::invalid(format!("grid list `{name}` is empty")));
            }
        }
        if let Some(r) = self.aniso_ratio.iter().find(|r| !(**r >= 1.0 && r.is_finite())) {
            return Err(Error::invalid(format!("aniso_ratio values must be >= 1, got {r}")));
        }
        if self.save_every == 0 {
            return Err(Error::invalid("save_every must be >= 1"));
        }
        Ok(())
    }
}

/// Cartesian product in lexicographic order: `v0` varies slowest, `t_osc` fastest.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<SimulationConfig<f64>>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.len());
    for &v0 in &spec.v0 {
        for &ratio in &spec.aniso_ratio {
            for &d_m in &spec.d_m {
                for &kappa_f_l in &spec.kappa_f_l {
                    for &t_osc in &spec.t_osc {
                        let mut cfg = SimulationConfig::desk_scale(
                            FlowParams { v0, kappa_f_l, t_osc },
                            DispersionParams::from_ratio(d_m, spec.alpha_l, ratio),
                        );
                        if let Some(n) = spec.mesh_n_side {
                            cfg.mesh_n_side = n;
                        }
                        if let Some(dt) = spec.dt {
                            cfg.dt = dt;
                        }
                        if let Some(n) = spec.n_steps {
                            cfg.n_steps = n;
                        }
                        cfg.reaction = spec.reaction;
                        cfg.solver = spec.solver;
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
    }
    Ok(out)
}
