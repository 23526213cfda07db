//! Stored simulation output and its binary/sidecar persistence.
//!
//! Binary layout (`.mxt`, all little-endian):
//!
//! ```text
//! "MXT1"  u32 version
//! f64 v0, u32 kappa_f_l, f64 t_osc
//! f64 d_m, f64 alpha_l, f64 alpha_t, f64 velocity_floor
//! u8 reaction (0 off, 1 instantaneous, 2 finite-rate), f64 k_ab, u32×3 stoich
//! u64 mesh_n_side, f64 dt, u64 n_steps, u64 save_every
//! u64 max_sweeps, f64 tolerance, f64 relaxation
//! u8 completed, f64×3 mass defect, u64 frame count, u64 node count
//! per frame: f64 time, f64×nodes c_A, f64×nodes c_B, f64×nodes c_C
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::pde::params::{
    DispersionParams, FlowParams, ReactionMode, ReactionParams, SimulationConfig, SolverSettings,
};
use crate::scalar::Real;

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"MXT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub time: T,
    pub conc: [Vec<T>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub config: SimulationConfig<T>,
    pub save_every: usize,
    pub frames: Vec<Frame<T>>,
    pub completed: bool,
    pub failure: Option<String>,
    /// Accumulated |mass| added or removed by the bound projection, per
    /// species, before the conservative correction.
    pub mass_defect: [T; 3],
    pub max_sweeps: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn new(config: SimulationConfig<T>, save_every: usize) -> Self {
        Trajectory {
            config,
            save_every,
            frames: Vec::new(),
            completed: false,
            failure: None,
            mass_defect: [T::zero(); 3],
            max_sweeps: 0,
        }
    }

    pub fn times(&self) -> Vec<T> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn last(&self) -> &Frame<T> {
        self.frames.last().expect("trajectory holds the initial frame")
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let c = &self.config;
        let mut w = Writer::new();
        w.bytes(TRAJECTORY_MAGIC);
        w.u32(VERSION);
        w.f64(c.flow.v0.as_f64());
        w.u32(c.flow.kappa_f_l);
        w.f64(c.flow.t_osc.as_f64());
        w.f64(c.dispersion.d_m.as_f64());
        w.f64(c.dispersion.alpha_l.as_f64());
        w.f64(c.dispersion.alpha_t.as_f64());
        w.f64(c.dispersion.velocity_floor.as_f64());
        let (tag, k) = match c.reaction.mode {
            ReactionMode::Off => (0u8, 0.0),
            ReactionMode::Instantaneous => (1, 0.0),
            ReactionMode::FiniteRate { k_ab } => (2, k_ab.as_f64()),
        };
        w.u8(tag);
        w.f64(k);
        for n in c.reaction.stoich {
            w.u32(n);
        }
        w.usize(c.mesh_n_side);
        w.f64(c.dt.as_f64());
        w.usize(c.n_steps);
        w.usize(self.save_every);
        w.usize(c.solver.max_sweeps);
        w.f64(c.solver.tolerance);
        w.f64(c.solver.relaxation);
        w.bool(self.completed);
        for d in self.mass_defect {
            w.f64(d.as_f64());
        }
        let nodes = self.frames.first().map_or(0, |f| f.conc[0].len());
        w.usize(self.frames.len());
        w.usize(nodes);
        for f in &self.frames {
            w.f64(f.time.as_f64());
            for s in &f.conc {
                w.f64s_raw(s.iter().map(|v| v.as_f64()));
            }
        }
        w.write_to(path)
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader::new(&bytes, path);
        r.expect_magic(TRAJECTORY_MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let flow = FlowParams {
            v0: T::lit(r.f64()?),
            kappa_f_l: r.u32()?,
            t_osc: T::lit(r.f64()?),
        };
        let dispersion = DispersionParams {
            d_m: T::lit(r.f64()?),
            alpha_l: T::lit(r.f64()?),
            alpha_t: T::lit(r.f64()?),
            velocity_floor: T::lit(r.f64()?),
        };
        let tag = r.u8()?;
        let k = r.f64()?;
        let mode = match tag {
            0 => ReactionMode::Off,
            1 => ReactionMode::Instantaneous,
            2 => ReactionMode::FiniteRate { k_ab: T::lit(k) },
            t => return Err(r.fail(format!("unknown reaction tag {t}"))),
        };
        let stoich = [r.u32()?, r.u32()?, r.u32()?];
        let mesh_n_side = r.usize()?;
        let dt = T::lit(r.f64()?);
        let n_steps = r.usize()?;
        let save_every = r.usize()?;
        let solver = SolverSettings {
            max_sweeps: r.usize()?,
            tolerance: r.f64()?,
            relaxation: r.f64()?,
        };
        let completed = r.bool()?;
        let mass_defect = [T::lit(r.f64()?), T::lit(r.f64()?), T::lit(r.f64()?)];
        let n_frames = r.usize()?;
        let nodes = r.usize()?;
        if nodes != mesh_n_side * mesh_n_side {
            return Err(r.fail(format!("{nodes} nodes for a {mesh_n_side}-per-side mesh")));
        }
        let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
        for _ in 0..n_frames {
            let time = T::lit(r.f64()?);
            let mut read = || -> Result<Vec<T>> { Ok(r.f64s_raw(nodes)?.into_iter().map(T::lit).collect()) };
            let conc = [read()?, read()?, read()?];
            frames.push(Frame { time, conc });
        }
        r.finish()?;
        Ok(Trajectory {
            config: SimulationConfig {
                flow,
                dispersion,
                reaction: ReactionParams { mode, stoich },
                mesh_n_side,
                dt,
                n_steps,
                solver,
            },
            save_every,
            frames,
            completed,
            failure: None,
            mass_defect,
            max_sweeps: 0,
        })
    }

    /// Plain-text `key = value` sidecar describing the run.
    pub fn metadata(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format", "MXT1".into());
        kv("v0", c.flow.v0.to_string());
        kv("kappa_f_l", c.flow.kappa_f_l.to_string());
        kv("t_osc", c.flow.t_osc.to_string());
        kv("d_m", c.dispersion.d_m.to_string());
        kv("alpha_l", c.dispersion.alpha_l.to_string());
        kv("alpha_t", c.dispersion.alpha_t.to_string());
        kv("aniso_ratio", c.dispersion.aniso_ratio().to_string());
        let reaction = match c.reaction.mode {
            ReactionMode::Off => "off".to_string(),
            ReactionMode::Instantaneous => "instantaneous".to_string(),
            ReactionMode::FiniteRate { k_ab } => format!("finite_rate k_ab={k_ab}"),
        };
        kv("reaction", reaction);
        kv(
            "stoich",
            format!("{} {} {}", c.reaction.stoich[0], c.reaction.stoich[1], c.reaction.stoich[2]),
        );
        kv("mesh_n_side", c.mesh_n_side.to_string());
        kv("dt", c.dt.to_string());
        kv("n_steps", c.n_steps.to_string());
        kv("horizon", c.horizon().to_string());
        kv("save_every", self.save_every.to_string());
        kv("frames", self.frames.len().to_string());
        kv("completed", self.completed.to_string());
        kv(
            "mass_defect",
            format!("{} {} {}", self.mass_defect[0], self.mass_defect[1], self.mass_defect[2]),
        );
        if let Some(f) = &self.failure {
            kv("failure", f.clone());
        }
        s
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.metadata()).map_err(|e| Error::io(path, e))
    }
}
