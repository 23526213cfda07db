//! Normalized mixing quantities of interest and the four-class mixing state.

use crate::error::{Error, Result};
use crate::pde::{build_mesh, Mesh, Species, Trajectory};
use crate::scalar::Real;

/// Nine normalized time series plus the mixing class of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiSeries<T> {
    pub sim_id: usize,
    pub times: Vec<T>,
    /// `c̄_i(t) = ⟨c_i⟩ / max_t ⟨c_i⟩`, indexed by species.
    pub avg_conc: [Vec<T>; 3],
    /// `⟨c_i²⟩ / max_t ⟨c_i²⟩`.
    pub avg_sq_conc: [Vec<T>; 3],
    /// Normalized variance `σ²_{c_i}`.
    pub degree_of_mixing: [Vec<T>; 3],
    pub mixing_class: Vec<u8>,
    /// Species whose degree of mixing drives `mixing_class`.
    pub class_species: Species,
}

impl<T: Real> QoiSeries<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The nine regression series in campaign-CSV column order:
    /// `cbar_A..C, csq_A..C, var_A..C`.
    pub fn columns(&self) -> [&[T]; 9] {
        [
            &self.avg_conc[0],
            &self.avg_conc[1],
            &self.avg_conc[2],
            &self.avg_sq_conc[0],
            &self.avg_sq_conc[1],
            &self.avg_sq_conc[2],
            &self.degree_of_mixing[0],
            &self.degree_of_mixing[1],
            &self.degree_of_mixing[2],
        ]
    }
}

/// `(⟨c⟩(t), ⟨c²⟩(t))` for one species, integrated with the lumped mass.
pub fn raw_moments<T: Real>(traj: &Trajectory<T>, mesh: &Mesh<T>, species: Species) -> Result<(Vec<T>, Vec<T>)> {
    if !traj.completed {
        return Err(Error::IncompleteRun(traj.last().time.as_f64()));
    }
    if mesh.n_side != traj.config.mesh_n_side {
        return Err(Error::invalid("mesh does not match the trajectory"));
    }
    let s = species.index();
    let mut mean = Vec::with_capacity(traj.frames.len());
    let mut sq = Vec::with_capacity(traj.frames.len());
    for f in &traj.frames {
        let c = &f.conc[s];
        mean.push(mesh.integrate(c));
        let c2: T = mesh.lumped_mass.iter().zip(c).map(|(&m, &v)| m * v * v).sum();
        sq.push(c2);
    }
    Ok((mean, sq))
}

/// Divides by the series maximum; an all-zero series stays all zeros.
pub fn normalize_by_max<T: Real>(series: &[T]) -> Vec<T> {
    let max = series.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        series.iter().map(|&v| (v / max).max(T::zero())).collect()
    } else {
        vec![T::zero(); series.len()]
    }
}

/// Mixing class from a normalized variance: bins `[0, .25)`, `[.25, .5)`,
/// `[.5, .75)`, `[.75, 1]` map to 1–4.
pub fn classify_mixing<T: Real>(sigma2: T) -> Result<u8> {
    if !(sigma2 >= T::zero() && sigma2 <= T::one()) {
        return Err(Error::invalid(format!("degree of mixing {sigma2} outside [0, 1]")));
    }
    let bin = (sigma2 * T::lit(4.0)).floor().to_u8().unwrap_or(3);
    Ok(bin.min(3) + 1)
}

pub fn normalized_qois<T: Real>(traj: &Trajectory<T>, sim_id: usize) -> Result<QoiSeries<T>> {
    let mesh = build_mesh::<T>(traj.config.mesh_n_side)?;
    normalized_qois_on(traj, &mesh, sim_id, Species::C)
}

pub fn normalized_qois_on<T: Real>(
    traj: &Trajectory<T>,
    mesh: &Mesh<T>,
    sim_id: usize,
    class_species: Species,
) -> Result<QoiSeries<T>> {
    let mut avg_conc: [Vec<T>; 3] = Default::default();
    let mut avg_sq_conc: [Vec<T>; 3] = Default::default();
    let mut degree_of_mixing: [Vec<T>; 3] = Default::default();
    for s in Species::ALL {
        let (mean, sq) = raw_moments(traj, mesh, s)?;
        let var: Vec<T> = mean
            .iter()
            .zip(&sq)
            .map(|(&m, &q)| (q - m * m).max(T::zero()))
            .collect();
        let i = s.index();
        avg_conc[i] = normalize_by_max(&mean);
        avg_sq_conc[i] = normalize_by_max(&sq);
        degree_of_mixing[i] = normalize_by_max(&var);
    }
    let mixing_class = degree_of_mixing[class_species.index()]
        .iter()
        .map(|&v| classify_mixing(v))
        .collect::<Result<Vec<_>>>()?;
    Ok(QoiSeries {
        sim_id,
        times: traj.times(),
        avg_conc,
        avg_sq_conc,
        degree_of_mixing,
        mixing_class,
        class_species,
    })
}
