//! Oscillating vortex velocity field and the velocity-dependent dispersion
//! tensor it induces.

use crate::pde::params::{DispersionParams, FlowParams};
use crate::scalar::Real;

pub type Point<T> = [T; 2];

/// Which half of the oscillation period is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `[νT, (ν + ½)T)`
    First,
    /// `[(ν + ½)T, (ν + 1)T)`
    Second,
}

impl Branch {
    pub fn at<T: Real>(t: T, t_osc: T) -> Branch {
        let phase = t / t_osc;
        let nu = phase.floor();
        if phase - nu < T::lit(0.5) {
            Branch::First
        } else {
            Branch::Second
        }
    }

    pub fn index(self) -> usize {
        match self {
            Branch::First => 0,
            Branch::Second => 1,
        }
    }
}

fn wave<T: Real>(flow: &FlowParams<T>) -> T {
    T::lit(2.0) * T::PI() * T::from_u32(flow.kappa_f_l).expect("u32 converts")
}

pub fn stream_function_at<T: Real>(p: Point<T>, t: T, flow: &FlowParams<T>) -> T {
    let k = wave(flow);
    let [x, y] = p;
    let base = (k * x).sin() - (k * y).sin();
    let pert = match Branch::at(t, flow.t_osc) {
        Branch::First => flow.v0 * (k * y).cos(),
        Branch::Second => -flow.v0 * (k * x).cos(),
    };
    (base + pert) / k
}

/// Velocity `(−∂ψ/∂y, ∂ψ/∂x)` in a given branch.
pub fn velocity_in_branch<T: Real>(p: Point<T>, branch: Branch, flow: &FlowParams<T>) -> Point<T> {
    let k = wave(flow);
    let [x, y] = p;
    match branch {
        Branch::First => [(k * y).cos() + flow.v0 * (k * y).sin(), (k * x).cos()],
        Branch::Second => [(k * y).cos(), (k * x).cos() + flow.v0 * (k * x).sin()],
    }
}

pub fn velocity_at<T: Real>(p: Point<T>, t: T, flow: &FlowParams<T>) -> Point<T> {
    velocity_in_branch(p, Branch::at(t, flow.t_osc), flow)
}

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> Tensor2<T> {
    pub fn scaled_identity(s: T) -> Self {
        Tensor2 { xx: s, xy: T::zero(), yy: s }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [T; 2] {
        let half = T::lit(0.5);
        let mean = half * (self.xx + self.yy);
        let dev = half * (self.xx - self.yy);
        let r = (dev * dev + self.xy * self.xy).sqrt();
        [mean - r, mean + r]
    }

    /// `gᵀ D h`.
    #[inline]
    pub fn bilinear(&self, g: Point<T>, h: Point<T>) -> T {
        g[0] * (self.xx * h[0] + self.xy * h[1]) + g[1] * (self.xy * h[0] + self.yy * h[1])
    }
}

/// `D = D_m I + α_T ‖v‖ I + (α_L − α_T)/‖v‖ · v ⊗ v`, regularized to
/// `D_m I` when `‖v‖` is below the velocity floor.
pub fn dispersion_for_velocity<T: Real>(v: Point<T>, disp: &DispersionParams<T>) -> Tensor2<T> {
    let speed = v[0].hypot(v[1]);
    if speed < disp.velocity_floor {
        return Tensor2::scaled_identity(disp.d_m);
    }
    let iso = disp.d_m + disp.alpha_t * speed;
    let c = (disp.alpha_l - disp.alpha_t) / speed;
    Tensor2 {
        xx: iso + c * v[0] * v[0],
        xy: c * v[0] * v[1],
        yy: iso + c * v[1] * v[1],
    }
}

pub fn dispersion_at<T: Real>(
    p: Point<T>,
    t: T,
    flow: &FlowParams<T>,
    disp: &DispersionParams<T>,
) -> Tensor2<T> {
    dispersion_for_velocity(velocity_at(p, t, flow), disp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flow(v0: f64, k: u32, t_osc: f64) -> FlowParams<f64> {
        FlowParams { v0, kappa_f_l: k, t_osc }
    }

    #[test]
    fn stream_function_examples() {
        assert_eq!(stream_function_at([0.0, 0.0], 0.0, &flow(0.0, 1, 0.1)), 0.0);
        let psi = stream_function_at([0.0, 0.0], 0.0, &flow(1.0, 1, 0.1));
        assert!((psi - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let f = flow(1.0, 1, 1.0);
        let early = stream_function_at([0.3, 0.7], 0.1, &f);
        let late = stream_function_at([0.3, 0.7], 0.6, &f);
        assert!((early - late).abs() > 1e-3);
    }

    #[test]
    fn branch_switches_each_half_period() {
        assert_eq!(Branch::at(0.0, 0.1), Branch::First);
        assert_eq!(Branch::at(0.049, 0.1), Branch::First);
        assert_eq!(Branch::at(0.05, 0.1), Branch::Second);
        assert_eq!(Branch::at(0.1, 0.1), Branch::First);
        assert_eq!(Branch::at(0.17, 0.1), Branch::Second);
    }

    #[test]
    fn velocity_examples() {
        let f = flow(1.0, 1, 1.0);
        let v = velocity_at([0.0, 0.0], 0.1, &f);
        assert_eq!(v, [1.0, 1.0]);
        let v = velocity_at([0.25, 0.0], 0.1, &f);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn velocity_is_minus_curl_of_stream_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = flow(0.3, 3, 0.2);
        let h = 1e-6;
        for _ in 0..100 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let t = rng.gen::<f64>();
            let v = velocity_at(p, t, &f);
            let dpsi_dx = (stream_function_at([p[0] + h, p[1]], t, &f)
                - stream_function_at([p[0] - h, p[1]], t, &f))
                / (2.0 * h);
            let dpsi_dy = (stream_function_at([p[0], p[1] + h], t, &f)
                - stream_function_at([p[0], p[1] - h], t, &f))
                / (2.0 * h);
            assert!((v[0] + dpsi_dy).abs() < 1e-7);
            assert!((v[1] - dpsi_dx).abs() < 1e-7);
        }
    }

    #[test]
    fn velocity_is_divergence_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = flow(1.0, 4, 0.3);
        let h = 1e-5;
        for _ in 0..100 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let t = rng.gen::<f64>();
            let dvx = (velocity_at([p[0] + h, p[1]], t, &f)[0] - velocity_at([p[0] - h, p[1]], t, &f)[0])
                / (2.0 * h);
            let dvy = (velocity_at([p[0], p[1] + h], t, &f)[1] - velocity_at([p[0], p[1] - h], t, &f)[1])
                / (2.0 * h);
            assert!((dvx + dvy).abs() < 1e-10);
        }
    }

    #[test]
    fn dispersion_examples() {
        let disp = DispersionParams::<f64> { d_m: 1e-3, alpha_l: 1.0, alpha_t: 0.1, velocity_floor: 1e-12 };
        let d = dispersion_for_velocity([1.0, 0.0], &disp);
        assert!((d.xx - 1.001).abs() < 1e-15);
        assert!((d.yy - 0.101).abs() < 1e-15);
        assert_eq!(d.xy, 0.0);

        let iso = DispersionParams::isotropic(1e-3, 0.4);
        let v = [0.3, -0.8];
        let d = dispersion_for_velocity(v, &iso);
        let s = 1e-3 + 0.4 * (0.73f64).sqrt();
        assert!((d.xx - s).abs() < 1e-15 && (d.yy - s).abs() < 1e-15 && d.xy == 0.0);

        let d = dispersion_for_velocity([1e-13, 0.0], &disp);
        assert_eq!(d, Tensor2::scaled_identity(1e-3));
    }

    #[test]
    fn dispersion_is_spd_with_floor_d_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = flow(1.0, 2, 0.15);
        let disp = DispersionParams::from_ratio(1e-2, 1.0, 1e4);
        for _ in 0..1000 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let t = rng.gen::<f64>();
            let [lo, _] = dispersion_at(p, t, &f, &disp).eigenvalues();
            assert!(lo >= disp.d_m - 1e-14, "min eigenvalue {lo}");
        }
    }

    #[test]
    fn single_precision_matches_double() {
        let f64_flow = flow(0.5, 2, 0.1);
        let f32_flow = FlowParams { v0: 0.5f32, kappa_f_l: 2, t_osc: 0.1 };
        let a = velocity_at([0.3, 0.6], 0.02, &f64_flow);
        let b = velocity_at([0.3f32, 0.6], 0.02, &f32_flow);
        assert!((a[0] - b[0] as f64).abs() < 1e-5 && (a[1] - b[1] as f64).abs() < 1e-5);
    }
}
