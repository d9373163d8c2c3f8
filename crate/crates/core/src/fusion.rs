//! Converted-measurement Kalman filtering of neighbor kinematics.
//!
//! Visual detections arrive in polar form (range, azimuth, elevation). They
//! are converted to Cartesian position with multiplicative debiasing, the
//! conditional bias of the conversion is removed, and the result drives a
//! constant-velocity Kalman filter together with the kinematics reported in
//! beacons.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::identity::{DigitalIdentity, FeatureVector};

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Raw polar detection with its noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarMeasurement {
    /// Range (m).
    pub r: f64,
    /// Azimuth (rad).
    pub theta: f64,
    /// Elevation (rad), within [-pi/2, pi/2].
    pub phi: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
}

impl PolarMeasurement {
    pub fn new(r: f64, theta: f64, phi: f64, sigma_r: f64, sigma_theta: f64, sigma_phi: f64) -> Result<Self> {
        let m = PolarMeasurement {
            r,
            theta,
            phi,
            sigma_r,
            sigma_theta,
            sigma_phi,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.theta, self.phi, self.sigma_r, self.sigma_theta, self.sigma_phi];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("polar measurement has non-finite fields");
        }
        if self.r < 0.0 {
            return invalid(format!("negative range {}", self.r));
        }
        if self.sigma_r < 0.0 || self.sigma_theta < 0.0 || self.sigma_phi < 0.0 {
            return invalid("noise standard deviations must be nonnegative");
        }
        if self.phi.abs() > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return invalid(format!("elevation {} outside [-pi/2, pi/2]", self.phi));
        }
        Ok(())
    }

    /// Exact spherical-to-Cartesian map, no debiasing.
    pub fn to_cartesian(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(self.r * cp * ct, self.r * cp * st, self.r * sp)
    }

    /// Polar coordinates of a Cartesian offset.
    pub fn from_cartesian(v: &Vector3<f64>, sigma_r: f64, sigma_theta: f64, sigma_phi: f64) -> Self {
        let r = v.norm();
        let horiz = v.x.hypot(v.y);
        PolarMeasurement {
            r,
            theta: v.y.atan2(v.x),
            phi: v.z.atan2(horiz),
            sigma_r,
            sigma_theta,
            sigma_phi,
        }
    }
}

/// Cartesian position measurement with covariance and conditional bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvertedMeasurement {
    pub position: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub bias: Vector3<f64>,
}

impl ConvertedMeasurement {
    /// A measurement that is already Cartesian and unbiased.
    pub fn cartesian(position: Vector3<f64>, covariance: Matrix3<f64>) -> Self {
        ConvertedMeasurement {
            position,
            covariance,
            bias: Vector3::zeros(),
        }
    }

    /// Position with the conditional bias removed; this is what the filter
    /// consumes.
    pub fn debiased(&self) -> Vector3<f64> {
        self.position - self.bias
    }
}

/// Debiased polar-to-Cartesian conversion.
///
/// With `l_x = exp(-s_x^2 / 2)` and `l'_x = exp(-2 s_x^2)` the converted
/// position divides the nominal map by `l_theta * l_phi` (horizontal axes)
/// and `l_phi` (vertical axis), which makes it unbiased over the noise. The
/// covariance and bias are conditioned on the measured values.
pub fn unbiased_convert(m: &PolarMeasurement) -> ConvertedMeasurement {
    let lt = (-m.sigma_theta.powi(2) / 2.0).exp();
    let lp = (-m.sigma_phi.powi(2) / 2.0).exp();
    let lt2 = (-2.0 * m.sigma_theta.powi(2)).exp();
    let lp2 = (-2.0 * m.sigma_phi.powi(2)).exp();
    let (st, ct) = m.theta.sin_cos();
    let (sp, cp) = m.phi.sin_cos();
    let (s2t, c2t) = (2.0 * m.theta).sin_cos();
    let (s2p, c2p) = (2.0 * m.phi).sin_cos();
    let r = m.r;
    let r2 = r * r;
    let a = r2 + m.sigma_r.powi(2);

    let position = Vector3::new(r * cp * ct / (lt * lp), r * cp * st / (lt * lp), r * sp / lp);

    let horiz = 1.0 / (lt * lp) - lt * lp;
    let bias = Vector3::new(horiz * r * ct * cp, horiz * r * st * cp, (1.0 / lp - lp) * r * sp);

    let ll = lt * lt * lp * lp;
    let r11 = a * (1.0 + lt2 * c2t) * (1.0 + lp2 * c2p) / 4.0 - ll * r2 * ct * ct * cp * cp;
    let r12 = a * lt2 * s2t * (1.0 + lp2 * c2p) / 4.0 - ll * r2 * st * ct * cp * cp;
    let r13 = a * lt * lp2 * ct * s2p / 2.0 - lt * lp * lp * r2 * ct * sp * cp;
    let r22 = a * (1.0 - lt2 * c2t) * (1.0 + lp2 * c2p) / 4.0 - ll * r2 * st * st * cp * cp;
    let r23 = a * lt * lp2 * st * s2p / 2.0 - lt * lp * lp * r2 * st * sp * cp;
    let r33 = a * (1.0 - lp2 * c2p) / 2.0 - lp * lp * r2 * sp * sp;
    let covariance = Matrix3::new(r11, r12, r13, r12, r22, r23, r13, r23, r33);

    ConvertedMeasurement {
        position,
        covariance,
        bias,
    }
}

/// Constant-velocity model with white-acceleration process noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Step (s).
    pub dt: f64,
    /// Process noise spectral density (m^2/s^3).
    pub q: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel { dt: 0.1, q: 0.5 }
    }
}

impl MotionModel {
    pub fn new(dt: f64, q: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(q >= 0.0 && q.is_finite()) {
            return invalid(format!("motion model needs dt > 0 and q >= 0, got dt={dt}, q={q}"));
        }
        Ok(MotionModel { dt, q })
    }

    pub fn transition(&self) -> Matrix6<f64> {
        let mut f = Matrix6::identity();
        for k in 0..3 {
            f[(k, k + 3)] = self.dt;
        }
        f
    }

    pub fn observation() -> Matrix3x6 {
        let mut h = Matrix3x6::zeros();
        for k in 0..3 {
            h[(k, k)] = 1.0;
        }
        h
    }

    pub fn process_noise(&self) -> Matrix6<f64> {
        let (dt, q) = (self.dt, self.q);
        let (pp, pv, vv) = (q * dt.powi(3) / 3.0, q * dt.powi(2) / 2.0, q * dt);
        let mut m = Matrix6::zeros();
        for k in 0..3 {
            m[(k, k)] = pp;
            m[(k, k + 3)] = pv;
            m[(k + 3, k)] = pv;
            m[(k + 3, k + 3)] = vv;
        }
        m
    }
}

/// Kinematic estimate of one neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    /// `[p1, p2, p3, v1, v2, v3]` (m, m/s).
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub bound_did: Option<DigitalIdentity>,
    /// Last update epoch.
    pub epoch: u64,
    pub appearance: Option<FeatureVector>,
}

impl TrackState {
    pub fn new(x: Vector6<f64>, p: Matrix6<f64>) -> Self {
        TrackState {
            x,
            p,
            bound_did: None,
            epoch: 0,
            appearance: None,
        }
    }

    /// A track started from one position measurement with unknown velocity.
    pub fn from_measurement(z: &ConvertedMeasurement, velocity_var: f64, epoch: u64) -> Self {
        let pos = z.debiased();
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&pos);
        let mut p = Matrix6::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&z.covariance);
        for k in 3..6 {
            p[(k, k)] = velocity_var;
        }
        TrackState {
            epoch,
            ..TrackState::new(x, p)
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &Vector6<f64>) -> Result<f64> {
        let e = self.x - truth;
        let chol = self
            .p
            .cholesky()
            .ok_or_else(|| Error::Numerical("track covariance is not positive definite".into()))?;
        Ok(e.dot(&chol.solve(&e)))
    }
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Propagates the state one step through the motion model.
pub fn kf_predict(t: &TrackState, model: &MotionModel) -> TrackState {
    let f = model.transition();
    TrackState {
        x: f * t.x,
        p: symmetrize(&(f * t.p * f.transpose() + model.process_noise())),
        epoch: t.epoch + 1,
        ..t.clone()
    }
}

fn update_with<const M: usize>(
    t: &TrackState,
    h: &SMatrix<f64, M, 6>,
    z: &SMatrix<f64, M, 1>,
    r: &SMatrix<f64, M, M>,
) -> Result<TrackState> {
    let s = symmetrize(&(h * t.p * h.transpose() + r));
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    // K = P H^T S^-1, solved as S K^T = H P
    let gain = chol.solve(&(h * t.p)).transpose();
    let x = t.x + gain * (z - h * t.x);
    let i_kh = Matrix6::identity() - gain * h;
    let p = i_kh * t.p * i_kh.transpose() + gain * r * gain.transpose();
    Ok(TrackState {
        x,
        p: symmetrize(&p),
        ..t.clone()
    })
}

/// Kalman update with a converted position measurement; the conditional
/// bias is removed before the innovation is formed.
pub fn kf_update(t: &TrackState, z: &ConvertedMeasurement) -> Result<TrackState> {
    update_with(t, &MotionModel::observation(), &z.debiased(), &z.covariance)
}

/// Kalman update with a direct observation of the full state.
pub fn kf_update_state(t: &TrackState, z: &Vector6<f64>, r: &Matrix6<f64>) -> Result<TrackState> {
    update_with(t, &Matrix6::identity(), z, r)
}

/// Fuses one matched pair: visual measurement first, then auditory.
pub fn fuse_domains(
    t: &TrackState,
    vd: &ConvertedMeasurement,
    ad: &ConvertedMeasurement,
) -> Result<TrackState> {
    kf_update(&kf_update(t, vd)?, ad)
}

/// Attaches a digital identity; the latest matching epoch wins.
pub fn bind_identity(t: &TrackState, did: DigitalIdentity) -> TrackState {
    TrackState {
        bound_did: Some(did),
        ..t.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    fn polar(r: f64, theta: f64, phi: f64, sr: f64, st: f64, sp: f64) -> PolarMeasurement {
        PolarMeasurement::new(r, theta, phi, sr, st, sp).unwrap()
    }

    #[test]
    fn noiseless_conversion_is_exact() {
        let z = unbiased_convert(&polar(100.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(z.position, Vector3::new(100.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(z.bias, Vector3::zeros());
        assert_relative_eq!(z.covariance, Matrix3::zeros(), epsilon = 1e-9);

        let z = unbiased_convert(&polar(10.0, FRAC_PI_2, 0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(z.position, Vector3::new(0.0, 10.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn polar_validation() {
        assert!(PolarMeasurement::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(PolarMeasurement::new(1.0, 0.0, 2.0, 0.0, 0.0, 0.0).is_err());
        assert!(PolarMeasurement::new(1.0, 0.0, 0.0, -0.1, 0.0, 0.0).is_err());
        assert!(PolarMeasurement::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn polar_round_trip() {
        let v = Vector3::new(-30.0, 40.0, 12.0);
        let m = PolarMeasurement::from_cartesian(&v, 0.0, 0.0, 0.0);
        assert_relative_eq!(m.to_cartesian(), v, epsilon = 1e-9);
        let up = PolarMeasurement::from_cartesian(&Vector3::new(0.0, 0.0, 50.0), 0.0, 0.0, 0.0);
        assert_relative_eq!(up.phi, FRAC_PI_2);
    }

    #[test]
    fn vertical_axis_debiasing_ignores_azimuth_noise() {
        let a = unbiased_convert(&polar(100.0, 0.3, FRAC_PI_6, 1.0, 0.0, 0.1));
        let b = unbiased_convert(&polar(100.0, 0.3, FRAC_PI_6, 1.0, 0.3, 0.1));
        assert_relative_eq!(a.position.z, b.position.z, epsilon = 1e-12);
        assert_relative_eq!(a.bias.z, b.bias.z, epsilon = 1e-12);
    }

    #[test]
    fn covariance_is_symmetric() {
        let z = unbiased_convert(&polar(100.0, FRAC_PI_4, FRAC_PI_6, 1.0, 0.1, 0.1));
        assert_relative_eq!(z.covariance, z.covariance.transpose());
        // near theta = 0 the y axis is cross-range and dominated by azimuth noise
        let z = unbiased_convert(&polar(100.0, 0.2, 0.0, 1.0, 0.1, 0.1));
        assert!(z.covariance[(1, 1)] > 5.0 * z.covariance[(0, 0)]);
    }

    #[test]
    fn predict_examples() {
        let model = MotionModel::new(1.0, 0.0).unwrap();
        let t = TrackState::new(Vector6::new(0., 0., 0., 1., 0., 0.), Matrix6::identity());
        let p = kf_predict(&t, &model);
        assert_relative_eq!(p.position(), Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p.velocity(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.epoch, 1);
        let f = model.transition();
        assert_relative_eq!(p.p, f * f.transpose());
        assert_relative_eq!(p.p[(0, 0)], 2.0);

        let still = TrackState::new(Vector6::new(3., 4., 5., 0., 0., 0.), Matrix6::identity());
        let moved = kf_predict(&still, &MotionModel::new(7.5, 0.5).unwrap());
        assert_relative_eq!(moved.position(), still.position());
    }

    #[test]
    fn process_noise_is_psd() {
        let q = MotionModel::new(0.1, 0.5).unwrap().process_noise();
        assert!(q.symmetric_eigenvalues().iter().all(|e| *e >= -1e-15));
        assert!(MotionModel::new(0.0, 1.0).is_err());
        assert!(MotionModel::new(1.0, -1.0).is_err());
    }

    fn meas(pos: [f64; 3], var: f64) -> ConvertedMeasurement {
        ConvertedMeasurement::cartesian(Vector3::from(pos), Matrix3::identity() * var)
    }

    #[test]
    fn update_examples() {
        let prior = TrackState::new(Vector6::zeros(), Matrix6::identity());
        let exact = kf_update(&prior, &meas([4.0, -2.0, 1.0], 1e-12)).unwrap();
        assert_relative_eq!(exact.position(), Vector3::new(4.0, -2.0, 1.0), epsilon = 1e-9);

        let certain = TrackState::new(Vector6::new(1., 1., 1., 0., 0., 0.), Matrix6::zeros());
        let kept = kf_update(&certain, &meas([4.0, -2.0, 1.0], 1.0)).unwrap();
        assert_relative_eq!(kept.x, certain.x, epsilon = 1e-12);

        let half = kf_update(&prior, &meas([2.0, 0.0, 0.0], 1.0)).unwrap();
        assert_relative_eq!(half.x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(half.p[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn bias_is_removed_before_update() {
        let prior = TrackState::new(Vector6::zeros(), Matrix6::identity() * 1e6);
        let z = unbiased_convert(&polar(100.0, 0.4, 0.2, 1.0, 0.1, 0.1));
        let post = kf_update(&prior, &z).unwrap();
        assert_relative_eq!(post.position(), z.debiased(), epsilon = 1e-3);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let t = TrackState::new(Vector6::zeros(), Matrix6::zeros());
        let z = meas([1.0, 0.0, 0.0], 0.0);
        assert!(matches!(kf_update(&t, &z), Err(Error::Numerical(_))));
    }

    #[test]
    fn fusion_examples() {
        let prior = TrackState::new(Vector6::zeros(), Matrix6::identity() * 4.0);
        let z = meas([1.0, 2.0, 3.0], 2.0);
        let twice = fuse_domains(&prior, &z, &z).unwrap();
        let once = kf_update(&prior, &meas([1.0, 2.0, 3.0], 1.0)).unwrap();
        assert_relative_eq!(twice.x, once.x, epsilon = 1e-12);
        assert_relative_eq!(twice.p, once.p, epsilon = 1e-12);

        let vague = meas([50.0, 50.0, 50.0], 1e12);
        let fused = fuse_domains(&prior, &z, &vague).unwrap();
        let vd_only = kf_update(&prior, &z).unwrap();
        assert_relative_eq!(fused.x, vd_only.x, epsilon = 1e-6);
    }

    #[test]
    fn fusion_order_is_irrelevant() {
        let prior = TrackState::new(
            Vector6::new(10., 5., 2., 1., 0., -1.),
            Matrix6::identity() * 9.0,
        );
        let vd = unbiased_convert(&polar(12.0, 0.5, 0.1, 0.5, 0.02, 0.02));
        let ad = meas([10.5, 6.0, 1.0], 9.0);
        let a = fuse_domains(&prior, &vd, &ad).unwrap();
        let b = fuse_domains(&prior, &ad, &vd).unwrap();
        for k in 0..6 {
            assert!((a.x[k] - b.x[k]).abs() <= 1e-9 * a.x[k].abs().max(1.0));
        }
        assert!((a.p - b.p).norm() <= 1e-9 * a.p.norm());
    }

    #[test]
    fn full_state_update() {
        let prior = TrackState::new(Vector6::zeros(), Matrix6::identity());
        let z = Vector6::new(2., 2., 2., 4., 4., 4.);
        let post = kf_update_state(&prior, &z, &Matrix6::identity()).unwrap();
        assert_relative_eq!(post.x, z * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn binding_rules() {
        let t = TrackState::new(Vector6::zeros(), Matrix6::identity());
        let a = bind_identity(&t, DigitalIdentity(1));
        assert_eq!(a.bound_did, Some(DigitalIdentity(1)));
        assert_eq!(bind_identity(&a, DigitalIdentity(1)), a);
        assert_eq!(bind_identity(&a, DigitalIdentity(2)).bound_did, Some(DigitalIdentity(2)));
    }

    proptest! {
        #[test]
        fn noiseless_conversion_matches_spherical_map(
            r in 0.0..500.0f64, theta in -3.2..3.2f64, phi in -1.57..1.57f64
        ) {
            let m = polar(r, theta, phi, 0.0, 0.0, 0.0);
            let z = unbiased_convert(&m);
            prop_assert!((z.position - m.to_cartesian()).norm() < 1e-9 * r.max(1.0));
        }

        #[test]
        fn converted_covariance_is_psd(
            r in 5.0..500.0f64, theta in -3.2..3.2f64, phi in -1.5..1.5f64,
            st in 0.0..0.3f64, sp in 0.0..0.3f64, frac in 0.0..0.05f64,
        ) {
            let z = unbiased_convert(&polar(r, theta, phi, frac * r, st, sp));
            prop_assert_eq!(z.covariance, z.covariance.transpose());
            let scale = z.covariance.norm().max(1.0);
            for e in z.covariance.symmetric_eigenvalues().iter() {
                prop_assert!(*e >= -1e-9 * scale, "eigenvalue {}", e);
            }
        }

        #[test]
        fn predict_and_update_keep_covariance_psd(
            diag in prop::collection::vec(0.01..100.0f64, 6),
            z in prop::collection::vec(-100.0..100.0f64, 3),
            var in 0.01..50.0f64,
        ) {
            let p0 = Matrix6::from_diagonal(&Vector6::from_vec(diag));
            let t = TrackState::new(Vector6::zeros(), p0);
            let t = kf_predict(&t, &MotionModel::default());
            let t = kf_update(&t, &meas([z[0], z[1], z[2]], var)).unwrap();
            prop_assert_eq!(t.p, t.p.transpose());
            prop_assert!(t.p.symmetric_eigenvalues().iter().all(|e| *e >= -1e-9));
        }
    }
}
