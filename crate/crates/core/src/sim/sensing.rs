use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mobility::UavNode;
use super::radio::gaussian;
use crate::fusion::PolarMeasurement;
use crate::identity::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualNoise {
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub sigma_appearance: f64,
}

impl VisualNoise {
    pub const NONE: VisualNoise = VisualNoise {
        sigma_r: 0.0,
        sigma_theta: 0.0,
        sigma_phi: 0.0,
        sigma_appearance: 0.0,
    };
}

/// One detection of a neighbor by the visual sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualDetection {
    pub polar: PolarMeasurement,
    pub appearance: FeatureVector,
}

/// Senses `target` from `observer` with full angular coverage. The relative
/// vector is expressed in a frame centred on the observer with world axes.
pub fn sense_visual<R: Rng + ?Sized>(
    observer: &UavNode,
    target: &UavNode,
    noise: &VisualNoise,
    sense_range: f64,
    rng: &mut R,
) -> Option<VisualDetection> {
    let rel = target.position - observer.position;
    if rel.norm() > sense_range {
        return None;
    }
    let truth = PolarMeasurement::from_cartesian(&rel, noise.sigma_r, noise.sigma_theta, noise.sigma_phi);
    let polar = PolarMeasurement {
        r: (truth.r + gaussian(rng, noise.sigma_r)).max(0.0),
        theta: truth.theta + gaussian(rng, noise.sigma_theta),
        phi: (truth.phi + gaussian(rng, noise.sigma_phi)).clamp(-FRAC_PI_2, FRAC_PI_2),
        ..truth
    };
    let values = target
        .appearance_truth
        .values()
        .iter()
        .map(|v| v + gaussian(rng, noise.sigma_appearance))
        .collect();
    let appearance = FeatureVector::new(values).expect("finite appearance");
    Some(VisualDetection { polar, appearance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::DigitalIdentity;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(rel: Vector3<f64>) -> (UavNode, UavNode) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = Vector3::new(200.0, 200.0, 50.0);
        let a = UavNode::new_constant(DigitalIdentity(1), base, Vector3::zeros(), &mut rng);
        let b = UavNode::new_constant(DigitalIdentity(2), base + rel, Vector3::zeros(), &mut rng);
        (a, b)
    }

    #[test]
    fn noiseless_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = pair(Vector3::new(100.0, 0.0, 0.0));
        let d = sense_visual(&a, &b, &VisualNoise::NONE, 150.0, &mut rng).unwrap();
        assert_eq!((d.polar.r, d.polar.theta, d.polar.phi), (100.0, 0.0, 0.0));
        assert_eq!(d.appearance, b.appearance_truth);

        let (a, b) = pair(Vector3::new(0.0, 0.0, 50.0));
        let d = sense_visual(&a, &b, &VisualNoise::NONE, 150.0, &mut rng).unwrap();
        assert!((d.polar.phi - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_unseen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = pair(Vector3::new(151.0, 0.0, 0.0));
        assert!(sense_visual(&a, &b, &VisualNoise::NONE, 150.0, &mut rng).is_none());
    }

    #[test]
    fn residuals_match_configured_sigma() {
        let noise = VisualNoise {
            sigma_r: 0.5,
            sigma_theta: 0.02,
            sigma_phi: 0.02,
            sigma_appearance: 0.05,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = pair(Vector3::new(60.0, 40.0, 20.0));
        let truth = PolarMeasurement::from_cartesian(&(b.position - a.position), 0.0, 0.0, 0.0);
        let n = 100_000;
        let mut ss = [0.0; 4];
        for _ in 0..n {
            let d = sense_visual(&a, &b, &noise, 150.0, &mut rng).unwrap();
            ss[0] += (d.polar.r - truth.r).powi(2);
            ss[1] += (d.polar.theta - truth.theta).powi(2);
            ss[2] += (d.polar.phi - truth.phi).powi(2);
            ss[3] += (d.appearance.values()[0] - b.appearance_truth.values()[0]).powi(2);
        }
        let expected = [0.5, 0.02, 0.02, 0.05];
        for k in 0..4 {
            let sd = (ss[k] / n as f64).sqrt();
            assert!((sd / expected[k] - 1.0).abs() < 0.02, "component {k}: {sd}");
        }
    }
}
