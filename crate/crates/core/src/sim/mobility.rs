use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::identity::{DigitalIdentity, FeatureVector};

/// Axis-aligned box `[0, size]` together with the leg speed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub size: Vector3<f64>,
    pub v_min: f64,
    pub v_max: f64,
}

impl Arena {
    pub fn new(size: [f64; 3], v_min: f64, v_max: f64) -> Self {
        Arena {
            size: Vector3::from(size),
            v_min,
            v_max,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= 0.0 && p[k] <= self.size[k])
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|k, _| p[k].clamp(0.0, self.size[k]))
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::from_fn(|k, _| rng.random::<f64>() * self.size[k])
    }

    pub fn sample_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.v_max > self.v_min {
            rng.random_range(self.v_min..=self.v_max)
        } else {
            self.v_min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Motion {
    /// Random waypoint leg.
    Waypoint { target: Vector3<f64>, speed: f64 },
    /// Fixed velocity, stopped at the arena walls.
    Constant(Vector3<f64>),
}

/// Ground truth of one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavNode {
    pub did: DigitalIdentity,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub motion: Motion,
    pub appearance_truth: FeatureVector,
}

impl UavNode {
    /// A node at `position` with a fresh waypoint leg.
    pub fn new_waypoint<R: Rng + ?Sized>(
        did: DigitalIdentity,
        position: Vector3<f64>,
        arena: &Arena,
        rng: &mut R,
    ) -> Self {
        let mut node = UavNode {
            did,
            position,
            velocity: Vector3::zeros(),
            motion: Motion::Constant(Vector3::zeros()),
            appearance_truth: random_appearance(rng),
        };
        node.redraw_leg(arena, rng);
        node
    }

    pub fn new_constant<R: Rng + ?Sized>(
        did: DigitalIdentity,
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        rng: &mut R,
    ) -> Self {
        UavNode {
            did,
            position,
            velocity,
            motion: Motion::Constant(velocity),
            appearance_truth: random_appearance(rng),
        }
    }

    pub fn speed(&self) -> f64 {
        match self.motion {
            Motion::Waypoint { speed, .. } => speed,
            Motion::Constant(v) => v.norm(),
        }
    }

    pub fn redraw_leg<R: Rng + ?Sized>(&mut self, arena: &Arena, rng: &mut R) {
        let target = arena.sample_point(rng);
        let speed = arena.sample_speed(rng);
        self.motion = Motion::Waypoint { target, speed };
        self.velocity = heading(&(target - self.position)) * speed;
    }
}

fn heading(v: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        Vector3::zeros()
    }
}

/// Synthetic appearance: three entries uniform in `[0, 1]`.
pub fn random_appearance<R: Rng + ?Sized>(rng: &mut R) -> FeatureVector {
    let mut v: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    FeatureVector::new(v).expect("three finite entries")
}

/// Advances one node by `dt`. Waypoint legs that would be reached within the
/// step end exactly on the waypoint and a new leg starts with zero pause.
pub fn step_mobility<R: Rng + ?Sized>(node: &mut UavNode, dt: f64, arena: &Arena, rng: &mut R) {
    match node.motion {
        Motion::Waypoint { target, speed } => {
            let to = target - node.position;
            let dist = to.norm();
            if dist <= speed * dt {
                node.position = arena.clamp(&target);
                node.redraw_leg(arena, rng);
            } else {
                let dir = to / dist;
                node.position = arena.clamp(&(node.position + dir * speed * dt));
                node.velocity = dir * speed;
            }
        }
        Motion::Constant(v) => {
            let next = node.position + v * dt;
            if arena.contains(&next) {
                node.position = next;
                node.velocity = v;
            } else {
                node.position = arena.clamp(&next);
                node.velocity = Vector3::zeros();
                node.motion = Motion::Constant(Vector3::zeros());
            }
        }
    }
}
