use dgh_core::{FeatureVolume, FrameRecord, Groom, HeadPose, MotionSequence, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Frame duration in seconds.
    pub dt: f64,
    pub substeps: usize,
    pub iterations: usize,
    pub gravity: [f64; 3],
    /// Fraction of velocity removed per substep.
    pub damping: f64,
    /// Stretch compliance (m/N); 0 is inextensible.
    pub compliance: f64,
    /// Points are kept at least this far outside the body (meters).
    pub collision_margin: f64,
    pub pin_roots: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            substeps: 4,
            iterations: 10,
            gravity: [0.0, 0.0, -9.8],
            damping: 0.02,
            compliance: 0.0,
            collision_margin: 0.005,
            pin_roots: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.substeps == 0 || self.iterations == 0 {
            return bad("substeps and iterations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return bad("damping must lie in [0, 1]");
        }
        if !(self.compliance >= 0.0) || !(self.collision_margin >= 0.0) {
            return bad("compliance and collision margin must be non-negative");
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return bad("gravity must be finite");
        }
        Ok(())
    }
}

fn interpolate(a: &HeadPose, b: &HeadPose, s: f64) -> HeadPose {
    if s >= 1.0 {
        return b.clone();
    }
    let q = a.rotation().slerp(b.rotation(), s);
    HeadPose::from_parts(q, a.translation().lerp(b.translation(), s))
}

fn push_out(sdf: &FeatureVolume, p: &mut Point3<f64>, margin: f64) {
    let d = dgh_core::sample_trilinear(sdf, p)[0];
    if d >= margin {
        return;
    }
    let g = sdf.gradient(0, p);
    let n = g.norm();
    if n > 1e-12 {
        *p += g * ((margin - d) / n);
    }
}

struct StrandState {
    pos: Vec<Point3<f64>>,
    vel: Vec<Vector3<f64>>,
}

struct Step<'a> {
    cfg: &'a SimConfig,
    rest: &'a [f64],
    root: Point3<f64>,
    from: &'a HeadPose,
    to: &'a HeadPose,
    body: Option<&'a FeatureVolume>,
}

impl Step<'_> {
    fn advance(&self, s: &mut StrandState) {
        let cfg = self.cfg;
        let h = cfg.dt / cfg.substeps as f64;
        let gravity = Vector3::from(cfg.gravity);
        let alpha = cfg.compliance / (h * h);
        let n = s.pos.len();
        let inv_mass = |i: usize| if i == 0 && cfg.pin_roots { 0.0 } else { 1.0 };
        let mut lambda = vec![0.0; n - 1];
        for sub in 1..=cfg.substeps {
            let prev = s.pos.clone();
            for i in 0..n {
                if inv_mass(i) > 0.0 {
                    s.vel[i] += gravity * h;
                    s.pos[i] += s.vel[i] * h;
                }
            }
            if cfg.pin_roots {
                let pose = interpolate(self.from, self.to, sub as f64 / cfg.substeps as f64);
                s.pos[0] = pose.apply(&self.root);
            }
            lambda.iter_mut().for_each(|l| *l = 0.0);
            for _ in 0..cfg.iterations {
                for j in 0..n - 1 {
                    let (wa, wb) = (inv_mass(j), inv_mass(j + 1));
                    let d = s.pos[j + 1] - s.pos[j];
                    let len = d.norm();
                    if len < 1e-12 || wa + wb + alpha == 0.0 {
                        continue;
                    }
                    let c = len - self.rest[j];
                    let dl = (-c - alpha * lambda[j]) / (wa + wb + alpha);
                    lambda[j] += dl;
                    let dir = d / len;
                    s.pos[j] -= dir * (wa * dl);
                    s.pos[j + 1] += dir * (wb * dl);
                }
                if let Some(body) = self.body {
                    for i in 0..n {
                        if inv_mass(i) > 0.0 {
                            push_out(body, &mut s.pos[i], cfg.collision_margin);
                        }
                    }
                }
            }
            if let Some(body) = self.body {
                for i in 0..n {
                    if inv_mass(i) > 0.0 {
                        push_out(body, &mut s.pos[i], cfg.collision_margin);
                    }
                }
            }
            let keep = (1.0 - cfg.damping) / h;
            for i in 0..n {
                s.vel[i] = (s.pos[i] - prev[i]) * keep;
            }
        }
    }
}

/// Simulates `groom_can` driven by `motion`.
///
/// Frame 0 is the canonical groom rigidly moved to the first pose, at rest.
/// `bodies` holds one signed body distance field per frame, or is empty for
/// no collisions. Rest lengths come from the canonical groom.
pub fn simulate_sequence(
    groom_can: &Groom,
    motion: &MotionSequence,
    bodies: &[FeatureVolume],
    cfg: &SimConfig,
) -> Result<Vec<FrameRecord>> {
    cfg.validate()?;
    if !bodies.is_empty() && bodies.len() != motion.len() {
        return Err(SimError::Config(format!(
            "{} body fields for {} frames",
            bodies.len(),
            motion.len()
        )));
    }
    let vps = groom_can.vertices_per_strand();
    let rest: Vec<Vec<f64>> = groom_can
        .strands()
        .map(|s| s.windows(2).map(|w| (w[1] - w[0]).norm()).collect())
        .collect();
    let roots: Vec<Point3<f64>> = groom_can.roots().copied().collect();
    let poses = motion.poses();
    let start = dgh_core::rigid_transform(groom_can, &poses[0]);
    let mut states: Vec<StrandState> = start
        .strands()
        .map(|s| StrandState {
            pos: s.to_vec(),
            vel: vec![Vector3::zeros(); vps],
        })
        .collect();
    let mut frames = Vec::with_capacity(motion.len());
    frames.push(FrameRecord::new(
        poses[0].clone(),
        start.clone(),
        vec![Vector3::zeros(); start.point_count()],
    )?);
    let mut last = start;
    for t in 1..motion.len() {
        let body = bodies.get(t);
        states.par_iter_mut().enumerate().for_each(|(k, state)| {
            Step {
                cfg,
                rest: &rest[k],
                root: roots[k],
                from: &poses[t - 1],
                to: &poses[t],
                body,
            }
            .advance(state);
        });
        let points: Vec<Point3<f64>> = states.iter().flat_map(|s| s.pos.iter().copied()).collect();
        if points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(SimError::BlowUp { frame: t });
        }
        let groom = last
            .with_points(points)
            .map_err(|_| SimError::BlowUp { frame: t })?;
        let flow = FrameRecord::flow_between(&last, &groom)?;
        frames.push(FrameRecord::new(poses[t].clone(), groom.clone(), flow)?);
        last = groom;
    }
    Ok(frames)
}
