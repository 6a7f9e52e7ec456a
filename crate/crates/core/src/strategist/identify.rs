//! Two-parameter least-squares identification of mass and friction from
//! pushing data, using the sliding model `F = m a + mu m g sign(v)`.

use serde::{Deserialize, Serialize};

use crate::sim::CONTACT_FORCE_FLOOR;
use crate::world_model::{ParamUpdate, WorldBelief, FRICTION_CLAMP, MASS_CLAMP};

/// Pushing samples required before identification is attempted.
pub const MIN_PUSH_SAMPLES: usize = 10;
/// Relative spread of accelerations below which mass is not identifiable.
const DEGENERATE_RATIO: f64 = 1e-3;

/// One simulation-step observation of an object sliding on the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdSample {
    /// Index into the belief's sorted object labels.
    pub object: usize,
    /// Horizontal finger force on the object (N).
    pub force: f64,
    /// Horizontal acceleration (m/s^2).
    pub accel: f64,
    /// Horizontal velocity (m/s).
    pub vel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub label: String,
    pub mass: f64,
    pub friction: f64,
    pub samples: usize,
    /// Root-mean-square force residual of the fit (N).
    pub residual: f64,
    /// Accelerations carried no information; mass was held.
    pub degenerate: bool,
}

impl Identification {
    pub fn update(&self) -> ParamUpdate {
        ParamUpdate {
            label: self.label.clone(),
            mass: Some(self.mass),
            friction: Some(self.friction),
        }
    }

    /// Largest relative change against the current belief.
    pub fn relative_change(&self, belief: &WorldBelief) -> f64 {
        belief.get(&self.label).map_or(0.0, |o| {
            ((self.mass - o.mass) / o.mass)
                .abs()
                .max(((self.friction - o.friction) / o.friction).abs())
        })
    }
}

/// Fit mass and friction for every object with enough pushing samples.
/// Returns the fits and a diagnostic for each object that was skipped.
pub fn identify_params(samples: &[IdSample], belief: &WorldBelief) -> (Vec<Identification>, Vec<String>) {
    let g = belief.fixtures.gravity;
    let mut fits = Vec::new();
    let mut notes = Vec::new();
    for (index, (label, obj)) in belief.objects.iter().enumerate() {
        let mine: Vec<&IdSample> = samples.iter().filter(|s| s.object == index && s.vel != 0.0).collect();
        let pushes = mine.iter().filter(|s| s.force.abs() >= CONTACT_FORCE_FLOOR).count();
        if pushes < MIN_PUSH_SAMPLES {
            if !mine.is_empty() || index == 0 {
                notes.push(format!(
                    "`{label}`: {pushes} pushing samples, need {MIN_PUSH_SAMPLES}; parameters unchanged"
                ));
            }
            continue;
        }
        // normal equations for F = m a + c s with s = g sign(v), c = mu m
        let (mut aa, mut as_, mut ss, mut fa, mut fs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &mine {
            let sg = g * s.vel.signum();
            aa += s.accel * s.accel;
            as_ += s.accel * sg;
            ss += sg * sg;
            fa += s.force * s.accel;
            fs += s.force * sg;
            amin = amin.min(s.accel);
            amax = amax.max(s.accel);
        }
        let n = mine.len() as f64;
        let det = aa * ss - as_ * as_;
        let spread = (amax - amin) / g;
        let (mass, c, degenerate) = if spread > DEGENERATE_RATIO && det > 1e-12 * aa * ss {
            let m = (fa * ss - fs * as_) / det;
            let c = (aa * fs - as_ * fa) / det;
            if m > 0.0 && c > 0.0 {
                (m, c, false)
            } else {
                (obj.mass, fs / ss, true)
            }
        } else {
            (obj.mass, fs / ss, true)
        };
        let mass = mass.clamp(MASS_CLAMP.0, MASS_CLAMP.1);
        let friction = (c / mass).clamp(FRICTION_CLAMP.0, FRICTION_CLAMP.1);
        let residual = (mine
            .iter()
            .map(|s| (s.force - mass * s.accel - friction * mass * g * s.vel.signum()).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        if degenerate {
            notes.push(format!(
                "`{label}`: accelerations carry no mass information; holding mass at {:.3} kg",
                obj.mass
            ));
        }
        fits.push(Identification {
            label: label.clone(),
            mass,
            friction,
            samples: mine.len(),
            residual,
            degenerate,
        });
    }
    (fits, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world_model::{Fixtures, ObjectBelief, Pose2, GRAVITY};

    fn belief(mass: f64) -> WorldBelief {
        WorldBelief::new(
            [ObjectBelief::new("board", Pose2::default(), mass, 0.9, [0.15, 0.01])],
            Fixtures::default(),
        )
    }

    #[test]
    fn exact_data_is_recovered() {
        let (m, mu) = (0.25, 0.5);
        let samples: Vec<_> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.37).sin() * 2.0;
                IdSample {
                    object: 0,
                    force: m * a + mu * m * GRAVITY,
                    accel: a,
                    vel: 0.05,
                }
            })
            .collect();
        let (fits, _) = identify_params(&samples, &belief(2.0));
        assert!((fits[0].mass - m).abs() < 1e-9);
        assert!((fits[0].friction - mu).abs() < 1e-9);
    }

    #[test]
    fn quasi_static_holds_mass() {
        let samples: Vec<_> = (0..20)
            .map(|_| IdSample {
                object: 0,
                force: 0.5 * 0.25 * GRAVITY,
                accel: 0.0,
                vel: 0.02,
            })
            .collect();
        let (fits, notes) = identify_params(&samples, &belief(2.0));
        assert!(fits[0].degenerate);
        assert_eq!(fits[0].mass, 2.0);
        assert!((fits[0].friction * fits[0].mass - 0.125).abs() < 1e-9);
        assert!(!notes.is_empty());
    }

    #[test]
    fn too_few_samples() {
        let s = [IdSample {
            object: 0,
            force: 1.0,
            accel: 0.0,
            vel: 0.1,
        }; 9];
        let (fits, notes) = identify_params(&s, &belief(2.0));
        assert!(fits.is_empty());
        assert!(notes[0].contains("need 10"));
    }
}
