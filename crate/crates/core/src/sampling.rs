//! Seeded probe points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::FieldExpr;
use crate::point::TangentPoint;

pub const DEFAULT_SEED: u64 = 42;

/// Draws base points uniformly from a ball and fibre vectors with uniformly
/// distributed direction and length.
#[derive(Clone, Debug)]
pub struct ProbeSampler {
    pub seed: u64,
    pub x_radius: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for ProbeSampler {
    fn default() -> Self {
        ProbeSampler {
            seed: DEFAULT_SEED,
            x_radius: 0.5,
            y_min: 0.5,
            y_max: 2.0,
        }
    }
}

impl ProbeSampler {
    pub fn with_radius(x_radius: f64) -> Self {
        ProbeSampler {
            x_radius,
            ..Default::default()
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `count` points of dimension `dim`; when a domain predicate is given,
    /// only points where it is positive are kept.
    pub fn sample(
        &self,
        dim: usize,
        count: usize,
        domain: Option<&FieldExpr>,
    ) -> Vec<TangentPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            assert!(
                attempts < 1000 * count.max(1),
                "could not find {count} probe points inside the domain"
            );
            let dir = unit_direction(&mut rng, dim);
            let u: f64 = rng.gen();
            let x = scaled(dir, self.x_radius * u.powf(1.0 / dim as f64));
            let dir = unit_direction(&mut rng, dim);
            let y = scaled(dir, rng.gen_range(self.y_min..=self.y_max));
            let Ok(p) = TangentPoint::new(x, y) else {
                continue;
            };
            if let Some(d) = domain {
                match d.eval(&p) {
                    Ok(v) if v > 0.0 => {}
                    _ => continue,
                }
            }
            out.push(p);
        }
        out
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn scaled(v: Vec<f64>, r: f64) -> Vec<f64> {
    v.into_iter().map(|a| a * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let s = ProbeSampler::with_radius(0.7);
        let a = s.sample(3, 10, None);
        let b = s.sample(3, 10, None);
        assert_eq!(a, b);
        for p in &a {
            let rx = p.x().iter().map(|v| v * v).sum::<f64>().sqrt();
            let ry = p.y().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rx <= 0.7 + 1e-12);
            assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&ry));
        }
        assert_ne!(a, s.clone().seed(7).sample(3, 10, None));
    }
}
