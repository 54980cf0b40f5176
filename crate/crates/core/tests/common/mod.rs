#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use spatiofd::{rng, SpatialDomain, SpatialFunctionalDataset, TimeGrid};

/// Two-component model on a regular line: scores with exponential spatial
/// correlation, optional time-constant shift `delta * bump(s)` after `tau`.
pub struct Toy {
    pub n: usize,
    pub p: usize,
    pub t: usize,
    pub range: f64,
    pub delta: f64,
    pub tau: usize,
    pub seed: u64,
}

impl Default for Toy {
    fn default() -> Self {
        Self {
            n: 60,
            p: 12,
            t: 40,
            range: 0.1,
            delta: 0.0,
            tau: 30,
            seed: 1,
        }
    }
}

pub fn psi(r: usize, t: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    match r {
        0 => s2 * (std::f64::consts::PI * t).cos(),
        _ => s2 * (std::f64::consts::PI * t).sin(),
    }
}

pub fn bump(x: f64) -> f64 {
    (-(x - 0.5).powi(2) / (2.0 * 0.2 * 0.2)).exp()
}

impl Toy {
    pub fn domain(&self) -> SpatialDomain {
        SpatialDomain::with_default_ids((1..=self.p).map(|k| vec![k as f64 / self.p as f64]).collect()).unwrap()
    }

    pub fn build(&self) -> SpatialFunctionalDataset {
        let domain = self.domain();
        let grid = TimeGrid::uniform(self.t).unwrap();
        let cov = DMatrix::from_fn(self.p, self.p, |a, b| {
            (-domain.distance(a, b) / self.range).exp() + if a == b { 1e-10 } else { 0.0 }
        });
        let l = cov.cholesky().unwrap().l();
        let omega = [3.0f64, 1.0];
        let mut g = rng::stream(self.seed, &[]);
        let mut values = vec![0.0; self.n * self.p * self.t];
        for i in 0..self.n {
            let mut xi = Vec::new();
            for w in omega {
                let z = DMatrix::from_fn(self.p, 1, |_, _| g.sample::<f64, _>(StandardNormal));
                xi.push((&l * z) * w.sqrt());
            }
            for j in 0..self.p {
                let shift = if i >= self.tau { self.delta * bump(domain.coord(j)[0]) } else { 0.0 };
                for m in 0..self.t {
                    let tt = grid.points()[m];
                    values[(i * self.p + j) * self.t + m] =
                        shift + xi[0][j] * psi(0, tt) + xi[1][j] * psi(1, tt);
                }
            }
        }
        SpatialFunctionalDataset::new(values, self.n, grid, domain).unwrap()
    }
}
