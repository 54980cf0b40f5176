use rand::Rng;
use serde::{Deserialize, Serialize};
use spatiofd::{rng, Error, Result, SpatialDomain};

/// Spatial sampling design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `{1/p, 2/p, ..., 1}` on the unit interval.
    Grid1d,
    /// Tensor grid `{1/q, ..., 1}^2` with `q^2 = p`.
    Grid2d,
    /// `p` independent uniform points on the unit square.
    Poisson,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Grid1d => "grid1d",
            Scheme::Grid2d => "grid2d",
            Scheme::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid1d" => Ok(Scheme::Grid1d),
            "grid2d" => Ok(Scheme::Grid2d),
            "poisson" => Ok(Scheme::Poisson),
            other => Err(Error::Parameter(format!("unknown sampling scheme {other:?}"))),
        }
    }
}

pub fn sample_domain(scheme: Scheme, p: usize, seed: u64) -> Result<SpatialDomain> {
    if p == 0 {
        return Err(Error::Parameter("need at least one location".into()));
    }
    let coords = match scheme {
        Scheme::Grid1d => (1..=p).map(|k| vec![k as f64 / p as f64]).collect(),
        Scheme::Grid2d => {
            let q = (p as f64).sqrt().round() as usize;
            if q * q != p {
                return Err(Error::Parameter(format!("grid2d needs a square p, got {p}")));
            }
            let mut c = Vec::with_capacity(p);
            for a in 1..=q {
                for b in 1..=q {
                    c.push(vec![a as f64 / q as f64, b as f64 / q as f64]);
                }
            }
            c
        }
        Scheme::Poisson => {
            let mut g = rng::stream(seed, &[]);
            (0..p).map(|_| vec![g.random::<f64>(), g.random::<f64>()]).collect()
        }
    };
    SpatialDomain::with_default_ids(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let d = sample_domain(Scheme::Grid1d, 4, 0).unwrap();
        let xs: Vec<f64> = (0..4).map(|j| d.coord(j)[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75, 1.0]);

        let d = sample_domain(Scheme::Grid2d, 4, 0).unwrap();
        let pts: Vec<Vec<f64>> = (0..4).map(|j| d.coord(j).to_vec()).collect();
        for want in [[0.5, 0.5], [0.5, 1.0], [1.0, 0.5], [1.0, 1.0]] {
            assert!(pts.iter().any(|p| p == &want));
        }
        assert!(sample_domain(Scheme::Grid2d, 5, 0).is_err());
    }

    #[test]
    fn poisson_points_in_unit_square() {
        let d = sample_domain(Scheme::Poisson, 100, 17).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.dim(), 2);
        assert!((0..100).all(|j| d.coord(j).iter().all(|&v| (0.0..=1.0).contains(&v))));
        let again = sample_domain(Scheme::Poisson, 100, 17).unwrap();
        assert_eq!(d.coord(42), again.coord(42));
    }
}
