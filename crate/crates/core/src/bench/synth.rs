use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use crate::geom::Point;
use crate::model::{CaseRecord, RecordId, Status};

/// Longitude/latitude box the generator draws from, roughly mainland China.
pub const DEFAULT_EXTENT: ([f64; 2], [f64; 2]) = ([73.0, 18.0], [135.0, 54.0]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform,
    /// Gaussian blobs around `clusters` uniformly placed centers, with the
    /// given standard deviation in coordinate units.
    Clustered {
        clusters: usize,
        spread: f64,
    },
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "uniform" => Ok(Distribution::Uniform),
            "clustered" => Ok(Distribution::Clustered {
                clusters: 20,
                spread: 1.5,
            }),
            other => Err(format!("unknown distribution '{other}' (uniform|clustered)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub count: usize,
    pub seed: u64,
    pub dimension: usize,
    pub distribution: Distribution,
    /// Per-axis lower and upper bound; axes past the second reuse `[0, 100]`.
    pub extent: ([f64; 2], [f64; 2]),
}

impl SyntheticSpec {
    pub fn uniform(count: usize, seed: u64) -> Self {
        SyntheticSpec {
            count,
            seed,
            dimension: 2,
            distribution: Distribution::Uniform,
            extent: DEFAULT_EXTENT,
        }
    }

    fn bounds(&self, axis: usize) -> (f64, f64) {
        match axis {
            0 | 1 => (self.extent.0[axis], self.extent.1[axis]),
            _ => (0.0, 100.0),
        }
    }

    /// A uniformly random point inside the extent, for query centers.
    pub fn random_point(&self, rng: &mut impl Rng) -> Point {
        Point::new((0..self.dimension).map(|a| {
            let (lo, hi) = self.bounds(a);
            rng.gen_range(lo..=hi)
        }))
        .expect("finite coordinates")
    }

    /// Records with ids `0..count`; the same spec always yields the same data.
    pub fn generate(&self) -> Vec<CaseRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centers: Vec<Point> = match self.distribution {
            Distribution::Uniform => Vec::new(),
            Distribution::Clustered { clusters, .. } => {
                (0..clusters.max(1)).map(|_| self.random_point(&mut rng)).collect()
            }
        };
        (0..self.count)
            .map(|i| {
                let position = match self.distribution {
                    Distribution::Uniform => self.random_point(&mut rng),
                    Distribution::Clustered { spread, .. } => {
                        let c = &centers[rng.gen_range(0..centers.len())];
                        let noise = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).expect("valid spread");
                        Point::new(c.coords().iter().map(|&x| x + noise.sample(&mut rng))).expect("finite coordinates")
                    }
                };
                CaseRecord {
                    id: RecordId(i as u64),
                    position,
                    status: Status::ALL[rng.gen_range(0..Status::ALL.len())],
                    event_day: Some(rng.gen_range(0..120)),
                    attributes: Vec::new(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let spec = SyntheticSpec::uniform(500, 3);
        let a = spec.generate();
        assert_eq!(a, spec.generate());
        assert_ne!(a, SyntheticSpec::uniform(500, 4).generate());
        assert!(a
            .iter()
            .all(|r| (73.0..=135.0).contains(&r.position.coord(0)) && (18.0..=54.0).contains(&r.position.coord(1))));
        assert_eq!(a.last().unwrap().id, RecordId(499));

        let mut c = spec.clone();
        c.distribution = "clustered".parse().unwrap();
        c.dimension = 3;
        let b = c.generate();
        assert_eq!(b.len(), 500);
        assert!(b.iter().all(|r| r.position.dim() == 3));
    }
}
