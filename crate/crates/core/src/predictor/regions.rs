use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Rk4, VectorField};
use crate::error::{Error, Result};

/// Closed polygon in the plane (last vertex connects to the first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    /// Even-odd rule.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a[1] > p[1]) != (b[1] > p[1])
                && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0]
            {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// One period of the attracting limit cycle of an unforced planar field, traced after
/// a burn-in from `x0`. The period is detected from upward crossings of `x₂ = 0`.
pub fn limit_cycle(vf: &VectorField, x0: [f64; 2], burn_in: f64, dt: f64) -> Result<Polygon> {
    if vf.state_dim() != 2 {
        return Err(Error::Unsupported(
            "limit cycle tracing needs a planar system".into(),
        ));
    }
    let rk = Rk4::default();
    let u = vec![0.0; vf.input_dim()];
    let mut x = x0.to_vec();
    for _ in 0..(burn_in / dt).ceil() as usize {
        rk.step(vf, &mut x, &u, dt);
    }
    let mut crossings = 0;
    let mut verts = Vec::new();
    for _ in 0..(1e6 as usize) {
        let mut next = x.clone();
        rk.step(vf, &mut next, &u, dt);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("limit cycle trace".into()));
        }
        if x[1] < 0.0 && next[1] >= 0.0 {
            crossings += 1;
            if crossings == 2 {
                return if verts.len() >= 3 {
                    Ok(Polygon { vertices: verts })
                } else {
                    Err(Error::InvalidArgument(
                        "limit cycle period shorter than three samples".into(),
                    ))
                };
            }
        }
        if crossings == 1 {
            verts.push([next[0], next[1]]);
        }
        x = next;
    }
    Err(Error::InvalidArgument("no periodic orbit detected".into()))
}

/// Where test initial conditions are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestRegion {
    /// Uniform in a disk around the origin.
    Disk { radius: f64 },
    /// Uniform in a disk, keeping only points inside the polygon.
    DiskInPolygon { radius: f64, polygon: Polygon },
}

impl TestRegion {
    /// Interior of the Van der Pol limit cycle intersected with the disk of radius 0.25.
    pub fn vanderpol() -> Result<Self> {
        let lc = limit_cycle(&VectorField::vanderpol(), [0.1, 0.0], 30.0, 1e-3)?;
        Ok(TestRegion::DiskInPolygon {
            radius: 0.25,
            polygon: lc,
        })
    }

    pub fn unit_disk() -> Self {
        TestRegion::Disk { radius: 1.0 }
    }

    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> Vec<Vec<f64>> {
        let (radius, poly) = match self {
            TestRegion::Disk { radius } => (*radius, None),
            TestRegion::DiskInPolygon { radius, polygon } => (*radius, Some(polygon)),
        };
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p = [
                rng.random_range(-radius..=radius),
                rng.random_range(-radius..=radius),
            ];
            if p[0] * p[0] + p[1] * p[1] > radius * radius {
                continue;
            }
            if poly.is_some_and(|pl| !pl.contains(p)) {
                continue;
            }
            out.push(p.to_vec());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_membership() {
        let sq = Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        assert!(sq.contains([0.5, 0.5]));
        assert!(!sq.contains([1.5, 0.5]));
        assert!(!sq.contains([0.5, -0.1]));
    }

    #[test]
    fn vanderpol_cycle_encloses_origin() {
        let region = TestRegion::vanderpol().unwrap();
        let TestRegion::DiskInPolygon { polygon, .. } = &region else {
            panic!()
        };
        assert!(polygon.contains([0.0, 0.0]));
        assert!(!polygon.contains([3.0, 3.0]));
        // The orbit is closed: last vertex returns close to the first.
        let (a, b) = (polygon.vertices[0], *polygon.vertices.last().unwrap());
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = region.sample(&mut rng, 200);
        assert!(pts
            .iter()
            .all(|p| p[0].hypot(p[1]) <= 0.25 && polygon.contains([p[0], p[1]])));
    }

    #[test]
    fn unit_disk_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = TestRegion::unit_disk().sample(&mut rng, 500);
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| p[0].hypot(p[1]) <= 1.0));
        assert!(pts.iter().any(|p| p[0].hypot(p[1]) > 0.9));
    }
}
