//! Incremental Bowyer–Watson Delaunay triangulation in the plane.

use robust::{incircle, orient2d, Coord};

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

#[inline]
fn c(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

/// Where a query point falls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    /// Triangle index and barycentric weights of its three vertices.
    Inside(usize, [f64; 3]),
    Outside,
}

/// Delaunay triangulation of a planar point set. Vertex indices refer to the input
/// points; exact duplicates are left out and reported by [`Triangulation::duplicate_of`].
#[derive(Debug, Clone)]
pub struct Triangulation {
    points: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    neighbors: Vec<[usize; 3]>,
    vertex_triangle: Vec<usize>,
    duplicate_of: Vec<usize>,
}

struct Builder {
    pts: Vec<[f64; 2]>,
    v: Vec<[usize; 3]>,
    n: Vec<[usize; 3]>,
    alive: Vec<bool>,
    free: Vec<usize>,
    mark: Vec<u32>,
    stamp: u32,
    last: usize,
    rng: u64,
}

impl Builder {
    fn next_rand(&mut self) -> usize {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        (self.rng % 3) as usize
    }

    fn locate(&mut self, p: [f64; 2]) -> usize {
        let mut t = self.last;
        loop {
            let start = self.next_rand();
            let mut moved = false;
            for e in 0..3 {
                let i = (start + e) % 3;
                let a = self.pts[self.v[t][(i + 1) % 3]];
                let b = self.pts[self.v[t][(i + 2) % 3]];
                if orient2d(c(a), c(b), c(p)) < 0.0 {
                    t = self.n[t][i];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return t;
            }
        }
    }

    fn in_circle(&self, t: usize, p: [f64; 2]) -> bool {
        let [a, b, d] = self.v[t];
        incircle(c(self.pts[a]), c(self.pts[b]), c(self.pts[d]), c(p)) > 0.0
    }

    /// Inserts vertex `pi`; returns the index of a coinciding vertex instead if there is one.
    fn insert(&mut self, pi: usize) -> Option<usize> {
        let p = self.pts[pi];
        let t0 = self.locate(p);
        if let Some(&dup) = self.v[t0].iter().find(|&&q| self.pts[q] == p) {
            return Some(dup);
        }
        self.stamp = self.stamp.wrapping_add(1);
        let stamp = self.stamp;
        let mut cavity = vec![t0];
        self.mark[t0] = stamp;
        // (a, b, outside triangle, its slot facing the cavity)
        let mut boundary: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for i in 0..3 {
                let nb = self.n[t][i];
                if nb != NONE && self.mark[nb] == stamp {
                    continue;
                }
                if nb != NONE && self.in_circle(nb, p) {
                    self.mark[nb] = stamp;
                    cavity.push(nb);
                    continue;
                }
                let slot = if nb == NONE {
                    0
                } else {
                    self.n[nb].iter().position(|&x| x == t).expect("adjacency")
                };
                boundary.push((self.v[t][(i + 1) % 3], self.v[t][(i + 2) % 3], nb, slot));
            }
        }
        for &t in &cavity {
            self.alive[t] = false;
            self.free.push(t);
        }
        let ids: Vec<usize> = boundary
            .iter()
            .map(|_| match self.free.pop() {
                Some(id) => id,
                None => {
                    self.v.push([0; 3]);
                    self.n.push([NONE; 3]);
                    self.alive.push(false);
                    self.mark.push(0);
                    self.v.len() - 1
                }
            })
            .collect();
        for (e, &(a, b, o, slot)) in boundary.iter().enumerate() {
            let id = ids[e];
            self.v[id] = [a, b, pi];
            self.alive[id] = true;
            self.n[id][2] = o;
            if o != NONE {
                self.n[o][slot] = id;
            }
        }
        for (e, &(a, b, _, _)) in boundary.iter().enumerate() {
            let id = ids[e];
            // Edge (b, p) borders the new triangle starting at b; edge (p, a) the one ending at a.
            self.n[id][0] = ids[boundary
                .iter()
                .position(|x| x.0 == b)
                .expect("closed cavity")];
            self.n[id][1] = ids[boundary
                .iter()
                .position(|x| x.1 == a)
                .expect("closed cavity")];
        }
        self.last = ids[0];
        None
    }
}

impl Triangulation {
    /// Triangulates the points. Fails with [`Error::Unsupported`] when they are all collinear.
    pub fn new(points: &[[f64; 2]]) -> Result<Self> {
        if points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::NonFinite("triangulation points".into()));
        }
        let np = points.len();
        if np < 3 {
            return Err(Error::Unsupported(format!(
                "need at least 3 points to triangulate, got {np}"
            )));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let r = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300) * 1e5;
        let mut pts = points.to_vec();
        pts.push([mid[0] - 2.0 * r, mid[1] - r]);
        pts.push([mid[0] + 2.0 * r, mid[1] - r]);
        pts.push([mid[0], mid[1] + 2.0 * r]);
        let mut b = Builder {
            pts,
            v: vec![[np, np + 1, np + 2]],
            n: vec![[NONE; 3]],
            alive: vec![true],
            free: Vec::new(),
            mark: vec![0],
            stamp: 0,
            last: 0,
            rng: 0x9E37_79B9_7F4A_7C15,
        };
        let mut duplicate_of = vec![NONE; np];
        for i in 0..np {
            if let Some(d) = b.insert(i) {
                duplicate_of[i] = d;
            }
        }
        let mut remap = vec![NONE; b.v.len()];
        let mut triangles = Vec::new();
        for t in 0..b.v.len() {
            if b.alive[t] && b.v[t].iter().all(|&q| q < np) {
                remap[t] = triangles.len();
                triangles.push(b.v[t]);
            }
        }
        if triangles.is_empty() {
            return Err(Error::Unsupported(
                "points are collinear; no triangle can be formed".into(),
            ));
        }
        let neighbors = (0..b.v.len())
            .filter(|&t| remap[t] != NONE)
            .map(|t| b.n[t].map(|x| if x == NONE { NONE } else { remap[x] }))
            .collect();
        let mut vertex_triangle = vec![NONE; np];
        for (t, tri) in triangles.iter().enumerate() {
            for &q in tri {
                vertex_triangle[q] = t;
            }
        }
        Ok(Triangulation {
            points: points.to_vec(),
            triangles,
            neighbors,
            vertex_triangle,
            duplicate_of,
        })
    }

    /// Rebuilds adjacency from stored triangles.
    pub fn from_parts(points: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let np = points.len();
        if triangles.iter().flatten().any(|&q| q >= np) {
            return Err(Error::Parse("triangle references a missing point".into()));
        }
        let mut edges = std::collections::HashMap::with_capacity(triangles.len() * 3);
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                edges.insert((tri[(i + 1) % 3], tri[(i + 2) % 3]), (t, i));
            }
        }
        let neighbors = triangles
            .iter()
            .map(|tri| {
                let mut nb = [NONE; 3];
                for (i, slot) in nb.iter_mut().enumerate() {
                    if let Some(&(t, _)) = edges.get(&(tri[(i + 2) % 3], tri[(i + 1) % 3])) {
                        *slot = t;
                    }
                }
                nb
            })
            .collect();
        let mut vertex_triangle = vec![NONE; np];
        for (t, tri) in triangles.iter().enumerate() {
            for &q in tri {
                vertex_triangle[q] = t;
            }
        }
        let mut duplicate_of = vec![NONE; np];
        let mut seen = std::collections::HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = (p[0].to_bits(), p[1].to_bits());
            match seen.get(&key) {
                Some(&first) if vertex_triangle[i] == NONE => duplicate_of[i] = first,
                Some(_) => {}
                None => {
                    seen.insert(key, i);
                }
            }
        }
        Ok(Triangulation {
            points,
            triangles,
            neighbors,
            vertex_triangle,
            duplicate_of,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn neighbors(&self, t: usize) -> [Option<usize>; 3] {
        self.neighbors[t].map(|x| (x != NONE).then_some(x))
    }

    /// Earlier input point identical to point `i`, if `i` was skipped as a duplicate.
    pub fn duplicate_of(&self, i: usize) -> Option<usize> {
        let d = self.duplicate_of[i];
        (d != NONE).then_some(d)
    }

    /// Some triangle having vertex `i`, or `None` for skipped duplicates.
    pub fn triangle_of(&self, i: usize) -> Option<usize> {
        let t = self.vertex_triangle[i];
        (t != NONE).then_some(t)
    }

    /// Locates `p` by walking from a triangle incident to vertex `start`.
    pub fn locate_from(&self, p: [f64; 2], start: usize) -> Location {
        let start = self.duplicate_of(start).unwrap_or(start);
        let Some(mut t) = self.triangle_of(start) else {
            return Location::Outside;
        };
        let mut rng: u32 = 0x2545_F491;
        for _ in 0..self.triangles.len() + 3 {
            rng ^= rng << 13;
            rng ^= rng >> 17;
            rng ^= rng << 5;
            let s = (rng % 3) as usize;
            let mut next = None;
            for e in 0..3 {
                let i = (s + e) % 3;
                let a = self.points[self.triangles[t][(i + 1) % 3]];
                let b = self.points[self.triangles[t][(i + 2) % 3]];
                if orient2d(c(a), c(b), c(p)) < 0.0 {
                    next = Some(self.neighbors[t][i]);
                    break;
                }
            }
            match next {
                None => return Location::Inside(t, self.barycentric(t, p)),
                Some(NONE) => return Location::Outside,
                Some(nt) => t = nt,
            }
        }
        Location::Outside
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, d] = self.triangles[t].map(|q| self.points[q]);
        let cross = |u: [f64; 2], v: [f64; 2], w: [f64; 2]| {
            (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
        };
        let area = cross(a, b, d);
        let wa = cross(p, b, d) / area;
        let wb = cross(a, p, d) / area;
        [wa, wb, 1.0 - wa - wb]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_delaunay(tr: &Triangulation) {
        let pts = tr.points();
        for (t, tri) in tr.triangles().iter().enumerate() {
            let [a, b, d] = tri.map(|q| pts[q]);
            assert!(orient2d(c(a), c(b), c(d)) > 0.0, "triangle {t} not ccw");
            for (q, p) in pts.iter().enumerate() {
                if tri.contains(&q) || tr.duplicate_of(q).is_some() {
                    continue;
                }
                assert!(
                    incircle(c(a), c(b), c(d), c(*p)) <= 0.0,
                    "point {q} inside circumcircle of {t}"
                );
            }
            for (i, nb) in tr.neighbors(t).iter().enumerate() {
                if let Some(nb) = nb {
                    let e = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                    let other = tr.triangles()[*nb];
                    assert!((0..3).any(|j| (other[(j + 1) % 3], other[(j + 2) % 3]) == (e.1, e.0)));
                }
            }
        }
    }

    #[test]
    fn random_points_are_delaunay() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<[f64; 2]> = (0..400)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let tr = Triangulation::new(&pts).unwrap();
        check_delaunay(&tr);
        // Euler: a triangulation of n points with h hull vertices has 2n - 2 - h triangles.
        let hull = (0..pts.len()).filter(|&q| {
            tr.triangles().iter().enumerate().any(|(t, tri)| {
                tri.contains(&q)
                    && tr
                        .neighbors(t)
                        .iter()
                        .enumerate()
                        .any(|(i, nb)| nb.is_none() && tri[i] != q)
            })
        });
        assert_eq!(tr.triangles().len(), 2 * pts.len() - 2 - hull.count());
    }

    #[test]
    fn grid_with_cocircular_points_and_duplicates() {
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..9 {
                pts.push([i as f64 * 0.1, j as f64 * 0.1]);
            }
        }
        pts.push(pts[3 * 9 + 4]);
        let tr = Triangulation::new(&pts).unwrap();
        check_delaunay(&tr);
        assert_eq!(tr.duplicate_of(pts.len() - 1), Some(3 * 9 + 4));
        assert_eq!(tr.triangles().len(), 2 * 11 * 8);
    }

    #[test]
    fn collinear_points_rejected() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(
            Triangulation::new(&pts),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn location_and_barycentric_weights() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let tr = Triangulation::new(&pts).unwrap();
        for start in 0..4 {
            match tr.locate_from([0.25, 0.25], start) {
                Location::Inside(t, w) => {
                    let tri = tr.triangles()[t];
                    let x: f64 = (0..3).map(|i| w[i] * pts[tri[i]][0]).sum();
                    let y: f64 = (0..3).map(|i| w[i] * pts[tri[i]][1]).sum();
                    assert!((x - 0.25).abs() < 1e-15 && (y - 0.25).abs() < 1e-15);
                    assert!(w.iter().all(|&v| v >= -1e-15));
                }
                Location::Outside => panic!("inside point reported outside"),
            }
            assert_eq!(tr.locate_from([2.0, 0.5], start), Location::Outside);
        }
    }

    #[test]
    fn rebuild_from_parts_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 2]> = (0..100)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let tr = Triangulation::new(&pts).unwrap();
        let re = Triangulation::from_parts(pts.clone(), tr.triangles().to_vec()).unwrap();
        for t in 0..tr.triangles().len() {
            assert_eq!(tr.neighbors(t), re.neighbors(t));
        }
        for _ in 0..50 {
            let q = [rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2)];
            assert_eq!(tr.locate_from(q, 0), re.locate_from(q, 0));
        }
    }

    #[test]
    fn trajectory_like_cloud() {
        // Spiral samples: dense along curves, sparse across them.
        let mut pts = Vec::new();
        for j in 0..20 {
            let th0 = j as f64 * 0.314;
            for k in 0..300 {
                let t = k as f64 * 0.01;
                let r = 0.05 + 0.3 * t;
                pts.push([r * (th0 + 4.0 * t).cos(), r * (th0 + 4.0 * t).sin()]);
            }
        }
        let tr = Triangulation::new(&pts).unwrap();
        assert!(tr.triangles().len() > pts.len());
        for (t, tri) in tr.triangles().iter().enumerate().step_by(97) {
            let [a, b, d] = tri.map(|q| pts[q]);
            for p in pts.iter().step_by(7) {
                assert!(incircle(c(a), c(b), c(d), c(*p)) <= 0.0, "triangle {t}");
            }
        }
    }
}
