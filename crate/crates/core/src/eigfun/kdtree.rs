use crate::error::{Error, Result};

/// Static k-d tree over points stored flat, for nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    /// Implicit balanced tree: node `mid` of range `lo..hi` splits on `axis[mid]`.
    order: Vec<usize>,
    axis: Vec<usize>,
}

impl KdTree {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::dims(
                "KdTree points",
                format!("multiple of {dim}"),
                points.len(),
            ));
        }
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            order: (0..n).collect(),
            axis: vec![0; n],
        };
        tree.build(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi <= lo + 1 {
            return;
        }
        let dim = self.dim;
        let mut best = (0, -1.0);
        for d in 0..dim {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let v = self.points[i * dim + d];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best.1 {
                best = (d, mx - mn);
            }
        }
        let ax = best.0;
        let mid = (lo + hi) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a * dim + ax]
                .total_cmp(&pts[b * dim + ax])
                .then(a.cmp(&b))
        });
        self.axis[mid] = ax;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Index of the point closest to `q` (lowest index on ties) and the squared distance.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), &mut best);
        Some(best)
    }

    fn search(&self, q: &[f64], lo: usize, hi: usize, best: &mut (usize, f64)) {
        if hi <= lo {
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let p = self.point(i);
        let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 || (d2 == best.1 && i < best.0) {
            *best = (i, d2);
        }
        let ax = self.axis[mid];
        let diff = q[ax] - p[ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}
