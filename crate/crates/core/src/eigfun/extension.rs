//! Extension of on-data eigenfunction values to the whole state space.

use serde::{Deserialize, Serialize};

use super::delaunay::{Location, Triangulation};
use super::kdtree::KdTree;
use crate::dynamics::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::numerics::{pinv_solve, CMat, C64};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    /// Piecewise-linear interpolation on a Delaunay triangulation (planar states only).
    TriangulatedLinear,
    /// Thin-plate-spline radial basis with an affine tail, ridge-regularized.
    RbfRidge,
    NearestNeighbor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtensionOptions {
    /// Defaults to triangulated-linear for planar states and rbf-ridge otherwise.
    pub kind: Option<ExtensionKind>,
    /// Sparsity weight; only 0 is supported.
    pub delta1: f64,
    /// Ridge weight on the radial-basis coefficients.
    pub delta2: f64,
    pub max_centers: usize,
}

impl Default for ExtensionOptions {
    fn default() -> Self {
        ExtensionOptions {
            kind: None,
            delta1: 0.0,
            delta2: 0.0,
            max_centers: 2000,
        }
    }
}

#[derive(Debug, Clone)]
enum Geometry {
    Triangulated {
        tri: Triangulation,
        tree: KdTree,
    },
    Rbf {
        centers: Vec<f64>,
        shift: Vec<f64>,
        scale: f64,
    },
    Nearest {
        tree: KdTree,
    },
}

/// A fitted extension for one or more value rows sharing the same sample points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "ExtensionDoc", try_from = "ExtensionDoc")]
pub struct ExtensionModel {
    kind: ExtensionKind,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    geometry: Geometry,
    /// One coefficient vector per row: node values, or radial weights followed by the tail.
    coef: Vec<Vec<C64>>,
}

#[derive(Serialize, Deserialize)]
struct ExtensionDoc {
    version: u32,
    kind: ExtensionKind,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Sample points (triangulated, nearest) or radial centers, flattened.
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triangles: Option<Vec<[usize; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    coefficients: Vec<Vec<C64>>,
}

impl From<ExtensionModel> for ExtensionDoc {
    fn from(m: ExtensionModel) -> Self {
        let (points, triangles, shift, scale) = match m.geometry {
            Geometry::Triangulated { tri, .. } => (
                tri.points().iter().flatten().copied().collect(),
                Some(tri.triangles().to_vec()),
                None,
                None,
            ),
            Geometry::Rbf {
                centers,
                shift,
                scale,
            } => (centers, None, Some(shift), Some(scale)),
            Geometry::Nearest { tree } => (
                (0..tree.len())
                    .flat_map(|i| tree.point(i).to_vec())
                    .collect(),
                None,
                None,
                None,
            ),
        };
        ExtensionDoc {
            version: FORMAT_VERSION,
            kind: m.kind,
            dim: m.dim,
            lo: m.lo,
            hi: m.hi,
            points,
            triangles,
            shift,
            scale,
            coefficients: m.coef,
        }
    }
}

impl TryFrom<ExtensionDoc> for ExtensionModel {
    type Error = Error;

    fn try_from(d: ExtensionDoc) -> Result<Self> {
        if d.version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported extension format version {}",
                d.version
            )));
        }
        if d.dim == 0 || !d.points.len().is_multiple_of(d.dim) {
            return Err(Error::Parse(
                "extension points do not match the state dimension".into(),
            ));
        }
        let np = d.points.len() / d.dim;
        let geometry = match d.kind {
            ExtensionKind::TriangulatedLinear => {
                let pts: Vec<[f64; 2]> = d.points.chunks(2).map(|p| [p[0], p[1]]).collect();
                let tri = Triangulation::from_parts(
                    pts,
                    d.triangles
                        .ok_or_else(|| Error::Parse("missing triangles".into()))?,
                )?;
                Geometry::Triangulated {
                    tri,
                    tree: KdTree::new(2, d.points)?,
                }
            }
            ExtensionKind::RbfRidge => Geometry::Rbf {
                centers: d.points,
                shift: d
                    .shift
                    .ok_or_else(|| Error::Parse("missing rbf shift".into()))?,
                scale: d
                    .scale
                    .ok_or_else(|| Error::Parse("missing rbf scale".into()))?,
            },
            ExtensionKind::NearestNeighbor => Geometry::Nearest {
                tree: KdTree::new(d.dim, d.points)?,
            },
        };
        let want = match d.kind {
            ExtensionKind::RbfRidge => np + d.dim + 1,
            _ => np,
        };
        if let Some(bad) = d.coefficients.iter().find(|c| c.len() != want) {
            return Err(Error::Parse(format!(
                "extension row has {} coefficients, expected {want}",
                bad.len()
            )));
        }
        Ok(ExtensionModel {
            kind: d.kind,
            dim: d.dim,
            lo: d.lo,
            hi: d.hi,
            geometry,
            coef: d.coefficients,
        })
    }
}

#[inline]
fn tps(r2: f64) -> f64 {
    if r2 > 0.0 {
        0.5 * r2 * r2.ln()
    } else {
        0.0
    }
}

/// Greedy farthest-point ordering of the first `count` points, starting at point 0.
/// Stops early once only exact duplicates remain.
fn farthest_points(points: &[f64], dim: usize, count: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let dist2 = |a: usize, b: usize| -> f64 {
        (0..dim)
            .map(|d| (points[a * dim + d] - points[b * dim + d]).powi(2))
            .sum()
    };
    let mut chosen = vec![0];
    let mut mind: Vec<f64> = (0..n).map(|i| dist2(0, i)).collect();
    while chosen.len() < count.min(n) {
        let (far, &d) = mind
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if d == 0.0 {
            break;
        }
        chosen.push(far);
        for (i, m) in mind.iter_mut().enumerate() {
            let d = dist2(far, i);
            if d < *m {
                *m = d;
            }
        }
    }
    chosen
}

impl ExtensionModel {
    /// Fits one extension per row of `rows` (each row has one value per point).
    /// `points` holds the sample points flattened, `dim` coordinates each.
    pub fn fit(
        dim: usize,
        points: &[f64],
        rows: &[Vec<C64>],
        opts: &ExtensionOptions,
    ) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) || points.is_empty() {
            return Err(Error::dims(
                "extension points",
                format!("non-empty multiple of {dim}"),
                points.len(),
            ));
        }
        if opts.delta1 != 0.0 {
            return Err(Error::Unsupported(
                "sparsity-regularized extension (delta1 != 0) is not available".into(),
            ));
        }
        if !(opts.delta2 >= 0.0) || !opts.delta2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "delta2 must be >= 0, got {}",
                opts.delta2
            )));
        }
        let np = points.len() / dim;
        if let Some(r) = rows.iter().find(|r| r.len() != np) {
            return Err(Error::dims("extension values", np, r.len()));
        }
        if points.iter().any(|v| !v.is_finite())
            || rows
                .iter()
                .flatten()
                .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("extension data".into()));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks(dim) {
            for d in 0..dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let kind = opts.kind.unwrap_or(if dim == 2 {
            ExtensionKind::TriangulatedLinear
        } else {
            ExtensionKind::RbfRidge
        });
        let base = ExtensionModel {
            kind,
            dim,
            lo,
            hi,
            geometry: Geometry::Nearest {
                tree: KdTree::new(dim, Vec::new())?,
            },
            coef: Vec::new(),
        };
        match kind {
            ExtensionKind::TriangulatedLinear => {
                if dim != 2 {
                    return Err(Error::Unsupported(format!(
                        "triangulated-linear extension needs a planar state, got dimension {dim}"
                    )));
                }
                let pts: Vec<[f64; 2]> = points.chunks(2).map(|p| [p[0], p[1]]).collect();
                match Triangulation::new(&pts) {
                    Ok(tri) => Ok(ExtensionModel {
                        geometry: Geometry::Triangulated {
                            tri,
                            tree: KdTree::new(2, points.to_vec())?,
                        },
                        coef: rows.to_vec(),
                        ..base
                    }),
                    Err(Error::Unsupported(msg)) => {
                        log::warn!("triangulation failed ({msg}); falling back to rbf-ridge");
                        Self::fit(
                            dim,
                            points,
                            rows,
                            &ExtensionOptions {
                                kind: Some(ExtensionKind::RbfRidge),
                                ..opts.clone()
                            },
                        )
                    }
                    Err(e) => Err(e),
                }
            }
            ExtensionKind::NearestNeighbor => Ok(ExtensionModel {
                geometry: Geometry::Nearest {
                    tree: KdTree::new(dim, points.to_vec())?,
                },
                coef: rows.to_vec(),
                ..base
            }),
            ExtensionKind::RbfRidge => Self::fit_rbf(base, points, rows, opts),
        }
    }

    fn fit_rbf(
        base: ExtensionModel,
        points: &[f64],
        rows: &[Vec<C64>],
        opts: &ExtensionOptions,
    ) -> Result<Self> {
        let dim = base.dim;
        let max_centers = opts.max_centers.max(1);
        let shift: Vec<f64> = base
            .lo
            .iter()
            .zip(&base.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let scale = base
            .lo
            .iter()
            .zip(&base.hi)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
            .max(1e-300);
        let norm = |p: &[f64]| -> Vec<f64> {
            p.iter().zip(&shift).map(|(x, s)| (x - s) / scale).collect()
        };
        // Fit on at most four points per center, taken in farthest-point order.
        let order = farthest_points(points, dim, 4 * max_centers);
        let k = order.len().min(max_centers);
        let centers: Vec<Vec<f64>> = order[..k]
            .iter()
            .map(|&i| norm(&points[i * dim..(i + 1) * dim]))
            .collect();
        let fit_idx: Vec<usize> = if points.len() / dim <= 4 * max_centers {
            (0..points.len() / dim).collect()
        } else {
            order
        };
        let ncol = k + dim + 1;
        let ridge = if opts.delta2 > 0.0 { k } else { 0 };
        let nrow = fit_idx.len() + dim + 1 + ridge;
        let mut a = CMat::zeros(nrow, ncol);
        for (r, &i) in fit_idx.iter().enumerate() {
            let x = norm(&points[i * dim..(i + 1) * dim]);
            for (cj, c) in centers.iter().enumerate() {
                a[(r, cj)] = C64::new(
                    tps(x.iter().zip(c).map(|(u, v)| (u - v) * (u - v)).sum()),
                    0.0,
                );
            }
            a[(r, k)] = C64::new(1.0, 0.0);
            for d in 0..dim {
                a[(r, k + 1 + d)] = C64::new(x[d], 0.0);
            }
        }
        // Side conditions: radial weights orthogonal to affine functions on the centers.
        let r0 = fit_idx.len();
        for (cj, c) in centers.iter().enumerate() {
            a[(r0, cj)] = C64::new(1.0, 0.0);
            for d in 0..dim {
                a[(r0 + 1 + d, cj)] = C64::new(c[d], 0.0);
            }
        }
        for cj in 0..ridge {
            a[(r0 + dim + 1 + cj, cj)] = C64::new(opts.delta2.sqrt(), 0.0);
        }
        let mut b = CMat::zeros(nrow, rows.len());
        for (r, &i) in fit_idx.iter().enumerate() {
            for (q, row) in rows.iter().enumerate() {
                b[(r, q)] = row[i];
            }
        }
        let x = pinv_solve(&a, &b)?;
        let coef = (0..rows.len()).map(|q| x.col(q)).collect();
        Ok(ExtensionModel {
            geometry: Geometry::Rbf {
                centers: centers.concat(),
                shift,
                scale,
            },
            coef,
            ..base
        })
    }

    pub fn kind(&self) -> ExtensionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.coef.len()
    }

    /// Bounding box of the fitting samples.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Whether `x` is inside the region where the extension interpolates rather than clamps.
    pub fn covers(&self, x: &[f64]) -> bool {
        match &self.geometry {
            Geometry::Triangulated { tri, tree } => {
                let q = [x[0], x[1]];
                let (near, _) = tree.nearest(&q).expect("non-empty tree");
                matches!(tri.locate_from(q, near), Location::Inside(..))
            }
            _ => x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| v >= a && v <= b),
        }
    }

    /// Evaluates every row at `x` into `out`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [C64]) {
        assert_eq!(x.len(), self.dim, "extension query dimension");
        assert_eq!(out.len(), self.coef.len(), "extension output length");
        match &self.geometry {
            Geometry::Triangulated { tri, tree } => {
                let q = [x[0], x[1]];
                let (near, _) = tree.nearest(&q).expect("non-empty tree");
                match tri.locate_from(q, near) {
                    Location::Inside(t, w) => {
                        let v = tri.triangles()[t];
                        for (o, c) in out.iter_mut().zip(&self.coef) {
                            *o = c[v[0]] * w[0] + c[v[1]] * w[1] + c[v[2]] * w[2];
                        }
                    }
                    Location::Outside => {
                        log::debug!(
                            "query {x:?} outside the triangulated region; using the nearest sample"
                        );
                        for (o, c) in out.iter_mut().zip(&self.coef) {
                            *o = c[near];
                        }
                    }
                }
            }
            Geometry::Nearest { tree } => {
                let (near, _) = tree.nearest(x).expect("non-empty tree");
                for (o, c) in out.iter_mut().zip(&self.coef) {
                    *o = c[near];
                }
            }
            Geometry::Rbf {
                centers,
                shift,
                scale,
            } => {
                let dim = self.dim;
                let xs: Vec<f64> = x.iter().zip(shift).map(|(v, s)| (v - s) / scale).collect();
                let k = centers.len() / dim;
                let phi: Vec<f64> = centers
                    .chunks(dim)
                    .map(|c| tps(c.iter().zip(&xs).map(|(u, v)| (u - v) * (u - v)).sum()))
                    .collect();
                for (o, c) in out.iter_mut().zip(&self.coef) {
                    let mut s = c[k];
                    for d in 0..dim {
                        s += c[k + 1 + d] * xs[d];
                    }
                    for (w, p) in c[..k].iter().zip(&phi) {
                        s += w * p;
                    }
                    *o = s;
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.coef.len()];
        self.evaluate_into(x, &mut out);
        out
    }
}

/// Fits the extension of a single value row defined on every sample of `ds`.
pub fn fit_extension(
    ds: &TrajectoryDataset,
    values: &[C64],
    kind: ExtensionKind,
    delta1: f64,
    delta2: f64,
) -> Result<ExtensionModel> {
    let points: Vec<f64> = ds.samples().flatten().copied().collect();
    let opts = ExtensionOptions {
        kind: Some(kind),
        delta1,
        delta2,
        ..Default::default()
    };
    ExtensionModel::fit(ds.state_dim(), &points, &[values.to_vec()], &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn row(points: &[f64], f: impl Fn(f64, f64) -> C64) -> Vec<C64> {
        points.chunks(2).map(|p| f(p[0], p[1])).collect()
    }

    const KINDS: [ExtensionKind; 3] = [
        ExtensionKind::TriangulatedLinear,
        ExtensionKind::RbfRidge,
        ExtensionKind::NearestNeighbor,
    ];

    #[test]
    fn constants_reproduced_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 150);
        let val = C64::new(0.7, -1.3);
        for kind in KINDS {
            for delta2 in [0.0, 1e-3] {
                let opts = ExtensionOptions {
                    kind: Some(kind),
                    delta2,
                    max_centers: 60,
                    ..Default::default()
                };
                let m = ExtensionModel::fit(2, &pts, &[vec![val; 150]], &opts).unwrap();
                for _ in 0..30 {
                    let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                    assert!((m.evaluate(&q)[0] - val).norm() < 1e-9, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn interpolates_at_data_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = cloud(&mut rng, 120);
        let vals = row(&pts, |x, y| C64::new((3.0 * x).sin() * y, x * x - y));
        for kind in KINDS {
            let opts = ExtensionOptions {
                kind: Some(kind),
                ..Default::default()
            };
            let m = ExtensionModel::fit(2, &pts, std::slice::from_ref(&vals), &opts).unwrap();
            for (p, v) in pts.chunks(2).zip(&vals) {
                assert!(
                    (m.evaluate(p)[0] - v).norm() <= 1e-8 * v.norm().max(1.0),
                    "{kind:?}"
                );
            }
        }
    }

    #[test]
    fn affine_fields_exact_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = cloud(&mut rng, 200);
        let f = |x: f64, y: f64| C64::new(2.0 * x - y + 0.5, -x);
        let m =
            ExtensionModel::fit(2, &pts, &[row(&pts, f)], &ExtensionOptions::default()).unwrap();
        let rbf = ExtensionModel::fit(
            2,
            &pts,
            &[row(&pts, f)],
            &ExtensionOptions {
                kind: Some(ExtensionKind::RbfRidge),
                max_centers: 50,
                ..Default::default()
            },
        )
        .unwrap();
        for _ in 0..50 {
            let q = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            assert!((m.evaluate(&q)[0] - f(q[0], q[1])).norm() < 1e-12);
            assert!((rbf.evaluate(&q)[0] - f(q[0], q[1])).norm() < 1e-8);
        }
    }

    #[test]
    fn smooth_field_on_trajectory_cloud() {
        // Spiral "trajectories"; held-out points are midpoints between consecutive samples.
        let mut pts = Vec::new();
        let mut mids = Vec::new();
        for j in 0..40 {
            let th0 = j as f64 * std::f64::consts::TAU / 40.0;
            let at = |t: f64| {
                let r = 0.05 + 0.25 * t;
                [r * (th0 + 3.0 * t).cos(), r * (th0 + 3.0 * t).sin()]
            };
            for k in 0..=300 {
                pts.extend(at(k as f64 * 0.01));
                if k < 300 && k % 10 == 5 {
                    mids.push(at((k as f64 + 0.5) * 0.01));
                }
            }
        }
        let field = |x: f64, y: f64| x.sin() * y;
        let vals = row(&pts, |x, y| C64::new(field(x, y), 0.0));
        let range = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        for kind in [ExtensionKind::TriangulatedLinear, ExtensionKind::RbfRidge] {
            let opts = ExtensionOptions {
                kind: Some(kind),
                max_centers: 300,
                ..Default::default()
            };
            let m = ExtensionModel::fit(2, &pts, std::slice::from_ref(&vals), &opts).unwrap();
            let err: f64 = mids
                .iter()
                .map(|p| (m.evaluate(p)[0].re - field(p[0], p[1])).abs())
                .sum::<f64>()
                / mids.len() as f64;
            assert!(
                err < 0.05 * range,
                "{kind:?}: mean error {err}, range {range}"
            );
        }
    }

    #[test]
    fn outside_hull_uses_nearest_sample() {
        let pts = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let vals = vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        let m = ExtensionModel::fit(2, &pts, &[vals], &ExtensionOptions::default()).unwrap();
        assert_eq!(m.evaluate(&[5.0, 0.1])[0], C64::new(2.0, 0.0));
        assert!(!m.covers(&[5.0, 0.1]));
        assert!(m.covers(&[0.2, 0.2]));
    }

    #[test]
    fn collinear_points_fall_back_to_rbf() {
        let pts: Vec<f64> = (0..20)
            .flat_map(|i| [i as f64 * 0.1, i as f64 * 0.2])
            .collect();
        let vals = vec![C64::new(1.0, 0.0); 20];
        let m = ExtensionModel::fit(2, &pts, &[vals], &ExtensionOptions::default()).unwrap();
        assert_eq!(m.kind(), ExtensionKind::RbfRidge);
    }

    #[test]
    fn rejects_unsupported_settings() {
        let pts = vec![0.0; 9];
        let vals = vec![C64::new(0.0, 0.0); 3];
        let tri = ExtensionOptions {
            kind: Some(ExtensionKind::TriangulatedLinear),
            ..Default::default()
        };
        assert!(matches!(
            ExtensionModel::fit(3, &pts, std::slice::from_ref(&vals), &tri),
            Err(Error::Unsupported(_))
        ));
        let l1 = ExtensionOptions {
            delta1: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            ExtensionModel::fit(3, &pts, &[vals], &l1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rbf_in_three_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..3 * 200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vals: Vec<C64> = pts
            .chunks(3)
            .map(|p| C64::new(p[0] * p[1] + p[2], 0.0))
            .collect();
        let m = ExtensionModel::fit(3, &pts, &[vals], &ExtensionOptions::default()).unwrap();
        assert_eq!(m.kind(), ExtensionKind::RbfRidge);
        let q = [0.1, -0.2, 0.3];
        assert!((m.evaluate(&q)[0].re - (0.1 * -0.2 + 0.3)).abs() < 0.05);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = cloud(&mut rng, 80);
        let vals = row(&pts, |x, y| C64::new(x * y, x.exp()));
        for kind in KINDS {
            let opts = ExtensionOptions {
                kind: Some(kind),
                max_centers: 30,
                delta2: 1e-6,
                ..Default::default()
            };
            let m = ExtensionModel::fit(2, &pts, &[vals.clone(), vals.clone()], &opts).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: ExtensionModel = serde_json::from_str(&json).unwrap();
            for _ in 0..20 {
                let q = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                assert_eq!(m.evaluate(&q), back.evaluate(&q));
            }
        }
    }
}
