//! Point-cloud containers, farthest point sampling, signed distances, and
//! the independent context/target/query sampling protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::numerics::{Scalar, Tensor};
use crate::Result;

/// Coordinates plus optional per-point features. `has_field` marks the
/// features as flow-field channels (as opposed to geometric attributes such
/// as the SDF); the encoders use it to enforce their input contracts.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    coords: Tensor<T>,
    features: Option<Tensor<T>>,
    has_field: bool,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(coords: Tensor<T>, features: Option<Tensor<T>>, has_field: bool) -> Result<Self> {
        if coords.rows() == 0 {
            return Err(Error::Argument("point cloud needs at least one point".into()));
        }
        if !coords.is_finite() {
            return Err(Error::Numeric("non-finite point coordinates".into()));
        }
        if let Some(f) = &features {
            if f.rows() != coords.rows() {
                return Err(Error::Shape(format!(
                    "{} feature rows for {} points",
                    f.rows(),
                    coords.rows()
                )));
            }
            if !f.is_finite() {
                return Err(Error::Numeric("non-finite point features".into()));
            }
        } else if has_field {
            return Err(Error::Argument("field cloud without feature values".into()));
        }
        Ok(Self {
            coords,
            features,
            has_field,
        })
    }

    pub fn from_coords(coords: Tensor<T>) -> Result<Self> {
        Self::new(coords, None, false)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn coords(&self) -> &Tensor<T> {
        &self.coords
    }

    pub fn features(&self) -> Option<&Tensor<T>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(0, Tensor::cols)
    }

    pub fn has_field(&self) -> bool {
        self.has_field
    }

    pub fn point(&self, i: usize) -> &[T] {
        self.coords.row(i)
    }

    /// Cloud restricted to `indices` (order preserved, repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let d = self.dim();
        let mut coords = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Argument(format!(
                    "point index {} out of {}",
                    i,
                    self.len()
                )));
            }
            coords.extend_from_slice(self.point(i));
        }
        let features = match &self.features {
            Some(f) => {
                let w = f.cols();
                let mut data = Vec::with_capacity(indices.len() * w);
                for &i in indices {
                    data.extend_from_slice(f.row(i));
                }
                Some(Tensor::new(indices.len(), w, data)?)
            }
            None => None,
        };
        Self::new(Tensor::new(indices.len(), d, coords)?, features, self.has_field)
    }

    fn sq_dist(&self, a: usize, b: usize) -> T {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .fold(T::zero(), |acc, v| acc + v)
    }
}

/// Context/target/query split of one case, sampled independently.
#[derive(Clone, Debug)]
pub struct SampleTriple<T> {
    pub context: PointCloud<T>,
    pub target: PointCloud<T>,
    pub query: PointCloud<T>,
    pub context_idx: Vec<usize>,
    pub target_idx: Vec<usize>,
    pub query_idx: Vec<usize>,
}

/// Farthest point sampling over pure coordinates. The first index comes from
/// the seeded RNG; every later pick maximizes the minimum distance to the
/// points already selected, ties broken by lowest index.
pub fn fps<T: Scalar>(cloud: &PointCloud<T>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = (0..cloud.len()).collect();
    fps_subset(cloud, &candidates, k, seed)
}

/// FPS restricted to a candidate index set.
pub fn fps_subset<T: Scalar>(
    cloud: &PointCloud<T>,
    candidates: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = candidates.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!(
            "fps requested {} of {} points",
            k, n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = candidates[rng.gen_range(0..n)];
    let mut selected = Vec::with_capacity(k);
    selected.push(start);
    // min squared distance from each candidate to the selected set
    let mut min_d: Vec<T> = candidates
        .iter()
        .map(|&i| cloud.sq_dist(i, start))
        .collect();
    while selected.len() < k {
        let mut best = T::neg_infinity();
        let mut best_pos = 0;
        for (pos, &d) in min_d.iter().enumerate() {
            if d > best {
                best = d;
                best_pos = pos;
            }
        }
        let chosen = candidates[best_pos];
        selected.push(chosen);
        for (pos, &i) in candidates.iter().enumerate() {
            let d = cloud.sq_dist(i, chosen);
            if d < min_d[pos] {
                min_d[pos] = d;
            }
        }
    }
    Ok(selected)
}

/// Signed distance from `point` to a closed 2-D contour: negative inside,
/// positive outside, zero on the boundary. Magnitude is the exact minimum
/// point-to-segment distance.
pub fn sdf<T: Scalar>(point: &[T], boundary: &PointCloud<T>) -> Result<T> {
    if boundary.dim() != 2 || point.len() != 2 {
        return Err(Error::Geometry("sdf requires 2-D points".into()));
    }
    let n = boundary.len();
    if n < 3 {
        return Err(Error::Geometry("contour needs at least 3 vertices".into()));
    }
    let perimeter: T = (0..n)
        .map(|i| {
            let a = boundary.point(i);
            let b = boundary.point((i + 1) % n);
            ((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])).sqrt()
        })
        .fold(T::zero(), |acc, v| acc + v);
    if perimeter <= T::zero() {
        return Err(Error::Geometry("degenerate contour".into()));
    }
    let (px, py) = (point[0], point[1]);
    let mut min_sq = T::infinity();
    let mut inside = false;
    for i in 0..n {
        let a = boundary.point(i);
        let b = boundary.point((i + 1) % n);
        // point-to-segment distance
        let (ax, ay, bx, by) = (a[0], a[1], b[0], b[1]);
        let (dx, dy) = (bx - ax, by - ay);
        let seg_sq = dx * dx + dy * dy;
        let t = if seg_sq > T::zero() {
            (((px - ax) * dx + (py - ay) * dy) / seg_sq)
                .max(T::zero())
                .min(T::one())
        } else {
            T::zero()
        };
        let (cx, cy) = (ax + t * dx, ay + t * dy);
        let d_sq = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        if d_sq < min_sq {
            min_sq = d_sq;
        }
        // even-odd ray crossing, ray toward +x
        if (ay > py) != (by > py) {
            let x_cross = ax + (py - ay) / (by - ay) * (bx - ax);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    let d = min_sq.sqrt();
    Ok(if inside { -d } else { d })
}

/// Augment a cloud's features with the SDF to `boundary` as an extra column.
pub fn with_sdf_feature<T: Scalar>(
    cloud: &PointCloud<T>,
    boundary: &PointCloud<T>,
) -> Result<PointCloud<T>> {
    let n = cloud.len();
    let old = cloud.features();
    let old_w = cloud.feature_dim();
    let mut data = Vec::with_capacity(n * (old_w + 1));
    for i in 0..n {
        if let Some(f) = old {
            data.extend_from_slice(f.row(i));
        }
        data.push(sdf(cloud.point(i), boundary)?);
    }
    PointCloud::new(
        cloud.coords().clone(),
        Some(Tensor::new(n, old_w + 1, data)?),
        cloud.has_field(),
    )
}

/// Draw the context set from the geometry cloud and the target and query
/// sets from the field cloud, each by an independently seeded FPS restart.
///
/// Target and query index sets are kept disjoint whenever the field cloud
/// has capacity; when geometry and field share the same coordinates, the
/// context set is additionally excluded from the field draws while capacity
/// permits.
pub fn sample_triple<T: Scalar>(
    source_geometry: &PointCloud<T>,
    source_field: &PointCloud<T>,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SampleTriple<T>> {
    let (n_c, n_t, n_q) = sizes;
    if n_c == 0 || n_t == 0 || n_q == 0 {
        return Err(Error::Argument("sample sizes must be at least 1".into()));
    }
    if n_c > source_geometry.len() {
        return Err(Error::Argument(format!(
            "context size {} exceeds {} geometry points",
            n_c,
            source_geometry.len()
        )));
    }
    if n_t + n_q > source_field.len() {
        return Err(Error::Argument(format!(
            "target+query size {} exceeds {} field points",
            n_t + n_q,
            source_field.len()
        )));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let (s_c, s_t, s_q) = (seeder.gen::<u64>(), seeder.gen::<u64>(), seeder.gen::<u64>());

    let context_idx = fps(source_geometry, n_c, s_c)?;

    // Target and query are independent FPS restarts; the sets are made
    // pairwise disjoint only when the cloud is large enough to allow it.
    let shared_source = source_geometry.coords() == source_field.coords();
    let nf = source_field.len();
    let disjoint = nf >= n_c + n_t + n_q;
    let mut excluded = vec![false; nf];
    if shared_source && disjoint {
        for &i in &context_idx {
            excluded[i] = true;
        }
    }
    let candidates: Vec<usize> = (0..nf).filter(|&i| !excluded[i]).collect();
    let target_idx = fps_subset(source_field, &candidates, n_t, s_t)?;
    if disjoint {
        for &i in &target_idx {
            excluded[i] = true;
        }
    }
    let candidates: Vec<usize> = (0..nf).filter(|&i| !excluded[i]).collect();
    let query_idx = fps_subset(source_field, &candidates, n_q, s_q)?;

    Ok(SampleTriple {
        context: source_geometry.subset(&context_idx)?,
        target: source_field.subset(&target_idx)?,
        query: source_field.subset(&query_idx)?,
        context_idx,
        target_idx,
        query_idx,
    })
}
