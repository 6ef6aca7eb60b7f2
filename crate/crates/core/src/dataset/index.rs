use std::collections::HashMap;

use super::Dataset;

/// Grids are only built up to this many concatenated `(x, u)` dimensions;
/// above it every query is a linear scan.
pub const MAX_GRID_DIM: usize = 6;

type CellKey = [i64; MAX_GRID_DIM];

/// Radius queries over the concatenated `(x, u)` vectors of a dataset.
///
/// Uniform grid bucketing with a fixed cell edge (normally the neighbourhood
/// radius δ). Queries with a radius that would touch more cells than there
/// are samples fall back to a linear scan, so results always equal a
/// brute-force scan.
#[derive(Debug, Clone)]
pub struct NeighborIndex<'a> {
    data: &'a Dataset,
    dim: usize,
    points: Vec<f64>,
    cell: f64,
    origin: Vec<f64>,
    buckets: Option<HashMap<CellKey, Vec<usize>>>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(data: &'a Dataset, cell: f64) -> Self {
        let dim = data.n() + data.m();
        let mut points = Vec::with_capacity(data.len() * dim);
        for s in data.samples() {
            points.extend_from_slice(&s.x);
            points.extend_from_slice(&s.u);
        }
        let mut origin = vec![f64::INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for (o, v) in origin.iter_mut().zip(p) {
                *o = o.min(*v);
            }
        }
        let use_grid = dim <= MAX_GRID_DIM && cell.is_finite() && cell > 0.0 && !data.is_empty();
        let mut index = Self {
            data,
            dim,
            points,
            cell,
            origin,
            buckets: None,
        };
        if use_grid {
            let mut buckets: HashMap<CellKey, Vec<usize>> = HashMap::new();
            for i in 0..data.len() {
                let key = index.cell_of(index.point(i));
                buckets.entry(key).or_default().push(i);
            }
            index.buckets = Some(buckets);
        }
        index
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    /// Concatenated `(x, u)` of sample `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn cell_of(&self, z: &[f64]) -> CellKey {
        let mut key = [0i64; MAX_GRID_DIM];
        for (k, (v, o)) in key.iter_mut().zip(z.iter().zip(&self.origin)) {
            *k = ((v - o) / self.cell).floor() as i64;
        }
        key
    }

    /// Indices `j` with `‖(x, u) − (xⱼ, uⱼ)‖₂ ≤ delta`, ascending.
    pub fn neighbors(&self, x: &[f64], u: &[f64], delta: f64) -> Vec<usize> {
        let mut z = Vec::with_capacity(self.dim);
        z.extend_from_slice(x);
        z.extend_from_slice(u);
        self.neighbors_of_point(&z, delta)
    }

    /// Neighbours of sample `i` itself (including `i`).
    pub fn neighbors_of_sample(&self, i: usize, delta: f64) -> Vec<usize> {
        let z = self.point(i).to_vec();
        self.neighbors_of_point(&z, delta)
    }

    pub fn neighbors_of_point(&self, z: &[f64], delta: f64) -> Vec<usize> {
        debug_assert_eq!(z.len(), self.dim);
        if self.data.is_empty() || !(delta >= 0.0) {
            return Vec::new();
        }
        let r2 = delta * delta;
        let within = |j: usize| crate::linalg::dist_sq(z, self.point(j)) <= r2;

        let reach = (delta / self.cell).ceil();
        let cells = (2.0 * reach + 1.0).powi(self.dim as i32);
        let Some(buckets) = self
            .buckets
            .as_ref()
            .filter(|_| reach.is_finite() && cells <= self.data.len() as f64)
        else {
            return (0..self.data.len()).filter(|&j| within(j)).collect();
        };

        let reach = reach as i64;
        let center = self.cell_of(z);
        let mut out = Vec::new();
        let mut offset = [-reach; MAX_GRID_DIM];
        loop {
            let mut key = [0i64; MAX_GRID_DIM];
            for d in 0..self.dim {
                key[d] = center[d] + offset[d];
            }
            if let Some(bucket) = buckets.get(&key) {
                out.extend(bucket.iter().copied().filter(|&j| within(j)));
            }
            // odometer increment over the first `dim` coordinates
            let mut d = 0;
            loop {
                if d == self.dim {
                    out.sort_unstable();
                    return out;
                }
                offset[d] += 1;
                if offset[d] <= reach {
                    break;
                }
                offset[d] = -reach;
                d += 1;
            }
        }
    }
}
