//! Static 3-d tree for nearest-neighbour and radius queries.

use crate::geometry::Vec3;

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    // implicit balanced layout: `order[lo..hi]` is a subtree whose split point
    // sits at the midpoint, split axis = depth % 3
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Vec3 {
        &self.points[index]
    }

    /// Index of the nearest stored point and its squared distance.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(q, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, q: &Vec3, lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (first, second) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(q, first.0, first.1, depth + 1, best);
        if diff * diff <= best.1 {
            self.nearest_rec(q, second.0, second.1, depth + 1, best);
        }
    }

    /// True if any stored point is strictly closer than `radius`.
    pub fn any_within(&self, q: &Vec3, radius: f64) -> bool {
        self.any_rec(q, radius * radius, 0, self.order.len(), 0)
    }

    fn any_rec(&self, q: &Vec3, r2: f64, lo: usize, hi: usize, depth: usize) -> bool {
        if lo >= hi {
            return false;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[self.order[mid]];
        if (p - q).norm_squared() < r2 {
            return true;
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        if self.any_rec(q, r2, near.0, near.1, depth + 1) {
            return true;
        }
        diff * diff < r2 && self.any_rec(q, r2, far.0, far.1, depth + 1)
    }

    /// Indices of all points within `radius` (inclusive), unordered.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_rec(q, radius * radius, 0, self.order.len(), 0, &mut out);
        out
    }

    fn within_rec(&self, q: &Vec3, r2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        if (p - q).norm_squared() <= r2 {
            out.push(idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        if diff < 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, lo, mid, depth + 1, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, mid + 1, hi, depth + 1, out);
        }
    }

    /// Squared distances of the `k` nearest points, ascending.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(q, k, 0, self.order.len(), 0, &mut heap);
        }
        heap
    }

    fn knn_rec(&self, q: &Vec3, k: usize, lo: usize, hi: usize, depth: usize, best: &mut Vec<(usize, f64)>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = (p - q).norm_squared();
        if best.len() < k || d2 < best[best.len() - 1].1 {
            let pos = best.partition_point(|e| e.1 <= d2);
            best.insert(pos, (idx, d2));
            best.truncate(k);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, k, near.0, near.1, depth + 1, best);
        if best.len() < k || diff * diff <= best[best.len() - 1].1 {
            self.knn_rec(q, k, far.0, far.1, depth + 1, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}
