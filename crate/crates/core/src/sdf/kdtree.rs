//! Static 3-D k-d tree for nearest-sample queries. Ties are broken towards
//! the lower point index so results match a linear scan exactly.

pub struct KdTree<'a> {
    points: &'a [[f32; 3]],
    /// Point indices arranged as an implicit balanced tree: the median of
    /// each range is its node, split along `depth % 3`.
    order: Vec<u32>,
}

#[inline]
fn dist2(a: [f32; 3], b: [f32; 3]) -> f32 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
fn better(d: f32, i: u32, best: (f32, u32)) -> bool {
    d < best.0 || (d == best.0 && i < best.1)
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [[f32; 3]]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_range(points, &mut order, 0);
        Self { points, order }
    }

    /// Index of the nearest point, or `None` for an empty tree.
    pub fn nearest(&self, q: [f32; 3]) -> Option<usize> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (f32::INFINITY, u32::MAX);
        self.search(q, 0, self.order.len(), 0, &mut best);
        Some(best.1 as usize)
    }

    fn search(&self, q: [f32; 3], lo: usize, hi: usize, depth: usize, best: &mut (f32, u32)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = self.points[idx as usize];
        let d = dist2(p, q);
        if better(d, idx, *best) {
            *best = (d, idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        // `<=` keeps equidistant candidates on the far side reachable for
        // tie-breaking.
        if diff * diff <= best.0 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_range(points: &[[f32; 3]], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_range(points, left, depth + 1);
    build_range(points, &mut right[1..], depth + 1);
}

/// Linear-scan nearest point with the same tie-breaking as [`KdTree`].
pub fn nearest_brute_force(points: &[[f32; 3]], q: [f32; 3]) -> Option<usize> {
    let mut best = (f32::INFINITY, u32::MAX);
    for (i, &p) in points.iter().enumerate() {
        let d = dist2(p, q);
        if better(d, i as u32, best) {
            best = (d, i as u32);
        }
    }
    (best.1 != u32::MAX).then_some(best.1 as usize)
}
