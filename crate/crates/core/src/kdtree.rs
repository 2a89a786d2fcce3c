//! Static k-d tree for exact k-nearest-neighbour queries.
//!
//! Median split on cycling axes, one point per node. Equal distances are
//! ordered by a caller-supplied rank so results are fully deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KdTree {
    dims: usize,
    points: Vec<f64>,
    ranks: Vec<usize>,
    /// Implicit tree layout: the node of `order[lo..hi]` is `order[(lo+hi)/2]`.
    order: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    d2: f64,
    rank: usize,
    idx: usize,
}

impl Hit {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.rank.cmp(&other.rank))
    }
}

impl PartialEq for Hit {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Hit {}
impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Hit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// `points` is row-major with `dims` columns; `ranks[i]` breaks distance
    /// ties (lower first) and must be distinct.
    pub fn build(points: Vec<f64>, dims: usize, ranks: Vec<usize>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidInput("k-d tree needs at least one dimension".into()));
        }
        if points.len() % dims != 0 {
            return Err(Error::InvalidInput("point buffer is not a multiple of dims".into()));
        }
        let n = points.len() / dims;
        if n == 0 {
            return Err(Error::InvalidInput("cannot index an empty point set".into()));
        }
        if ranks.len() != n {
            return Err(Error::InvalidInput("one rank per point required".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        let mut tree = Self {
            dims,
            points,
            ranks,
            order: (0..n).collect(),
        };
        let mut order = std::mem::take(&mut tree.order);
        tree.arrange(&mut order, 0);
        tree.order = order;
        Ok(tree)
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.points[i * self.dims + axis]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    fn arrange(&self, slice: &mut [usize], depth: usize) {
        if slice.len() <= 1 {
            return;
        }
        let axis = depth % self.dims;
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            self.coord(a, axis)
                .total_cmp(&self.coord(b, axis))
                .then(self.ranks[a].cmp(&self.ranks[b]))
        });
        let (left, rest) = slice.split_at_mut(mid);
        self.arrange(left, depth + 1);
        self.arrange(&mut rest[1..], depth + 1);
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Up to `k` nearest points as `(point index, distance)`, closest first.
    /// With `max_distance`, points farther than it are never returned.
    pub fn knn(&self, query: &[f64], k: usize, max_distance: Option<f64>) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dims, "query dimension mismatch");
        if k == 0 {
            return Vec::new();
        }
        let radius2 = max_distance.map(|r| r * r).unwrap_or(f64::INFINITY);
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.order.len(), 0, query, k, radius2, &mut heap);
        let mut hits = heap.into_vec();
        hits.sort();
        hits.into_iter().map(|h| (h.idx, h.d2.sqrt())).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        q: &[f64],
        k: usize,
        radius2: f64,
        heap: &mut BinaryHeap<Hit>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let hit = Hit {
            d2: squared_distance(q, self.point(idx)),
            rank: self.ranks[idx],
            idx,
        };
        if hit.d2 <= radius2 {
            if heap.len() < k {
                heap.push(hit);
            } else if hit < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(hit);
            }
        }
        let axis = depth % self.dims;
        let diff = q[axis] - self.coord(idx, axis);
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, q, k, radius2, heap);
        let plane2 = diff * diff;
        // `<=` keeps equal-distance points with a lower rank reachable
        let worst = if heap.len() < k {
            radius2
        } else {
            heap.peek().map_or(radius2, |h| h.d2.min(radius2))
        };
        if plane2 <= worst {
            self.search(far.0, far.1, depth + 1, q, k, radius2, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let t = KdTree::build(vec![1.0, 2.0], 2, vec![0]).unwrap();
        assert_eq!(t.knn(&[1.0, 2.0], 3, None), vec![(0, 0.0)]);
    }

    #[test]
    fn duplicates_come_first_in_rank_order() {
        let pts = vec![5.0, 1.0, 1.0, 3.0];
        let t = KdTree::build(pts, 1, vec![3, 1, 0, 2]).unwrap();
        let got: Vec<usize> = t.knn(&[1.0], 4, None).into_iter().map(|(i, _)| i).collect();
        assert_eq!(got, vec![2, 1, 3, 0]);
    }

    #[test]
    fn radius_limits_results() {
        let pts: Vec<f64> = (0..10).map(f64::from).collect();
        let t = KdTree::build(pts, 1, (0..10).collect()).unwrap();
        let got = t.knn(&[0.0], 10, Some(2.5));
        assert_eq!(got.len(), 3);
        assert_eq!(t.knn(&[0.0], 10, Some(2.0)).len(), 3);
    }

    #[test]
    fn build_errors() {
        assert!(KdTree::build(vec![], 2, vec![]).is_err());
        assert!(KdTree::build(vec![1.0], 0, vec![0]).is_err());
        assert!(KdTree::build(vec![f64::NAN], 1, vec![0]).is_err());
    }
}
