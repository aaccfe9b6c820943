//! Exact k-nearest neighbors over 3D positions with a static kd-tree.
//!
//! Neighbors are ordered by `(distance², index)`, so ties resolve toward the
//! lower index. A point never lists itself, though duplicates of it may appear
//! at distance zero.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub k: usize,
    /// Row-major `n × k`.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices_of(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances_of(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

const LEAF: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

pub struct KdTree<'a> {
    points: &'a [Vector3<f64>],
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut order, 0);
        Self { points, order, root }
    }

    fn build_node(points: &[Vector3<f64>], idx: &mut [usize], offset: usize) -> Node {
        if idx.len() <= LEAF {
            return Node::Leaf {
                start: offset,
                end: offset + idx.len(),
            };
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |a, b| points[*a][axis].total_cmp(&points[*b][axis]).then(a.cmp(b)));
        let value = points[idx[mid]][axis];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build_node(points, l, offset)),
            right: Box::new(Self::build_node(points, r, offset + mid)),
        }
    }

    /// The `k` nearest points to `points[query]`, excluding `query` itself.
    pub fn nearest(&self, query: usize, k: usize) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut best);
        best
    }

    fn search(&self, node: &Node, query: usize, k: usize, best: &mut Vec<(f64, usize)>) {
        let q = &self.points[query];
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if i == query {
                        continue;
                    }
                    let cand = ((self.points[i] - q).norm_squared(), i);
                    if best.len() == k && !less(cand, best[k - 1]) {
                        continue;
                    }
                    let pos = best.partition_point(|b| less(*b, cand));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, best);
                // equal distances may still win on index, so only strictly farther planes prune
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

pub fn knn(positions: &[Vector3<f64>], k: usize) -> Result<Neighborhood> {
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".into()));
    }
    if positions.len() <= k {
        return Err(Error::Contract(format!("knn needs more than k={k} points, got {}", positions.len())));
    }
    let tree = KdTree::build(positions);
    let rows: Vec<Vec<(f64, usize)>> = (0..positions.len()).into_par_iter().map(|i| tree.nearest(i, k)).collect();
    let mut indices = Vec::with_capacity(positions.len() * k);
    let mut distances = Vec::with_capacity(positions.len() * k);
    for row in rows {
        for (d2, j) in row {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(Neighborhood { k, indices, distances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_tie_prefers_lower_index() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let n = knn(&pts, 1).unwrap();
        assert_eq!(n.indices_of(1), &[0]);
        assert_eq!(n.indices_of(0), &[1]);
        assert_eq!(n.indices_of(2), &[1]);
    }

    #[test]
    fn duplicates_have_zero_distance() {
        let pts = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        let n = knn(&pts, 2).unwrap();
        assert_eq!(n.indices_of(0), &[1, 2]);
        assert_eq!(n.distances_of(3), &[0.0, 0.0]);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(knn(&[Vector3::zeros(); 3], 3), Err(Error::Contract(_))));
    }
}
