//! Exact k-nearest-neighbor queries under the (distance, original index) order.
//!
//! Points are ranked by squared Euclidean distance to the query; exact ties
//! go to the smaller original index. Both the brute-force path and the
//! kd-tree path compare `(distance², index)` pairs computed by the same
//! routine, so they agree bit-for-bit.

use crate::error::{domain, Error, Result};
use crate::sample::PointSample;
use rayon::prelude::*;
use std::cmp::Ordering;

const LEAF_SIZE: usize = 8;

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn rank_cmp(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// A k-th neighbor request. `exclude` removes one set member (leave-one-out).
#[derive(Debug, Clone, Copy)]
pub struct NeighborQuery<'a> {
    pub point: &'a [f64],
    pub order: usize,
    pub exclude: Option<usize>,
}

impl<'a> NeighborQuery<'a> {
    pub fn new(point: &'a [f64], order: usize) -> Self {
        Self {
            point,
            order,
            exclude: None,
        }
    }

    pub fn excluding(mut self, index: usize) -> Self {
        self.exclude = Some(index);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborAnswer {
    /// 0-based index into the searched set.
    pub index: usize,
    pub distance: f64,
}

/// Which search structure answers the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMethod {
    BruteForce,
    #[default]
    KdTree,
}

fn validate(set: &PointSample, q: &NeighborQuery<'_>) -> Result<()> {
    if q.point.len() != set.dim() {
        return Err(Error::DimensionMismatch(q.point.len(), set.dim()));
    }
    if q.point.iter().any(|c| !c.is_finite()) {
        return Err(domain("query point has non-finite coordinates"));
    }
    if q.order == 0 {
        return Err(domain("neighbor order must be >= 1"));
    }
    let available = set.len() - usize::from(q.exclude.is_some_and(|e| e < set.len()));
    if q.order > available {
        return Err(Error::Capacity {
            needed: q.order,
            available,
        });
    }
    Ok(())
}

/// Linear-time selection over the whole set.
#[derive(Debug, Clone, Copy)]
pub struct BruteForce<'a> {
    set: &'a PointSample,
}

impl<'a> BruteForce<'a> {
    pub fn new(set: &'a PointSample) -> Self {
        Self { set }
    }

    pub fn kth(&self, q: &NeighborQuery<'_>) -> Result<NeighborAnswer> {
        validate(self.set, q)?;
        let mut keyed: Vec<(f64, usize)> = self
            .set
            .points()
            .enumerate()
            .filter(|(i, _)| Some(*i) != q.exclude)
            .map(|(i, p)| (sq_dist(q.point, p), i))
            .collect();
        let (_, &mut (d2, index), _) = keyed.select_nth_unstable_by(q.order - 1, rank_cmp);
        Ok(NeighborAnswer {
            index,
            distance: d2.sqrt(),
        })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a borrowed sample. Immutable after construction.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    set: &'a PointSample,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(set: &'a PointSample) -> Self {
        let mut tree = Self {
            set,
            perm: (0..set.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, set.len());
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.set.dim();
        let mut axis = 0;
        let mut widest = -1.0;
        for j in 0..d {
            let (lo, hi) = self.perm[start..end].iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &i| {
                    let c = self.set.point(i)[j];
                    (lo.min(c), hi.max(c))
                },
            );
            if hi - lo > widest {
                widest = hi - lo;
                axis = j;
            }
        }
        if widest <= 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let set = self.set;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            set.point(a)[axis].total_cmp(&set.point(b)[axis])
        });
        let value = set.point(self.perm[mid])[axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn kth(&self, q: &NeighborQuery<'_>) -> Result<NeighborAnswer> {
        validate(self.set, q)?;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(q.order + 1);
        self.search(0, q, &mut best);
        let (d2, index) = best[q.order - 1];
        Ok(NeighborAnswer {
            index,
            distance: d2.sqrt(),
        })
    }

    fn search(&self, node: usize, q: &NeighborQuery<'_>, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    if Some(i) == q.exclude {
                        continue;
                    }
                    let cand = (sq_dist(q.point, self.set.point(i)), i);
                    if best.len() == q.order {
                        if rank_cmp(&cand, &best[q.order - 1]) != Ordering::Less {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|b| rank_cmp(b, &cand) == Ordering::Less);
                    best.insert(pos, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q.point[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                // Equal bounds are still visited: a tied point with a smaller index may live there.
                if best.len() < q.order || diff * diff <= best[q.order - 1].0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Single k-th neighbor query against `set`.
pub fn kth_neighbor(
    set: &PointSample,
    q: &NeighborQuery<'_>,
    method: SearchMethod,
) -> Result<NeighborAnswer> {
    match method {
        SearchMethod::BruteForce => BruteForce::new(set).kth(q),
        SearchMethod::KdTree => KdTree::new(set).kth(q),
    }
}

/// Neighbor distances for every point of an estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Radii {
    pub values: Vec<f64>,
    /// Positions whose neighbor distance is exactly zero (coincident points).
    pub zero_indices: Vec<usize>,
}

impl Radii {
    fn from_values(values: Vec<f64>) -> Self {
        let zero_indices = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            values,
            zero_indices,
        }
    }

    pub fn has_zero(&self) -> bool {
        !self.zero_indices.is_empty()
    }
}

enum Engine<'a> {
    Brute(BruteForce<'a>),
    Tree(KdTree<'a>),
}

impl<'a> Engine<'a> {
    fn new(set: &'a PointSample, method: SearchMethod) -> Self {
        match method {
            SearchMethod::BruteForce => Engine::Brute(BruteForce::new(set)),
            SearchMethod::KdTree => Engine::Tree(KdTree::new(set)),
        }
    }

    fn kth(&self, q: &NeighborQuery<'_>) -> Result<NeighborAnswer> {
        match self {
            Engine::Brute(b) => b.kth(q),
            Engine::Tree(t) => t.kth(q),
        }
    }
}

fn check_orders(orders: &[usize], n: usize) -> Result<()> {
    if orders.len() != n {
        return Err(domain(format!(
            "{} orders supplied for {n} points",
            orders.len()
        )));
    }
    if orders.contains(&0) {
        return Err(domain("neighbor orders must be >= 1"));
    }
    Ok(())
}

/// Leave-one-out radii with a per-point order: element i is the distance from
/// X_i to its `orders[i]`-th neighbor among the other points of `x`.
pub fn loo_radii_with_orders(
    x: &PointSample,
    orders: &[usize],
    method: SearchMethod,
) -> Result<Radii> {
    check_orders(orders, x.len())?;
    let max = orders.iter().copied().max().unwrap_or(1);
    if x.len() < max + 1 {
        return Err(Error::Capacity {
            needed: max + 1,
            available: x.len(),
        });
    }
    let engine = Engine::new(x, method);
    let values = (0..x.len())
        .into_par_iter()
        .map(|i| {
            engine
                .kth(&NeighborQuery::new(x.point(i), orders[i]).excluding(i))
                .map(|a| a.distance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Radii::from_values(values))
}

/// Leave-one-out radii R_{n,k}(i) with a common order `k`.
pub fn loo_radii(x: &PointSample, k: usize, method: SearchMethod) -> Result<Radii> {
    loo_radii_with_orders(x, &vec![k; x.len()], method)
}

/// Cross-sample radii with a per-point order: element i is the distance from
/// X_i to its `orders[i]`-th neighbor in `y` (no exclusion).
pub fn cross_radii_with_orders(
    x: &PointSample,
    y: &PointSample,
    orders: &[usize],
    method: SearchMethod,
) -> Result<Radii> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    check_orders(orders, x.len())?;
    let max = orders.iter().copied().max().unwrap_or(1);
    if y.len() < max {
        return Err(Error::Capacity {
            needed: max,
            available: y.len(),
        });
    }
    let engine = Engine::new(y, method);
    let values = (0..x.len())
        .into_par_iter()
        .map(|i| {
            engine
                .kth(&NeighborQuery::new(x.point(i), orders[i]))
                .map(|a| a.distance)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Radii::from_values(values))
}

/// Cross-sample radii V_{m,l}(i) with a common order `l`.
pub fn cross_radii(
    x: &PointSample,
    y: &PointSample,
    l: usize,
    method: SearchMethod,
) -> Result<Radii> {
    cross_radii_with_orders(x, y, &vec![l; x.len()], method)
}
