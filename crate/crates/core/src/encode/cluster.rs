//! Area-weighted bisecting k-means over box centres.
//!
//! Each bisection is an optimal weighted 2-partition for clusters of up to
//! [`EXACT_LIMIT`] points; larger clusters use Lloyd iterations seeded with
//! the two farthest-apart points.

use thiserror::Error;

use crate::model::BoundingBox;
use crate::scalar::Real;

/// Largest cluster split exactly.
pub const EXACT_LIMIT: usize = 64;

const LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("K = {k} exceeds the {n} boxes available; cap K at the box count")]
    TooManyClusters { k: usize, n: usize },
    #[error("K must be >= 1")]
    ZeroClusters,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint<T> {
    pub x: T,
    pub y: T,
    pub w: T,
}

/// Box centres weighted by box area.
pub fn weighted_centers<T: Real>(boxes: &[BoundingBox<T>]) -> Vec<WeightedPoint<T>> {
    boxes
        .iter()
        .map(|b| {
            let (x, y) = b.center();
            WeightedPoint { x, y, w: b.area() }
        })
        .collect()
}

/// Weighted centroid `sum(w_i p_i) / sum(w_i)`.
pub fn weighted_centroid<T: Real>(pts: &[WeightedPoint<T>], members: &[usize]) -> (T, T) {
    let (mut sw, mut sx, mut sy) = (T::zero(), T::zero(), T::zero());
    for &i in members {
        let p = &pts[i];
        sw = sw + p.w;
        sx = sx + p.w * p.x;
        sy = sy + p.w * p.y;
    }
    if sw > T::zero() {
        (sx / sw, sy / sw)
    } else {
        (T::zero(), T::zero())
    }
}

/// Weighted within-cluster sum of squared distances to the weighted centroid.
pub fn weighted_wcss<T: Real>(pts: &[WeightedPoint<T>], members: &[usize]) -> T {
    let (cx, cy) = weighted_centroid(pts, members);
    members
        .iter()
        .map(|&i| {
            let p = &pts[i];
            let (dx, dy) = (p.x - cx, p.y - cy);
            p.w * (dx * dx + dy * dy)
        })
        .sum()
}

pub fn total_wcss<T: Real>(pts: &[WeightedPoint<T>], clusters: &[Vec<usize>]) -> T {
    clusters.iter().map(|c| weighted_wcss(pts, c)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    /// Member indices, each sorted; clusters ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// Total weighted WCSS before any split and after each bisection.
    pub wcss_history: Vec<T>,
}

/// Splits the boxes into `k` clusters by repeatedly bisecting the cluster
/// with the largest weighted WCSS (among clusters with two or more members).
pub fn weighted_bikmeans<T: Real>(boxes: &[BoundingBox<T>], k: usize) -> Result<Clustering<T>, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > boxes.len() {
        return Err(ClusterError::TooManyClusters { k, n: boxes.len() });
    }
    let pts = weighted_centers(boxes);
    let mut clusters = vec![(0..boxes.len()).collect::<Vec<_>>()];
    let mut history = vec![total_wcss(&pts, &clusters)];
    while clusters.len() < k {
        let target = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len() >= 2)
            .map(|(i, c)| (i, weighted_wcss(&pts, c)))
            .fold(None::<(usize, T)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .map(|(i, _)| i)
            .expect("k <= n guarantees a splittable cluster");
        let members = clusters.swap_remove(target);
        let (a, b) = bisect(&pts, &members);
        clusters.push(a);
        clusters.push(b);
        history.push(total_wcss(&pts, &clusters));
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    Ok(Clustering {
        clusters,
        wcss_history: history,
    })
}

/// Weighted 2-partition of `members` (at least two); both halves non-empty.
pub fn bisect<T: Real>(pts: &[WeightedPoint<T>], members: &[usize]) -> (Vec<usize>, Vec<usize>) {
    assert!(members.len() >= 2, "bisect needs two points");
    let split = if members.len() <= EXACT_LIMIT {
        exact_two_means(pts, members)
    } else {
        lloyd_two_means(pts, members)
    };
    split.unwrap_or_else(|| {
        // All points coincide: any split is optimal.
        let (head, tail) = members.split_at(members.len() - 1);
        (head.to_vec(), tail.to_vec())
    })
}

/// Running weighted sums for one side of a split.
#[derive(Clone, Copy)]
struct Moments<T> {
    w: T,
    x: T,
    y: T,
    q: T,
}

impl<T: Real> Moments<T> {
    fn zero() -> Self {
        Self {
            w: T::zero(),
            x: T::zero(),
            y: T::zero(),
            q: T::zero(),
        }
    }

    fn add(&mut self, p: &WeightedPoint<T>) {
        self.w = self.w + p.w;
        self.x = self.x + p.w * p.x;
        self.y = self.y + p.w * p.y;
        self.q = self.q + p.w * (p.x * p.x + p.y * p.y);
    }

    fn wcss(&self) -> T {
        if self.w > T::zero() {
            (self.q - (self.x * self.x + self.y * self.y) / self.w).max(T::zero())
        } else {
            T::zero()
        }
    }
}

/// Optimal 2-means partitions are separated by a line, so it suffices to try
/// every prefix of the points sorted along one direction per cell of the
/// arrangement of critical directions (those perpendicular to `p_i - p_j`).
fn exact_two_means<T: Real>(pts: &[WeightedPoint<T>], members: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = members.len();
    // Centring keeps the moment sums small enough for exact comparisons.
    let (mx, my) = weighted_centroid(pts, members);
    let local: Vec<WeightedPoint<T>> = pts
        .iter()
        .map(|p| WeightedPoint {
            x: p.x - mx,
            y: p.y - my,
            w: p.w,
        })
        .collect();
    let pts = &local[..];
    let coord = |i: usize| (pts[i].x.as_f64(), pts[i].y.as_f64());
    let mut angles = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let (pa, pb) = (coord(members[a]), coord(members[b]));
            let (dx, dy) = (pb.0 - pa.0, pb.1 - pa.1);
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            let t = (dy.atan2(dx) + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
            angles.push(t);
        }
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let mut dirs: Vec<f64> = match angles.len() {
        0 => return None,
        1 => vec![angles[0] + std::f64::consts::FRAC_PI_2],
        m => (0..m)
            .map(|i| {
                let next = if i + 1 < m {
                    angles[i + 1]
                } else {
                    angles[0] + std::f64::consts::PI
                };
                0.5 * (angles[i] + next)
            })
            .collect(),
    };
    dirs.dedup();

    let mut all = Moments::zero();
    for &i in members {
        all.add(&pts[i]);
    }
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for theta in dirs {
        let (c, s) = (theta.cos(), theta.sin());
        order.clear();
        order.extend(members.iter().map(|&i| {
            let (x, y) = coord(i);
            (x * c + y * s, i)
        }));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut left = Moments::zero();
        for cut in 1..n {
            left.add(&pts[order[cut - 1].1]);
            if order[cut].0 == order[cut - 1].0 {
                continue;
            }
            let right = Moments {
                w: all.w - left.w,
                x: all.x - left.x,
                y: all.y - left.y,
                q: all.q - left.q,
            };
            let cost = left.wcss() + right.wcss();
            if best.as_ref().is_none_or(|b| cost < b.0) {
                let mut side: Vec<usize> = order[..cut].iter().map(|o| o.1).collect();
                side.sort_unstable();
                best = Some((cost, side));
            }
        }
    }
    let (_, left) = best?;
    let right: Vec<usize> = members.iter().copied().filter(|i| left.binary_search(i).is_err()).collect();
    Some(canonical(left, right))
}

/// Orders the halves so the one holding the smallest index comes first.
fn canonical(a: Vec<usize>, mut b: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
    let mut a = a;
    a.sort_unstable();
    b.sort_unstable();
    if a[0] < b[0] {
        (a, b)
    } else {
        (b, a)
    }
}

fn lloyd_two_means<T: Real>(pts: &[WeightedPoint<T>], members: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    let d2 = |a: &WeightedPoint<T>, x: T, y: T| (a.x - x) * (a.x - x) + (a.y - y) * (a.y - y);
    let mut far = None::<(T, usize, usize)>;
    for (ai, &a) in members.iter().enumerate() {
        for &b in &members[ai + 1..] {
            let v = d2(&pts[a], pts[b].x, pts[b].y);
            if far.is_none_or(|f| v > f.0) {
                far = Some((v, a, b));
            }
        }
    }
    let (v, a, b) = far?;
    if !(v > T::zero()) {
        return None;
    }
    let mut ca = (pts[a].x, pts[a].y);
    let mut cb = (pts[b].x, pts[b].y);
    let mut assign: Vec<bool> = Vec::new();
    for _ in 0..LLOYD_ITERS {
        let next: Vec<bool> = members
            .iter()
            .map(|&i| d2(&pts[i], ca.0, ca.1) <= d2(&pts[i], cb.0, cb.1))
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        let left: Vec<usize> = members.iter().zip(&assign).filter(|(_, &l)| l).map(|(&i, _)| i).collect();
        let right: Vec<usize> = members.iter().zip(&assign).filter(|(_, &l)| !l).map(|(&i, _)| i).collect();
        if left.is_empty() || right.is_empty() {
            break;
        }
        ca = weighted_centroid(pts, &left);
        cb = weighted_centroid(pts, &right);
    }
    let left: Vec<usize> = members.iter().zip(&assign).filter(|(_, &l)| l).map(|(&i, _)| i).collect();
    let right: Vec<usize> = members.iter().zip(&assign).filter(|(_, &l)| !l).map(|(&i, _)| i).collect();
    if left.is_empty() || right.is_empty() {
        return None;
    }
    Some(canonical(left, right))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x: f64, y: f64, s: f64) -> BoundingBox<f64> {
        BoundingBox::new(x - s / 2.0, y - s / 2.0, x + s / 2.0, y + s / 2.0).unwrap()
    }

    #[test]
    fn k1_is_everything() {
        let boxes = [sq(0.0, 0.0, 2.0), sq(10.0, 0.0, 2.0), sq(5.0, 5.0, 2.0)];
        let c = weighted_bikmeans(&boxes, 1).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let boxes = [sq(0.0, 0.0, 2.0)];
        assert_eq!(
            weighted_bikmeans(&boxes, 2).unwrap_err(),
            ClusterError::TooManyClusters { k: 2, n: 1 }
        );
    }

    #[test]
    fn separated_groups() {
        let boxes = [
            BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            BoundingBox::new(100.0, 100.0, 101.0, 101.0).unwrap(),
            BoundingBox::new(0.5, 0.0, 1.0, 1.0).unwrap(),
            BoundingBox::new(100.0, 100.5, 101.0, 101.0).unwrap(),
        ];
        let c = weighted_bikmeans(&boxes, 2).unwrap();
        assert_eq!(c.clusters, vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn coincident_points_still_split() {
        let boxes = [sq(5.0, 5.0, 2.0); 4];
        let c = weighted_bikmeans(&boxes, 3).unwrap();
        assert_eq!(c.clusters.len(), 3);
        assert!(c.wcss_history.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn lloyd_path_separates() {
        let mut boxes = Vec::new();
        for i in 0..40 {
            boxes.push(sq(i as f64 % 7.0, (i / 7) as f64, 2.0));
            boxes.push(sq(500.0 + i as f64 % 7.0, 300.0 + (i / 7) as f64, 2.0));
        }
        let c = weighted_bikmeans(&boxes, 2).unwrap();
        assert!(c.clusters.iter().all(|cl| cl.len() == 40));
    }
}
