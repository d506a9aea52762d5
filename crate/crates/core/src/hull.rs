//! Convex hull of a sliding window of samples `(x, y)` with strictly
//! increasing integer `x`.
//!
//! The window is split into an older left segment and a newer right
//! segment. The right segment's chain grows by Andrew's monotone-chain
//! append. The left segment's chain is built right to left once, recording
//! for every point the chain vertices it removed; deleting the leftmost
//! point pops it and puts those vertices back (a stack of stacks). When the
//! left segment runs empty the whole window becomes the new left segment,
//! so every point is moved at most once and the structural work per
//! advance is amortised constant.
//!
//! The hull of the window is the two partial chains joined by a bridge,
//! located by nested binary search. Collinear points are not extreme.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Orientation tolerance, relative to the magnitude of the cross products.
pub const ORIENTATION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullSide {
    /// Chain bounding the points from below (convex function).
    Lower,
    /// Chain bounding the points from above (concave function).
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullPoint {
    pub x: i64,
    pub y: f64,
}

/// Sign of the turn `o -> a -> b`: positive for counter-clockwise, zero
/// within tolerance.
fn turn(o: HullPoint, a: HullPoint, b: HullPoint) -> i8 {
    let t1 = (a.x - o.x) as f64 * (b.y - o.y);
    let t2 = (a.y - o.y) * (b.x - o.x) as f64;
    let cross = t1 - t2;
    let tol = ORIENTATION_EPS * t1.abs().max(t2.abs()).max(1.0);
    if cross > tol {
        1
    } else if cross < -tol {
        -1
    } else {
        0
    }
}

/// Lower monotone chain of points sorted by `x`, collinear points dropped.
pub fn lower_chain(points: &[HullPoint]) -> Vec<HullPoint> {
    let mut h: Vec<HullPoint> = Vec::with_capacity(points.len());
    for &p in points {
        while h.len() >= 2 && turn(h[h.len() - 2], h[h.len() - 1], p) <= 0 {
            h.pop();
        }
        h.push(p);
    }
    h
}

/// Upper monotone chain of points sorted by `x`, collinear points dropped.
pub fn upper_chain(points: &[HullPoint]) -> Vec<HullPoint> {
    let mut h: Vec<HullPoint> = Vec::with_capacity(points.len());
    for &p in points {
        while h.len() >= 2 && turn(h[h.len() - 2], h[h.len() - 1], p) >= 0 {
            h.pop();
        }
        h.push(p);
    }
    h
}

/// Index of the vertex of a lower chain minimising `y - slope * x`; the
/// leftmost one on ties.
fn chain_argmin(chain: &[HullPoint], slope: f64) -> usize {
    // Edge slopes increase along a lower chain.
    let (mut lo, mut hi) = (0usize, chain.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let (a, b) = (chain[mid], chain[mid + 1]);
        let rise = b.y - a.y;
        let run = (b.x - a.x) as f64;
        if rise < slope * run {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Lower chain evaluated at `x` inside its range.
fn chain_value(chain: &[HullPoint], x: f64) -> f64 {
    let pos = chain.partition_point(|p| (p.x as f64) < x);
    if pos == 0 {
        return chain[0].y;
    }
    if pos == chain.len() {
        return chain[chain.len() - 1].y;
    }
    let (a, b) = (chain[pos - 1], chain[pos]);
    let f = (x - a.x as f64) / (b.x - a.x) as f64;
    a.y + f * (b.y - a.y)
}

#[derive(Debug, Clone)]
pub struct SlidingHull {
    side: HullSide,
    capacity: usize,
    /// Window in internal coordinates (`y` negated for the upper side).
    window: VecDeque<HullPoint>,
    /// Number of window points in the left segment.
    split: usize,
    /// Left chain, rightmost vertex first.
    left: Vec<HullPoint>,
    /// Vertices removed by each left-chain insertion, innermost last.
    saved: Vec<Vec<HullPoint>>,
    /// Right chain, leftmost vertex first.
    right: Vec<HullPoint>,
    pushes: u64,
    pops: u64,
}

impl SlidingHull {
    pub fn new(side: HullSide, capacity: usize) -> Self {
        Self {
            side,
            capacity: capacity.max(1),
            window: VecDeque::with_capacity(capacity + 1),
            split: 0,
            left: Vec::new(),
            saved: Vec::new(),
            right: Vec::new(),
            pushes: 0,
            pops: 0,
        }
    }

    pub fn side(&self) -> HullSide {
        self.side
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total chain insertions and removals so far.
    pub fn counters(&self) -> (u64, u64) {
        (self.pushes, self.pops)
    }

    /// First and last `x` of the window.
    pub fn x_range(&self) -> Option<(i64, i64)> {
        Some((self.window.front()?.x, self.window.back()?.x))
    }

    fn internal(&self, y: f64) -> f64 {
        match self.side {
            HullSide::Lower => y,
            HullSide::Upper => -y,
        }
    }

    /// Appends a sample during the initial fill.
    pub fn push_back(&mut self, x: i64, y: f64) -> Result<()> {
        if self.is_full() {
            return Err(Error::state("hull window is full; use advance"));
        }
        if let Some(last) = self.window.back() {
            if x <= last.x {
                return Err(Error::state(format!("hull abscissa {x} does not follow {}", last.x)));
            }
        }
        if !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite hull sample at {x}")));
        }
        let p = HullPoint { x, y: self.internal(y) };
        self.window.push_back(p);
        while self.right.len() >= 2 && turn(self.right[self.right.len() - 2], self.right[self.right.len() - 1], p) <= 0 {
            self.right.pop();
            self.pops += 1;
        }
        self.right.push(p);
        self.pushes += 1;
        Ok(())
    }

    /// Removes the oldest sample.
    pub fn pop_front(&mut self) -> Result<()> {
        if self.window.is_empty() {
            return Err(Error::state("hull window is empty"));
        }
        if self.split == 0 {
            self.rebuild_left();
        }
        self.window.pop_front();
        self.split -= 1;
        self.left.pop();
        self.pops += 1;
        let restored = self.saved.pop().expect("one record per left point");
        for p in restored.into_iter().rev() {
            self.left.push(p);
            self.pushes += 1;
        }
        Ok(())
    }

    /// Slides a full window one step: drops the oldest sample and appends
    /// `(x, y)`.
    pub fn advance(&mut self, x: i64, y: f64) -> Result<()> {
        if !self.is_full() {
            return Err(Error::state(format!(
                "hull advanced before its window of {} was filled",
                self.capacity
            )));
        }
        self.pop_front()?;
        self.push_back(x, y)
    }

    fn rebuild_left(&mut self) {
        self.pops += self.right.len() as u64;
        self.right.clear();
        self.left.clear();
        self.saved.clear();
        for &p in self.window.iter().rev() {
            let mut removed = Vec::new();
            while self.left.len() >= 2 && turn(p, self.left[self.left.len() - 1], self.left[self.left.len() - 2]) <= 0 {
                removed.push(self.left.pop().expect("nonempty"));
                self.pops += 1;
            }
            self.left.push(p);
            self.pushes += 1;
            self.saved.push(removed);
        }
        self.split = self.window.len();
    }

    fn left_ascending(&self) -> Vec<HullPoint> {
        self.left.iter().rev().copied().collect()
    }

    /// Lower tangent from `p`, left of every point of `chain`: first vertex
    /// after which the chain turns strictly upward as seen from `p`.
    fn tangent(p: HullPoint, chain: &[HullPoint]) -> usize {
        let (mut lo, mut hi) = (0usize, chain.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if turn(p, chain[mid], chain[mid + 1]) > 0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// Bridge `(i, q)` between the ascending left chain and the right chain.
    fn bridge(left: &[HullPoint], right: &[HullPoint]) -> (usize, usize) {
        let (mut lo, mut hi) = (0usize, left.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            let q = Self::tangent(left[mid], right);
            if turn(left[mid], right[q], left[mid + 1]) < 0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (lo, Self::tangent(left[lo], right))
    }

    /// Internal-coordinate lower chain split as (left part, right part).
    fn parts(&self) -> (Vec<HullPoint>, &[HullPoint]) {
        let left = self.left_ascending();
        if left.is_empty() || self.right.is_empty() {
            return (left, &self.right);
        }
        let (i, q) = Self::bridge(&left, &self.right);
        (left[..=i].to_vec(), &self.right[q..])
    }

    /// Extreme points of the window, sorted by `x`.
    pub fn extremes(&self) -> Vec<HullPoint> {
        let (mut l, r) = self.parts();
        l.extend_from_slice(r);
        if self.side == HullSide::Upper {
            for p in &mut l {
                p.y = -p.y;
            }
        }
        l
    }

    /// Extreme point minimising `y - slope * x`. Ties go to the smaller `x`.
    pub fn argmin_linear(&self, slope: f64) -> Option<HullPoint> {
        let candidates: Vec<HullPoint> = match self.side {
            HullSide::Lower => [&self.left_ascending()[..], &self.right[..]]
                .into_iter()
                .filter(|c| !c.is_empty())
                .map(|c| c[chain_argmin(c, slope)])
                .collect(),
            HullSide::Upper => {
                let first = *self.window.front()?;
                let last = *self.window.back()?;
                vec![first, last]
                    .into_iter()
                    .map(|p| HullPoint { x: p.x, y: -p.y })
                    .collect()
            }
        };
        let mut best: Option<HullPoint> = None;
        for p in candidates {
            let v = p.y - slope * p.x as f64;
            best = match best {
                Some(b) if b.y - slope * b.x as f64 <= v => Some(b),
                _ => Some(p),
            };
        }
        best
    }

    /// The hull's chain evaluated at `x` within the window's range: the
    /// convex minorant for the lower side, the concave majorant for the
    /// upper side.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.x_range()?;
        if x < lo as f64 - 1e-9 || x > hi as f64 + 1e-9 {
            return None;
        }
        let (l, r) = self.parts();
        let v = match (l.last(), r.first()) {
            (Some(a), Some(b)) if x > a.x as f64 && x < b.x as f64 => {
                let f = (x - a.x as f64) / (b.x - a.x) as f64;
                a.y + f * (b.y - a.y)
            }
            (Some(a), _) if x <= a.x as f64 => chain_value(&l, x),
            _ => chain_value(r, x),
        };
        Some(match self.side {
            HullSide::Lower => v,
            HullSide::Upper => -v,
        })
    }
}
