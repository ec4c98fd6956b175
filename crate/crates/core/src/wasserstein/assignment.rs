//! Exact minimum-cost perfect matching on a dense square cost matrix.
//!
//! Shortest augmenting path with dual potentials (Hungarian method), O(n^3).
//! Large point clouds use an epsilon-scaling auction with a certified gap.

/// Returns `assignment[i] = j` minimizing `sum_i cost[i][assignment[i]]`.
pub fn solve(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based indexing with a virtual column 0, as in the textbook formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    assignment
}

/// Result of [`auction_points`]. `dual` is a lower bound on the optimal mean
/// cost, so `mean_cost - dual` bounds the suboptimality.
#[derive(Debug, Clone)]
pub struct AuctionResult {
    pub assignment: Vec<usize>,
    pub mean_cost: f64,
    pub dual: f64,
    pub phases: usize,
}

impl AuctionResult {
    pub fn gap(&self) -> f64 {
        (self.mean_cost - self.dual).max(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const LEAF: usize = 8;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    left: usize,
    right: usize,
    parent: usize,
    min_price: f64,
}

/// k-d tree over the target points answering `min_j |x - y_j|^2 + p_j`.
/// Each node keeps its bounding box and the smallest price below it; prices
/// only rise during an auction, so updates walk one leaf-to-root path.
struct PriceTree<'a> {
    pts: &'a [f64],
    d: usize,
    nodes: Vec<Node>,
    boxes: Vec<f64>,
    order: Vec<usize>,
    leaf_of: Vec<usize>,
}

impl<'a> PriceTree<'a> {
    fn new(pts: &'a [f64], d: usize, n: usize) -> Self {
        let mut t = PriceTree {
            pts,
            d,
            nodes: Vec::new(),
            boxes: Vec::new(),
            order: (0..n).collect(),
            leaf_of: vec![0; n],
        };
        t.build(0, n, NONE);
        t
    }

    fn build(&mut self, start: usize, end: usize, parent: usize) -> usize {
        let d = self.d;
        let id = self.nodes.len();
        self.nodes.push(Node { start, end, left: NONE, right: NONE, parent, min_price: 0.0 });
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &j in &self.order[start..end] {
            for k in 0..d {
                lo[k] = lo[k].min(self.pts[j * d + k]);
                hi[k] = hi[k].max(self.pts[j * d + k]);
            }
        }
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
        if end - start <= LEAF {
            for &j in &self.order[start..end] {
                self.leaf_of[j] = id;
            }
            return id;
        }
        let axis = (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = (start + end) / 2;
        let pts = self.pts;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| pts[a * d + axis].total_cmp(&pts[b * d + axis]));
        let left = self.build(start, mid, id);
        let right = self.build(mid, end, id);
        self.nodes[id].left = left;
        self.nodes[id].right = right;
        id
    }

    fn bound(&self, id: usize, x: &[f64]) -> f64 {
        let d = self.d;
        let b = &self.boxes[2 * d * id..2 * d * (id + 1)];
        let mut s = self.nodes[id].min_price;
        for k in 0..d {
            let gap = (b[k] - x[k]).max(x[k] - b[d + k]).max(0.0);
            s += gap * gap;
        }
        s
    }

    fn raise(&mut self, j: usize, prices: &[f64]) {
        let mut id = self.leaf_of[j];
        let n = &self.nodes[id];
        self.nodes[id].min_price = self.order[n.start..n.end]
            .iter()
            .map(|&k| prices[k])
            .fold(f64::INFINITY, f64::min);
        while self.nodes[id].parent != NONE {
            id = self.nodes[id].parent;
            let (l, r) = (self.nodes[id].left, self.nodes[id].right);
            self.nodes[id].min_price = self.nodes[l].min_price.min(self.nodes[r].min_price);
        }
    }

    /// Smallest and second smallest `|x - y_j|^2 + p_j`, and the argmin.
    fn best_two(&self, x: &[f64], prices: &[f64]) -> (f64, f64, usize) {
        let mut acc = (f64::INFINITY, f64::INFINITY, 0usize);
        self.search(0, x, prices, &mut acc);
        acc
    }

    fn search(&self, id: usize, x: &[f64], prices: &[f64], acc: &mut (f64, f64, usize)) {
        let node = &self.nodes[id];
        if node.left == NONE {
            for &j in &self.order[node.start..node.end] {
                let v = sq_dist(x, &self.pts[j * self.d..(j + 1) * self.d]) + prices[j];
                if v < acc.0 {
                    acc.1 = acc.0;
                    acc.0 = v;
                    acc.2 = j;
                } else if v < acc.1 {
                    acc.1 = v;
                }
            }
            return;
        }
        let (bl, br) = (self.bound(node.left, x), self.bound(node.right, x));
        let (first, fb, other, ob) = if bl <= br {
            (node.left, bl, node.right, br)
        } else {
            (node.right, br, node.left, bl)
        };
        if fb < acc.1 {
            self.search(first, x, prices, acc);
        }
        if ob < acc.1 {
            self.search(other, x, prices, acc);
        }
    }
}

/// Squared-Euclidean assignment between two equal-size point clouds by
/// forward auction with epsilon scaling. Costs are computed on the fly, so
/// memory is O(n d). Phases continue until the duality gap of the mean cost is
/// at most `rel_gap` times the mean cost (or exactly zero cost).
pub fn auction_points(x: &[Vec<f64>], y: &[Vec<f64>], rel_gap: f64) -> AuctionResult {
    let n = x.len();
    assert_eq!(n, y.len(), "auction needs equal sizes");
    if n == 0 {
        return AuctionResult { assignment: Vec::new(), mean_cost: 0.0, dual: 0.0, phases: 0 };
    }
    let d = x[0].len();
    let xs: Vec<f64> = x.iter().flatten().copied().collect();
    let ys: Vec<f64> = y.iter().flatten().copied().collect();
    let row = |i: usize| &xs[i * d..(i + 1) * d];
    let col = |j: usize| &ys[j * d..(j + 1) * d];

    // Scale from the spread of costs of a few rows.
    let mut cmax: f64 = 0.0;
    for i in (0..n).step_by((n / 16).max(1)) {
        for j in 0..n {
            cmax = cmax.max(sq_dist(row(i), col(j)));
        }
    }
    let mut eps = (cmax / 4.0).max(f64::MIN_POSITIVE);
    let mut prices = vec![0.0f64; n];
    let mut owner = vec![usize::MAX; n];
    let mut assigned = vec![usize::MAX; n];
    let mut tree = PriceTree::new(&ys, d, n);
    let mut phases = 0;
    loop {
        phases += 1;
        owner.iter_mut().for_each(|o| *o = usize::MAX);
        assigned.iter_mut().for_each(|a| *a = usize::MAX);
        let mut queue: Vec<usize> = (0..n).rev().collect();
        while let Some(i) = queue.pop() {
            let (best, second, bj) = tree.best_two(row(i), &prices);
            let incr = if second.is_finite() { second - best } else { 0.0 };
            prices[bj] += incr + eps;
            tree.raise(bj, &prices);
            let prev = owner[bj];
            owner[bj] = i;
            assigned[i] = bj;
            if prev != usize::MAX {
                assigned[prev] = usize::MAX;
                queue.push(prev);
            }
        }
        let primal: f64 = (0..n).map(|i| sq_dist(row(i), col(assigned[i]))).sum::<f64>();
        let mut dual = -prices.iter().sum::<f64>();
        for i in 0..n {
            dual += tree.best_two(row(i), &prices).0;
        }
        let (mean_cost, dual) = (primal / n as f64, dual / n as f64);
        if mean_cost - dual <= rel_gap * mean_cost || eps < 1e-15 * cmax.max(1e-300) {
            return AuctionResult { assignment: assigned, mean_cost, dual, phases };
        }
        eps /= 6.0;
    }
}
