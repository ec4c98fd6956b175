//! Exact transportation problem between two uniform empirical measures of
//! different sizes.
//!
//! Weights `1/n` and `1/m` are scaled to integer supplies `m` and demands `n`
//! (both sum to `n*m`), and the resulting network is solved by successive
//! shortest augmenting paths with Johnson potentials. Each augmentation
//! saturates a supply, a demand or a reverse arc, so the flow is an extreme
//! point of the transportation polytope.

/// Optimal integer flow `flow[i][j]` (units of `1/(n*m)` mass) and its cost
/// `sum flow * cost / (n*m)`.
pub fn solve(cost: &[Vec<f64>]) -> (Vec<Vec<u64>>, f64) {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    let mut flow = vec![vec![0u64; m]; n];
    if n == 0 || m == 0 {
        return (flow, 0.0);
    }
    let mut supply = vec![m as u64; n];
    let mut demand = vec![n as u64; m];

    // Potentials keep reduced costs non-negative on residual arcs.
    let mut pot_src = vec![0.0; n];
    let mut pot_dst: Vec<f64> = (0..m)
        .map(|j| cost.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
        .collect();

    let mut remaining = (n * m) as u64;
    while remaining > 0 {
        // Dijkstra over source nodes (0..n) and sink nodes (n..n+m) from a
        // virtual super-source feeding every source with leftover supply.
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut prev = vec![usize::MAX; total];
        let mut done = vec![false; total];
        for i in 0..n {
            if supply[i] > 0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for k in 0..total {
                if !done[k] && dist[k] < best_d {
                    best_d = dist[k];
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let rc = (cost[i][j] + pot_src[i] - pot_dst[j]).max(0.0);
                    let nd = best_d + rc;
                    if nd < dist[n + j] {
                        dist[n + j] = nd;
                        prev[n + j] = i;
                    }
                }
            } else {
                let j = best - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        let rc = (pot_dst[j] - cost[i][j] - pot_src[i]).max(0.0);
                        let nd = best_d + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = best;
                        }
                    }
                }
            }
        }

        // Cheapest reachable sink with unmet demand.
        let mut target = usize::MAX;
        let mut target_d = f64::INFINITY;
        for j in 0..m {
            if demand[j] > 0 && dist[n + j] < target_d {
                target_d = dist[n + j];
                target = n + j;
            }
        }
        assert!(target != usize::MAX, "transportation network disconnected");

        for k in 0..total {
            let d = dist[k].min(target_d);
            if k < n {
                pot_src[k] += d;
            } else {
                pot_dst[k - n] += d;
            }
        }

        // Bottleneck along the path.
        let mut bottleneck = demand[target - n];
        let mut node = target;
        loop {
            let p = prev[node];
            if node >= n {
                if p == usize::MAX {
                    break;
                }
                node = p;
            } else {
                if p == usize::MAX {
                    bottleneck = bottleneck.min(supply[node]);
                    break;
                }
                bottleneck = bottleneck.min(flow[node][p - n]);
                node = p;
            }
        }

        let mut node = target;
        demand[node - n] -= bottleneck;
        loop {
            let p = prev[node];
            if node >= n {
                flow[p][node - n] += bottleneck;
                node = p;
            } else {
                if p == usize::MAX {
                    supply[node] -= bottleneck;
                    break;
                }
                flow[node][p - n] -= bottleneck;
                node = p;
            }
        }
        remaining -= bottleneck;
    }

    let scale = (n * m) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0 {
                total += flow[i][j] as f64 * cost[i][j];
            }
        }
    }
    (flow, total / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginals_are_preserved() {
        let cost: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..5)
                    .map(|j| ((i as f64) - (j as f64) * 0.7).powi(2))
                    .collect()
            })
            .collect();
        let (flow, _) = solve(&cost);
        for row in &flow {
            assert_eq!(row.iter().sum::<u64>(), 5);
        }
        for j in 0..5 {
            assert_eq!(flow.iter().map(|r| r[j]).sum::<u64>(), 3);
        }
    }

    #[test]
    fn one_to_many() {
        // Single source at 0 against {1, 3}: every coupling is the product.
        let cost = vec![vec![1.0, 9.0]];
        let (_, c) = solve(&cost);
        assert_eq!(c, 5.0);
    }
}
