//! Exact discrete transport solvers used as evaluation and test oracles.

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-14;

/// Exact optimal transport cost between histograms `a` (len `na`) and `b` (len `nb`)
/// under a dense `na × nb` cost matrix, by successive shortest paths with potentials.
///
/// Intended for small problems (tens of points). Costs must be non-negative.
pub fn min_cost_transport(a: &[f64], b: &[f64], cost: &[f64]) -> Result<f64> {
    let (na, nb) = (a.len(), b.len());
    if cost.len() != na * nb {
        return Err(Error::ShapeMismatch(format!(
            "cost matrix has {} entries for {na} × {nb}",
            cost.len()
        )));
    }
    if a.iter().chain(b).any(|v| !(*v >= 0.0)) || cost.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidWeights(
            "masses and costs must be non-negative".into(),
        ));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if (sa - sb).abs() > 1e-10 {
        return Err(Error::MassMismatch {
            left: sa,
            right: sb,
        });
    }

    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![0.0; na * nb];
    // node layout: sources 0..na, sinks na..na+nb
    let v = na + nb;
    let mut pot = vec![0.0; v];
    let mut dist = vec![0.0; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];

    loop {
        if supply.iter().all(|s| *s <= MASS_TOL) || demand.iter().all(|d| *d <= MASS_TOL) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..na {
            if supply[i] > MASS_TOL {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for node in 0..v {
                if !done[node] && dist[node] < best {
                    best = dist[node];
                    u = node;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < na {
                for j in 0..nb {
                    let w = na + j;
                    let rc = (cost[u * nb + j] + pot[u] - pot[w]).max(0.0);
                    if dist[u] + rc < dist[w] {
                        dist[w] = dist[u] + rc;
                        prev[w] = u;
                    }
                }
            } else {
                let j = u - na;
                for i in 0..na {
                    if flow[i * nb + j] > MASS_TOL {
                        let rc = (-cost[i * nb + j] + pot[u] - pot[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..nb {
            if demand[j] > MASS_TOL && dist[na + j] < best {
                best = dist[na + j];
                target = na + j;
            }
        }
        if target == usize::MAX {
            return Err(Error::InvalidWeights(
                "transport problem is infeasible".into(),
            ));
        }
        let reach_max = dist
            .iter()
            .filter(|d| d.is_finite())
            .fold(0.0f64, |m, d| m.max(*d));
        for node in 0..v {
            pot[node] += if dist[node].is_finite() {
                dist[node]
            } else {
                reach_max
            };
        }

        // bottleneck along the path
        let mut amount = demand[target - na];
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p >= na {
                // backward arc: sink p -> source node, limited by flow[node][p]
                amount = amount.min(flow[node * nb + (p - na)]);
            }
            node = p;
        }
        amount = amount.min(supply[node]);

        let start = node;
        let mut node = target;
        while prev[node] != usize::MAX {
            let p = prev[node];
            if p < na {
                flow[p * nb + (node - na)] += amount;
            } else {
                flow[node * nb + (p - na)] -= amount;
            }
            node = p;
        }
        supply[start] -= amount;
        demand[target - na] -= amount;
    }

    Ok(flow.iter().zip(cost).map(|(f, c)| f * c).sum())
}

/// Minimum-cost perfect assignment on a dense `n × n` cost matrix (Hungarian method with
/// potentials, O(n³)). Returns `(row -> column, total cost)`.
pub fn assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "{} costs for a {n} × {n} matrix",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let ui = u[i0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - ui - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut rows = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            rows[p[j] - 1] = j - 1;
        }
    }
    let total = rows.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((rows, total))
}
