//! DBSCAN over a precomputed distance function.

/// Cluster label per point (`None` = noise). Clusters are numbered in the
/// order they are discovered when scanning points in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

impl Clustering {
    /// Point indices of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i].is_none())
            .collect()
    }
}

fn neighbors(n: usize, p: usize, eps: f64, dist: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    (0..n).filter(|&q| q == p || dist(p, q) <= eps).collect()
}

/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Border points join the first cluster that reaches them.
pub fn dbscan(
    n: usize,
    eps: f64,
    min_pts: usize,
    dist: impl Fn(usize, usize) -> f64,
) -> Clustering {
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut cluster_count = 0;
    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let seeds = neighbors(n, p, eps, &dist);
        if seeds.len() < min_pts {
            continue;
        }
        let c = cluster_count;
        cluster_count += 1;
        labels[p] = Some(c);
        let mut queue = std::collections::VecDeque::from(seeds);
        while let Some(q) = queue.pop_front() {
            if labels[q].is_none() {
                labels[q] = Some(c);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let reach = neighbors(n, q, eps, &dist);
            if reach.len() >= min_pts {
                queue.extend(
                    reach
                        .into_iter()
                        .filter(|&r| !visited[r] || labels[r].is_none()),
                );
            }
        }
    }
    Clustering {
        labels,
        cluster_count,
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::Clustering;

    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Exhaustive reference: connected components of the core graph, then
    /// each border point attached to the adjacent component whose smallest
    /// core index is lowest.
    pub fn brute_force(
        n: usize,
        eps: f64,
        min_pts: usize,
        dist: impl Fn(usize, usize) -> f64,
    ) -> Clustering {
        let within = |i: usize, j: usize| i == j || dist(i, j) <= eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_pts)
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && within(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        // Component id = smallest core index in it; clusters numbered by it.
        let mut min_core = vec![usize::MAX; n];
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                min_core[r] = min_core[r].min(i);
            }
        }
        let mut order: Vec<usize> = (0..n).filter(|&r| min_core[r] != usize::MAX).collect();
        order.sort_by_key(|&r| min_core[r]);
        let number = |r: usize| order.iter().position(|&x| x == r).unwrap();

        let mut labels = vec![None; n];
        for i in 0..n {
            if core[i] {
                labels[i] = Some(number(find(&mut parent, i)));
            } else {
                let best = (0..n)
                    .filter(|&j| core[j] && within(i, j))
                    .map(|j| find(&mut parent, j))
                    .min_by_key(|&r| min_core[r]);
                labels[i] = best.map(number);
            }
        }
        Clustering {
            labels,
            cluster_count: order.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_dist(m: &[f64], n: usize) -> impl Fn(usize, usize) -> f64 + '_ {
        move |i, j| m[i.min(j) * n + i.max(j)]
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let c = dbscan(5, 0.45, 3, |_, _| 0.0);
        assert_eq!(c.cluster_count, 1);
        assert!(c.labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn two_bursts_and_a_gap() {
        // Points on a line: two tight bursts and two isolated gap points.
        let xs: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 5.0, 9.0, 10.0, 10.1, 10.2];
        let c = dbscan(xs.len(), 0.45, 3, |i, j| (xs[i] - xs[j]).abs());
        assert_eq!(c.cluster_count, 2);
        assert_eq!(c.clusters(), vec![vec![0, 1, 2, 3], vec![6, 7, 8]]);
        assert_eq!(c.noise(), vec![4, 5]);
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // 0-1-2 dense, 4-5-6 dense, 3 within eps of 2 and 4 only.
        let xs: [f64; 7] = [0.0, 0.1, 0.2, 0.6, 1.0, 1.1, 1.2];
        let c = dbscan(xs.len(), 0.45, 3, |i, j| (xs[i] - xs[j]).abs());
        assert_eq!(c.labels[3], Some(0));
        assert_eq!(
            c,
            oracle::brute_force(xs.len(), 0.45, 3, |i, j| (xs[i] - xs[j]).abs())
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn matches_the_brute_force_oracle(
            n in 1usize..=40,
            values in prop::collection::vec(0.0f64..1.0, 40 * 41 / 2),
            eps in 0.05f64..0.6,
            min_pts in 1usize..6,
        ) {
            let mut m = vec![0.0; n * n];
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    m[i * n + j] = values[k];
                    k += 1;
                }
            }
            let d = matrix_dist(&m, n);
            prop_assert_eq!(dbscan(n, eps, min_pts, &d), oracle::brute_force(n, eps, min_pts, &d));
        }
    }
}
