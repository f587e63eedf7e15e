//! Small agglomerative clustering helpers used to group eigenvalues and
//! factor columns.

/// Inter-cluster distance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Single,
    Average,
}

/// Groups `n` items into exactly `k` clusters (or `n` if `k > n`) by
/// repeatedly merging the closest pair. Labels are numbered by first
/// appearance.
pub fn agglomerate(n: usize, k: usize, linkage: Linkage, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { dist(i, j) }).collect()).collect();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let target = k.max(1);
    while clusters.len() > target {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let v = cluster_distance(&d, &clusters[a], &clusters[b], linkage);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let merged = clusters.remove(best.2);
        clusters[best.1].extend(merged);
    }
    labels_from_groups(n, &clusters)
}

/// Connected components of the graph joining items closer than `threshold`.
pub fn components_within(n: usize, threshold: f64, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if dist(i, j) <= threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<(usize, usize)> = Vec::new();
    for (i, r) in roots.into_iter().enumerate() {
        match seen.iter().find(|(root, _)| *root == r) {
            Some(&(_, g)) => groups[g].push(i),
            None => {
                seen.push((r, groups.len()));
                groups.push(vec![i]);
            }
        }
    }
    labels_from_groups(n, &groups)
}

fn cluster_distance(d: &[Vec<f64>], a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| d[i][j]));
    match linkage {
        Linkage::Single => pairs.fold(f64::INFINITY, f64::min),
        Linkage::Average => pairs.sum::<f64>() / (a.len() * b.len()) as f64,
    }
}

fn labels_from_groups(n: usize, groups: &[Vec<usize>]) -> Vec<usize> {
    let mut raw = vec![0; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            raw[i] = g;
        }
    }
    relabel(&raw)
}

/// Renumbers labels in order of first appearance.
pub fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(old, _)| *old == l) {
            Some(&(_, new)) => new,
            None => {
                map.push((l, map.len()));
                map.len() - 1
            }
        })
        .collect()
}

/// Members of each cluster, indexed by label.
pub fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_obvious_groups() {
        let x: [f64; 5] = [0.0, 0.1, 5.0, 0.05, 5.2];
        let d = |i: usize, j: usize| (x[i] - x[j]).abs();
        for link in [Linkage::Single, Linkage::Average] {
            assert_eq!(agglomerate(5, 2, link, d), vec![0, 0, 1, 0, 1]);
        }
        assert_eq!(components_within(5, 0.5, d), vec![0, 0, 1, 0, 1]);
        assert_eq!(groups(&[0, 0, 1, 0, 1]), vec![vec![0, 1, 3], vec![2, 4]]);
    }

    #[test]
    fn more_clusters_than_items() {
        assert_eq!(agglomerate(2, 5, Linkage::Single, |_, _| 1.0), vec![0, 1]);
        assert!(agglomerate(0, 1, Linkage::Single, |_, _| 1.0).is_empty());
    }
}
