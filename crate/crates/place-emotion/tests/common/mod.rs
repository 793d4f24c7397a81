//! Independent reference implementations the acceptance suite checks the
//! library against. Deliberately naive: correctness over speed, and no code
//! shared with the crate under test beyond the public data types.

use place_emotion::geo::{haversine_m, GeoPoint, PlanarPoint};

/// Reference DBSCAN: O(n²) distance matrix, cores by neighbor count
/// (self included), clusters as connected components of cores under
/// eps-adjacency numbered by their smallest core index, border points to the
/// lowest-numbered adjacent cluster.
pub fn naive_dbscan(points: &[GeoPoint], eps_m: f64, min_pts: usize) -> (Vec<Option<usize>>, usize) {
    let n = points.len();
    let mut within = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            within[i][j] = haversine_m(points[i], points[j]) <= eps_m;
        }
    }
    let core: Vec<bool> = (0..n)
        .map(|i| within[i].iter().filter(|&&w| w).count() >= min_pts)
        .collect();

    // components of cores via repeated sweeps (no union-find needed at n ≤ 500)
    let mut component: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if !core[seed] || component[seed].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        component[seed] = Some(id);
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                if component[i] != Some(id) || !core[i] {
                    continue;
                }
                for j in 0..n {
                    if core[j] && within[i][j] && component[j].is_none() {
                        component[j] = Some(id);
                        changed = true;
                    }
                }
            }
        }
    }

    let mut labels = component.clone();
    for j in 0..n {
        if core[j] {
            continue;
        }
        labels[j] = (0..n)
            .filter(|&i| core[i] && within[i][j])
            .filter_map(|i| component[i])
            .min();
    }
    (labels, next)
}

fn cross(o: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Reference convex hull vertex set: a point is a vertex iff some directed
/// line through it and another point keeps every remaining point strictly to
/// the left. O(n³); assumes points in general position (no exact ties or
/// collinear triples), which random f64 instances satisfy.
pub fn brute_hull_vertices(points: &[PlanarPoint]) -> Vec<PlanarPoint> {
    let n = points.len();
    let mut vertices = Vec::new();
    for i in 0..n {
        let mut extreme = false;
        for j in 0..n {
            if i == j {
                continue;
            }
            let all_left = (0..n)
                .filter(|&k| k != i && k != j)
                .all(|k| cross(points[i], points[j], points[k]) > 0.0);
            if all_left {
                extreme = true;
                break;
            }
        }
        if extreme {
            vertices.push(points[i]);
        }
    }
    vertices
}

/// Canonical form for comparing vertex sets irrespective of ring order.
pub fn sorted_vertex_set(vertices: &[PlanarPoint]) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = vertices
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect();
    v.sort_unstable();
    v
}

/// Reference least squares through the normal equations X'X b = X'y, solved
/// by Gaussian elimination with partial pivoting.
pub fn normal_equations_ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let k = rows[0].len();
    assert_eq!(n, y.len());
    let mut a = vec![vec![0.0f64; k + 1]; k];
    for p in 0..k {
        for q in 0..k {
            a[p][q] = (0..n).map(|i| rows[i][p] * rows[i][q]).sum();
        }
        a[p][k] = (0..n).map(|i| rows[i][p] * y[i]).sum();
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-12, "singular normal equations");
        for row in 0..k {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (entry, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *entry -= f * p;
            }
        }
    }
    (0..k).map(|p| a[p][k] / a[p][p]).collect()
}
