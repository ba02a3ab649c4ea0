use super::MeshError;
use crate::graph::{fiedler_vector, GraphError, SparseGraph};

/// Splits a connected graph in two by the sign of its Fiedler vector.
///
/// Positive entries go to the first part. Entries that are numerically zero
/// join the currently smaller side (ties to the first part). If the sign split
/// leaves a side empty, the split falls back to the median rank. Finally,
/// stray components of either side are moved across until both sides induce
/// connected subgraphs. Both returned vertex lists are sorted.
pub fn bipartition(g: &SparseGraph) -> Result<(Vec<usize>, Vec<usize>), MeshError> {
    let n = g.n_vertices();
    if n < 2 {
        return Err(GraphError::TooFewVertices { n, needed: 2 }.into());
    }
    let v = fiedler_vector(g)?;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let zero_tol = 1e-12 * scale;

    let mut in_a = vec![false; n];
    let mut zeros = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if x.abs() <= zero_tol {
            zeros.push(i);
        } else {
            in_a[i] = x > 0.0;
        }
    }
    let size_a = (0..n).filter(|&i| in_a[i] && !zeros.contains(&i)).count();
    let size_b = n - zeros.len() - size_a;
    if size_a <= size_b {
        zeros.iter().for_each(|&i| in_a[i] = true);
    }

    let count_a = in_a.iter().filter(|&&a| a).count();
    if count_a == 0 || count_a == n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        in_a = vec![false; n];
        for &i in order.iter().take((n / 2).max(1)) {
            in_a[i] = true;
        }
    }

    repair_connectivity(g, &mut in_a);

    let a = (0..n).filter(|&i| in_a[i]).collect();
    let b = (0..n).filter(|&i| !in_a[i]).collect();
    Ok((a, b))
}

/// Moves every component of a side except its largest to the other side.
/// Since the whole graph is connected, a moved component always touches the
/// receiving side, so two passes leave both sides connected.
fn repair_connectivity(g: &SparseGraph, in_a: &mut [bool]) {
    for side in [true, false] {
        let members: Vec<usize> = (0..in_a.len()).filter(|&i| in_a[i] == side).collect();
        let sub = g.induced_subgraph(&members);
        let (count, labels) = sub.component_labels();
        if count <= 1 {
            continue;
        }
        let mut sizes = vec![0usize; count];
        labels.iter().for_each(|&l| sizes[l] += 1);
        // Largest component stays; ties keep the one with the lowest vertex.
        let keep = (0..count).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        for (k, &v) in members.iter().enumerate() {
            if labels[k] != keep {
                in_a[v] = !side;
            }
        }
    }
}
