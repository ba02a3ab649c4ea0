//! Plain-text edge lists: a header line `N E`, then `E` lines `i j w` with
//! 0-based indices. Weights are written in shortest round-trip decimal form.

use std::io::{BufRead, Write};

use super::{build_graph, GraphError, SparseGraph};

pub fn write_edge_list<W: Write>(g: &SparseGraph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", g.n_vertices(), g.n_edges())?;
    for (i, j, w) in g.edges() {
        writeln!(out, "{i} {j} {w:?}")?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<SparseGraph, GraphError> {
    let mut lines = input
        .lines()
        .map(|l| l.map_err(|e| GraphError::Parse(e.to_string())))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')));

    let header = lines
        .next()
        .ok_or_else(|| GraphError::Parse("missing header".into()))??;
    let mut fields = header.split_whitespace();
    let n: usize = parse_field(fields.next(), "vertex count")?;
    let e: usize = parse_field(fields.next(), "edge count")?;

    let mut edges = Vec::with_capacity(e);
    for k in 0..e {
        let line = lines
            .next()
            .ok_or_else(|| GraphError::Parse(format!("expected {e} edges, found {k}")))??;
        let mut f = line.split_whitespace();
        let i = parse_field(f.next(), "edge source")?;
        let j = parse_field(f.next(), "edge target")?;
        let w = parse_field(f.next(), "edge weight")?;
        edges.push((i, j, w));
    }
    if let Some(extra) = lines.next() {
        return Err(GraphError::Parse(format!("trailing content: {:?}", extra?)));
    }
    build_graph(n, &edges)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, GraphError> {
    let s = field.ok_or_else(|| GraphError::Parse(format!("missing {what}")))?;
    s.parse()
        .map_err(|_| GraphError::Parse(format!("invalid {what}: {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = build_graph(4, &[(0, 1, 0.1), (1, 2, 1.0 / 3.0), (2, 3, 1e-300), (0, 3, 7.0)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn both_directions_accepted() {
        let text = "2 2\n0 1 0.5\n1 0 0.5\n";
        let g = read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let text = "2 2\n0 1 0.5\n1 0 0.25\n";
        assert!(matches!(
            read_edge_list(text.as_bytes()),
            Err(GraphError::ConflictingDuplicate { .. })
        ));
    }

    #[test]
    fn truncated_input_rejected() {
        assert!(read_edge_list("3 2\n0 1 1.0\n".as_bytes()).is_err());
        assert!(read_edge_list("".as_bytes()).is_err());
        assert!(read_edge_list("2 1\n0 1 abc\n".as_bytes()).is_err());
    }
}
