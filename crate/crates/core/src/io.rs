//! Plain-text readers for the file formats accepted by the command line.
//!
//! All inputs are comma-separated. A first line whose leading field is not
//! numeric is taken as a header. Lines starting with `#` are skipped.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};
use crate::index_space::{Distance, IndexSpace};
use crate::mixing::DiscreteJoint;
use crate::spec_test::RegressionData;

type Row = Vec<String>;

/// Records as trimmed strings, with the header (if any) split off.
fn records<R: Read>(input: R) -> Result<(Option<Row>, Vec<Row>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let header = match rows.first() {
        Some(first) if first[0].parse::<f64>().is_err() && !is_infinity(&first[0]) => {
            Some(rows.remove(0))
        }
        _ => None,
    };
    Ok((header, rows))
}

fn is_infinity(field: &str) -> bool {
    matches!(
        field.to_ascii_lowercase().as_str(),
        "inf" | "infinity" | "+inf"
    )
}

fn number(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a number")))
}

fn index(field: &str, line: usize) -> Result<usize> {
    field.parse::<usize>().map_err(|_| {
        Error::Parse(format!(
            "line {line}: `{field}` is not a non-negative integer"
        ))
    })
}

/// Regression data with columns `y,z` or `y,z1,…,zd`.
pub fn read_regression<R: Read>(input: R) -> Result<RegressionData> {
    let (header, rows) = records(input)?;
    if let Some(h) = &header {
        if h.first().map(|s| s.as_str()) != Some("y") || h.len() < 2 {
            return Err(Error::Parse("header must be `y,z` or `y,z1,...,zd`".into()));
        }
    }
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| rows.first().map(Vec::len))
        .unwrap_or(0);
    if width < 2 {
        return Err(Error::Parse(
            "need a response column and at least one regressor".into(),
        ));
    }
    let mut y = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len() * (width - 1));
    for (k, row) in rows.iter().enumerate() {
        let line = k + 1 + usize::from(header.is_some());
        if row.len() != width {
            return Err(Error::Parse(format!(
                "line {line}: expected {width} fields, found {}",
                row.len()
            )));
        }
        y.push(number(&row[0], line)?);
        for field in &row[1..] {
            z.push(number(field, line)?);
        }
    }
    RegressionData::new(y, z, width - 1)
}

/// Square distance matrix; `inf` marks unreachable pairs.
pub fn read_distance_matrix<R: Read>(input: R) -> Result<IndexSpace> {
    let (_, rows) = records(input)?;
    let matrix = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .map(|field| {
                    if is_infinity(field) {
                        Ok(Distance::Unreachable)
                    } else {
                        Ok(Distance::Finite(number(field, k + 1)?))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSpace::from_matrix(matrix)
}

/// Undirected edge list `u,v` over nodes `0..n`. `n` defaults to one more
/// than the largest node mentioned.
pub fn read_edge_list<R: Read>(input: R, n: Option<usize>) -> Result<IndexSpace> {
    let (_, rows) = records(input)?;
    let edges = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            if row.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected `u,v`", k + 1)));
            }
            Ok((index(&row[0], k + 1)?, index(&row[1], k + 1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let nodes = n.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    IndexSpace::graph(nodes, &edges)
}

/// Rows `node,row_cluster,col_cluster`; nodes must be `0..n` in any order,
/// cluster labels are arbitrary strings.
pub fn read_clustering<R: Read>(input: R) -> Result<IndexSpace> {
    let (_, rows) = records(input)?;
    let n = rows.len();
    let mut cells = vec![None; n];
    let mut row_ids: HashMap<String, usize> = HashMap::new();
    let mut col_ids: HashMap<String, usize> = HashMap::new();
    for (k, row) in rows.iter().enumerate() {
        if row.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected `node,row_cluster,col_cluster`",
                k + 1
            )));
        }
        let node = index(&row[0], k + 1)?;
        if node >= n || cells[node].is_some() {
            return Err(Error::Parse(format!(
                "line {}: node {node} is repeated or outside 0..{n}",
                k + 1
            )));
        }
        let next = row_ids.len();
        let r = *row_ids.entry(row[1].clone()).or_insert(next);
        let next = col_ids.len();
        let c = *col_ids.entry(row[2].clone()).or_insert(next);
        cells[node] = Some((r, c));
    }
    let cells = cells
        .into_iter()
        .map(|c| c.expect("every node assigned"))
        .collect();
    IndexSpace::two_way_clustering(row_ids.len(), col_ids.len(), cells)
}

/// Integer lattice points, one per line.
pub fn read_lattice<R: Read>(input: R) -> Result<IndexSpace> {
    let (_, rows) = records(input)?;
    let coords = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .map(|field| {
                    field.parse::<i64>().map_err(|_| {
                        Error::Parse(format!("line {}: `{field}` is not an integer", k + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    IndexSpace::lattice(coords)
}

/// Joint probability table with rows indexed by `A` and columns by `Y`.
pub fn read_joint<R: Read>(input: R) -> Result<DiscreteJoint> {
    let (_, rows) = records(input)?;
    let pmf = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .map(|f| number(f, k + 1))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteJoint::new(pmf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_with_header() {
        let data =
            read_regression("y,z1,z2\n1,2,3\n4,5,7\n7,8,8\n1,0,2\n5,5,1\n2,1,1\n".as_bytes())
                .unwrap();
        assert_eq!(data.len(), 6);
        assert_eq!(data.dim(), 2);
        assert_eq!(&data.z()[..2], &[2.0, 3.0]);
    }

    #[test]
    fn regression_rejects_ragged_rows() {
        assert!(read_regression("y,z\n1,2\n3\n".as_bytes()).is_err());
        assert!(read_regression("y,z\n1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn distance_matrix_with_infinity() {
        let space = read_distance_matrix("0,1,inf\n1,0,inf\ninf,inf,0\n".as_bytes()).unwrap();
        assert_eq!(space.distance(0, 2).unwrap(), Distance::Unreachable);
        assert_eq!(space.distance(0, 1).unwrap(), Distance::Finite(1.0));
    }

    #[test]
    fn edge_list_and_clustering() {
        let graph = read_edge_list("u,v\n0,1\n1,2\n".as_bytes(), None).unwrap();
        assert_eq!(graph.len(), 3);
        assert_eq!(graph.distance(0, 2).unwrap(), Distance::Finite(2.0));
        let clusters = read_clustering(
            "node,row_cluster,col_cluster\n0,a,x\n1,a,y\n2,b,x\n3,b,y\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(clusters.len(), 4);
        assert_eq!(clusters.distance(0, 3).unwrap(), Distance::Unreachable);
        assert!(read_clustering("0,a,x\n0,b,y\n".as_bytes()).is_err());
    }

    #[test]
    fn lattice_and_joint() {
        let lattice = read_lattice("0,0\n0,1\n1,1\n".as_bytes()).unwrap();
        assert_eq!(lattice.distance(0, 2).unwrap(), Distance::Finite(1.0));
        let joint = read_joint("0.25,0.25\n0.25,0.25\n".as_bytes()).unwrap();
        assert_eq!(joint.shape(), (2, 2));
    }
}
