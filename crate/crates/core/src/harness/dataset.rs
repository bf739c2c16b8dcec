//! On-disk dataset layout.
//!
//! ```text
//! relation_0.edges   base relation, one "u v" pair per line
//! relation_<r>.edges extra relations, numbered contiguously from 1
//! features.csv       N rows of d comma-separated values, no header
//!   or features.bin + features.shape (row-major little-endian f64, "rows N" / "cols d")
//! labels.txt         one of 0, 1 or ? per node
//! splits.txt         optional; one of train, val, test or - per node
//! task.txt           optional free-text task description
//! ```
//! Blank lines and lines starting with `#` are ignored in every text file.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{matrix_from_bytes, parse_layout_descriptor, render_layout_descriptor, LayoutDescriptor};
use crate::error::{Error, Result};
use crate::graph::{build_graph, AttributedGraph, GraphInput, Label, Split, SplitSets};
use crate::matrix::DenseMatrix;

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_edge_list(text: &str, source: &str) -> Result<Vec<(usize, usize)>> {
    content_lines(text)
        .map(|(line, l)| {
            let mut parts = l.split_whitespace();
            let mut id = || -> Result<usize> {
                let tok = parts
                    .next()
                    .ok_or_else(|| Error::parse(source, line, "expected two node ids"))?;
                tok.parse()
                    .map_err(|_| Error::parse(source, line, format!("bad node id {tok:?}")))
            };
            let (u, v) = (id()?, id()?);
            if parts.next().is_some() {
                return Err(Error::parse(source, line, "expected two node ids"));
            }
            Ok((u, v))
        })
        .collect()
}

pub fn parse_features_csv(text: &str, source: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in content_lines(text) {
        let row = l
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(source, line, format!("bad number {tok:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(source, line, format!("non-finite value {tok:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    source,
                    line,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

/// Decodes `features.bin` given the text of its shape sidecar.
pub fn parse_features_bin(bytes: &[u8], shape_text: &str) -> Result<DenseMatrix> {
    let shape = parse_layout_descriptor(shape_text)?;
    let m = matrix_from_bytes(bytes, shape.rows, shape.cols)?;
    if let Some((row, col)) = m.first_non_finite() {
        return Err(Error::NonFinite { row, col });
    }
    Ok(m)
}

pub fn parse_labels(text: &str, source: &str) -> Result<Vec<Option<Label>>> {
    content_lines(text)
        .map(|(line, l)| match l {
            "0" => Ok(Some(Label::Normal)),
            "1" => Ok(Some(Label::Anomaly)),
            "?" => Ok(None),
            other => Err(Error::parse(source, line, format!("label must be 0, 1 or ?, got {other:?}"))),
        })
        .collect()
}

pub fn parse_splits(text: &str, source: &str) -> Result<Vec<Option<Split>>> {
    content_lines(text)
        .map(|(line, l)| match l {
            "train" => Ok(Some(Split::Train)),
            "val" => Ok(Some(Split::Val)),
            "test" => Ok(Some(Split::Test)),
            "-" => Ok(None),
            other => Err(Error::parse(source, line, format!("unknown split {other:?}"))),
        })
        .collect()
}

pub fn splits_to_sets(splits: &[Option<Split>]) -> SplitSets {
    let mut sets = SplitSets::default();
    for (i, s) in splits.iter().enumerate() {
        match s {
            Some(Split::Train) => sets.train.push(i),
            Some(Split::Val) => sets.val.push(i),
            Some(Split::Test) => sets.test.push(i),
            None => {}
        }
    }
    sets
}

/// Per class: `max(1, floor(n_c * train_ratio))` training nodes (capped at
/// `n_c`), then `ceil(rest * val_share)` validation nodes; the remainder is
/// test. Every output list is sorted.
pub fn stratified_split(
    labels: &[Option<Label>],
    train_ratio: f64,
    val_share: f64,
    seed: u64,
) -> SplitSets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = SplitSets::default();
    for class in [Label::Normal, Label::Anomaly] {
        let mut ids: Vec<usize> = (0..labels.len())
            .filter(|&i| labels[i] == Some(class))
            .collect();
        if ids.is_empty() {
            continue;
        }
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_train = ((n as f64 * train_ratio).floor() as usize).max(1).min(n);
        let rest = n - n_train;
        let n_val = ((rest as f64 * val_share).ceil() as usize).min(rest);
        sets.train.extend_from_slice(&ids[..n_train]);
        sets.val.extend_from_slice(&ids[n_train..n_train + n_val]);
        sets.test.extend_from_slice(&ids[n_train + n_val..]);
    }
    sets.train.sort_unstable();
    sets.val.sort_unstable();
    sets.test.sort_unstable();
    sets
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: AttributedGraph,
    pub task_text: Option<String>,
    /// The split came from `splits.txt` rather than sampling.
    pub split_from_file: bool,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a dataset directory. Without `splits.txt` the labeled nodes are
/// split with [`stratified_split`].
pub fn load_dataset(dir: &Path, train_ratio: f64, val_share: f64, seed: u64) -> Result<LoadedDataset> {
    let labels_path = dir.join("labels.txt");
    let labels = parse_labels(&read_text(&labels_path)?, &labels_path.display().to_string())?;
    let n = labels.len();

    let csv = dir.join("features.csv");
    let bin = dir.join("features.bin");
    let features = if csv.exists() {
        parse_features_csv(&read_text(&csv)?, &csv.display().to_string())?
    } else if bin.exists() {
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        parse_features_bin(&bytes, &read_text(&dir.join("features.shape"))?)?
    } else {
        return Err(Error::io(
            &csv,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no features.csv or features.bin"),
        ));
    };
    if features.rows() != n {
        return Err(Error::Shape(format!(
            "{} feature rows but {n} labels",
            features.rows()
        )));
    }

    let mut edge_lists = Vec::new();
    loop {
        let path = dir.join(format!("relation_{}.edges", edge_lists.len()));
        if !path.exists() {
            break;
        }
        let edges = parse_edge_list(&read_text(&path)?, &path.display().to_string())?;
        let loops = edges.iter().filter(|(u, v)| u == v).count();
        if loops > 0 {
            log::warn!("{}: dropping {loops} self-loops", path.display());
        }
        edge_lists.push(edges);
    }
    if edge_lists.is_empty() {
        return Err(Error::io(
            &dir.join("relation_0.edges"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "base relation missing"),
        ));
    }

    let splits_path = dir.join("splits.txt");
    let split_from_file = splits_path.exists();
    let splits = if split_from_file {
        let s = parse_splits(&read_text(&splits_path)?, &splits_path.display().to_string())?;
        if s.len() != n {
            return Err(Error::Shape(format!("{} split lines but {n} labels", s.len())));
        }
        splits_to_sets(&s)
    } else {
        stratified_split(&labels, train_ratio, val_share, seed)
    };

    let task_path = dir.join("task.txt");
    let task_text = if task_path.exists() {
        Some(read_text(&task_path)?)
    } else {
        None
    };
    let graph = build_graph(GraphInput {
        n_nodes: n,
        edge_lists,
        features,
        labels,
        splits,
    })?;
    Ok(LoadedDataset {
        graph,
        task_text,
        split_from_file,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

/// Writes `graph` in the dataset layout, including its split.
pub fn write_dataset(
    dir: &Path,
    graph: &AttributedGraph,
    task_text: Option<&str>,
    format: FeatureFormat,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    for (r, adj) in graph.relations().iter().enumerate() {
        let body: String = adj.undirected_edges().map(|(u, v)| format!("{u} {v}\n")).collect();
        write(&format!("relation_{r}.edges"), body.as_bytes())?;
    }
    let x = graph.features();
    match format {
        FeatureFormat::Csv => {
            let mut body = String::new();
            for i in 0..x.rows() {
                let row: Vec<String> = x.row(i).iter().map(|v| format!("{v:?}")).collect();
                body.push_str(&row.join(","));
                body.push('\n');
            }
            write("features.csv", body.as_bytes())?;
        }
        FeatureFormat::Binary => {
            write("features.bin", &crate::encoding::matrix_to_bytes(x))?;
            let shape = LayoutDescriptor {
                rows: x.rows(),
                cols: x.cols(),
                blocks: Vec::new(),
            };
            write("features.shape", render_layout_descriptor(&shape).as_bytes())?;
        }
    }
    let labels: String = graph
        .labels()
        .iter()
        .map(|l| match l {
            Some(Label::Normal) => "0\n",
            Some(Label::Anomaly) => "1\n",
            None => "?\n",
        })
        .collect();
    write("labels.txt", labels.as_bytes())?;
    let splits: String = graph
        .splits()
        .iter()
        .map(|s| format!("{}\n", s.map_or("-", |s| s.as_str())))
        .collect();
    write("splits.txt", splits.as_bytes())?;
    if let Some(t) = task_text {
        write("task.txt", t.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_parsing() {
        let e = parse_edge_list("# header\n0 1\n\n2\t3\n", "t").unwrap();
        assert_eq!(e, vec![(0, 1), (2, 3)]);
        assert!(parse_edge_list("0\n", "t").is_err());
        assert!(parse_edge_list("0 1 2\n", "t").is_err());
        assert!(parse_edge_list("0 -1\n", "t").is_err());
    }

    #[test]
    fn csv_parsing() {
        let m = parse_features_csv("1,2.5\n-3, 4e2\n", "t").unwrap();
        assert_eq!(m.row(1), &[-3.0, 400.0]);
        assert!(parse_features_csv("1,2\n3\n", "t").is_err());
        assert!(parse_features_csv("1,NaN\n", "t").is_err());
        assert!(parse_features_csv("1,x\n", "t").is_err());
    }

    #[test]
    fn label_and_split_parsing() {
        assert_eq!(
            parse_labels("0\n1\n?\n", "t").unwrap(),
            vec![Some(Label::Normal), Some(Label::Anomaly), None]
        );
        assert!(parse_labels("2\n", "t").is_err());
        assert_eq!(
            parse_splits("train\n-\ntest\n", "t").unwrap(),
            vec![Some(Split::Train), None, Some(Split::Test)]
        );
        assert!(parse_splits("holdout\n", "t").is_err());
    }

    #[test]
    fn one_percent_of_5000() {
        let labels: Vec<Option<Label>> = (0..5000)
            .map(|i| Some(Label::from_bool(i % 10 == 0)))
            .collect();
        let s = stratified_split(&labels, 0.01, 0.5, 3);
        assert_eq!(s.train.len(), 50);
        let anomalies = s.train.iter().filter(|&&i| i % 10 == 0).count();
        assert_eq!(anomalies, 5);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 5000);
    }

    #[test]
    fn tiny_class_gets_one_training_node() {
        let labels = vec![Some(Label::Anomaly), Some(Label::Normal), Some(Label::Normal), None];
        let s = stratified_split(&labels, 0.01, 0.5, 0);
        assert_eq!(s.train.len(), 2);
        assert!(s.train.contains(&0));
        assert_eq!(s.val.len() + s.test.len(), 1);
    }

    #[test]
    fn binary_features_checked() {
        let shape = "rows 1\ncols 2\n";
        let bytes: Vec<u8> = [1.5f64, -2.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(parse_features_bin(&bytes, shape).unwrap().row(0), &[1.5, -2.0]);
        assert!(parse_features_bin(&bytes[..8], shape).is_err());
        let nan: Vec<u8> = [f64::NAN, 0.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        assert!(parse_features_bin(&nan, shape).is_err());
    }
}
