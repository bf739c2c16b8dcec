//! Graph-context encodings `φ` and evidence-aware encodings `z = [φ | η]`.
//!
//! Block layout of `φ` for `d` features, in order:
//! `x | log(1 + deg) | h1 | h2 | |x - h1| | |h1 - h2|`, width `5d + 1`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evidence::{EvidenceKind, EvidenceMatrix};
use crate::graph::{
    degrees, propagate_two_hop, row_normalize, Adjacency, AttributedGraph, TopologyChoice,
};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEncoding {
    pub phi: DenseMatrix,
    pub z: DenseMatrix,
    pub topology: TopologyChoice,
    pub evidence_kinds: Vec<EvidenceKind>,
}

impl NodeEncoding {
    pub fn new(
        graph: &AttributedGraph,
        topology: TopologyChoice,
        evidence: &EvidenceMatrix,
    ) -> Result<Self> {
        let phi = graph_context_encoding(graph, topology)?;
        let z = evidence_aware_encoding(&phi, evidence)?;
        Ok(Self {
            phi,
            z,
            topology,
            evidence_kinds: evidence.kinds().to_vec(),
        })
    }

    pub fn layout(&self) -> Vec<Block> {
        let d = (self.phi.cols() - 1) / 5;
        block_layout(d, &self.evidence_kinds)
    }
}

pub fn phi_width(d: usize) -> usize {
    5 * d + 1
}

pub fn graph_context_encoding(
    graph: &AttributedGraph,
    topology: TopologyChoice,
) -> Result<DenseMatrix> {
    context_encoding(graph.topology(topology)?, graph.features())
}

/// `φ` for an arbitrary adjacency over the rows of `x`.
pub fn context_encoding(adj: &Adjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    if adj.n_nodes() != x.rows() {
        return Err(Error::Shape(format!(
            "adjacency has {} nodes, features have {} rows",
            adj.n_nodes(),
            x.rows()
        )));
    }
    let norm = row_normalize(&adj.to_weighted());
    let (h1, h2) = propagate_two_hop(&norm, x)?;
    let deg = degrees(adj);
    let d = x.cols();
    let mut phi = DenseMatrix::zeros(x.rows(), phi_width(d));
    for i in 0..x.rows() {
        let (xi, h1i, h2i) = (x.row(i), h1.row(i), h2.row(i));
        let out = phi.row_mut(i);
        out[..d].copy_from_slice(xi);
        out[d] = (deg[i] as f64).ln_1p();
        out[d + 1..2 * d + 1].copy_from_slice(h1i);
        out[2 * d + 1..3 * d + 1].copy_from_slice(h2i);
        for j in 0..d {
            out[3 * d + 1 + j] = (xi[j] - h1i[j]).abs();
            out[4 * d + 1 + j] = (h1i[j] - h2i[j]).abs();
        }
    }
    Ok(phi)
}

/// `z = [φ | η]`; returns `φ` unchanged when there is no evidence.
pub fn evidence_aware_encoding(phi: &DenseMatrix, evidence: &EvidenceMatrix) -> Result<DenseMatrix> {
    let eta = evidence.values();
    if eta.rows() != phi.rows() {
        return Err(Error::Shape(format!(
            "encoding has {} rows, evidence has {}",
            phi.rows(),
            eta.rows()
        )));
    }
    if eta.cols() == 0 {
        return Ok(phi.clone());
    }
    phi.hconcat(eta)
}

/// A named, contiguous column range of an encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub width: usize,
}

pub fn block_layout(d: usize, kinds: &[EvidenceKind]) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut push = |name: String, width: usize| {
        blocks.push(Block { name, start, width });
        start += width;
    };
    for (name, width) in [
        ("x", d),
        ("log_degree", 1),
        ("h1", d),
        ("h2", d),
        ("abs_x_minus_h1", d),
        ("abs_h1_minus_h2", d),
    ] {
        push(name.to_string(), width);
    }
    for k in kinds {
        push(format!("evidence:{k}"), 1);
    }
    blocks
}

/// Shape and block layout of an exported matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutDescriptor {
    pub rows: usize,
    pub cols: usize,
    pub blocks: Vec<Block>,
}

pub fn render_layout_descriptor(desc: &LayoutDescriptor) -> String {
    let mut out = String::new();
    writeln!(out, "# row-major little-endian f64").ok();
    writeln!(out, "rows {}", desc.rows).ok();
    writeln!(out, "cols {}", desc.cols).ok();
    for b in &desc.blocks {
        writeln!(out, "block {} {} {}", b.name, b.start, b.width).ok();
    }
    out
}

/// Parses the sidecar written by [`render_layout_descriptor`]. Blocks, when
/// present, must tile `0..cols` contiguously.
pub fn parse_layout_descriptor(text: &str) -> Result<LayoutDescriptor> {
    const SRC: &str = "layout descriptor";
    let mut rows = None;
    let mut cols = None;
    let mut blocks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(SRC, lineno + 1, format!("bad integer {s:?}")))
        };
        match parts.as_slice() {
            ["rows", v] => rows = Some(num(v)?),
            ["cols", v] => cols = Some(num(v)?),
            ["block", name, start, width] => blocks.push(Block {
                name: name.to_string(),
                start: num(start)?,
                width: num(width)?,
            }),
            _ => return Err(Error::parse(SRC, lineno + 1, "unrecognized line")),
        }
    }
    let rows = rows.ok_or_else(|| Error::parse(SRC, 0, "missing rows"))?;
    let cols = cols.ok_or_else(|| Error::parse(SRC, 0, "missing cols"))?;
    if !blocks.is_empty() {
        let mut next = 0usize;
        for b in &blocks {
            if b.start != next {
                return Err(Error::parse(SRC, 0, format!("block {} is not contiguous", b.name)));
            }
            next = next
                .checked_add(b.width)
                .ok_or_else(|| Error::parse(SRC, 0, "block width overflow"))?;
        }
        if next != cols {
            return Err(Error::parse(SRC, 0, "blocks do not cover all columns"));
        }
    }
    Ok(LayoutDescriptor { rows, cols, blocks })
}

pub fn matrix_to_bytes(m: &DenseMatrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn matrix_from_bytes(bytes: &[u8], rows: usize, cols: usize) -> Result<DenseMatrix> {
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Shape("matrix shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{} bytes for a {rows}x{cols} f64 matrix (expected {expected})",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

/// Writes `<stem>.bin` and `<stem>.layout` into `dir`.
pub fn export_encoding(dir: &Path, stem: &str, enc: &NodeEncoding) -> Result<()> {
    let bin = dir.join(format!("{stem}.bin"));
    std::fs::write(&bin, matrix_to_bytes(&enc.z)).map_err(|e| Error::io(&bin, e))?;
    let desc = LayoutDescriptor {
        rows: enc.z.rows(),
        cols: enc.z.cols(),
        blocks: enc.layout(),
    };
    let layout = dir.join(format!("{stem}.layout"));
    std::fs::write(&layout, render_layout_descriptor(&desc)).map_err(|e| Error::io(&layout, e))
}
