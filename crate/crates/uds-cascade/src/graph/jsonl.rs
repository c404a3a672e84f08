//! Graph JSONL: one schema header line, then one record per line.
//!
//! Header: `{"node_attrs": [...], "edge_attrs": [...]}`. Each record stores
//! tokens, POS, tree, semantic nodes/edges, and masked attributes. The
//! virtual root node is implicit; root edges keep the reserved `ROOT` id.
//! Records carrying `flags` (degenerate or invalid parser outputs) skip
//! strict validation on write and re-load.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    AnnotatedSentence, AttrValue, AttributeSchema, AttributeSet, NodeKind, SemEdge, SemNode,
    SemanticGraph,
};

/// An in-memory dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct UdsRecord {
    pub sent: AnnotatedSentence,
    pub graph: SemanticGraph,
    pub attrs: AttributeSet,
    pub flags: Vec<String>,
}

impl UdsRecord {
    pub fn new(sent: AnnotatedSentence, graph: SemanticGraph, attrs: AttributeSet) -> UdsRecord {
        UdsRecord {
            sent,
            graph,
            attrs,
            flags: Vec::new(),
        }
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        self.sent.validate()?;
        self.graph.validate(&self.sent)?;
        self.attrs.validate(&self.graph, schema)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRepr {
    id: String,
    kind: NodeKind,
    center: usize,
    span: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRepr {
    tokens: Vec<String>,
    pos: Vec<String>,
    heads: Vec<usize>,
    deprels: Vec<String>,
    nodes: Vec<NodeRepr>,
    edges: Vec<SemEdge>,
    #[serde(default)]
    node_attrs: BTreeMap<String, BTreeMap<String, AttrValue>>,
    #[serde(default)]
    edge_attrs: BTreeMap<String, BTreeMap<String, AttrValue>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    flags: Vec<String>,
}

impl From<&UdsRecord> for RecordRepr {
    fn from(r: &UdsRecord) -> RecordRepr {
        RecordRepr {
            tokens: r.sent.tokens.iter().map(|t| t.form.clone()).collect(),
            pos: r.sent.tokens.iter().map(|t| t.pos.clone()).collect(),
            heads: r.sent.heads.clone(),
            deprels: r.sent.deprels.clone(),
            nodes: r
                .graph
                .semantic_nodes()
                .map(|n| NodeRepr {
                    id: n.id.clone(),
                    kind: n.kind,
                    center: n.center.unwrap(),
                    span: n.span.as_ref().unwrap().iter().copied().collect(),
                })
                .collect(),
            edges: r.graph.edges.clone(),
            node_attrs: r.attrs.node_attrs.clone(),
            edge_attrs: r.attrs.edge_attrs.clone(),
            flags: r.flags.clone(),
        }
    }
}

impl RecordRepr {
    fn into_record(self, index: usize) -> Result<UdsRecord> {
        let err = |e: Error| Error::validation(format!("record {}: {}", index, e));
        let sent =
            AnnotatedSentence::new(self.tokens, self.pos, self.heads, self.deprels).map_err(err)?;
        let mut nodes = vec![SemNode::root()];
        for n in self.nodes {
            nodes.push(SemNode {
                id: n.id,
                kind: n.kind,
                center: Some(n.center),
                span: Some(n.span.into_iter().collect()),
            });
        }
        let graph = SemanticGraph {
            nodes,
            edges: self.edges,
        };
        let attrs = AttributeSet {
            node_attrs: self.node_attrs,
            edge_attrs: self.edge_attrs,
        };
        Ok(UdsRecord {
            sent,
            graph,
            attrs,
            flags: self.flags,
        })
    }
}

pub fn save_graphs(path: &Path, schema: &AttributeSchema, records: &[UdsRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graphs(&mut out, schema, records)
}

pub fn write_graphs<W: Write>(
    out: &mut W,
    schema: &AttributeSchema,
    records: &[UdsRecord],
) -> Result<()> {
    serde_json::to_writer(&mut *out, schema)?;
    out.write_all(b"\n")?;
    for (i, r) in records.iter().enumerate() {
        if r.flags.is_empty() {
            r.validate(schema)
                .map_err(|e| Error::validation(format!("record {}: {}", i, e)))?;
        }
        serde_json::to_writer(&mut *out, &RecordRepr::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_graphs(path: &Path) -> Result<(AttributeSchema, Vec<UdsRecord>)> {
    let file = BufReader::new(File::open(path)?);
    read_graphs(file)
}

pub fn read_graphs<R: BufRead>(input: R) -> Result<(AttributeSchema, Vec<UdsRecord>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::validation("empty graph file (missing schema header)"))??;
    let schema: AttributeSchema = serde_json::from_str(&header).map_err(|e| Error::Parse {
        line: 1,
        msg: format!("bad schema header: {}", e),
    })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let repr: RecordRepr = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        let record = repr.into_record(i)?;
        if record.flags.is_empty() {
            record
                .validate(&schema)
                .map_err(|e| Error::validation(format!("record {}: {}", i, e)))?;
        }
        records.push(record);
    }
    Ok((schema, records))
}
