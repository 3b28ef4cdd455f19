use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BiomarkerGraph, Edge, GraphMode, GroupTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Graphml,
    Dot,
    Json,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::Graphml, ExportFormat::Dot, ExportFormat::Json];

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Graphml => "graphml",
            ExportFormat::Dot => "dot",
            ExportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graphml" => Ok(ExportFormat::Graphml),
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            _ => Err(Error::Config(format!("unknown export format {s:?}"))),
        }
    }
}

/// Nodes in lexicographic order with edges re-indexed and sorted to match.
fn canonical(g: &BiomarkerGraph) -> (Vec<&str>, Vec<Edge>) {
    let mut order: Vec<usize> = (0..g.nodes.len()).collect();
    order.sort_by(|&a, &b| g.nodes[a].cmp(&g.nodes[b]));
    let mut rank = vec![0; order.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (rank[e.i], rank[e.j]);
            Edge {
                i: a.min(b),
                j: a.max(b),
                w: e.w,
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.i, e.j));
    (order.iter().map(|&k| g.nodes[k].as_str()).collect(), edges)
}

fn weight(w: f64) -> String {
    format!("{w:.4}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonEdge {
    a: String,
    b: String,
    w: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGraph {
    nodes: Vec<String>,
    edges: Vec<JsonEdge>,
    alpha: f64,
    mode: GraphMode,
    group: GroupTag,
}

fn mode_str(m: GraphMode) -> &'static str {
    match m {
        GraphMode::Signed => "signed",
        GraphMode::Absolute => "absolute",
    }
}

/// Serializes `g` deterministically.
pub fn render(g: &BiomarkerGraph, format: ExportFormat) -> Result<String> {
    let (nodes, edges) = canonical(g);
    let mut out = String::new();
    match format {
        ExportFormat::Graphml => {
            out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
            out.push_str(
                "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
                 xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
                 xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns \
                 http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
            );
            out.push_str("  <key id=\"alpha\" for=\"graph\" attr.name=\"alpha\" attr.type=\"double\"/>\n");
            out.push_str("  <key id=\"mode\" for=\"graph\" attr.name=\"mode\" attr.type=\"string\"/>\n");
            out.push_str("  <key id=\"group\" for=\"graph\" attr.name=\"group\" attr.type=\"string\"/>\n");
            out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
            let _ = writeln!(out, "  <graph id=\"{}\" edgedefault=\"undirected\">", g.group.as_str());
            let _ = writeln!(out, "    <data key=\"alpha\">{}</data>", weight(g.alpha));
            let _ = writeln!(out, "    <data key=\"mode\">{}</data>", mode_str(g.mode));
            let _ = writeln!(out, "    <data key=\"group\">{}</data>", g.group.as_str());
            for n in &nodes {
                let _ = writeln!(out, "    <node id=\"{}\"/>", xml_escape(n));
            }
            for (k, e) in edges.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "    <edge id=\"e{k}\" source=\"{}\" target=\"{}\">\n      <data key=\"weight\">{}</data>\n    </edge>",
                    xml_escape(nodes[e.i]),
                    xml_escape(nodes[e.j]),
                    weight(e.w)
                );
            }
            out.push_str("  </graph>\n</graphml>\n");
        }
        ExportFormat::Dot => {
            let _ = writeln!(out, "graph \"{}\" {{", g.group.as_str());
            let _ = writeln!(
                out,
                "  graph [alpha=\"{}\", mode=\"{}\"];",
                weight(g.alpha),
                mode_str(g.mode)
            );
            for n in &nodes {
                let _ = writeln!(out, "  \"{}\";", dot_escape(n));
            }
            for e in &edges {
                let w = weight(e.w);
                let _ = writeln!(
                    out,
                    "  \"{}\" -- \"{}\" [label=\"{w}\", weight={w}];",
                    dot_escape(nodes[e.i]),
                    dot_escape(nodes[e.j])
                );
            }
            out.push_str("}\n");
        }
        ExportFormat::Json => {
            let doc = JsonGraph {
                nodes: nodes.iter().map(|n| n.to_string()).collect(),
                edges: edges
                    .iter()
                    .map(|e| JsonEdge {
                        a: nodes[e.i].to_string(),
                        b: nodes[e.j].to_string(),
                        w: weight(e.w).parse().expect("formatted float"),
                    })
                    .collect(),
                alpha: g.alpha,
                mode: g.mode,
                group: g.group,
            };
            out = serde_json::to_string_pretty(&doc)?;
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn export(g: &BiomarkerGraph, format: ExportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render(g, format)?).map_err(|e| Error::io(path, e))
}

/// Reads the JSON export format back into a graph.
pub fn import_json(text: &str) -> Result<BiomarkerGraph> {
    let doc: JsonGraph = serde_json::from_str(text)?;
    let index = |name: &str| {
        doc.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidData(format!("edge endpoint {name:?} is not a node")))
    };
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        let (a, b) = (index(&e.a)?, index(&e.b)?);
        if a == b {
            return Err(Error::InvalidData(format!("self-loop on {:?}", e.a)));
        }
        edges.push(Edge {
            i: a.min(b),
            j: a.max(b),
            w: e.w,
        });
    }
    edges.sort_by_key(|e| (e.i, e.j));
    let g = BiomarkerGraph {
        nodes: doc.nodes,
        edges,
        alpha: doc.alpha,
        mode: doc.mode,
        group: doc.group,
    };
    g.validate_with_slack(5e-5)?;
    Ok(g)
}
