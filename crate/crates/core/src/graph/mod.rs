//! Thresholded correlation graphs over biomarkers and the structural
//! statistics used to compare case and control networks.

mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::CorrelationMatrix;

pub use export::{export, import_json, render, ExportFormat};

/// The operating threshold on correlation edge weights.
pub const DEFAULT_ALPHA: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Keep `w >= alpha`; negative correlations never form edges.
    #[default]
    Signed,
    /// Keep `|w| >= alpha`.
    Absolute,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(GraphMode::Signed),
            "absolute" => Ok(GraphMode::Absolute),
            _ => Err(Error::Config(format!("unknown graph mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    Combined,
    Case,
    Control,
}

impl GroupTag {
    pub const ALL: [GroupTag; 3] = [GroupTag::Combined, GroupTag::Case, GroupTag::Control];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::Combined => "combined",
            GroupTag::Case => "case",
            GroupTag::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerGraph {
    pub nodes: Vec<String>,
    /// `i < j`, sorted by `(i, j)`.
    pub edges: Vec<Edge>,
    pub alpha: f64,
    pub mode: GraphMode,
    pub group: GroupTag,
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

impl BiomarkerGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.i] += 1;
            d[e.j] += 1;
        }
        d
    }

    pub fn degree_of(&self, name: &str) -> Option<usize> {
        let k = self.nodes.iter().position(|n| n == name)?;
        Some(self.edges.iter().filter(|e| e.i == k || e.j == k).count())
    }

    /// Edges keyed by their endpoint names in lexicographic order.
    pub fn named_edges(&self) -> BTreeMap<(String, String), f64> {
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (&self.nodes[e.i], &self.nodes[e.j]);
                let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                (key, e.w)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_slack(0.0)
    }

    /// As [`validate`](Self::validate), letting weights fall short of alpha
    /// by `slack` (exported weights are rounded).
    pub fn validate_with_slack(&self, slack: f64) -> Result<()> {
        check_alpha(self.alpha)?;
        let unique: BTreeSet<&String> = self.nodes.iter().collect();
        if unique.len() != self.nodes.len() {
            return Err(Error::InvalidData("graph has duplicate node names".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.i >= e.j || e.j >= self.nodes.len() {
                return Err(Error::InvalidData(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidData(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
            let kept = match self.mode {
                GraphMode::Signed => e.w >= self.alpha - slack,
                GraphMode::Absolute => e.w.abs() >= self.alpha - slack,
            };
            if !kept || !e.w.is_finite() {
                return Err(Error::InvalidData(format!("edge weight {} fails threshold {}", e.w, self.alpha)));
            }
        }
        Ok(())
    }
}

/// Keeps every off-diagonal pair whose weight reaches `alpha`.
pub fn build_graph(corr: &CorrelationMatrix, alpha: f64, mode: GraphMode, group: GroupTag) -> Result<BiomarkerGraph> {
    check_alpha(alpha)?;
    corr.validate()?;
    let p = corr.len();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let w = corr.r[[i, j]];
            let kept = match mode {
                GraphMode::Signed => w >= alpha,
                GraphMode::Absolute => w.abs() >= alpha,
            };
            if kept {
                edges.push(Edge { i, j, w });
            }
        }
    }
    Ok(BiomarkerGraph {
        nodes: corr.names.clone(),
        edges,
        alpha,
        mode,
        group,
    })
}

/// Drops nodes without edges, keeping the order of the rest.
pub fn prune_isolated(g: &BiomarkerGraph) -> BiomarkerGraph {
    let deg = g.degrees();
    let mut remap = vec![usize::MAX; g.nodes.len()];
    let mut nodes = Vec::new();
    for (k, name) in g.nodes.iter().enumerate() {
        if deg[k] > 0 {
            remap[k] = nodes.len();
            nodes.push(name.clone());
        }
    }
    BiomarkerGraph {
        nodes,
        edges: g
            .edges
            .iter()
            .map(|e| Edge {
                i: remap[e.i],
                j: remap[e.j],
                w: e.w,
            })
            .collect(),
        alpha: g.alpha,
        mode: g.mode,
        group: g.group,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    /// Sorted node indices per component.
    pub components: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
}

impl ComponentSet {
    pub fn names(&self, g: &BiomarkerGraph) -> Vec<Vec<String>> {
        self.components
            .iter()
            .map(|c| c.iter().map(|&k| g.nodes[k].clone()).collect())
            .collect()
    }
}

/// Components of the nodes that have at least one edge, largest first;
/// equal sizes are ordered by their smallest member.
pub fn connected_components(g: &BiomarkerGraph) -> ComponentSet {
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &g.edges {
        adj[e.i].push(e.j);
        adj[e.j].push(e.i);
    }
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] || adj[start].is_empty() {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(v) = stack.pop() {
            members.push(v);
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let sizes = components.iter().map(Vec::len).collect();
    ComponentSet { components, sizes }
}

/// Histogram of node degrees.
pub fn degree_distribution(g: &BiomarkerGraph) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for d in g.degrees() {
        *h.entry(d).or_insert(0) += 1;
    }
    h
}

fn check_comparable(case: &BiomarkerGraph, control: &BiomarkerGraph) -> Result<()> {
    if case.alpha != control.alpha || case.mode != control.mode {
        return Err(Error::GraphMismatch(format!(
            "alpha/mode differ: {} {:?} vs {} {:?}",
            case.alpha, case.mode, control.alpha, control.mode
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub name: String,
    pub degree_case: usize,
    pub degree_control: usize,
    pub present_only_in_case: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeTable {
    pub rows: Vec<DegreeRow>,
}

impl DegreeTable {
    pub fn row(&self, name: &str) -> Option<&DegreeRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "degree_case", "degree_control", "present_only_in_case"])?;
        for r in &self.rows {
            w.write_record([
                r.name.clone(),
                r.degree_case.to_string(),
                r.degree_control.to_string(),
                r.present_only_in_case.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-name degrees in both graphs, over the union of their nodes in
/// lexicographic order. A name missing from a graph has degree 0 there.
pub fn degree_table(case: &BiomarkerGraph, control: &BiomarkerGraph) -> Result<DegreeTable> {
    check_comparable(case, control)?;
    let names: BTreeSet<&String> = case.nodes.iter().chain(&control.nodes).collect();
    let rows = names
        .into_iter()
        .map(|name| {
            let dc = case.degree_of(name).unwrap_or(0);
            let dn = control.degree_of(name).unwrap_or(0);
            DegreeRow {
                name: name.clone(),
                degree_case: dc,
                degree_control: dn,
                present_only_in_case: dc > 0 && dn == 0,
            }
        })
        .collect();
    Ok(DegreeTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEdge {
    pub a: String,
    pub b: String,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDelta {
    pub a: String,
    pub b: String,
    /// Control weight minus case weight.
    pub delta: f64,
}

/// How the control network differs from the case network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiff {
    /// In control but not in case.
    pub edges_gained: Vec<NamedEdge>,
    /// In case but not in control.
    pub edges_lost: Vec<NamedEdge>,
    pub weight_deltas: Vec<WeightDelta>,
    pub nodes_gained: Vec<String>,
    pub nodes_lost: Vec<String>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.edges_gained.is_empty()
            && self.edges_lost.is_empty()
            && self.nodes_gained.is_empty()
            && self.nodes_lost.is_empty()
            && self.weight_deltas.iter().all(|d| d.delta == 0.0)
    }
}

/// Compares graphs by node names. Node presence counts only nodes that
/// carry at least one edge.
pub fn diff_graphs(case: &BiomarkerGraph, control: &BiomarkerGraph) -> Result<GraphDiff> {
    check_comparable(case, control)?;
    let ec = case.named_edges();
    let en = control.named_edges();
    let named = |((a, b), w): (&(String, String), &f64)| NamedEdge {
        a: a.clone(),
        b: b.clone(),
        w: *w,
    };
    let edges_gained = en.iter().filter(|(k, _)| !ec.contains_key(*k)).map(named).collect();
    let edges_lost = ec.iter().filter(|(k, _)| !en.contains_key(*k)).map(named).collect();
    let weight_deltas = ec
        .iter()
        .filter_map(|(k, wc)| {
            en.get(k).map(|wn| WeightDelta {
                a: k.0.clone(),
                b: k.1.clone(),
                delta: wn - wc,
            })
        })
        .collect();
    let active = |g: &BiomarkerGraph| -> BTreeSet<String> {
        let d = g.degrees();
        g.nodes.iter().zip(d).filter(|(_, d)| *d > 0).map(|(n, _)| n.clone()).collect()
    };
    let (nc, nn) = (active(case), active(control));
    Ok(GraphDiff {
        edges_gained,
        edges_lost,
        weight_deltas,
        nodes_gained: nn.difference(&nc).cloned().collect(),
        nodes_lost: nc.difference(&nn).cloned().collect(),
    })
}
