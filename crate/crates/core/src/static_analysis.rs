//! Context-insensitive call-graph reachability and manifest differencing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::catalog::SensitiveCatalog;
use crate::ir::{ApiId, AppModel, AppPair, MethodId, Statement};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    /// Synthetic root standing for the platform.
    Root,
    Method(MethodId),
    Api(ApiId),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Root => f.write_str("<root>"),
            Node::Method(m) => write!(f, "{m}"),
            Node::Api(a) => write!(f, "api:{a}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<Node>,
    pub edges: BTreeSet<(Node, Node)>,
}

impl CallGraph {
    pub fn successors<'a>(&'a self, node: &'a Node) -> impl Iterator<Item = &'a Node> + 'a {
        self.edges
            .range((node.clone(), Node::Root)..)
            .take_while(move |(from, _)| from == node)
            .map(|(_, to)| to)
    }

    /// Nodes reachable from the synthetic root, root included.
    pub fn reachable(&self) -> BTreeSet<&Node> {
        let mut seen: BTreeSet<&Node> = BTreeSet::new();
        let Some(root) = self.nodes.get(&Node::Root) else {
            return seen;
        };
        let mut queue = VecDeque::from([root]);
        seen.insert(root);
        while let Some(n) = queue.pop_front() {
            for s in self.successors(n) {
                if seen.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph callgraph {\n");
        for n in &self.nodes {
            let shape = match n {
                Node::Root => "doublecircle",
                Node::Method(_) => "box",
                Node::Api(_) => "ellipse",
            };
            let _ = writeln!(out, "  \"{n}\" [shape={shape}];");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_call_graph(app: &AppModel) -> CallGraph {
    let mut g = CallGraph::default();
    g.nodes.insert(Node::Root);
    for id in app.methods.keys() {
        g.nodes.insert(Node::Method(id.clone()));
    }
    for root in app.root_methods() {
        g.edges.insert((Node::Root, Node::Method(root.clone())));
    }
    for body in app.methods.values() {
        let caller = Node::Method(body.id.clone());
        for stmt in &body.statements {
            let callee = match stmt {
                Statement::CallApi { api, .. } => Node::Api(api.clone()),
                Statement::CallMethod { callee, .. } => Node::Method(callee.clone()),
                _ => continue,
            };
            g.nodes.insert(callee.clone());
            g.edges.insert((caller.clone(), callee));
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticCallSet {
    pub app_id: String,
    pub apis: BTreeSet<ApiId>,
}

/// Catalogued APIs reachable from the synthetic root.
pub fn static_sensitive_set(app: &AppModel, catalog: &SensitiveCatalog) -> StaticCallSet {
    let graph = build_call_graph(app);
    let apis = graph
        .reachable()
        .into_iter()
        .filter_map(|n| match n {
            Node::Api(a) if catalog.contains(a.as_str()) => Some(a.clone()),
            _ => None,
        })
        .collect();
    StaticCallSet { app_id: app.id.clone(), apis }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDiff {
    pub added_permissions: BTreeSet<String>,
    pub removed_permissions: BTreeSet<String>,
    /// Metadata keys present in both versions with different values, or
    /// present in only one of them.
    pub changed_metadata: BTreeSet<String>,
}

impl ManifestDiff {
    pub fn is_empty(&self) -> bool {
        self.added_permissions.is_empty() && self.removed_permissions.is_empty() && self.changed_metadata.is_empty()
    }
}

fn diff_metadata(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> BTreeSet<String> {
    a.keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect()
}

/// Differences from the benign to the malign manifest.
pub fn diff_manifest(pair: &AppPair) -> ManifestDiff {
    let old = &pair.benign.manifest;
    let new = &pair.malign.manifest;
    ManifestDiff {
        added_permissions: new.permissions.difference(&old.permissions).cloned().collect(),
        removed_permissions: old.permissions.difference(&new.permissions).cloned().collect(),
        changed_metadata: diff_metadata(&old.metadata, &new.metadata),
    }
}
