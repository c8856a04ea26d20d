use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partially directed graph over indexed, named nodes. CPDAGs and DAGs are
/// both represented with this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedGraph {
    nodes: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    /// Stored with the smaller index first.
    undirected: BTreeSet<(usize, usize)>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl MixedGraph {
    pub fn empty(nodes: Vec<String>) -> Self {
        Self {
            nodes,
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
        }
    }

    pub fn complete_undirected(nodes: Vec<String>) -> Self {
        let p = nodes.len();
        let mut g = Self::empty(nodes);
        for i in 0..p {
            for j in (i + 1)..p {
                g.undirected.insert((i, j));
            }
        }
        g
    }

    /// A DAG given as directed edges; fails on self-loops, duplicates in both
    /// directions or cycles.
    pub fn from_dag(nodes: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(nodes);
        for &(a, b) in edges {
            g.check_node(a)?;
            g.check_node(b)?;
            if a == b {
                return Err(Error::Graph(format!("self-loop on node {a}")));
            }
            if g.directed.contains(&(b, a)) {
                return Err(Error::Graph(format!("edge {a}-{b} given in both directions")));
            }
            g.directed.insert((a, b));
        }
        if !g.is_acyclic() {
            return Err(Error::Graph("graph has a directed cycle".into()));
        }
        Ok(g)
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.nodes.len() {
            return Err(Error::Index {
                index: v,
                len: self.nodes.len(),
            });
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&ordered(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_undirected(a, b) || self.has_directed(a, b) || self.has_directed(b, a)
    }

    /// All nodes adjacent to `v`, ascending.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&u| u != v && self.adjacent(u, v))
            .collect()
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.undirected.insert(ordered(a, b));
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.undirected.remove(&ordered(a, b));
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
    }

    /// Turns the undirected edge `a − b` into `a → b`. Returns false if no
    /// such undirected edge exists.
    pub fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.undirected.remove(&ordered(a, b)) {
            self.directed.insert((a, b));
            true
        } else {
            false
        }
    }

    /// True if a directed path `from ⇝ to` of length ≥ 1 exists.
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.n_nodes()];
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            for &(a, b) in &self.directed {
                if a == v && !seen[b] {
                    if b == to {
                        return true;
                    }
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        let p = self.n_nodes();
        let mut indegree = vec![0usize; p];
        for &(_, b) in &self.directed {
            indegree[b] += 1;
        }
        let mut stack: Vec<usize> = (0..p).filter(|&v| indegree[v] == 0).collect();
        let mut visited = 0;
        while let Some(v) = stack.pop() {
            visited += 1;
            for &(a, b) in &self.directed {
                if a == v {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        stack.push(b);
                    }
                }
            }
        }
        visited == p
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.directed.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    /// Unordered adjacent pairs `(a, b)` with `a < b`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.undirected
            .iter()
            .copied()
            .chain(self.directed.iter().map(|&(a, b)| ordered(a, b)))
            .collect()
    }

    /// Graphviz text; undirected edges use `[dir=none]`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph {\n");
        for name in &self.nodes {
            out.push_str(&format!("  \"{name}\";\n"));
        }
        for &(a, b) in &self.directed {
            out.push_str(&format!("  \"{}\" -> \"{}\";\n", self.nodes[a], self.nodes[b]));
        }
        for &(a, b) in &self.undirected {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [dir=none];\n",
                self.nodes[a], self.nodes[b]
            ));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> GraphJson {
        let name = |i: usize| self.nodes[i].clone();
        GraphJson {
            nodes: self.nodes.clone(),
            directed: self.directed.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
            undirected: self.undirected.iter().map(|&(a, b)| [name(a), name(b)]).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let mut g = Self::empty(json.nodes.clone());
        let idx = |name: &str| {
            json.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Graph(format!("unknown node '{name}'")))
        };
        for [a, b] in &json.directed {
            g.directed.insert((idx(a)?, idx(b)?));
        }
        for [a, b] in &json.undirected {
            let (a, b) = (idx(a)?, idx(b)?);
            g.undirected.insert(ordered(a, b));
        }
        g.validate()?;
        Ok(g)
    }

    /// Checks the mixed-graph invariants.
    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.directed {
            if a == b {
                return Err(Error::Graph(format!("self-loop on {}", self.nodes[a])));
            }
            if self.directed.contains(&(b, a)) || self.undirected.contains(&ordered(a, b)) {
                return Err(Error::Graph(format!(
                    "pair {}-{} has conflicting edges",
                    self.nodes[a], self.nodes[b]
                )));
            }
        }
        if self.undirected.iter().any(|&(a, b)| a == b) {
            return Err(Error::Graph("undirected self-loop".into()));
        }
        if !self.is_acyclic() {
            return Err(Error::Graph("directed part has a cycle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    pub directed: Vec<[String; 2]>,
    pub undirected: Vec<[String; 2]>,
}

/// Conditioning sets that separated each removed pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepsetTable {
    sets: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SepsetTable {
    pub fn insert(&mut self, a: usize, b: usize, mut set: Vec<usize>) {
        set.sort_unstable();
        self.sets.insert(ordered(a, b), set);
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&[usize]> {
        self.sets.get(&ordered(a, b)).map(Vec::as_slice)
    }

    pub fn contains_pair(&self, a: usize, b: usize) -> bool {
        self.sets.contains_key(&ordered(a, b))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> {
        self.sets.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}
