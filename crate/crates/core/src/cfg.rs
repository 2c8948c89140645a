//! Statement-level control-flow graphs.
//!
//! One node per simple statement, one `branch` node per `if`/`elif`
//! condition, one `loop_head` per `for` header or `while` condition, one
//! `return` node per return, plus `entry` and `exit`. Node ids are 8 hex
//! characters derived from (function, kind, span, ordinal) and are stable
//! across rebuilds of the same source.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::lang::ast::{Else, FunctionDef, Stmt, StmtKind};
use crate::lang::{AstUnit, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entry,
    Exit,
    Statement,
    Branch,
    LoopHead,
    Return,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Entry => "entry",
            NodeKind::Exit => "exit",
            NodeKind::Statement => "statement",
            NodeKind::Branch => "branch",
            NodeKind::LoopHead => "loop_head",
            NodeKind::Return => "return",
        }
    }

    /// Whether steps at this node carry a branch decision.
    pub fn is_decision(self) -> bool {
        matches!(self, NodeKind::Branch | NodeKind::LoopHead)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Seq,
    True,
    False,
    LoopBack,
    LoopExit,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Seq => "seq",
            EdgeKind::True => "true",
            EdgeKind::False => "false",
            EdgeKind::LoopBack => "loop_back",
            EdgeKind::LoopExit => "loop_exit",
        }
    }

    /// The decision an edge leaving a branch or loop head stands for.
    pub fn decision(self) -> Option<bool> {
        match self {
            EdgeKind::True => Some(true),
            EdgeKind::False | EdgeKind::LoopExit => Some(false),
            _ => None,
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgNode {
    pub id: String,
    pub kind: NodeKind,
    pub span: Span,
    pub label: String,
    /// Creation order within the function.
    pub ordinal: u32,
    /// No path from entry reaches this node.
    pub dead: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfgEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub head: String,
    /// Every node nested inside the loop body.
    pub body: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub function: String,
    pub nodes: Vec<CfgNode>,
    pub edges: Vec<CfgEdge>,
    pub entry: String,
    pub exit: String,
    pub loops: Vec<LoopInfo>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Outcome of checking one trace transition against the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("function '{0}' is not defined")]
pub struct UnknownFunction(pub String);

pub fn build_cfg(unit: &AstUnit, function: &str) -> Result<Cfg, UnknownFunction> {
    let func = unit.function(function).ok_or_else(|| UnknownFunction(function.to_string()))?;
    Ok(Builder::new(unit, func).finish())
}

/// Builds one graph per function, in definition order.
pub fn build_all(unit: &AstUnit) -> Vec<Cfg> {
    unit.functions.iter().map(|f| Builder::new(unit, f).finish()).collect()
}

/// Pending edge: (source node index, kind), target not yet known.
type Dangling = Vec<(usize, EdgeKind)>;

struct Builder<'a> {
    unit: &'a AstUnit,
    func: &'a FunctionDef,
    nodes: Vec<(NodeKind, Span, String)>,
    edges: Vec<(usize, usize, EdgeKind)>,
    loops: Vec<(usize, Vec<usize>)>,
    /// Innermost-last stack of (head, pending break edges).
    loop_stack: Vec<(usize, Dangling)>,
    exit: usize,
}

impl<'a> Builder<'a> {
    fn new(unit: &'a AstUnit, func: &'a FunctionDef) -> Self {
        let mut b = Builder { unit, func, nodes: Vec::new(), edges: Vec::new(), loops: Vec::new(), loop_stack: Vec::new(), exit: 0 };
        let def_line = Span::line(func.span.start);
        b.add(NodeKind::Entry, def_line, format!("entry {}({})", func.name, func.params.join(", ")));
        b.exit = b.add(NodeKind::Exit, def_line, "exit".into());
        b
    }

    fn add(&mut self, kind: NodeKind, span: Span, label: String) -> usize {
        self.nodes.push((kind, span, label));
        self.nodes.len() - 1
    }

    fn connect(&mut self, pending: Dangling, to: usize) {
        for (from, kind) in pending {
            self.edges.push((from, to, kind));
        }
    }

    fn block(&mut self, stmts: &[Stmt], mut pending: Dangling) -> Dangling {
        for s in stmts {
            pending = self.stmt(s, pending);
        }
        pending
    }

    fn stmt_node(&mut self, kind: NodeKind, s: &Stmt) -> usize {
        let span = s.step_span();
        let label = self.unit.excerpt(span);
        self.add(kind, span, label)
    }

    fn stmt(&mut self, s: &Stmt, pending: Dangling) -> Dangling {
        match &s.kind {
            StmtKind::If { body, orelse, .. } => {
                let n = self.stmt_node(NodeKind::Branch, s);
                self.connect(pending, n);
                let mut out = self.block(body, vec![(n, EdgeKind::True)]);
                match orelse {
                    Else::None => out.push((n, EdgeKind::False)),
                    Else::Elif(inner) => out.extend(self.stmt(inner, vec![(n, EdgeKind::False)])),
                    Else::Block(b) => out.extend(self.block(b, vec![(n, EdgeKind::False)])),
                }
                out
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } => {
                let head = self.stmt_node(NodeKind::LoopHead, s);
                self.connect(pending, head);
                self.loop_stack.push((head, Vec::new()));
                let first_body = self.nodes.len();
                let tail = self.block(body, vec![(head, EdgeKind::True)]);
                for (from, kind) in tail {
                    let kind = if kind == EdgeKind::Seq { EdgeKind::LoopBack } else { kind };
                    self.edges.push((from, head, kind));
                }
                let members = (first_body..self.nodes.len()).collect();
                self.loops.push((head, members));
                let (_, breaks) = self.loop_stack.pop().expect("pushed above");
                let mut out = breaks;
                out.push((head, EdgeKind::LoopExit));
                out
            }
            StmtKind::Return(_) => {
                let n = self.stmt_node(NodeKind::Return, s);
                self.connect(pending, n);
                self.edges.push((n, self.exit, EdgeKind::Seq));
                Vec::new()
            }
            StmtKind::Break => {
                let n = self.stmt_node(NodeKind::Statement, s);
                self.connect(pending, n);
                if let Some((_, breaks)) = self.loop_stack.last_mut() {
                    breaks.push((n, EdgeKind::Seq));
                }
                Vec::new()
            }
            StmtKind::Continue => {
                let n = self.stmt_node(NodeKind::Statement, s);
                self.connect(pending, n);
                if let Some(&(head, _)) = self.loop_stack.last() {
                    self.edges.push((n, head, EdgeKind::LoopBack));
                }
                Vec::new()
            }
            _ => {
                let n = self.stmt_node(NodeKind::Statement, s);
                self.connect(pending, n);
                vec![(n, EdgeKind::Seq)]
            }
        }
    }

    fn finish(mut self) -> Cfg {
        let tail = self.block(&self.func.body, vec![(0, EdgeKind::Seq)]);
        self.connect(tail, self.exit);

        let name = &self.func.name;
        let mut seen_ids = BTreeSet::new();
        let mut ordinals: BTreeMap<(NodeKind, Span), u32> = BTreeMap::new();
        let ids: Vec<String> = self
            .nodes
            .iter()
            .map(|(kind, span, _)| {
                let ord = ordinals.entry((*kind, *span)).or_insert(0);
                let key = format!("{name}\u{0}{}\u{0}{}\u{0}{}\u{0}{}", kind.as_str(), span.start, span.end, *ord);
                *ord += 1;
                let mut salt = 0u32;
                loop {
                    let h = if salt == 0 { fnv1a(key.as_bytes()) } else { fnv1a(format!("{key}\u{0}{salt}").as_bytes()) };
                    let id = format!("{:08x}", (h ^ (h >> 32)) as u32);
                    if seen_ids.insert(id.clone()) {
                        break id;
                    }
                    salt += 1;
                }
            })
            .collect();

        let mut reachable = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        reachable[0] = true;
        while let Some(n) = queue.pop_front() {
            for &(from, to, _) in &self.edges {
                if from == n && !reachable[to] {
                    reachable[to] = true;
                    queue.push_back(to);
                }
            }
        }

        let nodes: Vec<CfgNode> = self
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, (kind, span, label))| CfgNode {
                id: ids[i].clone(),
                kind,
                span,
                label,
                ordinal: i as u32,
                dead: !reachable[i],
            })
            .collect();
        let edges = self
            .edges
            .into_iter()
            .map(|(f, t, kind)| CfgEdge { from: ids[f].clone(), to: ids[t].clone(), kind })
            .collect();
        let loops = self
            .loops
            .into_iter()
            .map(|(head, body)| LoopInfo { head: ids[head].clone(), body: body.into_iter().map(|i| ids[i].clone()).collect() })
            .collect();
        let mut cfg = Cfg {
            function: name.clone(),
            entry: ids[0].clone(),
            exit: ids[1].clone(),
            nodes,
            edges,
            loops,
            index: BTreeMap::new(),
        };
        cfg.reindex();
        cfg
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Cfg {
    fn reindex(&mut self) {
        self.index = self.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
    }

    pub fn node(&self, id: &str) -> Option<&CfgNode> {
        match self.index.get(id) {
            Some(&i) => self.nodes.get(i),
            None => self.nodes.iter().find(|n| n.id == id),
        }
    }

    pub fn successors<'s>(&'s self, id: &'s str) -> impl Iterator<Item = &'s CfgEdge> + 's {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn predecessors<'s>(&'s self, id: &'s str) -> impl Iterator<Item = &'s CfgEdge> + 's {
        self.edges.iter().filter(move |e| e.to == id)
    }

    /// The outgoing edge of a branch or loop head standing for `decision`.
    pub fn decision_edge(&self, id: &str, decision: bool) -> Option<&CfgEdge> {
        self.edges.iter().find(|e| e.from == id && e.kind.decision() == Some(decision))
    }

    pub fn dead_nodes(&self) -> impl Iterator<Item = &CfgNode> {
        self.nodes.iter().filter(|n| n.dead)
    }

    /// The node whose span contains `line`: smallest span first, then
    /// earliest ordinal. Entry and exit never match.
    pub fn locate_node(&self, line: u32) -> Option<&str> {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.kind, NodeKind::Entry | NodeKind::Exit) && n.span.contains_line(line))
            .min_by_key(|n| (n.span.len(), n.ordinal))
            .map(|n| n.id.as_str())
    }

    /// The loop whose body contains `id`, innermost first.
    pub fn enclosing_loops(&self, id: &str) -> Vec<&LoopInfo> {
        let mut found: Vec<&LoopInfo> = self.loops.iter().filter(|l| l.body.contains(id)).collect();
        found.sort_by_key(|l| l.body.len());
        found
    }

    pub fn loop_info(&self, head: &str) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.head == head)
    }

    /// Feasible iff some path of one or more edges leads from `from` to `to`
    /// without passing through a branch, loop head or return node.
    pub fn is_step_feasible(&self, from: &str, to: &str) -> bool {
        self.step_feasibility(from, None, to) == Feasibility::Feasible
    }

    /// Like [`Cfg::is_step_feasible`], but when `from` is a branch or loop
    /// head and `decision` is given, the path must leave along the edge for
    /// that decision.
    pub fn step_feasibility(&self, from: &str, decision: Option<bool>, to: &str) -> Feasibility {
        let Some(src) = self.node(from) else {
            return Feasibility::Infeasible;
        };
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = self
            .successors(from)
            .filter(|e| match (src.kind.is_decision(), decision) {
                (true, Some(d)) => e.kind.decision() == Some(d),
                _ => true,
            })
            .map(|e| e.to.as_str())
            .collect();
        while let Some(n) = queue.pop_front() {
            if n == to {
                return Feasibility::Feasible;
            }
            if !seen.insert(n) {
                continue;
            }
            let Some(node) = self.node(n) else { continue };
            if node.kind != NodeKind::Statement {
                continue;
            }
            queue.extend(self.successors(n).map(|e| e.to.as_str()));
        }
        Feasibility::Infeasible
    }

    /// Graphviz digraph; byte-identical for identical graphs.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", escape(&self.function));
        out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Entry | NodeKind::Exit => "oval",
                NodeKind::Branch | NodeKind::LoopHead => "diamond",
                _ => "box",
            };
            let style = if n.dead { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{} {}\\n{}\", shape={}{}];",
                n.id,
                n.id,
                n.kind,
                escape(&n.label),
                shape,
                style
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", e.from, e.to, e.kind);
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// The statement behind a node, found by its step span.
pub fn stmt_for_node<'a>(func: &'a FunctionDef, node: &CfgNode) -> Option<&'a Stmt> {
    let mut found = None;
    crate::lang::ast::visit_stmts(&func.body, &mut |s| {
        if found.is_none() && s.step_span() == node.span && kind_of(s) == node.kind {
            found = Some(s);
        }
    });
    found
}

fn kind_of(s: &Stmt) -> NodeKind {
    match s.kind {
        StmtKind::If { .. } => NodeKind::Branch,
        StmtKind::While { .. } | StmtKind::For { .. } => NodeKind::LoopHead,
        StmtKind::Return(_) => NodeKind::Return,
        _ => NodeKind::Statement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn cfg_of(src: &str) -> Cfg {
        let unit = parse(src).unwrap();
        let name = unit.functions[0].name.clone();
        build_cfg(&unit, &name).unwrap()
    }

    fn kinds(cfg: &Cfg) -> Vec<NodeKind> {
        cfg.nodes.iter().map(|n| n.kind).collect()
    }

    #[test]
    fn straight_line() {
        let cfg = cfg_of("def f():\n    a = 1\n    return a\n");
        assert_eq!(kinds(&cfg), vec![NodeKind::Entry, NodeKind::Exit, NodeKind::Statement, NodeKind::Return]);
        assert_eq!(cfg.edges.len(), 3);
        assert!(cfg.edges.iter().all(|e| e.kind == EdgeKind::Seq));
        let ret = cfg.locate_node(3).unwrap();
        assert_eq!(cfg.node(ret).unwrap().kind, NodeKind::Return);
        assert!(cfg.nodes.iter().all(|n| n.id.len() == 8 && n.id.chars().all(|c| c.is_ascii_hexdigit())));
    }

    #[test]
    fn if_else_converges_before_return() {
        let cfg = cfg_of("def f(x):\n    if x > 0:\n        y = 1\n    else:\n        y = 2\n    return y\n");
        let branch = cfg.locate_node(2).unwrap();
        let kinds: Vec<_> = cfg.successors(branch).map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EdgeKind::True, EdgeKind::False]);
        let ret = cfg.locate_node(6).unwrap();
        assert_eq!(cfg.predecessors(ret).count(), 2);
        assert_eq!(cfg.edges.len(), 6);
    }

    #[test]
    fn loops_back_and_exit() {
        let src = "def f(n):\n    i = 0\n    while i < n:\n        if i == 5:\n            break\n        i += 1\n    return i\n";
        let cfg = cfg_of(src);
        let head = cfg.locate_node(3).unwrap();
        let tail = cfg.locate_node(6).unwrap();
        let brk = cfg.locate_node(5).unwrap();
        let ret = cfg.locate_node(7).unwrap();
        assert!(cfg.successors(tail).any(|e| e.to == head && e.kind == EdgeKind::LoopBack));
        assert!(cfg.successors(brk).any(|e| e.to == ret && e.kind == EdgeKind::Seq));
        assert!(cfg.successors(head).any(|e| e.to == ret && e.kind == EdgeKind::LoopExit));
        assert!(cfg.is_step_feasible(tail, head));
        assert!(!cfg.is_step_feasible(cfg.locate_node(2).unwrap(), tail));
        assert_eq!(cfg.loop_info(head).unwrap().body.len(), 3);
    }

    #[test]
    fn dead_code_is_flagged() {
        let cfg = cfg_of("def f():\n    return 1\n    x = 2\n");
        let dead: Vec<_> = cfg.dead_nodes().map(|n| n.span.start).collect();
        assert_eq!(dead, vec![3]);
    }

    #[test]
    fn dot_is_deterministic() {
        let src = "def f(x):\n    if x:\n        return 1\n    return 2\n";
        let a = cfg_of(src).to_dot();
        assert_eq!(a, cfg_of(src).to_dot());
        assert!(a.contains("[label=\"true\"]") && a.contains("[label=\"false\"]"));
    }
}
