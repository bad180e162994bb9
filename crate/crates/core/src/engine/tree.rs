//! Decision-tree data model, TOML loader and static validation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which codes an ask node offers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateRule {
    Pc,
    PcInChapter { chapter: String },
    Answer { node: u32 },
    PcMinusAnswer { node: u32 },
}

/// How a leaf computes the main-condition codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerdictRule {
    OnlyPc,
    PcInChapter { chapter: String },
    Answer { node: u32 },
    PathologicalPc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PredicateCall {
    pub name: String,
    pub args: Vec<String>,
}

impl fmt::Display for PredicateCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Predicate { predicate: PredicateCall, yes: u32, no: u32 },
    AskBinary { yes: u32, no: u32 },
    AskMulticode { candidates: CandidateRule, next: u32 },
    AskSingleCode { candidates: CandidateRule, next: u32 },
    Leaf { verdict: VerdictRule },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Predicate { .. } => "predicate",
            NodeKind::AskBinary { .. } => "ask_binary",
            NodeKind::AskMulticode { .. } => "ask_multicode",
            NodeKind::AskSingleCode { .. } => "ask_single_code",
            NodeKind::Leaf { .. } => "leaf",
        }
    }

    pub fn is_ask(&self) -> bool {
        matches!(self, NodeKind::AskBinary { .. } | NodeKind::AskMulticode { .. } | NodeKind::AskSingleCode { .. })
    }

    pub fn asks_for_codes(&self) -> bool {
        matches!(self, NodeKind::AskMulticode { .. } | NodeKind::AskSingleCode { .. })
    }

    /// Outgoing arcs with the branch they encode (`Some(true)` = YES).
    pub fn arcs(&self) -> Vec<(u32, Option<bool>)> {
        match self {
            NodeKind::Predicate { yes, no, .. } | NodeKind::AskBinary { yes, no } => {
                vec![(*yes, Some(true)), (*no, Some(false))]
            }
            NodeKind::AskMulticode { next, .. } | NodeKind::AskSingleCode { next, .. } => vec![(*next, None)],
            NodeKind::Leaf { .. } => vec![],
        }
    }

    pub fn arcs_mut(&mut self) -> Vec<&mut u32> {
        match self {
            NodeKind::Predicate { yes, no, .. } | NodeKind::AskBinary { yes, no } => vec![yes, no],
            NodeKind::AskMulticode { next, .. } | NodeKind::AskSingleCode { next, .. } => vec![next],
            NodeKind::Leaf { .. } => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: u32,
    pub message: String,
    pub provenance: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    root: u32,
    nodes: BTreeMap<u32, Node>,
}

#[derive(Debug, Error)]
pub enum TreeParseError {
    #[error("decision tree is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported decision tree version {0}")]
    Version(u32),
    #[error("node {id}: {reason}")]
    Node { id: u32, reason: String },
    #[error("duplicate node id {0}")]
    DuplicateId(u32),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    version: u32,
    root: u32,
    #[serde(rename = "node", default)]
    nodes: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u32,
    kind: String,
    #[serde(default)]
    message: String,
    predicate: Option<String>,
    #[serde(default)]
    args: Vec<String>,
    yes: Option<u32>,
    no: Option<u32>,
    next: Option<u32>,
    candidates: Option<CandidateRule>,
    verdict: Option<VerdictRule>,
    #[serde(default)]
    provenance: String,
}

impl RawNode {
    fn into_node(self) -> Result<Node, TreeParseError> {
        let id = self.id;
        let missing = |field: &str| TreeParseError::Node {
            id,
            reason: format!("{} node needs `{field}`", self.kind),
        };
        let kind = match self.kind.as_str() {
            "predicate" => NodeKind::Predicate {
                predicate: PredicateCall {
                    name: self.predicate.clone().ok_or_else(|| missing("predicate"))?,
                    args: self.args.clone(),
                },
                yes: self.yes.ok_or_else(|| missing("yes"))?,
                no: self.no.ok_or_else(|| missing("no"))?,
            },
            "ask_binary" => NodeKind::AskBinary {
                yes: self.yes.ok_or_else(|| missing("yes"))?,
                no: self.no.ok_or_else(|| missing("no"))?,
            },
            "ask_multicode" => NodeKind::AskMulticode {
                candidates: self.candidates.clone().ok_or_else(|| missing("candidates"))?,
                next: self.next.ok_or_else(|| missing("next"))?,
            },
            "ask_single_code" => NodeKind::AskSingleCode {
                candidates: self.candidates.clone().ok_or_else(|| missing("candidates"))?,
                next: self.next.ok_or_else(|| missing("next"))?,
            },
            "leaf" => NodeKind::Leaf {
                verdict: self.verdict.clone().ok_or_else(|| missing("verdict"))?,
            },
            other => {
                return Err(TreeParseError::Node {
                    id,
                    reason: format!("unknown node kind {other:?}"),
                })
            }
        };
        Ok(Node {
            id,
            message: self.message,
            provenance: self.provenance,
            kind,
        })
    }
}

impl DecisionTree {
    pub fn new(root: u32, nodes: impl IntoIterator<Item = Node>) -> Result<Self, TreeParseError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            let id = node.id;
            if map.insert(id, node).is_some() {
                return Err(TreeParseError::DuplicateId(id));
            }
        }
        Ok(DecisionTree { root, nodes: map })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TreeParseError> {
        let raw: RawTree = toml::from_str(text)?;
        if raw.version != 1 {
            return Err(TreeParseError::Version(raw.version));
        }
        let nodes = raw.nodes.into_iter().map(RawNode::into_node).collect::<Result<Vec<_>, _>>()?;
        Self::new(raw.root, nodes)
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn node(&self, id: u32) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn into_nodes(self) -> (u32, Vec<Node>) {
        (self.root, self.nodes.into_values().collect())
    }

    /// Ask nodes reachable from `from` (exclusive), breadth-first.
    pub(crate) fn reachable_asks(&self, from: u32) -> Vec<u32> {
        let mut seen = BTreeSet::from([from]);
        let mut queue: VecDeque<u32> = self.successors(from).collect();
        let mut out = Vec::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let Some(node) = self.node(id) else { continue };
            if node.kind.is_ask() {
                out.push(id);
            }
            queue.extend(node.kind.arcs().into_iter().map(|(t, _)| t));
        }
        out
    }

    fn successors(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        self.node(id).into_iter().flat_map(|n| n.kind.arcs().into_iter().map(|(t, _)| t))
    }
}

/// Argument shape of a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateArg {
    None,
    /// A chapter code such as `630-679`.
    Chapter,
    /// The id of a code-selection ask node on every path to the predicate.
    AskNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredicateSig {
    pub name: &'static str,
    pub arg: PredicateArg,
}

/// Closed predicate vocabulary understood by the engine.
pub const KNOWN_PREDICATES: &[PredicateSig] = &[
    PredicateSig { name: "pc_count_is_one", arg: PredicateArg::None },
    PredicateSig { name: "any_pc_in_chapter", arg: PredicateArg::Chapter },
    PredicateSig { name: "chapter_pc_count_is_one", arg: PredicateArg::Chapter },
    PredicateSig { name: "pathological_pc_count_is_one", arg: PredicateArg::None },
    PredicateSig { name: "has_relevant_surgery", arg: PredicateArg::None },
    PredicateSig { name: "has_selected_nonrelevant", arg: PredicateArg::None },
    PredicateSig { name: "answer_count_is_one", arg: PredicateArg::AskNode },
    PredicateSig { name: "answer_count_gt_one", arg: PredicateArg::AskNode },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeDefect {
    MissingRoot { root: u32 },
    DanglingArc { from: u32, to: u32 },
    IdenticalArcs { id: u32 },
    Cycle { from: u32, to: u32 },
    Unreachable { id: u32 },
    UnknownPredicate { id: u32, name: String },
    BadPredicateArgs { id: u32, reason: String },
    MissingMessage { id: u32 },
    UnsatisfiedReference { id: u32, reason: String },
}

impl fmt::Display for TreeDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDefect::MissingRoot { root } => write!(f, "root node {root} does not exist"),
            TreeDefect::DanglingArc { from, to } => write!(f, "node {from} points to missing node {to}"),
            TreeDefect::IdenticalArcs { id } => write!(f, "node {id} has identical YES and NO arcs"),
            TreeDefect::Cycle { from, to } => write!(f, "arc {from} -> {to} closes a cycle"),
            TreeDefect::Unreachable { id } => write!(f, "node {id} is unreachable from the root"),
            TreeDefect::UnknownPredicate { id, name } => write!(f, "node {id} uses unknown predicate {name:?}"),
            TreeDefect::BadPredicateArgs { id, reason } => write!(f, "node {id}: {reason}"),
            TreeDefect::MissingMessage { id } => write!(f, "ask node {id} has no message"),
            TreeDefect::UnsatisfiedReference { id, reason } => write!(f, "node {id}: {reason}"),
        }
    }
}

/// Something known to hold on every path reaching a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Fact {
    Visited(u32),
    Outcome(PredicateCall, bool),
}

fn outcome(name: &str, args: &[&str], value: bool) -> Fact {
    Fact::Outcome(
        PredicateCall {
            name: name.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        },
        value,
    )
}

fn looks_like_chapter(arg: &str) -> bool {
    matches!(arg.split_once('-'), Some((lo, hi)) if !lo.is_empty() && !hi.is_empty())
}

/// Structural and static-semantic checks. Empty on a sound tree.
pub fn validate_tree(tree: &DecisionTree, known: &[PredicateSig]) -> Vec<TreeDefect> {
    let mut defects = Vec::new();
    if tree.node(tree.root).is_none() {
        defects.push(TreeDefect::MissingRoot { root: tree.root });
    }

    for node in tree.nodes() {
        for (to, _) in node.kind.arcs() {
            if tree.node(to).is_none() {
                defects.push(TreeDefect::DanglingArc { from: node.id, to });
            }
        }
        if let NodeKind::Predicate { yes, no, .. } | NodeKind::AskBinary { yes, no } = node.kind {
            if yes == no {
                defects.push(TreeDefect::IdenticalArcs { id: node.id });
            }
        }
        if node.kind.is_ask() && node.message.trim().is_empty() {
            defects.push(TreeDefect::MissingMessage { id: node.id });
        }
        if let NodeKind::Predicate { predicate, .. } = &node.kind {
            check_predicate_signature(tree, node.id, predicate, known, &mut defects);
        }
    }

    // Depth-first walk: reachability plus back-edge (cycle) detection.
    let mut order = Vec::new();
    let mut color: HashMap<u32, u8> = HashMap::new();
    if tree.node(tree.root).is_some() {
        let mut stack = vec![(tree.root, 0usize)];
        color.insert(tree.root, 1);
        while let Some((id, child)) = stack.pop() {
            let arcs = tree.node(id).map(|n| n.kind.arcs()).unwrap_or_default();
            if let Some(&(to, _)) = arcs.get(child) {
                stack.push((id, child + 1));
                if tree.node(to).is_none() {
                    continue;
                }
                match color.get(&to) {
                    None => {
                        color.insert(to, 1);
                        stack.push((to, 0));
                    }
                    Some(1) => defects.push(TreeDefect::Cycle { from: id, to }),
                    _ => {}
                }
            } else {
                color.insert(id, 2);
                order.push(id);
            }
        }
    }
    for node in tree.nodes() {
        if !color.contains_key(&node.id) {
            defects.push(TreeDefect::Unreachable { id: node.id });
        }
    }

    if defects.iter().any(|d| matches!(d, TreeDefect::Cycle { .. } | TreeDefect::MissingRoot { .. })) {
        return defects;
    }

    // Facts guaranteed on every path: intersect along reverse post-order.
    order.reverse();
    let mut facts: HashMap<u32, BTreeSet<Fact>> = HashMap::new();
    facts.insert(tree.root, BTreeSet::new());
    for id in &order {
        let node = tree.node(*id).expect("walked nodes exist");
        let here = facts.get(id).cloned().unwrap_or_default();
        check_references(tree, node, &here, &mut defects);
        for (to, branch) in node.kind.arcs() {
            if tree.node(to).is_none() {
                continue;
            }
            let mut out = here.clone();
            if node.kind.asks_for_codes() {
                out.insert(Fact::Visited(node.id));
            }
            if let (NodeKind::Predicate { predicate, .. }, Some(value)) = (&node.kind, branch) {
                out.insert(Fact::Outcome(predicate.clone(), value));
            }
            facts
                .entry(to)
                .and_modify(|existing| existing.retain(|f| out.contains(f)))
                .or_insert(out);
        }
    }
    defects
}

fn check_predicate_signature(
    tree: &DecisionTree,
    id: u32,
    call: &PredicateCall,
    known: &[PredicateSig],
    defects: &mut Vec<TreeDefect>,
) {
    let Some(sig) = known.iter().find(|s| s.name == call.name) else {
        defects.push(TreeDefect::UnknownPredicate {
            id,
            name: call.name.clone(),
        });
        return;
    };
    let bad = |reason: String| TreeDefect::BadPredicateArgs { id, reason };
    match (sig.arg, call.args.as_slice()) {
        (PredicateArg::None, []) => {}
        (PredicateArg::Chapter, [c]) if looks_like_chapter(c) => {}
        (PredicateArg::AskNode, [n]) => match n.parse::<u32>().ok().and_then(|n| tree.node(n)) {
            Some(target) if target.kind.asks_for_codes() => {}
            _ => defects.push(bad(format!("{} needs the id of a code-selection ask node, got {n:?}", call.name))),
        },
        _ => defects.push(bad(format!("{} called with bad arguments {:?}", call.name, call.args))),
    }
}

fn check_references(tree: &DecisionTree, node: &Node, facts: &BTreeSet<Fact>, defects: &mut Vec<TreeDefect>) {
    let mut require = |fact: Fact, what: &str| {
        if !facts.contains(&fact) {
            defects.push(TreeDefect::UnsatisfiedReference {
                id: node.id,
                reason: format!("{what} is not guaranteed on every path ({fact:?})"),
            });
        }
    };
    let answered = |n: u32| tree.node(n).is_some_and(|t| t.kind.asks_for_codes());

    match &node.kind {
        NodeKind::Predicate { predicate, .. } if predicate.name.starts_with("answer_count_") => {
            if let Some(n) = predicate.args.first().and_then(|a| a.parse::<u32>().ok()) {
                require(Fact::Visited(n), "answer of the referenced node");
            }
        }
        NodeKind::AskMulticode { candidates, .. } | NodeKind::AskSingleCode { candidates, .. } => match candidates {
            CandidateRule::Pc => {}
            CandidateRule::PcInChapter { chapter } => {
                require(outcome("any_pc_in_chapter", &[chapter], true), "a condition in the chapter")
            }
            CandidateRule::Answer { node: n } => {
                if !answered(*n) {
                    require(Fact::Visited(u32::MAX), "a code-selection ask node");
                }
                require(Fact::Visited(*n), "answer of the referenced node");
            }
            CandidateRule::PcMinusAnswer { node: n } => {
                let single = tree.node(*n).is_some_and(|t| matches!(t.kind, NodeKind::AskSingleCode { .. }));
                if !single {
                    require(Fact::Visited(u32::MAX), "a single-code ask node");
                }
                require(Fact::Visited(*n), "answer of the referenced node");
                require(outcome("pc_count_is_one", &[], false), "more than one condition");
            }
        },
        NodeKind::Leaf { verdict } => match verdict {
            VerdictRule::OnlyPc => require(outcome("pc_count_is_one", &[], true), "a single condition"),
            VerdictRule::PcInChapter { chapter } => {
                require(outcome("any_pc_in_chapter", &[chapter], true), "a condition in the chapter")
            }
            VerdictRule::Answer { node: n } => {
                if !answered(*n) {
                    require(Fact::Visited(u32::MAX), "a code-selection ask node");
                }
                require(Fact::Visited(*n), "answer of the referenced node");
            }
            VerdictRule::PathologicalPc => require(
                outcome("pathological_pc_count_is_one", &[], true),
                "a single pathological condition",
            ),
        },
        _ => {}
    }
}
