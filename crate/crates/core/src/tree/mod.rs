//! Contrast trees: best-first partitioning of predictor space into regions
//! where `y` and `z` disagree the most.

mod report;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boosting::TransformFn;
use crate::dataset::{ColumnKind, ColumnSchema, ContrastSample, Frame, Value};
use crate::discrepancy::{DiscrepancyValue, Measure};
use crate::error::{Error, Result};

pub use report::{region_report, regions_tsv, RegionSummary};
pub use split::{best_split, split_improvement, split_quality, Side, SplitCandidate, SplitRule, SplitSpec, MIN_IMPROVEMENT};

/// Heap-ordered node id: the root is 1 and node `m` has children `2m`, `2m+1`.
pub type NodeId = u64;

pub const TREE_VERSION: &str = "contrast-tree/1";

/// Ids past this would overflow their children.
const MAX_SPLITTABLE_ID: NodeId = 1 << 62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    /// Maximum number of terminal regions.
    pub max_regions: usize,
    /// Minimum rows in a daughter (per side for two-sample data).
    pub min_node: usize,
    pub max_numeric_candidates: usize,
    pub measure: Measure,
}

impl GrowConfig {
    /// Defaults for a sample of `n_rows` rows.
    pub fn new(measure: Measure, n_rows: usize) -> Self {
        GrowConfig {
            max_regions: 10,
            min_node: default_min_node(n_rows),
            max_numeric_candidates: 256,
            measure,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_regions < 1 {
            return Err(Error::Config("max_regions must be at least 1".into()));
        }
        if self.min_node < 1 {
            return Err(Error::Config("min_node must be at least 1".into()));
        }
        if self.max_numeric_candidates < 2 {
            return Err(Error::Config("max_numeric_candidates must be at least 2".into()));
        }
        Ok(())
    }
}

pub fn default_min_node(n_rows: usize) -> usize {
    (n_rows / 200).max(20)
}

/// Per-terminal boosting payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Offset { delta: f64 },
    Transform(TransformFn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<[NodeId; 2]>,
    /// Discrepancy of the node's training region.
    pub d: DiscrepancyValue,
    /// Training rows in the region.
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastTree {
    measure: Measure,
    schema: Vec<ColumnSchema>,
    nodes: BTreeMap<NodeId, Node>,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    version: String,
    measure: Measure,
    schema: Vec<ColumnSchema>,
    nodes: Vec<Node>,
}

impl Serialize for ContrastTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TreeDoc {
            version: TREE_VERSION.into(),
            measure: self.measure,
            schema: self.schema.clone(),
            nodes: self.nodes.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ContrastTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TreeDoc::deserialize(d)?;
        if doc.version != TREE_VERSION {
            return Err(serde::de::Error::custom(format!("unsupported tree version {}", doc.version)));
        }
        let tree = ContrastTree {
            measure: doc.measure,
            schema: doc.schema,
            nodes: doc.nodes.into_iter().map(|n| (n.id, n)).collect(),
        };
        tree.check_structure().map_err(serde::de::Error::custom)?;
        Ok(tree)
    }
}

impl ContrastTree {
    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Terminal ids in ascending order.
    pub fn terminals(&self) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.is_terminal()).map(|n| n.id).collect()
    }

    pub fn n_terminals(&self) -> usize {
        self.nodes.values().filter(|n| n.is_terminal()).count()
    }

    pub(crate) fn set_payload(&mut self, id: NodeId, payload: Payload) {
        if let Some(node) = self.nodes.get_mut(&id) {
            node.payload = Some(payload);
        }
    }

    fn check_structure(&self) -> std::result::Result<(), String> {
        if !self.nodes.contains_key(&1) {
            return Err("tree has no root".into());
        }
        for node in self.nodes.values() {
            match (&node.split, node.children) {
                (Some(s), Some([l, r])) => {
                    if l != 2 * node.id || r != 2 * node.id + 1 || !self.nodes.contains_key(&l) || !self.nodes.contains_key(&r) {
                        return Err(format!("node {} has malformed children", node.id));
                    }
                    if s.variable >= self.schema.len() {
                        return Err(format!("node {} splits on unknown column {}", node.id, s.variable));
                    }
                }
                (None, None) => {}
                _ => return Err(format!("node {} has a split without children or vice versa", node.id)),
            }
            if node.id != 1 && !self.nodes.get(&(node.id / 2)).is_some_and(|p| p.children.is_some()) {
                return Err(format!("node {} has no parent", node.id));
            }
        }
        Ok(())
    }

    fn check_frame(&self, x: &Frame) -> Result<()> {
        if x.n_cols() != self.schema.len() {
            return Err(Error::Schema(format!(
                "expected {} predictor columns, got {}",
                self.schema.len(),
                x.n_cols()
            )));
        }
        for (c, s) in x.columns().iter().zip(&self.schema) {
            if c.kind() != s.kind {
                return Err(Error::Schema(format!("column {} has the wrong kind", s.name)));
            }
        }
        Ok(())
    }

    /// Terminal id reached by `row`.
    pub fn apply(&self, row: &[Value]) -> Result<NodeId> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "expected {} predictor values, got {}",
                self.schema.len(),
                row.len()
            )));
        }
        for (v, s) in row.iter().zip(&self.schema) {
            let ok = match v {
                Value::Missing => true,
                Value::Num(_) => s.kind == ColumnKind::Numeric,
                Value::Level(_) => s.kind == ColumnKind::Categorical,
            };
            if !ok {
                return Err(Error::Schema(format!("value for column {} has the wrong kind", s.name)));
            }
        }
        Ok(self.route(|j| row[j]))
    }

    fn route(&self, value: impl Fn(usize) -> Value) -> NodeId {
        let mut id = 1;
        loop {
            let node = &self.nodes[&id];
            let Some(split) = &node.split else { return id };
            let side = split.side_of(value(split.variable), self.schema[split.variable].levels.len());
            id = match side {
                Side::Left => 2 * id,
                Side::Right => 2 * id + 1,
            };
        }
    }

    /// Terminal id of every row of `x`. Categorical codes must refer to the
    /// tree's schema levels (see [`Frame::conform_to`]).
    pub fn assign(&self, x: &Frame) -> Result<Vec<NodeId>> {
        self.check_frame(x)?;
        Ok((0..x.n_rows()).map(|i| self.route(|j| x.value(i, j))).collect())
    }

    /// Rows of `x` grouped by terminal; every terminal appears, possibly empty.
    pub fn partition(&self, x: &Frame) -> Result<BTreeMap<NodeId, Vec<usize>>> {
        let ids = self.assign(x)?;
        let mut out: BTreeMap<NodeId, Vec<usize>> = self.terminals().into_iter().map(|t| (t, Vec::new())).collect();
        for (i, id) in ids.into_iter().enumerate() {
            out.entry(id).or_default().push(i);
        }
        Ok(out)
    }

    /// Conditions from the root to node `id`, one per split.
    pub fn path_conditions(&self, id: NodeId) -> Vec<String> {
        let mut chain = Vec::new();
        let mut cur = id;
        while cur > 1 {
            chain.push(cur);
            cur /= 2;
        }
        chain.reverse();
        chain
            .into_iter()
            .filter_map(|child| {
                let parent = self.nodes.get(&(child / 2))?;
                let split = parent.split.as_ref()?;
                let side = if child % 2 == 0 { Side::Left } else { Side::Right };
                Some(report::condition_text(split, side, &self.schema[split.variable]))
            })
            .collect()
    }

    /// Conjunction of the path conditions, or `(all)` for the root.
    pub fn rule_text(&self, id: NodeId) -> String {
        let conds = self.path_conditions(id);
        if conds.is_empty() {
            "(all)".into()
        } else {
            conds.join(" & ")
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Open {
    id: NodeId,
    rows: Vec<usize>,
    d: f64,
    best: Option<SplitCandidate>,
}

fn find_split(sample: &ContrastSample, rows: &[usize], id: NodeId, d: f64, config: &GrowConfig) -> Option<SplitCandidate> {
    if id >= MAX_SPLITTABLE_ID {
        return None;
    }
    best_split(sample, rows, d, config)
}

fn improves(c: &SplitCandidate, d_parent: f64) -> bool {
    c.improvement > MIN_IMPROVEMENT * d_parent.abs().max(1.0)
}

/// Grows a contrast tree best-first: at each step the terminal whose best
/// split (by quality) has the largest improvement is split.
pub fn grow(sample: &ContrastSample, config: &GrowConfig) -> Result<ContrastTree> {
    config.validate()?;
    if sample.n_rows() == 0 {
        return Err(Error::Data("cannot grow a tree on an empty sample".into()));
    }
    if !config.measure.compatible_with(sample.mode()) {
        return Err(Error::Config(format!(
            "measure {} does not support {:?} samples",
            config.measure,
            sample.mode()
        )));
    }
    let all: Vec<usize> = (0..sample.n_rows()).collect();
    let (ys, zs) = sample.sides(&all);
    let root_d = config.measure.eval(&ys, &zs)?;
    let mut nodes = BTreeMap::new();
    nodes.insert(
        1,
        Node {
            id: 1,
            split: None,
            children: None,
            d: root_d,
            n: all.len(),
            payload: None,
        },
    );
    let best = if config.max_regions > 1 { find_split(sample, &all, 1, root_d.d, config) } else { None };
    let mut open = vec![Open {
        id: 1,
        rows: all,
        d: root_d.d,
        best,
    }];
    let mut n_terminals = 1;
    while n_terminals < config.max_regions {
        // Largest improvement; `open` is kept in ascending id order so the
        // first maximum is the lowest id.
        let mut pick: Option<usize> = None;
        for (k, o) in open.iter().enumerate() {
            let Some(c) = &o.best else { continue };
            if !improves(c, o.d) {
                continue;
            }
            if pick.is_none_or(|p| c.improvement > open[p].best.as_ref().unwrap().improvement) {
                pick = Some(k);
            }
        }
        let Some(k) = pick else { break };
        let parent = open.remove(k);
        let cand = parent.best.expect("picked node has a split");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = {
            let schema_levels = sample.x().column(cand.spec.variable).levels().len();
            let col = sample.x().column(cand.spec.variable);
            parent
                .rows
                .iter()
                .partition(|&&i| cand.spec.side_of(col.values()[i], schema_levels) == Side::Left)
        };
        let (lid, rid) = (2 * parent.id, 2 * parent.id + 1);
        let eval_side = |rows: &[usize]| -> Result<DiscrepancyValue> {
            let (ys, zs) = sample.sides(rows);
            Ok(config.measure.eval(&ys, &zs)?)
        };
        let dl = eval_side(&left_rows)?;
        let dr = eval_side(&right_rows)?;
        let room = n_terminals + 1 < config.max_regions;
        let (bl, br) = if room {
            rayon::join(
                || find_split(sample, &left_rows, lid, dl.d, config),
                || find_split(sample, &right_rows, rid, dr.d, config),
            )
        } else {
            (None, None)
        };
        let pnode = nodes.get_mut(&parent.id).expect("parent exists");
        pnode.split = Some(cand.spec.clone());
        pnode.children = Some([lid, rid]);
        for (id, d, rows) in [(lid, dl, &left_rows), (rid, dr, &right_rows)] {
            nodes.insert(
                id,
                Node {
                    id,
                    split: None,
                    children: None,
                    d,
                    n: rows.len(),
                    payload: None,
                },
            );
        }
        open.push(Open {
            id: lid,
            rows: left_rows,
            d: dl.d,
            best: bl,
        });
        open.push(Open {
            id: rid,
            rows: right_rows,
            d: dr.d,
            best: br,
        });
        open.sort_by_key(|o| o.id);
        n_terminals += 1;
    }
    Ok(ContrastTree {
        measure: config.measure,
        schema: sample.x().schema(),
        nodes,
    })
}
