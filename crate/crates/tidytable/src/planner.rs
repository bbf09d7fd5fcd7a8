//! Goal reasoning: parse target configurations, build the stacking
//! dependency forest, and emit the next object to grasp respecting
//! parent-before-child order and goal-cell availability.

use crate::geometry::RigidTransform;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("cyclic goal configuration")]
    CyclicConfiguration,
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("duplicate object id: {0}")]
    DuplicateObject(String),
    #[error("goal for {id} at ({x:.3}, {y:.3}) is outside the table bounds")]
    GoalOutOfBounds { id: String, x: f64, y: f64 },
    #[error("goal file parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// World-frame target pose per object id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoalConfig {
    entries: BTreeMap<String, RigidTransform>,
}

/// One line of the goal configuration file.
#[derive(Debug, Serialize, Deserialize)]
struct GoalEntryFile {
    object_id: String,
    /// Meters, `[x, y, z]`.
    position: [f64; 3],
    /// Unit quaternion, `[w, x, y, z]`.
    orientation: [f64; 4],
}

impl GoalConfig {
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, RigidTransform)>,
    ) -> Result<Self, PlannerError> {
        let mut map = BTreeMap::new();
        for (id, pose) in entries {
            if map.insert(id.clone(), pose).is_some() {
                return Err(PlannerError::DuplicateObject(id));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn from_json_str(s: &str) -> Result<Self, PlannerError> {
        let raw: Vec<GoalEntryFile> = serde_json::from_str(s)?;
        Self::from_entries(raw.into_iter().map(|e| {
            (
                e.object_id,
                RigidTransform::new(Vector3::from(e.position), e.orientation),
            )
        }))
    }

    pub fn to_json_string(&self) -> String {
        let raw: Vec<GoalEntryFile> = self
            .entries
            .iter()
            .map(|(id, pose)| {
                let rot = pose.rotation();
                let q = rot.quaternion();
                GoalEntryFile {
                    object_id: id.clone(),
                    position: pose.translation().into(),
                    orientation: [q.w, q.i, q.j, q.k],
                }
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("goal serialization")
    }

    pub fn get(&self, id: &str) -> Option<&RigidTransform> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RigidTransform)> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks every goal XY against rectangular table bounds.
    pub fn validate_within(
        &self,
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    ) -> Result<(), PlannerError> {
        for (id, pose) in &self.entries {
            let t = pose.translation();
            if t.x < xmin || t.x > xmax || t.y < ymin || t.y > ymax {
                return Err(PlannerError::GoalOutOfBounds {
                    id: id.clone(),
                    x: t.x,
                    y: t.y,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Pending,
    Placed,
    Parked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestNode {
    pub object_id: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub status: NodeStatus,
    pub depth: usize,
}

/// Stacking-order structure over the goal objects: an edge parent → child
/// means the child rests on the parent in the goal configuration, so the
/// parent must be placed first.
#[derive(Debug, Clone)]
pub struct DependencyForest {
    nodes: BTreeMap<String, ForestNode>,
}

/// Predicate pair deciding when one goal pose is stacked directly on another.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StackingParams {
    /// Max horizontal offset between supporter and supported, meters.
    pub xy_threshold: f64,
    /// Min vertical gap from supporter to supported, meters.
    pub min_z_gap: f64,
}

impl Default for StackingParams {
    fn default() -> Self {
        Self {
            xy_threshold: 0.03,
            min_z_gap: 0.015,
        }
    }
}

fn supports(a: &Vector3<f64>, b: &Vector3<f64>, params: &StackingParams) -> bool {
    let dxy = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    dxy <= params.xy_threshold && b.z - a.z >= params.min_z_gap
}

/// Builds the dependency forest: B becomes a child of A when A supports B
/// and no third object sits between them (immediate support only). When two
/// objects both qualify as immediate supporters, the higher one wins, then
/// the lexicographically smaller id.
pub fn build_forest(
    goals: &GoalConfig,
    params: &StackingParams,
) -> Result<DependencyForest, PlannerError> {
    let positions: BTreeMap<&String, Vector3<f64>> = goals
        .iter()
        .map(|(id, pose)| (id, pose.translation()))
        .collect();

    let mut nodes: BTreeMap<String, ForestNode> = goals
        .ids()
        .map(|id| {
            (
                id.clone(),
                ForestNode {
                    object_id: id.clone(),
                    parent: None,
                    children: Vec::new(),
                    status: NodeStatus::Pending,
                    depth: 0,
                },
            )
        })
        .collect();

    for (child_id, child_pos) in &positions {
        let mut best: Option<(&String, Vector3<f64>)> = None;
        for (parent_id, parent_pos) in &positions {
            if parent_id == child_id || !supports(parent_pos, child_pos, params) {
                continue;
            }
            let intermediate = positions.iter().any(|(mid_id, mid_pos)| {
                mid_id != parent_id
                    && mid_id != child_id
                    && supports(parent_pos, mid_pos, params)
                    && supports(mid_pos, child_pos, params)
            });
            if intermediate {
                continue;
            }
            let better = match &best {
                None => true,
                Some((best_id, best_pos)) => {
                    parent_pos.z > best_pos.z
                        || (parent_pos.z == best_pos.z && parent_id < best_id)
                }
            };
            if better {
                best = Some((parent_id, *parent_pos));
            }
        }
        if let Some((parent_id, _)) = best {
            nodes.get_mut(child_id.as_str()).expect("child present").parent =
                Some(parent_id.to_string());
        }
    }

    let parent_of: BTreeMap<String, Option<String>> = nodes
        .iter()
        .map(|(id, n)| (id.clone(), n.parent.clone()))
        .collect();
    for (id, parent) in &parent_of {
        if let Some(p) = parent {
            nodes
                .get_mut(p)
                .ok_or_else(|| PlannerError::UnknownObject(p.clone()))?
                .children
                .push(id.clone());
        }
    }

    let mut forest = DependencyForest { nodes };
    forest.compute_depths()?;
    Ok(forest)
}

impl DependencyForest {
    pub fn empty() -> Self {
        Self {
            nodes: BTreeMap::new(),
        }
    }

    /// Breadth-first depth assignment from the roots; a node left
    /// unreached indicates a cycle (unreachable under the z-gap rule,
    /// checked defensively).
    fn compute_depths(&mut self) -> Result<(), PlannerError> {
        let mut frontier: Vec<String> = self
            .nodes
            .values()
            .filter(|n| n.parent.is_none())
            .map(|n| n.object_id.clone())
            .collect();
        let mut depth = 0usize;
        let mut visited = 0usize;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for id in frontier {
                let node = self.nodes.get_mut(&id).expect("node present");
                node.depth = depth;
                visited += 1;
                next.extend(node.children.iter().cloned());
            }
            frontier = next;
            depth += 1;
        }
        if visited != self.nodes.len() {
            return Err(PlannerError::CyclicConfiguration);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&ForestNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ForestNode> {
        self.nodes.values()
    }

    pub fn status(&self, id: &str) -> Option<NodeStatus> {
        self.nodes.get(id).map(|n| n.status)
    }

    /// Parent → child edge list, sorted by (parent, child).
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<(String, String)> = self
            .nodes
            .values()
            .filter_map(|n| n.parent.clone().map(|p| (p, n.object_id.clone())))
            .collect();
        edges.sort();
        edges
    }

    /// Parents-before-children order: (depth ascending, id ascending).
    pub fn topological_order(&self) -> Vec<String> {
        let mut ids: Vec<&ForestNode> = self.nodes.values().collect();
        ids.sort_by(|a, b| (a.depth, &a.object_id).cmp(&(b.depth, &b.object_id)));
        ids.into_iter().map(|n| n.object_id.clone()).collect()
    }

    pub fn all_placed(&self) -> bool {
        self.nodes.values().all(|n| n.status == NodeStatus::Placed)
    }

    pub fn count(&self, status: NodeStatus) -> usize {
        self.nodes.values().filter(|n| n.status == status).count()
    }

    /// Pending objects whose parent (if any) is already Placed, in
    /// (depth, id) order. These are schedulable before the goal-cell check.
    pub fn schedulable(&self) -> Vec<String> {
        let mut out: Vec<&ForestNode> = self
            .nodes
            .values()
            .filter(|n| {
                n.status == NodeStatus::Pending
                    && n.parent.as_ref().map_or(true, |p| {
                        self.status(p) == Some(NodeStatus::Placed)
                    })
            })
            .collect();
        out.sort_by(|a, b| (a.depth, &a.object_id).cmp(&(b.depth, &b.object_id)));
        out.into_iter().map(|n| n.object_id.clone()).collect()
    }

    pub fn mark(&mut self, id: &str, status: NodeStatus) -> Result<(), PlannerError> {
        match self.nodes.get_mut(id) {
            Some(node) => {
                node.status = status;
                Ok(())
            }
            None => Err(PlannerError::UnknownObject(id.to_string())),
        }
    }

    /// Debug dump: edge list plus statuses and a topological order.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let statuses: BTreeMap<&String, &NodeStatus> = self
            .nodes
            .iter()
            .map(|(id, n)| (id, &n.status))
            .collect();
        serde_json::json!({
            "edges": self.edges(),
            "statuses": statuses,
            "order": self.topological_order(),
        })
    }
}

/// Next object to grasp: a Pending node whose parent (if any) is Placed and
/// whose goal region is reported free by `goal_free`. Blocked candidates are
/// skipped in favor of other subtrees; ties break by (depth, id). `None`
/// means either nothing is Pending or every Pending candidate is blocked —
/// the caller decides between finishing and parking.
pub fn next_graspable(
    forest: &DependencyForest,
    mut goal_free: impl FnMut(&str) -> bool,
) -> Option<String> {
    forest
        .schedulable()
        .into_iter()
        .find(|id| goal_free(id))
}
