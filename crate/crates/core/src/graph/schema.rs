use std::collections::HashSet;
use std::fmt;

use super::{GraphError, Location};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeTypeId(pub u16);

/// Index into the relation list: declared edge types first, then one
/// reverse relation per declared type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeTypeId(pub u16);

impl NodeTypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeTypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// ⟨source type, edge type, target type⟩; keys attention parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaRelation {
    pub source: NodeTypeId,
    pub edge: EdgeTypeId,
    pub target: NodeTypeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeTypeDef {
    pub name: String,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeTypeDef {
    pub name: String,
    pub source: NodeTypeId,
    pub target: NodeTypeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    node_types: Vec<NodeTypeDef>,
    /// Declared types followed by their reverses.
    relations: Vec<EdgeTypeDef>,
    declared: usize,
}

impl Schema {
    /// Validates names and endpoints and derives one reverse relation per
    /// declared edge type.
    pub fn new(node_types: Vec<NodeTypeDef>, edge_types: Vec<EdgeTypeDef>) -> Result<Self, GraphError> {
        let err = |msg: String| GraphError::Schema {
            at: Location::none(),
            msg,
        };
        let mut seen = HashSet::new();
        for nt in &node_types {
            if nt.name.is_empty() || !seen.insert(nt.name.as_str()) {
                return Err(err(format!("duplicate or empty node type name {:?}", nt.name)));
            }
        }
        if node_types.len() > u16::MAX as usize || edge_types.len() * 2 > u16::MAX as usize {
            return Err(err("too many types".into()));
        }
        let mut seen = HashSet::new();
        for et in &edge_types {
            if et.name.is_empty() || !seen.insert(et.name.as_str()) {
                return Err(err(format!("duplicate or empty edge type name {:?}", et.name)));
            }
            if et.source.index() >= node_types.len() || et.target.index() >= node_types.len() {
                return Err(err(format!("edge type {} references an unknown node type", et.name)));
            }
        }
        let declared = edge_types.len();
        // Stored relations include reverses, so a single type with one edge
        // type already satisfies |node types| + |relations| > 2.
        if node_types.len() + 2 * declared <= 2 {
            return Err(err(format!(
                "heterogeneity constraint violated: {} node types, {} edge types",
                node_types.len(),
                declared
            )));
        }
        let mut relations = edge_types.clone();
        for et in &edge_types {
            let name = format!("rev_{}", et.name);
            if seen.contains(name.as_str()) {
                return Err(err(format!("edge type name {name} collides with a reverse relation")));
            }
            relations.push(EdgeTypeDef {
                name,
                source: et.target,
                target: et.source,
            });
        }
        Ok(Self {
            node_types,
            relations,
            declared,
        })
    }

    pub fn node_types(&self) -> &[NodeTypeDef] {
        &self.node_types
    }

    pub fn node_type(&self, id: NodeTypeId) -> &NodeTypeDef {
        &self.node_types[id.index()]
    }

    pub fn node_type_ids(&self) -> impl Iterator<Item = NodeTypeId> {
        (0..self.node_types.len() as u16).map(NodeTypeId)
    }

    pub fn node_type_by_name(&self, name: &str) -> Option<NodeTypeId> {
        self.node_types.iter().position(|n| n.name == name).map(|i| NodeTypeId(i as u16))
    }

    /// Edge types as declared in the dataset (no reverses).
    pub fn declared_edge_types(&self) -> &[EdgeTypeDef] {
        &self.relations[..self.declared]
    }

    pub fn declared_count(&self) -> usize {
        self.declared
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn relation(&self, id: EdgeTypeId) -> &EdgeTypeDef {
        &self.relations[id.index()]
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = EdgeTypeId> {
        (0..self.relations.len() as u16).map(EdgeTypeId)
    }

    pub fn declared_ids(&self) -> impl Iterator<Item = EdgeTypeId> {
        (0..self.declared as u16).map(EdgeTypeId)
    }

    pub fn edge_type_by_name(&self, name: &str) -> Option<EdgeTypeId> {
        self.relations.iter().position(|e| e.name == name).map(|i| EdgeTypeId(i as u16))
    }

    pub fn is_reverse(&self, id: EdgeTypeId) -> bool {
        id.index() >= self.declared
    }

    /// The opposite-direction relation of `id`.
    pub fn reverse(&self, id: EdgeTypeId) -> EdgeTypeId {
        if self.is_reverse(id) {
            EdgeTypeId((id.index() - self.declared) as u16)
        } else {
            EdgeTypeId((id.index() + self.declared) as u16)
        }
    }

    /// The declared edge type backing `id`.
    pub fn declared_of(&self, id: EdgeTypeId) -> EdgeTypeId {
        if self.is_reverse(id) {
            self.reverse(id)
        } else {
            id
        }
    }

    pub fn meta_relation(&self, id: EdgeTypeId) -> MetaRelation {
        let r = &self.relations[id.index()];
        MetaRelation {
            source: r.source,
            edge: id,
            target: r.target,
        }
    }

    pub fn meta_relations(&self) -> Vec<MetaRelation> {
        self.relation_ids().map(|r| self.meta_relation(r)).collect()
    }

    /// Relations whose target is `nt`, in id order.
    pub fn relations_into(&self, nt: NodeTypeId) -> Vec<EdgeTypeId> {
        self.relation_ids().filter(|&r| self.relation(r).target == nt).collect()
    }

    /// Relations whose source is `nt`, in id order.
    pub fn relations_from(&self, nt: NodeTypeId) -> Vec<EdgeTypeId> {
        self.relation_ids().filter(|&r| self.relation(r).source == nt).collect()
    }

    /// Relations from `from` into `to` (declared or reverse), in id order.
    pub fn relations_between(&self, from: NodeTypeId, to: NodeTypeId) -> Vec<EdgeTypeId> {
        self.relation_ids()
            .filter(|&r| {
                let d = self.relation(r);
                d.source == from && d.target == to
            })
            .collect()
    }
}

impl fmt::Display for MetaRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.source.0, self.edge.0, self.target.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nt(name: &str) -> NodeTypeDef {
        NodeTypeDef {
            name: name.into(),
            feature_dim: 2,
        }
    }

    #[test]
    fn reverse_relations_are_derived() {
        let s = Schema::new(
            vec![nt("paper"), nt("author")],
            vec![EdgeTypeDef {
                name: "writes".into(),
                source: NodeTypeId(1),
                target: NodeTypeId(0),
            }],
        )
        .unwrap();
        assert_eq!(s.relation_count(), 2);
        let rev = s.reverse(EdgeTypeId(0));
        assert_eq!(s.relation(rev).name, "rev_writes");
        assert_eq!(s.relation(rev).source, NodeTypeId(0));
        assert_eq!(s.reverse(rev), EdgeTypeId(0));
        assert_eq!(s.relations_into(NodeTypeId(0)), vec![EdgeTypeId(0)]);
        assert_eq!(s.relations_between(NodeTypeId(0), NodeTypeId(1)), vec![rev]);
    }

    #[test]
    fn heterogeneity_and_names_are_checked() {
        assert!(Schema::new(vec![nt("a")], vec![]).is_err());
        assert!(Schema::new(vec![nt("a"), nt("a")], vec![]).is_err());
        assert!(Schema::new(vec![nt("a"), nt("b"), nt("c")], vec![]).is_ok());
        let bad = EdgeTypeDef {
            name: "e".into(),
            source: NodeTypeId(0),
            target: NodeTypeId(5),
        };
        assert!(Schema::new(vec![nt("a"), nt("b")], vec![bad]).is_err());
    }
}
