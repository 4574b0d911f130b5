//! Dataset directory reader and writer.
//!
//! Layout (UTF-8, tab separated, `#` starts a comment line):
//!
//! * `schema.tsv`: `node <name> <dim>`, `edge <name> <src> <dst>`, `target <type> <classes>`
//! * `nodes-<type>.tsv`: one string id per line
//! * `features-<type>.bin`: `HGMF`, u32 version, u64 rows, u64 cols, then row-major f32 (LE)
//! * `edges-<edge>.tsv`: `<src id> <dst id>`
//! * `labels.tsv`: `<id> <class>`
//! * `splits.tsv` (optional): `<id> train|val|test|unlabeled`

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::hetero::HeteroGraph;
use super::labels::{LabelTable, SplitKind, SplitSpec};
use super::schema::{EdgeTypeDef, NodeTypeDef, NodeTypeId, Schema};
use super::{GraphError, Location};
use crate::autodiff::Tensor;
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"HGMF";
pub const FEATURE_VERSION: u32 = 1;

/// A graph with its labels, optional stored split and string id tables.
#[derive(Clone, Debug)]
pub struct Dataset<S> {
    pub graph: HeteroGraph<S>,
    pub labels: LabelTable,
    pub splits: Option<SplitSpec>,
    /// Per node type, string id of each dense index.
    pub ids: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub node_types: Vec<(String, usize, usize)>,
    pub edge_types: Vec<(String, usize)>,
    pub total_nodes: usize,
    pub total_edges: usize,
    pub classes: usize,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "nodes\t{}\tnode_types\t{}\tedges\t{}\tedge_types\t{}\tclasses\t{}",
            self.total_nodes,
            self.node_types.len(),
            self.total_edges,
            self.edge_types.len(),
            self.classes
        )?;
        for (name, count, dim) in &self.node_types {
            writeln!(f, "node\t{name}\t{count}\tdim\t{dim}")?;
        }
        for (name, count) in &self.edge_types {
            writeln!(f, "edge\t{name}\t{count}")?;
        }
        Ok(())
    }
}

impl<S: Scalar> Dataset<S> {
    pub fn summary(&self) -> Summary {
        let g = &self.graph;
        let schema = g.schema();
        Summary {
            node_types: schema
                .node_type_ids()
                .map(|t| {
                    let def = schema.node_type(t);
                    (def.name.clone(), g.node_count(t), def.feature_dim)
                })
                .collect(),
            edge_types: schema
                .declared_ids()
                .map(|e| (schema.relation(e).name.clone(), g.adjacency(e).nnz()))
                .collect(),
            total_nodes: g.total_nodes(),
            total_edges: g.edge_count(),
            classes: self.labels.num_classes,
        }
    }

    /// Split stored with the dataset, or a fresh stratified one.
    pub fn split_or(&self, ratios: [f64; 3], seed: u64) -> Result<SplitSpec, GraphError> {
        match &self.splits {
            Some(s) => Ok(s.clone()),
            None => super::split_nodes(&self.labels, ratios, seed),
        }
    }
}

/// Non-comment lines of a text file with 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| GraphError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| (i + 1, l.split('\t').map(|f| f.trim().to_string()).collect()))
        .collect())
}

fn loc(path: &Path, line: usize) -> Location {
    Location::new(path.display().to_string(), line)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        at: loc(path, line),
        msg: msg.into(),
    }
}

fn parse_usize(path: &Path, line: usize, field: &str, what: &str) -> Result<usize, GraphError> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {field:?} is not a non-negative integer")))
}

fn expect_fields(path: &Path, line: usize, fields: &[String], n: usize) -> Result<(), GraphError> {
    if fields.len() != n {
        return Err(parse_err(path, line, format!("expected {n} fields, found {}", fields.len())));
    }
    Ok(())
}

struct ParsedSchema {
    schema: Schema,
    target: NodeTypeId,
    classes: usize,
}

fn read_schema(path: &Path) -> Result<ParsedSchema, GraphError> {
    let mut nodes: Vec<NodeTypeDef> = Vec::new();
    let mut raw_edges: Vec<(usize, String, String, String)> = Vec::new();
    let mut target: Option<(usize, String, usize)> = None;
    for (ln, f) in lines(path)? {
        match f[0].as_str() {
            "node" => {
                expect_fields(path, ln, &f, 3)?;
                nodes.push(NodeTypeDef {
                    name: f[1].clone(),
                    feature_dim: parse_usize(path, ln, &f[2], "feature dimension")?,
                });
            }
            "edge" => {
                expect_fields(path, ln, &f, 4)?;
                raw_edges.push((ln, f[1].clone(), f[2].clone(), f[3].clone()));
            }
            "target" => {
                expect_fields(path, ln, &f, 3)?;
                if target.is_some() {
                    return Err(schema_err(path, ln, "more than one target line"));
                }
                target = Some((ln, f[1].clone(), parse_usize(path, ln, &f[2], "class count")?));
            }
            other => return Err(parse_err(path, ln, format!("unknown record kind {other:?}"))),
        }
    }
    let type_id = |ln: usize, name: &str| {
        nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| NodeTypeId(i as u16))
            .ok_or_else(|| schema_err(path, ln, format!("unknown node type {name:?}")))
    };
    let mut edges = Vec::new();
    for (ln, name, src, dst) in &raw_edges {
        edges.push(EdgeTypeDef {
            name: name.clone(),
            source: type_id(*ln, src)?,
            target: type_id(*ln, dst)?,
        });
    }
    let (tln, tname, classes) = target.ok_or_else(|| schema_err(path, 0, "missing target line"))?;
    let target = type_id(tln, &tname)?;
    if classes == 0 {
        return Err(schema_err(path, tln, "class count must be positive"));
    }
    let schema = Schema::new(nodes, edges).map_err(|e| match e {
        GraphError::Schema { msg, .. } => schema_err(path, 0, msg),
        other => other,
    })?;
    Ok(ParsedSchema {
        schema,
        target,
        classes,
    })
}

fn schema_err(path: &Path, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Schema {
        at: loc(path, line),
        msg: msg.into(),
    }
}

fn read_features<S: Scalar>(path: &Path, rows: usize, cols: usize) -> Result<Tensor<S>, GraphError> {
    let bytes = fs::read(path).map_err(|e| GraphError::io(path, e))?;
    let bad = |msg: &str| parse_err(path, 0, msg);
    if bytes.len() < 24 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing HGMF header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(bad(&format!("unsupported feature file version {version}")));
    }
    let r = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let c = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if r != rows || c != cols {
        return Err(GraphError::FeatureDim {
            at: loc(path, 0),
            expected: format!("{rows}x{cols}"),
            found: format!("{r}x{c}"),
        });
    }
    let body = &bytes[24..];
    if body.len() != rows * cols * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", rows * cols * 4, body.len())));
    }
    let data: Vec<S> = body
        .chunks_exact(4)
        .map(|b| S::from_f64_lossy(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite feature value"));
    }
    Ok(Tensor::new(vec![rows, cols], data).expect("length checked"))
}

/// Reads and validates a dataset directory.
pub fn load_dataset<S: Scalar>(dir: &Path) -> Result<Dataset<S>, GraphError> {
    let parsed = read_schema(&dir.join("schema.tsv"))?;
    let schema = parsed.schema;

    let mut ids: Vec<Vec<String>> = Vec::new();
    let mut lookup: Vec<HashMap<String, usize>> = Vec::new();
    for def in schema.node_types() {
        let path = dir.join(format!("nodes-{}.tsv", def.name));
        let mut list = Vec::new();
        let mut map = HashMap::new();
        for (ln, f) in lines(&path)? {
            expect_fields(&path, ln, &f, 1)?;
            if map.insert(f[0].clone(), list.len()).is_some() {
                return Err(parse_err(&path, ln, format!("duplicate node id {:?}", f[0])));
            }
            list.push(f[0].clone());
        }
        ids.push(list);
        lookup.push(map);
    }

    let mut features = Vec::new();
    for (i, def) in schema.node_types().iter().enumerate() {
        let path = dir.join(format!("features-{}.bin", def.name));
        features.push(read_features::<S>(&path, ids[i].len(), def.feature_dim)?);
    }

    let mut edges = Vec::new();
    for def in schema.declared_edge_types() {
        let path = dir.join(format!("edges-{}.tsv", def.name));
        let (src_map, dst_map) = (&lookup[def.source.index()], &lookup[def.target.index()]);
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (ln, f) in lines(&path)? {
            expect_fields(&path, ln, &f, 2)?;
            let endpoint = |map: &HashMap<String, usize>, id: &str| {
                map.get(id).copied().ok_or_else(|| GraphError::DanglingEndpoint {
                    at: loc(&path, ln),
                    id: id.to_string(),
                })
            };
            let pair = (endpoint(src_map, &f[0])?, endpoint(dst_map, &f[1])?);
            if !seen.insert(pair) {
                return Err(GraphError::DuplicateEdge {
                    at: loc(&path, ln),
                    src: f[0].clone(),
                    dst: f[1].clone(),
                });
            }
            list.push(pair);
        }
        edges.push(list);
    }

    let counts = ids.iter().map(Vec::len).collect();
    let graph = HeteroGraph::new(schema, counts, features, edges)?;

    let target_map = &lookup[parsed.target.index()];
    let n_target = ids[parsed.target.index()].len();
    let path = dir.join("labels.tsv");
    let mut labels = vec![None; n_target];
    for (ln, f) in lines(&path)? {
        expect_fields(&path, ln, &f, 2)?;
        let node = *target_map
            .get(&f[0])
            .ok_or_else(|| GraphError::DanglingEndpoint {
                at: loc(&path, ln),
                id: f[0].clone(),
            })?;
        let class = parse_usize(&path, ln, &f[1], "class")?;
        if class >= parsed.classes {
            return Err(parse_err(&path, ln, format!("class {class} outside 0..{}", parsed.classes)));
        }
        if labels[node].replace(class).is_some() {
            return Err(parse_err(&path, ln, format!("node {:?} labeled twice", f[0])));
        }
    }
    let labels = LabelTable::new(parsed.target, parsed.classes, labels)?;

    let path = dir.join("splits.tsv");
    let splits = if path.exists() {
        let mut kinds = vec![SplitKind::Unlabeled; n_target];
        let mut seen = vec![false; n_target];
        for (ln, f) in lines(&path)? {
            expect_fields(&path, ln, &f, 2)?;
            let node = *target_map
                .get(&f[0])
                .ok_or_else(|| GraphError::DanglingEndpoint {
                    at: loc(&path, ln),
                    id: f[0].clone(),
                })?;
            let kind = SplitKind::parse(&f[1])
                .ok_or_else(|| parse_err(&path, ln, format!("unknown split {:?}", f[1])))?;
            if std::mem::replace(&mut seen[node], true) {
                return Err(parse_err(&path, ln, format!("node {:?} assigned twice", f[0])));
            }
            if kind != SplitKind::Unlabeled && labels.get(node).is_none() {
                return Err(parse_err(&path, ln, format!("node {:?} in {} has no label", f[0], f[1])));
            }
            kinds[node] = kind;
        }
        Some(SplitSpec::from_kinds(&kinds))
    } else {
        None
    };

    Ok(Dataset {
        graph,
        labels,
        splits,
        ids,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), GraphError> {
    let mut f = fs::File::create(path).map_err(|e| GraphError::io(path, e))?;
    f.write_all(bytes).map_err(|e| GraphError::io(path, e))
}

pub fn encode_features<S: Scalar>(x: &Tensor<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + x.numel() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

/// Writes a dataset in the directory layout read by [`load_dataset`].
/// Output is a pure function of the dataset.
pub fn write_dataset<S: Scalar>(dir: &Path, ds: &Dataset<S>) -> Result<(), GraphError> {
    fs::create_dir_all(dir).map_err(|e| GraphError::io(dir, e))?;
    let g = &ds.graph;
    let schema = g.schema();

    let mut text = String::new();
    for def in schema.node_types() {
        text += &format!("node\t{}\t{}\n", def.name, def.feature_dim);
    }
    for def in schema.declared_edge_types() {
        text += &format!(
            "edge\t{}\t{}\t{}\n",
            def.name,
            schema.node_type(def.source).name,
            schema.node_type(def.target).name
        );
    }
    text += &format!(
        "target\t{}\t{}\n",
        schema.node_type(ds.labels.target).name,
        ds.labels.num_classes
    );
    write_file(&dir.join("schema.tsv"), text.as_bytes())?;

    for t in schema.node_type_ids() {
        let name = &schema.node_type(t).name;
        let mut text = String::new();
        for id in &ds.ids[t.index()] {
            text += id;
            text.push('\n');
        }
        write_file(&dir.join(format!("nodes-{name}.tsv")), text.as_bytes())?;
        write_file(&dir.join(format!("features-{name}.bin")), &encode_features(g.features(t)))?;
    }

    for e in schema.declared_ids() {
        let def = schema.relation(e);
        let (si, ti) = (&ds.ids[def.source.index()], &ds.ids[def.target.index()]);
        let mut text = String::new();
        for (s, t) in g.adjacency(e).pairs() {
            text += &format!("{}\t{}\n", si[s], ti[t]);
        }
        write_file(&dir.join(format!("edges-{}.tsv", def.name)), text.as_bytes())?;
    }

    let tid = &ds.ids[ds.labels.target.index()];
    let mut text = String::new();
    for (i, c) in ds.labels.labeled() {
        text += &format!("{}\t{c}\n", tid[i]);
    }
    write_file(&dir.join("labels.tsv"), text.as_bytes())?;

    if let Some(split) = &ds.splits {
        let mut text = String::new();
        for (i, k) in split.kinds(tid.len()).iter().enumerate() {
            text += &format!("{}\t{}\n", tid[i], k.as_str());
        }
        write_file(&dir.join("splits.tsv"), text.as_bytes())?;
    }
    Ok(())
}
