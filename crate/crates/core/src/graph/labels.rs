use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::schema::NodeTypeId;
use super::GraphError;

/// Class labels of the target node type. `None` marks nodes without a label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTable {
    pub target: NodeTypeId,
    pub num_classes: usize,
    pub labels: Vec<Option<usize>>,
}

impl LabelTable {
    pub fn new(target: NodeTypeId, num_classes: usize, labels: Vec<Option<usize>>) -> Result<Self, GraphError> {
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(GraphError::Invalid(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            target,
            num_classes,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, node: usize) -> Option<usize> {
        self.labels.get(node).copied().flatten()
    }

    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|c| (i, c)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Val,
    Test,
    Unlabeled,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
            SplitKind::Unlabeled => "unlabeled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitKind::Train),
            "val" => Some(SplitKind::Val),
            "test" => Some(SplitKind::Test),
            "unlabeled" => Some(SplitKind::Unlabeled),
            _ => None,
        }
    }
}

/// Disjoint index sets over the target node type. All lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl SplitSpec {
    /// Builds from a per-node assignment.
    pub fn from_kinds(kinds: &[SplitKind]) -> Self {
        let mut s = Self::default();
        for (i, k) in kinds.iter().enumerate() {
            s.list_mut(*k).push(i);
        }
        s
    }

    fn list_mut(&mut self, kind: SplitKind) -> &mut Vec<usize> {
        match kind {
            SplitKind::Train => &mut self.train,
            SplitKind::Val => &mut self.val,
            SplitKind::Test => &mut self.test,
            SplitKind::Unlabeled => &mut self.unlabeled,
        }
    }

    pub fn kinds(&self, n: usize) -> Vec<SplitKind> {
        let mut out = vec![SplitKind::Unlabeled; n];
        for (kind, list) in [
            (SplitKind::Train, &self.train),
            (SplitKind::Val, &self.val),
            (SplitKind::Test, &self.test),
        ] {
            for &i in list {
                out[i] = kind;
            }
        }
        out
    }

    /// Target nodes whose labels are hidden from training (everything but train).
    pub fn unsupervised(&self, n: usize) -> Vec<usize> {
        let mut is_train = vec![false; n];
        for &i in &self.train {
            is_train[i] = true;
        }
        (0..n).filter(|&i| !is_train[i]).collect()
    }

    pub fn validate(&self, labels: &LabelTable) -> Result<(), GraphError> {
        let n = labels.len();
        let mut seen = vec![false; n];
        for list in [&self.train, &self.val, &self.test, &self.unlabeled] {
            for &i in list {
                if i >= n {
                    return Err(GraphError::NodeOutOfRange { node: i, count: n });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(GraphError::Invalid(format!("node {i} appears in two splits")));
                }
            }
        }
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if labels.get(i).is_none() {
                return Err(GraphError::Invalid(format!("split node {i} has no label")));
            }
        }
        Ok(())
    }
}

/// Stratified train/val/test split of the labeled target nodes.
///
/// Each class is shuffled, then classes are interleaved by relative rank so
/// any prefix of the merged order is close to class-proportional. The first
/// `round(r0 * n)` go to train, the next `round(r1 * n)` to val.
pub fn split_nodes(labels: &LabelTable, ratios: [f64; 3], seed: u64) -> Result<SplitSpec, GraphError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
        return Err(GraphError::Ratios(ratios.to_vec()));
    }
    let mut by_class = vec![Vec::new(); labels.num_classes];
    for (i, c) in labels.labeled() {
        by_class[c].push(i);
    }
    if let Some(class) = by_class.iter().position(Vec::is_empty) {
        return Err(GraphError::EmptyClass { class });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(f64, usize, usize)> = Vec::new();
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        for (rank, &node) in members.iter().enumerate() {
            order.push(((rank as f64 + 0.5) / m, c, node));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n = order.len();
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let mut spec = SplitSpec::default();
    for (pos, &(_, _, node)) in order.iter().enumerate() {
        if pos < n_train {
            spec.train.push(node);
        } else if pos < n_train + n_val {
            spec.val.push(node);
        } else {
            spec.test.push(node);
        }
    }
    spec.unlabeled = labels
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| i)
        .collect();
    for list in [&mut spec.train, &mut spec.val, &mut spec.test] {
        list.sort_unstable();
    }
    Ok(spec)
}
