//! Mesh ODN model: nodes, fibre spans, propagation and static vPON slices.
//!
//! The span graph is a tree rooted at the central-office OLT. Two endpoints
//! below the root reach each other passively only when the splitter at their
//! lowest common ancestor reflects the slice's wavelength back downstream.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use alloc::format;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::mac::DbaPolicy;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    CoOlt,
    MecOlt,
    RuOnu,
    Splitter,
}

impl NodeKind {
    pub fn is_olt(self) -> bool {
        matches!(self, NodeKind::CoOlt | NodeKind::MecOlt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdnNode {
    pub id: String,
    pub kind: NodeKind,
    /// Wavelength channels this splitter reflects back towards its ports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reflects: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSpan {
    pub a: String,
    pub b: String,
    pub length_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VponSlice {
    pub id: String,
    pub wavelength: u32,
    pub olt: String,
    pub members: Vec<String>,
    #[serde(default = "default_rate")]
    pub us_rate_bps: f64,
    #[serde(default = "default_rate")]
    pub ds_rate_bps: f64,
    #[serde(default = "default_frame_us")]
    pub frame_period_us: f64,
    #[serde(default)]
    pub dba: DbaPolicy,
    /// Downlink frame phase relative to t = 0.
    #[serde(default)]
    pub dl_phase_us: f64,
}

fn default_rate() -> f64 {
    10e9
}

fn default_frame_us() -> f64 {
    125.0
}

fn default_delay_per_km() -> f64 {
    5.0
}

impl VponSlice {
    pub fn frame_period(&self) -> SimTime {
        SimTime::from_us_f64(self.frame_period_us)
    }

    pub fn dl_phase(&self) -> SimTime {
        SimTime::from_us_f64(self.dl_phase_us)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub nodes: Vec<OdnNode>,
    pub spans: Vec<FiberSpan>,
    pub slices: Vec<VponSlice>,
    #[serde(default = "default_delay_per_km")]
    pub propagation_delay_us_per_km: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologyError {
    UnknownNode(String),
    UnknownSlice(String),
    NotInSlice { node: String, slice: String },
    Unreachable { a: String, b: String, slice: String },
    Invalid(Vec<Violation>),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::UnknownNode(n) => write!(f, "unknown node `{n}`"),
            TopologyError::UnknownSlice(s) => write!(f, "unknown slice `{s}`"),
            TopologyError::NotInSlice { node, slice } => {
                write!(f, "node `{node}` is not part of slice `{slice}`")
            }
            TopologyError::Unreachable { a, b, slice } => {
                write!(f, "no passive path from `{a}` to `{b}` on slice `{slice}`")
            }
            TopologyError::Invalid(v) => {
                write!(f, "{} topology violation(s)", v.len())?;
                for item in v {
                    write!(f, "\n  - {item}")?;
                }
                Ok(())
            }
        }
    }
}

/// One broken topology invariant. Violations are data, not errors.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateNode(String),
    SpanUnknownNode { span: usize, node: String },
    BadSpanLength { span: usize, length_km: f64 },
    NoRoot,
    MultipleRoots(Vec<String>),
    NotATree(String),
    RuAttachment(String),
    OltInMembers { slice: String },
    EmptySlice(String),
    BadSliceOlt { slice: String, olt: String },
    BadMember { slice: String, member: String },
    TooManyPseudoOnus { slice: String },
    MemberUnreachable { slice: String, member: String },
    WavelengthClash { a: String, b: String, wavelength: u32 },
    BadRate { slice: String },
    DuplicateSlice(String),
    BadDelayPerKm(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateNode(id) => write!(f, "duplicate node id `{id}`"),
            SpanUnknownNode { span, node } => write!(f, "span #{span} references unknown node `{node}`"),
            BadSpanLength { span, length_km } => write!(f, "span #{span} has invalid length {length_km} km"),
            NoRoot => write!(f, "no co_olt node to root the ODN tree"),
            MultipleRoots(ids) => write!(f, "more than one co_olt node: {}", ids.join(", ")),
            NotATree(why) => write!(f, "span graph is not a tree rooted at the CO: {why}"),
            RuAttachment(id) => write!(f, "ru_onu `{id}` must attach to exactly one splitter port"),
            OltInMembers { slice } => write!(f, "slice `{slice}` lists its own OLT as a member"),
            EmptySlice(s) => write!(f, "slice `{s}` has no members"),
            BadSliceOlt { slice, olt } => write!(f, "slice `{slice}` OLT `{olt}` is not an OLT node"),
            BadMember { slice, member } => {
                write!(f, "slice `{slice}` member `{member}` is not an ru_onu or mec_olt node")
            }
            TooManyPseudoOnus { slice } => write!(f, "slice `{slice}` has more than one OLT acting as pseudo-ONU"),
            MemberUnreachable { slice, member } => {
                write!(f, "slice `{slice}` member `{member}` is unreachable from its OLT")
            }
            WavelengthClash { a, b, wavelength } => {
                write!(f, "slices `{a}` and `{b}` share a fibre span on wavelength {wavelength}")
            }
            BadRate { slice } => write!(f, "slice `{slice}` needs positive rates and frame period"),
            DuplicateSlice(s) => write!(f, "duplicate slice id `{s}`"),
            BadDelayPerKm(v) => write!(f, "propagation delay per km must be >= 0, got {v}"),
        }
    }
}

/// Tree structure derived from a [`TopologyConfig`]. Only built when the
/// span graph is a tree rooted at the CO.
#[derive(Clone, Debug)]
struct Tree {
    index: BTreeMap<String, usize>,
    parent: Vec<Option<usize>>,
    /// Length of the span to the parent.
    up_km: Vec<f64>,
    depth: Vec<usize>,
}

impl Tree {
    fn build(cfg: &TopologyConfig) -> Result<Tree, Vec<Violation>> {
        let mut v = Vec::new();
        let mut index = BTreeMap::new();
        for (i, n) in cfg.nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                v.push(Violation::DuplicateNode(n.id.clone()));
            }
        }
        let roots: Vec<&OdnNode> = cfg.nodes.iter().filter(|n| n.kind == NodeKind::CoOlt).collect();
        match roots.len() {
            0 => v.push(Violation::NoRoot),
            1 => {}
            _ => v.push(Violation::MultipleRoots(roots.iter().map(|n| n.id.clone()).collect())),
        }
        let n = cfg.nodes.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (si, s) in cfg.spans.iter().enumerate() {
            if !(s.length_km >= 0.0) || !s.length_km.is_finite() {
                v.push(Violation::BadSpanLength { span: si, length_km: s.length_km });
            }
            let a = index.get(&s.a).copied();
            let b = index.get(&s.b).copied();
            if a.is_none() {
                v.push(Violation::SpanUnknownNode { span: si, node: s.a.clone() });
            }
            if b.is_none() {
                v.push(Violation::SpanUnknownNode { span: si, node: s.b.clone() });
            }
            if let (Some(a), Some(b)) = (a, b) {
                if a == b {
                    v.push(Violation::NotATree(format!("span #{si} is a self-loop")));
                }
                adj[a].push((b, s.length_km));
                adj[b].push((a, s.length_km));
            }
        }
        if !v.is_empty() {
            return Err(v);
        }
        if cfg.spans.len() + 1 != n {
            v.push(Violation::NotATree(format!("{} nodes need {} spans, found {}", n, n - 1, cfg.spans.len())));
        }
        let root = index[&roots[0].id];
        let mut parent = vec![None; n];
        let mut up_km = vec![0.0; n];
        let mut depth = vec![0usize; n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &(w, len) in &adj[u] {
                if Some(w) == parent[u] {
                    continue;
                }
                if seen[w] {
                    v.push(Violation::NotATree(format!("cycle through `{}`", cfg.nodes[w].id)));
                    continue;
                }
                seen[w] = true;
                parent[w] = Some(u);
                up_km[w] = len;
                depth[w] = depth[u] + 1;
                stack.push(w);
            }
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                v.push(Violation::NotATree(format!("`{}` is disconnected from the CO", cfg.nodes[i].id)));
            }
        }
        if !v.is_empty() {
            return Err(v);
        }
        Ok(Tree { index, parent, up_km, depth })
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Non-root nodes whose parent span lies on the a-b path.
    fn path_spans(&self, a: usize, b: usize) -> Vec<usize> {
        let top = self.lca(a, b);
        let mut out = Vec::new();
        for mut x in [a, b] {
            while x != top {
                out.push(x);
                x = self.parent[x].unwrap();
            }
        }
        out
    }

    fn path_km(&self, a: usize, b: usize) -> f64 {
        let top = self.lca(a, b);
        let mut km = 0.0;
        for mut x in [a, b] {
            while x != top {
                km += self.up_km[x];
                x = self.parent[x].unwrap();
            }
        }
        km
    }
}

fn passive_path(cfg: &TopologyConfig, tree: &Tree, a: usize, b: usize, wavelength: u32) -> bool {
    let top = tree.lca(a, b);
    if top == a || top == b {
        return true;
    }
    let n = &cfg.nodes[top];
    n.kind == NodeKind::Splitter && n.reflects.contains(&wavelength)
}

/// Lists every broken invariant. Empty iff the configuration is valid.
pub fn validate_topology(cfg: &TopologyConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    if !(cfg.propagation_delay_us_per_km >= 0.0) {
        v.push(Violation::BadDelayPerKm(cfg.propagation_delay_us_per_km));
    }
    let tree = match Tree::build(cfg) {
        Ok(t) => Some(t),
        Err(mut tv) => {
            v.append(&mut tv);
            None
        }
    };
    let kind_of = |id: &str| cfg.nodes.iter().find(|n| n.id == id).map(|n| n.kind);

    for n in cfg.nodes.iter().filter(|n| n.kind == NodeKind::RuOnu) {
        let attached: Vec<&str> = cfg
            .spans
            .iter()
            .filter_map(|s| {
                if s.a == n.id {
                    Some(s.b.as_str())
                } else if s.b == n.id {
                    Some(s.a.as_str())
                } else {
                    None
                }
            })
            .collect();
        if attached.len() != 1 || kind_of(attached[0]) != Some(NodeKind::Splitter) {
            v.push(Violation::RuAttachment(n.id.clone()));
        }
    }

    let mut slice_ids = BTreeSet::new();
    let mut slice_spans: Vec<Option<BTreeSet<usize>>> = Vec::new();
    for s in &cfg.slices {
        if !slice_ids.insert(s.id.clone()) {
            v.push(Violation::DuplicateSlice(s.id.clone()));
        }
        if !(s.us_rate_bps > 0.0 && s.ds_rate_bps > 0.0 && s.frame_period_us > 0.0) {
            v.push(Violation::BadRate { slice: s.id.clone() });
        }
        if s.members.is_empty() {
            v.push(Violation::EmptySlice(s.id.clone()));
        }
        if s.members.contains(&s.olt) {
            v.push(Violation::OltInMembers { slice: s.id.clone() });
        }
        match kind_of(&s.olt) {
            Some(k) if k.is_olt() => {}
            _ => v.push(Violation::BadSliceOlt { slice: s.id.clone(), olt: s.olt.clone() }),
        }
        let mut pseudo = 0;
        for m in s.members.iter().filter(|m| **m != s.olt) {
            match kind_of(m) {
                Some(NodeKind::RuOnu) => {}
                Some(NodeKind::MecOlt) => pseudo += 1,
                _ => v.push(Violation::BadMember { slice: s.id.clone(), member: m.clone() }),
            }
        }
        if pseudo > 1 {
            v.push(Violation::TooManyPseudoOnus { slice: s.id.clone() });
        }
        let spans = tree.as_ref().and_then(|t| {
            let olt = *t.index.get(&s.olt)?;
            let mut set = BTreeSet::new();
            for m in &s.members {
                let Some(&mi) = t.index.get(m) else { continue };
                if mi == olt {
                    continue;
                }
                if !passive_path(cfg, t, olt, mi, s.wavelength) {
                    v.push(Violation::MemberUnreachable { slice: s.id.clone(), member: m.clone() });
                }
                set.extend(t.path_spans(olt, mi));
            }
            Some(set)
        });
        slice_spans.push(spans);
    }

    for i in 0..cfg.slices.len() {
        for j in (i + 1)..cfg.slices.len() {
            let (a, b) = (&cfg.slices[i], &cfg.slices[j]);
            if a.wavelength != b.wavelength {
                continue;
            }
            if let (Some(sa), Some(sb)) = (&slice_spans[i], &slice_spans[j]) {
                if !sa.is_disjoint(sb) {
                    v.push(Violation::WavelengthClash {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        wavelength: a.wavelength,
                    });
                }
            }
        }
    }
    v
}

/// A validated topology with fast path lookups. Immutable after
/// construction.
#[derive(Clone, Debug)]
pub struct Topology {
    cfg: TopologyConfig,
    tree: Tree,
}

impl Topology {
    pub fn new(cfg: TopologyConfig) -> Result<Topology, TopologyError> {
        let violations = validate_topology(&cfg);
        if !violations.is_empty() {
            return Err(TopologyError::Invalid(violations));
        }
        let tree = Tree::build(&cfg).map_err(TopologyError::Invalid)?;
        Ok(Topology { cfg, tree })
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.cfg
    }

    pub fn slice(&self, id: &str) -> Result<&VponSlice, TopologyError> {
        self.cfg
            .slices
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| TopologyError::UnknownSlice(id.to_string()))
    }

    pub fn node(&self, id: &str) -> Option<&OdnNode> {
        self.tree.index.get(id).map(|&i| &self.cfg.nodes[i])
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &OdnNode> {
        self.cfg.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// RU members of a slice, in declaration order.
    pub fn ru_members<'a>(&'a self, slice: &'a VponSlice) -> impl Iterator<Item = &'a str> + 'a {
        slice
            .members
            .iter()
            .filter(move |m| self.node(m).map(|n| n.kind) == Some(NodeKind::RuOnu))
            .map(String::as_str)
    }

    fn idx(&self, id: &str) -> Result<usize, TopologyError> {
        self.tree.index.get(id).copied().ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    /// Fibre length of the tree path between two nodes, ignoring slices.
    pub fn path_km(&self, a: &str, b: &str) -> Result<f64, TopologyError> {
        Ok(self.tree.path_km(self.idx(a)?, self.idx(b)?))
    }

    pub fn km_to_delay(&self, km: f64) -> SimTime {
        SimTime::from_us_f64(km * self.cfg.propagation_delay_us_per_km)
    }

    /// One-way propagation delay between two endpoints of `slice`.
    pub fn path_delay(&self, a: &str, b: &str, slice: &VponSlice) -> Result<SimTime, TopologyError> {
        for n in [a, b] {
            if n != slice.olt && !slice.members.iter().any(|m| m == n) {
                return Err(TopologyError::NotInSlice { node: n.to_string(), slice: slice.id.clone() });
            }
        }
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        if !passive_path(&self.cfg, &self.tree, ia, ib, slice.wavelength) {
            return Err(TopologyError::Unreachable { a: a.to_string(), b: b.to_string(), slice: slice.id.clone() });
        }
        Ok(self.km_to_delay(self.tree.path_km(ia, ib)))
    }
}

/// The reference ODN: eight RU sites, MEC-1 and MEC-2 under one reflective
/// splitter, feeder to the CO. RU to MEC-1 and MEC-1 to MEC-2 are 10 km each
/// through the splitter; RU to CO is 50 km.
pub fn reference_topology() -> TopologyConfig {
    let mut nodes = vec![
        OdnNode { id: "co".into(), kind: NodeKind::CoOlt, reflects: vec![] },
        OdnNode { id: "spl".into(), kind: NodeKind::Splitter, reflects: vec![1] },
        OdnNode { id: "mec1".into(), kind: NodeKind::MecOlt, reflects: vec![] },
        OdnNode { id: "mec2".into(), kind: NodeKind::MecOlt, reflects: vec![] },
    ];
    let mut spans = vec![
        FiberSpan { a: "co".into(), b: "spl".into(), length_km: 45.0 },
        FiberSpan { a: "spl".into(), b: "mec1".into(), length_km: 5.0 },
        FiberSpan { a: "spl".into(), b: "mec2".into(), length_km: 5.0 },
    ];
    let mut rus = Vec::new();
    for i in 0..8 {
        let id = format!("ru{i}");
        nodes.push(OdnNode { id: id.clone(), kind: NodeKind::RuOnu, reflects: vec![] });
        spans.push(FiberSpan { a: "spl".into(), b: id.clone(), length_km: 5.0 });
        rus.push(id);
    }
    let mut tier1_members = rus.clone();
    tier1_members.push("mec2".into());
    let slices = vec![
        VponSlice {
            id: "tier1".into(),
            wavelength: 1,
            olt: "mec1".into(),
            members: tier1_members,
            us_rate_bps: 10e9,
            ds_rate_bps: 10e9,
            frame_period_us: 125.0,
            dba: DbaPolicy::CodbaCgs,
            dl_phase_us: 0.0,
        },
        VponSlice {
            id: "co".into(),
            wavelength: 0,
            olt: "co".into(),
            members: rus,
            us_rate_bps: 10e9,
            ds_rate_bps: 10e9,
            frame_period_us: 125.0,
            dba: DbaPolicy::Codba,
            dl_phase_us: 0.0,
        },
    ];
    TopologyConfig { nodes, spans, slices, propagation_delay_us_per_km: 5.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> Topology {
        Topology::new(reference_topology()).unwrap()
    }

    #[test]
    fn reference_is_valid() {
        assert_eq!(validate_topology(&reference_topology()), vec![]);
    }

    #[test]
    fn reference_distances() {
        let t = topo();
        let tier1 = t.slice("tier1").unwrap().clone();
        let co = t.slice("co").unwrap().clone();
        assert_eq!(t.path_delay("ru0", "mec1", &tier1).unwrap(), SimTime::from_us(50));
        assert_eq!(t.path_delay("mec1", "mec2", &tier1).unwrap(), SimTime::from_us(50));
        assert_eq!(t.path_km("ru0", "mec2").unwrap(), 10.0);
        assert_eq!(t.path_delay("ru0", "co", &co).unwrap(), SimTime::from_us(250));
        assert_eq!(t.path_delay("ru3", "ru3", &co).unwrap(), SimTime::ZERO);
    }

    #[test]
    fn twenty_km_at_five_us_per_km() {
        let mut cfg = reference_topology();
        cfg.spans[2].length_km = 15.0; // spl-mec2
        let t = Topology::new(cfg).unwrap();
        let tier1 = t.slice("tier1").unwrap().clone();
        assert_eq!(t.path_delay("ru0", "mec2", &tier1).unwrap(), SimTime::from_us(100));
    }

    #[test]
    fn non_reflected_wavelength_is_unreachable() {
        let t = topo();
        let mut slice = t.slice("co").unwrap().clone();
        slice.members.push("mec1".into());
        assert!(matches!(t.path_delay("ru0", "mec1", &slice), Err(TopologyError::Unreachable { .. })));
    }

    #[test]
    fn endpoints_must_belong_to_slice() {
        let t = topo();
        let co = t.slice("co").unwrap().clone();
        assert!(matches!(t.path_delay("mec2", "co", &co), Err(TopologyError::NotInSlice { .. })));
    }

    #[test]
    fn shared_span_same_wavelength_is_one_violation() {
        let mut cfg = reference_topology();
        cfg.slices[1].wavelength = 1;
        let v = validate_topology(&cfg);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(v[0], Violation::WavelengthClash { .. }));
    }

    #[test]
    fn olt_in_members_is_one_violation() {
        let mut cfg = reference_topology();
        cfg.slices[1].members.push("co".into());
        let v = validate_topology(&cfg);
        assert_eq!(v, vec![Violation::OltInMembers { slice: "co".into() }]);
    }

    #[test]
    fn structural_violations() {
        let mut cfg = reference_topology();
        cfg.spans.push(FiberSpan { a: "ru0".into(), b: "ru1".into(), length_km: 1.0 });
        let v = validate_topology(&cfg);
        assert!(v.iter().any(|x| matches!(x, Violation::NotATree(_))));
        assert!(v.iter().any(|x| matches!(x, Violation::RuAttachment(_))));

        let mut cfg = reference_topology();
        cfg.slices[0].members.clear();
        assert!(validate_topology(&cfg).contains(&Violation::EmptySlice("tier1".into())));

        let mut cfg = reference_topology();
        cfg.nodes.push(OdnNode { id: "ru0".into(), kind: NodeKind::RuOnu, reflects: vec![] });
        assert!(validate_topology(&cfg).contains(&Violation::DuplicateNode("ru0".into())));
    }
}
