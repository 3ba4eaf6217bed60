//! Topology files: explicit node and link lists, or a tiered generator.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csm::PolicyKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Router,
    Client,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    /// Per-router override of the experiment policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    /// Per-router override of the experiment capacity, in packets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, kind: NodeKind) -> Self {
        NodeSpec {
            name: name.into(),
            kind,
            policy: None,
            capacity: None,
        }
    }
}

/// A link between an upstream node (toward the source) and a downstream one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub up: String,
    pub down: String,
    /// Fixed bandwidth. Client links without one draw from the client
    /// bandwidth distribution; other links use the core bandwidth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<f64>,
}

impl LinkSpec {
    pub fn new(up: impl Into<String>, down: impl Into<String>) -> Self {
        LinkSpec {
            up: up.into(),
            down: down.into(),
            bandwidth_mbps: None,
            delay_ms: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkDefaults {
    pub core_bandwidth_mbps: f64,
    pub client_bandwidth_mean_mbps: f64,
    pub client_bandwidth_sd_mbps: f64,
    pub client_bandwidth_min_mbps: f64,
    pub delay_ms: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            core_bandwidth_mbps: 20.0,
            client_bandwidth_mean_mbps: 4.0,
            client_bandwidth_sd_mbps: 1.5,
            client_bandwidth_min_mbps: 0.5,
            delay_ms: 5.0,
        }
    }
}

/// Two-tier layout: the source feeds every core router, each edge router
/// hangs off `edge_uplinks` cores and each client off `client_uplinks` edges,
/// assigned round-robin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieredSpec {
    pub cores: usize,
    pub edges: usize,
    pub clients: usize,
    #[serde(default = "two")]
    pub edge_uplinks: usize,
    #[serde(default = "two")]
    pub client_uplinks: usize,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub defaults: LinkDefaults,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiered: Option<TieredSpec>,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

/// Validated topology with nodes in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub defaults: LinkDefaults,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedLink {
    pub up: usize,
    pub down: usize,
}

impl TieredSpec {
    pub fn build(&self) -> Result<(Vec<NodeSpec>, Vec<LinkSpec>)> {
        if self.cores == 0 || self.edges == 0 || self.clients == 0 {
            return Err(Error::config("tiered topology needs at least one core, edge and client"));
        }
        if self.edge_uplinks == 0 || self.edge_uplinks > self.cores {
            return Err(Error::config("edge_uplinks must be between 1 and the number of cores"));
        }
        if self.client_uplinks == 0 || self.client_uplinks > self.edges {
            return Err(Error::config("client_uplinks must be between 1 and the number of edges"));
        }
        let mut nodes = vec![NodeSpec::new("source", NodeKind::Source)];
        let mut links = Vec::new();
        for c in 0..self.cores {
            nodes.push(NodeSpec::new(format!("core{c}"), NodeKind::Router));
            links.push(LinkSpec::new("source", format!("core{c}")));
        }
        for e in 0..self.edges {
            nodes.push(NodeSpec::new(format!("edge{e}"), NodeKind::Router));
            for k in 0..self.edge_uplinks {
                links.push(LinkSpec::new(format!("core{}", (e + k) % self.cores), format!("edge{e}")));
            }
        }
        for c in 0..self.clients {
            nodes.push(NodeSpec::new(format!("client{c}"), NodeKind::Client));
            for k in 0..self.client_uplinks {
                links.push(LinkSpec::new(format!("edge{}", (c + k) % self.edges), format!("client{c}")));
            }
        }
        Ok((nodes, links))
    }
}

impl Topology {
    pub fn from_config(cfg: TopologyConfig) -> Result<Self> {
        let (mut nodes, mut links) = match &cfg.tiered {
            Some(t) => t.build()?,
            None => (Vec::new(), Vec::new()),
        };
        nodes.extend(cfg.nodes);
        links.extend(cfg.links);
        let topo = Topology {
            defaults: cfg.defaults,
            nodes,
            links,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TopologyConfig = toml::from_str(s).map_err(|e| Error::config(format!("topology: {e}")))?;
        Topology::from_config(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: TopologyConfig = toml::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        Topology::from_config(cfg)
    }

    pub fn tiered(spec: TieredSpec) -> Result<Self> {
        Topology::from_config(TopologyConfig {
            tiered: Some(spec),
            ..TopologyConfig::default()
        })
    }

    /// Source, a chain of `routers` routers, one client at the far end.
    pub fn line(routers: usize) -> Result<Self> {
        let mut nodes = vec![NodeSpec::new("source", NodeKind::Source)];
        let mut links = Vec::new();
        let mut prev = "source".to_string();
        for r in 0..routers {
            let name = format!("r{r}");
            nodes.push(NodeSpec::new(name.clone(), NodeKind::Router));
            links.push(LinkSpec::new(prev, name.clone()));
            prev = name;
        }
        nodes.push(NodeSpec::new("client0", NodeKind::Client));
        links.push(LinkSpec::new(prev, "client0"));
        Topology::from_config(TopologyConfig {
            nodes,
            links,
            ..TopologyConfig::default()
        })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn resolved_links(&self) -> Vec<ResolvedLink> {
        let idx: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
        self.links
            .iter()
            .map(|l| ResolvedLink {
                up: idx[l.up.as_str()],
                down: idx[l.down.as_str()],
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let d = &self.defaults;
        let checks = [
            ("core_bandwidth_mbps", d.core_bandwidth_mbps, false),
            ("client_bandwidth_mean_mbps", d.client_bandwidth_mean_mbps, false),
            ("client_bandwidth_sd_mbps", d.client_bandwidth_sd_mbps, true),
            ("client_bandwidth_min_mbps", d.client_bandwidth_min_mbps, false),
            ("delay_ms", d.delay_ms, true),
        ];
        for (name, v, zero_ok) in checks {
            if !v.is_finite() || v < 0.0 || (!zero_ok && v == 0.0) {
                return Err(Error::config(format!("topology default {name} = {v} is out of range")));
            }
        }

        let mut idx = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if idx.insert(n.name.as_str(), i).is_some() {
                return Err(Error::config(format!("duplicate node name {:?}", n.name)));
            }
            if n.kind != NodeKind::Router && (n.policy.is_some() || n.capacity.is_some()) {
                return Err(Error::config(format!("node {:?}: policy and capacity apply to routers only", n.name)));
            }
        }
        if self.count(NodeKind::Source) == 0 {
            return Err(Error::config("topology has no source"));
        }
        if self.count(NodeKind::Client) == 0 {
            return Err(Error::config("topology has no client"));
        }

        let mut ups: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        let mut seen = HashSet::new();
        for l in &self.links {
            let (Some(&u), Some(&dn)) = (idx.get(l.up.as_str()), idx.get(l.down.as_str())) else {
                return Err(Error::config(format!("link {} -> {} names an unknown node", l.up, l.down)));
            };
            if u == dn {
                return Err(Error::config(format!("link {} -> {} is a self loop", l.up, l.down)));
            }
            if !seen.insert((u, dn)) {
                return Err(Error::config(format!("duplicate link {} -> {}", l.up, l.down)));
            }
            if self.nodes[dn].kind == NodeKind::Source {
                return Err(Error::config(format!("link {} -> {}: a source has no upstream", l.up, l.down)));
            }
            if self.nodes[u].kind == NodeKind::Client {
                return Err(Error::config(format!("link {} -> {}: a client has no downstream", l.up, l.down)));
            }
            for (what, v) in [("bandwidth_mbps", l.bandwidth_mbps), ("delay_ms", l.delay_ms)] {
                if let Some(v) = v {
                    if !v.is_finite() || v < 0.0 || (what == "bandwidth_mbps" && v == 0.0) {
                        return Err(Error::config(format!("link {} -> {}: {what} = {v} is out of range", l.up, l.down)));
                    }
                }
            }
            ups[dn].push(u);
        }

        // Every non-source node needs an upward path to a source, with no cycles.
        let mut state = vec![0u8; self.nodes.len()];
        fn reaches(n: usize, nodes: &[NodeSpec], ups: &[Vec<usize>], state: &mut [u8]) -> Result<bool> {
            match state[n] {
                1 => return Err(Error::config(format!("upstream cycle through {:?}", nodes[n].name))),
                2 => return Ok(true),
                3 => return Ok(false),
                _ => {}
            }
            if nodes[n].kind == NodeKind::Source {
                state[n] = 2;
                return Ok(true);
            }
            state[n] = 1;
            let mut ok = false;
            for &u in &ups[n] {
                ok |= reaches(u, nodes, ups, state)?;
            }
            state[n] = if ok { 2 } else { 3 };
            Ok(ok)
        }
        for i in 0..self.nodes.len() {
            if !reaches(i, &self.nodes, &ups, &mut state)? {
                return Err(Error::config(format!("node {:?} has no route to a source", self.nodes[i].name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_tiered_shape() {
        let t = Topology::tiered(TieredSpec {
            cores: 2,
            edges: 4,
            clients: 12,
            edge_uplinks: 2,
            client_uplinks: 2,
        })
        .unwrap();
        assert_eq!(t.count(NodeKind::Source), 1);
        assert_eq!(t.count(NodeKind::Router), 6);
        assert_eq!(t.count(NodeKind::Client), 12);
        assert_eq!(t.links.len(), 2 + 8 + 24);
        let c5: Vec<_> = t.links.iter().filter(|l| l.down == "client5").map(|l| l.up.as_str()).collect();
        assert_eq!(c5, ["edge1", "edge2"]);
    }

    #[test]
    fn full_scale_tiered_shape() {
        let t = Topology::tiered(TieredSpec {
            cores: 10,
            edges: 35,
            clients: 123,
            edge_uplinks: 2,
            client_uplinks: 2,
        })
        .unwrap();
        assert_eq!(t.count(NodeKind::Router), 45);
        assert_eq!(t.count(NodeKind::Client), 123);
    }

    #[test]
    fn explicit_file_parses() {
        let t = Topology::from_toml_str(
            r#"
            [defaults]
            delay_ms = 2.0

            [[nodes]]
            name = "s"
            kind = "source"
            [[nodes]]
            name = "r"
            kind = "router"
            policy = "lce_lru"
            capacity = 50
            [[nodes]]
            name = "c"
            kind = "client"

            [[links]]
            up = "s"
            down = "r"
            [[links]]
            up = "r"
            down = "c"
            bandwidth_mbps = 3.0
            "#,
        )
        .unwrap();
        assert_eq!(t.nodes[1].policy, Some(PolicyKind::LceLru));
        assert_eq!(t.defaults.delay_ms, 2.0);
        assert_eq!(t.resolved_links()[1], ResolvedLink { up: 1, down: 2 });
    }

    #[test]
    fn rejects_malformed() {
        let dangling = r#"
            [[nodes]]
            name = "s"
            kind = "source"
            [[nodes]]
            name = "c"
            kind = "client"
            [[links]]
            up = "s"
            down = "x"
        "#;
        assert!(Topology::from_toml_str(dangling).is_err());
        let unroutable = r#"
            [[nodes]]
            name = "s"
            kind = "source"
            [[nodes]]
            name = "r"
            kind = "router"
            [[nodes]]
            name = "c"
            kind = "client"
            [[links]]
            up = "r"
            down = "c"
        "#;
        assert!(Topology::from_toml_str(unroutable).is_err());
        let cycle = r#"
            [[nodes]]
            name = "s"
            kind = "source"
            [[nodes]]
            name = "a"
            kind = "router"
            [[nodes]]
            name = "b"
            kind = "router"
            [[nodes]]
            name = "c"
            kind = "client"
            [[links]]
            up = "a"
            down = "b"
            [[links]]
            up = "b"
            down = "a"
            [[links]]
            up = "b"
            down = "c"
        "#;
        assert!(Topology::from_toml_str(cycle).is_err());
        assert!(Topology::from_toml_str("[[nodes]]\nname = \"s\"\nkind = \"source\"\n").is_err());
        assert!(Topology::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn line_builder() {
        let t = Topology::line(3).unwrap();
        assert_eq!(t.count(NodeKind::Router), 3);
        assert_eq!(t.links.len(), 4);
    }
}
