use std::net::SocketAddr;
use std::sync::Arc;

use super::coordinator::{Coordinator, CoordinatorConfig, ShardRef};
use super::node::{shard_name, NodeHost, StoringNode};
use super::{ClusterError, COORDINATOR_NAME};
use crate::transport::{Endpoint, InProcessFabric, TcpEndpoint, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FabricKind {
    /// Deterministic in-memory fabric seeded for its reorder rules.
    InProcess { seed: u64 },
    /// Loopback TCP, one listener per node on a free port.
    Tcp,
}

/// A coordinator and its storing nodes running in this process.
pub struct LocalCluster {
    // field order is drop order: stop the coordinator before the nodes
    coordinator: Coordinator,
    hosts: Vec<NodeHost>,
    fabric: Option<InProcessFabric>,
    coordinator_addr: Option<SocketAddr>,
}

fn io(e: std::io::Error) -> ClusterError {
    ClusterError::Transport(TransportError::Io(e.to_string()))
}

impl LocalCluster {
    pub fn start(nodes: Vec<StoringNode>, config: CoordinatorConfig, fabric: FabricKind) -> Result<Self, ClusterError> {
        let shards: Vec<ShardRef> = nodes
            .iter()
            .map(|n| ShardRef {
                node_id: n.node_id(),
                name: shard_name(n.node_id()),
            })
            .collect();
        for n in &nodes {
            if n.dimension() != config.dimension {
                return Err(ClusterError::Dimension {
                    expected: config.dimension,
                    found: n.dimension(),
                });
            }
        }
        let nodes: Vec<Arc<StoringNode>> = nodes.into_iter().map(Arc::new).collect();
        match fabric {
            FabricKind::InProcess { seed } => {
                let fabric = InProcessFabric::new(seed);
                let hosts = nodes
                    .into_iter()
                    .map(|n| {
                        let ep: Arc<dyn Endpoint> = Arc::new(fabric.endpoint(&shard_name(n.node_id())));
                        NodeHost::spawn(n, ep)
                    })
                    .collect();
                let ep: Arc<dyn Endpoint> = Arc::new(fabric.endpoint(COORDINATOR_NAME));
                Ok(LocalCluster {
                    coordinator: Coordinator::start(ep, shards, config)?,
                    hosts,
                    fabric: Some(fabric),
                    coordinator_addr: None,
                })
            }
            FabricKind::Tcp => {
                let coord = TcpEndpoint::bind(COORDINATOR_NAME, "127.0.0.1:0").map_err(io)?;
                let mut hosts = Vec::with_capacity(nodes.len());
                for n in nodes {
                    let name = shard_name(n.node_id());
                    let ep = TcpEndpoint::bind(&name, "127.0.0.1:0").map_err(io)?;
                    coord.add_peer(&name, ep.local_addr());
                    hosts.push(NodeHost::spawn(n, Arc::new(ep)));
                }
                let addr = coord.local_addr();
                Ok(LocalCluster {
                    coordinator: Coordinator::start(Arc::new(coord), shards, config)?,
                    hosts,
                    fabric: None,
                    coordinator_addr: Some(addr),
                })
            }
        }
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn node(&self, node_id: u32) -> Option<&Arc<StoringNode>> {
        self.hosts.iter().map(NodeHost::node).find(|n| n.node_id() == node_id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Arc<StoringNode>> {
        self.hosts.iter().map(NodeHost::node)
    }

    /// Stops one storing node from answering. Returns false for an unknown id.
    pub fn kill(&self, node_id: u32) -> bool {
        match self.hosts.iter().find(|h| h.node().node_id() == node_id) {
            Some(h) => {
                h.kill();
                true
            }
            None => false,
        }
    }

    /// The in-process fabric, for installing link rules.
    pub fn fabric(&self) -> Option<&InProcessFabric> {
        self.fabric.as_ref()
    }

    /// Where remote clients reach the coordinator (TCP clusters only).
    pub fn coordinator_addr(&self) -> Option<SocketAddr> {
        self.coordinator_addr
    }
}
