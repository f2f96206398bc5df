//! Cluster bus and inter-cluster mesh network. The two fabrics are
//! independent: memory traffic never enters the mesh.

mod bus;
mod mesh;
mod noc;

pub use bus::{BusConfig, Channel, ChannelKind, ClusterBus, Grant};
pub use mesh::{
    mean_hop_count, mean_hop_count_distinct, parse_dims, ratio_to_f64, route_next_hop, Coord,
    MeshError, MeshTopology, Port,
};
pub use noc::{
    packetize, simulate_messages, MeshNetwork, MessageSpec, NocCounters, NocEvent, Packet,
    PacketKind,
};
