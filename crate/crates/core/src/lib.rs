pub mod bench;
pub mod cluster;
pub mod config;
pub mod geom;
pub mod ingest;
pub mod model;
pub mod rplus;
pub mod transport;

mod bytes;
mod codec;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/rplus-tree.md")]
    mod rplus_tree {}
    #[doc = include_str!("../../../book/src/ingestion.md")]
    mod ingestion {}
    #[doc = include_str!("../../../book/src/cluster.md")]
    mod cluster {}
    #[doc = include_str!("../../../book/src/wire-protocol.md")]
    mod wire_protocol {}
    #[doc = include_str!("../../../book/src/snapshot-format.md")]
    mod snapshot_format {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
