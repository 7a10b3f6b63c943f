pub mod amount;
pub mod assimilate;
pub mod collect;
pub mod evolve;
pub mod fixture;
pub mod graph;
pub mod load;
pub mod onto;
pub mod pass;
pub mod pipeline;
pub mod provenance;
pub mod reuse;
pub mod verify;
