//! Interaction-log ingestion: TSV parsing, leave-last-out splits, negative
//! candidate sampling and the bipartite user-item graph.

mod graph;
mod parse;
mod split;

pub use graph::{build_graph, InteractionGraph};
pub use parse::{parse_interactions, parse_interactions_str, IdMap, Interaction, InteractionLog};
pub use split::{
    make_splits, read_split_manifest, sample_direct_candidates, sample_negatives,
    write_split_manifest, SplitDataset, UserSplit,
};
