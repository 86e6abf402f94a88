//! Data loading and splitting driven by a [`RunConfig`].

use crate::config::{DataFormat, RunConfig};
use crate::error::Result;
use crate::graph::{
    build_ubi_graph, load_instacart, load_transactions, read_edge_list, split_with_validation,
    SplitResult, TransactionLog, UbiGraph,
};
use crate::synthetic::planted_intents;

/// Reads the configured transaction source, optionally keeping a random subset of users.
pub fn load_log(config: &RunConfig) -> Result<TransactionLog> {
    let data = &config.data;
    let log = match data.format {
        DataFormat::Csv => load_transactions(&data.path, &data.columns)?,
        DataFormat::Instacart => load_instacart(&data.path, data.min_basket_size)?,
        DataFormat::EdgeList => read_edge_list(&data.path)?,
        DataFormat::Planted => planted_intents(&data.planted)?,
    };
    Ok(if data.sample_users > 0 {
        log.sample_users(data.sample_users, config.split.seed)
    } else {
        log
    })
}

/// Loads, filters by basket size and splits within baskets.
pub fn prepare(config: &RunConfig) -> Result<(UbiGraph, SplitResult)> {
    let log = load_log(config)?;
    let graph = build_ubi_graph(&log, config.data.min_basket_size)?;
    let split = split_with_validation(
        &graph,
        config.split.train_fraction,
        config.split.validation_fraction,
        config.split.seed,
    )?;
    Ok((graph, split))
}
