#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use parcelsim::network::{synthesize_clients, Client};
use parcelsim::rng::{domain, substream_seed};
use parcelsim::{load_config, Config, Scenario};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn bundled_config_path() -> PathBuf {
    workspace_root().join("configs/four_networks.toml")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn bundled_config() -> Config {
    load_config(&bundled_config_path()).expect("bundled config loads")
}

pub fn scenario(cfg: &Config, id: &str) -> Scenario {
    cfg.scenario(id).cloned().unwrap_or_else(|| panic!("scenario {id} in config"))
}

/// Clients for every network, drawn the way one replication draws them.
pub fn clients_for(cfg: &Config, rep_seed: u64) -> Vec<Client> {
    cfg.networks
        .iter()
        .enumerate()
        .flat_map(|(i, n)| {
            synthesize_clients(n, &cfg.clients, &cfg.carriers, substream_seed(rep_seed, &[domain::CLIENTS, i as u64]))
        })
        .collect()
}

/// Per-network order totals of the bundled scenarios.
pub fn scenario_totals() -> BTreeMap<String, u64> {
    [("S1", 1140), ("R2", 800), ("R3", 810), ("S4", 670)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}
