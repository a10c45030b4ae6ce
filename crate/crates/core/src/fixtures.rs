//! Bundled benchmark networks, case-study architectures and the datapoint corpus.

use std::path::Path;

use crate::dse::MemoryHierarchy;
use crate::error::Result;
use crate::imc_cost::ArchConfig;
use crate::tech_model::{DatapointCorpus, ModelConstants, TechConfig};
use crate::workload::Network;

pub const NETWORK_NAMES: [&str; 4] = ["resnet8", "ds_cnn", "mobilenet_v1", "deepautoencoder"];
pub const ARCH_NAMES: [&str; 4] = ["aimc_1152x256", "aimc_64x32", "dimc_256x256", "dimc_48x4"];

const NETWORKS: [(&str, &str); 4] = [
    ("resnet8", include_str!("../data/networks/resnet8.json")),
    ("ds_cnn", include_str!("../data/networks/ds_cnn.json")),
    ("mobilenet_v1", include_str!("../data/networks/mobilenet_v1.json")),
    ("deepautoencoder", include_str!("../data/networks/deepautoencoder.json")),
];

const ARCHS: [(&str, &str); 4] = [
    ("aimc_1152x256", include_str!("../data/arch/aimc_1152x256.toml")),
    ("aimc_64x32", include_str!("../data/arch/aimc_64x32.toml")),
    ("dimc_256x256", include_str!("../data/arch/dimc_256x256.toml")),
    ("dimc_48x4", include_str!("../data/arch/dimc_48x4.toml")),
];

const DATAPOINTS: &str = include_str!("../data/datapoints.json");
const HIERARCHY: &str = include_str!("../data/hierarchy.toml");

fn lookup<'a>(table: &[(&str, &'a str)], name: &str) -> Option<&'a str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn network(name: &str) -> Option<Result<Network>> {
    lookup(&NETWORKS, name).map(|src| Network::from_json_str(src, Path::new(&format!("<bundled>/{name}.json"))))
}

pub fn networks() -> Result<Vec<Network>> {
    NETWORK_NAMES.iter().map(|n| network(n).expect("bundled network")).collect()
}

pub fn arch(name: &str) -> Option<Result<ArchConfig>> {
    lookup(&ARCHS, name).map(|src| ArchConfig::from_toml_str(src, Path::new(&format!("<bundled>/{name}.toml"))))
}

pub fn archs() -> Result<Vec<ArchConfig>> {
    ARCH_NAMES.iter().map(|n| arch(n).expect("bundled arch")).collect()
}

pub fn datapoints() -> Result<DatapointCorpus> {
    DatapointCorpus::from_json_str(DATAPOINTS, Path::new("<bundled>/datapoints.json"))
}

pub fn hierarchy() -> Result<MemoryHierarchy> {
    MemoryHierarchy::from_toml_str(HIERARCHY, Path::new("<bundled>/hierarchy.toml"))
}

/// Technology model fitted to the bundled corpus with default constants.
pub fn tech() -> Result<TechConfig> {
    TechConfig::fitted(&datapoints()?.datapoints, &ModelConstants::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        assert_eq!(networks().unwrap().len(), 4);
        let a = archs().unwrap();
        assert_eq!(a.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ARCH_NAMES);
        assert_eq!(datapoints().unwrap().datapoints.len(), 3);
        assert_eq!(hierarchy().unwrap(), MemoryHierarchy::default());
        assert!(network("nope").is_none());
    }

    #[test]
    fn bundled_fit_succeeds() {
        let t = tech().unwrap();
        let fit = t.fit.unwrap();
        assert!(fit.slope.is_finite() && fit.eval(28.0) > 0.0);
        assert!(t.constants.k3 > 0.0);
    }
}
