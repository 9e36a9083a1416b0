//! JSON network file: counts are the primary payload, adjacency and truth optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgen::{
    BlockPair, BlockSeries, BlockTruth, DynamicNetwork, NetworkConfig, NetworkMeta, NodeId,
    Snapshot, Truth,
};

pub const NETWORK_SCHEMA_VERSION: u64 = 1;

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct FileMeta {
    k: u32,
    d: usize,
    #[serde(rename = "T")]
    steps: usize,
    seed: u64,
    #[serde(default)]
    generator_params: Option<NetworkConfig>,
}

#[derive(Serialize, Deserialize)]
struct FileBlock {
    type_a: u32,
    type_b: u32,
    n: u64,
    #[serde(default)]
    counts: Option<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct FileSnapshot {
    t: usize,
    edges: Vec<[String; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FileTruthBlock {
    type_a: u32,
    type_b: u32,
    states: Vec<Vec<f64>>,
    densities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FileTruth {
    blocks: Vec<FileTruthBlock>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    schema_version: u64,
    meta: FileMeta,
    blocks: Vec<FileBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjacency: Option<Vec<FileSnapshot>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<FileTruth>,
}

fn pair_of(type_a: u32, type_b: u32) -> Result<BlockPair> {
    if type_a > type_b {
        return Err(Error::validation(format!("block ({type_a},{type_b}) must satisfy type_a <= type_b")));
    }
    Ok(BlockPair::new(type_a, type_b))
}

/// Serializes a network to the JSON document format.
pub fn network_to_json(net: &DynamicNetwork) -> Result<String> {
    net.validate()?;
    let file = NetworkFile {
        schema_version: NETWORK_SCHEMA_VERSION,
        meta: FileMeta {
            k: net.meta.k,
            d: net.meta.period,
            steps: net.meta.steps,
            seed: net.meta.seed,
            generator_params: net.meta.generator_params.clone(),
        },
        blocks: net
            .blocks
            .iter()
            .map(|b| FileBlock { type_a: b.pair.a, type_b: b.pair.b, n: b.n, counts: Some(b.counts.clone()) })
            .collect(),
        adjacency: net.adjacency.as_ref().map(|snaps| {
            snaps
                .iter()
                .map(|s| FileSnapshot {
                    t: s.t,
                    edges: s.edges.iter().map(|(u, v)| [u.to_string(), v.to_string()]).collect(),
                })
                .collect()
        }),
        truth: net.truth.as_ref().map(|t| FileTruth {
            blocks: t
                .blocks
                .iter()
                .map(|b| FileTruthBlock {
                    type_a: b.pair.a,
                    type_b: b.pair.b,
                    states: b.states.clone(),
                    densities: b.densities.clone(),
                })
                .collect(),
        }),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse { path: "<network>".into(), message: e.to_string() })
}

/// Parses a network document. `origin` names the source in error messages.
pub fn network_from_json(text: &str, origin: &str) -> Result<DynamicNetwork> {
    let parse_err = |e: serde_json::Error| Error::Parse { path: origin.to_string(), message: e.to_string() };
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_err)?;
    match probe.schema_version {
        Some(NETWORK_SCHEMA_VERSION) => {}
        Some(found) => return Err(Error::Version { found, expected: NETWORK_SCHEMA_VERSION }),
        None => {
            return Err(Error::Parse { path: origin.to_string(), message: "missing field `schema_version`".into() })
        }
    }
    let file: NetworkFile = serde_json::from_str(text).map_err(parse_err)?;

    let mut blocks = Vec::with_capacity(file.blocks.len());
    for (i, b) in file.blocks.into_iter().enumerate() {
        let counts = b.counts.ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            message: format!("blocks[{i}] ({},{}): missing field `counts`", b.type_a, b.type_b),
        })?;
        blocks.push(BlockSeries { pair: pair_of(b.type_a, b.type_b)?, n: b.n, counts });
    }

    let adjacency = match file.adjacency {
        None => None,
        Some(snaps) => {
            let mut out = Vec::with_capacity(snaps.len());
            for s in snaps {
                let mut edges = Vec::with_capacity(s.edges.len());
                for [u, v] in s.edges {
                    let (u, v): (NodeId, NodeId) = (u.parse()?, v.parse()?);
                    edges.push(if u <= v { (u, v) } else { (v, u) });
                }
                out.push(Snapshot { t: s.t, edges });
            }
            Some(out)
        }
    };

    let truth = match file.truth {
        None => None,
        Some(t) => {
            let mut blocks = Vec::with_capacity(t.blocks.len());
            for b in t.blocks {
                blocks.push(BlockTruth { pair: pair_of(b.type_a, b.type_b)?, states: b.states, densities: b.densities });
            }
            Some(Truth { blocks })
        }
    };

    let net = DynamicNetwork {
        meta: NetworkMeta {
            k: file.meta.k,
            period: file.meta.d,
            steps: file.meta.steps,
            seed: file.meta.seed,
            generator_params: file.meta.generator_params,
        },
        blocks,
        adjacency,
        truth,
    };
    net.validate()?;
    Ok(net)
}

pub fn write_network(net: &DynamicNetwork, path: &Path) -> Result<()> {
    let text = network_to_json(net)?;
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_network(path: &Path) -> Result<DynamicNetwork> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    network_from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{generate, BlockSizing, NetworkConfig};

    #[test]
    fn round_trip_with_adjacency_and_truth() {
        let mut cfg = NetworkConfig::default_experiment(4);
        cfg.sizing = BlockSizing::NodesPerType(vec![5, 4, 3]);
        cfg.adjacency = true;
        cfg.steps = 10;
        let net = generate(&cfg).unwrap();
        let text = network_to_json(&net).unwrap();
        let back = network_from_json(&text, "mem").unwrap();
        assert_eq!(back, net);
        assert_eq!(network_to_json(&back).unwrap(), text);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = generate(&NetworkConfig::default_experiment(1)).unwrap();
        write_network(&net, &path).unwrap();
        assert_eq!(read_network(&path).unwrap(), net);
    }

    fn minimal(counts: &str) -> String {
        format!(
            r#"{{"schema_version": 1, "meta": {{"k": 1, "d": 2, "T": 2, "seed": 0}},
               "blocks": [{{"type_a": 0, "type_b": 0, "n": 3{counts}}}]}}"#
        )
    }

    #[test]
    fn count_above_n_is_rejected() {
        let err = network_from_json(&minimal(r#", "counts": [1, 4]"#), "mem").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("exceeds"));
    }

    #[test]
    fn missing_counts_names_block() {
        let err = network_from_json(&minimal(""), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(0,0)") && msg.contains("counts"), "{msg}");
    }

    #[test]
    fn version_mismatch() {
        let text = minimal(r#", "counts": [1, 2]"#).replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(network_from_json(&text, "mem"), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn malformed_json_has_position() {
        let err = network_from_json("{\"schema_version\": 1,\n \"meta\": [", "mem").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn reals_survive_exactly() {
        let net = generate(&NetworkConfig::default_experiment(12)).unwrap();
        let back = network_from_json(&network_to_json(&net).unwrap(), "mem").unwrap();
        let (a, b) = (net.truth.unwrap(), back.truth.unwrap());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            for (u, v) in x.densities.iter().zip(&y.densities) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
