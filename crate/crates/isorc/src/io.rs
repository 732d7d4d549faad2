//! Text formats: a configuration is one JSON header line describing the lattice,
//! followed by one line of `0`/`1` edge states in edge-id order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{IsoradialLattice, LatticeError, LatticeSpec};
use crate::rcm::Configuration;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing {0} line")]
    Missing(&'static str),
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("lattice hash mismatch")]
    HashMismatch,
    #[error("expected {expected} edge states, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid edge state {0:?}")]
    BadState(char),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigHeader {
    pub lattice: LatticeSpec,
    pub lattice_hash: String,
    pub num_edges: usize,
}

pub fn lattice_hash(spec: &LatticeSpec) -> String {
    let bytes = serde_json::to_vec(spec).expect("lattice spec serialises");
    hex::encode(Sha256::digest(&bytes))
}

pub fn bit_string(cfg: &Configuration) -> String {
    cfg.open
        .iter()
        .map(|&o| if o { '1' } else { '0' })
        .collect()
}

pub fn parse_bits(s: &str) -> Result<Configuration, IoError> {
    let open = s
        .trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(IoError::BadState(c)),
        })
        .collect::<Result<_, _>>()?;
    Ok(Configuration { open })
}

pub fn write_configuration(lat: &IsoradialLattice, cfg: &Configuration) -> String {
    let spec = lat.spec();
    let header = ConfigHeader {
        lattice_hash: lattice_hash(&spec),
        lattice: spec,
        num_edges: cfg.len(),
    };
    format!(
        "{}\n{}\n",
        serde_json::to_string(&header).expect("header serialises"),
        bit_string(cfg)
    )
}

pub fn read_configuration(text: &str) -> Result<(IsoradialLattice, Configuration), IoError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: ConfigHeader =
        serde_json::from_str(lines.next().ok_or(IoError::Missing("header"))?)?;
    if lattice_hash(&header.lattice) != header.lattice_hash {
        return Err(IoError::HashMismatch);
    }
    let lat = IsoradialLattice::from_spec(&header.lattice)?;
    let cfg = parse_bits(lines.next().ok_or(IoError::Missing("configuration"))?)?;
    if cfg.len() != lat.num_edges() {
        return Err(IoError::Length {
            expected: lat.num_edges(),
            found: cfg.len(),
        });
    }
    Ok((lat, cfg))
}
