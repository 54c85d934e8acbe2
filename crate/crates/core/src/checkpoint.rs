//! Chain checkpoints.
//!
//! File layout: a magic line with the format version, a line holding the
//! hex SHA-256 of everything after it, one JSON header line, then the spin
//! array as little-endian `f64`. The header carries everything needed to
//! continue the chain bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{BondMask, LatticeGraph, LatticeKind};
use crate::rng::RngState;
use crate::sampler::{ChainState, Schedule};
use crate::spin::{ModelParams, SpinConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "onperc-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub lattice: LatticeKind,
    pub size: usize,
    pub params: ModelParams,
    pub schedule: Schedule,
    pub mask: BondMask,
    pub rng: RngState,
    pub sweeps: u64,
    pub delta: f64,
    pub proposals: u64,
    pub accepted: u64,
    pub violations: u64,
    pub checks: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub spins: Vec<f64>,
}

/// Everything needed to keep stepping a restored chain.
pub struct RestoredChain {
    pub graph: LatticeGraph,
    pub params: ModelParams,
    pub mask: BondMask,
    pub schedule: Schedule,
    pub chain: ChainState,
    pub seed: u64,
}

fn spin_bytes(spins: &[f64]) -> Vec<u8> {
    spins.iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl Checkpoint {
    pub fn capture(
        chain: &ChainState,
        graph: &LatticeGraph,
        params: &ModelParams,
        mask: &BondMask,
        schedule: &Schedule,
        seed: u64,
    ) -> Result<Self> {
        let spins = chain.config.values().to_vec();
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            lattice: graph.kind(),
            size: graph.size(),
            params: params.clone(),
            schedule: schedule.clone(),
            mask: mask.clone(),
            rng: chain.rng_state(),
            sweeps: chain.sweeps,
            delta: chain.delta,
            proposals: chain.proposals,
            accepted: chain.accepted,
            violations: chain.violations,
            checks: chain.checks,
            seed,
        };
        Ok(Self { header, spins })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut body = serde_json::to_vec(&self.header)?;
        body.push(b'\n');
        body.extend(spin_bytes(&self.spins));
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n{}\n", hex::encode(Sha256::digest(&body))).into_bytes();
        out.extend(body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        let magic = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("magic line is not text"))?;
        let version: u32 = magic
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("not a checkpoint file"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} does not match supported version {CHECKPOINT_VERSION}"
            )));
        }
        let rest = &bytes[nl + 1..];
        let dl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing digest line"))?;
        let digest = &rest[..dl];
        let rest = &rest[dl + 1..];
        if hex::encode(Sha256::digest(rest)).as_bytes() != digest {
            return Err(bad("digest mismatch: checkpoint is corrupted"));
        }
        let hl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&rest[..hl]).map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "header version {} does not match supported version {CHECKPOINT_VERSION}",
                header.version
            )));
        }
        let payload = &rest[hl + 1..];
        if !payload.len().is_multiple_of(8) {
            return Err(bad("spin payload is not a whole number of f64 values"));
        }
        let spins = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { header, spins })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }

    /// Rejects a resume whose parameters differ from the stored ones.
    pub fn ensure_params(&self, params: &ModelParams) -> Result<()> {
        if &self.header.params != params {
            return Err(Error::Checkpoint(format!(
                "parameters differ from checkpoint: stored {:?}, requested {:?}",
                self.header.params, params
            )));
        }
        Ok(())
    }

    pub fn restore(&self) -> Result<RestoredChain> {
        let h = &self.header;
        let graph = LatticeGraph::new_unchecked(h.lattice, h.size)?;
        if h.mask.len() != graph.bond_count() {
            return Err(Error::Checkpoint("bond mask does not match the lattice".into()));
        }
        let config = SpinConfig::from_values(h.params.n, self.spins.clone())?;
        if config.len() != graph.site_count() {
            return Err(Error::Checkpoint("spin array does not match the lattice".into()));
        }
        let mut chain = ChainState::from_config(config, &graph, &h.params, &h.mask, h.rng.restore()?)?;
        chain.sweeps = h.sweeps;
        chain.config.generation = h.sweeps;
        chain.delta = h.delta;
        chain.proposals = h.proposals;
        chain.accepted = h.accepted;
        chain.violations = h.violations;
        chain.checks = h.checks;
        Ok(RestoredChain {
            graph,
            params: h.params.clone(),
            mask: h.mask.clone(),
            schedule: h.schedule.clone(),
            chain,
            seed: h.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::sampler::StartKind;
    use crate::spin::Variant;

    fn run(sweeps: u64) -> (ChainState, LatticeGraph, ModelParams, BondMask, Schedule) {
        let g = LatticeGraph::new(LatticeKind::Triangular, 8).unwrap();
        let p = ModelParams::new(3, 0.9, Variant::Cut { epsilon: 1.2 }).unwrap();
        let m = BondMask::full(&g);
        let s = Schedule { thermalization: 5, measurements: 20, ..Schedule::default() };
        let mut c = ChainState::new(&g, &p, &m, StartKind::Cold, seeded(3, 1)).unwrap();
        for _ in 0..sweeps {
            c.step(&g, &p, &m, &s).unwrap();
        }
        (c, g, p, m, s)
    }

    #[test]
    fn resume_is_bit_exact() {
        let (c, g, p, m, s) = run(7);
        let cp = Checkpoint::capture(&c, &g, &p, &m, &s, 3).unwrap();
        let back = Checkpoint::from_bytes(&cp.to_bytes().unwrap()).unwrap();
        assert_eq!(back, cp);
        let mut r = back.restore().unwrap();
        for _ in 0..8 {
            r.chain.step(&r.graph, &r.params, &r.mask, &r.schedule).unwrap();
        }
        let (full, ..) = run(15);
        assert_eq!(r.chain.config.values(), full.config.values());
        assert_eq!(r.chain.delta, full.delta);
        assert_eq!(r.chain.rng_state(), full.rng_state());
    }

    #[test]
    fn corruption_and_version_rejected() {
        let (c, g, p, m, s) = run(2);
        let bytes = Checkpoint::capture(&c, &g, &p, &m, &s, 3).unwrap().to_bytes().unwrap();
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x01;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Checkpoint(m)) if m.contains("digest")));
        let text = String::from_utf8_lossy(&bytes[..30]).to_string();
        assert!(text.starts_with("onperc-checkpoint 1\n"));
        let mut v2 = b"onperc-checkpoint 2\n".to_vec();
        v2.extend_from_slice(&bytes[20..]);
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn altered_beta_rejected() {
        let (c, g, p, m, s) = run(1);
        let cp = Checkpoint::capture(&c, &g, &p, &m, &s, 3).unwrap();
        let mut other = p.clone();
        other.beta = 1.0;
        assert!(cp.ensure_params(&p).is_ok());
        assert!(cp.ensure_params(&other).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = Checkpoint::load(Path::new("/nonexistent/chain.ckpt")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
