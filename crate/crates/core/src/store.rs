//! Trajectory files.
//!
//! Little-endian layout:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `EVTRAJ01` |
//! | 8 | `node_count` (u64) |
//! | 8 | `timesteps` (u64) |
//! | 8 | run seed (u64) |
//! | 64 | config digest, lowercase hex ASCII |
//! | 1 | flags: bit 0 set when the decision history follows |
//! | 4 × (timesteps + 1) | evacuating count per timestep (u32) |
//! | 8 × ceil(node_count / 64) × (timesteps + 1) | history words, if flagged |
//!
//! History words pack agent `i` of timestep `t` into bit `i % 64` of word
//! `t * ceil(node_count / 64) + i / 64`; a set bit means Evacuate. Per-step
//! payoffs are never stored.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dynamics::{BitHistory, RunMetadata, Trajectory};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EVTRAJ01";
const DIGEST_LEN: usize = 64;
const HEADER_LEN: usize = 8 + 8 + 8 + 8 + DIGEST_LEN + 1;

pub fn encode_trajectory(trajectory: &Trajectory) -> Vec<u8> {
    let steps = trajectory.evacuating.len();
    let history_words = trajectory.history.as_ref().map_or(0, |h| h.words().len());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * steps + 8 * history_words);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(trajectory.node_count as u64).to_le_bytes());
    out.extend_from_slice(&(trajectory.timesteps as u64).to_le_bytes());
    out.extend_from_slice(&trajectory.metadata.seed.to_le_bytes());
    let mut digest = [b'0'; DIGEST_LEN];
    let src = trajectory.metadata.config_digest.as_bytes();
    let len = src.len().min(DIGEST_LEN);
    digest[..len].copy_from_slice(&src[..len]);
    out.extend_from_slice(&digest);
    out.push(trajectory.history.is_some() as u8);
    for c in &trajectory.evacuating {
        out.extend_from_slice(&c.to_le_bytes());
    }
    if let Some(h) = &trajectory.history {
        for w in h.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

pub fn decode_trajectory(bytes: &[u8], path: &Path) -> Result<Trajectory> {
    let bad = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
    let node_count = usize::try_from(u64_at(8)).map_err(|_| bad("node count too large"))?;
    let timesteps = usize::try_from(u64_at(16)).map_err(|_| bad("timestep count too large"))?;
    let seed = u64_at(24);
    let digest = std::str::from_utf8(&bytes[32..32 + DIGEST_LEN])
        .map_err(|_| bad("config digest is not ASCII"))?
        .to_string();
    let flags = bytes[32 + DIGEST_LEN];
    if flags > 1 {
        return Err(bad("unknown flags"));
    }
    let steps = timesteps.checked_add(1).ok_or_else(|| bad("timestep count too large"))?;
    let words_per_step = node_count.div_ceil(64);
    let history_words = if flags == 1 { words_per_step * steps } else { 0 };
    let expected = HEADER_LEN + 4 * steps + 8 * history_words;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut off = HEADER_LEN;
    let mut evacuating = Vec::with_capacity(steps);
    for _ in 0..steps {
        evacuating.push(u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")));
        off += 4;
    }
    if evacuating.iter().any(|&c| c as usize > node_count) {
        return Err(bad("evacuating count exceeds node count"));
    }
    let history = if flags == 1 {
        let words: Vec<u64> = bytes[off..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let history = BitHistory::from_words(node_count, words);
        for (t, &c) in evacuating.iter().enumerate() {
            let ones: u32 = history.step_words(t).iter().map(|w| w.count_ones()).sum();
            if ones != c {
                return Err(bad(&format!("history and counts disagree at timestep {t}")));
            }
        }
        Some(history)
    } else {
        None
    };
    Ok(Trajectory {
        node_count,
        timesteps,
        evacuating,
        history,
        payoffs: None,
        metadata: RunMetadata {
            seed,
            config_digest: digest,
        },
    })
}

pub fn save_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&encode_trajectory(trajectory))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_trajectory(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, Recording, SimulationConfig};
    use crate::network::generate_small_world;
    use crate::payoff::{paper_coefficient_matrix, Decision};
    use crate::scenario::DecisionVector;
    use proptest::prelude::*;

    fn sample(n: usize, steps: usize, seed: u64, recording: Recording) -> Trajectory {
        let g = generate_small_world(n, 4, 0.3, seed).unwrap();
        let init: Vec<Decision> = (0..n)
            .map(|i| if (i as u64 ^ seed) % 3 == 0 { Decision::Evacuate } else { Decision::Stay })
            .collect();
        let config = SimulationConfig::new(paper_coefficient_matrix(0.1).unwrap(), steps, seed)
            .with_recording(recording);
        run(&g, &DecisionVector::from(init), &config).unwrap()
    }

    #[test]
    fn file_round_trip() {
        let traj = sample(130, 25, 4, Recording::Decisions);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.traj");
        save_trajectory(&path, &traj).unwrap();
        assert_eq!(load_trajectory(&path).unwrap(), traj);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let traj = sample(70, 5, 1, Recording::Decisions);
        let bytes = encode_trajectory(&traj);
        let p = Path::new("x.traj");
        assert!(decode_trajectory(&bytes[..bytes.len() - 1], p).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(decode_trajectory(&wrong_magic, p).is_err());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x80;
        assert!(decode_trajectory(&flipped, p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn encode_decode_identity(n in 10usize..200, steps in 1usize..30, seed in any::<u64>(), full in any::<bool>()) {
            let recording = if full { Recording::Decisions } else { Recording::Counts };
            let traj = sample(n, steps, seed, recording);
            let decoded = decode_trajectory(&encode_trajectory(&traj), Path::new("t")).unwrap();
            prop_assert_eq!(decoded, traj);
        }
    }
}
