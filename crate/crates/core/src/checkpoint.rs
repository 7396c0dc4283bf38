//! Binary checkpoints: model parameters, optimizer state, replay buffer
//! contents and RNG positions, plus the configuration that produced them.
//! Saving and reloading resumes a run bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::nn::AdamState;
use crate::replay::{GameHistory, StoredGame};
use crate::trainer::Trainer;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MZRC";
const VERSION: u32 = 1;

pub fn save(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    let config_text = trainer.config.to_text();
    put_bytes(&mut buf, config_text.as_bytes());
    put_u64(&mut buf, trainer.step);
    put_f64_slice(&mut buf, trainer.model.params.values());
    // optimizer
    put_u64(&mut buf, trainer.opt.t);
    put_f64_slice(&mut buf, &trainer.opt.m);
    put_f64_slice(&mut buf, &trainer.opt.v);
    // rng positions
    put_rng(&mut buf, &trainer.rng);
    put_rng(&mut buf, &trainer.buffer.rng);
    // replay buffer
    put_u64(&mut buf, trainer.buffer.total_steps());
    let games: Vec<&StoredGame> = trainer.buffer.games().collect();
    let next_id = games.iter().map(|g| g.id + 1).max().unwrap_or(0);
    put_u64(&mut buf, next_id);
    put_u64(&mut buf, games.len() as u64);
    for stored in games {
        put_u64(&mut buf, stored.id);
        put_u64(&mut buf, stored.game.observations.len() as u64);
        for obs in &stored.game.observations {
            put_f64_slice(&mut buf, obs);
        }
        put_u64(&mut buf, stored.game.actions.len() as u64);
        for a in &stored.game.actions {
            put_u64(&mut buf, *a as u64);
        }
        put_f64_slice(&mut buf, &stored.game.rewards);
        put_u64(&mut buf, stored.game.policies.len() as u64);
        for p in &stored.game.policies {
            put_f64_slice(&mut buf, p);
        }
        put_f64_slice(&mut buf, &stored.game.values);
        put_f64_slice(&mut buf, &stored.priorities);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Trainer> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };

    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let config_text = String::from_utf8(r.bytes_field()?)
        .map_err(|_| Error::Checkpoint("config block is not valid UTF-8".into()))?;
    let config = RunConfig::parse(&config_text)?;
    let mut trainer = Trainer::new(config);
    trainer.step = r.u64()?;

    let params = r.f64_slice()?;
    if params.len() != trainer.model.params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: file has {}, model needs {}",
            params.len(),
            trainer.model.params.len()
        )));
    }
    trainer.model.params.values_mut().copy_from_slice(&params);

    let opt_t = r.u64()?;
    let m = r.f64_slice()?;
    let v = r.f64_slice()?;
    if m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Checkpoint("optimizer state size mismatch".into()));
    }
    let mut opt = AdamState::new(params.len());
    opt.t = opt_t;
    opt.m = m;
    opt.v = v;
    trainer.opt = opt;

    trainer.rng = r.rng()?;
    trainer.buffer.rng = r.rng()?;

    let total_steps = r.u64()?;
    let next_id = r.u64()?;
    let game_count = r.u64()? as usize;
    let mut games = Vec::with_capacity(game_count);
    for _ in 0..game_count {
        let id = r.u64()?;
        let obs_count = r.u64()? as usize;
        let mut observations = Vec::with_capacity(obs_count);
        for _ in 0..obs_count {
            observations.push(r.f64_slice()?);
        }
        let action_count = r.u64()? as usize;
        let mut actions = Vec::with_capacity(action_count);
        for _ in 0..action_count {
            actions.push(r.u64()? as usize);
        }
        let rewards = r.f64_slice()?;
        let policy_count = r.u64()? as usize;
        let mut policies = Vec::with_capacity(policy_count);
        for _ in 0..policy_count {
            policies.push(r.f64_slice()?);
        }
        let values = r.f64_slice()?;
        let priorities = r.f64_slice()?;
        games.push(StoredGame {
            id,
            game: GameHistory {
                observations,
                actions,
                rewards,
                policies,
                values,
            },
            priorities,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    trainer.buffer.restore(games, next_id, total_steps);
    Ok(trainer)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(buf, bytes.len() as u64);
    buf.extend_from_slice(bytes);
}

fn put_f64_slice(buf: &mut Vec<u8>, values: &[f64]) {
    put_u64(buf, values.len() as u64);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_rng(buf: &mut Vec<u8>, rng: &ChaCha8Rng) {
    buf.extend_from_slice(&rng.get_seed());
    buf.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    put_u64(buf, rng.get_stream());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes_field(&mut self) -> Result<Vec<u8>> {
        let len = self.u64()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn f64_slice(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        let raw = self.take(len * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn rng(&mut self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self.take(32)?.try_into().unwrap();
        let word_pos = u128::from_le_bytes(self.take(16)?.try_into().unwrap());
        let stream = self.u64()?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn quick_config() -> RunConfig {
        let mut c = RunConfig::cartpole_preset();
        c.simulations = 4;
        c.batch_size = 8;
        c.td_steps = 10;
        c.unroll_steps = 3;
        c.hidden_sizes = vec![16];
        c
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut trainer = Trainer::new(quick_config());
        for _ in 0..3 {
            trainer.advance().unwrap();
        }
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        save(&trainer, &p1).unwrap();
        let loaded = load(&p1).unwrap();
        save(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut continuous = Trainer::new(quick_config());
        let mut interrupted = Trainer::new(quick_config());
        for _ in 0..4 {
            continuous.advance().unwrap();
            interrupted.advance().unwrap();
        }
        let path = dir.path().join("mid.bin");
        save(&interrupted, &path).unwrap();
        let mut resumed = load(&path).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..4 {
            a.push(continuous.advance().unwrap().breakdown.total);
            b.push(resumed.advance().unwrap().breakdown.total);
        }
        assert_eq!(a, b);
        assert_eq!(
            continuous.model.params.values(),
            resumed.model.params.values()
        );
    }

    #[test]
    fn version_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let trainer = Trainer::new(quick_config());
        let path = dir.path().join("c.bin");
        save(&trainer, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99; // bump the version field
        std::fs::write(&path, &bytes).unwrap();
        let err = load(&path).err().expect("version bump must be refused");
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn bad_magic_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn truncated_file_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let trainer = Trainer::new(quick_config());
        let path = dir.path().join("d.bin");
        save(&trainer, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load(&path).is_err());
    }
}
