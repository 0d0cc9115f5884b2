//! Binary storage of nodal time histories.
//!
//! Layout, all little-endian: the magic `PDKLMS01`, then the `u64` header
//! fields `dimension, n_nodes, n_components, n_times, flags` and one record
//! per snapshot: `t`, `u[ndof]`, `v[ndof]` (when flag bit 0 is set) and
//! `a[ndof]`, all `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::dynamics::{MicroState, Snapshot};
use crate::microstructure::Dimension;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PDKLMS01";
const N_TIMES_OFFSET: u64 = 8 + 3 * 8;
const FLAG_VELOCITY: u64 = 1;

/// Streams snapshots to disk; the snapshot count is patched by `finish`.
pub struct MicroStateWriter {
    path: PathBuf,
    out: BufWriter<File>,
    ndof: usize,
    with_velocity: bool,
    count: u64,
}

impl MicroStateWriter {
    pub fn create(path: &Path, dimension: Dimension, n_nodes: usize, with_velocity: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MicroStateWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            ndof: n_nodes * dimension.components(),
            with_velocity,
            count: 0,
        };
        let flags = if with_velocity { FLAG_VELOCITY } else { 0 };
        let mut header = MAGIC.to_vec();
        for v in [
            dimension.as_usize() as u64,
            n_nodes as u64,
            dimension.components() as u64,
            0,
            flags,
        ] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        w.write_bytes(&header)?;
        Ok(w)
    }

    fn write_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(|e| Error::io(&self.path, e))
    }

    fn write_values(&mut self, values: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(values.len() * 8);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.write_bytes(&buf)
    }

    pub fn push(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        if snapshot.displacement.len() != self.ndof || snapshot.acceleration.len() != self.ndof {
            return Err(Error::Config(format!(
                "snapshot has {} dofs, file expects {}",
                snapshot.displacement.len(),
                self.ndof
            )));
        }
        self.write_values(&[snapshot.time])?;
        self.write_values(snapshot.displacement)?;
        if self.with_velocity {
            self.write_values(snapshot.velocity)?;
        }
        self.write_values(snapshot.acceleration)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        let path = self.path.clone();
        self.out.flush().map_err(|e| Error::io(&path, e))?;
        let mut file = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        file.seek(SeekFrom::Start(N_TIMES_OFFSET))
            .map_err(|e| Error::io(&path, e))?;
        file.write_all(&self.count.to_le_bytes())
            .map_err(|e| Error::io(&path, e))?;
        file.sync_all().map_err(|e| Error::io(&path, e))?;
        Ok(self.count)
    }
}

pub fn write_micro_state(path: &Path, state: &MicroState) -> Result<()> {
    let with_velocity = !state.velocity.is_empty();
    let mut w = MicroStateWriter::create(path, state.dimension, state.n_nodes, with_velocity)?;
    for k in 0..state.len() {
        w.push(&Snapshot {
            time: state.times[k],
            displacement: &state.displacement[k],
            velocity: if with_velocity { &state.velocity[k] } else { &[] },
            acceleration: &state.acceleration[k],
        })?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a file written by [`MicroStateWriter`]. Energy history and time
/// step are not stored and come back empty.
pub fn read_micro_state(path: &Path) -> Result<MicroState> {
    let what = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::parse(what, "not a micro-state file"));
    }
    let mut word = || -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
        Ok(u64::from_le_bytes(b))
    };
    let dim = word()?;
    let n_nodes = word()? as usize;
    let nc = word()? as usize;
    let n_times = word()? as usize;
    let flags = word()?;
    let dimension = Dimension::from_usize(dim as usize).map_err(|_| Error::parse(&what, format!("dimension {dim}")))?;
    if nc != dimension.components() {
        return Err(Error::parse(&what, format!("{nc} components in {dim}D")));
    }
    let with_velocity = flags & FLAG_VELOCITY != 0;
    let ndof = n_nodes * nc;
    let mut read_vec = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(&what, "file truncated"))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mut state = MicroState {
        dimension,
        n_nodes,
        times: Vec::with_capacity(n_times),
        displacement: Vec::with_capacity(n_times),
        velocity: Vec::new(),
        acceleration: Vec::with_capacity(n_times),
        time_step: 0.0,
        energy: Vec::new(),
    };
    for _ in 0..n_times {
        state.times.push(read_vec(1)?[0]);
        state.displacement.push(read_vec(ndof)?);
        if with_velocity {
            state.velocity.push(read_vec(ndof)?);
        }
        state.acceleration.push(read_vec(ndof)?);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n_nodes: usize, n_times: usize, velocity: bool, seed: u64) -> MicroState {
        let mut x = seed as f64 * 0.618;
        let mut next = move || {
            x = (x * 7.13 + 0.271).fract();
            (x - 0.5) * 1e-3
        };
        let ndof = 2 * n_nodes;
        let mut s = MicroState {
            dimension: Dimension::Two,
            n_nodes,
            times: Vec::new(),
            displacement: Vec::new(),
            velocity: Vec::new(),
            acceleration: Vec::new(),
            time_step: 0.0,
            energy: Vec::new(),
        };
        for k in 0..n_times {
            s.times.push(k as f64 * 1e-6);
            s.displacement.push((0..ndof).map(|_| next()).collect());
            if velocity {
                s.velocity.push((0..ndof).map(|_| next()).collect());
            }
            s.acceleration.push((0..ndof).map(|_| next()).collect());
        }
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip(n_nodes in 1usize..20, n_times in 0usize..6, velocity: bool, seed in 0u64..1000) {
            let dir = tempdir();
            let path = dir.join(format!("s{seed}_{n_nodes}_{n_times}_{velocity}.bin"));
            let s = sample(n_nodes, n_times, velocity, seed);
            write_micro_state(&path, &s).unwrap();
            let back = read_micro_state(&path).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    fn tempdir() -> PathBuf {
        let d = std::env::temp_dir().join(format!("pdkl-io-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let dir = tempdir();
        let bad = dir.join("bad.bin");
        std::fs::write(&bad, b"NOTMAGIC0000000000000000").unwrap();
        assert!(matches!(read_micro_state(&bad), Err(Error::Parse { .. })));

        let good = dir.join("trunc.bin");
        write_micro_state(&good, &sample(3, 2, true, 1)).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        std::fs::write(&good, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_micro_state(&good), Err(Error::Parse { .. })));
    }
}
