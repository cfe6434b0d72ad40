//! Binary checkpoint and rollout files.
//!
//! Both formats are little-endian, start with an 8-byte magic and a `u32`
//! version, and end with a CRC32 of every preceding byte.

use std::fs;
use std::path::{Path, PathBuf};

use epls_core::autodiff::{ParamSet, Tensor};
use epls_core::env::Action;
use epls_core::pipeline::{PolicyTag, Rollout};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EPLSCKPT";
pub const ROLLOUT_MAGIC: &[u8; 8] = b"EPLSROLL";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("file truncated")]
    Truncated,
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("malformed contents: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: Box<FormatError>,
    },
}

impl FormatError {
    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (FormatError::Io { .. } | FormatError::File { .. }) => e,
            e => FormatError::File {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sequential reader over a CRC-checked body.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Validates length, CRC, magic and version; returns a reader positioned
    /// after the version field.
    fn open(bytes: &'a [u8], magic: &[u8; 8]) -> Result<Self, FormatError> {
        if bytes.len() < 16 {
            return Err(FormatError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::Crc { stored, computed });
        }
        if &body[..8] != magic {
            return Err(FormatError::BadMagic);
        }
        let mut r = Self { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(FormatError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Result<(), FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))),
        );
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

fn seal(mut body: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    body
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &ParamSet) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(16 + params.numel() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| FormatError::Malformed(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        push_f32s(&mut out, t.data());
    }
    Ok(seal(out))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamSet, FormatError> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC)?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(FormatError::Truncated)?;
        let mut data = Vec::new();
        r.f32s(numel, &mut data)?;
        let t = Tensor::new(shape, data).map_err(|e| FormatError::Malformed(e.to_string()))?;
        if params.get(&name).is_some() {
            return Err(FormatError::Malformed(format!("duplicate tensor {name}")));
        }
        params.insert(name, t);
    }
    r.finish()?;
    Ok(params)
}

pub fn encode_rollout(rollout: &Rollout) -> Vec<u8> {
    let n = rollout.len();
    let mut out = Vec::with_capacity(24 + n * (rollout.obs_dim * 4 + 17));
    out.extend_from_slice(ROLLOUT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rollout.obs_dim as u32).to_le_bytes());
    out.extend_from_slice(&(Action::DIM as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for t in 0..n {
        push_f32s(&mut out, rollout.observation(t));
        push_f32s(&mut out, &rollout.actions[t]);
        out.extend_from_slice(&rollout.rewards[t].to_le_bytes());
        out.push(rollout.terminals[t] as u8);
    }
    seal(out)
}

/// The policy tag is not stored in the file; it comes from the manifest.
pub fn decode_rollout(bytes: &[u8], tag: PolicyTag) -> Result<Rollout, FormatError> {
    let mut r = Reader::open(bytes, ROLLOUT_MAGIC)?;
    let obs_dim = r.u32()? as usize;
    let action_dim = r.u32()? as usize;
    if action_dim != Action::DIM {
        return Err(FormatError::Malformed(format!(
            "action_dim {action_dim}, expected 3"
        )));
    }
    let n = r.u32()? as usize;
    let mut rollout = Rollout::new(obs_dim, tag);
    let mut scratch = Vec::with_capacity(4);
    for t in 0..n {
        r.f32s(obs_dim, &mut rollout.observations)?;
        scratch.clear();
        r.f32s(Action::DIM + 1, &mut scratch)?;
        rollout.actions.push([scratch[0], scratch[1], scratch[2]]);
        rollout.rewards.push(scratch[3]);
        let terminal = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(FormatError::Malformed(format!("terminal flag {v}"))),
        };
        if terminal && t + 1 != n {
            return Err(FormatError::Malformed(
                "terminal before the last record".into(),
            ));
        }
        rollout.terminals.push(terminal);
    }
    r.finish()?;
    Ok(rollout)
}

pub fn save_checkpoint(path: &Path, params: &ParamSet) -> Result<(), FormatError> {
    let bytes = encode_checkpoint(params)?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_checkpoint(&bytes).map_err(|e| e.in_file(path))
}

pub const MANIFEST: &str = "manifest.txt";

pub fn rollout_file_name(index: usize) -> String {
    format!("rollout_{index:05}.bin")
}

/// Writes one file per rollout plus `manifest.txt` (`<file> <tag>` per line).
pub fn save_rollouts(dir: &Path, rollouts: &[Rollout]) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    for (i, r) in rollouts.iter().enumerate() {
        let name = rollout_file_name(i);
        let path = dir.join(&name);
        fs::write(&path, encode_rollout(r)).map_err(io_err(&path))?;
        manifest.push_str(&format!("{name} {}\n", r.tag.as_str()));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(io_err(&path))
}

/// Reads every rollout listed in `dir/manifest.txt`, in manifest order.
pub fn load_rollouts(dir: &Path) -> Result<Vec<Rollout>, FormatError> {
    let path = dir.join(MANIFEST);
    let manifest = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            FormatError::Malformed(format!("line {}: expected `<file> <tag>`", lineno + 1))
                .in_file(&path)
        };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let tag = PolicyTag::parse(tag).ok_or_else(bad)?;
        let file = dir.join(name);
        let bytes = fs::read(&file).map_err(io_err(&file))?;
        out.push(decode_rollout(&bytes, tag).map_err(|e| e.in_file(&file))?);
    }
    Ok(out)
}
