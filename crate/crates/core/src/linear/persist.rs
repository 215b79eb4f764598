//! Binary model container: magic, schema version, model kind, scalar width, a JSON
//! metadata block, then a raw little-endian payload.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"STANCEMD";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a stance model file")]
    BadMagic,
    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("expected a `{expected}` model, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("model stores {found}-byte scalars, expected {expected}")]
    ScalarWidth { found: u8, expected: u8 },
    #[error("invalid model metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("corrupt model payload: {0}")]
    Corrupt(String),
}

pub(crate) fn write_header<W: Write, T: Real, M: Serialize>(
    w: &mut W,
    kind: &str,
    meta: &M,
) -> Result<(), PersistError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(SCHEMA_VERSION)?;
    w.write_u8(kind.len() as u8)?;
    w.write_all(kind.as_bytes())?;
    w.write_u8(T::WIDTH)?;
    let meta = serde_json::to_vec(meta)?;
    w.write_u64::<LittleEndian>(meta.len() as u64)?;
    w.write_all(&meta)?;
    Ok(())
}

pub(crate) fn read_header<R: Read, T: Real, M: DeserializeOwned>(
    r: &mut R,
    kind: &str,
) -> Result<M, PersistError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| PersistError::BadMagic)?;
    if &magic != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SCHEMA_VERSION {
        return Err(PersistError::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let len = r.read_u8()? as usize;
    let mut found = vec![0u8; len];
    r.read_exact(&mut found)?;
    let found = String::from_utf8_lossy(&found).into_owned();
    if found != kind {
        return Err(PersistError::Kind {
            expected: kind.to_string(),
            found,
        });
    }
    let width = r.read_u8()?;
    if width != T::WIDTH {
        return Err(PersistError::ScalarWidth {
            found: width,
            expected: T::WIDTH,
        });
    }
    let meta_len = r.read_u64::<LittleEndian>()? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    Ok(serde_json::from_slice(&meta)?)
}

pub(crate) fn write_vec<W: Write, T: Real>(w: &mut W, xs: &[T]) -> io::Result<()> {
    w.write_u64::<LittleEndian>(xs.len() as u64)?;
    for &x in xs {
        x.write_le(w)?;
    }
    Ok(())
}

pub(crate) fn read_vec<R: Read, T: Real>(r: &mut R) -> Result<Vec<T>, PersistError> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        out.push(T::read_le(r)?);
    }
    Ok(out)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, PersistError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>, PersistError> {
    Ok(BufReader::new(File::open(path)?))
}

/// Reads only the model kind of a container, e.g. to dispatch loading.
pub fn peek_kind(path: impl AsRef<Path>) -> Result<String, PersistError> {
    let mut r = open(path.as_ref())?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| PersistError::BadMagic)?;
    if &magic != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SCHEMA_VERSION {
        return Err(PersistError::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let len = r.read_u8()? as usize;
    let mut kind = vec![0u8; len];
    r.read_exact(&mut kind)?;
    Ok(String::from_utf8_lossy(&kind).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Meta {
        name: String,
    }

    #[test]
    fn header_roundtrip_and_version_check() {
        let mut buf = Vec::new();
        write_header::<_, f64, _>(&mut buf, "linear", &Meta { name: "x".into() }).unwrap();
        write_vec(&mut buf, &[1.5f64, -2.0]).unwrap();
        let mut r = &buf[..];
        let m: Meta = read_header::<_, f64, _>(&mut r, "linear").unwrap();
        assert_eq!(m.name, "x");
        assert_eq!(read_vec::<_, f64>(&mut r).unwrap(), [1.5, -2.0]);

        let err = read_header::<_, f32, Meta>(&mut &buf[..], "linear").unwrap_err();
        assert!(matches!(err, PersistError::ScalarWidth { .. }));
        let err = read_header::<_, f64, Meta>(&mut &buf[..], "subword").unwrap_err();
        assert!(matches!(err, PersistError::Kind { .. }));

        let mut bumped = buf.clone();
        bumped[8] = 99;
        let err = read_header::<_, f64, Meta>(&mut &bumped[..], "linear").unwrap_err();
        assert!(matches!(err, PersistError::SchemaVersion { found: 99, .. }));
    }
}
