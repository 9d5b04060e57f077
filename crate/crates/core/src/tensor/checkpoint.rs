//! Bit-exact text checkpoints.
//!
//! Layout:
//! ```text
//! EQTD-CKPT 1
//! meta key=value key=value ...
//! <name> <rows> <cols>
//! <row-major values, 17 significant digits, space separated>
//! ...
//! ```
//! Values are written with `{:.16e}`, which round-trips both f32 and f64
//! exactly through string form.

use super::{ParamStore, Real, TensorData};
use indexmap::IndexMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: &str = "EQTD-CKPT 1";

pub type Meta = IndexMap<String, String>;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad checkpoint header `{0}` (expected `{MAGIC}`)")]
    BadHeader(String),
    #[error("bad meta line `{0}`")]
    BadMeta(String),
    #[error("bad shape line `{0}`")]
    BadShape(String),
    #[error("parameter `{name}`: expected {expected} values, got {got}")]
    ValueCount { name: String, expected: usize, got: usize },
    #[error("parameter `{name}`: unparseable value `{value}`")]
    BadValue { name: String, value: String },
    #[error("parameter `{name}` contains non-finite values")]
    NonFinite { name: String },
    #[error("truncated checkpoint (values missing for `{0}`)")]
    Truncated(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

pub fn write_checkpoint<T: Real>(
    path: &Path,
    store: &ParamStore<T>,
    meta: &Meta,
) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let inner = |w: &mut BufWriter<std::fs::File>| -> Result<(), CheckpointError> {
        writeln!(w, "{MAGIC}").map_err(io_err(path))?;
        write!(w, "meta").map_err(io_err(path))?;
        for (k, v) in meta {
            write!(w, " {k}={v}").map_err(io_err(path))?;
        }
        writeln!(w).map_err(io_err(path))?;
        for (name, value) in store.iter() {
            if !value.all_finite() {
                return Err(CheckpointError::NonFinite { name: name.to_string() });
            }
            writeln!(w, "{name} {} {}", value.rows(), value.cols()).map_err(io_err(path))?;
            for (i, v) in value.as_slice().iter().enumerate() {
                if i > 0 {
                    write!(w, " ").map_err(io_err(path))?;
                }
                write!(w, "{v:.16e}").map_err(io_err(path))?;
            }
            writeln!(w).map_err(io_err(path))?;
        }
        Ok(())
    };
    inner(&mut w)?;
    w.flush().map_err(io_err(path))
}

fn parse_meta_line(meta_line: &str) -> Result<Meta, CheckpointError> {
    let mut meta = Meta::new();
    let rest = meta_line
        .strip_prefix("meta")
        .ok_or_else(|| CheckpointError::BadMeta(meta_line.to_string()))?;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| CheckpointError::BadMeta(kv.to_string()))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

/// Read only the header metadata, skipping the values.
pub fn read_meta(path: &Path) -> Result<Meta, CheckpointError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(io_err(path))?.unwrap_or_default();
    if header != MAGIC {
        return Err(CheckpointError::BadHeader(header));
    }
    let meta_line = lines
        .next()
        .transpose()
        .map_err(io_err(path))?
        .ok_or_else(|| CheckpointError::BadMeta(String::new()))?;
    parse_meta_line(&meta_line)
}

pub fn read_checkpoint<T: Real>(
    path: &Path,
) -> Result<(IndexMap<String, TensorData<T>>, Meta), CheckpointError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<Option<String>, CheckpointError> {
        match lines.next() {
            Some(l) => Ok(Some(l.map_err(io_err(path))?)),
            None => Ok(None),
        }
    };

    let header = next()?.unwrap_or_default();
    if header != MAGIC {
        return Err(CheckpointError::BadHeader(header));
    }
    let meta_line = next()?.ok_or_else(|| CheckpointError::BadMeta(String::new()))?;
    let meta = parse_meta_line(&meta_line)?;

    let mut params = IndexMap::new();
    while let Some(shape_line) = next()? {
        if shape_line.trim().is_empty() {
            continue;
        }
        let mut parts = shape_line.split_whitespace();
        let name = parts.next().ok_or_else(|| CheckpointError::BadShape(shape_line.clone()))?;
        let dims: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| CheckpointError::BadShape(shape_line.clone())))
            .collect::<Result<_, _>>()?;
        if dims.len() != 2 {
            return Err(CheckpointError::BadShape(shape_line.clone()));
        }
        let (rows, cols) = (dims[0], dims[1]);
        let value_line = next()?.ok_or_else(|| CheckpointError::Truncated(name.to_string()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for tok in value_line.split_whitespace() {
            let v: T = tok.parse().map_err(|_| CheckpointError::BadValue {
                name: name.to_string(),
                value: tok.to_string(),
            })?;
            data.push(v);
        }
        if data.len() != rows * cols {
            return Err(CheckpointError::ValueCount {
                name: name.to_string(),
                expected: rows * cols,
                got: data.len(),
            });
        }
        let t = TensorData::new(rows, cols, data);
        if !t.all_finite() {
            return Err(CheckpointError::NonFinite { name: name.to_string() });
        }
        params.insert(name.to_string(), t);
    }
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::NamedTempFile {
        tempfile::NamedTempFile::new().unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::<f64>::new();
        let mut a = TensorData::uniform(4, 3, 2.0, &mut rng);
        // exercise extreme magnitudes
        a.as_mut_slice()[0] = 1.234567890123456e-300;
        a.as_mut_slice()[1] = -9.87654321e250;
        store.insert("translator.omega", a).unwrap();
        store.insert("aligner.T", TensorData::uniform(2, 4, 0.5, &mut rng)).unwrap();
        let mut meta = Meta::new();
        meta.insert("variant".into(), "sum".into());
        meta.insert("group_order".into(), "4".into());

        let f = tmp();
        write_checkpoint(f.path(), &store, &meta).unwrap();
        let (params, meta2) = read_checkpoint::<f64>(f.path()).unwrap();
        assert_eq!(meta2.get("variant").unwrap(), "sum");
        assert_eq!(meta2.get("group_order").unwrap(), "4");
        assert_eq!(params.len(), 2);
        for (name, value) in store.iter() {
            let loaded = &params[name];
            assert_eq!(loaded.shape(), value.shape());
            for (x, y) in loaded.as_slice().iter().zip(value.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn meta_is_readable_without_the_values() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", TensorData::scalar(1.5)).unwrap();
        let mut meta = Meta::new();
        meta.insert("precision".into(), "f64".into());
        meta.insert("variant".into(), "max".into());
        let f = tmp();
        write_checkpoint(f.path(), &store, &meta).unwrap();
        let peeked = read_meta(f.path()).unwrap();
        assert_eq!(peeked, meta);
        std::fs::write(f.path(), "WRONG\n").unwrap();
        assert!(matches!(read_meta(f.path()), Err(CheckpointError::BadHeader(_))));
    }

    #[test]
    fn round_trip_is_bit_exact_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::<f32>::new();
        store.insert("w", TensorData::uniform(5, 5, 3.0, &mut rng)).unwrap();
        let f = tmp();
        write_checkpoint(f.path(), &store, &Meta::new()).unwrap();
        let (params, _) = read_checkpoint::<f32>(f.path()).unwrap();
        for (x, y) in params["w"].as_slice().iter().zip(store.get("w").as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let f = tmp();
        std::fs::write(f.path(), "WRONG 9\nmeta\n").unwrap();
        assert!(matches!(read_checkpoint::<f64>(f.path()), Err(CheckpointError::BadHeader(_))));

        std::fs::write(f.path(), "EQTD-CKPT 1\nmeta\nw 2 2\n1.0 2.0\n").unwrap();
        assert!(matches!(
            read_checkpoint::<f64>(f.path()),
            Err(CheckpointError::ValueCount { expected: 4, got: 2, .. })
        ));

        std::fs::write(f.path(), "EQTD-CKPT 1\nmeta\nw 2 2\n").unwrap();
        assert!(matches!(read_checkpoint::<f64>(f.path()), Err(CheckpointError::Truncated(_))));

        std::fs::write(f.path(), "EQTD-CKPT 1\nmeta\nw 1 1\nbogus\n").unwrap();
        assert!(matches!(read_checkpoint::<f64>(f.path()), Err(CheckpointError::BadValue { .. })));

        std::fs::write(f.path(), "EQTD-CKPT 1\nmeta\nw 1 1\ninf\n").unwrap();
        assert!(matches!(read_checkpoint::<f64>(f.path()), Err(CheckpointError::NonFinite { .. })));
    }

    #[test]
    fn non_finite_parameters_refuse_to_serialize() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", TensorData::scalar(f64::NAN)).unwrap();
        let f = tmp();
        assert!(matches!(
            write_checkpoint(f.path(), &store, &Meta::new()),
            Err(CheckpointError::NonFinite { .. })
        ));
    }
}
