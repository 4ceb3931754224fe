//! Little-endian `KAPI1` container for trained predictors.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::ParamStore;
use crate::reference::IcKind;

use super::{Family, PredictorModel};

pub const MAGIC: &[u8; 5] = b"KAPI1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a KAPI1 checkpoint")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

fn put_u32(w: &mut impl Write, v: usize) -> io::Result<()> {
    w.write_all(&u32::try_from(v).expect("size fits in u32").to_le_bytes())
}

pub fn write_checkpoint(model: &PredictorModel, w: &mut impl Write) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&[model.family.tag()])?;
    put_u32(w, model.m)?;
    w.write_all(&[match model.ic_kind {
        IcKind::PeriodicGaussian => 0,
        IcKind::MexicanHat => 1,
    }])?;
    put_u32(w, model.harmonics())?;
    put_u32(w, model.ranges.len())?;
    for &(lo, hi) in &model.ranges {
        w.write_all(&lo.to_le_bytes())?;
        w.write_all(&hi.to_le_bytes())?;
    }
    let entries = model.store.entries();
    put_u32(w, entries.len())?;
    for e in entries {
        put_u32(w, e.name.len())?;
        w.write_all(e.name.as_bytes())?;
        put_u32(w, e.shape.len())?;
        for &d in &e.shape {
            put_u32(w, d)?;
        }
        for v in model.store.get(&e.name).unwrap() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => CheckpointError::Malformed("truncated".into()),
            _ => CheckpointError::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<PredictorModel, CheckpointError> {
    let mut rd = Reader { inner: r };
    if &rd.bytes::<5>()? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let [tag] = rd.bytes::<1>()?;
    let family = Family::from_tag(tag).ok_or_else(|| CheckpointError::Malformed(format!("family tag {tag}")))?;
    let m = rd.u32()?;
    let ic_kind = match rd.bytes::<1>()? {
        [0] => IcKind::PeriodicGaussian,
        [1] => IcKind::MexicanHat,
        [k] => return Err(CheckpointError::Malformed(format!("initial condition kind {k}"))),
    };
    let harmonics = rd.u32()?;
    let n_ranges = rd.u32()?;
    if n_ranges > 16 {
        return Err(CheckpointError::Malformed(format!("{n_ranges} parameter ranges")));
    }
    let mut ranges = Vec::with_capacity(n_ranges);
    for _ in 0..n_ranges {
        ranges.push((rd.f64()?, rd.f64()?));
    }
    let n_arrays = rd.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..n_arrays {
        let len = rd.u32()?;
        if len > 1024 {
            return Err(CheckpointError::Malformed("array name too long".into()));
        }
        let mut name = vec![0u8; len];
        rd.inner.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Malformed("array name is not utf-8".into()))?;
        let ndims = rd.u32()?;
        if ndims > 8 {
            return Err(CheckpointError::Malformed(format!("{name}: {ndims} dimensions")));
        }
        let shape = (0..ndims).map(|_| rd.u32()).collect::<Result<Vec<_>, _>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&c| c <= 1 << 28);
        let count = count.ok_or_else(|| CheckpointError::Malformed(format!("{name}: shape {shape:?}")))?;
        let values = (0..count).map(|_| rd.f64()).collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::Malformed(format!("{name}: non-finite values")));
        }
        if store.entry(&name).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate array {name}")));
        }
        store.add(&name, &shape, values);
    }
    PredictorModel::from_parts(family, m, ic_kind, harmonics, ranges, store)
        .ok_or_else(|| CheckpointError::Malformed("arrays do not describe a predictor".into()))
}

pub fn save_checkpoint(model: &PredictorModel, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PredictorModel, CheckpointError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::super::tests::{jitter, small};
    use super::super::ModelConfig;
    use super::*;

    #[test]
    fn round_trip_every_family() {
        for f in Family::ALL {
            for conditioned in [true, false] {
                let cfg = ModelConfig { conditioned, ic_kind: IcKind::MexicanHat, ..small(f) };
                let mut model = PredictorModel::new(f, &cfg, 21);
                jitter(&mut model, 22, 0.1);
                let mut buf = Vec::new();
                write_checkpoint(&model, &mut buf).unwrap();
                assert_eq!(&buf[..5], MAGIC);
                let back = read_checkpoint(&mut buf.as_slice()).unwrap();
                assert_eq!(back, model, "{f} conditioned={conditioned}");
                assert_eq!(back.is_conditioned(), conditioned);
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint(&mut &b"KAPI2xxxx"[..]), Err(CheckpointError::BadMagic)));
        let model = PredictorModel::new(Family::Poisson, &small(Family::Poisson), 1);
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(CheckpointError::Malformed(_))));
    }
}
