//! `INET` checkpoints.
//!
//! Layout (little-endian): magic `INET`, `u32` version, length-prefixed network
//! description, length-prefixed free-form metadata, `u32` parameter count and
//! the `f32` parameters in declaration order, then `u32` batch-norm layer
//! count followed by each layer's running means and variances as `f32`.

use std::fs;
use std::path::Path;

use super::{config_from_line, config_to_line, SphereNet};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"INET";
const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_f32s<T: Real>(buf: &mut Vec<u8>, v: &[T]) {
    for x in v {
        buf.extend_from_slice(&x.to_f32_lossy().to_le_bytes());
    }
}

pub fn checkpoint_bytes<T: Real>(net: &SphereNet<T>, meta: &str) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 4 * net.num_params());
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_str(&mut buf, &config_to_line(net.config()));
    put_str(&mut buf, meta);
    put_u32(&mut buf, net.num_params() as u32);
    put_f32s(&mut buf, net.params());
    put_u32(&mut buf, net.running_stats().len() as u32);
    for rs in net.running_stats() {
        put_f32s(&mut buf, &rs.mean);
        put_f32s(&mut buf, &rs.var);
    }
    buf
}

/// Writes `net` with a metadata string (class names, config hash, ...).
pub fn save_checkpoint<T: Real>(net: &SphereNet<T>, meta: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(net, meta)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn string(&mut self) -> Option<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }

    fn f32s<T: Real>(&mut self, n: usize) -> Option<Vec<T>> {
        let bytes = self.take(n.checked_mul(4)?)?;
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect(),
        )
    }
}

pub fn checkpoint_from_bytes<T: Real>(bytes: &[u8], path: &Path) -> Result<(SphereNet<T>, String)> {
    let bad = |msg: &str| Error::corrupt(path, msg);
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("not an INET checkpoint"));
    }
    match r.u32() {
        Some(VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported version {v}"))),
        None => return Err(bad("truncated header")),
    }
    let line = r.string().ok_or_else(|| bad("truncated network description"))?;
    let config = config_from_line(&line).map_err(|e| bad(&e.to_string()))?;
    let meta = r.string().ok_or_else(|| bad("truncated metadata"))?;
    let mut net = SphereNet::<T>::new(config, 0)?;
    let count = r.u32().ok_or_else(|| bad("truncated parameter count"))? as usize;
    if count != net.num_params() {
        return Err(bad(&format!(
            "{count} parameters stored, network needs {}",
            net.num_params()
        )));
    }
    net.params = r.f32s(count).ok_or_else(|| bad("truncated parameters"))?;
    let layers = r.u32().ok_or_else(|| bad("truncated statistics"))? as usize;
    if layers != net.running.len() {
        return Err(bad("batch-norm layer count mismatch"));
    }
    for rs in &mut net.running {
        let c = rs.mean.len();
        rs.mean = r.f32s(c).ok_or_else(|| bad("truncated statistics"))?;
        rs.var = r.f32s(c).ok_or_else(|| bad("truncated statistics"))?;
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    if !net.is_finite() {
        return Err(bad("non-finite parameters"));
    }
    Ok((net, meta))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(SphereNet<T>, String)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetPreset;

    #[test]
    fn round_trip_is_bit_exact_for_f32() {
        let mut net = SphereNet::<f32>::new(NetPreset::T2_512.config(5).unwrap(), 3).unwrap();
        net.running[1].mean[7] = 0.25;
        let bytes = checkpoint_bytes(&net, "classes=a,b");
        let (back, meta) = checkpoint_from_bytes::<f32>(&bytes, Path::new("x")).unwrap();
        assert_eq!(meta, "classes=a,b");
        assert_eq!(back.params(), net.params());
        assert_eq!(back.running_stats(), net.running_stats());
        assert_eq!(back.config(), net.config());
    }

    #[test]
    fn rejects_damage() {
        let net = SphereNet::<f32>::new(NetPreset::T2_256.config(3).unwrap(), 1).unwrap();
        let bytes = checkpoint_bytes(&net, "");
        let p = Path::new("x");
        assert!(checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 1], p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(checkpoint_from_bytes::<f32>(&extra, p).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes::<f32>(&magic, p),
            Err(Error::CacheCorrupt { .. })
        ));
    }
}
