//! Versioned binary checkpoint of a [`TrainState`].
//!
//! Little-endian throughout:
//!
//! ```text
//! "FSCK"  u32 version=1
//! u8 scheme (0 tplinker, 1 bitt)   u8 phase (0 init, 1 pretrain, 2 finetune)
//! u64 step
//! rng: [u8; 32] seed, u64 stream, u128 word position
//! heads: u32 count, then per layer: u32 in, u32 out, in·out f64 weight (row-major), out f64 bias
//! u8 has_classifier, then the classifier layers as above
//! prototypes: f64 gamma, u32 chunks, per chunk: u32 labels, u32 dim, labels·dim f64
//! head optimizer: adam block
//! u8 has_classifier_optimizer, then an adam block
//! u32 CRC32 of every preceding byte
//! ```
//!
//! An adam block is `f64 lr, beta1, beta2, eps`, `u64 t`, `u32 tensors`, and
//! per tensor `u64 len`, `len` f64 first moments, `len` f64 second moments.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{Adam, AdamConfig};
use super::train::{Phase, TrainState};
use crate::encoding::{Classifier, HeadParams, Linear};
use crate::error::{Error, Result};
use crate::metricspace::PrototypeBank;
use crate::types::SchemeId;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn layers(&mut self, layers: &[Linear]) {
        self.u32(layers.len());
        for l in layers {
            self.u32(l.input_dim());
            self.u32(l.output_dim());
            self.f64s(l.weight.as_slice().expect("standard layout"));
            self.f64s(l.bias.as_slice().expect("standard layout"));
        }
    }
    fn adam(&mut self, a: &Adam) {
        self.f64s(&[a.cfg.lr, a.cfg.beta1, a.cfg.beta2, a.cfg.eps]);
        self.u64(a.t);
        self.u32(a.m.len());
        for (m, v) in a.m.iter().zip(&a.v) {
            self.u64(m.len() as u64);
            self.f64s(m);
            self.f64s(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn layers(&mut self) -> Result<Vec<Linear>> {
        let n = self.u32()?;
        (0..n)
            .map(|_| {
                let (i, o) = (self.u32()?, self.u32()?);
                let weight = Array2::from_shape_vec((i, o), self.f64s(i * o)?).expect("sized read");
                let bias = Array1::from(self.f64s(o)?);
                Ok(Linear { weight, bias })
            })
            .collect()
    }
    fn adam(&mut self) -> Result<Adam> {
        let c = self.f64s(4)?;
        let cfg = AdamConfig { lr: c[0], beta1: c[1], beta2: c[2], eps: c[3] };
        let t = self.u64()?;
        let n = self.u32()?;
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let len = self.u64()? as usize;
            m.push(self.f64s(len)?);
            v.push(self.f64s(len)?);
        }
        Ok(Adam { cfg, t, m, v })
    }
}

fn scheme_code(s: SchemeId) -> u8 {
    match s {
        SchemeId::TpLinker => 0,
        SchemeId::Bitt => 1,
    }
}

pub fn encode_checkpoint(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize);
    w.u8(scheme_code(state.scheme()));
    w.u8(state.phase.code());
    w.u64(state.step);
    w.0.extend_from_slice(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.0.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    w.layers(&state.heads.heads);
    match &state.classifier {
        Some(c) => {
            w.u8(1);
            w.layers(&c.layers);
        }
        None => w.u8(0),
    }
    w.f64s(&[state.prototypes.gamma]);
    w.u32(state.prototypes.chunks.len());
    for chunk in &state.prototypes.chunks {
        w.u32(chunk.len());
        w.u32(chunk.first().map_or(0, |p| p.len()));
        for p in chunk {
            w.f64s(p.as_slice().expect("standard layout"));
        }
    }
    w.adam(&state.adam_heads);
    match &state.adam_classifier {
        Some(a) => {
            w.u8(1);
            w.adam(a);
        }
        None => w.u8(0),
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<TrainState> {
    if buf.len() < 12 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let scheme = match r.u8()? {
        0 => SchemeId::TpLinker,
        1 => SchemeId::Bitt,
        other => return Err(Error::Checkpoint(format!("unknown scheme code {other}"))),
    };
    let phase = Phase::from_code(r.u8()?)?;
    let step = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let heads = HeadParams { scheme, heads: r.layers()? };
    let classifier = match r.u8()? {
        0 => None,
        _ => Some(Classifier { scheme, layers: r.layers()? }),
    };
    let gamma = r.f64s(1)?[0];
    let n_chunks = r.u32()?;
    let mut chunks = Vec::with_capacity(n_chunks);
    for _ in 0..n_chunks {
        let (labels, dim) = (r.u32()?, r.u32()?);
        chunks.push((0..labels).map(|_| Ok(Array1::from(r.f64s(dim)?))).collect::<Result<Vec<_>>>()?);
    }
    let adam_heads = r.adam()?;
    let adam_classifier = match r.u8()? {
        0 => None,
        _ => Some(r.adam()?),
    };
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let state = TrainState {
        heads,
        classifier,
        prototypes: PrototypeBank { gamma, chunks },
        adam_heads,
        adam_classifier,
        phase,
        step,
        rng,
    };
    validate_state(&state)?;
    Ok(state)
}

fn validate_state(state: &TrainState) -> Result<()> {
    let expected = crate::encoding::head_count(state.scheme());
    if state.heads.heads.len() != expected {
        return Err(Error::Checkpoint(format!("{} heads, scheme needs {expected}", state.heads.heads.len())));
    }
    let (d, h) = (state.heads.embed_dim(), state.heads.hidden());
    if state.heads.heads.iter().any(|l| l.input_dim() != d || l.output_dim() != h) {
        return Err(Error::Checkpoint("heads have inconsistent shapes".into()));
    }
    let alphabet = state.alphabet();
    let bank_ok = state.prototypes.chunks.len() == alphabet.len()
        && state.prototypes.chunks.iter().zip(&alphabet).all(|(c, &n)| c.len() == n && c.iter().all(|p| p.len() == h));
    if !bank_ok {
        return Err(Error::Checkpoint("prototype bank does not match the scheme".into()));
    }
    let shapes_match = |a: &Adam, t: Vec<&[f64]>| a.m.len() == t.len() && a.m.iter().zip(&t).all(|(m, x)| m.len() == x.len());
    use crate::encoding::Tensors;
    if !shapes_match(&state.adam_heads, state.heads.tensors()) {
        return Err(Error::Checkpoint("head optimizer state does not match the heads".into()));
    }
    match (&state.classifier, &state.adam_classifier) {
        (Some(c), Some(a)) if shapes_match(a, c.tensors()) => {}
        (None, None) => {}
        _ => return Err(Error::Checkpoint("classifier optimizer state does not match the classifier".into())),
    }
    if !state.is_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, state: &TrainState) -> Result<()> {
    std::fs::write(path, encode_checkpoint(state))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use rand::RngCore;

    use super::*;
    use crate::fewshot::optim::AdamConfig;

    fn assert_same(a: &TrainState, b: &TrainState) {
        assert_eq!(a.heads, b.heads);
        assert_eq!(a.classifier, b.classifier);
        assert_eq!(a.prototypes, b.prototypes);
        assert_eq!(a.adam_heads, b.adam_heads);
        assert_eq!(a.adam_classifier, b.adam_classifier);
        assert_eq!(a.phase, b.phase);
        assert_eq!(a.step, b.step);
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn roundtrip_preserves_everything() {
        for scheme in [SchemeId::TpLinker, SchemeId::Bitt] {
            let mut s = TrainState::new(scheme, 12, 4, 0.9, 7);
            s.enter_phase(Phase::Pretrain, AdamConfig { lr: 1e-3, ..Default::default() });
            s.step = 42;
            s.rng.next_u64();
            s.prototypes.chunks[0][1][2] = 0.25;
            s.adam_heads.t = 3;
            s.adam_heads.m[0][1] = -1.5;
            let bytes = encode_checkpoint(&s);
            let mut back = decode_checkpoint(&bytes).unwrap();
            assert_same(&s, &back);
            assert_eq!(s.rng.clone().next_u64(), back.rng.next_u64());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let s = TrainState::new(SchemeId::TpLinker, 6, 3, 0.9, 1);
        let bytes = encode_checkpoint(&s);
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(decode_checkpoint(&bad).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 9]).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        let n = magic.len() - 4;
        let crc = crc32fast::hash(&magic[..n]).to_le_bytes();
        magic[n..].copy_from_slice(&crc);
        assert!(matches!(decode_checkpoint(&magic), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let s = TrainState::new(SchemeId::Bitt, 8, 2, 0.5, 3);
        save_checkpoint(&path, &s).unwrap();
        assert_same(&s, &load_checkpoint(&path).unwrap());
    }
}
