//! Binary container for dictionaries, arc frames and measurement operators.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                              |
//! |-------:|-----:|----------------------------------------------------|
//! | 0      | 8    | magic `PLRSTDIC`                                   |
//! | 8      | 2    | format version (1)                                 |
//! | 10     | 1    | kind: 0 TDE dictionary, 1 FE dictionary, 2 operator |
//! | 11     | 1    | flags: bit 0 set when arc frames follow the atoms   |
//! | 12     | 4    | reserved, zero                                     |
//! | 16     | 8    | `N` (signal length)                                |
//! | 24     | 8    | `P` (atoms) or `M` (measurements)                   |
//! | 32     | 8    | spacing (f64) or kappa for operators               |
//! | 40     | 8    | redundancy `c` or operator seed                    |
//! | 48     | 8    | reserved f64, zero                                 |
//! | 56     | 32   | SHA-256 of the payload                             |
//! | 88     | ...  | payload                                            |
//!
//! Dictionary payload: pulse `f0, delta_f, duration, energy_normalized` as
//! four f64 (zeros for FE), then the `N x P` atoms row-major as `(re, im)`
//! f64 pairs. With arcs: `r[P]`, `theta[P]`, then `C`, `U`, `V` in the same
//! layout as the atoms. Operator payload: `N` chips as i8.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::dictionary::{ArcBasisSet, DictionaryKind, ParametricDictionary};
use crate::error::{Error, Result};
use crate::sensing::MeasurementOperator;
use crate::signal::{CMatrix, PulseSpec, SamplingGrid, Waveform, C64};

pub const MAGIC: &[u8; 8] = b"PLRSTDIC";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 88;
const KIND_TDE: u8 = 0;
const KIND_FE: u8 = 1;
const KIND_OPERATOR: u8 = 2;
const FLAG_ARCS: u8 = 1;

struct Header {
    kind: u8,
    flags: u8,
    n: u64,
    p: u64,
    spacing: f64,
    extra: u64,
    checksum: [u8; 32],
}

impl Header {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind);
        out.push(self.flags);
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.p.to_le_bytes());
        out.extend_from_slice(&self.spacing.to_le_bytes());
        out.extend_from_slice(&self.extra.to_le_bytes());
        out.extend_from_slice(&0f64.to_le_bytes());
        out.extend_from_slice(&self.checksum);
        out
    }

    fn decode(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([b[8], b[9]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        Ok(Header {
            kind: b[10],
            flags: b[11],
            n: u64_at(16),
            p: u64_at(24),
            spacing: f64::from_bits(u64_at(32)),
            extra: u64_at(40),
            checksum: b[56..88].try_into().expect("32 bytes"),
        })
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &CMatrix) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("payload truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<CMatrix> {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = C64::new(self.f64()?, self.f64()?);
            }
        }
        Ok(m)
    }
}

fn write_container<W: Write>(mut w: W, mut header: Header, payload: &[u8]) -> Result<()> {
    header.checksum = Sha256::digest(payload).into();
    w.write_all(&header.encode())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

fn read_container<R: Read>(mut r: R) -> Result<(Header, Vec<u8>)> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|_| Error::Format("header truncated".into()))?;
    let header = Header::decode(&head)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let digest: [u8; 32] = Sha256::digest(&payload).into();
    if digest != header.checksum {
        return Err(Error::Format("checksum mismatch".into()));
    }
    Ok((header, payload))
}

/// Writes a dictionary and, optionally, its arc frames.
pub fn write_dictionary<W: Write>(w: W, dict: &ParametricDictionary, arcs: Option<&ArcBasisSet>) -> Result<()> {
    let (n, p) = (dict.signal_len(), dict.len());
    let mut payload = Vec::with_capacity(32 + 16 * n * p * if arcs.is_some() { 4 } else { 1 });
    let pulse = match dict.waveform() {
        Waveform::Chirp { spec, .. } => {
            [spec.f0, spec.delta_f, spec.duration, if spec.energy_normalized { 1.0 } else { 0.0 }]
        }
        _ => [0.0; 4],
    };
    for v in pulse {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    put_matrix(&mut payload, dict.atoms());
    if let Some(a) = arcs {
        if a.len() != p {
            return Err(Error::dim(format!("{} arc frames for {p} atoms", a.len())));
        }
        for v in a.r.iter().chain(&a.theta) {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for m in [&a.c, &a.u, &a.v] {
            put_matrix(&mut payload, m);
        }
    }
    let header = Header {
        kind: if dict.kind() == DictionaryKind::Tde { KIND_TDE } else { KIND_FE },
        flags: if arcs.is_some() { FLAG_ARCS } else { 0 },
        n: n as u64,
        p: p as u64,
        spacing: dict.spacing(),
        extra: dict.redundancy() as u64,
        checksum: [0; 32],
    };
    write_container(w, header, &payload)
}

pub fn read_dictionary<R: Read>(r: R) -> Result<(ParametricDictionary, Option<ArcBasisSet>)> {
    let (h, payload) = read_container(r)?;
    let (n, p, c) = (h.n as usize, h.p as usize, h.extra as usize);
    if n == 0 || c == 0 || p != n.saturating_mul(c) || !(h.spacing > 0.0) {
        return Err(Error::Format(format!("inconsistent sizes N={n}, P={p}, c={c}")));
    }
    let with_arcs = h.flags & FLAG_ARCS != 0;
    let expected = 32 + 16 * n * p + if with_arcs { 16 * p + 48 * n * p } else { 0 };
    if payload.len() != expected {
        return Err(Error::Format(format!("payload is {} bytes, expected {expected}", payload.len())));
    }
    let mut cur = Cursor { buf: &payload, pos: 0 };
    let pulse = [cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?];
    let (kind, waveform) = match h.kind {
        KIND_TDE => {
            let spec = PulseSpec::new(pulse[0], pulse[1], pulse[2], pulse[3] != 0.0)?;
            let grid = SamplingGrid::new(n, h.spacing * c as f64)?;
            (DictionaryKind::Tde, Waveform::chirp(spec, grid)?)
        }
        KIND_FE => (DictionaryKind::Fe, Waveform::exponential(n)),
        other => return Err(Error::Format(format!("kind {other} is not a dictionary"))),
    };
    let atoms = cur.matrix(n, p)?;
    let dict = ParametricDictionary::from_parts(kind, waveform, atoms, h.spacing, c);
    let arcs = if with_arcs {
        let r = (0..p).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let theta = (0..p).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let (cm, um, vm) = (cur.matrix(n, p)?, cur.matrix(n, p)?, cur.matrix(n, p)?);
        Some(ArcBasisSet { c: cm, u: um, v: vm, r, theta, spacing: h.spacing, params: dict.params().to_vec() })
    } else {
        None
    };
    Ok((dict, arcs))
}

pub fn write_operator<W: Write>(w: W, op: &MeasurementOperator) -> Result<()> {
    let payload: Vec<u8> = op.chips().iter().map(|&c| c as u8).collect();
    let header = Header {
        kind: KIND_OPERATOR,
        flags: 0,
        n: op.cols() as u64,
        p: op.rows() as u64,
        spacing: op.kappa(),
        extra: op.seed(),
        checksum: [0; 32],
    };
    write_container(w, header, &payload)
}

pub fn read_operator<R: Read>(r: R) -> Result<MeasurementOperator> {
    let (h, payload) = read_container(r)?;
    if h.kind != KIND_OPERATOR {
        return Err(Error::Format(format!("kind {} is not an operator", h.kind)));
    }
    if payload.len() as u64 != h.n {
        return Err(Error::Format(format!("{} chips for N = {}", payload.len(), h.n)));
    }
    let chips = payload.into_iter().map(|b| b as i8).collect();
    MeasurementOperator::from_chips(chips, h.p as usize, h.spacing, h.extra)
}
