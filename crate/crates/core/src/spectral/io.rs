//! Field serialization: a JSON list of `(k, Re û_k, Im û_k)` entries under a
//! `{dim, N}` header, and an equivalent little-endian binary layout. Both
//! round-trip bit-exactly.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{make_domain, Domain, SpectralField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SCBF";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRecord {
    pub k: Vec<i32>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRecord {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub modes: Vec<ModeRecord>,
}

impl FieldRecord {
    /// Every nonzero mode, both members of each conjugate pair included.
    pub fn from_field(u: &SpectralField) -> Self {
        let d = u.domain();
        let modes = (0..d.len())
            .filter(|&idx| {
                u.components()
                    .iter()
                    .any(|c| c[idx] != Complex64::new(0.0, 0.0))
            })
            .map(|idx| ModeRecord {
                k: d.wavenumber(idx).to_vec(),
                re: u.components().iter().map(|c| c[idx].re).collect(),
                im: u.components().iter().map(|c| c[idx].im).collect(),
            })
            .collect();
        FieldRecord {
            dim: d.dim(),
            n: d.resolution(),
            modes,
        }
    }

    /// Rebuilds the field on `domain`, which must match the header. A mode
    /// listed without its conjugate partner gets the conjugate filled in.
    pub fn into_field(self, domain: &Domain) -> Result<SpectralField> {
        if domain.dim() != self.dim || domain.resolution() != self.n {
            return Err(Error::config(format!(
                "field header (dim {}, N {}) does not match domain (dim {}, N {})",
                self.dim,
                self.n,
                domain.dim(),
                domain.resolution()
            )));
        }
        let mut comps = vec![vec![Complex64::new(0.0, 0.0); domain.len()]; self.dim];
        let mut seen = vec![false; domain.len()];
        for m in &self.modes {
            if m.re.len() != self.dim || m.im.len() != self.dim {
                return Err(Error::config(format!("mode {:?} has the wrong arity", m.k)));
            }
            let idx = domain
                .index_of(&m.k)
                .ok_or_else(|| Error::config(format!("wavenumber {:?} is not resolved", m.k)))?;
            if !domain.is_active(idx) {
                return Err(Error::config(format!(
                    "wavenumber {:?} is the mean or a Nyquist mode",
                    m.k
                )));
            }
            for c in 0..self.dim {
                comps[c][idx] = Complex64::new(m.re[c], m.im[c]);
            }
            seen[idx] = true;
        }
        for idx in 0..domain.len() {
            if !seen[idx] {
                continue;
            }
            let cidx = domain.conjugate_index(idx);
            for c in comps.iter_mut() {
                if !seen[cidx] {
                    c[cidx] = c[idx].conj();
                } else if c[cidx] != c[idx].conj() {
                    return Err(Error::config(format!(
                        "coefficients at {:?} are not Hermitian",
                        domain.wavenumber(idx)
                    )));
                }
            }
        }
        SpectralField::from_components(domain, comps)
    }
}

pub fn field_to_json(u: &SpectralField) -> Result<String> {
    Ok(serde_json::to_string(&FieldRecord::from_field(u))?)
}

/// Parses a JSON field onto an existing domain.
pub fn field_from_json(domain: &Domain, text: &str) -> Result<SpectralField> {
    let rec: FieldRecord = serde_json::from_str(text)?;
    rec.into_field(domain)
}

/// Parses a JSON field and builds its domain with the given oversampling.
pub fn field_from_json_standalone(text: &str, oversample: usize) -> Result<SpectralField> {
    let rec: FieldRecord = serde_json::from_str(text)?;
    let domain = make_domain(rec.dim, rec.n, oversample)?;
    rec.into_field(&domain)
}

pub fn write_field_binary(u: &SpectralField, mut w: impl Write) -> Result<()> {
    let rec = FieldRecord::from_field(u);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(rec.dim as u32).to_le_bytes())?;
    w.write_all(&(rec.n as u32).to_le_bytes())?;
    w.write_all(&(rec.modes.len() as u64).to_le_bytes())?;
    for m in &rec.modes {
        for k in &m.k {
            w.write_all(&k.to_le_bytes())?;
        }
        for v in m.re.iter().chain(&m.im) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_binary(domain: &Domain, mut r: impl Read) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::config("not a binary field file"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::config(format!(
            "unsupported field file version {version}"
        )));
    }
    let dim = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    if dim != 2 && dim != 3 {
        return Err(Error::config(format!("bad dimension {dim} in field file")));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let count = u64::from_le_bytes(buf8) as usize;
    if count > domain.len() {
        return Err(Error::config(
            "field file lists more modes than the domain holds",
        ));
    }
    let mut modes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut k = Vec::with_capacity(dim);
        for _ in 0..dim {
            k.push(read_u32(&mut r)? as i32);
        }
        let mut vals = Vec::with_capacity(2 * dim);
        for _ in 0..2 * dim {
            r.read_exact(&mut buf8)?;
            vals.push(f64::from_le_bytes(buf8));
        }
        let im = vals.split_off(dim);
        modes.push(ModeRecord { k, re: vals, im });
    }
    FieldRecord { dim, n, modes }.into_field(domain)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
