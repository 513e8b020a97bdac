//! Binary MPO bundles and JSON reports.
//!
//! Bundle layout, all little-endian:
//!
//! ```text
//! "MPOB"  version:u16  n:u16
//! rows:u64 cols:u64 padded_rows:u64 padded_cols:u64
//! row_factors:[u32; n] col_factors:[u32; n] bonds:[u32; n+1]
//! central:u16 flags:u16
//! n x { shape:[u32; 4]  data:[f64; prod(shape)] }
//! bias:[f64; cols]          (only with FLAG_BIAS)
//! crc32:u32                 (over every preceding byte)
//! ```
//!
//! A bundle with a bias is a layer; without one it is a bare factorization.
//! Cut spectra are not stored.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layer::MpoLinear;
use crate::mpo::{BondProfile, MpoFactorization, ShapePlan};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MPOB";
pub const VERSION: u16 = 1;

pub const FLAG_FREEZE_CENTRAL: u16 = 1 << 0;
pub const FLAG_BIAS: u16 = 1 << 1;
/// Reserved for stored spectra; rejected by this version.
pub const FLAG_SPECTRA: u16 = 1 << 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Bundle {
    Factorization(MpoFactorization),
    Layer(MpoLinear),
}

impl Bundle {
    pub fn factorization(&self) -> &MpoFactorization {
        match self {
            Bundle::Factorization(f) => f,
            Bundle::Layer(l) => l.factorization(),
        }
    }

    pub fn into_factorization(self) -> MpoFactorization {
        match self {
            Bundle::Factorization(f) => f,
            Bundle::Layer(l) => l.factorization().clone(),
        }
    }
}

impl From<MpoFactorization> for Bundle {
    fn from(f: MpoFactorization) -> Self {
        Bundle::Factorization(f)
    }
}

impl From<MpoLinear> for Bundle {
    fn from(l: MpoLinear) -> Self {
        Bundle::Layer(l)
    }
}

/// Exact encoded size in bytes.
pub fn bundle_size(plan: &ShapePlan, bonds: &BondProfile, with_bias: bool) -> usize {
    let n = plan.n();
    let header = 4 + 2 + 2 + 4 * 8 + 4 * (2 * n + n + 1) + 2 + 2;
    let tensors: usize = (0..n)
        .map(|k| 16 + 8 * bonds.dims[k] * plan.row_factors[k] * plan.col_factors[k] * bonds.dims[k + 1])
        .sum();
    let bias = if with_bias { 8 * plan.cols } else { 0 };
    header + tensors + bias + 4
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the bundle format")))
}

fn u16_of(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the bundle format")))
}

pub fn encode_bundle(bundle: &Bundle) -> Result<Vec<u8>> {
    let f = bundle.factorization();
    let plan = f.plan();
    let n = plan.n();
    let (bias, freeze) = match bundle {
        Bundle::Factorization(_) => (None, false),
        Bundle::Layer(l) => (Some(l.bias()), l.freeze_central()),
    };
    let mut out = Vec::with_capacity(bundle_size(plan, f.bonds(), bias.is_some()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u16_of(n, "site count")?.to_le_bytes());
    for v in [plan.rows, plan.cols, plan.padded_rows, plan.padded_cols] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &v in plan.row_factors.iter().chain(&plan.col_factors) {
        out.extend_from_slice(&u32_of(v, "factor")?.to_le_bytes());
    }
    for &d in &f.bonds().dims {
        out.extend_from_slice(&u32_of(d, "bond")?.to_le_bytes());
    }
    out.extend_from_slice(&u16_of(f.central_index(), "central index")?.to_le_bytes());
    let mut flags = 0u16;
    if freeze {
        flags |= FLAG_FREEZE_CENTRAL;
    }
    if bias.is_some() {
        flags |= FLAG_BIAS;
    }
    out.extend_from_slice(&flags.to_le_bytes());
    for t in f.tensors() {
        for &s in t.shape() {
            out.extend_from_slice(&u32_of(s, "tensor extent")?.to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(b) = bias {
        for &x in b {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptBundle(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::CorruptBundle(format!("{what} {v} overflows")))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count.checked_mul(8).ok_or_else(|| Error::CorruptBundle(format!("{what} length overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_bundle(bytes: &[u8]) -> Result<Bundle> {
    if bytes.len() < 4 {
        return Err(Error::CorruptBundle(format!("{} bytes is too short for a bundle", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 10 {
        return Err(Error::CorruptBundle("truncated header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 6 };
    let corrupt = |e: Error| Error::CorruptBundle(e.to_string());
    let n = r.u16("site count")? as usize;
    let rows = r.u64("rows")?;
    let cols = r.u64("cols")?;
    let padded_rows = r.u64("padded rows")?;
    let padded_cols = r.u64("padded cols")?;
    let row_factors = (0..n).map(|_| r.u32("row factor")).collect::<Result<Vec<_>>>()?;
    let col_factors = (0..n).map(|_| r.u32("column factor")).collect::<Result<Vec<_>>>()?;
    let bonds = (0..=n).map(|_| r.u32("bond")).collect::<Result<Vec<_>>>()?;
    let central = r.u16("central index")? as usize;
    let flags = r.u16("flags")?;

    let plan = ShapePlan::new(rows, cols, row_factors, col_factors).map_err(corrupt)?;
    if plan.padded_rows != padded_rows || plan.padded_cols != padded_cols {
        return Err(Error::CorruptBundle(format!(
            "padded dims {padded_rows}x{padded_cols} disagree with the factor products"
        )));
    }
    if central != plan.central_index() {
        return Err(Error::CorruptBundle(format!("central index {central}, expected {}", plan.central_index())));
    }
    if flags & !(FLAG_FREEZE_CENTRAL | FLAG_BIAS) != 0 {
        return Err(Error::CorruptBundle(format!("unsupported flag bits {flags:#06x}")));
    }
    let has_bias = flags & FLAG_BIAS != 0;
    if flags & FLAG_FREEZE_CENTRAL != 0 && !has_bias {
        return Err(Error::CorruptBundle("freeze flag set on a bare factorization".into()));
    }
    let bonds = BondProfile::new(bonds);
    bonds.validate(&plan).map_err(corrupt)?;
    if body.len() + 4 != bundle_size(&plan, &bonds, has_bias) {
        return Err(Error::CorruptBundle(format!(
            "{} bytes, header implies {}",
            body.len() + 4,
            bundle_size(&plan, &bonds, has_bias)
        )));
    }

    let mut tensors = Vec::with_capacity(n);
    for k in 0..n {
        let shape = (0..4).map(|_| r.u32("tensor shape")).collect::<Result<Vec<_>>>()?;
        let want = [bonds.dims[k], plan.row_factors[k], plan.col_factors[k], bonds.dims[k + 1]];
        if shape != want {
            return Err(Error::CorruptBundle(format!("tensor {k} has shape {shape:?}, header implies {want:?}")));
        }
        let data = r.f64s(shape.iter().product(), "tensor data")?;
        tensors.push(Tensor::new(shape, data).map_err(corrupt)?);
    }
    let bias = if has_bias { Some(r.f64s(plan.cols, "bias")?) } else { None };
    if r.pos != body.len() {
        return Err(Error::CorruptBundle(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let f = MpoFactorization::from_parts(plan, tensors).map_err(corrupt)?;
    Ok(match bias {
        Some(b) => Bundle::Layer(MpoLinear::from_factorization(f, b, flags & FLAG_FREEZE_CENTRAL != 0)?),
        None => Bundle::Factorization(f),
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn save_bundle(bundle: &Bundle, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_bundle(bundle)?)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<Bundle> {
    decode_bundle(&std::fs::read(path)?)
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{decompose, full_bonds, plan_shapes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![rows, cols], |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn sample_layer() -> MpoLinear {
        let plan = plan_shapes(12, 10, 3, None, None).unwrap();
        let mut l =
            MpoLinear::from_dense(&random(12, 10, 1), &random(1, 10, 2).into_data(), &plan, &full_bonds(&plan))
                .unwrap();
        l.set_freeze_central(true);
        l
    }

    #[test]
    fn layer_round_trips_bit_exactly() {
        let bundle = Bundle::Layer(sample_layer());
        let bytes = encode_bundle(&bundle).unwrap();
        let back = decode_bundle(&bytes).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(encode_bundle(&back).unwrap(), bytes);
        let f = bundle.factorization();
        assert_eq!(bytes.len(), bundle_size(f.plan(), f.bonds(), true));
    }

    #[test]
    fn header_fields_are_where_the_layout_says() {
        let l = sample_layer();
        let bytes = encode_bundle(&Bundle::Layer(l.clone())).unwrap();
        assert_eq!(&bytes[..4], b"MPOB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 3);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 12);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 10);
        let flags_at = 8 + 32 + 4 * 10 + 2;
        assert_eq!(u16::from_le_bytes([bytes[flags_at], bytes[flags_at + 1]]), FLAG_FREEZE_CENTRAL | FLAG_BIAS);
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
    }

    #[test]
    fn distinct_errors_for_each_failure() {
        let bytes = encode_bundle(&Bundle::Layer(sample_layer())).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_bundle(&bad), Err(Error::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_bundle(&bad), Err(Error::UnsupportedVersion(2))));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x10;
        assert!(matches!(decode_bundle(&bad), Err(Error::ChecksumMismatch { .. })));

        // consistent checksum, inconsistent header
        let mut bad = bytes[..bytes.len() - 4].to_vec();
        bad[8] = 13;
        let crc = crc32fast::hash(&bad);
        bad.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_bundle(&bad), Err(Error::CorruptBundle(_))));

        assert!(matches!(decode_bundle(&bytes[..3]), Err(Error::CorruptBundle(_))));
    }

    #[test]
    fn bare_factorization_has_no_bias_payload() {
        let plan = plan_shapes(16, 16, 2, None, None).unwrap();
        let f = decompose(&random(16, 16, 3), &plan).unwrap();
        let bytes = encode_bundle(&Bundle::Factorization(f.clone())).unwrap();
        assert_eq!(bytes.len(), bundle_size(&plan, f.bonds(), false));
        match decode_bundle(&bytes).unwrap() {
            Bundle::Factorization(g) => {
                assert_eq!(g.tensors(), f.tensors());
                assert!(!g.spectra_fresh());
            }
            Bundle::Layer(_) => panic!("expected a factorization"),
        }
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layer.mpob");
        let bundle = Bundle::Layer(sample_layer());
        save_bundle(&bundle, &path).unwrap();
        assert_eq!(load_bundle(&path).unwrap(), bundle);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(load_bundle(dir.path().join("missing")), Err(Error::Io(_))));
    }
}
