//! Binary encoder parameter files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "EQFM"              magic
//! u32                 format version (1)
//! u32 u32             lift kind (0 coordinates, 1 moments, 2 edges), edge k
//! u32, u32 × L        layer count L, output width of each layer
//! f64                 nonlinearity leak
//! u32                 embedding width
//! u32                 invariants (0 norms, 1 norms and adjacent products)
//! u64                 initialization seed
//! u64                 parameter count P
//! f64 × P             weights in storage order
//! ```

use std::path::Path;

use equicanon_core::encoder::{EncoderArch, EncoderParams, InvariantFeatures, Lift};
use thiserror::Error;

use crate::error::{CliError, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 4] = b"EQFM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("not a parameter file (magic bytes {0:02x?})")]
    BadMagic(Vec<u8>),
    #[error("unsupported format version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated at byte {offset}: expected {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid header field {field}: {value}")]
    BadField { field: &'static str, value: u64 },
    #[error("parameter count {found} does not match the architecture ({expected})")]
    CountMismatch { expected: u64, found: u64 },
    #[error("{0}")]
    Invalid(equicanon_core::Error),
}

pub fn encode_params(params: &EncoderParams) -> Vec<u8> {
    let arch = &params.arch;
    let flat = params.to_flat();
    let mut out = Vec::with_capacity(64 + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (kind, k) = match arch.lift {
        Lift::Coordinates => (0u32, 0u32),
        Lift::Moments => (1, 0),
        Lift::Edges { k } => (2, k as u32),
    };
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&(arch.channels.len() as u32).to_le_bytes());
    for &c in &arch.channels {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&arch.leak.to_le_bytes());
    out.extend_from_slice(&(arch.embed_dim as u32).to_le_bytes());
    let inv = match arch.invariants {
        InvariantFeatures::Norms => 0u32,
        InvariantFeatures::NormsAndAdjacentProducts => 1,
    };
    out.extend_from_slice(&inv.to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ParamsError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or(ParamsError::Truncated {
            offset: self.pos,
            needed: end - self.bytes.len().min(end),
        })?;
        self.pos = end;
        let mut a = [0u8; N];
        a.copy_from_slice(slice);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, ParamsError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, ParamsError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, ParamsError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<EncoderParams, ParamsError> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ParamsError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    r.pos = 4;
    let version = r.u32()?;
    if version != VERSION {
        return Err(ParamsError::UnsupportedVersion { found: version });
    }
    let kind = r.u32()?;
    let k = r.u32()? as usize;
    let lift = match kind {
        0 => Lift::Coordinates,
        1 => Lift::Moments,
        2 => Lift::Edges { k },
        other => return Err(ParamsError::BadField { field: "lift", value: other as u64 }),
    };
    let layers = r.u32()? as usize;
    if layers > 1024 {
        return Err(ParamsError::BadField { field: "layer count", value: layers as u64 });
    }
    let channels = (0..layers).map(|_| r.u32().map(|c| c as usize)).collect::<Result<Vec<_>, _>>()?;
    let leak = r.f64()?;
    let embed_dim = r.u32()? as usize;
    let invariants = match r.u32()? {
        0 => InvariantFeatures::Norms,
        1 => InvariantFeatures::NormsAndAdjacentProducts,
        other => return Err(ParamsError::BadField { field: "invariants", value: other as u64 }),
    };
    let seed = r.u64()?;
    let count = r.u64()?;
    let arch = EncoderArch { lift, channels, leak, embed_dim, invariants };
    let mut params = equicanon_core::encoder::init_params(seed, &arch).map_err(ParamsError::Invalid)?;
    if count != params.num_params() as u64 {
        return Err(ParamsError::CountMismatch { expected: params.num_params() as u64, found: count });
    }
    let flat = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if r.pos != bytes.len() {
        return Err(ParamsError::TrailingBytes(bytes.len() - r.pos));
    }
    params.set_flat(&flat).map_err(ParamsError::Invalid)?;
    params.validate().map_err(ParamsError::Invalid)?;
    Ok(params)
}

pub fn read_params(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_params(&bytes).map_err(|source| CliError::Params { path: path.to_path_buf(), source })
}

pub fn write_params(path: &Path, params: &EncoderParams) -> Result<()> {
    fsutil::write_atomic(path, &encode_params(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use equicanon_core::encoder::init_params;
    use proptest::prelude::*;

    fn sample() -> EncoderParams {
        init_params(4, &EncoderArch::default()).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_params(&sample());
        assert_eq!(&bytes[..4], b"EQFM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let p = sample();
        assert_eq!(bytes.len(), 4 + 4 + 8 + 4 + 4 * 3 + 8 + 4 + 4 + 8 + 8 + 8 * p.num_params());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_params(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_params(&bad), Err(ParamsError::BadMagic(_))));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(decode_params(&v2), Err(ParamsError::UnsupportedVersion { found: 2 }));
        assert!(matches!(decode_params(&bytes[..bytes.len() - 3]), Err(ParamsError::Truncated { .. })));
        assert!(matches!(decode_params(&bytes[..10]), Err(ParamsError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(decode_params(&long), Err(ParamsError::TrailingBytes(1)));
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_params(&nan), Err(ParamsError::Invalid(_))));
        assert!(matches!(decode_params(b"EQ"), Err(ParamsError::BadMagic(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(seed in any::<u64>(), lift in 0u8..3, k in 1usize..20, widths in prop::collection::vec(1usize..6, 1..4)) {
            let lift = match lift { 0 => Lift::Coordinates, 1 => Lift::Moments, _ => Lift::Edges { k } };
            let arch = EncoderArch { lift, channels: widths, leak: 0.2, embed_dim: 3, invariants: InvariantFeatures::Norms };
            let p = init_params(seed, &arch).unwrap();
            let bytes = encode_params(&p);
            let back = decode_params(&bytes).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(encode_params(&back), bytes);
        }
    }
}
