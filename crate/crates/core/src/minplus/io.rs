//! Binary matrix files.
//!
//! Layout, all little-endian: magic `b"WKAM"`, `u32` version, `u64` state
//! count, `f64` time step, then `n_states²` row-major `f64` entries with `+∞`
//! stored as IEEE infinity.

use std::io::{Read, Write};

use super::CostMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WKAM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn write_matrix<W: Write>(mut w: W, m: &CostMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.n_states() as u64).to_le_bytes())?;
    w.write_all(&m.tau().to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.entries().len() * 8);
    for v in m.entries() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn encode_matrix(m: &CostMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.entries().len() * 8);
    write_matrix(&mut out, m).expect("writing to a Vec cannot fail");
    out
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<CostMatrix> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let tau = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let len = n
        .checked_mul(n)
        .and_then(|k| k.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("state count {n} too large")))?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after matrix body".into()));
    }
    let entries = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    CostMatrix::from_entries(n, entries, tau).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minplus::INF;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = CostMatrix::from_entries(2, vec![0.0, INF, -1.5, 2.0], 0.25).unwrap();
        let bytes = encode_matrix(&m);
        assert_eq!(&bytes[..4], b"WKAM");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..16], 2u64.to_le_bytes());
        assert_eq!(bytes[16..24], 0.25f64.to_le_bytes());
        assert_eq!(bytes[32..40], f64::INFINITY.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 32);
    }

    #[test]
    fn rejects_corruption() {
        let m = CostMatrix::from_entries(1, vec![0.0], 1.0).unwrap();
        let mut bytes = encode_matrix(&m);
        bytes[0] = b'X';
        assert!(matches!(read_matrix(&bytes[..]), Err(Error::Format(_))));
        let mut bytes = encode_matrix(&m);
        bytes.push(0);
        assert!(matches!(read_matrix(&bytes[..]), Err(Error::Format(_))));
        let bytes = encode_matrix(&m);
        assert!(read_matrix(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(prop_oneof![Just(INF), -1e6f64..1e6], 9), tau in 1e-3f64..10.0) {
            let m = CostMatrix::from_entries(3, vals, tau).unwrap();
            let back = read_matrix(&encode_matrix(&m)[..]).unwrap();
            prop_assert_eq!(back.tau().to_bits(), m.tau().to_bits());
            for (a, b) in back.entries().iter().zip(m.entries()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
