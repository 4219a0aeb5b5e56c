//! Binary grid files.
//!
//! Layout: the 7 ASCII bytes `TTGRID1`, then height, width and channels as
//! little-endian `u32`, then `height * width * channels` little-endian
//! `f32` values in row-major, channel-minor order. Values are held as `f64`
//! in memory and narrowed to `f32` on write.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAGIC: &[u8; 7] = b"TTGRID1";
pub const HEADER_LEN: usize = MAGIC.len() + 12;

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let (h, w, c) = grid.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.values().len());
    out.extend_from_slice(MAGIC);
    for d in [h, w, c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::GridFormat(format!(
            "expected at least {HEADER_LEN} header bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::GridFormat(format!(
            "bad magic {:?}, expected \"TTGRID1\"",
            String::from_utf8_lossy(&bytes[..MAGIC.len()])
        )));
    }
    let dim = |i: usize| {
        let at = MAGIC.len() + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
    };
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::GridFormat(format!("header {h}x{w}x{c} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::GridFormat(format!(
            "{h}x{w}x{c} grid needs {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Grid::from_values(h, w, c, values).map_err(|e| Error::GridFormat(e.to_string()))
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    super::write_bytes(path, &encode_grid(grid))
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    decode_grid(&super::read_bytes(path)?)
        .map_err(|e| Error::GridFormat(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let g = Grid::from_values(1, 2, 1, vec![1.0, -0.5]).unwrap();
        let b = encode_grid(&g);
        assert_eq!(&b[..7], b"TTGRID1");
        assert_eq!(&b[7..19], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[19..23], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 27);
    }

    #[test]
    fn truncated_payload_names_sizes() {
        let g = Grid::zeros(2, 3, 2);
        let b = encode_grid(&g);
        let err = decode_grid(&b[..b.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("67") && err.contains("64"), "{err}");
        assert!(decode_grid(&b[..10]).is_err());
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut b = encode_grid(&Grid::zeros(1, 1, 1));
        b.push(0);
        assert!(decode_grid(&b).is_err());
        b.pop();
        b[0] = b'X';
        assert!(decode_grid(&b).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        let g = Grid::from_values(2, 2, 1, vec![0.0, 0.25, 1.0, 3.5]).unwrap();
        write_grid(&p, &g).unwrap();
        assert_eq!(read_grid(&p).unwrap(), g);
        assert!(read_grid(&dir.path().join("missing.bin"))
            .unwrap_err()
            .is_io());
    }

    proptest! {
        #[test]
        fn f32_values_round_trip_bit_exact(
            h in 1usize..6, w in 1usize..6, c in 1usize..4,
            seed in proptest::collection::vec(-1e6f32..1e6, 150),
        ) {
            let values: Vec<f64> = seed[..h * w * c].iter().map(|&v| v as f64).collect();
            let g = Grid::from_values(h, w, c, values).unwrap();
            let bytes = encode_grid(&g);
            let back = decode_grid(&bytes).unwrap();
            prop_assert!(g.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(encode_grid(&back), bytes);
        }
    }
}
