//! Binary PGM/PPM and the FR32 float interchange format.
//!
//! FR32 layout: magic `FR32`, then width, height and channels as `u32` LE,
//! then `width·height·channels` IEEE `f32` LE samples, row-major and
//! channel-interleaved.

use std::fs;
use std::path::Path;

use super::Raster;
use crate::{Error, Result, Scalar};

pub const FR32_MAGIC: &[u8; 4] = b"FR32";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PnmDepth {
    Eight,
    Sixteen,
}

impl PnmDepth {
    pub fn maxval(self) -> u32 {
        match self {
            PnmDepth::Eight => 255,
            PnmDepth::Sixteen => 65535,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(PnmDepth::Eight),
            16 => Ok(PnmDepth::Sixteen),
            b => Err(Error::Parameter(format!("PNM depth must be 8 or 16 bits, got {b}"))),
        }
    }
}

pub fn read_pnm<T: Scalar>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::format(start, format!("{what} out of range")))
    }
}

/// Parses a binary P5/P6 image and scales samples to `[0, 1]`.
pub fn decode_pnm<T: Scalar>(bytes: &[u8]) -> Result<Raster<T>> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "file too short for a PNM magic"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(Error::format(
                0,
                format!("unsupported magic {:?}", String::from_utf8_lossy(m)),
            ))
        }
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    cur.skip_space_and_comments();
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, "zero image dimension"));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::format(
            maxval_pos,
            format!("unsupported maxval {maxval} (need 255 or 65535)"),
        ));
    }
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::format(cur.pos, "missing whitespace after maxval")),
    }
    let count = width * height * channels;
    let bytes_per = if maxval == 255 { 1 } else { 2 };
    let payload = &bytes[cur.pos..];
    if payload.len() < count * bytes_per {
        return Err(Error::format(
            cur.pos + payload.len(),
            format!("truncated payload: need {} bytes, have {}", count * bytes_per, payload.len()),
        ));
    }
    let scale = 1.0 / f64::from(maxval);
    let samples: Vec<T> = if bytes_per == 1 {
        payload[..count].iter().map(|&b| T::of(f64::from(b) * scale)).collect()
    } else {
        payload[..2 * count]
            .chunks_exact(2)
            .map(|c| T::of(f64::from(u16::from_be_bytes([c[0], c[1]])) * scale))
            .collect()
    };
    Ok(Raster::from_parts(width, height, channels, samples))
}

/// Encodes to P5/P6, clamping samples to `[0, 1]` and rounding to the nearest level.
pub fn encode_pnm<T: Scalar>(raster: &Raster<T>, depth: PnmDepth) -> Result<Vec<u8>> {
    let magic = match raster.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Contract(format!("PNM needs 1 or 3 channels, got {c}"))),
    };
    let maxval = depth.maxval();
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", raster.width(), raster.height()).into_bytes();
    let level = |v: T| (v.as_f64().clamp(0.0, 1.0) * f64::from(maxval)).round() as u32;
    match depth {
        PnmDepth::Eight => out.extend(raster.samples().iter().map(|&v| level(v) as u8)),
        PnmDepth::Sixteen => {
            for &v in raster.samples() {
                out.extend_from_slice(&(level(v) as u16).to_be_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_pnm<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>, depth: PnmDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pnm(raster, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_fr32<T: Scalar>(raster: &Raster<T>) -> Vec<u8> {
    encode_fr32_parts(raster.width(), raster.height(), raster.channels(), raster.samples())
}

pub(crate) fn encode_fr32_parts<T: Scalar>(width: usize, height: usize, channels: usize, samples: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * samples.len());
    out.extend_from_slice(FR32_MAGIC);
    for dim in [width, height, channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in samples {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

/// Header fields and the sample payload of an FR32 buffer.
pub(crate) fn decode_fr32_parts<T: Scalar>(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<T>)> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len(), "FR32 header truncated"));
    }
    if &bytes[..4] != FR32_MAGIC {
        return Err(Error::format(0, "bad FR32 magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (width, height, channels) = (dim(0), dim(1), dim(2));
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::format(4, "zero FR32 dimension"));
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(4, "FR32 dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() < 4 * count {
        return Err(Error::format(16 + payload.len(), "FR32 payload truncated"));
    }
    let mut samples = Vec::with_capacity(count);
    for (i, c) in payload[..4 * count].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(16 + 4 * i, "non-finite FR32 sample"));
        }
        samples.push(T::of(f64::from(v)));
    }
    Ok((width, height, channels, samples))
}

pub fn decode_fr32<T: Scalar>(bytes: &[u8]) -> Result<Raster<T>> {
    let (w, h, c, samples) = decode_fr32_parts(bytes)?;
    Ok(Raster::from_parts(w, h, c, samples))
}

pub fn read_fr32<T: Scalar>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fr32(&bytes)
}

pub fn write_fr32<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fr32(raster)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_8bit_gray() {
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend([0, 128, 255, 64]);
        let r: Raster<f64> = decode_pnm(&bytes).unwrap();
        assert_eq!(r.channels(), 1);
        assert_eq!(r.samples(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn decodes_ppm_as_three_channels() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend([255, 0, 51]);
        let r: Raster<f32> = decode_pnm(&bytes).unwrap();
        assert_eq!(r.channels(), 3);
    }

    #[test]
    fn rejects_ascii_magic() {
        let err = decode_pnm::<f64>(b"P3\n1 1\n255\n0 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn reports_truncation_offset() {
        let mut bytes = b"P5\n3 3\n255\n".to_vec();
        bytes.extend([1, 2, 3]);
        match decode_pnm::<f64>(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, bytes.len()),
            e => panic!("{e}"),
        }
        assert!(matches!(
            decode_pnm::<f64>(b"P5\n3 3\n100\n").unwrap_err(),
            Error::Format { offset: 7, .. }
        ));
    }

    #[test]
    fn zero_raster_has_zero_payload() {
        let r = Raster::<f64>::zeros(3, 2);
        let bytes = encode_pnm(&r, PnmDepth::Eight).unwrap();
        let header = b"P5\n3 2\n255\n".len();
        assert_eq!(bytes.len(), header + 6);
        assert!(bytes[header..].iter().all(|&b| b == 0));
    }

    #[test]
    fn out_of_range_clamps_to_maxval() {
        let r = Raster::<f64>::new(1, 1, 1, vec![1.5]).unwrap();
        let bytes = encode_pnm(&r, PnmDepth::Sixteen).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xff]);
        let back: Raster<f64> = decode_pnm(&bytes).unwrap();
        assert_eq!(back.samples(), &[1.0]);
    }

    #[test]
    fn writes_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_fn(5, 4, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
        write_pnm(&r, &a, PnmDepth::Sixteen).unwrap();
        write_pnm(&r, &b, PnmDepth::Sixteen).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let back: Raster<f64> = read_pnm(&a).unwrap();
        assert_eq!(back.width(), 5);
    }

    #[test]
    fn fr32_rejects_bad_magic() {
        let mut bytes = encode_fr32(&Raster::<f64>::zeros(2, 2));
        bytes[0] = b'X';
        assert!(matches!(decode_fr32::<f64>(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    proptest! {
        #[test]
        fn pnm16_round_trip_within_half_level(
            (w, h, c, samples) in (1usize..6, 1usize..6, prop_oneof![Just(1usize), Just(3usize)])
                .prop_flat_map(|(w, h, c)| (Just(w), Just(h), Just(c), proptest::collection::vec(0.0f64..=1.0, w * h * c)))
        ) {
            let r = Raster::new(w, h, c, samples).unwrap();
            let back: Raster<f64> = decode_pnm(&encode_pnm(&r, PnmDepth::Sixteen).unwrap()).unwrap();
            for (a, b) in r.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 131070.0 + 1e-15);
            }
        }

        #[test]
        fn fr32_round_trip_is_f32_exact(samples in proptest::collection::vec(-1e3f32..1e3, 12)) {
            let r = Raster::new(2, 2, 3, samples.clone()).unwrap();
            let back: Raster<f32> = decode_fr32(&encode_fr32(&r)).unwrap();
            prop_assert_eq!(back.samples(), &samples[..]);
        }
    }
}
