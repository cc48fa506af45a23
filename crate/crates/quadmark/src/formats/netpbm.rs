//! PGM (P5 binary, P2 ASCII) and PPM (P6 binary) readers plus canonical P5 /
//! P6 writers. Maxval is capped at 255; `#` comments are allowed anywhere in
//! the header; reads are lossless and round-trip exactly with the writers.

use super::FormatError;
use crate::imgproc::{GrayImage, RgbImage};

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Scanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Scanner {
            bytes,
            pos: 0,
            line: 1,
        }
    }

    /// 1-based byte position of the cursor.
    fn byte_pos(&self) -> usize {
        self.pos + 1
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skip whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(b) = self.bump() {
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn read_uint(&mut self, context: &'static str, what: &str) -> Result<u64, FormatError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                value = value.saturating_mul(10).saturating_add(u64::from(b - b'0'));
                self.bump();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(FormatError::MalformedHeader {
                context,
                position: format!("byte {}", self.byte_pos()),
                message: format!("expected {what}"),
            });
        }
        Ok(value)
    }
}

fn read_header<'a>(
    bytes: &'a [u8],
    magic: &'static str,
    context: &'static str,
) -> Result<(Scanner<'a>, usize, usize, u64), FormatError> {
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(FormatError::BadMagic {
            byte: 1,
            expected: magic,
        });
    }
    let mut sc = Scanner::new(bytes);
    sc.bump();
    sc.bump();
    match sc.peek() {
        Some(b) if b.is_ascii_whitespace() || b == b'#' => {}
        _ => {
            return Err(FormatError::BadMagic {
                byte: 3,
                expected: magic,
            })
        }
    }
    let width = sc.read_uint(context, "width")?;
    let height = sc.read_uint(context, "height")?;
    if width == 0 || height == 0 || width > 1 << 20 || height > 1 << 20 {
        return Err(FormatError::MalformedHeader {
            context,
            position: format!("byte {}", sc.byte_pos()),
            message: format!("unreasonable dimensions {width}x{height}"),
        });
    }
    let maxval_at = sc.byte_pos();
    let maxval = sc.read_uint(context, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(FormatError::UnsupportedMaxval {
            byte: maxval_at,
            value: maxval,
        });
    }
    Ok((sc, width as usize, height as usize, maxval))
}

/// After the maxval exactly one whitespace byte separates header and raster.
fn expect_single_separator(sc: &mut Scanner, context: &'static str) -> Result<(), FormatError> {
    match sc.bump() {
        Some(b) if b.is_ascii_whitespace() => Ok(()),
        _ => Err(FormatError::MalformedHeader {
            context,
            position: format!("byte {}", sc.byte_pos()),
            message: "expected single whitespace before raster".into(),
        }),
    }
}

fn read_binary_raster(
    sc: &mut Scanner,
    expected: usize,
    maxval: u64,
) -> Result<Vec<u8>, FormatError> {
    let available = sc.bytes.len() - sc.pos;
    if available < expected {
        return Err(FormatError::TruncatedData {
            expected,
            got: available,
        });
    }
    let data = sc.bytes[sc.pos..sc.pos + expected].to_vec();
    sc.pos += expected;
    if sc.pos != sc.bytes.len() {
        return Err(FormatError::TrailingData { byte: sc.pos + 1 });
    }
    if maxval < 255 {
        if let Some(&v) = data.iter().find(|&&v| u64::from(v) > maxval) {
            return Err(FormatError::ValueOutOfRange {
                line: 0,
                value: v as u64,
                maxval,
            });
        }
    }
    Ok(data)
}

/// Read a PGM image, either binary `P5` or ASCII `P2`.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, FormatError> {
    const CTX: &str = "pgm header";
    if bytes.len() >= 2 && &bytes[..2] == b"P2" {
        let (mut sc, w, h, maxval) = read_header(bytes, "P2", CTX)?;
        let mut data = Vec::with_capacity(w * h);
        for _ in 0..w * h {
            sc.skip_separators();
            if sc.peek().is_none() {
                return Err(FormatError::TruncatedData {
                    expected: w * h,
                    got: data.len(),
                });
            }
            let line = sc.line;
            let v = sc.read_uint(CTX, "pixel value")?;
            if v > maxval {
                return Err(FormatError::ValueOutOfRange {
                    line,
                    value: v,
                    maxval,
                });
            }
            data.push(v as u8);
        }
        sc.skip_separators();
        if sc.peek().is_some() {
            return Err(FormatError::TrailingData {
                byte: sc.byte_pos(),
            });
        }
        return Ok(GrayImage::from_raw(w, h, data).expect("dimensions validated"));
    }
    let (mut sc, w, h, maxval) = read_header(bytes, "P5", CTX)?;
    expect_single_separator(&mut sc, CTX)?;
    let data = read_binary_raster(&mut sc, w * h, maxval)?;
    Ok(GrayImage::from_raw(w, h, data).expect("dimensions validated"))
}

/// Canonical P5 encoding: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// Read a binary `P6` PPM image.
pub fn read_ppm(bytes: &[u8]) -> Result<RgbImage, FormatError> {
    const CTX: &str = "ppm header";
    let (mut sc, w, h, maxval) = read_header(bytes, "P6", CTX)?;
    expect_single_separator(&mut sc, CTX)?;
    let data = read_binary_raster(&mut sc, 3 * w * h, maxval)?;
    Ok(RgbImage::from_raw(w, h, data).expect("dimensions validated"))
}

/// Canonical P6 encoding: `P6\n<w> <h>\n255\n` followed by the raster.
pub fn write_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}
