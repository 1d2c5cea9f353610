//! PNG and PNM (PGM/PPM, ASCII and binary) reading and writing.
//!
//! Pixels are quantized to 8 bits only here: `v ↦ round(255·v)` on write and
//! `k ↦ k/255` on read, so `save(load(bytes))` reproduces `bytes` for files
//! this module wrote.

use std::cell::Cell;
use std::io::{BufRead, Cursor, Read, Seek, SeekFrom};
use std::path::Path;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::imagecore::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    /// Binary PGM/PPM chosen by channel count (P5/P6).
    Pnm,
    /// ASCII PGM/PPM (P2/P3).
    PnmAscii,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
            _ => Err(Error::domain(format!(
                "{}: unsupported image extension (expected .png, .ppm or .pgm)",
                path.display()
            ))),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Writes `img` in the format implied by the file extension.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = ImageFormat::from_path(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("ppm") && img.channels() != 3 {
        return Err(Error::domain("a .ppm file needs a 3-channel image"));
    }
    if ext.eq_ignore_ascii_case("pgm") && img.channels() != 1 {
        return Err(Error::domain("a .pgm file needs a 1-channel image"));
    }
    let bytes = encode_image(img, format)?;
    write_atomic(path, &bytes)
}

/// Writes through a sibling temp file so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Sniffs the magic bytes and decodes PNG or PNM.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_pnm(bytes)
    } else if bytes.len() < 2 {
        Err(Error::format(bytes.len(), "file too short to identify"))
    } else {
        Err(Error::format(0, "unrecognized image signature"))
    }
}

pub fn encode_image(img: &ImageBuffer, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Png => encode_png(img),
        ImageFormat::Pnm => Ok(encode_pnm(img, false)),
        ImageFormat::PnmAscii => Ok(encode_pnm(img, true)),
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dequantize(k: u8) -> f64 {
    k as f64 / 255.0
}

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let samples: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let color = if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    write_png(
        img.width(),
        img.height(),
        color,
        png::BitDepth::Eight,
        &samples,
    )
}

/// 16-bit PNG (gray or RGB by `channels`), samples big-endian as PNG requires.
pub fn encode_png16(width: usize, height: usize, channels: usize, samples: &[u16]) -> Result<Vec<u8>> {
    if samples.len() != width * height * channels {
        return Err(Error::domain("sample count does not match dimensions"));
    }
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(Error::domain("only 1 or 3 channels are supported")),
    };
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    write_png(width, height, color, png::BitDepth::Sixteen, &bytes)
}

fn write_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::format(0, format!("png encode: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::format(0, format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Cursor wrapper remembering the furthest byte the decoder has touched.
struct Tracked<'a> {
    inner: Cursor<&'a [u8]>,
    furthest: Rc<Cell<u64>>,
}

impl Tracked<'_> {
    fn mark(&self) {
        let pos = self.inner.position();
        if pos > self.furthest.get() {
            self.furthest.set(pos);
        }
    }
}

impl Read for Tracked<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.mark();
        Ok(n)
    }
}

impl BufRead for Tracked<'_> {
    fn fill_buf(&mut self) -> std::io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.mark();
    }
}

impl Seek for Tracked<'_> {
    fn seek(&mut self, pos: SeekFrom) -> std::io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.mark();
        Ok(p)
    }
}

struct DecodedPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn read_png(bytes: &[u8]) -> Result<DecodedPng> {
    let furthest = Rc::new(Cell::new(0u64));
    let src = Tracked {
        inner: Cursor::new(bytes),
        furthest: furthest.clone(),
    };
    let fail = |e: png::DecodingError| Error::format(furthest.get() as usize, format!("png: {e}"));

    let mut decoder = png::Decoder::new(src);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(fail)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(0, "png: image too large"))?;
    let mut data = vec![0u8; size];
    let info = reader.next_frame(&mut data).map_err(fail)?;
    data.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let png = read_png(bytes)?;
    if png.depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!(
            "{:?}-bit png samples (8-bit expected)",
            png.depth
        )));
    }
    let channels = match png.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::format(
                0,
                format!("png color type {other:?} is not supported (gray or rgb without alpha)"),
            ))
        }
    };
    let data = png.data.iter().map(|&k| dequantize(k)).collect();
    ImageBuffer::new(png.width, png.height, channels, data)
}

/// Decodes a 16-bit gray or RGB PNG into `(width, height, channels, samples)`.
pub fn decode_png16(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u16>)> {
    let png = read_png(bytes)?;
    let channels = match png.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::format(0, format!("png color type {other:?} is not supported")))
        }
    };
    if png.depth != png::BitDepth::Sixteen {
        return Err(Error::UnsupportedBitDepth(format!(
            "expected 16-bit samples, got {:?}",
            png.depth
        )));
    }
    let samples = png
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok((png.width, png.height, channels, samples))
}

pub fn encode_pnm(img: &ImageBuffer, ascii: bool) -> Vec<u8> {
    let magic = match (img.channels(), ascii) {
        (1, true) => "P2",
        (1, false) => "P5",
        (_, true) => "P3",
        (_, false) => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    if ascii {
        let row_len = img.width() * img.channels();
        for row in img.data().chunks(row_len) {
            let line: Vec<String> = row.iter().map(|&v| quantize(v).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        out.extend(img.data().iter().map(|&v| quantize(v)));
    }
    out
}

/// Raw class-id map as binary PGM (one byte per pixel).
pub fn encode_pgm_u8(width: usize, height: usize, values: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

struct PnmHeader {
    channels: usize,
    ascii: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                Error::format(self.pos, format!("truncated file: missing {what}"))
            } else {
                Error::format(self.pos, format!("expected a number for {what}"))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    if bytes.len() < 2 {
        return Err(Error::format(bytes.len(), "truncated file: missing magic number"));
    }
    let (channels, ascii) = match &bytes[..2] {
        b"P2" => (1, true),
        b"P3" => (3, true),
        b"P5" => (1, false),
        b"P6" => (3, false),
        _ => {
            return Err(Error::format(
                0,
                "unsupported PNM magic (P2, P3, P5 and P6 are supported)",
            ))
        }
    };
    let mut t = Tokens { bytes, pos: 2 };
    let width = t.next_uint("width")? as usize;
    let height = t.next_uint("height")? as usize;
    let maxval_at = t.pos;
    let maxval = t.next_uint("maxval")?;
    if maxval == 0 {
        return Err(Error::format(maxval_at, "maxval must be positive"));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(format!(
            "PNM maxval {maxval} (at most 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(2, "image dimensions must be positive"));
    }
    // Exactly one whitespace byte separates the header from binary data.
    if t.pos >= bytes.len() {
        return Err(Error::format(t.pos, "truncated file: header ends without data"));
    }
    if !bytes[t.pos].is_ascii_whitespace() {
        return Err(Error::format(t.pos, "expected whitespace after maxval"));
    }
    Ok(PnmHeader {
        channels,
        ascii,
        width,
        height,
        maxval,
        data_start: t.pos + 1,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let h = parse_pnm_header(bytes)?;
    let count = h.width * h.height * h.channels;
    let maxval = h.maxval as f64;
    let mut data = Vec::with_capacity(count);
    if h.ascii {
        let mut t = Tokens {
            bytes,
            pos: h.data_start,
        };
        for _ in 0..count {
            let at = t.pos;
            let v = t.next_uint("sample")?;
            if v > h.maxval {
                return Err(Error::format(at, format!("sample {v} exceeds maxval {}", h.maxval)));
            }
            data.push(v as f64 / maxval);
        }
    } else {
        let end = h.data_start + count;
        if bytes.len() < end {
            return Err(Error::format(
                bytes.len(),
                format!("truncated file: expected {count} sample bytes"),
            ));
        }
        for (i, &b) in bytes[h.data_start..end].iter().enumerate() {
            if b as u32 > h.maxval {
                return Err(Error::format(h.data_start + i, "sample exceeds maxval"));
            }
            data.push(if h.maxval == 255 {
                dequantize(b)
            } else {
                b as f64 / maxval
            });
        }
    }
    ImageBuffer::new(h.width, h.height, h.channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_ppm_literal() {
        let src = b"P3\n# two by two\n2 2\n255\n255 0 0  0 255 0\n0 0 255  255 255 255\n";
        let img = decode_image(src).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 3));
        assert_eq!(img.pixel(0), &[1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(1), &[0.0, 1.0, 0.0]);
        assert_eq!(img.pixel(2), &[0.0, 0.0, 1.0]);
        assert_eq!(img.pixel(3), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn truncated_header_reports_offset() {
        match decode_image(b"P6\n4 ") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(decode_image(b"P"), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_binary_body() {
        let mut bytes = b"P5\n3 3\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        match decode_image(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn sixteen_bit_pnm_rejected() {
        assert!(matches!(
            decode_image(b"P5\n1 1\n65535\n\x00\x01"),
            Err(Error::UnsupportedBitDepth(_))
        ));
    }

    #[test]
    fn png_round_trip_and_truncation() {
        let img = ImageBuffer::from_fn(5, 4, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0)
            .unwrap();
        let bytes = encode_png(&img).unwrap();
        let back = decode_image(&bytes).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert_eq!(encode_png(&back).unwrap(), bytes);

        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(decode_image(cut), Err(Error::Format { .. })));
    }

    #[test]
    fn sixteen_bit_png_rejected_by_8bit_loader() {
        let bytes = encode_png16(2, 1, 1, &[0, 65535]).unwrap();
        assert!(matches!(
            decode_image(&bytes),
            Err(Error::UnsupportedBitDepth(_))
        ));
        assert_eq!(decode_png16(&bytes).unwrap(), (2, 1, 1, vec![0, 65535]));
        let rgb = encode_png16(1, 1, 3, &[1, 2, 65534]).unwrap();
        assert_eq!(decode_png16(&rgb).unwrap().3, vec![1, 2, 65534]);
    }

    #[test]
    fn ascii_and_binary_pnm_agree() {
        let img = ImageBuffer::from_fn(3, 2, 1, |x, y, _| (x + 3 * y) as f64 / 5.0).unwrap();
        let a = decode_image(&encode_pnm(&img, true)).unwrap();
        let b = decode_image(&encode_pnm(&img, false)).unwrap();
        assert_eq!(a, b);
    }
}
