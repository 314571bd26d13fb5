//! Netpbm PGM/PPM, ASCII and binary, 8 or 16 bits per sample.

use super::{quantize, Image, RawImage};

struct Header {
    magic: u8,
    width: usize,
    height: usize,
    maxval: u32,
    /// Offset of the first byte of pixel data.
    data_start: usize,
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize) -> Result<(u32, usize), String> {
    let start = skip_ws_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(format!("expected an unsigned integer at byte {start}"));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let v = text
        .parse::<u32>()
        .map_err(|e| format!("bad integer '{text}': {e}"))?;
    Ok((v, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header, String> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err("missing netpbm magic".into());
    }
    let magic = bytes[1];
    let (width, pos) = read_uint(bytes, 2)?;
    let (height, pos) = read_uint(bytes, pos)?;
    let (maxval, pos) = read_uint(bytes, pos)?;
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    // Binary rasters start after exactly one whitespace byte.
    if matches!(magic, b'5' | b'6') && (pos >= bytes.len() || !bytes[pos].is_ascii_whitespace()) {
        return Err("missing whitespace after header".into());
    }
    Ok(Header {
        magic,
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

pub(super) fn decode(bytes: &[u8]) -> Result<RawImage, String> {
    let h = parse_header(bytes)?;
    let spp = match h.magic {
        b'2' | b'5' => 1,
        b'3' | b'6' => 3,
        m => return Err(format!("unsupported magic P{}", m as char)),
    };
    let count = h.width * h.height * spp;
    let mut samples = Vec::with_capacity(count);

    match h.magic {
        b'5' | b'6' => {
            let wide = h.maxval > 255;
            let bps = if wide { 2 } else { 1 };
            let data = bytes
                .get(h.data_start..)
                .ok_or_else(|| "truncated raster".to_string())?;
            if data.len() < count * bps {
                return Err(format!(
                    "truncated raster: need {} bytes, have {}",
                    count * bps,
                    data.len()
                ));
            }
            for i in 0..count {
                let s = if wide {
                    u32::from(u16::from_be_bytes([data[2 * i], data[2 * i + 1]]))
                } else {
                    u32::from(data[i])
                };
                samples.push(s);
            }
        }
        _ => {
            let mut pos = h.data_start.saturating_sub(1);
            for _ in 0..count {
                let (s, next) = read_uint(bytes, pos).map_err(|e| format!("truncated raster: {e}"))?;
                samples.push(s);
                pos = next;
            }
        }
    }
    if let Some(s) = samples.iter().find(|&&s| s > h.maxval) {
        return Err(format!("sample {s} exceeds maxval {}", h.maxval));
    }

    let n = h.width * h.height;
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        for (c, plane) in planes.iter_mut().enumerate() {
            let s = if spp == 3 { samples[3 * i + c] } else { samples[i] };
            plane[i] = f64::from(s);
        }
    }
    Ok(RawImage {
        width: h.width,
        height: h.height,
        samples: planes,
        max_raw: f64::from(h.maxval),
        bit_depth: if h.maxval > 255 { 16 } else { 8 },
    })
}

pub(super) fn encode_ppm(img: &Image, depth: u8) -> Vec<u8> {
    let max: u16 = if depth == 16 { 65535 } else { 255 };
    let mut out = format!("P6\n{} {}\n{}\n", img.width(), img.height(), max).into_bytes();
    for i in 0..img.len() {
        for c in 0..3 {
            let q = quantize(img.channel(c)[i], max);
            if depth == 16 {
                out.extend_from_slice(&q.to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
    }
    out
}

pub(super) fn encode_pgm_mask(width: usize, height: usize, excluded: &[bool]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(excluded.iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_ppm_with_comments() {
        let src = b"P3\n# a comment\n2 1 # trailing\n255\n255 0 0\n0 128 255\n";
        let raw = decode(src).unwrap();
        assert_eq!((raw.width, raw.height), (2, 1));
        assert_eq!(raw.samples[0], vec![255.0, 0.0]);
        assert_eq!(raw.samples[1], vec![0.0, 128.0]);
        assert_eq!(raw.samples[2], vec![0.0, 255.0]);
        assert_eq!(raw.max_raw, 255.0);
    }

    #[test]
    fn ascii_pgm_sixteen_bit() {
        let raw = decode(b"P2 2 1 4095 4095 7").unwrap();
        assert_eq!(raw.samples[0], vec![4095.0, 7.0]);
        assert_eq!(raw.samples[2], vec![4095.0, 7.0]);
        assert_eq!(raw.bit_depth, 16);
    }

    #[test]
    fn binary_pgm_replicates_gray() {
        let mut src = b"P5\n3 1\n255\n".to_vec();
        src.extend_from_slice(&[0, 7, 255]);
        let raw = decode(&src).unwrap();
        for plane in &raw.samples {
            assert_eq!(plane, &vec![0.0, 7.0, 255.0]);
        }
    }

    #[test]
    fn rejects_truncation_and_overflow() {
        assert!(decode(b"P6\n2 2\n255\n\x01\x02").is_err());
        assert!(decode(b"P3 1 1 100 101 0 0").is_err());
        assert!(decode(b"P3 1 1 100 1 2").is_err());
        assert!(decode(b"P6 0 1 255\n").is_err());
        assert!(decode(b"P6 1 1 70000\n").is_err());
    }
}
