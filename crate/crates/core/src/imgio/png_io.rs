use std::io::Cursor;

use super::{quantize, Image, RawImage};

pub(super) const SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

pub(super) fn decode(bytes: &[u8]) -> Result<RawImage, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "image too large".to_string())?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;

    let spp = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err("palette image was not expanded".into()),
    };
    let (wide, max_raw, depth) = match info.bit_depth {
        png::BitDepth::Sixteen => (true, 65535.0, 16),
        png::BitDepth::Eight => (false, 255.0, 8),
        other => return Err(format!("unexpected bit depth {other:?} after expansion")),
    };

    let (w, h) = (info.width as usize, info.height as usize);
    let n = w * h;
    let bps = if wide { 2 } else { 1 };
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            let i = y * w + x;
            for (c, plane) in planes.iter_mut().enumerate() {
                // Gray and gray-alpha replicate the luminance sample; alpha is dropped.
                let s = if spp >= 3 { c } else { 0 };
                let off = (x * spp + s) * bps;
                plane[i] = if wide {
                    f64::from(u16::from_be_bytes([row[off], row[off + 1]]))
                } else {
                    f64::from(row[off])
                };
            }
        }
    }
    Ok(RawImage {
        width: w,
        height: h,
        samples: planes,
        max_raw,
        bit_depth: depth,
    })
}

pub(super) fn encode_rgb(img: &Image, depth: u8) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        let max = if depth == 16 {
            enc.set_depth(png::BitDepth::Sixteen);
            65535
        } else {
            enc.set_depth(png::BitDepth::Eight);
            255
        };
        let mut data = Vec::with_capacity(img.len() * 3 * usize::from(depth / 8));
        for i in 0..img.len() {
            for c in 0..3 {
                let q = quantize(img.channel(c)[i], max);
                if depth == 16 {
                    data.extend_from_slice(&q.to_be_bytes());
                } else {
                    data.push(q as u8);
                }
            }
        }
        let mut writer = enc.write_header().map_err(|e| e.to_string())?;
        writer.write_image_data(&data).map_err(|e| e.to_string())?;
        writer.finish().map_err(|e| e.to_string())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_round_trip() {
        let img = Image::from_fn(3, 2, |x, y| [x as f64 / 2.0, y as f64, 0.123456]);
        let bytes = encode_rgb(&img, 16).unwrap();
        let raw = decode(&bytes).unwrap();
        assert_eq!(raw.max_raw, 65535.0);
        for c in 0..3 {
            for (r, v) in raw.samples[c].iter().zip(img.channel(c)) {
                assert!((r / 65535.0 - v).abs() <= 0.5 / 65535.0);
            }
        }
    }

    #[test]
    fn grayscale_png_replicates() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 200]).unwrap();
        }
        let raw = decode(&out).unwrap();
        assert_eq!(raw.samples[1], vec![0.0, 200.0]);
        assert_eq!(raw.samples[2], vec![0.0, 200.0]);
    }
}
