use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Reads an 8- or 16-bit RGB PNG as a `[1, 3, H, W]` tensor in `[0, 1]`.
pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::data(path, format!("png decode: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::data(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::data(path, format!("png decode: {e}")))?;
    if info.color_type != png::ColorType::Rgb {
        return Err(Error::data(
            path,
            format!("expected an RGB image, found {:?}", info.color_type),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let plane = w * h;
    let mut t = Tensor::zeros(Shape::new(1, 3, h, w));
    let out = t.data_mut();
    match info.bit_depth {
        png::BitDepth::Eight => {
            for y in 0..h {
                let row = &buf[y * info.line_size..];
                for x in 0..w {
                    for c in 0..3 {
                        out[c * plane + y * w + x] = row[3 * x + c] as f32 / 255.0;
                    }
                }
            }
        }
        png::BitDepth::Sixteen => {
            for y in 0..h {
                let row = &buf[y * info.line_size..];
                for x in 0..w {
                    for c in 0..3 {
                        let i = 2 * (3 * x + c);
                        let v = u16::from_be_bytes([row[i], row[i + 1]]);
                        out[c * plane + y * w + x] = v as f32 / 65535.0;
                    }
                }
            }
        }
        other => {
            return Err(Error::data(path, format!("unsupported bit depth {other:?}")));
        }
    }
    Ok(t)
}

/// Quantizes each value to `round(clamp(v, 0, 1) · 255)`.
pub fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Snaps every value onto the 8-bit grid, the values a saved PNG would hold.
pub fn quantize(t: &Tensor) -> Tensor {
    t.map(|v| quantize_u8(v) as f32 / 255.0)
}

/// Writes image 0 of a 3-channel tensor as an 8-bit RGB PNG.
pub fn save_png(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = t.shape();
    if s.c() != 3 {
        return Err(Error::invalid(
            "save_png",
            format!("expected 3 channels, got shape {s}"),
        ));
    }
    let (h, w) = (s.h(), s.w());
    let plane = h * w;
    let mut bytes = vec![0u8; plane * 3];
    let src = t.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes[(y * w + x) * 3 + c] = quantize_u8(src[c * plane + y * w + x]);
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::data(path, format!("png encode: {e}"));
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(&bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)?;
    Ok(())
}
