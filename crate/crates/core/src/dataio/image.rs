use crate::array::Array;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// `255·x` rounded half away from zero, clamped to a byte.
pub fn quantize8(x: f64) -> u8 {
    (255.0 * x).round().clamp(0.0, 255.0) as u8
}

fn is_ppm(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

fn interleave(rgb: &Array<f64>) -> Result<(u32, u32, Vec<u8>)> {
    let (h, w) = match *rgb.shape() {
        [3, h, w] | [1, 3, h, w] => (h, w),
        _ => return Err(Error::Dimension(format!("expected a 3×H×W image, got {:?}", rgb.shape()))),
    };
    let hw = h * w;
    let d = rgb.data();
    let mut bytes = Vec::with_capacity(3 * hw);
    for p in 0..hw {
        for c in 0..3 {
            bytes.push(quantize8(d[c * hw + p]));
        }
    }
    Ok((w as u32, h as u32, bytes))
}

fn planar(w: usize, h: usize, bytes: &[u8]) -> Array<f64> {
    let hw = h * w;
    Array::from_fn([3, h, w], |i| bytes[3 * (i % hw) + i / hw] as f64 / 255.0)
}

/// Write an 8-bit RGB image; `.ppm` selects binary PPM, anything else PNG.
pub fn write_png8(path: &Path, rgb: &Array<f64>) -> Result<()> {
    let (w, h, bytes) = interleave(rgb)?;
    let mut out = BufWriter::new(File::create(path)?);
    if is_ppm(path) {
        write!(out, "P6\n{w} {h}\n255\n")?;
        out.write_all(&bytes)?;
    } else {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let fmt = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
        let mut writer = enc.write_header().map_err(fmt)?;
        writer.write_image_data(&bytes).map_err(fmt)?;
        writer.finish().map_err(fmt)?;
    }
    out.flush()?;
    Ok(())
}

/// Read an 8-bit image as 3×H×W in [0, 1].
pub fn read_png8(path: &Path) -> Result<Array<f64>> {
    if is_ppm(path) {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        return parse_ppm(&buf).map_err(|m| Error::Format(format!("{}: {m}", path.display())));
    }
    let fmt = |e: png::DecodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(fmt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g; 3]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks(2).flat_map(|c| [c[0]; 3]).collect(),
        png::ColorType::Indexed => {
            return Err(Error::Format(format!("{}: palette was not expanded", path.display())))
        }
    };
    if rgb.len() != 3 * w * h {
        return Err(Error::Format(format!("{}: truncated pixel data", path.display())));
    }
    Ok(planar(w, h, &rgb))
}

fn parse_ppm(buf: &[u8]) -> std::result::Result<Array<f64>, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err("not a binary PPM (P6)".into());
    }
    let mut num = || -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse().map_err(|_| format!("bad header field {t:?}"))
    };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(format!("only 8-bit PPM is supported, maxval {maxval}"));
    }
    let data = buf.get(pos + 1..).ok_or("missing pixel data")?;
    if data.len() < 3 * w * h {
        return Err(format!("expected {} pixel bytes, found {}", 3 * w * h, data.len()));
    }
    Ok(planar(w, h, &data[..3 * w * h]))
}
