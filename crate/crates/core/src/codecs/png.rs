use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn encode_rgb(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(pixels).map_err(png_err)?;
    }
    Ok(bytes)
}

fn image_hw(img: &Tensor) -> Result<(usize, usize)> {
    match *img.shape() {
        [h, w, 3] => Ok((h, w)),
        _ => Err(shape_err(
            "render_png",
            format!("expected H×W×3, got {:?}", img.shape()),
        )),
    }
}

/// 8-bit RGB PNG with nearest-neighbor upscaling by `scale`.
pub fn render_png(img: &Tensor, scale: usize) -> Result<Vec<u8>> {
    render_png_grid(&[vec![img.clone()]], scale, 0)
}

/// Rows of equally sized images tiled into one PNG, separated by `gap`
/// black pixels (before scaling).
pub fn render_png_grid(rows: &[Vec<Tensor>], scale: usize, gap: usize) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::Config("PNG scale must be at least 1".into()));
    }
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::Config("nothing to render".into()))?;
    let (h, w) = image_hw(first)?;
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let grid_w = ncols * w + ncols.saturating_sub(1) * gap;
    let grid_h = rows.len() * h + rows.len().saturating_sub(1) * gap;
    let mut canvas = vec![0u8; grid_w * grid_h * 3];
    for (ri, row) in rows.iter().enumerate() {
        for (ci, img) in row.iter().enumerate() {
            if image_hw(img)? != (h, w) {
                return Err(shape_err("render_png", "grid images differ in size"));
            }
            let (oy, ox) = (ri * (h + gap), ci * (w + gap));
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        canvas[((oy + y) * grid_w + ox + x) * 3 + c] = to_byte(img.at(&[y, x, c]));
                    }
                }
            }
        }
    }
    let (sw, sh) = (grid_w * scale, grid_h * scale);
    let mut scaled = vec![0u8; sw * sh * 3];
    for y in 0..sh {
        for x in 0..sw {
            let src = ((y / scale) * grid_w + x / scale) * 3;
            scaled[(y * sw + x) * 3..][..3].copy_from_slice(&canvas[src..src + 3]);
        }
    }
    encode_rgb(sw, sh, &scaled)
}

/// Decode an 8-bit RGB or RGBA PNG into an H×W×3 tensor in `[0, 1]`.
pub fn read_png(bytes: &[u8]) -> Result<Tensor> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(png_err(format!("unsupported color type {other:?}"))),
    };
    let data = &buf[..info.buffer_size()];
    Tensor::new(
        &[h, w, 3],
        (0..h * w * 3)
            .map(|i| {
                let (p, c) = (i / 3, i % 3);
                let src = if channels >= 3 {
                    p * channels + c
                } else {
                    p * channels
                };
                data[src] as f64 / 255.0
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_rounding() {
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.5), 128);
        assert_eq!(to_byte(-0.2), 0);
        assert_eq!(to_byte(7.0), 255);
    }

    #[test]
    fn black_canvas_round_trips() {
        let img = Tensor::zeros(&[23, 23, 3]);
        let back = read_png(&render_png(&img, 1).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn scaling_and_grid_geometry() {
        let a = Tensor::full(&[2, 3, 3], 1.0);
        let out = read_png(&render_png(&a, 4).unwrap()).unwrap();
        assert_eq!(out.shape(), &[8, 12, 3]);
        let grid = render_png_grid(&[vec![a.clone(), a.clone()], vec![a]], 1, 1).unwrap();
        let g = read_png(&grid).unwrap();
        assert_eq!(g.shape(), &[5, 7, 3]);
        assert_eq!(g.at(&[0, 3, 0]), 0.0);
        assert_eq!(g.at(&[3, 5, 0]), 0.0);
        assert_eq!(g.at(&[4, 0, 0]), 1.0);
    }

    #[test]
    fn zero_scale_is_rejected() {
        assert!(render_png(&Tensor::zeros(&[1, 1, 3]), 0).is_err());
    }
}
