use std::fs;
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{DotError, Result};
use crate::types::{Frame, Video, VisibilityMask};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_rgb(height: usize, width: usize, rgb: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let img: RgbImage = ImageBuffer::from_raw(width as u32, height as u32, rgb.to_vec())
        .ok_or_else(|| DotError::Shape("rgb buffer does not match its dimensions".into()))?;
    img.save(path.as_ref())?;
    Ok(())
}

pub fn write_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = frame.data.iter().map(|&v| to_u8(v)).collect();
    write_rgb(frame.height, frame.width, &bytes, path)
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let img = image::open(path.as_ref())?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().flat_map(|Rgb(p)| p.map(|c| c as f32 / 255.0)).collect();
    Frame::new(h as usize, w as usize, data)
}

/// Masks are stored as single-channel 8-bit images: 0 occluded, 255 visible.
pub fn write_mask(mask: &VisibilityMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&v| to_u8(v)).collect();
    let img: GrayImage = ImageBuffer::from_raw(mask.width as u32, mask.height as u32, bytes)
        .ok_or_else(|| DotError::Shape("mask buffer does not match its dimensions".into()))?;
    img.save(path.as_ref())?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<VisibilityMask> {
    let img = image::open(path.as_ref())?.to_luma8();
    let (w, h) = img.dimensions();
    let binary = img.pixels().all(|Luma([v])| *v == 0 || *v == 255);
    let data = img.pixels().map(|Luma([v])| *v as f32 / 255.0).collect();
    VisibilityMask::new(h as usize, w as usize, data, binary)
}

/// Load `dir/*.png` in lexicographic order as a video.
pub fn read_video_dir(dir: impl AsRef<Path>, frame_rate: f32) -> Result<Video> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| DotError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    let frames = paths.iter().map(read_frame).collect::<Result<Vec<_>>>()?;
    Video::new(frames, frame_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = VisibilityMask::new(2, 3, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0], true).unwrap();
        write_mask(&m, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
    }

    #[test]
    fn frame_png_quantizes_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        let f = Frame::new(1, 2, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1]).unwrap();
        write_frame(&f, &p).unwrap();
        let back = read_frame(&p).unwrap();
        for (a, b) in f.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
