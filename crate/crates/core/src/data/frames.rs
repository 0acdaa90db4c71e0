//! Per-event frame directories: `frame_00000.png`, `frame_00001.png`, ...
//! Files are 8-bit RGB PNG and sort lexicographically in temporal order.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};

use super::{DataError, FrameSequence};
use crate::encoders::sample_indices;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

pub fn write_frames(dir: &Path, seq: &FrameSequence) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    for i in 0..seq.len() {
        let img = RgbImage::from_raw(seq.width() as u32, seq.height() as u32, seq.frame(i).to_vec())
            .expect("frame buffer matches geometry");
        let path = dir.join(frame_file_name(i));
        img.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| DataError::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DataError::InvalidFrames(format!("no frames in {}", dir.display())));
    }
    Ok(files)
}

fn decode(files: &[PathBuf], picks: &[usize], fps: f64) -> Result<FrameSequence, DataError> {
    let mut data = Vec::new();
    let mut geometry = None;
    for &i in picks {
        let path = &files[i];
        let img = image::open(path)
            .map_err(|e| DataError::Image {
                path: path.clone(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let dims = (img.height() as usize, img.width() as usize);
        if *geometry.get_or_insert(dims) != dims {
            return Err(DataError::InvalidFrames(format!(
                "{} has size {dims:?}, earlier frames differ",
                path.display()
            )));
        }
        data.extend_from_slice(img.as_raw());
    }
    let (h, w) = geometry.unwrap_or((0, 0));
    FrameSequence::new(data, picks.len(), h, w, fps)
}

/// Read every frame in `dir`.
pub fn read_frames(dir: &Path, fps: f64) -> Result<FrameSequence, DataError> {
    let files = list_frames(dir)?;
    let picks: Vec<usize> = (0..files.len()).collect();
    decode(&files, &picks, fps)
}

/// Read only the frames the video encoder would sample; equivalent to
/// `read_frames` followed by frame sampling, without decoding the rest.
pub fn read_frames_sampled(dir: &Path, fps: f64, count: usize) -> Result<FrameSequence, DataError> {
    let files = list_frames(dir)?;
    decode(&files, &sample_indices(files.len(), count), fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..3 * 5 * 4 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let seq = FrameSequence::new(data, 3, 5, 4, 15.0).unwrap();
        write_frames(dir.path(), &seq).unwrap();
        assert!(dir.path().join("frame_00002.png").exists());
        assert_eq!(read_frames(dir.path(), 15.0).unwrap(), seq);
        let sampled = read_frames_sampled(dir.path(), 15.0, 2).unwrap();
        assert_eq!(sampled, seq.select(&sample_indices(3, 2)));
    }
}
