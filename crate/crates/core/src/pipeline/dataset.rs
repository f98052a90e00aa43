//! Multi-view image sequences and their on-disk layout.
//!
//! A dataset directory holds `rig.toml` and one directory per view,
//! `view_00/`, `view_01/`, ..., each with numbered 8-bit PNGs `0000.png`,
//! `0001.png`, .... The rig file lists the held-out view and, per camera,
//! the world-to-camera rotation (rows) and translation plus pinhole
//! intrinsics in pixels:
//!
//! ```toml
//! test_view = 0
//!
//! [[cameras]]
//! width = 64
//! height = 64
//! fx = 50.0
//! fy = 50.0
//! cx = 32.0
//! cy = 32.0
//! rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! translation = [0.0, 0.0, 4.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Camera;
use crate::render::Image;

pub const RIG_FILE: &str = "rig.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigCamera {
    pub width: usize,
    pub height: usize,
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    pub rotation: [[f32; 3]; 3],
    pub translation: [f32; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rig {
    #[serde(default)]
    pub test_view: usize,
    pub cameras: Vec<RigCamera>,
}

impl From<&Camera<f32>> for RigCamera {
    fn from(c: &Camera<f32>) -> Self {
        RigCamera { width: c.width, height: c.height, fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, rotation: c.rotation, translation: c.translation }
    }
}

impl Rig {
    /// Reads `rig.toml` from a dataset directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(RIG_FILE))?;
        toml::from_str(&text).map_err(|e| Error::Dataset(format!("{RIG_FILE}: {e}")))
    }
}

impl RigCamera {
    pub fn camera(&self) -> Result<Camera<f32>> {
        Camera::new(self.rotation, self.translation, self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

/// `frames[t][v]` is the image of camera `v` at timestep `t`.
#[derive(Clone, Debug)]
pub struct MultiViewDataset {
    cameras: Vec<Camera<f32>>,
    frames: Vec<Vec<Image<f32>>>,
    test_view: usize,
}

impl MultiViewDataset {
    pub fn new(cameras: Vec<Camera<f32>>, frames: Vec<Vec<Image<f32>>>, test_view: usize) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(Error::Dataset("need a test view and at least one training view".into()));
        }
        if test_view >= cameras.len() {
            return Err(Error::Dataset(format!("test view {test_view} of {} cameras", cameras.len())));
        }
        if frames.is_empty() {
            return Err(Error::Dataset("no frames".into()));
        }
        for (t, views) in frames.iter().enumerate() {
            if views.len() != cameras.len() {
                return Err(Error::Dataset(format!("frame {t} has {} views for {} cameras", views.len(), cameras.len())));
            }
            for (img, cam) in views.iter().zip(&cameras) {
                if (img.width, img.height) != (cam.width, cam.height) || img.data.len() != img.width * img.height * 3 {
                    return Err(Error::Dataset(format!("frame {t}: image size does not match its camera")));
                }
            }
        }
        Ok(MultiViewDataset { cameras, frames, test_view })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn test_view(&self) -> usize {
        self.test_view
    }

    pub fn cameras(&self) -> &[Camera<f32>] {
        &self.cameras
    }

    pub fn images(&self, t: usize) -> &[Image<f32>] {
        &self.frames[t]
    }

    pub fn train_cameras(&self) -> Vec<Camera<f32>> {
        self.skip_test(&self.cameras)
    }

    pub fn train_images(&self, t: usize) -> Vec<Image<f32>> {
        self.skip_test(&self.frames[t])
    }

    pub fn test_camera(&self) -> &Camera<f32> {
        &self.cameras[self.test_view]
    }

    pub fn test_image(&self, t: usize) -> &Image<f32> {
        &self.frames[t][self.test_view]
    }

    /// The first `frames` timesteps.
    pub fn truncated(&self, frames: usize) -> Result<Self> {
        Self::new(self.cameras.clone(), self.frames.iter().take(frames).cloned().collect(), self.test_view)
    }

    fn skip_test<X: Clone>(&self, xs: &[X]) -> Vec<X> {
        xs.iter().enumerate().filter(|(v, _)| *v != self.test_view).map(|(_, x)| x.clone()).collect()
    }

    pub fn rig(&self) -> Rig {
        Rig { test_view: self.test_view, cameras: self.cameras.iter().map(RigCamera::from).collect() }
    }

    /// Reads `rig.toml` and every `view_XX/NNNN.png`; frames must be
    /// numbered contiguously from zero in every view.
    pub fn load(dir: &Path) -> Result<Self> {
        let rig = Rig::load(dir)?;
        let cameras = rig.cameras.iter().map(RigCamera::camera).collect::<Result<Vec<_>>>()?;
        let counts: Vec<usize> = (0..cameras.len()).map(|v| count_frames(&dir.join(view_dir(v)))).collect::<Result<_>>()?;
        let frames = counts.iter().copied().min().unwrap_or(0);
        if counts.iter().any(|&c| c != frames) {
            return Err(Error::Dataset(format!("views have different frame counts: {counts:?}")));
        }
        let mut all = Vec::with_capacity(frames);
        for t in 0..frames {
            let views = (0..cameras.len()).map(|v| read_png(&dir.join(view_dir(v)).join(frame_file(t)))).collect::<Result<Vec<_>>>()?;
            all.push(views);
        }
        Self::new(cameras, all, rig.test_view)
    }

    /// Writes the layout read by [`MultiViewDataset::load`]; images are
    /// quantized to 8 bits.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let rig = toml::to_string(&self.rig()).map_err(|e| Error::Dataset(e.to_string()))?;
        std::fs::write(dir.join(RIG_FILE), rig)?;
        for v in 0..self.view_count() {
            let vd = dir.join(view_dir(v));
            std::fs::create_dir_all(&vd)?;
            for t in 0..self.frame_count() {
                write_png(&self.frames[t][v], &vd.join(frame_file(t)))?;
            }
        }
        Ok(())
    }
}

fn view_dir(v: usize) -> String {
    format!("view_{v:02}")
}

fn frame_file(t: usize) -> String {
    format!("{t:04}.png")
}

/// Number of contiguous `NNNN.png` files starting at zero; a gap is an error.
fn count_frames(dir: &Path) -> Result<usize> {
    let mut indices = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::Dataset(format!("{}: {e}", dir.display())))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            let t: usize = stem.parse().map_err(|_| Error::Dataset(format!("unexpected file {name} in {}", dir.display())))?;
            indices.push(t);
        }
    }
    indices.sort_unstable();
    if let Some((i, t)) = indices.iter().enumerate().find(|(i, t)| *i != **t) {
        return Err(Error::Dataset(format!("{}: frame {i} missing (next is {t})", dir.display())));
    }
    Ok(indices.len())
}

pub fn read_png(path: &Path) -> Result<Image<f32>> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image { width: w as usize, height: h as usize, data: rgb.as_raw().iter().map(|&b| f32::from(b) / 255.0).collect() })
}

pub fn write_png(img: &Image<f32>, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    image::save_buffer(path, &bytes, img.width as u32, img.height as u32, image::ExtendedColorType::Rgb8)?;
    Ok(())
}
