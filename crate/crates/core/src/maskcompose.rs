//! Occlusion-aware composition of robot-hand pixels over inpainted
//! backgrounds, gated by the intersection of the exoskeleton and robot
//! masks. Segmentation and inpainting happen upstream; this module only
//! performs deterministic pixel replacement: no blending, no feathering.
//!
//! Masks are 8-bit single-channel with a fixed binarization threshold of
//! 128; soft upstream masks must pass through that same threshold. Where
//! the robot mask covers pixels outside the exoskeleton mask, the
//! intersection rule leaves background there; fingertip extensions on the
//! donor hardware exist precisely to keep the robot silhouette inside the
//! exoskeleton's.
//!
//! Every frame's composition is independent and pure; batches run
//! frame-parallel.

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("{what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: &'static str,
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("I/O failed at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("no mask file for frame at {0} (.png or .pgm)")]
    MissingMask(PathBuf),
}

/// 8-bit single-channel mask; a pixel is set when its value reaches the
/// binarization threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    inner: GrayImage,
}

impl MaskImage {
    pub const THRESHOLD: u8 = 128;

    pub fn from_gray(inner: GrayImage) -> Self {
        Self { inner }
    }

    pub fn filled(width: u32, height: u32, set: bool) -> Self {
        let value = if set { 255 } else { 0 };
        Self {
            inner: GrayImage::from_pixel(width, height, image::Luma([value])),
        }
    }

    pub fn width(&self) -> u32 {
        self.inner.width()
    }

    pub fn height(&self) -> u32 {
        self.inner.height()
    }

    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.inner.get_pixel(x, y).0[0] >= Self::THRESHOLD
    }

    pub fn as_gray(&self) -> &GrayImage {
        &self.inner
    }
}

fn check_dims(
    what: &'static str,
    want: (u32, u32),
    got: (u32, u32),
) -> Result<(), ComposeError> {
    if want != got {
        return Err(ComposeError::DimensionMismatch {
            what,
            want_w: want.0,
            want_h: want.1,
            got_w: got.0,
            got_h: got.1,
        });
    }
    Ok(())
}

/// Per-pixel AND of the binarized masks; output pixels are 0 or 255.
pub fn visible_mask(exo: &MaskImage, robot: &MaskImage) -> Result<MaskImage, ComposeError> {
    check_dims(
        "robot_mask",
        (exo.width(), exo.height()),
        (robot.width(), robot.height()),
    )?;
    let inner = GrayImage::from_fn(exo.width(), exo.height(), |x, y| {
        image::Luma([if exo.is_set(x, y) && robot.is_set(x, y) {
            255
        } else {
            0
        }])
    });
    Ok(MaskImage { inner })
}

/// The four aligned inputs of one frame's composition.
#[derive(Debug, Clone, Copy)]
pub struct ComposeInputs<'a> {
    /// Inpainted background.
    pub background: &'a RgbImage,
    /// Rendered or replayed robot-hand frame.
    pub robot: &'a RgbImage,
    pub exo_mask: &'a MaskImage,
    pub robot_mask: &'a MaskImage,
}

/// Pixel replacement: robot pixels where the visible mask is set, the
/// background everywhere else, bit for bit.
pub fn compose(inputs: &ComposeInputs) -> Result<RgbImage, ComposeError> {
    let want = (inputs.background.width(), inputs.background.height());
    check_dims(
        "robot_img",
        want,
        (inputs.robot.width(), inputs.robot.height()),
    )?;
    check_dims(
        "exo_mask",
        want,
        (inputs.exo_mask.width(), inputs.exo_mask.height()),
    )?;
    check_dims(
        "robot_mask",
        want,
        (inputs.robot_mask.width(), inputs.robot_mask.height()),
    )?;
    let out = RgbImage::from_fn(want.0, want.1, |x, y| {
        if inputs.exo_mask.is_set(x, y) && inputs.robot_mask.is_set(x, y) {
            *inputs.robot.get_pixel(x, y)
        } else {
            *inputs.background.get_pixel(x, y)
        }
    });
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ComposeError + '_ {
    move |source| ComposeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_color(path: &Path) -> Result<RgbImage, ComposeError> {
    Ok(image::open(path)
        .map_err(|source| ComposeError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8())
}

pub fn load_mask(path: &Path) -> Result<MaskImage, ComposeError> {
    Ok(MaskImage::from_gray(
        image::open(path)
            .map_err(|source| ComposeError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8(),
    ))
}

/// Frame-indexed file name inside a channel directory.
pub fn frame_file(dir: &Path, frame: u32, extension: &str) -> PathBuf {
    dir.join(format!("{frame:06}.{extension}"))
}

/// Masks may be PNG or PGM; color frames are PNG.
fn find_mask_file(dir: &Path, frame: u32) -> Result<PathBuf, ComposeError> {
    for ext in ["png", "pgm"] {
        let candidate = frame_file(dir, frame, ext);
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(ComposeError::MissingMask(frame_file(dir, frame, "png")))
}

/// Channel directories of an episode: `{bg,robot,exo_mask,robot_mask}`
/// hold one `%06d` file per frame, and `out` receives the composites.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeDirs<'a> {
    pub background: &'a Path,
    pub robot: &'a Path,
    pub exo_mask: &'a Path,
    pub robot_mask: &'a Path,
    pub out: &'a Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIssue {
    pub frame: u32,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposeReport {
    pub composed: Vec<u32>,
    pub issues: Vec<FrameIssue>,
}

/// Frames present in a background directory, from `%06d.png` file names,
/// ascending.
pub fn discover_frames(background_dir: &Path) -> Result<Vec<u32>, ComposeError> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(background_dir).map_err(io_err(background_dir))? {
        let entry = entry.map_err(io_err(background_dir))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.len() == 6 {
                if let Ok(frame) = stem.parse::<u32>() {
                    frames.push(frame);
                }
            }
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

fn compose_one(dirs: &EpisodeDirs, frame: u32) -> Result<(), ComposeError> {
    let background = load_color(&frame_file(dirs.background, frame, "png"))?;
    let robot = load_color(&frame_file(dirs.robot, frame, "png"))?;
    let exo_mask = load_mask(&find_mask_file(dirs.exo_mask, frame)?)?;
    let robot_mask = load_mask(&find_mask_file(dirs.robot_mask, frame)?)?;
    let out = compose(&ComposeInputs {
        background: &background,
        robot: &robot,
        exo_mask: &exo_mask,
        robot_mask: &robot_mask,
    })?;
    let out_path = frame_file(dirs.out, frame, "png");
    out.save(&out_path).map_err(|source| ComposeError::Image {
        path: out_path,
        source,
    })?;
    Ok(())
}

/// Compose every listed frame, in parallel. Per-frame failures (missing
/// files, dimension mismatches) are collected in the report; they do not
/// abort the batch.
pub fn compose_episode(
    dirs: &EpisodeDirs,
    frames: &[u32],
) -> Result<ComposeReport, ComposeError> {
    std::fs::create_dir_all(dirs.out).map_err(io_err(dirs.out))?;
    let results: Vec<(u32, Result<(), ComposeError>)> = frames
        .par_iter()
        .map(|&frame| (frame, compose_one(dirs, frame)))
        .collect();
    let mut report = ComposeReport::default();
    for (frame, result) in results {
        match result {
            Ok(()) => report.composed.push(frame),
            Err(e) => report.issues.push(FrameIssue {
                frame,
                message: e.to_string(),
            }),
        }
    }
    Ok(report)
}
