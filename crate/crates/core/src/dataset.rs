//! Batch generation of depth scans over sampled viewpoints.
//!
//! Output layout:
//!
//! ```text
//! out/
//!   manifest.json
//!   frames/000000_depth.png   16-bit millimeters, 0 = invalid
//!   frames/000000_ir.png      ideal IR capture (optional)
//! ```
//!
//! The manifest is rewritten after every finished frame, so an interrupted
//! run resumes by skipping frames it already lists.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{Quaternion, Translation3, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositor::{blend_real_background, load_real_background};
use crate::config::{scene_at_frame, sensor_hash, target_centroid, Config};
use crate::depth::{write_intensity_png, DepthMap};
use crate::pipeline::{Frame, Pipeline};
use crate::scene::{AcceleratedScene, Scene};
use crate::viewpoints::sample_viewpoints;
use crate::{Error, Pose, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_DIR: &str = "frames";

/// Camera-to-world pose as stored on disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// `[w, x, y, z]`
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRecord {
            quaternion: [q.w, q.i, q.j, q.k],
            translation: p.translation.vector.into(),
        }
    }
}

impl PoseRecord {
    /// Rebuilds the pose without renormalizing, so a stored pose reproduces
    /// the original bit for bit.
    pub fn pose(&self) -> Pose {
        let [w, i, j, k] = self.quaternion;
        Pose::from_parts(
            Translation3::from(self.translation),
            UnitQuaternion::new_unchecked(Quaternion::new(w, i, j, k)),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub seed: u64,
    pub pose: PoseRecord,
    /// Paths relative to the output directory.
    pub depth: String,
    pub ir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub sensor_hash: String,
    /// Reference plane distance after snapping to the disparity lattice.
    pub reference_distance_m: f64,
    pub frame_count: usize,
    pub frames: Vec<FrameRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            location: format!("line {}", e.line()),
            message: e.to_string(),
        })
    }

    /// Writes through a temporary file so readers never see a torn manifest.
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSummary {
    pub out_dir: PathBuf,
    pub frames_written: usize,
    pub frames_skipped: usize,
    pub elapsed_s: f64,
    /// Frames written per wall-clock second.
    pub frames_per_second: f64,
}

/// Everything needed to render frames of one configured run.
pub struct Job {
    pub config: Config,
    pub pipeline: Pipeline,
    pub scene: Scene,
    pub poses: Vec<Pose>,
    pub background: Option<DepthMap>,
}

impl Job {
    /// Loads assets, builds the sensor, scene and viewpoints.
    pub fn prepare(config: Config, base_dir: &Path) -> Result<Job> {
        let sensor = config.build_sensor(base_dir)?;
        let scene = config.build_scene(base_dir)?;
        let range = (sensor.depth_range_m[0], sensor.depth_range_m[1]);
        let poses = sample_viewpoints(&config.viewpoints, target_centroid(&scene), range, config.seed)?;
        let background = match config.real_scan_path(base_dir) {
            Some(p) => {
                let bg = load_real_background(&p)?;
                if bg.dims() != (sensor.camera.width, sensor.camera.height) {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: background is {}x{}, camera is {}x{}",
                        p.display(),
                        bg.width(),
                        bg.height(),
                        sensor.camera.width,
                        sensor.camera.height
                    )));
                }
                Some(bg)
            }
            None => None,
        };
        let pipeline = config.build_pipeline(sensor)?;
        Ok(Job {
            config,
            pipeline,
            scene,
            poses,
            background,
        })
    }

    pub fn frame_seed(&self, index: usize) -> u64 {
        self.config.seed.wrapping_add(index as u64)
    }

    fn moved_scene(&self, index: usize) -> Option<AcceleratedScene> {
        let m = self.config.background.motion_per_frame_m;
        (m != [0.0; 3] && index > 0).then(|| AcceleratedScene::build(&scene_at_frame(&self.scene, m, index)))
    }

    /// Renders frame `index` from `pose`. Real-scan backgrounds are merged
    /// into the post-processed depth.
    pub fn render(&self, shared: &AcceleratedScene, index: usize, pose: &Pose, seed: u64) -> Result<Frame> {
        let moved = self.moved_scene(index);
        let accel = moved.as_ref().unwrap_or(shared);
        let mut frame = self.pipeline.run(accel, pose, &self.config.motion, seed)?;
        if let Some(bg) = &self.background {
            frame.depth = blend_real_background(&frame.depth, bg)?;
        }
        Ok(frame)
    }
}

pub fn depth_file_name(index: usize) -> String {
    format!("{FRAMES_DIR}/{index:06}_depth.png")
}

pub fn ir_file_name(index: usize) -> String {
    format!("{FRAMES_DIR}/{index:06}_ir.png")
}

/// Runs every viewpoint of the config at `config_path` into `out_dir`.
/// `jobs` overrides the config's worker count when given.
pub fn generate_dataset(config_path: &Path, out_dir: &Path, jobs: Option<usize>) -> Result<DatasetSummary> {
    let config = Config::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    generate_dataset_from(config, base, out_dir, jobs)
}

pub fn generate_dataset_from(
    config: Config,
    base_dir: &Path,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<DatasetSummary> {
    let config_hash = config.hash()?;
    let jobs = jobs.unwrap_or(config.jobs);
    let job = Job::prepare(config, base_dir)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let frames_dir = out_dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let manifest = if manifest_path.exists() {
        let m = Manifest::read(&manifest_path)?;
        if m.config_hash != config_hash {
            return Err(Error::Config(format!(
                "{} was written by a different config (hash {}); use a fresh output directory",
                manifest_path.display(),
                m.config_hash
            )));
        }
        m
    } else {
        Manifest {
            config_hash,
            sensor_hash: sensor_hash(job.pipeline.sensor()),
            reference_distance_m: job.pipeline.sensor().reference_distance(),
            frame_count: job.poses.len(),
            frames: Vec::new(),
        }
    };
    // a frame counts as done only if its files are still there
    let done: Vec<FrameRecord> = manifest
        .frames
        .iter()
        .filter(|f| {
            out_dir.join(&f.depth).exists() && f.ir.as_ref().is_none_or(|p| out_dir.join(p).exists())
        })
        .cloned()
        .collect();
    let pending: Vec<usize> = (0..job.poses.len())
        .filter(|i| !done.iter().any(|f| f.index == *i))
        .collect();
    let skipped = done.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} of {} frames already present", job.poses.len());
    }
    let manifest = Mutex::new(Manifest { frames: done, ..manifest });

    let shared = AcceleratedScene::build(&job.scene);
    let start = Instant::now();
    let work = || -> Result<()> {
        pending.par_iter().try_for_each(|&index| {
            let pose = job.poses[index];
            let seed = job.frame_seed(index);
            let frame = job.render(&shared, index, &pose, seed)?;
            let depth = depth_file_name(index);
            frame.depth.write_png(&out_dir.join(&depth))?;
            let ir = if job.config.output.write_ir {
                let name = ir_file_name(index);
                write_intensity_png(&frame.ideal.intensities, &out_dir.join(&name), true)?;
                Some(name)
            } else {
                None
            };
            let mut m = manifest.lock().expect("manifest lock");
            m.frames.push(FrameRecord {
                index,
                seed,
                pose: PoseRecord::from(&pose),
                depth,
                ir,
            });
            m.frames.sort_by_key(|f| f.index);
            m.write(&manifest_path)?;
            log::debug!("frame {index} written");
            Ok(())
        })
    };
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work)?;
    } else {
        work()?;
    }
    // also covers the nothing-to-do case
    manifest.into_inner().expect("manifest lock").write(&manifest_path)?;

    let elapsed = start.elapsed().as_secs_f64();
    let written = pending.len();
    let fps = if elapsed > 0.0 { written as f64 / elapsed } else { 0.0 };
    let (w, h) = (job.pipeline.sensor().camera.width, job.pipeline.sensor().camera.height);
    log::info!("{written} frames ({w}x{h}) in {elapsed:.2} s: {fps:.2} frames/s");
    Ok(DatasetSummary {
        out_dir: out_dir.to_path_buf(),
        frames_written: written,
        frames_skipped: skipped,
        elapsed_s: elapsed,
        frames_per_second: fps,
    })
}

/// Writes every intermediate stage of frame `index`: ideal IR, noisy IR,
/// disparity (PFM), raw depth and post-processed depth.
pub fn inspect_frame(config: Config, base_dir: &Path, index: usize, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let job = Job::prepare(config, base_dir)?;
    let pose = *job.poses.get(index).ok_or_else(|| {
        Error::invalid(
            "inspect",
            format!("frame {index} out of range (config has {} viewpoints)", job.poses.len()),
        )
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let shared = AcceleratedScene::build(&job.scene);
    let frame = job.render(&shared, index, &pose, job.frame_seed(index))?;
    let paths: Vec<PathBuf> = ["ir.png", "ir_noisy.png", "disparity.pfm", "depth_raw.png", "depth.png"]
        .iter()
        .map(|n| out_dir.join(n))
        .collect();
    write_intensity_png(&frame.ideal.intensities, &paths[0], true)?;
    write_intensity_png(&frame.noisy.intensities, &paths[1], true)?;
    frame.disparity.write_pfm(&paths[2])?;
    frame.raw_depth.write_png(&paths[3])?;
    frame.depth.write_png(&paths[4])?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::viewpoints::ViewpointMode;

    #[test]
    fn pose_record_roundtrips_exactly() {
        let spec = crate::viewpoints::ViewpointSpec {
            mode: ViewpointMode::Random,
            count: 50,
            ..Default::default()
        };
        for p in sample_viewpoints(&spec, nalgebra::Point3::origin(), (0.4, 8.0), 3).unwrap() {
            let rec = PoseRecord::from(&p);
            let json = serde_json::to_string(&rec).unwrap();
            let back: PoseRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(back.pose(), p);
        }
    }

    #[test]
    fn file_names_are_zero_padded() {
        assert_eq!(depth_file_name(7), "frames/000007_depth.png");
        assert_eq!(ir_file_name(123456), "frames/123456_ir.png");
    }
}
