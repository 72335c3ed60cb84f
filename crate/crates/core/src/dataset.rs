//! Paired frame datasets on disk, steering logs and image preprocessing.
//!
//! Layout of one map:
//!
//! ```text
//! <root>/<map_name>/clear/frame_000000.png
//! <root>/<map_name>/rainy/frame_000000.png
//! <root>/<map_name>/steering.csv    # header: frame,drive_wheel_angle_deg
//! ```
//!
//! Angles are in degrees; positive is clockwise (rightward) steering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;

pub const STEERING_HEADER: &str = "frame,drive_wheel_angle_deg";
/// Default steering-wheel ratio applied to drive-wheel angles.
pub const DEFAULT_STEERING_RATIO: f64 = 15.0;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

/// Frame number of a `frame_<digits>.png` file name.
pub fn parse_frame_file_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub map_name: String,
    pub frame_index: usize,
    pub clear_path: PathBuf,
    pub rainy_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringRecord {
    pub frame_index: usize,
    /// Degrees, positive clockwise.
    pub drive_wheel_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapDataset {
    pub map_name: String,
    pub pairs: Vec<FramePair>,
    pub steering: Vec<SteeringRecord>,
}

impl MapDataset {
    pub fn frame_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.frame_index).collect()
    }

    pub fn steering_for(&self, frame_index: usize) -> Option<f64> {
        self.steering
            .binary_search_by_key(&frame_index, |r| r.frame_index)
            .ok()
            .map(|i| self.steering[i].drive_wheel_angle)
    }

    /// Decode and preprocess every pair.
    pub fn load_frames(&self, resolution: usize) -> Result<LoadedMap> {
        let mut clear = Vec::with_capacity(self.pairs.len());
        let mut rainy = Vec::with_capacity(self.pairs.len());
        for p in &self.pairs {
            let c = Frame::load(&p.clear_path)?;
            let r = Frame::load(&p.rainy_path)?;
            if (c.height(), c.width()) != (r.height(), r.width()) {
                return Err(Error::Integrity(format!(
                    "{} frame {}: clear is {}x{}, rainy is {}x{}",
                    self.map_name,
                    p.frame_index,
                    c.height(),
                    c.width(),
                    r.height(),
                    r.width()
                )));
            }
            clear.push(preprocess(&c, resolution));
            rainy.push(preprocess(&r, resolution));
        }
        Ok(LoadedMap {
            map_name: self.map_name.clone(),
            frame_indices: self.frame_indices(),
            clear,
            rainy,
            steering: self.steering.clone(),
        })
    }
}

/// A map with its frames decoded and preprocessed in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedMap {
    pub map_name: String,
    pub frame_indices: Vec<usize>,
    pub clear: Vec<Frame>,
    pub rainy: Vec<Frame>,
    pub steering: Vec<SteeringRecord>,
}

impl LoadedMap {
    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn position(&self, frame_index: usize) -> Option<usize> {
        self.frame_indices.binary_search(&frame_index).ok()
    }

    /// Path-free view usable by the batch planners.
    pub fn as_dataset(&self) -> MapDataset {
        MapDataset {
            map_name: self.map_name.clone(),
            pairs: self
                .frame_indices
                .iter()
                .map(|&i| FramePair {
                    map_name: self.map_name.clone(),
                    frame_index: i,
                    clear_path: PathBuf::new(),
                    rainy_path: PathBuf::new(),
                })
                .collect(),
            steering: self.steering.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Folder {
    Clear,
    Rainy,
}

/// A frame found in only one of the two folders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingWarning {
    pub frame_index: usize,
    pub only_in: Folder,
}

fn scan_folder(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("missing directory {}", dir.display())));
    }
    let mut frames = BTreeMap::new();
    for entry in std::fs::read_dir(dir).at(dir)? {
        let entry = entry.at(dir)?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(parse_frame_file_name) else {
            continue;
        };
        if let Some(prev) = frames.insert(index, entry.path()) {
            return Err(Error::Integrity(format!(
                "duplicate frame number {index}: {} and {}",
                prev.display(),
                entry.path().display()
            )));
        }
    }
    Ok(frames)
}

/// Pair `root/map/clear` with `root/map/rainy` by frame number.
///
/// Frames present in only one folder are excluded and returned as warnings.
pub fn load_map_dataset(root: &Path, map_name: &str) -> Result<(MapDataset, Vec<PairingWarning>)> {
    let dir = root.join(map_name);
    let clear = scan_folder(&dir.join("clear"))?;
    let rainy = scan_folder(&dir.join("rainy"))?;
    let mut warnings = Vec::new();
    let mut pairs = Vec::new();
    let all: BTreeSet<usize> = clear.keys().chain(rainy.keys()).copied().collect();
    for index in all {
        match (clear.get(&index), rainy.get(&index)) {
            (Some(c), Some(r)) => pairs.push(FramePair {
                map_name: map_name.to_string(),
                frame_index: index,
                clear_path: c.clone(),
                rainy_path: r.clone(),
            }),
            (Some(_), None) => warnings.push(PairingWarning {
                frame_index: index,
                only_in: Folder::Clear,
            }),
            (None, _) => warnings.push(PairingWarning {
                frame_index: index,
                only_in: Folder::Rainy,
            }),
        }
    }
    for w in &warnings {
        log::warn!("{map_name}: frame {} only present in {:?} folder, skipped", w.frame_index, w.only_in);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(format!("{map_name}: no matched frame pairs")));
    }
    let steering_path = dir.join("steering.csv");
    let steering = if steering_path.exists() {
        load_steering(&steering_path)?
    } else {
        Vec::new()
    };
    if !steering.is_empty() {
        let known: BTreeSet<usize> = steering.iter().map(|r| r.frame_index).collect();
        if let Some(p) = pairs.iter().find(|p| !known.contains(&p.frame_index)) {
            return Err(Error::Integrity(format!(
                "{map_name}: no steering record for frame {}",
                p.frame_index
            )));
        }
    }
    Ok((
        MapDataset {
            map_name: map_name.to_string(),
            pairs,
            steering,
        },
        warnings,
    ))
}

/// Parse a steering log; records are returned sorted by frame.
pub fn load_steering(path: &Path) -> Result<Vec<SteeringRecord>> {
    let text = std::fs::read_to_string(path).at(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == STEERING_HEADER => {}
        other => {
            return Err(parse_err(
                1,
                format!("expected header `{STEERING_HEADER}`, got {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(f), Some(a), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(line_no, format!("expected 2 fields in {line:?}")));
        };
        let frame_index = f
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(line_no, format!("frame {f:?}: {e}")))?;
        let drive_wheel_angle = a
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(line_no, format!("angle {a:?} is not a finite number")))?;
        records.push(SteeringRecord {
            frame_index,
            drive_wheel_angle,
        });
    }
    records.sort_by_key(|r| r.frame_index);
    if let Some(w) = records.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
        return Err(Error::Integrity(format!(
            "{}: duplicate steering record for frame {}",
            path.display(),
            w[0].frame_index
        )));
    }
    Ok(records)
}

pub fn write_steering_csv(path: &Path, records: &[SteeringRecord]) -> Result<()> {
    let mut out = String::from(STEERING_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{}", r.frame_index, r.drive_wheel_angle);
    }
    std::fs::write(path, out).at(path)
}

/// Steering-wheel angle `p * r` from a drive-wheel angle `p`.
pub fn drive_to_steering_angle(drive_deg: f64, ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("steering ratio must be positive, got {ratio}")));
    }
    Ok(drive_deg * ratio)
}

/// Bilinear resample with pixel-centre alignment.
fn resize_bilinear(src: &Frame, y0: usize, x0: usize, h: usize, w: usize, out_h: usize, out_w: usize) -> Frame {
    if (h, w) == (out_h, out_w) {
        return Frame::from_fn(out_h, out_w, |y, x| src.get(y0 + y, x0 + x));
    }
    let coord = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f32) {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..out_w).map(|x| coord(x, w, out_w)).collect();
    let mut out = Frame::new(out_h, out_w);
    for y in 0..out_h {
        let (ya, yb, fy) = coord(y, h, out_h);
        for (x, &(xa, xb, fx)) in cols.iter().enumerate() {
            let p00 = src.get(y0 + ya, x0 + xa);
            let p01 = src.get(y0 + ya, x0 + xb);
            let p10 = src.get(y0 + yb, x0 + xa);
            let p11 = src.get(y0 + yb, x0 + xb);
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                let top = p00[c] * (1.0 - fx) + p01[c] * fx;
                let bottom = p10[c] * (1.0 - fx) + p11[c] * fx;
                px[c] = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
            }
            out.set(y, x, px);
        }
    }
    out
}

/// Crop the largest centred window with aspect `out_w : out_h`, then resize.
///
/// Odd margins put the extra pixel at the bottom/right (floor offset).
pub fn center_crop_resize(frame: &Frame, out_h: usize, out_w: usize) -> Frame {
    assert!(out_h > 0 && out_w > 0, "target size must be positive");
    let (h, w) = (frame.height(), frame.width());
    // largest window with w' / h' == out_w / out_h
    let (ch, cw) = if w * out_h >= h * out_w {
        (h, ((h * out_w) as f64 / out_h as f64).round().max(1.0) as usize)
    } else {
        (((w * out_h) as f64 / out_w as f64).round().max(1.0) as usize, w)
    };
    let (ch, cw) = (ch.min(h), cw.min(w));
    resize_bilinear(frame, (h - ch) / 2, (w - cw) / 2, ch, cw, out_h, out_w)
}

/// Centre-crop to a square and resize to `target x target`. No mean/std normalization.
pub fn preprocess(frame: &Frame, target: usize) -> Frame {
    center_crop_resize(frame, target, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pngs(dir: &Path, indices: &[usize]) {
        std::fs::create_dir_all(dir).unwrap();
        for &i in indices {
            Frame::filled(4, 4, [i as f32 / 10.0; 3])
                .save_png(&dir.join(frame_file_name(i)))
                .unwrap();
        }
    }

    fn fixture(clear: &[usize], rainy: &[usize]) -> tempfile::TempDir {
        let root = tempfile::tempdir().unwrap();
        write_pngs(&root.path().join("m/clear"), clear);
        write_pngs(&root.path().join("m/rainy"), rainy);
        root
    }

    #[test]
    fn full_match_pairs_everything() {
        let root = fixture(&[1, 2, 3], &[1, 2, 3]);
        let (d, w) = load_map_dataset(root.path(), "m").unwrap();
        assert_eq!(d.frame_indices(), vec![1, 2, 3]);
        assert!(w.is_empty());
    }

    #[test]
    fn partial_match_reports_orphans() {
        let root = fixture(&[1, 2, 3], &[2, 3, 4]);
        let (d, w) = load_map_dataset(root.path(), "m").unwrap();
        // set-intersection oracle
        let c: BTreeSet<usize> = [1, 2, 3].into();
        let r: BTreeSet<usize> = [2, 3, 4].into();
        let both: Vec<usize> = c.intersection(&r).copied().collect();
        assert_eq!(d.frame_indices(), both);
        assert_eq!(
            w,
            vec![
                PairingWarning { frame_index: 1, only_in: Folder::Clear },
                PairingWarning { frame_index: 4, only_in: Folder::Rainy },
            ]
        );
    }

    #[test]
    fn empty_clear_folder_is_an_empty_dataset() {
        let root = fixture(&[], &[1, 2]);
        assert!(matches!(load_map_dataset(root.path(), "m"), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn missing_directory_is_a_config_error() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(load_map_dataset(root.path(), "nope"), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_frame_numbers_are_an_integrity_error() {
        let root = fixture(&[1, 2], &[1, 2]);
        Frame::filled(4, 4, [0.0; 3])
            .save_png(&root.path().join("m/clear/frame_2.png"))
            .unwrap();
        assert!(matches!(load_map_dataset(root.path(), "m"), Err(Error::Integrity(_))));
    }

    #[test]
    fn steering_must_cover_pairs() {
        let root = fixture(&[0, 1], &[0, 1]);
        write_steering_csv(
            &root.path().join("m/steering.csv"),
            &[SteeringRecord { frame_index: 0, drive_wheel_angle: 0.0 }],
        )
        .unwrap();
        assert!(matches!(load_map_dataset(root.path(), "m"), Err(Error::Integrity(_))));
    }

    #[test]
    fn steering_csv_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "frame,drive_wheel_angle_deg\n0,0.0\n1,1.5\n").unwrap();
        let r = load_steering(&path).unwrap();
        assert_eq!(
            r,
            vec![
                SteeringRecord { frame_index: 0, drive_wheel_angle: 0.0 },
                SteeringRecord { frame_index: 1, drive_wheel_angle: 1.5 },
            ]
        );

        std::fs::write(&path, "frame,drive_wheel_angle_deg\n5,1.0\n2,-3.0\n").unwrap();
        let idx: Vec<usize> = load_steering(&path).unwrap().iter().map(|r| r.frame_index).collect();
        assert_eq!(idx, vec![2, 5]);

        std::fs::write(&path, "frame,drive_wheel_angle_deg\n1,0.5\n2,0.25\n3,abc\n").unwrap();
        match load_steering(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "frame,drive_wheel_angle_deg\n1,0.5\n1,0.25\n").unwrap();
        assert!(matches!(load_steering(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn steering_ratio_conversion() {
        assert_eq!(drive_to_steering_angle(0.0, 15.0).unwrap(), 0.0);
        assert_eq!(drive_to_steering_angle(1.5, 15.0).unwrap(), 22.5);
        assert_eq!(drive_to_steering_angle(-2.0, 13.5).unwrap(), -27.0);
        assert!(matches!(drive_to_steering_angle(1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(drive_to_steering_angle(1.0, -2.0), Err(Error::Config(_))));
    }

    fn pattern(h: usize, w: usize) -> Frame {
        Frame::from_fn(h, w, |y, x| {
            [
                (x % 17) as f32 / 16.0,
                (y % 13) as f32 / 12.0,
                ((x * 7 + y * 3) % 11) as f32 / 10.0,
            ]
        })
    }

    #[test]
    fn preprocess_identity_at_target() {
        let f = pattern(256, 256);
        assert_eq!(preprocess(&f, 256), f);
    }

    #[test]
    fn preprocess_crops_the_centre_square() {
        // 800 wide x 600 high: crop columns 100..700.
        let f = pattern(600, 800);
        let offset = (800 - 600) / 2;
        assert_eq!(offset, 100);
        let cropped = Frame::from_fn(600, 600, |y, x| f.get(y, x + offset));
        assert_eq!(center_crop_resize(&f, 600, 600), cropped);
        assert_eq!(preprocess(&f, 256), preprocess(&cropped, 256));
        assert_eq!(preprocess(&f, 256).height(), 256);
    }

    #[test]
    fn preprocess_two_by_two_to_one_is_the_average() {
        let f = Frame::from_fn(2, 2, |y, x| [((x + y) % 2) as f32, x as f32, 1.0]);
        let out = preprocess(&f, 1);
        assert_eq!(out.get(0, 0), [0.5, 0.5, 1.0]);
    }

    #[test]
    fn frame_file_names() {
        assert_eq!(frame_file_name(7), "frame_000007.png");
        assert_eq!(parse_frame_file_name("frame_000007.png"), Some(7));
        assert_eq!(parse_frame_file_name("frame_12.png"), Some(12));
        assert_eq!(parse_frame_file_name("frame_.png"), None);
        assert_eq!(parse_frame_file_name("frame_1a.png"), None);
        assert_eq!(parse_frame_file_name("img_000001.png"), None);
    }
}
