//! On-disk dataset layouts.
//!
//! Episodic (format A):
//!
//! ```text
//! metadata.json
//! demo_00000/steps.jsonl
//! demo_00000/third/000000.png
//! demo_00000/wrist/000000.png
//! ```
//!
//! Frame table (format B):
//!
//! ```text
//! meta/info.json
//! meta/tasks.jsonl
//! data/frames.jsonl
//! images/third/episode_00000/000000.png
//! images/wrist/episode_00000/000000.png
//! ```
//!
//! Both store scalars as shortest round-trip decimals and images as PNG, so
//! an export followed by an import gives back identical values and pixels.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::demo::{Demonstration, Frame, FRAME_IMAGE_SIZE, RECOMMENDED_FRAMES};
use super::vectors::{ActionVector, StateVector};
use crate::error::{domain, Error, Result};
use crate::image::RgbImage;
use crate::par::parallel_for;

pub const FORMAT_VERSION: u32 = 1;
const DATASET_NAME: &str = "softarm_demos";
const EPISODIC_META: &str = "metadata.json";
const TABLE_INFO: &str = "meta/info.json";
const TABLE_TASKS: &str = "meta/tasks.jsonl";
const TABLE_FRAMES: &str = "data/frames.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Format A: one directory per demonstration.
    Episodic,
    /// Format B: one flat frame table plus a task table.
    FrameTable,
}

impl DatasetFormat {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Episodic => "episodic",
            DatasetFormat::FrameTable => "frame_table",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "episodic" => Ok(DatasetFormat::Episodic),
            "b" | "frame_table" | "frame-table" => Ok(DatasetFormat::FrameTable),
            other => Err(format!("unknown dataset format '{other}' (expected a, b, episodic or frame_table)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub format: DatasetFormat,
    pub root: PathBuf,
    pub demos: usize,
    pub frames: usize,
    pub images: usize,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskEntry {
    task_id: u8,
    instruction: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodicMeta {
    format_version: u32,
    format: DatasetFormat,
    name: String,
    capture_hz: f64,
    state_dim: usize,
    action_dim: usize,
    image_size: [u32; 2],
    tasks: Vec<TaskEntry>,
    demos: Vec<EpisodicDemo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodicDemo {
    demo_id: String,
    task_id: u8,
    capture_hz: f64,
    num_frames: usize,
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    step_index: usize,
    timestamp: f64,
    state: StateVector,
    action: ActionVector,
    instruction: String,
    is_first: bool,
    is_last: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableInfo {
    format_version: u32,
    format: DatasetFormat,
    name: String,
    capture_hz: f64,
    state_dim: usize,
    action_dim: usize,
    image_size: [u32; 2],
    total_episodes: usize,
    total_frames: usize,
    episodes: Vec<TableEpisode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEpisode {
    episode_index: usize,
    demo_id: String,
    task_id: u8,
    capture_hz: f64,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRecord {
    task_index: usize,
    task_id: u8,
    instruction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameRecord {
    index: usize,
    episode_index: usize,
    frame_index: usize,
    step_index: usize,
    timestamp: f64,
    state: StateVector,
    action: ActionVector,
    task_index: usize,
}

/// Writes `demos` under `root`, which must be missing or empty.
pub fn export_demos(demos: &[Demonstration], format: DatasetFormat, root: impl AsRef<Path>) -> Result<ExportSummary> {
    if demos.is_empty() {
        return Err(domain("nothing to export: demonstration list is empty"));
    }
    for d in demos {
        check_demo(d)?;
    }
    let mut writer = DatasetWriter::create(root, format)?;
    for d in demos {
        writer.append(d)?;
    }
    writer.finish()
}

fn check_demo(d: &Demonstration) -> Result<()> {
    if let Some(p) = d.problems().into_iter().next() {
        return Err(domain(format!("demonstration '{}': {p}", d.demo_id)));
    }
    Ok(())
}

fn prepare_root(root: &Path) -> Result<()> {
    if root.exists() {
        if !root.is_dir() {
            return Err(domain(format!("{} is not a directory", root.display())));
        }
        if fs::read_dir(root)?.next().is_some() {
            return Err(domain(format!("output directory {} is not empty", root.display())));
        }
    }
    fs::create_dir_all(root)?;
    Ok(())
}

fn json_line<T: Serialize>(record: &T) -> Result<String> {
    let mut line = serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&json_line(&r)?);
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn image_name(frame: usize) -> String {
    format!("{frame:06}.png")
}

fn write_images(dir_third: &Path, dir_wrist: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir_third)?;
    fs::create_dir_all(dir_wrist)?;
    parallel_for(frames.len(), |i| {
        fs::write(dir_third.join(image_name(i)), frames[i].third_image.to_png())?;
        fs::write(dir_wrist.join(image_name(i)), frames[i].wrist_image.to_png())?;
        Ok(())
    })
}

fn demo_dir(index: usize) -> String {
    format!("demo_{index:05}")
}

fn episode_dir(index: usize) -> String {
    format!("episode_{index:05}")
}

#[derive(Debug, Clone)]
struct WrittenDemo {
    demo_id: String,
    task_id: u8,
    capture_hz: f64,
    len: usize,
}

/// Writes a dataset one demonstration at a time, so only the demonstration
/// being appended has to be in memory. Metadata goes out in
/// [`DatasetWriter::finish`]; a dataset whose writer never finished has no
/// metadata and does not import.
pub struct DatasetWriter {
    format: DatasetFormat,
    root: PathBuf,
    tasks: Vec<TaskEntry>,
    written: Vec<WrittenDemo>,
    frames: usize,
    table: Option<BufWriter<File>>,
}

impl DatasetWriter {
    /// `root` must be missing or empty.
    pub fn create(root: impl AsRef<Path>, format: DatasetFormat) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        prepare_root(&root)?;
        let table = match format {
            DatasetFormat::Episodic => None,
            DatasetFormat::FrameTable => {
                fs::create_dir_all(root.join("meta"))?;
                fs::create_dir_all(root.join("data"))?;
                Some(BufWriter::new(File::create(root.join(TABLE_FRAMES))?))
            }
        };
        Ok(Self {
            format,
            root,
            tasks: Vec::new(),
            written: Vec::new(),
            frames: 0,
            table,
        })
    }

    pub fn format(&self) -> DatasetFormat {
        self.format
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Demonstrations appended so far.
    pub fn len(&self) -> usize {
        self.written.len()
    }

    pub fn is_empty(&self) -> bool {
        self.written.is_empty()
    }

    pub fn append(&mut self, demo: &Demonstration) -> Result<()> {
        check_demo(demo)?;
        if !RECOMMENDED_FRAMES.contains(&demo.len()) {
            log::warn!("demonstration '{}' has {} frames, outside the recommended 50-200", demo.demo_id, demo.len());
        }
        // tasks are numbered in order of first appearance
        let task = TaskEntry {
            task_id: demo.task_id,
            instruction: demo.instruction().unwrap_or_default().to_string(),
        };
        let task_index = match self.tasks.iter().position(|t| *t == task) {
            Some(i) => i,
            None => {
                self.tasks.push(task);
                self.tasks.len() - 1
            }
        };
        let index = self.written.len();
        match &mut self.table {
            None => {
                let dir = self.root.join(demo_dir(index));
                fs::create_dir_all(&dir)?;
                let last = demo.len() - 1;
                write_jsonl(
                    &dir.join("steps.jsonl"),
                    demo.frames.iter().enumerate().map(|(k, f)| StepRecord {
                        step_index: f.step_index,
                        timestamp: f.timestamp_s,
                        state: f.state,
                        action: f.action,
                        instruction: f.instruction.clone(),
                        is_first: k == 0,
                        is_last: k == last,
                    }),
                )?;
                write_images(&dir.join("third"), &dir.join("wrist"), &demo.frames)?;
            }
            Some(table) => {
                write_images(
                    &self.root.join("images/third").join(episode_dir(index)),
                    &self.root.join("images/wrist").join(episode_dir(index)),
                    &demo.frames,
                )?;
                for (k, f) in demo.frames.iter().enumerate() {
                    let line = json_line(&FrameRecord {
                        index: self.frames + k,
                        episode_index: index,
                        frame_index: k,
                        step_index: f.step_index,
                        timestamp: f.timestamp_s,
                        state: f.state,
                        action: f.action,
                        task_index,
                    })?;
                    table.write_all(line.as_bytes())?;
                }
            }
        }
        self.frames += demo.len();
        self.written.push(WrittenDemo {
            demo_id: demo.demo_id.clone(),
            task_id: demo.task_id,
            capture_hz: demo.capture_hz,
            len: demo.len(),
        });
        Ok(())
    }

    /// Writes the metadata. Fails when nothing was appended.
    pub fn finish(mut self) -> Result<ExportSummary> {
        let Some(first) = self.written.first() else {
            return Err(domain("nothing to export: no demonstrations were appended"));
        };
        let capture_hz = first.capture_hz;
        match self.table.take() {
            None => write_json(
                &self.root.join(EPISODIC_META),
                &EpisodicMeta {
                    format_version: FORMAT_VERSION,
                    format: DatasetFormat::Episodic,
                    name: DATASET_NAME.into(),
                    capture_hz,
                    state_dim: StateVector::DIM,
                    action_dim: ActionVector::DIM,
                    image_size: [FRAME_IMAGE_SIZE, FRAME_IMAGE_SIZE],
                    tasks: self.tasks.clone(),
                    demos: self
                        .written
                        .iter()
                        .enumerate()
                        .map(|(i, d)| EpisodicDemo {
                            demo_id: d.demo_id.clone(),
                            task_id: d.task_id,
                            capture_hz: d.capture_hz,
                            num_frames: d.len,
                            path: demo_dir(i),
                        })
                        .collect(),
                },
            )?,
            Some(mut table) => {
                table.flush()?;
                drop(table);
                write_jsonl(
                    &self.root.join(TABLE_TASKS),
                    self.tasks.iter().enumerate().map(|(i, t)| TaskRecord {
                        task_index: i,
                        task_id: t.task_id,
                        instruction: t.instruction.clone(),
                    }),
                )?;
                write_json(
                    &self.root.join(TABLE_INFO),
                    &TableInfo {
                        format_version: FORMAT_VERSION,
                        format: DatasetFormat::FrameTable,
                        name: DATASET_NAME.into(),
                        capture_hz,
                        state_dim: StateVector::DIM,
                        action_dim: ActionVector::DIM,
                        image_size: [FRAME_IMAGE_SIZE, FRAME_IMAGE_SIZE],
                        total_episodes: self.written.len(),
                        total_frames: self.frames,
                        episodes: self
                            .written
                            .iter()
                            .enumerate()
                            .map(|(i, d)| TableEpisode {
                                episode_index: i,
                                demo_id: d.demo_id.clone(),
                                task_id: d.task_id,
                                capture_hz: d.capture_hz,
                                length: d.len,
                            })
                            .collect(),
                    },
                )?;
            }
        }
        Ok(ExportSummary {
            format: self.format,
            root: self.root.clone(),
            demos: self.written.len(),
            frames: self.frames,
            images: 2 * self.frames,
            tasks: self.tasks.len(),
        })
    }
}

/// Identifies the layout under `root` from its metadata file.
pub fn detect_format(root: impl AsRef<Path>) -> Result<DatasetFormat> {
    let root = root.as_ref();
    let (path, expected) = if root.join(EPISODIC_META).is_file() {
        (root.join(EPISODIC_META), DatasetFormat::Episodic)
    } else if root.join(TABLE_INFO).is_file() {
        (root.join(TABLE_INFO), DatasetFormat::FrameTable)
    } else {
        return Err(Error::Format(format!("no dataset metadata found under {}", root.display())));
    };
    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
        format: DatasetFormat,
    }
    let probe: Probe = read_json(&path)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format_version {}",
            path.display(),
            probe.format_version
        )));
    }
    if probe.format != expected {
        return Err(Error::Format(format!("{}: declares format {}", path.display(), probe.format)));
    }
    Ok(expected)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), n + 1))))
        .collect()
}

fn read_image(path: &Path, label: &str) -> Result<RgbImage> {
    let integrity = |reason: String| Error::Integrity {
        frame: label.to_string(),
        reason: format!("{}: {reason}", path.display()),
    };
    let bytes = fs::read(path).map_err(|e| integrity(e.to_string()))?;
    let img = RgbImage::from_png(&bytes).map_err(|e| integrity(e.to_string()))?;
    if img.width() != FRAME_IMAGE_SIZE || img.height() != FRAME_IMAGE_SIZE {
        return Err(integrity(format!("image is {}x{}, expected 256x256", img.width(), img.height())));
    }
    Ok(img)
}

/// Reads a whole dataset written by [`export_demos`] or [`DatasetWriter`].
/// Large datasets are better read one demonstration at a time through
/// [`DatasetReader`].
pub fn import_demos(root: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
    DatasetReader::open(root)?.iter().collect()
}

#[derive(Debug, Clone)]
enum Source {
    Episodic { dir: String, num_frames: usize },
    Table { records: Vec<FrameRecord>, instruction: String },
}

#[derive(Debug, Clone)]
struct Entry {
    demo_id: String,
    task_id: u8,
    capture_hz: f64,
    source: Source,
}

/// Random access to the demonstrations of a dataset. Opening reads and
/// checks the metadata and scalar tables; images are read per demonstration.
#[derive(Debug, Clone)]
pub struct DatasetReader {
    root: PathBuf,
    format: DatasetFormat,
    entries: Vec<Entry>,
}

impl DatasetReader {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let format = detect_format(&root)?;
        let entries = match format {
            DatasetFormat::Episodic => episodic_entries(&root)?,
            DatasetFormat::FrameTable => table_entries(&root)?,
        };
        Ok(Self { root, format, entries })
    }

    pub fn format(&self) -> DatasetFormat {
        self.format
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn demo_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.demo_id.as_str())
    }

    /// Loads demonstration `index` with its images.
    pub fn read(&self, index: usize) -> Result<Demonstration> {
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| domain(format!("demonstration {index} out of range ({} in dataset)", self.len())))?;
        let frames = match &entry.source {
            Source::Episodic { dir, num_frames } => self.read_episodic(index, entry, dir, *num_frames)?,
            Source::Table { records, instruction } => self.read_table(index, records, instruction)?,
        };
        Ok(Demonstration {
            demo_id: entry.demo_id.clone(),
            task_id: entry.task_id,
            frames,
            capture_hz: entry.capture_hz,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Demonstration>> + '_ {
        (0..self.len()).map(|i| self.read(i))
    }

    fn read_episodic(&self, di: usize, entry: &Entry, dir: &str, num_frames: usize) -> Result<Vec<Frame>> {
        let dir = self.root.join(dir);
        let steps: Vec<StepRecord> = read_jsonl(&dir.join("steps.jsonl"))?;
        if steps.len() != num_frames {
            return Err(Error::Format(format!(
                "demo {di}: metadata lists {num_frames} frames, steps.jsonl has {}",
                steps.len()
            )));
        }
        steps
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                let label = |view: &str| format!("demo {di} ({}) frame {k} {view} image", entry.demo_id);
                Ok(Frame {
                    step_index: s.step_index,
                    timestamp_s: s.timestamp,
                    third_image: read_image(&dir.join("third").join(image_name(k)), &label("third"))?,
                    wrist_image: read_image(&dir.join("wrist").join(image_name(k)), &label("wrist"))?,
                    state: s.state,
                    action: s.action,
                    instruction: s.instruction,
                })
            })
            .collect()
    }

    fn read_table(&self, e: usize, records: &[FrameRecord], instruction: &str) -> Result<Vec<Frame>> {
        let ep = episode_dir(e);
        records
            .iter()
            .map(|r| {
                let k = r.frame_index;
                let label = |view: &str| format!("episode {e} frame {k} {view} image");
                Ok(Frame {
                    step_index: r.step_index,
                    timestamp_s: r.timestamp,
                    third_image: read_image(&self.root.join("images/third").join(&ep).join(image_name(k)), &label("third"))?,
                    wrist_image: read_image(&self.root.join("images/wrist").join(&ep).join(image_name(k)), &label("wrist"))?,
                    state: r.state,
                    action: r.action,
                    instruction: instruction.to_string(),
                })
            })
            .collect()
    }
}

fn episodic_entries(root: &Path) -> Result<Vec<Entry>> {
    let meta: EpisodicMeta = read_json(&root.join(EPISODIC_META))?;
    Ok(meta
        .demos
        .into_iter()
        .map(|d| Entry {
            demo_id: d.demo_id,
            task_id: d.task_id,
            capture_hz: d.capture_hz,
            source: Source::Episodic {
                dir: d.path,
                num_frames: d.num_frames,
            },
        })
        .collect())
}

fn table_entries(root: &Path) -> Result<Vec<Entry>> {
    let info: TableInfo = read_json(&root.join(TABLE_INFO))?;
    let tasks: Vec<TaskRecord> = read_jsonl(&root.join(TABLE_TASKS))?;
    let task_by_index: HashMap<usize, &TaskRecord> = tasks.iter().map(|t| (t.task_index, t)).collect();
    let records: Vec<FrameRecord> = read_jsonl(&root.join(TABLE_FRAMES))?;
    if records.len() != info.total_frames {
        return Err(Error::Format(format!(
            "info lists {} frames, frame table has {}",
            info.total_frames,
            records.len()
        )));
    }
    let mut grouped: Vec<Vec<FrameRecord>> = info.episodes.iter().map(|e| Vec::with_capacity(e.length)).collect();
    let mut task_of: Vec<Option<usize>> = vec![None; grouped.len()];
    let mut last_episode = 0;
    for r in records {
        if r.episode_index < last_episode || r.episode_index >= grouped.len() {
            return Err(Error::Format(format!("frame {}: episode_index {} out of order", r.index, r.episode_index)));
        }
        last_episode = r.episode_index;
        if !task_by_index.contains_key(&r.task_index) {
            return Err(Error::Format(format!("frame {}: unknown task_index {}", r.index, r.task_index)));
        }
        let e = r.episode_index;
        if *task_of[e].get_or_insert(r.task_index) != r.task_index {
            return Err(Error::Format(format!("episode {e}: frames disagree on task_index")));
        }
        if r.frame_index != grouped[e].len() {
            return Err(Error::Format(format!("episode {e}: frame_index {} out of sequence", r.frame_index)));
        }
        grouped[e].push(r);
    }
    info.episodes
        .into_iter()
        .zip(grouped)
        .zip(task_of)
        .enumerate()
        .map(|(e, ((ep, records), task))| {
            if records.len() != ep.length {
                return Err(Error::Format(format!(
                    "episode {e}: expected {} frames, found {}",
                    ep.length,
                    records.len()
                )));
            }
            let instruction = task.map(|t| task_by_index[&t].instruction.clone()).unwrap_or_default();
            Ok(Entry {
                demo_id: ep.demo_id,
                task_id: ep.task_id,
                capture_hz: ep.capture_hz,
                source: Source::Table { records, instruction },
            })
        })
        .collect()
}

/// Re-exports the dataset at `input` in `format` under `output`, one
/// demonstration at a time.
pub fn convert_dataset(input: impl AsRef<Path>, output: impl AsRef<Path>, format: DatasetFormat) -> Result<ExportSummary> {
    let reader = DatasetReader::open(input)?;
    if reader.is_empty() {
        return Err(domain("nothing to export: input dataset is empty"));
    }
    let mut writer = DatasetWriter::create(output, format)?;
    for demo in reader.iter() {
        writer.append(&demo?)?;
    }
    writer.finish()
}
