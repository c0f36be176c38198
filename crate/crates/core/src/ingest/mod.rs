//! Reading event datasets and calibration maps from disk.
//!
//! Event files hold one `t x y p` line per event with `p` in `{0, 1}`. An
//! images index holds `timestamp path` lines, paths relative to the index
//! file, each pointing at an 8-bit binary graymap.

mod calibmap;
pub mod pgm;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use calibmap::{
    format_calibration_map, parse_calibration_map, read_calibration_map, write_calibration_map,
};

use crate::error::{Error, Result};
use crate::model::{Event, EventStream, IntensityFrame, Polarity};
use pgm::GrayImage;

/// An event stream plus the intensity frames recorded alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    stream: EventStream,
    frames: Vec<IntensityFrame>,
}

impl Dataset {
    pub fn new(stream: EventStream, frames: Vec<IntensityFrame>) -> Result<Self> {
        check_frames(&frames, stream.width(), stream.height())?;
        Ok(Self { stream, frames })
    }

    pub fn stream(&self) -> &EventStream {
        &self.stream
    }

    pub fn frames(&self) -> &[IntensityFrame] {
        &self.frames
    }

    pub fn width(&self) -> usize {
        self.stream.width()
    }

    pub fn height(&self) -> usize {
        self.stream.height()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp()).collect()
    }
}

/// Frames share one resolution and strictly increasing timestamps.
pub(crate) fn check_frames(frames: &[IntensityFrame], width: usize, height: usize) -> Result<()> {
    let mut previous = f64::NEG_INFINITY;
    for (index, f) in frames.iter().enumerate() {
        crate::model::check_shape(width, height, f.width(), f.height())?;
        if !(f.timestamp() > previous) {
            return Err(Error::NonMonotoneFrames {
                index,
                t: f.timestamp(),
                previous,
            });
        }
        previous = f.timestamp();
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub events: usize,
    pub frames: usize,
    pub events_before_first_frame: usize,
    pub events_after_last_frame: usize,
}

impl LoadReport {
    pub fn out_of_range(&self) -> usize {
        self.events_before_first_frame + self.events_after_last_frame
    }
}

pub fn parse_event_line(line: &str) -> std::result::Result<Event, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(format!(
            "expected 4 fields \"t x y p\", found field count {}",
            fields.len()
        ));
    }
    let t: f64 = fields[0]
        .parse()
        .map_err(|_| format!("unparsable timestamp {:?}", fields[0]))?;
    if !t.is_finite() || t < 0.0 {
        return Err(format!("timestamp {t} must be finite and non-negative"));
    }
    let x: u32 = fields[1]
        .parse()
        .map_err(|_| format!("unparsable x coordinate {:?}", fields[1]))?;
    let y: u32 = fields[2]
        .parse()
        .map_err(|_| format!("unparsable y coordinate {:?}", fields[2]))?;
    let polarity = match fields[3] {
        "1" => Polarity::On,
        "0" => Polarity::Off,
        other => return Err(format!("polarity must be 0 or 1, found {other:?}")),
    };
    Ok(Event { t, x, y, polarity })
}

/// Shortest decimal that parses back to the same timestamp.
pub fn format_event_line(event: &Event) -> String {
    let p = match event.polarity {
        Polarity::On => 1,
        Polarity::Off => 0,
    };
    format!("{} {} {} {}", event.t, event.x, event.y, p)
}

/// Reads an event file. Blank lines are skipped; ordering is validated.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_event_line(&line).map_err(|message| Error::Parse {
            line: i + 1,
            message,
        })?;
        if event.t < previous {
            return Err(Error::Parse {
                line: i + 1,
                message: format!(
                    "timestamp {} precedes previous event at {previous}",
                    event.t
                ),
            });
        }
        previous = event.t;
        events.push(event);
    }
    Ok(events)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        writeln!(w, "{}", format_event_line(e)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(timestamp, absolute image path)` entries of an images index.
pub fn read_images_index(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, char::is_whitespace);
        let ts = parts.next().unwrap_or_default();
        let rel = parts.next().map(str::trim).unwrap_or_default();
        if rel.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected \"timestamp path\", found {line:?}"),
            });
        }
        let t: f64 = ts.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("unparsable frame timestamp {ts:?}"),
        })?;
        entries.push((t, base.join(rel)));
    }
    Ok(entries)
}

/// Loads all frames listed in an images index.
pub fn load_frames(index_path: &Path) -> Result<Vec<IntensityFrame>> {
    let entries = read_images_index(index_path)?;
    let mut frames: Vec<IntensityFrame> = Vec::with_capacity(entries.len());
    for (index, (t, path)) in entries.into_iter().enumerate() {
        let img = pgm::read_pgm(&path)?;
        if let Some(first) = frames.first() {
            if first.width() != img.width || first.height() != img.height {
                return Err(Error::Format {
                    path,
                    message: format!(
                        "resolution {}x{} differs from the first frame's {}x{}",
                        img.width,
                        img.height,
                        first.width(),
                        first.height()
                    ),
                });
            }
        }
        if let Some(prev) = frames.last() {
            if !(t > prev.timestamp()) {
                return Err(Error::NonMonotoneFrames {
                    index,
                    t,
                    previous: prev.timestamp(),
                });
            }
        }
        frames.push(IntensityFrame::from_u8(
            t,
            img.width,
            img.height,
            &img.pixels,
        )?);
    }
    Ok(frames)
}

/// Writes frames as `frame_NNNNN.pgm` plus an `images.txt` index.
pub fn write_frames(dir: &Path, frames: &[IntensityFrame]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::new();
    for (i, f) in frames.iter().enumerate() {
        let name = format!("frame_{i:05}.pgm");
        pgm::write_pgm(&dir.join(&name), &frame_to_gray(f))?;
        index.push_str(&format!("{} {}\n", f.timestamp(), name));
    }
    let index_path = dir.join("images.txt");
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    Ok(index_path)
}

pub fn frame_to_gray(frame: &IntensityFrame) -> GrayImage {
    GrayImage {
        width: frame.width(),
        height: frame.height(),
        pixels: frame.to_u8(),
    }
}

/// Loads an events file and an images index into a [`Dataset`].
///
/// Events outside `[first frame, last frame]` are kept and counted in the
/// report.
pub fn load_dataset(events_path: &Path, images_index_path: &Path) -> Result<(Dataset, LoadReport)> {
    let frames = load_frames(images_index_path)?;
    let (width, height) = match frames.first() {
        Some(f) => (f.width(), f.height()),
        None => {
            return Err(Error::Format {
                path: images_index_path.to_path_buf(),
                message: "images index lists no frames".into(),
            })
        }
    };
    let events = read_events(events_path)?;
    let stream = EventStream::new(width, height, events)?;
    let first = frames[0].timestamp();
    let last = frames[frames.len() - 1].timestamp();
    let report = LoadReport {
        events: stream.len(),
        frames: frames.len(),
        events_before_first_frame: stream.events().iter().filter(|e| e.t < first).count(),
        events_after_last_frame: stream.events().iter().filter(|e| e.t > last).count(),
    };
    Ok((Dataset::new(stream, frames)?, report))
}
