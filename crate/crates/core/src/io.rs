//! File formats: binary PGM/PPM frames and line-oriented text records.
//!
//! Text files start with a header line
//! `# ringtrack-<kind> v1 columns=<c1,c2,...> size=WxH coords=<convention>`
//! followed by one whitespace-separated record per line. Coordinates have their
//! origin at the top-left pixel center, x to the right, y down, and pixel
//! centers at integer values. Further `#` lines and blank lines are ignored.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::metrics::PointRecord;
use crate::tracker::{Prediction, QueryPoint};

pub const FORMAT_VERSION: &str = "v1";
pub const COORDS: &str = "top-left,x-right,y-down,integer-centers";
const MAXVAL: u32 = 65535;

pub fn frame_file_name(index: u64, channels: usize) -> String {
    let ext = if channels == 3 { "ppm" } else { "pgm" };
    format!("frame_{index:06}.{ext}")
}

/// Encodes as 16-bit binary PGM (gray) or PPM (RGB).
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{MAXVAL}\n", frame.width(), frame.height()).into_bytes();
    out.reserve(frame.data().len() * 2);
    for v in frame.data() {
        let q = (v * MAXVAL as f32).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Decodes binary PGM/PPM with any maxval up to 65535.
pub fn decode_frame(bytes: &[u8], index: u64, path: &Path) -> Result<Frame> {
    let bad = |msg: &str| Error::parse(path, 1, msg);
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other:?}"))),
    };
    let mut number =
        |what: &str| -> Result<usize> { token()?.parse::<usize>().map_err(|_| bad(&format!("bad {what}"))) };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > MAXVAL as usize {
        return Err(bad(&format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = &bytes[(pos + 1).min(bytes.len())..];
    let wide = maxval > 255;
    let count = width * height * channels;
    let need = count * if wide { 2 } else { 1 };
    if raster.len() < need {
        return Err(bad(&format!("raster has {} bytes, expected {need}", raster.len())));
    }
    let scale = maxval as f32;
    let data = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f32 / scale).min(1.0))
            .collect()
    } else {
        raster[..need].iter().map(|&b| (b as f32 / scale).min(1.0)).collect()
    };
    Frame::new(width, height, channels, data, index)
}

pub fn write_frame(dir: &Path, frame: &Frame) -> Result<PathBuf> {
    let path = dir.join(frame_file_name(frame.index(), frame.channels()));
    std::fs::write(&path, encode_frame(frame)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_frame(path: &Path, index: u64) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&bytes, index, path)
}

/// Reads every `frame_NNNNNN.{pgm,ppm}` in `dir`, ordered by number. Numbers
/// must run 0, 1, 2, ... without gaps.
pub fn read_sequence(dir: &Path) -> Result<Vec<Frame>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".pgm").or_else(|| name.strip_suffix(".ppm")) else {
            continue;
        };
        if let Some(n) = stem.strip_prefix("frame_").and_then(|n| n.parse::<u64>().ok()) {
            numbered.push((n, path));
        }
    }
    numbered.sort();
    let mut frames = Vec::with_capacity(numbered.len());
    for (expected, (n, path)) in numbered.into_iter().enumerate() {
        if n != expected as u64 {
            return Err(Error::InvalidFrame(format!(
                "{}: expected frame number {expected}",
                path.display()
            )));
        }
        frames.push(read_frame(&path, n)?);
    }
    if frames.is_empty() {
        return Err(Error::InvalidFrame(format!("{}: no frame files", dir.display())));
    }
    Ok(frames)
}

/// Which record file, and its column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    GroundTruth,
    Queries,
    Predictions,
}

impl RecordKind {
    fn name(self) -> &'static str {
        match self {
            RecordKind::GroundTruth => "gt",
            RecordKind::Queries => "queries",
            RecordKind::Predictions => "predictions",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            RecordKind::GroundTruth => &["t", "id", "x", "y", "visible"],
            RecordKind::Queries => &["t", "x", "y"],
            RecordKind::Predictions => &["t", "id", "x", "y", "visible", "visibility", "confidence"],
        }
    }

    fn header(self, size: (usize, usize)) -> String {
        format!(
            "# ringtrack-{} {FORMAT_VERSION} columns={} size={}x{} coords={COORDS}\n",
            self.name(),
            self.columns().join(","),
            size.0,
            size.1
        )
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub t: u64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub visibility: f32,
    pub confidence: f32,
}

impl PredictionRecord {
    pub fn point(&self) -> PointRecord {
        PointRecord {
            t: self.t,
            id: self.id,
            x: self.x,
            y: self.y,
            visible: self.visible,
        }
    }
}

/// Flattens tracker output; `visible` is the tracker's thresholded flag.
pub fn prediction_records(predictions: &[Prediction]) -> Vec<PredictionRecord> {
    predictions
        .iter()
        .flat_map(|p| {
            p.tracks.iter().map(move |tr| PredictionRecord {
                t: p.frame,
                id: tr.id,
                x: tr.position[0],
                y: tr.position[1],
                visible: tr.visible,
                visibility: tr.visibility,
                confidence: tr.confidence,
            })
        })
        .collect()
}

/// Parsed body of a record file plus the frame size from its header.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile<T> {
    pub size: (usize, usize),
    pub records: Vec<T>,
}

fn flag(v: bool) -> u8 {
    u8::from(v)
}

pub fn format_ground_truth(size: (usize, usize), records: &[PointRecord]) -> String {
    let mut s = RecordKind::GroundTruth.header(size);
    for r in records {
        let _ = writeln!(s, "{} {} {} {} {}", r.t, r.id, r.x, r.y, flag(r.visible));
    }
    s
}

pub fn format_queries(size: (usize, usize), queries: &[QueryPoint]) -> String {
    let mut s = RecordKind::Queries.header(size);
    for q in queries {
        let _ = writeln!(s, "{} {} {}", q.t, q.x, q.y);
    }
    s
}

pub fn format_predictions(size: (usize, usize), records: &[PredictionRecord]) -> String {
    let mut s = RecordKind::Predictions.header(size);
    for r in records {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            r.t,
            r.id,
            r.x,
            r.y,
            flag(r.visible),
            r.visibility,
            r.confidence
        );
    }
    s
}

struct Line<'a> {
    path: &'a Path,
    number: usize,
    fields: Vec<&'a str>,
}

impl Line<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.number, msg)
    }

    fn get<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T> {
        self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("bad {name} {:?}", self.fields[i])))
    }

    fn finite(&self, i: usize, name: &str) -> Result<f64> {
        let v: f64 = self.get(i, name)?;
        if !v.is_finite() {
            return Err(self.err(format!("{name} is not finite")));
        }
        Ok(v)
    }

    fn flag(&self, i: usize, name: &str) -> Result<bool> {
        match self.fields[i] {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(self.err(format!("{name} must be 0 or 1, got {other:?}"))),
        }
    }
}

fn parse_size(s: &str) -> Option<(usize, usize)> {
    let (w, h) = s.split_once('x')?;
    Some((w.parse().ok()?, h.parse().ok()?))
}

/// Validates the header and splits the body into lines of the right arity.
fn parse_records<'a>(text: &'a str, path: &'a Path, kind: RecordKind) -> Result<((usize, usize), Vec<Line<'a>>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut parts = header.split_whitespace();
    let magic = format!("ringtrack-{}", kind.name());
    if parts.next() != Some("#") || parts.next() != Some(magic.as_str()) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header starting with \"# {magic}\""),
        ));
    }
    if parts.next() != Some(FORMAT_VERSION) {
        return Err(Error::parse(
            path,
            1,
            format!("unsupported version, expected {FORMAT_VERSION}"),
        ));
    }
    let mut size = None;
    let mut columns = None;
    for part in parts {
        if let Some(v) = part.strip_prefix("size=") {
            size = Some(parse_size(v).ok_or_else(|| Error::parse(path, 1, format!("bad size {v:?}")))?);
        } else if let Some(v) = part.strip_prefix("columns=") {
            columns = Some(v);
        }
    }
    let expected = kind.columns().join(",");
    if columns != Some(expected.as_str()) {
        return Err(Error::parse(path, 1, format!("expected columns={expected}")));
    }
    let size = size.ok_or_else(|| Error::parse(path, 1, "missing size=WxH"))?;
    let mut body = Vec::new();
    for (number, raw) in lines {
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != kind.columns().len() {
            return Err(Error::parse(
                path,
                number,
                format!("expected {} fields, got {}", kind.columns().len(), fields.len()),
            ));
        }
        body.push(Line { path, number, fields });
    }
    Ok((size, body))
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<RecordFile<PointRecord>> {
    let (size, lines) = parse_records(text, path, RecordKind::GroundTruth)?;
    let records = lines
        .iter()
        .map(|l| {
            Ok(PointRecord {
                t: l.get(0, "t")?,
                id: l.get(1, "id")?,
                x: l.finite(2, "x")?,
                y: l.finite(3, "y")?,
                visible: l.flag(4, "visible")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RecordFile { size, records })
}

pub fn parse_queries(text: &str, path: &Path) -> Result<RecordFile<QueryPoint>> {
    let (size, lines) = parse_records(text, path, RecordKind::Queries)?;
    let records = lines
        .iter()
        .map(|l| Ok(QueryPoint::new(l.get(0, "t")?, l.finite(1, "x")?, l.finite(2, "y")?)))
        .collect::<Result<_>>()?;
    Ok(RecordFile { size, records })
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<RecordFile<PredictionRecord>> {
    let (size, lines) = parse_records(text, path, RecordKind::Predictions)?;
    let records = lines
        .iter()
        .map(|l| {
            let score = |i: usize, name: &str| -> Result<f32> {
                let v: f32 = l.get(i, name)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(l.err(format!("{name} {v} outside [0, 1]")));
                }
                Ok(v)
            };
            Ok(PredictionRecord {
                t: l.get(0, "t")?,
                id: l.get(1, "id")?,
                x: l.finite(2, "x")?,
                y: l.finite(3, "y")?,
                visible: l.flag(4, "visible")?,
                visibility: score(5, "visibility")?,
                confidence: score(6, "confidence")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RecordFile { size, records })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<RecordFile<PointRecord>> {
    parse_ground_truth(&read_text(path)?, path)
}

pub fn read_queries(path: &Path) -> Result<RecordFile<QueryPoint>> {
    parse_queries(&read_text(path)?, path)
}

pub fn read_predictions(path: &Path) -> Result<RecordFile<PredictionRecord>> {
    parse_predictions(&read_text(path)?, path)
}
