//! Match interchange files: one per (frame, camera pair).
//!
//! ```text
//! # frame_id=5 camera_a=1 camera_b=4 size_a=1280x720 size_b=1280x720
//! 412.5,300.25,398,310.75,0.93
//! ```
//!
//! Rows are `x_a,y_a,x_b,y_b,confidence` in working-resolution pixels.
//! Any other column count is rejected. Rows with confidence 0 are kept.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mca_core::correspondence::{KeypointMatch, MatchSet, Provenance};
use mca_core::geometry::ImageSize;
use nalgebra::Point2;
use thiserror::Error;

pub const COLUMNS: usize = 5;

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: header: {message}", path.display())]
    Header { path: PathBuf, message: String },
    #[error("{}: row {row}: {message}", path.display())]
    Row {
        path: PathBuf,
        /// 1-based line number in the file.
        row: u64,
        message: String,
    },
}

type Result<T> = std::result::Result<T, InterchangeError>;

pub fn match_file_name(frame_id: u32, camera_a: u32, camera_b: u32) -> String {
    format!("{frame_id:08}_c{camera_a}_c{camera_b}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchHeader {
    pub frame_id: u32,
    pub camera_a: u32,
    pub camera_b: u32,
    pub size_a: ImageSize,
    pub size_b: ImageSize,
}

impl MatchHeader {
    pub fn of(ms: &MatchSet) -> Self {
        Self {
            frame_id: ms.frame_id,
            camera_a: ms.camera_a,
            camera_b: ms.camera_b,
            size_a: ms.size_a,
            size_b: ms.size_b,
        }
    }
}

impl std::fmt::Display for MatchHeader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "# frame_id={} camera_a={} camera_b={} size_a={}x{} size_b={}x{}",
            self.frame_id,
            self.camera_a,
            self.camera_b,
            self.size_a.width,
            self.size_a.height,
            self.size_b.width,
            self.size_b.height
        )
    }
}

fn parse_size(s: &str) -> Option<ImageSize> {
    let (w, h) = s.split_once('x')?;
    Some(ImageSize::new(w.parse().ok()?, h.parse().ok()?))
}

/// Parses the `# key=value ...` header line. Unknown keys are ignored.
pub fn parse_header(line: &str) -> std::result::Result<MatchHeader, String> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| "first line must start with `#`".to_string())?;
    let (mut frame, mut cam_a, mut cam_b, mut size_a, mut size_b) = (None, None, None, None, None);
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("`{token}` is not key=value"))?;
        let bad = || format!("bad value for `{key}`: `{value}`");
        match key {
            "frame_id" => frame = Some(value.parse().map_err(|_| bad())?),
            "camera_a" => cam_a = Some(value.parse().map_err(|_| bad())?),
            "camera_b" => cam_b = Some(value.parse().map_err(|_| bad())?),
            "size_a" => size_a = Some(parse_size(value).ok_or_else(bad)?),
            "size_b" => size_b = Some(parse_size(value).ok_or_else(bad)?),
            _ => {}
        }
    }
    let need = |name: &str| format!("missing `{name}`");
    Ok(MatchHeader {
        frame_id: frame.ok_or_else(|| need("frame_id"))?,
        camera_a: cam_a.ok_or_else(|| need("camera_a"))?,
        camera_b: cam_b.ok_or_else(|| need("camera_b"))?,
        size_a: size_a.ok_or_else(|| need("size_a"))?,
        size_b: size_b.ok_or_else(|| need("size_b"))?,
    })
}

/// Parses a whole file's text; `path` is only used in error messages.
pub fn parse_matches(path: &Path, text: &str) -> Result<MatchSet> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let header = parse_header(first).map_err(|message| InterchangeError::Header {
        path: path.to_path_buf(),
        message,
    })?;
    if header.camera_a == header.camera_b {
        return Err(InterchangeError::Header {
            path: path.to_path_buf(),
            message: format!("camera_a and camera_b are both {}", header.camera_a),
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(body.as_bytes());
    let mut matches = Vec::new();
    for record in reader.records() {
        let row_err = |line: u64, message: String| InterchangeError::Row {
            path: path.to_path_buf(),
            row: line + 1,
            message,
        };
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != COLUMNS {
            return Err(row_err(
                line,
                format!("expected {COLUMNS} columns, found {}", record.len()),
            ));
        }
        let mut v = [0.0f64; COLUMNS];
        for (k, field) in record.iter().enumerate() {
            v[k] = field
                .parse()
                .map_err(|_| row_err(line, format!("`{field}` is not a number")))?;
        }
        let m = KeypointMatch::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3]), v[4])
            .map_err(|e| row_err(line, e.to_string()))?;
        matches.push(m);
    }
    MatchSet::new(
        header.frame_id,
        (header.camera_a, header.size_a),
        (header.camera_b, header.size_b),
        matches,
        Provenance::File,
    )
    .map_err(|e| InterchangeError::Header {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_matches(path: &Path) -> Result<MatchSet> {
    let text = fs::read_to_string(path).map_err(|source| InterchangeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matches(path, &text)
}

/// Serializes with shortest round-trip float formatting, so that loading
/// the text yields bit-identical values.
pub fn format_matches(ms: &MatchSet) -> String {
    let mut out = String::with_capacity(32 * (ms.len() + 2));
    let _ = writeln!(out, "{}", MatchHeader::of(ms));
    for m in &ms.matches {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.pt_a.x, m.pt_a.y, m.pt_b.x, m.pt_b.y, m.confidence
        );
    }
    out
}

pub fn write_matches(path: &Path, ms: &MatchSet) -> Result<()> {
    let io = |source| InterchangeError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, format_matches(ms)).map_err(|source| InterchangeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A directory of interchange files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchDir {
    pub dir: PathBuf,
}

impl MatchDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, frame_id: u32, camera_a: u32, camera_b: u32) -> PathBuf {
        self.dir.join(match_file_name(frame_id, camera_a, camera_b))
    }

    /// `Ok(None)` when the file does not exist.
    pub fn load(&self, frame_id: u32, camera_a: u32, camera_b: u32) -> Result<Option<MatchSet>> {
        let path = self.path_for(frame_id, camera_a, camera_b);
        if !path.exists() {
            return Ok(None);
        }
        let ms = load_matches(&path)?;
        if (ms.frame_id, ms.camera_a, ms.camera_b) != (frame_id, camera_a, camera_b) {
            return Err(InterchangeError::Header {
                path,
                message: format!(
                    "header names frame {} cameras ({}, {}), file name says frame {frame_id} cameras ({camera_a}, {camera_b})",
                    ms.frame_id, ms.camera_a, ms.camera_b
                ),
            });
        }
        Ok(Some(ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "# frame_id=5 camera_a=1 camera_b=4 size_a=1280x720 size_b=1280x720\n";

    fn parse(text: &str) -> Result<MatchSet> {
        parse_matches(Path::new("m.csv"), text)
    }

    #[test]
    fn file_name() {
        assert_eq!(match_file_name(5, 1, 4), "00000005_c1_c4.csv");
    }

    #[test]
    fn empty_body() {
        let ms = parse(HEADER).unwrap();
        assert!(ms.is_empty());
        assert_eq!((ms.frame_id, ms.camera_a, ms.camera_b), (5, 1, 4));
        assert_eq!(ms.size_b, ImageSize::new(1280, 720));
        assert_eq!(ms.provenance, Provenance::File);
        assert!(parse(HEADER.trim_end()).unwrap().is_empty());
    }

    #[test]
    fn one_row() {
        let ms = parse(&format!("{HEADER}10,20,30,40,0.9\n")).unwrap();
        assert_eq!(
            ms.matches,
            vec![KeypointMatch::new(Point2::new(10.0, 20.0), Point2::new(30.0, 40.0), 0.9).unwrap()]
        );
    }

    #[test]
    fn zero_confidence_kept_and_whitespace_tolerated() {
        let ms = parse(&format!("{HEADER} 1, 2, 3, 4, 0\n\n5,6,7,8,1\n")).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms.matches[0].confidence, 0.0);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let cases = [
            (format!("{HEADER}1,2,3,4,0.5\n1,2,3,4,1.5\n"), 3),
            (format!("{HEADER}1,2,3,4\n"), 2),
            (format!("{HEADER}1,2,3,4,0.5,9\n"), 2),
            (format!("{HEADER}1,2,3,4,0.5\n1,2,NaN,4,0.5\n"), 3),
            (format!("{HEADER}1,2,abc,4,0.5\n"), 2),
        ];
        for (text, expected) in cases {
            match parse(&text) {
                Err(InterchangeError::Row { row, .. }) => assert_eq!(row, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn header_errors() {
        for text in [
            "",
            "frame_id=1\n",
            "# frame_id=1 camera_a=1 camera_b=2 size_a=10x10\n",
            "# frame_id=x camera_a=1 camera_b=2 size_a=10x10 size_b=10x10\n",
            "# frame_id=1 camera_a=2 camera_b=2 size_a=10x10 size_b=10x10\n",
            "# frame_id=1 camera_a=1 camera_b=2 size_a=10 size_b=10x10\n",
        ] {
            assert!(matches!(parse(text), Err(InterchangeError::Header { .. })), "{text:?}");
        }
    }

    #[test]
    fn directory_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let md = MatchDir::new(dir.path());
        assert!(md.load(0, 1, 4).unwrap().is_none());
        let ms = parse(&format!("{HEADER}1,2,3,4,0.25\n")).unwrap();
        write_matches(&md.path_for(5, 1, 4), &ms).unwrap();
        assert_eq!(md.load(5, 1, 4).unwrap().unwrap(), ms);
        // header disagreeing with the file name
        write_matches(&md.path_for(6, 1, 4), &ms).unwrap();
        assert!(md.load(6, 1, 4).is_err());
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(rows in prop::collection::vec(
            (-1e4..1e4f64, -1e4..1e4f64, -1e4..1e4f64, -1e4..1e4f64, 0.0..=1.0f64), 0..50)) {
            let matches = rows.iter()
                .map(|&(a, b, c, d, e)| KeypointMatch::new(Point2::new(a, b), Point2::new(c, d), e).unwrap())
                .collect();
            let ms = MatchSet::new(3, (2, ImageSize::new(640, 480)), (7, ImageSize::new(1280, 720)), matches, Provenance::File).unwrap();
            let back = parse(&format_matches(&ms)).unwrap();
            prop_assert_eq!(back, ms);
        }
    }
}
