//! MOTChallenge text rows: `frame,id,x,y,w,h,conf,class,visibility`.
//!
//! Ten-column rows (the older layout with a trailing world coordinate) are
//! accepted on read; only the first nine fields are used.

use std::fmt::Write as _;
use std::path::Path;

use crate::association::TrackOutput;
use crate::error::{Error, Result};
use crate::evaluation::Sequence;
use crate::geometry::BBox;
use crate::heatmap::{AnnotatedObject, FrameAnnotations};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    pub conf: f64,
    /// 1-based class label, or -1 when unused.
    pub class: i64,
    /// Visible fraction, or -1 when unused.
    pub visibility: f64,
}

impl MotRow {
    pub fn to_line(&self) -> String {
        let b = &self.bbox;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.frame, self.id, b.x1, b.y1, b.w, b.h, self.conf, self.class, self.visibility
        )
    }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {name} from {:?}", s.trim()),
    })
}

pub fn parse_row(line_no: usize, line: &str) -> Result<MotRow> {
    let cols: Vec<&str> = line.split(',').collect();
    if cols.len() != 9 && cols.len() != 10 {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("expected 9 comma-separated fields, got {}", cols.len()),
        });
    }
    let frame: u32 = field(line_no, "frame", cols[0])?;
    if frame < 1 {
        return Err(Error::Parse {
            line: line_no,
            msg: "frame numbers start at 1".into(),
        });
    }
    let id: u64 = field(line_no, "id", cols[1])?;
    let bbox = BBox::new(
        field(line_no, "x", cols[2])?,
        field(line_no, "y", cols[3])?,
        field(line_no, "w", cols[4])?,
        field(line_no, "h", cols[5])?,
    )
    .map_err(|e| Error::Parse {
        line: line_no,
        msg: e.to_string(),
    })?;
    Ok(MotRow {
        frame,
        id,
        bbox,
        conf: field(line_no, "conf", cols[6])?,
        class: field(line_no, "class", cols[7])?,
        visibility: field(line_no, "visibility", cols[8])?,
    })
}

/// Parses every non-blank line, reporting 1-based line numbers on error.
pub fn parse_rows(text: &str) -> Result<Vec<MotRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_row(i + 1, l))
        .collect()
}

pub fn format_rows(rows: &[MotRow]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(out, "{}", r.to_line()).expect("writing to a string");
    }
    out
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRow>> {
    parse_rows(&super::read_text(path)?).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn write_mot(path: &Path, rows: &[MotRow]) -> Result<()> {
    super::write_bytes(path, format_rows(rows).as_bytes())
}

/// Ground-truth rows for a scene: confidence 1, class `class_id + 1`,
/// visibility 1.
pub fn gt_rows(frames: &[FrameAnnotations]) -> Vec<MotRow> {
    frames
        .iter()
        .flat_map(|f| {
            f.objects.iter().map(move |o| MotRow {
                frame: f.frame,
                id: o.track_id,
                bbox: o.bbox,
                conf: 1.0,
                class: o.class_id as i64 + 1,
                visibility: 1.0,
            })
        })
        .collect()
}

/// Inverse of [`gt_rows`]. Rows with class <= 0 map to class 0. Frames are
/// returned in ascending order, one entry per frame in `first..=last`.
pub fn annotations_from_rows(rows: &[MotRow]) -> Result<Vec<FrameAnnotations>> {
    let Some(last) = rows.iter().map(|r| r.frame).max() else {
        return Ok(Vec::new());
    };
    let first = rows.iter().map(|r| r.frame).min().expect("non-empty");
    let mut frames: Vec<FrameAnnotations> = (first..=last)
        .map(|frame| FrameAnnotations {
            frame,
            objects: Vec::new(),
        })
        .collect();
    for r in rows {
        frames[(r.frame - first) as usize]
            .objects
            .push(AnnotatedObject {
                track_id: r.id,
                class_id: (r.class - 1).max(0) as usize,
                bbox: r.bbox,
            });
    }
    for f in &frames {
        f.validate()?;
    }
    Ok(frames)
}

pub fn result_rows(outputs: &[TrackOutput]) -> Vec<MotRow> {
    outputs
        .iter()
        .map(|o| MotRow {
            frame: o.frame,
            id: o.id,
            bbox: o.bbox,
            conf: o.score,
            class: -1,
            visibility: -1.0,
        })
        .collect()
}

pub fn rows_to_sequence(rows: &[MotRow]) -> Result<Sequence> {
    let mut s = Sequence::new();
    for r in rows {
        s.push(r.frame, r.id, r.bbox)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_row() {
        let r = parse_row(1, "1,3,10,20,40,100,1,-1,-1").unwrap();
        assert_eq!((r.frame, r.id), (1, 3));
        assert_eq!(r.bbox, BBox::new(10.0, 20.0, 40.0, 100.0).unwrap());
        assert_eq!((r.class, r.visibility), (-1, -1.0));
        assert_eq!(r.to_line(), "1,3,10,20,40,100,1,-1,-1");
    }

    #[test]
    fn ten_columns_accepted() {
        let r = parse_row(1, "2,1,1.5,2,3,4,0.9,-1,-1,-1").unwrap();
        assert_eq!(r.frame, 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "1,1,0,0,1,1,1,-1,-1\n\n1,2,0,0,x,1,1,-1,-1\n";
        match parse_rows(text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains('w'));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse_row(1, "1,2,3").is_err());
        assert!(parse_row(1, "0,1,0,0,1,1,1,-1,-1").is_err());
        assert!(parse_row(1, "1,1,0,0,-1,1,1,-1,-1").is_err());
    }

    #[test]
    fn floats_round_trip_in_order() {
        let rows = vec![
            MotRow {
                frame: 2,
                id: 9,
                bbox: BBox::new(0.1 + 0.2, 1.0 / 3.0, 7.25, 1e-3).unwrap(),
                conf: 0.875,
                class: -1,
                visibility: -1.0,
            },
            MotRow {
                frame: 1,
                id: 4,
                bbox: BBox::new(5.0, 6.0, 7.0, 8.0).unwrap(),
                conf: 1.0,
                class: 2,
                visibility: 1.0,
            },
        ];
        assert_eq!(parse_rows(&format_rows(&rows)).unwrap(), rows);
    }

    #[test]
    fn gt_rows_invert() {
        let ann = vec![
            FrameAnnotations::new(
                1,
                vec![AnnotatedObject {
                    track_id: 1,
                    class_id: 2,
                    bbox: BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(),
                }],
            )
            .unwrap(),
            FrameAnnotations::new(2, vec![]).unwrap(),
            FrameAnnotations::new(
                3,
                vec![AnnotatedObject {
                    track_id: 1,
                    class_id: 2,
                    bbox: BBox::new(1.0, 2.0, 3.0, 4.0).unwrap(),
                }],
            )
            .unwrap(),
        ];
        let rows = gt_rows(&ann);
        assert_eq!(rows[0].class, 3);
        assert_eq!(annotations_from_rows(&rows).unwrap(), ann);
    }
}
