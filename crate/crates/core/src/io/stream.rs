use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, open, read_manifest, write_err, FileKind, FileManifest, FormatError, LineReader};
use crate::baselines::{Detection, DetectionFrame};

#[derive(Serialize)]
struct FrameOut<'a> {
    frame: u64,
    detections: &'a [Detection],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameIn {
    frame: u64,
    detections: Vec<Detection>,
}

/// Lazily parses detection frames, one line at a time.
pub struct StreamReader<R> {
    lines: LineReader<R>,
    manifest: FileManifest,
    components: Option<usize>,
    last_frame: Option<u64>,
    failed: bool,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Result<Self, FormatError> {
        let mut lines = LineReader::new(reader);
        let manifest = read_manifest(&mut lines, FileKind::Stream)?;
        Ok(Self {
            lines,
            manifest,
            components: None,
            last_frame: None,
            failed: false,
        })
    }

    /// Requires every detected state to have `components` entries.
    pub fn with_components(mut self, components: usize) -> Self {
        self.components = Some(components);
        self
    }

    pub fn manifest(&self) -> &FileManifest {
        &self.manifest
    }

    fn parse(&mut self, line: usize, text: &str) -> Result<DetectionFrame, FormatError> {
        let record: FrameIn =
            serde_json::from_str(text).map_err(|e| FormatError::line(line, format!("invalid frame record: {e}")))?;
        if let Some(prev) = self.last_frame {
            if record.frame <= prev {
                return Err(FormatError::line(
                    line,
                    format!("frame {} does not follow frame {prev}", record.frame),
                ));
            }
        }
        for (i, d) in record.detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(FormatError::line(
                    line,
                    format!("detection {i}: confidence {} outside [0, 1]", d.confidence),
                ));
            }
            let expected = *self.components.get_or_insert(d.state.len());
            if d.state.len() != expected {
                return Err(FormatError::line(
                    line,
                    format!("detection {i}: state has {} components, expected {expected}", d.state.len()),
                ));
            }
            if let Some(b) = d.bbox {
                if b.iter().any(|v| !(0.0..=1.0).contains(v)) || b[0] > b[2] || b[1] > b[3] {
                    return Err(FormatError::line(line, format!("detection {i}: invalid box {b:?}")));
                }
            }
        }
        self.last_frame = Some(record.frame);
        Ok(DetectionFrame::at(record.frame, self.manifest.fps(), record.detections))
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<DetectionFrame, FormatError>;

    /// Stops after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let result = match self.lines.next_line() {
            Ok(None) => return None,
            Ok(Some((line, text))) => self.parse(line, &text),
            Err(e) => Err(e),
        };
        self.failed = result.is_err();
        Some(result)
    }
}

pub fn parse_stream<R: BufRead>(reader: R) -> Result<(FileManifest, Vec<DetectionFrame>), FormatError> {
    let mut r = StreamReader::new(reader)?;
    let frames = r.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((r.manifest, frames))
}

pub fn read_stream(path: &Path) -> Result<(FileManifest, Vec<DetectionFrame>), FormatError> {
    parse_stream(open(path)?)
}

pub fn write_stream_to<W: Write>(mut w: W, manifest: &FileManifest, frames: &[DetectionFrame]) -> Result<(), FormatError> {
    let mut manifest = manifest.clone();
    manifest.kind = FileKind::Stream;
    let line = serde_json::to_string(&manifest).map_err(|e| FormatError::Other(e.to_string()))?;
    writeln!(w, "{line}").map_err(write_err)?;
    for f in frames {
        let line = serde_json::to_string(&FrameOut {
            frame: f.frame,
            detections: &f.detections,
        })
        .map_err(|e| FormatError::Other(e.to_string()))?;
        writeln!(w, "{line}").map_err(write_err)?;
    }
    w.flush().map_err(write_err)
}

pub fn write_stream(path: &Path, manifest: &FileManifest, frames: &[DetectionFrame]) -> Result<(), FormatError> {
    write_stream_to(create(path)?, manifest, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AssemblyState;

    const HEADER: &str = r#"{"format_version":"1.0.0","kind":"stream","fps":10.0,"recording_id":"r1"}"#;

    fn parse(body: &str) -> Result<(FileManifest, Vec<DetectionFrame>), FormatError> {
        parse_stream(format!("{HEADER}\n{body}").as_bytes())
    }

    #[test]
    fn three_frame_round_trip() {
        let frames = vec![
            DetectionFrame::at(0, 10.0, vec![]),
            DetectionFrame::at(
                1,
                10.0,
                vec![Detection {
                    state: AssemblyState::parse("1,-1,0").unwrap(),
                    confidence: 0.8125,
                    bbox: Some([0.1, 0.2, 0.5, 0.9]),
                }],
            ),
            DetectionFrame::at(
                7,
                10.0,
                vec![
                    Detection {
                        state: AssemblyState::parse("1,1,0").unwrap(),
                        confidence: 0.3,
                        bbox: None,
                    },
                    Detection {
                        state: AssemblyState::parse("1,0,0").unwrap(),
                        confidence: 1.0,
                        bbox: None,
                    },
                ],
            ),
        ];
        let manifest = FileManifest::new(FileKind::Stream, 10.0, "r1");
        let mut buf = Vec::new();
        write_stream_to(&mut buf, &manifest, &frames).unwrap();
        let (m, back) = parse_stream(buf.as_slice()).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back, frames);
    }

    #[test]
    fn bad_confidence_names_line() {
        let err = parse(r#"{"frame":0,"detections":[{"state":"1,0","confidence":1.7}]}"#).unwrap_err();
        assert_eq!(err.line_number(), Some(2));
        assert!(err.to_string().contains("1.7"));
    }

    #[test]
    fn out_of_order_frames() {
        let err = parse("{\"frame\":3,\"detections\":[]}\n{\"frame\":2,\"detections\":[]}").unwrap_err();
        assert_eq!(err.line_number(), Some(3));
    }

    #[test]
    fn manifest_problems() {
        assert!(parse_stream("".as_bytes()).is_err());
        let wrong_kind = r#"{"format_version":"1.0.0","kind":"report","fps":10.0,"recording_id":"r"}"#;
        assert_eq!(parse_stream(wrong_kind.as_bytes()).unwrap_err().line_number(), Some(1));
        let v2 = r#"{"format_version":"2.0.0","kind":"stream","fps":10.0,"recording_id":"r"}"#;
        assert!(parse_stream(v2.as_bytes()).is_err());
        let no_fps = r#"{"format_version":"1.0.0","kind":"stream","recording_id":"r"}"#;
        assert!(parse_stream(no_fps.as_bytes()).is_err());
    }

    #[test]
    fn inconsistent_state_lengths() {
        let err = parse(
            "{\"frame\":0,\"detections\":[{\"state\":\"1,0\",\"confidence\":0.5}]}\n{\"frame\":1,\"detections\":[{\"state\":\"1,0,0\",\"confidence\":0.5}]}",
        )
        .unwrap_err();
        assert_eq!(err.line_number(), Some(3));
    }

    #[test]
    fn lazy_reader_stops_at_error() {
        let text = format!("{HEADER}\n{{\"frame\":0,\"detections\":[]}}\nnot json\n{{\"frame\":5,\"detections\":[]}}\n");
        let items: Vec<_> = StreamReader::new(text.as_bytes()).unwrap().collect();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_ok());
        assert_eq!(items[1].as_ref().unwrap_err().line_number(), Some(3));
    }
}
