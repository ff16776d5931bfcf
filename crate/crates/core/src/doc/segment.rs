//! Segment extraction by utterance sequence number, and word counting.

use serde::{Deserialize, Serialize};

use super::{DocError, Line};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRange {
    pub start_seq: u64,
    pub end_seq: u64,
}

impl SegmentRange {
    pub fn new(start_seq: u64, end_seq: u64) -> Result<Self, DocError> {
        if start_seq == 0 || start_seq > end_seq {
            return Err(DocError::InvalidRange { start_seq, end_seq });
        }
        Ok(Self { start_seq, end_seq })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    /// Indices of the included lines in the scanned document.
    pub line_indices: Vec<usize>,
}

impl Segment {
    pub fn is_empty(&self) -> bool {
        self.line_indices.is_empty()
    }
}

/// Single forward scan over the lines.
///
/// Recording starts at the first line whose `utt_seq >= start_seq`. While
/// recording every line is taken, attribute-less ones included. The line with
/// `utt_seq == end_seq` is taken and ends the scan; a line with a higher
/// `utt_seq` ends the scan without being taken.
pub fn extract_segment(lines: &[Line], range: SegmentRange) -> Segment {
    let mut seg = Segment::default();
    let mut recording = false;
    for (i, line) in lines.iter().enumerate() {
        let seq = line.attrs.utt_seq;
        if !recording {
            match seq {
                Some(s) if s >= range.start_seq => recording = true,
                _ => continue,
            }
        }
        if let Some(s) = seq {
            if s > range.end_seq {
                break;
            }
        }
        seg.line_indices.push(i);
        if seq == Some(range.end_seq) {
            break;
        }
    }
    seg.text = seg
        .line_indices
        .iter()
        .map(|&i| lines[i].text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    seg
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
