use std::time::Instant;

use minuteman_core::doc::{
    extract_segment, Author, DocId, EditOp, Line, LineAttrs, LineDoc, Operation, SegmentRange,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle;

fn lines_from(seqs: &[Option<u64>]) -> Vec<Line> {
    seqs.iter()
        .enumerate()
        .map(|(i, &s)| Line {
            text: format!("line {i}"),
            attrs: LineAttrs {
                utt_seq: s,
                summary_id: None,
            },
            author: Author::System,
        })
        .collect()
}

fn compare(lines: &[Line], start: u64, end: u64) -> Result<(), String> {
    let seqs: Vec<Option<u64>> = lines.iter().map(|l| l.attrs.utt_seq).collect();
    let want = oracle::extract(&seqs, start, end);
    let got = extract_segment(lines, SegmentRange::new(start, end).unwrap());
    let want_text = want
        .iter()
        .map(|&i| lines[i].text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    if got.line_indices != want || got.text != want_text {
        return Err(format!(
            "seqs {seqs:?} range ({start},{end}): got {:?}, oracle {want:?}",
            got.line_indices
        ));
    }
    Ok(())
}

/// Every document of up to 8 lines where each line has no number or a
/// number from 1..=8 increasing down the page, against every range.
fn exhaustive() -> Result<usize, String> {
    let mut cases = 0;
    for n in 0..=8usize {
        for mask in 0u32..(1 << n) {
            let k = mask.count_ones();
            for values in (0u32..256).filter(|v| v.count_ones() == k) {
                let mut numbers = (1..=8u64).filter(|b| values & (1 << (b - 1)) != 0);
                let seqs: Vec<Option<u64>> = (0..n)
                    .map(|i| (mask & (1 << i) != 0).then(|| numbers.next().unwrap()))
                    .collect();
                let lines = lines_from(&seqs);
                for s in 1..=9 {
                    for e in s..=9 {
                        compare(&lines, s, e)?;
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(cases)
}

fn line_spans(doc: &LineDoc) -> Vec<(usize, usize)> {
    let mut pos = 0;
    doc.lines()
        .iter()
        .map(|l| {
            let len = l.text.chars().count();
            let span = (pos, len);
            pos += len + 1;
            span
        })
        .collect()
}

/// One random user edit against the head of `doc`.
fn random_edit(rng: &mut ChaCha8Rng, doc: &mut LineDoc) {
    let spans = line_spans(doc);
    let total = doc.len_chars();
    let mut op = Operation::new();
    if spans.is_empty() {
        op.insert("typed\n");
    } else {
        let i = rng.random_range(0..spans.len());
        let (start, len) = spans[i];
        match rng.random_range(0..6) {
            // delete the whole line
            0 => {
                op.retain(start)
                    .delete(len + 1)
                    .retain(total - start - len - 1);
            }
            // new unnumbered line above
            1 => {
                op.retain(start)
                    .insert("a correction\n")
                    .retain(total - start);
            }
            // change text inside the line
            2 => {
                let at = start + rng.random_range(0..=len);
                op.retain(at).insert(" fixed").retain(total - at);
            }
            // join with the next line
            3 => {
                op.retain(start + len)
                    .delete(1)
                    .retain(total - start - len - 1);
            }
            // cut and paste elsewhere; the pasted copy has no number
            4 => {
                let text = doc.lines()[i].text.clone();
                let j = rng.random_range(0..spans.len());
                let (to, _) = spans[j];
                if to <= start {
                    op.retain(to)
                        .insert(&format!("{text}\n"))
                        .retain(start - to)
                        .delete(len + 1)
                        .retain(total - start - len - 1);
                } else {
                    op.retain(start)
                        .delete(len + 1)
                        .retain(to - start - len - 1)
                        .insert(&format!("{text}\n"))
                        .retain(total - to);
                }
            }
            // blank the line's text
            _ => {
                op.retain(start).delete(len).retain(total - start - len);
            }
        }
    }
    let edit = EditOp {
        doc_id: DocId::Transcript,
        base_revision: doc.revision(),
        author: Author::user("tester"),
        components: op,
    };
    doc.apply_edit(edit)
        .expect("edit is built against the head");
}

fn random_cases(count: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE7);
    for case in 0..count {
        let lines: Vec<Line> = if case % 2 == 0 {
            // numbered appends followed by user edits
            let mut doc = LineDoc::new(DocId::Transcript);
            let mut seq = 0;
            for _ in 0..rng.random_range(5..40) {
                seq += rng.random_range(1..3);
                doc.append_line(&format!("speaker:  words {seq}"), LineAttrs::utterance(seq));
            }
            for _ in 0..rng.random_range(0..12) {
                random_edit(&mut rng, &mut doc);
            }
            doc.lines().to_vec()
        } else {
            // arbitrary numbering: shuffled, repeated, missing
            let n = rng.random_range(9..60);
            let mut seqs: Vec<Option<u64>> = (0..n)
                .map(|_| rng.random_bool(0.8).then(|| rng.random_range(1..70)))
                .collect();
            if rng.random_bool(0.5) {
                seqs.shuffle(&mut rng);
            } else {
                seqs.sort();
            }
            lines_from(&seqs)
        };
        let max = lines
            .iter()
            .filter_map(|l| l.attrs.utt_seq)
            .max()
            .unwrap_or(1)
            + 2;
        let s = rng.random_range(1..=max);
        let e = rng.random_range(s..=max + 1);
        compare(&lines, s, e)?;
    }
    Ok(())
}

pub fn check() -> Result<String, String> {
    let started = Instant::now();
    let exhaustive = exhaustive()?;
    random_cases(10_000)?;
    let secs = started.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s, limit 60s"));
    }
    Ok(format!(
        "{exhaustive} exhaustive and 10000 random cases agree"
    ))
}
