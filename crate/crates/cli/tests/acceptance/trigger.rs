use minuteman_core::events::{parse_log, Event};
use minuteman_core::replay::{replay, Manifest, ReplayOptions};
use minuteman_core::PointKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, Utt};

const THRESHOLD: usize = 100;

fn text(n: usize, tag: usize) -> String {
    (0..n)
        .map(|j| format!("w{tag}x{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One track "S", one utterance per text, two seconds apart.
fn single_track(words: &[usize]) -> Vec<Utt> {
    words
        .iter()
        .enumerate()
        .map(|(i, &n)| Utt {
            track: "S".into(),
            start_s: 2 * i as u64,
            duration_s: 1,
            text: text(n, i),
        })
        .collect()
}

type Points = Vec<(u64, u64, usize)>;

/// Auto points from a fast replay: `(start_seq, end_seq, words)`, plus the
/// highest appended sequence number.
fn replay_points(utts: &[Utt]) -> Result<(Points, u64), String> {
    let manifest = Manifest::parse(&oracle::manifest_toml(THRESHOLD as u32, utts, ""))
        .map_err(|e| e.to_string())?;
    let out = replay(&manifest, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    let log = parse_log(&out.events).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    let mut last = 0;
    for r in log {
        match r.event {
            Event::PointCreated {
                kind: PointKind::Auto,
                start_seq,
                end_seq,
                words,
                ..
            } => points.push((start_seq, end_seq, words)),
            Event::UtteranceAppended { utt_seq, .. } => last = utt_seq,
            _ => {}
        }
    }
    Ok((points, last))
}

/// Disjoint, contiguous from 1, each at least the threshold, and what is
/// left after the last point stays below it.
fn partition_ok(points: &[(u64, u64, usize)], line_words: &[usize]) -> Result<(), String> {
    let mut next = 1;
    for &(s, e, w) in points {
        if s != next || e < s {
            return Err(format!("range ({s},{e}) does not continue at {next}"));
        }
        let counted: usize = line_words[s as usize - 1..e as usize].iter().sum();
        if w != counted || w < THRESHOLD {
            return Err(format!(
                "range ({s},{e}) has {w} words, lines hold {counted}"
            ));
        }
        next = e + 1;
    }
    let rest: usize = line_words[next as usize - 1..].iter().sum();
    if rest >= THRESHOLD {
        return Err(format!("{rest} unsummarized words after seq {}", next - 1));
    }
    Ok(())
}

fn scripted(text_words: &[usize], expect: &[(u64, u64, usize)]) -> Result<(), String> {
    // the speaker label is a word of its line
    let line_words: Vec<usize> = text_words.iter().map(|n| n + 1).collect();
    let (points, _) = replay_points(&single_track(text_words))?;
    if points != expect {
        return Err(format!("points {points:?}, expected {expect:?}"));
    }
    partition_ok(&points, &line_words)
}

pub fn check() -> Result<String, String> {
    // 16 lines of 6 words then one of 7: 103 words at seq 17; then 12 lines
    // of 8 and one of 5: 101 words at seq 30
    let mut words = vec![5; 16];
    words.push(6);
    words.extend(vec![7; 12]);
    words.push(4);
    scripted(&words, &[(1, 17, 103), (18, 30, 101)])?;

    // 99 words never trigger, 100 do
    scripted(&[10; 9], &[])?;
    let mut hundred = vec![10; 8];
    hundred.push(11);
    scripted(&hundred, &[(1, 9, 100)])?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x7B);
    let mut total_points = 0;
    for case in 0..25 {
        let mut utts = Vec::new();
        for track in ["A", "B"] {
            let mut t = rng.random_range(0..3);
            for _ in 0..rng.random_range(5..15) {
                let duration_s = rng.random_range(1..=6);
                utts.push(Utt {
                    track: track.into(),
                    start_s: t,
                    duration_s,
                    text: text(rng.random_range(1..=40), utts.len()),
                });
                t += duration_s + rng.random_range(1..=4);
            }
        }
        let order = oracle::append_order(&utts);
        let line_words: Vec<usize> = order.iter().map(|u| oracle::words(&u.text) + 1).collect();
        let expect = oracle::auto_points(&line_words, THRESHOLD);
        let (points, last) = replay_points(&utts)?;
        if last as usize != utts.len() {
            return Err(format!(
                "case {case}: {last} of {} utterances appended",
                utts.len()
            ));
        }
        if points != expect {
            return Err(format!("case {case}: points {points:?}, oracle {expect:?}"));
        }
        partition_ok(&points, &line_words).map_err(|e| format!("case {case}: {e}"))?;
        total_points += points.len();
    }
    Ok(format!(
        "(1,17) and (18,30) as scripted, 99 words no point, 100 words one point, {total_points} points over 25 random meetings"
    ))
}
