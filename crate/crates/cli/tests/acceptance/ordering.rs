use std::path::Path;

use minuteman_core::events::{parse_log, Event};
use minuteman_core::replay::{replay, Manifest, ReplayOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, Utt};

/// Appended utterances in sequence order must be sorted by end time, then
/// track id, and the transcript must list them in that order.
fn check_log(events: &str, transcript: &str) -> Result<usize, String> {
    let log = parse_log(events).map_err(|e| e.to_string())?;
    let mut appended = Vec::new();
    for r in log {
        if let Event::UtteranceAppended {
            utt_seq,
            track_id,
            speaker_label,
            end_time_s,
            ..
        } = r.event
        {
            appended.push((utt_seq, end_time_s, track_id, speaker_label));
        }
    }
    appended.sort_by_key(|a| a.0);
    for w in appended.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.0 != a.0 + 1 {
            return Err(format!("sequence jumps from {} to {}", a.0, b.0));
        }
        if a.1 > b.1 || (a.1 == b.1 && a.2 >= b.2) {
            return Err(format!(
                "utterance {} ({}, {}) precedes {} ({}, {})",
                a.0, a.1, a.2, b.0, b.1, b.2
            ));
        }
    }
    let lines: Vec<&str> = transcript.lines().collect();
    if lines.len() != appended.len() {
        return Err(format!(
            "{} transcript lines for {} utterances",
            lines.len(),
            appended.len()
        ));
    }
    for (line, a) in lines.iter().zip(&appended) {
        if !line.starts_with(&format!("{}:", a.3)) {
            return Err(format!("line {line:?} is not utterance {} by {}", a.0, a.3));
        }
    }
    Ok(appended.len())
}

fn fixture() -> Result<usize, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_track/manifest.toml");
    let manifest = Manifest::load(&path).map_err(|e| e.to_string())?;
    let out = replay(&manifest, &ReplayOptions::default()).map_err(|e| e.to_string())?;
    check_log(&out.events, &out.transcript)
}

/// Three tracks on a shared three-second grid so end times collide often.
fn random_meeting(rng: &mut ChaCha8Rng) -> Vec<Utt> {
    let mut utts = Vec::new();
    for track in ["c", "a", "b"] {
        for slot in 0..rng.random_range(3..12u64) {
            if rng.random_bool(0.3) {
                continue;
            }
            let duration_s = rng.random_range(1..=2);
            let start_s = 3 * slot + 2 - duration_s;
            utts.push(Utt {
                track: track.into(),
                start_s,
                duration_s,
                text: format!("{track} speaks in slot {slot}"),
            });
        }
    }
    utts
}

pub fn check() -> Result<String, String> {
    let mut total = fixture()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0D);
    let mut ties = 0;
    for case in 0..30 {
        let utts = random_meeting(&mut rng);
        let manifest =
            Manifest::parse(&oracle::manifest_toml(1000, &utts, "")).map_err(|e| e.to_string())?;
        let out = replay(&manifest, &ReplayOptions::default()).map_err(|e| e.to_string())?;
        total +=
            check_log(&out.events, &out.transcript).map_err(|e| format!("case {case}: {e}"))?;
        let want: String = oracle::append_order(&utts)
            .iter()
            .map(|u| format!("{}:  {}\n", u.track, u.text))
            .collect();
        if out.transcript != want {
            return Err(format!(
                "case {case}: transcript\n{}oracle\n{want}",
                out.transcript
            ));
        }
        let order = oracle::append_order(&utts);
        ties += order
            .windows(2)
            .filter(|w| w[0].end_s() == w[1].end_s())
            .count();
    }
    Ok(format!(
        "{total} utterances in order over the fixture and 30 meetings, {ties} end-time ties"
    ))
}
