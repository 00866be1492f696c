//! Word segmentation against counts frozen from an independent UAX #29
//! implementation (Python `regex`, `(?V1w)\b`, segments holding an
//! alphanumeric character).

use lingo::corpus::{count_words, segment_words, SegmentationMode};

const FROZEN: &[(&str, usize)] = &[
    ("สวัสดีครับ ผมชื่อสมชาย", 16),
    ("ภาษาไทยไม่มีการเว้นวรรคระหว่างคำ", 28),
    ("Hello, world! 3.14 is pi.", 5),
    ("مرحبا بالعالم، كيف حالك؟", 4),
    ("Привет, мир! Как дела?", 4),
    ("日本語のテキストです。", 7),
    ("can't won't e.g. U.S.A. 🙂👍🏽 x", 5),
];

#[test]
fn unicode_counts_match_reference() {
    for &(text, want) in FROZEN {
        assert_eq!(count_words(text, SegmentationMode::Unicode), want, "{text}");
    }
}

#[test]
fn thai_segments_keep_combining_marks() {
    let text = "สวัสดีครับ";
    let segs: Vec<&str> = segment_words(text, SegmentationMode::Unicode)
        .into_iter()
        .map(|r| &text[r])
        .collect();
    assert_eq!(segs, ["ส", "วั", "ส", "ดี", "ค", "รั", "บ"]);
}

#[test]
fn whitespace_mode_treats_unspaced_script_as_one_word() {
    assert_eq!(
        count_words("ภาษาไทยไม่มีการเว้นวรรคระหว่างคำ", SegmentationMode::Whitespace),
        1
    );
    assert_eq!(
        count_words("Hello, world! 3.14 is pi.", SegmentationMode::Whitespace),
        5
    );
}
