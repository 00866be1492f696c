//! Writes the synthetic multilingual desk corpus used by the fertility
//! acceptance test and the benchmarks.
//!
//! Each language gets a seeded lexicon of pseudo-words built from its own
//! script, sampled with Zipfian frequencies. Thai words are run together
//! inside a sentence.
//!
//! Usage: cargo run -p lingo --example gen_desk_corpus [OUT]

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const SEED: u64 = 20_240_417;
const BYTES_PER_LANG: usize = 256 * 1024;
const LEXICON: usize = 6000;

struct Script {
    lang: &'static str,
    onsets: &'static [&'static str],
    vowels: &'static [&'static str],
    codas: &'static [&'static str],
    spaced: bool,
}

const EN: Script = Script {
    lang: "en",
    onsets: &[
        "", "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w",
        "y", "bl", "br", "ch", "cl", "cr", "dr", "fl", "fr", "gr", "pl", "pr", "sh", "sl", "sp",
        "st", "str", "th", "tr", "wh",
    ],
    vowels: &[
        "a", "e", "i", "o", "u", "ai", "ea", "ee", "ie", "oo", "ou", "ay", "ow",
    ],
    codas: &[
        "", "", "b", "d", "ck", "ff", "g", "l", "ll", "m", "n", "nd", "ng", "nt", "p", "r", "rt",
        "s", "ss", "st", "t", "th", "x",
    ],
    spaced: true,
};

const RU: Script = Script {
    lang: "ru",
    onsets: &[
        "", "б", "в", "г", "д", "ж", "з", "к", "л", "м", "н", "п", "р", "с", "т", "ф", "х", "ц",
        "ч", "ш", "щ", "ст", "пр", "кр", "тр", "др", "вл", "сл", "зн",
    ],
    vowels: &["а", "е", "и", "о", "у", "ы", "э", "ю", "я", "ё"],
    codas: &[
        "", "", "", "й", "н", "т", "л", "р", "с", "к", "м", "ть", "сь", "ст",
    ],
    spaced: true,
};

const AR: Script = Script {
    lang: "ar",
    onsets: &[
        "ب", "ت", "ث", "ج", "ح", "خ", "د", "ذ", "ر", "ز", "س", "ش", "ص", "ض", "ط", "ظ", "ع", "غ",
        "ف", "ق", "ك", "ل", "م", "ن", "ه", "و", "ي",
    ],
    vowels: &["", "", "ا", "و", "ي"],
    codas: &["", "", "", "ن", "ت", "م", "ر", "ل", "ة"],
    spaced: true,
};

const TH: Script = Script {
    lang: "th",
    onsets: &[
        "ก", "ข", "ค", "ง", "จ", "ช", "ซ", "ด", "ต", "ท", "น", "บ", "ป", "ผ", "พ", "ฟ", "ม", "ย",
        "ร", "ล", "ว", "ส", "ห", "อ", "กร", "ปล", "คว",
    ],
    vowels: &[
        "า",
        "ะ",
        "ิ",
        "ี",
        "ึ",
        "ื",
        "ุ",
        "ู",
        "ั",
        "่า",
        "้า",
        "ี่",
        "ี้",
        "ำ",
        "ื่อ",
    ],
    codas: &["", "", "", "ก", "ง", "น", "ม", "ย", "ว", "ด", "บ"],
    spaced: false,
};

const TH_PREFIX: &[&str] = &["เ", "แ", "โ", "ใ", "ไ"];

fn syllable(s: &Script, rng: &mut ChaCha20Rng) -> String {
    let pick = |xs: &[&'static str], rng: &mut ChaCha20Rng| xs[rng.random_range(0..xs.len())];
    let onset = pick(s.onsets, rng);
    if s.lang == "th" && rng.random_bool(0.3) {
        let mut out = String::from(pick(TH_PREFIX, rng));
        out.push_str(onset);
        out.push_str(pick(s.codas, rng));
        return out;
    }
    let mut out = String::from(onset);
    out.push_str(pick(s.vowels, rng));
    out.push_str(pick(s.codas, rng));
    out
}

fn lexicon(s: &Script, rng: &mut ChaCha20Rng) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut words = Vec::with_capacity(LEXICON);
    while words.len() < LEXICON {
        let n = match rng.random_range(0..10) {
            0..=2 => 1,
            3..=7 => 2,
            _ => 3,
        };
        let mut w = String::new();
        if s.lang == "ar" && rng.random_bool(0.2) {
            w.push_str("ال");
        }
        for _ in 0..n {
            w.push_str(&syllable(s, rng));
        }
        if !w.is_empty() && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn sentence(
    s: &Script,
    words: &[String],
    zipf: &WeightedIndex<f64>,
    rng: &mut ChaCha20Rng,
) -> String {
    let n = rng.random_range(5..16);
    let mut parts: Vec<String> = (0..n).map(|_| words[zipf.sample(rng)].clone()).collect();
    if s.lang == "en" || s.lang == "ru" {
        let first = &parts[0];
        let mut cs = first.chars();
        let head: String = cs.next().into_iter().flat_map(char::to_uppercase).collect();
        parts[0] = head + cs.as_str();
    }
    let mut out = if s.spaced {
        let mut out = String::new();
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                out.push_str(if i % 7 == 0 { ", " } else { " " });
            }
            out.push_str(p);
        }
        out
    } else {
        parts.concat()
    };
    match s.lang {
        "th" => {}
        "ar" => out.push_str(if rng.random_bool(0.15) { "؟" } else { "." }),
        _ => out.push_str(if rng.random_bool(0.1) { "?" } else { "." }),
    }
    out
}

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/desk_corpus.jsonl").into());
    let mut buf = Vec::new();
    for (k, script) in [EN, TH, AR, RU].iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(SEED);
        rng.set_stream(k as u64);
        let words = lexicon(script, &mut rng);
        let weights: Vec<f64> = (1..=words.len())
            .map(|r| 1.0 / (r as f64).powf(1.07))
            .collect();
        let zipf = WeightedIndex::new(&weights).expect("positive weights");
        let mut bytes = 0;
        let mut doc = 0;
        while bytes < BYTES_PER_LANG {
            let n = rng.random_range(3..9);
            let text = (0..n)
                .map(|_| sentence(script, &words, &zipf, &mut rng))
                .collect::<Vec<_>>()
                .join(" ");
            bytes += text.len();
            let line = serde_json::json!({
                "id": format!("{}-{doc:05}", script.lang),
                "text": text,
                "lang": script.lang,
            });
            serde_json::to_writer(&mut buf, &line)?;
            buf.push(b'\n');
            doc += 1;
        }
    }
    if let Some(dir) = std::path::Path::new(&out).parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::File::create(&out)?.write_all(&buf)?;
    eprintln!("wrote {} bytes to {out}", buf.len());
    Ok(())
}
