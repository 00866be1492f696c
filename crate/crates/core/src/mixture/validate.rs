use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MixtureKind, MixtureManifest, DEFAULT_EPOCH_CAP, ENGLISH_POOL};
use crate::corpus::Corpus;
use crate::tokenizer::Tokenize;

/// Resolves manifest ids to their text.
pub trait UnitLookup {
    fn text(&self, id: &str) -> Option<&str>;

    fn contains(&self, id: &str) -> bool {
        self.text(id).is_some()
    }
}

impl UnitLookup for Corpus {
    fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(|d| d.text.as_str())
    }
}

impl UnitLookup for HashMap<String, String> {
    fn text(&self, id: &str) -> Option<&str> {
        self.get(id).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub kind: MixtureKind,
    pub realized_ratio: Option<f64>,
    pub requested_ratio: Option<f64>,
    pub epochs: Vec<(String, f64)>,
    pub missing: Vec<String>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

/// Re-checks a manifest against the units it references. With a tokenizer,
/// pretraining token counts are recomputed as well. Never fails; problems
/// are reported as failed checks.
pub fn validate_manifest<L: UnitLookup + ?Sized>(
    manifest: &MixtureManifest,
    lookup: &L,
    tokenizer: Option<&dyn Tokenize>,
) -> ValidationReport {
    let mut r = ValidationReport {
        ok: true,
        kind: manifest.kind,
        realized_ratio: manifest.realized_ratio(),
        requested_ratio: manifest.ratio.map(|x| x.value()),
        epochs: manifest
            .entries
            .iter()
            .map(|e| (e.pool.clone(), e.epochs))
            .collect(),
        missing: Vec::new(),
        checks: Vec::new(),
    };

    let mut seen = std::collections::HashSet::new();
    for e in &manifest.entries {
        for id in &e.doc_ids {
            if !lookup.contains(id) && seen.insert(id.as_str()) {
                r.missing.push(id.clone());
            }
        }
    }
    let detail = if r.missing.is_empty() {
        "all referenced ids present".to_owned()
    } else {
        format!("missing: {}", r.missing.join(", "))
    };
    r.push("documents_exist", r.missing.is_empty(), detail);

    for e in &manifest.entries {
        let units = e.units();
        let ok = e.epochs.is_finite()
            && e.epochs >= 0.0
            && (e.pool_size == 0 || (e.epochs - units as f64 / e.pool_size as f64).abs() <= 1e-9);
        r.push(
            "epochs_consistent",
            ok,
            format!(
                "{}: {} of {} units = {} epochs",
                e.pool, units, e.pool_size, e.epochs
            ),
        );
    }

    match manifest.kind {
        MixtureKind::Pretrain => {
            let cap = manifest.epoch_cap.unwrap_or(DEFAULT_EPOCH_CAP);
            for e in &manifest.entries {
                let ok = e.epochs <= cap.min(DEFAULT_EPOCH_CAP) + 1e-12;
                r.push(
                    "epoch_cap",
                    ok,
                    format!(
                        "{}: {} epochs, cap {}",
                        e.pool,
                        e.epochs,
                        cap.min(DEFAULT_EPOCH_CAP)
                    ),
                );
            }
            if let Some(ratio) = manifest.ratio {
                match r.realized_ratio {
                    Some(real) => {
                        let rel = (real / ratio.value() - 1.0).abs();
                        r.push(
                            "ratio",
                            rel <= manifest.tolerance,
                            format!(
                                "realized {real:.6} vs requested {ratio} ({:.6}), relative error {rel:.6}, tolerance {}",
                                ratio.value(),
                                manifest.tolerance
                            ),
                        );
                    }
                    None => r.push("ratio", false, "no target tokens to compare against"),
                }
            }
            if let Some(tok) = tokenizer {
                let mut lens: HashMap<&str, u64> = HashMap::new();
                let mut max_doc = 0u64;
                let mut per_entry = Vec::new();
                for e in &manifest.entries {
                    let mut sum = 0u64;
                    for id in &e.doc_ids {
                        let Some(text) = lookup.text(id) else {
                            continue;
                        };
                        let n = *lens
                            .entry(id.as_str())
                            .or_insert_with(|| tok.encode(text).len() as u64);
                        max_doc = max_doc.max(n);
                        sum += n;
                    }
                    let recorded = e.token_count.unwrap_or(0);
                    r.push(
                        "token_count",
                        sum == recorded,
                        format!("{}: recorded {recorded}, recomputed {sum}", e.pool),
                    );
                    per_entry.push(sum);
                }
                if manifest.ratio.is_none() {
                    let spread =
                        per_entry.iter().max().unwrap_or(&0) - per_entry.iter().min().unwrap_or(&0);
                    r.push(
                        "even_share",
                        spread == 0 || spread < max_doc,
                        format!("token spread {spread}, longest document {max_doc}"),
                    );
                }
            }
        }
        MixtureKind::Sft | MixtureKind::Dpo => {
            for e in &manifest.entries {
                r.push(
                    "pair_count",
                    e.pair_count == Some(e.doc_ids.len() as u64),
                    format!(
                        "{}: {:?} recorded, {} ids",
                        e.pool,
                        e.pair_count,
                        e.doc_ids.len()
                    ),
                );
            }
            let mut covered: Vec<Vec<bool>> = manifest
                .entries
                .iter()
                .map(|e| vec![false; e.doc_ids.len()])
                .collect();
            let mut order_ok = true;
            for &[e, i] in &manifest.order {
                match covered.get_mut(e).and_then(|c| c.get_mut(i)) {
                    Some(slot) if !*slot => *slot = true,
                    _ => order_ok = false,
                }
            }
            order_ok &= covered.iter().flatten().all(|&c| c);
            r.push(
                "order",
                order_ok,
                "order lists every sampled item exactly once",
            );

            let en = manifest.entry(ENGLISH_POOL);
            let other = manifest.entries.iter().find(|e| e.pool != ENGLISH_POOL);
            if let (Some(ratio), Some(en), Some(other)) = (manifest.ratio, en, other) {
                let (ok, detail) = if manifest.kind == MixtureKind::Sft {
                    let n = en.pool_size.min(other.pool_size);
                    (
                        en.units() == n && other.units() == n,
                        format!(
                            "{} + {} pairs, expected {n} each",
                            en.units(),
                            other.units()
                        ),
                    )
                } else {
                    let want =
                        (en.units() as u128 * ratio.target as u128 / ratio.english as u128) as u64;
                    (
                        other.units() == want && en.units() == en.pool_size,
                        format!(
                            "{} english, {} target, expected {want} target at {ratio}",
                            en.units(),
                            other.units()
                        ),
                    )
                };
                r.push("ratio", ok, detail);
            }
        }
    }
    r.ok = r.checks.iter().all(|c| c.ok);
    r
}
