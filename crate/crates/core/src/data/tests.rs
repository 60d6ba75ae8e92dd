use super::*;
use crate::encoders::sentiment::{LexiconScorer, SentimentScorer, SENTIMENT_CLASSES};
use proptest::prelude::*;
use tempfile::tempdir;

// ---- mask → patch indices ----

#[test]
fn mask_all_ones_and_all_zeros() {
    let ones = vec![1u8; 32 * 32];
    let p = mask_to_patch_indices(&ones, 32, 32, 16, 0.0).unwrap();
    assert_eq!(p.indices(), &[0, 1, 2, 3]);
    let zeros = vec![0u8; 32 * 32];
    let p = mask_to_patch_indices(&zeros, 32, 32, 16, 0.0).unwrap();
    assert!(p.is_empty());
}

#[test]
fn mask_top_left_block_is_patch_zero() {
    let mut mask = vec![0u8; 32 * 32];
    for y in 0..16 {
        for x in 0..16 {
            mask[y * 32 + x] = 1;
        }
    }
    let p = mask_to_patch_indices(&mask, 32, 32, 16, 0.0).unwrap();
    assert_eq!(p.indices(), &[0]);
}

#[test]
fn mask_indexing_matches_patchify_for_every_patch() {
    // painting exactly patch i's pixels yields P = {i}
    let (h, w, patch) = (12, 16, 4);
    let (ph, pw) = (h / patch, w / patch);
    for pi in 0..ph * pw {
        let (pr, pc) = (pi / pw, pi % pw);
        let mut mask = vec![0u8; h * w];
        for dy in 0..patch {
            for dx in 0..patch {
                mask[(pr * patch + dy) * w + pc * patch + dx] = 1;
            }
        }
        let p = mask_to_patch_indices(&mask, h, w, patch, 0.0).unwrap();
        assert_eq!(p.indices(), &[pi]);
    }
}

#[test]
fn mask_rejects_non_binary_and_bad_threshold() {
    let mask = vec![2u8; 16];
    assert!(mask_to_patch_indices(&mask, 4, 4, 2, 0.0).is_err());
    let mask = vec![0u8; 16];
    assert!(mask_to_patch_indices(&mask, 4, 4, 2, 1.0).is_err());
    assert!(mask_to_patch_indices(&mask, 4, 4, 3, 0.0).is_err());
}

proptest! {
    #[test]
    fn mask_threshold_is_monotone(bits in proptest::collection::vec(0u8..=1, 64), t1 in 0.0f64..0.9, dt in 0.0f64..0.09) {
        let t2 = t1 + dt;
        let p1 = mask_to_patch_indices(&bits, 8, 8, 4, t1).unwrap();
        let p2 = mask_to_patch_indices(&bits, 8, 8, 4, t2).unwrap();
        for i in p2.indices() {
            prop_assert!(p1.contains(*i), "P(t2) ⊆ P(t1) violated");
        }
    }
}

// ---- payload formats ----

#[test]
fn payload_roundtrip_and_corruption() {
    let dir = tempdir().unwrap();
    let fp = dir.path().join("c.evid");
    let pixels: Vec<u8> = (0..2 * 4 * 4 * 3).map(|i| (i % 251) as u8).collect();
    format::write_frames(&fp, 2, 4, 4, &pixels).unwrap();
    let p = format::read_frames(&fp).unwrap();
    assert_eq!((p.t, p.h, p.w, p.c), (2, 4, 4, 3));
    assert_eq!(p.data, pixels);

    let bytes = std::fs::read(&fp).unwrap();
    // truncated payload
    std::fs::write(&fp, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(format::read_frames(&fp), Err(Error::Format { .. })));
    // bad magic
    let mut bad = bytes.clone();
    bad[0] = b'Z';
    std::fs::write(&fp, &bad).unwrap();
    assert!(matches!(format::read_frames(&fp), Err(Error::Format { .. })));

    // masks reject non-binary bytes on read
    let mp = dir.path().join("c.emsk");
    format::write_masks(&mp, 1, 4, 4, &[0u8; 16]).unwrap();
    let mut bytes = std::fs::read(&mp).unwrap();
    bytes[24] = 7;
    std::fs::write(&mp, &bytes).unwrap();
    assert!(matches!(format::read_masks(&mp), Err(Error::Format { .. })));
}

// ---- generator ----

#[test]
fn generation_is_byte_identical_for_same_seed() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let spec = GeneratorSpec::default();
    generate_synthetic_dataset(&a, 12, &spec, 99).unwrap();
    generate_synthetic_dataset(&b, 12, &spec, 99).unwrap();
    let walk = |root: &std::path::Path| {
        let mut files: Vec<std::path::PathBuf> = Vec::new();
        for sub in ["manifest.jsonl", "genspec.json"] {
            files.push(root.join(sub));
        }
        for sub in ["frames", "masks"] {
            let mut names: Vec<_> = std::fs::read_dir(root.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            names.sort();
            files.extend(names);
        }
        files
    };
    for (fa, fb) in walk(&a).iter().zip(walk(&b).iter()) {
        assert_eq!(
            std::fs::read(fa).unwrap(),
            std::fs::read(fb).unwrap(),
            "{fa:?} vs {fb:?}"
        );
    }
    // a different seed must change content
    let c = dir.path().join("c");
    generate_synthetic_dataset(&c, 12, &spec, 100).unwrap();
    let ma = std::fs::read(a.join("manifest.jsonl")).unwrap();
    let mc = std::fs::read(c.join("manifest.jsonl")).unwrap();
    assert_ne!(ma, mc);
}

#[test]
fn empty_dataset_is_valid() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("empty");
    let summary = generate_synthetic_dataset(&out, 0, &GeneratorSpec::default(), 1).unwrap();
    assert_eq!(summary.n, 0);
    assert!(load_all(&out).unwrap().is_empty());
}

#[test]
fn class_histogram_is_uniform() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    let n = 700;
    let summary = generate_synthetic_dataset(&out, n, &GeneratorSpec::default(), 5).unwrap();
    let expected = n as f64 / SENTIMENT_CLASSES as f64;
    for (c, &count) in summary.per_class.iter().enumerate() {
        let dev = (count as f64 - expected).abs() / expected;
        assert!(dev <= 0.05, "class {c} count {count} deviates {dev:.3}");
    }
}

#[test]
fn captions_peak_at_their_class() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 35, &GeneratorSpec::default(), 6).unwrap();
    for rec in load_all(&out).unwrap() {
        let s = LexiconScorer.score(&rec.caption);
        assert_eq!(
            s.argmax(),
            rec.label.unwrap() as usize,
            "caption {:?} should peak at class {}",
            rec.caption,
            rec.label.unwrap()
        );
    }
}

#[test]
fn generated_subject_region_matches_mask() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 5, &GeneratorSpec::default(), 7).unwrap();
    for rec in load_all(&out).unwrap() {
        // masks are rectangular per frame and non-empty
        let n = rec.h * rec.w;
        for ti in 0..rec.t {
            let mask = &rec.masks[ti * n..(ti + 1) * n];
            let count: usize = mask.iter().map(|&m| m as usize).sum();
            assert!(count > 0, "frame {ti} of {} has an empty mask", rec.id);
        }
    }
}

#[test]
fn temporal_coding_encodes_class_only_in_visit_order() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    let spec = GeneratorSpec {
        coding: ClassCoding::Temporal,
        ..GeneratorSpec::default()
    };
    generate_synthetic_dataset(&out, 28, &spec, 8).unwrap();
    let recs = load_all(&out).unwrap();

    // extract the subject's top-left corner per frame from the mask
    let positions = |rec: &ClipRecord| -> Vec<(usize, usize)> {
        let n = rec.h * rec.w;
        (0..rec.t)
            .map(|ti| {
                let mask = &rec.masks[ti * n..(ti + 1) * n];
                let first = mask.iter().position(|&m| m == 1).expect("non-empty mask");
                (first / rec.w, first % rec.w)
            })
            .collect()
    };

    // every clip visits the same anchor set; the order depends only on class
    let mut anchor_sets: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut order_by_class = std::collections::HashMap::<u8, Vec<(usize, usize)>>::new();
    for rec in &recs {
        let pos = positions(rec);
        let mut sorted = pos.clone();
        sorted.sort_unstable();
        anchor_sets.push(sorted);
        let prev = order_by_class.entry(rec.label.unwrap()).or_insert_with(|| pos.clone());
        assert_eq!(*prev, pos, "clips of class {} disagree on order", rec.label.unwrap());
    }
    for s in &anchor_sets[1..] {
        assert_eq!(s, &anchor_sets[0], "anchor sets must match across classes");
    }
    // distinct classes use distinct orders
    let orders: Vec<_> = order_by_class.values().collect();
    for i in 0..orders.len() {
        for j in i + 1..orders.len() {
            assert_ne!(orders[i], orders[j]);
        }
    }
}

// ---- loading errors ----

#[test]
fn loader_roundtrip_preserves_fields() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 6, &GeneratorSpec::default(), 9).unwrap();
    let recs = load_all(&out).unwrap();
    assert_eq!(recs.len(), 6);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.id, format!("clip_{i:06}"));
        assert_eq!(r.t, 8);
        assert_eq!((r.h, r.w), (32, 32));
        assert!(!r.caption.is_empty());
        assert!(r.label.is_some());
        assert!(r.sentiment.is_none());
    }
}

#[test]
fn loader_reads_precomputed_sentiment() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 2, &GeneratorSpec::default(), 10).unwrap();
    // rewrite manifest with an explicit sentiment on record 0
    let manifest = out.join("manifest.jsonl");
    let lines: Vec<String> = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let mut rec: ManifestRecord = serde_json::from_str(&lines[0]).unwrap();
    rec.sentiment = Some(vec![0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]);
    let rewritten = format!("{}\n{}\n", serde_json::to_string(&rec).unwrap(), lines[1]);
    std::fs::write(&manifest, rewritten).unwrap();
    let recs = load_all(&out).unwrap();
    assert!(recs[0].sentiment.is_some());
    assert_eq!(recs[0].sentiment.as_ref().unwrap().values()[0], 0.4);
}

#[test]
fn missing_payload_names_the_record() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 2, &GeneratorSpec::default(), 11).unwrap();
    std::fs::remove_file(out.join("frames/clip_000001.evid")).unwrap();
    let err = load_all(&out).unwrap_err();
    match err {
        Error::Format { message, .. } => assert!(
            message.contains("clip_000001"),
            "error should name the record: {message}"
        ),
        other => panic!("expected format error, got {other}"),
    }
}

#[test]
fn malformed_manifest_line_is_a_format_error() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("d");
    generate_synthetic_dataset(&out, 1, &GeneratorSpec::default(), 12).unwrap();
    let manifest = out.join("manifest.jsonl");
    let mut content = std::fs::read_to_string(&manifest).unwrap();
    content.push_str("{not json\n");
    std::fs::write(&manifest, content).unwrap();
    let results: Vec<_> = load_dataset(&out).unwrap().collect();
    assert!(results[0].is_ok());
    assert!(matches!(results[1], Err(Error::Format { .. })));
}

// ---- batching ----

fn dummy_records(labels: &[u8]) -> Vec<ClipRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| ClipRecord {
            id: format!("r{i}"),
            t: 1,
            h: 4,
            w: 4,
            pixels: vec![0; 48],
            masks: vec![0; 16],
            caption: "x".into(),
            sentiment: None,
            label: Some(l),
        })
        .collect()
}

#[test]
fn batch_covering_whole_dataset_uses_every_record_once() {
    let recs = dummy_records(&[0, 1, 2, 3, 4, 5]);
    for strategy in [BatchStrategy::Shuffle, BatchStrategy::ClassCollision] {
        let batches = make_batches(&recs, 6, 3, strategy).unwrap();
        assert_eq!(batches.len(), 1);
        let mut idx = batches[0].indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
    }
}

#[test]
fn shuffle_seeds_change_order_not_membership() {
    let recs = dummy_records(&[0; 12]);
    let a = make_batches(&recs, 4, 1, BatchStrategy::Shuffle).unwrap();
    let b = make_batches(&recs, 4, 2, BatchStrategy::Shuffle).unwrap();
    let flat = |bs: &[Batch]| {
        let mut v: Vec<usize> = bs.iter().flat_map(|b| b.indices.clone()).collect();
        v.sort_unstable();
        v
    };
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(
        a.iter().flat_map(|b| b.indices.clone()).collect::<Vec<_>>(),
        b.iter().flat_map(|b| b.indices.clone()).collect::<Vec<_>>()
    );
    // determinism under the same seed
    let a2 = make_batches(&recs, 4, 1, BatchStrategy::Shuffle).unwrap();
    assert_eq!(a, a2);
}

#[test]
fn partial_batches_are_dropped() {
    let recs = dummy_records(&[0; 10]);
    let batches = make_batches(&recs, 4, 1, BatchStrategy::Shuffle).unwrap();
    assert_eq!(batches.len(), 2);
}

#[test]
fn class_collision_guarantees_a_pair() {
    let labels: Vec<u8> = (0..24).map(|i| (i % 6) as u8).collect();
    let recs = dummy_records(&labels);
    for seed in 0..5 {
        let batches = make_batches(&recs, 4, seed, BatchStrategy::ClassCollision).unwrap();
        assert_eq!(batches.len(), 6);
        // whenever some class still had two records left, the batch collides
        let mut remaining: Vec<u8> = labels.clone();
        for batch in &batches {
            let mut live = std::collections::HashMap::<u8, usize>::new();
            for &l in &remaining {
                *live.entry(l).or_default() += 1;
            }
            let pair_possible = live.values().any(|&c| c >= 2);
            let mut counts = std::collections::HashMap::<u8, usize>::new();
            for &i in &batch.indices {
                *counts.entry(recs[i].label.unwrap()).or_default() += 1;
            }
            if pair_possible {
                assert!(
                    counts.values().any(|&c| c >= 2),
                    "batch {batch:?} has no same-class pair though one was possible"
                );
            }
            for &i in &batch.indices {
                let pos = remaining.iter().position(|&l| l == recs[i].label.unwrap()).unwrap();
                remaining.remove(pos);
            }
        }
        // every record appears exactly once across batches
        let mut all: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..24).collect::<Vec<_>>());
    }
}

#[test]
fn oversized_batch_is_rejected() {
    let recs = dummy_records(&[0, 1]);
    assert!(matches!(
        make_batches(&recs, 3, 1, BatchStrategy::Shuffle),
        Err(Error::Validation(_))
    ));
}
