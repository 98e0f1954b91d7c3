//! Turning feature streams into a labeled training set.
//!
//! The labeling rule runs backwards in time: the generation timestamp of
//! every packet that later bounced at a sink marks a window of sample
//! timestamps around it, and every feature sample inside any such window
//! gets label 1 ("sending into this sink now will end in congestion").
//! Samples outside every window get label 0.
//!
//! Concretely, with half-width `delta` and deflected-packet generation
//! times `d_1..d_m`, sample `i` is labeled 1 exactly when some `j`
//! satisfies `d_j - delta <= t_i <= d_j + delta`.
//!
//! Labeling is per sink: samples collected at a sink are matched only
//! against deflections observed at that sink.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_COUNT};
use crate::topology::NodeId;

/// A feature row with its binary congestion label.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub t: u64,
    pub label: u8,
}

/// Generation timestamp of a packet that bounced at `sink`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeflectionRecord {
    pub d: u64,
    pub sink: NodeId,
}

/// Applies the time-reversal rule to one sink's samples.
///
/// Runs in O((n + m) log m): deflection times are sorted once and every
/// sample binary-searches its nearest deflection.
pub fn label_dataset(
    samples: &[(FeatureVector, u64)],
    deflections: &[DeflectionRecord],
    delta: i64,
) -> Result<Vec<LabeledSample>> {
    if delta < 0 {
        return Err(Error::Parameter(format!(
            "labeling window half-width must be non-negative, got {delta}"
        )));
    }
    let delta = delta as u64;
    let mut times: Vec<u64> = deflections.iter().map(|r| r.d).collect();
    times.sort_unstable();

    Ok(samples
        .iter()
        .map(|&(features, t)| {
            let idx = times.partition_point(|&d| d < t);
            let mut near = u64::MAX;
            if idx < times.len() {
                near = near.min(times[idx] - t);
            }
            if idx > 0 {
                near = near.min(t - times[idx - 1]);
            }
            LabeledSample {
                features,
                t,
                label: u8::from(near <= delta),
            }
        })
        .collect())
}

/// Result of a train/validation split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    /// False when a label class was absent and the split fell back to an
    /// unstratified shuffle.
    pub stratified: bool,
}

/// Stratified random split preserving label proportions.
///
/// The two parts are disjoint and exhaustive. When possible, each class
/// keeps at least one validation sample; a dataset missing one of the two
/// classes degrades to an unstratified shuffle and is flagged.
pub fn split_dataset(
    dataset: &[LabeledSample],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitOutcome> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Parameter("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, s) in dataset.iter().enumerate() {
        by_class[s.label as usize].push(i);
    }
    let stratified = !by_class[0].is_empty() && !by_class[1].is_empty();

    let target_train = ((train_fraction * n as f64).round() as usize).clamp(1, n);
    let mut train_idx: Vec<usize> = Vec::with_capacity(target_train);
    let mut val_idx: Vec<usize> = Vec::with_capacity(n - target_train);

    if stratified {
        // Largest-remainder allocation of the train budget across classes.
        let quota: Vec<f64> = by_class
            .iter()
            .map(|c| train_fraction * c.len() as f64)
            .collect();
        let mut take: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
        let mut leftover = target_train.saturating_sub(take.iter().sum());
        let mut order: Vec<usize> = vec![0, 1];
        order.sort_by(|&a, &b| {
            let ra = quota[a] - take[a] as f64;
            let rb = quota[b] - take[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &c in &order {
            if leftover == 0 {
                break;
            }
            if take[c] < by_class[c].len() {
                take[c] += 1;
                leftover -= 1;
            }
        }
        // Keep at least one validation sample per class when the class has
        // two or more samples.
        for c in 0..2 {
            if take[c] == by_class[c].len() && by_class[c].len() >= 2 {
                take[c] -= 1;
            }
        }
        for c in 0..2 {
            let mut idx = by_class[c].clone();
            idx.shuffle(&mut rng);
            train_idx.extend(&idx[..take[c]]);
            val_idx.extend(&idx[take[c]..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut take = target_train;
        if take == n && n >= 2 {
            take -= 1;
        }
        train_idx.extend(&idx[..take]);
        val_idx.extend(&idx[take..]);
    }

    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok(SplitOutcome {
        train: train_idx.iter().map(|&i| dataset[i]).collect(),
        validation: val_idx.iter().map(|&i| dataset[i]).collect(),
        stratified,
    })
}

/// Per-label counts plus the window half-width used, for the labeling
/// summary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSummary {
    pub total: usize,
    pub label0: usize,
    pub label1: usize,
    pub delta: i64,
}

impl LabelSummary {
    pub fn of(dataset: &[LabeledSample], delta: i64) -> LabelSummary {
        let label1 = dataset.iter().filter(|s| s.label == 1).count();
        LabelSummary {
            total: dataset.len(),
            label0: dataset.len() - label1,
            label1,
            delta,
        }
    }
}

/// One sink's collected samples: every sink attempt's feature row, plus the
/// generation timestamps of the attempts that bounced.
#[derive(Debug, Clone, Default)]
pub struct SinkDataset {
    pub samples: Vec<(FeatureVector, u64)>,
    /// Parallel to `samples`: `Some(generation_time)` for bounced attempts.
    pub deflected_gen: Vec<Option<u64>>,
}

impl SinkDataset {
    pub fn push(&mut self, features: FeatureVector, t: u64, deflected_gen: Option<u64>) {
        self.samples.push((features, t));
        self.deflected_gen.push(deflected_gen);
    }

    pub fn deflection_records(&self, sink: NodeId) -> Vec<DeflectionRecord> {
        self.deflected_gen
            .iter()
            .filter_map(|g| g.map(|d| DeflectionRecord { d, sink }))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn feature_csv_header() -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=FEATURE_COUNT).map(|i| format!("f{i}")));
    cols.push("gen_deflected".to_string());
    cols.join(",")
}

/// Writes one sink's feature stream as CSV: `t,f1..f14,gen_deflected`,
/// where `gen_deflected` is empty for attempts that sank.
pub fn write_feature_csv<W: Write>(out: W, dataset: &SinkDataset) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", feature_csv_header())?;
    for ((features, t), gen) in dataset.samples.iter().zip(&dataset.deflected_gen) {
        write!(w, "{t}")?;
        for v in features.0 {
            write!(w, ",{v}")?;
        }
        match gen {
            Some(d) => writeln!(w, ",{d}")?,
            None => writeln!(w, ",")?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature CSV produced by [`write_feature_csv`].
pub fn read_feature_csv<R: BufRead>(input: R) -> Result<SinkDataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parameter("empty feature CSV".into()))??;
    if header.trim() != feature_csv_header() {
        return Err(Error::Parameter(format!(
            "unexpected feature CSV header: {header}"
        )));
    }
    let mut dataset = SinkDataset::default();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 2 {
            return Err(Error::Parameter(format!(
                "feature CSV line {}: expected {} fields, got {}",
                lineno + 2,
                FEATURE_COUNT + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| {
            Error::Parameter(format!("feature CSV line {}: bad {what}", lineno + 2))
        };
        let t: u64 = fields[0].parse().map_err(|_| parse_err("timestamp"))?;
        let mut features = [0.0; FEATURE_COUNT];
        for (i, field) in fields[1..=FEATURE_COUNT].iter().enumerate() {
            features[i] = field.parse().map_err(|_| parse_err("feature value"))?;
        }
        let gen = fields[FEATURE_COUNT + 1];
        let gen = if gen.is_empty() {
            None
        } else {
            Some(gen.parse().map_err(|_| parse_err("generation time"))?)
        };
        dataset.push(FeatureVector(features), t, gen);
    }
    Ok(dataset)
}

/// Writes a labeled dataset as CSV: `t,f1..f14,label`.
pub fn write_labeled_csv<W: Write>(out: W, dataset: &[LabeledSample]) -> Result<()> {
    let mut w = BufWriter::new(out);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=FEATURE_COUNT).map(|i| format!("f{i}")));
    cols.push("label".to_string());
    writeln!(w, "{}", cols.join(","))?;
    for s in dataset {
        write!(w, "{}", s.t)?;
        for v in s.features.0 {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", s.label)?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience wrapper: label one sink's on-disk feature CSV.
pub fn label_feature_file(path: &Path, sink: NodeId, delta: i64) -> Result<Vec<LabeledSample>> {
    let file = std::fs::File::open(path)?;
    let dataset = read_feature_csv(std::io::BufReader::new(file))?;
    let deflections = dataset.deflection_records(sink);
    label_dataset(&dataset.samples, &deflections, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(seed: f64) -> FeatureVector {
        let mut f = [0.0; FEATURE_COUNT];
        f[0] = seed;
        FeatureVector(f)
    }

    fn samples(times: &[u64]) -> Vec<(FeatureVector, u64)> {
        times.iter().map(|&t| (fv(t as f64), t)).collect()
    }

    fn records(times: &[u64]) -> Vec<DeflectionRecord> {
        times
            .iter()
            .map(|&d| DeflectionRecord { d, sink: NodeId(0) })
            .collect()
    }

    /// Quadratic reference labeler checking every (sample, deflection) pair.
    fn brute_force_labels(times: &[u64], deflections: &[u64], delta: u64) -> Vec<u8> {
        times
            .iter()
            .map(|&t| {
                u8::from(
                    deflections
                        .iter()
                        .any(|&d| t.max(d) - t.min(d) <= delta),
                )
            })
            .collect()
    }

    #[test]
    fn window_fixture_labels_exactly() {
        // delta 2, deflected generation times 10 and 11: the union of the
        // two windows is {8..13}, so of the sample times 5,7,9,11,13 the
        // last three are labeled 1.
        let labeled =
            label_dataset(&samples(&[5, 7, 9, 11, 13]), &records(&[10, 11]), 2).unwrap();
        let got: Vec<u8> = labeled.iter().map(|s| s.label).collect();
        assert_eq!(got, vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn no_deflections_means_all_zero() {
        let labeled = label_dataset(&samples(&[1, 2, 3]), &[], 5).unwrap();
        assert!(labeled.iter().all(|s| s.label == 0));
    }

    #[test]
    fn zero_delta_matches_exact_timestamps_only() {
        let times = [4u64, 9, 10, 11, 30];
        let defl = [10u64, 30];
        let labeled = label_dataset(&samples(&times), &records(&defl), 0).unwrap();
        let got: Vec<u8> = labeled.iter().map(|s| s.label).collect();
        assert_eq!(got, brute_force_labels(&times, &defl, 0));
        assert_eq!(got, vec![0, 0, 1, 0, 1]);
    }

    #[test]
    fn negative_delta_is_rejected() {
        assert!(label_dataset(&samples(&[1]), &[], -1).is_err());
    }

    #[test]
    fn split_1000_at_point7_gives_700_300() {
        let dataset: Vec<LabeledSample> = (0..1000)
            .map(|i| LabeledSample {
                features: fv(i as f64),
                t: i,
                label: u8::from(i % 4 == 0),
            })
            .collect();
        let split = split_dataset(&dataset, 0.7, 11).unwrap();
        assert_eq!(split.train.len(), 700);
        assert_eq!(split.validation.len(), 300);
        assert!(split.stratified);
        // Proportions preserved within 1%.
        let frac = |part: &[LabeledSample]| {
            part.iter().filter(|s| s.label == 1).count() as f64 / part.len() as f64
        };
        assert!((frac(&split.train) - 0.25).abs() < 0.01);
        assert!((frac(&split.validation) - 0.25).abs() < 0.01);
    }

    #[test]
    fn tiny_dataset_keeps_validation_nonempty() {
        let dataset: Vec<LabeledSample> = (0..4)
            .map(|i| LabeledSample {
                features: fv(i as f64),
                t: i,
                label: (i % 2) as u8,
            })
            .collect();
        let split = split_dataset(&dataset, 0.99, 3).unwrap();
        assert!(!split.validation.is_empty());
        assert_eq!(split.train.len() + split.validation.len(), 4);
        // Both classes kept a validation sample.
        for label in [0u8, 1] {
            assert!(split.validation.iter().any(|s| s.label == label));
        }
    }

    #[test]
    fn same_seed_gives_identical_partition() {
        let dataset: Vec<LabeledSample> = (0..97)
            .map(|i| LabeledSample {
                features: fv(i as f64),
                t: i,
                label: u8::from(i % 3 == 0),
            })
            .collect();
        let a = split_dataset(&dataset, 0.7, 42).unwrap();
        let b = split_dataset(&dataset, 0.7, 42).unwrap();
        let ts = |part: &[LabeledSample]| part.iter().map(|s| s.t).collect::<Vec<_>>();
        assert_eq!(ts(&a.train), ts(&b.train));
        assert_eq!(ts(&a.validation), ts(&b.validation));
    }

    #[test]
    fn single_class_dataset_falls_back_unstratified() {
        let dataset: Vec<LabeledSample> = (0..10)
            .map(|i| LabeledSample {
                features: fv(i as f64),
                t: i,
                label: 0,
            })
            .collect();
        let split = split_dataset(&dataset, 0.7, 1).unwrap();
        assert!(!split.stratified);
        assert_eq!(split.train.len() + split.validation.len(), 10);
    }

    #[test]
    fn feature_csv_round_trips() {
        let mut ds = SinkDataset::default();
        let mut s = crate::features::SinkFeatureState::new(0.25);
        for t in 1..20u64 {
            let outcome = if t % 5 == 0 {
                crate::features::AttemptOutcome::Deflected
            } else {
                crate::features::AttemptOutcome::Sunk
            };
            let sample = s.record_attempt(t * 3, (t % 4) as usize, 4, outcome);
            let gen = (t % 5 == 0).then(|| t * 3 - 7);
            ds.push(sample.features, sample.t, gen);
        }
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &ds).unwrap();
        let back = read_feature_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.samples.len(), ds.samples.len());
        assert_eq!(back.deflected_gen, ds.deflected_gen);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            assert_eq!(a.1, b.1);
            assert_eq!(a.0 .0, b.0 .0, "feature values must round-trip exactly");
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force_on_random_instances(
            times in proptest::collection::vec(0u64..500, 1..100),
            defl in proptest::collection::vec(0u64..500, 0..40),
            delta in 0i64..20,
        ) {
            let labeled =
                label_dataset(&samples(&times), &records(&defl), delta).unwrap();
            let got: Vec<u8> = labeled.iter().map(|s| s.label).collect();
            prop_assert_eq!(got, brute_force_labels(&times, &defl, delta as u64));
        }

        #[test]
        fn labels_are_order_independent(
            times in proptest::collection::vec(0u64..300, 1..50),
            defl in proptest::collection::vec(0u64..300, 1..20),
            delta in 0i64..10,
        ) {
            let forward = label_dataset(&samples(&times), &records(&defl), delta).unwrap();
            let mut reversed = records(&defl);
            reversed.reverse();
            let backward = label_dataset(&samples(&times), &reversed, delta).unwrap();
            for (a, b) in forward.iter().zip(&backward) {
                prop_assert_eq!(a.label, b.label);
            }
        }

        #[test]
        fn label_set_grows_with_delta(
            times in proptest::collection::vec(0u64..300, 1..50),
            defl in proptest::collection::vec(0u64..300, 1..20),
            delta in 0i64..10,
            extra in 1i64..10,
        ) {
            let narrow = label_dataset(&samples(&times), &records(&defl), delta).unwrap();
            let wide =
                label_dataset(&samples(&times), &records(&defl), delta + extra).unwrap();
            for (a, b) in narrow.iter().zip(&wide) {
                prop_assert!(b.label >= a.label, "wider window can only add label-1");
            }
        }
    }
}
