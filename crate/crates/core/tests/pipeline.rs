mod common;

use std::time::Duration;

use ionmorph::eval::{self, EvalConfig, GroundTruthScores, RegionMode};
use ionmorph::fixtures::{self, FixtureConfig};
use ionmorph::ion_image::extract_ion_image;
use ionmorph::patches::{self, read_patches};
use ionmorph::peaks::{
    enumerate_candidates, rank_peaks, select_top_n, union_peaklists, CandidateList, CandidateStrategy, PeakError,
    PeakList, RankOptions,
};
use ionmorph::scoring::{ScoreError, ScorerKind, ScorerSpec};
use ionmorph::{DatasetHandle, SegmentationMask};
use proptest::prelude::*;

struct Fx {
    _dir: tempfile::TempDir,
    handle: DatasetHandle,
    mask: SegmentationMask,
    info: fixtures::FixtureInfo,
}

fn fixture(seed: u64) -> Fx {
    let dir = tempfile::tempdir().unwrap();
    let info = fixtures::write_fixture(dir.path(), &FixtureConfig { seed, ..Default::default() }).unwrap();
    let handle = DatasetHandle::open(&info.dataset).unwrap();
    let mask = ionmorph::msi_io::load_mask(&info.mask).unwrap();
    Fx {
        _dir: dir,
        handle,
        mask,
        info,
    }
}

fn external(cmd: &std::path::Path, timeout: Duration) -> ScorerSpec {
    ScorerSpec::new(ScorerKind::ExternalProcess {
        command: vec![cmd.to_str().unwrap().to_string()],
        timeout,
        batch_size: 4,
    })
}

#[test]
fn maxima_find_every_fixture_channel() {
    let fx = fixture(7);
    let c = enumerate_candidates(&fx.handle, &CandidateStrategy::default()).unwrap();
    assert_eq!(c.mzs, fx.info.channel_mzs);
    let all = enumerate_candidates(&fx.handle, &CandidateStrategy::Exhaustive { stride: 1 }).unwrap();
    assert_eq!(all.len(), 180);
}

#[test]
fn planted_channels_dominate_ground_truth() {
    for seed in [1, 7, 42] {
        let fx = fixture(seed);
        let cands = CandidateList::new(fx.info.channel_mzs.clone(), CandidateStrategy::default()).unwrap();
        let gt = eval::ground_truth(&fx.handle, &fx.mask, &cands, 10.0, RegionMode::PerRegionMax).unwrap();
        let indicator = fx.mask.indicator(1);
        for &(mz, score) in &gt.entries {
            let img = extract_ion_image(&fx.handle, mz, 10.0).unwrap();
            let want = common::pcc_oracle(&img.pixels, &indicator);
            assert!(common::rel_err(score, want) < 1e-10);
        }
        let min_planted = gt
            .entries
            .iter()
            .filter(|(m, _)| fx.info.planted_mzs.contains(m))
            .map(|e| e.1)
            .fold(f64::INFINITY, f64::min);
        let max_noise = gt
            .entries
            .iter()
            .filter(|(m, _)| !fx.info.planted_mzs.contains(m))
            .map(|e| e.1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(min_planted > 0.8 && max_noise < 0.4, "seed {seed}: {min_planted} vs {max_noise}");
    }
}

#[test]
fn pca_and_morans_recover_planted() {
    let fx = fixture(7);
    let cands = enumerate_candidates(&fx.handle, &CandidateStrategy::default()).unwrap();
    for spec in ["pca", "moransi"] {
        let ranked = rank_peaks(&fx.handle, &cands, &spec.parse().unwrap(), &RankOptions::default()).unwrap();
        assert_eq!(select_top_n(&ranked, 5).mzs, fx.info.planted_mzs, "{spec}");
    }
    let ranked = rank_peaks(&fx.handle, &cands, &"pca".parse().unwrap(), &RankOptions::default()).unwrap();
    let gt = eval::ground_truth(&fx.handle, &fx.mask, &cands, 10.0, RegionMode::PerRegionMax).unwrap();
    let report = eval::mscf1(&select_top_n(&ranked, 5), &gt, &EvalConfig::default()).unwrap();
    assert_eq!(report.mscf1, 1.0);
}

#[test]
fn ranking_is_independent_of_workers() {
    let fx = fixture(3);
    let cands = enumerate_candidates(&fx.handle, &CandidateStrategy::Exhaustive { stride: 1 }).unwrap();
    for spec in ["pca", "moransi", "const:0.2,0.2,0.2,0.2,0.1,0.1"] {
        let spec: ScorerSpec = spec.parse().unwrap();
        let run = |workers| {
            rank_peaks(&fx.handle, &cands, &spec, &RankOptions { ppm: 10.0, workers })
                .unwrap()
                .to_csv()
        };
        let one = run(1);
        assert_eq!(one, run(8));
        assert_eq!(one, run(1));
    }
}

#[test]
fn constant_scorer_ties_break_by_ascending_mz() {
    let fx = fixture(7);
    let cands = enumerate_candidates(&fx.handle, &CandidateStrategy::default()).unwrap();
    let ranked = rank_peaks(
        &fx.handle,
        &cands,
        &"const:0.5,0.1,0.1,0.1,0.1,0.1".parse().unwrap(),
        &RankOptions::default(),
    )
    .unwrap();
    let order: Vec<f64> = ranked.entries.iter().map(|e| e.mz).collect();
    assert_eq!(order, cands.mzs);
    assert!(ranked.entries.iter().all(|e| (e.score - 0.7).abs() < 1e-15));
}

#[test]
fn external_scorer_processes() {
    let fx = fixture(7);
    let dir = tempfile::tempdir().unwrap();
    let cands = enumerate_candidates(&fx.handle, &CandidateStrategy::default()).unwrap();
    let ok = common::constant_scorer_script(dir.path(), "ok.sh", "0.1,0.2,0.3,0.1,0.2,0.1");
    let spec = external(&ok, Duration::from_secs(30));
    let one = rank_peaks(&fx.handle, &cands, &spec, &RankOptions { ppm: 10.0, workers: 1 }).unwrap();
    let three = rank_peaks(&fx.handle, &cands, &spec, &RankOptions { ppm: 10.0, workers: 3 }).unwrap();
    assert_eq!(one.to_csv(), three.to_csv());
    assert!(one.entries.iter().all(|e| (e.score - 0.5).abs() < 1e-12));
    assert_eq!(one.len(), 20);

    let bad_sum = common::constant_scorer_script(dir.path(), "sum.sh", "0.1,0.1,0.1,0.1,0.1,0.1");
    let err = rank_peaks(&fx.handle, &cands, &external(&bad_sum, Duration::from_secs(30)), &RankOptions::default());
    assert!(matches!(err, Err(PeakError::Scorer { source: ScoreError::ProtocolViolation(_), .. })));

    let crash = common::write_script(dir.path(), "crash.sh", "#!/bin/sh\nread -r line\nexit 1\n");
    let err = rank_peaks(&fx.handle, &cands, &external(&crash, Duration::from_secs(30)), &RankOptions::default());
    assert!(matches!(err, Err(PeakError::Scorer { source: ScoreError::ScorerCrashed(_), .. })));

    let slow = common::write_script(dir.path(), "slow.sh", "#!/bin/sh\nsleep 5\n");
    let started = std::time::Instant::now();
    let err = rank_peaks(&fx.handle, &cands, &external(&slow, Duration::from_millis(300)), &RankOptions::default());
    assert!(matches!(err, Err(PeakError::Scorer { source: ScoreError::Timeout(_), .. })));
    assert!(started.elapsed() < Duration::from_secs(4));

    let reports = common::write_script(
        dir.path(),
        "err.sh",
        "#!/bin/sh\nwhile IFS= read -r line; do\n  id=$(printf '%s' \"$line\" | sed 's/^{\"id\":\\([0-9]*\\).*/\\1/')\n  printf '{\"id\":%s,\"error\":\"model not loaded\"}\\n' \"$id\"\ndone\n",
    );
    let err = rank_peaks(&fx.handle, &cands, &external(&reports, Duration::from_secs(30)), &RankOptions::default());
    match err {
        Err(PeakError::Scorer {
            mz,
            source: ScoreError::ScorerReported { message, .. },
        }) => {
            assert_eq!(message, "model not loaded");
            assert_eq!(mz, cands.mzs[0]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn patch_centers_match_ion_images() {
    let fx = fixture(7);
    let peaks = PeakList::from_mzs(fx.info.planted_mzs.clone(), "planted");
    let images: Vec<_> = peaks
        .mzs
        .iter()
        .map(|&m| extract_ion_image(&fx.handle, m, 10.0).unwrap())
        .collect();
    for p in [1, 3, 11] {
        let stream = patches::extract_patches(&fx.handle, &peaks, &fx.mask, p, 10.0).unwrap();
        let header = stream.header().clone();
        let cubes = stream.collect_parallel();
        assert_eq!(cubes.len(), fx.mask.labels().iter().filter(|&&l| l > 0).count());
        for cube in &cubes {
            let (x, y) = cube.center;
            assert_eq!(cube.label, fx.mask.label_at(x, y) as u16);
            for (c, img) in images.iter().enumerate() {
                assert_eq!(cube.center_spectrum()[c], img.get(x as usize, y as usize) as f32);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.iop");
        let summary = patches::export_patches(&header, cubes.clone(), &path).unwrap();
        assert_eq!(summary.record_count, cubes.len());
        let back = read_patches(&path).unwrap();
        assert_eq!(back.records.len(), cubes.len());
        for (a, b) in back.records.iter().zip(&cubes) {
            assert_eq!((a.label, a.center), (b.label, b.center));
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn patches_are_translation_consistent() {
    use ionmorph::msi_io::{write_dataset_with, WriteOptions};
    use ionmorph::{Mode, Spectrum};
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures::generate(&FixtureConfig {
        width: 8,
        height: 8,
        ..Default::default()
    });
    let (dx, dy) = (2u32, 3u32);
    let shifted: Vec<Spectrum> = fx
        .spectra
        .iter()
        .map(|s| Spectrum::new(s.x + dx, s.y + dy, s.mzs.clone(), s.intensities.clone()))
        .collect();
    let mut labels = vec![0u8; 10 * 11];
    for y in 0..8 {
        for x in 0..8 {
            labels[((y + dy) * 10 + x + dx) as usize] = fx.mask.label_at(x, y);
        }
    }
    let mask2 = SegmentationMask::new(10, 11, labels).unwrap();
    let a_path = dir.path().join("a.imzML");
    let b_path = dir.path().join("b.imzML");
    ionmorph::msi_io::write_dataset(&fx.spectra, Mode::Continuous, &a_path).unwrap();
    let opts = WriteOptions {
        width: Some(10),
        height: Some(11),
        ..Default::default()
    };
    write_dataset_with(&shifted, Mode::Continuous, &b_path, &opts).unwrap();
    let peaks = PeakList::from_mzs(fx.planted_mzs.clone(), "p");
    let a: Vec<_> = patches::extract_patches(&DatasetHandle::open(&a_path).unwrap(), &peaks, &fx.mask, 3, 10.0)
        .unwrap()
        .collect();
    let b: Vec<_> = patches::extract_patches(&DatasetHandle::open(&b_path).unwrap(), &peaks, &mask2, 3, 10.0)
        .unwrap()
        .collect();
    assert_eq!(a.len(), b.len());
    for (ca, cb) in a.iter().zip(&b) {
        assert_eq!((ca.center.0 + dx, ca.center.1 + dy), cb.center);
        let (x, y) = ca.center;
        if x >= 1 && y >= 1 && x + 1 < 8 && y + 1 < 8 {
            assert_eq!(ca.data, cb.data);
        }
    }
}

#[test]
fn constant_dataset_gives_flat_interior_cubes() {
    use ionmorph::{Mode, Spectrum};
    let dir = tempfile::tempdir().unwrap();
    let spectra: Vec<Spectrum> = (0..25)
        .map(|i| Spectrum::new(i % 5, i / 5, vec![100.0, 200.0], vec![3.0, 7.0]))
        .collect();
    let path = dir.path().join("flat.imzML");
    ionmorph::msi_io::write_dataset(&spectra, Mode::Continuous, &path).unwrap();
    let mask = SegmentationMask::new(5, 5, vec![1; 25]).unwrap();
    let peaks = PeakList::from_mzs(vec![100.0, 200.0], "p");
    for cube in patches::extract_patches(&DatasetHandle::open(&path).unwrap(), &peaks, &mask, 3, 10.0).unwrap() {
        let (x, y) = cube.center;
        if (1..4).contains(&x) && (1..4).contains(&y) {
            assert!(cube.data.chunks(2).all(|px| px == [3.0, 7.0]));
        }
    }
}

fn gt_from(scores: &[f64]) -> GroundTruthScores {
    GroundTruthScores {
        entries: scores.iter().enumerate().map(|(i, &s)| (100.0 + 10.0 * i as f64, s)).collect(),
        region_mode: RegionMode::PerRegionMax,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positives_shrink_with_threshold(scores in proptest::collection::vec(-1.0f64..1.0, 1..30), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let gt = gt_from(&scores);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let p_lo = gt.positives(lo);
        prop_assert!(gt.positives(hi).iter().all(|m| p_lo.contains(m)));
    }

    #[test]
    fn adding_a_true_positive_never_lowers_f1(
        scores in proptest::collection::vec(-1.0f64..1.0, 2..30),
        picks in proptest::collection::vec(any::<bool>(), 30),
        t in 0.1f64..0.9,
    ) {
        let gt = gt_from(&scores);
        let mut sel: Vec<f64> = gt.entries.iter().zip(&picks).filter(|(_, &p)| p).map(|(e, _)| e.0).collect();
        let before = eval::f1_at(&PeakList::from_mzs(sel.clone(), "s"), &gt, t, 5.0);
        prop_assert!(before.true_positives <= sel.len().min(before.gt_size));
        if let Some(extra) = gt.positives(t).into_iter().find(|m| !sel.contains(m)) {
            sel.push(extra);
            let after = eval::f1_at(&PeakList::from_mzs(sel, "s"), &gt, t, 5.0);
            prop_assert!(after.f1 >= before.f1);
        }
    }

    #[test]
    fn mscf1_is_mean_of_reported_f1(scores in proptest::collection::vec(-1.0f64..1.0, 1..30), picks in proptest::collection::vec(any::<bool>(), 30)) {
        let gt = gt_from(&scores);
        let sel: Vec<f64> = gt.entries.iter().zip(&picks).filter(|(_, &p)| p).map(|(e, _)| e.0).collect();
        if let Ok(r) = eval::mscf1(&PeakList::from_mzs(sel, "s"), &gt, &EvalConfig::default()) {
            let mean = r.thresholds.iter().map(|t| t.f1).sum::<f64>() / r.thresholds.len() as f64;
            prop_assert_eq!(r.mscf1, mean);
            prop_assert!((0.0..=1.0).contains(&r.mscf1));
            prop_assert_eq!(r.thresholds.len() + r.skipped_thresholds.len(), 5);
        }
    }

    #[test]
    fn union_is_idempotent_and_commutative(
        a in proptest::collection::vec(100.0f64..1000.0, 0..20),
        b in proptest::collection::vec(100.0f64..1000.0, 0..20),
        ppm in 0.0f64..50.0,
    ) {
        let (la, lb) = (PeakList::from_mzs(a.clone(), "a"), PeakList::from_mzs(b.clone(), "b"));
        let u = union_peaklists(&[la.clone(), lb.clone()], ppm);
        let swapped = union_peaklists(&[lb.clone(), la.clone()], ppm);
        prop_assert_eq!(&u.mzs, &swapped.mzs);
        prop_assert!(u.mzs.windows(2).all(|w| w[0] < w[1]));
        let again = union_peaklists(&[u.clone(), la, lb], ppm);
        prop_assert_eq!(again.mzs.len(), u.mzs.len());
        for (x, y) in again.mzs.iter().zip(&u.mzs) {
            prop_assert!((x - y).abs() <= 1e-9 * y);
        }
        for m in a.iter().chain(&b) {
            prop_assert!(u.mzs.iter().any(|r| (r - m).abs() <= ppm * 1e-6 * r * 40.0 + 1e-9));
        }
    }

    #[test]
    fn top_n_is_prefix_of_ranking(scores in proptest::collection::vec(0.0f64..1.0, 1..30), n in 0usize..40) {
        let mzs: Vec<f64> = (0..scores.len()).map(|i| 100.0 + i as f64).collect();
        let ranked = ionmorph::peaks::RankedPeaks::from_scores(&mzs, &scores, "t".into(), ionmorph::TargetSet::ALL);
        let top = select_top_n(&ranked, n);
        prop_assert_eq!(top.len(), n.min(scores.len()));
        let kept_min = top.mzs.iter().map(|m| scores[(m - 100.0) as usize]).fold(f64::INFINITY, f64::min);
        for (i, s) in scores.iter().enumerate() {
            if !top.mzs.contains(&mzs[i]) {
                prop_assert!(*s <= kept_min);
            }
        }
    }
}
