use std::path::{Path, PathBuf};

use fdpl::dataset::{
    list_pngs, load_corpus, load_training_pair, patch_count, prepare_corpus, CorpusManifest, PATCH_SIZE, PATCH_STRIDE,
};
use fdpl::fdpl::{compute_diff_matrix, jpeg_luminance_qtable, LossKind, DEFAULT_EPSILON};
use fdpl::metrics::{Bicubic, EvalSet};
use fdpl::raster::{save_image, ImagePlane};
use fdpl::srcnn::{load_checkpoint, save_checkpoint, train, Init, SrcnnModel};
use fdpl::{DegradeConfig, PatchCorpus, TrainConfig};

fn fixtures(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(sub)
}

fn small_corpus() -> PatchCorpus {
    let cfg = DegradeConfig::default();
    let mut pairs = Vec::new();
    for path in list_pngs(fixtures("corpus")).unwrap().iter().take(4) {
        let (gt, deg) = load_training_pair(path, &cfg).unwrap();
        pairs.extend(fdpl::dataset::extract_patches(&gt, &deg, PATCH_SIZE, PATCH_STRIDE).unwrap());
    }
    PatchCorpus::from_pairs(&pairs).unwrap()
}

#[test]
fn prepared_corpus_round_trips_and_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let images = tmp.path().join("images");
    std::fs::create_dir(&images).unwrap();
    // Odd sizes exercise the centered crop and the partial last stride.
    let sizes = [(77, 50), (50, 77), (121, 96), (24, 24), (40, 100)];
    for (n, &(w, h)) in sizes.iter().enumerate() {
        let p = ImagePlane::from_fn(w, h, |r, c| ((r * 13 + c * 7 + n) % 29) as f64 / 28.0);
        save_image(&p, images.join(format!("{n}.png"))).unwrap();
    }
    let cfg = DegradeConfig::default();
    let report = prepare_corpus(&images, &cfg, tmp.path().join("out"), 5).unwrap();

    let m = cfg.crop_multiple();
    let expected: usize = sizes
        .iter()
        .map(|&(w, h)| patch_count(w / m * m, h / m * m, PATCH_SIZE, PATCH_STRIDE))
        .sum();
    // 72x48 -> 4x2, 48x72 -> 2x4, 120x96 -> 7x5, 24x24 -> none, 24x96 -> none
    assert_eq!(expected, 8 + 8 + 35);
    assert_eq!(report.manifest.entries.len(), expected);
    let skipped: Vec<_> = report.skipped.iter().map(|(p, _)| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(skipped, ["3.png", "4.png"]);

    let (manifest, corpus) = load_corpus(tmp.path().join("out")).unwrap();
    assert_eq!(corpus.len(), expected);
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.config, cfg);
    let text = std::fs::read_to_string(&report.manifest_file).unwrap();
    assert_eq!(CorpusManifest::from_text(&text).unwrap().entries, manifest.entries);

    // The first entry is the top-left patch of the first image.
    let (gt, deg) = load_training_pair(&images.join("0.png"), &cfg).unwrap();
    let first = corpus.pair(0);
    assert_eq!((manifest.entries[0].row, manifest.entries[0].col), (0, 0));
    for r in 0..PATCH_SIZE {
        for c in 0..PATCH_SIZE {
            assert_eq!(first.target.get(r, c), gt.get(r, c) as f32 as f64);
            assert_eq!(first.input.get(r, c), deg.get(r, c) as f32 as f64);
        }
    }
}

#[test]
fn diff_matrix_on_fixture_corpus_has_expected_shape() {
    let cfg = DegradeConfig::default();
    let pairs: Vec<_> = list_pngs(fixtures("corpus"))
        .unwrap()
        .iter()
        .map(|p| load_training_pair(p, &cfg).unwrap())
        .collect();
    let stats = compute_diff_matrix(pairs.iter().map(|(g, d)| (g, d)), DEFAULT_EPSILON).unwrap();
    assert_eq!(stats.num_blocks, 24 * 12 * 12);
    let d = stats.d.values();
    let mean = d.iter().sum::<f64>() / 64.0;
    assert!((mean - 1.0).abs() < 1e-9);
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    assert!(d[0] <= (sorted[31] + sorted[32]) / 2.0);
    assert!(d.iter().all(|&v| v > 0.0));
}

#[test]
fn saved_checkpoint_scores_identically() {
    let cfg = DegradeConfig::default();
    let eval = EvalSet::from_dir(fixtures("eval"), &cfg).unwrap();
    let corpus = small_corpus();
    let mut model = SrcnnModel::with_widths(8, 4, Init::default(), 3);
    let tc = TrainConfig { batch_size: 8, max_steps: 3, eval_every: 0, ..Default::default() };
    train(&mut model, &corpus, &tc, &fdpl::MseLoss, None, |_, _| Ok(())).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.srcnn");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(eval.evaluate(&model).unwrap(), eval.evaluate(&loaded).unwrap());
}

#[test]
fn loss_choice_changes_the_trajectory() {
    let corpus = small_corpus();
    let cfg = DegradeConfig::default();
    let pairs: Vec<_> = list_pngs(fixtures("corpus"))
        .unwrap()
        .iter()
        .map(|p| load_training_pair(p, &cfg).unwrap())
        .collect();
    let d = compute_diff_matrix(pairs.iter().map(|(g, d)| (g, d)), DEFAULT_EPSILON).unwrap().d;
    let start = SrcnnModel::with_widths(8, 4, Init::default(), 21);

    let run = |kind: LossKind, steps: usize| {
        let mut m = start.clone();
        let loss = kind.build(Some(&d)).unwrap();
        let tc = TrainConfig { batch_size: 4, max_steps: steps, loss_kind: kind, seed: 2, eval_every: 0, ..Default::default() };
        let log = train(&mut m, &corpus, &tc, loss.as_ref(), None, |_, _| Ok(())).unwrap();
        (m, log)
    };
    let (mse, mse_log) = run(LossKind::Mse, 2);
    let (fd, _) = run(LossKind::Fdpl, 2);
    let (at, _) = run(LossKind::FdplAt, 2);
    assert_ne!(mse, fd);
    assert_ne!(fd, at);
    assert_ne!(mse, at);
    // Same seed and loss: the shuffle order and therefore the log repeat.
    assert_eq!(run(LossKind::Mse, 2).1, mse_log);
}

#[test]
fn fdpl_at_transposes_the_quantization_table() {
    use fdpl::fdpl::{antidiagonal_transpose, fdpl_loss, WeightMatrix};
    let q = jpeg_luminance_qtable();
    let d = WeightMatrix::ones();
    let gt = ImagePlane::from_fn(16, 8, |r, c| ((r * 5 + c * 3) % 7) as f64 / 7.0);
    let out = gt.map(|v| v * 0.7);
    let at = LossKind::FdplAt.build(Some(&d)).unwrap();
    let direct = fdpl_loss(&gt, &out, &antidiagonal_transpose(&q), &d).unwrap();
    assert!((at.loss(&gt, &out).unwrap() - direct).abs() < 1e-15);
    let plain = LossKind::Fdpl.build(Some(&d)).unwrap();
    assert!((plain.loss(&gt, &out).unwrap() - direct).abs() > 1e-6);
}

#[test]
fn bicubic_baseline_on_eval_fixtures() {
    let eval = EvalSet::from_dir(fixtures("eval"), &DegradeConfig::default()).unwrap();
    let report = eval.evaluate(&Bicubic).unwrap();
    assert_eq!(report.rows.len(), 5);
    // Degradation loses information but leaves the images recognizable.
    for row in &report.rows {
        assert!(row.psnr > 15.0 && row.psnr < 45.0, "{row:?}");
        assert!(row.ssim > 0.3 && row.ssim < 1.0, "{row:?}");
    }
}
