use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use affgan_core::data::{build_dataset, synth_fixture, DataConfig, FixtureOptions};
use affgan_core::experiment::{
    collect_results, load_dataset, load_font, plan_grid, prepare_output_dir, read_json, run_grid, write_report,
    CellStatus, DatasetEntry, ExperimentConfig, ExperimentError, GridOptions, RunManifest, ScoreTable,
};
use affgan_core::metrics::StubExtractor;
use image::{Rgb, RgbImage};

fn fixture_datasets(root: &Path) -> Vec<DatasetEntry> {
    let opts = FixtureOptions {
        image_size: 32,
        ..FixtureOptions::default()
    };
    let a = synth_fixture(20, 1, &root.join("a"), &opts).unwrap();
    let b_manifest = synth_fixture(20, 2, &root.join("b"), &opts).unwrap();
    let b = build_dataset(&[b_manifest], &DataConfig::default()).unwrap();
    b.write_csv(&root.join("b.csv")).unwrap();
    let c = root.join("c");
    for class in ["cat", "dog"] {
        std::fs::create_dir_all(c.join(class)).unwrap();
        for i in 0..10u8 {
            let v = if class == "cat" { 40 + i } else { 200 - i };
            RgbImage::from_pixel(32, 32, Rgb([v, 90, 255 - v]))
                .save(c.join(class).join(format!("{i}.png")))
                .unwrap();
        }
    }
    vec![
        DatasetEntry {
            id: "alpha".into(),
            manifests: vec![a],
            ..Default::default()
        },
        DatasetEntry {
            id: "beta".into(),
            csv: Some(root.join("b.csv")),
            ..Default::default()
        },
        DatasetEntry {
            id: "gamma".into(),
            image_dir: Some(c),
            ..Default::default()
        },
    ]
}

fn dry_run_config(datasets: Vec<DatasetEntry>) -> ExperimentConfig {
    let text = r#"
        seed = 3
        [model]
        image_size = 32
        latent_dim = 8
        base_width = 4
        [train]
        epochs = 1
        batch_size = 10
        eval_every_epochs = 1
        metric_batch = 16
    "#;
    let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
    cfg.grid.datasets = datasets;
    cfg
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn full_dry_run_grid_survives_a_divergent_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = dry_run_config(fixture_datasets(tmp.path()));
    // One cell is pushed to divergence with an absurd discriminator step.
    let poison: toml::Table = toml::from_str("lr_discriminator = 1e30\nlr_generator = 1e30").unwrap();
    cfg.grid.overrides.push(affgan_core::experiment::CellOverride {
        model: Some("dcgan-dropout".into()),
        dataset: Some("beta".into()),
        train: poison,
    });
    cfg.validate().unwrap();
    let datasets: Vec<_> = cfg
        .grid
        .datasets
        .iter()
        .map(|d| load_dataset(d, &cfg.data, cfg.model.image_size).unwrap())
        .collect();
    let cells = plan_grid(&cfg, &datasets).unwrap();
    assert_eq!(cells.len(), 36);

    let out = tmp.path().join("out");
    prepare_output_dir(&out, false).unwrap();
    let table = run_grid(&cells, &datasets, &StubExtractor::default(), &out, &GridOptions {
        workers: 2,
        repeats: 1,
        resume: false,
    })
    .unwrap();
    assert_eq!(table.len(), 36);
    let failed: Vec<_> = table.rows().iter().filter(|r| r.status == CellStatus::Failed).collect();
    assert_eq!(failed.len(), 1, "{}", table.to_csv());
    assert_eq!((failed[0].model_id.as_str(), failed[0].dataset.as_str()), ("dcgan-dropout", "beta"));
    assert!(failed[0].error.contains("non-finite"), "{}", failed[0].error);
    assert!(table
        .rows()
        .iter()
        .filter(|r| r.status == CellStatus::Ok)
        .all(|r| r.best_fid.is_finite() && r.best_epoch == Some(1)));

    // Manifests carry spec, config and dataset hash.
    let m: RunManifest = read_json(&out.join("cells/pagan-batch_norm__gamma/manifest.json")).unwrap();
    assert_eq!(m.spec.num_classes, 0);
    assert_eq!(m.dataset_hash, datasets[2].content_hash);
    let m: RunManifest = read_json(&out.join("cells/cgan-dropout__gamma/manifest.json")).unwrap();
    assert_eq!(m.spec.num_classes, 2);

    let font = load_font(None);
    let r1 = tmp.path().join("report1");
    let r2 = tmp.path().join("report2");
    let s1 = write_report(&out, &r1, font.as_ref()).unwrap();
    write_report(&out, &r2, font.as_ref()).unwrap();
    assert_eq!(files_under(&r1), files_under(&r2));
    assert_eq!(s1.table, table);
    assert_eq!(s1.line_plots.len(), 35);
    assert_eq!(s1.bar_charts.len(), 3);
    assert_eq!(std::fs::read_to_string(r1.join("score_table.csv")).unwrap(), table.to_csv());
    let bars = std::fs::read_to_string(r1.join("best_fid/beta.csv")).unwrap();
    let values: Vec<f64> = bars.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 11);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn one_by_one_grid_matches_its_run_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = dry_run_config(fixture_datasets(tmp.path()));
    cfg.grid.models = vec!["wgan_gp-dropout".into()];
    cfg.grid.datasets.truncate(1);
    cfg.train.epochs = 2;
    let datasets = vec![load_dataset(&cfg.grid.datasets[0], &cfg.data, 32).unwrap()];
    let cells = plan_grid(&cfg, &datasets).unwrap();
    let out = tmp.path().join("out");
    let opts = GridOptions {
        workers: 1,
        repeats: 1,
        resume: false,
    };
    let table = run_grid(&cells, &datasets, &StubExtractor::default(), &out, &opts).unwrap();
    let records = collect_results(&out).unwrap();
    assert_eq!(records.len(), 1);
    let run = &records[0].results[0];
    assert_eq!(table.rows()[0].best_fid, run.best_fid);
    assert_eq!(table.rows()[0].best_kid, run.best_kid);

    assert!(matches!(prepare_output_dir(&out, false), Err(ExperimentError::OutputNotEmpty(_))));
    let again = run_grid(&cells, &datasets, &StubExtractor::default(), &out, &GridOptions { resume: true, ..opts }).unwrap();
    assert_eq!(again, table);
}

#[test]
fn repeats_report_medians() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = dry_run_config(fixture_datasets(tmp.path()));
    cfg.grid.models = vec!["dcgan-batch_norm".into()];
    cfg.grid.datasets.truncate(1);
    let datasets = vec![load_dataset(&cfg.grid.datasets[0], &cfg.data, 32).unwrap()];
    let cells = plan_grid(&cfg, &datasets).unwrap();
    let out = tmp.path().join("out");
    let opts = GridOptions {
        workers: 1,
        repeats: 3,
        resume: false,
    };
    let table: ScoreTable = run_grid(&cells, &datasets, &StubExtractor::default(), &out, &opts).unwrap();
    let rec = &collect_results(&out).unwrap()[0];
    let mut fids: Vec<f64> = rec.results.iter().map(|r| r.best_fid).collect();
    fids.sort_by(f64::total_cmp);
    assert_eq!(rec.results.len(), 3);
    assert_eq!(table.rows()[0].best_fid, fids[1]);
    assert_eq!(table.rows()[0].repeats, 3);
    assert!(fids[0] < fids[2]);
}
