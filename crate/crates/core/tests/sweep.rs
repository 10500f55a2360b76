use std::collections::BTreeMap;
use std::fs;

use provshift::corpus::{self, build_vocabulary, EmbeddingTable, Pooling};
use provshift::metrics::LogBase;
use provshift::runner::{
    self, aggregate_report, enumerate_settings, run_cell, run_sweep, run_sweep_on, Featurizer,
    Grid, ModelSpec, SlopePoints, SweepRow, SweepSpec,
};
use provshift::sampler::{cell_rng, draw_split_with_rng};
use provshift::synth::{generate_corpus, SynthConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_spec(seed: u64) -> SweepSpec {
    SweepSpec {
        p_train_y1_z0: Grid::List(vec![0.3, 0.4]),
        p_train_y1_z1: Grid::List(vec![0.1, 0.2]),
        cz: Grid::List(vec![0.5]),
        alpha_test: Grid::List(vec![0.5, 1.0, 2.0]),
        repeats: 2,
        seed,
        ..SweepSpec::template(300, 100)
    }
}

fn synth(seed: u64) -> (SynthConfig, provshift::corpus::Corpus) {
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    (cfg, corpus)
}

#[test]
fn oracle_dominates_learned_models() {
    let (cfg, corpus) = synth(7);
    // test distribution equal to the training one: C_y = 0.3, alpha = 0.5
    let spec = SweepSpec {
        p_train_y1_z0: Grid::List(vec![0.4]),
        p_train_y1_z1: Grid::List(vec![0.2]),
        cz: Grid::List(vec![0.5]),
        alpha_test: Grid::List(vec![0.5]),
        repeats: 3,
        seed: 7,
        ..SweepSpec::template(800, 1000)
    };
    let mut models = spec.model_specs();
    models.push(ModelSpec::Oracle(cfg));
    let out = run_sweep_on(&spec, &corpus, &models, 3).unwrap();
    assert_eq!(out.rows.len(), 3 * 3);
    for repeat in 0..3 {
        let of = |tag: &str| {
            out.rows
                .iter()
                .find(|r| r.repeat == repeat && r.model == tag)
                .unwrap()
                .auprc
        };
        let oracle = of("oracle");
        for tag in ["unadjusted", "adjusted"] {
            assert!(
                oracle >= of(tag) - 0.02,
                "repeat {repeat}: oracle {oracle} vs {tag} {}",
                of(tag)
            );
        }
    }
}

#[test]
fn cell_execution_order_does_not_change_rows() {
    let (_, corpus) = synth(3);
    let spec = small_spec(11);
    let models = spec.model_specs();
    let reference = run_sweep_on(&spec, &corpus, &models, 1).unwrap();

    let enumeration = enumerate_settings(&spec, &corpus.cell_counts()).unwrap();
    let mut cells: Vec<(usize, usize)> = (0..enumeration.settings.len())
        .flat_map(|s| (0..spec.repeats).map(move |r| (s, r)))
        .collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let mut rows: Vec<SweepRow> = Vec::new();
    for (s, r) in cells {
        rows.extend(run_cell(&spec, &corpus, &models, &enumeration.settings[s], r).unwrap());
    }
    let key = |r: &SweepRow| (r.setting_id, r.repeat, r.model.clone());
    rows.sort_by_key(key);
    let mut expected = reference.rows.clone();
    expected.sort_by_key(key);
    assert_eq!(rows, expected);

    let a = aggregate_report(&rows, SlopePoints::Rows, LogBase::E);
    let b = aggregate_report(&reference.rows, SlopePoints::Rows, LogBase::E);
    assert_eq!(a.slopes, b.slopes);
    assert_eq!(a.means, b.means);
}

#[test]
fn same_seed_same_rows_other_seed_other_rows() {
    let (_, corpus) = synth(3);
    let models = small_spec(5).model_specs();
    let a = run_sweep_on(&small_spec(5), &corpus, &models, 2).unwrap();
    let b = run_sweep_on(&small_spec(5), &corpus, &models, 4).unwrap();
    let c = run_sweep_on(&small_spec(6), &corpus, &models, 2).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_ne!(
        a.rows.iter().map(|r| r.auprc).collect::<Vec<_>>(),
        c.rows.iter().map(|r| r.auprc).collect::<Vec<_>>()
    );
    // rows = settings x repeats x models
    assert_eq!(a.rows.len(), a.enumeration.settings.len() * 2 * 2);
}

#[test]
fn vocabulary_ignores_test_records() {
    let (_, corpus) = synth(4);
    let train_plan = provshift::sampler::plan_cells(300, 0.5, 0.3, 0.1).unwrap();
    let test_plan = provshift::sampler::plan_cells(100, 0.5, 0.2, 0.2).unwrap();
    for repeat in 0..5 {
        let split = draw_split_with_rng(
            &corpus,
            &train_plan,
            &test_plan,
            &mut cell_rng(1, 0, repeat),
        )
        .unwrap();
        let records = corpus.records();
        let before = build_vocabulary(split.train.iter().map(|&i| &records[i]), 1).unwrap();

        let mut changed = records.to_vec();
        for &i in &split.test {
            changed[i].text = Some(format!("unseen{i} leaked token"));
        }
        let changed =
            provshift::corpus::Corpus::new(changed, corpus.source_names().clone()).unwrap();
        let again = draw_split_with_rng(
            &changed,
            &train_plan,
            &test_plan,
            &mut cell_rng(1, 0, repeat),
        )
        .unwrap();
        assert_eq!(again, split);
        let after =
            build_vocabulary(again.train.iter().map(|&i| &changed.records()[i]), 1).unwrap();
        assert_eq!(before, after);
    }
}

/// Two-dimensional table: indicators of the signal and nuisance tokens.
fn indicator_table(corpus: &provshift::corpus::Corpus) -> EmbeddingTable {
    let rows: BTreeMap<String, Vec<f64>> = corpus
        .records()
        .iter()
        .map(|r| {
            let tokens = corpus::tokenize(r.text.as_deref().unwrap());
            let has = |t: &str| f64::from(u8::from(tokens.iter().any(|x| x == t)));
            (r.id.clone(), vec![has("signal"), has("nuisance")])
        })
        .collect();
    EmbeddingTable {
        dim: 2,
        pooling: Pooling::Mean,
        model: "indicator".into(),
        rows,
    }
}

#[test]
fn attaching_twice_is_idempotent() {
    let (_, corpus) = synth(2);
    let table = indicator_table(&corpus);
    let once = table.attach(&corpus).unwrap();
    let twice = table.attach(&once).unwrap();
    assert_eq!(once, twice);
    assert!(twice.has_embeddings());
}

#[test]
fn embedding_featurizer_sweep_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corpus) = synth(8);
    corpus::write_corpus(&corpus, dir.path().join("corpus.jsonl")).unwrap();
    indicator_table(&corpus)
        .write(dir.path().join("vectors.jsonl"))
        .unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        r#"
corpus = "corpus.jsonl"
source_names = ["site0", "site1"]
p_train_y1_z0 = [0.3]
p_train_y1_z1 = [0.1]
cz = [0.5]
alpha_test = [0.25, 1.0, 4.0]
n_train = 400
n_test = 200
repeats = 2
seed = 3

[featurizer]
kind = "embedding"
path = "vectors.jsonl"
"#,
    )
    .unwrap();
    let spec = SweepSpec::from_path(&config).unwrap();
    assert!(matches!(spec.featurizer, Featurizer::Embedding { .. }));
    let out = run_sweep(&spec, 2).unwrap();
    assert_eq!(out.rows.len(), 3 * 2 * 2);
    assert!(out.rows.iter().all(|r| r.auprc > 0.0 && r.auprc <= 1.0));

    let out_dir = dir.path().join("out");
    let report = runner::write_outputs(&out, &spec, &out_dir).unwrap();
    assert_eq!(report.slopes.len(), 2);
    let rows = runner::read_rows(out_dir.join("rows.csv")).unwrap();
    assert_eq!(rows, out.rows);
}

#[test]
fn embedding_sweep_rejects_incomplete_table() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corpus) = synth(8);
    corpus::write_corpus(&corpus, dir.path().join("corpus.jsonl")).unwrap();
    let mut table = indicator_table(&corpus);
    table.rows.remove("site1-00003");
    table.write(dir.path().join("vectors.jsonl")).unwrap();
    let spec = SweepSpec {
        corpus: dir.path().join("corpus.jsonl"),
        source_names: ["site0".into(), "site1".into()],
        featurizer: Featurizer::Embedding {
            path: dir.path().join("vectors.jsonl"),
        },
        ..small_spec(1)
    };
    let err = run_sweep(&spec, 1).unwrap_err();
    assert!(err.to_string().contains("site1-00003"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut sweeps = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name == "synth.toml" {
            let text = fs::read_to_string(&path).unwrap();
            let cfg: SynthConfig = toml::from_str(&text).unwrap();
            assert_eq!(cfg, SynthConfig::default());
        } else if name.ends_with(".toml") {
            let spec = SweepSpec::from_path(&path).unwrap();
            spec.validate().unwrap();
            sweeps += 1;
        }
    }
    assert!(sweeps >= 3);
    let full = SweepSpec::from_path(dir.join("sweep_800_200.toml")).unwrap();
    assert_eq!(full.p_train_y1_z0.values().unwrap().len(), 21);
    assert_eq!(
        full.alpha_test.values().unwrap(),
        runner::reciprocal_alpha_grid()
    );
}
