//! Grid enumeration, sweep execution and report emission.

mod report;
mod spec;

use std::path::Path;

use rayon::prelude::*;

pub use report::{
    aggregate_report, read_rows, write_plot_data, write_rows, write_skip_log, write_slopes,
    AlphaSummary, Report, SlopeReport, ROWS_HEADER, SLOPES_HEADER,
};
pub use spec::{
    reciprocal_alpha_grid, CyFilter, Featurizer, Grid, ModelConfig, ModelSpec, SlopePoints,
    SweepSpec,
};

use crate::corpus::{self, build_vocabulary, featurize_unigram, Corpus, Features};
use crate::error::{Error, Result};
use crate::metrics::{auprc, LogBase};
use crate::model::{fit, DesignMatrix};
use crate::sampler::{
    cell_rng, check_feasibility, derive_rates, draw_split_with_rng, plan_cells, solve_test_rates,
    CellCounts, CellPlan, DerivedRates, ShiftSetting,
};
use crate::synth::oracle_score;

/// A grid point that survived every feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSetting {
    /// Position in the Cartesian enumeration of the grids; stable across
    /// corpora and filters.
    pub id: usize,
    pub setting: ShiftSetting,
    pub rates: DerivedRates,
    pub test_rates: (f64, f64),
    pub plan: CellPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSetting {
    pub id: usize,
    pub setting: ShiftSetting,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub settings: Vec<PlannedSetting>,
    pub skipped: Vec<SkippedSetting>,
}

/// Cartesian product of the grids in the order `p0, p1, cz, alpha_test`,
/// keeping the points whose rates are defined and whose cell plan fits the
/// corpus counts in `available`.
pub fn enumerate_settings(spec: &SweepSpec, available: &CellCounts) -> Result<Enumeration> {
    let p0s = spec.p_train_y1_z0.values()?;
    let p1s = spec.p_train_y1_z1.values()?;
    let czs = spec.cz.values()?;
    let alphas = spec.alpha_test.values()?;

    let mut out = Enumeration::default();
    let mut id = 0;
    for &p0 in &p0s {
        for &p1 in &p1s {
            for &cz in &czs {
                for &alpha in &alphas {
                    let setting = ShiftSetting {
                        p_train_y1_z0: p0,
                        p_train_y1_z1: p1,
                        cz,
                        alpha_test: alpha,
                        n_train: spec.n_train,
                        n_test: spec.n_test,
                    };
                    match plan_setting(id, setting, spec.cy_filter.as_ref(), available) {
                        Ok(planned) => out.settings.push(planned),
                        Err(reason) => {
                            log::debug!("skipping setting {id}: {reason}");
                            out.skipped.push(SkippedSetting {
                                id,
                                setting,
                                reason,
                            });
                        }
                    }
                    id += 1;
                }
            }
        }
    }
    if out.settings.is_empty() {
        return Err(Error::NoFeasibleSettings {
            skipped: out.skipped.len(),
        });
    }
    log::info!(
        "{} feasible settings, {} skipped",
        out.settings.len(),
        out.skipped.len()
    );
    Ok(out)
}

fn plan_setting(
    id: usize,
    setting: ShiftSetting,
    cy_filter: Option<&CyFilter>,
    available: &CellCounts,
) -> std::result::Result<PlannedSetting, String> {
    let rates = match derive_rates(&setting) {
        Ok(r) => r,
        Err(Error::UndefinedRatio) => return Err("undefined ratio: P_train(y=1|z=0) = 0".into()),
        Err(e) => return Err(e.to_string()),
    };
    if let Some(filter) = cy_filter {
        if !filter.accepts(rates.cy) {
            return Err(format!("cy filter: cy = {} not selected", rates.cy));
        }
    }
    let test_rates =
        solve_test_rates(setting.cz, rates.cy, setting.alpha_test).map_err(|e| e.to_string())?;
    let train = plan_cells(
        setting.n_train,
        setting.cz,
        setting.p_train_y1_z0,
        setting.p_train_y1_z1,
    )
    .map_err(|e| e.to_string())?;
    let test = plan_cells(setting.n_test, setting.cz, test_rates.0, test_rates.1)
        .map_err(|e| e.to_string())?;
    let plan = CellPlan { train, test };
    check_feasibility(&plan, available).map_err(|d| format!("insufficient records: {d}"))?;
    Ok(PlannedSetting {
        id,
        setting,
        rates,
        test_rates,
        plan,
    })
}

/// One measured AUPRC.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting_id: usize,
    pub cy: f64,
    pub alpha_train: f64,
    pub alpha_test: f64,
    pub repeat: usize,
    pub model: String,
    pub auprc: f64,
    pub n_train_cells: CellCounts,
    pub n_test_cells: CellCounts,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub enumeration: Enumeration,
}

/// Loads the spec's corpus (attaching embeddings when configured) and runs
/// the sweep with its logistic models.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepOutput> {
    spec.validate()?;
    let corpus = load_spec_corpus(spec)?;
    run_sweep_on(spec, &corpus, &spec.model_specs(), jobs)
}

/// Reads `spec.corpus` and prepares it for the configured featurizer.
pub fn load_spec_corpus(spec: &SweepSpec) -> Result<Corpus> {
    let corpus = corpus::load_corpus(&spec.corpus, spec.source_names.clone())?;
    let corpus = match &spec.featurizer {
        Featurizer::Embedding { path } => corpus::attach_embeddings(&corpus, path)?,
        Featurizer::Unigram { .. } => corpus,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Runs every `(setting, repeat)` cell on an in-memory corpus.
///
/// Each cell draws from its own generator stream, so `jobs` changes only
/// the wall-clock time, never the rows. Rows come back sorted by setting,
/// repeat and model position.
pub fn run_sweep_on(
    spec: &SweepSpec,
    corpus: &Corpus,
    models: &[ModelSpec],
    jobs: usize,
) -> Result<SweepOutput> {
    let enumeration = enumerate_settings(spec, &corpus.cell_counts())?;
    let cells: Vec<(&PlannedSetting, usize)> = enumeration
        .settings
        .iter()
        .flat_map(|s| (0..spec.repeats).map(move |r| (s, r)))
        .collect();

    let run = |&(setting, repeat): &(&PlannedSetting, usize)| {
        run_cell(spec, corpus, models, setting, repeat).map_err(|e| Error::Cell {
            setting_id: setting.id,
            repeat,
            source: Box::new(e),
        })
    };
    let per_cell: Vec<Vec<SweepRow>> = if jobs <= 1 {
        cells.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect::<Result<_>>())?
    };

    let mut rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();
    let order: Vec<String> = models.iter().map(ModelSpec::tag).collect();
    rows.sort_by_key(|r| {
        let m = order
            .iter()
            .position(|t| *t == r.model)
            .unwrap_or(usize::MAX);
        (r.setting_id, r.repeat, m)
    });
    Ok(SweepOutput { rows, enumeration })
}

/// Draws, fits and scores one `(setting, repeat)` cell. The result depends
/// only on the spec's base seed, the setting id and the repeat.
pub fn run_cell(
    spec: &SweepSpec,
    corpus: &Corpus,
    models: &[ModelSpec],
    setting: &PlannedSetting,
    repeat: usize,
) -> Result<Vec<SweepRow>> {
    let mut rng = cell_rng(spec.seed, setting.id, repeat);
    let split = draw_split_with_rng(corpus, &setting.plan.train, &setting.plan.test, &mut rng)?;
    let records = corpus.records();

    let (dim, train_rows, test_rows) = match &spec.featurizer {
        Featurizer::Unigram { min_df } => {
            let space = build_vocabulary(split.train.iter().map(|&i| &records[i]), *min_df)?;
            let featurize = |idx: &[usize]| -> Result<Vec<Features>> {
                idx.iter()
                    .map(|&i| featurize_unigram(&records[i], &space).map(Features::Binary))
                    .collect()
            };
            (
                space.dim(),
                featurize(&split.train)?,
                featurize(&split.test)?,
            )
        }
        Featurizer::Embedding { .. } => {
            let dense = |idx: &[usize]| -> Result<Vec<Features>> {
                idx.iter()
                    .map(|&i| match &records[i].features {
                        Some(f @ Features::Dense(_)) => Ok(f.clone()),
                        _ => Err(Error::MissingEmbeddings(vec![records[i].id.clone()])),
                    })
                    .collect()
            };
            let train = dense(&split.train)?;
            let dim = match train.first() {
                Some(Features::Dense(v)) => v.len(),
                _ => 0,
            };
            (dim, train, dense(&split.test)?)
        }
    };
    let design = DesignMatrix::new(dim, train_rows)?;
    let y_train: Vec<u8> = split.train.iter().map(|&i| records[i].y).collect();
    let z_train: Vec<u8> = split.train.iter().map(|&i| records[i].z).collect();
    let y_test: Vec<u8> = split.test.iter().map(|&i| records[i].y).collect();

    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let scores: Vec<f64> = match model {
            ModelSpec::Logistic(cfg) => {
                let z = cfg.adjusted.then_some(z_train.as_slice());
                let fitted = fit(&design, &y_train, z, &cfg.lr_config())?;
                if !fitted.converged {
                    log::warn!(
                        "setting {} repeat {} model {}: solver stopped at max_iter (gradient {:e})",
                        setting.id,
                        repeat,
                        cfg.tag(),
                        fitted.gradient_norm
                    );
                }
                test_rows
                    .iter()
                    .map(|x| fitted.model.score(x))
                    .collect::<Result<_>>()?
            }
            ModelSpec::Oracle(synth) => split
                .test
                .iter()
                .map(|&i| oracle_score(&records[i], synth))
                .collect::<Result<_>>()?,
        };
        rows.push(SweepRow {
            setting_id: setting.id,
            cy: setting.rates.cy,
            alpha_train: setting.rates.alpha_train,
            alpha_test: setting.setting.alpha_test,
            repeat,
            model: model.tag(),
            auprc: auprc(&scores, &y_test)?,
            n_train_cells: setting.plan.train,
            n_test_cells: setting.plan.test,
        });
    }
    Ok(rows)
}

/// Writes `rows.csv`, `skipped.csv`, `slopes.csv` and `plot_data.jsonl`
/// under `out_dir`.
pub fn write_outputs(out: &SweepOutput, spec: &SweepSpec, out_dir: &Path) -> Result<Report> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_rows(out_dir.join("rows.csv"), &out.rows)?;
    write_skip_log(out_dir.join("skipped.csv"), &out.enumeration.skipped)?;
    let report = aggregate_report(&out.rows, spec.slope_points, LogBase::E);
    write_slopes(out_dir.join("slopes.csv"), &report.slopes)?;
    write_plot_data(out_dir.join("plot_data.jsonl"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SynthConfig};

    fn ample() -> CellCounts {
        CellCounts::from_zy([[5000, 5000], [5000, 5000]])
    }

    fn small_spec() -> SweepSpec {
        SweepSpec {
            p_train_y1_z0: Grid::List(vec![0.3]),
            p_train_y1_z1: Grid::List(vec![0.1]),
            cz: Grid::List(vec![0.5]),
            alpha_test: Grid::List(vec![0.25, 0.5, 1.0, 2.0, 4.0]),
            ..SweepSpec::template(800, 200)
        }
    }

    #[test]
    fn enumerates_the_cy_02_column() {
        let e = enumerate_settings(&small_spec(), &ample()).unwrap();
        assert_eq!(e.settings.len(), 5);
        for s in &e.settings {
            assert!((s.rates.cy - 0.2).abs() < 1e-12);
        }
        assert!(e.skipped.is_empty());
    }

    #[test]
    fn cy_filter_excludes_everything() {
        let spec = SweepSpec {
            cy_filter: Some(CyFilter {
                values: vec![0.48],
                tolerance: 1e-9,
            }),
            ..small_spec()
        };
        assert!(matches!(
            enumerate_settings(&spec, &ample()),
            Err(Error::NoFeasibleSettings { skipped: 5 })
        ));
    }

    #[test]
    fn infeasible_rates_are_logged() {
        // cz = 0.5 and cy = 0.8, as in the test-rate solver example
        let spec = SweepSpec {
            p_train_y1_z0: Grid::List(vec![0.8]),
            p_train_y1_z1: Grid::List(vec![0.8]),
            alpha_test: Grid::List(vec![1.0, 8.0]),
            ..small_spec()
        };
        let e = enumerate_settings(&spec, &ample()).unwrap();
        assert_eq!(e.settings.len(), 1);
        assert_eq!(e.skipped.len(), 1);
        assert_eq!(e.skipped[0].setting.alpha_test, 8.0);
        assert!(e.skipped[0].reason.starts_with("infeasible rates"));
    }

    #[test]
    fn insufficient_corpus_is_logged() {
        let scarce = CellCounts::from_zy([[5000, 5000], [5000, 10]]);
        let e = enumerate_settings(&small_spec(), &scarce);
        let err = e.unwrap_err();
        assert!(matches!(err, Error::NoFeasibleSettings { skipped: 5 }));
    }

    #[test]
    fn row_accounting() {
        let corpus = generate_corpus(&SynthConfig {
            n_per_source: [1500, 1500],
            ..SynthConfig::default()
        })
        .unwrap();
        let spec = SweepSpec {
            n_train: 200,
            n_test: 100,
            repeats: 5,
            ..small_spec()
        };
        let out = run_sweep_on(&spec, &corpus, &spec.model_specs(), 1).unwrap();
        assert_eq!(out.rows.len(), 5 * 5 * 2);
        assert!(out.rows.iter().all(|r| (0.0..=1.0).contains(&r.auprc)));
    }
}
