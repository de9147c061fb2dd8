//! The experiment commands. Each reads its inputs from the configured corpus
//! paths and `out_dir`, writes its artifacts to `out_dir`, and returns what it
//! wrote for programmatic use.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use intsense_core::design::{
    assemble_q, build_design_problem, make_sensing_operator, svt_solve, DesignProblem, SensingDesign,
    SensingOperatorPair, SvtOutcome,
};
use intsense_core::format::{read_design, read_prior, write_design, write_prior};
use intsense_core::ggd::{fit_beta, BetaFitReport, GgdShape, MggdModel};
use intsense_core::pipeline::{compute_delta_targets, estimate_integral, pca_operator, sense, DeltaTargets};
use intsense_core::transforms::{
    box_filter_from_integral, build_wavelet_basis, rsnr, BlockLayout, IntegralOperator, WaveletBasis,
};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::config::{Config, HeatmapOperator};
use crate::corpus::{check_disjoint, write_pgm, Corpus, Image, Split};
use crate::error::{HarnessError, IoContext, Result};

pub const PRIOR_FILE: &str = "prior.bin";
pub const BETA_FIT_FILE: &str = "beta_fit.csv";
pub const DELTA_FILE: &str = "delta.csv";
pub const DESIGN_FILE: &str = "design.bin";
pub const SINGULAR_VALUES_FILE: &str = "singular_values.csv";
pub const FEASIBILITY_FILE: &str = "feasibility.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const DESIGN_SUMMARY_FILE: &str = "design_summary.csv";
pub const RECORDS_FILE: &str = "eval_records.csv";
pub const SUMMARY_FILE: &str = "eval_summary.csv";
pub const HEATMAP_EXACT_FILE: &str = "heatmap_exact.pgm";
pub const HEATMAP_ESTIMATE_FILE: &str = "heatmap_estimate.pgm";
pub const HEATMAP_META_FILE: &str = "heatmap.txt";

/// Columns holding wall-clock measurements; everything else is deterministic.
pub const TIME_COLUMNS: [&str; 2] = ["estimate_time_s", "mean_estimate_time_s"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).at(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).at(path)
}

fn ensure_out_dir(config: &Config) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir).at(&config.out_dir)
}

pub fn basis_for(config: &Config) -> Result<WaveletBasis> {
    Ok(build_wavelet_basis(
        config.model.block_side,
        config.levels(),
        config.wavelet()?,
    )?)
}

/// Detail coefficients (everything but the DC term) of each block.
pub fn detail_samples(blocks: &[Vec<f64>], basis: &WaveletBasis) -> Result<Vec<Vec<f64>>> {
    blocks.iter().map(|b| Ok(basis.analyze(b)?[1..].to_vec())).collect()
}

/// Unbiased sample covariance of row samples.
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let count = samples.len();
    if count < 2 {
        return Err(intsense_core::Error::InsufficientData(format!("{count} samples, need at least 2")).into());
    }
    let dim = samples[0].len();
    let mut mean = DVector::<f64>::zeros(dim);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= count as f64;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut energy = 0.0;
    for s in samples {
        let v = DVector::from_column_slice(s);
        energy += v.norm_squared();
        let c = v - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (count - 1) as f64;
    if cov.trace() <= 1e-24 * energy.max(f64::MIN_POSITIVE) {
        return Err(intsense_core::Error::InsufficientData("zero-variance corpus".into()).into());
    }
    Ok((&cov + cov.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MggdModel,
    pub report: BetaFitReport,
    pub covariance: DMatrix<f64>,
    pub images: usize,
}

/// Covariance of the detail coefficients, then the shape fit on the grid.
pub fn fit_model(blocks: &[Vec<f64>], config: &Config) -> Result<FitOutcome> {
    let basis = basis_for(config)?;
    let n = basis.len();
    let floor = config.design.n_components + 1;
    if blocks.len() < floor {
        return Err(intsense_core::Error::InsufficientData(format!(
            "{} training images, need at least {floor}",
            blocks.len()
        ))
        .into());
    }
    if blocks.len() < n {
        warn!(
            "fit: {} training images for a {n}-pixel block; covariance will be rank deficient",
            blocks.len()
        );
    }
    let samples = detail_samples(blocks, &basis)?;
    let covariance = sample_covariance(&samples)?;
    let per_coordinate: Vec<Vec<f64>> = (0..n - 1).map(|j| samples.iter().map(|s| s[j]).collect()).collect();
    let report = fit_beta(&per_coordinate, &config.model.beta_grid, config.model.histogram_bins)?;
    let model = MggdModel::from_covariance(report.best, &covariance)?;
    info!("fit: {} images, beta = {}", blocks.len(), report.best.value());
    Ok(FitOutcome {
        model,
        report,
        covariance,
        images: blocks.len(),
    })
}

pub fn cmd_fit(config: &Config) -> Result<FitOutcome> {
    let train = Corpus::load(&config.corpus.train, Split::Train)?;
    let outcome = fit_model(&train.downsampled_blocks(config.model.block_side), config)?;
    ensure_out_dir(config)?;
    let path = config.out_dir.join(PRIOR_FILE);
    let mut w = create(&path)?;
    write_prior(&mut w, &outcome.model)?;
    w.flush().at(&path)?;
    write_text(&config.out_dir.join(BETA_FIT_FILE), &outcome.report.to_csv())?;
    Ok(outcome)
}

pub fn load_prior(config: &Config) -> Result<MggdModel> {
    let path = config.out_dir.join(PRIOR_FILE);
    Ok(read_prior(&mut BufReader::new(File::open(&path).at(&path)?))?)
}

pub fn load_design(config: &Config) -> Result<SensingDesign> {
    let path = config.out_dir.join(DESIGN_FILE);
    Ok(read_design(&mut BufReader::new(File::open(&path).at(&path)?))?)
}

#[derive(Debug, Clone)]
pub struct DesignRun {
    pub targets: DeltaTargets,
    pub problem: DesignProblem,
    pub outcome: SvtOutcome,
    pub design: SensingDesign,
}

/// Distortion targets from `blocks`, the conic program under `model`, the
/// solver, and the factorized design.
pub fn design_from_blocks(
    blocks: &[Vec<f64>],
    model: &MggdModel,
    config: &Config,
    corpus_id: &str,
) -> Result<DesignRun> {
    let f = config.model.block_side;
    let basis = basis_for(config)?;
    let d = &config.design;
    let targets = if d.zero_delta {
        DeltaTargets {
            delta: vec![0.0; f * f],
            corpus_id: corpus_id.to_string(),
            n_components: 0,
            quantile: d.quantile,
        }
    } else {
        compute_delta_targets(blocks, f, d.n_components, d.quantile, corpus_id)?
    };
    let problem = build_design_problem(&basis, model, &targets.delta, d.eps)?;
    let started = Instant::now();
    let outcome = svt_solve(&problem, &config.svt(problem.max_b_norm()))?;
    info!(
        "design: {} iterations in {:.2?}, max violation {:e}",
        outcome.iterations,
        started.elapsed(),
        outcome.final_violation()
    );
    let mut design = assemble_q(&outcome.p)?;
    design.record_feasibility(&problem, &outcome.p)?;
    design.converged = outcome.converged;
    Ok(DesignRun {
        targets,
        problem,
        outcome,
        design,
    })
}

fn design_summary_csv(run: &DesignRun) -> String {
    let d = &run.design;
    let rows: Vec<(&str, String)> = vec![
        ("block_len", d.len().to_string()),
        ("converged", d.converged.to_string()),
        ("iterations", run.outcome.iterations.to_string()),
        ("max_violation", run.outcome.final_violation().to_string()),
        ("max_b_norm", run.problem.max_b_norm().to_string()),
        ("tau", run.outcome.tau.to_string()),
        ("eta", run.outcome.eta.to_string()),
        ("objective", run.outcome.objective().to_string()),
        ("rank_p", d.rank_p.to_string()),
        ("rank_q", d.rank_q.to_string()),
        ("rank_identity", d.rank_identity_holds().to_string()),
        ("mean_leakage", d.mean_leakage.to_string()),
    ];
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

/// Runs the design and writes it even when the solver stops early; the
/// design file then carries no converged flag and the caller sees
/// `design.converged == false`.
pub fn cmd_design(config: &Config) -> Result<DesignRun> {
    let model = load_prior(config)?;
    let train = Corpus::load(&config.corpus.train, Split::Train)?;
    train.expect_split(Split::Train)?;
    let blocks = train.downsampled_blocks(config.model.block_side);
    let run = design_from_blocks(&blocks, &model, config, &train.root.display().to_string())?;

    ensure_out_dir(config)?;
    let out = &config.out_dir;
    write_text(&out.join(DELTA_FILE), &run.targets.to_csv())?;
    let path = out.join(DESIGN_FILE);
    let mut w = create(&path)?;
    write_design(&mut w, &run.design)?;
    w.flush().at(&path)?;
    write_text(&out.join(SINGULAR_VALUES_FILE), &run.design.singular_values_csv())?;
    write_text(&out.join(FEASIBILITY_FILE), &run.design.feasibility_csv())?;
    write_text(&out.join(HISTORY_FILE), &run.outcome.history_csv())?;
    write_text(&out.join(DESIGN_SUMMARY_FILE), &design_summary_csv(&run))?;

    let d = &run.design;
    info!("design: rank(Q*) = {}, rank(P*) = {}", d.rank_q, d.rank_p);
    if !d.converged {
        warn!(
            "design: solver did not converge; {} written without the converged flag",
            path.display()
        );
    } else if !d.rank_identity_holds() {
        return Err(HarnessError::RankIdentity {
            rank_q: d.rank_q,
            rank_p: d.rank_p,
        });
    }
    Ok(run)
}

/// Test image in the evaluated geometry: resampled to the working size and
/// cropped to whole blocks.
pub fn prepare_test_image(image: &Image, working_size: usize, block_side: usize) -> Result<(Vec<f64>, BlockLayout)> {
    let im = if working_size > 0 {
        image.resample(working_size, working_size)
    } else {
        image.clone()
    };
    let layout = BlockLayout::center_cropped(im.rows, im.cols, block_side)?;
    Ok((layout.crop(&im.pixels)?, layout))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub operator: String,
    pub image: String,
    pub m: usize,
    pub measurement_rate: f64,
    pub rsnr_integral: f64,
    pub rsnr_box: Vec<f64>,
    pub estimate_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub operator: String,
    pub m: usize,
    pub measurement_rate: f64,
    pub images: usize,
    pub mean_rsnr_integral: f64,
    pub mean_rsnr_box: Vec<f64>,
    pub mean_estimate_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub filters: Vec<usize>,
    pub records: Vec<EvalRecord>,
    pub summary: Vec<SummaryRow>,
    pub skipped_ranks: Vec<usize>,
}

/// RSNR of the integral image and of each box filter for one labelled operator.
pub fn evaluate_operator(
    label: &str,
    op: &SensingOperatorPair,
    test: &Corpus,
    working_size: usize,
    filters: &[usize],
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::with_capacity(test.len());
    for im in &test.images {
        let (pixels, layout) = prepare_test_image(im, working_size, op.block_side())?;
        let (rows, cols) = (layout.image_rows(), layout.image_cols());
        let exact = IntegralOperator::new(rows, cols)?.apply(&pixels)?;
        let meas = sense(&pixels, op, &layout)?;
        let started = Instant::now();
        let estimate = estimate_integral(&meas, op, &layout)?;
        let estimate_time_s = started.elapsed().as_secs_f64();
        let mut rsnr_box = Vec::with_capacity(filters.len());
        for &k in filters {
            let e = box_filter_from_integral(&estimate, rows, cols, k)?;
            let x = box_filter_from_integral(&exact, rows, cols, k)?;
            rsnr_box.push(rsnr(&e, &x)?);
        }
        records.push(EvalRecord {
            operator: label.to_string(),
            image: im.id.clone(),
            m: op.rank(),
            measurement_rate: op.measurement_rate(),
            rsnr_integral: rsnr(&estimate, &exact)?,
            rsnr_box,
            estimate_time_s,
        });
    }
    Ok(records)
}

pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in records {
        let pos = rows.iter().position(|s| s.operator == r.operator && s.m == r.m);
        let idx = pos.unwrap_or_else(|| {
            rows.push(SummaryRow {
                operator: r.operator.clone(),
                m: r.m,
                measurement_rate: r.measurement_rate,
                images: 0,
                mean_rsnr_integral: 0.0,
                mean_rsnr_box: vec![0.0; r.rsnr_box.len()],
                mean_estimate_time_s: 0.0,
            });
            counts.push(0);
            rows.len() - 1
        });
        let s = &mut rows[idx];
        s.images += 1;
        s.mean_rsnr_integral += r.rsnr_integral;
        for (acc, v) in s.mean_rsnr_box.iter_mut().zip(&r.rsnr_box) {
            *acc += v;
        }
        s.mean_estimate_time_s += r.estimate_time_s;
        counts[idx] += 1;
    }
    for s in &mut rows {
        let c = s.images as f64;
        s.mean_rsnr_integral /= c;
        s.mean_rsnr_box.iter_mut().for_each(|v| *v /= c);
        s.mean_estimate_time_s /= c;
    }
    rows
}

fn write_records(path: &Path, filters: &[usize], records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec![
        "operator".to_string(),
        "image".into(),
        "m".into(),
        "measurement_rate".into(),
        "rsnr_integral".into(),
    ];
    header.extend(filters.iter().map(|k| format!("rsnr_box_{k}")));
    header.push(TIME_COLUMNS[0].into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.operator.clone(),
            r.image.clone(),
            r.m.to_string(),
            r.measurement_rate.to_string(),
            r.rsnr_integral.to_string(),
        ];
        row.extend(r.rsnr_box.iter().map(f64::to_string));
        row.push(r.estimate_time_s.to_string());
        w.write_record(&row)?;
    }
    w.flush().at(path)
}

fn write_summary(path: &Path, filters: &[usize], rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec![
        "operator".to_string(),
        "m".into(),
        "measurement_rate".into(),
        "images".into(),
        "mean_rsnr_integral".into(),
    ];
    header.extend(filters.iter().map(|k| format!("mean_rsnr_box_{k}")));
    header.push(TIME_COLUMNS[1].into());
    w.write_record(&header)?;
    for s in rows {
        let mut row = vec![
            s.operator.clone(),
            s.m.to_string(),
            s.measurement_rate.to_string(),
            s.images.to_string(),
            s.mean_rsnr_integral.to_string(),
        ];
        row.extend(s.mean_rsnr_box.iter().map(f64::to_string));
        row.push(s.mean_estimate_time_s.to_string());
        w.write_record(&row)?;
    }
    w.flush().at(path)
}

/// Rank sweep over the design, the PCA baseline at the same ranks, and the
/// bypass row, on the test split only.
pub fn cmd_evaluate(config: &Config) -> Result<Evaluation> {
    let design = load_design(config)?;
    let f = config.model.block_side;
    if design.block_side() != f {
        return Err(HarnessError::Config(format!(
            "design has block side {}, config says {f}",
            design.block_side()
        )));
    }
    let train = Corpus::load(&config.corpus.train, Split::Train)?;
    let test = Corpus::load(&config.corpus.test, Split::Test)?;
    check_disjoint(&train, &test)?;
    let filters = &config.evaluate.filters;
    let ws = config.corpus.working_size;

    let mut operators: Vec<(String, SensingOperatorPair)> = Vec::new();
    let mut skipped_ranks = Vec::new();
    for &m in &config.evaluate.ranks {
        if m == 0 || m > design.numerical_rank() {
            warn!(
                "evaluate: M = {m} exceeds design rank {}, skipped",
                design.numerical_rank()
            );
            skipped_ranks.push(m);
            continue;
        }
        operators.push(("design".into(), make_sensing_operator(&design, m)?));
    }
    if config.evaluate.pca_baseline {
        let blocks = train.downsampled_blocks(f);
        for &m in &config.evaluate.ranks {
            if m >= 2 && m <= f * f && !skipped_ranks.contains(&m) {
                operators.push(("pca".into(), pca_operator(&blocks, f, m - 1)?));
            }
        }
    }
    if config.evaluate.identity_row {
        operators.push(("identity".into(), SensingOperatorPair::identity(f)?));
    }

    let mut records = Vec::new();
    for (label, op) in &operators {
        records.extend(evaluate_operator(label, op, &test, ws, filters)?);
    }
    let summary = summarize(&records);
    ensure_out_dir(config)?;
    write_records(&config.out_dir.join(RECORDS_FILE), filters, &records)?;
    write_summary(&config.out_dir.join(SUMMARY_FILE), filters, &summary)?;
    for s in &summary {
        info!(
            "evaluate: {:>8} M = {:>4}  RSNR {:.2} dB",
            s.operator, s.m, s.mean_rsnr_integral
        );
    }
    Ok(Evaluation {
        filters: filters.clone(),
        records,
        summary,
        skipped_ranks,
    })
}

/// Min-max normalization to 8 bits; a constant map becomes mid-gray.
pub fn to_8bit(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bytes = if max > min {
        values
            .iter()
            .map(|v| (255.0 * (v - min) / (max - min)).round() as u8)
            .collect()
    } else {
        vec![128; values.len()]
    };
    (bytes, min, max)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapReport {
    pub image: String,
    pub m: usize,
    pub k: usize,
    pub exact_range: (f64, f64),
    pub estimate_range: (f64, f64),
    pub correlation: f64,
}

fn write_gray(path: &Path, rows: usize, cols: usize, bytes: Vec<u8>) -> Result<()> {
    let gray = image::GrayImage::from_raw(cols as u32, rows as u32, bytes).expect("buffer matches dimensions");
    write_pgm(path, &gray)
}

/// Exact and estimated box-filter maps of one test image as 8-bit PGMs, each
/// normalized on its own range; the ranges go to the companion text file.
pub fn cmd_heatmap(config: &Config) -> Result<HeatmapReport> {
    let f = config.model.block_side;
    let test = Corpus::load(&config.corpus.test, Split::Test)?;
    let image = match &config.heatmap.image {
        Some(id) => test
            .images
            .iter()
            .find(|im| &im.id == id)
            .ok_or_else(|| HarnessError::Corpus {
                path: test.root.clone(),
                reason: format!("no test image {id}"),
            })?,
        None => &test.images[0],
    };
    let op = match config.heatmap.operator {
        HeatmapOperator::Identity => SensingOperatorPair::identity(f)?,
        HeatmapOperator::Design => {
            let design = load_design(config)?;
            let m = config.heatmap.rank.unwrap_or((design.numerical_rank() / 2).max(1));
            make_sensing_operator(&design, m)?
        }
    };
    let k = config.heatmap.filter;
    let (pixels, layout) = prepare_test_image(image, config.corpus.working_size, f)?;
    let (rows, cols) = (layout.image_rows(), layout.image_cols());
    let exact_integral = IntegralOperator::new(rows, cols)?.apply(&pixels)?;
    let exact = box_filter_from_integral(&exact_integral, rows, cols, k)?;
    let estimate_integral = estimate_integral(&sense(&pixels, &op, &layout)?, &op, &layout)?;
    let estimate = box_filter_from_integral(&estimate_integral, rows, cols, k)?;

    let (eb, emin, emax) = to_8bit(&exact);
    let (sb, smin, smax) = to_8bit(&estimate);
    ensure_out_dir(config)?;
    write_gray(&config.out_dir.join(HEATMAP_EXACT_FILE), rows, cols, eb)?;
    write_gray(&config.out_dir.join(HEATMAP_ESTIMATE_FILE), rows, cols, sb)?;
    let report = HeatmapReport {
        image: image.id.clone(),
        m: op.rank(),
        k,
        exact_range: (emin, emax),
        estimate_range: (smin, smax),
        correlation: correlation(&exact, &estimate),
    };
    let meta = format!(
        "image={}\nm={}\nk={}\nexact_min={}\nexact_max={}\nestimate_min={}\nestimate_max={}\ncorrelation={}\n",
        report.image, report.m, report.k, emin, emax, smin, smax, report.correlation
    );
    write_text(&config.out_dir.join(HEATMAP_META_FILE), &meta)?;
    Ok(report)
}

/// Model with a fixed shape for corpora too small to histogram.
pub fn model_with_shape(blocks: &[Vec<f64>], config: &Config, beta: f64) -> Result<MggdModel> {
    let samples = detail_samples(blocks, &basis_for(config)?)?;
    Ok(MggdModel::from_covariance(
        GgdShape::new(beta)?,
        &sample_covariance(&samples)?,
    )?)
}
