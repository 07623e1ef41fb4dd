use std::fs;
use std::path::{Path, PathBuf};

use gar_core::dataset::{assemble_dataset, ColumnSelection, RegressionDataset};
use gar_core::decomposition::{linear_posterior_summary, local_projections, write_decomposition_csv, write_projections_csv};
use gar_core::evaluation::{evaluate, recursive_mean_path, ScoreSeries};
use gar_core::forecast::{recursive_forecast, ForecastConfig, QuantilePath};
use gar_core::preprocess::{avg_log_growth_3y, hp_detrend, spline_disaggregate};
use gar_core::qr::{fit_quantile_regression, recursive_quantile_regression, write_fits_csv};
use gar_core::sampler::{getting_it_right, harness_spec, run_chain, PosteriorDraws, SamplerConfig};
use gar_core::seed::derive_seed;
use gar_core::series::{read_annual_csv, read_quarterly_csv, write_quarterly_csv, QuarterlySeries};
use gar_core::stats::quantile_sorted;
use gar_core::synthetic::simulate_dgp;
use gar_core::YearQuarter;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Variant};
use crate::error::{CliError, CliResult};

// Stream identifiers for seed splitting.
const FIT_STREAM: u64 = 1;
const FORECAST_STREAM: u64 = 2;
const GIRTEST_STREAM: u64 = 3;

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    details: Value,
}

fn variant_index(v: Variant) -> u64 {
    match v {
        Variant::Baseline => 0,
        Variant::Extended => 1,
    }
}

fn label(kind: &str, v: Variant) -> String {
    format!("{kind}{}", v.suffix())
}

impl Run {
    fn stage_dir(&self, stage: &str) -> CliResult<PathBuf> {
        let dir = self.out.join(stage);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).display().to_string()
    }

    fn require(&self, p: &Path, producer: &'static str) -> CliResult<()> {
        if p.exists() {
            Ok(())
        } else {
            Err(CliError::Dependency {
                artifact: self.rel(p),
                producer,
            })
        }
    }

    fn write_manifest(&self, command: &str, stage: &str, inputs: &[PathBuf], outputs: &[PathBuf], details: Value) -> CliResult<()> {
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: &self.cfg,
            inputs: inputs.iter().map(|p| self.rel(p)).collect(),
            outputs: outputs.iter().map(|p| self.rel(p)).collect(),
            details,
        };
        let path = self.out.join(stage).join("manifest.json");
        let text = serde_json::to_string_pretty(&m).map_err(gar_core::Error::from)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    fn dataset_path(&self, v: Variant, h: usize) -> PathBuf {
        self.out.join("datasets").join(format!("{}_h{h}.csv", v.slug()))
    }

    fn forecast_path(&self, kind: &str, v: Variant, h: usize) -> PathBuf {
        self.out.join("forecasts").join(format!("{kind}_{}_h{h}.csv", v.slug()))
    }

    fn grid(&self) -> Vec<(Variant, usize)> {
        let mut g = Vec::new();
        for &v in &self.cfg.model.variants {
            for &h in &self.cfg.model.horizons {
                g.push((v, h));
            }
        }
        g
    }

    fn load_dataset(&self, v: Variant, h: usize) -> CliResult<(PathBuf, RegressionDataset)> {
        let p = self.dataset_path(v, h);
        self.require(&p, "preprocess")?;
        let ds = RegressionDataset::read_csv(&p, h)?;
        Ok((p, ds))
    }

    fn load_path(&self, kind: &str, v: Variant, h: usize) -> CliResult<(PathBuf, QuantilePath)> {
        let p = self.forecast_path(kind, v, h);
        self.require(&p, "forecast")?;
        let path = QuantilePath::read_csv(&p)?;
        Ok((p, path))
    }
}

fn schema(file: &Path, detail: String) -> CliError {
    CliError::Core(gar_core::Error::Schema {
        file: file.display().to_string(),
        detail,
    })
}

fn take_quarterly(all: &[QuarterlySeries], name: &str, file: &Path) -> CliResult<QuarterlySeries> {
    all.iter()
        .find(|s| s.name == name)
        .cloned()
        .ok_or_else(|| schema(file, format!("missing column `{name}`")))
}

/// Builds the regression datasets from raw CSVs.
pub fn preprocess(run: &Run) -> CliResult<()> {
    let d = run.cfg.data()?;
    let qfile = run.cfg.resolve(&d.quarterly);
    if !qfile.exists() {
        return Err(CliError::Config(format!("quarterly data file {} does not exist", qfile.display())));
    }
    let quarterly = read_quarterly_csv(&qfile)?;
    let afile = d.annual.as_ref().map(|a| run.cfg.resolve(a));
    let annual = match &afile {
        Some(a) if !a.exists() => {
            return Err(CliError::Config(format!("annual data file {} does not exist", a.display())));
        }
        Some(a) => read_annual_csv(a)?,
        None => Vec::new(),
    };
    let mut inputs = vec![qfile.clone()];
    inputs.extend(afile.clone());

    let mut gdp = take_quarterly(&quarterly, &d.gdp, &qfile)?;
    if !d.gdp_is_log {
        if let Some(i) = gdp.values.iter().position(|v| !(*v > 0.0)) {
            return Err(schema(&qfile, format!("column `{}` has non-positive level at {}", d.gdp, gdp.date(i))));
        }
        gdp.values.iter_mut().for_each(|v| *v = v.ln());
    }

    let raw_stress = take_quarterly(&quarterly, &d.stress, &qfile)?;
    let mut stress = if d.detrend_stress {
        hp_detrend(&raw_stress, d.stress_lambda)?.1.renamed(d.stress.clone())
    } else {
        raw_stress
    };
    if d.standardize_stress {
        stress = stress.z_scored()?;
    }
    let mut predictors = vec![stress];
    let mut transforms = vec![json!({
        "column": d.stress,
        "transform": if d.detrend_stress { "hp_cycle" } else { "level" },
        "lambda": d.detrend_stress.then_some(d.stress_lambda),
        "standardized": d.standardize_stress,
    })];

    for name in [&d.credit, &d.house].into_iter().flatten() {
        let (level, source) = match quarterly.iter().find(|s| &s.name == name) {
            Some(s) => (s.clone(), "quarterly"),
            None => {
                let a = annual.iter().find(|s| &s.name == name).ok_or_else(|| {
                    schema(afile.as_deref().unwrap_or(&qfile), format!("missing column `{name}`"))
                })?;
                (spline_disaggregate(a, d.knot_quarter)?, "annual_spline")
            }
        };
        predictors.push(avg_log_growth_3y(&level)?.renamed(name.clone()));
        transforms.push(json!({
            "column": name,
            "transform": "avg_log_growth_3y",
            "source": source,
            "knot_quarter": (source == "annual_spline").then_some(d.knot_quarter),
        }));
    }

    let dir = run.stage_dir("datasets")?;
    let series_path = dir.join("series.csv");
    write_quarterly_csv(&series_path, &predictors)?;
    let mut outputs = vec![series_path];
    let mut datasets = Vec::new();
    for (v, h) in run.grid() {
        let selection = match v {
            Variant::Baseline => ColumnSelection::baseline(&d.stress),
            Variant::Extended => ColumnSelection::extended(
                &d.stress,
                d.credit.as_deref().expect("validated"),
                d.house.as_deref().expect("validated"),
            ),
        };
        let ds = assemble_dataset(&gdp, &predictors, h, &selection)?;
        let p = run.dataset_path(v, h);
        ds.write_csv(&p)?;
        datasets.push(json!({
            "file": run.rel(&p),
            "variant": v.slug(),
            "horizon": h,
            "columns": ds.columns,
            "rows": ds.len(),
            "observed": ds.n_observed(),
            "first_origin": ds.origins.first(),
            "last_origin": ds.origins.last(),
        }));
        outputs.push(p);
    }
    let ranges: Vec<Value> = std::iter::once(&gdp)
        .chain(&predictors)
        .map(|s| json!({"name": s.name, "start": s.start, "end": s.end(), "len": s.len()}))
        .collect();
    run.write_manifest(
        "preprocess",
        "datasets",
        &inputs,
        &outputs,
        json!({"transforms": transforms, "series": ranges, "datasets": datasets}),
    )?;
    println!("preprocess: wrote {} datasets to {}", datasets.len(), dir.display());
    Ok(())
}

/// Writes a dataset drawn from the `[synthetic]` process in place of
/// `preprocess`, as the baseline variant.
pub fn simulate(run: &Run) -> CliResult<()> {
    let spec = run
        .cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("`simulate` needs a [synthetic] section".into()))?;
    let spec = gar_core::synthetic::DgpSpec {
        seed: derive_seed(run.seed, &[0]),
        ..spec.clone()
    };
    if run.cfg.model.horizons != [spec.horizon] || run.cfg.model.variants != [Variant::Baseline] {
        return Err(CliError::Config(format!(
            "a synthetic run needs variants = [\"baseline\"] and horizons = [{}]",
            spec.horizon
        )));
    }
    let sample = simulate_dgp(&spec)?;
    let dir = run.stage_dir("datasets")?;
    let p = run.dataset_path(Variant::Baseline, spec.horizon);
    sample.data.write_csv(&p)?;
    let truth = dir.join("truth.csv");
    let mut w = csv::Writer::from_path(&truth).map_err(gar_core::Error::from)?;
    let mut header = vec!["origin".to_string()];
    header.extend(sample.data.columns.iter().cloned());
    header.push("log_vol".into());
    w.write_record(&header).map_err(gar_core::Error::from)?;
    for (t, o) in sample.data.origins.iter().enumerate() {
        let mut rec = vec![o.to_string()];
        rec.extend(sample.coefficients[t].iter().map(|v| format!("{v}")));
        rec.push(format!("{}", sample.truth.log_vol[t]));
        w.write_record(&rec).map_err(gar_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&truth, e))?;
    run.write_manifest("simulate", "datasets", &[], &[p.clone(), truth], json!({"synthetic": spec}))?;
    println!("simulate: wrote {}", p.display());
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    origin: YearQuarter,
    parameter: String,
    median: f64,
    lower: f64,
    upper: f64,
}

fn posterior_summary(draws: &PosteriorDraws, origins: &[YearQuarter]) -> Vec<SummaryRow> {
    let band = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.05), quantile_sorted(&v, 0.95))
    };
    let mut rows = Vec::new();
    for (t, &origin) in origins.iter().enumerate() {
        for (j, col) in draws.columns.iter().enumerate() {
            let (median, lower, upper) = band(draws.coefficient_path_draws(t, j));
            rows.push(SummaryRow {
                origin,
                parameter: col.clone(),
                median,
                lower,
                upper,
            });
        }
        let (median, lower, upper) = band(draws.extract(|p| p.log_vol[t].exp()));
        rows.push(SummaryRow {
            origin,
            parameter: "sigma2".into(),
            median,
            lower,
            upper,
        });
    }
    rows
}

/// Full-sample estimation of every model.
pub fn fit(run: &Run) -> CliResult<()> {
    let dir = run.stage_dir("fit")?;
    let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
    let mut details = Vec::new();
    for (v, h) in run.grid() {
        let (p, ds) = run.load_dataset(v, h)?;
        inputs.push(p);
        let train = ds.training();
        let spec = run.cfg.model_spec(h, ds.k());
        let sampler = SamplerConfig {
            seed: derive_seed(run.seed, &[FIT_STREAM, variant_index(v), h as u64]),
            ..run.cfg.sampler
        };
        let draws = run_chain(&spec, &train, &sampler)?;
        let draws_dir = dir.join(format!("tvp_{}_h{h}", v.slug()));
        draws.write_dir(&draws_dir)?;
        let summary = dir.join(format!("tvp_{}_h{h}_summary.csv", v.slug()));
        let mut w = csv::Writer::from_path(&summary).map_err(gar_core::Error::from)?;
        for row in posterior_summary(&draws, &train.origins) {
            w.serialize(row).map_err(gar_core::Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(&summary, e))?;

        let fits = run
            .cfg
            .model
            .probs
            .iter()
            .map(|&tau| fit_quantile_regression(&ds, tau, &run.cfg.qr))
            .collect::<gar_core::Result<Vec<_>>>()?;
        let qr = dir.join(format!("qr_{}_h{h}.csv", v.slug()));
        write_fits_csv(&qr, &fits)?;
        details.push(json!({
            "variant": v.slug(),
            "horizon": h,
            "retained_draws": draws.len(),
            "acceptance": draws.acceptance,
        }));
        outputs.extend([draws_dir, summary, qr]);
    }
    run.write_manifest("fit", "fit", &inputs, &outputs, json!(details))?;
    println!("fit: estimated {} models into {}", details.len(), dir.display());
    Ok(())
}

fn default_start(ds: &RegressionDataset, min_training: usize) -> CliResult<YearQuarter> {
    ds.origins
        .get(min_training + ds.horizon - 1)
        .copied()
        .ok_or_else(|| CliError::Config(format!("horizon {} dataset is too short for {min_training} training rows", ds.horizon)))
}

/// Recursive out-of-sample quantile paths for the TVP and QR models.
pub fn forecast(run: &Run) -> CliResult<()> {
    let dir = run.stage_dir("forecasts")?;
    let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
    let mut details = Vec::new();
    for (v, h) in run.grid() {
        let (p, ds) = run.load_dataset(v, h)?;
        inputs.push(p);
        let min_training = run.cfg.recursive.min_training;
        let start = match run.cfg.recursive.start {
            Some(s) => s,
            None => default_start(&ds, min_training)?,
        };
        let cfg = ForecastConfig {
            sampler: SamplerConfig {
                seed: derive_seed(run.seed, &[FORECAST_STREAM, variant_index(v)]),
                ..run.cfg.sampler
            },
            probs: run.cfg.model.probs.clone(),
            min_training,
        };
        let tvp = recursive_forecast(&ds, &run.cfg.model_spec(h, ds.k()), &cfg, start)?;
        let qr = recursive_quantile_regression(&ds, &cfg.probs, start, min_training, &run.cfg.qr)?;
        let (tp, qp) = (run.forecast_path("tvp", v, h), run.forecast_path("qr", v, h));
        tvp.write_csv(&tp)?;
        qr.write_csv(&qp)?;
        details.push(json!({"variant": v.slug(), "horizon": h, "start": start, "origins": tvp.len()}));
        outputs.extend([tp, qp]);
    }
    run.write_manifest("forecast", "forecasts", &inputs, &outputs, json!(details))?;
    println!("forecast: wrote {} quantile paths to {}", outputs.len(), dir.display());
    Ok(())
}

/// Quantile scores relative to the baseline QR model, tail dispersion and
/// cumulative score paths.
pub fn evaluate_cmd(run: &Run) -> CliResult<()> {
    let tau = run.cfg.evaluation.tau;
    let ev = &run.cfg.evaluation;
    if !run.cfg.model.variants.contains(&Variant::Baseline) {
        return Err(CliError::Config("evaluation compares against the baseline QR model; add the baseline variant".into()));
    }
    let mut inputs = Vec::new();
    let mut series = Vec::new();
    let mut paths = Vec::new();
    for (v, h) in run.grid() {
        for kind in ["qr", "tvp"] {
            let (p, path) = run.load_path(kind, v, h)?;
            inputs.push(p);
            let name = label(&kind.to_uppercase(), v);
            series.push(ScoreSeries::from_path(&name, &path, tau)?);
            paths.push((name, path));
        }
    }
    let mut report = evaluate(&series, "QR", &ev.periods, &ev.exclusions)?;
    for (name, path) in &paths {
        report.add_dispersion(name, path, &ev.periods, &ev.exclusions);
    }
    let dir = run.stage_dir("evaluation")?;
    let (scores, dispersion) = (dir.join("scores.csv"), dir.join("dispersion.csv"));
    report.write_csv(&scores, &dispersion)?;
    let text = dir.join("report.txt");
    fs::write(&text, report.to_text()).map_err(|e| CliError::io(&text, e))?;

    let by_origin = dir.join("scores_by_origin.csv");
    let mut w = csv::Writer::from_path(&by_origin).map_err(gar_core::Error::from)?;
    w.write_record(["model", "horizon", "origin", "score"]).map_err(gar_core::Error::from)?;
    for s in &series {
        for (o, v) in s.origins.iter().zip(&s.scores) {
            w.write_record([s.model.clone(), s.horizon.to_string(), o.to_string(), format!("{v}")])
                .map_err(gar_core::Error::from)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&by_origin, e))?;

    let cumulative = dir.join("cumulative.csv");
    let mut w = csv::Writer::from_path(&cumulative).map_err(gar_core::Error::from)?;
    w.write_record(["model", "horizon", "origin", "relative"]).map_err(gar_core::Error::from)?;
    for s in series.iter().filter(|s| s.model != "QR") {
        let base = series.iter().find(|b| b.model == "QR" && b.horizon == s.horizon).expect("baseline present");
        for (o, r) in s.origins.iter().zip(recursive_mean_path(s, base)?) {
            w.write_record([s.model.clone(), s.horizon.to_string(), o.to_string(), format!("{r}")])
                .map_err(gar_core::Error::from)?;
        }
    }
    w.flush().map_err(|e| CliError::io(&cumulative, e))?;

    run.write_manifest(
        "evaluate",
        "evaluation",
        &inputs,
        &[scores, dispersion, text, by_origin, cumulative],
        json!({"tau": tau, "baseline": "QR"}),
    )?;
    print!("{}", report.to_text());
    Ok(())
}

/// Rolling linear summaries of the TVP quantile paths.
pub fn decompose(run: &Run) -> CliResult<()> {
    let mut inputs = Vec::new();
    let mut results = Vec::new();
    for (v, h) in run.grid() {
        let (dp, ds) = run.load_dataset(v, h)?;
        let (fp, path) = run.load_path("tvp", v, h)?;
        inputs.extend([dp, fp]);
        for &p in &run.cfg.model.probs {
            results.push((v, linear_posterior_summary(&path, &ds, p, &run.cfg.decomposition.summary)?));
        }
    }
    let dir = run.stage_dir("decomposition")?;
    let mut outputs = Vec::new();
    let mut details = Vec::new();
    for &v in &run.cfg.model.variants {
        let mine: Vec<_> = results.iter().filter(|(w, _)| *w == v).map(|(_, r)| r.clone()).collect();
        let p = dir.join(format!("{}.csv", v.slug()));
        write_decomposition_csv(&mine, &p)?;
        outputs.push(p);
        for r in &mine {
            details.push(json!({
                "variant": v.slug(),
                "horizon": r.horizon,
                "prob": r.prob,
                "windows": r.windows.len(),
                "skipped": r.skipped,
            }));
        }
        let dates = &run.cfg.decomposition.projection_dates;
        if !dates.is_empty() {
            for &prob in &run.cfg.model.probs {
                let at_p: Vec<_> = mine.iter().filter(|r| r.prob == prob).cloned().collect();
                let rows = local_projections(&at_p, &run.cfg.model.horizons, dates)?;
                let p = dir.join(format!("{}_projections_p{prob}.csv", v.slug()));
                write_projections_csv(&rows, &p)?;
                outputs.push(p);
            }
        }
    }
    run.write_manifest("decompose", "decomposition", &inputs, &outputs, json!(details))?;
    println!("decompose: wrote {} files to {}", outputs.len(), dir.display());
    Ok(())
}

/// Joint-distribution test of the sampler.
pub fn girtest(run: &Run) -> CliResult<()> {
    let g = &run.cfg.girtest;
    let spec = if g.model_priors {
        run.cfg.model_spec(1, g.k)
    } else {
        harness_spec(g.k)
    };
    let cfg = gar_core::sampler::GewekeConfig {
        seed: derive_seed(run.seed, &[GIRTEST_STREAM]),
        ..g.harness
    };
    let report = getting_it_right(&spec, g.t_len, &cfg)?;
    let dir = run.stage_dir("girtest")?;
    let (json_path, text_path) = (dir.join("report.json"), dir.join("report.txt"));
    let text = serde_json::to_string_pretty(&report).map_err(gar_core::Error::from)?;
    fs::write(&json_path, text + "\n").map_err(|e| CliError::io(&json_path, e))?;
    fs::write(&text_path, report.to_text()).map_err(|e| CliError::io(&text_path, e))?;
    run.write_manifest(
        "girtest",
        "girtest",
        &[],
        &[json_path, text_path],
        json!({"passed": report.passed(), "pass_fraction": report.pass_fraction(), "spec": spec}),
    )?;
    print!("{}", report.to_text());
    Ok(())
}
