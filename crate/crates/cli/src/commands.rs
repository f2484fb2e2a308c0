use std::path::{Path, PathBuf};

use mortproj::aad::AadSurface;
use mortproj::data::{Gender, IncidenceSurface, MortalityPanel, PanelSchema, StandardPopulation};
use mortproj::mcmc::{sample, PosteriorDraws, PriorSet, SamplerConfig};
use mortproj::measures::{
    apply_delay_scenario, cumulative_excess, excess_tables, pearson_residuals, write_ced_csv,
    write_heatmap_csv, AllocationSchedule, ScenarioConfig,
};
use mortproj::projection::{
    load_surface_rows, project_rates, split_population, DeprivationShares, PopulationProjection, ProjectionConfig, ProjectionSurface,
};
use mortproj::selection::{forward_select, LadderConfig, SelectionConfig};
use mortproj::simlab::{generate, GeneratorConfig};
use mortproj::smoking::{backcast_all, SmokingSeries};
use mortproj::spec::{CovariateSet, ModelSpec, Term};

use crate::args::*;
use crate::manifest::{is_file_output, manifest_path, verify, Recorder};
use crate::CliError;

/// Environment variable naming the directory searched for relative input paths.
pub const DATA_DIR_VAR: &str = "MORTPROJ_DATA_DIR";

/// Resolves an input path, falling back to the data directory for relative
/// paths that do not exist as given.
fn input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_VAR) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Prepares the output location: the directory itself, or a file's parent.
fn prepare_out(out: &Path) -> Result<(), CliError> {
    if is_file_output(out) {
        match out.parent().filter(|p| !p.as_os_str().is_empty()) {
            Some(p) => ensure_dir(p),
            None => Ok(()),
        }
    } else {
        ensure_dir(out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn config_json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialise")
}

fn load_panel(args: &PanelArgs, rec: &mut Recorder) -> Result<MortalityPanel, CliError> {
    let (schema_path, panel_path) = (input(&args.schema), input(&args.panel));
    rec.input(&schema_path);
    rec.input(&panel_path);
    let schema = PanelSchema::load(&schema_path)?;
    Ok(MortalityPanel::load(&panel_path, &schema)?)
}

fn standard_population(path: Option<&PathBuf>, panel: &MortalityPanel, rec: &mut Recorder) -> Result<StandardPopulation, CliError> {
    let base = match path {
        Some(p) => {
            let p = input(p);
            rec.input(&p);
            StandardPopulation::load(&p)?
        }
        None => StandardPopulation::esp2013(),
    };
    let bands = panel
        .levels()
        .ages
        .clone()
        .ok_or_else(|| CliError::Usage("panel has no age groups".into()))?;
    Ok(base.for_bands(&bands)?)
}

fn build_covariates(
    spec: &ModelSpec,
    panel: &MortalityPanel,
    args: &CovariateArgs,
    rec: &mut Recorder,
) -> Result<CovariateSet, CliError> {
    if let Some(p) = &args.set {
        let p = input(p);
        rec.input(&p);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        return Ok(CovariateSet::from_json(&text)?);
    }
    let mut covs = CovariateSet::new();
    if spec.uses(mortproj::spec::Covariate::Aad) {
        let surface = match (&args.aad, &args.incidence) {
            (Some(p), _) => {
                let p = input(p);
                rec.input(&p);
                AadSurface::load(&p, panel.levels())?
            }
            (None, Some(p)) => {
                let p = input(p);
                rec.input(&p);
                let inc = IncidenceSurface::load(&p, panel.levels())?;
                let std = standard_population(args.std.as_ref(), panel, rec)?;
                AadSurface::build(&inc, &std, panel, args.region_only)?
            }
            (None, None) => return Err(CliError::Usage("model uses AAD: pass --aad or --incidence".into())),
        };
        covs = covs.with_aad(&surface, panel, args.region_only)?;
    }
    if spec.uses(mortproj::spec::Covariate::Ns) {
        let p = args
            .smoking
            .as_ref()
            .ok_or_else(|| CliError::Usage("model uses NS: pass --smoking".into()))?;
        let p = input(p);
        rec.input(&p);
        let series = SmokingSeries::load(&p)?;
        let through = args.ns_through.unwrap_or(panel.levels().last_year() + 18);
        covs = covs.with_ns(&series, panel, through)?;
    }
    Ok(covs)
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path, rec: &mut Recorder) -> Result<T, CliError> {
    let path = input(path);
    rec.input(&path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("ingest", None, config_json(args));
    let panel = load_panel(&args.input, &mut rec)?;
    prepare_out(&args.out)?;
    let panel_out = args.out.join("panel.csv");
    panel.save(&panel_out)?;
    let schema_out = write_text(&args.out.join("schema.toml"), &panel.schema().to_toml_string())?;
    rec.summary("cells", panel.len());
    rec.summary("total_deaths", panel.total_deaths());
    rec.summary("total_exposure", panel.total_exposure());
    rec.finish(&manifest_path(&args.out), &[panel_out, schema_out])?;
    Ok(())
}

pub fn smoking_backcast(args: &BackcastArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("smoking backcast", None, config_json(args));
    let path = input(&args.input);
    rec.input(&path);
    let series = SmokingSeries::load(&path)?;
    let full = backcast_all(&series, args.from, args.to)?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("ns_backcast.csv") };
    full.write_csv(create(&out)?)?;
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

pub fn aad(args: &AadArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("aad", None, config_json(args));
    let panel = load_panel(&args.input, &mut rec)?;
    let inc_path = input(&args.incidence);
    rec.input(&inc_path);
    let inc = IncidenceSurface::load(&inc_path, panel.levels())?;
    let std = standard_population(args.std.as_ref(), &panel, &mut rec)?;
    let surface = AadSurface::build(&inc, &std, &panel, args.region_only)?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("aad.csv") };
    surface.save(panel.levels(), &out)?;
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

fn sampler_config(args: &SamplerArgs, seed: u64, rec: &mut Recorder) -> Result<SamplerConfig, CliError> {
    let mut cfg: SamplerConfig = match &args.sampler {
        Some(p) => load_toml(p, rec)?,
        None => SamplerConfig::default(),
    };
    cfg.seed = seed;
    if let Some(v) = args.chains {
        cfg.chains = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.burnin {
        cfg.burnin = v;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    Ok(cfg)
}

fn priors(path: Option<&PathBuf>, rec: &mut Recorder) -> Result<PriorSet, CliError> {
    let p: PriorSet = match path {
        Some(p) => load_toml(p, rec)?,
        None => PriorSet::default(),
    };
    p.validate()?;
    Ok(p)
}

fn write_summary(draws: &PosteriorDraws, path: &Path) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["parameter", "mean", "lo95", "hi95", "rhat", "ess"])?;
    for (j, name) in draws.names.iter().enumerate() {
        let iv = draws.summary(j);
        let rhat = draws.diagnostics.rhat.as_ref().map_or_else(String::new, |r| format!("{:?}", r[j]));
        let ess = draws.diagnostics.ess.get(j).map_or_else(String::new, |e| format!("{e:?}"));
        w.write_record([name.clone(), format!("{:?}", iv.mean), format!("{:?}", iv.lo), format!("{:?}", iv.hi), rhat, ess])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn files_in(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("fit", Some(args.seed), config_json(args));
    let spec = match ModelSpec::resolve(&args.spec) {
        Ok(s) => s,
        Err(e) => {
            let p = input(Path::new(&args.spec));
            if p.exists() {
                rec.input(&p);
                ModelSpec::load(&p)?
            } else {
                return Err(e.into());
            }
        }
    };
    let panel = load_panel(&args.input, &mut rec)?;
    if panel.levels().cause != spec.cause {
        return Err(CliError::Usage(format!(
            "spec is for {} but the panel holds {}",
            spec.cause,
            panel.levels().cause
        )));
    }
    let panel = panel.gender(spec.gender)?;
    let covs = build_covariates(&spec, &panel, &args.covariates, &mut rec)?;
    let priors = priors(args.sampler.priors.as_ref(), &mut rec)?;
    let mut cfg = sampler_config(&args.sampler, args.seed, &mut rec)?;
    cfg.store_latent = args.store_latent;
    let draws = sample(&spec, &panel, &covs, &priors, &cfg)?;

    ensure_dir(&args.out)?;
    draws.save(&args.out)?;
    panel.save(args.out.join("panel.csv"))?;
    write_text(&args.out.join("schema.toml"), &panel.schema().to_toml_string())?;
    write_text(&args.out.join("spec.toml"), &spec.to_toml_string())?;
    write_text(&args.out.join("covariates.json"), &covs.to_json())?;
    write_summary(&draws, &args.out.join("summary.csv"))?;
    rec.summary("draws", draws.n_draws());
    rec.summary("max_rhat", draws.diagnostics.max_rhat());
    rec.summary("convergence_warning", draws.convergence_warning);
    if draws.convergence_warning {
        log::warn!("largest R-hat {:?} exceeds {}", draws.diagnostics.max_rhat(), cfg.rhat_threshold);
    }
    rec.finish(&manifest_path(&args.out), &files_in(&args.out)?)?;
    Ok(())
}

fn parse_terms(list: &str) -> Result<Vec<Term>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Term>().map_err(CliError::from))
        .collect()
}

pub fn select(args: &SelectArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("select", Some(args.seed), config_json(args));
    let gender: Gender = args.gender.parse()?;
    let panel = load_panel(&args.input, &mut rec)?.gender(gender)?;
    let null = ModelSpec::new("null", panel.levels().cause, gender, parse_terms(&args.null)?)?;
    let candidates = parse_terms(&args.candidates)?;
    let full = candidates.iter().try_fold(null.clone(), |s, t| if s.contains(t) { Ok(s) } else { s.with_term(*t) });
    // covariates are needed by any candidate, so build them for the union
    let union = full.unwrap_or_else(|_| null.clone());
    let covs = build_covariates(&union, &panel, &args.covariates, &mut rec)?;
    let mut ladder = LadderConfig::default();
    if let Some(v) = args.draws_per_rung {
        ladder.draws_per_rung = v;
    }
    if let Some(v) = args.rungs {
        ladder.rungs = v;
    }
    let cfg = SelectionConfig {
        threshold: args.threshold,
        two_stage: args.two_stage,
        seed: args.seed,
        ladder,
        priors: priors(args.priors.as_ref(), &mut rec)?,
        dic_sampler: args.dic.then(|| SamplerConfig {
            chains: 4,
            iters: 6000,
            burnin: 2000,
            thin: 4,
            ..Default::default()
        }),
    };
    let trace = forward_select(&candidates, &null, &panel, &covs, &cfg)?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("trace.csv") };
    trace.save_csv(&out)?;
    let selected: Vec<String> = trace.selected.terms.iter().map(|t| t.to_string()).collect();
    rec.summary("selected", selected);
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

/// A fitted run directory as written by `fit`.
struct Run {
    draws: PosteriorDraws,
    covariates: CovariateSet,
    panel: MortalityPanel,
}

fn load_run(dir: &Path, rec: &mut Recorder) -> Result<Run, CliError> {
    let dir = input(dir);
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let bad = verify(&manifest)?;
        if !bad.is_empty() {
            return Err(CliError::Integrity(format!("{}: changed since fit: {}", dir.display(), bad.join(", "))));
        }
    }
    for f in ["draws.json", "draws.bin", "covariates.json", "schema.toml", "panel.csv"] {
        rec.input(&dir.join(f));
    }
    let draws = PosteriorDraws::load(&dir)?;
    let cpath = dir.join("covariates.json");
    let text = std::fs::read_to_string(&cpath).map_err(|e| CliError::io(&cpath, e))?;
    let covariates = CovariateSet::from_json(&text)?;
    let schema = PanelSchema::load(dir.join("schema.toml"))?;
    let panel = MortalityPanel::load(dir.join("panel.csv"), &schema)?;
    Ok(Run { draws, covariates, panel })
}

fn population(args: &HorizonArgs, run: &Run, rec: &mut Recorder) -> Result<Option<PopulationProjection>, CliError> {
    let Some(p) = &args.pop else { return Ok(None) };
    let p = input(p);
    rec.input(&p);
    let pop = PopulationProjection::load(&p, run.panel.levels())?;
    let needs_split = run.panel.levels().deprivation && pop.exposures.keys().all(|k| k.deprivation.is_none());
    if !needs_split {
        return Ok(Some(pop));
    }
    let year = args.shares_year.unwrap_or(run.panel.levels().last_year());
    let shares = DeprivationShares::from_panel(&run.panel, year)?;
    Ok(Some(split_population(&pop, &shares)?))
}

fn projection_config(args: &HorizonArgs, include_anchor: bool) -> ProjectionConfig {
    ProjectionConfig {
        seed: args.seed,
        target_year: args.horizon,
        include_anchor,
    }
}

pub fn project(args: &ProjectArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("project", Some(args.horizon.seed), config_json(args));
    let run = load_run(&args.horizon.run, &mut rec)?;
    let pop = population(&args.horizon, &run, &mut rec)?;
    let surface = project_rates(&run.draws, &run.covariates, pop.as_ref(), &projection_config(&args.horizon, args.include_anchor))?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("surface.csv") };
    surface.save_csv(&out)?;
    rec.summary("cells", surface.n_cells());
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

pub fn scenario(args: &ScenarioArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("scenario", Some(args.horizon.seed), config_json(args));
    let run = load_run(&args.horizon.run, &mut rec)?;
    let anchor = run.panel.levels().last_year();
    let schedule = if args.schedule.eq_ignore_ascii_case("default") {
        AllocationSchedule::default_from(anchor + 1)
    } else {
        let p = input(Path::new(&args.schedule));
        rec.input(&p);
        AllocationSchedule::load(&p)?
    };
    let sc = ScenarioConfig {
        delay_months: args.delay_months,
        schedule,
    };
    let pop = population(&args.horizon, &run, &mut rec)?;
    let pcfg = projection_config(&args.horizon, false);
    let delayed = apply_delay_scenario(&run.draws, &run.covariates, pop.as_ref(), &pcfg, &sc)?;
    let baseline: ProjectionSurface = project_rates(&run.draws, &run.covariates, pop.as_ref(), &pcfg)?;
    let report = excess_tables(&delayed, &baseline)?;

    ensure_dir(&args.out)?;
    let files = [
        args.out.join("baseline.csv"),
        args.out.join("scenario.csv"),
        args.out.join("excess.csv"),
    ];
    baseline.save_csv(&files[0])?;
    delayed.save_csv(&files[1])?;
    report.write_csv(create(&files[2])?)?;
    if let Some(c) = report.table(mortproj::measures::ExcessTable::Cumulative).next() {
        rec.summary("cumulative_excess", [c.mean, c.lo95, c.hi95]);
    }
    rec.finish(&manifest_path(&args.out), &files)?;
    Ok(())
}

pub fn excess(args: &ExcessArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("excess", None, config_json(args));
    let (schema_path, obs_path, base_path) = (input(&args.schema), input(&args.observed), input(&args.baseline));
    for p in [&schema_path, &obs_path, &base_path] {
        rec.input(p);
    }
    let schema = PanelSchema::load(&schema_path)?;
    let observed = MortalityPanel::load(&obs_path, &schema)?;
    let baseline = load_surface_rows(&base_path)?;
    let first = args.first.unwrap_or(observed.levels().first_year());
    let last = args.last.unwrap_or(observed.levels().last_year());
    let rows = cumulative_excess(&observed, &baseline, first, last)?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("ced.csv") };
    write_ced_csv(&rows, create(&out)?)?;
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

pub fn residuals(args: &ResidualsArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("residuals", None, config_json(args));
    let run = load_run(&args.run, &mut rec)?;
    let res = pearson_residuals(&run.draws, &run.panel, &run.covariates)?;
    prepare_out(&args.out)?;
    let out = if is_file_output(&args.out) { args.out.clone() } else { args.out.join("residuals.csv") };
    write_heatmap_csv(&res, run.panel.levels(), create(&out)?)?;
    rec.finish(&manifest_path(&args.out), &[out])?;
    Ok(())
}

pub fn simlab_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut rec = Recorder::start("simlab generate", Some(args.seed), config_json(args));
    let mut cfg = match &args.config {
        Some(p) => {
            let p = input(p);
            rec.input(&p);
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            GeneratorConfig::from_toml_str(&text)?
        }
        None => GeneratorConfig::default(),
    };
    cfg.seed = args.seed;
    let syn = generate(&cfg)?;
    ensure_dir(&args.out)?;
    let truth = serde_json::to_string_pretty(&syn.truth).expect("truth serialises");
    let files = [
        args.out.join("panel.csv"),
        write_text(&args.out.join("schema.toml"), &syn.panel.schema().to_toml_string())?,
        write_text(&args.out.join("spec.toml"), &syn.truth.spec.to_toml_string())?,
        write_text(&args.out.join("covariates.json"), &syn.covariates.to_json())?,
        write_text(&args.out.join("truth.json"), &truth)?,
        write_text(&args.out.join("config.toml"), &cfg.to_toml_string())?,
    ];
    syn.panel.save(&files[0])?;
    rec.summary("cells", syn.panel.len());
    rec.finish(&manifest_path(&args.out), &files)?;
    Ok(())
}
