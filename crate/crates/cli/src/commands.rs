use std::fs;
use std::path::{Path, PathBuf};

use fdclass::data::{load_dataset, stratified_split, write_dataset, LabeledFunctionalDataset};
use fdclass::eval::{aggregate_table, extended_f64, JPrior, ModelAveragingReport};
use fdclass::export::{read_draws, write_draws, write_trace, FitSummary};
use fdclass::pipeline::{evaluate_fits, fit_all_j, fit_discriminant, test_labels, DiscriminantFit, EngineDraws, ModelKind};
use fdclass::eval::misclassification_rate;
use fdclass::simgen::{generate, GeneratorKind, GeneratorSpec};
use fdclass::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{load_generator_spec, load_run_config, read_text, to_toml, RunConfig};
use crate::manifest::{io_err, sha256_hex, write_file, write_manifest};

pub const FIT_INDEX: &str = "fit.json";
const DISCRIMINANT_FIT: &str = "discriminant.json";

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    serde_json::to_string_pretty(value)
        .map(|s| format!("{s}\n").into_bytes())
        .map_err(|e| Error::Format(e.to_string()))
}

fn csv_bytes(ds: &LabeledFunctionalDataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf).expect("writing to memory cannot fail");
    buf
}

#[derive(Debug, Serialize)]
struct SimulateProvenance<'a> {
    kind: GeneratorKind,
    seed: u64,
    spec_sha256: String,
    data_sha256: String,
    spec: &'a GeneratorSpec,
}

pub struct SimulateArgs {
    pub spec: Option<PathBuf>,
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub n_per_class: Option<usize>,
    pub out: PathBuf,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => load_generator_spec(p)?,
        None => {
            let kind = args
                .kind
                .as_deref()
                .ok_or_else(|| Error::Validation("either --spec or --kind is required".into()))?;
            GeneratorSpec::new(GeneratorKind::parse(kind)?, 0)
        }
    };
    if let Some(k) = &args.kind {
        spec.kind = GeneratorKind::parse(k)?;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n_per_class {
        spec.n_per_class = n;
    }
    spec.validate()?;
    let ds = generate(&spec)?;
    let data = csv_bytes(&ds);
    let canonical = to_toml(&spec)?;
    let prov = SimulateProvenance {
        kind: spec.kind,
        seed: spec.seed,
        spec_sha256: sha256_hex(canonical.as_bytes()),
        data_sha256: sha256_hex(&data),
        spec: &spec,
    };
    write_file(&args.out.join("data.csv"), &data)?;
    write_file(&args.out.join("spec.toml"), canonical.as_bytes())?;
    write_file(&args.out.join("provenance.json"), &json(&prov)?)?;
    write_manifest(&args.out)?;
    println!("wrote {} curves to {}", ds.len(), args.out.join("data.csv").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SplitProvenance {
    source_sha256: String,
    test_fraction: f64,
    seed: u64,
    n_train: usize,
    n_test: usize,
}

pub fn split(data: &Path, test_fraction: f64, seed: u64, out: &Path) -> Result<()> {
    let bytes = fs::read(data).map_err(io_err(data))?;
    let ds = load_dataset(data, None)?;
    let (train, test) = stratified_split(&ds, test_fraction, seed)?;
    write_file(&out.join("train.csv"), &csv_bytes(&train))?;
    write_file(&out.join("test.csv"), &csv_bytes(&test))?;
    let prov = SplitProvenance {
        source_sha256: sha256_hex(&bytes),
        test_fraction,
        seed,
        n_train: train.len(),
        n_test: test.len(),
    };
    write_file(&out.join("split.json"), &json(&prov)?)?;
    write_manifest(out)?;
    println!("train {} / test {} curves in {}", train.len(), test.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitEntry {
    pub n_basis: usize,
    #[serde(with = "extended_f64")]
    pub log_marginal: f64,
    pub draws: String,
    pub summary: String,
}

/// Index of a run directory written by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitIndex {
    pub model: ModelKind,
    pub dataset: String,
    pub seed: u64,
    pub n_train: usize,
    pub train_sha256: String,
    pub quadrature_order: usize,
    pub j_prior: Option<JPrior>,
    pub fits: Vec<FitEntry>,
    pub discriminant: Option<String>,
}

#[derive(Default)]
pub struct FitOverrides {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub j_min: Option<usize>,
    pub j_max: Option<usize>,
    pub train: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
}

fn dataset_name(train: &Path) -> String {
    train
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "data".into())
}

#[derive(Debug, Serialize)]
struct DiscriminantSummary {
    model: ModelKind,
    n_components: usize,
    eigenvalues: Vec<f64>,
    explained_fraction: f64,
    class_priors: Vec<f64>,
    draws: usize,
}

pub fn fit(config: &Path, ov: FitOverrides) -> Result<()> {
    let mut cfg: RunConfig = load_run_config(config)?;
    if let Some(m) = &ov.model {
        cfg.model = ModelKind::parse(m)?;
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(n) = ov.iterations {
        cfg.mcmc.iterations = n;
    }
    if let Some(n) = ov.burn_in {
        cfg.mcmc.burn_in = n;
    }
    if let Some(n) = ov.j_min {
        cfg.j_prior.min = n;
    }
    if let Some(n) = ov.j_max {
        cfg.j_prior.max = n;
    }
    if let Some(p) = ov.train {
        cfg.train = p;
    }
    if let Some(p) = ov.out {
        cfg.out = p;
    }
    cfg.validate()?;
    let train_bytes = fs::read(&cfg.train).map_err(io_err(&cfg.train))?;
    let train = load_dataset(&cfg.train, None)?;
    let opts = cfg.options();
    let out = cfg.out.clone();
    let mut index = FitIndex {
        model: cfg.model,
        dataset: ov.dataset.clone().unwrap_or_else(|| dataset_name(&cfg.train)),
        seed: cfg.seed,
        n_train: train.len(),
        train_sha256: sha256_hex(&train_bytes),
        quadrature_order: cfg.quadrature_order,
        j_prior: None,
        fits: Vec::new(),
        discriminant: None,
    };
    if cfg.model.uses_basis() {
        let fits = fit_all_j(cfg.model, &train, &cfg.j_prior, &opts, cfg.seed)?;
        for f in &fits {
            let dir = format!("j{:02}", f.n_basis);
            let params = f.draws.parameters();
            let mut buf = Vec::new();
            write_draws(&params, &mut buf)?;
            write_file(&out.join(&dir).join("draws.csv"), &buf)?;
            let summary = FitSummary::new(f, &cfg.mcmc)?;
            write_file(&out.join(&dir).join("summary.json"), format!("{}\n", summary.to_json()?).as_bytes())?;
            write_file(&out.join(&dir).join("summary.txt"), summary.to_table().as_bytes())?;
            let mut buf = Vec::new();
            write_trace("log_likelihood", f.draws.log_lik_trace(), &mut buf)?;
            write_file(&out.join(&dir).join("loglik_trace.csv"), &buf)?;
            if let EngineDraws::Ordered(d) = &f.draws {
                if d.alpha_trace.ncols() > 0 {
                    let mut buf = Vec::new();
                    write_trace("gamma_2", &d.gamma2_trace(), &mut buf)?;
                    write_file(&out.join(&dir).join("gamma2_trace.csv"), &buf)?;
                }
            }
            for msg in &f.marginal.diagnostics {
                eprintln!("warning: J = {}: {msg}", f.n_basis);
            }
            index.fits.push(FitEntry {
                n_basis: f.n_basis,
                log_marginal: f.marginal.log_marginal,
                draws: format!("{dir}/draws.csv"),
                summary: format!("{dir}/summary.json"),
            });
        }
        index.j_prior = Some(cfg.j_prior.clone());
    } else {
        let fit = fit_discriminant(cfg.model, &train, &opts, cfg.seed)?;
        write_file(&out.join(DISCRIMINANT_FIT), &json(&fit)?)?;
        let summary = DiscriminantSummary {
            model: cfg.model,
            n_components: fit.fpca.n_components(),
            eigenvalues: fit.fpca.eigenvalues().to_vec(),
            explained_fraction: fit.fpca.explained_fraction(),
            class_priors: fit.draws.class_priors.clone(),
            draws: fit.draws.len(),
        };
        write_file(&out.join("summary.json"), &json(&summary)?)?;
        index.discriminant = Some(DISCRIMINANT_FIT.into());
    }
    write_file(&out.join("config.toml"), to_toml(&cfg)?.as_bytes())?;
    write_file(&out.join(FIT_INDEX), &json(&index)?)?;
    write_manifest(&out)?;
    println!("{} fit written to {}", cfg.model, out.display());
    Ok(())
}

pub fn load_index(run: &Path) -> Result<FitIndex> {
    let path = run.join(FIT_INDEX);
    serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Recompute the averaged report from the stored draws of a run directory.
pub fn evaluate_run(run: &Path, test: &LabeledFunctionalDataset, name: Option<&str>) -> Result<ModelAveragingReport> {
    let index = load_index(run)?;
    let dataset = name.map(str::to_string).unwrap_or_else(|| index.dataset.clone());
    if index.model.uses_basis() {
        let prior = index
            .j_prior
            .clone()
            .ok_or_else(|| Error::Validation("fit index lacks the J prior".into()))?;
        let mut pairs = Vec::new();
        for j in prior.support() {
            let entry = index
                .fits
                .iter()
                .find(|e| e.n_basis == j)
                .ok_or_else(|| Error::Validation(format!("missing fit artifact for J = {j}")))?;
            let path = run.join(&entry.draws);
            let file = fs::File::open(&path).map_err(|_| Error::Validation(format!("missing draws for J = {j}: {}", path.display())))?;
            pairs.push((read_draws(index.model, file)?, entry.log_marginal));
        }
        evaluate_fits(index.model, &dataset, &pairs, test, &prior, index.quadrature_order)
    } else {
        let file = index
            .discriminant
            .as_deref()
            .ok_or_else(|| Error::Validation("fit index lacks the discriminant artifact".into()))?;
        let path = run.join(file);
        let fit: DiscriminantFit =
            serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let truth = test_labels(test)?;
        let rate = misclassification_rate(&fit.predict(test)?, &truth)?;
        Ok(ModelAveragingReport::single(index.model.name(), &dataset, truth.len(), rate))
    }
}

pub fn evaluate(run: &Path, test: &Path, name: Option<&str>) -> Result<()> {
    let ds = load_dataset(test, None)?;
    let report = evaluate_run(run, &ds, name)?;
    write_file(&run.join("report.json"), format!("{}\n", report.to_json()?).as_bytes())?;
    let table = report.to_table();
    write_file(&run.join("report.txt"), table.as_bytes())?;
    write_manifest(run)?;
    print!("{table}");
    Ok(())
}

pub fn report(files: &[PathBuf], out: Option<&Path>) -> Result<()> {
    if files.is_empty() {
        return Err(Error::Validation("no report files given".into()));
    }
    let reports = files
        .iter()
        .map(|p| ModelAveragingReport::from_json(&read_text(p)?).map_err(|e| Error::Format(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let table = aggregate_table(&reports);
    if let Some(p) = out {
        write_file(p, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}
