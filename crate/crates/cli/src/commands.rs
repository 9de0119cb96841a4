use std::path::Path;

use mlci_core::accrual::feature_accrual_history;
use mlci_core::gridworld::{build_gridworld, sweep, GridConfig, GridWorld};
use mlci_core::inference::{false_positive_rate, greedy_iterative_inference, InferenceConfig};
use mlci_core::io::{
    ingest_external_demos, read_json, render_ascii, render_svg, summarize, write_atomic, write_json, write_runs_csv,
    write_summary_csv, AccrualFile, ConstraintsFile, DemosFile, HeatmapSet, MdpFile, ResultFile, RunManifest, RunRow,
    WeightsFile, ACCRUAL_SCHEMA, CONSTRAINTS_SCHEMA, DEMOS_SCHEMA, MDP_SCHEMA, RESULT_SCHEMA, WEIGHTS_SCHEMA,
};
use mlci_core::maxent::{backward_pass, learn_reward_weights, sample_trajectories, SolverError};
use mlci_core::mdp::{stochastic_observation_model, AugmentedFeatureMap, ConstraintKind, Mdp, MinimalConstraint};

use crate::error::CliError;
use crate::{BuildGridArgs, EvalArgs, Format, InferArgs, LearnRewardArgs, RenderArgs, SampleArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_SWEEP_DEMOS: [usize; 5] = [1, 3, 10, 30, 100];
const DEFAULT_SWEEP_THRESHOLDS: [f64; 3] = [0.03, 0.1, 0.3];

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_mdp(path: &Path) -> Result<(Mdp, Vec<u8>), CliError> {
    let (file, bytes) = read_json::<MdpFile>(path)?;
    Ok((file.to_mdp(path)?, bytes))
}

/// A shipped config name, or a TOML/JSON path, with its source bytes.
fn load_grid(spec: &str) -> Result<(GridWorld, Vec<u8>), CliError> {
    let (cfg, bytes) = match GridConfig::shipped_source(spec) {
        Some(text) if !Path::new(spec).exists() => (GridConfig::from_toml_str(text)?, text.as_bytes().to_vec()),
        _ => {
            let path = Path::new(spec);
            let bytes = read_bytes(path)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| CliError::Input(format!("{spec}: config is not UTF-8")))?;
            let cfg = if path.extension().is_some_and(|e| e == "json") {
                GridConfig::from_json_str(&text)?
            } else {
                GridConfig::from_toml_str(&text)?
            };
            (cfg, bytes)
        }
    };
    Ok((build_gridworld(&cfg)?, bytes))
}

fn check_in_range(mdp: &Mdp, path: &Path, constraints: &[MinimalConstraint]) -> Result<(), CliError> {
    match constraints.iter().find(|c| !c.in_range(mdp)) {
        Some(c) => Err(CliError::Input(format!("{}: constraint {c} is out of range for the MDP", path.display()))),
        None => Ok(()),
    }
}

fn check_threshold(d: f64) -> Result<(), CliError> {
    // also rejects NaN
    if d >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("threshold must be non-negative, got {d}")))
    }
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    check_threshold(a.threshold)?;
    let mut manifest = RunManifest::new("infer", VERSION).schema(RESULT_SCHEMA).seed(a.seed);
    let (mdp, demos) = match (&a.grid, &a.mdp) {
        (Some(spec), _) => {
            let (world, bytes) = load_grid(spec)?;
            manifest = manifest.input("grid", &bytes).input("demos", &read_bytes(&a.demos)?);
            let demos = ingest_external_demos(&a.demos, &world)?;
            (world.nominal, demos)
        }
        (None, Some(path)) => {
            let (mdp, bytes) = read_mdp(path)?;
            let (file, demo_bytes) = read_json::<DemosFile>(&a.demos)?;
            manifest = manifest.input("mdp", &bytes).input("demos", &demo_bytes);
            (mdp, file.to_demos(&a.demos)?)
        }
        (None, None) => return Err(CliError::Usage("either --mdp or --grid is required".into())),
    };

    let mut kinds: Vec<ConstraintKind> = a.hypothesis.iter().map(|&k| k.into()).collect();
    kinds.sort_unstable();
    kinds.dedup();
    let config = InferenceConfig { threshold: a.threshold, max_iters: a.max_iters, kinds: kinds.clone() };
    let result = greedy_iterative_inference(&mdp, &demos, &config)?;

    let manifest = RunManifest {
        stop_reason: Some(result.stop_reason.as_str().to_owned()),
        ..manifest
            .param("threshold", a.threshold)
            .param("hypothesis", kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>())
            .param("max_iters", a.max_iters)
            .param("n_demos", demos.len())
    };
    let file = ResultFile::new(&mdp, a.threshold, result, Some(manifest));
    write_json(&a.out, &file)?;
    println!("selected {} constraint(s), stop: {}", file.labels.len(), file.result.stop_reason.as_str());
    for label in &file.labels {
        println!("  {label}");
    }
    Ok(())
}

pub fn sample(a: SampleArgs) -> Result<(), CliError> {
    let (mdp, bytes) = read_mdp(&a.mdp)?;
    let mut manifest =
        RunManifest::new("sample", VERSION).schema(DEMOS_SCHEMA).input("mdp", &bytes).seed(a.seed).param("n", a.n);
    let model = match &a.constraints {
        Some(path) => {
            let (file, c_bytes) = read_json::<ConstraintsFile>(path)?;
            manifest = manifest.input("constraints", &c_bytes);
            let c = file.to_set(path, &mdp)?;
            stochastic_observation_model(&mdp, &c.closed(&mdp))?.mdp
        }
        None => mdp,
    };
    let (pol, _) = backward_pass(&model)?;
    let n = usize::try_from(a.n).map_err(|_| CliError::Usage(format!("--n {} is too large", a.n)))?;
    let demos = sample_trajectories(&model, &pol, n, a.seed)?;
    write_json(&a.out, &DemosFile::from_demos(&demos, Some(manifest)))?;
    println!("sampled {n} trajectories ({} distinct)", demos.distinct().len());
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<(), CliError> {
    let file = match (&a.accrual, &a.mdp) {
        (Some(path), _) => read_json::<AccrualFile>(path)?.0,
        (None, Some(mdp_path)) => {
            let (mdp, bytes) = read_mdp(mdp_path)?;
            let mut manifest = RunManifest::new("render", VERSION).schema(ACCRUAL_SCHEMA).input("mdp", &bytes);
            let mut marked = Vec::new();
            if let Some(path) = &a.result {
                let (result, r_bytes) = read_json::<ResultFile>(path)?;
                check_in_range(&mdp, path, &result.result.selected)?;
                manifest = manifest.input("result", &r_bytes);
                marked.extend(result.result.selected);
            }
            if let Some(path) = &a.constraints {
                let (file, c_bytes) = read_json::<ConstraintsFile>(path)?;
                manifest = manifest.input("constraints", &c_bytes);
                marked.extend(file.to_set(path, &mdp)?.minimal().iter().copied());
            }
            marked.sort_unstable();
            marked.dedup();
            let (pol, _) = backward_pass(&mdp)?;
            let map = AugmentedFeatureMap::new(&mdp);
            let hist = feature_accrual_history(&mdp, &map, &pol).map_err(|e| CliError::Input(e.to_string()))?;
            AccrualFile::new(&mdp, &hist, marked, Some(manifest))
        }
        (None, None) => return Err(CliError::Usage("either --accrual or --mdp is required".into())),
    };
    if let Some(path) = &a.save_accrual {
        write_json(path, &file)?;
    }
    let set = HeatmapSet::from_accrual(&file);
    let text = match a.format {
        Format::Ascii => render_ascii(&set),
        Format::Svg => render_svg(&set),
    };
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let rows = match (&a.result, &a.grid) {
        (Some(result_path), _) => {
            let (Some(truth_path), Some(mdp_path)) = (&a.truth, &a.mdp) else {
                return Err(CliError::Usage("--result needs --truth and --mdp".into()));
            };
            let (file, _) = read_json::<ResultFile>(result_path)?;
            let (mdp, _) = read_mdp(mdp_path)?;
            check_in_range(&mdp, result_path, &file.result.selected)?;
            let (truth_file, _) = read_json::<ConstraintsFile>(truth_path)?;
            let truth = truth_file.to_set(truth_path, &mdp)?;
            let manifest = file.manifest.as_ref();
            let from_manifest = manifest
                .and_then(|m| m.parameters.get("n_demos"))
                .and_then(|v| v.as_u64())
                .and_then(|n| usize::try_from(n).ok());
            let n_demos = a.n_demos.as_ref().and_then(|n| n.first().copied()).or(from_manifest).unwrap_or(0);
            vec![RunRow {
                n_demos,
                threshold: file.threshold,
                seed: manifest.and_then(|m| m.seed).unwrap_or(0),
                fp_rate: false_positive_rate(&mdp, &file.result.selected, &truth),
                final_kl: file.result.final_kl,
                n_selected: file.result.selected.len(),
            }]
        }
        (None, Some(spec)) => {
            let (world, _) = load_grid(spec)?;
            let n_demos = a.n_demos.clone().unwrap_or_else(|| DEFAULT_SWEEP_DEMOS.to_vec());
            let thresholds = a.thresholds.clone().unwrap_or_else(|| DEFAULT_SWEEP_THRESHOLDS.to_vec());
            if n_demos.contains(&0) {
                return Err(CliError::Usage("--n-demos entries must be positive".into()));
            }
            thresholds.iter().try_for_each(|&d| check_threshold(d))?;
            let seeds: Vec<u64> = (0..a.seeds).collect();
            sweep(&world, &n_demos, &thresholds, &seeds)?.iter().map(RunRow::from).collect()
        }
        (None, None) => return Err(CliError::Usage("either --result or --grid is required".into())),
    };
    write_atomic(&a.out, write_runs_csv(&rows).as_bytes())?;
    let summary = write_summary_csv(&summarize(&rows));
    if let Some(path) = &a.summary {
        write_atomic(path, summary.as_bytes())?;
    }
    print!("{summary}");
    Ok(())
}

pub fn learn_reward(a: LearnRewardArgs) -> Result<(), CliError> {
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(CliError::Usage(format!("--lr must be positive and finite, got {}", a.lr)));
    }
    let (mdp, bytes) = read_mdp(&a.mdp_skeleton)?;
    let (demo_file, demo_bytes) = read_json::<DemosFile>(&a.demos)?;
    let demos = demo_file.to_demos(&a.demos)?;
    if let Some((index, violation)) = demos.first_infeasible(&mdp) {
        return Err(SolverError::InfeasibleDemo { index, violation }.into());
    }
    let manifest = RunManifest::new("learn-reward", VERSION)
        .schema(WEIGHTS_SCHEMA)
        .input("mdp_skeleton", &bytes)
        .input("demos", &demo_bytes)
        .param("lr", a.lr)
        .param("iters", a.iters);
    let (fit, failure) = match learn_reward_weights(&mdp, &demos, a.lr, a.iters) {
        Ok(fit) => (fit, None),
        Err(SolverError::Divergence { iteration, streak, fit }) => {
            let e = SolverError::Divergence { iteration, streak, fit: fit.clone() };
            (*fit, Some(e))
        }
        Err(e) => return Err(e.into()),
    };
    // the partial log is kept on divergence
    write_json(&a.out, &WeightsFile::new(&mdp, &fit, failure.is_some(), Some(manifest.clone())))?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if let Some(path) = &a.out_mdp {
        let learned = mdp.with_reward_weights(fit.weights.clone())?;
        write_json(path, &MdpFile::from_mdp(&learned, Some(manifest.schema(MDP_SCHEMA))))?;
    }
    let names = mdp.feature_names();
    for (name, w) in names.iter().zip(&fit.weights) {
        println!("{name}: {w:.6}");
    }
    Ok(())
}

pub fn build_grid(a: BuildGridArgs) -> Result<(), CliError> {
    let (world, bytes) = load_grid(&a.config)?;
    let manifest = RunManifest::new("build-grid", VERSION).input("grid", &bytes).param("config", &a.config);
    write_json(&a.out_mdp, &MdpFile::from_mdp(&world.nominal, Some(manifest.clone().schema(MDP_SCHEMA))))?;
    if let Some(path) = &a.out_truth {
        let file =
            ConstraintsFile::from_set(&world.nominal, &world.truth, Some(manifest.clone().schema(CONSTRAINTS_SCHEMA)));
        write_json(path, &file)?;
    }
    if let Some(path) = &a.out_true_mdp {
        write_json(path, &MdpFile::from_mdp(&world.demonstrator_mdp()?, Some(manifest.schema(MDP_SCHEMA))))?;
    }
    let l = world.layout();
    println!(
        "{}: {}x{} grid, {} states, horizon {}, {} planted constraint(s)",
        world.config.name,
        l.width,
        l.height,
        world.nominal.n_states(),
        world.nominal.horizon(),
        world.truth.len()
    );
    Ok(())
}
