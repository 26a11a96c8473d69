use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use judgment_sieve::io::load_dataset;
use judgment_sieve::metrics::ScoreTable;
use judgment_sieve::sieve::{assignments_to_csv, assignments_to_json};
use judgment_sieve::simulation::{
    compare_to_baseline, compose_counterfactual, compose_uniform, evaluate_round,
    slice_report_from_tables, slices_to_csv, sweep_from_csv, sweep_to_csv, threshold_sweep,
    RoundSummary,
};
use judgment_sieve::stats::SIGNIFICANCE_LEVEL;
use judgment_sieve::synthetic::{trajectory_to_csv, SynthConfig};
use judgment_sieve::{
    assign_interventions, dataset_to_json, generate_dataset, ingest_dataset, iterate_sieve,
    score_table, BootstrapConfig, Dataset, IterateOptions, SieveCutoffs, Source, BASELINE,
};

use crate::args::*;
use crate::manifest::{digest, digest_bytes, manifest_path, InputDigest, RunManifest};
use crate::output::write_atomic;

/// CLI-level misuse (bad flag values, missing files named on the command
/// line); maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub enum Outcome {
    Ok,
    Invalid,
}

struct Product {
    body: String,
    inputs: Vec<InputDigest>,
}

fn sidecar_path(input: &InputArgs) -> PathBuf {
    input.sidecar.clone().unwrap_or_else(|| {
        let stem = input.input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        input.input.with_file_name(format!("{stem}.meta.json"))
    })
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())).into())
}

/// Main file bytes and, for `.csv` inputs, the sidecar bytes.
type RawInput = (Vec<u8>, Option<Vec<u8>>);

/// Raw input bytes plus digests; `.csv` inputs pull in their sidecar.
fn read_input(input: &InputArgs) -> Result<(RawInput, Vec<InputDigest>)> {
    let main = read(&input.input)?;
    let mut digests = vec![digest_bytes(&input.input, &main)];
    if is_csv(&input.input) {
        let path = sidecar_path(input);
        let side = read(&path)?;
        digests.push(digest_bytes(&path, &side));
        Ok(((main, Some(side)), digests))
    } else {
        Ok(((main, None), digests))
    }
}

fn source<'a>(main: &'a [u8], side: &'a Option<Vec<u8>>) -> Source<'a> {
    match side {
        Some(s) => Source::Csv { annotations: main, sidecar: s },
        None => Source::Json(main),
    }
}

fn load(input: &InputArgs) -> Result<(Dataset, Vec<InputDigest>)> {
    let ((main, side), digests) = read_input(input)?;
    let d = ingest_dataset(source(&main, &side))?;
    Ok((d, digests))
}

fn boot_config(seed: u64, reps: usize, level: f64) -> Result<BootstrapConfig> {
    let cfg = BootstrapConfig { replicates: reps, level, seed };
    cfg.check()?;
    Ok(cfg)
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(UsageError(format!("--{name} must lie in [0, 1], got {f}")).into());
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str = "label,fraction,mean_ambiguity,ambiguity_ci_lo,ambiguity_ci_hi,mean_disagreement,disagreement_ci_lo,disagreement_ci_hi,instance_count,affected_count,ambiguity_p_vs_baseline,disagreement_p_vs_baseline,alpha";

fn summary_row(label: &str, fraction: Option<f64>, s: &RoundSummary, p: (f64, f64)) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fraction.map_or_else(|| "NA".to_owned(), |f| f.to_string()),
        s.mean_ambiguity,
        s.ci_ambiguity.0,
        s.ci_ambiguity.1,
        s.mean_disagreement,
        s.ci_disagreement.0,
        s.ci_disagreement.1,
        s.instance_count,
        s.affected_count,
        p.0,
        p.1,
        SIGNIFICANCE_LEVEL
    )
}

fn validate(args: &ValidateArgs) -> Result<Outcome> {
    let ((main, side), _) = read_input(&args.input)?;
    let (d, report) = load_dataset(source(&main, &side))?;
    let mut stdout = std::io::stdout().lock();
    if report.is_empty() {
        writeln!(
            stdout,
            "ok: {} instances, {} conditions, {} annotations",
            d.instances.len(),
            d.conditions.len(),
            d.annotation_count()
        )?;
        Ok(Outcome::Ok)
    } else {
        writeln!(stdout, "{} violation(s):", report.violations.len())?;
        write!(stdout, "{report}")?;
        Ok(Outcome::Invalid)
    }
}

fn score(args: &ScoreArgs) -> Result<Product> {
    let (d, inputs) = load(&args.input)?;
    let table = score_table(&d, &args.condition)?;
    let body = match args.format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    Ok(Product { body, inputs })
}

fn sieve(args: &SieveArgs) -> Result<Product> {
    let fa = args.ambiguity_fraction.unwrap_or(args.fraction);
    let fd = args.disagreement_fraction.unwrap_or(args.fraction);
    check_fraction("fraction", args.fraction)?;
    check_fraction("ambiguity-fraction", fa)?;
    check_fraction("disagreement-fraction", fd)?;
    let (d, inputs) = load(&args.input)?;
    let table = score_table(&d, BASELINE)?;
    let cutoffs = SieveCutoffs::from_table_split(&table, fa, fd)?;
    let assignments = assign_interventions(&table, &cutoffs);
    let body = match args.format {
        Format::Csv => assignments_to_csv(&assignments),
        Format::Json => assignments_to_json(&cutoffs, &assignments),
    };
    Ok(Product { body, inputs })
}

fn simulate(args: &SimulateArgs) -> Result<Product> {
    if let Some(f) = args.fraction {
        check_fraction("fraction", f)?;
    }
    let boot = boot_config(args.boot.seed, args.boot.reps, args.boot.level)?;
    let (d, inputs) = load(&args.input)?;
    let baseline = score_table(&d, BASELINE)?;
    let (label, fraction, round) = match (&args.uniform, args.fraction) {
        (Some(cond), _) => (format!("uniform:{cond}"), None, compose_uniform(&d, cond)?),
        (None, Some(f)) => {
            let cutoffs = SieveCutoffs::from_table(&baseline, f)?;
            let assignments = assign_interventions(&baseline, &cutoffs);
            ("sieve".to_owned(), Some(f), compose_counterfactual(&d, &assignments)?)
        }
        (None, None) => bail!(UsageError("one of --fraction or --uniform is required".into())),
    };
    let summary = evaluate_round(&round, &boot)?;
    let p = compare_to_baseline(&round.score_table(), &baseline, args.perm_reps, args.boot.seed)?;
    let body = format!("{SUMMARY_HEADER}\n{}", summary_row(&label, fraction, &summary, p));
    Ok(Product { body, inputs })
}

fn sweep(args: &SweepArgs) -> Result<Product> {
    if args.fractions.is_empty() {
        bail!(UsageError("--fractions needs at least one value".into()));
    }
    for &f in &args.fractions {
        check_fraction("fractions", f)?;
    }
    let boot = boot_config(args.boot.seed, args.boot.reps, args.boot.level)?;
    let (d, inputs) = load(&args.input)?;
    let rows = threshold_sweep(&d, &args.fractions, &boot)?;
    Ok(Product { body: sweep_to_csv(&rows), inputs })
}

fn synth_config(args: &CrowdArgs) -> Result<(SynthConfig, Vec<InputDigest>)> {
    let (mut cfg, inputs) = match &args.config {
        Some(path) => {
            let bytes = read(path)?;
            let cfg: SynthConfig = serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing config {}", path.display()))?;
            (cfg, vec![digest_bytes(path, &bytes)])
        }
        None => (SynthConfig::default(), Vec::new()),
    };
    cfg.crowd.seed = args.seed;
    if let Some(n) = args.instances {
        cfg.crowd.n_instances = n;
    }
    if let Some(n) = args.annotators {
        cfg.crowd.n_annotators = n;
    }
    if let Some(v) = args.kappa_a {
        cfg.effects.context_width_factor = v;
    }
    if let Some(v) = args.kappa_d {
        cfg.effects.deliberation_dispersion_factor = v;
    }
    if let Some(v) = args.context_dispersion_factor {
        cfg.effects.context_dispersion_factor = v;
    }
    if let Some(v) = args.deliberation_width_factor {
        cfg.effects.deliberation_width_factor = v;
    }
    Ok((cfg, inputs))
}

fn synth(args: &SynthArgs) -> Result<Product> {
    let (cfg, inputs) = synth_config(&args.crowd)?;
    let d = generate_dataset(&cfg.crowd, &cfg.effects)?;
    Ok(Product { body: dataset_to_json(&d), inputs })
}

fn iterate(args: &IterateArgs) -> Result<Product> {
    check_fraction("fraction", args.fraction)?;
    if args.rounds == 0 {
        bail!(UsageError("--rounds must be at least 1".into()));
    }
    let (cfg, inputs) = synth_config(&args.crowd)?;
    let opts = IterateOptions {
        fraction: args.fraction,
        rounds: args.rounds,
        stop_below: args.stop_below,
        bootstrap: boot_config(args.crowd.seed, args.reps, args.level)?,
    };
    let steps = iterate_sieve(&cfg.crowd, &cfg.effects, &opts)?;
    Ok(Product { body: trajectory_to_csv(&steps), inputs })
}

/// `NAME=PATH` or `PATH`.
fn named_input(arg: &str) -> (Option<String>, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !Path::new(arg).exists() => {
            (Some(name.to_owned()), PathBuf::from(path))
        }
        _ => (None, PathBuf::from(arg)),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn report(args: &ReportArgs) -> Result<Product> {
    let mut inputs = Vec::new();
    let body = match args.style {
        ReportStyle::Slices => {
            check_fraction("slice-fraction", args.slice_fraction)?;
            let mut tables = Vec::new();
            for arg in &args.inputs {
                let (name, path) = named_input(arg);
                let bytes = read(&path)?;
                inputs.push(digest_bytes(&path, &bytes));
                let mut table = if path.extension().is_some_and(|e| e == "json") {
                    ScoreTable::from_json(&bytes)?
                } else {
                    ScoreTable::from_csv(stem(&path), &bytes)?
                };
                if let Some(n) = name {
                    table.condition = n;
                }
                tables.push(table);
            }
            let baseline = tables
                .iter()
                .find(|t| t.condition == BASELINE)
                .ok_or_else(|| UsageError("slice report needs a `baseline` score table".into()))?;
            let refs: Vec<&ScoreTable> = tables.iter().collect();
            let (amb, dis) = slice_report_from_tables(baseline, &refs, args.slice_fraction)?;
            slices_to_csv(&[&amb, &dis])
        }
        ReportStyle::Sweep => {
            let mut out = String::from("source,fraction,metric,mean,ci_lo,ci_hi,affected_count\n");
            for arg in &args.inputs {
                let (name, path) = named_input(arg);
                let bytes = read(&path)?;
                inputs.push(digest_bytes(&path, &bytes));
                let label = name.unwrap_or_else(|| stem(&path));
                for row in sweep_from_csv(&bytes)? {
                    let s = &row.summary;
                    for (metric, m, ci) in [
                        ("ambiguity", s.mean_ambiguity, s.ci_ambiguity),
                        ("disagreement", s.mean_disagreement, s.ci_disagreement),
                    ] {
                        out.push_str(&format!(
                            "{label},{},{metric},{m},{},{},{}\n",
                            row.fraction, ci.0, ci.1, s.affected_count
                        ));
                    }
                }
            }
            out
        }
    };
    Ok(Product { body, inputs })
}

fn replay(args: &ReplayArgs) -> Result<Outcome> {
    let bytes = read(&args.manifest)?;
    let manifest: RunManifest = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing manifest {}", args.manifest.display()))?;
    std::env::set_current_dir(&manifest.working_directory).with_context(|| {
        format!("entering recorded directory {}", manifest.working_directory.display())
    })?;
    for recorded in &manifest.inputs {
        let now = digest(&recorded.path)?;
        if now.sha256 != recorded.sha256 {
            bail!(
                "input {} changed since the recorded run (sha256 {} != {})",
                recorded.path.display(),
                now.sha256,
                recorded.sha256
            );
        }
    }
    let mut cmd = manifest.parameters;
    if let Some(out) = &args.out {
        let out = std::path::absolute(out)?;
        match cmd.out_mut() {
            Some(slot) => *slot = Some(out),
            None => bail!(UsageError(format!("`{}` writes no output file", cmd.name()))),
        }
    }
    execute(&cmd)
}

fn emit(cmd: &Command, product: Product) -> Result<()> {
    let out = match cmd {
        Command::Score(a) => &a.output.out,
        Command::Sieve(a) => &a.output.out,
        Command::Simulate(a) => &a.output.out,
        Command::Sweep(a) => &a.output.out,
        Command::Synth(a) => &a.output.out,
        Command::Iterate(a) => &a.output.out,
        Command::Report(a) => &a.output.out,
        Command::Validate(_) | Command::Replay(_) => &None,
    };
    match out {
        Some(path) => {
            write_atomic(path, product.body.as_bytes())?;
            let manifest = RunManifest::new(cmd, product.inputs)?;
            write_atomic(&manifest_path(path), manifest.to_json().as_bytes())?;
            log::info!("wrote {}", path.display());
        }
        None => std::io::stdout().lock().write_all(product.body.as_bytes())?,
    }
    Ok(())
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    let product = match cmd {
        Command::Validate(a) => return validate(a),
        Command::Replay(a) => return replay(a),
        Command::Score(a) => score(a)?,
        Command::Sieve(a) => sieve(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Sweep(a) => sweep(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Iterate(a) => iterate(a)?,
        Command::Report(a) => report(a)?,
    };
    emit(cmd, product)?;
    Ok(Outcome::Ok)
}
