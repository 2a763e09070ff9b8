//! `gauth`: drive the group-authentication library from scenario files.
//!
//! Exit codes: 0 on success/accept, 2 on a protocol-level rejection or
//! replay mismatch (with a machine-readable reason on stdout), 1 on usage
//! and configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gauth_core::exactmath::Scalar;
use gauth_core::metrics::{run_scaling_bench, BenchReport};
use gauth_core::protocol::{gm_setup, issue_credential, Credential};
use gauth_core::seeded_rng;
use gauth_core::simnet::{run_scenario, Phase, Scenario, Transcript};
use gauth_core::VerifyOutcome;

const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(
    name = "gauth",
    version,
    about = "Group authentication over inner-product spaces",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a group secret and optionally issue member credentials
    Keygen(KeygenArgs),
    /// Run a scenario through the authentication exchange and report the verdict
    #[command(name = "demo-auth")]
    DemoAuth(ScenarioArgs),
    /// Run a scenario's detection phase and list the malicious members
    Detect(ScenarioArgs),
    /// Time the exchange across roster sizes
    Bench(BenchArgs),
    /// Rerun a scenario and byte-compare transcripts
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct KeygenArgs {
    /// Ambient dimension of the universal space
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Dimension of the secret subspace
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Number of credentials to issue (public keys 1..=members)
    #[arg(long, default_value_t = 0)]
    members: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the output to this path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (JSON)
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full transcript (JSON lines) to this path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated roster sizes, ascending
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Spawn one worker process per roster size
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Saved transcript to compare against; omitted, the scenario is simply
    /// run twice
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Keygen(args) => keygen(args),
        Command::DemoAuth(args) => demo_auth(args),
        Command::Detect(args) => detect(args),
        Command::Bench(args) => bench(args),
        Command::Replay(args) => replay(args),
    }
}

/// `GAUTH_SEED` wins over `--seed`, which wins over the fallback (for
/// scenario commands, the seed inside the file).
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    if let Ok(text) = std::env::var("GAUTH_SEED") {
        return text
            .parse()
            .with_context(|| format!("GAUTH_SEED must be an unsigned 64-bit integer, got {text:?}"));
    }
    Ok(flag.unwrap_or(fallback))
}

fn load_scenario(path: &Path, seed_flag: Option<u64>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let mut scenario: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse scenario file {}", path.display()))?;
    scenario.seed = resolve_seed(seed_flag, scenario.seed)?;
    Ok(scenario)
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, content)
            .with_context(|| format!("cannot write output file {}", path.display()))?;
    }
    Ok(())
}

fn keygen(args: KeygenArgs) -> Result<ExitCode> {
    let seed = resolve_seed(args.seed, DEFAULT_SEED)?;
    let mut rng = seeded_rng(seed);
    let secret = gm_setup(&mut rng, args.d, args.n).context("key generation failed")?;
    let credentials: Vec<Credential> = (1..=args.members as i64)
        .map(|x| issue_credential(&secret, &Scalar::from_integer(x)))
        .collect::<Result<_, _>>()
        .context("credential issuance failed; try a different seed")?;

    let rendered = match args.format {
        Format::Json | Format::Csv => {
            serde_json::json!({ "secret": secret, "credentials": credentials }).to_string()
        }
        Format::Text => {
            let mut text = format!(
                "group secret: d={} n={} f(x) = {}*x + {}\n",
                secret.ambient_dim(),
                secret.dim(),
                secret.f_a(),
                secret.f_b()
            );
            for v in secret.basis().vectors() {
                text.push_str(&format!("  basis vector {v}\n"));
            }
            for cred in &credentials {
                text.push_str(&format!("credential for public key {}\n", cred.public_key()));
            }
            text
        }
    };
    println!("{rendered}");
    write_out(&args.out, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn render_text_summary(transcript: &Transcript) -> String {
    let mut text = String::new();
    if let Some(k) = &transcript.outcomes.keygen {
        text.push_str(&format!(
            "keygen: {} gm-issued, {} delegated, {} outsiders\n",
            k.gm_issued, k.delegated, k.outsiders
        ));
    }
    if let Some(g) = &transcript.outcomes.group_key {
        text.push_str(&format!(
            "group_key: {} ({} members agree{})\n",
            if g.consistent { "consistent" } else { "inconsistent" },
            g.members_agreeing,
            if g.divergent.is_empty() {
                String::new()
            } else {
                format!(", divergent: {:?}", g.divergent.iter().map(ToString::to_string).collect::<Vec<_>>())
            }
        ));
    }
    if let Some(outcome) = &transcript.outcomes.auth {
        text.push_str(&format!(
            "auth: {}\n",
            match outcome {
                VerifyOutcome::Accept => "accept".to_string(),
                VerifyOutcome::Reject { .. } =>
                    format!("reject ({})", serde_json::to_string(outcome).unwrap_or_default()),
            }
        ));
    }
    if let Some(d) = &transcript.outcomes.detect {
        text.push_str(&format!(
            "detect: malicious {:?}, oracle_calls {}\n",
            d.malicious.iter().map(ToString::to_string).collect::<Vec<_>>(),
            d.oracle_calls
        ));
    }
    text.push_str(&format!("events: {}\n", transcript.events.len()));
    text
}

fn demo_auth(args: ScenarioArgs) -> Result<ExitCode> {
    let scenario = load_scenario(&args.scenario, args.seed)?;
    if !scenario.phases.contains(&Phase::Auth) {
        bail!("scenario {} has no auth phase; add \"auth\" to phases", args.scenario.display());
    }
    let transcript = run_scenario(&scenario).context("scenario run failed")?;
    write_out(&args.out, &transcript.to_jsonl())?;

    let outcome = transcript.outcomes.auth.clone().expect("auth phase ran");
    match args.format {
        Format::Json | Format::Csv => println!("{}", transcript.summary_json()),
        Format::Text => {
            print!("{}", render_text_summary(&transcript));
            println!("{}", serde_json::to_string(&outcome)?);
        }
    }
    Ok(if outcome.is_accept() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn detect(args: ScenarioArgs) -> Result<ExitCode> {
    let scenario = load_scenario(&args.scenario, args.seed)?;
    if !scenario.phases.contains(&Phase::Detect) {
        bail!("scenario {} has no detect phase; add \"detect\" to phases", args.scenario.display());
    }
    let transcript = run_scenario(&scenario).context("scenario run failed")?;
    let detect = transcript.outcomes.detect.clone().expect("detect phase ran");
    write_out(&args.out, &serde_json::to_string_pretty(&detect)?)?;
    match args.format {
        Format::Json | Format::Csv => println!("{}", transcript.summary_json()),
        Format::Text => {
            print!("{}", render_text_summary(&transcript));
            println!(
                "{}",
                serde_json::json!({
                    "malicious": detect.malicious,
                    "oracle_calls": detect.oracle_calls,
                })
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    if args.sizes.is_empty() {
        bail!("--sizes must list at least one roster size");
    }
    if !args.sizes.windows(2).all(|w| w[0] < w[1]) {
        bail!("--sizes must be strictly ascending");
    }
    let seed = resolve_seed(args.seed, DEFAULT_SEED)?;
    let report = if args.parallel && args.sizes.len() > 1 {
        merge_reports(run_parallel_workers(&args, seed)?)?
    } else {
        run_scaling_bench(&args.sizes, args.d, args.n, seed).context("benchmark failed")?
    };

    let rendered = match args.format {
        Format::Csv | Format::Text => report.to_csv(),
        Format::Json => serde_json::to_string(&report)?,
    };
    println!("{rendered}");
    write_out(&args.out, &rendered)?;
    Ok(ExitCode::SUCCESS)
}

/// One worker process per roster size; each emits a single-size JSON report.
fn run_parallel_workers(args: &BenchArgs, seed: u64) -> Result<Vec<BenchReport>> {
    let exe = std::env::current_exe().context("cannot locate own executable")?;
    let mut children = Vec::new();
    for &size in &args.sizes {
        let child = std::process::Command::new(&exe)
            .args([
                "bench",
                "--sizes",
                &size.to_string(),
                "--d",
                &args.d.to_string(),
                "--n",
                &args.n.to_string(),
                "--seed",
                &seed.to_string(),
                "--format",
                "json",
            ])
            .env_remove("GAUTH_SEED")
            .stdout(std::process::Stdio::piped())
            .spawn()
            .context("cannot spawn bench worker")?;
        children.push(child);
    }
    let mut reports = Vec::new();
    for child in children {
        let output = child.wait_with_output().context("bench worker failed")?;
        if !output.status.success() {
            bail!("bench worker exited with {}", output.status);
        }
        reports.push(serde_json::from_slice(&output.stdout).context("bench worker emitted invalid JSON")?);
    }
    Ok(reports)
}

fn merge_reports(reports: Vec<BenchReport>) -> Result<BenchReport> {
    let mut merged = BenchReport {
        roster_sizes: Vec::new(),
        per_user_ms: Vec::new(),
        gm_ms: Vec::new(),
        total_ms: Vec::new(),
        peak_memory_bytes: None,
        counters: Vec::new(),
    };
    for report in reports {
        merged.roster_sizes.extend(report.roster_sizes);
        merged.per_user_ms.extend(report.per_user_ms);
        merged.gm_ms.extend(report.gm_ms);
        merged.total_ms.extend(report.total_ms);
        merged.counters.extend(report.counters);
        merged.peak_memory_bytes = merged.peak_memory_bytes.max(report.peak_memory_bytes);
    }
    Ok(merged)
}

fn replay(args: ReplayArgs) -> Result<ExitCode> {
    let scenario = load_scenario(&args.scenario, args.seed)?;
    let rerun = run_scenario(&scenario).context("scenario run failed")?.to_jsonl();
    let reference = match &args.transcript {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("cannot read transcript {}", path.display()))?,
        None => run_scenario(&scenario).context("scenario rerun failed")?.to_jsonl(),
    };
    if rerun == reference {
        println!("{}", serde_json::json!({ "outcome": "match", "bytes": rerun.len() }));
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}", serde_json::json!({ "outcome": "mismatch", "reason": "transcript_divergence" }));
        Ok(ExitCode::from(2))
    }
}
