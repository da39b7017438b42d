//! Command-line front end: universality analysis, network construction,
//! verification, and reproduction of the published counterexamples.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use quniv::act::{tabulate, ActivationSpec, QuantTable, DEFAULT_GUARD_BITS, DEFAULT_MAX_ESCALATIONS};
use quniv::conditions::{verdict, AnalysisReport};
use quniv::construct::{build_approximator, ApproxConfig, Strategy};
use quniv::fxp::FxFormat;
use quniv::net::{net_from_text, net_to_text, NetError};
use quniv::reach::WeightMode;
use quniv::targets::{parse_rational, AnalyticTarget, GridTarget, Target};
use quniv::verify::{
    all_passed, repro_hardtanh, repro_naive_quantization, runs_to_junit, verify_approximation,
    verify_exact_fit, VerificationRun, VerifyBudget,
};

#[derive(Parser)]
#[command(name = "quniv")]
#[command(about = "Exact fixed-point quantized-network universality toolkit")]
#[command(version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Exhaustive-enumeration cap per check (env: QUNIV_MAX_ENUM).
    #[arg(long, global = true)]
    max_enum: Option<u64>,

    /// Sample count for checks that exceed the cap (env: QUNIV_SAMPLES).
    #[arg(long, global = true)]
    samples: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    General,
    Binary,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Shallow,
    Deep,
}

#[derive(Subcommand)]
enum Command {
    /// Decide universality of (activation, Q_{p,s}); exit code 0 =
    /// Universal, 10 = NotUniversal, 20 = Unknown.
    Analyze {
        /// Zoo name (relu, sigmoid, hardtanh5s, ...) or table:PATH.
        #[arg(long)]
        act: String,
        #[arg(long)]
        p: u32,
        #[arg(long)]
        s: u32,
        #[arg(long, value_enum, default_value = "general")]
        mode: Mode,
        /// Enclosure start precision for tabulation.
        #[arg(long, default_value_t = DEFAULT_GUARD_BITS)]
        guard_bits: u32,
        /// Precision doublings before reporting an unresolved tie.
        #[arg(long, default_value_t = DEFAULT_MAX_ESCALATIONS)]
        escalations: u32,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate ⌊σ⌉ over the grid and write the table file.
    Tabulate {
        #[arg(long)]
        act: String,
        #[arg(long)]
        p: u32,
        #[arg(long)]
        s: u32,
        #[arg(long, default_value_t = DEFAULT_GUARD_BITS)]
        guard_bits: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_ESCALATIONS)]
        escalations: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a universal approximator for a target; writes the network,
    /// its activation table, and a build manifest.
    Build {
        #[arg(long)]
        act: String,
        #[arg(long)]
        p: u32,
        #[arg(long)]
        s: u32,
        /// sin3 | gauss | randtable | table:PATH.
        #[arg(long)]
        target: String,
        /// Input dimension for builtin targets.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Target error ε ("0.125" or "1/8").
        #[arg(long)]
        eps: String,
        /// Explicit δ = ω⁻¹(ε) override (same formats as ε).
        #[arg(long)]
        delta: Option<String>,
        #[arg(long, value_enum, default_value = "shallow")]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "general")]
        mode: Mode,
        /// Seed for the randtable target.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Partition cell budget.
        #[arg(long, default_value_t = 1 << 20)]
        cell_budget: u64,
        #[arg(long)]
        out: PathBuf,
        /// Manifest path (default: <out>.manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Verify a built network against a target; nonzero exit on failure.
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long)]
        eps: String,
        /// Also require bit-exact equality with the rounded target.
        #[arg(long, default_value_t = false)]
        exact: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// JUnit XML output path.
        #[arg(long)]
        junit: Option<PathBuf>,
    },
    /// Reproduce the published counterexamples.
    Repro {
        /// naive-quantization | hardtanh-general | hardtanh-binary | all.
        which: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        junit: Option<PathBuf>,
    },
}

fn resolve_activation(selector: &str, s: u32) -> Result<(ActivationSpec, Option<QuantTable>)> {
    if let Some(path) = selector.strip_prefix("table:") {
        let table = QuantTable::read_file(Path::new(path))
            .with_context(|| format!("reading table {path}"))?;
        return Ok((ActivationSpec::from_table(table.clone()), Some(table)));
    }
    Ok((ActivationSpec::by_name(selector, s)?, None))
}

fn resolve_target(
    selector: &str,
    dim: usize,
    format: FxFormat,
    seed: u64,
) -> Result<Box<dyn Target>> {
    if let Some(path) = selector.strip_prefix("table:") {
        let table = QuantTable::read_file(Path::new(path))
            .with_context(|| format!("reading target table {path}"))?;
        if table.format != format {
            bail!(
                "target table format {} does not match requested {}",
                table.format,
                format
            );
        }
        if dim != 1 {
            bail!("table targets are one-dimensional");
        }
        let max = i64::try_from(table.format.max_numerator()).expect("desk scale");
        let values = table
            .entry_numerators()
            .iter()
            .enumerate()
            .map(|(i, v)| (vec![i as i64 - max], *v))
            .collect();
        return Ok(Box::new(GridTarget::new(
            &format!("table:{path}"),
            format,
            1,
            values,
        )));
    }
    if selector == "randtable" {
        return Ok(Box::new(GridTarget::random("randtable", format, dim, seed)));
    }
    AnalyticTarget::by_name(selector, dim)
        .map(|t| Box::new(t) as Box<dyn Target>)
        .ok_or_else(|| anyhow!("unknown target {selector:?}"))
}

/// Writes `{ "meta": {...timings...}, "result": ... }`: identical configs
/// and seeds give byte-identical `result` subtrees; wall time is isolated
/// in `meta`.
fn write_report(path: &Path, result: serde_json::Value, elapsed_ms: u128) -> Result<()> {
    let doc = serde_json::json!({
        "meta": { "elapsed_ms": elapsed_ms },
        "result": result,
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn print_runs(runs: &[VerificationRun]) {
    for r in runs {
        let status = if r.passed() { "pass" } else { "FAIL" };
        let sampled = if r.sampled { " [sampled]" } else { "" };
        println!("{status}{sampled} {}: {} — {}", r.id, r.subject, r.detail);
        if let Some(w) = &r.witness {
            println!("      witness: {w}");
        }
    }
}

fn finish_runs(
    runs: Vec<VerificationRun>,
    out: Option<&Path>,
    junit: Option<&Path>,
    suite: &str,
    started: Instant,
) -> Result<ExitCode> {
    print_runs(&runs);
    if let Some(path) = out {
        write_report(
            path,
            serde_json::to_value(&runs)?,
            started.elapsed().as_millis(),
        )?;
    }
    if let Some(path) = junit {
        std::fs::write(path, runs_to_junit(suite, &runs))?;
    }
    Ok(if all_passed(&runs) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn budget(cli_max: Option<u64>, cli_samples: Option<u64>, seed: u64) -> VerifyBudget {
    let mut b = VerifyBudget {
        seed,
        ..VerifyBudget::default()
    };
    if let Ok(v) = std::env::var("QUNIV_MAX_ENUM") {
        if let Ok(v) = v.parse() {
            b.max_enum = v;
        }
    }
    if let Ok(v) = std::env::var("QUNIV_SAMPLES") {
        if let Ok(v) = v.parse() {
            b.samples = v;
        }
    }
    if let Some(v) = cli_max {
        b.max_enum = v;
    }
    if let Some(v) = cli_samples {
        b.samples = v;
    }
    b
}

fn summarize_analysis(report: &AnalysisReport) {
    println!(
        "{} under p={}, s={} ({} weights): {:?}",
        report.activation, report.p, report.s, report.mode, report.verdict
    );
    if let Some(w) = &report.condition1 {
        println!(
            "  threshold structure: α={} β={} z={}/{}",
            w.alpha, w.beta, w.z_num, report.s
        );
    }
    if !report.sufficiency_items.is_empty() {
        let items: Vec<String> = report
            .sufficiency_items
            .iter()
            .map(|c| format!("{} (q1={}, q2={})", c.item, c.q1, c.q2))
            .collect();
        println!("  sufficiency items: {}", items.join(", "));
    }
    if let Some(r) = report.divisor_r {
        println!("  divisor obstruction: r = {r}");
    }
    if let Some(b) = report.bias_witness_num {
        println!("  bias witness: b = {b}/{}", report.s);
    }
    println!(
        "  sets at the reported bias: |N| = {}, |S| = {}, N = S: {}, S full: {}",
        report.sets.n_size, report.sets.s_size, report.sets.n_equals_s, report.sets.s_full
    );
    if !report.sets.missing_from_n.is_empty() {
        println!("  unreachable numerators: {:?}", report.sets.missing_from_n);
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let started = Instant::now();
    match cli.command {
        Command::Analyze {
            act,
            p,
            s,
            mode,
            guard_bits,
            escalations,
            out,
        } => {
            let format = FxFormat::new(p, s)?;
            let (spec, _) = resolve_activation(&act, s)?;
            let report = verdict(&spec, format, mode == Mode::Binary, guard_bits, escalations)?;
            summarize_analysis(&report);
            if let Some(path) = out {
                write_report(
                    &path,
                    serde_json::to_value(&report)?,
                    started.elapsed().as_millis(),
                )?;
            }
            Ok(ExitCode::from(u8::try_from(report.verdict.exit_code()).unwrap()))
        }
        Command::Tabulate {
            act,
            p,
            s,
            guard_bits,
            escalations,
            out,
        } => {
            let format = FxFormat::new(p, s)?;
            let (spec, _) = resolve_activation(&act, s)?;
            let table = tabulate(&spec, format, guard_bits, escalations)?;
            table.write_file(&out)?;
            println!(
                "wrote {} entries for {} under {} to {}",
                table.entry_numerators().len(),
                spec.name(),
                format,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Build {
            act,
            p,
            s,
            target,
            dim,
            eps,
            delta,
            strategy,
            mode,
            seed,
            cell_budget,
            out,
            manifest,
        } => {
            let format = FxFormat::new(p, s)?;
            let (spec, _) = resolve_activation(&act, s)?;
            let table = Arc::new(tabulate(
                &spec,
                format,
                DEFAULT_GUARD_BITS,
                DEFAULT_MAX_ESCALATIONS,
            )?);
            let tgt = resolve_target(&target, dim, format, seed)?;
            let eps_r = parse_rational(&eps).ok_or_else(|| anyhow!("bad --eps {eps:?}"))?;
            let delta_r = match &delta {
                Some(d) => Some(parse_rational(d).ok_or_else(|| anyhow!("bad --delta {d:?}"))?),
                None => None,
            };
            let cfg = ApproxConfig {
                strategy: match strategy {
                    StrategyArg::Shallow => Strategy::Shallow,
                    StrategyArg::Deep => Strategy::Deep,
                },
                mode: match mode {
                    Mode::General => WeightMode::General,
                    Mode::Binary => WeightMode::Binary,
                },
                eps: eps_r,
                delta_override: delta_r,
                cell_budget,
                seed: Some(seed),
            };
            let (net, man) = build_approximator(&spec, &table, tgt.as_ref(), &cfg)?;
            let table_name = format!(
                "{}.qt",
                out.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "net".into())
            );
            let table_path = out.with_file_name(&table_name);
            table.write_file(&table_path)?;
            std::fs::write(&out, net_to_text(&net, &table_name))?;
            let manifest_path = manifest.unwrap_or_else(|| out.with_extension("manifest.json"));
            write_report(
                &manifest_path,
                serde_json::to_value(&man)?,
                started.elapsed().as_millis(),
            )?;
            println!(
                "built {} cells ({} materialized), {} parameters -> {}",
                man.cells,
                man.materialized_cells,
                man.param_count,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            net,
            target,
            dim,
            eps,
            exact,
            seed,
            out,
            junit,
        } => {
            let text = std::fs::read_to_string(&net)
                .with_context(|| format!("reading {}", net.display()))?;
            let dir = net.parent().unwrap_or(Path::new(".")).to_path_buf();
            let loaded = net_from_text(&text, |table_ref| {
                QuantTable::read_file(&dir.join(table_ref))
                    .map_err(|e| NetError::Parse(e.to_string()))
            })?;
            let tgt = resolve_target(&target, dim, loaded.format, seed)?;
            let eps_r = parse_rational(&eps).ok_or_else(|| anyhow!("bad --eps {eps:?}"))?;
            let b = budget(cli.max_enum, cli.samples, seed);
            let mut runs = vec![verify_approximation(&loaded, tgt.as_ref(), &eps_r, &b)];
            if exact {
                runs.push(verify_exact_fit(&loaded, tgt.as_ref(), &b));
            }
            finish_runs(runs, out.as_deref(), junit.as_deref(), "quniv-verify", started)
        }
        Command::Repro { which, out, junit } => {
            let mut runs = Vec::new();
            match which.as_str() {
                "naive-quantization" => runs.extend(repro_naive_quantization()),
                "hardtanh-general" => runs.extend(repro_hardtanh(false)),
                "hardtanh-binary" => runs.extend(repro_hardtanh(true)),
                "all" => {
                    runs.extend(repro_naive_quantization());
                    runs.extend(repro_hardtanh(false));
                    runs.extend(repro_hardtanh(true));
                }
                other => bail!("unknown reproduction target {other:?}"),
            }
            finish_runs(runs, out.as_deref(), junit.as_deref(), "quniv-repro", started)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
