use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pprobe::config::{apply_seed_override, grammar_to_string, read_grammar, read_sweep, SweepFile, SEED_ENV};
use pprobe::corpus::write_corpus;
use pprobe::output::{
    infer_axis, read_sweep_csv, write_baseline_csv, write_text, SweepRow, SWEEP_CSV,
};
use pprobe::report::{build_report, format_report};
use pprobe::runner::{dataset, execute_baseline, execute_sweep, refilter, run_jobs, write_sweep_outputs};
use pprobe_core::data::{token_count, GrammarConfig};
use pprobe_core::metrics::label_entropy;
use pprobe_core::pareto::Mode;
use pprobe_core::trainer::{Axis, Job, RunKind};

#[derive(Parser)]
#[command(name = "pprobe", version, about = "Probe-guided information/performance trade-off sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic tagged parallel corpus as JSON lines.
    GenData {
        /// Grammar file (key=value); the default grammar when omitted.
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Overrides the grammar's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the effective grammar to this file.
        #[arg(long)]
        grammar_out: Option<PathBuf>,
    },
    /// Train one model: the reference run, or a scalarized run at --lambda.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (lambda, seed) pair plus the reference runs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Probe randomly sampled checkpoints of one standard training run.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// A sweep.csv to check the checkpoints against.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Recompute frontier flags of an existing sweep.csv.
    Frontier {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Task axis; BLEU when every row has it, otherwise loss.
        #[arg(long)]
        axis: Option<Axis>,
        /// Output directory; `<csv dir>/frontier-<mode>` by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window mean and variance of every run's evaluation curve.
    Report {
        #[arg(long)]
        sweep_dir: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<SweepFile> {
    let mut file = read_sweep(path).with_context(|| format!("reading config {}", path.display()))?;
    let env = std::env::var(SEED_ENV).ok();
    apply_seed_override(&mut file.config, env.as_deref())?;
    Ok(file)
}

fn output_dir(flag: Option<PathBuf>, file: &SweepFile) -> Result<PathBuf> {
    match flag.or_else(|| file.out.clone()) {
        Some(p) => Ok(p),
        None => bail!("no output directory: pass --out or set out= in the config"),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn task_cell(r: &SweepRow) -> String {
    r.bleu.map_or_else(|| format!("loss {:.4}", r.task_loss), |b| format!("bleu {b:.2}"))
}

fn print_frontier(rows: &[SweepRow]) -> Result<()> {
    println!("{:<22} {:>14} {:>10} {:>8}", "run", "task", "probe_ce", "mi");
    for r in rows.iter().filter(|r| r.on_frontier) {
        println!("{:<22} {:>14} {:>10.4} {:>8.4}", r.run_id()?, task_cell(r), r.probe_ce, r.mi);
    }
    let failed = rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        eprintln!("warning: {failed} run(s) failed and were left off the frontier");
    }
    Ok(())
}

fn gen_data(grammar: Option<PathBuf>, n: usize, seed: Option<u64>, out: &Path, grammar_out: Option<PathBuf>) -> Result<()> {
    let mut g = match grammar {
        Some(p) => read_grammar(&p)?,
        None => GrammarConfig::default_grammar(1),
    };
    if let Some(s) = seed {
        g.seed = s;
    }
    let corpus = g.generate(n)?;
    write_corpus(out, &corpus)?;
    if let Some(p) = grammar_out {
        write_text(&p, &grammar_to_string(&g))?;
    }
    let empirical = label_entropy(corpus.iter().flat_map(|r| r.labels.iter()))?;
    println!("sentences {}", corpus.len());
    println!("tokens {}", token_count(&corpus));
    println!("H(s) template {:.6} nats", g.expected_label_entropy());
    println!("H(s) corpus {empirical:.6} nats");
    Ok(())
}

fn train(config: &Path, lambda: Option<f64>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let file = load_config(config)?;
    let out = output_dir(out, &file)?;
    let cfg = &file.config;
    let kind = match lambda {
        Some(l) if l > 0.0 => RunKind::Lambda(l),
        Some(l) => bail!("lambda must be positive, got {l}"),
        None => RunKind::Reference,
    };
    let job = Job {
        kind,
        seed: seed.unwrap_or(cfg.seeds[0]),
    };
    mkdir(&out)?;
    let data = dataset(cfg)?;
    let run = run_jobs(cfg, &data, &[job], 1, Some(&out))?.remove(0);
    let rows = vec![SweepRow::from_run(&run, !run.failed)];
    write_sweep_outputs(&out, &rows, cfg.mode, cfg.axis)?;
    println!(
        "{} step {} {} probe_ce {:.4} h_s {:.4} mi {:.4}{}",
        run.run_id,
        run.best_step,
        task_cell(&rows[0]),
        run.probe_ce,
        run.h_s,
        run.mi,
        if run.failed { " FAILED" } else { "" }
    );
    if let Some(reason) = &run.reason {
        eprintln!("warning: {reason}");
    }
    Ok(())
}

fn sweep(config: &Path, out: Option<PathBuf>, jobs: usize) -> Result<()> {
    let file = load_config(config)?;
    let out = output_dir(out, &file)?;
    let rows = execute_sweep(&file.config, &out, jobs)?;
    print_frontier(&rows)?;
    println!("wrote {}", out.join(SWEEP_CSV).display());
    Ok(())
}

fn baseline(config: &Path, out: Option<PathBuf>, sweep: Option<PathBuf>) -> Result<()> {
    let file = load_config(config)?;
    let out = output_dir(out, &file)?;
    let sweep_rows = sweep.as_deref().map(read_sweep_csv).transpose()?;
    mkdir(&out)?;
    let rows = execute_baseline(&file.config, sweep_rows.as_deref())?;
    let path = out.join("baseline.csv");
    write_baseline_csv(&path, &rows)?;
    println!("{:>6} {:>10} {:>8} {:>10} {:>8}", "step", "task_loss", "bleu", "probe_ce", "covered");
    for r in &rows {
        let bleu = r.bleu.map_or_else(|| "-".into(), |b| format!("{b:.2}"));
        let covered = r.covered.map_or_else(|| "-".into(), |c| c.to_string());
        println!("{:>6} {:>10.4} {:>8} {:>10.4} {:>8}", r.step, r.task_loss, bleu, r.probe_ce, covered);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn frontier(csv: &Path, mode: Mode, axis: Option<Axis>, out: Option<PathBuf>) -> Result<()> {
    let rows = read_sweep_csv(csv)?;
    let axis = axis.unwrap_or_else(|| infer_axis(&rows));
    let out = out.unwrap_or_else(|| {
        let parent = csv.parent().unwrap_or(Path::new("."));
        parent.join(format!("frontier-{}", mode.to_string().to_lowercase()))
    });
    if out.join(SWEEP_CSV) == csv {
        bail!("output would overwrite the input {}", csv.display());
    }
    mkdir(&out)?;
    let rows = refilter(&rows, mode, axis)?;
    write_sweep_outputs(&out, &rows, mode, axis)?;
    print_frontier(&rows)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let rows = build_report(dir)?;
    print!("{}", format_report(&rows));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            grammar,
            n,
            seed,
            out,
            grammar_out,
        } => gen_data(grammar, n, seed, &out, grammar_out),
        Command::Train {
            config,
            lambda,
            seed,
            out,
        } => train(&config, lambda, seed, out),
        Command::Sweep { config, out, jobs } => sweep(&config, out, jobs),
        Command::Baseline { config, out, sweep } => baseline(&config, out, sweep),
        Command::Frontier { csv, mode, axis, out } => frontier(&csv, mode, axis, out),
        Command::Report { sweep_dir } => report(&sweep_dir),
    }
}
