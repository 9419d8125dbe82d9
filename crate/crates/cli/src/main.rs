//! `treeprompt`: featurize, train, eval, ablate and export-dot over a run config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use treeprompt::harness::{
    self, cmd_ablate, cmd_eval, cmd_export_dot, cmd_featurize, cmd_train, parse_verbalizer, Axis, HarnessError,
    Method, Overrides, PromptSource, RunConfig, SplitSelection,
};

#[derive(Parser, Debug)]
#[command(name = "treeprompt", version, about = "Decision trees over prompt features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Query the LM for every (prompt, example) cell missing from the feature cache.
    Featurize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Splits::All)]
        split: Splits,
    },
    /// Fit a model on cached training features.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a trained model on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Model file (default: `<out_dir>/model.json`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fail with exit code 3 instead of querying the LM for uncached cells.
        #[arg(long)]
        cache_only: bool,
    },
    /// Run featurize, train and eval over the product of the given axes.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// `name=v1,v2,...` with name one of verbalizer, prompt_source, train_fraction, method.
        #[arg(long = "axis", value_parser = parse_axis)]
        axes: Vec<Axis>,
    },
    /// Write a tree model as Graphviz DOT.
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic suite (data, mock rules, prompts, config) to a directory.
    Synth {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Splits {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Planted,
    Xor,
    Unbalanced,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Greedy members, boosting rounds, or the GBDT call budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    tree_depth: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long, value_parser = parse_verbalizer)]
    verbalizer: Option<treeprompt::promptgen::VerbalizerChoice>,
    #[arg(long, value_parser = parse_source)]
    prompt_source: Option<PromptSource>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    features_dir: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_source(s: &str) -> Result<PromptSource, String> {
    s.parse()
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = RunConfig::load(&self.config)?;
        Overrides {
            seed: self.seed,
            method: self.method,
            budget: self.budget,
            stages: self.stages,
            learning_rate: self.learning_rate,
            tree_depth: self.tree_depth,
            max_depth: self.max_depth,
            train_fraction: self.train_fraction,
            test_limit: self.test_limit,
            verbalizer: self.verbalizer,
            prompt_source: self.prompt_source,
            out_dir: self.out_dir.clone(),
            features_dir: self.features_dir.clone(),
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Featurize { run, split } => {
            let cfg = run.load()?;
            let which = match split {
                Splits::Train => SplitSelection::Train,
                Splits::Test => SplitSelection::Test,
                Splits::All => SplitSelection::All,
            };
            let o = cmd_featurize(&cfg, which)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            println!("prompts: {}", o.n_prompts);
            for (name, s) in [("train", &o.train), ("test", &o.test)] {
                if let Some(s) = s {
                    println!(
                        "{name}: {} cells written, {} cached, {} abstains",
                        s.cells_written, s.cells_skipped, s.abstains
                    );
                }
            }
            println!("backend calls: {}", o.backend_calls);
        }
        Command::Train { run } => {
            let cfg = run.load()?;
            let o = cmd_train(&cfg)?;
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            let s = o.model.summary();
            println!("method: {}", s.method);
            println!("columns: {}", s.n_columns);
            println!("features used: {}", s.n_features_used);
            println!("max calls per example: {}", s.max_calls);
            println!("model: {}", o.model_path.display());
        }
        Command::Eval {
            run,
            model,
            cache_only,
        } => {
            let cfg = run.load()?;
            let o = cmd_eval(&cfg, model.as_deref(), cache_only)?;
            print!("{}", o.report.render_text());
            println!("backend calls: {}", o.backend_calls);
        }
        Command::Ablate { run, axes } => {
            let cfg = run.load()?;
            let o = cmd_ablate(&cfg, &axes)?;
            print!("{}", o.render_text());
        }
        Command::ExportDot { model, out } => {
            let dot = cmd_export_dot(&model)?;
            match out {
                Some(p) => std::fs::write(&p, dot).map_err(|e| HarnessError::Io {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?,
                None => print!("{dot}"),
            }
        }
        Command::Synth { suite, dir, seed } => {
            let s = match suite {
                Suite::Planted => harness::synthetic::planted_suite(200, 100, seed),
                Suite::Xor => harness::synthetic::xor_suite(10, 5, seed),
                Suite::Unbalanced => harness::synthetic::unbalanced_suite(seed),
            };
            let path = s.write(&dir)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
