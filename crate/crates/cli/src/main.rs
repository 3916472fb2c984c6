use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use filmvalues::gateway::LLM_MODEL_ENV;
use filmvalues::pipeline::{self, exit, PipelineError, ProviderKind, RunConfig};
use filmvalues::ItemId;

#[derive(Parser, Debug)]
#[command(
    name = "filmvalues",
    version,
    about = "Survey screenplay characters and compare them with real respondents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse raw and tagged scripts into the parsed store.
    Parse(Common),
    /// Draw the decade-stratified film sample.
    Sample(Common),
    /// Resolve lead characters and build their memory banks.
    Agents(Common),
    /// Condense each agent's memory into expert reflections.
    Reflect(Common),
    /// Ask every agent the survey items.
    Survey(Common),
    /// Aggregate responses into cell statistics and plot data.
    Analyze(Common),
    /// Write report.json and report.txt.
    Report(Common),
    /// Run every stage in order.
    Pipeline(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value = "default")]
    run_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "mock")]
    provider: ProviderKind,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Root holding parsed/, agents/ and runs/.
    #[arg(long, default_value = ".")]
    workdir: PathBuf,
    /// Script directory; defaults to <workdir>/corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Real-survey CSV with header year,gender,item_id,response.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = pipeline::DEFAULT_PER_DECADE)]
    per_decade: usize,
    /// Items to ask; repeat or comma-separate. Defaults to all three.
    #[arg(long = "item", value_delimiter = ',')]
    items: Vec<ItemId>,
    #[arg(long)]
    force: bool,
    #[arg(long)]
    per_item_prompts: bool,
    /// JSON list of {marker, reply_template} rules for the mock provider.
    #[arg(long)]
    rulebook: Option<PathBuf>,
    #[arg(long, default_value_t = filmvalues::agent::DEFAULT_MIN_MEMORY)]
    min_memory: usize,
    #[arg(long, default_value_t = filmvalues::corpus::DEFAULT_MAX_LEADS)]
    max_leads: usize,
    /// Fill missing genres and vote counts from OMDb while sampling.
    #[arg(long)]
    omdb: bool,
    #[arg(long, env = LLM_MODEL_ENV, default_value = "mock-model")]
    model: String,
}

impl Common {
    fn config(self) -> RunConfig {
        let mut c = RunConfig::new(self.workdir);
        if let Some(corpus) = self.corpus {
            c.corpus_dir = corpus;
        }
        c.run_id = self.run_id;
        c.seed = self.seed;
        c.provider = self.provider;
        c.model_name = self.model;
        c.concurrency = self.concurrency;
        c.per_decade = self.per_decade;
        if !self.items.is_empty() {
            c.items = self.items;
        }
        c.reference_csv = self.reference;
        c.rulebook = self.rulebook;
        c.force = self.force;
        c.per_item_prompts = self.per_item_prompts;
        c.min_memory = self.min_memory;
        c.max_leads = self.max_leads;
        c.omdb = self.omdb;
        c
    }
}

fn partial_if(failed: bool) -> i32 {
    if failed {
        exit::PARTIAL
    } else {
        exit::SUCCESS
    }
}

fn gateway(config: &RunConfig) -> Result<filmvalues::Gateway, PipelineError> {
    let provider = pipeline::make_provider(config)?;
    pipeline::make_gateway(config, provider)
}

fn run(command: Command) -> Result<i32, PipelineError> {
    match command {
        Command::Parse(c) => {
            let config = c.config();
            let s = pipeline::cmd_parse(&config.corpus_dir, &config.parsed_dir())?;
            println!(
                "parsed {} documents, {} warnings, {} errors",
                s.documents.len(),
                s.warnings.len(),
                s.errors.len()
            );
            for w in &s.warnings {
                println!("warning: {w}");
            }
            for e in &s.errors {
                println!("error: {e}");
            }
            Ok(s.exit_code())
        }
        Command::Sample(c) => {
            let config = c.config();
            config.validate()?;
            let s = pipeline::cmd_sample(&config)?;
            println!(
                "sampled {} films, {} decade shortfalls",
                s.film_ids.len(),
                s.shortfalls.len()
            );
            for e in &s.enrichment_errors {
                println!("metadata lookup failed: {e}");
            }
            Ok(exit::SUCCESS)
        }
        Command::Agents(c) => {
            let config = c.config();
            config.validate()?;
            let r = pipeline::cmd_agents(&config)?;
            println!(
                "admitted {} agents from {} films, {} exclusions",
                r.admitted.len(),
                r.films,
                r.excluded.len()
            );
            Ok(exit::SUCCESS)
        }
        Command::Reflect(c) => {
            let config = c.config();
            config.validate()?;
            let s = pipeline::cmd_reflect(&config, &gateway(&config)?)?;
            println!(
                "reflections: {} generated, {} cached, {} failed",
                s.generated,
                s.cached,
                s.failed.len()
            );
            for f in &s.failed {
                println!("failed: {f}");
            }
            Ok(partial_if(!s.failed.is_empty()))
        }
        Command::Survey(c) => {
            let config = c.config();
            config.validate()?;
            let s = pipeline::cmd_survey(&config, &gateway(&config)?)?;
            println!(
                "survey: {} responses, {} missing answers, {} agents failed, {} resumed",
                s.responses,
                s.missing.len(),
                s.failed.len(),
                s.resumed
            );
            for f in &s.failed {
                println!("failed: {f}");
            }
            Ok(partial_if(!s.failed.is_empty()))
        }
        Command::Analyze(c) => {
            let config = c.config();
            config.validate()?;
            let a = pipeline::cmd_analyze(&config)?;
            println!(
                "cells: {} simulated, {} real",
                a.sim_cells.len(),
                a.real_cells.len()
            );
            Ok(exit::SUCCESS)
        }
        Command::Report(c) => {
            let config = c.config();
            config.validate()?;
            let r = pipeline::cmd_report(&config)?;
            print!("{}", pipeline::render_report_text(&r));
            Ok(exit::SUCCESS)
        }
        Command::Pipeline(c) => {
            let config = c.config();
            let outcome = pipeline::cmd_pipeline(&config, None)?;
            print!("{}", pipeline::render_report_text(&outcome.report));
            Ok(outcome.exit_code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors, which would read as a partial run
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::FATAL as u8 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::FATAL as u8)
        }
    }
}
