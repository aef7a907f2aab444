use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fraclab::config::{ExperimentConfig, Length, Task};
use fraclab::geometry::parse_number;
use fraclab::runner::{init_threads, run};

#[derive(Parser, Debug)]
#[command(name = "fraclab", version, about = "Fractional Sobolev-Poincare and Hardy inequality lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the tasks listed in a config file
    Run(Common),
    /// Whitney decomposition and its acceptance invariants
    Whitney(Common),
    /// Chain decomposition, shadows and (rho, sigma)
    Chains(Common),
    /// Capacity of a disc, with nested-set monotonicity
    Capacity(Common),
    /// Strong Sobolev-Poincare inequality
    CheckSp(Common),
    /// Weak-type Sobolev-Poincare inequality
    CheckWeak(Common),
    /// Hardy inequality on localized fixtures
    CheckHardy(Common),
    /// Weighted measure against capacity
    CheckMazya(Common),
    /// Whitney-localized capacity sum
    CheckWhitneySum(Common),
    /// Truncated logarithms collapsing onto the slit
    Counterexample(Common),
    /// Assouad dimension estimates of the boundary
    Assouad(Common),
    /// Nested-window exhaustion of an unbounded domain
    Exhaustion(Common),
}

fn number(s: &str) -> Result<f64, String> {
    parse_number(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config; flags below override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "task")]
    tasks: Vec<String>,
    #[arg(long = "domain")]
    domains: Vec<String>,
    #[arg(long, value_parser = number)]
    delta: Vec<f64>,
    #[arg(long, value_parser = number)]
    p: Vec<f64>,
    #[arg(long, value_parser = number)]
    q: Vec<f64>,
    #[arg(long, value_parser = number)]
    tau: Vec<f64>,
    #[arg(long, value_parser = number)]
    kappa: Vec<f64>,
    /// grid spacing, e.g. 1/64
    #[arg(long)]
    h: Vec<String>,
    #[arg(long = "fixture")]
    fixtures: Vec<String>,
    /// drop all fixtures
    #[arg(long)]
    no_fixtures: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_dumps: bool,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    max_level: Option<i32>,
    #[arg(long, value_parser = number)]
    set_radius: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    m_max: Option<u32>,
    #[arg(long, value_parser = number)]
    sizes: Vec<f64>,
    #[arg(long, value_parser = number)]
    bump_radius: Option<f64>,
}

fn overlay<T>(dst: &mut Vec<T>, src: Vec<T>) {
    if !src.is_empty() {
        *dst = src;
    }
}

impl Common {
    fn into_config(self, task: Option<Task>) -> fraclab::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = task {
            cfg.tasks = vec![t];
        }
        let tasks = self.tasks.iter().map(|t| t.parse()).collect::<fraclab::Result<Vec<Task>>>()?;
        overlay(&mut cfg.tasks, tasks);
        overlay(&mut cfg.domains, self.domains);
        overlay(&mut cfg.params.delta, self.delta);
        overlay(&mut cfg.params.p, self.p);
        overlay(&mut cfg.params.q, self.q);
        overlay(&mut cfg.params.tau, self.tau);
        overlay(&mut cfg.params.kappa, self.kappa);
        overlay(&mut cfg.h, self.h.into_iter().map(Length::Text).collect());
        overlay(&mut cfg.fixtures.families, self.fixtures);
        if self.no_fixtures {
            cfg.fixtures.families.clear();
        }
        overlay(&mut cfg.exhaustion.sizes, self.sizes);
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.count {
            cfg.fixtures.count = v;
        }
        if let Some(v) = self.out {
            cfg.output.dir = v;
        }
        if self.no_dumps {
            cfg.output.dumps = false;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.max_level {
            cfg.max_level = v;
        }
        if let Some(v) = self.set_radius {
            cfg.set_radius = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.m_max {
            cfg.counterexample.m_max = v;
        }
        if let Some(v) = self.bump_radius {
            cfg.exhaustion.bump_radius = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn split(cmd: Command) -> (Common, Option<Task>) {
    match cmd {
        Command::Run(c) => (c, None),
        Command::Whitney(c) => (c, Some(Task::Whitney)),
        Command::Chains(c) => (c, Some(Task::Chains)),
        Command::Capacity(c) => (c, Some(Task::Capacity)),
        Command::CheckSp(c) => (c, Some(Task::CheckSp)),
        Command::CheckWeak(c) => (c, Some(Task::CheckWeak)),
        Command::CheckHardy(c) => (c, Some(Task::CheckHardy)),
        Command::CheckMazya(c) => (c, Some(Task::CheckMazya)),
        Command::CheckWhitneySum(c) => (c, Some(Task::CheckWhitneySum)),
        Command::Counterexample(c) => (c, Some(Task::Counterexample)),
        Command::Assouad(c) => (c, Some(Task::Assouad)),
        Command::Exhaustion(c) => (c, Some(Task::Exhaustion)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, task) = split(cli.command);
    if task.is_none() && common.config.is_none() {
        eprintln!("error: `run` needs --config");
        return ExitCode::from(2);
    }
    let cfg = match init_threads().and_then(|_| common.into_config(task)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            let failures = out.failures();
            println!(
                "{} rows, {} assertion failures, {} skipped -> {}",
                out.reports.len(),
                failures,
                out.skipped.len(),
                cfg.output.dir.join(&cfg.output.csv).display()
            );
            for r in out.reports.iter().filter(|r| r.failed()) {
                println!("FAILED {} {} {} ratio={} {}", r.name, r.domain, r.fixture, r.ratio, r.note);
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
