use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use h2market::coalition::run_planning_study;
use h2market::oracle_suite::{run_suite, AGREEMENT_TOL};
use h2market::plant::{build_schedule_model, ModelInputs};
use h2market::report::{export_tables, full, money, StudyBundle};
use h2market::stackelberg::{fixed_price_sweep, optimize_prices, sensitivity_sweep, SensitivityParam, SweepContext};
use h2market::{GAConfig, PlanDecision, PriceSchedule, Scenario};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{Cli, Command, GlobalOpts};
use crate::error::CliError;

const DEFAULT_OUT: &str = "h2market-out";
const ORACLE_SEED: u64 = 1;

/// Plans handed from the planning stage to the scheduling stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub scenario_fingerprint: String,
    pub structure: String,
    pub planning_prices: Vec<f64>,
    pub plans: Vec<PlanDecision>,
}

/// Everything needed to repeat a run, written last.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'static str,
    command: &'a Command,
    scenario_path: Option<String>,
    scenario_sha256: Option<String>,
    scenario_fingerprint: Option<String>,
    options: &'a GlobalOpts,
    seed: Option<u64>,
    ga: Option<GAConfig>,
    tool_version: &'static str,
    wall_time_seconds: f64,
    outputs: Vec<String>,
}

/// Mutable record of what a run did, for the run manifest.
#[derive(Default)]
struct RunLog {
    scenario: Option<(PathBuf, String, String)>,
    seed: Option<u64>,
    ga: Option<GAConfig>,
    outputs: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let mut log = RunLog::default();
    let g = &cli.global;
    let writes_files = match &cli.command {
        Command::Validate { scenario } => {
            validate(scenario, &mut log)?;
            g.out.is_some()
        }
        Command::Plan { scenario } => {
            plan(g, scenario, &mut log)?;
            true
        }
        Command::Schedule { scenario } => {
            schedule(g, scenario, &mut log)?;
            true
        }
        Command::Sweep { scenario } => {
            sweep(g, scenario, &mut log)?;
            true
        }
        Command::Report { dir } => {
            report(g, dir, &mut log)?;
            true
        }
        Command::OracleCheck { cases } => {
            oracle_check(g, *cases, &mut log)?;
            g.out.is_some()
        }
    };
    if writes_files {
        let dir = out_dir(cli);
        let (path, sha, fp) = match log.scenario {
            Some((p, s, f)) => (Some(p.display().to_string()), Some(s), Some(f)),
            None => (None, None, None),
        };
        let manifest = RunManifest {
            subcommand: cli.command.name(),
            command: &cli.command,
            scenario_path: path,
            scenario_sha256: sha,
            scenario_fingerprint: fp,
            options: g,
            seed: log.seed,
            ga: log.ga,
            tool_version: env!("CARGO_PKG_VERSION"),
            wall_time_seconds: start.elapsed().as_secs_f64(),
            outputs: log.outputs,
        };
        write_atomic(&dir.join("run_manifest.json"), &to_json(&manifest)?)?;
    }
    Ok(())
}

fn out_dir(cli: &Cli) -> PathBuf {
    match (&cli.global.out, &cli.command) {
        (Some(d), _) => d.clone(),
        (None, Command::Report { dir }) => dir.clone(),
        (None, _) => PathBuf::from(DEFAULT_OUT),
    }
}

fn default_out(g: &GlobalOpts) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io("<json>", e))?;
    text.push('\n');
    Ok(text)
}

/// Writes through a temporary sibling and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn load_scenario(path: &Path, log: &mut RunLog) -> Result<Scenario, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Validation(format!("{}: not UTF-8", path.display())))?;
    let scenario = Scenario::from_json(&text).map_err(|e| CliError::scenario(path, e))?;
    log.scenario = Some((
        path.to_path_buf(),
        hex::encode(Sha256::digest(&bytes)),
        scenario.fingerprint(),
    ));
    Ok(scenario)
}

fn new_bundle(scenario: &Scenario) -> StudyBundle {
    StudyBundle {
        scenario_name: scenario.name.clone(),
        scenario_fingerprint: scenario.fingerprint(),
        tariff: scenario.tariff.electricity_price.clone(),
        ..StudyBundle::default()
    }
}

fn export(bundle: &StudyBundle, dir: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let manifest = export_tables(bundle, dir, &bundle.available_sections())?;
    log.outputs.extend(manifest.files.into_iter().map(|f| f.path));
    log.outputs.push("manifest.json".into());
    info!("wrote {} files to {}", log.outputs.len(), dir.display());
    Ok(())
}

fn ga_config(g: &GlobalOpts, scenario: &Scenario, log: &mut RunLog) -> GAConfig {
    let seed = g.seed.unwrap_or(scenario.rng_seed);
    let mut ga = GAConfig {
        seed,
        ..GAConfig::default()
    };
    if let Some(p) = g.ga_pop {
        ga.population = p;
    }
    if let Some(n) = g.ga_gens {
        ga.generations = n;
    }
    log.seed = Some(seed);
    log.ga = Some(ga.clone());
    ga
}

fn validate(path: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let s = load_scenario(path, log)?;
    let c = &s.catalog;
    let tr = &s.transport;
    println!("scenario        {}", s.name);
    println!("fingerprint     {}", s.fingerprint());
    println!("periods         {} x {} h", s.periods(), s.horizon.period_hours);
    println!("plants          {}", s.num_plants());
    for i in 0..s.num_plants() {
        let to_cavern = s.travel(i, s.cavern_index());
        println!(
            "  plant {:<2}      daily generation {} kg, {} periods to the cavern",
            i + 1,
            full(s.daily_generation(i)),
            to_cavern
        );
    }
    println!(
        "equipment       {} compressor + {} liquefier types",
        c.compressor_types, c.liquefier_types
    );
    for (k, (cap, inv)) in c.capacities.iter().zip(&c.invest_daily).enumerate() {
        println!("  type {k:<2}       {} ({cap} kg/period, {inv} $/day)", s.mode_of(k));
    }
    println!(
        "vehicles        tube {} kg, tanker {} kg, operating cost {} $/vehicle/period",
        tr.tube_capacity, tr.tanker_capacity, tr.op_cost_per_period
    );
    let (lo, hi) = h2market::stackelberg::common_band(&s);
    println!("price band      [{lo}, {hi}] $/kg, retail {} $/kg", s.cavern.retail_price);
    println!("injection cap   {} kg/period", s.cavern.max_injection);
    println!("rng seed        {}", s.rng_seed);
    Ok(())
}

fn plan(g: &GlobalOpts, path: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let scenario = load_scenario(path, log)?;
    let dir = default_out(g);
    let prices = PriceSchedule::planning_default(&scenario);
    let study = run_planning_study(&scenario, &prices)?;
    let chosen = &study.structures[study.selected()];
    info!("selected structure {}", chosen.structure);
    let file = PlanFile {
        scenario_fingerprint: scenario.fingerprint(),
        structure: chosen.structure.label(),
        planning_prices: study.planning_prices.clone(),
        plans: chosen.plans.clone(),
    };
    let mut bundle = new_bundle(&scenario);
    bundle.planning = Some(study);
    export(&bundle, &dir, log)?;
    write_atomic(&dir.join("plan.json"), &to_json(&file)?)?;
    log.outputs.push("plan.json".into());
    let table = dir.join("table5.csv");
    let text = fs::read_to_string(&table).map_err(|e| CliError::io(&table, e))?;
    print!("{text}");
    Ok(())
}

/// Plans from `--plan`, or from an inline planning study whose results are
/// added to the bundle.
fn resolve_plans(g: &GlobalOpts, scenario: &Scenario, bundle: &mut StudyBundle) -> Result<Vec<PlanDecision>, CliError> {
    let plans = match &g.plan {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let file: PlanFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            if file.scenario_fingerprint != scenario.fingerprint() {
                warn!("plan file {} was made for a different scenario", p.display());
            }
            file.plans
        }
        None => {
            let study = run_planning_study(scenario, &PriceSchedule::planning_default(scenario))?;
            let chosen = &study.structures[study.selected()];
            info!("planning inline: selected structure {}", chosen.structure);
            let plans = chosen.plans.clone();
            bundle.planning = Some(study);
            plans
        }
    };
    if plans.is_empty() {
        return Err(CliError::Validation("the plan contains no plants".into()));
    }
    let midpoint = scenario.midpoint_prices();
    build_schedule_model(&plans, scenario, &ModelInputs::new(&midpoint))?;
    Ok(plans)
}

fn schedule(g: &GlobalOpts, path: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let scenario = load_scenario(path, log)?;
    let ga = ga_config(g, &scenario, log);
    ga.validate()?;
    let mut bundle = new_bundle(&scenario);
    let plans = resolve_plans(g, &scenario, &mut bundle)?;
    let report = optimize_prices(&scenario, &plans, &ga, g.arrival_convention, &[])?;
    println!("leader profit {}", money(report.leader_profit));
    println!(
        "prices {}",
        report.best_prices.as_slice().iter().map(|p| full(*p)).collect::<Vec<_>>().join(",")
    );
    bundle.equilibrium = Some(report);
    if let Some(grid) = &g.flat_sweep {
        bundle.flat_sweep = Some(fixed_price_sweep(&scenario, &plans, grid, g.arrival_convention)?);
    }
    export(&bundle, &default_out(g), log)
}

fn sweep(g: &GlobalOpts, path: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let scenario = load_scenario(path, log)?;
    let Some((param, values)) = &g.sensitivity else {
        return Err(CliError::Usage("sweep needs --sensitivity NAME=LIST".into()));
    };
    let ga = ga_config(g, &scenario, log);
    ga.validate()?;
    let mut bundle = new_bundle(&scenario);
    let needs_plans = *param == SensitivityParam::Qtrans || g.flat_sweep.is_some();
    let plans = if needs_plans {
        resolve_plans(g, &scenario, &mut bundle)?
    } else {
        Vec::new()
    };
    let ctx = SweepContext {
        plans: &plans,
        ga: &ga,
        convention: g.arrival_convention,
        planning_prices: None,
    };
    bundle.sensitivity = sensitivity_sweep(&scenario, *param, values, &ctx)?;
    for p in &bundle.sensitivity {
        match (&p.leader_profit, &p.selected_structure) {
            (Some(v), _) => println!("{param}={} leader_profit={}", full(p.value), money(*v)),
            (None, Some(s)) => println!("{param}={} selected={s}", full(p.value)),
            _ => {}
        }
    }
    if let Some(grid) = &g.flat_sweep {
        bundle.flat_sweep = Some(fixed_price_sweep(&scenario, &plans, grid, g.arrival_convention)?);
    }
    export(&bundle, &default_out(g), log)
}

fn report(g: &GlobalOpts, dir: &Path, log: &mut RunLog) -> Result<(), CliError> {
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let bundle: StudyBundle =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let out = g.out.clone().unwrap_or_else(|| dir.to_path_buf());
    let sections = bundle.available_sections();
    if sections.is_empty() {
        return Err(CliError::Validation(format!("{} holds no study results", path.display())));
    }
    for s in &sections {
        println!("{s}");
    }
    export(&bundle, &out, log)
}

fn oracle_check(g: &GlobalOpts, cases: usize, log: &mut RunLog) -> Result<(), CliError> {
    let seed = g.seed.unwrap_or(ORACLE_SEED);
    log.seed = Some(seed);
    let outcomes = run_suite(seed, cases)?;
    let mut worst = 0.0f64;
    for o in &outcomes {
        worst = worst.max(o.relative_difference);
        println!(
            "case {:>3} {} lattice={} milp={} oracle={} {}",
            o.index,
            if o.agree { "ok  " } else { "FAIL" },
            o.lattice,
            full(o.milp_objective),
            full(o.oracle_objective),
            o.label
        );
    }
    let agree = outcomes.iter().filter(|o| o.agree).count();
    println!(
        "oracle-check: {agree}/{} agree within {AGREEMENT_TOL:e} (worst relative difference {worst:e})",
        outcomes.len()
    );
    if let Some(dir) = &g.out {
        write_atomic(&dir.join("oracle_check.json"), &to_json(&outcomes)?)?;
        log.outputs.push("oracle_check.json".into());
    }
    if agree == outcomes.len() {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "{} of {} models disagree with the oracle",
            outcomes.len() - agree,
            outcomes.len()
        )))
    }
}
