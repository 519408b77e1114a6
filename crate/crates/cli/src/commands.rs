use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use serde::Serialize;

use netlearn::stochastic::EpochEngine;
use netlearn::{
    brute_force, double_climb, fit_profile, ga, monte_carlo, opt_unif, random_instance,
    read_observations_csv, replication_gantt, write_gantt_csv, write_trace_csv,
    BruteForceParams, DoubleClimbParams, DrawMode, GaParams, GridParams, InstanceParams,
    LearningProfile, Solution, Topology, TraceEntry, FORMAT_VERSION,
};

use crate::formats::{AgreementRow, CompareRow, FitFile, SolutionFile};
use crate::{
    Algorithm, CompareArgs, FitArgs, GenInstanceArgs, OptimizeArgs, ProfileSource, SimulateArgs,
};

fn read_instance(path: &Path, factor: f64) -> anyhow::Result<Topology> {
    anyhow::ensure!(
        factor.is_finite() && factor > 0.0,
        "rate multiplier must be positive and finite, got {factor}"
    );
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut topo =
        Topology::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if factor != 1.0 {
        for node in &mut topo.i_nodes {
            node.rate *= factor;
        }
    }
    Ok(topo)
}

fn load_profile(source: &ProfileSource) -> anyhow::Result<LearningProfile> {
    if let Some(path) = &source.profile {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return LearningProfile::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()));
    }
    let path = source
        .fit_observations
        .as_ref()
        .expect("clap guarantees a profile source");
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let observations =
        read_observations_csv(file).with_context(|| format!("parsing {}", path.display()))?;
    let fitted = fit_profile(&observations)?;
    Ok(LearningProfile {
        c1: fitted.c1,
        c2: fitted.c2,
        c3: fitted.c3,
        eps_max: source.eps_max.expect("clap ties eps_max to fitting"),
        t_max: source.t_max.unwrap_or(f64::INFINITY),
    })
}

fn write_output(dir: &Path, name: &str, contents: &[u8]) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn csv_bytes<S: Serialize>(rows: &[S]) -> anyhow::Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    Ok(writer.into_inner()?)
}

fn run_planner(
    topo: &Topology,
    profile: &LearningProfile,
    args: &OptimizeArgs,
) -> anyhow::Result<(Option<Solution>, Vec<TraceEntry>, u32)> {
    Ok(match args.algorithm {
        Algorithm::DoubleClimb => {
            let out = double_climb(
                topo,
                profile,
                &DoubleClimbParams {
                    use_break_rule: !args.no_break,
                    ..DoubleClimbParams::default()
                },
            )?;
            (out.best, out.trace, out.evaluations)
        }
        Algorithm::OptUnif => {
            let out = opt_unif(topo, profile, GridParams::default())?;
            (out.best, Vec::new(), out.evaluations)
        }
        Algorithm::Ga => {
            let params = GaParams {
                population: args.ga.ga_population,
                generations: args.ga.ga_generations,
                ..GaParams::default()
            };
            let out = ga(topo, profile, &params, args.seed)?;
            (out.best, Vec::new(), out.evaluations)
        }
        Algorithm::BruteForce => {
            let out = brute_force(
                topo,
                profile,
                &BruteForceParams {
                    max_states: args.max_states,
                    ..BruteForceParams::default()
                },
            )?;
            (out.best, Vec::new(), out.evaluations)
        }
    })
}

pub(crate) fn optimize(args: OptimizeArgs) -> anyhow::Result<ExitCode> {
    let topo = read_instance(&args.instance, args.scale.factor())?;
    let profile = load_profile(&args.source)?;
    let name = args.algorithm.name();

    if profile.eps_max < profile.c1 {
        // Provable without searching: the error law never falls below c1.
        let mut trace = Vec::new();
        write_trace_csv(&Vec::new(), &mut trace)?;
        write_output(&args.out_dir, "trace.csv", &trace)?;
        write_output(
            &args.out_dir,
            "solution.json",
            SolutionFile::infeasible(name, 0).to_json().as_bytes(),
        )?;
        eprintln!(
            "infeasible: error floor (eps_max {} is below c1 {})",
            profile.eps_max, profile.c1
        );
        return Ok(ExitCode::from(2));
    }

    let (best, trace, evaluations) = run_planner(&topo, &profile, &args)?;
    let mut trace_bytes = Vec::new();
    write_trace_csv(&trace, &mut trace_bytes)?;
    write_output(&args.out_dir, "trace.csv", &trace_bytes)?;

    match best {
        Some(solution) => {
            let file = SolutionFile::from_solution(&topo, name, &solution, evaluations);
            write_output(&args.out_dir, "solution.json", file.to_json().as_bytes())?;
            println!(
                "feasible: cost {:.6}, {} epochs, {} cooperation edges, {} data feeds \
                 ({} evaluations)",
                solution.cost(),
                solution.evaluation.epochs,
                solution.ll_edges.len(),
                solution.il_edges.len(),
                evaluations
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            write_output(
                &args.out_dir,
                "solution.json",
                SolutionFile::infeasible(name, evaluations).to_json().as_bytes(),
            )?;
            eprintln!("infeasible: no configuration meets the targets");
            Ok(ExitCode::from(2))
        }
    }
}

pub(crate) fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let topo = read_instance(&args.instance, 1.0)?;
    let text = fs::read_to_string(&args.solution)
        .with_context(|| format!("reading {}", args.solution.display()))?;
    let file = SolutionFile::from_json(&text)
        .with_context(|| format!("parsing {}", args.solution.display()))?;
    if !file.feasible {
        bail!("solution file is marked infeasible; nothing to simulate");
    }
    let selection = file.resolve(&topo)?;
    let mode = if args.shared_draws {
        DrawMode::Shared
    } else {
        DrawMode::Independent
    };

    let stats = monte_carlo(&topo, &selection, args.reps, args.seed, mode)?;
    let mut engine = EpochEngine::new(&topo, GridParams::default());
    let mut analytic = Vec::with_capacity(selection.epochs as usize);
    for k in 1..=selection.epochs {
        analytic.push(engine.epoch_pdf(&selection.il_edges, k)?.expectation());
    }
    let (_, gantt) = replication_gantt(&topo, &selection, args.seed, 0, mode)?;

    let mut gantt_bytes = Vec::new();
    write_gantt_csv(&gantt, &mut gantt_bytes)?;
    write_output(&args.out_dir, "gantt.csv", &gantt_bytes)?;
    let mut stats_json = serde_json::to_string_pretty(&stats)?;
    stats_json.push('\n');
    write_output(&args.out_dir, "simstats.json", stats_json.as_bytes())?;

    let mut rows: Vec<AgreementRow> = analytic
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            AgreementRow::new(
                format!("epoch_{}", k + 1),
                a,
                stats.per_epoch_mean[k],
                stats.per_epoch_std_error[k],
            )
        })
        .collect();
    rows.push(AgreementRow::new(
        "total".to_string(),
        analytic.iter().sum(),
        stats.total_mean,
        stats.total_std_error,
    ));
    write_output(&args.out_dir, "comparison.csv", &csv_bytes(&rows)?)?;

    let total = rows.last().expect("total row");
    println!(
        "analytic total {:.6}, simulated {:.6} (std error {:.6}, {} reps)",
        total.analytic, total.simulated, total.std_error, stats.reps
    );
    let worst = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    if worst > args.max_se_dev {
        eprintln!(
            "validation failure: analytic and simulated times disagree by {worst:.2} \
             standard errors (allowed {})",
            args.max_se_dev
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

pub(crate) fn fit(args: FitArgs) -> anyhow::Result<ExitCode> {
    let file = fs::File::open(&args.observations)
        .with_context(|| format!("reading {}", args.observations.display()))?;
    let observations = read_observations_csv(file)
        .with_context(|| format!("parsing {}", args.observations.display()))?;
    let fitted = fit_profile(&observations)?;
    let out = FitFile {
        format_version: FORMAT_VERSION,
        c1: fitted.c1,
        c2: fitted.c2,
        c3: fitted.c3,
        mse: fitted.mse,
        eps_max: args.eps_max,
        t_max: args.t_max,
    };
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&args.out, out.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "c1 {:.6}, c2 {:.6}, c3 {:.6}, mse {:.3e} -> {}",
        out.c1,
        out.c2,
        out.c3,
        out.mse,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub(crate) fn gen_instance(args: GenInstanceArgs) -> anyhow::Result<ExitCode> {
    let params = InstanceParams {
        l_count: args.l_nodes,
        i_count: args.i_nodes,
        rate_multiplier: args.scale.factor(),
    };
    let topo = random_instance(&params, args.seed)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&args.out, topo.to_json())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} ({} learners, {} sources, {} cooperation candidates, {} data candidates)",
        args.out.display(),
        topo.l_count(),
        topo.i_count(),
        topo.ll_candidates.len(),
        topo.il_candidates.len()
    );
    Ok(ExitCode::SUCCESS)
}

pub(crate) fn compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let topo = read_instance(&args.instance, args.scale.factor())?;
    let profile = load_profile(&args.source)?;

    let climb = double_climb(&topo, &profile, &DoubleClimbParams::default())?;
    let unif = opt_unif(&topo, &profile, GridParams::default())?;
    let ga_params = GaParams {
        population: args.ga.ga_population,
        generations: args.ga.ga_generations,
        ..GaParams::default()
    };
    let evolved = ga(&topo, &profile, &ga_params, args.seed)?;

    let mut rows = vec![
        CompareRow::new(&topo, "double-climb", &climb.best),
        CompareRow::new(&topo, "opt-unif", &unif.best),
        CompareRow::new(&topo, "ga", &evolved.best),
    ];
    if args.with_brute_force {
        let exact = brute_force(
            &topo,
            &profile,
            &BruteForceParams {
                max_states: args.max_states,
                ..BruteForceParams::default()
            },
        )?;
        rows.push(CompareRow::new(&topo, "brute-force", &exact.best));
    }
    write_output(&args.out_dir, "compare.csv", &csv_bytes(&rows)?)?;

    for row in &rows {
        if row.feasible {
            println!("{}: cost {:.6}", row.algorithm, row.cost);
        } else {
            println!("{}: infeasible", row.algorithm);
        }
    }
    if rows.iter().any(|r| r.feasible) {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("infeasible: no planner found a configuration meeting the targets");
        Ok(ExitCode::from(2))
    }
}
