//! Command implementations. All artifacts are written under the output
//! directory; everything except the `*_timing.csv` files is byte-identical
//! across runs with the same config and seed.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::SeedableRng;

use neurodp::pipeline::derive_seed;
use neurodp::{
    fit_regression, generate_policy_dataset, sequential_dp_train, simulate_closed_loop,
    solve_mpc_qp_traced, value_controller_solve, ControlError, Controller, CostToGo, FwTraceRow,
    HorizonSets, Mlp, MlpSpec, OutputUnit, SolverError, Trajectory,
};

use crate::config::ExperimentConfig;
use crate::svg;

#[derive(Debug)]
pub enum AppError {
    /// Configuration, I/O, or missing-artifact problems (exit code 1).
    Config(String),
    /// The posed problem is infeasible (exit code 2).
    Infeasible(String),
    /// An acceptance threshold was exceeded (exit code 3).
    Threshold(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 1,
            AppError::Infeasible(_) => 2,
            AppError::Threshold(_) => 3,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "error: {m}"),
            AppError::Infeasible(m) => write!(f, "infeasible: {m}"),
            AppError::Threshold(m) => write!(f, "threshold exceeded: {m}"),
        }
    }
}

fn classify_control(e: ControlError) -> AppError {
    match &e {
        ControlError::EmptyStage { .. }
        | ControlError::InitialStateInfeasible
        | ControlError::EmptyAdmissibleSet => AppError::Infeasible(e.to_string()),
        ControlError::Solver(SolverError::Infeasible) => AppError::Infeasible(e.to_string()),
        _ => AppError::Config(e.to_string()),
    }
}

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub svg: bool,
    pub seed: u64,
    pub trace: bool,
}

impl Ctx {
    fn write(&self, rel: &str, contents: &str) -> Result<PathBuf, AppError> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)
                .map_err(|e| AppError::Config(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(&path, contents)
            .map_err(|e| AppError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: serde::Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, AppError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| AppError::Config(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write(rel, &text)
    }

    fn load_mlp(&self, rel: &str) -> Result<Mlp, AppError> {
        let path = self.out.join(rel);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            AppError::Config(format!(
                "missing model artifact {} (run the training command first)",
                path.display()
            ))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
    }

    fn compute_sets(&self) -> Result<HorizonSets, AppError> {
        let sys = self.cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
        backward_sets(&self.cfg, &sys)
    }
}

fn backward_sets(cfg: &ExperimentConfig, sys: &neurodp::LinearSystem) -> Result<HorizonSets, AppError> {
    let x = cfg.x_set().map_err(|e| AppError::Config(e.to_string()))?;
    let u = cfg.u_set().map_err(|e| AppError::Config(e.to_string()))?;
    let xn = cfg.target_set().map_err(|e| AppError::Config(e.to_string()))?;
    neurodp::backward_reach_sequence(sys, &x, &u, &xn, cfg.horizon).map_err(classify_control)
}

/// `sets`: computes X_0..X_N, writes each as JSON plus a summary table.
pub fn cmd_sets(ctx: &Ctx) -> Result<(), AppError> {
    let sets = ctx.compute_sets()?;
    let mut summary = String::from("k,rows,chebyshev_radius\n");
    println!("{:>3} {:>6} {:>18}", "k", "rows", "chebyshev_radius");
    for k in 0..=sets.horizon() {
        let set = sets.stage_set(k);
        ctx.write_json(&format!("sets/X_{k}.json"), set)?;
        let (_, radius) = set
            .chebyshev_center()
            .map_err(|e| AppError::Config(e.to_string()))?;
        let _ = writeln!(summary, "{k},{},{radius}", set.num_rows());
        println!("{k:>3} {:>6} {radius:>18.6}", set.num_rows());
    }
    let path = ctx.write("sets_summary.csv", &summary)?;
    println!("wrote {} set files and {}", sets.horizon() + 1, path.display());
    Ok(())
}

/// `train-value`: sequential DP over the horizon, one scalar network per
/// stage `1..N-1`, plus metrics and timing tables.
pub fn cmd_train_value(ctx: &Ctx) -> Result<(), AppError> {
    let cfg = &ctx.cfg;
    let sys = cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
    let cost = cfg.cost().map_err(|e| AppError::Config(e.to_string()))?;
    let sets = backward_sets(cfg, &sys)?;
    let train_cfg = cfg.train_config(Some(ctx.seed));

    let (nets, metrics) = sequential_dp_train(
        &sets,
        &sys,
        &cost,
        &cfg.fw_config(),
        &train_cfg,
        &cfg.training.hidden_units,
        cfg.training.q_per_stage,
    )
    .map_err(|e| AppError::Config(e.to_string()))?;

    for (net, m) in nets.iter().zip(&metrics) {
        ctx.write_json(&format!("models/value_stage_{}.json", m.stage), net)?;
    }
    let mut table = String::from("stage,samples,train_mse,val_mse,epochs,target_met\n");
    let mut timing = String::from("stage,wall_seconds\n");
    println!("{:>5} {:>8} {:>14} {:>14} {:>7}", "stage", "samples", "train_mse", "val_mse", "epochs");
    for m in &metrics {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            m.stage, m.samples, m.train_mse, m.val_mse, m.epochs, m.target_met
        );
        let _ = writeln!(timing, "{},{}", m.stage, m.wall_seconds);
        println!(
            "{:>5} {:>8} {:>14.6e} {:>14.6e} {:>7}",
            m.stage, m.samples, m.train_mse, m.val_mse, m.epochs
        );
    }
    ctx.write("value_metrics.csv", &table)?;
    ctx.write("value_timing.csv", &timing)?;
    println!("wrote {} value models under {}", nets.len(), ctx.out.join("models").display());
    Ok(())
}

/// `train-policy`: converts stage-0 controller inputs to simplex coordinates
/// over the vertices of U and fits the softmax coefficient network.
pub fn cmd_train_policy(ctx: &Ctx) -> Result<(), AppError> {
    let cfg = &ctx.cfg;
    let sys = cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
    let cost = cfg.cost().map_err(|e| AppError::Config(e.to_string()))?;
    let sets = backward_sets(cfg, &sys)?;
    let value_net = ctx.load_mlp("models/value_stage_1.json")?;
    let u_set = cfg.u_set().map_err(|e| AppError::Config(e.to_string()))?;
    let vertices = u_set
        .enumerate_vertices()
        .map_err(|e| AppError::Config(format!("vertex enumeration of U: {e}")))?;

    let started = Instant::now();
    let data_seed = derive_seed(ctx.seed, 0x70_11C7);
    let mut rng = StdRng::seed_from_u64(data_seed);
    let dataset = generate_policy_dataset(
        &value_net,
        &sets,
        &sys,
        &cost,
        &cfg.fw_config(),
        &vertices,
        cfg.training.q_per_stage,
        &mut rng,
    )
    .map_err(|e| AppError::Config(e.to_string()))?;

    ctx.write("policy_dataset.csv", &dataset.to_csv())?;
    ctx.write_json(
        "policy_dataset.json",
        &serde_json::json!({
            "stage": 0,
            "seed": data_seed,
            "q": dataset.len(),
            "generator": {
                "fw_max_iters": cfg.fw.max_iters,
                "fw_step_rule": cfg.fw.step_rule,
                "fw_gap_tol": cfg.fw.gap_tol,
                "vertex_count": vertices.len(),
            },
        }),
    )?;

    let mut sizes = vec![sys.state_dim()];
    sizes.extend_from_slice(&cfg.training.hidden_units);
    sizes.push(vertices.len());
    let spec = MlpSpec::new(sizes, OutputUnit::Softmax);
    let train_cfg = neurodp::TrainConfig {
        seed: derive_seed(ctx.seed, 0x70_11C8),
        ..cfg.train_config(Some(ctx.seed))
    };
    let (net, report) =
        fit_regression(&spec, &dataset, &train_cfg).map_err(|e| AppError::Config(e.to_string()))?;

    ctx.write_json("models/policy.json", &net)?;
    ctx.write(
        "policy_metrics.csv",
        &format!(
            "samples,train_mse,val_mse,epochs,target_met\n{},{},{},{},{}\n",
            dataset.len(),
            report.train_mse,
            report.val_mse,
            report.epochs,
            report.target_met
        ),
    )?;
    ctx.write(
        "policy_timing.csv",
        &format!("wall_seconds\n{}\n", started.elapsed().as_secs_f64()),
    )?;
    println!(
        "policy head width {} | train mse {:.6e} | val mse {:.6e} | epochs {}",
        vertices.len(),
        report.train_mse,
        report.val_mse,
        report.epochs
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ControllerKind {
    Exact,
    Value,
    Policy,
}

impl ControllerKind {
    fn name(self) -> &'static str {
        match self {
            ControllerKind::Exact => "exact",
            ControllerKind::Value => "value",
            ControllerKind::Policy => "policy",
        }
    }
}

fn build_controller(ctx: &Ctx, kind: ControllerKind) -> Result<Controller, AppError> {
    match kind {
        ControllerKind::Exact => Ok(Controller::ExactMpc { gap_tol: ctx.cfg.fw.gap_tol }),
        ControllerKind::Value => Ok(Controller::ValueFw {
            value_net: ctx.load_mlp("models/value_stage_1.json")?,
            cfg: ctx.cfg.fw_config(),
        }),
        ControllerKind::Policy => {
            let u_set = ctx.cfg.u_set().map_err(|e| AppError::Config(e.to_string()))?;
            let vertices = u_set
                .enumerate_vertices()
                .map_err(|e| AppError::Config(e.to_string()))?;
            Ok(Controller::VertexPolicy { coeff_net: ctx.load_mlp("models/policy.json")?, vertices })
        }
    }
}

fn trajectory_csv(traj: &Trajectory, n_x: usize, n_u: usize) -> String {
    let mut out = String::from("k");
    for j in 0..n_x {
        let _ = write!(out, ",x{}", j + 1);
    }
    for j in 0..n_u {
        let _ = write!(out, ",u{}", j + 1);
    }
    out.push_str(",stage_cost\n");
    for k in 0..traj.len() {
        let _ = write!(out, "{k}");
        for v in traj.states[k].iter() {
            let _ = write!(out, ",{v}");
        }
        for v in traj.inputs[k].iter() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", traj.stage_costs[k]);
    }
    // Terminal row carries the state only.
    let _ = write!(out, "{}", traj.len());
    for v in traj.states[traj.len()].iter() {
        let _ = write!(out, ",{v}");
    }
    for _ in 0..n_u {
        out.push(',');
    }
    out.push_str(",\n");
    out
}

fn x0_tag(x0: &DVector<f64>) -> String {
    x0.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join("_")
}

fn run_simulation(
    ctx: &Ctx,
    sets: &HorizonSets,
    kind: ControllerKind,
    x0: &DVector<f64>,
) -> Result<(Trajectory, f64), AppError> {
    let sys = ctx.cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
    let cost = ctx.cfg.cost().map_err(|e| AppError::Config(e.to_string()))?;
    let controller = build_controller(ctx, kind)?;
    let started = Instant::now();
    let traj = simulate_closed_loop(&controller, &sys, &cost, sets, x0, ctx.cfg.simulation.t)
        .map_err(classify_control)?;
    let mean_step = started.elapsed().as_secs_f64() / traj.len() as f64;
    Ok((traj, mean_step))
}

/// `simulate`: one closed-loop run; writes the trajectory CSV and optionally
/// the two-panel SVG.
pub fn cmd_simulate(ctx: &Ctx, kind: ControllerKind, x0: &DVector<f64>) -> Result<(), AppError> {
    if x0.len() != ctx.cfg.state_dim() {
        return Err(AppError::Config(format!(
            "--x0 must have dimension {}",
            ctx.cfg.state_dim()
        )));
    }
    let sets = ctx.compute_sets()?;
    let (traj, mean_step) = run_simulation(ctx, &sets, kind, x0)?;

    let sys = ctx.cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
    let base = format!("trajectory_{}_{}", kind.name(), x0_tag(x0));
    let csv_path = ctx.write(
        &format!("{base}.csv"),
        &trajectory_csv(&traj, sys.state_dim(), sys.input_dim()),
    )?;
    println!(
        "controller={} x0=({}) total_cost={:.6} mean_step_time={:.3e}s",
        kind.name(),
        x0.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", "),
        traj.total_cost,
        mean_step
    );
    println!("wrote {}", csv_path.display());

    if ctx.svg {
        let x_set = ctx.cfg.x_set().map_err(|e| AppError::Config(e.to_string()))?;
        let u_set = ctx.cfg.u_set().map_err(|e| AppError::Config(e.to_string()))?;
        match svg::trajectory_svg(&x_set, sets.stage_set(0), &u_set, &traj.states, &traj.inputs) {
            Some(text) => {
                let p = ctx.write(&format!("{base}.svg"), &text)?;
                println!("wrote {}", p.display());
            }
            None => eprintln!("svg skipped: plotting requires 2-D state and input spaces"),
        }
    }

    if ctx.trace {
        match solver_trace(ctx, &sets, kind, x0)? {
            Some(rows) => {
                let mut text = String::from("iteration,objective,gap\n");
                for r in &rows {
                    let _ = writeln!(text, "{},{},{}", r.iteration, r.objective, r.gap);
                }
                let p = ctx.write(&format!("fw_trace_{}_{}.csv", kind.name(), x0_tag(x0)), &text)?;
                println!("wrote {}", p.display());
            }
            None => eprintln!("trace skipped: the policy controller runs no solver"),
        }
    }
    Ok(())
}

/// Re-runs the stage-0 solve at `x0` with tracing enabled.
fn solver_trace(
    ctx: &Ctx,
    sets: &HorizonSets,
    kind: ControllerKind,
    x0: &DVector<f64>,
) -> Result<Option<Vec<FwTraceRow>>, AppError> {
    let sys = ctx.cfg.system().map_err(|e| AppError::Config(e.to_string()))?;
    let cost = ctx.cfg.cost().map_err(|e| AppError::Config(e.to_string()))?;
    match kind {
        ControllerKind::Exact => {
            let sol = solve_mpc_qp_traced(&sys, &cost, sets, x0, ctx.cfg.fw.gap_tol, true)
                .map_err(|e| classify_control(e.into()))?;
            Ok(Some(sol.trace))
        }
        ControllerKind::Value => {
            let net = ctx.load_mlp("models/value_stage_1.json")?;
            let mut fw = ctx.cfg.fw_config();
            fw.record_trace = true;
            let res = value_controller_solve(
                x0,
                CostToGo::Network(&net),
                &cost,
                &sys,
                sets.stage_set(1),
                sets.u_set(),
                &fw,
                None,
            )
            .map_err(classify_control)?;
            Ok(Some(res.trace))
        }
        ControllerKind::Policy => Ok(None),
    }
}

/// Worst constraint violation over a trajectory: inputs against `U` for every
/// controller; states against `X_0` for the controllers that guarantee it
/// (exact MPC and the value controller). The vertex policy carries no state
/// guarantee.
fn max_violation(sets: &HorizonSets, kind: ControllerKind, traj: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for u in &traj.inputs {
        worst = worst.max(sets.u_set().violation(u));
    }
    if matches!(kind, ControllerKind::Exact | ControllerKind::Value) {
        for x in &traj.states {
            worst = worst.max(sets.stage_set(0).violation(x));
        }
    }
    worst.max(0.0)
}

/// `compare`: all three controllers on every configured initial state.
/// Exit code 3 when an approximate controller exceeds the configured relative
/// suboptimality threshold or any violation exceeds `1e-8`.
pub fn cmd_compare(ctx: &Ctx) -> Result<(), AppError> {
    let sets = ctx.compute_sets()?;
    let kinds = [ControllerKind::Exact, ControllerKind::Value, ControllerKind::Policy];

    let mut report = String::from("x0,controller,total_cost,rel_suboptimality,max_violation\n");
    let mut timing = String::from("x0,controller,mean_step_seconds\n");
    let mut failures: Vec<String> = Vec::new();

    println!(
        "{:<16} {:<8} {:>14} {:>12} {:>14} {:>14}",
        "x0", "ctrl", "total_cost", "rel_subopt", "max_violation", "mean_step_s"
    );
    for x0 in ctx.cfg.initial_states() {
        let tag = x0.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
        let mut costs = [0.0f64; 3];
        let mut steps = [0.0f64; 3];
        let mut trajs: Vec<Trajectory> = Vec::with_capacity(3);
        for (i, kind) in kinds.iter().enumerate() {
            let (traj, mean_step) = run_simulation(ctx, &sets, *kind, &x0)?;
            costs[i] = traj.total_cost;
            steps[i] = mean_step;
            trajs.push(traj);
        }
        let exact_cost = costs[0];
        for (i, kind) in kinds.iter().enumerate() {
            let rel = if i == 0 { 0.0 } else { (costs[i] - exact_cost) / exact_cost.max(1e-12) };
            let viol = max_violation(&sets, *kind, &trajs[i]);
            let _ = writeln!(report, "{tag},{},{},{},{}", kind.name(), costs[i], rel, viol);
            let _ = writeln!(timing, "{tag},{},{}", kind.name(), steps[i]);
            println!(
                "{:<16} {:<8} {:>14.6} {:>12.6} {:>14.3e} {:>14.3e}",
                tag,
                kind.name(),
                costs[i],
                rel,
                viol,
                steps[i]
            );
            if i > 0 && rel > ctx.cfg.simulation.suboptimality_threshold {
                failures.push(format!(
                    "{} at ({tag}): relative suboptimality {rel:.4} exceeds {}",
                    kind.name(),
                    ctx.cfg.simulation.suboptimality_threshold
                ));
            }
            if viol > 1e-8 {
                failures.push(format!(
                    "{} at ({tag}): constraint violation {viol:.3e} exceeds 1e-8",
                    kind.name()
                ));
            }
        }
        let ratio = steps[1] / steps[2].max(1e-12);
        println!("    policy speedup over value controller at ({tag}): {ratio:.1}x (informational)");
    }

    ctx.write("compare_report.csv", &report)?;
    ctx.write("compare_timing.csv", &timing)?;
    println!("wrote {}", ctx.out.join("compare_report.csv").display());

    if failures.is_empty() {
        Ok(())
    } else {
        Err(AppError::Threshold(failures.join("; ")))
    }
}
