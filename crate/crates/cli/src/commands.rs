use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use snf_core::estimate::{bootstrap_ci, fit_logistic, predict_rates, Dataset, ModelSpec};
use snf_core::fixtures::default_rates;
use snf_core::io::{read_instance, solve_result_json};
use snf_core::policies::{myopic_policy, rpr_policy, two_step_policy};
use snf_core::scenario::{run_sweep, ScenarioKind, ScenarioSpec, SweepConfig};
use snf_core::simulate::simulate_policy_from;
use snf_core::solve::{evaluate_policy_average, gap_vs_heuristic, gap_vs_optimal, solve_average, value_iteration_discounted};
use snf_core::{Instance, Policy, RateTable};
use snf_service::{AppState, Snapshot};

use crate::args::{CompareArgs, CriterionArg, EstimateArgs, PolicyArg, ServeArgs, SimulateArgs, SolveArgs, SweepArgs};
use crate::Failure;

fn load(path: &Path) -> Result<Instance, Failure> {
    read_instance(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json(out: &Option<PathBuf>, value: &Value) -> Result<(), Failure> {
    let mut w = open_out(out)?;
    let text = serde_json::to_string_pretty(value).expect("serializable");
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| Failure::Input(e.to_string()))
}

pub fn solve(args: SolveArgs) -> Result<(), Failure> {
    let alpha = match (args.criterion, args.alpha) {
        (CriterionArg::Avg, Some(_)) => {
            return Err(Failure::Usage("--alpha is only valid with --criterion disc".into()))
        }
        (CriterionArg::Disc, None) => return Err(Failure::Usage("--criterion disc requires --alpha".into())),
        (_, a) => a,
    };
    let inst = load(&args.instance)?;
    let result = match alpha {
        Some(a) => value_iteration_discounted(&inst, a, args.tol)?,
        None => solve_average(&inst, args.tol)?,
    };
    write_json(&args.out, &solve_result_json(&inst, &result))
}

struct Row {
    policy: String,
    g: f64,
    vs_optimal: f64,
    vs_heuristic: f64,
}

pub fn compare(args: CompareArgs) -> Result<(), Failure> {
    let inst = load(&args.instance)?;
    let opt = solve_average(&inst, args.tol)?;
    let g_opt = opt.gain().expect("average criterion");
    let policies: Vec<(String, Policy)> = vec![
        ("optimal".into(), opt.policy.clone()),
        ("myopic".into(), myopic_policy(&inst)),
        ("rpr".into(), rpr_policy(&inst)),
        (format!("two_step(w={})", args.w), two_step_policy(&inst, args.w)?),
    ];
    let mut rows = Vec::new();
    for (name, p) in policies {
        let (g, _) = evaluate_policy_average(&inst, &p)?;
        rows.push(Row {
            policy: name,
            g,
            vs_optimal: gap_vs_optimal(g, g_opt),
            vs_heuristic: gap_vs_heuristic(g, g_opt),
        });
    }
    if args.json {
        let rows: Vec<Value> = rows
            .iter()
            .map(|r| {
                json!({
                    "policy": r.policy,
                    "g": r.g,
                    "gap_vs_optimal_pct": r.vs_optimal,
                    "gap_vs_heuristic_pct": r.vs_heuristic,
                })
            })
            .collect();
        return write_json(&args.out, &json!({ "g_opt": g_opt, "policies": rows }));
    }
    let mut w = open_out(&args.out)?;
    let mut text = format!(
        "{:<18} {:>14} {:>20} {:>22}\n",
        "policy", "average cost", "gap vs optimal (%)", "gap vs heuristic (%)"
    );
    for r in &rows {
        text.push_str(&format!(
            "{:<18} {:>14.6} {:>20.2} {:>22.2}\n",
            r.policy, r.g, r.vs_optimal, r.vs_heuristic
        ));
    }
    text.push_str("gap vs optimal = (g - g_opt) / g_opt * 100; gap vs heuristic = (g - g_opt) / g * 100\n");
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Input(e.to_string()))
}

pub fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let costs = match &args.costs {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            let table: RateTable =
                serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            table.point
        }
        None => default_rates().point,
    };
    let lambdas = args.lambda.clone().unwrap_or_else(|| vec![0.2; costs.len()]);
    let scenario = ScenarioKind::try_from(args.scenario).map_err(Failure::Usage)?;
    let config = SweepConfig {
        spec: ScenarioSpec {
            scenario,
            beta: args.beta,
            gamma: args.gamma,
            delta: args.delta,
            seed: args.seed,
            num_facilities: costs.first().map_or(0, Vec::len),
        },
        num_instances: args.n,
        costs,
        lambdas,
        loss_penalty: args.loss_penalty,
        tol: args.tol,
        jobs: args.jobs,
    };
    let result = run_sweep::<f64>(&config)?;
    result.write_csv(open_out(&args.out)?)?;
    let s = result.summary();
    eprintln!(
        "{} instances, {} failed; r+pr no worse than myopic in {:.1}%; mean gap myopic {:.2}%, r+pr {:.2}%; max gap myopic {:.2}%, r+pr {:.2}%",
        s.instances,
        s.failures,
        100.0 * s.rpr_not_worse_fraction,
        s.mean_gap_myopic_pct,
        s.mean_gap_rpr_pct,
        s.max_gap_myopic_pct,
        s.max_gap_rpr_pct
    );
    if result.failures.is_empty() {
        Ok(())
    } else {
        for f in &result.failures {
            eprintln!("instance {} (seed {}): {}", f.instance_id, f.seed, f.message);
        }
        Err(Failure::Compute(format!("{} instance(s) failed", result.failures.len())))
    }
}

fn build_policy(inst: &Instance, policy: PolicyArg, w: f64) -> Result<Policy, Failure> {
    Ok(match policy {
        PolicyArg::Optimal => solve_average(inst, 1e-9)?.policy,
        PolicyArg::Myopic => myopic_policy(inst),
        PolicyArg::Rpr => rpr_policy(inst),
        PolicyArg::TwoStep => two_step_policy(inst, w)?,
    })
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let inst = load(&args.instance)?;
    let policy = build_policy(&inst, args.policy, args.w)?;
    let est = simulate_policy_from(&inst, &policy, args.horizon, args.burn_in, args.seed, args.start_state)?;
    let mut value = serde_json::to_value(&est).expect("serializable");
    value["policy"] = policy.provenance.to_string().into();
    write_json(&args.out, &value)
}

pub fn estimate(args: EstimateArgs) -> Result<(), Failure> {
    let file = File::open(&args.data).map_err(|e| Failure::Input(format!("{}: {e}", args.data.display())))?;
    let data = Dataset::from_csv(file).map_err(|e| Failure::Input(format!("{}: {e}", args.data.display())))?;
    let mut spec = ModelSpec::from_data(&data);
    if let Some(f) = args.facilities {
        spec.facilities = f;
    }
    if let Some(t) = args.types {
        spec.types = t;
    }
    if let Some(c) = args.covariates {
        spec.covariates = c;
    }
    let mut profile: BTreeMap<String, f64> = data.default_profile(&spec.covariates)?;
    for entry in &args.profile {
        let (name, value) = entry
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--profile {entry:?}: expected name=value")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Failure::Usage(format!("--profile {entry:?}: {value:?} is not a number")))?;
        if !spec.covariates.iter().any(|c| c == name) {
            return Err(Failure::Usage(format!("--profile: {name:?} is not a model covariate")));
        }
        profile.insert(name.to_string(), v);
    }
    let fit = fit_logistic(&data, &spec)?;
    eprintln!(
        "{} records, {} coefficients, log-likelihood {:.4}, {} Newton iterations",
        data.records.len(),
        fit.coefficients.len(),
        fit.log_likelihood,
        fit.iterations
    );
    let table = if args.bootstrap > 0 {
        bootstrap_ci(&data, &spec, &profile, args.bootstrap, args.seed)?
    } else {
        predict_rates(&fit, &profile)?
    };
    write_json(&args.out, &serde_json::to_value(&table).expect("serializable"))
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let inst = load(&args.instance)?;
    let mut snapshot = Snapshot::load(inst, args.w)?;
    if args.solve {
        snapshot = snapshot.solve(&Default::default())?;
    }
    let mut state = AppState::new(snapshot);
    if let Some(p) = &args.decision_log {
        state = state
            .with_decision_log(p)
            .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Compute(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::Input(format!("bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| Failure::Compute(e.to_string()))?;
        println!("listening on http://{addr}");
        io::stdout().flush().ok();
        snf_service::serve(listener, state)
            .await
            .map_err(|e| Failure::Compute(e.to_string()))
    })
}
