use crate::config::{state_from_bloch, ScenarioConfig};
use crate::report::{self, measure, measure_summary, measure_value, to_value, Table};
use robustness_core::bloch::{psd_via_s, s_poly, s_values, shifted_hermitian, Mode};
use robustness_core::channels::{
    channel_default_range, channel_robustness_per_subset, estimate_channel_robustness_via_witness,
    instrument_robustness, state_game_bound_check,
};
use robustness_core::free_sets::{Axis, FreeSetUnion};
use robustness_core::io::{read_operator, Operator};
use robustness_core::measures::{
    min_over, qubit_axis_robustness, robustness_convex_with, weight_convex_with, MeasureResult,
    Strategy,
};
use robustness_core::operator::eigvals_hermitian;
use robustness_core::tasks::{
    discrimination_advantage, exclusion_advantage, worst_case_discrimination, worst_case_exclusion,
    AdvantageOptions, DEFAULT_S_FRACTION,
};
use robustness_core::witness::{
    default_range, estimate_via_witness, shift_family, verify_family, SweepOptions, WitnessBuilder,
    WitnessFamily,
};
use robustness_core::{DensityOperator, Error, Result};
use serde_json::{json, Value};
use std::path::Path;

/// A report plus an optional dedicated CSV table.
pub struct Output {
    pub report: Value,
    pub table: Option<Table>,
}

impl From<Value> for Output {
    fn from(report: Value) -> Self {
        Self {
            report,
            table: None,
        }
    }
}

pub fn psd_check(path: &Path, tol: f64) -> Result<Output> {
    let op = read_operator(path)?;
    let h = op.hermitian();
    let eig = eigvals_hermitian(h);
    let eig_psd = eig.first().is_none_or(|&l| l >= -tol);
    Ok(json!({
        "kind": to_value(&op.kind()),
        "dim": h.dim(),
        "psd": psd_via_s(h, tol),
        "eigen_psd": eig_psd,
        "s_values": s_values(h),
        "eigenvalues": eig,
        "tol": tol,
    })
    .into())
}

fn per_subset_with(
    rho: &DensityOperator,
    union: &FreeSetUnion,
    mode: Mode,
    tol: f64,
    strategy: Strategy,
) -> Result<Vec<(String, MeasureResult)>> {
    union
        .iter()
        .map(|(label, set)| {
            let r = match mode {
                Mode::Robustness => robustness_convex_with(rho, set, tol, strategy)?,
                Mode::Weight => weight_convex_with(rho, set, tol, strategy)?,
            };
            Ok((label.to_string(), r))
        })
        .collect()
}

pub fn measure_command(cfg: &ScenarioConfig, mode: Mode, strategy: Strategy) -> Result<Output> {
    let rho = cfg.state()?;
    let union = cfg.union()?;
    let subsets = per_subset_with(&rho, &union, mode, cfg.tol, strategy)?;
    let listing: Vec<Value> = subsets.iter().map(|(l, r)| measure_summary(l, r)).collect();
    let best = min_over(subsets);
    Ok(json!({
        "mode": to_value(&mode),
        "free_sets": describe_union(&union),
        "union": measure(&best),
        "subsets": listing,
    })
    .into())
}

fn family(cfg: &ScenarioConfig, rho: &DensityOperator, s: f64, seed: u64) -> Result<WitnessFamily> {
    let ms = cfg.ms.clone().unwrap_or_else(|| default_range(rho.dim()));
    WitnessFamily::build(rho, s, cfg.mode(), &ms, cfg.builder, seed)
}

pub fn witness_build(
    cfg: &ScenarioConfig,
    seed: u64,
    shift: bool,
    operators: bool,
) -> Result<Output> {
    let rho = cfg.state()?;
    let mut fam = family(cfg, &rho, cfg.s()?, seed)?;
    if shift {
        fam = shift_family(&fam, &cfg.union()?, cfg.sample_budget, seed)?;
    }
    let base = fam.evaluate(rho.as_hermitian())?;
    let members: Vec<Value> = fam
        .members
        .iter()
        .zip(&base)
        .map(|(w, v)| {
            let mut entry = json!({
                "m": w.m,
                "dim": w.operator.dim(),
                "norm": w.operator.op_norm(),
                "value_at_state": v,
            });
            if operators {
                entry["operator"] = report::hermitian(&w.operator);
            }
            entry
        })
        .collect();
    Ok(json!({
        "kind": to_value(&fam.kind),
        "s": fam.s,
        "builder": to_value(&cfg.builder),
        "shift": fam.shift.as_ref().map(|c| json!({"deltas": c.deltas, "scale": c.scale})),
        "members": members,
    })
    .into())
}

pub fn witness_verify(cfg: &ScenarioConfig, seed: u64, shift: bool) -> Result<Output> {
    let rho = cfg.state()?;
    let union = cfg.union()?;
    let mut fam = family(cfg, &rho, cfg.s()?, seed)?;
    if shift {
        fam = shift_family(&fam, &union, cfg.sample_budget, seed)?;
    }
    let rep = verify_family(&fam, &rho, &union, cfg.sample_budget, seed, cfg.sign_tol)?;
    Ok(to_value(&rep).into())
}

pub fn witness_sweep(cfg: &ScenarioConfig, seed: u64, sweep_tol: f64) -> Result<Output> {
    let rho = cfg.state()?;
    let union = cfg.union()?;
    let mode = cfg.mode();
    let opts = SweepOptions {
        builder: cfg.builder,
        sample_budget: cfg.sample_budget,
        seed,
        sign_tol: cfg.sign_tol,
    };
    let sweep = estimate_via_witness(&rho, &union, mode, sweep_tol, opts)?;
    let engine = min_over(per_subset_with(
        &rho,
        &union,
        mode,
        cfg.tol,
        Strategy::Auto,
    )?);
    Ok(json!({
        "mode": to_value(&mode),
        "estimate": sweep.estimate,
        "lower": sweep.lower,
        "upper": sweep.upper,
        "sweep_tol": sweep_tol,
        "engine_value": measure_value(engine.value),
        "steps": to_value(&sweep.steps),
    })
    .into())
}

fn advantage_options(cfg: &ScenarioConfig, seed: u64) -> AdvantageOptions {
    AdvantageOptions {
        tol: cfg.tol,
        sample_budget: cfg.sample_budget,
        seed,
        s_fraction: cfg.s_fraction.unwrap_or(DEFAULT_S_FRACTION),
        ms: cfg.ms.clone(),
    }
}

pub fn discriminate(cfg: &ScenarioConfig, seed: u64) -> Result<Output> {
    let rep =
        discrimination_advantage(&cfg.state()?, &cfg.union()?, &advantage_options(cfg, seed))?;
    Ok(to_value(&rep).into())
}

pub fn exclude(cfg: &ScenarioConfig, seed: u64) -> Result<Output> {
    let rep = exclusion_advantage(&cfg.state()?, &cfg.union()?, &advantage_options(cfg, seed))?;
    Ok(to_value(&rep).into())
}

pub fn worst_case(
    cfg: &ScenarioConfig,
    seed: u64,
    mode: Mode,
    trials: Option<usize>,
) -> Result<Output> {
    let rho = cfg.state()?;
    let union = cfg.union()?;
    let trials = trials.unwrap_or(cfg.trials);
    let rep = match mode {
        Mode::Robustness => worst_case_discrimination(&rho, &union, trials, seed, cfg.tol)?,
        Mode::Weight => worst_case_exclusion(&rho, &union, trials, seed, cfg.tol)?,
    };
    Ok(to_value(&rep).into())
}

pub fn channel_robustness_command(
    cfg: &ScenarioConfig,
    seed: u64,
    sweep_tol: Option<f64>,
    game_trials: usize,
) -> Result<Output> {
    let lambda = cfg.channel()?;
    let union = cfg.channel_union()?;
    let subsets = channel_robustness_per_subset(&lambda, &union, cfg.tol)?;
    let listing: Vec<Value> = subsets
        .iter()
        .map(|(label, r)| {
            json!({
                "label": label,
                "value": measure_value(r.value),
                "method": to_value(&r.method),
                "weights": r.weights,
                "certificate_tp_residual": r.tau.as_ref().map(|t| t.tp_residual()),
            })
        })
        .collect();
    let best = min_over(subsets);
    let mut out = json!({
        "d1": lambda.d1(),
        "d2": lambda.d2(),
        "value": measure_value(best.value),
        "achieving_subset": best.achieving_subset,
        "tolerance": best.tolerance,
        "sigma": best.sigma.clone().map(|j| report::operator(Operator::Choi(j))),
        "subsets": listing,
    });
    if let Some(tol) = sweep_tol {
        let ms = cfg.ms.clone().unwrap_or_else(|| {
            channel_default_range(
                lambda.d1(),
                lambda.d2(),
                robustness_core::operator::DEFAULT_TENSOR_CAP,
            )
        });
        let sweep = estimate_channel_robustness_via_witness(
            &lambda,
            &union,
            &ms,
            tol,
            cfg.sample_budget,
            seed,
            cfg.sign_tol,
        )?;
        out["witness_sweep"] = json!({
            "ms": ms,
            "estimate": sweep.estimate,
            "lower": sweep.lower,
            "upper": sweep.upper,
            "sweep_tol": tol,
        });
    }
    if game_trials > 0 {
        out["game_bound"] = to_value(&state_game_bound_check(
            &lambda,
            &union,
            game_trials,
            seed,
            cfg.tol,
        )?);
    }
    Ok(out.into())
}

pub fn instrument_robustness_command(cfg: &ScenarioConfig) -> Result<Output> {
    let rep = instrument_robustness(&cfg.instrument()?, &cfg.instrument_union()?, cfg.tol)?;
    Ok(to_value(&rep).into())
}

pub struct DemoOptions {
    pub bloch: Vec<f64>,
    pub s: f64,
    pub grid: usize,
    pub plane: Plane,
    pub tol: f64,
    pub sample_budget: usize,
    pub sweep_tol: f64,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

/// Per-axis robustness by closed form and by the engine, the union value,
/// witness decisions around it, the witness sweep and an `S_2` grid scan.
pub fn demo_qubit_axes(opts: &DemoOptions, seed: u64) -> Result<Output> {
    let r: [f64; 3] = opts.bloch.as_slice().try_into().map_err(|_| {
        Error::Validation(format!(
            "--bloch needs 3 coordinates, got {}",
            opts.bloch.len()
        ))
    })?;
    let rho = state_from_bloch(&r)?;
    let union = FreeSetUnion::qubit_axes();
    let mut axes = Vec::new();
    for ((label, set), axis) in union.iter().zip([Axis::X, Axis::Y, Axis::Z]) {
        let engine = robustness_convex_with(&rho, set, opts.tol, Strategy::Bisection)?;
        axes.push(json!({
            "axis": label,
            "closed_form": qubit_axis_robustness(r, axis),
            "bisection": measure_value(engine.value),
        }));
    }
    let union_result = min_over(per_subset_with(
        &rho,
        &union,
        Mode::Robustness,
        opts.tol,
        Strategy::Bisection,
    )?);
    let closed_union = [Axis::X, Axis::Y, Axis::Z]
        .iter()
        .map(|&a| qubit_axis_robustness(r, a))
        .fold(f64::INFINITY, f64::min);

    let mut decisions = Vec::new();
    for s in [0.30, 0.45, 0.49, 0.51, 0.60, 0.90] {
        let fam =
            WitnessFamily::build(&rho, s, Mode::Robustness, &[2], WitnessBuilder::Exact, seed)?;
        let rep = verify_family(&fam, &rho, &union, opts.sample_budget, seed, 1e-9)?;
        decisions.push(json!({"s": s, "witness": rep.witness}));
    }
    let sweep = estimate_via_witness(
        &rho,
        &union,
        Mode::Robustness,
        opts.sweep_tol,
        SweepOptions {
            builder: WitnessBuilder::Exact,
            sample_budget: opts.sample_budget,
            seed,
            sign_tol: 1e-9,
        },
    )?;

    let (table, accepted, total) = s2_scan(&rho, opts)?;
    let report = json!({
        "bloch": r,
        "axes": axes,
        "union": {
            "closed_form": closed_union,
            "bisection": measure_value(union_result.value),
            "achieving_subset": union_result.achieving_subset,
        },
        "witness_decisions": decisions,
        "witness_sweep": {"estimate": sweep.estimate, "lower": sweep.lower, "upper": sweep.upper, "sweep_tol": opts.sweep_tol},
        "s2_scan": {"s": opts.s, "plane": format!("{:?}", opts.plane).to_lowercase(), "grid": opts.grid, "points": total, "nonnegative": accepted},
    });
    Ok(Output {
        report,
        table: Some(table),
    })
}

/// `S_2(((1+s)η − ρ)/s)` for Bloch-ball probes `η` on a square grid in one
/// coordinate plane.
fn s2_scan(rho: &DensityOperator, opts: &DemoOptions) -> Result<(Table, usize, usize)> {
    let mut rows = Vec::new();
    let mut accepted = 0;
    let n = opts.grid.max(2);
    for i in 0..n {
        for j in 0..n {
            let a = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let b = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            if a * a + b * b > 1.0 + 1e-12 {
                continue;
            }
            let x = match opts.plane {
                Plane::Xy => [a, b, 0.0],
                Plane::Xz => [a, 0.0, b],
                Plane::Yz => [0.0, a, b],
            };
            let eta = robustness_core::bloch::qubit_state(x)?;
            let h = shifted_hermitian(
                rho.as_hermitian(),
                eta.as_hermitian(),
                opts.s,
                Mode::Robustness,
            )?;
            let v = s_poly(&h, 2)?;
            let sign = if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            };
            if v >= 0.0 {
                accepted += 1;
            }
            rows.push(vec![
                x[0].to_string(),
                x[1].to_string(),
                x[2].to_string(),
                v.to_string(),
                sign.to_string(),
            ]);
        }
    }
    let total = rows.len();
    let header = ["x1", "x2", "x3", "s2", "sign"].map(String::from).to_vec();
    Ok((Table { header, rows }, accepted, total))
}

fn describe_union(union: &FreeSetUnion) -> Value {
    Value::Array(
        union
            .iter()
            .map(|(label, set)| json!({"label": label, "kind": set.kind(), "generators": set.generators().len()}))
            .collect(),
    )
}
