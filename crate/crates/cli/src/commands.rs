use rislab_core::fcs::{self, BRANCH_BUDGET};
use rislab_core::linres::{self, FD_STEP};
use rislab_core::model::{self, RisModel};
use rislab_core::qlinalg::{identity, Operator, C64};
use rislab_core::semigroup::CompositeKind;
use rislab_core::thermo;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{jf, jmat, joperator, jvec, Cell, Output, Table};
use crate::tolerances::Tolerances;

pub const DEFAULT_CGF_GRID: [f64; 7] = [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_RATE_GRID: [f64; 9] = [-0.08, -0.06, -0.04, -0.02, 0.0, 0.02, 0.04, 0.06, 0.08];
/// Cartesian α grids are capped at this many points.
pub const MAX_GRID_POINTS: usize = 100_000;

pub struct Ctx {
    pub cfg: RunConfig,
    pub model: RisModel,
    pub kind: CompositeKind,
    pub seed: u64,
    pub workers: usize,
    pub alpha: Option<Vec<f64>>,
    pub steps: usize,
    pub trajectories: usize,
    pub tol: Tolerances,
}

fn one_based(j: usize) -> Cell {
    Cell::Int(j as i64 + 1)
}

fn indexed(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("{prefix}_{j}")).collect()
}

/// Maximally mixed state, the initial state of sampled and exact trajectories.
pub fn initial_state(model: &RisModel) -> Operator {
    let d = model.d_sys();
    identity(d) * C64::new(1.0 / d as f64, 0.0)
}

pub fn steady(ctx: &Ctx) -> Result<Output, CliError> {
    let fl = thermo::steady_fluxes(&ctx.model, ctx.kind)?;
    let betas = ctx.model.betas();
    let entropy: Vec<f64> = fl.steady_values.iter().zip(&betas).map(|(v, b)| -b * v).collect();
    let mut table = Table::new(&["j", "flux", "entropy_flux"]);
    for j in 0..ctx.model.m() {
        table.push(vec![one_based(j), fl.steady_values[j].into(), entropy[j].into()]);
    }
    let json = json!({
        "kind": ctx.kind.name(),
        "steady_state": joperator(&fl.steady_state),
        "fluxes": jvec(&fl.steady_values),
        "entropy_fluxes": jvec(&entropy),
        "sigma_plus": jf(fl.sigma_plus),
        "conservation_residual": jf(fl.conservation_residual),
    });
    Ok(Output { table, json })
}

pub fn assumptions(ctx: &Ctx) -> Result<Output, CliError> {
    let rep = model::assumption_report(&ctx.model, ctx.tol.tri, ctx.tol.ne)?;
    let mut table = Table::new(&["assumption", "holds", "value"]);
    let rows: Vec<(String, bool, f64)> = vec![
        ("kms".into(), rep.kms, 0.0),
        ("er_cy".into(), rep.er_cy.holds, rep.er_cy.value),
        ("er_ra".into(), rep.er_ra.holds, rep.er_ra.value),
        ("tri".into(), rep.tri.holds, rep.tri.value),
        ("ne".into(), rep.ne.holds, rep.ne.value),
    ];
    let mut rows = rows;
    for (j, r) in rep.ne_per_probe.iter().enumerate() {
        rows.push((format!("ne_probe_{}", j + 1), *r <= ctx.tol.ne, *r));
    }
    for (name, holds, value) in &rows {
        table.push(vec![Cell::Str(name.clone()), (*holds).into(), (*value).into()]);
    }
    let json = json!({
        "kms": rep.kms,
        "er_cy": {"holds": rep.er_cy.holds, "gap": jf(rep.er_cy.value)},
        "er_ra": {"holds": rep.er_ra.holds, "gap": jf(rep.er_ra.value)},
        "tri": {"holds": rep.tri.holds, "residual": jf(rep.tri.value)},
        "ne": {"holds": rep.ne.holds, "residual": jf(rep.ne.value)},
        "ne_per_probe": jvec(&rep.ne_per_probe),
        "extension_weights": rep.extension_weights,
        "all_hold": rep.all_hold(),
    });
    Ok(Output { table, json })
}

pub fn kinetic(ctx: &Ctx) -> Result<Output, CliError> {
    let fd = linres::kinetic_fd(&ctx.model, ctx.kind, FD_STEP)?;
    let gk = linres::kinetic_gk(&ctx.model, ctx.kind)?;
    let ons = linres::onsager_report(&ctx.model)?;
    let m = ctx.model.m();
    let mut table = Table::new(&["j", "k", "L_fd", "L_gk", "abs_diff"]);
    for j in 0..m {
        for k in 0..m {
            let (a, b) = (fd.values[j][k], gk.values[j][k]);
            table.push(vec![one_based(j), one_based(k), a.into(), b.into(), (a - b).abs().into()]);
        }
    }
    let json = json!({
        "kind": ctx.kind.name(),
        "fd_step": FD_STEP,
        "L_fd": jmat(&fd.values),
        "L_gk": jmat(&gk.values),
        "onsager": {
            "ra_residual": jf(ons.ra_residual),
            "cy_rcy_residual": jf(ons.cy_rcy_residual),
            "naive_cy_residual": jf(ons.naive_cy_residual),
            "tri_residual": jf(ons.tri_residual),
            "tri_holds": ons.tri_holds,
        },
    });
    Ok(Output { table, json })
}

/// Cartesian product grid^M.
pub fn cartesian(points: &[f64], m: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let total = (points.len() as f64).powi(m as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(CliError::Usage(format!("alpha grid would have {total} points (limit {MAX_GRID_POINTS})")));
    }
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                points.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    Ok(out)
}

pub fn cgf(ctx: &Ctx) -> Result<Output, CliError> {
    let m = ctx.model.m();
    let pts = ctx.alpha.clone().unwrap_or_else(|| DEFAULT_CGF_GRID.to_vec());
    let grid = cartesian(&pts, m)?;
    let mut cols = indexed("alpha", m);
    cols.extend(["value".to_string(), "radius".to_string()]);
    let mut table = Table::new(&cols);
    let mut points = Vec::with_capacity(grid.len());
    for a in &grid {
        let p = fcs::cgf(&ctx.model, ctx.kind, a)?;
        let mut row: Vec<Cell> = a.iter().map(|&x| x.into()).collect();
        row.extend([p.value.into(), p.radius.into()]);
        table.push(row);
        points.push(json!({"alpha": jvec(a), "value": jf(p.value), "radius": jf(p.radius)}));
    }
    let json = json!({"kind": ctx.kind.name(), "timescale": ctx.kind.timescale(&ctx.model), "points": points});
    Ok(Output { table, json })
}

pub fn moments(ctx: &Ctx) -> Result<Output, CliError> {
    let an = fcs::moments_analytic(&ctx.model, ctx.kind)?;
    let fd = fcs::moments_fd(&ctx.model, ctx.kind, FD_STEP)?;
    let cov = fcs::covariance(&ctx.model, ctx.kind)?;
    let m = ctx.model.m();
    let mut table = Table::new(&["j", "k", "first", "first_fd", "second", "second_fd", "covariance"]);
    for j in 0..m {
        for k in 0..m {
            table.push(vec![
                one_based(j),
                one_based(k),
                an.first[j].into(),
                fd.first[j].into(),
                an.second[j][k].into(),
                fd.second[j][k].into(),
                cov[j][k].into(),
            ]);
        }
    }
    let json = json!({
        "kind": ctx.kind.name(),
        "first": jvec(&an.first),
        "second": jmat(&an.second),
        "first_fd": jvec(&fd.first),
        "second_fd": jmat(&fd.second),
        "fd_step": FD_STEP,
        "covariance": jmat(&cov),
    });
    Ok(Output { table, json })
}

/// Direction (β_1, −β_2, 0, …) spanning part of the hyperplane Σ ς_j/β_j = 0.
pub fn hyperplane_direction(model: &RisModel) -> Vec<f64> {
    let b = model.betas();
    let mut w = vec![0.0; b.len()];
    if b.len() >= 2 {
        w[0] = b[0];
        w[1] = -b[1];
    }
    w
}

pub fn rate(ctx: &Ctx) -> Result<Output, CliError> {
    let m = ctx.model.m();
    let ts = ctx.alpha.clone().unwrap_or_else(|| DEFAULT_RATE_GRID.to_vec());
    let w = hyperplane_direction(&ctx.model);
    let mut cols = vec!["t".to_string()];
    cols.extend(indexed("sigma", m));
    cols.extend(["rate".to_string(), "on_hyperplane".to_string()]);
    cols.extend(indexed("argmax_alpha", m));
    let mut table = Table::new(&cols);
    let mut points = Vec::new();
    for &t in &ts {
        let sigma: Vec<f64> = w.iter().map(|x| t * x).collect();
        let r = fcs::rate_function(&ctx.model, ctx.kind, &sigma)?;
        let argmax = r.argmax_alpha.clone().unwrap_or_else(|| vec![f64::NAN; m]);
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(sigma.iter().map(|&x| Cell::from(x)));
        row.extend([r.value.into(), r.on_hyperplane.into()]);
        row.extend(argmax.iter().map(|&x| Cell::from(x)));
        table.push(row);
        points.push(json!({
            "t": t,
            "sigma": jvec(&sigma),
            "value": jf(r.value),
            "on_hyperplane": r.on_hyperplane,
            "argmax_alpha": jvec(&argmax),
            "iterations": r.iterations,
            "diverged": r.diverged,
        }));
    }
    let json = json!({"kind": ctx.kind.name(), "direction": jvec(&w), "points": points});
    Ok(Output { table, json })
}

pub fn sample_table(model: &RisModel, records: &[fcs::TrajectoryRecord]) -> Table {
    let m = model.m();
    let mut cols: Vec<String> = ["trajectory", "n", "j", "s", "s_prime"].iter().map(|s| s.to_string()).collect();
    cols.extend(indexed("S", m));
    let mut table = Table::new(&cols);
    for r in records {
        let mut acc = vec![0.0; m];
        for st in &r.steps {
            acc[st.probe] += st.s_prime - st.s;
            let mut row: Vec<Cell> = vec![
                Cell::Int(r.index as i64),
                one_based(st.n),
                one_based(st.probe),
                st.s.into(),
                st.s_prime.into(),
            ];
            row.extend(acc.iter().map(|&x| Cell::from(x)));
            table.push(row);
        }
    }
    table
}

/// Probe sequence of the first n steps for cyclic kinds.
pub fn cyclic_sequence(kind: CompositeKind, m: usize, n: usize) -> Vec<usize> {
    let order = kind.order(m);
    (0..n).map(|i| order[i % m]).collect()
}

pub fn sample(ctx: &Ctx) -> Result<Output, CliError> {
    let model = &ctx.model;
    let m = model.m();
    let rho0 = initial_state(model);
    let recs = fcs::sample_batch(model, ctx.kind, &rho0, ctx.steps, ctx.trajectories, ctx.seed, ctx.workers)?;
    let n = recs.len().max(1) as f64;
    let mean: Vec<f64> = (0..m)
        .map(|j| recs.iter().map(|r| r.cumulative_entropy[j]).sum::<f64>() / n)
        .collect();
    let stderr: Vec<f64> = (0..m)
        .map(|j| {
            let v = recs.iter().map(|r| (r.cumulative_entropy[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (v / n).sqrt()
        })
        .collect();
    let alphas = ctx.alpha.clone().unwrap_or_else(|| vec![-0.5, 0.5]);
    let mut mgf_rows = Vec::new();
    for a in &alphas {
        let alpha = vec![*a; m];
        let (emp, se) = fcs::empirical_mgf(&recs, &alpha);
        let exact = if ctx.kind.is_cyclic() {
            fcs::mgf_finite(model, &cyclic_sequence(ctx.kind, m, ctx.steps), &alpha, &rho0)?
        } else {
            fcs::mgf_periods(model, ctx.kind, &alpha, ctx.steps, &rho0)?
        };
        mgf_rows.push(json!({"alpha": jvec(&alpha), "empirical": jf(emp), "standard_error": jf(se), "exact": jf(exact)}));
    }
    let branches: f64 = cyclic_sequence(ctx.kind, m, ctx.steps)
        .iter()
        .map(|&j| (model.env_decomposition(j).projectors.len() as f64).powi(2))
        .product();
    let exact_cmp = if ctx.kind.is_cyclic() && branches <= BRANCH_BUDGET as f64 {
        let exact = fcs::exact_distribution(model, &cyclic_sequence(ctx.kind, m, ctx.steps), &rho0)?;
        let emp = fcs::empirical_distribution(&recs);
        json!({
            "support_size": exact.support.len(),
            "total_variation": jf(fcs::total_variation(&exact, &emp)),
            "threshold": jf(3.0 * (exact.support.len() as f64 / n).sqrt()),
        })
    } else {
        Value::Null
    };
    let json = json!({
        "kind": ctx.kind.name(),
        "seed": ctx.seed,
        "steps": ctx.steps,
        "trajectories": ctx.trajectories,
        "mean_entropy": jvec(&mean),
        "mean_entropy_stderr": jvec(&stderr),
        "mgf": mgf_rows,
        "exact_comparison": exact_cmp,
        "records": recs.iter().map(|r| json!({
            "index": r.index,
            "seed": r.seed,
            "steps": r.steps.iter().map(|s| json!([s.n + 1, s.probe + 1, jf(s.s), jf(s.s_prime)])).collect::<Vec<_>>(),
            "cumulative_entropy": jvec(&r.cumulative_entropy),
            "cumulative_energy": jvec(&r.cumulative_energy),
        })).collect::<Vec<_>>(),
    });
    Ok(Output { table: sample_table(model, &recs), json })
}
