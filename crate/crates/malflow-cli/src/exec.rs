//! Subcommand execution: a validated configuration in, an [`Outcome`]
//! out.  No files are touched here.

use anyhow::{anyhow, bail, Context, Result};

use malliavin_flow::density::{estimate_density, kde_baseline, terminal_samples, DensityOracle};
use malliavin_flow::drift::ScalarBump;
use malliavin_flow::flow::{frobenius, picard_series, variational_flow};
use malliavin_flow::lamperti::{
    build_map_1d, density_route_check, roundtrip_check, transform_drift, Observable, SigmaField,
};
use malliavin_flow::malliavin::{malliavin_first, malliavin_second, nondegeneracy_diagnostic};
use malliavin_flow::paths::{BrownianPath, SeedSpec, TimeGrid};
use malliavin_flow::sde::solve_forward;
use malliavin_flow::shuffles::{check_moment_bound, verify_shuffle2_identity, verify_shuffle_identity};
use malliavin_flow::suite::{bound_factors, polynomial_factors, run_suite, SuiteName};
use malliavin_flow::transport::{
    ito_residual, log2_rate, residual_rate_study, solve_transport, weak_residual, InitialDatum,
    ResidualSeries,
};

use crate::config::{parse_alphas, parse_linspace, parse_node_list, ExperimentConfig};
use crate::output::{Cell, CheckFlag, Outcome, Table};

fn time_grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    let g = cfg.grid_block();
    TimeGrid::new(g.t0, g.t_end, g.steps).map_err(|e| anyhow!("grid: {e}"))
}

fn grid_node(grid: &TimeGrid, t: f64, field: &str) -> Result<usize> {
    grid.find_node(t, 1e-9 * (1.0 + t.abs()))
        .ok_or_else(|| anyhow!("{field}: {t} is not a grid node"))
}

pub fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.subcommand.as_str() {
        "simulate" => run_simulate(cfg),
        "flow" => run_flow(cfg),
        "malliavin" => run_malliavin(cfg),
        "density" => run_density(cfg),
        "verify-shuffle" => run_verify_shuffle(cfg),
        "verify-estimate" => run_verify_estimate(cfg),
        "transport" => run_transport(cfg),
        "lamperti" => run_lamperti(cfg),
        "suite" => run_suite_cmd(cfg),
        other => bail!("unknown subcommand '{other}'"),
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.simulate.as_ref().expect("validated simulate block");
    let d = spec.dim();

    let mut columns = vec!["path_index".to_string(), "t".to_string()];
    for i in 1..=d {
        columns.push(format!("x{i}"));
    }
    let mut table = Table::new(columns);
    let mut extra_files = Vec::new();
    let mut worst_residual = 0.0f64;
    for p in 0..mc.paths {
        let path = BrownianPath::sample(&grid, d, &SeedSpec::new(mc.seed, p))?;
        let sol = solve_forward(&spec, &block.x0, &path)?;
        worst_residual = worst_residual.max(sol.euler_residual(&spec, &path));
        for j in 0..=grid.n_steps() {
            let mut row: Vec<Cell> = vec![p.into(), grid.node(j).into()];
            row.extend(sol.state(j).iter().map(|&x| Cell::from(x)));
            table.push(row);
        }
        if let Some(prefix) = block.noise_prefix.as_ref() {
            let mut buf = Vec::new();
            path.write_csv(&mut buf).context("rendering noise dump")?;
            let text = String::from_utf8(buf).context("noise dump is not UTF-8")?;
            extra_files.push((format!("{prefix}{p}.csv").into(), text));
        }
    }
    Ok(Outcome {
        table: Some(table),
        checks: vec![CheckFlag::new("euler-replay", worst_residual == 0.0)],
        summary: vec![format!(
            "simulated {} path(s) of {} steps in dimension {d} (replay residual {worst_residual:.1e})",
            mc.paths,
            grid.n_steps(),
        )],
        extra_files,
        ..Outcome::default()
    })
}

fn run_flow(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.flow.as_ref().expect("validated flow block");
    let d = spec.dim();
    let s_index = grid_node(&grid, block.s, "flow.s")?;

    let path = BrownianPath::sample(&grid, d, &SeedSpec::new(mc.seed, 0))?;
    let sol = solve_forward(&spec, &block.x0, &path)?;
    let jet = variational_flow(&spec, &sol, s_index)?;
    let has_hessian = jet.hessian(s_index).is_some();

    let mut columns = vec!["t".to_string()];
    for i in 1..=d {
        for j in 1..=d {
            columns.push(format!("J{i}{j}"));
        }
    }
    if has_hessian {
        for i in 1..=d {
            for j in 1..=d {
                for k in 1..=d {
                    columns.push(format!("H{i}{j}{k}"));
                }
            }
        }
    }
    let mut table = Table::new(columns);
    for t_index in s_index..=grid.n_steps() {
        let mut row: Vec<Cell> = vec![grid.node(t_index).into()];
        row.extend(jet.jacobian(t_index).iter().map(|&v| Cell::from(v)));
        if has_hessian {
            let h = jet.hessian(t_index).expect("hessian present at start");
            row.extend(h.iter().map(|&v| Cell::from(v)));
        }
        table.push(row);
    }

    let mut checks = Vec::new();
    let mut summary = vec![format!(
        "flow jacobian from node {s_index} over {} nodes (dim {d}{})",
        grid.n_steps() - s_index + 1,
        if has_hessian { ", with second variation" } else { "" },
    )];

    if block.fd_check {
        let eps = 1e-4;
        let n = grid.n_steps();
        let j_end = jet.jacobian(n);
        let mut fd = ndarray::Array2::<f64>::zeros((d, d));
        for j in 0..d {
            let mut xp = block.x0.clone();
            let mut xm = block.x0.clone();
            xp[j] += eps;
            xm[j] -= eps;
            // Same noise, shifted start: the flow property lets the FD
            // quotient share the path with the variational solve.
            let segp = malliavin_flow::sde::solve_forward_segment(&spec, &xp, &path, s_index, n)?;
            let segm = malliavin_flow::sde::solve_forward_segment(&spec, &xm, &path, s_index, n)?;
            let rp = segp.row(segp.nrows() - 1);
            let rm = segm.row(segm.nrows() - 1);
            for i in 0..d {
                fd[(i, j)] = (rp[i] - rm[i]) / (2.0 * eps);
            }
        }
        let gap = frobenius(&(&fd - j_end)) / frobenius(j_end).max(1e-300);
        let pass = gap <= 1e-3;
        summary.push(format!(
            "finite-difference check: relative gap {gap:.2e} (cap 1.0e-3)"
        ));
        checks.push(CheckFlag::new("jacobian-fd", pass));
    }

    if let Some(order) = block.picard_order {
        let series = picard_series(&spec, &sol, s_index, order)?;
        let j_end = jet.jacobian(grid.n_steps());
        let defect =
            frobenius(&(series.partial_sum(order) - j_end)) / frobenius(j_end).max(1e-300);
        let norms = series.term_norms();
        let tail: Vec<String> = norms
            .iter()
            .enumerate()
            .skip(norms.len().saturating_sub(3))
            .map(|(m, v)| format!("|term {m}| = {v:.3e}"))
            .collect();
        summary.push(format!(
            "picard truncation at order {order}: partial-sum defect {defect:.2e}; {}",
            tail.join(", ")
        ));
    }

    Ok(Outcome {
        table: Some(table),
        checks,
        summary,
        ..Outcome::default()
    })
}

fn run_malliavin(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.malliavin.as_ref().expect("validated malliavin block");
    let d = spec.dim();
    let t_index = grid_node(&grid, block.t, "malliavin.t")?;

    let path = BrownianPath::sample(&grid, d, &SeedSpec::new(mc.seed, 0))?;
    let sol = solve_forward(&spec, &block.x0, &path)?;
    let jets = malliavin_first(&spec, &sol)?;

    let mut columns = vec!["s".to_string(), "t".to_string()];
    for i in 1..=d {
        for r in 1..=d {
            columns.push(format!("D{i}{r}"));
        }
    }
    if block.order == 2 {
        for i in 1..=d {
            for r in 1..=d {
                for q in 1..=d {
                    columns.push(format!("D2_{i}{r}{q}"));
                }
            }
        }
    }
    let mut table = Table::new(columns);
    let t_val = grid.node(t_index);
    for s in 0..=grid.n_steps() {
        let mut row: Vec<Cell> = vec![grid.node(s).into(), t_val.into()];
        row.extend(jets.d1(s, t_index).iter().map(|&v| Cell::from(v)));
        if block.order == 2 {
            // Diagonal second derivative D^2_{s,s} X_t.
            let d2 = malliavin_second(&spec, &sol, s, s, t_index)?;
            row.extend(d2.iter().map(|&v| Cell::from(v)));
        }
        table.push(row);
    }

    let mut checks = Vec::new();
    let mut summary = vec![format!(
        "Malliavin derivative order {} at t = {t_val} over {} start nodes",
        block.order,
        grid.n_steps() + 1
    )];
    if let Some(ps) = block.nondeg_p.as_ref() {
        let report = nondegeneracy_diagnostic(
            &spec,
            &block.x0,
            &grid,
            ps,
            mc.paths as usize,
            mc.seed,
        )?;
        let mut pass = true;
        for entry in &report.entries {
            let stable = entry.estimate.is_finite()
                && (0.9..=1.1).contains(&entry.stability_ratio());
            pass &= stable;
            summary.push(format!(
                "inverse moment p = {}: E[(det gamma)^-p] = {:.6e} (se {:.1e}, half-sample ratio {:.3})",
                entry.p,
                entry.estimate,
                entry.std_error,
                entry.stability_ratio()
            ));
        }
        checks.push(CheckFlag::new("nondegeneracy", pass));
    }

    Ok(Outcome {
        table: Some(table),
        checks,
        summary,
        ..Outcome::default()
    })
}

fn density_oracle(cfg: &ExperimentConfig, x0: f64, t: f64) -> Result<DensityOracle> {
    let block = cfg.drift_block();
    match block.family.as_str() {
        "zero" => Ok(DensityOracle::ZeroDrift { x0, t }),
        "ou" => Ok(DensityOracle::OrnsteinUhlenbeck {
            x0,
            theta: block.params.get("theta").copied().unwrap_or(1.0),
            t,
        }),
        other => bail!("density.method: no closed-form oracle for the '{other}' drift"),
    }
}

fn run_density(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.density.as_ref().expect("validated density block");
    let ys = parse_linspace(&block.y, "density.y")?;

    let mut table = Table::new(vec!["y", "value", "std_error", "method", "order"]);
    let mut summary = Vec::new();
    let push_block =
        |table: &mut Table, ys: &[f64], vals: &[f64], ses: Option<&[f64]>, method: &str, order: usize| {
            for (i, &y) in ys.iter().enumerate() {
                table.push(vec![
                    y.into(),
                    vals[i].into(),
                    ses.map(|s| Cell::from(s[i])).unwrap_or(Cell::Num(f64::NAN)),
                    method.into(),
                    order.into(),
                ]);
            }
        };

    let methods: Vec<&str> = match block.method.as_str() {
        "both" => vec!["malliavin", "kde"],
        other => vec![other],
    };
    for method in methods {
        match method {
            "malliavin" => {
                let est = estimate_density(
                    &spec,
                    block.x0,
                    &grid,
                    block.t,
                    &ys,
                    block.order,
                    mc.paths as usize,
                    mc.seed,
                )?;
                push_block(
                    &mut table,
                    &ys,
                    &est.values,
                    Some(&est.std_errors),
                    "malliavin",
                    block.order,
                );
                let se_max = est.std_errors.iter().cloned().fold(0.0f64, f64::max);
                summary.push(format!(
                    "integration-by-parts estimate at {} points, {} paths (max se {se_max:.2e})",
                    ys.len(),
                    mc.paths
                ));
            }
            "kde" => {
                let samples = terminal_samples(&spec, block.x0, &grid, mc.paths as usize, mc.seed)?;
                let vals = kde_baseline(&samples, &ys, None)?;
                push_block(&mut table, &ys, &vals, None, "kde", 0);
                summary.push(format!("kernel baseline from {} terminal samples", samples.len()));
            }
            "oracle" => {
                let oracle = density_oracle(cfg, block.x0, block.t)?;
                let vals: Vec<f64> = if block.order == 0 {
                    ys.iter().map(|&y| oracle.pdf(y)).collect()
                } else {
                    ys.iter().map(|&y| oracle.pdf_derivative(y)).collect()
                };
                push_block(&mut table, &ys, &vals, None, "oracle", block.order);
                summary.push("closed-form oracle values".to_string());
            }
            other => bail!("density.method: unknown method '{other}'"),
        }
    }

    Ok(Outcome {
        table: Some(table),
        summary,
        ..Outcome::default()
    })
}

fn run_verify_shuffle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let block = cfg.shuffle.as_ref().expect("validated shuffle block");
    let (f, _) = polynomial_factors(0, block.m);
    let (g, _) = polynomial_factors(block.m, block.n);
    let chk = match block.k {
        None => verify_shuffle_identity(&f, &g, 0.0, 1.0, block.nsub)?,
        Some(k) => verify_shuffle2_identity(&f, &g, k, 0.0, 1.0, block.nsub)?,
    };
    let mut table = Table::new(vec!["m", "n", "lhs", "rhs", "residual", "budget"]);
    table.push(vec![
        chk.m.into(),
        chk.n.into(),
        chk.lhs.into(),
        chk.rhs.into(),
        chk.residual.into(),
        chk.budget.into(),
    ]);
    let label = match block.k {
        None => "product identity".to_string(),
        Some(k) => format!("pinned identity (k = {k})"),
    };
    let summary = vec![format!(
        "{label} for m = {}, n = {}: residual {:.3e} vs budget {:.3e} at {} subdivisions \
         (refined residual {:.3e})",
        chk.m, chk.n, chk.residual, chk.budget, chk.n_sub, chk.residual_refined
    )];
    Ok(Outcome {
        table: Some(table),
        checks: vec![CheckFlag::new("shuffle-identity", chk.pass())],
        summary,
        ..Outcome::default()
    })
}

fn run_verify_estimate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mc = cfg.mc_block();
    let block = cfg.estimate.as_ref().expect("validated estimate block");
    let alphas = match block.alphas.as_ref() {
        None => vec![None; block.m],
        Some(text) => parse_alphas(text, block.m)?,
    };
    let word = malliavin_flow::drift::DerivativeWord::new(bound_factors(block.m)?, alphas)?;
    let stat = check_moment_bound(&word, 0.0, 1.0, mc.paths, block.nsub, mc.seed)?;
    let mut table = Table::new(vec!["m", "lhs", "se", "rhs_core", "ratio_root"]);
    table.push(vec![
        stat.m.into(),
        stat.lhs.into(),
        stat.lhs_se.into(),
        stat.rhs_core.into(),
        stat.ratio_root.into(),
    ]);
    let finite = stat.lhs.is_finite() && stat.ratio_root.is_finite();
    let summary = vec![format!(
        "moment estimate for a length-{} word over {} paths: lhs {:.6e} (se {:.1e}), \
         factorial envelope {:.6e}, per-factor constant {:.4}",
        stat.m, stat.n_paths, stat.lhs, stat.lhs_se, stat.rhs_core, stat.ratio_root
    )];
    Ok(Outcome {
        table: Some(table),
        checks: vec![CheckFlag::new("moment-estimate", finite)],
        summary,
        ..Outcome::default()
    })
}

fn build_datum(block: &crate::config::TransportBlock) -> Result<InitialDatum> {
    let p = &block.u0_params;
    match block.u0.as_str() {
        "gauss-bump" => InitialDatum::gauss_bump(
            1,
            p.get("center").copied().unwrap_or(0.0),
            p.get("width").copied().unwrap_or(1.5),
            p.get("height").copied().unwrap_or(1.0),
        )
        .map_err(|e| anyhow!("transport.u0: {e}")),
        "cosine" => InitialDatum::cosine(
            1,
            p.get("wavenumber").copied().unwrap_or(1.0),
            p.get("height").copied().unwrap_or(1.0),
        )
        .map_err(|e| anyhow!("transport.u0: {e}")),
        "poly-probe" => {
            let degree = p.get("degree").copied().unwrap_or(2.0);
            if degree == 1.0 {
                InitialDatum::linear_probe(1)
            } else {
                InitialDatum::quadratic_probe(1)
            }
            .map_err(|e| anyhow!("transport.u0: {e}"))
        }
        other => bail!("transport.u0: unknown datum '{other}'"),
    }
}

fn run_transport(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.transport.as_ref().expect("validated transport block");
    let u0 = build_datum(block)?;
    let xs = parse_linspace(&block.x, "transport.x")?;
    let nodes: Vec<usize> = if block.t_nodes == "all" {
        (0..=grid.n_steps()).collect()
    } else {
        parse_node_list(&block.t_nodes)?
    };
    let x_points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let path = BrownianPath::sample(&grid, 1, &SeedSpec::new(mc.seed, 0))?;
    let sol = solve_transport(&spec, &u0, &path, &x_points, &nodes)?;

    // Residual channels requested alongside the field table.
    let want_ito = matches!(block.residual.as_deref(), Some("ito") | Some("both"));
    let want_weak = matches!(block.residual.as_deref(), Some("weak") | Some("both"));
    let ito_series: Option<Vec<ResidualSeries>> = if want_ito {
        Some(
            (0..x_points.len())
                .map(|k| ito_residual(&sol, &spec, k))
                .collect::<malliavin_flow::Result<_>>()?,
        )
    } else {
        None
    };
    let weak_series: Option<ResidualSeries> = if want_weak {
        let lo = xs[0];
        let hi = xs[xs.len() - 1];
        let theta = ScalarBump::new(
            block.theta_center.unwrap_or(0.5 * (lo + hi)),
            block.theta_width.unwrap_or(0.45 * (hi - lo)),
            1.0,
        )?;
        Some(weak_residual(&sol, &spec, &theta)?)
    } else {
        None
    };

    let mut table = Table::new(vec!["t", "x", "u", "grad1", "laplacian", "residual"]);
    for (row, &node) in nodes.iter().enumerate() {
        let t = grid.node(node);
        for (k, &x) in xs.iter().enumerate() {
            let lap = sol
                .laplacian(row, k)
                .map(Cell::from)
                .unwrap_or(Cell::Num(f64::NAN));
            let residual = match (&ito_series, &weak_series) {
                (Some(series), _) => Cell::from(series[k].values()[row]),
                (None, Some(series)) => Cell::from(series.values()[row]),
                (None, None) => Cell::Num(f64::NAN),
            };
            table.push(vec![
                t.into(),
                x.into(),
                sol.value(row, k).into(),
                sol.gradient(row, k)[0].into(),
                lap,
                residual,
            ]);
        }
    }

    let mut checks = Vec::new();
    let mut summary = vec![format!(
        "transported field on {} x-points and {} time nodes (sup |u| = {:.4})",
        xs.len(),
        nodes.len(),
        sol.sup_value()
    )];
    if let Some(series) = &ito_series {
        let sup = series.iter().map(ResidualSeries::sup).fold(0.0f64, f64::max);
        summary.push(format!("pathwise Ito residual sup {sup:.3e} across the x-grid"));
    }
    if let Some(series) = &weak_series {
        summary.push(format!("weak-form residual sup {:.3e}", series.sup()));
    }
    if let Some(levels) = block.refine {
        let x_mid = xs[xs.len() / 2];
        let study = residual_rate_study(
            &spec,
            &u0,
            &[x_mid],
            &grid,
            levels,
            &SeedSpec::new(mc.seed, 0),
        )?;
        let rate = log2_rate(&study);
        // Validation guarantees at least two levels, so the comparison is
        // between genuinely different step sizes.
        let decays = study[study.len() - 1].1 < study[0].1;
        let rows: Vec<String> = study
            .iter()
            .map(|(dt, sup)| format!("dt {dt:.2e} -> sup {sup:.3e}"))
            .collect();
        summary.push(format!(
            "refinement study at x = {x_mid} over {levels} level(s): {}; empirical rate {rate:.2}",
            rows.join(", ")
        ));
        checks.push(CheckFlag::new("residual-decay", decays));
    }

    Ok(Outcome {
        table: Some(table),
        checks,
        summary,
        ..Outcome::default()
    })
}

fn run_lamperti(cfg: &ExperimentConfig) -> Result<Outcome> {
    let b = cfg.drift_block().build()?;
    let grid = time_grid(cfg)?;
    let mc = cfg.mc_block();
    let block = cfg.lamperti.as_ref().expect("validated lamperti block");
    let sigma = match block.sigma.as_str() {
        "sin2" => SigmaField::two_plus_sin(),
        "const" => SigmaField::constant(block.sigma_params.get("s0").copied().unwrap_or(2.0))?,
        other => bail!("lamperti.sigma: unknown coefficient '{other}'"),
    };
    let map = build_map_1d(&sigma, block.anchor, block.box_lo, block.box_hi)?;
    let k = b.smoothness().min(2);
    let transformed = transform_drift(&map, &b, &sigma, k)?;

    match block.check.as_str() {
        "roundtrip" => {
            let observables = [
                Observable::Cos,
                Observable::Bump(ScalarBump::new(block.x0, 2.0, 1.0)?),
            ];
            let report = roundtrip_check(
                &b,
                &sigma,
                &map,
                &transformed,
                block.x0,
                &grid,
                &observables,
                mc.paths as usize,
                mc.seed,
            )?;
            let mut table = Table::new(vec![
                "observable",
                "direct_mean",
                "transformed_mean",
                "diff_mean",
                "diff_se",
                "budget",
            ]);
            let mut summary = vec![format!(
                "two-route weak comparison over {} paths at dt = {:.2e}",
                report.n_paths, report.dt
            )];
            for entry in &report.entries {
                table.push(vec![
                    entry.name.as_str().into(),
                    entry.direct_mean.into(),
                    entry.transformed_mean.into(),
                    entry.diff_mean.into(),
                    entry.diff_se.into(),
                    entry.budget.into(),
                ]);
                summary.push(format!(
                    "E[{}]: direct {:.6} vs transformed {:.6} (|diff| {:.2e}, budget {:.2e})",
                    entry.name,
                    entry.direct_mean,
                    entry.transformed_mean,
                    entry.diff_mean.abs(),
                    entry.budget
                ));
            }
            Ok(Outcome {
                table: Some(table),
                checks: vec![CheckFlag::new("lamperti-roundtrip", report.pass())],
                summary,
                ..Outcome::default()
            })
        }
        "density" => {
            let x_points: Vec<f64> = (0..21).map(|i| block.x0 - 2.0 + 0.2 * i as f64).collect();
            let report = density_route_check(
                &b,
                &sigma,
                &map,
                &transformed,
                block.x0,
                &grid,
                &x_points,
                mc.paths as usize,
                mc.seed,
            )?;
            let mut table = Table::new(vec![
                "x",
                "direct_kde",
                "mapped_density",
                "smoothed_mapped",
            ]);
            for (i, &x) in report.x_points.iter().enumerate() {
                table.push(vec![
                    x.into(),
                    report.direct_kde[i].into(),
                    report.mapped_density[i].into(),
                    report.smoothed_mapped[i].into(),
                ]);
            }
            let summary = vec![format!(
                "density routes on {} bulk points: sup gap {:.4e} vs tolerance {:.4e} \
                 (peak {:.4}, bandwidth {:.3})",
                report.x_points.len(),
                report.sup_gap,
                report.tolerance,
                report.peak,
                report.bandwidth
            )];
            Ok(Outcome {
                table: Some(table),
                checks: vec![CheckFlag::new("lamperti-density", report.pass())],
                summary,
                ..Outcome::default()
            })
        }
        other => bail!("lamperti.check: unknown check '{other}'"),
    }
}

fn run_suite_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let block = cfg.suite.as_ref().expect("validated suite block");
    let name: SuiteName = block.name.parse()?;
    let seed = cfg.master_seed();
    let report = run_suite(name, seed)?;
    let mut summary = Vec::with_capacity(report.checks.len() + 1);
    let mut checks = Vec::with_capacity(report.checks.len());
    for check in &report.checks {
        summary.push(check.line());
        checks.push(CheckFlag::new(check.name.clone(), check.pass));
    }
    summary.push(format!(
        "suite {} finished in {:.1} s with {} of {} criteria passing",
        report.suite,
        report.wall_ms as f64 / 1000.0,
        report.checks.len() - report.n_failed(),
        report.checks.len()
    ));
    let value = serde_json::to_value(&report).context("serializing suite report")?;
    Ok(Outcome {
        report: Some(value),
        checks,
        summary,
        ..Outcome::default()
    })
}
