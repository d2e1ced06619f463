//! Subcommand implementations. Each returns a JSON result and, where the
//! subcommand has one, a CSV table.

use num_complex::Complex;
use serde::Serialize;
use serde_json::{json, Value};
use weyl_semigroup::bounds::{self, BoundReport};
use weyl_semigroup::brownian::sample_absolute_moment;
use weyl_semigroup::commutator::{self, Polynomial};
use weyl_semigroup::oracle::{self, SpectralFactors};
use weyl_semigroup::symbol_estimator::estimate_derivative;
use weyl_semigroup::{
    a_constant, b_constant, theorem31_bound, MultiIndex, PhasePoint, PotentialConfig, PotentialSpec, Real,
    SymbolEstimate,
};

use crate::config::*;
use crate::error::CliError;
use crate::output::Table;

/// Result of one subcommand before it is written out.
pub struct Outcome {
    pub result: Value,
    pub table: Option<Table>,
    pub violation: bool,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("at '{name}': must be positive, got {v}")))
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg {
        RunConfig::Estimate(c) => match c.precision {
            Precision::F64 => estimate::<f64>(c),
            Precision::F32 => estimate::<f32>(c),
        },
        RunConfig::Oracle(c) => oracle_cmd(c),
        RunConfig::Verify(c) => verify(c),
        RunConfig::Commutator(c) => commutator_cmd(c),
        RunConfig::Bound(c) => bound(c),
        RunConfig::Moments(c) => moments(c),
    }
}

#[derive(Serialize)]
struct EstimateRow {
    x: Vec<f64>,
    xi: Vec<f64>,
    t: f64,
    value: Complex<f64>,
    stderr_re: f64,
    stderr_im: f64,
}

fn estimate<F: Real>(c: &EstimateConfig) -> Result<Outcome, CliError> {
    let v: PotentialSpec<F> = c.potential.build()?;
    let n = v.n_sites();
    if c.points.is_empty() || c.t.is_empty() {
        return Err(config_err("at 'points'/'t': need at least one point and one time"));
    }
    for (i, &t) in c.t.iter().enumerate() {
        positive(&format!("t[{i}]"), t)?;
    }
    let params = c.estimator.params();
    let mut header: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
    header.extend((0..n).map(|j| format!("xi{j}")));
    header.extend(["t", "re", "im", "stderr_re", "stderr_im"].map(String::from));
    let mut table = Table::new(header);
    let mut rows = Vec::new();
    for (i, pc) in c.points.iter().enumerate() {
        if pc.x.len() != n || pc.xi.len() != n {
            return Err(config_err(format!("at 'points[{i}]': expected {n} coordinates for x and xi")));
        }
        let p = PhasePoint::new(pc.x.iter().map(|&a| F::lit(a)).collect(), pc.xi.iter().map(|&a| F::lit(a)).collect())?;
        for &t in &c.t {
            let e: SymbolEstimate<F> =
                estimate_derivative(&v, &p, F::lit(t), &c.alpha, &c.beta, c.h.map(F::lit), &params)?;
            let row = EstimateRow {
                x: pc.x.clone(),
                xi: pc.xi.clone(),
                t,
                value: Complex::new(e.value.re.to_f64_lossy(), e.value.im.to_f64_lossy()),
                stderr_re: e.stderr_re.to_f64_lossy(),
                stderr_im: e.stderr_im.to_f64_lossy(),
            };
            table.push_floats(
                row.x.iter().chain(&row.xi).copied().chain([t, row.value.re, row.value.im, row.stderr_re, row.stderr_im]),
            );
            rows.push(row);
        }
    }
    Ok(Outcome { result: json!({ "estimates": rows }), table: Some(table), violation: false })
}

fn state(grid: &oracle::Grid, s: &StateConfig) -> Vec<Complex<f64>> {
    oracle::gaussian_state(grid, &s.center, &s.momentum, s.width)
}

/// Two offset Gaussians scaled to the region of interest, so their tails stay inside it.
fn default_states(grid: &oracle::Grid) -> [StateConfig; 2] {
    let (dim, r) = (grid.dim(), grid.roi());
    [
        StateConfig { center: vec![0.1 * r; dim], momentum: vec![1.0; dim], width: 0.1 * r },
        StateConfig { center: vec![-0.08 * r; dim], momentum: vec![-0.5; dim], width: 0.08 * r },
    ]
}

fn oracle_dim(p: &PotentialConfig) -> Result<usize, CliError> {
    let d = p.n_sites();
    if !(1..=2).contains(&d) {
        return Err(config_err(format!("at 'potential': the oracle needs 1 or 2 sites, got {d}")));
    }
    Ok(d)
}

fn oracle_cmd(c: &OracleConfig) -> Result<Outcome, CliError> {
    let dim = oracle_dim(&c.potential)?;
    positive("t", c.t)?;
    let v: PotentialSpec<f64> = c.potential.build()?;
    let grid = c.grid.build(dim)?;
    let h = oracle::build_hamiltonian(&v, &grid)?;
    let s = SpectralFactors::new(&h, &grid)?.semigroup(c.t)?;
    let table = oracle::weyl_symbol_from_kernel(&s)?;
    let states = c.pairing.clone().unwrap_or_else(|| default_states(&grid));
    for (i, st) in states.iter().enumerate() {
        if st.center.len() != dim || !(st.momentum.is_empty() || st.momentum.len() == dim) {
            return Err(config_err(format!("at 'pairing[{i}]': expected {dim} coordinates")));
        }
        positive(&format!("pairing[{i}].width"), st.width)?;
    }
    let (f, g) = (state(&grid, &states[0]), state(&grid, &states[1]));
    let residual = oracle::pairing_check(&s, &f, &g)?;
    let norms = (oracle::inner(&f, &f, &grid).re.sqrt(), oracle::inner(&g, &g, &grid).re.sqrt());
    let trace: f64 = s.matrix.diagonal().sum();
    let integral = table.phase_space_integral();

    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.extend((0..dim).map(|j| format!("xi{j}")));
    header.extend(["re", "im"].map(String::from));
    let mut csv = Table::new(header);
    for (x, xi, u) in table.entries() {
        if x.iter().all(|a| a.abs() <= c.table.x_max) && xi.iter().all(|k| k.abs() <= c.table.xi_max) {
            csv.push_floats(x.iter().chain(&xi).copied().chain([u.re, u.im]));
        }
    }
    let result = json!({
        "trace": trace,
        "phase_space_integral": integral,
        "max_abs_u": table.max_abs(),
        "max_abs_im_u": table.max_abs_im(),
        "pairing_residual": residual,
        "pairing_tolerance": 1e-6 * norms.0 * norms.1,
        "grid": { "dx": grid.dx(), "dxi": grid.dxi(), "roi": grid.roi() },
    });
    Ok(Outcome { result, table: Some(csv), violation: false })
}

fn need_potential(c: &VerifyConfig) -> Result<&PotentialConfig, CliError> {
    c.potential.as_ref().ok_or_else(|| config_err("at 'potential': required for this suite"))
}

fn verify(c: &VerifyConfig) -> Result<Outcome, CliError> {
    let suite = c.suite.ok_or_else(|| config_err("at 'suite': missing"))?;
    if c.t.is_empty() {
        return Err(config_err("at 't': need at least one time"));
    }
    for (i, &t) in c.t.iter().enumerate() {
        positive(&format!("t[{i}]"), t)?;
    }
    let params = c.estimator.params();
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut extra = serde_json::Map::new();
    match suite {
        Suite::Linf | Suite::XiDeriv => {
            let pc = need_potential(c)?;
            let v: PotentialSpec<f64> = pc.build()?;
            let beta = if suite == Suite::Linf { MultiIndex::zero() } else { c.beta.clone() };
            let points = bounds::random_phase_points::<f64>(v.n_sites(), c.n_probes, c.radius, params.seed);
            for &t in &c.t {
                let sweep = points
                    .iter()
                    .map(|p| estimate_derivative(&v, p, t, &MultiIndex::zero(), &beta, None, &params))
                    .collect::<Result<Vec<_>, _>>()?;
                if suite == Suite::Linf {
                    let mut r = bounds::check_linf(&sweep)?;
                    r.id = format!("linf[t={t}]");
                    reports.push(r);
                } else {
                    let (a, b) = bounds::check_xi_derivative_bounds(&sweep, &beta, t, params.preset)?;
                    for mut r in [a, b] {
                        r.id = format!("{}[t={t}]", r.id);
                        reports.push(r);
                    }
                }
                if suite == Suite::Linf && v.n_sites() <= 2 {
                    if let Some(gc) = &c.grid {
                        let grid = gc.build(v.n_sites())?;
                        let s = oracle::semigroup(&oracle::build_hamiltonian(&v, &grid)?, &grid, t)?;
                        let mut r = bounds::check_linf_table(&oracle::weyl_symbol_from_kernel(&s)?)?;
                        r.id = format!("linf-oracle[t={t}]");
                        reports.push(r);
                    }
                }
            }
        }
        Suite::L1 => {
            let pc = need_potential(c)?;
            let dim = oracle_dim(pc)?;
            let v: PotentialSpec<f64> = pc.build()?;
            let grid = c.grid.clone().unwrap_or_default().build(dim)?;
            let xi = if c.xi.is_empty() { vec![vec![0.0; dim]] } else { c.xi.clone() };
            let mut details = Vec::new();
            for &t in &c.t {
                let mut r = bounds::check_l1_bound(&v, t, &xi, &grid)?;
                r.report.id = format!("l1[t={t}]");
                reports.push(r.report.clone());
                details.push(json!({ "t": t, "xi": r.xi, "lhs": r.lhs, "rhs": r.rhs }));
            }
            extra.insert("l1".into(), Value::Array(details));
        }
        Suite::Thm31 => {
            let family = c.family.as_ref().ok_or_else(|| config_err("at 'family': required for thm31"))?;
            let mut details = Vec::new();
            for &t in &c.t {
                let r = bounds::check_theorem31::<f64>(family, c.m, t, &c.alpha, &c.beta, &c.sizes, c.n_probes, &params)?;
                reports.extend(r.sizes.iter().map(|s| {
                    let mut rep = s.report.clone();
                    rep.id = format!("{}[t={t}]", rep.id);
                    rep
                }));
                details.push(to_value(&r));
            }
            extra.insert("thm31".into(), Value::Array(details));
        }
        Suite::Class => {
            let v: PotentialSpec<f64> = need_potential(c)?.build()?;
            let mut details = Vec::new();
            for &t in &c.t {
                let r = bounds::class_membership(&v, c.m, t, c.n_probes, &params)?;
                reports.extend(r.reports.iter().map(|rep| {
                    let mut rep = rep.clone();
                    rep.id = format!("{}[t={t}]", rep.id);
                    rep
                }));
                details.push(json!({ "t": t, "params": r.params }));
            }
            extra.insert("class".into(), Value::Array(details));
        }
    }
    let violation = reports.iter().any(|r| r.violation);
    let mut result = serde_json::Map::new();
    result.insert("violation".into(), Value::Bool(violation));
    result.insert("reports".into(), to_value(&reports));
    result.extend(extra);
    Ok(Outcome { result: Value::Object(result), table: None, violation })
}

fn commutator_cmd(c: &CommutatorConfig) -> Result<Outcome, CliError> {
    let dim = oracle_dim(&c.potential)?;
    if c.t.is_empty() {
        return Err(config_err("at 't': need at least one time"));
    }
    for (i, &t) in c.t.iter().enumerate() {
        positive(&format!("t[{i}]"), t)?;
    }
    let v: PotentialSpec<f64> = c.potential.build()?;
    let grid = c.grid.build(dim)?;
    let a = Polynomial::new(c.a.clone())?;
    let obs = commutator::gaussian_state_symbol(&grid, &c.p.x0, &c.p.xi0, c.p.width_x, c.p.width_xi)?;
    let factors = SpectralFactors::new(&oracle::build_hamiltonian(&v, &grid)?, &grid)?;
    let sweep = commutator::commutator_sweep(&a, c.site, &factors, &obs, &c.t)?;
    let points: Vec<(f64, f64)> = sweep.iter().map(|r| (r.t, r.magnitude())).collect();
    let fit = commutator::scaling_fit(&points);
    let refit = commutator::half_range_refit(&points);
    let c_fit = match (&fit, &refit) {
        (Ok(f), _) => Some(f.c_fit),
        (_, Ok(r)) => Some(r.c_full),
        _ => None,
    };
    let trace_p: Complex<f64> = commutator::op_weyl_matrix(&obs)?.diagonal().iter().sum();

    let mut csv = Table::new(["t", "trace_matrix_re", "trace_matrix_im", "trace_symbol_re", "trace_symbol_im", "sup_symbol", "bound"]);
    for r in &sweep {
        let bound = c_fit.map_or(f64::NAN, |k| k * r.t.sqrt());
        csv.push_floats([r.t, r.matrix.re, r.matrix.im, r.symbol.re, r.symbol.im, r.sup_symbol, bound]);
    }
    let max_mismatch = sweep.iter().map(|r| r.route_mismatch()).fold(0.0, f64::max);
    let result = json!({
        "traces": sweep,
        "fit": fit.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        "half_range_refit": refit.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        "max_route_mismatch": max_mismatch,
        "trace_op_p": trace_p,
        "observable_trace": obs.trace(),
    });
    Ok(Outcome { result, table: Some(csv), violation: false })
}

fn bound(c: &BoundConfig) -> Result<Outcome, CliError> {
    positive("t", c.t)?;
    let c_m = match (c.c_m, &c.potential) {
        (Some(v), _) => v,
        (None, Some(p)) => p.build::<f64>()?.certified_cm(c.m)?,
        (None, None) => return Err(config_err("at 'c_m': give c_m or a potential to certify it from")),
    };
    if !(c_m >= 0.0) {
        return Err(config_err("at 'c_m': must be ≥ 0"));
    }
    let value = theorem31_bound(&c.alpha, &c.beta, c.m, c.t, c_m, c.preset.variance())?;
    Ok(Outcome { result: json!({ "c_m": c_m, "bound": value }), table: None, violation: false })
}

fn moments(c: &MomentsConfig) -> Result<Outcome, CliError> {
    positive("t", c.t)?;
    let sigma2: f64 = c.preset.variance();
    let constants: Vec<Value> = (0..=c.max_k)
        .map(|k| json!({ "k": k, "A": a_constant::<f64>(k), "B": b_constant::<f64>(k) }))
        .collect();
    let mut csv = Table::new(["k", "A", "B"]);
    for k in 0..=c.max_k {
        csv.push_floats([k as f64, a_constant(k), b_constant(k)]);
    }
    let mut samples = Vec::new();
    for (i, beta) in c.beta.iter().enumerate() {
        let exact = weyl_semigroup::brownian::absolute_moment_product(beta, c.t, sigma2);
        let s = sample_absolute_moment::<f64>(beta, c.t, sigma2, c.n_paths, c.seed.wrapping_add(i as u64))?;
        samples.push(json!({
            "beta": beta,
            "exact": exact,
            "mean": s.mean,
            "stderr": s.stderr,
            "z": if s.stderr > 0.0 { (s.mean - exact) / s.stderr } else { 0.0 },
        }));
    }
    Ok(Outcome {
        result: json!({ "variance_scale": sigma2, "constants": constants, "samples": samples }),
        table: Some(csv),
        violation: false,
    })
}
