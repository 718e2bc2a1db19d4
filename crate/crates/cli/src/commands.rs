//! One function per subcommand; each returns the report whose checks decide the exit code.

use crate::config::{
    self, CertifyConfig, GenConfig, Observable, ObservableConfig, PfodeConfig, RolloutRun, SampleConfig,
};
use lawbound::certify::{self, DriftSpec, GaussianDiffusion, Schedule, TestTuple};
use lawbound::ensemble::{self, Ensemble, LawCurve};
use lawbound::euler::{self, EulerConfig};
use lawbound::fields::{self, GridField};
use lawbound::io;
use lawbound::nalgebra::{DMatrix, DVector};
use lawbound::report::{Check, Report};
use lawbound::rollout;
use lawbound::sampler;
use lawbound::scores::{self, ResolvedObservable};
use lawbound::suite::{self, Variant};
use lawbound::{par, stream, transport};
use serde::Serialize;
use serde_json::json;
use std::path::Path;

pub const SUITE_SEED: u64 = 1;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn read_ensemble(path: &Path) -> Res<Ensemble> {
    Ok(io::read_ensemble(path).map_err(|e| format!("{}: {e}", path.display()))?.0)
}

fn read_curve(path: &Path) -> Res<LawCurve> {
    Ok(io::read_law_curve(path).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn same_grid(a: &Ensemble, b: &Ensemble) -> Res<()> {
    if a.grid() != b.grid() || a.m() != b.m() {
        return Err(format!(
            "grid mismatch: {:?} with {} components vs {:?} with {}",
            a.grid(),
            a.m(),
            b.grid(),
            b.m()
        )
        .into());
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Res<()> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

fn report<C: Serialize, P: Serialize>(command: &str, config: &C, checks: Vec<Check>, payload: &P) -> Res<Report> {
    Ok(Report::new(command, config, checks)?.with_payload(payload)?)
}

pub fn gen(path: &Path, seed: u64, out: &Path) -> Res<Report> {
    let cfg: GenConfig = config::load(path)?;
    let p = fields::spectrum_exponent(cfg.s, cfg.grid.d());
    let e = suite::divfree_ensemble(cfg.grid, cfg.members, p, cfg.k_max, seed)?.map(|u| u.scaled(cfg.amplitude));
    io::write_ensemble(out, &e, 0.0)?;
    let div = e
        .members()
        .iter()
        .map(|u| Ok(fields::divergence_sup(u)? / fields::grad_sup(u).max(1.0)))
        .collect::<lawbound::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let m2 = ensemble::moment(&e, 2)?;
    let ks: Vec<usize> = (0..).map(|j| 1usize << j).take_while(|&k| k < cfg.k_max).collect();
    let tails: Vec<f64> = ks.iter().map(|&k| ensemble::tail(&e, k)).collect();
    let checks = vec![
        Check::at_most("relative_divergence", div, 0.0, 1e-10),
        Check::at_most("tail_above_k_max", ensemble::tail(&e, cfg.k_max), 0.0, 1e-12 * m2.sqrt().max(1.0)),
    ];
    report("gen", &json!({"config": cfg, "seed": seed}), checks, &json!({"m2": m2, "K": ks, "tail": tails}))
}

pub fn evolve(input: &Path, out: &Path, horizon: f64, dt: f64, every: f64, conservation: Option<&Path>) -> Res<Report> {
    if !(horizon > 0.0 && dt > 0.0 && every > 0.0) {
        return Err("horizon, dt and every must be positive".into());
    }
    let e = read_ensemble(input)?;
    let cfg = EulerConfig::new(e.grid(), dt);
    let mut times: Vec<f64> = (0..).map(|j| j as f64 * every).take_while(|&t| t < horizon * (1.0 - 1e-12)).collect();
    times.push(horizon);
    let traj = euler::evolve_members(e.members(), &cfg, &times)?;
    let ensembles = (0..times.len())
        .map(|j| Ensemble::new(traj.iter().map(|p| p[j].clone()).collect()))
        .collect::<lawbound::Result<Vec<_>>>()?;
    io::write_law_curve(out, &LawCurve::new(times.clone(), ensembles)?)?;
    let logs = traj.iter().map(|p| euler::conservation_log(&times, p)).collect::<lawbound::Result<Vec<_>>>()?;
    let n = logs.len() as f64;
    let rows: Vec<euler::ConservationRow> = (0..times.len())
        .map(|j| euler::ConservationRow {
            t: times[j],
            energy: logs.iter().map(|l| l[j].energy).sum::<f64>() / n,
            enstrophy: logs.iter().map(|l| l[j].enstrophy).sum::<f64>() / n,
            divergence: logs.iter().map(|l| l[j].divergence).fold(0.0, f64::max),
        })
        .collect();
    if let Some(path) = conservation {
        write(path, &euler::conservation_csv(&rows))?;
    }
    let drift = |f: fn(&euler::ConservationRow) -> f64| {
        logs.iter()
            .flat_map(|l| l.iter().map(move |r| (f(r) - f(&l[0])).abs() / f(&l[0]).max(f64::MIN_POSITIVE)))
            .fold(0.0, f64::max)
    };
    let checks = vec![
        Check::at_most("energy_drift", drift(|r| r.energy), 0.0, 1e-6),
        Check::at_most("enstrophy_drift", drift(|r| r.enstrophy), 0.0, 1e-6),
        Check::at_most("divergence", rows.iter().map(|r| r.divergence).fold(0.0, f64::max), 0.0, 1e-8),
    ];
    report("evolve", &json!({"horizon": horizon, "dt": dt, "every": every}), checks, &rows)
}

#[derive(Serialize)]
struct PathIndex {
    version: u32,
    members: usize,
    times: Vec<f64>,
    files: Vec<Vec<String>>,
}

pub fn sample(path: &Path, input: &Path, seed: u64, out: &Path, paths: Option<&Path>) -> Res<Report> {
    let cfg: SampleConfig = config::load(path)?;
    let e = read_ensemble(input)?;
    if cfg.kernel.euler.grid != e.grid() {
        return Err(format!("kernel grid {:?} differs from ensemble grid {:?}", cfg.kernel.euler.grid, e.grid()).into());
    }
    let (bundle, laws) = sampler::rollout_paths(&e, &cfg.kernel, cfg.steps, seed)?;
    let times = (0..laws.len()).map(|j| j as f64 * cfg.kernel.step_dt).collect();
    io::write_law_curve(out, &LawCurve::new(times, laws)?)?;
    if let Some(dir) = paths {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut files = vec![];
        for i in 0..bundle.members() {
            let mut names = vec![];
            for (j, u) in bundle.path(i).into_iter().enumerate() {
                let name = format!("member{i:04}.node{j:04}.lbf");
                io::write_field(&dir.join(&name), u)?;
                names.push(name);
            }
            files.push(names);
        }
        let index =
            PathIndex { version: io::MANIFEST_VERSION, members: bundle.members(), times: bundle.times(), files };
        write(&dir.join("index.json"), &(serde_json::to_string_pretty(&index)? + "\n"))?;
    }
    let mut checks = vec![];
    let mut payload = json!({"junction_continuous": bundle.junction_continuity()});
    if bundle.junction_continuity() && bundle.times().len() >= 9 {
        let r = sampler::time_regularity_report(&bundle, 200, seed)?;
        checks.push(Check::new("increment_ratio", r.max_increment_ratio, 1.0, r.tolerance, r.increment_satisfied));
        checks.push(Check::new(
            "speed_over_chain",
            r.c_spd / (r.c_ch + r.c_str.sqrt()),
            1.0,
            r.tolerance,
            r.chain_satisfied,
        ));
        let h = sampler::holder_from_action_check(&bundle, 2.0)?;
        checks.push(Check::new("holder_ratio", h.max_ratio, 1.0, h.tolerance, h.satisfied));
        payload["regularity"] = serde_json::to_value(&r)?;
    }
    report("sample", &json!({"config": cfg, "seed": seed}), checks, &payload)
}

pub fn metrics(a: &Path, b: &Path, k: usize, ks: &[usize], sweep: Option<&Path>) -> Res<Report> {
    let (a, b) = (read_ensemble(a)?, read_ensemble(b)?);
    same_grid(&a, &b)?;
    let r = transport::capacity_coverage(&a, &b, k)?;
    let mut checks = vec![Check::new(
        "w2_over_bound",
        r.w2 / r.bound.max(f64::MIN_POSITIVE),
        1.0,
        transport::COVERAGE_SLACK,
        r.satisfied,
    )];
    if let Some(bl) = &r.band_limited {
        checks.push(Check::new(
            "band_limited.w2_over_bound",
            r.w2 / bl.bound.max(f64::MIN_POSITIVE),
            1.0,
            transport::COVERAGE_SLACK,
            bl.satisfied,
        ));
    }
    if let Some(path) = sweep {
        let mut csv = String::from("K,tail_a,train,bound,w2\n");
        for &kk in ks {
            let s = transport::capacity_coverage(&a, &b, kk)?;
            csv.push_str(&format!("{},{},{},{},{}\n", kk, s.tail_a, s.train_k, s.bound, s.w2));
            checks.push(Check::new(
                format!("sweep.K{kk}"),
                s.w2 / s.bound.max(f64::MIN_POSITIVE),
                1.0,
                transport::COVERAGE_SLACK,
                s.satisfied,
            ));
        }
        write(path, &csv)?;
    }
    report("metrics", &json!({"K": k, "sweep": ks}), checks, &r)
}

pub fn transport(a: &Path, b: &Path, p: u32, sinkhorn_eps: Option<f64>, curves: bool) -> Res<Report> {
    if curves {
        let (ca, cb) = (read_curve(a)?, read_curve(b)?);
        let w1 = transport::w1_per_time(&ca, &cb)?;
        let d_t = transport::d_t(&ca, &cb)?;
        let certified = ca
            .ensembles()
            .iter()
            .zip(cb.ensembles())
            .map(|(x, y)| Ok(transport::wasserstein_exact(x, y, 1)?.1.certified))
            .collect::<lawbound::Result<Vec<_>>>()?
            .into_iter()
            .all(|c| c);
        let checks = vec![Check::new("plans_certified", if certified { 0.0 } else { 1.0 }, 0.0, 0.0, certified)];
        return report(
            "transport",
            &json!({"curves": true}),
            checks,
            &json!({"times": ca.times(), "W1": w1, "d_T": d_t}),
        );
    }
    let (ea, eb) = (read_ensemble(a)?, read_ensemble(b)?);
    same_grid(&ea, &eb)?;
    let (w, plan) = transport::wasserstein_exact(&ea, &eb, p)?;
    let mut checks = vec![
        Check::new("dual_certificate", if plan.certified { 0.0 } else { 1.0 }, 0.0, 0.0, plan.certified),
        Check::at_most("marginal_error", plan.marginal_error(), 0.0, 1e-12),
    ];
    let mut payload = json!({"order": p, "W": w, "permutation": plan.permutation()});
    if let Some(eps) = sinkhorn_eps {
        let (s, sp) = transport::sinkhorn(&ea, &eb, eps, 20_000)?;
        checks.push(Check::at_least("entropic_over_exact", s / w.max(f64::MIN_POSITIVE), 1.0, 1e-9));
        checks.push(Check::at_most("entropic_marginal_error", sp.marginal_error(), 0.0, 1e-6));
        payload["sinkhorn"] = json!({"epsilon": eps, "W2": s});
    }
    report("transport", &json!({"order": p, "sinkhorn_eps": sinkhorn_eps}), checks, &payload)
}

pub fn stability(a: &Path, b: &Path, horizon: f64, dt: f64, checkpoints: usize) -> Res<Report> {
    let (a, b) = (read_ensemble(a)?, read_ensemble(b)?);
    same_grid(&a, &b)?;
    let r = euler::w2_strain_bound_check(&a, &b, &EulerConfig::new(a.grid(), dt), horizon, checkpoints)?;
    let checks = vec![
        Check::new("w2_over_bound", r.w2_t / r.w2_bound.max(f64::MIN_POSITIVE), 1.0, r.tolerance, r.w2_satisfied),
        Check::new(
            "moment_over_bound",
            r.moment_t / r.moment_bound.max(f64::MIN_POSITIVE),
            1.0,
            r.tolerance,
            r.moment_satisfied,
        ),
        Check::new(
            "pointwise_gronwall",
            if r.pointwise_satisfied { 0.0 } else { 1.0 },
            0.0,
            r.tolerance,
            r.pointwise_satisfied,
        ),
        Check::at_most(
            "lambda_over_max_strain",
            r.integral_lambda / r.integral_max_strain.max(f64::MIN_POSITIVE),
            1.0,
            1e-12,
        ),
    ];
    report("stability", &json!({"horizon": horizon, "dt": dt, "checkpoints": checkpoints}), checks, &r)
}

pub fn rollout(path: Option<&Path>, seed: u64, ledger: Option<&Path>) -> Res<Report> {
    let (a, b, cfg, hashed) = match path {
        None => {
            let (a, b, cfg) = suite::rollout_setup(64, seed)?;
            let hashed = json!({"builtin": cfg, "seed": seed});
            (a, b, cfg, hashed)
        }
        Some(p) => {
            let run: RolloutRun = config::load(p)?;
            let g = run.rollout.model.euler.grid;
            let exponent = fields::spectrum_exponent(run.s, g.d());
            let a = suite::divfree_ensemble(g, run.members, exponent, run.k_max, stream::stream_seed(seed, 0, 0))?;
            let b = suite::divfree_ensemble(g, run.members, exponent, run.k_max, stream::stream_seed(seed, 1, 0))?;
            let hashed = json!({"config": run, "seed": seed});
            (a, b, run.rollout, hashed)
        }
    };
    let r = rollout::run_rollout_experiment(&a, &b, &cfg, seed)?;
    if let Some(p) = ledger {
        write(p, &r.ledger.to_csv())?;
    }
    let last = r.ledger.rows.last().ok_or("empty ledger")?;
    let checks = vec![
        Check::new(
            "final_delta_over_bound",
            last.delta / last.bound.max(f64::MIN_POSITIVE),
            1.0,
            r.tolerance,
            r.final_satisfied,
        ),
        Check::new(
            "per_step_recursion",
            if r.per_step_satisfied { 0.0 } else { 1.0 },
            0.0,
            r.tolerance,
            r.per_step_satisfied,
        ),
        Check::at_least("steps_completed", r.steps_completed as f64, cfg.steps as f64, 0.0),
    ];
    report("rollout", &hashed, checks, &r)
}

pub fn certify(path: &Path, seed: u64) -> Res<Report> {
    let cfg: CertifyConfig = config::load(path)?;
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    if steps == 0 || (steps as f64 * cfg.dt - cfg.horizon).abs() > 1e-9 * cfg.horizon {
        return Err("T must be a positive multiple of dt".into());
    }
    let tt = TestTuple::random(cfg.grid, cfg.k, cfg.k_test, cfg.horizon, stream::stream_seed(seed, 1, 0))?;
    let mut forcing = GridField::zeros(cfg.grid, cfg.grid.d());
    for t in &tt.tests {
        forcing.add_scaled(1.0, t);
    }
    let drift = DriftSpec::new(cfg.k_res, cfg.epsilon, forcing, [1, 0])?;
    let e0 = suite::divfree_ensemble(cfg.grid, cfg.members, 2.0, 4, stream::stream_seed(seed, 0, 0))?;
    let curve = certify::drift_driven_curve(&e0, |u| drift.learned(u), cfg.dt, steps)?;
    let r = certify::residual_bound_check(&curve, &tt, &drift)?;
    let checks = vec![
        Check::at_most("route_gap", r.rel_gap, 0.0, 1e-5),
        Check::new(
            "residual_over_bound",
            r.residual_defect.abs() / r.bound.max(f64::MIN_POSITIVE),
            1.0,
            r.tolerance,
            r.satisfied,
        ),
    ];
    report("certify", &json!({"config": cfg, "seed": seed}), checks, &r)
}

fn matrix(rows: &[Vec<f64>], n: usize) -> Res<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(format!("expected a {n}×{n} matrix").into());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn testbed(cfg: &PfodeConfig) -> Res<GaussianDiffusion> {
    let Some(mean) = &cfg.mean0 else {
        return Ok(suite::gaussian_testbed(cfg.schedule.clone())?);
    };
    let n = mean.len();
    let (Some(cov), Some(a), Some(b)) = (&cfg.cov0, &cfg.score_matrix, &cfg.score_offset) else {
        return Err("mean0, cov0, score_matrix and score_offset must be given together".into());
    };
    if b.len() != n {
        return Err("score_offset length differs from mean0".into());
    }
    Ok(GaussianDiffusion::new(
        DVector::from_vec(mean.clone()),
        matrix(cov, n)?,
        cfg.schedule.clone(),
        matrix(a, n)?,
        DVector::from_vec(b.clone()),
    )?)
}

pub fn pfode(path: Option<&Path>, seed: u64) -> Res<Report> {
    let cfg = match path {
        Some(p) => config::load(p)?,
        None => PfodeConfig {
            version: config::CONFIG_VERSION,
            schedule: Schedule::VariancePreserving { beta_min: 0.1, beta_max: 5.0 },
            taus: (0..=8).map(|i| 0.125 * i as f64).collect(),
            c: 0.4,
            samples: 4096,
            rk4_steps: 8,
            mean0: None,
            cov0: None,
            score_matrix: None,
            score_offset: None,
        },
    };
    let r = certify::pf_identities(&testbed(&cfg)?, &cfg.taus, cfg.c, cfg.samples, cfg.rk4_steps, seed)?;
    let mut checks = vec![Check::at_most("identity_gap", r.max_gap, 0.0, r.identity_tolerance)];
    if !r.moments.is_empty() {
        let z = r.moments.iter().map(|m| m.mean_z.max(m.cov_z)).fold(0.0, f64::max);
        checks.push(Check::at_most("moment_z", z, 0.0, r.sigma_tolerance));
    }
    report("pfode", &json!({"config": cfg, "seed": seed}), checks, &r)
}

pub fn scores(a: &Path, b: &Path, observable: &Path, csv: Option<&Path>) -> Res<Report> {
    let (ca, cb) = (read_curve(a)?, read_curve(b)?);
    let cfg: ObservableConfig = config::load(observable)?;
    let g = ca.grid();
    let m = ca.ensembles()[0].m();
    let obs = match cfg.observable {
        Observable::Mollified { component, point, width } => {
            ResolvedObservable::mollified(g, m, component, point, width)?
        }
        Observable::Inner { k_test, seed } => ResolvedObservable::inner(fields::random_divfree(g, 0.0, k_test, seed)?)?,
    };
    let r = scores::crps_dt_check(&ca, &cb, &obs)?;
    if let Some(p) = csv {
        write(p, &r.to_csv())?;
    }
    let checks = vec![Check::new(
        "integrated_crps_over_bound",
        r.integrated_crps / r.bound.max(f64::MIN_POSITIVE),
        1.0,
        r.tolerance,
        r.satisfied,
    )];
    report("scores", &json!({"observable": cfg}), checks, &r)
}

pub fn verify_all(quick: bool, seed: u64, only: &[u8]) -> Res<Report> {
    let ids: Vec<u8> = if only.is_empty() { suite::CRITERIA.iter().map(|c| c.0).collect() } else { only.to_vec() };
    let variant = if quick { Variant::Quick } else { Variant::Full };
    let (results, report) = suite::run_suite(variant, seed, &ids)?;
    for r in &results {
        let verdict = if r.satisfied { "pass" } else { "FAIL" };
        eprintln!("criterion {:>2} [{verdict}] {}", r.id, r.title);
        if let Some(e) = &r.error {
            eprintln!("    error: {e}");
        }
    }
    eprintln!("workers: {}", par::threads());
    Ok(report)
}
