use std::f64::consts::PI;
use std::path::Path;

use almg_core::classical::{
    classical_spin, integrate_orbit, integrate_orbit_sampled, phase_space_grid,
    quantum_to_classical, ClassicalState,
};
use almg_core::dpt1::{AveragingWeights, FinalObservables};
use almg_core::gme::gme_expectation_energy_basis;
use almg_core::*;
use serde::Serialize;

use crate::config::{preset, Grid, RunConfig};
use crate::error::CliError;
use crate::output::{num, tag, write_json, CsvOut, Target};
use crate::{DoubletArgs, FlowArgs, OrbitArgs, RunArgs};

fn echo<T: Serialize>(args: &T) -> String {
    serde_json::to_string(args).expect("arguments serialize")
}

fn phase_label(phase: Option<Phase>) -> &'static str {
    phase.map_or("NA", Phase::label)
}

fn parity_label(p: Parity) -> &'static str {
    match p {
        Parity::Even => "1",
        Parity::Odd => "-1",
    }
}

pub fn spectrum_flow(args: &FlowArgs, out: Option<&Path>) -> Result<(), CliError> {
    for (flag, v) in [("--xi-min", args.xi_min), ("--xi-max", args.xi_max)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::usage(format!("{flag}: {v} is outside [0, 1]")));
        }
    }
    if args.xi_min > args.xi_max {
        return Err(CliError::usage("--xi-min: must not exceed --xi-max"));
    }
    if args.steps == 0 {
        return Err(CliError::usage("--steps: must be at least 1"));
    }
    if args.j2 == 0 {
        return Err(CliError::usage("--j2: must be positive"));
    }
    let grid: Vec<f64> = if args.steps == 1 {
        vec![args.xi_min]
    } else {
        (0..args.steps)
            .map(|i| args.xi_min + (args.xi_max - args.xi_min) * i as f64 / (args.steps - 1) as f64)
            .collect()
    };
    let rows = almg_core::spectrum_flow(args.j2, args.alpha, &grid)?;
    let target = Target::new(out, Some("csv"))?;
    let mut csv = CsvOut::create(&target.primary("spectrum_flow.csv"), &echo(args), &["xi", "n", "parity", "energy", "eps"])?;
    for r in rows {
        csv.row([num(r.xi), r.n.to_string(), parity_label(r.parity).into(), num(r.energy), num(r.eps)])?;
    }
    csv.finish()
}

pub fn doublets(args: &DoubletArgs, out: Option<&Path>) -> Result<(), CliError> {
    let eig = EigenSystem::new(ModelParams::new(args.xi, args.alpha, args.j2)?)?;
    let crit = critical_energies(&eig.params);
    let mut table = doublet_pairing(&eig, &crit)?;
    doublet_matrix_elements(&mut table, &ChargeSet::new(args.j2)?, &eig)?;
    let target = Target::new(out, Some("csv"))?;
    let header = ["eps_mean", "gap", "phase", "abs_cx", "abs_cy", "abs_kx", "abs_ky"];
    let mut csv = CsvOut::create(&target.primary("doublets.csv"), &echo(args), &header)?;
    for r in &table.rows {
        csv.row([
            num(r.eps_mean),
            num(r.gap),
            phase_label(r.phase).into(),
            num(r.abs_cx),
            num(r.abs_cy),
            num(r.abs_kx),
            num(r.abs_ky),
        ])?;
    }
    csv.finish()
}

/// Preset, then configuration file, then flags.
pub fn resolve(args: &RunArgs, config: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = match args.fig {
        Some(f) => preset(f)?,
        None => RunConfig::default(),
    };
    if let Some(path) = config {
        cfg = cfg.overlay(&RunConfig::load(path)?);
    }
    let mut flags = RunConfig {
        j2: args.j2,
        j_list: args.j_list.clone(),
        p: args.p,
        phi: args.phi,
        tau_int: args.tau_int,
        tau_fin: args.tau_fin,
        dt: args.dt,
        tau_grid: args.tau_grid.clone(),
        gme_width_sigmas: args.width_sigmas,
        precision: args.precision.clone(),
        ..RunConfig::default()
    };
    if let Some(state) = &args.state {
        let (p, phi) = if state == "s1" { (0.5, 1.5 * PI) } else { (1.0 / 3.0, 0.6 * PI) };
        flags.p = flags.p.or(Some(p));
        flags.phi = flags.phi.or(Some(phi));
    }
    for (pair, xi, alpha) in [
        (args.theta_ini, &mut flags.xi_ini, &mut flags.alpha_ini),
        (args.theta_int, &mut flags.xi_int, &mut flags.alpha_int),
        (args.theta_fin, &mut flags.xi_fin, &mut flags.alpha_fin),
    ] {
        if let Some((x, a)) = pair {
            *xi = Some(x);
            *alpha = Some(a);
        }
    }
    if args.t_max.is_some() || args.t_dt.is_some() {
        let (stop, step) = match &cfg.t_grid {
            Some(Grid::Range { stop, step, .. }) => (*stop, *step),
            _ => (50.0, 0.01),
        };
        flags.t_grid = Some(Grid::Range {
            start: 0.0,
            stop: args.t_max.unwrap_or(stop),
            step: args.t_dt.unwrap_or(step),
        });
    }
    Ok(cfg.overlay(&flags).with_defaults())
}

fn require_protocol(cfg: &RunConfig, size_from_list: bool) -> Result<(), CliError> {
    let missing = cfg.missing_protocol_fields(size_from_list);
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "missing required fields: {} (set them in --config, with flags, or use --fig)",
            missing.join(", ")
        )))
    }
}

fn protocol(cfg: &RunConfig) -> Result<Protocol, CliError> {
    require_protocol(cfg, false)?;
    let two_j = cfg.j2.expect("checked above");
    Ok(Protocol::new(cfg.protocol_spec(two_j)?)?)
}

fn times(cfg: &RunConfig, default: Grid) -> Result<Vec<f64>, CliError> {
    let t = cfg.t_grid.clone().unwrap_or(default).values("t_grid")?;
    if t.iter().any(|&x| x < 0.0) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::usage("t_grid: must be nonnegative and increasing"));
    }
    Ok(t)
}

fn failures_sidecar(target: &Target, name: &str, echo: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Ok(());
    }
    let mut csv = CsvOut::create(&target.join(name), echo, header)?;
    for r in rows {
        csv.row(r)?;
    }
    csv.finish()?;
    eprintln!("almg: {} item(s) failed, see {}", rows.len(), target.join(name).display());
    Ok(())
}

fn all_failed(done: usize, first: Option<&Vec<String>>) -> Result<(), CliError> {
    match (done, first) {
        (0, Some(f)) => Err(CliError::Numerical(format!("every item failed; first: {}", f.join(": ")))),
        _ => Ok(()),
    }
}

/// Classical samples at increasing `times` from `start`, NaN after a
/// failure.
fn classical_trace(start: &ClassicalState, params: &ModelParams, times: &[f64]) -> Vec<Option<ClassicalState>> {
    let mut state = Some(*start);
    let mut now = 0.0;
    times
        .iter()
        .map(|&t| {
            if let Some(s) = state {
                let span = t - now;
                if span > 0.0 {
                    let steps = (span / 1e-3).ceil().max(1.0);
                    state = integrate_orbit(&s, params, span, span / steps)
                        .ok()
                        .and_then(|o| o.last().map(|pt| ClassicalState { q: pt.q, p: pt.p }));
                }
                now = t;
            }
            state
        })
        .collect()
}

pub fn orbit(args: &OrbitArgs, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(&args.run, config)?;
    let xi = args.xi.or(cfg.xi_fin).unwrap_or(0.5);
    let alpha = args.alpha.or(cfg.alpha_fin).unwrap_or(-0.6);
    let params = ModelParams::new(xi, alpha, 2)?;
    let start = match (args.q, args.p) {
        (Some(q), Some(p)) => ClassicalState::new(q, p)?,
        (None, None) => {
            let protocol = protocol(&cfg)?;
            let tau = cfg
                .tau_int
                .ok_or_else(|| CliError::usage("missing required fields: tau_int (or give --q0 and --p0)"))?;
            quantum_to_classical(&protocol.state_at_tau(tau)?)?.state
        }
        _ => return Err(CliError::usage("--q0 and --p0 must be given together")),
    };
    #[derive(Serialize)]
    struct Echo<'a> {
        xi: f64,
        alpha: f64,
        q0: f64,
        p0: f64,
        #[serde(flatten)]
        args: &'a OrbitArgs,
    }
    let e = echo(&Echo {
        xi,
        alpha,
        q0: start.q,
        p0: start.p,
        args,
    });
    let target = Target::new(out, None)?;
    let orbit = integrate_orbit_sampled(&start, &params, args.t_end, args.h, args.stride)?;
    let mut csv = CsvOut::create(&target.join("orbit.csv"), &e, &["t", "Q", "P", "eps"])?;
    for pt in &orbit {
        csv.row([num(pt.t), num(pt.q), num(pt.p), num(pt.eps)])?;
    }
    csv.finish()?;
    if let Some(n) = args.contour {
        if n < 2 {
            return Err(CliError::usage("--contour: need at least 2 points per axis"));
        }
        let mut csv = CsvOut::create(&target.join("contour.csv"), &e, &["Q", "P", "eps"])?;
        for (q, p, eps) in phase_space_grid(&params, n, n) {
            csv.row([num(q), num(p), num(eps)])?;
        }
        csv.finish()?;
    }
    Ok(())
}

pub fn evolve(args: &RunArgs, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(args, config)?;
    let protocol = protocol(&cfg)?;
    let taus = cfg.taus()?;
    let times = times(
        &cfg,
        Grid::Range {
            start: 0.0,
            stop: 20.0,
            step: 0.05,
        },
    )?;
    let fin = &protocol.fin;
    let charges = ChargeSet::new(fin.params.two_j())?;
    let obs = FinalObservables::new(fin, &charges)?;
    let crit = critical_energies(&fin.params);
    let j = fin.params.j();
    let target = Target::new(out, None)?;
    let e = cfg.echo();
    for tau in taus {
        let run = protocol.quench(tau)?;
        let classical: Vec<Option<ClassicalState>> = match quantum_to_classical(&run.psi_tau) {
            Ok(img) => classical_trace(&img.state, &fin.params, &times),
            Err(_) => vec![None; times.len()],
        };
        let header = ["t", "jx", "jy", "jz", "jx_classical", "jy_classical"];
        let mut csv = CsvOut::create(&target.join(&format!("evolution_tau{}.csv", tag(tau))), &e, &header)?;
        for (&t, cl) in times.iter().zip(&classical) {
            let c = fin.propagate_coefficients(&run.overlaps, t);
            let [cx, cy] = cl.map_or([f64::NAN; 2], |s| {
                let v = classical_spin(&s, j);
                [v[0], v[1]]
            });
            csv.row([
                num(t),
                num(obs.jx.expectation(&c)?),
                num(obs.jy.expectation(&c)?),
                num(obs.jz.expectation(&c)?),
                num(cx),
                num(cy),
            ])?;
        }
        csv.finish()?;
        write_ldos(&target.join(&format!("ldos_tau{}.csv", tag(tau))), &e, &run.ldos(&crit)?)?;
    }
    Ok(())
}

fn write_ldos(path: &Path, echo: &str, l: &Ldos) -> Result<(), CliError> {
    let mut csv = CsvOut::create(path, echo, &["eps", "weight", "parity", "phase"])?;
    for lv in &l.levels {
        csv.row([num(lv.eps), num(lv.weight), parity_label(lv.parity).into(), phase_label(lv.phase).into()])?;
    }
    csv.finish()
}

pub fn scan(args: &RunArgs, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(args, config)?;
    require_protocol(&cfg, false)?;
    let taus = match &cfg.tau_grid {
        Some(g) => g.values("tau_grid")?,
        None => return Err(CliError::usage("missing required fields: tau_grid")),
    };
    let protocol = protocol(&cfg)?;
    let opts = ScanOptions {
        tau_fin: cfg.tau_fin.unwrap_or(2000.0),
        dt: cfg.dt.unwrap_or(0.1),
        gme_width_sigmas: cfg.gme_width_sigmas.unwrap_or(2.0),
    };
    let result = tau_scan(&protocol, &taus, &opts)?;
    let target = Target::new(out, Some("csv"))?;
    let e = cfg.echo();
    let header = [
        "tau_int", "eps_mean", "sigma_eps", "jx", "jy", "jz", "cx", "cy", "kx", "ky", "gme_jx", "gme_jy", "gme_jz",
        "occ_I", "occ_II", "occ_III",
    ];
    let mut csv = CsvOut::create(&target.primary("scan.csv"), &e, &header)?;
    for r in &result.rows {
        let v = [
            r.tau_int,
            r.eps_mean,
            r.sigma_eps,
            r.jx,
            r.jy,
            r.jz,
            r.cx,
            r.cy,
            r.kx,
            r.ky,
            r.gme_jx,
            r.gme_jy,
            r.gme_jz,
            r.occupation[0],
            r.occupation[1],
            r.occupation[2],
        ];
        csv.row(v.iter().map(|&x| num(x)))?;
    }
    csv.finish()?;
    let failed: Vec<Vec<String>> = result
        .failures
        .iter()
        .map(|f| vec![num(f.tau_int), f.message.clone()])
        .collect();
    failures_sidecar(&target, "scan_failures.csv", &e, &["tau_int", "message"], &failed)?;
    all_failed(result.rows.len(), failed.first())
}

#[derive(Serialize)]
struct Prediction {
    gme: f64,
    time_average: f64,
}

#[derive(Serialize)]
struct GmeReport {
    tau_int: f64,
    window: (f64, f64),
    mean_eps: f64,
    sigma_eps: f64,
    delta_eps: f64,
    n_i: usize,
    n_ii: usize,
    n_iii: usize,
    weight_i: f64,
    weight_iii: f64,
    p: f64,
    c_x: f64,
    k_x: f64,
    c_y: f64,
    k_y: f64,
    measured: TildeCharges,
    inconsistent: bool,
    physical: bool,
    jx: Prediction,
    jy: Prediction,
    jz: Prediction,
}

#[derive(Serialize)]
struct GmeFailure {
    tau_int: f64,
    message: String,
}

pub fn gme(args: &RunArgs, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(args, config)?;
    let protocol = protocol(&cfg)?;
    let taus = cfg.taus()?;
    let fin = &protocol.fin;
    let charges = ChargeSet::new(fin.params.two_j())?;
    let obs = FinalObservables::new(fin, &charges)?;
    let crit = critical_energies(&fin.params);
    let table = doublet_pairing(fin, &crit)?;
    let (tau_fin, dt) = (cfg.tau_fin.unwrap_or(2000.0), cfg.dt.unwrap_or(0.1));
    let width = cfg.gme_width_sigmas.unwrap_or(2.0);

    let one = |tau: f64| -> Result<GmeReport, CliError> {
        let run = protocol.quench(tau)?;
        let ens = build_gme(&run.overlaps, fin, &charges, &table, &crit, width)?;
        let w = AveragingWeights::finite_horizon(&run.overlaps, fin, tau_fin, dt)?;
        let pred = |op: &BlockOp| -> Result<Prediction, CliError> {
            Ok(Prediction {
                gme: gme_expectation_energy_basis(&ens, op)?,
                time_average: w.average(op)?,
            })
        };
        Ok(GmeReport {
            tau_int: tau,
            window: ens.window,
            mean_eps: ens.mean_eps,
            sigma_eps: ens.sigma_eps,
            delta_eps: ens.delta_eps,
            n_i: ens.n_i,
            n_ii: ens.n_ii,
            n_iii: ens.n_iii,
            weight_i: ens.weight_i,
            weight_iii: ens.weight_iii,
            p: ens.p,
            c_x: ens.c_x,
            k_x: ens.k_x,
            c_y: ens.c_y,
            k_y: ens.k_y,
            measured: ens.measured,
            inconsistent: ens.inconsistent,
            physical: ens.physical,
            jx: pred(&obs.jx)?,
            jy: pred(&obs.jy)?,
            jz: pred(&obs.jz)?,
        })
    };
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for tau in taus {
        match one(tau) {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(GmeFailure {
                tau_int: tau,
                message: e.to_string(),
            }),
        }
    }
    #[derive(Serialize)]
    struct Document<'a> {
        config: &'a RunConfig,
        reports: Vec<GmeReport>,
        failures: &'a [GmeFailure],
    }
    let target = Target::new(out, Some("json"))?;
    let done = reports.len();
    write_json(
        &target.primary("gme.json"),
        &Document {
            config: &cfg,
            reports,
            failures: &failures,
        },
    )?;
    let rows: Vec<Vec<String>> = failures.iter().map(|f| vec![num(f.tau_int), f.message.clone()]).collect();
    failures_sidecar(&target, "gme_failures.csv", &cfg.echo(), &["tau_int", "message"], &rows)?;
    all_failed(done, rows.first())
}

pub fn dpt2(args: &RunArgs, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = resolve(args, config)?;
    require_protocol(&cfg, true)?;
    let sizes = cfg.sizes()?;
    let taus = cfg.taus()?;
    let precision = cfg.precision()?;
    let times = times(
        &cfg,
        Grid::Range {
            start: 0.0,
            stop: 50.0,
            step: 0.01,
        },
    )?;
    let kink_factor = cfg.kink_factor.unwrap_or(10.0);
    let threshold = cfg.separation_threshold.unwrap_or(0.01);
    let target = Target::new(out, None)?;
    let e = cfg.echo();

    let summary_header = [
        "j",
        "tau_int",
        "bits",
        "peak_rate_pprp",
        "max_rate_split",
        "separation_t",
        "first_kink_t",
        "unresolved",
    ];
    let mut summary = CsvOut::create(&target.join("dpt2_summary.csv"), &e, &summary_header)?;
    let mut failed: Vec<Vec<String>> = Vec::new();
    let mut done = 0;
    for two_j in sizes {
        let j = two_j as f64 / 2.0;
        let protocol = match cfg.protocol_spec(two_j).and_then(|s| Ok(Protocol::new(s)?)) {
            Ok(p) => p,
            Err(err) => {
                for &tau in &taus {
                    failed.push(vec![num(j), num(tau), err.to_string()]);
                }
                continue;
            }
        };
        let crit = critical_energies(&protocol.fin.params);
        for &tau in &taus {
            let rs = match rate_series(&protocol, tau, &times, precision) {
                Ok(rs) => rs,
                Err(err) => {
                    failed.push(vec![num(j), num(tau), err.to_string()]);
                    continue;
                }
            };
            let stem = format!("j{}_tau{}", tag(j), tag(tau));
            let header = ["t", "sp", "pprp", "pprp_plus", "pprp_minus", "rate_sp", "rate_pprp", "drate_pprp"];
            let mut csv = CsvOut::create(&target.join(&format!("dpt2_{stem}.csv")), &e, &header)?;
            for i in 0..rs.times.len() {
                let v = [
                    rs.times[i],
                    rs.sp[i],
                    rs.pprp.total[i],
                    rs.pprp.plus[i],
                    rs.pprp.minus[i],
                    rs.rate_sp.values[i],
                    rs.rate_pprp.values[i],
                    rs.drate_pprp[i],
                ];
                csv.row(v.iter().map(|&x| num(x)))?;
            }
            csv.finish()?;
            write_ldos(&target.join(&format!("ldos_{stem}.csv")), &e, &protocol.quench(tau)?.ldos(&crit)?)?;

            let split = rs
                .rate_sp
                .values
                .iter()
                .zip(&rs.rate_pprp.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let sep = separation_time(&rs.times, &rs.rate_sp.values, &rs.rate_pprp.values, threshold);
            let kink = first_kink(&rs.rate_pprp.values, kink_factor).map(|i| rs.times[i]);
            summary.row([
                num(j),
                num(tau),
                rs.bits.to_string(),
                num(rs.peak_rate_pprp()),
                num(split),
                num(sep.unwrap_or(f64::NAN)),
                num(kink.unwrap_or(f64::NAN)),
                rs.rate_pprp.underflow.len().to_string(),
            ])?;
            done += 1;
        }
    }
    summary.finish()?;
    failures_sidecar(&target, "dpt2_failures.csv", &e, &["j", "tau_int", "message"], &failed)?;
    all_failed(done, failed.first())
}

#[cfg(test)]
mod tests {
    use super::*;
    use almg_core::classical::classical_energy;

    #[test]
    fn flags_override_preset() {
        let args = RunArgs {
            fig: Some(7),
            j_list: Some(vec![10.0]),
            theta_fin: Some((0.4, -0.5)),
            t_max: Some(5.0),
            ..RunArgs::default()
        };
        let cfg = resolve(&args, None).unwrap();
        assert_eq!(cfg.j_list, Some(vec![10.0]));
        assert_eq!((cfg.xi_fin, cfg.alpha_fin), (Some(0.4), Some(-0.5)));
        assert_eq!(
            cfg.t_grid,
            Some(Grid::Range {
                start: 0.0,
                stop: 5.0,
                step: 0.01
            })
        );
        assert_eq!(cfg.tau_fin, Some(2000.0));
    }

    #[test]
    fn state_flag_sets_superposition() {
        let args = RunArgs {
            state: Some("s2".into()),
            ..RunArgs::default()
        };
        let cfg = resolve(&args, None).unwrap();
        assert_eq!(cfg.p, Some(1.0 / 3.0));
        assert!((cfg.phi.unwrap() - 0.6 * PI).abs() < 1e-15);
    }

    #[test]
    fn classical_trace_matches_direct_integration() {
        let params = ModelParams::new(0.5, -0.6, 2).unwrap();
        let s = ClassicalState::new(0.2, -0.9).unwrap();
        let trace = classical_trace(&s, &params, &[0.0, 0.5, 1.0]);
        let direct = integrate_orbit(&s, &params, 1.0, 1e-3).unwrap();
        let last = direct.last().unwrap();
        let got = trace[2].unwrap();
        assert!((got.q - last.q).abs() < 1e-12 && (got.p - last.p).abs() < 1e-12);
        assert_eq!(trace[0], Some(s));
        let e0 = classical_energy(&s, &params).unwrap();
        assert!((classical_energy(&got, &params).unwrap() - e0).abs() < 1e-10);
    }
}
