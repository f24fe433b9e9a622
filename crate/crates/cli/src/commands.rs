use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lpr_core::connection::GeometryCache;
use lpr_core::dynamics::{compare_trajectories, integrate, ComparisonReport, Mode, Trajectory, TrajectoryStates};
use lpr_core::gauge::{from_bundle, to_bundle};
use lpr_core::linalg::{Mat, Tensor3, Vector};
use lpr_core::systems::{load_system, InitialConfig, LoadReport, SystemConfig};
use lpr_core::verify::{is_abelian, run_checks, Bound, Criterion, Tolerances, VerifyOptions, VerifyReport};
use lpr_core::MechanicalSystem;
use serde::Serialize;

use crate::args::{
    CompareArgs, Format, InitialArgs, InspectArgs, IntegrationArgs, SimulateArgs, SystemArgs, VerifyArgs, VERSION,
};
use crate::error::{CliError, CliResult, Status};
use crate::manifest::{CheckStatus, RunManifest, RunSettings};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "verify_report.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const INSPECT_FILE: &str = "inspect.json";

fn read_config(args: &SystemArgs) -> CliResult<SystemConfig> {
    match (&args.system, &args.config) {
        (Some(kind), None) => Ok(SystemConfig::builtin(*kind)),
        (None, Some(path)) => {
            let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(SystemConfig::from_toml(&src)?)
        }
        _ => Err(CliError::Usage("exactly one of --system or --config is required".into())),
    }
}

/// Loads the system and pins the initial state into the config echo.
fn prepare(args: &SystemArgs, initial: &InitialArgs) -> CliResult<(SystemConfig, MechanicalSystem, LoadReport)> {
    let mut config = read_config(args)?;
    let base = config.initial_state()?;
    let pick = |flag: &Option<Vec<f64>>, default: &Vector| flag.clone().unwrap_or_else(|| default.as_slice().to_vec());
    config.initial = Some(InitialConfig {
        q: pick(&initial.q, &base.q),
        f: pick(&initial.f, &base.f),
        q_dot: pick(&initial.q_dot, &base.q_dot),
        f_dot: pick(&initial.f_dot, &base.f_dot),
    });
    config.initial_state()?;
    let (sys, load) = load_system(&config)?;
    Ok((config, sys, load))
}

fn tolerances(scale: f64) -> CliResult<Tolerances> {
    Ok(Tolerances::default().scaled(scale)?)
}

fn check_integration(i: &IntegrationArgs) -> CliResult<()> {
    if !(i.dt > 0.0 && i.dt.is_finite()) {
        return Err(CliError::Usage(format!("--dt must be positive, got {}", i.dt)));
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).map_err(|e| CliError::io(path, e))
}

fn load_statuses(load: &LoadReport) -> Vec<CheckStatus> {
    load.checks
        .iter()
        .map(|c| CheckStatus {
            name: format!("load: {}", c.name),
            passed: c.residual <= c.tolerance,
        })
        .collect()
}

fn drift(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut worst = 0.0_f64;
    for v in values {
        let v0 = *first.get_or_insert(v);
        worst = worst.max((v - v0).abs());
    }
    worst
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn fmt_float(x: f64) -> String {
    format!("{x:e}")
}

/// CSV with header `t`, state components, diagnostics.
pub fn write_trajectory_csv<W: Write>(sys: &MechanicalSystem, traj: &Trajectory, out: W) -> CliResult<()> {
    let (np, nv, ng) = sys.dims();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["t".into()];
    match &traj.states {
        TrajectoryStates::Reduced(_) => {
            header.extend(numbered("q_star", np));
            header.extend(numbered("f_tilde", nv));
            header.extend(numbered("a", ng));
            header.extend(numbered("omega_A", np));
            header.extend(numbered("omega_p", nv));
            header.extend(numbered("omega_alpha", ng));
        }
        TrajectoryStates::Original(_) => {
            header.extend(numbered("q", np));
            header.extend(numbered("f", nv));
            header.extend(numbered("q_dot", np));
            header.extend(numbered("f_dot", nv));
        }
    }
    header.extend(["energy".into(), "slice_residual".into(), "slice_drift".into()]);
    header.extend(numbered("momentum", ng));
    header.push("implicit_residual".into());
    w.write_record(&header)?;

    for (i, t) in traj.times.iter().enumerate() {
        let mut row: Vec<f64> = vec![*t];
        match &traj.states {
            TrajectoryStates::Reduced(s) => {
                let b = &s[i];
                for v in [
                    &b.point.q_star,
                    &b.point.f_tilde,
                    &b.point.a,
                    &b.omega.omega_p,
                    &b.omega.omega_f,
                    &b.omega.omega_g,
                ] {
                    row.extend(v.iter());
                }
            }
            TrajectoryStates::Original(s) => {
                let a = &s[i];
                for v in [&a.q, &a.f, &a.q_dot, &a.f_dot] {
                    row.extend(v.iter());
                }
            }
        }
        let d = &traj.diagnostics[i];
        row.extend([d.energy, d.slice_residual, d.slice_drift]);
        row.extend(d.vertical_momentum.iter());
        row.push(d.implicit_residual);
        w.write_record(row.into_iter().map(fmt_float))?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))?;
    Ok(())
}

/// A started run: on every exit path the manifest is written to `dir`.
struct Run {
    start: Instant,
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn begin(
        command: &str,
        dir: &Path,
        config: SystemConfig,
        load: &LoadReport,
        seed: Option<u64>,
        settings: RunSettings,
        tolerances: Tolerances,
    ) -> CliResult<Self> {
        ensure_dir(dir)?;
        Ok(Run {
            start: Instant::now(),
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                config,
                seed,
                settings,
                tolerances,
                version: VERSION.into(),
                wall_clock_seconds: 0.0,
                checks: load_statuses(load),
                passed: false,
                error: None,
                outputs: Vec::new(),
            },
        })
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.into());
        self.dir.join(name)
    }

    fn check(&mut self, name: &str, passed: bool) {
        self.manifest.checks.push(CheckStatus {
            name: name.into(),
            passed,
        });
    }

    fn write(mut self, error: Option<String>) -> CliResult<()> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.passed = error.is_none() && self.manifest.checks.iter().all(|c| c.passed);
        self.manifest.error = error;
        self.manifest.write(&self.dir)
    }

    /// Runs `body`, then records its outcome in the manifest.
    fn finish<F>(mut self, body: F) -> CliResult<Status>
    where
        F: FnOnce(&mut Run) -> CliResult<Status>,
    {
        match body(&mut self) {
            Ok(status) => {
                let passed = self.manifest.checks.iter().all(|c| c.passed);
                self.write(None)?;
                Ok(match status {
                    Status::Success if !passed => Status::ToleranceBreach,
                    other => other,
                })
            }
            Err(e) => {
                self.write(Some(e.to_string()))?;
                Err(e)
            }
        }
    }
}

fn settings(mode: Option<Mode>, integration: Option<&IntegrationArgs>, tol_scale: f64) -> RunSettings {
    RunSettings {
        mode,
        dt: integration.map(|i| i.dt),
        steps: integration.map(|i| i.steps),
        tol_scale,
        checks: Vec::new(),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Status> {
    check_integration(&args.integration)?;
    let tol = tolerances(args.tolerance.tol_scale)?;
    let (config, sys, load) = prepare(&args.system, &args.initial)?;
    let initial = config.initial_state()?;
    let set = settings(Some(args.mode), Some(&args.integration), args.tolerance.tol_scale);
    let run = Run::begin("simulate", &args.output.out, config, &load, None, set, tol.clone())?;
    run.finish(|run| {
        let (dt, steps) = (args.integration.dt, args.integration.steps);
        let traj = integrate(&sys, &initial, dt, steps, args.mode)?;
        let path = run.output(TRAJECTORY_FILE);
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_trajectory_csv(&sys, &traj, std::io::BufWriter::new(file))?;

        let energy = drift(traj.diagnostics.iter().map(|d| d.energy));
        let slice = traj.diagnostics.iter().map(|d| d.slice_residual).fold(0.0, f64::max);
        run.check("energy drift", energy <= tol.energy_drift);
        run.check("slice residual", slice <= tol.slice_residual);
        println!(
            "{} {}: {steps} steps, energy drift {energy:.3e}, max slice residual {slice:.3e}",
            sys.name, args.mode
        );
        Ok(Status::Success)
    })
}

fn worst_measurement(r: &lpr_core::verify::CheckResult) -> String {
    if let Some(f) = &r.failure {
        return format!("error: {}", f.message);
    }
    let gated = r
        .measurements
        .iter()
        .filter(|m| !matches!(m.bound, Bound::Info))
        .max_by(|a, b| {
            let ratio = |m: &lpr_core::verify::Measurement| match m.bound {
                Bound::AtMost(t) => m.value / t,
                Bound::AtLeast(t) => t / m.value,
                Bound::Info => 0.0,
            };
            ratio(a).total_cmp(&ratio(b))
        });
    match gated {
        Some(m) => {
            let (op, t) = match m.bound {
                Bound::AtMost(t) => ("<=", t),
                Bound::AtLeast(t) => (">=", t),
                Bound::Info => ("", 0.0),
            };
            format!("{}: {:.3e} (need {op} {t:.1e})", m.name, m.value)
        }
        None => "no gated measurements".into(),
    }
}

pub fn print_summary(report: &VerifyReport) {
    println!("verify {} (seed {})", report.system, report.options.seed);
    println!("{:>2}  {:<26} {:<6} worst", "#", "check", "status");
    for r in &report.results {
        println!(
            "{:>2}  {:<26} {:<6} {}",
            r.number,
            r.criterion.name(),
            if r.passed { "PASS" } else { "FAIL" },
            worst_measurement(r)
        );
    }
    println!("overall: {}", if report.passed { "PASS" } else { "FAIL" });
}

pub fn verify(args: &VerifyArgs) -> CliResult<Status> {
    check_integration(&args.integration)?;
    let tol = tolerances(args.tolerance.tol_scale)?;
    let (config, sys, load) = prepare(&args.system, &InitialArgs::default())?;
    let initial = config.initial_state()?;
    let mut set = settings(None, Some(&args.integration), args.tolerance.tol_scale);
    set.checks = args.checks.clone();
    let run = Run::begin("verify", &args.output.out, config, &load, Some(args.seed), set, tol.clone())?;
    run.finish(|run| {
        let opts = VerifyOptions {
            seed: args.seed,
            dt: args.integration.dt,
            steps: args.integration.steps,
            tolerances: tol,
            ..VerifyOptions::default()
        };
        let criteria: Vec<Criterion> = if args.checks.is_empty() {
            Criterion::ALL.to_vec()
        } else {
            args.checks.clone()
        };
        let report = run_checks(&sys, &initial, &criteria, &opts);
        write_json(&run.output(REPORT_FILE), &report)?;
        print_summary(&report);
        for r in &report.results {
            if let Some(f) = &r.failure {
                eprintln!("check {} failed: {}", r.criterion, f.message);
            }
            run.check(r.criterion.name(), r.passed);
        }
        Ok(if report.has_numerical_failure() {
            Status::Numerical
        } else {
            Status::Success
        })
    })
}

#[derive(Debug, Serialize)]
pub struct ComparisonOutput {
    pub system: String,
    pub dt: f64,
    pub steps: usize,
    pub deviation: ComparisonReport,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn compare(args: &CompareArgs) -> CliResult<Status> {
    check_integration(&args.integration)?;
    let tol = tolerances(args.tolerance.tol_scale)?;
    let (config, sys, load) = prepare(&args.system, &args.initial)?;
    let initial = config.initial_state()?;
    let set = settings(None, Some(&args.integration), args.tolerance.tol_scale);
    let run = Run::begin("compare", &args.output.out, config, &load, None, set, tol.clone())?;
    run.finish(|run| {
        let (dt, steps) = (args.integration.dt, args.integration.steps);
        let reduced = integrate(&sys, &initial, dt, steps, Mode::Reduced)?;
        let original = integrate(&sys, &initial, dt, steps, Mode::Original)?;
        let deviation = compare_trajectories(&sys, &reduced, &original)?;
        let bound = if is_abelian(&sys) {
            tol.deviation_abelian
        } else {
            tol.deviation_nonabelian
        };
        let max = deviation.max_deviation();
        let out = ComparisonOutput {
            system: sys.name.clone(),
            dt,
            steps,
            max_deviation: max,
            tolerance: bound,
            passed: max <= bound,
            deviation: deviation.clone(),
        };
        write_json(&run.output(COMPARISON_FILE), &out)?;

        println!("reduced vs chart-mapped original, {} samples", deviation.samples);
        println!("{:<20} sup-norm deviation", "component");
        for (name, v) in [
            ("Q*", deviation.q_star),
            ("f~", deviation.f_tilde),
            ("a", deviation.a),
            ("omega horizontal", deviation.omega_horizontal),
            ("omega vertical", deviation.omega_vertical),
        ] {
            println!("{name:<20} {v:.3e}");
        }
        println!(
            "{:<20} {max:.3e} (tolerance {bound:.1e}) {}",
            "max",
            if out.passed { "PASS" } else { "FAIL" }
        );
        run.check("reduction equivalence", out.passed);
        Ok(Status::Success)
    })
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn slabs(t: &Tensor3) -> Vec<Rows> {
    (0..t.dims()[0]).map(|i| rows(&t.slab(i))).collect()
}

/// Every geometric object at one bundle point. Matrices are row-major
/// nested arrays; tensors are indexed `[upper][lower1][lower2]`.
#[derive(Debug, Serialize)]
pub struct GeometryReport {
    pub system: String,
    pub dims: [usize; 3],
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    pub q_star: Vec<f64>,
    pub f_tilde: Vec<f64>,
    pub a: Vec<f64>,
    pub chi: Vec<f64>,
    pub faddeev_popov: Rows,
    pub lambda: Rows,
    pub n: Rows,
    pub p_perp: Rows,
    pub killing: Rows,
    pub gamma: Rows,
    pub gamma_prime: Rows,
    pub d: Rows,
    pub d_inv: Rows,
    pub connection: Rows,
    pub connection_tilde: Rows,
    pub pi: Rows,
    pub horizontal_metric: Rows,
    pub horizontal_metric_pinv: Rows,
    pub d_tilde: Rows,
    pub bundle_metric: Rows,
    pub bundle_metric_pinv: Rows,
    pub frame: Rows,
    pub rho: Rows,
    pub u: Rows,
    pub v: Rows,
    pub c_t_ab: Vec<Rows>,
    pub c_p_ab: Vec<Rows>,
    pub c_alpha_ab: Vec<Rows>,
    pub c_m_ap: Vec<Rows>,
    pub c_alpha_ap: Vec<Rows>,
    pub c_alpha_pq: Vec<Rows>,
    pub curvature: Vec<Rows>,
    pub curvature_tilde: Vec<Rows>,
}

pub fn geometry_report(sys: &MechanicalSystem, cache: &GeometryCache) -> CliResult<GeometryReport> {
    let b = &cache.point;
    let (q, f) = from_bundle(sys, b)?;
    let geo = &cache.geo;
    let s = &cache.structure;
    let (np, nv, ng) = sys.dims();
    Ok(GeometryReport {
        system: sys.name.clone(),
        dims: [np, nv, ng],
        q: q.as_slice().to_vec(),
        f: f.as_slice().to_vec(),
        q_star: b.q_star.as_slice().to_vec(),
        f_tilde: b.f_tilde.as_slice().to_vec(),
        a: b.a.as_slice().to_vec(),
        chi: sys.gauge.chi(&b.q_star).as_slice().to_vec(),
        faddeev_popov: rows(&geo.proj.fp),
        lambda: rows(&geo.proj.lambda),
        n: rows(&geo.proj.n),
        p_perp: rows(&geo.proj.p_perp),
        killing: rows(&geo.k_tilde),
        gamma: rows(&geo.gamma),
        gamma_prime: rows(&geo.gamma_prime),
        d: rows(&geo.d),
        d_inv: rows(&geo.d_inv),
        connection: rows(&geo.conn),
        connection_tilde: rows(&cache.conn_tilde),
        pi: rows(&geo.pi),
        horizontal_metric: rows(&geo.gh),
        horizontal_metric_pinv: rows(&geo.gh_pinv),
        d_tilde: rows(&cache.d_tilde),
        bundle_metric: rows(&cache.bundle_metric()),
        bundle_metric_pinv: rows(&cache.bundle_metric_pinv()),
        frame: rows(&cache.frame_matrix()),
        rho: rows(&cache.rho),
        u: rows(&cache.u),
        v: rows(&cache.v),
        c_t_ab: slabs(&s.c_t_ab),
        c_p_ab: slabs(&s.c_p_ab),
        c_alpha_ab: slabs(&s.c_alpha_ab),
        c_m_ap: slabs(&s.c_m_ap),
        c_alpha_ap: slabs(&s.c_alpha_ap),
        c_alpha_pq: slabs(&s.c_alpha_pq),
        curvature: slabs(&s.curvature),
        curvature_tilde: slabs(&s.curvature_tilde),
    })
}

/// `key: value` lines, one per top-level field, full precision.
fn as_text(report: &GeometryReport) -> CliResult<String> {
    let value = serde_json::to_value(report)?;
    let mut out = String::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            out.push_str(&format!("{k}: {v}\n"));
        }
    }
    Ok(out)
}

pub fn inspect(args: &InspectArgs) -> CliResult<Status> {
    let initial = InitialArgs {
        q: args.q.clone(),
        f: args.f.clone(),
        ..InitialArgs::default()
    };
    let (config, sys, load) = prepare(&args.system, &initial)?;
    let state = config.initial_state()?;
    let set = settings(None, None, 1.0);
    let run = Run::begin("inspect", &args.output.out, config, &load, None, set, Tolerances::default())?;
    run.finish(|run| {
        let mut point = to_bundle(&sys, &state.q, &state.f, None)?;
        if let Some(a) = &args.a {
            let a = Vector::from_row_slice(a);
            if a.len() != point.a.len() || !sys.action.group().contains(&a) {
                return Err(CliError::Usage(format!(
                    "--a must be {} group coordinates inside the chart",
                    point.a.len()
                )));
            }
            point.a = a;
        }
        let cache = GeometryCache::at(&sys, &point)?;
        let report = geometry_report(&sys, &cache)?;
        write_json(&run.output(INSPECT_FILE), &report)?;
        match args.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            Format::Text => print!("{}", as_text(&report)?),
        }
        Ok(Status::Success)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lpr_core::systems::{builtin, BuiltinKind};

    #[test]
    fn drift_is_measured_from_first_value() {
        assert_eq!(drift([1.0, 1.5, 0.25].into_iter()), 0.75);
        assert_eq!(drift(std::iter::empty()), 0.0);
    }

    #[test]
    fn csv_header_matches_row_width() {
        let sys = builtin(BuiltinKind::Su2Quaternion).unwrap();
        let init = SystemConfig::builtin(BuiltinKind::Su2Quaternion).initial_state().unwrap();
        for mode in [Mode::Reduced, Mode::Original] {
            let traj = integrate(&sys, &init, 1e-3, 3, mode).unwrap();
            let mut buf = Vec::new();
            write_trajectory_csv(&sys, &traj, &mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines.len(), 5);
            let width = lines[0].split(',').count();
            assert!(lines.iter().all(|l| l.split(',').count() == width));
            assert!(lines[0].starts_with("t,"));
            let t: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
            assert_eq!(t, 1e-3);
        }
    }

    #[test]
    fn geometry_report_has_consistent_shapes() {
        let sys = builtin(BuiltinKind::Su2Quaternion).unwrap();
        let init = SystemConfig::builtin(BuiltinKind::Su2Quaternion).initial_state().unwrap();
        let b = to_bundle(&sys, &init.q, &init.f, None).unwrap();
        let cache = GeometryCache::at(&sys, &b).unwrap();
        let r = geometry_report(&sys, &cache).unwrap();
        assert_eq!(r.n.len(), 8);
        assert_eq!(r.frame.len(), 11);
        assert_eq!(r.c_alpha_pq.len(), 3);
        assert!(r.chi.iter().all(|x| x.abs() < 1e-10));
        assert!(as_text(&r).unwrap().lines().any(|l| l.starts_with("horizontal_metric: [[")));
    }
}
