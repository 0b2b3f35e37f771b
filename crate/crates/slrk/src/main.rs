use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use slrk::format::{parse_tableau, serialize_tableau};
use slrk::manifest::{manifest_path_for, RunManifest};
use slrk::navier_stokes::{convergence_study, enstrophy, NsRun};
use slrk::search::{multi_start_search, rationalize, SearchConfig, SearchStatus};
use slrk_core::integrator::{integrate, StepPlan};
use slrk_core::linop::LinearOperator;
use slrk_core::order_conditions::{order_residuals, verified_order};
use slrk_core::stability::{real_axis_boundary, region_boundary, stability_polynomial};
use slrk_core::tableau::{builtin, rk4_tableau, rk6_tableau, BUILTIN_NAMES};
use slrk_core::{Rational, Tableau};

/// Overrides the worker thread count.
const THREADS_ENV: &str = "SLRK_THREADS";

#[derive(Parser)]
#[command(name = "slrk", version, about = "Simple Lawson Runge-Kutta toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the order conditions of a tableau exactly.
    Verify {
        /// Tableau file, or `builtin:NAME`.
        #[arg(long)]
        tableau: String,
        #[arg(long)]
        order: usize,
        /// Also write the residuals as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-start Newton search for tableaux on an abscissa grid.
    Search {
        #[arg(long)]
        stages: usize,
        #[arg(long)]
        order: usize,
        /// Grid spacing, e.g. `1/6`.
        #[arg(long)]
        dc: String,
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated abscissae; defaults to the standard grid pattern.
        #[arg(long)]
        c_pattern: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        damping: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 0.5)]
        init_scale: f64,
        #[arg(long, default_value_t = 1000)]
        max_den: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Trace the stability region boundary of `e^{z₂}Φ(z)`.
    Stability {
        #[arg(long)]
        tableau: String,
        /// `RE,IM` or just `RE`.
        #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
        z2: String,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Boundaries of the built-in fourth and sixth order schemes at one `z₂`.
    StabilityCompare {
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        z2: f64,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fixed-step integration of a test problem.
    Integrate {
        #[arg(long)]
        tableau: String,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_parser = ["scalar", "ns"])]
        problem: String,
        /// Scalar problem: rate treated by `g`.
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lambda1: f64,
        /// Scalar problem: rate treated by the propagator.
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        lambda2: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1e-2)]
        nu: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-step convergence study on the Navier-Stokes benchmark.
    NsConverge {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1e-2)]
        nu: f64,
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        #[arg(long, default_value = "32,64,128,256,512,1024")]
        steps: String,
        #[arg(long = "ref", default_value_t = 4096)]
        reference: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump vorticity snapshots of one benchmark run.
    NsRun {
        #[arg(long, default_value = "builtin:rk6")]
        tableau: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1e-2)]
        nu: f64,
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        #[arg(long, default_value_t = 512)]
        steps: usize,
        /// Steps between snapshots.
        #[arg(long, default_value_t = 128)]
        every: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a built-in scheme in the tableau file format.
    ExportTableau {
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Verification(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_tableau(src: &str) -> Result<Tableau> {
    if let Some(name) = src.strip_prefix("builtin:") {
        return builtin(name)
            .ok_or_else(|| anyhow!("unknown built-in `{name}`; expected one of {}", BUILTIN_NAMES.join(", ")));
    }
    let text = fs::read_to_string(src).with_context(|| format!("reading {src}"))?;
    parse_tableau(&text).with_context(|| format!("parsing {src}"))
}

fn parse_z2(s: &str) -> Result<Complex64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().with_context(|| format!("bad number `{t}` in --z2"));
    match parts[..] {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => bail!("--z2 expects RE or RE,IM"),
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|e| anyhow!("bad {what} `{}`: {e}", t.trim()))
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn finish_manifest(mut manifest: RunManifest, at: &Path, outputs: Vec<PathBuf>, start: Instant) -> Result<()> {
    manifest.finish(outputs, start.elapsed());
    manifest
        .write(at)
        .with_context(|| format!("writing {}", at.display()))
}

fn run(command: Command) -> Result<(), Failure> {
    let start = Instant::now();
    match command {
        Command::Verify { tableau, order, out } => {
            let tab = load_tableau(&tableau)?;
            let conds = order_residuals(&tab, order).map_err(|e| Failure::Usage(e.to_string()))?;
            for c in &conds {
                println!("order {} γ={} {}  residual {}", c.tree.order(), c.density, c.tree, c.residual);
            }
            let ok = conds.iter().filter(|c| c.satisfied()).count();
            let verified = verified_order(&tab);
            println!("verified order: {verified}");
            println!("{ok}/{} conditions satisfied exactly", conds.len());
            if let Some(out) = out {
                let rows: Vec<_> = conds
                    .iter()
                    .map(|c| {
                        json!({
                            "tree": c.tree.to_string(),
                            "order": c.tree.order(),
                            "density": c.density.to_string(),
                            "residual": c.residual.to_string(),
                        })
                    })
                    .collect();
                let doc = json!({"claimed_order": order, "verified_order": verified, "conditions": rows});
                write_file(&out, serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
                let manifest = RunManifest::new("verify", json!({"tableau": tableau, "order": order}));
                finish_manifest(manifest, &manifest_path_for(&out), vec![out.clone()], start)?;
            }
            if ok != conds.len() {
                return Err(Failure::Verification(format!(
                    "{} is not of order {order} (verified order {verified})",
                    tab.name()
                )));
            }
        }
        Command::Search {
            stages,
            order,
            dc,
            seeds,
            seed,
            c_pattern,
            damping,
            max_iters,
            init_scale,
            max_den,
            out_dir,
        } => {
            let delta_c = Rational::from_str(&dc).map_err(|e| Failure::Usage(format!("--dc: {e}")))?;
            let mut cfg = match &c_pattern {
                Some(p) => {
                    let pattern = parse_list::<Rational>(p, "abscissa").map_err(|e| Failure::Usage(e.to_string()))?;
                    SearchConfig::new(stages, order, delta_c, pattern)
                }
                None => SearchConfig::on_grid(stages, order, delta_c),
            }
            .map_err(|e| Failure::Usage(e.to_string()))?;
            cfg.damping = damping;
            cfg.max_iters = max_iters;
            cfg.init_scale = init_scale;
            cfg.rng_seed = seed;
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

            let results = multi_start_search(&cfg, seeds).map_err(|e| Failure::Usage(e.to_string()))?;
            create_dir(&out_dir)?;
            let mut outputs = Vec::new();
            let mut rows = Vec::new();
            for r in &results {
                let mut files = Vec::new();
                let mut exact = None;
                if let Some(t) = &r.tableau {
                    let float_path = out_dir.join(format!("seed-{}.json", r.stream));
                    let doc = json!({"name": t.name, "a": t.a, "b": t.b, "c": t.c});
                    write_file(&float_path, serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
                    files.push(float_path);
                    if let Ok(e) = rationalize(t, max_den, order) {
                        let tab_path = out_dir.join(format!("seed-{}.tab", r.stream));
                        write_file(&tab_path, serialize_tableau(&e))?;
                        files.push(tab_path);
                        exact = Some(true);
                    } else {
                        exact = Some(false);
                    }
                }
                rows.push(json!({
                    "stream": r.stream,
                    "status": r.status,
                    "iterations": r.history.len() - 1,
                    "residual": r.residual_norm(),
                    "rationalized": exact,
                    "files": files,
                }));
                outputs.extend(files);
            }
            let converged = results.iter().filter(|r| r.status == SearchStatus::Converged).count();
            let summary_path = out_dir.join("summary.json");
            let summary = json!({"seeds": seeds, "converged": converged, "results": rows});
            write_file(&summary_path, serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
            outputs.insert(0, summary_path);
            println!("{converged}/{seeds} seeds converged");

            let params = json!({
                "stages": stages,
                "order": order,
                "delta_c": cfg.delta_c.to_string(),
                "c_pattern": cfg.c_pattern.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "damping": cfg.damping,
                "full_step_below": cfg.full_step_below,
                "max_iters": cfg.max_iters,
                "residual_tol": cfg.residual_tol,
                "divergence_bound": cfg.divergence_bound,
                "init_scale": cfg.init_scale,
                "n_seeds": seeds,
                "max_denominator": max_den,
            });
            let manifest = RunManifest::new("search", params).with_seeds(vec![seed]);
            finish_manifest(manifest, &out_dir.join("manifest.json"), outputs, start)?;
        }
        Command::Stability { tableau, z2, samples, out } => {
            let tab = load_tableau(&tableau)?;
            let z2v = parse_z2(&z2).map_err(|e| Failure::Usage(e.to_string()))?;
            let phi = stability_polynomial(&tab);
            let region = region_boundary(&phi, z2v, samples).map_err(|e| Failure::Usage(e.to_string()))?;
            let mut csv = String::from("re,im\n");
            for z in &region.points {
                csv.push_str(&format!("{},{}\n", z.re, z.im));
            }
            write_file(&out, csv)?;
            if !region.missing_angles.is_empty() {
                eprintln!("{} rays had no stable crossing", region.missing_angles.len());
            }
            println!("real-axis boundary: {}", real_axis_boundary(&phi, z2v.re.min(0.0)));
            let params = json!({"tableau": tableau, "z2": [z2v.re, z2v.im], "samples": samples});
            finish_manifest(
                RunManifest::new("stability", params),
                &manifest_path_for(&out),
                vec![out.clone()],
                start,
            )?;
        }
        Command::StabilityCompare { z2, samples, out_dir } => {
            if z2 > 0.0 {
                return Err(Failure::Usage("--z2 must be non-positive".into()));
            }
            create_dir(&out_dir)?;
            let mut outputs = Vec::new();
            let mut bounds = serde_json::Map::new();
            for (label, tab) in [("slrk4", rk4_tableau()), ("slrk6", rk6_tableau())] {
                let phi = stability_polynomial(&tab);
                let region = region_boundary(&phi, Complex64::new(z2, 0.0), samples)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                let path = out_dir.join(format!("{label}.csv"));
                let mut csv = String::from("re,im\n");
                for z in &region.points {
                    csv.push_str(&format!("{},{}\n", z.re, z.im));
                }
                write_file(&path, csv)?;
                outputs.push(path);
                bounds.insert(label.into(), json!(real_axis_boundary(&phi, z2)));
            }
            let path = out_dir.join("real_axis.json");
            write_file(&path, serde_json::to_string_pretty(&bounds).expect("json") + "\n")?;
            outputs.push(path);
            println!("{}", serde_json::Value::Object(bounds));
            let params = json!({"z2": z2, "samples": samples});
            finish_manifest(
                RunManifest::new("stability-compare", params),
                &out_dir.join("manifest.json"),
                outputs,
                start,
            )?;
        }
        Command::Integrate {
            tableau,
            h,
            steps,
            problem,
            lambda1,
            lambda2,
            n,
            nu,
            out,
        } => {
            if !(h > 0.0 && h.is_finite()) || steps == 0 {
                return Err(Failure::Usage("--h must be positive and --steps nonzero".into()));
            }
            let tab = load_tableau(&tableau)?;
            let doc = if problem == "scalar" {
                let op = LinearOperator::diagonal_real(&[lambda2]).map_err(|e| anyhow!(e))?;
                let plan = StepPlan::lawson(&tab, h, &op).map_err(|e| anyhow!(e))?;
                let mut g = |u: &[Complex64], o: &mut [Complex64]| o[0] = lambda1 * u[0];
                let u = integrate(&plan, &mut g, &[Complex64::new(1.0, 0.0)], steps, false)
                    .map_err(|e| anyhow!(e))?
                    .state[0];
                let exact = ((lambda1 + lambda2) * h * steps as f64).exp();
                json!({
                    "problem": "scalar",
                    "t": h * steps as f64,
                    "u": [u.re, u.im],
                    "abs": u.norm(),
                    "exact": exact,
                    "error": (u - exact).norm(),
                })
            } else {
                let run = NsRun::new(n, nu, h * steps as f64).map_err(|e| Failure::Usage(e.to_string()))?;
                let w = run.solve(&tab, steps).map_err(|e| anyhow!(e))?;
                let field = run.grid.inverse(&w);
                json!({
                    "problem": "ns",
                    "t": run.t_final,
                    "n": n,
                    "nu": nu,
                    "linf": field.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
                    "l2": (field.iter().map(|x| x * x).sum::<f64>() / field.len() as f64).sqrt(),
                    "enstrophy": enstrophy(&run.grid, &w),
                    "finite": field.iter().all(|x| x.is_finite()),
                })
            };
            let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
            match out {
                Some(path) => {
                    write_file(&path, &text)?;
                    let params = json!({
                        "tableau": tableau, "h": h, "steps": steps, "problem": problem,
                        "lambda1": lambda1, "lambda2": lambda2, "n": n, "nu": nu,
                    });
                    finish_manifest(
                        RunManifest::new("integrate", params),
                        &manifest_path_for(&path),
                        vec![path.clone()],
                        start,
                    )?;
                }
                None => print!("{text}"),
            }
        }
        Command::NsConverge {
            n,
            nu,
            t,
            steps,
            reference,
            out,
        } => {
            let step_counts = parse_list::<usize>(&steps, "step count").map_err(|e| Failure::Usage(e.to_string()))?;
            let run = NsRun::new(n, nu, t).map_err(|e| Failure::Usage(e.to_string()))?;
            let schemes = [rk4_tableau(), rk6_tableau()];
            let study = convergence_study(&run, &step_counts, &schemes, &rk6_tableau(), reference, f64::INFINITY)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let mut csv = String::from("scheme,m,linf_error\n");
            for c in &study.cells {
                let e = c.linf_error.map_or("unstable".to_string(), |e| format!("{e:e}"));
                csv.push_str(&format!("{},{},{e}\n", c.scheme, c.steps));
            }
            write_file(&out, csv)?;
            let slopes_path = out.with_file_name(format!(
                "{}.slopes.csv",
                out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            ));
            let mut slopes = String::from("scheme,slope,intercept,points,floor\n");
            for f in &study.fits {
                slopes.push_str(&format!("{},{},{},{},{:e}\n", f.scheme, f.slope, f.intercept, f.points, study.floor));
            }
            write_file(&slopes_path, slopes)?;
            for f in &study.fits {
                println!("{}: slope {:.3} over {} points", f.scheme, f.slope, f.points);
            }
            let params = json!({"n": n, "nu": nu, "t": t, "steps": step_counts, "reference": reference});
            finish_manifest(
                RunManifest::new("ns-converge", params),
                &manifest_path_for(&out),
                vec![out.clone(), slopes_path],
                start,
            )?;
        }
        Command::NsRun {
            tableau,
            n,
            nu,
            t,
            steps,
            every,
            out_dir,
        } => {
            let tab = load_tableau(&tableau)?;
            let run = NsRun::new(n, nu, t).map_err(|e| Failure::Usage(e.to_string()))?;
            let snaps = run.snapshots(&tab, steps, every).map_err(|e| Failure::Usage(e.to_string()))?;
            create_dir(&out_dir)?;
            let mut outputs = Vec::new();
            for (k, (time, field)) in snaps.iter().enumerate() {
                let path = out_dir.join(format!("vorticity-{k:04}.bin"));
                let mut bytes = format!("slrk-vorticity\nn {n}\ntime {time:e}\n").into_bytes();
                for x in field {
                    bytes.write_all(&x.to_le_bytes()).expect("vec write");
                }
                write_file(&path, bytes)?;
                outputs.push(path);
            }
            println!("wrote {} snapshots", snaps.len());
            let params = json!({"tableau": tableau, "n": n, "nu": nu, "t": t, "steps": steps, "every": every});
            finish_manifest(RunManifest::new("ns-run", params), &out_dir.join("manifest.json"), outputs, start)?;
        }
        Command::ExportTableau { name, out } => {
            let tab = builtin(&name)
                .ok_or_else(|| Failure::Usage(format!("unknown built-in `{name}`; expected one of {}", BUILTIN_NAMES.join(", "))))?;
            write_file(&out, serialize_tableau(&tab))?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the thread pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
