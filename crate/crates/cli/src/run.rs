use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use sdcorp::config::ScenarioConfig;
use sdcorp::regulator::design_zoh;
use sdcorp::scenarios::{
    dispatch_radius, equal_ic_optimum, example_4_1, run_microgrid, MicrogridParams,
    MicrogridTrace, NetworkScenario, SimSettings,
};
use sdcorp::sim::{error_metrics, simulate as run_network, ErrorMetrics, Phase};
use sdcorp::mat::fmt_f64;
use sdcorp::{Certificate, CompensatorDesign, Error, GainSource, HybridTrace, SimOptions};
use serde::Serialize;

use crate::{Builtin, K1Source, RunArgs};

const INPUT: u8 = 1;
const FAILED: u8 = 2;
const DIVERGED: u8 = 3;

/// Settling threshold reported in the metrics file.
const SETTLING_THRESHOLD: f64 = 1e-2;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type Outcome = Result<(), Failure>;

/// Input problems exit 1; anything the pipeline rejects exits 2.
fn classify(e: Error) -> Failure {
    let code = match &e {
        Error::Config { .. }
        | Error::Parse(_)
        | Error::InvalidArgument(_)
        | Error::Dimension { .. }
        | Error::NonFinite { .. } => INPUT,
        _ => FAILED,
    };
    fail(code, e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    fail(INPUT, format!("{}: {e}", path.display()))
}

enum Loaded {
    Network(NetworkScenario),
    Microgrid {
        params: MicrogridParams,
        sim: SimSettings,
    },
}

fn load(args: &RunArgs) -> Result<Loaded, Failure> {
    let cfg = match (args.scenario, &args.config) {
        (Some(Builtin::Example41), _) => ScenarioConfig::Network(example_4_1()),
        (Some(Builtin::Microgrid), _) => ScenarioConfig::Microgrid {
            params: MicrogridParams::table1(),
            sim: SimSettings {
                horizon: 5.0,
                ..SimSettings::default()
            },
        },
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            text.parse()
                .map_err(|e: Error| fail(INPUT, format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(fail(INPUT, "one of --scenario or --config is required")),
    };
    if let Some(t) = args.horizon {
        if !(t.is_finite() && t > 0.0) {
            return Err(fail(INPUT, format!("horizon T = {t} must be positive")));
        }
    }
    if args.substeps == Some(0) {
        return Err(fail(INPUT, "substeps must be at least 1"));
    }
    for (name, v) in [("mu", args.mu), ("h", args.h)] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(fail(INPUT, format!("--{name} = {v} must be positive")));
            }
        }
    }
    match cfg {
        ScenarioConfig::Network(mut sc) => {
            if let Some(t) = args.horizon {
                sc.sim.horizon = t;
            }
            if let Some(s) = args.substeps {
                sc.sim.substeps = s;
            }
            if let Some(mu) = args.mu {
                sc.mu = Some(mu);
            }
            if let Some(h) = args.h {
                sc.h = h;
            }
            match args.k1 {
                Some(K1Source::Synthesize) => sc.k1 = None,
                Some(K1Source::Paper) if sc.k1.is_none() => {
                    return Err(fail(INPUT, "this scenario carries no stored K1 gain"));
                }
                _ => {}
            }
            Ok(Loaded::Network(sc))
        }
        ScenarioConfig::Microgrid { mut params, mut sim } => {
            if args.k1.is_some() {
                return Err(fail(INPUT, "--k1 does not apply to the micro-grid scenario"));
            }
            if let Some(t) = args.horizon {
                sim.horizon = t;
            }
            if let Some(mu) = args.mu {
                params.mu = vec![mu; params.n()];
            }
            if let Some(h) = args.h {
                params.dispatch_h = h;
            }
            params.validate().map_err(classify)?;
            Ok(Loaded::Microgrid { params, sim })
        }
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Outcome {
    let mut w = create(out, name)?;
    let text = serde_json::to_string_pretty(value).expect("serializable");
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&out.join(name), e))
}

fn certify_network(sc: &NetworkScenario) -> Result<(CompensatorDesign, Certificate), Failure> {
    let design = sc.assemble(&sc.default_gains()).map_err(classify)?;
    let cert = sc.certify(&design).map_err(classify)?;
    Ok((design, cert))
}

fn report(cert: &Certificate) {
    println!(
        "verdict: {:?}  rho_agent max {:.6}  rho_eta {:.6}  mu {}",
        cert.verdict,
        cert.rho_agent.iter().copied().fold(0.0, f64::max),
        cert.rho_eta,
        cert.mu
    );
    for f in &cert.failures {
        println!("  failure: {f}");
    }
}

#[derive(Serialize)]
struct DispatchCertificate {
    scenario: &'static str,
    verdict: &'static str,
    dispatch_radius: f64,
    mu: Vec<f64>,
    dispatch_h: f64,
}

pub fn certify(args: &RunArgs) -> Outcome {
    match load(args)? {
        Loaded::Network(sc) => {
            let (_, cert) = certify_network(&sc)?;
            write_json(&args.out, "certificate.json", &cert)?;
            report(&cert);
            if cert.passed() {
                Ok(())
            } else {
                Err(fail(FAILED, format!("certificate failed: {}", cert.failures.join("; "))))
            }
        }
        Loaded::Microgrid { params, .. } => {
            let rho = dispatch_radius(&params).map_err(classify)?;
            let pass = rho < 1.0;
            let cert = DispatchCertificate {
                scenario: "microgrid",
                verdict: if pass { "pass" } else { "fail" },
                dispatch_radius: rho,
                mu: params.mu.clone(),
                dispatch_h: params.dispatch_h,
            };
            write_json(&args.out, "certificate.json", &cert)?;
            println!("dispatch radius {rho:.12}");
            if pass {
                Ok(())
            } else {
                Err(fail(FAILED, format!("dispatch update radius {rho} >= 1")))
            }
        }
    }
}

#[derive(Serialize)]
struct DesignDocument<'a> {
    design: &'a CompensatorDesign,
    certificate: &'a Certificate,
}

pub fn design(args: &RunArgs) -> Outcome {
    let Loaded::Network(sc) = load(args)? else {
        return Err(fail(INPUT, "design applies to network scenarios"));
    };
    let gains = sc.default_gains();
    let (design, cert) = if sc.hold.is_zero_order() {
        design_zoh(&sc.plants, &sc.exo, &sc.graph, sc.h, sc.mu, &gains).map_err(classify)?
    } else {
        let (design, cert) = certify_network(&sc)?;
        if !cert.passed() {
            return Err(fail(FAILED, format!("certificate failed: {}", cert.failures.join("; "))));
        }
        (design, cert)
    };
    write_json(
        &args.out,
        "design.json",
        &DesignDocument {
            design: &design,
            certificate: &cert,
        },
    )?;
    if let GainSource::Synthesize = gains {
        println!("K1 synthesized by discrete LQR");
    }
    for (i, k) in design.k1.iter().enumerate() {
        println!("agent {}: K1 = {k}", i + 1);
    }
    report(&cert);
    Ok(())
}

#[derive(Serialize)]
struct NetworkMetrics<'a> {
    horizon: f64,
    h: f64,
    mu: f64,
    jumps: usize,
    diverged: Option<Divergence>,
    forced: bool,
    certificate_passed: bool,
    errors: &'a ErrorMetrics,
}

#[derive(Serialize)]
struct Divergence {
    t: f64,
    norm: f64,
}

fn write_network_outputs(out: &Path, trace: &HybridTrace, metrics: NetworkMetrics<'_>) -> Outcome {
    let mut w = create(out, "trace.csv")?;
    trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&out.join("trace.csv"), e))?;
    write_fig2b(out, trace)?;
    write_json(out, "metrics.json", &metrics)
}

/// Tracking errors against time, one column per agent output.
fn write_fig2b(out: &Path, trace: &HybridTrace) -> Outcome {
    let path = out.join("fig2b_errors.csv");
    let mut w = create(out, "fig2b_errors.csv")?;
    let io = |e| io_err(&path, e);
    let Some(first) = trace.records.first() else {
        return Ok(());
    };
    let mut header = vec!["t".to_string()];
    for (i, e) in first.errors.iter().enumerate() {
        for j in 0..e.len() {
            header.push(if e.len() == 1 {
                format!("e{}", i + 1)
            } else {
                format!("e{}_{}", i + 1, j + 1)
            });
        }
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    // x is continuous across a jump, so post-jump rows would repeat values
    for r in trace.records.iter().filter(|r| r.phase != Phase::PostJump) {
        let mut row = vec![fmt_f64(r.t())];
        row.extend(r.errors.iter().flatten().map(|v| fmt_f64(*v)));
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn simulate(args: &RunArgs) -> Outcome {
    match load(args)? {
        Loaded::Network(sc) => simulate_network(&sc, args),
        Loaded::Microgrid { params, sim } => simulate_microgrid(&params, sim.horizon, &args.out),
    }
}

fn simulate_network(sc: &NetworkScenario, args: &RunArgs) -> Outcome {
    let (design, cert) = certify_network(sc)?;
    write_json(&args.out, "certificate.json", &cert)?;
    if !cert.passed() && !args.force {
        report(&cert);
        return Err(fail(
            FAILED,
            format!(
                "certificate failed ({}); pass --force to simulate anyway",
                cert.failures.join("; ")
            ),
        ));
    }
    let init = sc.initial_conditions(sc.sim.seed);
    let opts = SimOptions {
        horizon: sc.sim.horizon,
        substeps: sc.sim.substeps,
        force: args.force,
    };
    let (trace, diverged) =
        match run_network(&sc.plants, &sc.exo, &design, &sc.graph, &init, &opts) {
            Ok(trace) => (trace, None),
            Err(Error::Diverged { t, norm, partial }) => (*partial, Some(Divergence { t, norm })),
            Err(e) => return Err(classify(e)),
        };
    let errors = error_metrics(&trace, SETTLING_THRESHOLD);
    let divergence = diverged.as_ref().map(|d| (d.t, d.norm));
    write_network_outputs(
        &args.out,
        &trace,
        NetworkMetrics {
            horizon: sc.sim.horizon,
            h: design.h,
            mu: design.mu,
            jumps: trace.pre_jump_states().count(),
            diverged,
            forced: args.force,
            certificate_passed: cert.passed(),
            errors: &errors,
        },
    )?;
    if let Some((t, norm)) = divergence {
        return Err(fail(
            DIVERGED,
            format!("simulation diverged at t = {t} (norm {norm:.3e}); partial trace written"),
        ));
    }
    println!(
        "final max |e_i| = {:.3e}, consensus contraction {}",
        errors.final_max_error,
        errors
            .contraction
            .map_or("n/a".to_string(), |c| format!("{c:.5}"))
    );
    Ok(())
}

#[derive(Serialize)]
struct MicrogridMetrics {
    horizon: f64,
    dispatch_h: f64,
    steps: usize,
    dispatch_radius: f64,
    p_main_final: f64,
    lambda_final: Vec<f64>,
    lambda_spread: f64,
    lambda_optimum: f64,
    p_r_sum: f64,
    max_abs_delta_omega: f64,
}

fn simulate_microgrid(params: &MicrogridParams, horizon: f64, out: &Path) -> Outcome {
    let trace = match run_microgrid(params, horizon) {
        Ok(trace) => trace,
        Err(e @ Error::DispatchDiverged { .. }) => return Err(fail(DIVERGED, e.to_string())),
        Err(e) => return Err(classify(e)),
    };
    write_fig4(out, &trace)?;
    write_microgrid_trace(out, &trace)?;
    let p_main = params.p_main(trace.horizon);
    let metrics = MicrogridMetrics {
        horizon: trace.horizon,
        dispatch_h: params.dispatch_h,
        steps: trace.steps,
        dispatch_radius: dispatch_radius(params).map_err(classify)?,
        p_main_final: p_main,
        lambda_final: trace.dispatch.lambda.clone(),
        lambda_spread: trace.dispatch.spread(),
        lambda_optimum: equal_ic_optimum(params, p_main),
        p_r_sum: trace.dispatch.p_r.iter().sum(),
        max_abs_delta_omega: trace
            .mg
            .iter()
            .map(|s| s.delta_omega().abs())
            .fold(0.0, f64::max),
    };
    write_json(out, "metrics.json", &metrics)?;
    println!(
        "Lambda spread {:.3e}, sum P_r = {:.9}, max |d omega| = {:.3e}",
        metrics.lambda_spread, metrics.p_r_sum, metrics.max_abs_delta_omega
    );
    Ok(())
}

/// Demand, incremental costs, dispatch and frequencies against time.
fn write_fig4(out: &Path, trace: &MicrogridTrace) -> Outcome {
    let path = out.join("fig4_dispatch.csv");
    let mut w = create(out, "fig4_dispatch.csv")?;
    let io = |e| io_err(&path, e);
    let n = trace.dispatch.lambda.len();
    let mut header = vec!["t".to_string(), "p_main".to_string(), "p_r_sum".to_string()];
    for name in ["lambda", "p_r", "p", "q", "omega"] {
        header.extend((1..=n).map(|i| format!("{name}{i}")));
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for s in &trace.samples {
        let mut row = vec![
            fmt_f64(s.t),
            fmt_f64(s.p_main),
            fmt_f64(s.p_r.iter().sum()),
        ];
        for col in [&s.lambda, &s.p_r, &s.p, &s.q, &s.omega] {
            row.extend(col.iter().map(|v| fmt_f64(*v)));
        }
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Long-format trace with the network trace header; demand under agent 0.
fn write_microgrid_trace(out: &Path, trace: &MicrogridTrace) -> Outcome {
    let path = out.join("trace.csv");
    let mut w = create(out, "trace.csv")?;
    let io = |e| io_err(&path, e);
    writeln!(w, "t,phase,agent,component,value").map_err(io)?;
    for s in &trace.samples {
        let t = fmt_f64(s.t);
        writeln!(w, "{t},flow,0,p_main,{}", fmt_f64(s.p_main)).map_err(io)?;
        for i in 0..s.lambda.len() {
            for (name, v) in [
                ("lambda", s.lambda[i]),
                ("p_r", s.p_r[i]),
                ("p", s.p[i]),
                ("q", s.q[i]),
                ("omega", s.omega[i]),
            ] {
                writeln!(w, "{t},flow,{},{name},{}", i + 1, fmt_f64(v)).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
