//! Command-line driver. Exit codes: 0 success, 1 input error, 2 solver
//! budget exhausted, 3 structural obstruction.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::{
    certify_theorem2, check_esn_norm, check_hu, check_nnarx_norm, empirical_probe,
    validate_certificate, ConditionReport, ProbeOptions,
};
use crate::compose::{factorize, Side};
use crate::error::{Error, Result};
use crate::io::{
    format_sig, read_architecture_file, read_csv, read_model_file, read_witness_file, write_csv,
    write_json, CertificateFile, GainsFile, Model, ModelFile, ModelSpec,
};
use crate::models::{Esn, GenericRnn, Vector};
use crate::numerics::{spd_inverse, DenseMatrix, SymmetricMatrix};
use crate::sdp::{SolveOptions, DEFAULT_BUDGET, DEFAULT_MARGIN};
use crate::sim::{
    fit_percent, mprs, observer_run, simulate, train_esn_readout, AffineNormalization, Dataset,
    DEFAULT_HOLD,
};
use crate::synthesize::{
    design, design_observer, lmi_residual, recover_gains, structural_precheck,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_OBSTRUCTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "deltaiss",
    version,
    about = "Incremental ISS certificates and gain synthesis for recurrent networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Strictness margin for the LMIs.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    /// Newton-step budget of the LMI solver.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions::default()
            .with_margin(self.margin)
            .with_budget(self.budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Auto,
    Right,
    Left,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a Lyapunov certificate and report the baseline conditions.
    Certify {
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Number of random trajectory pairs for the empirical probe.
        #[arg(long)]
        probe: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also validate a user-supplied P.
        #[arg(long)]
        check_witness: Option<PathBuf>,
        /// Where to write the certificate.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design a stabilizing gain for a closed-loop architecture.
    Synthesize {
        architecture: PathBuf,
        #[arg(long, value_enum, default_value_t = SideArg::Auto)]
        side: SideArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Check a user-supplied (P, H) against the synthesis LMI.
        #[arg(long)]
        check_witness: Option<PathBuf>,
        #[arg(long)]
        out_gains: Option<PathBuf>,
        #[arg(long)]
        out_cert: Option<PathBuf>,
    },
    /// Design an output-injection observer and simulate its error.
    Observe {
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a model from random initial states.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant input applied to every channel.
        #[arg(long, conflicts_with = "mprs")]
        reference: Option<f64>,
        /// Multilevel pseudo-random input on every channel, as LOW:HIGH.
        #[arg(long)]
        mprs: Option<String>,
        #[arg(long, default_value_t = DEFAULT_HOLD)]
        hold: usize,
        /// Initial states are drawn uniformly from [-scale, scale].
        #[arg(long, default_value_t = 1.0)]
        x0_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the readout of an ESN, from a CSV dataset or against itself as teacher.
    Identify {
        reservoir: PathBuf,
        /// CSV with the input columns followed by the output columns.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        washout: usize,
        /// Also train the direct input term.
        #[arg(long)]
        direct: bool,
        /// Samples generated in teacher-student mode.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Input normalization OFFSET:SCALE, applied as (u - offset) / scale on every channel.
        #[arg(long)]
        input_norm: Option<String>,
        /// Output normalization OFFSET:SCALE, applied as (y - offset) / scale on every channel.
        #[arg(long)]
        output_norm: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the structured condition with the baseline conditions.
    Compare {
        model: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("DELTAISS_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotCertified { .. } | Error::NotSynthesized(_) => EXIT_BUDGET,
        Error::StructuralObstruction(_) => EXIT_OBSTRUCTION,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: &Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Certify {
            model,
            solver,
            probe,
            seed,
            check_witness,
            out: path,
        } => cmd_certify(
            model,
            solver,
            *probe,
            *seed,
            check_witness.as_deref(),
            path.as_deref(),
            out,
        ),
        Command::Synthesize {
            architecture,
            side,
            solver,
            check_witness,
            out_gains,
            out_cert,
        } => cmd_synthesize(
            architecture,
            *side,
            solver,
            check_witness.as_deref(),
            out_gains.as_deref(),
            out_cert.as_deref(),
            out,
        ),
        Command::Observe {
            model,
            solver,
            steps,
            seed,
            out: path,
        } => cmd_observe(model, solver, *steps, *seed, path.as_deref(), out),
        Command::Simulate {
            model,
            steps,
            runs,
            seed,
            reference,
            mprs,
            hold,
            x0_scale,
            out: path,
        } => {
            let input = match (reference, mprs) {
                (Some(r), _) => InputSpec::Constant(*r),
                (None, Some(s)) => InputSpec::Mprs(parse_range(s)?, *hold),
                (None, None) => InputSpec::Constant(0.0),
            };
            cmd_simulate(
                model,
                *steps,
                *runs,
                *seed,
                input,
                *x0_scale,
                path.as_deref(),
                out,
            )
        }
        Command::Identify {
            reservoir,
            data,
            washout,
            direct,
            samples,
            input_norm,
            output_norm,
            seed,
            out: path,
        } => {
            let norm = |spec: &Option<String>| spec.as_deref().map(parse_range).transpose();
            cmd_identify(
                reservoir,
                data.as_deref(),
                *washout,
                *direct,
                *samples,
                [norm(input_norm)?, norm(output_norm)?],
                *seed,
                path.as_deref(),
                out,
            )
        }
        Command::Compare { model, solver } => cmd_compare(model, solver, out),
    }
}

fn io<T>(r: std::io::Result<T>) -> Result<T> {
    r.map_err(Error::from)
}

fn fmt_matrix(m: &DenseMatrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter()
                    .map(|&v| format_sig(v))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn baseline(model: &Model) -> Result<Option<ConditionReport>> {
    Ok(match model {
        Model::Esn(e) => Some(check_esn_norm(e)?),
        Model::Nnarx(n) => Some(check_nnarx_norm(n)?),
        Model::Hu(h) => Some(check_hu(h)?),
        Model::Generic(_) => None,
    })
}

fn print_baseline(out: &mut dyn Write, report: &ConditionReport) -> Result<()> {
    let verdict = if !report.applicable {
        "not applicable"
    } else if report.holds {
        "holds"
    } else {
        "fails"
    };
    io(writeln!(
        out,
        "baseline {}: statistic {} vs threshold {} -> {verdict}",
        report.name,
        format_sig(report.statistic),
        format_sig(report.threshold)
    ))
}

fn load_model(path: &Path) -> Result<(ModelFile, Model, GenericRnn)> {
    let file = read_model_file(path)?;
    let model = file.model.to_model()?;
    let generic = model.to_generic()?;
    Ok((file, model, generic))
}

fn cmd_certify(
    path: &Path,
    solver: &SolverArgs,
    probe: Option<usize>,
    seed: u64,
    witness: Option<&Path>,
    cert_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (file, model, g) = load_model(path)?;
    io(writeln!(
        out,
        "model: {} ({} states, {} inputs, {} outputs)",
        model.kind(),
        g.n(),
        g.m(),
        g.l()
    ))?;
    if let Some(report) = baseline(&model)? {
        print_baseline(out, &report)?;
    }
    let mut witness_ok = true;
    if let Some(wpath) = witness {
        let p = SymmetricMatrix::from_dense(&read_witness_file(wpath)?.p()?)?;
        let report = validate_certificate(&g, &p)?;
        witness_ok = report.passed;
        io(writeln!(
            out,
            "witness: {} (gap {}, min eigenvalue of P {}, {} pattern violations)",
            if report.passed { "passes" } else { "fails" },
            format_sig(report.lyapunov_gap),
            format_sig(report.lambda_min_p),
            report.pattern_violations
        ))?;
    }
    let cert = match certify_theorem2(&g, &solver.options()) {
        Ok(cert) => cert,
        Err(e @ Error::NotCertified { .. }) => {
            io(writeln!(out, "structured condition: {e}"))?;
            return Ok(EXIT_BUDGET);
        }
        Err(e) => return Err(e),
    };
    io(writeln!(
        out,
        "structured condition: certified, gap {}",
        format_sig(cert.lyapunov_gap)
    ))?;
    io(writeln!(out, "P = {}", fmt_matrix(&cert.p.to_dense())))?;
    if let Some(trials) = probe {
        let opts = ProbeOptions {
            trials,
            seed,
            ..ProbeOptions::default()
        };
        let r = empirical_probe(&g, Some(&cert), &opts)?;
        io(writeln!(
            out,
            "probe: {} trials, max terminal divergence {}, {} V-increase events, Lipschitz excess per unit {:?}",
            r.trials,
            format_sig(r.max_terminal_divergence),
            r.v_increase_events,
            r.lipschitz_excess
        ))?;
    }
    if let Some(p) = cert_out {
        write_json(p, &CertificateFile::new(&file, &cert))?;
        io(writeln!(out, "certificate written to {}", p.display()))?;
    }
    Ok(if witness_ok { EXIT_OK } else { EXIT_BUDGET })
}

fn cmd_compare(path: &Path, solver: &SolverArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, model, g) = load_model(path)?;
    match baseline(&model)? {
        Some(report) => print_baseline(out, &report)?,
        None => io(writeln!(
            out,
            "baseline: no closed-form condition for generic models"
        ))?,
    }
    match certify_theorem2(&g, &solver.options()) {
        Ok(cert) => io(writeln!(
            out,
            "structured condition: certified, gap {}",
            format_sig(cert.lyapunov_gap)
        ))?,
        Err(e @ Error::NotCertified { .. }) => io(writeln!(out, "structured condition: {e}"))?,
        Err(e) => return Err(e),
    }
    Ok(EXIT_OK)
}

fn cmd_synthesize(
    path: &Path,
    side: SideArg,
    solver: &SolverArgs,
    witness: Option<&Path>,
    gains_out: Option<&Path>,
    cert_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let arch = read_architecture_file(path)?
        .architecture
        .to_architecture()?;
    let fac = factorize(&arch)?;
    match (side, fac.side) {
        (SideArg::Right, Side::Left) | (SideArg::Left, Side::Right) => {
            return Err(Error::InvalidInput(format!(
                "architecture {} factorizes on the {:?} side",
                arch.name(),
                fac.side
            )))
        }
        _ => {}
    }
    io(writeln!(
        out,
        "architecture: {} ({:?} factorization, {} closed-loop states)",
        arch.name(),
        fac.side,
        fac.n()
    ))?;
    let mut witness_ok = true;
    if let Some(wpath) = witness {
        let w = read_witness_file(wpath)?;
        let p = w.p()?;
        let h = w
            .h()?
            .ok_or_else(|| Error::InvalidInput("synthesis witness needs both p and h".into()))?;
        let residual = lmi_residual(&fac, &p, &h)?;
        witness_ok = residual > 0.0;
        io(writeln!(
            out,
            "witness: LMI {} (min eigenvalue {})",
            if witness_ok { "holds" } else { "fails" },
            format_sig(residual)
        ))?;
        if witness_ok {
            let pinv = spd_inverse(
                &SymmetricMatrix::symmetric_part(&p),
                crate::synthesize::INVERSE_FLOOR,
            )?
            .to_dense();
            let j = match fac.side {
                Side::Right => &h * pinv,
                Side::Left => {
                    let w_inv = DenseMatrix::from_diagonal(&Vector::from_iterator(
                        fac.n(),
                        fac.activations.iter().map(|a| 1.0 / a.lipschitz()),
                    ));
                    w_inv * pinv * &h
                }
            };
            for (name, m) in recover_gains(&fac, &j)?.blocks {
                io(writeln!(out, "witness gain {name} = {}", fmt_matrix(&m)))?;
            }
        }
    }
    structural_precheck(&fac)?;
    let synthesis = match design(&fac, &solver.options()) {
        Ok(s) => s,
        Err(e @ Error::NotSynthesized(_)) => {
            io(writeln!(out, "synthesis: {e}"))?;
            return Ok(EXIT_BUDGET);
        }
        Err(e) => return Err(e),
    };
    io(writeln!(
        out,
        "synthesis: closed loop certified, gap {}",
        format_sig(synthesis.certificate.lyapunov_gap)
    ))?;
    io(writeln!(out, "J = {}", fmt_matrix(&synthesis.j)))?;
    for (name, m) in &synthesis.gains.blocks {
        io(writeln!(out, "{name} = {}", fmt_matrix(m)))?;
    }
    let gains = GainsFile::new(&arch, fac.side, &synthesis)?;
    if let Some(p) = cert_out {
        write_json(
            p,
            &CertificateFile::new(&gains.closed_loop, &synthesis.certificate),
        )?;
        io(writeln!(out, "certificate written to {}", p.display()))?;
    }
    if let Some(p) = gains_out {
        write_json(p, &gains)?;
        io(writeln!(out, "gains written to {}", p.display()))?;
    }
    Ok(if witness_ok { EXIT_OK } else { EXIT_BUDGET })
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

fn cmd_observe(
    path: &Path,
    solver: &SolverArgs,
    steps: usize,
    seed: u64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (_, _, g) = load_model(path)?;
    let (w, _) = g.lipschitz_weights();
    let obs = match design_observer(&g.a, &g.c, &w, &solver.options()) {
        Ok(o) => o,
        Err(e @ Error::NotSynthesized(_)) => {
            io(writeln!(out, "observer: {e}"))?;
            return Ok(EXIT_BUDGET);
        }
        Err(e) => return Err(e),
    };
    io(writeln!(out, "L = {}", fmt_matrix(&obs.l)))?;
    io(writeln!(
        out,
        "contraction factor: {}",
        format_sig(obs.contraction)
    ))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = uniform_vec(&mut rng, g.n(), 1.0);
    let inputs: Vec<Vector> = (0..steps)
        .map(|_| uniform_vec(&mut rng, g.m(), 1.0))
        .collect();
    let errors = observer_run(&g, &obs.l, &x0, &Vector::zeros(g.n()), &inputs)?;
    let e0 = errors[0];
    io(writeln!(
        out,
        "estimation error: initial {}, final {}",
        format_sig(e0),
        format_sig(errors[steps])
    ))?;
    if let Some(p) = csv {
        let rows: Vec<Vec<f64>> = errors
            .iter()
            .enumerate()
            .map(|(k, &e)| vec![k as f64, e, e0 * obs.contraction.powi(k as i32)])
            .collect();
        write_csv(p, &["k".into(), "error".into(), "envelope".into()], &rows)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy)]
enum InputSpec {
    Constant(f64),
    Mprs((f64, f64), usize),
}

/// `(low, high)` or `(offset, scale)` pair parsed from `A:B`.
type Range = (f64, f64);

fn parse_range(s: &str) -> Result<Range> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidInput(format!("expected LOW:HIGH, got '{s}'")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("bad number '{v}': {e}")))
    };
    Ok((parse(a)?, parse(b)?))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    steps: usize,
    runs: usize,
    seed: u64,
    input: InputSpec,
    x0_scale: f64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let (_, _, g) = load_model(path)?;
    let (m, l) = (g.m(), g.l());
    let inputs: Vec<Vector> = match input {
        InputSpec::Constant(r) => vec![Vector::from_element(m, r); steps],
        InputSpec::Mprs((low, high), hold) => {
            let channels = (0..m)
                .map(|i| mprs(low, high, 5, hold, steps, seed.wrapping_add(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            (0..steps)
                .map(|k| Vector::from_fn(m, |i, _| channels[i][k]))
                .collect()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(runs);
    for _ in 0..runs {
        let x0 = uniform_vec(&mut rng, g.n(), x0_scale);
        trajectories.push(simulate(&g, &x0, &inputs)?);
    }
    for (r, t) in trajectories.iter().enumerate() {
        if let Some(y) = t.outputs.last() {
            io(writeln!(
                out,
                "run {r}: final output {}",
                fmt_matrix(&DenseMatrix::from_column_slice(1, y.len(), y.as_slice()))
            ))?;
        }
    }
    if let Some(p) = csv {
        let mut header = vec!["k".to_string()];
        header.extend((0..m).map(|i| format!("u{i}")));
        for r in 0..runs {
            header.extend((0..l).map(|i| format!("run{r}_y{i}")));
        }
        let rows: Vec<Vec<f64>> = (0..steps)
            .map(|k| {
                let mut row = vec![k as f64];
                row.extend(inputs[k].iter());
                for t in &trajectories {
                    row.extend(t.outputs[k].iter());
                }
                row
            })
            .collect();
        write_csv(p, &header, &rows)?;
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_identify(
    path: &Path,
    data: Option<&Path>,
    washout: usize,
    direct: bool,
    samples: usize,
    norms: [Option<Range>; 2],
    seed: u64,
    model_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let file = read_model_file(path)?;
    let teacher = match file.model.to_model()? {
        Model::Esn(e) => e,
        other => {
            return Err(Error::InvalidInput(format!(
                "identify needs an esn model, got {}",
                other.kind()
            )))
        }
    };
    let (m, l) = (teacher.m(), teacher.l());
    let dataset = match data {
        Some(csv) => {
            let (_, rows) = read_csv(csv)?;
            if let Some(i) = rows.iter().position(|r| r.len() != m + l) {
                return Err(Error::Dimension(format!(
                    "data row {} has {} columns, expected {}",
                    i + 1,
                    rows[i].len(),
                    m + l
                )));
            }
            let inputs = rows
                .iter()
                .map(|r| Vector::from_column_slice(&r[..m]))
                .collect();
            let outputs = rows
                .iter()
                .map(|r| Vector::from_column_slice(&r[m..]))
                .collect();
            Dataset::new(inputs, outputs, 1.0)?
        }
        None => {
            let channels = (0..m)
                .map(|i| {
                    mprs(
                        -1.0,
                        1.0,
                        5,
                        DEFAULT_HOLD,
                        samples,
                        seed.wrapping_add(i as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<Vector> = (0..samples)
                .map(|k| Vector::from_fn(m, |i, _| channels[i][k]))
                .collect();
            let outputs =
                teacher.simulate_direct(&Vector::zeros(teacher.nu()), &Vector::zeros(m), &inputs);
            io(writeln!(
                out,
                "teacher-student mode: {samples} samples generated from the given network"
            ))?;
            Dataset::new(inputs, outputs, 1.0)?
        }
    };
    let to_norm = |spec: Option<(f64, f64)>, n: usize| match spec {
        Some((offset, scale)) => AffineNormalization::uniform(n, offset, scale),
        None => Ok(AffineNormalization::identity(n)),
    };
    let dataset = dataset.normalized(&to_norm(norms[0], m)?, &to_norm(norms[1], l)?)?;
    // A teacher with a direct term can only be matched by a student that has one.
    let direct = direct || (data.is_none() && teacher.w_out2.iter().any(|&v| v != 0.0));
    let fit = train_esn_readout(&teacher, &dataset, washout, direct)?;
    let student = Esn {
        w_out1: fit.w_out1.clone(),
        w_out2: fit
            .w_out2
            .clone()
            .unwrap_or_else(|| DenseMatrix::zeros(l, m)),
        ..teacher.clone()
    };
    let predicted = student.simulate_direct(
        &Vector::zeros(student.nu()),
        &Vector::zeros(m),
        &dataset.inputs,
    );
    let score = fit_percent(&dataset.outputs[washout..], &predicted[washout..])?;
    io(writeln!(
        out,
        "regression rows: {}{}",
        fit.rows,
        if fit.ridge > 0.0 {
            " (ridge fallback)"
        } else {
            ""
        }
    ))?;
    io(writeln!(out, "W_out1 = {}", fmt_matrix(&student.w_out1)))?;
    io(writeln!(out, "FIT: {:.4}%", score))?;
    if let Some(p) = model_out {
        write_json(
            p,
            &ModelFile::new(ModelSpec::from_model(&Model::Esn(student))?),
        )?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_exit_one() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["deltaiss", "certify"], &mut out, &mut err), EXIT_INPUT);
        assert_eq!(
            run(
                ["deltaiss", "certify", "/nonexistent.json"],
                &mut out,
                &mut err
            ),
            EXIT_INPUT
        );
        assert!(String::from_utf8_lossy(&err).contains("nonexistent"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::StructuralObstruction("x".into())), 3);
        assert_eq!(exit_code(&Error::NotSynthesized("x".into())), 2);
        assert_eq!(exit_code(&Error::Parse("x".into())), 1);
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("12:16").unwrap(), (12.0, 16.0));
        assert!(parse_range("12").is_err());
    }
}
