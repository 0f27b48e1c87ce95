use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use telegraph_box::analytics::{
    expected_absorption_time, expected_cycles, expected_truncated_times, phase_probabilities,
    regime, AbsorptionReport, CycleMeans, PhaseMatrix, TruncatedTimeMeans,
};
use telegraph_box::mgf::{
    conditional_cycle_means, conditional_hit_prob, theta_roots, transform_from_h,
    transform_from_origin,
};
use telegraph_box::montecarlo::{estimate_with, replay_paths, validate, McConfig, MCSummary};
use telegraph_box::numfmt::sig12;
use telegraph_box::scaling::{
    decreasing_on_upper_half, doubling_grid, scaling_sweep, sweep_csv, ScalingRow, ScalingSpec,
    SWEEP_CSV_HEADER,
};
use telegraph_box::simulate::{write_path_csv, PATH_CSV_HEADER};
use telegraph_box::{Error, ModelParams, SwitchingProb};

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(
    name = "telegraph-box",
    version,
    about = "Telegraph motion between a reflecting-absorbing origin and level",
    after_help = "Exit status: 0 success, 1 validation failed, 2 usage or parameter error.\n\
                  CSV and table numbers carry 12 significant digits; JSON carries full precision."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form phase probabilities, truncated times, cycle means and
    /// mean absorption time.
    #[command(after_help = "CSV columns: quantity,value\n\
        Quantities: p00 p0H pH0 pHH, t00 t0H tHH tH0 (truncated up-times), \
        m00 m0H mH0 mHH (unconditional cycle means), kappa00 kappa0H kappaH0 kappaHH \
        (conditional cycle means), l1 l1_star theta_spectral expected_absorption_time.")]
    Analytics {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        alpha: AlphaArg,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo estimates over independent paths.
    #[command(after_help = "CSV columns: quantity,estimate,std_error\n\
        Quantities: p00 p0H pH0 pHH (per-start frequencies), m00 m0H mH0 mHH, \
        E[M], E[T_A], wald(theta) for each Wald exponent.\n\
        --dump-paths writes one row per phase: path_id,phase_index,start,end,duration,n_switches")]
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        alpha: AlphaArg,
        #[command(flatten)]
        mc: McArgs,
        /// Write every simulated phase to this CSV file.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare Monte Carlo estimates with the closed forms; exits 1 on failure.
    #[command(after_help = "CSV columns: name,analytic,estimate,standard_error,z_score,estimable,pass")]
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        alpha: AlphaArg,
        #[command(flatten)]
        mc: McArgs,
        /// Largest accepted |z|.
        #[arg(long, default_value_t = 4.0)]
        z_max: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cycle and absorption means along a diffusive rescaling
    /// lambda = (c^2 + 2 a c) / sigma^2, mu = (c^2 + 2 b c) / sigma^2, velocity c.
    #[command(after_help = "CSV columns: c,lambda,mu,EC00,EC0H,Etau,ETA")]
    Scaling {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        drift_a: f64,
        #[arg(long)]
        drift_b: f64,
        /// Comma-separated increasing speeds; defaults to 1,2,4,...,256.
        #[arg(long, value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        alpha: AlphaArg,
        /// Threshold the last row is compared with.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Transforms of the up-time to the next boundary contact.
    #[command(after_help = "CSV columns: omega,theta1,theta2,F00,F0H and, with --d, \
        FHH,FH0 (transforms after a first descent d).\n\
        With --d the JSON and table output also give P_H0(d), M_HH(d), M_H0(d); \
        the means are omitted when lambda and mu are numerically equal.")]
    Mgf {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated transform arguments.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        omega: Vec<f64>,
        /// Length of the first descent from the level.
        #[arg(long, allow_negative_numbers = true)]
        d: Option<f64>,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Rate of up-to-down switches.
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Rate of down-to-up switches.
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    /// Distance between the two boundaries.
    #[arg(long, allow_negative_numbers = true)]
    h: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    velocity: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, Error> {
        ModelParams::new(self.lambda, self.mu, self.h)?.with_velocity(self.velocity)
    }
}

#[derive(Args)]
struct AlphaArg {
    /// Absorption probability at each boundary contact, in (0, 1].
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
}

impl AlphaArg {
    fn get(&self) -> Result<SwitchingProb, BoxError> {
        SwitchingProb::new(self.alpha).map_err(|e| format!("alpha: {e}").into())
    }
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "TELEGRAPH_BOX_THREADS", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

/// Rows of formatted cells under a header.
struct Grid {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Grid {
    fn new(header: &[&str]) -> Self {
        Grid {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    fn table(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| {
                    if i == 0 {
                        format!("{s:<w$}")
                    } else {
                        format!("{s:>w$}")
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    schema: &'static str,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(schema: &'static str, body: T) -> Result<String, BoxError> {
    let mut s = serde_json::to_string_pretty(&Envelope { schema, body })?;
    s.push('\n');
    Ok(s)
}

fn render<T: Serialize>(
    format: Format,
    schema: &'static str,
    body: T,
    grid: impl FnOnce() -> Grid,
) -> Result<String, BoxError> {
    Ok(match format {
        Format::Json => json(schema, body)?,
        Format::Csv => grid().csv(),
        Format::Table => grid().table(),
    })
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), BoxError> {
    match &out.output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn install_threads(threads: Option<u64>) -> Result<(), BoxError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(usize::try_from(n)?)
            .build_global()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyticsOut {
    params: ModelParams,
    alpha: f64,
    regime: String,
    phase_probabilities: PhaseMatrix,
    truncated_time_means: TruncatedTimeMeans,
    cycle_means: CycleMeans,
    #[serde(flatten)]
    absorption: AbsorptionReport,
}

fn analytics(model: &ModelArgs, alpha: &AlphaArg, out: &OutputArgs) -> Result<bool, BoxError> {
    let p = model.params()?;
    let s = alpha.get()?;
    let pm = phase_probabilities(&p);
    let t = expected_truncated_times(&p);
    let c = expected_cycles(&p);
    let a = expected_absorption_time(&p, s)?;
    let values = [
        ("p00", pm.p00),
        ("p0H", pm.p0h),
        ("pH0", pm.ph0),
        ("pHH", pm.phh),
        ("t00", t.t00),
        ("t0H", t.t0h),
        ("tHH", t.thh),
        ("tH0", t.th0),
        ("m00", c.m00),
        ("m0H", c.m0h),
        ("mH0", c.mh0),
        ("mHH", c.mhh),
        ("kappa00", c.kappa00),
        ("kappa0H", c.kappa0h),
        ("kappaH0", c.kappah0),
        ("kappaHH", c.kappahh),
        ("l1", a.l1),
        ("l1_star", a.l1_star),
        ("theta_spectral", a.theta_spectral),
        ("expected_absorption_time", a.expected_absorption_time),
    ];
    let body = AnalyticsOut {
        params: p,
        alpha: s.value(),
        regime: format!("{:?}", regime(&p)),
        phase_probabilities: pm,
        truncated_time_means: t,
        cycle_means: c,
        absorption: a,
    };
    let text = render(out.format, "telegraph-box.analytics/1", body, || {
        let mut g = Grid::new(&["quantity", "value"]);
        for (name, v) in values {
            g.push(vec![name.into(), sig12(v)]);
        }
        g
    })?;
    emit(out, &text)?;
    Ok(true)
}

fn summary_grid(m: &MCSummary) -> Grid {
    let mut g = Grid::new(&["quantity", "estimate", "std_error"]);
    let se = &m.standard_errors;
    let pairs = ["00", "0H", "H0", "HH"];
    for (i, name) in pairs.iter().enumerate() {
        g.push(vec![format!("p{name}"), sig12(m.phase_freqs[i]), sig12(se.phase_freqs[i])]);
    }
    for (i, name) in pairs.iter().enumerate() {
        g.push(vec![format!("m{name}"), sig12(m.cycle_means[i]), sig12(se.cycle_means[i])]);
    }
    g.push(vec!["E[M]".into(), sig12(m.mean_m), sig12(se.mean_m)]);
    g.push(vec![
        "E[T_A]".into(),
        sig12(m.mean_absorption_time),
        sig12(se.mean_absorption_time),
    ]);
    for w in &m.wald {
        g.push(vec![format!("wald({})", sig12(w.theta)), sig12(w.mean), sig12(w.standard_error)]);
    }
    g
}

fn simulate(
    model: &ModelArgs,
    alpha: &AlphaArg,
    mc: &McArgs,
    dump: Option<&PathBuf>,
    out: &OutputArgs,
) -> Result<bool, BoxError> {
    let p = model.params()?;
    let s = alpha.get()?;
    install_threads(mc.threads)?;
    let cfg = McConfig::default();
    let summary = estimate_with(&p, s, mc.paths, mc.seed, &cfg)?;
    if let Some(path) = dump {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{PATH_CSV_HEADER}")?;
        replay_paths::<BoxError, _>(&p, s, mc.paths, mc.seed, &cfg, |i, path| {
            write_path_csv(&mut w, i, path)?;
            Ok(())
        })?;
        w.flush()?;
    }
    let grid = summary_grid(&summary);
    let text = render(out.format, "telegraph-box.simulate/1", &summary, || grid)?;
    emit(out, &text)?;
    Ok(true)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), sig12)
}

fn run_validate(
    model: &ModelArgs,
    alpha: &AlphaArg,
    mc: &McArgs,
    z_max: f64,
    out: &OutputArgs,
) -> Result<bool, BoxError> {
    let p = model.params()?;
    let s = alpha.get()?;
    if !(z_max.is_finite() && z_max > 0.0) {
        return Err(format!("z_max = {z_max} must be a finite positive number").into());
    }
    install_threads(mc.threads)?;
    let report = validate(&p, s, mc.paths, mc.seed, z_max)?;
    let pass = report.overall_pass;
    let text = match out.format {
        Format::Json => json("telegraph-box.validate/1", &report)?,
        Format::Table => report.to_table(),
        Format::Csv => {
            let mut g = Grid::new(&[
                "name",
                "analytic",
                "estimate",
                "standard_error",
                "z_score",
                "estimable",
                "pass",
            ]);
            for r in &report.records {
                g.push(vec![
                    r.name.clone(),
                    sig12(r.analytic),
                    opt(r.estimate),
                    opt(r.standard_error),
                    opt(r.z_score),
                    r.estimable.to_string(),
                    r.pass.to_string(),
                ]);
            }
            g.csv()
        }
    };
    emit(out, &text)?;
    Ok(pass)
}

#[derive(Serialize)]
struct ScalingOut {
    spec: ScalingSpec,
    h: f64,
    alpha: f64,
    epsilon: f64,
    upper_half_decreasing: bool,
    final_below_epsilon: bool,
    rows: Vec<ScalingRow>,
}

#[allow(clippy::too_many_arguments)]
fn scaling(
    sigma: f64,
    drift_a: f64,
    drift_b: f64,
    c_values: Option<&Vec<f64>>,
    h: f64,
    alpha: &AlphaArg,
    epsilon: f64,
    out: &OutputArgs,
) -> Result<bool, BoxError> {
    let s = alpha.get()?;
    let c_values = c_values.cloned().unwrap_or_else(|| doubling_grid(8));
    let spec = ScalingSpec::new(sigma, drift_a, drift_b, c_values)?;
    let rows = scaling_sweep(&spec, h, s)?;
    let last = rows.last().expect("non-empty grid");
    let body = ScalingOut {
        upper_half_decreasing: decreasing_on_upper_half(&rows),
        final_below_epsilon: last.columns().iter().all(|&v| v < epsilon),
        spec,
        h,
        alpha: s.value(),
        epsilon,
        rows: rows.clone(),
    };
    let text = match out.format {
        Format::Json => json("telegraph-box.scaling/1", &body)?,
        Format::Csv => sweep_csv(&rows),
        Format::Table => {
            let header: Vec<&str> = SWEEP_CSV_HEADER.split(',').collect();
            let mut g = Grid::new(&header);
            for r in &rows {
                g.push(
                    [r.c, r.lambda, r.mu, r.ec00, r.ec0h, r.etau, r.eta]
                        .into_iter()
                        .map(sig12)
                        .collect(),
                );
            }
            format!(
                "{}upper half decreasing: {}\nlast row below {}: {}\n",
                g.table(),
                body.upper_half_decreasing,
                sig12(epsilon),
                body.final_below_epsilon
            )
        }
    };
    emit(out, &text)?;
    Ok(true)
}

#[derive(Serialize)]
struct MgfRow {
    omega: f64,
    theta1: f64,
    theta2: f64,
    #[serde(rename = "F00")]
    f00: f64,
    #[serde(rename = "F0H")]
    f0h: f64,
    #[serde(rename = "FHH", skip_serializing_if = "Option::is_none")]
    fhh: Option<f64>,
    #[serde(rename = "FH0", skip_serializing_if = "Option::is_none")]
    fh0: Option<f64>,
}

#[derive(Serialize)]
struct Descent {
    d: f64,
    #[serde(rename = "P_H0")]
    p_h0: f64,
    #[serde(rename = "M_HH")]
    m_hh: Option<f64>,
    #[serde(rename = "M_H0")]
    m_h0: Option<f64>,
}

#[derive(Serialize)]
struct MgfOut {
    params: ModelParams,
    rows: Vec<MgfRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    descent: Option<Descent>,
}

fn mgf(model: &ModelArgs, omegas: &[f64], d: Option<f64>, out: &OutputArgs) -> Result<bool, BoxError> {
    let p = model.params()?;
    let mut rows = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let r = theta_roots(omega, &p)?;
        let o = transform_from_origin(omega, &p)?;
        let l = d.map(|d| transform_from_h(omega, d, &p)).transpose()?;
        rows.push(MgfRow {
            omega,
            theta1: r.theta1,
            theta2: r.theta2,
            f00: o.f00,
            f0h: o.f0h,
            fhh: l.map(|l| l.fhh),
            fh0: l.map(|l| l.fh0),
        });
    }
    let descent = match d {
        Some(d) => {
            let means = match conditional_cycle_means(d, &p) {
                Ok(m) => Some(m),
                Err(Error::DegenerateRates { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            Some(Descent {
                d,
                p_h0: conditional_hit_prob(d, &p)?,
                m_hh: means.map(|m| m.mhh),
                m_h0: means.map(|m| m.mh0),
            })
        }
        None => None,
    };
    let mut header = vec!["omega", "theta1", "theta2", "F00", "F0H"];
    if d.is_some() {
        header.extend(["FHH", "FH0"]);
    }
    let mut g = Grid::new(&header);
    for r in &rows {
        let mut cells = vec![sig12(r.omega), sig12(r.theta1), sig12(r.theta2), sig12(r.f00), sig12(r.f0h)];
        if let (Some(a), Some(b)) = (r.fhh, r.fh0) {
            cells.extend([sig12(a), sig12(b)]);
        }
        g.push(cells);
    }
    let text = match out.format {
        Format::Json => json("telegraph-box.mgf/1", MgfOut { params: p, rows, descent })?,
        Format::Csv => g.csv(),
        Format::Table => {
            let mut t = g.table();
            if let Some(ds) = &descent {
                t.push_str(&format!(
                    "d = {}: P_H0 = {}, M_HH = {}, M_H0 = {}\n",
                    sig12(ds.d),
                    sig12(ds.p_h0),
                    opt(ds.m_hh),
                    opt(ds.m_h0)
                ));
            }
            t
        }
    };
    emit(out, &text)?;
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool, BoxError> {
    match &cli.command {
        Command::Analytics { model, alpha, out } => analytics(model, alpha, out),
        Command::Simulate {
            model,
            alpha,
            mc,
            dump_paths,
            out,
        } => simulate(model, alpha, mc, dump_paths.as_ref(), out),
        Command::Validate {
            model,
            alpha,
            mc,
            z_max,
            out,
        } => run_validate(model, alpha, mc, *z_max, out),
        Command::Scaling {
            sigma,
            drift_a,
            drift_b,
            c_values,
            h,
            alpha,
            epsilon,
            out,
        } => scaling(*sigma, *drift_a, *drift_b, c_values.as_ref(), *h, alpha, *epsilon, out),
        Command::Mgf { model, omega, d, out } => mgf(model, omega, *d, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
