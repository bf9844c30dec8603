//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid input or usage, 3 for numerical
//! failures (no convergence, tail bound, singular values, failing criteria).
//! `--config FILE` reads `key = value` lines as if they were `--key value`
//! flags; flags given on the command line win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::cumulants::{cumulants_from_moments, freeness_check, joint_from_free_cumulants, CumulantFamily};
use crate::dual::{CMat, C64};
use crate::error::{Error, Result};
use crate::measures::{cauchy_g, inf_cauchy_g, InfLaw};
use crate::oracle::{MomentOracle, ScalarLawOracle};
use crate::ovspace::{lift_scalar_matrix, OVLaw};
use crate::rmt::{rmt_verify, EnsembleKind, EnsembleSpec, Engine};
use crate::subord::{ov_inf_convolve, scalar_inf_convolve, SolveOptions};
use crate::verify::{run as run_criterion, Budget};

pub const LAW_CSV_HEADER: &str = "z_re,z_im,G_re,G_im,g_re,g_im";
pub const CONVOLVE_CSV_HEADER: &str =
    "z_re,z_im,G_re,G_im,g_re,g_im,omega1_re,omega1_im,omega2_re,omega2_im,resF,iters";

#[derive(Parser, Debug)]
#[command(name = "infinifree", version, about = "Infinitesimal free probability toolkit")]
struct Cli {
    /// Key-value file supplying defaults for flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Law utilities.
    Law {
        #[command(subcommand)]
        action: LawAction,
    },
    /// Free cumulants κₙ and infinitesimal cumulants κ′ₙ of a law.
    Cumulants(CumulantsArgs),
    /// G and g of x + y over a grid, x and y infinitesimally free.
    Convolve(ConvolveArgs),
    /// Operator-valued G and g of x + y at a point b.
    OvConvolve(OvConvolveArgs),
    /// Moments of a matrix lift of scalar variables.
    Lift(LiftArgs),
    /// Test infinitesimal freeness of cumulant-built families.
    FreenessCheck(FreenessArgs),
    /// Monte Carlo check of g for GUE plus a diagonal spike.
    RmtVerify(RmtArgs),
    /// Run the acceptance suite.
    VerifyAll(VerifyArgs),
}

#[derive(Subcommand, Debug)]
enum LawAction {
    /// G and g of a law on a grid or at one point.
    Show(ShowArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Real grid `re0:re1:count`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Height of the grid above the real axis.
    #[arg(long, default_value_t = 1.0)]
    imag: f64,
    /// A single point such as `0+2i`.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
}

#[derive(Args, Debug)]
struct ShowArgs {
    /// Law JSON file.
    #[arg(long)]
    law: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "csv")]
    out: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct CumulantsArgs {
    #[arg(long)]
    law: PathBuf,
    #[arg(long, default_value_t = 6)]
    order: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ConvolveArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Stopping tolerance of the fixed-point iteration.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, value_enum, default_value = "csv")]
    out: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct OvConvolveArgs {
    /// Operator-valued law config.
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Matrix JSON `[[[re, im], …], …]`.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_enum, default_value = "json")]
    out: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct LiftArgs {
    /// `scalar_lift` law config with `entries`.
    #[arg(long)]
    law: PathBuf,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct FreenessArgs {
    /// JSON `{"families": [family, …]}`.
    #[arg(long)]
    families: PathBuf,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EnsembleName {
    Gue,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineName {
    Tridiagonal,
    Dense,
}

#[derive(Args, Debug)]
struct RmtArgs {
    #[arg(long, value_enum, default_value = "gue")]
    ensemble: EnsembleName,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Comma-separated diagonal entries.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    spike: String,
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, allow_hyphen_values = true)]
    z: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "tridiagonal")]
    engine: EngineName,
    #[arg(long, value_enum, default_value = "json")]
    out: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Comma-separated criterion numbers; all when absent.
    #[arg(long)]
    only: Option<String>,
    /// Smaller Monte Carlo budgets for criterion 10.
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    output: Output,
}

/// Runs the command line and returns the exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv: Vec<String> = args.into_iter().collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok((body, path, summary)) => match emit(&body, path.as_deref(), &summary) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                3
            } else {
                2
            }
        }
    }
}

/// Appends `--key value` for every config line whose flag is not given.
fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .cloned()
        .ok_or_else(|| Error::Invalid("--config needs a file".into()))?;
    argv.drain(pos..pos + 2);
    let text = std::fs::read_to_string(&path)?;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("{path}:{}: expected key = value", k + 1)))?;
        let flag = format!("--{}", key.trim());
        if argv.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let value = value.trim();
        if value == "true" {
            argv.push(flag);
        } else if value != "false" {
            argv.push(format!("{flag}={value}"));
        }
    }
    Ok(argv)
}

fn emit(body: &str, path: Option<&Path>, summary: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, body)?;
            println!("{summary}");
        }
        None => {
            print!("{body}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

type Outcome = (String, Option<PathBuf>, String);

fn execute(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Law {
            action: LawAction::Show(a),
        } => law_show(a),
        Command::Cumulants(a) => cumulants_cmd(a),
        Command::Convolve(a) => convolve_cmd(a),
        Command::OvConvolve(a) => ov_convolve_cmd(a),
        Command::Lift(a) => lift_cmd(a),
        Command::FreenessCheck(a) => freeness_cmd(a),
        Command::RmtVerify(a) => rmt_cmd(a),
        Command::VerifyAll(a) => verify_cmd(a),
    }
}

/// Parses `a+bi`, `a-bi`, `bi`, `a`, `i`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Invalid(format!("cannot read complex number '{s}'"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|r| C64::new(r, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |x: &str| -> Result<f64> {
        match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => x.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => Ok(C64::new(body[..k].parse::<f64>().map_err(|_| bad())?, imag(&body[k..])?)),
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

/// Points of `re0:re1:count` at height `imag`, or the single `z`.
fn grid_points(g: &GridArgs) -> Result<Vec<C64>> {
    if let Some(z) = &g.z {
        return Ok(vec![parse_complex(z)?]);
    }
    let spec = g
        .grid
        .as_ref()
        .ok_or_else(|| Error::Invalid("give --grid re0:re1:count or --z".into()))?;
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Invalid(format!("grid '{spec}' is not re0:re1:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(Error::Invalid("grid count must be at least 1".into()));
    }
    if !(g.imag > 0.0) {
        return Err(Error::Invalid(format!("--imag must be positive, got {}", g.imag)));
    }
    Ok((0..n)
        .map(|k| {
            let re = if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 };
            C64::new(re, g.imag)
        })
        .collect())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// A law file; a law without `μ′` is read as having `μ′ = 0`.
fn read_law(path: &Path) -> Result<InfLaw> {
    let law = InfLaw::from_json(&read_json(path)?)?;
    if law.has_inf() {
        Ok(law)
    } else {
        law.with_inf_atoms(&[])
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be positive, got {v}")))
    }
}

fn law_show(a: ShowArgs) -> Result<Outcome> {
    let law = read_law(&a.law)?;
    let pts = grid_points(&a.grid)?;
    let mut rows = vec![];
    for &z in &pts {
        rows.push((z, cauchy_g(&law, z)?, inf_cauchy_g(&law, z)?));
    }
    let body = match a.out {
        Format::Csv => {
            let mut s = format!("{LAW_CSV_HEADER}\n");
            for (z, g, gi) in &rows {
                let _ = writeln!(s, "{}", csv_row(&[z.re, z.im, g.re, g.im, gi.re, gi.im]));
            }
            s
        }
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|(z, g, gi)| json!({"z": cx(*z), "G": cx(*g), "g": cx(*gi)}))
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&v)?)
        }
    };
    Ok((body, a.output.output, format!("law show: {} points", rows.len())))
}

/// Shortest round-trip form, in exponent notation for very small or large values.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_row(fields: &[f64]) -> String {
    fields.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",")
}

fn cx(z: C64) -> Value {
    json!([z.re, z.im])
}

fn mat_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| cx(m[(i, j)])).collect()))
            .collect(),
    )
}

fn mat_from_json(v: &Value) -> Result<CMat> {
    let bad = || Error::Invalid("matrix must be [[[re, im], …], …], square".into());
    let rows = v.as_array().ok_or_else(bad)?;
    let d = rows.len();
    let mut m = CMat::zeros(d, d);
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().filter(|r| r.len() == d).ok_or_else(bad)?;
        for (j, e) in r.iter().enumerate() {
            let p = e.as_array().filter(|p| p.len() == 2).ok_or_else(bad)?;
            let re = p[0].as_f64().ok_or_else(bad)?;
            let im = p[1].as_f64().ok_or_else(bad)?;
            m[(i, j)] = C64::new(re, im);
        }
    }
    if d == 0 {
        return Err(bad());
    }
    Ok(m)
}

fn cumulants_cmd(a: CumulantsArgs) -> Result<Outcome> {
    let law = read_law(&a.law)?;
    if a.order > law.order() {
        return Err(Error::MissingOrder(a.order));
    }
    let o = ScalarLawOracle::new(1, law.std_moments.clone(), Some(law.inf_or_zero()));
    let fam = cumulants_from_moments(&o, &[0], a.order)?;
    let body = format!("{}\n", serde_json::to_string_pretty(&fam.to_json())?);
    Ok((body, a.output.output, format!("cumulants: orders 1..={}", a.order)))
}

fn convolve_cmd(a: ConvolveArgs) -> Result<Outcome> {
    positive("--tol", a.tol)?;
    let (x, y) = (read_law(&a.x)?, read_law(&a.y)?);
    let pts = grid_points(&a.grid)?;
    let opts = SolveOptions {
        tol: a.tol,
        ..SolveOptions::scalar()
    };
    let mut rows = vec![];
    for &z in &pts {
        rows.push(scalar_inf_convolve(&x, &y, z, opts)?);
    }
    let worst = rows.iter().map(|r| r.residual_f).fold(0.0, f64::max);
    let body = match a.out {
        Format::Csv => {
            let mut s = format!("{CONVOLVE_CSV_HEADER}\n");
            for r in &rows {
                let g = r.inf.expect("both laws carry μ′");
                let row = csv_row(&[
                    r.z.re, r.z.im, r.g.re, r.g.im, g.re, g.im, r.omega1.re, r.omega1.im, r.omega2.re, r.omega2.im,
                    r.residual_f,
                ]);
                let _ = writeln!(s, "{row},{}", r.iterations);
            }
            s
        }
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&serde_json::to_value(&rows)?)?),
    };
    Ok((
        body,
        a.output.output,
        format!("convolve: {} points, max residual_F {}", rows.len(), num(worst)),
    ))
}

/// Operator-valued law config:
/// `{"d", "M", "K", "kind": "cumulant_family" | "scalar_lift", …}`.
///
/// `cumulant_family` takes `"family"` (inline or a path). `scalar_lift`
/// takes `"law"` for `x ⊗ 1_d`, or `"laws"` (free scalar variables, labels
/// in order) with `"entries"`, a d×d array of labels or null.
pub fn ov_law_from_json(v: &Value, base: &Path) -> Result<OVLaw> {
    let bad = |m: &str| Error::Invalid(format!("law config: {m}"));
    let d = v["d"].as_u64().ok_or_else(|| bad("missing d"))? as usize;
    let m = v["M"].as_f64().ok_or_else(|| bad("missing M"))?;
    let k = v["K"].as_u64().map(|k| k as usize);
    let inline = |key: &str| -> Result<Value> {
        match &v[key] {
            Value::String(p) => read_json(&base.join(p)),
            Value::Null => Err(bad(&format!("missing {key}"))),
            other => Ok(other.clone()),
        }
    };
    let mut law = match v["kind"].as_str() {
        Some("cumulant_family") => {
            let fam = CumulantFamily::from_json(&inline("family")?)?;
            if fam.dim() != d {
                return Err(bad("family dimension differs from d"));
            }
            OVLaw::from_cumulants(fam, m)?
        }
        Some("scalar_lift") if v.get("entries").is_some() => {
            let k = k.ok_or_else(|| bad("missing K"))?;
            let oracle = lift_oracle(v, base, k)?;
            OVLaw::series(Arc::new(oracle), vec![0], m, k)?
        }
        Some("scalar_lift") => {
            let mut l = InfLaw::from_json(&inline("law")?)?;
            if !l.has_inf() {
                l = l.with_inf_atoms(&[])?;
            }
            let mut o = OVLaw::diagonal(l, d);
            o.m_bound = m;
            o
        }
        _ => return Err(bad("kind must be cumulant_family or scalar_lift")),
    };
    if let Some(k) = k {
        law = law.with_order(k);
    }
    if let Some(t) = v["tail_tol"].as_f64() {
        law = law.with_tail_tol(t);
    }
    Ok(law)
}

fn lift_oracle(v: &Value, base: &Path, order: usize) -> Result<crate::ovspace::LiftOracle> {
    let bad = |m: &str| Error::Invalid(format!("lift config: {m}"));
    let d = v["d"].as_u64().ok_or_else(|| bad("missing d"))? as usize;
    let laws = v["laws"].as_array().ok_or_else(|| bad("missing laws"))?;
    let mut families = vec![];
    for (label, l) in laws.iter().enumerate() {
        let lv = match l {
            Value::String(p) => read_json(&base.join(p))?,
            other => other.clone(),
        };
        let law = InfLaw::from_json(&lv)?;
        let o = ScalarLawOracle::new(1, law.std_moments.clone(), Some(law.inf_or_zero()));
        families.push(cumulants_from_moments(&o, &[0], order)?.relabeled(|_| label));
    }
    let joint = joint_from_free_cumulants(families)?;
    let rows = v["entries"].as_array().ok_or_else(|| bad("entries must be an array"))?;
    let mut entries = vec![vec![None; d]; d];
    if rows.len() != d {
        return Err(bad("entries must be d×d"));
    }
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().filter(|r| r.len() == d).ok_or_else(|| bad("entries must be d×d"))?;
        for (j, e) in r.iter().enumerate() {
            entries[i][j] = match e {
                Value::Null => None,
                x => {
                    let l = x.as_u64().ok_or_else(|| bad("entry labels are integers or null"))? as usize;
                    if l >= laws.len() {
                        return Err(bad(&format!("label {l} has no law")));
                    }
                    Some(l)
                }
            };
        }
    }
    lift_scalar_matrix(Arc::new(joint), vec![entries], d)
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ov_convolve_cmd(a: OvConvolveArgs) -> Result<Outcome> {
    positive("--tol", a.tol)?;
    let x = ov_law_from_json(&read_json(&a.x)?, &parent(&a.x))?;
    let y = ov_law_from_json(&read_json(&a.y)?, &parent(&a.y))?;
    let b = mat_from_json(&read_json(&a.b)?)?;
    let opts = SolveOptions {
        tol: a.tol,
        ..SolveOptions::matrix()
    };
    let r = ov_inf_convolve(&x, &y, &b, opts)?;
    if let Format::Csv = a.out {
        return Err(Error::Invalid("ov-convolve writes JSON".into()));
    }
    let v = json!({
        "G": mat_json(&r.g_sum),
        "g": mat_json(&r.inf),
        "g_embedded": mat_json(&r.inf_embedded),
        "omega1": mat_json(&r.omega1),
        "omega2": mat_json(&r.omega2),
        "residual_F": r.residual_f,
        "residual_G": r.residual_g,
        "iters": r.iterations,
    });
    let gap = (r.inf.clone() - &r.inf_embedded).iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok((
        format!("{}\n", serde_json::to_string_pretty(&v)?),
        a.output.output,
        format!("ov-convolve: residual_F {}, route gap {}", num(r.residual_f), num(gap)),
    ))
}

fn lift_cmd(a: LiftArgs) -> Result<Outcome> {
    let v = read_json(&a.law)?;
    let o = lift_oracle(&v, &parent(&a.law), a.order)?;
    let d = o.dim();
    let (mut std, mut inf) = (vec![], vec![]);
    for k in 1..=a.order {
        let ids = vec![CMat::identity(d, d); k + 1];
        std.push(mat_json(&o.moment(&vec![0; k], &ids)?));
        inf.push(mat_json(&o.inf_moment(&vec![0; k], &ids)?));
    }
    let body = json!({"d": d, "moments": std, "inf_moments": inf});
    Ok((
        format!("{}\n", serde_json::to_string_pretty(&body)?),
        a.output.output,
        format!("lift: {d}x{d} moments of orders 1..={}", a.order),
    ))
}

fn freeness_cmd(a: FreenessArgs) -> Result<Outcome> {
    positive("--tol", a.tol)?;
    let v = read_json(&a.families)?;
    let list = v["families"]
        .as_array()
        .ok_or_else(|| Error::Invalid("expected {\"families\": [...]}".into()))?;
    let base = parent(&a.families);
    let fams = list
        .iter()
        .map(|f| match f {
            Value::String(p) => CumulantFamily::from_json(&read_json(&base.join(p))?),
            other => CumulantFamily::from_json(other),
        })
        .collect::<Result<Vec<_>>>()?;
    let joint = joint_from_free_cumulants(fams)?;
    let r = freeness_check(&joint, &joint.labeling(), a.order)?;
    let worst = r.max_violation();
    let mut v = serde_json::to_value(&r)?;
    v["max_violation"] = json!(worst);
    v["free"] = json!(worst <= a.tol);
    let rel = if worst <= a.tol { "≤" } else { ">" };
    Ok((
        format!("{}\n", serde_json::to_string_pretty(&v)?),
        a.output.output,
        format!("max violation {} {rel} {}", num(worst), num(a.tol)),
    ))
}

fn rmt_cmd(a: RmtArgs) -> Result<Outcome> {
    let EnsembleName::Gue = a.ensemble;
    let diag: Vec<f64> = a
        .spike
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad spike entry '{s}'"))))
        .collect::<Result<_>>()?;
    let kind = if diag.is_empty() {
        EnsembleKind::Gue { variance: a.variance }
    } else {
        EnsembleKind::GueSpiked {
            variance: a.variance,
            diag,
        }
    };
    let spec = EnsembleSpec::new(a.n, kind, a.seed, a.trials)?;
    let engine = match a.engine {
        EngineName::Tridiagonal => Engine::Tridiagonal,
        EngineName::Dense => Engine::Dense,
    };
    let r = rmt_verify(&spec, parse_complex(&a.z)?, engine)?;
    let body = match a.out {
        Format::Json => format!(
            "{{\"g_hat\":{},\"std_err\":{},\"prediction\":{},\"sigma_distance\":{}}}\n",
            cx(r.g_hat.value),
            json!(r.g_hat.std_error),
            cx(r.prediction),
            json!(r.sigma_distance)
        ),
        Format::Csv => format!(
            "g_hat_re,g_hat_im,std_err,prediction_re,prediction_im,sigma_distance\n{}\n",
            csv_row(&[
                r.g_hat.value.re,
                r.g_hat.value.im,
                r.g_hat.std_error,
                r.prediction.re,
                r.prediction.im,
                r.sigma_distance
            ])
        ),
    };
    Ok((body, a.output.output, format!("rmt-verify: {:.2} standard errors", r.sigma_distance)))
}

fn verify_cmd(a: VerifyArgs) -> Result<Outcome> {
    let ids: Vec<usize> = match &a.only {
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|k| (1..=11).contains(k))
                    .ok_or_else(|| Error::Invalid(format!("no criterion '{t}'")))
            })
            .collect::<Result<_>>()?,
        None => (1..=11).collect(),
    };
    let budget = if a.quick {
        Budget {
            null_trials: 4_000,
            slope_trials: 20_000,
        }
    } else {
        Budget::default()
    };
    let mut body = String::new();
    let mut failed = vec![];
    for id in ids.iter().copied() {
        let c = run_criterion(id, budget);
        if a.output.output.is_some() {
            eprintln!("{c}");
        }
        let _ = writeln!(body, "{c}");
        if !c.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        if let Some(p) = &a.output.output {
            std::fs::write(p, &body)?;
        } else {
            print!("{body}");
        }
        return Err(Error::Residual {
            name: "failing criteria",
            value: failed.len() as f64,
            tol: 0.0,
        });
    }
    Ok((body, a.output.output, format!("verify-all: {} of {} criteria pass", ids.len(), ids.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("0+3i").unwrap(), C64::new(0.0, 3.0));
        assert_eq!(parse_complex("1-2i").unwrap(), C64::new(1.0, -2.0));
        assert_eq!(parse_complex("2i").unwrap(), C64::new(0.0, 2.0));
        assert_eq!(parse_complex("-i").unwrap(), C64::new(0.0, -1.0));
        assert_eq!(parse_complex("1.5").unwrap(), C64::new(1.5, 0.0));
        assert_eq!(parse_complex("1e-3+2e+1i").unwrap(), C64::new(1e-3, 20.0));
        assert!(parse_complex("x").is_err());
    }

    #[test]
    fn grids() {
        let g = GridArgs {
            grid: Some("-1:1:3".into()),
            imag: 0.5,
            z: None,
        };
        let p = grid_points(&g).unwrap();
        assert_eq!(p, vec![C64::new(-1.0, 0.5), C64::new(0.0, 0.5), C64::new(1.0, 0.5)]);
        let bad = GridArgs {
            grid: Some("0:1:0".into()),
            imag: 1.0,
            z: None,
        };
        assert!(grid_points(&bad).is_err());
    }
}
