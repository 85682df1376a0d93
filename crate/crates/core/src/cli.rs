//! Command-line front end: channel documents, JSON reports and CSV sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::catalog::{
    ad_channel, ad_sql_closed_form, depolarizing_channel, depolarizing_closed_forms, fig3_sweep,
    fig4_sweep, interferometer_channel, optimal_photon_distribution, pauli_channel, pauli_design,
    pauli_noise_channel, u_covariance_additivity_check, unitary_channel, DepolarizingParams,
    EpsilonRule,
};
use crate::channel::{HnksDecision, HnksReport, ParamChannel};
use crate::dephasing::{
    closed_form_bounds, dephasing_channel, dicke_moments, husimi_grid, qfi_split_check,
    recommended_squeezing, squeezed_asymptote_check, squeezed_moments_closed_form,
    squeezed_state_dicke, DephasingParams, SqueezedSpec,
};
use crate::error::{Error, Result};
use crate::numerics::{c, hermitian_part, identity, pauli_z, CMatrix, CVector, Tolerances, C64};
use crate::qec::{hl_code, hl_recovery, logical_channel, sql_find_ctilde, sql_protocol, LogicalDephasing, Recovery};
use crate::qfi::{
    channel_qfi_single, hl_constant, min_h_trace, n_copy_qfi, optimal_input_single, sql_constant, QfiReport,
};
use crate::sdp::SdpDiagnostics;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "channel-qfi", version, about = "Quantum Fisher information of parameterized channels")]
pub struct Cli {
    #[command(flatten)]
    pub tolerances: TolArgs,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, env = "CHANNEL_QFI_JOBS", default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TolArgs {
    #[arg(long, global = true, env = "CHANNEL_QFI_TOL_HERM", default_value_t = 1e-9)]
    pub tol_herm: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_TOL_PSD", default_value_t = 1e-9)]
    pub tol_psd: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_TOL_NULL", default_value_t = 1e-9)]
    pub tol_null: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_TOL_RANK", default_value_t = 1e-9)]
    pub tol_rank: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_TOL_HNKS", default_value_t = 1e-7)]
    pub tol_hnks: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_SDP_GAP", default_value_t = 1e-8)]
    pub sdp_gap: f64,
    #[arg(long, global = true, env = "CHANNEL_QFI_SDP_MAX_ITER", default_value_t = 200)]
    pub sdp_max_iter: usize,
}

impl TolArgs {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            herm: self.tol_herm,
            psd: self.tol_psd,
            null: self.tol_null,
            rank: self.tol_rank,
            hnks: self.tol_hnks,
            sdp_gap: self.sdp_gap,
            sdp_max_iter: self.sdp_max_iter,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-use QFI and the asymptotic constant of a channel.
    Qfi {
        #[arg(long)]
        channel: PathBuf,
        /// Also compute the QFI of N parallel uses (N <= 3).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Decide whether the Hamiltonian lies in the Kraus span.
    Hnks {
        #[arg(long)]
        channel: PathBuf,
    },
    /// Construct an error-correcting protocol for the channel.
    Code {
        #[arg(long)]
        channel: PathBuf,
        /// Allowed shortfall from the optimal linear-scaling constant.
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        /// Initial perturbation strength.
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Write CSV tables for a preset parameter sweep.
    Sweep {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long)]
        out: PathBuf,
        /// Grid points per axis.
        #[arg(long, default_value_t = 91)]
        points: usize,
        /// Also compute every grid point by SDP (fig3 only).
        #[arg(long)]
        sdp: bool,
    },
    /// Run the internal consistency checks.
    Verify {
        /// Print a JSON summary instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig3,
    Fig4,
    Squeezed,
}

type JsonMatrix = Vec<Vec<[f64; 2]>>;

/// A channel given explicitly or by catalog name.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ChannelDocument {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: Map<String, Value>,
        #[serde(default)]
        omega: f64,
    },
    Explicit {
        d_in: usize,
        d_out: usize,
        kraus: Vec<JsonMatrix>,
        dkraus: Vec<JsonMatrix>,
        #[serde(default)]
        label: Option<String>,
    },
}

fn matrix_from_json(m: &JsonMatrix, rows: usize, cols: usize, what: &str) -> Result<CMatrix> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape(format!("{what} must be {rows}x{cols}")));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| c(m[i][j][0], m[i][j][1])))
}

pub fn matrix_to_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

fn complex_to_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn param(params: &Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidParameter(format!("parameter `{key}` must be a number"))),
        None => default.ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{key}`"))),
    }
}

fn param4(params: &Map<String, Value>, key: &str) -> Result<Option<[f64; 4]>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => {
            let arr: Vec<f64> = serde_json::from_value(v.clone())?;
            let fixed: [f64; 4] = arr
                .try_into()
                .map_err(|_| Error::InvalidParameter(format!("`{key}` must have four entries")))?;
            Ok(Some(fixed))
        }
    }
}

impl ChannelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_channel(&self) -> Result<ParamChannel> {
        match self {
            ChannelDocument::Explicit { d_in, d_out, kraus, dkraus, label } => {
                if kraus.len() != dkraus.len() {
                    return Err(Error::Shape("kraus and dkraus must have equal length".into()));
                }
                let k = kraus
                    .iter()
                    .map(|m| matrix_from_json(m, *d_out, *d_in, "Kraus operator"))
                    .collect::<Result<Vec<_>>>()?;
                let kd = dkraus
                    .iter()
                    .map(|m| matrix_from_json(m, *d_out, *d_in, "Kraus derivative"))
                    .collect::<Result<Vec<_>>>()?;
                ParamChannel::new(k, kd, label.clone().unwrap_or_else(|| "custom".into()))
            }
            ChannelDocument::Builtin { builtin, params, omega } => match builtin.as_str() {
                "dephasing" => dephasing_channel(&DephasingParams::new(
                    param(params, "p", None)?,
                    param(params, "phi", Some(*omega))?,
                    param(params, "dp", Some(0.0))?,
                    param(params, "dphi", Some(1.0))?,
                )?),
                "depolarizing" => depolarizing_channel(
                    &DepolarizingParams::new(
                        param(params, "px", Some(0.0))?,
                        param(params, "py", Some(0.0))?,
                        param(params, "pz", Some(0.0))?,
                    )?,
                    *omega,
                ),
                "amplitude_damping" => ad_channel(param(params, "p", None)?, *omega),
                "pauli" => match (param4(params, "probs")?, param4(params, "dprobs")?) {
                    (Some(p), Some(dp)) => pauli_channel(p, dp),
                    (None, None) => pauli_noise_channel(param(params, "q", None)?),
                    _ => Err(Error::InvalidParameter("pauli needs both `probs` and `dprobs`, or `q`".into())),
                },
                "interferometer" => {
                    let m = param(params, "m", None)?;
                    if m.fract() != 0.0 || m < 1.0 {
                        return Err(Error::InvalidParameter("`m` must be a positive integer".into()));
                    }
                    interferometer_channel(m as usize, param(params, "p", None)?, *omega)
                }
                "unitary" => {
                    let h = match params.get("generator") {
                        Some(v) => {
                            let m: JsonMatrix = serde_json::from_value(v.clone())?;
                            let n = m.len();
                            matrix_from_json(&m, n, n, "generator")?
                        }
                        None => pauli_z() * c(0.5, 0.0),
                    };
                    unitary_channel(&h, *omega)
                }
                other => Err(Error::InvalidParameter(format!(
                    "unknown builtin `{other}`; expected dephasing, depolarizing, amplitude_damping, pauli, interferometer or unitary"
                ))),
            },
        }
    }
}

fn tolerances_json(tol: &Tolerances) -> Value {
    serde_json::to_value(tol).expect("tolerances serialize")
}

fn hnks_json(h: &HnksReport) -> Value {
    json!({
        "decision": h.decision,
        "residual": h.residual,
        "span_dimension": h.span_dimension,
        "warning": h.warning,
    })
}

fn diagnostics_json(d: &Option<SdpDiagnostics>) -> Value {
    match d {
        Some(d) => serde_json::to_value(d).expect("diagnostics serialize"),
        None => Value::Null,
    }
}

fn qfi_json(r: &QfiReport) -> Value {
    json!({
        "value": r.value,
        "regime": r.regime,
        "optimal_h": r.optimal_h.as_ref().map(matrix_to_json),
        "optimal_input": r.optimal_input.as_ref().map(matrix_to_json),
        "cross_check": r.cross_check,
        "diagnostics": diagnostics_json(&r.diagnostics),
    })
}

fn header(command: &str, ch: &ParamChannel, tol: &Tolerances) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert(
        "channel".into(),
        json!({"label": ch.label, "d_in": ch.d_in(), "d_out": ch.d_out(), "kraus_rank": ch.reduced(tol).rank()}),
    );
    m.insert("tolerances".into(), tolerances_json(tol));
    m
}

pub fn qfi_report(ch: &ParamChannel, n: Option<usize>, tol: &Tolerances) -> Result<Value> {
    let mut m = header("qfi", ch, tol);
    let hn = ch.hnks(tol);
    m.insert("hnks".into(), hnks_json(&hn));
    m.insert("f1".into(), qfi_json(&channel_qfi_single(ch, tol)?));
    match hn.decision {
        HnksDecision::InSpan => {
            m.insert("f_sql".into(), qfi_json(&sql_constant(ch, tol)?));
        }
        HnksDecision::NotInSpan => {
            m.insert("f_hl".into(), qfi_json(&hl_constant(ch, tol)?));
        }
    }
    if let Some(n) = n {
        m.insert("n_copy".into(), serde_json::to_value(n_copy_qfi(ch, n, tol)?)?);
    }
    Ok(Value::Object(m))
}

pub fn hnks_report(ch: &ParamChannel, tol: &Tolerances) -> Result<Value> {
    let mut m = header("hnks", ch, tol);
    m.insert("hnks".into(), hnks_json(&ch.hnks(tol)));
    m.insert("hamiltonian".into(), matrix_to_json(&ch.hamiltonian()));
    Ok(Value::Object(m))
}

fn logical_json(ld: &LogicalDephasing) -> Value {
    json!({"xi": complex_to_json(ld.xi), "dxi": complex_to_json(ld.dxi)})
}

pub fn code_report(ch: &ParamChannel, eta: f64, epsilon: f64, tol: &Tolerances) -> Result<Value> {
    let mut m = header("code", ch, tol);
    let hn = ch.hnks(tol);
    m.insert("hnks".into(), hnks_json(&hn));
    match hn.decision {
        HnksDecision::NotInSpan => {
            let hl = hl_code(ch, tol)?;
            let rec = hl_recovery(ch, &hl.code, tol)?;
            let ld = logical_channel(ch, &hl.code, &rec)?;
            let f_hl = hl_constant(ch, tol)?.value;
            let (r, q) = rec.bases()?;
            m.insert(
                "protocol".into(),
                json!({
                    "kind": "exact",
                    "a0": matrix_to_json(&hl.code.a0),
                    "a1": matrix_to_json(&hl.code.a1),
                    "ctilde": matrix_to_json(&hl.ctilde),
                    "recovery_r": matrix_to_json(&r),
                    "recovery_q": matrix_to_json(&q),
                    "knill_laflamme_residual": hl.kl_residual,
                    "logical": logical_json(&ld),
                    "achieved": ld.dxi.norm_sqr(),
                    "f_hl": f_hl,
                    "diagnostics": diagnostics_json(&Some(hl.diagnostics)),
                }),
            );
        }
        HnksDecision::InSpan => {
            let res = sql_protocol(ch, eta, epsilon, tol)?;
            let g = match &res.recovery {
                Recovery::Generator { g, .. } => g.clone(),
                Recovery::UnitaryFamily { q, .. } => q.clone(),
            };
            m.insert(
                "protocol".into(),
                json!({
                    "kind": "perturbation",
                    "c": matrix_to_json(&res.code.c),
                    "d": matrix_to_json(&res.code.d),
                    "epsilon": res.code.epsilon,
                    "generator": matrix_to_json(&g),
                    "logical": logical_json(&res.logical),
                    "achieved": res.achieved,
                    "limit": res.limit,
                    "f_sql": res.f_sql,
                    "gap": res.gap,
                    "eta": eta,
                    "halvings": res.halvings,
                }),
            );
        }
    }
    Ok(Value::Object(m))
}

/// `%.12g`-style formatting.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..12).contains(&e) {
        let dec = (11 - e).max(0) as usize;
        let s = format!("{x:.dec$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mant, exp) = s.split_once('e').expect("scientific format");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{exp}")
    }
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub const FIG4_RULES: [EpsilonRule; 4] = [
    EpsilonRule::Proportional(0.9),
    EpsilonRule::Proportional(0.5),
    EpsilonRule::Proportional(0.1),
    EpsilonRule::Limit,
];

pub const FIG4_RATES: [f64; 2] = [0.5, 0.001];

/// Writes the preset's CSV files into `out` and returns their paths.
pub fn run_sweep(preset: Preset, out: &Path, points: usize, sdp: bool, tol: &Tolerances) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    match preset {
        Preset::Fig3 => {
            let rows = fig3_sweep(0.1, points, sdp, tol)?;
            let path = out.join("fig3.csv");
            write_csv(
                &path,
                &["px", "py", "pz", "f1", "f_sql", "ratio", "f1_sdp", "f_sql_sdp"],
                rows.iter().map(|r| {
                    vec![
                        fmt_sig(r.px),
                        fmt_sig(r.py),
                        fmt_sig(0.1),
                        fmt_sig(r.f1),
                        fmt_sig(r.f_sql),
                        opt_cell(r.ratio),
                        opt_cell(r.f1_sdp),
                        opt_cell(r.f_sql_sdp),
                    ]
                }),
            )?;
            written.push(path);
        }
        Preset::Fig4 => {
            for p in FIG4_RATES {
                let cols: Vec<Vec<crate::catalog::Fig4Row>> =
                    FIG4_RULES.iter().map(|&r| fig4_sweep(p, r, points)).collect::<Result<_>>()?;
                let mut header = vec!["delta".to_string()];
                header.extend(FIG4_RULES.iter().map(|r| format!("ratio_{}", r.label())));
                let path = out.join(format!("fig4_p{p}.csv"));
                let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
                write_csv(
                    &path,
                    &hdr,
                    (0..points).map(|i| {
                        let mut row = vec![fmt_sig(cols[0][i].delta)];
                        row.extend(cols.iter().map(|c| fmt_sig(c[i].ratio)));
                        row
                    }),
                )?;
                written.push(path);
            }
        }
        Preset::Squeezed => {
            let params = DephasingParams::phase(0.1)?;
            let pts = squeezed_asymptote_check(&params, &[2, 4, 6, 8, 10])?;
            let path = out.join("squeezed.csv");
            write_csv(
                &path,
                &["n", "mu", "nu", "qfi", "qfi_per_probe", "error_propagation", "f_sql"],
                pts.iter().map(|p| {
                    vec![
                        p.n.to_string(),
                        fmt_sig(p.mu),
                        fmt_sig(p.nu),
                        fmt_sig(p.qfi),
                        fmt_sig(p.qfi_per_probe),
                        fmt_sig(p.error_propagation),
                        fmt_sig(p.f_sql),
                    ]
                }),
            )?;
            written.push(path);
            let spec = recommended_squeezing(50)?;
            let grid = husimi_grid(&spec, 181, 361)?;
            let path = out.join("husimi_n50.csv");
            write_csv(
                &path,
                &["theta", "phi", "q"],
                grid.iter().map(|(t, f, q)| vec![fmt_sig(*t), fmt_sig(*f), fmt_sig(*q)]),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name: name.into(), passed, detail },
        Err(e) => CheckResult {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_span_channel(rng: &mut ChaCha8Rng) -> Result<ParamChannel> {
    let (d, r) = (2, 3);
    let mut rnd = |rows: usize, cols: usize| CMatrix::from_fn(rows, cols, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let q = rnd(r * d, d).qr().q();
    let k: Vec<CMatrix> = (0..r).map(|i| q.rows(i * d, d).into_owned()).collect();
    let g = hermitian_part(&rnd(d, d));
    let h = hermitian_part(&rnd(r, r));
    let kd = (0..r)
        .map(|i| {
            let mut acc = &k[i] * &g * c(0.0, -1.0);
            for j in 0..r {
                acc -= &k[j] * (h[(i, j)] * c(0.0, 1.0));
            }
            acc
        })
        .collect();
    ParamChannel::new(k, kd, "random")
}

/// Fast consistency checks over the catalog. Randomized checks draw from `seed`.
pub fn run_verify(tol: &Tolerances, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(check("depolarizing closed forms vs SDP", || {
        let mut worst = 0.0f64;
        for (px, py, pz) in [(0.1, 0.2, 0.1), (0.05, 0.3, 0.2), (0.2, 0.0, 0.1)] {
            let params = DepolarizingParams::new(px, py, pz)?;
            let cf = depolarizing_closed_forms(&params);
            let ch = depolarizing_channel(&params, 0.0)?;
            worst = worst.max((channel_qfi_single(&ch, tol)?.value - cf.f1).abs());
            worst = worst.max((sql_constant(&ch, tol)?.value - cf.f_sql.unwrap_or(0.0)).abs());
        }
        Ok((worst < 1e-6, format!("max deviation {worst:.2e}")))
    }));
    out.push(check("amplitude damping constant", || {
        let v = sql_constant(&ad_channel(0.5, 0.0)?, tol)?.value;
        let dev = (v - ad_sql_closed_form(0.5)).abs();
        Ok((dev < 1e-6, format!("F_SQL = {v:.9}")))
    }));
    out.push(check("dephasing closed forms vs SDP", || {
        let params = DephasingParams::new(0.2, 0.0, 0.5, 1.0)?;
        let b = closed_form_bounds(&params)?;
        let ch = dephasing_channel(&params)?;
        let d1 = (channel_qfi_single(&ch, tol)?.value - b.f1).abs();
        let d2 = (sql_constant(&ch, tol)?.value - b.f_sql.unwrap_or(0.0)).abs();
        Ok((d1.max(d2) < 1e-6, format!("deviations {d1:.2e}, {d2:.2e}")))
    }));
    out.push(check("span decisions", || {
        let cases = [
            (dephasing_channel(&DephasingParams::phase(0.1)?)?, HnksDecision::InSpan),
            (dephasing_channel(&DephasingParams::phase(0.0)?)?, HnksDecision::NotInSpan),
            (depolarizing_channel(&DepolarizingParams::new(0.3, 0.0, 0.0)?, 0.0)?, HnksDecision::NotInSpan),
            (depolarizing_channel(&DepolarizingParams::new(0.1, 0.2, 0.1)?, 0.0)?, HnksDecision::InSpan),
            (ad_channel(0.3, 0.0)?, HnksDecision::InSpan),
        ];
        let ok = cases.iter().all(|(ch, want)| ch.hnks(tol).decision == *want);
        Ok((ok, format!("{} channels", cases.len())))
    }));
    out.push(check("exact code on single-axis noise", || {
        let ch = depolarizing_channel(&DepolarizingParams::new(0.3, 0.0, 0.0)?, 0.0)?;
        let hl = hl_code(&ch, tol)?;
        let ld = logical_channel(&ch, &hl.code, &hl_recovery(&ch, &hl.code, tol)?)?;
        let ok = hl.kl_residual < 1e-7 && (ld.xi.norm() - 1.0).abs() < 1e-7 && (ld.dxi.norm_sqr() - 1.0).abs() < 1e-5;
        Ok((ok, format!("KL {:.1e}, |xi| = {:.9}, |dxi|^2 = {:.9}", hl.kl_residual, ld.xi.norm(), ld.dxi.norm_sqr())))
    }));
    out.push(check("duality of the code objective", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let ch = random_span_channel(&mut rng)?;
            let cm = CMatrix::from_fn(2, 2, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let cm = &cm / C64::from(cm.norm());
            let primal = sql_find_ctilde(&ch, &cm, tol)?.value;
            let (dual, _) = min_h_trace(&ch.reduced(tol), &(&cm * cm.adjoint()), true, tol)?;
            worst = worst.max((primal - 4.0 * dual).abs() / (1.0 + primal.abs()));
        }
        Ok((worst < 1e-5, format!("max relative gap {worst:.2e}")))
    }));
    out.push(check("saddle point of the optimal input", || {
        let ch = dephasing_channel(&DephasingParams::phase(0.2)?)?;
        let opt = optimal_input_single(&ch, true, tol)?;
        Ok((opt.saddle_residual < 1e-6, format!("residual {:.2e}", opt.saddle_residual)))
    }));
    out.push(check("QFI split", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let params = DephasingParams::new(0.15, 0.3, 0.7, 1.2)?;
        let mut worst = 0.0f64;
        for n in [2, 4] {
            let psi = CVector::from_fn(1 << n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let psi = &psi / C64::from(psi.norm());
            worst = worst.max(qfi_split_check(&params, &psi, n)?.residual());
        }
        Ok((worst < 1e-7, format!("max residual {worst:.2e}")))
    }));
    out.push(check("squeezed moments", || {
        let mut worst = 0.0f64;
        for n in [4, 8, 12] {
            let spec = SqueezedSpec { n, mu: 0.3, nu: crate::dephasing::optimal_nu(n, 0.3) };
            let num = dicke_moments(&squeezed_state_dicke(&spec)?);
            let cf = squeezed_moments_closed_form(n, 0.3);
            worst = worst
                .max((num.jx_mean - cf.jx_mean).abs())
                .max((num.jx_var - cf.jx_var).abs())
                .max((num.jy_var - cf.jy_var).abs());
        }
        Ok((worst < 1e-9, format!("max deviation {worst:.2e}")))
    }));
    out.push(check("covariant additivity", || {
        let rep = u_covariance_additivity_check(&pauli_noise_channel(0.1)?, &pauli_design(), tol)?;
        let (f1, f2) = (rep.f1.unwrap_or(f64::NAN), rep.f2.unwrap_or(f64::NAN));
        Ok(((f2 - 2.0 * f1).abs() < 1e-5, format!("F1 = {f1:.9}, F2 = {f2:.9}")))
    }));
    out.push(check("interferometer diagonal reduction", || {
        let dist = optimal_photon_distribution(2, 0.3, tol)?;
        let full = channel_qfi_single(&interferometer_channel(2, 0.3, 0.0)?, tol)?.value;
        Ok(((dist.f1 - full).abs() < 1e-6, format!("{:.9} vs {full:.9}", dist.f1)))
    }));
    out.push(check("unitary channel limit", || {
        let f = hl_constant(&unitary_channel(&(pauli_z() * c(0.5, 0.0)), 0.0)?, tol)?.value;
        let f1 = channel_qfi_single(&ParamChannel::new(vec![identity(2)], vec![pauli_z() * c(0.0, -0.5)], "rotation")?, tol)?.value;
        Ok(((f - 1.0).abs() < 1e-6 && (f1 - 1.0).abs() < 1e-6, format!("F_HL = {f:.9}, F1 = {f1:.9}")))
    }));
    out
}

fn configure_pool(jobs: usize) {
    if jobs > 0 {
        // Fails only if a global pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn print_json(v: &Value) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, v)?;
    writeln!(stdout)?;
    Ok(())
}

/// Runs the parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let tol = cli.tolerances.tolerances();
    configure_pool(cli.jobs);
    let result = match &cli.command {
        Command::Qfi { channel, n } => ChannelDocument::load(channel)
            .and_then(|d| d.to_channel())
            .and_then(|ch| qfi_report(&ch, *n, &tol))
            .and_then(|v| print_json(&v)),
        Command::Hnks { channel } => ChannelDocument::load(channel)
            .and_then(|d| d.to_channel())
            .and_then(|ch| hnks_report(&ch, &tol))
            .and_then(|v| print_json(&v)),
        Command::Code { channel, eta, epsilon } => ChannelDocument::load(channel)
            .and_then(|d| d.to_channel())
            .and_then(|ch| code_report(&ch, *eta, *epsilon, &tol))
            .and_then(|v| print_json(&v)),
        Command::Sweep { preset, out, points, sdp } => run_sweep(*preset, out, *points, *sdp, &tol).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
        Command::Verify { json } => {
            let results = run_verify(&tol, cli.seed);
            let failed = results.iter().filter(|r| !r.passed).count();
            if *json {
                let v = json!({
                    "schema_version": SCHEMA_VERSION,
                    "tool_version": env!("CARGO_PKG_VERSION"),
                    "tolerances": tolerances_json(&tol),
                    "seed": cli.seed,
                    "checks": results,
                    "failed": failed,
                });
                if let Err(e) = print_json(&v) {
                    eprintln!("error: {e}");
                    return e.exit_kind() as i32;
                }
            } else {
                for r in &results {
                    println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                }
                println!("{} of {} checks passed", results.len() - failed, results.len());
            }
            return if failed == 0 { 0 } else { 1 };
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_kind() as i32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ExitKind;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.4), "0.4");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(1234.5), "1234.5");
        assert_eq!(fmt_sig(1e-9), "1e-9");
        assert_eq!(fmt_sig(-2.5e20), "-2.5e20");
        assert_eq!(fmt_sig(0.0), "0");
    }

    #[test]
    fn builtin_documents() {
        let tol = Tolerances::default();
        let doc = ChannelDocument::parse(r#"{"builtin": "dephasing", "params": {"p": 0.1}}"#).unwrap();
        let v = qfi_report(&doc.to_channel().unwrap(), None, &tol).unwrap();
        assert!((v["f1"]["value"].as_f64().unwrap() - 0.64).abs() < 1e-6);
        assert_eq!(v["hnks"]["decision"], "InSpan");
        let doc = ChannelDocument::parse(r#"{"builtin": "depolarizing", "params": {"px": 0.3}}"#).unwrap();
        let v = hnks_report(&doc.to_channel().unwrap(), &tol).unwrap();
        assert_eq!(v["hnks"]["decision"], "NotInSpan");
    }

    #[test]
    fn explicit_document_round_trip() {
        let ch = ad_channel(0.3, 0.0).unwrap();
        let doc = json!({
            "d_in": 2, "d_out": 2,
            "kraus": ch.kraus.iter().map(matrix_to_json).collect::<Vec<_>>(),
            "dkraus": ch.dkraus.iter().map(matrix_to_json).collect::<Vec<_>>(),
            "label": "ad",
        });
        let parsed = ChannelDocument::parse(&doc.to_string()).unwrap().to_channel().unwrap();
        assert_eq!(parsed.label, "ad");
        assert!((&parsed.kraus[1] - &ch.kraus[1]).norm() < 1e-15);
    }

    #[test]
    fn malformed_input_is_an_input_error() {
        let e = ChannelDocument::parse("{not json").unwrap_err();
        assert_eq!(e.exit_kind(), ExitKind::Input);
        let e = ChannelDocument::parse(r#"{"builtin": "nonsense"}"#).unwrap().to_channel().unwrap_err();
        assert_eq!(e.exit_kind(), ExitKind::Input);
    }

    #[test]
    fn zero_information_code_is_a_domain_error() {
        let ch = depolarizing_channel(&DepolarizingParams::new(0.4, 0.4, 0.1).unwrap(), 0.0).unwrap();
        let e = code_report(&ch, 0.05, 1e-3, &Tolerances::default()).unwrap_err();
        assert!(matches!(e, Error::ZeroQfi));
        assert_eq!(e.exit_kind(), ExitKind::Domain);
    }

    #[test]
    fn reports_are_deterministic() {
        let tol = Tolerances::default();
        let ch = pauli_noise_channel(0.05).unwrap();
        let a = serde_json::to_string(&qfi_report(&ch, Some(2), &tol).unwrap()).unwrap();
        let b = serde_json::to_string(&qfi_report(&ch, Some(2), &tol).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn verify_passes_with_defaults() {
        let results = run_verify(&Tolerances::default(), 0);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
