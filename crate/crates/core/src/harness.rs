//! Command-line driver: run the linear protocols in-process or over TCP,
//! fit approximations, evaluate secure non-linear layers on CSV tensors,
//! execute a toy encoder-block pipeline, and emit CSV cost reports.
//!
//! Exit codes: 0 success, 2 verification failure, 3 noise budget exceeded,
//! 4 transport error.

use crate::approx::{
    piecewise_weighted_rmse, search_breakpoints, ApproxError, Histogram, PiecewisePoly,
    Template,
};
use crate::counters::OpCounters;
use crate::fixed_ring::{local_downcast, ring_matmul, RingError, RingParams, RingTensor};
use crate::linear_protocols::{
    cop_client, cop_server, cop_setup_client, cop_setup_server, sip_client, sip_server,
    LinearError, LinearLayerSpec,
};
use crate::mpc_core::{
    ChannelError, Dealer, LoggedChannel, Party, PartyCtx, PartyLog, ShareTensor,
    Transcript, Transport,
};
use crate::secure_nonlinear::{
    secure_exp, secure_gelu, secure_softmax, signed_trunc_upcast, SecurePiecewise,
};
use crate::toy_he::{keygen, HeError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::path::PathBuf;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};
use std::time::Instant;

// --- errors and exit codes ----------------------------------------------------

#[derive(Debug)]
pub enum HarnessError {
    Verify(String),
    Usage(String),
    Linear(LinearError),
    Channel(ChannelError),
    Approx(ApproxError),
    Ring(RingError),
    Io(std::io::Error),
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Verify(m) => write!(f, "verification failed: {m}"),
            HarnessError::Usage(m) => write!(f, "{m}"),
            HarnessError::Linear(e) => write!(f, "{e}"),
            HarnessError::Channel(e) => write!(f, "transport: {e}"),
            HarnessError::Approx(e) => write!(f, "{e}"),
            HarnessError::Ring(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<LinearError> for HarnessError {
    fn from(e: LinearError) -> Self {
        HarnessError::Linear(e)
    }
}
impl From<ChannelError> for HarnessError {
    fn from(e: ChannelError) -> Self {
        HarnessError::Channel(e)
    }
}
impl From<ApproxError> for HarnessError {
    fn from(e: ApproxError) -> Self {
        HarnessError::Approx(e)
    }
}
impl From<RingError> for HarnessError {
    fn from(e: RingError) -> Self {
        HarnessError::Ring(e)
    }
}
impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

fn exit_code(e: &HarnessError) -> i32 {
    match e {
        HarnessError::Verify(_) | HarnessError::Usage(_) => 2,
        HarnessError::Linear(LinearError::He(HeError::NoiseBudgetExceeded { .. })) => 3,
        HarnessError::Linear(LinearError::Channel(_)) | HarnessError::Channel(_) => 4,
        HarnessError::Linear(LinearError::Io(_)) | HarnessError::Io(_) => 4,
        _ => 2,
    }
}

// --- CLI definition -------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "mpc-infer",
    about = "Two-party secure inference building blocks: HE matmul protocols, \
             piecewise approximation fitting, secure non-linear layers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a secure matrix multiplication and report costs
    Matmul(MatmulArgs),
    /// Fit a piecewise polynomial approximation to a histogram
    Fit(FitArgs),
    /// Apply a secure non-linear layer to a shared CSV tensor
    Nonlinear(NonlinearArgs),
    /// Run the toy encoder-block pipeline end to end
    Block(BlockArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    Sip,
    Cop,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// fused QKV projection: 128 x 768 -> 2304
    Qkv,
    /// attention output projection: 128 x 768 -> 768
    O,
    /// feed-forward up: 128 x 768 -> 3072
    H1,
    /// feed-forward down: 128 x 3072 -> 768
    H2,
}

impl Preset {
    fn dims(self) -> (usize, usize, usize) {
        match self {
            Preset::Qkv => (128, 768, 2304),
            Preset::O => (128, 768, 768),
            Preset::H1 => (128, 768, 3072),
            Preset::H2 => (128, 3072, 768),
        }
    }
}

#[derive(Args)]
struct MatmulArgs {
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// BERT-base layer preset (overrides -k/-m/-n)
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(short, default_value_t = 8)]
    k: usize,
    #[arg(short, default_value_t = 8)]
    m: usize,
    #[arg(short, default_value_t = 8)]
    n: usize,
    /// polynomial degree N (presets use 8192 when --full is given)
    #[arg(long, default_value_t = 1024)]
    big_n: usize,
    #[arg(long, default_value_t = 32)]
    ell: u32,
    #[arg(long, default_value_t = 12)]
    scale: u32,
    /// SIP window tile sizes (default: largest fitting cube)
    #[arg(long)]
    kw: Option<usize>,
    #[arg(long)]
    mw: Option<usize>,
    #[arg(long)]
    nw: Option<usize>,
    /// "inproc" or "tcp:PORT" (PORT 0 picks a free port)
    #[arg(long, default_value = "inproc")]
    transport: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// exit nonzero if the reconstruction mismatches the plaintext oracle
    #[arg(long)]
    verify: bool,
    /// use production-scale N=8192 for presets
    #[arg(long)]
    full: bool,
    /// write the CSV report here instead of stdout
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    template: TemplateArg,
    /// histogram file ("lower upper count" lines); default: the synthetic
    /// histogram matching the template
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// output model file
    #[arg(long)]
    out: PathBuf,
    /// optional CSV error table (template, breakpoints, weighted RMSE)
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TemplateArg {
    Gelu,
    Exp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NonlinearOp {
    Gelu,
    Exp,
    Softmax,
}

#[derive(Args)]
struct NonlinearArgs {
    #[arg(long, value_enum)]
    op: NonlinearOp,
    /// fitted model file (from the fit subcommand)
    #[arg(long)]
    model: PathBuf,
    /// input tensor CSV
    #[arg(long)]
    input: PathBuf,
    /// output tensor CSV
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BlockArgs {
    #[arg(short, default_value_t = 8)]
    k: usize,
    #[arg(short, default_value_t = 16)]
    m: usize,
    #[arg(short, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    big_n: usize,
    #[arg(long, default_value = "inproc")]
    transport: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// run both transports and fail unless their wire bytes are identical
    #[arg(long)]
    compare_transports: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Matmul(a) => cmd_matmul(&a),
        Cmd::Fit(a) => cmd_fit(&a),
        Cmd::Nonlinear(a) => cmd_nonlinear(&a),
        Cmd::Block(a) => cmd_block(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

// --- CSV tensors and reports -----------------------------------------------------

/// Tensor CSV: a header naming {rows, cols, ell, scale}, one line with the
/// values, then one decimal-real row per tensor row.
pub fn write_tensor_csv(path: &std::path::Path, t: &RingTensor) -> Result<(), HarnessError> {
    let mut out = String::from("rows,cols,ell,scale\n");
    out.push_str(&format!(
        "{},{},{},{}\n",
        t.rows, t.cols, t.params.ell, t.params.scale
    ));
    for r in 0..t.rows {
        let row: Vec<String> = (0..t.cols)
            .map(|c| format!("{}", t.params.decode(t.get(r, c))))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_tensor_csv(path: &std::path::Path) -> Result<RingTensor, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Usage("empty tensor file".into()))?;
    if header.split(',').map(str::trim).collect::<Vec<_>>() != ["rows", "cols", "ell", "scale"]
    {
        return Err(HarnessError::Usage(
            "tensor header must be rows,cols,ell,scale".into(),
        ));
    }
    let meta: Vec<u64> = lines
        .next()
        .ok_or_else(|| HarnessError::Usage("missing tensor metadata".into()))?
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<u64>()
                .map_err(|_| HarnessError::Usage("bad tensor metadata".into()))
        })
        .collect::<Result<_, _>>()?;
    if meta.len() != 4 {
        return Err(HarnessError::Usage("bad tensor metadata".into()));
    }
    let (rows, cols) = (meta[0] as usize, meta[1] as usize);
    let params = RingParams::new(meta[2] as u32, meta[3] as u32)?;
    let mut t = RingTensor::zeros(params, rows, cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| HarnessError::Usage(format!("missing tensor row {r}")))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(HarnessError::Usage(format!(
                "row {r}: expected {cols} columns"
            )));
        }
        for c in 0..cols {
            let v: f64 = fields[c]
                .trim()
                .parse()
                .map_err(|_| HarnessError::Usage(format!("row {r}: bad number")))?;
            t.set(r, c, params.encode(v)?);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub phase: String,
    pub party: String,
    pub bytes: u64,
    pub rounds: u64,
    pub ciphertexts: u64,
    pub coeff_mults: u64,
    pub wall_ms: f64,
    pub max_err: f64,
}

pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out =
        String::from("phase,party,bytes,rounds,ciphertexts,coeff_mults,wall_ms,max_err\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{:e}\n",
            r.phase, r.party, r.bytes, r.rounds, r.ciphertexts, r.coeff_mults, r.wall_ms,
            r.max_err
        ));
    }
    out
}

fn emit_report(path: &Option<PathBuf>, rows: &[ReportRow]) -> Result<(), HarnessError> {
    let text = render_report(rows);
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

// --- transports ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Inproc,
    Tcp(u16),
}

pub fn parse_transport(s: &str) -> Result<TransportKind, HarnessError> {
    if s == "inproc" {
        return Ok(TransportKind::Inproc);
    }
    if let Some(port) = s.strip_prefix("tcp:") {
        let port: u16 = port
            .parse()
            .map_err(|_| HarnessError::Usage(format!("bad port in '{s}'")))?;
        return Ok(TransportKind::Tcp(port));
    }
    Err(HarnessError::Usage(format!(
        "transport must be 'inproc' or 'tcp:PORT', got '{s}'"
    )))
}

/// Transport wrapper that appends every sent frame (tag + length + payload)
/// to a shared buffer, for byte-level transcript comparison.
struct RecordingTransport {
    inner: Box<dyn Transport>,
    log: Arc<Mutex<Vec<u8>>>,
}

impl Transport for RecordingTransport {
    fn send_frame(&mut self, tag: u16, payload: &[u8]) -> Result<(), ChannelError> {
        {
            let mut log = self.log.lock().unwrap();
            log.extend_from_slice(&tag.to_le_bytes());
            log.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            log.extend_from_slice(payload);
        }
        self.inner.send_frame(tag, payload)
    }

    fn recv_frame(&mut self) -> Result<(u16, Vec<u8>), ChannelError> {
        self.inner.recv_frame()
    }
}

/// Connected (client, server) channel pair over the chosen transport; if
/// `wire_log` is given, every sent frame of either party is recorded there
/// (client frames then server frames interleave by send order per party).
pub fn channel_pair(
    kind: TransportKind,
    wire_logs: Option<(Arc<Mutex<Vec<u8>>>, Arc<Mutex<Vec<u8>>>)>,
) -> Result<(LoggedChannel, LoggedChannel), HarnessError> {
    let clock = Arc::new(AtomicU64::new(0));
    let (raw_c, raw_s): (Box<dyn Transport>, Box<dyn Transport>) = match kind {
        TransportKind::Inproc => {
            let (a, b) = crate::mpc_core::InProcTransport::pair();
            (Box::new(a), Box::new(b))
        }
        TransportKind::Tcp(port) => {
            let listener = std::net::TcpListener::bind(("127.0.0.1", port))
                .map_err(ChannelError::Io)?;
            let addr = listener.local_addr().map_err(ChannelError::Io)?;
            let connect = std::thread::spawn(move || std::net::TcpStream::connect(addr));
            let (accepted, _) = listener.accept().map_err(ChannelError::Io)?;
            let connected = connect
                .join()
                .map_err(|_| {
                    HarnessError::Channel(ChannelError::MalformedFrame(
                        "connect thread panicked".into(),
                    ))
                })?
                .map_err(ChannelError::Io)?;
            (
                Box::new(crate::mpc_core::TcpTransport::new(connected)),
                Box::new(crate::mpc_core::TcpTransport::new(accepted)),
            )
        }
    };
    let (t_c, t_s): (Box<dyn Transport>, Box<dyn Transport>) = match wire_logs {
        Some((lc, ls)) => (
            Box::new(RecordingTransport { inner: raw_c, log: lc }),
            Box::new(RecordingTransport { inner: raw_s, log: ls }),
        ),
        None => (raw_c, raw_s),
    };
    Ok((
        LoggedChannel::new(Party::Client, t_c, clock.clone()),
        LoggedChannel::new(Party::Server, t_s, clock),
    ))
}

// --- matmul ---------------------------------------------------------------------------

fn uniform_tensor(
    params: RingParams,
    rows: usize,
    cols: usize,
    rng: &mut impl RngCore,
) -> RingTensor {
    let mask = params.mask();
    RingTensor::from_residues(
        params,
        rows,
        cols,
        (0..rows * cols).map(|_| rng.next_u64() & mask).collect(),
    )
    .unwrap()
}

/// Largest window shape (k_w, m_w, n_w) with volume <= N, respecting the
/// actual dimensions; used when no explicit tile sizes are given.
fn default_window(k: usize, m: usize, n: usize, big_n: usize) -> (usize, usize, usize) {
    let mut w = 1usize;
    while 8 * w * w * w <= big_n {
        w *= 2;
    }
    let kw = k.min(w);
    let mw = m.min(w);
    let nw = n.min((big_n / (kw * mw)).max(1));
    (kw.max(1), mw.max(1), nw.max(1))
}

pub struct MatmulOutcome {
    pub transcript: Transcript,
    pub report: Vec<ReportRow>,
    pub mismatches: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn run_matmul(
    protocol_cop: bool,
    spec: LinearLayerSpec,
    window: Option<crate::encodings::WindowShape>,
    kind: TransportKind,
    seed: u64,
) -> Result<MatmulOutcome, HarnessError> {
    let ring = spec.ring;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let x = uniform_tensor(ring, spec.k, spec.m, &mut rng);
    let w = uniform_tensor(ring, spec.m, spec.n, &mut rng);
    let (xc, xs) = crate::mpc_core::share(&x, &mut rng);

    let dealer = Dealer::new(seed ^ 0x5eed);
    let (chan_c, chan_s) = channel_pair(kind, None)?;
    let mut ctx_c = PartyCtx::new(Party::Client, chan_c, dealer.clone(), seed + 1);
    let mut ctx_s = PartyCtx::new(Party::Server, chan_s, dealer, seed + 2);
    let counters_c = Arc::new(OpCounters::default());
    let counters_s = Arc::new(OpCounters::default());

    type PartyOut = Result<ShareTensor, LinearError>;
    let (out_c, out_s, log_c, log_s, ms_c, ms_s): (
        PartyOut,
        PartyOut,
        PartyLog,
        PartyLog,
        f64,
        f64,
    );
    if protocol_cop {
        let w_server = w.clone();
        let cc = counters_c.clone();
        let handle = std::thread::spawn(move || {
            let t0 = Instant::now();
            let sk = keygen(spec.poly, 0xface ^ seed);
            let r = cop_setup_server(&mut ctx_s, &w_server, &sk, &spec)
                .and_then(|_| cop_server(&mut ctx_s, &sk, &w_server, &xs, &spec));
            (r, ctx_s.chan.into_log(), t0.elapsed().as_secs_f64() * 1e3)
        });
        let t0 = Instant::now();
        let rc = cop_setup_client(&mut ctx_c)
            .and_then(|store| cop_client(&mut ctx_c, &store, &xc, &cc));
        ms_c = t0.elapsed().as_secs_f64() * 1e3;
        log_c = ctx_c.chan.into_log();
        out_c = rc;
        let (rs, ls, ms) = handle.join().expect("server thread");
        (out_s, log_s, ms_s) = (rs, ls, ms);
    } else {
        let shape = window.unwrap_or_else(|| {
            let (kw, mw, nw) = default_window(spec.k, spec.m, spec.n, spec.poly.n);
            crate::encodings::WindowShape { k_w: kw, m_w: mw, n_w: nw }
        });
        let w_server = w.clone();
        let cs = counters_s.clone();
        let handle = std::thread::spawn(move || {
            let t0 = Instant::now();
            let r = sip_server(&mut ctx_s, &xs, &w_server, shape, &spec, &cs);
            (r, ctx_s.chan.into_log(), t0.elapsed().as_secs_f64() * 1e3)
        });
        let t0 = Instant::now();
        let sk = keygen(spec.poly, 0xbeef ^ seed);
        let rc = sip_client(&mut ctx_c, &xc, shape, &sk, &spec, ring.scale);
        ms_c = t0.elapsed().as_secs_f64() * 1e3;
        log_c = ctx_c.chan.into_log();
        out_c = rc;
        let (rs, ls, ms) = handle.join().expect("server thread");
        (out_s, log_s, ms_s) = (rs, ls, ms);
    }

    let yc = out_c?;
    let ys = out_s?;
    let got = crate::mpc_core::reconstruct(&yc, &ys);
    let oracle = ring_matmul(&x, &w)?;
    let mismatches = got
        .data
        .iter()
        .zip(&oracle.data)
        .filter(|(a, b)| a != b)
        .count();

    let transcript = Transcript::merge(&log_c, &log_s);
    let snap_c = counters_c.snapshot();
    let snap_s = counters_s.snapshot();
    let report = vec![
        ReportRow {
            phase: "setup".into(),
            party: "server".into(),
            bytes: transcript.setup_bytes,
            rounds: transcript.setup_rounds,
            ciphertexts: transcript.setup_cts,
            coeff_mults: 0,
            wall_ms: 0.0,
            max_err: 0.0,
        },
        ReportRow {
            phase: "online".into(),
            party: "client".into(),
            bytes: transcript.online_bytes_c2s,
            rounds: transcript.online_rounds,
            ciphertexts: transcript.online_cts_c2s,
            coeff_mults: snap_c.coeff_mults,
            wall_ms: ms_c,
            max_err: mismatches as f64,
        },
        ReportRow {
            phase: "online".into(),
            party: "server".into(),
            bytes: transcript.online_bytes_s2c,
            rounds: transcript.online_rounds,
            ciphertexts: transcript.online_cts_s2c,
            coeff_mults: snap_s.coeff_mults,
            wall_ms: ms_s,
            max_err: mismatches as f64,
        },
    ];
    Ok(MatmulOutcome {
        transcript,
        report,
        mismatches,
    })
}

fn cmd_matmul(a: &MatmulArgs) -> Result<(), HarnessError> {
    let (k, m, n) = match a.preset {
        Some(p) => p.dims(),
        None => (a.k, a.m, a.n),
    };
    let big_n = if a.preset.is_some() && a.full { 8192 } else { a.big_n };
    let spec = LinearLayerSpec::new(k, m, n, a.ell, a.scale, big_n)?;
    let window = match (a.kw, a.mw, a.nw) {
        (Some(kw), Some(mw), Some(nw)) => {
            Some(crate::encodings::WindowShape { k_w: kw, m_w: mw, n_w: nw })
        }
        (None, None, None) => None,
        _ => {
            return Err(HarnessError::Usage(
                "--kw/--mw/--nw must be given together".into(),
            ))
        }
    };
    let kind = parse_transport(&a.transport)?;
    let outcome = run_matmul(a.protocol == Protocol::Cop, spec, window, kind, a.seed)?;
    emit_report(&a.report, &outcome.report)?;
    if a.verify && outcome.mismatches > 0 {
        return Err(HarnessError::Verify(format!(
            "{} of {} outputs mismatch the plaintext oracle",
            outcome.mismatches,
            k * n
        )));
    }
    Ok(())
}

// --- fit ------------------------------------------------------------------------------

fn cmd_fit(a: &FitArgs) -> Result<(), HarnessError> {
    let (template, f): (Template, fn(f64) -> f64) = match a.template {
        TemplateArg::Gelu => (Template::Gelu, crate::approx::gelu),
        TemplateArg::Exp => (Template::Exp, f64::exp),
    };
    let hist = match &a.histogram {
        Some(p) => Histogram::load(p)?,
        None => match a.template {
            TemplateArg::Gelu => Histogram::synthetic_gelu(),
            TemplateArg::Exp => Histogram::synthetic_exp(),
        },
    };
    let init = template.init_breakpoints();
    let (model, _loss) = search_breakpoints(&f, template, &init, &hist, a.radius, a.step)?;
    let rmse = piecewise_weighted_rmse(&f, &model, &hist);
    model.save(&a.out)?;
    let mut table = String::from("template,breakpoints,weighted_rmse\n");
    table.push_str(&format!(
        "{},{},{rmse:e}\n",
        match a.template {
            TemplateArg::Gelu => "gelu",
            TemplateArg::Exp => "exp",
        },
        model
            .breakpoints
            .iter()
            .map(|b| format!("{b}"))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    match &a.table {
        Some(p) => std::fs::write(p, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}

// --- nonlinear --------------------------------------------------------------------------

fn cmd_nonlinear(a: &NonlinearArgs) -> Result<(), HarnessError> {
    let model = PiecewisePoly::load(&a.model)?;
    let input = read_tensor_csv(&a.input)?;
    let ring = input.params;
    let secure = SecurePiecewise::new(&model, ring)?;

    let mut rng = ChaCha12Rng::seed_from_u64(a.seed);
    let (xc, xs) = crate::mpc_core::share(&input, &mut rng);
    let dealer = Dealer::new(a.seed ^ 0xd1ce);
    let (chan_c, chan_s) = channel_pair(TransportKind::Inproc, None)?;
    let mut ctx_c = PartyCtx::new(Party::Client, chan_c, dealer.clone(), a.seed + 1);
    let mut ctx_s = PartyCtx::new(Party::Server, chan_s, dealer.clone(), a.seed + 2);

    let op = a.op;
    let sec_s = secure.clone();
    let t0 = Instant::now();
    let handle = std::thread::spawn(move || match op {
        NonlinearOp::Gelu => secure_gelu(&mut ctx_s, &xs, &sec_s),
        NonlinearOp::Exp => secure_exp(&mut ctx_s, &xs, &sec_s),
        NonlinearOp::Softmax => secure_softmax(&mut ctx_s, &xs, &sec_s),
    });
    let yc = match op {
        NonlinearOp::Gelu => secure_gelu(&mut ctx_c, &xc, &secure),
        NonlinearOp::Exp => secure_exp(&mut ctx_c, &xc, &secure),
        NonlinearOp::Softmax => secure_softmax(&mut ctx_c, &xc, &secure),
    };
    let ys = handle.join().expect("server thread");
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let got = crate::mpc_core::reconstruct(&yc, &ys);
    write_tensor_csv(&a.output, &got)?;

    // reference against the real-arithmetic function
    let mut max_err = 0.0f64;
    match op {
        NonlinearOp::Gelu | NonlinearOp::Exp => {
            let f: fn(f64) -> f64 = match op {
                NonlinearOp::Gelu => crate::approx::gelu,
                _ => f64::exp,
            };
            for (i, &v) in got.data.iter().enumerate() {
                let xr = ring.decode(input.data[i]);
                max_err = max_err.max((ring.decode(v) - f(xr)).abs());
            }
        }
        NonlinearOp::Softmax => {
            for r in 0..input.rows {
                let xs_row: Vec<f64> =
                    (0..input.cols).map(|c| ring.decode(input.get(r, c))).collect();
                let mx = xs_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let es: Vec<f64> = xs_row.iter().map(|&v| (v - mx).exp()).collect();
                let denom: f64 = es.iter().sum();
                for c in 0..input.cols {
                    let want = es[c] / denom;
                    max_err = max_err.max((ring.decode(got.get(r, c)) - want).abs());
                }
            }
        }
    }

    let stats = dealer.stats();
    let rows = vec![ReportRow {
        phase: "online".into(),
        party: "both".into(),
        bytes: stats.bytes,
        rounds: stats.rounds,
        ciphertexts: 0,
        coeff_mults: 0,
        wall_ms,
        max_err,
    }];
    emit_report(&a.report, &rows)?;
    Ok(())
}

// --- block ------------------------------------------------------------------------------

fn reparam(t: &ShareTensor, params: RingParams) -> ShareTensor {
    debug_assert_eq!(t.params().ell, params.ell);
    let mut inner = t.inner.clone();
    inner.params = params;
    ShareTensor {
        party: t.party,
        inner,
    }
}

pub struct BlockOutcome {
    pub max_err: f64,
    pub wire_client: Vec<u8>,
    pub wire_server: Vec<u8>,
    pub report: Vec<ReportRow>,
}

/// Toy encoder-block pipeline: COP linear layer in Z_{2^64} at scale 18,
/// truncate and downcast to Z_{2^32} at scale 12, secure GELU, then embed
/// back into Z_{2^64} at scale 18.
pub fn run_block(
    k: usize,
    m: usize,
    n: usize,
    big_n: usize,
    kind: TransportKind,
    seed: u64,
) -> Result<BlockOutcome, HarnessError> {
    let ring64 = RingParams::new(64, 18)?;
    let ring32 = RingParams::new(32, 12)?;
    let spec = LinearLayerSpec::new(k, m, n, 64, 18, big_n)?;

    // fitted GELU template, shared publicly by both parties
    let model = crate::approx::template_gelu(&Histogram::synthetic_gelu());
    let secure = SecurePiecewise::new(&model, ring32)?;

    // deterministic real-valued inputs
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rand_real = |rng: &mut ChaCha12Rng, amp: f64| {
        (rng.next_u64() as f64 / u64::MAX as f64 * 2.0 - 1.0) * amp
    };
    let mut x = RingTensor::zeros(ring64, k, m);
    let mut xr = vec![vec![0.0f64; m]; k];
    for r in 0..k {
        for c in 0..m {
            let v = rand_real(&mut rng, 1.0);
            xr[r][c] = v;
            x.set(r, c, ring64.encode(v)?);
        }
    }
    let mut w = RingTensor::zeros(ring64, m, n);
    let mut wr = vec![vec![0.0f64; n]; m];
    for r in 0..m {
        for c in 0..n {
            let v = rand_real(&mut rng, 0.5);
            wr[r][c] = v;
            w.set(r, c, ring64.encode(v)?);
        }
    }
    let (xc, xs) = crate::mpc_core::share(&x, &mut rng);

    let dealer = Dealer::new(seed ^ 0xb10c);
    let wire_c = Arc::new(Mutex::new(Vec::new()));
    let wire_s = Arc::new(Mutex::new(Vec::new()));
    let (chan_c, chan_s) = channel_pair(kind, Some((wire_c.clone(), wire_s.clone())))?;
    let mut ctx_c = PartyCtx::new(Party::Client, chan_c, dealer.clone(), seed + 1);
    let mut ctx_s = PartyCtx::new(Party::Server, chan_s, dealer.clone(), seed + 2);
    let counters = Arc::new(OpCounters::default());

    let pipeline_tail = move |ctx: &mut PartyCtx,
                              y: ShareTensor,
                              secure: &SecurePiecewise|
          -> ShareTensor {
        // scale 36 -> 12, still in the wide ring
        let y = ctx.f_trunc(&y, 24);
        let y = reparam(&y, RingParams::new(64, 12).unwrap());
        // move to the small ring for the non-linearity
        let y32 = ShareTensor {
            party: ctx.chan.party(),
            inner: local_downcast(&y.inner, 32),
        };
        let g = secure_gelu(ctx, &y32, secure);
        // exact embed back into the wide ring, then rescale 12 -> 18
        let up = signed_trunc_upcast(ctx, &g, 0, RingParams::new(64, 12).unwrap());
        reparam(&up.mul_public(1 << 6), RingParams::new(64, 18).unwrap())
    };

    let spec_s = spec;
    let w_server = w.clone();
    let sec_s = secure.clone();
    let tail_s = pipeline_tail.clone();
    let handle = std::thread::spawn(move || {
        let t0 = Instant::now();
        let sk = keygen(spec_s.poly, 0xface ^ seed);
        let r = cop_setup_server(&mut ctx_s, &w_server, &sk, &spec_s)
            .and_then(|_| cop_server(&mut ctx_s, &sk, &w_server, &xs, &spec_s))
            .map(|y| tail_s(&mut ctx_s, y, &sec_s));
        (r, ctx_s.chan.into_log(), t0.elapsed().as_secs_f64() * 1e3)
    });
    let t0 = Instant::now();
    let rc = cop_setup_client(&mut ctx_c)
        .and_then(|store| cop_client(&mut ctx_c, &store, &xc, &counters))
        .map(|y| pipeline_tail(&mut ctx_c, y, &secure));
    let ms_c = t0.elapsed().as_secs_f64() * 1e3;
    let log_c = ctx_c.chan.into_log();
    let (rs, log_s, ms_s) = handle.join().expect("server thread");
    let yc = rc?;
    let ys = rs?;

    let got = crate::mpc_core::reconstruct(&yc, &ys);
    let out_ring = got.params;

    // real-arithmetic reference: matmul then the fitted template
    let mut max_err = 0.0f64;
    for r in 0..k {
        for c in 0..n {
            let mut acc = 0.0;
            for j in 0..m {
                acc += xr[r][j] * wr[j][c];
            }
            let want = model.eval_real(acc);
            let gotv = out_ring.decode(got.get(r, c));
            max_err = max_err.max((gotv - want).abs());
        }
    }

    let transcript = Transcript::merge(&log_c, &log_s);
    let stats = dealer.stats();
    let report = vec![
        ReportRow {
            phase: "setup".into(),
            party: "server".into(),
            bytes: transcript.setup_bytes,
            rounds: transcript.setup_rounds,
            ciphertexts: transcript.setup_cts,
            coeff_mults: 0,
            wall_ms: 0.0,
            max_err: 0.0,
        },
        ReportRow {
            phase: "online".into(),
            party: "client".into(),
            bytes: transcript.online_bytes_c2s + stats.bytes,
            rounds: transcript.online_rounds + stats.rounds,
            ciphertexts: transcript.online_cts_c2s,
            coeff_mults: counters.snapshot().coeff_mults,
            wall_ms: ms_c,
            max_err,
        },
        ReportRow {
            phase: "online".into(),
            party: "server".into(),
            bytes: transcript.online_bytes_s2c + stats.bytes,
            rounds: transcript.online_rounds + stats.rounds,
            ciphertexts: transcript.online_cts_s2c,
            coeff_mults: 0,
            wall_ms: ms_s,
            max_err,
        },
    ];
    Ok(BlockOutcome {
        max_err,
        wire_client: Arc::try_unwrap(wire_c).map_or_else(
            |a| a.lock().unwrap().clone(),
            |m| m.into_inner().unwrap(),
        ),
        wire_server: Arc::try_unwrap(wire_s).map_or_else(
            |a| a.lock().unwrap().clone(),
            |m| m.into_inner().unwrap(),
        ),
        report,
    })
}

fn cmd_block(a: &BlockArgs) -> Result<(), HarnessError> {
    let kind = parse_transport(&a.transport)?;
    let outcome = run_block(a.k, a.m, a.n, a.big_n, kind, a.seed)?;
    emit_report(&a.report, &outcome.report)?;
    let tol = 2f64.powi(-8);
    if outcome.max_err > tol {
        return Err(HarnessError::Verify(format!(
            "block max abs error {} exceeds {tol}",
            outcome.max_err
        )));
    }
    if a.compare_transports {
        let other_kind = match kind {
            TransportKind::Inproc => TransportKind::Tcp(0),
            TransportKind::Tcp(_) => TransportKind::Inproc,
        };
        let other = run_block(a.k, a.m, a.n, a.big_n, other_kind, a.seed)?;
        if other.wire_client != outcome.wire_client
            || other.wire_server != outcome.wire_server
        {
            return Err(HarnessError::Verify(
                "transports produced different wire bytes".into(),
            ));
        }
        println!("transports agree: {} client wire bytes", outcome.wire_client.len());
    }
    Ok(())
}
