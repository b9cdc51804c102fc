mod session;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smartotps::cost::{self, CostTable, Grid};
use smartotps::crypto::{mnemonic_decode_str, mnemonic_encode, Digest};
use smartotps::ledger::{TxId, TxStatus};
use smartotps::payload::OpType;
use smartotps::protocols::{scenarios, script, Mode, ProtocolError, World};
use smartotps::{security, TreeParams};

use session::{Action, Effect, Session, SessionError};

#[derive(Parser)]
#[command(name = "smartotps", version, about = "Two-factor OTP wallet on a simulated ledger")]
struct Cli {
    /// Session directory.
    #[arg(long, global = true, env = "SMARTOTPS_STATE", default_value = ".smartotps")]
    state_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create the authenticator, client and hardware wallet and deploy.
    Bootstrap(BootstrapArgs),
    /// Deposit from the user's account into the wallet.
    Fund { amount: u64 },
    /// Initiate and confirm operations.
    #[command(subcommand)]
    Op(OpCmd),
    /// Authenticator device.
    #[command(subcommand)]
    Auth(AuthCmd),
    /// Subtree introduction.
    #[command(subcommand)]
    Subtree(SubtreeCmd),
    /// Parent-root replacement.
    #[command(subcommand)]
    Root(RootCmd),
    /// Mine empty blocks.
    Mine {
        #[arg(default_value_t = 1)]
        blocks: u64,
    },
    /// Wallet and ledger summary.
    Status,
    /// Scripted adversary scenarios.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// Cost model sweeps.
    #[command(subcommand)]
    Cost(CostCmd),
    /// OTP length and security bounds.
    #[command(subcommand)]
    Security(SecurityCmd),
    /// Convert between hex values and mnemonic words.
    #[command(subcommand)]
    Mnemonic(MnemonicCmd),
    /// Line-oriented scenario scripts.
    #[command(subcommand)]
    Script(ScriptCmd),
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long, default_value = "secure")]
    mode: Mode,
    /// `S,N,P,N_S,L_S`
    #[arg(long, env = "SMARTOTPS_PARAMS", default_value = "128,16,2,8,1")]
    params: TreeParams,
    /// File holding the run seed (decimal or 0x-hex). Random if absent.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Confirmations to wait before revealing an OTP.
    #[arg(long, default_value_t = 12)]
    depth: u64,
}

#[derive(Args)]
struct OpArgs {
    #[arg(long = "type")]
    op_type: OpType,
    #[arg(long, default_value = "")]
    addr: String,
    #[arg(long)]
    param: u64,
}

#[derive(Subcommand)]
enum OpCmd {
    /// Initiate an operation signed by the hardware wallet.
    Init(OpArgs),
    /// Confirm an operation with its OTP.
    Confirm {
        #[arg(long)]
        op_id: u64,
        /// Mnemonic words or hex.
        #[arg(long)]
        otp: String,
    },
    /// Initiate and confirm in one go, handling tree boundaries.
    Run(OpArgs),
}

#[derive(Subcommand)]
enum AuthCmd {
    /// Show the OTP for an operation, as the authenticator would.
    Otp {
        #[arg(long)]
        op_id: u64,
    },
}

#[derive(Subcommand)]
enum SubtreeCmd {
    /// Introduce the next subtree at its reserved slot.
    Next,
}

#[derive(Subcommand)]
enum RootCmd {
    /// Replace the parent tree at the last slot.
    Rotate {
        #[arg(long, default_value = "secure")]
        mode: Mode,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Names of the available scenarios.
    List,
    /// Run a scenario, or `all`.
    Run {
        name: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also print the event log.
        #[arg(long)]
        log: bool,
    },
}

#[derive(Subcommand)]
enum CostCmd {
    /// CSV of per-configuration costs, e.g. `--grid 'H=7..10;P=1;L=all'`.
    Sweep {
        #[arg(long, default_value = "")]
        grid: String,
        /// Report the optimal cache depth and crossover per `(H, H_S, P)`.
        #[arg(long)]
        summary: bool,
    },
    /// Post-quantum and classical reference figures.
    Note {
        #[arg(long, default_value_t = 128)]
        lambda: u32,
        #[arg(long, default_value_t = 64)]
        leaves: u64,
    },
}

#[derive(Subcommand)]
enum SecurityCmd {
    /// Required OTP width for a security level and leaf count.
    Calc {
        #[arg(long)]
        lambda: u32,
        #[arg(long)]
        leaves: u64,
        /// Chain length used for the bound.
        #[arg(long, default_value_t = 1)]
        p: u64,
    },
}

#[derive(Subcommand)]
enum MnemonicCmd {
    Encode { hex: String },
    Decode { words: Vec<String> },
}

#[derive(Subcommand)]
enum ScriptCmd {
    /// Run a script in a fresh world and print its transcript.
    Run {
        file: PathBuf,
        #[arg(long)]
        log: bool,
    },
}

/// Failure categories, each with its own exit code.
#[derive(Debug)]
enum Failure {
    /// An invariant or expectation did not hold.
    Check(String),
    Usage(String),
    Protocol(String),
    State(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Protocol(_) => 3,
            Failure::State(_) => 4,
        }
    }

    fn line(&self) -> String {
        match self {
            Failure::Check(m) => format!("error[check]: {m}"),
            Failure::Usage(m) => format!("error[usage]: {m}"),
            Failure::Protocol(m) => format!("error[protocol]: {m}"),
            Failure::State(m) => format!("error[state]: {m}"),
        }
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        Failure::Protocol(e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Protocol(p) => p.into(),
            other => Failure::State(other.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type Out = Result<Vec<String>, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Out {
    let dir = cli.state_dir.as_path();
    match cli.cmd {
        Cmd::Bootstrap(a) => bootstrap(dir, a),
        Cmd::Fund { amount } => perform(dir, Action::Fund { amount }),
        Cmd::Op(OpCmd::Init(a)) => perform(
            dir,
            Action::Init {
                op_type: a.op_type,
                addr: a.addr,
                param: a.param,
            },
        ),
        Cmd::Op(OpCmd::Confirm { op_id, otp }) => {
            let otp = parse_otp(&otp)?;
            perform(dir, Action::Confirm { op_id, otp })
        }
        Cmd::Op(OpCmd::Run(a)) => perform(
            dir,
            Action::Run {
                op_type: a.op_type,
                addr: a.addr,
                param: a.param,
            },
        ),
        Cmd::Auth(AuthCmd::Otp { op_id }) => {
            let world = Session::load(dir)?.replay()?;
            let otp = world.auth.get_otp(op_id).map_err(usage)?;
            Ok(vec![
                format!("otp={otp}"),
                format!("mnemonic={}", mnemonic_encode(&otp).map_err(usage)?.join(" ")),
            ])
        }
        Cmd::Subtree(SubtreeCmd::Next) => perform(dir, Action::SubtreeNext),
        Cmd::Root(RootCmd::Rotate { mode }) => perform(dir, Action::RootRotate { mode }),
        Cmd::Mine { blocks } => perform(dir, Action::Mine { blocks }),
        Cmd::Status => status(&Session::load(dir)?.replay()?),
        Cmd::Attack(AttackCmd::List) => Ok(scenarios::SCENARIOS.iter().map(|s| s.to_string()).collect()),
        Cmd::Attack(AttackCmd::Run { name, seed, log }) => attack(&name, seed, log),
        Cmd::Cost(CostCmd::Sweep { grid, summary }) => cost_sweep(&grid, summary),
        Cmd::Cost(CostCmd::Note { lambda, leaves }) => Ok(cost::security_note(lambda, leaves)),
        Cmd::Security(SecurityCmd::Calc { lambda, leaves, p }) => {
            if leaves == 0 {
                return Err(usage("--leaves must be at least 1"));
            }
            Ok(security::report(lambda, leaves, p))
        }
        Cmd::Mnemonic(MnemonicCmd::Encode { hex }) => {
            let d = Digest::from_hex(&hex).map_err(usage)?;
            Ok(vec![mnemonic_encode(&d).map_err(usage)?.join(" ")])
        }
        Cmd::Mnemonic(MnemonicCmd::Decode { words }) => {
            Ok(vec![mnemonic_decode_str(&words.join(" ")).map_err(usage)?.to_hex()])
        }
        Cmd::Script(ScriptCmd::Run { file, log }) => {
            let text = fs::read_to_string(&file).map_err(|e| Failure::State(format!("{}: {e}", file.display())))?;
            let out = script::run_script(&text).map_err(|e| Failure::Check(e.to_string()))?;
            let mut lines = out.lines;
            if log {
                lines.extend(out.event_log.lines().map(str::to_string));
            }
            lines.push(format!("state_hash={}", out.state_hash));
            Ok(lines)
        }
    }
}

fn read_seed(path: &Path) -> Result<u64, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::State(format!("{}: {e}", path.display())))?;
    let t = text.trim();
    let parsed = match t.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    parsed.map_err(|e| usage(format!("seed file {}: {e}", path.display())))
}

fn bootstrap(dir: &Path, a: BootstrapArgs) -> Out {
    let run_seed = match &a.seed_file {
        Some(p) => read_seed(p)?,
        None => rand::random(),
    };
    let s = Session {
        run_seed,
        params: a.params,
        mode: a.mode,
        depth: a.depth,
        journal: Vec::new(),
    };
    let (_, world) = Session::create(dir, s)?;
    Ok(vec![
        format!("contract_id={}", world.wallet),
        format!("mnemonic={}", world.auth.display_seed().join(" ")),
        format!("run_seed={run_seed}"),
    ])
}

fn parse_otp(s: &str) -> Result<Digest, Failure> {
    let s = s.trim();
    if s.contains(char::is_whitespace) {
        mnemonic_decode_str(s).map_err(usage)
    } else {
        Digest::from_hex(s.trim_start_matches("0x")).map_err(usage)
    }
}

fn receipt_lines(w: &World, id: TxId) -> Vec<String> {
    let Some(r) = w.ledger.receipt(id) else {
        return vec![format!("tx={id} status=pending")];
    };
    let status = match &r.status {
        TxStatus::Ok => "ok".to_string(),
        TxStatus::Reverted(m) => format!("reverted reason={m:?}"),
        TxStatus::Dropped(m) => format!("dropped reason={m:?}"),
    };
    let mut out = vec![format!(
        "tx={id} fn={} status={status} confirmations={}",
        r.tx.call.name(),
        w.ledger.confirmations(id).map_or("none".into(), |c| c.to_string())
    )];
    out.extend(r.events.iter().map(|e| format!("event {e}")));
    out
}

fn perform(dir: &Path, action: Action) -> Out {
    let (world, result) = Session::perform(dir, action)?;
    let mut out = Vec::new();
    match result? {
        Effect::Tx(id) => out.extend(receipt_lines(&world, id)),
        Effect::Op { op_id, tx } => {
            out.push(format!("op_id={op_id}"));
            out.extend(receipt_lines(&world, tx));
        }
        Effect::Confirmed { op_id, tx, front_run } => {
            out.push(format!("op_id={op_id} front_run={front_run}"));
            out.extend(receipt_lines(&world, tx));
        }
        Effect::Height(h) => out.push(format!("height={h}")),
    }
    out.push(format!("wallet_balance={}", world.ledger.balance(&world.wallet)));
    Ok(out)
}

fn status(w: &World) -> Out {
    let s = w.wallet_state();
    let pending: Vec<String> = s.confirmable().iter().map(u64::to_string).collect();
    Ok(vec![
        format!("contract_id={}", w.wallet),
        format!("params={}", s.params),
        format!("root={}", s.root),
        format!("balance={}", s.balance),
        format!("next_op_id={}", s.next_op_id),
        format!("subtree={}", s.sub_layer.delta),
        format!("current_layer={}", s.current_layer),
        format!("confirmable={}", pending.join(",")),
        format!("height={}", w.ledger.head_height()),
        format!("state_hash={}", w.ledger.state_hash()),
    ])
}

fn attack(name: &str, seed: u64, log: bool) -> Out {
    let names: Vec<&str> = if name == "all" {
        scenarios::SCENARIOS.to_vec()
    } else if scenarios::SCENARIOS.contains(&name) {
        vec![name]
    } else {
        return Err(usage(format!(
            "unknown scenario {name:?}; one of {}",
            scenarios::SCENARIOS.join(", ")
        )));
    };
    let mut out = Vec::new();
    let mut failed = Vec::new();
    for n in names {
        let r = scenarios::run(n, seed).map_err(|e| Failure::Protocol(e.to_string()))?;
        out.extend(r.render().lines().map(str::to_string));
        if log {
            out.extend(r.log.lines().map(str::to_string));
        }
        if !r.passed() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        for l in out {
            println!("{l}");
        }
        Err(Failure::Check(format!("scenario invariants failed: {}", failed.join(", "))))
    }
}

fn cost_sweep(grid: &str, summary: bool) -> Out {
    let grid: Grid = grid.parse().map_err(usage)?;
    let rows = cost::sweep(&grid, &CostTable::default()).map_err(usage)?;
    let mut out: Vec<String> = cost::sweep_csv(&rows).lines().map(str::to_string).collect();
    if summary {
        let mut keys: Vec<(u32, u32, u64)> = rows.iter().map(|r| (r.h, r.hs, r.p)).collect();
        keys.dedup();
        for (h, hs, p) in keys {
            let best = cost::optimum(&rows, h, hs, p).expect("key taken from rows");
            let base = rows.iter().find(|r| (r.h, r.hs, r.p, r.ls) == (h, hs, p, 0));
            let cross = base
                .and_then(|b| cost::crossover(&best.report, &b.report))
                .map_or("none".into(), |k| k.to_string());
            out.push(format!("# H={h} HS={hs} P={p} best_L={} crossover={cross}", best.ls));
        }
    }
    Ok(out)
}
