//! Line-oriented scenario scripts.
//!
//! ```text
//! params 128,16,2,8,1
//! seed 7
//! bootstrap secure
//! fund 1000
//! op transfer bob 5
//! expect balance bob 5
//! ```
//!
//! A leading `!` marks a command that is expected to fail.

use std::collections::BTreeMap;

use thiserror::Error as ThisError;

use crate::ledger::{BranchId, Transaction, TxId, TxStatus};
use crate::params::TreeParams;
use crate::payload::{Call, OpType};
use crate::signature::SigningKey;

use super::scenarios::default_params;
use super::{Mode, World, WorldConfig, USER};

#[derive(Debug, ThisError)]
#[error("line {line}: {msg}")]
pub struct ScriptError {
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptOutput {
    pub lines: Vec<String>,
    pub event_log: String,
    pub state_hash: String,
}

pub fn run_script(text: &str) -> Result<ScriptOutput, ScriptError> {
    let mut r = Runner {
        cfg: WorldConfig::new(0, default_params()),
        world: None,
        last_tx: None,
        branches: BTreeMap::new(),
        out: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (negated, cmd) = match line.strip_prefix('!') {
            Some(rest) => (true, rest.trim()),
            None => (false, line),
        };
        let err = |msg: String| ScriptError { line: i + 1, msg };
        match (r.exec(cmd), negated) {
            (Ok(()), false) => {}
            (Ok(()), true) => return Err(err(format!("expected `{cmd}` to fail"))),
            (Err(e), true) => r.out.push(format!("failed as expected: {e}")),
            (Err(e), false) => return Err(err(e)),
        }
    }
    let w = r.world.as_ref().ok_or(ScriptError {
        line: 0,
        msg: "script never bootstrapped".into(),
    })?;
    Ok(ScriptOutput {
        lines: r.out,
        event_log: w.ledger.event_log(),
        state_hash: w.ledger.state_hash(),
    })
}

struct Runner {
    cfg: WorldConfig,
    world: Option<World>,
    last_tx: Option<TxId>,
    branches: BTreeMap<String, BranchId>,
    out: Vec<String>,
}

fn num(s: Option<&&str>, what: &str) -> Result<u64, String> {
    s.ok_or_else(|| format!("missing {what}"))?
        .parse()
        .map_err(|e| format!("bad {what}: {e}"))
}

fn word<'a>(s: Option<&&'a str>, what: &str) -> Result<&'a str, String> {
    s.copied().ok_or_else(|| format!("missing {what}"))
}

impl Runner {
    fn world(&mut self) -> Result<&mut World, String> {
        self.world
            .as_mut()
            .ok_or_else(|| "bootstrap first".to_string())
    }

    fn exec(&mut self, cmd: &str) -> Result<(), String> {
        let t: Vec<&str> = cmd.split_whitespace().collect();
        let rest = &t[1..];
        match t[0] {
            "params" => {
                self.cfg.params = word(rest.first(), "params")?
                    .parse::<TreeParams>()
                    .map_err(|e| e.to_string())?
            }
            "seed" => self.cfg.run_seed = num(rest.first(), "seed")?,
            "depth" => self.cfg.confirmation_depth = num(rest.first(), "depth")?,
            "bootstrap" => {
                let mode: Mode = word(rest.first(), "mode")?
                    .parse()
                    .map_err(|e: crate::Error| e.to_string())?;
                let w = World::bootstrap(self.cfg.clone().mode(mode)).map_err(|e| e.to_string())?;
                self.out.push(format!("contract_id={}", w.wallet));
                self.world = Some(w);
            }
            "fund" => {
                let amount = num(rest.first(), "amount")?;
                let id = self.world()?.fund(amount).map_err(|e| e.to_string())?;
                self.last_tx = Some(id);
            }
            "op" => {
                let (ty, addr, param) = op_args(rest)?;
                let r = self
                    .world()?
                    .run_operation(ty, addr, param)
                    .map_err(|e| e.to_string())?;
                self.last_tx = Some(r.confirm_tx);
                self.out.push(format!(
                    "op op_id={} init_tx={} confirm_tx={}",
                    r.op_id, r.init_tx, r.confirm_tx
                ));
            }
            "init" => {
                let (ty, addr, param) = op_args(rest)?;
                let (id, op) = self
                    .world()?
                    .initiate(ty, addr, param)
                    .map_err(|e| e.to_string())?;
                self.last_tx = Some(id);
                self.out.push(format!("init op_id={op} tx={id}"));
            }
            "confirm" => {
                let op = num(rest.first(), "op id")?;
                let (id, _) = self.world()?.confirm(op).map_err(|e| e.to_string())?;
                self.last_tx = Some(id);
                self.out.push(format!("confirm op_id={op} tx={id}"));
            }
            "submit" => {
                let id = self.submit(rest)?;
                self.last_tx = Some(id);
                self.out.push(format!("submit tx={id}"));
            }
            "mine" => {
                let n = rest
                    .first()
                    .map(|_| num(rest.first(), "block count"))
                    .transpose()?
                    .unwrap_or(1);
                let h = self.world()?.ledger.mine_blocks(n);
                self.out.push(format!("height {h}"));
            }
            "advance-time" => {
                let secs = num(rest.first(), "seconds")?;
                self.world()?.ledger.advance_time(secs);
            }
            "fork" => {
                let name = word(rest.first(), "branch name")?.to_string();
                let h = num(rest.get(1), "height")?;
                let b = self.world()?.ledger.fork(h).map_err(|e| e.to_string())?;
                self.branches.insert(name, b);
            }
            "mine-on" => {
                let b = self.branch(rest.first())?;
                let n = rest
                    .get(1)
                    .map(|_| num(rest.get(1), "block count"))
                    .transpose()?
                    .unwrap_or(1);
                let w = self.world()?;
                for _ in 0..n {
                    w.ledger.mine_on(b, vec![]).map_err(|e| e.to_string())?;
                }
            }
            "reorg" => {
                let b = self.branch(rest.first())?;
                self.world()?.ledger.reorg(b).map_err(|e| e.to_string())?;
            }
            "subtree-next" => {
                let id = self
                    .world()?
                    .run_next_subtree()
                    .map_err(|e| e.to_string())?;
                self.last_tx = Some(id);
            }
            "root-rotate" => {
                let mode: Mode = word(rest.first(), "mode")?
                    .parse()
                    .map_err(|e: crate::Error| e.to_string())?;
                let id = self
                    .world()?
                    .run_new_root(mode)
                    .map_err(|e| e.to_string())?;
                self.last_tx = Some(id);
            }
            "expect" => self.expect(rest)?,
            other => return Err(format!("unknown command {other:?}")),
        }
        Ok(())
    }

    fn branch(&self, name: Option<&&str>) -> Result<BranchId, String> {
        let name = word(name, "branch name")?;
        self.branches
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown branch {name:?}"))
    }

    /// `submit FROM [sign=PARTY] fn=NAME key=value ...`
    fn submit(&mut self, rest: &[&str]) -> Result<TxId, String> {
        let from = word(rest.first(), "sender")?.to_string();
        let seed = self.cfg.run_seed;
        let mut signer = None;
        let mut body = String::new();
        for kv in &rest[1..] {
            match kv.strip_prefix("sign=") {
                Some(party) => signer = Some(party.to_string()),
                None => {
                    body.push_str(kv);
                    body.push('\n');
                }
            }
        }
        let call = Call::decode(&body).map_err(|e| e.to_string())?;
        let w = self.world()?;
        let tx = Transaction::new(&from, &w.wallet, call, w.fee, w.ledger.next_nonce(&from));
        let tx = match signer.as_deref() {
            None => tx,
            Some(USER) => tx.sign(&w.hw.compromise()),
            Some(party) => tx.sign(&SigningKey::for_party(seed, party)),
        };
        w.ledger.submit(tx).map_err(|e| e.to_string())
    }

    fn expect(&mut self, rest: &[&str]) -> Result<(), String> {
        let last = self.last_tx;
        let w = self.world()?;
        let what = word(rest.first(), "expectation")?;
        let (got, want) = match what {
            "balance" => {
                let acct = word(rest.get(1), "account")?;
                let acct = if acct == "wallet" {
                    w.wallet.clone()
                } else {
                    acct.to_string()
                };
                (
                    w.ledger.balance(&acct).to_string(),
                    word(rest.get(2), "amount")?.to_string(),
                )
            }
            "status" => {
                let id = last.ok_or("no transaction yet")?;
                let got = match w.ledger.receipt(id).map(|r| &r.status) {
                    None => "pending",
                    Some(TxStatus::Ok) => "ok",
                    Some(TxStatus::Reverted(_)) => "revert",
                    Some(TxStatus::Dropped(_)) => "dropped",
                };
                (got.to_string(), word(rest.get(1), "status")?.to_string())
            }
            "pending" => {
                let op = num(rest.get(1), "op id")?;
                let got = w
                    .wallet_state()
                    .operations
                    .get(&op)
                    .is_some_and(|r| r.pending);
                (
                    if got { "yes" } else { "no" }.to_string(),
                    word(rest.get(2), "yes|no")?.to_string(),
                )
            }
            "height" => (
                w.ledger.head_height().to_string(),
                word(rest.get(1), "height")?.to_string(),
            ),
            "next-op" => (
                w.wallet_state().next_op_id.to_string(),
                word(rest.get(1), "op id")?.to_string(),
            ),
            other => return Err(format!("unknown expectation {other:?}")),
        };
        if got != want {
            return Err(format!("expect {what}: got {got}, want {want}"));
        }
        self.out.push(format!("expect {} ok", rest.join(" ")));
        Ok(())
    }
}

fn op_args<'a>(rest: &[&'a str]) -> Result<(OpType, &'a str, u64), String> {
    let ty: OpType = word(rest.first(), "operation type")?
        .parse()
        .map_err(|e: crate::Error| e.to_string())?;
    Ok((
        ty,
        word(rest.get(1), "address")?,
        num(rest.get(2), "parameter")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn happy_path() {
        let out = run_script(
            "seed 3\ndepth 2\nbootstrap secure\nfund 100\nop transfer bob 40 # pay bob\nexpect balance bob 40\nexpect balance wallet 60\n",
        )
        .unwrap();
        assert_eq!(out.lines[0].len(), "contract_id=".len() + 32);
        assert!(out.lines.contains(&"expect balance bob 40 ok".to_string()));
    }

    #[test]
    fn failed_expectation_names_the_line() {
        let e = run_script("depth 0\nbootstrap secure\nexpect balance bob 1\n").unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn negated_commands() {
        let out =
            run_script("depth 0\nbootstrap secure\n! op transfer bob 5\n! confirm 9\n").unwrap();
        assert_eq!(out.lines.len(), 3);
        assert!(run_script("depth 0\nbootstrap secure\n! fund 1\n").is_err());
    }

    #[test]
    fn unsigned_submit_reverts() {
        run_script(
            "depth 0\nbootstrap secure\nsubmit mallory fn=init_op type=transfer addr=mallory param=1\nmine\nexpect status revert\nsubmit mallory sign=user fn=init_op type=transfer addr=mallory param=1\nmine\nexpect status ok\nexpect pending 0 yes\n",
        )
        .unwrap();
    }

    #[test]
    fn reorg_commands() {
        run_script(
            "depth 0\nbootstrap secure\nmine 3\nfork alt 2\nmine-on alt 3\nreorg alt\nexpect height 5\n! reorg alt\n",
        )
        .unwrap();
    }
}
