use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smartotps"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--state-dir").arg(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.trim_start().strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {out}"))
}

#[test]
fn security_calc_prints_s() {
    let o = bin().args(["security", "calc", "--lambda", "128", "--leaves", "64"]).output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(value(&out, "S"), "136");
    assert_eq!(value(&out, "mnemonic_words"), "13");
}

#[test]
fn attack_theorem1_exits_zero() {
    let o = bin().args(["attack", "run", "theorem1"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("result pass"));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let o = bin().args(["attack", "run", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["security", "calc", "--lambda", "x", "--leaves", "1"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn happy_path_session() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let seed = tmp.path().join("seed");
    std::fs::write(&seed, "21\n").unwrap();
    let o = run(&dir, &["bootstrap", "--seed-file", seed.to_str().unwrap(), "--depth", "2"]);
    assert!(o.status.success());
    let boot = stdout(&o);
    assert_eq!(value(&boot, "mnemonic").split(' ').count(), 12);

    assert!(run(&dir, &["fund", "300"]).status.success());
    let o = run(&dir, &["op", "init", "--type", "transfer", "--addr", "bob", "--param", "120"]);
    assert_eq!(value(&stdout(&o), "op_id"), "0");
    let otp = stdout(&run(&dir, &["auth", "otp", "--op-id", "0"]));
    let words = value(&otp, "mnemonic").to_string();

    // A wrong OTP reverts and is reported as a protocol failure.
    let wrong = run(&dir, &["op", "confirm", "--op-id", "0", "--otp", &"00".repeat(16)]);
    assert_eq!(wrong.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&wrong.stderr).starts_with("error[protocol]"));

    let o = run(&dir, &["op", "confirm", "--op-id", "0", "--otp", &words]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "wallet_balance"), "180");

    let status = stdout(&run(&dir, &["status"]));
    assert_eq!(value(&status, "next_op_id"), "1");
    assert!(dir.join("client/leaves.txt").exists());
}

#[test]
fn session_replay_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let seed = tmp.path().join("seed");
    std::fs::write(&seed, "0x2a").unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let mut all = String::new();
        for args in [
            vec!["bootstrap", "--seed-file", seed.to_str().unwrap(), "--depth", "1"],
            vec!["fund", "50"],
            vec!["op", "run", "--type", "transfer", "--addr", "carol", "--param", "5"],
            vec!["status"],
        ] {
            all.push_str(&stdout(&run(&dir, &args)));
        }
        outs.push(all);
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn missing_session_is_a_state_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&tmp.path().join("none"), &["fund", "1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn happy_path_script() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/happy_path.script");
    let o = bin().args(["script", "run"]).arg(&file).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("expect balance bob 250 ok"));
    assert_eq!(value(&out, "state_hash").len(), 64);
}

#[test]
fn mnemonic_round_trip() {
    let hex = "00112233445566778899aabbccddeeff";
    let words = stdout(&bin().args(["mnemonic", "encode", hex]).output().unwrap());
    let back = bin().args(["mnemonic", "decode"]).args(words.split_whitespace()).output().unwrap();
    assert_eq!(stdout(&back).trim(), hex);
}

#[test]
fn cost_sweep_csv() {
    let o = bin().args(["cost", "sweep", "--grid", "H=3;L=0..1", "--summary"]).output().unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("H,HS,P,L,N,deploy,init_mean,confirm_mean,ot_cost\n"));
    assert!(out.contains("# H=3 HS=3 P=1 best_L="));
}
